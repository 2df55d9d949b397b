//! Server side of a read/write cycle.
//!
//! All three constant families below are diagonal scalings known to every
//! server once the dropout counts (packer, unpacker) or the write-dropout set
//! (null-shaper) of the round are announced. Each is stored as one scalar per
//! `(server, block j, partition i)`.

use crate::client::{Answer, ReadQuery, WriteIncrement};
use crate::codec::ServerStorage;
use crate::error::{Error, Result};
use crate::field::{Field, FieldElement};
use crate::params::{RoundParams, SystemParams};

type Table = Vec<Vec<Vec<FieldElement>>>;

fn ratio(field: &Field, num: FieldElement, den: FieldElement) -> FieldElement {
    field
        .div(num, den)
        .expect("denominator is nonzero by pole distinctness")
}

/// Read packer `c_{n,j,i} = prod_{i' != i} (alpha_n - f_{j,i'}) / prod_{i' != i} (f_{j,i} - f_{j,i'})`.
///
/// It turns the cross terms of the other partitions into polynomials in
/// `alpha_n` while keeping residue one at the pole `f_{j,i}`. The window
/// selection is applied when answering: block `j` contributes only to read
/// window `floor(j / R_r)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackerConstants {
    read_batch: usize,
    scalars: Table,
}

impl PackerConstants {
    /// Scalar for server `n` (1-based), window `l`, block `j`, partition `i`; zero outside the window.
    pub fn scalar(&self, n: usize, l: usize, j: usize, i: usize) -> FieldElement {
        if j / self.read_batch == l {
            self.scalars[n - 1][j][i]
        } else {
            FieldElement::ZERO
        }
    }
}

pub fn build_packer(params: &SystemParams, round: &RoundParams) -> PackerConstants {
    let f = params.field();
    let kc = params.partitions();
    let scalars = (1..=params.servers())
        .map(|n| {
            let alpha = params.alpha(n);
            (0..params.blocks())
                .map(|j| {
                    let row = params.pole_row(j);
                    (0..kc)
                        .map(|i| {
                            let others = || (0..kc).filter(move |&o| o != i).map(|o| row[o]);
                            ratio(
                                f,
                                f.prod_diff(alpha, others()),
                                f.prod_diff(row[i], others()),
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    PackerConstants {
        read_batch: round.read_batch,
        scalars,
    }
}

/// Write unpacker `prod_{j' in F_j} (alpha_n - f_{j',i}) / prod_{j' in F_j} (f_{j,i} - f_{j',i})`,
/// with `F_j` the other blocks of `j`'s write window.
///
/// Multiplying a packed codeword by it isolates block `j`'s increment on a
/// single Cauchy term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnpackerConstants {
    scalars: Table,
}

impl UnpackerConstants {
    pub fn scalar(&self, n: usize, j: usize, i: usize) -> FieldElement {
        self.scalars[n - 1][j][i]
    }
}

pub fn build_unpacker(params: &SystemParams, round: &RoundParams) -> UnpackerConstants {
    let f = params.field();
    let kc = params.partitions();
    let scalars = (1..=params.servers())
        .map(|n| {
            let alpha = params.alpha(n);
            (0..params.blocks())
                .map(|j| {
                    let window = round.write_window(round.write_window_of(j));
                    (0..kc)
                        .map(|i| {
                            let others = || {
                                window
                                    .clone()
                                    .filter(move |&o| o != j)
                                    .map(|o| params.pole(o, i))
                            };
                            ratio(
                                f,
                                f.prod_diff(alpha, others()),
                                f.prod_diff(params.pole(j, i), others()),
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    UnpackerConstants { scalars }
}

/// Null-shaper `prod_{m in S_w} (alpha_n - alpha_m) / prod_{m in S_w} (f_{j,i} - alpha_m)`.
///
/// It vanishes at every write-dropout server and equals one at the pole, so
/// the update codeword has zeros exactly where storage is left stale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NullShaperConstants {
    scalars: Table,
}

impl NullShaperConstants {
    pub fn scalar(&self, n: usize, j: usize, i: usize) -> FieldElement {
        self.scalars[n - 1][j][i]
    }
}

pub fn build_null_shaper(params: &SystemParams, round: &RoundParams) -> NullShaperConstants {
    let f = params.field();
    let dropped: Vec<FieldElement> = round
        .write_dropouts
        .iter()
        .map(|&m| params.alpha(m))
        .collect();
    let scalars = (1..=params.servers())
        .map(|n| {
            let num = f.prod_diff(params.alpha(n), dropped.iter().copied());
            (0..params.blocks())
                .map(|j| {
                    params
                        .pole_row(j)
                        .iter()
                        .map(|&pole| ratio(f, num, f.prod_diff(pole, dropped.iter().copied())))
                        .collect()
                })
                .collect()
        })
        .collect();
    NullShaperConstants { scalars }
}

/// Computes server `n`'s answer: for each read window `l` and partition `i`,
/// `sum_{j in window l} c_{n,j,i} <S_n block j, Q_{n,i} row j>`.
pub fn compute_answer(
    params: &SystemParams,
    storage: &ServerStorage,
    query: &ReadQuery,
    packer: &PackerConstants,
    round: &RoundParams,
) -> Result<Answer> {
    let n = storage.server();
    if query.server != n {
        return Err(Error::ServerMismatch(format!(
            "storage of server {n} with query for server {}",
            query.server
        )));
    }
    if round.read_dropouts.contains(&n) {
        return Err(Error::ServerMismatch(format!(
            "server {n} is a read dropout and cannot answer"
        )));
    }
    if query.components.len() != params.partitions() || query.period() != params.period() {
        return Err(Error::Dimension(format!(
            "query for server {n} has the wrong shape"
        )));
    }
    let f = params.field();
    let values = (0..round.read_windows)
        .map(|l| {
            (0..params.partitions())
                .map(|i| {
                    round.read_window(l).fold(FieldElement::ZERO, |acc, j| {
                        let ip = f.dot(storage.block(j), query.row(i, j));
                        f.mul_add(acc, packer.scalar(n, l, j, i), ip)
                    })
                })
                .collect()
        })
        .collect();
    Ok(Answer { server: n, values })
}

/// Returns the updated storage of a write-available server:
/// block `j` gains `sum_i Omega_{n,j,i} Upsilon_{n,j,i} P_{floor(j/R_w),i} Q_{n,i} row j`.
pub fn apply_update(
    params: &SystemParams,
    storage: &ServerStorage,
    increment: &WriteIncrement,
    query: &ReadQuery,
    unpacker: &UnpackerConstants,
    null_shaper: &NullShaperConstants,
    round: &RoundParams,
) -> Result<ServerStorage> {
    let n = storage.server();
    if round.write_dropouts.contains(&n) {
        return Err(Error::WriteDropoutUpdated(n));
    }
    if increment.server != n || query.server != n {
        return Err(Error::ServerMismatch(format!(
            "storage of server {n} with increment for {} and query for {}",
            increment.server, query.server
        )));
    }
    if increment.deltas.len() != round.write_windows
        || increment
            .deltas
            .iter()
            .any(|d| d.len() != params.partitions())
    {
        return Err(Error::Dimension(format!(
            "increment for server {n} has the wrong shape"
        )));
    }
    let f = params.field();
    let mut next = storage.clone();
    for j in 0..params.blocks() {
        let l = round.write_window_of(j);
        let block = next.block_mut(j);
        for i in 0..params.partitions() {
            let scale = f.mul(
                f.mul(null_shaper.scalar(n, j, i), unpacker.scalar(n, j, i)),
                increment.deltas[l][i],
            );
            f.axpy(block, scale, query.row(i, j));
        }
    }
    Ok(next)
}
