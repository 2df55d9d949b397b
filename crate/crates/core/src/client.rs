//! User side of a read/write cycle: queries, increments and answer decoding.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::codec::{cauchy_row, random_vec};
use crate::error::{Error, Result};
use crate::field::{FieldElement, Matrix};
use crate::params::{RoundParams, SystemParams};

/// Query noise: `mu x K_c x T` uniform vectors of length `K`, indexed `[u][i][s]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryNoise {
    pub z: Vec<Vec<Vec<Vec<FieldElement>>>>,
}

impl QueryNoise {
    pub fn zeros(params: &SystemParams) -> Self {
        QueryNoise {
            z: vec![
                vec![
                    vec![vec![FieldElement::ZERO; params.submodels()]; params.privacy()];
                    params.partitions()
                ];
                params.period()
            ],
        }
    }

    pub fn random<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Self {
        let f = params.field();
        let z = (0..params.period())
            .map(|_| {
                (0..params.partitions())
                    .map(|_| {
                        (0..params.privacy())
                            .map(|_| random_vec(f, params.submodels(), rng))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        QueryNoise { z }
    }

    /// Builds noise from a flat slice in `[u][i][s][k]` order.
    pub fn from_flat(params: &SystemParams, flat: &[FieldElement]) -> Result<Self> {
        let (mu, kc, t, k) = (
            params.period(),
            params.partitions(),
            params.privacy(),
            params.submodels(),
        );
        if flat.len() != mu * kc * t * k {
            return Err(Error::Dimension(format!(
                "query noise needs {} symbols",
                mu * kc * t * k
            )));
        }
        let mut it = flat.chunks(k);
        let z = (0..mu)
            .map(|_| {
                (0..kc)
                    .map(|_| (0..t).map(|_| it.next().unwrap().to_vec()).collect())
                    .collect()
            })
            .collect();
        Ok(QueryNoise { z })
    }

    fn check(&self, params: &SystemParams) -> Result<()> {
        let ok = self.z.len() == params.period()
            && self.z.iter().all(|a| {
                a.len() == params.partitions()
                    && a.iter().all(|b| {
                        b.len() == params.privacy()
                            && b.iter().all(|v| v.len() == params.submodels())
                    })
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(
                "query noise shape does not match parameters".into(),
            ))
        }
    }
}

/// Read query for one server, kept in compact form: for each partition `i`,
/// the first `mu` rows of length `K`. Row `j` of the full `J`-row query equals
/// compact row `j mod mu`, since both poles and noise cycle with period `mu`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadQuery {
    pub server: usize,
    /// `[i][u]` -> length-`K` row.
    pub components: Vec<Vec<Vec<FieldElement>>>,
}

impl ReadQuery {
    pub fn period(&self) -> usize {
        self.components.first().map_or(0, Vec::len)
    }

    /// Row `j` of component `i` of the expanded query.
    pub fn row(&self, i: usize, j: usize) -> &[FieldElement] {
        let comp = &self.components[i];
        &comp[j % comp.len()]
    }

    /// The full `J`-row query per component, `[i][j]`.
    pub fn expand(&self, blocks: usize) -> Vec<Vec<Vec<FieldElement>>> {
        (0..self.components.len())
            .map(|i| (0..blocks).map(|j| self.row(i, j).to_vec()).collect())
            .collect()
    }

    /// Number of symbols transmitted to the server, `mu * K * K_c`.
    pub fn symbols(&self) -> usize {
        self.components.iter().flatten().map(Vec::len).sum()
    }

    /// The transmitted symbols, flattened in `[i][u][k]` order.
    pub fn flatten(&self) -> Vec<FieldElement> {
        self.components
            .iter()
            .flatten()
            .flatten()
            .copied()
            .collect()
    }
}

/// Generates the read queries for all `N` servers for desired submodel `theta` (1-based).
pub fn gen_read_query(
    params: &SystemParams,
    theta: usize,
    noise: &QueryNoise,
) -> Result<Vec<ReadQuery>> {
    params.check_submodel(theta)?;
    noise.check(params)?;
    let f = params.field();
    let k = params.submodels();
    (1..=params.servers())
        .map(|n| {
            let alpha = params.alpha(n);
            let alpha_pows = f.powers(alpha, params.privacy());
            let components = (0..params.partitions())
                .map(|i| {
                    (0..params.period())
                        .map(|u| {
                            let scale = f.sub(alpha, params.pole(u, i));
                            let mut row = vec![FieldElement::ZERO; k];
                            for (p, z) in alpha_pows.iter().zip(&noise.z[u][i]) {
                                f.axpy(&mut row, f.mul(scale, *p), z);
                            }
                            row[theta - 1] = f.add(row[theta - 1], FieldElement::ONE);
                            row
                        })
                        .collect()
                })
                .collect();
            Ok(ReadQuery {
                server: n,
                components,
            })
        })
        .collect()
}

/// Increment noise: `#_w x K_c x X_delta` uniform scalars, indexed `[l][i][x]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncrementNoise {
    pub z: Vec<Vec<Vec<FieldElement>>>,
}

impl IncrementNoise {
    pub fn zeros(params: &SystemParams, round: &RoundParams) -> Self {
        IncrementNoise {
            z: vec![
                vec![vec![FieldElement::ZERO; params.increment_security()]; params.partitions()];
                round.write_windows
            ],
        }
    }

    pub fn random<R: Rng + ?Sized>(
        params: &SystemParams,
        round: &RoundParams,
        rng: &mut R,
    ) -> Self {
        let f = params.field();
        let z = (0..round.write_windows)
            .map(|_| {
                (0..params.partitions())
                    .map(|_| random_vec(f, params.increment_security(), rng))
                    .collect()
            })
            .collect();
        IncrementNoise { z }
    }

    /// Builds noise from a flat slice in `[l][i][x]` order.
    pub fn from_flat(
        params: &SystemParams,
        round: &RoundParams,
        flat: &[FieldElement],
    ) -> Result<Self> {
        let (w, kc, xd) = (
            round.write_windows,
            params.partitions(),
            params.increment_security(),
        );
        if flat.len() != w * kc * xd {
            return Err(Error::Dimension(format!(
                "increment noise needs {} symbols",
                w * kc * xd
            )));
        }
        let mut it = flat.iter().copied();
        let z = (0..w)
            .map(|_| (0..kc).map(|_| it.by_ref().take(xd).collect()).collect())
            .collect();
        Ok(IncrementNoise { z })
    }

    fn check(&self, params: &SystemParams, round: &RoundParams) -> Result<()> {
        let ok = self.z.len() == round.write_windows
            && self.z.iter().all(|a| {
                a.len() == params.partitions()
                    && a.iter().all(|v| v.len() == params.increment_security())
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(
                "increment noise shape does not match round".into(),
            ))
        }
    }
}

/// Packed write increment for one server: `deltas[l][i]`, one codeword per write window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteIncrement {
    pub server: usize,
    pub deltas: Vec<Vec<FieldElement>>,
}

impl WriteIncrement {
    /// Number of symbols transmitted, `#_w * K_c`.
    pub fn symbols(&self) -> usize {
        self.deltas.iter().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<FieldElement> {
        self.deltas.iter().flatten().copied().collect()
    }
}

/// Generates increments for all `N` servers from the length-`L` update `delta`.
///
/// Codeword `(l, i)` at server `n` is
/// `sum_{j in window l} delta(j,i) / (alpha_n - f_{j,i}) + sum_x alpha_n^(x-1) noise[l][i][x]`.
pub fn gen_increment(
    params: &SystemParams,
    round: &RoundParams,
    delta: &[FieldElement],
    noise: &IncrementNoise,
) -> Result<Vec<WriteIncrement>> {
    if delta.len() != params.submodel_len() {
        return Err(Error::Dimension(format!(
            "increment has {} symbols, submodels have {}",
            delta.len(),
            params.submodel_len()
        )));
    }
    noise.check(params, round)?;
    let f = params.field();
    let kc = params.partitions();
    (1..=params.servers())
        .map(|n| {
            let alpha = params.alpha(n);
            let pows = f.powers(alpha, params.increment_security());
            let deltas = (0..round.write_windows)
                .map(|l| {
                    (0..kc)
                        .map(|i| {
                            let mut acc = f.dot(&pows, &noise.z[l][i]);
                            for j in round.write_window(l) {
                                let c = f.inv(f.sub(alpha, params.pole(j, i)))?;
                                acc = f.mul_add(acc, c, delta[i + kc * j]);
                            }
                            Ok(acc)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(WriteIncrement { server: n, deltas })
        })
        .collect()
}

/// Answer returned by one read-available server: `values[l][i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub server: usize,
    pub values: Vec<Vec<FieldElement>>,
}

impl Answer {
    /// Number of symbols downloaded, `#_r * K_c`.
    pub fn symbols(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }
}

/// Decodes the desired submodel from the answers of every read-available server.
///
/// For each window `l` and partition `i` the answers satisfy
/// `A_n = sum_{j in window} W(j,i) / (alpha_n - f_{j,i}) + sum_{m < X+T+K_c-1} alpha_n^m I_m`,
/// a square Cauchy-Vandermonde system in the `R_r` desired symbols and the
/// aligned interference.
pub fn decode_answers(
    params: &SystemParams,
    round: &RoundParams,
    answers: &[Answer],
) -> Result<Vec<FieldElement>> {
    let available = round.read_available(params.servers());
    let by_server: BTreeMap<usize, &Answer> = answers.iter().map(|a| (a.server, a)).collect();
    for a in answers {
        if round.read_dropouts.contains(&a.server) {
            return Err(Error::ServerMismatch(format!(
                "answer from read dropout server {}",
                a.server
            )));
        }
    }
    let got = available
        .iter()
        .filter(|n| by_server.contains_key(n))
        .count();
    if got != available.len() {
        return Err(Error::InsufficientAnswers {
            needed: available.len(),
            got,
        });
    }
    let kc = params.partitions();
    for a in by_server.values() {
        if a.values.len() != round.read_windows || a.values.iter().any(|v| v.len() != kc) {
            return Err(Error::Dimension(format!(
                "answer from server {} has the wrong shape",
                a.server
            )));
        }
    }
    let interference = params.read_interference_dim();
    if round.read_batch + interference != available.len() {
        return Err(Error::Invariant(format!(
            "read system is {}x{}",
            available.len(),
            round.read_batch + interference
        )));
    }
    let f = params.field();
    let mut out = vec![FieldElement::ZERO; params.submodel_len()];
    let mut inverses: HashMap<Vec<FieldElement>, Matrix> = HashMap::new();
    for l in 0..round.read_windows {
        let window = round.read_window(l);
        for i in 0..kc {
            let poles: Vec<_> = window.clone().map(|j| params.pole(j, i)).collect();
            if !inverses.contains_key(&poles) {
                let rows = available
                    .iter()
                    .map(|&n| {
                        let alpha = params.alpha(n);
                        let mut row = cauchy_row(f, alpha, &poles)?;
                        row.extend(f.powers(alpha, interference));
                        Ok(row)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let inv = Matrix::from_rows(rows)?.inverse(f).map_err(|_| {
                    Error::Invariant(format!("read decode matrix for window {l} is singular"))
                })?;
                inverses.insert(poles.clone(), inv);
            }
            let inv = &inverses[&poles];
            let rhs: Vec<_> = available
                .iter()
                .map(|n| by_server[n].values[l][i])
                .collect();
            for (r, j) in window.clone().enumerate() {
                out[i + kc * j] = f.dot(inv.row(r), &rhs);
            }
        }
    }
    Ok(out)
}
