//! Coded storage: encoding a plaintext database into per-server blocks, the
//! full-database decoder used as a test oracle, structural consistency checks
//! and the binary snapshot format.
//!
//! Block `j` of server `n` holds
//! `sum_i W_{j,i} / (alpha_n - f_{j,i}) + sum_x alpha_n^(x-1) Z_{j,x}`,
//! where `W_{j,i}` is the length-`K` column of symbol `i + K_c*j` across all
//! submodels.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Field, FieldElement, Matrix};
use crate::params::SystemParams;

/// Plaintext `K x L` database. Submodel rows are indexed from 0 here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    rows: Vec<Vec<FieldElement>>,
}

impl Database {
    pub fn new(rows: Vec<Vec<FieldElement>>, params: &SystemParams) -> Result<Self> {
        if rows.len() != params.submodels() || rows.iter().any(|r| r.len() != params.submodel_len())
        {
            return Err(Error::Dimension(format!(
                "database must be {}x{}",
                params.submodels(),
                params.submodel_len()
            )));
        }
        Ok(Database { rows })
    }

    pub fn zeros(params: &SystemParams) -> Self {
        Database {
            rows: vec![vec![FieldElement::ZERO; params.submodel_len()]; params.submodels()],
        }
    }

    pub fn random<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Self {
        let f = params.field();
        let rows = (0..params.submodels())
            .map(|_| random_vec(f, params.submodel_len(), rng))
            .collect();
        Database { rows }
    }

    pub fn submodels(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &[FieldElement] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<FieldElement>] {
        &self.rows
    }

    /// Entry `W_k(j, i) = W_k(i + K_c * j)`.
    pub fn entry(&self, k: usize, j: usize, i: usize, partitions: usize) -> FieldElement {
        self.rows[k][i + partitions * j]
    }

    /// The column `(W_1(j,i), ..., W_K(j,i))`.
    pub fn column(&self, j: usize, i: usize, partitions: usize) -> Vec<FieldElement> {
        self.rows.iter().map(|r| r[i + partitions * j]).collect()
    }

    /// Adds `delta` to row `k`.
    pub fn increment(&mut self, field: &Field, k: usize, delta: &[FieldElement]) {
        for (w, d) in self.rows[k].iter_mut().zip(delta) {
            *w = field.add(*w, *d);
        }
    }
}

pub fn random_vec<R: Rng + ?Sized>(field: &Field, len: usize, rng: &mut R) -> Vec<FieldElement> {
    let q = field.modulus();
    (0..len)
        .map(|_| field.reduce(rng.random_range(0..q) as u64))
        .collect()
}

/// Storage noise `Z_{j,x}`: `J x X` vectors of length `K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageNoise {
    pub z: Vec<Vec<Vec<FieldElement>>>,
}

impl StorageNoise {
    pub fn zeros(params: &SystemParams) -> Self {
        StorageNoise {
            z: vec![
                vec![vec![FieldElement::ZERO; params.submodels()]; params.security()];
                params.blocks()
            ],
        }
    }

    pub fn random<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Self {
        let f = params.field();
        let z = (0..params.blocks())
            .map(|_| {
                (0..params.security())
                    .map(|_| random_vec(f, params.submodels(), rng))
                    .collect()
            })
            .collect();
        StorageNoise { z }
    }

    fn check(&self, params: &SystemParams) -> Result<()> {
        let ok = self.z.len() == params.blocks()
            && self.z.iter().all(|b| {
                b.len() == params.security() && b.iter().all(|v| v.len() == params.submodels())
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "storage noise must be {}x{}x{}",
                params.blocks(),
                params.security(),
                params.submodels()
            )))
        }
    }
}

/// Coded state of one server: `J` blocks of `K` symbols, stored contiguously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerStorage {
    server: usize,
    submodels: usize,
    data: Vec<FieldElement>,
}

impl ServerStorage {
    pub fn from_blocks(server: usize, blocks: Vec<Vec<FieldElement>>) -> Result<Self> {
        let submodels = blocks.first().map_or(0, Vec::len);
        if blocks.iter().any(|b| b.len() != submodels) {
            return Err(Error::Dimension("storage blocks differ in length".into()));
        }
        Ok(ServerStorage {
            server,
            submodels,
            data: blocks.into_iter().flatten().collect(),
        })
    }

    pub fn server(&self) -> usize {
        self.server
    }

    pub fn blocks(&self) -> usize {
        self.data.len().checked_div(self.submodels).unwrap_or(0)
    }

    pub fn submodels(&self) -> usize {
        self.submodels
    }

    pub fn block(&self, j: usize) -> &[FieldElement] {
        &self.data[j * self.submodels..(j + 1) * self.submodels]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut [FieldElement] {
        &mut self.data[j * self.submodels..(j + 1) * self.submodels]
    }

    /// Total stored symbols, `J * K`.
    pub fn symbols(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[FieldElement] {
        &self.data
    }
}

/// `1 / (alpha - f)` for every pole in `poles`.
pub(crate) fn cauchy_row(
    field: &Field,
    alpha: FieldElement,
    poles: &[FieldElement],
) -> Result<Vec<FieldElement>> {
    poles
        .iter()
        .map(|&f| {
            field.inv(field.sub(alpha, f)).map_err(|_| {
                Error::Config(format!("evaluation point {alpha} collides with pole {f}"))
            })
        })
        .collect()
}

/// Encodes one storage block for the server at `alpha`.
///
/// `columns[i]` is `W_{j,i}` and `noise[x]` is `Z_{j,x}`, all of length `K`.
pub fn encode_block(
    field: &Field,
    alpha: FieldElement,
    pole_row: &[FieldElement],
    columns: &[Vec<FieldElement>],
    noise: &[Vec<FieldElement>],
) -> Result<Vec<FieldElement>> {
    let len = columns.first().or(noise.first()).map_or(0, Vec::len);
    let mut out = vec![FieldElement::ZERO; len];
    for (c, col) in cauchy_row(field, alpha, pole_row)?.into_iter().zip(columns) {
        field.axpy(&mut out, c, col);
    }
    for (p, z) in field.powers(alpha, noise.len()).into_iter().zip(noise) {
        field.axpy(&mut out, p, z);
    }
    Ok(out)
}

/// Encodes `db` into the coded storage of all `N` servers.
pub fn encode_storage(
    params: &SystemParams,
    db: &Database,
    noise: &StorageNoise,
) -> Result<Vec<ServerStorage>> {
    noise.check(params)?;
    if db.submodels() != params.submodels()
        || db.rows().iter().any(|r| r.len() != params.submodel_len())
    {
        return Err(Error::Dimension(
            "database does not match parameters".into(),
        ));
    }
    let kc = params.partitions();
    let columns: Vec<Vec<Vec<FieldElement>>> = (0..params.blocks())
        .map(|j| (0..kc).map(|i| db.column(j, i, kc)).collect())
        .collect();
    (1..=params.servers())
        .into_par_iter()
        .map(|n| {
            let alpha = params.alpha(n);
            let blocks = (0..params.blocks())
                .map(|j| {
                    encode_block(
                        params.field(),
                        alpha,
                        params.pole_row(j),
                        &columns[j],
                        &noise.z[j],
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            ServerStorage::from_blocks(n, blocks)
        })
        .collect()
}

/// Generator row of server `n` for a block with the given poles:
/// Cauchy columns `1/(alpha_n - f_{j,i})` followed by `alpha_n^x`, `x < X`.
fn generator_row(
    params: &SystemParams,
    n: usize,
    pole_row: &[FieldElement],
) -> Result<Vec<FieldElement>> {
    let alpha = params.alpha(n);
    let mut row = cauchy_row(params.field(), alpha, pole_row)?;
    row.extend(params.field().powers(alpha, params.security()));
    Ok(row)
}

fn distinct_servers<'a>(
    params: &SystemParams,
    storages: &[&'a ServerStorage],
) -> Result<Vec<&'a ServerStorage>> {
    let mut seen = Vec::new();
    let mut picked = Vec::new();
    for s in storages {
        params.check_server(s.server())?;
        if s.blocks() != params.blocks() || s.submodels() != params.submodels() {
            return Err(Error::Dimension(format!(
                "storage of server {} has the wrong shape",
                s.server()
            )));
        }
        if !seen.contains(&s.server()) {
            seen.push(s.server());
            picked.push(*s);
        }
    }
    Ok(picked)
}

/// Recovers the plaintext database from any `K_c + X` distinct servers.
///
/// This is a verification oracle: protocol users never reconstruct the
/// whole database.
pub fn decode_database(params: &SystemParams, storages: &[&ServerStorage]) -> Result<Database> {
    let needed = params.recovery_threshold();
    let servers = distinct_servers(params, storages)?;
    if servers.len() < needed {
        return Err(Error::InsufficientShares {
            needed,
            got: servers.len(),
        });
    }
    let servers = &servers[..needed];
    let field = params.field();
    let kc = params.partitions();
    let mut rows = vec![vec![FieldElement::ZERO; params.submodel_len()]; params.submodels()];
    let mut inverses: HashMap<&[FieldElement], Matrix> = HashMap::new();
    for j in 0..params.blocks() {
        let pole_row = params.pole_row(j);
        if !inverses.contains_key(pole_row) {
            let g = Matrix::from_rows(
                servers
                    .iter()
                    .map(|s| generator_row(params, s.server(), pole_row))
                    .collect::<Result<_>>()?,
            )?;
            let inv = g.inverse(field).map_err(|_| {
                Error::Invariant(format!("storage decode matrix for block {j} is singular"))
            })?;
            inverses.insert(pole_row, inv);
        }
        let inv = &inverses[pole_row];
        for (k, row) in rows.iter_mut().enumerate() {
            let v: Vec<_> = servers.iter().map(|s| s.block(j)[k]).collect();
            for i in 0..kc {
                row[i + kc * j] = field.dot(inv.row(i), &v);
            }
        }
    }
    Ok(Database { rows })
}

/// True iff, for every block and coordinate, the values across all `N`
/// servers lie in the column space of the `N x (K_c + X)` storage generator.
pub fn check_consistency(params: &SystemParams, storages: &[&ServerStorage]) -> bool {
    let Ok(servers) = distinct_servers(params, storages) else {
        return false;
    };
    if servers.len() != params.servers() {
        return false;
    }
    let field = params.field();
    let needed = params.recovery_threshold();
    let mut cache: HashMap<&[FieldElement], (Matrix, Matrix)> = HashMap::new();
    for j in 0..params.blocks() {
        let pole_row = params.pole_row(j);
        if !cache.contains_key(pole_row) {
            let Ok(rows) = servers
                .iter()
                .map(|s| generator_row(params, s.server(), pole_row))
                .collect::<Result<Vec<_>>>()
            else {
                return false;
            };
            let generator = Matrix::from_rows(rows.clone()).expect("uniform rows");
            if generator.rank(field) != needed {
                return false;
            }
            // Express every server's row in terms of an invertible subset of rows.
            let Some(basis) = select_basis(field, &rows, needed) else {
                return false;
            };
            let top = Matrix::from_rows(basis.iter().map(|&r| rows[r].clone()).collect())
                .expect("square");
            let Ok(top_inv) = top.inverse(field) else {
                return false;
            };
            let mut projector = Matrix::zeros(servers.len(), needed);
            for (r, row) in rows.iter().enumerate() {
                for c in 0..needed {
                    let col: Vec<_> = (0..needed).map(|m| top_inv.get(m, c)).collect();
                    projector.set(r, c, field.dot(row, &col));
                }
            }
            let selector = Matrix::from_rows(
                basis
                    .iter()
                    .map(|&r| {
                        (0..servers.len())
                            .map(|c| {
                                if c == r {
                                    FieldElement::ONE
                                } else {
                                    FieldElement::ZERO
                                }
                            })
                            .collect()
                    })
                    .collect(),
            )
            .expect("uniform rows");
            cache.insert(pole_row, (projector, selector));
        }
        let (projector, selector) = &cache[pole_row];
        for k in 0..params.submodels() {
            let v: Vec<_> = servers.iter().map(|s| s.block(j)[k]).collect();
            let basis_vals = selector.mul_vec(field, &v).expect("dims");
            let predicted = projector.mul_vec(field, &basis_vals).expect("dims");
            if predicted != v {
                return false;
            }
        }
    }
    true
}

/// Indices of `count` linearly independent rows, chosen greedily.
fn select_basis(field: &Field, rows: &[Vec<FieldElement>], count: usize) -> Option<Vec<usize>> {
    let mut chosen: Vec<usize> = Vec::new();
    for r in 0..rows.len() {
        let mut trial: Vec<Vec<FieldElement>> = chosen.iter().map(|&c| rows[c].clone()).collect();
        trial.push(rows[r].clone());
        if Matrix::from_rows(trial).ok()?.rank(field) == chosen.len() + 1 {
            chosen.push(r);
            if chosen.len() == count {
                return Some(chosen);
            }
        }
    }
    None
}

/// Header of a storage snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotHeader {
    pub modulus: u64,
    pub servers: u64,
    pub submodels: u64,
    pub blocks: u64,
}

/// Writes `{q, N, K, J}` then every server's blocks in ascending order, all as
/// little-endian `u64`.
pub fn write_snapshot<W: Write>(
    params: &SystemParams,
    storages: &[ServerStorage],
    mut w: W,
) -> Result<()> {
    let mut sorted: Vec<&ServerStorage> = storages.iter().collect();
    sorted.sort_by_key(|s| s.server());
    if sorted.len() != params.servers()
        || sorted.iter().enumerate().any(|(i, s)| s.server() != i + 1)
    {
        return Err(Error::Dimension(
            "snapshot requires exactly one storage per server".into(),
        ));
    }
    let header = [
        params.field().modulus() as u64,
        params.servers() as u64,
        params.submodels() as u64,
        params.blocks() as u64,
    ];
    for h in header {
        w.write_all(&h.to_le_bytes())?;
    }
    for s in sorted {
        for v in s.as_slice() {
            w.write_all(&(v.value() as u64).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(SnapshotHeader, Vec<ServerStorage>)> {
    let header = SnapshotHeader {
        modulus: read_u64(&mut r)?,
        servers: read_u64(&mut r)?,
        submodels: read_u64(&mut r)?,
        blocks: read_u64(&mut r)?,
    };
    let field = Field::new(header.modulus)?;
    let mut storages = Vec::with_capacity(header.servers as usize);
    for n in 1..=header.servers as usize {
        let mut blocks = Vec::with_capacity(header.blocks as usize);
        for _ in 0..header.blocks {
            let block = (0..header.submodels)
                .map(|_| field.element(read_u64(&mut r)?))
                .collect::<Result<Vec<_>>>()?;
            blocks.push(block);
        }
        storages.push(ServerStorage::from_blocks(n, blocks)?);
    }
    Ok((header, storages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::RawConfig;
    use itertools::Itertools;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn raw(
        n: usize,
        k: usize,
        x: usize,
        t: usize,
        xd: usize,
        kc: usize,
        scale: usize,
    ) -> RawConfig {
        RawConfig {
            servers: n,
            submodels: k,
            security: x,
            privacy: t,
            increment_security: xd,
            partitions: kc,
            scale,
            modulus: None,
            seed: 0,
        }
    }

    fn refs(s: &[ServerStorage]) -> Vec<&ServerStorage> {
        s.iter().collect()
    }

    #[test]
    fn hand_computed_tiny_instance() {
        // q=7, N=4, K=1, K_c=1, X=2, J=2: alphas 1..4, single pole ftilde_1 = 5.
        let p = SystemParams::derive(&RawConfig {
            modulus: Some(7),
            ..raw(4, 1, 2, 1, 1, 1, 2)
        })
        .unwrap();
        assert_eq!(p.blocks(), 2);
        let f = p.field();
        let fe = |v| f.element(v).unwrap();
        assert_eq!(p.pole(0, 0), fe(5));
        assert_eq!(p.pole(1, 0), fe(5));
        let db = Database::new(vec![vec![fe(3), fe(5)]], &p).unwrap();
        let st = encode_storage(&p, &db, &StorageNoise::zeros(&p)).unwrap();
        // 3 / (1 - 5) = 3 * inv(3) = 1 and 5 / (1 - 5) = 5 * 5 = 4 (mod 7).
        assert_eq!(st[0].block(0), &[fe(1)]);
        assert_eq!(st[0].block(1), &[fe(4)]);
        // Server 2: 3 / (2 - 5) = 3 * inv(4) = 3 * 2 = 6.
        assert_eq!(st[1].block(0), &[fe(6)]);
        let back = decode_database(&p, &[&st[1], &st[2], &st[3]]).unwrap();
        assert_eq!(back, db);
    }

    #[test]
    fn explicit_pole_block() {
        let f = Field::new(7).unwrap();
        let fe = |v| f.element(v).unwrap();
        // Poles (5, 6) at alpha = 1, W = (3, 5) stored one per block.
        assert_eq!(
            encode_block(&f, fe(1), &[fe(5)], &[vec![fe(3)]], &[]).unwrap(),
            vec![fe(1)]
        );
        // 5 / (1 - 6) = 5 * inv(2) = 5 * 4 = 6.
        assert_eq!(
            encode_block(&f, fe(1), &[fe(6)], &[vec![fe(5)]], &[]).unwrap(),
            vec![fe(6)]
        );
        // Noise terms: alpha^0 * 2 + alpha^1 * 3 at alpha = 2 -> 8 = 1.
        assert_eq!(
            encode_block(
                &f,
                fe(2),
                &[fe(5)],
                &[vec![fe(0)]],
                &[vec![fe(2)], vec![fe(3)]]
            )
            .unwrap(),
            vec![fe(1)]
        );
        assert!(matches!(
            encode_block(&f, fe(5), &[fe(5)], &[vec![fe(1)]], &[]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_encodes_to_zero() {
        let p = SystemParams::derive(&raw(6, 3, 2, 1, 1, 2, 1)).unwrap();
        let st = encode_storage(&p, &Database::zeros(&p), &StorageNoise::zeros(&p)).unwrap();
        assert!(st.iter().all(|s| s.as_slice().iter().all(|v| v.is_zero())));
        assert_eq!(
            st.iter().map(ServerStorage::symbols).sum::<usize>(),
            6 * p.blocks() * 3
        );
    }

    #[test]
    fn encoding_is_linear() {
        let p = SystemParams::derive(&raw(7, 2, 3, 1, 1, 2, 1)).unwrap();
        let f = *p.field();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w1, w2) = (
            Database::random(&p, &mut rng),
            Database::random(&p, &mut rng),
        );
        let (z1, z2) = (
            StorageNoise::random(&p, &mut rng),
            StorageNoise::random(&p, &mut rng),
        );
        let mut wsum = w1.clone();
        for k in 0..p.submodels() {
            wsum.increment(&f, k, w2.row(k));
        }
        let zsum = StorageNoise {
            z: z1
                .z
                .iter()
                .zip(&z2.z)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(u, v)| u.iter().zip(v).map(|(x, y)| f.add(*x, *y)).collect())
                        .collect()
                })
                .collect(),
        };
        let (s1, s2, s) = (
            encode_storage(&p, &w1, &z1).unwrap(),
            encode_storage(&p, &w2, &z2).unwrap(),
            encode_storage(&p, &wsum, &zsum).unwrap(),
        );
        for n in 0..p.servers() {
            for (i, v) in s[n].as_slice().iter().enumerate() {
                assert_eq!(*v, f.add(s1[n].as_slice()[i], s2[n].as_slice()[i]));
            }
        }
    }

    #[test]
    fn round_trip_every_subset() {
        for cfg in [
            raw(4, 2, 2, 1, 1, 1, 2),
            raw(7, 3, 2, 1, 1, 3, 1),
            raw(8, 2, 4, 1, 1, 1, 1),
            raw(9, 2, 3, 2, 1, 2, 1),
        ] {
            let p = SystemParams::derive(&cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.servers as u64);
            for _ in 0..100 {
                let db = Database::random(&p, &mut rng);
                let st = encode_storage(&p, &db, &StorageNoise::random(&p, &mut rng)).unwrap();
                let all = refs(&st);
                assert!(check_consistency(&p, &all));
                for subset in all.iter().copied().combinations(p.recovery_threshold()) {
                    assert_eq!(decode_database(&p, &subset).unwrap(), db);
                }
            }
        }
    }

    #[test]
    fn too_few_servers() {
        let p = SystemParams::derive(&raw(8, 2, 4, 1, 1, 1, 1)).unwrap();
        let st = encode_storage(&p, &Database::zeros(&p), &StorageNoise::zeros(&p)).unwrap();
        let four: Vec<_> = st.iter().take(4).collect();
        assert_eq!(
            decode_database(&p, &four).unwrap_err(),
            Error::InsufficientShares { needed: 5, got: 4 }
        );
        let dup = vec![&st[0], &st[0], &st[1], &st[2], &st[3]];
        assert_eq!(
            decode_database(&p, &dup).unwrap_err(),
            Error::InsufficientShares { needed: 5, got: 4 }
        );
    }

    #[test]
    fn corruption_outside_column_space_detected() {
        let p = SystemParams::derive(&raw(6, 2, 2, 1, 1, 1, 1)).unwrap();
        let f = *p.field();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let db = Database::random(&p, &mut rng);
        let mut st = encode_storage(&p, &db, &StorageNoise::random(&p, &mut rng)).unwrap();
        assert!(check_consistency(&p, &refs(&st)));
        // A weight-one change is never a codeword: minimum distance is N - K_c - X + 1 = 4.
        let b = st[2].block_mut(0);
        b[1] = f.add(b[1], FieldElement::ONE);
        assert!(!check_consistency(&p, &refs(&st)));
        // Missing a server is also inconsistent.
        assert!(!check_consistency(&p, &refs(&st[..5])));
    }

    #[test]
    fn storage_efficiency() {
        let p = SystemParams::derive(&raw(8, 3, 4, 1, 1, 1, 1)).unwrap();
        let st = encode_storage(&p, &Database::zeros(&p), &StorageNoise::zeros(&p)).unwrap();
        let total: usize = st.iter().map(ServerStorage::symbols).sum();
        assert_eq!(
            total * p.partitions(),
            p.servers() * p.submodel_len() * p.submodels()
        );
        assert_eq!(p.storage_efficiency(), num_rational::Ratio::new(1, 8));
    }

    #[test]
    fn snapshot_layout() {
        let p = SystemParams::derive(&RawConfig {
            modulus: Some(7),
            ..raw(4, 1, 2, 1, 1, 1, 2)
        })
        .unwrap();
        let f = p.field();
        let db =
            Database::new(vec![vec![f.element(3).unwrap(), f.element(5).unwrap()]], &p).unwrap();
        let st = encode_storage(&p, &db, &StorageNoise::zeros(&p)).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&p, &st, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (4 + 4 * 2));
        assert_eq!(&buf[..8], &7u64.to_le_bytes());
        assert_eq!(&buf[8..16], &4u64.to_le_bytes());
        assert_eq!(&buf[32..40], &1u64.to_le_bytes());
        assert_eq!(&buf[40..48], &4u64.to_le_bytes());
        let (h, back) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(
            h,
            SnapshotHeader {
                modulus: 7,
                servers: 4,
                submodels: 1,
                blocks: 2
            }
        );
        assert_eq!(back, st);
        assert!(read_snapshot(&buf[..20]).is_err());
    }
}
