//! Exact audits of the privacy and security claims, and round certificates.
//!
//! The claims are equalities of distributions over the protocol noise, so
//! they are checked by enumerating every noise assignment at desk-scale
//! parameters and comparing the resulting view multisets exactly.

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::client::{gen_increment, gen_read_query, IncrementNoise, QueryNoise};
use crate::codec::{
    check_consistency, decode_database, encode_block, encode_storage, Database, ServerStorage,
    StorageNoise,
};
use crate::error::{Error, Result};
use crate::field::{Field, FieldElement};
use crate::params::{RoundParams, SystemParams};
use crate::server::{
    apply_update, build_null_shaper, build_packer, build_unpacker, compute_answer,
};

/// Default cap on the number of enumerated noise assignments.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Exact multiset of views: view symbols -> number of noise assignments producing it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ViewDistribution {
    counts: BTreeMap<Vec<u32>, u64>,
}

impl ViewDistribution {
    pub fn counts(&self) -> &BTreeMap<Vec<u32>, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Number of distinct views.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// True when every observed view has the same count.
    pub fn is_uniform(&self) -> bool {
        self.counts.values().all_equal()
    }

    /// Distribution of the concatenated view of two independent sources.
    pub fn product(&self, other: &ViewDistribution) -> ViewDistribution {
        let mut counts = BTreeMap::new();
        for (a, ca) in &self.counts {
            for (b, cb) in &other.counts {
                let key: Vec<u32> = a.iter().chain(b).copied().collect();
                *counts.entry(key).or_insert(0) += ca * cb;
            }
        }
        ViewDistribution { counts }
    }

    fn merge(mut self, other: ViewDistribution) -> ViewDistribution {
        let (mut big, small) = if self.counts.len() >= other.counts.len() {
            (std::mem::take(&mut self.counts), other.counts)
        } else {
            (other.counts, std::mem::take(&mut self.counts))
        };
        for (k, c) in small {
            *big.entry(k).or_insert(0) += c;
        }
        ViewDistribution { counts: big }
    }
}

fn assignments(field: &Field, symbols: usize, budget: u64) -> Result<u64> {
    let q = field.modulus();
    u32::try_from(symbols)
        .ok()
        .and_then(|s| (q as u64).checked_pow(s))
        .filter(|&total| total <= budget)
        .ok_or(Error::BudgetExceeded {
            symbols,
            modulus: q,
            budget,
        })
}

/// Tallies `view(noise)` over all `q^symbols` noise vectors.
///
/// Work is split over the value of the first noise symbol.
pub fn enumerate_views<V>(
    field: &Field,
    symbols: usize,
    budget: u64,
    view: V,
) -> Result<ViewDistribution>
where
    V: Fn(&[FieldElement]) -> Result<Vec<FieldElement>> + Sync,
{
    assignments(field, symbols, budget)?;
    let tally = |noise: &[FieldElement], counts: &mut BTreeMap<Vec<u32>, u64>| -> Result<()> {
        let key = view(noise)?.into_iter().map(FieldElement::value).collect();
        *counts.entry(key).or_insert(0) += 1;
        Ok(())
    };
    if symbols == 0 {
        let mut counts = BTreeMap::new();
        tally(&[], &mut counts)?;
        return Ok(ViewDistribution { counts });
    }
    let q = field.modulus();
    (0..q)
        .into_par_iter()
        .map(|first| {
            let mut counts = BTreeMap::new();
            let mut digits = vec![0u32; symbols];
            digits[0] = first;
            let mut noise: Vec<FieldElement> =
                digits.iter().map(|&d| field.reduce(d as u64)).collect();
            loop {
                tally(&noise, &mut counts)?;
                let mut pos = 1;
                while pos < symbols {
                    digits[pos] += 1;
                    if digits[pos] < q {
                        noise[pos] = field.reduce(digits[pos] as u64);
                        break;
                    }
                    digits[pos] = 0;
                    noise[pos] = FieldElement::ZERO;
                    pos += 1;
                }
                if pos == symbols {
                    break;
                }
            }
            Ok(ViewDistribution { counts })
        })
        .try_reduce(ViewDistribution::default, |a, b| Ok(a.merge(b)))
}

fn check_colluders(
    params: &SystemParams,
    colluders: &[usize],
    size: usize,
    what: &str,
) -> Result<()> {
    if colluders.len() != size || !colluders.iter().all_unique() {
        return Err(Error::Config(format!(
            "{what} audit needs {size} distinct colluders, got {colluders:?}"
        )));
    }
    colluders.iter().try_for_each(|&n| params.check_server(n))
}

/// Joint view of `colluders` over the compact queries of consecutive rounds
/// for submodels `thetas`, each round with fresh noise.
pub fn query_history_distribution(
    params: &SystemParams,
    thetas: &[usize],
    colluders: &[usize],
    budget: u64,
) -> Result<ViewDistribution> {
    check_colluders(params, colluders, params.privacy(), "query")?;
    for &theta in thetas {
        params.check_submodel(theta)?;
    }
    let per_round = params.period() * params.partitions() * params.privacy() * params.submodels();
    enumerate_views(params.field(), per_round * thetas.len(), budget, |noise| {
        let mut view = Vec::new();
        for (theta, chunk) in thetas.iter().zip(noise.chunks(per_round.max(1))) {
            let queries = gen_read_query(params, *theta, &QueryNoise::from_flat(params, chunk)?)?;
            for &n in colluders {
                view.extend(queries[n - 1].flatten());
            }
        }
        Ok(view)
    })
}

/// View of `T` colluders on the compact query for submodel `theta` (1-based).
///
/// The full `J`-row query is a fixed function of the compact form, so the
/// two carry the same distribution.
pub fn query_view_distribution(
    params: &SystemParams,
    theta: usize,
    colluders: &[usize],
    budget: u64,
) -> Result<ViewDistribution> {
    query_history_distribution(params, &[theta], colluders, budget)
}

/// View of any set of servers on storage block `j`, over the `X * K` noise symbols of that block.
pub fn storage_block_distribution(
    params: &SystemParams,
    db: &Database,
    colluders: &[usize],
    j: usize,
    budget: u64,
) -> Result<ViewDistribution> {
    let kc = params.partitions();
    let columns: Vec<_> = (0..kc).map(|i| db.column(j, i, kc)).collect();
    let k = params.submodels();
    enumerate_views(params.field(), params.security() * k, budget, |noise| {
        let noise: Vec<Vec<FieldElement>> = noise.chunks(k).map(<[_]>::to_vec).collect();
        let mut view = Vec::new();
        for &n in colluders {
            view.extend(encode_block(
                params.field(),
                params.alpha(n),
                params.pole_row(j),
                &columns,
                &noise,
            )?);
        }
        Ok(view)
    })
}

/// Per-block views of `X` colluders on the stored data. Blocks carry
/// independent noise, so the joint view is the product of these.
pub fn storage_view_distribution(
    params: &SystemParams,
    db: &Database,
    colluders: &[usize],
    budget: u64,
) -> Result<Vec<ViewDistribution>> {
    check_colluders(params, colluders, params.security(), "storage")?;
    (0..params.blocks())
        .map(|j| storage_block_distribution(params, db, colluders, j, budget))
        .collect()
}

/// Joint view of `colluders` on all blocks at once, enumerating all `J * X * K` noise symbols.
pub fn storage_joint_distribution(
    params: &SystemParams,
    db: &Database,
    colluders: &[usize],
    budget: u64,
) -> Result<ViewDistribution> {
    let per_block = params.security() * params.submodels();
    let k = params.submodels();
    let kc = params.partitions();
    enumerate_views(
        params.field(),
        per_block * params.blocks(),
        budget,
        |noise| {
            let mut view = Vec::new();
            for (j, chunk) in noise.chunks(per_block).enumerate() {
                let columns: Vec<_> = (0..kc).map(|i| db.column(j, i, kc)).collect();
                let z: Vec<Vec<FieldElement>> = chunk.chunks(k).map(<[_]>::to_vec).collect();
                for &n in colluders {
                    view.extend(encode_block(
                        params.field(),
                        params.alpha(n),
                        params.pole_row(j),
                        &columns,
                        &z,
                    )?);
                }
            }
            Ok(view)
        },
    )
}

/// View of `X_delta` colluders on the packed increments of one round.
/// Returns `None` when `X_delta = 0`: the claim is vacuous.
pub fn increment_view_distribution(
    params: &SystemParams,
    round: &RoundParams,
    delta: &[FieldElement],
    colluders: &[usize],
    budget: u64,
) -> Result<Option<ViewDistribution>> {
    if params.increment_security() == 0 {
        return Ok(None);
    }
    check_colluders(params, colluders, params.increment_security(), "increment")?;
    let symbols = round.write_windows * params.partitions() * params.increment_security();
    enumerate_views(params.field(), symbols, budget, |noise| {
        let incs = gen_increment(
            params,
            round,
            delta,
            &IncrementNoise::from_flat(params, round, noise)?,
        )?;
        Ok(colluders
            .iter()
            .flat_map(|&n| incs[n - 1].flatten())
            .collect())
    })
    .map(Some)
}

/// One named check in an audit report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    /// Number of distribution comparisons or properties examined.
    pub cases: u64,
    /// Noise assignments enumerated per distribution.
    pub assignments: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub what: String,
    pub passed: bool,
    pub notices: Vec<String>,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    fn new(what: &str) -> Self {
        AuditReport {
            what: what.into(),
            passed: true,
            notices: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, passed: bool, cases: u64, assignments: u64, detail: String) {
        self.passed &= passed;
        self.checks.push(AuditCheck {
            name: name.into(),
            passed,
            cases,
            assignments,
            detail,
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Query views of every `T`-subset are identical across all submodels and uniform.
/// Two-round histories are also compared when they fit in the budget.
pub fn audit_privacy(params: &SystemParams, budget: u64) -> Result<AuditReport> {
    let mut report = AuditReport::new("privacy");
    let per_round = params.period() * params.partitions() * params.privacy() * params.submodels();
    let total = assignments(params.field(), per_round, budget)?;
    let subsets: Vec<Vec<usize>> = (1..=params.servers())
        .combinations(params.privacy())
        .collect();
    let (mut same, mut uniform, mut mismatch) = (0u64, 0u64, Vec::new());
    for set in &subsets {
        let dists = (1..=params.submodels())
            .map(|theta| query_view_distribution(params, theta, set, budget))
            .collect::<Result<Vec<_>>>()?;
        for (theta, d) in dists.iter().enumerate().skip(1) {
            if d == &dists[0] {
                same += 1;
            } else {
                mismatch.push(format!("{set:?}: submodel 1 vs {}", theta + 1));
            }
        }
        if dists[0].is_uniform() && dists[0].total() == total && dists[0].distinct() as u64 == total
        {
            uniform += 1;
        }
    }
    let pairs = (subsets.len() * (params.submodels() - 1)) as u64;
    report.push(
        "query views identical across submodels",
        mismatch.is_empty(),
        pairs,
        total,
        if mismatch.is_empty() {
            format!("{same} of {pairs} comparisons equal")
        } else {
            mismatch.join("; ")
        },
    );
    report.push(
        "query views uniform and bijective in the noise",
        uniform == subsets.len() as u64,
        subsets.len() as u64,
        total,
        format!("{uniform} of {} colluder sets", subsets.len()),
    );
    match assignments(params.field(), 2 * per_round, budget) {
        Ok(total2) => {
            let histories: Vec<Vec<usize>> = (0..2)
                .map(|_| 1..=params.submodels())
                .multi_cartesian_product()
                .collect();
            let mut bad = Vec::new();
            for set in &subsets {
                let base = query_history_distribution(params, &histories[0], set, budget)?;
                for h in &histories[1..] {
                    if query_history_distribution(params, h, set, budget)? != base {
                        bad.push(format!("{set:?}: {h:?}"));
                    }
                }
            }
            let cases = (subsets.len() * (histories.len() - 1)) as u64;
            report.push(
                "two-round query histories identical",
                bad.is_empty(),
                cases,
                total2,
                if bad.is_empty() {
                    format!("{cases} comparisons equal")
                } else {
                    bad.join("; ")
                },
            );
        }
        Err(_) => report.notices.push(
            "two-round history enumeration exceeds the budget at this configuration; skipped"
                .into(),
        ),
    }
    Ok(report)
}

/// Storage views of every `X`-subset are identical for two distinct databases
/// and uniform; `X + 1` servers tell databases apart; the per-block
/// decomposition matches a joint enumeration when that fits in the budget.
pub fn audit_storage(params: &SystemParams, budget: u64, seed: u64) -> Result<AuditReport> {
    let mut report = AuditReport::new("storage");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let db_a = Database::random(params, &mut rng);
    let mut db_b = Database::random(params, &mut rng);
    if db_a == db_b {
        let f = params.field();
        let mut bump = vec![FieldElement::ZERO; params.submodel_len()];
        bump[0] = FieldElement::ONE;
        db_b.increment(f, 0, &bump);
    }
    let total = assignments(
        params.field(),
        params.security() * params.submodels(),
        budget,
    )?;
    let subsets: Vec<Vec<usize>> = (1..=params.servers())
        .combinations(params.security())
        .collect();
    let (mut bad, mut uniform) = (Vec::new(), 0u64);
    for set in &subsets {
        let a = storage_view_distribution(params, &db_a, set, budget)?;
        let b = storage_view_distribution(params, &db_b, set, budget)?;
        for (j, (da, db)) in a.iter().zip(&b).enumerate() {
            if da != db {
                bad.push(format!("{set:?} block {j}"));
            }
            if da.is_uniform() && da.distinct() as u64 == total {
                uniform += 1;
            }
        }
    }
    let cases = (subsets.len() * params.blocks()) as u64;
    report.push(
        "storage views identical across databases",
        bad.is_empty(),
        cases,
        total,
        if bad.is_empty() {
            format!("{cases} per-block comparisons equal")
        } else {
            bad.join("; ")
        },
    );
    report.push(
        "storage views uniform",
        uniform == cases,
        cases,
        total,
        format!("{uniform} of {cases} per-block distributions uniform over all views"),
    );

    if params.security() < params.servers() {
        let set: Vec<usize> = (1..=params.security() + 1).collect();
        let zero = Database::zeros(params);
        let mut one = zero.clone();
        let mut bump = vec![FieldElement::ZERO; params.submodel_len()];
        bump[0] = FieldElement::ONE;
        one.increment(params.field(), 0, &bump);
        let differs = storage_block_distribution(params, &zero, &set, 0, budget)?
            != storage_block_distribution(params, &one, &set, 0, budget)?;
        report.push(
            "X+1 colluders distinguish databases",
            differs,
            1,
            total,
            format!("servers {set:?}, block 0"),
        );
    }

    let set = &subsets[0];
    match storage_joint_distribution(params, &db_a, set, budget) {
        Ok(joint) => {
            let product = storage_view_distribution(params, &db_a, set, budget)?
                .iter()
                .fold(
                    ViewDistribution {
                        counts: BTreeMap::from([(Vec::new(), 1)]),
                    },
                    |acc, d| acc.product(d),
                );
            report.push(
                "per-block decomposition matches joint enumeration",
                joint == product,
                1,
                joint.total(),
                format!("servers {set:?}, {} blocks", params.blocks()),
            );
        }
        Err(Error::BudgetExceeded { .. }) => report.notices.push(
            "joint storage enumeration exceeds the budget at this configuration; skipped".into(),
        ),
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// Increment views of every `X_delta`-subset are identical for two distinct
/// increments and uniform, for every admissible number of write dropouts.
pub fn audit_increment(params: &SystemParams, budget: u64, seed: u64) -> Result<AuditReport> {
    let mut report = AuditReport::new("increment");
    if params.increment_security() == 0 {
        report
            .notices
            .push("X_delta = 0: increments carry no security claim; nothing to verify".into());
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets: Vec<Vec<usize>> = (1..=params.servers())
        .combinations(params.increment_security())
        .collect();
    for dropped in 0..params.write_threshold() {
        let n = params.servers();
        let round = RoundParams::new(params, 1, [], n + 1 - dropped..=n)?;
        let symbols = round.write_windows * params.partitions() * params.increment_security();
        let total = assignments(params.field(), symbols, budget)?;
        let delta_a = crate::codec::random_vec(params.field(), params.submodel_len(), &mut rng);
        let mut delta_b = crate::codec::random_vec(params.field(), params.submodel_len(), &mut rng);
        if delta_a == delta_b {
            delta_b[0] = params.field().add(delta_b[0], FieldElement::ONE);
        }
        let (mut bad, mut uniform) = (Vec::new(), 0u64);
        for set in &subsets {
            let a = increment_view_distribution(params, &round, &delta_a, set, budget)?
                .expect("X_delta >= 1");
            let b = increment_view_distribution(params, &round, &delta_b, set, budget)?
                .expect("X_delta >= 1");
            if a != b {
                bad.push(format!("{set:?}"));
            }
            if a.is_uniform() && a.total() == total {
                uniform += 1;
            }
        }
        let cases = subsets.len() as u64;
        report.push(
            &format!("increment views identical across increments ({dropped} write dropouts)"),
            bad.is_empty(),
            cases,
            total,
            if bad.is_empty() {
                format!("{cases} colluder sets equal")
            } else {
                bad.join("; ")
            },
        );
        report.push(
            &format!("increment views uniform ({dropped} write dropouts)"),
            uniform == cases,
            cases,
            total,
            format!("{uniform} of {cases} colluder sets"),
        );
    }
    Ok(report)
}

/// Everything needed to certify one committed round.
#[derive(Debug, Clone, Copy)]
pub struct RoundArtifacts<'a> {
    pub round: &'a RoundParams,
    pub theta: usize,
    pub delta: &'a [FieldElement],
    pub pre: &'a [ServerStorage],
    pub post: &'a [ServerStorage],
    pub pre_mirror: &'a Database,
    pub retrieved: &'a [FieldElement],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clause {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub clauses: Vec<Clause>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.clauses
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }
}

/// Certifies a round: (a) the retrieval matches the mirror, (b) every
/// `K_c + X` subset decodes to the updated mirror, (c) write dropouts are
/// untouched, (d) the coded storage is consistent.
pub fn certify_round(params: &SystemParams, art: &RoundArtifacts<'_>) -> Result<Certificate> {
    params.check_submodel(art.theta)?;
    if art.pre.len() != params.servers() || art.post.len() != params.servers() {
        return Err(Error::Dimension(
            "certificate needs the storage of all servers".into(),
        ));
    }
    let mut mirror = art.pre_mirror.clone();
    mirror.increment(params.field(), art.theta - 1, art.delta);

    let a = art.retrieved == art.pre_mirror.row(art.theta - 1);
    let subsets: Vec<Vec<usize>> = (0..params.servers())
        .combinations(params.recovery_threshold())
        .collect();
    let bad: Vec<String> = subsets
        .par_iter()
        .filter_map(|set| {
            let refs: Vec<&ServerStorage> = set.iter().map(|&n| &art.post[n]).collect();
            match decode_database(params, &refs) {
                Ok(db) if db == mirror => None,
                _ => Some(format!(
                    "{:?}",
                    set.iter().map(|n| n + 1).collect::<Vec<_>>()
                )),
            }
        })
        .collect();
    let touched: Vec<usize> = art
        .round
        .write_dropouts
        .iter()
        .copied()
        .filter(|&n| art.pre[n - 1] != art.post[n - 1])
        .collect();
    let refs: Vec<&ServerStorage> = art.post.iter().collect();
    let d = check_consistency(params, &refs);

    Ok(Certificate {
        clauses: vec![
            Clause {
                name: "a",
                passed: a,
                detail: format!(
                    "retrieved submodel {} {} the mirror",
                    art.theta,
                    if a { "matches" } else { "differs from" }
                ),
            },
            Clause {
                name: "b",
                passed: bad.is_empty(),
                detail: if bad.is_empty() {
                    format!("all {} subsets decode to the updated mirror", subsets.len())
                } else {
                    format!(
                        "subsets failing to decode to the mirror: {}",
                        bad.join(", ")
                    )
                },
            },
            Clause {
                name: "c",
                passed: touched.is_empty(),
                detail: if touched.is_empty() {
                    "write dropouts untouched".into()
                } else {
                    format!("write dropouts modified: {touched:?}")
                },
            },
            Clause {
                name: "d",
                passed: d,
                detail: if d {
                    "storage consistent".into()
                } else {
                    "storage inconsistent".into()
                },
            },
        ],
    })
}

/// Rational function `poly(a) + sum residue / (a - pole)` with simple poles.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct CauchyPoly {
    /// Ascending coefficients.
    poly: Vec<FieldElement>,
    poles: BTreeMap<FieldElement, FieldElement>,
}

impl CauchyPoly {
    fn constant(c: FieldElement) -> Self {
        CauchyPoly {
            poly: vec![c],
            poles: BTreeMap::new(),
        }
    }

    fn monomial(c: FieldElement, degree: usize) -> Self {
        let mut poly = vec![FieldElement::ZERO; degree + 1];
        poly[degree] = c;
        CauchyPoly {
            poly,
            poles: BTreeMap::new(),
        }
    }

    /// `a - root`.
    fn linear(f: &Field, root: FieldElement) -> Self {
        CauchyPoly {
            poly: vec![f.neg(root), FieldElement::ONE],
            poles: BTreeMap::new(),
        }
    }

    fn pole(at: FieldElement, residue: FieldElement) -> Self {
        CauchyPoly {
            poly: Vec::new(),
            poles: BTreeMap::from([(at, residue)]),
        }
    }

    fn normalize(mut self) -> Self {
        while self.poly.last().is_some_and(|c| c.is_zero()) {
            self.poly.pop();
        }
        self.poles.retain(|_, r| !r.is_zero());
        self
    }

    fn add(mut self, f: &Field, other: &CauchyPoly) -> Self {
        if self.poly.len() < other.poly.len() {
            self.poly.resize(other.poly.len(), FieldElement::ZERO);
        }
        for (a, b) in self.poly.iter_mut().zip(&other.poly) {
            *a = f.add(*a, *b);
        }
        for (&at, &r) in &other.poles {
            let e = self.poles.entry(at).or_insert(FieldElement::ZERO);
            *e = f.add(*e, r);
        }
        self.normalize()
    }

    fn scale(mut self, f: &Field, c: FieldElement) -> Self {
        self.poly.iter_mut().for_each(|a| *a = f.mul(*a, c));
        self.poles.values_mut().for_each(|r| *r = f.mul(*r, c));
        self.normalize()
    }

    /// `p(a) * r / (a - b) = r * (p(a) - p(b)) / (a - b) + r * p(b) / (a - b)`.
    fn poly_times_pole(
        f: &Field,
        p: &[FieldElement],
        b: FieldElement,
        r: FieldElement,
    ) -> CauchyPoly {
        let mut quotient = vec![FieldElement::ZERO; p.len().saturating_sub(1)];
        let mut acc = FieldElement::ZERO;
        for k in (0..p.len()).rev() {
            acc = f.mul_add(p[k], acc, b);
            if k > 0 {
                quotient[k - 1] = acc;
            }
        }
        let out = CauchyPoly {
            poly: quotient,
            poles: BTreeMap::from([(b, acc)]),
        };
        out.scale(f, r)
    }

    fn mul(&self, f: &Field, other: &CauchyPoly) -> Result<Self> {
        let mut poly =
            vec![FieldElement::ZERO; (self.poly.len() + other.poly.len()).saturating_sub(1)];
        for (x, a) in self.poly.iter().enumerate() {
            for (y, b) in other.poly.iter().enumerate() {
                poly[x + y] = f.mul_add(poly[x + y], *a, *b);
            }
        }
        let mut out = CauchyPoly {
            poly,
            poles: BTreeMap::new(),
        };
        for (&b, &r) in &other.poles {
            out = out.add(f, &Self::poly_times_pole(f, &self.poly, b, r));
        }
        for (&a, &r) in &self.poles {
            out = out.add(f, &Self::poly_times_pole(f, &other.poly, a, r));
        }
        for (&a, &r1) in &self.poles {
            for (&b, &r2) in &other.poles {
                if a == b {
                    return Err(Error::Invariant(format!("double pole at {a}")));
                }
                let c = f.div(f.mul(r1, r2), f.sub(a, b))?;
                out = out
                    .add(f, &CauchyPoly::pole(a, c))
                    .add(f, &CauchyPoly::pole(b, f.neg(c)));
            }
        }
        Ok(out.normalize())
    }

    /// Degree of the polynomial part; `None` if it is zero.
    fn degree(&self) -> Option<usize> {
        self.poly.iter().rposition(|c| !c.is_zero())
    }

    fn eval(&self, f: &Field, a: FieldElement) -> Result<FieldElement> {
        let mut acc = self
            .poly
            .iter()
            .rev()
            .fold(FieldElement::ZERO, |acc, &c| f.mul_add(c, acc, a));
        for (&at, &r) in &self.poles {
            acc = f.add(acc, f.div(r, f.sub(a, at))?);
        }
        Ok(acc)
    }
}

fn product_of_linears(f: &Field, roots: impl IntoIterator<Item = FieldElement>) -> CauchyPoly {
    roots
        .into_iter()
        .fold(CauchyPoly::constant(FieldElement::ONE), |acc, r| {
            acc.mul(f, &CauchyPoly::linear(f, r))
                .expect("polynomials have no poles")
        })
}

/// Outcome of the symbolic check of one read/write cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlignmentReport {
    /// Largest degree of the interference polynomial in any answer.
    pub read_degree: usize,
    /// `X + T + K_c - 2`.
    pub read_bound: usize,
    /// Largest degree of the polynomial part of any update codeword.
    pub write_degree: usize,
    /// `X - 1`: the update must look like fresh storage noise.
    pub write_bound: usize,
    /// `X_delta + R_w + |S_w| + T - 1`, which must equal `X`.
    pub identity_lhs: usize,
    pub security: usize,
    /// Every pole carries exactly the desired symbol (read) or increment (write).
    pub residues_ok: bool,
    /// Symbolic forms evaluate to the values the servers actually computed.
    pub evaluations_ok: bool,
    /// The update codeword vanishes at every write dropout.
    pub dropout_zeros_ok: bool,
}

impl AlignmentReport {
    pub fn passed(&self) -> bool {
        self.read_degree <= self.read_bound
            && self.write_degree <= self.write_bound
            && self.identity_lhs == self.security
            && self.residues_ok
            && self.evaluations_ok
            && self.dropout_zeros_ok
    }

    /// Whether the write interference fills all `X` noise dimensions.
    pub fn write_degree_attained(&self) -> bool {
        self.write_degree == self.write_bound
    }
}

/// Re-derives one cycle symbolically in the evaluation point and checks it
/// against the numeric protocol on freshly encoded storage of `db`.
pub fn alignment_check<R: Rng + ?Sized>(
    params: &SystemParams,
    db: &Database,
    round: &RoundParams,
    theta: usize,
    delta: &[FieldElement],
    rng: &mut R,
) -> Result<AlignmentReport> {
    params.check_submodel(theta)?;
    let f = params.field();
    let (kc, k) = (params.partitions(), params.submodels());
    let storage_noise = StorageNoise::random(params, rng);
    let query_noise = QueryNoise::random(params, rng);
    let inc_noise = IncrementNoise::random(params, round, rng);
    let pre = encode_storage(params, db, &storage_noise)?;
    let queries = gen_read_query(params, theta, &query_noise)?;
    let increments = gen_increment(params, round, delta, &inc_noise)?;

    let storage_sym = |j: usize, kk: usize| -> CauchyPoly {
        let mut s = CauchyPoly::default();
        for i in 0..kc {
            s = s.add(
                f,
                &CauchyPoly::pole(params.pole(j, i), db.entry(kk, j, i, kc)),
            );
        }
        for (x, z) in storage_noise.z[j].iter().enumerate() {
            s = s.add(f, &CauchyPoly::monomial(z[kk], x));
        }
        s.normalize()
    };
    let query_sym = |i: usize, j: usize, kk: usize| -> Result<CauchyPoly> {
        let mut noise = CauchyPoly::default();
        for (s, z) in query_noise.z[j % params.period()][i].iter().enumerate() {
            noise = noise.add(f, &CauchyPoly::monomial(z[kk], s));
        }
        let unit = if kk == theta - 1 {
            FieldElement::ONE
        } else {
            FieldElement::ZERO
        };
        Ok(noise
            .mul(f, &CauchyPoly::linear(f, params.pole(j, i)))?
            .add(f, &CauchyPoly::constant(unit)))
    };

    let mut residues_ok = true;
    let mut evaluations_ok = true;
    let mut dropout_zeros_ok = true;

    let packer = build_packer(params, round);
    let answers: Vec<_> = round
        .read_available(params.servers())
        .into_iter()
        .map(|n| compute_answer(params, &pre[n - 1], &queries[n - 1], &packer, round))
        .collect::<Result<_>>()?;
    let mut read_degree = 0;
    for l in 0..round.read_windows {
        for i in 0..kc {
            let mut answer = CauchyPoly::default();
            let mut expected = BTreeMap::new();
            for j in round.read_window(l) {
                let row = params.pole_row(j);
                let others = || (0..kc).filter(|&o| o != i).map(|o| row[o]);
                let packer_sym =
                    product_of_linears(f, others()).scale(f, f.inv(f.prod_diff(row[i], others()))?);
                let mut inner = CauchyPoly::default();
                for kk in 0..k {
                    inner = inner.add(f, &storage_sym(j, kk).mul(f, &query_sym(i, j, kk)?)?);
                }
                answer = answer.add(f, &packer_sym.mul(f, &inner)?);
                expected.insert(row[i], db.entry(theta - 1, j, i, kc));
            }
            expected.retain(|_, r: &mut FieldElement| !r.is_zero());
            residues_ok &= answer.poles == expected;
            read_degree = read_degree.max(answer.degree().unwrap_or(0));
            for a in &answers {
                evaluations_ok &= answer.eval(f, params.alpha(a.server))? == a.values[l][i];
            }
        }
    }

    let unpacker = build_unpacker(params, round);
    let shaper = build_null_shaper(params, round);
    let post: Vec<Option<ServerStorage>> = (1..=params.servers())
        .map(|n| {
            if round.write_dropouts.contains(&n) {
                Ok(None)
            } else {
                apply_update(
                    params,
                    &pre[n - 1],
                    &increments[n - 1],
                    &queries[n - 1],
                    &unpacker,
                    &shaper,
                    round,
                )
                .map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let dropped: Vec<FieldElement> = round
        .write_dropouts
        .iter()
        .map(|&m| params.alpha(m))
        .collect();
    let mut write_degree = 0;
    for j in 0..params.blocks() {
        let l = round.write_window_of(j);
        let window = round.write_window(l);
        let mut terms = Vec::with_capacity(kc);
        for i in 0..kc {
            let pole = params.pole(j, i);
            let mut packed = CauchyPoly::default();
            for jj in window.clone() {
                packed = packed.add(f, &CauchyPoly::pole(params.pole(jj, i), delta[i + kc * jj]));
            }
            for (x, z) in inc_noise.z[l][i].iter().enumerate() {
                packed = packed.add(f, &CauchyPoly::monomial(*z, x));
            }
            let others = || {
                window
                    .clone()
                    .filter(|&o| o != j)
                    .map(|o| params.pole(o, i))
            };
            let unpack =
                product_of_linears(f, others()).scale(f, f.inv(f.prod_diff(pole, others()))?);
            let shape = product_of_linears(f, dropped.iter().copied())
                .scale(f, f.inv(f.prod_diff(pole, dropped.iter().copied()))?);
            terms.push(shape.mul(f, &unpack)?.mul(f, &packed)?);
        }
        for kk in 0..k {
            let mut update = CauchyPoly::default();
            let mut expected = BTreeMap::new();
            for (i, term) in terms.iter().enumerate() {
                update = update.add(f, &term.mul(f, &query_sym(i, j, kk)?)?);
                if kk == theta - 1 {
                    expected.insert(params.pole(j, i), delta[i + kc * j]);
                }
            }
            expected.retain(|_, r: &mut FieldElement| !r.is_zero());
            residues_ok &= update.poles == expected;
            write_degree = write_degree.max(update.degree().unwrap_or(0));
            for n in 1..=params.servers() {
                let value = update.eval(f, params.alpha(n))?;
                match &post[n - 1] {
                    None => dropout_zeros_ok &= value.is_zero(),
                    Some(s) => {
                        evaluations_ok &= value == f.sub(s.block(j)[kk], pre[n - 1].block(j)[kk])
                    }
                }
            }
        }
    }

    Ok(AlignmentReport {
        read_degree,
        read_bound: params.read_interference_dim() - 1,
        write_degree,
        write_bound: params.security() - 1,
        identity_lhs: params.increment_security()
            + round.write_batch
            + round.write_dropouts.len()
            + params.privacy()
            - 1,
        security: params.security(),
        residues_ok,
        evaluations_ok,
        dropout_zeros_ok,
    })
}
