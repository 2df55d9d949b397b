//! Multi-round orchestration with a plaintext mirror oracle and an exact
//! communication ledger.

use num_rational::Ratio;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{decode_answers, gen_increment, gen_read_query, IncrementNoise, QueryNoise};
use crate::codec::{
    check_consistency, decode_database, encode_storage, random_vec, Database, ServerStorage,
    StorageNoise,
};
use crate::error::{Error, Result};
use crate::field::FieldElement;
use crate::params::{RoundParams, SystemParams};
use crate::server::{
    apply_update, build_null_shaper, build_packer, build_unpacker, compute_answer,
};

const NOISE_STREAM: u64 = 0;
const WORKLOAD_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const DATABASE_STREAM: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform initial database drawn from the configured seed.
pub fn initial_database(params: &SystemParams) -> Database {
    Database::random(params, &mut rng_for(params.seed(), DATABASE_STREAM))
}

/// Exact ledger of one read/write cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundReport {
    pub t: usize,
    pub theta: usize,
    pub read_dropouts: Vec<usize>,
    pub write_dropouts: Vec<usize>,
    pub down_symbols: u64,
    /// Query symbols actually sent: one compact query per server in `([N] \ S_r) u ([N] \ S_w)`.
    pub up_query_symbols: u64,
    /// Query symbols as counted over `[N] \ S_r \ S_w` only.
    pub up_query_symbols_lemma: u64,
    pub up_increment_symbols: u64,
    /// `D_t = down / L`.
    pub download: Ratio<u64>,
    /// `U_t = (query + increment) / L`.
    pub upload: Ratio<u64>,
    /// Increment part of the upload alone, `increment / L`.
    pub upload_increment: Ratio<u64>,
    /// Storage symbols a server reads or writes in one phase.
    pub access_touched_per_server: u64,
    pub eta: Ratio<u64>,
}

impl RoundReport {
    /// One JSON-lines trace record.
    pub fn trace_line(&self) -> String {
        serde_json::to_string(&TraceLine {
            t: self.t,
            theta: self.theta,
            read_dropouts: &self.read_dropouts,
            write_dropouts: &self.write_dropouts,
            down_symbols: self.down_symbols,
            up_query_symbols: self.up_query_symbols,
            up_increment_symbols: self.up_increment_symbols,
            d_num: *self.download.numer(),
            d_den: *self.download.denom(),
            u_num: *self.upload.numer(),
            u_den: *self.upload.denom(),
        })
        .expect("trace line serializes")
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    t: usize,
    theta: usize,
    read_dropouts: &'a [usize],
    write_dropouts: &'a [usize],
    down_symbols: u64,
    up_query_symbols: u64,
    up_increment_symbols: u64,
    #[serde(rename = "D_num")]
    d_num: u64,
    #[serde(rename = "D_den")]
    d_den: u64,
    #[serde(rename = "U_num")]
    u_num: u64,
    #[serde(rename = "U_den")]
    u_den: u64,
}

/// Everything a single cycle produces, before it is committed.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: RoundParams,
    pub retrieved: Vec<FieldElement>,
    /// Storage of all `N` servers after the write phase; write dropouts are carried over unchanged.
    pub next: Vec<ServerStorage>,
    pub report: RoundReport,
}

/// Runs one read/write cycle against `storages` without mutating them.
pub fn execute_round<R: Rng + ?Sized>(
    params: &SystemParams,
    storages: &[ServerStorage],
    round: RoundParams,
    theta: usize,
    delta: &[FieldElement],
    rng: &mut R,
) -> Result<RoundOutcome> {
    params.check_submodel(theta)?;
    if delta.len() != params.submodel_len() {
        return Err(Error::Dimension(format!(
            "increment must have {} symbols",
            params.submodel_len()
        )));
    }
    let n_servers = params.servers();

    let queries = gen_read_query(params, theta, &QueryNoise::random(params, rng))?;
    let packer = build_packer(params, &round);
    let answers = round
        .read_available(n_servers)
        .into_par_iter()
        .map(|n| compute_answer(params, &storages[n - 1], &queries[n - 1], &packer, &round))
        .collect::<Result<Vec<_>>>()?;
    let retrieved = decode_answers(params, &round, &answers)?;

    let increments = gen_increment(
        params,
        &round,
        delta,
        &IncrementNoise::random(params, &round, rng),
    )?;
    let unpacker = build_unpacker(params, &round);
    let shaper = build_null_shaper(params, &round);
    let next = (1..=n_servers)
        .into_par_iter()
        .map(|n| {
            let s = &storages[n - 1];
            if round.write_dropouts.contains(&n) {
                Ok(s.clone())
            } else {
                apply_update(
                    params,
                    s,
                    &increments[n - 1],
                    &queries[n - 1],
                    &unpacker,
                    &shaper,
                    &round,
                )
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let down: usize = answers.iter().map(|a| a.symbols()).sum();
    let up_inc: usize = round
        .write_available(n_servers)
        .iter()
        .map(|&n| increments[n - 1].symbols())
        .sum();
    let sent_query =
        |n: &usize| !round.read_dropouts.contains(n) || !round.write_dropouts.contains(n);
    let up_query: usize = (1..=n_servers)
        .filter(sent_query)
        .map(|n| queries[n - 1].symbols())
        .sum();
    let lemma_servers = (1..=n_servers)
        .filter(|n| !round.read_dropouts.contains(n) && !round.write_dropouts.contains(n))
        .count();
    let compact = (params.period() * params.submodels() * params.partitions()) as u64;
    let len = params.submodel_len() as u64;
    let report = RoundReport {
        t: round.t,
        theta,
        read_dropouts: round.read_dropouts.iter().copied().collect(),
        write_dropouts: round.write_dropouts.iter().copied().collect(),
        down_symbols: down as u64,
        up_query_symbols: up_query as u64,
        up_query_symbols_lemma: compact * lemma_servers as u64,
        up_increment_symbols: up_inc as u64,
        download: Ratio::new(down as u64, len),
        upload: Ratio::new((up_query + up_inc) as u64, len),
        upload_increment: Ratio::new(up_inc as u64, len),
        access_touched_per_server: (params.blocks() * params.submodels()) as u64,
        eta: params.storage_efficiency(),
    };
    Ok(RoundOutcome {
        round,
        retrieved,
        next,
        report,
    })
}

/// Coded storage of all servers plus the plaintext mirror used as an oracle.
#[derive(Debug, Clone)]
pub struct SimulationState {
    params: SystemParams,
    servers: Vec<ServerStorage>,
    mirror: Database,
    t: usize,
    rng: ChaCha8Rng,
    verify: bool,
}

impl SimulationState {
    /// Encodes `db` with fresh storage noise drawn from the configured seed.
    pub fn init(params: SystemParams, db: Database) -> Result<Self> {
        if db.submodels() != params.submodels()
            || db.rows().iter().any(|r| r.len() != params.submodel_len())
        {
            return Err(Error::Dimension(format!(
                "database must be {}x{}",
                params.submodels(),
                params.submodel_len()
            )));
        }
        let mut rng = rng_for(params.seed(), NOISE_STREAM);
        let noise = StorageNoise::random(&params, &mut rng);
        let servers = encode_storage(&params, &db, &noise)?;
        Ok(SimulationState {
            params,
            servers,
            mirror: db,
            t: 0,
            rng,
            verify: true,
        })
    }

    /// Toggles the per-round oracle checks (on by default).
    pub fn with_verify(mut self, verify: bool) -> Self {
        self.verify = verify;
        self
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn servers(&self) -> &[ServerStorage] {
        &self.servers
    }

    pub fn mirror(&self) -> &Database {
        &self.mirror
    }

    /// Number of completed rounds.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Runs round `t + 1` and commits it only if every step (and every enabled check) succeeds.
    pub fn run_round(
        &mut self,
        theta: usize,
        delta: &[FieldElement],
        read_dropouts: &[usize],
        write_dropouts: &[usize],
    ) -> Result<(Vec<FieldElement>, RoundReport)> {
        let t = self.t + 1;
        let wrap = |e: Error| Error::Round {
            t,
            source: Box::new(e),
        };
        let round = RoundParams::new(
            &self.params,
            t,
            read_dropouts.iter().copied(),
            write_dropouts.iter().copied(),
        )
        .map_err(wrap)?;
        let mut rng = self.rng.clone();
        let outcome = execute_round(&self.params, &self.servers, round, theta, delta, &mut rng)
            .map_err(wrap)?;
        let mut mirror = self.mirror.clone();
        mirror.increment(self.params.field(), theta - 1, delta);
        if self.verify {
            self.verify_outcome(&outcome, &mirror).map_err(wrap)?;
        }
        self.rng = rng;
        self.servers = outcome.next;
        self.mirror = mirror;
        self.t = t;
        Ok((outcome.retrieved, outcome.report))
    }

    fn verify_outcome(&self, outcome: &RoundOutcome, mirror: &Database) -> Result<()> {
        let theta = outcome.report.theta;
        if outcome.retrieved != self.mirror.row(theta - 1) {
            return Err(Error::Invariant(format!(
                "retrieved submodel {theta} differs from the mirror"
            )));
        }
        for &n in &outcome.round.write_dropouts {
            if outcome.next[n - 1] != self.servers[n - 1] {
                return Err(Error::Invariant(format!(
                    "write dropout server {n} was modified"
                )));
            }
        }
        let refs: Vec<&ServerStorage> = outcome.next.iter().collect();
        let share = self.params.recovery_threshold();
        let first = decode_database(&self.params, &refs[..share])?;
        let last = decode_database(&self.params, &refs[refs.len() - share..])?;
        if &first != mirror || &last != mirror {
            return Err(Error::Invariant(
                "coded storage does not decode to the mirror".into(),
            ));
        }
        if !check_consistency(&self.params, &refs) {
            return Err(Error::Invariant("coded storage is not consistent".into()));
        }
        Ok(())
    }
}

/// One entry of a schedule file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutPair {
    pub read_dropouts: Vec<usize>,
    pub write_dropouts: Vec<usize>,
}

/// Per-round dropout sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropoutSchedule {
    Explicit(Vec<DropoutPair>),
    /// Each round drops a uniform count in `0..=max` of uniformly chosen servers per phase;
    /// the bounds are clamped below the thresholds.
    Random {
        max_read: usize,
        max_write: usize,
        seed: u64,
    },
}

impl DropoutSchedule {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map(DropoutSchedule::Explicit)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// The dropout sets of the first `rounds` rounds.
    pub fn materialize(&self, params: &SystemParams, rounds: usize) -> Result<Vec<DropoutPair>> {
        match self {
            DropoutSchedule::Explicit(list) => {
                if list.len() < rounds {
                    return Err(Error::Config(format!(
                        "schedule has {} rounds, {rounds} requested",
                        list.len()
                    )));
                }
                Ok(list[..rounds].to_vec())
            }
            DropoutSchedule::Random {
                max_read,
                max_write,
                seed,
            } => {
                let mut rng = rng_for(*seed, DROPOUT_STREAM);
                let n = params.servers();
                let max_read = (*max_read).min(params.read_threshold() - 1);
                let max_write = (*max_write).min(params.write_threshold() - 1);
                let pick = |max: usize, rng: &mut ChaCha8Rng| {
                    let count = rng.random_range(0..=max);
                    let mut set: Vec<usize> =
                        sample(rng, n, count).into_iter().map(|i| i + 1).collect();
                    set.sort_unstable();
                    set
                };
                Ok((0..rounds)
                    .map(|_| {
                        let read_dropouts = pick(max_read, &mut rng);
                        let write_dropouts = pick(max_write, &mut rng);
                        DropoutPair {
                            read_dropouts,
                            write_dropouts,
                        }
                    })
                    .collect())
            }
        }
    }
}

/// Source of `(theta, delta)` per round.
#[derive(Debug, Clone)]
pub enum Workload {
    Explicit(Vec<(usize, Vec<FieldElement>)>),
    Uniform(Box<ChaCha8Rng>),
}

impl Workload {
    /// Uniform `theta` and `delta`, seeded.
    pub fn uniform(seed: u64) -> Self {
        Workload::Uniform(Box::new(rng_for(seed, WORKLOAD_STREAM)))
    }

    fn next(&mut self, params: &SystemParams, t: usize) -> Result<(usize, Vec<FieldElement>)> {
        match self {
            Workload::Explicit(list) => list
                .get(t - 1)
                .cloned()
                .ok_or_else(|| Error::Config(format!("workload has no entry for round {t}"))),
            Workload::Uniform(rng) => {
                let theta = rng.random_range(1..=params.submodels());
                Ok((
                    theta,
                    random_vec(params.field(), params.submodel_len(), rng),
                ))
            }
        }
    }
}

/// Runs `rounds` sequential rounds; the first failing round aborts with its index.
pub fn run_schedule(
    state: &mut SimulationState,
    schedule: &DropoutSchedule,
    workload: &mut Workload,
    rounds: usize,
) -> Result<Vec<RoundReport>> {
    let pairs = schedule.materialize(state.params(), rounds)?;
    let mut reports = Vec::with_capacity(rounds);
    for (k, pair) in pairs.iter().enumerate() {
        let (theta, delta) = workload.next(state.params(), k + 1)?;
        let (_, report) =
            state.run_round(theta, &delta, &pair.read_dropouts, &pair.write_dropouts)?;
        reports.push(report);
    }
    Ok(reports)
}

/// Closed-form cost pair `((N - s_r) / (S_r - s_r), (N - s_w) / (S_w - s_w))`.
pub fn theorem1_costs(
    params: &SystemParams,
    s_r: usize,
    s_w: usize,
) -> Result<(Ratio<u64>, Ratio<u64>)> {
    let (sr, sw) = (params.read_threshold(), params.write_threshold());
    if s_r >= sr {
        return Err(Error::TooManyReadDropouts {
            count: s_r,
            threshold: sr,
        });
    }
    if s_w >= sw {
        return Err(Error::TooManyWriteDropouts {
            count: s_w,
            threshold: sw,
        });
    }
    let n = params.servers() as u64;
    Ok((
        Ratio::new(n - s_r as u64, (sr - s_r) as u64),
        Ratio::new(n - s_w as u64, (sw - s_w) as u64),
    ))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::params::RawConfig;

    fn params(
        n: usize,
        k: usize,
        x: usize,
        t: usize,
        xd: usize,
        kc: usize,
        xi: usize,
    ) -> SystemParams {
        SystemParams::derive(&RawConfig {
            servers: n,
            submodels: k,
            security: x,
            privacy: t,
            increment_security: xd,
            partitions: kc,
            scale: xi,
            modulus: None,
            seed: 11,
        })
        .unwrap()
    }

    fn worked_example() -> SimulationState {
        let p = params(8, 2, 4, 1, 1, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let db = Database::random(&p, &mut rng);
        SimulationState::init(p, db).unwrap()
    }

    #[test]
    fn worked_example_costs() {
        let mut s = worked_example();
        assert_eq!(s.params().submodel_len(), 6);
        let f = *s.params().field();
        let delta: Vec<_> = (1..=6).map(|v| f.reduce(v)).collect();
        let (_, r1) = s.run_round(1, &delta, &[3], &[5, 7]).unwrap();
        assert_eq!(r1.down_symbols, 21);
        assert_eq!(r1.download, Ratio::new(7, 2));
        assert_eq!(r1.up_increment_symbols, 36);
        assert_eq!(r1.upload_increment, Ratio::from_integer(6));
        let (_, r2) = s.run_round(2, &delta, &[1, 2], &[8]).unwrap();
        assert_eq!(r2.download, Ratio::from_integer(6));
        assert_eq!(r2.upload_increment, Ratio::new(7, 2));
        let c1 = theorem1_costs(s.params(), 1, 2).unwrap();
        assert_eq!((r1.download, r1.upload_increment), c1);
    }

    #[test]
    fn query_accounting_counts_union_of_phases() {
        let mut s = worked_example();
        let delta = vec![FieldElement::ZERO; 6];
        let (_, r) = s.run_round(2, &delta, &[3], &[5, 7]).unwrap();
        let compact = 3 * 2;
        assert_eq!(r.up_query_symbols, 8 * compact);
        assert_eq!(r.up_query_symbols_lemma, 5 * compact);
        assert_eq!(r.upload, Ratio::new(8 * 6 + 36, 6));
        let (_, r) = s.run_round(2, &delta, &[3], &[3]).unwrap();
        assert_eq!(r.up_query_symbols, 7 * compact);
        assert_eq!(r.up_query_symbols_lemma, 7 * compact);
    }

    #[test]
    fn retrieval_tracks_mirror() {
        let mut s = worked_example();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..4 {
            let theta = rng.random_range(1..=2);
            let delta = random_vec(s.params().field(), 6, &mut rng);
            let before = s.mirror().row(theta - 1).to_vec();
            let (got, _) = s.run_round(theta, &delta, &[2], &[4]).unwrap();
            assert_eq!(got, before);
        }
        assert_eq!(s.t(), 4);
    }

    #[test]
    fn init_reports_and_round_trips() {
        let p = params(4, 1, 2, 1, 1, 1, 1);
        let j = p.blocks();
        let db = Database::random(&p, &mut ChaCha8Rng::seed_from_u64(1));
        let s = SimulationState::init(p, db.clone()).unwrap();
        assert_eq!(s.servers()[0].symbols(), j);
        let refs: Vec<_> = s.servers().iter().collect();
        assert_eq!(decode_database(s.params(), &refs).unwrap(), db);
        assert_eq!(s.params().storage_efficiency(), Ratio::new(1, 4));
    }

    #[test]
    fn failed_round_commits_nothing() {
        let mut s = worked_example();
        let before = s.servers().to_vec();
        let delta = vec![FieldElement::ZERO; 6];
        let err = s.run_round(1, &delta, &[1, 2, 3], &[]).unwrap_err();
        assert!(matches!(err, Error::Round { t: 1, .. }));
        assert!(!err.is_internal());
        assert!(s.run_round(3, &delta, &[], &[]).is_err());
        assert_eq!(s.servers(), &before[..]);
        assert_eq!(s.t(), 0);
    }

    #[test]
    fn theorem1_examples() {
        let p = params(10, 1, 5, 1, 1, 1, 1);
        assert_eq!(
            theorem1_costs(&p, 0, 0).unwrap(),
            (Ratio::new(10, 4), Ratio::new(10, 4))
        );
        assert!(theorem1_costs(&p, p.read_threshold(), 0).is_err());
        assert!(theorem1_costs(&p, 0, p.write_threshold()).is_err());
    }

    #[test]
    fn schedules_are_deterministic() {
        let run = || {
            let mut s = worked_example();
            let sched = DropoutSchedule::Random {
                max_read: 3,
                max_write: 3,
                seed: 4,
            };
            let reports = run_schedule(&mut s, &sched, &mut Workload::uniform(4), 5).unwrap();
            (
                reports
                    .iter()
                    .map(RoundReport::trace_line)
                    .collect::<Vec<_>>(),
                s.servers().to_vec(),
            )
        };
        assert_eq!(run(), run());
        let mut s = worked_example();
        let empty = DropoutSchedule::Explicit(vec![]);
        assert!(run_schedule(&mut s, &empty, &mut Workload::uniform(1), 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn random_schedule_stays_feasible() {
        let p = params(9, 2, 4, 2, 1, 2, 1);
        let pairs = DropoutSchedule::Random {
            max_read: 9,
            max_write: 9,
            seed: 2,
        }
        .materialize(&p, 50)
        .unwrap();
        for pair in pairs {
            RoundParams::new(&p, 1, pair.read_dropouts, pair.write_dropouts).unwrap();
        }
    }

    #[test]
    fn schedule_file_parses() {
        let s = DropoutSchedule::from_json(r#"[{"read_dropouts":[3],"write_dropouts":[5,7]}]"#)
            .unwrap();
        assert_eq!(
            s,
            DropoutSchedule::Explicit(vec![DropoutPair {
                read_dropouts: vec![3],
                write_dropouts: vec![5, 7]
            }])
        );
        assert!(DropoutSchedule::from_json(r#"[{"read":[3]}]"#).is_err());
    }

    #[test]
    fn trace_line_keys() {
        let mut s = worked_example();
        let (_, r) = s
            .run_round(1, &[FieldElement::ZERO; 6], &[3], &[5, 7])
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.trace_line()).unwrap();
        let keys: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        let want: BTreeSet<String> = [
            "t",
            "theta",
            "read_dropouts",
            "write_dropouts",
            "down_symbols",
            "up_query_symbols",
            "up_increment_symbols",
            "D_num",
            "D_den",
            "U_num",
            "U_den",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(keys, want);
        assert_eq!(
            (v["D_num"].as_u64(), v["D_den"].as_u64()),
            (Some(7), Some(2))
        );
    }
}
