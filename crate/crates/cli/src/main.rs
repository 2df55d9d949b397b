//! `acsa-rw`: simulation, cost tables, worked-example replays and audits.
//!
//! Exit codes: 0 on success, 1 on an internal invariant violation or a failed
//! check, 2 on invalid or infeasible input.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acsa_rw::audit::{self, alignment_check, certify_round, RoundArtifacts, DEFAULT_BUDGET};
use acsa_rw::codec::{random_vec, write_snapshot, Database};
use acsa_rw::params::{RawConfig, RoundParams, SystemParams};
use acsa_rw::sim::{
    execute_round, initial_database, run_schedule, theorem1_costs, DropoutSchedule,
    SimulationState, Workload,
};
use acsa_rw::{Error, Ratio};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;

#[derive(Parser, Debug)]
#[command(
    name = "acsa-rw",
    version,
    about = "Private read/write over dropout-prone coded storage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run read/write rounds and write a JSON-lines trace.
    Simulate(SimulateArgs),
    /// Print closed-form (D, U) per dropout pair.
    Costs {
        #[arg(long)]
        config: PathBuf,
        /// "sr=0..a,sw=0..b", both bounds inclusive.
        #[arg(long)]
        sweep: Option<String>,
        /// Security levels "lo..hi" to sweep instead of the configured X.
        #[arg(long)]
        sweep_x: Option<String>,
    },
    /// Replay a worked example and compare every stated quantity.
    Example {
        #[arg(long, value_enum)]
        which: Scenario,
    },
    /// Exhaustive enumeration of collusion views; prints a JSON report.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        what: AuditKind,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the property suites at built-in tiny configurations.
    Selftest,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    rounds: usize,
    /// JSON array of {"read_dropouts": [...], "write_dropouts": [...]}.
    #[arg(long, conflicts_with = "random_dropouts")]
    schedule: Option<PathBuf>,
    /// Per-round upper bounds "r,w" on the number of random dropouts.
    #[arg(long)]
    random_dropouts: Option<String>,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Trace destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Writes the final coded storage of every server here.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Skips the per-round oracle checks.
    #[arg(long)]
    no_verify: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Scenario {
    #[value(name = "5.1")]
    Worked,
    #[value(name = "3.1.8")]
    Numerical,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AuditKind {
    Privacy,
    Storage,
    Increment,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_internal() {
            Failure::Internal(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

/// Inclusive `(lo, hi)`.
type Span = (usize, usize);

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn load_config(path: &Path) -> Result<RawConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    Ok(RawConfig::from_json(&text)?)
}

fn decimal(r: &Ratio<u64>) -> String {
    let (n, d) = (*r.numer() as u128, *r.denom() as u128);
    let scaled = (n * 1_000_000 + d / 2) / d;
    format!("{}.{:06}", scaled / 1_000_000, scaled % 1_000_000)
}

fn parse_range(text: &str) -> Result<Span, Failure> {
    let bad = || Failure::Input(format!("expected a range like 0..3, got {text:?}"));
    let (lo, hi) = text.split_once("..").ok_or_else(bad)?;
    let lo = lo.trim().parse().map_err(|_| bad())?;
    let hi = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn parse_sweep(text: &str) -> Result<(Span, Span), Failure> {
    let mut sr = None;
    let mut sw = None;
    for part in text.split(',') {
        match part.trim().split_once('=') {
            Some(("sr", r)) => sr = Some(parse_range(r)?),
            Some(("sw", r)) => sw = Some(parse_range(r)?),
            _ => {
                return Err(Failure::Input(format!(
                    "unrecognized sweep component {part:?}"
                )))
            }
        }
    }
    Ok((sr.unwrap_or((0, 0)), sw.unwrap_or((0, 0))))
}

fn simulate(args: &SimulateArgs) -> Outcome {
    let mut raw = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        raw.seed = seed;
    }
    let params = SystemParams::derive(&raw)?;
    let schedule = match (args.schedule.as_deref(), args.random_dropouts.as_deref()) {
        (Some(path), _) => {
            DropoutSchedule::from_json(&fs::read_to_string(path).map_err(|e| io_failure(path, e))?)?
        }
        (None, Some(bounds)) => {
            let bad = || {
                Failure::Input(format!(
                    "expected --random-dropouts \"r,w\", got {bounds:?}"
                ))
            };
            let (r, w) = bounds.split_once(',').ok_or_else(bad)?;
            DropoutSchedule::Random {
                max_read: r.trim().parse().map_err(|_| bad())?,
                max_write: w.trim().parse().map_err(|_| bad())?,
                seed: raw.seed,
            }
        }
        (None, None) => DropoutSchedule::Random {
            max_read: 0,
            max_write: 0,
            seed: raw.seed,
        },
    };
    let db = initial_database(&params);
    let mut state = SimulationState::init(params, db)?.with_verify(!args.no_verify);
    let reports = run_schedule(
        &mut state,
        &schedule,
        &mut Workload::uniform(raw.seed),
        args.rounds,
    )?;

    let mut sink: Box<dyn Write> = match args.out.as_deref() {
        Some(path) => Box::new(BufWriter::new(
            fs::File::create(path).map_err(|e| io_failure(path, e))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    for r in &reports {
        writeln!(sink, "{}", r.trace_line()).map_err(|e| Failure::Input(e.to_string()))?;
    }
    sink.flush().map_err(|e| Failure::Input(e.to_string()))?;
    if let Some(path) = args.snapshot.as_deref() {
        let file = BufWriter::new(fs::File::create(path).map_err(|e| io_failure(path, e))?);
        write_snapshot(state.params(), state.servers(), file)?;
    }
    Ok(())
}

fn cost_rows(params: &SystemParams, sr: Span, sw: Span, label: &str) {
    for s_r in sr.0..=sr.1 {
        for s_w in sw.0..=sw.1 {
            match theorem1_costs(params, s_r, s_w) {
                Ok((d, u)) => println!(
                    "{label}{s_r:>4} {s_w:>4} {:>10} {:>12} {:>10} {:>12}",
                    d.to_string(),
                    decimal(&d),
                    u.to_string(),
                    decimal(&u)
                ),
                Err(e) => println!("{label}{s_r:>4} {s_w:>4} infeasible: {e}"),
            }
        }
    }
}

fn costs(config: &Path, sweep: Option<&str>, sweep_x: Option<&str>) -> Outcome {
    let raw = load_config(config)?;
    let (sr, sw) = match sweep {
        Some(s) => parse_sweep(s)?,
        None => ((0, 0), (0, 0)),
    };
    let header = format!(
        "{:>4} {:>4} {:>10} {:>12} {:>10} {:>12}",
        "s_r", "s_w", "D", "D~", "U", "U~"
    );
    match sweep_x {
        None => {
            let params = SystemParams::derive(&raw)?;
            println!("{header}");
            cost_rows(&params, sr, sw, "");
        }
        Some(range) => {
            let (lo, hi) = parse_range(range)?;
            println!("{:>4} {header}", "X");
            for x in lo..=hi {
                let candidate = RawConfig {
                    security: x,
                    ..raw.clone()
                };
                match SystemParams::derive(&candidate) {
                    Ok(params) => cost_rows(&params, sr, sw, &format!("{x:>4} ")),
                    Err(e) => println!("{x:>4} infeasible: {e}"),
                }
            }
        }
    }
    Ok(())
}

fn config(n: usize, k: usize, x: usize, t: usize, x_delta: usize, kc: usize) -> RawConfig {
    RawConfig {
        servers: n,
        submodels: k,
        security: x,
        privacy: t,
        increment_security: x_delta,
        partitions: kc,
        scale: 1,
        modulus: None,
        seed: 1,
    }
}

/// Prints one comparison line and records whether it matched.
struct Diff {
    failed: Vec<String>,
}

impl Diff {
    fn check<T: PartialEq + std::fmt::Display>(&mut self, name: &str, got: T, want: T) {
        if got == want {
            println!("  ok   {name} = {got}");
        } else {
            println!("  DIFF {name}: got {got}, expected {want}");
            self.failed.push(name.to_string());
        }
    }

    fn finish(self, title: &str) -> Outcome {
        if self.failed.is_empty() {
            println!("PASS {title}");
            Ok(())
        } else {
            println!("FAIL {title}");
            Err(Failure::Internal(format!(
                "mismatched quantities: {}",
                self.failed.join(", ")
            )))
        }
    }
}

fn example(which: Scenario) -> Outcome {
    let mut diff = Diff { failed: Vec::new() };
    match which {
        Scenario::Worked => {
            let params = SystemParams::derive(&config(8, 2, 4, 1, 1, 1))?;
            diff.check("L", params.submodel_len(), 6);
            diff.check("q >= 11", params.field().modulus() >= 11, true);
            let db = initial_database(&params);
            let mut state = SimulationState::init(params, db)?;
            let f = *state.params().field();
            let delta: Vec<_> = (1..=6).map(|v| f.reduce(v)).collect();
            let (_, r1) = state.run_round(1, &delta, &[3], &[5, 7])?;
            diff.check("D_1", r1.download, Ratio::new(7, 2));
            diff.check("U-increment_1", r1.upload_increment, Ratio::from_integer(6));
            let (_, r2) = state.run_round(2, &delta, &[1, 2], &[8])?;
            diff.check("D_2", r2.download, Ratio::from_integer(6));
            diff.check("U-increment_2", r2.upload_increment, Ratio::new(7, 2));
            diff.finish("example 5.1")
        }
        Scenario::Numerical => {
            let raw = config(6, 50, 3, 1, 1, 1).with_submodel_len(70_000)?;
            let params = SystemParams::derive(&raw)?;
            let db = initial_database(&params);
            let mut state = SimulationState::init(params, db)?;
            let delta = random_vec(
                state.params().field(),
                70_000,
                &mut rand_chacha::ChaCha8Rng::seed_from_u64(2),
            );
            let before = state.mirror().row(0).to_vec();
            let (got, r) = state.run_round(1, &delta, &[], &[])?;
            diff.check("retrieved submodel matches", got == before, true);
            diff.check(
                "uploaded symbols",
                r.up_query_symbols + r.up_increment_symbols,
                210_600,
            );
            diff.check("U", r.upload, Ratio::new(210_600, 70_000));
            diff.check("D", r.download, Ratio::from_integer(3));
            println!("  U ~ {}", decimal(&r.upload));
            diff.finish("example 3.1.8")
        }
    }
}

fn run_audit(config: &Path, what: AuditKind, budget: u64, seed: u64) -> Outcome {
    let params = SystemParams::derive(&load_config(config)?)?;
    let report = match what {
        AuditKind::Privacy => audit::audit_privacy(&params, budget)?,
        AuditKind::Storage => audit::audit_storage(&params, budget, seed)?,
        AuditKind::Increment => audit::audit_increment(&params, budget, seed)?,
    };
    println!("{}", report.to_json());
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Internal(format!("{} audit failed", report.what)))
    }
}

fn selftest() -> Outcome {
    let mut failed = Vec::new();
    let mut line = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(name.to_string());
        }
    };

    for raw in [
        config(8, 2, 4, 1, 1, 1),
        config(9, 3, 4, 2, 1, 2),
        config(7, 2, 3, 1, 1, 1),
    ] {
        let params = SystemParams::derive(&raw)?;
        let name = format!(
            "certified rounds at N={} X={} T={} K_c={}",
            raw.servers, raw.security, raw.privacy, raw.partitions
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(raw.servers as u64);
        let state = SimulationState::init(params.clone(), initial_database(&params))?;
        let mut ok = true;
        let mut storages = state.servers().to_vec();
        let mut mirror: Database = state.mirror().clone();
        let pairs = DropoutSchedule::Random {
            max_read: usize::MAX,
            max_write: usize::MAX,
            seed: 7,
        }
        .materialize(&params, 6)?;
        for (t, pair) in pairs.into_iter().enumerate() {
            let round = RoundParams::new(&params, t + 1, pair.read_dropouts, pair.write_dropouts)?;
            let theta = 1 + t % params.submodels();
            let delta = random_vec(params.field(), params.submodel_len(), &mut rng);
            let out = execute_round(&params, &storages, round.clone(), theta, &delta, &mut rng)?;
            let cert = certify_round(
                &params,
                &RoundArtifacts {
                    round: &round,
                    theta,
                    delta: &delta,
                    pre: &storages,
                    post: &out.next,
                    pre_mirror: &mirror,
                    retrieved: &out.retrieved,
                },
            )?;
            ok &= cert.passed();
            let (d, u) = theorem1_costs(
                &params,
                round.read_dropouts.len(),
                round.write_dropouts.len(),
            )?;
            ok &= out.report.download == d && out.report.upload_increment == u;
            ok &= alignment_check(&params, &mirror, &round, theta, &delta, &mut rng)?.passed();
            mirror.increment(params.field(), theta - 1, &delta);
            storages = out.next;
        }
        line(&name, ok);
    }

    let tiny = SystemParams::derive(&RawConfig {
        modulus: Some(7),
        ..config(4, 2, 2, 1, 1, 1)
    })?;
    line(
        "privacy audit at N=4",
        audit::audit_privacy(&tiny, DEFAULT_BUDGET)?.passed,
    );
    line(
        "storage audit at N=4",
        audit::audit_storage(&tiny, DEFAULT_BUDGET, 1)?.passed,
    );
    line(
        "increment audit at N=4",
        audit::audit_increment(&tiny, DEFAULT_BUDGET, 1)?.passed,
    );

    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Internal(format!("failed: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Costs {
            config,
            sweep,
            sweep_x,
        } => costs(config, sweep.as_deref(), sweep_x.as_deref()),
        Command::Example { which } => example(*which),
        Command::Audit {
            config,
            what,
            budget,
            seed,
        } => run_audit(config, *what, *budget, *seed),
        Command::Selftest => selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
