//! `qubit-aopt` command line.
//!
//! Value flags are taken as strings and validated together, so a bad
//! invocation reports every offending flag at once (exit 2). Runtime
//! failures exit 1.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::designs::SchemeKind;
use crate::estimator::{BoundaryRule, MleConfig};
use crate::montecarlo::{
    averaged_expected_loss, fnv1a, log_checkpoints, pointwise_expected_loss, purity_sweep,
    ConfigError, Execution, LossTable, RunConfig, SphericalPoint,
};
use crate::oracles::verify;
use crate::states::{LossKind, MeasureKind, StateMeasure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

const DEFAULT_RADII: &str = "0,0.5,0.7,0.8,0.9,0.93,0.95,0.97,0.99";

#[derive(Debug, Parser)]
#[command(
    name = "qubit-aopt",
    version,
    about = "Adaptive A-optimal measurement design for single-qubit state estimation",
    long_about = "Adaptive A-optimal measurement design for single-qubit state estimation.\n\n\
Runs Monte Carlo experiments comparing the A-optimal schemes (ahs, aif) with\n\
XYZ repetition (xyz) and uniformly random axes (urs), writing a CSV table and\n\
a <out>.meta sidecar. Angles are in radians."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expected loss at one fixed true state
    Simulate {
        /// True state as r,theta,phi: r(sinθcosφ, sinθsinφ, cosθ)
        #[arg(long, value_name = "R,THETA,PHI")]
        true_state: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Expected loss averaged over true states drawn from a measure
    Average {
        /// State distribution: bures or euclid
        #[arg(long, default_value = "bures")]
        measure: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Expected loss per Bloch radius, averaged over directions
    PuritySweep {
        /// Comma-separated radii in [0, 1)
        #[arg(long, default_value = DEFAULT_RADII)]
        radii: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the oracle verification suites and print a pass/fail report
    Verify {
        #[arg(long, default_value = "0")]
        seed: String,
        /// Also write the report to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Comma-separated schemes: ahs, aif, xyz, urs
    #[arg(long, default_value = "ahs,aif,xyz,urs")]
    scheme: String,
    /// Loss column(s): hs, if or both
    #[arg(long, default_value = "both")]
    loss: String,
    /// Trials per sequence
    #[arg(long, default_value = "1000")]
    n_max: String,
    /// Sequences per true state
    #[arg(long, default_value = "200")]
    n_mean: String,
    /// Sampled true states (average) or directions per radius (purity-sweep)
    #[arg(long, default_value = "256")]
    n_mc: String,
    /// Trial counts to record: log20 (20 per decade) or a comma list
    #[arg(long, default_value = "log20")]
    checkpoints: String,
    /// Master seed
    #[arg(long, default_value = "0")]
    seed: String,
    /// Start each trial's likelihood maximization at the previous estimate
    #[arg(long)]
    warm_start: bool,
    /// Newton steps leaving the Bloch ball: project or abort
    #[arg(long, default_value = "project")]
    boundary: String,
    /// Worker threads; 0 uses all cores. Results do not depend on it
    #[arg(long, default_value = "0")]
    threads: String,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

/// Collects every flag error before giving up.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn take<T>(&mut self, flag: &str, r: Result<T, String>) -> Option<T> {
        r.map_err(|e| self.0.push(format!("--{flag}: {e}"))).ok()
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.trim().parse().map_err(|_| format!("invalid number '{s}'"))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',').map(parse_num).collect()
}

fn parse_schemes(s: &str) -> Result<Vec<SchemeKind>, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let k: SchemeKind = part.trim().parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

fn parse_losses(s: &str) -> Result<Vec<LossKind>, String> {
    match s {
        "both" => Ok(LossKind::ALL.to_vec()),
        other => other
            .parse::<LossKind>()
            .map(|k| vec![k])
            .map_err(|_| format!("unknown loss '{other}' (expected hs, if or both)")),
    }
}

struct Plan {
    schemes: Vec<SchemeKind>,
    base: RunConfig,
    threads: usize,
    out: PathBuf,
}

fn plan(args: &RunArgs, p: &mut Problems) -> Option<Plan> {
    let schemes = p.take("scheme", parse_schemes(&args.scheme));
    let losses = p.take("loss", parse_losses(&args.loss));
    let n_max = p.take("n-max", parse_num::<usize>(&args.n_max).and_then(positive));
    let n_mean = p.take("n-mean", parse_num::<usize>(&args.n_mean).and_then(positive));
    let n_mc = p.take("n-mc", parse_num::<usize>(&args.n_mc).and_then(positive));
    let seed = p.take("seed", parse_num::<u64>(&args.seed));
    let boundary = p.take("boundary", args.boundary.parse::<BoundaryRule>());
    let threads = p.take("threads", parse_num::<usize>(&args.threads));
    let checkpoints = match args.checkpoints.as_str() {
        "log20" => Some(None),
        list => p.take("checkpoints", parse_list::<usize>(list)).map(Some),
    };

    let (schemes, losses, n_max, n_mean, n_mc, seed, boundary, threads, checkpoints) =
        (schemes?, losses?, n_max?, n_mean?, n_mc?, seed?, boundary?, threads?, checkpoints?);
    let mut base = RunConfig::new(schemes[0], n_max);
    base.losses = losses;
    base.n_mean = n_mean;
    base.n_mc = n_mc;
    base.master_seed = seed;
    base.mle = MleConfig {
        warm_start: args.warm_start,
        boundary,
        ..MleConfig::default()
    };
    base.checkpoints = checkpoints.unwrap_or_else(|| log_checkpoints(n_max, 20));
    if let Err(ConfigError::BadCheckpoints) = base.validate() {
        p.0.push(format!("--checkpoints: {}", ConfigError::BadCheckpoints));
        return None;
    }
    Some(Plan {
        schemes,
        base,
        threads,
        out: args.out.clone(),
    })
}

fn positive(n: usize) -> Result<usize, String> {
    if n == 0 {
        Err("must be at least 1".into())
    } else {
        Ok(n)
    }
}

fn run_schemes(
    plan: &Plan,
    f: impl Fn(&RunConfig) -> Result<LossTable, ConfigError>,
) -> Result<LossTable, String> {
    let mut table = LossTable::default();
    let mut configs = Vec::new();
    for &kind in &plan.schemes {
        let mut cfg = plan.base.clone();
        cfg.scheme.kind = kind;
        let t = f(&cfg).map_err(|e| e.to_string())?;
        configs.push(t.meta.config.clone());
        table.extend(t).map_err(|e| e.to_string())?;
    }
    table.meta.seed = plan.base.master_seed;
    table.meta.config = configs.join(" | ");
    table.meta.config_hash = fnv1a(table.meta.config.as_bytes());
    Ok(table)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, String> {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| e.to_string())?;
            return Ok(pool.install(f));
        }
    }
    let _ = threads;
    Ok(f())
}

fn execute(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let mut p = Problems::default();
    let (plan, job): (Option<Plan>, Box<dyn Fn(&RunConfig) -> Result<LossTable, ConfigError> + Sync>) = match cmd {
        Command::Verify { seed, out } => {
            let Some(seed) = p.take("seed", parse_num::<u64>(&seed)) else {
                return config_error(&p, stderr);
            };
            let report = verify::run_all(seed);
            let text = report.to_string();
            let _ = write!(stdout, "{text}");
            if let Some(path) = out {
                if let Err(e) = fs::write(&path, &text) {
                    let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
                    return EXIT_RUNTIME;
                }
            }
            return if report.passed() { EXIT_OK } else { EXIT_RUNTIME };
        }
        Command::Simulate { true_state, run } => {
            let point = p.take(
                "true-state",
                parse_list::<f64>(&true_state).and_then(|v| match v[..] {
                    [r, theta, phi] if (0.0..1.0).contains(&r) => Ok(SphericalPoint { r, theta, phi }),
                    [_, _, _] => Err("radius must be in [0, 1)".into()),
                    _ => Err("expected r,theta,phi".into()),
                }),
            );
            let plan = plan(&run, &mut p);
            match point {
                Some(point) => (plan, Box::new(move |c: &RunConfig| pointwise_expected_loss(c, &point))),
                None => (None, Box::new(|c: &RunConfig| averaged_expected_loss(c))),
            }
        }
        Command::Average { measure, run } => {
            let measure = p.take("measure", measure.parse::<MeasureKind>());
            let mut plan = plan(&run, &mut p);
            if let (Some(pl), Some(m)) = (plan.as_mut(), measure) {
                pl.base.measure = match m {
                    MeasureKind::Bures => StateMeasure::bures(),
                    MeasureKind::Euclidean => StateMeasure::euclidean(),
                };
            }
            (plan, Box::new(|c: &RunConfig| averaged_expected_loss(c)))
        }
        Command::PuritySweep { radii, run } => {
            let radii = p.take(
                "radii",
                parse_list::<f64>(&radii).and_then(|v| {
                    match v.iter().find(|r| !(0.0..1.0).contains(*r)) {
                        Some(r) => Err(format!("radius {r} outside [0, 1)")),
                        None => Ok(v),
                    }
                }),
            );
            let plan = plan(&run, &mut p);
            match radii {
                Some(radii) => (plan, Box::new(move |c: &RunConfig| purity_sweep(c, &radii))),
                None => (None, Box::new(|c: &RunConfig| averaged_expected_loss(c))),
            }
        }
    };
    let plan = match plan {
        Some(plan) if p.0.is_empty() => plan,
        _ => return config_error(&p, stderr),
    };

    let mut plan = plan;
    plan.base.execution = Execution::Parallel;
    let result = with_threads(plan.threads, || run_schemes(&plan, |c| job(c))).and_then(|r| r);
    match result {
        Ok(table) => match table.write(&plan.out) {
            Ok(()) => {
                let _ = writeln!(
                    stdout,
                    "wrote {} rows to {} ({:.1}s)",
                    table.rows.len(),
                    plan.out.display(),
                    table.meta.wall_seconds
                );
                EXIT_OK
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: cannot write {}: {e}", plan.out.display());
                EXIT_RUNTIME
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn config_error(p: &Problems, stderr: &mut dyn Write) -> i32 {
    for msg in &p.0 {
        let _ = writeln!(stderr, "error: {msg}");
    }
    EXIT_CONFIG
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => execute(cli.command, stdout, stderr),
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_CONFIG
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            }
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}
