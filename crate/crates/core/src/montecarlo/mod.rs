//! Monte Carlo experiments: simulate measurement sequences, estimate after
//! every trial, and aggregate losses into expected and state-averaged
//! expected losses.
//!
//! A run is a flat list of `(state, sequence)` tasks. Each task derives its
//! random streams from `(master_seed, scheme, experiment, state, sequence)`
//! and tasks are reduced in index order, so a table is bit-identical for any
//! worker count.

mod exec;
mod table;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use exec::{derive_seed, fnv1a, map_indexed, mix64, Execution};
pub use table::{
    fit_loglog_slope, fit_points, meta_path, EstimatorStats, FitError, LossRow, LossTable,
    RunMeta, SlopeFit, TableError, CSV_HEADER,
};

use crate::designs::{next_axis, DesignState, SchemeKind, SchemeSpec};
use crate::estimator::{LikelihoodData, MleConfig};
use crate::linalg3::Vec3;
use crate::measurement::{sample_outcome, TrialRecord};
use crate::states::{loss, random_direction, sample_state, BlochVector, LossKind, StateMeasure};

const STREAM_STATES: u64 = 1;
const STREAM_OUTCOMES: u64 = 2;
const STREAM_DESIGN: u64 = 3;

/// Warm starts are pulled at least this far inside the sphere: Newton
/// steps from a boundary point cannot move tangentially without leaving
/// the ball.
pub const WARM_START_MARGIN: f64 = 1e-3;

const EXPERIMENT_POINTWISE: u64 = 11;
const EXPERIMENT_AVERAGED: u64 = 12;
const EXPERIMENT_PURITY: u64 = 13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("n_max must be at least 1")]
    ZeroTrials,
    #[error("n_mean must be at least 1")]
    ZeroSequences,
    #[error("n_mc must be at least 1")]
    ZeroStates,
    #[error("at least one loss must be selected")]
    NoLosses,
    #[error("checkpoints must be strictly increasing values in [1, n_max]")]
    BadCheckpoints,
    #[error("radius {0} outside [0, 1)")]
    BadRadius(f64),
}

/// `round(10^(k/per_decade))` for `k = 0, 1, …`, deduplicated, capped at and including `n_max`.
pub fn log_checkpoints(n_max: usize, per_decade: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut k = 0;
    loop {
        let v = 10f64.powf(k as f64 / per_decade as f64).round() as usize;
        if v > n_max {
            break;
        }
        if out.last() != Some(&v) {
            out.push(v);
        }
        k += 1;
    }
    if out.last() != Some(&n_max) {
        out.push(n_max);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: SchemeSpec,
    pub n_max: usize,
    /// Sequences per true state.
    pub n_mean: usize,
    /// Sampled true states (averaged runs) or directions per radius (purity sweeps).
    pub n_mc: usize,
    pub measure: StateMeasure,
    pub losses: Vec<LossKind>,
    pub checkpoints: Vec<usize>,
    pub master_seed: u64,
    /// Newton settings; `mle.warm_start` selects warm starts.
    pub mle: MleConfig,
    pub execution: Execution,
}

impl RunConfig {
    /// Reduced averaged-run defaults with 20 log-spaced checkpoints per decade.
    pub fn new(kind: SchemeKind, n_max: usize) -> Self {
        RunConfig {
            scheme: SchemeSpec::new(kind),
            n_max,
            n_mean: 200,
            n_mc: 256,
            measure: StateMeasure::bures(),
            losses: LossKind::ALL.to_vec(),
            checkpoints: log_checkpoints(n_max, 20),
            master_seed: 0,
            mle: MleConfig::default(),
            execution: Execution::default(),
        }
    }

    pub fn warm_start(&self) -> bool {
        self.mle.warm_start
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_max == 0 {
            return Err(ConfigError::ZeroTrials);
        }
        if self.n_mean == 0 {
            return Err(ConfigError::ZeroSequences);
        }
        if self.n_mc == 0 {
            return Err(ConfigError::ZeroStates);
        }
        if self.losses.is_empty() {
            return Err(ConfigError::NoLosses);
        }
        let ok = !self.checkpoints.is_empty()
            && self.checkpoints[0] >= 1
            && self.checkpoints.windows(2).all(|w| w[0] < w[1])
            && *self.checkpoints.last().unwrap() <= self.n_max;
        if !ok {
            return Err(ConfigError::BadCheckpoints);
        }
        Ok(())
    }

    fn echo(&self, extra: &str) -> String {
        format!(
            "scheme={} n_max={} n_mean={} n_mc={} measure={} r_max={} losses={} checkpoints={} seed={} warm_start={} boundary={} grad_tol={:e} max_iter={}{}",
            self.scheme.kind,
            self.n_max,
            self.n_mean,
            self.n_mc,
            self.measure.kind,
            self.measure.r_max(),
            self.losses.iter().map(|l| l.as_str()).collect::<Vec<_>>().join("+"),
            self.checkpoints.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
            self.master_seed,
            self.mle.warm_start,
            self.mle.boundary.as_str(),
            self.mle.grad_tol,
            self.mle.max_iter,
            extra
        )
    }
}

/// Result of simulating one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTrace {
    pub records: Vec<TrialRecord>,
    /// `(N, ŝ_N)` at each checkpoint.
    pub estimates: Vec<(usize, BlochVector)>,
    pub stats: EstimatorStats,
}

/// Run one adaptive (or fixed) measurement sequence against `s_true`.
///
/// Adaptive schemes re-estimate after every trial from the third on, since
/// the next axis depends on `ŝ_n`; fixed schemes estimate only at
/// checkpoints, which yields the same estimates under cold starts.
pub fn simulate_sequence(
    scheme: &SchemeSpec,
    s_true: &BlochVector,
    n_max: usize,
    checkpoints: &[usize],
    seed: u64,
    mle: &MleConfig,
) -> SequenceTrace {
    let mut design = DesignState::new(derive_seed(seed, &[STREAM_DESIGN]));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_OUTCOMES]));
    let mut data = LikelihoodData::new();
    let mut records = Vec::with_capacity(n_max);
    let mut estimates = Vec::with_capacity(checkpoints.len());
    let mut stats = EstimatorStats::default();
    let mut s_hat = BlochVector::ZERO;
    let mut next_cp = checkpoints.iter().copied().peekable();
    let adaptive = scheme.kind.is_adaptive();

    for n in 1..=n_max {
        let axis = next_axis(scheme, &mut design, &s_hat)
            .expect("prefix guarantees a full-rank Fisher matrix before adaptive updates");
        design.record(axis);
        let rec = TrialRecord {
            axis,
            outcome: sample_outcome(&axis, s_true, &mut rng),
            trial_index: n,
        };
        data.push(&rec);
        records.push(rec);

        let at_checkpoint = next_cp.peek() == Some(&n);
        if at_checkpoint || (adaptive && n >= 3 && n < n_max) {
            let start = if mle.warm_start {
                s_hat.clamped(1.0 - WARM_START_MARGIN)
            } else {
                BlochVector::ZERO
            };
            let sol = data.newton(mle, &start);
            stats.solves += 1;
            stats.left_ball += u64::from(sol.left_ball);
            stats.fallback_steps += sol.fallback_steps as u64;
            stats.not_converged += u64::from(!sol.converged);
            stats.newton_iterations += sol.iterations as u64;
            s_hat = sol.estimate;
        }
        if at_checkpoint {
            estimates.push((n, s_hat));
            next_cp.next();
        }
    }
    SequenceTrace {
        records,
        estimates,
        stats,
    }
}

/// Per-state aggregates: for each checkpoint and loss, the mean and sample
/// variance over that state's sequences.
struct StateSummary {
    mean: Vec<f64>,
    var: Vec<f64>,
}

struct Aggregate {
    states: Vec<StateSummary>,
    stats: EstimatorStats,
}

fn run_states(cfg: &RunConfig, experiment: u64, states: &[BlochVector]) -> Aggregate {
    let per_task = cfg.checkpoints.len() * cfg.losses.len();
    let n_mean = cfg.n_mean;
    let tasks = states.len() * n_mean;
    let results = map_indexed(cfg.execution, tasks, |t| {
        let (j, i) = (t / n_mean, t % n_mean);
        let seed = derive_seed(
            cfg.master_seed,
            &[cfg.scheme.kind.tag(), experiment, j as u64, i as u64],
        );
        let trace = simulate_sequence(&cfg.scheme, &states[j], cfg.n_max, &cfg.checkpoints, seed, &cfg.mle);
        let mut losses = Vec::with_capacity(per_task);
        for (_, est) in &trace.estimates {
            for &k in &cfg.losses {
                losses.push(loss(k, &states[j], est));
            }
        }
        (losses, trace.stats)
    });

    let mut stats = EstimatorStats::default();
    let mut summaries = Vec::with_capacity(states.len());
    for chunk in results.chunks(n_mean) {
        let mut mean = vec![0.0; per_task];
        for (losses, st) in chunk {
            stats.merge(st);
            for (m, l) in mean.iter_mut().zip(losses) {
                *m += l;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n_mean as f64);
        let mut var = vec![0.0; per_task];
        if n_mean > 1 {
            for (losses, _) in chunk {
                for ((v, l), m) in var.iter_mut().zip(losses).zip(&mean) {
                    *v += (l - m) * (l - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= (n_mean - 1) as f64);
        }
        summaries.push(StateSummary { mean, var });
    }
    Aggregate {
        states: summaries,
        stats,
    }
}

/// Mean over states and its standard error.
///
/// The spread of per-state means already contains both the between-state
/// and the within-state (sequence) variance, so its standard error is the
/// two-level error of the grand mean. A single state falls back to the
/// within-state error.
fn combine(states: &[StateSummary], idx: usize, n_mean: usize) -> (f64, f64) {
    let m = states.len() as f64;
    let grand = states.iter().map(|s| s.mean[idx]).sum::<f64>() / m;
    let stderr = if states.len() > 1 {
        let var = states
            .iter()
            .map(|s| (s.mean[idx] - grand).powi(2))
            .sum::<f64>()
            / (m - 1.0);
        (var / m).sqrt()
    } else {
        (states[0].var[idx] / n_mean as f64).sqrt()
    };
    (grand, stderr)
}

struct RowContext {
    measure: Option<crate::states::MeasureKind>,
    r: Option<f64>,
    theta: Option<f64>,
    phi: Option<f64>,
}

fn rows_for(cfg: &RunConfig, agg: &[StateSummary], ctx: &RowContext, table: &mut LossTable) {
    for (ci, &n) in cfg.checkpoints.iter().enumerate() {
        for (li, &k) in cfg.losses.iter().enumerate() {
            let (mean, stderr) = combine(agg, ci * cfg.losses.len() + li, cfg.n_mean);
            table
                .push(LossRow {
                    scheme: cfg.scheme.kind,
                    loss: k,
                    measure: ctx.measure,
                    r: ctx.r,
                    theta: ctx.theta,
                    phi: ctx.phi,
                    n,
                    mean,
                    stderr,
                    n_samples: agg.len() * cfg.n_mean,
                })
                .expect("checkpoints and losses are unique");
        }
    }
}

/// Point in spherical coordinates `r(sinθ cosφ, sinθ sinφ, cosθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    pub fn bloch(&self) -> Result<BlochVector, crate::states::StateError> {
        BlochVector::from_spherical(self.r, self.theta, self.phi)
    }
}

/// Expected loss at a fixed true state over `n_mean` sequences.
pub fn pointwise_expected_loss(cfg: &RunConfig, point: &SphericalPoint) -> Result<LossTable, ConfigError> {
    cfg.validate()?;
    let s_true = point.bloch().map_err(|_| ConfigError::BadRadius(point.r))?;
    let start = Instant::now();
    let agg = run_states(cfg, EXPERIMENT_POINTWISE, &[s_true]);
    let mut table = LossTable::default();
    rows_for(
        cfg,
        &agg.states,
        &RowContext {
            measure: None,
            r: Some(point.r),
            theta: Some(point.theta),
            phi: Some(point.phi),
        },
        &mut table,
    );
    table.meta = meta(cfg, &format!(" true_state={},{},{}", point.r, point.theta, point.phi), agg.stats, start);
    Ok(table)
}

/// The `n_mc` true states of an averaged run.
pub fn sampled_states(cfg: &RunConfig) -> Vec<BlochVector> {
    (0..cfg.n_mc)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.master_seed,
                &[cfg.scheme.kind.tag(), EXPERIMENT_AVERAGED, STREAM_STATES, j as u64],
            ));
            sample_state(&cfg.measure, &mut rng)
        })
        .collect()
}

/// Expected loss averaged over `n_mc` true states drawn from `cfg.measure`.
pub fn averaged_expected_loss(cfg: &RunConfig) -> Result<LossTable, ConfigError> {
    cfg.validate()?;
    let start = Instant::now();
    let states = sampled_states(cfg);
    let agg = run_states(cfg, EXPERIMENT_AVERAGED, &states);
    let mut table = LossTable::default();
    rows_for(
        cfg,
        &agg.states,
        &RowContext {
            measure: Some(cfg.measure.kind),
            r: None,
            theta: None,
            phi: None,
        },
        &mut table,
    );
    table.meta = meta(cfg, "", agg.stats, start);
    Ok(table)
}

/// Expected loss at each radius, averaged over `n_mc` uniform directions.
pub fn purity_sweep(cfg: &RunConfig, radii: &[f64]) -> Result<LossTable, ConfigError> {
    cfg.validate()?;
    if let Some(&r) = radii.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(ConfigError::BadRadius(r));
    }
    let start = Instant::now();
    let mut table = LossTable::default();
    let mut stats = EstimatorStats::default();
    for (ri, &r) in radii.iter().enumerate() {
        let states: Vec<BlochVector> = (0..cfg.n_mc)
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    cfg.master_seed,
                    &[cfg.scheme.kind.tag(), EXPERIMENT_PURITY, STREAM_STATES, ri as u64, j as u64],
                ));
                let dir: Vec3 = random_direction(&mut rng);
                BlochVector::new(dir * r).expect("r < 1")
            })
            .collect();
        let experiment = derive_seed(EXPERIMENT_PURITY, &[ri as u64]);
        let agg = run_states(cfg, experiment, &states);
        stats.merge(&agg.stats);
        rows_for(
            cfg,
            &agg.states,
            &RowContext {
                measure: None,
                r: Some(r),
                theta: None,
                phi: None,
            },
            &mut table,
        );
    }
    let radii_echo = radii.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";");
    table.meta = meta(cfg, &format!(" radii={radii_echo}"), stats, start);
    Ok(table)
}

fn meta(cfg: &RunConfig, extra: &str, stats: EstimatorStats, start: Instant) -> RunMeta {
    let config = cfg.echo(extra);
    RunMeta {
        seed: cfg.master_seed,
        config_hash: fnv1a(config.as_bytes()),
        config,
        stats,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}
