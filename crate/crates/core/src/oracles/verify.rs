//! Seeded verification suites with a plain-text pass/fail report.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::density::density_loss_oracle;
use super::enumeration::{
    conditional_fisher_identity, cramer_rao_check, cyclic_rule, mle_estimator, scheme_rule,
    single_axis_estimator, true_false_counterexample, EnumeratedDesign, History, OracleError,
};
use super::grid::{direct_objective, grid_objective_min, SphereGrid};
use crate::designs::{aopt_axis, aopt_axis_general, SchemeKind, SchemeSpec};
use crate::estimator::{LikelihoodData, MleConfig};
use crate::fisher::FisherAccumulator;
use crate::linalg3::{inv_sym, Sym3, Vec3};
use crate::measurement::{sample_outcome, MeasurementAxis, TrialRecord};
use crate::montecarlo::derive_seed;
use crate::states::{
    loss, random_direction, sample_state, weight_matrix, weight_matrix_inv, BlochVector, LossKind,
    MeasureKind, StateMeasure,
};

/// One checked quantity against its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `true` if `value` must be at most `threshold`, `false` for at least.
    pub upper: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            upper: true,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            upper: false,
        }
    }

    pub fn passed(&self) -> bool {
        if self.upper {
            self.value <= self.threshold
        } else {
            self.value >= self.threshold
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} {} {:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            if self.upper { "<=" } else { ">=" },
            self.threshold
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

fn rng_for(seed: u64, suite: u64, i: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[suite, i]))
}

fn uniform_in_ball<R: Rng>(rng: &mut R, r_max: f64) -> BlochVector {
    let r = r_max * rng.random::<f64>().cbrt();
    BlochVector::new(random_direction(rng) * r).expect("inside ball")
}

/// `M Mᵀ + εI` with Gaussian `M`: a generic full-rank PSD matrix.
fn random_fisher<R: Rng>(rng: &mut R) -> Sym3 {
    let mut m = [[0.0; 3]; 3];
    for row in m.iter_mut() {
        for x in row.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
    }
    let mut f = Sym3::scaled_identity(1e-2);
    for k in 0..3 {
        f += Sym3::outer(&Vec3::new(m[0][k], m[1][k], m[2][k]));
    }
    f.scale(1.0 + 20.0 * rng.random::<f64>())
}

fn random_records<R: Rng>(rng: &mut R, n: usize, truth: &BlochVector) -> Vec<TrialRecord> {
    (0..n)
        .map(|i| {
            let axis = MeasurementAxis::new(random_direction(rng)).expect("unit");
            TrialRecord {
                axis,
                outcome: sample_outcome(&axis, truth, rng),
                trial_index: i + 1,
            }
        })
        .collect()
}

/// Analytic A-optimal axes against the grid, and the two HS code paths.
pub fn optimal_axis_suite(instances: usize, seed: u64) -> Report {
    let grid = SphereGrid::default();
    let mut report = Report::default();
    for kind in LossKind::ALL {
        let mut worst_excess = f64::NEG_INFINITY;
        let mut path_gap: f64 = 0.0;
        for i in 0..instances {
            let mut rng = rng_for(seed, 1 + kind as u64, i as u64);
            let f = random_fisher(&mut rng);
            let s = uniform_in_ball(&mut rng, 0.99);
            let weight = weight_matrix(kind, &s);
            let acc = FisherAccumulator::from_matrix(f, 3);
            let axis = aopt_axis(&acc, &s, kind).expect("full rank");
            let analytic = direct_objective(&f, &s, &weight, &axis.vec());
            let (_, grid_min) = grid_objective_min(&f, &s, &weight, &grid);
            worst_excess = worst_excess.max((analytic - grid_min) / grid_min.abs());
            if kind == LossKind::Hs {
                let general = aopt_axis_general(&acc, &s, &weight_matrix_inv(LossKind::Hs, &s)).expect("full rank");
                path_gap = path_gap.max(axis.vec().max_abs_diff(&general.vec()));
            }
        }
        report.checks.push(Check::at_most(
            format!("optimal axis {} analytic objective excess over grid minimum (relative)", kind),
            worst_excess,
            1e-6,
        ));
        if kind == LossKind::Hs {
            report
                .checks
                .push(Check::at_most("optimal axis hs simplified vs general axis", path_gap, 1e-10));
        }
    }
    report
}

/// Generalized Cramér–Rao inequality on enumerated designs.
pub fn cramer_rao_suite(configs: usize, seed: u64) -> Report {
    let cfg = MleConfig::default();
    let mut worst = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut singular = 0usize;
    for i in 0..configs {
        let mut rng = rng_for(seed, 10, i as u64);
        let n = rng.random_range(3..=8usize);
        let truth = uniform_in_ball(&mut rng, 0.95);
        let kind = [SchemeKind::Xyz, SchemeKind::Ahs, SchemeKind::Aif, SchemeKind::Urs][i % 4];
        let weight = weight_matrix(if rng.random::<bool>() { LossKind::Hs } else { LossKind::If }, &truth);
        let design = if kind == SchemeKind::Urs {
            // A fixed random tail after the σ₁σ₂σ₃ prefix.
            let mut axes: Vec<_> = (0..3).map(MeasurementAxis::basis).collect();
            axes.extend((3..n).map(|_| MeasurementAxis::new(random_direction(&mut rng)).expect("unit")));
            EnumeratedDesign::enumerate(n, truth, cyclic_rule(axes), mle_estimator(cfg))
        } else {
            EnumeratedDesign::enumerate(n, truth, scheme_rule(SchemeSpec::new(kind), cfg), mle_estimator(cfg))
        }
        .expect("n within cap");
        match cramer_rao_check(&design, &weight) {
            Ok(cr) => {
                worst = worst.min(cr.psd_margin);
                gap = gap.min(cr.lhs - cr.rhs);
            }
            Err(OracleError::SingularF(_)) => singular += 1,
            Err(e) => panic!("{e}"),
        }
    }
    let truth = BlochVector::from_xyz(0.1, 0.4, -0.5).expect("inside ball");
    let a = MeasurementAxis::basis(2);
    let design = EnumeratedDesign::enumerate(6, truth, cyclic_rule(vec![a]), single_axis_estimator(a))
        .expect("n within cap");
    let g = design.moments().g;
    let mut g_err: f64 = 0.0;
    for (i, row) in g.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let want = if i == 2 && j == 2 { 1.0 } else { 0.0 };
            g_err = g_err.max((x - want).abs());
        }
    }
    Report {
        checks: vec![
            Check::at_least(format!("cramer-rao min eig(E - G'F^-1 G) over {configs} designs"), worst, -1e-9),
            Check::at_least("cramer-rao min tr[HE] - tr[HG'F^-1G]", gap, -1e-9),
            Check::at_most("cramer-rao designs with singular F", singular as f64, 0.0),
            Check::at_most("cramer-rao unbiased estimator G vs projector", g_err, 1e-12),
        ],
    }
}

/// Conditional-Fisher identity for adaptive rules and the T/F example.
pub fn conditional_fisher_suite(max_trials: usize, seed: u64) -> Report {
    let cfg = MleConfig::default();
    let mut report = Report::default();
    for kind in [SchemeKind::Ahs, SchemeKind::Aif] {
        let mut worst: f64 = 0.0;
        for (i, n) in (3..=max_trials).enumerate() {
            let mut rng = rng_for(seed, 20 + kind as u64, i as u64);
            let truth = uniform_in_ball(&mut rng, 0.9);
            let design =
                EnumeratedDesign::enumerate(n, truth, scheme_rule(SchemeSpec::new(kind), cfg), |_: &History| Vec3::ZERO)
                    .expect("n within cap");
            worst = worst.max(conditional_fisher_identity(&design));
        }
        report.checks.push(Check::at_most(
            format!("conditional fisher identity {} N<={max_trials}", kind),
            worst,
            1e-9,
        ));
    }
    let mut rng = rng_for(seed, 30, 0);
    let truth = uniform_in_ball(&mut rng, 0.9);
    let tf = true_false_counterexample(9, truth).expect("n within cap");
    report
        .checks
        .push(Check::at_most("true/false example eig(F_9) vs eig(F~_T)/2", tf.eigen_residual, 1e-9));
    report
        .checks
        .push(Check::at_most("true/false example |F~_F|", tf.f_branch.frobenius_norm(), 0.0));
    report
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic and asymptotic p-value.
pub fn ks_test(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

/// Gradient, loss, rank-1 update and sampler checks.
pub fn numerical_suite(seed: u64) -> Report {
    let mut grad_err: f64 = 0.0;
    for i in 0..200u64 {
        let mut rng = rng_for(seed, 40, i);
        let truth = uniform_in_ball(&mut rng, 0.9);
        let n = rng.random_range(5..200usize);
        let data = LikelihoodData::from_records(&random_records(&mut rng, n, &truth));
        let s = uniform_in_ball(&mut rng, 0.8).vec();
        let (g, _) = data.derivatives(&s);
        let h = 1e-6;
        for k in 0..3 {
            let e = Vec3::basis(k) * h;
            let fd = (data.value(&(s + e)) - data.value(&(s - e))) / (2.0 * h);
            grad_err = grad_err.max((fd - g[k]).abs());
        }
    }

    let mut loss_err: f64 = 0.0;
    for i in 0..10_000u64 {
        let mut rng = rng_for(seed, 41, i);
        let s = uniform_in_ball(&mut rng, 0.999);
        let t = uniform_in_ball(&mut rng, 0.999);
        for kind in LossKind::ALL {
            loss_err = loss_err.max((density_loss_oracle(kind, &s, &t) - loss(kind, &s, &t)).abs());
        }
    }

    let mut sm_err: f64 = 0.0;
    for i in 0..100u64 {
        let mut rng = rng_for(seed, 42, i);
        let s = uniform_in_ball(&mut rng, 0.95);
        let mut acc = FisherAccumulator::new();
        for _ in 0..rng.random_range(3..1500usize) {
            acc.accumulate(&MeasurementAxis::new(random_direction(&mut rng)).expect("unit"), &s);
            if let (Some(inv), Ok(direct)) = (acc.inverse(), inv_sym(acc.matrix())) {
                let scale = direct.frobenius_norm().max(1.0);
                sm_err = sm_err.max(inv.max_abs_diff(&direct) / scale);
            }
        }
    }

    let measure = StateMeasure::bures();
    let mut rng = rng_for(seed, 43, 0);
    let states: Vec<BlochVector> = (0..20_000).map(|_| sample_state(&measure, &mut rng)).collect();
    let cap = measure.r_max();
    let angular = |r: f64| {
        let t = r.clamp(0.0, 1.0).asin();
        (2.0 / PI) * (t - t.sin() * t.cos())
    };
    let (_, p_radius) = ks_test(states.iter().map(|s| s.norm()).collect(), |r| angular(r) / angular(cap));
    let (_, p_polar) = ks_test(
        states.iter().filter(|s| s.norm() > 0.0).map(|s| s.vec()[2] / s.norm()).collect(),
        |z| 0.5 * (z.clamp(-1.0, 1.0) + 1.0),
    );
    let mut rng = rng_for(seed, 44, 0);
    let euclid = StateMeasure::new(MeasureKind::Euclidean, 1.0).expect("valid cap");
    let (_, p_euclid) = ks_test((0..20_000).map(|_| sample_state(&euclid, &mut rng).norm()).collect(), |r| {
        r.clamp(0.0, 1.0).powi(3)
    });

    Report {
        checks: vec![
            Check::at_most("mle gradient vs central differences", grad_err, 1e-5),
            Check::at_most("bloch losses vs density-matrix oracle", loss_err, 1e-10),
            Check::at_most("sherman-morrison vs direct inverse (relative)", sm_err, 1e-8),
            Check::at_least("bures radius KS p-value", p_radius, 1e-3),
            Check::at_least("bures direction KS p-value", p_polar, 1e-3),
            Check::at_least("euclidean radius KS p-value", p_euclid, 1e-3),
        ],
    }
}

/// Every suite at acceptance sizes.
pub fn run_all(seed: u64) -> Report {
    let mut report = optimal_axis_suite(1000, seed);
    report.extend(cramer_rao_suite(50, seed));
    report.extend(conditional_fisher_suite(10, seed));
    report.extend(numerical_suite(seed));
    report
}
