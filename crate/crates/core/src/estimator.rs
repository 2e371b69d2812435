//! Maximum-likelihood estimation of a Bloch vector by Newton iteration.
//!
//! The log-likelihood of data `{(aᵢ, xᵢ)}` is `ℓ(s) = Σᵢ ln ½(1 + xᵢ aᵢ·s)`;
//! it depends on each trial only through the signed axis `yᵢ = xᵢ aᵢ`, so
//! [`LikelihoodData`] stores distinct signed axes with multiplicities. Newton
//! iterates start from a caller-supplied point; what happens when a step
//! leaves the unit ball is set by [`BoundaryRule`].

use std::collections::HashMap;

use crate::linalg3::{inv_sym, pinv_sym, Sym3, Vec3};
use crate::measurement::TrialRecord;
use crate::states::{BlochVector, NORM_SLACK};

/// Floor on `1 + xᵢ aᵢ·s` inside logarithms and denominators.
pub const PROB_FLOOR: f64 = 1e-12;
/// Maximum step halvings in the singular-Hessian fallback.
const MAX_HALVINGS: usize = 20;
/// Maximum halvings in a projected step.
const MAX_BACKTRACKS: usize = 60;
/// A step along the sphere moving less than this ends the run.
const PROJECTED_MOVE_TOL: f64 = 1e-12;
/// Iterates within this relative distance of the sphere count as on it.
const SPHERE_BAND: f64 = 1e-12;

/// Component of `g` orthogonal to `s`.
fn tangential(g: &Vec3, s: &Vec3) -> Vec3 {
    let u = *s * (1.0 / s.norm());
    *g - u * g.dot(&u)
}
/// A Newton step shorter than this cannot move an iterate of norm ≤ 1.
const STALL_STEP: f64 = 4.0 * f64::EPSILON;

/// Treatment of a Newton step that lands outside the ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryRule {
    /// End the run; the last in-ball iterate is the estimate.
    Abort,
    /// Reject only the offending step: retry it halved, each time projected
    /// radially onto the ball, until `ℓ` increases; then keep iterating.
    #[default]
    Project,
}

impl BoundaryRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryRule::Abort => "abort",
            BoundaryRule::Project => "project",
        }
    }
}

impl std::str::FromStr for BoundaryRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "abort" => Ok(BoundaryRule::Abort),
            "project" => Ok(BoundaryRule::Project),
            _ => Err(format!("unknown boundary rule '{s}' (expected abort or project)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleConfig {
    /// Stop when `‖∇ℓ‖` falls to this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Start each trial's solve at the previous estimate instead of `s = 0`.
    pub warm_start: bool,
    pub ball_radius: f64,
    pub boundary: BoundaryRule,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            grad_tol: 1e-9,
            max_iter: 100,
            warm_start: false,
            ball_radius: 1.0,
            boundary: BoundaryRule::default(),
        }
    }
}

/// Value, gradient and Hessian of the log-likelihood at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodEval {
    pub value: f64,
    pub gradient: Vec3,
    pub hessian: Sym3,
}

/// Newton run summary, without the likelihood value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSolution {
    pub estimate: BlochVector,
    pub iterations: usize,
    pub converged: bool,
    /// Some Newton step left the ball (and ended the run under [`BoundaryRule::Abort`]).
    pub left_ball: bool,
    /// Number of singular-Hessian fallback steps taken.
    pub fallback_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleResult {
    pub estimate: BlochVector,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub left_ball: bool,
    pub fallback_steps: usize,
}

/// Reference evaluation straight from the trial records.
pub fn log_likelihood(data: &[TrialRecord], s: &Vec3) -> LikelihoodEval {
    let mut value = 0.0;
    let mut gradient = Vec3::ZERO;
    let mut hessian = Sym3::ZERO;
    for rec in data {
        let y = rec.signed_axis();
        let d = (1.0 + y.dot(s)).max(PROB_FLOOR);
        value += (0.5 * d).ln();
        gradient += y * (1.0 / d);
        hessian = hessian - Sym3::outer(&y).scale(1.0 / (d * d));
    }
    LikelihoodEval {
        value,
        gradient,
        hessian,
    }
}

/// Signed axes with multiplicities, stored column-wise.
#[derive(Debug, Clone, Default)]
pub struct LikelihoodData {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    index: HashMap<[u64; 3], usize>,
    trials: usize,
}

impl LikelihoodData {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(data: &[TrialRecord]) -> Self {
        let mut out = Self::new();
        for rec in data {
            out.push(rec);
        }
        out
    }

    pub fn push(&mut self, rec: &TrialRecord) {
        // +0.0 folds −0.0 so that e.g. (−1, −0, −0) and (−1, 0, 0) merge.
        let v = rec.signed_axis() + Vec3::ZERO;
        let key = [v[0].to_bits(), v[1].to_bits(), v[2].to_bits()];
        self.trials += 1;
        if let Some(&i) = self.index.get(&key) {
            self.w[i] += 1.0;
            return;
        }
        self.index.insert(key, self.w.len());
        self.x.push(v[0]);
        self.y.push(v[1]);
        self.z.push(v[2]);
        self.w.push(1.0);
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    /// Number of distinct signed axes.
    pub fn distinct(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials == 0
    }

    pub fn value(&self, s: &Vec3) -> f64 {
        let [s0, s1, s2] = s.0;
        let mut v = 0.0;
        for i in 0..self.w.len() {
            let d = (1.0 + self.x[i] * s0 + self.y[i] * s1 + self.z[i] * s2).max(PROB_FLOOR);
            v += self.w[i] * (0.5 * d).ln();
        }
        v
    }

    /// Gradient and Hessian (no logarithms).
    pub fn derivatives(&self, s: &Vec3) -> (Vec3, Sym3) {
        let [s0, s1, s2] = s.0;
        let (mut gx, mut gy, mut gz) = (0.0, 0.0, 0.0);
        let (mut hxx, mut hxy, mut hxz, mut hyy, mut hyz, mut hzz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let n = self.w.len();
        let (xs, ys, zs, ws) = (&self.x[..n], &self.y[..n], &self.z[..n], &self.w[..n]);
        for i in 0..n {
            let (x, y, z) = (xs[i], ys[i], zs[i]);
            let d = (1.0 + x * s0 + y * s1 + z * s2).max(PROB_FLOOR);
            let r = ws[i] / d;
            let r2 = r / d;
            gx += r * x;
            gy += r * y;
            gz += r * z;
            hxx += r2 * x * x;
            hxy += r2 * x * y;
            hxz += r2 * x * z;
            hyy += r2 * y * y;
            hyz += r2 * y * z;
            hzz += r2 * z * z;
        }
        (
            Vec3::new(gx, gy, gz),
            Sym3::new(-hxx, -hxy, -hxz, -hyy, -hyz, -hzz),
        )
    }

    pub fn evaluate(&self, s: &Vec3) -> LikelihoodEval {
        let (gradient, hessian) = self.derivatives(s);
        LikelihoodEval {
            value: self.value(s),
            gradient,
            hessian,
        }
    }

    /// Newton–Raphson from `start`.
    pub fn newton(&self, cfg: &MleConfig, start: &BlochVector) -> NewtonSolution {
        let radius = cfg.ball_radius + NORM_SLACK;
        let mut s = start.vec();
        let mut sol = NewtonSolution {
            estimate: *start,
            iterations: 0,
            converged: self.is_empty(),
            left_ball: false,
            fallback_steps: 0,
        };
        if self.is_empty() {
            return sol;
        }

        let project = cfg.boundary == BoundaryRule::Project;
        loop {
            let (g, h) = self.derivatives(&s);
            let on_sphere = project
                && s.norm() >= cfg.ball_radius * (1.0 - SPHERE_BAND)
                && g.dot(&s) > 0.0;
            let stationary = if on_sphere {
                tangential(&g, &s).norm() <= cfg.grad_tol * g.norm().max(1.0)
            } else {
                g.norm() <= cfg.grad_tol
            };
            if stationary {
                sol.converged = true;
                break;
            }
            if sol.iterations >= cfg.max_iter {
                break;
            }
            sol.iterations += 1;
            if on_sphere {
                match self.sphere_step(&s, &g, &h, cfg.ball_radius) {
                    Some(next) => {
                        let moved = (next - s).norm();
                        s = next;
                        if moved <= PROJECTED_MOVE_TOL {
                            sol.converged = true;
                            break;
                        }
                        continue;
                    }
                    None => break,
                }
            }
            match inv_sym(&h) {
                Ok(hinv) => {
                    let step = -hinv.mul_vec(&g);
                    let candidate = s + step;
                    if candidate.norm() <= radius {
                        s = candidate;
                        if step.norm() <= STALL_STEP {
                            sol.converged = true;
                            break;
                        }
                        continue;
                    }
                    sol.left_ball = true;
                    if !project {
                        break;
                    }
                    match self.projected_step(&s, &step, cfg.ball_radius) {
                        Some(next) => s = next,
                        None => break,
                    }
                }
                Err(_) => {
                    sol.fallback_steps += 1;
                    match self.fallback_step(&s, &g, &h, radius) {
                        Some(next) => s = next,
                        None => break,
                    }
                }
            }
        }
        sol.estimate = BlochVector::new(s).unwrap_or_else(|_| start.clamped(cfg.ball_radius));
        sol
    }

    /// Newton step for `ℓ` restricted to the sphere of radius `r`, from `s`
    /// on it: the tangent-space Hessian is shifted by the multiplier
    /// `μ = g·s/r²`, the step is retracted radially and halved until `ℓ`
    /// increases.
    fn sphere_step(&self, s: &Vec3, g: &Vec3, h: &Sym3, r: f64) -> Option<Vec3> {
        let u = *s * (1.0 / s.norm());
        let p = Sym3::IDENTITY - Sym3::outer(&u);
        let mu = g.dot(s) / (r * r);
        let reduced = p.sandwich(&(*h - Sym3::scaled_identity(mu)));
        let gt = p.mul_vec(g);
        let mut step = -pinv_sym(&reduced).mul_vec(&gt);
        if !(step.dot(&gt) > 0.0) {
            step = gt;
        }
        let base = self.value(s);
        let mut t = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let moved = *s + step * t;
            let candidate = moved * (r / moved.norm());
            if self.value(&candidate) > base {
                return Some(candidate);
            }
            t *= 0.5;
        }
        None
    }

    /// First `P(s + 2⁻ᵏ·step)`, `k ≥ 0`, that increases `ℓ`, where `P` is
    /// radial projection onto the ball of radius `r`.
    fn projected_step(&self, s: &Vec3, step: &Vec3, r: f64) -> Option<Vec3> {
        let base = self.value(s);
        let mut t = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let mut candidate = *s + *step * t;
            let n = candidate.norm();
            if n > r {
                candidate = candidate * (r / n);
            }
            if self.value(&candidate) > base {
                return Some(candidate);
            }
            t *= 0.5;
        }
        None
    }

    /// Ascent step for a singular Hessian: pseudo-inverse Newton direction if
    /// it ascends, else the gradient; step halved until it stays in the ball
    /// and increases `ℓ`.
    fn fallback_step(&self, s: &Vec3, g: &Vec3, h: &Sym3, radius: f64) -> Option<Vec3> {
        let newton_dir = -pinv_sym(h).mul_vec(g);
        let dir = if newton_dir.dot(g) > 0.0 { newton_dir } else { *g };
        let base = self.value(s);
        let mut t = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let candidate = *s + dir * t;
            if candidate.norm() <= radius && self.value(&candidate) > base {
                return Some(candidate);
            }
            t *= 0.5;
        }
        None
    }

    pub fn mle(&self, cfg: &MleConfig, start: &BlochVector) -> MleResult {
        let sol = self.newton(cfg, start);
        MleResult {
            estimate: sol.estimate,
            iterations: sol.iterations,
            converged: sol.converged,
            log_likelihood: self.value(&sol.estimate.vec()),
            left_ball: sol.left_ball,
            fallback_steps: sol.fallback_steps,
        }
    }
}

/// Maximum-likelihood estimate from `start`; empty data returns `start`.
pub fn mle(data: &[TrialRecord], cfg: &MleConfig, start: &BlochVector) -> MleResult {
    LikelihoodData::from_records(data).mle(cfg, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{sample_outcome, MeasurementAxis, Outcome};
    use crate::states::{random_direction, sample_state, StateMeasure};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn records(spec: &[(usize, Outcome, usize)]) -> Vec<TrialRecord> {
        let mut out = Vec::new();
        for &(axis, outcome, count) in spec {
            for _ in 0..count {
                out.push(TrialRecord {
                    axis: MeasurementAxis::basis(axis),
                    outcome,
                    trial_index: out.len() + 1,
                });
            }
        }
        out
    }

    fn random_data(seed: u64, n: usize, truth: &BlochVector) -> Vec<TrialRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let axis = MeasurementAxis::new(random_direction(&mut rng)).unwrap();
                TrialRecord {
                    axis,
                    outcome: sample_outcome(&axis, truth, &mut rng),
                    trial_index: i + 1,
                }
            })
            .collect()
    }

    /// Maximize a 1-D concave function on [lo, hi] by grid search plus
    /// golden-section refinement.
    fn grid_argmax_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 2000;
        let mut best = lo;
        for k in 0..=n {
            let t = lo + (hi - lo) * k as f64 / n as f64;
            if f(t) > f(best) {
                best = t;
            }
        }
        let step = (hi - lo) / n as f64;
        let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) >= f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn likelihood_single_term() {
        let data = records(&[(2, Outcome::Plus, 1)]);
        let ev = log_likelihood(&data, &Vec3::ZERO);
        assert_eq!(ev.value, 0.5f64.ln());
        assert_eq!(ev.gradient, Vec3::basis(2));
    }

    #[test]
    fn likelihood_symmetric_data_has_zero_gradient() {
        let data = records(&[(2, Outcome::Plus, 1), (2, Outcome::Minus, 1)]);
        assert_eq!(log_likelihood(&data, &Vec3::ZERO).gradient.norm(), 0.0);
    }

    #[test]
    fn compact_store_matches_reference() {
        let truth = BlochVector::from_xyz(0.2, -0.3, 0.5).unwrap();
        let mut data = random_data(4, 300, &truth);
        data.extend(records(&[(0, Outcome::Plus, 7), (0, Outcome::Minus, 4), (1, Outcome::Minus, 3)]));
        let compact = LikelihoodData::from_records(&data);
        assert_eq!(compact.trials(), data.len());
        assert_eq!(compact.distinct(), 303);
        let s = Vec3::new(0.1, 0.1, -0.2);
        let a = log_likelihood(&data, &s);
        let b = compact.evaluate(&s);
        assert!((a.value - b.value).abs() <= 1e-10);
        assert!(a.gradient.max_abs_diff(&b.gradient) <= 1e-10);
        assert!(a.hessian.max_abs_diff(&b.hessian) <= 1e-10);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let measure = StateMeasure::new(crate::states::MeasureKind::Euclidean, 0.9).unwrap();
        for seed in 0..50 {
            let truth = sample_state(&measure, &mut rng);
            let data = random_data(seed, 40, &truth);
            let s = sample_state(&measure, &mut rng).vec() * 0.5;
            let ev = log_likelihood(&data, &s);
            let h = 1e-6;
            for k in 0..3 {
                let e = Vec3::basis(k) * h;
                let fd = (log_likelihood(&data, &(s + e)).value - log_likelihood(&data, &(s - e)).value)
                    / (2.0 * h);
                assert!((fd - ev.gradient[k]).abs() <= 1e-5, "{fd} vs {}", ev.gradient[k]);
            }
            for k in 0..3 {
                let e = Vec3::basis(k) * h;
                let gp = log_likelihood(&data, &(s + e)).gradient;
                let gm = log_likelihood(&data, &(s - e)).gradient;
                for j in 0..3 {
                    let fd = (gp[j] - gm[j]) / (2.0 * h);
                    assert!((fd - ev.hessian.get(j, k)).abs() <= 1e-4);
                }
            }
        }
    }

    #[test]
    fn single_axis_counts() {
        let data = records(&[(2, Outcome::Plus, 7), (2, Outcome::Minus, 3)]);
        let oracle = grid_argmax_1d(
            |t| log_likelihood(&data, &Vec3::new(0.0, 0.0, t)).value,
            -1.0,
            1.0,
        );
        assert!((oracle - 0.4).abs() < 1e-7);
        let res = mle(&data, &MleConfig::default(), &BlochVector::ZERO);
        assert!(res.estimate.vec().max_abs_diff(&Vec3::new(0.0, 0.0, oracle)) <= 1e-6);
        assert!(res.fallback_steps > 0);
        assert!(res.log_likelihood.is_finite());
    }

    #[test]
    fn orthogonal_axes_factorize() {
        let data = records(&[
            (0, Outcome::Plus, 8),
            (0, Outcome::Minus, 2),
            (1, Outcome::Plus, 6),
            (1, Outcome::Minus, 4),
            (2, Outcome::Plus, 5),
            (2, Outcome::Minus, 5),
        ]);
        // Coordinate-wise oracle: the likelihood is a sum of per-axis terms.
        let oracle = Vec3::new(
            grid_argmax_1d(|t| log_likelihood(&data, &Vec3::new(t, 0.0, 0.0)).value, -0.99, 0.99),
            grid_argmax_1d(|t| log_likelihood(&data, &Vec3::new(0.0, t, 0.0)).value, -0.99, 0.99),
            grid_argmax_1d(|t| log_likelihood(&data, &Vec3::new(0.0, 0.0, t)).value, -0.99, 0.99),
        );
        assert!(oracle.max_abs_diff(&Vec3::new(0.6, 0.2, 0.0)) < 1e-7);
        let res = mle(&data, &MleConfig::default(), &BlochVector::ZERO);
        assert!(res.converged);
        assert!(res.estimate.vec().max_abs_diff(&oracle) <= 1e-6);
    }

    #[test]
    fn single_outcome_lands_on_the_boundary() {
        let data = records(&[(2, Outcome::Plus, 1)]);
        let oracle = grid_argmax_1d(|t| log_likelihood(&data, &Vec3::new(0.0, 0.0, t)).value, -1.0, 1.0);
        assert!((oracle - 1.0).abs() < 1e-6);
        let res = mle(&data, &MleConfig::default(), &BlochVector::ZERO);
        assert!(res.estimate.vec().max_abs_diff(&Vec3::basis(2)) <= 1e-12);
        // Gradient along +e₃ is normal to the sphere: a boundary stationary point.
        assert!(res.converged);
    }

    #[test]
    fn empty_data_returns_start() {
        let start = BlochVector::from_xyz(0.1, 0.2, 0.3).unwrap();
        let res = mle(&[], &MleConfig::default(), &start);
        assert_eq!(res.estimate, start);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn step_out_of_ball_keeps_previous_iterate() {
        // All-plus outcomes on three axes: the unconstrained maximizer is
        // outside the ball. The first Newton step from 0 is (1,1,1).
        let data = records(&[(0, Outcome::Plus, 5), (1, Outcome::Plus, 5), (2, Outcome::Plus, 5)]);
        let abort = MleConfig {
            boundary: BoundaryRule::Abort,
            ..MleConfig::default()
        };
        let res = mle(&data, &abort, &BlochVector::ZERO);
        assert!(res.left_ball && !res.converged);
        assert_eq!(res.estimate, BlochVector::ZERO);

        let res = mle(&data, &MleConfig::default(), &BlochVector::ZERO);
        assert!(res.left_ball);
        let diag = Vec3::new(1.0, 1.0, 1.0) * (1.0 / 3f64.sqrt());
        assert!(res.estimate.vec().max_abs_diff(&diag) < 1e-6, "{:?}", res.estimate);
    }

    fn ball_grid() -> Vec<Vec3> {
        // 26 points: the 3×3×3 lattice {−½,0,½}³ minus the origin, pulled into the ball.
        let mut pts = Vec::new();
        for i in -1..=1 {
            for j in -1..=1 {
                for k in -1..=1 {
                    if (i, j, k) != (0, 0, 0) {
                        let v = Vec3::new(i as f64, j as f64, k as f64);
                        pts.push(v * (0.9 / v.norm()));
                    }
                }
            }
        }
        pts
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn estimate_stays_in_ball_and_beats_grid(seed in 0u64..100_000, n in 5usize..120) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = sample_state(&StateMeasure::new(crate::states::MeasureKind::Euclidean, 0.8).unwrap(), &mut rng);
            let data = random_data(seed.wrapping_add(1), n, &truth);
            let compact = LikelihoodData::from_records(&data);
            let res = compact.mle(&MleConfig::default(), &BlochVector::ZERO);
            prop_assert!(res.estimate.norm() <= 1.0);
            prop_assert!(res.log_likelihood.is_finite());
            if res.converged && !res.left_ball {
                for p in ball_grid() {
                    prop_assert!(res.log_likelihood >= compact.value(&p) - 1e-9);
                }
                if res.estimate.norm() < 1.0 - 1e-6 {
                    prop_assert!(compact.derivatives(&res.estimate.vec()).0.norm() <= 10.0 * 1e-9);
                }
            }
        }

        #[test]
        fn warm_and_cold_starts_agree(seed in 0u64..100_000, n in 20usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = sample_state(&StateMeasure::new(crate::states::MeasureKind::Euclidean, 0.7).unwrap(), &mut rng);
            let data = LikelihoodData::from_records(&random_data(seed ^ 0x55, n, &truth));
            let cfg = MleConfig::default();
            let cold = data.newton(&cfg, &BlochVector::ZERO);
            let warm_start = sample_state(&StateMeasure::new(crate::states::MeasureKind::Euclidean, 0.5).unwrap(), &mut rng);
            let warm = data.newton(&MleConfig { warm_start: true, ..cfg }, &warm_start);
            if cold.converged && warm.converged {
                prop_assert!(cold.estimate.vec().max_abs_diff(&warm.estimate.vec()) <= 1e-6);
            }
        }
    }
}
