//! Qubit states as Bloch vectors, the two loss functions and their local
//! quadratic weights, and sampling of true states from the Bures and
//! Euclidean distributions on the Bloch ball.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg3::{Sym3, Vec3};

/// Norm overshoot tolerated (and renormalized) by [`BlochVector::new`].
pub const NORM_SLACK: f64 = 1e-12;
/// Radius cap applied to `H^IF` before inversion-free evaluation.
pub const IF_WEIGHT_CLAMP: f64 = 1.0 - 1e-6;
/// Default cap on sampled true-state radii.
pub const DEFAULT_R_MAX: f64 = 1.0 - 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("Bloch vector norm {0} exceeds 1")]
    OutsideBall(f64),
    #[error("Bloch vector has non-finite components")]
    NonFinite,
    #[error("radius cap must lie in (0, 1], got {0}")]
    BadRadiusCap(f64),
}

/// A qubit state `ρ(s) = ½(𝟙 + s·σ)` with `‖s‖ ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlochVector(Vec3);

impl BlochVector {
    pub const ZERO: BlochVector = BlochVector(Vec3::ZERO);

    pub fn new(v: Vec3) -> Result<Self, StateError> {
        if !v.is_finite() {
            return Err(StateError::NonFinite);
        }
        let n = v.norm();
        if n > 1.0 + NORM_SLACK {
            return Err(StateError::OutsideBall(n));
        }
        if n > 1.0 {
            // Division can round back above 1; shave ulps until it doesn't.
            let mut w = v * (1.0 / n);
            while w.norm() > 1.0 {
                w = w * (1.0 - f64::EPSILON);
            }
            return Ok(BlochVector(w));
        }
        Ok(BlochVector(v))
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Result<Self, StateError> {
        BlochVector::new(Vec3::new(x, y, z))
    }

    /// `r (sinθ cosφ, sinθ sinφ, cosθ)`.
    pub fn from_spherical(r: f64, theta: f64, phi: f64) -> Result<Self, StateError> {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        BlochVector::new(Vec3::new(r * st * cp, r * st * sp, r * ct))
    }

    pub fn vec(&self) -> Vec3 {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Radially shrink to at most `radius`.
    pub fn clamped(&self, radius: f64) -> BlochVector {
        let n = self.norm();
        if n > radius {
            BlochVector(self.0 * (radius / n))
        } else {
            *self
        }
    }
}

impl TryFrom<Vec3> for BlochVector {
    type Error = StateError;
    fn try_from(v: Vec3) -> Result<Self, StateError> {
        BlochVector::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    /// Squared Hilbert–Schmidt distance.
    Hs,
    /// Infidelity.
    If,
}

impl LossKind {
    pub const ALL: [LossKind; 2] = [LossKind::Hs, LossKind::If];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Hs => "hs",
            LossKind::If => "if",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hs" => Ok(LossKind::Hs),
            "if" => Ok(LossKind::If),
            other => Err(format!("unknown loss '{other}' (expected hs or if)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasureKind {
    Bures,
    Euclidean,
}

impl MeasureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasureKind::Bures => "bures",
            MeasureKind::Euclidean => "euclid",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bures" => Ok(MeasureKind::Bures),
            "euclid" | "euclidean" => Ok(MeasureKind::Euclidean),
            other => Err(format!("unknown measure '{other}' (expected bures or euclid)")),
        }
    }
}

/// A distribution of true states on the Bloch ball, truncated at `r_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMeasure {
    pub kind: MeasureKind,
    r_max: f64,
}

impl StateMeasure {
    pub fn new(kind: MeasureKind, r_max: f64) -> Result<Self, StateError> {
        if !(r_max > 0.0 && r_max <= 1.0) {
            return Err(StateError::BadRadiusCap(r_max));
        }
        Ok(StateMeasure { kind, r_max })
    }

    pub fn bures() -> Self {
        StateMeasure {
            kind: MeasureKind::Bures,
            r_max: DEFAULT_R_MAX,
        }
    }

    pub fn euclidean() -> Self {
        StateMeasure {
            kind: MeasureKind::Euclidean,
            r_max: DEFAULT_R_MAX,
        }
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Radial CDF before truncation.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        match self.kind {
            MeasureKind::Bures => bures_radial_cdf(r),
            MeasureKind::Euclidean => r.clamp(0.0, 1.0).powi(3),
        }
    }
}

pub fn loss(kind: LossKind, s: &BlochVector, t: &BlochVector) -> f64 {
    match kind {
        LossKind::Hs => 0.25 * (s.vec() - t.vec()).norm_sq(),
        LossKind::If => {
            let purity_term = ((1.0 - s.vec().norm_sq()).max(0.0)
                * (1.0 - t.vec().norm_sq()).max(0.0))
            .sqrt();
            (0.5 * (1.0 - s.vec().dot(&t.vec()) - purity_term)).max(0.0)
        }
    }
}

/// Local quadratic weight `H(s)` of the loss around `s`.
pub fn weight_matrix(kind: LossKind, s: &BlochVector) -> Sym3 {
    match kind {
        LossKind::Hs => Sym3::scaled_identity(0.25),
        LossKind::If => {
            let v = s.clamped(IF_WEIGHT_CLAMP).vec();
            let denom = 1.0 - v.norm_sq();
            (Sym3::IDENTITY + Sym3::outer(&v).scale(1.0 / denom)).scale(0.25)
        }
    }
}

/// `H(s)⁻¹` in closed form; for infidelity this is `4(I − ssᵀ)` at the unclamped `s`.
pub fn weight_matrix_inv(kind: LossKind, s: &BlochVector) -> Sym3 {
    match kind {
        LossKind::Hs => Sym3::scaled_identity(4.0),
        LossKind::If => (Sym3::IDENTITY - Sym3::outer(&s.vec())).scale(4.0),
    }
}

/// `(2/π)(arcsin r − r√(1−r²))`, the radial CDF of the Bures distribution.
pub fn bures_radial_cdf(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    (2.0 / PI) * (r.asin() - r * (1.0 - r * r).sqrt())
}

/// Invert the Bures radial CDF by bisection in `t = arcsin r`, where the CDF
/// is `(2t − sin 2t)/π`.
fn bures_radius_from_quantile(u: f64) -> f64 {
    let target = u * PI;
    let (mut lo, mut hi) = (0.0_f64, FRAC_PI_2);
    // 1e-12 in r needs ~41 halvings of [0, π/2].
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if 2.0 * mid - (2.0 * mid).sin() < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    (0.5 * (lo + hi)).sin()
}

/// Radius drawn from the measure's radial law, truncated at `r_max`.
pub fn sample_radius<R: Rng + ?Sized>(measure: &StateMeasure, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() * measure.radial_cdf(measure.r_max);
    let r = match measure.kind {
        MeasureKind::Bures => bures_radius_from_quantile(u),
        MeasureKind::Euclidean => u.cbrt(),
    };
    r.min(measure.r_max)
}

/// Uniform direction on the unit sphere from a normalized Gaussian triple.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-300 {
            return v * (1.0 / n);
        }
    }
}

pub fn sample_state<R: Rng + ?Sized>(measure: &StateMeasure, rng: &mut R) -> BlochVector {
    let dir = random_direction(rng);
    let r = sample_radius(measure, rng);
    BlochVector(dir * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg3::{identity_residual, mat_vec, rotation};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bv(x: f64, y: f64, z: f64) -> BlochVector {
        BlochVector::from_xyz(x, y, z).unwrap()
    }

    #[test]
    fn constructor_rejects_and_renormalizes() {
        assert!(matches!(
            BlochVector::from_xyz(1.0, 1.0, 0.0),
            Err(StateError::OutsideBall(_))
        ));
        let v = BlochVector::from_xyz(1.0 + 5e-13, 0.0, 0.0).unwrap();
        assert_eq!(v.norm(), 1.0);
        assert!(BlochVector::from_xyz(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn loss_examples() {
        let e1 = bv(1.0, 0.0, 0.0);
        let m1 = bv(-1.0, 0.0, 0.0);
        assert_eq!(loss(LossKind::Hs, &e1, &m1), 1.0);
        let s = bv(0.3, -0.2, 0.5);
        assert!(loss(LossKind::If, &s, &s).abs() < 1e-16);
        assert_eq!(loss(LossKind::If, &BlochVector::ZERO, &e1), 0.5);
    }

    #[test]
    fn weight_matrix_examples() {
        let s = bv(0.6, 0.0, 0.0);
        assert_eq!(weight_matrix(LossKind::Hs, &s), Sym3::scaled_identity(0.25));
        assert_eq!(weight_matrix_inv(LossKind::Hs, &s), Sym3::scaled_identity(4.0));
        assert_eq!(
            weight_matrix(LossKind::If, &BlochVector::ZERO),
            Sym3::scaled_identity(0.25)
        );
        assert_eq!(
            weight_matrix_inv(LossKind::If, &BlochVector::ZERO),
            Sym3::scaled_identity(4.0)
        );

        let h = weight_matrix(LossKind::If, &s);
        assert!(h.max_abs_diff(&Sym3::diag(0.390625, 0.25, 0.25)) <= 1e-15);
        let hinv = weight_matrix_inv(LossKind::If, &s);
        assert!(hinv.max_abs_diff(&Sym3::diag(2.56, 4.0, 4.0)) <= 1e-15);
        assert!(identity_residual(&h.mul_sym(&hinv)) <= 1e-12);
    }

    #[test]
    fn if_weight_is_finite_at_the_boundary() {
        let s = bv(0.0, 0.0, 1.0);
        let h = weight_matrix(LossKind::If, &s);
        assert!(h.is_finite());
        assert!(h.zz > 1e4);
    }

    #[test]
    fn bures_cdf_endpoints_and_inverse() {
        assert_eq!(bures_radial_cdf(0.0), 0.0);
        assert!((bures_radial_cdf(1.0) - 1.0).abs() < 1e-15);
        for u in [0.0, 1e-6, 0.1, 0.5, 0.9, 0.999999] {
            let r = bures_radius_from_quantile(u);
            assert!((bures_radial_cdf(r) - u).abs() < 1e-11, "u={u}");
        }
    }

    #[test]
    fn sampled_states_respect_the_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = StateMeasure::new(MeasureKind::Bures, 0.5).unwrap();
        for _ in 0..2000 {
            assert!(sample_state(&m, &mut rng).norm() <= 0.5);
        }
        assert!(StateMeasure::new(MeasureKind::Bures, 0.0).is_err());
    }

    fn mean_radius(measure: &StateMeasure, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let r = sample_radius(measure, &mut rng);
            s += r;
            s2 += r * r;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn euclidean_mean_radius() {
        let (mean, se) = mean_radius(&StateMeasure::euclidean(), 1_000_000, 1);
        assert!((mean - 0.75).abs() <= 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn bures_mean_radius() {
        // ∫r³/√(1−r²) ÷ ∫r²/√(1−r²) = (2/3)/(π/4)
        let expected = 8.0 / (3.0 * PI);
        let (mean, se) = mean_radius(&StateMeasure::bures(), 1_000_000, 2);
        assert!((mean - expected).abs() <= 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn directions_are_unit_and_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut acc = Vec3::ZERO;
        for _ in 0..n {
            let d = random_direction(&mut rng);
            assert!((d.norm() - 1.0).abs() < 1e-12);
            acc += d;
        }
        assert!((acc * (1.0 / n as f64)).norm() < 0.02);
    }

    fn ball_point() -> impl Strategy<Value = BlochVector> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..=1.0f64).prop_map(|(x, y, z, r)| {
            let v = Vec3::new(x, y, z);
            let n = v.norm().max(1e-9);
            BlochVector::new(v * (r / n)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn loss_is_symmetric_and_nonnegative(s in ball_point(), t in ball_point()) {
            for k in LossKind::ALL {
                let a = loss(k, &s, &t);
                let b = loss(k, &t, &s);
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-15);
                prop_assert!(loss(k, &s, &s) <= 1e-12);
            }
        }

        #[test]
        fn loss_is_rotation_invariant(
            s in ball_point(), t in ball_point(), angle in 0.0..6.3f64,
            ax in -1.0..1.0f64, ay in -1.0..1.0f64,
        ) {
            let r = rotation(&Vec3::new(ax, ay, 0.7), angle);
            let rs = BlochVector::new(mat_vec(&r, &s.vec())).unwrap();
            let rt = BlochVector::new(mat_vec(&r, &t.vec())).unwrap();
            for k in LossKind::ALL {
                prop_assert!((loss(k, &rs, &rt) - loss(k, &s, &t)).abs() <= 1e-12);
            }
        }

        #[test]
        fn distinct_states_have_positive_loss(s in ball_point(), t in ball_point()) {
            prop_assume!((s.vec() - t.vec()).norm() > 1e-4);
            for k in LossKind::ALL {
                prop_assert!(loss(k, &s, &t) > 0.0);
            }
        }

        #[test]
        fn if_weight_inverts(s in ball_point()) {
            prop_assume!(s.norm() <= 1.0 - 1e-6);
            let h = weight_matrix(LossKind::If, &s);
            let hinv = weight_matrix_inv(LossKind::If, &s);
            prop_assert!(identity_residual(&h.mul_sym(&hinv)) <= 1e-8);
        }
    }
}
