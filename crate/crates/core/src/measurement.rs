//! Rank-1 projective qubit measurements `Π±(a) = ½(𝟙 ± a·σ)`.

use rand::Rng;
use thiserror::Error;

use crate::linalg3::Vec3;
use crate::states::BlochVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("measurement axis must be a finite nonzero vector")]
    DegenerateAxis,
}

/// Unit Bloch vector labelling a projective measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementAxis(Vec3);

impl MeasurementAxis {
    /// Normalizes `v`.
    pub fn new(v: Vec3) -> Result<Self, MeasurementError> {
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(MeasurementError::DegenerateAxis);
        }
        Ok(MeasurementAxis(v * (1.0 / n)))
    }

    /// `e_{i+1}`, zero-based.
    pub fn basis(i: usize) -> Self {
        MeasurementAxis(Vec3::basis(i))
    }

    pub fn vec(&self) -> Vec3 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(&self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];
}

/// Data for one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub axis: MeasurementAxis,
    pub outcome: Outcome,
    /// 1-based position in the sequence.
    pub trial_index: usize,
}

impl TrialRecord {
    /// `x·a`, the only combination the likelihood depends on.
    pub fn signed_axis(&self) -> Vec3 {
        self.axis.vec() * self.outcome.sign()
    }
}

/// `p(x; a | s) = ½(1 + x a·s)`. The `−` branch is `1 − p(+)` so both outcomes sum to exactly 1.
pub fn born_prob(a: &MeasurementAxis, s: &BlochVector, x: Outcome) -> f64 {
    let plus = (0.5 * (1.0 + a.vec().dot(&s.vec()))).clamp(0.0, 1.0);
    match x {
        Outcome::Plus => plus,
        Outcome::Minus => 1.0 - plus,
    }
}

pub fn sample_outcome<R: Rng + ?Sized>(a: &MeasurementAxis, s: &BlochVector, rng: &mut R) -> Outcome {
    let u: f64 = rng.random();
    if u < born_prob(a, s, Outcome::Plus) {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg3::{mat_vec, rotation};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(i: usize) -> MeasurementAxis {
        MeasurementAxis::basis(i)
    }

    #[test]
    fn born_examples() {
        let z99 = BlochVector::from_xyz(0.0, 0.0, 0.99).unwrap();
        assert_eq!(born_prob(&e(2), &BlochVector::ZERO, Outcome::Plus), 0.5);
        assert!((born_prob(&e(2), &z99, Outcome::Plus) - 0.995).abs() < 1e-15);
        assert_eq!(born_prob(&e(0), &z99, Outcome::Minus), 0.5);
    }

    #[test]
    fn axis_normalizes_and_rejects_zero() {
        let a = MeasurementAxis::new(Vec3::new(3.0, 0.0, 4.0)).unwrap();
        assert!((a.vec().norm() - 1.0).abs() < 1e-15);
        assert!(MeasurementAxis::new(Vec3::ZERO).is_err());
    }

    #[test]
    fn pure_states_give_certain_outcomes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let up = BlochVector::from_xyz(0.0, 0.0, 1.0).unwrap();
        let down = BlochVector::from_xyz(0.0, 0.0, -1.0).unwrap();
        for _ in 0..10_000 {
            assert_eq!(sample_outcome(&e(2), &up, &mut rng), Outcome::Plus);
            assert_eq!(sample_outcome(&e(2), &down, &mut rng), Outcome::Minus);
        }
    }

    #[test]
    fn mixed_state_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1_000_000;
        let a = MeasurementAxis::new(Vec3::new(0.2, -0.4, 0.9)).unwrap();
        let plus = (0..n)
            .filter(|_| sample_outcome(&a, &BlochVector::ZERO, &mut rng) == Outcome::Plus)
            .count();
        let freq = plus as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 3.0 * 0.5 / (n as f64).sqrt(), "{freq}");
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let s = BlochVector::from_xyz(0.1, 0.2, 0.3).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| sample_outcome(&e(0), &s, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(17), draw(17));
    }

    proptest! {
        #[test]
        fn probabilities_are_normalized(
            ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in 0.1..1.0f64,
            sx in -0.57..0.57f64, sy in -0.57..0.57f64, sz in -0.57..0.57f64,
        ) {
            let a = MeasurementAxis::new(Vec3::new(ax, ay, az)).unwrap();
            let s = BlochVector::from_xyz(sx, sy, sz).unwrap();
            let p = born_prob(&a, &s, Outcome::Plus);
            let m = born_prob(&a, &s, Outcome::Minus);
            prop_assert_eq!(p + m, 1.0);
            prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&m));
        }

        #[test]
        fn probabilities_are_rotation_covariant(
            ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in 0.1..1.0f64,
            sx in -0.57..0.57f64, sy in -0.57..0.57f64, sz in -0.57..0.57f64,
            angle in 0.0..6.3f64,
        ) {
            let r = rotation(&Vec3::new(0.3, -0.5, 0.8), angle);
            let a = MeasurementAxis::new(Vec3::new(ax, ay, az)).unwrap();
            let s = BlochVector::from_xyz(sx, sy, sz).unwrap();
            let ra = MeasurementAxis::new(mat_vec(&r, &a.vec())).unwrap();
            let rs = BlochVector::new(mat_vec(&r, &s.vec())).unwrap();
            for x in Outcome::BOTH {
                prop_assert!((born_prob(&ra, &rs, x) - born_prob(&a, &s, x)).abs() <= 1e-15);
            }
        }
    }
}
