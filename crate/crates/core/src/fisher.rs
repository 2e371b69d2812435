//! Fisher information of projective qubit measurements and the accumulated
//! (conditional) Fisher matrix `F̃_n = Σᵢ F(aᵢ, s)`.

use crate::linalg3::{inv_sym, numerical_rank, pinv_sym, Sym3, Vec3};
use crate::measurement::MeasurementAxis;
use crate::states::BlochVector;

/// Floor on `1 − (a·s)²`.
pub const FISHER_DENOM_FLOOR: f64 = 1e-12;
/// Rank-1 inverse updates between full recomputations.
pub const REFRESH_INTERVAL: usize = 512;

/// `1 − (a·s)²`, floored.
pub fn fisher_denominator(a: &Vec3, s: &Vec3) -> f64 {
    let p = a.dot(s);
    (1.0 - p * p).max(FISHER_DENOM_FLOOR)
}

/// `F(a, s) = aaᵀ / (1 − (a·s)²)`.
pub fn fisher_single(a: &MeasurementAxis, s: &BlochVector) -> Sym3 {
    let av = a.vec();
    Sym3::outer(&av).scale(1.0 / fisher_denominator(&av, &s.vec()))
}

/// Running sum of single-trial Fisher matrices with a maintained inverse.
///
/// Below rank 3 the stored inverse is the Moore–Penrose pseudo-inverse.
/// From rank 3 on it is updated in O(1) per trial by the rank-1 inverse
/// identity, with a full recomputation every [`REFRESH_INTERVAL`] updates.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherAccumulator {
    trials: usize,
    matrix: Sym3,
    inverse: Sym3,
    rank: usize,
    since_refresh: usize,
}

impl Default for FisherAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl FisherAccumulator {
    pub fn new() -> Self {
        FisherAccumulator {
            trials: 0,
            matrix: Sym3::ZERO,
            inverse: Sym3::ZERO,
            rank: 0,
            since_refresh: 0,
        }
    }

    /// Start from an explicit PSD matrix standing for `trials` trials.
    pub fn from_matrix(matrix: Sym3, trials: usize) -> Self {
        let mut acc = FisherAccumulator {
            trials,
            matrix,
            inverse: Sym3::ZERO,
            rank: 0,
            since_refresh: 0,
        };
        acc.refresh();
        acc
    }

    /// `Σ F(aᵢ, s)` over `axes`, all evaluated at the same `s`, inverted once.
    pub fn from_axes<'a, I>(axes: I, s: &BlochVector) -> Self
    where
        I: IntoIterator<Item = &'a MeasurementAxis>,
    {
        let sv = s.vec();
        let mut matrix = Sym3::ZERO;
        let mut trials = 0;
        for a in axes {
            let av = a.vec();
            matrix += Sym3::outer(&av).scale(1.0 / fisher_denominator(&av, &sv));
            trials += 1;
        }
        Self::from_matrix(matrix, trials)
    }

    fn refresh(&mut self) {
        self.rank = numerical_rank(&self.matrix);
        self.inverse = if self.rank == 3 {
            inv_sym(&self.matrix).unwrap_or_else(|_| pinv_sym(&self.matrix))
        } else {
            pinv_sym(&self.matrix)
        };
        self.since_refresh = 0;
    }

    /// Add `F(a, s)` for one more trial.
    pub fn accumulate(&mut self, a: &MeasurementAxis, s: &BlochVector) {
        let av = a.vec();
        let d = fisher_denominator(&av, &s.vec());
        self.matrix += Sym3::outer(&av).scale(1.0 / d);
        self.trials += 1;

        if self.rank < 3 || self.since_refresh + 1 >= REFRESH_INTERVAL {
            self.refresh();
            return;
        }
        // (V + vvᵀ)⁻¹ = V⁻¹ − V⁻¹vvᵀV⁻¹ / (1 + vᵀV⁻¹v) with v = a/√d,
        // written with a directly: denominator d + aᵀV⁻¹a.
        let u = self.inverse.mul_vec(&av);
        let denom = d + av.dot(&u);
        self.inverse = self.inverse - Sym3::outer(&u).scale(1.0 / denom);
        self.since_refresh += 1;
    }

    /// Owned variant of [`accumulate`](Self::accumulate).
    pub fn accumulated(mut self, a: &MeasurementAxis, s: &BlochVector) -> Self {
        self.accumulate(a, s);
        self
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn matrix(&self) -> &Sym3 {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `F̃⁻¹` once full rank.
    pub fn inverse(&self) -> Option<&Sym3> {
        (self.rank == 3).then_some(&self.inverse)
    }

    /// Inverse if full rank, otherwise the pseudo-inverse.
    pub fn generalized_inverse(&self) -> &Sym3 {
        &self.inverse
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg3::identity_residual;
    use crate::states::{random_direction, sample_state, StateMeasure};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(i: usize) -> MeasurementAxis {
        MeasurementAxis::basis(i)
    }

    #[test]
    fn single_trial_examples() {
        assert_eq!(fisher_single(&e(0), &BlochVector::ZERO), Sym3::diag(1.0, 0.0, 0.0));
        let s = BlochVector::from_xyz(0.0, 0.0, 0.99).unwrap();
        let f = fisher_single(&e(2), &s);
        assert!((f.zz - 1.0 / 0.0199).abs() < 1e-9);
        assert_eq!(f.xx, 0.0);
        let pure = BlochVector::from_xyz(0.0, 0.0, 1.0).unwrap();
        assert_eq!(fisher_single(&e(2), &pure).zz, 1e12);
    }

    #[test]
    fn rank_one_update_from_identity() {
        let acc = FisherAccumulator::from_matrix(Sym3::IDENTITY, 3).accumulated(&e(0), &BlochVector::ZERO);
        let inv = acc.inverse().unwrap();
        assert!(inv.max_abs_diff(&Sym3::diag(0.5, 1.0, 1.0)) <= 1e-15);
        assert_eq!(acc.trials(), 4);
    }

    #[test]
    fn canonical_axes_reach_full_rank() {
        let mut acc = FisherAccumulator::new();
        assert_eq!(acc.rank(), 0);
        assert!(acc.inverse().is_none());
        for i in 0..3 {
            acc.accumulate(&e(i), &BlochVector::ZERO);
            assert_eq!(acc.rank(), i + 1);
        }
        assert_eq!(*acc.matrix(), Sym3::IDENTITY);
        assert_eq!(*acc.inverse().unwrap(), Sym3::IDENTITY);
    }

    #[test]
    fn pseudo_inverse_below_full_rank() {
        let mut acc = FisherAccumulator::new();
        acc.accumulate(&e(0), &BlochVector::ZERO);
        acc.accumulate(&e(0), &BlochVector::ZERO);
        assert_eq!(acc.rank(), 1);
        assert!(acc.generalized_inverse().max_abs_diff(&Sym3::diag(0.5, 0.0, 0.0)) <= 1e-15);
    }

    fn random_sequence(seed: u64, len: usize) -> (Vec<MeasurementAxis>, Vec<BlochVector>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let measure = StateMeasure::new(crate::states::MeasureKind::Euclidean, 0.95).unwrap();
        let axes = (0..len)
            .map(|_| MeasurementAxis::new(random_direction(&mut rng)).unwrap())
            .collect();
        let states = (0..len).map(|_| sample_state(&measure, &mut rng)).collect();
        (axes, states)
    }

    #[test]
    fn maintained_inverse_matches_direct_inversion() {
        let (axes, states) = random_sequence(21, 200);
        let mut acc = FisherAccumulator::new();
        for (a, s) in axes.iter().zip(&states) {
            acc.accumulate(a, s);
            if acc.rank() == 3 {
                let direct = inv_sym(acc.matrix()).unwrap();
                assert!(acc.inverse().unwrap().max_abs_diff(&direct) <= 1e-8);
                assert!(identity_residual(&acc.matrix().mul_sym(acc.inverse().unwrap())) <= 1e-8);
            }
        }
    }

    #[test]
    fn periodic_refresh_bounds_drift() {
        let (axes, states) = random_sequence(22, 1500);
        let mut acc = FisherAccumulator::new();
        for (a, s) in axes.iter().zip(&states) {
            acc.accumulate(a, s);
        }
        let direct = inv_sym(acc.matrix()).unwrap();
        let scale = direct.frobenius_norm();
        assert!(acc.inverse().unwrap().max_abs_diff(&direct) <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn batch_constructor_agrees_with_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let s = BlochVector::from_xyz(0.1, -0.5, 0.3).unwrap();
        let axes: Vec<_> = (0..50)
            .map(|_| MeasurementAxis::new(random_direction(&mut rng)).unwrap())
            .collect();
        let batch = FisherAccumulator::from_axes(&axes, &s);
        let mut inc = FisherAccumulator::new();
        for a in &axes {
            inc.accumulate(a, &s);
        }
        assert!(batch.matrix().max_abs_diff(inc.matrix()) <= 1e-12);
        assert!(batch.inverse().unwrap().max_abs_diff(inc.inverse().unwrap()) <= 1e-10);
        assert_eq!(batch.trials(), 50);
    }

    proptest! {
        #[test]
        fn accumulation_stays_psd_and_order_independent(seed in 0u64..10_000, len in 1usize..40) {
            let (axes, states) = random_sequence(seed, len);
            let mut fwd = FisherAccumulator::new();
            for (a, s) in axes.iter().zip(&states) {
                fwd.accumulate(a, s);
                prop_assert!(crate::linalg3::sym_eig(fwd.matrix()).min_value() >= -1e-10);
            }
            let mut rev = FisherAccumulator::new();
            for (a, s) in axes.iter().zip(&states).rev() {
                rev.accumulate(a, s);
            }
            let scale = fwd.matrix().frobenius_norm().max(1.0);
            prop_assert!(fwd.matrix().max_abs_diff(rev.matrix()) <= 1e-12 * scale);
            prop_assert_eq!(fwd.rank(), rev.rank());
        }
    }
}
