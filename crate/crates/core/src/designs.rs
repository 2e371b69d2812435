//! Measurement update rules: A-optimal adaptive designs for the
//! Hilbert–Schmidt and infidelity weights, XYZ repetition, and uniformly
//! random axes.
//!
//! The A-optimal axis minimizes `tr[H(ŝ)(F̃ + F(a, ŝ))⁻¹]` over unit `a`.
//! With `B = √(F̃ H⁻¹ F̃)` and `C = B(I − ŝŝᵀ + F̃⁻¹)B`, the minimizer is
//! `a ∝ B e_min(C)`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fisher::FisherAccumulator;
use crate::linalg3::{sqrt_psd, sym_eig, LinalgError, Sym3, Vec3};
use crate::measurement::MeasurementAxis;
use crate::states::{random_direction, weight_matrix_inv, BlochVector, LossKind};

/// Estimates are pulled inside this radius before entering the A-optimal formula.
pub const DEFAULT_R_CLAMP: f64 = 1.0 - 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("accumulated Fisher matrix has rank {0}; A-optimal update needs rank 3")]
    RankDeficient(usize),
    #[error("fixed prefix is defined for trials 1..=3, got {0}")]
    NotInPrefix(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("A-optimal axis is degenerate")]
    DegenerateAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    /// A-optimality with the Hilbert–Schmidt weight.
    Ahs,
    /// A-optimality with the infidelity weight.
    Aif,
    /// Cyclic σ₁, σ₂, σ₃ measurements.
    Xyz,
    /// Haar-random axes after the fixed prefix.
    Urs,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [SchemeKind::Ahs, SchemeKind::Aif, SchemeKind::Xyz, SchemeKind::Urs];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::Ahs => "ahs",
            SchemeKind::Aif => "aif",
            SchemeKind::Xyz => "xyz",
            SchemeKind::Urs => "urs",
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, SchemeKind::Ahs | SchemeKind::Aif)
    }

    /// Loss whose weight drives the A-optimal update.
    pub fn weight_kind(&self) -> Option<LossKind> {
        match self {
            SchemeKind::Ahs => Some(LossKind::Hs),
            SchemeKind::Aif => Some(LossKind::If),
            _ => None,
        }
    }

    pub(crate) fn tag(&self) -> u64 {
        match self {
            SchemeKind::Ahs => 1,
            SchemeKind::Aif => 2,
            SchemeKind::Xyz => 3,
            SchemeKind::Urs => 4,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ahs" => Ok(SchemeKind::Ahs),
            "aif" => Ok(SchemeKind::Aif),
            "xyz" => Ok(SchemeKind::Xyz),
            "urs" => Ok(SchemeKind::Urs),
            other => Err(format!("unknown scheme '{other}' (expected ahs, aif, xyz or urs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub r_clamp: f64,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind) -> Self {
        SchemeSpec {
            kind,
            r_clamp: DEFAULT_R_CLAMP,
        }
    }
}

/// Per-sequence state of an update rule.
#[derive(Debug, Clone)]
pub struct DesignState {
    trials: usize,
    axes: Vec<MeasurementAxis>,
    rng: ChaCha8Rng,
}

impl DesignState {
    /// `seed` feeds the random axis stream (used only by URS).
    pub fn new(seed: u64) -> Self {
        DesignState {
            trials: 0,
            axes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Register the axis actually measured at the next trial.
    pub fn record(&mut self, axis: MeasurementAxis) {
        self.trials += 1;
        self.axes.push(axis);
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn axes(&self) -> &[MeasurementAxis] {
        &self.axes
    }
}

/// σ₁, σ₂, σ₃ at trials 1, 2, 3.
pub fn first_three(n: usize) -> Result<MeasurementAxis, DesignError> {
    match n {
        1..=3 => Ok(MeasurementAxis::basis(n - 1)),
        _ => Err(DesignError::NotInPrefix(n)),
    }
}

fn axis_from(b: &Sym3, c: &Sym3) -> Result<MeasurementAxis, DesignError> {
    let e_min = sym_eig(c).min_vector();
    let v = b.mul_vec(&e_min);
    MeasurementAxis::new(v.with_canonical_sign()).map_err(|_| DesignError::DegenerateAxis)
}

fn require_full_rank(acc: &FisherAccumulator) -> Result<&Sym3, DesignError> {
    acc.inverse().ok_or(DesignError::RankDeficient(acc.rank()))
}

/// `I − ŝŝᵀ`
fn purity_metric(s_hat: &BlochVector) -> Sym3 {
    Sym3::IDENTITY - Sym3::outer(&s_hat.vec())
}

/// A-optimal axis for a general weight given through its inverse `H⁻¹`.
pub fn aopt_axis_general(
    acc: &FisherAccumulator,
    s_hat: &BlochVector,
    weight_inv: &Sym3,
) -> Result<MeasurementAxis, DesignError> {
    let f_inv = require_full_rank(acc)?;
    let f = acc.matrix();
    let b = sqrt_psd(&f.sandwich(weight_inv))?;
    let c = b.sandwich(&(purity_metric(s_hat) + *f_inv));
    axis_from(&b, &c)
}

/// Closed-form optimal axis for the A-optimal scheme weighted by `kind`.
///
/// The Hilbert–Schmidt weight is constant, so `B = F̃` up to a scale and
/// `C ∝ F̃(I − ŝŝᵀ)F̃ + F̃` needs neither a square root nor `F̃⁻¹`.
pub fn aopt_axis(
    acc: &FisherAccumulator,
    s_hat: &BlochVector,
    kind: LossKind,
) -> Result<MeasurementAxis, DesignError> {
    match kind {
        LossKind::Hs => {
            require_full_rank(acc)?;
            let f = acc.matrix();
            let c = f.sandwich(&purity_metric(s_hat)) + *f;
            axis_from(f, &c)
        }
        LossKind::If => aopt_axis_general(acc, s_hat, &weight_matrix_inv(LossKind::If, s_hat)),
    }
}

/// `u_{n+1}(Dⁿ)`: the axis for trial `state.trials() + 1`.
///
/// `s_hat` is the current estimate; only the A-optimal kinds read it.
pub fn next_axis(
    spec: &SchemeSpec,
    state: &mut DesignState,
    s_hat: &BlochVector,
) -> Result<MeasurementAxis, DesignError> {
    let n = state.trials;
    if n < 3 {
        return first_three(n + 1);
    }
    match spec.kind {
        SchemeKind::Xyz => Ok(MeasurementAxis::basis(n % 3)),
        SchemeKind::Urs => Ok(MeasurementAxis::new(random_direction(&mut state.rng))
            .expect("random_direction returns unit vectors")),
        SchemeKind::Ahs | SchemeKind::Aif => {
            let s = s_hat.clamped(spec.r_clamp);
            // F̃ is re-evaluated at the current estimate for every past axis.
            let acc = FisherAccumulator::from_axes(&state.axes, &s);
            let kind = spec.kind.weight_kind().expect("adaptive scheme");
            aopt_axis(&acc, &s, kind)
        }
    }
}

/// `tr[H (F̃ + F(a, ŝ))⁻¹]`, evaluated through the rank-1 inverse identity.
pub fn aopt_objective(f_inv: &Sym3, weight: &Sym3, s_hat: &BlochVector, a: &Vec3) -> f64 {
    let base = weight.mul_sym(f_inv);
    let trace_base = base[0][0] + base[1][1] + base[2][2];
    let u = f_inv.mul_vec(a);
    let p = a.dot(&s_hat.vec());
    let denom = (1.0 - p * p).max(crate::fisher::FISHER_DENOM_FLOOR) + a.dot(&u);
    trace_base - weight.quad_form(&u) / denom
}
