//! Exhaustive enumeration of all `2^N` outcome sequences of a (possibly
//! adaptive) design at a fixed true state.

use thiserror::Error;

use crate::designs::{next_axis, DesignState, SchemeSpec};
use crate::estimator::{LikelihoodData, MleConfig};
use crate::fisher::fisher_single;
use crate::linalg3::{inv_sym, mat_mul, mat_transpose, sym_eig, Mat3, Sym3, Vec3};
use crate::measurement::{born_prob, MeasurementAxis, Outcome, TrialRecord};
use crate::states::BlochVector;

pub const MAX_ENUMERATED_TRIALS: usize = 12;
/// Fisher eigenvalues below this make the Cramér–Rao bound undefined.
pub const SINGULAR_FISHER: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration is limited to {MAX_ENUMERATED_TRIALS} trials, got {0}")]
    TooManyTrials(usize),
    #[error("Fisher matrix is singular (minimum eigenvalue {0:e})")]
    SingularF(f64),
}

/// What is measured at one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    Axis(MeasurementAxis),
    /// The two-outcome POVM `{½𝟙, ½𝟙}`: outcomes equiprobable for every state.
    Uninformative,
}

impl Probe {
    pub fn prob(&self, s: &BlochVector, x: Outcome) -> f64 {
        match self {
            Probe::Axis(a) => born_prob(a, s, x),
            Probe::Uninformative => 0.5,
        }
    }

    /// `∇ₛ ln p(x)`
    pub fn score(&self, s: &BlochVector, x: Outcome) -> Vec3 {
        match self {
            Probe::Axis(a) => {
                let y = a.vec() * x.sign();
                y * (1.0 / (1.0 + y.dot(&s.vec())))
            }
            Probe::Uninformative => Vec3::ZERO,
        }
    }

    pub fn fisher(&self, s: &BlochVector) -> Sym3 {
        match self {
            Probe::Axis(a) => fisher_single(a, s),
            Probe::Uninformative => Sym3::ZERO,
        }
    }
}

pub type History = [(Probe, Outcome)];

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    pub probability: f64,
    pub history: Vec<(Probe, Outcome)>,
    /// `∇ₛ ln p(D^N | s)`
    pub score: Vec3,
    /// Conditional Fisher matrix `Σᵢ F(Πᵢ, s)` at the true state.
    pub conditional_fisher: Sym3,
    pub estimate: Vec3,
}

#[derive(Debug, Clone)]
pub struct EnumeratedDesign {
    pub truth: BlochVector,
    pub trials: usize,
    pub sequences: Vec<SequenceEntry>,
}

/// `E`, `G`, `F` of the generalized Cramér–Rao inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `Σ p (ŝ − s)(ŝ − s)ᵀ`
    pub e: Sym3,
    /// `Σ p ∇ln p (ŝ − s)ᵀ`; not symmetric in general.
    pub g: Mat3,
    /// `Σ p ∇ln p ∇ln pᵀ`
    pub f: Sym3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CramerRao {
    /// `tr[H E]`
    pub lhs: f64,
    /// `tr[H Gᵀ F⁻¹ G]`
    pub rhs: f64,
    /// Minimum eigenvalue of `E − Gᵀ F⁻¹ G`.
    pub psd_margin: f64,
}

impl EnumeratedDesign {
    /// Walk the outcome tree; `rule` picks each probe from the history so
    /// far and `estimator` maps each complete history to an estimate.
    pub fn enumerate<R, E>(
        trials: usize,
        truth: BlochVector,
        rule: R,
        estimator: E,
    ) -> Result<Self, OracleError>
    where
        R: Fn(&History) -> Probe,
        E: Fn(&History) -> Vec3,
    {
        if trials > MAX_ENUMERATED_TRIALS {
            return Err(OracleError::TooManyTrials(trials));
        }
        let mut design = EnumeratedDesign {
            truth,
            trials,
            sequences: Vec::with_capacity(1 << trials),
        };
        let mut history = Vec::with_capacity(trials);
        design.walk(&rule, &estimator, &mut history, 1.0);
        Ok(design)
    }

    fn walk<R, E>(&mut self, rule: &R, estimator: &E, history: &mut Vec<(Probe, Outcome)>, p: f64)
    where
        R: Fn(&History) -> Probe,
        E: Fn(&History) -> Vec3,
    {
        if history.len() == self.trials {
            let s = self.truth;
            let mut score = Vec3::ZERO;
            let mut fisher = Sym3::ZERO;
            for (probe, x) in history.iter() {
                score += probe.score(&s, *x);
                fisher += probe.fisher(&s);
            }
            self.sequences.push(SequenceEntry {
                probability: p,
                history: history.clone(),
                score,
                conditional_fisher: fisher,
                estimate: estimator(history),
            });
            return;
        }
        let probe = rule(history);
        for x in Outcome::BOTH {
            history.push((probe, x));
            self.walk(rule, estimator, history, p * probe.prob(&self.truth, x));
            history.pop();
        }
    }

    pub fn total_probability(&self) -> f64 {
        self.sequences.iter().map(|q| q.probability).sum()
    }

    pub fn moments(&self) -> Moments {
        let s = self.truth.vec();
        let mut e = Sym3::ZERO;
        let mut g = [[0.0; 3]; 3];
        let mut f = Sym3::ZERO;
        for q in &self.sequences {
            let d = q.estimate - s;
            e += Sym3::outer(&d).scale(q.probability);
            f += Sym3::outer(&q.score).scale(q.probability);
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] += q.probability * q.score[i] * d[j];
                }
            }
        }
        Moments { e, g, f }
    }

    /// Unconditional Fisher matrix `F_N` from per-sequence scores.
    pub fn unconditional_fisher(&self) -> Sym3 {
        self.moments().f
    }

    /// `Σ p(D^N) F̃_N`, equal to the sum over `D^{N−1}` because `F̃_N`
    /// does not depend on the last outcome.
    pub fn averaged_conditional_fisher(&self) -> Sym3 {
        self.sequences
            .iter()
            .fold(Sym3::ZERO, |acc, q| acc + q.conditional_fisher.scale(q.probability))
    }
}

pub fn cramer_rao_check(design: &EnumeratedDesign, weight: &Sym3) -> Result<CramerRao, OracleError> {
    let m = design.moments();
    let min_f = sym_eig(&m.f).min_value();
    if min_f < SINGULAR_FISHER {
        return Err(OracleError::SingularF(min_f));
    }
    let f_inv = inv_sym(&m.f).map_err(|_| OracleError::SingularF(min_f))?.to_mat();
    let bound = mat_mul(&mat_transpose(&m.g), &mat_mul(&f_inv, &m.g));
    let bound = Sym3::symmetrize(&bound);
    let tr = |a: &Sym3| {
        let p = weight.mul_sym(a);
        p[0][0] + p[1][1] + p[2][2]
    };
    Ok(CramerRao {
        lhs: tr(&m.e),
        rhs: tr(&bound),
        psd_margin: sym_eig(&(m.e - bound)).min_value(),
    })
}

/// Largest entry of `F_N − Σ p F̃_N`.
pub fn conditional_fisher_identity(design: &EnumeratedDesign) -> f64 {
    design
        .unconditional_fisher()
        .max_abs_diff(&design.averaged_conditional_fisher())
}

fn axis_records(history: &History) -> Vec<TrialRecord> {
    history
        .iter()
        .enumerate()
        .filter_map(|(i, (probe, x))| match probe {
            Probe::Axis(a) => Some(TrialRecord {
                axis: *a,
                outcome: *x,
                trial_index: i + 1,
            }),
            Probe::Uninformative => None,
        })
        .collect()
}

/// Cold-start maximum-likelihood estimate from the projective trials.
pub fn mle_estimator(cfg: MleConfig) -> impl Fn(&History) -> Vec3 {
    move |h| {
        LikelihoodData::from_records(&axis_records(h))
            .newton(&cfg, &BlochVector::ZERO)
            .estimate
            .vec()
    }
}

/// `axis × mean outcome`, unbiased for the component along `axis`.
pub fn single_axis_estimator(axis: MeasurementAxis) -> impl Fn(&History) -> Vec3 {
    move |h| {
        let mean = h.iter().map(|(_, x)| x.sign()).sum::<f64>() / h.len().max(1) as f64;
        axis.vec() * mean
    }
}

/// A production scheme as an enumeration rule: the estimate feeding the
/// next axis is the cold-start MLE of the history.
pub fn scheme_rule(spec: SchemeSpec, cfg: MleConfig) -> impl Fn(&History) -> Probe {
    move |h| {
        let mut state = DesignState::new(0);
        let records = axis_records(h);
        for r in &records {
            state.record(r.axis);
        }
        let s_hat = LikelihoodData::from_records(&records)
            .newton(&cfg, &BlochVector::ZERO)
            .estimate;
        Probe::Axis(next_axis(&spec, &mut state, &s_hat).expect("projective history"))
    }
}

/// Fixed axis list, repeated cyclically.
pub fn cyclic_rule(axes: Vec<MeasurementAxis>) -> impl Fn(&History) -> Probe {
    move |h| Probe::Axis(axes[h.len() % axes.len()])
}

/// The counterexample design: an uninformative first trial; outcome `+`
/// (T) switches to σ₁, σ₂, σ₃ repetition, outcome `−` (F) repeats the
/// uninformative measurement.
pub fn true_false_rule() -> impl Fn(&History) -> Probe {
    |h| match h.first() {
        None => Probe::Uninformative,
        Some((_, Outcome::Plus)) => Probe::Axis(MeasurementAxis::basis((h.len() - 1) % 3)),
        Some((_, Outcome::Minus)) => Probe::Uninformative,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueFalseReport {
    pub unconditional: Sym3,
    pub t_branch: Sym3,
    pub f_branch: Sym3,
    /// Largest gap between eigenvalues of `F_N` and `½ F̃(T)`.
    pub eigen_residual: f64,
}

pub fn true_false_counterexample(trials: usize, truth: BlochVector) -> Result<TrueFalseReport, OracleError> {
    let design = EnumeratedDesign::enumerate(trials, truth, true_false_rule(), |_: &History| Vec3::ZERO)?;
    let branch = |x: Outcome| {
        design
            .sequences
            .iter()
            .find(|q| q.history[0].1 == x)
            .map(|q| q.conditional_fisher)
            .unwrap_or(Sym3::ZERO)
    };
    let unconditional = design.unconditional_fisher();
    let t_branch = branch(Outcome::Plus);
    let f_branch = branch(Outcome::Minus);
    let a = sym_eig(&unconditional).values;
    let b = sym_eig(&t_branch.scale(0.5)).values;
    let eigen_residual = (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
    Ok(TrueFalseReport {
        unconditional,
        t_branch,
        f_branch,
        eigen_residual,
    })
}
