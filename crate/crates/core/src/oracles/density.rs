//! Losses computed from explicit 2×2 density matrices.

use num_complex::Complex64 as C;

use crate::states::{BlochVector, LossKind};

/// 2×2 complex matrix, row-major.
type M2 = [[C; 2]; 2];

fn density(s: &BlochVector) -> M2 {
    let v = s.vec();
    let h = 0.5;
    [
        [C::new(h * (1.0 + v[2]), 0.0), C::new(h * v[0], -h * v[1])],
        [C::new(h * v[0], h * v[1]), C::new(h * (1.0 - v[2]), 0.0)],
    ]
}

fn mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn sub(a: &M2, b: &M2) -> M2 {
    [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
}

fn trace(a: &M2) -> C {
    a[0][0] + a[1][1]
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
fn hermitian_eigen(m: &M2) -> ([f64; 2], [[C; 2]; 2]) {
    let a = m[0][0].re;
    let d = m[1][1].re;
    let b = m[0][1];
    let half_gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let mean = 0.5 * (a + d);
    let vals = [mean - half_gap, mean + half_gap];
    if b.norm() <= 1e-300 {
        let (lo, hi) = if a <= d { (0, 1) } else { (1, 0) };
        let mut vecs = [[C::new(0.0, 0.0); 2]; 2];
        vecs[0][lo] = C::new(1.0, 0.0);
        vecs[1][hi] = C::new(1.0, 0.0);
        return ([a.min(d), a.max(d)], vecs);
    }
    let vecs = vals.map(|l| {
        // (M − λ) v = 0 ⇒ v ∝ (b, λ − a), or (λ − d, b̄): pick the larger.
        let v1 = [b, C::new(l - a, 0.0)];
        let v2 = [C::new(l - d, 0.0), b.conj()];
        let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
        let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        let k = 1.0 / n.sqrt();
        [v[0] * k, v[1] * k]
    });
    (vals, vecs)
}

/// `Σ f(λᵢ) vᵢ vᵢ†`
fn apply(m: &M2, f: impl Fn(f64) -> f64) -> M2 {
    let (vals, vecs) = hermitian_eigen(m);
    let mut out = [[C::new(0.0, 0.0); 2]; 2];
    for (l, v) in vals.iter().zip(vecs.iter()) {
        let w = f(*l);
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += v[i] * v[j].conj() * w;
            }
        }
    }
    out
}

/// `½ Tr[(ρ − σ)²]` or `1 − (Tr √(√ρ σ √ρ))²`.
pub fn density_loss_oracle(kind: LossKind, s: &BlochVector, t: &BlochVector) -> f64 {
    let rho = density(s);
    let sigma = density(t);
    match kind {
        LossKind::Hs => {
            let d = sub(&rho, &sigma);
            0.5 * trace(&mul(&d, &d)).re
        }
        LossKind::If => {
            let root = apply(&rho, |l| l.max(0.0).sqrt());
            let inner = mul(&mul(&root, &sigma), &root);
            let (vals, _) = hermitian_eigen(&inner);
            let f = vals.iter().map(|l| l.max(0.0).sqrt()).sum::<f64>();
            1.0 - f * f
        }
    }
}
