//! Fixed-size real linear algebra for 3-vectors and symmetric 3×3 matrices.
//!
//! Everything here is a pure function of its value inputs. The symmetric
//! eigensolver is a cyclic Jacobi iteration with a deterministic ordering and
//! sign convention, so that "the eigenvector of the smallest eigenvalue" is a
//! well-defined function even for degenerate spectra.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use thiserror::Error;

/// Eigenvalues below `-PSD_TOL * max(1, ‖m‖_F)` make a matrix "not PSD".
pub const PSD_TOL: f64 = 1e-10;
/// Determinant test for full-rank inversion: `|det| > SINGULAR_TOL * ‖m‖_F³`.
pub const SINGULAR_TOL: f64 = 1e-14;
/// Relative eigenvalue cutoff used for rank counting and pseudo-inverses.
pub const RANK_TOL: f64 = 1e-10;
/// Eigenvalues closer than this (relative) are treated as tied.
const TIE_TOL: f64 = 1e-12;
/// Components with magnitude below this are "zero" for the sign convention.
const SIGN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is singular (|det| = {0:e})")]
    Singular(f64),
}

/// A real 3-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    /// Canonical basis vector `e_{i+1}` (zero-based index).
    pub fn basis(i: usize) -> Self {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        Vec3(v)
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn cross(&self, o: &Vec3) -> Vec3 {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Vec3([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    pub fn max_abs_diff(&self, other: &Vec3) -> f64 {
        (0..3)
            .map(|i| (self.0[i] - other.0[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Flip the sign so the first component with magnitude above 1e-12 is positive.
    pub fn with_canonical_sign(self) -> Vec3 {
        match self.0.iter().find(|c| c.abs() > SIGN_TOL) {
            Some(&c) if c < 0.0 => -self,
            _ => self,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }
}

/// A dense row-major 3×3 matrix, used where products leave the symmetric class.
pub type Mat3 = [[f64; 3]; 3];

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    Vec3([
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ])
}

/// Largest absolute entry of `a - I`.
pub fn identity_residual(a: &Mat3) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((x - target).abs());
        }
    }
    worst
}

/// Symmetric real 3×3 matrix stored as its six independent entries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl Sym3 {
    pub const ZERO: Sym3 = Sym3 {
        xx: 0.0,
        xy: 0.0,
        xz: 0.0,
        yy: 0.0,
        yz: 0.0,
        zz: 0.0,
    };

    pub const IDENTITY: Sym3 = Sym3 {
        xx: 1.0,
        xy: 0.0,
        xz: 0.0,
        yy: 1.0,
        yz: 0.0,
        zz: 1.0,
    };

    pub const fn new(xx: f64, xy: f64, xz: f64, yy: f64, yz: f64, zz: f64) -> Self {
        Sym3 {
            xx,
            xy,
            xz,
            yy,
            yz,
            zz,
        }
    }

    pub const fn diag(a: f64, b: f64, c: f64) -> Self {
        Sym3::new(a, 0.0, 0.0, b, 0.0, c)
    }

    pub const fn scaled_identity(k: f64) -> Self {
        Sym3::diag(k, k, k)
    }

    /// `v vᵀ`
    pub fn outer(v: &Vec3) -> Self {
        let [a, b, c] = v.0;
        Sym3::new(a * a, a * b, a * c, b * b, b * c, c * c)
    }

    /// Symmetric part `(a + aᵀ)/2` of a dense matrix.
    pub fn symmetrize(a: &Mat3) -> Self {
        Sym3::new(
            a[0][0],
            0.5 * (a[0][1] + a[1][0]),
            0.5 * (a[0][2] + a[2][0]),
            a[1][1],
            0.5 * (a[1][2] + a[2][1]),
            a[2][2],
        )
    }

    pub fn to_mat(&self) -> Mat3 {
        [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.to_mat()[i][j]
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn det(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz)
            - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.xx * self.xx
            + self.yy * self.yy
            + self.zz * self.zz
            + 2.0 * (self.xy * self.xy + self.xz * self.xz + self.yz * self.yz))
            .sqrt()
    }

    pub fn max_abs_diff(&self, o: &Sym3) -> f64 {
        [
            self.xx - o.xx,
            self.xy - o.xy,
            self.xz - o.xz,
            self.yy - o.yy,
            self.yz - o.yz,
            self.zz - o.zz,
        ]
        .iter()
        .fold(0.0_f64, |m, d| m.max(d.abs()))
    }

    pub fn scale(&self, k: f64) -> Sym3 {
        Sym3::new(
            self.xx * k,
            self.xy * k,
            self.xz * k,
            self.yy * k,
            self.yz * k,
            self.zz * k,
        )
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        let [a, b, c] = v.0;
        Vec3([
            self.xx * a + self.xy * b + self.xz * c,
            self.xy * a + self.yy * b + self.yz * c,
            self.xz * a + self.yz * b + self.zz * c,
        ])
    }

    /// `vᵀ M v`
    pub fn quad_form(&self, v: &Vec3) -> f64 {
        v.dot(&self.mul_vec(v))
    }

    /// Dense product `self · other`.
    pub fn mul_sym(&self, other: &Sym3) -> Mat3 {
        mat_mul(&self.to_mat(), &other.to_mat())
    }

    /// `self · inner · self`, symmetrized to absorb rounding.
    pub fn sandwich(&self, inner: &Sym3) -> Sym3 {
        let outer = self.to_mat();
        Sym3::symmetrize(&mat_mul(&mat_mul(&outer, &inner.to_mat()), &outer))
    }

    /// `r · self · rᵀ` for a dense `r`.
    pub fn rotate(&self, r: &Mat3) -> Sym3 {
        Sym3::symmetrize(&mat_mul(&mat_mul(r, &self.to_mat()), &mat_transpose(r)))
    }

    pub fn is_finite(&self) -> bool {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
            .iter()
            .all(|x| x.is_finite())
    }
}

impl Add for Sym3 {
    type Output = Sym3;
    fn add(self, o: Sym3) -> Sym3 {
        Sym3::new(
            self.xx + o.xx,
            self.xy + o.xy,
            self.xz + o.xz,
            self.yy + o.yy,
            self.yz + o.yz,
            self.zz + o.zz,
        )
    }
}

impl AddAssign for Sym3 {
    fn add_assign(&mut self, o: Sym3) {
        *self = *self + o;
    }
}

impl Sub for Sym3 {
    type Output = Sym3;
    fn sub(self, o: Sym3) -> Sym3 {
        self + o.scale(-1.0)
    }
}

/// Eigen-decomposition `M = Σ λᵢ qᵢqᵢᵀ` with ascending eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenTriple {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

impl EigenTriple {
    pub fn min_vector(&self) -> Vec3 {
        self.vectors[0]
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_value(&self) -> f64 {
        self.values[2]
    }

    /// `Σ f(λᵢ) qᵢqᵢᵀ`
    pub fn recompose(&self, f: impl Fn(f64) -> f64) -> Sym3 {
        self.values
            .iter()
            .zip(self.vectors.iter())
            .fold(Sym3::ZERO, |acc, (&l, q)| acc + Sym3::outer(q).scale(f(l)))
    }
}

fn jacobi_rotate(a: &mut Mat3, v: &mut Mat3, p: usize, q: usize) {
    let apq = a[p][q];
    if apq == 0.0 {
        return;
    }
    let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // A ← Jᵀ A J with J the (p,q) Givens rotation.
    for k in 0..3 {
        let akp = a[k][p];
        let akq = a[k][q];
        a[k][p] = c * akp - s * akq;
        a[k][q] = s * akp + c * akq;
    }
    for k in 0..3 {
        let apk = a[p][k];
        let aqk = a[q][k];
        a[p][k] = c * apk - s * aqk;
        a[q][k] = s * apk + c * aqk;
    }
    a[p][q] = 0.0;
    a[q][p] = 0.0;

    for row in v.iter_mut() {
        let vkp = row[p];
        let vkq = row[q];
        row[p] = c * vkp - s * vkq;
        row[q] = s * vkp + c * vkq;
    }
}

fn dominant_index(v: &Vec3) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if v[i].abs() > v[best].abs() + SIGN_TOL {
            best = i;
        }
    }
    best
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Eigenvalues ascend. Within a group of tied eigenvalues (relative gap below
/// 1e-12) vectors are ordered by the index of their largest component. Each
/// vector's first non-negligible component is positive.
pub fn sym_eig(m: &Sym3) -> EigenTriple {
    let mut a = m.to_mat();
    let mut v: Mat3 = Sym3::IDENTITY.to_mat();
    let scale = m.frobenius_norm();

    if scale > 0.0 && scale.is_finite() {
        for _sweep in 0..64 {
            let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
            if off <= f64::EPSILON * 1e-3 * scale {
                break;
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                let apq = a[p][q].abs();
                // Off-diagonal entries already below the diagonal's resolution are dropped.
                if apq <= 1e-3 * f64::EPSILON * (a[p][p].abs() + a[q][q].abs()) {
                    a[p][q] = 0.0;
                    a[q][p] = 0.0;
                } else {
                    jacobi_rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }

    let mut pairs: Vec<(f64, Vec3)> = (0..3)
        .map(|j| (a[j][j], Vec3([v[0][j], v[1][j], v[2][j]]).with_canonical_sign()))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

    let tie = TIE_TOL * scale.max(1.0);
    let mut start = 0;
    while start < 3 {
        let mut end = start + 1;
        while end < 3 && pairs[end].0 - pairs[end - 1].0 <= tie {
            end += 1;
        }
        pairs[start..end].sort_by_key(|(_, q)| dominant_index(q));
        start = end;
    }

    EigenTriple {
        values: [pairs[0].0, pairs[1].0, pairs[2].0],
        vectors: [pairs[0].1, pairs[1].1, pairs[2].1],
    }
}

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues in `[-1e-10·max(1,‖m‖_F), 0)` are floored to zero.
pub fn sqrt_psd(m: &Sym3) -> Result<Sym3, LinalgError> {
    let eig = sym_eig(m);
    let floor = -PSD_TOL * m.frobenius_norm().max(1.0);
    if eig.min_value() < floor {
        return Err(LinalgError::NotPsd(eig.min_value()));
    }
    Ok(eig.recompose(|l| l.max(0.0).sqrt()))
}

/// Full-rank inverse via the adjugate.
pub fn inv_sym(m: &Sym3) -> Result<Sym3, LinalgError> {
    let det = m.det();
    let norm = m.frobenius_norm();
    if !(det.abs() > SINGULAR_TOL * norm * norm * norm) || !det.is_finite() {
        return Err(LinalgError::Singular(det.abs()));
    }
    let inv_det = 1.0 / det;
    Ok(Sym3::new(
        (m.yy * m.zz - m.yz * m.yz) * inv_det,
        (m.xz * m.yz - m.xy * m.zz) * inv_det,
        (m.xy * m.yz - m.xz * m.yy) * inv_det,
        (m.xx * m.zz - m.xz * m.xz) * inv_det,
        (m.xy * m.xz - m.xx * m.yz) * inv_det,
        (m.xx * m.yy - m.xy * m.xy) * inv_det,
    ))
}

/// Moore–Penrose pseudo-inverse on the eigenbasis.
///
/// Eigenvalues with magnitude at most `1e-10·max(1, max|λ|)` map to zero.
pub fn pinv_sym(m: &Sym3) -> Sym3 {
    let eig = sym_eig(m);
    let cutoff = RANK_TOL * eig.values.iter().fold(1.0_f64, |a, l| a.max(l.abs()));
    eig.recompose(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 })
}

/// Number of eigenvalues above the relative rank cutoff.
pub fn numerical_rank(m: &Sym3) -> usize {
    let eig = sym_eig(m);
    let cutoff = RANK_TOL * eig.values.iter().fold(1.0_f64, |a, l| a.max(l.abs()));
    eig.values.iter().filter(|l| l.abs() > cutoff).count()
}

/// Rotation matrix by `angle` radians about `axis` (Rodrigues).
pub fn rotation(axis: &Vec3, angle: f64) -> Mat3 {
    let u = *axis * (1.0 / axis.norm());
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = u.0;
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}
