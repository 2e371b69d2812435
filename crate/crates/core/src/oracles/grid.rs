use std::collections::HashMap;

use crate::fisher::fisher_single;
use crate::linalg3::{inv_sym, Sym3, Vec3};
use crate::measurement::MeasurementAxis;
use crate::states::BlochVector;

/// Near-uniform unit vectors from a subdivided icosahedron.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    points: Vec<Vec3>,
}

impl SphereGrid {
    /// `10·4^level + 2` vertices; level 4 gives 2562.
    pub fn icosahedral(level: u32) -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut points: Vec<Vec3> = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| unit(Vec3::new(x, y, z)))
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |i: usize, j: usize, points: &mut Vec<Vec3>| {
                *midpoints.entry((i.min(j), i.max(j))).or_insert_with(|| {
                    points.push(unit(points[i] + points[j]));
                    points.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for &[a, b, c] in &faces {
                let ab = mid(a, b, &mut points);
                let bc = mid(b, c, &mut points);
                let ca = mid(c, a, &mut points);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        SphereGrid { points }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for SphereGrid {
    fn default() -> Self {
        SphereGrid::icosahedral(4)
    }
}

fn unit(v: Vec3) -> Vec3 {
    v * (1.0 / v.norm())
}

/// `tr[H (F̃ + F(a, ŝ))⁻¹]` by direct inversion; `+∞` if the sum is singular.
pub fn direct_objective(f_tilde: &Sym3, s_hat: &BlochVector, weight: &Sym3, a: &Vec3) -> f64 {
    let axis = MeasurementAxis::new(*a).expect("nonzero axis");
    match inv_sym(&(*f_tilde + fisher_single(&axis, s_hat))) {
        Ok(inv) => {
            let m = weight.mul_sym(&inv);
            m[0][0] + m[1][1] + m[2][2]
        }
        Err(_) => f64::INFINITY,
    }
}

/// Grid minimizer of [`direct_objective`] and its value.
pub fn grid_objective_min(
    f_tilde: &Sym3,
    s_hat: &BlochVector,
    weight: &Sym3,
    grid: &SphereGrid,
) -> (Vec3, f64) {
    grid.points()
        .iter()
        .map(|a| (*a, direct_objective(f_tilde, s_hat, weight, a)))
        .fold((Vec3::ZERO, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}
