//! Exact Euclidean projections onto the feasible sets used by the solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VIError};
use crate::linalg::Point;

/// Feasible set with a closed-form Euclidean projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    /// Unconstrained R^d.
    Identity { dim: usize },
    /// Axis-aligned box `lo <= z <= hi`.
    Box { lo: Point, hi: Point },
    /// Closed Euclidean ball.
    Ball { center: Point, radius: f64 },
    /// Probability simplex `{z >= 0, sum z = 1}`.
    Simplex { dim: usize },
    /// Cartesian product; blocks are laid out consecutively.
    Product { blocks: Vec<Projection> },
}

impl Projection {
    pub fn identity(dim: usize) -> Self {
        Projection::Identity { dim }
    }

    pub fn simplex(dim: usize) -> Self {
        Projection::Simplex { dim }
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(VIError::InvalidArgument(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Projection::Ball { center, radius })
    }

    pub fn boxed(lo: Point, hi: Point) -> Result<Self> {
        VIError::check_dim(lo.dim(), hi.dim())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(VIError::InvalidArgument("box with lo > hi".into()));
        }
        Ok(Projection::Box { lo, hi })
    }

    pub fn product(blocks: Vec<Projection>) -> Self {
        Projection::Product { blocks }
    }

    pub fn dim(&self) -> usize {
        match self {
            Projection::Identity { dim } | Projection::Simplex { dim } => *dim,
            Projection::Box { lo, .. } => lo.dim(),
            Projection::Ball { center, .. } => center.dim(),
            Projection::Product { blocks } => blocks.iter().map(Projection::dim).sum(),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Projection::Identity { .. } => true,
            Projection::Product { blocks } => blocks.iter().all(Projection::is_identity),
            _ => false,
        }
    }

    /// `P_C(z) = argmin_{u in C} ||u - z||^2`.
    pub fn project(&self, z: &Point) -> Result<Point> {
        VIError::check_dim(self.dim(), z.dim())?;
        let mut out = z.clone();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Projection without the dimension check, for solver hot loops where the
    /// problem has already validated dimensions.
    pub(crate) fn project_unchecked(&self, z: Point) -> Point {
        let mut z = z;
        self.project_in_place(&mut z);
        z
    }

    fn project_in_place(&self, z: &mut [f64]) {
        match self {
            Projection::Identity { .. } => {}
            Projection::Box { lo, hi } => {
                for ((v, l), h) in z.iter_mut().zip(lo.iter()).zip(hi.iter()) {
                    *v = v.clamp(*l, *h);
                }
            }
            Projection::Ball { center, radius } => {
                let dist = z.iter().zip(center.iter()).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                if dist > *radius {
                    let s = radius / dist;
                    for (v, c) in z.iter_mut().zip(center.iter()) {
                        *v = c + s * (*v - c);
                    }
                }
            }
            Projection::Simplex { .. } => project_simplex_in_place(z),
            Projection::Product { blocks } => {
                let mut offset = 0;
                for b in blocks {
                    let d = b.dim();
                    b.project_in_place(&mut z[offset..offset + d]);
                    offset += d;
                }
            }
        }
    }

    /// True when `z` lies in the set up to `tol`.
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        match self {
            Projection::Identity { .. } => true,
            Projection::Box { lo, hi } => {
                z.iter().zip(lo.iter().zip(hi.iter())).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
            }
            Projection::Ball { center, radius } => {
                let d = crate::linalg::dist_sq(z, center).sqrt();
                d <= radius + tol
            }
            Projection::Simplex { .. } => z.iter().all(|v| *v >= -tol) && (z.iter().sum::<f64>() - 1.0).abs() <= tol,
            Projection::Product { blocks } => {
                let mut offset = 0;
                blocks.iter().all(|b| {
                    let d = b.dim();
                    let ok = b.contains(&z[offset..offset + d], tol);
                    offset += d;
                    ok
                })
            }
        }
    }
}

/// Sort-and-threshold projection onto the probability simplex.
///
/// Finds the largest `k` with `u_k - (sum_{i<=k} u_i - 1)/k > 0` over the
/// entries sorted in decreasing order, then shifts and clips. Ties are broken
/// by index (stable sort) so the result is platform independent.
fn project_simplex_in_place(z: &mut [f64]) {
    let n = z.len();
    if n == 0 {
        return;
    }
    let mut sorted: Vec<f64> = z.to_vec();
    // Stable sort, descending.
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k as f64 + 1.0);
        if *u - t > 0.0 {
            theta = t;
        }
    }
    for v in z.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}
