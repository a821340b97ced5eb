//! Suboptimality measures and numeric checks of the convergence inequalities.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VIError};
use crate::linalg::{Matrix, Point};
use crate::trace::IterState;
use crate::vi::VIProblem;

/// The compact set `S` of the restricted gap `max_{z in S} <F(z), z̄ - z>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapSpec {
    /// Matrix game `min_x max_y x^T A y` on a product of simplices; the gap
    /// has a closed form.
    SimplexBilinear { a: Matrix },
    /// `S = C ∩ B(center, radius)`.
    BallAround { center: Point, radius: f64 },
    /// A finite set of feasible points.
    Sample { points: Vec<Point> },
}

impl GapSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            GapSpec::SimplexBilinear { a } => VIError::check_dim(dim, a.rows() + a.cols()),
            GapSpec::BallAround { center, radius } => {
                VIError::check_dim(dim, center.dim())?;
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(VIError::InvalidArgument(format!("gap ball radius must be positive, got {radius}")));
                }
                Ok(())
            }
            GapSpec::Sample { points } => {
                if points.is_empty() {
                    return Err(VIError::InvalidArgument("gap sample set is empty".into()));
                }
                points.iter().try_for_each(|p| VIError::check_dim(dim, p.dim()))
            }
        }
    }
}

/// Gap evaluator with any per-problem preprocessing done once.
pub struct GapEvaluator<'a> {
    problem: &'a VIProblem,
    mode: GapMode,
}

enum GapMode {
    Bilinear(Matrix),
    /// Exact maximization over a ball for affine `F = Bz + q` on `C = R^d`.
    AffineBall {
        center: Point,
        radius: f64,
        b: Matrix,
        q: Vec<f64>,
        eig: SymmetricEigen<f64, nalgebra::Dyn>,
    },
    /// Lower bound from a fixed candidate set inside the ball.
    SampledBall {
        center: Point,
        radius: f64,
        directions: Vec<Point>,
    },
    Sample(Vec<Point>),
}

/// Random unit directions used by the sampled ball gap.
const BALL_DIRECTIONS: usize = 64;

impl<'a> GapEvaluator<'a> {
    pub fn new(spec: GapSpec, problem: &'a VIProblem, seed: u64) -> Result<Self> {
        spec.validate(problem.dim())?;
        let mode = match spec {
            GapSpec::SimplexBilinear { a } => GapMode::Bilinear(a),
            GapSpec::Sample { points } => GapMode::Sample(points),
            GapSpec::BallAround { center, radius } => match problem.affine_form() {
                Some(form) if problem.projection().is_identity() => {
                    let n = form.b.rows();
                    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (form.b[(i, j)] + form.b[(j, i)]));
                    GapMode::AffineBall {
                        center,
                        radius,
                        b: form.b.clone(),
                        q: form.c.clone(),
                        eig: SymmetricEigen::new(sym),
                    }
                }
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let d = problem.dim();
                    let directions = (0..BALL_DIRECTIONS)
                        .map(|_| {
                            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                            let p = Point::from_vec_unchecked(v);
                            let n = p.norm();
                            p.scale(1.0 / n)
                        })
                        .collect();
                    GapMode::SampledBall { center, radius, directions }
                }
            },
        };
        Ok(GapEvaluator { problem, mode })
    }

    /// True when the value is the exact restricted gap rather than a lower
    /// bound from sampling.
    pub fn is_exact(&self) -> bool {
        matches!(self.mode, GapMode::Bilinear(_) | GapMode::AffineBall { .. } | GapMode::Sample(_))
    }

    pub fn eval(&self, z_bar: &Point) -> Result<f64> {
        VIError::check_dim(self.problem.dim(), z_bar.dim())?;
        if !z_bar.is_finite() {
            return Err(VIError::NonFinite("gap evaluation point".into()));
        }
        Ok(match &self.mode {
            GapMode::Bilinear(a) => bilinear_gap(a, z_bar),
            GapMode::Sample(points) => {
                points.iter().map(|z| gap_term(self.problem, z, z_bar)).fold(f64::NEG_INFINITY, f64::max)
            }
            GapMode::AffineBall { center, radius, b, q, eig } => affine_ball_gap(b, q, eig, center, *radius, z_bar),
            GapMode::SampledBall { center, radius, directions } => {
                self.sampled_ball_gap(center, *radius, directions, z_bar)
            }
        })
    }

    fn sampled_ball_gap(&self, center: &Point, radius: f64, dirs: &[Point], z_bar: &Point) -> f64 {
        let proj = self.problem.projection();
        let mut best = f64::NEG_INFINITY;
        let mut consider = |z: Point| {
            let z = if proj.is_identity() { z } else { proj.project_unchecked(z) };
            if z.dist(center) <= radius * (1.0 + 1e-12) {
                best = best.max(gap_term(self.problem, &z, z_bar));
            }
        };
        consider(center.clone());
        if z_bar.dist(center) <= radius {
            consider(z_bar.clone());
        }
        let mut guided = Vec::new();
        let f_bar = self.problem.eval(z_bar);
        for v in [f_bar, z_bar.sub(center)] {
            let n = v.norm();
            if n > 0.0 {
                guided.push(v.scale(1.0 / n));
            }
        }
        for u in guided.iter().chain(dirs) {
            for s in [1.0, -1.0] {
                for frac in [0.25, 0.5, 1.0] {
                    consider(center.add_scaled(s * frac * radius, u));
                }
            }
        }
        best
    }
}

fn gap_term(problem: &VIProblem, z: &Point, z_bar: &Point) -> f64 {
    problem.eval(z).dot(&z_bar.sub(z))
}

/// `max_j (A^T x̄)_j - min_i (A ȳ)_i` for `z̄ = (x̄, ȳ)`.
pub fn bilinear_gap(a: &Matrix, z_bar: &[f64]) -> f64 {
    let (x, y) = z_bar.split_at(a.rows());
    let aty = a.matvec_t(x);
    let ay = a.matvec(y);
    let hi = aty.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ay.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Exact `max_{||z - c|| <= r} <Bz + q, z̄ - z>`.
///
/// With `z = c + u` the objective is `k + g.u - u^T S u` where
/// `g = B^T e - (Bc + q)`, `e = z̄ - c` and `S` is the symmetric part of `B`.
/// This is a trust-region subproblem solved in the eigenbasis of `S` by
/// bisection on the multiplier.
fn affine_ball_gap(
    b: &Matrix,
    q: &[f64],
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    center: &Point,
    radius: f64,
    z_bar: &Point,
) -> f64 {
    let n = center.dim();
    let e = z_bar.sub(center);
    let mut g0 = b.matvec(center);
    g0.iter_mut().zip(q).for_each(|(v, qi)| *v += qi);
    let constant = crate::linalg::dot(&g0, &e);
    let bte = b.matvec_t(&e);
    let g: Vec<f64> = bte.iter().zip(&g0).map(|(a, c)| a - c).collect();

    let lam = &eig.eigenvalues;
    let vecs = &eig.eigenvectors;
    let gt: Vec<f64> = (0..n).map(|i| (0..n).map(|r| vecs[(r, i)] * g[r]).sum()).collect();
    let lam_min = lam.iter().cloned().fold(f64::INFINITY, f64::min);
    let r2 = radius * radius;

    // ||u(mu)||^2 with u_i = gt_i / (2 (lam_i + mu)).
    let norm_sq = |mu: f64| -> f64 {
        gt.iter()
            .zip(lam.iter())
            .map(|(gi, li)| {
                let den = 2.0 * (li + mu);
                if den == 0.0 {
                    if *gi == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (gi / den).powi(2)
                }
            })
            .sum()
    };
    let value = |u: &[f64]| -> f64 {
        u.iter().zip(gt.iter().zip(lam.iter())).map(|(ui, (gi, li))| gi * ui - li * ui * ui).sum::<f64>()
    };
    let scale = lam.iter().fold(0.0f64, |m, l| m.max(l.abs())).max(1e-300);
    let tiny = 1e-14 * scale;

    // Interior maximizer exists when S is positive definite and the
    // unconstrained optimum lies in the ball.
    if lam_min > tiny && norm_sq(0.0) <= r2 {
        let u: Vec<f64> = gt.iter().zip(lam.iter()).map(|(gi, li)| gi / (2.0 * li)).collect();
        return constant + value(&u);
    }

    let mu_lo = (-lam_min).max(0.0);
    // Hard case: the boundary cannot be reached by the multiplier alone.
    let lo_norm = norm_sq(mu_lo + tiny);
    if lo_norm.is_finite() && lo_norm < r2 {
        let mut u: Vec<f64> = gt
            .iter()
            .zip(lam.iter())
            .map(|(gi, li)| {
                let den = 2.0 * (li + mu_lo);
                if den.abs() <= 2.0 * tiny {
                    0.0
                } else {
                    gi / den
                }
            })
            .collect();
        let rest = (r2 - u.iter().map(|v| v * v).sum::<f64>()).max(0.0).sqrt();
        let i_min = (0..n).min_by(|&a, &b| lam[a].total_cmp(&lam[b])).unwrap_or(0);
        u[i_min] += rest;
        return constant + value(&u);
    }

    let mut lo = mu_lo;
    let mut hi = mu_lo.max(1.0);
    while norm_sq(hi) > r2 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_sq(mid) > r2 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let u: Vec<f64> = gt.iter().zip(lam.iter()).map(|(gi, li)| gi / (2.0 * (li + hi))).collect();
    constant + value(&u)
}

/// One-off evaluation of the restricted gap of `z_bar` over `spec`.
pub fn dual_gap(spec: &GapSpec, problem: &VIProblem, z_bar: &Point) -> Result<f64> {
    GapEvaluator::new(spec.clone(), problem, 0)?.eval(z_bar)
}

/// Six consecutive GRAAL points used by the one-iteration inequality.
#[derive(Clone, Debug)]
pub struct GraalWindow {
    pub z_prev: Point,
    pub z: Point,
    pub z_next: Point,
    pub z_bar_prev: Point,
    pub z_bar: Point,
    pub z_bar_next: Point,
}

impl GraalWindow {
    /// From states `s_k, s_{k+1}, s_{k+2}` of a GRAAL run, where state `s_j`
    /// holds `z^j`, `z^{j-1}` and `z̄^{j-1}`.
    pub fn from_states(s: [&IterState; 3]) -> Self {
        GraalWindow {
            z_prev: s[0].z_prev.clone(),
            z: s[0].z.clone(),
            z_next: s[1].z.clone(),
            z_bar_prev: s[0].z_bar.clone(),
            z_bar: s[1].z_bar.clone(),
            z_bar_next: s[2].z_bar.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// One-iteration energy inequality of fixed-step GRAAL (monotone `F`,
/// `z = z*`), in the form
///
/// ```text
/// G + phi/(phi-1) ||z̄^{k+1}-z||^2 + (phi/2) ||z^{k+1}-z^k||^2
///   <= phi/(phi-1) ||z̄^k-z||^2 + (phi-1-1/phi) ||z^{k+1}-z̄^k||^2
///      + ((2 alpha L)^2 / (2 phi)) ||z^k-z^{k-1}||^2 - (1/phi) ||z^k-z̄^{k-1}||^2
/// ```
///
/// with `G = 2 alpha <F(z), z^k - z>`. Holds for `k >= 1`. The tolerance is
/// relative to the largest term.
pub fn check_lyapunov_inequality(
    problem: &VIProblem,
    w: &GraalWindow,
    phi: f64,
    alpha: f64,
    tol: f64,
) -> Result<InequalityCheck> {
    let zs = problem.solution().ok_or(VIError::MissingSolution)?;
    let l = problem.lipschitz().ok_or_else(|| VIError::config("lipschitz", "energy inequality needs L"))?;
    let fz = problem.eval(zs);
    let coef = phi / (phi - 1.0);
    let terms_lhs =
        [2.0 * alpha * fz.dot(&w.z.sub(zs)), coef * w.z_bar_next.dist_sq(zs), 0.5 * phi * w.z_next.dist_sq(&w.z)];
    let terms_rhs = [
        coef * w.z_bar.dist_sq(zs),
        (phi - 1.0 - 1.0 / phi) * w.z_next.dist_sq(&w.z_bar),
        (2.0 * alpha * l).powi(2) / (2.0 * phi) * w.z.dist_sq(&w.z_prev),
        -w.z.dist_sq(&w.z_bar_prev) / phi,
    ];
    let lhs: f64 = terms_lhs.iter().sum();
    let rhs: f64 = terms_rhs.iter().sum();
    let scale = terms_lhs.iter().chain(&terms_rhs).fold(0.0f64, |m, t| m.max(t.abs()));
    Ok(InequalityCheck { holds: lhs <= rhs + tol * scale.max(f64::MIN_POSITIVE), lhs, rhs })
}

/// aGRAAL quantities around iteration `k` for the weak-Minty descent check.
#[derive(Clone, Debug)]
pub struct WmWindow {
    pub z_prev: Point,
    pub z: Point,
    pub z_next: Point,
    pub z_bar: Point,
    pub z_bar_next: Point,
    pub f_prev: Point,
    pub f: Point,
    pub alpha_prev: f64,
    pub alpha: f64,
    pub theta_prev: f64,
    pub theta: f64,
}

impl WmWindow {
    /// From aGRAAL states `s_k, s_{k+1}, s_{k+2}` (`k >= 1`).
    pub fn from_states(s: [&IterState; 3]) -> Self {
        WmWindow {
            z_prev: s[0].z_prev.clone(),
            z: s[0].z.clone(),
            z_next: s[1].z.clone(),
            z_bar: s[1].z_bar.clone(),
            z_bar_next: s[2].z_bar.clone(),
            f_prev: s[0].f_prev.clone(),
            f: s[0].f_curr.clone(),
            alpha_prev: s[0].alpha_k,
            alpha: s[1].alpha_k,
            theta_prev: s[0].theta_k,
            theta: s[1].theta_k,
        }
    }
}

/// Energy decrease of unconstrained aGRAAL under a weak Minty solution:
///
/// ```text
/// E_{k+1} + a_k ((a_{k-1}/phi) ||F(z^{k-1})||^2 + (a_k (1 + 1/phi - theta_k) - rho) ||F(z^k)||^2) <= E_k
/// E_k = phi/(phi-1) ||z̄^k - z*||^2 + (theta_{k-1}/2) ||z^k - z^{k-1}||^2
/// ```
pub fn check_wm_descent(problem: &VIProblem, w: &WmWindow, phi: f64, tol: f64) -> Result<InequalityCheck> {
    let zs = problem.solution().ok_or(VIError::MissingSolution)?;
    let rho = problem.rho().ok_or_else(|| VIError::config("rho", "weak-Minty descent check needs rho"))?;
    let coef = phi / (phi - 1.0);
    let e_k = coef * w.z_bar.dist_sq(zs) + 0.5 * w.theta_prev * w.z.dist_sq(&w.z_prev);
    let e_next = coef * w.z_bar_next.dist_sq(zs) + 0.5 * w.theta * w.z_next.dist_sq(&w.z);
    let extra = w.alpha
        * (w.alpha_prev / phi * w.f_prev.norm_sq() + (w.alpha * (1.0 + 1.0 / phi - w.theta) - rho) * w.f.norm_sq());
    let lhs = e_next + extra;
    let scale = e_k.abs().max(e_next.abs()).max(extra.abs()).max(f64::MIN_POSITIVE);
    Ok(InequalityCheck { holds: lhs <= e_k + tol * scale, lhs, rhs: e_k })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakMintyEstimate {
    pub lipschitz: f64,
    pub rho: f64,
}

impl WeakMintyEstimate {
    /// Largest `phi` for which `(2 - phi)/(phi L) > rho`, i.e. `2/(1 + rho L)`.
    pub fn max_admissible_phi(&self) -> f64 {
        2.0 / (1.0 + self.rho * self.lipschitz)
    }
}

/// Grid estimates of the local Lipschitz constant and the weak Minty
/// parameter of a 2-D problem on `[lo, hi]^2` with `n` nodes per axis.
///
/// `L` is the largest difference quotient between 8-neighbours, `rho` the
/// largest `-2 <F(z), z - z*> / ||F(z)||^2` over the nodes, clipped at 0.
pub fn estimate_weak_minty_params(problem: &VIProblem, lo: f64, hi: f64, n: usize) -> Result<WeakMintyEstimate> {
    if n < 2 {
        return Err(VIError::InvalidArgument(format!("grid needs at least 2 nodes per axis, got {n}")));
    }
    VIError::check_dim(2, problem.dim())?;
    if !(hi > lo) {
        return Err(VIError::InvalidArgument(format!("empty grid interval [{lo}, {hi}]")));
    }
    let zs = problem.solution().ok_or(VIError::MissingSolution)?.clone();
    let h = (hi - lo) / (n - 1) as f64;
    let coord = |i: usize| if i == n - 1 { hi } else { lo + i as f64 * h };

    let values: Vec<[f64; 2]> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..n).map(move |j| {
                let f = problem.eval(&Point::from_vec_unchecked(vec![coord(i), coord(j)]));
                [f[0], f[1]]
            })
        })
        .collect();
    let at = |i: usize, j: usize| values[i * n + j];

    let (l_hat, rho_hat) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut l_max = 0.0f64;
            let mut rho_max = 0.0f64;
            for j in 0..n {
                let f = at(i, j);
                let (x, y) = (coord(i), coord(j));
                let f2 = f[0] * f[0] + f[1] * f[1];
                if f2 > 0.0 {
                    let inner = f[0] * (x - zs[0]) + f[1] * (y - zs[1]);
                    rho_max = rho_max.max(-2.0 * inner / f2);
                }
                // Forward half of the 8-neighbourhood covers every pair once.
                for (di, dj) in [(1i64, 0i64), (0, 1), (1, 1), (1, -1)] {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= n as i64 || nj >= n as i64 {
                        continue;
                    }
                    let (ni, nj) = (ni as usize, nj as usize);
                    let g = at(ni, nj);
                    let dz = ((coord(ni) - x).powi(2) + (coord(nj) - y).powi(2)).sqrt();
                    let df = ((g[0] - f[0]).powi(2) + (g[1] - f[1]).powi(2)).sqrt();
                    l_max = l_max.max(df / dz);
                }
            }
            (l_max, rho_max)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(WeakMintyEstimate { lipschitz: l_hat, rho: rho_hat })
}

/// `12 ||z0 - z*||^2` and `1.2 R^2` with `R^2 = ||z1 - z*||^2 + ||z0 - z*||^2`:
/// the two boundedness envelopes for `||z̄^k - z*||^2` of GRAAL with `phi = 2`.
pub fn boundedness_envelopes(z0: &Point, z1: &Point, zs: &Point) -> (f64, f64) {
    let r0 = z0.dist_sq(zs);
    (12.0 * r0, 1.2 * (z1.dist_sq(zs) + r0))
}

/// `32 L ||z0 - z*||^2 / ((1 - eps) k)`.
pub fn gap_rate_bound(lipschitz: f64, r0_sq: f64, epsilon: f64, k: usize) -> f64 {
    32.0 * lipschitz * r0_sq / ((1.0 - epsilon) * k as f64)
}

/// `D = max_{z in B(c, r)} (phi/(phi-1)) ||z1 - z||^2 + (theta0/2) ||z0 - z||^2`,
/// the constant of the adaptive gap bound, over a ball `S` (closed form: the
/// maximizer sits on the ray from the weighted mean through the center).
pub fn gap_constant_d(phi: f64, theta0: f64, z0: &Point, z1: &Point, center: &Point, radius: f64) -> f64 {
    let a = phi / (phi - 1.0);
    let b = theta0 / 2.0;
    let s = a + b;
    let m = z1.lincomb(a / s, z0, b / s);
    let k = a * z1.norm_sq() + b * z0.norm_sq() - s * m.norm_sq();
    let reach = center.dist(&m) + radius;
    s * reach * reach + k
}

/// Largest observed `||F(u) - F(v)|| / ||u - v||` over `pairs` random pairs in
/// `[lo, hi]^d`.
pub fn sampled_lipschitz_ratio(problem: &VIProblem, lo: f64, hi: f64, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.dim();
    let mut draw = || Point::from_vec_unchecked((0..d).map(|_| rng.gen_range(lo..hi)).collect());
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (u, v) = (draw(), draw());
        let dz = u.dist(&v);
        if dz > 0.0 {
            worst = worst.max(problem.eval(&u).dist(&problem.eval(&v)) / dz);
        }
    }
    worst
}
