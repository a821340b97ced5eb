//! The 3x3 semidefinite program behind the boundedness certificate for
//! GRAAL with `phi = 2`:
//!
//! `max G_ii  s.t.  G ⪰ 0,  tr(G M) <= b,  G_jj <= cap_j`.
//!
//! [`solve_certificate`] is a log-barrier Newton method over the six free
//! entries of `G`. [`factorization_oracle`] solves the same program by
//! penalized multi-start ascent over `G = V V^T` and serves as a cross-check.

use nalgebra::{Matrix3, SymmetricEigen, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VIError};

/// Upper-triangle index pairs of the six free entries.
const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpInstance {
    pub m: [[f64; 3]; 3],
    pub trace_bound: f64,
    pub diag_caps: [Option<f64>; 3],
    /// Diagonal entry being maximized.
    pub objective_index: usize,
}

impl SdpInstance {
    /// The certificate program with caps `G_22, G_33 <= cap`.
    pub fn certificate(cap: f64) -> Self {
        SdpInstance {
            m: [[4.0, -4.0, 2.0], [-4.0, 7.0, -3.0], [2.0, -3.0, 1.0]],
            trace_bound: 1.0,
            diag_caps: [None, Some(cap), Some(cap)],
            objective_index: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            for j in 0..3 {
                if !self.m[i][j].is_finite() || self.m[i][j] != self.m[j][i] {
                    return Err(VIError::InvalidArgument("M must be finite and symmetric".into()));
                }
            }
        }
        if !(self.trace_bound > 0.0) || !self.trace_bound.is_finite() {
            return Err(VIError::InvalidArgument(format!("trace bound must be positive, got {}", self.trace_bound)));
        }
        if self.diag_caps.iter().flatten().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(VIError::InvalidArgument("diagonal caps must be positive".into()));
        }
        if self.objective_index > 2 {
            return Err(VIError::InvalidArgument(format!("objective index {} out of range", self.objective_index)));
        }
        Ok(())
    }

    fn m3(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.m[i][j])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub value: f64,
    pub g: [[f64; 3]; 3],
    pub newton_steps: usize,
}

fn to_array(g: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = g[(i, j)];
        }
    }
    out
}

fn from_vars(x: &Vector6<f64>) -> Matrix3<f64> {
    let mut g = Matrix3::zeros();
    for (a, &(i, j)) in PAIRS.iter().enumerate() {
        g[(i, j)] = x[a];
        g[(j, i)] = x[a];
    }
    g
}

/// `d tr(G M) / d x_a`.
fn trace_coeffs(m: &Matrix3<f64>) -> Vector6<f64> {
    Vector6::from_fn(|a, _| {
        let (i, j) = PAIRS[a];
        if i == j {
            m[(i, i)]
        } else {
            2.0 * m[(i, j)]
        }
    })
}

/// Unit symmetric matrix for variable `a`.
fn basis(a: usize) -> Matrix3<f64> {
    let (i, j) = PAIRS[a];
    let mut e = Matrix3::zeros();
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

struct Barrier<'a> {
    inst: &'a SdpInstance,
    tcoef: Vector6<f64>,
}

impl Barrier<'_> {
    /// Slacks of the scalar constraints, or `None` outside the interior.
    fn value(&self, x: &Vector6<f64>, t: f64) -> Option<f64> {
        let g = from_vars(x);
        let chol = g.cholesky()?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let s0 = self.inst.trace_bound - self.tcoef.dot(x);
        if !(s0 > 0.0) {
            return None;
        }
        let mut v = t * g[(self.inst.objective_index, self.inst.objective_index)] + logdet + s0.ln();
        for (i, cap) in self.inst.diag_caps.iter().enumerate() {
            if let Some(c) = cap {
                let s = c - g[(i, i)];
                if !(s > 0.0) {
                    return None;
                }
                v += s.ln();
            }
        }
        Some(v)
    }

    fn grad_hess(&self, x: &Vector6<f64>, t: f64) -> (Vector6<f64>, nalgebra::Matrix6<f64>) {
        let g = from_vars(x);
        let ginv = g.try_inverse().unwrap_or_else(Matrix3::zeros);
        let obj = PAIRS.iter().position(|&p| p == (self.inst.objective_index, self.inst.objective_index)).unwrap_or(0);
        let mut grad = Vector6::zeros();
        let mut hess = nalgebra::Matrix6::zeros();
        let es: Vec<Matrix3<f64>> = (0..6).map(basis).collect();
        let ge: Vec<Matrix3<f64>> = es.iter().map(|e| ginv * e).collect();
        for a in 0..6 {
            grad[a] = ge[a].trace();
            for b in 0..6 {
                hess[(a, b)] = -(ge[a] * ge[b]).trace();
            }
        }
        grad[obj] += t;
        let s0 = self.inst.trace_bound - self.tcoef.dot(x);
        grad -= self.tcoef / s0;
        hess -= self.tcoef * self.tcoef.transpose() / (s0 * s0);
        for (i, cap) in self.inst.diag_caps.iter().enumerate() {
            if let Some(c) = cap {
                let a = PAIRS.iter().position(|&p| p == (i, i)).unwrap();
                let s = c - g[(i, i)];
                grad[a] -= 1.0 / s;
                hess[(a, a)] -= 1.0 / (s * s);
            }
        }
        (grad, hess)
    }
}

/// Maximizes the objective to within `tol` by a barrier path-following
/// method. The returned `G` is strictly feasible.
pub fn solve_certificate(inst: &SdpInstance, tol: f64) -> Result<Certificate> {
    inst.validate()?;
    if !(tol > 0.0) {
        return Err(VIError::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let m = inst.m3();
    let tcoef = trace_coeffs(&m);
    let barrier = Barrier { inst, tcoef };

    // A small multiple of the identity is strictly feasible.
    let mut eps: f64 = 1.0;
    let trace_m = m.trace();
    if trace_m > 0.0 {
        eps = eps.min(0.5 * inst.trace_bound / trace_m);
    }
    for c in inst.diag_caps.iter().flatten() {
        eps = eps.min(0.5 * c);
    }
    let mut x = Vector6::from_fn(|a, _| if PAIRS[a].0 == PAIRS[a].1 { eps } else { 0.0 });

    let n_barriers = 3.0 + 1.0 + inst.diag_caps.iter().flatten().count() as f64;
    let mut t = 1.0;
    let mut steps = 0;
    let obj = |x: &Vector6<f64>| from_vars(x)[(inst.objective_index, inst.objective_index)];
    loop {
        for _ in 0..200 {
            let (grad, hess) = barrier.grad_hess(&x, t);
            let dir = match (-hess).cholesky() {
                Some(ch) => ch.solve(&grad),
                None => grad,
            };
            let decrement = grad.dot(&dir);
            if decrement < 1e-14 {
                break;
            }
            let f0 = barrier.value(&x, t).unwrap_or(f64::NEG_INFINITY);
            let mut s = 1.0;
            loop {
                let cand = x + dir * s;
                if let Some(v) = barrier.value(&cand, t) {
                    if v >= f0 + 0.25 * s * decrement {
                        x = cand;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-16 {
                    break;
                }
            }
            steps += 1;
            if s < 1e-16 {
                break;
            }
        }
        if obj(&x) > 1e12 {
            return Err(VIError::InvalidArgument("objective is unbounded over the feasible set".into()));
        }
        if n_barriers / t < 1e-3 * tol {
            break;
        }
        t *= 10.0;
    }
    Ok(Certificate { value: obj(&x), g: to_array(&from_vars(&x)), newton_steps: steps })
}

/// Independent feasibility check: `G` symmetric, `min eig(G) >= -tol`,
/// `tr(G M) <= b + tol`, caps within `tol`.
pub fn verify_feasible(inst: &SdpInstance, g: &[[f64; 3]; 3], tol: f64) -> bool {
    let gm = Matrix3::from_fn(|i, j| g[i][j]);
    if (gm - gm.transpose()).abs().max() > tol || gm.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let min_eig = SymmetricEigen::new(gm).eigenvalues.min();
    let tr = (gm * inst.m3()).trace();
    let caps_ok = inst.diag_caps.iter().enumerate().all(|(i, c)| c.is_none_or(|c| gm[(i, i)] <= c + tol));
    min_eig >= -tol && tr <= inst.trace_bound + tol && caps_ok
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub starts: usize,
    pub seed: u64,
    /// Stop an ascent stage once the objective moves less than this.
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { starts: 64, seed: 0, tol: 1e-8 }
    }
}

struct Penalized<'a> {
    inst: &'a SdpInstance,
    m: Matrix3<f64>,
}

impl Penalized<'_> {
    fn value_grad(&self, v: &Matrix3<f64>, mu: f64) -> (f64, Matrix3<f64>) {
        let g = v * v.transpose();
        let k = self.inst.objective_index;
        let mut val = g[(k, k)];
        // d G_kk / dV = 2 e_k e_k^T V.
        let mut grad = Matrix3::zeros();
        grad.set_row(k, &(2.0 * v.row(k)));
        let viol = (g * self.m).trace() - self.inst.trace_bound;
        if viol > 0.0 {
            val -= 0.5 * mu * viol * viol;
            grad -= mu * viol * 2.0 * self.m * v;
        }
        for (i, cap) in self.inst.diag_caps.iter().enumerate() {
            if let Some(c) = cap {
                let vi = g[(i, i)] - c;
                if vi > 0.0 {
                    val -= 0.5 * mu * vi * vi;
                    let row = v.row(i) * (mu * vi * 2.0);
                    let cur = grad.row(i) - row;
                    grad.set_row(i, &cur);
                }
            }
        }
        (val, grad)
    }

    /// Scales `G` onto the boundary of the feasible cone section, making the
    /// tightest constraint active.
    fn polish(&self, g: Matrix3<f64>) -> Matrix3<f64> {
        let mut s = f64::INFINITY;
        let tr = (g * self.m).trace();
        if tr > 0.0 {
            s = s.min(self.inst.trace_bound / tr);
        }
        for (i, cap) in self.inst.diag_caps.iter().enumerate() {
            if let (Some(c), true) = (cap, g[(i, i)] > 0.0) {
                s = s.min(c / g[(i, i)]);
            }
        }
        if s.is_finite() {
            g * s
        } else {
            g
        }
    }

    fn ascend(&self, mut v: Matrix3<f64>, tol: f64) -> Matrix3<f64> {
        let mut mu = 10.0;
        while mu <= 1e7 {
            let mut step = 1e-2;
            let (mut val, mut grad) = self.value_grad(&v, mu);
            for _ in 0..20_000 {
                let gn2 = grad.norm_squared();
                let mut accepted = false;
                while step > 1e-18 {
                    let cand = v + step * grad;
                    let (cv, cg) = self.value_grad(&cand, mu);
                    if cv >= val + 0.3 * step * gn2 {
                        let moved = cv - val;
                        v = cand;
                        val = cv;
                        grad = cg;
                        step *= 2.0;
                        accepted = moved > tol;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            mu *= 10.0;
        }
        v
    }
}

/// Penalized multi-start ascent over `G = V V^T`, followed by scaling to
/// feasibility. Starts run in parallel; the result is the best start.
pub fn factorization_oracle(inst: &SdpInstance, cfg: &OracleConfig) -> Result<Certificate> {
    inst.validate()?;
    if cfg.starts == 0 {
        return Err(VIError::InvalidArgument("oracle needs at least one start".into()));
    }
    let pen = Penalized { inst, m: inst.m3() };
    let k = inst.objective_index;
    let best = (0..cfg.starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(s as u64));
            let v0 = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let v = pen.ascend(v0, cfg.tol);
            let g = pen.polish(v * v.transpose());
            (g[(k, k)], g)
        })
        .reduce(|| (f64::NEG_INFINITY, Matrix3::zeros()), |a, b| if b.0 > a.0 { b } else { a });
    Ok(Certificate { value: best.0, g: to_array(&best.1), newton_steps: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_instance_puts_mass_on_objective() {
        let inst = SdpInstance {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            trace_bound: 1.0,
            diag_caps: [None; 3],
            objective_index: 0,
        };
        let c = solve_certificate(&inst, 1e-8).unwrap();
        assert!((c.value - 1.0).abs() < 1e-7, "{}", c.value);
    }

    #[test]
    fn diagonal_instance_closed_form() {
        // max G_11 with 2 G_11 + ... <= 3: value 3/2.
        let inst = SdpInstance {
            m: [[2.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 1.0]],
            trace_bound: 3.0,
            diag_caps: [None; 3],
            objective_index: 0,
        };
        assert!((solve_certificate(&inst, 1e-9).unwrap().value - 1.5).abs() < 1e-8);
    }

    #[test]
    fn verify_feasible_examples() {
        let inst = SdpInstance::certificate(2.0);
        assert!(verify_feasible(&inst, &[[0.0; 3]; 3], 1e-9));
        let mut g = [[0.0; 3]; 3];
        g[1][1] = 3.0;
        assert!(!verify_feasible(&inst, &g, 1e-9));
        let not_psd = [[1.0, 0.0, 0.0], [0.0, -0.5, 0.0], [0.0, 0.0, 0.0]];
        assert!(!verify_feasible(&inst, &not_psd, 1e-9));
    }

    #[test]
    fn solution_replays_as_feasible() {
        for cap in [2.0, 1.2] {
            let inst = SdpInstance::certificate(cap);
            let c = solve_certificate(&inst, 1e-8).unwrap();
            assert!(verify_feasible(&inst, &c.g, 1e-9));
        }
    }

    #[test]
    fn loosening_caps_never_decreases_value() {
        let caps = [0.5, 1.0, 1.2, 2.0, 5.0];
        let vals: Vec<f64> =
            caps.iter().map(|&c| solve_certificate(&SdpInstance::certificate(c), 1e-8).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-7), "{vals:?}");
    }

    #[test]
    fn oracle_agrees_on_small_instances() {
        let inst = SdpInstance::certificate(1.2);
        let a = solve_certificate(&inst, 1e-8).unwrap();
        let b = factorization_oracle(&inst, &OracleConfig { starts: 8, ..Default::default() }).unwrap();
        assert!((a.value - b.value).abs() < 1e-3, "{} vs {}", a.value, b.value);
        assert!(verify_feasible(&inst, &b.g, 1e-9));
    }

    #[test]
    fn rejects_bad_instances() {
        let mut inst = SdpInstance::certificate(2.0);
        inst.m[0][1] = 1.0;
        assert!(solve_certificate(&inst, 1e-8).is_err());
        let mut inst = SdpInstance::certificate(2.0);
        inst.diag_caps[1] = Some(-1.0);
        assert!(inst.validate().is_err());
        assert!(solve_certificate(&SdpInstance::certificate(2.0), 0.0).is_err());
    }

    #[test]
    fn detects_unbounded_objective() {
        let inst = SdpInstance { m: [[0.0; 3]; 3], trace_bound: 1.0, diag_caps: [None; 3], objective_index: 0 };
        assert!(solve_certificate(&inst, 1e-6).is_err());
    }
}
