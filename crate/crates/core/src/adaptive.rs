//! Step-size machinery for aGRAAL: the first-step linesearch, the constant
//! `c` of the step-sum lower bound, and diagnostics on recorded steps.

use crate::error::{Result, VIError};
use crate::linalg::Point;
use crate::trace::IterState;
use crate::vi::VIProblem;

#[derive(Clone, Debug)]
pub struct LinesearchResult {
    pub alpha0: f64,
    pub z1: Point,
    /// `F(z1)`, so the caller does not pay for it twice.
    pub f1: Point,
    /// Number of rejected trial steps in the coarse phase.
    pub trials: usize,
    /// Operator evaluations at trial points (excluding `F(z0)`).
    pub fevals_used: u64,
}

/// The first-step test `a ||F(z1) - F(z0)|| <= (phi/2) ||z1 - z0||` with
/// `z1 = P(z0 - a F(z0))`.
pub fn alpha0_test(problem: &VIProblem, z0: &Point, f0: &Point, alpha: f64, phi: f64) -> (bool, Point, Point) {
    let z1 = problem.proj(z0.add_scaled(-alpha, f0));
    let f1 = problem.eval(&z1);
    let ok = alpha * f1.dist(f0) <= 0.5 * phi * z1.dist(z0);
    (ok, z1, f1)
}

/// Picks `a0` by shrinking from 1 by a factor of 10 until the first-step test
/// passes, then growing by `gamma` while it still passes and `a0 <= 1`.
///
/// When `F` does not change along the first step the test holds at once and
/// `a0 = 1`. The refinement presumes `L >= 1` in the sense that starting at 1
/// is not already too small; for very flat operators the result can be
/// conservative.
pub fn linesearch_alpha0(problem: &VIProblem, z0: &Point, phi: f64, gamma: f64) -> Result<LinesearchResult> {
    if !(phi > 1.0) || !(gamma > 1.0) {
        return Err(VIError::InvalidArgument(format!(
            "linesearch needs phi > 1 and gamma > 1, got phi = {phi}, gamma = {gamma}"
        )));
    }
    VIError::check_dim(problem.dim(), z0.dim())?;
    let f0 = problem.eval(z0);

    let mut alpha = 1.0;
    let mut trials = 0;
    let mut fevals = 0;
    let (mut z1, mut f1);
    loop {
        let (ok, z, f) = alpha0_test(problem, z0, &f0, alpha, phi);
        fevals += 1;
        z1 = z;
        f1 = f;
        if ok {
            break;
        }
        alpha /= 10.0;
        trials += 1;
        if alpha < 1e-300 {
            return Err(VIError::NonFinite("linesearch for the first step did not terminate".into()));
        }
    }
    if trials > 0 {
        loop {
            let next = alpha * gamma;
            if next > 1.0 {
                break;
            }
            let (ok, z, f) = alpha0_test(problem, z0, &f0, next, phi);
            fevals += 1;
            if !ok {
                break;
            }
            alpha = next;
            z1 = z;
            f1 = f;
        }
    }
    Ok(LinesearchResult { alpha0: alpha, z1, f1, trials, fevals_used: fevals })
}

fn c_term(phi: f64, gamma: f64, m: u64) -> f64 {
    let geom = (gamma.powf((m - 1) as f64) - 1.0) / (gamma - 1.0);
    phi / m as f64 * geom.sqrt()
}

/// `c = min_{m >= 2} (phi/m) sqrt((gamma^{m-1} - 1)/(gamma - 1))`.
///
/// The term eventually grows like `gamma^{m/2}/m`, so the scan stops once it
/// has risen for 20 consecutive `m` past the running minimum (hard cap 10^6).
pub fn compute_c(phi: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(VIError::InvalidArgument(format!("gamma must be > 1, got {gamma}")));
    }
    if !(phi > 1.0) || !phi.is_finite() {
        return Err(VIError::InvalidArgument(format!("phi must be > 1, got {phi}")));
    }
    let mut best = c_term(phi, gamma, 2);
    let mut prev = best;
    let mut rising = 0;
    for m in 3..=1_000_000u64 {
        let t = c_term(phi, gamma, m);
        if !t.is_finite() {
            break;
        }
        rising = if t > prev { rising + 1 } else { 0 };
        best = best.min(t);
        prev = t;
        if rising >= 20 && t > best {
            break;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSumReport {
    pub holds: bool,
    /// `min_k (sum_{i=1}^k a_i - (k-1) c / L)`.
    pub margin: f64,
    /// Prefix length at which the margin is attained.
    pub worst_k: usize,
}

/// Checks `sum_{i=1}^k a_i >= (k-1) c / L` for every prefix, where
/// `alphas[i]` is `a_i` (index 0 holds `a_0`).
pub fn check_step_sum_bound(alphas: &[f64], lipschitz: f64, phi: f64, gamma: f64) -> Result<StepSumReport> {
    if !(lipschitz > 0.0) {
        return Err(VIError::InvalidArgument("Lipschitz constant must be positive".into()));
    }
    let c = compute_c(phi, gamma)?;
    let mut sum = 0.0;
    let mut margin = f64::INFINITY;
    let mut worst_k = 0;
    for (k, a) in alphas.iter().enumerate().skip(1) {
        sum += a;
        let m = sum - (k as f64 - 1.0) * c / lipschitz;
        if m < margin {
            margin = m;
            worst_k = k;
        }
    }
    Ok(StepSumReport { holds: margin >= 0.0, margin, worst_k })
}

/// For an aGRAAL transition `prev -> next` (step index `k = prev.k >= 2`),
/// when the ratio branch of the step rule was taken, checks
/// `a_{k-2} + a_k >= phi / L_k` with `L_k = ||F(z^k) - F(z^{k-1})|| / ||z^k - z^{k-1}||`.
///
/// Returns `None` when the growth branch was taken or `k < 2`.
pub fn check_head_tail(prev: &IterState, next: &IterState, phi: f64, gamma: f64) -> Option<bool> {
    if prev.k < 2 {
        return None;
    }
    let alpha_k = next.alpha_k;
    let alpha_km1 = prev.alpha_k;
    let alpha_km2 = prev.alpha_prev;
    let ratio_active = alpha_k < gamma * alpha_km1;
    if !ratio_active {
        return None;
    }
    let dz = prev.z.dist(&prev.z_prev);
    let df = prev.f_curr.dist(&prev.f_prev);
    if dz == 0.0 || df == 0.0 {
        return None;
    }
    let local_l = df / dz;
    let lhs = alpha_km2 + alpha_k;
    let rhs = phi / local_l;
    Some(lhs >= rhs * (1.0 - 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projections::Projection;

    fn identity_problem() -> VIProblem {
        VIProblem::new("id", Projection::identity(1), |z: &Point| z.clone()).unwrap()
    }

    #[test]
    fn linesearch_on_identity_operator() {
        let (phi, gamma) = (1.5, 1.0 / 1.5 + 1.0 / 2.25);
        let ls = linesearch_alpha0(&identity_problem(), &Point::from([1.0]), phi, gamma).unwrap();
        // Closed form: the test reads a^2 <= 0.75 a.
        assert!(ls.alpha0 <= 0.75);
        assert!(ls.alpha0 * gamma > 0.75);
        assert_eq!(ls.trials, 1);
        assert!((ls.z1[0] - (1.0 - ls.alpha0)).abs() < 1e-15);
    }

    #[test]
    fn linesearch_constant_operator_takes_unit_step() {
        let p = VIProblem::new("c", Projection::identity(2), |_z: &Point| Point::from([1.0, -2.0])).unwrap();
        let ls = linesearch_alpha0(&p, &Point::zeros(2), 1.5, 1.1).unwrap();
        assert_eq!(ls.alpha0, 1.0);
        assert_eq!(ls.fevals_used, 1);
    }

    #[test]
    fn linesearch_rejects_bad_parameters() {
        assert!(linesearch_alpha0(&identity_problem(), &Point::from([1.0]), 1.0, 1.1).is_err());
        assert!(linesearch_alpha0(&identity_problem(), &Point::from([1.0]), 1.5, 1.0).is_err());
    }

    /// Exhaustive oracle over a fixed window of m.
    fn c_brute(phi: f64, gamma: f64, upto: u64) -> f64 {
        (2..=upto).map(|m| c_term(phi, gamma, m)).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn c_remark_value() {
        let phi = 1.5;
        let gamma = 1.0 / phi + 1.0 / (phi * phi);
        let c = compute_c(phi, gamma).unwrap();
        assert!((0.5..=0.75).contains(&c), "c = {c}");
        assert_eq!(c, c_brute(phi, gamma, 200));
    }

    #[test]
    fn c_bounded_by_half_phi() {
        for &phi in &[1.05, 1.2, 1.5, 1.6] {
            for &g in &[1.001, 1.05, 1.1, 1.3] {
                let c = compute_c(phi, g).unwrap();
                assert!(c > 0.0 && c <= phi / 2.0 + 1e-15, "phi={phi} gamma={g} c={c}");
            }
        }
    }

    #[test]
    fn c_matches_brute_force_scan() {
        for &(phi, g) in &[(1.2, 1.3), (1.5, 1.05), (1.1, 1.7)] {
            let scan = c_brute(phi, g, 5000);
            assert_eq!(compute_c(phi, g).unwrap(), scan);
        }
    }

    #[test]
    fn c_rejects_gamma_at_most_one() {
        assert!(compute_c(1.5, 1.0).is_err());
        assert!(compute_c(1.5, 0.9).is_err());
    }

    #[test]
    fn step_sum_prefix_one_is_trivial() {
        let r = check_step_sum_bound(&[0.3, 1e-9], 10.0, 1.5, 1.1).unwrap();
        assert!(r.holds);
    }

    #[test]
    fn step_sum_detects_tiny_steps() {
        let alphas = vec![1e-6; 100];
        let r = check_step_sum_bound(&alphas, 1.0, 1.5, 1.1).unwrap();
        assert!(!r.holds);
        assert!(r.margin < 0.0);
    }
}
