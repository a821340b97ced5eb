//! One-iteration update rules. Each takes the current state by reference and
//! returns the next one; nothing here allocates beyond the new vectors.

use crate::linalg::Point;
use crate::trace::{IterState, TraceRow};
use crate::vi::VIProblem;

/// Result of a single iteration.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub next_state: IterState,
    /// Row for the new iterate; `gap`, `dist`, `wall_ms` and the running
    /// minimum are filled in by the run loop.
    pub emitted: TraceRow,
}

fn outcome(problem: &VIProblem, next: IterState) -> StepOutcome {
    let g2 = next.f_curr.norm_sq();
    let emitted = TraceRow {
        iter: next.k,
        fevals: next.fevals,
        alpha: next.alpha_k,
        grad_norm: g2.sqrt(),
        min_grad_norm_sq: g2,
        gap: None,
        dist: None,
        wall_ms: 0.0,
        feasible: problem.projection().contains(&next.z, 1e-12 * (1.0 + next.z.norm())),
    };
    StepOutcome { next_state: next, emitted }
}

/// Shifts `state` forward: the new iterate becomes current and the old one
/// moves to the `prev` slots.
fn advance(state: &IterState, z: Point, f: Point, alpha: f64, calls: u64) -> IterState {
    IterState {
        k: state.k + 1,
        z_prev: state.z.clone(),
        f_prev: state.f_curr.clone(),
        z,
        f_curr: f,
        z_bar: state.z_bar.clone(),
        alpha_prev: state.alpha_k,
        alpha_k: alpha,
        theta_k: state.theta_k,
        fevals: state.fevals + calls,
    }
}

/// Forward-backward: `z+ = P(z - a F(z))`.
pub fn step_fb(state: &IterState, problem: &VIProblem, alpha: f64) -> StepOutcome {
    let z = problem.proj(state.z.add_scaled(-alpha, &state.f_curr));
    let f = problem.eval(&z);
    outcome(problem, advance(state, z, f, alpha, 1))
}

/// Extragradient with the update step scaled by `factor` (`factor = 1` is
/// plain EG, smaller values give EG+).
pub fn step_eg_plus(state: &IterState, problem: &VIProblem, alpha: f64, factor: f64) -> StepOutcome {
    let lead = problem.proj(state.z.add_scaled(-alpha, &state.f_curr));
    let f_lead = problem.eval(&lead);
    let z = problem.proj(state.z.add_scaled(-alpha * factor, &f_lead));
    let f = problem.eval(&z);
    outcome(problem, advance(state, z, f, alpha, 2))
}

pub fn step_eg(state: &IterState, problem: &VIProblem, alpha: f64) -> StepOutcome {
    step_eg_plus(state, problem, alpha, 1.0)
}

/// Popov's method. `state.z` is the leading point `z̄^{k-1}` (with `f_curr`
/// its operator value) and `state.z_bar` carries the base sequence.
pub fn step_popov(state: &IterState, problem: &VIProblem, alpha: f64) -> StepOutcome {
    let lead = problem.proj(state.z_bar.add_scaled(-alpha, &state.f_curr));
    let f_lead = problem.eval(&lead);
    let base = problem.proj(state.z_bar.add_scaled(-alpha, &f_lead));
    let mut next = advance(state, lead, f_lead, alpha, 1);
    next.z_bar = base;
    outcome(problem, next)
}

/// Tseng's forward-backward-forward. The correction follows the projection,
/// so the new point may leave `C`.
pub fn step_fbf(state: &IterState, problem: &VIProblem, alpha: f64) -> StepOutcome {
    let lead = problem.proj(state.z.add_scaled(-alpha, &state.f_curr));
    let f_lead = problem.eval(&lead);
    let z = Point::from_vec_unchecked(
        lead.iter().zip(f_lead.iter().zip(state.f_curr.iter())).map(|(l, (fl, f))| l - alpha * (fl - f)).collect(),
    );
    let f = problem.eval(&z);
    outcome(problem, advance(state, z, f, alpha, 2))
}

/// Forward-reflected-backward, `u+ = P(u - a(2F(u) - F(u_prev)))`. This is
/// OGDA when `C = R^d`.
pub fn step_forb(state: &IterState, problem: &VIProblem, alpha: f64) -> StepOutcome {
    let dir = state.f_curr.lincomb(2.0, &state.f_prev, -1.0);
    let z = problem.proj(state.z.add_scaled(-alpha, &dir));
    let f = problem.eval(&z);
    outcome(problem, advance(state, z, f, alpha, 1))
}

/// Projected reflected gradient, `u+ = P(u - a F(2u - u_prev))`.
///
/// The only counted evaluation is at the reflected point. `F(u+)` is also
/// computed so the trace can report a gradient norm, but it is not charged to
/// `fevals`.
pub fn step_prg(state: &IterState, problem: &VIProblem, alpha: f64) -> StepOutcome {
    let reflected = state.z.lincomb(2.0, &state.z_prev, -1.0);
    let f_ref = problem.eval(&reflected);
    let z = problem.proj(state.z.add_scaled(-alpha, &f_ref));
    let f = problem.eval(&z);
    outcome(problem, advance(state, z, f, alpha, 1))
}

/// Shadow Douglas-Rachford, `u+ = P(u - a F(u)) - a(F(u) - F(u_prev))`.
pub fn step_shadow_dr(state: &IterState, problem: &VIProblem, alpha: f64) -> StepOutcome {
    let p = problem.proj(state.z.add_scaled(-alpha, &state.f_curr));
    let z = Point::from_vec_unchecked(
        p.iter().zip(state.f_curr.iter().zip(state.f_prev.iter())).map(|(pi, (f, fp))| pi - alpha * (f - fp)).collect(),
    );
    let f = problem.eval(&z);
    outcome(problem, advance(state, z, f, alpha, 1))
}

/// `z̄^k = ((phi-1)/phi) z^k + (1/phi) z̄^{k-1}`.
pub(crate) fn graal_anchor(z: &Point, z_bar_prev: &Point, phi: f64) -> Point {
    z.lincomb((phi - 1.0) / phi, z_bar_prev, 1.0 / phi)
}

/// GRAAL with a fixed step: `z̄^k` from the convex combination, then
/// `z^{k+1} = P(z̄^k - a F(z^k))`. After the step `z_bar` holds `z̄^k`.
pub fn step_graal_fixed(state: &IterState, problem: &VIProblem, phi: f64, alpha: f64) -> StepOutcome {
    let anchor = graal_anchor(&state.z, &state.z_bar, phi);
    let z = problem.proj(anchor.add_scaled(-alpha, &state.f_curr));
    let f = problem.eval(&z);
    let mut next = advance(state, z, f, alpha, 1);
    next.z_bar = anchor;
    outcome(problem, next)
}

/// GRAAL for weak Minty problems: the fixed step `(2 - phi)/L`.
pub fn step_graal_wm(state: &IterState, problem: &VIProblem, phi: f64, lipschitz: f64) -> StepOutcome {
    step_graal_fixed(state, problem, phi, (2.0 - phi) / lipschitz)
}

/// aGRAAL step size:
/// `min(gamma a_{k-1}, (phi theta_{k-1} / (4 a_{k-1})) (||dz|| / ||dF||)^2)`,
/// with the second term read as `+inf` when `dF = 0`. Taking the ratio of
/// norms before squaring keeps it meaningful when the iterates are so close
/// that `||dz||^2` would underflow.
pub fn agraal_step_size(alpha_prev: f64, theta_prev: f64, phi: f64, gamma: f64, dz: f64, df: f64) -> f64 {
    let grow = gamma * alpha_prev;
    if df == 0.0 {
        return grow;
    }
    let q = dz / df;
    let ratio = phi * theta_prev / (4.0 * alpha_prev) * q * q;
    grow.min(ratio)
}

/// One aGRAAL iteration for `k >= 1`. On entry `alpha_k`/`theta_k` hold
/// `a_{k-1}`/`theta_{k-1}`; on exit they hold the new values.
pub fn step_agraal(
    state: &IterState,
    problem: &VIProblem,
    phi: f64,
    gamma: f64,
    alpha_cap: Option<f64>,
) -> StepOutcome {
    let dz = state.z.dist(&state.z_prev);
    let df = state.f_curr.dist(&state.f_prev);
    let mut alpha = agraal_step_size(state.alpha_k, state.theta_k, phi, gamma, dz, df);
    if let Some(cap) = alpha_cap {
        alpha = alpha.min(cap);
    }
    let theta = phi * alpha / state.alpha_k;
    let anchor = graal_anchor(&state.z, &state.z_bar, phi);
    let z = problem.proj(anchor.add_scaled(-alpha, &state.f_curr));
    let f = problem.eval(&z);
    let mut next = advance(state, z, f, alpha, 1);
    next.z_bar = anchor;
    next.theta_k = theta;
    outcome(problem, next)
}

/// EG+ with a backtracked step. The trial step starts at `nu / ||JF(z)||`
/// and shrinks by `tau` until `a ||F(z̄) - F(z)|| <= nu ||z̄ - z||`; every
/// trial costs one evaluation. The update step is scaled by `factor`.
pub fn step_curvature_eg_plus(
    state: &IterState,
    problem: &VIProblem,
    jac_norm: f64,
    nu: f64,
    tau: f64,
    factor: f64,
) -> StepOutcome {
    const MAX_BACKTRACKS: usize = 200;
    let mut alpha = if jac_norm > 0.0 { nu / jac_norm } else { 1.0 };
    let mut calls = 0;
    let (mut lead, mut f_lead);
    let mut tries = 0;
    loop {
        lead = problem.proj(state.z.add_scaled(-alpha, &state.f_curr));
        f_lead = problem.eval(&lead);
        calls += 1;
        let lhs = alpha * f_lead.dist(&state.f_curr);
        let rhs = nu * lead.dist(&state.z);
        if lhs <= rhs || tries >= MAX_BACKTRACKS {
            break;
        }
        alpha *= tau;
        tries += 1;
    }
    let z = problem.proj(state.z.add_scaled(-alpha * factor, &f_lead));
    let f = problem.eval(&z);
    outcome(problem, advance(state, z, f, alpha, calls + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::projections::Projection;

    fn rotation() -> VIProblem {
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        VIProblem::affine("rot", Projection::identity(2), b, vec![0.0, 0.0]).unwrap()
    }

    fn zero_op(dim: usize) -> VIProblem {
        VIProblem::new("zero", Projection::identity(dim), move |_z: &Point| Point::zeros(dim)).unwrap()
    }

    fn start(p: &VIProblem, z: Point) -> IterState {
        let f = p.operator(&z).unwrap();
        IterState::initial(z, f, 0.0, 1.0)
    }

    #[test]
    fn fb_contracts_on_identity() {
        let p = VIProblem::new("id", Projection::identity(1), |z: &Point| z.clone()).unwrap();
        let out = step_fb(&start(&p, Point::from([2.0])), &p, 0.5);
        assert_eq!(out.next_state.z.as_slice(), &[1.0]);
        assert_eq!(out.next_state.fevals, 2);
    }

    #[test]
    fn fb_rotation_grows() {
        let p = rotation();
        let out = step_fb(&start(&p, Point::from([1.0, 0.0])), &p, 1.0);
        assert_eq!(out.next_state.z.as_slice(), &[1.0, 1.0]);
        // ||z+||^2 = (1 + a^2) ||z||^2 for the rotation field.
        assert_eq!(out.next_state.z.norm_sq(), 2.0);
    }

    #[test]
    fn eg_rotation_hand_value() {
        let p = rotation();
        let out = step_eg(&start(&p, Point::from([1.0, 0.0])), &p, 0.5);
        // F(1,0) = (0,-1); lead (1, 0.5); F(lead) = (0.5, -1).
        assert_eq!(out.next_state.z.as_slice(), &[0.75, 0.5]);
    }

    #[test]
    fn fbf_rotation_hand_value() {
        let p = rotation();
        let out = step_fbf(&start(&p, Point::from([1.0, 0.0])), &p, 0.5);
        // lead (1, 0.5) minus 0.5 (F(lead) - F(z)) = 0.5 (0.5, 0).
        assert_eq!(out.next_state.z.as_slice(), &[0.75, 0.5]);
    }

    #[test]
    fn shadow_dr_rotation_hand_value() {
        // First step with f_prev = F(u0): the correction vanishes, so this is
        // P(u - aF(u)) = (1, 0.5). Second step by hand:
        // F(1, 0.5) = (0.5, -1); P(u - 0.5F(u)) = (0.75, 1);
        // correction -0.5((0.5, -1) - (0, -1)) = (-0.25, 0) -> (0.5, 1).
        let p = rotation();
        let s1 = step_shadow_dr(&start(&p, Point::from([1.0, 0.0])), &p, 0.5).next_state;
        assert_eq!(s1.z.as_slice(), &[1.0, 0.5]);
        let s2 = step_shadow_dr(&s1, &p, 0.5).next_state;
        assert_eq!(s2.z.as_slice(), &[0.5, 1.0]);
    }

    #[test]
    fn zero_operator_is_stationary_for_all_methods() {
        let p = zero_op(3);
        let s = start(&p, Point::from([0.3, -1.0, 2.0]));
        let outs = [
            step_fb(&s, &p, 0.1),
            step_eg(&s, &p, 0.1),
            step_popov(&s, &p, 0.1),
            step_fbf(&s, &p, 0.1),
            step_forb(&s, &p, 0.1),
            step_prg(&s, &p, 0.1),
            step_shadow_dr(&s, &p, 0.1),
            step_graal_fixed(&s, &p, 2.0, 0.1),
            step_eg_plus(&s, &p, 0.1, 0.5),
            step_curvature_eg_plus(&s, &p, 0.0, 0.99, 0.9, 0.5),
        ];
        for o in outs {
            assert_eq!(o.next_state.z, s.z);
        }
    }

    #[test]
    fn eg_plus_unit_factor_is_eg() {
        let p = rotation();
        let s = start(&p, Point::from([0.4, -0.7]));
        assert_eq!(step_eg_plus(&s, &p, 0.3, 1.0).next_state, step_eg(&s, &p, 0.3).next_state);
    }

    #[test]
    fn agraal_step_hand_value() {
        let phi = 1.5;
        let gamma = 1.0 / phi + 1.0 / (phi * phi);
        let a = agraal_step_size(1.0, phi, phi, gamma, 1.0, 2.0);
        assert!((a - 0.140625).abs() < 1e-15);
        let theta = phi * a / 1.0;
        assert!((theta - 0.2109375).abs() < 1e-15);
        assert_eq!(agraal_step_size(1.0, phi, phi, gamma, 1.0, 0.0), gamma);
    }

    #[test]
    fn call_counts() {
        let p = rotation();
        let s = start(&p, Point::from([1.0, 0.0]));
        assert_eq!(step_eg(&s, &p, 0.1).next_state.fevals - s.fevals, 2);
        assert_eq!(step_fbf(&s, &p, 0.1).next_state.fevals - s.fevals, 2);
        assert_eq!(step_popov(&s, &p, 0.1).next_state.fevals - s.fevals, 1);
        assert_eq!(step_graal_fixed(&s, &p, 1.5, 0.1).next_state.fevals - s.fevals, 1);
        assert_eq!(step_prg(&s, &p, 0.1).next_state.fevals - s.fevals, 1);
    }

    #[test]
    fn curvature_eg_plus_accepts_first_trial_on_linear_field() {
        // For the rotation, ||F(a)-F(b)|| = ||a-b||, and nu/||J|| = nu gives
        // a ||dF|| = nu ||dz|| exactly: accepted without backtracking.
        let p = rotation();
        let s = start(&p, Point::from([1.0, 0.0]));
        let out = step_curvature_eg_plus(&s, &p, 1.0, 0.99, 0.9, 0.5);
        assert_eq!(out.next_state.fevals - s.fevals, 2);
        assert_eq!(out.next_state.alpha_k, 0.99);
    }

    #[test]
    fn curvature_eg_plus_backtracks_and_counts() {
        // Underestimating the Jacobian norm forces shrinking.
        let p = rotation();
        let s = start(&p, Point::from([1.0, 0.0]));
        let out = step_curvature_eg_plus(&s, &p, 0.5, 0.99, 0.9, 0.5);
        let calls = out.next_state.fevals - s.fevals;
        assert!(calls > 2);
        assert!(out.next_state.alpha_k <= 0.99 + 1e-15);
    }
}
