//! Run loops around the update rules in [`steps`].

mod steps;

use std::time::Instant;

pub use steps::*;

use crate::adaptive::linesearch_alpha0;
use crate::config::{Algorithm, Alpha0Policy, SolverConfig};
use crate::error::{Result, VIError};
use crate::linalg::Point;
use crate::metrics::{GapEvaluator, GapSpec};
use crate::trace::{IterState, StopReason, Trace, TraceRow};
use crate::vi::{ErgodicAverage, VIProblem};

/// Resolved per-run parameters.
#[derive(Clone, Debug)]
struct Plan {
    algorithm: Algorithm,
    alpha: f64,
    phi: f64,
    gamma: f64,
    factor: f64,
    nu: f64,
    tau: f64,
    alpha_cap: Option<f64>,
}

impl Plan {
    fn new(problem: &VIProblem, config: &SolverConfig) -> Result<Plan> {
        config.validate()?;
        let alpha = match config.algorithm {
            Algorithm::Agraal | Algorithm::CurvatureEgPlus => f64::NAN,
            _ => config.resolve_alpha(problem.lipschitz())?,
        };
        if config.algorithm == Algorithm::CurvatureEgPlus && !problem.has_jacobian_norm() {
            return Err(VIError::config("jacobian_norm", "curvature-eg-plus needs a Jacobian-norm oracle"));
        }
        Ok(Plan {
            algorithm: config.algorithm,
            alpha,
            phi: config.phi,
            gamma: config.effective_gamma(),
            factor: if config.algorithm == Algorithm::Eg { 1.0 } else { config.second_step_factor },
            nu: config.nu,
            tau: config.tau,
            alpha_cap: config.alpha_cap,
        })
    }

    fn step(&self, state: &IterState, problem: &VIProblem) -> Result<StepOutcome> {
        let a = self.alpha;
        let out = match self.algorithm {
            Algorithm::Fb => step_fb(state, problem, a),
            Algorithm::Eg => step_eg(state, problem, a),
            Algorithm::EgPlus => step_eg_plus(state, problem, a, self.factor),
            Algorithm::Popov => step_popov(state, problem, a),
            Algorithm::Fbf => step_fbf(state, problem, a),
            Algorithm::Forb => step_forb(state, problem, a),
            Algorithm::Prg => step_prg(state, problem, a),
            Algorithm::ShadowDr => step_shadow_dr(state, problem, a),
            Algorithm::GraalFixed | Algorithm::GraalWm => step_graal_fixed(state, problem, self.phi, a),
            Algorithm::Agraal => step_agraal(state, problem, self.phi, self.gamma, self.alpha_cap),
            Algorithm::CurvatureEgPlus => {
                let j = problem.jacobian_norm(&state.z)?;
                step_curvature_eg_plus(state, problem, j, self.nu, self.tau, self.factor)
            }
        };
        Ok(out)
    }
}

/// Starting point: the configured one (projected onto `C`) or the problem's
/// default.
pub fn initial_point(problem: &VIProblem, config: &SolverConfig) -> Result<Point> {
    match &config.initial {
        Some(z0) => {
            VIError::check_dim(problem.dim(), z0.dim())?;
            if !z0.is_finite() {
                return Err(VIError::NonFinite("initial point".into()));
            }
            problem.project(z0)
        }
        None => Ok(problem.default_start()),
    }
}

/// The set over which the restricted gap is measured: the problem's own spec
/// if it has one, otherwise a ball around the known solution with squared
/// radius `18 ||z0 - z*||^2`.
pub fn default_gap_spec(problem: &VIProblem, z0: &Point) -> Option<GapSpec> {
    if let Some(spec) = problem.gap_spec() {
        return Some(spec.clone());
    }
    let zs = problem.solution()?;
    let r = 18f64.sqrt() * z0.dist(zs);
    (r > 0.0).then(|| GapSpec::BallAround { center: zs.clone(), radius: r })
}

pub fn run(problem: &VIProblem, config: &SolverConfig) -> Result<Trace> {
    run_with_observer(problem, config, |_| {})
}

/// Runs the configured method, calling `observer` on the initial state and
/// after every iteration.
pub fn run_with_observer(
    problem: &VIProblem,
    config: &SolverConfig,
    mut observer: impl FnMut(&IterState),
) -> Result<Trace> {
    let plan = Plan::new(problem, config)?;
    let z0 = initial_point(problem, config)?;
    let f0 = problem.eval(&z0);
    if !f0.is_finite() {
        return Err(VIError::NonFinite("F(z0)".into()));
    }

    let gap_eval = if config.track_gap {
        default_gap_spec(problem, &z0).map(|spec| GapEvaluator::new(spec, problem, config.seed)).transpose()?
    } else {
        None
    };
    let solution = problem.solution().cloned();
    let clock = Instant::now();

    let alpha_init = if plan.alpha.is_nan() { 0.0 } else { plan.alpha };
    let mut state = IterState::initial(z0.clone(), f0, alpha_init, plan.phi);
    let mut alphas = Vec::new();
    let mut rows = Vec::new();
    let mut avg = ErgodicAverage::default();
    let mut min_g2 = state.f_curr.norm_sq();

    // aGRAAL's first step is taken outside the main recursion.
    let mut pending_first: Option<IterState> = None;
    if plan.algorithm == Algorithm::Agraal {
        let (alpha0, z1, f1, used) = match config.alpha0 {
            Alpha0Policy::Fixed(a) => {
                let z1 = problem.proj(z0.add_scaled(-a, &state.f_curr));
                let f1 = problem.eval(&z1);
                (a, z1, f1, 1)
            }
            Alpha0Policy::Linesearch => {
                let ls = linesearch_alpha0(problem, &z0, plan.phi, plan.gamma)?;
                (ls.alpha0, ls.z1, ls.f1, ls.fevals_used)
            }
        };
        state.alpha_k = alpha0;
        state.alpha_prev = alpha0;
        let mut s1 = state.clone();
        s1.k = 1;
        s1.z_prev = z0.clone();
        s1.f_prev = state.f_curr.clone();
        s1.z = z1;
        s1.f_curr = f1;
        s1.fevals = state.fevals + used;
        pending_first = Some(s1);
    }

    let record = |row: &mut TraceRow, st: &IterState, avg: &ErgodicAverage, min_g2: f64| -> Result<()> {
        row.min_grad_norm_sq = min_g2;
        row.dist = solution.as_ref().map(|zs| st.z.dist(zs));
        if let Some(ev) = &gap_eval {
            row.gap = match avg.mean() {
                Ok(m) => Some(ev.eval(&m)?),
                Err(_) => None,
            };
        }
        row.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
        Ok(())
    };

    let row0_g2 = min_g2;
    let mut row0 = TraceRow {
        iter: 0,
        fevals: state.fevals,
        alpha: state.alpha_k,
        grad_norm: row0_g2.sqrt(),
        min_grad_norm_sq: row0_g2,
        gap: None,
        dist: None,
        wall_ms: 0.0,
        feasible: true,
    };
    record(&mut row0, &state, &avg, min_g2)?;
    rows.push(row0);
    alphas.push(state.alpha_k);
    observer(&state);

    let mut stop = StopReason::MaxIters;
    let grad_hit = |g2: f64| config.grad_tol > 0.0 && g2.sqrt() <= config.grad_tol;
    if grad_hit(min_g2) {
        stop = StopReason::GradTol;
    }

    while stop == StopReason::MaxIters && state.k < config.max_iters {
        let (next, mut row) = match pending_first.take() {
            Some(s1) => {
                let g2 = s1.f_curr.norm_sq();
                let feasible = problem.projection().contains(&s1.z, 1e-12 * (1.0 + s1.z.norm()));
                let row = TraceRow {
                    iter: 1,
                    fevals: s1.fevals,
                    alpha: s1.alpha_k,
                    grad_norm: g2.sqrt(),
                    min_grad_norm_sq: g2,
                    gap: None,
                    dist: None,
                    wall_ms: 0.0,
                    feasible,
                };
                (s1, row)
            }
            None => {
                let out = plan.step(&state, problem)?;
                (out.next_state, out.emitted)
            }
        };
        state = next;
        alphas.push(state.alpha_k);
        observer(&state);

        if !state.z.is_finite() || !state.f_curr.is_finite() {
            stop = StopReason::NonFinite;
        } else {
            // A zero weight contributes nothing to the weighted mean.
            if state.alpha_k > 0.0 {
                avg.push(&state.z, state.alpha_k)?;
            }
            let g2 = state.f_curr.norm_sq();
            min_g2 = min_g2.min(g2);
            if state.z.norm() > config.divergence_bound {
                stop = StopReason::Diverged;
            } else if grad_hit(g2) {
                stop = StopReason::GradTol;
            }
        }

        let last = stop != StopReason::MaxIters || state.k >= config.max_iters;
        if state.k.is_multiple_of(config.record_every) || last {
            record(&mut row, &state, &avg, min_g2)?;
            rows.push(row);
        }
    }

    let average = avg.mean().ok();
    Ok(Trace {
        problem: problem.name().to_string(),
        algorithm: plan.algorithm.to_string(),
        rows,
        stop,
        final_point: state.z,
        average,
        alphas,
    })
}
