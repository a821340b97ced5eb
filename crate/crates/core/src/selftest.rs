//! Quick invariant suites behind `vilab selftest`. Each suite returns
//! `Err(reason)` on the first violated property.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive::{alpha0_test, check_step_sum_bound, linesearch_alpha0};
use crate::cli::trace_checks;
use crate::config::{Algorithm, SolverConfig, GOLDEN};
use crate::linalg::Point;
use crate::metrics::{check_lyapunov_inequality, GraalWindow};
use crate::problems::{make_matrix_game, make_qp_lagrangian, MatrixGameKind, MatrixGameSpec, Plant};
use crate::projections::Projection;
use crate::sdp::{solve_certificate, verify_feasible, SdpInstance};
use crate::solvers;
use crate::trace::IterState;

type Outcome = std::result::Result<(), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn projections() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sets = [
        Projection::simplex(5),
        Projection::ball(Point::zeros(5), 1.5).map_err(err)?,
        Projection::boxed(Point::from(vec![-1.0; 5]), Point::from(vec![0.5; 5])).map_err(err)?,
    ];
    for set in &sets {
        for _ in 0..200 {
            let x = Point::from_vec_unchecked((0..5).map(|_| rng.gen_range(-3.0..3.0)).collect());
            let y = Point::from_vec_unchecked((0..5).map(|_| rng.gen_range(-3.0..3.0)).collect());
            let (px, py) = (set.project(&x).map_err(err)?, set.project(&y).map_err(err)?);
            if px.max_abs_diff(&set.project(&px).map_err(err)?) > 1e-12 {
                return Err(format!("{set:?} is not idempotent at {x:?}"));
            }
            if px.dist(&py) > x.dist(&y) + 1e-12 {
                return Err(format!("{set:?} is expansive"));
            }
        }
    }
    Ok(())
}

fn energy_inequality() -> Outcome {
    let problem = make_qp_lagrangian(5, Plant::Random, 3).map_err(err)?;
    for phi in [GOLDEN, 2.0] {
        let cfg = SolverConfig::new(Algorithm::GraalFixed).phi(phi).max_iters(300).track_gap(false);
        let alpha = cfg.resolve_alpha(problem.lipschitz()).map_err(err)?;
        let mut states: Vec<IterState> = Vec::new();
        solvers::run_with_observer(&problem, &cfg, |s| states.push(s.clone())).map_err(err)?;
        for w in states.windows(3).skip(1) {
            let c =
                check_lyapunov_inequality(&problem, &GraalWindow::from_states([&w[0], &w[1], &w[2]]), phi, alpha, 1e-9)
                    .map_err(err)?;
            if !c.holds {
                return Err(format!("phi = {phi}, k = {}: lhs {} > rhs {}", w[0].k, c.lhs, c.rhs));
            }
        }
    }
    Ok(())
}

fn step_sum() -> Outcome {
    let problem = make_matrix_game(&MatrixGameSpec::new(MatrixGameKind::Random, 10, 2)).map_err(err)?;
    let cfg = SolverConfig::new(Algorithm::Agraal).max_iters(2000).track_gap(false);
    let trace = solvers::run(&problem, &cfg).map_err(err)?;
    let l = problem.lipschitz().ok_or("missing L")?;
    let r = check_step_sum_bound(&trace.alphas, l, cfg.phi, cfg.effective_gamma()).map_err(err)?;
    if r.holds {
        Ok(())
    } else {
        Err(format!("margin {} at k = {}", r.margin, r.worst_k))
    }
}

fn first_step_test() -> Outcome {
    for seed in 0..5 {
        let problem = make_qp_lagrangian(4, Plant::Random, seed).map_err(err)?;
        let z0 = problem.default_start();
        let ls = linesearch_alpha0(&problem, &z0, 1.5, 1.1).map_err(err)?;
        let f0 = problem.eval(&z0);
        if !alpha0_test(&problem, &z0, &f0, ls.alpha0, 1.5).0 {
            return Err(format!("seed {seed}: accepted step {} fails the test", ls.alpha0));
        }
    }
    Ok(())
}

fn certificate() -> Outcome {
    let inst = SdpInstance::certificate(2.0);
    let c = solve_certificate(&inst, 1e-6).map_err(err)?;
    if !verify_feasible(&inst, &c.g, 1e-6) {
        return Err("certificate solution is infeasible".into());
    }
    if c.value >= 2.0 {
        return Err(format!("optimum {} is not below 2", c.value));
    }
    Ok(())
}

fn trace_invariants() -> Outcome {
    let problem = make_matrix_game(&MatrixGameSpec::new(MatrixGameKind::Random, 6, 5)).map_err(err)?;
    for alg in Algorithm::ALL {
        let cfg = SolverConfig::new(alg).max_iters(200).record_every(7);
        let trace = solvers::run(&problem, &cfg).map_err(err)?;
        for c in trace_checks(&problem, &cfg, &trace).map_err(err)? {
            if !c.passed {
                return Err(format!("{alg}: {} ({})", c.name, c.detail));
            }
        }
    }
    Ok(())
}

pub fn run_all() -> Vec<(&'static str, Outcome)> {
    vec![
        ("projections", projections()),
        ("energy-inequality", energy_inequality()),
        ("step-sum-bound", step_sum()),
        ("first-step-test", first_step_test()),
        ("sdp-certificate", certificate()),
        ("trace-invariants", trace_invariants()),
    ]
}
