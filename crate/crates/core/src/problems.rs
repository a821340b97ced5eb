//! Benchmark problems: matrix games, a saddle-point QP, and three 2-D
//! nonmonotone examples.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VIError};
use crate::linalg::{Matrix, Point};
use crate::metrics::GapSpec;
use crate::projections::Projection;
use crate::vi::VIProblem;

/// Tolerance of the power iteration behind `||A||_2`.
const SPECTRAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixGameKind {
    /// Entries i.i.d. uniform on `[-1, 1]`.
    Random,
    /// `A_ij = w_i (1 - exp(-theta |i - j|))`, `w_i = |N(0, 1)|`.
    PolicemanBurglar {
        theta: f64,
    },
    /// `A_ij = (i + j - 1)/(2d - 1)` with 1-based indices. A stand-in for an
    /// externally specified test matrix; load the real one with `Custom`.
    TestMatrix,
    Custom {
        a: Matrix,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameSpec {
    pub kind: MatrixGameKind,
    pub d: usize,
    pub seed: u64,
}

impl MatrixGameSpec {
    pub fn new(kind: MatrixGameKind, d: usize, seed: u64) -> Self {
        MatrixGameSpec { kind, d, seed }
    }

    pub fn matrix(&self) -> Result<Matrix> {
        let d = self.d;
        if d < 2 && !matches!(self.kind, MatrixGameKind::Custom { .. }) {
            return Err(VIError::InvalidArgument(format!("matrix game needs d >= 2, got {d}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(match &self.kind {
            MatrixGameKind::Random => Matrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..=1.0)),
            MatrixGameKind::PolicemanBurglar { theta } => {
                let w: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect();
                Matrix::from_fn(d, d, |i, j| w[i] * (1.0 - (-theta * (i as f64 - j as f64).abs()).exp()))
            }
            MatrixGameKind::TestMatrix => {
                let denom = (2 * d - 1) as f64;
                Matrix::from_fn(d, d, |i, j| (i + j + 1) as f64 / denom)
            }
            MatrixGameKind::Custom { a } => a.clone(),
        })
    }
}

/// `min_{x in Δ} max_{y in Δ} x^T A y` as the VI with `F(x, y) = (Ay, -A^T x)`.
pub fn make_matrix_game(spec: &MatrixGameSpec) -> Result<VIProblem> {
    matrix_game_from(spec.matrix()?, &format!("matrix-game-{}", kind_name(&spec.kind)))
}

fn kind_name(kind: &MatrixGameKind) -> &'static str {
    match kind {
        MatrixGameKind::Random => "random",
        MatrixGameKind::PolicemanBurglar { .. } => "policeman-burglar",
        MatrixGameKind::TestMatrix => "test-matrix",
        MatrixGameKind::Custom { .. } => "custom",
    }
}

pub fn matrix_game_from(a: Matrix, name: &str) -> Result<VIProblem> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Err(VIError::InvalidArgument("empty payoff matrix".into()));
    }
    let lip = a.spectral_norm(SPECTRAL_TOL);
    let op_a = a.clone();
    let op = move |z: &Point| {
        let (x, y) = z.split_at(m);
        let mut out = vec![0.0; m + n];
        op_a.matvec_into(y, &mut out[..m]);
        op_a.matvec_t_into(x, &mut out[m..]);
        out[m..].iter_mut().for_each(|v| *v = -*v);
        Point::from_vec_unchecked(out)
    };
    let mut start = vec![1.0 / m as f64; m];
    start.extend(std::iter::repeat_n(1.0 / n as f64, n));
    VIProblem::new(name, Projection::product(vec![Projection::simplex(m), Projection::simplex(n)]), op)?
        .with_lipschitz(lip)?
        .with_jacobian_norm(move |_| lip)
        .with_gap(GapSpec::SimplexBilinear { a })
        .with_start(Point::from_vec_unchecked(start))
}

/// Reads a payoff matrix from CSV (one row per line).
pub fn load_matrix_csv(path: &Path) -> Result<Matrix> {
    let file = std::fs::File::open(path)?;
    Matrix::read_csv(std::io::BufReader::new(file))
}

/// How the QP's solution is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Plant {
    /// Random `h`, `b`; the solution is computed by a linear solve.
    None,
    /// `x*`, `y*` drawn from the problem's generator.
    Random,
    Given(Point, Point),
}

/// Saddle point of `½ x^T H x - h^T x - <Ax - b, y>`:
/// `F(x, y) = (Hx - h - A^T y, Ax - b)` on `R^d x R^d`, with `H = M^T M / d`.
pub fn make_qp_lagrangian(d: usize, plant: Plant, seed: u64) -> Result<VIProblem> {
    if d == 0 {
        return Err(VIError::InvalidArgument("QP dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let m = Matrix::from_fn(d, d, |_, _| normal());
    let a = Matrix::from_fn(d, d, |_, _| normal());
    let mut h_mat = m.transpose().matmul(&m)?;
    // Symmetrize exactly; the product is symmetric up to rounding.
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (h_mat[(i, j)] + h_mat[(j, i)]) / d as f64;
            h_mat[(i, j)] = v;
            h_mat[(j, i)] = v;
        }
        h_mat[(i, i)] /= d as f64;
    }

    let planted = match plant {
        Plant::None => None,
        Plant::Random => {
            let xs: Vec<f64> = (0..d).map(|_| normal()).collect();
            let ys: Vec<f64> = (0..d).map(|_| normal()).collect();
            Some((Point::from_vec_unchecked(xs), Point::from_vec_unchecked(ys)))
        }
        Plant::Given(x, y) => {
            VIError::check_dim(d, x.dim())?;
            VIError::check_dim(d, y.dim())?;
            Some((x, y))
        }
    };
    let (h, b) = match &planted {
        Some((xs, ys)) => {
            let b = a.matvec(xs);
            let hx = h_mat.matvec(xs);
            let aty = a.matvec_t(ys);
            let h: Vec<f64> = hx.iter().zip(&aty).map(|(p, q)| p - q).collect();
            (h, b)
        }
        None => ((0..d).map(|_| normal()).collect(), (0..d).map(|_| normal()).collect()),
    };

    // Block form F(z) = Bz + c with B = [[H, -A^T], [A, 0]], c = (-h, -b).
    let n = 2 * d;
    let block = Matrix::from_fn(n, n, |i, j| match (i < d, j < d) {
        (true, true) => h_mat[(i, j)],
        (true, false) => -a[(j - d, i)],
        (false, true) => a[(i - d, j)],
        (false, false) => 0.0,
    });
    let c: Vec<f64> = h.iter().chain(&b).map(|v| -v).collect();

    let solution = match planted {
        Some((xs, ys)) => {
            let mut z = xs.into_vec();
            z.extend(ys.into_vec());
            Point::from_vec_unchecked(z)
        }
        None => {
            let bm = DMatrix::from_row_slice(n, n, block.data());
            let rhs = DVector::from_iterator(n, c.iter().map(|v| -v));
            let sol =
                bm.lu().solve(&rhs).ok_or_else(|| VIError::InvalidArgument("QP KKT matrix is singular".into()))?;
            Point::from_vec_unchecked(sol.iter().cloned().collect())
        }
    };
    let lip = block.spectral_norm(SPECTRAL_TOL);
    VIProblem::affine(format!("qp-{d}"), Projection::identity(n), block, c)?
        .with_lipschitz(lip)?
        .with_jacobian_norm(move |_| lip)
        .with_solution(solution)
}

/// `f'(t) = t/2 - 2t^3 + t^5` for `f(t) = t^2/4 - t^4/2 + t^6/6`.
pub fn forsaken_fprime(t: f64) -> f64 {
    0.5 * t - 2.0 * t.powi(3) + t.powi(5)
}

fn forsaken_fsecond(t: f64) -> f64 {
    0.5 - 6.0 * t * t + 5.0 * t.powi(4)
}

/// `min_x max_y x(y - 0.45) + f(x) - f(y)`; the attached solution
/// `(0.08, 0.4)` is approximate.
pub fn make_forsaken() -> Result<VIProblem> {
    let op = |z: &Point| Point::from([z[1] - 0.45 + forsaken_fprime(z[0]), -z[0] + forsaken_fprime(z[1])]);
    VIProblem::new("forsaken", Projection::identity(2), op)?
        .with_jacobian_norm(|z| spectral_norm_2x2([[forsaken_fsecond(z[0]), 1.0], [-1.0, forsaken_fsecond(z[1])]]))
        .with_solution(Point::from([0.08, 0.4]))?
        .with_start(Point::from([0.5, 0.5]))
}

/// Largest singular value of a 2x2 matrix from its Frobenius norm and
/// determinant.
pub fn spectral_norm_2x2(m: [[f64; 2]; 2]) -> f64 {
    let fro2 = m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (fro2 + disc)).sqrt()
}

fn polar_psi(a: f64, x: f64, y: f64) -> f64 {
    0.25 * a * x * (-1.0 + x * x + y * y) * (-1.0 + 4.0 * x * x + 4.0 * y * y)
}

/// Jacobian of the polar-game operator.
pub fn polar_jacobian(a: f64, x: f64, y: f64) -> [[f64; 2]; 2] {
    let p = -1.0 + x * x + y * y;
    let q = -1.0 + 4.0 * x * x + 4.0 * y * y;
    let k = 0.25 * a;
    let cross = k * x * y * (2.0 * q + 8.0 * p);
    [
        [k * (p * q + 2.0 * x * x * q + 8.0 * x * x * p), cross - 1.0],
        [cross + 1.0, k * (p * q + 2.0 * y * y * q + 8.0 * y * y * p)],
    ]
}

/// `F(x, y) = (psi(x, y) - y, psi(y, x) + x)` with
/// `psi(x, y) = (a/4) x (-1 + x^2 + y^2)(-1 + 4x^2 + 4y^2)`. Solution at 0.
pub fn make_polar_game(a: f64) -> Result<VIProblem> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(VIError::InvalidArgument(format!("polar game needs a > 0, got {a}")));
    }
    let op = move |z: &Point| {
        let (x, y) = (z[0], z[1]);
        Point::from([polar_psi(a, x, y) - y, polar_psi(a, y, x) + x])
    };
    VIProblem::new(format!("polar-{a}"), Projection::identity(2), op)?
        .with_jacobian_norm(move |z| spectral_norm_2x2(polar_jacobian(a, z[0], z[1])))
        .with_solution(Point::zeros(2))?
        .with_start(Point::from([0.9, 0.9]))
}

/// Linear example `F(x, y) = (ay + bx, by - ax)`, `a > 0 > b`, with
/// `L = sqrt(a^2 + b^2)` and weak Minty parameter `rho = -2b/(a^2 + b^2)`.
pub fn make_lower_bound(a: f64, b: f64) -> Result<VIProblem> {
    if !(a > 0.0) || !(b < 0.0) {
        return Err(VIError::InvalidArgument(format!("lower-bound example needs a > 0 > b, got a = {a}, b = {b}")));
    }
    let bm = Matrix::from_rows(&[vec![b, a], vec![-a, b]])?;
    let n2 = a * a + b * b;
    let lip = n2.sqrt();
    VIProblem::affine("lower-bound", Projection::identity(2), bm, vec![0.0, 0.0])?
        .with_lipschitz(lip)?
        .with_jacobian_norm(move |_| lip)
        .with_rho(-2.0 * b / n2)
        .with_solution(Point::zeros(2))?
        .with_start(Point::from([1.0, 1.0]))
}

/// Serializable problem description used by the command line and manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Polar { a: f64 },
    Forsaken,
    LowerBound { a: f64, b: f64 },
    MatrixGame(MatrixGameSpec),
    Qp { d: usize, seed: u64, planted: bool },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<VIProblem> {
        match self {
            ProblemSpec::Polar { a } => make_polar_game(*a),
            ProblemSpec::Forsaken => make_forsaken(),
            ProblemSpec::LowerBound { a, b } => make_lower_bound(*a, *b),
            ProblemSpec::MatrixGame(spec) => make_matrix_game(spec),
            ProblemSpec::Qp { d, seed, planted } => {
                make_qp_lagrangian(*d, if *planted { Plant::Random } else { Plant::None }, *seed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{dual_gap, sampled_lipschitz_ratio};

    fn fd_jacobian(p: &VIProblem, z: &Point) -> [[f64; 2]; 2] {
        let h = 1e-6;
        let mut j = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += h;
            zm[c] -= h;
            let (fp, fm) = (p.eval(&zp), p.eval(&zm));
            for r in 0..2 {
                j[r][c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn identity_game_uniform_is_optimal() {
        let p = matrix_game_from(Matrix::identity(2), "id").unwrap();
        let g = dual_gap(p.gap_spec().unwrap(), &p, &p.default_start()).unwrap();
        assert!(g.abs() < 1e-15);
    }

    #[test]
    fn random_game_entries_in_range_and_seeded() {
        let spec = MatrixGameSpec::new(MatrixGameKind::Random, 50, 3);
        let a = spec.matrix().unwrap();
        assert_eq!(a, spec.matrix().unwrap());
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let mean = a.data().iter().sum::<f64>() / 2500.0;
        let var = a.data().iter().map(|v| v * v).sum::<f64>() / 2500.0;
        // Uniform on [-1, 1]: mean 0, variance 1/3.
        assert!(mean.abs() < 0.05);
        assert!((var - 1.0 / 3.0).abs() < 0.03);
        assert_ne!(a, MatrixGameSpec::new(MatrixGameKind::Random, 50, 4).matrix().unwrap());
    }

    #[test]
    fn game_operator_is_skew() {
        let p = make_matrix_game(&MatrixGameSpec::new(MatrixGameKind::Random, 10, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let u = Point::from_vec_unchecked((0..20).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let v = Point::from_vec_unchecked((0..20).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let s = p.eval(&u).sub(&p.eval(&v)).dot(&u.sub(&v));
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_sanity_for_all_problems() {
        let problems = [
            make_matrix_game(&MatrixGameSpec::new(MatrixGameKind::Random, 20, 1)).unwrap(),
            make_matrix_game(&MatrixGameSpec::new(MatrixGameKind::PolicemanBurglar { theta: 0.8 }, 20, 1)).unwrap(),
            make_matrix_game(&MatrixGameSpec::new(MatrixGameKind::TestMatrix, 20, 0)).unwrap(),
            make_qp_lagrangian(10, Plant::Random, 2).unwrap(),
            make_lower_bound(3.7f64.sqrt(), -1.0).unwrap(),
        ];
        for p in &problems {
            let l = p.lipschitz().unwrap();
            let worst = sampled_lipschitz_ratio(p, -1.0, 1.0, 1000, 5);
            assert!(worst <= l * (1.0 + 1e-9), "{}: {worst} > {l}", p.name());
        }
    }

    #[test]
    fn test_matrix_values() {
        let a = MatrixGameSpec::new(MatrixGameKind::TestMatrix, 3, 0).matrix().unwrap();
        assert_eq!(a[(0, 0)], 1.0 / 5.0);
        assert_eq!(a[(2, 2)], 5.0 / 5.0);
    }

    #[test]
    fn qp_plant_at_origin_is_stationary() {
        let p = make_qp_lagrangian(5, Plant::Given(Point::zeros(5), Point::zeros(5)), 1).unwrap();
        assert_eq!(p.eval(&Point::zeros(10)).norm(), 0.0);
    }

    #[test]
    fn qp_planted_kkt_residual() {
        let p = make_qp_lagrangian(100, Plant::Random, 2).unwrap();
        let zs = p.solution().unwrap();
        let f = p.eval(zs);
        assert!(f.norm() < 1e-12 * (1.0 + zs.norm()) * 100.0, "residual {}", f.norm());
    }

    #[test]
    fn qp_unplanted_solution_is_solved() {
        let p = make_qp_lagrangian(8, Plant::None, 4).unwrap();
        assert!(p.eval(p.solution().unwrap()).norm() < 1e-10);
    }

    #[test]
    fn qp_hessian_is_psd() {
        // Monotonicity of the saddle operator on random pairs.
        let p = make_qp_lagrangian(6, Plant::Random, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let u = Point::from_vec_unchecked((0..12).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let v = Point::from_vec_unchecked((0..12).map(|_| rng.gen_range(-2.0..2.0)).collect());
            assert!(p.eval(&u).sub(&p.eval(&v)).dot(&u.sub(&v)) >= -1e-12);
        }
    }

    #[test]
    fn forsaken_values() {
        let p = make_forsaken().unwrap();
        assert_eq!(p.eval(&Point::zeros(2)).as_slice(), &[-0.45, 0.0]);
        assert!(p.eval(&Point::from([0.08, 0.4])).norm() < 0.05);
        let z = Point::from([0.3, -0.7]);
        let fd = fd_jacobian(&p, &z);
        let norm = spectral_norm_2x2(fd);
        assert!((p.jacobian_norm(&z).unwrap() - norm).abs() < 1e-6);
    }

    #[test]
    fn polar_basics() {
        let p = make_polar_game(1.0 / 3.0).unwrap();
        assert_eq!(p.eval(&Point::zeros(2)).as_slice(), &[0.0, 0.0]);
        // On the unit circle psi vanishes: pure rotation.
        let t: f64 = 0.7;
        let f = p.eval(&Point::from([t.cos(), t.sin()]));
        assert!((f[0] + t.sin()).abs() < 1e-15 && (f[1] - t.cos()).abs() < 1e-15);
    }

    #[test]
    fn polar_jacobian_matches_finite_differences() {
        for a in [1.0 / 3.0, 3.0] {
            let p = make_polar_game(a).unwrap();
            for z in [[0.9, 0.9], [0.1, -0.5], [-1.0, 0.3]] {
                let fd = fd_jacobian(&p, &Point::from(z));
                let j = polar_jacobian(a, z[0], z[1]);
                for r in 0..2 {
                    for c in 0..2 {
                        assert!((fd[r][c] - j[r][c]).abs() < 1e-6, "a={a} z={z:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn spectral_norm_2x2_matches_power_iteration() {
        let m = [[0.3, -2.0], [1.5, 0.7]];
        let mat = Matrix::from_rows(&[m[0].to_vec(), m[1].to_vec()]).unwrap();
        assert!((spectral_norm_2x2(m) - mat.spectral_norm(1e-14)).abs() < 1e-10);
    }

    #[test]
    fn lower_bound_constants() {
        let p = make_lower_bound(3.7f64.sqrt(), -1.0).unwrap();
        assert!((p.lipschitz().unwrap() - 4.7f64.sqrt()).abs() < 1e-15);
        assert!((p.rho().unwrap() - 2.0 / 4.7).abs() < 1e-15);
        assert_eq!(p.eval(&Point::zeros(2)).norm(), 0.0);
        // rho L > 1 iff 4 b^2 > a^2 + b^2.
        let rl = p.rho().unwrap() * p.lipschitz().unwrap();
        assert_eq!(rl > 1.0, 4.0 > 4.7);
        assert!(make_lower_bound(1.0, 0.5).is_err());
    }

    #[test]
    fn weak_minty_inequality_holds_for_lower_bound() {
        let p = make_lower_bound(2.0, -1.0).unwrap();
        let rho = p.rho().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let z = Point::from([rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let f = p.eval(&z);
            assert!(f.dot(&z) >= -0.5 * rho * f.norm_sq() - 1e-12);
        }
    }

    #[test]
    fn matrix_csv_round_trip() {
        let a = MatrixGameSpec::new(MatrixGameKind::Random, 4, 11).matrix().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        a.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(load_matrix_csv(&path).unwrap(), a);
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = ProblemSpec::MatrixGame(MatrixGameSpec::new(MatrixGameKind::PolicemanBurglar { theta: 0.8 }, 50, 1));
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ProblemSpec>(&text).unwrap(), spec);
    }
}
