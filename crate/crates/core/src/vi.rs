//! Problem model: an operator `F`, a feasible set `C`, and whatever side
//! information (Lipschitz constant, reference solution, Jacobian norm) is known.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, VIError};
use crate::linalg::{Matrix, Point};
use crate::metrics::GapSpec;
use crate::projections::Projection;

/// Deterministic map `R^d -> R^d`.
pub type Operator = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

/// Map `R^d -> [0, inf)`, used for the spectral norm of the Jacobian.
pub type ScalarField = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// `F(z) = B z + c`. Attached when the operator is affine so that metrics can
/// use closed forms instead of sampling.
#[derive(Clone, Debug)]
pub struct AffineForm {
    pub b: Matrix,
    pub c: Vec<f64>,
}

/// A variational inequality: find `z* in C` with `<F(z*), z - z*> >= 0`.
#[derive(Clone)]
pub struct VIProblem {
    name: String,
    dim: usize,
    operator: Operator,
    projection: Projection,
    lipschitz: Option<f64>,
    solution: Option<Point>,
    jacobian_norm: Option<ScalarField>,
    affine: Option<AffineForm>,
    rho: Option<f64>,
    gap: Option<GapSpec>,
    start: Option<Point>,
}

impl fmt::Debug for VIProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VIProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("projection", &self.projection)
            .field("lipschitz", &self.lipschitz)
            .field("solution", &self.solution)
            .field("rho", &self.rho)
            .field("affine", &self.affine.is_some())
            .finish_non_exhaustive()
    }
}

impl VIProblem {
    pub fn new(
        name: impl Into<String>,
        projection: Projection,
        operator: impl Fn(&Point) -> Point + Send + Sync + 'static,
    ) -> Result<Self> {
        let dim = projection.dim();
        if dim == 0 {
            return Err(VIError::InvalidArgument("problem dimension must be positive".into()));
        }
        Ok(VIProblem {
            name: name.into(),
            dim,
            operator: Arc::new(operator),
            projection,
            lipschitz: None,
            solution: None,
            jacobian_norm: None,
            affine: None,
            rho: None,
            gap: None,
            start: None,
        })
    }

    /// Affine problem `F(z) = Bz + c`; the Lipschitz constant is set to `||B||_2`.
    pub fn affine(name: impl Into<String>, projection: Projection, b: Matrix, c: Vec<f64>) -> Result<Self> {
        let dim = projection.dim();
        VIError::check_dim(dim, b.rows())?;
        VIError::check_dim(dim, b.cols())?;
        VIError::check_dim(dim, c.len())?;
        let lip = b.spectral_norm(1e-12);
        let form = AffineForm { b: b.clone(), c: c.clone() };
        let op = move |z: &Point| {
            let mut out = b.matvec(z);
            out.iter_mut().zip(&c).for_each(|(o, ci)| *o += ci);
            Point::from_vec_unchecked(out)
        };
        let mut p = VIProblem::new(name, projection, op)?;
        p.lipschitz = Some(lip);
        p.affine = Some(form);
        Ok(p)
    }

    pub fn with_lipschitz(mut self, l: f64) -> Result<Self> {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(VIError::InvalidArgument(format!(
                "Lipschitz constant must be finite and nonnegative, got {l}"
            )));
        }
        self.lipschitz = Some(l);
        Ok(self)
    }

    pub fn with_solution(mut self, z: Point) -> Result<Self> {
        VIError::check_dim(self.dim, z.dim())?;
        self.solution = Some(z);
        Ok(self)
    }

    pub fn with_jacobian_norm(mut self, f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        self.jacobian_norm = Some(Arc::new(f));
        self
    }

    /// Weak Minty parameter `rho`: `<F(z), z - z*> >= -(rho/2)||F(z)||^2`.
    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }

    pub fn with_gap(mut self, gap: GapSpec) -> Self {
        self.gap = Some(gap);
        self
    }

    pub fn with_start(mut self, z0: Point) -> Result<Self> {
        VIError::check_dim(self.dim, z0.dim())?;
        self.start = Some(z0);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn solution(&self) -> Option<&Point> {
        self.solution.as_ref()
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    pub fn gap_spec(&self) -> Option<&GapSpec> {
        self.gap.as_ref()
    }

    pub fn affine_form(&self) -> Option<&AffineForm> {
        self.affine.as_ref()
    }

    pub fn has_jacobian_norm(&self) -> bool {
        self.jacobian_norm.is_some()
    }

    /// Default starting point: the attached one, otherwise the projection of 0.
    pub fn default_start(&self) -> Point {
        match &self.start {
            Some(z) => z.clone(),
            None => self.projection.project_unchecked(Point::zeros(self.dim)),
        }
    }

    /// Evaluates `F(z)` after checking the dimension.
    pub fn operator(&self, z: &Point) -> Result<Point> {
        VIError::check_dim(self.dim, z.dim())?;
        Ok((self.operator)(z))
    }

    pub(crate) fn eval(&self, z: &Point) -> Point {
        (self.operator)(z)
    }

    pub fn project(&self, z: &Point) -> Result<Point> {
        self.projection.project(z)
    }

    pub(crate) fn proj(&self, z: Point) -> Point {
        self.projection.project_unchecked(z)
    }

    pub fn jacobian_norm(&self, z: &Point) -> Result<f64> {
        let j = self
            .jacobian_norm
            .as_ref()
            .ok_or_else(|| VIError::config("jacobian_norm", "problem has no Jacobian-norm oracle"))?;
        VIError::check_dim(self.dim, z.dim())?;
        Ok(j(z))
    }
}

/// Weighted average `sum w_i z^i / sum w_i`.
///
/// Equal weights give the plain average of the iterates.
pub fn ergodic_average<'a, I>(points: I) -> Result<Point>
where
    I: IntoIterator<Item = (&'a Point, f64)>,
{
    let mut acc = ErgodicAverage::default();
    for (z, w) in points {
        acc.push(z, w)?;
    }
    acc.mean()
}

/// Running weighted average, for use inside solver loops.
#[derive(Clone, Debug, Default)]
pub struct ErgodicAverage {
    sum: Vec<f64>,
    weight: f64,
}

impl ErgodicAverage {
    pub fn push(&mut self, z: &[f64], w: f64) -> Result<()> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(VIError::InvalidArgument(format!("averaging weight must be positive, got {w}")));
        }
        if self.sum.is_empty() {
            self.sum = vec![0.0; z.len()];
        } else {
            VIError::check_dim(self.sum.len(), z.len())?;
        }
        for (s, v) in self.sum.iter_mut().zip(z) {
            *s += w * v;
        }
        self.weight += w;
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> Result<Point> {
        if self.weight == 0.0 {
            return Err(VIError::NoIterates);
        }
        Ok(Point::from_vec_unchecked(self.sum.iter().map(|s| s / self.weight).collect()))
    }
}

/// Gradient block of a min-max objective: `(x, y) -> grad`.
pub type PartialGradient = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Builds the VI of a saddle problem `min_x max_y f(x, y)`:
/// `F(x, y) = (grad_x f, -grad_y f)` on `X x Y`.
pub fn min_max_to_vi(
    name: impl Into<String>,
    grad_x: PartialGradient,
    grad_y: PartialGradient,
    set_x: Projection,
    set_y: Projection,
) -> Result<VIProblem> {
    let dx = set_x.dim();
    let dy = set_y.dim();
    // Probe once at a feasible point so that shape errors surface here and not
    // inside a solver loop.
    let x0 = set_x.project_unchecked(Point::zeros(dx));
    let y0 = set_y.project_unchecked(Point::zeros(dy));
    VIError::check_dim(dx, grad_x(&x0, &y0).len())?;
    VIError::check_dim(dy, grad_y(&x0, &y0).len())?;

    let op = move |z: &Point| {
        let (x, y) = z.split_at(dx);
        let mut out = grad_x(x, y);
        out.extend(grad_y(x, y).into_iter().map(|g| -g));
        Point::from_vec_unchecked(out)
    };
    VIProblem::new(name, Projection::product(vec![set_x, set_y]), op)
}
