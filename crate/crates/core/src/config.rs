use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VIError};
use crate::linalg::Point;

/// The golden ratio `(1 + sqrt 5) / 2`.
pub const GOLDEN: f64 = 1.618_033_988_749_895;

/// Serialized by its short name (`as_str`); parsing accepts the aliases of
/// `FromStr`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "&'static str", try_from = "String")]
pub enum Algorithm {
    Fb,
    Eg,
    Popov,
    Fbf,
    Forb,
    Prg,
    ShadowDr,
    GraalFixed,
    GraalWm,
    Agraal,
    EgPlus,
    CurvatureEgPlus,
}

impl Algorithm {
    pub const ALL: [Algorithm; 12] = [
        Algorithm::Fb,
        Algorithm::Eg,
        Algorithm::Popov,
        Algorithm::Fbf,
        Algorithm::Forb,
        Algorithm::Prg,
        Algorithm::ShadowDr,
        Algorithm::GraalFixed,
        Algorithm::GraalWm,
        Algorithm::Agraal,
        Algorithm::EgPlus,
        Algorithm::CurvatureEgPlus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Fb => "fb",
            Algorithm::Eg => "eg",
            Algorithm::Popov => "popov",
            Algorithm::Fbf => "fbf",
            Algorithm::Forb => "forb",
            Algorithm::Prg => "prg",
            Algorithm::ShadowDr => "shadow-dr",
            Algorithm::GraalFixed => "graal",
            Algorithm::GraalWm => "graal-wm",
            Algorithm::Agraal => "agraal",
            Algorithm::EgPlus => "eg-plus",
            Algorithm::CurvatureEgPlus => "curvature-eg-plus",
        }
    }

    /// Fresh operator evaluations per iteration (a lower bound for the
    /// backtracking variant).
    pub fn calls_per_iter(self) -> u64 {
        match self {
            Algorithm::Eg | Algorithm::Fbf | Algorithm::EgPlus | Algorithm::CurvatureEgPlus => 2,
            _ => 1,
        }
    }

    /// Whether the update can leave the feasible set.
    pub fn may_be_infeasible(self) -> bool {
        matches!(self, Algorithm::Fbf | Algorithm::ShadowDr)
    }

    fn uses_fixed_alpha(self) -> bool {
        !matches!(self, Algorithm::Agraal | Algorithm::CurvatureEgPlus)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<Algorithm> for &'static str {
    fn from(a: Algorithm) -> Self {
        a.as_str()
    }
}

impl TryFrom<String> for Algorithm {
    type Error = VIError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Algorithm {
    type Err = VIError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let alg = match key.as_str() {
            "fb" | "forward-backward" => Algorithm::Fb,
            "eg" | "extragradient" => Algorithm::Eg,
            "popov" => Algorithm::Popov,
            "fbf" | "tseng" => Algorithm::Fbf,
            "forb" | "ogda" => Algorithm::Forb,
            "prg" => Algorithm::Prg,
            "shadow-dr" | "shadowdr" => Algorithm::ShadowDr,
            "graal" | "graal-fixed" => Algorithm::GraalFixed,
            "graal-wm" => Algorithm::GraalWm,
            "agraal" => Algorithm::Agraal,
            "eg-plus" | "eg+" => Algorithm::EgPlus,
            "curvature-eg-plus" | "curvature-eg+" | "cureg+" => Algorithm::CurvatureEgPlus,
            _ => return Err(VIError::config("algorithm", format!("unknown solver `{s}`"))),
        };
        Ok(alg)
    }
}

/// How aGRAAL picks its first step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alpha0Policy {
    Fixed(f64),
    Linesearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub phi: f64,
    /// aGRAAL growth factor; `None` means `1/phi + 1/phi^2`.
    pub gamma: Option<f64>,
    /// Fixed step size; `None` derives it from `L`.
    pub alpha: Option<f64>,
    pub epsilon: f64,
    pub alpha0: Alpha0Policy,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Record one trace row every `record_every` iterations (the first and
    /// last rows are always kept).
    pub record_every: usize,
    /// Scale of the update step in EG+.
    pub second_step_factor: f64,
    pub nu: f64,
    pub tau: f64,
    /// Overrides the problem's Lipschitz constant.
    pub lipschitz: Option<f64>,
    pub initial: Option<Point>,
    /// Stop when `||z||` exceeds this.
    pub divergence_bound: f64,
    /// Compatibility cap on aGRAAL steps (the original rule with an upper
    /// bound on all steps). Off by default.
    pub alpha_cap: Option<f64>,
    /// Evaluate the gap of the ergodic average on recorded rows.
    pub track_gap: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::Agraal,
            phi: 1.5,
            gamma: None,
            alpha: None,
            epsilon: 0.01,
            alpha0: Alpha0Policy::Linesearch,
            max_iters: 1000,
            grad_tol: 0.0,
            seed: 0,
            record_every: 1,
            second_step_factor: 0.5,
            nu: 0.99,
            tau: 0.9,
            lipschitz: None,
            initial: None,
            divergence_bound: 1e10,
            alpha_cap: None,
            track_gap: true,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        let phi = match algorithm {
            Algorithm::GraalFixed => 2.0,
            Algorithm::GraalWm => 1.2,
            _ => 1.5,
        };
        SolverConfig { algorithm, phi, ..Default::default() }
    }

    /// Parses a TOML table of config fields (missing fields take their
    /// defaults) and validates the result.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SolverConfig = toml::from_str(text).map_err(|e| VIError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn grad_tol(mut self, tol: f64) -> Self {
        self.grad_tol = tol;
        self
    }

    pub fn alpha0(mut self, policy: Alpha0Policy) -> Self {
        self.alpha0 = policy;
        self
    }

    pub fn initial(mut self, z0: Point) -> Self {
        self.initial = Some(z0);
        self
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n;
        self
    }

    pub fn track_gap(mut self, on: bool) -> Self {
        self.track_gap = on;
        self
    }

    /// The growth factor actually used by aGRAAL.
    pub fn effective_gamma(&self) -> f64 {
        self.gamma.unwrap_or(1.0 / self.phi + 1.0 / (self.phi * self.phi))
    }

    /// Checks parameter ranges that do not depend on the problem.
    pub fn validate(&self) -> Result<()> {
        let phi = self.phi;
        if !phi.is_finite() || phi <= 1.0 {
            return Err(VIError::config("phi", format!("must be > 1, got {phi}")));
        }
        match self.algorithm {
            Algorithm::GraalFixed if phi > 2.0 => {
                return Err(VIError::config("phi", format!("GRAAL needs phi in (1, 2], got {phi}")));
            }
            Algorithm::GraalWm if phi >= 2.0 => {
                return Err(VIError::config("phi", format!("weak-Minty GRAAL needs phi in (1, 2), got {phi}")));
            }
            Algorithm::Agraal => {
                if phi >= GOLDEN {
                    return Err(VIError::config("phi", format!("aGRAAL needs phi in (1, {GOLDEN}), got {phi}")));
                }
                let gamma = self.effective_gamma();
                let gmax = 1.0 / phi + 1.0 / (phi * phi);
                // Allow rounding in the user's decimal for the upper end.
                if !(gamma > 1.0 && gamma <= gmax * (1.0 + 1e-12)) {
                    return Err(VIError::config(
                        "gamma",
                        format!("must lie in (1, {gmax}] for phi = {phi}, got {gamma}"),
                    ));
                }
                match self.alpha0 {
                    Alpha0Policy::Fixed(a) if !(a > 0.0 && a.is_finite()) => {
                        return Err(VIError::config("alpha0", format!("must be positive, got {a}")));
                    }
                    _ => {}
                }
                if let Some(cap) = self.alpha_cap {
                    if !(cap > 0.0) {
                        return Err(VIError::config("alpha_cap", format!("must be positive, got {cap}")));
                    }
                }
            }
            _ => {}
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(VIError::config("alpha", format!("must be positive, got {a}")));
            }
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(VIError::config("epsilon", format!("must lie in [0, 1), got {}", self.epsilon)));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(VIError::config("grad_tol", "must be nonnegative"));
        }
        if self.record_every == 0 {
            return Err(VIError::config("record_every", "must be at least 1"));
        }
        if !(self.second_step_factor > 0.0 && self.second_step_factor <= 1.0) {
            return Err(VIError::config(
                "second_step_factor",
                format!("must lie in (0, 1], got {}", self.second_step_factor),
            ));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(VIError::config("nu", format!("must lie in (0, 1), got {}", self.nu)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(VIError::config("tau", format!("must lie in (0, 1), got {}", self.tau)));
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(VIError::config("lipschitz", format!("must be positive, got {l}")));
            }
        }
        Ok(())
    }

    /// Fixed step for the non-adaptive methods: the user value if given,
    /// otherwise the largest step each method's theory admits, shrunk by
    /// `1 - epsilon`.
    pub fn resolve_alpha(&self, lipschitz: Option<f64>) -> Result<f64> {
        if let Some(a) = self.alpha {
            return Ok(a);
        }
        if !self.algorithm.uses_fixed_alpha() {
            return Err(VIError::config("alpha", format!("{} chooses its own steps", self.algorithm)));
        }
        let l = self.lipschitz.or(lipschitz).ok_or_else(|| {
            VIError::config("alpha", format!("{} needs alpha or a Lipschitz constant", self.algorithm))
        })?;
        if !(l > 0.0) {
            return Err(VIError::config("lipschitz", "must be positive to derive a step size"));
        }
        let shrink = 1.0 - self.epsilon;
        let alpha = match self.algorithm {
            Algorithm::Fb | Algorithm::Eg | Algorithm::Fbf | Algorithm::EgPlus => shrink / l,
            Algorithm::Popov | Algorithm::Forb => shrink / (2.0 * l),
            Algorithm::Prg => shrink * (std::f64::consts::SQRT_2 - 1.0) / l,
            Algorithm::ShadowDr => shrink / (3.0 * l),
            Algorithm::GraalFixed => {
                if self.phi <= GOLDEN {
                    self.phi / (2.0 * l)
                } else {
                    (self.phi - 2.0 * self.epsilon) / (2.0 * l)
                }
            }
            Algorithm::GraalWm => (2.0 - self.phi) / l,
            Algorithm::Agraal | Algorithm::CurvatureEgPlus => unreachable!(),
        };
        Ok(alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.as_str().parse::<Algorithm>().unwrap(), alg);
        }
        assert_eq!("OGDA".parse::<Algorithm>().unwrap(), Algorithm::Forb);
        assert!("pp".parse::<Algorithm>().is_err());
    }

    #[test]
    fn default_steps() {
        let l = 2.0;
        let a = |alg| SolverConfig::new(alg).resolve_alpha(Some(l)).unwrap();
        assert!((a(Algorithm::Eg) - 0.99 / 2.0).abs() < 1e-15);
        assert!((a(Algorithm::Forb) - 0.99 / 4.0).abs() < 1e-15);
        assert!((a(Algorithm::ShadowDr) - 0.99 / 6.0).abs() < 1e-15);
        assert!((a(Algorithm::GraalFixed) - 0.99 / 2.0).abs() < 1e-15);
        let golden = SolverConfig::new(Algorithm::GraalFixed).phi(1.5);
        assert_eq!(golden.resolve_alpha(Some(l)).unwrap(), 1.5 / 4.0);
        let wm = SolverConfig::new(Algorithm::GraalWm).phi(1.2);
        assert!((wm.resolve_alpha(Some(l)).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn missing_lipschitz_is_config_error() {
        let err = SolverConfig::new(Algorithm::Eg).resolve_alpha(None).unwrap_err();
        assert!(matches!(err, VIError::Config { field: "alpha", .. }));
    }

    #[test]
    fn graal_phi_range() {
        assert!(SolverConfig::new(Algorithm::GraalFixed).phi(2.0).validate().is_ok());
        assert!(SolverConfig::new(Algorithm::GraalFixed).phi(2.1).validate().is_err());
        assert!(SolverConfig::new(Algorithm::GraalFixed).phi(1.0).validate().is_err());
    }

    #[test]
    fn agraal_ranges() {
        assert!(SolverConfig::new(Algorithm::Agraal).phi(1.5).validate().is_ok());
        assert!(SolverConfig::new(Algorithm::Agraal).phi(1.7).validate().is_err());
        let too_big = SolverConfig::new(Algorithm::Agraal).phi(1.5).gamma(1.2);
        assert!(matches!(too_big.validate(), Err(VIError::Config { field: "gamma", .. })));
        let too_small = SolverConfig::new(Algorithm::Agraal).phi(1.5).gamma(1.0);
        assert!(too_small.validate().is_err());
    }

    #[test]
    fn nonpositive_alpha_rejected() {
        assert!(SolverConfig::new(Algorithm::Eg).alpha(0.0).validate().is_err());
        assert!(SolverConfig::new(Algorithm::Eg).alpha(-1.0).validate().is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = SolverConfig::new(Algorithm::Agraal).phi(1.2).alpha0(Alpha0Policy::Fixed(0.01));
        let text = toml::to_string(&cfg).unwrap();
        let back: SolverConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
