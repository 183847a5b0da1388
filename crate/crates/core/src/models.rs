//! Model parameter sets, validation, and the JSON model document.
//!
//! A [`TcbmModel`] is a Brownian motion with drift run on an independent
//! subordinator clock, plus a linear calendar-time drift `gamma` that carries
//! the martingale correction:
//!
//! ```text
//! Y_t = gamma * t + mu * T_t + sigma * W(T_t)
//! ```
//!
//! Symmetry depends only on `mu` and `sigma`; `gamma` never enters it.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::ValidationReport;

/// Drift and volatility of the Brownian motion before the time change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownianDrift {
    pub mu: f64,
    pub sigma: f64,
}

impl BrownianDrift {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }

    /// Drift of the exponential tilt `nu(x) = exp(theta x) f(x)` with `f` even.
    ///
    /// Equals `mu` when `sigma = 1`.
    pub fn normalized_drift(&self) -> f64 {
        self.mu / (self.sigma * self.sigma)
    }
}

/// Positive-increment Levy clock. Both families have zero drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SubordinatorSpec {
    /// Levy density `a * x^(-1-alpha)` on `x > 0`.
    Stable { a: f64, alpha: f64 },
    /// Levy density `c * exp(-lambda x) * x^(-1-alpha)` on `x > 0`.
    TemperedStable { c: f64, lambda: f64, alpha: f64 },
}

impl SubordinatorSpec {
    pub fn alpha(&self) -> f64 {
        match *self {
            SubordinatorSpec::Stable { alpha, .. }
            | SubordinatorSpec::TemperedStable { alpha, .. } => alpha,
        }
    }

    /// Scale of the Levy density (`a` or `c`).
    pub fn scale(&self) -> f64 {
        match *self {
            SubordinatorSpec::Stable { a, .. } => a,
            SubordinatorSpec::TemperedStable { c, .. } => c,
        }
    }

    /// Exponential tempering rate; zero for the stable family.
    pub fn tempering(&self) -> f64 {
        match *self {
            SubordinatorSpec::Stable { .. } => 0.0,
            SubordinatorSpec::TemperedStable { lambda, .. } => lambda,
        }
    }

    /// `scale * Gamma(1 - alpha) / alpha`, the positive coefficient `k` in
    /// the Laplace exponent `-k (-w)^alpha` (stable) or
    /// `-k [(lambda - w)^alpha - lambda^alpha]` (tempered).
    pub fn exponent_scale(&self) -> f64 {
        let alpha = self.alpha();
        self.scale() * gamma(1.0 - alpha) / alpha
    }

    /// Levy density `rho(x)` of the clock; zero for `x <= 0`.
    pub fn levy_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let alpha = self.alpha();
        self.scale() * (-self.tempering() * x).exp() * x.powf(-1.0 - alpha)
    }

    pub fn validate(self) -> Result<Self, ValidationReport> {
        let mut report = ValidationReport::default();
        let alpha = self.alpha();
        if !(alpha > 0.0 && alpha < 1.0) {
            report.push("alpha", "out of (0,1)", alpha);
        }
        match self {
            SubordinatorSpec::Stable { a, .. } => {
                if !(a > 0.0 && a.is_finite()) {
                    report.push("a", "must be positive and finite", a);
                }
            }
            SubordinatorSpec::TemperedStable { c, lambda, .. } => {
                if !(c > 0.0 && c.is_finite()) {
                    report.push("c", "must be positive and finite", c);
                }
                if !(lambda > 0.0 && lambda.is_finite()) {
                    report.push("lambda", "must be positive and finite", lambda);
                }
            }
        }
        if report.is_empty() && !integrable_on_log_grid(|x| self.levy_density(x), |x| x.min(1.0)) {
            report.push("rho", "integral of (x ^ 1) rho(x) is not finite", f64::NAN);
        }
        report.into_result(self)
    }
}

/// Numerical integrability check of `weight(x) * density(x)` over a fixed
/// log grid on `(0, inf)`: values must be finite and nonnegative, and the
/// log-space integrand must decay towards both ends of the grid.
pub(crate) fn integrable_on_log_grid(
    density: impl Fn(f64) -> f64,
    weight: impl Fn(f64) -> f64,
) -> bool {
    const LO: f64 = -30.0;
    const HI: f64 = 30.0;
    const N: usize = 601;
    let h = (HI - LO) / (N - 1) as f64;
    let mut g = Vec::with_capacity(N);
    for i in 0..N {
        let x = (LO + h * i as f64).exp();
        let v = density(x);
        if !v.is_finite() || v < 0.0 {
            return false;
        }
        g.push(weight(x) * v * x);
    }
    let peak = g.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return true;
    }
    let total: f64 = g.iter().sum::<f64>() * h;
    total.is_finite() && g[0] < peak && g[N - 1] < peak && g[0] <= g[1] && g[N - 1] <= g[N - 2]
}

/// Brownian motion with drift on a subordinator clock, with an extra
/// calendar-time drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcbmModel {
    pub bm: BrownianDrift,
    pub subordinator: SubordinatorSpec,
    #[serde(default)]
    pub gamma: f64,
}

impl TcbmModel {
    pub fn new(bm: BrownianDrift, subordinator: SubordinatorSpec) -> Self {
        Self {
            bm,
            subordinator,
            gamma: 0.0,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(self) -> Result<Self, ValidationReport> {
        let mut report = ValidationReport::default();
        if !(self.bm.sigma > 0.0 && self.bm.sigma.is_finite()) {
            report.push("bm.sigma", "must be positive and finite", self.bm.sigma);
        }
        if !self.bm.mu.is_finite() {
            report.push("bm.mu", "must be finite", self.bm.mu);
        }
        if let Err(sub) = self.subordinator.validate() {
            report.extend(sub.prefixed("subordinator"));
        }
        if !self.gamma.is_finite() {
            report.push("gamma", "must be finite", self.gamma);
        }
        report.into_result(self)
    }
}

/// Closed-form Levy models used as oracles and for the parameter criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum NamedModel {
    Cgmy { c: f64, g: f64, m: f64, y: f64 },
    Meixner { a: f64, b: f64, d: f64 },
}

impl NamedModel {
    pub fn validate(self) -> Result<Self, ValidationReport> {
        let mut report = ValidationReport::default();
        match self {
            NamedModel::Cgmy { c, g, m, y } => {
                for (name, v) in [("c", c), ("g", g), ("m", m)] {
                    if !(v > 0.0 && v.is_finite()) {
                        report.push(name, "must be positive and finite", v);
                    }
                }
                if !(y > 0.0 && y < 1.0) {
                    report.push("y", "out of (0,1)", y);
                }
            }
            NamedModel::Meixner { a, b, d } => {
                if !(a > 0.0 && a.is_finite()) {
                    report.push("a", "must be positive and finite", a);
                }
                if !(b.abs() < std::f64::consts::PI) {
                    report.push("b", "out of (-pi,pi)", b);
                }
                if !(d > 0.0 && d.is_finite()) {
                    report.push("d", "must be positive and finite", d);
                }
            }
        }
        report.into_result(self)
    }

    /// Drift of the Brownian motion in the subordinated representation:
    /// `(G - M) / 2` for CGMY and `b / a` for Meixner, both at unit volatility.
    pub fn madan_yor_drift(&self) -> f64 {
        match *self {
            NamedModel::Cgmy { g, m, .. } => (g - m) / 2.0,
            NamedModel::Meixner { a, b, .. } => b / a,
        }
    }
}

/// Riskless rate, dividend yield and spot of the primal market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub r: f64,
    pub delta: f64,
    pub spot: f64,
}

impl MarketSpec {
    pub fn new(r: f64, delta: f64, spot: f64) -> Self {
        Self { r, delta, spot }
    }

    /// Net carry `r - delta`.
    pub fn carry(&self) -> f64 {
        self.r - self.delta
    }

    pub fn validate(self) -> Result<Self, ValidationReport> {
        let mut report = ValidationReport::default();
        if !(self.r >= 0.0 && self.r.is_finite()) {
            report.push("r", "must be nonnegative and finite", self.r);
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            report.push("delta", "must be nonnegative and finite", self.delta);
        }
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            report.push("spot", "must be positive and finite", self.spot);
        }
        report.into_result(self)
    }
}

/// Any model the toolkit accepts; the JSON document form.
///
/// ```json
/// {"type": "tcbm", "bm": {"mu": -0.5, "sigma": 1.0},
///  "subordinator": {"type": "tempered-stable", "c": 1.0, "lambda": 1.0, "alpha": 0.5},
///  "gamma": 0.0}
/// {"type": "cgmy", "c": 1.0, "g": 2.0, "m": 3.0, "y": 0.5}
/// {"type": "meixner", "a": 2.0, "b": -1.0, "d": 0.5}
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ModelDocument", into = "ModelDocument")]
pub enum Model {
    Tcbm(TcbmModel),
    Named(NamedModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ModelDocument {
    Tcbm(TcbmModel),
    Cgmy(CgmyFields),
    Meixner(MeixnerFields),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CgmyFields {
    c: f64,
    g: f64,
    m: f64,
    y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeixnerFields {
    a: f64,
    b: f64,
    d: f64,
}

impl From<ModelDocument> for Model {
    fn from(doc: ModelDocument) -> Self {
        match doc {
            ModelDocument::Tcbm(t) => Model::Tcbm(t),
            ModelDocument::Cgmy(CgmyFields { c, g, m, y }) => {
                Model::Named(NamedModel::Cgmy { c, g, m, y })
            }
            ModelDocument::Meixner(MeixnerFields { a, b, d }) => {
                Model::Named(NamedModel::Meixner { a, b, d })
            }
        }
    }
}

impl From<Model> for ModelDocument {
    fn from(m: Model) -> Self {
        match m {
            Model::Tcbm(t) => ModelDocument::Tcbm(t),
            Model::Named(NamedModel::Cgmy { c, g, m, y }) => {
                ModelDocument::Cgmy(CgmyFields { c, g, m, y })
            }
            Model::Named(NamedModel::Meixner { a, b, d }) => {
                ModelDocument::Meixner(MeixnerFields { a, b, d })
            }
        }
    }
}

impl Model {
    pub fn validate(self) -> Result<Self, ValidationReport> {
        match self {
            Model::Tcbm(t) => t.validate().map(Model::Tcbm),
            Model::Named(n) => n.validate().map(Model::Named),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

impl From<TcbmModel> for Model {
    fn from(t: TcbmModel) -> Self {
        Model::Tcbm(t)
    }
}

impl From<NamedModel> for Model {
    fn from(n: NamedModel) -> Self {
        Model::Named(n)
    }
}
