//! Levy densities of subordinated Brownian motion, the symmetry criterion,
//! dual triplets and the complete-monotonicity check.
//!
//! For `Y = mu T + W(T)` with clock Levy density `rho`, the jump density is
//! the Gaussian mixture
//!
//! ```text
//! nu(x) = int_0^inf (2 pi y)^(-1/2) exp(-(x - mu y)^2 / (2 y)) rho(y) dy
//!       = exp(mu x) f(x),    f(x) = f(-x).
//! ```
//!
//! Volatility `sigma != 1` is reduced to the unit case by scaling: with
//! `m = mu / sigma`, `nu_sigma(x) = nu_1(x / sigma; m) / sigma`, and the tilt
//! becomes `theta = mu / sigma^2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfn::LevyTriplet1D;
use crate::error::{Error, Result};
use crate::models::{integrable_on_log_grid, Model, NamedModel, TcbmModel};
use crate::pricing;
use crate::quad::{self, QuadTol};

/// Two-sided Levy density `x -> nu(x)`, `x != 0`.
#[derive(Clone)]
pub struct LevyDensity1D {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl LevyDensity1D {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(f) }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// Nonnegativity and finiteness of `int (x^2 ^ 1) nu` on a fixed grid.
    pub fn is_levy_measure(&self) -> bool {
        let w = |x: f64| (x * x).min(1.0);
        integrable_on_log_grid(|x| self.eval(x), w) && integrable_on_log_grid(|x| self.eval(-x), w)
    }
}

impl fmt::Debug for LevyDensity1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LevyDensity1D(..)")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DensityConfig {
    pub tol: QuadTol,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            tol: QuadTol::new(1e-10, 1e-8),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kernel {
    /// `exp(-(x - m y)^2 / (2 y))`, the mixture as written.
    Direct,
    /// `exp(-x^2 / (2 y) - m^2 y / 2)`, the even factor.
    Even,
}

/// Gaussian mixture over the clock density at unit volatility, computed in
/// `u = ln y`. Returns `(value, error estimate)`.
fn mixture(model: &TcbmModel, x: f64, kernel: Kernel, cfg: &DensityConfig) -> Result<(f64, f64)> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::Precondition(format!(
            "Levy density needs finite x != 0, got {x}"
        )));
    }
    let sigma = model.bm.sigma;
    let xs = x / sigma;
    let m = model.bm.mu / sigma;
    let sub = &model.subordinator;
    let alpha = sub.alpha();
    let lambda = sub.tempering();
    let c0 = sub.scale().ln() - 0.5 * (2.0 * PI).ln();
    let q = 0.5 + alpha;

    let log_integrand = |u: f64| {
        let y = u.exp();
        let gauss = match kernel {
            Kernel::Direct => {
                let d = xs - m * y;
                -d * d / (2.0 * y)
            }
            Kernel::Even => -xs * xs / (2.0 * y) - 0.5 * m * m * y,
        };
        c0 - q * u + gauss - lambda * y
    };

    // The log-integrand is strictly concave in u; its maximiser solves
    // kappa t^2 + q t - x^2 / 2 = 0 with t = exp(u).
    let kappa = 0.5 * m * m + lambda;
    let t_star = xs * xs / (q + (q * q + 2.0 * kappa * xs * xs).sqrt());
    let u_star = t_star.ln();
    let peak = log_integrand(u_star);
    // Curvature at the peak sets its width in u; far jumps make it narrow.
    let width = (xs * xs / (2.0 * t_star) + kappa * t_star)
        .sqrt()
        .recip()
        .min(0.5);
    const DROP: f64 = 50.0;
    let mut step = width;
    let mut lo = u_star - step;
    while log_integrand(lo) > peak - DROP {
        step *= 1.5;
        lo -= step;
    }
    step = width;
    let mut hi = u_star + step;
    while log_integrand(hi) > peak - DROP {
        step *= 1.5;
        hi += step;
    }
    let breaks: Vec<f64> = [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|k| u_star + k * width)
        .collect();

    let f = |u: f64| (log_integrand(u) - peak).exp();
    let scale = peak.exp();
    let tol = QuadTol {
        abs: cfg.tol.abs * sigma / scale,
        rel: cfg.tol.rel,
        max_panels: cfg.tol.max_panels,
    };
    let r = quad::integrate_with_breaks(&f, lo, hi, &breaks, tol)?;
    Ok((r.value * scale / sigma, r.error * scale / sigma))
}

/// Levy density of the subordinated Brownian motion at `x != 0`.
pub fn subordinated_levy_density(model: &TcbmModel, x: f64) -> Result<f64> {
    subordinated_levy_density_with(model, x, &DensityConfig::default())
}

pub fn subordinated_levy_density_with(
    model: &TcbmModel,
    x: f64,
    cfg: &DensityConfig,
) -> Result<f64> {
    Ok(mixture(model, x, Kernel::Direct, cfg)?.0)
}

/// Even factor `f` in `nu(x) = exp(theta x) f(x)`, `theta = mu / sigma^2`.
pub fn even_factor(model: &TcbmModel, x: f64) -> Result<f64> {
    even_factor_with(model, x, &DensityConfig::default())
}

pub fn even_factor_with(model: &TcbmModel, x: f64, cfg: &DensityConfig) -> Result<f64> {
    Ok(mixture(model, x, Kernel::Even, cfg)?.0)
}

/// Closed-form Levy densities of the named models.
pub fn named_levy_density(named: &NamedModel, x: f64) -> f64 {
    if x == 0.0 {
        return f64::INFINITY;
    }
    match *named {
        NamedModel::Cgmy { c, g, m, y } => {
            let rate = if x > 0.0 { m } else { g };
            c * (-rate * x.abs()).exp() * x.abs().powf(-1.0 - y)
        }
        NamedModel::Meixner { a, b, d } => {
            // d exp(b x / a) / (x sinh(pi x / a)), written without overflow.
            let ax = x.abs();
            let k = PI * ax / a;
            d * 2.0 * (b * x / a - k).exp() / (ax * (-(-2.0 * k).exp_m1()))
        }
    }
}

/// Levy density of any model as a shareable evaluator. Quadrature failures
/// surface as `NaN`.
pub fn levy_density(model: &Model) -> LevyDensity1D {
    match *model {
        Model::Tcbm(t) => {
            LevyDensity1D::new(move |x| subordinated_levy_density(&t, x).unwrap_or(f64::NAN))
        }
        Model::Named(n) => LevyDensity1D::new(move |x| named_levy_density(&n, x)),
    }
}

/// Tilt `theta` with `nu(x) = exp(theta x) f(x)`, `f` even.
pub fn tilt(model: &Model) -> f64 {
    match model {
        Model::Tcbm(t) => t.bm.normalized_drift(),
        Model::Named(n) => n.madan_yor_drift(),
    }
}

/// Triplet of a subordinated Brownian model (truncation `1{|y| <= 1}`).
///
/// The clock has zero drift, so there is no Gaussian part and the drift is
/// `gamma + int_0^1 x (nu(x) - nu(-x)) dx`, with the odd part taken as
/// `2 sinh(theta x) f(x)` to stay absolutely convergent.
pub fn tcbm_levy_triplet(model: &TcbmModel) -> Result<LevyTriplet1D> {
    let m = *model;
    let theta = m.bm.normalized_drift();
    let cfg = DensityConfig {
        tol: QuadTol::new(1e-13, 1e-12),
    };
    let odd = |t: f64| {
        let x = t.exp();
        let f = even_factor_with(&m, x, &cfg).unwrap_or(f64::NAN);
        x * x * 2.0 * (theta * x).sinh() * f
    };
    let b = if theta == 0.0 {
        0.0
    } else {
        quad::integrate(&odd, -40.0, 0.0, QuadTol::new(1e-13, 1e-12))?.value
    };
    Ok(LevyTriplet1D::new(
        m.gamma + b,
        0.0,
        levy_density(&Model::Tcbm(m)),
    )?)
}

/// Triplet of a named model.
///
/// CGMY (`Y < 1`) has finite variation: `b = int_{|x|<=1} x nu(x) dx`.
/// Meixner has mean `a d tan(b/2)`: `b = mean - int_{|x|>1} x nu(x) dx`.
pub fn named_levy_triplet(named: &NamedModel) -> Result<LevyTriplet1D> {
    let n = *named;
    let odd = |x: f64| x * (named_levy_density(&n, x) - named_levy_density(&n, -x));
    let tol = QuadTol::new(1e-14, 1e-13);
    let b = match n {
        NamedModel::Cgmy { .. } => {
            let g = |t: f64| {
                let x = t.exp();
                x * odd(x)
            };
            quad::integrate(&g, -60.0, 0.0, tol)?.value
        }
        NamedModel::Meixner { a, b, d } => {
            let mean = a * d * (b / 2.0).tan();
            let g = |t: f64| {
                let x = t.exp();
                x * odd(x)
            };
            let mut upper = 1.0;
            while g(upper).abs() > 1e-18 && upper < 10.0 {
                upper += 0.5;
            }
            mean - quad::integrate(&g, 0.0, upper, tol)?.value
        }
    };
    Ok(LevyTriplet1D::new(b, 0.0, levy_density(&Model::Named(n)))?)
}

/// Which test decided a [`SymmetryReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "density-grid")]
    DensityGrid,
    #[serde(rename = "drift-half")]
    DriftHalf,
    #[serde(rename = "cgmy-GM")]
    CgmyGm,
    #[serde(rename = "meixner-2ba")]
    Meixner2ba,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub symmetric: bool,
    /// Absolute residual at the decisive point (density grid) or the
    /// distance of the parameter criterion from its target.
    pub sup_residual: f64,
    pub scale: f64,
    pub criterion_used: Criterion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_x: Option<f64>,
    /// Drift as stored (`mu`, or the subordinated-representation drift of a named model).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    /// Tilt `mu / sigma^2`, the quantity compared against `-1/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_drift: Option<f64>,
    /// Density-grid confirmation attached to a parameter criterion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmation: Option<Box<SymmetryReport>>,
}

impl SymmetryReport {
    pub fn relative_residual(&self) -> f64 {
        self.sup_residual / self.scale
    }
}

#[derive(Debug, Clone)]
pub struct SymmetryOptions {
    pub tol: f64,
    pub floor: f64,
    pub grid: Vec<f64>,
}

impl Default for SymmetryOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            floor: 1e-300,
            grid: default_grid(),
        }
    }
}

/// 20 log-spaced points on `[0.05, 5]`.
pub fn default_grid() -> Vec<f64> {
    let (lo, hi) = (0.05f64.ln(), 5f64.ln());
    (0..20)
        .map(|i| (lo + (hi - lo) * i as f64 / 19.0).exp())
        .collect()
}

/// Residual of `nu(x) = exp(-x) nu(-x)` over a grid of positive points.
///
/// Each point contributes `|nu(x) - e^{-x} nu(-x)|` normalized by
/// `max(nu(x), e^{-x} nu(-x), floor)` and the mirrored
/// `|nu(-x) - e^{x} nu(x)|` normalized likewise; the report carries the
/// absolute residual and normalizer of the worst point.
pub fn symmetry_residual(
    nu: &LevyDensity1D,
    grid: &[f64],
    tol: f64,
    floor: f64,
) -> Result<SymmetryReport> {
    if grid.is_empty() {
        return Err(Error::Precondition("symmetry grid is empty".into()));
    }
    if let Some(&bad) = grid.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::Precondition(format!(
            "symmetry grid points must be positive and finite, got {bad}"
        )));
    }
    let points: Vec<Result<(f64, f64, f64)>> = grid
        .par_iter()
        .map(|&x| {
            let p = nu.eval(x);
            let n = nu.eval(-x);
            if !(p.is_finite() && n.is_finite()) {
                return Err(Error::Quadrature {
                    what: format!("Levy density evaluation failed at x = +/-{x}"),
                    estimate: f64::NAN,
                    requested: 0.0,
                });
            }
            let mirrored = (-x).exp() * n;
            let r1 = (p - mirrored).abs();
            let s1 = p.max(mirrored).max(floor);
            let back = x.exp() * p;
            let r2 = (n - back).abs();
            let s2 = n.max(back).max(floor);
            Ok(if r2 / s2 > r1 / s1 {
                (x, r2, s2)
            } else {
                (x, r1, s1)
            })
        })
        .collect();
    let mut worst: Option<(f64, f64, f64)> = None;
    for p in points {
        let (x, r, s) = p?;
        worst = match worst {
            None => Some((x, r, s)),
            Some((wx, wr, ws)) => {
                let (a, b) = (r / s, wr / ws);
                if a > b || (a == b && x < wx) {
                    Some((x, r, s))
                } else {
                    Some((wx, wr, ws))
                }
            }
        };
    }
    let (x, r, s) = worst.expect("grid is nonempty");
    Ok(SymmetryReport {
        symmetric: r / s < tol,
        sup_residual: r,
        scale: s,
        criterion_used: Criterion::DensityGrid,
        worst_x: Some(x),
        drift: None,
        normalized_drift: None,
        confirmation: None,
    })
}

/// `|lhs - rhs|` within a few ulps of the operands.
fn exactly(lhs: f64, rhs: f64, magnitude: f64) -> bool {
    (lhs - rhs).abs() <= 4.0 * f64::EPSILON * magnitude.max(1.0)
}

/// Parameter criterion plus density-grid confirmation.
///
/// Subordinated models are symmetric iff `mu / sigma^2 = -1/2`; CGMY iff
/// `G - M = -1`; Meixner iff `2b + a = 0`.
pub fn classify_symmetry(model: &Model) -> Result<SymmetryReport> {
    classify_symmetry_with(model, &SymmetryOptions::default())
}

pub fn classify_symmetry_with(model: &Model, opts: &SymmetryOptions) -> Result<SymmetryReport> {
    let (symmetric, distance, criterion, drift) = match *model {
        Model::Tcbm(t) => {
            let (mu, s2) = (t.bm.mu, t.bm.sigma * t.bm.sigma);
            let sym = exactly(2.0 * mu, -s2, (2.0 * mu).abs().max(s2));
            (
                sym,
                (t.bm.normalized_drift() + 0.5).abs(),
                Criterion::DriftHalf,
                mu,
            )
        }
        Model::Named(n @ NamedModel::Cgmy { g, m, .. }) => {
            let sym = exactly(g - m, -1.0, g.max(m));
            (
                sym,
                (g - m + 1.0).abs(),
                Criterion::CgmyGm,
                n.madan_yor_drift(),
            )
        }
        Model::Named(n @ NamedModel::Meixner { a, b, .. }) => {
            let sym = exactly(2.0 * b, -a, (2.0 * b).abs().max(a));
            (
                sym,
                (2.0 * b + a).abs(),
                Criterion::Meixner2ba,
                n.madan_yor_drift(),
            )
        }
    };
    let confirmation = symmetry_residual(&levy_density(model), &opts.grid, opts.tol, opts.floor)?;
    Ok(SymmetryReport {
        symmetric,
        sup_residual: distance,
        scale: 1.0,
        criterion_used: criterion,
        worst_x: None,
        drift: Some(drift),
        normalized_drift: Some(tilt(model)),
        confirmation: Some(Box::new(confirmation)),
    })
}

/// Dual-market triplet: `nu~(x) = exp(-x) nu(-x)`, same Gaussian variance,
/// and the drift that makes the dual discounted price a martingale with
/// the rates swapped (riskless `delta`, dividend `r`).
pub fn dual_triplet(triplet: &LevyTriplet1D, r: f64, delta: f64) -> Result<LevyTriplet1D> {
    let nu = triplet.nu.clone();
    let dual_nu = LevyDensity1D::new(move |x| (-x).exp() * nu.eval(-x));
    let undrifted = LevyTriplet1D {
        b: 0.0,
        sigma2: triplet.sigma2,
        nu: dual_nu,
    };
    let gap = pricing::triplet_martingale_gap(&undrifted, delta - r)?;
    Ok(LevyTriplet1D {
        b: -gap,
        ..undrifted
    })
}

/// Outcome of [`complete_monotonicity_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmReport {
    pub passes: bool,
    /// First `(k, u)` where `(-1)^k D^k g(u) < -tol_k`.
    pub first_failure: Option<(usize, f64)>,
    /// Largest relative residual of `nu(x) e^{-theta x} = nu(-x) e^{theta x}`.
    pub condition2_residual: f64,
    pub condition2_holds: bool,
    pub order: usize,
    pub grid_points: usize,
    /// Differences whose magnitude exceeded their tolerance, i.e. where the
    /// sign test was informative.
    pub resolved: usize,
}

#[derive(Debug, Clone)]
pub struct CmOptions {
    /// Relative tolerance for condition 2.
    pub condition2_tol: f64,
    /// Base of `tol_k = base * k! * local scale`.
    pub difference_tol: f64,
    pub density: DensityConfig,
    pub grid: Vec<f64>,
}

impl Default for CmOptions {
    fn default() -> Self {
        Self {
            condition2_tol: 1e-10,
            difference_tol: 1e-8,
            density: DensityConfig {
                tol: QuadTol::new(0.0, 1e-12),
            },
            grid: default_grid(),
        }
    }
}

/// Finite-difference test of the subordination conditions:
/// `nu(x) e^{-theta x} = nu(-x) e^{theta x}` on a symmetric grid, and
/// complete monotonicity of `g(u) = nu(sqrt u) exp(-theta sqrt u)` on
/// `(0, 1)` up to `order`, via forward differences with step `grid_step`.
pub fn complete_monotonicity_check(
    model: &TcbmModel,
    order: usize,
    grid_step: f64,
) -> Result<CmReport> {
    complete_monotonicity_check_with(model, order, grid_step, &CmOptions::default())
}

pub fn complete_monotonicity_check_with(
    model: &TcbmModel,
    order: usize,
    grid_step: f64,
    opts: &CmOptions,
) -> Result<CmReport> {
    if !(1..=8).contains(&order) {
        return Err(Error::Precondition(format!(
            "order must lie in 1..=8, got {order}"
        )));
    }
    if !(grid_step > 0.0 && grid_step < 1.0 / (order as f64 + 1.0)) {
        return Err(Error::Precondition(format!(
            "grid step must lie in (0, 1/(order+1)), got {grid_step}"
        )));
    }
    let theta = model.bm.normalized_drift();

    let cond2: Vec<Result<f64>> = opts
        .grid
        .par_iter()
        .map(|&x| {
            let p = subordinated_levy_density_with(model, x, &opts.density)? * (-theta * x).exp();
            let n = subordinated_levy_density_with(model, -x, &opts.density)? * (theta * x).exp();
            Ok((p - n).abs() / p.max(n))
        })
        .collect();
    let mut condition2_residual: f64 = 0.0;
    for r in cond2 {
        condition2_residual = condition2_residual.max(r?);
    }

    let n = ((1.0 - 1e-12) / grid_step).floor() as usize;
    let values: Vec<Result<(f64, f64)>> = (1..=n)
        .into_par_iter()
        .map(|j| {
            let u = j as f64 * grid_step;
            let x = u.sqrt();
            let (v, e) = mixture(model, x, Kernel::Direct, &opts.density)?;
            // Noise is bounded by the requested tolerance, not the (often far
            // smaller) achieved estimate.
            let e = e
                .max(opts.density.tol.rel * v.abs())
                .max(opts.density.tol.abs);
            let tilt = (-theta * x).exp();
            Ok((v * tilt, e * tilt))
        })
        .collect();
    let mut g = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for v in values {
        let (a, b) = v?;
        g.push(a);
        noise.push(b);
    }

    let mut first_failure = None;
    let mut resolved = 0;
    let mut factorial = 1.0;
    for k in 1..=order {
        factorial *= k as f64;
        let binom: Vec<f64> = (0..=k).map(|j| binomial(k, j)).collect();
        for i in 0..g.len().saturating_sub(k) {
            let stencil = &g[i..=i + k];
            let mut diff = 0.0;
            let mut err = 0.0;
            for (j, &c) in binom.iter().enumerate() {
                let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
                diff += sign * c * stencil[j];
                err += c * noise[i + j];
            }
            let scale = stencil.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let tol = opts.difference_tol * factorial * scale;
            if err > tol {
                return Err(Error::Conditioning {
                    order: k,
                    noise: err,
                    tol,
                });
            }
            let signed = if k % 2 == 0 { diff } else { -diff };
            if signed.abs() > tol {
                resolved += 1;
            }
            if signed < -tol && first_failure.is_none() {
                first_failure = Some((k, (i + 1) as f64 * grid_step));
            }
        }
    }

    let condition2_holds = condition2_residual <= opts.condition2_tol;
    Ok(CmReport {
        passes: first_failure.is_none() && condition2_holds,
        first_failure,
        condition2_residual,
        condition2_holds,
        order,
        grid_points: g.len(),
        resolved,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BrownianDrift, SubordinatorSpec};
    use proptest::prelude::*;
    use statrs::function::gamma::gamma;

    fn stable(mu: f64, sigma: f64, a: f64, alpha: f64) -> TcbmModel {
        TcbmModel::new(
            BrownianDrift::new(mu, sigma),
            SubordinatorSpec::Stable { a, alpha },
        )
    }

    fn tempered(mu: f64, c: f64, lambda: f64, alpha: f64) -> TcbmModel {
        TcbmModel::new(
            BrownianDrift::new(mu, 1.0),
            SubordinatorSpec::TemperedStable { c, lambda, alpha },
        )
    }

    /// Closed form of the mixture for a stable clock and mu = 0:
    /// A (2 pi)^{-1/2} Gamma(alpha + 1/2) (x^2 / (2 sigma^2))^{-(alpha+1/2)} / sigma.
    fn stable_density_oracle(a: f64, alpha: f64, sigma: f64, x: f64) -> f64 {
        let xs = x / sigma;
        a / (2.0 * PI).sqrt() * gamma(alpha + 0.5) * (xs * xs / 2.0).powf(-(alpha + 0.5)) / sigma
    }

    #[test]
    fn far_tail_with_drift_matches_bessel_form() {
        // nu(x) = A (2 pi s^2)^(-1/2) e^{mu x / s^2} 2 (b/a)^(n/2) K_n(2 sqrt(a b)),
        // a = x^2 / 2s^2, b = mu^2 / 2s^2, n = alpha + 1/2; 40-digit reference values.
        let m = TcbmModel::new(
            BrownianDrift::new(-0.2, 1.3),
            SubordinatorSpec::Stable { a: 0.8, alpha: 0.4 },
        );
        for (x, want) in [
            (100.0, 3.582_728_441_446e-14),
            (-1e4, 1.055_856_009_158e-6),
            (-1e8, 2.651_563_276_608e-12),
        ] {
            let got = subordinated_levy_density(&m, x).unwrap();
            assert!((got / want - 1.0).abs() < 1e-9, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn stable_half_density_at_one() {
        let v = subordinated_levy_density(&stable(0.0, 1.0, 1.0, 0.5), 1.0).unwrap();
        assert!((v - (2.0 / PI).sqrt()).abs() < 1e-12, "{v}");
        assert!((v - 0.797_88).abs() < 1e-5);
    }

    #[test]
    fn stable_density_matches_closed_form() {
        for &(a, alpha, sigma) in &[
            (1.0, 0.3, 1.0),
            (0.5, 0.7, 1.0),
            (2.0, 0.5, 0.4),
            (1.0, 0.9, 2.5),
        ] {
            let m = stable(0.0, sigma, a, alpha);
            for x in [-3.0, -0.2, 0.01, 0.5, 4.0, 40.0] {
                let v = subordinated_levy_density(&m, x).unwrap();
                let o = stable_density_oracle(a, alpha, sigma, x);
                assert!(
                    (v - o).abs() < 1e-10 * o,
                    "a={a} alpha={alpha} sigma={sigma} x={x}: {v} vs {o}"
                );
            }
        }
    }

    #[test]
    fn density_is_even_when_driftless_and_positive() {
        let m = tempered(0.0, 1.0, 1.0, 0.5);
        for x in [0.05, 0.3, 1.0, 7.0] {
            let p = subordinated_levy_density(&m, x).unwrap();
            let n = subordinated_levy_density(&m, -x).unwrap();
            assert!(p > 0.0 && n > 0.0);
            assert!((p - n).abs() < 1e-13 * p);
            assert_eq!(even_factor(&m, x).unwrap(), p);
        }
        assert!(subordinated_levy_density(&m, 0.0).is_err());
    }

    #[test]
    fn even_factor_symmetry_and_factorization() {
        let m = tempered(-0.5, 1.0, 1.0, 0.5);
        let f1 = even_factor(&m, 1.0).unwrap();
        let fm1 = even_factor(&m, -1.0).unwrap();
        assert!((f1 - fm1).abs() < 1e-10 * f1);
        let x = 0.7;
        let nu = subordinated_levy_density(&m, x).unwrap();
        let fact = (-0.5 * x).exp() * even_factor(&m, x).unwrap();
        assert!((nu - fact).abs() < 1e-8 * nu);
    }

    #[test]
    fn sigma_scaling_matches_direct_mixture() {
        // Direct mixture with the sigma-general kernel:
        // int (2 pi s^2 y)^{-1/2} exp(-(x - mu y)^2 / (2 s^2 y)) rho(y) dy
        let m = TcbmModel::new(
            BrownianDrift::new(0.3, 0.6),
            SubordinatorSpec::TemperedStable {
                c: 0.8,
                lambda: 1.5,
                alpha: 0.4,
            },
        );
        let (mu, s) = (0.3, 0.6);
        for x in [-1.2, 0.4, 2.0] {
            let g = |t: f64| {
                let y = t.exp();
                let k = (-(x - mu * y).powi(2) / (2.0 * s * s * y)).exp()
                    / (2.0 * PI * s * s * y).sqrt();
                y * k * m.subordinator.levy_density(y)
            };
            let oracle = quad::integrate(&g, -30.0, 8.0, QuadTol::new(1e-14, 1e-13))
                .unwrap()
                .value;
            let v = subordinated_levy_density(&m, x).unwrap();
            assert!((v - oracle).abs() < 1e-9 * oracle, "x={x}: {v} vs {oracle}");
        }
    }

    #[test]
    fn cgmy_symmetry_residual_vanishes() {
        let cgmy = Model::Named(NamedModel::Cgmy {
            c: 1.0,
            g: 2.0,
            m: 3.0,
            y: 0.5,
        });
        let nu = levy_density(&cgmy);
        assert!((nu.eval(1.0) - (-3f64).exp()).abs() < 1e-16);
        let rep = symmetry_residual(&nu, &[1.0], 1e-6, 1e-300).unwrap();
        assert!(rep.relative_residual() < 1e-15);
        assert!(rep.symmetric);
    }

    #[test]
    fn drift_half_symmetry_at_density_level() {
        let grid: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
        let sym = levy_density(&Model::Tcbm(tempered(-0.5, 1.0, 1.0, 0.5)));
        let rep = symmetry_residual(&sym, &grid, 1e-6, 1e-300).unwrap();
        assert!(rep.relative_residual() < 1e-8, "{rep:?}");

        let flat = levy_density(&Model::Tcbm(tempered(0.0, 1.0, 1.0, 0.5)));
        let rep = symmetry_residual(&flat, &[1.0], 1e-6, 1e-300).unwrap();
        assert!(!rep.symmetric);
        assert!(rep.relative_residual() > 0.1);
        // e^0 f(1) vs e^-1 f(1)
        assert!((rep.relative_residual() - (1.0 - (-1f64).exp())).abs() < 1e-8);
    }

    #[test]
    fn residual_is_independent_of_grid_order() {
        let nu = levy_density(&Model::Tcbm(tempered(-0.3, 1.0, 1.0, 0.5)));
        let grid = default_grid();
        let mut shuffled = grid.clone();
        shuffled.reverse();
        shuffled.swap(3, 11);
        let a = symmetry_residual(&nu, &grid, 1e-6, 1e-300).unwrap();
        let b = symmetry_residual(&nu, &shuffled, 1e-6, 1e-300).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn residual_rejects_bad_grids() {
        let nu = levy_density(&Model::Tcbm(tempered(-0.3, 1.0, 1.0, 0.5)));
        assert!(symmetry_residual(&nu, &[], 1e-6, 1e-300).is_err());
        assert!(symmetry_residual(&nu, &[1.0, -2.0], 1e-6, 1e-300).is_err());
        let broken = LevyDensity1D::new(|_| f64::NAN);
        assert!(symmetry_residual(&broken, &[1.0], 1e-6, 1e-300).is_err());
    }

    #[test]
    fn classification_examples() {
        let rep = classify_symmetry(&Model::Tcbm(tempered(-0.5, 1.0, 1.0, 0.5))).unwrap();
        assert!(rep.symmetric);
        assert_eq!(rep.criterion_used, Criterion::DriftHalf);
        assert!(rep.confirmation.as_ref().unwrap().symmetric);

        let cgmy = |g, m| {
            Model::Named(NamedModel::Cgmy {
                c: 1.0,
                g,
                m,
                y: 0.5,
            })
        };
        let rep = classify_symmetry(&cgmy(2.0, 3.0)).unwrap();
        assert!(rep.symmetric);
        assert_eq!(rep.criterion_used, Criterion::CgmyGm);
        assert!(!classify_symmetry(&cgmy(3.0, 3.0)).unwrap().symmetric);

        let mx = Model::Named(NamedModel::Meixner {
            a: 2.0,
            b: -1.0,
            d: 1.0,
        });
        let rep = classify_symmetry(&mx).unwrap();
        assert!(rep.symmetric);
        assert_eq!(rep.criterion_used, Criterion::Meixner2ba);
        assert!(rep.confirmation.unwrap().relative_residual() < 1e-12);
    }

    #[test]
    fn sigma_general_criterion_uses_tilt() {
        // mu = -sigma^2 / 2 is symmetric; mu = -1/2 with sigma != 1 is not.
        let sym = TcbmModel::new(
            BrownianDrift::new(-0.125, 0.5),
            SubordinatorSpec::Stable { a: 1.0, alpha: 0.5 },
        );
        let rep = classify_symmetry(&Model::Tcbm(sym)).unwrap();
        assert!(rep.symmetric);
        assert!(rep.confirmation.unwrap().symmetric);
        let off = TcbmModel::new(
            BrownianDrift::new(-0.5, 0.5),
            SubordinatorSpec::Stable { a: 1.0, alpha: 0.5 },
        );
        let rep = classify_symmetry(&Model::Tcbm(off)).unwrap();
        assert!(!rep.symmetric);
        assert!(!rep.confirmation.unwrap().symmetric);
        assert_eq!(rep.drift, Some(-0.5));
        assert_eq!(rep.normalized_drift, Some(-2.0));
    }

    #[test]
    fn gamma_does_not_change_classification() {
        let m = tempered(-0.5, 1.0, 1.0, 0.5);
        let a = classify_symmetry(&Model::Tcbm(m)).unwrap();
        let b = classify_symmetry(&Model::Tcbm(m.with_gamma(0.37))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn named_triplet_drifts() {
        let cgmy = NamedModel::Cgmy {
            c: 1.0,
            g: 2.0,
            m: 3.0,
            y: 0.5,
        };
        // int_0^1 x^{-1/2} (e^{-3x} - e^{-2x}) dx via the incomplete gamma
        let t = named_levy_triplet(&cgmy).unwrap();
        let g = |t: f64| {
            let x = t * t;
            2.0 * ((-3.0 * x).exp() - (-2.0 * x).exp())
        };
        let oracle = quad::integrate(&g, 0.0, 1.0, QuadTol::new(1e-15, 1e-14))
            .unwrap()
            .value;
        assert!((t.b - oracle).abs() < 1e-12);
        assert_eq!(t.sigma2, 0.0);
    }

    #[test]
    fn symmetric_dual_reproduces_density() {
        let model = Model::Named(NamedModel::Cgmy {
            c: 1.0,
            g: 2.0,
            m: 3.0,
            y: 0.5,
        });
        let Model::Named(n) = model else {
            unreachable!()
        };
        let t = named_levy_triplet(&n).unwrap();
        let d = dual_triplet(&t, 0.05, 0.02).unwrap();
        for x in default_grid() {
            for s in [x, -x] {
                let a = t.nu.eval(s);
                let b = d.nu.eval(s);
                assert!((a - b).abs() < 1e-12 * a);
            }
        }
    }

    #[test]
    fn dual_is_an_involution_on_densities() {
        let t = tcbm_levy_triplet(&tempered(-0.2, 1.0, 1.0, 0.5)).unwrap();
        let dd = dual_triplet(&dual_triplet(&t, 0.03, 0.01).unwrap(), 0.01, 0.03).unwrap();
        for x in [-2.0, -0.3, 0.1, 1.5] {
            let a = t.nu.eval(x);
            let b = dd.nu.eval(x);
            assert!((a - b).abs() < 2e-12 * a);
        }
    }

    #[test]
    fn cm_stable_closed_form_case_passes() {
        let m = stable(0.0, 1.0, 1.0, 0.5);
        let rep = complete_monotonicity_check(&m, 6, 1e-3).unwrap();
        assert!(rep.passes, "{rep:?}");
        assert!(rep.resolved > 0);
        assert!(rep.condition2_residual < 1e-12);
    }

    #[test]
    fn cm_rejects_out_of_range_order() {
        let m = stable(0.0, 1.0, 1.0, 0.5);
        assert!(complete_monotonicity_check(&m, 0, 1e-3).is_err());
        assert!(complete_monotonicity_check(&m, 9, 1e-3).is_err());
        assert!(complete_monotonicity_check(&m, 2, 0.5).is_err());
    }

    #[test]
    fn cm_reports_conditioning_failure() {
        let m = tempered(-0.5, 1.0, 1.0, 0.5);
        let opts = CmOptions {
            density: DensityConfig {
                tol: QuadTol::new(0.0, 1e-6),
            },
            ..CmOptions::default()
        };
        // A loose density tolerance lets quadrature noise swamp the differences.
        match complete_monotonicity_check_with(&m, 8, 1e-3, &opts) {
            Err(Error::Conditioning { .. }) => {}
            other => panic!("expected conditioning failure, got {other:?}"),
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 3), 20.0);
        assert_eq!(binomial(8, 0), 1.0);
        assert_eq!(binomial(8, 8), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn factorization_and_evenness(
            mu in -1.5f64..1.0,
            sigma in 0.3f64..2.0,
            lambda in 0.2f64..3.0,
            alpha in 0.1f64..0.9,
            x in 0.05f64..4.0,
        ) {
            let m = TcbmModel::new(
                BrownianDrift::new(mu, sigma),
                SubordinatorSpec::TemperedStable { c: 1.0, lambda, alpha },
            );
            let theta = m.bm.normalized_drift();
            let f_pos = even_factor(&m, x).unwrap();
            let f_neg = even_factor(&m, -x).unwrap();
            prop_assert!((f_pos - f_neg).abs() <= 1e-12 * f_pos);
            for y in [x, -x] {
                let nu = subordinated_levy_density(&m, y).unwrap();
                let want = (theta * y).exp() * f_pos;
                prop_assert!((nu - want).abs() <= 1e-7 * want, "x={} {} vs {}", y, nu, want);
            }
        }

        #[test]
        fn symmetric_exactly_at_half_tilt(sigma in 0.2f64..3.0, mu in -2.0f64..1.0, alpha in 0.1f64..0.9) {
            let sub = SubordinatorSpec::Stable { a: 1.0, alpha };
            let sym = TcbmModel::new(BrownianDrift::new(-0.5 * sigma * sigma, sigma), sub);
            prop_assert!(classify_symmetry(&Model::Tcbm(sym)).unwrap().symmetric);
            let other = TcbmModel::new(BrownianDrift::new(mu, sigma), sub);
            let expected = mu == -0.5 * sigma * sigma;
            prop_assert_eq!(classify_symmetry(&Model::Tcbm(other)).unwrap().symmetric, expected);
        }

        #[test]
        fn residual_is_a_function_of_the_point_set(mut grid in prop::collection::vec(0.05f64..5.0, 1..12), seed in any::<u64>()) {
            let nu = named_levy_density_fn();
            let a = symmetry_residual(&nu, &grid, 1e-6, 1e-300).unwrap();
            let k = (seed as usize) % grid.len();
            grid.rotate_left(k);
            grid.reverse();
            let b = symmetry_residual(&nu, &grid, 1e-6, 1e-300).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    fn named_levy_density_fn() -> LevyDensity1D {
        levy_density(&Model::Named(NamedModel::Cgmy {
            c: 1.0,
            g: 2.5,
            m: 3.0,
            y: 0.5,
        }))
    }
}
