//! Characteristic and Laplace exponents.
//!
//! All exponents are per unit time: `E exp(i z Y_t) = exp(t * psi(z))` and
//! `E exp(w T_t) = exp(t * l(w))`. Complex powers and logarithms use the
//! principal branch.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::density::LevyDensity1D;
use crate::error::{Error, Result, ValidationReport};
use crate::models::{BrownianDrift, Model, NamedModel, SubordinatorSpec, TcbmModel};
use crate::quad::{self, QuadTol};

pub type ComplexScalar = Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// `i mu z - sigma^2 z^2 / 2`.
pub fn bm_char_exponent(bm: &BrownianDrift, z: Complex64) -> Complex64 {
    I * bm.mu * z - 0.5 * bm.sigma * bm.sigma * z * z
}

/// Laplace exponent `l(w)` of the clock, `E exp(w T_t) = exp(t l(w))`.
///
/// The stable family is defined for `Re w <= 0`; the tempered family for
/// `Re w < lambda`.
pub fn laplace_exponent(sub: &SubordinatorSpec, w: Complex64) -> Result<Complex64> {
    if w == Complex64::new(0.0, 0.0) {
        return Ok(w);
    }
    match *sub {
        SubordinatorSpec::Stable { a, alpha } => {
            if !(w.re <= 0.0) {
                return Err(Error::Domain(format!(
                    "stable Laplace exponent needs Re(w) <= 0, got w = {w}"
                )));
            }
            let k = a * gamma(1.0 - alpha) / alpha;
            Ok(-k * (-w).powf(alpha))
        }
        SubordinatorSpec::TemperedStable { c, lambda, alpha } => {
            if !(w.re < lambda) {
                return Err(Error::Domain(format!(
                    "tempered-stable Laplace exponent needs Re(w) < lambda = {lambda}, got w = {w}"
                )));
            }
            Ok(c * gamma(-alpha) * ((lambda - w).powf(alpha) - lambda.powf(alpha)))
        }
    }
}

/// Characteristic exponent of `Y_t = gamma t + mu T_t + sigma W(T_t)`.
pub fn tcbm_char_exponent(model: &TcbmModel, z: Complex64) -> Result<Complex64> {
    let inner = bm_char_exponent(&model.bm, z);
    Ok(I * model.gamma * z + laplace_exponent(&model.subordinator, inner)?)
}

/// Closed-form exponents of the CGMY (`0 < Y < 1`) and Meixner models.
pub fn named_char_exponent(named: &NamedModel, z: Complex64) -> Result<Complex64> {
    if z == Complex64::new(0.0, 0.0) {
        return Ok(z);
    }
    match *named {
        NamedModel::Cgmy { c, g, m, y } => {
            // E exp(i z X) is finite for -M < Im z < G.
            if !(z.im > -m && z.im < g) {
                return Err(Error::Domain(format!(
                    "CGMY exponent needs -M < Im(z) < G, got Im(z) = {}",
                    z.im
                )));
            }
            let pos = (m - I * z).powf(y) - m.powf(y);
            let neg = (g + I * z).powf(y) - g.powf(y);
            Ok(c * gamma(-y) * (pos + neg))
        }
        NamedModel::Meixner { a, b, d } => {
            let lo = (b - PI) / a;
            let hi = (b + PI) / a;
            if !(z.im > lo && z.im < hi) {
                return Err(Error::Domain(format!(
                    "Meixner exponent needs {lo} < Im(z) < {hi}, got Im(z) = {}",
                    z.im
                )));
            }
            let w = (a * z - I * b) / 2.0;
            Ok(2.0 * d * ((b / 2.0).cos().ln() - ln_cosh(w)))
        }
    }
}

/// Exponent of any accepted model.
pub fn model_char_exponent(model: &Model, z: Complex64) -> Result<Complex64> {
    match model {
        Model::Tcbm(t) => tcbm_char_exponent(t, z),
        Model::Named(n) => named_char_exponent(n, z),
    }
}

/// Principal `ln cosh w` for `|Im w| < pi/2`, without overflow for large `|Re w|`.
fn ln_cosh(w: Complex64) -> Complex64 {
    let s = if w.re >= 0.0 { w } else { -w };
    s + (1.0 + (-2.0 * s).exp()).ln() - std::f64::consts::LN_2
}

/// `exp(w) - 1 - w` without cancellation for small `|w|`.
pub(crate) fn expm1_minus_linear(w: Complex64) -> Complex64 {
    if w.norm() < 0.1 {
        // Horner on w^2 (1/2 + w/6 + w^2/24 + ...)
        let mut term = Complex64::new(1.0 / 3_628_800.0, 0.0);
        for k in (2..=9).rev() {
            let fact: f64 = (1..=k).map(|j| j as f64).product();
            term = term * w + 1.0 / fact;
        }
        term * w * w
    } else {
        w.exp() - 1.0 - w
    }
}

/// Levy triplet in one dimension, truncation function `1{|y| <= 1}`.
#[derive(Debug, Clone)]
pub struct LevyTriplet1D {
    pub b: f64,
    pub sigma2: f64,
    pub nu: LevyDensity1D,
}

impl LevyTriplet1D {
    pub fn new(b: f64, sigma2: f64, nu: LevyDensity1D) -> Result<Self, ValidationReport> {
        let mut report = ValidationReport::default();
        if !b.is_finite() {
            report.push("b", "must be finite", b);
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            report.push("sigma2", "must be nonnegative and finite", sigma2);
        }
        if !nu.is_levy_measure() {
            report.push(
                "nu",
                "integral of (x^2 ^ 1) nu(x) is not finite or nu is negative",
                f64::NAN,
            );
        }
        report.into_result(Self { b, sigma2, nu })
    }

    /// Triplet with `nu = 0`.
    pub fn gaussian(b: f64, sigma2: f64) -> Self {
        Self {
            b,
            sigma2,
            nu: LevyDensity1D::new(|_| 0.0),
        }
    }
}

/// Options for [`levy_khintchine_exponent`].
#[derive(Debug, Clone, Copy)]
pub struct LkOptions {
    /// Absolute tolerance on the returned exponent.
    pub abs_tol: f64,
    /// Bound on the discarded small-jump mass `int_0^eps y^2 nu(y) dy`.
    pub small_jump_mass: f64,
}

impl Default for LkOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            small_jump_mass: 1e-10,
        }
    }
}

/// Levy-Khintchine exponent by adaptive quadrature:
///
/// ```text
/// i b z - sigma2 z^2 / 2 + int (exp(i z y) - 1 - i z y 1{|y|<=1}) nu(y) dy
/// ```
///
/// The jump integral is split at `y = -1, 0, 1`. Near zero it runs in
/// `log |y|` down to a cutoff `eps` whose remaining `y^2`-mass is folded in
/// by the second-order expansion; the oscillatory tail beyond a finite `Y`
/// is closed by two integration-by-parts terms.
pub fn levy_khintchine_exponent(
    triplet: &LevyTriplet1D,
    z: Complex64,
    opts: &LkOptions,
) -> Result<Complex64> {
    if z == Complex64::new(0.0, 0.0) {
        return Ok(z);
    }
    let nu = &triplet.nu;
    let tol = opts.abs_tol / 2.0;
    let pos = one_sided_jump_integral(&|y| nu.eval(y), z, tol, opts.small_jump_mass)?;
    let neg = one_sided_jump_integral(&|y| nu.eval(-y), -z, tol, opts.small_jump_mass)?;
    Ok(I * triplet.b * z - 0.5 * triplet.sigma2 * z * z + pos + neg)
}

/// Picks the small-jump cutoff and returns `(eps, int_0^eps y^2 nu)`.
fn small_jump_cutoff(nu: &dyn Fn(f64) -> f64, mass: f64) -> (f64, f64) {
    let m2 = |eps: f64| {
        let v = nu(eps);
        if v <= 0.0 {
            return 0.0;
        }
        let half = nu(eps / 2.0);
        // Local power law nu ~ y^-p.
        let p = if half > 0.0 {
            (half / v).ln() / std::f64::consts::LN_2
        } else {
            0.0
        };
        let p = p.clamp(-10.0, 2.95);
        eps.powi(3) * v / (3.0 - p)
    };
    let mut eps: f64 = 1e-3;
    let mut est = m2(eps);
    while est > mass && eps > 1e-14 {
        eps /= 10.0;
        est = m2(eps);
    }
    (eps, est)
}

fn one_sided_jump_integral(
    nu: &(dyn Fn(f64) -> f64 + Sync),
    z: Complex64,
    tol: f64,
    small_mass: f64,
) -> Result<Complex64> {
    let (eps, m2) = small_jump_cutoff(nu, small_mass);
    let near = -0.5 * z * z * m2;
    let piece_tol = QuadTol {
        abs: tol / 4.0,
        rel: 1e-13,
        max_panels: 20_000,
    };

    // [eps, 1] in t = ln y.
    let small = |t: f64| {
        let y = t.exp();
        let v = nu(y);
        if v == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        expm1_minus_linear(I * z * y) * (v * y)
    };
    let mut breaks = Vec::new();
    let omega = z.re.abs();
    let periods = (omega / (2.0 * PI)).floor() as usize;
    for k in 1..=periods.min(5000) {
        breaks.push((2.0 * PI * k as f64 / omega).ln());
    }
    let inner = quad::integrate_with_breaks(&small, eps.ln(), 0.0, &breaks, piece_tol)?;

    let tail = tail_integral(nu, z, tol / 2.0)?;
    Ok(near + inner.value + tail)
}

/// `int_1^inf (exp(i z y) - 1) nu(y) dy`.
fn tail_integral(nu: &(dyn Fn(f64) -> f64 + Sync), z: Complex64, tol: f64) -> Result<Complex64> {
    let omega = z.re;
    let damp = z.im;
    let h = |y: f64| (-damp * y).exp() * nu(y);

    if omega.abs() < 1e-12 {
        // Non-oscillatory: a single log-space integral of (h - nu).
        let g = |y: f64| h(y) - nu(y);
        return Ok(Complex64::new(
            log_space_tail(&g, tol, "exponentially weighted Levy tail")?,
            0.0,
        ));
    }

    let plain = log_space_tail(nu, tol / 2.0, "Levy tail mass")?;

    // Oscillatory part on [1, Y] plus the integration-by-parts remainder.
    let period = 2.0 * PI / omega.abs();
    let mut upper = 1.0 + 4.0 * period;
    let tail_ok = |y: f64| {
        let s = (0.02 * y).min(0.5);
        let h0 = h(y);
        let d2 = (h(y + s) - 2.0 * h0 + h(y - s)) / (s * s);
        h0.is_finite() && d2.is_finite() && d2.abs() / omega.abs().powi(3) < tol / 20.0
    };
    while !tail_ok(upper) {
        upper *= 2.0;
        if (upper - 1.0) / period > 200_000.0 || upper > 1e9 {
            return Err(Error::Quadrature {
                what: format!(
                    "oscillatory Levy tail does not decay fast enough at frequency {omega}"
                ),
                estimate: h(upper).abs() / omega.abs(),
                requested: tol,
            });
        }
    }
    let f = |y: f64| Complex64::new(0.0, omega * y).exp() * h(y);
    let n_periods = ((upper - 1.0) / period).floor() as usize;
    let breaks: Vec<f64> = (1..=n_periods).map(|k| 1.0 + k as f64 * period).collect();
    let osc = quad::integrate_with_breaks(
        &f,
        1.0,
        upper,
        &breaks,
        QuadTol {
            abs: tol / 2.0,
            rel: 1e-13,
            max_panels: breaks.len() + 20_000,
        },
    )?;
    let s = (0.01 * upper).min(0.25);
    let h0 = h(upper);
    let h1 = (h(upper + s) - h(upper - s)) / (2.0 * s);
    let remainder =
        Complex64::new(0.0, omega * upper).exp() * (I * h0 / omega - h1 / (omega * omega));
    Ok(osc.value + remainder - plain)
}

/// `int_1^inf g(y) dy` in `t = ln y`, for nonoscillatory decaying `g`.
fn log_space_tail(g: &(dyn Fn(f64) -> f64 + Sync), tol: f64, what: &str) -> Result<f64> {
    let weighted = |t: f64| {
        let y = t.exp();
        y * g(y)
    };
    const T_MAX: f64 = 40.0;
    let mut upper: f64 = 2.0;
    let mut remainder = 0.0;
    while weighted(upper).abs() > tol * 1e-3 {
        upper += 2.0;
        if upper >= T_MAX {
            // Power-law tail: y g(y) ~ exp(s t) beyond T_MAX, closed analytically.
            let (w0, w1) = (weighted(T_MAX - 4.0), weighted(T_MAX));
            let slope = if w0 != 0.0 && w0.signum() == w1.signum() {
                (w1 / w0).ln() / 4.0
            } else {
                0.0
            };
            if !(slope < -0.05) {
                return Err(Error::NoExponentialMoment(format!(
                    "{what} does not decay: y g(y) = {w1:e} at y = {:e}",
                    T_MAX.exp()
                )));
            }
            remainder = -w1 / slope;
            upper = T_MAX;
            break;
        }
    }
    let r = quad::integrate(
        &weighted,
        0.0,
        upper,
        QuadTol {
            abs: tol / 2.0,
            rel: 1e-13,
            max_panels: 20_000,
        },
    )?;
    Ok(r.value + remainder)
}

/// Settings for [`LevyKhintchineRule`].
#[derive(Debug, Clone, Copy)]
pub struct RuleConfig {
    /// Panel width in `ln |y|` on the small-jump region `[eps, 1]`.
    pub log_panel: f64,
    /// Panel width in `|y|` on the tail.
    pub tail_panel: f64,
    /// Tail truncation threshold on `exp(g y) nu(y) y`.
    pub tail_cut: f64,
    /// Largest exponential growth rate `g` of `|exp(i z y)|` on `y > 0`
    /// the rule must support (`-Im z <= g`).
    pub growth_pos: f64,
    /// Same for `y < 0` (`Im z <= g`).
    pub growth_neg: f64,
    pub small_jump_mass: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            log_panel: 0.2,
            tail_panel: 0.25,
            tail_cut: 1e-15,
            growth_pos: 1.0,
            growth_neg: 0.0,
            small_jump_mass: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
struct RuleSide {
    y: Vec<f64>,
    wnu: Vec<f64>,
    small_mass: f64,
    far_mass: f64,
}

/// Fixed composite-Kronrod discretization of the Levy-Khintchine integral.
///
/// The density is evaluated once at build time; each exponent evaluation is
/// then a weighted sum, which makes frequency sweeps (Fourier pricing) cheap.
#[derive(Debug, Clone)]
pub struct LevyKhintchineRule {
    b: f64,
    sigma2: f64,
    pos: RuleSide,
    neg: RuleSide,
    max_frequency: f64,
}

impl LevyKhintchineRule {
    pub fn build(triplet: &LevyTriplet1D, cfg: &RuleConfig) -> Result<Self> {
        let nu = &triplet.nu;
        let (pos, fp) = Self::side(&|y| nu.eval(y), cfg.growth_pos, cfg)?;
        let (neg, fn_) = Self::side(&|y| nu.eval(-y), cfg.growth_neg, cfg)?;
        Ok(Self {
            b: triplet.b,
            sigma2: triplet.sigma2,
            pos,
            neg,
            max_frequency: fp.min(fn_),
        })
    }

    fn side(
        nu: &(dyn Fn(f64) -> f64 + Sync),
        growth: f64,
        cfg: &RuleConfig,
    ) -> Result<(RuleSide, f64)> {
        const LINEAR_CAP: f64 = 200.0;
        const FAR_CAP: f64 = 1e8;
        // Half-phase per panel kept below 5 radians.
        const PHASE: f64 = 10.0;

        let (eps, small_mass) = small_jump_cutoff(nu, cfg.small_jump_mass);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();

        let n_log = ((-eps.ln()) / cfg.log_panel).ceil().max(1.0) as usize;
        let mut t_nodes = Vec::new();
        let mut t_weights = Vec::new();
        quad::composite_rule(eps.ln(), 0.0, n_log, &mut t_nodes, &mut t_weights);
        for (t, w) in t_nodes.into_iter().zip(t_weights) {
            let y = t.exp();
            nodes.push(y);
            weights.push(w * y);
        }
        let log_width = (-eps.ln()) / n_log as f64;
        let mut max_freq = PHASE / log_width.exp_m1();

        let weighted = |y: f64| (growth * y).exp() * nu(y) * y;
        let mut upper: f64 = 2.0;
        while weighted(upper) > cfg.tail_cut && upper < FAR_CAP {
            upper *= 2.0;
        }
        // Shrink back to the first point below the cut on a finer scan.
        let mut lo = upper / 2.0;
        while lo > 1.0 && weighted(lo) <= cfg.tail_cut {
            lo /= 1.25;
        }
        let upper = (lo * 1.25).max(1.5).min(upper);
        let linear_end = upper.min(LINEAR_CAP);
        let n_lin = ((linear_end - 1.0) / cfg.tail_panel).ceil().max(1.0) as usize;
        quad::composite_rule(1.0, linear_end, n_lin, &mut nodes, &mut weights);
        max_freq = max_freq.min(PHASE / ((linear_end - 1.0) / n_lin as f64));

        let mut far_mass = 0.0;
        if upper > linear_end {
            let (a, b) = (linear_end.ln(), upper.ln());
            let n_far = ((b - a) / 0.02).ceil() as usize;
            let mut t_nodes = Vec::new();
            let mut t_weights = Vec::new();
            quad::composite_rule(a, b, n_far, &mut t_nodes, &mut t_weights);
            for (t, w) in t_nodes.into_iter().zip(t_weights) {
                let y = t.exp();
                nodes.push(y);
                weights.push(w * y);
            }
            max_freq = max_freq.min(PHASE / (upper * ((b - a) / n_far as f64).exp_m1()));
            if upper >= FAR_CAP {
                // Power-law remainder of the plain mass; its oscillatory part is
                // below nu(Y) / |z| and dropped.
                let v = nu(upper);
                let p = (nu(upper / 2.0) / v).ln() / std::f64::consts::LN_2;
                if !(p > 1.0) {
                    return Err(Error::NoExponentialMoment(format!(
                        "Levy density tail is not integrable (local power {p})"
                    )));
                }
                far_mass = upper * v / (p - 1.0);
            }
        }

        let values: Vec<f64> = nodes.par_iter().map(|&y| nu(y)).collect();
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Quadrature {
                what: format!("Levy density returned {bad} on the rule nodes"),
                estimate: f64::INFINITY,
                requested: 0.0,
            });
        }
        let wnu = weights.iter().zip(&values).map(|(w, v)| w * v).collect();
        Ok((
            RuleSide {
                y: nodes,
                wnu,
                small_mass,
                far_mass,
            },
            max_freq,
        ))
    }

    /// Largest `|Re z|` the panels resolve.
    pub fn max_frequency(&self) -> f64 {
        self.max_frequency
    }

    pub fn exponent(&self, z: Complex64) -> Complex64 {
        let mut acc = I * self.b * z - 0.5 * self.sigma2 * z * z;
        for (side, zs) in [(&self.pos, z), (&self.neg, -z)] {
            let mut s = Complex64::new(0.0, 0.0);
            for (&y, &wnu) in side.y.iter().zip(&side.wnu) {
                let w = I * zs * y;
                let term = if y <= 1.0 {
                    expm1_minus_linear(w)
                } else {
                    w.exp() - 1.0
                };
                s += term * wnu;
            }
            acc += s - 0.5 * zs * zs * side.small_mass - side.far_mass;
        }
        acc
    }
}
