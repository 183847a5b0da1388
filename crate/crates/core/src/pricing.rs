//! Martingale calibration and European pricing by damped Fourier inversion.
//!
//! Prices go through `E[min(S_T, K)]`, whose log-price transform
//!
//! ```text
//! int exp(i w s) min(e^s, K) ds = K^(1 + i w) / (w^2 - i w),   0 < Im w < 1
//! ```
//!
//! needs only the moment `E S_T^a` on the damping line `Im w = a`. Calls and
//! puts follow as `S0 e^{(psi(-i) - r) T} - e^{-rT} E[min]` and
//! `K e^{-rT} - e^{-rT} E[min]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfn::{
    laplace_exponent, levy_khintchine_exponent, tcbm_char_exponent, LevyKhintchineRule,
    LevyTriplet1D, LkOptions, RuleConfig,
};
use crate::density::{classify_symmetry, dual_triplet, tcbm_levy_triplet};
use crate::error::{Error, Result, ValidationReport};
use crate::models::{MarketSpec, Model, SubordinatorSpec, TcbmModel};

/// Gap below which a model counts as calibrated.
pub const CALIBRATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    pub strike: f64,
    pub maturity: f64,
    pub kind: OptionKind,
}

impl OptionSpec {
    pub fn call(strike: f64, maturity: f64) -> Self {
        Self {
            strike,
            maturity,
            kind: OptionKind::Call,
        }
    }

    pub fn put(strike: f64, maturity: f64) -> Self {
        Self {
            strike,
            maturity,
            kind: OptionKind::Put,
        }
    }

    pub fn validate(self) -> Result<Self, ValidationReport> {
        let mut report = ValidationReport::default();
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            report.push("strike", "must be positive and finite", self.strike);
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            report.push("maturity", "must be positive and finite", self.maturity);
        }
        report.into_result(self)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PricingConfig {
    /// Preferred damping `a` in `Im w = a`; shrunk into the moment strip.
    pub damping: f64,
    /// Simpson intervals on `[0, cutoff]` (even).
    pub n_points: usize,
    /// Cutoff where `|exp(T psi)|` (or the whole tail bound) drops below this.
    pub cutoff_tol: f64,
    pub max_cutoff: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            damping: 0.75,
            n_points: 1 << 12,
            cutoff_tol: 1e-12,
            max_cutoff: 1e4,
        }
    }
}

/// `gamma + l(mu + sigma^2 / 2) - (r - delta)`: zero iff the discounted,
/// reinvested price `e^{-(r - delta) t} S_t` is a martingale.
pub fn martingale_gap(model: &TcbmModel, market: &MarketSpec) -> Result<f64> {
    Ok(model.gamma + cumulant_at_one(model)? - market.carry())
}

/// `l(mu + sigma^2 / 2)`, the clock part of `log E e^{Y_1}`.
fn cumulant_at_one(model: &TcbmModel) -> Result<f64> {
    let w = model.bm.mu + 0.5 * model.bm.sigma * model.bm.sigma;
    laplace_exponent(&model.subordinator, Complex64::new(w, 0.0))
        .map(|v| v.re)
        .map_err(|_| {
            Error::NoExponentialMoment(format!(
                "E exp(Y_1) is infinite: mu + sigma^2/2 = {w} lies outside the clock's Laplace domain"
            ))
        })
}

/// Sets `gamma` so that the martingale gap vanishes. `mu`, `sigma` and the
/// clock are unchanged.
pub fn calibrate_drift(model: &TcbmModel, market: &MarketSpec) -> Result<TcbmModel> {
    let gamma = market.carry() - cumulant_at_one(model)?;
    Ok(model.with_gamma(gamma))
}

/// `Re psi(-i) - carry` for a triplet, with `psi` by Levy-Khintchine quadrature.
pub fn triplet_martingale_gap(triplet: &LevyTriplet1D, carry: f64) -> Result<f64> {
    let opts = LkOptions {
        abs_tol: 1e-11,
        ..LkOptions::default()
    };
    let v = levy_khintchine_exponent(triplet, Complex64::new(0.0, -1.0), &opts)?;
    Ok(v.re - carry)
}

/// Largest `p` with `E S_T^p < inf` for a subordinated model.
pub fn moment_bound(model: &TcbmModel) -> f64 {
    let (mu, s2) = (model.bm.mu, model.bm.sigma * model.bm.sigma);
    match model.subordinator {
        // mu p + s2 p^2 / 2 <= 0
        SubordinatorSpec::Stable { .. } => (-2.0 * mu / s2).max(0.0),
        // mu p + s2 p^2 / 2 < lambda
        SubordinatorSpec::TemperedStable { lambda, .. } => {
            (-mu + (mu * mu + 2.0 * s2 * lambda).sqrt()) / s2
        }
    }
}

fn damping_in_strip(preferred: f64, moment: f64) -> Result<f64> {
    let upper = moment.min(1.0);
    if !(upper > 0.0) {
        return Err(Error::Strip(format!(
            "no damping line: the price has no positive moment (bound {moment})"
        )));
    }
    if preferred > 0.0 && preferred < upper {
        Ok(preferred)
    } else {
        Ok(0.5 * upper)
    }
}

/// Prices a European option from a characteristic exponent of `Y`
/// (`S_T = spot e^{Y_T}`), integrating on the line `Im w = damping`.
#[allow(clippy::too_many_arguments)]
pub fn price_from_exponent(
    exponent: &(dyn Fn(Complex64) -> Result<Complex64> + Sync),
    spot: f64,
    r: f64,
    opt: &OptionSpec,
    damping: f64,
    max_frequency: f64,
    cfg: &PricingConfig,
) -> Result<f64> {
    let t = opt.maturity;
    let (s0, k) = (spot.ln(), opt.strike.ln());
    let a = damping;
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Strip(format!("damping {a} outside (0, 1)")));
    }
    let prefactor = ((1.0 - a) * k + a * s0).exp();
    let integrand = |u: f64| -> Result<(f64, f64)> {
        let w = Complex64::new(u, a);
        let psi = exponent(-w)?;
        let cf = (psi * t).exp();
        let phase = Complex64::new(0.0, u * (k - s0)).exp();
        let v = prefactor * phase * cf / (w * w - Complex64::new(0.0, 1.0) * w);
        Ok((v.re, cf.norm()))
    };

    let scale = opt.strike.max(spot);
    let mut cutoff: f64 = 1.0;
    loop {
        let (v, cf) = integrand(cutoff)?;
        if cf < cfg.cutoff_tol || (v.abs() * cutoff) < cfg.cutoff_tol * scale {
            break;
        }
        cutoff *= 2.0;
        if cutoff > cfg.max_cutoff {
            return Err(Error::Truncation(format!(
                "characteristic function still {cf:e} at frequency {cutoff}"
            )));
        }
    }
    if cutoff > max_frequency {
        return Err(Error::Truncation(format!(
            "cutoff frequency {cutoff} exceeds the exponent's resolved range {max_frequency}"
        )));
    }

    let n = cfg.n_points + cfg.n_points % 2;
    let h = cutoff / n as f64;
    let values: Vec<Result<f64>> = (0..=n)
        .into_par_iter()
        .map(|j| integrand(j as f64 * h).map(|v| v.0))
        .collect();
    let mut sum = 0.0;
    for (j, v) in values.into_iter().enumerate() {
        let w = if j == 0 || j == n {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * v?;
    }
    let expected_min = sum * h / 3.0 / PI;

    let discount = (-r * t).exp();
    let forward_leg = spot * ((exponent(Complex64::new(0.0, -1.0))?.re - r) * t).exp();
    Ok(match opt.kind {
        OptionKind::Call => forward_leg - discount * expected_min,
        OptionKind::Put => opt.strike * discount - discount * expected_min,
    })
}

/// European price under a calibrated subordinated model.
pub fn price_european(model: &TcbmModel, market: &MarketSpec, opt: &OptionSpec) -> Result<f64> {
    price_european_with(model, market, opt, &PricingConfig::default())
}

pub fn price_european_with(
    model: &TcbmModel,
    market: &MarketSpec,
    opt: &OptionSpec,
    cfg: &PricingConfig,
) -> Result<f64> {
    let gap = martingale_gap(model, market)?;
    if gap.abs() >= CALIBRATION_TOL {
        return Err(Error::Precondition(format!(
            "model is not calibrated to the market (martingale gap {gap:e}); calibrate the drift first"
        )));
    }
    let a = damping_in_strip(cfg.damping, moment_bound(model))?;
    let m = *model;
    let exponent = move |z: Complex64| tcbm_char_exponent(&m, z);
    price_from_exponent(&exponent, market.spot, market.r, opt, a, f64::INFINITY, cfg)
}

/// European price under a triplet with exponent from a fixed
/// Levy-Khintchine rule. The triplet must have `E e^{Y_1} < inf`.
pub fn price_triplet(
    triplet: &LevyTriplet1D,
    spot: f64,
    r: f64,
    delta: f64,
    opt: &OptionSpec,
    cfg: &PricingConfig,
) -> Result<f64> {
    let rule = LevyKhintchineRule::build(triplet, &RuleConfig::default())?;
    let gap = rule.exponent(Complex64::new(0.0, -1.0)).re - (r - delta);
    if gap.abs() >= 1e-8 {
        return Err(Error::Precondition(format!(
            "triplet is not calibrated to rates r = {r}, delta = {delta} (martingale gap {gap:e})"
        )));
    }
    let a = damping_in_strip(cfg.damping, 1.0)?;
    let exponent = |z: Complex64| Ok(rule.exponent(z));
    price_from_exponent(&exponent, spot, r, opt, a, rule.max_frequency(), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub primal: f64,
    pub dual: f64,
    pub residual: f64,
}

/// Prices `call(S0, K, r, delta)` in the primal market and
/// `put(K, S0, delta, r)` on the dual triplet (or put/call swapped) and
/// returns both with their absolute difference.
pub fn duality_check(
    model: &TcbmModel,
    market: &MarketSpec,
    opt: &OptionSpec,
) -> Result<DualityReport> {
    duality_check_with(model, market, opt, &PricingConfig::default())
}

pub fn duality_check_with(
    model: &TcbmModel,
    market: &MarketSpec,
    opt: &OptionSpec,
    cfg: &PricingConfig,
) -> Result<DualityReport> {
    let sym = classify_symmetry(&Model::Tcbm(*model))?;
    if !sym.symmetric {
        return Err(Error::NotSymmetric(format!(
            "duality holds only for symmetric markets; mu / sigma^2 = {} (need -1/2)",
            model.bm.normalized_drift()
        )));
    }
    let primal = price_european_with(model, market, opt, cfg)?;

    let triplet = tcbm_levy_triplet(model)?;
    let dual = dual_triplet(&triplet, market.r, market.delta)?;
    let swapped = OptionSpec {
        strike: market.spot,
        maturity: opt.maturity,
        kind: match opt.kind {
            OptionKind::Call => OptionKind::Put,
            OptionKind::Put => OptionKind::Call,
        },
    };
    let dual_price = price_triplet(&dual, opt.strike, market.delta, market.r, &swapped, cfg)?;
    Ok(DualityReport {
        primal,
        dual: dual_price,
        residual: (primal - dual_price).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BrownianDrift;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn tempered(mu: f64, c: f64, lambda: f64, alpha: f64) -> TcbmModel {
        TcbmModel::new(
            BrownianDrift::new(mu, 1.0),
            SubordinatorSpec::TemperedStable { c, lambda, alpha },
        )
    }

    fn black_scholes(spot: f64, strike: f64, r: f64, q: f64, vol: f64, t: f64) -> (f64, f64) {
        let n = Normal::new(0.0, 1.0).unwrap();
        let sd = vol * t.sqrt();
        let d1 = ((spot / strike).ln() + (r - q + 0.5 * vol * vol) * t) / sd;
        let d2 = d1 - sd;
        let call = spot * (-q * t).exp() * n.cdf(d1) - strike * (-r * t).exp() * n.cdf(d2);
        let put = strike * (-r * t).exp() * n.cdf(-d2) - spot * (-q * t).exp() * n.cdf(-d1);
        (call, put)
    }

    #[test]
    fn gap_examples() {
        let m = tempered(-0.5, 1.0, 1.0, 0.5);
        assert_eq!(
            martingale_gap(&m, &MarketSpec::new(0.03, 0.03, 100.0)).unwrap(),
            0.0
        );

        let m = TcbmModel::new(
            BrownianDrift::new(0.0, 1.0),
            SubordinatorSpec::TemperedStable {
                c: 1.0,
                lambda: 2.0,
                alpha: 0.5,
            },
        );
        let gap = martingale_gap(&m, &MarketSpec::new(0.0, 0.0, 1.0)).unwrap();
        let expected = -2.0 * PI.sqrt() * (1.5f64.sqrt() - 2f64.sqrt());
        assert!((gap - expected).abs() < 1e-13);
        assert!((gap - 0.671_649_02).abs() < 1e-8);

        let cal = calibrate_drift(&m, &MarketSpec::new(0.0, 0.0, 1.0)).unwrap();
        assert!((cal.gamma + 0.671_649_02).abs() < 1e-8);
        assert!(
            martingale_gap(&cal, &MarketSpec::new(0.0, 0.0, 1.0))
                .unwrap()
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn calibration_is_a_fixed_point() {
        let market = MarketSpec::new(0.05, 0.02, 100.0);
        let once = calibrate_drift(&tempered(-0.3, 1.0, 1.5, 0.4), &market).unwrap();
        assert_eq!(calibrate_drift(&once, &market).unwrap(), once);
    }

    #[test]
    fn missing_moment_is_reported() {
        let m = tempered(0.8, 1.0, 1.0, 0.5);
        let err = martingale_gap(&m, &MarketSpec::new(0.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NoExponentialMoment(_)));
        let stable = TcbmModel::new(
            BrownianDrift::new(0.0, 1.0),
            SubordinatorSpec::Stable { a: 1.0, alpha: 0.5 },
        );
        assert!(matches!(
            calibrate_drift(&stable, &MarketSpec::new(0.0, 0.0, 1.0)),
            Err(Error::NoExponentialMoment(_))
        ));
    }

    #[test]
    fn fourier_pricer_reproduces_black_scholes() {
        let (spot, r, q, vol, t) = (100.0, 0.05, 0.02, 0.25, 0.75);
        let drift = r - q - 0.5 * vol * vol;
        let exponent = |z: Complex64| Ok(Complex64::new(0.0, drift) * z - 0.5 * vol * vol * z * z);
        for strike in [60.0, 95.0, 100.0, 130.0] {
            let (c, p) = black_scholes(spot, strike, r, q, vol, t);
            let cfg = PricingConfig::default();
            let call = price_from_exponent(
                &exponent,
                spot,
                r,
                &OptionSpec::call(strike, t),
                0.75,
                f64::INFINITY,
                &cfg,
            )
            .unwrap();
            let put = price_from_exponent(
                &exponent,
                spot,
                r,
                &OptionSpec::put(strike, t),
                0.3,
                f64::INFINITY,
                &cfg,
            )
            .unwrap();
            assert!((call - c).abs() < 1e-9, "K={strike}: {call} vs {c}");
            assert!((put - p).abs() < 1e-9, "K={strike}: {put} vs {p}");
        }
    }

    #[test]
    fn uncalibrated_model_is_rejected() {
        let m = tempered(-0.5, 1.0, 1.0, 0.5);
        let err = price_european(
            &m,
            &MarketSpec::new(0.05, 0.0, 100.0),
            &OptionSpec::call(100.0, 1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn call_bounds_parity_and_small_strike_limit() {
        let market = MarketSpec::new(0.05, 0.02, 100.0);
        let m = calibrate_drift(&tempered(-0.4, 1.0, 1.0, 0.5), &market).unwrap();
        let t = 1.0;
        let fwd = market.spot * (-market.delta * t).exp();
        for k in [50.0, 90.0, 100.0, 115.0, 200.0] {
            let c = price_european(&m, &market, &OptionSpec::call(k, t)).unwrap();
            let p = price_european(&m, &market, &OptionSpec::put(k, t)).unwrap();
            let disc_k = k * (-market.r * t).exp();
            assert!(c >= (fwd - disc_k).max(0.0) - 1e-9 && c <= fwd + 1e-9);
            assert!((c - p - (fwd - disc_k)).abs() < 1e-6);
        }
        let tiny = price_european(&m, &market, &OptionSpec::call(1e-7, t)).unwrap();
        assert!((tiny - fwd).abs() < 1e-6);
    }

    #[test]
    fn strike_monotonicity() {
        let market = MarketSpec::new(0.03, 0.01, 100.0);
        let m = calibrate_drift(&tempered(-0.5, 0.5, 2.0, 0.6), &market).unwrap();
        let strikes = [80.0, 90.0, 100.0, 110.0, 120.0];
        let calls: Vec<f64> = strikes
            .iter()
            .map(|&k| price_european(&m, &market, &OptionSpec::call(k, 0.5)).unwrap())
            .collect();
        let puts: Vec<f64> = strikes
            .iter()
            .map(|&k| price_european(&m, &market, &OptionSpec::put(k, 0.5)).unwrap())
            .collect();
        assert!(calls.windows(2).all(|w| w[1] <= w[0]));
        assert!(puts.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn damping_shrinks_into_narrow_strip() {
        assert_eq!(damping_in_strip(0.75, 3.0).unwrap(), 0.75);
        assert_eq!(damping_in_strip(0.75, 0.6).unwrap(), 0.3);
        assert!(damping_in_strip(0.75, 0.0).is_err());
    }

    #[test]
    fn non_symmetric_duality_is_rejected() {
        let market = MarketSpec::new(0.05, 0.02, 100.0);
        let m = calibrate_drift(&tempered(0.0, 1.0, 1.0, 0.5), &market).unwrap();
        let err = duality_check(&m, &market, &OptionSpec::call(110.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric(_)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn no_arbitrage_bounds(
            mu in -1.0f64..0.5,
            lambda in 1.0f64..4.0,
            alpha in 0.2f64..0.8,
            k1 in 50.0f64..150.0,
            dk in 0.5f64..20.0,
            t in 0.1f64..2.0,
        ) {
            let market = MarketSpec::new(0.04, 0.01, 100.0);
            let cal = calibrate_drift(&tempered(mu, 1.0, lambda, alpha), &market).unwrap();
            let fwd = market.spot * (-market.delta * t).exp();
            let c1 = price_european(&cal, &market, &OptionSpec::call(k1, t)).unwrap();
            let c2 = price_european(&cal, &market, &OptionSpec::call(k1 + dk, t)).unwrap();
            let lower = (fwd - k1 * (-market.r * t).exp()).max(0.0);
            prop_assert!(c1 >= lower - 1e-8 && c1 <= fwd + 1e-8, "call {} outside [{}, {}]", c1, lower, fwd);
            prop_assert!(c2 <= c1 + 1e-8);
            // Slope in strike is bounded by the discount factor.
            prop_assert!(c1 - c2 <= dk * (-market.r * t).exp() + 1e-8);
        }
    }
}
