//! Monte Carlo simulation of the clock and of subordinated Brownian paths.
//!
//! The clock increment over `dt` is sampled exactly. For the stable family
//! `E exp(-s T_dt) = exp(-dt k s^alpha)` with `k = A Gamma(1 - alpha) / alpha`,
//! so `T_dt = (dt k)^(1/alpha) S` where `S` is the standard positive stable
//! variable with `E exp(-s S) = exp(-s^alpha)`. The tempered family is the
//! `exp(-lambda x)` tilt of the stable law with the same `k`, sampled by
//! rejection.
//!
//! Path `i` draws from its own ChaCha stream `(seed, i)`, so output never
//! depends on the number of worker threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};
use crate::models::{SubordinatorSpec, TcbmModel};

/// Rejection attempts allowed per tempered sub-step before giving up.
pub const MAX_REJECTIONS: usize = 1_000_000;

/// Minimum paths accepted by [`empirical_cf`].
pub const MIN_PATHS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub clock: Vec<f64>,
    pub y: Vec<f64>,
}

/// Standard positive `alpha`-stable draw, `E exp(-s S) = exp(-s^alpha)`.
///
/// Kanter's representation with `U ~ U(0, pi)`, `W ~ Exp(1)`:
/// `S = sin(alpha U) / sin(U)^(1/alpha) * (sin((1 - alpha) U) / W)^((1 - alpha) / alpha)`.
pub fn sample_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = loop {
        let u = PI * rng.gen::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let w: f64 = rng.sample(Exp1);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// One clock increment over `dt`.
pub fn sample_subordinator_increment<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!(
            "dt must be positive and finite, got {dt}"
        )));
    }
    let alpha = spec.alpha();
    let k = spec.exponent_scale();
    let lambda = spec.tempering();
    let draw = if lambda == 0.0 {
        (dt * k).powf(1.0 / alpha) * sample_positive_stable(alpha, rng)
    } else {
        // Acceptance over a sub-step h is exp(-h k lambda^alpha); keep it >= 1/e.
        let steps = (dt * k * lambda.powf(alpha)).ceil().max(1.0) as usize;
        let h = dt / steps as f64;
        let scale = (h * k).powf(1.0 / alpha);
        let mut total = 0.0;
        for _ in 0..steps {
            let mut tries = 0;
            total += loop {
                if tries == MAX_REJECTIONS {
                    return Err(Error::IterationCap(MAX_REJECTIONS));
                }
                tries += 1;
                let s = scale * sample_positive_stable(alpha, rng);
                if rng.gen::<f64>() < (-lambda * s).exp() {
                    break s;
                }
            };
        }
        total
    };
    Ok(draw.max(f64::MIN_POSITIVE))
}

fn check_grid(horizon: f64, n_steps: usize) -> Result<()> {
    let mut report = ValidationReport::default();
    if !(horizon > 0.0 && horizon.is_finite()) {
        report.push("horizon", "must be positive and finite", horizon);
    }
    if n_steps == 0 {
        report.push("n_steps", "must be positive", 0.0);
    }
    report.into_result(()).map_err(Error::from)
}

/// Path `index` of the family generated by `seed`.
pub fn simulate_path(
    model: &TcbmModel,
    horizon: f64,
    n_steps: usize,
    seed: u64,
    index: u64,
) -> Result<PathSample> {
    check_grid(horizon, n_steps)?;
    path(model, horizon, n_steps, seed, index)
}

fn path(
    model: &TcbmModel,
    horizon: f64,
    n_steps: usize,
    seed: u64,
    index: u64,
) -> Result<PathSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let dt = horizon / n_steps as f64;
    let (mu, sigma, gamma) = (model.bm.mu, model.bm.sigma, model.gamma);

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut clock = Vec::with_capacity(n_steps + 1);
    let mut y = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    clock.push(0.0);
    y.push(0.0);
    let (mut tc, mut yc) = (0.0, 0.0);
    for i in 1..=n_steps {
        let d_clock = sample_subordinator_increment(&model.subordinator, dt, &mut rng)?;
        let z: f64 = rng.sample(StandardNormal);
        tc += d_clock;
        yc += gamma * dt + mu * d_clock + sigma * d_clock.sqrt() * z;
        times.push(if i == n_steps { horizon } else { i as f64 * dt });
        clock.push(tc);
        y.push(yc);
    }
    Ok(PathSample { times, clock, y })
}

/// `n_paths` independent paths on a uniform grid of `n_steps` steps.
pub fn simulate_paths(
    model: &TcbmModel,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    model.validate()?;
    check_grid(horizon, n_steps)?;
    if n_paths == 0 {
        return Err(ValidationReport::single("n_paths", "must be positive", 0.0).into());
    }
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| path(model, horizon, n_steps, seed, i))
        .collect()
}

/// Neumaier-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.c
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut s = Compensated::default();
    values.iter().for_each(|&v| s.add(v));
    let mean = s.value() / n;
    let mut ss = Compensated::default();
    values.iter().for_each(|&v| ss.add((v - mean) * (v - mean)));
    (mean, (ss.value() / (n - 1.0) / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcfEstimate {
    pub estimate: Complex64,
    /// Standard errors of the real and imaginary parts.
    pub stderr_re: f64,
    pub stderr_im: f64,
    /// `sqrt(stderr_re^2 + stderr_im^2)`.
    pub stderr: f64,
}

/// Index of `t` on the common time grid of `paths`.
pub fn grid_index(paths: &[PathSample], t: f64) -> Result<usize> {
    let times = &paths
        .first()
        .ok_or_else(|| Error::Precondition("no paths supplied".into()))?
        .times;
    let tol = 1e-12 * times.last().copied().unwrap_or(1.0).abs().max(1.0);
    times
        .iter()
        .position(|&s| (s - t).abs() <= tol)
        .ok_or_else(|| Error::Precondition(format!("t = {t} is not on the simulation grid")))
}

/// Sample mean of `exp(i z Y_t)` with componentwise standard errors.
pub fn empirical_cf(paths: &[PathSample], z: f64, t: f64) -> Result<EcfEstimate> {
    if paths.len() < MIN_PATHS {
        return Err(Error::Precondition(format!(
            "empirical_cf needs at least {MIN_PATHS} paths, got {}",
            paths.len()
        )));
    }
    let j = grid_index(paths, t)?;
    let mut re = Vec::with_capacity(paths.len());
    let mut im = Vec::with_capacity(paths.len());
    for p in paths {
        let yt =
            *p.y.get(j)
                .ok_or_else(|| Error::Precondition("paths have different grids".into()))?;
        let (s, c) = (z * yt).sin_cos();
        re.push(c);
        im.push(s);
    }
    let (mr, er) = mean_and_stderr(&re);
    let (mi, ei) = mean_and_stderr(&im);
    Ok(EcfEstimate {
        estimate: Complex64::new(mr, mi),
        stderr_re: er,
        stderr_im: ei,
        stderr: er.hypot(ei),
    })
}
