//! Adaptive Gauss-Kronrod quadrature on finite intervals.
//!
//! A 21-point Kronrod rule with its embedded 10-point Gauss rule drives a
//! global bisection scheme: the panel with the largest error estimate is
//! split until the summed estimate meets `max(abs_tol, rel_tol * |I|)`.
//! Integrands may be real or complex.

use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

pub(crate) const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_452_922,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Values a quadrature can accumulate.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn zero() -> Self;
    fn norm(self) -> f64;
    fn is_finite_value(self) -> bool;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn norm(self) -> f64 {
        self.abs()
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn norm(self) -> f64 {
        Complex64::norm(self)
    }
    fn is_finite_value(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl QuadTol {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            max_panels: 2000,
        }
    }
}

impl Default for QuadTol {
    fn default() -> Self {
        Self::new(1e-10, 1e-8)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

/// One 21-point Kronrod panel with its Gauss-difference error estimate.
pub(crate) fn gk21<T, F>(f: &F, a: f64, b: f64) -> (T, f64)
where
    T: QuadValue,
    F: Fn(f64) -> T + ?Sized,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = T::zero();
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        let sum = f1 + f2;
        kronrod = kronrod + sum * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + sum * WG[j / 2];
        }
    }
    let value = kronrod * half;
    (value, ((kronrod - gauss) * half).norm())
}

/// Rounding floor for a sum of panels with absolute mass `mass`.
fn noise_floor(mass: f64) -> f64 {
    50.0 * f64::EPSILON * mass
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    err: f64,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Integrates `f` over `[a, b]`, starting from the given breakpoints.
///
/// `breaks` must lie inside `[a, b]`; they seed the initial panels so that
/// known peaks or oscillation periods are resolved from the start.
pub fn integrate_with_breaks<T, F>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: QuadTol,
) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T + ?Sized,
{
    if a == b {
        return Ok(QuadResult {
            value: T::zero(),
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut points = Vec::with_capacity(breaks.len() + 2);
    points.push(a);
    points.extend(
        breaks
            .iter()
            .copied()
            .filter(|&p| p > a.min(b) && p < a.max(b)),
    );
    points.push(b);
    if a > b {
        points[1..].sort_by(|x, y| y.total_cmp(x));
    } else {
        points[1..].sort_by(|x, y| x.total_cmp(y));
    }
    points.dedup();

    let mut heap = BinaryHeap::with_capacity(points.len() * 4);
    let mut total = T::zero();
    let mut total_err = 0.0;
    let mut mass = 0.0;
    for w in points.windows(2) {
        let (value, err) = gk21(f, w[0], w[1]);
        total = total + value;
        total_err += err;
        mass += value.norm();
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            err,
        });
    }
    let mut evaluations = 21 * heap.len();
    let max_panels = tol.max_panels.max(heap.len() + 1);

    loop {
        if !total.is_finite_value() {
            return Err(Error::Quadrature {
                what: "non-finite integrand value".into(),
                estimate: f64::INFINITY,
                requested: tol.abs.max(tol.rel * total.norm()),
            });
        }
        let target = tol.abs.max(tol.rel * total.norm());
        if total_err <= target.max(noise_floor(mass)) {
            break;
        }
        if heap.len() >= max_panels {
            return Err(Error::Quadrature {
                what: format!("panel budget of {max_panels} exhausted on [{a}, {b}]"),
                estimate: total_err,
                requested: target,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid == worst.a || mid == worst.b {
            // Panel cannot be split further in floating point.
            return Err(Error::Quadrature {
                what: format!("interval [{}, {}] collapsed", worst.a, worst.b),
                estimate: total_err,
                requested: target,
            });
        }
        let (v1, e1) = gk21(f, worst.a, mid);
        let (v2, e2) = gk21(f, mid, worst.b);
        evaluations += 42;
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.err;
        mass += v1.norm() + v2.norm() - worst.value.norm();
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });
    }

    // Re-sum from the panels to shed drift from the running updates.
    let mut value = T::zero();
    let mut error = 0.0;
    let mut mass = 0.0;
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    for p in &panels {
        value = value + p.value;
        error += p.err;
        mass += p.value.norm();
    }
    let error = error.max(noise_floor(mass));
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

pub fn integrate<T, F>(f: &F, a: f64, b: f64, tol: QuadTol) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T + ?Sized,
{
    integrate_with_breaks(f, a, b, &[], tol)
}

/// Nodes and weights of a composite 21-point Kronrod rule on `[a, b]` split
/// into `panels` equal pieces.
pub(crate) fn composite_rule(
    a: f64,
    b: f64,
    panels: usize,
    nodes: &mut Vec<f64>,
    weights: &mut Vec<f64>,
) {
    let width = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let center = lo + 0.5 * width;
        let half = 0.5 * width;
        for j in 0..10 {
            nodes.push(center - half * XGK[j]);
            weights.push(half * WGK[j]);
            nodes.push(center + half * XGK[j]);
            weights.push(half * WGK[j]);
        }
        nodes.push(center);
        weights.push(half * WGK[10]);
    }
}
