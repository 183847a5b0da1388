//! Command-line frontend.
//!
//! Reports are JSON, sweeps are CSV; every float is written with 17
//! significant digits so repeated runs are byte-identical. Exit codes:
//! 0 success, 1 invalid input, 2 numerical failure, 3 I/O failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfn::model_char_exponent;
use crate::density::{
    classify_symmetry_with, complete_monotonicity_check_with, even_factor_with, named_levy_density,
    subordinated_levy_density_with, tilt, CmOptions, DensityConfig, SymmetryOptions,
};
use crate::error::{Error, Result};
use crate::mc::{self, PathSample};
use crate::models::{MarketSpec, Model, TcbmModel};
use crate::pricing::{
    calibrate_drift, duality_check_with, martingale_gap, price_european_with, OptionKind,
    OptionSpec, PricingConfig,
};
use crate::quad::QuadTol;

const MODEL_SCHEMA: &str = r#"MODEL FILES (--model):
  Subordinated Brownian motion  Y_t = gamma t + mu T_t + sigma W(T_t):
    {"type": "tcbm",
     "bm": {"mu": -0.5, "sigma": 1.0},
     "subordinator": {"type": "stable", "a": 1.0, "alpha": 0.5},
     "gamma": 0.0}
  with the clock either
     {"type": "stable", "a": A, "alpha": ALPHA}                    A > 0, 0 < ALPHA < 1
     {"type": "tempered-stable", "c": C, "lambda": L, "alpha": ALPHA}  C > 0, L > 0
  "gamma" is optional (default 0); sigma > 0.

  Closed-form models:
    {"type": "cgmy", "c": C, "g": G, "m": M, "y": Y}      C, G, M > 0, 0 < Y < 1
    {"type": "meixner", "a": A, "b": B, "d": D}           A, D > 0, |B| < pi

  Unknown fields are rejected.

MARKET FILES (--market):
    {"r": 0.05, "delta": 0.02, "spot": 100.0}             r, delta >= 0, spot > 0

EXIT CODES:
  0 success, 1 invalid input, 2 numerical failure, 3 I/O failure"#;

#[derive(Debug, Parser)]
#[command(
    name = "subsym",
    version,
    about = "Subordinated Brownian motion: exponents, densities, symmetry, pricing, duality, Monte Carlo",
    after_long_help = MODEL_SCHEMA
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model JSON file (see `subsym --help`).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct QuadArgs {
    /// Absolute tolerance of the density quadrature.
    #[arg(long, default_value_t = 1e-10)]
    pub abs_tol: f64,
    /// Relative tolerance of the density quadrature.
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
}

impl QuadArgs {
    fn config(&self) -> Result<DensityConfig> {
        if !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0 && self.abs_tol + self.rel_tol > 0.0) {
            return Err(Error::Precondition(format!(
                "quadrature tolerances must be nonnegative and not both zero, got abs {} rel {}",
                self.abs_tol, self.rel_tol
            )));
        }
        Ok(DensityConfig {
            tol: QuadTol::new(self.abs_tol, self.rel_tol),
        })
    }
}

#[derive(Debug, Args)]
pub struct OptionArgs {
    /// Market JSON file.
    #[arg(long)]
    pub market: PathBuf,
    #[arg(long)]
    pub strike: f64,
    #[arg(long)]
    pub maturity: f64,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Damping of the Fourier contour, shrunk into the moment strip if needed.
    #[arg(long, default_value_t = 0.75)]
    pub damping: f64,
    /// Simpson intervals on the truncated frequency axis (even).
    #[arg(long, default_value_t = 4096)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub cutoff_tol: f64,
}

impl OptionArgs {
    fn spec(&self) -> Result<OptionSpec> {
        let kind = match self.kind {
            KindArg::Call => OptionKind::Call,
            KindArg::Put => OptionKind::Put,
        };
        Ok(OptionSpec {
            strike: self.strike,
            maturity: self.maturity,
            kind,
        }
        .validate()?)
    }

    fn config(&self) -> Result<PricingConfig> {
        if self.points < 2 || self.points % 2 == 1 {
            return Err(Error::Precondition(format!(
                "--points must be even and >= 2, got {}",
                self.points
            )));
        }
        if !(self.cutoff_tol > 0.0) {
            return Err(Error::Precondition(format!(
                "--cutoff-tol must be positive, got {}",
                self.cutoff_tol
            )));
        }
        Ok(PricingConfig {
            damping: self.damping,
            n_points: self.points,
            cutoff_tol: self.cutoff_tol,
            ..PricingConfig::default()
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Call,
    Put,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Characteristic exponent psi(z) at real points z (plus an optional imaginary shift).
    CfEval {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, num_args = 1.., allow_negative_numbers = true, required = true)]
        z: Vec<f64>,
        /// Imaginary part added to every z.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        z_im: f64,
    },
    /// Levy density nu(x) and its even factor f(x) = nu(x) exp(-theta x), as CSV.
    Density {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, num_args = 1.., allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Parameter criterion for market symmetry plus a density-grid confirmation.
    SymmetryCheck {
        #[command(flatten)]
        model: ModelArg,
        /// Positive points for the density confirmation (default: 20 log-spaced on [0.05, 5]).
        #[arg(long, num_args = 1..)]
        grid: Option<Vec<f64>>,
        /// Relative tolerance of the density confirmation.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Sets gamma so that the discounted reinvested price is a martingale.
    Calibrate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        market: PathBuf,
        /// Also write the calibrated model document here.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// European option price under a calibrated subordinated model.
    Price {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        option: OptionArgs,
    },
    /// Primal price against the rate-swapped dual-market price.
    DualityCheck {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        option: OptionArgs,
    },
    /// Symmetry and alternating-difference conditions for subordinated representability.
    CmCheck {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 6)]
        order: usize,
        /// Step of the forward differences on (0, 1).
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long, default_value_t = 1e-10)]
        condition2_tol: f64,
        #[arg(long, default_value_t = 1e-8)]
        difference_tol: f64,
    },
    /// Simulates paths to CSV (path_id, t, clock, y).
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Empirical characteristic function of simulated paths.
    Ecf {
        /// CSV written by `simulate`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        z: f64,
        #[arg(long)]
        t: f64,
    },
}

/// JSON formatter writing every float as `d.dddddddddddddddde±x`.
struct FixedFloats;

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{}", fmt_f64(v))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes `value` as one line of JSON with fixed float formatting.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Parse(format!("cannot serialize report: {e}")))?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = read_file(path)?;
    let model =
        Model::from_json(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(model.validate()?)
}

pub fn load_market(path: &Path) -> Result<MarketSpec> {
    let text = read_file(path)?;
    let market: MarketSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(market.validate()?)
}

fn subordinated(model: Model, command: &str) -> Result<TcbmModel> {
    match model {
        Model::Tcbm(t) => Ok(t),
        Model::Named(_) => Err(Error::Precondition(format!(
            "{command} needs a subordinated (\"tcbm\") model"
        ))),
    }
}

#[derive(Serialize)]
struct ExponentPoint {
    z_re: f64,
    z_im: f64,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct CfEvalReport {
    values: Vec<ExponentPoint>,
}

#[derive(Serialize)]
struct CalibrationReport {
    model: Model,
    gap_before: f64,
    gap_after: f64,
}

#[derive(Serialize)]
struct PriceReport {
    price: f64,
    kind: OptionKind,
    strike: f64,
    maturity: f64,
}

#[derive(Debug, Deserialize)]
struct PathRow {
    path_id: u64,
    t: f64,
    clock: f64,
    y: f64,
}

#[derive(Serialize)]
struct EcfReport {
    z: f64,
    t: f64,
    paths: usize,
    re: f64,
    im: f64,
    stderr_re: f64,
    stderr_im: f64,
    stderr: f64,
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse(format!("CSV: {e}"))
    }
}

fn write_density(
    model: &Model,
    xs: &[f64],
    cfg: &DensityConfig,
    out: &mut dyn Write,
) -> Result<()> {
    let theta = tilt(model);
    let rows: Vec<Result<(f64, f64, f64)>> = xs
        .par_iter()
        .map(|&x| match model {
            Model::Tcbm(t) => Ok((
                x,
                subordinated_levy_density_with(t, x, cfg)?,
                even_factor_with(t, x, cfg)?,
            )),
            Model::Named(n) => {
                if x == 0.0 || !x.is_finite() {
                    return Err(Error::Precondition(format!(
                        "Levy density needs finite x != 0, got {x}"
                    )));
                }
                let v = named_levy_density(n, x);
                Ok((x, v, v * (-theta * x).exp()))
            }
        })
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "nu", "f"]).map_err(csv_error)?;
    for row in rows {
        let (x, nu, f) = row?;
        w.write_record([fmt_f64(x), fmt_f64(nu), fmt_f64(f)])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_paths(
    model: &TcbmModel,
    horizon: f64,
    steps: usize,
    paths: usize,
    seed: u64,
    out: &mut dyn Write,
) -> Result<()> {
    // Validate once through the batch entry point on a single path.
    mc::simulate_paths(model, horizon, steps, 1, seed)?;
    if paths == 0 {
        return Err(Error::Precondition("--paths must be positive".into()));
    }
    const CHUNK: u64 = 4096;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "t", "clock", "y"])
        .map_err(csv_error)?;
    let total = paths as u64;
    let mut start = 0;
    while start < total {
        let end = (start + CHUNK).min(total);
        let chunk: Vec<Result<PathSample>> = (start..end)
            .into_par_iter()
            .map(|i| mc::simulate_path(model, horizon, steps, seed, i))
            .collect();
        for (i, p) in (start..end).zip(chunk) {
            let p = p?;
            let id = i.to_string();
            for j in 0..p.times.len() {
                w.write_record([
                    id.clone(),
                    fmt_f64(p.times[j]),
                    fmt_f64(p.clock[j]),
                    fmt_f64(p.y[j]),
                ])
                .map_err(csv_error)?;
            }
        }
        start = end;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV written by `simulate`, grouping rows by `path_id`.
pub fn read_paths(path: &Path) -> Result<Vec<PathSample>> {
    let file = File::open(path)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(io::BufReader::new(file));
    let mut paths: Vec<PathSample> = Vec::new();
    let mut current: Option<u64> = None;
    for row in rdr.deserialize::<PathRow>() {
        let row = row.map_err(csv_error)?;
        if current != Some(row.path_id) {
            current = Some(row.path_id);
            paths.push(PathSample {
                times: Vec::new(),
                clock: Vec::new(),
                y: Vec::new(),
            });
        }
        let p = paths.last_mut().expect("pushed above");
        p.times.push(row.t);
        p.clock.push(row.clock);
        p.y.push(row.y);
    }
    if let Some(first) = paths.first() {
        if paths.iter().any(|p| p.times != first.times) {
            return Err(Error::Parse(format!(
                "{}: paths do not share one time grid",
                path.display()
            )));
        }
    }
    Ok(paths)
}

/// Executes one command, writing its document to `out`.
pub fn run(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    match &config.command {
        Command::CfEval { model, z, z_im } => {
            let m = load_model(&model.model)?;
            let values = z
                .iter()
                .map(|&re| {
                    let zc = Complex64::new(re, *z_im);
                    let v = model_char_exponent(&m, zc)?;
                    Ok(ExponentPoint {
                        z_re: re,
                        z_im: *z_im,
                        re: v.re,
                        im: v.im,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            writeln!(out, "{}", to_json(&CfEvalReport { values })?)?;
        }
        Command::Density { model, x, quad } => {
            let m = load_model(&model.model)?;
            write_density(&m, x, &quad.config()?, out)?;
        }
        Command::SymmetryCheck { model, grid, tol } => {
            let m = load_model(&model.model)?;
            let mut opts = SymmetryOptions {
                tol: *tol,
                ..SymmetryOptions::default()
            };
            if let Some(g) = grid {
                opts.grid = g.clone();
            }
            let report = classify_symmetry_with(&m, &opts)?;
            writeln!(out, "{}", to_json(&report)?)?;
        }
        Command::Calibrate {
            model,
            market,
            model_out,
        } => {
            let m = subordinated(load_model(&model.model)?, "calibrate")?;
            let mkt = load_market(market)?;
            let gap_before = martingale_gap(&m, &mkt)?;
            let cal = calibrate_drift(&m, &mkt)?;
            let gap_after = martingale_gap(&cal, &mkt)?;
            if let Some(p) = model_out {
                std::fs::write(p, to_json(&Model::Tcbm(cal))? + "\n")?;
            }
            let report = CalibrationReport {
                model: Model::Tcbm(cal),
                gap_before,
                gap_after,
            };
            writeln!(out, "{}", to_json(&report)?)?;
        }
        Command::Price { model, option } => {
            let m = subordinated(load_model(&model.model)?, "price")?;
            let mkt = load_market(&option.market)?;
            let opt = option.spec()?;
            let price = price_european_with(&m, &mkt, &opt, &option.config()?)?;
            let report = PriceReport {
                price,
                kind: opt.kind,
                strike: opt.strike,
                maturity: opt.maturity,
            };
            writeln!(out, "{}", to_json(&report)?)?;
        }
        Command::DualityCheck { model, option } => {
            let m = subordinated(load_model(&model.model)?, "duality-check")?;
            let mkt = load_market(&option.market)?;
            let report = duality_check_with(&m, &mkt, &option.spec()?, &option.config()?)?;
            writeln!(out, "{}", to_json(&report)?)?;
        }
        Command::CmCheck {
            model,
            order,
            step,
            condition2_tol,
            difference_tol,
        } => {
            let m = subordinated(load_model(&model.model)?, "cm-check")?;
            let opts = CmOptions {
                condition2_tol: *condition2_tol,
                difference_tol: *difference_tol,
                ..CmOptions::default()
            };
            let report = complete_monotonicity_check_with(&m, *order, *step, &opts)?;
            writeln!(out, "{}", to_json(&report)?)?;
        }
        Command::Simulate {
            model,
            horizon,
            steps,
            paths,
            seed,
        } => {
            let m = subordinated(load_model(&model.model)?, "simulate")?;
            write_paths(&m, *horizon, *steps, *paths, *seed, out)?;
        }
        Command::Ecf { input, z, t } => {
            let paths = read_paths(input)?;
            let e = mc::empirical_cf(&paths, *z, *t)?;
            let report = EcfReport {
                z: *z,
                t: *t,
                paths: paths.len(),
                re: e.estimate.re,
                im: e.estimate.im,
                stderr_re: e.stderr_re,
                stderr_im: e.stderr_im,
                stderr: e.stderr,
            };
            writeln!(out, "{}", to_json(&report)?)?;
        }
    }
    Ok(())
}

/// Runs with output to `--out` or stdout and returns the exit code.
pub fn execute(config: &RunConfig) -> i32 {
    let result = match &config.out {
        Some(path) => File::create(path)
            .map_err(|e| Error::from(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
            .and_then(|f| {
                let mut w = BufWriter::new(f);
                run(config, &mut w)?;
                w.flush()?;
                Ok(())
            }),
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            run(config, &mut w).and_then(|_| Ok(w.flush()?))
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` and runs; usage errors exit with 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match RunConfig::try_parse_from(args) {
        Ok(config) => execute(&config),
        Err(e) => {
            let _ = e.print();
            usage_exit_code(&e)
        }
    }
}

/// Help and version requests succeed; every other parse failure is invalid input.
pub fn usage_exit_code(e: &clap::Error) -> i32 {
    match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::SymmetryReport;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
        for v in [0.1, 1.0 / 3.0, -7.25e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn json_reports_reparse() {
        let report =
            crate::density::classify_symmetry(&Model::Named(crate::models::NamedModel::Cgmy {
                c: 1.0,
                g: 2.0,
                m: 3.0,
                y: 0.5,
            }))
            .unwrap();
        let text = to_json(&report).unwrap();
        let back: SymmetryReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(to_json(&back).unwrap(), text);
    }

    #[test]
    fn non_finite_floats_become_null() {
        assert_eq!(
            to_json(&[f64::NAN, 1.0]).unwrap(),
            "[null,1.0000000000000000e0]"
        );
    }

    #[test]
    fn usage_errors_exit_with_one() {
        let code = |args: &[&str]| usage_exit_code(&RunConfig::try_parse_from(args).unwrap_err());
        assert_eq!(code(&["subsym", "price", "--strike", "abc"]), 1);
        assert_eq!(code(&["subsym", "no-such-command"]), 1);
        assert_eq!(code(&["subsym", "--help"]), 0);
    }
}
