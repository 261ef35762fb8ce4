//! Parameter sweeps over splitting ratio, power and antenna count, with CSV
//! output, built-in figure presets and a key-value config format.

pub mod config;
pub mod figures;
pub mod selftest;

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::mi_closed::{self, ClosedFormError};
use crate::mi_mc::{self, McError, McSettings};
use crate::model::{self, ChannelVector, ModelError, NoiseProfile, ReceiverDesign, TransmitConfig};
use crate::optimizer::{self, optimal_rho};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("unknown figure '{0}' (expected fig2, fig3, fig4, fig5 or fig6)")]
    UnknownFigure(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("grid point {index} ({coords}): {message}")]
    Point {
        index: usize,
        coords: String,
        code: &'static str,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::InvalidSpec(_) => "invalid-spec",
            HarnessError::UnknownFigure(_) => "unknown-figure",
            HarnessError::Config { .. } => "invalid-config-file",
            HarnessError::Point { code, .. } => code,
            HarnessError::Model(e) => e.code(),
            HarnessError::Io(_) => "io",
        }
    }
}

/// A swept variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    /// Splitting ratio shared by all antennas.
    Rho,
    /// Splitting ratio of antenna 1 (two-antenna grids).
    Rho1,
    /// Splitting ratio of antenna 2 (two-antenna grids).
    Rho2,
    Power,
    Antennas,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::Rho => "rho",
            SweepVar::Rho1 => "rho1",
            SweepVar::Rho2 => "rho2",
            SweepVar::Power => "power",
            SweepVar::Antennas => "antennas",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "rho" => SweepVar::Rho,
            "rho1" => SweepVar::Rho1,
            "rho2" => SweepVar::Rho2,
            "power" => SweepVar::Power,
            "antennas" => SweepVar::Antennas,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(var: SweepVar, values: Vec<f64>) -> Self {
        Self { var, values }
    }

    /// `count` evenly spaced values from `start` to `stop` inclusive.
    pub fn linear(var: SweepVar, start: f64, stop: f64, count: usize) -> Self {
        Self::new(var, linspace(start, stop, count))
    }

    /// `count` log-spaced values from `start` to `stop` inclusive.
    pub fn log(var: SweepVar, start: f64, stop: f64, count: usize) -> Self {
        let (a, b) = (start.log10(), stop.log10());
        Self::new(var, linspace(a, b, count).into_iter().map(|v| 10f64.powf(v)).collect())
    }
}

pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Channel used at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Magnitudes(Vec<f64>),
    /// Same magnitude on every antenna; the count may be swept.
    Uniform { antennas: usize, magnitude: f64 },
}

/// Combining weights used at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignScheme {
    /// `alpha = beta` proportional to `|h_k|^2`.
    Optimal,
    Egc,
    Mrc,
    Explicit { alpha: Vec<f64>, beta: Vec<f64> },
}

impl DesignScheme {
    pub fn name(&self) -> &'static str {
        match self {
            DesignScheme::Optimal => "optimal",
            DesignScheme::Egc => "egc",
            DesignScheme::Mrc => "mrc",
            DesignScheme::Explicit { .. } => "explicit",
        }
    }

    fn weights(&self, channel: &ChannelVector) -> Result<(Vec<f64>, Vec<f64>), String> {
        Ok(match self {
            DesignScheme::Optimal => {
                let w = optimizer::canonical_weights(channel);
                (w.clone(), w)
            }
            DesignScheme::Egc => {
                let w = optimizer::egc_weights(channel.len());
                (w.clone(), w)
            }
            DesignScheme::Mrc => {
                let w = optimizer::mrc_weights(channel);
                (w.clone(), w)
            }
            DesignScheme::Explicit { alpha, beta } => {
                if alpha.len() != channel.len() || beta.len() != channel.len() {
                    return Err(format!(
                        "explicit weights have {}/{} entries for {} antennas",
                        alpha.len(),
                        beta.len(),
                        channel.len()
                    ));
                }
                (alpha.clone(), beta.clone())
            }
        })
    }
}

/// Quantity evaluated at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// High-SNR approximation at the point's design.
    ClosedForm,
    /// Monte Carlo estimate at the point's design.
    MonteCarlo,
    /// Coherent receiver.
    CdBaseline,
    /// Maximum MI at the optimal splitting ratio.
    Max,
    /// Approximation with optimal weights at the point's ratios.
    Optimal,
    /// Approximation with EGC weights at the point's ratios.
    Egc,
    /// Approximation with MRC weights at the point's ratios.
    Mrc,
    /// Finite-power gain over the coherent receiver.
    Gain,
    /// High-power gain over the coherent receiver.
    GainAsymptotic,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::ClosedForm,
        Method::MonteCarlo,
        Method::CdBaseline,
        Method::Max,
        Method::Optimal,
        Method::Egc,
        Method::Mrc,
        Method::Gain,
        Method::GainAsymptotic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::MonteCarlo => "monte-carlo",
            Method::CdBaseline => "cd-baseline",
            Method::Max => "max",
            Method::Optimal => "optimal",
            Method::Egc => "egc",
            Method::Mrc => "mrc",
            Method::Gain => "gain",
            Method::GainAsymptotic => "gain-asymptotic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// A cartesian sweep. Axes vary slowest-first in the order given.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub channel: ChannelSpec,
    pub noise: NoiseProfile,
    /// Power when not swept.
    pub power: f64,
    /// Shared splitting ratio when not swept; `None` uses the optimal ratio.
    pub rho: Option<f64>,
    pub scheme: DesignScheme,
    pub methods: Vec<Method>,
    pub mc: McSettings,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axes: Vec::new(),
            channel: ChannelSpec::Uniform {
                antennas: 1,
                magnitude: 1.0,
            },
            noise: NoiseProfile::default(),
            power: 100.0,
            rho: None,
            scheme: DesignScheme::Optimal,
            methods: vec![Method::ClosedForm],
            mc: McSettings::default(),
            seed: 0,
            out: None,
        }
    }
}

impl SweepSpec {
    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        self.noise.check()?;
        self.mc.check().map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
        let has = |v: SweepVar| self.axes.iter().any(|a| a.var == v);
        for (i, a) in self.axes.iter().enumerate() {
            if a.values.is_empty() {
                return bad(format!("axis '{}' is empty", a.var.name()));
            }
            if self.axes[..i].iter().any(|b| b.var == a.var) {
                return bad(format!("axis '{}' given twice", a.var.name()));
            }
            for &v in &a.values {
                let ok = match a.var {
                    SweepVar::Rho | SweepVar::Rho1 | SweepVar::Rho2 => v > 0.0 && v <= 1.0,
                    SweepVar::Power => v.is_finite() && v > 0.0,
                    SweepVar::Antennas => v >= 1.0 && v.fract() == 0.0 && v <= 1e6,
                };
                if !ok {
                    return bad(format!("{} = {v} is outside its domain", a.var.name()));
                }
            }
        }
        if has(SweepVar::Rho) && (has(SweepVar::Rho1) || has(SweepVar::Rho2)) {
            return bad("rho cannot be swept together with rho1/rho2".into());
        }
        if has(SweepVar::Rho1) != has(SweepVar::Rho2) {
            return bad("rho1 and rho2 must be swept together".into());
        }
        if has(SweepVar::Antennas) && matches!(self.channel, ChannelSpec::Magnitudes(_)) {
            return bad("sweeping antennas needs a uniform channel".into());
        }
        if let Some(r) = self.rho {
            if !(r > 0.0 && r <= 1.0) {
                return bad(format!("rho = {r} is outside (0, 1]"));
            }
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return bad(format!("power = {} must be positive", self.power));
        }
        Ok(())
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of grid point `index`, in axis order.
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.axes.len()];
        for (i, a) in self.axes.iter().enumerate().rev() {
            let n = a.values.len();
            coords[i] = a.values[index % n];
            index /= n;
        }
        coords
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.axes.iter().map(|a| a.var.name().to_string()).collect();
        cols.extend(self.methods.iter().map(|m| m.name().to_string()));
        cols.extend(
            self.methods
                .iter()
                .filter(|m| **m == Method::MonteCarlo)
                .map(|m| format!("{}_stderr", m.name())),
        );
        cols
    }
}

/// Sweep output: one row per grid point in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Number of leading coordinate columns.
    pub coord_columns: usize,
}

impl SweepTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{}", format_sig(*v, 9));
            }
            s.push('\n');
        }
        s
    }
}

/// Formats `v` with `sig` significant digits, `%g` style.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    let sci = format!("{:.*e}", sig - 1, v);
    // Rounding may bump the exponent; take it from the formatted mantissa.
    let exp = sci
        .split_once('e')
        .and_then(|(_, e)| e.parse::<i32>().ok())
        .unwrap_or(exp);
    if exp < -5 || exp >= sig as i32 {
        let (m, e) = sci.split_once('e').unwrap();
        let m = trim_zeros(m);
        return format!("{m}e{e}");
    }
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

const STREAM_POINT: u64 = 20;

struct PointSetup {
    channel: ChannelVector,
    tx: TransmitConfig,
    /// Per-antenna ratios at this point.
    rho: Vec<f64>,
}

fn setup(spec: &SweepSpec, coords: &[f64], rho_star: f64) -> Result<PointSetup, ModelError> {
    let get = |v: SweepVar| {
        spec.axes
            .iter()
            .position(|a| a.var == v)
            .map(|i| coords[i])
    };
    let channel = match &spec.channel {
        ChannelSpec::Magnitudes(m) => ChannelVector::from_magnitudes(m.clone())?,
        ChannelSpec::Uniform { antennas, magnitude } => {
            let k = get(SweepVar::Antennas).map_or(*antennas, |v| v as usize);
            ChannelVector::uniform(k, *magnitude)?
        }
    };
    let tx = TransmitConfig::new(get(SweepVar::Power).unwrap_or(spec.power))?;
    let k = channel.len();
    let rho = match (get(SweepVar::Rho1), get(SweepVar::Rho2)) {
        (Some(r1), Some(r2)) => {
            if k != 2 {
                return Err(ModelError::DimensionMismatch {
                    what: "rho1/rho2 sweep antennas",
                    expected: 2,
                    got: k,
                });
            }
            vec![r1, r2]
        }
        _ => {
            let r = get(SweepVar::Rho).or(spec.rho).unwrap_or(rho_star);
            vec![r; k]
        }
    };
    Ok(PointSetup { channel, tx, rho })
}

enum PointError {
    Model(ModelError),
    Closed(ClosedFormError),
    Mc(McError),
    Spec(String),
}

impl From<ModelError> for PointError {
    fn from(e: ModelError) -> Self {
        PointError::Model(e)
    }
}

impl From<ClosedFormError> for PointError {
    fn from(e: ClosedFormError) -> Self {
        PointError::Closed(e)
    }
}

impl From<McError> for PointError {
    fn from(e: McError) -> Self {
        PointError::Mc(e)
    }
}

impl PointError {
    fn code(&self) -> &'static str {
        match self {
            PointError::Model(e) => e.code(),
            PointError::Closed(e) => e.code(),
            PointError::Mc(e) => e.code(),
            PointError::Spec(_) => "invalid-spec",
        }
    }

    fn message(&self) -> String {
        match self {
            PointError::Model(e) => e.to_string(),
            PointError::Closed(e) => e.to_string(),
            PointError::Mc(e) => e.to_string(),
            PointError::Spec(m) => m.clone(),
        }
    }
}

/// Design with the given weights; CD-only when every ratio is 1.
fn design_for(rho: &[f64], alpha: Vec<f64>, beta: Vec<f64>) -> ReceiverDesign {
    if rho.iter().all(|r| *r == 1.0) {
        ReceiverDesign::cd_only(alpha)
    } else {
        ReceiverDesign::splitting(rho.to_vec(), alpha, beta)
    }
}

fn approx_or_cd(config: &model::SystemConfig) -> Result<f64, PointError> {
    if config.mode() == model::ReceiverMode::CdOnly {
        Ok(mi_closed::mi_cd(config.channel(), config.noise(), config.tx()).value)
    } else {
        Ok(mi_closed::mi_approx(config)?.value)
    }
}

fn evaluate(spec: &SweepSpec, index: usize, coords: &[f64], rho_star: f64) -> Result<Vec<f64>, PointError> {
    let p = setup(spec, coords, rho_star)?;
    let noise = spec.noise;
    let mut values = Vec::with_capacity(spec.methods.len() + 1);
    let mut stderr = Vec::new();
    let scheme_config = |scheme: &DesignScheme| -> Result<model::SystemConfig, PointError> {
        let (a, b) = scheme.weights(&p.channel).map_err(PointError::Spec)?;
        Ok(model::validate(p.channel.clone(), noise, design_for(&p.rho, a, b), p.tx)?)
    };
    for m in &spec.methods {
        let v = match m {
            Method::ClosedForm => approx_or_cd(&scheme_config(&spec.scheme)?)?,
            Method::MonteCarlo => {
                let cfg = scheme_config(&spec.scheme)?;
                let settings = spec.mc.with_seed(model::derive_seed(spec.seed, STREAM_POINT, index as u64));
                let est = mi_mc::estimate_mi(&cfg, &settings)?;
                stderr.push(est.std_error);
                est.value
            }
            Method::CdBaseline => mi_closed::mi_cd(&p.channel, &noise, &p.tx).value,
            Method::Max => mi_closed::mi_max(&p.channel, &noise, &p.tx, rho_star)?.value,
            Method::Optimal => approx_or_cd(&scheme_config(&DesignScheme::Optimal)?)?,
            Method::Egc => approx_or_cd(&scheme_config(&DesignScheme::Egc)?)?,
            Method::Mrc => approx_or_cd(&scheme_config(&DesignScheme::Mrc)?)?,
            Method::Gain => mi_closed::gain_finite(&p.channel, &noise, &p.tx, None)?.gain_bits,
            Method::GainAsymptotic => mi_closed::gain_asymptotic(&noise, rho_star).gain_bits,
        };
        values.push(v);
    }
    values.extend(stderr);
    Ok(values)
}

/// Evaluates every grid point (in parallel) and returns rows in grid order.
/// The first failing point, in grid order, aborts the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable, HarnessError> {
    spec.check()?;
    let rho_star = optimal_rho(&spec.noise)?.rho_star;
    let n = spec.len();
    let rows: Vec<Result<Vec<f64>, (usize, Vec<f64>, PointError)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let coords = spec.point(i);
            match evaluate(spec, i, &coords, rho_star) {
                Ok(v) => {
                    let mut row = coords;
                    row.extend(v);
                    Ok(row)
                }
                Err(e) => Err((i, coords, e)),
            }
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for r in rows {
        match r {
            Ok(row) => out.push(row),
            Err((index, coords, e)) => {
                let coords = spec
                    .axes
                    .iter()
                    .zip(&coords)
                    .map(|(a, v)| format!("{}={}", a.var.name(), format_sig(*v, 9)))
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(HarnessError::Point {
                    index,
                    coords,
                    code: e.code(),
                    message: e.message(),
                });
            }
        }
    }
    Ok(SweepTable {
        columns: spec.columns(),
        rows: out,
        coord_columns: spec.axes.len(),
    })
}

/// Runs the sweep and writes its CSV to `spec.out` when set; returns the CSV.
pub fn run_and_write(spec: &SweepSpec) -> Result<String, HarnessError> {
    let csv = run_sweep(spec)?.to_csv();
    if let Some(path) = &spec.out {
        std::fs::write(path, &csv)?;
    }
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(14.966537548123, 9), "14.9665375");
        assert_eq!(format_sig(0.5604631042, 9), "0.560463104");
        assert_eq!(format_sig(100.0, 9), "100");
        assert_eq!(format_sig(1e-9, 9), "1e-9");
        assert_eq!(format_sig(-2.5, 9), "-2.5");
        assert_eq!(format_sig(1234567890.0, 9), "1.23456789e9");
        assert_eq!(format_sig(9.999999999, 9), "10");
        assert_eq!(format_sig(0.0, 9), "0");
    }

    #[test]
    fn grid_order_is_row_major() {
        let spec = SweepSpec {
            axes: vec![
                Axis::new(SweepVar::Power, vec![10.0, 100.0]),
                Axis::new(SweepVar::Rho, vec![0.2, 0.4, 0.6]),
            ],
            ..SweepSpec::default()
        };
        assert_eq!(spec.len(), 6);
        assert_eq!(spec.point(0), vec![10.0, 0.2]);
        assert_eq!(spec.point(4), vec![100.0, 0.4]);
    }

    #[test]
    fn spec_validation() {
        let mut spec = SweepSpec {
            axes: vec![Axis::new(SweepVar::Rho, vec![0.0])],
            ..SweepSpec::default()
        };
        assert!(spec.check().is_err());
        spec.axes = vec![Axis::new(SweepVar::Rho1, vec![0.5])];
        assert!(spec.check().is_err());
        spec.axes = vec![Axis::new(SweepVar::Antennas, vec![2.5])];
        assert!(spec.check().is_err());
        spec.axes = vec![Axis::new(SweepVar::Antennas, vec![2.0])];
        spec.channel = ChannelSpec::Magnitudes(vec![1.0]);
        assert!(spec.check().is_err());
        spec.methods.clear();
        assert!(spec.check().is_err());
    }

    #[test]
    fn failing_point_is_identified() {
        let spec = SweepSpec {
            axes: vec![Axis::new(SweepVar::Rho, vec![0.5, 0.6])],
            channel: ChannelSpec::Magnitudes(vec![1.0, 2.0]),
            scheme: DesignScheme::Explicit {
                alpha: vec![1.0],
                beta: vec![1.0],
            },
            ..SweepSpec::default()
        };
        match run_sweep(&spec) {
            Err(HarnessError::Point { index, code, .. }) => {
                assert_eq!(index, 0);
                assert_eq!(code, "invalid-spec");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rho_one_uses_cd_receiver() {
        let spec = SweepSpec {
            axes: vec![Axis::new(SweepVar::Rho, vec![1.0])],
            methods: vec![Method::ClosedForm, Method::CdBaseline],
            ..SweepSpec::default()
        };
        let t = run_sweep(&spec).unwrap();
        assert_eq!(t.rows[0][1], t.rows[0][2]);
    }

    #[test]
    fn mc_columns_carry_stderr() {
        let spec = SweepSpec {
            axes: vec![Axis::new(SweepVar::Rho, vec![0.5])],
            methods: vec![Method::MonteCarlo, Method::ClosedForm],
            mc: McSettings {
                n_joint: 20_000,
                n_outer: 4,
                n_inner: 2_000,
                ..McSettings::default()
            },
            ..SweepSpec::default()
        };
        let t = run_sweep(&spec).unwrap();
        assert_eq!(t.columns, ["rho", "monte-carlo", "closed-form", "monte-carlo_stderr"]);
        assert!(t.rows[0][3] > 0.0);
    }
}
