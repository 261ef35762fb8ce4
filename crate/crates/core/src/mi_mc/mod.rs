//! Monte Carlo estimation of the exact mutual information
//! `I(X; R1, R2) = H(R1, R2) - H(R1, R2 | X)` with histogram entropy
//! estimates.
//!
//! The joint entropy is estimated from `n_joint` draws of `(Re R1, Im R1, R2)`.
//! The conditional entropy is the average, over `n_outer` sampled symbols
//! `x`, of the entropy of `n_inner` draws with `X = x`.
//!
//! Before binning, each sample set is passed through invertible maps whose
//! Jacobian is accounted for exactly, so the entropy of the original
//! variables is recovered:
//!
//! * joint sets get the envelope shear `R2 -> R2 - c |R1|` (unit Jacobian),
//!   which flattens the thin cone the joint density concentrates on at high
//!   SNR; `c` is the least-squares slope of `R2` on `|R1|`;
//! * every set is then affinely whitened with its sample mean and Cholesky
//!   factor `L`, adding `log2 det L` back to the estimate.
//!
//! Without these maps, equal-width bins on the raw coordinates cannot resolve
//! the joint density at moderate bin counts.

pub mod histogram;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{derive_seed, rng_from_seed, ModelError, ObservationSampler, SystemConfig};
pub use histogram::{estimate_entropy_histogram, HistogramEntropy, PointCloud};

/// Errors from the Monte Carlo estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("all samples identical in dimension {dim}; entropy is -inf")]
    DegenerateRange { dim: usize },
    #[error("histogram entropy supports 1 to 3 dimensions, got {0}")]
    UnsupportedDimension(usize),
    #[error("non-finite sample")]
    NonFiniteSample,
    #[error("invalid Monte Carlo settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl McError {
    pub fn code(&self) -> &'static str {
        match self {
            McError::EmptySampleSet => "empty-sample-set",
            McError::DegenerateRange { .. } => "degenerate-range",
            McError::UnsupportedDimension(_) => "unsupported-dimension",
            McError::NonFiniteSample => "non-finite-sample",
            McError::InvalidSettings(_) => "invalid-settings",
            McError::Model(e) => e.code(),
        }
    }
}

/// Sample counts and histogram resolution for [`estimate_mi`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    /// Samples for the joint entropy.
    pub n_joint: usize,
    /// Conditioning symbols for the conditional entropy.
    pub n_outer: usize,
    /// Samples per conditioning symbol.
    pub n_inner: usize,
    /// Joint histogram bins per dimension; `None` derives it from `n_joint`.
    pub bins_per_dim: Option<usize>,
    /// Conditional histogram bins per dimension; `None` derives it from
    /// `n_inner`.
    pub cond_bins_per_dim: Option<usize>,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_joint: 4_000_000,
            n_outer: 400,
            n_inner: 40_000,
            bins_per_dim: None,
            cond_bins_per_dim: None,
            seed: 0x5EED,
        }
    }
}

impl McSettings {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn check(&self) -> Result<(), McError> {
        if self.n_joint == 0 || self.n_outer == 0 || self.n_inner == 0 {
            return Err(McError::InvalidSettings("sample counts must be at least 1".into()));
        }
        for b in [self.bins_per_dim, self.cond_bins_per_dim].into_iter().flatten() {
            if b < 2 {
                return Err(McError::InvalidSettings(format!(
                    "bins per dimension must be at least 2, got {b}"
                )));
            }
        }
        Ok(())
    }

    pub fn joint_bins(&self, dim: usize) -> usize {
        self.bins_per_dim.unwrap_or_else(|| joint_auto_bins(self.n_joint, dim))
    }

    pub fn cond_bins(&self, dim: usize) -> usize {
        self.cond_bins_per_dim
            .unwrap_or_else(|| auto_bins(self.n_inner, dim))
    }
}

/// Largest bin count with at least ten samples per bin of the full grid,
/// capped at 256 and floored at 2.
pub fn auto_bins(samples: usize, dim: usize) -> usize {
    let b = ((samples as f64 / 10.0).powf(1.0 / dim as f64) + 1e-9).floor() as usize;
    b.clamp(2, 256)
}

/// Joint grids are only sparsely occupied after shearing, so they get a
/// coarser rule: at least a hundred samples per bin of the full grid.
pub fn joint_auto_bins(samples: usize, dim: usize) -> usize {
    if dim == 1 {
        return auto_bins(samples, dim);
    }
    let b = ((samples as f64 / 100.0).powf(1.0 / dim as f64) + 1e-9).floor() as usize;
    b.clamp(2, 256)
}

/// How an MI value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiMethod {
    MonteCarlo,
    ClosedForm,
}

impl MiMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            MiMethod::MonteCarlo => "monte-carlo",
            MiMethod::ClosedForm => "closed-form",
        }
    }
}

/// Diagnostics echoed with a Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct McDiagnostics {
    pub settings: McSettings,
    pub joint_bins: usize,
    pub cond_bins: usize,
    pub joint_entropy_bits: f64,
    pub cond_entropy_bits: f64,
    pub shear_slope: f64,
}

/// An MI value in bits with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    /// Standard error in bits; zero for closed forms.
    pub std_error: f64,
    pub method: MiMethod,
    pub diagnostics: Option<McDiagnostics>,
}

impl MiEstimate {
    pub fn closed_form(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            method: MiMethod::ClosedForm,
            diagnostics: None,
        }
    }
}

const STREAM_JOINT: u64 = 1;
const STREAM_OUTER: u64 = 2;
const STREAM_INNER: u64 = 3;
const SHARD: usize = 1 << 15;

/// Draws `n` joint observations in fixed-size shards, each seeded from
/// `(seed, shard index)`; the output is independent of the thread count.
pub fn sample_joint(config: &SystemConfig, n: usize, seed: u64) -> PointCloud {
    let sampler = ObservationSampler::new(config);
    let dim = config.observation_dim();
    let shards = n.div_ceil(SHARD);
    let parts: Vec<Vec<f64>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let len = SHARD.min(n - s * SHARD);
            let mut rng = rng_from_seed(derive_seed(seed, STREAM_JOINT, s as u64));
            let mut buf = vec![0.0; len * dim];
            for p in buf.chunks_exact_mut(dim) {
                sampler.sample(&mut rng).write_coords(p);
            }
            buf
        })
        .collect();
    PointCloud::from_flat(dim, parts.concat())
}

/// Draws `n` observations with the transmitted symbol fixed to `x`.
pub fn sample_conditional(config: &SystemConfig, x: Complex64, n: usize, seed: u64) -> PointCloud {
    let sampler = ObservationSampler::new(config);
    let dim = config.observation_dim();
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; n * dim];
    for p in buf.chunks_exact_mut(dim) {
        sampler.sample_given_x(x, &mut rng).write_coords(p);
    }
    PointCloud::from_flat(dim, buf)
}

/// Least-squares slope of the last coordinate on `|(p0, p1)|`.
pub fn envelope_slope(cloud: &PointCloud) -> f64 {
    assert_eq!(cloud.dim(), 3);
    let n = cloud.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for p in cloud.points() {
        let e = p[0].hypot(p[1]);
        sx += e;
        sy += p[2];
        sxx += e * e;
        sxy += e * p[2];
    }
    let var = sxx / n - (sx / n).powi(2);
    if var > 0.0 {
        (sxy / n - sx / n * sy / n) / var
    } else {
        0.0
    }
}

/// Applies `p2 -> p2 - slope * |(p0, p1)|` in place. Unit Jacobian.
pub fn envelope_shear(cloud: &mut PointCloud, slope: f64) {
    assert_eq!(cloud.dim(), 3);
    for p in cloud.points_mut() {
        p[2] -= slope * p[0].hypot(p[1]);
    }
}

/// Whitens `cloud` in place with its sample mean and covariance Cholesky
/// factor `L`; returns `log2 det L`, the entropy correction.
pub fn whiten(cloud: &mut PointCloud) -> Result<f64, McError> {
    let dim = cloud.dim();
    let n = cloud.len();
    if n < 2 {
        return Err(McError::EmptySampleSet);
    }
    let mut mean = DVector::<f64>::zeros(dim);
    for p in cloud.points() {
        for d in 0..dim {
            mean[d] += p[d];
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for p in cloud.points() {
        for i in 0..dim {
            let di = p[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            cov[(i, j)] /= (n - 1) as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    if let Some(d) = (0..dim).find(|&d| cov[(d, d)] <= 0.0 || !cov[(d, d)].is_finite()) {
        return Err(McError::DegenerateRange { dim: d });
    }
    let chol = cov
        .cholesky()
        .ok_or(McError::DegenerateRange { dim: dim - 1 })?;
    let l = chol.l();
    let inv = l
        .clone()
        .try_inverse()
        .ok_or(McError::DegenerateRange { dim: dim - 1 })?;
    let mut y = vec![0.0; dim];
    for p in cloud.points_mut() {
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += inv[(i, j)] * (p[j] - mean[j]);
            }
            y[i] = acc;
        }
        p.copy_from_slice(&y);
    }
    Ok((0..dim).map(|i| l[(i, i)].log2()).sum())
}

/// Histogram entropy (bits) of a sample set after whitening, corrected back
/// to the original coordinates.
pub fn whitened_entropy(mut cloud: PointCloud, bins: usize) -> Result<f64, McError> {
    let log_det = whiten(&mut cloud)?;
    Ok(estimate_entropy_histogram(&cloud, bins)?.bits + log_det)
}

/// Joint entropy estimate; returns `(bits, shear slope)`.
pub fn joint_entropy(mut cloud: PointCloud, bins: usize) -> Result<(f64, f64), McError> {
    let slope = if cloud.dim() == 3 {
        let s = envelope_slope(&cloud);
        envelope_shear(&mut cloud, s);
        s
    } else {
        0.0
    };
    Ok((whitened_entropy(cloud, bins)?, slope))
}

/// Monte Carlo estimate of `I(X; R1, R2)` in bits.
pub fn estimate_mi(config: &SystemConfig, settings: &McSettings) -> Result<MiEstimate, McError> {
    settings.check()?;
    let dim = config.observation_dim();
    let joint_bins = settings.joint_bins(dim);
    let cond_bins = settings.cond_bins(dim);

    let joint = sample_joint(config, settings.n_joint, settings.seed);
    let (h_joint, slope) = joint_entropy(joint, joint_bins)?;

    let mut outer_rng = rng_from_seed(derive_seed(settings.seed, STREAM_OUTER, 0));
    let symbols: Vec<Complex64> = (0..settings.n_outer)
        .map(|_| crate::model::complex_normal(&mut outer_rng, 1.0))
        .collect();
    let h_cond: Vec<f64> = symbols
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let seed = derive_seed(settings.seed, STREAM_INNER, i as u64);
            whitened_entropy(sample_conditional(config, x, settings.n_inner, seed), cond_bins)
        })
        .collect::<Result<_, _>>()?;

    let n = h_cond.len() as f64;
    let total: f64 = h_cond.iter().sum();
    let mean_cond = total / n;
    let value = h_joint - mean_cond;
    Ok(MiEstimate {
        value,
        std_error: jackknife_std_error(&h_cond),
        method: MiMethod::MonteCarlo,
        diagnostics: Some(McDiagnostics {
            settings: *settings,
            joint_bins,
            cond_bins,
            joint_entropy_bits: h_joint,
            cond_entropy_bits: mean_cond,
            shear_slope: slope,
        }),
    })
}

/// Leave-one-out jackknife standard error of the mean of `values`.
pub fn jackknife_std_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = values.iter().sum();
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (n - 1) as f64).collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ChannelVector, NoiseProfile, ReceiverDesign, TransmitConfig};

    #[test]
    fn jackknife_of_mean_matches_standard_error() {
        let v = [1.0, 2.0, 4.0, 7.0, 11.0];
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((jackknife_std_error(&v) - sd / n.sqrt()).abs() < 1e-12);
        assert_eq!(jackknife_std_error(&[3.0]), 0.0);
    }

    #[test]
    fn auto_bin_rules() {
        assert_eq!(auto_bins(10_000, 3), 10);
        assert_eq!(auto_bins(2_000_000, 1), 256);
        assert_eq!(auto_bins(5, 3), 2);
        assert_eq!(joint_auto_bins(4_000_000, 3), 34);
        assert_eq!(joint_auto_bins(2_000_000, 1), 256);
    }

    #[test]
    fn settings_validation() {
        let mut s = McSettings::default();
        assert!(s.check().is_ok());
        s.n_inner = 0;
        assert!(s.check().is_err());
        let s = McSettings {
            bins_per_dim: Some(1),
            ..McSettings::default()
        };
        assert!(s.check().is_err());
    }

    #[test]
    fn whitening_recovers_log_det() {
        // Lower-triangular maps commute with the Cholesky whitening, so the
        // shift is exactly log2 det A.
        let cfg = validate(
            ChannelVector::uniform(1, 1.0).unwrap(),
            NoiseProfile::default(),
            ReceiverDesign::shared(0.5, vec![1.0], vec![1.0]),
            TransmitConfig::new(10.0).unwrap(),
        )
        .unwrap();
        let cloud = sample_joint(&cfg, 200_000, 1);
        let h0 = whitened_entropy(cloud.clone(), 30).unwrap();
        let mapped: Vec<f64> = cloud
            .points()
            .flat_map(|p| [2.0 * p[0], p[0] + 0.5 * p[1], 3.0 * p[2] - p[0] + 7.0])
            .collect();
        let h1 = whitened_entropy(PointCloud::from_flat(3, mapped), 30).unwrap();
        assert!((h1 - h0 - (3.0f64).log2()).abs() < 1e-9, "{h0} {h1}");
    }

    #[test]
    fn shear_preserves_volume_and_slope_recovers_line() {
        let mut c = PointCloud::new(3);
        for i in 0..100 {
            let a = i as f64 * 0.1;
            c.push(&[a, 0.0, 2.5 * a + 1.0]);
        }
        assert!((envelope_slope(&c) - 2.5).abs() < 1e-12);
        envelope_shear(&mut c, 2.5);
        assert!(c.points().all(|p| (p[2] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn joint_sampling_is_thread_count_independent() {
        let cfg = validate(
            ChannelVector::uniform(2, 1.0).unwrap(),
            NoiseProfile::default(),
            ReceiverDesign::shared(0.5, vec![0.5, 0.5], vec![0.5, 0.5]),
            TransmitConfig::new(100.0).unwrap(),
        )
        .unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| sample_joint(&cfg, 100_000, 7));
        let b = sample_joint(&cfg, 100_000, 7);
        assert_eq!(a, b);
    }
}
