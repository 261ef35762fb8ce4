//! Receiver model: channel, noise and design types, validation, and exact
//! sampling of the combined observation `(R1, R2)`.
//!
//! Each antenna's RF signal `sqrt(P) h_k X + W'_k` is split with ratio `rho_k`
//! into a coherent (CD) branch, which adds complex conversion noise, and an
//! envelope (ED) branch, which rectifies and adds real rectifier noise. Branch
//! outputs are derotated by the channel phase, normalized by
//! `sqrt(rho_k P)|h_k|` (resp. `sqrt((1 - rho_k) P)|h_k|`) and linearly
//! combined with weights `alpha_k` and `beta_k`.
//!
//! No high-SNR approximation is made anywhere in this module.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Errors raised while validating a receiver configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected} entries, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("channel must have at least one antenna")]
    NoAntennas,
    #[error("antenna {index} has zero gain")]
    ZeroGainAntenna { index: usize },
    #[error("{what}[{index}] = {value} is not a finite value in its domain")]
    InvalidValue {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("splitting ratio rho[{index}] = {value} lies on the boundary {{0, 1}}; use the CD-only or ED-only mode instead")]
    BoundaryRho { index: usize, value: f64 },
    #[error("{which} weights sum to zero")]
    ZeroWeightSum { which: &'static str },
    #[error("{which}[{index}] = {value} is negative; combining weights must be nonnegative")]
    NegativeWeight {
        which: &'static str,
        index: usize,
        value: f64,
    },
    #[error("transmit power must be positive and finite, got {0}")]
    NonpositivePower(f64),
    #[error("invalid noise profile: {0}")]
    InvalidNoise(String),
}

impl ModelError {
    /// Short machine-readable code used on the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::DimensionMismatch { .. } => "dimension-mismatch",
            ModelError::NoAntennas => "no-antennas",
            ModelError::ZeroGainAntenna { .. } => "zero-gain-antenna",
            ModelError::InvalidValue { .. } => "invalid-value",
            ModelError::BoundaryRho { .. } => "boundary-rho",
            ModelError::ZeroWeightSum { .. } => "zero-weight-sum",
            ModelError::NegativeWeight { .. } => "negative-weight",
            ModelError::NonpositivePower(_) => "nonpositive-power",
            ModelError::InvalidNoise(_) => "invalid-noise",
        }
    }
}

/// Per-antenna channel coefficients `h_k = |h_k| e^{j phi_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    magnitudes: Vec<f64>,
    phases: Vec<f64>,
}

impl ChannelVector {
    pub fn new(magnitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self, ModelError> {
        if magnitudes.is_empty() {
            return Err(ModelError::NoAntennas);
        }
        if phases.len() != magnitudes.len() {
            return Err(ModelError::DimensionMismatch {
                what: "phases",
                expected: magnitudes.len(),
                got: phases.len(),
            });
        }
        for (index, &m) in magnitudes.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(ModelError::InvalidValue {
                    what: "magnitude",
                    index,
                    value: m,
                });
            }
            if m == 0.0 {
                return Err(ModelError::ZeroGainAntenna { index });
            }
        }
        if let Some((index, &value)) = phases.iter().enumerate().find(|(_, p)| !p.is_finite()) {
            return Err(ModelError::InvalidValue {
                what: "phase",
                index,
                value,
            });
        }
        Ok(Self { magnitudes, phases })
    }

    /// Channel with the given magnitudes and all phases zero.
    pub fn from_magnitudes(magnitudes: Vec<f64>) -> Result<Self, ModelError> {
        let phases = vec![0.0; magnitudes.len()];
        Self::new(magnitudes, phases)
    }

    /// `k` antennas with identical magnitude.
    pub fn uniform(k: usize, magnitude: f64) -> Result<Self, ModelError> {
        Self::from_magnitudes(vec![magnitude; k])
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// `sum_k |h_k|^2`.
    pub fn power_gain(&self) -> f64 {
        self.magnitudes.iter().map(|m| m * m).sum()
    }

    pub fn with_phases(&self, phases: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(self.magnitudes.clone(), phases)
    }
}

/// Antenna, conversion and rectifier noise powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    pub sigma_a_sq: f64,
    pub sigma_cov_sq: f64,
    pub sigma_rec_sq: f64,
}

impl NoiseProfile {
    pub fn new(sigma_a_sq: f64, sigma_cov_sq: f64, sigma_rec_sq: f64) -> Result<Self, ModelError> {
        let noise = Self {
            sigma_a_sq,
            sigma_cov_sq,
            sigma_rec_sq,
        };
        noise.check()?;
        Ok(noise)
    }

    /// Unchecked constructor for the sampler's noiseless limit and tests.
    pub fn new_unchecked(sigma_a_sq: f64, sigma_cov_sq: f64, sigma_rec_sq: f64) -> Self {
        Self {
            sigma_a_sq,
            sigma_cov_sq,
            sigma_rec_sq,
        }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let all = [self.sigma_a_sq, self.sigma_cov_sq, self.sigma_rec_sq];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::InvalidNoise(format!(
                "noise powers must be finite and nonnegative, got {:?}",
                all
            )));
        }
        if self.sigma_cov_sq <= 0.0 || self.sigma_rec_sq <= 0.0 {
            return Err(ModelError::InvalidNoise(
                "conversion and rectifier noise powers must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// The splitting receiver beats the CD receiver only when this holds.
    pub fn splitting_favourable(&self) -> bool {
        self.sigma_cov_sq > 4.0 * self.sigma_rec_sq
    }
}

impl Default for NoiseProfile {
    /// `sigma_cov^2 = 1`, `sigma_A^2 = sigma_rec^2 = 0.01`.
    fn default() -> Self {
        Self {
            sigma_a_sq: 0.01,
            sigma_cov_sq: 1.0,
            sigma_rec_sq: 0.01,
        }
    }
}

/// Which branches the receiver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverMode {
    /// Every antenna split with `rho_k` strictly inside `(0, 1)`.
    Splitting,
    /// Conventional coherent receiver (`rho = 1` everywhere); only `R1` exists.
    CdOnly,
    /// Envelope-only receiver (`rho = 0` everywhere); only `R2` exists.
    EdOnly,
}

/// Splitting ratios and combining weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverDesign {
    pub mode: ReceiverMode,
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ReceiverDesign {
    pub fn splitting(rho: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>) -> Self {
        Self {
            mode: ReceiverMode::Splitting,
            rho,
            alpha,
            beta,
        }
    }

    /// Same ratio at every antenna.
    pub fn shared(rho: f64, alpha: Vec<f64>, beta: Vec<f64>) -> Self {
        let k = alpha.len();
        Self::splitting(vec![rho; k], alpha, beta)
    }

    pub fn cd_only(alpha: Vec<f64>) -> Self {
        let k = alpha.len();
        Self {
            mode: ReceiverMode::CdOnly,
            rho: vec![1.0; k],
            alpha,
            beta: vec![0.0; k],
        }
    }

    pub fn ed_only(beta: Vec<f64>) -> Self {
        let k = beta.len();
        Self {
            mode: ReceiverMode::EdOnly,
            rho: vec![0.0; k],
            alpha: vec![0.0; k],
            beta,
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    fn check(&self, k: usize) -> Result<(), ModelError> {
        for (what, v) in [("rho", &self.rho), ("alpha", &self.alpha), ("beta", &self.beta)] {
            if v.len() != k {
                return Err(ModelError::DimensionMismatch {
                    what,
                    expected: k,
                    got: v.len(),
                });
            }
        }
        let uses_cd = self.mode != ReceiverMode::EdOnly;
        let uses_ed = self.mode != ReceiverMode::CdOnly;
        if self.mode == ReceiverMode::Splitting {
            for (index, &r) in self.rho.iter().enumerate() {
                if !r.is_finite() || !(0.0..=1.0).contains(&r) {
                    return Err(ModelError::InvalidValue {
                        what: "rho",
                        index,
                        value: r,
                    });
                }
                if r == 0.0 || r == 1.0 {
                    return Err(ModelError::BoundaryRho { index, value: r });
                }
            }
        }
        if uses_cd {
            check_weights("alpha", &self.alpha)?;
        }
        if uses_ed {
            check_weights("beta", &self.beta)?;
        }
        Ok(())
    }
}

fn check_weights(which: &'static str, w: &[f64]) -> Result<(), ModelError> {
    for (index, &value) in w.iter().enumerate() {
        if !value.is_finite() {
            return Err(ModelError::InvalidValue {
                what: which,
                index,
                value,
            });
        }
        if value < 0.0 {
            return Err(ModelError::NegativeWeight {
                which,
                index,
                value,
            });
        }
    }
    if w.iter().sum::<f64>() == 0.0 {
        return Err(ModelError::ZeroWeightSum { which });
    }
    Ok(())
}

/// Average transmit power `P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitConfig {
    power: f64,
}

impl TransmitConfig {
    pub fn new(power: f64) -> Result<Self, ModelError> {
        if !power.is_finite() || power <= 0.0 {
            return Err(ModelError::NonpositivePower(power));
        }
        Ok(Self { power })
    }

    pub fn power(&self) -> f64 {
        self.power
    }
}

/// A validated `(channel, noise, design, tx)` bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    channel: ChannelVector,
    noise: NoiseProfile,
    design: ReceiverDesign,
    tx: TransmitConfig,
}

/// Checks every type invariant and bundles the configuration.
pub fn validate(
    channel: ChannelVector,
    noise: NoiseProfile,
    design: ReceiverDesign,
    tx: TransmitConfig,
) -> Result<SystemConfig, ModelError> {
    noise.check()?;
    // Re-check the channel in case it was built by hand.
    let channel = ChannelVector::new(channel.magnitudes, channel.phases)?;
    let tx = TransmitConfig::new(tx.power)?;
    design.check(channel.len())?;
    Ok(SystemConfig {
        channel,
        noise,
        design,
        tx,
    })
}

impl SystemConfig {
    pub fn channel(&self) -> &ChannelVector {
        &self.channel
    }

    pub fn noise(&self) -> &NoiseProfile {
        &self.noise
    }

    pub fn design(&self) -> &ReceiverDesign {
        &self.design
    }

    pub fn tx(&self) -> &TransmitConfig {
        &self.tx
    }

    pub fn mode(&self) -> ReceiverMode {
        self.design.mode
    }

    pub fn antennas(&self) -> usize {
        self.channel.len()
    }

    /// Dimension of the real observation vector: 3 when splitting, 2 for
    /// CD-only, 1 for ED-only.
    pub fn observation_dim(&self) -> usize {
        match self.design.mode {
            ReceiverMode::Splitting => 3,
            ReceiverMode::CdOnly => 2,
            ReceiverMode::EdOnly => 1,
        }
    }

    /// Copy with a different design, revalidated.
    pub fn with_design(&self, design: ReceiverDesign) -> Result<Self, ModelError> {
        validate(self.channel.clone(), self.noise, design, self.tx)
    }

    /// Copy with a different transmit power.
    pub fn with_power(&self, power: f64) -> Result<Self, ModelError> {
        validate(
            self.channel.clone(),
            self.noise,
            self.design.clone(),
            TransmitConfig::new(power)?,
        )
    }

    /// Variance of the combined conversion noise in `R1`
    /// (`sum_k alpha_k^2 sigma_cov^2 / (rho_k P |h_k|^2)`), i.e. the
    /// single-noise form of the CD combiner.
    pub fn combined_conversion_variance(&self) -> f64 {
        let p = self.tx.power;
        self.design
            .alpha
            .iter()
            .zip(&self.design.rho)
            .zip(self.channel.magnitudes())
            .map(|((a, r), h)| a * a * self.noise.sigma_cov_sq / (r * p * h * h))
            .sum()
    }

    /// Variance of the combined rectifier noise in `R2`
    /// (`sum_k beta_k^2 sigma_rec^2 / ((1 - rho_k) P |h_k|^2)`).
    pub fn combined_rectifier_variance(&self) -> f64 {
        let p = self.tx.power;
        self.design
            .beta
            .iter()
            .zip(&self.design.rho)
            .zip(self.channel.magnitudes())
            .map(|((b, r), h)| b * b * self.noise.sigma_rec_sq / ((1.0 - r) * p * h * h))
            .sum()
    }
}

/// One channel use: the transmitted symbol and the combined observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: Complex64,
    /// Combined CD output; absent for the ED-only receiver.
    pub r1: Option<Complex64>,
    /// Combined ED output; absent for the CD-only receiver.
    pub r2: Option<f64>,
}

impl Observation {
    /// Writes the real coordinates `(Re R1, Im R1, R2)` (present parts only).
    pub fn write_coords(&self, out: &mut [f64]) -> usize {
        let mut n = 0;
        if let Some(r1) = self.r1 {
            out[0] = r1.re;
            out[1] = r1.im;
            n = 2;
        }
        if let Some(r2) = self.r2 {
            out[n] = r2;
            n += 1;
        }
        n
    }
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

#[derive(Debug, Clone)]
struct Branch {
    gain: f64,
    derotate: Complex64,
    sqrt_rho: f64,
    sqrt_one_minus_rho: f64,
    cd_norm: f64,
    ed_norm: f64,
    alpha: f64,
    beta: f64,
}

/// Draws observations from a validated configuration.
///
/// Works on the physical branch signals: the antenna noise `W'_k` and the
/// conversion noise `Z'_k` are drawn in the received frame, and the CD output
/// is derotated by `e^{-j phi_k}` before normalization and combining.
#[derive(Debug, Clone)]
pub struct ObservationSampler {
    mode: ReceiverMode,
    sd_antenna: f64,
    var_antenna: f64,
    var_cov: f64,
    sd_rec: f64,
    branches: Vec<Branch>,
}

impl ObservationSampler {
    pub fn new(config: &SystemConfig) -> Self {
        let p = config.tx.power;
        let sqrt_p = p.sqrt();
        let mode = config.design.mode;
        let branches = (0..config.antennas())
            .map(|k| {
                let h = config.channel.magnitudes[k];
                let phi = config.channel.phases[k];
                let rho = match mode {
                    ReceiverMode::Splitting => config.design.rho[k],
                    ReceiverMode::CdOnly => 1.0,
                    ReceiverMode::EdOnly => 0.0,
                };
                let sqrt_rho = rho.sqrt();
                let sqrt_one_minus_rho = (1.0 - rho).sqrt();
                Branch {
                    gain: sqrt_p * h,
                    derotate: Complex64::from_polar(1.0, -phi),
                    sqrt_rho,
                    sqrt_one_minus_rho,
                    cd_norm: if rho > 0.0 { 1.0 / (sqrt_rho * sqrt_p * h) } else { 0.0 },
                    ed_norm: if rho < 1.0 {
                        1.0 / (sqrt_one_minus_rho * sqrt_p * h)
                    } else {
                        0.0
                    },
                    alpha: config.design.alpha[k],
                    beta: config.design.beta[k],
                }
            })
            .collect();
        Self {
            mode,
            sd_antenna: config.noise.sigma_a_sq.sqrt(),
            var_antenna: config.noise.sigma_a_sq,
            var_cov: config.noise.sigma_cov_sq,
            sd_rec: config.noise.sigma_rec_sq.sqrt(),
            branches,
        }
    }

    pub fn mode(&self) -> ReceiverMode {
        self.mode
    }

    /// Draws `X ~ CN(0, 1)` and the matching observation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Observation {
        let x = complex_normal(rng, 1.0);
        self.sample_given_x(x, rng)
    }

    /// Observation for a fixed transmitted symbol.
    pub fn sample_given_x<R: Rng + ?Sized>(&self, x: Complex64, rng: &mut R) -> Observation {
        let uses_cd = self.mode != ReceiverMode::EdOnly;
        let uses_ed = self.mode != ReceiverMode::CdOnly;
        let mut r1 = Complex64::new(0.0, 0.0);
        let mut r2 = 0.0;
        for b in &self.branches {
            let w = if self.sd_antenna > 0.0 {
                complex_normal(rng, self.var_antenna)
            } else {
                Complex64::new(0.0, 0.0)
            };
            // Received RF signal at antenna k before splitting.
            let rx = b.gain * b.derotate.conj() * x + w;
            if uses_cd {
                let z = if self.var_cov > 0.0 {
                    complex_normal(rng, self.var_cov)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let y1 = b.sqrt_rho * rx + z;
                r1 += b.alpha * b.cd_norm * b.derotate * y1;
            }
            if uses_ed {
                let n = if self.sd_rec > 0.0 {
                    self.sd_rec * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                let y2 = b.sqrt_one_minus_rho * rx.norm() + n;
                r2 += b.beta * b.ed_norm * y2;
            }
        }
        Observation {
            x,
            r1: uses_cd.then_some(r1),
            r2: uses_ed.then_some(r2),
        }
    }
}

/// Deterministic RNG for a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from `(master, stream, index)` with
/// SplitMix64 finalization.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}

/// One observation with `X ~ CN(0, 1)`, reproducible from `seed`.
pub fn sample_observation(config: &SystemConfig, seed: u64) -> Observation {
    let mut rng = rng_from_seed(seed);
    ObservationSampler::new(config).sample(&mut rng)
}

/// One observation with `X` fixed to `x`, reproducible from `seed`.
pub fn sample_observation_given_x(config: &SystemConfig, x: Complex64, seed: u64) -> Observation {
    let mut rng = rng_from_seed(seed);
    ObservationSampler::new(config).sample_given_x(x, &mut rng)
}
