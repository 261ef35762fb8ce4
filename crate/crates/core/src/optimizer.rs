//! Optimal splitting ratio and combining weights, baseline combiners, and a
//! numerical optimizer plus local-optimality check used to verify the closed
//! forms.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::mi_closed::{mi_approx_parts, s_of_rho, Regime};
use crate::model::{
    derive_seed, rng_from_seed, ChannelVector, ModelError, NoiseProfile, ReceiverDesign, TransmitConfig,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("combining constant must be positive and finite, got {0}")]
    InvalidConstant(f64),
    #[error("local optimality check failed: {reason}")]
    CheckFailed { reason: String, direction: Vec<f64> },
    #[error("invalid optimizer settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl OptimizerError {
    pub fn code(&self) -> &'static str {
        match self {
            OptimizerError::InvalidConstant(_) => "invalid-channel",
            OptimizerError::CheckFailed { .. } => "check-failed",
            OptimizerError::InvalidSettings(_) => "invalid-settings",
            OptimizerError::Model(e) => e.code(),
        }
    }
}

/// Lower and upper bound of every numerical search over a splitting ratio.
pub const RHO_BOUNDS: (f64, f64) = (1e-6, 1.0 - 1e-6);

/// Optimal shared splitting ratio and the quantities it is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoSolution {
    pub rho_star: f64,
    /// Root of the stationarity condition inside `(0, 1)`; `None` in the
    /// CD-degenerate regime.
    pub upsilon: Option<f64>,
    /// The other stationary root, lying outside `(0, 1)`.
    pub phi: Option<f64>,
    pub psi: f64,
    pub regime: Regime,
    /// The closed form was unusable and `rho_star` came from a golden-section
    /// search on `s`.
    pub fallback: bool,
}

/// Both roots `(upsilon, phi)` of the stationarity condition of `s`, or
/// `None` when the shared denominator vanishes (relative to the noise scale).
pub fn stationary_roots(noise: &NoiseProfile) -> (Option<(f64, f64)>, f64) {
    let (sa, sc, sr) = (noise.sigma_a_sq, noise.sigma_cov_sq, noise.sigma_rec_sq);
    let psi = sc * sc * (sa + sc - 2.0 * sr) * (sc - 2.0 * sr) * sr * (sa + 2.0 * sr);
    let den = sa * (sc - 4.0 * sr) * (sc - 2.0 * sr);
    let scale = sa.max(sc).max(sr).powi(3);
    if den.abs() <= 1e-12 * scale || psi < 0.0 {
        return (None, psi);
    }
    let lead = sc * (sc - 2.0 * sr) * (sa + 2.0 * sr);
    let root = (2.0 * psi).sqrt();
    (Some(((lead - root) / den, (lead + root) / den)), psi)
}

/// Splitting ratio minimizing the effective noise `s(rho)`; 1 when splitting
/// cannot help.
pub fn optimal_rho(noise: &NoiseProfile) -> Result<RhoSolution, ModelError> {
    noise.check()?;
    let (roots, psi) = stationary_roots(noise);
    let regime = Regime::of(noise);
    if regime == Regime::CdDegenerate {
        return Ok(RhoSolution {
            rho_star: 1.0,
            upsilon: None,
            phi: roots.map(|r| r.1),
            psi,
            regime,
            fallback: false,
        });
    }
    match roots {
        Some((upsilon, phi)) if upsilon.is_finite() && upsilon > 0.0 && upsilon < 1.0 => Ok(RhoSolution {
            rho_star: upsilon,
            upsilon: Some(upsilon),
            phi: Some(phi),
            psi,
            regime,
            fallback: false,
        }),
        _ => {
            let (x, _) = golden_section_minimize(|r| s_of_rho(noise, r), RHO_BOUNDS.0, RHO_BOUNDS.1, 1e-12);
            Ok(RhoSolution {
                rho_star: x,
                upsilon: Some(x),
                phi: roots.map(|r| r.1),
                psi,
                regime,
                fallback: true,
            })
        }
    }
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`;
/// returns `(argmin, min)`.
pub fn golden_section_minimize<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Optimal weights `c_alpha |h_k|^2` and `c_beta |h_k|^2`.
pub fn optimal_weights(
    channel: &ChannelVector,
    c_alpha: f64,
    c_beta: f64,
) -> Result<(Vec<f64>, Vec<f64>), OptimizerError> {
    for c in [c_alpha, c_beta] {
        if !(c.is_finite() && c > 0.0) {
            return Err(OptimizerError::InvalidConstant(c));
        }
    }
    let g = channel.magnitudes().iter().map(|h| h * h);
    Ok((g.clone().map(|v| c_alpha * v).collect(), g.map(|v| c_beta * v).collect()))
}

/// Optimal weights normalized to sum to one.
pub fn canonical_weights(channel: &ChannelVector) -> Vec<f64> {
    let c = 1.0 / channel.power_gain();
    channel.magnitudes().iter().map(|h| c * h * h).collect()
}

/// Equal gain combining weights `1/K`.
pub fn egc_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Maximum ratio combining weights `|h_k|`.
pub fn mrc_weights(channel: &ChannelVector) -> Vec<f64> {
    channel.magnitudes().to_vec()
}

/// Closed-form optimal design.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalDesign {
    pub rho_star: f64,
    pub upsilon: Option<f64>,
    pub psi: f64,
    pub alpha_star: Vec<f64>,
    pub beta_star: Vec<f64>,
    pub regime: Regime,
}

impl OptimalDesign {
    /// The design as a receiver configuration; CD-only in the degenerate
    /// regime.
    pub fn receiver_design(&self) -> ReceiverDesign {
        match self.regime {
            Regime::CdDegenerate => ReceiverDesign::cd_only(self.alpha_star.clone()),
            Regime::SplittingOptimal => {
                ReceiverDesign::shared(self.rho_star, self.alpha_star.clone(), self.beta_star.clone())
            }
        }
    }
}

pub fn optimal_design(channel: &ChannelVector, noise: &NoiseProfile) -> Result<OptimalDesign, ModelError> {
    let rho = optimal_rho(noise)?;
    let w = canonical_weights(channel);
    Ok(OptimalDesign {
        rho_star: rho.rho_star,
        upsilon: rho.upsilon,
        psi: rho.psi,
        alpha_star: w.clone(),
        beta_star: w,
        regime: rho.regime,
    })
}

/// Settings for [`numeric_optimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericSettings {
    pub restarts: usize,
    /// Convergence threshold on the per-sweep MI improvement, in bits.
    pub tolerance: f64,
    /// Optimize one ratio per antenna instead of a shared ratio.
    pub per_antenna_rho: bool,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            restarts: 8,
            tolerance: 1e-12,
            per_antenna_rho: false,
            max_sweeps: 100,
            seed: 0x0971,
        }
    }
}

/// Outcome of [`numeric_optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NumericResult {
    /// Best design, weights normalized to sum to one.
    pub design: ReceiverDesign,
    pub mi: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub restart: usize,
}

const STREAM_RESTART: u64 = 10;
const LOG_WEIGHT_SPAN: f64 = 4.0;
const LINE_TOL: f64 = 1e-11;
const POLISH_ITERS: usize = 20;

struct Problem<'a> {
    h: &'a [f64],
    noise: &'a NoiseProfile,
    power: f64,
    per_antenna_rho: bool,
}

/// Parameters: ratios (one or K), then log-weights for alpha and beta.
impl Problem<'_> {
    fn k(&self) -> usize {
        self.h.len()
    }

    fn n_rho(&self) -> usize {
        if self.per_antenna_rho {
            self.k()
        } else {
            1
        }
    }

    fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.k();
        let nr = self.n_rho();
        let rho = if self.per_antenna_rho {
            x[..k].to_vec()
        } else {
            vec![x[0]; k]
        };
        let alpha = x[nr..nr + k].iter().map(|v| v.exp()).collect();
        let beta = x[nr + k..].iter().map(|v| v.exp()).collect();
        (rho, alpha, beta)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (rho, alpha, beta) = self.unpack(x);
        mi_approx_parts(self.h, self.noise, self.power, &rho, &alpha, &beta)
    }

    fn bounds(&self, i: usize, x: &[f64]) -> (f64, f64) {
        if i < self.n_rho() {
            RHO_BOUNDS
        } else {
            (x[i] - LOG_WEIGHT_SPAN, x[i] + LOG_WEIGHT_SPAN)
        }
    }

    /// Shifts each log-weight block so its last entry is zero.
    fn normalize(&self, x: &mut [f64]) {
        let k = self.k();
        let nr = self.n_rho();
        for block in [nr..nr + k, nr + k..nr + 2 * k] {
            let m = x[block.end - 1];
            for v in &mut x[block] {
                *v -= m;
            }
        }
    }

    /// Largest step `t` keeping `x + t d` inside the ratio bounds.
    fn max_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut t = f64::INFINITY;
        for i in 0..self.n_rho() {
            if d[i] > 0.0 {
                t = t.min((RHO_BOUNDS.1 - x[i]) / d[i]);
            } else if d[i] < 0.0 {
                t = t.min((RHO_BOUNDS.0 - x[i]) / d[i]);
            }
        }
        t.min(LOG_WEIGHT_SPAN)
    }

    fn ascend(&self, mut x: Vec<f64>, settings: &NumericSettings) -> (Vec<f64>, f64, bool, usize) {
        let mut best = self.value(&x);
        let n = x.len();
        for sweep in 1..=settings.max_sweeps {
            let start = x.clone();
            let before = best;
            for i in 0..n {
                let (lo, hi) = self.bounds(i, &x);
                let mut y = x.clone();
                let (arg, neg) = golden_section_minimize(
                    |t| {
                        y[i] = t;
                        -self.value(&y)
                    },
                    lo,
                    hi,
                    LINE_TOL,
                );
                if -neg > best {
                    x[i] = arg;
                    best = -neg;
                }
            }
            // Line search along the sweep's net displacement.
            let d: Vec<f64> = x.iter().zip(&start).map(|(a, b)| a - b).collect();
            let t_max = self.max_step(&x, &d);
            if d.iter().any(|v| *v != 0.0) && t_max > 0.0 {
                let mut y = x.clone();
                let (t, neg) = golden_section_minimize(
                    |t| {
                        for j in 0..n {
                            y[j] = x[j] + t * d[j];
                        }
                        -self.value(&y)
                    },
                    0.0,
                    t_max,
                    LINE_TOL,
                );
                if -neg > best {
                    for j in 0..n {
                        x[j] += t * d[j];
                    }
                    best = -neg;
                }
            }
            self.normalize(&mut x);
            if best - before <= settings.tolerance {
                return (x, best, true, sweep);
            }
        }
        (x, best, false, settings.max_sweeps)
    }
}

impl Problem<'_> {
    /// Newton refinement on the gauge-fixed parameters (the last log-weight
    /// of each block is held at zero), with a finite-difference Hessian and a
    /// backtracking step. Stops when a step no longer improves the value.
    fn polish(&self, mut x: Vec<f64>, mut best: f64) -> (Vec<f64>, f64, bool) {
        let k = self.k();
        let nr = self.n_rho();
        let free: Vec<usize> = (0..nr)
            .chain(nr..nr + k - 1)
            .chain(nr + k..nr + 2 * k - 1)
            .collect();
        let m = free.len();
        let e = 1e-4;
        let mut converged = false;
        for _ in 0..POLISH_ITERS {
            let shifted = |x: &[f64], i: usize, di: f64, j: usize, dj: f64| {
                let mut y = x.to_vec();
                y[free[i]] += di;
                y[free[j]] += dj;
                self.value(&y)
            };
            let mut g = DVector::<f64>::zeros(m);
            let mut hess = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                let up = shifted(&x, i, e, i, 0.0);
                let dn = shifted(&x, i, -e, i, 0.0);
                g[i] = (up - dn) / (2.0 * e);
                hess[(i, i)] = (up - 2.0 * best + dn) / (e * e);
                for j in 0..i {
                    let v = (shifted(&x, i, e, j, e) - shifted(&x, i, e, j, -e) - shifted(&x, i, -e, j, e)
                        + shifted(&x, i, -e, j, -e))
                        / (4.0 * e * e);
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                }
            }
            let Some(chol) = (-hess).cholesky() else {
                break;
            };
            let step = chol.solve(&g);
            let mut d = vec![0.0; x.len()];
            for (i, &f) in free.iter().enumerate() {
                d[f] = step[i];
            }
            let mut t = self.max_step(&x, &d).min(1.0);
            let mut improved = false;
            for _ in 0..30 {
                let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let v = self.value(&y);
                if v > best {
                    x = y;
                    best = v;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if step.norm() < 1e-8 {
                converged = true;
            }
            if !improved || step.norm() < 1e-12 {
                break;
            }
        }
        (x, best, converged)
    }
}

/// Maximizes the high-SNR MI approximation over splitting ratios and weights
/// by multi-start coordinate ascent, finished with a Newton polish. Restarts run in parallel and are merged
/// deterministically: highest MI first, then the smallest deviation from the
/// closed-form ratio, then the lowest restart index.
pub fn numeric_optimize(
    channel: &ChannelVector,
    noise: &NoiseProfile,
    tx: &TransmitConfig,
    settings: &NumericSettings,
) -> Result<NumericResult, OptimizerError> {
    noise.check()?;
    if settings.restarts == 0 || settings.max_sweeps == 0 {
        return Err(OptimizerError::InvalidSettings(
            "restarts and max_sweeps must be at least 1".into(),
        ));
    }
    let problem = Problem {
        h: channel.magnitudes(),
        noise,
        power: tx.power(),
        per_antenna_rho: settings.per_antenna_rho,
    };
    let reference = optimal_rho(noise)?.rho_star;
    let k = problem.k();
    let nr = problem.n_rho();
    let runs: Vec<(usize, Vec<f64>, f64, bool, usize)> = (0..settings.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(settings.seed, STREAM_RESTART, r as u64));
            let mut x = Vec::with_capacity(nr + 2 * k);
            for _ in 0..nr {
                x.push(rng.random_range(0.05..0.95));
            }
            for _ in 0..2 * k {
                x.push(rng.random_range(-1.5..1.5));
            }
            let (x, v, conv, sweeps) = problem.ascend(x, settings);
            let (x, v, polished) = problem.polish(x, v);
            (r, x, v, conv || polished, sweeps)
        })
        .collect();
    let deviation = |x: &[f64]| x[..nr].iter().map(|r| (r - reference).abs()).fold(0.0, f64::max);
    let best = runs
        .into_iter()
        .min_by(|a, b| {
            b.2.total_cmp(&a.2)
                .then(deviation(&a.1).total_cmp(&deviation(&b.1)))
                .then(a.0.cmp(&b.0))
        })
        .expect("at least one restart");
    let (rho, alpha, beta) = problem.unpack(&best.1);
    let sa: f64 = alpha.iter().sum();
    let sb: f64 = beta.iter().sum();
    Ok(NumericResult {
        design: ReceiverDesign::splitting(
            rho,
            alpha.iter().map(|v| v / sa).collect(),
            beta.iter().map(|v| v / sb).collect(),
        ),
        mi: best.2,
        converged: best.3,
        sweeps: best.4,
        restart: best.0,
    })
}

/// Settings for [`stationarity_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaritySettings {
    /// Finite-difference step for the gradient.
    pub gradient_step: f64,
    /// Largest tolerated gradient component, bits per unit parameter.
    pub gradient_tolerance: f64,
    /// Norm of each random perturbation.
    pub perturbation_step: f64,
    pub perturbations: usize,
    /// Relative size of the pure scaling probe.
    pub scaling_step: f64,
    pub scaling_tolerance: f64,
    pub seed: u64,
}

impl Default for StationaritySettings {
    fn default() -> Self {
        Self {
            gradient_step: 1e-4,
            gradient_tolerance: 1e-3,
            perturbation_step: 1e-2,
            perturbations: 100,
            scaling_step: 1e-2,
            scaling_tolerance: 1e-9,
            seed: 0x57A7,
        }
    }
}

/// Outcome of [`stationarity_check`]. Parameters are ordered
/// `(rho_1..rho_K, alpha_1..alpha_K, beta_1..beta_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub max_gradient: f64,
    pub perturbations: usize,
    pub decreased: usize,
    /// Smallest MI decrease over the perturbations (negative if some rose).
    pub min_decrease: f64,
    pub scaling_change: f64,
}

const STREAM_PERTURB: u64 = 11;

/// Checks that `design` is a local maximum of the MI approximation: a
/// vanishing finite-difference gradient, strict decrease along random
/// perturbations orthogonal to the weight scaling directions, and no change
/// along those directions. Weights are normalized to sum to one first.
pub fn stationarity_check(
    design: &ReceiverDesign,
    channel: &ChannelVector,
    noise: &NoiseProfile,
    tx: &TransmitConfig,
    settings: &StationaritySettings,
) -> Result<StationarityReport, OptimizerError> {
    let config = crate::model::validate(channel.clone(), *noise, design.clone(), *tx)?;
    if config.mode() != crate::model::ReceiverMode::Splitting {
        return Err(OptimizerError::InvalidSettings("stationarity needs a splitting design".into()));
    }
    let k = channel.len();
    let h = channel.magnitudes();
    let p = tx.power();
    let sa: f64 = design.alpha.iter().sum();
    let sb: f64 = design.beta.iter().sum();
    let mut theta: Vec<f64> = design.rho.clone();
    theta.extend(design.alpha.iter().map(|a| a / sa));
    theta.extend(design.beta.iter().map(|b| b / sb));
    let f = |t: &[f64]| mi_approx_parts(h, noise, p, &t[..k], &t[k..2 * k], &t[2 * k..]);
    let value = f(&theta);

    let gs = settings.gradient_step;
    let gradient: Vec<f64> = (0..3 * k)
        .map(|i| {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += gs;
            dn[i] -= gs;
            (f(&up) - f(&dn)) / (2.0 * gs)
        })
        .collect();
    let max_gradient = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if max_gradient > settings.gradient_tolerance {
        let i = gradient
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut direction = vec![0.0; 3 * k];
        direction[i] = 1.0;
        return Err(OptimizerError::CheckFailed {
            reason: format!("gradient component {i} is {:.3e}", gradient[i]),
            direction,
        });
    }

    // Orthonormal basis of the two scaling directions (disjoint supports).
    let mut scale_dirs = vec![vec![0.0; 3 * k], vec![0.0; 3 * k]];
    for (d, block) in scale_dirs.iter_mut().zip([k..2 * k, 2 * k..3 * k]) {
        let norm = theta[block.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in block {
            d[i] = theta[i] / norm;
        }
    }

    let mut rng = rng_from_seed(derive_seed(settings.seed, STREAM_PERTURB, 0));
    let mut decreased = 0;
    let mut min_decrease = f64::INFINITY;
    for _ in 0..settings.perturbations {
        let mut d: Vec<f64> = (0..3 * k).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        for s in &scale_dirs {
            let dot: f64 = d.iter().zip(s).map(|(a, b)| a * b).sum();
            for (x, y) in d.iter_mut().zip(s) {
                *x -= dot * y;
            }
        }
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let moved: Vec<f64> = theta
            .iter()
            .zip(&d)
            .map(|(t, v)| t + settings.perturbation_step * v / norm)
            .collect();
        let drop = value - f(&moved);
        min_decrease = min_decrease.min(drop);
        if drop > 0.0 {
            decreased += 1;
        } else {
            return Err(OptimizerError::CheckFailed {
                reason: format!("perturbation increased the MI by {:.3e} bits", -drop),
                direction: d.iter().map(|v| v / norm).collect(),
            });
        }
    }

    let mut scaled = theta.clone();
    for v in &mut scaled[k..2 * k] {
        *v *= 1.0 + settings.scaling_step;
    }
    let scaling_change = (f(&scaled) - value).abs();
    if scaling_change > settings.scaling_tolerance {
        return Err(OptimizerError::CheckFailed {
            reason: format!("scaling the CD weights changed the MI by {scaling_change:.3e} bits"),
            direction: scale_dirs[0].clone(),
        });
    }

    Ok(StationarityReport {
        value,
        gradient,
        max_gradient,
        perturbations: settings.perturbations,
        decreased,
        min_decrease,
        scaling_change,
    })
}
