//! Closed-form mutual information: the high-SNR approximation for an
//! arbitrary splitting design, the CD receiver, the optimized, EGC and MRC
//! designs, and the gain of splitting over coherent detection.

use thiserror::Error;

use crate::mi_mc::MiEstimate;
use crate::model::{ChannelVector, ModelError, NoiseProfile, ReceiverMode, SystemConfig, TransmitConfig};
use crate::optimizer::optimal_rho;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedFormError {
    #[error("splitting ratio {0} is outside (0, 1]")]
    RhoOutOfRange(f64),
    #[error("the approximation needs a splitting-mode design")]
    NotSplitting,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ClosedFormError {
    pub fn code(&self) -> &'static str {
        match self {
            ClosedFormError::RhoOutOfRange(_) => "rho-out-of-range",
            ClosedFormError::NotSplitting => "invalid-config",
            ClosedFormError::Model(e) => e.code(),
        }
    }
}

/// Whether splitting can beat the coherent receiver for a noise profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    SplittingOptimal,
    CdDegenerate,
}

impl Regime {
    pub fn of(noise: &NoiseProfile) -> Self {
        if noise.splitting_favourable() {
            Regime::SplittingOptimal
        } else {
            Regime::CdDegenerate
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::SplittingOptimal => "splitting-optimal",
            Regime::CdDegenerate => "cd-degenerate",
        }
    }
}

/// Auxiliary quantities of the high-SNR approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxQuantities {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: f64,
    pub a_prime: f64,
    pub b_prime: Vec<f64>,
    pub c_prime: f64,
    pub gamma: f64,
}

pub fn aux_quantities(config: &SystemConfig) -> Result<AuxQuantities, ClosedFormError> {
    if config.mode() != ReceiverMode::Splitting {
        return Err(ClosedFormError::NotSplitting);
    }
    let d = config.design();
    Ok(aux_from_parts(
        config.channel().magnitudes(),
        config.noise(),
        config.tx().power(),
        &d.rho,
        &d.alpha,
        &d.beta,
    ))
}

/// [`aux_quantities`] on raw slices. Inputs are not validated.
pub fn aux_from_parts(
    h: &[f64],
    noise: &NoiseProfile,
    power: f64,
    rho: &[f64],
    alpha: &[f64],
    beta: &[f64],
) -> AuxQuantities {
    let sqrt_p = power.sqrt();
    let a_prime: f64 = alpha.iter().sum();
    let b: Vec<f64> = alpha
        .iter()
        .zip(h)
        .map(|(a, h)| a / (a_prime * sqrt_p * h))
        .collect();
    let mut cd_spread = 0.0;
    let mut ed_spread = 0.0;
    for k in 0..h.len() {
        let g = power * h[k] * h[k];
        cd_spread += alpha[k] * alpha[k] / (rho[k] * g);
        ed_spread += beta[k] * beta[k] / ((1.0 - rho[k]) * g);
    }
    let c = cd_spread.sqrt() / a_prime;
    let gamma = (cd_spread.sqrt() * noise.sigma_cov_sq.sqrt())
        / (2f64.sqrt() * ed_spread.sqrt() * a_prime * noise.sigma_rec_sq.sqrt());
    let a = gamma * beta.iter().sum::<f64>();
    let b_prime = beta
        .iter()
        .zip(h)
        .map(|(b, h)| gamma * b / (sqrt_p * h))
        .collect();
    let c_prime = gamma * ed_spread.sqrt();
    AuxQuantities {
        a,
        b,
        c,
        a_prime,
        b_prime,
        c_prime,
        gamma,
    }
}

/// High-SNR approximation of the MI of a splitting design, in bits.
pub fn mi_approx(config: &SystemConfig) -> Result<MiEstimate, ClosedFormError> {
    let q = aux_quantities(config)?;
    Ok(MiEstimate::closed_form(approx_from_aux(&q, config.noise())))
}

/// [`mi_approx`] on raw slices, in bits. Inputs are not validated.
pub fn mi_approx_parts(
    h: &[f64],
    noise: &NoiseProfile,
    power: f64,
    rho: &[f64],
    alpha: &[f64],
    beta: &[f64],
) -> f64 {
    approx_from_aux(&aux_from_parts(h, noise, power, rho, alpha, beta), noise)
}

fn approx_from_aux(q: &AuxQuantities, noise: &NoiseProfile) -> f64 {
    let (sa, sc) = (noise.sigma_a_sq, noise.sigma_cov_sq);
    let cd_noise = q.c * q.c * sc;
    let norm = (1.0 + q.a * q.a).sqrt();
    let first: f64 = q.b.iter().map(|b| b * b).sum::<f64>() * sa + cd_noise;
    let second: f64 = q
        .b
        .iter()
        .zip(&q.b_prime)
        .map(|(b, bp)| ((b + bp * q.a) / norm).powi(2))
        .sum::<f64>()
        * sa
        + cd_noise;
    0.5 * (q.a * q.a + 1.0).log2() - 0.5 * first.log2() - 0.5 * second.log2()
}

/// Effective noise power of the optimally combined splitting receiver as a
/// function of the shared splitting ratio; `s(1) = (sigma_A^2 + sigma_cov^2)^2`.
pub fn s_of_rho(noise: &NoiseProfile, rho: f64) -> f64 {
    let (sa, sc, sr) = (noise.sigma_a_sq, noise.sigma_cov_sq, noise.sigma_rec_sq);
    let num = (rho * sa + sc) * ((rho - 1.0) * sa * sc - 2.0 * rho * sa * sr - 2.0 * sc * sr);
    let den = rho * ((rho - 1.0) * sc - 2.0 * rho * sr);
    num / den
}

fn check_rho(rho: f64) -> Result<(), ClosedFormError> {
    if rho.is_finite() && rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(ClosedFormError::RhoOutOfRange(rho))
    }
}

/// MI of the conventional coherent receiver with maximum ratio combining.
pub fn mi_cd(channel: &ChannelVector, noise: &NoiseProfile, tx: &TransmitConfig) -> MiEstimate {
    let snr = tx.power() * channel.power_gain() / (noise.sigma_cov_sq + noise.sigma_a_sq);
    MiEstimate::closed_form(snr.log2_1p())
}

trait Log2OnePlus {
    fn log2_1p(self) -> f64;
}

impl Log2OnePlus for f64 {
    fn log2_1p(self) -> f64 {
        self.ln_1p() / std::f64::consts::LN_2
    }
}

fn with_noise_term(
    signal: f64,
    noise: &NoiseProfile,
    rho_star: f64,
) -> Result<MiEstimate, ClosedFormError> {
    check_rho(rho_star)?;
    Ok(MiEstimate::closed_form(signal.log2() - 0.5 * s_of_rho(noise, rho_star).log2()))
}

/// Maximum achievable MI with optimal weights at splitting ratio `rho_star`.
/// `rho_star = 1` is the coherent receiver.
pub fn mi_max(
    channel: &ChannelVector,
    noise: &NoiseProfile,
    tx: &TransmitConfig,
    rho_star: f64,
) -> Result<MiEstimate, ClosedFormError> {
    check_rho(rho_star)?;
    if rho_star == 1.0 {
        return Ok(mi_cd(channel, noise, tx));
    }
    with_noise_term(tx.power() * channel.power_gain(), noise, rho_star)
}

/// MI with equal gain combining at splitting ratio `rho_star`.
pub fn mi_egc(
    channel: &ChannelVector,
    noise: &NoiseProfile,
    tx: &TransmitConfig,
    rho_star: f64,
) -> Result<MiEstimate, ClosedFormError> {
    let k = channel.len() as f64;
    let inv: f64 = channel.magnitudes().iter().map(|h| 1.0 / (h * h)).sum();
    with_noise_term(tx.power() * k * k / inv, noise, rho_star)
}

/// MI with maximum ratio combining at splitting ratio `rho_star`.
pub fn mi_mrc(
    channel: &ChannelVector,
    noise: &NoiseProfile,
    tx: &TransmitConfig,
    rho_star: f64,
) -> Result<MiEstimate, ClosedFormError> {
    let k = channel.len() as f64;
    let sum: f64 = channel.magnitudes().iter().sum();
    with_noise_term(tx.power() * sum * sum / k, noise, rho_star)
}

/// MI gain of the splitting receiver over the coherent receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainReport {
    pub gain_bits: f64,
    pub regime: Regime,
    pub asymptotic: bool,
}

/// High-SNR gain at splitting ratio `rho_star`; independent of the channel.
pub fn gain_asymptotic(noise: &NoiseProfile, rho_star: f64) -> GainReport {
    let regime = Regime::of(noise);
    let gain_bits = match regime {
        Regime::CdDegenerate => 0.0,
        Regime::SplittingOptimal => {
            let (sa, sc, sr) = (noise.sigma_a_sq, noise.sigma_cov_sq, noise.sigma_rec_sq);
            let r = rho_star;
            let num = r * ((1.0 - r) * sc + 2.0 * r * sr) * (sa + sc).powi(2);
            let den = (r * sa + sc) * (2.0 * r * sr * sa + (1.0 - r) * sc * sa + 2.0 * sc * sr);
            0.5 * (num / den).log2()
        }
    };
    GainReport {
        gain_bits,
        regime,
        asymptotic: true,
    }
}

/// Gain at finite power: the optimized splitting MI minus the better of the
/// coherent MI and an optional envelope-only benchmark (e.g. a Monte Carlo
/// estimate).
pub fn gain_finite(
    channel: &ChannelVector,
    noise: &NoiseProfile,
    tx: &TransmitConfig,
    ed_benchmark: Option<f64>,
) -> Result<GainReport, ClosedFormError> {
    let regime = Regime::of(noise);
    let gain_bits = match regime {
        Regime::CdDegenerate => 0.0,
        Regime::SplittingOptimal => {
            let rho = optimal_rho(noise)?.rho_star;
            let best = mi_max(channel, noise, tx, rho)?.value;
            let cd = mi_cd(channel, noise, tx).value;
            best - ed_benchmark.map_or(cd, |ed| cd.max(ed))
        }
    };
    Ok(GainReport {
        gain_bits,
        regime,
        asymptotic: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ReceiverDesign};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const UPSILON: f64 = 0.560_463_104_2;

    fn config(h: &[f64], rho: f64, alpha: &[f64], beta: &[f64], p: f64) -> SystemConfig {
        validate(
            ChannelVector::from_magnitudes(h.to_vec()).unwrap(),
            NoiseProfile::default(),
            ReceiverDesign::shared(rho, alpha.to_vec(), beta.to_vec()),
            TransmitConfig::new(p).unwrap(),
        )
        .unwrap()
    }

    fn tx(p: f64) -> TransmitConfig {
        TransmitConfig::new(p).unwrap()
    }

    #[test]
    fn aux_hand_example() {
        let cfg = validate(
            ChannelVector::uniform(1, 1.0).unwrap(),
            NoiseProfile::new(0.01, 1.0, 0.5).unwrap(),
            ReceiverDesign::shared(0.5, vec![1.0], vec![1.0]),
            tx(4.0),
        )
        .unwrap();
        let q = aux_quantities(&cfg).unwrap();
        assert_relative_eq!(q.c, 0.5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(q.gamma, 1.0, max_relative = 1e-12);
        assert_relative_eq!(q.a, 1.0, max_relative = 1e-12);
        assert_eq!(q.a_prime, 1.0);
    }

    #[test]
    fn aux_rejects_cd_only() {
        let cfg = validate(
            ChannelVector::uniform(1, 1.0).unwrap(),
            NoiseProfile::default(),
            ReceiverDesign::cd_only(vec![1.0]),
            tx(4.0),
        )
        .unwrap();
        assert_eq!(aux_quantities(&cfg), Err(ClosedFormError::NotSplitting));
    }

    #[test]
    fn fig2_point() {
        let v = mi_approx(&config(&[1.0, 1.0], 0.56, &[0.5, 0.5], &[0.5, 0.5], 1000.0))
            .unwrap()
            .value;
        assert!((v - 12.6446).abs() < 1e-3, "{v}");
    }

    #[test]
    fn cd_examples() {
        let n = NoiseProfile::default();
        let k10 = ChannelVector::uniform(10, 1.0).unwrap();
        assert!((mi_cd(&k10, &n, &tx(100.0)).value - 9.95289).abs() < 1e-4);
        let k1 = ChannelVector::uniform(1, 1.0).unwrap();
        assert!((mi_cd(&k1, &n, &tx(100.0)).value - (1.0 + 100.0 / 1.01f64).log2()).abs() < 1e-12);
        assert!(mi_cd(&k1, &n, &tx(1e-300)).value < 1e-290);
    }

    #[test]
    fn s_matches_factored_form() {
        let n = NoiseProfile::new(0.03, 1.7, 0.2).unwrap();
        for rho in [0.1, 0.35, 0.5, 0.9, 0.999] {
            let (sa, sc, sr) = (n.sigma_a_sq, n.sigma_cov_sq, n.sigma_rec_sq);
            let a = sc / rho;
            let b = 2.0 * sr / (1.0 - rho);
            let factored = (a + sa) * (sa + a * b / (a + b));
            assert_relative_eq!(s_of_rho(&n, rho), factored, max_relative = 1e-12);
        }
        assert_relative_eq!(s_of_rho(&n, 1.0), (0.03f64 + 1.7).powi(2), max_relative = 1e-14);
    }

    #[test]
    fn optimized_mi_examples() {
        let n = NoiseProfile::default();
        let h13 = ChannelVector::from_magnitudes(vec![1.0, 3.0]).unwrap();
        let max = mi_max(&h13, &n, &tx(1000.0), UPSILON).unwrap().value;
        assert!((max - 14.966537548).abs() < 1e-6, "{max}");
        let egc = mi_egc(&h13, &n, &tx(1000.0), UPSILON).unwrap().value;
        assert!((egc - 13.4926).abs() < 1e-3, "{egc}");
        let mrc = mi_mrc(&h13, &n, &tx(1000.0), UPSILON).unwrap().value;
        assert!((mrc - 14.6446).abs() < 1e-3, "{mrc}");
        let k10 = ChannelVector::uniform(10, 1.0).unwrap();
        let max = mi_max(&k10, &n, &tx(100.0), UPSILON).unwrap().value;
        assert!((max - 11.64461).abs() < 1e-4, "{max}");
        assert_eq!(
            mi_max(&k10, &n, &tx(100.0), 1.0).unwrap(),
            mi_cd(&k10, &n, &tx(100.0))
        );
        assert_eq!(
            mi_max(&k10, &n, &tx(100.0), 0.0),
            Err(ClosedFormError::RhoOutOfRange(0.0))
        );
        assert!(mi_egc(&k10, &n, &tx(100.0), 1.5).is_err());
    }

    #[test]
    fn approximation_at_optimal_egc_and_mrc_weights() {
        let n = NoiseProfile::default();
        let h = [1.0, 3.0];
        let ch = ChannelVector::from_magnitudes(h.to_vec()).unwrap();
        let cases: [(&[f64], f64); 3] = [
            (&[0.1, 0.9], mi_max(&ch, &n, &tx(1000.0), UPSILON).unwrap().value),
            (&[0.5, 0.5], mi_egc(&ch, &n, &tx(1000.0), UPSILON).unwrap().value),
            (&[0.25, 0.75], mi_mrc(&ch, &n, &tx(1000.0), UPSILON).unwrap().value),
        ];
        for (w, expect) in cases {
            let v = mi_approx(&config(&h, UPSILON, w, w, 1000.0)).unwrap().value;
            assert_relative_eq!(v, expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn gain_examples() {
        let g = gain_asymptotic(&NoiseProfile::default(), UPSILON);
        assert!((g.gain_bits - 1.69318).abs() < 1e-4, "{}", g.gain_bits);
        assert_eq!(g.regime, Regime::SplittingOptimal);
        let n = NoiseProfile::default();
        assert_relative_eq!(
            g.gain_bits,
            0.5 * (s_of_rho(&n, 1.0) / s_of_rho(&n, UPSILON)).log2(),
            max_relative = 1e-12
        );

        let bad = NoiseProfile::new(0.01, 1.0, 0.5).unwrap();
        let g = gain_asymptotic(&bad, 1.0);
        assert_eq!((g.gain_bits, g.regime), (0.0, Regime::CdDegenerate));
        let f = gain_finite(&ChannelVector::uniform(3, 1.0).unwrap(), &bad, &tx(100.0), None).unwrap();
        assert_eq!(f.gain_bits, 0.0);

        let k10 = ChannelVector::uniform(10, 1.0).unwrap();
        let f = gain_finite(&k10, &n, &tx(100.0), None).unwrap();
        assert!((f.gain_bits - 1.69172).abs() < 1e-4, "{}", f.gain_bits);
        let with_ed = gain_finite(&k10, &n, &tx(100.0), Some(100.0)).unwrap();
        assert!(with_ed.gain_bits < 0.0);
    }

    fn magnitudes(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..5.0, k)
    }

    proptest! {
        #[test]
        fn aux_identity_and_homogeneity(
            h in magnitudes(1..=5),
            rho in 0.01f64..0.99,
            p in 1.0f64..1e5,
            scale in 0.1f64..10.0,
            seed_w in prop::collection::vec(0.01f64..1.0, 10),
        ) {
            let k = h.len();
            let alpha = seed_w[..k].to_vec();
            let beta = seed_w[5..5 + k].to_vec();
            let cfg = config(&h, rho, &alpha, &beta, p);
            let q = aux_quantities(&cfg).unwrap();
            let n = cfg.noise();
            let lhs = 2.0 * q.c_prime.powi(2) * n.sigma_rec_sq;
            let rhs = q.c.powi(2) * n.sigma_cov_sq;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());

            let scaled: Vec<f64> = alpha.iter().map(|a| a * scale).collect();
            let q2 = aux_quantities(&config(&h, rho, &scaled, &beta, p)).unwrap();
            prop_assert!((q2.a_prime - scale * q.a_prime).abs() <= 1e-12 * q2.a_prime);
            for (x, y) in [(q.a, q2.a), (q.c, q2.c), (q.gamma, q2.gamma), (q.c_prime, q2.c_prime)] {
                prop_assert!((x - y).abs() <= 1e-10 * x.abs());
            }
        }

        #[test]
        fn approx_scale_invariance(
            h in magnitudes(1..=4),
            rho in 0.05f64..0.95,
            c in 0.01f64..100.0,
            d in 0.01f64..100.0,
        ) {
            let k = h.len();
            let alpha: Vec<f64> = (0..k).map(|i| 1.0 + i as f64).collect();
            let beta: Vec<f64> = (0..k).map(|i| 2.0 - i as f64 * 0.3).collect();
            let base = mi_approx(&config(&h, rho, &alpha, &beta, 500.0)).unwrap().value;
            let a2: Vec<f64> = alpha.iter().map(|v| v * c).collect();
            let b2: Vec<f64> = beta.iter().map(|v| v * d).collect();
            let other = mi_approx(&config(&h, rho, &a2, &b2, 500.0)).unwrap().value;
            prop_assert!((base - other).abs() <= 1e-9);
        }

        #[test]
        fn ordering_of_combiners(h in magnitudes(1..=8), p in 1.0f64..1e4) {
            let ch = ChannelVector::from_magnitudes(h).unwrap();
            let n = NoiseProfile::default();
            let egc = mi_egc(&ch, &n, &tx(p), UPSILON).unwrap().value;
            let mrc = mi_mrc(&ch, &n, &tx(p), UPSILON).unwrap().value;
            let max = mi_max(&ch, &n, &tx(p), UPSILON).unwrap().value;
            prop_assert!(egc <= mrc + 1e-12 && mrc <= max + 1e-12);
        }

        #[test]
        fn mi_max_monotone(h in magnitudes(1..=6), extra in 0.01f64..3.0, p in 1.0f64..1e4) {
            let n = NoiseProfile::default();
            let ch = ChannelVector::from_magnitudes(h.clone()).unwrap();
            let base = mi_max(&ch, &n, &tx(p), UPSILON).unwrap().value;
            prop_assert!(mi_max(&ch, &n, &tx(p * 1.01), UPSILON).unwrap().value > base);
            let mut more = h;
            more.push(extra);
            let ch2 = ChannelVector::from_magnitudes(more).unwrap();
            prop_assert!(mi_max(&ch2, &n, &tx(p), UPSILON).unwrap().value >= base);
        }
    }
}
