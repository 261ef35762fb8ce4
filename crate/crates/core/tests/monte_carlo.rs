use num_complex::Complex64;
use splitrx::mi_closed::mi_approx;
use splitrx::mi_mc::{estimate_mi, McSettings};
use splitrx::model::*;

fn cfg(h: &[f64], design: ReceiverDesign, noise: NoiseProfile, p: f64) -> SystemConfig {
    validate(
        ChannelVector::from_magnitudes(h.to_vec()).unwrap(),
        noise,
        design,
        TransmitConfig::new(p).unwrap(),
    )
    .unwrap()
}

fn light() -> McSettings {
    McSettings {
        n_joint: 1_000_000,
        n_outer: 150,
        n_inner: 30_000,
        ..McSettings::default()
    }
}

#[test]
fn cd_only_matches_capacity() {
    let c = cfg(&[1.0], ReceiverDesign::cd_only(vec![1.0]), NoiseProfile::default(), 100.0);
    let est = estimate_mi(&c, &McSettings::default()).unwrap();
    let oracle = (1.0f64 + 100.0 / 1.01).log2();
    assert!((est.value - oracle).abs() <= 0.15, "{} vs {oracle}", est.value);
    assert!(est.std_error > 0.0);
}

#[test]
fn vanishing_power_carries_no_information() {
    let noise = NoiseProfile::default();
    for design in [
        ReceiverDesign::shared(0.5, vec![1.0], vec![1.0]),
        ReceiverDesign::cd_only(vec![1.0]),
        ReceiverDesign::ed_only(vec![1.0]),
    ] {
        let v = estimate_mi(&cfg(&[1.0], design, noise, 1e-9), &McSettings::default())
            .unwrap()
            .value;
        assert!(v.abs() <= 0.1, "{v}");
    }
}

#[test]
fn two_antenna_point_matches_approximation() {
    let c = cfg(
        &[1.0, 1.0],
        ReceiverDesign::shared(0.56, vec![0.5, 0.5], vec![0.5, 0.5]),
        NoiseProfile::default(),
        1000.0,
    );
    let mc = estimate_mi(&c, &McSettings::default()).unwrap().value;
    let approx = mi_approx(&c).unwrap().value;
    assert!((mc - approx).abs() <= 0.2, "{mc} vs {approx}");
}

#[test]
fn weight_scaling_leaves_estimate_unchanged() {
    let noise = NoiseProfile::default();
    let base = estimate_mi(
        &cfg(&[1.0, 2.0], ReceiverDesign::shared(0.5, vec![0.3, 0.7], vec![0.4, 0.6]), noise, 300.0),
        &light(),
    )
    .unwrap();
    let scaled = estimate_mi(
        &cfg(&[1.0, 2.0], ReceiverDesign::shared(0.5, vec![3.0, 7.0], vec![0.02, 0.03]), noise, 300.0),
        &light(),
    )
    .unwrap();
    let tol = 2.0 * (base.std_error + scaled.std_error);
    assert!((base.value - scaled.value).abs() <= tol, "{} {}", base.value, scaled.value);
}

#[test]
fn phases_and_permutations_do_not_matter() {
    let noise = NoiseProfile::default();
    let design = ReceiverDesign::splitting(vec![0.4, 0.7], vec![0.3, 0.7], vec![0.6, 0.4]);
    let base_cfg = cfg(&[1.0, 2.0], design, noise, 300.0);
    let base = estimate_mi(&base_cfg, &light()).unwrap();

    let rotated = validate(
        ChannelVector::new(vec![1.0, 2.0], vec![1.3, -2.2]).unwrap(),
        noise,
        base_cfg.design().clone(),
        *base_cfg.tx(),
    )
    .unwrap();
    let permuted = cfg(
        &[2.0, 1.0],
        ReceiverDesign::splitting(vec![0.7, 0.4], vec![0.7, 0.3], vec![0.4, 0.6]),
        noise,
        300.0,
    );
    for (name, other) in [("phase", rotated), ("permutation", permuted)] {
        let est = estimate_mi(&other, &light().with_seed(99)).unwrap();
        let tol = 4.0 * (base.std_error + est.std_error) + 0.02;
        assert!((est.value - base.value).abs() <= tol, "{name}: {} vs {}", est.value, base.value);
    }
}

#[test]
fn estimate_is_reproducible_and_thread_count_independent() {
    let c = cfg(
        &[1.0, 1.0],
        ReceiverDesign::shared(0.5, vec![0.5, 0.5], vec![0.5, 0.5]),
        NoiseProfile::default(),
        100.0,
    );
    let s = McSettings {
        n_joint: 200_000,
        n_outer: 20,
        n_inner: 5_000,
        ..McSettings::default()
    };
    let a = estimate_mi(&c, &s).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = one.install(|| estimate_mi(&c, &s)).unwrap();
    assert_eq!(a, b);
    let other = estimate_mi(&c, &s.with_seed(1)).unwrap();
    assert_ne!(a.value, other.value);
}

#[test]
fn more_samples_do_not_hurt() {
    let c = cfg(
        &[1.0, 1.0],
        ReceiverDesign::shared(0.56, vec![0.5, 0.5], vec![0.5, 0.5]),
        NoiseProfile::default(),
        100.0,
    );
    let approx = mi_approx(&c).unwrap().value;
    let small = McSettings {
        n_joint: 500_000,
        n_outer: 100,
        n_inner: 10_000,
        ..McSettings::default()
    };
    let big = McSettings {
        n_joint: 1_000_000,
        n_inner: 20_000,
        ..small
    };
    let a = estimate_mi(&c, &small).unwrap();
    let b = estimate_mi(&c, &big).unwrap();
    assert!(
        (b.value - approx).abs() <= (a.value - approx).abs() + a.std_error + b.std_error,
        "{} {} vs {approx}",
        a.value,
        b.value
    );
}

#[test]
fn coherent_output_variance() {
    let noise = NoiseProfile::new(0.2, 0.5, 0.1).unwrap();
    let c = cfg(&[0.8, 1.5, 2.0], ReceiverDesign::shared(0.3, vec![0.2, 0.5, 0.3], vec![1.0, 1.0, 1.0]), noise, 4.0);
    let sampler = ObservationSampler::new(&c);
    let mut rng = rng_from_seed(17);
    let x = Complex64::new(0.7, -0.4);
    let n = 1_000_000;
    let a_prime: f64 = c.design().alpha.iter().sum();
    let mut acc = 0.0;
    for _ in 0..n {
        let r1 = sampler.sample_given_x(x, &mut rng).r1.unwrap();
        acc += (r1 - a_prime * x).norm_sqr();
    }
    let antenna: f64 = c
        .design()
        .alpha
        .iter()
        .zip(c.channel().magnitudes())
        .map(|(a, h)| a * a * noise.sigma_a_sq / (4.0 * h * h))
        .sum();
    let expect = c.combined_conversion_variance() + antenna;
    let got = acc / n as f64;
    assert!((got / expect - 1.0).abs() < 0.01, "{got} vs {expect}");
}

#[test]
fn envelope_output_has_rician_mean() {
    // Low SNR, so the envelope mean differs visibly from the signal amplitude.
    let noise = NoiseProfile::new(1.0, 1.0, 0.05).unwrap();
    let p = 0.5;
    let c = cfg(&[1.0], ReceiverDesign::shared(0.5, vec![1.0], vec![1.0]), noise, p);
    let sampler = ObservationSampler::new(&c);
    let x = Complex64::new(0.6, 0.8);
    let mut rng = rng_from_seed(3);
    let n = 1_000_000;
    let mean = (0..n)
        .map(|_| sampler.sample_given_x(x, &mut rng).r2.unwrap())
        .sum::<f64>()
        / n as f64;

    // E|nu + w| for w ~ CN(0, sigma_a^2) by midpoint quadrature.
    let nu = p.sqrt() * x.norm();
    let sd = (noise.sigma_a_sq / 2.0).sqrt();
    let m = 1200;
    let lim = 8.0 * sd;
    let step = 2.0 * lim / m as f64;
    let mut e = 0.0;
    for i in 0..m {
        let a = -lim + (i as f64 + 0.5) * step;
        for j in 0..m {
            let b = -lim + (j as f64 + 0.5) * step;
            let w = (-(a * a + b * b) / (2.0 * sd * sd)).exp() / (2.0 * std::f64::consts::PI * sd * sd);
            e += ((nu + a).powi(2) + b * b).sqrt() * w * step * step;
        }
    }
    let expect = e / p.sqrt();
    assert!((mean - expect).abs() < 0.005 * expect, "{mean} vs {expect}");
    assert!((expect - x.norm()).abs() > 0.1);
}
