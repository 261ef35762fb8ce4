//! Acceptance checks shared by the `selftest` subcommand and the acceptance
//! test target. Each check returns a one-line summary of what it measured.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{figures, run_sweep};
use crate::mi_closed::{
    aux_quantities, gain_asymptotic, gain_finite, mi_approx, mi_cd, mi_egc, mi_max, mi_mrc, s_of_rho, Regime,
};
use crate::mi_mc::{estimate_entropy_histogram, estimate_mi, McSettings, PointCloud};
use crate::model::{
    derive_seed, rng_from_seed, validate, ChannelVector, NoiseProfile, ReceiverDesign, SystemConfig, TransmitConfig,
};
use crate::optimizer::{
    canonical_weights, golden_section_minimize, numeric_optimize, optimal_design, optimal_rho, stationarity_check,
    NumericSettings, StationaritySettings, RHO_BOUNDS,
};

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub budget: Duration,
    pub check: fn() -> Result<String, String>,
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {}: {} ({:.2?}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed,
            self.detail
        )
    }
}

pub fn criteria() -> Vec<Criterion> {
    let secs = Duration::from_secs;
    vec![
        Criterion { id: 1, title: "optimal splitting ratio", budget: secs(1), check: optimal_ratio },
        Criterion { id: 2, title: "two-antenna peak", budget: secs(10), check: two_antenna_peak },
        Criterion { id: 3, title: "splitting vs coherent gap", budget: secs(1), check: coherent_gap },
        Criterion { id: 4, title: "approximation accuracy", budget: secs(600), check: approximation_accuracy },
        Criterion { id: 5, title: "estimator calibration", budget: secs(120), check: estimator_calibration },
        Criterion { id: 6, title: "optimality oracle", budget: secs(300), check: optimality_oracle },
        Criterion { id: 7, title: "combiner ordering", budget: secs(5), check: combiner_ordering },
        Criterion { id: 8, title: "gain regimes", budget: secs(5), check: gain_regimes },
        Criterion { id: 9, title: "invariance suite", budget: secs(60), check: invariance_suite },
    ]
}

/// Runs one criterion; exceeding the time budget fails it.
pub fn run(c: &Criterion) -> CriterionResult {
    let t0 = Instant::now();
    let out = (c.check)();
    let elapsed = t0.elapsed();
    let (mut passed, mut detail) = match out {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if elapsed > c.budget {
        passed = false;
        detail = format!("{detail}; over the {:?} budget", c.budget);
    }
    CriterionResult {
        id: c.id,
        title: c.title,
        passed,
        detail,
        elapsed,
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tx(p: f64) -> TransmitConfig {
    TransmitConfig::new(p).expect("positive power")
}

fn channel(h: &[f64]) -> ChannelVector {
    ChannelVector::from_magnitudes(h.to_vec()).expect("valid channel")
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn optimal_ratio() -> Result<String, String> {
    let noise = NoiseProfile::default();
    let r = optimal_rho(&noise).map_err(err)?;
    let (g, _) = golden_section_minimize(|x| s_of_rho(&noise, x), RHO_BOUNDS.0, RHO_BOUNDS.1, 1e-12);
    ensure((r.rho_star - 0.5605).abs() <= 1e-3, || format!("rho* = {}", r.rho_star))?;
    ensure((g - r.rho_star).abs() <= 1e-6, || format!("golden {g} vs {}", r.rho_star))?;
    Ok(format!("rho* = {:.6}, golden-section argmin = {:.6}", r.rho_star, g))
}

fn two_antenna_peak() -> Result<String, String> {
    let noise = NoiseProfile::default();
    let rho = optimal_rho(&noise).map_err(err)?.rho_star;
    let v = mi_max(&channel(&[1.0, 3.0]), &noise, &tx(1000.0), rho).map_err(err)?.value;
    ensure((v - 14.96).abs() <= 0.05, || format!("mi_max = {v}"))?;
    let t = run_sweep(&figures::preset("fig3").map_err(err)?).map_err(err)?;
    let best = t
        .rows
        .iter()
        .max_by(|a, b| a[2].total_cmp(&b[2]))
        .ok_or("empty grid")?;
    ensure(
        (best[0] - 0.56).abs() <= 0.01 && (best[1] - 0.56).abs() <= 0.01,
        || format!("grid peak at ({}, {})", best[0], best[1]),
    )?;
    Ok(format!(
        "mi_max = {v:.4} bits; {}-point grid peak {:.4} at ({:.2}, {:.2})",
        t.rows.len(),
        best[2],
        best[0],
        best[1]
    ))
}

fn coherent_gap() -> Result<String, String> {
    let noise = NoiseProfile::default();
    let ch = ChannelVector::uniform(10, 1.0).map_err(err)?;
    let rho = optimal_rho(&noise).map_err(err)?.rho_star;
    let max = mi_max(&ch, &noise, &tx(100.0), rho).map_err(err)?.value;
    let cd = mi_cd(&ch, &noise, &tx(100.0)).value;
    let gap = max - cd;
    let rel = gap / cd;
    ensure((gap - 1.69).abs() <= 0.02, || format!("gap = {gap}"))?;
    ensure((rel - 0.17).abs() <= 0.01, || format!("relative gap = {rel}"))?;
    Ok(format!("mi_max = {max:.4}, mi_cd = {cd:.4}, gap = {gap:.4} bits ({:.1}%)", 100.0 * rel))
}

fn equal_weight_config(k: usize, rho: f64, p: f64) -> Result<SystemConfig, String> {
    let w = vec![1.0 / k as f64; k];
    validate(
        ChannelVector::uniform(k, 1.0).map_err(err)?,
        NoiseProfile::default(),
        ReceiverDesign::shared(rho, w.clone(), w),
        tx(p),
    )
    .map_err(err)
}

fn approximation_accuracy() -> Result<String, String> {
    let mut worst: (f64, String) = (0.0, String::new());
    let mut index = 0;
    for k in [1usize, 2] {
        for p in [100.0, 1000.0] {
            for rho in [0.2, 0.4, 0.56, 0.8] {
                let cfg = equal_weight_config(k, rho, p)?;
                let approx = mi_approx(&cfg).map_err(err)?.value;
                let settings = McSettings::default().with_seed(derive_seed(0xACC, 4, index));
                index += 1;
                let mc = estimate_mi(&cfg, &settings).map_err(err)?.value;
                let d = (mc - approx).abs();
                if d >= worst.0 {
                    worst = (d, format!("K={k} P={p} rho={rho}: mc {mc:.4} vs approx {approx:.4}"));
                }
                ensure(d <= 0.2, || format!("K={k} P={p} rho={rho}: mc {mc} vs approx {approx}"))?;
            }
        }
    }
    Ok(format!("16 points, worst |mc - approx| = {:.4} bits ({})", worst.0, worst.1))
}

fn estimator_calibration() -> Result<String, String> {
    let cfg = validate(
        ChannelVector::uniform(1, 1.0).map_err(err)?,
        NoiseProfile::default(),
        ReceiverDesign::cd_only(vec![1.0]),
        tx(100.0),
    )
    .map_err(err)?;
    let mc = estimate_mi(&cfg, &McSettings::default()).map_err(err)?.value;
    let oracle = (1.0f64 + 100.0 / 1.01).log2();
    ensure((mc - oracle).abs() <= 0.15, || format!("CD-only mc {mc} vs {oracle}"))?;

    // Enough samples for the recommended ten per bin at 64 bins per dimension.
    let n = 3_000_000;
    let mut rng = rng_from_seed(0x3D);
    let mut flat = Vec::with_capacity(3 * n);
    for _ in 0..3 * n {
        flat.push(rng.sample::<f64, _>(rand_distr::StandardNormal));
    }
    let h = estimate_entropy_histogram(&PointCloud::from_flat(3, flat), 64).map_err(err)?.bits;
    let truth = 1.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).log2();
    ensure((h - truth).abs() <= 0.05, || format!("3-D Gaussian {h} vs {truth}"))?;
    Ok(format!(
        "CD-only mc {mc:.4} vs {oracle:.4}; 3-D Gaussian {h:.4} vs {truth:.4}"
    ))
}

fn random_noise<R: Rng>(rng: &mut R) -> NoiseProfile {
    let sc = rng.random_range(0.5..2.0);
    let sr = sc * rng.random_range(0.01..0.2);
    NoiseProfile::new(rng.random_range(0.001..0.1), sc, sr).expect("positive noise")
}

fn optimality_oracle() -> Result<String, String> {
    let mut rng = rng_from_seed(0x0AC1E);
    let mut worst_mi: f64 = 0.0;
    let mut worst_rho: f64 = 0.0;
    let mut worst_w: f64 = 0.0;
    for i in 0..50 {
        let k = rng.random_range(1..=4);
        let h: Vec<f64> = (0..k).map(|_| rng.random_range(0.3..3.0)).collect();
        let noise = random_noise(&mut rng);
        let p = 10f64.powf(rng.random_range(1.0..4.0));
        let ch = channel(&h);
        let rho = optimal_rho(&noise).map_err(err)?.rho_star;
        let closed = mi_max(&ch, &noise, &tx(p), rho).map_err(err)?.value;
        let settings = NumericSettings {
            per_antenna_rho: true,
            seed: i,
            ..NumericSettings::default()
        };
        let r = numeric_optimize(&ch, &noise, &tx(p), &settings).map_err(err)?;
        let ctx = || format!("instance {i} (h = {h:?}, P = {p:.1})");
        let dmi = (r.mi - closed).abs();
        ensure(dmi <= 1e-3, || format!("{}: numeric {} vs closed {closed}", ctx(), r.mi))?;
        let spread = r.design.rho.iter().map(|x| (x - r.design.rho[0]).abs()).fold(0.0, f64::max);
        let drho = r.design.rho.iter().map(|x| (x - rho).abs()).fold(0.0, f64::max);
        ensure(spread <= 1e-3, || format!("{}: ratios {:?}", ctx(), r.design.rho))?;
        let target = canonical_weights(&ch);
        let mut dw: f64 = 0.0;
        for w in [&r.design.alpha, &r.design.beta] {
            for (a, b) in w.iter().zip(&target) {
                dw = dw.max((a / b - 1.0).abs());
            }
        }
        ensure(dw <= 1e-3, || format!("{}: weights {:?} vs {target:?}", ctx(), r.design.alpha))?;
        worst_mi = worst_mi.max(dmi);
        worst_rho = worst_rho.max(drho.max(spread));
        worst_w = worst_w.max(dw);
    }
    Ok(format!(
        "50 instances; worst |dMI| = {worst_mi:.1e}, rho deviation {worst_rho:.1e}, weight rel. error {worst_w:.1e}"
    ))
}

fn combiner_ordering() -> Result<String, String> {
    let mut rng = rng_from_seed(0x0D3);
    let noise = NoiseProfile::default();
    let rho = optimal_rho(&noise).map_err(err)?.rho_star;
    let mut strict = 0;
    for i in 0..1000 {
        let k = rng.random_range(1..=8);
        let equal = i % 4 == 0;
        let m = rng.random_range(0.1..3.0);
        let h: Vec<f64> = (0..k)
            .map(|_| if equal { m } else { rng.random_range(0.1..3.0) })
            .collect();
        let p = 10f64.powf(rng.random_range(0.0..4.0));
        let ch = channel(&h);
        let egc = mi_egc(&ch, &noise, &tx(p), rho).map_err(err)?.value;
        let mrc = mi_mrc(&ch, &noise, &tx(p), rho).map_err(err)?.value;
        let max = mi_max(&ch, &noise, &tx(p), rho).map_err(err)?.value;
        ensure(egc <= mrc + 1e-12 && mrc <= max + 1e-12, || {
            format!("h = {h:?}: egc {egc}, mrc {mrc}, max {max}")
        })?;
        let all_equal = k == 1 || equal;
        let ties = (max - egc).abs() <= 1e-9 && (max - mrc).abs() <= 1e-9;
        ensure(ties == all_equal, || {
            format!("h = {h:?}: equality {ties} but all-equal {all_equal}")
        })?;
        if !all_equal {
            strict += 1;
        }
    }
    Ok(format!("1000 channels ({strict} with unequal gains), egc <= mrc <= max with equality iff gains equal"))
}

fn gain_regimes() -> Result<String, String> {
    let mut rng = rng_from_seed(0x6A1);
    for _ in 0..200 {
        let sc = rng.random_range(0.1..2.0);
        let sr = sc * rng.random_range(0.25..2.0);
        let noise = NoiseProfile::new(rng.random_range(0.0..0.5), sc, sr).map_err(err)?;
        let rho = optimal_rho(&noise).map_err(err)?.rho_star;
        let g = gain_asymptotic(&noise, rho);
        ensure(g.gain_bits == 0.0 && g.regime == Regime::CdDegenerate, || {
            format!("noise {noise:?}: gain {}", g.gain_bits)
        })?;
    }
    let noise = NoiseProfile::default();
    let rho = optimal_rho(&noise).map_err(err)?.rho_star;
    let asym = gain_asymptotic(&noise, rho).gain_bits;
    ensure((asym - 1.69).abs() <= 0.01, || format!("asymptotic gain {asym}"))?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in [1, 2, 4, 8] {
        for p in [1e4, 1e5, 1e6] {
            let g = gain_finite(&ChannelVector::uniform(k, 1.0).map_err(err)?, &noise, &tx(p), None)
                .map_err(err)?
                .gain_bits;
            ensure((g - asym).abs() <= 0.01, || format!("K={k} P={p}: gain {g} vs {asym}"))?;
            lo = lo.min(g);
            hi = hi.max(g);
        }
    }
    ensure(hi - lo <= 0.01, || format!("finite gains spread {lo}..{hi}"))?;
    Ok(format!(
        "200 degenerate profiles give 0; asymptote {asym:.4}; P >= 1e4 gains in [{lo:.5}, {hi:.5}] for K = 1, 2, 4, 8"
    ))
}

fn invariance_suite() -> Result<String, String> {
    let mut rng = rng_from_seed(0x1A7);
    let mut worst_scale: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=6);
        let h: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..3.0)).collect();
        let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let beta: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let rho: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.95)).collect();
        let noise = random_noise(&mut rng);
        let p = 10f64.powf(rng.random_range(1.0..4.0));
        let make = |ch: ChannelVector, r: Vec<f64>, a: Vec<f64>, b: Vec<f64>| {
            validate(ch, noise, ReceiverDesign::splitting(r, a, b), tx(p)).map_err(err)
        };
        let base_cfg = make(channel(&h), rho.clone(), alpha.clone(), beta.clone())?;
        let base = mi_approx(&base_cfg).map_err(err)?.value;

        let (c, d) = (rng.random_range(0.01..100.0), rng.random_range(0.01..100.0));
        let scaled = make(
            channel(&h),
            rho.clone(),
            alpha.iter().map(|v| v * c).collect(),
            beta.iter().map(|v| v * d).collect(),
        )?;
        let ds = (mi_approx(&scaled).map_err(err)?.value - base).abs();
        ensure(ds <= 1e-9, || format!("scaling by ({c}, {d}) moved the MI by {ds}"))?;
        worst_scale = worst_scale.max(ds);

        let phases: Vec<f64> = (0..k).map(|_| rng.random_range(-3.14..3.14)).collect();
        let rotated = ChannelVector::new(h.clone(), phases).map_err(err)?;
        let dp = (mi_approx(&make(rotated, rho.clone(), alpha.clone(), beta.clone())?)
            .map_err(err)?
            .value
            - base)
            .abs();
        ensure(dp == 0.0, || format!("phase change moved the MI by {dp}"))?;

        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let permuted = make(channel(&pick(&h)), pick(&rho), pick(&alpha), pick(&beta))?;
        let dq = (mi_approx(&permuted).map_err(err)?.value - base).abs();
        ensure(dq <= 1e-12 * base.abs().max(1.0), || format!("permutation moved the MI by {dq}"))?;
        let ch = channel(&h);
        let chp = channel(&pick(&h));
        let rs = optimal_rho(&noise).map_err(err)?.rho_star;
        for f in [mi_max, mi_egc, mi_mrc] {
            let a = f(&ch, &noise, &tx(p), rs).map_err(err)?.value;
            let b = f(&chp, &noise, &tx(p), rs).map_err(err)?.value;
            ensure((a - b).abs() <= 1e-12 * a.abs().max(1.0), || "closed form not permutation invariant".into())?;
        }

        let q = aux_quantities(&base_cfg).map_err(err)?;
        let lhs = 2.0 * q.c_prime * q.c_prime * noise.sigma_rec_sq;
        let rhs = q.c * q.c * noise.sigma_cov_sq;
        let rel = (lhs - rhs).abs() / rhs;
        ensure(rel <= 1e-12, || format!("aux identity off by {rel:e}"))?;
        worst_identity = worst_identity.max(rel);
    }

    let noise = NoiseProfile::default();
    let ch = channel(&[1.0, 3.0]);
    let design = optimal_design(&ch, &noise).map_err(err)?.receiver_design();
    let rep = stationarity_check(&design, &ch, &noise, &tx(1000.0), &StationaritySettings::default()).map_err(err)?;
    ensure(rep.decreased == rep.perturbations && rep.perturbations == 100, || {
        format!("{}/{} perturbations decreased the MI", rep.decreased, rep.perturbations)
    })?;
    Ok(format!(
        "200 random configs: scale change <= {worst_scale:.1e}, aux identity <= {worst_identity:.1e}; \
         stationarity max gradient {:.1e}, {}/{} perturbations decrease, scaling change {:.1e}",
        rep.max_gradient, rep.decreased, rep.perturbations, rep.scaling_change
    ))
}
