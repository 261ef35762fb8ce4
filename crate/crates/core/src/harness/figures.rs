//! Built-in sweeps for the five result figures, all at the default noise
//! profile (`sigma_cov^2 = 1`, `sigma_A^2 = sigma_rec^2 = 0.01`).
//!
//! | name | sweep | methods |
//! |------|-------|---------|
//! | fig2 | power {10, 100, 1000} x rho 0.02..0.98, K = 2, \|h\| = (1, 1), weights 0.5 | closed-form, monte-carlo |
//! | fig3 | rho1 x rho2 on 0.02..0.98, K = 2, \|h\| = (1, 3), P = 1000, weights (0.1, 0.9) | closed-form |
//! | fig4 | rho 0.02..0.98, K = 2, \|h\| = (1, 3), P = 100 | optimal, mrc, egc |
//! | fig5 | power {10, 100, 1000} x K = 1..100, \|h_k\| = 1 | max, cd-baseline |
//! | fig6 | K {1, 2, 4, 8} x P log-spaced 1..10^4, \|h_k\| = 1 | gain, gain-asymptotic |

use super::{Axis, ChannelSpec, DesignScheme, HarnessError, Method, SweepSpec, SweepVar};

pub const NAMES: [&str; 5] = ["fig2", "fig3", "fig4", "fig5", "fig6"];

fn rho_grid(var: SweepVar) -> Axis {
    Axis::linear(var, 0.02, 0.98, 49)
}

pub fn preset(name: &str) -> Result<SweepSpec, HarnessError> {
    let base = SweepSpec::default();
    Ok(match name {
        "fig2" => SweepSpec {
            axes: vec![
                Axis::new(SweepVar::Power, vec![10.0, 100.0, 1000.0]),
                rho_grid(SweepVar::Rho),
            ],
            channel: ChannelSpec::Magnitudes(vec![1.0, 1.0]),
            scheme: DesignScheme::Explicit {
                alpha: vec![0.5, 0.5],
                beta: vec![0.5, 0.5],
            },
            methods: vec![Method::ClosedForm, Method::MonteCarlo],
            ..base
        },
        "fig3" => SweepSpec {
            axes: vec![rho_grid(SweepVar::Rho1), rho_grid(SweepVar::Rho2)],
            channel: ChannelSpec::Magnitudes(vec![1.0, 3.0]),
            power: 1000.0,
            scheme: DesignScheme::Explicit {
                alpha: vec![0.1, 0.9],
                beta: vec![0.1, 0.9],
            },
            methods: vec![Method::ClosedForm],
            ..base
        },
        "fig4" => SweepSpec {
            axes: vec![rho_grid(SweepVar::Rho)],
            channel: ChannelSpec::Magnitudes(vec![1.0, 3.0]),
            power: 100.0,
            methods: vec![Method::Optimal, Method::Mrc, Method::Egc],
            ..base
        },
        "fig5" => SweepSpec {
            axes: vec![
                Axis::new(SweepVar::Power, vec![10.0, 100.0, 1000.0]),
                Axis::linear(SweepVar::Antennas, 1.0, 100.0, 100),
            ],
            channel: ChannelSpec::Uniform {
                antennas: 1,
                magnitude: 1.0,
            },
            methods: vec![Method::Max, Method::CdBaseline],
            ..base
        },
        "fig6" => SweepSpec {
            axes: vec![
                Axis::new(SweepVar::Antennas, vec![1.0, 2.0, 4.0, 8.0]),
                Axis::log(SweepVar::Power, 1.0, 1e4, 41),
            ],
            channel: ChannelSpec::Uniform {
                antennas: 1,
                magnitude: 1.0,
            },
            methods: vec![Method::Gain, Method::GainAsymptotic],
            ..base
        },
        other => return Err(HarnessError::UnknownFigure(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run_sweep;

    #[test]
    fn every_preset_is_valid() {
        for n in NAMES {
            preset(n).unwrap().check().unwrap();
        }
        assert_eq!(preset("fig7").unwrap_err().code(), "unknown-figure");
    }

    #[test]
    fn fig2_closed_form_peaks_near_056() {
        let spec = SweepSpec {
            methods: vec![Method::ClosedForm],
            ..preset("fig2").unwrap()
        };
        let t = run_sweep(&spec).unwrap();
        assert_eq!(t.rows.len(), 147);
        for chunk in t.rows.chunks(49) {
            let best = chunk.iter().max_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
            assert!((best[1] - 0.56).abs() < 0.011, "{best:?}");
        }
        let at = t.rows.iter().find(|r| r[0] == 1000.0 && (r[1] - 0.56).abs() < 1e-9).unwrap();
        assert!((at[2] - 12.64).abs() < 0.01, "{}", at[2]);
    }

    #[test]
    fn fig4_ordering() {
        let t = run_sweep(&preset("fig4").unwrap()).unwrap();
        for r in &t.rows {
            assert!(r[1] >= r[2] - 1e-12 && r[2] >= r[3] - 1e-12, "{r:?}");
        }
    }

    #[test]
    fn fig5_gap() {
        let t = run_sweep(&preset("fig5").unwrap()).unwrap();
        for r in &t.rows {
            assert!(r[2] > r[3]);
        }
        let r = t.rows.iter().find(|r| r[0] == 100.0 && r[1] == 10.0).unwrap();
        assert!((r[2] - r[3] - 1.69).abs() < 0.02);
    }

    #[test]
    fn fig6_converges() {
        let t = run_sweep(&preset("fig6").unwrap()).unwrap();
        for r in t.rows.iter().filter(|r| r[1] >= 100.0) {
            assert!((r[2] - 1.69).abs() < 0.03, "{r:?}");
        }
    }
}
