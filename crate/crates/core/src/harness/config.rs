//! Flat `key = value` sweep configuration.
//!
//! ```text
//! # Fig. 2 style sweep
//! channel = 1, 1
//! alpha = 0.5, 0.5
//! beta = 0.5, 0.5
//! power = 10, 100, 1000
//! rho = 0.02:0.98:49
//! methods = closed-form, monte-carlo
//! ```
//!
//! `rho`, `rho1`, `rho2`, `power` and `antennas` become sweep axes when given
//! a list (`a, b, c`), a linear range (`start:stop:count`) or a log range
//! (`log:start:stop:count`); axes vary slowest-first in file order. A single
//! value fixes the variable instead, unless the base sweep (e.g. a figure
//! preset) already sweeps it; `rho1`/`rho2` are always axes.
//!
//! Other keys: `channel` (magnitudes, or `uniform:<magnitude>`),
//! `sigma_a_sq`, `sigma_cov_sq`, `sigma_rec_sq`, `scheme`
//! (`optimal|egc|mrc|explicit`), `alpha`, `beta`, `methods`, `n_joint`,
//! `n_outer`, `n_inner`, `bins_per_dim`, `cond_bins_per_dim`, `seed`, `out`.

use std::path::PathBuf;

use super::{Axis, ChannelSpec, DesignScheme, HarnessError, Method, SweepSpec, SweepVar};
use crate::model::NoiseProfile;

/// One `key = value` line; `line` is 1-based, 0 for command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits config text into entries, skipping blanks and `#` comments.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, HarnessError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Config {
            line: i + 1,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        out.push(Entry {
            line: i + 1,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Parses a `key=value` override from the command line.
pub fn parse_override(s: &str) -> Result<Entry, HarnessError> {
    let (k, v) = s.split_once('=').ok_or_else(|| HarnessError::Config {
        line: 0,
        message: format!("override '{s}' is not key=value"),
    })?;
    Ok(Entry {
        line: 0,
        key: k.trim().to_string(),
        value: v.trim().to_string(),
    })
}

/// Applies `overrides` on top of `base`: a repeated key replaces the value in
/// place, a new key is appended.
pub fn merge(mut base: Vec<Entry>, overrides: Vec<Entry>) -> Vec<Entry> {
    for o in overrides {
        match base.iter_mut().find(|e| e.key == o.key) {
            Some(e) => *e = o,
            None => base.push(o),
        }
    }
    base
}

/// Values of a grid expression.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("log:") {
        let (a, b, n) = range_parts(rest)?;
        if a <= 0.0 || b <= 0.0 {
            return Err(format!("log range '{s}' needs positive bounds"));
        }
        return Ok(Axis::log(SweepVar::Power, a, b, n).values);
    }
    if s.contains(':') {
        let (a, b, n) = range_parts(s)?;
        return Ok(super::linspace(a, b, n));
    }
    parse_list(s)
}

fn range_parts(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("range '{s}' must be start:stop:count"));
    }
    let a = parse_num(parts[0])?;
    let b = parse_num(parts[1])?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| format!("range count '{}' is not a positive integer", parts[2]))?;
    if n == 0 {
        return Err("range count must be at least 1".into());
    }
    Ok((a, b, n))
}

fn parse_num(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("'{s}' is not a number"))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_num).collect()
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.trim().parse().map_err(|_| format!("'{s}' is not a nonnegative integer"))
}

/// Builds a sweep from entries, starting from `base`.
pub fn build_spec(base: SweepSpec, entries: &[Entry]) -> Result<SweepSpec, HarnessError> {
    let mut spec = base;
    let mut alpha = None;
    let mut beta = None;
    let mut uniform_magnitude = None;
    let mut fixed_antennas = None;
    let mut noise = (spec.noise.sigma_a_sq, spec.noise.sigma_cov_sq, spec.noise.sigma_rec_sq);
    for e in entries {
        let err = |message: String| HarnessError::Config {
            line: e.line,
            message: format!("{}: {message}", e.key),
        };
        let v = e.value.as_str();
        match e.key.as_str() {
            k @ ("rho" | "rho1" | "rho2" | "power" | "antennas") => {
                let var = SweepVar::parse(k).expect("axis key");
                let values = parse_grid(v).map_err(err)?;
                let existing = spec.axes.iter().position(|a| a.var == var);
                let single = values.len() == 1 && existing.is_none() && !matches!(var, SweepVar::Rho1 | SweepVar::Rho2);
                match (var, single) {
                    (SweepVar::Rho, true) => spec.rho = Some(values[0]),
                    (SweepVar::Power, true) => spec.power = values[0],
                    (SweepVar::Antennas, true) => {
                        let k = values[0];
                        if !(k >= 1.0 && k.fract() == 0.0) {
                            return Err(err(format!("{k} is not a positive integer")));
                        }
                        fixed_antennas = Some(k as usize);
                    }
                    _ => match existing {
                        Some(i) => spec.axes[i].values = values,
                        None => spec.axes.push(Axis::new(var, values)),
                    },
                }
            }
            "channel" => {
                if let Some(m) = v.strip_prefix("uniform:") {
                    uniform_magnitude = Some(parse_num(m).map_err(err)?);
                } else {
                    spec.channel = ChannelSpec::Magnitudes(parse_list(v).map_err(err)?);
                }
            }
            "sigma_a_sq" => noise.0 = parse_num(v).map_err(err)?,
            "sigma_cov_sq" => noise.1 = parse_num(v).map_err(err)?,
            "sigma_rec_sq" => noise.2 = parse_num(v).map_err(err)?,
            "scheme" => {
                spec.scheme = match v {
                    "optimal" => DesignScheme::Optimal,
                    "egc" => DesignScheme::Egc,
                    "mrc" => DesignScheme::Mrc,
                    "explicit" => DesignScheme::Explicit {
                        alpha: vec![],
                        beta: vec![],
                    },
                    _ => return Err(err(format!("unknown scheme '{v}'"))),
                }
            }
            "alpha" => alpha = Some(parse_list(v).map_err(err)?),
            "beta" => beta = Some(parse_list(v).map_err(err)?),
            "methods" => {
                spec.methods = v
                    .split(',')
                    .map(|m| Method::parse(m.trim()).ok_or_else(|| err(format!("unknown method '{}'", m.trim()))))
                    .collect::<Result<_, _>>()?;
            }
            "n_joint" => spec.mc.n_joint = parse_int(v).map_err(err)?,
            "n_outer" => spec.mc.n_outer = parse_int(v).map_err(err)?,
            "n_inner" => spec.mc.n_inner = parse_int(v).map_err(err)?,
            "bins_per_dim" => spec.mc.bins_per_dim = Some(parse_int(v).map_err(err)?),
            "cond_bins_per_dim" => spec.mc.cond_bins_per_dim = Some(parse_int(v).map_err(err)?),
            "seed" => spec.seed = parse_int(v).map_err(err)?,
            "out" => spec.out = Some(PathBuf::from(v)),
            other => return Err(err(format!("unknown key '{other}'"))),
        }
    }
    spec.noise = NoiseProfile::new(noise.0, noise.1, noise.2)?;
    if uniform_magnitude.is_some() || fixed_antennas.is_some() {
        match (&spec.channel, uniform_magnitude) {
            (ChannelSpec::Magnitudes(m), None) => {
                if fixed_antennas != Some(m.len()) {
                    return Err(HarnessError::InvalidSpec(format!(
                        "antennas = {} does not match the {} channel magnitudes",
                        fixed_antennas.unwrap_or(0),
                        m.len()
                    )));
                }
            }
            (ChannelSpec::Uniform { antennas, magnitude }, None) => {
                spec.channel = ChannelSpec::Uniform {
                    antennas: fixed_antennas.unwrap_or(*antennas),
                    magnitude: *magnitude,
                }
            }
            (_, Some(magnitude)) => {
                spec.channel = ChannelSpec::Uniform {
                    antennas: fixed_antennas.unwrap_or(1),
                    magnitude,
                }
            }
        }
    }
    match (alpha, beta) {
        (None, None) => {}
        (Some(a), Some(b)) => spec.scheme = DesignScheme::Explicit { alpha: a, beta: b },
        (Some(w), None) | (None, Some(w)) => {
            spec.scheme = DesignScheme::Explicit {
                alpha: w.clone(),
                beta: w,
            }
        }
    }
    if let DesignScheme::Explicit { alpha, .. } = &spec.scheme {
        if alpha.is_empty() {
            return Err(HarnessError::InvalidSpec("scheme = explicit needs alpha and beta".into()));
        }
    }
    spec.check()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.2:0.8:4").unwrap().len(), 4);
        assert_eq!(parse_grid("1, 2 ,3").unwrap(), vec![1.0, 2.0, 3.0]);
        let g = parse_grid("log:1:10000:5").unwrap();
        assert!((g[2] - 100.0).abs() < 1e-9 && (g[4] - 1e4).abs() < 1e-8);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("log:0:1:3").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn full_file() {
        let text = "# comment\nchannel = 1, 1\nalpha = 0.5,0.5\nbeta=0.5,0.5\npower = 10,100,1000 # axis\nrho = 0.02:0.98:49\nmethods = closed-form\nseed = 7\n";
        let spec = build_spec(SweepSpec::default(), &parse_entries(text).unwrap()).unwrap();
        assert_eq!(spec.len(), 147);
        assert_eq!(spec.axes[0].var, SweepVar::Power);
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.channel, ChannelSpec::Magnitudes(vec![1.0, 1.0]));
    }

    #[test]
    fn single_value_keeps_a_preset_axis() {
        let base = crate::harness::figures::preset("fig5").unwrap();
        let spec = build_spec(base, &[parse_override("antennas=10").unwrap()]).unwrap();
        assert_eq!(spec.axes[1], Axis::new(SweepVar::Antennas, vec![10.0]));
        assert_eq!(spec.len(), 3);
    }

    #[test]
    fn overrides_replace_in_place() {
        let base = parse_entries("power = 10,100\nrho = 0.5\n").unwrap();
        let merged = merge(base, vec![parse_override("power=1000").unwrap(), parse_override("antennas=1:3:3").unwrap()]);
        let spec = build_spec(SweepSpec::default(), &merged).unwrap();
        assert_eq!(spec.power, 1000.0);
        assert_eq!(spec.rho, Some(0.5));
        assert_eq!(spec.axes, vec![Axis::new(SweepVar::Antennas, vec![1.0, 2.0, 3.0])]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = build_spec(SweepSpec::default(), &parse_entries("\n\nbogus = 1\n").unwrap()).unwrap_err();
        assert!(matches!(e, HarnessError::Config { line: 3, .. }), "{e}");
        let e = parse_entries("no equals sign").unwrap_err();
        assert_eq!(e.code(), "invalid-config-file");
        let e = build_spec(SweepSpec::default(), &parse_entries("methods = foo").unwrap()).unwrap_err();
        assert!(e.to_string().contains("unknown method"));
    }

    #[test]
    fn uniform_channel_with_antenna_count() {
        let spec = build_spec(
            SweepSpec::default(),
            &parse_entries("channel = uniform:2\nantennas = 4").unwrap(),
        )
        .unwrap();
        assert_eq!(
            spec.channel,
            ChannelSpec::Uniform {
                antennas: 4,
                magnitude: 2.0
            }
        );
    }
}
