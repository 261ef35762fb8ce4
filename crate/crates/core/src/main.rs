use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use splitrx::harness::config::{build_spec, merge, parse_entries, parse_list, parse_override};
use splitrx::harness::{figures, format_sig, run_sweep, selftest, HarnessError, SweepSpec};
use splitrx::mi_closed::{self, mi_approx, mi_max};
use splitrx::mi_mc::{estimate_mi, McSettings};
use splitrx::model::{validate, ChannelVector, NoiseProfile, ReceiverDesign, SystemConfig, TransmitConfig};
use splitrx::optimizer::{self, numeric_optimize, optimal_design, optimal_rho, NumericSettings};

#[derive(Parser)]
#[command(name = "splitrx", version, about = "Multi-antenna ED-CD splitting receiver toolkit")]
struct Cli {
    /// Master seed for Monte Carlo estimates and sweeps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "SPLITRX_THREADS", default_value_t = 0)]
    threads: usize,
    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// High-SNR closed-form MI of a splitting design.
    MiApprox(SystemArgs),
    /// Monte Carlo estimate of the exact MI.
    MiMc {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_enum, default_value_t = Mode::Splitting)]
        mode: Mode,
        #[arg(long)]
        n_joint: Option<usize>,
        #[arg(long)]
        n_outer: Option<usize>,
        #[arg(long)]
        n_inner: Option<usize>,
        #[arg(long)]
        bins_per_dim: Option<usize>,
        #[arg(long)]
        cond_bins_per_dim: Option<usize>,
    },
    /// Closed-form optimal design, optionally checked numerically.
    Optimize {
        #[command(flatten)]
        system: SystemArgs,
        /// Also run the numerical optimizer.
        #[arg(long)]
        numeric: bool,
        /// Let the numerical optimizer pick one ratio per antenna.
        #[arg(long)]
        per_antenna: bool,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
    /// Run a sweep from a config file and/or key=value overrides.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// key=value override, applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run a named preset sweep (fig2..fig6) and print CSV.
    Figure {
        name: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the acceptance checks (all, or the listed ids).
    Selftest { ids: Vec<u8> },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Splitting,
    Cd,
    Ed,
}

#[derive(Args)]
struct SystemArgs {
    /// Channel magnitudes, comma separated.
    #[arg(long, default_value = "1")]
    channel: String,
    /// Channel phases in radians, comma separated.
    #[arg(long)]
    phases: Option<String>,
    #[arg(long, default_value_t = 100.0)]
    power: f64,
    #[arg(long, default_value_t = 0.01)]
    sigma_a_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_cov_sq: f64,
    #[arg(long, default_value_t = 0.01)]
    sigma_rec_sq: f64,
    /// Splitting ratio, shared or one per antenna (default: optimal).
    #[arg(long)]
    rho: Option<String>,
    /// CD weights (default: optimal).
    #[arg(long)]
    alpha: Option<String>,
    /// ED weights (default: optimal).
    #[arg(long)]
    beta: Option<String>,
}

struct CliError {
    code: &'static str,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: "invalid-argument",
            message: message.into(),
        }
    }
}

macro_rules! impl_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self { code: e.code(), message: e.to_string() }
            }
        }
    )*};
}

impl_from!(
    splitrx::model::ModelError,
    splitrx::mi_mc::McError,
    splitrx::mi_closed::ClosedFormError,
    splitrx::optimizer::OptimizerError,
    HarnessError
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: "io",
            message: e.to_string(),
        }
    }
}

fn list(flag: &str, s: &str) -> Result<Vec<f64>, CliError> {
    parse_list(s).map_err(|e| CliError::usage(format!("--{flag}: {e}")))
}

impl SystemArgs {
    fn parts(&self) -> Result<(ChannelVector, NoiseProfile, TransmitConfig), CliError> {
        let mags = list("channel", &self.channel)?;
        let channel = match &self.phases {
            Some(p) => ChannelVector::new(mags, list("phases", p)?)?,
            None => ChannelVector::from_magnitudes(mags)?,
        };
        let noise = NoiseProfile::new(self.sigma_a_sq, self.sigma_cov_sq, self.sigma_rec_sq)?;
        Ok((channel, noise, TransmitConfig::new(self.power)?))
    }

    fn config(&self, mode: Mode) -> Result<SystemConfig, CliError> {
        let (channel, noise, tx) = self.parts()?;
        let k = channel.len();
        let weights = |flag: &str, v: &Option<String>| -> Result<Vec<f64>, CliError> {
            match v {
                Some(s) => list(flag, s),
                None => Ok(optimizer::canonical_weights(&channel)),
            }
        };
        let alpha = weights("alpha", &self.alpha)?;
        let beta = weights("beta", &self.beta)?;
        let design = match mode {
            Mode::Cd => ReceiverDesign::cd_only(alpha),
            Mode::Ed => ReceiverDesign::ed_only(beta),
            Mode::Splitting => {
                let rho = match &self.rho {
                    Some(s) => {
                        let r = list("rho", s)?;
                        if r.len() == 1 {
                            vec![r[0]; k]
                        } else {
                            r
                        }
                    }
                    None => vec![optimal_rho(&noise)?.rho_star; k],
                };
                ReceiverDesign::splitting(rho, alpha, beta)
            }
        };
        Ok(validate(channel, noise, design, tx)?)
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format_sig(*x, 9)).collect::<Vec<_>>().join(",")
}

fn sweep_spec(base: SweepSpec, file: Option<&PathBuf>, set: &[String], seed: Option<u64>) -> Result<SweepSpec, CliError> {
    let mut entries = match file {
        Some(p) => parse_entries(&std::fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let overrides = set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    entries = merge(entries, overrides);
    let mut spec = build_spec(base, &entries)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn run(cli: &Cli) -> Result<(String, bool), CliError> {
    let mut out = String::new();
    let mut ok = true;
    match &cli.command {
        Command::MiApprox(sys) => {
            let cfg = sys.config(Mode::Splitting)?;
            let v = mi_approx(&cfg)?;
            let q = mi_closed::aux_quantities(&cfg)?;
            let _ = writeln!(out, "mi_bits = {}", format_sig(v.value, 9));
            let _ = writeln!(out, "method = {}", v.method.as_str());
            let _ = writeln!(out, "rho = {}", fmt_list(&cfg.design().rho));
            let _ = writeln!(out, "A = {}\nC = {}\ngamma = {}", format_sig(q.a, 9), format_sig(q.c, 9), format_sig(q.gamma, 9));
        }
        Command::MiMc {
            system,
            mode,
            n_joint,
            n_outer,
            n_inner,
            bins_per_dim,
            cond_bins_per_dim,
        } => {
            let cfg = system.config(*mode)?;
            let d = McSettings::default();
            let settings = McSettings {
                n_joint: n_joint.unwrap_or(d.n_joint),
                n_outer: n_outer.unwrap_or(d.n_outer),
                n_inner: n_inner.unwrap_or(d.n_inner),
                bins_per_dim: bins_per_dim.or(d.bins_per_dim),
                cond_bins_per_dim: cond_bins_per_dim.or(d.cond_bins_per_dim),
                seed: cli.seed.unwrap_or(d.seed),
            };
            let est = estimate_mi(&cfg, &settings)?;
            let _ = writeln!(out, "mi_bits = {}", format_sig(est.value, 9));
            let _ = writeln!(out, "std_error = {}", format_sig(est.std_error, 9));
            let _ = writeln!(out, "method = {}", est.method.as_str());
            if let Some(diag) = est.diagnostics {
                let s = diag.settings;
                let _ = writeln!(
                    out,
                    "n_joint = {}\nn_outer = {}\nn_inner = {}\njoint_bins_per_dim = {}\ncond_bins_per_dim = {}\nseed = {}",
                    s.n_joint, s.n_outer, s.n_inner, diag.joint_bins, diag.cond_bins, s.seed
                );
                if cfg.mode() == splitrx::model::ReceiverMode::Splitting {
                    let _ = writeln!(out, "closed_form_bits = {}", format_sig(mi_approx(&cfg)?.value, 9));
                }
            }
        }
        Command::Optimize {
            system,
            numeric,
            per_antenna,
            restarts,
        } => {
            let (channel, noise, tx) = system.parts()?;
            let rho = optimal_rho(&noise)?;
            let design = optimal_design(&channel, &noise)?;
            let _ = writeln!(out, "regime = {}", rho.regime.as_str());
            let _ = writeln!(out, "rho_star = {}", format_sig(rho.rho_star, 9));
            if let Some(u) = rho.upsilon {
                let _ = writeln!(out, "upsilon = {}", format_sig(u, 9));
            }
            if let Some(p) = rho.phi {
                let _ = writeln!(out, "phi = {}", format_sig(p, 9));
            }
            let _ = writeln!(out, "psi = {}", format_sig(rho.psi, 9));
            let _ = writeln!(out, "fallback = {}", rho.fallback);
            let _ = writeln!(out, "alpha_star = {}", fmt_list(&design.alpha_star));
            let _ = writeln!(out, "beta_star = {}", fmt_list(&design.beta_star));
            let _ = writeln!(out, "mi_max_bits = {}", format_sig(mi_max(&channel, &noise, &tx, rho.rho_star)?.value, 9));
            if *numeric {
                let settings = NumericSettings {
                    restarts: *restarts,
                    per_antenna_rho: *per_antenna,
                    seed: cli.seed.unwrap_or(NumericSettings::default().seed),
                    ..NumericSettings::default()
                };
                let r = numeric_optimize(&channel, &noise, &tx, &settings)?;
                let _ = writeln!(out, "numeric_mi_bits = {}", format_sig(r.mi, 9));
                let _ = writeln!(out, "numeric_rho = {}", fmt_list(&r.design.rho));
                let _ = writeln!(out, "numeric_alpha = {}", fmt_list(&r.design.alpha));
                let _ = writeln!(out, "numeric_beta = {}", fmt_list(&r.design.beta));
                let _ = writeln!(out, "numeric_converged = {}", r.converged);
            }
        }
        Command::Sweep { config, set } => {
            let spec = sweep_spec(SweepSpec::default(), config.as_ref(), set, cli.seed)?;
            out = run_sweep(&spec)?.to_csv();
            if cli.out.is_none() {
                if let Some(p) = &spec.out {
                    std::fs::write(p, &out)?;
                    out.clear();
                }
            }
        }
        Command::Figure { name, set } => {
            let spec = sweep_spec(figures::preset(name)?, None, set, cli.seed)?;
            out = run_sweep(&spec)?.to_csv();
        }
        Command::Selftest { ids } => {
            for c in selftest::criteria() {
                if !ids.is_empty() && !ids.contains(&c.id) {
                    continue;
                }
                let r = selftest::run(&c);
                ok &= r.passed;
                println!("{}", r.line());
                let _ = writeln!(out, "{}", r.line());
            }
            if cli.out.is_none() {
                out.clear();
            }
        }
    }
    Ok((out, ok))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("ERROR threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok((text, ok)) => {
            if let Some(path) = &cli.out {
                if let Err(e) = std::fs::write(path, &text) {
                    eprintln!("ERROR io: {e}");
                    return ExitCode::FAILURE;
                }
            } else {
                print!("{text}");
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("ERROR selftest-failed: some acceptance criteria failed");
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("ERROR {}: {}", e.code, e.message);
            ExitCode::from(2)
        }
    }
}
