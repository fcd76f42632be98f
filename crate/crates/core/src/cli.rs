//! Command-line front end: flag parsing, config merging, report output and
//! exit codes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::checks::{self, CheckLine};
use crate::config::{Command, ExperimentConfig, Format};
use crate::error::Error;
use crate::experiments::{self, Provenance};
use crate::model::builtin_models;
use crate::path::KeySpace;
use crate::runner::{resolve_workers, Setup};
use crate::scheme::simulate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_CHECK: i32 = 4;
pub const EXIT_NOISE_FLOOR: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "sde-errlab", version, about = "Monte Carlo error lab for Euler-type SDE schemes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// RMS sup errors over an n ladder with log-log rate fits.
    StrongRate(RunArgs),
    /// Normalized terminal error against the limit law (KS + moments).
    ErrorLaw(RunArgs),
    /// Distribution of the Z functionals.
    Zstats(RunArgs),
    /// Moments of the limit error process at checkpoints, heavy-tail flag.
    Moments(RunArgs),
    /// Weak error of a bounded Lipschitz functional against the log bound.
    WeakError(RunArgs),
    /// Print the model registry, one JSON object per line.
    ListModels,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameter override, `name=value` (repeatable).
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[arg(long)]
    pub x0: Option<f64>,
    /// Horizon T.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub refinement: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, visible_alias = "scheme", value_delimiter = ',')]
    pub schemes: Option<Vec<String>>,
    /// Weak-error functional: clamp_unit or capped_unit.
    #[arg(long)]
    pub functional: Option<String>,
    /// Tail thresholds for the running-maximum check.
    #[arg(long, value_delimiter = ',')]
    pub tail_x: Option<Vec<f64>>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Evaluate acceptance checks; exit 4 if any fails.
    #[arg(long)]
    pub check: bool,
    /// Write the first path's Brownian record as `t,W` CSV.
    #[arg(long)]
    pub dump_path: Option<PathBuf>,
    /// Write the first path's scheme trajectory as `k,t,value` CSV.
    #[arg(long)]
    pub dump_traj: Option<PathBuf>,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

impl RunArgs {
    /// File config (or defaults) with command-line flags applied on top.
    pub fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = &self.$field { c.$field = v.clone(); })*};
        }
        set!(model, x0, t, n_list, n, paths, seed, refinement, schemes, functional, tail_x, format);
        for (k, v) in &self.params {
            c.params.insert(k.clone(), *v);
        }
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        if self.dump_path.is_some() {
            c.dump_path = self.dump_path.clone();
        }
        if self.dump_traj.is_some() {
            c.dump_traj = self.dump_traj.clone();
        }
        Ok(c)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain { .. } => EXIT_DOMAIN,
        Error::NoiseFloor(_) => EXIT_NOISE_FLOOR,
        Error::Config(_) | Error::InvalidArgument(_) | Error::GridMismatch(_) => EXIT_CONFIG,
    }
}

/// A rendered report plus what the exit status needs to know about it.
pub struct Rendered {
    pub text: String,
    pub checks: Vec<CheckLine>,
    pub noise_floor: bool,
}

fn csv_header(p: &Provenance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# command: {}", p.command);
    let _ = writeln!(s, "# version: {}", p.version);
    let _ = writeln!(s, "# seed: {}", p.seed);
    let _ = writeln!(s, "# config: {}", serde_json::to_string(&p.config).expect("config serializes"));
    let _ = writeln!(s, "# reference_method: {}", p.reference_method);
    let _ = writeln!(s, "# refinement: {}", p.refinement);
    if let Some(c) = &p.reference_check {
        let _ = writeln!(s, "# reference_check: {}", serde_json::to_string(c).expect("check serializes"));
    }
    for n in &p.notes {
        let _ = writeln!(s, "# note: {n}");
    }
    s
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Runs one experiment subcommand and renders its report.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Rendered, Error> {
    let workers = resolve_workers(cfg.workers);
    let csv = cfg.format == Format::Csv;
    let rendered = match command {
        Command::StrongRate => {
            let r = experiments::strong_rate(cfg, workers)?;
            let text = if csv {
                let mut s = csv_header(&r.provenance);
                s.push_str("scheme,n,paths,rms_sup,rms_sup_se,rms_terminal,mean_Un,var_Un,exploded,m2_normalized_sup\n");
                for sr in &r.schemes {
                    for e in &sr.stats {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{},{},{},{},{}",
                            sr.scheme, e.n, e.paths, e.rms_sup, e.rms_sup_se, e.rms_terminal, e.mean_un, e.var_un,
                            e.exploded, e.m2_normalized_sup
                        );
                    }
                }
                for sr in &r.schemes {
                    match &sr.fit {
                        Some(f) => {
                            let _ = writeln!(
                                s,
                                "# fit: scheme={} alpha={} intercept={} r2={} slope_se={}",
                                sr.scheme, f.alpha, f.intercept, f.r2, f.slope_se
                            );
                        }
                        None => {
                            let _ = writeln!(
                                s,
                                "# fit: scheme={} unavailable ({})",
                                sr.scheme,
                                sr.fit_error.as_deref().unwrap_or("")
                            );
                        }
                    }
                }
                s
            } else {
                json(&r)
            };
            Rendered { text, checks: checks::strong_rate_checks(&r), noise_floor: r.at_noise_floor() }
        }
        Command::ErrorLaw => {
            let r = experiments::error_law(cfg, workers)?;
            let text = if csv {
                let mut s = csv_header(&r.provenance);
                s.push_str("t,mean,se_mean,m2,se_m2,m2_max\n");
                for c in &r.checkpoints {
                    let _ = writeln!(s, "{},{},{},{},{},{}", c.t, c.mean, c.se_mean, c.m2, c.se_m2, c.m2_max);
                }
                let _ = writeln!(s, "# ks: d={} critical={} pass={}", r.ks.d, r.ks.critical_05, r.ks.pass);
                if let Some(h) = &r.heavy_tail {
                    let _ = writeln!(s, "# heavy_tail: hill={} ci=({},{}) flag={}", h.hill, h.ci.0, h.ci.1, h.flag);
                }
                s
            } else {
                json(&r)
            };
            Rendered { text, checks: checks::error_law_checks(&r), noise_floor: false }
        }
        Command::Zstats => {
            let r = experiments::zstats(cfg, workers)?;
            let text = if csv {
                let mut s = csv_header(&r.provenance);
                s.push_str("statistic,mean,se_mean,variance,rms\n");
                let _ = writeln!(s, "z11,{},0,0,{}", r.z11, r.z11);
                for (name, z) in [("z12", &r.z12), ("z21", &r.z21), ("z22", &r.z22)] {
                    let _ = writeln!(s, "{name},{},{},{},{}", z.mean, z.se_mean, z.variance, z.rms);
                }
                let _ = writeln!(s, "# ks_z22: d={} critical={} pass={}", r.ks_z22.d, r.ks_z22.critical_05, r.ks_z22.pass);
                s
            } else {
                json(&r)
            };
            Rendered { text, checks: checks::zstats_checks(&r), noise_floor: false }
        }
        Command::Moments => {
            let r = experiments::moments(cfg, workers)?;
            let text = if csv {
                let mut s = csv_header(&r.provenance);
                s.push_str("t,mean,se_mean,m2,se_m2,m2_max,se_m2_max,nonfinite\n");
                for c in &r.moments.checkpoints {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{}",
                        c.t, c.mean, c.se_mean, c.m2, c.se_m2, c.m2_max, c.se_m2_max, c.nonfinite
                    );
                }
                if let Some(h) = &r.heavy_tail {
                    let _ = writeln!(
                        s,
                        "# heavy_tail: hill={} ci=({},{}) k={} flag={} sensitivity=({},{})",
                        h.hill, h.ci.0, h.ci.1, h.k, h.flag, h.sensitivity.0, h.sensitivity.1
                    );
                }
                s
            } else {
                json(&r)
            };
            Rendered { text, checks: checks::moments_checks(&r), noise_floor: false }
        }
        Command::WeakError => {
            let r = experiments::weak_error(cfg, workers)?;
            let text = if csv {
                let mut s = csv_header(&r.provenance);
                s.push_str("n,estimate,se,bound_curve\n");
                for p in &r.report.points {
                    let _ = writeln!(s, "{},{},{},{}", p.n, p.estimate, p.se, p.bound_curve);
                }
                let t = &r.report.tail;
                let _ = writeln!(
                    s,
                    "# bound: C={} a={} kappa={} nu={} ({})",
                    r.report.c_fit, r.report.growth_exponent, t.kappa, t.nu, t.source
                );
                for tc in r.tail_checks.iter().flatten() {
                    let _ = writeln!(
                        s,
                        "# tail: x={} fraction={} ci=({},{}) bound={} pass={}",
                        tc.x, tc.exceed_fraction, tc.ci.0, tc.ci.1, tc.bound, tc.pass
                    );
                }
                s
            } else {
                json(&r)
            };
            Rendered { text, checks: checks::weak_error_checks(&r), noise_floor: r.report.noise_floor }
        }
    };
    Ok(rendered)
}

fn write_dumps(command: Command, cfg: &ExperimentConfig) -> Result<(), String> {
    if cfg.dump_path.is_none() && cfg.dump_traj.is_none() {
        return Ok(());
    }
    let n_max = match command {
        Command::StrongRate | Command::WeakError => *cfg.n_list.last().unwrap_or(&cfg.n),
        _ => cfg.n,
    };
    let model = cfg.build_model().map_err(|e| e.to_string())?;
    let scheme = cfg.single_scheme(&model).map_err(|e| e.to_string())?;
    let setup = Setup::new(model, cfg.x0).seed(cfg.seed).horizon(cfg.t).refinement(cfg.refinement);
    let grid = setup.grid(KeySpace::Primary, 0, n_max).map_err(|e| e.to_string())?;
    let create = |p: &PathBuf| std::fs::File::create(p).map_err(|e| format!("{}: {e}", p.display()));
    if let Some(p) = &cfg.dump_path {
        grid.write_csv(std::io::BufWriter::new(create(p)?)).map_err(|e| e.to_string())?;
    }
    if let Some(p) = &cfg.dump_traj {
        let tr = simulate(&setup.model, scheme, cfg.x0, n_max, &grid).map_err(|e| e.to_string())?;
        tr.write_csv(std::io::BufWriter::new(create(p)?)).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn command_of(sub: &Sub) -> Option<(Command, &RunArgs)> {
    match sub {
        Sub::StrongRate(a) => Some((Command::StrongRate, a)),
        Sub::ErrorLaw(a) => Some((Command::ErrorLaw, a)),
        Sub::Zstats(a) => Some((Command::Zstats, a)),
        Sub::Moments(a) => Some((Command::Moments, a)),
        Sub::WeakError(a) => Some((Command::WeakError, a)),
        Sub::ListModels => None,
    }
}

/// Parses `args` and runs; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let Some((command, run_args)) = command_of(&cli.command) else {
        let mut out = std::io::stdout().lock();
        for m in builtin_models() {
            let _ = writeln!(out, "{}", serde_json::to_string(&m.descriptor()).expect("descriptor serializes"));
        }
        return EXIT_OK;
    };
    let cfg = match run_args.resolve().and_then(|c| c.validate(command).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let rendered = match run(command, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = write_dumps(command, &cfg) {
        eprintln!("error: {e}");
        return EXIT_IO;
    }
    let written = match &cfg.output {
        Some(p) => std::fs::write(p, &rendered.text).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().lock().write_all(rendered.text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_IO;
    }
    if run_args.check {
        for l in &rendered.checks {
            eprintln!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
        }
        if !checks::all_pass(&rendered.checks) {
            return EXIT_CHECK;
        }
    }
    if rendered.noise_floor {
        eprintln!("warning: estimates are at the Monte Carlo noise floor");
        return EXIT_NOISE_FLOOR;
    }
    EXIT_OK
}
