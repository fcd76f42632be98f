//! Experiment drivers behind each CLI subcommand. Each returns a serializable
//! report that embeds its provenance.

use serde::Serialize;

use crate::config::{Command, ExperimentConfig};
use crate::error::{Error, Result};
use crate::erroranalysis::{aggregate, error_sample, fit_rate, z_functionals, ErrorStats, RateFit, ZStats};
use crate::limitlaw::{
    default_checkpoints, heavy_tail, moment_diagnostics, sample_error_law, sample_limit, CheckpointMoments,
    HeavyTail, MomentReport,
};
use crate::model::{Model, ModelDescriptor, Sde, StateDomain};
use crate::path::{normal_samples, BrownianGrid, KeySpace};
use crate::reference::reference;
use crate::runner::{check_reference, par_map, RefinementCheck, Setup};
use crate::scheme::{simulate, Scheme};
use crate::statkit::{ks_two_sample, summarize, KsResult};
use crate::weakerror::{estimate_weak_error, tail_probability_check, FunctionalSpec, TailCheck, WeakErrorReport};

/// Path index (in [`KeySpace::Auxiliary`]) of the synthetic N(0,1) stream.
const SYNTHETIC_NORMAL_INDEX: u64 = (1 << 62) - 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub reference_method: &'static str,
    pub refinement: usize,
    pub reference_check: Option<RefinementCheck>,
    pub notes: Vec<String>,
}

impl Provenance {
    fn new(command: Command, cfg: &ExperimentConfig, setup: Option<&Setup>) -> Self {
        Provenance {
            command: command.label(),
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config: cfg.clone(),
            reference_method: setup.map_or("none", |s| s.reference_method().label()),
            refinement: cfg.refinement,
            reference_check: None,
            notes: Vec::new(),
        }
    }

    fn attach_check(&mut self, check: RefinementCheck) {
        if !check.pass {
            self.notes.push(format!(
                "reference refinement check failed: doubling R moved X_T by {:.3e} RMS against a scheme error of {:.3e}",
                check.rms_refinement_change, check.rms_scheme_error
            ));
        }
        self.reference_check = Some(check);
    }
}

fn setup_for(cfg: &ExperimentConfig, model: Model, workers: usize) -> Setup {
    Setup::new(model, cfg.x0).seed(cfg.seed).horizon(cfg.t).refinement(cfg.refinement).workers(workers)
}

/// Half-line models violate the limit theorem's requirement that the
/// diffusion stays bounded away from zero on compacts.
fn outside_limit_hypotheses(model: &Model) -> bool {
    model.state_domain == StateDomain::PositiveHalfLine
}

const OUTSIDE_NOTE: &str =
    "model is outside the limit theorem's hypotheses (diffusion vanishes at 0); comparison is exploratory";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeRates {
    pub scheme: Scheme,
    pub stats: Vec<ErrorStats>,
    /// Fit of RMS sup error against `n`.
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongRateReport {
    pub provenance: Provenance,
    pub model: ModelDescriptor,
    pub paths: usize,
    pub schemes: Vec<SchemeRates>,
}

impl StrongRateReport {
    pub fn at_noise_floor(&self) -> bool {
        self.schemes.iter().any(|s| s.fit.is_none())
    }
}

pub fn strong_rate(cfg: &ExperimentConfig, workers: usize) -> Result<StrongRateReport> {
    cfg.validate(Command::StrongRate)?;
    let model = cfg.build_model()?;
    let schemes = cfg.resolved_schemes(&model)?;
    let setup = setup_for(cfg, model, workers);
    let ns = &cfg.n_list;
    let n_max = *ns.last().expect("validated");
    let mut provenance = Provenance::new(Command::StrongRate, cfg, Some(&setup));
    provenance.attach_check(check_reference(&setup, schemes[0], ns[0], n_max)?);
    let rows = par_map(workers, cfg.paths, |i| {
        let g = setup.grid(KeySpace::Primary, i, n_max)?;
        let r = reference(&setup.model, setup.x0, &g, setup.refinement)?;
        let mut out = Vec::with_capacity(schemes.len() * ns.len());
        for &s in &schemes {
            for &n in ns {
                let tr = simulate(&setup.model, s, setup.x0, n, &g)?;
                out.push(error_sample(&tr, &r, &g)?);
            }
        }
        Ok(out)
    })?;
    let mut per_scheme = Vec::with_capacity(schemes.len());
    for (si, &scheme) in schemes.iter().enumerate() {
        let stats: Vec<ErrorStats> = ns
            .iter()
            .enumerate()
            .map(|(ni, &n)| {
                let col: Vec<_> = rows.iter().map(|r| r[si * ns.len() + ni]).collect();
                aggregate(n, &col)
            })
            .collect();
        let points: Vec<(usize, f64)> = stats.iter().map(|s| (s.n, s.rms_sup)).collect();
        let (fit, fit_error) = match fit_rate(&points) {
            Ok(f) => (Some(f), None),
            Err(e @ Error::NoiseFloor(_)) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        per_scheme.push(SchemeRates { scheme, stats, fit, fit_error });
    }
    Ok(StrongRateReport { provenance, model: setup.model.descriptor(), paths: cfg.paths, schemes: per_scheme })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorLawReport {
    pub provenance: Provenance,
    pub model: String,
    pub scheme: Scheme,
    pub n: usize,
    #[serde(rename = "M")]
    pub paths: usize,
    pub checkpoints: Vec<CheckpointMoments>,
    pub moments: MomentReport,
    pub ks: KsResult,
    /// Non-finite samples dropped before the KS test (scheme side, limit side).
    pub ks_excluded: (usize, usize),
    pub scheme_mean: f64,
    pub scheme_variance: f64,
    pub limit_mean: f64,
    pub limit_variance: f64,
    pub heavy_tail: Option<HeavyTail>,
    pub outside_hypotheses: bool,
}

fn finite(v: &[f64]) -> Vec<f64> {
    v.iter().copied().filter(|x| x.is_finite()).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    summarize(v).map(|s| (s.mean, s.variance)).unwrap_or((f64::NAN, f64::NAN))
}

pub fn error_law(cfg: &ExperimentConfig, workers: usize) -> Result<ErrorLawReport> {
    cfg.validate(Command::ErrorLaw)?;
    let model = cfg.build_model()?;
    let scheme = cfg.single_scheme(&model)?;
    let setup = setup_for(cfg, model, workers);
    let mut provenance = Provenance::new(Command::ErrorLaw, cfg, Some(&setup));
    provenance.attach_check(check_reference(&setup, scheme, cfg.n, cfg.n)?);
    let outside = outside_limit_hypotheses(&setup.model);
    if outside {
        provenance.notes.push(OUTSIDE_NOTE.into());
    }
    let checkpoints = default_checkpoints(cfg.t);
    let s = sample_error_law(&setup, scheme, cfg.n, cfg.paths, &checkpoints)?;
    let (a, b) = (finite(&s.scheme_terminal), finite(&s.limit_terminal));
    let ks = ks_two_sample(&a, &b)?;
    let moments = moment_diagnostics(&checkpoints, &s.limit_checkpoints, setup.model.drift_is_constant())?;
    let (scheme_mean, scheme_variance) = mean_var(&a);
    let (limit_mean, limit_variance) = mean_var(&b);
    Ok(ErrorLawReport {
        provenance,
        model: setup.model.name().to_string(),
        scheme,
        n: cfg.n,
        paths: cfg.paths,
        checkpoints: moments.checkpoints.clone(),
        moments,
        ks,
        ks_excluded: (s.scheme_terminal.len() - a.len(), s.limit_terminal.len() - b.len()),
        scheme_mean,
        scheme_variance,
        limit_mean,
        limit_variance,
        heavy_tail: heavy_tail(&s.limit_terminal).ok(),
        outside_hypotheses: outside,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZMoments {
    pub mean: f64,
    pub se_mean: f64,
    pub variance: f64,
    pub se_variance: Option<f64>,
    pub rms: f64,
}

fn z_moments(v: &[f64]) -> ZMoments {
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    match summarize(v) {
        Ok(s) => ZMoments { mean: s.mean, se_mean: s.se_mean, variance: s.variance, se_variance: s.se_variance, rms },
        Err(_) => ZMoments { mean: v[0], se_mean: f64::NAN, variance: f64::NAN, se_variance: None, rms },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZStatsReport {
    pub provenance: Provenance,
    pub n: usize,
    pub paths: usize,
    pub horizon: f64,
    /// Deterministic `T² / (2√n)`.
    pub z11: f64,
    /// Largest `|z11 - T²/(2√n)|` over paths.
    pub z11_max_deviation: f64,
    pub z12: ZMoments,
    pub z21: ZMoments,
    pub z22: ZMoments,
    /// `√2 z22 / T` against synthetic standard normal draws.
    pub ks_z22: KsResult,
}

pub fn zstats(cfg: &ExperimentConfig, workers: usize) -> Result<ZStatsReport> {
    cfg.validate(Command::Zstats)?;
    let provenance = Provenance::new(Command::Zstats, cfg, None);
    let z: Vec<ZStats> = par_map(workers, cfg.paths, |i| {
        let g = BrownianGrid::generate(cfg.seed, KeySpace::Primary.key(i), cfg.t, cfg.refinement * cfg.n)?;
        z_functionals(&g, cfg.n)
    })?;
    let closed = crate::erroranalysis::z11_closed_form(cfg.n, cfg.t);
    let pick = |f: fn(&ZStats) -> f64| z.iter().map(f).collect::<Vec<f64>>();
    let z22 = pick(|s| s.z22);
    let scaled: Vec<f64> = z22.iter().map(|x| std::f64::consts::SQRT_2 * x / cfg.t).collect();
    let synthetic = normal_samples(cfg.seed, KeySpace::Auxiliary.key(SYNTHETIC_NORMAL_INDEX), cfg.paths);
    Ok(ZStatsReport {
        provenance,
        n: cfg.n,
        paths: cfg.paths,
        horizon: cfg.t,
        z11: closed,
        z11_max_deviation: z.iter().map(|s| (s.z11 - closed).abs()).fold(0.0, f64::max),
        z12: z_moments(&pick(|s| s.z12)),
        z21: z_moments(&pick(|s| s.z21)),
        z22: z_moments(&z22),
        ks_z22: ks_two_sample(&scaled, &synthetic)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentsReport {
    pub provenance: Provenance,
    pub model: String,
    pub n: usize,
    #[serde(rename = "M")]
    pub paths: usize,
    pub moments: MomentReport,
    pub heavy_tail: Option<HeavyTail>,
    pub outside_hypotheses: bool,
}

/// Moments of the limit process `U`, stepped on the fine grid `R n`.
pub fn moments(cfg: &ExperimentConfig, workers: usize) -> Result<MomentsReport> {
    cfg.validate(Command::Moments)?;
    let model = cfg.build_model()?;
    let scheme = cfg.single_scheme(&model)?;
    let setup = setup_for(cfg, model, workers);
    let mut provenance = Provenance::new(Command::Moments, cfg, Some(&setup));
    provenance.attach_check(check_reference(&setup, scheme, cfg.n, cfg.n)?);
    let outside = outside_limit_hypotheses(&setup.model);
    if outside {
        provenance.notes.push(OUTSIDE_NOTE.into());
    }
    let checkpoints = default_checkpoints(cfg.t);
    let samples = sample_limit(&setup, cfg.n, cfg.paths, &checkpoints)?;
    let terminal: Vec<f64> = samples.last().expect("checkpoints nonempty").iter().map(|p| p.0).collect();
    Ok(MomentsReport {
        provenance,
        model: setup.model.name().to_string(),
        n: cfg.n,
        paths: cfg.paths,
        moments: moment_diagnostics(&checkpoints, &samples, setup.model.drift_is_constant())?,
        heavy_tail: heavy_tail(&terminal).ok(),
        outside_hypotheses: outside,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakErrorExperiment {
    pub provenance: Provenance,
    pub model: String,
    pub scheme: Scheme,
    #[serde(flatten)]
    pub report: WeakErrorReport,
    pub nonincreasing_within_2se: bool,
    pub bound_dominates: bool,
    pub tail_checks: Option<Vec<TailCheck>>,
}

pub fn weak_error(cfg: &ExperimentConfig, workers: usize) -> Result<WeakErrorExperiment> {
    cfg.validate(Command::WeakError)?;
    let model = cfg.build_model()?;
    let scheme = cfg.single_scheme(&model)?;
    let spec = FunctionalSpec::by_name(&cfg.functional)?;
    let setup = setup_for(cfg, model, workers);
    let ns = &cfg.n_list;
    let mut provenance = Provenance::new(Command::WeakError, cfg, Some(&setup));
    provenance.attach_check(check_reference(&setup, scheme, ns[0], *ns.last().expect("validated"))?);
    provenance
        .notes
        .push("the bound's threshold n0 is not computable; small n may precede its regime".into());
    let report = estimate_weak_error(&setup, scheme, &spec, ns, cfg.paths)?;
    let tail_checks = if setup.model.name() == "cev" {
        Some(tail_probability_check(&report.running_max, cfg.x0, &cfg.tail_x)?)
    } else {
        None
    };
    Ok(WeakErrorExperiment {
        provenance,
        model: setup.model.name().to_string(),
        scheme,
        nonincreasing_within_2se: report.nonincreasing_within_2se(),
        bound_dominates: report.bound_dominates(),
        report,
        tail_checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zstats_single_path_closed_form() {
        let cfg = ExperimentConfig { n: 4, paths: 1, ..Default::default() };
        let r = zstats(&cfg, 1).unwrap();
        assert_eq!(r.z11, 0.25);
        assert!(r.z11_max_deviation <= 1e-12);
    }

    #[test]
    fn strong_rate_shape() {
        let cfg = ExperimentConfig { n_list: vec![4, 8, 16], paths: 20, refinement: 4, ..Default::default() };
        let r = strong_rate(&cfg, 2).unwrap();
        assert_eq!(r.schemes.len(), 2);
        assert!(r.schemes.iter().all(|s| s.stats.len() == 3 && s.fit.is_some()));
        assert_eq!(r.provenance.reference_method, "exact_gbm");
    }

    #[test]
    fn euler_on_cir_is_a_domain_error() {
        let cfg = ExperimentConfig {
            model: "cir".into(),
            params: [("a".to_string(), 0.05), ("b".to_string(), 1.0), ("sigma".to_string(), 1.5)].into(),
            schemes: vec!["euler".into()],
            n_list: vec![2, 4, 8],
            paths: 200,
            refinement: 2,
            ..Default::default()
        };
        assert!(matches!(strong_rate(&cfg, 1), Err(Error::Domain { .. })));
    }

    #[test]
    fn outside_hypotheses_noted() {
        let cfg = ExperimentConfig { model: "cir".into(), n: 8, paths: 100, refinement: 4, ..Default::default() };
        let r = moments(&cfg, 1).unwrap();
        assert!(r.outside_hypotheses);
        assert!(r.provenance.notes.iter().any(|n| n.contains("hypotheses")));
    }
}
