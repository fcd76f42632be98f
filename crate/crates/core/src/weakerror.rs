//! Weak errors `|E g(X^n_T) - E g(X_T)|` against the logarithmic bound
//! `C (‖g‖ + G + 1) (log n)^{-ν/a}`, and the running-maximum tail check.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::Sde;
use crate::path::KeySpace;
use crate::reference::reference;
use crate::runner::{par_map, Setup};
use crate::scheme::{simulate, Scheme};
use crate::statkit::{hill_tail_index, wilson_interval};

/// Smallest path count accepted by [`estimate_weak_error`].
pub const MIN_PATHS: usize = 1000;

/// Bounded Lipschitz test functional.
#[derive(Clone)]
pub struct FunctionalSpec {
    pub name: String,
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub sup_bound: f64,
    pub lipschitz: f64,
}

impl fmt::Debug for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionalSpec")
            .field("name", &self.name)
            .field("sup_bound", &self.sup_bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl FunctionalSpec {
    pub fn new(
        name: &str,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sup_bound: f64,
        lipschitz: f64,
    ) -> Result<Self> {
        if !(sup_bound > 0.0) || !(lipschitz > 0.0) {
            return invalid("functional needs positive sup bound and Lipschitz constant");
        }
        Ok(FunctionalSpec { name: name.to_string(), g: Arc::new(g), sup_bound, lipschitz })
    }

    /// `min(max(x, -1), 1)`; the default.
    pub fn clamp_unit() -> Self {
        Self::new("clamp_unit", |x| x.clamp(-1.0, 1.0), 1.0, 1.0).expect("valid constants")
    }

    /// `min(max(x, 0), 1)`, i.e. `min(x, 1)` on positive states.
    pub fn capped_unit() -> Self {
        Self::new("capped_unit", |x| x.clamp(0.0, 1.0), 1.0, 1.0).expect("valid constants")
    }

    pub fn constant(c: f64) -> Self {
        let bound = c.abs().max(f64::MIN_POSITIVE);
        Self::new("constant", move |_| c, bound, 1.0).expect("valid constants")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "clamp_unit" => Ok(Self::clamp_unit()),
            "capped_unit" => Ok(Self::capped_unit()),
            other => Err(crate::error::Error::Config(format!(
                "unknown functional `{other}` (expected clamp_unit or capped_unit)"
            ))),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.g)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakPoint {
    pub n: usize,
    /// `|mean(g(X^n_T) - g(X_T))|`.
    pub estimate: f64,
    pub se: f64,
    pub signed_mean: f64,
    pub bound_curve: f64,
}

/// Tail parameters of `P(X*_T > x) <= κ x^{-ν}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailParams {
    pub kappa: f64,
    pub nu: f64,
    /// `analytic`, `hill` or `unavailable`.
    pub source: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakErrorReport {
    pub functional: String,
    pub points: Vec<WeakPoint>,
    /// `C` in `C (‖g‖ + G + 1) (log n)^{-ν/a}`, fitted at the smallest `n`.
    pub c_fit: f64,
    pub growth_exponent: f64,
    pub tail: TailParams,
    /// Every estimate is below three of its standard errors.
    pub noise_floor: bool,
    pub paths: usize,
    /// Paths dropped because `g` of the scheme or reference was not finite.
    pub excluded: usize,
    #[serde(skip)]
    pub running_max: Vec<f64>,
}

impl WeakErrorReport {
    /// Each estimate exceeds its predecessor by at most `2 √(se_i² + se_{i+1}²)`.
    pub fn nonincreasing_within_2se(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].estimate <= w[0].estimate + 2.0 * w[0].se.hypot(w[1].se))
    }

    /// The fitted curve covers every later estimate up to 2 SE.
    pub fn bound_dominates(&self) -> bool {
        self.points.iter().skip(1).all(|p| p.estimate <= p.bound_curve + 2.0 * p.se)
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// `κ = x0, ν = 1` for CEV; otherwise `κ = 1` and `ν` from a Hill fit of the
/// running maxima.
pub fn tail_params(model_name: &str, x0: f64, running_max: &[f64]) -> Result<TailParams> {
    if model_name == "cev" {
        return Ok(TailParams { kappa: x0.abs(), nu: 1.0, source: "analytic" });
    }
    let pos: Vec<f64> = running_max.iter().copied().filter(|x| x.is_finite() && *x > 0.0).collect();
    let k = ((pos.len() as f64 * crate::limitlaw::HILL_FRACTION) as usize).max(10);
    let h = hill_tail_index(&pos, k)?;
    Ok(TailParams { kappa: 1.0, nu: h.alpha_hat, source: "hill" })
}

fn validate_ns(ns: &[usize]) -> Result<()> {
    if ns.len() < 2 {
        return invalid("weak-error study needs at least 2 values of n");
    }
    if ns.iter().any(|n| !n.is_power_of_two() || *n < 2) || ns.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("weak-error n values must be strictly increasing powers of two >= 2");
    }
    Ok(())
}

/// Common-random-number estimator: one Brownian record per path drives both
/// `X^n` for every `n` and the reference.
pub fn estimate_weak_error(
    setup: &Setup,
    scheme: Scheme,
    spec: &FunctionalSpec,
    ns: &[usize],
    paths: usize,
) -> Result<WeakErrorReport> {
    validate_ns(ns)?;
    if paths < MIN_PATHS {
        return invalid(format!("weak-error estimate needs at least {MIN_PATHS} paths, got {paths}"));
    }
    let n_max = *ns.last().expect("validated");
    let rows = par_map(setup.workers, paths, |i| {
        let g = setup.grid(KeySpace::Primary, i, n_max)?;
        let r = reference(&setup.model, setup.x0, &g, setup.refinement)?;
        let gr = spec.eval(r.terminal());
        let mut diffs = Vec::with_capacity(ns.len());
        for &n in ns {
            let tr = simulate(&setup.model, scheme, setup.x0, n, &g)?;
            diffs.push(spec.eval(tr.terminal()) - gr);
        }
        Ok((diffs, r.running_max_abs()))
    })?;
    let running_max: Vec<f64> = rows.iter().map(|(_, m)| *m).collect();
    let kept: Vec<&Vec<f64>> = rows.iter().map(|(d, _)| d).filter(|d| d.iter().all(|x| x.is_finite())).collect();
    if kept.len() < 2 {
        return invalid("fewer than 2 paths produced finite functionals");
    }
    // Hill is undefined on degenerate maxima; the bound curve is then NaN
    let tail = tail_params(setup.model.name(), setup.x0, &running_max)
        .unwrap_or(TailParams { kappa: f64::NAN, nu: f64::NAN, source: "unavailable" });
    let a = setup.model.growth_exponent;
    let scale = spec.sup_bound + spec.lipschitz + 1.0;
    let mut points = Vec::with_capacity(ns.len());
    for (j, &n) in ns.iter().enumerate() {
        let col: Vec<f64> = kept.iter().map(|d| d[j]).collect();
        let (m, se) = mean_se(&col);
        points.push(WeakPoint { n, estimate: m.abs(), se, signed_mean: m, bound_curve: f64::NAN });
    }
    let rate = |n: usize| (n as f64).ln().powf(-tail.nu / a);
    let c_fit = points[0].estimate / (scale * rate(ns[0]));
    for p in &mut points {
        p.bound_curve = c_fit * scale * rate(p.n);
    }
    let noise_floor = points.iter().all(|p| p.estimate < 3.0 * p.se);
    Ok(WeakErrorReport {
        functional: spec.name.clone(),
        points,
        c_fit,
        growth_exponent: a,
        tail,
        noise_floor,
        paths,
        excluded: paths - kept.len(),
        running_max,
    })
}

/// Independent-sample counterpart: `X^n` on path `i` against the reference on
/// an unrelated record. Returns `(mean, se)`.
pub fn estimate_weak_error_independent(
    setup: &Setup,
    scheme: Scheme,
    spec: &FunctionalSpec,
    n: usize,
    paths: usize,
) -> Result<(f64, f64)> {
    let rows = par_map(setup.workers, paths, |i| {
        let g = setup.grid(KeySpace::Primary, i, n)?;
        let other = setup.grid(KeySpace::Auxiliary, i, n)?;
        let tr = simulate(&setup.model, scheme, setup.x0, n, &g)?;
        let r = reference(&setup.model, setup.x0, &other, setup.refinement)?;
        Ok(spec.eval(tr.terminal()) - spec.eval(r.terminal()))
    })?;
    let kept: Vec<f64> = rows.into_iter().filter(|x| x.is_finite()).collect();
    Ok(mean_se(&kept))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCheck {
    pub x: f64,
    pub exceed_fraction: f64,
    pub ci: (f64, f64),
    pub bound: f64,
    pub pass: bool,
}

/// Compares `P(S*_T > x)` with `S0 / x`; passes when the 95% Wilson lower
/// bound is below `S0 / x`.
pub fn tail_probability_check(samples: &[f64], s0: f64, xs: &[f64]) -> Result<Vec<TailCheck>> {
    if samples.is_empty() {
        return invalid("tail check needs samples");
    }
    if let Some(x) = xs.iter().find(|x| !(**x > s0)) {
        return invalid(format!("tail threshold {x} must exceed S0 = {s0}"));
    }
    Ok(xs
        .iter()
        .map(|&x| {
            // a NaN maximum counts as an exceedance
            let hits = samples.iter().filter(|s| !(**s <= x)).count();
            let ci = wilson_interval(hits, samples.len());
            let bound = s0 / x;
            TailCheck { x, exceed_fraction: hits as f64 / samples.len() as f64, ci, bound, pass: ci.0 < bound }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{self, Model};

    #[test]
    fn functional_bounds_hold_on_samples() {
        for spec in [FunctionalSpec::clamp_unit(), FunctionalSpec::capped_unit()] {
            let xs: Vec<f64> = (0..=2000).map(|i| -1e6 + i as f64 * 1e3).chain((0..=400).map(|i| -2.0 + i as f64 * 0.01)).collect();
            for w in xs.windows(2) {
                assert!(spec.eval(w[0]).abs() <= spec.sup_bound);
                assert!((spec.eval(w[0]) - spec.eval(w[1])).abs() <= spec.lipschitz * (w[0] - w[1]).abs() + 1e-15);
            }
        }
        assert!(FunctionalSpec::by_name("nope").is_err());
    }

    #[test]
    fn constant_functional_gives_zero() {
        let setup = Setup::new(model::lookup("gbm").unwrap(), 1.0).seed(2).refinement(4);
        let r = estimate_weak_error(&setup, Scheme::Euler, &FunctionalSpec::constant(0.7), &[4, 8, 16], 1000).unwrap();
        for p in &r.points {
            assert_eq!((p.estimate, p.se), (0.0, 0.0));
        }
    }

    #[test]
    fn exact_scheme_gives_zero() {
        let setup = Setup::new(Model::constant(1.0, 0.0), 0.25).seed(2).refinement(4);
        let r = estimate_weak_error(&setup, Scheme::Euler, &FunctionalSpec::clamp_unit(), &[4, 8, 16], 1000).unwrap();
        for p in &r.points {
            assert!(p.estimate < 1e-15 && p.se < 1e-15, "{p:?}");
        }
        assert_eq!(r.tail.source, "unavailable");
    }

    #[test]
    fn ns_validated() {
        let setup = Setup::new(model::lookup("gbm").unwrap(), 1.0);
        let spec = FunctionalSpec::clamp_unit();
        assert!(estimate_weak_error(&setup, Scheme::Euler, &spec, &[8], 10).is_err());
        assert!(estimate_weak_error(&setup, Scheme::Euler, &spec, &[8, 12], 10).is_err());
        assert!(estimate_weak_error(&setup, Scheme::Euler, &spec, &[8, 4], 10).is_err());
    }

    #[test]
    fn tail_examples() {
        let c = tail_probability_check(&[0.5, 1.0, 1.5], 1.0, &[2.0, 4.0]).unwrap();
        assert!(c.iter().all(|t| t.exceed_fraction == 0.0 && t.pass));
        let c = tail_probability_check(&[1.0; 100], 1.0, &[1.5, 3.0]).unwrap();
        assert!(c.iter().all(|t| t.exceed_fraction == 0.0));
        assert!(tail_probability_check(&[1.0], 1.0, &[1.0]).is_err());
        let c = tail_probability_check(&[10.0; 100], 1.0, &[2.0]).unwrap();
        assert!(!c[0].pass);
    }

    #[test]
    fn bound_curve_anchor() {
        let setup = Setup::new(model::lookup("cev").unwrap(), 1.0).seed(3).refinement(4);
        let r = estimate_weak_error(&setup, Scheme::SymmetrizedEuler, &FunctionalSpec::clamp_unit(), &[4, 16], 1000).unwrap();
        assert_eq!(r.tail.nu, 1.0);
        let p = r.points;
        assert!((p[0].bound_curve - p[0].estimate).abs() <= 1e-15 * p[0].estimate.max(1.0));
        let expected = p[0].estimate * 4f64.ln() / 16f64.ln();
        assert!((p[1].bound_curve - expected).abs() < 1e-12);
    }
}
