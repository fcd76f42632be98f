//! SDE coefficient models, the built-in registry, and coefficient truncation.
//!
//! A model is the pair `(μ, σ)` of `dX = μ(X) dt + σ(X) dW` together with
//! hand-coded derivatives. Derivatives are defined as `0` wherever the
//! coefficient is not differentiable; those points are listed per model in
//! [`Model::nondifferentiable_points`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// A real function of the state.
pub type Coef = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Half-width of the sampled range used for the polynomial-growth check.
pub const GROWTH_CHECK_RANGE: f64 = 10.0;

/// Smallest state sampled by the growth check on half-line models.
pub const HALF_LINE_CHECK_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateDomain {
    WholeLine,
    PositiveHalfLine,
}

impl fmt::Display for StateDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateDomain::WholeLine => f.write_str("whole_line"),
            StateDomain::PositiveHalfLine => f.write_str("positive_half_line"),
        }
    }
}

/// Closed-form solution available for pathwise reference construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSolution {
    /// `X_t = x0 exp((mu - sigma^2/2) t + sigma W_t)`.
    Gbm { mu: f64, sigma: f64 },
}

/// Coefficient interface consumed by the schemes.
pub trait Sde: Send + Sync {
    fn name(&self) -> &str;
    fn drift(&self, x: f64) -> f64;
    fn diffusion(&self, x: f64) -> f64;
    fn drift_deriv(&self, x: f64) -> f64;
    fn diffusion_deriv(&self, x: f64) -> f64;
    /// Whether all four coefficient functions may be evaluated at `x`.
    fn evaluable(&self, x: f64) -> bool;
}

/// One-dimensional SDE coefficient pair with metadata.
#[derive(Clone)]
pub struct Model {
    name: String,
    drift: Coef,
    diffusion: Coef,
    drift_deriv: Coef,
    diffusion_deriv: Coef,
    /// Exponent `a` in `|Δμ| + |Δσ| <= (max(|x|,|y|) + K)^a |x - y|`.
    pub growth_exponent: f64,
    /// Constant `K` of the same inequality.
    pub growth_constant: f64,
    pub state_domain: StateDomain,
    pub params: BTreeMap<String, f64>,
    pub nondifferentiable_points: Vec<f64>,
    /// Inclusive lower bound of states where the coefficients are evaluable.
    pub evaluable_from: Option<f64>,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("state_domain", &self.state_domain)
            .finish_non_exhaustive()
    }
}

impl Model {
    /// Whole-line model with growth pair `(1, 0)` and no metadata.
    pub fn new<F1, F2, F3, F4>(
        name: impl Into<String>,
        drift: F1,
        diffusion: F2,
        drift_deriv: F3,
        diffusion_deriv: F4,
    ) -> Self
    where
        F1: Fn(f64) -> f64 + Send + Sync + 'static,
        F2: Fn(f64) -> f64 + Send + Sync + 'static,
        F3: Fn(f64) -> f64 + Send + Sync + 'static,
        F4: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Model {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            drift_deriv: Arc::new(drift_deriv),
            diffusion_deriv: Arc::new(diffusion_deriv),
            growth_exponent: 1.0,
            growth_constant: 0.0,
            state_domain: StateDomain::WholeLine,
            params: BTreeMap::new(),
            nondifferentiable_points: Vec::new(),
            evaluable_from: None,
            exact: None,
        }
    }

    /// `μ ≡ mu`, `σ ≡ sigma`.
    pub fn constant(mu: f64, sigma: f64) -> Self {
        Model::new("constant", move |_| mu, move |_| sigma, |_| 0.0, |_| 0.0)
            .with_params(&[("mu", mu), ("sigma", sigma)])
            .with_growth(1.0, 0.0)
    }

    pub fn with_growth(mut self, exponent: f64, constant: f64) -> Self {
        self.growth_exponent = exponent;
        self.growth_constant = constant;
        self
    }

    pub fn with_domain(mut self, domain: StateDomain) -> Self {
        self.state_domain = domain;
        self
    }

    pub fn with_params(mut self, params: &[(&str, f64)]) -> Self {
        for (k, v) in params {
            self.params.insert((*k).to_string(), *v);
        }
        self
    }

    pub fn with_nondifferentiable_points(mut self, points: Vec<f64>) -> Self {
        self.nondifferentiable_points = points;
        self
    }

    pub fn with_evaluable_from(mut self, lower: f64) -> Self {
        self.evaluable_from = Some(lower);
        self
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    /// `true` when `μ' ≡ 0` for the built-in family (used to flag the martingale case).
    pub fn drift_is_constant(&self) -> bool {
        matches!(self.name.as_str(), "bounded_sine" | "inverse_bessel" | "cev" | "constant")
            || (self.name == "gbm" && self.param("mu") == Some(0.0))
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            name: self.name.clone(),
            domain: self.state_domain,
            params: self.params.clone(),
            growth_exponent: self.growth_exponent,
            growth_constant: self.growth_constant,
            nondifferentiable_points: self.nondifferentiable_points.clone(),
        }
    }
}

impl Sde for Model {
    fn name(&self) -> &str {
        &self.name
    }
    fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }
    fn diffusion(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }
    fn drift_deriv(&self, x: f64) -> f64 {
        (self.drift_deriv)(x)
    }
    fn diffusion_deriv(&self, x: f64) -> f64 {
        (self.diffusion_deriv)(x)
    }
    fn evaluable(&self, x: f64) -> bool {
        x.is_finite() && self.evaluable_from.is_none_or(|lo| x >= lo)
    }
}

/// Registry row emitted by `list-models`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub domain: StateDomain,
    pub params: BTreeMap<String, f64>,
    pub growth_exponent: f64,
    pub growth_constant: f64,
    pub nondifferentiable_points: Vec<f64>,
}

fn sign_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `dX = μ_c X dt + σ_c X dW`.
pub fn gbm(mu: f64, sigma: f64) -> Model {
    Model::new("gbm", move |x| mu * x, move |x| sigma * x, move |_| mu, move |_| sigma)
        .with_params(&[("mu", mu), ("sigma", sigma)])
        .with_growth(1.0, mu.abs() + sigma.abs())
        .with_exact(ExactSolution::Gbm { mu, sigma })
}

/// `dX = -θ X dt + σ_c dW`.
pub fn ou(theta: f64, sigma: f64) -> Model {
    Model::new("ou", move |x| -theta * x, move |_| sigma, move |_| -theta, |_| 0.0)
        .with_params(&[("theta", theta), ("sigma", sigma)])
        .with_growth(1.0, theta.abs())
}

/// `dX = (2 + sin X) dW`.
pub fn bounded_sine() -> Model {
    Model::new("bounded_sine", |_| 0.0, |x: f64| 2.0 + x.sin(), |_| 0.0, |x: f64| x.cos())
        .with_growth(1.0, 1.0)
}

/// `dX = |X| dt + (2 + sin X) dW`; the drift has a kink at 0.
pub fn abs_drift() -> Model {
    Model::new(
        "abs_drift",
        |x: f64| x.abs(),
        |x: f64| 2.0 + x.sin(),
        sign_or_zero,
        |x: f64| x.cos(),
    )
    .with_growth(1.0, 2.0)
    .with_nondifferentiable_points(vec![0.0])
}

/// `dX = X^2 dW`.
pub fn inverse_bessel() -> Model {
    Model::new("inverse_bessel", |_| 0.0, |x| x * x, |_| 0.0, |x| 2.0 * x)
        .with_domain(StateDomain::PositiveHalfLine)
        .with_growth(1.0, GROWTH_CHECK_RANGE)
}

/// `dX = (a - bX) dt + σ √X dW`, evaluable on `[0, ∞)`.
pub fn cir(a: f64, b: f64, sigma: f64) -> Result<Model> {
    if a <= 0.0 || sigma <= 0.0 {
        return invalid(format!("cir requires a > 0 and sigma > 0 (a={a}, sigma={sigma})"));
    }
    let k = b.abs() + sigma / (2.0 * HALF_LINE_CHECK_FLOOR.sqrt());
    Ok(Model::new(
        "cir",
        move |x| a - b * x,
        move |x: f64| sigma * x.sqrt(),
        move |_| -b,
        move |x: f64| if x > 0.0 { sigma / (2.0 * x.sqrt()) } else { 0.0 },
    )
    .with_params(&[("a", a), ("b", b), ("sigma", sigma)])
    .with_domain(StateDomain::PositiveHalfLine)
    .with_evaluable_from(0.0)
    .with_growth(1.0, k)
    .with_nondifferentiable_points(vec![0.0]))
}

/// `dS = b |S|^β dW` with `β > 1`.
///
/// The coefficient is extended to negative states by `|x|^β`, so plain
/// Euler stays evaluable after an overshoot below zero.
pub fn cev(b: f64, beta: f64) -> Result<Model> {
    if beta <= 1.0 {
        return invalid(format!("cev requires beta > 1 (beta={beta})"));
    }
    if b <= 0.0 {
        return invalid(format!("cev requires b > 0 (b={b})"));
    }
    let a = beta - 1.0;
    let k = ((b * beta).powf(1.0 / a) - 1.0).max(0.0) * GROWTH_CHECK_RANGE;
    Ok(Model::new(
        "cev",
        |_| 0.0,
        move |x: f64| b * x.abs().powf(beta),
        |_| 0.0,
        move |x: f64| b * beta * x.abs().powf(beta - 1.0) * sign_or_zero(x),
    )
    .with_params(&[("b", b), ("beta", beta)])
    .with_domain(StateDomain::PositiveHalfLine)
    .with_growth(a, k))
}

impl Model {
    fn with_exact(mut self, exact: ExactSolution) -> Self {
        self.exact = Some(exact);
        self
    }
}

type Builder = fn(&BTreeMap<String, f64>) -> Result<Model>;
type Entry = (&'static str, &'static [(&'static str, f64)], Builder);

fn registry() -> Vec<Entry> {
    vec![
        ("gbm", &[("mu", 0.5), ("sigma", 0.4)], |p| Ok(gbm(p["mu"], p["sigma"]))),
        ("ou", &[("theta", 1.0), ("sigma", 0.5)], |p| Ok(ou(p["theta"], p["sigma"]))),
        ("bounded_sine", &[], |_| Ok(bounded_sine())),
        ("abs_drift", &[], |_| Ok(abs_drift())),
        ("inverse_bessel", &[], |_| Ok(inverse_bessel())),
        ("cir", &[("a", 1.0), ("b", 0.01), ("sigma", 0.1)], |p| {
            cir(p["a"], p["b"], p["sigma"])
        }),
        ("cev", &[("b", 1.0), ("beta", 2.0)], |p| cev(p["b"], p["beta"])),
    ]
}

/// All built-in models at their default parameters.
pub fn builtin_models() -> Vec<Model> {
    registry()
        .into_iter()
        .map(|(name, _, build)| {
            let params = default_params(name);
            build(&params).expect("default parameters are valid")
        })
        .collect()
}

fn default_params(name: &str) -> BTreeMap<String, f64> {
    registry()
        .into_iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, d, _)| d.iter().map(|(k, v)| ((*k).to_string(), *v)).collect())
        .unwrap_or_default()
}

/// Looks up a built-in model at its default parameters.
pub fn lookup(name: &str) -> Result<Model> {
    build_model(name, &BTreeMap::new())
}

/// Builds a built-in model, overriding named parameters.
pub fn build_model(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Model> {
    let (_, defaults, build) = registry()
        .into_iter()
        .find(|(n, _, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown model `{name}`")))?;
    let mut params: BTreeMap<String, f64> =
        defaults.iter().map(|(k, v)| ((*k).to_string(), *v)).collect();
    for (k, v) in overrides {
        if !params.contains_key(k) {
            return Err(Error::Config(format!("model `{name}` has no parameter `{k}`")));
        }
        params.insert(k.clone(), *v);
    }
    build(&params)
}

/// Globally Lipschitz modification of a model that agrees with it on a band.
///
/// On the whole line the band is `[-m, m]`; coefficients are linear on
/// `(m, m+1)` and `(-(m+1), -m)` and constant beyond. Half-line models use
/// the band `[1/(m+1), m]` and are constant below the floor.
#[derive(Debug, Clone)]
pub struct TruncatedModel {
    base: Model,
    level: f64,
    lower: f64,
    upper: f64,
    name: String,
}

pub fn truncate(model: &Model, m: f64) -> Result<TruncatedModel> {
    if !(m > 0.0) || !m.is_finite() {
        return invalid(format!("truncation level must be positive, got {m}"));
    }
    let lower = match model.state_domain {
        StateDomain::WholeLine => -m,
        StateDomain::PositiveHalfLine => {
            let floor = 1.0 / (m + 1.0);
            if floor >= m {
                return invalid(format!(
                    "half-line truncation floor 1/(m+1) = {floor} is not below m = {m}"
                ));
            }
            floor
        }
    };
    let outer_lo = if model.state_domain == StateDomain::WholeLine { -(m + 1.0) } else { lower };
    for x in [outer_lo, lower, m, m + 1.0] {
        if !model.evaluable(x) {
            return invalid(format!("model `{}` is not evaluable at {x}", model.name));
        }
    }
    Ok(TruncatedModel {
        name: format!("{}@{}", model.name, m),
        base: model.clone(),
        level: m,
        lower,
        upper: m,
    })
}

impl TruncatedModel {
    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn base(&self) -> &Model {
        &self.base
    }

    /// Interval on which the truncated coefficients equal the base ones.
    pub fn agreement_band(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn whole_line(&self) -> bool {
        self.base.state_domain == StateDomain::WholeLine
    }

    fn eval(&self, f: &Coef, x: f64) -> f64 {
        let (lo, hi) = (self.lower, self.upper);
        if x >= lo && x <= hi {
            return f(x);
        }
        if x > hi {
            if x >= hi + 1.0 {
                return f(hi + 1.0);
            }
            let (a, b) = (f(hi), f(hi + 1.0));
            return a + (x - hi) * (b - a);
        }
        if !self.whole_line() {
            return f(lo);
        }
        if x <= lo - 1.0 {
            return f(lo - 1.0);
        }
        let (a, b) = (f(lo), f(lo - 1.0));
        a + (lo - x) * (b - a)
    }

    fn eval_deriv(&self, f: &Coef, df: &Coef, x: f64) -> f64 {
        let (lo, hi) = (self.lower, self.upper);
        if x >= lo && x <= hi {
            return df(x);
        }
        if x > hi {
            return if x < hi + 1.0 { f(hi + 1.0) - f(hi) } else { 0.0 };
        }
        if self.whole_line() && x > lo - 1.0 {
            return f(lo) - f(lo - 1.0);
        }
        0.0
    }
}

impl Sde for TruncatedModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn drift(&self, x: f64) -> f64 {
        self.eval(&self.base.drift, x)
    }
    fn diffusion(&self, x: f64) -> f64 {
        self.eval(&self.base.diffusion, x)
    }
    fn drift_deriv(&self, x: f64) -> f64 {
        self.eval_deriv(&self.base.drift, &self.base.drift_deriv, x)
    }
    fn diffusion_deriv(&self, x: f64) -> f64 {
        self.eval_deriv(&self.base.diffusion, &self.base.diffusion_deriv, x)
    }
    fn evaluable(&self, x: f64) -> bool {
        x.is_finite()
    }
}

/// Both sides of the CIR second-moment condition `σ²/8 (2a/σ² - 1)² > 𝒦(8)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirCondition {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `𝒦(p) = max{b(4p - 1), (2σ(2p - 1))²}`.
pub fn cir_moment_constant(p: f64, b: f64, sigma: f64) -> f64 {
    (b * (4.0 * p - 1.0)).max((2.0 * sigma * (2.0 * p - 1.0)).powi(2))
}

pub fn check_cir_condition(a: f64, b: f64, sigma: f64) -> Result<CirCondition> {
    if a <= 0.0 || sigma <= 0.0 {
        return invalid(format!("cir condition requires a > 0 and sigma > 0 (a={a}, sigma={sigma})"));
    }
    let s2 = sigma * sigma;
    let lhs = s2 / 8.0 * (2.0 * a / s2 - 1.0).powi(2);
    let rhs = cir_moment_constant(8.0, b, sigma);
    Ok(CirCondition { lhs, rhs, holds: lhs > rhs })
}
