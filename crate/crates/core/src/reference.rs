//! Fine-grid stand-in for the exact solution, coupled to the same Brownian path
//! that drives the coarse schemes.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::{ExactSolution, Model, Sde, StateDomain};
use crate::path::BrownianGrid;
use crate::scheme::{simulate, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    ExactGbm,
    FineMilstein,
    FineEuler,
    FineSymmetrizedEuler,
}

impl ReferenceMethod {
    pub fn label(self) -> &'static str {
        match self {
            ReferenceMethod::ExactGbm => "exact_gbm",
            ReferenceMethod::FineMilstein => "fine_milstein",
            ReferenceMethod::FineEuler => "fine_euler",
            ReferenceMethod::FineSymmetrizedEuler => "fine_symmetrized_euler",
        }
    }

    /// Default method for a model: closed form when known, reflected Euler on
    /// the half line, Milstein otherwise.
    pub fn for_model(model: &Model) -> ReferenceMethod {
        if matches!(model.exact, Some(ExactSolution::Gbm { .. })) {
            ReferenceMethod::ExactGbm
        } else if model.state_domain == StateDomain::PositiveHalfLine {
            ReferenceMethod::FineSymmetrizedEuler
        } else {
            ReferenceMethod::FineMilstein
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    /// Values on every fine grid time.
    pub values: Vec<f64>,
    pub method: ReferenceMethod,
    pub refinement: usize,
    pub exploded_at: Option<usize>,
}

impl ReferenceTrajectory {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("reference has n_fine+1 values")
    }

    /// Running maximum of `|X|` over the fine grid.
    pub fn running_max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| if v.abs() > m { v.abs() } else { m })
    }
}

/// Reference on the fine grid using the default method for `model`.
pub fn reference(
    model: &Model,
    x0: f64,
    brownian: &BrownianGrid,
    refinement: usize,
) -> Result<ReferenceTrajectory> {
    reference_with(model, ReferenceMethod::for_model(model), x0, brownian, refinement)
}

pub fn reference_with(
    model: &Model,
    method: ReferenceMethod,
    x0: f64,
    brownian: &BrownianGrid,
    refinement: usize,
) -> Result<ReferenceTrajectory> {
    let n_fine = brownian.fine_steps();
    match method {
        ReferenceMethod::ExactGbm => {
            let Some(ExactSolution::Gbm { mu, sigma }) = model.exact else {
                return invalid(format!("model `{}` has no closed-form solution", model.name()));
            };
            let h = brownian.fine_dt();
            let drift = mu - 0.5 * sigma * sigma;
            let values: Vec<f64> = brownian
                .cumulative()
                .iter()
                .enumerate()
                .map(|(k, w)| if k == 0 { x0 } else { x0 * (drift * (k as f64 * h) + sigma * w).exp() })
                .collect();
            let exploded_at = values.iter().position(|v| !v.is_finite());
            Ok(ReferenceTrajectory { values, method, refinement, exploded_at })
        }
        _ => {
            let scheme = match method {
                ReferenceMethod::FineMilstein => Scheme::Milstein,
                ReferenceMethod::FineEuler => Scheme::Euler,
                _ => Scheme::SymmetrizedEuler,
            };
            let tr = simulate(model, scheme, x0, n_fine, brownian)?;
            Ok(ReferenceTrajectory {
                exploded_at: tr.exploded_at,
                values: tr.values,
                method,
                refinement,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;

    #[test]
    fn gbm_closed_form() {
        let m = model::gbm(0.0, 1.0);
        let g = BrownianGrid::generate(9, 1, 1.0, 256).unwrap();
        let r = reference(&m, 1.0, &g, 64).unwrap();
        assert_eq!(r.method, ReferenceMethod::ExactGbm);
        let w = g.cumulative();
        for (k, v) in r.values.iter().enumerate() {
            let t = k as f64 / 256.0;
            assert!((v - (w[k] - t / 2.0).exp()).abs() < 1e-12 * v.abs().max(1.0));
        }
        assert_eq!(r.values[0], 1.0);
    }

    #[test]
    fn frozen_model_under_every_method() {
        let g = BrownianGrid::generate(9, 2, 1.0, 64).unwrap();
        let m = Model::constant(0.0, 0.0);
        for method in [ReferenceMethod::FineMilstein, ReferenceMethod::FineEuler, ReferenceMethod::FineSymmetrizedEuler] {
            let r = reference_with(&m, method, 2.0, &g, 8).unwrap();
            assert!(r.values.iter().all(|v| *v == 2.0));
        }
        assert!(reference_with(&m, ReferenceMethod::ExactGbm, 2.0, &g, 8).is_err());
    }

    #[test]
    fn default_methods() {
        assert_eq!(ReferenceMethod::for_model(&model::lookup("gbm").unwrap()), ReferenceMethod::ExactGbm);
        assert_eq!(ReferenceMethod::for_model(&model::lookup("ou").unwrap()), ReferenceMethod::FineMilstein);
        for name in ["cir", "cev", "inverse_bessel"] {
            assert_eq!(
                ReferenceMethod::for_model(&model::lookup(name).unwrap()),
                ReferenceMethod::FineSymmetrizedEuler
            );
        }
    }

    #[test]
    fn bounded_sine_refinement_ladder() {
        let m = model::lookup("bounded_sine").unwrap();
        let n = 16;
        let terminal = |g: &BrownianGrid, r: usize| {
            reference(&m, 1.0, &g.coarsened(n * r).unwrap(), r).unwrap().terminal()
        };
        let mut sq = 0.0;
        let paths = 200;
        let mut first = None;
        for i in 0..paths {
            let g = BrownianGrid::generate(21, i, 1.0, n * 256).unwrap();
            let d = terminal(&g, 64) - terminal(&g, 256);
            sq += d * d;
            if i == 0 {
                first = Some((terminal(&g, 64) - terminal(&g, 128)).abs());
            }
        }
        let rms = (sq / paths as f64).sqrt();
        assert!(first.unwrap() < 10.0 * rms, "{first:?} vs {rms}");
    }
}
