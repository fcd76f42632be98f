//! Shared Monte Carlo plumbing: simulation setup, an order-preserving
//! parallel map over path indices, and the reference refinement check.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::path::{BrownianGrid, KeySpace};
use crate::reference::{reference, ReferenceMethod};
use crate::scheme::{simulate, Scheme};

/// Environment variable consulted when no worker count is given.
pub const WORKERS_ENV: &str = "SDE_ERRLAB_WORKERS";

/// Default fine-grid refinement factor over the largest experiment `n`.
pub const DEFAULT_REFINEMENT: usize = 64;

/// Paths used by the reference refinement check.
pub const REFINEMENT_CHECK_PATHS: usize = 500;

#[derive(Debug, Clone)]
pub struct Setup {
    pub model: Model,
    pub x0: f64,
    pub horizon: f64,
    pub seed: u64,
    pub refinement: usize,
    pub workers: usize,
}

impl Setup {
    pub fn new(model: Model, x0: f64) -> Self {
        Setup { model, x0, horizon: 1.0, seed: 0, refinement: DEFAULT_REFINEMENT, workers: 1 }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn refinement(mut self, refinement: usize) -> Self {
        self.refinement = refinement;
        self
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn reference_method(&self) -> ReferenceMethod {
        ReferenceMethod::for_model(&self.model)
    }

    /// Brownian grid for path `index` in `space`, with `refinement * n_max` fine steps.
    pub fn grid(&self, space: KeySpace, index: u64, n_max: usize) -> Result<BrownianGrid> {
        BrownianGrid::generate(self.seed, space.key(index), self.horizon, self.refinement * n_max)
    }
}

/// `--workers`, else `SDE_ERRLAB_WORKERS`, else available parallelism.
pub fn resolve_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|w| *w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Maps `f` over `0..count` on `workers` threads; output is in index order and
/// the reported error (if any) is the one with the smallest index.
pub fn par_map<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T>> =
        pool.install(|| (0..count as u64).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

/// Outcome of doubling the reference refinement on a batch of paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementCheck {
    pub paths: usize,
    pub excluded: usize,
    /// RMS change of `X_T` between refinement `R` and `2R`.
    pub rms_refinement_change: f64,
    /// RMS terminal error of the scheme at the coarsest `n` against refinement `R`.
    pub rms_scheme_error: f64,
    pub pass: bool,
}

/// RMS computed relative to the largest magnitude, so near-explosive paths
/// cannot overflow the sum of squares.
fn scaled_rms(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let scale = values.clone().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut sum, mut k) = (0.0, 0usize);
    for v in values {
        if scale > 0.0 {
            sum += (v / scale) * (v / scale);
        }
        k += 1;
    }
    if k == 0 {
        return f64::NAN;
    }
    scale * (sum / k as f64).sqrt()
}

/// Doubling the refinement must move the reference by at most half the
/// coarsest scheme's RMS terminal error.
pub fn check_reference(setup: &Setup, scheme: Scheme, n_min: usize, n_max: usize) -> Result<RefinementCheck> {
    let paths = REFINEMENT_CHECK_PATHS;
    let r = setup.refinement;
    let rows = par_map(setup.workers, paths, |i| {
        let doubled = BrownianGrid::generate(
            setup.seed,
            KeySpace::Auxiliary.key(i),
            setup.horizon,
            2 * r * n_max,
        )?;
        let base = doubled.coarsened(r * n_max)?;
        let fine = reference(&setup.model, setup.x0, &doubled, 2 * r)?;
        let coarse = reference(&setup.model, setup.x0, &base, r)?;
        let tr = simulate(&setup.model, scheme, setup.x0, n_min, &base)?;
        let change = fine.terminal() - coarse.terminal();
        let err = tr.terminal() - coarse.terminal();
        Ok((change, err))
    })?;
    let kept: Vec<(f64, f64)> = rows.into_iter().filter(|(a, b)| a.is_finite() && b.is_finite()).collect();
    let rms_refinement_change = scaled_rms(kept.iter().map(|p| p.0));
    let rms_scheme_error = scaled_rms(kept.iter().map(|p| p.1));
    Ok(RefinementCheck {
        paths,
        excluded: paths - kept.len(),
        rms_refinement_change,
        rms_scheme_error,
        pass: 2.0 * rms_refinement_change <= rms_scheme_error,
    })
}
