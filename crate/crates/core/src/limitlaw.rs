//! The asymptotic normalized-error process and its moment diagnostics.
//!
//! The limit `U` solves
//! `dU = μ'(X) U dt + σ'(X) U dW + (√2/2) √T σ(X) σ'(X) dB`, `U_0 = 0`,
//! with `B` independent of `W`. It is stepped with Euler on the fine grid,
//! along the coupled reference `X`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{Model, Sde};
use crate::path::{BrownianGrid, KeySpace};
use crate::reference::{reference, ReferenceTrajectory};
use crate::runner::{par_map, Setup};
use crate::scheme::{simulate, Scheme};
use crate::statkit::{hill_tail_index, HillEstimate};

#[derive(Debug, Clone)]
pub struct LimitTrajectory {
    /// `U` on every fine grid time.
    pub u: Vec<f64>,
    pub reference: ReferenceTrajectory,
    /// Key of the `B` record.
    pub b_key: (u64, u64),
}

impl LimitTrajectory {
    pub fn terminal(&self) -> f64 {
        *self.u.last().expect("limit path has n_fine+1 values")
    }
}

pub fn simulate_limit(
    model: &Model,
    x0: f64,
    brownian_w: &BrownianGrid,
    brownian_b: &BrownianGrid,
    refinement: usize,
) -> Result<LimitTrajectory> {
    if brownian_w.fine_steps() != brownian_b.fine_steps() || brownian_w.horizon() != brownian_b.horizon() {
        return Err(Error::GridMismatch("W and B must share horizon and fine grid".into()));
    }
    if (brownian_w.seed(), brownian_w.path_index()) == (brownian_b.seed(), brownian_b.path_index()) {
        return invalid("W and B were generated from the same key");
    }
    let reference = reference(model, x0, brownian_w, refinement)?;
    let hf = brownian_w.fine_dt();
    let noise_scale = std::f64::consts::FRAC_1_SQRT_2 * brownian_w.horizon().sqrt();
    let mut u = Vec::with_capacity(brownian_w.fine_steps() + 1);
    let mut current = 0.0f64;
    u.push(current);
    for ((x, dw), db) in reference.values.iter().zip(brownian_w.increments()).zip(brownian_b.increments()) {
        if current.is_finite() {
            if x.is_finite() {
                let sd = model.diffusion_deriv(*x);
                let next = current
                    + model.drift_deriv(*x) * current * hf
                    + sd * current * dw
                    + noise_scale * model.diffusion(*x) * sd * db;
                current = if next.is_nan() { f64::INFINITY } else { next };
            } else {
                current = f64::INFINITY;
            }
        }
        u.push(current);
    }
    Ok(LimitTrajectory { u, reference, b_key: (brownian_b.seed(), brownian_b.path_index()) })
}

/// Fine-grid indices of the checkpoint times `t_i`.
pub fn checkpoint_indices(checkpoints: &[f64], horizon: f64, fine_steps: usize) -> Result<Vec<usize>> {
    if checkpoints.len() < 2 {
        return invalid("moment diagnostics need at least 2 checkpoints");
    }
    checkpoints
        .iter()
        .map(|t| {
            let pos = t / horizon * fine_steps as f64;
            let k = pos.round();
            if !(*t > 0.0 && *t <= horizon) || (pos - k).abs() > 1e-9 * pos.max(1.0) {
                return invalid(format!("checkpoint {t} is not a fine grid time in (0, {horizon}]"));
            }
            Ok(k as usize)
        })
        .collect()
}

/// Default checkpoints `{T/4, T/2, 3T/4, T}`.
pub fn default_checkpoints(horizon: f64) -> Vec<f64> {
    vec![horizon / 4.0, horizon / 2.0, 0.75 * horizon, horizon]
}

/// `(U_t, sup_{s<=t} |U_s|)` at each checkpoint index.
pub fn checkpoint_values(u: &[f64], indices: &[usize]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(indices.len());
    let mut running: f64 = 0.0;
    let mut last = 0;
    for &k in indices {
        for v in &u[last..=k] {
            let a = v.abs();
            if !(a <= running) {
                running = a;
            }
        }
        last = k;
        out.push((u[k], running));
    }
    out
}

#[derive(Debug, Clone)]
pub struct ErrorLawSamples {
    pub n: usize,
    /// `√n (X^n_T - X_T)` per path.
    pub scheme_terminal: Vec<f64>,
    /// `U_T` per path.
    pub limit_terminal: Vec<f64>,
    /// Per checkpoint, the `(U_t, U*_t)` pairs of the limit paths.
    pub limit_checkpoints: Vec<Vec<(f64, f64)>>,
    pub checkpoints: Vec<f64>,
    pub seed: u64,
}

/// Paired samples of the normalized scheme error and of the limit law.
///
/// Scheme paths use [`KeySpace::Primary`]; limit paths draw fresh `W` and `B`
/// from [`KeySpace::LimitW`] and [`KeySpace::LimitB`].
pub fn sample_error_law(
    setup: &Setup,
    scheme: Scheme,
    n: usize,
    paths: usize,
    checkpoints: &[f64],
) -> Result<ErrorLawSamples> {
    if paths < 100 {
        return invalid(format!("error-law sampling needs at least 100 paths, got {paths}"));
    }
    let idx = checkpoint_indices(checkpoints, setup.horizon, setup.refinement * n)?;
    let sqrt_n = (n as f64).sqrt();
    let scheme_terminal = par_map(setup.workers, paths, |i| {
        let g = setup.grid(KeySpace::Primary, i, n)?;
        let tr = simulate(&setup.model, scheme, setup.x0, n, &g)?;
        let r = reference(&setup.model, setup.x0, &g, setup.refinement)?;
        let d = tr.terminal() - r.terminal();
        Ok(if d.is_nan() { f64::INFINITY } else { sqrt_n * d })
    })?;
    let limit = par_map(setup.workers, paths, |i| {
        let w = setup.grid(KeySpace::LimitW, i, n)?;
        let b = setup.grid(KeySpace::LimitB, i, n)?;
        let l = simulate_limit(&setup.model, setup.x0, &w, &b, setup.refinement)?;
        Ok((l.terminal(), checkpoint_values(&l.u, &idx)))
    })?;
    let limit_terminal = limit.iter().map(|(t, _)| *t).collect();
    let limit_checkpoints = (0..idx.len()).map(|c| limit.iter().map(|(_, cv)| cv[c]).collect()).collect();
    Ok(ErrorLawSamples {
        n,
        scheme_terminal,
        limit_terminal,
        limit_checkpoints,
        checkpoints: checkpoints.to_vec(),
        seed: setup.seed,
    })
}

/// Limit-law samples only, at the checkpoints.
pub fn sample_limit(setup: &Setup, n: usize, paths: usize, checkpoints: &[f64]) -> Result<Vec<Vec<(f64, f64)>>> {
    let idx = checkpoint_indices(checkpoints, setup.horizon, setup.refinement * n)?;
    let rows = par_map(setup.workers, paths, |i| {
        let w = setup.grid(KeySpace::LimitW, i, n)?;
        let b = setup.grid(KeySpace::LimitB, i, n)?;
        let l = simulate_limit(&setup.model, setup.x0, &w, &b, setup.refinement)?;
        Ok(checkpoint_values(&l.u, &idx))
    })?;
    Ok((0..idx.len()).map(|c| rows.iter().map(|r| r[c]).collect()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckpointMoments {
    pub t: f64,
    pub mean: f64,
    pub se_mean: f64,
    pub m2: f64,
    pub se_m2: f64,
    pub m2_max: f64,
    pub se_m2_max: f64,
    /// Samples dropped because `U` or `U*` was not finite.
    pub nonfinite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub checkpoints: Vec<CheckpointMoments>,
    /// The model has `μ' ≡ 0`, so `U` should be a martingale.
    pub martingale: bool,
    /// `|mean U_t| <= 3 SE` at every checkpoint.
    pub mean_within_3se: bool,
    /// Second moment of `U*` never decreases across checkpoints.
    pub m2_max_nondecreasing: bool,
    /// `E U_t² <= E U*_t²` at every checkpoint.
    pub m2_bounded_by_max: bool,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Moments of `U_t` and `U*_t` per checkpoint.
///
/// The SE of a second moment is the SE of the mean of squares, which is
/// also its leave-one-out jackknife SE.
pub fn moment_diagnostics(checkpoints: &[f64], samples: &[Vec<(f64, f64)>], martingale: bool) -> Result<MomentReport> {
    if checkpoints.len() < 2 || checkpoints.len() != samples.len() {
        return invalid("moment diagnostics need one sample set per checkpoint and at least 2 checkpoints");
    }
    let mut rows = Vec::with_capacity(checkpoints.len());
    for (t, s) in checkpoints.iter().zip(samples) {
        let finite: Vec<(f64, f64)> = s.iter().copied().filter(|(u, m)| u.is_finite() && m.is_finite()).collect();
        let u: Vec<f64> = finite.iter().map(|p| p.0).collect();
        let u2: Vec<f64> = u.iter().map(|x| x * x).collect();
        let m2s: Vec<f64> = finite.iter().map(|p| p.1 * p.1).collect();
        let (mean, se_mean) = mean_and_se(&u);
        let (m2, se_m2) = mean_and_se(&u2);
        let (m2_max, se_m2_max) = mean_and_se(&m2s);
        rows.push(CheckpointMoments {
            t: *t,
            mean,
            se_mean,
            m2,
            se_m2,
            m2_max,
            se_m2_max,
            nonfinite: s.len() - finite.len(),
        });
    }
    let mean_within_3se = rows.iter().all(|r| r.mean.abs() <= 3.0 * r.se_mean || r.mean == 0.0);
    let m2_max_nondecreasing = rows.windows(2).all(|w| w[1].m2_max >= w[0].m2_max);
    let m2_bounded_by_max = rows.iter().all(|r| r.m2 <= r.m2_max);
    Ok(MomentReport { checkpoints: rows, martingale, mean_within_3se, m2_max_nondecreasing, m2_bounded_by_max })
}

/// Default share of the sample used as Hill order statistics.
pub const HILL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeavyTail {
    pub hill: f64,
    pub ci: (f64, f64),
    pub k: usize,
    pub flag: bool,
    /// Hill estimates at `k/2` and `2k`.
    pub sensitivity: (f64, f64),
    /// Sample second moments of the two interleaved halves.
    pub m2_halves: (f64, f64),
    pub excluded_nonfinite: usize,
}

/// Infinite-variance flag: Hill index on the top 5% of `|x|` below 2 with
/// its 95% upper bound below 2.5.
pub fn heavy_tail(samples: &[f64]) -> Result<HeavyTail> {
    let abs: Vec<f64> = samples.iter().map(|x| x.abs()).filter(|x| x.is_finite() && *x > 0.0).collect();
    let excluded_nonfinite = samples.iter().filter(|x| !x.is_finite()).count();
    let k = ((abs.len() as f64 * HILL_FRACTION) as usize).max(10);
    let main: HillEstimate = hill_tail_index(&abs, k)?;
    let alt = |kk: usize| hill_tail_index(&abs, kk.max(10)).map(|h| h.alpha_hat).unwrap_or(f64::NAN);
    let finite: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    let half = |parity: usize| {
        let v: Vec<f64> = finite.iter().skip(parity).step_by(2).map(|x| x * x).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    Ok(HeavyTail {
        hill: main.alpha_hat,
        ci: main.ci95,
        k,
        flag: main.alpha_hat < 2.0 && main.ci95.1 < 2.5,
        sensitivity: (alt(k / 2), alt(2 * k)),
        m2_halves: (half(0), half(1)),
        excluded_nonfinite,
    })
}
