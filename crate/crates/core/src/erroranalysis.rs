//! Pathwise and normalized errors, the `Z^n` functionals, and rate fits.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::path::BrownianGrid;
use crate::reference::ReferenceTrajectory;
use crate::scheme::Trajectory;
use crate::statkit::{linfit, rms_with_se};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSample {
    pub n: usize,
    /// Max over fine grid times of `|X^n_t - X_t|`.
    pub sup_error: f64,
    pub terminal_error: f64,
    /// `√n (X^n_T - X_T)`.
    pub normalized_terminal: f64,
    pub normalized_sup: f64,
}

pub fn error_sample(
    traj: &Trajectory,
    reference: &ReferenceTrajectory,
    brownian: &BrownianGrid,
) -> Result<ErrorSample> {
    let fine = traj.fine_values(brownian)?;
    if reference.values.len() != fine.len() {
        return Err(Error::GridMismatch(format!(
            "reference has {} points, scheme grid has {}",
            reference.values.len(),
            fine.len()
        )));
    }
    let mut sup: f64 = 0.0;
    for (a, b) in fine.iter().zip(&reference.values) {
        let d = (a - b).abs();
        // NaN (inf - inf) counts as an infinite error
        if !(d <= sup) {
            sup = if d.is_nan() { f64::INFINITY } else { d };
        }
    }
    let diff = traj.terminal() - reference.terminal();
    let terminal_error = if diff.is_nan() { f64::INFINITY } else { diff.abs() };
    let sqrt_n = (traj.n as f64).sqrt();
    Ok(ErrorSample {
        n: traj.n,
        sup_error: sup,
        terminal_error,
        normalized_terminal: sqrt_n * diff,
        normalized_sup: sqrt_n * sup,
    })
}

/// Terminal values of `Z^{n11}, Z^{n12}, Z^{n21}, Z^{n22}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZStats {
    pub z11: f64,
    pub z12: f64,
    pub z21: f64,
    pub z22: f64,
}

/// `T² / (2√n)`, the deterministic value of `Z^{n11}_T`.
pub fn z11_closed_form(n: usize, horizon: f64) -> f64 {
    horizon * horizon / (2.0 * (n as f64).sqrt())
}

pub fn z_functionals(brownian: &BrownianGrid, n: usize) -> Result<ZStats> {
    let ratio = brownian.ratio(n)?;
    let horizon = brownian.horizon();
    let sqrt_n = (n as f64).sqrt();
    let h = horizon / n as f64;
    let hf = brownian.fine_dt();
    let coarse = brownian.coarsen(n)?;
    let z22 = 0.5 * sqrt_n * coarse.iter().map(|dw| dw * dw - h).sum::<f64>();

    // Left-point sums on the fine grid: Δs and ΔW measured from the coarse knot.
    let (mut z12, mut z21) = (0.0, 0.0);
    for block in brownian.increments().chunks_exact(ratio) {
        let mut dw_from_knot = 0.0;
        for (i, dw) in block.iter().enumerate() {
            z12 += i as f64 * hf * dw;
            z21 += dw_from_knot * hf;
            dw_from_knot += dw;
        }
    }
    Ok(ZStats { z11: z11_closed_form(n, horizon), z12: sqrt_n * z12, z21: sqrt_n * z21, z22 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Positive rate `α` in `log err ≈ c - α log n`.
    pub alpha: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
}

pub fn fit_rate(points: &[(usize, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return invalid("rate fit needs at least 3 points");
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return invalid("rate fit needs strictly increasing n");
    }
    if let Some((n, v)) = points.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::NoiseFloor(format!("non-positive or non-finite error {v} at n = {n}")));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let f = linfit(&xs, &ys)?;
    Ok(RateFit { alpha: -f.slope, intercept: f.intercept, r2: f.r2, slope_se: f.slope_se })
}

/// Per-`n` aggregate over paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub n: usize,
    pub paths: usize,
    /// Paths whose scheme or reference exploded; excluded from the moments.
    pub exploded: usize,
    pub rms_sup: f64,
    pub rms_sup_se: f64,
    pub rms_terminal: f64,
    pub mean_un: f64,
    pub var_un: f64,
    /// Second moment of `√n sup |X^n - X|`.
    pub m2_normalized_sup: f64,
}

/// Aggregates error samples in the given order.
pub fn aggregate(n: usize, samples: &[ErrorSample]) -> ErrorStats {
    let finite: Vec<&ErrorSample> =
        samples.iter().filter(|s| s.sup_error.is_finite() && s.normalized_terminal.is_finite()).collect();
    let sup: Vec<f64> = finite.iter().map(|s| s.sup_error).collect();
    let (rms_sup, rms_sup_se) = rms_with_se(&sup);
    let term: Vec<f64> = finite.iter().map(|s| s.terminal_error).collect();
    let (rms_terminal, _) = rms_with_se(&term);
    let k = finite.len() as f64;
    let mean_un = finite.iter().map(|s| s.normalized_terminal).sum::<f64>() / k;
    let var_un = if finite.len() > 1 {
        finite.iter().map(|s| (s.normalized_terminal - mean_un).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        f64::NAN
    };
    let m2_normalized_sup = finite.iter().map(|s| s.normalized_sup.powi(2)).sum::<f64>() / k;
    ErrorStats {
        n,
        paths: samples.len(),
        exploded: samples.len() - finite.len(),
        rms_sup,
        rms_sup_se,
        rms_terminal,
        mean_un,
        var_un,
        m2_normalized_sup,
    }
}
