//! Pass/fail checks evaluated on experiment reports (`--check`).

use serde::Serialize;

use crate::experiments::{ErrorLawReport, MomentsReport, StrongRateReport, WeakErrorExperiment, ZStatsReport};
use crate::model::check_cir_condition;
use crate::runner::RefinementCheck;
use crate::scheme::Scheme;

pub const EULER_RATE: (f64, f64) = (0.40, 0.60);
pub const MILSTEIN_RATE: (f64, f64) = (0.85, 1.15);
pub const MIN_R2: f64 = 0.98;
pub const KS_MAX_DISTANCE: f64 = 0.05;
pub const Z22_VARIANCE_TOL: f64 = 0.03;
pub const Z_CROSS_RATIO: f64 = 5.0;
pub const Z11_TOL: f64 = 1e-12;
pub const M2_RATIO_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckLine {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        CheckLine { name: name.into(), pass, detail: detail.into() }
    }
}

pub fn all_pass(lines: &[CheckLine]) -> bool {
    lines.iter().all(|l| l.pass)
}

fn reference_line(check: Option<&RefinementCheck>) -> Option<CheckLine> {
    check.map(|c| {
        CheckLine::new(
            "reference refinement",
            c.pass,
            format!("2 x {:.3e} <= {:.3e}", c.rms_refinement_change, c.rms_scheme_error),
        )
    })
}

/// Euler and Milstein: rate window and `r²`. Symmetrized Euler: stability of
/// the second moment of the normalized sup error across `n`.
pub fn strong_rate_checks(r: &StrongRateReport) -> Vec<CheckLine> {
    let mut out: Vec<CheckLine> = reference_line(r.provenance.reference_check.as_ref()).into_iter().collect();
    for s in &r.schemes {
        let label = s.scheme.label();
        match s.scheme {
            Scheme::Euler | Scheme::Milstein => {
                let (lo, hi) = if s.scheme == Scheme::Euler { EULER_RATE } else { MILSTEIN_RATE };
                match &s.fit {
                    Some(f) => {
                        out.push(CheckLine::new(
                            format!("{label} rate"),
                            (lo..=hi).contains(&f.alpha),
                            format!("alpha = {:.4} in [{lo}, {hi}]", f.alpha),
                        ));
                        out.push(CheckLine::new(
                            format!("{label} r2"),
                            f.r2 >= MIN_R2,
                            format!("r2 = {:.4} >= {MIN_R2}", f.r2),
                        ));
                    }
                    None => out.push(CheckLine::new(
                        format!("{label} rate"),
                        false,
                        s.fit_error.clone().unwrap_or_default(),
                    )),
                }
            }
            Scheme::SymmetrizedEuler => {
                let m2: Vec<f64> = s.stats.iter().map(|x| x.m2_normalized_sup).collect();
                let max = m2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = m2.iter().copied().fold(f64::INFINITY, f64::min);
                let ratio = max / min;
                out.push(CheckLine::new(
                    format!("{label} normalized sup second moment"),
                    ratio < M2_RATIO_MAX,
                    format!("max/min = {ratio:.4} < {M2_RATIO_MAX} (values {m2:?})"),
                ));
            }
        }
    }
    if r.model.name == "cir" {
        let p = |k: &str| r.model.params.get(k).copied().unwrap_or(f64::NAN);
        let line = match check_cir_condition(p("a"), p("b"), p("sigma")) {
            Ok(c) => CheckLine::new("cir moment condition", c.holds, format!("{:.4} > {:.4}", c.lhs, c.rhs)),
            Err(e) => CheckLine::new("cir moment condition", false, e.to_string()),
        };
        out.push(line);
    }
    out
}

pub fn error_law_checks(r: &ErrorLawReport) -> Vec<CheckLine> {
    let mut out: Vec<CheckLine> = reference_line(r.provenance.reference_check.as_ref()).into_iter().collect();
    out.push(CheckLine::new(
        "error law KS distance",
        r.ks.d < KS_MAX_DISTANCE,
        format!("d = {:.4} < {KS_MAX_DISTANCE} (m = {}, n = {})", r.ks.d, r.ks.m, r.ks.n),
    ));
    out
}

pub fn zstats_checks(r: &ZStatsReport) -> Vec<CheckLine> {
    let target = r.horizon * r.horizon / 2.0;
    vec![
        CheckLine::new(
            "z11 closed form",
            r.z11_max_deviation <= Z11_TOL,
            format!("max deviation {:.3e}", r.z11_max_deviation),
        ),
        CheckLine::new(
            "sqrt2 z22 KS vs N(0,1)",
            r.ks_z22.pass,
            format!("d = {:.4} < {:.4}", r.ks_z22.d, r.ks_z22.critical_05),
        ),
        CheckLine::new(
            "z22 variance",
            (r.z22.variance - target).abs() <= Z22_VARIANCE_TOL,
            format!("{:.4} within {target} +- {Z22_VARIANCE_TOL}", r.z22.variance),
        ),
        CheckLine::new(
            "z12 rms small",
            r.z12.rms < r.z22.rms / Z_CROSS_RATIO,
            format!("{:.4} < {:.4}", r.z12.rms, r.z22.rms / Z_CROSS_RATIO),
        ),
        CheckLine::new(
            "z21 rms small",
            r.z21.rms < r.z22.rms / Z_CROSS_RATIO,
            format!("{:.4} < {:.4}", r.z21.rms, r.z22.rms / Z_CROSS_RATIO),
        ),
    ]
}

/// Martingale mean test (when `μ' ≡ 0` inside the theorem's hypotheses),
/// monotone `E U*²`, and the heavy-tail flag for the inverse Bessel model.
pub fn moments_checks(r: &MomentsReport) -> Vec<CheckLine> {
    let m = &r.moments;
    let mut out: Vec<CheckLine> = reference_line(r.provenance.reference_check.as_ref()).into_iter().collect();
    if m.martingale && !r.outside_hypotheses {
        let detail: Vec<String> =
            m.checkpoints.iter().map(|c| format!("t={}: {:.4} (se {:.4})", c.t, c.mean, c.se_mean)).collect();
        out.push(CheckLine::new("martingale mean within 3 SE", m.mean_within_3se, detail.join(", ")));
    }
    let m2: Vec<f64> = m.checkpoints.iter().map(|c| c.m2_max).collect();
    out.push(CheckLine::new("E U*^2 nondecreasing", m.m2_max_nondecreasing, format!("{m2:?}")));
    out.push(CheckLine::new("E U^2 <= E U*^2", m.m2_bounded_by_max, String::new()));
    if r.model == "inverse_bessel" {
        out.push(match &r.heavy_tail {
            Some(h) => CheckLine::new(
                "heavy tail flag",
                h.flag,
                format!("hill = {:.4}, ci = ({:.4}, {:.4}), k = {}", h.hill, h.ci.0, h.ci.1, h.k),
            ),
            None => CheckLine::new("heavy tail flag", false, "Hill estimate unavailable"),
        });
    }
    out
}

pub fn weak_error_checks(r: &WeakErrorExperiment) -> Vec<CheckLine> {
    let mut out: Vec<CheckLine> = reference_line(r.provenance.reference_check.as_ref()).into_iter().collect();
    let est: Vec<String> = r.report.points.iter().map(|p| format!("{}: {:.4} (se {:.4})", p.n, p.estimate, p.se)).collect();
    out.push(CheckLine::new("weak error nonincreasing within 2 SE", r.nonincreasing_within_2se, est.join(", ")));
    let curve: Vec<String> = r.report.points.iter().map(|p| format!("{}: {:.4}", p.n, p.bound_curve)).collect();
    out.push(CheckLine::new("bound curve dominates", r.bound_dominates, curve.join(", ")));
    if let Some(tc) = &r.tail_checks {
        for t in tc {
            out.push(CheckLine::new(
                format!("tail P(S* > {})", t.x),
                t.pass,
                format!("{:.4} (ci {:.4}..{:.4}) vs {:.4}", t.exceed_fraction, t.ci.0, t.ci.1, t.bound),
            ));
        }
    }
    out
}
