//! Acceptance criteria at full size. Each test prints one
//! `ACCEPTANCE <id> PASS|FAIL <detail>` line on stderr, bypassing capture.

use std::io::Write;

use sde_errlab::checks::{self, CheckLine};
use sde_errlab::config::ExperimentConfig;
use sde_errlab::erroranalysis::{z11_closed_form, z_functionals};
use sde_errlab::experiments;
use sde_errlab::model::{self, check_cir_condition, truncate};
use sde_errlab::path::BrownianGrid;
use sde_errlab::scheme::{simulate, stop_at, Scheme};

fn report(id: &str, title: &str, pass: bool, detail: &str) {
    let line = format!("ACCEPTANCE {id} {} {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{line}");
}

fn summarize(lines: &[CheckLine]) -> (bool, String) {
    let detail = lines
        .iter()
        .map(|l| format!("[{} {}: {}]", if l.pass { "ok" } else { "FAIL" }, l.name, l.detail))
        .collect::<Vec<_>>()
        .join(" ");
    (checks::all_pass(lines), detail)
}

fn params(kv: &[(&str, f64)]) -> std::collections::BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn c01_locality_of_truncation() {
    let x0: f64 = 1.0;
    let m = 2.0 * x0.abs() + 1.0;
    let (n, fine) = (64, 64 * 16);
    let (mut compared, mut stopped, mut mismatches) = (0, 0, Vec::new());
    for name in ["gbm", "bounded_sine", "abs_drift"] {
        let base = model::lookup(name).unwrap();
        let trunc = truncate(&base, m).unwrap();
        for i in 0..100u64 {
            let g = BrownianGrid::generate(101, i, 1.0, fine).unwrap();
            for s in [Scheme::Euler, Scheme::Milstein, Scheme::SymmetrizedEuler] {
                let a = stop_at(&simulate(&base, s, x0, n, &g).unwrap(), m);
                let b = stop_at(&simulate(&trunc, s, x0, n, &g).unwrap(), m);
                compared += 1;
                stopped += a.stop_index.is_some() as usize;
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                if a.stop_index != b.stop_index || bits(&a.values) != bits(&b.values) {
                    mismatches.push(format!("{name}/{s}/{i}"));
                }
            }
        }
    }
    report(
        "1",
        "locality (truncated vs original, stopped at m)",
        mismatches.is_empty(),
        &format!("{compared} stopped trajectories compared, {stopped} hit the level, mismatches {mismatches:?}"),
    );
}

#[test]
fn c02_coarsening_and_z11() {
    let g = BrownianGrid::generate(102, 0, 1.0, 4096).unwrap();
    let mut exact = true;
    for n in [1, 2, 4, 64, 1024, 4096] {
        let r = 4096 / n;
        let coarse = g.coarsen(n).unwrap();
        for (j, c) in coarse.iter().enumerate() {
            let mut s = 0.0;
            for d in &g.increments()[j * r..(j + 1) * r] {
                s += d;
            }
            exact &= s.to_bits() == c.to_bits();
        }
    }
    let mut worst: f64 = 0.0;
    for n in [4, 64, 1024] {
        for i in 0..20u64 {
            let g = BrownianGrid::generate(102, i, 1.0, 4096).unwrap();
            worst = worst.max((z_functionals(&g, n).unwrap().z11 - z11_closed_form(n, 1.0)).abs());
        }
    }
    report(
        "2",
        "exact coarsening and z11 closed form",
        exact && worst <= 1e-12,
        &format!("block sums bit-exact: {exact}; max |z11 - T^2/(2 sqrt n)| = {worst:e}"),
    );
}

fn strong_rate_cfg() -> ExperimentConfig {
    ExperimentConfig {
        model: "gbm".into(),
        params: params(&[("mu", 0.5), ("sigma", 0.4)]),
        x0: 1.0,
        t: 1.0,
        n_list: (4..=10).map(|k| 1 << k).collect(),
        paths: 2000,
        seed: 103,
        schemes: vec!["euler".into(), "milstein".into()],
        ..Default::default()
    }
}

#[test]
fn c03_strong_rates() {
    let r = experiments::strong_rate(&strong_rate_cfg(), 1).unwrap();
    let (pass, detail) = summarize(&checks::strong_rate_checks(&r));
    report("3", "strong rates (gbm, exact reference)", pass, &detail);
}

#[test]
fn c04_z_statistics() {
    let cfg = ExperimentConfig { n: 1024, paths: 10_000, t: 1.0, seed: 104, ..Default::default() };
    let r = experiments::zstats(&cfg, 1).unwrap();
    let (pass, detail) = summarize(&checks::zstats_checks(&r));
    let critical = 1.358 * (2.0f64 / 10_000.0).sqrt();
    let pass = pass && (r.ks_z22.critical_05 - critical).abs() < 1e-12;
    report("4", "Z statistics", pass, &detail);
}

#[test]
fn c05_error_law() {
    let mut all = Vec::new();
    for name in ["gbm", "abs_drift"] {
        let cfg = ExperimentConfig {
            model: name.into(),
            n: 1024,
            refinement: 64,
            paths: 4000,
            seed: 105,
            schemes: vec!["euler".into()],
            ..Default::default()
        };
        let r = experiments::error_law(&cfg, 1).unwrap();
        let mut lines = checks::error_law_checks(&r);
        for l in &mut lines {
            l.name = format!("{name} {}", l.name);
        }
        all.extend(lines);
    }
    let (pass, detail) = summarize(&all);
    report("5", "error law KS (gbm, abs_drift)", pass, &detail);
}

fn moments_cfg(name: &str, n: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig { model: name.into(), n, paths: 10_000, seed, ..Default::default() }
}

#[test]
fn c06_martingale_and_moments() {
    let r = experiments::moments(&moments_cfg("bounded_sine", 16, 106), 1).unwrap();
    let (pass, detail) = summarize(&checks::moments_checks(&r));
    report("6", "martingale / moments (bounded_sine)", pass && r.moments.martingale, &detail);
}

fn cir_cfg() -> ExperimentConfig {
    ExperimentConfig {
        model: "cir".into(),
        params: params(&[("a", 1.0), ("b", 0.01), ("sigma", 0.1)]),
        n_list: vec![64, 256, 1024],
        paths: 4000,
        seed: 107,
        schemes: vec!["symmetrized_euler".into()],
        ..Default::default()
    }
}

#[test]
fn c07_cir_boundedness() {
    let cond = check_cir_condition(1.0, 0.01, 0.1).unwrap();
    let r = experiments::strong_rate(&cir_cfg(), 1).unwrap();
    let (pass, detail) = summarize(&checks::strong_rate_checks(&r));
    report("7", "CIR condition and normalized sup second moment", pass && cond.holds, &detail);
}

#[test]
fn c08_inverse_bessel_heavy_tail() {
    let r = experiments::moments(&moments_cfg("inverse_bessel", 64, 108), 1).unwrap();
    let h = r.heavy_tail.clone();
    let pass = h.as_ref().is_some_and(|h| h.hill < 2.0 && h.ci.1 < 2.5 && h.flag);
    let detail = match h {
        Some(h) => format!(
            "hill = {:.4}, ci95 = ({:.4}, {:.4}), k = {}, k/2 -> {:.4}, 2k -> {:.4}, m2 halves = ({:.3e}, {:.3e}), non-finite excluded = {}",
            h.hill, h.ci.0, h.ci.1, h.k, h.sensitivity.0, h.sensitivity.1, h.m2_halves.0, h.m2_halves.1, h.excluded_nonfinite
        ),
        None => "Hill estimate unavailable".into(),
    };
    report("8", "inverse Bessel infinite-variance flag", pass, &detail);
}

#[test]
fn c09_weak_error_log_rate() {
    let cfg = ExperimentConfig {
        model: "cev".into(),
        params: params(&[("b", 1.0), ("beta", 2.0)]),
        x0: 1.0,
        n_list: (5..=11).map(|k| 1 << k).collect(),
        paths: 10_000,
        seed: 109,
        functional: "clamp_unit".into(),
        tail_x: vec![2.0, 4.0, 8.0],
        ..Default::default()
    };
    let r = experiments::weak_error(&cfg, 1).unwrap();
    let (pass, detail) = summarize(&checks::weak_error_checks(&r));
    let shape = r.report.tail.nu == 1.0 && r.report.growth_exponent == 1.0;
    report("9", "weak error log-rate and CEV tail bound", pass && shape, &detail);
}

#[test]
fn c10_determinism_across_workers() {
    type Run = Box<dyn Fn(usize) -> String>;
    let runs: Vec<(&str, Run)> = vec![
        ("moments bounded_sine", Box::new(|w| serde_json::to_string(&experiments::moments(&moments_cfg("bounded_sine", 16, 106), w).unwrap()).unwrap())),
        ("moments inverse_bessel", Box::new(|w| serde_json::to_string(&experiments::moments(&moments_cfg("inverse_bessel", 64, 108), w).unwrap()).unwrap())),
        ("strong-rate cir", Box::new(|w| serde_json::to_string(&experiments::strong_rate(&cir_cfg(), w).unwrap()).unwrap())),
    ];
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, run) in &runs {
        let (a, b) = (run(1), run(3));
        pass &= a == b;
        detail.push(format!("{name}: {} bytes, identical = {}", a.len(), a == b));
    }
    report("10", "byte-identical reports for 1 and 3 workers", pass, &detail.join("; "));
}
