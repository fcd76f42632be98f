use sde_errlab::erroranalysis::z_functionals;
use sde_errlab::limitlaw::{moment_diagnostics, sample_limit};
use sde_errlab::model;
use sde_errlab::path::{normal_samples, BrownianGrid, KeySpace};
use sde_errlab::runner::Setup;
use sde_errlab::scheme::Scheme;
use sde_errlab::statkit::{hill_tail_index, summarize};
use sde_errlab::weakerror::{estimate_weak_error, estimate_weak_error_independent, FunctionalSpec};

#[test]
fn increment_variance_matches_grid_step() {
    let mut squares = Vec::with_capacity(100_000);
    for i in 0..100_000u64 {
        let g = BrownianGrid::generate(11, KeySpace::Primary.key(i), 1.0, 16).unwrap();
        squares.push(g.increments().iter().map(|d| d * d).sum::<f64>() / 16.0);
    }
    let s = summarize(&squares).unwrap();
    assert!((s.mean - 1.0 / 16.0).abs() <= 3.0 * s.se_mean, "{s:?}");
}

#[test]
fn quadratic_variation_concentrates() {
    let inside = (0..1000u64)
        .filter(|i| {
            let g = BrownianGrid::generate(12, *i, 1.0, 1 << 14).unwrap();
            let qv: f64 = g.increments().iter().map(|d| d * d).sum();
            (0.95..=1.05).contains(&qv)
        })
        .count();
    assert!(inside >= 990, "{inside} of 1000 paths inside [0.95, 1.05]");
}

#[test]
fn w_and_b_increments_uncorrelated() {
    let (mut xy, mut n) = (Vec::new(), 0);
    for i in 0..(100_000 / 64) as u64 {
        let w = BrownianGrid::generate(13, KeySpace::LimitW.key(i), 1.0, 64).unwrap();
        let b = BrownianGrid::generate(13, KeySpace::LimitB.key(i), 1.0, 64).unwrap();
        for (x, y) in w.increments().iter().zip(b.increments()) {
            xy.push(x * y * 64.0);
            n += 1;
        }
    }
    let s = summarize(&xy).unwrap();
    assert!(n >= 99_000);
    assert!(s.mean.abs() <= 3.0 * s.se_mean, "{s:?}");
}

#[test]
fn pareto_tail_indices_recovered() {
    let u = normal_samples(14, KeySpace::Auxiliary.key(0), 100_000);
    // uniforms from normals via the standard normal CDF
    let normal = statrs::distribution::Normal::standard();
    use statrs::distribution::ContinuousCDF;
    for (alpha, lo, hi) in [(1.0, 0.9, 1.1), (3.0, 2.7, 3.3)] {
        let x: Vec<f64> = u.iter().map(|z| normal.cdf(-*z).powf(-1.0 / alpha)).collect();
        let h = hill_tail_index(&x, 5000).unwrap();
        assert!((lo..=hi).contains(&h.alpha_hat), "alpha {alpha}: {}", h.alpha_hat);
    }
}

#[test]
fn z_cross_terms_centered_and_shrinking() {
    let rms = |n: usize| {
        let z: Vec<_> = (0..10_000u64)
            .map(|i| z_functionals(&BrownianGrid::generate(15, i, 1.0, 1024).unwrap(), n).unwrap())
            .collect();
        let z12: Vec<f64> = z.iter().map(|s| s.z12).collect();
        let z21: Vec<f64> = z.iter().map(|s| s.z21).collect();
        let z22: Vec<f64> = z.iter().map(|s| s.z22).collect();
        for v in [&z12, &z21] {
            let s = summarize(v).unwrap();
            assert!(s.mean.abs() <= 3.0 * s.se_mean, "n={n}: {s:?}");
        }
        let s22 = summarize(&z22).unwrap();
        assert!((s22.variance - 0.5).abs() <= 3.0 * s22.se_variance.unwrap(), "n={n}: {s22:?}");
        let r = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        (r(&z12), r(&z21))
    };
    let (a12, a21) = rms(16);
    let (b12, b21) = rms(256);
    assert!(b12 < a12 && b21 < a21);
}

#[test]
fn bounded_sine_limit_is_centered() {
    let setup = Setup::new(model::lookup("bounded_sine").unwrap(), 1.0).seed(16).refinement(16);
    let cp = [0.5, 1.0];
    let s = sample_limit(&setup, 16, 10_000, &cp).unwrap();
    let r = moment_diagnostics(&cp, &s, true).unwrap();
    assert!(r.mean_within_3se && r.m2_max_nondecreasing && r.m2_bounded_by_max, "{r:?}");
}

#[test]
fn common_random_numbers_reduce_variance() {
    let setup = Setup::new(model::lookup("gbm").unwrap(), 1.0).seed(17).refinement(8);
    let spec = FunctionalSpec::capped_unit();
    let crn = estimate_weak_error(&setup, Scheme::Euler, &spec, &[8, 16], 10_000).unwrap();
    let (_, se_ind) = estimate_weak_error_independent(&setup, Scheme::Euler, &spec, 16, 10_000).unwrap();
    assert!(crn.points[1].se <= se_ind, "{} vs {se_ind}", crn.points[1].se);
}

#[test]
fn gbm_weak_error_decreases() {
    let setup = Setup::new(model::lookup("gbm").unwrap(), 1.0).seed(18).refinement(8);
    let r = estimate_weak_error(&setup, Scheme::Euler, &FunctionalSpec::capped_unit(), &[4, 8, 16, 32], 10_000).unwrap();
    assert!(r.nonincreasing_within_2se(), "{:?}", r.points);
    assert!(r.points.iter().all(|p| p.estimate >= 0.0 && p.se > 0.0));
}
