use bregman_skm::checks::reference_policy;
use bregman_skm::cli::summary::median;
use bregman_skm::prelude::*;
use rayon::prelude::*;

const SEEDS: u64 = 20;

fn entropy_config() -> IterationConfig {
    IterationConfig::new(reference_policy().unwrap(), LegendreGeometry::neg_entropy_simplex())
        .noise(NoiseModel::gaussian(0.1).unwrap())
}

fn median_over_seeds(cfg: &IterationConfig, f: impl Fn(&Trace) -> f64 + Sync) -> f64 {
    let values: Vec<f64> = (0..SEEDS)
        .into_par_iter()
        .map(|s| f(&run(&cfg.clone().seed(s), None).unwrap()))
        .collect();
    median(&values).unwrap()
}

#[test]
fn averaged_residual_vanishes() {
    let cfg = entropy_config().n_iters(10_000).record_every(1);
    let values: Vec<(f64, f64)> = (0..SEEDS)
        .into_par_iter()
        .map(|s| {
            let t = run(&cfg.clone().seed(s), None).unwrap();
            (averaged_residual(&t, 1_000).unwrap(), averaged_residual(&t, 10_000).unwrap())
        })
        .collect();
    let early = median(&values.iter().map(|v| v.0).collect::<Vec<_>>()).unwrap();
    let late = median(&values.iter().map(|v| v.1).collect::<Vec<_>>()).unwrap();
    let steps = cfg.steps;
    let p = LegendreGeometry::neg_entropy_simplex().rate_exponent();
    let predicted = (step_sum(&steps, 1_000) / step_sum(&steps, 10_000)).powf(p);
    assert!(late < 1.1 * predicted * early, "{early:e} -> {late:e}, predicted ratio {predicted}");
}

#[test]
fn iterates_approach_the_fixed_point() {
    let op = reference_policy().unwrap();
    let fp = fixed_point_oracle(&op, 1e-12, 100_000).unwrap();
    let dist = |n: usize| {
        let cfg = entropy_config().n_iters(n);
        let values: Vec<f64> = (0..SEEDS)
            .into_par_iter()
            .map(|s| run(&cfg.clone().seed(s), Some(&fp)).unwrap().meta.final_dist_to_ref.unwrap())
            .collect();
        median(&values).unwrap()
    };
    let (short, long) = (dist(1_000), dist(20_000));
    assert!(long < short, "{short:e} -> {long:e}");
    assert!(long < 1e-2, "{long:e}");
}

#[test]
fn heavy_tailed_entropy_iterates_stay_in_the_simplex() {
    let op = reference_policy().unwrap();
    let g = LegendreGeometry::neg_entropy_simplex();
    let model = NoiseModel::student_t(1.0, 5.0).unwrap();
    let steps = StepSchedule::harmonic_offset(2.0).unwrap();
    let mut stream = model.stream(11);
    let mut x = Vector::uniform(op.dim());
    for n in 0..5_000 {
        let xi = model.sample(&mut stream, op.dim());
        x = skm_step(&g, &op, &x, steps.step_size(n), &xi, 0).unwrap();
        assert!(x.as_slice().iter().all(|c| *c >= g.domain_floor()), "n = {n}: {x:?}");
        assert!((x.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9, "n = {n}");
    }
}

#[test]
fn noiseless_euclidean_residual_is_nonincreasing() {
    let op = OperatorSpec::affine_seeded(10, 3, 0.9, 0.5).unwrap();
    for steps in [StepSchedule::harmonic_offset(10.0).unwrap(), StepSchedule::constant(0.5).unwrap()] {
        let t = run(&IterationConfig::new(op.clone(), LegendreGeometry::euclidean()).steps(steps).n_iters(2_000), None)
            .unwrap();
        for w in t.rows.windows(2) {
            assert!(w[1].norm_residual <= w[0].norm_residual * (1.0 + 1e-12) + 1e-14, "n = {}", w[1].n);
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = entropy_config()
        .trim(TrimSchedule::LogSchedule)
        .noise(NoiseModel::student_t(2.0, 1.0).unwrap())
        .n_iters(500)
        .seed(7);
    let (a, b) = (run(&cfg, None).unwrap(), run(&cfg, None).unwrap());
    assert_eq!(a.rows.len(), b.rows.len());
    for (p, q) in a.rows.iter().zip(&b.rows) {
        assert_eq!(p.bregman_residual.to_bits(), q.bregman_residual.to_bits());
        assert_eq!(p.avg_residual.to_bits(), q.avg_residual.to_bits());
    }
    assert_eq!(a.final_iterate(), b.final_iterate());
    let other = run(&cfg.clone().seed(8), None).unwrap();
    assert_ne!(a.final_iterate(), other.final_iterate());
}

#[test]
fn euclidean_policy_iteration_fits_the_rate() {
    let cfg = IterationConfig::new(reference_policy().unwrap(), LegendreGeometry::euclidean())
        .noise(NoiseModel::gaussian(0.1).unwrap());
    let p = LegendreGeometry::euclidean().rate_exponent();
    let slope = median_over_seeds(&cfg, |t| fit_rate(t, p, 0.5).unwrap().fitted_slope);
    assert!(slope <= -0.25, "median slope {slope}");
}
