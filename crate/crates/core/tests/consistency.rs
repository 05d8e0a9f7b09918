//! Statistical consistency of the batch estimator across replicated streams.

use glnar_core::batch::{fit_batch, FitOptions};
use glnar_core::gln::ThetaState;
use glnar_core::sim::{simulate, SimSpec};

fn shape_estimates(n: usize, seeds: std::ops::Range<u64>) -> Vec<f64> {
    let truth = ThetaState::new(vec![1.36, -0.37], 0.11, 1.4).unwrap();
    seeds
        .map(|seed| {
            let series = simulate(&SimSpec::new(truth.clone(), n, 9_000 + seed)).unwrap();
            fit_batch(&series, 2, &FitOptions::default()).unwrap().theta.nu()
        })
        .collect()
}

#[test]
fn shape_estimator_is_consistent() {
    let at_n = shape_estimates(50_000, 0..20);
    let mean: f64 = at_n.iter().sum::<f64>() / at_n.len() as f64;
    assert!((mean - 1.4).abs() < 0.02, "mean of nu estimates {mean}");

    let spread = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
    };
    let at_4n = shape_estimates(200_000, 0..20);
    let sd_n = spread(&at_n);
    let sd_4n = spread(&at_4n);
    assert!(
        sd_4n < sd_n,
        "spread did not shrink when quadrupling the sample: {sd_n} -> {sd_4n}"
    );
}
