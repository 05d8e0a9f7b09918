//! Property tests for the algebraic invariants of the transform, the
//! predictive laws and the clipping step.

use glnar_core::data::{coarsen, CoarseningConfig, PowerSeries};
use glnar_core::gln::{inverse_transform, transform, GlnPredictive, GlnShape};
use glnar_core::predictive::{EmpiricalPredictive, Predictive};
use glnar_core::sim::{sim_epoch, sim_resolution};
use proptest::prelude::*;

proptest! {
    #[test]
    fn transform_round_trips(x in 1e-6..=(1.0f64 - 1e-6), nu in 0.5..3.0f64) {
        let shape = GlnShape::new(nu).unwrap();
        let y = transform(x, shape).unwrap();
        let back = inverse_transform(y, shape);
        prop_assert!((back - x).abs() < 1e-10, "x {x} nu {nu} -> {back}");
    }

    #[test]
    fn transform_is_strictly_increasing(
        a in 1e-6..=(1.0f64 - 1e-6),
        b in 1e-6..=(1.0f64 - 1e-6),
        nu in 0.5..3.0f64,
    ) {
        prop_assume!((a - b).abs() > 1e-12);
        let shape = GlnShape::new(nu).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(transform(lo, shape).unwrap() < transform(hi, shape).unwrap());
    }

    #[test]
    fn coarsen_is_idempotent_and_interior(
        values in prop::collection::vec(0.0..=1.0f64, 1..50),
        delta in 0.001..0.4f64,
    ) {
        let series = PowerSeries::from_values(values, sim_epoch(), sim_resolution()).unwrap();
        let config = CoarseningConfig::new(delta).unwrap();
        let once = coarsen(&series, config);
        let twice = coarsen(&once, config);
        prop_assert_eq!(&once, &twice);
        for v in once.values() {
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn gln_predictive_cdf_is_a_cdf(
        mu in -3.0..3.0f64,
        sigma2 in 0.01..1.0f64,
        nu in 0.5..3.0f64,
    ) {
        let pred = GlnPredictive::new(mu, sigma2, nu).unwrap();
        prop_assert_eq!(pred.cdf(0.0).unwrap(), 0.0);
        prop_assert_eq!(pred.cdf(1.0).unwrap(), 1.0);
        let mut prev = 0.0;
        for i in 0..=100 {
            let f = pred.cdf(i as f64 / 100.0).unwrap();
            prop_assert!(f >= prev);
            prop_assert!((0.0..=1.0).contains(&f));
            prev = f;
        }
    }

    #[test]
    fn gln_quantile_inverts_cdf(
        mu in -2.0..2.0f64,
        sigma2 in 0.05..1.0f64,
        nu in 0.5..3.0f64,
        tau in 0.01..0.99f64,
    ) {
        let pred = GlnPredictive::new(mu, sigma2, nu).unwrap();
        let q = pred.quantile(tau).unwrap();
        prop_assert!((pred.cdf(q).unwrap() - tau).abs() < 1e-8);
    }

    #[test]
    fn ensemble_cdf_respects_the_bounds(
        raw in prop::collection::vec(-0.3..1.3f64, 1..30),
    ) {
        // members outside [0, 1] are clipped the way the error dressing does
        let members: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let pred = Predictive::Empirical(
            EmpiricalPredictive::ensemble(members, None).unwrap(),
        );
        prop_assert_eq!(pred.cdf(1.0).unwrap(), 1.0);
        let mut prev = 0.0;
        for i in 0..=100 {
            let f = pred.cdf(i as f64 / 100.0).unwrap();
            prop_assert!(f >= prev - 1e-12);
            prev = f;
        }
    }
}

#[test]
fn bound_conventions_of_the_predictive_families() {
    // GLN and empirical predictives pin F at the bounds; the Gaussian is
    // evaluated raw over [0, 1] as the scoring convention requires
    let gln = Predictive::Gln(GlnPredictive::new(0.3, 0.2, 1.4).unwrap());
    assert_eq!(gln.cdf(0.0).unwrap(), 0.0);
    assert_eq!(gln.cdf(1.0).unwrap(), 1.0);

    let table = Predictive::Empirical(
        EmpiricalPredictive::quantile_table(
            vec![0.0, 0.5, 1.0],
            vec![0.2, 0.4, 0.9],
        )
        .unwrap(),
    );
    assert_eq!(table.cdf(0.0).unwrap(), 0.0);
    assert_eq!(table.cdf(1.0).unwrap(), 1.0);

    let gaussian = Predictive::Gaussian { mean: 0.9, sigma2: 0.04 };
    assert!(gaussian.cdf(1.0).unwrap() < 1.0);
    assert!(gaussian.cdf(0.0).unwrap() > 0.0);
}
