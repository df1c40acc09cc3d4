use fedvsr_core::aggregation::{
    coordinate_median_params, decay_adaptive_step, fedvsr_weights, greedy_weights, hellinger, inverse_loss_weights,
    mixing_coefficient, uniform_weights, weighted_average_params, AggregationConfig, ClientUpdate, Strategy as Rule,
};
use fedvsr_core::federation::aggregate;
use fedvsr_core::{FedVsrError, ParamVector};
use proptest::prelude::*;

fn update(id: usize, values: Vec<f64>, loss: f64) -> ClientUpdate {
    ClientUpdate {
        client_id: id,
        params: ParamVector::new(values, "t").unwrap(),
        mean_loss: loss,
    }
}

fn scalars(values: &[f64]) -> Vec<ClientUpdate> {
    values.iter().enumerate().map(|(i, &v)| update(i, vec![v], 1.0)).collect()
}

/// `n` entries > 0 that sum to 1.
fn probability(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

// Independent evaluation of the mixing rule for a loss vector.
fn oracle_weights(losses: &[f64], alpha: f64, tau: f64) -> (Vec<f64>, f64) {
    let n = losses.len() as f64;
    let inv: Vec<f64> = losses.iter().map(|l| l.powf(-alpha)).collect();
    let z: f64 = inv.iter().sum();
    let l: Vec<f64> = inv.iter().map(|v| v / z).collect();
    let h = (0.5 * l.iter().map(|p| ((1.0 / n).sqrt() - p.sqrt()).powi(2)).sum::<f64>()).sqrt();
    let m = if h < tau { 0.0 } else { (h - tau) / (1.0 - tau) };
    (l.iter().map(|p| (1.0 - m) / n + m * p).collect(), h)
}

#[test]
fn uniform_examples() {
    assert_eq!(uniform_weights(4).unwrap(), vec![0.25; 4]);
    assert_eq!(uniform_weights(1).unwrap(), vec![1.0]);
    assert!(matches!(uniform_weights(0), Err(FedVsrError::EmptyCohort)));
    for n in 1..50 {
        assert!((uniform_weights(n).unwrap().iter().sum::<f64>() - 1.0).abs() <= 1e-15 * n as f64);
    }
}

#[test]
fn inverse_loss_examples() {
    assert_eq!(inverse_loss_weights(&[2.0, 2.0], 1.0).unwrap(), vec![0.5, 0.5]);
    for (losses, alpha) in [([1.0, 2.0], 1.0), ([1.0, 4.0], 0.5)] {
        let w = inverse_loss_weights(&losses, alpha).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
    }
    assert!(inverse_loss_weights(&[], 1.0).is_err());
    assert!(inverse_loss_weights(&[1.0, 0.0], 1.0).is_err());
    assert!(inverse_loss_weights(&[1.0, f64::NAN], 1.0).is_err());
}

#[test]
fn hellinger_examples() {
    assert_eq!(hellinger(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    assert!((hellinger(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
    // sqrt(1 - 1/sqrt(2)) evaluated to 30 digits
    assert!((hellinger(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - 0.541_196_100_146_197).abs() < 1e-12);
    assert!(matches!(hellinger(&[1.0], &[0.5, 0.5]), Err(FedVsrError::Shape(_))));
    assert!(hellinger(&[0.5, 0.6], &[0.5, 0.5]).is_err());
}

#[test]
fn mixing_examples() {
    assert_eq!(mixing_coefficient(0.1, 0.2).unwrap(), 0.0);
    assert_eq!(mixing_coefficient(1.0, 0.2).unwrap(), 1.0);
    assert!((mixing_coefficient(0.6, 0.2).unwrap() - 0.5).abs() < 1e-15);
    assert!(mixing_coefficient(0.5, 1.0).is_err());
    assert!(mixing_coefficient(1.5, 0.1).is_err());
}

#[test]
fn two_client_example_matches_high_precision_values() {
    // u = (1/2, 1/2), l = (2/3, 1/3); values from a 30-digit evaluation
    let w = fedvsr_weights(&[1.0, 2.0], 1.0, 0.0).unwrap();
    assert!((w.hellinger - 0.120_006_001_293_732).abs() < 1e-14);
    assert_eq!(w.mixing, w.hellinger);
    assert!((w.weights[0] - 0.520_001_000_215_622).abs() < 1e-14);
    assert!((w.weights[1] - 0.479_998_999_784_378).abs() < 1e-14);

    let (ow, oh) = oracle_weights(&[1.0, 2.0], 1.0, 0.0);
    assert!((oh - w.hellinger).abs() < 1e-15);
    assert!((ow[0] - w.weights[0]).abs() < 1e-15);
}

#[test]
fn threshold_dominates_and_equal_losses_are_uniform() {
    let w = fedvsr_weights(&[0.4, 0.5, 0.6], 2.0, 0.999_999).unwrap();
    assert_eq!(w.mixing, 0.0);
    assert_eq!(w.weights, uniform_weights(3).unwrap());

    let w = fedvsr_weights(&[0.7; 5], 2.0, 0.0).unwrap();
    assert_eq!(w.hellinger, 0.0);
    assert_eq!(w.mixing, 0.0);
    assert_eq!(w.weights, uniform_weights(5).unwrap());
}

#[test]
fn greedy_uses_loss_weights_only() {
    let g = greedy_weights(&[1.0, 3.0], 1.0).unwrap();
    assert_eq!(g.mixing, 1.0);
    assert!((g.weights[0] - 0.75).abs() < 1e-15);
}

#[test]
fn weighted_average_examples() {
    let ups = scalars(&[0.0, 4.0]);
    assert_eq!(weighted_average_params(&ups, &[1.0, 0.0]).unwrap().values(), &[0.0]);
    assert_eq!(weighted_average_params(&ups, &[0.5, 0.5]).unwrap().values(), &[2.0]);
    assert_eq!(weighted_average_params(&ups, &[0.25, 0.75]).unwrap().values(), &[3.0]);
    assert!(matches!(weighted_average_params(&ups, &[1.0]), Err(FedVsrError::Shape(_))));
    let mixed = vec![update(0, vec![1.0], 1.0), update(1, vec![1.0, 2.0], 1.0)];
    assert!(matches!(weighted_average_params(&mixed, &[0.5, 0.5]), Err(FedVsrError::Shape(_))));
    assert!(matches!(weighted_average_params(&[], &[]), Err(FedVsrError::EmptyCohort)));
}

#[test]
fn median_examples() {
    assert_eq!(coordinate_median_params(&scalars(&[9.0, 1.0, 5.0])).unwrap().values(), &[5.0]);
    assert_eq!(coordinate_median_params(&scalars(&[3.0, 1.0])).unwrap().values(), &[2.0]);
    let single = vec![update(0, vec![1.5, -2.0, 7.0], 1.0)];
    assert!(coordinate_median_params(&single).unwrap().bitwise_eq(&single[0].params));
}

#[test]
fn decay_examples() {
    assert_eq!(decay_adaptive_step(2.0, 10, 10).unwrap(), 1.0);
    assert!((decay_adaptive_step(4.0, 5, 10).unwrap() - 2.0).abs() < 1e-15);
    assert!((decay_adaptive_step(2.0, 1, 100).unwrap() - 1.986_184_990_874_072).abs() < 1e-12);
    assert!(decay_adaptive_step(2.0, 0, 10).is_err());
    assert!(decay_adaptive_step(2.0, 11, 10).is_err());
}

#[test]
fn tiny_losses_are_clamped_before_inversion() {
    let ups = vec![update(0, vec![0.0], 0.0), update(1, vec![1.0], 1e-12), update(2, vec![2.0], 1.0)];
    let cfg = AggregationConfig::default();
    let agg = aggregate(&ups, &cfg, 1.0).unwrap();
    assert!(agg.weights.iter().all(|w| w.is_finite()));
    // the two clamped clients tie
    assert!((agg.weights[0] - agg.weights[1]).abs() < 1e-15);
}

#[test]
fn strategies_dispatch() {
    let ups = vec![
        update(0, vec![1.0, 10.0], 0.1),
        update(1, vec![2.0, 20.0], 0.2),
        update(2, vec![9.0, 30.0], 0.9),
    ];
    let mut cfg = AggregationConfig::default();
    cfg.strategy = Rule::FedAvg;
    let avg = aggregate(&ups, &cfg, 2.0).unwrap();
    assert_eq!(avg.params.values(), &[4.0, 20.0]);
    assert_eq!(avg.mixing, 0.0);
    cfg.strategy = Rule::FedMedian;
    assert_eq!(aggregate(&ups, &cfg, 2.0).unwrap().params.values(), &[2.0, 20.0]);
    cfg.strategy = Rule::FedVsr;
    let vsr = aggregate(&ups, &cfg, 2.0).unwrap();
    assert!(vsr.params.values()[0] < 4.0, "low-loss clients pull the average");
    cfg.strategy = Rule::FedVsrGreedy;
    assert_eq!(aggregate(&ups, &cfg, 2.0).unwrap().mixing, 1.0);
    for s in Rule::ALL {
        assert_eq!(s.as_str().parse::<Rule>().unwrap(), s);
    }
}

proptest! {
    #[test]
    fn weights_are_probabilities_and_match_oracle(losses in prop::collection::vec(1e-3f64..10.0, 1..10), alpha in 0.1f64..4.0, tau in 0.0f64..0.9) {
        let w = fedvsr_weights(&losses, alpha, tau).unwrap();
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.weights.iter().all(|&x| x >= 0.0));
        let (ow, oh) = oracle_weights(&losses, alpha, tau);
        prop_assert!((oh - w.hellinger).abs() <= 1e-12);
        for (a, b) in w.weights.iter().zip(&ow) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn lower_loss_gets_more_weight(losses in prop::collection::vec(1e-2f64..10.0, 2..8), alpha in 0.1f64..4.0) {
        let w = fedvsr_weights(&losses, alpha, 0.0).unwrap();
        for i in 0..losses.len() {
            for j in 0..losses.len() {
                if losses[i] < losses[j] * (1.0 - 1e-9) {
                    prop_assert!(w.weights[i] > w.weights[j]);
                }
            }
        }
    }

    #[test]
    fn permutation_equivariance(losses in prop::collection::vec(1e-2f64..10.0, 2..8), rot in 0usize..8) {
        let n = losses.len();
        let k = rot % n;
        let mut rotated = losses.clone();
        rotated.rotate_left(k);
        let a = fedvsr_weights(&losses, 2.0, 0.05).unwrap().weights;
        let b = fedvsr_weights(&rotated, 2.0, 0.05).unwrap().weights;
        for i in 0..n {
            prop_assert!((b[i] - a[(i + k) % n]).abs() <= 1e-15);
        }
    }

    #[test]
    fn loss_scale_cancels(losses in prop::collection::vec(1e-2f64..10.0, 1..8), c in 0.01f64..100.0, alpha in 0.1f64..3.0) {
        let scaled: Vec<f64> = losses.iter().map(|l| l * c).collect();
        let a = inverse_loss_weights(&losses, alpha).unwrap();
        let b = inverse_loss_weights(&scaled, alpha).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn hellinger_symmetric_and_triangle(p in probability(5), q in probability(5), r in probability(5)) {
        let pq = hellinger(&p, &q).unwrap();
        prop_assert!((pq - hellinger(&q, &p).unwrap()).abs() <= 1e-15);
        prop_assert!((0.0..=1.0).contains(&pq));
        let pr = hellinger(&p, &r).unwrap();
        let rq = hellinger(&r, &q).unwrap();
        prop_assert!(pq <= pr + rq + 1e-12);
    }

    #[test]
    fn zero_mixing_is_bitwise_fedavg(params in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..8), loss in 0.01f64..5.0) {
        let ups: Vec<ClientUpdate> = params.into_iter().enumerate().map(|(i, v)| update(i, v, loss)).collect();
        let w = fedvsr_weights(&vec![loss; ups.len()], 2.0, 0.1).unwrap();
        prop_assert_eq!(w.mixing, 0.0);
        let a = weighted_average_params(&ups, &w.weights).unwrap();
        let b = weighted_average_params(&ups, &uniform_weights(ups.len()).unwrap()).unwrap();
        prop_assert!(a.bitwise_eq(&b));
    }

    #[test]
    fn median_matches_sort(values in prop::collection::vec(prop::collection::vec(-3i32..3, 4), 1..10)) {
        let ups: Vec<ClientUpdate> = values.iter().enumerate()
            .map(|(i, v)| update(i, v.iter().map(|&x| x as f64 * 0.5).collect(), 1.0))
            .collect();
        let m = coordinate_median_params(&ups).unwrap();
        for j in 0..4 {
            let mut col: Vec<f64> = ups.iter().map(|u| u.params.values()[j]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = col.len();
            let want = if n % 2 == 1 { col[n / 2] } else { (col[n / 2 - 1] + col[n / 2]) / 2.0 };
            prop_assert_eq!(m.values()[j], want);
        }
    }
}
