use proptest::prelude::*;
use tbmice_core::metrics::{mae, nmae, nrmse, rmse};

fn naive(pred: &[f64], actual: &[f64]) -> (f64, f64, f64, f64) {
    let n = pred.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..pred.len() {
        let e = pred[i] - actual[i];
        sq += e * e;
        abs += e.abs();
        sum += actual[i];
        lo = lo.min(actual[i]);
        hi = hi.max(actual[i]);
    }
    let mean = sum / n;
    let mut var = 0.0;
    for a in actual {
        var += (a - mean) * (a - mean);
    }
    let r = (sq / n).sqrt();
    let m = abs / n;
    (r, m, r / (var / n).sqrt(), m / (hi - lo))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_agree_with_naive_loops(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..60)) {
        let (pred, actual): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(actual.iter().any(|a| *a != actual[0]));
        let (r, m, nr, nm) = naive(&pred, &actual);
        prop_assert!(close(rmse(&pred, &actual).unwrap(), r));
        prop_assert!(close(mae(&pred, &actual).unwrap(), m));
        prop_assert!(close(nrmse(&pred, &actual).unwrap(), nr));
        prop_assert!(close(nmae(&pred, &actual).unwrap(), nm));
    }

    #[test]
    fn constant_mean_predictor_scores_one(actual in prop::collection::vec(-1e3f64..1e3, 2..200)) {
        prop_assume!(actual.iter().any(|a| *a != actual[0]));
        let mean = actual.iter().sum::<f64>() / actual.len() as f64;
        prop_assert_eq!(nrmse(&vec![mean; actual.len()], &actual).unwrap(), 1.0);
    }
}
