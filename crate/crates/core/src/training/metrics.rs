use serde::{Deserialize, Serialize};

use super::TrainError;

/// Regression scores; variances are population variances. Every sum runs in
/// ascending order, so the report does not depend on sample order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
    pub explained_variance: f64,
    pub max_error: f64,
    pub n_samples: usize,
}

fn sorted_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    sorted_sum(xs) / n
}

pub fn metrics(pred: &[f64], target: &[f64]) -> Result<EvalReport, TrainError> {
    let n = pred.len();
    if n != target.len() {
        return Err(TrainError::LengthMismatch {
            pred: n,
            target: target.len(),
        });
    }
    if n < 2 {
        return Err(TrainError::TooFewSamples { needed: 2, got: n });
    }
    let resid: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let t_mean = mean(target.iter().copied());
    let ss_tot = sorted_sum(target.iter().map(|t| (t - t_mean).powi(2)));
    if ss_tot == 0.0 {
        return Err(TrainError::DegenerateTarget);
    }
    let ss_res = sorted_sum(resid.iter().map(|r| r * r));
    let r_mean = mean(resid.iter().copied());
    let var_resid = mean(resid.iter().map(|r| (r - r_mean).powi(2)));
    let var_target = ss_tot / n as f64;
    Ok(EvalReport {
        mse: ss_res / n as f64,
        mae: mean(resid.iter().map(|r| r.abs())),
        r2: 1.0 - ss_res / ss_tot,
        explained_variance: 1.0 - var_resid / var_target,
        max_error: resid.iter().fold(0.0, |m, r| m.max(r.abs())),
        n_samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_fit() {
        let t = [1.0, 2.0, 4.0];
        let r = metrics(&t, &t).unwrap();
        assert_eq!((r.mse, r.mae, r.max_error), (0.0, 0.0, 0.0));
        assert_eq!((r.r2, r.explained_variance), (1.0, 1.0));
        assert_eq!(r.n_samples, 3);
    }

    #[test]
    fn mean_predictor_scores_zero() {
        let t = [1.0, 2.0, 6.0];
        let r = metrics(&[3.0; 3], &t).unwrap();
        assert_eq!(r.r2, 0.0);
    }

    #[test]
    fn hand_example() {
        // resid = [1, -1, 2]; target mean 2, ss_tot = 2; ss_res = 6.
        let r = metrics(&[2.0, 1.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.mse, 2.0);
        assert!((r.mae - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.max_error, 2.0);
        assert_eq!(r.r2, 1.0 - 6.0 / 2.0);
        // var(resid) = 2 - (2/3)^2 = 14/9; var(target) = 2/3.
        assert!((r.explained_variance - (1.0 - (14.0 / 9.0) / (2.0 / 3.0))).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(metrics(&[1.0, 1.0], &[2.0, 2.0]), Err(TrainError::DegenerateTarget)));
        assert!(matches!(metrics(&[1.0], &[2.0]), Err(TrainError::TooFewSamples { .. })));
        assert!(matches!(metrics(&[1.0, 2.0], &[2.0]), Err(TrainError::LengthMismatch { .. })));
    }

    proptest! {
        #[test]
        fn zero_mean_residuals_equalize_r2_and_ev(
            t in prop::collection::vec(-5.0f64..5.0, 3..30),
            r in prop::collection::vec(-1.0f64..1.0, 30),
        ) {
            let n = t.len();
            let rm = r[..n].iter().sum::<f64>() / n as f64;
            let pred: Vec<f64> = t.iter().zip(&r).map(|(t, r)| t + (r - rm)).collect();
            prop_assume!(metrics(&pred, &t).is_ok());
            let rep = metrics(&pred, &t).unwrap();
            prop_assert!((rep.r2 - rep.explained_variance).abs() < 1e-9);
        }

        #[test]
        fn permutation_invariant(
            t in prop::collection::vec(-5.0f64..5.0, 2..40),
            p in prop::collection::vec(-5.0f64..5.0, 40),
            seed in any::<u64>(),
        ) {
            let n = t.len();
            let p = &p[..n];
            if let Ok(a) = metrics(p, &t) {
                let perm = crate::tensor::RngState::new(seed).permutation(n);
                let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
                let tp: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
                let b = metrics(&pp, &tp).unwrap();
                prop_assert_eq!(a.mse.to_bits(), b.mse.to_bits());
                prop_assert_eq!(a.r2.to_bits(), b.r2.to_bits());
                prop_assert_eq!(a.explained_variance.to_bits(), b.explained_variance.to_bits());
                prop_assert_eq!(a.mae.to_bits(), b.mae.to_bits());
            }
        }

        #[test]
        fn report_invariants(
            t in prop::collection::vec(-5.0f64..5.0, 2..30),
            p in prop::collection::vec(-5.0f64..5.0, 30),
        ) {
            let n = t.len();
            if let Ok(rep) = metrics(&p[..n], &t) {
                prop_assert!(rep.mse >= 0.0 && rep.mae >= 0.0);
                prop_assert!(rep.max_error >= rep.mae);
                prop_assert!(rep.r2 <= 1.0 && rep.explained_variance <= 1.0);
            }
        }
    }
}
