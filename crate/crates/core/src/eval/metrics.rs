use crate::error::{Error, Result};

fn check(labels: &[f64], preds: &[f64], min: usize) -> Result<()> {
    if labels.len() != preds.len() {
        return Err(Error::Contract(format!(
            "{} labels but {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    if labels.len() < min {
        return Err(Error::Contract(format!("need at least {min} samples, got {}", labels.len())));
    }
    Ok(())
}

/// `1 - mean |y - p|`.
pub fn mean_accuracy(labels: &[f64], preds: &[f64]) -> Result<f64> {
    check(labels, preds, 1)?;
    let mae = labels.iter().zip(preds).map(|(y, p)| (y - p).abs()).sum::<f64>() / labels.len() as f64;
    Ok(1.0 - mae)
}

/// Coefficient of determination `1 - SS_res / SS_tot` around the label
/// mean. Constant labels make it undefined.
pub fn r_squared(labels: &[f64], preds: &[f64]) -> Result<f64> {
    check(labels, preds, 2)?;
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let ss_tot: f64 = labels.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("R² of constant labels".into()));
    }
    let ss_res: f64 = labels.iter().zip(preds).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mse(labels: &[f64], preds: &[f64]) -> Result<f64> {
    check(labels, preds, 1)?;
    Ok(labels.iter().zip(preds).map(|(y, p)| (y - p).powi(2)).sum::<f64>() / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(mean_accuracy(&[0.2, 0.7], &[0.2, 0.7]).unwrap(), 1.0);
        assert!((mean_accuracy(&[0.5], &[0.4]).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(mean_accuracy(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(mean_accuracy(&[], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[0.1, 0.5, 0.9], &[0.1, 0.5, 0.9]).unwrap(), 1.0);
        let y = [0.2, 0.4, 0.9];
        let m = (0.2 + 0.4 + 0.9) / 3.0;
        assert!(r_squared(&y, &[m; 3]).unwrap().abs() < 1e-12);
        assert!((r_squared(&[0.0, 1.0], &[0.25, 0.75]).unwrap() - 0.75).abs() < 1e-12);
        assert!(matches!(r_squared(&[0.3, 0.3], &[0.1, 0.2]), Err(Error::Undefined(_))));
        assert!(matches!(r_squared(&[0.3], &[0.3]), Err(Error::Contract(_))));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[0.3, -0.2], &[0.3, -0.2]).unwrap(), 0.0);
        assert!((mse(&[0.0], &[0.1]).unwrap() - 0.01).abs() < 1e-15);
        assert!(mse(&[0.0], &[]).is_err());
    }

    proptest! {
        #[test]
        fn mse_matches_loop(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..50)) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mut acc = 0.0;
            for i in 0..y.len() {
                acc += (y[i] - p[i]) * (y[i] - p[i]);
            }
            prop_assert!((mse(&y, &p).unwrap() - acc / y.len() as f64).abs() < 1e-12);
        }

        #[test]
        fn metrics_ignore_pair_order(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40), rot in 0usize..40) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let r = rot % pairs.len();
            let (yr, pr): (Vec<f64>, Vec<f64>) = pairs[r..].iter().chain(&pairs[..r]).copied().unzip();
            prop_assert!((mean_accuracy(&y, &p).unwrap() - mean_accuracy(&yr, &pr).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&mean_accuracy(&y, &p).unwrap()));
            if let (Ok(a), Ok(b)) = (r_squared(&y, &p), r_squared(&yr, &pr)) {
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!(a <= 1.0);
            }
        }

        #[test]
        fn shrunk_predictions_give_r2_in_unit_interval(
            ys in prop::collection::vec(0.0f64..1.0, 3..30),
            t in 0.01f64..0.99,
        ) {
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            prop_assume!(ys.iter().any(|y| (y - mean).abs() > 1e-6));
            // strictly between each label and the label mean
            let p: Vec<f64> = ys.iter().map(|y| mean + t * (y - mean)).collect();
            let r2 = r_squared(&ys, &p).unwrap();
            prop_assert!(r2 > 0.0 && r2 < 1.0);
        }
    }
}
