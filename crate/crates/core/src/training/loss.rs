use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// Per-branch mean squared errors `(low, full)`; their sum is the loss.
pub fn branch_losses(
    s_low: ArrayView1<f32>,
    s_low_gt: ArrayView1<f32>,
    s_full: ArrayView1<f32>,
    s_full_gt: ArrayView1<f32>,
) -> Result<(f64, f64)> {
    let n = s_low.len();
    if s_low_gt.len() != n || s_full.len() != n || s_full_gt.len() != n {
        return Err(Error::invalid("prediction and target lengths differ"));
    }
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let mse = |a: ArrayView1<f32>, b: ArrayView1<f32>| {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum::<f64>()
            / n as f64
    };
    let (low, full) = (mse(s_low, s_low_gt), mse(s_full, s_full_gt));
    if low.is_nan() || full.is_nan() {
        return Err(Error::invalid("loss is NaN"));
    }
    Ok((low, full))
}

/// Batch mean of `(s_L - s_L^gt)^2 + (s_F - s_F^gt)^2`.
pub fn total_loss(
    s_low: ArrayView1<f32>,
    s_low_gt: ArrayView1<f32>,
    s_full: ArrayView1<f32>,
    s_full_gt: ArrayView1<f32>,
) -> Result<f64> {
    let (a, b) = branch_losses(s_low, s_low_gt, s_full, s_full_gt)?;
    Ok(a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn perfect_prediction_is_zero() {
        let s = arr1(&[0.1f32, -0.4, 2.0]);
        assert_eq!(
            total_loss(s.view(), s.view(), s.view(), s.view()).unwrap(),
            0.0
        );
    }

    #[test]
    fn constant_offset_on_one_branch() {
        let gt = arr1(&[0.1f32, -0.4, 2.0, 0.0]);
        let off = gt.mapv(|v| v + 0.5);
        let l = total_loss(off.view(), gt.view(), gt.view(), gt.view()).unwrap();
        assert!((l - 0.25).abs() < 1e-6);
    }

    #[test]
    fn five_element_hand_sum() {
        let sl = arr1(&[0.5f32, -1.0, 0.25, 2.0, 0.0]);
        let gl = arr1(&[0.0f32, -0.5, 0.5, 1.0, 0.125]);
        let sf = arr1(&[1.0f32, 0.0, -0.75, 0.5, 0.5]);
        let gf = arr1(&[0.5f32, 0.25, -1.0, 0.5, 0.0]);
        let hand =
            (0.25 + 0.25 + 0.0625 + 1.0 + 0.015625 + 0.25 + 0.0625 + 0.0625 + 0.0 + 0.25) / 5.0;
        let l = total_loss(sl.view(), gl.view(), sf.view(), gf.view()).unwrap();
        assert!((l - hand).abs() < 1e-9);
    }

    #[test]
    fn nan_and_length_errors() {
        let a = arr1(&[f32::NAN]);
        let b = arr1(&[0.0f32]);
        assert!(total_loss(a.view(), b.view(), b.view(), b.view()).is_err());
        let c = arr1(&[0.0f32, 1.0]);
        assert!(total_loss(c.view(), b.view(), b.view(), b.view()).is_err());
    }
}
