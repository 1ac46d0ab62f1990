//! Photometric mean-squared-error loss.

use crate::error::{Result, StagError};
use crate::img::Image;

/// Mean over pixels and channels of the squared difference, with its gradient
/// image 2 (rendered - target) / N.
pub fn mse_loss(rendered: &Image, target: &Image) -> Result<(f64, Image)> {
    if !rendered.same_dims(target) {
        return Err(StagError::DimMismatch {
            context: "mse_loss images",
            lhs: format!("{}x{}x{}", rendered.width(), rendered.height(), rendered.channels()),
            rhs: format!("{}x{}x{}", target.width(), target.height(), target.channels()),
        });
    }
    let n = rendered.data().len() as f64;
    let mut grad = Image::new(rendered.width(), rendered.height(), rendered.channels());
    let mut sum = 0.0;
    for ((r, t), g) in rendered
        .data()
        .iter()
        .zip(target.data())
        .zip(grad.data_mut())
    {
        let d = r - t;
        sum += d * d;
        *g = 2.0 * d / n;
    }
    Ok((sum / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images_have_zero_loss() {
        let img = Image::filled(4, 3, 3, 0.5);
        let (l, grad) = mse_loss(&img, &img).unwrap();
        assert_eq!(l, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_difference_gives_unit_loss() {
        let a = Image::filled(5, 2, 1, 0.0);
        let b = Image::filled(5, 2, 1, 1.0);
        let (l, _) = mse_loss(&a, &b).unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn random_pair_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut a = Image::new(7, 5, 3);
        let mut b = Image::new(7, 5, 3);
        for v in a.data_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        for v in b.data_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let (l, grad) = mse_loss(&a, &b).unwrap();
        // Independent summation oracle.
        let mut oracle = 0.0;
        for i in 0..a.data().len() {
            oracle += (a.data()[i] - b.data()[i]).powi(2);
        }
        oracle /= a.data().len() as f64;
        assert!((l - oracle).abs() < 1e-14);
        // Gradient vs finite differences at a few elements.
        for i in [0usize, 17, 80] {
            let h = 1e-6;
            let mut ap = a.clone();
            ap.data_mut()[i] += h;
            let mut am = a.clone();
            am.data_mut()[i] -= h;
            let fd = (mse_loss(&ap, &b).unwrap().0 - mse_loss(&am, &b).unwrap().0) / (2.0 * h);
            assert!((fd - grad.data()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Image::new(4, 4, 3);
        let b = Image::new(4, 5, 3);
        assert!(mse_loss(&a, &b).is_err());
    }
}
