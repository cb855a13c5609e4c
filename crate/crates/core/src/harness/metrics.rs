use crate::error::{Error, Result};
use crate::numeric::C64;

/// Normalized squared error `||est - truth||^2 / ||truth||^2`.
pub fn mse(est: &[C64], truth: &[C64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::Dimension(format!("estimate {} vs truth {}", est.len(), truth.len())));
    }
    let den: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(est.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / den)
}

pub fn mse_real(est: &[f64], truth: &[f64]) -> Result<f64> {
    let e: Vec<C64> = est.iter().map(|&x| C64::new(x, 0.0)).collect();
    let t: Vec<C64> = truth.iter().map(|&x| C64::new(x, 0.0)).collect();
    mse(&e, &t)
}

/// Like [`mse_real`], but an all-zero truth is normalized by `scale` (one
/// nominal magnitude per entry) instead of failing.
pub fn mse_real_or_scaled(est: &[f64], truth: &[f64], scale: &[f64]) -> Result<f64> {
    match mse_real(est, truth) {
        Err(Error::ZeroNorm) => {
            let den: f64 = scale.iter().map(|s| s * s).sum();
            if den == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok(est.iter().map(|x| x * x).sum::<f64>() / den)
        }
        r => r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let x = [C64::new(1.0, 2.0), C64::new(-0.5, 0.0)];
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert_eq!(mse(&[C64::default(); 2], &x).unwrap(), 1.0);
        let twice: Vec<C64> = x.iter().map(|z| z * 2.0).collect();
        assert!((mse(&twice, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(mse(&x, &[C64::default(); 2]), Err(Error::ZeroNorm)));
        assert!(mse(&x[..1], &x).is_err());
        assert_eq!(mse_real_or_scaled(&[0.5], &[0.0], &[1.0]).unwrap(), 0.25);
    }

    proptest! {
        #[test]
        fn nonnegative_and_scale_invariant(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8), k in 0.1f64..10.0) {
            let t: Vec<C64> = v.iter().map(|&(a, b)| C64::new(a, b)).collect();
            let e: Vec<C64> = t.iter().map(|z| z * 0.7 + C64::new(0.1, 0.0)).collect();
            prop_assume!(t.iter().any(|z| z.norm() > 1e-3));
            let m = mse(&e, &t).unwrap();
            prop_assert!(m >= 0.0);
            let ts: Vec<C64> = t.iter().map(|z| z * k).collect();
            let es: Vec<C64> = e.iter().map(|z| z * k).collect();
            prop_assert!((mse(&es, &ts).unwrap() - m).abs() < 1e-9 * (1.0 + m));
        }
    }
}
