use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smoothing weights for a window spanning offsets `lo..=hi` around the
/// evaluated sample (offset 0), fitting a polynomial of `order`.
fn window_weights(lo: isize, hi: isize, order: usize) -> Vec<f64> {
    let len = (hi - lo + 1) as usize;
    let order = order.min(len - 1);
    let scale = (lo.abs().max(hi.abs())).max(1) as f64;
    // Vandermonde on scaled offsets; the fitted value at 0 is the constant
    // coefficient, i.e. row 0 of the pseudo-inverse.
    let a = DMatrix::from_fn(len, order + 1, |r, c| ((lo + r as isize) as f64 / scale).powi(c as i32));
    let ata = a.transpose() * &a;
    let chol = ata
        .cholesky()
        .expect("Vandermonde normal matrix is positive definite for distinct nodes");
    let mut e0 = DVector::zeros(order + 1);
    e0[0] = 1.0;
    let row = chol.solve(&e0);
    (a * row).iter().copied().collect()
}

/// Interior convolution coefficients for an odd `window` and `poly_order`.
pub fn savitzky_golay_coefficients(window: usize, poly_order: usize) -> Result<Vec<f64>> {
    check(window, poly_order)?;
    let h = (window / 2) as isize;
    Ok(window_weights(-h, h, poly_order))
}

fn check(window: usize, poly_order: usize) -> Result<()> {
    if window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("window must be odd, got {window}")));
    }
    if poly_order >= window {
        return Err(Error::InvalidParameter(format!(
            "poly_order {poly_order} must be < window {window}"
        )));
    }
    Ok(())
}

/// Least-squares local polynomial smoothing. Near the ends the window is
/// truncated to the available samples and refitted.
pub fn savitzky_golay(signal: &[f64], window: usize, poly_order: usize) -> Result<Vec<f64>> {
    check(window, poly_order)?;
    let n = signal.len();
    let h = (window / 2) as isize;
    let interior = window_weights(-h, h, poly_order);
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let lo = (-h).max(-i);
        let hi = h.min(n as isize - 1 - i);
        let weights = if lo == -h && hi == h {
            std::borrow::Cow::Borrowed(&interior)
        } else {
            std::borrow::Cow::Owned(window_weights(lo, hi, poly_order))
        };
        *o = weights
            .iter()
            .zip(lo..=hi)
            .map(|(w, j)| w * signal[(i + j) as usize])
            .sum();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_arguments() {
        assert!(savitzky_golay(&[1.0; 10], 4, 2).is_err());
        assert!(savitzky_golay(&[1.0; 10], 5, 5).is_err());
    }

    #[test]
    fn constant_is_unchanged() {
        let out = savitzky_golay(&[3.5; 40], 11, 3).unwrap();
        assert!(out.iter().all(|v| (v - 3.5).abs() < 1e-12));
    }

    #[test]
    fn classic_five_point_quadratic() {
        // (-3, 12, 17, 12, -3) / 35
        let c = savitzky_golay_coefficients(5, 2).unwrap();
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_polynomials() {
        let signal: Vec<f64> = (0..60)
            .map(|i| {
                let x = i as f64 * 0.1;
                1.0 - 2.0 * x + 0.5 * x * x - 0.03 * x * x * x
            })
            .collect();
        let out = savitzky_golay(&signal, 11, 3).unwrap();
        for (a, b) in out.iter().zip(&signal) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
