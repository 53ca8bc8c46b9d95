//! Posterior-mean denoisers for the two priors of the mixture model.
//!
//! For natural parameters `(A, B)` the tilted measure is
//! `P(x) exp(B^T x - x^T A x / 2) / Z(A, B)`. With a standard normal prior on
//! the centers this is Gaussian with mean `(I + A)^{-1} B` and covariance
//! `(I + A)^{-1}`; with the uniform prior over the `r` basis vectors it is a
//! softmax over `B_k - A_kk / 2`. The covariance is the Jacobian of the mean
//! with respect to `B`, and the mean is the gradient of `log Z` with respect
//! to `B`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
}

fn check_shapes(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<()> {
    let r = b.len();
    if a.dim() != (r, r) {
        return Err(Error::Shape(format!(
            "A is {:?} but B has length {r}",
            a.dim()
        )));
    }
    Ok(())
}

/// Center denoiser with `A` fixed, so that one factorization of `I + A`
/// serves every row that shares it.
#[derive(Debug, Clone)]
pub struct CenterDenoiser {
    factor: SpdFactor,
    covariance: Array2<f64>,
}

impl CenterDenoiser {
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        let r = a.nrows();
        let shifted = &a + &Array2::<f64>::eye(r);
        let factor = SpdFactor::new(shifted.view())?;
        let covariance = factor.inverse();
        Ok(Self { factor, covariance })
    }

    pub fn mean(&self, b: ArrayView1<f64>) -> Array1<f64> {
        self.factor.solve(b)
    }

    /// `(I + A)^{-1}`, the same for every `B`.
    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    /// Means for a batch of fields stacked as rows.
    pub fn mean_rows(&self, b: ArrayView2<f64>) -> Array2<f64> {
        b.dot(&self.covariance)
    }

    pub fn log_z(&self, b: ArrayView1<f64>) -> f64 {
        0.5 * b.dot(&self.factor.solve(b)) - 0.5 * self.factor.log_det()
    }
}

/// Posterior mean and covariance of a center coordinate vector.
pub fn f_v(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<DenoiserOutput> {
    check_shapes(a, b)?;
    let d = CenterDenoiser::new(a)?;
    Ok(DenoiserOutput {
        mean: d.mean(b),
        covariance: d.covariance.clone(),
    })
}

/// `log Z_v(A, B) = B^T (I + A)^{-1} B / 2 - log det(I + A) / 2`.
pub fn log_z_v(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<f64> {
    check_shapes(a, b)?;
    Ok(CenterDenoiser::new(a)?.log_z(b))
}

/// Softmax of `b_k - a_diag_k / 2` written into `out`.
pub(crate) fn assignment_probabilities(b: &[f64], a_diag: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for ((o, &bk), &ak) in out.iter_mut().zip(b).zip(a_diag) {
        *o = bk - 0.5 * ak;
        max = max.max(*o);
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn assignment_log_z(b: &[f64], a_diag: &[f64]) -> f64 {
    let r = b.len();
    let max = b
        .iter()
        .zip(a_diag)
        .map(|(&bk, &ak)| bk - 0.5 * ak)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = b
        .iter()
        .zip(a_diag)
        .map(|(&bk, &ak)| (bk - 0.5 * ak - max).exp())
        .sum();
    max + (sum / r as f64).ln()
}

/// Posterior mean (assignment probabilities) and covariance of a one-hot
/// assignment vector. Only the diagonal of `a` enters.
///
/// Panics if `a` is not `r x r` for `r = b.len()`.
pub fn f_s(a: ArrayView2<f64>, b: ArrayView1<f64>) -> DenoiserOutput {
    check_shapes(a, b).expect("f_s shapes");
    let r = b.len();
    let diag: Vec<f64> = a.diag().to_vec();
    let mut p = vec![0.0; r];
    assignment_probabilities(&b.to_vec(), &diag, &mut p);
    let mean = Array1::from(p);
    let mut covariance = Array2::from_diag(&mean);
    for k in 0..r {
        for l in 0..r {
            covariance[[k, l]] -= mean[k] * mean[l];
        }
    }
    DenoiserOutput { mean, covariance }
}

/// `log Z_s(A, B) = log[(1/r) sum_k exp(B_k - A_kk / 2)]`, evaluated with the
/// maximum subtracted.
///
/// Panics if `a` is not `r x r` for `r = b.len()`.
pub fn log_z_s(a: ArrayView2<f64>, b: ArrayView1<f64>) -> f64 {
    check_shapes(a, b).expect("log_z_s shapes");
    assignment_log_z(&b.to_vec(), &a.diag().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn f_v_identity_cases() {
        let b = array![0.3, -1.2, 2.0];
        let out = f_v(Array2::zeros((3, 3)).view(), b.view()).unwrap();
        assert_eq!(out.mean, b);
        assert_eq!(out.covariance, Array2::<f64>::eye(3));

        let ones = Array1::ones(4);
        let out = f_v(Array2::eye(4).view(), ones.view()).unwrap();
        for &m in out.mean.iter() {
            assert_abs_diff_eq!(m, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn f_v_rejects_non_pd() {
        let a = array![[-2.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            f_v(a.view(), array![1.0, 1.0].view()),
            Err(Error::Singular)
        ));
        assert!(matches!(
            log_z_v(a.view(), array![1.0, 1.0].view()),
            Err(Error::Singular)
        ));
        assert!(f_v(Array2::eye(3).view(), array![1.0, 1.0].view()).is_err());
    }

    #[test]
    fn f_s_uniform_and_softmax() {
        let out = f_s(Array2::zeros((4, 4)).view(), Array1::zeros(4).view());
        for &p in out.mean.iter() {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
        }
        let out = f_s(Array2::zeros((2, 2)).view(), array![3f64.ln(), 0.0].view());
        assert_abs_diff_eq!(out.mean[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(out.mean[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn f_s_uses_diagonal_of_a_only() {
        let b = array![0.1, 0.4, -0.3];
        let mut a = Array2::from_diag(&array![1.0, 0.2, 0.5]);
        let base = f_s(a.view(), b.view());
        a[[0, 2]] = 7.0;
        a[[1, 0]] = -3.0;
        assert_eq!(f_s(a.view(), b.view()), base);
    }

    #[test]
    fn f_s_survives_huge_fields() {
        let out = f_s(
            Array2::zeros((3, 3)).view(),
            array![1e3, -1e3, 999.0].view(),
        );
        assert!(out.mean.iter().all(|p| p.is_finite() && *p >= 0.0));
        assert_abs_diff_eq!(out.mean.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_z_closed_forms() {
        assert_eq!(
            log_z_v(Array2::zeros((2, 2)).view(), Array1::zeros(2).view()).unwrap(),
            0.0
        );
        let v = log_z_v(Array2::eye(3).view(), Array1::zeros(3).view()).unwrap();
        assert_abs_diff_eq!(v, -1.5 * 2f64.ln(), epsilon = 1e-14);

        assert_abs_diff_eq!(
            log_z_s(Array2::zeros((5, 5)).view(), Array1::zeros(5).view()),
            0.0,
            epsilon = 1e-15
        );
        let two = 2f64.ln();
        assert_abs_diff_eq!(
            log_z_s(Array2::zeros((2, 2)).view(), array![two, two].view()),
            two,
            epsilon = 1e-15
        );
        // huge inputs stay finite
        assert!(log_z_s(Array2::zeros((2, 2)).view(), array![1e3, 1e3].view()).is_finite());
    }
}
