//! Dense linear algebra helpers.
//!
//! Data matrices live in `ndarray`; the small `r x r` factorizations
//! (Cholesky, symmetric eigendecomposition, thin QR/SVD) go through
//! `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Eigenvalues below this are rejected by [`psd_sqrt`]; those in
/// `[-PSD_TOLERANCE, 0)` are clamped to zero.
pub const PSD_TOLERANCE: f64 = 1e-10;

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

pub(crate) fn symmetrize(a: ArrayView2<f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    out += &a.t();
    out *= 0.5;
    out
}

/// Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Shape(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        let chol = to_na(symmetrize(a).view())
            .cholesky()
            .ok_or(Error::Singular)?;
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let x = self
            .chol
            .solve(&DVector::from_iterator(b.len(), b.iter().copied()));
        Array1::from_iter(x.iter().copied())
    }

    pub fn inverse(&self) -> Array2<f64> {
        symmetrize(from_na(&self.chol.inverse()).view())
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
    }
}

/// Symmetric eigendecomposition, eigenvalues in descending order.
pub fn sym_eigen(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = SymmetricEigen::new(to_na(symmetrize(a).view()));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let n = a.nrows();
    let vectors = Array2::from_shape_fn((n, n), |(row, k)| eig.eigenvectors[(row, order[k])]);
    (values, vectors)
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn psd_sqrt(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let (values, vectors) = sym_eigen(a);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let roots = values.mapv(|v| v.max(0.0).sqrt());
    let scaled = &vectors * &roots.view().insert_axis(Axis(0));
    Ok(symmetrize(scaled.dot(&vectors.t()).view()))
}

/// Orthonormal basis of the column span (thin Householder QR).
pub fn orthonormalize(a: ArrayView2<f64>) -> Array2<f64> {
    let q = to_na(a).qr().q();
    from_na(&q)
}

/// Thin SVD of a small matrix, singular values in descending order.
pub fn small_svd(a: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let svd = to_na(a)
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = Array1::from_iter(order.iter().map(|&i| svd.singular_values[i]));
    let u = Array2::from_shape_fn((u.nrows(), order.len()), |(row, k)| u[(row, order[k])]);
    let vt = Array2::from_shape_fn((order.len(), vt.ncols()), |(k, col)| vt[(order[k], col)]);
    Ok((u, values, vt))
}

/// Leading singular triplets of a large matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `n x k` left singular vectors.
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    /// `m x k` right singular vectors.
    pub v: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    pub oversample: usize,
    pub max_iters: usize,
    /// Stop once `max_i ||X v_i - s_i u_i|| / s_1` falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            oversample: 8,
            max_iters: 2000,
            tol: 1e-10,
            seed: 0,
        }
    }
}

/// Top-`k` singular triplets of `x` by block subspace iteration with
/// Rayleigh-Ritz extraction.
pub fn truncated_svd(x: ArrayView2<f64>, k: usize, opts: SvdOptions) -> Result<TruncatedSvd> {
    let (n, m) = x.dim();
    if k == 0 || k > n.min(m) {
        return Err(Error::invalid(format!(
            "cannot extract {k} singular vectors from a {n}x{m} matrix"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in matrix".into()));
    }
    let l = (k + opts.oversample).min(n.min(m));
    let mut rng = substream(opts.seed, Stream::Svd, 0);
    let start = Array2::from_shape_simple_fn((m, l), || StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(start.view());

    let mut result: Option<(Array2<f64>, Array1<f64>, Array2<f64>)> = None;
    for it in 1..=opts.max_iters {
        let y = x.dot(&q);
        if let Some((ref u, ref sv, ref vr)) = result {
            // residual of the previous Ritz triplets, using y = X q
            let xv: Array2<f64> = y.dot(vr);
            let scale: f64 = sv[0];
            let mut worst: f64 = 0.0;
            for i in 0..k {
                let diff = &xv.column(i) - &(&u.column(i) * sv[i]);
                worst = worst.max(diff.dot(&diff).sqrt() / scale.max(f64::MIN_POSITIVE));
            }
            if worst < opts.tol {
                let (u, sv, vr): (Array2<f64>, Array1<f64>, Array2<f64>) = result.take().unwrap();
                return Ok(finish(u, sv, q.dot(&vr), k, it, true));
            }
        }
        let p = orthonormalize(y.view());
        let z = x.t().dot(&p);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "non-finite value during subspace iteration".into(),
            ));
        }
        // z = q_new r  =>  p^T x = r^T q_new^T
        let (q_new, r) = thin_qr(z.view());
        let (ur, sv, vrt) = small_svd(r.t())?;
        q = q_new;
        result = Some((p.dot(&ur), sv, vrt.t().to_owned()));
    }
    let (u, sv, vr) = result.expect("at least one iteration");
    Ok(finish(u, sv, q.dot(&vr), k, opts.max_iters, false))
}

fn finish(
    u: Array2<f64>,
    sv: Array1<f64>,
    v: Array2<f64>,
    k: usize,
    iterations: usize,
    converged: bool,
) -> TruncatedSvd {
    TruncatedSvd {
        u: u.slice(s![.., ..k]).to_owned(),
        singular_values: sv.slice(s![..k]).to_owned(),
        v: v.slice(s![.., ..k]).to_owned(),
        iterations,
        converged,
    }
}

fn thin_qr(a: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let qr = to_na(a).qr();
    (from_na(&qr.q()), from_na(&qr.r()))
}

/// Principal angles (radians, ascending) between the column spans of `a`
/// and `b`.
pub fn principal_angles(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "row counts differ: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    let (_, cosines, _) = small_svd(qa.t().dot(&qb).view())?;
    Ok(cosines.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect())
}
