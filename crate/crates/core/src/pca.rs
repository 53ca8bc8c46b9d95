//! Spectral baseline: clustering in the span of the top singular vectors,
//! message passing with Gaussian priors, and the corresponding theory.
//!
//! With Gaussian priors on both factors the overlaps reduce to two scalars.
//! `m_v` is the squared overlap between the top left singular subspace and
//! the centers, `m_s` the matching quantity on the point side. Projected
//! points behave like a mixture of `r` unit-variance Gaussians whose centers
//! sit `sqrt(rho m_v)` away from the origin, which gives the error rate of
//! spectral clustering in closed form up to one integral.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kmeans::{kmeans, DEFAULT_RESTARTS};
use crate::linalg::{truncated_svd, SpdFactor, SvdOptions};
use crate::model::{overlap_score, GmmInstance, Labels, OverlapReport};
use crate::rng::{substream, Stream};
use crate::se::argmax_accuracy;

/// Fixed point of the Gaussian-prior overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianOrderParams {
    pub m_v: f64,
    pub m_s: f64,
}

impl GaussianOrderParams {
    /// Separation `rho m_v` of the projected cluster centers, in units of the
    /// projected noise variance.
    pub fn snr(&self, rho: f64) -> f64 {
        rho * self.m_v
    }
}

fn check(rho: f64, alpha: f64, r: usize) -> Result<()> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(invalid(format!("rho must be finite and >= 0, got {rho}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    if r < 2 {
        return Err(invalid(format!("r must be at least 2, got {r}")));
    }
    Ok(())
}

/// One step of the scalar map
/// `m_v <- (a m_s)/(1 + a m_s)` with `a = alpha rho / r`,
/// `m_s <- rho m_v / (r + rho m_v)`.
pub fn gaussian_se_step(
    p: GaussianOrderParams,
    rho: f64,
    alpha: f64,
    r: usize,
) -> GaussianOrderParams {
    let rf = r as f64;
    let a = alpha * rho / rf;
    let m_v = a * p.m_s / (1.0 + a * p.m_s);
    let m_s = rho * m_v / (rf + rho * m_v);
    GaussianOrderParams { m_v, m_s }
}

/// Iterate [`gaussian_se_step`] from `(1, 1)`.
pub fn gaussian_se_iterate(
    rho: f64,
    alpha: f64,
    r: usize,
    tol: f64,
    max_iters: usize,
) -> (GaussianOrderParams, usize) {
    let mut p = GaussianOrderParams { m_v: 1.0, m_s: 1.0 };
    for it in 1..=max_iters {
        let next = gaussian_se_step(p, rho, alpha, r);
        let change = (next.m_v - p.m_v).abs().max((next.m_s - p.m_s).abs());
        p = next;
        if change < tol {
            return (p, it);
        }
    }
    (p, max_iters)
}

/// Closed-form fixed point:
/// `m_v = (alpha rho^2 - r^2) / (rho (r + alpha rho))`,
/// `m_s = (alpha rho^2 - r^2) / (alpha rho (r + rho))`, both clipped at 0.
pub fn gaussian_se_fixed_point(rho: f64, alpha: f64, r: usize) -> Result<GaussianOrderParams> {
    check(rho, alpha, r)?;
    let rf = r as f64;
    let num = alpha * rho * rho - rf * rf;
    if num <= 0.0 {
        return Ok(GaussianOrderParams { m_v: 0.0, m_s: 0.0 });
    }
    Ok(GaussianOrderParams {
        m_v: num / (rho * (rf + alpha * rho)),
        m_s: num / (alpha * rho * (rf + rho)),
    })
}

/// Fraction of points spectral clustering assigns correctly, in the large
/// size limit.
pub fn pca_error_rate_theory(rho: f64, alpha: f64, r: usize) -> Result<f64> {
    let p = gaussian_se_fixed_point(rho, alpha, r)?;
    Ok(argmax_accuracy(p.snr(rho).sqrt(), r))
}

/// Overlap implied by [`pca_error_rate_theory`].
pub fn pca_overlap_theory(rho: f64, alpha: f64, r: usize) -> Result<f64> {
    let chance = 1.0 / r as f64;
    Ok((pca_error_rate_theory(rho, alpha, r)? - chance) / (1.0 - chance))
}

/// Mean-squared error `r rho (1 - m_v)` of the spectral estimate of the
/// scaled centers `sqrt(rho) V0`.
pub fn pca_mse_theory(rho: f64, alpha: f64, r: usize) -> Result<f64> {
    let p = gaussian_se_fixed_point(rho, alpha, r)?;
    Ok(r as f64 * rho * (1.0 - p.m_v))
}

#[derive(Debug, Clone)]
pub struct PcaResult {
    pub labels: Labels,
    pub overlap_report: OverlapReport,
    pub singular_values: Vec<f64>,
    /// Right singular vectors scaled by `sqrt(m)`, one row per point.
    pub projected: Array2<f64>,
    /// Left singular vectors, one row per dimension.
    pub left: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaOptions {
    pub restarts: usize,
    pub seed: u64,
    pub svd: SvdOptions,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            svd: SvdOptions::default(),
        }
    }
}

/// Top-`r` singular vectors of `X`, then k-means on the projected points.
pub fn pca_cluster(instance: &GmmInstance, opts: &PcaOptions) -> Result<PcaResult> {
    let r = instance.params.r;
    let m = instance.params.m;
    let svd_opts = SvdOptions {
        seed: opts.seed,
        ..opts.svd
    };
    let svd = truncated_svd(instance.x.view(), r, svd_opts)?;
    if !svd.converged {
        return Err(Error::Numerical(format!(
            "truncated SVD did not converge in {} iterations",
            svd.iterations
        )));
    }
    let projected = &svd.v * (m as f64).sqrt();
    let km = kmeans(projected.view(), r, opts.restarts, opts.seed)?;
    let labels = Labels::new(km.labels, r)?;
    let overlap_report = overlap_score(&labels, &instance.labels)?;
    Ok(PcaResult {
        labels,
        overlap_report,
        singular_values: svd.singular_values.to_vec(),
        projected,
        left: svd.u,
    })
}

/// `(rho / n) ||V0 - P V0||_F^2` where `P` projects onto the given left
/// singular subspace. The conditional mean of `sqrt(rho) V0` given that
/// subspace is its projection, so this is the spectral MSE.
pub fn pca_projection_mse(instance: &GmmInstance, left: ArrayView2<f64>) -> f64 {
    let n = instance.params.n as f64;
    let rho = instance.params.effective_rho();
    let coords = left.t().dot(&instance.v0);
    let residual = &instance.v0 - &left.dot(&coords);
    rho / n * residual.iter().map(|v| v * v).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAmpResult {
    pub v_hat: Array2<f64>,
    pub s_hat: Array2<f64>,
    pub sigma_v: Array2<f64>,
    pub sigma_s: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(SpdFactor::new(a.view())?.inverse())
}

/// Message passing with Gaussian priors on centers and assignments:
///
/// `V = (sqrt(rho/n) X S - rho alpha V_prev Sigma_s) Sigma_v`,
/// `Sigma_v = (I + (rho/n) S^T S)^{-1}`,
/// `S = (sqrt(rho/n) X^T V - rho S Sigma_v) Sigma_s`,
/// `Sigma_s = (r I + (rho/n) V^T V)^{-1}`.
///
/// Stops when the largest entrywise change of `S` relative to its largest
/// entry drops below `tol`.
pub fn gaussian_amp_iterate(
    instance: &GmmInstance,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<GaussianAmpResult> {
    let params = instance.params;
    params.validate()?;
    if !(tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    let (n, m, r) = (params.n, params.m, params.r);
    let rho = params.effective_rho();
    let alpha = params.alpha();
    let coef = (rho / n as f64).sqrt() / params.delta.sqrt();
    let q = rho / n as f64;
    let eye = Array2::<f64>::eye(r);

    let mut rng = substream(seed, Stream::AmpInit, 1);
    let scale = 1.0 / (r as f64).sqrt();
    let mut s =
        Array2::from_shape_simple_fn((m, r), || scale * rng.sample::<f64, _>(StandardNormal));
    let mut v_prev = Array2::<f64>::zeros((n, r));
    let mut sigma_s = Array2::<f64>::zeros((r, r));
    let mut sigma_v = eye.clone();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        sigma_v = spd_inverse(&(&eye + &(s.t().dot(&s) * q)))?;
        let v = (instance.x.dot(&s) * coef - v_prev.dot(&sigma_s) * (rho * alpha)).dot(&sigma_v);
        let sigma_s_next = spd_inverse(&(&eye * r as f64 + &(v.t().dot(&v) * q)))?;
        let s_next = (instance.x.t().dot(&v) * coef - s.dot(&sigma_v) * rho).dot(&sigma_s_next);
        if s_next.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                last_state: None,
            });
        }
        let size = s_next
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()))
            .max(f64::MIN_POSITIVE);
        let change = s_next
            .iter()
            .zip(s.iter())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        s = s_next;
        sigma_s = sigma_s_next;
        v_prev = v;
        if change / size < tol || size < 1e-12 {
            converged = true;
            break;
        }
    }
    Ok(GaussianAmpResult {
        v_hat: v_prev,
        s_hat: s,
        sigma_v,
        sigma_s,
        iterations,
        converged,
    })
}

/// Relative residuals of the eigen relation `(rho/n) X^T X S ~ S a` with `a`
/// fitted by least squares, first as a scalar and then as an `r x r` matrix.
pub fn eigen_residual(x: ArrayView2<f64>, s_hat: ArrayView2<f64>, rho: f64) -> Result<(f64, f64)> {
    let n = x.nrows() as f64;
    let ks = x.t().dot(&x.dot(&s_hat)) * (rho / n);
    let norm_s = s_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_s == 0.0 {
        return Err(invalid("S is zero"));
    }
    let fro = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let a_scalar = s_hat.iter().zip(ks.iter()).map(|(a, b)| a * b).sum::<f64>() / (norm_s * norm_s);
    let scalar = fro(&(&ks - &(&s_hat * a_scalar))) / norm_s;
    let gram = s_hat.t().dot(&s_hat);
    let a_matrix = SpdFactor::new(gram.view())?
        .inverse()
        .dot(&s_hat.t().dot(&ks));
    let matrix = fro(&(&ks - &s_hat.dot(&a_matrix))) / norm_s;
    Ok((scalar, matrix))
}
