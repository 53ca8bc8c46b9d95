//! Approximate message passing for the mixture model.
//!
//! Each iteration updates all center estimates from the current assignment
//! probabilities and then all assignment probabilities from the new centers.
//! Both halves subtract an Onsager memory term built from the summed
//! posterior covariances of the other side. The center covariance is the
//! same for every row, `(I + A_v)^{-1}`, so it is stored once; the assignment
//! covariances only enter through their sum.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoisers::{assignment_probabilities, CenterDenoiser};
use crate::error::{invalid, Error, Result};
use crate::model::{hard_assign, overlap_score, GmmInstance, OverlapReport};
use crate::rng::{substream, Stream};
use crate::se::OrderParams;

pub const DEFAULT_MAX_ITERS: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_INIT_NOISE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum AmpInit {
    /// Probabilities `1/r` plus small centered noise, centers small noise.
    Uninformative,
    /// Start at the ground truth. Only meaningful for tracking the informative
    /// fixed point.
    Informative,
    /// Caller-supplied `(s_hat, v_hat)`.
    Custom {
        s_hat: Array2<f64>,
        v_hat: Array2<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpConfig {
    pub init: AmpInit,
    pub max_iters: usize,
    pub tol: f64,
    /// Weight of the previous iterate, in `[0, 1)`.
    pub damping: f64,
    pub init_noise: f64,
    /// Keep the Onsager memory terms. Turning them off is an ablation.
    pub onsager: bool,
    /// Seed for the initialization noise.
    pub seed: u64,
    /// Record the hard-assignment overlap after every iteration.
    pub record_trajectory: bool,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            init: AmpInit::Uninformative,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            damping: 0.0,
            init_noise: DEFAULT_INIT_NOISE,
            onsager: true,
            seed: 0,
            record_trajectory: true,
        }
    }
}

impl AmpConfig {
    pub fn with_init(mut self, init: AmpInit) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(invalid(format!(
                "damping must lie in [0, 1), got {}",
                self.damping
            )));
        }
        if !(self.init_noise > 0.0) || !self.init_noise.is_finite() {
            return Err(invalid(format!(
                "init_noise must be positive, got {}",
                self.init_noise
            )));
        }
        Ok(())
    }
}

/// Iterate of the algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    /// `n x r` center estimates.
    pub v_hat: Array2<f64>,
    /// `m x r` assignment probabilities.
    pub s_hat: Array2<f64>,
    /// Center estimates of the previous iteration, for the Onsager term.
    pub v_hat_prev: Array2<f64>,
    /// Common posterior covariance of every center row, `(I + A_v)^{-1}`.
    pub sigma_v: Array2<f64>,
    /// Sum over points of the assignment covariances.
    pub sigma_s_sum: Array2<f64>,
    pub a_v: Array2<f64>,
    pub a_s: Array2<f64>,
    pub iteration: usize,
}

impl AmpState {
    fn is_finite(&self) -> bool {
        self.v_hat
            .iter()
            .chain(self.s_hat.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub overlap: f64,
    pub max_change: f64,
}

#[derive(Debug, Clone)]
pub struct AmpResult {
    pub s_hat: Array2<f64>,
    pub v_hat: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub overlap_report: OverlapReport,
    pub trajectory: Vec<TrajectoryPoint>,
    pub state: AmpState,
}

fn initial_state(instance: &GmmInstance, config: &AmpConfig) -> Result<AmpState> {
    let n = instance.params.n;
    let m = instance.params.m;
    let r = instance.params.r;
    let (s_hat, v_hat) = match &config.init {
        AmpInit::Uninformative => {
            let mut rng = substream(config.seed, Stream::AmpInit, 0);
            let eps = config.init_noise;
            let mut s =
                Array2::from_shape_simple_fn((m, r), || rng.sample::<f64, _>(StandardNormal));
            for mut row in s.rows_mut() {
                let mean = row.mean().unwrap_or(0.0);
                row.mapv_inplace(|v| 1.0 / r as f64 + eps * (v - mean));
                // keep rows inside the simplex for any noise level
                let low = row.fold(f64::INFINITY, |a, &b| a.min(b));
                if low < 0.0 {
                    row.mapv_inplace(|v| v - low);
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
            }
            let v =
                Array2::from_shape_simple_fn((n, r), || eps * rng.sample::<f64, _>(StandardNormal));
            (s, v)
        }
        AmpInit::Informative => (instance.s0(), instance.v0.clone()),
        AmpInit::Custom { s_hat, v_hat } => {
            if s_hat.dim() != (m, r) || v_hat.dim() != (n, r) {
                return Err(Error::Shape(format!(
                    "custom init must be {m}x{r} and {n}x{r}, got {:?} and {:?}",
                    s_hat.dim(),
                    v_hat.dim()
                )));
            }
            hard_assign(s_hat.view())?;
            (s_hat.clone(), v_hat.clone())
        }
    };
    Ok(AmpState {
        v_hat_prev: v_hat.clone(),
        v_hat,
        s_hat,
        sigma_v: Array2::zeros((r, r)),
        sigma_s_sum: Array2::zeros((r, r)),
        a_v: Array2::zeros((r, r)),
        a_s: Array2::zeros((r, r)),
        iteration: 0,
    })
}

fn blend(new: Array2<f64>, old: &Array2<f64>, damping: f64) -> Array2<f64> {
    if damping == 0.0 {
        return new;
    }
    new * (1.0 - damping) + old * damping
}

/// One full iteration. Returns the new state and the largest entrywise change
/// of `s_hat`.
fn step(
    x: ArrayView2<f64>,
    state: &AmpState,
    rho: f64,
    config: &AmpConfig,
) -> Result<(AmpState, f64)> {
    let (n, m) = x.dim();
    let r = state.s_hat.ncols();
    // Noise variance is already folded into rho and the data scale.
    let coef = (rho / n as f64).sqrt();
    let q = rho / n as f64;
    let onsager = if config.onsager { 1.0 } else { 0.0 };

    // Center half.
    let a_v = state.s_hat.t().dot(&state.s_hat) * q;
    let mut b_v = x.dot(&state.s_hat) * coef;
    if onsager != 0.0 {
        b_v = b_v - state.v_hat_prev.dot(&state.sigma_s_sum) * q;
    }
    let den = CenterDenoiser::new(a_v.view())?;
    let v_new = blend(den.mean_rows(b_v.view()), &state.v_hat, config.damping);
    let sigma_v = den.covariance().clone();

    // Assignment half.
    let a_s = v_new.t().dot(&v_new) * q;
    let mut b_s = x.t().dot(&v_new) * coef;
    if onsager != 0.0 {
        b_s = b_s - state.s_hat.dot(&sigma_v) * (q * n as f64);
    }
    let diag: Vec<f64> = a_s.diag().to_vec();
    let mut s_new = Array2::zeros((m, r));
    s_new
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(b_s.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, b)| {
            let b = b.to_vec();
            let mut p = vec![0.0; r];
            assignment_probabilities(&b, &diag, &mut p);
            for (o, v) in out.iter_mut().zip(p) {
                *o = v;
            }
        });
    let mut sigma_s_sum = Array2::from_diag(&s_new.sum_axis(Axis(0))) - s_new.t().dot(&s_new);
    let s_new = blend(s_new, &state.s_hat, config.damping);
    if config.damping > 0.0 {
        sigma_s_sum = sigma_s_sum * (1.0 - config.damping) + &state.sigma_s_sum * config.damping;
    }

    let max_change = s_new
        .iter()
        .zip(state.s_hat.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let next = AmpState {
        v_hat_prev: v_new.clone(),
        v_hat: v_new,
        s_hat: s_new,
        sigma_v,
        sigma_s_sum,
        a_v,
        a_s,
        iteration: state.iteration + 1,
    };
    Ok((next, max_change))
}

/// Run the iteration to convergence or `max_iters`.
pub fn amp_iterate(instance: &GmmInstance, config: &AmpConfig) -> Result<AmpResult> {
    config.validate()?;
    let params = instance.params;
    params.validate()?;
    let rho = params.effective_rho();
    let scaled;
    let x = if params.delta == 1.0 {
        instance.x.view()
    } else {
        scaled = instance.x.mapv(|v| v / params.delta.sqrt());
        scaled.view()
    };

    let mut state = initial_state(instance, config)?;
    let mut trajectory = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iters {
        let (next, max_change) = match step(x, &state, rho, config) {
            Ok(v) => v,
            Err(Error::Singular) => {
                return Err(Error::Diverged {
                    iteration: state.iteration + 1,
                    last_state: Some(Box::new(state)),
                })
            }
            Err(e) => return Err(e),
        };
        if !next.is_finite() || !max_change.is_finite() {
            return Err(Error::Diverged {
                iteration: next.iteration,
                last_state: Some(Box::new(state)),
            });
        }
        state = next;
        if config.record_trajectory {
            let report = overlap_score(&hard_assign(state.s_hat.view())?, &instance.labels)?;
            trajectory.push(TrajectoryPoint {
                iteration: state.iteration,
                overlap: report.overlap,
                max_change,
            });
        }
        if max_change < config.tol {
            converged = true;
            break;
        }
    }
    let overlap_report = overlap_score(&hard_assign(state.s_hat.view())?, &instance.labels)?;
    Ok(AmpResult {
        s_hat: state.s_hat.clone(),
        v_hat: state.v_hat.clone(),
        iterations: state.iteration,
        converged,
        overlap_report,
        trajectory,
        state,
    })
}

/// Columns of `est` moved so that estimated cluster `k` sits in column
/// `perm[k]`.
fn align_columns(est: ArrayView2<f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros(est.dim());
    for (k, &l) in perm.iter().enumerate() {
        out.slice_mut(s![.., l]).assign(&est.column(k));
    }
    out
}

/// Overlap matrices of an iterate with the ground truth, after relabeling the
/// estimate by the best permutation of its hard assignment.
pub fn empirical_order_params(state: &AmpState, instance: &GmmInstance) -> Result<OrderParams> {
    let (m, r) = state.s_hat.dim();
    let n = state.v_hat.nrows();
    if m != instance.params.m
        || n != instance.params.n
        || r != instance.params.r
        || state.v_hat.ncols() != r
    {
        return Err(Error::Shape("state does not match the instance".into()));
    }
    let report = overlap_score(&hard_assign(state.s_hat.view())?, &instance.labels)?;
    let s = align_columns(state.s_hat.view(), &report.permutation);
    let v = align_columns(state.v_hat.view(), &report.permutation);
    let mut m_s = Array2::zeros((r, r));
    for (row, &t) in s.rows().into_iter().zip(instance.labels.as_slice()) {
        let mut col = m_s.column_mut(t);
        col += &row;
    }
    m_s /= m as f64;
    let m_v = v.t().dot(&instance.v0) / n as f64;
    Ok(OrderParams { m_v, m_s })
}
