//! State evolution: the matrix recursion for the overlaps, its scalar
//! reduction through `M_r`, and the Bethe free energy.
//!
//! `M_r(x)` is estimated by Monte Carlo. Every call with the same
//! `(r, samples, seed)` reuses the same Gaussian draws whatever `x` is
//! (common random numbers), so the estimated curve is smooth in `x` and the
//! scalar recursion is a deterministic smooth map. Each draw is scored with
//! all `r` coordinates taking turns as the signal coordinate, and draws come
//! in antithetic pairs `u, -u`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::denoisers::{assignment_log_z, assignment_probabilities, CenterDenoiser};
use crate::error::{invalid, Error, Result};
use crate::linalg::{psd_sqrt, SpdFactor};
use crate::quad::adaptive_simpson;
use crate::rng::{substream, Stream};

/// Default Monte Carlo sample count per `M_r` evaluation.
pub const DEFAULT_SAMPLES: usize = 200_000;
/// Default starting overlap for the uninformative initialization.
pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Default stopping tolerance on `b_s`.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration cap for the scalar recursion.
pub const DEFAULT_MAX_ITERS: usize = 20_000;

const PAIRS_PER_CHUNK: usize = 1024;
const SAMPLES_PER_CHUNK: usize = 2048;

/// Monte Carlo estimate of `M_r(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalMEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub x: f64,
    pub r: usize,
}

/// Running mean and variance, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        self.n += 1.0;
        let d = y - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (y - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n / n,
            m2: self.m2 + other.m2 + d * d * self.n * other.n / n,
        }
    }

    fn std_error(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Average over `k` of the probability that coordinate `k` wins when it
/// carries the signal, for one Gaussian draw `u`.
fn symmetric_draw(u: &[f64], s: f64, shift: f64, z: &mut [f64]) -> f64 {
    let r = u.len();
    let mut max = f64::NEG_INFINITY;
    let mut arg = 0;
    for (k, (zk, &uk)) in z.iter_mut().zip(u).enumerate() {
        *zk = s * uk;
        if *zk > max {
            max = *zk;
            arg = k;
        }
    }
    let mut total = 0.0;
    let mut rest_of_max = 0.0;
    for (k, zk) in z.iter_mut().enumerate() {
        *zk -= max;
        let e = zk.exp();
        total += e;
        if k != arg {
            rest_of_max += e;
        }
    }
    let c = (-shift).exp();
    let mut acc = 0.0;
    for (k, &zk) in z.iter().enumerate() {
        let e = zk.exp();
        let rest = if k == arg { rest_of_max } else { total - e };
        acc += if e > 1e-200 && c > 1e-200 {
            e / (e + c * rest)
        } else {
            1.0 / (1.0 + (-shift + rest.ln() - zk).exp())
        };
    }
    acc / r as f64
}

fn cal_m_uncached(x: f64, r: usize, samples: usize) -> impl Fn(u64) -> CalMEstimate {
    move |seed| {
        if x == 0.0 {
            return CalMEstimate {
                value: 0.0,
                std_error: 0.0,
                samples,
                x,
                r,
            };
        }
        let pairs = (samples / 2).max(1);
        let chunks = pairs.div_ceil(PAIRS_PER_CHUNK);
        let s = (x / r as f64).sqrt();
        let shift = x / r as f64;
        let parts: Vec<Moments> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = substream(seed, Stream::CalM, c as u64);
                let count = PAIRS_PER_CHUNK.min(pairs - c * PAIRS_PER_CHUNK);
                let mut u = vec![0.0; r];
                let mut neg = vec![0.0; r];
                let mut z = vec![0.0; r];
                let mut mom = Moments::default();
                for _ in 0..count {
                    for (uk, nk) in u.iter_mut().zip(neg.iter_mut()) {
                        *uk = rng.sample(StandardNormal);
                        *nk = -*uk;
                    }
                    let y = 0.5
                        * (symmetric_draw(&u, s, shift, &mut z)
                            + symmetric_draw(&neg, s, shift, &mut z));
                    mom.push(y);
                }
                mom
            })
            .collect();
        let mom = parts.into_iter().fold(Moments::default(), Moments::merge);
        let rf = r as f64;
        let value = ((rf * mom.mean - 1.0) / (rf - 1.0)).clamp(0.0, 1.0);
        let std_error = rf / (rf - 1.0) * mom.std_error();
        CalMEstimate {
            value,
            std_error,
            samples: 2 * pairs,
            x,
            r,
        }
    }
}

type CacheKey = (u64, usize, usize, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, CalMEstimate>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, CalMEstimate>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Monte Carlo estimate of `M_r(x)`, memoized on `(x, r, samples, seed)`.
pub fn cal_m(x: f64, r: usize, samples: usize, seed: u64) -> Result<CalMEstimate> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(invalid(format!("M_r needs a finite x >= 0, got {x}")));
    }
    if r < 2 {
        return Err(invalid(format!("r must be at least 2, got {r}")));
    }
    if samples < 2 {
        return Err(invalid("M_r needs at least 2 samples"));
    }
    let key = (x.to_bits(), r, samples, seed);
    if let Some(hit) = cache().lock().expect("cache lock").get(&key) {
        return Ok(*hit);
    }
    let est = cal_m_uncached(x, r, samples)(seed);
    cache().lock().expect("cache lock").insert(key, est);
    Ok(est)
}

/// `M_r` with fixed Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CalM {
    pub r: usize,
    pub samples: usize,
    pub seed: u64,
}

impl CalM {
    pub fn new(r: usize, samples: usize, seed: u64) -> Result<Self> {
        if r < 2 {
            return Err(invalid(format!("r must be at least 2, got {r}")));
        }
        if samples < 2 {
            return Err(invalid("M_r needs at least 2 samples"));
        }
        Ok(Self { r, samples, seed })
    }

    pub fn eval(&self, x: f64) -> Result<CalMEstimate> {
        cal_m(x, self.r, self.samples, self.seed)
    }
}

/// Overlap matrices between estimators and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderParams {
    pub m_v: Array2<f64>,
    pub m_s: Array2<f64>,
}

fn diag_offdiag_means(a: ArrayView2<f64>) -> (f64, f64) {
    let r = a.nrows() as f64;
    let trace: f64 = a.diag().sum();
    let off = if r > 1.0 {
        (a.sum() - trace) / (r * (r - 1.0))
    } else {
        0.0
    };
    (trace / r, off)
}

impl OrderParams {
    pub fn zeros(r: usize) -> Self {
        Self {
            m_v: Array2::zeros((r, r)),
            m_s: Array2::zeros((r, r)),
        }
    }

    pub fn r(&self) -> usize {
        self.m_s.nrows()
    }

    /// `b_s` of the closest ansatz form, `r (mean diagonal - mean off-diagonal)`.
    pub fn b_s(&self) -> f64 {
        let (d, o) = diag_offdiag_means(self.m_s.view());
        self.r() as f64 * (d - o)
    }

    pub fn b_v(&self) -> f64 {
        let (d, o) = diag_offdiag_means(self.m_v.view());
        d - o
    }

    pub fn b_vj(&self) -> f64 {
        let (_, o) = diag_offdiag_means(self.m_v.view());
        self.r() as f64 * o
    }

    pub fn scalar(&self) -> ScalarOrder {
        ScalarOrder {
            b_s: self.b_s(),
            b_v: self.b_v(),
            b_vj: self.b_vj(),
        }
    }

    /// Frobenius distances of `(M_v, M_s)` from the ansatz form with the
    /// scalars read off by [`OrderParams::scalar`].
    pub fn ansatz_residual(&self) -> (f64, f64) {
        let fit = self.scalar().to_order_params(self.r());
        let dv = (&self.m_v - &fit.m_v).mapv(|d| d * d).sum().sqrt();
        let ds = (&self.m_s - &fit.m_s).mapv(|d| d * d).sum().sqrt();
        (dv, ds)
    }
}

/// Scalar order parameters of the ansatz
/// `M_s = (b_s/r) I + (1 - b_s) J/r^2`, `M_v = b_v I + b_vJ J/r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarOrder {
    pub b_s: f64,
    pub b_v: f64,
    pub b_vj: f64,
}

impl ScalarOrder {
    /// The `(b_v, b_vJ)` produced from `b_s` by one center half-step.
    pub fn from_b_s(b_s: f64, rho: f64, alpha: f64, r: usize) -> Self {
        let b_v = b_v_of(b_s, rho, alpha, r);
        let full = alpha * rho / r as f64;
        Self {
            b_s,
            b_v,
            b_vj: full / (1.0 + full) - b_v,
        }
    }

    pub fn to_order_params(&self, r: usize) -> OrderParams {
        let rf = r as f64;
        let ones = Array2::<f64>::ones((r, r));
        let eye = Array2::<f64>::eye(r);
        OrderParams {
            m_v: &eye * self.b_v + &ones * (self.b_vj / rf),
            m_s: &eye * (self.b_s / rf) + &ones * ((1.0 - self.b_s) / (rf * rf)),
        }
    }
}

/// `b_v = b_s rho / (r/alpha + b_s rho)`.
pub fn b_v_of(b_s: f64, rho: f64, alpha: f64, r: usize) -> f64 {
    let num = b_s * rho;
    if num == 0.0 {
        return 0.0;
    }
    num / (r as f64 / alpha + num)
}

/// Argument of `M_r` in the scalar recursion, `b_s rho^2 / (1/alpha + rho b_s / r)`.
pub fn scalar_argument(b_s: f64, rho: f64, alpha: f64, r: usize) -> f64 {
    r as f64 * rho * b_v_of(b_s, rho, alpha, r)
}

fn check_se_inputs(rho: f64, alpha: f64) -> Result<()> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(invalid(format!("rho must be finite and >= 0, got {rho}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid(format!(
            "alpha must be finite and > 0, got {alpha}"
        )));
    }
    Ok(())
}

/// One step of the scalar recursion `b_s -> M_r(x(b_s))`.
pub fn se_scalar_step(b_s: f64, rho: f64, alpha: f64, calm: &CalM) -> Result<CalMEstimate> {
    check_se_inputs(rho, alpha)?;
    if !(-1e-12..=1.0 + 1e-12).contains(&b_s) {
        return Err(invalid(format!("b_s must lie in [0, 1], got {b_s}")));
    }
    calm.eval(scalar_argument(b_s.clamp(0.0, 1.0), rho, alpha, calm.r))
}

/// Where the scalar recursion starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeInit {
    Uninformative { epsilon: f64 },
    Informative,
}

impl SeInit {
    pub fn uninformative() -> Self {
        SeInit::Uninformative {
            epsilon: DEFAULT_EPSILON,
        }
    }

    fn start(&self) -> f64 {
        match *self {
            SeInit::Uninformative { epsilon } => epsilon,
            SeInit::Informative => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeFixedPoint {
    pub b_star: f64,
    pub b_v: f64,
    /// Monte Carlo standard error of the last `M_r` evaluation.
    pub std_error: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Iterate the scalar recursion until `|b^{t+1} - b^t| < tol`.
///
/// Common random numbers make the estimated map deterministic, so the
/// stopping rule does not need to absorb Monte Carlo jitter.
pub fn se_fixed_point(
    init: SeInit,
    rho: f64,
    alpha: f64,
    r: usize,
    config: &SeConfig,
) -> Result<SeFixedPoint> {
    check_se_inputs(rho, alpha)?;
    if !(config.tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    if let SeInit::Uninformative { epsilon } = init {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
    }
    let calm = CalM::new(r, config.samples, config.seed)?;
    let mut b = init.start();
    let mut history = vec![b];
    let mut last_change = f64::INFINITY;
    for it in 1..=config.max_iters {
        let est = se_scalar_step(b, rho, alpha, &calm)?;
        last_change = (est.value - b).abs();
        b = est.value;
        history.push(b);
        if last_change < config.tol {
            return Ok(SeFixedPoint {
                b_star: b,
                b_v: b_v_of(b, rho, alpha, r),
                std_error: est.std_error,
                iterations: it,
                history,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: config.max_iters,
        last_change,
        history,
    })
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Probability that `margin + W_1` exceeds `max_{k >= 2} W_k` for `r`
/// independent standard normals `W`.
pub fn argmax_accuracy(margin: f64, r: usize) -> f64 {
    assert!(r >= 2, "argmax_accuracy needs r >= 2");
    if margin == 0.0 {
        return 1.0 / r as f64;
    }
    let rm1 = (r - 1) as f64;
    let integrand = |u: f64| {
        let tail = std_normal_cdf(margin - u);
        tail * rm1 * std_normal_pdf(u) * std_normal_cdf(u).powi(r as i32 - 2)
    };
    let hi = 12.0f64.max(margin + 12.0);
    adaptive_simpson(integrand, -12.0, hi, 1e-13).clamp(0.0, 1.0)
}

/// Hard-assignment (MaxProb) overlap implied by a scalar fixed point: the
/// effective field of the true cluster exceeds the others by `sqrt(x / r)`
/// noise standard deviations.
pub fn predicted_maxprob_overlap(b_s: f64, rho: f64, alpha: f64, r: usize) -> f64 {
    let x = scalar_argument(b_s, rho, alpha, r);
    let acc = argmax_accuracy((x / r as f64).sqrt(), r);
    let chance = 1.0 / r as f64;
    (acc - chance) / (1.0 - chance)
}

/// `int_0^M u rho^2 / (1/alpha + u rho / r) du` in closed form.
pub fn tilted_integral(m: f64, rho: f64, alpha: f64, r: usize) -> f64 {
    let k = 1.0 / alpha;
    let c = rho / r as f64;
    let t = c * m / k;
    if t < 1e-4 {
        rho * rho * (m * m / (2.0 * k) - c * m * m * m / (3.0 * k * k))
    } else {
        rho * rho * (m / c - k / (c * c) * t.ln_1p())
    }
}

/// Free-energy difference `phi_B(0) - phi_B(M_r(x))` at signal `rho` from its
/// ingredients `m_x = M_r(x)` and `integral_m = int_0^x M_r`.
pub fn free_energy_gap_from_parts(
    x: f64,
    m_x: f64,
    integral_m: f64,
    rho: f64,
    alpha: f64,
    r: usize,
) -> f64 {
    let rf = r as f64;
    alpha * (rf - 1.0) / (2.0 * rf * rf)
        * (integral_m + tilted_integral(m_x, rho, alpha, r) - x * m_x)
}

/// Panels of the composite Simpson rule for `int_0^x M_r`.
pub const GAP_PANELS: usize = 64;

/// `phi_B(0) - phi_B(M_r(x))` at signal `rho`, with `int_0^x M_r` by
/// composite Simpson over memoized `M_r` evaluations.
pub fn free_energy_gap(x: f64, rho: f64, alpha: f64, calm: &CalM) -> Result<f64> {
    check_se_inputs(rho, alpha)?;
    if !(x >= 0.0) {
        return Err(invalid(format!("x must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let h = x / (2 * GAP_PANELS) as f64;
    let mut integral = 0.0;
    for i in 0..=2 * GAP_PANELS {
        let w = if i == 0 || i == 2 * GAP_PANELS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        integral += w * calm.eval(i as f64 * h)?.value;
    }
    integral *= h / 3.0;
    let m_x = calm.eval(x)?.value;
    Ok(free_energy_gap_from_parts(
        x, m_x, integral, rho, alpha, calm.r,
    ))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McValue {
    pub value: f64,
    pub std_error: f64,
}

/// One sequential sweep of the matrix recursion: `M_v' = F_v(M_s)` and then
/// `M_s' = F_s(M_v')`, so that the `b_s` of the output is one scalar step
/// away from the `b_s` of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeStep {
    pub order: OrderParams,
    pub std_error_v: Array2<f64>,
    pub std_error_s: Array2<f64>,
}

fn check_order(order: &OrderParams) -> Result<usize> {
    let r = order.m_s.nrows();
    if order.m_s.dim() != (r, r) || order.m_v.dim() != (r, r) || r < 2 {
        return Err(Error::Shape(format!(
            "order parameters must be square r x r with r >= 2, got {:?} and {:?}",
            order.m_v.dim(),
            order.m_s.dim()
        )));
    }
    Ok(r)
}

/// Per-entry sums for r x r Monte Carlo averages.
struct MatrixMoments {
    sum: Array2<f64>,
    sumsq: Array2<f64>,
    n: f64,
}

impl MatrixMoments {
    fn new(r: usize) -> Self {
        Self {
            sum: Array2::zeros((r, r)),
            sumsq: Array2::zeros((r, r)),
            n: 0.0,
        }
    }

    fn push(&mut self, y: &Array2<f64>) {
        self.sum += y;
        self.sumsq.zip_mut_with(y, |s, &v| *s += v * v);
        self.n += 1.0;
    }

    fn merge(mut self, other: MatrixMoments) -> Self {
        self.sum += &other.sum;
        self.sumsq += &other.sumsq;
        self.n += other.n;
        self
    }

    fn finish(self) -> (Array2<f64>, Array2<f64>) {
        let n = self.n;
        let mean = &self.sum / n;
        let mut se = &self.sumsq / n;
        se.zip_mut_with(&mean, |s, &m| {
            *s = if n > 1.0 {
                ((*s - m * m).max(0.0) / (n - 1.0)).sqrt()
            } else {
                0.0
            }
        });
        (mean, se)
    }
}

fn chunked<T: Send>(samples: usize, f: impl Fn(usize, usize) -> T + Sync) -> Vec<T> {
    let chunks = samples.div_ceil(SAMPLES_PER_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c, SAMPLES_PER_CHUNK.min(samples - c * SAMPLES_PER_CHUNK)))
        .collect()
}

fn normal_vec(rng: &mut impl Rng, r: usize) -> Array1<f64> {
    Array1::from_iter((0..r).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `E[f_v(A, A v0 + sqrt(A) W) v0^T]` with `A = alpha rho M_s`, estimated
/// as `E[f_v f_v^T]`: the two agree for this channel and the latter is
/// positive semidefinite sample by sample.
fn center_half(
    m_s: ArrayView2<f64>,
    rho: f64,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let r = m_s.nrows();
    let a = m_s.mapv(|v| alpha * rho * v);
    let root = psd_sqrt(a.view())?;
    let den = CenterDenoiser::new(a.view())?;
    let parts = chunked(samples, |c, count| {
        let mut rng = substream(seed, Stream::MatrixSe, 2 * c as u64);
        let mut mom = MatrixMoments::new(r);
        for _ in 0..count {
            let v0 = normal_vec(&mut rng, r);
            let w = normal_vec(&mut rng, r);
            let b = a.dot(&v0) + root.dot(&w);
            let mean = den.mean(b.view());
            let outer = Array2::from_shape_fn((r, r), |(k, l)| mean[k] * mean[l]);
            mom.push(&outer);
        }
        mom
    });
    Ok(parts
        .into_iter()
        .reduce(MatrixMoments::merge)
        .expect("at least one chunk")
        .finish())
}

/// `E[f_s(rho M_v, rho M_v s0 + sqrt(rho M_v) W) s0^T]`, exact over `s0`.
fn assignment_half(
    m_v: ArrayView2<f64>,
    rho: f64,
    samples: usize,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let r = m_v.nrows();
    let a = m_v.mapv(|v| rho * v);
    let root = psd_sqrt(a.view())?;
    let diag = a.diag().to_vec();
    let rf = r as f64;
    let parts = chunked(samples, |c, count| {
        let mut rng = substream(seed, Stream::MatrixSe, 2 * c as u64 + 1);
        let mut mom = MatrixMoments::new(r);
        let mut p = vec![0.0; r];
        let mut term = Array2::zeros((r, r));
        for _ in 0..count {
            let noise = root.dot(&normal_vec(&mut rng, r));
            for t in 0..r {
                let b: Vec<f64> = (0..r).map(|k| a[[k, t]] + noise[k]).collect();
                assignment_probabilities(&b, &diag, &mut p);
                for k in 0..r {
                    term[[k, t]] = p[k] / rf;
                }
            }
            mom.push(&term);
        }
        mom
    });
    Ok(parts
        .into_iter()
        .reduce(MatrixMoments::merge)
        .expect("at least one chunk")
        .finish())
}

/// One sweep of the matrix recursion by Monte Carlo.
pub fn se_matrix_step(
    order: &OrderParams,
    rho: f64,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<MatrixSeStep> {
    check_se_inputs(rho, alpha)?;
    check_order(order)?;
    if samples < 2 {
        return Err(invalid("need at least 2 samples"));
    }
    let (m_v, std_error_v) = center_half(order.m_s.view(), rho, alpha, samples, seed)?;
    let (m_s, std_error_s) = assignment_half(m_v.view(), rho, samples, seed)?;
    Ok(MatrixSeStep {
        order: OrderParams { m_v, m_s },
        std_error_v,
        std_error_s,
    })
}

/// `E log Z_v(A, A v0 + sqrt(A) W) = Tr(A)/2 - log det(I + A)/2` with
/// `A = alpha rho M_s`.
pub fn center_log_z_expectation(m_s: ArrayView2<f64>, rho: f64, alpha: f64) -> Result<f64> {
    let r = m_s.nrows();
    let a = m_s.mapv(|v| alpha * rho * v);
    psd_sqrt(a.view())?;
    let shifted = &a + &Array2::<f64>::eye(r);
    let f = SpdFactor::new(shifted.view())?;
    Ok(0.5 * a.diag().sum() - 0.5 * f.log_det())
}

/// Monte Carlo estimate of the Bethe free energy at `(M_v, M_s)`.
///
/// `log Z_s` is normalized to vanish at zero fields, so `phi_B(0, 0) = 0`.
pub fn bethe_free_energy(
    order: &OrderParams,
    rho: f64,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<McValue> {
    check_se_inputs(rho, alpha)?;
    let r = check_order(order)?;
    if samples < 2 {
        return Err(invalid("need at least 2 samples"));
    }
    let a_v = order.m_s.mapv(|v| alpha * rho * v);
    let root_v = psd_sqrt(a_v.view())?;
    let den = CenterDenoiser::new(a_v.view())?;
    let a_s = order.m_v.mapv(|v| rho * v);
    let root_s = psd_sqrt(a_s.view())?;
    let diag = a_s.diag().to_vec();
    let rf = r as f64;
    let parts = chunked(samples, |c, count| {
        let mut rng = substream(seed, Stream::Bethe, c as u64);
        let mut mom = Moments::default();
        for _ in 0..count {
            let v0 = normal_vec(&mut rng, r);
            let w = normal_vec(&mut rng, r);
            let b = a_v.dot(&v0) + root_v.dot(&w);
            let lz_v = den.log_z(b.view());
            let noise = root_s.dot(&normal_vec(&mut rng, r));
            let mut lz_s = 0.0;
            for t in 0..r {
                let b: Vec<f64> = (0..r).map(|k| a_s[[k, t]] + noise[k]).collect();
                lz_s += assignment_log_z(&b, &diag);
            }
            mom.push(-lz_v - alpha * lz_s / rf);
        }
        mom
    });
    let mom = parts.into_iter().fold(Moments::default(), Moments::merge);
    let trace: f64 = order.m_v.dot(&order.m_s.t()).diag().sum();
    Ok(McValue {
        value: 0.5 * alpha * rho * trace + mom.mean,
        std_error: mom.std_error(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cal_m_zero_and_bounds() {
        for r in [2, 5, 20] {
            let e = cal_m(0.0, r, 1000, 3).unwrap();
            assert_eq!(e.value, 0.0);
            assert_eq!(e.std_error, 0.0);
        }
        assert!(cal_m(-1.0, 3, 100, 0).is_err());
        assert!(cal_m(1.0, 1, 100, 0).is_err());
        let big = cal_m(1e5, 10, 1000, 0).unwrap();
        assert!(big.value > 0.999 && big.value <= 1.0);
    }

    #[test]
    fn cal_m_is_memoized_and_reproducible() {
        let a = cal_m(3.7, 4, 4000, 9).unwrap();
        let b = cal_m_uncached(3.7, 4, 4000)(9);
        assert_eq!(a, b);
        assert_eq!(cal_m(3.7, 4, 4000, 9).unwrap(), a);
    }

    #[test]
    fn symmetric_draw_handles_underflow() {
        let u = [40.0, -40.0, 0.0];
        let mut z = [0.0; 3];
        let v = symmetric_draw(&u, 30.0, 10.0, &mut z);
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
    }

    #[test]
    fn ansatz_round_trip() {
        let s = ScalarOrder {
            b_s: 0.3,
            b_v: 0.4,
            b_vj: 0.2,
        };
        let o = s.to_order_params(5);
        let back = o.scalar();
        assert_abs_diff_eq!(back.b_s, 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(back.b_v, 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(back.b_vj, 0.2, epsilon = 1e-14);
        let (dv, ds) = o.ansatz_residual();
        assert!(dv < 1e-14 && ds < 1e-14);
    }

    #[test]
    fn scalar_step_trivial_cases() {
        let calm = CalM::new(3, 2000, 1).unwrap();
        assert_eq!(se_scalar_step(0.0, 3.0, 2.0, &calm).unwrap().value, 0.0);
        assert_eq!(se_scalar_step(0.7, 0.0, 2.0, &calm).unwrap().value, 0.0);
        assert!(se_scalar_step(1.5, 1.0, 2.0, &calm).is_err());
    }

    #[test]
    fn argmax_accuracy_two_clusters_closed_form() {
        for mu in [0.1, 0.5, 1.0, 2.3] {
            assert_abs_diff_eq!(
                argmax_accuracy(mu, 2),
                std_normal_cdf(mu / 2f64.sqrt()),
                epsilon = 1e-9
            );
        }
        assert_abs_diff_eq!(argmax_accuracy(0.0, 7), 1.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn tilted_integral_matches_quadrature() {
        for &(m, rho, alpha, r) in &[
            (0.5, 3.0, 2.0, 2),
            (1e-6, 13.0, 2.0, 20),
            (0.9, 50.0, 2.0, 200),
        ] {
            let k = 1.0 / alpha;
            let c = rho / r as f64;
            let q = adaptive_simpson(|u| u * rho * rho / (k + c * u), 0.0, m, 1e-14);
            assert_abs_diff_eq!(
                tilted_integral(m, rho, alpha, r),
                q,
                epsilon = 1e-10 * q.abs().max(1e-12)
            );
        }
    }

    #[test]
    fn bethe_at_zero_is_zero() {
        let v = bethe_free_energy(&OrderParams::zeros(3), 2.0, 2.0, 100, 0).unwrap();
        assert_eq!(v.value, 0.0);
    }
}
