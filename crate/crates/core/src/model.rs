//! Spiked Gaussian-mixture instances and assignment scoring.
//!
//! Data are generated as `X = sqrt(rho/n) V0 S0^T + U` with `V0` an `n x r`
//! matrix of standard normal centers, `S0` the one-hot label matrix and `U`
//! i.i.d. `N(0, delta)` noise. Columns of `X` are data points.

use ndarray::{Array2, ArrayView2, ShapeBuilder};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::best_permutation;
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Row sums of a stochastic matrix must be within this of 1.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-6;

fn default_delta() -> f64 {
    1.0
}

/// Problem dimensions and signal parameters. `alpha = m / n` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Ambient dimension.
    pub n: usize,
    /// Number of data points.
    pub m: usize,
    /// Number of clusters.
    pub r: usize,
    /// Signal-to-noise ratio.
    pub rho: f64,
    /// Noise variance.
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(n: usize, m: usize, r: usize, rho: f64, seed: u64) -> Self {
        Self {
            n,
            m,
            r,
            rho,
            delta: 1.0,
            seed,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Signal strength after rescaling the noise variance to one.
    pub fn effective_rho(&self) -> f64 {
        self.rho / self.delta
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 clusters, got r = {}",
                self.r
            )));
        }
        if self.n < self.r {
            return Err(Error::invalid(format!(
                "dimension n = {} is below r = {}",
                self.n, self.r
            )));
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be positive"));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::invalid(format!(
                "rho must be finite and nonnegative, got {}",
                self.rho
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::invalid(format!(
                "delta must be finite and positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Cluster labels in `0..r`. Files store them one-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    labels: Vec<usize>,
    r: usize,
}

impl Labels {
    pub fn new(labels: Vec<usize>, r: usize) -> Result<Self> {
        if let Some((j, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= r) {
            return Err(Error::invalid(format!(
                "label {l} at position {j} is outside 0..{r}"
            )));
        }
        Ok(Self { labels, r })
    }

    pub fn from_one_hot(s: ArrayView2<f64>) -> Result<Self> {
        let r = s.ncols();
        let mut labels = Vec::with_capacity(s.nrows());
        for (row, values) in s.outer_iter().enumerate() {
            let mut hot = None;
            for (k, &v) in values.iter().enumerate() {
                if v == 1.0 && hot.is_none() {
                    hot = Some(k);
                } else if v != 0.0 {
                    return Err(Error::NotOneHot { row });
                }
            }
            labels.push(hot.ok_or(Error::NotOneHot { row })?);
        }
        Ok(Self { labels, r })
    }

    pub fn one_hot(&self) -> Array2<f64> {
        let mut s = Array2::zeros((self.labels.len(), self.r));
        for (j, &l) in self.labels.iter().enumerate() {
            s[[j, l]] = 1.0;
        }
        s
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    /// Relabel through `perm`: label `k` becomes `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            labels: self.labels.iter().map(|&l| perm[l]).collect(),
            r: self.r,
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.r];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Generated data matrix plus its ground truth.
#[derive(Debug, Clone)]
pub struct GmmInstance {
    pub params: ModelParams,
    /// `n x m`, one data point per column.
    pub x: Array2<f64>,
    /// `n x r`, one center per column.
    pub v0: Array2<f64>,
    pub labels: Labels,
}

impl GmmInstance {
    pub fn new(
        params: ModelParams,
        x: Array2<f64>,
        v0: Array2<f64>,
        labels: Labels,
    ) -> Result<Self> {
        params.validate()?;
        let ModelParams { n, m, r, .. } = params;
        if x.dim() != (n, m) {
            return Err(Error::Shape(format!(
                "X is {:?}, expected ({n}, {m})",
                x.dim()
            )));
        }
        if v0.dim() != (n, r) {
            return Err(Error::Shape(format!(
                "V0 is {:?}, expected ({n}, {r})",
                v0.dim()
            )));
        }
        if labels.len() != m || labels.r() != r {
            return Err(Error::Shape(format!(
                "labels have length {} over {} clusters, expected {m} over {r}",
                labels.len(),
                labels.r()
            )));
        }
        Ok(Self {
            params,
            x,
            v0,
            labels,
        })
    }

    /// One-hot `m x r` assignment matrix.
    pub fn s0(&self) -> Array2<f64> {
        self.labels.one_hot()
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha()
    }
}

/// Draw an instance. Centers, labels and the noise of each column come from
/// separate sub-streams of `params.seed`, so the result does not depend on
/// the number of threads.
pub fn generate_instance(params: ModelParams) -> Result<GmmInstance> {
    params.validate()?;
    let ModelParams {
        n,
        m,
        r,
        rho,
        delta,
        seed,
    } = params;

    let mut rng = substream(seed, Stream::Centers, 0);
    let v0 = Array2::from_shape_simple_fn((n, r), || StandardNormal.sample(&mut rng));

    let mut rng = substream(seed, Stream::Labels, 0);
    let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..r)).collect();

    let scale = (rho / n as f64).sqrt();
    let noise_sd = delta.sqrt();
    let mut data = vec![0.0; n * m];
    data.par_chunks_mut(n).enumerate().for_each(|(j, column)| {
        let mut rng = substream(seed, Stream::Noise, j as u64);
        let center = v0.column(labels[j]);
        for (x, &v) in column.iter_mut().zip(center.iter()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = scale * v + noise_sd * z;
        }
    });
    let x = Array2::from_shape_vec((n, m).f(), data).expect("buffer matches shape");
    GmmInstance::new(params, x, v0, Labels::new(labels, r)?)
}

/// Agreement between an estimated and a true assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// Fraction of points assigned to their true cluster under the best
    /// relabeling.
    pub error_rate: f64,
    /// `(error_rate - 1/r) / (1 - 1/r)`: 0 is chance, 1 is perfect.
    pub overlap: f64,
    /// `permutation[k]` is the true label matched to estimated label `k`.
    pub permutation: Vec<usize>,
}

/// Score `estimate` against `truth`, maximizing over the `r!` relabelings of
/// the estimate.
pub fn overlap_score(estimate: &Labels, truth: &Labels) -> Result<OverlapReport> {
    if estimate.len() != truth.len() || estimate.r() != truth.r() {
        return Err(Error::Shape(format!(
            "estimate has {} points over {} clusters, truth has {} over {}",
            estimate.len(),
            estimate.r(),
            truth.len(),
            truth.r()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("cannot score an empty assignment"));
    }
    let r = truth.r();
    let mut confusion = vec![vec![0u64; r]; r];
    for (&k, &l) in estimate.as_slice().iter().zip(truth.as_slice()) {
        confusion[k][l] += 1;
    }
    let (matched, permutation) = best_permutation(&confusion);
    let error_rate = matched as f64 / truth.len() as f64;
    let chance = 1.0 / r as f64;
    Ok(OverlapReport {
        error_rate,
        overlap: (error_rate - chance) / (1.0 - chance),
        permutation,
    })
}

/// [`overlap_score`] on one-hot `m x r` matrices.
pub fn overlap_score_one_hot(s_hat: ArrayView2<f64>, s0: ArrayView2<f64>) -> Result<OverlapReport> {
    if s_hat.dim() != s0.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", s_hat.dim(), s0.dim())));
    }
    overlap_score(&Labels::from_one_hot(s_hat)?, &Labels::from_one_hot(s0)?)
}

/// Row-wise argmax of a row-stochastic matrix; ties go to the lowest index.
pub fn hard_assign(probabilities: ArrayView2<f64>) -> Result<Labels> {
    let r = probabilities.ncols();
    let mut labels = Vec::with_capacity(probabilities.nrows());
    for (row, p) in probabilities.outer_iter().enumerate() {
        let sum: f64 = p.sum();
        if !((sum - 1.0).abs() <= STOCHASTIC_TOLERANCE)
            || p.iter().any(|&v| v < -STOCHASTIC_TOLERANCE)
        {
            return Err(Error::NotStochastic { row, sum });
        }
        let mut best = 0;
        for k in 1..r {
            if p[k] > p[best] {
                best = k;
            }
        }
        labels.push(best);
    }
    Labels::new(labels, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn rejects_invalid_params() {
        assert!(generate_instance(ModelParams::new(1, 4, 2, 1.0, 0)).is_err());
        assert!(generate_instance(ModelParams::new(4, 0, 2, 1.0, 0)).is_err());
        assert!(generate_instance(ModelParams::new(4, 4, 1, 1.0, 0)).is_err());
        assert!(generate_instance(ModelParams::new(4, 4, 2, -1.0, 0)).is_err());
        assert!(generate_instance(ModelParams::new(4, 4, 2, 1.0, 0).with_delta(0.0)).is_err());
    }

    #[test]
    fn fixed_seed_reproduces_bitwise() {
        let p = ModelParams::new(30, 50, 3, 2.5, 42);
        let a = generate_instance(p).unwrap();
        let b = generate_instance(p).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.v0, b.v0);
        assert_eq!(a.labels, b.labels);
        let c = generate_instance(ModelParams { seed: 43, ..p }).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn zero_signal_is_pure_noise() {
        let inst = generate_instance(ModelParams::new(4, 4, 2, 0.0, 5)).unwrap();
        // with rho = 0, X equals the noise draws exactly
        let mut rng = substream(5, Stream::Noise, 2);
        let z: f64 = StandardNormal.sample(&mut rng);
        assert_eq!(inst.x[[0, 2]], z);
    }

    #[test]
    fn s0_rows_are_one_hot() {
        let inst = generate_instance(ModelParams::new(10, 40, 4, 1.0, 1)).unwrap();
        let s0 = inst.s0();
        for row in s0.outer_iter() {
            assert_eq!(row.sum(), 1.0);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
        }
        assert_eq!(Labels::from_one_hot(s0.view()).unwrap(), inst.labels);
    }

    #[test]
    fn overlap_of_identical_assignment_is_one() {
        let t = Labels::new(vec![0, 1, 1, 0, 2], 3).unwrap();
        let rep = overlap_score(&t, &t).unwrap();
        assert_eq!(rep.error_rate, 1.0);
        assert_eq!(rep.overlap, 1.0);
        assert_eq!(rep.permutation, vec![0, 1, 2]);
    }

    #[test]
    fn three_of_four_correct() {
        let truth = Labels::new(vec![0, 0, 1, 1], 2).unwrap();
        let est = Labels::new(vec![1, 1, 0, 1], 2).unwrap();
        let rep = overlap_score(&est, &truth).unwrap();
        assert_abs_diff_eq!(rep.error_rate, 0.75);
        assert_abs_diff_eq!(rep.overlap, 0.5);
        assert_eq!(rep.permutation, vec![1, 0]);
    }

    #[test]
    fn overlap_rejects_bad_shapes() {
        let a = Labels::new(vec![0, 1], 2).unwrap();
        let b = Labels::new(vec![0, 1, 1], 2).unwrap();
        assert!(overlap_score(&a, &b).is_err());
        let not_hot = array![[1.0, 1.0], [0.0, 1.0]];
        let hot = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            overlap_score_one_hot(not_hot.view(), hot.view()),
            Err(Error::NotOneHot { row: 0 })
        ));
        assert!(overlap_score_one_hot(hot.view(), array![[1.0, 0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn hard_assign_argmax_and_ties() {
        let p = array![[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]];
        assert_eq!(hard_assign(p.view()).unwrap().as_slice(), &[1, 0, 0]);
        let bad = array![[0.2, 0.7]];
        assert!(matches!(
            hard_assign(bad.view()),
            Err(Error::NotStochastic { row: 0, .. })
        ));
    }
}
