//! Training, validation, and test objectives.
//!
//! Three families live here: synthetic signed Gaussian-mixture density
//! functions (GMM-DF) with cheaply estimated optima, classical benchmark
//! functions in negated (maximization) form, and constraint sets with
//! ReLU-based penalty evaluation. GMM-DF objectives and box/disk penalties
//! also exist as autodiff graph fragments so gradients can flow through
//! them during meta-training.

#![allow(clippy::needless_range_loop)] // indexed loops mirror the linear-algebra notation

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AdError, Graph, NodeId};
use crate::rng as rngutil;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{name} expects dimension {expected}, got {got}")]
    Dimension { name: String, expected: usize, got: usize },
    #[error("covariance entries must be strictly positive")]
    NonPositiveCovariance,
    #[error(transparent)]
    Graph(#[from] AdError),
}

// ---------------------------------------------------------------------------
// GMM density functions
// ---------------------------------------------------------------------------

/// A signed mixture of diagonal Gaussians:
/// `f(x) = sum_i c_i (2 pi)^{-d/2} |S_i|^{-1/2} exp(-0.5 (x-m_i)^T S_i^{-1} (x-m_i))`.
///
/// Weights may be negative, so these functions are non-convex with several
/// local maxima and minima. The estimated optimum is the best value over the
/// component means.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmDf {
    pub d: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub diag_cov: Vec<Vec<f64>>,
    /// Estimated maximum: `max_i f(means[i])`, computed at construction.
    pub y_opt_est: f64,
    /// Half-width of the box the means were sampled from; doubles as the
    /// grid-search domain.
    pub domain_halfwidth: f64,
}

impl GmmDf {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        diag_cov: Vec<Vec<f64>>,
        domain_halfwidth: f64,
    ) -> Result<Self, SynthError> {
        assert!(!means.is_empty() && weights.len() == means.len() && diag_cov.len() == means.len());
        let d = means[0].len();
        if diag_cov.iter().flatten().any(|&v| v <= 0.0) {
            return Err(SynthError::NonPositiveCovariance);
        }
        let mut f = GmmDf { d, weights, means, diag_cov, y_opt_est: 0.0, domain_halfwidth };
        f.y_opt_est = f.means.iter().map(|m| f.eval(m)).fold(f64::NEG_INFINITY, f64::max);
        Ok(f)
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Mean of the component attaining the estimated optimum (ties to the
    /// earliest component).
    pub fn x_opt_est(&self) -> &[f64] {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, m) in self.means.iter().enumerate() {
            let v = self.eval(m);
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        &self.means[best]
    }

    /// Normalizing coefficient of component `i`, including its weight.
    fn coefficient(&self, i: usize) -> f64 {
        let det: f64 = self.diag_cov[i].iter().product();
        self.weights[i] * (2.0 * PI).powf(-(self.d as f64) / 2.0) / det.sqrt()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let mut total = 0.0;
        for i in 0..self.components() {
            let mut quad = 0.0;
            for j in 0..self.d {
                let diff = x[j] - self.means[i][j];
                quad += diff * diff / self.diag_cov[i][j];
            }
            total += self.coefficient(i) * (-0.5 * quad).exp();
        }
        total
    }

    /// Same evaluation as a graph fragment, so gradients reach `x`.
    pub fn eval_graph(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, SynthError> {
        let mut total: Option<NodeId> = None;
        for i in 0..self.components() {
            let mean = g.constant_vec(self.means[i].clone());
            let inv_var = g.constant_vec(self.diag_cov[i].iter().map(|v| 1.0 / v).collect());
            let diff = g.sub(x, mean)?;
            let sq = g.square(diff);
            let weighted = g.mul(sq, inv_var)?;
            let quad = g.sum(weighted);
            let exponent = g.div_scalar(quad, -2.0);
            let gauss = g.exp(exponent);
            let coeff = g.constant_scalar(self.coefficient(i));
            let term = g.mul(gauss, coeff)?;
            total = Some(match total {
                None => term,
                Some(acc) => g.add(acc, term)?,
            });
        }
        Ok(total.expect("at least one component"))
    }
}

/// Sampling recipe for one GMM-DF family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmProfile {
    pub d: usize,
    /// Means are drawn from `U(-mean_halfwidth, mean_halfwidth)^d`.
    pub mean_halfwidth: f64,
    /// Covariance entries from `TruncatedNormal(cov_mean, cov_mean / 5)`,
    /// truncated to positive values.
    pub cov_mean: f64,
    /// Weight draws `Normal(0, weight_sd)`.
    pub weight_sd: f64,
    /// Inclusive range for the component count.
    pub components: (usize, usize),
}

impl GmmProfile {
    pub fn d2() -> Self {
        GmmProfile { d: 2, mean_halfwidth: 2.0, cov_mean: 0.9, weight_sd: 0.2, components: (2, 6) }
    }

    pub fn d6() -> Self {
        GmmProfile { d: 6, mean_halfwidth: 3.0, cov_mean: 3.0, weight_sd: 0.2, components: (2, 6) }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "d2" => Some(Self::d2()),
            "d6" => Some(Self::d6()),
            _ => None,
        }
    }
}

/// Draws one GMM-DF from a profile. The component count is uniform over the
/// profile's range; the estimated optimum comes for free from the means.
pub fn sample_gmm<R: Rng>(rng: &mut R, profile: &GmmProfile) -> GmmDf {
    let (lo, hi) = profile.components;
    let n = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let weights: Vec<f64> =
        (0..n).map(|_| profile.weight_sd * rngutil::standard_normal(rng)).collect();
    let means: Vec<Vec<f64>> = (0..n)
        .map(|_| rngutil::uniform_vec(rng, profile.d, -profile.mean_halfwidth, profile.mean_halfwidth))
        .collect();
    let covs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..profile.d)
                .map(|_| {
                    rngutil::truncated_normal_positive(rng, profile.cov_mean, profile.cov_mean / 5.0)
                })
                .collect()
        })
        .collect();
    GmmDf::new(weights, means, covs, profile.mean_halfwidth)
        .expect("sampled covariances are positive by construction")
}

/// Independent oracle for the estimated optimum: the max of `f` over
/// `n_points` uniform samples of the mean-sampling domain.
pub fn grid_search_yopt<R: Rng>(f: &GmmDf, n_points: usize, rng: &mut R) -> f64 {
    assert!(n_points >= 1);
    // Hoist the normalizing coefficients out of the scan; the arithmetic
    // below otherwise mirrors `eval` exactly so a single-point search
    // matches a direct evaluation to the last bit.
    let coeffs: Vec<f64> = (0..f.components()).map(|i| f.coefficient(i)).collect();
    let w = f.domain_halfwidth;
    let mut best = f64::NEG_INFINITY;
    let mut x = vec![0.0; f.d];
    for _ in 0..n_points {
        for xj in x.iter_mut() {
            *xj = rngutil::uniform(rng, -w, w);
        }
        let mut total = 0.0;
        for (i, &coeff) in coeffs.iter().enumerate() {
            let mut quad = 0.0;
            for j in 0..f.d {
                let diff = x[j] - f.means[i][j];
                quad += diff * diff / f.diag_cov[i][j];
            }
            total += coeff * (-0.5 * quad).exp();
        }
        best = best.max(total);
    }
    best
}

// ---------------------------------------------------------------------------
// Benchmark functions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkKind {
    Spherical,
    Rastrigin,
    Rosenbrock,
    Goldstein,
}

impl BenchmarkKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Spherical => "spherical",
            BenchmarkKind::Rastrigin => "rastrigin",
            BenchmarkKind::Rosenbrock => "rosenbrock",
            BenchmarkKind::Goldstein => "goldstein",
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "spherical" => Some(BenchmarkKind::Spherical),
            "rastrigin" => Some(BenchmarkKind::Rastrigin),
            "rosenbrock" => Some(BenchmarkKind::Rosenbrock),
            "goldstein" => Some(BenchmarkKind::Goldstein),
            _ => None,
        }
    }
}

/// A standard test function, negated so that the goal is maximization and
/// the known optimum `y_opt` is the global maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkFn {
    pub kind: BenchmarkKind,
    pub d: usize,
}

impl BenchmarkFn {
    pub fn new(kind: BenchmarkKind, d: usize) -> Result<Self, SynthError> {
        let min_d = match kind {
            BenchmarkKind::Rosenbrock => 2,
            _ => 1,
        };
        if (kind == BenchmarkKind::Goldstein && d != 2) || d < min_d {
            return Err(SynthError::Dimension {
                name: kind.name().to_string(),
                expected: if kind == BenchmarkKind::Goldstein { 2 } else { min_d },
                got: d,
            });
        }
        Ok(BenchmarkFn { kind, d })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, SynthError> {
        if x.len() != self.d {
            return Err(SynthError::Dimension {
                name: self.kind.name().to_string(),
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(match self.kind {
            BenchmarkKind::Spherical => -x.iter().map(|v| v * v).sum::<f64>(),
            BenchmarkKind::Rastrigin => {
                let sum: f64 = x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum();
                -(10.0 * self.d as f64 + sum)
            }
            BenchmarkKind::Rosenbrock => {
                let sum: f64 = x
                    .windows(2)
                    .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                    .sum();
                -sum
            }
            BenchmarkKind::Goldstein => {
                let (a, b) = (x[0], x[1]);
                let t1 = 1.0
                    + (a + b + 1.0).powi(2)
                        * (19.0 - 14.0 * a + 3.0 * a * a - 14.0 * b + 6.0 * a * b + 3.0 * b * b);
                let t2 = 30.0
                    + (2.0 * a - 3.0 * b).powi(2)
                        * (18.0 - 32.0 * a + 12.0 * a * a + 48.0 * b - 36.0 * a * b
                            + 27.0 * b * b);
                -(t1 * t2)
            }
        })
    }

    /// Known maximum of the negated form.
    pub fn y_opt(&self) -> f64 {
        match self.kind {
            BenchmarkKind::Goldstein => -3.0,
            _ => 0.0,
        }
    }

    /// Known maximizer.
    pub fn x_opt(&self) -> Vec<f64> {
        match self.kind {
            BenchmarkKind::Rosenbrock => vec![1.0; self.d],
            BenchmarkKind::Goldstein => vec![0.0, -1.0],
            _ => vec![0.0; self.d],
        }
    }
}

// ---------------------------------------------------------------------------
// Constraints and penalties
// ---------------------------------------------------------------------------

pub type ConstraintFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A set of constraints `c_j(x) <= 0`; feasibility means every constraint
/// holds. Box and disk sets carry closed forms (and differentiable graph
/// fragments); custom sets are opaque evaluators.
#[derive(Clone)]
pub enum ConstraintSet {
    /// Per-coordinate limits, `2 d` constraints: `x_j - hi_j <= 0` and
    /// `lo_j - x_j <= 0`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `||x||^2 - tau * d <= 0`, a single quadratic constraint.
    Disk { tau: f64, d: usize },
    Custom(Vec<ConstraintFn>),
}

impl std::fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintSet::Box { lo, hi } => write!(f, "Box {{ lo: {lo:?}, hi: {hi:?} }}"),
            ConstraintSet::Disk { tau, d } => write!(f, "Disk {{ tau: {tau}, d: {d} }}"),
            ConstraintSet::Custom(fs) => write!(f, "Custom({} constraints)", fs.len()),
        }
    }
}

impl ConstraintSet {
    /// Number of constraints `C`.
    pub fn count(&self) -> usize {
        match self {
            ConstraintSet::Box { lo, .. } => 2 * lo.len(),
            ConstraintSet::Disk { .. } => 1,
            ConstraintSet::Custom(fs) => fs.len(),
        }
    }

    /// `p(x) = sum_j ReLU(c_j(x))`: zero exactly on the feasible set,
    /// otherwise the cumulative extent of violation.
    pub fn penalty(&self, x: &[f64]) -> f64 {
        match self {
            ConstraintSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&xj, (&l, &h))| (xj - h).max(0.0) + (l - xj).max(0.0))
                .sum(),
            ConstraintSet::Disk { tau, d } => {
                let norm_sq: f64 = x.iter().map(|v| v * v).sum();
                (norm_sq - tau * *d as f64).max(0.0)
            }
            ConstraintSet::Custom(fs) => fs.iter().map(|c| c(x).max(0.0)).sum(),
        }
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        self.penalty(x) == 0.0
    }

    /// Differentiable penalty fragment; `None` for custom constraint sets,
    /// which cannot be backpropagated through.
    pub fn penalty_graph(&self, g: &mut Graph, x: NodeId) -> Result<Option<NodeId>, SynthError> {
        match self {
            ConstraintSet::Box { lo, hi } => {
                let hi_node = g.constant_vec(hi.clone());
                let lo_node = g.constant_vec(lo.clone());
                let over = g.sub(x, hi_node)?;
                let over = g.relu(over);
                let over = g.sum(over);
                let under = g.sub(lo_node, x)?;
                let under = g.relu(under);
                let under = g.sum(under);
                Ok(Some(g.add(over, under)?))
            }
            ConstraintSet::Disk { tau, d } => {
                let sq = g.square(x);
                let norm_sq = g.sum(sq);
                let bound = g.constant_scalar(tau * *d as f64);
                let excess = g.sub(norm_sq, bound)?;
                Ok(Some(g.relu(excess)))
            }
            ConstraintSet::Custom(_) => Ok(None),
        }
    }
}

/// Box limits `[x_opt - dx, x_opt + dx]` with each `dx_j ~ U(tau1, tau2)`,
/// so the optimum always lies strictly inside.
pub fn sample_box_constraints<R: Rng>(
    x_opt: &[f64],
    tau1: f64,
    tau2: f64,
    rng: &mut R,
) -> ConstraintSet {
    assert!(tau1 > 0.0 && tau2 >= tau1);
    let dx: Vec<f64> = (0..x_opt.len()).map(|_| rngutil::uniform(rng, tau1, tau2)).collect();
    let lo = x_opt.iter().zip(&dx).map(|(&c, &w)| c - w).collect();
    let hi = x_opt.iter().zip(&dx).map(|(&c, &w)| c + w).collect();
    ConstraintSet::Box { lo, hi }
}

pub fn disk_constraint(tau: f64, d: usize) -> ConstraintSet {
    assert!(tau > 0.0);
    ConstraintSet::Disk { tau, d }
}
