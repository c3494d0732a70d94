//! Covariance matrix adaptation evolution strategy with the standard
//! parameterization: population `4 + floor(3 ln d)`, log-rank recombination
//! weights, cumulative step-size and covariance paths, rank-1 plus rank-mu
//! covariance updates.

#![allow(clippy::needless_range_loop)] // indexed loops mirror the linear-algebra notation

use rand::Rng;

use super::eigen::symmetric_eigen;
use super::{BudgetedEval, SearchOutcome};
use crate::inference::BlackBox;
use crate::rng as rngutil;

/// Fixed strategy parameters derived from the dimension.
#[derive(Debug, Clone)]
pub struct CmaParams {
    pub dim: usize,
    pub population: usize,
    pub parents: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
    pub initial_sigma: f64,
}

impl CmaParams {
    pub fn standard(dim: usize, initial_sigma: f64) -> Self {
        assert!(dim >= 1 && initial_sigma > 0.0);
        let d = dim as f64;
        let population = 4 + (3.0 * d.ln()).floor() as usize;
        let parents = population / 2;
        let raw: Vec<f64> =
            (1..=parents).map(|i| (population as f64 / 2.0 + 0.5).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (d + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (d + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d);
        let c_1 = 2.0 / ((d + 1.3) * (d + 1.3) + mu_eff);
        let c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0) * (d + 2.0) + mu_eff));
        let chi_n = d.sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));
        CmaParams {
            dim,
            population,
            parents,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            initial_sigma,
        }
    }
}

/// Mutable strategy state across generations.
#[derive(Debug, Clone)]
pub struct CmaState {
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub covariance: Vec<Vec<f64>>,
    pub path_sigma: Vec<f64>,
    pub path_c: Vec<f64>,
    pub generation: usize,
}

impl CmaState {
    pub fn new(mean: Vec<f64>, params: &CmaParams) -> Self {
        let d = params.dim;
        assert_eq!(mean.len(), d);
        let covariance =
            (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        CmaState {
            mean,
            sigma: params.initial_sigma,
            covariance,
            path_sigma: vec![0.0; d],
            path_c: vec![0.0; d],
            generation: 0,
        }
    }

    /// Runs one generation: sample, evaluate, update. Returns `false` when
    /// the budget ran out mid-generation, in which case the state is left
    /// untouched (the evaluations still count toward the curve).
    pub(crate) fn step<R: Rng>(
        &mut self,
        params: &CmaParams,
        evaluator: &mut BudgetedEval,
        rng: &mut R,
    ) -> bool {
        let d = params.dim;
        let (mut eigenvalues, basis) = symmetric_eigen(&self.covariance);
        for v in eigenvalues.iter_mut() {
            *v = v.max(1e-20);
        }
        let scales: Vec<f64> = eigenvalues.iter().map(|v| v.sqrt()).collect();

        // Sample and evaluate the population (minimization on -y).
        let mut offspring: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(params.population);
        for _ in 0..params.population {
            let z = rngutil::normal_vec(rng, d);
            let y: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|k| basis[i][k] * scales[k] * z[k]).sum())
                .collect();
            let x: Vec<f64> = (0..d).map(|i| self.mean[i] + self.sigma * y[i]).collect();
            match evaluator.eval(&x) {
                Some(value) => offspring.push((x, y, -value)),
                None => return false,
            }
        }
        offspring.sort_by(|a, b| a.2.total_cmp(&b.2));

        // Recombination in y-space and mean shift.
        let y_w: Vec<f64> = (0..d)
            .map(|i| {
                params
                    .weights
                    .iter()
                    .zip(&offspring)
                    .map(|(w, (_, y, _))| w * y[i])
                    .sum()
            })
            .collect();
        for i in 0..d {
            self.mean[i] += self.sigma * y_w[i];
        }

        // Step-size path uses C^{-1/2} y_w = B diag(1/scale) B^T y_w.
        let mut c_inv_sqrt_yw = vec![0.0; d];
        for i in 0..d {
            let mut sum = 0.0;
            for k in 0..d {
                let mut proj = 0.0;
                for j in 0..d {
                    proj += basis[j][k] * y_w[j];
                }
                sum += basis[i][k] * proj / scales[k];
            }
            c_inv_sqrt_yw[i] = sum;
        }
        let cs = params.c_sigma;
        let path_scale = (cs * (2.0 - cs) * params.mu_eff).sqrt();
        for i in 0..d {
            self.path_sigma[i] = (1.0 - cs) * self.path_sigma[i] + path_scale * c_inv_sqrt_yw[i];
        }
        let path_norm = self.path_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expected = (1.0 - (1.0 - cs).powi(2 * (self.generation as i32 + 1))).sqrt();
        let h_sigma = if path_norm / expected < (1.4 + 2.0 / (d as f64 + 1.0)) * params.chi_n {
            1.0
        } else {
            0.0
        };

        let cc = params.c_c;
        let pc_scale = h_sigma * (cc * (2.0 - cc) * params.mu_eff).sqrt();
        for i in 0..d {
            self.path_c[i] = (1.0 - cc) * self.path_c[i] + pc_scale * y_w[i];
        }

        // Rank-1 + rank-mu covariance update, then re-symmetrize.
        let delta_h = (1.0 - h_sigma) * cc * (2.0 - cc);
        let keep = 1.0 - params.c_1 - params.c_mu;
        for i in 0..d {
            for j in 0..d {
                let mut value = (keep + params.c_1 * delta_h) * self.covariance[i][j]
                    + params.c_1 * self.path_c[i] * self.path_c[j];
                for (w, (_, y, _)) in params.weights.iter().zip(&offspring) {
                    value += params.c_mu * w * y[i] * y[j];
                }
                self.covariance[i][j] = value;
            }
        }
        for i in 0..d {
            for j in 0..i {
                let avg = 0.5 * (self.covariance[i][j] + self.covariance[j][i]);
                self.covariance[i][j] = avg;
                self.covariance[j][i] = avg;
            }
        }

        self.sigma *= ((cs / params.d_sigma) * (path_norm / params.chi_n - 1.0)).exp();
        self.generation += 1;
        true
    }
}

/// Maximizes the black box from `x0` within `budget` evaluations using the
/// standard strategy defaults (initial step size 1.0).
pub fn cma_es<R: Rng>(bb: &BlackBox, x0: &[f64], budget: usize, rng: &mut R) -> SearchOutcome {
    let params = CmaParams::standard(bb.dim(), 1.0);
    let mut state = CmaState::new(x0.to_vec(), &params);
    let mut evaluator = BudgetedEval::new(bb, budget);
    while evaluator.remaining() > 0 && state.step(&params, &mut evaluator, rng) {}
    evaluator.finish()
}
