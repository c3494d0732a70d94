//! Classical derivative-free baselines under the same budget accounting as
//! the trained optimizers: every call to the black box counts, no algorithm
//! may exceed the evaluation cap, and each run reports a best-so-far curve
//! aligned to evaluation counts.

mod cma_es;
mod eigen;
mod nelder_mead;
mod random_search;

pub use cma_es::{cma_es, CmaParams, CmaState};
pub use nelder_mead::nelder_mead;
pub use random_search::random_search;

use crate::inference::BlackBox;

/// Result of one baseline run.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best_x: Vec<f64>,
    pub best_y: f64,
    /// Best response after each evaluation, padded with the final best to
    /// exactly the budget length.
    pub curve: Vec<f64>,
    /// Evaluations actually performed (at most the budget).
    pub evaluations: usize,
}

/// Budget-guarded evaluator: returns `None` once the cap is reached, which
/// the algorithms treat as the stop signal wherever it surfaces.
pub(crate) struct BudgetedEval<'a, 'b> {
    bb: &'a BlackBox<'b>,
    budget: usize,
    curve: Vec<f64>,
    best_x: Vec<f64>,
    best_y: f64,
}

impl<'a, 'b> BudgetedEval<'a, 'b> {
    pub(crate) fn new(bb: &'a BlackBox<'b>, budget: usize) -> Self {
        assert!(budget >= 1);
        BudgetedEval {
            bb,
            budget,
            curve: Vec::with_capacity(budget),
            best_x: Vec::new(),
            best_y: f64::NEG_INFINITY,
        }
    }

    /// Evaluates the (maximization-form) objective, recording the running
    /// best.
    pub(crate) fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.curve.len() >= self.budget {
            return None;
        }
        let y = self.bb.eval(x);
        if y > self.best_y {
            self.best_y = y;
            self.best_x = x.to_vec();
        }
        self.curve.push(self.best_y);
        Some(y)
    }

    pub(crate) fn remaining(&self) -> usize {
        self.budget - self.curve.len()
    }

    pub(crate) fn finish(mut self) -> SearchOutcome {
        let evaluations = self.curve.len();
        let last = self.best_y;
        while self.curve.len() < self.budget {
            self.curve.push(last);
        }
        SearchOutcome { best_x: self.best_x, best_y: self.best_y, curve: self.curve, evaluations }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::BlackBox;
    use crate::rng::{stream, tag};
    use crate::synthfn::{BenchmarkFn, BenchmarkKind};

    fn spherical() -> BenchmarkFn {
        BenchmarkFn::new(BenchmarkKind::Spherical, 2).unwrap()
    }

    #[test]
    fn nelder_mead_converges_on_spherical() {
        let b = spherical();
        let bb = BlackBox::from_benchmark(&b);
        let out = nelder_mead(&bb, &[3.0, 3.0], 200);
        assert_eq!(out.curve.len(), 200);
        assert!(out.evaluations <= 200);
        let regret = b.y_opt() - out.best_y;
        assert!(regret <= 1e-3, "final regret {regret}");
    }

    #[test]
    fn nelder_mead_minimal_budget_stops_at_initial_simplex() {
        let b = spherical();
        let bb = BlackBox::from_benchmark(&b);
        // d + 2 evaluations leave no room for an iteration; the result is
        // the best of the d + 1 simplex vertices.
        let out = nelder_mead(&bb, &[3.0, 3.0], 4);
        assert_eq!(out.evaluations, 3);
        assert_eq!(out.curve.len(), 4);
        let vertices = [[3.0, 3.0], [3.5, 3.0], [3.0, 3.5]];
        let best = vertices.iter().map(|v| b.eval(v).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best_y, best);
    }

    #[test]
    fn cma_es_converges_on_spherical() {
        let b = spherical();
        let bb = BlackBox::from_benchmark(&b);
        let mut rng = stream(0, &[tag::EVAL_TRACE, 0, 0]);
        let out = cma_es(&bb, &[3.0, 3.0], 200, &mut rng);
        assert_eq!(out.curve.len(), 200);
        assert!(out.evaluations <= 200);
        let regret = b.y_opt() - out.best_y;
        assert!(regret <= 1e-3, "final regret {regret}");
    }

    #[test]
    fn cma_es_partial_generation_returns_best_seen() {
        let b = spherical();
        let bb = BlackBox::from_benchmark(&b);
        let mut rng = stream(1, &[tag::EVAL_TRACE, 0, 0]);
        // Population for d = 2 is 6; a budget of 4 cuts the first
        // generation short.
        let out = cma_es(&bb, &[3.0, 3.0], 4, &mut rng);
        assert_eq!(out.evaluations, 4);
        assert_eq!(out.curve.len(), 4);
        assert!(out.best_y.is_finite());
    }

    #[test]
    fn cma_es_is_deterministic() {
        let b = spherical();
        let bb = BlackBox::from_benchmark(&b);
        let run = || {
            let mut rng = stream(7, &[tag::EVAL_TRACE, 0, 0]);
            cma_es(&bb, &[2.0, -1.0], 60, &mut rng).curve
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn covariance_stays_symmetric_positive_definite() {
        let b = BenchmarkFn::new(BenchmarkKind::Rosenbrock, 2).unwrap();
        let bb = BlackBox::from_benchmark(&b);
        let mut rng = stream(3, &[tag::EVAL_TRACE, 0, 0]);
        let params = CmaParams::standard(2, 1.0);
        let mut state = CmaState::new(vec![-1.0, 2.0], &params);
        let mut evaluator = BudgetedEval::new(&bb, 50 * params.population);
        for _ in 0..50 {
            state.step(&params, &mut evaluator, &mut rng);
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(state.covariance[i][j], state.covariance[j][i]);
                }
            }
            let (eigenvalues, _) = super::eigen::symmetric_eigen(&state.covariance);
            assert!(eigenvalues.iter().all(|&v| v > 0.0), "eigenvalues {eigenvalues:?}");
            assert!(state.sigma > 0.0);
        }
    }

    #[test]
    fn random_search_examples() {
        let b = spherical();
        let bb = BlackBox::from_benchmark(&b);
        let one = {
            let mut rng = stream(5, &[tag::EVAL_TRACE, 0, 0]);
            random_search(&bb, (-4.0, 4.0), 1, &mut rng)
        };
        assert_eq!(one.evaluations, 1);
        let mut probe = stream(5, &[tag::EVAL_TRACE, 0, 0]);
        let x = crate::rng::uniform_vec(&mut probe, 2, -4.0, 4.0);
        assert_eq!(one.best_y, b.eval(&x).unwrap());

        let run = || {
            let mut rng = stream(6, &[tag::EVAL_TRACE, 0, 0]);
            random_search(&bb, (-4.0, 4.0), 50, &mut rng).curve
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn curves_are_monotone_and_budget_exact() {
        let b = BenchmarkFn::new(BenchmarkKind::Rastrigin, 2).unwrap();
        let bb = BlackBox::from_benchmark(&b);
        let mut rng = stream(9, &[tag::EVAL_TRACE, 0, 0]);
        let outs = [
            nelder_mead(&bb, &[1.5, -2.0], 73),
            cma_es(&bb, &[1.5, -2.0], 73, &mut rng),
            random_search(&bb, (-4.0, 4.0), 73, &mut rng),
        ];
        for out in &outs {
            assert_eq!(out.curve.len(), 73);
            assert!(out.evaluations <= 73);
            assert!(out.curve.windows(2).all(|w| w[1] >= w[0]));
            assert_eq!(*out.curve.last().unwrap(), out.best_y);
        }
    }
}
