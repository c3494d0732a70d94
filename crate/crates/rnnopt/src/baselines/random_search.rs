//! Uniform random search, the sanity oracle every learned optimizer must
//! beat.

use rand::Rng;

use super::{BudgetedEval, SearchOutcome};
use crate::inference::BlackBox;
use crate::rng as rngutil;

/// Maximizes by sampling `budget` uniform points from `domain^d`.
pub fn random_search<R: Rng>(
    bb: &BlackBox,
    domain: (f64, f64),
    budget: usize,
    rng: &mut R,
) -> SearchOutcome {
    assert!(domain.1 > domain.0);
    let mut eval = BudgetedEval::new(bb, budget);
    loop {
        let x = rngutil::uniform_vec(rng, bb.dim(), domain.0, domain.1);
        if eval.eval(&x).is_none() {
            break;
        }
    }
    eval.finish()
}
