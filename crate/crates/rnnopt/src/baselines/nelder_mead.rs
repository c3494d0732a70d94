//! Downhill simplex search with the textbook coefficients: reflection 1,
//! expansion 2, contraction 0.5, shrink 0.5.

#![allow(clippy::needless_range_loop)] // indexed loops mirror the linear-algebra notation

use super::{BudgetedEval, SearchOutcome};
use crate::inference::BlackBox;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Axis step used to spread the initial simplex around `x0`.
const INIT_STEP: f64 = 0.5;

/// Maximizes the black box from `x0` within exactly `budget` evaluations.
/// Internally minimizes the negated objective. An iteration only starts
/// while at least two evaluations remain, so a minimal budget of `d + 2`
/// reports the best of the initial simplex.
pub fn nelder_mead(bb: &BlackBox, x0: &[f64], budget: usize) -> SearchOutcome {
    let d = bb.dim();
    assert_eq!(x0.len(), d);
    assert!(budget >= d + 2, "budget {budget} cannot seed a {d}-simplex");
    let mut eval = BudgetedEval::new(bb, budget);
    // cost = -y; the simplex is ordered best (lowest cost) first.
    let cost = |e: &mut BudgetedEval, x: &[f64]| e.eval(x).map(|y| -y);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    match cost(&mut eval, x0) {
        Some(c) => simplex.push((x0.to_vec(), c)),
        None => return eval.finish(),
    }
    for j in 0..d {
        let mut v = x0.to_vec();
        v[j] += INIT_STEP;
        match cost(&mut eval, &v) {
            Some(c) => simplex.push((v, c)),
            None => return eval.finish(),
        }
    }

    while eval.remaining() >= 2 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst = simplex[d].clone();
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(v, _)| v[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            (0..d).map(|j| centroid[j] + coef * (worst.0[j] - centroid[j])).collect()
        };

        let reflected = along(-REFLECT);
        let Some(c_reflected) = cost(&mut eval, &reflected) else { break };

        if c_reflected < simplex[0].1 {
            // Best so far: try stretching further in the same direction.
            let expanded = along(-EXPAND);
            match cost(&mut eval, &expanded) {
                Some(c_expanded) if c_expanded < c_reflected => {
                    simplex[d] = (expanded, c_expanded);
                }
                Some(_) => simplex[d] = (reflected, c_reflected),
                None => {
                    simplex[d] = (reflected, c_reflected);
                    break;
                }
            }
        } else if c_reflected < simplex[d - 1].1 {
            simplex[d] = (reflected, c_reflected);
        } else {
            let contracted = along(CONTRACT);
            match cost(&mut eval, &contracted) {
                Some(c_contracted) if c_contracted < worst.1 => {
                    simplex[d] = (contracted, c_contracted);
                }
                Some(_) => {
                    // Shrink everything toward the best vertex.
                    let best = simplex[0].0.clone();
                    let mut stop = false;
                    for k in 1..=d {
                        let v: Vec<f64> = (0..d)
                            .map(|j| best[j] + SHRINK * (simplex[k].0[j] - best[j]))
                            .collect();
                        match cost(&mut eval, &v) {
                            Some(c) => simplex[k] = (v, c),
                            None => {
                                stop = true;
                                break;
                            }
                        }
                    }
                    if stop {
                        break;
                    }
                }
                None => break,
            }
        }
    }
    eval.finish()
}
