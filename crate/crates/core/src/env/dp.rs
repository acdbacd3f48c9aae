//! Exact dynamic-programming solutions for tabular MDPs.

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Matrix};

use super::tabular::TabularMdp;

/// A stochastic policy: row `s` is the action distribution in state `s`.
pub type Policy = Matrix<f64>;

const VALUE_ITERATION_TOL: f64 = 1e-13;
const VALUE_ITERATION_MAX: usize = 1_000_000;

/// Lowest-index argmax; NaNs never win.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || (values[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

fn state_value(mdp: &TabularMdp, q: &Matrix<f64>, s: usize) -> f64 {
    if mdp.is_terminal(s) {
        0.0
    } else {
        q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One application of the Bellman optimality operator.
pub fn bellman_optimality_backup(mdp: &TabularMdp, q: &Matrix<f64>) -> Matrix<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let v: Vec<f64> = (0..ns).map(|s| state_value(mdp, q, s)).collect();
    let mut out = Matrix::zeros(ns, na);
    for s in 0..ns {
        for a in 0..na {
            let r = mdp.reward(s, a);
            out[(s, a)] = if mdp.is_terminal(s) {
                r
            } else {
                r + mdp.gamma()
                    * mdp
                        .transition(s, a)
                        .iter()
                        .map(|&(t, p)| p * v[t])
                        .sum::<f64>()
            };
        }
    }
    out
}

/// `‖Q - T*Q‖∞`.
pub fn bellman_residual(mdp: &TabularMdp, q: &Matrix<f64>) -> f64 {
    let tq = bellman_optimality_backup(mdp, q);
    q.as_slice()
        .iter()
        .zip(tq.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Optimal action values by value iteration.
pub fn dp_q_star(mdp: &TabularMdp) -> Matrix<f64> {
    let mut q = Matrix::zeros(mdp.n_states(), mdp.n_actions());
    for _ in 0..VALUE_ITERATION_MAX {
        let next = bellman_optimality_backup(mdp, &q);
        let change = q
            .as_slice()
            .iter()
            .zip(next.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if change < VALUE_ITERATION_TOL {
            break;
        }
    }
    q
}

/// Deterministic greedy policy of an action-value table (ties → lowest action).
pub fn greedy_policy(q: &Matrix<f64>) -> Policy {
    let mut pi = Matrix::zeros(q.rows(), q.cols());
    for s in 0..q.rows() {
        pi[(s, argmax(q.row(s)))] = 1.0;
    }
    pi
}

pub fn deterministic_policy(actions: &[usize], n_actions: usize) -> Policy {
    let mut pi = Matrix::zeros(actions.len(), n_actions);
    for (s, &a) in actions.iter().enumerate() {
        pi[(s, a)] = 1.0;
    }
    pi
}

pub fn uniform_policy(n_states: usize, n_actions: usize) -> Policy {
    let mut pi = Matrix::zeros(n_states, n_actions);
    pi.as_mut_slice()
        .iter_mut()
        .for_each(|p| *p = 1.0 / n_actions as f64);
    pi
}

/// `Q^π` by solving the policy's Bellman equation directly.
pub fn dp_policy_eval(mdp: &TabularMdp, policy: &Policy) -> Result<Matrix<f64>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if policy.rows() != ns || policy.cols() != na {
        return Err(Error::dims(format!(
            "policy is {}x{}, MDP has {ns} states x {na} actions",
            policy.rows(),
            policy.cols()
        )));
    }
    // (I - γ P_π) v = r_π over states; terminal states carry no continuation.
    let gamma = mdp.gamma();
    let mut lhs = Matrix::identity(ns);
    let mut rhs = vec![0.0; ns];
    for s in 0..ns {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..na {
            let pa = policy[(s, a)];
            if pa == 0.0 {
                continue;
            }
            rhs[s] += pa * mdp.reward(s, a);
            for &(t, p) in mdp.transition(s, a) {
                if !mdp.is_terminal(t) {
                    lhs[(s, t)] -= gamma * pa * p;
                }
            }
        }
    }
    let v = lu_solve(&lhs, &rhs)?;
    let mut q = Matrix::zeros(ns, na);
    for s in 0..ns {
        for a in 0..na {
            let r = mdp.reward(s, a);
            q[(s, a)] = if mdp.is_terminal(s) {
                r
            } else {
                r + gamma
                    * mdp
                        .transition(s, a)
                        .iter()
                        .filter(|(t, _)| !mdp.is_terminal(*t))
                        .map(|&(t, p)| p * v[t])
                        .sum::<f64>()
            };
        }
    }
    Ok(q)
}

/// Expected discounted return from the start distribution under `policy`.
pub fn start_value(mdp: &TabularMdp, q: &Matrix<f64>, policy: &Policy) -> f64 {
    mdp.start_distribution()
        .iter()
        .map(|&(s, p)| {
            p * (0..mdp.n_actions())
                .map(|a| policy[(s, a)] * q[(s, a)])
                .sum::<f64>()
        })
        .sum()
}
