//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use lsdqn_core::env::TabularMdp;
use lsdqn_core::linalg::Matrix;
use lsdqn_core::net::QNetwork;
use lsdqn_core::replay::Transition;
use rand::Rng;

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix in oracle");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let factor = m[row][col];
                if factor != 0.0 {
                    for k in 0..2 * n {
                        m[row][k] -= factor * m[col][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum())
        .collect()
}

pub fn to_rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// `B·Bᵀ + shift·I` for a random `B`.
pub fn random_spd<R: Rng>(n: usize, shift: f64, rng: &mut R) -> Matrix<f64> {
    let b: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] =
                (0..n).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { shift } else { 0.0 };
        }
    }
    m
}

/// Two-sided signed-rank p-value by listing all `2^n` sign patterns.
pub fn brute_force_wilcoxon_p(diffs: &[f64]) -> f64 {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| nz[i].abs().partial_cmp(&nz[j].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[order[j + 1]].abs() == nz[order[i]].abs() {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    let w_plus: f64 = (0..n).filter(|&k| nz[k] > 0.0).map(|k| ranks[k]).sum();
    let total: f64 = ranks.iter().sum();
    let observed = w_plus.min(total - w_plus);
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|&k| mask >> k & 1 == 1)
            .map(|k| ranks[k])
            .sum();
        if w.min(total - w) <= observed + 1e-9 {
            extreme += 1;
        }
    }
    (extreme as f64 / (1u64 << n) as f64).min(1.0)
}

/// Pearson chi-square statistic of `counts` against a uniform expectation.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// Upper 0.999 quantiles of chi-square for small degrees of freedom.
pub fn chi_square_critical_999(dof: usize) -> f64 {
    match dof {
        1 => 10.828,
        2 => 13.816,
        3 => 16.266,
        9 => 27.877,
        _ => panic!("no tabulated quantile for {dof} degrees of freedom"),
    }
}

/// Central-difference derivative of `f` at `x` along coordinate `i`.
pub fn central_difference(x: &[f64], i: usize, h: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Net whose penultimate features are the one-hot state: an identity hidden
/// layer followed by a last layer holding `q` (states × actions).
pub fn tabular_net(n_states: usize, n_actions: usize, q: Option<&Matrix<f64>>) -> QNetwork<f64> {
    let mut last = Matrix::zeros(n_actions, n_states);
    if let Some(q) = q {
        for s in 0..n_states {
            for a in 0..n_actions {
                last[(a, s)] = q[(s, a)];
            }
        }
    }
    QNetwork::from_layers(&[
        (Matrix::identity(n_states), vec![0.0; n_states]),
        (last, vec![0.0; n_actions]),
    ])
    .unwrap()
}

/// Every `(s, a, s')` with each successor repeated `round(p·copies)` times,
/// so empirical frequencies equal the transition probabilities exactly when
/// they are multiples of `1/copies`.
pub fn exhaustive_dataset(mdp: &TabularMdp, copies: usize) -> Vec<Transition> {
    let mut data = Vec::new();
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let mut total = 0;
            for &(t, p) in mdp.transition(s, a) {
                let n = (p * copies as f64).round() as usize;
                assert!(
                    ((n as f64) - p * copies as f64).abs() < 1e-9,
                    "probability {p} not a multiple of 1/{copies}"
                );
                total += n;
                for _ in 0..n {
                    data.push(Transition {
                        state: mdp.encode(s),
                        action: a,
                        reward: mdp.reward(s, a),
                        next_state: mdp.encode(t),
                        terminal: mdp.is_terminal(s) || mdp.is_terminal(t),
                    });
                }
            }
            assert_eq!(total, copies);
        }
    }
    data
}

/// `q` (states × actions) from a tabular net's last layer.
pub fn q_from_last_layer(weights: &Matrix<f64>, biases: &[f64]) -> Matrix<f64> {
    let (na, ns) = (weights.rows(), weights.cols());
    let mut q = Matrix::zeros(ns, na);
    for s in 0..ns {
        for a in 0..na {
            q[(s, a)] = weights[(a, s)] + biases[a];
        }
    }
    q
}

pub fn max_abs_diff(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
