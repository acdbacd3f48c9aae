//! Least-squares solves for the network's last layer.
//!
//! The penultimate activations `φ(s) ∈ ℝ^f` are action-independent, so each
//! state-action pair gets a zero-padded feature vector with one block of
//! width `f + 1` per action: block `a` holds `(φ(s), 1)`, all other blocks
//! are zero. The trailing 1 lets the solve re-learn the last layer's bias.
//! A flat weight vector uses the same layout, so block `a` is
//! `(W[a, ·], b[a])`.

use std::str::FromStr;

use crate::env::argmax;
use crate::error::{Error, Result};
use crate::linalg::{
    condition_estimate, dot, solve_regularized, solve_regularized_general, Matrix,
};
use crate::net::{QNetwork, Workspace};
use crate::replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrlKind {
    Lstdq,
    Fqi,
}

impl SrlKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lstdq => "lstdq",
            Self::Fqi => "fqi",
        }
    }
}

impl FromStr for SrlKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstdq" => Ok(Self::Lstdq),
            "fqi" => Ok(Self::Fqi),
            other => Err(Error::Config(format!("unknown SRL method '{other}'"))),
        }
    }
}

/// How the batch solution is regularized.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    None,
    L2(f64),
    /// Gaussian prior centred at `prior`: solves `(Ã + λI)w = b̃ + λ·prior`.
    BayesianPrior {
        lambda: f64,
        prior: Vec<f64>,
    },
}

/// Configuration-level choice of regularizer; the prior is filled in from the
/// network at solve time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    None,
    L2,
    BayesianPrior,
}

impl RegularizerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::L2 => "l2",
            Self::BayesianPrior => "bayesian_prior",
        }
    }

    pub fn with_prior(self, lambda: f64, prior: &[f64]) -> Regularizer {
        match self {
            Self::None => Regularizer::None,
            Self::L2 => Regularizer::L2(lambda),
            Self::BayesianPrior => Regularizer::BayesianPrior {
                lambda,
                prior: prior.to_vec(),
            },
        }
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "l2" => Ok(Self::L2),
            "bayesian_prior" => Ok(Self::BayesianPrior),
            other => Err(Error::Config(format!("unknown regularizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrlConfig {
    pub kind: SrlKind,
    pub regularizer: RegularizerKind,
    pub lambda: f64,
    pub n_srl: usize,
    pub fqi_iterations: usize,
    /// Solve for the last-layer bias through a constant feature. When off,
    /// the bias is held fixed and folded into the targets.
    pub bias_feature: bool,
}

impl Default for SrlConfig {
    fn default() -> Self {
        Self {
            kind: SrlKind::Fqi,
            regularizer: RegularizerKind::BayesianPrior,
            lambda: 1.0,
            n_srl: 50_000,
            fqi_iterations: 1,
            bias_feature: true,
        }
    }
}

/// Geometry of the action-augmented feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub feature_dim: usize,
    pub n_actions: usize,
    pub bias: bool,
}

impl FeatureLayout {
    pub fn for_net(net: &QNetwork<f64>, bias: bool) -> Self {
        Self {
            feature_dim: net.feature_dim(),
            n_actions: net.n_actions(),
            bias,
        }
    }

    pub fn block_width(&self) -> usize {
        self.feature_dim + usize::from(self.bias)
    }

    /// Length `k` of augmented features and flat weights.
    pub fn dim(&self) -> usize {
        self.block_width() * self.n_actions
    }

    pub fn augment(&self, phi: &[f64], action: usize) -> Result<Vec<f64>> {
        if action >= self.n_actions {
            return Err(Error::InvalidAction {
                action,
                n_actions: self.n_actions,
            });
        }
        if phi.len() != self.feature_dim {
            return Err(Error::dims(format!(
                "feature vector of length {} for layout width {}",
                phi.len(),
                self.feature_dim
            )));
        }
        let bw = self.block_width();
        let mut out = vec![0.0; self.dim()];
        out[action * bw..action * bw + self.feature_dim].copy_from_slice(phi);
        if self.bias {
            out[action * bw + self.feature_dim] = 1.0;
        }
        Ok(out)
    }

    /// `Φ(s, a)·w` without materializing `Φ(s, a)`.
    fn block_dot(&self, w: &[f64], phi: &[f64], action: usize) -> f64 {
        let bw = self.block_width();
        let block = &w[action * bw..(action + 1) * bw];
        let mut v = dot(&block[..self.feature_dim], phi);
        if self.bias {
            v += block[self.feature_dim];
        }
        v
    }

    pub fn flatten(&self, weights: &Matrix<f64>, biases: &[f64]) -> Result<Vec<f64>> {
        if weights.rows() != self.n_actions
            || weights.cols() != self.feature_dim
            || biases.len() != self.n_actions
        {
            return Err(Error::dims("last layer does not match feature layout"));
        }
        let mut flat = Vec::with_capacity(self.dim());
        for a in 0..self.n_actions {
            flat.extend_from_slice(weights.row(a));
            if self.bias {
                flat.push(biases[a]);
            }
        }
        Ok(flat)
    }

    /// Inverse of [`FeatureLayout::flatten`]. Without a bias slot the biases
    /// are taken from `fixed_biases`.
    pub fn unflatten(&self, flat: &[f64], fixed_biases: &[f64]) -> Result<(Matrix<f64>, Vec<f64>)> {
        if flat.len() != self.dim() || fixed_biases.len() != self.n_actions {
            return Err(Error::dims("flat weights do not match feature layout"));
        }
        let bw = self.block_width();
        let mut w = Matrix::zeros(self.n_actions, self.feature_dim);
        let mut b = fixed_biases.to_vec();
        for a in 0..self.n_actions {
            let block = &flat[a * bw..(a + 1) * bw];
            w.row_mut(a).copy_from_slice(&block[..self.feature_dim]);
            if self.bias {
                b[a] = block[self.feature_dim];
            }
        }
        Ok((w, b))
    }
}

/// Action-augmented feature with a bias slot per action block.
pub fn augment_features(phi: &[f64], action: usize, n_actions: usize) -> Result<Vec<f64>> {
    FeatureLayout {
        feature_dim: phi.len(),
        n_actions,
        bias: true,
    }
    .augment(phi, action)
}

/// Features of a batch regenerated with one fixed network.
#[derive(Debug, Clone)]
pub struct GeneratedFeatures {
    pub layout: FeatureLayout,
    /// `φ(s_i)`, one row per transition.
    pub phi: Matrix<f64>,
    /// `φ(s_{i+1})`.
    pub phi_next: Matrix<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminal: Vec<bool>,
    /// Last-layer biases held fixed when the layout has no bias slot.
    pub fixed_biases: Vec<f64>,
}

impl GeneratedFeatures {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Fraction of exactly-zero entries in `φ(s_i)`.
    pub fn sparsity(&self) -> f64 {
        let s = self.phi.as_slice();
        s.iter().filter(|v| **v == 0.0).count() as f64 / s.len().max(1) as f64
    }

    fn fixed_bias(&self, a: usize) -> f64 {
        if self.layout.bias {
            0.0
        } else {
            self.fixed_biases[a]
        }
    }

    /// `Q_w(s_{i+1}, a)` under flat weights `w`, including any fixed bias.
    fn next_q(&self, w: &[f64], i: usize, a: usize) -> f64 {
        self.layout.block_dot(w, self.phi_next.row(i), a) + self.fixed_bias(a)
    }

    fn next_values(&self, w: &[f64], i: usize) -> Vec<f64> {
        (0..self.layout.n_actions)
            .map(|a| self.next_q(w, i, a))
            .collect()
    }

    /// `Q_w(s_i, a_i)`.
    pub fn predict(&self, w: &[f64], i: usize) -> f64 {
        let a = self.actions[i];
        self.layout.block_dot(w, self.phi.row(i), a) + self.fixed_bias(a)
    }

    /// FQI regression targets `y_i = r_i + γ·max_a' Q_w(s_{i+1}, a')`,
    /// `y_i = r_i` on terminal transitions.
    pub fn fqi_targets(&self, w_prev: &[f64], gamma: f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                if self.terminal[i] {
                    self.rewards[i]
                } else {
                    let best = self
                        .next_values(w_prev, i)
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max);
                    self.rewards[i] + gamma * best
                }
            })
            .collect()
    }
}

/// Runs the network over every transition of `data` (never reusing stored
/// features).
pub fn generate_features(
    data: &[Transition],
    net: &QNetwork<f64>,
    bias_feature: bool,
) -> Result<GeneratedFeatures> {
    if data.is_empty() {
        return Err(Error::Empty("least-squares dataset"));
    }
    let layout = FeatureLayout::for_net(net, bias_feature);
    let f = layout.feature_dim;
    let mut phi = Vec::with_capacity(data.len() * f);
    let mut phi_next = Vec::with_capacity(data.len() * f);
    let mut ws = Workspace::default();
    for t in data {
        if t.action >= layout.n_actions {
            return Err(Error::InvalidAction {
                action: t.action,
                n_actions: layout.n_actions,
            });
        }
        phi.extend_from_slice(net.features_with(&t.state, &mut ws)?);
        phi_next.extend_from_slice(net.features_with(&t.next_state, &mut ws)?);
    }
    Ok(GeneratedFeatures {
        layout,
        phi: Matrix::from_vec(data.len(), f, phi)?,
        phi_next: Matrix::from_vec(data.len(), f, phi_next)?,
        actions: data.iter().map(|t| t.action).collect(),
        rewards: data.iter().map(|t| t.reward).collect(),
        terminal: data.iter().map(|t| t.terminal).collect(),
        fixed_biases: net.last_layer().1,
    })
}

/// The empirical system `(Ã, b̃)` of one batch solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LsSystem {
    pub a_tilde: Matrix<f64>,
    pub b_tilde: Vec<f64>,
    pub n_samples: usize,
    pub kind: SrlKind,
}

/// Adds `scale · x·yᵀ` into the `(row_block, col_block)` block of `a`, where
/// `x` and `y` are block-local augmented features.
fn add_block_outer(
    a: &mut Matrix<f64>,
    layout: &FeatureLayout,
    row_block: usize,
    x: &[f64],
    col_block: usize,
    y: &[f64],
    scale: f64,
) {
    let bw = layout.block_width();
    let f = layout.feature_dim;
    let (r0, c0) = (row_block * bw, col_block * bw);
    let xs = x.iter().copied().chain(layout.bias.then_some(1.0));
    for (i, xi) in xs.enumerate() {
        if xi == 0.0 {
            continue;
        }
        let sx = scale * xi;
        let row = &mut a.row_mut(r0 + i)[c0..c0 + bw];
        for (cell, &yj) in row[..f].iter_mut().zip(y) {
            *cell += sx * yj;
        }
        if layout.bias {
            row[f] += sx;
        }
    }
}

fn add_block_vec(b: &mut [f64], layout: &FeatureLayout, block: usize, x: &[f64], scale: f64) {
    let bw = layout.block_width();
    let seg = &mut b[block * bw..(block + 1) * bw];
    for (s, &xi) in seg.iter_mut().zip(x) {
        *s += scale * xi;
    }
    if layout.bias {
        seg[layout.feature_dim] += scale;
    }
}

fn finish(mut a: Matrix<f64>, mut b: Vec<f64>, n: usize, kind: SrlKind) -> LsSystem {
    let inv = 1.0 / n as f64;
    a.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
    b.iter_mut().for_each(|v| *v *= inv);
    LsSystem {
        a_tilde: a,
        b_tilde: b,
        n_samples: n,
        kind,
    }
}

/// LSTD-Q system for the greedy policy of the flat weights `w_policy`:
/// `Ã = (1/N) Σ Φ(s,a)(Φ(s,a) - γ·Φ(s', π(s')))ᵀ`, `b̃ = (1/N) Σ Φ(s,a)·r`,
/// with the successor term dropped on terminal transitions.
pub fn lstdq_system(
    features: &GeneratedFeatures,
    w_policy: &[f64],
    gamma: f64,
) -> Result<LsSystem> {
    let layout = features.layout;
    if w_policy.len() != layout.dim() {
        return Err(Error::dims("policy weights do not match feature layout"));
    }
    let k = layout.dim();
    let mut a = Matrix::zeros(k, k);
    let mut b = vec![0.0; k];
    for i in 0..features.len() {
        let act = features.actions[i];
        let phi = features.phi.row(i);
        add_block_outer(&mut a, &layout, act, phi, act, phi, 1.0);
        let mut target = features.rewards[i] - features.fixed_bias(act);
        if !features.terminal[i] {
            let next_act = argmax(&features.next_values(w_policy, i));
            add_block_outer(
                &mut a,
                &layout,
                act,
                phi,
                next_act,
                features.phi_next.row(i),
                -gamma,
            );
            target += gamma * features.fixed_bias(next_act);
        }
        add_block_vec(&mut b, &layout, act, phi, target);
    }
    Ok(finish(a, b, features.len(), SrlKind::Lstdq))
}

/// FQI regression system onto targets built from `w_prev`:
/// `Ã = (1/N) Σ Φ Φᵀ`, `b̃ = (1/N) Σ Φ·y`.
pub fn fqi_system(features: &GeneratedFeatures, w_prev: &[f64], gamma: f64) -> Result<LsSystem> {
    let layout = features.layout;
    if w_prev.len() != layout.dim() {
        return Err(Error::dims("previous weights do not match feature layout"));
    }
    let targets = features.fqi_targets(w_prev, gamma);
    Ok(regression_system(features, &targets))
}

/// Normal equations of least squares onto arbitrary per-sample targets.
pub fn regression_system(features: &GeneratedFeatures, targets: &[f64]) -> LsSystem {
    let layout = features.layout;
    let k = layout.dim();
    let mut a = Matrix::zeros(k, k);
    let mut b = vec![0.0; k];
    for (i, &y) in targets.iter().enumerate() {
        let act = features.actions[i];
        let phi = features.phi.row(i);
        add_block_outer(&mut a, &layout, act, phi, act, phi, 1.0);
        add_block_vec(&mut b, &layout, act, phi, y - features.fixed_bias(act));
    }
    finish(a, b, features.len(), SrlKind::Fqi)
}

/// LSTD-Q system with freshly generated features and the network's own
/// greedy policy.
pub fn build_lstdq_system(
    data: &[Transition],
    net: &QNetwork<f64>,
    gamma: f64,
) -> Result<LsSystem> {
    let features = generate_features(data, net, true)?;
    let (w, b) = net.last_layer();
    let w_policy = features.layout.flatten(&w, &b)?;
    lstdq_system(&features, &w_policy, gamma)
}

/// FQI system with freshly generated features and targets from `w_prev`.
pub fn build_fqi_system(
    data: &[Transition],
    net: &QNetwork<f64>,
    w_prev: &[f64],
    gamma: f64,
) -> Result<LsSystem> {
    let features = generate_features(data, net, true)?;
    fqi_system(&features, w_prev, gamma)
}

/// Solves the regularized system. FQI matrices are symmetric and go
/// through Cholesky; LSTD-Q matrices are not and go through LU.
pub fn solve_srl(sys: &LsSystem, reg: &Regularizer) -> Result<Vec<f64>> {
    let k = sys.b_tilde.len();
    let zeros;
    let (lambda, prior): (f64, &[f64]) = match reg {
        Regularizer::None => {
            zeros = vec![0.0; k];
            (0.0, &zeros)
        }
        Regularizer::L2(lambda) => {
            zeros = vec![0.0; k];
            (*lambda, &zeros)
        }
        Regularizer::BayesianPrior { lambda, prior } => (*lambda, prior),
    };
    match sys.kind {
        SrlKind::Fqi => solve_regularized(&sys.a_tilde, &sys.b_tilde, lambda, prior),
        SrlKind::Lstdq => solve_regularized_general(&sys.a_tilde, &sys.b_tilde, lambda, prior),
    }
}

/// Everything produced by one LS-UPDATE.
#[derive(Debug, Clone)]
pub struct LsUpdate {
    pub weights: Matrix<f64>,
    pub biases: Vec<f64>,
    pub prior: Vec<f64>,
    pub solution: Vec<f64>,
    pub system: LsSystem,
    pub n_samples: usize,
    pub feature_sparsity: f64,
}

impl LsUpdate {
    /// Condition estimate of the regularized matrix `Ã + λI` (symmetrized).
    pub fn condition(&self, lambda: f64) -> Result<f64> {
        let mut a = self.system.a_tilde.symmetrized()?;
        a.add_diagonal(lambda);
        condition_estimate(&a)
    }
}

/// Re-solves the last layer on `data`: regenerate features with the current
/// network, run the configured SRL method with the current last layer as
/// the prior, and reshape the solution into last-layer weights.
pub fn ls_update_on(
    net: &QNetwork<f64>,
    data: &[Transition],
    cfg: &SrlConfig,
    gamma: f64,
) -> Result<LsUpdate> {
    if cfg.fqi_iterations == 0 {
        return Err(Error::Config(
            "srl.fqi_iterations must be at least 1".into(),
        ));
    }
    let features = generate_features(data, net, cfg.bias_feature)?;
    let layout = features.layout;
    let (w_net, b_net) = net.last_layer();
    let prior = layout.flatten(&w_net, &b_net)?;
    let reg = cfg.regularizer.with_prior(cfg.lambda, &prior);
    let mut w_prev = prior.clone();
    let mut system = None;
    for _ in 0..cfg.fqi_iterations {
        let sys = match cfg.kind {
            SrlKind::Fqi => fqi_system(&features, &w_prev, gamma)?,
            SrlKind::Lstdq => lstdq_system(&features, &w_prev, gamma)?,
        };
        w_prev = solve_srl(&sys, &reg)?;
        system = Some(sys);
    }
    let (weights, biases) = layout.unflatten(&w_prev, &b_net)?;
    Ok(LsUpdate {
        weights,
        biases,
        prior,
        solution: w_prev,
        system: system.expect("at least one iteration"),
        n_samples: features.len(),
        feature_sparsity: features.sparsity(),
    })
}

/// LS-UPDATE on a snapshot of the most recent `n_srl` replay transitions.
pub fn ls_update(
    net: &QNetwork<f64>,
    buffer: &ReplayBuffer,
    cfg: &SrlConfig,
    gamma: f64,
) -> Result<LsUpdate> {
    let data = buffer.snapshot(cfg.n_srl)?;
    ls_update_on(net, &data, cfg, gamma)
}
