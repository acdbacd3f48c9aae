//! Last-layer ablation: on frozen checkpoints, compare the exact
//! least-squares solve against ADAM run on the same objective, with and
//! without the prior term, across minibatch sizes.

use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::dqn::evaluate_record;
use crate::env::Env;
use crate::error::{Error, Result};
use crate::net::QNetwork;
use crate::optim::{AdamConfig, AdamState, Optimizer};
use crate::replay::Transition;
use crate::rng::{stream, Purpose};
use crate::srl::{generate_features, regression_system, solve_srl, GeneratedFeatures, Regularizer};
use crate::stats::relative_weight_distance;

use super::{flat_weights, with_flat_weights, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub run: RunConfig,
    pub dataset_size: usize,
    /// Passes over the dataset for each ADAM variant.
    pub iterations: usize,
    pub minibatch_sizes: Vec<usize>,
    pub lambda: f64,
    pub adam: AdamConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            dataset_size: 80_000,
            iterations: 20,
            minibatch_sizes: vec![32, 512, 4096],
            lambda: 1.0,
            adam: AdamConfig::default(),
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if self.dataset_size == 0
            || self.iterations == 0
            || self.minibatch_sizes.is_empty()
            || self.minibatch_sizes.contains(&0)
        {
            return Err(Error::Config(
                "ablation sizes, iterations and minibatch sizes must be positive".into(),
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "ablation.lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMethod {
    FqiLs,
    AdamWithPrior,
    AdamWithoutPrior,
}

impl AblationMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::FqiLs => "fqi_ls",
            Self::AdamWithPrior => "adam_prior",
            Self::AdamWithoutPrior => "adam_no_prior",
        }
    }
}

impl FromStr for AblationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fqi_ls" => Ok(Self::FqiLs),
            "adam_prior" => Ok(Self::AdamWithPrior),
            "adam_no_prior" => Ok(Self::AdamWithoutPrior),
            other => Err(Error::Format(format!("unknown ablation method '{other}'"))),
        }
    }
}

/// A saved network with the data it is probed on.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub step: u64,
    pub net: QNetwork<f64>,
    pub data: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub epoch: usize,
    pub method: AblationMethod,
    /// `None` for the full-batch solve.
    pub minibatch: Option<usize>,
    pub score_delta: f64,
    pub rel_weight_distance: f64,
    /// Regularized objective at the method's final weights.
    pub objective: f64,
}

/// `½·mean_i (Φ_i·w - y_i)² + ½·λ‖w - prior‖²`.
pub fn regularized_objective(
    features: &GeneratedFeatures,
    targets: &[f64],
    w: &[f64],
    lambda: f64,
    prior: &[f64],
) -> f64 {
    let sq: f64 = (0..features.len())
        .map(|i| (features.predict(w, i) - targets[i]).powi(2))
        .sum();
    let reg: f64 = w.iter().zip(prior).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * sq / features.len() as f64 + 0.5 * lambda * reg
}

/// ADAM on the last layer only; the data gradient is the minibatch mean.
fn adam_last_layer(
    cfg: &AblationConfig,
    features: &GeneratedFeatures,
    targets: &[f64],
    prior: &[f64],
    batch: usize,
    with_prior: bool,
    seed_index: u64,
) -> Result<Vec<f64>> {
    let layout = features.layout;
    let bw = layout.block_width();
    let f = layout.feature_dim;
    let mut w = prior.to_vec();
    let mut adam = AdamState::new(w.len(), cfg.adam);
    let mut grad = vec![0.0; w.len()];
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = stream(cfg.run.seed, Purpose::Ablation, seed_index);
    for _ in 0..cfg.iterations {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let a = features.actions[i];
                let err = (features.predict(&w, i) - targets[i]) * scale;
                let g = &mut grad[a * bw..(a + 1) * bw];
                for (gj, &x) in g[..f].iter_mut().zip(features.phi.row(i)) {
                    *gj += err * x;
                }
                if layout.bias {
                    g[f] += err;
                }
            }
            if with_prior {
                adam.step_with_prior(&mut w, &grad, cfg.lambda, prior)?;
            } else {
                adam.step(&mut w, &grad)?;
            }
        }
    }
    Ok(w)
}

/// All ablation rows for one checkpoint: one full-batch solve, then both
/// ADAM variants at every minibatch size. Scores are differences against
/// the checkpoint's own evaluation on the same evaluation stream.
pub fn ablate_checkpoint(
    cfg: &AblationConfig,
    ckpt: &Checkpoint,
    eval_env: &Env,
) -> Result<Vec<AblationRow>> {
    let run = &cfg.run;
    let eval = |net: &QNetwork<f64>| {
        evaluate_record(
            net,
            eval_env,
            run.eval_episodes,
            run.dqn.eval_epsilon,
            run.seed,
            ckpt.epoch,
            ckpt.step,
        )
        .map(|r| r.mean_return)
    };
    let baseline = eval(&ckpt.net)?;
    let features = generate_features(&ckpt.data, &ckpt.net, true)?;
    let prior = flat_weights(&ckpt.net)?;
    let targets = features.fqi_targets(&prior, run.dqn.gamma);
    let mut rows = Vec::new();
    let mut push = |method, minibatch, w: &[f64]| -> Result<()> {
        rows.push(AblationRow {
            epoch: ckpt.epoch,
            method,
            minibatch,
            score_delta: eval(&with_flat_weights(&ckpt.net, w)?)? - baseline,
            rel_weight_distance: relative_weight_distance(w, &prior)?,
            objective: regularized_objective(&features, &targets, w, cfg.lambda, &prior),
        });
        Ok(())
    };

    let sys = regression_system(&features, &targets);
    let w_ls = solve_srl(
        &sys,
        &Regularizer::BayesianPrior {
            lambda: cfg.lambda,
            prior: prior.clone(),
        },
    )?;
    push(AblationMethod::FqiLs, None, &w_ls)?;

    for (bi, &batch) in cfg.minibatch_sizes.iter().enumerate() {
        for (method, with_prior) in [
            (AblationMethod::AdamWithPrior, true),
            (AblationMethod::AdamWithoutPrior, false),
        ] {
            // Same shuffles for both variants at a given batch size.
            let index = ((ckpt.epoch as u64) << 16) | bi as u64;
            let w = adam_last_layer(cfg, &features, &targets, &prior, batch, with_prior, index)?;
            push(method, Some(batch), &w)?;
        }
    }
    Ok(rows)
}

/// Rows for every checkpoint, in order.
pub fn ablation_run(cfg: &AblationConfig, checkpoints: &[Checkpoint]) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    if checkpoints.is_empty() {
        return Err(Error::Empty("ablation needs at least one checkpoint"));
    }
    let env = cfg.run.build_env()?;
    let mut rows = Vec::new();
    for ckpt in checkpoints {
        rows.extend(ablate_checkpoint(cfg, ckpt, &env)?);
    }
    Ok(rows)
}

/// Trains plain DQN and probes a checkpoint every `run.n_drl` steps, taking
/// the most recent `dataset_size` replay transitions as the frozen data.
/// Checkpoints are probed as they are produced and then dropped.
pub fn ablation_experiment(cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let run = &cfg.run;
    let mut agent = run.build_agent()?;
    let env = agent.env().clone();
    let mut rows = Vec::new();
    let mut epoch = 0;
    while agent.steps() < run.total_steps {
        agent.step()?;
        if agent.steps() % run.n_drl == 0 {
            epoch += 1;
            let ckpt = Checkpoint {
                epoch,
                step: agent.steps(),
                net: agent.net.clone(),
                data: agent.buffer.snapshot(cfg.dataset_size)?,
            };
            rows.extend(ablate_checkpoint(cfg, &ckpt, &env)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::DqnConfig;
    use crate::lsdqn::SrlMethod;

    fn cfg() -> AblationConfig {
        AblationConfig {
            run: RunConfig {
                hidden: vec![16],
                total_steps: 2_000,
                n_drl: 2_000,
                srl_method: SrlMethod::None,
                eval_episodes: 2,
                seed: 9,
                dqn: DqnConfig {
                    learning_starts: 200,
                    ..DqnConfig::default()
                },
                ..RunConfig::default()
            },
            dataset_size: 1_500,
            iterations: 2,
            minibatch_sizes: vec![32, 512],
            ..AblationConfig::default()
        }
    }

    #[test]
    fn rows_and_dominance() {
        let rows = ablation_experiment(&cfg()).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].method, AblationMethod::FqiLs);
        assert_eq!(rows[0].minibatch, None);
        for r in &rows[1..] {
            assert!(rows[0].objective <= r.objective + 1e-10);
            assert!(r.rel_weight_distance >= 0.0);
        }
    }

    #[test]
    fn huge_lambda_keeps_adam_at_prior() {
        let mut c = cfg();
        c.lambda = 1e9;
        let mut agent = c.run.build_agent().unwrap();
        for _ in 0..500 {
            agent.step().unwrap();
        }
        let features =
            generate_features(&agent.buffer.snapshot(400).unwrap(), &agent.net, true).unwrap();
        let prior = flat_weights(&agent.net).unwrap();
        let y = features.fqi_targets(&prior, 0.95);
        let w = adam_last_layer(&c, &features, &y, &prior, 32, true, 0).unwrap();
        let d = relative_weight_distance(&w, &prior).unwrap();
        assert!(d < 1e-3, "distance {d}");
    }

    #[test]
    fn objective_by_hand() {
        let net = QNetwork::<f64>::from_layers(&[(
            crate::linalg::Matrix::from_rows(&[[1.0], [0.0]]),
            vec![0.0, 0.0],
        )])
        .unwrap();
        let data = [Transition {
            state: vec![2.0],
            action: 0,
            reward: 0.0,
            next_state: vec![0.0],
            terminal: true,
        }];
        // Single-layer net: features are the raw state.
        let features = generate_features(&data, &net, true).unwrap();
        let w = [1.0, 0.5, 0.0, 0.0];
        // prediction 2·1 + 0.5 = 2.5, target 1
        let j = regularized_objective(&features, &[1.0], &w, 2.0, &[0.0, 0.5, 0.0, 1.0]);
        assert!((j - (0.5 * 2.25 + 0.5 * 2.0 * 2.0)).abs() < 1e-15);
    }
}
