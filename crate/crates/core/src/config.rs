//! `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, keys are namespaced
//! (`run.seed`, `dqn.minibatch_size`, `srl.lambda`, ...). Every key has a
//! default and unknown keys are rejected. Lists are comma separated.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::env::{CartPoleParams, EnvSpec, GridworldSpec};
use crate::error::{Error, Result};
use crate::lsdqn::{AblationConfig, PeriodicConfig, RunConfig};
use crate::srl::{RegularizerKind, SrlKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub run: RunConfig,
    pub periodic_regularizers: Vec<RegularizerKind>,
    pub periodic_lambdas: Vec<f64>,
    pub ablation_dataset_size: usize,
    pub ablation_iterations: usize,
    pub ablation_minibatch_sizes: Vec<usize>,
    pub ablation_lambda: f64,
    pub ablation_learning_rate: f64,
}

impl Default for Config {
    fn default() -> Self {
        let periodic = PeriodicConfig::default();
        let ablation = AblationConfig::default();
        Self {
            run: RunConfig::default(),
            periodic_regularizers: periodic.regularizers,
            periodic_lambdas: periodic.lambdas,
            ablation_dataset_size: ablation.dataset_size,
            ablation_iterations: ablation.iterations,
            ablation_minibatch_sizes: ablation.minibatch_sizes,
            ablation_lambda: ablation.lambda,
            ablation_learning_rate: ablation.adam.learning_rate,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got '{value}'"
        ))),
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn require_gridworld<'a>(spec: &'a mut EnvSpec, key: &str) -> Result<&'a mut GridworldSpec> {
    match spec {
        EnvSpec::Gridworld(g) => Ok(g),
        EnvSpec::CartPole { .. } => Err(Error::Config(format!(
            "{key} only applies to env.kind = gridworld"
        ))),
    }
}

fn require_cartpole<'a>(spec: &'a mut EnvSpec, key: &str) -> Result<&'a mut CartPoleParams> {
    match spec {
        EnvSpec::CartPole { params, .. } => Ok(params),
        EnvSpec::Gridworld(_) => Err(Error::Config(format!(
            "{key} only applies to env.kind = cartpole"
        ))),
    }
}

impl Config {
    pub fn from_str_config(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        // env.kind first, so geometry keys apply to the right environment.
        let mut lines = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", no + 1)))?;
            lines.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mut seen = std::collections::HashSet::new();
        for (key, _) in &lines {
            if !seen.insert(key.as_str()) {
                return Err(Error::Config(format!("duplicate key {key}")));
            }
        }
        lines.sort_by_key(|(k, _)| k != "env.kind");
        for (key, value) in &lines {
            cfg.set(key, value)?;
        }
        cfg.sync_gamma();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_config(&text)
    }

    fn sync_gamma(&mut self) {
        let gamma = self.run.dqn.gamma;
        match &mut self.run.env {
            EnvSpec::Gridworld(g) => g.gamma = gamma,
            EnvSpec::CartPole { gamma: g, .. } => *g = gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        self.run
            .build_env()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.periodic_config().validate()?;
        self.ablation_config().validate()
    }

    /// Replaces the seed, as `--seed` does.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    pub fn periodic_config(&self) -> PeriodicConfig {
        PeriodicConfig {
            run: self.run.clone(),
            kind: self.run.srl_method.kind().unwrap_or(SrlKind::Fqi),
            regularizers: self.periodic_regularizers.clone(),
            lambdas: self.periodic_lambdas.clone(),
        }
    }

    pub fn ablation_config(&self) -> AblationConfig {
        let mut ablation = AblationConfig {
            run: self.run.clone(),
            dataset_size: self.ablation_dataset_size,
            iterations: self.ablation_iterations,
            minibatch_sizes: self.ablation_minibatch_sizes.clone(),
            lambda: self.ablation_lambda,
            ..AblationConfig::default()
        };
        ablation.adam.learning_rate = self.ablation_learning_rate;
        ablation
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let run = &mut self.run;
        let dqn = &mut run.dqn;
        match key {
            "run.total_steps" => run.total_steps = parse(key, value)?,
            "run.n_drl" => run.n_drl = parse(key, value)?,
            "run.seed" => run.seed = parse(key, value)?,
            "run.eval_period" => run.eval_period = parse(key, value)?,
            "run.eval_episodes" => run.eval_episodes = parse(key, value)?,
            "run.episode_cap" => run.episode_cap = parse(key, value)?,
            "run.data_source" => run.data_source = parse(key, value)?,

            "env.kind" => {
                run.env = match value {
                    "gridworld" => EnvSpec::Gridworld(GridworldSpec::default()),
                    "cartpole" => EnvSpec::CartPole {
                        params: CartPoleParams::default(),
                        gamma: dqn.gamma,
                    },
                    other => {
                        return Err(Error::Config(format!(
                            "{key}: unknown environment '{other}'"
                        )))
                    }
                }
            }
            "env.width" => require_gridworld(&mut run.env, key)?.width = parse(key, value)?,
            "env.height" => require_gridworld(&mut run.env, key)?.height = parse(key, value)?,
            "env.start_x" => require_gridworld(&mut run.env, key)?.start.0 = parse(key, value)?,
            "env.start_y" => require_gridworld(&mut run.env, key)?.start.1 = parse(key, value)?,
            "env.goal_x" => require_gridworld(&mut run.env, key)?.goal.0 = parse(key, value)?,
            "env.goal_y" => require_gridworld(&mut run.env, key)?.goal.1 = parse(key, value)?,
            "env.step_cost" => require_gridworld(&mut run.env, key)?.step_cost = parse(key, value)?,
            "env.slip_prob" => require_gridworld(&mut run.env, key)?.slip_prob = parse(key, value)?,
            "env.force" => require_cartpole(&mut run.env, key)?.force = parse(key, value)?,
            "env.pole_mass" => require_cartpole(&mut run.env, key)?.pole_mass = parse(key, value)?,
            "env.cart_mass" => require_cartpole(&mut run.env, key)?.cart_mass = parse(key, value)?,

            "net.hidden" => run.hidden = parse_list(key, value)?,

            "dqn.variant" => dqn.variant = parse(key, value)?,
            "dqn.gamma" => dqn.gamma = parse(key, value)?,
            "dqn.epsilon_start" => dqn.epsilon.start = parse(key, value)?,
            "dqn.epsilon_end" => dqn.epsilon.end = parse(key, value)?,
            "dqn.epsilon_decay_fraction" => dqn.epsilon.decay_fraction = parse(key, value)?,
            "dqn.eval_epsilon" => dqn.eval_epsilon = parse(key, value)?,
            "dqn.minibatch_size" => dqn.minibatch_size = parse(key, value)?,
            "dqn.target_sync_period" => dqn.target_sync_period = parse(key, value)?,
            "dqn.train_period" => dqn.train_period = parse(key, value)?,
            "dqn.learning_starts" => dqn.learning_starts = parse(key, value)?,
            "dqn.buffer_capacity" => dqn.buffer_capacity = parse(key, value)?,
            "dqn.optimizer" => dqn.optimizer = parse(key, value)?,
            "dqn.learning_rate" => dqn.learning_rate = parse(key, value)?,
            "dqn.rmsprop_decay" => dqn.rmsprop.decay = parse(key, value)?,
            "dqn.rmsprop_epsilon" => dqn.rmsprop.epsilon = parse(key, value)?,
            "dqn.adam_beta1" => dqn.adam.beta1 = parse(key, value)?,
            "dqn.adam_beta2" => dqn.adam.beta2 = parse(key, value)?,
            "dqn.adam_epsilon" => dqn.adam.epsilon = parse(key, value)?,
            "dqn.reward_clip" => dqn.reward_clip = parse_bool(key, value)?,

            "srl.method" => run.srl_method = parse(key, value)?,
            "srl.regularizer" => run.srl.regularizer = parse(key, value)?,
            "srl.lambda" => run.srl.lambda = parse(key, value)?,
            "srl.n_srl" => run.srl.n_srl = parse(key, value)?,
            "srl.fqi_iterations" => run.srl.fqi_iterations = parse(key, value)?,
            "srl.bias_feature" => run.srl.bias_feature = parse_bool(key, value)?,
            "srl.condition_estimate" => run.condition_estimate = parse_bool(key, value)?,

            "periodic.regularizers" => self.periodic_regularizers = parse_list(key, value)?,
            "periodic.lambdas" => self.periodic_lambdas = parse_list(key, value)?,

            "ablation.dataset_size" => self.ablation_dataset_size = parse(key, value)?,
            "ablation.iterations" => self.ablation_iterations = parse(key, value)?,
            "ablation.minibatch_sizes" => self.ablation_minibatch_sizes = parse_list(key, value)?,
            "ablation.lambda" => self.ablation_lambda = parse(key, value)?,
            "ablation.learning_rate" => self.ablation_learning_rate = parse(key, value)?,

            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Every resolved setting, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let run = &self.run;
        let dqn = &run.dqn;
        let mut out = vec![
            ("run.total_steps", run.total_steps.to_string()),
            ("run.n_drl", run.n_drl.to_string()),
            ("run.seed", run.seed.to_string()),
            ("run.eval_period", run.eval_period.to_string()),
            ("run.eval_episodes", run.eval_episodes.to_string()),
            ("run.episode_cap", run.episode_cap.to_string()),
            ("run.data_source", run.data_source.name().to_string()),
        ];
        match &run.env {
            EnvSpec::Gridworld(g) => out.extend([
                ("env.kind", "gridworld".to_string()),
                ("env.width", g.width.to_string()),
                ("env.height", g.height.to_string()),
                ("env.start_x", g.start.0.to_string()),
                ("env.start_y", g.start.1.to_string()),
                ("env.goal_x", g.goal.0.to_string()),
                ("env.goal_y", g.goal.1.to_string()),
                ("env.step_cost", g.step_cost.to_string()),
                ("env.slip_prob", g.slip_prob.to_string()),
            ]),
            EnvSpec::CartPole { params, .. } => out.extend([
                ("env.kind", "cartpole".to_string()),
                ("env.force", params.force.to_string()),
                ("env.pole_mass", params.pole_mass.to_string()),
                ("env.cart_mass", params.cart_mass.to_string()),
            ]),
        }
        out.extend([
            ("net.hidden", join(&run.hidden)),
            ("dqn.variant", dqn.variant.name().to_string()),
            ("dqn.gamma", dqn.gamma.to_string()),
            ("dqn.epsilon_start", dqn.epsilon.start.to_string()),
            ("dqn.epsilon_end", dqn.epsilon.end.to_string()),
            (
                "dqn.epsilon_decay_fraction",
                dqn.epsilon.decay_fraction.to_string(),
            ),
            ("dqn.eval_epsilon", dqn.eval_epsilon.to_string()),
            ("dqn.minibatch_size", dqn.minibatch_size.to_string()),
            ("dqn.target_sync_period", dqn.target_sync_period.to_string()),
            ("dqn.train_period", dqn.train_period.to_string()),
            ("dqn.learning_starts", dqn.learning_starts.to_string()),
            ("dqn.buffer_capacity", dqn.buffer_capacity.to_string()),
            ("dqn.optimizer", dqn.optimizer.name().to_string()),
            ("dqn.learning_rate", dqn.learning_rate.to_string()),
            ("dqn.rmsprop_decay", dqn.rmsprop.decay.to_string()),
            ("dqn.rmsprop_epsilon", dqn.rmsprop.epsilon.to_string()),
            ("dqn.adam_beta1", dqn.adam.beta1.to_string()),
            ("dqn.adam_beta2", dqn.adam.beta2.to_string()),
            ("dqn.adam_epsilon", dqn.adam.epsilon.to_string()),
            ("dqn.reward_clip", dqn.reward_clip.to_string()),
            ("srl.method", run.srl_method.name().to_string()),
            ("srl.regularizer", run.srl.regularizer.name().to_string()),
            ("srl.lambda", run.srl.lambda.to_string()),
            ("srl.n_srl", run.srl.n_srl.to_string()),
            ("srl.fqi_iterations", run.srl.fqi_iterations.to_string()),
            ("srl.bias_feature", run.srl.bias_feature.to_string()),
            ("srl.condition_estimate", run.condition_estimate.to_string()),
            (
                "periodic.regularizers",
                self.periodic_regularizers
                    .iter()
                    .map(|r| r.name())
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            ("periodic.lambdas", join(&self.periodic_lambdas)),
            (
                "ablation.dataset_size",
                self.ablation_dataset_size.to_string(),
            ),
            ("ablation.iterations", self.ablation_iterations.to_string()),
            (
                "ablation.minibatch_sizes",
                join(&self.ablation_minibatch_sizes),
            ),
            ("ablation.lambda", self.ablation_lambda.to_string()),
            (
                "ablation.learning_rate",
                self.ablation_learning_rate.to_string(),
            ),
        ]);
        out
    }

    /// The resolved configuration as a parseable config file.
    pub fn resolved(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Short SHA-256 digest of [`Config::resolved`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
