//! Online deep Q-learning: DQN and Double DQN targets, the minibatch training
//! step, ε-greedy acting and the evaluation protocol.

use rand::Rng;

use crate::env::{argmax, Env};
use crate::error::{Error, Result};
use crate::net::{QNetwork, Workspace};
use crate::optim::{AdamConfig, AnyOptimizer, Optimizer, OptimizerKind, RmsPropConfig};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{stream, Purpose, StreamRng};
use crate::stats::LearningCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrlVariant {
    Dqn,
    Ddqn,
}

impl DrlVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dqn => "dqn",
            Self::Ddqn => "ddqn",
        }
    }
}

impl std::str::FromStr for DrlVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(Self::Dqn),
            "ddqn" => Ok(Self::Ddqn),
            other => Err(Error::Config(format!("unknown DRL variant '{other}'"))),
        }
    }
}

/// Linear ε anneal from `start` to `end` over the first `decay_fraction` of
/// training, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.1,
            decay_fraction: 0.1,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64, total_steps: u64) -> f64 {
        let horizon = (self.decay_fraction * total_steps as f64).max(1.0);
        let frac = (step as f64 / horizon).min(1.0);
        self.start + frac * (self.end - self.start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub variant: DrlVariant,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub eval_epsilon: f64,
    pub minibatch_size: usize,
    pub target_sync_period: u64,
    pub train_period: u64,
    pub learning_starts: u64,
    pub buffer_capacity: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub rmsprop: RmsPropConfig,
    pub adam: AdamConfig,
    pub reward_clip: bool,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            variant: DrlVariant::Dqn,
            gamma: 0.95,
            epsilon: EpsilonSchedule::default(),
            eval_epsilon: 0.05,
            minibatch_size: 32,
            target_sync_period: 1000,
            train_period: 4,
            learning_starts: 1000,
            buffer_capacity: 100_000,
            optimizer: OptimizerKind::RmsProp,
            learning_rate: 0.00025,
            rmsprop: RmsPropConfig::default(),
            adam: AdamConfig::default(),
            reward_clip: false,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "dqn.gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !unit(self.epsilon.start) || !unit(self.epsilon.end) || !unit(self.eval_epsilon) {
            return Err(Error::Config("epsilon values must lie in [0, 1]".into()));
        }
        if self.minibatch_size == 0
            || self.train_period == 0
            || self.target_sync_period == 0
            || self.buffer_capacity == 0
        {
            return Err(Error::Config(
                "minibatch size, train period, target sync period and buffer capacity must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn make_optimizer(&self, n_params: usize) -> AnyOptimizer<f64> {
        AnyOptimizer::new(
            self.optimizer,
            n_params,
            self.learning_rate,
            self.rmsprop,
            self.adam,
        )
    }

    fn reward(&self, r: f64) -> f64 {
        if self.reward_clip {
            r.clamp(-1.0, 1.0)
        } else {
            r
        }
    }
}

/// One periodic evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub epoch: usize,
    pub step: u64,
    pub mean_return: f64,
    pub returns: Vec<f64>,
}

impl EvalRecord {
    pub fn new(epoch: usize, step: u64, returns: Vec<f64>) -> Self {
        let mean_return = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
        Self {
            epoch,
            step,
            mean_return,
            returns,
        }
    }

    pub fn std_return(&self) -> f64 {
        let n = self.returns.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        (self
            .returns
            .iter()
            .map(|r| (r - self.mean_return).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    }
}

fn max_q(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `y = r + γ·max_a' Q_target(s', a')`, or `y = r` on terminal transitions.
pub fn compute_targets_dqn(
    batch: &[&Transition],
    target_net: &QNetwork<f64>,
    gamma: f64,
) -> Result<Vec<f64>> {
    let mut ws = Workspace::default();
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                Ok(t.reward)
            } else {
                Ok(t.reward + gamma * max_q(target_net.forward_with(&t.next_state, &mut ws)?))
            }
        })
        .collect()
}

/// Double-DQN targets: the online network picks `a* = argmax_a Q(s', a)`
/// and the target network scores it.
pub fn compute_targets_ddqn(
    batch: &[&Transition],
    net: &QNetwork<f64>,
    target_net: &QNetwork<f64>,
    gamma: f64,
) -> Result<Vec<f64>> {
    let mut ws = Workspace::default();
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                return Ok(t.reward);
            }
            let a_star = argmax(net.forward_with(&t.next_state, &mut ws)?);
            let q_target = target_net.forward_with(&t.next_state, &mut ws)?[a_star];
            Ok(t.reward + gamma * q_target)
        })
        .collect()
}

/// Regression step on a fixed minibatch. Returns the pre-update mean squared
/// Bellman error; gradients flow only through the taken action's output.
pub fn train_on_batch(
    net: &mut QNetwork<f64>,
    target_net: &QNetwork<f64>,
    batch: &[&Transition],
    optimizer: &mut impl Optimizer<f64>,
    cfg: &DqnConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("training minibatch"));
    }
    let clipped: Vec<Transition>;
    let batch: Vec<&Transition> = if cfg.reward_clip {
        clipped = batch
            .iter()
            .map(|t| Transition {
                reward: cfg.reward(t.reward),
                ..(*t).clone()
            })
            .collect();
        clipped.iter().collect()
    } else {
        batch.to_vec()
    };
    let targets = match cfg.variant {
        DrlVariant::Dqn => compute_targets_dqn(&batch, target_net, cfg.gamma)?,
        DrlVariant::Ddqn => compute_targets_ddqn(&batch, net, target_net, cfg.gamma)?,
    };
    let n = batch.len() as f64;
    let mut grads = net.zero_gradients();
    let mut ws = Workspace::default();
    let mut out_grad = vec![0.0; net.n_actions()];
    let mut loss = 0.0;
    for (t, y) in batch.iter().zip(&targets) {
        let err = net.forward_with(&t.state, &mut ws)?[t.action] - y;
        loss += err * err;
        out_grad.iter_mut().for_each(|g| *g = 0.0);
        out_grad[t.action] = 2.0 * err / n;
        net.accumulate_gradients(&t.state, &out_grad, &mut grads, &mut ws)?;
    }
    optimizer.step(net.params_mut(), grads.as_slice())?;
    Ok(loss / n)
}

/// Samples a minibatch from replay and performs one regression step.
pub fn train_step<R: Rng + ?Sized>(
    net: &mut QNetwork<f64>,
    target_net: &QNetwork<f64>,
    buffer: &ReplayBuffer,
    optimizer: &mut impl Optimizer<f64>,
    cfg: &DqnConfig,
    rng: &mut R,
) -> Result<f64> {
    let batch = buffer.sample_minibatch(cfg.minibatch_size, rng)?;
    train_on_batch(net, target_net, &batch, optimizer, cfg)
}

pub fn sync_target(net: &QNetwork<f64>, target_net: &mut QNetwork<f64>) -> Result<()> {
    target_net.copy_from(net)
}

/// Greedy action (lowest index on ties) with probability `1 - ε`, otherwise
/// a uniformly random action.
pub fn epsilon_greedy<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// Undiscounted returns of `episodes` ε-greedy rollouts.
pub fn evaluate<R: Rng + ?Sized>(
    net: &QNetwork<f64>,
    env: &mut Env,
    episodes: usize,
    eval_epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if episodes == 0 {
        return Err(Error::InvalidInput(
            "evaluation needs at least one episode".into(),
        ));
    }
    let mut ws = Workspace::default();
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        let mut total = 0.0;
        loop {
            let action = epsilon_greedy(net.forward_with(&obs, &mut ws)?, eval_epsilon, rng);
            let step = env.step(action, rng)?;
            total += step.reward;
            if step.done() {
                break;
            }
            obs = step.observation;
        }
        returns.push(total);
    }
    Ok(returns)
}

/// Evaluation with a record wrapper, using the run's evaluation stream.
pub fn evaluate_record(
    net: &QNetwork<f64>,
    env: &Env,
    episodes: usize,
    eval_epsilon: f64,
    seed: u64,
    epoch: usize,
    step: u64,
) -> Result<EvalRecord> {
    let mut env = env.clone();
    let mut rng = stream(seed, Purpose::Evaluation, epoch as u64);
    let returns = evaluate(net, &mut env, episodes, eval_epsilon, &mut rng)?;
    Ok(EvalRecord::new(epoch, step, returns))
}

/// The online learner: networks, replay, optimizer and interaction state.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub cfg: DqnConfig,
    pub net: QNetwork<f64>,
    pub target_net: QNetwork<f64>,
    pub buffer: ReplayBuffer,
    optimizer: AnyOptimizer<f64>,
    env: Env,
    obs: Vec<f64>,
    env_rng: StreamRng,
    explore_rng: StreamRng,
    sample_rng: StreamRng,
    steps: u64,
    total_steps: u64,
    workspace: Workspace<f64>,
    last_loss: Option<f64>,
}

impl DqnAgent {
    /// Builds an agent whose network has `hidden` layers between the
    /// observation and the action values.
    pub fn new(
        cfg: DqnConfig,
        mut env: Env,
        hidden: &[usize],
        seed: u64,
        total_steps: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![env.obs_dim()];
        sizes.extend_from_slice(hidden);
        sizes.push(env.n_actions());
        let net = QNetwork::random(&sizes, &mut stream(seed, Purpose::Init, 0))?;
        let mut env_rng = stream(seed, Purpose::Environment, 0);
        let obs = env.reset(&mut env_rng);
        Ok(Self {
            optimizer: cfg.make_optimizer(net.n_params()),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            target_net: net.clone(),
            net,
            cfg,
            env,
            obs,
            env_rng,
            explore_rng: stream(seed, Purpose::Exploration, 0),
            sample_rng: stream(seed, Purpose::Sampling, 0),
            steps: 0,
            total_steps,
            workspace: Workspace::default(),
            last_loss: None,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon.value(self.steps, self.total_steps)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// One environment interaction, followed by a training step and a target
    /// sync when their periods come due.
    pub fn step(&mut self) -> Result<()> {
        let eps = self.epsilon();
        let q = self.net.forward_with(&self.obs, &mut self.workspace)?;
        let action = epsilon_greedy(q, eps, &mut self.explore_rng);
        let outcome = self.env.step(action, &mut self.env_rng)?;
        let done = outcome.done();
        let next = outcome.observation;
        self.buffer.push(Transition {
            state: std::mem::take(&mut self.obs),
            action,
            reward: outcome.reward,
            next_state: next.clone(),
            terminal: outcome.terminal,
        });
        self.obs = if done {
            self.env.reset(&mut self.env_rng)
        } else {
            next
        };
        self.steps += 1;

        if self.steps >= self.cfg.learning_starts && self.steps % self.cfg.train_period == 0 {
            let loss = train_step(
                &mut self.net,
                &self.target_net,
                &self.buffer,
                &mut self.optimizer,
                &self.cfg,
                &mut self.sample_rng,
            )?;
            self.last_loss = Some(loss);
        }
        if self.steps % self.cfg.target_sync_period == 0 {
            sync_target(&self.net, &mut self.target_net)?;
        }
        Ok(())
    }
}

/// Plain DQN/DDQN training with periodic evaluation; no least-squares
/// updates.
pub fn train(
    agent: &mut DqnAgent,
    total_steps: u64,
    eval_period: u64,
    eval_episodes: usize,
    seed: u64,
) -> Result<LearningCurve> {
    let eval_env = agent.env.clone();
    let mut curve = LearningCurve::new(agent.cfg.variant.name());
    let mut epoch = 0;
    while agent.steps() < total_steps {
        agent.step()?;
        if eval_period > 0 && agent.steps() % eval_period == 0 {
            epoch += 1;
            let rec = evaluate_record(
                &agent.net,
                &eval_env,
                eval_episodes,
                agent.cfg.eval_epsilon,
                seed,
                epoch,
                agent.steps(),
            )?;
            curve.push(rec)?;
        }
    }
    Ok(curve)
}
