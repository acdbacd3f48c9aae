//! The hybrid loop: online DQN training interleaved with least-squares
//! re-solves of the last layer, plus the periodic-evaluation and ablation
//! protocols built on the same pieces.

mod ablation;
mod periodic;

pub use ablation::{
    ablate_checkpoint, ablation_experiment, ablation_run, regularized_objective, AblationConfig,
    AblationMethod, AblationRow, Checkpoint,
};
pub use periodic::{periodic_eval_run, PeriodicConfig, PeriodicTable};

use std::str::FromStr;

use log::{debug, warn};

use crate::dqn::{evaluate_record, DqnAgent, DqnConfig};
use crate::env::{Env, EnvSpec, GridworldSpec, DEFAULT_EPISODE_CAP};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{QNetwork, Workspace};
use crate::replay::Transition;
use crate::rng::{stream, Purpose};
use crate::srl::{ls_update_on, FeatureLayout, SrlConfig, SrlKind};
use crate::stats::{relative_weight_distance, LearningCurve};

/// Which batch method re-solves the last layer, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrlMethod {
    None,
    Lstdq,
    Fqi,
}

impl SrlMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Lstdq => "lstdq",
            Self::Fqi => "fqi",
        }
    }

    pub fn kind(self) -> Option<SrlKind> {
        match self {
            Self::None => None,
            Self::Lstdq => Some(SrlKind::Lstdq),
            Self::Fqi => Some(SrlKind::Fqi),
        }
    }
}

impl FromStr for SrlMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "lstdq" => Ok(Self::Lstdq),
            "fqi" => Ok(Self::Fqi),
            other => Err(Error::Config(format!("unknown SRL method '{other}'"))),
        }
    }
}

/// Where the least-squares dataset comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// The most recent `n_srl` replay transitions.
    Replay,
    /// `n_srl` fresh transitions from ε-greedy rollouts of the current net.
    Rollout,
}

impl DataSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::Replay => "replay",
            Self::Rollout => "rollout",
        }
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replay" => Ok(Self::Replay),
            "rollout" => Ok(Self::Rollout),
            other => Err(Error::Config(format!("unknown data source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub episode_cap: usize,
    pub hidden: Vec<usize>,
    pub dqn: DqnConfig,
    pub total_steps: u64,
    /// Environment steps between least-squares updates.
    pub n_drl: u64,
    pub srl_method: SrlMethod,
    /// Solver settings; `kind` is overridden by `srl_method`.
    pub srl: SrlConfig,
    pub data_source: DataSource,
    /// Compute a condition estimate of `Ã + λI` for the diagnostics.
    pub condition_estimate: bool,
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::Gridworld(GridworldSpec::default()),
            episode_cap: DEFAULT_EPISODE_CAP,
            hidden: vec![64, 64],
            dqn: DqnConfig::default(),
            total_steps: 200_000,
            n_drl: 20_000,
            srl_method: SrlMethod::Fqi,
            srl: SrlConfig::default(),
            data_source: DataSource::Replay,
            condition_estimate: true,
            eval_period: 5_000,
            eval_episodes: 20,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.dqn.validate()?;
        if self.n_drl == 0 || self.total_steps < self.n_drl {
            return Err(Error::Config(format!(
                "need 1 <= run.n_drl <= run.total_steps, got n_drl={} total_steps={}",
                self.n_drl, self.total_steps
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("run.eval_episodes must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "net.hidden needs at least one positive layer width".into(),
            ));
        }
        if self.srl.n_srl == 0 || self.srl.fqi_iterations == 0 {
            return Err(Error::Config(
                "srl.n_srl and srl.fqi_iterations must be positive".into(),
            ));
        }
        if !(self.srl.lambda >= 0.0 && self.srl.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "srl.lambda must be finite and >= 0, got {}",
                self.srl.lambda
            )));
        }
        Ok(())
    }

    /// Number of least-squares updates in a run.
    pub fn srl_iters(&self) -> u64 {
        self.total_steps / self.n_drl
    }

    /// Solver settings with the method applied, or `None` for plain DQN.
    pub fn srl_config(&self) -> Option<SrlConfig> {
        self.srl_method.kind().map(|kind| SrlConfig {
            kind,
            ..self.srl.clone()
        })
    }

    pub fn build_env(&self) -> Result<Env> {
        self.env.build(self.episode_cap)
    }

    pub fn build_agent(&self) -> Result<DqnAgent> {
        DqnAgent::new(
            self.dqn.clone(),
            self.build_env()?,
            &self.hidden,
            self.seed,
            self.total_steps,
        )
    }

    /// Curve label such as `dqn`, `dqn+fqi`.
    pub fn label(&self) -> String {
        match self.srl_method {
            SrlMethod::None => self.dqn.variant.name().to_string(),
            m => format!("{}+{}", self.dqn.variant.name(), m.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStatus {
    Applied,
    /// The factorization failed; the last layer was left unchanged.
    Skipped,
}

impl UpdateStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Applied => "applied",
            Self::Skipped => "skipped",
        }
    }
}

/// Summary of one least-squares update.
#[derive(Debug, Clone, PartialEq)]
pub struct LsDiagnostic {
    pub update: usize,
    pub step: u64,
    pub n_samples: usize,
    pub lambda: f64,
    /// `‖w_after - w_before‖ / ‖w_before‖` over the flattened last layer.
    pub rel_change: f64,
    /// NaN when not computed.
    pub condition: f64,
    pub feature_sparsity: f64,
    pub status: UpdateStatus,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub curve: LearningCurve,
    pub diagnostics: Vec<LsDiagnostic>,
    pub net: QNetwork<f64>,
}

/// `n` transitions from ε-greedy rollouts of `net`, restarting on episode end.
pub fn gather_rollouts(
    net: &QNetwork<f64>,
    env: &Env,
    n: usize,
    epsilon: f64,
    seed: u64,
    index: u64,
) -> Result<Vec<Transition>> {
    let mut env = env.clone();
    let mut rng = stream(seed, Purpose::Gathering, index);
    let mut ws = Workspace::default();
    let mut data = Vec::with_capacity(n);
    let mut obs = env.reset(&mut rng);
    while data.len() < n {
        let action =
            crate::dqn::epsilon_greedy(net.forward_with(&obs, &mut ws)?, epsilon, &mut rng);
        let step = env.step(action, &mut rng)?;
        let done = step.done();
        data.push(Transition {
            state: std::mem::replace(&mut obs, step.observation.clone()),
            action,
            reward: step.reward,
            next_state: step.observation,
            terminal: step.terminal,
        });
        if done {
            obs = env.reset(&mut rng);
        }
    }
    Ok(data)
}

/// The least-squares dataset for update number `index`.
pub(crate) fn ls_dataset(
    cfg: &RunConfig,
    agent: &DqnAgent,
    n: usize,
    index: u64,
) -> Result<Vec<Transition>> {
    match cfg.data_source {
        DataSource::Replay => agent.buffer.snapshot(n),
        DataSource::Rollout => gather_rollouts(
            &agent.net,
            agent.env(),
            n,
            cfg.dqn.eval_epsilon,
            cfg.seed,
            index,
        ),
    }
}

fn flat_last_layer(net: &QNetwork<f64>) -> Vec<f64> {
    let (w, b) = net.last_layer();
    let mut flat = w.into_vec();
    flat.extend(b);
    flat
}

/// Re-solves `net`'s last layer in place. Numerical failures leave the net
/// untouched and are reported as a skipped update.
pub(crate) fn apply_ls_update(
    net: &mut QNetwork<f64>,
    data: &[Transition],
    srl: &SrlConfig,
    gamma: f64,
    condition: bool,
    update: usize,
    step: u64,
) -> Result<LsDiagnostic> {
    let before = flat_last_layer(net);
    let mut diag = LsDiagnostic {
        update,
        step,
        n_samples: data.len(),
        lambda: srl.lambda,
        rel_change: 0.0,
        condition: f64::NAN,
        feature_sparsity: f64::NAN,
        status: UpdateStatus::Skipped,
    };
    match ls_update_on(net, data, srl, gamma) {
        Ok(upd) => {
            if condition {
                diag.condition = upd.condition(srl.lambda).unwrap_or(f64::NAN);
            }
            diag.feature_sparsity = upd.feature_sparsity;
            net.set_last_layer(&upd.weights, &upd.biases)?;
            diag.rel_change =
                relative_weight_distance(&flat_last_layer(net), &before).unwrap_or(f64::NAN);
            diag.status = UpdateStatus::Applied;
            debug!(
                "ls update {update} at step {step}: relative change {:.3e}",
                diag.rel_change
            );
        }
        Err(e) if e.is_numerical() => {
            warn!("ls update {update} at step {step} skipped: {e}");
        }
        Err(e) => return Err(e),
    }
    Ok(diag)
}

/// The hybrid training loop. Every `n_drl` environment steps the last layer
/// is re-solved on the configured dataset and written back; evaluations
/// run every `eval_period` steps, after any update due at the same step.
/// With `SrlMethod::None` this is exactly [`crate::dqn::train`].
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut agent = cfg.build_agent()?;
    let eval_env = agent.env().clone();
    let srl = cfg.srl_config();
    let mut curve = LearningCurve::new(cfg.label());
    let mut diagnostics = Vec::new();
    let mut epoch = 0;
    while agent.steps() < cfg.total_steps {
        agent.step()?;
        let steps = agent.steps();
        if let Some(srl) = &srl {
            if steps % cfg.n_drl == 0 {
                let update = diagnostics.len() + 1;
                let data = ls_dataset(cfg, &agent, srl.n_srl, update as u64)?;
                let diag = apply_ls_update(
                    &mut agent.net,
                    &data,
                    srl,
                    cfg.dqn.gamma,
                    cfg.condition_estimate,
                    update,
                    steps,
                )?;
                diagnostics.push(diag);
            }
        }
        if cfg.eval_period > 0 && steps % cfg.eval_period == 0 {
            epoch += 1;
            let rec = evaluate_record(
                &agent.net,
                &eval_env,
                cfg.eval_episodes,
                cfg.dqn.eval_epsilon,
                cfg.seed,
                epoch,
                steps,
            )?;
            curve.push(rec)?;
        }
    }
    Ok(RunOutput {
        curve,
        diagnostics,
        net: agent.net,
    })
}

/// Flattened last layer in the least-squares block layout.
pub fn flat_weights(net: &QNetwork<f64>) -> Result<Vec<f64>> {
    let (w, b) = net.last_layer();
    FeatureLayout::for_net(net, true).flatten(&w, &b)
}

/// Copy of `net` with its last layer replaced by flat block-layout weights.
pub fn with_flat_weights(net: &QNetwork<f64>, flat: &[f64]) -> Result<QNetwork<f64>> {
    let layout = FeatureLayout::for_net(net, true);
    let (w, b): (Matrix<f64>, Vec<f64>) = layout.unflatten(flat, &vec![0.0; layout.n_actions])?;
    let mut out = net.clone();
    out.set_last_layer(&w, &b)?;
    Ok(out)
}
