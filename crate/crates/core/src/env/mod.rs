//! Small environments with exact oracles, standing in for image-based games.

mod cartpole;
pub mod dp;
mod tabular;

pub use cartpole::{make_cartpole_discrete, CartPole, CartPoleParams, CARTPOLE_ACTIONS};
pub use dp::{
    argmax, bellman_optimality_backup, bellman_residual, deterministic_policy, dp_policy_eval,
    dp_q_star, greedy_policy, start_value, uniform_policy, Policy,
};
pub use tabular::{
    make_gridworld, Distribution, GridworldSpec, TabularEnv, TabularMdp, GRID_ACTIONS,
};

use rand::Rng;

use crate::error::Result;

pub const DEFAULT_EPISODE_CAP: usize = 500;

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The episode ended inside the MDP.
    pub terminal: bool,
    /// The episode was cut off by the step cap; not a true terminal.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Environment configuration as read from a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Gridworld(GridworldSpec),
    CartPole { params: CartPoleParams, gamma: f64 },
}

impl EnvSpec {
    pub fn build(&self, episode_cap: usize) -> Result<Env> {
        let inner = match self {
            EnvSpec::Gridworld(g) => EnvKind::Tabular(TabularEnv::new(make_gridworld(g)?)),
            EnvSpec::CartPole { params, .. } => EnvKind::CartPole(make_cartpole_discrete(*params)?),
        };
        Ok(Env {
            inner,
            episode_cap: episode_cap.max(1),
            elapsed: 0,
        })
    }

    pub fn gamma(&self) -> f64 {
        match self {
            EnvSpec::Gridworld(g) => g.gamma,
            EnvSpec::CartPole { gamma, .. } => *gamma,
        }
    }
}

#[derive(Debug, Clone)]
enum EnvKind {
    Tabular(TabularEnv),
    CartPole(CartPole),
}

/// An episodic environment with a step cap.
#[derive(Debug, Clone)]
pub struct Env {
    inner: EnvKind,
    episode_cap: usize,
    elapsed: usize,
}

impl Env {
    pub fn tabular(mdp: TabularMdp, episode_cap: usize) -> Self {
        Self {
            inner: EnvKind::Tabular(TabularEnv::new(mdp)),
            episode_cap: episode_cap.max(1),
            elapsed: 0,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match &self.inner {
            EnvKind::Tabular(t) => t.mdp().n_states(),
            EnvKind::CartPole(_) => 4,
        }
    }

    pub fn n_actions(&self) -> usize {
        match &self.inner {
            EnvKind::Tabular(t) => t.mdp().n_actions(),
            EnvKind::CartPole(_) => CARTPOLE_ACTIONS,
        }
    }

    pub fn episode_cap(&self) -> usize {
        self.episode_cap
    }

    /// The underlying MDP when the environment is tabular.
    pub fn mdp(&self) -> Option<&TabularMdp> {
        match &self.inner {
            EnvKind::Tabular(t) => Some(t.mdp()),
            EnvKind::CartPole(_) => None,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        self.elapsed = 0;
        match &mut self.inner {
            EnvKind::Tabular(t) => t.reset(rng),
            EnvKind::CartPole(c) => c.reset(rng),
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step> {
        let (observation, reward, terminal) = match &mut self.inner {
            EnvKind::Tabular(t) => t.step(action, rng)?,
            EnvKind::CartPole(c) => c.step(action)?,
        };
        self.elapsed += 1;
        Ok(Step {
            observation,
            reward,
            terminal,
            truncated: !terminal && self.elapsed >= self.episode_cap,
        })
    }
}
