//! Finite MDPs with explicit transition tables, and the gridworld built on
//! them.

use rand::Rng;

use crate::error::{Error, Result};

/// Sparse next-state distribution: `(next_state, probability)` pairs.
pub type Distribution = Vec<(usize, f64)>;

const ROW_SUM_TOL: f64 = 1e-12;

/// A finite MDP `⟨S, A, R, P, γ⟩` with a set of terminal states.
///
/// Entering a terminal state ends the episode, so it contributes no value
/// beyond the reward of the transition that reached it. Acting *in* a
/// terminal state yields `R(s, a)` and nothing afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Distribution>,
    rewards: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
    start: Distribution,
}

impl TabularMdp {
    /// `transitions` and `rewards` are indexed by `s * n_actions + a`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<Distribution>,
        rewards: Vec<f64>,
        gamma: f64,
        terminal: Vec<bool>,
        start: Distribution,
    ) -> Result<Self> {
        let pairs = n_states * n_actions;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidGeometry(
                "MDP needs at least one state and action".into(),
            ));
        }
        if transitions.len() != pairs || rewards.len() != pairs || terminal.len() != n_states {
            return Err(Error::dims(format!(
                "MDP tables for {n_states} states x {n_actions} actions have sizes P={}, R={}, terminal={}",
                transitions.len(),
                rewards.len(),
                terminal.len()
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidInput(format!(
                "discount must lie in [0, 1), got {gamma}"
            )));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("rewards must be finite".into()));
        }
        let check = |d: &Distribution, what: &str| -> Result<()> {
            let mut sum = 0.0;
            for &(s, p) in d {
                if s >= n_states || !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidInput(format!("{what}: bad entry ({s}, {p})")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "{what}: probabilities sum to {sum}"
                )));
            }
            Ok(())
        };
        for (i, d) in transitions.iter().enumerate() {
            check(d, &format!("P[{}][{}]", i / n_actions, i % n_actions))?;
        }
        check(&start, "start distribution")?;
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
            terminal,
            start,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self, s: usize, a: usize) -> &Distribution {
        &self.transitions[s * self.n_actions + a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn start_distribution(&self) -> &Distribution {
        &self.start
    }

    /// One-hot observation of a state.
    pub fn encode(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        v[s] = 1.0;
        v
    }

    /// Inverse of [`TabularMdp::encode`].
    pub fn decode(&self, obs: &[f64]) -> Option<usize> {
        if obs.len() != self.n_states {
            return None;
        }
        let mut hot = obs.iter().enumerate().filter(|(_, v)| **v != 0.0);
        match (hot.next(), hot.next()) {
            (Some((s, v)), None) if *v == 1.0 => Some(s),
            _ => None,
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(s, p) in dist {
            acc += p;
            if u < acc {
                return s;
            }
        }
        dist.iter()
            .rev()
            .find(|(_, p)| *p > 0.0)
            .map_or(dist[0].0, |e| e.0)
    }
}

/// Episodic simulator over a [`TabularMdp`] with one-hot observations.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularMdp,
    state: usize,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp) -> Self {
        let state = mdp.start[0].0;
        Self { mdp, state }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        self.state = TabularMdp::sample(&self.mdp.start, rng);
        self.mdp.encode(self.state)
    }

    /// Returns `(observation, reward, terminal)`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        action: usize,
        rng: &mut R,
    ) -> Result<(Vec<f64>, f64, bool)> {
        if action >= self.mdp.n_actions {
            return Err(Error::InvalidAction {
                action,
                n_actions: self.mdp.n_actions,
            });
        }
        let s = self.state;
        let reward = self.mdp.reward(s, action);
        if self.mdp.is_terminal(s) {
            return Ok((self.mdp.encode(s), reward, true));
        }
        let next = TabularMdp::sample(self.mdp.transition(s, action), rng);
        self.state = next;
        Ok((self.mdp.encode(next), reward, self.mdp.is_terminal(next)))
    }
}

/// Gridworld geometry and dynamics.
///
/// Cells are indexed `y * width + x`; actions are 0 = up (y-1), 1 = right,
/// 2 = down, 3 = left. Moving into the boundary leaves the agent in place.
/// With probability `slip_prob` the intended move is replaced by a uniformly
/// random one of the four. The agent starts at `start`; the goal is terminal.
/// `R(s, a)` is `step_cost` plus the probability of entering the goal, so the
/// reward depends only on the state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub step_cost: f64,
    pub slip_prob: f64,
    pub gamma: f64,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            start: (0, 0),
            goal: (4, 4),
            step_cost: -0.01,
            slip_prob: 0.1,
            gamma: 0.95,
        }
    }
}

pub const GRID_ACTIONS: usize = 4;

pub fn make_gridworld(spec: &GridworldSpec) -> Result<TabularMdp> {
    let GridworldSpec {
        width,
        height,
        start,
        goal,
        step_cost,
        slip_prob,
        gamma,
    } = *spec;
    if width == 0 || height == 0 {
        return Err(Error::InvalidGeometry(format!(
            "empty {width}x{height} grid"
        )));
    }
    let inside = |(x, y): (usize, usize)| x < width && y < height;
    if !inside(goal) || !inside(start) {
        return Err(Error::InvalidGeometry(format!(
            "start {start:?} and goal {goal:?} must lie inside the {width}x{height} grid"
        )));
    }
    if start == goal {
        return Err(Error::InvalidGeometry(
            "start coincides with the goal".into(),
        ));
    }
    if !(0.0..1.0).contains(&slip_prob) {
        return Err(Error::InvalidGeometry(format!(
            "slip probability {slip_prob} outside [0, 1)"
        )));
    }
    let n = width * height;
    let index = |(x, y): (usize, usize)| y * width + x;
    let goal_idx = index(goal);
    let moved = |s: usize, a: usize| -> usize {
        let (x, y) = (s % width, s / width);
        let (nx, ny) = match a {
            0 => (x, y.saturating_sub(1)),
            1 => ((x + 1).min(width - 1), y),
            2 => (x, (y + 1).min(height - 1)),
            _ => (x.saturating_sub(1), y),
        };
        index((nx, ny))
    };
    let mut transitions = Vec::with_capacity(n * GRID_ACTIONS);
    let mut rewards = Vec::with_capacity(n * GRID_ACTIONS);
    for s in 0..n {
        for a in 0..GRID_ACTIONS {
            if s == goal_idx {
                transitions.push(vec![(s, 1.0)]);
                rewards.push(0.0);
                continue;
            }
            let mut probs = vec![0.0; n];
            probs[moved(s, a)] += 1.0 - slip_prob;
            for b in 0..GRID_ACTIONS {
                probs[moved(s, b)] += slip_prob / GRID_ACTIONS as f64;
            }
            let dist: Distribution = probs
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(t, &p)| (t, p))
                .collect();
            let p_goal = probs[goal_idx];
            transitions.push(dist);
            rewards.push(step_cost + p_goal);
        }
    }
    let mut terminal = vec![false; n];
    terminal[goal_idx] = true;
    TabularMdp::new(
        n,
        GRID_ACTIONS,
        transitions,
        rewards,
        gamma,
        terminal,
        vec![(index(start), 1.0)],
    )
}
