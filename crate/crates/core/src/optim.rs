//! First-order optimizers over flat parameter vectors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A stateful first-order update rule.
pub trait Optimizer<T> {
    fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()>;
}

fn check_shapes<T>(params: &[T], grads: &[T], state_len: usize) -> Result<()> {
    if params.len() != grads.len() || params.len() != state_len {
        return Err(Error::dims(format!(
            "optimizer over {state_len} parameters got params {} and grads {}",
            params.len(),
            grads.len()
        )));
    }
    Ok(())
}

/// Plain gradient descent.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub learning_rate: T,
}

impl<T: Scalar> Optimizer<T> for Sgd<T> {
    fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        check_shapes(params, grads, params.len())?;
        for (p, &g) in params.iter_mut().zip(grads) {
            *p -= self.learning_rate * g;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.00025,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// ADAM with bias correction folded into the step size (the torch `optim`
/// formulation: `eps` is added to the uncorrected `sqrt(v)`).
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first_moment: Vec<T>,
    second_moment: Vec<T>,
    steps: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![T::zero(); n_params],
            second_moment: vec![T::zero(); n_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn update(&mut self, params: &mut [T], grad_at: impl Fn(usize, T) -> T) {
        self.steps += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let t = self.steps as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let step_size = T::of(c.learning_rate * bias2.sqrt() / bias1);
        let (eps, wd) = (T::of(c.epsilon), T::of(c.weight_decay));
        for (i, p) in params.iter_mut().enumerate() {
            let mut g = grad_at(i, *p);
            if wd != T::zero() {
                g += wd * *p;
            }
            let m = &mut self.first_moment[i];
            *m = b1 * *m + (T::one() - b1) * g;
            let v = &mut self.second_moment[i];
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= step_size * *m / (v.sqrt() + eps);
        }
    }

    /// One ADAM step on the loss gradient plus `lambda * (params - prior)`,
    /// the gradient of a Gaussian prior centred at `prior`.
    pub fn step_with_prior(
        &mut self,
        params: &mut [T],
        grads: &[T],
        lambda: T,
        prior: &[T],
    ) -> Result<()> {
        check_shapes(params, grads, self.first_moment.len())?;
        check_shapes(params, prior, self.first_moment.len())?;
        self.update(params, |i, p| grads[i] + lambda * (p - prior[i]));
        Ok(())
    }
}

impl<T: Scalar> Optimizer<T> for AdamState<T> {
    fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        check_shapes(params, grads, self.first_moment.len())?;
        self.update(params, |i, _| grads[i]);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.00025,
            decay: 0.95,
            epsilon: 1e-2,
        }
    }
}

/// Uncentred RMSProp: `s ← ρ·s + (1-ρ)·g²`, `p ← p - lr·g / sqrt(s + eps)`.
#[derive(Debug, Clone)]
pub struct RmsPropState<T> {
    pub config: RmsPropConfig,
    mean_square: Vec<T>,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new(n_params: usize, config: RmsPropConfig) -> Self {
        Self {
            config,
            mean_square: vec![T::zero(); n_params],
        }
    }

    pub fn mean_square(&self) -> &[T] {
        &self.mean_square
    }
}

impl<T: Scalar> Optimizer<T> for RmsPropState<T> {
    fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        check_shapes(params, grads, self.mean_square.len())?;
        let rho = T::of(self.config.decay);
        let lr = T::of(self.config.learning_rate);
        let eps = T::of(self.config.epsilon);
        for ((p, &g), s) in params.iter_mut().zip(grads).zip(&mut self.mean_square) {
            *s = rho * *s + (T::one() - rho) * g * g;
            *p -= lr * g / (*s + eps).sqrt();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "rmsprop" => Ok(Self::RmsProp),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::RmsProp => "rmsprop",
            Self::Adam => "adam",
        }
    }
}

/// Runtime-selected optimizer, as chosen by configuration.
#[derive(Debug, Clone)]
pub enum AnyOptimizer<T> {
    Sgd(Sgd<T>),
    RmsProp(RmsPropState<T>),
    Adam(AdamState<T>),
}

impl<T: Scalar> AnyOptimizer<T> {
    pub fn new(
        kind: OptimizerKind,
        n_params: usize,
        learning_rate: f64,
        rmsprop: RmsPropConfig,
        adam: AdamConfig,
    ) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::Sgd(Sgd {
                learning_rate: T::of(learning_rate),
            }),
            OptimizerKind::RmsProp => Self::RmsProp(RmsPropState::new(
                n_params,
                RmsPropConfig {
                    learning_rate,
                    ..rmsprop
                },
            )),
            OptimizerKind::Adam => Self::Adam(AdamState::new(
                n_params,
                AdamConfig {
                    learning_rate,
                    ..adam
                },
            )),
        }
    }
}

impl<T: Scalar> Optimizer<T> for AnyOptimizer<T> {
    fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        match self {
            Self::Sgd(o) => o.step(params, grads),
            Self::RmsProp(o) => o.step(params, grads),
            Self::Adam(o) => o.step(params, grads),
        }
    }
}
