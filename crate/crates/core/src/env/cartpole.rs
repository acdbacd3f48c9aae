//! Cart-pole balancing with two discrete push actions, Euler-integrated.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    pub tau: f64,
    pub angle_limit: f64,
    pub position_limit: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            tau: 0.02,
            angle_limit: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            position_limit: 2.4,
        }
    }
}

/// State `(x, ẋ, θ, θ̇)`; action 0 pushes left, 1 pushes right. Reward is
/// +1 per step, and the episode ends once `|x|` or `|θ|` exceeds its limit.
#[derive(Debug, Clone)]
pub struct CartPole {
    params: CartPoleParams,
    state: [f64; 4],
}

pub const CARTPOLE_ACTIONS: usize = 2;

pub fn make_cartpole_discrete(params: CartPoleParams) -> Result<CartPole> {
    let positive = [
        params.cart_mass,
        params.pole_mass,
        params.half_length,
        params.tau,
        params.angle_limit,
        params.position_limit,
    ];
    if positive.iter().any(|v| !(*v > 0.0)) || !(params.force >= 0.0) || !params.gravity.is_finite()
    {
        return Err(Error::InvalidGeometry(format!(
            "invalid cart-pole parameters {params:?}"
        )));
    }
    Ok(CartPole {
        params,
        state: [0.0; 4],
    })
}

impl CartPole {
    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        for v in &mut self.state {
            *v = rng.gen_range(-0.05..0.05);
        }
        self.state.to_vec()
    }

    pub fn reset_to(&mut self, state: [f64; 4]) -> Vec<f64> {
        self.state = state;
        state.to_vec()
    }

    fn out_of_bounds(&self) -> bool {
        self.state[0].abs() > self.params.position_limit
            || self.state[2].abs() > self.params.angle_limit
    }

    pub fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        if action >= CARTPOLE_ACTIONS {
            return Err(Error::InvalidAction {
                action,
                n_actions: CARTPOLE_ACTIONS,
            });
        }
        let p = &self.params;
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { p.force } else { -p.force };
        let total_mass = p.cart_mass + p.pole_mass;
        let pole_ml = p.pole_mass * p.half_length;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pole_ml * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (p.gravity * sin - cos * temp)
            / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pole_ml * theta_acc * cos / total_mass;
        self.state = [
            x + p.tau * x_dot,
            x_dot + p.tau * x_acc,
            theta + p.tau * theta_dot,
            theta_dot + p.tau * theta_acc,
        ];
        Ok((self.state.to_vec(), 1.0, self.out_of_bounds()))
    }
}
