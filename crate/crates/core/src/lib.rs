//! Deep Q-learning with periodic least-squares re-solves of the last layer.
//!
//! The online learner ([`dqn`]) trains a small MLP ([`net`]) from replay.
//! Every few thousand steps [`lsdqn::run`] regenerates penultimate-layer
//! features on a replay snapshot and replaces the last layer by a regularized
//! LSTD-Q or FQI solution ([`srl`]) anchored to the current weights.
//!
//! The numeric core ([`linalg`], [`net`], [`optim`]) is generic over
//! [`Scalar`]; the aliases below fix it to `f64`.

pub mod config;
pub mod dqn;
pub mod env;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lsdqn;
pub mod net;
pub mod optim;
pub mod replay;
pub mod rng;
mod scalar;
pub mod srl;
pub mod stats;

pub use config::Config;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type QNetwork = net::QNetwork<f64>;
pub type Gradients = net::Gradients<f64>;
pub type AdamState = optim::AdamState<f64>;
pub type RmsPropState = optim::RmsPropState<f64>;
