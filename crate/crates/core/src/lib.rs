//! Color: a lightweight vectorized 2D mobile-robot simulator with per-copy
//! domain randomization, a partially decoupled actor/sharer/learner training
//! loop regulated by a time-feedback mechanism, and a Double-DQN learner.
//!
//! The crate is organized bottom-up:
//!
//! - [`map`] and [`mapgen`]: occupancy grids, the text map format, procedural maps.
//! - [`sim`]: a single simulator copy (kinematics, LiDAR, reward, state encoding).
//! - [`vec_env`]: N lockstep copies with auto-reset and arrival statistics.
//! - [`net`]: the Q-network MLP with exact backprop, Adam and checkpoints.
//! - [`replay`]: the FIFO transition store.
//! - [`ddqn`]: the Double-DQN update rule.
//! - [`asl`]: actor and learner loops, the sharer, TFM and VEM.
//! - [`harness`]: run configuration, metrics, training, evaluation, benchmarking.

pub mod asl;
pub mod ddqn;
pub mod error;
pub mod harness;
pub mod map;
pub mod mapgen;
pub mod net;
pub mod replay;
pub mod rng;
pub mod sim;
pub mod vec_env;

pub use error::{Error, Result};

/// Length of the encoded MDP state.
pub const STATE_DIM: usize = 32;
/// Number of discrete actions.
pub const N_ACTIONS: usize = 5;
/// Number of LiDAR beams in the state vector.
pub const N_BEAMS: usize = 27;
