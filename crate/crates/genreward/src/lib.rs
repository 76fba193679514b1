//! Generative goal-video rewards for a pixel gridworld agent.
//!
//! The pipeline: scripted experts produce goal-reaching videos; a small
//! autoencoder compresses frames into latent videos; a denoising diffusion
//! model learns to generate goal videos conditioned on a task token and the
//! first observation; a two-tower scorer picks the goal frame out of a
//! generated video; a forward-backward (FB) representation turns that goal
//! frame into a frame-level reward; and a composed reward
//! r = alpha * r_video + beta * r_fb + r_env drives a double Q-learning agent.
//!
//! Everything is verifiable at desk scale: `oracle` holds exact tabular
//! machinery (successor measures by linear solve, value iteration) that the
//! learned FB representation is checked against, and every loss exposes
//! analytic gradients validated by central finite differences.

pub mod agent;
pub mod error;
pub mod fb_rep;
pub mod frame_scorer;
pub mod goal_diffusion;
pub mod gridworld;
pub mod harness;
pub mod numcore;
pub mod oracle;
pub mod reward_engine;
pub mod seq_encoder;

pub use error::{Error, Result};
