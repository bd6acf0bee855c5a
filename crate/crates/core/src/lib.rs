//! Multi-agent Markov model of turn-taking and group silence.
//!
//! Each of `N` agents is either silent or speaking. At every step agent `i`
//! speaks with probability `(1 - alpha - beta) S_i + alpha`, where `S_i` is
//! the weighted fraction of speakers it listens to. The Café weights put
//! `theta` on an agent's own state and spread the rest evenly, and the
//! stationary law of the speaker count is approximated in closed form by
//! [`analytic::f_theta`].
//!
//! ```
//! use cafe_theta::{analytic, engine, weights, ModelParams};
//!
//! let params = ModelParams::new(8, 0.05, 0.05, 0.5).unwrap();
//! let w = weights::make_cafe_weights(8, 0.5).unwrap();
//! let traj = engine::simulate(&params, &w, &engine::SimConfig::new(1000, 7)).unwrap();
//! assert_eq!(traj.counts.len(), 1000);
//!
//! let f = analytic::f_theta(&params);
//! assert!((f.total() - 1.0).abs() < 1e-9);
//! ```

pub mod analytic;
pub mod audio;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod fitting;
pub mod optimize;
pub mod params;
pub mod rng;
pub mod silence;
pub mod special;
pub mod weights;

pub use error::{Error, Result};
pub use params::ModelParams;
