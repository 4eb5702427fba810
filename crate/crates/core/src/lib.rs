//! Core library for the symbolic distillation pipeline.
//!
//! The pipeline has four stages: simulate particle systems under known
//! force laws ([`sim`]), train message-passing graph networks with
//! sparsity-inducing biases ([`graphnet`], [`flathgn`]) on top of a small
//! reverse-mode autodiff engine ([`nn`]), check that learned messages are
//! linear images of the true forces ([`probe`]), and distill the learned
//! internal functions into closed-form expressions with a genetic-programming
//! symbolic regression engine ([`symreg`], [`distill`]). The [`cosmo`]
//! module evaluates and refits discovered dark-matter overdensity formulas
//! on halo catalogs.

pub mod cosmo;
pub mod distill;
pub mod flathgn;
pub mod graphnet;
pub mod nn;
pub mod opt;
pub mod probe;
pub mod sim;
pub mod symreg;

mod rng;

pub use rng::derive_rng;
