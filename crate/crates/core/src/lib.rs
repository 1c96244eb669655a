//! Sector mixing, patch shuffling and adversarial spatial consistency for
//! face-forgery training data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advscm;
pub mod assignment;
pub mod bench;
pub mod cli;
pub mod clockmix;
pub mod config;
pub mod demo;
pub mod error;
pub mod geometry;
pub mod objectives;
pub mod pipeline;
pub mod shuffle;
pub mod verify;

pub use error::{Error, Result};
