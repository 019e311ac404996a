//! Partially identified bounds on the population average treatment effect
//! when a randomized trial's sample self-selected from a known population.
//!
//! The pipeline is: load a [`frame::StudyFrame`], fit the selection model
//! ([`propensity`]), stratify on its logits ([`stratify`]), choose λ
//! ([`lambda`]), compute intervals ([`bounds`]) and point estimates
//! ([`points`]). [`oracle`] checks the closed forms by enumeration;
//! [`analysis`] and [`render`] assemble and print full reports.

// `!(x >= 0.0)` guards reject NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bounds;
pub mod config;
pub mod error;
pub mod frame;
pub mod lambda;
pub mod oracle;
pub mod points;
pub mod propensity;
pub mod render;
pub mod stratify;
pub mod synth;

pub use error::{Error, Result};
