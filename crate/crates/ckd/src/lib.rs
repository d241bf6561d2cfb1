//! Desk-scale laboratory for cascaded knowledge distillation of tiny
//! multimodal sequence models.

pub mod autodiff;
pub mod bounds;
pub mod cascade;
pub mod commands;
pub mod data;
pub mod eval;
pub mod error;
pub mod losses;
pub mod model;
pub mod pipeline;

pub use error::{Error, Result};
