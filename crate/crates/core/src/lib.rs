//! Joint fitting of an articulated body and a rigid object template to
//! unsigned distance, part-correspondence and object-pose fields, with
//! contact reasoning and depth-aware perspective scaling.

pub mod body;
pub mod error;
pub mod fields;
pub mod fitting;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod scaling;
pub mod scene;
pub mod so3;

pub use error::{Error, Result};
