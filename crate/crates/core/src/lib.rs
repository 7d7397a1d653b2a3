//! Physically based material generation for meshes: material tensors,
//! rasterization and baking, differentiable shading, a procedural training
//! corpus, a small v-prediction denoiser and the progressive painting loop.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod kv;
pub mod material;
pub mod shading;
pub mod dataset;
pub mod diffusion;
pub mod pipeline;

pub use error::{Error, Result};
