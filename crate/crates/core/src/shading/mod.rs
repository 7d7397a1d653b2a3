//! Differentiable physically based shading under point, area, environment
//! and no lighting.

pub mod brdf;
pub mod lighting;
pub mod real;
pub mod render;

pub use brdf::{eval_brdf, eval_brdf_f64, hemisphere_albedo, perturb_normal};
pub use lighting::{sample_lighting, AreaLight, LightCategory, LightingRig, PointLight};
pub use real::{Jet, Real, V3};
pub use render::{relight, render, render_backward, render_with_jacobian, PixelJacobian, RADIANCE_PER_WATT};
