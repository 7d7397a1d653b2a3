//! Progressive multi-view material painting of a mesh, UV baking and refinement.

pub mod inputs;
pub mod job;
pub mod paint;
pub mod refine;

pub use inputs::{coarse_texture, images_from_materials, images_from_texture};
pub use job::{parse_tag, JobSpec, JOB_KEYS};
pub use paint::{
    latent_blend, paint_object, paint_object_observed, paint_view, paint_view_traced, BlendTrace, PaintJob, PaintOutput,
    PaintReport, ViewRecord,
};
pub use refine::{consistency_metric, consistency_per_channel, refine_uv, FEATHER_TEXELS};
