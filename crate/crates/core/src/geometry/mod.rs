//! Meshes, cameras, rasterization and UV baking.

pub mod bake;
pub mod camera;
pub mod mesh;
pub mod raster;
pub mod uvspace;

pub use bake::{bake_view_to_uv, project_known, pullpush, pullpush_fill, sample_atlas, BakeState};
pub use camera::{camera_ring, Camera};
pub use mesh::{cube, cylinder, load_mesh, parse_obj, plane, torus, uv_sphere, LoadedMesh, Mesh, Triangle, Vec3};
pub use raster::{rasterize_gbuffer, GBuffer};
pub use uvspace::{compute_ccm_uv, UvSurface};
