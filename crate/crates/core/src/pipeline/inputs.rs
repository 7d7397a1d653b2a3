//! Per-view input images: renders of an existing texture or material atlas,
//! and the procedural coarse texturer for texture-less meshes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::objects::{sample_region, ValueNoise, TAGS};
use crate::error::{Error, Result};
use crate::geometry::{rasterize_gbuffer, sample_atlas, Camera, Mesh};
use crate::grid::{Grid, RgbGrid};
use crate::material::{LightingScenario, MaterialSample, MaterialSet};
use crate::shading::{render, sample_lighting, LightCategory};

const COARSE_SALT: u64 = 0xC0A5_E7E4_7A6E_0001;
const INPUT_SALT: u64 = 0x1A9E_5EED_0000_0002;

/// Highlight exaggeration applied to the coarse texturer's point rigs.
pub const COARSE_POWER_BOOST: f64 = 1.5;

fn camera_dir(cam: &Camera) -> crate::geometry::Vec3 {
    cam.position.try_normalize(1e-12).unwrap_or_else(crate::geometry::Vec3::z)
}

/// Renders a tag-conditioned procedural texture (two palette regions split by
/// value noise, with noise-modulated shading detail) under a fresh, boosted
/// point rig per view. Deterministic per `(mesh, tag, seed)`.
pub fn coarse_texture(mesh: &Mesh, tag: usize, cameras: &[Camera], seed: u64) -> Result<Vec<RgbGrid>> {
    if tag >= TAGS.len() {
        return Err(Error::Argument(format!("tag id {tag} outside the vocabulary of {}", TAGS.len())));
    }
    mesh.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ COARSE_SALT);
    let regions = [sample_region(tag, &mut rng), sample_region(tag, &mut rng)];
    let split = ValueNoise::new(rng.random_range(3..=5), &mut rng);
    let detail = ValueNoise::new(12, &mut rng);
    let material_at = |uv: [f64; 2]| {
        let r = regions[(split.at(uv[0], uv[1]) > 0.5) as usize];
        let shade = 0.8 + 0.4 * detail.at(uv[0], uv[1]);
        MaterialSample {
            albedo: r.albedo.map(|a| (a * shade).clamp(0.0, 1.0)),
            roughness: r.roughness,
            metallic: r.metallic,
            bump: [0.5, 0.5, 1.0],
        }
    };
    cameras
        .iter()
        .map(|cam| {
            let g = rasterize_gbuffer(mesh, cam);
            let (w, h) = g.shape();
            let mats = MaterialSet::from_fn(w, h, |x, y| {
                let i = y * w + x;
                if g.coverage[i] {
                    material_at(g.uv[i])
                } else {
                    MaterialSample::background()
                }
            });
            let rig = sample_lighting(LightCategory::Point, &camera_dir(cam), &mut rng).scaled_power(COARSE_POWER_BOOST);
            render(&g, &mats, &rig)
        })
        .collect()
}

/// Unlit views of an RGB texture (row 0 is the top of the UV square).
pub fn images_from_texture(mesh: &Mesh, texture: &RgbGrid, cameras: &[Camera]) -> Result<Vec<RgbGrid>> {
    mesh.validate()?;
    Ok(cameras
        .iter()
        .map(|cam| {
            let g = rasterize_gbuffer(mesh, cam);
            let (w, h) = g.shape();
            Grid::from_fn(w, h, |x, y| {
                let i = y * w + x;
                if g.coverage[i] {
                    texture.sample_bilinear(g.uv[i][0], 1.0 - g.uv[i][1])
                } else {
                    [0.0; 3]
                }
            })
        })
        .collect())
}

/// Views of a material atlas as the scenario would present them: one
/// physically plausible rig shared by all views (realistic), albedo only
/// (light-free), or an independent point rig per view (generated).
pub fn images_from_materials(
    mesh: &Mesh,
    atlas: &MaterialSet,
    occupancy: &Grid<bool>,
    scenario: LightingScenario,
    cameras: &[Camera],
    seed: u64,
) -> Result<Vec<RgbGrid>> {
    mesh.validate()?;
    occupancy.ensure_shape(atlas.shape(), "atlas occupancy")?;
    let first = cameras
        .first()
        .ok_or_else(|| Error::Argument("at least one camera required".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INPUT_SALT);
    let shared = {
        let cat = [LightCategory::Point, LightCategory::Area, LightCategory::Environment][rng.random_range(0..3)];
        sample_lighting(cat, &camera_dir(first), &mut rng)
    };
    cameras
        .iter()
        .map(|cam| {
            let g = rasterize_gbuffer(mesh, cam);
            let mats = sample_atlas(atlas, occupancy, &g);
            let rig = match scenario {
                LightingScenario::Realistic => shared.clone(),
                LightingScenario::LightFree => crate::shading::LightingRig::none(),
                LightingScenario::Generated => sample_lighting(LightCategory::Point, &camera_dir(cam), &mut rng),
            };
            render(&g, &mats, &rig)
        })
        .collect()
}
