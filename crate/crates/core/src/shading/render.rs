//! Deferred shading of G-buffers, with exact per-pixel material Jacobians.

use std::f64::consts::PI;

use super::brdf::{eval_brdf, perturb_normal};
use super::lighting::{LightCategory, LightingRig, PointLight};
use super::real::{Jet, Real, V3};
use crate::error::{Error, Result};
use crate::geometry::{rasterize_gbuffer, Camera, GBuffer, Mesh};
use crate::grid::{Grid, Rgb, RgbGrid};
use crate::material::{MaterialSet, MATERIAL_CHANNELS};

/// Radiance scale applied to `P / (4π d²)` for a point emitter of `P` watts.
pub const RADIANCE_PER_WATT: f64 = 1.0;

/// Derivatives of the three output channels with respect to the eight material
/// channels (albedo rgb, roughness, metallic, bump rgb).
pub type PixelJacobian = [[f64; MATERIAL_CHANNELS]; 3];

fn shade<R: Real>(m: [R; MATERIAL_CHANNELS], gbuf: &GBuffer, i: usize, rig: &LightingRig, emitters: &[PointLight]) -> [R; 3] {
    let albedo = [m[0], m[1], m[2]];
    if rig.category == LightCategory::None {
        return albedo;
    }
    let n = perturb_normal(
        gbuf.normal[i].into(),
        [m[5], m[6], m[7]],
        gbuf.tangent[i].into(),
        gbuf.bitangent[i].into(),
    );
    let p = gbuf.position[i];
    let mut out = [R::cst(0.0); 3];
    if rig.category == LightCategory::Environment {
        let ramp = (n.0[2].scale(0.5) + R::cst(0.5)).scale(rig.env_strength);
        for k in 0..3 {
            out[k] = (albedo[k] * ramp).max_c(0.0);
        }
        return out;
    }
    let v = (gbuf.camera.position - p).normalize();
    for e in emitters {
        let dvec = e.position - p;
        let d2 = dvec.norm_squared();
        if d2 < 1e-12 {
            continue;
        }
        let l = dvec / d2.sqrt();
        let ndl = n.dot(&V3::cst(l.into()));
        if ndl.value() <= 0.0 {
            continue;
        }
        let f = eval_brdf(albedo, m[3], m[4], &n, v.into(), l.into());
        let irr = ndl.scale(RADIANCE_PER_WATT * e.power / (4.0 * PI * d2));
        for k in 0..3 {
            out[k] += f[k] * irr;
        }
    }
    out
}

fn check_shapes(gbuf: &GBuffer, materials: &MaterialSet) -> Result<()> {
    if gbuf.shape() != materials.shape() {
        return Err(Error::Dimension {
            what: "render materials",
            expected: gbuf.shape(),
            found: materials.shape(),
        });
    }
    Ok(())
}

/// Linear-RGB render; uncovered pixels are black.
pub fn render(gbuf: &GBuffer, materials: &MaterialSet, rig: &LightingRig) -> Result<RgbGrid> {
    check_shapes(gbuf, materials)?;
    let emitters = rig.emitters();
    let (w, h) = gbuf.shape();
    let mut img = Grid::filled(w, h, [0.0; 3]);
    for i in 0..w * h {
        if gbuf.coverage[i] {
            img[i] = shade(materials.get_index(i).to_channels(), gbuf, i, rig, &emitters);
        }
    }
    Ok(img)
}

/// Render together with the per-pixel Jacobian of each output channel with
/// respect to that pixel's material channels (shading is pixel-local).
pub fn render_with_jacobian(gbuf: &GBuffer, materials: &MaterialSet, rig: &LightingRig) -> Result<(RgbGrid, Grid<PixelJacobian>)> {
    check_shapes(gbuf, materials)?;
    let emitters = rig.emitters();
    let (w, h) = gbuf.shape();
    let mut img = Grid::filled(w, h, [0.0; 3]);
    let mut jac = Grid::filled(w, h, [[0.0; MATERIAL_CHANNELS]; 3]);
    for i in 0..w * h {
        if !gbuf.coverage[i] {
            continue;
        }
        let c = materials.get_index(i).to_channels();
        let vars: [Jet<MATERIAL_CHANNELS>; MATERIAL_CHANNELS] = std::array::from_fn(|k| Jet::var(c[k], k));
        let out = shade(vars, gbuf, i, rig, &emitters);
        img[i] = out.map(|o| o.v);
        jac[i] = out.map(|o| o.d);
    }
    Ok((img, jac))
}

/// Chain rule through the render: material-channel gradients from image gradients.
pub fn render_backward(jac: &Grid<PixelJacobian>, grad_image: &RgbGrid) -> Result<Grid<[f64; MATERIAL_CHANNELS]>> {
    jac.zip_map(grad_image, |j, g| {
        let mut out = [0.0; MATERIAL_CHANNELS];
        for (row, gk) in j.iter().zip(g) {
            for c in 0..MATERIAL_CHANNELS {
                out[c] += row[c] * gk;
            }
        }
        out
    })
}

/// Renders a textured mesh: rasterizes the view, samples the UV atlas
/// bilinearly at each covered pixel and shades the result.
pub fn relight(mesh: &Mesh, uv_materials: &MaterialSet, rig: &LightingRig, cam: &Camera) -> Result<RgbGrid> {
    mesh.validate()?;
    let g = rasterize_gbuffer(mesh, cam);
    let all = Grid::filled(uv_materials.width(), uv_materials.height(), true);
    let mats = crate::geometry::sample_atlas(uv_materials, &all, &g);
    render(&g, &mats, rig)
}

/// Luminance used for profile comparisons.
pub fn luminance(c: &Rgb) -> f64 {
    0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]
}
