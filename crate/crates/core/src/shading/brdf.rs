//! Metallic-roughness microfacet BRDF and tangent-space bump decoding.

use std::f64::consts::PI;

use super::real::{Real, V3};
use crate::material::FLAT_BUMP;

pub const MIN_ROUGHNESS: f64 = 0.03;
pub const DIELECTRIC_F0: f64 = 0.04;

/// Decodes a tangent-space bump texel and rotates it into the frame
/// `(tangent, bitangent, normal)`. The flat texel returns `normal` exactly; a
/// zero-length decode also falls back to `normal`.
pub fn perturb_normal<R: Real>(normal: [f64; 3], bump: [R; 3], tangent: [f64; 3], bitangent: [f64; 3]) -> V3<R> {
    let geo = V3::<R>::cst(normal);
    let nt = bump.map(|b| b.scale(2.0) - R::cst(1.0));
    let len2 = nt[0] * nt[0] + nt[1] * nt[1] + nt[2] * nt[2];
    if len2.value() < 1e-12 {
        return geo;
    }
    let len = len2.sqrt();
    let nt = nt.map(|c| c / len);
    let mut out = [R::cst(0.0); 3];
    for k in 0..3 {
        out[k] = nt[0].scale(tangent[k]) + nt[1].scale(bitangent[k]) + nt[2].scale(normal[k]);
    }
    let out = V3(out).normalize();
    if bump.map(|b| b.value()) == FLAT_BUMP {
        // same derivatives, exact geometric value
        return V3([
            out.0[0].with_value(normal[0]),
            out.0[1].with_value(normal[1]),
            out.0[2].with_value(normal[2]),
        ]);
    }
    out
}

/// Diffuse and specular parts of the BRDF, each per RGB channel.
pub fn eval_brdf_parts<R: Real>(albedo: [R; 3], roughness: R, metallic: R, n: &V3<R>, v: [f64; 3], l: [f64; 3]) -> ([R; 3], [R; 3]) {
    let zero = [R::cst(0.0); 3];
    let vv = V3::<R>::cst(v);
    let ll = V3::<R>::cst(l);
    let ndl = n.dot(&ll);
    let ndv = n.dot(&vv);
    if ndl.value() <= 0.0 || ndv.value() <= 0.0 {
        return (zero, zero);
    }
    let one = R::cst(1.0);
    let kd = (one - metallic).scale(1.0 / PI);
    let diffuse = albedo.map(|a| a * kd);

    let hs = [v[0] + l[0], v[1] + l[1], v[2] + l[2]];
    let hn = (hs[0] * hs[0] + hs[1] * hs[1] + hs[2] * hs[2]).sqrt();
    if hn < 1e-12 {
        return (diffuse, zero);
    }
    let h = hs.map(|c| c / hn);
    let ndh = n.dot(&V3::cst(h));
    let vdh = v[0] * h[0] + v[1] * h[1] + v[2] * h[2];
    let r = roughness.max_c(MIN_ROUGHNESS);
    let alpha = r * r;
    let a2 = alpha * alpha;
    let denom = ndh * ndh * (a2 - one) + one;
    let d = a2 / (denom * denom).scale(PI);
    let g = smith_g1(ndv, a2) * smith_g1(ndl, a2);
    let fw = (1.0 - vdh.clamp(0.0, 1.0)).powi(5);
    let spec_common = d * g / (ndl * ndv).scale(4.0);
    let mut spec = zero;
    for k in 0..3 {
        let f0 = R::cst(DIELECTRIC_F0) + (albedo[k] - R::cst(DIELECTRIC_F0)) * metallic;
        let f = f0 + (one - f0).scale(fw);
        spec[k] = (spec_common * f).max_c(0.0);
    }
    (diffuse.map(|c| c.max_c(0.0)), spec)
}

/// Separable Smith-GGX masking term.
fn smith_g1<R: Real>(ndx: R, alpha2: R) -> R {
    let one = R::cst(1.0);
    ndx.scale(2.0) / (ndx + (alpha2 + (one - alpha2) * ndx * ndx).sqrt())
}

/// Lambert diffuse plus GGX / Smith / Schlick specular, clamped non-negative.
pub fn eval_brdf<R: Real>(albedo: [R; 3], roughness: R, metallic: R, n: &V3<R>, v: [f64; 3], l: [f64; 3]) -> [R; 3] {
    let (d, s) = eval_brdf_parts(albedo, roughness, metallic, n, v, l);
    [d[0] + s[0], d[1] + s[1], d[2] + s[2]]
}

/// Plain-f64 convenience wrapper.
pub fn eval_brdf_f64(albedo: [f64; 3], roughness: f64, metallic: f64, n: [f64; 3], v: [f64; 3], l: [f64; 3]) -> [f64; 3] {
    eval_brdf(albedo, roughness, metallic, &V3(n), v, l)
}

/// Monte Carlo estimate of `∫ f cosθ dω` over the hemisphere around +z for
/// viewing direction `v`, using uniform hemisphere sampling. `brdf` receives
/// `(v, l)` with `n = +z`. Returns the mean over RGB.
pub fn hemisphere_albedo<F>(brdf: F, v: [f64; 3], samples: usize, rng: &mut impl rand::Rng) -> f64
where
    F: Fn([f64; 3], [f64; 3]) -> [f64; 3],
{
    let mut acc = 0.0;
    for _ in 0..samples {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = u1;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let phi = 2.0 * PI * u2;
        let l = [r * phi.cos(), r * phi.sin(), z];
        let f = brdf(v, l);
        acc += (f[0] + f[1] + f[2]) / 3.0 * z;
    }
    // pdf of uniform hemisphere sampling is 1 / (2π)
    acc * 2.0 * PI / samples as f64
}
