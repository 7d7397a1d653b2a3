//! UV-space hole completion and the cross-view consistency metric.

use rand::Rng;

use super::paint::ViewRecord;
use crate::diffusion::cond::RefinerConditioning;
use crate::diffusion::{sample, Denoiser, NoiseSchedule};
use crate::error::Result;
use crate::geometry::pullpush;
use crate::grid::{uv_to_texel, Grid, RgbGrid};
use crate::material::{MaterialSample, MaterialSet, MATERIAL_CHANNELS};

/// Width in texels of the band inside holes that is feathered toward the
/// pull-push interpolation of the surrounding known texels.
pub const FEATHER_TEXELS: usize = 2;

/// Chebyshev distance (capped at `FEATHER_TEXELS + 1`) from each hole texel to
/// the nearest occupied non-hole texel.
fn hole_distance(holes: &Grid<bool>, occupancy: &Grid<bool>) -> Grid<usize> {
    let (w, h) = holes.shape();
    let r = FEATHER_TEXELS as isize;
    Grid::from_fn(w, h, |x, y| {
        if !holes[(x, y)] {
            return 0;
        }
        let mut best = FEATHER_TEXELS + 1;
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if occupancy[(nx, ny)] && !holes[(nx, ny)] {
                    best = best.min(dx.unsigned_abs().max(dy.unsigned_abs()));
                }
            }
        }
        best
    })
}

/// Completes the holes of a coarse atlas with the refiner. Occupied texels
/// outside the hole mask keep their coarse values exactly, unoccupied texels
/// are zeroed, and hole texels within [`FEATHER_TEXELS`] of known texels are
/// blended toward a pull-push interpolation to soften seams.
#[allow(clippy::too_many_arguments)]
pub fn refine_uv(
    coarse: &MaterialSet,
    holes: &Grid<bool>,
    ccm: &RgbGrid,
    occupancy: &Grid<bool>,
    tag: usize,
    model: &Denoiser,
    sched: &NoiseSchedule,
    n_steps: usize,
    rng: &mut impl Rng,
) -> Result<MaterialSet> {
    let shape = coarse.shape();
    holes.ensure_shape(shape, "hole mask")?;
    ccm.ensure_shape(shape, "ccm")?;
    occupancy.ensure_shape(shape, "occupancy")?;
    let (w, h) = shape;
    let zero = MaterialSample::from_channels(&[0.0; MATERIAL_CHANNELS]);
    let is_hole = |i: usize| holes[i] && occupancy[i];
    let known = Grid::from_fn(w, h, |x, y| occupancy[(x, y)] && !holes[(x, y)]);

    let mut out = MaterialSet::from_fn(w, h, |x, y| if known[(x, y)] { coarse.get(x, y) } else { zero });
    if !(0..w * h).any(is_hole) {
        return Ok(out);
    }
    let cond_materials = MaterialSet::from_fn(w, h, |x, y| {
        if known[(x, y)] {
            coarse.get(x, y)
        } else if occupancy[(x, y)] {
            zero
        } else {
            MaterialSample::background()
        }
    });
    let cond = RefinerConditioning {
        materials: cond_materials,
        holes: Grid::from_fn(w, h, |x, y| holes[(x, y)] && occupancy[(x, y)]),
        ccm: ccm.clone(),
        tag,
    }
    .to_tensor()?;
    let sampled = sample(model, &cond, &[tag], sched, n_steps, rng, None)?.remove(0);

    let values = Grid::from_fn(w, h, |x, y| coarse.get(x, y).to_channels());
    let smooth = pullpush(&values, &known);
    let dist = hole_distance(holes, occupancy);
    for i in 0..w * h {
        if !is_hole(i) {
            continue;
        }
        let s = sampled.get_index(i).to_channels();
        let c = match (&smooth, dist[i]) {
            (Some(pp), d) if d <= FEATHER_TEXELS => {
                let a = d as f64 / (FEATHER_TEXELS + 1) as f64;
                std::array::from_fn(|k| a * s[k] + (1.0 - a) * pp[i][k])
            }
            _ => s,
        };
        out.set_index(i, MaterialSample::from_channels(&c));
    }
    Ok(out)
}

/// Per-channel cross-view standard deviation averaged over texels seen by at
/// least two views. Each view contributes the mean of its covered pixels that
/// land in a texel. `None` when no texel is shared.
pub fn consistency_per_channel(views: &[ViewRecord], uv_res: usize) -> Option<[f64; MATERIAL_CHANNELS]> {
    let n_tex = uv_res * uv_res;
    // per texel: list of per-view means
    let mut samples: Vec<Vec<[f64; MATERIAL_CHANNELS]>> = vec![Vec::new(); n_tex];
    for rec in views {
        let mut acc = vec![([0.0; MATERIAL_CHANNELS], 0usize); n_tex];
        for i in 0..rec.gbuf.coverage.len() {
            if !rec.gbuf.coverage[i] {
                continue;
            }
            let (x, y) = uv_to_texel(rec.gbuf.uv[i], uv_res, uv_res);
            let slot = &mut acc[y * uv_res + x];
            let c = rec.materials.get_index(i).to_channels();
            slot.1 += 1;
            // running mean stays exact when all samples agree
            for k in 0..MATERIAL_CHANNELS {
                slot.0[k] += (c[k] - slot.0[k]) / slot.1 as f64;
            }
        }
        for (t, (mean, n)) in acc.into_iter().enumerate() {
            if n > 0 {
                samples[t].push(mean);
            }
        }
    }
    let mut total = [0.0; MATERIAL_CHANNELS];
    let mut shared = 0usize;
    for s in samples.iter().filter(|s| s.len() >= 2) {
        let n = s.len() as f64;
        for k in 0..MATERIAL_CHANNELS {
            let mean = s.iter().enumerate().fold(0.0, |m, (j, c)| m + (c[k] - m) / (j + 1) as f64);
            let var = s.iter().map(|c| (c[k] - mean).powi(2)).sum::<f64>() / n;
            total[k] += var.sqrt();
        }
        shared += 1;
    }
    (shared > 0).then(|| total.map(|t| t / shared as f64))
}

/// Mean over channels of [`consistency_per_channel`].
pub fn consistency_metric(views: &[ViewRecord], uv_res: usize) -> Option<f64> {
    consistency_per_channel(views, uv_res).map(|c| c.iter().sum::<f64>() / MATERIAL_CHANNELS as f64)
}
