//! Multi-view baking into a UV atlas, re-projection of baked texels into new
//! views, and pull-push hole filling.

use super::camera::Camera;
use super::mesh::Vec3;
use super::raster::GBuffer;
use super::uvspace::UvSurface;
use crate::error::{Error, Result};
use crate::grid::{bilinear_axis, Grid};
use crate::material::{MaterialSample, MaterialSet, MATERIAL_CHANNELS};

/// Minimum depth agreement (scene units) between a texel's projected depth and
/// the G-buffer before the view may write it.
pub const BAKE_DEPTH_TOLERANCE: f64 = 0.04;

/// Depth slack for a surface seen at view cosine `cos`: a pixel footprint grows
/// by `1/cos` along the surface, so the admissible depth spread does too.
fn depth_tolerance(cam: &Camera, depth: f64, cos: f64) -> f64 {
    let footprint = 2.0 * depth / (cam.focal() * cam.height as f64);
    (2.0 * footprint / cos.max(0.05)).clamp(BAKE_DEPTH_TOLERANCE, 0.5)
}

type Channels = [f64; MATERIAL_CHANNELS];

/// UV-space accumulator: the winning material per texel, the view-angle cosine
/// it was written with, and the known flag (`weight > 0`).
#[derive(Debug, Clone)]
pub struct BakeState {
    pub materials: MaterialSet,
    pub weight: Grid<f64>,
    pub known: Grid<bool>,
    pub surface: UvSurface,
}

impl BakeState {
    pub fn new(surface: UvSurface) -> Self {
        let (w, h) = surface.shape();
        Self {
            materials: MaterialSet::filled(w, h, MaterialSample::background()),
            weight: Grid::filled(w, h, 0.0),
            known: Grid::filled(w, h, false),
            surface,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.known.shape()
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    /// Fraction of occupied texels that are known.
    pub fn known_fraction(&self) -> f64 {
        let occ = self.surface.occupied_count();
        if occ == 0 {
            return 0.0;
        }
        let known = self
            .known
            .iter()
            .zip(self.surface.occupancy.iter())
            .filter(|(&k, &o)| k && o)
            .count();
        known as f64 / occ as f64
    }

    /// Fraction of occupied texels still unknown.
    pub fn hole_fraction(&self) -> f64 {
        if self.surface.occupied_count() == 0 {
            return 0.0;
        }
        1.0 - self.known_fraction()
    }

    /// Occupied texels that are not known.
    pub fn hole_mask(&self) -> Grid<bool> {
        self.surface
            .occupancy
            .zip_map(&self.known, |&o, &k| o && !k)
            .expect("bake grids share shape")
    }

    /// Marks every texel known with the given materials, bypassing the weights
    /// (used to seed a bake from an existing atlas).
    pub fn from_atlas(surface: UvSurface, atlas: &MaterialSet) -> Result<Self> {
        if atlas.shape() != surface.shape() {
            return Err(Error::Dimension {
                what: "atlas",
                expected: surface.shape(),
                found: atlas.shape(),
            });
        }
        let (w, h) = surface.shape();
        Ok(Self {
            materials: atlas.clone(),
            weight: Grid::filled(w, h, 1.0),
            known: Grid::filled(w, h, true),
            surface,
        })
    }
}

/// Bilinear lookup of `gbuf`-aligned view materials at pixel position `(px, py)`
/// using only covered pixels whose depth agrees with `depth`.
fn gather_view(view: &MaterialSet, gbuf: &GBuffer, px: f64, py: f64, depth: f64, tol: f64) -> Option<Channels> {
    let (w, h) = gbuf.shape();
    let (x0, x1, fx) = bilinear_axis(px, w);
    let (y0, y1, fy) = bilinear_axis(py, h);
    let mut acc = [0.0; MATERIAL_CHANNELS];
    let mut wsum = 0.0;
    for (x, y, wt) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ] {
        let i = y * w + x;
        if wt <= 0.0 || !gbuf.coverage[i] || (gbuf.depth[i] - depth).abs() > tol {
            continue;
        }
        let c = view.get_index(i).to_channels();
        for k in 0..MATERIAL_CHANNELS {
            acc[k] += wt * c[k];
        }
        wsum += wt;
    }
    if wsum <= 1e-9 {
        return None;
    }
    Some(acc.map(|a| (a / wsum).clamp(0.0, 1.0)))
}

/// Bakes one view into the atlas. Every occupied texel is projected into the
/// view; if the nearest pixel is covered at a matching depth, the texel's
/// weight is `max(0, n . v)` and it is overwritten only when that weight beats
/// the stored one.
pub fn bake_view_to_uv(view_materials: &MaterialSet, gbuf: &GBuffer, bake: &mut BakeState) -> Result<()> {
    if view_materials.shape() != gbuf.shape() {
        return Err(Error::Dimension {
            what: "view materials",
            expected: gbuf.shape(),
            found: view_materials.shape(),
        });
    }
    let cam = &gbuf.camera;
    let (w, h) = gbuf.shape();
    let surf = &bake.surface;
    for i in 0..surf.occupancy.len() {
        if !surf.occupancy[i] {
            continue;
        }
        let p = surf.position[i];
        let v: Vec3 = (cam.position - p).normalize();
        let weight = surf.normal[i].dot(&v).max(0.0);
        if weight <= bake.weight[i] {
            continue;
        }
        let Some((px, py, depth)) = cam.project(&p) else { continue };
        if px < 0.0 || py < 0.0 || px >= w as f64 || py >= h as f64 {
            continue;
        }
        let tol = depth_tolerance(cam, depth, weight);
        let Some(c) = gather_view(view_materials, gbuf, px, py, depth, tol) else { continue };
        bake.materials.set_index(i, MaterialSample::from_channels(&c));
        bake.weight[i] = weight;
        bake.known[i] = true;
    }
    Ok(())
}

/// How far (in texels) re-projection looks for a known texel when none of the
/// bilinear taps is known.
pub const PROJECT_SEARCH_RADIUS: usize = 2;

fn nearest_known(bake: &BakeState, tx: f64, ty: f64, radius: usize) -> Option<usize> {
    let (uw, uh) = bake.shape();
    let cx = (tx.floor().max(0.0) as usize).min(uw - 1);
    let cy = (ty.floor().max(0.0) as usize).min(uh - 1);
    let mut best: Option<(f64, usize)> = None;
    for y in cy.saturating_sub(radius)..=(cy + radius).min(uh - 1) {
        for x in cx.saturating_sub(radius)..=(cx + radius).min(uw - 1) {
            let t = y * uw + x;
            if !bake.known[t] {
                continue;
            }
            let d = (x as f64 + 0.5 - tx).powi(2) + (y as f64 + 0.5 - ty).powi(2);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, t));
            }
        }
    }
    best.map(|(_, t)| t)
}

/// Re-projects known atlas texels into a view. Returns the view-space
/// materials (mid-gray where unknown) and the known mask.
pub fn project_known(bake: &BakeState, gbuf: &GBuffer) -> (MaterialSet, Grid<bool>) {
    let (w, h) = gbuf.shape();
    let (uw, uh) = bake.shape();
    let mut out = MaterialSet::filled(w, h, MaterialSample::uniform(0.5));
    let mut known = Grid::filled(w, h, false);
    for i in 0..w * h {
        if !gbuf.coverage[i] {
            continue;
        }
        let uv = gbuf.uv[i];
        let (tx, ty) = (uv[0] * uw as f64, (1.0 - uv[1]) * uh as f64);
        let (x0, x1, fx) = bilinear_axis(tx, uw);
        let (y0, y1, fy) = bilinear_axis(ty, uh);
        let mut acc = [0.0; MATERIAL_CHANNELS];
        let mut wsum = 0.0;
        let mut any = false;
        for (x, y, wt) in [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ] {
            let t = y * uw + x;
            if !bake.known[t] {
                continue;
            }
            any = true;
            let c = bake.materials.get_index(t).to_channels();
            for k in 0..MATERIAL_CHANNELS {
                acc[k] += wt * c[k];
            }
            wsum += wt;
        }
        let c = if wsum > 1e-12 {
            acc.map(|a| a / wsum)
        } else if let Some(t) = nearest_known(bake, tx, ty, if any { 1 } else { PROJECT_SEARCH_RADIUS }) {
            // texel centers near chart borders can fall outside every triangle;
            // the closest known texel stands in for the missing taps
            bake.materials.get_index(t).to_channels()
        } else {
            continue;
        };
        out.set_index(i, MaterialSample::from_channels(&c));
        known[i] = true;
    }
    (out, known)
}

/// Pull-push interpolation over a channel grid: `known` texels keep their
/// values, the rest receive a convex combination of known values from coarser
/// pyramid levels. Returns `None` if nothing is known.
pub fn pullpush<const C: usize>(values: &Grid<[f64; C]>, known: &Grid<bool>) -> Option<Grid<[f64; C]>> {
    let (w, h) = values.shape();
    if !known.iter().any(|&k| k) {
        return None;
    }
    let mut levels: Vec<(Grid<[f64; C]>, Grid<f64>)> = vec![(
        values.clone(),
        known.map(|&k| if k { 1.0 } else { 0.0 }),
    )];
    // pull
    while {
        let (lw, lh) = levels.last().unwrap().0.shape();
        lw > 1 || lh > 1
    } {
        let (cv, cw) = levels.last().unwrap();
        let (lw, lh) = cv.shape();
        let (nw, nh) = (lw.div_ceil(2), lh.div_ceil(2));
        let mut nv = Grid::filled(nw, nh, [0.0; C]);
        let mut nwt = Grid::filled(nw, nh, 0.0);
        for y in 0..nh {
            for x in 0..nw {
                let mut acc = [0.0; C];
                let mut ws = 0.0;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (sx, sy) = (2 * x + dx, 2 * y + dy);
                    if sx >= lw || sy >= lh {
                        continue;
                    }
                    let wt = cw[(sx, sy)];
                    if wt > 0.0 {
                        let v = cv[(sx, sy)];
                        for k in 0..C {
                            acc[k] += wt * v[k];
                        }
                        ws += wt;
                    }
                }
                if ws > 0.0 {
                    nv[(x, y)] = acc.map(|a| a / ws);
                    nwt[(x, y)] = ws.min(1.0);
                }
            }
        }
        levels.push((nv, nwt));
    }
    // push
    for l in (0..levels.len() - 1).rev() {
        let (coarse, _) = levels[l + 1].clone();
        let (cw, ch) = coarse.shape();
        let (fine, fw) = &mut levels[l];
        let (lw, lh) = fine.shape();
        for y in 0..lh {
            for x in 0..lw {
                let wt = fw[(x, y)];
                if wt >= 1.0 {
                    continue;
                }
                let cx = (x as f64 + 0.5) * cw as f64 / lw as f64;
                let cy = (y as f64 + 0.5) * ch as f64 / lh as f64;
                let (x0, x1, ax) = bilinear_axis(cx, cw);
                let (y0, y1, ay) = bilinear_axis(cy, ch);
                let a = coarse[(x0, y0)];
                let b = coarse[(x1, y0)];
                let c = coarse[(x0, y1)];
                let d = coarse[(x1, y1)];
                let f = fine[(x, y)];
                let mut out = [0.0; C];
                for k in 0..C {
                    let up = (1.0 - ay) * ((1.0 - ax) * a[k] + ax * b[k]) + ay * ((1.0 - ax) * c[k] + ax * d[k]);
                    out[k] = wt * f[k] + (1.0 - wt) * up;
                }
                fine[(x, y)] = out;
                fw[(x, y)] = 1.0;
            }
        }
    }
    let mut result = levels.swap_remove(0).0;
    // known texels are returned untouched, bit for bit
    for i in 0..w * h {
        if known[i] {
            result[i] = values[i];
        }
    }
    Some(result)
}

/// Fills unknown-but-occupied texels of the bake by pull-push; known texels are
/// kept, unoccupied texels are zeroed. With no known texels at all, every
/// occupied texel becomes mid-gray.
pub fn pullpush_fill(bake: &BakeState, occupancy: &Grid<bool>) -> MaterialSet {
    let (w, h) = bake.shape();
    let values = Grid::from_fn(w, h, |x, y| bake.materials.get(x, y).to_channels());
    let filled = match pullpush(&values, &bake.known) {
        Some(f) => f,
        None => {
            log::warn!("pull-push fill: no known texels, filling occupied region with mid-gray");
            Grid::filled(w, h, [0.5; MATERIAL_CHANNELS])
        }
    };
    MaterialSet::from_fn(w, h, |x, y| {
        if occupancy[(x, y)] {
            MaterialSample::from_channels(&filled[(x, y)])
        } else {
            MaterialSample::from_channels(&[0.0; MATERIAL_CHANNELS])
        }
    })
}

/// View-space materials looked up from a UV atlas through the G-buffer's UVs,
/// restricted to occupied atlas texels. Uncovered pixels get the background
/// sample.
pub fn sample_atlas(atlas: &MaterialSet, occupancy: &Grid<bool>, gbuf: &GBuffer) -> MaterialSet {
    let (w, h) = gbuf.shape();
    let mut out = MaterialSet::filled(w, h, MaterialSample::background());
    let everything = Grid::filled(atlas.width(), atlas.height(), true);
    for i in 0..w * h {
        if gbuf.coverage[i] {
            let m = atlas
                .sample_uv_masked(gbuf.uv[i], occupancy)
                .or_else(|| atlas.sample_uv_masked(gbuf.uv[i], &everything))
                .expect("unmasked lookup always has weight");
            out.set_index(i, m);
        }
    }
    out
}
