//! Rasterization of a mesh into its own UV atlas: per-texel surface point,
//! normal, canonical coordinates and occupancy.

use super::mesh::{Mesh, Vec3};
use super::raster::ccm_of;
use crate::grid::{texel_center_uv, Grid, RgbGrid};

/// Surface attributes resolved per atlas texel. Unoccupied texels hold zeros.
#[derive(Debug, Clone)]
pub struct UvSurface {
    pub occupancy: Grid<bool>,
    pub position: Grid<Vec3>,
    pub normal: Grid<Vec3>,
    pub ccm: Grid<Vec3>,
    /// Triangles skipped because their UV footprint has (near) zero area.
    pub degenerate: usize,
}

impl UvSurface {
    pub fn width(&self) -> usize {
        self.occupancy.width()
    }

    pub fn height(&self) -> usize {
        self.occupancy.height()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.occupancy.shape()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn ccm_rgb(&self) -> RgbGrid {
        self.ccm.map(|c| [c.x, c.y, c.z])
    }
}

/// Rasterizes every triangle into a `width x height` atlas. A texel is occupied
/// when its center lies inside (or on the edge of) a UV triangle; the first
/// triangle to claim a texel keeps it.
pub fn compute_ccm_uv(mesh: &Mesh, width: usize, height: usize) -> UvSurface {
    let mut s = UvSurface {
        occupancy: Grid::filled(width, height, false),
        position: Grid::filled(width, height, Vec3::zeros()),
        normal: Grid::filled(width, height, Vec3::zeros()),
        ccm: Grid::filled(width, height, Vec3::zeros()),
        degenerate: 0,
    };
    for tri in &mesh.triangles {
        let uv = tri.uv.map(|i| mesh.uvs[i]);
        let p = tri.pos.map(|i| mesh.positions[i]);
        let n = tri.nrm.map(|i| mesh.normals[i]);
        // texel-space coordinates, y pointing down the image
        let q = uv.map(|t| (t[0] * width as f64, (1.0 - t[1]) * height as f64));
        let area = (q[1].0 - q[0].0) * (q[2].1 - q[0].1) - (q[2].0 - q[0].0) * (q[1].1 - q[0].1);
        if area.abs() < 1e-12 {
            s.degenerate += 1;
            continue;
        }
        let min_x = q.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
        let max_x = q.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = q.iter().map(|a| a.1).fold(f64::INFINITY, f64::min);
        let max_y = q.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
        let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
        let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let eps = 1e-12;
        for ty in y0..=y1 as usize {
            for tx in x0..=x1 as usize {
                let i = ty * width + tx;
                if s.occupancy[i] {
                    continue;
                }
                let (cx, cy) = (tx as f64 + 0.5, ty as f64 + 0.5);
                let e = |a: usize, b: usize| (q[b].0 - q[a].0) * (cy - q[a].1) - (q[b].1 - q[a].1) * (cx - q[a].0);
                let b = [e(1, 2) / area, e(2, 0) / area, e(0, 1) / area];
                if b.iter().any(|&l| l < -eps) {
                    continue;
                }
                let pos = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
                let nrm = n[0] * b[0] + n[1] * b[1] + n[2] * b[2];
                let Some(nrm) = nrm.try_normalize(1e-12) else { continue };
                s.occupancy[i] = true;
                s.position[i] = pos;
                s.normal[i] = nrm;
                s.ccm[i] = ccm_of(&pos);
            }
        }
    }
    s
}

/// Sanity helper shared by tests and the CLI: UV of texel `i`.
pub fn texel_uv(i: usize, width: usize, height: usize) -> [f64; 2] {
    texel_center_uv(i % width, i / width, width, height)
}
