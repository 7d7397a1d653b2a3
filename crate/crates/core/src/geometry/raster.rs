//! Depth-buffered software rasterization of G-buffers with perspective-correct
//! attribute interpolation, near-plane clipping and back-face culling.

use nalgebra::Matrix3;

use super::camera::Camera;
use super::mesh::{Mesh, Vec3};
use crate::grid::{Grid, RgbGrid};

const NEAR: f64 = 1e-3;

/// Per-pixel geometry for one camera view. Uncovered pixels hold zero vectors,
/// infinite depth and UV `(-1, -1)`.
#[derive(Debug, Clone)]
pub struct GBuffer {
    pub camera: Camera,
    pub coverage: Grid<bool>,
    pub depth: Grid<f64>,
    /// World-space unit shading normal.
    pub normal: Grid<Vec3>,
    /// World-space tangent (direction of increasing u), orthogonalized against the normal.
    pub tangent: Grid<Vec3>,
    /// World-space bitangent (direction of increasing v).
    pub bitangent: Grid<Vec3>,
    pub position: Grid<Vec3>,
    pub uv: Grid<[f64; 2]>,
    /// Object-space position mapped into `[0,1]^3`.
    pub ccm: Grid<Vec3>,
}

impl GBuffer {
    fn empty(camera: Camera) -> Self {
        let (w, h) = (camera.width, camera.height);
        Self {
            camera,
            coverage: Grid::filled(w, h, false),
            depth: Grid::filled(w, h, f64::INFINITY),
            normal: Grid::filled(w, h, Vec3::zeros()),
            tangent: Grid::filled(w, h, Vec3::zeros()),
            bitangent: Grid::filled(w, h, Vec3::zeros()),
            position: Grid::filled(w, h, Vec3::zeros()),
            uv: Grid::filled(w, h, [-1.0, -1.0]),
            ccm: Grid::filled(w, h, Vec3::zeros()),
        }
    }

    pub fn width(&self) -> usize {
        self.coverage.width()
    }

    pub fn height(&self) -> usize {
        self.coverage.height()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coverage.shape()
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|&&c| c).count()
    }

    /// Camera-space normals encoded as `(n + 1) / 2`; uncovered pixels read `(0.5, 0.5, 0.5)`.
    pub fn normal_map(&self) -> RgbGrid {
        let rot = self.camera.rotation();
        self.normal.map(|n| {
            let c = rot * n;
            [(c.x + 1.0) * 0.5, (c.y + 1.0) * 0.5, (c.z + 1.0) * 0.5]
        })
    }

    pub fn camera_space_normal(&self, i: usize) -> Vec3 {
        self.camera.rotation() * self.normal[i]
    }
}

/// Interpolated attributes carried through clipping: camera-space position, world
/// position, normal, tangent, bitangent, uv.
#[derive(Debug, Clone, Copy)]
struct ClipVertex {
    cam: Vec3,
    world: Vec3,
    normal: Vec3,
    tangent: Vec3,
    bitangent: Vec3,
    uv: [f64; 2],
}

impl ClipVertex {
    fn lerp(&self, o: &ClipVertex, t: f64) -> ClipVertex {
        ClipVertex {
            cam: self.cam + (o.cam - self.cam) * t,
            world: self.world + (o.world - self.world) * t,
            normal: self.normal + (o.normal - self.normal) * t,
            tangent: self.tangent + (o.tangent - self.tangent) * t,
            bitangent: self.bitangent + (o.bitangent - self.bitangent) * t,
            uv: [
                self.uv[0] + (o.uv[0] - self.uv[0]) * t,
                self.uv[1] + (o.uv[1] - self.uv[1]) * t,
            ],
        }
    }
}

/// Tangent and bitangent of a triangle from its UV parameterization (dP/du, dP/dv).
pub fn triangle_tangents(p: [Vec3; 3], uv: [[f64; 2]; 3]) -> (Vec3, Vec3) {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let (du1, dv1) = (uv[1][0] - uv[0][0], uv[1][1] - uv[0][1]);
    let (du2, dv2) = (uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]);
    let det = du1 * dv2 - du2 * dv1;
    if det.abs() < 1e-14 {
        let n = e1.cross(&e2);
        let helper = if n.z.abs() < 0.9 * n.norm() { Vec3::z() } else { Vec3::x() };
        let t = helper.cross(&n).try_normalize(1e-18).unwrap_or_else(Vec3::x);
        let b = n.cross(&t).try_normalize(1e-18).unwrap_or_else(Vec3::y);
        return (t, b);
    }
    let r = 1.0 / det;
    let t = (e1 * dv2 - e2 * dv1) * r;
    let b = (e2 * du1 - e1 * du2) * r;
    (
        t.try_normalize(1e-18).unwrap_or_else(Vec3::x),
        b.try_normalize(1e-18).unwrap_or_else(Vec3::y),
    )
}

fn clip_near(poly: &[ClipVertex]) -> Vec<ClipVertex> {
    let inside = |v: &ClipVertex| -v.cam.z >= NEAR;
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        match (inside(a), inside(b)) {
            (true, true) => out.push(*b),
            (true, false) | (false, true) => {
                let da = -a.cam.z - NEAR;
                let db = -b.cam.z - NEAR;
                let t = da / (da - db);
                out.push(a.lerp(b, t));
                if inside(b) {
                    out.push(*b);
                }
            }
            (false, false) => {}
        }
    }
    out
}

/// Rasterizes `mesh` from `cam` at the camera's resolution.
pub fn rasterize_gbuffer(mesh: &Mesh, cam: &Camera) -> GBuffer {
    let mut g = GBuffer::empty(*cam);
    let rot: Matrix3<f64> = cam.rotation();
    let (w, h) = (cam.width, cam.height);
    for tri in &mesh.triangles {
        let p = tri.pos.map(|i| mesh.positions[i]);
        let uv = tri.uv.map(|i| mesh.uvs[i]);
        let (tangent, bitangent) = triangle_tangents(p, uv);
        let verts: Vec<ClipVertex> = (0..3)
            .map(|k| ClipVertex {
                cam: rot * (p[k] - cam.position),
                world: p[k],
                normal: mesh.normals[tri.nrm[k]],
                tangent,
                bitangent,
                uv: uv[k],
            })
            .collect();
        let poly = if verts.iter().all(|v| -v.cam.z >= NEAR) {
            verts
        } else {
            clip_near(&verts)
        };
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<(f64, f64, f64)> = poly
            .iter()
            .map(|v| cam.project_camera_space(&v.cam).expect("clipped vertex is in front"))
            .collect();
        for k in 1..poly.len() - 1 {
            let idx = [0, k, k + 1];
            raster_triangle(&mut g, [poly[idx[0]], poly[idx[1]], poly[idx[2]]], [screen[idx[0]], screen[idx[1]], screen[idx[2]]], w, h);
        }
    }
    g
}

fn raster_triangle(g: &mut GBuffer, v: [ClipVertex; 3], s: [(f64, f64, f64); 3], w: usize, h: usize) {
    // screen y grows downward, so a CCW (front-facing) triangle has negative signed area here
    let area = (s[1].0 - s[0].0) * (s[2].1 - s[0].1) - (s[2].0 - s[0].0) * (s[1].1 - s[0].1);
    if area >= 0.0 || !area.is_finite() {
        return;
    }
    let min_x = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_x = s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_y = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let x0 = ((min_x - 0.5).ceil().max(0.0)) as usize;
    let y0 = ((min_y - 0.5).ceil().max(0.0)) as usize;
    let x1 = (max_x - 0.5).floor().min(w as f64 - 1.0);
    let y1 = (max_y - 0.5).floor().min(h as f64 - 1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let (x1, y1) = (x1 as usize, y1 as usize);
    let inv_w = [1.0 / s[0].2, 1.0 / s[1].2, 1.0 / s[2].2];
    for py in y0..=y1 {
        let cy = py as f64 + 0.5;
        for px in x0..=x1 {
            let cx = px as f64 + 0.5;
            let e = |a: usize, b: usize| (s[b].0 - s[a].0) * (cy - s[a].1) - (s[b].1 - s[a].1) * (cx - s[a].0);
            let l0 = e(1, 2) / area;
            let l1 = e(2, 0) / area;
            let l2 = e(0, 1) / area;
            if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                continue;
            }
            let q = [l0 * inv_w[0], l1 * inv_w[1], l2 * inv_w[2]];
            let qsum = q[0] + q[1] + q[2];
            let depth = 1.0 / qsum;
            let i = py * w + px;
            if depth >= g.depth[i] {
                continue;
            }
            let b = [q[0] / qsum, q[1] / qsum, q[2] / qsum];
            let mix = |f: &dyn Fn(&ClipVertex) -> Vec3| f(&v[0]) * b[0] + f(&v[1]) * b[1] + f(&v[2]) * b[2];
            let n = mix(&|c| c.normal);
            let Some(n) = n.try_normalize(1e-12) else { continue };
            let t = mix(&|c| c.tangent);
            let t = (t - n * n.dot(&t)).try_normalize(1e-12).unwrap_or_else(|| any_perpendicular(&n));
            let bt = mix(&|c| c.bitangent);
            let bt = (bt - n * n.dot(&bt) - t * t.dot(&bt))
                .try_normalize(1e-12)
                .unwrap_or_else(|| n.cross(&t));
            let world = mix(&|c| c.world);
            g.coverage[i] = true;
            g.depth[i] = depth;
            g.normal[i] = n;
            g.tangent[i] = t;
            g.bitangent[i] = bt;
            g.position[i] = world;
            g.uv[i] = [
                v[0].uv[0] * b[0] + v[1].uv[0] * b[1] + v[2].uv[0] * b[2],
                v[0].uv[1] * b[0] + v[1].uv[1] * b[1] + v[2].uv[1] * b[2],
            ];
            g.ccm[i] = ccm_of(&world);
        }
    }
}

/// Canonical coordinate of an object-space point of a unit-cube-normalized mesh.
#[inline]
pub fn ccm_of(p: &Vec3) -> Vec3 {
    (p + Vec3::repeat(0.5)).map(|c| c.clamp(0.0, 1.0))
}

fn any_perpendicular(n: &Vec3) -> Vec3 {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (helper - n * n.dot(&helper)).normalize()
}
