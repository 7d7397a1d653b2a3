use std::f64::consts::{PI, TAU};
use std::path::Path;

use log::warn;
use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Indices of one triangle's corners into the position, normal and UV arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub pos: [usize; 3],
    pub nrm: [usize; 3],
    pub uv: [usize; 3],
}

/// A triangle mesh with per-corner normals and UVs (OBJ-style index triplets).
/// Positions are in meters; CCW winding faces outward.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub uvs: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
}

#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: Mesh,
    pub warnings: Vec<String>,
}

impl Mesh {
    pub fn empty() -> Self {
        Self {
            positions: Vec::new(),
            normals: Vec::new(),
            uvs: Vec::new(),
            triangles: Vec::new(),
        }
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Checks index ranges, normal length and UV presence.
    pub fn validate(&self) -> Result<()> {
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                if tri.pos[k] >= self.positions.len()
                    || tri.nrm[k] >= self.normals.len()
                    || tri.uv[k] >= self.uvs.len()
                {
                    return Err(Error::Format(format!("triangle {t} has an out-of-range index")));
                }
            }
        }
        for (i, n) in self.normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-4 {
                return Err(Error::Format(format!("normal {i} is not unit length ({})", n.norm())));
            }
        }
        for (i, uv) in self.uvs.iter().enumerate() {
            if !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]) {
                return Err(Error::Format(format!("uv {i} = {uv:?} outside [0,1]^2")));
            }
        }
        Ok(())
    }

    /// Centers the bounding box at the origin and scales the largest extent to 1.
    pub fn normalize_to_unit_cube(&mut self) {
        let Some((lo, hi)) = self.bounding_box() else { return };
        let center = (lo + hi) * 0.5;
        let extent = (hi - lo).max();
        let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
        for p in &mut self.positions {
            *p = (*p - center) * scale;
        }
    }

    /// Replaces all normals with area-weighted vertex normals.
    pub fn compute_vertex_normals(&mut self) {
        let mut acc = vec![Vec3::zeros(); self.positions.len()];
        for tri in &self.triangles {
            let [a, b, c] = tri.pos.map(|i| self.positions[i]);
            // cross product magnitude is twice the area, so this is area weighting
            let n = (b - a).cross(&(c - a));
            for &i in &tri.pos {
                acc[i] += n;
            }
        }
        self.normals = acc
            .into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vec3::z()
                }
            })
            .collect();
        for tri in &mut self.triangles {
            tri.nrm = tri.pos;
        }
    }

    /// Assigns UVs by projecting each triangle along its dominant normal axis into one
    /// cell of a 3x2 atlas.
    pub fn box_project_uvs(&mut self) {
        let mut uvs = Vec::with_capacity(self.triangles.len() * 3);
        let (lo, hi) = self.bounding_box().unwrap_or((Vec3::repeat(-0.5), Vec3::repeat(0.5)));
        let ext = (hi - lo).map(|e| if e > 0.0 { e } else { 1.0 });
        for tri in &mut self.triangles {
            let [a, b, c] = tri.pos.map(|i| self.positions[i]);
            let n = (b - a).cross(&(c - a));
            let axis = n.iamax();
            let positive = n[axis] >= 0.0;
            let cell = box_cell(axis, positive);
            for k in 0..3 {
                let p = self.positions[tri.pos[k]];
                let local = (p - lo).component_div(&ext);
                let (s, t) = box_face_coords(axis, positive, &local);
                uvs.push(box_cell_uv(cell, s, t));
                tri.uv[k] = uvs.len() - 1;
            }
        }
        self.uvs = uvs;
    }
}

const BOX_PAD: f64 = 0.02;

fn box_cell(axis: usize, positive: bool) -> (usize, usize) {
    match (axis, positive) {
        (0, true) => (0, 0),
        (0, false) => (1, 0),
        (1, true) => (2, 0),
        (1, false) => (0, 1),
        (2, true) => (1, 1),
        _ => (2, 1),
    }
}

/// In-face coordinates in [0,1]^2 oriented so that triangles keep CCW winding in UV space.
fn box_face_coords(axis: usize, positive: bool, local: &Vec3) -> (f64, f64) {
    let (x, y, z) = (local.x, local.y, local.z);
    match (axis, positive) {
        (0, true) => (y, z),
        (0, false) => (1.0 - y, z),
        (1, true) => (1.0 - x, z),
        (1, false) => (x, z),
        (2, true) => (x, y),
        _ => (x, 1.0 - y),
    }
}

fn box_cell_uv(cell: (usize, usize), s: f64, t: f64) -> [f64; 2] {
    let s = s.clamp(0.0, 1.0);
    let t = t.clamp(0.0, 1.0);
    [
        (cell.0 as f64 + BOX_PAD + (1.0 - 2.0 * BOX_PAD) * s) / 3.0,
        (cell.1 as f64 + BOX_PAD + (1.0 - 2.0 * BOX_PAD) * t) / 2.0,
    ]
}

/// Loads a Wavefront OBJ (`v`, `vt`, `vn`, `f`; polygons are fan-triangulated), then
/// normalizes it into the unit cube. Missing normals are recomputed; missing UVs fall
/// back to a box projection and produce a warning.
pub fn load_mesh(path: &Path) -> Result<LoadedMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<LoadedMesh> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut uvs: Vec<[f64; 2]> = Vec::new();
    let mut faces: Vec<(usize, Vec<(usize, Option<usize>, Option<usize>)>)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let perr = |msg: String| Error::Parse { line: line_no, msg };
        let nums = |it: std::str::SplitWhitespace<'_>, want: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = it
                .map(|t| t.parse::<f64>().map_err(|_| perr(format!("bad number '{t}'"))))
                .collect::<Result<_>>()?;
            if v.len() < want {
                return Err(perr(format!("'{tag}' needs {want} components, found {}", v.len())));
            }
            Ok(v)
        };
        match tag {
            "v" => {
                let v = nums(it, 3)?;
                positions.push(Vec3::new(v[0], v[1], v[2]));
            }
            "vn" => {
                let v = nums(it, 3)?;
                normals.push(Vec3::new(v[0], v[1], v[2]));
            }
            "vt" => {
                let v = nums(it, 2)?;
                uvs.push([v[0], v[1]]);
            }
            "f" => {
                let mut corners = Vec::new();
                let mut layout = None;
                for tok in it {
                    let parts: Vec<&str> = tok.split('/').collect();
                    if parts.is_empty() || parts.len() > 3 {
                        return Err(perr(format!("malformed face corner '{tok}'")));
                    }
                    let this_layout = (parts.len(), parts.get(1).is_some_and(|s| !s.is_empty()));
                    if *layout.get_or_insert(this_layout) != this_layout {
                        return Err(perr(format!("face mixes corner formats at '{tok}'")));
                    }
                    let idx = |s: &str, count: usize| -> Result<usize> {
                        let v: i64 = s.parse().map_err(|_| perr(format!("bad index '{s}' in '{tok}'")))?;
                        let resolved = if v < 0 { count as i64 + v } else { v - 1 };
                        if resolved < 0 {
                            return Err(perr(format!("index {v} out of range")));
                        }
                        Ok(resolved as usize)
                    };
                    let p = idx(parts[0], positions.len())?;
                    let t = match parts.get(1) {
                        Some(s) if !s.is_empty() => Some(idx(s, uvs.len())?),
                        _ => None,
                    };
                    let n = match parts.get(2) {
                        Some(s) if !s.is_empty() => Some(idx(s, normals.len())?),
                        Some(_) => return Err(perr(format!("empty normal index in '{tok}'"))),
                        None => None,
                    };
                    corners.push((p, t, n));
                }
                if corners.len() < 3 {
                    return Err(perr(format!("face has {} corners, need at least 3", corners.len())));
                }
                faces.push((line_no, corners));
            }
            _ => {}
        }
    }

    let mut warnings = Vec::new();
    let has_uv = !faces.is_empty() && faces.iter().all(|(_, c)| c.iter().all(|x| x.1.is_some()));
    let has_nrm = !faces.is_empty() && faces.iter().all(|(_, c)| c.iter().all(|x| x.2.is_some()));

    let mut triangles = Vec::new();
    for (line_no, corners) in &faces {
        for (p, t, n) in corners {
            let bad = *p >= positions.len()
                || t.is_some_and(|t| t >= uvs.len())
                || n.is_some_and(|n| n >= normals.len());
            if bad {
                return Err(Error::Parse {
                    line: *line_no,
                    msg: "face index out of range".into(),
                });
            }
        }
        for k in 1..corners.len() - 1 {
            let c = [corners[0], corners[k], corners[k + 1]];
            triangles.push(Triangle {
                pos: c.map(|x| x.0),
                nrm: c.map(|x| x.2.unwrap_or(x.0)),
                uv: c.map(|x| x.1.unwrap_or(0)),
            });
        }
    }

    let mut mesh = Mesh {
        positions,
        normals,
        uvs,
        triangles,
    };
    mesh.normalize_to_unit_cube();
    if has_nrm {
        for n in &mut mesh.normals {
            let len = n.norm();
            *n = if len > 0.0 { *n / len } else { Vec3::z() };
        }
    } else {
        mesh.compute_vertex_normals();
    }
    if !has_uv {
        let msg = "mesh has no texture coordinates; using box-projection UVs".to_string();
        warn!("{msg}");
        warnings.push(msg);
        mesh.box_project_uvs();
    } else if mesh.uvs.iter().any(|uv| !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1])) {
        let msg = "texture coordinates outside [0,1] were wrapped".to_string();
        warn!("{msg}");
        warnings.push(msg);
        for uv in &mut mesh.uvs {
            for c in uv.iter_mut() {
                if !(0.0..=1.0).contains(c) {
                    *c = c.rem_euclid(1.0);
                }
            }
        }
    }
    Ok(LoadedMesh { mesh, warnings })
}

/// Serializes a mesh as OBJ text (used for dataset fixtures and round trips).
pub fn to_obj(mesh: &Mesh) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    for p in &mesh.positions {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for uv in &mesh.uvs {
        let _ = writeln!(s, "vt {} {}", uv[0], uv[1]);
    }
    for n in &mesh.normals {
        let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(
            s,
            "f {}/{}/{} {}/{}/{} {}/{}/{}",
            t.pos[0] + 1,
            t.uv[0] + 1,
            t.nrm[0] + 1,
            t.pos[1] + 1,
            t.uv[1] + 1,
            t.nrm[1] + 1,
            t.pos[2] + 1,
            t.uv[2] + 1,
            t.nrm[2] + 1
        );
    }
    s
}

/// Builder collecting vertices where position, normal and UV share one index.
struct MeshBuilder {
    mesh: Mesh,
}

impl MeshBuilder {
    fn new() -> Self {
        Self { mesh: Mesh::empty() }
    }

    fn vertex(&mut self, p: Vec3, n: Vec3, uv: [f64; 2]) -> usize {
        self.mesh.positions.push(p);
        self.mesh.normals.push(n.normalize());
        self.mesh.uvs.push([uv[0].clamp(0.0, 1.0), uv[1].clamp(0.0, 1.0)]);
        self.mesh.positions.len() - 1
    }

    fn tri(&mut self, a: usize, b: usize, c: usize) {
        self.mesh.triangles.push(Triangle {
            pos: [a, b, c],
            nrm: [a, b, c],
            uv: [a, b, c],
        });
    }

    fn quad(&mut self, a: usize, b: usize, c: usize, d: usize) {
        self.tri(a, b, c);
        self.tri(a, c, d);
    }

    fn finish(self) -> Mesh {
        self.mesh
    }
}

/// Sphere of radius 0.5 with an equal-area latitude mapping (`v = (1 + sin(lat)) / 2`).
pub fn uv_sphere(segments: usize, rings: usize) -> Mesh {
    let mut b = MeshBuilder::new();
    let r = 0.5;
    let point = |u: f64, v: f64| -> Vec3 {
        let lat = (2.0 * v - 1.0).clamp(-1.0, 1.0).asin();
        let lon = u * TAU;
        Vec3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
    };
    let mut grid = vec![vec![0usize; segments + 1]; rings + 1];
    for (j, row) in grid.iter_mut().enumerate().take(rings).skip(1) {
        let v = j as f64 / rings as f64;
        for (i, slot) in row.iter_mut().enumerate() {
            let u = i as f64 / segments as f64;
            let d = point(u, v);
            *slot = b.vertex(d * r, d, [u, v]);
        }
    }
    for i in 0..segments {
        let u = (i as f64 + 0.5) / segments as f64;
        let south = b.vertex(Vec3::new(0.0, 0.0, -r), -Vec3::z(), [u, 0.0]);
        b.tri(south, grid[1][i + 1], grid[1][i]);
        let north = b.vertex(Vec3::new(0.0, 0.0, r), Vec3::z(), [u, 1.0]);
        b.tri(north, grid[rings - 1][i], grid[rings - 1][i + 1]);
    }
    for j in 1..rings - 1 {
        for i in 0..segments {
            b.quad(grid[j][i], grid[j][i + 1], grid[j + 1][i + 1], grid[j + 1][i]);
        }
    }
    b.finish()
}

/// Axis-aligned cube `[-0.5, 0.5]^3`, each face subdivided `n x n`, with the box-projection
/// atlas layout.
pub fn cube(n: usize) -> Mesh {
    let mut b = MeshBuilder::new();
    let n = n.max(1);
    for axis in 0..3 {
        for positive in [true, false] {
            let cell = box_cell(axis, positive);
            let mut normal = Vec3::zeros();
            normal[axis] = if positive { 1.0 } else { -1.0 };
            let mut idx = vec![vec![0usize; n + 1]; n + 1];
            for (j, row) in idx.iter_mut().enumerate() {
                for (i, slot) in row.iter_mut().enumerate() {
                    let s = i as f64 / n as f64;
                    let t = j as f64 / n as f64;
                    let local = face_point(axis, positive, s, t);
                    let p = local - Vec3::repeat(0.5);
                    *slot = b.vertex(p, normal, box_cell_uv(cell, s, t));
                }
            }
            for j in 0..n {
                for i in 0..n {
                    b.quad(idx[j][i], idx[j][i + 1], idx[j + 1][i + 1], idx[j + 1][i]);
                }
            }
        }
    }
    b.finish()
}

/// Inverse of `box_face_coords`: local unit-cube point for in-face coordinates.
fn face_point(axis: usize, positive: bool, s: f64, t: f64) -> Vec3 {
    match (axis, positive) {
        (0, true) => Vec3::new(1.0, s, t),
        (0, false) => Vec3::new(0.0, 1.0 - s, t),
        (1, true) => Vec3::new(1.0 - s, 1.0, t),
        (1, false) => Vec3::new(s, 0.0, t),
        (2, true) => Vec3::new(s, t, 1.0),
        _ => Vec3::new(s, 1.0 - t, 0.0),
    }
}

/// Capped cylinder of radius 0.5 and height 1 along z. The side occupies the lower half
/// of the atlas, the two caps discs in the upper half.
pub fn cylinder(segments: usize, stacks: usize) -> Mesh {
    let mut b = MeshBuilder::new();
    let r = 0.5;
    let mut side = vec![vec![0usize; segments + 1]; stacks + 1];
    for (j, row) in side.iter_mut().enumerate() {
        let t = j as f64 / stacks as f64;
        for (i, slot) in row.iter_mut().enumerate() {
            let u = i as f64 / segments as f64;
            let a = u * TAU;
            let d = Vec3::new(a.cos(), a.sin(), 0.0);
            let p = Vec3::new(r * a.cos(), r * a.sin(), t - 0.5);
            *slot = b.vertex(p, d, [u, 0.02 + 0.46 * t]);
        }
    }
    for j in 0..stacks {
        for i in 0..segments {
            b.quad(side[j][i], side[j][i + 1], side[j + 1][i + 1], side[j + 1][i]);
        }
    }
    for (top, cu) in [(true, 0.25), (false, 0.75)] {
        let z = if top { 0.5 } else { -0.5 };
        let nz = if top { Vec3::z() } else { -Vec3::z() };
        let rad = 0.23;
        let center = b.vertex(Vec3::new(0.0, 0.0, z), nz, [cu, 0.75]);
        let ring: Vec<usize> = (0..=segments)
            .map(|i| {
                let a = i as f64 / segments as f64 * TAU;
                let sign = if top { 1.0 } else { -1.0 };
                b.vertex(
                    Vec3::new(r * a.cos(), r * a.sin(), z),
                    nz,
                    [cu + rad * a.cos(), 0.75 + sign * rad * a.sin()],
                )
            })
            .collect();
        for i in 0..segments {
            if top {
                b.tri(center, ring[i], ring[i + 1]);
            } else {
                b.tri(center, ring[i + 1], ring[i]);
            }
        }
    }
    b.finish()
}

/// Torus around z with major radius 0.35 and minor radius 0.15.
pub fn torus(major_segments: usize, minor_segments: usize) -> Mesh {
    let mut b = MeshBuilder::new();
    let (big_r, small_r) = (0.35, 0.15);
    let mut idx = vec![vec![0usize; minor_segments + 1]; major_segments + 1];
    for (i, row) in idx.iter_mut().enumerate() {
        let u = i as f64 / major_segments as f64;
        let a = u * TAU;
        for (j, slot) in row.iter_mut().enumerate() {
            let v = j as f64 / minor_segments as f64;
            let c = v * TAU;
            let d = Vec3::new(c.cos() * a.cos(), c.cos() * a.sin(), c.sin());
            let p = Vec3::new((big_r + small_r * c.cos()) * a.cos(), (big_r + small_r * c.cos()) * a.sin(), small_r * c.sin());
            *slot = b.vertex(p, d, [u, v]);
        }
    }
    for i in 0..major_segments {
        for j in 0..minor_segments {
            b.quad(idx[i][j], idx[i + 1][j], idx[i + 1][j + 1], idx[i][j + 1]);
        }
    }
    b.finish()
}

/// Square of side `size` centered at `center`, facing `normal`, subdivided `n x n`.
/// UVs span the full unit square.
pub fn plane(center: Vec3, normal: Vec3, size: f64, n: usize) -> Mesh {
    let normal = normal.normalize();
    let helper = if normal.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let t = helper.cross(&normal).normalize();
    let bt = normal.cross(&t);
    let mut b = MeshBuilder::new();
    let mut idx = vec![vec![0usize; n + 1]; n + 1];
    for (j, row) in idx.iter_mut().enumerate() {
        for (i, slot) in row.iter_mut().enumerate() {
            let s = i as f64 / n as f64;
            let r = j as f64 / n as f64;
            let p = center + t * ((s - 0.5) * size) + bt * ((r - 0.5) * size);
            *slot = b.vertex(p, normal, [s, r]);
        }
    }
    for j in 0..n {
        for i in 0..n {
            b.quad(idx[j][i], idx[j][i + 1], idx[j + 1][i + 1], idx[j + 1][i]);
        }
    }
    b.finish()
}

/// Angle helpers shared by the camera rig.
pub(crate) fn spherical_dir(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (az, el) = (azimuth_deg * PI / 180.0, elevation_deg * PI / 180.0);
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE_OBJ: &str = "\
v 0 0 0
v 2 0 0
v 2 2 0
v 0 2 0
v 0 0 2
v 2 0 2
v 2 2 2
v 0 2 2
vt 0 0
vt 1 0
vt 1 1
vt 0 1
vn 0 0 -1
vn 0 0 1
vn 0 -1 0
vn 0 1 0
vn -1 0 0
vn 1 0 0
f 1/1/1 4/4/1 3/3/1 2/2/1
f 5/1/2 6/2/2 7/3/2 8/4/2
f 1/1/3 2/2/3 6/3/3 5/4/3
f 4/1/4 8/4/4 7/3/4 3/2/4
f 1/1/5 5/2/5 8/3/5 4/4/5
f 2/1/6 3/2/6 7/3/6 6/4/6
";

    #[test]
    fn loads_and_normalizes_cube() {
        let loaded = parse_obj(CUBE_OBJ).unwrap();
        let m = &loaded.mesh;
        assert_eq!(m.positions.len(), 8);
        assert_eq!(m.triangles.len(), 12);
        let (lo, hi) = m.bounding_box().unwrap();
        assert!((lo - Vec3::repeat(-0.5)).norm() < 1e-12);
        assert!((hi - Vec3::repeat(0.5)).norm() < 1e-12);
        assert!(loaded.warnings.is_empty());
        m.validate().unwrap();
    }

    #[test]
    fn missing_uvs_fall_back_to_box_projection() {
        let text: String = CUBE_OBJ
            .lines()
            .filter(|l| !l.starts_with("vt") && !l.starts_with("vn"))
            .map(|l| {
                if let Some(rest) = l.strip_prefix("f ") {
                    let c: Vec<&str> = rest.split_whitespace().map(|t| t.split('/').next().unwrap()).collect();
                    format!("f {}\n", c.join(" "))
                } else {
                    format!("{l}\n")
                }
            })
            .collect();
        let loaded = parse_obj(&text).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert_eq!(loaded.mesh.uvs.len(), 36);
        loaded.mesh.validate().unwrap();
    }

    #[test]
    fn malformed_face_names_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvn 0 0 1\nvn 0 0 1\nf 1/1/1 2/2\n";
        match parse_obj(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_obj("v 0 0\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_obj("v 0 0 0\nf 1 2 3\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn primitives_are_valid_and_outward() {
        for m in [uv_sphere(24, 12), cube(2), cylinder(24, 4), torus(24, 12)] {
            m.validate().unwrap();
            // outward winding: geometric normal agrees with the stored vertex normal
            for t in &m.triangles {
                let [a, b, c] = t.pos.map(|i| m.positions[i]);
                let gn = (b - a).cross(&(c - a));
                if gn.norm() < 1e-12 {
                    continue;
                }
                let vn: Vec3 = t.nrm.iter().map(|&i| m.normals[i]).sum();
                assert!(gn.dot(&vn) > 0.0);
            }
            let (lo, hi) = m.bounding_box().unwrap();
            assert!(lo.min() >= -0.5 - 1e-9 && hi.max() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn obj_text_round_trip() {
        let m = cube(1);
        let back = parse_obj(&to_obj(&m)).unwrap().mesh;
        assert_eq!(back.triangles.len(), m.triangles.len());
        for (a, b) in back.positions.iter().zip(&m.positions) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
