//! Procedural objects: a primitive mesh, a UV-space ground-truth material atlas
//! built from a pattern of material regions, and a material tag.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{compute_ccm_uv, cube, cylinder, torus, uv_sphere, Mesh, UvSurface};
use crate::grid::{texel_center_uv, Rgb};
use crate::material::{MaterialSample, MaterialSet};

/// Material tag vocabulary standing in for free-text prompts.
pub const TAGS: [&str; 12] = [
    "metal", "wood", "plastic", "stone", "fabric", "ceramic", "rubber", "leather", "marble", "concrete", "gold", "paint",
];

pub fn tag_id(name: &str) -> Option<usize> {
    TAGS.iter().position(|t| *t == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Sphere,
    Cube,
    Cylinder,
    Torus,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Sphere, Shape::Cube, Shape::Cylinder, Shape::Torus];

    pub fn mesh(&self) -> Mesh {
        match self {
            Shape::Sphere => uv_sphere(48, 24),
            Shape::Cube => cube(4),
            Shape::Cylinder => cylinder(48, 4),
            Shape::Torus => torus(48, 24),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Cube => "cube",
            Shape::Cylinder => "cylinder",
            Shape::Torus => "torus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Uniform,
    Stripes,
    Checker,
    Noise,
}

/// Albedo, roughness and metallic of one region plus its bump amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMaterial {
    pub albedo: Rgb,
    pub roughness: f64,
    pub metallic: f64,
    pub bump_strength: f64,
}

/// Per-tag sampling ranges: albedo palette (two anchor colors), roughness range
/// and the probability that a region is metallic.
struct TagStyle {
    palette: [Rgb; 2],
    roughness: (f64, f64),
    metal_prob: f64,
    bump: (f64, f64),
}

fn tag_style(tag: usize) -> TagStyle {
    let s = |palette, roughness, metal_prob, bump| TagStyle { palette, roughness, metal_prob, bump };
    match TAGS[tag] {
        "metal" => s([[0.55, 0.56, 0.58], [0.75, 0.74, 0.72]], (0.15, 0.5), 0.9, (0.0, 0.3)),
        "wood" => s([[0.45, 0.28, 0.14], [0.65, 0.45, 0.25]], (0.55, 0.85), 0.0, (0.3, 0.8)),
        "plastic" => s([[0.8, 0.15, 0.1], [0.1, 0.3, 0.8]], (0.3, 0.6), 0.0, (0.0, 0.2)),
        "stone" => s([[0.4, 0.4, 0.38], [0.6, 0.58, 0.55]], (0.7, 0.95), 0.0, (0.5, 1.0)),
        "fabric" => s([[0.3, 0.5, 0.35], [0.7, 0.6, 0.5]], (0.8, 1.0), 0.0, (0.4, 0.9)),
        "ceramic" => s([[0.9, 0.9, 0.88], [0.35, 0.5, 0.7]], (0.1, 0.35), 0.0, (0.0, 0.2)),
        "rubber" => s([[0.08, 0.08, 0.08], [0.25, 0.22, 0.2]], (0.75, 0.95), 0.0, (0.1, 0.4)),
        "leather" => s([[0.35, 0.2, 0.1], [0.15, 0.1, 0.08]], (0.5, 0.75), 0.0, (0.3, 0.7)),
        "marble" => s([[0.92, 0.92, 0.9], [0.55, 0.55, 0.58]], (0.05, 0.3), 0.0, (0.0, 0.2)),
        "concrete" => s([[0.5, 0.5, 0.5], [0.65, 0.63, 0.6]], (0.8, 1.0), 0.0, (0.5, 1.0)),
        "gold" => s([[1.0, 0.78, 0.34], [0.9, 0.65, 0.25]], (0.1, 0.4), 0.95, (0.0, 0.3)),
        "paint" => s([[0.2, 0.6, 0.3], [0.9, 0.8, 0.2]], (0.3, 0.7), 0.15, (0.0, 0.3)),
        _ => unreachable!("tag index within vocabulary"),
    }
}

pub(crate) fn sample_region(tag: usize, rng: &mut impl Rng) -> RegionMaterial {
    let st = tag_style(tag);
    let t: f64 = rng.random();
    let mut albedo = [0.0; 3];
    for k in 0..3 {
        let base = st.palette[0][k] + (st.palette[1][k] - st.palette[0][k]) * t;
        albedo[k] = (base + rng.random_range(-0.08..0.08)).clamp(0.02, 0.98);
    }
    let metallic = if rng.random_bool(st.metal_prob) {
        rng.random_range(0.9..=1.0)
    } else {
        rng.random_range(0.0..=0.1)
    };
    RegionMaterial {
        albedo,
        roughness: rng.random_range(st.roughness.0..=st.roughness.1),
        metallic,
        bump_strength: rng.random_range(st.bump.0..=st.bump.1),
    }
}

/// Smooth lattice noise on the unit square, periodic in u.
#[derive(Debug, Clone)]
pub struct ValueNoise {
    cells: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    pub fn new(cells: usize, rng: &mut impl Rng) -> Self {
        let lattice = (0..cells * (cells + 1)).map(|_| rng.random()).collect();
        Self { cells, lattice }
    }

    /// Value in `[0, 1]` at `(u, v)`.
    pub fn at(&self, u: f64, v: f64) -> f64 {
        let n = self.cells;
        let x = u.rem_euclid(1.0) * n as f64;
        let y = v.clamp(0.0, 1.0) * n as f64;
        let (xi, yi) = (x.floor() as usize % n, (y.floor() as usize).min(n - 1));
        let (fx, fy) = (x - x.floor(), y - yi as f64);
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let g = |i: usize, j: usize| self.lattice[j * n + i % n];
        let (sx, sy) = (s(fx), s(fy));
        let top = g(xi, yi) * (1.0 - sx) + g(xi + 1, yi) * sx;
        let bot = g(xi, yi + 1) * (1.0 - sx) + g(xi + 1, yi + 1) * sx;
        top * (1.0 - sy) + bot * sy
    }
}

#[derive(Debug, Clone)]
pub struct ProceduralObject {
    pub seed: u64,
    pub shape: Shape,
    pub pattern: Pattern,
    pub tag: usize,
    pub regions: Vec<RegionMaterial>,
    pub mesh: Mesh,
    pub surface: UvSurface,
    /// Ground-truth atlas; unoccupied texels hold the background sample.
    pub gt: MaterialSet,
}

impl ProceduralObject {
    pub fn tag_name(&self) -> &'static str {
        TAGS[self.tag]
    }

    /// Number of regions that actually appear on occupied texels.
    pub fn distinct_regions(&self) -> usize {
        let mut seen: Vec<MaterialSample> = Vec::new();
        for i in 0..self.gt.albedo.len() {
            if self.surface.occupancy[i] {
                let mut m = self.gt.get_index(i);
                m.bump = [0.0; 3];
                if !seen.contains(&m) {
                    seen.push(m);
                }
            }
        }
        seen.len()
    }
}

/// Deterministic object for `seed`.
pub fn gen_object_seeded(seed: u64, uv_res: usize) -> ProceduralObject {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obj = gen_object(&mut rng, uv_res);
    obj.seed = seed;
    obj
}

/// Draws a primitive, a tag, a pattern of regions and builds the atlas.
pub fn gen_object(rng: &mut impl Rng, uv_res: usize) -> ProceduralObject {
    let shape = Shape::ALL[rng.random_range(0..4)];
    let tag = rng.random_range(0..TAGS.len());
    let p: f64 = rng.random();
    let pattern = if p < 0.15 {
        Pattern::Uniform
    } else if p < 0.45 {
        Pattern::Stripes
    } else if p < 0.7 {
        Pattern::Checker
    } else {
        Pattern::Noise
    };
    let n_regions = match pattern {
        Pattern::Uniform => 1,
        Pattern::Noise => rng.random_range(2..=3),
        _ => 2,
    };
    let regions: Vec<RegionMaterial> = (0..n_regions).map(|_| sample_region(tag, rng)).collect();
    let freq = rng.random_range(2..=6) as f64;
    let along_u = rng.random_bool(0.5);
    let region_noise = ValueNoise::new(rng.random_range(3..=6), rng);
    let height_noise = ValueNoise::new(rng.random_range(8..=16), rng);
    let mesh = shape.mesh();
    let surface = compute_ccm_uv(&mesh, uv_res, uv_res);

    let region_at = |u: f64, v: f64| -> usize {
        match pattern {
            Pattern::Uniform => 0,
            Pattern::Stripes => {
                let c = if along_u { u } else { v };
                ((c * freq).floor() as usize) % 2
            }
            Pattern::Checker => (((u * freq).floor() + (v * freq).floor()) as usize) % 2,
            Pattern::Noise => ((region_noise.at(u, v) * n_regions as f64) as usize).min(n_regions - 1),
        }
    };
    let h = 1.0 / uv_res as f64;
    let gt = MaterialSet::from_fn(uv_res, uv_res, |x, y| {
        let i = y * uv_res + x;
        if !surface.occupancy[i] {
            return MaterialSample::background();
        }
        let [u, v] = texel_center_uv(x, y, uv_res, uv_res);
        let r = regions[region_at(u, v)];
        // tangent-space normal from the height field's finite-difference slope
        let k = r.bump_strength * 0.02 / h;
        let dhdu = (height_noise.at(u + h, v) - height_noise.at(u - h, v)) * 0.5;
        let dhdv = (height_noise.at(u, v + h) - height_noise.at(u, v - h)) * 0.5;
        let (nx, ny, nz) = (-k * dhdu, -k * dhdv, 1.0);
        let len = (nx * nx + ny * ny + nz * nz).sqrt();
        MaterialSample {
            albedo: r.albedo,
            roughness: r.roughness,
            metallic: r.metallic,
            bump: [0.5 + 0.5 * nx / len, 0.5 + 0.5 * ny / len, 0.5 + 0.5 * nz / len],
        }
    });
    ProceduralObject {
        seed: 0,
        shape,
        pattern,
        tag,
        regions,
        mesh,
        surface,
        gt,
    }
}
