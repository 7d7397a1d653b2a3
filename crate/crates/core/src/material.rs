//! Material tensors, roughness/metallic packing and confidence-mask semantics.
//!
//! A [`MaterialSet`] carries the eight per-pixel PBR channels every stage of the
//! pipeline exchanges: linear albedo (3), roughness (1), metallic (1) and a
//! tangent-space bump/normal map (3, flat = `(0.5, 0.5, 1.0)`).

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{Grid, Rgb, RgbGrid, ScalarGrid};

/// Number of material channels carried through every stage.
pub const MATERIAL_CHANNELS: usize = 8;

/// Encoded tangent-space normal of an unperturbed surface.
pub const FLAT_BUMP: Rgb = [0.5, 0.5, 1.0];

/// Maximum deviation of the packed red channel from 1.0 accepted by [`unpack_rm`].
pub const RM_RED_TOLERANCE: f64 = 1e-3;

/// Relaxed red-channel tolerance used while reconstructing predictions during training.
pub const RM_RED_TOLERANCE_TRAINING: f64 = 0.2;

/// One pixel's worth of material channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSample {
    pub albedo: Rgb,
    pub roughness: f64,
    pub metallic: f64,
    pub bump: Rgb,
}

impl MaterialSample {
    pub const fn uniform(value: f64) -> Self {
        Self {
            albedo: [value; 3],
            roughness: value,
            metallic: value,
            bump: [value; 3],
        }
    }

    /// Zero albedo/roughness/metallic with a flat bump; used for uncovered pixels.
    pub const fn background() -> Self {
        Self {
            albedo: [0.0; 3],
            roughness: 0.0,
            metallic: 0.0,
            bump: FLAT_BUMP,
        }
    }

    pub fn to_channels(&self) -> [f64; MATERIAL_CHANNELS] {
        [
            self.albedo[0],
            self.albedo[1],
            self.albedo[2],
            self.roughness,
            self.metallic,
            self.bump[0],
            self.bump[1],
            self.bump[2],
        ]
    }

    pub fn from_channels(c: &[f64; MATERIAL_CHANNELS]) -> Self {
        Self {
            albedo: [c[0], c[1], c[2]],
            roughness: c[3],
            metallic: c[4],
            bump: [c[5], c[6], c[7]],
        }
    }

    /// Packed 9-channel layout used by the denoiser: albedo, (1, roughness, metallic), bump.
    pub fn to_packed(&self) -> [f64; 9] {
        [
            self.albedo[0],
            self.albedo[1],
            self.albedo[2],
            1.0,
            self.roughness,
            self.metallic,
            self.bump[0],
            self.bump[1],
            self.bump[2],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSet {
    pub albedo: RgbGrid,
    pub roughness: ScalarGrid,
    pub metallic: ScalarGrid,
    pub bump: RgbGrid,
}

impl MaterialSet {
    /// Assembles a set after checking that all four grids agree in shape.
    pub fn new(albedo: RgbGrid, roughness: ScalarGrid, metallic: ScalarGrid, bump: RgbGrid) -> Result<Self> {
        let shape = albedo.shape();
        roughness.ensure_shape(shape, "roughness grid")?;
        metallic.ensure_shape(shape, "metallic grid")?;
        bump.ensure_shape(shape, "bump grid")?;
        Ok(Self {
            albedo,
            roughness,
            metallic,
            bump,
        })
    }

    pub fn filled(width: usize, height: usize, value: MaterialSample) -> Self {
        Self {
            albedo: Grid::filled(width, height, value.albedo),
            roughness: Grid::filled(width, height, value.roughness),
            metallic: Grid::filled(width, height, value.metallic),
            bump: Grid::filled(width, height, value.bump),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> MaterialSample) -> Self {
        let mut set = Self::filled(width, height, MaterialSample::background());
        for y in 0..height {
            for x in 0..width {
                set.set(x, y, f(x, y));
            }
        }
        set
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.albedo.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.albedo.height()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.albedo.shape()
    }

    pub const fn channel_count(&self) -> usize {
        MATERIAL_CHANNELS
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> MaterialSample {
        MaterialSample {
            albedo: self.albedo[(x, y)],
            roughness: self.roughness[(x, y)],
            metallic: self.metallic[(x, y)],
            bump: self.bump[(x, y)],
        }
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> MaterialSample {
        MaterialSample {
            albedo: self.albedo[i],
            roughness: self.roughness[i],
            metallic: self.metallic[i],
            bump: self.bump[i],
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, m: MaterialSample) {
        self.albedo[(x, y)] = m.albedo;
        self.roughness[(x, y)] = m.roughness;
        self.metallic[(x, y)] = m.metallic;
        self.bump[(x, y)] = m.bump;
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, m: MaterialSample) {
        self.albedo[i] = m.albedo;
        self.roughness[i] = m.roughness;
        self.metallic[i] = m.metallic;
        self.bump[i] = m.bump;
    }

    pub fn packed_rm(&self) -> PackedRm {
        // shapes are guaranteed equal and values are not re-checked here
        PackedRm {
            grid: self
                .roughness
                .zip_map(&self.metallic, |&r, &m| [1.0, r, m])
                .expect("material set grids share a shape"),
        }
    }

    /// Bilinear material lookup at a UV coordinate, restricted to texels flagged in
    /// `valid` (weights renormalized). Returns `None` when no valid texel contributes.
    pub fn sample_uv_masked(&self, uv: [f64; 2], valid: &Grid<bool>) -> Option<MaterialSample> {
        let (w, h) = self.shape();
        let (px, py) = crate::grid::uv_to_pixel_pos(uv, w, h);
        let (x0, x1, fx) = crate::grid::bilinear_axis(px, w);
        let (y0, y1, fy) = crate::grid::bilinear_axis(py, h);
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        let mut acc = [0.0; MATERIAL_CHANNELS];
        let mut total = 0.0;
        for &(x, y, wgt) in &taps {
            if wgt > 0.0 && valid[(x, y)] {
                let c = self.get(x, y).to_channels();
                for k in 0..MATERIAL_CHANNELS {
                    acc[k] += wgt * c[k];
                }
                total += wgt;
            }
        }
        if total <= 0.0 {
            return None;
        }
        for a in acc.iter_mut() {
            *a /= total;
        }
        Some(MaterialSample::from_channels(&acc))
    }

    /// Largest per-channel absolute difference between two sets of equal shape.
    pub fn max_abs_diff(&self, other: &MaterialSet) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.albedo.len() {
            let a = self.get_index(i).to_channels();
            let b = other.get_index(i).to_channels();
            for k in 0..MATERIAL_CHANNELS {
                worst = worst.max((a[k] - b[k]).abs());
            }
        }
        worst
    }
}

/// Roughness and metallic packed into an RGB grid: R is identically 1, G roughness, B metallic.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedRm {
    pub grid: RgbGrid,
}

pub fn pack_rm(roughness: &ScalarGrid, metallic: &ScalarGrid) -> Result<PackedRm> {
    metallic.ensure_shape(roughness.shape(), "pack_rm metallic grid")?;
    for (name, g) in [("roughness", roughness), ("metallic", metallic)] {
        if let Some((i, v)) = g.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!(
                "{name} value {v} at pixel ({}, {}) outside [0, 1]",
                i % g.width(),
                i / g.width()
            )));
        }
    }
    Ok(PackedRm {
        grid: roughness.zip_map(metallic, |&r, &m| [1.0, r, m])?,
    })
}

pub fn unpack_rm(packed: &PackedRm) -> Result<(ScalarGrid, ScalarGrid)> {
    unpack_rm_with_tolerance(packed, RM_RED_TOLERANCE)
}

pub fn unpack_rm_with_tolerance(packed: &PackedRm, tolerance: f64) -> Result<(ScalarGrid, ScalarGrid)> {
    let g = &packed.grid;
    if let Some((i, px)) = g.iter().enumerate().find(|(_, px)| (px[0] - 1.0).abs() > tolerance) {
        return Err(Error::Format(format!(
            "packed roughness/metallic red channel is {} at pixel ({}, {}); expected 1.0 within {tolerance}",
            px[0],
            i % g.width(),
            i / g.width()
        )));
    }
    Ok((g.map(|px| px[1]), g.map(|px| px[2])))
}

/// Lighting situation of the input object, declared by the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LightingScenario {
    /// Textures carry physically plausible lighting (scans).
    Realistic,
    /// Textures are lighting-free (albedo only).
    LightFree,
    /// Textures carry generated, possibly implausible lighting.
    Generated,
}

impl LightingScenario {
    pub const ALL: [LightingScenario; 3] = [
        LightingScenario::LightFree,
        LightingScenario::Realistic,
        LightingScenario::Generated,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LightingScenario::Realistic => "realistic",
            LightingScenario::LightFree => "lightfree",
            LightingScenario::Generated => "generated",
        }
    }
}

impl fmt::Display for LightingScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LightingScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "realistic" => Ok(LightingScenario::Realistic),
            "lightfree" | "light-free" | "light_free" => Ok(LightingScenario::LightFree),
            "generated" => Ok(LightingScenario::Generated),
            other => Err(Error::Argument(format!("unknown lighting scenario '{other}'"))),
        }
    }
}

/// Binary per-pixel illumination confidence (1 = trust the lighting in the input image).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMask(ScalarGrid);

impl ConfidenceMask {
    pub fn new(grid: ScalarGrid) -> Result<Self> {
        if let Some(v) = grid.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Domain(format!("confidence value {v} is not binary")));
        }
        Ok(Self(grid))
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self(Grid::filled(width, height, if value { 1.0 } else { 0.0 }))
    }

    pub fn from_bools(mask: &Grid<bool>) -> Self {
        Self(mask.map(|&b| if b { 1.0 } else { 0.0 }))
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.0
    }

    pub fn into_grid(self) -> ScalarGrid {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len().max(1) as f64
    }
}

/// Confidence rule: realistic lighting is trusted everywhere, lighting-free inputs nowhere,
/// generated lighting only where the material is already known.
pub fn assign_confidence(
    scenario: LightingScenario,
    known_mask: Option<&Grid<bool>>,
    shape: (usize, usize),
) -> Result<ConfidenceMask> {
    match scenario {
        LightingScenario::Realistic => Ok(ConfidenceMask::filled(shape.0, shape.1, true)),
        LightingScenario::LightFree => Ok(ConfidenceMask::filled(shape.0, shape.1, false)),
        LightingScenario::Generated => {
            let known = known_mask.ok_or_else(|| {
                Error::Argument("generated scenario requires a known-region mask".into())
            })?;
            known.ensure_shape(shape, "known-region mask")?;
            Ok(ConfidenceMask::from_bools(known))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape {
        channel: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    Range {
        channel: &'static str,
        x: usize,
        y: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_material_set(m: &MaterialSet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let expected = m.albedo.shape();
    for (channel, found) in [
        ("roughness", m.roughness.shape()),
        ("metallic", m.metallic.shape()),
        ("bump", m.bump.shape()),
    ] {
        if found != expected {
            report.violations.push(Violation::Shape {
                channel,
                expected,
                found,
            });
        }
    }
    let mut check = |channel: &'static str, w: usize, i: usize, v: f64| {
        if !(0.0..=1.0).contains(&v) {
            report.violations.push(Violation::Range {
                channel,
                x: i % w,
                y: i / w,
                value: v,
            });
        }
    };
    for (name, g) in [("albedo", &m.albedo), ("bump", &m.bump)] {
        for (i, px) in g.iter().enumerate() {
            for &v in px {
                check(name, g.width(), i, v);
            }
        }
    }
    for (name, g) in [("roughness", &m.roughness), ("metallic", &m.metallic)] {
        for (i, &v) in g.iter().enumerate() {
            check(name, g.width(), i, v);
        }
    }
    report
}
