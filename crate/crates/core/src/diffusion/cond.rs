//! Conversions between material sets / conditioning inputs and tensors.

use super::schedule::{predict_x0, NoiseSchedule};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::grid::{Grid, RgbGrid};
use crate::material::{ConfidenceMask, MaterialSet};

/// Channels of the packed material tensor: albedo, (1, roughness, metallic), bump.
pub const PACKED_CHANNELS: usize = 9;
/// Estimator conditioning: image, confidence, normal map.
pub const ESTIMATOR_COND_CHANNELS: usize = 7;
/// Refiner conditioning: packed materials, hole mask, CCM.
pub const REFINER_COND_CHANNELS: usize = 13;

/// Packed channel feeding each of the eight material channels.
pub const MATERIAL_TO_PACKED: [usize; 8] = [0, 1, 2, 4, 5, 6, 7, 8];

fn to_signed(v: f64) -> f64 {
    2.0 * v - 1.0
}

/// Packs a set into a `(1, 9, h, w)` tensor rescaled to `[-1, 1]`.
pub fn pack_materials(m: &MaterialSet) -> Tensor {
    let (w, h) = m.shape();
    let hw = w * h;
    let mut t = Tensor::zeros(1, PACKED_CHANNELS, h, w);
    for i in 0..hw {
        for (c, v) in m.get_index(i).to_packed().iter().enumerate() {
            t.data[c * hw + i] = to_signed(*v);
        }
    }
    t
}

/// Inverse of [`pack_materials`] for batch item `n`: rescales to `[0, 1]`,
/// clamps, and reads roughness/metallic from the green/blue packed channels.
/// The red packed channel carries no information and is ignored.
pub fn unpack_materials(x: &Tensor, n: usize) -> MaterialSet {
    let (w, h) = (x.w, x.h);
    let hw = w * h;
    let it = x.item(n);
    let ch = |c: usize, i: usize| ((it[c * hw + i] + 1.0) * 0.5).clamp(0.0, 1.0);
    MaterialSet::from_fn(w, h, |px, py| {
        let i = py * w + px;
        crate::material::MaterialSample {
            albedo: [ch(0, i), ch(1, i), ch(2, i)],
            roughness: ch(4, i),
            metallic: ch(5, i),
            bump: [ch(6, i), ch(7, i), ch(8, i)],
        }
    })
}

/// Clean-sample estimate from a latent and a v-prediction, decoded into
/// material sets (one per batch item), clamped to the valid range.
pub fn reconstruct_x0(z: &Tensor, v: &Tensor, t: &[usize], sched: &NoiseSchedule) -> Result<Vec<MaterialSet>> {
    let x0 = predict_x0(z, v, t, sched)?;
    Ok((0..x0.n).map(|n| unpack_materials(&x0, n)).collect())
}

/// Estimator conditioning for one view.
#[derive(Debug, Clone)]
pub struct ConditioningSet {
    pub image: RgbGrid,
    pub confidence: ConfidenceMask,
    pub normal: RgbGrid,
    pub tag: usize,
}

impl ConditioningSet {
    pub fn shape(&self) -> (usize, usize) {
        self.image.shape()
    }

    /// `(1, 7, h, w)` tensor: image clamped to `[0, 1]`, confidence and normal
    /// map, all rescaled to `[-1, 1]`. Without `use_confidence` the
    /// confidence channel is fed as zeros.
    pub fn to_tensor(&self, use_confidence: bool) -> Result<Tensor> {
        let shape = self.image.shape();
        self.confidence.grid().ensure_shape(shape, "confidence mask")?;
        self.normal.ensure_shape(shape, "normal map")?;
        let (w, h) = shape;
        let hw = w * h;
        let mut t = Tensor::zeros(1, ESTIMATOR_COND_CHANNELS, h, w);
        for i in 0..hw {
            for c in 0..3 {
                t.data[c * hw + i] = to_signed(self.image[i][c].clamp(0.0, 1.0));
                t.data[(4 + c) * hw + i] = to_signed(self.normal[i][c]);
            }
            t.data[3 * hw + i] = if use_confidence { to_signed(self.confidence.grid()[i]) } else { 0.0 };
        }
        Ok(t)
    }
}

/// Refiner conditioning for one atlas.
#[derive(Debug, Clone)]
pub struct RefinerConditioning {
    pub materials: MaterialSet,
    pub holes: Grid<bool>,
    pub ccm: RgbGrid,
    pub tag: usize,
}

impl RefinerConditioning {
    pub fn shape(&self) -> (usize, usize) {
        self.materials.shape()
    }

    /// `(1, 13, h, w)` tensor: packed materials, hole mask and CCM, in `[-1, 1]`.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let shape = self.materials.shape();
        self.holes.ensure_shape(shape, "hole mask")?;
        self.ccm.ensure_shape(shape, "ccm")?;
        let (w, h) = shape;
        let hw = w * h;
        let packed = pack_materials(&self.materials);
        let mut t = Tensor::zeros(1, REFINER_COND_CHANNELS, h, w);
        t.data[..PACKED_CHANNELS * hw].copy_from_slice(&packed.data);
        for i in 0..hw {
            t.data[9 * hw + i] = if self.holes[i] { 1.0 } else { -1.0 };
            for c in 0..3 {
                t.data[(10 + c) * hw + i] = to_signed(self.ccm[i][c]);
            }
        }
        Ok(t)
    }
}

pub(crate) fn ensure_cond_channels(t: &Tensor, expected: usize) -> Result<()> {
    if t.c != expected {
        return Err(Error::Dimension { what: "conditioning channels", expected: (expected, 1), found: (t.c, 1) });
    }
    Ok(())
}
