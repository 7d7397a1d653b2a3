//! Image degradations, inconsistent-lighting composites and refiner training
//! pairs.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{Grid, RgbGrid};
use crate::material::{ConfidenceMask, MaterialSample, MaterialSet, MATERIAL_CHANNELS};

pub const BLUR_SIGMA: (f64, f64) = (0.5, 2.0);
pub const COLOR_SHIFT: (f64, f64) = (0.7, 1.3);
pub const NOISE_SIGMA: (f64, f64) = (0.0, 0.03);
pub const RECT_FRACTION: (f64, f64) = (0.2, 0.6);
pub const HOLE_FRACTION: (f64, f64) = (0.05, 0.3);
pub const MAX_BLOBS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Degradation {
    Blur { sigma: f64 },
    ColorShift { factors: [f64; 3] },
    Noise { sigma: f64 },
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &RgbGrid, sigma: f64) -> RgbGrid {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let (w, h) = img.shape();
    let pass = |src: &RgbGrid, horizontal: bool| {
        Grid::from_fn(w, h, |x, y| {
            let mut acc = [0.0; 3];
            for (j, kv) in k.iter().enumerate() {
                let o = j as isize - r;
                let (sx, sy) = if horizontal {
                    ((x as isize + o).clamp(0, w as isize - 1) as usize, y)
                } else {
                    (x, (y as isize + o).clamp(0, h as isize - 1) as usize)
                };
                let p = src[(sx, sy)];
                for c in 0..3 {
                    acc[c] += kv * p[c];
                }
            }
            acc
        })
    };
    pass(&pass(img, true), false)
}

/// Applies one degradation; the result is clamped to `[0, 1]`.
pub fn apply_degradation(img: &RgbGrid, d: &Degradation, rng: &mut impl Rng) -> RgbGrid {
    let out = match *d {
        Degradation::Blur { sigma } => gaussian_blur(img, sigma),
        Degradation::ColorShift { factors } => img.map(|p| [p[0] * factors[0], p[1] * factors[1], p[2] * factors[2]]),
        Degradation::Noise { sigma } => {
            if sigma > 0.0 {
                let n = Normal::new(0.0, sigma).expect("positive sigma");
                img.map(|p| p.map(|c| c + n.sample(rng)))
            } else {
                img.clone()
            }
        }
    };
    out.map(|p| p.map(|c| c.clamp(0.0, 1.0)))
}

pub fn sample_degradations(rng: &mut impl Rng) -> Vec<Degradation> {
    let count = rng.random_range(1..=2);
    let mut kinds = vec![0usize, 1, 2];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = kinds.remove(rng.random_range(0..kinds.len()));
        out.push(match kind {
            0 => Degradation::Blur {
                sigma: rng.random_range(BLUR_SIGMA.0..=BLUR_SIGMA.1),
            },
            1 => Degradation::ColorShift {
                factors: std::array::from_fn(|_| rng.random_range(COLOR_SHIFT.0..=COLOR_SHIFT.1)),
            },
            _ => Degradation::Noise {
                sigma: rng.random_range(NOISE_SIGMA.0..=NOISE_SIGMA.1),
            },
        });
    }
    out
}

/// Applies one or two randomly chosen degradations and clamps to `[0, 1]`.
pub fn degrade(img: &RgbGrid, rng: &mut impl Rng) -> RgbGrid {
    let ops = sample_degradations(rng);
    degrade_with(img, &ops, rng)
}

pub fn degrade_with(img: &RgbGrid, ops: &[Degradation], rng: &mut impl Rng) -> RgbGrid {
    let mut out = img.map(|p| p.map(|c| c.clamp(0.0, 1.0)));
    for d in ops {
        out = apply_degradation(&out, d, rng);
    }
    out
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub const EMPTY: Rect = Rect { x0: 0, y0: 0, x1: 0, y1: 0 };

    pub fn full(w: usize, h: usize) -> Rect {
        Rect { x0: 0, y0: 0, x1: w, y1: h }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Random axis-aligned rectangle covering a fraction of the frame drawn
/// uniformly from `[0.2, 0.6]`.
pub fn sample_rect(w: usize, h: usize, rng: &mut impl Rng) -> Rect {
    let f = rng.random_range(RECT_FRACTION.0..=RECT_FRACTION.1);
    let target = f * (w * h) as f64;
    let min_w = ((f * w as f64).ceil() as usize).clamp(1, w);
    let rw = rng.random_range(min_w..=w);
    let rh = ((target / rw as f64).round() as usize).clamp(1, h);
    let x0 = rng.random_range(0..=w - rw);
    let y0 = rng.random_range(0..=h - rh);
    Rect { x0, y0, x1: x0 + rw, y1: y0 + rh }
}

/// Stitches `degrade(img_b)` into `img_a` inside `rect`; confidence is 0 inside
/// the rectangle and 1 elsewhere.
pub fn compose_with_rect(img_a: &RgbGrid, img_b: &RgbGrid, rect: Rect, rng: &mut impl Rng) -> Result<(RgbGrid, ConfidenceMask)> {
    if img_a.shape() != img_b.shape() {
        return Err(Error::Dimension {
            what: "composite inputs",
            expected: img_a.shape(),
            found: img_b.shape(),
        });
    }
    let (w, h) = img_a.shape();
    let degraded = if rect.area() > 0 { Some(degrade(img_b, rng)) } else { None };
    let mut out = img_a.clone();
    let mut mask = Grid::filled(w, h, true);
    if let Some(d) = degraded {
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                out[(x, y)] = d[(x, y)];
                mask[(x, y)] = false;
            }
        }
    }
    Ok((out, ConfidenceMask::from_bools(&mask)))
}

pub fn compose_inconsistent(img_a: &RgbGrid, img_b: &RgbGrid, rng: &mut impl Rng) -> Result<(RgbGrid, ConfidenceMask)> {
    let (w, h) = img_a.shape();
    let rect = sample_rect(w, h, rng);
    compose_with_rect(img_a, img_b, rect, rng)
}

#[derive(Debug, Clone)]
pub struct RefinerSample {
    /// Ground truth with holes zeroed and the rest possibly degraded.
    pub input: MaterialSet,
    pub holes: Grid<bool>,
    pub ccm: RgbGrid,
    pub occupancy: Grid<bool>,
    /// Ground truth restricted to occupied texels (background elsewhere).
    pub gt: MaterialSet,
    pub degraded: bool,
}

impl RefinerSample {
    pub fn hole_fraction(&self) -> f64 {
        let occ = self.occupancy.iter().filter(|&&o| o).count();
        if occ == 0 {
            return 0.0;
        }
        self.holes.iter().filter(|&&h| h).count() as f64 / occ as f64
    }
}

fn blob_mask(centers: &[(f64, f64)], radius: f64, occupancy: &Grid<bool>) -> (Grid<bool>, usize) {
    let (w, h) = occupancy.shape();
    let r2 = radius * radius;
    let mut count = 0;
    let mask = Grid::from_fn(w, h, |x, y| {
        if !occupancy[(x, y)] {
            return false;
        }
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let hit = centers.iter().any(|&(cx, cy)| (px - cx).powi(2) + (py - cy).powi(2) <= r2);
        count += hit as usize;
        hit
    });
    (mask, count)
}

/// Circular holes around `n_blobs` random occupied texels, with a common
/// radius chosen so the union covers (as nearly as the texel grid allows) a
/// fraction `target` of the occupancy, never exceeding the upper bound.
pub fn sample_holes(occupancy: &Grid<bool>, n_blobs: usize, target: f64, rng: &mut impl Rng) -> Grid<bool> {
    let (w, h) = occupancy.shape();
    let occupied: Vec<usize> = (0..w * h).filter(|&i| occupancy[i]).collect();
    if n_blobs == 0 || occupied.is_empty() {
        return Grid::filled(w, h, false);
    }
    let centers: Vec<(f64, f64)> = (0..n_blobs)
        .map(|_| {
            let i = occupied[rng.random_range(0..occupied.len())];
            ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5)
        })
        .collect();
    let n_occ = occupied.len() as f64;
    let (mut lo, mut hi) = (0.0, (w.max(h) as f64) * 1.5);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let (_, c) = blob_mask(&centers, mid, occupancy);
        if (c as f64) / n_occ < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (mask_hi, c_hi) = blob_mask(&centers, hi, occupancy);
    if (c_hi as f64) / n_occ <= HOLE_FRACTION.1 {
        mask_hi
    } else {
        blob_mask(&centers, lo, occupancy).0
    }
}

fn degrade_materials(m: &MaterialSet, rng: &mut impl Rng) -> MaterialSet {
    let ops = sample_degradations(rng);
    let rm = m.roughness.zip_map(&m.metallic, |&r, &mt| [r, mt, 0.0]).expect("shared shape");
    let albedo = degrade_with(&m.albedo, &ops, rng);
    let rm = degrade_with(&rm, &ops, rng);
    let bump = degrade_with(&m.bump, &ops, rng);
    MaterialSet::new(albedo, rm.map(|p| p[0]), rm.map(|p| p[1]), bump).expect("shared shape")
}

/// Refiner pair with an explicit blob count and degradation switch.
pub fn make_refiner_pair_with(
    uv_gt: &MaterialSet,
    ccm: &RgbGrid,
    occupancy: &Grid<bool>,
    n_blobs: usize,
    degrade_rest: bool,
    rng: &mut impl Rng,
) -> Result<RefinerSample> {
    let shape = uv_gt.shape();
    ccm.ensure_shape(shape, "ccm")?;
    occupancy.ensure_shape(shape, "occupancy")?;
    let (w, h) = shape;
    let gt = MaterialSet::from_fn(w, h, |x, y| {
        if occupancy[(x, y)] {
            uv_gt.get(x, y)
        } else {
            MaterialSample::background()
        }
    });
    let target = rng.random_range(HOLE_FRACTION.0..=HOLE_FRACTION.1);
    let holes = sample_holes(occupancy, n_blobs, target, rng);
    let mut input = if degrade_rest { degrade_materials(&gt, rng) } else { gt.clone() };
    for i in 0..w * h {
        if holes[i] {
            input.set_index(i, MaterialSample::from_channels(&[0.0; MATERIAL_CHANNELS]));
        } else if !occupancy[i] {
            input.set_index(i, MaterialSample::background());
        }
    }
    Ok(RefinerSample {
        input,
        holes,
        ccm: ccm.clone(),
        occupancy: occupancy.clone(),
        gt,
        degraded: degrade_rest,
    })
}

/// 1 to 4 blobs covering 5-30% of the occupied atlas; the remaining texels are
/// degraded with probability 0.5.
pub fn make_refiner_pair(uv_gt: &MaterialSet, ccm: &RgbGrid, occupancy: &Grid<bool>, rng: &mut impl Rng) -> Result<RefinerSample> {
    if !occupancy.iter().any(|&o| o) {
        return Err(Error::Argument("refiner pair needs a non-empty occupancy".into()));
    }
    let n = rng.random_range(1..=MAX_BLOBS);
    let d = rng.random_bool(0.5);
    make_refiner_pair_with(uv_gt, ccm, occupancy, n, d, rng)
}
