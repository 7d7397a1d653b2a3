//! Training objectives: v-prediction MSE, the pyramid rendering loss and the
//! per-component material L2, each with its gradient.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::GBuffer;
use crate::grid::RgbGrid;
use crate::material::{MaterialSet, MATERIAL_CHANNELS};
use crate::shading::{render, render_backward, render_with_jacobian, LightingRig};

/// Feature levels compared by the rendering loss.
pub const PYRAMID_LEVELS: usize = 4;
/// Smallest level side kept in the pyramid.
pub const PYRAMID_MIN_SIZE: usize = 8;
/// Channels per pyramid pixel: colour, horizontal and vertical differences.
pub const FEATURE_CHANNELS: usize = 9;

/// Mean squared error over all elements of the three modalities (which have
/// equal channel counts, so the mean weighs them equally) and its gradient.
pub fn loss_v(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension { what: "v prediction", expected: (target.item_len(), target.n), found: (pred.item_len(), pred.n) });
    }
    let n = pred.len().max(1) as f64;
    let mut grad = pred.zeros_like();
    let mut sum = 0.0;
    for ((g, p), t) in grad.data.iter_mut().zip(&pred.data).zip(&target.data) {
        let d = p - t;
        sum += d * d;
        *g = 2.0 * d / n;
    }
    Ok((sum / n, grad))
}

/// One pyramid level: `w x h` pixels of [`FEATURE_CHANNELS`] values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; FEATURE_CHANNELS]>,
}

/// Number of levels kept for a `w x h` image: halvings while the smaller side
/// stays at least [`PYRAMID_MIN_SIZE`], at most [`PYRAMID_LEVELS`].
pub fn pyramid_level_count(width: usize, height: usize) -> usize {
    let mut s = width.min(height);
    let mut n = 0;
    while n < PYRAMID_LEVELS && s >= PYRAMID_MIN_SIZE {
        n += 1;
        s /= 2;
    }
    n.max(1)
}

fn downsample(img: &[[f64; 3]], w: usize, h: usize) -> (Vec<[f64; 3]>, usize, usize) {
    let (w2, h2) = (w / 2, h / 2);
    let mut out = vec![[0.0; 3]; w2 * h2];
    for y in 0..h2 {
        for x in 0..w2 {
            let mut acc = [0.0; 3];
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let p = img[(2 * y + dy) * w + 2 * x + dx];
                for c in 0..3 {
                    acc[c] += 0.25 * p[c];
                }
            }
            out[y * w2 + x] = acc;
        }
    }
    (out, w2, h2)
}

fn features(img: &[[f64; 3]], w: usize, h: usize) -> Vec<[f64; FEATURE_CHANNELS]> {
    let mut out = vec![[0.0; FEATURE_CHANNELS]; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = img[y * w + x];
            let f = &mut out[y * w + x];
            for c in 0..3 {
                f[c] = p[c];
                if x + 1 < w {
                    f[3 + c] = img[y * w + x + 1][c] - p[c];
                }
                if y + 1 < h {
                    f[6 + c] = img[(y + 1) * w + x][c] - p[c];
                }
            }
        }
    }
    out
}

/// Colour plus forward-difference gradients at successive 2x2-average
/// halvings. Images too small for all levels get fewer (logged).
pub fn pyramid_features(img: &RgbGrid) -> Vec<FeatureLevel> {
    let (mut w, mut h) = img.shape();
    let n = pyramid_level_count(w, h);
    if n < PYRAMID_LEVELS {
        log::debug!("pyramid for {w}x{h} image has {n} of {PYRAMID_LEVELS} levels");
    }
    let mut cur: Vec<[f64; 3]> = img.as_slice().to_vec();
    let mut levels = Vec::with_capacity(n);
    for l in 0..n {
        if l > 0 {
            let (next, w2, h2) = downsample(&cur, w, h);
            cur = next;
            w = w2;
            h = h2;
        }
        levels.push(FeatureLevel { width: w, height: h, data: features(&cur, w, h) });
    }
    levels
}

/// Adjoint of [`pyramid_features`]: image gradient from per-level feature gradients.
pub fn pyramid_backward(width: usize, height: usize, grads: &[FeatureLevel]) -> RgbGrid {
    // sizes of each level
    let mut sizes = vec![(width, height)];
    for _ in 1..grads.len() {
        let (w, h) = *sizes.last().expect("non-empty");
        sizes.push((w / 2, h / 2));
    }
    let mut carry: Vec<[f64; 3]> = Vec::new();
    for l in (0..grads.len()).rev() {
        let (w, h) = sizes[l];
        let mut d = vec![[0.0; 3]; w * h];
        // gradient from the coarser level through the 2x2 average
        if !carry.is_empty() {
            let (w2, h2) = sizes[l + 1];
            for y in 0..h2 {
                for x in 0..w2 {
                    let g = carry[y * w2 + x];
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let t = &mut d[(2 * y + dy) * w + 2 * x + dx];
                        for c in 0..3 {
                            t[c] += 0.25 * g[c];
                        }
                    }
                }
            }
        }
        let gl = &grads[l].data;
        for y in 0..h {
            for x in 0..w {
                let f = gl[y * w + x];
                for c in 0..3 {
                    d[y * w + x][c] += f[c];
                    if x + 1 < w {
                        d[y * w + x + 1][c] += f[3 + c];
                        d[y * w + x][c] -= f[3 + c];
                    }
                    if y + 1 < h {
                        d[(y + 1) * w + x][c] += f[6 + c];
                        d[y * w + x][c] -= f[6 + c];
                    }
                }
            }
        }
        carry = d;
    }
    RgbGrid::from_vec(width, height, carry).expect("level 0 has the image shape")
}

/// Sum over levels of the mean squared feature difference, with the
/// gradient of that sum with respect to the first image.
pub fn feature_loss(a: &RgbGrid, b: &RgbGrid) -> Result<(f64, RgbGrid)> {
    b.ensure_shape(a.shape(), "rendering-loss target")?;
    let fa = pyramid_features(a);
    let fb = pyramid_features(b);
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(fa.len());
    for (la, lb) in fa.iter().zip(&fb) {
        let n = (la.data.len() * FEATURE_CHANNELS) as f64;
        let mut g = la.clone();
        for ((ga, pa), pb) in g.data.iter_mut().zip(&la.data).zip(&lb.data) {
            for c in 0..FEATURE_CHANNELS {
                let d = pa[c] - pb[c];
                total += d * d / n;
                ga[c] = 2.0 * d / n;
            }
        }
        grads.push(g);
    }
    let (w, h) = a.shape();
    Ok((total, pyramid_backward(w, h, &grads)))
}

/// Rendering loss of `pred` against `gt_render` under `rig`, with the
/// gradient with respect to the eight material channels of `pred`.
pub fn loss_render(pred: &MaterialSet, gbuf: &GBuffer, rig: &LightingRig, gt_render: &RgbGrid) -> Result<(f64, crate::grid::Grid<[f64; MATERIAL_CHANNELS]>)> {
    let (img, jac) = render_with_jacobian(gbuf, pred, rig)?;
    let (loss, dimg) = feature_loss(&img, gt_render)?;
    Ok((loss, render_backward(&jac, &dimg)?))
}

/// Rendering loss value only.
pub fn loss_render_value(pred: &MaterialSet, gbuf: &GBuffer, rig: &LightingRig, gt_render: &RgbGrid) -> Result<f64> {
    let img = render(gbuf, pred, rig)?;
    Ok(feature_loss(&img, gt_render)?.0)
}

/// Mean over the four components (albedo, roughness, metallic, bump) of each
/// component's MSE, with the gradient per material channel.
pub fn loss_l2(pred: &MaterialSet, gt: &MaterialSet) -> Result<(f64, crate::grid::Grid<[f64; MATERIAL_CHANNELS]>)> {
    if pred.shape() != gt.shape() {
        return Err(Error::Dimension { what: "material L2", expected: gt.shape(), found: pred.shape() });
    }
    let (w, h) = pred.shape();
    let px = (w * h).max(1) as f64;
    // channel -> component size
    const SIZE: [f64; MATERIAL_CHANNELS] = [3.0, 3.0, 3.0, 1.0, 1.0, 3.0, 3.0, 3.0];
    let mut grad = crate::grid::Grid::filled(w, h, [0.0; MATERIAL_CHANNELS]);
    let mut total = 0.0;
    for i in 0..w * h {
        let p = pred.get_index(i).to_channels();
        let g = gt.get_index(i).to_channels();
        for c in 0..MATERIAL_CHANNELS {
            let d = p[c] - g[c];
            let scale = 0.25 / (SIZE[c] * px);
            total += scale * d * d;
            grad[i][c] = 2.0 * scale * d;
        }
    }
    Ok((total, grad))
}
