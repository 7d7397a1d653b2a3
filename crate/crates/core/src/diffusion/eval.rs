//! Held-out material error of a trained denoiser.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Denoiser;
use super::sample::sample;
use super::schedule::NoiseSchedule;
use super::train::Example;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::material::MaterialSet;

/// Per-component RMSE (albedo, roughness, metallic, bump) over masked pixels.
pub fn material_rmse(pred: &MaterialSet, gt: &MaterialSet, mask: &Grid<bool>) -> Result<[f64; 4]> {
    if pred.shape() != gt.shape() {
        return Err(Error::Dimension { what: "rmse materials", expected: gt.shape(), found: pred.shape() });
    }
    mask.ensure_shape(gt.shape(), "rmse mask")?;
    let mut sums = [0.0; 4];
    let mut count = 0usize;
    for i in 0..mask.len() {
        if !mask[i] {
            continue;
        }
        count += 1;
        let (p, g) = (pred.get_index(i), gt.get_index(i));
        for c in 0..3 {
            sums[0] += (p.albedo[c] - g.albedo[c]).powi(2) / 3.0;
            sums[3] += (p.bump[c] - g.bump[c]).powi(2) / 3.0;
        }
        sums[1] += (p.roughness - g.roughness).powi(2);
        sums[2] += (p.metallic - g.metallic).powi(2);
    }
    if count == 0 {
        return Ok([0.0; 4]);
    }
    Ok(sums.map(|s| (s / count as f64).sqrt()))
}

pub fn mean_rmse(pred: &MaterialSet, gt: &MaterialSet, mask: &Grid<bool>) -> Result<f64> {
    Ok(material_rmse(pred, gt, mask)?.iter().sum::<f64>() / 4.0)
}

/// Mean over examples of the mean component RMSE of sampled predictions.
/// Example `i` uses sampler noise seeded with `seed + i`.
pub fn evaluate(model: &Denoiser, examples: &[Example], sched: &NoiseSchedule, n_steps: usize, seed: u64) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Argument("no evaluation examples".into()));
    }
    let mut total = 0.0;
    for (i, ex) in examples.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let pred = sample(model, &ex.cond, &[ex.tag], sched, n_steps, &mut rng, None)?;
        total += mean_rmse(&pred[0], &ex.gt, &ex.mask)?;
    }
    Ok(total / examples.len() as f64)
}
