//! Deterministic strided sampler with a per-step latent override hook.

use rand::Rng;
use rand_distr::StandardNormal;

use super::cond::{unpack_materials, PACKED_CHANNELS};
use super::model::Denoiser;
use super::schedule::{predict_eps, predict_x0, NoiseSchedule};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::material::MaterialSet;

/// Called with the timestep a latent belongs to and the latent itself, first
/// on the initial noise at `T` and then after every update (last at `t = 0`,
/// where the latent is the clean estimate).
pub type LatentOverride<'a> = dyn FnMut(usize, &mut Tensor) + 'a;

/// Timesteps visited by an `n_steps` sampler, from `T` down to 0.
pub fn sampling_timesteps(sched: &NoiseSchedule, n_steps: usize) -> Vec<usize> {
    let t_max = sched.steps();
    (0..=n_steps).rev().map(|k| k * t_max / n_steps).collect()
}

/// Runs the sampler and returns the final latent in `[-1, 1]`.
pub fn sample_latent(
    model: &Denoiser,
    cond: &Tensor,
    tags: &[usize],
    sched: &NoiseSchedule,
    n_steps: usize,
    rng: &mut impl Rng,
    mut hook: Option<&mut LatentOverride<'_>>,
) -> Result<Tensor> {
    if n_steps == 0 || n_steps > sched.steps() {
        return Err(Error::Argument(format!("sampler steps must be in [1, {}], got {n_steps}", sched.steps())));
    }
    let (n, h, w) = (cond.n, cond.h, cond.w);
    let data = (0..n * PACKED_CHANNELS * h * w).map(|_| rng.sample(StandardNormal)).collect();
    let mut z = Tensor::from_vec(n, PACKED_CHANNELS, h, w, data)?;
    let ts = sampling_timesteps(sched, n_steps);
    if let Some(f) = hook.as_deref_mut() {
        f(ts[0], &mut z);
    }
    for pair in ts.windows(2) {
        let (t, t_prev) = (pair[0], pair[1]);
        let tv = vec![t; n];
        let v = model.predict(&z, cond, &tv, tags)?;
        let mut x0 = predict_x0(&z, &v, &tv, sched)?;
        for x in &mut x0.data {
            *x = x.clamp(-1.0, 1.0);
        }
        z = if t_prev == 0 {
            x0
        } else {
            let eps = predict_eps(&z, &v, &tv, sched)?;
            let (s, r) = sched.coefficients(t_prev);
            let mut out = x0;
            for (o, e) in out.data.iter_mut().zip(&eps.data) {
                *o = s * *o + r * e;
            }
            out
        };
        if let Some(f) = hook.as_deref_mut() {
            f(t_prev, &mut z);
        }
    }
    Ok(z)
}

/// Runs the sampler and decodes one material set per batch item.
pub fn sample(
    model: &Denoiser,
    cond: &Tensor,
    tags: &[usize],
    sched: &NoiseSchedule,
    n_steps: usize,
    rng: &mut impl Rng,
    hook: Option<&mut LatentOverride<'_>>,
) -> Result<Vec<MaterialSet>> {
    let z = sample_latent(model, cond, tags, sched, n_steps, rng, hook)?;
    Ok((0..z.n).map(|i| unpack_materials(&z, i)).collect())
}
