//! Cosine noise schedule and the v-parameterization.

use super::tensor::Tensor;
use crate::error::{Error, Result};

const COSINE_OFFSET: f64 = 0.008;

/// Cumulative signal fractions `alpha_bar[t]` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// `(sqrt(alpha_bar), sqrt(1 - alpha_bar))` at `t`.
    pub fn coefficients(&self, t: usize) -> (f64, f64) {
        let a = self.alpha_bar[t];
        (a.sqrt(), (1.0 - a).sqrt())
    }
}

pub fn make_schedule(steps: usize) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::Argument(format!("noise schedule needs at least 2 steps, got {steps}")));
    }
    let f = |t: usize| {
        let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2;
        x.cos().powi(2)
    };
    let f0 = f(0);
    let mut alpha_bar: Vec<f64> = (0..=steps).map(|t| f(t) / f0).collect();
    alpha_bar[0] = 1.0;
    Ok(NoiseSchedule { steps, alpha_bar })
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            what: "diffusion tensors",
            expected: (a.item_len(), a.n),
            found: (b.item_len(), b.n),
        });
    }
    Ok(())
}

fn check_times(x: &Tensor, t: &[usize], sched: &NoiseSchedule) -> Result<()> {
    if t.len() != x.n {
        return Err(Error::Dimension { what: "timesteps", expected: (x.n, 1), found: (t.len(), 1) });
    }
    if let Some(bad) = t.iter().find(|&&t| t > sched.steps) {
        return Err(Error::Argument(format!("timestep {bad} outside [0, {}]", sched.steps)));
    }
    Ok(())
}

/// Applies `f(a, b, sqrt_ab, sqrt_1mab)` element-wise with per-item timesteps.
fn combine(a: &Tensor, b: &Tensor, t: &[usize], sched: &NoiseSchedule, f: impl Fn(f64, f64, f64, f64) -> f64) -> Result<Tensor> {
    check_pair(a, b)?;
    check_times(a, t, sched)?;
    let mut out = a.zeros_like();
    let l = a.item_len();
    for (n, &tn) in t.iter().enumerate() {
        let (s, r) = sched.coefficients(tn);
        for i in n * l..(n + 1) * l {
            out.data[i] = f(a.data[i], b.data[i], s, r);
        }
    }
    Ok(out)
}

/// `z_t = sqrt(ab) x0 + sqrt(1 - ab) eps`.
pub fn add_noise(x0: &Tensor, eps: &Tensor, t: &[usize], sched: &NoiseSchedule) -> Result<Tensor> {
    combine(x0, eps, t, sched, |x, e, s, r| s * x + r * e)
}

/// `v_t = sqrt(ab) eps - sqrt(1 - ab) x0`.
pub fn v_target(x0: &Tensor, eps: &Tensor, t: &[usize], sched: &NoiseSchedule) -> Result<Tensor> {
    combine(x0, eps, t, sched, |x, e, s, r| s * e - r * x)
}

/// `x0 = sqrt(ab) z_t - sqrt(1 - ab) v`, in the model's `[-1, 1]` space and unclamped.
pub fn predict_x0(z: &Tensor, v: &Tensor, t: &[usize], sched: &NoiseSchedule) -> Result<Tensor> {
    combine(z, v, t, sched, |z, v, s, r| s * z - r * v)
}

/// `eps = sqrt(1 - ab) z_t + sqrt(ab) v`.
pub fn predict_eps(z: &Tensor, v: &Tensor, t: &[usize], sched: &NoiseSchedule) -> Result<Tensor> {
    combine(z, v, t, sched, |z, v, s, r| r * z + s * v)
}
