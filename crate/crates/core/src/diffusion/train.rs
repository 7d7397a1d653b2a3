//! Training examples, the combined objective with its gradient, Adam, the
//! training loop and the finite-difference gradient check.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::cond::{pack_materials, unpack_materials, ConditioningSet, RefinerConditioning, MATERIAL_TO_PACKED, PACKED_CHANNELS};
use super::loss::{loss_l2, loss_render, loss_render_value, loss_v};
use super::model::Denoiser;
use super::schedule::{add_noise, predict_x0, v_target, NoiseSchedule};
use super::tensor::Tensor;
use crate::dataset::{RefinerSample, TrainingSample};
use crate::error::{Error, Result};
use crate::geometry::GBuffer;
use crate::grid::Grid;
use crate::material::MaterialSet;
use crate::shading::{render, sample_lighting, LightCategory, LightingRig};

/// One supervised denoising example.
#[derive(Debug, Clone)]
pub struct Example {
    /// Packed ground truth in `[-1, 1]`, `(1, 9, h, w)`.
    pub x0: Tensor,
    pub cond: Tensor,
    pub tag: usize,
    pub gt: MaterialSet,
    /// Geometry for the rendering loss; absent for UV-space examples.
    pub gbuf: Option<GBuffer>,
    /// Pixels scored by evaluation metrics.
    pub mask: Grid<bool>,
}

impl Example {
    pub fn estimator(s: &TrainingSample, use_confidence: bool) -> Result<Self> {
        let cond = ConditioningSet {
            image: s.image.clone(),
            confidence: s.confidence.clone(),
            normal: s.normal_map.clone(),
            tag: s.tag,
        };
        Ok(Self {
            x0: pack_materials(&s.gt),
            cond: cond.to_tensor(use_confidence)?,
            tag: s.tag,
            gt: s.gt.clone(),
            gbuf: Some(s.gbuf.clone()),
            mask: s.gbuf.coverage.clone(),
        })
    }

    pub fn refiner(s: &RefinerSample, tag: usize) -> Result<Self> {
        let cond = RefinerConditioning { materials: s.input.clone(), holes: s.holes.clone(), ccm: s.ccm.clone(), tag };
        Ok(Self {
            x0: pack_materials(&s.gt),
            cond: cond.to_tensor()?,
            tag,
            gt: s.gt.clone(),
            gbuf: None,
            mask: s.occupancy.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub batch_size: usize,
    pub lambda_p: f64,
    pub lambda_2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: Some(1.0),
            batch_size: 4,
            lambda_p: 0.1,
            lambda_2: 1.0,
        }
    }
}

/// Random quantities of one step: timesteps, noise and rendering-loss rigs.
#[derive(Debug, Clone)]
pub struct StepDraws {
    pub t: Vec<usize>,
    pub eps: Tensor,
    pub rigs: Vec<Option<LightingRig>>,
}

const LIT_CATEGORIES: [LightCategory; 3] = [LightCategory::Point, LightCategory::Area, LightCategory::Environment];

impl StepDraws {
    /// Timesteps uniform over `[1, T]`, standard-normal noise, and a fresh
    /// lit rig per example that carries geometry.
    pub fn sample(batch: &[&Example], sched: &NoiseSchedule, rng: &mut impl Rng) -> Result<Self> {
        let first = batch.first().ok_or_else(|| Error::Argument("training batch is empty".into()))?;
        let (h, w) = (first.x0.h, first.x0.w);
        let t = batch.iter().map(|_| rng.random_range(1..=sched.steps())).collect();
        let data = (0..batch.len() * PACKED_CHANNELS * h * w).map(|_| rng.sample(StandardNormal)).collect();
        let eps = Tensor::from_vec(batch.len(), PACKED_CHANNELS, h, w, data)?;
        let rigs = batch
            .iter()
            .map(|e| {
                e.gbuf.as_ref().map(|g| {
                    let dir = (g.camera.position - g.camera.target).normalize();
                    let cat = LIT_CATEGORIES[rng.random_range(0..3)];
                    sample_lighting(cat, &dir, rng)
                })
            })
            .collect();
        Ok(Self { t, eps, rigs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub loss_v: f64,
    pub loss_p: f64,
    pub loss_2: f64,
    pub total: f64,
    pub max_grad: f64,
    pub wall_ms: f64,
}

impl StepMetrics {
    pub const TSV_HEADER: &'static str = "step\tloss_v\tloss_p\tloss_2\ttotal\twall_ms";

    pub fn tsv(&self) -> String {
        format!(
            "{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.1}",
            self.step, self.loss_v, self.loss_p, self.loss_2, self.total, self.wall_ms
        )
    }

    pub fn all_finite(&self) -> bool {
        [self.loss_v, self.loss_p, self.loss_2, self.total].iter().all(|v| v.is_finite())
    }
}

fn max_abs(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::max_abs).fold(0.0, f64::max)
}

/// Total loss `L_v + lambda_p L_p + lambda_2 L_2` for fixed draws, with
/// parameter gradients. `L_p` and `L_2` act on the clamped reconstruction.
pub fn loss_and_grad(model: &Denoiser, batch: &[&Example], draws: &StepDraws, sched: &NoiseSchedule, cfg: &TrainConfig) -> Result<(StepMetrics, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Argument("training batch is empty".into()));
    }
    let x0 = Tensor::stack(&batch.iter().map(|e| e.x0.clone()).collect::<Vec<_>>())?;
    let cond = Tensor::stack(&batch.iter().map(|e| e.cond.clone()).collect::<Vec<_>>())?;
    let tags: Vec<usize> = batch.iter().map(|e| e.tag).collect();
    let z = add_noise(&x0, &draws.eps, &draws.t, sched)?;
    let v = v_target(&x0, &draws.eps, &draws.t, sched)?;
    let fp = model.forward(&z, &cond, &draws.t, &tags)?;
    let pred = fp.output();
    let (lv, mut dpred) = loss_v(pred, &v)?;
    let x0_hat = predict_x0(&z, pred, &draws.t, sched)?;
    let nb = batch.len() as f64;
    let hw = x0.plane();
    let (mut lp, mut l2) = (0.0, 0.0);
    for (n, ex) in batch.iter().enumerate() {
        let mat = unpack_materials(&x0_hat, n);
        let mut gmat = Grid::filled(mat.width(), mat.height(), [0.0; 8]);
        let (l, g) = loss_l2(&mat, &ex.gt)?;
        l2 += l / nb;
        if cfg.lambda_2 != 0.0 {
            for (d, s) in gmat.as_mut_slice().iter_mut().zip(g.iter()) {
                for c in 0..8 {
                    d[c] += cfg.lambda_2 * s[c] / nb;
                }
            }
        }
        if let (Some(gbuf), Some(rig)) = (&ex.gbuf, &draws.rigs[n]) {
            let gt_render = render(gbuf, &ex.gt, rig)?;
            if cfg.lambda_p != 0.0 {
                let (l, g) = loss_render(&mat, gbuf, rig, &gt_render)?;
                lp += l / nb;
                for (d, s) in gmat.as_mut_slice().iter_mut().zip(g.iter()) {
                    for c in 0..8 {
                        d[c] += cfg.lambda_p * s[c] / nb;
                    }
                }
            } else {
                lp += loss_render_value(&mat, gbuf, rig, &gt_render)? / nb;
            }
        }
        // chain through clamp((x + 1) / 2) and x = s z - r v
        let (_, r) = sched.coefficients(draws.t[n]);
        let base = n * x0.item_len();
        for i in 0..hw {
            for (c, &k) in MATERIAL_TO_PACKED.iter().enumerate() {
                let j = base + k * hw + i;
                let u = (x0_hat.data[j] + 1.0) * 0.5;
                if u > 0.0 && u < 1.0 {
                    dpred.data[j] -= gmat[i][c] * 0.5 * r;
                }
            }
        }
    }
    let total = lv + cfg.lambda_p * lp + cfg.lambda_2 * l2;
    let grads = fp.backward(dpred);
    let metrics = StepMetrics { step: 0, loss_v: lv, loss_p: lp, loss_2: l2, total, max_grad: max_abs(&grads), wall_ms: 0.0 };
    Ok((metrics, grads))
}

/// Adam with optional decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    steps: u64,
}

impl Adam {
    pub fn new(model: &Denoiser) -> Self {
        let zeros: Vec<Tensor> = model.params.tensors.iter().map(Tensor::zeros_like).collect();
        Self { m: zeros.clone(), v: zeros, steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn update(&mut self, model: &mut Denoiser, grads: &[Tensor], cfg: &TrainConfig) {
        self.steps += 1;
        let scale = match cfg.grad_clip {
            Some(c) => {
                let norm = grads.iter().flat_map(|g| &g.data).map(|v| v * v).sum::<f64>().sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let b1t = 1.0 - cfg.beta1.powi(self.steps as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.steps as i32);
        for (((p, g), m), v) in model.params.tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.data.len() {
                let gi = g.data[i] * scale;
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let mh = m.data[i] / b1t;
                let vh = v.data[i] / b2t;
                p.data[i] -= cfg.lr * (mh / (vh.sqrt() + cfg.adam_eps) + cfg.weight_decay * p.data[i]);
            }
        }
    }
}

/// One optimizer step on `batch`; non-finite losses or gradients abort with
/// the step, the offending term and the largest gradient magnitude.
pub fn train_step(
    model: &mut Denoiser,
    batch: &[&Example],
    sched: &NoiseSchedule,
    opt: &mut Adam,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<StepMetrics> {
    let draws = StepDraws::sample(batch, sched, rng)?;
    train_step_with_draws(model, batch, &draws, sched, opt, cfg)
}

/// [`train_step`] with caller-supplied timesteps, noise and rigs.
pub fn train_step_with_draws(
    model: &mut Denoiser,
    batch: &[&Example],
    draws: &StepDraws,
    sched: &NoiseSchedule,
    opt: &mut Adam,
    cfg: &TrainConfig,
) -> Result<StepMetrics> {
    let start = Instant::now();
    let step = opt.steps() as usize + 1;
    let (mut m, grads) = loss_and_grad(model, batch, draws, sched, cfg)?;
    m.step = step;
    for (term, v) in [("loss_v", m.loss_v), ("loss_p", m.loss_p), ("loss_2", m.loss_2), ("total", m.total)] {
        if !v.is_finite() {
            return Err(Error::NonFinite { step, term, max_grad: m.max_grad });
        }
    }
    if !m.max_grad.is_finite() {
        return Err(Error::NonFinite { step, term: "gradient", max_grad: m.max_grad });
    }
    opt.update(model, &grads, cfg);
    m.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(m)
}

/// Runs `steps` optimizer steps on minibatches drawn from `examples`
/// (reshuffled each pass), calling `on_step` after every step.
pub fn train(
    model: &mut Denoiser,
    examples: &[Example],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    steps: usize,
    rng: &mut impl Rng,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<Vec<StepMetrics>> {
    let mut trainer = Trainer::new(model, examples.len())?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let m = trainer.step(model, examples, sched, cfg, rng)?;
        on_step(&m);
        out.push(m);
    }
    Ok(out)
}

/// Optimizer state plus an epoch-shuffled cursor over the examples, so a
/// caller can interleave training steps with checkpointing.
#[derive(Debug, Clone)]
pub struct Trainer {
    opt: Adam,
    order: Vec<usize>,
    cursor: usize,
}

impl Trainer {
    pub fn new(model: &Denoiser, n_examples: usize) -> Result<Self> {
        if n_examples == 0 {
            return Err(Error::Argument("no training examples".into()));
        }
        Ok(Self {
            opt: Adam::new(model),
            order: (0..n_examples).collect(),
            cursor: n_examples,
        })
    }

    pub fn steps(&self) -> u64 {
        self.opt.steps()
    }

    /// One optimizer step on the next batch; reshuffles at each epoch boundary.
    pub fn step(
        &mut self,
        model: &mut Denoiser,
        examples: &[Example],
        sched: &NoiseSchedule,
        cfg: &TrainConfig,
        rng: &mut impl Rng,
    ) -> Result<StepMetrics> {
        if examples.len() != self.order.len() {
            return Err(Error::Argument(format!(
                "trainer built for {} examples, got {}",
                self.order.len(),
                examples.len()
            )));
        }
        let bs = cfg.batch_size.clamp(1, examples.len());
        let mut batch = Vec::with_capacity(bs);
        while batch.len() < bs {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            batch.push(&examples[self.order[self.cursor]]);
            self.cursor += 1;
        }
        train_step(model, &batch, sched, &mut self.opt, cfg, rng)
    }
}

/// Finite-difference step used by [`grad_check`].
pub const GRAD_CHECK_EPS: f64 = 1e-3;
/// Gradients below this magnitude on both sides count as agreeing.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: Vec<Probe>,
}

/// Compares analytic gradients of the total loss with central differences on
/// `n_probes` parameters drawn (proportionally to tensor size) from `seed`.
pub fn grad_check(
    model: &Denoiser,
    batch: &[&Example],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    n_probes: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = StepDraws::sample(batch, sched, &mut rng)?;
    grad_check_with(model, batch, sched, cfg, &draws, n_probes, &mut rng)
}

/// [`grad_check`] with caller-supplied draws.
pub fn grad_check_with(
    model: &Denoiser,
    batch: &[&Example],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    draws: &StepDraws,
    n_probes: usize,
    rng: &mut impl Rng,
) -> Result<GradCheckReport> {
    if n_probes == 0 {
        return Err(Error::Argument("grad_check needs at least one probe".into()));
    }
    let (_, grads) = loss_and_grad(model, batch, draws, sched, cfg)?;
    let total = model.params.count();
    let mut work = model.clone();
    let mut probes = Vec::with_capacity(n_probes);
    let mut max_rel: f64 = 0.0;
    for _ in 0..n_probes {
        let mut flat = rng.random_range(0..total);
        let mut p = 0;
        while flat >= work.params.tensors[p].len() {
            flat -= work.params.tensors[p].len();
            p += 1;
        }
        let orig = work.params.tensors[p].data[flat];
        work.params.tensors[p].data[flat] = orig + GRAD_CHECK_EPS;
        let fp = loss_and_grad(&work, batch, draws, sched, cfg)?.0.total;
        work.params.tensors[p].data[flat] = orig - GRAD_CHECK_EPS;
        let fm = loss_and_grad(&work, batch, draws, sched, cfg)?.0.total;
        work.params.tensors[p].data[flat] = orig;
        let numeric = (fp - fm) / (2.0 * GRAD_CHECK_EPS);
        let analytic = grads[p].data[flat];
        let denom = analytic.abs().max(numeric.abs());
        let rel = if denom < GRAD_CHECK_FLOOR { 0.0 } else { (analytic - numeric).abs() / denom };
        max_rel = max_rel.max(rel);
        probes.push(Probe { param: work.params.names[p].clone(), index: flat, analytic, numeric, rel_error: rel });
    }
    Ok(GradCheckReport { max_rel_error: max_rel, probes })
}
