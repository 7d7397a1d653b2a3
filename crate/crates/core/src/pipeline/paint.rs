//! Progressive per-view painting: known-region projection, confidence
//! scheduling, masked latent blending during sampling, and baking.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::refine::{consistency_metric, refine_uv};
use crate::dataset::objects::TAGS;
use crate::diffusion::cond::{pack_materials, unpack_materials, ConditioningSet};
use crate::diffusion::sample::sample_latent;
use crate::diffusion::{add_noise, Denoiser, NoiseSchedule, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{
    bake_view_to_uv, compute_ccm_uv, project_known, pullpush_fill, rasterize_gbuffer, BakeState, Camera, GBuffer, Mesh,
};
use crate::grid::{Grid, RgbGrid};
use crate::material::{assign_confidence, ConfidenceMask, LightingScenario, MaterialSample, MaterialSet};

/// Everything needed to paint one object.
#[derive(Debug, Clone)]
pub struct PaintJob {
    pub mesh: Mesh,
    pub scenario: LightingScenario,
    pub tag: usize,
    pub cameras: Vec<Camera>,
    /// One conditioning image per camera, at the camera's resolution.
    pub images: Vec<RgbGrid>,
    pub sampler_steps: usize,
    pub uv_res: usize,
    pub seed: u64,
    /// Initialize each view's latent from the projected known regions.
    pub latent_init: bool,
    /// Trust generated lighting where materials are already known.
    pub dynamic_confidence: bool,
}

impl PaintJob {
    /// Job with both consistency strategies enabled.
    pub fn new(
        mesh: Mesh,
        scenario: LightingScenario,
        tag: usize,
        cameras: Vec<Camera>,
        images: Vec<RgbGrid>,
        sampler_steps: usize,
        uv_res: usize,
        seed: u64,
    ) -> Result<Self> {
        let job = Self {
            mesh,
            scenario,
            tag,
            cameras,
            images,
            sampler_steps,
            uv_res,
            seed,
            latent_init: true,
            dynamic_confidence: true,
        };
        job.validate()?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh.validate()?;
        if !matches!(self.cameras.len(), 6 | 10) {
            return Err(Error::Argument(format!("camera rig must have 6 or 10 views, got {}", self.cameras.len())));
        }
        if self.images.len() != self.cameras.len() {
            return Err(Error::Argument(format!(
                "{} input images for {} views",
                self.images.len(),
                self.cameras.len()
            )));
        }
        for (img, cam) in self.images.iter().zip(&self.cameras) {
            img.ensure_shape((cam.width, cam.height), "view input image")?;
        }
        if self.tag >= TAGS.len() {
            return Err(Error::Argument(format!("tag id {} outside the vocabulary", self.tag)));
        }
        if self.uv_res == 0 || self.sampler_steps == 0 {
            return Err(Error::Argument("UV resolution and sampler steps must be positive".into()));
        }
        Ok(())
    }
}

/// The outcome of painting one view.
#[derive(Debug, Clone)]
pub struct ViewRecord {
    pub view: usize,
    pub gbuf: GBuffer,
    pub image: RgbGrid,
    pub confidence: ConfidenceMask,
    /// Pixels whose materials were known from earlier views.
    pub known: Grid<bool>,
    pub materials: MaterialSet,
}

impl ViewRecord {
    /// Checks the scenario/mask coupling: known pixels lie on coverage;
    /// realistic trusts everything, light-free nothing, generated exactly the
    /// known region (nothing when dynamic confidence is off).
    pub fn check(&self, scenario: LightingScenario, dynamic_confidence: bool) -> Result<()> {
        let fail = |msg: String| Err(Error::Domain(format!("view {}: {msg}", self.view)));
        let m = self.confidence.grid();
        for i in 0..self.known.len() {
            if self.known[i] && !self.gbuf.coverage[i] {
                return fail(format!("known pixel {i} outside coverage"));
            }
            let expected = match scenario {
                LightingScenario::Realistic => 1.0,
                LightingScenario::LightFree => 0.0,
                LightingScenario::Generated if dynamic_confidence => self.known[i] as u8 as f64,
                LightingScenario::Generated => 0.0,
            };
            if m[i] != expected {
                return fail(format!("confidence {} at pixel {i}, expected {expected} for {scenario}", m[i]));
            }
        }
        Ok(())
    }
}

/// Per-pixel selection between two latents: `z_hat * (1 - m) + z_known * m`
/// for a binary mask, applied to every channel.
pub fn latent_blend(z_hat: &Tensor, z_known: &Tensor, mask: &Grid<bool>) -> Result<Tensor> {
    if z_hat.shape() != z_known.shape() {
        return Err(Error::Dimension {
            what: "latent blend",
            expected: (z_hat.w, z_hat.h),
            found: (z_known.w, z_known.h),
        });
    }
    mask.ensure_shape((z_hat.w, z_hat.h), "latent blend mask")?;
    let mut out = z_hat.clone();
    let hw = z_hat.h * z_hat.w;
    for plane in 0..z_hat.n * z_hat.c {
        for i in 0..hw {
            if mask[i] {
                out.data[plane * hw + i] = z_known.data[plane * hw + i];
            }
        }
    }
    Ok(out)
}

/// Observes the masked blend at every sampler step: timestep, freshly noised
/// known latent and blended latent.
pub type BlendTrace<'a> = dyn FnMut(usize, &Tensor, &Tensor) + 'a;

/// Paints view `view` given the bake of all previously painted views.
pub fn paint_view(
    job: &PaintJob,
    view: usize,
    bake: &BakeState,
    model: &Denoiser,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<ViewRecord> {
    paint_view_traced(job, view, bake, model, sched, rng, None)
}

pub fn paint_view_traced(
    job: &PaintJob,
    view: usize,
    bake: &BakeState,
    model: &Denoiser,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
    mut trace: Option<&mut BlendTrace<'_>>,
) -> Result<ViewRecord> {
    let cam = job
        .cameras
        .get(view)
        .ok_or_else(|| Error::Argument(format!("view {view} outside a rig of {}", job.cameras.len())))?;
    let gbuf = rasterize_gbuffer(&job.mesh, cam);
    let shape = gbuf.shape();
    let (known_mats, known) = if job.latent_init {
        project_known(bake, &gbuf)
    } else {
        (MaterialSet::filled(shape.0, shape.1, MaterialSample::uniform(0.5)), Grid::filled(shape.0, shape.1, false))
    };
    let confidence = if job.scenario == LightingScenario::Generated && !job.dynamic_confidence {
        ConfidenceMask::filled(shape.0, shape.1, false)
    } else {
        assign_confidence(job.scenario, Some(&known), shape)?
    };
    let image = job.images[view].clone();
    let cond = ConditioningSet {
        image: image.clone(),
        confidence: confidence.clone(),
        normal: gbuf.normal_map(),
        tag: job.tag,
    }
    .to_tensor(model.config.use_confidence)?;

    let any_known = known.iter().any(|&k| k);
    let x_known = pack_materials(&known_mats);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut blend_err: Option<Error> = None;
    let mut hook = |t: usize, z: &mut Tensor| {
        if !any_known || blend_err.is_some() {
            return;
        }
        let eps_data = (0..x_known.len()).map(|_| noise_rng.sample(StandardNormal)).collect();
        let result = Tensor::from_vec(1, x_known.c, x_known.h, x_known.w, eps_data)
            .and_then(|eps| add_noise(&x_known, &eps, &[t], sched))
            .and_then(|zk| latent_blend(z, &zk, &known).map(|b| (zk, b)));
        match result {
            Ok((zk, blended)) => {
                if let Some(f) = trace.as_deref_mut() {
                    f(t, &zk, &blended);
                }
                *z = blended;
            }
            Err(e) => blend_err = Some(e),
        }
    };
    let z = sample_latent(model, &cond, &[job.tag], sched, job.sampler_steps, rng, Some(&mut hook))
        .map_err(|e| Error::View { view, source: Box::new(e) })?;
    if let Some(e) = blend_err {
        return Err(Error::View { view, source: Box::new(e) });
    }
    let mut materials = unpack_materials(&z, 0);
    for i in 0..gbuf.coverage.len() {
        if !gbuf.coverage[i] {
            materials.set_index(i, MaterialSample::background());
        }
    }
    let record = ViewRecord {
        view,
        gbuf,
        image,
        confidence,
        known,
        materials,
    };
    record.check(job.scenario, job.dynamic_confidence)?;
    Ok(record)
}

/// Summary metrics of one painting run.
#[derive(Debug, Clone, PartialEq)]
pub struct PaintReport {
    pub scenario: LightingScenario,
    pub tag: usize,
    /// Known fraction of the occupied atlas after baking each view.
    pub known_fraction: Vec<f64>,
    pub post_bake_hole_fraction: f64,
    pub final_hole_fraction: f64,
    pub consistency: Option<f64>,
    pub refiner_used: bool,
    pub notes: Vec<String>,
}

impl PaintReport {
    /// Tab-separated `key\tvalue` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario\t{}", self.scenario);
        let _ = writeln!(s, "tag\t{}", TAGS[self.tag]);
        for (i, k) in self.known_fraction.iter().enumerate() {
            let _ = writeln!(s, "known_fraction_view{i}\t{k:.6}");
        }
        let _ = writeln!(s, "post_bake_hole_fraction\t{:.6}", self.post_bake_hole_fraction);
        let _ = writeln!(s, "final_hole_fraction\t{:.6}", self.final_hole_fraction);
        match self.consistency {
            Some(c) => {
                let _ = writeln!(s, "consistency\t{c:.6}");
            }
            None => s.push_str("consistency\tNA\n"),
        }
        let _ = writeln!(s, "fill\t{}", if self.refiner_used { "refiner" } else { "pullpush" });
        for n in &self.notes {
            let _ = writeln!(s, "note\t{n}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct PaintOutput {
    pub materials: MaterialSet,
    pub bake: BakeState,
    pub views: Vec<ViewRecord>,
    pub report: PaintReport,
}

/// Paints every view in rig order, bakes each into the atlas, then fills the
/// remaining holes with the refiner (or pull-push without one).
pub fn paint_object(job: &PaintJob, estimator: &Denoiser, refiner: Option<&Denoiser>, sched: &NoiseSchedule) -> Result<PaintOutput> {
    paint_object_observed(job, estimator, refiner, sched, &mut |_, _| Ok(()))
}

/// As [`paint_object`], calling `observer` after each view is baked so
/// partial results survive a later failure.
pub fn paint_object_observed(
    job: &PaintJob,
    estimator: &Denoiser,
    refiner: Option<&Denoiser>,
    sched: &NoiseSchedule,
    observer: &mut dyn FnMut(&ViewRecord, &BakeState) -> Result<()>,
) -> Result<PaintOutput> {
    job.validate()?;
    let surface = compute_ccm_uv(&job.mesh, job.uv_res, job.uv_res);
    let occupancy = surface.occupancy.clone();
    let ccm = surface.ccm_rgb();
    let mut bake = BakeState::new(surface);
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let mut views = Vec::with_capacity(job.cameras.len());
    let mut known_fraction = Vec::with_capacity(job.cameras.len());
    for view in 0..job.cameras.len() {
        let rec = paint_view(job, view, &bake, estimator, sched, &mut rng)?;
        bake_view_to_uv(&rec.materials, &rec.gbuf, &mut bake).map_err(|e| Error::View { view, source: Box::new(e) })?;
        known_fraction.push(bake.known_fraction());
        observer(&rec, &bake)?;
        views.push(rec);
    }
    let post_bake_hole_fraction = bake.hole_fraction();
    let mut notes = Vec::new();
    let materials = match refiner {
        Some(model) => refine_uv(
            &bake.materials,
            &bake.hole_mask(),
            &ccm,
            &occupancy,
            job.tag,
            model,
            sched,
            job.sampler_steps,
            &mut rng,
        )?,
        None => {
            notes.push("refiner disabled: holes filled by pull-push".to_string());
            pullpush_fill(&bake, &occupancy)
        }
    };
    let final_hole_fraction = unfilled_fraction(&materials, &occupancy);
    let report = PaintReport {
        scenario: job.scenario,
        tag: job.tag,
        known_fraction,
        post_bake_hole_fraction,
        final_hole_fraction,
        consistency: consistency_metric(&views, job.uv_res),
        refiner_used: refiner.is_some(),
        notes,
    };
    Ok(PaintOutput {
        materials,
        bake,
        views,
        report,
    })
}

/// Fraction of occupied texels without a valid material value.
fn unfilled_fraction(m: &MaterialSet, occupancy: &Grid<bool>) -> f64 {
    let occ = occupancy.iter().filter(|&&o| o).count();
    if occ == 0 {
        return 0.0;
    }
    let bad = (0..occupancy.len())
        .filter(|&i| occupancy[i] && !m.get_index(i).to_channels().iter().all(|c| c.is_finite() && (0.0..=1.0).contains(c)))
        .count();
    bad as f64 / occ as f64
}
