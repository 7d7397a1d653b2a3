use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use texmat::dataset::Shape;
use texmat::diffusion::cond::{ESTIMATOR_COND_CHANNELS, REFINER_COND_CHANNELS};
use texmat::diffusion::{make_schedule, Denoiser};
use texmat::geometry::BakeState;
use texmat::io::{write_material_previews, write_material_set, write_png_mask, write_png_rgb};
use texmat::material::LightingScenario;
use texmat::pipeline::{paint_object_observed, parse_tag, JobSpec, ViewRecord};
use texmat::shading::relight;

use crate::config::{Config, Overrides};
use crate::relight::Preset;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Job file (`key=value`); flags below override it.
    #[arg(long)]
    job: Option<PathBuf>,
    /// Built-in shape name (sphere, cube, cylinder, torus) or OBJ path.
    #[arg(long)]
    mesh: Option<String>,
    /// realistic, lightfree or generated.
    #[arg(long)]
    scenario: Option<LightingScenario>,
    /// Material tag by name or id.
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    view_res: Option<usize>,
    #[arg(long)]
    uv_res: Option<usize>,
    /// Sampler steps per view.
    #[arg(long)]
    steps: Option<usize>,
    /// Estimator checkpoint.
    #[arg(long)]
    estimator: Option<PathBuf>,
    /// Refiner checkpoint.
    #[arg(long)]
    refiner: Option<PathBuf>,
    /// RGB PFM texture rendered into the view inputs.
    #[arg(long)]
    texture: Option<PathBuf>,
    /// Fill holes by pull-push even when a refiner is configured.
    #[arg(long)]
    no_refiner: bool,
    /// Disable the known-region latent initialization.
    #[arg(long)]
    no_latent_init: bool,
    /// Disable the dynamic confidence mask.
    #[arg(long)]
    no_dynamic_confidence: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn absolute(p: Option<PathBuf>) -> Result<Option<PathBuf>> {
    p.map(|p| std::path::absolute(&p).with_context(|| format!("resolving {}", p.display())))
        .transpose()
}

/// Config defaults, then the job file, then flags.
fn job_spec(a: &Args, cfg: &Config) -> Result<JobSpec> {
    let defaults = JobSpec {
        views: cfg.views,
        seed: cfg.seed,
        view_res: cfg.view_res,
        uv_res: cfg.uv_res,
        steps: cfg.sampler_steps,
        estimator: cfg.estimator.clone(),
        refiner: cfg.refiner.clone(),
        out: cfg.out.clone(),
        ..JobSpec::default()
    };
    let mut spec = match &a.job {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading job {}", p.display()))?;
            JobSpec::parse_with(&text, p.parent().unwrap_or(Path::new(".")), defaults)
                .with_context(|| format!("job {}", p.display()))?
        }
        None => defaults,
    };
    if let Some(m) = &a.mesh {
        spec.mesh = JobSpec::parse(&format!("mesh={m}"), Path::new("."))?.mesh;
    }
    if let Some(s) = a.scenario {
        spec.scenario = s;
    }
    if let Some(t) = &a.tag {
        spec.tag = parse_tag(t)?;
    }
    spec.views = a.views.unwrap_or(spec.views);
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.view_res = a.view_res.unwrap_or(spec.view_res);
    spec.uv_res = a.uv_res.unwrap_or(spec.uv_res);
    spec.steps = a.steps.unwrap_or(spec.steps);
    for (slot, flag) in [
        (&mut spec.estimator, &a.estimator),
        (&mut spec.refiner, &a.refiner),
        (&mut spec.texture, &a.texture),
        (&mut spec.out, &a.out),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if a.no_refiner {
        spec.refiner = None;
    }
    spec.latent_init &= !a.no_latent_init;
    spec.dynamic_confidence &= !a.no_dynamic_confidence;
    // job.txt must stay valid when read back from the output directory
    spec.estimator = absolute(spec.estimator)?;
    spec.refiner = absolute(spec.refiner)?;
    spec.texture = absolute(spec.texture)?;
    spec.out = absolute(spec.out)?;
    if !Shape::ALL.iter().any(|s| s.name() == spec.mesh) {
        spec.mesh = std::path::absolute(&spec.mesh)?.to_string_lossy().into_owned();
    }
    spec.validate()?;
    Ok(spec)
}

fn load_model(path: &Path, cond_channels: usize, role: &str) -> Result<Denoiser> {
    let m = Denoiser::load(path).with_context(|| format!("loading {role} {}", path.display()))?;
    if m.config.cond_channels != cond_channels {
        bail!("{} is not an {role} checkpoint", path.display());
    }
    Ok(m)
}

fn write_view(dir: &Path, rec: &ViewRecord) -> texmat::Result<()> {
    let stem = format!("view{}", rec.view);
    write_material_set(dir, &stem, &rec.materials)?;
    write_material_previews(dir, &stem, &rec.materials)?;
    write_png_rgb(&dir.join(format!("{stem}_input.png")), &rec.image, true)?;
    write_png_mask(&dir.join(format!("{stem}_known.png")), &rec.known)?;
    write_png_mask(&dir.join(format!("{stem}_conf.png")), &rec.confidence.grid().map(|&c| c > 0.5))?;
    write_png_mask(&dir.join(format!("{stem}_coverage.png")), &rec.gbuf.coverage)?;
    Ok(())
}

pub fn run(a: Args, file: Option<&Path>, threads: Option<usize>) -> Result<()> {
    let cfg = crate::setup(file, threads, Overrides::default())?;
    let spec = job_spec(&a, &cfg)?;
    for (k, v) in spec.to_kv().entries() {
        println!("job\t{k}\t{v}");
    }
    let out = spec.out.clone().context("an output directory is required (--out)")?;
    let est_path = spec.estimator.clone().context("an estimator checkpoint is required (--estimator)")?;
    let estimator = load_model(&est_path, ESTIMATOR_COND_CHANNELS, "estimator")?;
    let refiner = spec
        .refiner
        .as_ref()
        .map(|p| load_model(p, REFINER_COND_CHANNELS, "refiner"))
        .transpose()?;
    let sched = make_schedule(cfg.schedule_steps)?;
    let (job, notes) = spec.build().context("preparing the job")?;

    let views_dir = out.join("views");
    fs::create_dir_all(&views_dir).with_context(|| format!("creating {}", views_dir.display()))?;
    fs::write(out.join("job.txt"), spec.to_kv().to_text()).with_context(|| format!("writing {}", out.display()))?;

    let mut observer = |rec: &ViewRecord, bake: &BakeState| -> texmat::Result<()> {
        println!("view\t{}\tknown_fraction\t{:.6}", rec.view, bake.known_fraction());
        write_view(&views_dir, rec)
    };
    let mut result = paint_object_observed(&job, &estimator, refiner.as_ref(), &sched, &mut observer)
        .context("painting")?;
    result.report.notes.extend(notes);

    write_material_set(&out, "uv", &result.materials)?;
    write_material_previews(&out, "uv", &result.materials)?;
    write_png_mask(&out.join("uv_occupancy.png"), &result.bake.surface.occupancy)?;
    write_png_mask(&out.join("uv_baked.png"), &result.bake.known)?;
    for p in Preset::PREVIEWS {
        let img = relight(&job.mesh, &result.materials, &p.rig(&job.cameras[0]), &job.cameras[0])?;
        write_png_rgb(&out.join(format!("preview_{}.png", p.name())), &img, true)?;
    }
    let report = result.report.to_tsv();
    fs::write(out.join("report.tsv"), &report)?;
    for line in report.lines() {
        println!("report\t{line}");
    }
    println!("output\t{}", out.display());
    Ok(())
}
