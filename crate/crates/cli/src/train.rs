use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use texmat::dataset::{load_refiner_sample, load_training_sample, Manifest, MANIFEST_NAME};
use texmat::diffusion::cond::{ESTIMATOR_COND_CHANNELS, REFINER_COND_CHANNELS};
use texmat::diffusion::{
    make_schedule, train_step_with_draws, Adam, Denoiser, Example, HeadMode, ModelConfig, StepDraws, StepMetrics,
    TrainConfig, Trainer,
};

use crate::config::{Config, Overrides};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Estimator,
    Refiner,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Which network to train.
    #[arg(value_enum)]
    model: Model,
    /// Corpus directory holding the manifest.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Optimizer steps.
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Checkpoint path, written at the end and every `--checkpoint-every` steps.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Steps between intermediate checkpoints (0 = only at the end).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Continue from this checkpoint (optimizer moments restart from zero).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Overfit the first K examples with fixed timesteps, noise and rigs.
    #[arg(long, value_name = "K")]
    overfit: Option<usize>,
    /// Also write the per-step TSV log to this file.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda_p: Option<f64>,
    #[arg(long)]
    lambda_2: Option<f64>,
    /// Gradient-norm clip (0 disables).
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    schedule_steps: Option<usize>,
    /// Hold the confidence channel at zero (estimator ablation).
    #[arg(long)]
    no_confidence: bool,
    /// One shared output head instead of three (estimator ablation).
    #[arg(long)]
    single_head: bool,
}

fn load_examples(model: Model, dir: &Path, use_confidence: bool) -> Result<Vec<Example>> {
    let path = dir.join(MANIFEST_NAME);
    if !path.is_file() {
        bail!("no manifest at {}", path.display());
    }
    let m = Manifest::read(&path)?;
    let out: Vec<Example> = match model {
        Model::Estimator => m
            .estimator_records()
            .map(|r| Example::estimator(&load_training_sample(dir, &m, r)?, use_confidence))
            .collect::<texmat::Result<_>>()?,
        Model::Refiner => m
            .refiner_records()
            .map(|r| Example::refiner(&load_refiner_sample(dir, r)?, r.tag))
            .collect::<texmat::Result<_>>()?,
    };
    if out.is_empty() {
        bail!("{} lists no {model:?} records", path.display());
    }
    Ok(out)
}

fn build_model(a: &Args, cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Denoiser> {
    let expected = match a.model {
        Model::Estimator => ESTIMATOR_COND_CHANNELS,
        Model::Refiner => REFINER_COND_CHANNELS,
    };
    if let Some(p) = &a.resume {
        let m = Denoiser::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
        if m.config.cond_channels != expected {
            bail!("{} is not a {:?} checkpoint", p.display(), a.model);
        }
        println!("resume\t{}", p.display());
        return Ok(m);
    }
    let mut mc = match a.model {
        Model::Estimator => ModelConfig::estimator(cfg.width),
        Model::Refiner => ModelConfig::refiner(cfg.width),
    };
    if a.single_head {
        mc.heads = HeadMode::Single;
    }
    mc.use_confidence = !a.no_confidence;
    Ok(Denoiser::new(mc, rng)?)
}

fn save(model: &Denoiser, path: &Path) -> Result<()> {
    let tmp = path.with_extension("partial");
    model.save(&tmp)?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

fn mean_total(m: &[StepMetrics]) -> f64 {
    m.iter().map(|s| s.total).sum::<f64>() / m.len().max(1) as f64
}

pub fn run(a: Args, file: Option<&Path>, threads: Option<usize>) -> Result<()> {
    let mut ov = Overrides::default();
    ov.set("width", a.width)
        .set("lr", a.lr)
        .set("batch_size", a.batch_size)
        .set("lambda_p", a.lambda_p)
        .set("lambda_2", a.lambda_2)
        .set("grad_clip", a.grad_clip)
        .set("seed", a.seed)
        .set("schedule_steps", a.schedule_steps)
        .set_path("data", a.data.as_ref());
    let cfg = crate::setup(file, threads, ov)?;
    if a.steps == 0 {
        bail!("--steps must be positive");
    }
    if a.model == Model::Refiner && (a.no_confidence || a.single_head) {
        bail!("--no-confidence and --single-head apply to the estimator only");
    }
    let data = cfg.data.clone().context("a corpus directory is required (--data)")?;
    let out = a.out.clone().context("a checkpoint path is required (--out)")?;
    let mut examples = load_examples(a.model, &data, !a.no_confidence)?;
    if let Some(k) = a.overfit {
        if k == 0 || k > examples.len() {
            bail!("--overfit needs 1..={} examples, got {k}", examples.len());
        }
        examples.truncate(k);
    }
    println!("examples\t{}", examples.len());

    let sched = make_schedule(cfg.schedule_steps)?;
    let tc = TrainConfig {
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        lambda_p: cfg.lambda_p,
        lambda_2: cfg.lambda_2,
        grad_clip: (cfg.grad_clip > 0.0).then_some(cfg.grad_clip),
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = build_model(&a, &cfg, &mut rng)?;
    println!("parameters\t{}", model.parameter_count());

    let mut log = a
        .log
        .as_ref()
        .map(|p| File::create(p).with_context(|| format!("creating log {}", p.display())))
        .transpose()?;
    let mut emit = |line: &str| -> Result<()> {
        println!("{line}");
        if let Some(f) = log.as_mut() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    };
    emit(StepMetrics::TSV_HEADER)?;

    let mut history = Vec::with_capacity(a.steps);
    // overfitting keeps one batch and one set of draws for every step
    let mut fixed = match a.overfit {
        Some(_) => {
            let batch: Vec<&Example> = examples.iter().collect();
            let draws = StepDraws::sample(&batch, &sched, &mut rng)?;
            Some((batch, draws, Adam::new(&model)))
        }
        None => None,
    };
    let mut trainer = Trainer::new(&model, examples.len())?;
    for step in 1..=a.steps {
        let m = match fixed.as_mut() {
            Some((batch, draws, opt)) => train_step_with_draws(&mut model, batch, draws, &sched, opt, &tc),
            None => trainer.step(&mut model, &examples, &sched, &tc, &mut rng),
        }
        .with_context(|| format!("training step {step}"))?;
        emit(&m.tsv())?;
        history.push(m);
        if a.checkpoint_every > 0 && step % a.checkpoint_every == 0 && step < a.steps {
            save(&model, &out)?;
            println!("checkpoint\t{step}\t{}", out.display());
        }
    }
    save(&model, &out)?;
    println!("checkpoint\t{}\t{}", a.steps, out.display());

    let window = 5.min(history.len());
    let early = mean_total(&history[..window]);
    let last = mean_total(&history[history.len() - window..]);
    println!("summary\tearly_loss\t{early:.6e}");
    println!("summary\tfinal_loss\t{last:.6e}");
    println!("summary\tratio\t{:.3}", early / last);
    Ok(())
}
