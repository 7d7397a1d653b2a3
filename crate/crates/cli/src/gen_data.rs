use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use texmat::dataset::{build_dataset, MANIFEST_NAME};

use crate::config::Overrides;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Number of procedural objects.
    #[arg(long)]
    objects: Option<usize>,
    /// Views per object (6 or 10).
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    view_res: Option<usize>,
    #[arg(long)]
    uv_res: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(a: Args, file: Option<&Path>, threads: Option<usize>) -> Result<()> {
    let mut ov = Overrides::default();
    ov.set("objects", a.objects)
        .set("views", a.views)
        .set("view_res", a.view_res)
        .set("uv_res", a.uv_res)
        .set("seed", a.seed)
        .set_path("out", a.out.as_ref());
    let cfg = crate::setup(file, threads, ov)?;
    let out = cfg.out.context("an output directory is required (--out)")?;
    let m = build_dataset(cfg.objects, cfg.views, cfg.view_res, cfg.uv_res, &out, cfg.seed)
        .with_context(|| format!("generating the corpus in {}", out.display()))?;
    println!("manifest\t{}", out.join(MANIFEST_NAME).display());
    println!("objects\t{}", m.n_objects);
    println!("estimator_records\t{}", m.estimator_records().count());
    println!("refiner_records\t{}", m.refiner_records().count());
    Ok(())
}
