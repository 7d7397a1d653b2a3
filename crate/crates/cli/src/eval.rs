use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use texmat::diffusion::material_rmse;
use texmat::geometry::{camera_ring, rasterize_gbuffer};
use texmat::grid::Grid;
use texmat::io::{read_material_set, read_png_mask};
use texmat::material::ConfidenceMask;
use texmat::pipeline::{consistency_metric, JobSpec, ViewRecord};

use crate::config::Overrides;

/// Column order of the evaluation table.
pub const COLUMNS: [&str; 7] = ["item", "albedo", "roughness", "metallic", "bump", "mean", "consistency"];

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Directory of predicted bundles (`<stem>_albedo.pfm`, `_rm.pfm`, `_bump.pfm`).
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth bundles with the same stems.
    #[arg(long)]
    gt: PathBuf,
    /// Binary PNG restricting the scored texels (all texels when absent).
    #[arg(long)]
    mask: Option<PathBuf>,
}

fn stems(dir: &Path) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix("_albedo.pfm") {
            out.insert(stem.to_string());
        }
    }
    Ok(out)
}

/// Cross-view consistency recomputed from the per-view materials a paint run
/// leaves next to its `job.txt`; `None` for other directories.
fn painted_consistency(dir: &Path) -> Result<Option<f64>> {
    let job_path = dir.join("job.txt");
    if !job_path.is_file() {
        return Ok(None);
    }
    let spec = JobSpec::read(&job_path)?;
    let (mesh, _) = spec.load_mesh()?;
    let views_dir = dir.join("views");
    let mut views = Vec::new();
    for (i, cam) in camera_ring(spec.views, spec.view_res)?.iter().enumerate() {
        let materials = read_material_set(&views_dir, &format!("view{i}"))
            .with_context(|| format!("per-view materials of {}", dir.display()))?;
        let gbuf = rasterize_gbuffer(&mesh, cam);
        let (w, h) = gbuf.shape();
        views.push(ViewRecord {
            view: i,
            image: Grid::filled(w, h, [0.0; 3]),
            confidence: ConfidenceMask::filled(w, h, false),
            known: Grid::filled(w, h, false),
            gbuf,
            materials,
        });
    }
    Ok(consistency_metric(&views, spec.uv_res))
}

pub fn run(a: Args, file: Option<&Path>, threads: Option<usize>) -> Result<()> {
    crate::setup(file, threads, Overrides::default())?;
    let (pred, gt) = (stems(&a.pred)?, stems(&a.gt)?);
    if pred.is_empty() {
        bail!("no material bundles in {}", a.pred.display());
    }
    if pred != gt {
        let only_pred: Vec<_> = pred.difference(&gt).collect();
        let only_gt: Vec<_> = gt.difference(&pred).collect();
        bail!("prediction and ground-truth sets differ: only predicted {only_pred:?}, only ground truth {only_gt:?}");
    }
    let consistency = painted_consistency(&a.pred)?.map_or("NA".to_string(), |c| format!("{c:.6}"));
    let mask = a.mask.as_ref().map(|p| read_png_mask(p)).transpose()?;

    println!("{}", COLUMNS.join("\t"));
    let mut sums = [0.0; 5];
    for stem in &pred {
        let p = read_material_set(&a.pred, stem)?;
        let g = read_material_set(&a.gt, stem)?;
        if p.shape() != g.shape() {
            bail!("{stem}: prediction {:?} and ground truth {:?} differ in shape", p.shape(), g.shape());
        }
        let (w, h) = p.shape();
        let m = mask.clone().unwrap_or_else(|| Grid::filled(w, h, true));
        let r = material_rmse(&p, &g, &m).with_context(|| format!("scoring {stem}"))?;
        let mean = r.iter().sum::<f64>() / 4.0;
        let row = [r[0], r[1], r[2], r[3], mean];
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        println!("{stem}\t{}\t{consistency}", cells.join("\t"));
    }
    if pred.len() > 1 {
        let cells: Vec<String> = sums.iter().map(|s| format!("{:.6}", s / pred.len() as f64)).collect();
        println!("mean\t{}\t{consistency}", cells.join("\t"));
    }
    Ok(())
}
