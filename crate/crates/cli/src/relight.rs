use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use texmat::geometry::{camera_ring, Camera, Vec3};
use texmat::io::{read_material_set, write_pfm_rgb, write_png_rgb};
use texmat::pipeline::JobSpec;
use texmat::shading::{relight, AreaLight, LightingRig, PointLight};

use crate::config::Overrides;

/// Fixed rigs used for previews.
#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Point,
    Area,
    Env,
    None,
}

impl Preset {
    pub const PREVIEWS: [Preset; 3] = [Preset::Point, Preset::Area, Preset::Env];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Point => "point",
            Preset::Area => "area",
            Preset::Env => "env",
            Preset::None => "none",
        }
    }

    /// The rig for a camera: lights sit 4.5 m out, 30 degrees above the
    /// camera direction, inside the sampled training ranges.
    pub fn rig(&self, cam: &Camera) -> LightingRig {
        let view = (cam.position - cam.target).normalize();
        let side = Vec3::z().cross(&view);
        let up = if side.norm() < 1e-6 { Vec3::y() } else { view.cross(&side).normalize() };
        let dir = (view * 30f64.to_radians().cos() + up * 30f64.to_radians().sin()).normalize();
        let position = dir * 4.5;
        match self {
            Preset::Point => LightingRig::point(vec![PointLight { position, power: 1500.0 }]),
            Preset::Area => LightingRig::area(AreaLight { position, normal: -dir, size: 5.0, power: 1500.0 }),
            Preset::Env => LightingRig::environment(1.0),
            Preset::None => LightingRig::none(),
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Built-in shape name or OBJ path.
    #[arg(long, default_value = "sphere")]
    mesh: String,
    /// Directory of the UV material bundle.
    #[arg(long)]
    materials: PathBuf,
    /// File stem of the bundle (`<stem>_albedo.pfm`, ...).
    #[arg(long, default_value = "uv")]
    stem: String,
    /// Rig description file (`key=value`); overrides `--preset`.
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Point)]
    preset: Preset,
    /// Camera index on the ring.
    #[arg(long, default_value_t = 0)]
    view: usize,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    view_res: Option<usize>,
    /// Output PNG (sRGB); a linear PFM is written next to it.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: Args, file: Option<&Path>, threads: Option<usize>) -> Result<()> {
    let mut ov = Overrides::default();
    ov.set("views", a.views).set("view_res", a.view_res);
    let cfg = crate::setup(file, threads, ov)?;
    let spec = JobSpec::parse(&format!("mesh={}", a.mesh), Path::new("."))?;
    let (mesh, warnings) = spec.load_mesh()?;
    for w in warnings {
        println!("warning\t{w}");
    }
    let cams = camera_ring(cfg.views, cfg.view_res)?;
    let Some(cam) = cams.get(a.view) else {
        bail!("--view {} outside the {}-view ring", a.view, cfg.views);
    };
    let rig = match &a.rig {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading rig {}", p.display()))?;
            LightingRig::from_text(&text).with_context(|| format!("rig {}", p.display()))?
        }
        None => a.preset.rig(cam),
    };
    for (k, v) in rig.to_kv().entries() {
        println!("rig\t{k}\t{v}");
    }
    let mats = read_material_set(&a.materials, &a.stem)?;
    let img = relight(&mesh, &mats, &rig, cam)?;
    write_png_rgb(&a.out, &img, true)?;
    let pfm = a.out.with_extension("pfm");
    write_pfm_rgb(&pfm, &img)?;
    println!("image\t{}", a.out.display());
    println!("image\t{}", pfm.display());
    Ok(())
}
