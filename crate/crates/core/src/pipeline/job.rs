//! Job description files: line-oriented `key=value` settings for one painting run.

use std::path::{Path, PathBuf};

use crate::dataset::objects::{tag_id, Shape, TAGS};
use crate::error::{Error, Result};
use crate::geometry::{camera_ring, load_mesh, Mesh};
use crate::io::read_pfm_rgb;
use crate::kv::KvBlock;
use crate::material::LightingScenario;

use super::inputs::{coarse_texture, images_from_texture};
use super::paint::PaintJob;

pub const JOB_KEYS: [&str; 14] = [
    "mesh",
    "scenario",
    "tag",
    "views",
    "seed",
    "view_res",
    "uv_res",
    "steps",
    "estimator",
    "refiner",
    "texture",
    "latent_init",
    "dynamic_confidence",
    "out",
];

/// Parsed job file. Relative paths resolve against the job file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    /// Built-in primitive name (`sphere`, `cube`, `cylinder`, `torus`) or an OBJ path.
    pub mesh: String,
    pub scenario: LightingScenario,
    pub tag: usize,
    pub views: usize,
    pub seed: u64,
    pub view_res: usize,
    pub uv_res: usize,
    pub steps: usize,
    pub estimator: Option<PathBuf>,
    /// `None` disables the refiner.
    pub refiner: Option<PathBuf>,
    /// RGB PFM texture rendered into the per-view inputs; without one the
    /// coarse texturer supplies them.
    pub texture: Option<PathBuf>,
    pub latent_init: bool,
    pub dynamic_confidence: bool,
    pub out: Option<PathBuf>,
}

impl Default for JobSpec {
    fn default() -> Self {
        Self {
            mesh: "sphere".into(),
            scenario: LightingScenario::LightFree,
            tag: 0,
            views: 6,
            seed: 0,
            view_res: 64,
            uv_res: 128,
            steps: 50,
            estimator: None,
            refiner: None,
            texture: None,
            latent_init: true,
            dynamic_confidence: true,
            out: None,
        }
    }
}

fn parse_bool(b: &KvBlock, key: &str) -> Result<Option<bool>> {
    match b.get(key) {
        None => Ok(None),
        Some("1" | "true" | "on" | "yes") => Ok(Some(true)),
        Some("0" | "false" | "off" | "no") => Ok(Some(false)),
        Some(v) => Err(Error::Argument(format!("'{key}' expects a boolean, found '{v}'"))),
    }
}

/// Tag given by name or numeric id.
pub fn parse_tag(s: &str) -> Result<usize> {
    tag_id(s)
        .or_else(|| s.parse::<usize>().ok().filter(|&t| t < TAGS.len()))
        .ok_or_else(|| Error::Argument(format!("unknown tag '{s}' (known: {})", TAGS.join(", "))))
}

fn optional_path(v: Option<&str>, base: &Path) -> Option<PathBuf> {
    v.filter(|s| !s.is_empty() && *s != "none").map(|s| base.join(s))
}

fn keep_or(v: Option<&str>, base: &Path, fallback: Option<PathBuf>) -> Option<PathBuf> {
    match v {
        Some(_) => optional_path(v, base),
        None => fallback,
    }
}

impl JobSpec {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        Self::parse_with(text, base, Self::default())
    }

    /// Parses with `d` supplying every key the text leaves out.
    pub fn parse_with(text: &str, base: &Path, d: Self) -> Result<Self> {
        let b = KvBlock::parse(text)?;
        b.reject_unknown(&JOB_KEYS)?;
        let spec = Self {
            mesh: match b.get("mesh") {
                Some(m) if Self::builtin(m).is_some() => m.to_string(),
                Some(m) => base.join(m).to_string_lossy().into_owned(),
                None => d.mesh,
            },
            scenario: b.parse_value("scenario")?.unwrap_or(d.scenario),
            tag: b.get("tag").map(parse_tag).transpose()?.unwrap_or(d.tag),
            views: b.parse_value("views")?.unwrap_or(d.views),
            seed: b.parse_value("seed")?.unwrap_or(d.seed),
            view_res: b.parse_value("view_res")?.unwrap_or(d.view_res),
            uv_res: b.parse_value("uv_res")?.unwrap_or(d.uv_res),
            steps: b.parse_value("steps")?.unwrap_or(d.steps),
            estimator: keep_or(b.get("estimator"), base, d.estimator),
            refiner: keep_or(b.get("refiner"), base, d.refiner),
            texture: keep_or(b.get("texture"), base, d.texture),
            latent_init: parse_bool(&b, "latent_init")?.unwrap_or(d.latent_init),
            dynamic_confidence: parse_bool(&b, "dynamic_confidence")?.unwrap_or(d.dynamic_confidence),
            out: keep_or(b.get("out"), base, d.out),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.views, 6 | 10) {
            return Err(Error::Argument(format!("views must be 6 or 10, got {}", self.views)));
        }
        if self.view_res == 0 || self.view_res % 4 != 0 || self.uv_res == 0 || self.uv_res % 4 != 0 {
            return Err(Error::Argument("view_res and uv_res must be positive multiples of 4".into()));
        }
        if self.steps == 0 {
            return Err(Error::Argument("steps must be positive".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvBlock {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let mut b = KvBlock::new();
        b.push("mesh", &self.mesh);
        b.push("scenario", self.scenario);
        b.push("tag", TAGS[self.tag]);
        b.push("views", self.views);
        b.push("seed", self.seed);
        b.push("view_res", self.view_res);
        b.push("uv_res", self.uv_res);
        b.push("steps", self.steps);
        b.push("estimator", path(&self.estimator));
        b.push("refiner", path(&self.refiner));
        b.push("texture", path(&self.texture));
        b.push("latent_init", self.latent_init);
        b.push("dynamic_confidence", self.dynamic_confidence);
        b.push("out", path(&self.out));
        b
    }

    fn builtin(name: &str) -> Option<Shape> {
        Shape::ALL.into_iter().find(|s| s.name() == name)
    }

    /// The mesh plus any loader warnings.
    pub fn load_mesh(&self) -> Result<(Mesh, Vec<String>)> {
        match Self::builtin(&self.mesh) {
            Some(shape) => Ok((shape.mesh(), Vec::new())),
            None => {
                let loaded = load_mesh(Path::new(&self.mesh))?;
                Ok((loaded.mesh, loaded.warnings))
            }
        }
    }

    /// Assembles the painting job: rig, per-view inputs (texture renders or
    /// the coarse texturer) and flags. Returns notes about fallbacks taken.
    pub fn build(&self) -> Result<(PaintJob, Vec<String>)> {
        let (mesh, mut notes) = self.load_mesh()?;
        let cameras = camera_ring(self.views, self.view_res)?;
        let images = match &self.texture {
            Some(p) => images_from_texture(&mesh, &read_pfm_rgb(p)?, &cameras)?,
            None => {
                notes.push("no input texture: coarse procedural texture used for view inputs".into());
                coarse_texture(&mesh, self.tag, &cameras, self.seed)?
            }
        };
        let mut job = PaintJob::new(mesh, self.scenario, self.tag, cameras, images, self.steps, self.uv_res, self.seed)?;
        job.latent_init = self.latent_init;
        job.dynamic_confidence = self.dynamic_confidence;
        Ok((job, notes))
    }
}
