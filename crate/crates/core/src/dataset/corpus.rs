//! Per-view renders of procedural objects, estimator/refiner samples and the
//! on-disk corpus with its tab-separated manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::{compose_inconsistent, make_refiner_pair, RefinerSample};
use super::objects::{gen_object_seeded, ProceduralObject, TAGS};
use crate::error::{Error, Result};
use crate::geometry::{camera_ring, rasterize_gbuffer, sample_atlas, Camera, GBuffer};
use crate::grid::RgbGrid;
use crate::io;
use crate::material::{assign_confidence, ConfidenceMask, LightingScenario, MaterialSet};
use crate::shading::{render, sample_lighting, LightCategory, LightingRig};

/// Lit renders per view: four point, two area, two environment.
pub const LIT_SPLIT: [(LightCategory, usize); 3] = [
    (LightCategory::Point, 4),
    (LightCategory::Area, 2),
    (LightCategory::Environment, 2),
];

/// Everything rendered for one camera view of an object.
#[derive(Debug, Clone)]
pub struct ViewRenders {
    pub view: usize,
    pub gbuf: GBuffer,
    pub gt: MaterialSet,
    pub normal_map: RgbGrid,
    /// Render without lighting; identical to the albedo image.
    pub unlit: RgbGrid,
    pub lit: Vec<(LightingRig, RgbGrid)>,
}

impl ViewRenders {
    /// Named images of the view: five maps plus the lit renders.
    pub fn images(&self) -> Vec<(String, RgbGrid)> {
        let mut out = vec![
            ("albedo".to_string(), self.gt.albedo.clone()),
            ("roughness".to_string(), self.gt.roughness.map(|&r| [r; 3])),
            ("metallic".to_string(), self.gt.metallic.map(|&m| [m; 3])),
            ("bump".to_string(), self.gt.bump.clone()),
            ("normal".to_string(), self.normal_map.clone()),
        ];
        let mut counts = [0usize; 4];
        for (rig, img) in &self.lit {
            let k = rig.category as usize;
            out.push((format!("{}{}", rig.category, counts[k]), img.clone()));
            counts[k] += 1;
        }
        out
    }
}

/// Unit direction from the object center toward the camera.
pub fn camera_dir(cam: &Camera) -> crate::geometry::Vec3 {
    cam.position.normalize()
}

pub fn render_view(obj: &ProceduralObject, cam: &Camera, view: usize, rng: &mut impl Rng) -> Result<ViewRenders> {
    let gbuf = rasterize_gbuffer(&obj.mesh, cam);
    let gt = sample_atlas(&obj.gt, &obj.surface.occupancy, &gbuf);
    let unlit = render(&gbuf, &gt, &LightingRig::none())?;
    let dir = camera_dir(cam);
    let mut lit = Vec::with_capacity(8);
    for (cat, n) in LIT_SPLIT {
        for _ in 0..n {
            let rig = sample_lighting(cat, &dir, rng);
            let img = render(&gbuf, &gt, &rig)?;
            lit.push((rig, img));
        }
    }
    let normal_map = gbuf.normal_map();
    Ok(ViewRenders { view, gbuf, gt, normal_map, unlit, lit })
}

pub fn render_views(obj: &ProceduralObject, cameras: &[Camera], rng: &mut impl Rng) -> Result<Vec<ViewRenders>> {
    cameras.iter().enumerate().map(|(i, c)| render_view(obj, c, i, rng)).collect()
}

/// One estimator training example.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub object_seed: u64,
    pub view: usize,
    pub tag: usize,
    pub scenario: LightingScenario,
    pub image: RgbGrid,
    pub confidence: ConfidenceMask,
    pub normal_map: RgbGrid,
    pub gt: MaterialSet,
    pub gbuf: GBuffer,
    /// Rig of the trusted image and of the stitched-in image (equal when nothing is stitched).
    pub rigs: [LightingRig; 2],
}

/// Builds the conditioning for one view under a scenario: the unlit render
/// with confidence 0, a lit render with confidence 1, or a composite of two
/// differently lit renders whose degraded part has confidence 0.
pub fn make_training_sample(
    obj: &ProceduralObject,
    v: &ViewRenders,
    scenario: LightingScenario,
    rng: &mut impl Rng,
) -> Result<(TrainingSample, [usize; 2])> {
    let shape = v.gbuf.shape();
    let n = v.lit.len();
    let (image, confidence, rigs, src) = match scenario {
        LightingScenario::LightFree => (
            v.unlit.clone(),
            assign_confidence(scenario, None, shape)?,
            [LightingRig::none(), LightingRig::none()],
            [usize::MAX; 2],
        ),
        LightingScenario::Realistic => {
            let a = rng.random_range(0..n);
            (
                v.lit[a].1.clone(),
                assign_confidence(scenario, None, shape)?,
                [v.lit[a].0.clone(), v.lit[a].0.clone()],
                [a, a],
            )
        }
        LightingScenario::Generated => {
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..n)) % n;
            let (img, mask) = compose_inconsistent(&v.lit[a].1, &v.lit[b].1, rng)?;
            (img, mask, [v.lit[a].0.clone(), v.lit[b].0.clone()], [a, b])
        }
    };
    Ok((
        TrainingSample {
            object_seed: obj.seed,
            view: v.view,
            tag: obj.tag,
            scenario,
            image,
            confidence,
            normal_map: v.normal_map.clone(),
            gt: v.gt.clone(),
            gbuf: v.gbuf.clone(),
            rigs,
        },
        src,
    ))
}

/// Seed of object `index` in a corpus with master seed `seed`.
pub fn object_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All samples derived from one object: one estimator sample per view (with a
/// uniformly drawn scenario) and one refiner pair.
#[derive(Debug, Clone)]
pub struct ObjectSamples {
    pub object: ProceduralObject,
    pub estimator: Vec<TrainingSample>,
    pub refiner: RefinerSample,
}

pub fn object_samples(seed: u64, cameras: &[Camera], uv_res: usize) -> Result<ObjectSamples> {
    let obj = gen_object_seeded(seed, uv_res);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_5A4D_1E5);
    let views = render_views(&obj, cameras, &mut rng)?;
    let mut estimator = Vec::with_capacity(views.len());
    for v in &views {
        let scenario = LightingScenario::ALL[rng.random_range(0..3)];
        estimator.push(make_training_sample(&obj, v, scenario, &mut rng)?.0);
    }
    let refiner = make_refiner_pair(&obj.gt, &obj.surface.ccm_rgb(), &obj.surface.occupancy, &mut rng)?;
    Ok(ObjectSamples { object: obj, estimator, refiner })
}

/// In-memory corpus of `n_objects` objects (objects generated in parallel,
/// returned in index order).
pub fn generate_corpus(seed: u64, n_objects: usize, n_views: usize, view_res: usize, uv_res: usize) -> Result<Vec<ObjectSamples>> {
    let cams = camera_ring(n_views, view_res)?;
    (0..n_objects)
        .into_par_iter()
        .map(|i| object_samples(object_seed(seed, i), &cams, uv_res))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Estimator,
    Refiner,
}

impl RecordKind {
    pub fn name(&self) -> &'static str {
        match self {
            RecordKind::Estimator => "estimator",
            RecordKind::Refiner => "refiner",
        }
    }
}

/// One manifest line. `files` are relative to the corpus directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub kind: RecordKind,
    pub tag: usize,
    pub scenario: Option<LightingScenario>,
    pub seed: u64,
    pub view: Option<usize>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub n_objects: usize,
    pub n_views: usize,
    pub view_res: usize,
    pub uv_res: usize,
    pub records: Vec<Record>,
}

pub const MANIFEST_NAME: &str = "manifest.tsv";
const MANIFEST_COLUMNS: &str = "id\tkind\ttag\tscenario\tseed\tview\tfiles";

impl Manifest {
    pub fn estimator_records(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.kind == RecordKind::Estimator)
    }

    pub fn refiner_records(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.kind == RecordKind::Refiner)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# seed={}\tobjects={}\tviews={}\tview_res={}\tuv_res={}\n{MANIFEST_COLUMNS}\n",
            self.seed, self.n_objects, self.n_views, self.view_res, self.uv_res
        );
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.id,
                r.kind.name(),
                TAGS[r.tag],
                r.scenario.map(|s| s.name()).unwrap_or("-"),
                r.seed,
                r.view.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                r.files.join(",")
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let perr = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let (_, head) = lines.next().ok_or_else(|| perr(0, "empty manifest".into()))?;
        let head = head
            .strip_prefix("# ")
            .ok_or_else(|| perr(0, "missing parameter header".into()))?;
        let mut params = std::collections::HashMap::new();
        for kv in head.split('\t') {
            let (k, v) = kv.split_once('=').ok_or_else(|| perr(0, format!("bad header field '{kv}'")))?;
            let v: u64 = v.parse().map_err(|_| perr(0, format!("bad number in '{kv}'")))?;
            params.insert(k.to_string(), v);
        }
        let p = |k: &str| params.get(k).copied().ok_or_else(|| perr(0, format!("missing header field '{k}'")));
        match lines.next() {
            Some((_, cols)) if cols == MANIFEST_COLUMNS => {}
            _ => return Err(perr(1, "missing column header".into())),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(perr(i, format!("expected 7 fields, found {}", f.len())));
            }
            let kind = match f[1] {
                "estimator" => RecordKind::Estimator,
                "refiner" => RecordKind::Refiner,
                other => return Err(perr(i, format!("unknown record kind '{other}'"))),
            };
            let tag = super::objects::tag_id(f[2]).ok_or_else(|| perr(i, format!("unknown tag '{}'", f[2])))?;
            let scenario = if f[3] == "-" { None } else { Some(f[3].parse()?) };
            let seed = f[4].parse().map_err(|_| perr(i, format!("bad seed '{}'", f[4])))?;
            let view = if f[5] == "-" {
                None
            } else {
                Some(f[5].parse().map_err(|_| perr(i, format!("bad view '{}'", f[5])))?)
            };
            records.push(Record {
                id: f[0].to_string(),
                kind,
                tag,
                scenario,
                seed,
                view,
                files: f[6].split(',').map(str::to_string).collect(),
            });
        }
        Ok(Manifest {
            seed: p("seed")?,
            n_objects: p("objects")? as usize,
            n_views: p("views")? as usize,
            view_res: p("view_res")? as usize,
            uv_res: p("uv_res")? as usize,
            records,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn rel(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned()
}

fn write_object(dir: &Path, index: usize, s: &ObjectSamples) -> Result<Vec<Record>> {
    let mut recs = Vec::new();
    for t in &s.estimator {
        let id = format!("o{index:04}_v{:02}", t.view);
        let mut files = Vec::new();
        let image = dir.join(format!("{id}_image.pfm"));
        io::write_pfm_rgb(&image, &t.image)?;
        files.push(rel(dir, &image));
        let conf = dir.join(format!("{id}_conf.png"));
        io::write_png_gray(&conf, t.confidence.grid())?;
        files.push(rel(dir, &conf));
        let normal = dir.join(format!("{id}_normal.pfm"));
        io::write_pfm_rgb(&normal, &t.normal_map)?;
        files.push(rel(dir, &normal));
        for p in io::write_material_set(dir, &format!("{id}_gt"), &t.gt)? {
            files.push(rel(dir, &p));
        }
        let rigs = dir.join(format!("{id}_rigs.txt"));
        let text = format!("[trusted]\n{}[stitched]\n{}", t.rigs[0].to_text(), t.rigs[1].to_text());
        fs::write(&rigs, text).map_err(|e| Error::io(&rigs, e))?;
        files.push(rel(dir, &rigs));
        recs.push(Record {
            id,
            kind: RecordKind::Estimator,
            tag: t.tag,
            scenario: Some(t.scenario),
            seed: t.object_seed,
            view: Some(t.view),
            files,
        });
    }
    let id = format!("o{index:04}_uv");
    let r = &s.refiner;
    let mut files = Vec::new();
    for p in io::write_material_set(dir, &format!("{id}_input"), &r.input)? {
        files.push(rel(dir, &p));
    }
    let holes = dir.join(format!("{id}_holes.png"));
    io::write_png_mask(&holes, &r.holes)?;
    files.push(rel(dir, &holes));
    let ccm = dir.join(format!("{id}_ccm.pfm"));
    io::write_pfm_rgb(&ccm, &r.ccm)?;
    files.push(rel(dir, &ccm));
    let occ = dir.join(format!("{id}_occupancy.png"));
    io::write_png_mask(&occ, &r.occupancy)?;
    files.push(rel(dir, &occ));
    for p in io::write_material_set(dir, &format!("{id}_gt"), &r.gt)? {
        files.push(rel(dir, &p));
    }
    recs.push(Record {
        id,
        kind: RecordKind::Refiner,
        tag: s.object.tag,
        scenario: None,
        seed: s.object.seed,
        view: None,
        files,
    });
    Ok(recs)
}

/// Generates the corpus and writes it under `out_dir` together with
/// `manifest.tsv`. The output is a pure function of the arguments.
pub fn build_dataset(
    n_objects: usize,
    n_views: usize,
    view_res: usize,
    uv_res: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cams = camera_ring(n_views, view_res)?;
    let per_object: Vec<Vec<Record>> = (0..n_objects)
        .into_par_iter()
        .map(|i| {
            let s = object_samples(object_seed(seed, i), &cams, uv_res)?;
            write_object(out_dir, i, &s)
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        seed,
        n_objects,
        n_views,
        view_res,
        uv_res,
        records: per_object.into_iter().flatten().collect(),
    };
    let path = out_dir.join(MANIFEST_NAME);
    fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn file_with_suffix<'a>(rec: &'a Record, suffix: &str) -> Result<&'a str> {
    rec.files
        .iter()
        .find(|f| f.ends_with(suffix))
        .map(String::as_str)
        .ok_or_else(|| Error::Format(format!("record {} lists no '{suffix}' file", rec.id)))
}

fn load_bundle(dir: &Path, rec: &Record, stem: &str) -> Result<MaterialSet> {
    let p = |s: &str| -> Result<PathBuf> { Ok(dir.join(file_with_suffix(rec, &format!("{stem}_{s}.pfm"))?)) };
    io::read_material_files(&p("albedo")?, &p("rm")?, &p("bump")?)
}

/// Loads an estimator record; the G-buffer is regenerated from the object
/// seed and view index.
pub fn load_training_sample(dir: &Path, m: &Manifest, rec: &Record) -> Result<TrainingSample> {
    let view = rec
        .view
        .ok_or_else(|| Error::Format(format!("record {} has no view index", rec.id)))?;
    let obj = gen_object_seeded(rec.seed, m.uv_res);
    let cams = camera_ring(m.n_views, m.view_res)?;
    let cam = cams
        .get(view)
        .ok_or_else(|| Error::Format(format!("record {} view {view} outside the rig", rec.id)))?;
    let gbuf = rasterize_gbuffer(&obj.mesh, cam);
    let image = io::read_pfm_rgb(&dir.join(file_with_suffix(rec, "_image.pfm")?))?;
    let normal_map = io::read_pfm_rgb(&dir.join(file_with_suffix(rec, "_normal.pfm")?))?;
    let conf = io::read_png_mask(&dir.join(file_with_suffix(rec, "_conf.png")?))?;
    let gt = load_bundle(dir, rec, "_gt")?;
    let rig_path = dir.join(file_with_suffix(rec, "_rigs.txt")?);
    let rig_text = fs::read_to_string(&rig_path).map_err(|e| Error::io(&rig_path, e))?;
    let (trusted, stitched) = rig_text
        .strip_prefix("[trusted]\n")
        .and_then(|s| s.split_once("[stitched]\n"))
        .ok_or_else(|| Error::Format(format!("{}: malformed rig file", rig_path.display())))?;
    for g in [&image, &normal_map] {
        g.ensure_shape(gbuf.shape(), "estimator image")?;
    }
    gt.albedo.ensure_shape(gbuf.shape(), "estimator ground truth")?;
    Ok(TrainingSample {
        object_seed: rec.seed,
        view,
        tag: rec.tag,
        scenario: rec
            .scenario
            .ok_or_else(|| Error::Format(format!("record {} has no scenario", rec.id)))?,
        image,
        confidence: ConfidenceMask::from_bools(&conf),
        normal_map,
        gt,
        gbuf,
        rigs: [LightingRig::from_text(trusted)?, LightingRig::from_text(stitched)?],
    })
}

pub fn load_refiner_sample(dir: &Path, rec: &Record) -> Result<RefinerSample> {
    let input = load_bundle(dir, rec, "_input")?;
    let gt = load_bundle(dir, rec, "_gt")?;
    let holes = io::read_png_mask(&dir.join(file_with_suffix(rec, "_holes.png")?))?;
    let occupancy = io::read_png_mask(&dir.join(file_with_suffix(rec, "_occupancy.png")?))?;
    let ccm = io::read_pfm_rgb(&dir.join(file_with_suffix(rec, "_ccm.pfm")?))?;
    Ok(RefinerSample {
        input,
        holes,
        ccm,
        occupancy,
        gt,
        degraded: false,
    })
}
