use std::path::Path;
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use texmat::dataset::{build_dataset, load_refiner_sample, load_training_sample, object_samples, Manifest, MANIFEST_NAME};
use texmat::diffusion::{
    add_noise, grad_check, make_schedule, predict_x0, sample, v_target, Denoiser, Example, ModelConfig, Tensor,
    TrainConfig,
};
use texmat::geometry::{
    bake_view_to_uv, camera_ring, compute_ccm_uv, project_known, pullpush_fill, rasterize_gbuffer, sample_atlas,
    uv_sphere, BakeState, GBuffer,
};
use texmat::grid::Grid;
use texmat::io::{read_pfm_rgb, write_pfm_rgb};
use texmat::material::{validate_material_set, MaterialSample, MaterialSet};
use texmat::pipeline::latent_blend;
use texmat::shading::brdf::eval_brdf_parts;
use texmat::shading::lighting::rig_violations;
use texmat::shading::{
    eval_brdf_f64, hemisphere_albedo, render, render_with_jacobian, sample_lighting, LightCategory, LightingRig, V3,
};

use crate::config::Overrides;

/// Deliberate defects that demonstrate the battery catches them.
#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Specular lobe subtracted instead of added, with a negative offset.
    BrdfSign,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Run the reduced battery (under a minute on one core).
    #[arg(long)]
    quick: bool,
    /// Run only the named checks (repeatable).
    #[arg(long = "check", value_name = "NAME")]
    only: Vec<String>,
    #[arg(long, hide = true, value_enum)]
    inject_fault: Option<Fault>,
}

struct Ctx {
    quick: bool,
    fault: Option<Fault>,
}

type Check = fn(&Ctx) -> Result<String>;

const CHECKS: [(&str, Check); 15] = [
    ("v-closure", v_closure),
    ("furnace", furnace),
    ("none-render", none_render),
    ("power-linearity", power_linearity),
    ("renderer-fd", renderer_fd),
    ("grad-check", grad_check_battery),
    ("blend-limits", blend_limits),
    ("sampler-override", sampler_override),
    ("bake-round-trip", bake_round_trip),
    ("sphere-holes", sphere_holes),
    ("checkpoint-round-trip", checkpoint_round_trip),
    ("pfm-round-trip", pfm_round_trip),
    ("rig-round-trip", rig_round_trip),
    ("manifest-round-trip", manifest_round_trip),
    ("rig-ranges", rig_ranges),
];

pub fn names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

pub fn run(a: Args, file: Option<&Path>, threads: Option<usize>) -> Result<bool> {
    crate::setup(file, threads, Overrides::default())?;
    for name in &a.only {
        if !names().contains(&name.as_str()) {
            bail!("unknown check '{name}' (known: {})", names().join(", "));
        }
    }
    let ctx = Ctx { quick: a.quick, fault: a.inject_fault };
    let (mut passed, mut failed) = (0, 0);
    for (name, check) in CHECKS {
        if !a.only.is_empty() && !a.only.iter().any(|n| n == name) {
            continue;
        }
        let start = Instant::now();
        let outcome = check(&ctx);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS\t{name}\t{secs:.2}s\t{detail}");
            }
            Err(e) => {
                failed += 1;
                println!("FAIL\t{name}\t{secs:.2}s\t{e:#}");
            }
        }
    }
    println!("verify\tpassed\t{passed}\tfailed\t{failed}");
    Ok(failed == 0)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_materials(w: usize, h: usize, seed: u64) -> MaterialSet {
    let mut r = rng(seed);
    MaterialSet::from_fn(w, h, |_, _| MaterialSample {
        albedo: [r.random_range(0.05..0.95), r.random_range(0.05..0.95), r.random_range(0.05..0.95)],
        roughness: r.random_range(0.15..0.95),
        metallic: r.random_range(0.05..0.95),
        bump: [r.random_range(0.3..0.7), r.random_range(0.3..0.7), r.random_range(0.8..1.0)],
    })
}

fn sphere_view(res: usize) -> Result<GBuffer> {
    let cam = camera_ring(6, res)?[0];
    Ok(rasterize_gbuffer(&uv_sphere(48, 24), &cam))
}

/// One rig of each category, lit from around the first ring camera.
fn rigs(g: &GBuffer) -> Vec<LightingRig> {
    let mut r = rng(5);
    let dir = (g.camera.position - g.camera.target).normalize();
    LightCategory::ALL.iter().map(|&c| sample_lighting(c, &dir, &mut r)).collect()
}

fn v_closure(_: &Ctx) -> Result<String> {
    let s = make_schedule(1000)?;
    let mut r = rng(1);
    let n = 10_000;
    let t: Vec<usize> = (0..n).map(|_| r.random_range(0..=s.steps())).collect();
    let x0 = Tensor::from_vec(n, 9, 1, 1, (0..n * 9).map(|_| r.random_range(-1.0..1.0)).collect())?;
    let eps = Tensor::from_vec(n, 9, 1, 1, (0..n * 9).map(|_| r.sample(StandardNormal)).collect())?;
    let z = add_noise(&x0, &eps, &t, &s)?;
    let v = v_target(&x0, &eps, &t, &s)?;
    let back = predict_x0(&z, &v, &t, &s)?;
    let err = back.data.iter().zip(&x0.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(err < 1e-5, "max reconstruction error {err:.3e}");
    Ok(format!("{n} triples, max error {err:.2e}"))
}

fn furnace(ctx: &Ctx) -> Result<String> {
    let n = V3([0.0, 0.0, 1.0]);
    let f = |v: [f64; 3], l: [f64; 3]| match ctx.fault {
        Some(Fault::BrdfSign) => {
            let (d, s) = eval_brdf_parts([1.0; 3], 1.0, 0.0, &n, v, l);
            std::array::from_fn(|k| d[k] - s[k] - 0.1)
        }
        None => eval_brdf_f64([1.0; 3], 1.0, 0.0, n.0, v, l),
    };
    let e = hemisphere_albedo(f, [0.0, 0.0, 1.0], 100_000, &mut rng(7));
    ensure!((0.9..=1.05).contains(&e), "white furnace integral {e:.4} outside [0.9, 1.05]");
    Ok(format!("integral {e:.4}"))
}

fn none_render(_: &Ctx) -> Result<String> {
    let g = sphere_view(32)?;
    let m = random_materials(32, 32, 2);
    let img = render(&g, &m, &LightingRig::none())?;
    for i in 0..img.len() {
        let expect = if g.coverage[i] { m.albedo[i] } else { [0.0; 3] };
        ensure!(img[i] == expect, "pixel {i}: {:?} != {expect:?}", img[i]);
    }
    Ok(format!("{} covered pixels bit-exact", g.covered_count()))
}

fn power_linearity(_: &Ctx) -> Result<String> {
    let g = sphere_view(32)?;
    let m = random_materials(32, 32, 5);
    let mut n = 0;
    for rig in rigs(&g).into_iter().filter(|r| matches!(r.category, LightCategory::Point | LightCategory::Area)) {
        let a = render(&g, &m, &rig)?;
        let b = render(&g, &m, &rig.scaled_power(2.0))?;
        for i in 0..a.len() {
            ensure!(a[i].map(|c| 2.0 * c) == b[i], "{:?} pixel {i} not doubled", rig.category);
        }
        n += 1;
    }
    Ok(format!("{n} rigs exact"))
}

fn renderer_fd(ctx: &Ctx) -> Result<String> {
    let g = sphere_view(24)?;
    let mats = random_materials(24, 24, 6);
    let covered: Vec<usize> = (0..g.coverage.len()).filter(|&i| g.coverage[i]).collect();
    let mut r = rng(9);
    let probes = if ctx.quick { 20 } else { 100 };
    let eps = 1e-3;
    let mut worst: f64 = 0.0;
    for rig in rigs(&g) {
        let (_, jac) = render_with_jacobian(&g, &mats, &rig)?;
        for _ in 0..probes {
            let i = covered[r.random_range(0..covered.len())];
            let ch = r.random_range(0..8);
            let base = mats.get_index(i).to_channels();
            let eval = |d: f64| -> Result<[f64; 3]> {
                let mut c = base;
                c[ch] += d;
                let mut m = mats.clone();
                m.set_index(i, MaterialSample::from_channels(&c));
                Ok(render(&g, &m, &rig)?[i])
            };
            let (p, m) = (eval(eps)?, eval(-eps)?);
            for k in 0..3 {
                let num = (p[k] - m[k]) / (2.0 * eps);
                let ana = jac[i][k][ch];
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
    }
    ensure!(worst < 1e-3, "max relative error {worst:.3e}");
    Ok(format!("{} probes per rig, max relative error {worst:.2e}", probes))
}

fn grad_check_battery(_: &Ctx) -> Result<String> {
    let cams = camera_ring(6, 16)?;
    let s = object_samples(6, &cams, 32)?;
    let ex = Example::estimator(&s.estimator[0], true)?;
    let sched = make_schedule(1000)?;
    let model = Denoiser::new(ModelConfig::estimator(8), &mut rng(8))?;
    let rep = grad_check(&model, &[&ex], &sched, &TrainConfig::default(), 50, 99)?;
    ensure!(rep.max_rel_error < 1e-2, "max relative error {:.3e}", rep.max_rel_error);
    Ok(format!("50 probes, max relative error {:.2e}", rep.max_rel_error))
}

fn blend_limits(_: &Ctx) -> Result<String> {
    let mut r = rng(11);
    let mut t = || Tensor::from_vec(1, 9, 8, 8, (0..9 * 64).map(|_| r.sample(StandardNormal)).collect());
    let (a, b) = (t()?, t()?);
    ensure!(latent_blend(&a, &b, &Grid::filled(8, 8, false))? == a, "mask 0 does not return the sample");
    ensure!(latent_blend(&a, &b, &Grid::filled(8, 8, true))? == b, "mask 1 does not return the known latent");
    let checker = Grid::from_fn(8, 8, |x, y| (x + y) % 2 == 0);
    let out = latent_blend(&a, &b, &checker)?;
    for c in 0..9 {
        for y in 0..8 {
            for x in 0..8 {
                let src = if checker[(x, y)] { &b } else { &a };
                ensure!(out.at(0, c, y, x) == src.at(0, c, y, x), "checkerboard pixel ({x}, {y}) channel {c}");
            }
        }
    }
    Ok("all-zero, all-one and checkerboard masks exact".into())
}

fn sampler_override(_: &Ctx) -> Result<String> {
    let cams = camera_ring(6, 16)?;
    let s = object_samples(4, &cams, 32)?;
    let ex = Example::estimator(&s.estimator[0], true)?;
    let sched = make_schedule(1000)?;
    let model = Denoiser::new(ModelConfig::estimator(8), &mut rng(7))?;
    let x0 = ex.x0.clone();
    let mut noise = rng(3);
    let mut hook = |t: usize, z: &mut Tensor| {
        let eps = Tensor::from_vec(1, 9, z.h, z.w, (0..z.len()).map(|_| noise.sample(StandardNormal)).collect())
            .expect("noise shape");
        *z = add_noise(&x0, &eps, &[t], &sched).expect("noise schedule");
    };
    let out = sample(&model, &ex.cond, &[ex.tag], &sched, 10, &mut rng(4), Some(&mut hook))?;
    ensure!(validate_material_set(&out[0]).is_valid(), "sample outside the material ranges");
    let d = out[0].max_abs_diff(&ex.gt);
    ensure!(d <= 2.0 / 255.0, "fully known output deviates by {d:.4}");
    Ok(format!("fully known output within {d:.2e}"))
}

/// Smooth atlas, periodic in u so the sphere seam is continuous.
fn smooth_atlas(w: usize, h: usize) -> MaterialSet {
    MaterialSet::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        let s = |f: f64, p: f64| 0.5 + 0.15 * (std::f64::consts::TAU * f + p).sin();
        MaterialSample {
            albedo: [s(u, 0.0), s(v, 1.0), s(u + v, 2.0)],
            roughness: s(u, 0.3),
            metallic: s(0.5 * v, 0.7),
            bump: [s(u, 1.3), s(v, 2.3), 0.9],
        }
    })
}

fn bake_round_trip(_: &Ctx) -> Result<String> {
    let mesh = uv_sphere(64, 32);
    let atlas = smooth_atlas(128, 128);
    let surf = compute_ccm_uv(&mesh, 128, 128);
    let occ = surf.occupancy.clone();
    let g = rasterize_gbuffer(&mesh, &camera_ring(6, 64)?[0]);
    let view = sample_atlas(&atlas, &occ, &g);
    let mut bake = BakeState::new(surf);
    bake_view_to_uv(&view, &g, &mut bake)?;
    let (back, known) = project_known(&bake, &g);
    let (mut err, mut n) = (0.0, 0usize);
    for i in 0..g.coverage.len() {
        if !g.coverage[i] {
            continue;
        }
        ensure!(known[i], "covered pixel {i} not reprojected");
        let (a, b) = (view.get_index(i).to_channels(), back.get_index(i).to_channels());
        err += a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        n += 8;
    }
    let mae = err / n as f64;
    ensure!(mae <= 2.0 / 255.0, "MAE {mae:.4} above 2/255");
    Ok(format!("MAE {mae:.2e}"))
}

fn sphere_holes(_: &Ctx) -> Result<String> {
    let mesh = uv_sphere(48, 24);
    let atlas = smooth_atlas(128, 128);
    let surf = compute_ccm_uv(&mesh, 128, 128);
    let occ = surf.occupancy.clone();
    let mut bake = BakeState::new(surf);
    for cam in camera_ring(6, 64)? {
        let g = rasterize_gbuffer(&mesh, &cam);
        bake_view_to_uv(&sample_atlas(&atlas, &occ, &g), &g, &mut bake)?;
    }
    let holes = bake.hole_fraction();
    ensure!(holes < 0.2, "hole fraction {holes:.3} after six views");
    let filled = pullpush_fill(&bake, &occ);
    let bad = (0..occ.len())
        .filter(|&i| occ[i] && !filled.get_index(i).to_channels().iter().all(|c| (0.0..=1.0).contains(c)))
        .count();
    ensure!(bad == 0, "{bad} occupied texels left unfilled");
    Ok(format!("hole fraction {holes:.3}, 0 after pull-push"))
}

fn checkpoint_round_trip(_: &Ctx) -> Result<String> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("m.ckpt");
    let m = Denoiser::new(ModelConfig::refiner(8), &mut rng(10))?;
    m.save(&path)?;
    let back = Denoiser::load(&path)?;
    ensure!(back.config == m.config, "configuration changed");
    for (a, b) in back.params.tensors.iter().zip(&m.params.tensors) {
        ensure!(a.data.iter().zip(&b.data).all(|(x, y)| *x == *y as f32 as f64), "parameters changed");
    }
    let bytes = std::fs::read(&path)?;
    std::fs::write(&path, &bytes[..bytes.len() - 3])?;
    ensure!(Denoiser::load(&path).is_err(), "truncated checkpoint accepted");
    Ok(format!("{} parameters", m.parameter_count()))
}

fn pfm_round_trip(_: &Ctx) -> Result<String> {
    let dir = tempfile::tempdir()?;
    let img = Grid::from_fn(7, 5, |x, y| [x as f64 * 0.25, y as f64 * 0.5, 0.125]);
    let p = dir.path().join("a.pfm");
    write_pfm_rgb(&p, &img)?;
    ensure!(read_pfm_rgb(&p)? == img, "image changed");
    Ok("7x5 image exact, orientation kept".into())
}

fn rig_round_trip(_: &Ctx) -> Result<String> {
    let g = sphere_view(16)?;
    for rig in rigs(&g) {
        ensure!(LightingRig::from_text(&rig.to_text())? == rig, "{:?} rig changed", rig.category);
    }
    ensure!(LightingRig::from_text("category=laser").is_err(), "unknown category accepted");
    Ok("all categories exact".into())
}

fn manifest_round_trip(_: &Ctx) -> Result<String> {
    let dir = tempfile::tempdir()?;
    let m = build_dataset(1, 6, 16, 32, dir.path(), 3)?;
    let back = Manifest::read(&dir.path().join(MANIFEST_NAME))?;
    ensure!(back == m, "manifest changed");
    let rec = m.estimator_records().next().ok_or_else(|| anyhow::anyhow!("no estimator records"))?;
    load_training_sample(dir.path(), &m, rec)?;
    let rec = m.refiner_records().next().ok_or_else(|| anyhow::anyhow!("no refiner records"))?;
    load_refiner_sample(dir.path(), rec)?;
    Ok(format!("{} records", m.records.len()))
}

fn rig_ranges(ctx: &Ctx) -> Result<String> {
    let n = if ctx.quick { 1_000 } else { 10_000 };
    let mut r = rng(12);
    let cats = [LightCategory::Point, LightCategory::Area, LightCategory::Environment];
    for i in 0..n {
        let dir = texmat::geometry::Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.1..1.0));
        let rig = sample_lighting(cats[i % 3], &dir, &mut r);
        let v = rig_violations(&rig, &dir);
        ensure!(v.is_empty(), "rig {i}: {}", v.join("; "));
    }
    Ok(format!("{n} rigs in range"))
}
