use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use texmat::diffusion::cond::REFINER_COND_CHANNELS;
use texmat::diffusion::model::CHECKPOINT_MAGIC;
use texmat::diffusion::{Denoiser, ModelConfig};
use texmat::io::write_material_set;
use texmat::material::{MaterialSample, MaterialSet};

fn texmat(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texmat")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value of the first `key\tvalue` line with this key.
fn field(out: &str, key: &str) -> Option<String> {
    out.lines().find_map(|l| l.strip_prefix(&format!("{key}\t")).map(str::to_string))
}

fn ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stdout:\n{}\nstderr:\n{}", stdout(o), stderr(o));
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    out.sort();
    out
}

fn save_model(path: &Path, cfg: ModelConfig, seed: u64) {
    Denoiser::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().save(path).unwrap();
}

#[test]
fn gen_data_counts_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        ["gen-data", "--objects", "8", "--views", "6", "--view-res", "16", "--uv-res", "32", "--seed", "1", "--out"]
            .iter()
            .map(|s| s.to_string())
            .chain([out.to_string()])
            .collect::<Vec<_>>()
    };
    let a = texmat(&args("a").iter().map(String::as_str).collect::<Vec<_>>(), dir.path());
    ok(&a);
    let out = stdout(&a);
    assert_eq!(field(&out, "estimator_records").as_deref(), Some("48"));
    assert_eq!(field(&out, "manifest").as_deref(), Some("a/manifest.tsv"));
    assert!(out.contains("config\tobjects\t8\n"));
    ok(&texmat(&args("b").iter().map(String::as_str).collect::<Vec<_>>(), dir.path()));
    let (fa, fb) = (files(&dir.path().join("a")), files(&dir.path().join("b")));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert!(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn unwritable_output_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plain"), "x").unwrap();
    let o = texmat(&["gen-data", "--objects", "1", "--out", "plain/sub"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("plain/sub"), "{}", stderr(&o));
}

#[test]
fn missing_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = texmat(&["train", "estimator", "--data", "nowhere", "--out", "m.ckpt", "--steps", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("manifest"), "{}", stderr(&o));
}

#[test]
fn config_file_is_layered_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "width=12\nseed=5\n").unwrap();
    let o = texmat(&["--config", "run.cfg", "gen-data", "--objects", "1", "--view-res", "16", "--uv-res", "16", "--seed", "9", "--out", "d"], dir.path());
    ok(&o);
    let out = stdout(&o);
    assert!(out.contains("config\twidth\t12\n") && out.contains("config\tseed\t9\n"), "{out}");

    std::fs::write(dir.path().join("bad.cfg"), "widht=12\n").unwrap();
    let o = texmat(&["--config", "bad.cfg", "verify", "--check", "pfm-round-trip"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("widht"), "{}", stderr(&o));
    std::fs::write(dir.path().join("range.cfg"), "views=7\n").unwrap();
    assert_eq!(texmat(&["--config", "range.cfg", "verify", "--check", "pfm-round-trip"], dir.path()).status.code(), Some(2));
}

#[test]
fn train_overfit_reduces_loss_tenfold() {
    let dir = tempfile::tempdir().unwrap();
    ok(&texmat(&["gen-data", "--objects", "1", "--views", "6", "--view-res", "32", "--uv-res", "64", "--seed", "1", "--out", "d"], dir.path()));
    let o = texmat(
        &["train", "estimator", "--data", "d", "--steps", "200", "--overfit", "4", "--width", "16", "--lr", "1e-3", "--seed", "0", "--out", "e.ckpt", "--log", "log.tsv"],
        dir.path(),
    );
    ok(&o);
    let out = stdout(&o);
    let early: f64 = field(&out, "summary\tearly_loss").unwrap().parse().unwrap();
    let last: f64 = field(&out, "summary\tfinal_loss").unwrap().parse().unwrap();
    assert!(last <= 0.1 * early, "{early} -> {last}");
    let log = std::fs::read_to_string(dir.path().join("log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 201);
    assert!(log.starts_with("step\tloss_v\t"));
    assert!(Denoiser::load(&dir.path().join("e.ckpt")).is_ok());
}

#[test]
fn train_refiner_writes_refiner_checkpoint_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&texmat(&["gen-data", "--objects", "2", "--view-res", "16", "--uv-res", "16", "--out", "d"], dir.path()));
    let o = texmat(&["train", "refiner", "--data", "d", "--steps", "3", "--width", "8", "--checkpoint-every", "2", "--out", "r.ckpt"], dir.path());
    ok(&o);
    assert!(stdout(&o).contains("checkpoint\t2\tr.ckpt"));
    let path = dir.path().join("r.ckpt");
    assert_eq!(&std::fs::read(&path).unwrap()[..8], CHECKPOINT_MAGIC);
    assert_eq!(Denoiser::load(&path).unwrap().config.cond_channels, REFINER_COND_CHANNELS);

    let o = texmat(&["train", "refiner", "--data", "d", "--steps", "1", "--resume", "r.ckpt", "--out", "r2.ckpt"], dir.path());
    ok(&o);
    assert!(stdout(&o).contains("resume\tr.ckpt"));
    let o = texmat(&["train", "estimator", "--data", "d", "--steps", "1", "--resume", "r.ckpt", "--out", "x.ckpt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

fn paint(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["paint", "--estimator", "e.ckpt", "--view-res", "32", "--uv-res", "32", "--steps", "4", "--out", out];
    args.extend_from_slice(extra);
    texmat(&args, dir)
}

fn report(dir: &Path, out: &str) -> String {
    std::fs::read_to_string(dir.join(out).join("report.tsv")).unwrap()
}

#[test]
fn paint_outputs_notes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    save_model(&dir.path().join("e.ckpt"), ModelConfig::estimator(8), 1);
    save_model(&dir.path().join("r.ckpt"), ModelConfig::refiner(8), 2);

    let o = paint(dir.path(), "a", &["--mesh", "sphere", "--scenario", "lightfree", "--refiner", "r.ckpt"]);
    ok(&o);
    let out = dir.path().join("a");
    for f in ["uv_albedo.pfm", "uv_rm.pfm", "uv_bump.pfm", "uv_albedo.png", "report.tsv", "job.txt", "preview_point.png", "preview_area.png", "preview_env.png", "views/view5_albedo.pfm"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let rep = report(dir.path(), "a");
    assert_eq!(field(&rep, "final_hole_fraction").as_deref(), Some("0.000000"));
    assert_eq!(field(&rep, "fill").as_deref(), Some("refiner"));

    ok(&paint(dir.path(), "b", &["--mesh", "sphere", "--scenario", "lightfree", "--refiner", "r.ckpt"]));
    for f in ["uv_albedo.pfm", "uv_rm.pfm", "uv_bump.pfm"] {
        assert!(std::fs::read(out.join(f)).unwrap() == std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f} differs");
    }

    ok(&paint(dir.path(), "c", &["--refiner", "r.ckpt", "--no-refiner"]));
    let rep = report(dir.path(), "c");
    assert_eq!(field(&rep, "fill").as_deref(), Some("pullpush"));
    assert!(rep.contains("note\trefiner disabled: holes filled by pull-push"));

    ok(&paint(dir.path(), "g", &["--scenario", "generated"]));
    assert!(report(dir.path(), "g").contains("note\tno input texture: coarse procedural texture used"));
}

#[test]
fn paint_job_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    save_model(&dir.path().join("e.ckpt"), ModelConfig::estimator(8), 1);
    std::fs::write(dir.path().join("job.txt"), "mesh=cube\nscenario=realistic\ntag=wood\nsteps=3\n").unwrap();
    let o = paint(dir.path(), "j", &["--job", "job.txt", "--scenario", "generated"]);
    ok(&o);
    let out = stdout(&o);
    assert!(out.contains("job\tmesh\tcube\n") && out.contains("job\tscenario\tgenerated\n"), "{out}");
    assert!(out.contains("job\tsteps\t4\n"));
    let o = paint(dir.path(), "k", &["--estimator", "nowhere.ckpt"]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_bundle(dir: &Path, stem: &str, albedo_offset: f64) {
    let m = MaterialSet::from_fn(8, 8, |x, y| MaterialSample {
        albedo: [0.1 * (x % 5) as f64 + albedo_offset, 0.3 + albedo_offset, 0.05 * y as f64 + albedo_offset],
        roughness: 0.25 + 0.05 * x as f64,
        metallic: if y > 3 { 1.0 } else { 0.0 },
        bump: [0.5, 0.5, 1.0],
    });
    std::fs::create_dir_all(dir).unwrap();
    write_material_set(dir, stem, &m).unwrap();
}

#[test]
fn eval_columns_zero_and_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, same, off) = (dir.path().join("gt"), dir.path().join("same"), dir.path().join("off"));
    for s in ["a", "b"] {
        write_bundle(&gt, s, 0.0);
        write_bundle(&same, s, 0.0);
        write_bundle(&off, s, 0.1);
    }
    let o = texmat(&["eval", "--pred", "same", "--gt", "gt"], dir.path());
    ok(&o);
    let out = stdout(&o);
    let table: Vec<&str> = out.lines().filter(|l| !l.starts_with("config\t")).collect();
    assert_eq!(table[0], "item\talbedo\troughness\tmetallic\tbump\tmean\tconsistency");
    assert_eq!(table[1], "a\t0.000000\t0.000000\t0.000000\t0.000000\t0.000000\tNA");
    assert_eq!(table.len(), 4);

    let out = stdout(&texmat(&["eval", "--pred", "off", "--gt", "gt"], dir.path()));
    let row: Vec<&str> = out.lines().find(|l| l.starts_with("b\t")).unwrap().split('\t').collect();
    let v: Vec<f64> = row[1..6].iter().map(|s| s.parse().unwrap()).collect();
    assert!((v[0] - 0.1).abs() < 1e-6, "{row:?}");
    assert_eq!(&v[1..4], &[0.0, 0.0, 0.0]);

    write_bundle(&dir.path().join("more"), "a", 0.0);
    write_bundle(&dir.path().join("more"), "c", 0.0);
    assert_eq!(texmat(&["eval", "--pred", "more", "--gt", "gt"], dir.path()).status.code(), Some(2));
}

#[test]
fn eval_recomputes_consistency_of_a_paint_run() {
    let dir = tempfile::tempdir().unwrap();
    save_model(&dir.path().join("e.ckpt"), ModelConfig::estimator(8), 1);
    ok(&paint(dir.path(), "p", &["--scenario", "generated"]));
    let reported = field(&report(dir.path(), "p"), "consistency").unwrap();
    let out = stdout(&texmat(&["eval", "--pred", "p", "--gt", "p"], dir.path()));
    let row = out.lines().find(|l| l.starts_with("uv\t")).unwrap();
    assert_eq!(row.rsplit('\t').next().unwrap(), reported);
}

#[test]
fn relight_writes_png_and_pfm() {
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&dir.path().join("m"), "uv", 0.0);
    std::fs::write(dir.path().join("rig.txt"), "category=environment\nenv_strength=2\n").unwrap();
    for extra in [vec!["--preset", "env"], vec!["--rig", "rig.txt"]] {
        let mut args = vec!["relight", "--materials", "m", "--view-res", "16", "--out", "r.png"];
        args.extend(extra);
        ok(&texmat(&args, dir.path()));
        assert!(dir.path().join("r.png").is_file() && dir.path().join("r.pfm").is_file());
    }
    let o = texmat(&["relight", "--materials", "m", "--view", "6", "--out", "r.png"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_quick_passes_within_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = texmat(&["verify", "--quick"], dir.path());
    let secs = start.elapsed().as_secs_f64();
    ok(&o);
    let out = stdout(&o);
    assert!(!out.contains("FAIL\t"));
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS\t")).count(), 15);
    assert!(secs < 60.0, "{secs} s");
}

#[test]
fn verify_catches_injected_brdf_sign_bug() {
    let dir = tempfile::tempdir().unwrap();
    let o = texmat(&["verify", "--quick", "--inject-fault", "brdf-sign"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("FAIL\tfurnace\t")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("PASS\tnone-render\t")));
}
