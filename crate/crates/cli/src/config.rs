//! Layered run configuration: built-in defaults, then a `key=value` config
//! file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use texmat::kv::KvBlock;

pub const CONFIG_KEYS: [&str; 18] = [
    "view_res",
    "uv_res",
    "views",
    "objects",
    "schedule_steps",
    "sampler_steps",
    "width",
    "lr",
    "batch_size",
    "grad_clip",
    "lambda_p",
    "lambda_2",
    "seed",
    "threads",
    "data",
    "out",
    "estimator",
    "refiner",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub view_res: usize,
    pub uv_res: usize,
    pub views: usize,
    pub objects: usize,
    pub schedule_steps: usize,
    pub sampler_steps: usize,
    pub width: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub lambda_p: f64,
    pub lambda_2: f64,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub estimator: Option<PathBuf>,
    pub refiner: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            view_res: 64,
            uv_res: 128,
            views: 6,
            objects: 64,
            schedule_steps: 1000,
            sampler_steps: 50,
            width: 32,
            lr: 5e-5,
            batch_size: 4,
            grad_clip: 1.0,
            lambda_p: 0.1,
            lambda_2: 1.0,
            seed: 0,
            threads: 0,
            data: None,
            out: None,
            estimator: None,
            refiner: None,
        }
    }
}

fn value<T: std::str::FromStr>(b: &KvBlock, key: &str, current: T) -> Result<T> {
    Ok(b.parse_value(key)?.unwrap_or(current))
}

fn path(b: &KvBlock, key: &str, current: Option<PathBuf>) -> Option<PathBuf> {
    match b.get(key) {
        Some("" | "none") => None,
        Some(p) => Some(PathBuf::from(p)),
        None => current,
    }
}

impl Config {
    /// Overrides every key present in `b`; unknown keys are rejected.
    pub fn apply(&mut self, b: &KvBlock) -> Result<()> {
        b.reject_unknown(&CONFIG_KEYS)?;
        let c = self.clone();
        *self = Config {
            view_res: value(b, "view_res", c.view_res)?,
            uv_res: value(b, "uv_res", c.uv_res)?,
            views: value(b, "views", c.views)?,
            objects: value(b, "objects", c.objects)?,
            schedule_steps: value(b, "schedule_steps", c.schedule_steps)?,
            sampler_steps: value(b, "sampler_steps", c.sampler_steps)?,
            width: value(b, "width", c.width)?,
            lr: value(b, "lr", c.lr)?,
            batch_size: value(b, "batch_size", c.batch_size)?,
            grad_clip: value(b, "grad_clip", c.grad_clip)?,
            lambda_p: value(b, "lambda_p", c.lambda_p)?,
            lambda_2: value(b, "lambda_2", c.lambda_2)?,
            seed: value(b, "seed", c.seed)?,
            threads: value(b, "threads", c.threads)?,
            data: path(b, "data", c.data),
            out: path(b, "out", c.out),
            estimator: path(b, "estimator", c.estimator),
            refiner: path(b, "refiner", c.refiner),
        };
        Ok(())
    }

    pub fn apply_file(&mut self, file: &Path) -> Result<()> {
        let text = std::fs::read_to_string(file).with_context(|| format!("reading config {}", file.display()))?;
        let block = KvBlock::parse(&text).with_context(|| format!("parsing config {}", file.display()))?;
        self.apply(&block).with_context(|| format!("config {}", file.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let res_ok = |r: usize| (8..=1024).contains(&r) && r % 4 == 0;
        if !res_ok(self.view_res) || !res_ok(self.uv_res) {
            bail!("view_res and uv_res must be multiples of 4 in [8, 1024]");
        }
        if !matches!(self.views, 6 | 10) {
            bail!("views must be 6 or 10, got {}", self.views);
        }
        if self.objects == 0 {
            bail!("objects must be at least 1");
        }
        if !(2..=100_000).contains(&self.schedule_steps) {
            bail!("schedule_steps must be in [2, 100000]");
        }
        if self.sampler_steps == 0 || self.sampler_steps > self.schedule_steps {
            bail!("sampler_steps must be in [1, schedule_steps]");
        }
        if !(4..=512).contains(&self.width) {
            bail!("width must be in [4, 512]");
        }
        if !(self.lr > 0.0 && self.lr <= 1.0) {
            bail!("lr must be in (0, 1]");
        }
        if !(1..=1024).contains(&self.batch_size) {
            bail!("batch_size must be in [1, 1024]");
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            bail!("grad_clip must be a finite value >= 0");
        }
        for (k, v) in [("lambda_p", self.lambda_p), ("lambda_2", self.lambda_2)] {
            if !(0.0..=100.0).contains(&v) {
                bail!("{k} must be in [0, 100]");
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvBlock {
        let p = |v: &Option<PathBuf>| v.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let mut b = KvBlock::new();
        b.push("view_res", self.view_res);
        b.push("uv_res", self.uv_res);
        b.push("views", self.views);
        b.push("objects", self.objects);
        b.push("schedule_steps", self.schedule_steps);
        b.push("sampler_steps", self.sampler_steps);
        b.push("width", self.width);
        b.push("lr", self.lr);
        b.push("batch_size", self.batch_size);
        b.push("grad_clip", self.grad_clip);
        b.push("lambda_p", self.lambda_p);
        b.push("lambda_2", self.lambda_2);
        b.push("seed", self.seed);
        b.push("threads", self.threads);
        b.push("data", p(&self.data));
        b.push("out", p(&self.out));
        b.push("estimator", p(&self.estimator));
        b.push("refiner", p(&self.refiner));
        b
    }

    /// Prints the effective configuration as `config<TAB>key<TAB>value` lines.
    pub fn print(&self) {
        for (k, v) in self.to_kv().entries() {
            println!("config\t{k}\t{v}");
        }
    }
}

/// Command-line overrides collected as a `key=value` block so they go
/// through the same parser and checks as a config file.
#[derive(Debug, Default)]
pub struct Overrides(KvBlock);

impl Overrides {
    pub fn set(&mut self, key: &str, v: Option<impl ToString>) -> &mut Self {
        if let Some(v) = v {
            self.0.push(key, v.to_string());
        }
        self
    }

    pub fn set_path(&mut self, key: &str, v: Option<&PathBuf>) -> &mut Self {
        self.set(key, v.map(|p| p.display().to_string()))
    }

    pub fn block(&self) -> &KvBlock {
        &self.0
    }
}

/// Defaults, then the optional config file, then flag overrides; validated.
pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(f) = file {
        cfg.apply_file(f)?;
    }
    cfg.apply(overrides.block())?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.cfg");
        std::fs::write(&f, "width=16\nlr=0.001\nseed=4\n").unwrap();
        let mut o = Overrides::default();
        o.set("seed", Some(9));
        let cfg = resolve(Some(&f), &o).unwrap();
        assert_eq!((cfg.width, cfg.lr, cfg.seed), (16, 0.001, 9));
        assert_eq!(cfg.view_res, 64);

        std::fs::write(&f, "widht=16\n").unwrap();
        assert!(resolve(Some(&f), &Overrides::default()).is_err());
        std::fs::write(&f, "views=4\n").unwrap();
        assert!(resolve(Some(&f), &Overrides::default()).is_err());
    }

    #[test]
    fn printed_config_parses_back() {
        let cfg = Config::default();
        let mut again = Config::default();
        again.apply(&KvBlock::parse(&cfg.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }
}
