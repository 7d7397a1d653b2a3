//! The denoiser: per-modality input branches, a shared U-shaped trunk with
//! timestep and tag embeddings, and per-modality output heads.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::cond::{ensure_cond_channels, PACKED_CHANNELS};
use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::dataset::TAGS;
use crate::error::{Error, Result};

/// Output heads of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    /// Separate input branch and output head for albedo, packed RM and bump.
    Triple,
    /// One branch and one head over all nine packed channels.
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Trunk width; the bottleneck has twice as many channels.
    pub width: usize,
    pub time_dim: usize,
    pub tag_dim: usize,
    pub n_tags: usize,
    pub cond_channels: usize,
    pub heads: HeadMode,
    /// Whether the confidence channel is fed (otherwise it is held at zero).
    pub use_confidence: bool,
}

impl ModelConfig {
    pub fn estimator(width: usize) -> Self {
        Self {
            width,
            time_dim: 32,
            tag_dim: 8,
            n_tags: TAGS.len(),
            cond_channels: super::cond::ESTIMATOR_COND_CHANNELS,
            heads: HeadMode::Triple,
            use_confidence: true,
        }
    }

    pub fn refiner(width: usize) -> Self {
        Self { cond_channels: super::cond::REFINER_COND_CHANNELS, ..Self::estimator(width) }
    }

    /// `(first packed channel, channel count)` of each branch.
    pub fn groups(&self) -> Vec<(usize, usize)> {
        match self.heads {
            HeadMode::Triple => vec![(0, 3), (3, 3), (6, 3)],
            HeadMode::Single => vec![(0, PACKED_CHANNELS)],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.time_dim < 2 || self.time_dim % 2 != 0 || self.tag_dim == 0 || self.n_tags == 0 || self.cond_channels == 0 {
            return Err(Error::Argument(format!("invalid model configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    He,
    LeCun,
    Zero,
    Normal,
}

/// Named parameter tensors; conv weights are stored as `(out, in*k*k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Parameter indices of one branch/head pair.
#[derive(Debug, Clone)]
struct BranchIds {
    in_w: usize,
    in_b: usize,
    down_w: usize,
    down_b: usize,
    up_w: usize,
    up_b: usize,
    out_w: usize,
    out_b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    cond: (usize, usize),
    time1: (usize, usize),
    time2: (usize, usize),
    temb: [(usize, usize); 4],
    tag: usize,
    merge: (usize, usize),
    down2: (usize, usize),
    mid: (usize, usize),
    up: (usize, usize),
    fuse: (usize, usize),
    branches: Vec<BranchIds>,
}

struct Builder<'r, R: Rng> {
    store: ParamStore,
    rng: &'r mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        let std = match init {
            Init::He => (2.0 / cols as f64).sqrt(),
            Init::LeCun => (1.0 / cols as f64).sqrt(),
            Init::Normal => 1.0,
            Init::Zero => 0.0,
        };
        let data = if std == 0.0 {
            vec![0.0; rows * cols]
        } else {
            let d = Normal::new(0.0, std).expect("positive std");
            (0..rows * cols).map(|_| d.sample(self.rng)).collect()
        };
        self.store.names.push(name);
        self.store.tensors.push(Tensor::from_vec(rows, cols, 1, 1, data).expect("sized"));
        self.store.tensors.len() - 1
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, init: Init) -> (usize, usize) {
        let w = self.add(format!("{name}.w"), cout, cin * k * k, init);
        let b = self.add(format!("{name}.b"), 1, cout, Init::Zero);
        (w, b)
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize, init: Init) -> (usize, usize) {
        let w = self.add(format!("{name}.w"), dout, din, init);
        let b = self.add(format!("{name}.b"), 1, dout, Init::Zero);
        (w, b)
    }
}

const BRANCH_NAMES: [&str; 3] = ["albedo", "rm", "bump"];

fn build_layout<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> (ParamStore, Layout) {
    let c = cfg.width;
    let mut b = Builder { store: ParamStore { names: Vec::new(), tensors: Vec::new() }, rng };
    let cond = b.conv("cond", cfg.cond_channels, c, 3, Init::He);
    let time1 = b.linear("time1", cfg.time_dim, c, Init::He);
    let time2 = b.linear("time2", c, c, Init::LeCun);
    let temb = [
        b.linear("temb0", c, c, Init::LeCun),
        b.linear("temb1", c, c, Init::LeCun),
        b.linear("temb2", c, 2 * c, Init::LeCun),
        b.linear("temb3", c, c, Init::LeCun),
    ];
    let groups = cfg.groups();
    let mut branches = Vec::new();
    for (g, &(_, n)) in groups.iter().enumerate() {
        let name = if groups.len() == 1 { "all" } else { BRANCH_NAMES[g] };
        let (in_w, in_b) = b.conv(&format!("{name}.in"), n, c, 3, Init::He);
        let (down_w, down_b) = b.conv(&format!("{name}.down"), c, c, 3, Init::He);
        branches.push((in_w, in_b, down_w, down_b));
    }
    let tag = b.add("tag.table".into(), cfg.n_tags, cfg.tag_dim, Init::Normal);
    let merge = b.conv("merge", groups.len() * c, c, 3, Init::He);
    let down2 = b.conv("down2", c, 2 * c, 3, Init::He);
    let mid = b.conv("mid", 2 * c + cfg.tag_dim, 2 * c, 3, Init::He);
    let up = b.conv("up", 2 * c, c, 3, Init::He);
    let fuse = b.conv("fuse", 2 * c, c, 3, Init::He);
    let mut full = Vec::new();
    for (g, &(_, n)) in groups.iter().enumerate() {
        let name = if groups.len() == 1 { "all" } else { BRANCH_NAMES[g] };
        let (up_w, up_b) = b.conv(&format!("{name}.head.up"), 2 * c, c, 3, Init::He);
        let (out_w, out_b) = b.conv(&format!("{name}.head.out"), c, n, 3, Init::LeCun);
        let (in_w, in_b, down_w, down_b) = branches[g];
        full.push(BranchIds { in_w, in_b, down_w, down_b, up_w, up_b, out_w, out_b });
    }
    let layout = Layout { cond, time1, time2, temb, tag, merge, down2, mid, up, fuse, branches: full };
    (b.store, layout)
}

/// Sinusoidal embedding of integer timesteps, `(n, dim, 1, 1)`.
pub fn timestep_embedding(t: &[usize], dim: usize) -> Tensor {
    let half = dim / 2;
    let mut out = Tensor::zeros(t.len(), dim, 1, 1);
    for (n, &tv) in t.iter().enumerate() {
        let row = out.item_mut(n);
        for i in 0..half {
            let f = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            row[i] = (tv as f64 * f).sin();
            row[half + i] = (tv as f64 * f).cos();
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Denoiser {
    pub config: ModelConfig,
    pub params: ParamStore,
    layout: Layout,
}

/// Forward graph retained for the backward pass.
pub struct ForwardPass<'a> {
    graph: Graph<'a>,
    output: NodeId,
}

impl ForwardPass<'_> {
    pub fn output(&self) -> &Tensor {
        self.graph.value(self.output)
    }

    /// Parameter gradients given the gradient of the loss w.r.t. the output.
    pub fn backward(&self, grad_output: Tensor) -> Vec<Tensor> {
        self.graph.backward(self.output, grad_output)
    }
}

impl Denoiser {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (params, layout) = build_layout(&config, rng);
        Ok(Self { config, params, layout })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Names of the parameters that belong to a branch's output head.
    pub fn head_parameters(&self, branch: usize) -> Vec<usize> {
        let b = &self.layout.branches[branch];
        vec![b.up_w, b.up_b, b.out_w, b.out_b]
    }

    /// Indices of the final output convolution of every head.
    pub fn output_layer_parameters(&self) -> Vec<(usize, usize)> {
        self.layout.branches.iter().map(|b| (b.out_w, b.out_b)).collect()
    }

    /// Runs the network on latents `z` `(n, 9, h, w)` with conditioning
    /// `(n, cond_channels, h, w)`; `h` and `w` must be multiples of 4.
    pub fn forward(&self, z: &Tensor, cond: &Tensor, t: &[usize], tags: &[usize]) -> Result<ForwardPass<'_>> {
        let cfg = &self.config;
        if z.c != PACKED_CHANNELS {
            return Err(Error::Dimension { what: "latent channels", expected: (PACKED_CHANNELS, 1), found: (z.c, 1) });
        }
        ensure_cond_channels(cond, cfg.cond_channels)?;
        if (cond.n, cond.h, cond.w) != (z.n, z.h, z.w) {
            return Err(Error::Dimension { what: "conditioning resolution", expected: (z.w, z.h), found: (cond.w, cond.h) });
        }
        if z.h % 4 != 0 || z.w % 4 != 0 || z.h == 0 || z.w == 0 {
            return Err(Error::Dimension { what: "denoiser resolution (multiple of 4)", expected: (z.w.div_ceil(4) * 4, z.h.div_ceil(4) * 4), found: (z.w, z.h) });
        }
        if t.len() != z.n || tags.len() != z.n {
            return Err(Error::Dimension { what: "timesteps/tags per item", expected: (z.n, z.n), found: (t.len(), tags.len()) });
        }
        if let Some(bad) = tags.iter().find(|&&g| g >= cfg.n_tags) {
            return Err(Error::Argument(format!("tag id {bad} outside vocabulary of {}", cfg.n_tags)));
        }
        let l = &self.layout;
        let mut g = Graph::new(&self.params.tensors);
        let p = |g: &mut Graph, (w, b): (usize, usize)| (g.param(w), g.param(b));

        let temb_in = g.input(timestep_embedding(t, cfg.time_dim));
        let (w, b) = p(&mut g, l.time1);
        let e = g.linear(temb_in, w, b);
        let e = g.silu(e);
        let (w, b) = p(&mut g, l.time2);
        let e = g.linear(e, w, b);
        let e = g.silu(e);
        let mut temb = Vec::new();
        for &pair in &l.temb {
            let (w, b) = p(&mut g, pair);
            temb.push(g.linear(e, w, b));
        }

        let zi = g.input(z.clone());
        let ci = g.input(cond.clone());
        let (w, b) = p(&mut g, l.cond);
        let c0 = g.conv(ci, w, b, 3, 1);
        let c0 = g.silu(c0);

        let mut skips = Vec::new();
        let mut downs = Vec::new();
        for (br, &(start, n)) in l.branches.iter().zip(&cfg.groups()) {
            let zs = g.slice(zi, start, n);
            let (w, b) = (g.param(br.in_w), g.param(br.in_b));
            let h = g.conv(zs, w, b, 3, 1);
            let h = g.add(h, c0);
            let h = g.add_channel(h, temb[0]);
            let h = g.silu(h);
            skips.push(h);
            let (w, b) = (g.param(br.down_w), g.param(br.down_b));
            let d = g.conv(h, w, b, 3, 2);
            downs.push(g.silu(d));
        }
        let m = g.concat(&downs);
        let (w, b) = p(&mut g, l.merge);
        let m = g.conv(m, w, b, 3, 1);
        let m = g.add_channel(m, temb[1]);
        let m = g.silu(m);
        let (w, b) = p(&mut g, l.down2);
        let bt = g.conv(m, w, b, 3, 2);
        let bt = g.add_channel(bt, temb[2]);
        let bt = g.silu(bt);
        let table = g.param(l.tag);
        let tag = g.embed(table, tags);
        let (bh, bw) = (z.h / 4, z.w / 4);
        let tag = g.broadcast(tag, bh, bw);
        let bt = g.concat(&[bt, tag]);
        let (w, b) = p(&mut g, l.mid);
        let bt = g.conv(bt, w, b, 3, 1);
        let bt = g.silu(bt);
        let u = g.upsample2(bt);
        let (w, b) = p(&mut g, l.up);
        let u = g.conv(u, w, b, 3, 1);
        let u = g.add_channel(u, temb[3]);
        let u = g.silu(u);
        let f = g.concat(&[u, m]);
        let (w, b) = p(&mut g, l.fuse);
        let f = g.conv(f, w, b, 3, 1);
        let f = g.silu(f);
        let fu = g.upsample2(f);

        let mut outs = Vec::new();
        for (br, &h) in l.branches.iter().zip(&skips) {
            let x = g.concat(&[fu, h]);
            let (w, b) = (g.param(br.up_w), g.param(br.up_b));
            let x = g.conv(x, w, b, 3, 1);
            let x = g.silu(x);
            let (w, b) = (g.param(br.out_w), g.param(br.out_b));
            outs.push(g.conv(x, w, b, 3, 1));
        }
        let output = if outs.len() == 1 { outs[0] } else { g.concat(&outs) };
        Ok(ForwardPass { graph: g, output })
    }

    /// Forward pass returning only the prediction.
    pub fn predict(&self, z: &Tensor, cond: &Tensor, t: &[usize], tags: &[usize]) -> Result<Tensor> {
        Ok(self.forward(z, cond, t, tags)?.output().clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        write_checkpoint(self, &mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        read_checkpoint(&mut bytes.as_slice()).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TXMDNOIS";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

/// Header: magic, version, architecture; then per tensor: name length, name,
/// rank, dims and little-endian `f32` values.
pub fn write_checkpoint(m: &Denoiser, w: &mut impl Write) -> std::io::Result<()> {
    let c = &m.config;
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    for v in [c.width, c.time_dim, c.tag_dim, c.n_tags, c.cond_channels] {
        put_u32(w, v as u32)?;
    }
    put_u32(w, matches!(c.heads, HeadMode::Triple) as u32)?;
    put_u32(w, c.use_confidence as u32)?;
    put_u32(w, m.params.len() as u32)?;
    for (name, t) in m.params.names.iter().zip(&m.params.tensors) {
        put_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        put_u32(w, 2)?;
        put_u32(w, t.n as u32)?;
        put_u32(w, t.c as u32)?;
        for v in &t.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::io("<checkpoint>", e))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Denoiser> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::io("<checkpoint>", e))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a denoiser checkpoint (bad magic)".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut h = [0usize; 5];
    for v in &mut h {
        *v = get_u32(r)? as usize;
    }
    let heads = if get_u32(r)? == 1 { HeadMode::Triple } else { HeadMode::Single };
    let use_confidence = get_u32(r)? == 1;
    let config = ModelConfig { width: h[0], time_dim: h[1], tag_dim: h[2], n_tags: h[3], cond_channels: h[4], heads, use_confidence };
    config.validate()?;
    // any initialization works here: every tensor is overwritten below
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut model = Denoiser::new(config, &mut rng)?;
    let count = get_u32(r)? as usize;
    if count != model.params.len() {
        return Err(Error::Format(format!("checkpoint has {count} tensors, architecture needs {}", model.params.len())));
    }
    for i in 0..count {
        let len = get_u32(r)? as usize;
        if len > 256 {
            return Err(Error::Format(format!("tensor name length {len} too long")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|e| Error::io("<checkpoint>", e))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        if name != model.params.names[i] {
            return Err(Error::Format(format!("expected tensor '{}', found '{name}'", model.params.names[i])));
        }
        let rank = get_u32(r)?;
        if rank != 2 {
            return Err(Error::Format(format!("tensor '{name}' has rank {rank}, expected 2")));
        }
        let (rows, cols) = (get_u32(r)? as usize, get_u32(r)? as usize);
        let t = &mut model.params.tensors[i];
        if (rows, cols) != (t.n, t.c) {
            return Err(Error::Format(format!("tensor '{name}' is {rows}x{cols}, expected {}x{}", t.n, t.c)));
        }
        let mut raw = vec![0u8; rows * cols * 4];
        r.read_exact(&mut raw).map_err(|e| Error::io("<checkpoint>", e))?;
        for (d, chunk) in t.data.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        }
    }
    Ok(model)
}
