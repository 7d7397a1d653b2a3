//! Reverse-mode differentiation over the handful of operations the denoiser
//! needs. Convolutions lower to im2col plus a matrix product.

use super::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    Conv { x: NodeId, w: NodeId, b: NodeId, k: usize, stride: usize },
    Linear { x: NodeId, w: NodeId, b: NodeId },
    Silu(NodeId),
    Add(NodeId, NodeId),
    AddChannel { x: NodeId, v: NodeId },
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Upsample2(NodeId),
    Embed { table: NodeId, ids: Vec<usize> },
    Broadcast { v: NodeId },
}

struct Node {
    op: Op,
    value: Option<Tensor>,
}

/// Computation graph over a borrowed parameter list. Parameters are stored as
/// `(rows, cols, 1, 1)` tensors; conv weights are `(out, in*k*k)`.
pub struct Graph<'a> {
    params: &'a [Tensor],
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn conv_out_size(n: usize, k: usize, stride: usize) -> usize {
    let pad = k / 2;
    (n + 2 * pad - k) / stride + 1
}

/// Unfolds one batch item into a `(cin*k*k, ho*wo)` matrix.
fn im2col(x: &[f64], cin: usize, h: usize, w: usize, k: usize, stride: usize, cols: &mut [f64]) {
    let pad = (k / 2) as isize;
    let (ho, wo) = (conv_out_size(h, k, stride), conv_out_size(w, k, stride));
    let hw = ho * wo;
    for ci in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride) as isize + ky as isize - pad;
                    let d = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        d.fill(0.0);
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for (ox, v) in d.iter_mut().enumerate() {
                        let ix = (ox * stride) as isize + kx as isize - pad;
                        *v = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back into `dx`.
fn col2im(cols: &[f64], cin: usize, h: usize, w: usize, k: usize, stride: usize, dx: &mut [f64]) {
    let pad = (k / 2) as isize;
    let (ho, wo) = (conv_out_size(h, k, stride), conv_out_size(w, k, stride));
    let hw = ho * wo;
    for ci in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride) as isize + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ci * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * stride) as isize + kx as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            dx[base + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c = alpha * a * b + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: isize, csa: isize, b: &[f64], rsb: isize, csb: isize, beta: f64, c: &mut [f64], rsc: isize) {
    // SAFETY: callers pass slices whose extents match the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), rsc, 1);
    }
}

impl<'a> Graph<'a> {
    pub fn new(params: &'a [Tensor]) -> Self {
        Self { params, nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id].op {
            Op::Param(p) => &self.params[*p],
            _ => self.nodes[id].value.as_ref().expect("non-parameter nodes own a value"),
        }
    }

    fn push(&mut self, op: Op, value: Option<Tensor>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Input, Some(t))
    }

    pub fn param(&mut self, index: usize) -> NodeId {
        self.push(Op::Param(index), None)
    }

    /// Same-padded convolution with square kernel `k` (odd) and `stride`.
    pub fn conv(&mut self, x: NodeId, w: NodeId, b: NodeId, k: usize, stride: usize) -> NodeId {
        let xv = self.value(x);
        let wv = self.value(w);
        let (cout, ckk) = (wv.n, wv.c);
        assert_eq!(ckk, xv.c * k * k, "conv weight does not match input channels");
        let (ho, wo) = (conv_out_size(xv.h, k, stride), conv_out_size(xv.w, k, stride));
        let hw = ho * wo;
        let mut out = Tensor::zeros(xv.n, cout, ho, wo);
        let bias = &self.value(b).data;
        let mut cols = vec![0.0; if k == 1 && stride == 1 { 0 } else { ckk * hw }];
        for n in 0..xv.n {
            let xi = xv.item(n);
            let src: &[f64] = if cols.is_empty() {
                xi
            } else {
                im2col(xi, xv.c, xv.h, xv.w, k, stride, &mut cols);
                &cols
            };
            let o = out.item_mut(n);
            for (co, bv) in bias.iter().enumerate() {
                o[co * hw..(co + 1) * hw].fill(*bv);
            }
            gemm(cout, ckk, hw, &wv.data, ckk as isize, 1, src, hw as isize, 1, 1.0, o, hw as isize);
        }
        self.push(Op::Conv { x, w, b, k, stride }, Some(out))
    }

    /// `x` is `(n, in, 1, 1)`, `w` is `(out, in)`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xv = self.value(x);
        let wv = self.value(w);
        let (out_dim, in_dim) = (wv.n, wv.c);
        assert_eq!(xv.item_len(), in_dim, "linear weight does not match input");
        let bias = &self.value(b).data;
        let mut out = Tensor::zeros(xv.n, out_dim, 1, 1);
        for n in 0..xv.n {
            out.item_mut(n).copy_from_slice(bias);
        }
        gemm(xv.n, in_dim, out_dim, &xv.data, in_dim as isize, 1, &wv.data, 1, in_dim as isize, 1.0, &mut out.data, out_dim as isize);
        self.push(Op::Linear { x, w, b }, Some(out))
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let mut out = self.value(x).clone();
        for v in &mut out.data {
            *v *= sigmoid(*v);
        }
        self.push(Op::Silu(x), Some(out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(Op::Add(a, b), Some(out))
    }

    /// Adds a per-item, per-channel vector `(n, c, 1, 1)` to every pixel.
    pub fn add_channel(&mut self, x: NodeId, v: NodeId) -> NodeId {
        let mut out = self.value(x).clone();
        let vv = self.value(v);
        assert_eq!((vv.n, vv.c), (out.n, out.c), "channel vector shape");
        let hw = out.plane();
        for (i, chunk) in out.data.chunks_mut(hw).enumerate() {
            let a = vv.data[i];
            for o in chunk {
                *o += a;
            }
        }
        self.push(Op::AddChannel { x, v }, Some(out))
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        let first = self.value(xs[0]);
        let (n, h, w) = (first.n, first.h, first.w);
        let c: usize = xs.iter().map(|&x| self.value(x).c).sum();
        let mut out = Tensor::zeros(n, c, h, w);
        for b in 0..n {
            let mut off = 0;
            let o = out.item_mut(b);
            for &x in xs {
                let v = self.value(x);
                assert_eq!((v.n, v.h, v.w), (n, h, w), "concat shapes");
                let it = v.item(b);
                o[off..off + it.len()].copy_from_slice(it);
                off += it.len();
            }
        }
        self.push(Op::Concat(xs.to_vec()), Some(out))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(x);
        let hw = v.plane();
        let mut out = Tensor::zeros(v.n, len, v.h, v.w);
        for b in 0..v.n {
            let src = &v.item(b)[start * hw..(start + len) * hw];
            out.item_mut(b).copy_from_slice(src);
        }
        self.push(Op::Slice { x, start }, Some(out))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let (h2, w2) = (v.h * 2, v.w * 2);
        let mut out = Tensor::zeros(v.n, v.c, h2, w2);
        for p in 0..v.n * v.c {
            let src = &v.data[p * v.h * v.w..(p + 1) * v.h * v.w];
            let dst = &mut out.data[p * h2 * w2..(p + 1) * h2 * w2];
            for y in 0..h2 {
                for x in 0..w2 {
                    dst[y * w2 + x] = src[(y / 2) * v.w + x / 2];
                }
            }
        }
        self.push(Op::Upsample2(x), Some(out))
    }

    /// Rows of `table` (`(vocab, dim)`) as an `(n, dim, 1, 1)` tensor.
    pub fn embed(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let d = t.c;
        let mut out = Tensor::zeros(ids.len(), d, 1, 1);
        for (b, &id) in ids.iter().enumerate() {
            out.item_mut(b).copy_from_slice(&t.data[id * d..(id + 1) * d]);
        }
        self.push(Op::Embed { table, ids: ids.to_vec() }, Some(out))
    }

    /// Spreads an `(n, c, 1, 1)` vector over an `h x w` plane.
    pub fn broadcast(&mut self, v: NodeId, h: usize, w: usize) -> NodeId {
        let vv = self.value(v);
        let mut out = Tensor::zeros(vv.n, vv.c, h, w);
        for (i, chunk) in out.data.chunks_mut(h * w).enumerate() {
            chunk.fill(vv.data[i]);
        }
        self.push(Op::Broadcast { v }, Some(out))
    }

    /// Propagates `seed` (the gradient of the loss with respect to node
    /// `output`) back through the graph; returns one gradient per parameter.
    pub fn backward(&self, output: NodeId, seed: Tensor) -> Vec<Tensor> {
        let mut pgrads: Vec<Tensor> = self.params.iter().map(Tensor::zeros_like).collect();
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output] = Some(seed);
        for id in (0..=output).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Param(p) => pgrads[*p].add_assign(&g),
                op => self.backward_op(op, id, &g, &mut grads),
            }
        }
        pgrads
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor>], id: NodeId) -> &'g mut Tensor {
        let shape = self.value(id);
        grads[id].get_or_insert_with(|| shape.zeros_like())
    }

    fn backward_op(&self, op: &Op, id: NodeId, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Input | Op::Param(_) => {}
            Op::Conv { x, w, b, k, stride } => {
                let (k, stride) = (*k, *stride);
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (cout, ckk) = (wv.n, wv.c);
                let hw = g.plane();
                {
                    let db = self.acc(grads, *b);
                    for n in 0..g.n {
                        let gi = g.item(n);
                        for co in 0..cout {
                            db.data[co] += gi[co * hw..(co + 1) * hw].iter().sum::<f64>();
                        }
                    }
                }
                let direct = k == 1 && stride == 1;
                let mut cols = vec![0.0; if direct { 0 } else { ckk * hw }];
                let mut dcols = vec![0.0; ckk * hw];
                for n in 0..g.n {
                    let gi = g.item(n);
                    let xi = xv.item(n);
                    let src: &[f64] = if direct {
                        xi
                    } else {
                        im2col(xi, xv.c, xv.h, xv.w, k, stride, &mut cols);
                        &cols
                    };
                    // dW += dOut * cols^T
                    let dw = self.acc(grads, *w);
                    gemm(cout, hw, ckk, gi, hw as isize, 1, src, 1, hw as isize, 1.0, &mut dw.data, ckk as isize);
                    // dcols = W^T * dOut
                    gemm(ckk, cout, hw, &wv.data, 1, ckk as isize, gi, hw as isize, 1, 0.0, &mut dcols, hw as isize);
                    let dx = self.acc(grads, *x).item_mut(n);
                    if direct {
                        for (d, s) in dx.iter_mut().zip(&dcols) {
                            *d += s;
                        }
                    } else {
                        col2im(&dcols, xv.c, xv.h, xv.w, k, stride, dx);
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (out_dim, in_dim) = (wv.n, wv.c);
                {
                    let db = self.acc(grads, *b);
                    for n in 0..g.n {
                        for (d, s) in db.data.iter_mut().zip(g.item(n)) {
                            *d += s;
                        }
                    }
                }
                let dw = self.acc(grads, *w);
                // dW (out x in) += g^T (out x n) * x (n x in)
                gemm(out_dim, g.n, in_dim, &g.data, 1, out_dim as isize, &xv.data, in_dim as isize, 1, 1.0, &mut dw.data, in_dim as isize);
                let dx = self.acc(grads, *x);
                // dx (n x in) += g (n x out) * W (out x in)
                gemm(g.n, out_dim, in_dim, &g.data, out_dim as isize, 1, &wv.data, in_dim as isize, 1, 1.0, &mut dx.data, in_dim as isize);
            }
            Op::Silu(x) => {
                let xv = self.value(*x);
                let dx = self.acc(grads, *x);
                for ((d, &gv), &xi) in dx.data.iter_mut().zip(&g.data).zip(&xv.data) {
                    let s = sigmoid(xi);
                    *d += gv * s * (1.0 + xi * (1.0 - s));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a).add_assign(g);
                self.acc(grads, *b).add_assign(g);
            }
            Op::AddChannel { x, v } => {
                self.acc(grads, *x).add_assign(g);
                let hw = g.plane();
                let dv = self.acc(grads, *v);
                for (i, chunk) in g.data.chunks(hw).enumerate() {
                    dv.data[i] += chunk.iter().sum::<f64>();
                }
            }
            Op::Concat(xs) => {
                for b in 0..g.n {
                    let gi = g.item(b);
                    let mut off = 0;
                    for &x in xs {
                        let dx = self.acc(grads, x).item_mut(b);
                        for (d, s) in dx.iter_mut().zip(&gi[off..]) {
                            *d += s;
                        }
                        off += dx.len();
                    }
                }
            }
            Op::Slice { x, start } => {
                let hw = g.plane();
                let dx = self.acc(grads, *x);
                for b in 0..g.n {
                    let dst = &mut dx.item_mut(b)[start * hw..];
                    for (d, s) in dst.iter_mut().zip(g.item(b)) {
                        *d += s;
                    }
                }
            }
            Op::Upsample2(x) => {
                let dx = self.acc(grads, *x);
                let (h, w) = (dx.h, dx.w);
                let w2 = w * 2;
                for p in 0..dx.n * dx.c {
                    let src = &g.data[p * 4 * h * w..(p + 1) * 4 * h * w];
                    let dst = &mut dx.data[p * h * w..(p + 1) * h * w];
                    for (y2, row) in src.chunks(w2).enumerate() {
                        for (x2, s) in row.iter().enumerate() {
                            dst[(y2 / 2) * w + x2 / 2] += s;
                        }
                    }
                }
            }
            Op::Embed { table, ids } => {
                let dt = self.acc(grads, *table);
                let d = dt.c;
                for (b, &i) in ids.iter().enumerate() {
                    for (dst, s) in dt.data[i * d..(i + 1) * d].iter_mut().zip(g.item(b)) {
                        *dst += s;
                    }
                }
            }
            Op::Broadcast { v } => {
                let hw = g.plane();
                let dv = self.acc(grads, *v);
                for (i, chunk) in g.data.chunks(hw).enumerate() {
                    dv.data[i] += chunk.iter().sum::<f64>();
                }
            }
        }
        let _ = id;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(n: usize, c: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor {
        let data = (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(n, c, h, w, data).unwrap()
    }

    /// Builds a small graph touching every op and returns sum(out * probe).
    fn build(params: &[Tensor], x: &Tensor, probe: &Tensor) -> (f64, Vec<Tensor>) {
        let mut g = Graph::new(params);
        let xi = g.input(x.clone());
        let (w1, b1, w2, b2, lw, lb, emb) = (g.param(0), g.param(1), g.param(2), g.param(3), g.param(4), g.param(5), g.param(6));
        let h = g.conv(xi, w1, b1, 3, 2);
        let h = g.silu(h);
        let e = g.embed(emb, &[1, 0]);
        let v = g.linear(e, lw, lb);
        let v = g.silu(v);
        let h = g.add_channel(h, v);
        let s = g.slice(h, 1, 2);
        let bc = g.broadcast(e, 2, 2);
        let c = g.concat(&[h, s, bc]);
        let u = g.upsample2(c);
        let u2 = g.add(u, u);
        let out = g.conv(u2, w2, b2, 1, 1);
        let val = g.value(out).data.iter().zip(&probe.data).map(|(a, b)| a * b).sum();
        let grads = g.backward(out, probe.clone());
        (val, grads)
    }

    #[test]
    fn graph_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = vec![
            rand_tensor(4, 2 * 9, 1, 1, &mut rng),
            rand_tensor(1, 4, 1, 1, &mut rng),
            rand_tensor(3, 4 + 2 + 5, 1, 1, &mut rng),
            rand_tensor(1, 3, 1, 1, &mut rng),
            rand_tensor(4, 5, 1, 1, &mut rng),
            rand_tensor(1, 4, 1, 1, &mut rng),
            rand_tensor(3, 5, 1, 1, &mut rng),
        ];
        let x = rand_tensor(2, 2, 4, 4, &mut rng);
        let probe = rand_tensor(2, 3, 4, 4, &mut rng);
        let (_, grads) = build(&params, &x, &probe);
        let eps = 1e-6;
        for p in 0..params.len() {
            for i in 0..params[p].len() {
                let orig = params[p].data[i];
                params[p].data[i] = orig + eps;
                let (fp, _) = build(&params, &x, &probe);
                params[p].data[i] = orig - eps;
                let (fm, _) = build(&params, &x, &probe);
                params[p].data[i] = orig;
                let num = (fp - fm) / (2.0 * eps);
                let ana = grads[p].data[i];
                assert!((num - ana).abs() <= 1e-6 * (1.0 + num.abs()), "param {p}[{i}]: {ana} vs {num}");
            }
        }
    }

    #[test]
    fn strided_conv_shapes() {
        assert_eq!(conv_out_size(64, 3, 2), 32);
        assert_eq!(conv_out_size(64, 3, 1), 64);
        assert_eq!(conv_out_size(7, 3, 2), 4);
        assert_eq!(conv_out_size(8, 1, 1), 8);
    }
}
