use crate::dft::{frame_count, hann_window, DftBasis};
use crate::error::{Error, Result};
use crate::tensor::{strides, Tensor};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone, Copy)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

enum Op {
    Leaf,
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    Conv1d {
        x: usize,
        w: usize,
        b: Option<usize>,
        groups: usize,
    },
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GroupNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        groups: usize,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Silu {
        x: usize,
    },
    Prelu {
        x: usize,
        slope: usize,
        axis: usize,
    },
    Softmax {
        x: usize,
    },
    Binary {
        a: usize,
        b: usize,
        kind: BinKind,
    },
    AffineConst {
        x: usize,
        mul: f64,
    },
    MatMul {
        a: usize,
        b: usize,
    },
    Permute {
        x: usize,
        perm: Vec<usize>,
    },
    Reshape {
        x: usize,
    },
    Concat {
        xs: Vec<usize>,
        axis: usize,
    },
    Slice {
        x: usize,
        axis: usize,
        start: usize,
    },
    Sum {
        x: usize,
    },
    Abs {
        x: usize,
    },
    Sqrt {
        x: usize,
    },
    Ln {
        x: usize,
    },
    Hypot {
        a: usize,
        b: usize,
    },
    Stft {
        x: usize,
        frame_len: usize,
        hop: usize,
    },
    Istft {
        x: usize,
        frame_len: usize,
        hop: usize,
        target_len: usize,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Recording of a forward computation; replaying the recorded backward rules
/// in reverse order yields chain-rule gradients.
///
/// Parent nodes always precede children, so a single reverse sweep suffices.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> TensorId {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        TensorId(self.nodes.len() - 1)
    }

    fn req(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> TensorId {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> TensorId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Gradient buffer of a node, if populated by `backward`.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    pub fn grad_tensor(&self, id: TensorId) -> Option<Tensor> {
        self.grads[id.0]
            .as_ref()
            .map(|g| Tensor::new(self.nodes[id.0].value.shape().to_vec(), g.clone()).unwrap())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    // ---- primitive operations -------------------------------------------

    /// y[..., j] = sum_i x[..., i] * w[j, i] + b[j]
    pub fn linear(&mut self, x: TensorId, w: TensorId, b: Option<TensorId>) -> Result<TensorId> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if ws.len() != 2 {
            return Err(Error::Shape(format!("linear weight must be 2-D, got {:?}", ws)));
        }
        let (d_out, d_in) = (ws[0], ws[1]);
        if *xs.last().unwrap() != d_in {
            return Err(Error::Shape(format!(
                "linear: input shape {:?} incompatible with weight {:?}",
                xs, ws
            )));
        }
        if let Some(b) = b {
            let bs = self.shape(b);
            if bs != [d_out] {
                return Err(Error::Shape(format!(
                    "linear: bias shape {:?} does not match output dim {}",
                    bs, d_out
                )));
            }
        }
        let rows = self.value(x).numel() / d_in;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; rows * d_out];
        for r in 0..rows {
            let xr = &xd[r * d_in..(r + 1) * d_in];
            let yr = &mut out[r * d_out..(r + 1) * d_out];
            for j in 0..d_out {
                let wj = &wd[j * d_in..(j + 1) * d_in];
                let mut acc = bd.map_or(0.0, |bd| bd[j]);
                for i in 0..d_in {
                    acc += xr[i] * wj[i];
                }
                yr[j] = acc;
            }
        }
        let mut ys = xs;
        *ys.last_mut().unwrap() = d_out;
        let rg = self.req(x) || self.req(w) || b.map_or(false, |b| self.req(b));
        Ok(self.push(
            Tensor::new(ys, out)?,
            rg,
            Op::Linear {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
            },
        ))
    }

    /// Grouped 1-D cross-correlation, stride 1, same zero padding.
    /// x: [B, C_in, N], w: [C_out, C_in/G, K] with K odd.
    pub fn conv1d(
        &mut self,
        x: TensorId,
        w: TensorId,
        b: Option<TensorId>,
        groups: usize,
    ) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 {
            return Err(Error::Shape(format!(
                "conv1d: expected x [B, C_in, N] and w [C_out, C_in/G, K], got {:?} and {:?}",
                xs, ws
            )));
        }
        let (batch, c_in, n) = (xs[0], xs[1], xs[2]);
        let (c_out, c_g, k) = (ws[0], ws[1], ws[2]);
        if c_in % groups != 0 || c_out % groups != 0 {
            return Err(Error::Config(format!(
                "conv1d: channels ({} in, {} out) not divisible by groups {}",
                c_in, c_out, groups
            )));
        }
        if c_g != c_in / groups {
            return Err(Error::Shape(format!(
                "conv1d: weight {:?} inconsistent with C_in={} groups={}",
                ws, c_in, groups
            )));
        }
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv1d: kernel size {} must be odd", k)));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(Error::Shape(format!(
                    "conv1d: bias shape {:?} does not match C_out={}",
                    self.shape(b),
                    c_out
                )));
            }
        }
        let pad = (k - 1) / 2;
        let og = c_out / groups;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; batch * c_out * n];
        for bi in 0..batch {
            for co in 0..c_out {
                let g = co / og;
                let base_y = (bi * c_out + co) * n;
                let bias = bd.map_or(0.0, |bd| bd[co]);
                for t in 0..n {
                    let mut acc = bias;
                    for ci in 0..c_g {
                        let xc = &xd[(bi * c_in + g * c_g + ci) * n..];
                        let wc = &wd[(co * c_g + ci) * k..(co * c_g + ci + 1) * k];
                        for kk in 0..k {
                            let src = t + kk;
                            if src >= pad && src - pad < n {
                                acc += xc[src - pad] * wc[kk];
                            }
                        }
                    }
                    out[base_y + t] = acc;
                }
            }
        }
        let rg = self.req(x) || self.req(w) || b.map_or(false, |b| self.req(b));
        Ok(self.push(
            Tensor::new(vec![batch, c_out, n], out)?,
            rg,
            Op::Conv1d {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
                groups,
            },
        ))
    }

    /// Layer normalization over the last axis. gamma/beta length equal that axis.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().unwrap();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::Shape(format!(
                "layer_norm: gamma {:?} / beta {:?} must both have shape [{}]",
                self.shape(gamma),
                self.shape(beta),
                d
            )));
        }
        let rows = self.value(x).numel() / d;
        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut out = vec![0.0; rows * d];
        let mut means = vec![0.0; rows];
        let mut inv_stds = vec![0.0; rows];
        for r in 0..rows {
            let xr = &xd[r * d..(r + 1) * d];
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            means[r] = mean;
            inv_stds[r] = inv;
            let yr = &mut out[r * d..(r + 1) * d];
            for i in 0..d {
                yr[i] = gd[i] * (xr[i] - mean) * inv + bd[i];
            }
        }
        let rg = self.req(x) || self.req(gamma) || self.req(beta);
        Ok(self.push(
            Tensor::new(xs, out)?,
            rg,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                mean: means,
                inv_std: inv_stds,
            },
        ))
    }

    /// Group normalization. x: [B, C, ...]; statistics per (batch, group) over
    /// C/G channels and all trailing axes; gamma/beta per channel.
    pub fn group_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        groups: usize,
        eps: f64,
    ) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(Error::Shape(format!(
                "group_norm: expected at least 2-D input, got {:?}",
                xs
            )));
        }
        let (batch, c) = (xs[0], xs[1]);
        if c % groups != 0 {
            return Err(Error::Config(format!(
                "group_norm: {} channels not divisible by {} groups",
                c, groups
            )));
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::Shape(format!(
                "group_norm: gamma/beta must have shape [{}]",
                c
            )));
        }
        let rest: usize = xs[2..].iter().product();
        let cg = c / groups;
        let scope = cg * rest;
        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut out = vec![0.0; xd.len()];
        let mut means = vec![0.0; batch * groups];
        let mut inv_stds = vec![0.0; batch * groups];
        for bi in 0..batch {
            for g in 0..groups {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for ci in 0..cg {
                    let base = (bi * c + g * cg + ci) * rest;
                    for r in 0..rest {
                        let v = xd[base + r];
                        sum += v;
                        sq += v * v;
                    }
                }
                let mean = sum / scope as f64;
                let var = sq / scope as f64 - mean * mean;
                let inv = 1.0 / (var.max(0.0) + eps).sqrt();
                means[bi * groups + g] = mean;
                inv_stds[bi * groups + g] = inv;
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    let base = (bi * c + ch) * rest;
                    for r in 0..rest {
                        out[base + r] = gd[ch] * (xd[base + r] - mean) * inv + bd[ch];
                    }
                }
            }
        }
        let rg = self.req(x) || self.req(gamma) || self.req(beta);
        Ok(self.push(
            Tensor::new(xs, out)?,
            rg,
            Op::GroupNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                groups,
                mean: means,
                inv_std: inv_stds,
            },
        ))
    }

    /// silu(x) = x * sigmoid(x)
    pub fn silu(&mut self, x: TensorId) -> TensorId {
        let xd = self.value(x).data();
        let out: Vec<f64> = xd.iter().map(|&v| v * sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.req(x);
        self.push(Tensor::new(shape, out).unwrap(), rg, Op::Silu { x: x.0 })
    }

    /// PReLU with one learnable slope per element of `axis`.
    pub fn prelu(&mut self, x: TensorId, slope: TensorId, axis: usize) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(Error::Shape(format!(
                "prelu: axis {} out of range for shape {:?}",
                axis, xs
            )));
        }
        let s = xs[axis];
        if self.shape(slope) != [s] {
            return Err(Error::Shape(format!(
                "prelu: slope shape {:?} must be [{}]",
                self.shape(slope),
                s
            )));
        }
        let stride = strides(&xs)[axis];
        let xd = self.value(x).data();
        let sd = self.value(slope).data();
        let mut out = vec![0.0; xd.len()];
        for (i, &v) in xd.iter().enumerate() {
            let ch = (i / stride) % s;
            out[i] = if v >= 0.0 { v } else { sd[ch] * v };
        }
        let rg = self.req(x) || self.req(slope);
        Ok(self.push(
            Tensor::new(xs, out)?,
            rg,
            Op::Prelu {
                x: x.0,
                slope: slope.0,
                axis,
            },
        ))
    }

    /// Softmax along the last axis, computed with max subtraction.
    pub fn softmax(&mut self, x: TensorId) -> TensorId {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().unwrap();
        let rows = self.value(x).numel() / d;
        let xd = self.value(x).data();
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let xr = &xd[r * d..(r + 1) * d];
            let max = xr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let yr = &mut out[r * d..(r + 1) * d];
            let mut sum = 0.0;
            for i in 0..d {
                let e = (xr[i] - max).exp();
                yr[i] = e;
                sum += e;
            }
            for v in yr.iter_mut() {
                *v /= sum;
            }
        }
        let rg = self.req(x);
        self.push(Tensor::new(xs, out).unwrap(), rg, Op::Softmax { x: x.0 })
    }

    fn binary(&mut self, a: TensorId, b: TensorId, kind: BinKind) -> Result<TensorId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let (na, nb) = (self.value(a).numel(), self.value(b).numel());
        if na != nb && na != 1 && nb != 1 {
            return Err(Error::Shape(format!(
                "elementwise {:?}: shapes {:?} and {:?} differ and neither is scalar",
                kind, sa, sb
            )));
        }
        let n = na.max(nb);
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let av = ad[if na == 1 { 0 } else { i }];
            let bv = bd[if nb == 1 { 0 } else { i }];
            out[i] = match kind {
                BinKind::Add => av + bv,
                BinKind::Sub => av - bv,
                BinKind::Mul => av * bv,
                BinKind::Div => av / bv,
            };
        }
        let shape = if na >= nb { sa } else { sb };
        let rg = self.req(a) || self.req(b);
        Ok(self.push(
            Tensor::new(shape, out)?,
            rg,
            Op::Binary {
                a: a.0,
                b: b.0,
                kind,
            },
        ))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinKind::Add)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinKind::Sub)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinKind::Mul)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinKind::Div)
    }

    /// y = mul * x + add (constants, not on the tape)
    pub fn affine_const(&mut self, x: TensorId, mul: f64, add: f64) -> TensorId {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| mul * v + add).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.req(x);
        self.push(
            Tensor::new(shape, out).unwrap(),
            rg,
            Op::AffineConst { x: x.0, mul },
        )
    }

    pub fn scale(&mut self, x: TensorId, c: f64) -> TensorId {
        self.affine_const(x, c, 0.0)
    }

    pub fn add_const(&mut self, x: TensorId, c: f64) -> TensorId {
        self.affine_const(x, 1.0, c)
    }

    /// a [m, k] x b [k, n] -> [m, n]
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape(format!(
                "matmul: incompatible shapes {:?} x {:?}",
                sa, sb
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let av = ad[i * k + kk];
                if av == 0.0 {
                    continue;
                }
                let br = &bd[kk * n..(kk + 1) * n];
                let or = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    or[j] += av * br[j];
                }
            }
        }
        let rg = self.req(a) || self.req(b);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            rg,
            Op::MatMul { a: a.0, b: b.0 },
        ))
    }

    /// Materializing axis permutation: out dim d is input dim perm[d].
    pub fn permute(&mut self, x: TensorId, perm: &[usize]) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        if !is_permutation(perm, xs.len()) {
            return Err(Error::Shape(format!(
                "permute: {:?} is not a permutation of 0..{}",
                perm,
                xs.len()
            )));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&d| xs[d]).collect();
        let xd = self.value(x).data();
        let mut out = vec![0.0; xd.len()];
        permute_copy(xd, &xs, perm, &mut out, false);
        let rg = self.req(x);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            rg,
            Op::Permute {
                x: x.0,
                perm: perm.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, x: TensorId, shape: &[usize]) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(Error::Shape(format!(
                "reshape: cannot view {:?} as {:?}",
                self.shape(x),
                shape
            )));
        }
        let data = self.value(x).data().to_vec();
        let rg = self.req(x);
        Ok(self.push(
            Tensor::new(shape.to_vec(), data)?,
            rg,
            Op::Reshape { x: x.0 },
        ))
    }

    pub fn concat(&mut self, xs: &[TensorId], axis: usize) -> Result<TensorId> {
        if xs.is_empty() {
            return Err(Error::Contract("concat: empty input list".into()));
        }
        let first = self.shape(xs[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::Shape(format!(
                "concat: axis {} out of range for {:?}",
                axis, first
            )));
        }
        let mut axis_total = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(Error::Shape(format!(
                    "concat: shape {:?} incompatible with {:?} along axis {}",
                    s, first, axis
                )));
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * axis_total * inner];
        let mut offset = 0;
        for &x in xs {
            let len = self.shape(x)[axis];
            let xd = self.value(x).data();
            for o in 0..outer {
                let src = &xd[o * len * inner..(o + 1) * len * inner];
                let dst_base = (o * axis_total + offset) * inner;
                out[dst_base..dst_base + len * inner].copy_from_slice(src);
            }
            offset += len;
        }
        let rg = xs.iter().any(|&x| self.req(x));
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            rg,
            Op::Concat {
                xs: xs.iter().map(|x| x.0).collect(),
                axis,
            },
        ))
    }

    pub fn slice(&mut self, x: TensorId, axis: usize, start: usize, len: usize) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() || start + len > xs[axis] || len == 0 {
            return Err(Error::Shape(format!(
                "slice: range {}..{} on axis {} invalid for {:?}",
                start,
                start + len,
                axis,
                xs
            )));
        }
        let outer: usize = xs[..axis].iter().product();
        let inner: usize = xs[axis + 1..].iter().product();
        let xd = self.value(x).data();
        let mut out = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src = (o * xs[axis] + start) * inner;
            out[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&xd[src..src + len * inner]);
        }
        let mut out_shape = xs;
        out_shape[axis] = len;
        let rg = self.req(x);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            rg,
            Op::Slice {
                x: x.0,
                axis,
                start,
            },
        ))
    }

    /// Sum of all elements -> scalar.
    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.req(x);
        self.push(Tensor::scalar(s), rg, Op::Sum { x: x.0 })
    }

    pub fn mean(&mut self, x: TensorId) -> TensorId {
        let n = self.value(x).numel();
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn abs(&mut self, x: TensorId) -> TensorId {
        let out: Vec<f64> = self.value(x).data().iter().map(|v| v.abs()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.req(x);
        self.push(Tensor::new(shape, out).unwrap(), rg, Op::Abs { x: x.0 })
    }

    pub fn sqrt(&mut self, x: TensorId) -> TensorId {
        let out: Vec<f64> = self.value(x).data().iter().map(|v| v.sqrt()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.req(x);
        self.push(Tensor::new(shape, out).unwrap(), rg, Op::Sqrt { x: x.0 })
    }

    pub fn ln(&mut self, x: TensorId) -> TensorId {
        let out: Vec<f64> = self.value(x).data().iter().map(|v| v.ln()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.req(x);
        self.push(Tensor::new(shape, out).unwrap(), rg, Op::Ln { x: x.0 })
    }

    /// Elementwise sqrt(a^2 + b^2); subgradient 0 where both are 0.
    pub fn hypot(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "hypot: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let out: Vec<f64> = ad.iter().zip(bd).map(|(x, y)| x.hypot(*y)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.req(a) || self.req(b);
        Ok(self.push(
            Tensor::new(shape, out)?,
            rg,
            Op::Hypot { a: a.0, b: b.0 },
        ))
    }

    pub fn dot(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    /// STFT of a 1-D signal with a periodic Hann window, no center padding.
    /// Output [2, F, T]: channel 0 real, channel 1 imaginary.
    pub fn stft(&mut self, x: TensorId, frame_len: usize, hop: usize) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 1 {
            return Err(Error::Shape(format!("stft: expected 1-D signal, got {:?}", xs)));
        }
        let n = xs[0];
        if n < frame_len {
            return Err(Error::Contract(format!(
                "stft: signal length {} shorter than frame length {}",
                n, frame_len
            )));
        }
        let basis = DftBasis::new(frame_len);
        let window = hann_window(frame_len);
        let frames = frame_count(n, frame_len, hop);
        let bins = basis.bins;
        let xd = self.value(x).data();
        let mut out = vec![0.0; 2 * bins * frames];
        let mut buf = vec![0.0; frame_len];
        let mut re = vec![0.0; bins];
        let mut im = vec![0.0; bins];
        for t in 0..frames {
            let start = t * hop;
            for i in 0..frame_len {
                buf[i] = xd[start + i] * window[i];
            }
            basis.forward(&buf, &mut re, &mut im);
            for f in 0..bins {
                out[f * frames + t] = re[f];
                out[(bins + f) * frames + t] = im[f];
            }
        }
        let rg = self.req(x);
        Ok(self.push(
            Tensor::new(vec![2, bins, frames], out)?,
            rg,
            Op::Stft {
                x: x.0,
                frame_len,
                hop,
            },
        ))
    }

    /// Weighted overlap-add inverse STFT with squared-window normalization.
    /// x: [2, F, T] -> [target_len].
    pub fn istft(
        &mut self,
        x: TensorId,
        frame_len: usize,
        hop: usize,
        target_len: usize,
    ) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        let bins = frame_len / 2 + 1;
        if xs.len() != 3 || xs[0] != 2 || xs[1] != bins {
            return Err(Error::Shape(format!(
                "istft: expected [2, {}, T], got {:?}",
                bins, xs
            )));
        }
        let frames = xs[2];
        let basis = DftBasis::new(frame_len);
        let window = hann_window(frame_len);
        let covered = (frames - 1) * hop + frame_len;
        let xd = self.value(x).data();
        let mut num = vec![0.0; covered];
        let mut denom = vec![0.0; covered];
        let mut re = vec![0.0; bins];
        let mut im = vec![0.0; bins];
        let mut frame = vec![0.0; frame_len];
        for t in 0..frames {
            for f in 0..bins {
                re[f] = xd[f * frames + t];
                im[f] = xd[(bins + f) * frames + t];
            }
            basis.inverse(&re, &im, &mut frame);
            let start = t * hop;
            for i in 0..frame_len {
                num[start + i] += window[i] * frame[i];
                denom[start + i] += window[i] * window[i];
            }
        }
        let mut out = vec![0.0; target_len];
        for m in 0..target_len.min(covered) {
            if denom[m] > DENOM_EPS {
                out[m] = num[m] / denom[m];
            }
        }
        let rg = self.req(x);
        Ok(self.push(
            Tensor::new(vec![target_len], out)?,
            rg,
            Op::Istft {
                x: x.0,
                frame_len,
                hop,
                target_len,
            },
        ))
    }

    // ---- backward -------------------------------------------------------

    /// Populates gradients of every reachable `requires_grad` node with
    /// d(loss)/d(node). Repeated calls accumulate.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        // mark nodes reachable from the loss (downward through parents)
        let n = loss.0 + 1;
        let mut reachable = vec![false; n];
        reachable[loss.0] = true;
        for idx in (0..n).rev() {
            if !reachable[idx] || !self.nodes[idx].requires_grad {
                continue;
            }
            for p in op_parents(&self.nodes[idx].op) {
                reachable[p] = true;
            }
        }
        for idx in 0..n {
            if reachable[idx] && self.nodes[idx].requires_grad && self.grads[idx].is_none() {
                self.grads[idx] = Some(vec![0.0; self.nodes[idx].value.numel()]);
            }
        }
        // seed: accumulate into a scratch buffer distinct from the persistent
        // grad so earlier accumulated grads are preserved and summed into.
        let mut flow: Vec<Option<Vec<f64>>> = vec![None; n];
        flow[loss.0] = Some(vec![1.0]);

        let Tape { nodes, grads } = self;
        let nodes: &[Node] = nodes;
        for idx in (0..n).rev() {
            if !nodes[idx].requires_grad {
                continue;
            }
            let Some(gout) = flow[idx].take() else { continue };
            // persist into the node's gradient
            if let Some(g) = grads[idx].as_mut() {
                for (a, b) in g.iter_mut().zip(&gout) {
                    *a += b;
                }
            }
            backprop_node(nodes, idx, &gout, &mut flow);
        }
        Ok(())
    }
}

const DENOM_EPS: f64 = 1e-12;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Copies `src` (shape `src_shape`) into `dst` permuted by `perm`; with
/// `accumulate` the mapping is reversed and values are added (used for the
/// backward pass).
fn permute_copy(src: &[f64], src_shape: &[usize], perm: &[usize], dst: &mut [f64], accumulate: bool) {
    let ndim = src_shape.len();
    let src_strides = strides(src_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&d| src_shape[d]).collect();
    let mut idx = vec![0usize; ndim];
    let total = src.len();
    for out_off in 0..total {
        let mut src_off = 0;
        for d in 0..ndim {
            src_off += idx[d] * src_strides[perm[d]];
        }
        if accumulate {
            // here dst plays the role of the source gradient layout
            dst[src_off] += src[out_off];
        } else {
            dst[out_off] = src[src_off];
        }
        // increment multi-index over out_shape
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn op_parents(op: &Op) -> Vec<usize> {
    match op {
        Op::Leaf => vec![],
        Op::Linear { x, w, b } | Op::Conv1d { x, w, b, .. } => {
            let mut v = vec![*x, *w];
            v.extend(b.iter());
            v
        }
        Op::LayerNorm { x, gamma, beta, .. } | Op::GroupNorm { x, gamma, beta, .. } => {
            vec![*x, *gamma, *beta]
        }
        Op::Silu { x }
        | Op::AffineConst { x, .. }
        | Op::Softmax { x }
        | Op::Permute { x, .. }
        | Op::Reshape { x }
        | Op::Slice { x, .. }
        | Op::Sum { x }
        | Op::Abs { x }
        | Op::Sqrt { x }
        | Op::Ln { x }
        | Op::Stft { x, .. }
        | Op::Istft { x, .. } => vec![*x],
        Op::Prelu { x, slope, .. } => vec![*x, *slope],
        Op::Binary { a, b, .. } | Op::MatMul { a, b } | Op::Hypot { a, b } => vec![*a, *b],
        Op::Concat { xs, .. } => xs.clone(),
    }
}

fn acc_into(flow: &mut [Option<Vec<f64>>], nodes: &[Node], idx: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[idx].requires_grad {
        return;
    }
    let buf = flow[idx].get_or_insert_with(|| vec![0.0; nodes[idx].value.numel()]);
    f(buf);
}

#[allow(clippy::too_many_lines)]
fn backprop_node(nodes: &[Node], idx: usize, gout: &[f64], flow: &mut [Option<Vec<f64>>]) {
    let val = |i: usize| nodes[i].value.data();
    let shape = |i: usize| nodes[i].value.shape();
    match &nodes[idx].op {
        Op::Leaf => {}
        Op::Linear { x, w, b } => {
            let ws = shape(*w);
            let (d_out, d_in) = (ws[0], ws[1]);
            let rows = nodes[*x].value.numel() / d_in;
            let xd = val(*x);
            let wd = val(*w);
            acc_into(flow, nodes, *x, |gx| {
                for r in 0..rows {
                    let gr = &gout[r * d_out..(r + 1) * d_out];
                    let gxr = &mut gx[r * d_in..(r + 1) * d_in];
                    for j in 0..d_out {
                        let g = gr[j];
                        if g == 0.0 {
                            continue;
                        }
                        let wj = &wd[j * d_in..(j + 1) * d_in];
                        for i in 0..d_in {
                            gxr[i] += g * wj[i];
                        }
                    }
                }
            });
            acc_into(flow, nodes, *w, |gw| {
                for r in 0..rows {
                    let gr = &gout[r * d_out..(r + 1) * d_out];
                    let xr = &xd[r * d_in..(r + 1) * d_in];
                    for j in 0..d_out {
                        let g = gr[j];
                        if g == 0.0 {
                            continue;
                        }
                        let gwj = &mut gw[j * d_in..(j + 1) * d_in];
                        for i in 0..d_in {
                            gwj[i] += g * xr[i];
                        }
                    }
                }
            });
            if let Some(b) = b {
                acc_into(flow, nodes, *b, |gb| {
                    for r in 0..rows {
                        for j in 0..d_out {
                            gb[j] += gout[r * d_out + j];
                        }
                    }
                });
            }
        }
        Op::Conv1d { x, w, b, groups } => {
            let xs = shape(*x);
            let ws = shape(*w);
            let (batch, c_in, n) = (xs[0], xs[1], xs[2]);
            let (c_out, c_g, k) = (ws[0], ws[1], ws[2]);
            let pad = (k - 1) / 2;
            let og = c_out / groups;
            let xd = val(*x);
            let wd = val(*w);
            acc_into(flow, nodes, *x, |gx| {
                for bi in 0..batch {
                    for co in 0..c_out {
                        let g = co / og;
                        for t in 0..n {
                            let gv = gout[(bi * c_out + co) * n + t];
                            if gv == 0.0 {
                                continue;
                            }
                            for ci in 0..c_g {
                                let xbase = (bi * c_in + g * c_g + ci) * n;
                                let wbase = (co * c_g + ci) * k;
                                for kk in 0..k {
                                    let src = t + kk;
                                    if src >= pad && src - pad < n {
                                        gx[xbase + src - pad] += gv * wd[wbase + kk];
                                    }
                                }
                            }
                        }
                    }
                }
            });
            acc_into(flow, nodes, *w, |gw| {
                for bi in 0..batch {
                    for co in 0..c_out {
                        let g = co / og;
                        for t in 0..n {
                            let gv = gout[(bi * c_out + co) * n + t];
                            if gv == 0.0 {
                                continue;
                            }
                            for ci in 0..c_g {
                                let xbase = (bi * c_in + g * c_g + ci) * n;
                                let wbase = (co * c_g + ci) * k;
                                for kk in 0..k {
                                    let src = t + kk;
                                    if src >= pad && src - pad < n {
                                        gw[wbase + kk] += gv * xd[xbase + src - pad];
                                    }
                                }
                            }
                        }
                    }
                }
            });
            if let Some(b) = b {
                acc_into(flow, nodes, *b, |gb| {
                    for bi in 0..batch {
                        for co in 0..c_out {
                            for t in 0..n {
                                gb[co] += gout[(bi * c_out + co) * n + t];
                            }
                        }
                    }
                });
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            mean,
            inv_std,
        } => {
            let d = *shape(*x).last().unwrap();
            let rows = nodes[*x].value.numel() / d;
            let xd = val(*x);
            let gd = val(*gamma);
            acc_into(flow, nodes, *x, |gx| {
                for r in 0..rows {
                    let (m, inv) = (mean[r], inv_std[r]);
                    let xr = &xd[r * d..(r + 1) * d];
                    let gr = &gout[r * d..(r + 1) * d];
                    let mut sum1 = 0.0;
                    let mut sum2 = 0.0;
                    for i in 0..d {
                        let xhat = (xr[i] - m) * inv;
                        let dxhat = gr[i] * gd[i];
                        sum1 += dxhat;
                        sum2 += dxhat * xhat;
                    }
                    let gxr = &mut gx[r * d..(r + 1) * d];
                    for i in 0..d {
                        let xhat = (xr[i] - m) * inv;
                        let dxhat = gr[i] * gd[i];
                        gxr[i] += inv * (dxhat - sum1 / d as f64 - xhat * sum2 / d as f64);
                    }
                }
            });
            acc_into(flow, nodes, *gamma, |gg| {
                for r in 0..rows {
                    let (m, inv) = (mean[r], inv_std[r]);
                    for i in 0..d {
                        gg[i] += gout[r * d + i] * (xd[r * d + i] - m) * inv;
                    }
                }
            });
            acc_into(flow, nodes, *beta, |gb| {
                for r in 0..rows {
                    for i in 0..d {
                        gb[i] += gout[r * d + i];
                    }
                }
            });
        }
        Op::GroupNorm {
            x,
            gamma,
            beta,
            groups,
            mean,
            inv_std,
        } => {
            let xs = shape(*x);
            let (batch, c) = (xs[0], xs[1]);
            let rest: usize = xs[2..].iter().product();
            let cg = c / groups;
            let scope = cg * rest;
            let xd = val(*x);
            let gd = val(*gamma);
            acc_into(flow, nodes, *x, |gx| {
                for bi in 0..batch {
                    for g in 0..*groups {
                        let (m, inv) = (mean[bi * groups + g], inv_std[bi * groups + g]);
                        let mut sum1 = 0.0;
                        let mut sum2 = 0.0;
                        for ci in 0..cg {
                            let ch = g * cg + ci;
                            let base = (bi * c + ch) * rest;
                            for r in 0..rest {
                                let xhat = (xd[base + r] - m) * inv;
                                let dxhat = gout[base + r] * gd[ch];
                                sum1 += dxhat;
                                sum2 += dxhat * xhat;
                            }
                        }
                        for ci in 0..cg {
                            let ch = g * cg + ci;
                            let base = (bi * c + ch) * rest;
                            for r in 0..rest {
                                let xhat = (xd[base + r] - m) * inv;
                                let dxhat = gout[base + r] * gd[ch];
                                gx[base + r] +=
                                    inv * (dxhat - sum1 / scope as f64 - xhat * sum2 / scope as f64);
                            }
                        }
                    }
                }
            });
            acc_into(flow, nodes, *gamma, |gg| {
                for bi in 0..batch {
                    for g in 0..*groups {
                        let (m, inv) = (mean[bi * groups + g], inv_std[bi * groups + g]);
                        for ci in 0..cg {
                            let ch = g * cg + ci;
                            let base = (bi * c + ch) * rest;
                            for r in 0..rest {
                                gg[ch] += gout[base + r] * (xd[base + r] - m) * inv;
                            }
                        }
                    }
                }
            });
            acc_into(flow, nodes, *beta, |gb| {
                for bi in 0..batch {
                    for ch in 0..c {
                        let base = (bi * c + ch) * rest;
                        for r in 0..rest {
                            gb[ch] += gout[base + r];
                        }
                    }
                }
            });
        }
        Op::Silu { x } => {
            let xd = val(*x);
            acc_into(flow, nodes, *x, |gx| {
                for i in 0..xd.len() {
                    let s = sigmoid(xd[i]);
                    gx[i] += gout[i] * (s + xd[i] * s * (1.0 - s));
                }
            });
        }
        Op::Prelu { x, slope, axis } => {
            let xs = shape(*x);
            let s = xs[*axis];
            let stride = strides(xs)[*axis];
            let xd = val(*x);
            let sd = val(*slope);
            acc_into(flow, nodes, *x, |gx| {
                for i in 0..xd.len() {
                    let ch = (i / stride) % s;
                    gx[i] += gout[i] * if xd[i] >= 0.0 { 1.0 } else { sd[ch] };
                }
            });
            acc_into(flow, nodes, *slope, |gs| {
                for i in 0..xd.len() {
                    if xd[i] < 0.0 {
                        gs[(i / stride) % s] += gout[i] * xd[i];
                    }
                }
            });
        }
        Op::Softmax { x } => {
            let y = &nodes[idx].value;
            let d = *y.shape().last().unwrap();
            let rows = y.numel() / d;
            let yd = y.data();
            acc_into(flow, nodes, *x, |gx| {
                for r in 0..rows {
                    let yr = &yd[r * d..(r + 1) * d];
                    let gr = &gout[r * d..(r + 1) * d];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    let gxr = &mut gx[r * d..(r + 1) * d];
                    for i in 0..d {
                        gxr[i] += yr[i] * (gr[i] - dot);
                    }
                }
            });
        }
        Op::Binary { a, b, kind } => {
            let na = nodes[*a].value.numel();
            let nb = nodes[*b].value.numel();
            let ad = val(*a);
            let bd = val(*b);
            let kind = *kind;
            acc_into(flow, nodes, *a, |ga| {
                for (i, &g) in gout.iter().enumerate() {
                    let bi = if nb == 1 { 0 } else { i };
                    let d = match kind {
                        BinKind::Add | BinKind::Sub => g,
                        BinKind::Mul => g * bd[bi],
                        BinKind::Div => g / bd[bi],
                    };
                    ga[if na == 1 { 0 } else { i }] += d;
                }
            });
            acc_into(flow, nodes, *b, |gb| {
                for (i, &g) in gout.iter().enumerate() {
                    let ai = if na == 1 { 0 } else { i };
                    let bi = if nb == 1 { 0 } else { i };
                    let d = match kind {
                        BinKind::Add => g,
                        BinKind::Sub => -g,
                        BinKind::Mul => g * ad[ai],
                        BinKind::Div => -g * ad[ai] / (bd[bi] * bd[bi]),
                    };
                    gb[bi] += d;
                }
            });
        }
        Op::AffineConst { x, mul } => {
            acc_into(flow, nodes, *x, |gx| {
                for i in 0..gout.len() {
                    gx[i] += mul * gout[i];
                }
            });
        }
        Op::MatMul { a, b } => {
            let sa = shape(*a);
            let sb = shape(*b);
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let ad = val(*a);
            let bd = val(*b);
            acc_into(flow, nodes, *a, |ga| {
                for i in 0..m {
                    for j in 0..n {
                        let g = gout[i * n + j];
                        if g == 0.0 {
                            continue;
                        }
                        for kk in 0..k {
                            ga[i * k + kk] += g * bd[kk * n + j];
                        }
                    }
                }
            });
            acc_into(flow, nodes, *b, |gb| {
                for i in 0..m {
                    for j in 0..n {
                        let g = gout[i * n + j];
                        if g == 0.0 {
                            continue;
                        }
                        for kk in 0..k {
                            gb[kk * n + j] += g * ad[i * k + kk];
                        }
                    }
                }
            });
        }
        Op::Permute { x, perm } => {
            let xs = shape(*x).to_vec();
            acc_into(flow, nodes, *x, |gx| {
                permute_copy(gout, &xs, perm, gx, true);
            });
        }
        Op::Reshape { x } => {
            acc_into(flow, nodes, *x, |gx| {
                for i in 0..gout.len() {
                    gx[i] += gout[i];
                }
            });
        }
        Op::Concat { xs, axis } => {
            let out_shape = nodes[idx].value.shape().to_vec();
            let outer: usize = out_shape[..*axis].iter().product();
            let inner: usize = out_shape[*axis + 1..].iter().product();
            let axis_total = out_shape[*axis];
            let mut offset = 0;
            for &xid in xs {
                let len = nodes[xid].value.shape()[*axis];
                acc_into(flow, nodes, xid, |gx| {
                    for o in 0..outer {
                        let src_base = (o * axis_total + offset) * inner;
                        let dst = &mut gx[o * len * inner..(o + 1) * len * inner];
                        for (d, g) in dst.iter_mut().zip(&gout[src_base..src_base + len * inner]) {
                            *d += g;
                        }
                    }
                });
                offset += len;
            }
        }
        Op::Slice { x, axis, start } => {
            let xs = shape(*x).to_vec();
            let len = nodes[idx].value.shape()[*axis];
            let outer: usize = xs[..*axis].iter().product();
            let inner: usize = xs[*axis + 1..].iter().product();
            acc_into(flow, nodes, *x, |gx| {
                for o in 0..outer {
                    let dst_base = (o * xs[*axis] + start) * inner;
                    for i in 0..len * inner {
                        gx[dst_base + i] += gout[o * len * inner + i];
                    }
                }
            });
        }
        Op::Sum { x } => {
            let g = gout[0];
            acc_into(flow, nodes, *x, |gx| {
                for v in gx.iter_mut() {
                    *v += g;
                }
            });
        }
        Op::Abs { x } => {
            let xd = val(*x);
            acc_into(flow, nodes, *x, |gx| {
                for i in 0..xd.len() {
                    // subgradient at 0 defined as 0
                    gx[i] += gout[i] * if xd[i] > 0.0 { 1.0 } else if xd[i] < 0.0 { -1.0 } else { 0.0 };
                }
            });
        }
        Op::Sqrt { x } => {
            let yd = nodes[idx].value.data();
            acc_into(flow, nodes, *x, |gx| {
                for i in 0..yd.len() {
                    if yd[i] > 0.0 {
                        gx[i] += gout[i] * 0.5 / yd[i];
                    }
                }
            });
        }
        Op::Ln { x } => {
            let xd = val(*x);
            acc_into(flow, nodes, *x, |gx| {
                for i in 0..xd.len() {
                    gx[i] += gout[i] / xd[i];
                }
            });
        }
        Op::Hypot { a, b } => {
            let ad = val(*a);
            let bd = val(*b);
            let yd = nodes[idx].value.data();
            acc_into(flow, nodes, *a, |ga| {
                for i in 0..yd.len() {
                    if yd[i] > 0.0 {
                        ga[i] += gout[i] * ad[i] / yd[i];
                    }
                }
            });
            acc_into(flow, nodes, *b, |gb| {
                for i in 0..yd.len() {
                    if yd[i] > 0.0 {
                        gb[i] += gout[i] * bd[i] / yd[i];
                    }
                }
            });
        }
        Op::Stft { x, frame_len, hop } => {
            let basis = DftBasis::new(*frame_len);
            let window = hann_window(*frame_len);
            let bins = basis.bins;
            let frames = nodes[idx].value.shape()[2];
            acc_into(flow, nodes, *x, |gx| {
                let mut gre = vec![0.0; bins];
                let mut gim = vec![0.0; bins];
                let mut gframe = vec![0.0; *frame_len];
                for t in 0..frames {
                    for f in 0..bins {
                        gre[f] = gout[f * frames + t];
                        gim[f] = gout[(bins + f) * frames + t];
                    }
                    gframe.iter_mut().for_each(|v| *v = 0.0);
                    basis.forward_adjoint(&gre, &gim, &mut gframe);
                    let start = t * hop;
                    for i in 0..*frame_len {
                        gx[start + i] += window[i] * gframe[i];
                    }
                }
            });
        }
        Op::Istft {
            x,
            frame_len,
            hop,
            target_len,
        } => {
            let basis = DftBasis::new(*frame_len);
            let window = hann_window(*frame_len);
            let bins = basis.bins;
            let frames = shape(*x)[2];
            let covered = (frames - 1) * hop + frame_len;
            let mut denom = vec![0.0; covered];
            for t in 0..frames {
                let start = t * hop;
                for i in 0..*frame_len {
                    denom[start + i] += window[i] * window[i];
                }
            }
            acc_into(flow, nodes, *x, |gx| {
                let mut gframe = vec![0.0; *frame_len];
                let mut gre = vec![0.0; bins];
                let mut gim = vec![0.0; bins];
                for t in 0..frames {
                    let start = t * hop;
                    let mut any = false;
                    for i in 0..*frame_len {
                        let m = start + i;
                        if m < *target_len && denom[m] > DENOM_EPS {
                            gframe[i] = window[i] * gout[m] / denom[m];
                            any = any || gframe[i] != 0.0;
                        } else {
                            gframe[i] = 0.0;
                        }
                    }
                    if !any {
                        continue;
                    }
                    gre.iter_mut().for_each(|v| *v = 0.0);
                    gim.iter_mut().for_each(|v| *v = 0.0);
                    basis.inverse_adjoint(&gframe, &mut gre, &mut gim);
                    for f in 0..bins {
                        gx[f * frames + t] += gre[f];
                        gx[(bins + f) * frames + t] += gim[f];
                    }
                }
            });
        }
    }
}
