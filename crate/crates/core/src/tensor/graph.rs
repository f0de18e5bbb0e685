use std::sync::Arc;

use super::conv::{self, ConvGeometry};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        c_in: usize,
        c_out: usize,
    },
    Conv3d {
        input: Var,
        kernel: Var,
        geom: ConvGeometry,
        batch: usize,
        c_in: usize,
        c_out: usize,
    },
    Conv3dTransposed {
        input: Var,
        kernel: Var,
        geom: ConvGeometry,
        batch: usize,
        c_in: usize,
        c_out: usize,
    },
    ChannelBias {
        input: Var,
        bias: Var,
        channels: usize,
        inner: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Reshape(Var),
    Concat {
        parts: Vec<Var>,
        outer: usize,
        widths: Vec<usize>,
    },
    /// `argmax[c * cells + v]` is the source row of pooled entry `(c, v)`,
    /// or `usize::MAX` for an empty cell.
    GridMaxPool {
        input: Var,
        argmax: Vec<usize>,
        channels: usize,
        cells: usize,
    },
    /// Output `i` is a distance that depends on the offset field only through
    /// voxel `links[i].0`, with derivative `links[i].1` w.r.t. its three components.
    OffsetDistance {
        offsets: Var,
        links: Vec<Option<(usize, [f64; 3])>>,
        cells: usize,
    },
    Bce {
        input: Var,
        targets: Arc<Vec<bool>>,
        eps: f64,
    },
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
    pub(crate) param: Option<usize>,
}

/// Tape of recorded operations.
#[derive(Debug, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf holding `value`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that stands for parameter `param` of a parameter store.
    pub(crate) fn param_leaf(&mut self, value: Tensor, param: usize) -> Var {
        let v = self.push(value, Op::Leaf, true);
        self.nodes[v.0].param = Some(param);
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass w.r.t. `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// `(parameter index, gradient)` for every parameter leaf reached by backward.
    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| {
            let p = n.param?;
            let g = self.grads.get(i)?.as_deref()?;
            Some((p, g))
        })
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Reverse pass from the scalar `loss`.
    ///
    /// May be called once per graph; a second call is a contract error since
    /// the forward values would be reused for a different accumulation.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already ran on this graph; rebuild the forward pass first".into(),
            ));
        }
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        lv.check_finite("loss")?;
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at node {i} ({})",
                    self.nodes[i].op.name()
                )));
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear {
                input,
                weight,
                bias,
                c_in,
                c_out,
            } => {
                let x = self.value(*input).data();
                let w = self.value(*weight).data();
                let rows = x.len() / c_in;
                if self.requires_grad(*input) {
                    let gi = self.slot(grads, *input);
                    conv::gemm(rows, *c_out, *c_in, g, false, w, true, 1.0, gi);
                }
                if self.requires_grad(*weight) {
                    let gw = self.slot(grads, *weight);
                    conv::gemm(*c_in, rows, *c_out, x, true, g, false, 1.0, gw);
                }
                if let Some(b) = bias {
                    if self.requires_grad(*b) {
                        let gb = self.slot(grads, *b);
                        for row in g.chunks_exact(*c_out) {
                            for (acc, v) in gb.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                    }
                }
            }
            Op::Conv3d {
                input,
                kernel,
                geom,
                batch,
                c_in,
                c_out,
            } => {
                let x = self.value(*input).data();
                let k = self.value(*kernel).data();
                let in_len = c_in * geom.in_volume();
                let out_len = c_out * geom.out_volume();
                let need_in = self.requires_grad(*input);
                let need_k = self.requires_grad(*kernel);
                let mut gk = need_k.then(|| vec![0.0; k.len()]);
                let mut gi = need_in.then(|| vec![0.0; x.len()]);
                for b in 0..*batch {
                    conv::conv3d_backward(
                        &x[b * in_len..(b + 1) * in_len],
                        k,
                        &g[b * out_len..(b + 1) * out_len],
                        *c_in,
                        *c_out,
                        geom,
                        gi.as_mut().map(|v| &mut v[b * in_len..(b + 1) * in_len]),
                        gk.as_deref_mut(),
                    );
                }
                if let Some(gi) = gi {
                    add_into(self.slot(grads, *input), &gi);
                }
                if let Some(gk) = gk {
                    add_into(self.slot(grads, *kernel), &gk);
                }
            }
            Op::Conv3dTransposed {
                input,
                kernel,
                geom,
                batch,
                c_in,
                c_out,
            } => {
                let x = self.value(*input).data();
                let k = self.value(*kernel).data();
                let in_len = c_in * geom.out_volume();
                let out_len = c_out * geom.in_volume();
                let mut gk = self.requires_grad(*kernel).then(|| vec![0.0; k.len()]);
                let mut gi = self.requires_grad(*input).then(|| vec![0.0; x.len()]);
                for b in 0..*batch {
                    conv::conv3d_transposed_backward(
                        &x[b * in_len..(b + 1) * in_len],
                        k,
                        &g[b * out_len..(b + 1) * out_len],
                        *c_in,
                        *c_out,
                        geom,
                        gi.as_mut().map(|v| &mut v[b * in_len..(b + 1) * in_len]),
                        gk.as_deref_mut(),
                    );
                }
                if let Some(gi) = gi {
                    add_into(self.slot(grads, *input), &gi);
                }
                if let Some(gk) = gk {
                    add_into(self.slot(grads, *kernel), &gk);
                }
            }
            Op::ChannelBias {
                input,
                bias,
                channels,
                inner,
            } => {
                if self.requires_grad(*input) {
                    add_into(self.slot(grads, *input), g);
                }
                if self.requires_grad(*bias) {
                    let gb = self.slot(grads, *bias);
                    for (j, chunk) in g.chunks_exact(*inner).enumerate() {
                        gb[j % channels] += chunk.iter().sum::<f64>();
                    }
                }
            }
            Op::Relu(a) => {
                let ga = self.slot(grads, *a);
                for ((acc, gv), o) in ga.iter_mut().zip(g).zip(out) {
                    if *o > 0.0 {
                        *acc += gv;
                    }
                }
            }
            Op::Sigmoid(a) => {
                let ga = self.slot(grads, *a);
                for ((acc, gv), o) in ga.iter_mut().zip(g).zip(out) {
                    *acc += gv * o * (1.0 - o);
                }
            }
            Op::Tanh(a) => {
                let ga = self.slot(grads, *a);
                for ((acc, gv), o) in ga.iter_mut().zip(g).zip(out) {
                    *acc += gv * (1.0 - o * o);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.requires_grad(*v) {
                        add_into(self.slot(grads, *v), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.requires_grad(*a) {
                    add_into(self.slot(grads, *a), g);
                }
                if self.requires_grad(*b) {
                    for (acc, gv) in self.slot(grads, *b).iter_mut().zip(g) {
                        *acc -= gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.requires_grad(*a) {
                    let ga = self.slot(grads, *a);
                    for ((acc, gv), y) in ga.iter_mut().zip(g).zip(bv) {
                        *acc += gv * y;
                    }
                }
                if self.requires_grad(*b) {
                    let gb = self.slot(grads, *b);
                    for ((acc, gv), x) in gb.iter_mut().zip(g).zip(av) {
                        *acc += gv * x;
                    }
                }
            }
            Op::Scale(a, s) => {
                for (acc, gv) in self.slot(grads, *a).iter_mut().zip(g) {
                    *acc += gv * s;
                }
            }
            Op::Sum(a) => {
                let g0 = g[0];
                for acc in self.slot(grads, *a).iter_mut() {
                    *acc += g0;
                }
            }
            Op::Reshape(a) => add_into(self.slot(grads, *a), g),
            Op::Concat {
                parts,
                outer,
                widths,
            } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (p, &w) in parts.iter().zip(widths) {
                    if self.requires_grad(*p) {
                        let gp = self.slot(grads, *p);
                        for o in 0..*outer {
                            let src = &g[o * total + offset..o * total + offset + w];
                            add_into(&mut gp[o * w..(o + 1) * w], src);
                        }
                    }
                    offset += w;
                }
            }
            Op::GridMaxPool {
                input,
                argmax,
                channels,
                cells,
            } => {
                let gi = self.slot(grads, *input);
                for c in 0..*channels {
                    for v in 0..*cells {
                        let src = argmax[c * cells + v];
                        if src != usize::MAX {
                            gi[src * channels + c] += g[c * cells + v];
                        }
                    }
                }
            }
            Op::OffsetDistance {
                offsets,
                links,
                cells,
            } => {
                let go = self.slot(grads, *offsets);
                for (gv, link) in g.iter().zip(links) {
                    if let Some((voxel, d)) = link {
                        for (axis, dv) in d.iter().enumerate() {
                            go[axis * cells + voxel] += gv * dv;
                        }
                    }
                }
            }
            Op::Bce {
                input,
                targets,
                eps,
            } => {
                let o = self.value(*input).data();
                let g0 = g[0];
                let gi = self.slot(grads, *input);
                for ((acc, &p), &t) in gi.iter_mut().zip(o).zip(targets.iter()) {
                    if p < *eps || p > 1.0 - eps {
                        continue;
                    }
                    *acc += g0 * if t { -1.0 / p } else { 1.0 / (1.0 - p) };
                }
            }
        }
    }

    /// Gradient accumulator of `v`, created on first use.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut [f64] {
        grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()])
    }
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Linear { .. } => "linear",
            Op::Conv3d { .. } => "conv3d",
            Op::Conv3dTransposed { .. } => "conv3d_transposed",
            Op::ChannelBias { .. } => "channel_bias",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Reshape(_) => "reshape",
            Op::Concat { .. } => "concat",
            Op::GridMaxPool { .. } => "grid_max_pool",
            Op::OffsetDistance { .. } => "offset_distance",
            Op::Bce { .. } => "bce",
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
