use std::sync::Arc;

use super::conv::{self, ConvGeometry};
use super::graph::{Graph, Op, Var};
use super::Tensor;
use crate::error::{Error, Result};

impl Graph {
    /// Shared per-row affine map: `out[.., :] = input[.., :]·weight + bias`.
    ///
    /// Every leading axis of `input` is treated as a batch axis. Each output
    /// row is accumulated in a fixed order that does not depend on the row's
    /// position, so identical rows give bit-identical outputs.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let in_shape = self.shape(input).to_vec();
        let w_shape = self.shape(weight).to_vec();
        if w_shape.len() != 2 {
            return Err(Error::Dimension(format!("linear weight must be rank 2, got {w_shape:?}")));
        }
        let (c_in, c_out) = (w_shape[0], w_shape[1]);
        if in_shape.last() != Some(&c_in) {
            return Err(Error::Dimension(format!(
                "linear input {in_shape:?} does not end in {c_in}"
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [c_out] {
                return Err(Error::Dimension(format!(
                    "linear bias {:?} does not match {c_out} outputs",
                    self.shape(b)
                )));
            }
        }
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let rows = x.len() / c_in;
        let mut out = vec![0.0; rows * c_out];
        for (r, dst) in out.chunks_exact_mut(c_out).enumerate() {
            if let Some(b) = bias {
                dst.copy_from_slice(self.value(b).data());
            }
            for (i, &xv) in x[r * c_in..(r + 1) * c_in].iter().enumerate() {
                for (d, wv) in dst.iter_mut().zip(&w[i * c_out..(i + 1) * c_out]) {
                    *d += xv * wv;
                }
            }
        }
        let mut shape = in_shape;
        *shape.last_mut().unwrap() = c_out;
        let mut parents = vec![input, weight];
        parents.extend(bias);
        let rg = self.any_grad(&parents);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Linear {
                input,
                weight,
                bias,
                c_in,
                c_out,
            },
            rg,
        ))
    }

    fn conv_shapes(&self, input: Var, kernel: Var) -> Result<(usize, usize, usize, usize, usize)> {
        let s = self.shape(input);
        let k = self.shape(kernel);
        if s.len() != 5 || s[2] != s[3] || s[3] != s[4] {
            return Err(Error::Dimension(format!("expected [B, C, N, N, N] input, got {s:?}")));
        }
        if k.len() != 5 || k[2] != k[3] || k[3] != k[4] {
            return Err(Error::Dimension(format!("expected cubic rank-5 kernel, got {k:?}")));
        }
        Ok((s[0], s[1], s[2], k[0], k[1]))
    }

    /// 3D cross-correlation of `[B, C_in, N, N, N]` with `[C_out, C_in, k, k, k]`.
    pub fn conv3d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (batch, c_in, n, k0, k1) = self.conv_shapes(input, kernel)?;
        let (c_out, kc_in) = (k0, k1);
        if kc_in != c_in {
            return Err(Error::Dimension(format!(
                "kernel expects {kc_in} input channels, input has {c_in}"
            )));
        }
        let geom = ConvGeometry::forward(n, self.shape(kernel)[2], stride, padding)?;
        let x = self.value(input).data();
        let w = self.value(kernel).data();
        let in_len = c_in * geom.in_volume();
        let out_len = c_out * geom.out_volume();
        let mut out = vec![0.0; batch * out_len];
        for b in 0..batch {
            conv::conv3d_forward(
                &x[b * in_len..(b + 1) * in_len],
                w,
                c_in,
                c_out,
                &geom,
                &mut out[b * out_len..(b + 1) * out_len],
            );
        }
        let m = geom.out_extent;
        let rg = self.any_grad(&[input, kernel]);
        Ok(self.push(
            Tensor::new(vec![batch, c_out, m, m, m], out)?,
            Op::Conv3d {
                input,
                kernel,
                geom,
                batch,
                c_in,
                c_out,
            },
            rg,
        ))
    }

    /// Transposed 3D convolution: `[B, C_in, M, M, M]` with `[C_in, C_out, k, k, k]`
    /// gives `[B, C_out, (M-1)·stride - 2·padding + k, ...]`. It is the adjoint of
    /// [`Graph::conv3d`] with the same kernel and geometry.
    pub fn conv3d_transposed(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (batch, c_in, m, k0, k1) = self.conv_shapes(input, kernel)?;
        if k0 != c_in {
            return Err(Error::Dimension(format!(
                "transposed kernel expects {k0} input channels, input has {c_in}"
            )));
        }
        let c_out = k1;
        let geom = ConvGeometry::transposed(m, self.shape(kernel)[2], stride, padding)?;
        let x = self.value(input).data();
        let w = self.value(kernel).data();
        let in_len = c_in * geom.out_volume();
        let out_len = c_out * geom.in_volume();
        let mut out = vec![0.0; batch * out_len];
        for b in 0..batch {
            conv::conv3d_transposed_forward(
                &x[b * in_len..(b + 1) * in_len],
                w,
                c_in,
                c_out,
                &geom,
                &mut out[b * out_len..(b + 1) * out_len],
            );
        }
        let n = geom.in_extent;
        let rg = self.any_grad(&[input, kernel]);
        Ok(self.push(
            Tensor::new(vec![batch, c_out, n, n, n], out)?,
            Op::Conv3dTransposed {
                input,
                kernel,
                geom,
                batch,
                c_in,
                c_out,
            },
            rg,
        ))
    }

    /// Adds `bias[c]` to every entry of channel `c` (axis 1) of `input`.
    pub fn channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if s.len() < 2 || self.shape(bias) != [s[1]] {
            return Err(Error::Dimension(format!(
                "channel bias {:?} does not match input {s:?}",
                self.shape(bias)
            )));
        }
        let channels = s[1];
        let inner: usize = s[2..].iter().product();
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(input).data().to_vec();
        for (j, chunk) in out.chunks_exact_mut(inner).enumerate() {
            let bj = b[j % channels];
            chunk.iter_mut().for_each(|v| *v += bj);
        }
        let rg = self.any_grad(&[input, bias]);
        Ok(self.push(
            Tensor::new(s, out)?,
            Op::ChannelBias {
                input,
                bias,
                channels,
                inner,
            },
            rg,
        ))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(a);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
            .expect("same shape");
        let rg = self.requires_grad(a);
        self.push(out, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 || x.is_nan() { x } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "elementwise operands {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Sum of all entries as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.requires_grad(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Sum of several same-shape tensors, left to right.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let (&first, rest) = vars
            .split_first()
            .ok_or_else(|| Error::Contract("add_all needs at least one operand".into()))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.requires_grad(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::Contract("concat of nothing".into()))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::Dimension(format!("axis {axis} out of range for {first:?}")));
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        let mut extent = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(Error::Dimension(format!(
                    "cannot concatenate {s:?} with {first:?} on axis {axis}"
                )));
            }
            extent += s[axis];
            widths.push(s[axis] * inner);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; outer * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for o in 0..outer {
                out[o * total + offset..o * total + offset + w].copy_from_slice(&src[o * w..(o + 1) * w]);
            }
            offset += w;
        }
        let mut shape = first;
        shape[axis] = extent;
        let rg = self.any_grad(parts);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                outer,
                widths,
            },
            rg,
        ))
    }

    /// Scatters per-point feature rows `[P, C]` into `cells` voxels and keeps the
    /// channel-wise maximum in each; empty voxels hold zero. Output `[C, cells]`.
    pub fn grid_max_pool(&mut self, features: Var, cell_of_point: &[usize], cells: usize) -> Result<Var> {
        let s = self.shape(features).to_vec();
        if s.len() != 2 || s[0] != cell_of_point.len() {
            return Err(Error::Dimension(format!(
                "grid pooling expects [{}, C] features, got {s:?}",
                cell_of_point.len()
            )));
        }
        if let Some(&bad) = cell_of_point.iter().find(|&&c| c >= cells) {
            return Err(Error::Contract(format!("cell index {bad} out of range {cells}")));
        }
        let channels = s[1];
        let x = self.value(features).data();
        let mut out = vec![0.0; channels * cells];
        let mut argmax = vec![usize::MAX; channels * cells];
        for (p, &cell) in cell_of_point.iter().enumerate() {
            let row = &x[p * channels..(p + 1) * channels];
            for (c, &v) in row.iter().enumerate() {
                let slot = c * cells + cell;
                if argmax[slot] == usize::MAX || v > out[slot] || v.is_nan() {
                    out[slot] = v;
                    argmax[slot] = p;
                }
            }
        }
        let rg = self.requires_grad(features);
        Ok(self.push(
            Tensor::new(vec![channels, cells], out)?,
            Op::GridMaxPool {
                input: features,
                argmax,
                channels,
                cells,
            },
            rg,
        ))
    }

    /// Records precomputed distances that depend on an offset field `[3, cells]`
    /// (any shape with 3·cells entries, axis-major) only through the given
    /// per-output voxel links. Used by the nearest-neighbour loss terms.
    pub(crate) fn offset_distance(
        &mut self,
        offsets: Var,
        values: Vec<f64>,
        links: Vec<Option<(usize, [f64; 3])>>,
    ) -> Result<Var> {
        let cells = self.value(offsets).len() / 3;
        debug_assert_eq!(values.len(), links.len());
        let rg = self.requires_grad(offsets);
        let n = values.len();
        Ok(self.push(
            Tensor::new(vec![n], values)?,
            Op::OffsetDistance {
                offsets,
                links,
                cells,
            },
            rg,
        ))
    }

    /// Summed binary cross-entropy of probabilities `input` against binary targets,
    /// with probabilities clamped to `[eps, 1 - eps]`.
    pub fn bce(&mut self, input: Var, targets: &[bool], eps: f64) -> Result<Var> {
        let o = self.value(input).data();
        if o.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} probabilities against {} targets",
                o.len(),
                targets.len()
            )));
        }
        let total: f64 = o
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                let p = p.clamp(eps, 1.0 - eps);
                if t {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum();
        let rg = self.requires_grad(input);
        Ok(self.push(
            Tensor::scalar(total),
            Op::Bce {
                input,
                targets: Arc::new(targets.to_vec()),
                eps,
            },
            rg,
        ))
    }
}
