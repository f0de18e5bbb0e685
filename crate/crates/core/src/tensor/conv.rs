//! Cubic 3D convolution kernels.
//!
//! The fast path lowers a convolution to a matrix product over an unfolded
//! ("im2col") buffer. The `direct_*` functions are plain nested loops kept as
//! the reference the fast path is tested against.

use crate::error::{Error, Result};

/// Spatial geometry of a cubic convolution, shared by the forward and
/// transposed directions. `in_extent` is always the extent on the
/// cross-correlation's input side and `out_extent` on its output side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_extent: usize,
    pub out_extent: usize,
}

impl ConvGeometry {
    /// Geometry of a forward convolution over an `in_extent`³ input.
    pub fn forward(in_extent: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(Error::Dimension("kernel and stride must be positive".into()));
        }
        let span = in_extent + 2 * padding;
        if span < kernel || !(span - kernel).is_multiple_of(stride) {
            return Err(Error::Dimension(format!(
                "output extent ({in_extent} + 2*{padding} - {kernel})/{stride} + 1 is not a positive integer"
            )));
        }
        Ok(ConvGeometry {
            kernel,
            stride,
            padding,
            in_extent,
            out_extent: (span - kernel) / stride + 1,
        })
    }

    /// Geometry of a transposed convolution whose input has extent `out_extent`.
    pub fn transposed(out_extent: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 || out_extent == 0 {
            return Err(Error::Dimension("kernel, stride and extent must be positive".into()));
        }
        let full = (out_extent - 1) * stride + kernel;
        if full <= 2 * padding {
            return Err(Error::Dimension(format!(
                "transposed output extent ({out_extent} - 1)*{stride} - 2*{padding} + {kernel} is not positive"
            )));
        }
        Ok(ConvGeometry {
            kernel,
            stride,
            padding,
            in_extent: full - 2 * padding,
            out_extent,
        })
    }

    pub fn in_volume(&self) -> usize {
        self.in_extent.pow(3)
    }

    pub fn out_volume(&self) -> usize {
        self.out_extent.pow(3)
    }

    pub fn taps(&self) -> usize {
        self.kernel.pow(3)
    }

    /// Input coordinate hit by output coordinate `o` and kernel tap `t`.
    #[inline]
    fn source(&self, o: usize, t: usize) -> Option<usize> {
        let pos = (o * self.stride + t) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < self.in_extent).then_some(pos as usize)
    }
}

/// Unfold one `[channels, in³]` volume into `[channels·k³, out³]`.
pub fn im2col(input: &[f64], channels: usize, g: &ConvGeometry, col: &mut [f64]) {
    let (n, m, k) = (g.in_extent, g.out_extent, g.kernel);
    let out_vol = g.out_volume();
    debug_assert_eq!(col.len(), channels * g.taps() * out_vol);
    for c in 0..channels {
        let plane = &input[c * g.in_volume()..(c + 1) * g.in_volume()];
        for ta in 0..k {
            for tb in 0..k {
                for tc in 0..k {
                    let row = ((c * k + ta) * k + tb) * k + tc;
                    let dst = &mut col[row * out_vol..(row + 1) * out_vol];
                    for oa in 0..m {
                        let sa = g.source(oa, ta);
                        for ob in 0..m {
                            let sb = g.source(ob, tb);
                            let base = (oa * m + ob) * m;
                            match (sa, sb) {
                                (Some(a), Some(b)) => {
                                    let src = (a * n + b) * n;
                                    for oc in 0..m {
                                        dst[base + oc] = match g.source(oc, tc) {
                                            Some(cc) => plane[src + cc],
                                            None => 0.0,
                                        };
                                    }
                                }
                                _ => dst[base..base + m].fill(0.0),
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `[channels·k³, out³]` back into `[channels, in³]`.
pub fn col2im(col: &[f64], channels: usize, g: &ConvGeometry, output: &mut [f64]) {
    let (n, m, k) = (g.in_extent, g.out_extent, g.kernel);
    let out_vol = g.out_volume();
    for c in 0..channels {
        let plane = &mut output[c * g.in_volume()..(c + 1) * g.in_volume()];
        for ta in 0..k {
            for tb in 0..k {
                for tc in 0..k {
                    let row = ((c * k + ta) * k + tb) * k + tc;
                    let src = &col[row * out_vol..(row + 1) * out_vol];
                    for oa in 0..m {
                        let Some(a) = g.source(oa, ta) else { continue };
                        for ob in 0..m {
                            let Some(b) = g.source(ob, tb) else { continue };
                            let base = (oa * m + ob) * m;
                            let dst = (a * n + b) * n;
                            for oc in 0..m {
                                if let Some(cc) = g.source(oc, tc) {
                                    plane[dst + cc] += src[base + oc];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `c = beta·c + op(a)·op(b)` for row-major matrices, where `op` optionally transposes.
/// `a` is `m×k` after `op`, `b` is `k×n` after `op`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold exactly m·k, k·n and m·n elements and the
    // strides above address them in bounds for both layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward cross-correlation of one batch element.
/// `input: [c_in, in³]`, `kernel: [c_out, c_in, k³]`, `output: [c_out, out³]` (overwritten).
pub fn conv3d_forward(
    input: &[f64],
    kernel: &[f64],
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
    output: &mut [f64],
) {
    let rows = c_in * g.taps();
    let mut col = vec![0.0; rows * g.out_volume()];
    im2col(input, c_in, g, &mut col);
    gemm(c_out, rows, g.out_volume(), kernel, false, &col, false, 0.0, output);
}

/// Gradients of [`conv3d_forward`]; both gradient buffers are accumulated into.
#[allow(clippy::too_many_arguments)]
pub fn conv3d_backward(
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
    grad_input: Option<&mut [f64]>,
    grad_kernel: Option<&mut [f64]>,
) {
    let rows = c_in * g.taps();
    let vol = g.out_volume();
    if let Some(gk) = grad_kernel {
        let mut col = vec![0.0; rows * vol];
        im2col(input, c_in, g, &mut col);
        gemm(c_out, vol, rows, grad_out, false, &col, true, 1.0, gk);
    }
    if let Some(gi) = grad_input {
        let mut dcol = vec![0.0; rows * vol];
        gemm(rows, c_out, vol, kernel, true, grad_out, false, 0.0, &mut dcol);
        col2im(&dcol, c_in, g, gi);
    }
}

/// Transposed convolution of one batch element.
/// `input: [c_in, out³]`, `kernel: [c_in, c_out, k³]`, `output: [c_out, in³]` (overwritten).
pub fn conv3d_transposed_forward(
    input: &[f64],
    kernel: &[f64],
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
    output: &mut [f64],
) {
    let rows = c_out * g.taps();
    let mut col = vec![0.0; rows * g.out_volume()];
    gemm(rows, c_in, g.out_volume(), kernel, true, input, false, 0.0, &mut col);
    output.fill(0.0);
    col2im(&col, c_out, g, output);
}

/// Gradients of [`conv3d_transposed_forward`]; accumulated into the buffers.
#[allow(clippy::too_many_arguments)]
pub fn conv3d_transposed_backward(
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
    grad_input: Option<&mut [f64]>,
    grad_kernel: Option<&mut [f64]>,
) {
    let rows = c_out * g.taps();
    let vol = g.out_volume();
    let mut dcol = vec![0.0; rows * vol];
    im2col(grad_out, c_out, g, &mut dcol);
    if let Some(gi) = grad_input {
        gemm(c_in, rows, vol, kernel, false, &dcol, false, 1.0, gi);
    }
    if let Some(gk) = grad_kernel {
        gemm(c_in, vol, rows, input, false, &dcol, true, 1.0, gk);
    }
}

/// Loop-based cross-correlation; reference for [`conv3d_forward`].
pub fn direct_conv3d(
    input: &[f64],
    kernel: &[f64],
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let (n, m, k) = (g.in_extent, g.out_extent, g.kernel);
    let mut out = vec![0.0; c_out * m * m * m];
    for co in 0..c_out {
        for oa in 0..m {
            for ob in 0..m {
                for oc in 0..m {
                    let mut acc = 0.0;
                    for ci in 0..c_in {
                        for ta in 0..k {
                            let Some(a) = g.source(oa, ta) else { continue };
                            for tb in 0..k {
                                let Some(b) = g.source(ob, tb) else { continue };
                                for tc in 0..k {
                                    let Some(c) = g.source(oc, tc) else { continue };
                                    let w = kernel[(((co * c_in + ci) * k + ta) * k + tb) * k + tc];
                                    acc += w * input[((ci * n + a) * n + b) * n + c];
                                }
                            }
                        }
                    }
                    out[((co * m + oa) * m + ob) * m + oc] = acc;
                }
            }
        }
    }
    out
}

/// Loop-based transposed convolution (scatter form); reference for
/// [`conv3d_transposed_forward`].
pub fn direct_conv3d_transposed(
    input: &[f64],
    kernel: &[f64],
    c_in: usize,
    c_out: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let (n, m, k) = (g.in_extent, g.out_extent, g.kernel);
    let mut out = vec![0.0; c_out * n * n * n];
    for ci in 0..c_in {
        for ia in 0..m {
            for ib in 0..m {
                for ic in 0..m {
                    let x = input[((ci * m + ia) * m + ib) * m + ic];
                    for co in 0..c_out {
                        for ta in 0..k {
                            let Some(a) = g.source(ia, ta) else { continue };
                            for tb in 0..k {
                                let Some(b) = g.source(ib, tb) else { continue };
                                for tc in 0..k {
                                    let Some(c) = g.source(ic, tc) else { continue };
                                    let w = kernel[(((ci * c_out + co) * k + ta) * k + tb) * k + tc];
                                    out[((co * n + a) * n + b) * n + c] += w * x;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}
