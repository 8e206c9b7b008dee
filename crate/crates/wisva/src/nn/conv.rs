//! 2D convolution and its adjoint with analytic backward passes.
//!
//! Both layers lower onto an im2col buffer so every hot loop runs over
//! contiguous rows: forward and input-gradient are GEMM-style axpy sweeps,
//! weight gradients are row dot products. All reductions run in a fixed
//! order, so results do not depend on threading or call patterns.

use super::buffer::{Real, TensorBuffer};
use super::NnError;

/// Geometry of one conv application: input (h, w), kernel k, stride, pad,
/// output (oh, ow) with `oh = (h + 2p - k)/s + 1`.
#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn gather(h: usize, w: usize, k: usize, s: usize, p: usize) -> Result<Self, NnError> {
        if h + 2 * p < k || w + 2 * p < k {
            return Err(NnError::ShapeMismatch(format!(
                "input {h}x{w} smaller than kernel {k} at pad {p}"
            )));
        }
        Ok(Self { h, w, k, s, p, oh: (h + 2 * p - k) / s + 1, ow: (w + 2 * p - k) / s + 1 })
    }

    /// Output rows `oq` for kernel offset `kq` keeping `oq*s + kq - p`
    /// inside `[0, len)`.
    #[inline]
    fn valid(&self, kq: usize, len: usize, out_len: usize) -> (usize, usize) {
        let lo = if kq < self.p { (self.p - kq + self.s - 1) / self.s } else { 0 };
        let max_iq = len as isize - 1 - kq as isize + self.p as isize;
        if max_iq < 0 {
            return (0, 0);
        }
        let hi = (max_iq as usize / self.s + 1).min(out_len);
        (lo.min(hi), hi)
    }
}

/// Fills `cols` (dims [ch * k * k, oh * ow]) with the unrolled receptive
/// fields of one input plane set `x` (dims [ch, h, w], flat).
fn im2col<E: Real>(x: &[E], ch: usize, g: ConvGeom, cols: &mut [E]) {
    let plane_out = g.oh * g.ow;
    debug_assert_eq!(cols.len(), ch * g.k * g.k * plane_out);
    cols.fill(E::zero());
    for c in 0..ch {
        let x_plane = &x[c * g.h * g.w..][..g.h * g.w];
        for ky in 0..g.k {
            let (oy_lo, oy_hi) = g.valid(ky, g.h, g.oh);
            for kx in 0..g.k {
                let row = &mut cols[((c * g.k + ky) * g.k + kx) * plane_out..][..plane_out];
                let (ox_lo, ox_hi) = g.valid(kx, g.w, g.ow);
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.s + ky - g.p;
                    let x_row = &x_plane[iy * g.w..][..g.w];
                    let dst = &mut row[oy * g.ow + ox_lo..oy * g.ow + ox_hi];
                    let base = ox_lo * g.s + kx - g.p;
                    if g.s == 1 {
                        dst.copy_from_slice(&x_row[base..base + dst.len()]);
                    } else {
                        for (d, src) in dst.iter_mut().zip(x_row[base..].iter().step_by(g.s)) {
                            *d = *src;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back onto the input plane set: the adjoint of
/// [`im2col`].
fn col2im_add<E: Real>(cols: &[E], ch: usize, g: ConvGeom, x: &mut [E]) {
    let plane_out = g.oh * g.ow;
    for c in 0..ch {
        let x_plane = &mut x[c * g.h * g.w..][..g.h * g.w];
        for ky in 0..g.k {
            let (oy_lo, oy_hi) = g.valid(ky, g.h, g.oh);
            for kx in 0..g.k {
                let row = &cols[((c * g.k + ky) * g.k + kx) * plane_out..][..plane_out];
                let (ox_lo, ox_hi) = g.valid(kx, g.w, g.ow);
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.s + ky - g.p;
                    let x_row = &mut x_plane[iy * g.w..][..g.w];
                    let src = &row[oy * g.ow + ox_lo..oy * g.ow + ox_hi];
                    let base = ox_lo * g.s + kx - g.p;
                    if g.s == 1 {
                        for (d, &v) in x_row[base..base + src.len()].iter_mut().zip(src) {
                            *d += v;
                        }
                    } else {
                        for (d, &v) in x_row[base..].iter_mut().step_by(g.s).zip(src) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// `y[r] += sum_q w[r*qn + q] * cols[q]` for every output row r: the GEMM at
/// the heart of both conv directions. `y` rows and `cols` rows share length
/// `width`.
fn gemm_rows_axpy<E: Real>(w: &[E], qn: usize, cols: &[E], y: &mut [E], width: usize) {
    debug_assert_eq!(cols.len(), qn * width);
    for (r, y_row) in y.chunks_exact_mut(width).enumerate() {
        let w_row = &w[r * qn..][..qn];
        for (q, &wv) in w_row.iter().enumerate() {
            if wv == E::zero() {
                continue;
            }
            let c_row = &cols[q * width..][..width];
            for (a, &b) in y_row.iter_mut().zip(c_row) {
                *a += wv * b;
            }
        }
    }
}

/// `gw[r*qn + q] += dot(gy[r], cols[q])`.
fn gemm_rows_dot<E: Real>(gy: &[E], rows: usize, cols: &[E], qn: usize, width: usize, gw: &mut [E]) {
    for r in 0..rows {
        let gy_row = &gy[r * width..][..width];
        let gw_row = &mut gw[r * qn..][..qn];
        for (q, gwv) in gw_row.iter_mut().enumerate() {
            *gwv += super::dense::dot_unrolled(gy_row, &cols[q * width..][..width]);
        }
    }
}

/// `out[q] += sum_r w[r*qn + q] * src[r]`: the transposed GEMM used for
/// input gradients (and the conv-transpose forward).
fn gemm_rows_axpy_t<E: Real>(w: &[E], rows: usize, qn: usize, src: &[E], out: &mut [E], width: usize) {
    for r in 0..rows {
        let s_row = &src[r * width..][..width];
        let w_row = &w[r * qn..][..qn];
        for (q, &wv) in w_row.iter().enumerate() {
            if wv == E::zero() {
                continue;
            }
            let o_row = &mut out[q * width..][..width];
            for (a, &b) in o_row.iter_mut().zip(s_row) {
                *a += wv * b;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads<E = f32> {
    pub weight: TensorBuffer<E>,
    pub bias: TensorBuffer<E>,
}

/// Cross-correlating convolution layer. Weight dims are
/// (out_ch, in_ch, k, k); output H' = (H + 2*pad - K)/stride + 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<E = f32> {
    pub weight: TensorBuffer<E>,
    pub bias: TensorBuffer<E>,
    pub stride: usize,
    pub pad: usize,
}

impl<E: Real> Conv2d<E> {
    pub fn zeros(out_ch: usize, in_ch: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            weight: TensorBuffer::zeros(vec![out_ch, in_ch, k, k]),
            bias: TensorBuffer::zeros(vec![out_ch]),
            stride,
            pad,
        }
    }

    fn check(&self, x: &TensorBuffer<E>) -> Result<(usize, usize, usize, ConvGeom), NnError> {
        let (n, ic, h, w) = x.dims4();
        let wd = self.weight.dims();
        if wd.len() != 4 || wd[2] != wd[3] {
            return Err(NnError::ShapeMismatch(format!("conv weight dims {wd:?}")));
        }
        if wd[1] != ic {
            return Err(NnError::ShapeMismatch(format!(
                "conv input has {ic} channels, weight expects {}",
                wd[1]
            )));
        }
        Ok((n, ic, wd[0], ConvGeom::gather(h, w, wd[2], self.stride, self.pad)?))
    }

    pub fn out_dims(&self, x: &TensorBuffer<E>) -> Result<Vec<usize>, NnError> {
        let (n, _, oc, g) = self.check(x)?;
        Ok(vec![n, oc, g.oh, g.ow])
    }

    pub fn forward(&self, x: &TensorBuffer<E>) -> Result<TensorBuffer<E>, NnError> {
        let (n, ic, oc, g) = self.check(x)?;
        let plane_out = g.oh * g.ow;
        let qn = ic * g.k * g.k;
        let mut y = TensorBuffer::zeros(vec![n, oc, g.oh, g.ow]);
        let mut cols = vec![E::zero(); qn * plane_out];
        for bn in 0..n {
            im2col(&x.data()[bn * ic * g.h * g.w..][..ic * g.h * g.w], ic, g, &mut cols);
            let y_batch = &mut y.data_mut()[bn * oc * plane_out..][..oc * plane_out];
            for (o, y_plane) in y_batch.chunks_exact_mut(plane_out).enumerate() {
                y_plane.fill(self.bias.data()[o]);
            }
            gemm_rows_axpy(self.weight.data(), qn, &cols, y_batch, plane_out);
        }
        Ok(y)
    }

    /// Gradients w.r.t. input and parameters given upstream `gy`.
    pub fn backward(
        &self,
        x: &TensorBuffer<E>,
        gy: &TensorBuffer<E>,
    ) -> Result<(TensorBuffer<E>, Conv2dGrads<E>), NnError> {
        let (n, ic, oc, g) = self.check(x)?;
        if gy.dims() != [n, oc, g.oh, g.ow] {
            return Err(NnError::ShapeMismatch(format!(
                "conv upstream dims {:?}, expected {:?}",
                gy.dims(),
                [n, oc, g.oh, g.ow]
            )));
        }
        let plane_out = g.oh * g.ow;
        let plane_in = g.h * g.w;
        let qn = ic * g.k * g.k;

        let mut gx = TensorBuffer::zeros(vec![n, ic, g.h, g.w]);
        let mut gw = TensorBuffer::zeros(self.weight.dims().to_vec());
        let mut gb = TensorBuffer::zeros(vec![oc]);
        let mut cols = vec![E::zero(); qn * plane_out];
        let mut gcols = vec![E::zero(); qn * plane_out];
        for bn in 0..n {
            let x_batch = &x.data()[bn * ic * plane_in..][..ic * plane_in];
            let gy_batch = &gy.data()[bn * oc * plane_out..][..oc * plane_out];

            im2col(x_batch, ic, g, &mut cols);
            gemm_rows_dot(gy_batch, oc, &cols, qn, plane_out, gw.data_mut());

            gcols.fill(E::zero());
            gemm_rows_axpy_t(self.weight.data(), oc, qn, gy_batch, &mut gcols, plane_out);
            col2im_add(&gcols, ic, g, &mut gx.data_mut()[bn * ic * plane_in..][..ic * plane_in]);

            for (o, gy_plane) in gy_batch.chunks_exact(plane_out).enumerate() {
                gb.data_mut()[o] += gy_plane.iter().copied().sum();
            }
        }
        Ok((gx, Conv2dGrads { weight: gw, bias: gb }))
    }
}

/// Transposed convolution: the adjoint of [`Conv2d`]'s forward map. Weight
/// dims are (in_ch, out_ch, k, k); output H' = (H - 1)*stride + K - 2*pad.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<E = f32> {
    pub weight: TensorBuffer<E>,
    pub bias: TensorBuffer<E>,
    pub stride: usize,
    pub pad: usize,
}

impl<E: Real> ConvTranspose2d<E> {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            weight: TensorBuffer::zeros(vec![in_ch, out_ch, k, k]),
            bias: TensorBuffer::zeros(vec![out_ch]),
            stride,
            pad,
        }
    }

    /// Geometry is phrased over the *output* map, where the equivalent
    /// gather convolution lives.
    fn check(&self, x: &TensorBuffer<E>) -> Result<(usize, usize, usize, ConvGeom), NnError> {
        let (n, ic, h, w) = x.dims4();
        let wd = self.weight.dims();
        if wd.len() != 4 || wd[2] != wd[3] {
            return Err(NnError::ShapeMismatch(format!("conv-transpose weight dims {wd:?}")));
        }
        if wd[0] != ic {
            return Err(NnError::ShapeMismatch(format!(
                "conv-transpose input has {ic} channels, weight expects {}",
                wd[0]
            )));
        }
        let k = wd[2];
        let oh_full = (h - 1) * self.stride + k;
        let ow_full = (w - 1) * self.stride + k;
        if oh_full <= 2 * self.pad || ow_full <= 2 * self.pad {
            return Err(NnError::ShapeMismatch(format!(
                "conv-transpose output collapses at pad {}",
                self.pad
            )));
        }
        let oh = oh_full - 2 * self.pad;
        let ow = ow_full - 2 * self.pad;
        // Gather geometry from the big (oh, ow) map down to (h, w).
        let g = ConvGeom { h: oh, w: ow, k, s: self.stride, p: self.pad, oh: h, ow: w };
        Ok((n, ic, wd[1], g))
    }

    pub fn out_dims(&self, x: &TensorBuffer<E>) -> Result<Vec<usize>, NnError> {
        let (n, _, oc, g) = self.check(x)?;
        Ok(vec![n, oc, g.h, g.w])
    }

    pub fn forward(&self, x: &TensorBuffer<E>) -> Result<TensorBuffer<E>, NnError> {
        let (n, ic, oc, g) = self.check(x)?;
        let plane_small = g.oh * g.ow; // input positions
        let plane_big = g.h * g.w; // output positions
        let qn = oc * g.k * g.k;
        let mut y = TensorBuffer::zeros(vec![n, oc, g.h, g.w]);
        let mut cols = vec![E::zero(); qn * plane_small];
        for bn in 0..n {
            let x_batch = &x.data()[bn * ic * plane_small..][..ic * plane_small];
            cols.fill(E::zero());
            gemm_rows_axpy_t(self.weight.data(), ic, qn, x_batch, &mut cols, plane_small);
            let y_batch = &mut y.data_mut()[bn * oc * plane_big..][..oc * plane_big];
            for (o, y_plane) in y_batch.chunks_exact_mut(plane_big).enumerate() {
                y_plane.fill(self.bias.data()[o]);
            }
            col2im_add(&cols, oc, g, y_batch);
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        x: &TensorBuffer<E>,
        gy: &TensorBuffer<E>,
    ) -> Result<(TensorBuffer<E>, Conv2dGrads<E>), NnError> {
        let (n, ic, oc, g) = self.check(x)?;
        if gy.dims() != [n, oc, g.h, g.w] {
            return Err(NnError::ShapeMismatch(format!(
                "conv-transpose upstream dims {:?}, expected {:?}",
                gy.dims(),
                [n, oc, g.h, g.w]
            )));
        }
        let plane_small = g.oh * g.ow;
        let plane_big = g.h * g.w;
        let qn = oc * g.k * g.k;

        let mut gx = TensorBuffer::zeros(vec![n, ic, g.oh, g.ow]);
        let mut gw = TensorBuffer::zeros(self.weight.dims().to_vec());
        let mut gb = TensorBuffer::zeros(vec![oc]);
        let mut cols = vec![E::zero(); qn * plane_small];
        for bn in 0..n {
            let x_batch = &x.data()[bn * ic * plane_small..][..ic * plane_small];
            let gy_batch = &gy.data()[bn * oc * plane_big..][..oc * plane_big];

            // Unroll gy's receptive fields; gx is then a plain GEMM and gw a
            // row-dot against the input.
            im2col(gy_batch, oc, g, &mut cols);
            let gx_batch = &mut gx.data_mut()[bn * ic * plane_small..][..ic * plane_small];
            gemm_rows_axpy(self.weight.data(), qn, &cols, gx_batch, plane_small);
            gemm_rows_dot(x_batch, ic, &cols, qn, plane_small, gw.data_mut());

            for (o, gy_plane) in gy_batch.chunks_exact(plane_big).enumerate() {
                gb.data_mut()[o] += gy_plane.iter().copied().sum();
            }
        }
        Ok((gx, Conv2dGrads { weight: gw, bias: gb }))
    }
}
