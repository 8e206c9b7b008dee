//! Fully connected layer.

use super::buffer::{Real, TensorBuffer};
use super::NnError;

/// Dot product with eight independent accumulators so the reduction
/// vectorizes; the summation order is fixed, keeping results deterministic.
#[inline]
pub(crate) fn dot_unrolled<E: Real>(a: &[E], b: &[E]) -> E {
    let mut acc = [E::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (ar, br) = (&a[8 * i..8 * i + 8], &b[8 * i..8 * i + 8]);
        for lane in 0..8 {
            acc[lane] += ar[lane] * br[lane];
        }
    }
    let mut tail = E::zero();
    for k in 8 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<E = f32> {
    pub weight: TensorBuffer<E>,
    pub bias: TensorBuffer<E>,
}

/// `y = x * w + b` with x: (N, F), w: (F, G), b: (G).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<E = f32> {
    pub weight: TensorBuffer<E>,
    pub bias: TensorBuffer<E>,
}

impl<E: Real> Dense<E> {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Self {
            weight: TensorBuffer::zeros(vec![in_features, out_features]),
            bias: TensorBuffer::zeros(vec![out_features]),
        }
    }

    fn check(&self, x: &TensorBuffer<E>) -> Result<(usize, usize, usize), NnError> {
        let (n, f) = x.dims2();
        let (wf, g) = self.weight.dims2();
        if f != wf {
            return Err(NnError::ShapeMismatch(format!(
                "dense input has {f} features, weight expects {wf}"
            )));
        }
        Ok((n, f, g))
    }

    pub fn forward(&self, x: &TensorBuffer<E>) -> Result<TensorBuffer<E>, NnError> {
        let (n, f, g) = self.check(x)?;
        let mut y = TensorBuffer::zeros(vec![n, g]);
        let xd = x.data();
        let wd = self.weight.data();
        let bd = self.bias.data();
        let yd = y.data_mut();
        for bn in 0..n {
            let y_row = &mut yd[bn * g..][..g];
            y_row.copy_from_slice(bd);
            let x_row = &xd[bn * f..][..f];
            for (fi, &xv) in x_row.iter().enumerate() {
                let w_row = &wd[fi * g..][..g];
                for (yv, &wv) in y_row.iter_mut().zip(w_row) {
                    *yv += xv * wv;
                }
            }
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        x: &TensorBuffer<E>,
        gy: &TensorBuffer<E>,
    ) -> Result<(TensorBuffer<E>, DenseGrads<E>), NnError> {
        let (n, f, g) = self.check(x)?;
        if gy.dims() != [n, g] {
            return Err(NnError::ShapeMismatch(format!(
                "dense upstream dims {:?}, expected {:?}",
                gy.dims(),
                [n, g]
            )));
        }
        let xd = x.data();
        let wd = self.weight.data();
        let gyd = gy.data();

        let mut gx = TensorBuffer::zeros(vec![n, f]);
        let mut gw = TensorBuffer::zeros(vec![f, g]);
        let mut gb = TensorBuffer::zeros(vec![g]);
        let gxd = gx.data_mut();
        let gwd = gw.data_mut();
        let gbd = gb.data_mut();

        for bn in 0..n {
            let gy_row = &gyd[bn * g..][..g];
            let x_row = &xd[bn * f..][..f];
            let gx_row = &mut gxd[bn * f..][..f];
            for fi in 0..f {
                let w_row = &wd[fi * g..][..g];
                gx_row[fi] = dot_unrolled(gy_row, w_row);
                let xv = x_row[fi];
                let gw_row = &mut gwd[fi * g..][..g];
                for (gwv, &gv) in gw_row.iter_mut().zip(gy_row) {
                    *gwv += xv * gv;
                }
            }
            for (gbv, &gv) in gbd.iter_mut().zip(gy_row) {
                *gbv += gv;
            }
        }
        Ok((gx, DenseGrads { weight: gw, bias: gb }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let mut layer = Dense::<f64>::zeros(3, 3);
        for i in 0..3 {
            layer.weight.data_mut()[i * 3 + i] = 1.0;
        }
        let x = TensorBuffer::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]);
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn hand_computed_example() {
        let layer = Dense {
            weight: TensorBuffer::from_vec(vec![2, 1], vec![1.0f64, 1.0]),
            bias: TensorBuffer::from_vec(vec![1], vec![0.5f64]),
        };
        let x = TensorBuffer::from_vec(vec![1, 2], vec![1.0, 2.0]);
        assert_eq!(layer.forward(&x).unwrap().data(), &[3.5]);
    }

    #[test]
    fn rejects_feature_mismatch() {
        let layer = Dense::<f64>::zeros(3, 2);
        let x = TensorBuffer::zeros(vec![1, 4]);
        assert!(matches!(layer.forward(&x), Err(NnError::ShapeMismatch(_))));
    }
}
