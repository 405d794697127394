use super::array::DenseArray;
use super::gemm::{gemm, product, MatRef};
use crate::error::{Error, Result};

/// Affine map `y = W x + b` with `W: [out, in]`, `b: [out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weights: DenseArray,
    pub bias: DenseArray,
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub input: DenseArray,
    pub weights: DenseArray,
    pub bias: DenseArray,
}

impl LinearLayer {
    pub fn new(weights: DenseArray, bias: DenseArray) -> Result<Self> {
        let [out_dim, _in_dim] = weights.shape() else {
            return Err(Error::shape(format!(
                "linear weights must be [out, in], got {:?}",
                weights.shape()
            )));
        };
        if bias.shape() != [*out_dim] {
            return Err(Error::shape(format!(
                "linear bias must be [{out_dim}], got {:?}",
                bias.shape()
            )));
        }
        Ok(LinearLayer { weights, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearLayer::new(
            DenseArray::zeros(&[out_dim, in_dim]),
            DenseArray::zeros(&[out_dim]),
        )
        .expect("valid linear geometry")
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    /// Rows of the input: 1 for `[in]`, `B` for `[B, in]`.
    fn rows(&self, input: &DenseArray) -> Result<usize> {
        match input.shape() {
            [d] if *d == self.in_dim() => Ok(1),
            [b, d] if *d == self.in_dim() => Ok(*b),
            other => Err(Error::shape(format!(
                "linear expects [{0}] or [B, {0}], got {other:?}",
                self.in_dim()
            ))),
        }
    }

    fn out_shape(&self, input: &DenseArray) -> Vec<usize> {
        match input.shape() {
            [_] => vec![self.out_dim()],
            [b, _] => vec![*b, self.out_dim()],
            _ => unreachable!("validated by rows()"),
        }
    }

    pub fn forward(&self, input: &DenseArray) -> Result<DenseArray> {
        let rows = self.rows(input)?;
        let (o, i) = (self.out_dim(), self.in_dim());
        let mut out = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            1.0,
            MatRef::new(input.data(), rows, i),
            MatRef::new(self.weights.data(), o, i).t(),
            1.0,
            &mut out,
        );
        DenseArray::from_vec(&self.out_shape(input), out)
    }

    pub fn backward(&self, input: &DenseArray, grad_out: &DenseArray) -> Result<LinearGrads> {
        let rows = self.rows(input)?;
        if grad_out.shape() != self.out_shape(input).as_slice() {
            return Err(Error::shape(format!(
                "linear grad_out must be {:?}, got {:?}",
                self.out_shape(input),
                grad_out.shape()
            )));
        }
        let (o, i) = (self.out_dim(), self.in_dim());
        let dy = MatRef::new(grad_out.data(), rows, o);

        let grad_in = product(1.0, dy, MatRef::new(self.weights.data(), o, i));

        let grad_w = product(1.0, dy.t(), MatRef::new(input.data(), rows, i));

        let mut grad_b = vec![0.0; o];
        for row in grad_out.data().chunks_exact(o) {
            for (g, v) in grad_b.iter_mut().zip(row) {
                *g += v;
            }
        }
        Ok(LinearGrads {
            input: DenseArray::from_vec(input.shape(), grad_in)?,
            weights: DenseArray::from_vec(&[o, i], grad_w)?,
            bias: DenseArray::from_vec(&[o], grad_b)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let layer = LinearLayer::new(
            DenseArray::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            DenseArray::zeros(&[2]),
        )
        .unwrap();
        let x = DenseArray::from_vec(&[2], vec![-3.5, 2.25]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn small_matrix_product() {
        let layer = LinearLayer::new(
            DenseArray::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            DenseArray::zeros(&[2]),
        )
        .unwrap();
        let x = DenseArray::from_vec(&[2], vec![1.0, 1.0]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn batch_rows_match_single_rows() {
        let layer = LinearLayer::new(
            DenseArray::from_fn(&[3, 4], |i| (i as f64 * 0.7).sin()),
            DenseArray::from_fn(&[3], |i| i as f64),
        )
        .unwrap();
        let batch = DenseArray::from_fn(&[2, 4], |i| (i as f64).cos());
        let out = layer.forward(&batch).unwrap();
        for r in 0..2 {
            let row = DenseArray::from_vec(&[4], batch.data()[r * 4..(r + 1) * 4].to_vec()).unwrap();
            let single = layer.forward(&row).unwrap();
            assert_eq!(single.data(), &out.data()[r * 3..(r + 1) * 3]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let layer = LinearLayer::zeros(3, 2);
        assert!(matches!(
            layer.forward(&DenseArray::zeros(&[4])),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            layer.backward(&DenseArray::zeros(&[3]), &DenseArray::zeros(&[3])),
            Err(Error::Shape(_))
        ));
    }
}
