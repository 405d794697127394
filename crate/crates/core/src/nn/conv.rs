use super::array::DenseArray;
use super::gemm::{product, MatRef};
use crate::error::{Error, Result};

/// Valid (unpadded) 2-D convolution with square kernels.
///
/// Weights are `[out_ch, in_ch, k, k]`, bias is `[out_ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weights: DenseArray,
    pub bias: DenseArray,
    pub stride: usize,
}

/// Gradients of a scalar loss w.r.t. a convolution's input and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    /// `None` when the caller asked to skip the input gradient.
    pub input: Option<DenseArray>,
    pub weights: DenseArray,
    pub bias: DenseArray,
}

/// Patch matrix of one forward pass plus the input shape it came from.
#[derive(Debug, Clone)]
pub struct ConvColumns {
    cols: Vec<f64>,
    input_shape: Vec<usize>,
}

/// Input geometry of a (possibly batched) convolution call.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
    batched: bool,
}

impl Geometry {
    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }
}

impl ConvLayer {
    pub fn new(weights: DenseArray, bias: DenseArray, stride: usize) -> Result<Self> {
        let ws = weights.shape();
        if ws.len() != 4 || ws[2] != ws[3] {
            return Err(Error::shape(format!(
                "conv weights must be [out, in, k, k], got {ws:?}"
            )));
        }
        if bias.shape() != [ws[0]] {
            return Err(Error::shape(format!(
                "conv bias must be [{}], got {:?}",
                ws[0],
                bias.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::shape("conv stride must be positive"));
        }
        Ok(ConvLayer {
            weights,
            bias,
            stride,
        })
    }

    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvLayer::new(
            DenseArray::zeros(&[out_channels, in_channels, kernel, kernel]),
            DenseArray::zeros(&[out_channels]),
            stride,
        )
        .expect("valid conv geometry")
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    /// Output spatial extent for an `h x w` input.
    pub fn output_extent(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        if h < k || w < k {
            return Err(Error::shape(format!(
                "kernel {k} larger than input {h}x{w}"
            )));
        }
        Ok(((h - k) / self.stride + 1, (w - k) / self.stride + 1))
    }

    fn geometry(&self, input: &DenseArray) -> Result<Geometry> {
        self.geometry_of(input.shape())
    }

    fn geometry_of(&self, shape: &[usize]) -> Result<Geometry> {
        let (batched, dims) = match shape {
            [c, h, w] => (false, [1, *c, *h, *w]),
            [b, c, h, w] => (true, [*b, *c, *h, *w]),
            other => {
                return Err(Error::shape(format!(
                    "conv input must be [C, H, W] or [B, C, H, W], got {other:?}"
                )))
            }
        };
        let [batch, channels, height, width] = dims;
        if channels != self.in_channels() {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {channels}",
                self.in_channels()
            )));
        }
        let (out_h, out_w) = self.output_extent(height, width)?;
        Ok(Geometry {
            batch,
            channels,
            height,
            width,
            out_h,
            out_w,
            batched,
        })
    }

    fn output_shape(&self, g: &Geometry) -> Vec<usize> {
        if g.batched {
            vec![g.batch, self.out_channels(), g.out_h, g.out_w]
        } else {
            vec![self.out_channels(), g.out_h, g.out_w]
        }
    }

    /// Patch matrix `[C*k*k, B*out_h*out_w]`, row-major.
    fn im2col(&self, input: &[f64], g: &Geometry) -> Vec<f64> {
        let k = self.kernel();
        let s = self.stride;
        let plane = g.out_plane();
        let cols = g.batch * plane;
        // rows (c, ki, kj), columns (b, oy, ox); every value is written once,
        // so no zero fill.
        let mut out = Vec::with_capacity(g.channels * k * k * cols);
        for c in 0..g.channels {
            for ki in 0..k {
                for kj in 0..k {
                    for b in 0..g.batch {
                        let src = &input[(b * g.channels + c) * g.height * g.width..];
                        for oy in 0..g.out_h {
                            let start = (oy * s + ki) * g.width + kj;
                            if s == 1 {
                                out.extend_from_slice(&src[start..start + g.out_w]);
                            } else {
                                out.extend((0..g.out_w).map(|ox| src[start + ox * s]));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn col2im(&self, columns: &[f64], g: &Geometry, grad_input: &mut [f64]) {
        let k = self.kernel();
        let s = self.stride;
        let plane = g.out_plane();
        let cols = g.batch * plane;
        for c in 0..g.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src_row = &columns[row * cols..(row + 1) * cols];
                    for b in 0..g.batch {
                        let dst = &mut grad_input[(b * g.channels + c) * g.height * g.width..];
                        let src = &src_row[b * plane..(b + 1) * plane];
                        for oy in 0..g.out_h {
                            let base = (oy * s + ki) * g.width + kj;
                            for ox in 0..g.out_w {
                                dst[base + ox * s] += src[oy * g.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Forward pass on `[C, H, W]` or `[B, C, H, W]`.
    pub fn forward(&self, input: &DenseArray) -> Result<DenseArray> {
        self.forward_cached(input).map(|(out, _)| out)
    }

    /// Forward pass that also returns the patch matrix, so the matching
    /// backward pass need not rebuild it.
    pub fn forward_cached(&self, input: &DenseArray) -> Result<(DenseArray, ConvColumns)> {
        let g = self.geometry(input)?;
        let o = self.out_channels();
        let plane = g.out_plane();
        let ckk = self.in_channels() * self.kernel() * self.kernel();
        let cols = self.im2col(input.data(), &g);

        // [O, B*P] then permute to [B, O, P].
        let mat = product(
            1.0,
            MatRef::new(self.weights.data(), o, ckk),
            MatRef::new(&cols, ckk, g.batch * plane),
        );
        let mut out = Vec::with_capacity(g.batch * o * plane);
        let bias = self.bias.data();
        for b in 0..g.batch {
            for (oc, &bo) in bias.iter().enumerate() {
                let src = &mat[(oc * g.batch + b) * plane..(oc * g.batch + b + 1) * plane];
                out.extend(src.iter().map(|v| v + bo));
            }
        }
        let out = DenseArray::from_vec(&self.output_shape(&g), out)?;
        Ok((
            out,
            ConvColumns {
                cols,
                input_shape: input.shape().to_vec(),
            },
        ))
    }

    /// Gradients w.r.t. input, weights and bias.
    pub fn backward(&self, input: &DenseArray, grad_out: &DenseArray) -> Result<ConvGrads> {
        self.backward_with(input, grad_out, true)
    }

    /// Like [`ConvLayer::backward`] but skips the input gradient when
    /// `want_input` is false (first layer of a network).
    pub fn backward_with(
        &self,
        input: &DenseArray,
        grad_out: &DenseArray,
        want_input: bool,
    ) -> Result<ConvGrads> {
        let g = self.geometry(input)?;
        let columns = ConvColumns {
            cols: self.im2col(input.data(), &g),
            input_shape: input.shape().to_vec(),
        };
        self.backward_cached(&columns, grad_out, want_input)
    }

    /// Backward pass from the patch matrix saved by [`ConvLayer::forward_cached`].
    pub fn backward_cached(
        &self,
        columns: &ConvColumns,
        grad_out: &DenseArray,
        want_input: bool,
    ) -> Result<ConvGrads> {
        let g = self.geometry_of(&columns.input_shape)?;
        let expected = self.output_shape(&g);
        if grad_out.shape() != expected.as_slice() {
            return Err(Error::shape(format!(
                "conv grad_out must be {expected:?}, got {:?}",
                grad_out.shape()
            )));
        }
        let o = self.out_channels();
        let plane = g.out_plane();
        let k = self.kernel();
        let ckk = self.in_channels() * k * k;
        let n = g.batch * plane;
        if columns.cols.len() != ckk * n {
            return Err(Error::shape("conv patch matrix does not match the layer"));
        }

        // [B, O, P] -> [O, B*P]
        let mut dmat = Vec::with_capacity(o * n);
        let go = grad_out.data();
        let mut grad_bias = vec![0.0; o];
        for (oc, gb) in grad_bias.iter_mut().enumerate() {
            for b in 0..g.batch {
                let src = &go[(b * o + oc) * plane..(b * o + oc + 1) * plane];
                dmat.extend_from_slice(src);
                *gb += src.iter().sum::<f64>();
            }
        }

        let grad_w = product(
            1.0,
            MatRef::new(&dmat, o, n),
            MatRef::new(&columns.cols, ckk, n).t(),
        );

        let grad_input = if want_input {
            let dcols = product(
                1.0,
                MatRef::new(self.weights.data(), o, ckk).t(),
                MatRef::new(&dmat, o, n),
            );
            let mut gi = vec![0.0; columns.input_shape.iter().product()];
            self.col2im(&dcols, &g, &mut gi);
            Some(DenseArray::from_vec(&columns.input_shape, gi)?)
        } else {
            None
        };

        Ok(ConvGrads {
            input: grad_input,
            weights: DenseArray::from_vec(self.weights.shape(), grad_w)?,
            bias: DenseArray::from_vec(&[o], grad_bias)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let layer = ConvLayer::new(
            DenseArray::filled(&[1, 1, 1, 1], 1.0),
            DenseArray::zeros(&[1]),
            1,
        )
        .unwrap();
        let input = DenseArray::from_fn(&[1, 4, 3], |i| i as f64 * 0.5 - 1.0);
        let out = layer.forward(&input).unwrap();
        assert_eq!(out, input);

        let grad_out = DenseArray::from_fn(&[1, 4, 3], |i| (i as f64).sin());
        let grads = layer.backward(&input, &grad_out).unwrap();
        assert_eq!(grads.input.unwrap(), grad_out);
    }

    #[test]
    fn two_by_two_sum() {
        let layer = ConvLayer::new(
            DenseArray::filled(&[1, 1, 2, 2], 1.0),
            DenseArray::zeros(&[1]),
            1,
        )
        .unwrap();
        let input = DenseArray::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = layer.forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[10.0]);
    }

    #[test]
    fn output_extent_of_first_encoder_layer() {
        let layer = ConvLayer::zeros(5, 16, 3, 2);
        let out = layer.forward(&DenseArray::zeros(&[5, 25, 25])).unwrap();
        assert_eq!(out.shape(), &[16, 12, 12]);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut layer = ConvLayer::zeros(3, 2, 3, 1);
        layer.weights = DenseArray::from_fn(&[2, 3, 3, 3], |i| (i as f64).cos());
        let input = DenseArray::from_fn(&[3, 4, 4], |i| (i as f64 * 0.3).sin());
        let grads = layer
            .backward(&input, &DenseArray::zeros(&[2, 2, 2]))
            .unwrap();
        assert_eq!(grads.input.unwrap().max_abs(), 0.0);
        assert_eq!(grads.weights.max_abs(), 0.0);
        assert_eq!(grads.bias.max_abs(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let layer = ConvLayer::zeros(3, 2, 3, 1);
        assert!(matches!(
            layer.forward(&DenseArray::zeros(&[2, 5, 5])),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            layer.forward(&DenseArray::zeros(&[3, 2, 5])),
            Err(Error::Shape(_))
        ));
        let input = DenseArray::zeros(&[3, 5, 5]);
        assert!(matches!(
            layer.backward(&input, &DenseArray::zeros(&[2, 2, 2])),
            Err(Error::Shape(_))
        ));
    }
}
