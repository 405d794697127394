//! Seeded parameter initialization: uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
//! zero biases, LSTM forget-gate bias 1.

use rand::Rng;
use rand_distr::Uniform;

use super::{ConvLayer, DenseArray, LinearLayer, LstmCell};

pub fn uniform_fan_in<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> DenseArray {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    DenseArray::from_fn(shape, |_| rng.sample(dist))
}

pub fn conv<R: Rng + ?Sized>(rng: &mut R, in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> ConvLayer {
    let weights = uniform_fan_in(rng, &[out_ch, in_ch, kernel, kernel], in_ch * kernel * kernel);
    ConvLayer::new(weights, DenseArray::zeros(&[out_ch]), stride).expect("valid conv geometry")
}

pub fn linear<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize) -> LinearLayer {
    let weights = uniform_fan_in(rng, &[out_dim, in_dim], in_dim);
    LinearLayer::new(weights, DenseArray::zeros(&[out_dim])).expect("valid linear geometry")
}

pub fn lstm<R: Rng + ?Sized>(rng: &mut R, input_dim: usize, hidden: usize) -> LstmCell {
    let w_ih = uniform_fan_in(rng, &[4 * hidden, input_dim], input_dim);
    let w_hh = uniform_fan_in(rng, &[4 * hidden, hidden], hidden);
    let mut bias = DenseArray::zeros(&[4 * hidden]);
    bias.data_mut()[hidden..2 * hidden].fill(1.0);
    LstmCell::new(w_ih, w_hh, bias).expect("valid lstm geometry")
}
