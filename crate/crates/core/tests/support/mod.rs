//! Slow, obviously-correct reimplementations shared by several test targets.
#![allow(dead_code)]

use afat::labeling::{iou, BBox};
use afat::nn::{ConvLayer, DenseArray, LstmCell};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseArray {
    DenseArray::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Direct 7-deep loop, no padding.
fn naive_conv(x: &[f64], (b, c, h, w): (usize, usize, usize, usize), wt: &[f64], bias: &[f64], o: usize, k: usize, s: usize) -> Vec<f64> {
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let mut out = vec![0.0; b * o * oh * ow];
    for n in 0..b {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                acc += wt[((oc * c + ic) * k + ky) * k + kx] * x[((n * c + ic) * h + y * s + ky) * w + xx * s + kx];
                            }
                        }
                    }
                    out[((n * o + oc) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}

/// Gradients of `sum(out * g)` by the chain rule written element by element.
fn naive_conv_grads(
    x: &[f64],
    (b, c, h, w): (usize, usize, usize, usize),
    wt: &[f64],
    g: &[f64],
    o: usize,
    k: usize,
    s: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; wt.len()];
    let mut db = vec![0.0; o];
    for n in 0..b {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let go = g[((n * o + oc) * oh + y) * ow + xx];
                    db[oc] += go;
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let wi = ((oc * c + ic) * k + ky) * k + kx;
                                let xi = ((n * c + ic) * h + y * s + ky) * w + xx * s + kx;
                                dw[wi] += go * x[xi];
                                dx[xi] += go * wt[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst deviation of the conv layer's forward and gradients from the loops.
pub fn conv_max_error(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let b = rng.random_range(1..4);
        let c = rng.random_range(1..6);
        let o = rng.random_range(1..7);
        let k = rng.random_range(1..5);
        let s = rng.random_range(1..4);
        let h = rng.random_range(k..k + 9);
        let w = rng.random_range(k..k + 9);
        let x = random(&mut rng, &[b, c, h, w]);
        let wt = random(&mut rng, &[o, c, k, k]);
        let bias = random(&mut rng, &[o]);
        let layer = ConvLayer::new(wt.clone(), bias.clone(), s).unwrap();
        let out = layer.forward(&x).unwrap();
        let want = naive_conv(x.data(), (b, c, h, w), wt.data(), bias.data(), o, k, s);
        worst = worst.max(max_diff(out.data(), &want));

        let g = random(&mut rng, out.shape());
        let grads = layer.backward(&x, &g).unwrap();
        let (dx, dw, db) = naive_conv_grads(x.data(), (b, c, h, w), wt.data(), g.data(), o, k, s);
        worst = worst
            .max(max_diff(grads.input.unwrap().data(), &dx))
            .max(max_diff(grads.weights.data(), &dw))
            .max(max_diff(grads.bias.data(), &db));
    }
    worst
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One step evaluated gate by gate with the standard library's `exp`/`tanh`.
fn gate_by_gate(w_ih: &[f64], w_hh: &[f64], bias: &[f64], x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nh = h.len();
    let ni = x.len();
    let pre = |row: usize| -> f64 {
        let mut z = bias[row];
        for k in 0..ni {
            z += w_ih[row * ni + k] * x[k];
        }
        for k in 0..nh {
            z += w_hh[row * nh + k] * h[k];
        }
        z
    };
    let mut h2 = vec![0.0; nh];
    let mut c2 = vec![0.0; nh];
    for j in 0..nh {
        let i = sig(pre(j));
        let f = sig(pre(nh + j));
        let g = pre(2 * nh + j).tanh();
        let o = sig(pre(3 * nh + j));
        c2[j] = f * c[j] + i * g;
        h2[j] = o * c2[j].tanh();
    }
    (h2, c2)
}

/// Worst deviation of one LSTM step from the gate-by-gate version.
pub fn lstm_step_max_error(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let ni = rng.random_range(1..9);
        let nh = rng.random_range(1..9);
        let w_ih = random(&mut rng, &[4 * nh, ni]);
        let w_hh = random(&mut rng, &[4 * nh, nh]);
        let bias = random(&mut rng, &[4 * nh]);
        let cell = LstmCell::new(w_ih.clone(), w_hh.clone(), bias.clone()).unwrap();
        let x = random(&mut rng, &[ni]);
        let h = random(&mut rng, &[nh]);
        let c = random(&mut rng, &[nh]);
        let (h2, c2) = cell.step(&x, &h, &c).unwrap();
        let (wh, wc) = gate_by_gate(w_ih.data(), w_hh.data(), bias.data(), x.data(), h.data(), c.data());
        worst = worst.max(max_diff(h2.data(), &wh)).max(max_diff(c2.data(), &wc));
    }
    worst
}

/// Same comparison for a batched sequence against a per-example unroll.
pub fn lstm_sequence_max_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let (ni, nh, steps, batch) = (5, 4, 7, 3);
    let w_ih = random(&mut rng, &[4 * nh, ni]);
    let w_hh = random(&mut rng, &[4 * nh, nh]);
    let bias = random(&mut rng, &[4 * nh]);
    let cell = LstmCell::new(w_ih.clone(), w_hh.clone(), bias.clone()).unwrap();
    let inputs = random(&mut rng, &[steps * batch, ni]);
    let projected = cell.project_inputs(&inputs).unwrap().reshape(&[steps, batch, 4 * nh]).unwrap();
    let trace = cell.forward_sequence(&projected).unwrap();
    for b in 0..batch {
        let (mut h, mut c) = (vec![0.0; nh], vec![0.0; nh]);
        for s in 0..steps {
            let row = s * batch + b;
            let x = &inputs.data()[row * ni..(row + 1) * ni];
            (h, c) = gate_by_gate(w_ih.data(), w_hh.data(), bias.data(), x, &h, &c);
            let got = &trace.hidden_at(s)[b * nh..(b + 1) * nh];
            worst = worst.max(max_diff(got, &h));
        }
    }
    worst
}

/// Counts unit pixels inside each box; exact for integer-aligned boxes.
fn pixel_iou(a: (i64, i64, i64, i64), b: (i64, i64, i64, i64)) -> f64 {
    let inside = |r: (i64, i64, i64, i64), px: i64, py: i64| px >= r.0 && px < r.0 + r.2 && py >= r.1 && py < r.1 + r.3;
    let (x0, y0) = (a.0.min(b.0), a.1.min(b.1));
    let (x1, y1) = ((a.0 + a.2).max(b.0 + b.2), (a.1 + a.3).max(b.1 + b.3));
    let (mut inter, mut union) = (0u64, 0u64);
    for py in y0..y1 {
        for px in x0..x1 {
            let (ia, ib) = (inside(a, px, py), inside(b, px, py));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Worst IOU deviation over `pairs` random integer boxes, and how many overlapped.
pub fn iou_max_error(pairs: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let to_box = |r: (i64, i64, i64, i64)| BBox::new(r.0 as f64 + r.2 as f64 / 2.0, r.1 as f64 + r.3 as f64 / 2.0, r.2 as f64, r.3 as f64);
    let mut overlapping = 0;
    for _ in 0..pairs {
        let mut rect = || (rng.random_range(0..40), rng.random_range(0..40), rng.random_range(1..25), rng.random_range(1..25));
        let (a, b) = (rect(), rect());
        let want = pixel_iou(a, b);
        let got = iou(&to_box(a), &to_box(b));
        worst = worst.max((got - want).abs());
        overlapping += (want > 0.0) as usize;
    }
    (worst, overlapping)
}
