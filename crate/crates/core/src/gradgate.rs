//! The gradient gate: every layer's analytic backward pass, and the full
//! network's, against central finite differences on seeded random instances.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::labeling::QualityLabel;
use crate::nn::gradcheck::{check_group, GradCheckReport, FD_STEP};
use crate::nn::{relu, relu_backward, weighted_cross_entropy, ClassWeights, ConvLayer, DenseArray, LinearLayer, LstmCell};
use crate::qpn::{FrameBatch, QpnArch, QpnModel, PARAM_NAMES};
use crate::seeding::{stream, Purpose};

/// Tolerance for layers that are affine (or piecewise affine) in every input.
pub const AFFINE_TOLERANCE: f64 = 1e-6;
/// Tolerance for layers with smooth nonlinearities and for the full network.
pub const SMOOTH_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradGateOptions {
    pub seed: u64,
    /// Accepted probes per parameter group.
    pub probes: usize,
    /// Scale one analytic gradient group by 1.05 before comparing, as a
    /// negative control proving the gate can fail.
    pub inject_fault: bool,
}

impl Default for GradGateOptions {
    fn default() -> Self {
        GradGateOptions {
            seed: 0,
            probes: 8,
            inject_fault: false,
        }
    }
}

fn random_array(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> DenseArray {
    DenseArray::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Up to `n` distinct coordinates of a group, shuffled; extra ones serve as
/// replacements for rejected probes.
fn candidates(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx
}

fn dot(a: &DenseArray, r: &DenseArray) -> f64 {
    a.data().iter().zip(r.data()).map(|(x, y)| x * y).sum()
}

fn perturbed(a: &DenseArray, idx: usize, delta: f64) -> DenseArray {
    let mut out = a.clone();
    out.data_mut()[idx] += delta;
    out
}

fn check_conv(report: &mut GradCheckReport, rng: &mut ChaCha8Rng, opts: &GradGateOptions, name: &str, stride: usize, input_shape: &[usize]) -> Result<()> {
    let layer = ConvLayer::new(random_array(rng, &[2, 3, 3, 3], 1.0), random_array(rng, &[2], 1.0), stride)?;
    let input = random_array(rng, input_shape, 1.0);
    let out = layer.forward(&input)?;
    let r = random_array(rng, out.shape(), 1.0);
    let g = layer.backward(&input, &r)?;
    let loss = |l: &ConvLayer, x: &DenseArray| l.forward(x).map(|y| dot(&y, &r)).ok();

    let gi = g.input.expect("input gradient requested");
    let c = candidates(rng, gi.len());
    report.push(check_group(&format!("{name}.input"), gi.data(), c, opts.probes, AFFINE_TOLERANCE, FD_STEP, |i, d| {
        loss(&layer, &perturbed(&input, i, d))
    }));
    let c = candidates(rng, g.weights.len());
    report.push(check_group(&format!("{name}.weight"), g.weights.data(), c, opts.probes, AFFINE_TOLERANCE, FD_STEP, |i, d| {
        let mut l = layer.clone();
        l.weights.data_mut()[i] += d;
        loss(&l, &input)
    }));
    let c = candidates(rng, g.bias.len());
    report.push(check_group(&format!("{name}.bias"), g.bias.data(), c, opts.probes, AFFINE_TOLERANCE, FD_STEP, |i, d| {
        let mut l = layer.clone();
        l.bias.data_mut()[i] += d;
        loss(&l, &input)
    }));
    Ok(())
}

fn check_linear(report: &mut GradCheckReport, rng: &mut ChaCha8Rng, opts: &GradGateOptions) -> Result<()> {
    let layer = LinearLayer::new(random_array(rng, &[4, 3], 1.0), random_array(rng, &[4], 1.0))?;
    let input = random_array(rng, &[2, 3], 1.0);
    let r = random_array(rng, &[2, 4], 1.0);
    let g = layer.backward(&input, &r)?;
    let loss = |l: &LinearLayer, x: &DenseArray| l.forward(x).map(|y| dot(&y, &r)).ok();
    let c = candidates(rng, g.input.len());
    report.push(check_group("linear.input", g.input.data(), c, opts.probes, AFFINE_TOLERANCE, FD_STEP, |i, d| {
        loss(&layer, &perturbed(&input, i, d))
    }));
    let c = candidates(rng, g.weights.len());
    report.push(check_group("linear.weight", g.weights.data(), c, opts.probes, AFFINE_TOLERANCE, FD_STEP, |i, d| {
        let mut l = layer.clone();
        l.weights.data_mut()[i] += d;
        loss(&l, &input)
    }));
    let c = candidates(rng, g.bias.len());
    report.push(check_group("linear.bias", g.bias.data(), c, opts.probes, AFFINE_TOLERANCE, FD_STEP, |i, d| {
        let mut l = layer.clone();
        l.bias.data_mut()[i] += d;
        loss(&l, &input)
    }));
    Ok(())
}

fn check_relu(report: &mut GradCheckReport, rng: &mut ChaCha8Rng, opts: &GradGateOptions) -> Result<()> {
    let x = DenseArray::from_fn(&[12], |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    });
    let r = random_array(rng, &[12], 1.0);
    let g = relu_backward(&x, &r)?;
    let c = candidates(rng, x.len());
    report.push(check_group("relu", g.data(), c, opts.probes, AFFINE_TOLERANCE, FD_STEP, |i, d| {
        let p = perturbed(&x, i, d);
        // a probe straddling zero is not differentiable
        if (p.data()[i] > 0.0) != (x.data()[i] > 0.0) {
            return None;
        }
        Some(dot(&relu(&p), &r))
    }));
    Ok(())
}

fn check_lstm_step(report: &mut GradCheckReport, rng: &mut ChaCha8Rng, opts: &GradGateOptions) -> Result<()> {
    let (ni, nh) = (2, 3);
    let cell = LstmCell::new(random_array(rng, &[4 * nh, ni], 1.0), random_array(rng, &[4 * nh, nh], 1.0), random_array(rng, &[4 * nh], 1.0))?;
    let x = random_array(rng, &[ni], 1.0);
    let h = random_array(rng, &[nh], 1.0);
    let c = random_array(rng, &[nh], 1.0);
    let rh = random_array(rng, &[nh], 1.0);
    let rc = random_array(rng, &[nh], 1.0);
    let g = cell.step_backward(&x, &h, &c, &rh, &rc)?;
    let loss = |cell: &LstmCell, x: &DenseArray, h: &DenseArray, c: &DenseArray| {
        cell.step(x, h, c).map(|(h2, c2)| dot(&h2, &rh) + dot(&c2, &rc)).ok()
    };
    let groups: [(&str, &DenseArray); 6] = [
        ("lstm_step.x", &g.x),
        ("lstm_step.h", &g.h),
        ("lstm_step.c", &g.c),
        ("lstm_step.w_ih", &g.w_ih),
        ("lstm_step.w_hh", &g.w_hh),
        ("lstm_step.bias", &g.bias),
    ];
    for (k, (name, grad)) in groups.into_iter().enumerate() {
        let cand = candidates(rng, grad.len());
        report.push(check_group(name, grad.data(), cand, opts.probes, SMOOTH_TOLERANCE, FD_STEP, |i, d| match k {
            0 => loss(&cell, &perturbed(&x, i, d), &h, &c),
            1 => loss(&cell, &x, &perturbed(&h, i, d), &c),
            2 => loss(&cell, &x, &h, &perturbed(&c, i, d)),
            _ => {
                let mut cl = cell.clone();
                let p = match k {
                    3 => &mut cl.w_ih,
                    4 => &mut cl.w_hh,
                    _ => &mut cl.bias,
                };
                p.data_mut()[i] += d;
                loss(&cl, &x, &h, &c)
            }
        }));
    }
    Ok(())
}

fn check_lstm_sequence(report: &mut GradCheckReport, rng: &mut ChaCha8Rng, opts: &GradGateOptions) -> Result<()> {
    let (ni, nh, steps, batch) = (3, 4, 5, 2);
    let cell = LstmCell::new(random_array(rng, &[4 * nh, ni], 0.8), random_array(rng, &[4 * nh, nh], 0.8), random_array(rng, &[4 * nh], 0.5))?;
    let inputs = random_array(rng, &[steps * batch, ni], 1.0);
    let r = random_array(rng, &[steps, batch, nh], 1.0);
    let loss = |cell: &LstmCell, x: &DenseArray| -> Option<f64> {
        let z = cell.project_inputs(x).ok()?.reshape(&[steps, batch, 4 * nh]).ok()?;
        let trace = cell.forward_sequence(&z).ok()?;
        Some(trace.hidden_states.iter().zip(r.data()).map(|(a, b)| a * b).sum())
    };
    let z = cell.project_inputs(&inputs)?.reshape(&[steps, batch, 4 * nh])?;
    let trace = cell.forward_sequence(&z)?;
    let seq = cell.backward_sequence(&trace, &r)?;
    let (dx, dw_ih, db) = cell.projection_backward(&inputs, &seq.projected.reshape(&[steps * batch, 4 * nh])?)?;
    let groups: [(&str, &DenseArray); 4] = [
        ("lstm_seq.input", &dx),
        ("lstm_seq.w_ih", &dw_ih),
        ("lstm_seq.w_hh", &seq.w_hh),
        ("lstm_seq.bias", &db),
    ];
    for (k, (name, grad)) in groups.into_iter().enumerate() {
        let cand = candidates(rng, grad.len());
        report.push(check_group(name, grad.data(), cand, opts.probes, SMOOTH_TOLERANCE, FD_STEP, |i, d| {
            if k == 0 {
                return loss(&cell, &perturbed(&inputs, i, d));
            }
            let mut cl = cell.clone();
            let p = match k {
                1 => &mut cl.w_ih,
                2 => &mut cl.w_hh,
                _ => &mut cl.bias,
            };
            p.data_mut()[i] += d;
            loss(&cl, &inputs)
        }));
    }
    Ok(())
}

fn check_cross_entropy(report: &mut GradCheckReport, rng: &mut ChaCha8Rng, opts: &GradGateOptions) -> Result<()> {
    for (class, weight) in [(0, 0.002), (1, 1.0)] {
        let logits: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, grad) = weighted_cross_entropy(&logits, class, weight)?;
        let name = format!("cross_entropy.class{class}");
        report.push(check_group(&name, &grad, 0..2, opts.probes.min(2), SMOOTH_TOLERANCE, FD_STEP, |i, d| {
            let mut l = logits.clone();
            l[i] += d;
            weighted_cross_entropy(&l, class, weight).ok().map(|(v, _)| v)
        }));
    }
    Ok(())
}

/// Full network: two overlapping default-size windows with opposite labels.
fn check_qpn(report: &mut GradCheckReport, rng: &mut ChaCha8Rng, opts: &GradGateOptions) -> Result<()> {
    let arch = QpnArch::default();
    let model = QpnModel::init(arch, opts.seed)?;
    let frames = arch.window + 1;
    let n = arch.channels * arch.extent * arch.extent;
    let data: Vec<f64> = (0..frames * n).map(|_| rng.random::<f64>()).collect();
    let batch = FrameBatch {
        frames: DenseArray::from_vec(&[frames, arch.channels, arch.extent, arch.extent], data)?,
        starts: vec![0, 1],
        labels: vec![QualityLabel::Success, QualityLabel::Lost],
    };
    let weights = ClassWeights::UNIFORM;
    let (_, grad_logits, trace) = model.batch_loss(&batch, &weights)?;
    let pattern = trace.relu_pattern();
    let mut grads = model.backward_batch(&trace, &grad_logits)?;
    if opts.inject_fault {
        for v in grads.groups[2].data_mut() {
            *v *= 1.05;
        }
    }
    for (g, name) in PARAM_NAMES.iter().enumerate() {
        let analytic = &grads.groups[g];
        let cand = candidates(rng, analytic.len());
        report.push(check_group(&format!("qpn.{name}"), analytic.data(), cand, opts.probes, SMOOTH_TOLERANCE, FD_STEP, |i, d| {
            let mut m = model.clone();
            m.params_mut()[g].data_mut()[i] += d;
            let (loss, _, t) = m.batch_loss(&batch, &weights).ok()?;
            (t.relu_pattern() == pattern).then_some(loss)
        }));
    }
    Ok(())
}

/// Runs every check and returns one row per parameter group.
pub fn run(opts: &GradGateOptions) -> Result<GradCheckReport> {
    let mut rng = stream(opts.seed, Purpose::GradCheck, 1);
    let mut report = GradCheckReport::default();
    check_conv(&mut report, &mut rng, opts, "conv_s1", 1, &[3, 4, 4])?;
    check_conv(&mut report, &mut rng, opts, "conv_s2", 2, &[2, 3, 7, 7])?;
    check_linear(&mut report, &mut rng, opts)?;
    check_relu(&mut report, &mut rng, opts)?;
    check_lstm_step(&mut report, &mut rng, opts)?;
    check_lstm_sequence(&mut report, &mut rng, opts)?;
    check_cross_entropy(&mut report, &mut rng, opts)?;
    check_qpn(&mut report, &mut rng, opts)?;
    Ok(report)
}
