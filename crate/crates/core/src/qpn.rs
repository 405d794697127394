//! The quality prediction network: a per-frame conv encoder followed by two
//! stacked LSTMs and a two-logit head read from the final time step.
//!
//! Frame encoder: conv 3x3/2 -> ReLU -> conv 3x3/2 -> ReLU -> conv 3x3/1 ->
//! ReLU -> flatten -> FC -> ReLU. With the default 5x25x25 maps the spatial
//! extents go 25 -> 12 -> 5 -> 3.
//!
//! Training batches share frames: a batch is a set of unique frames plus, per
//! window, the index of its first frame. Each frame is encoded once and its
//! first-layer LSTM input projection computed once, however many windows
//! include it.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::labeling::{QualityLabel, WindowSet};
use crate::nn::{init, relu_in_place, relu_mask_in_place, softmax, ClassWeights, ConvColumns, ConvLayer, DenseArray, LinearLayer, LstmCell, LstmTrace};
use crate::response::{ResponseMap, DEFAULT_CHANNELS, DEFAULT_EXTENT, DEFAULT_WINDOW};
use crate::seeding::{stream, Purpose};

pub const CLASSES: usize = 2;

/// Kernel and stride of the three conv layers.
pub const CONV_GEOMETRY: [(usize, usize); 3] = [(3, 2), (3, 2), (3, 1)];

/// Parameter groups in checkpoint and optimizer order.
pub const PARAM_NAMES: [&str; 16] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "fc.weight",
    "fc.bias",
    "lstm1.w_ih",
    "lstm1.w_hh",
    "lstm1.bias",
    "lstm2.w_ih",
    "lstm2.w_hh",
    "lstm2.bias",
    "head.weight",
    "head.bias",
];

/// Shape hyperparameters; everything else about the network is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QpnArch {
    pub window: usize,
    pub channels: usize,
    pub extent: usize,
    pub conv_channels: [usize; 3],
    pub fc_dim: usize,
    pub hidden: usize,
}

impl Default for QpnArch {
    fn default() -> Self {
        QpnArch {
            window: DEFAULT_WINDOW,
            channels: DEFAULT_CHANNELS,
            extent: DEFAULT_EXTENT,
            conv_channels: [16, 32, 32],
            fc_dim: 64,
            hidden: 64,
        }
    }
}

impl QpnArch {
    /// Spatial extent after each conv layer.
    pub fn conv_extents(&self) -> Result<[usize; 3]> {
        let mut e = self.extent;
        let mut out = [0; 3];
        for (slot, (k, s)) in out.iter_mut().zip(CONV_GEOMETRY) {
            if e < k {
                return Err(Error::config(format!(
                    "response extent {} is too small for the conv stack",
                    self.extent
                )));
            }
            e = (e - k) / s + 1;
            *slot = e;
        }
        Ok(out)
    }

    pub fn flat_dim(&self) -> Result<usize> {
        let e = self.conv_extents()?[2];
        Ok(self.conv_channels[2] * e * e)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.window, self.channels, self.fc_dim, self.hidden];
        if dims.contains(&0) || self.conv_channels.contains(&0) {
            return Err(Error::config(format!("architecture has a zero dimension: {self:?}")));
        }
        self.conv_extents().map(|_| ())
    }
}

/// Softmax output of one window; class 0 is success, class 1 lost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub logits: [f64; CLASSES],
    pub probs: [f64; CLASSES],
}

impl QualityScore {
    fn from_logits(logits: &[f64]) -> Self {
        let p = softmax(logits);
        QualityScore {
            logits: [logits[0], logits[1]],
            probs: [p[0], p[1]],
        }
    }

    /// Argmax verdict; a tie goes to success.
    pub fn label(&self) -> QualityLabel {
        if self.probs[1] > self.probs[0] {
            QualityLabel::Lost
        } else {
            QualityLabel::Success
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpnModel {
    arch: QpnArch,
    pub conv: [ConvLayer; 3],
    pub fc: LinearLayer,
    pub lstm: [LstmCell; 2],
    pub head: LinearLayer,
}

/// Encoder activations (all post-ReLU) for a stack of frames, plus each
/// conv layer's patch matrix for the backward pass.
#[derive(Debug, Clone)]
struct EncoderTrace {
    columns: [ConvColumns; 3],
    /// Outputs of the first two conv layers.
    conv: [DenseArray; 2],
    /// Output of the third conv layer, flattened per frame.
    flat: DenseArray,
    features: DenseArray,
}

/// Everything a backward pass over a shared-frame batch needs.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    enc: EncoderTrace,
    starts: Vec<usize>,
    lstm1: LstmTrace,
    h1: DenseArray,
    lstm2: LstmTrace,
    last: DenseArray,
    /// `[B, 2]`
    pub logits: DenseArray,
}

impl BatchTrace {
    pub fn batch(&self) -> usize {
        self.starts.len()
    }

    pub fn score(&self, b: usize) -> QualityScore {
        QualityScore::from_logits(&self.logits.data()[b * CLASSES..(b + 1) * CLASSES])
    }

    /// Sign pattern of every ReLU in the encoder; a finite-difference probe
    /// is only meaningful when this does not change.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.enc
            .conv
            .iter()
            .chain([&self.enc.flat, &self.enc.features])
            .flat_map(|a| a.data().iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Gradients for every parameter group, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct QpnGrads {
    pub groups: Vec<DenseArray>,
}

impl QpnGrads {
    pub fn all_finite(&self) -> bool {
        self.groups.iter().all(DenseArray::all_finite)
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.groups.iter().map(DenseArray::data).collect()
    }
}

/// A shared-frame mini-batch: `frames` is `[U, C, N, N]`, window `b` covers
/// frames `starts[b] .. starts[b] + K`.
#[derive(Debug, Clone)]
pub struct FrameBatch {
    pub frames: DenseArray,
    pub starts: Vec<usize>,
    pub labels: Vec<QualityLabel>,
}

impl FrameBatch {
    /// Gathers the samples `indices` of `set`, storing each frame once.
    pub fn from_set(set: &WindowSet, indices: &[usize]) -> Result<FrameBatch> {
        if indices.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let mut ids: Vec<usize> = indices.iter().flat_map(|&i| set.frame_range(i)).collect();
        ids.sort_unstable();
        ids.dedup();
        let starts = indices
            .iter()
            .map(|&i| ids.binary_search(&set.frame_range(i).start).expect("frame collected above"))
            .collect();
        let flen = set.frame_len();
        let mut data = Vec::with_capacity(ids.len() * flen);
        for &f in &ids {
            data.extend(set.frame_scores(f).iter().map(|&v| v as f64));
        }
        let (c, n) = (set.channels(), set.extent());
        Ok(FrameBatch {
            frames: DenseArray::from_vec(&[ids.len(), c, n, n], data)?,
            starts,
            labels: indices.iter().map(|&i| set.label(i)).collect(),
        })
    }

    /// A single window of `K` maps.
    pub fn from_window(window: &[&ResponseMap]) -> Result<FrameBatch> {
        let first = window.first().ok_or_else(|| Error::contract("empty window"))?;
        let (c, n) = (first.channels(), first.extent());
        let mut data = Vec::with_capacity(window.len() * c * n * n);
        for map in window {
            if map.channels() != c || map.extent() != n {
                return Err(Error::shape("maps in a window differ in shape"));
            }
            data.extend(map.scores().iter().map(|&v| v as f64));
        }
        Ok(FrameBatch {
            frames: DenseArray::from_vec(&[window.len(), c, n, n], data)?,
            starts: vec![0],
            labels: vec![QualityLabel::Unassigned],
        })
    }
}

impl QpnModel {
    /// Seeded initialization (uniform fan-in weights, zero biases, forget bias 1).
    pub fn init(arch: QpnArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = stream(seed, Purpose::ModelInit, 0);
        let [c1, c2, c3] = arch.conv_channels;
        let ins = [arch.channels, c1, c2];
        let outs = [c1, c2, c3];
        let conv = std::array::from_fn(|i| {
            let (k, s) = CONV_GEOMETRY[i];
            init::conv(&mut rng, ins[i], outs[i], k, s)
        });
        let fc = init::linear(&mut rng, arch.flat_dim()?, arch.fc_dim);
        let lstm1 = init::lstm(&mut rng, arch.fc_dim, arch.hidden);
        let lstm2 = init::lstm(&mut rng, arch.hidden, arch.hidden);
        let head = init::linear(&mut rng, arch.hidden, CLASSES);
        Ok(QpnModel {
            arch,
            conv,
            fc,
            lstm: [lstm1, lstm2],
            head,
        })
    }

    /// All-zero parameters of the right shapes.
    pub fn zeros(arch: QpnArch) -> Result<Self> {
        arch.validate()?;
        let [c1, c2, c3] = arch.conv_channels;
        let ins = [arch.channels, c1, c2];
        let outs = [c1, c2, c3];
        Ok(QpnModel {
            arch,
            conv: std::array::from_fn(|i| {
                let (k, s) = CONV_GEOMETRY[i];
                ConvLayer::zeros(ins[i], outs[i], k, s)
            }),
            fc: LinearLayer::zeros(arch.flat_dim()?, arch.fc_dim),
            lstm: [
                LstmCell::zeros(arch.fc_dim, arch.hidden),
                LstmCell::zeros(arch.hidden, arch.hidden),
            ],
            head: LinearLayer::zeros(arch.hidden, CLASSES),
        })
    }

    pub fn arch(&self) -> &QpnArch {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn params(&self) -> [&DenseArray; 16] {
        let [c1, c2, c3] = &self.conv;
        let [l1, l2] = &self.lstm;
        [
            &c1.weights, &c1.bias, &c2.weights, &c2.bias, &c3.weights, &c3.bias,
            &self.fc.weights, &self.fc.bias,
            &l1.w_ih, &l1.w_hh, &l1.bias, &l2.w_ih, &l2.w_hh, &l2.bias,
            &self.head.weights, &self.head.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut DenseArray; 16] {
        let [c1, c2, c3] = &mut self.conv;
        let [l1, l2] = &mut self.lstm;
        [
            &mut c1.weights, &mut c1.bias, &mut c2.weights, &mut c2.bias, &mut c3.weights, &mut c3.bias,
            &mut self.fc.weights, &mut self.fc.bias,
            &mut l1.w_ih, &mut l1.w_hh, &mut l1.bias, &mut l2.w_ih, &mut l2.w_hh, &mut l2.bias,
            &mut self.head.weights, &mut self.head.bias,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.all_finite())
    }

    /// Checks that windows of `K` maps shaped `C x N x N` fit this model.
    pub fn check_compatible(&self, window: usize, channels: usize, extent: usize) -> Result<()> {
        let a = &self.arch;
        if (window, channels, extent) != (a.window, a.channels, a.extent) {
            return Err(Error::contract(format!(
                "model expects K={} C={} N={}, data has K={window} C={channels} N={extent}",
                a.window, a.channels, a.extent
            )));
        }
        Ok(())
    }

    fn encode(&self, frames: &DenseArray) -> Result<EncoderTrace> {
        let u = frames.shape()[0];
        let (mut a1, c1) = self.conv[0].forward_cached(frames)?;
        relu_in_place(&mut a1);
        let (mut a2, c2) = self.conv[1].forward_cached(&a1)?;
        relu_in_place(&mut a2);
        let (mut a3, c3) = self.conv[2].forward_cached(&a2)?;
        relu_in_place(&mut a3);
        let flat = a3.reshape(&[u, self.fc.in_dim()])?;
        let mut features = self.fc.forward(&flat)?;
        relu_in_place(&mut features);
        Ok(EncoderTrace {
            columns: [c1, c2, c3],
            conv: [a1, a2],
            flat,
            features,
        })
    }

    /// Forward pass over a shared-frame batch.
    pub fn forward_batch(&self, frames: &DenseArray, starts: &[usize]) -> Result<BatchTrace> {
        let a = &self.arch;
        let k = a.window;
        match frames.shape() {
            [u, c, h, w] if *c == a.channels && *h == a.extent && *w == a.extent => {
                if starts.is_empty() || starts.iter().any(|&s| s + k > *u) {
                    return Err(Error::shape(format!("window starts {starts:?} exceed {u} frames")));
                }
            }
            other => {
                return Err(Error::shape(format!(
                    "frames must be [U, {}, {}, {}], got {other:?}",
                    a.channels, a.extent, a.extent
                )))
            }
        }
        let batch = starts.len();
        let gw = 4 * a.hidden;

        let enc = self.encode(frames)?;
        let proj1 = self.lstm[0].project_inputs(&enc.features)?;
        let mut z1 = Vec::with_capacity(k * batch * gw);
        for s in 0..k {
            for &start in starts {
                z1.extend_from_slice(&proj1.data()[(start + s) * gw..(start + s + 1) * gw]);
            }
        }
        let lstm1 = self.lstm[0].forward_sequence(&DenseArray::from_vec(&[k, batch, gw], z1)?)?;
        let h1 = DenseArray::from_vec(&[k * batch, a.hidden], lstm1.hidden_states.clone())?;
        let z2 = self.lstm[1].project_inputs(&h1)?.reshape(&[k, batch, gw])?;
        let lstm2 = self.lstm[1].forward_sequence(&z2)?;
        let last = DenseArray::from_vec(&[batch, a.hidden], lstm2.hidden_at(k - 1).to_vec())?;
        let logits = self.head.forward(&last)?;
        Ok(BatchTrace {
            enc,
            starts: starts.to_vec(),
            lstm1,
            h1,
            lstm2,
            last,
            logits,
        })
    }

    /// Backpropagates `grad_logits` (`[B, 2]`) through a batch trace.
    pub fn backward_batch(&self, trace: &BatchTrace, grad_logits: &DenseArray) -> Result<QpnGrads> {
        let a = &self.arch;
        let (k, batch, nh) = (a.window, trace.batch(), a.hidden);
        let gw = 4 * nh;
        let u = trace.enc.features.shape()[0];

        let head = self.head.backward(&trace.last, grad_logits)?;
        let mut grad_h2 = vec![0.0; k * batch * nh];
        grad_h2[(k - 1) * batch * nh..].copy_from_slice(head.input.data());
        let l2 = self.lstm[1].backward_sequence(&trace.lstm2, &DenseArray::from_vec(&[k, batch, nh], grad_h2)?)?;
        let (dh1, dw_ih2, db2) = self.lstm[1].projection_backward(&trace.h1, &l2.projected.reshape(&[k * batch, gw])?)?;
        let l1 = self.lstm[0].backward_sequence(&trace.lstm1, &dh1.reshape(&[k, batch, nh])?)?;

        let mut dproj1 = vec![0.0; u * gw];
        let dz = l1.projected.data();
        for s in 0..k {
            for (b, &start) in trace.starts.iter().enumerate() {
                let src = &dz[(s * batch + b) * gw..(s * batch + b + 1) * gw];
                let dst = &mut dproj1[(start + s) * gw..(start + s + 1) * gw];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        let (dfeat, dw_ih1, db1) = self.lstm[0].projection_backward(&trace.enc.features, &DenseArray::from_vec(&[u, gw], dproj1)?)?;

        let enc = &trace.enc;
        let mut dfeat = dfeat;
        relu_mask_in_place(&enc.features, &mut dfeat)?;
        let fc = self.fc.backward(&enc.flat, &dfeat)?;
        let mut d3 = fc.input;
        relu_mask_in_place(&enc.flat, &mut d3)?;
        let e3 = a.conv_extents()?[2];
        let d3 = d3.reshape(&[u, a.conv_channels[2], e3, e3])?;
        let g3 = self.conv[2].backward_cached(&enc.columns[2], &d3, true)?;
        let mut d2 = g3.input.expect("input gradient requested");
        relu_mask_in_place(&enc.conv[1], &mut d2)?;
        let g2 = self.conv[1].backward_cached(&enc.columns[1], &d2, true)?;
        let mut d1 = g2.input.expect("input gradient requested");
        relu_mask_in_place(&enc.conv[0], &mut d1)?;
        let g1 = self.conv[0].backward_cached(&enc.columns[0], &d1, false)?;
        let conv_grads = [(g1.weights, g1.bias), (g2.weights, g2.bias), (g3.weights, g3.bias)];
        let mut groups = Vec::with_capacity(16);
        for (w, b) in conv_grads {
            groups.push(w);
            groups.push(b);
        }
        groups.extend([fc.weights, fc.bias, dw_ih1, l1.w_hh, db1, dw_ih2, l2.w_hh, db2, head.weights, head.bias]);
        Ok(QpnGrads { groups })
    }

    /// Weighted mean cross-entropy over a batch and its gradient.
    ///
    /// Per-sample weighted losses are summed and divided by the batch's total
    /// weight. Dividing by the batch size instead shrinks every step by the
    /// tiny success weight and leaves plain SGD stuck on its initial plateau.
    pub fn loss_and_grad(&self, batch: &FrameBatch, weights: &ClassWeights) -> Result<(f64, QpnGrads)> {
        let (loss, grad_logits, trace) = self.batch_loss(batch, weights)?;
        Ok((loss, self.backward_batch(&trace, &grad_logits)?))
    }

    /// Forward pass plus loss; also returns `d loss / d logits` and the trace.
    pub fn batch_loss(&self, batch: &FrameBatch, weights: &ClassWeights) -> Result<(f64, DenseArray, BatchTrace)> {
        let trace = self.forward_batch(&batch.frames, &batch.starts)?;
        let n = batch.starts.len();
        if batch.labels.len() != n {
            return Err(Error::shape("one label per window required"));
        }
        let mut total = 0.0;
        for &label in &batch.labels {
            total += weights.weight(label)?;
        }
        let mut loss = 0.0;
        let mut grad = vec![0.0; n * CLASSES];
        for (b, &label) in batch.labels.iter().enumerate() {
            let logits = &trace.logits.data()[b * CLASSES..(b + 1) * CLASSES];
            let (l, g) = weights.loss(logits, label)?;
            loss += l;
            for (d, v) in grad[b * CLASSES..(b + 1) * CLASSES].iter_mut().zip(g) {
                *d = v / total;
            }
        }
        Ok((loss / total, DenseArray::from_vec(&[n, CLASSES], grad)?, trace))
    }

    /// Scores one window of `K` maps from a zero recurrent state.
    pub fn qpn_forward(&self, window: &[&ResponseMap]) -> Result<QualityScore> {
        let first = window.first().ok_or_else(|| Error::contract("empty window"))?;
        self.check_compatible(window.len(), first.channels(), first.extent())?;
        let batch = FrameBatch::from_window(window)?;
        let trace = self.forward_batch(&batch.frames, &batch.starts)?;
        Ok(trace.score(0))
    }

    pub fn predict(&self, window: &[&ResponseMap]) -> Result<QualityLabel> {
        Ok(self.qpn_forward(window)?.label())
    }

    /// Verdicts for every sample of a window set, scored in shared-frame chunks.
    pub fn predict_set(&self, set: &WindowSet, chunk: usize) -> Result<Vec<QualityLabel>> {
        self.check_compatible(set.window(), set.channels(), set.extent())?;
        let indices: Vec<usize> = (0..set.len()).collect();
        let mut out = Vec::with_capacity(set.len());
        for part in indices.chunks(chunk.max(1)) {
            let batch = FrameBatch::from_set(set, part)?;
            let trace = self.forward_batch(&batch.frames, &batch.starts)?;
            out.extend((0..part.len()).map(|b| trace.score(b).label()));
        }
        Ok(out)
    }

    /// Rounds every parameter to the nearest `f32`, as a checkpoint stores it.
    pub fn round_to_f32(&mut self) {
        for p in self.params_mut() {
            for v in p.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

const MAGIC: &[u8; 4] = b"QPNM";
const VERSION: u32 = 1;

/// Writes a checkpoint: magic, version, eight architecture ints
/// (K, C, N, three conv widths, FC width, LSTM width), then each parameter
/// group in [`PARAM_NAMES`] order as little-endian `f32`.
pub fn write_checkpoint<W: Write>(w: &mut W, model: &QpnModel) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let a = model.arch;
    for v in [a.window, a.channels, a.extent, a.conv_channels[0], a.conv_channels[1], a.conv_channels[2], a.fc_dim, a.hidden] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut buf = Vec::new();
    for p in model.params() {
        buf.clear();
        for &v in p.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, model: &QpnModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<QpnModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let take = |at: usize, n: usize, what: &str| -> Result<&[u8]> {
        bytes
            .get(at..at + n)
            .ok_or_else(|| Error::format(at as u64, format!("truncated while reading {what}")))
    };
    if take(0, 4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"QPNM\""));
    }
    let u32_at = |at: usize, what: &str| -> Result<u32> {
        Ok(u32::from_le_bytes(take(at, 4, what)?.try_into().expect("4 bytes")))
    };
    let version = u32_at(4, "version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let mut dims = [0usize; 8];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u32_at(8 + 4 * i, "architecture")? as usize;
    }
    let arch = QpnArch {
        window: dims[0],
        channels: dims[1],
        extent: dims[2],
        conv_channels: [dims[3], dims[4], dims[5]],
        fc_dim: dims[6],
        hidden: dims[7],
    };
    let mut model = QpnModel::zeros(arch).map_err(|e| Error::format(8, format!("bad architecture: {e}")))?;
    let mut at = 40;
    for p in model.params_mut() {
        let raw = take(at, 4 * p.len(), "parameters")?;
        for (i, (v, chunk)) in p.data_mut().iter_mut().zip(raw.chunks_exact(4)).enumerate() {
            let x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !x.is_finite() {
                return Err(Error::format((at + 4 * i) as u64, "non-finite parameter"));
            }
            *v = x as f64;
        }
        at += raw.len();
    }
    if at != bytes.len() {
        return Err(Error::format(at as u64, "trailing bytes after last parameter"));
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<QpnModel> {
    read_checkpoint(&mut File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_window(seed: u64, arch: &QpnArch) -> Vec<ResponseMap> {
        let mut rng = stream(seed, Purpose::GradCheck, 0);
        (0..arch.window)
            .map(|_| {
                let n = arch.channels * arch.extent * arch.extent;
                ResponseMap::new(arch.channels, arch.extent, (0..n).map(|_| rng.random::<f32>()).collect()).unwrap()
            })
            .collect()
    }

    #[test]
    fn default_geometry() {
        let arch = QpnArch::default();
        assert_eq!(arch.conv_extents().unwrap(), [12, 5, 3]);
        assert_eq!(arch.flat_dim().unwrap(), 288);
        let model = QpnModel::init(arch, 1).unwrap();
        // conv 736 + 4640 + 9248, fc 18496, lstm 33024 + 33024, head 130
        assert_eq!(model.param_count(), 99_298);
    }

    #[test]
    fn forward_is_deterministic_and_normalized() {
        let arch = QpnArch::default();
        let model = QpnModel::init(arch, 7).unwrap();
        let maps = random_window(3, &arch);
        let refs: Vec<&ResponseMap> = maps.iter().collect();
        let a = model.qpn_forward(&refs).unwrap();
        let b = model.qpn_forward(&refs).unwrap();
        assert_eq!(a, b);
        assert!((a.probs[0] + a.probs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_to_success() {
        let model = QpnModel::zeros(QpnArch::default()).unwrap();
        let maps = random_window(1, model.arch());
        let refs: Vec<&ResponseMap> = maps.iter().collect();
        let score = model.qpn_forward(&refs).unwrap();
        assert_eq!(score.probs, [0.5, 0.5]);
        assert_eq!(score.label(), QualityLabel::Success);
    }

    #[test]
    fn wrong_window_length_is_a_contract_error() {
        let arch = QpnArch::default();
        let model = QpnModel::init(arch, 1).unwrap();
        let maps = random_window(1, &arch);
        let refs: Vec<&ResponseMap> = maps.iter().take(10).collect();
        assert!(matches!(model.qpn_forward(&refs), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_frames_match_separate_windows() {
        let arch = QpnArch {
            window: 4,
            ..QpnArch::default()
        };
        let model = QpnModel::init(arch, 2).unwrap();
        let mut maps = random_window(5, &QpnArch { window: 6, ..arch });
        maps.truncate(6);
        let mut set = WindowSet::new(4, arch.channels, arch.extent).unwrap();
        let labels = [QualityLabel::Success, QualityLabel::Lost, QualityLabel::Success, QualityLabel::Lost, QualityLabel::Success, QualityLabel::Lost];
        set.push_sequence(&maps, &labels).unwrap();
        assert_eq!(set.len(), 3);
        let batch = FrameBatch::from_set(&set, &[0, 1, 2]).unwrap();
        assert_eq!(batch.frames.shape()[0], 6);
        let trace = model.forward_batch(&batch.frames, &batch.starts).unwrap();
        for b in 0..3 {
            let refs: Vec<&ResponseMap> = maps[b..b + 4].iter().collect();
            let single = model.qpn_forward(&refs).unwrap();
            for c in 0..2 {
                assert!((single.logits[c] - trace.score(b).logits[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut model = QpnModel::init(QpnArch::default(), 9).unwrap();
        model.round_to_f32();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model).unwrap();
        let loaded = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded, model);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &loaded).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn checkpoint_errors() {
        let model = QpnModel::init(QpnArch::default(), 9).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&mut bad.as_slice()), Err(Error::Format { offset: 0, .. })));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_checkpoint(&mut &short[..]), Err(Error::Format { .. })));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_checkpoint(&mut long.as_slice()), Err(Error::Format { .. })));
    }

    #[test]
    fn checkpoint_with_other_window_is_rejected_by_pipeline() {
        let model = QpnModel::init(QpnArch { window: 10, ..QpnArch::default() }, 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model).unwrap();
        let loaded = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert!(matches!(loaded.check_compatible(20, 5, 25), Err(Error::Contract(_))));
    }
}
