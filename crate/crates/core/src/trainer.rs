//! Training loop: weighted cross-entropy, SGD with a step schedule,
//! per-epoch validation and best-by-lost-accuracy model selection.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::labeling::{QualityLabel, WindowSet};
use crate::nn::{ClassWeights, Sgd, SgdConfig};
use crate::qpn::{FrameBatch, QpnModel};
use crate::seeding::{stream, Purpose};

/// Windows scored together during evaluation.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub weights: ClassWeights,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            sgd: SgdConfig::default(),
            weights: ClassWeights::default(),
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        let w = self.weights;
        if !(w.success.is_finite() && w.success > 0.0 && w.lost.is_finite() && w.lost > 0.0) {
            return Err(Error::config(format!("class weights must be positive, got {w:?}")));
        }
        self.sgd.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_acc_success: f64,
    pub val_acc_lost: f64,
}

/// 2x2 confusion counts indexed `[truth][predicted]`, class 0 = success.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Evaluation {
    pub confusion: [[u64; 2]; 2],
}

impl Evaluation {
    pub fn from_labels(truth: &[QualityLabel], predicted: &[QualityLabel]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape("truth and prediction lengths differ"));
        }
        let mut e = Evaluation::default();
        for (t, p) in truth.iter().zip(predicted) {
            let (Some(t), Some(p)) = (t.class_index(), p.class_index()) else {
                return Err(Error::contract("evaluation labels must be success or lost"));
            };
            e.confusion[t][p] += 1;
        }
        Ok(e)
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Correct-in-class over total-in-class; 0 when the class is absent.
    pub fn accuracy(&self, label: QualityLabel) -> f64 {
        let Some(c) = label.class_index() else {
            return 0.0;
        };
        let row = self.confusion[c];
        let n = row[0] + row[1];
        if n == 0 {
            0.0
        } else {
            row[c] as f64 / n as f64
        }
    }

    pub fn success_accuracy(&self) -> f64 {
        self.accuracy(QualityLabel::Success)
    }

    pub fn lost_accuracy(&self) -> f64 {
        self.accuracy(QualityLabel::Lost)
    }
}

pub fn evaluate(model: &QpnModel, set: &WindowSet) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(Error::config("cannot evaluate on an empty dataset"));
    }
    let predicted = model.predict_set(set, EVAL_CHUNK)?;
    let truth: Vec<QualityLabel> = set.labels().collect();
    Evaluation::from_labels(&truth, &predicted)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best lost-class validation
    /// accuracy (ties go to the later epoch).
    pub best: QpnModel,
    pub best_epoch: usize,
    pub last: QpnModel,
    pub metrics: Vec<EpochMetrics>,
}

/// Consecutive stored windows grouped into batches. Neighbouring windows share
/// most of their frames, so a batch encodes far fewer frames than
/// `batch_size * K`. The partition is offset randomly every epoch and the
/// batch order shuffled.
fn epoch_batches(len: usize, batch: usize, epoch: usize, seed: u64) -> Vec<std::ops::Range<usize>> {
    let mut rng = stream(seed, Purpose::Shuffle, epoch as u64);
    let offset = if len > batch { rng.random_range(0..batch) } else { 0 };
    let mut out = Vec::with_capacity(len / batch + 2);
    if offset > 0 {
        out.push(0..offset);
    }
    let mut start = offset;
    while start < len {
        out.push(start..(start + batch).min(len));
        start += batch;
    }
    out.shuffle(&mut rng);
    out
}

pub fn train(
    mut model: QpnModel,
    train_set: &WindowSet,
    val_set: &WindowSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::config("training and validation sets must be non-empty"));
    }
    let (vs, vl) = val_set.label_counts();
    if vs == 0 || vl == 0 {
        return Err(Error::config(format!(
            "validation set needs both classes, has {vs} success and {vl} lost"
        )));
    }
    for set in [train_set, val_set] {
        model.check_compatible(set.window(), set.channels(), set.extent())?;
    }

    let mut sgd = Sgd::new(config.sgd.clone())?;
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut best: Option<(QpnModel, usize, f64)> = None;

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        for (b, range) in epoch_batches(train_set.len(), config.batch_size, epoch, config.seed).into_iter().enumerate() {
            let indices: Vec<usize> = range.collect();
            let batch = FrameBatch::from_set(train_set, &indices)?;
            let (loss, grads) = model.loss_and_grad(&batch, &config.weights)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFinite(format!(
                    "epoch {epoch}, batch {b}: loss {loss}, gradients finite: {}",
                    grads.all_finite()
                )));
            }
            loss_sum += loss * indices.len() as f64;
            let grad_slices = grads.slices();
            let mut params: Vec<&mut [f64]> = model.params_mut().into_iter().map(|p| p.data_mut()).collect();
            sgd.step(epoch, &mut params, &grad_slices)?;
        }

        let eval = evaluate(&model, val_set)?;
        let m = EpochMetrics {
            epoch,
            learning_rate: config.sgd.rate_at(epoch),
            train_loss: loss_sum / train_set.len() as f64,
            val_acc_success: eval.success_accuracy(),
            val_acc_lost: eval.lost_accuracy(),
        };
        on_epoch(&m);
        metrics.push(m);
        if best.as_ref().is_none_or(|(_, _, acc)| m.val_acc_lost >= *acc) {
            best = Some((model.clone(), epoch, m.val_acc_lost));
        }
    }
    let (best, best_epoch, _) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model,
        metrics,
    })
}

pub fn write_metrics_csv<W: Write>(metrics: &[EpochMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "lr", "train_loss", "val_acc_success", "val_acc_lost"])?;
    for m in metrics {
        w.write_record([
            m.epoch.to_string(),
            m.learning_rate.to_string(),
            m.train_loss.to_string(),
            m.val_acc_success.to_string(),
            m.val_acc_lost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use QualityLabel::{Lost, Success};

    #[test]
    fn degenerate_predictor_accuracies() {
        let truth: Vec<QualityLabel> = (0..100).map(|i| if i < 90 { Success } else { Lost }).collect();
        let all_success = vec![Success; 100];
        let e = Evaluation::from_labels(&truth, &all_success).unwrap();
        assert_eq!((e.success_accuracy(), e.lost_accuracy()), (1.0, 0.0));
        assert_eq!(e.total(), 100);
        let oracle = Evaluation::from_labels(&truth, &truth).unwrap();
        assert_eq!((oracle.success_accuracy(), oracle.lost_accuracy()), (1.0, 1.0));
    }

    #[test]
    fn batches_cover_every_sample_once() {
        for (len, batch) in [(100, 32), (10, 32), (64, 32), (1, 1)] {
            for epoch in 1..4 {
                let mut seen: Vec<usize> = epoch_batches(len, batch, epoch, 3).into_iter().flatten().collect();
                seen.sort_unstable();
                assert_eq!(seen, (0..len).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        let mut c = TrainConfig::default();
        c.weights.success = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn metrics_csv_header() {
        let m = EpochMetrics {
            epoch: 1,
            learning_rate: 0.01,
            train_loss: 0.5,
            val_acc_success: 0.9,
            val_acc_lost: 0.8,
        };
        let mut buf = Vec::new();
        write_metrics_csv(&[m], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,lr,train_loss,val_acc_success,val_acc_lost\n1,0.01,0.5,0.9,0.8\n");
    }
}
