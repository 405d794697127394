//! One-pass tracking metrics: distance precision and success-plot AUC.

use std::io::Write;

use crate::error::{Error, Result};
use crate::labeling::{iou, BBox};

/// Conventional distance-precision threshold, px.
pub const DP_THRESHOLD: f64 = 20.0;

/// Points on the success-plot overlap grid `0, 0.01, ..., 1`.
pub const SUCCESS_GRID: usize = 101;

/// Predicted and ground-truth boxes of one tracking run, frame aligned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackRun {
    pub predicted: Vec<BBox>,
    pub truth: Vec<BBox>,
}

impl TrackRun {
    pub fn new(predicted: Vec<BBox>, truth: Vec<BBox>) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} ground-truth boxes",
                predicted.len(),
                truth.len()
            )));
        }
        Ok(TrackRun { predicted, truth })
    }

    pub fn push(&mut self, predicted: BBox, truth: BBox) {
        self.predicted.push(predicted);
        self.truth.push(truth);
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn extend(&mut self, other: &TrackRun) {
        self.predicted.extend_from_slice(&other.predicted);
        self.truth.extend_from_slice(&other.truth);
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::contract("metrics need at least one frame"));
        }
        if self.predicted.len() != self.truth.len() {
            return Err(Error::shape("prediction and ground-truth lengths differ"));
        }
        Ok(())
    }

    pub fn center_errors(&self) -> Vec<f64> {
        self.predicted
            .iter()
            .zip(&self.truth)
            .map(|(p, t)| p.center_distance(t))
            .collect()
    }

    pub fn overlaps(&self) -> Vec<f64> {
        self.predicted.iter().zip(&self.truth).map(|(p, t)| iou(p, t)).collect()
    }

    pub fn mean_iou(&self) -> Result<f64> {
        self.check()?;
        Ok(self.overlaps().iter().sum::<f64>() / self.len() as f64)
    }
}

/// Fraction of frames whose center error is strictly below `threshold` px.
pub fn distance_precision(run: &TrackRun, threshold: f64) -> Result<f64> {
    run.check()?;
    let hits = run.center_errors().iter().filter(|&&d| d < threshold).count();
    Ok(hits as f64 / run.len() as f64)
}

/// Fraction of frames with overlap strictly above each grid threshold.
pub fn success_curve(run: &TrackRun) -> Result<Vec<(f64, f64)>> {
    run.check()?;
    let overlaps = run.overlaps();
    let n = overlaps.len() as f64;
    Ok((0..SUCCESS_GRID)
        .map(|i| {
            let t = i as f64 / (SUCCESS_GRID - 1) as f64;
            (t, overlaps.iter().filter(|&&o| o > t).count() as f64 / n)
        })
        .collect())
}

/// Area under the success curve: the mean of its grid values.
pub fn success_auc(run: &TrackRun) -> Result<f64> {
    let curve = success_curve(run)?;
    Ok(curve.iter().map(|(_, v)| v).sum::<f64>() / curve.len() as f64)
}

/// Distance precision at integer thresholds `0..=max_px`.
pub fn precision_curve(run: &TrackRun, max_px: u32) -> Result<Vec<(f64, f64)>> {
    (0..=max_px)
        .map(|t| Ok((t as f64, distance_precision(run, t as f64)?)))
        .collect()
}

/// Writes `curve,threshold,value` rows for both curves.
pub fn write_curves<W: Write>(run: &TrackRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve", "threshold", "value"])?;
    for (t, v) in precision_curve(run, 50)? {
        w.write_record(["precision", &t.to_string(), &v.to_string()])?;
    }
    for (t, v) in success_curve(run)? {
        w.write_record(["success", &format!("{t:.2}"), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
