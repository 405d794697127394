use crate::error::{Error, Result};
use crate::labeling::QualityLabel;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `weight * -log softmax(logits)[class]` and its gradient w.r.t. the logits.
pub fn weighted_cross_entropy(logits: &[f64], class: usize, weight: f64) -> Result<(f64, Vec<f64>)> {
    if class >= logits.len() {
        return Err(Error::shape(format!(
            "class {class} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    let loss = weight * (log_sum - logits[class]);
    let mut grad: Vec<f64> = logits.iter().map(|z| weight * (z - log_sum).exp()).collect();
    grad[class] -= weight;
    Ok((loss, grad))
}

/// Per-class loss weights for the two assignable quality labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub success: f64,
    pub lost: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights {
            success: 0.002,
            lost: 1.0,
        }
    }
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights {
        success: 1.0,
        lost: 1.0,
    };

    pub fn weight(&self, label: QualityLabel) -> Result<f64> {
        match label {
            QualityLabel::Success => Ok(self.success),
            QualityLabel::Lost => Ok(self.lost),
            QualityLabel::Unassigned => Err(Error::contract(
                "unassigned samples have no loss weight",
            )),
        }
    }

    /// Weighted cross-entropy of a 2-logit output against a quality label.
    pub fn loss(&self, logits: &[f64], label: QualityLabel) -> Result<(f64, Vec<f64>)> {
        let weight = self.weight(label)?;
        let class = label
            .class_index()
            .expect("assignable labels have a class index");
        weighted_cross_entropy(logits, class, weight)
    }
}
