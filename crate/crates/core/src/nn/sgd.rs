use crate::error::{Error, Result};

/// Plain (optionally momentum) SGD with a piecewise-constant rate schedule.
///
/// Epochs are 1-based; a schedule entry `(e, r)` switches the rate to `r`
/// at the start of epoch `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub schedule: Vec<(usize, f64)>,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            schedule: vec![(16, 0.001)],
            momentum: 0.0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |r: f64| r.is_finite() && r > 0.0;
        if !positive(self.learning_rate) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        for pair in self.schedule.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::config("schedule epochs must be strictly increasing"));
            }
        }
        for &(epoch, rate) in &self.schedule {
            if epoch == 0 || !positive(rate) {
                return Err(Error::config(format!(
                    "bad schedule entry ({epoch}, {rate}): epochs are 1-based and rates positive"
                )));
            }
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn rate_at(&self, epoch: usize) -> f64 {
        self.schedule
            .iter()
            .take_while(|(start, _)| *start <= epoch)
            .last()
            .map_or(self.learning_rate, |&(_, rate)| rate)
    }
}

/// Optimizer state: one velocity buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Sgd {
            config,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    /// `v <- momentum * v + g; theta <- theta - lr(epoch) * v`.
    pub fn step(&mut self, epoch: usize, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::shape(format!(
                    "parameter of length {} with gradient of length {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        let lr = self.config.rate_at(epoch);
        let momentum = self.config.momentum;
        if momentum == 0.0 {
            for (p, g) in params.iter_mut().zip(grads) {
                for (w, d) in p.iter_mut().zip(g.iter()) {
                    *w -= lr * d;
                }
            }
            return Ok(());
        }
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((w, d), vel) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vel = momentum * *vel + d;
                *w -= lr * *vel;
            }
        }
        Ok(())
    }
}
