//! Mini-batch stochastic gradient descent with classical momentum and a
//! step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::clip_global_norm;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Loss above which training is considered diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// An objective evaluated on subsets of a sample collection.
pub trait BatchObjective {
    fn n_samples(&self) -> usize;
    /// Mean loss over `batch` (sample indices) and its gradient. `rng` drives
    /// any stochastic layers (dropout) for this batch.
    fn batch_loss_grad(&self, params: &[f64], batch: &[usize], rng: &mut SplitMix64) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdmConfig {
    pub initial_rate: f64,
    pub drop_factor: f64,
    pub drop_period: usize,
    pub momentum: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
}

impl Default for SgdmConfig {
    fn default() -> Self {
        Self {
            initial_rate: 0.01,
            drop_factor: 0.85,
            drop_period: 10,
            momentum: 0.9,
            max_epochs: 150,
            batch_size: 128,
            seed: 7,
            clip_norm: Some(1.0),
        }
    }
}

impl SgdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.drop_factor > 0.0 && self.drop_factor <= 1.0) {
            return Err(Error::invalid("drop factor must lie in (0, 1]"));
        }
        if self.drop_period == 0 || self.batch_size == 0 {
            return Err(Error::invalid("drop period and batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip norm must be positive"));
            }
        }
        Ok(())
    }

    /// Rate for 0-based `epoch`: initial · factor^⌊epoch / period⌋.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.initial_rate * self.drop_factor.powi((epoch / self.drop_period) as i32)
    }
}

#[derive(Debug, Clone)]
pub struct SgdmOutcome {
    pub params: Vec<f64>,
    /// Sample-weighted mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// `v ← μv − η∇`, `w ← w + v`, batches reshuffled every epoch. The last
/// batch of an epoch may be smaller than `batch_size`.
pub fn train_sgdm<O: BatchObjective + ?Sized>(
    objective: &O,
    initial: Vec<f64>,
    config: &SgdmConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<SgdmOutcome> {
    config.validate()?;
    let n = objective.n_samples();
    if n == 0 {
        return Err(Error::Missing("no training samples".into()));
    }
    let mut rng = SplitMix64::new(config.seed);
    let mut w = initial;
    let mut velocity = vec![0.0; w.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.max_epochs);

    for epoch in 0..config.max_epochs {
        let rate = config.learning_rate(epoch);
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut batch_rng = rng.fork();
            let (loss, mut grad) = objective.batch_loss_grad(&w, batch, &mut batch_rng)?;
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(Error::Diverged(format!("epoch {epoch} batch {b}: loss {loss}")));
            }
            if let Some(c) = config.clip_norm {
                clip_global_norm(&mut grad, c);
            }
            for ((wi, vi), gi) in w.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *vi = config.momentum * *vi - rate * gi;
                *wi += *vi;
            }
            total += loss * batch.len() as f64;
        }
        let mean = total / n as f64;
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    Ok(SgdmOutcome { params: w, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Mean of ½(w − x_i)² over scalar samples.
    struct Mean(Vec<f64>);

    impl BatchObjective for Mean {
        fn n_samples(&self) -> usize {
            self.0.len()
        }

        fn batch_loss_grad(&self, w: &[f64], batch: &[usize], _: &mut SplitMix64) -> Result<(f64, Vec<f64>)> {
            let k = batch.len() as f64;
            let loss = batch.iter().map(|&i| 0.5 * (w[0] - self.0[i]).powi(2)).sum::<f64>() / k;
            let g = batch.iter().map(|&i| w[0] - self.0[i]).sum::<f64>() / k;
            Ok((loss, vec![g]))
        }
    }

    #[test]
    fn schedule_values() {
        let c = SgdmConfig::default();
        assert_eq!(c.learning_rate(0), 0.01);
        assert_eq!(c.learning_rate(9), 0.01);
        assert!((c.learning_rate(10) - 0.0085).abs() < 1e-15);
        assert!((c.learning_rate(20) - 0.007225).abs() < 1e-15);
        assert!((c.learning_rate(23) - 0.007225).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let data = Mean(vec![1.0, 3.0, 5.0]);
        let cfg = SgdmConfig {
            initial_rate: 0.1,
            momentum: 0.0,
            max_epochs: 1,
            batch_size: 3,
            clip_norm: None,
            ..Default::default()
        };
        let out = train_sgdm(&data, vec![0.0], &cfg, |_, _| {}).unwrap();
        // one full-batch step: w = 0 - 0.1 * (0 - 3)
        assert!((out.params[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn consumes_partial_final_batch() {
        struct Count(std::cell::RefCell<Vec<usize>>);
        impl BatchObjective for Count {
            fn n_samples(&self) -> usize {
                300
            }
            fn batch_loss_grad(&self, _: &[f64], batch: &[usize], _: &mut SplitMix64) -> Result<(f64, Vec<f64>)> {
                self.0.borrow_mut().push(batch.len());
                Ok((0.0, vec![0.0]))
            }
        }
        let c = Count(Default::default());
        train_sgdm(&c, vec![0.0], &SgdmConfig { max_epochs: 1, ..Default::default() }, |_, _| {}).unwrap();
        assert_eq!(*c.0.borrow(), vec![128, 128, 44]);
    }

    #[test]
    fn seeded_runs_are_identical_and_converge() {
        let data = Mean((0..50).map(f64::from).collect());
        let cfg = SgdmConfig {
            initial_rate: 0.02,
            drop_factor: 0.5,
            max_epochs: 80,
            batch_size: 10,
            clip_norm: None,
            ..Default::default()
        };
        let a = train_sgdm(&data, vec![0.0], &cfg, |_, _| {}).unwrap();
        let b = train_sgdm(&data, vec![0.0], &cfg, |_, _| {}).unwrap();
        assert_eq!(a.params[0].to_bits(), b.params[0].to_bits());
        assert!((a.params[0] - 24.5).abs() < 2.0, "{}", a.params[0]);
    }

    #[test]
    fn divergence_aborts() {
        let data = Mean(vec![1e9]);
        let cfg = SgdmConfig { max_epochs: 1, clip_norm: None, ..Default::default() };
        assert!(matches!(train_sgdm(&data, vec![0.0], &cfg, |_, _| {}), Err(Error::Diverged(_))));
    }
}
