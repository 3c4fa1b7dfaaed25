//! Double DQN with n-step targets.

use crate::agents::replay::SegmentBatch;
use crate::agents::tabular::{argmax_first, argmax_uniform};
use crate::error::{Error, Result};
use crate::nn::{AdamState, Grads, Matrix, Mlp};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DeepQConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub n: usize,
    pub sync_period: u64,
}

impl Default for DeepQConfig {
    fn default() -> Self {
        DeepQConfig { hidden: vec![256, 256], lr: 1e-4, gamma: 0.99, n: 5, sync_period: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct DeepQ {
    pub online: Mlp,
    pub target: Mlp,
    pub adam: AdamState,
    pub gamma: f64,
    pub n: usize,
    pub sync_period: u64,
    /// Number of completed `update` calls.
    pub updates: u64,
}

impl DeepQ {
    pub fn new(input: usize, num_actions: usize, cfg: &DeepQConfig, rng: &mut Rng) -> Result<Self> {
        if cfg.n == 0 {
            return Err(Error::config("n-step horizon must be at least 1"));
        }
        if cfg.sync_period == 0 {
            return Err(Error::config("target sync period must be at least 1"));
        }
        let mut widths = vec![input];
        widths.extend(&cfg.hidden);
        widths.push(num_actions);
        let online = Mlp::new(&widths, rng)?;
        Ok(Self::from_net(online, cfg))
    }

    /// Wrap an existing network; the target starts as a copy of it.
    pub fn from_net(online: Mlp, cfg: &DeepQConfig) -> Self {
        DeepQ {
            target: online.copy_params(),
            adam: AdamState::new(&online, cfg.lr),
            online,
            gamma: cfg.gamma,
            n: cfg.n,
            sync_period: cfg.sync_period,
            updates: 0,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.online.output_width()
    }

    pub fn q_values(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.online.forward_one(features)
    }

    pub fn greedy(&self, features: &[f64], rng: &mut Rng) -> Result<usize> {
        Ok(argmax_uniform(&self.q_values(features)?, rng))
    }

    /// n-step Double DQN targets:
    /// `Σ_{i<len} γ^i r_i + γ^len Q_target(s_len, argmax_a Q_online(s_len, a))`,
    /// with the bootstrap dropped for terminal segments.
    pub fn targets(&self, batch: &SegmentBatch, rewards: &[Vec<f64>]) -> Result<Vec<f64>> {
        if rewards.len() != batch.len() {
            return Err(Error::usage("one reward list per segment required"));
        }
        let online = self.online.forward(&batch.bootstrap)?;
        let target = self.target.forward(&batch.bootstrap)?;
        let mut ys = Vec::with_capacity(batch.len());
        for (i, rs) in rewards.iter().enumerate() {
            if rs.is_empty() {
                return Err(Error::usage("empty segment"));
            }
            let mut y = 0.0;
            let mut discount = 1.0;
            for r in rs {
                y += discount * r;
                discount *= self.gamma;
            }
            if !batch.terminal[i] {
                let a_star = argmax_first(online.row(i));
                y += discount * target.get(i, a_star);
            }
            ys.push(y);
        }
        Ok(ys)
    }

    /// Mean squared TD error and its gradient, targets held constant.
    pub fn loss_and_grads(&self, batch: &SegmentBatch, targets: &[f64]) -> Result<(f64, Grads)> {
        let m = batch.len();
        if m == 0 {
            return Err(Error::usage("empty minibatch"));
        }
        if targets.len() != m {
            return Err(Error::usage(format!("{} targets for a minibatch of {m}", targets.len())));
        }
        let cache = self.online.forward_cached(&batch.start)?;
        let q = cache.output();
        let mut upstream = Matrix::zeros(m, q.cols);
        let mut loss = 0.0;
        for (i, (&a, &y)) in batch.actions.iter().zip(targets).enumerate() {
            let err = q.get(i, a) - y;
            loss += err * err;
            upstream.set(i, a, 2.0 * err / m as f64);
        }
        loss /= m as f64;
        if !loss.is_finite() {
            return Err(Error::training(format!("non-finite TD loss after {} updates", self.updates)));
        }
        Ok((loss, self.online.backward(&cache, &upstream)?))
    }

    /// One semi-gradient Adam step on the batch; the target network is
    /// refreshed every `sync_period` updates. Returns the loss before the step.
    pub fn update(&mut self, batch: &SegmentBatch, rewards: &[Vec<f64>]) -> Result<f64> {
        let ys = self.targets(batch, rewards)?;
        let (loss, grads) = self.loss_and_grads(batch, &ys)?;
        self.adam.step(&mut self.online, &grads)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.sync_period) {
            self.target = self.online.copy_params();
        }
        Ok(loss)
    }
}
