//! Exploration baselines: exact visit-count bonus, εz-greedy action
//! repetition, and random network distillation.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::{AdamState, Matrix, Mlp};
use crate::rng::Rng;

/// Exact per-state visit counts with a `β / √n(s)` bonus.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    counts: Vec<u64>,
    pub beta: f64,
}

/// Bonus scales accepted for the count baseline.
pub const COUNT_BETA_GRID: [f64; 5] = [0.0001, 0.001, 0.01, 0.1, 1.0];
/// Bonus scales accepted for RND.
pub const RND_BETA_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

impl CountTable {
    pub fn new(num_ids: usize, beta: f64) -> Self {
        CountTable { counts: vec![0; num_ids], beta }
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    /// Record a visit; returns the new count.
    pub fn visit(&mut self, id: usize) -> u64 {
        self.counts[id] += 1;
        self.counts[id]
    }

    pub fn bonus(&self, id: usize) -> Result<f64> {
        let n = self.counts[id];
        if n == 0 {
            return Err(Error::usage(format!("state {id} has not been visited")));
        }
        Ok(self.beta / (n as f64).sqrt())
    }

    /// Record a visit and return the bonus it earns.
    pub fn visit_and_bonus(&mut self, id: usize) -> f64 {
        let n = self.visit(id);
        self.beta / (n as f64).sqrt()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Draw `n ∈ [1, cap]` with `P(n) ∝ n^{-k}`.
pub fn ez_sample_duration(rng: &mut Rng, k: f64, cap: usize) -> usize {
    if cap <= 1 {
        return 1;
    }
    let total: f64 = (1..=cap).map(|n| (n as f64).powf(-k)).sum();
    let mut u = rng.gen::<f64>() * total;
    for n in 1..=cap {
        u -= (n as f64).powf(-k);
        if u < 0.0 {
            return n;
        }
    }
    cap
}

/// Mean of the truncated zeta distribution drawn by [`ez_sample_duration`].
pub fn truncated_zeta_mean(k: f64, cap: usize) -> f64 {
    let total: f64 = (1..=cap).map(|n| (n as f64).powf(-k)).sum();
    (1..=cap).map(|n| (n as f64).powf(1.0 - k)).sum::<f64>() / total
}

/// Pending repetition of an exploratory action.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EzGreedyState {
    pub remaining: usize,
    pub action: usize,
}

impl EzGreedyState {
    pub fn clear(&mut self) {
        self.remaining = 0;
    }
}

/// A frozen random target network and a predictor trained to match it.
#[derive(Debug, Clone)]
pub struct RndPair {
    target: Mlp,
    pub predictor: Mlp,
    pub adam: AdamState,
    pub beta: f64,
}

impl RndPair {
    pub fn new(widths: &[usize], lr: f64, beta: f64, target_rng: &mut Rng, predictor_rng: &mut Rng) -> Result<Self> {
        let target = Mlp::new(widths, target_rng)?;
        let predictor = Mlp::new(widths, predictor_rng)?;
        Ok(Self::from_nets(target, predictor, lr, beta))
    }

    pub fn from_nets(target: Mlp, predictor: Mlp, lr: f64, beta: f64) -> Self {
        RndPair { adam: AdamState::new(&predictor, lr), target, predictor, beta }
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    /// `β ‖predictor(x) - target(x)‖²` without training.
    pub fn peek(&self, features: &[f64]) -> Result<f64> {
        let p = self.predictor.forward_one(features)?;
        let t = self.target.forward_one(features)?;
        Ok(self.beta * p.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
    }

    /// Bonus for an observed state, then one Adam step of the predictor
    /// toward the target on that state.
    pub fn bonus(&mut self, features: &[f64]) -> Result<f64> {
        let x = Matrix::from_vec(1, features.len(), features.to_vec())?;
        let t = self.target.forward(&x)?;
        let cache = self.predictor.forward_cached(&x)?;
        let p = cache.output();
        let mut upstream = Matrix::zeros(1, p.cols);
        let mut err = 0.0;
        for j in 0..p.cols {
            let d = p.get(0, j) - t.get(0, j);
            err += d * d;
            upstream.set(0, j, 2.0 * d);
        }
        if !err.is_finite() {
            return Err(Error::training(format!("RND prediction error is {err}")));
        }
        let grads = self.predictor.backward(&cache, &upstream)?;
        self.adam.step(&mut self.predictor, &grads)?;
        Ok(self.beta * err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn count_bonus_values() {
        let mut c = CountTable::new(3, 0.5);
        assert!(matches!(c.bonus(0), Err(Error::Usage(_))));
        assert_eq!(c.visit_and_bonus(0), 0.5);
        c.visit(0);
        c.visit(0);
        assert_eq!(c.visit_and_bonus(0), 0.25);
    }

    #[test]
    fn zeta_mass_ratio_and_cap() {
        let mut r = rng::stream(0, "ez");
        assert!((0..100).all(|_| ez_sample_duration(&mut r, 2.0, 1) == 1));
        let mut ones = 0usize;
        let mut twos = 0usize;
        for _ in 0..200_000 {
            match ez_sample_duration(&mut r, 2.0, 100) {
                1 => ones += 1,
                2 => twos += 1,
                _ => {}
            }
        }
        let ratio = ones as f64 / twos as f64;
        assert!((ratio - 4.0).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn zeta_mean_matches_closed_form() {
        let mut r = rng::stream(1, "ez");
        let n = 1_000_000;
        let mean = (0..n).map(|_| ez_sample_duration(&mut r, 2.0, 100) as f64).sum::<f64>() / n as f64;
        let exact = truncated_zeta_mean(2.0, 100);
        assert!((mean / exact - 1.0).abs() < 0.01, "{mean} vs {exact}");
    }

    #[test]
    fn rnd_copy_has_no_bonus_and_training_shrinks_it() {
        let mut r = rng::stream(2, "rnd");
        let target = Mlp::new(&[4, 16, 8], &mut r).unwrap();
        let same = RndPair::from_nets(target.clone(), target.clone(), 1e-3, 1.0);
        assert_eq!(same.peek(&[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.0);

        let predictor = Mlp::new(&[4, 16, 8], &mut r).unwrap();
        let mut pair = RndPair::from_nets(target.clone(), predictor, 1e-3, 1.0);
        let x = [0.5, 0.0, 1.0, 0.5];
        let first = pair.bonus(&x).unwrap();
        let mut last = first;
        for _ in 0..1000 {
            last = pair.bonus(&x).unwrap();
        }
        assert!(last < 1e-3 * first, "{first} -> {last}");
        assert_eq!(pair.target(), &target);
    }
}
