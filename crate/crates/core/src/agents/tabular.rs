//! Tabular Q-learning.

use rand::Rng as _;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    pub num_states: usize,
    pub num_actions: usize,
    pub alpha: f64,
    pub gamma: f64,
    table: Vec<f64>,
}

impl TabularQ {
    pub fn new(num_states: usize, num_actions: usize, alpha: f64, gamma: f64) -> Self {
        TabularQ { num_states, num_actions, alpha, gamma, table: vec![0.0; num_states * num_actions] }
    }

    #[inline]
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.table[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.table[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn max_q(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Q(s,a) += α [r + γ max_a' Q(s',a') (1 - done) - Q(s,a)]`.
    pub fn update(&mut self, s: usize, a: usize, r: f64, s_next: usize, done: bool) {
        let bootstrap = if done { 0.0 } else { self.gamma * self.max_q(s_next) };
        let i = s * self.num_actions + a;
        self.table[i] += self.alpha * (r + bootstrap - self.table[i]);
    }

    /// Greedy action, ties broken uniformly.
    pub fn greedy(&self, s: usize, rng: &mut Rng) -> usize {
        argmax_uniform(self.row(s), rng)
    }
}

/// Index of a maximal entry, uniform among ties. Draws from `rng` only when
/// there is more than one maximizer.
pub fn argmax_uniform(values: &[f64], rng: &mut Rng) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = values.iter().filter(|&&v| v == best).count();
    let pick = if ties > 1 { rng.gen_range(0..ties) } else { 0 };
    values.iter().enumerate().filter(|(_, &v)| v == best).nth(pick).map(|(i, _)| i).unwrap_or(0)
}

/// Index of the first maximal entry.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_step_size_changes_nothing() {
        let mut q = TabularQ::new(2, 2, 0.0, 0.9);
        q.update(0, 1, 5.0, 1, false);
        assert_eq!(q.q(0, 1), 0.0);
    }

    #[test]
    fn terminal_reward_from_zero_table() {
        let mut q = TabularQ::new(2, 2, 0.3, 0.9);
        q.update(0, 1, 1.0, 1, true);
        assert_eq!(q.q(0, 1), 0.3);
        assert_eq!(q.q(0, 0), 0.0);
    }

    #[test]
    fn two_state_chain_converges() {
        // 0 -> 1 -> terminal(+1)
        let mut q = TabularQ::new(2, 1, 0.1, 0.9);
        for _ in 0..1000 {
            q.update(0, 0, 0.0, 1, false);
            q.update(1, 0, 1.0, 1, true);
        }
        assert!((q.q(1, 0) - 1.0).abs() < 1e-6);
        assert!((q.q(0, 0) - 0.9).abs() < 1e-6);
    }

    #[test]
    fn ties_are_broken_uniformly() {
        let mut r = rng::stream(0, "ties");
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            counts[argmax_uniform(&[1.0, 0.0, 1.0], &mut r)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert!(counts[0] > 1300 && counts[2] > 1300);
        assert_eq!(argmax_first(&[0.0, 2.0, 2.0]), 1);
    }
}
