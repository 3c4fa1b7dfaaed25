//! Per-run measurements.

use std::collections::VecDeque;

/// A curve sampled at a fixed step stride.
pub type Curve = Vec<(u64, f64)>;

/// Everything one seed of one run produces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub seed: u64,
    pub steps_taken: u64,
    /// Distinct states visited at least once.
    pub coverage: Curve,
    /// Trailing mean episodic return.
    pub returns: Curve,
    /// Mean representation loss over each stride window.
    pub repr_loss: Curve,
    /// Mean main-learner TD loss over each stride window.
    pub td_loss: Curve,
    /// `first_visit[k]` is the step count at which the `(k+1)`-th distinct
    /// state was first reached; the start state counts at step 0.
    pub first_visit: Vec<u64>,
    /// `(step at episode end, undiscounted return)`.
    pub episode_returns: Vec<(u64, f64)>,
    /// Arrivals per tabular id.
    pub visitation: Vec<u64>,
    pub reachable: usize,
    /// `(state id, action)` per step, when recording was asked for.
    pub trajectory: Vec<(usize, usize)>,
    /// Length of each completed option execution.
    pub option_durations: Vec<usize>,
    /// Steps whose chosen action was replaced by environment noise.
    pub overwrites: u64,
    /// Final eigenfunction values (row per reachable state), when the
    /// algorithm has a representation.
    pub eigen_snapshot: Option<Vec<Vec<f64>>>,
}

impl RunMetrics {
    /// Steps needed to visit `fraction` of the reachable states, if reached.
    pub fn steps_to_coverage(&self, fraction: f64) -> Option<u64> {
        let need = (fraction * self.reachable as f64).ceil().max(1.0) as usize;
        self.first_visit.get(need - 1).copied()
    }

    pub fn final_coverage(&self) -> usize {
        self.first_visit.len()
    }

    pub fn final_return(&self) -> f64 {
        self.returns.last().map_or(0.0, |p| p.1)
    }
}

/// Distinct-state counter.
#[derive(Debug, Clone)]
pub struct Coverage {
    seen: Vec<bool>,
    count: usize,
}

impl Coverage {
    pub fn new(num_ids: usize) -> Self {
        Coverage { seen: vec![false; num_ids], count: 0 }
    }

    /// Mark `id`; true if it was new.
    pub fn visit(&mut self, id: usize) -> bool {
        if self.seen[id] {
            return false;
        }
        self.seen[id] = true;
        self.count += 1;
        true
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Number of distinct ids in `visits`.
pub fn coverage_metric(visits: &[usize]) -> usize {
    let mut ids = visits.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

/// Mean of the most recent `window` episode returns.
#[derive(Debug, Clone)]
pub struct TrailingMean {
    window: usize,
    buf: VecDeque<f64>,
}

impl TrailingMean {
    pub fn new(window: usize) -> Self {
        TrailingMean { window, buf: VecDeque::with_capacity(window) }
    }

    pub fn push(&mut self, x: f64) {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(x);
    }

    /// 0 before any episode has finished.
    pub fn mean(&self) -> f64 {
        if self.buf.is_empty() {
            0.0
        } else {
            self.buf.iter().sum::<f64>() / self.buf.len() as f64
        }
    }
}

/// Running mean that resets when read.
#[derive(Debug, Clone, Default)]
pub struct WindowMean {
    sum: f64,
    n: u64,
}

impl WindowMean {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    /// Mean since the last take, or `None` if nothing was pushed.
    pub fn take(&mut self) -> Option<f64> {
        let out = (self.n > 0).then(|| self.sum / self.n as f64);
        *self = WindowMean::default();
        out
    }
}
