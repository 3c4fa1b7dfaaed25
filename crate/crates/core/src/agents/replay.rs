//! Ring-buffer experience replay with n-step segment sampling.

use rand::Rng as _;

use crate::env::EnvState;
use crate::nn::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: usize,
    /// Reward as stored, including any exploration bonus.
    pub reward: f64,
    pub next_state: EnvState,
    /// A goal was reached: nothing bootstraps past this transition.
    pub episode_end: bool,
    /// The step cap cut the episode here; bootstrapping still applies.
    pub truncated: bool,
}

impl Transition {
    pub fn boundary(&self) -> bool {
        self.episode_end || self.truncated
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once the ring is full.
    head: usize,
}

/// Up to `n` consecutive transitions, cut after the first episode boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    /// Chronological index of the first transition (0 = oldest stored).
    pub start: usize,
    pub len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), head: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Transition by chronological index, 0 being the oldest.
    pub fn get(&self, i: usize) -> &Transition {
        let idx = if self.items.len() < self.capacity { i } else { (self.head + i) % self.capacity };
        &self.items[idx]
    }

    /// `count` transitions drawn uniformly with replacement, or `None` if
    /// fewer than `count` are stored.
    pub fn sample(&self, count: usize, rng: &mut Rng) -> Option<Vec<&Transition>> {
        if self.len() < count || self.is_empty() {
            return None;
        }
        Some((0..count).map(|_| self.get(rng.gen_range(0..self.len()))).collect())
    }

    /// `count` segments of at most `n` transitions. Starts are uniform over
    /// `[0, len - n]`; a segment ends early after an episode boundary.
    /// `None` when fewer than `n` transitions are stored.
    pub fn sample_segments(&self, count: usize, n: usize, rng: &mut Rng) -> Option<Vec<Segment>> {
        if n == 0 || self.len() < n || count == 0 {
            return None;
        }
        let last_start = self.len() - n;
        Some(
            (0..count)
                .map(|_| {
                    let start = rng.gen_range(0..=last_start);
                    self.segment_at(start, n)
                })
                .collect(),
        )
    }

    pub fn segment_at(&self, start: usize, n: usize) -> Segment {
        let mut len = 0;
        while len < n && start + len < self.len() {
            len += 1;
            if self.get(start + len - 1).boundary() {
                break;
            }
        }
        Segment { start, len }
    }

    pub fn segment(&self, seg: Segment) -> impl Iterator<Item = &Transition> {
        (seg.start..seg.start + seg.len).map(move |i| self.get(i))
    }
}

/// Matrices and bookkeeping for a minibatch of segments, shared between the
/// main learner and the option learners.
#[derive(Debug, Clone)]
pub struct SegmentBatch {
    /// First state of each segment, `m × features`.
    pub start: Matrix,
    /// State after the last transition of each segment.
    pub bootstrap: Matrix,
    pub actions: Vec<usize>,
    /// Stored rewards per segment, in order.
    pub rewards: Vec<Vec<f64>>,
    /// No bootstrap term (the segment ended on a goal).
    pub terminal: Vec<bool>,
    /// Visited states `s_0 .. s_len` per segment, for intrinsic rewards.
    pub states: Vec<Vec<EnvState>>,
}

impl SegmentBatch {
    pub fn build(buffer: &ReplayBuffer, segments: &[Segment]) -> SegmentBatch {
        let width = buffer.get(segments[0].start).state.features.len();
        let m = segments.len();
        let mut start = Matrix::zeros(m, width);
        let mut bootstrap = Matrix::zeros(m, width);
        let mut actions = Vec::with_capacity(m);
        let mut rewards = Vec::with_capacity(m);
        let mut terminal = Vec::with_capacity(m);
        let mut states = Vec::with_capacity(m);
        for (i, &seg) in segments.iter().enumerate() {
            let ts: Vec<&Transition> = buffer.segment(seg).collect();
            let first = ts[0];
            let last = ts[ts.len() - 1];
            start.row_mut(i).copy_from_slice(&first.state.features);
            bootstrap.row_mut(i).copy_from_slice(&last.next_state.features);
            actions.push(first.action);
            rewards.push(ts.iter().map(|t| t.reward).collect());
            terminal.push(last.episode_end);
            let mut path = Vec::with_capacity(ts.len() + 1);
            path.push(first.state.clone());
            path.extend(ts.iter().map(|t| t.next_state.clone()));
            states.push(path);
        }
        SegmentBatch { start, bootstrap, actions, rewards, terminal, states }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::sync::Arc;

    fn state(id: usize) -> EnvState {
        EnvState { tabular_id: id, features: Arc::from(vec![id as f64]) }
    }

    fn t(id: usize, end: bool) -> Transition {
        Transition {
            state: state(id),
            action: 0,
            reward: id as f64,
            next_state: state(id + 1),
            episode_end: end,
            truncated: false,
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut b = ReplayBuffer::new(2);
        for i in 0..3 {
            b.push(t(i, false));
        }
        assert_eq!(b.len(), 2);
        assert_eq!(b.get(0).reward, 1.0);
        assert_eq!(b.get(1).reward, 2.0);
    }

    #[test]
    fn exactly_n_items_gives_the_single_segment() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..3 {
            b.push(t(i, false));
        }
        let segs = b.sample_segments(5, 3, &mut rng::stream(0, "s")).unwrap();
        assert!(segs.iter().all(|s| *s == Segment { start: 0, len: 3 }));
        assert!(b.sample_segments(1, 4, &mut rng::stream(0, "s")).is_none());
    }

    #[test]
    fn zero_capacity_never_samples() {
        let mut b = ReplayBuffer::new(0);
        b.push(t(0, false));
        assert!(b.is_empty());
        assert!(b.sample(1, &mut rng::stream(0, "s")).is_none());
    }

    #[test]
    fn segments_stop_at_episode_boundary() {
        // episode A: 0,1,2(goal); episode B: 10,11,12,13
        let mut b = ReplayBuffer::new(10);
        b.push(t(0, false));
        b.push(t(1, false));
        b.push(t(2, true));
        for i in 10..14 {
            b.push(t(i, false));
        }
        assert_eq!(b.segment_at(1, 3), Segment { start: 1, len: 2 });
        assert_eq!(b.segment_at(2, 3), Segment { start: 2, len: 1 });
        assert_eq!(b.segment_at(3, 3), Segment { start: 3, len: 3 });
        let batch = SegmentBatch::build(&b, &[b.segment_at(1, 3), b.segment_at(3, 3)]);
        assert_eq!(batch.terminal, vec![true, false]);
        assert_eq!(batch.rewards[0], vec![1.0, 2.0]);
        assert_eq!(batch.bootstrap.data, vec![3.0, 13.0]);
        assert_eq!(batch.states[1].iter().map(|s| s.tabular_id).collect::<Vec<_>>(), vec![10, 11, 12, 13]);
    }

    #[test]
    fn truncation_cuts_but_keeps_bootstrap() {
        let mut b = ReplayBuffer::new(4);
        let mut cut = t(0, false);
        cut.truncated = true;
        b.push(cut);
        b.push(t(5, false));
        let seg = b.segment_at(0, 2);
        assert_eq!(seg.len, 1);
        assert_eq!(SegmentBatch::build(&b, &[seg]).terminal, vec![false]);
    }

    #[test]
    fn wrapped_ring_keeps_chronology() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..7 {
            b.push(t(i, false));
        }
        let order: Vec<f64> = (0..3).map(|i| b.get(i).reward).collect();
        assert_eq!(order, vec![4.0, 5.0, 6.0]);
        let seg = b.segment_at(0, 3);
        assert_eq!(b.segment(seg).map(|t| t.reward).collect::<Vec<_>>(), vec![4.0, 5.0, 6.0]);
    }
}
