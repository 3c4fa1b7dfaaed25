//! Tabular eigenoptions from an empirical model of visited transitions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng as _;

use crate::agents::argmax_uniform;
use crate::env::EnvState;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::spectral::{eigendecompose, EigenSystem, GraphLaplacian, LaplacianKind};

/// Observed transition counts, keyed by `(state, action)`.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalModel {
    num_actions: usize,
    counts: BTreeMap<(usize, usize), BTreeMap<usize, u64>>,
    /// States where an episode ended by reaching a goal.
    terminal: BTreeSet<usize>,
}

impl EmpiricalModel {
    pub fn new(num_actions: usize) -> Self {
        EmpiricalModel { num_actions, ..Default::default() }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn observe(&mut self, s: usize, a: usize, s_next: usize, goal_reached: bool) {
        *self.counts.entry((s, a)).or_default().entry(s_next).or_default() += 1;
        if goal_reached {
            self.terminal.insert(s_next);
        }
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal.contains(&s)
    }

    /// Most frequent successor of `(s, a)`; ties go to the smaller id.
    pub fn next_state(&self, s: usize, a: usize) -> Option<usize> {
        let succ = self.counts.get(&(s, a))?;
        let mut best: Option<(usize, u64)> = None;
        for (&id, &c) in succ {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((id, c));
            }
        }
        best.map(|(id, _)| id)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Ids of the connected component of the observed transition graph that
    /// contains `anchor`, ascending.
    pub fn component(&self, anchor: usize) -> Vec<usize> {
        let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (&(s, _), succ) in &self.counts {
            for &t in succ.keys() {
                if s != t {
                    adj.entry(s).or_default().insert(t);
                    adj.entry(t).or_default().insert(s);
                }
            }
        }
        let mut seen = BTreeSet::from([anchor]);
        let mut queue = VecDeque::from([anchor]);
        while let Some(s) = queue.pop_front() {
            for &t in adj.get(&s).into_iter().flatten() {
                if seen.insert(t) {
                    queue.push_back(t);
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Combinatorial Laplacian of the component containing `anchor`.
    pub fn laplacian(&self, anchor: usize) -> Result<GraphLaplacian> {
        let ids = self.component(anchor);
        let local: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut edges = Vec::new();
        for (&(s, _), succ) in &self.counts {
            let Some(&i) = local.get(&s) else { continue };
            for t in succ.keys() {
                if let Some(&j) = local.get(t) {
                    edges.push((i, j));
                }
            }
        }
        GraphLaplacian::from_edges(ids, edges, LaplacianKind::Combinatorial, "empirical-transitions")
    }
}

/// Settings for [`discover_options`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryConfig {
    pub num_options: usize,
    /// Skip the constant eigenfunction.
    pub skip_constant: bool,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Internal policy jitter.
    pub epsilon: f64,
    /// Reward each option with the eigenfunction oriented so the anchor sits
    /// at or below zero, which sends options away from the anchor. When
    /// false the anchor-positive orientation is used as is.
    pub outward: bool,
}

/// Option values over the empirical model, one table per eigenfunction.
/// Unobserved `(state, action)` pairs carry no value.
#[derive(Debug, Clone)]
pub struct TabularOptions {
    num_actions: usize,
    index: BTreeMap<usize, usize>,
    /// Per option, `local_state * num_actions + action -> Q`, NaN when unobserved.
    values: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub eigen: EigenSystem,
    /// Eigenfunction index behind each option.
    pub eigen_index: Vec<usize>,
    /// Sweeps used by value iteration, per option.
    pub sweeps: Vec<usize>,
}

impl TabularOptions {
    pub fn q(&self, o: usize, s: usize, a: usize) -> Option<f64> {
        let &i = self.index.get(&s)?;
        let v = self.values[o][i * self.num_actions + a];
        (!v.is_nan()).then_some(v)
    }

    fn known(&self, o: usize, s: usize) -> Vec<(usize, f64)> {
        (0..self.num_actions).filter_map(|a| self.q(o, s, a).map(|q| (a, q))).collect()
    }

    /// Best known value at `s`, or `None` when no action was observed there.
    pub fn max_q(&self, o: usize, s: usize) -> Option<f64> {
        self.known(o, s).into_iter().map(|(_, q)| q).reduce(f64::max)
    }
}

impl super::OptionSet for TabularOptions {
    fn len(&self) -> usize {
        self.values.len()
    }

    fn action(&self, o: usize, state: &EnvState, rng: &mut Rng) -> Result<usize> {
        let known = self.known(o, state.tabular_id);
        if known.is_empty() || rng.gen::<f64>() < self.epsilon {
            return Ok(rng.gen_range(0..self.num_actions));
        }
        let qs: Vec<f64> = known.iter().map(|&(_, q)| q).collect();
        Ok(known[argmax_uniform(&qs, rng)].0)
    }

    fn terminates(&self, o: usize, state: &EnvState, _: &mut Rng) -> Result<bool> {
        if o >= self.values.len() {
            return Err(Error::usage(format!("option {o} does not exist")));
        }
        Ok(self.max_q(o, state.tabular_id).is_none_or(|q| q <= 0.0))
    }
}

/// Eigendecompose the empirical Laplacian around `anchor` and solve each
/// option's task by Gauss-Seidel value iteration on the most-frequent-successor
/// model. An option may stop anywhere at value 0, so backed-up values are
/// `max(0, max_a Q)`.
pub fn discover_options(model: &EmpiricalModel, anchor: usize, cfg: &DiscoveryConfig) -> Result<TabularOptions> {
    let lap = model.laplacian(anchor)?;
    let skip = usize::from(cfg.skip_constant);
    let count = cfg.num_options.min(lap.n.saturating_sub(skip));
    let eigen = eigendecompose(&lap, (count + skip).min(lap.n), anchor)?;
    let a_n = model.num_actions();
    let index: BTreeMap<usize, usize> = eigen.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let n = index.len();
    let terminal: Vec<bool> = eigen.ids.iter().map(|&id| model.is_terminal(id)).collect();

    // (local s, action, local successor)
    let mut transitions = Vec::new();
    for (i, &s) in eigen.ids.iter().enumerate() {
        if terminal[i] {
            continue;
        }
        for a in 0..a_n {
            if let Some(t) = model.next_state(s, a).and_then(|t| index.get(&t)) {
                transitions.push((i, a, *t));
            }
        }
    }

    let mut values = Vec::with_capacity(count);
    let mut sweeps = Vec::with_capacity(count);
    let eigen_index: Vec<usize> = (skip..skip + count).collect();
    for &k in &eigen_index {
        let f: Vec<f64> = if cfg.outward {
            eigen.eigenfunctions[k].iter().map(|x| -x).collect()
        } else {
            eigen.eigenfunctions[k].clone()
        };
        let mut q = vec![f64::NAN; n * a_n];
        for &(s, a, _) in &transitions {
            q[s * a_n + a] = 0.0;
        }
        let mut v = vec![0.0; n];
        let mut used = 0;
        for sweep in 1..=cfg.max_sweeps {
            used = sweep;
            let mut delta: f64 = 0.0;
            for &(s, a, t) in &transitions {
                let boot = if terminal[t] { 0.0 } else { v[t] };
                let new = f[t] - f[s] + cfg.gamma * boot;
                delta = delta.max((new - q[s * a_n + a]).abs());
                q[s * a_n + a] = new;
                v[s] = q[s * a_n..(s + 1) * a_n].iter().filter(|x| !x.is_nan()).fold(0.0, |m, &x| f64::max(m, x));
            }
            if delta < cfg.tolerance {
                break;
            }
        }
        values.push(q);
        sweeps.push(used);
    }
    Ok(TabularOptions { num_actions: a_n, index, values, epsilon: cfg.epsilon, eigen, eigen_index, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::options::OptionSet;
    use crate::rng;
    use std::sync::Arc;

    fn st(id: usize) -> EnvState {
        EnvState { tabular_id: id, features: Arc::from(vec![id as f64]) }
    }

    /// A 5-state path 0-1-2-3-4 with actions left (0) and right (1).
    fn path_model() -> EmpiricalModel {
        let mut m = EmpiricalModel::new(2);
        for s in 0..5usize {
            m.observe(s, 0, s.saturating_sub(1), false);
            m.observe(s, 1, (s + 1).min(4), false);
        }
        m
    }

    fn cfg(n: usize) -> DiscoveryConfig {
        DiscoveryConfig {
            num_options: n,
            skip_constant: true,
            gamma: 0.9,
            tolerance: 1e-10,
            max_sweeps: 1000,
            epsilon: 0.0,
            outward: false,
        }
    }

    #[test]
    fn mode_successor_and_ties() {
        let mut m = EmpiricalModel::new(2);
        m.observe(0, 0, 3, false);
        m.observe(0, 0, 1, false);
        assert_eq!(m.next_state(0, 0), Some(1));
        m.observe(0, 0, 3, false);
        assert_eq!(m.next_state(0, 0), Some(3));
        assert_eq!(m.next_state(0, 1), None);
    }

    #[test]
    fn component_ignores_unreached_states() {
        let mut m = path_model();
        m.observe(10, 0, 11, false);
        assert_eq!(m.component(0), vec![0, 1, 2, 3, 4]);
        assert_eq!(m.laplacian(0).unwrap().n, 5);
    }

    #[test]
    fn fiedler_option_climbs_to_the_far_end() {
        // anchor 0 makes e2(0) ≥ 0, so e2 decreases along the path and its
        // option heads back to 0; the values must telescope exactly.
        let opts = discover_options(&path_model(), 0, &cfg(1)).unwrap();
        assert_eq!(opts.len(), 1);
        let e = |id| opts.eigen.value(1, id).unwrap();
        assert!(e(0) > e(4));
        let mut r = rng::stream(0, "o");
        for s in 1..5 {
            assert_eq!(opts.action(0, &st(s), &mut r).unwrap(), 0);
            assert!(!opts.terminates(0, &st(s), &mut r).unwrap());
        }
        assert!(opts.terminates(0, &st(0), &mut r).unwrap());
        // from state 1, stepping left gains e(0)-e(1) and then stops
        assert!((opts.q(0, 1, 0).unwrap() - (e(0) - e(1))).abs() < 1e-9);
    }

    #[test]
    fn outward_option_leaves_the_anchor() {
        let opts = discover_options(&path_model(), 0, &DiscoveryConfig { outward: true, ..cfg(1) }).unwrap();
        let mut r = rng::stream(0, "o");
        for s in 0..4 {
            assert_eq!(opts.action(0, &st(s), &mut r).unwrap(), 1);
        }
        assert!(opts.terminates(0, &st(4), &mut r).unwrap());
    }

    #[test]
    fn option_count_is_capped_by_graph_size() {
        let opts = discover_options(&path_model(), 0, &cfg(10)).unwrap();
        assert_eq!(opts.len(), 4);
        assert_eq!(opts.eigen_index, vec![1, 2, 3, 4]);
    }

    #[test]
    fn all_negative_values_terminate() {
        let mut opts = discover_options(&path_model(), 0, &cfg(1)).unwrap();
        for v in opts.values[0].iter_mut().filter(|v| !v.is_nan()) {
            *v = -1.0;
        }
        assert!(opts.terminates(0, &st(2), &mut rng::stream(0, "o")).unwrap());
    }

    #[test]
    fn unknown_state_terminates_and_acts_randomly() {
        let opts = discover_options(&path_model(), 0, &cfg(1)).unwrap();
        let mut r = rng::stream(0, "o");
        assert!(opts.terminates(0, &st(42), &mut r).unwrap());
        assert!(opts.action(0, &st(42), &mut r).unwrap() < 2);
    }

    #[test]
    fn values_satisfy_bellman_optimality() {
        let model = path_model();
        let opts = discover_options(&model, 0, &cfg(3)).unwrap();
        for o in 0..3 {
            let i = opts.eigen_index[o];
            for s in 0..5 {
                for a in 0..2 {
                    let t = model.next_state(s, a).unwrap();
                    let boot = opts.max_q(o, t).unwrap().max(0.0);
                    let target = opts.eigen.value(i, t).unwrap() - opts.eigen.value(i, s).unwrap() + 0.9 * boot;
                    assert!((opts.q(o, s, a).unwrap() - target).abs() < 1e-8);
                }
            }
        }
    }
}
