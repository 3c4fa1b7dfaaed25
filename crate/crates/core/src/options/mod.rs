//! Options driven by Laplacian eigenfunctions, and the action-selection rule
//! that mixes them with a main learner.
//!
//! Each option `i` is rewarded by `f_i(s') - f_i(s)`. Deep options end with
//! probability `1/D` per step; tabular options end where their values stop
//! being positive (`max_a Q_i(s,a) ≤ 0`). The policy over options is
//! uniform.

pub mod controller;
pub mod tabular;

use rand::Rng as _;

pub use controller::run_controller;
pub use tabular::{discover_options, EmpiricalModel, TabularOptions};

use crate::agents::{argmax_uniform, DeepQ};
use crate::env::EnvState;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Which option is running. `terminated` is always true when no option is
/// active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptionState {
    pub active: Option<usize>,
    pub terminated: bool,
}

impl Default for OptionState {
    fn default() -> Self {
        OptionState { active: None, terminated: true }
    }
}

impl OptionState {
    /// Deactivate, as at an episode boundary.
    pub fn reset(&mut self) {
        *self = OptionState::default();
    }
}

/// A set of options the controller can run.
pub trait OptionSet {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Action of option `o` at `state`.
    fn action(&self, o: usize, state: &EnvState, rng: &mut Rng) -> Result<usize>;

    /// Whether option `o` stops at `state`.
    fn terminates(&self, o: usize, state: &EnvState, rng: &mut Rng) -> Result<bool>;
}

/// The empty option set.
pub struct NoOptions;

impl OptionSet for NoOptions {
    fn len(&self) -> usize {
        0
    }

    fn action(&self, o: usize, _: &EnvState, _: &mut Rng) -> Result<usize> {
        Err(Error::usage(format!("option {o} does not exist")))
    }

    fn terminates(&self, o: usize, _: &EnvState, _: &mut Rng) -> Result<bool> {
        Err(Error::usage(format!("option {o} does not exist")))
    }
}

/// Termination test for the active option.
pub fn should_terminate(st: &OptionState, options: &dyn OptionSet, state: &EnvState, rng: &mut Rng) -> Result<bool> {
    let o = st.active.ok_or_else(|| Error::usage("no option is active"))?;
    options.terminates(o, state, rng)
}

/// `f_i(s') - f_i(s)`.
pub fn intrinsic_reward(values_s: &[f64], values_next: &[f64], i: usize) -> f64 {
    values_next[i] - values_s[i]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Choice {
    pub action: usize,
    /// Option that produced the action, if any.
    pub option: Option<usize>,
    /// A fresh option was picked on this step.
    pub option_started: bool,
}

/// One step of action selection.
///
/// If an option is running it may terminate first. With no running option,
/// the agent explores with probability `epsilon`: with probability `mu` it
/// starts a uniformly drawn option and takes its action, otherwise it takes
/// a uniformly random primitive action. Without exploration it acts greedily
/// through `greedy`. A running option that did not terminate picks the
/// action.
///
/// Draws that decide exploration, random primitive actions and greedy
/// tie-breaks come from `act_rng`; everything option-related comes from
/// `option_rng`. With `mu = 0` the `act_rng` sequence is therefore the same
/// as plain ε-greedy.
#[allow(clippy::too_many_arguments)]
pub fn act(
    st: &mut OptionState,
    options: &dyn OptionSet,
    state: &EnvState,
    epsilon: f64,
    mu: f64,
    num_actions: usize,
    act_rng: &mut Rng,
    option_rng: &mut Rng,
    greedy: impl FnOnce(&mut Rng) -> Result<usize>,
) -> Result<Choice> {
    if !st.terminated && should_terminate(st, options, state, option_rng)? {
        st.terminated = true;
    }
    if !st.terminated {
        let o = st.active.expect("running option");
        return Ok(Choice { action: options.action(o, state, option_rng)?, option: Some(o), option_started: false });
    }
    if act_rng.gen::<f64>() < epsilon {
        if option_rng.gen::<f64>() < mu && !options.is_empty() {
            let o = option_rng.gen_range(0..options.len());
            st.active = Some(o);
            st.terminated = false;
            let action = options.action(o, state, option_rng)?;
            return Ok(Choice { action, option: Some(o), option_started: true });
        }
        st.reset();
        return Ok(Choice { action: act_rng.gen_range(0..num_actions), option: None, option_started: false });
    }
    st.reset();
    Ok(Choice { action: greedy(act_rng)?, option: None, option_started: false })
}

/// Deep options: one Double DQN learner per eigenfunction, random
/// termination with mean duration `D`, and a near-greedy internal policy.
#[derive(Debug, Clone)]
pub struct DeepOptions {
    pub learners: Vec<DeepQ>,
    pub duration: f64,
    /// Internal policy jitter.
    pub epsilon: f64,
}

impl OptionSet for DeepOptions {
    fn len(&self) -> usize {
        self.learners.len()
    }

    fn action(&self, o: usize, state: &EnvState, rng: &mut Rng) -> Result<usize> {
        let q = &self.learners[o];
        if rng.gen::<f64>() < self.epsilon {
            return Ok(rng.gen_range(0..q.num_actions()));
        }
        Ok(argmax_uniform(&q.q_values(&state.features)?, rng))
    }

    fn terminates(&self, _: usize, _: &EnvState, rng: &mut Rng) -> Result<bool> {
        Ok(rng.gen::<f64>() < 1.0 / self.duration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::DeepQConfig;
    use crate::rng;
    use std::sync::Arc;

    fn state() -> EnvState {
        EnvState { tabular_id: 0, features: Arc::from(vec![1.0, 0.0]) }
    }

    fn deep_options(n: usize, duration: f64) -> DeepOptions {
        let mut r = rng::stream(0, "opts");
        let cfg = DeepQConfig { hidden: vec![4], ..Default::default() };
        DeepOptions {
            learners: (0..n).map(|_| DeepQ::new(2, 4, &cfg, &mut r).unwrap()).collect(),
            duration,
            epsilon: 0.01,
        }
    }

    #[test]
    fn intrinsic_reward_properties() {
        assert_eq!(intrinsic_reward(&[0.3], &[0.3], 0), 0.0);
        let path = [[0.1], [0.4], [-0.2], [0.9]];
        let total: f64 = path.windows(2).map(|w| intrinsic_reward(&w[0], &w[1], 0)).sum();
        assert!((total - (0.9 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn terminate_without_option_is_usage_error() {
        let opts = deep_options(1, 10.0);
        let st = OptionState::default();
        assert!(matches!(should_terminate(&st, &opts, &state(), &mut rng::stream(0, "t")), Err(Error::Usage(_))));
    }

    #[test]
    fn unit_duration_always_terminates() {
        let opts = deep_options(1, 1.0);
        let st = OptionState { active: Some(0), terminated: false };
        let mut r = rng::stream(0, "t");
        assert!((0..1000).all(|_| should_terminate(&st, &opts, &state(), &mut r).unwrap()));
    }

    #[test]
    fn termination_rate_is_one_over_d() {
        let opts = deep_options(1, 10.0);
        let st = OptionState { active: Some(0), terminated: false };
        let mut r = rng::stream(1, "t");
        let n = 100_000;
        let hits = (0..n).filter(|_| should_terminate(&st, &opts, &state(), &mut r).unwrap()).count();
        assert!((hits as f64 / n as f64 - 0.1).abs() < 0.005);
    }

    #[test]
    fn zero_epsilon_is_always_greedy() {
        let opts = deep_options(2, 10.0);
        let mut st = OptionState::default();
        let (mut a, mut o) = (rng::stream(0, "a"), rng::stream(0, "o"));
        for _ in 0..100 {
            let c = act(&mut st, &opts, &state(), 0.0, 1.0, 4, &mut a, &mut o, |_| Ok(3)).unwrap();
            assert_eq!(c.action, 3);
            assert_eq!(st.active, None);
        }
    }

    #[test]
    fn no_mu_is_uniform_random() {
        let opts = deep_options(2, 10.0);
        let mut st = OptionState::default();
        let (mut a, mut o) = (rng::stream(0, "a"), rng::stream(0, "o"));
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            let c = act(&mut st, &opts, &state(), 1.0, 0.0, 4, &mut a, &mut o, |_| unreachable!()).unwrap();
            assert_eq!(c.option, None);
            counts[c.action] += 1;
        }
        assert!(counts.iter().all(|&c| c > 850));
    }

    #[test]
    fn running_option_blocks_greedy() {
        let opts = deep_options(1, 10.0);
        let mut st = OptionState::default();
        let (mut a, mut o) = (rng::stream(2, "a"), rng::stream(2, "o"));
        let mut lengths = Vec::new();
        let mut current = 0;
        for _ in 0..50_000 {
            let c = act(&mut st, &opts, &state(), 1.0, 1.0, 4, &mut a, &mut o, |_| unreachable!()).unwrap();
            assert_eq!(c.option, Some(0));
            if c.option_started && current > 0 {
                lengths.push(current);
                current = 0;
            }
            current += 1;
        }
        let mean = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
        assert!((mean - 10.0).abs() < 0.5, "{mean}");
    }
}
