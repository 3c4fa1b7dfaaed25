//! The agent-environment loop for every algorithm.

use rand::Rng as _;

use crate::agents::{DeepQ, DeepQConfig, ReplayBuffer, SegmentBatch, TabularQ, Transition};
use crate::baselines::{ez_sample_duration, CountTable, EzGreedyState, RndPair};
use crate::config::{Algorithm, Learner, RunConfig};
use crate::env::EnvState;
use crate::error::{Error, Result};
use crate::metrics::{Coverage, RunMetrics, TrailingMean, WindowMean};
use crate::repr::{LaplacianRepr, ReprConfig};
use crate::rng::{self, Rng};

use super::tabular::{discover_options, DiscoveryConfig, EmpiricalModel, TabularOptions};
use super::{act, DeepOptions, NoOptions, OptionSet, OptionState};

/// What happened on one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEvent {
    /// Global step index, from 0.
    pub t: u64,
    pub state_id: usize,
    pub action: usize,
    pub option: Option<usize>,
    /// The option was picked on this step rather than continued.
    pub option_started: bool,
    /// Extrinsic reward from the environment.
    pub reward: f64,
    /// Reward handed to the main learner (extrinsic plus any bonus).
    pub learner_reward: f64,
    pub next_id: usize,
    pub episode_over: bool,
    /// Main-learner updates so far, including this step's.
    pub main_updates: u64,
    /// Option-learner updates so far, summed over options.
    pub option_updates: u64,
}

enum Main {
    Uniform,
    Tabular(TabularQ),
    Deep(Box<DeepQ>),
}

enum Options {
    None,
    Tabular { model: EmpiricalModel, current: Option<TabularOptions>, cfg: DiscoveryConfig },
    Deep { set: DeepOptions, repr: LaplacianRepr, rewards: RewardMap },
}

impl Options {
    fn as_set(&self) -> &dyn OptionSet {
        match self {
            Options::Tabular { current: Some(o), .. } => o,
            Options::Deep { set, .. } => set,
            _ => &NoOptions,
        }
    }
}

struct Streams {
    env: Rng,
    act: Rng,
    option: Rng,
    sample: Rng,
    option_sample: Rng,
    repr: Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            env: rng::stream(seed, "env"),
            act: rng::stream(seed, "act"),
            option: rng::stream(seed, "option"),
            sample: rng::stream(seed, "sample"),
            option_sample: rng::stream(seed, "option-sample"),
            repr: rng::stream(seed, "repr"),
        }
    }
}

fn deep_cfg(cfg: &RunConfig, hidden: &[usize]) -> DeepQConfig {
    DeepQConfig { hidden: hidden.to_vec(), lr: cfg.lr, gamma: cfg.gamma, n: cfg.n_step, sync_period: cfg.sync_period }
}

/// Run one seed of a configured experiment.
pub fn run_controller(cfg: &RunConfig, seed: u64) -> Result<RunMetrics> {
    run_controller_observed(cfg, seed, &mut |_| {})
}

/// [`run_controller`], reporting every step to `observer`.
pub fn run_controller_observed(cfg: &RunConfig, seed: u64, observer: &mut dyn FnMut(&StepEvent)) -> Result<RunMetrics> {
    cfg.validate()?;
    let mut env = cfg.make_env()?;
    let schedule = cfg.schedule()?;
    let mut rs = Streams::new(seed);
    let num_actions = env.num_actions();
    let input = env.feature_dim();
    let algo = cfg.algorithm;
    let deep = cfg.learner == Learner::Deep;

    let mut main = match (algo, cfg.learner) {
        (Algorithm::Random, _) => Main::Uniform,
        (_, Learner::Tabular) => Main::Tabular(TabularQ::new(env.num_ids(), num_actions, cfg.alpha, cfg.gamma)),
        (_, Learner::Deep) => Main::Deep(Box::new(DeepQ::new(
            input,
            num_actions,
            &deep_cfg(cfg, &cfg.hidden),
            &mut rng::stream(seed, "init-main"),
        )?)),
    };
    let mut options = match algo {
        Algorithm::Ceo => Options::Tabular {
            model: EmpiricalModel::new(num_actions),
            current: None,
            cfg: DiscoveryConfig {
                num_options: cfg.num_options,
                skip_constant: cfg.skip_constant,
                gamma: cfg.gamma,
                tolerance: cfg.ceo_vi_tolerance,
                max_sweeps: cfg.ceo_vi_max_sweeps,
                epsilon: cfg.option_epsilon,
                outward: cfg.outward,
            },
        },
        Algorithm::DceoOnline | Algorithm::DceoTwoPhased => {
            let ocfg = deep_cfg(cfg, &cfg.option_hidden);
            let learners = (0..cfg.num_options)
                .map(|i| DeepQ::new(input, num_actions, &ocfg, &mut rng::stream(seed, &format!("init-option-{i}"))))
                .collect::<Result<Vec<_>>>()?;
            let rcfg = ReprConfig {
                d: cfg.repr_d,
                hidden: cfg.repr_hidden.clone(),
                beta: cfg.repr_beta,
                lr: cfg.repr_lr,
                batch_size: cfg.repr_batch_size,
                loss: cfg.repr_loss,
                input_offset: cfg.repr_input_offset,
            };
            Options::Deep {
                set: DeepOptions { learners, duration: cfg.option_duration, epsilon: cfg.option_epsilon },
                repr: LaplacianRepr::new(input, &rcfg, &mut rng::stream(seed, "init-repr"))?,
                rewards: RewardMap {
                    skip: usize::from(cfg.skip_constant),
                    anchor: if cfg.outward { Some(env.state(env.start_id())) } else { None },
                },
            }
        }
        _ => Options::None,
    };
    let mut counts = (algo == Algorithm::Count).then(|| CountTable::new(env.num_ids(), cfg.count_beta));
    let mut rnd = if algo == Algorithm::Rnd {
        let mut widths = vec![input];
        widths.extend(&cfg.rnd_hidden);
        widths.push(cfg.rnd_output_dim);
        Some(RndPair::new(
            &widths,
            cfg.lr,
            cfg.rnd_beta,
            &mut rng::stream(seed, "init-rnd-target"),
            &mut rng::stream(seed, "init-rnd-predictor"),
        )?)
    } else {
        None
    };
    let mut buffer = ReplayBuffer::new(if deep { cfg.replay_capacity } else { 0 });

    let mut m = RunMetrics { seed, reachable: env.reachable_ids().len(), ..Default::default() };
    m.visitation = vec![0; env.num_ids()];
    let mut coverage = Coverage::new(env.num_ids());
    let mut trailing = TrailingMean::new(cfg.return_window);
    let mut repr_losses = WindowMean::default();
    let mut td_losses = WindowMean::default();
    let stop_at = (cfg.stop_coverage > 0.0).then(|| (cfg.stop_coverage * m.reachable as f64).ceil().max(1.0) as usize);

    let mut state = env.reset();
    coverage.visit(state.tabular_id);
    m.first_visit.push(0);
    m.coverage.push((0, 1.0));
    m.returns.push((0, 0.0));

    let mut opt_state = OptionState::default();
    let mut option_len = 0usize;
    let mut ez = EzGreedyState::default();
    let mut episode_return = 0.0;
    let mut main_updates = 0u64;
    let mut option_updates = 0u64;

    for t in 0..cfg.steps {
        if let Some(s) = &schedule {
            env.apply_switch(s, t)?;
        }
        let discovering = algo.two_phased() && t < cfg.discovery_steps;
        let epsilon = if algo == Algorithm::Random { 1.0 } else { cfg.epsilon_at(t) };

        let choice = if algo == Algorithm::EzGreedy {
            ez_choice(&mut ez, &main, &state, epsilon, cfg, num_actions, &mut rs)?
        } else {
            let Streams { act: act_rng, option: option_rng, .. } = &mut rs;
            let mu = if algo == Algorithm::Random { 0.0 } else { cfg.mu };
            act(&mut opt_state, options.as_set(), &state, epsilon, mu, num_actions, act_rng, option_rng, |r| {
                greedy(&main, &state, r)
            })?
            .into()
        };
        let (action, option, started) = choice;
        if option.is_some() && !started {
            option_len += 1;
        } else {
            if option_len > 0 {
                m.option_durations.push(option_len);
            }
            option_len = usize::from(option.is_some());
        }
        if cfg.record_trajectory {
            m.trajectory.push((state.tabular_id, action));
        }

        let out = env.step(action, &mut rs.env)?;
        let next = out.next_state.clone();
        m.overwrites += u64::from(out.overwritten);
        m.visitation[next.tabular_id] += 1;
        if coverage.visit(next.tabular_id) {
            m.first_visit.push(t + 1);
        }
        episode_return += out.reward;

        let mut reward = out.reward;
        if let Some(c) = &mut counts {
            reward += c.visit_and_bonus(next.tabular_id);
        }
        if let Some(r) = &mut rnd {
            reward += r.bonus(&next.features)?;
        }

        match &mut options {
            Options::Tabular { model, .. } if discovering => {
                model.observe(state.tabular_id, out.executed_action, next.tabular_id, out.episode_end);
            }
            _ => {}
        }

        match &mut main {
            Main::Uniform => {}
            Main::Tabular(q) => {
                if !discovering {
                    q.update(state.tabular_id, action, reward, next.tabular_id, out.episode_end);
                    main_updates += 1;
                }
            }
            Main::Deep(q) => {
                buffer.push(Transition {
                    state: state.clone(),
                    action,
                    reward,
                    next_state: next.clone(),
                    episode_end: out.episode_end,
                    truncated: out.truncated,
                });
                let ready = buffer.len() >= cfg.batch_size.max(cfg.learning_starts).max(cfg.n_step);
                if ready && (t + 1) % cfg.train_period == 0 {
                    let segs = buffer
                        .sample_segments(cfg.batch_size, cfg.n_step, &mut rs.sample)
                        .ok_or_else(|| Error::Internal("replay buffer too small for a minibatch".into()))?;
                    let batch = SegmentBatch::build(&buffer, &segs);
                    if let Options::Deep { set, repr, rewards } = &mut options {
                        if algo == Algorithm::DceoOnline || discovering {
                            option_updates += train_deep_options(set, repr, rewards, &buffer, &batch, cfg, &mut rs)?;
                            if let Some(l) = repr.train_step(&buffer, &mut rs.repr)? {
                                repr_losses.push(l);
                            }
                        }
                    }
                    if !discovering {
                        td_losses.push(q.update(&batch, &batch.rewards)?);
                        main_updates += 1;
                    }
                }
            }
        }

        let episode_over = out.finished();
        observer(&StepEvent {
            t,
            state_id: state.tabular_id,
            action,
            option,
            option_started: started,
            reward: out.reward,
            learner_reward: reward,
            next_id: next.tabular_id,
            episode_over,
            main_updates,
            option_updates,
        });

        state = next;
        if episode_over {
            m.episode_returns.push((t + 1, episode_return));
            if !discovering {
                trailing.push(episode_return);
            }
            episode_return = 0.0;
            if let Options::Tabular { model, current, cfg: dcfg } = &mut options {
                if discovering {
                    *current = Some(discover_options(model, env.start_id(), dcfg)?);
                }
            }
            if option_len > 0 {
                m.option_durations.push(option_len);
                option_len = 0;
            }
            opt_state.reset();
            ez.clear();
            state = env.reset();
            if coverage.visit(state.tabular_id) {
                m.first_visit.push(t + 1);
            }
        }

        let taken = t + 1;
        let stop = stop_at.is_some_and(|need| coverage.count() >= need);
        if taken % cfg.metrics_stride == 0 || taken == cfg.steps || stop {
            m.coverage.push((taken, coverage.count() as f64));
            m.returns.push((taken, trailing.mean()));
            if let Some(l) = repr_losses.take() {
                m.repr_loss.push((taken, l));
            }
            if let Some(l) = td_losses.take() {
                m.td_loss.push((taken, l));
            }
        }
        m.steps_taken = taken;
        if stop {
            break;
        }
    }

    if let Options::Deep { repr, .. } = &options {
        m.eigen_snapshot = Some(repr.eigenfunction_values(&env.enumerate_states())?);
    }
    Ok(m)
}

impl From<super::Choice> for (usize, Option<usize>, bool) {
    fn from(c: super::Choice) -> Self {
        (c.action, c.option, c.option_started)
    }
}

fn greedy(main: &Main, state: &EnvState, rng: &mut Rng) -> Result<usize> {
    match main {
        Main::Uniform => Err(Error::Internal("the random agent has no greedy action".into())),
        Main::Tabular(q) => Ok(q.greedy(state.tabular_id, rng)),
        Main::Deep(q) => q.greedy(&state.features, rng),
    }
}

/// εz-greedy: exploratory actions are repeated for a zeta-distributed number
/// of steps (with probability `mu`; otherwise they last one step).
fn ez_choice(
    ez: &mut EzGreedyState,
    main: &Main,
    state: &EnvState,
    epsilon: f64,
    cfg: &RunConfig,
    num_actions: usize,
    rs: &mut Streams,
) -> Result<(usize, Option<usize>, bool)> {
    if ez.remaining > 0 {
        ez.remaining -= 1;
        return Ok((ez.action, None, false));
    }
    if rs.act.gen::<f64>() < epsilon {
        let a = rs.act.gen_range(0..num_actions);
        let duration =
            if rs.option.gen::<f64>() < cfg.mu { ez_sample_duration(&mut rs.option, cfg.ez_k, cfg.ez_cap) } else { 1 };
        *ez = EzGreedyState { remaining: duration - 1, action: a };
        return Ok((a, None, false));
    }
    Ok((greedy(main, state, &mut rs.act)?, None, false))
}

/// How learned eigenfunctions become option rewards.
#[derive(Debug, Clone)]
pub struct RewardMap {
    /// Leading outputs with no option (the constant function).
    pub skip: usize,
    /// When set, each function is signed per batch so that its value at
    /// this state is at most the batch mean, and options lead away from it.
    pub anchor: Option<EnvState>,
}

/// Intrinsic rewards `σ_i (f_i(s_{k+1}) - f_i(s_k))` along every segment,
/// indexed `[option][segment][step]`. Option `i` uses output `i + skip`.
pub fn segment_intrinsic_rewards(
    repr: &LaplacianRepr,
    map: &RewardMap,
    batch: &SegmentBatch,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let flat: Vec<EnvState> = batch.states.iter().flatten().cloned().collect();
    let values = repr.eigenfunction_values(&flat)?;
    let count = repr.d.saturating_sub(map.skip);
    let signs: Vec<f64> = match &map.anchor {
        None => vec![1.0; count],
        Some(anchor) => {
            let at = repr.values_one(anchor)?;
            (0..count)
                .map(|i| {
                    let k = i + map.skip;
                    let mean = values.iter().map(|v| v[k]).sum::<f64>() / values.len().max(1) as f64;
                    if at[k] > mean {
                        -1.0
                    } else {
                        1.0
                    }
                })
                .collect()
        }
    };
    let mut out = vec![Vec::with_capacity(batch.len()); count];
    let mut row = 0;
    for path in &batch.states {
        for (i, per_option) in out.iter_mut().enumerate() {
            let k = i + map.skip;
            per_option
                .push((0..path.len() - 1).map(|t| signs[i] * (values[row + t + 1][k] - values[row + t][k])).collect());
        }
        row += path.len();
    }
    Ok(out)
}

fn train_deep_options(
    set: &mut DeepOptions,
    repr: &LaplacianRepr,
    map: &RewardMap,
    buffer: &ReplayBuffer,
    shared: &SegmentBatch,
    cfg: &RunConfig,
    rs: &mut Streams,
) -> Result<u64> {
    let mut updates = 0;
    if cfg.option_resample {
        for (i, learner) in set.learners.iter_mut().enumerate() {
            let Some(segs) = buffer.sample_segments(cfg.batch_size, cfg.n_step, &mut rs.option_sample) else {
                continue;
            };
            let batch = SegmentBatch::build(buffer, &segs);
            let rewards = segment_intrinsic_rewards(repr, map, &batch)?;
            learner.update(&batch, &rewards[i])?;
            updates += 1;
        }
    } else {
        let rewards = segment_intrinsic_rewards(repr, map, shared)?;
        for (i, learner) in set.learners.iter_mut().enumerate() {
            learner.update(shared, &rewards[i])?;
            updates += 1;
        }
    }
    Ok(updates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_text(text).unwrap()
    }

    #[test]
    fn random_agent_coverage_is_monotone_and_bounded() {
        let c = cfg("env = maze\nalgorithm = random\nsteps = 5000\nmetrics.stride = 500\n");
        let m = run_controller(&c, 3).unwrap();
        assert_eq!(m.steps_taken, 5000);
        assert!(m.coverage.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(m.coverage.last().unwrap().1 <= m.reachable as f64);
        assert_eq!(m.visitation.iter().sum::<u64>(), 5000);
    }

    #[test]
    fn same_seed_same_metrics() {
        let c = cfg("env = nine_rooms\nalgorithm = ceo\nsteps = 3000\ndiscovery_steps = 3000\noptions.count = 3\noptions.mu = 0.7\n");
        assert_eq!(run_controller(&c, 1).unwrap(), run_controller(&c, 1).unwrap());
    }

    #[test]
    fn stop_coverage_ends_early() {
        let c = cfg("env = nine_rooms\nalgorithm = random\nsteps = 1000000\nstop_coverage = 0.3\n");
        let m = run_controller(&c, 0).unwrap();
        assert!(m.steps_taken < 1_000_000);
        assert_eq!(m.steps_to_coverage(0.3), Some(m.steps_taken));
    }

    #[test]
    fn tabular_main_untouched_during_discovery() {
        let c = cfg("env = maze\nalgorithm = ceo\nsteps = 2000\ndiscovery_steps = 1200\noptions.count = 2\n");
        let mut events = Vec::new();
        run_controller_observed(&c, 0, &mut |e| events.push(e.clone())).unwrap();
        assert!(events.iter().filter(|e| e.t < 1200).all(|e| e.main_updates == 0));
        assert_eq!(events.last().unwrap().main_updates, 800);
    }

    #[test]
    fn count_bonus_reaches_the_learner_only() {
        let c = cfg("env = nine_rooms\nalgorithm = count\nlearner = tabular\nsteps = 300\ncount.beta = 0.5\n");
        let mut seen = std::collections::HashMap::new();
        run_controller_observed(&c, 0, &mut |e| {
            let n = seen.entry(e.next_id).or_insert(0u64);
            *n += 1;
            assert!((e.learner_reward - e.reward - 0.5 / (*n as f64).sqrt()).abs() < 1e-12);
        })
        .unwrap();
    }

    #[test]
    fn deep_dceo_smoke() {
        let c =
            cfg("env = maze\nalgorithm = dceo_online\nsteps = 400\nnet.hidden = 8\noptions.count = 2\nrepr.d = 3\n\
             dqn.learning_starts = 100\ndqn.batch_size = 8\nmetrics.stride = 100\n");
        let mut option_updates = 0;
        let m = run_controller_observed(&c, 0, &mut |e| option_updates = e.option_updates).unwrap();
        assert_eq!(m.steps_taken, 400);
        assert!(option_updates > 0);
        assert!(!m.repr_loss.is_empty() && !m.td_loss.is_empty());
        assert_eq!(m.eigen_snapshot.unwrap().len(), m.reachable);
    }
}
