//! Run configuration.
//!
//! Config files are flat `key = value` lines. Keys may contain dots
//! (`dqn.batch_size`) but there is no nesting. `#` starts a comment, blank
//! lines are ignored, and a repeated key is an error. Lists are
//! comma-separated (`seeds = 0,1,2`). Every key is optional; missing keys take
//! defaults that depend on the algorithm and environment, and the loaded
//! config always writes every key back out (see [`RunConfig::to_text`]).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::env::{self, CUBE_DEPTH_DEEP, CUBE_DEPTH_TABULAR, DEFAULT_SWITCH_STEP, EPISODE_CAP, OVERWRITE_PROB};
use crate::error::{Error, Result};
use crate::repr::ReprLoss;

/// Parse `key = value` text into an ordered map.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}: expected 'key = value', got '{}'", lineno + 1, raw.trim()))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(Error::config(format!("line {}: bad key '{k}'", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::config(format!("line {}: duplicate key '{k}'", lineno + 1)));
        }
    }
    Ok(out)
}

/// Split a `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::config(format!("override '{s}' is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Random,
    QLearning,
    Ddqn,
    Count,
    EzGreedy,
    Rnd,
    Ceo,
    DceoOnline,
    DceoTwoPhased,
}

pub const ALGORITHMS: [Algorithm; 9] = [
    Algorithm::Random,
    Algorithm::QLearning,
    Algorithm::Ddqn,
    Algorithm::Count,
    Algorithm::EzGreedy,
    Algorithm::Rnd,
    Algorithm::Ceo,
    Algorithm::DceoOnline,
    Algorithm::DceoTwoPhased,
];

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Random => "random",
            Algorithm::QLearning => "q_learning",
            Algorithm::Ddqn => "ddqn",
            Algorithm::Count => "count",
            Algorithm::EzGreedy => "ez_greedy",
            Algorithm::Rnd => "rnd",
            Algorithm::Ceo => "ceo",
            Algorithm::DceoOnline => "dceo_online",
            Algorithm::DceoTwoPhased => "dceo_two_phased",
        }
    }

    pub fn uses_options(self) -> bool {
        matches!(self, Algorithm::Ceo | Algorithm::DceoOnline | Algorithm::DceoTwoPhased)
    }

    /// Has a discovery phase before reward maximization.
    pub fn two_phased(self) -> bool {
        matches!(self, Algorithm::Ceo | Algorithm::DceoTwoPhased)
    }

    fn default_learner(self) -> Learner {
        match self {
            Algorithm::Random | Algorithm::QLearning | Algorithm::Ceo => Learner::Tabular,
            _ => Learner::Deep,
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ALGORITHMS.iter().copied().find(|a| a.name() == s).ok_or_else(|| {
            Error::config(format!(
                "unknown algorithm '{s}' (expected one of {})",
                ALGORITHMS.map(|a| a.name()).join(", ")
            ))
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learner {
    Tabular,
    Deep,
}

impl FromStr for Learner {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular" => Ok(Learner::Tabular),
            "deep" => Ok(Learner::Deep),
            other => Err(Error::config(format!("unknown learner '{other}' (tabular or deep)"))),
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Learner::Tabular => "tabular",
            Learner::Deep => "deep",
        })
    }
}

/// Every setting of a run, with defaults materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub algorithm: Algorithm,
    pub learner: Learner,
    pub steps: u64,
    pub seeds: Vec<u64>,
    pub output_dir: String,

    pub gamma: f64,
    /// Tabular Q-learning step size.
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Linear decay length, counted from the start of reward maximization.
    pub epsilon_decay_steps: u64,
    pub overwrite_prob: f64,
    pub episode_cap: usize,
    /// Radius of the cube state ball (cube environments only).
    pub cube_depth: usize,

    pub hidden: Vec<usize>,
    pub lr: f64,
    pub n_step: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub sync_period: u64,
    pub learning_starts: usize,
    /// Gradient updates happen every `train_period` environment steps.
    pub train_period: u64,

    pub num_options: usize,
    pub option_duration: f64,
    pub mu: f64,
    pub option_epsilon: f64,
    pub option_hidden: Vec<usize>,
    /// Sample a separate minibatch for each option learner.
    pub option_resample: bool,
    /// Leave out the constant eigenfunction when assigning options.
    pub skip_constant: bool,
    /// Orient eigenfunctions so options lead away from the start state.
    pub outward: bool,

    pub repr_d: usize,
    pub repr_beta: f64,
    pub repr_loss: ReprLoss,
    pub repr_hidden: Vec<usize>,
    pub repr_lr: f64,
    pub repr_batch_size: usize,
    /// Subtracted from observations before the representation network.
    pub repr_input_offset: f64,

    pub discovery_steps: u64,
    pub ceo_vi_tolerance: f64,
    pub ceo_vi_max_sweeps: usize,

    pub count_beta: f64,
    pub rnd_beta: f64,
    pub rnd_output_dim: usize,
    pub rnd_hidden: Vec<usize>,
    pub ez_k: f64,
    pub ez_cap: usize,

    pub switch_step: Option<u64>,
    pub metrics_stride: u64,
    pub return_window: usize,
    /// Stop a seed once this fraction of reachable states is covered (0 = off).
    pub stop_coverage: f64,
    pub record_trajectory: bool,
}

/// All keys in the order they are written.
pub const KEYS: &[&str] = &[
    "env",
    "algorithm",
    "learner",
    "steps",
    "seeds",
    "output_dir",
    "gamma",
    "alpha",
    "epsilon.start",
    "epsilon.end",
    "epsilon.decay_steps",
    "overwrite_prob",
    "episode_cap",
    "cube_depth",
    "net.hidden",
    "net.lr",
    "dqn.n",
    "dqn.batch_size",
    "dqn.replay_capacity",
    "dqn.sync_period",
    "dqn.learning_starts",
    "dqn.train_period",
    "options.count",
    "options.duration",
    "options.mu",
    "options.epsilon",
    "options.hidden",
    "options.resample",
    "options.skip_constant",
    "options.outward",
    "repr.d",
    "repr.beta",
    "repr.loss",
    "repr.hidden",
    "repr.lr",
    "repr.batch_size",
    "repr.input_offset",
    "discovery_steps",
    "ceo.vi_tolerance",
    "ceo.vi_max_sweeps",
    "count.beta",
    "rnd.beta",
    "rnd.output_dim",
    "rnd.hidden",
    "ez.k",
    "ez.cap",
    "switch.step",
    "metrics.stride",
    "metrics.return_window",
    "stop_coverage",
    "record_trajectory",
];

struct Reader {
    map: BTreeMap<String, String>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::config(format!("{key}: cannot parse '{v}'"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some("") | Some("none") => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| Error::config(format!("{key}: cannot parse '{x}'"))))
                .collect(),
        }
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    if xs.is_empty() {
        return "none".into();
    }
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(parse_kv(text)?)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut map = parse_kv(&text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(map)
    }

    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        if let Some(unknown) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::config(format!("unknown config key '{unknown}'")));
        }
        let r = Reader { map };
        let env: String = r.get("env", "nine_rooms".to_string())?;
        let algorithm: Algorithm = r.get("algorithm", Algorithm::Random)?;
        let learner: Learner = r.get("learner", algorithm.default_learner())?;
        let steps: u64 = r.get("steps", 100_000)?;
        let is_cube = env == "rubiks2x2";
        let tabular = learner == Learner::Tabular;

        let hidden: Vec<usize> = r.list("net.hidden", vec![256, 256])?;
        let lr: f64 = r.get("net.lr", 1e-4)?;
        let batch_size: usize = r.get("dqn.batch_size", 32)?;
        let num_options: usize = r.get("options.count", if is_cube { 3 } else { 10 })?;
        let (eps_start, eps_end, eps_decay) = if tabular { (0.1, 0.1, 0) } else { (1.0, 0.1, steps / 10) };
        let skip_constant: bool = r.get("options.skip_constant", true)?;
        let default_discovery = if algorithm.two_phased() { steps / 5 } else { 0 };
        let switch_default = if env::default_schedule(&env)?.is_some() { Some(DEFAULT_SWITCH_STEP) } else { None };

        let cfg = RunConfig {
            learner,
            steps,
            seeds: r.list("seeds", vec![0])?,
            output_dir: r.get("output_dir", format!("runs/{}_{}", env, algorithm.name()))?,
            gamma: r.get("gamma", 0.99)?,
            alpha: r.get("alpha", 0.1)?,
            epsilon_start: r.get("epsilon.start", eps_start)?,
            epsilon_end: r.get("epsilon.end", eps_end)?,
            epsilon_decay_steps: r.get("epsilon.decay_steps", eps_decay)?,
            overwrite_prob: r.get("overwrite_prob", OVERWRITE_PROB)?,
            episode_cap: r.get("episode_cap", EPISODE_CAP)?,
            cube_depth: r.get("cube_depth", if tabular { CUBE_DEPTH_TABULAR } else { CUBE_DEPTH_DEEP })?,
            lr,
            n_step: r.get("dqn.n", 5)?,
            batch_size,
            replay_capacity: r.get("dqn.replay_capacity", 100_000)?,
            sync_period: r.get("dqn.sync_period", 1000)?,
            learning_starts: r.get("dqn.learning_starts", 1000)?,
            train_period: r.get("dqn.train_period", 1)?,
            num_options,
            option_duration: r.get("options.duration", 10.0)?,
            mu: r.get("options.mu", 0.9)?,
            option_epsilon: r.get("options.epsilon", 0.01)?,
            option_hidden: r.list("options.hidden", hidden.clone())?,
            option_resample: r.get("options.resample", false)?,
            skip_constant,
            outward: r.get("options.outward", true)?,
            repr_d: r.get("repr.d", num_options + usize::from(skip_constant))?,
            repr_beta: r.get("repr.beta", 2.0)?,
            repr_loss: ReprLoss::parse(r.raw("repr.loss").unwrap_or("generalized"))?,
            repr_hidden: r.list("repr.hidden", hidden.clone())?,
            repr_lr: r.get("repr.lr", lr)?,
            repr_batch_size: r.get("repr.batch_size", batch_size)?,
            repr_input_offset: r.get("repr.input_offset", 0.5)?,
            discovery_steps: r.get("discovery_steps", default_discovery)?,
            ceo_vi_tolerance: r.get("ceo.vi_tolerance", 1e-6)?,
            ceo_vi_max_sweeps: r.get("ceo.vi_max_sweeps", 1000)?,
            count_beta: r.get("count.beta", 0.01)?,
            rnd_beta: r.get("rnd.beta", 0.5)?,
            rnd_output_dim: r.get("rnd.output_dim", 16)?,
            rnd_hidden: r.list("rnd.hidden", hidden.clone())?,
            ez_k: r.get("ez.k", 2.0)?,
            ez_cap: r.get("ez.cap", EPISODE_CAP)?,
            switch_step: match r.raw("switch.step") {
                None => switch_default,
                Some("none") => None,
                Some(v) => Some(v.parse().map_err(|_| Error::config(format!("switch.step: cannot parse '{v}'")))?),
            },
            metrics_stride: r.get("metrics.stride", 1000)?,
            return_window: r.get("metrics.return_window", 20)?,
            stop_coverage: r.get("stop_coverage", 0.0)?,
            record_trajectory: r.get("record_trajectory", false)?,
            hidden,
            env,
            algorithm,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        env::make_env(&self.env)?;
        let deep_only = matches!(
            self.algorithm,
            Algorithm::Ddqn | Algorithm::Rnd | Algorithm::DceoOnline | Algorithm::DceoTwoPhased
        );
        if deep_only && self.learner == Learner::Tabular {
            return bad(format!("{} needs the deep learner", self.algorithm));
        }
        if matches!(self.algorithm, Algorithm::QLearning | Algorithm::Ceo) && self.learner == Learner::Deep {
            return bad(format!("{} is tabular only; use ddqn or dceo_* for the deep learner", self.algorithm));
        }
        for (name, p) in [
            ("epsilon.start", self.epsilon_start),
            ("epsilon.end", self.epsilon_end),
            ("options.mu", self.mu),
            ("options.epsilon", self.option_epsilon),
            ("overwrite_prob", self.overwrite_prob),
            ("stop_coverage", self.stop_coverage),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        for (name, x) in [("alpha", self.alpha), ("net.lr", self.lr), ("repr.lr", self.repr_lr)] {
            if !(x > 0.0 && x.is_finite()) {
                return bad(format!("{name} must be positive, got {x}"));
            }
        }
        for (name, x) in [("repr.beta", self.repr_beta), ("count.beta", self.count_beta), ("rnd.beta", self.rnd_beta)] {
            if !(x >= 0.0 && x.is_finite()) {
                return bad(format!("{name} must be non-negative, got {x}"));
            }
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        if self.option_duration < 1.0 {
            return bad(format!("options.duration must be at least 1, got {}", self.option_duration));
        }
        if self.n_step == 0 || self.batch_size == 0 || self.sync_period == 0 || self.train_period == 0 {
            return bad("dqn.n, dqn.batch_size, dqn.sync_period and dqn.train_period must be positive".into());
        }
        if self.repr_batch_size < 2 {
            return bad("repr.batch_size must be at least 2".into());
        }
        if self.metrics_stride == 0 || self.return_window == 0 {
            return bad("metrics.stride and metrics.return_window must be positive".into());
        }
        if self.ez_cap == 0 {
            return bad("ez.cap must be at least 1".into());
        }
        let needed = self.num_options + usize::from(self.skip_constant);
        if self.algorithm.uses_options() && self.learner == Learner::Deep && self.repr_d < needed {
            return bad(format!(
                "repr.d ({}) must cover options.count ({}) plus the skipped constant function",
                self.repr_d, self.num_options
            ));
        }
        if self.discovery_steps > self.steps {
            return bad("discovery_steps exceeds steps".into());
        }
        if self.switch_step.is_some() && env::default_schedule(&self.env)?.is_none() {
            return bad(format!("environment {} has no layout switch", self.env));
        }
        Ok(())
    }

    /// Value of a key as written by [`to_text`](Self::to_text).
    pub fn value_of(&self, key: &str) -> Option<String> {
        Some(match key {
            "env" => self.env.clone(),
            "algorithm" => self.algorithm.to_string(),
            "learner" => self.learner.to_string(),
            "steps" => self.steps.to_string(),
            "seeds" => join(&self.seeds),
            "output_dir" => self.output_dir.clone(),
            "gamma" => self.gamma.to_string(),
            "alpha" => self.alpha.to_string(),
            "epsilon.start" => self.epsilon_start.to_string(),
            "epsilon.end" => self.epsilon_end.to_string(),
            "epsilon.decay_steps" => self.epsilon_decay_steps.to_string(),
            "overwrite_prob" => self.overwrite_prob.to_string(),
            "episode_cap" => self.episode_cap.to_string(),
            "cube_depth" => self.cube_depth.to_string(),
            "net.hidden" => join(&self.hidden),
            "net.lr" => self.lr.to_string(),
            "dqn.n" => self.n_step.to_string(),
            "dqn.batch_size" => self.batch_size.to_string(),
            "dqn.replay_capacity" => self.replay_capacity.to_string(),
            "dqn.sync_period" => self.sync_period.to_string(),
            "dqn.learning_starts" => self.learning_starts.to_string(),
            "dqn.train_period" => self.train_period.to_string(),
            "options.count" => self.num_options.to_string(),
            "options.duration" => self.option_duration.to_string(),
            "options.mu" => self.mu.to_string(),
            "options.epsilon" => self.option_epsilon.to_string(),
            "options.hidden" => join(&self.option_hidden),
            "options.resample" => self.option_resample.to_string(),
            "options.skip_constant" => self.skip_constant.to_string(),
            "options.outward" => self.outward.to_string(),
            "repr.d" => self.repr_d.to_string(),
            "repr.beta" => self.repr_beta.to_string(),
            "repr.loss" => self.repr_loss.name().to_string(),
            "repr.hidden" => join(&self.repr_hidden),
            "repr.lr" => self.repr_lr.to_string(),
            "repr.batch_size" => self.repr_batch_size.to_string(),
            "repr.input_offset" => self.repr_input_offset.to_string(),
            "discovery_steps" => self.discovery_steps.to_string(),
            "ceo.vi_tolerance" => self.ceo_vi_tolerance.to_string(),
            "ceo.vi_max_sweeps" => self.ceo_vi_max_sweeps.to_string(),
            "count.beta" => self.count_beta.to_string(),
            "rnd.beta" => self.rnd_beta.to_string(),
            "rnd.output_dim" => self.rnd_output_dim.to_string(),
            "rnd.hidden" => join(&self.rnd_hidden),
            "ez.k" => self.ez_k.to_string(),
            "ez.cap" => self.ez_cap.to_string(),
            "switch.step" => self.switch_step.map_or("none".into(), |s| s.to_string()),
            "metrics.stride" => self.metrics_stride.to_string(),
            "metrics.return_window" => self.return_window.to_string(),
            "stop_coverage" => self.stop_coverage.to_string(),
            "record_trajectory" => self.record_trajectory.to_string(),
            _ => return None,
        })
    }

    /// Every key, one per line, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.value_of(k).unwrap())).collect()
    }

    /// Build the configured environment.
    pub fn make_env(&self) -> Result<env::Environment> {
        let mut e = if self.env == "rubiks2x2" { env::make_cube(self.cube_depth)? } else { env::make_env(&self.env)? };
        e.set_overwrite_prob(self.overwrite_prob);
        match &mut e {
            env::Environment::Grid(g) => g.episode_cap = self.episode_cap,
            env::Environment::Cube(c) => c.episode_cap = self.episode_cap,
        }
        Ok(e)
    }

    pub fn schedule(&self) -> Result<Option<env::NonStationarySchedule>> {
        let Some(step) = self.switch_step else { return Ok(None) };
        Ok(env::default_schedule(&self.env)?.map(|mut s| {
            s.switch_step = step;
            s
        }))
    }

    /// Exploration rate at global step `t`.
    pub fn epsilon_at(&self, t: u64) -> f64 {
        let start = if self.algorithm.two_phased() { self.discovery_steps } else { 0 };
        if self.algorithm.two_phased() && t < start {
            return 1.0;
        }
        let elapsed = t - start;
        if self.epsilon_decay_steps == 0 || elapsed >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = elapsed as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}
