//! Flat `key = value` run configuration.
//!
//! Keys carry a section prefix (`game.`, `topo.`, `run.`). Blank lines and
//! `#` comments are ignored. Repeated `game.cost1` / `game.cost2` lines each
//! add one agent. Example:
//!
//! ```text
//! game.scenario = custom
//! game.x_set = -1, 1
//! game.y_set = -1, 1
//! # x^2, y^2, |x|, |y|, cos(x/2), cos(y/2)
//! game.cost1 = 1, -1, 0, 0, 0, 0
//! game.cost2 = 1, -1, 0, 0, 0, 0
//! game.nash = 0, 0
//! topo.kind = ring
//! topo.self_weights = default
//! run.mu = 0.001
//! run.seeds = 1, 2, 3
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{InitRule, StepSchedule, DEFAULT_METRICS_EVERY};
use crate::game::{
    builtin_game, estimate_subgradient_bounds, BoundFallback, ConvexSet, GameSpec, ScalarTerms,
};
use crate::graph::{
    default_ring_self_weights, make_ring_topology, validate_row_stochastic, CrossWeights,
    NetworkTopology, RowStochasticMatrix,
};
use crate::smoothing::SmoothingParams;

pub const BUILTIN_SCENARIO: &str = "paper-sec5";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// The offending key of a validation error.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Validation { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// Built-in or inline game.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSpec {
    Builtin,
    Custom(CustomGame),
}

/// Scalar game described by term tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomGame {
    pub terms1: Vec<ScalarTerms>,
    pub terms2: Vec<ScalarTerms>,
    pub x_set: (f64, f64),
    pub y_set: (f64, f64),
    pub nash: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelfWeights {
    /// `0.3 + 0.4 i / m`.
    Default,
    Uniform(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    Ring {
        net1: SelfWeights,
        net2: SelfWeights,
    },
    Matrix {
        a1: Vec<Vec<f64>>,
        a2: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CrossSpec {
    OneToOne,
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleDomainChoice {
    /// Truncated to `[-1, 1]` for the built-in scenario, Gaussian otherwise.
    ScenarioDefault,
    Gaussian,
    Truncated(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitChoice {
    Random,
    Center,
}

/// A validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub topology: TopologySpec,
    pub cross1: CrossSpec,
    pub cross2: CrossSpec,
    pub mu: f64,
    pub step_a: f64,
    pub step_p: f64,
    pub rounds: u64,
    pub seeds: Vec<u64>,
    pub metrics_every: u64,
    pub sample_domain: SampleDomainChoice,
    pub init: InitChoice,
    pub output_path: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::Builtin,
            topology: TopologySpec::Ring {
                net1: SelfWeights::Default,
                net2: SelfWeights::Default,
            },
            cross1: CrossSpec::OneToOne,
            cross2: CrossSpec::OneToOne,
            mu: 0.001,
            step_a: 0.1,
            step_p: 1.0,
            rounds: 100_000,
            seeds: vec![0],
            metrics_every: DEFAULT_METRICS_EVERY,
            sample_domain: SampleDomainChoice::ScenarioDefault,
            init: InitChoice::Random,
            output_path: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub seeds: Vec<u64>,
    pub rounds: Option<u64>,
    pub mu: Option<f64>,
    pub step_a: Option<f64>,
    pub step_p: Option<f64>,
    pub metrics_every: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Raw key/value pairs; repeated keys keep every value in order.
#[derive(Debug, Default)]
struct RawConfig {
    entries: BTreeMap<String, Vec<String>>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::Parse {
                    line: idx + 1,
                    message: format!("unknown key `{key}`"),
                });
            }
            raw.entries
                .entry(key.to_string())
                .or_default()
                .push(value.trim().to_string());
        }
        Ok(raw)
    }

    fn single(&self, key: &str) -> Result<Option<&str>, ConfigError> {
        match self.entries.get(key).map(Vec::as_slice) {
            None | Some([]) => Ok(None),
            Some([v]) => Ok(Some(v.as_str())),
            Some(_) => Err(ConfigError::invalid(key, "given more than once")),
        }
    }

    fn all(&self, key: &str) -> &[String] {
        self.entries.get(key).map_or(&[], Vec::as_slice)
    }
}

const KNOWN_KEYS: &[&str] = &[
    "game.scenario",
    "game.cost1",
    "game.cost2",
    "game.x_set",
    "game.y_set",
    "game.nash",
    "topo.kind",
    "topo.self_weights",
    "topo.self_weights1",
    "topo.self_weights2",
    "topo.matrix1",
    "topo.matrix2",
    "topo.cross1",
    "topo.cross2",
    "run.mu",
    "run.step_a",
    "run.step_p",
    "run.rounds",
    "run.seeds",
    "run.metrics_every",
    "run.sample_domain",
    "run.init",
    "run.out",
];

fn parse_num<T: std::str::FromStr>(key: &str, text: &str) -> Result<T, ConfigError> {
    text.trim()
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("cannot parse `{}`", text.trim())))
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',').map(|t| parse_num::<f64>(key, t)).collect()
}

fn parse_pair(key: &str, text: &str) -> Result<(f64, f64), ConfigError> {
    match parse_list(key, text)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        other => Err(ConfigError::invalid(
            key,
            format!("expected 2 numbers, got {}", other.len()),
        )),
    }
}

/// Rows separated by `;`, entries by `,`.
fn parse_matrix(key: &str, text: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
    text.split(';').map(|row| parse_list(key, row)).collect()
}

fn parse_self_weights(key: &str, text: &str) -> Result<SelfWeights, ConfigError> {
    let text = text.trim();
    if text == "default" {
        return Ok(SelfWeights::Default);
    }
    if let Some(v) = text.strip_prefix("uniform:") {
        return Ok(SelfWeights::Uniform(parse_num(key, v)?));
    }
    Ok(SelfWeights::List(parse_list(key, text)?))
}

fn parse_cross(key: &str, text: &str) -> Result<CrossSpec, ConfigError> {
    if text.trim() == "one-to-one" {
        Ok(CrossSpec::OneToOne)
    } else {
        Ok(CrossSpec::Matrix(parse_matrix(key, text)?))
    }
}

fn parse_terms(key: &str, lines: &[String]) -> Result<Vec<ScalarTerms>, ConfigError> {
    lines
        .iter()
        .map(|line| {
            let c = parse_list(key, line)?;
            let arr: [f64; ScalarTerms::COUNT] = c.as_slice().try_into().map_err(|_| {
                ConfigError::invalid(
                    key,
                    format!(
                        "expected {} coefficients, got {}",
                        ScalarTerms::COUNT,
                        c.len()
                    ),
                )
            })?;
            Ok(ScalarTerms::from_coefficients(arr))
        })
        .collect()
}

impl RunConfig {
    fn apply_raw(&mut self, raw: &RawConfig) -> Result<(), ConfigError> {
        match raw.single("game.scenario")? {
            None | Some(BUILTIN_SCENARIO) => {
                for key in [
                    "game.cost1",
                    "game.cost2",
                    "game.x_set",
                    "game.y_set",
                    "game.nash",
                ] {
                    if !raw.all(key).is_empty() {
                        return Err(ConfigError::invalid(
                            key,
                            "only allowed with `game.scenario = custom`",
                        ));
                    }
                }
            }
            Some("custom") => {
                let x_set = raw
                    .single("game.x_set")?
                    .map_or(Ok((-1.0, 1.0)), |v| parse_pair("game.x_set", v))?;
                let y_set = raw
                    .single("game.y_set")?
                    .map_or(Ok((-1.0, 1.0)), |v| parse_pair("game.y_set", v))?;
                let nash = raw
                    .single("game.nash")?
                    .ok_or_else(|| ConfigError::invalid("game.nash", "required for custom games"))
                    .and_then(|v| parse_pair("game.nash", v))?;
                self.scenario = ScenarioSpec::Custom(CustomGame {
                    terms1: parse_terms("game.cost1", raw.all("game.cost1"))?,
                    terms2: parse_terms("game.cost2", raw.all("game.cost2"))?,
                    x_set,
                    y_set,
                    nash,
                });
            }
            Some(other) => {
                return Err(ConfigError::invalid(
                    "game.scenario",
                    format!("unknown scenario `{other}`"),
                ))
            }
        }

        match raw.single("topo.kind")? {
            None | Some("ring") => {
                let both = raw
                    .single("topo.self_weights")?
                    .map(|v| parse_self_weights("topo.self_weights", v))
                    .transpose()?
                    .unwrap_or(SelfWeights::Default);
                let net1 = raw
                    .single("topo.self_weights1")?
                    .map(|v| parse_self_weights("topo.self_weights1", v))
                    .transpose()?
                    .unwrap_or_else(|| both.clone());
                let net2 = raw
                    .single("topo.self_weights2")?
                    .map(|v| parse_self_weights("topo.self_weights2", v))
                    .transpose()?
                    .unwrap_or(both);
                self.topology = TopologySpec::Ring { net1, net2 };
            }
            Some("matrix") => {
                let get = |key: &str| {
                    raw.single(key)?
                        .ok_or_else(|| {
                            ConfigError::invalid(key, "required for `topo.kind = matrix`")
                        })
                        .and_then(|v| parse_matrix(key, v))
                };
                self.topology = TopologySpec::Matrix {
                    a1: get("topo.matrix1")?,
                    a2: get("topo.matrix2")?,
                };
            }
            Some(other) => {
                return Err(ConfigError::invalid(
                    "topo.kind",
                    format!("unknown kind `{other}`"),
                ))
            }
        }
        if let Some(v) = raw.single("topo.cross1")? {
            self.cross1 = parse_cross("topo.cross1", v)?;
        }
        if let Some(v) = raw.single("topo.cross2")? {
            self.cross2 = parse_cross("topo.cross2", v)?;
        }

        if let Some(v) = raw.single("run.mu")? {
            self.mu = parse_num("run.mu", v)?;
        }
        if let Some(v) = raw.single("run.step_a")? {
            self.step_a = parse_num("run.step_a", v)?;
        }
        if let Some(v) = raw.single("run.step_p")? {
            self.step_p = parse_num("run.step_p", v)?;
        }
        if let Some(v) = raw.single("run.rounds")? {
            self.rounds = parse_num("run.rounds", v)?;
        }
        if let Some(v) = raw.single("run.seeds")? {
            self.seeds = v
                .split(',')
                .map(|s| parse_num("run.seeds", s))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = raw.single("run.metrics_every")? {
            self.metrics_every = parse_num("run.metrics_every", v)?;
        }
        if let Some(v) = raw.single("run.sample_domain")? {
            self.sample_domain = match v {
                "default" => SampleDomainChoice::ScenarioDefault,
                "gaussian" => SampleDomainChoice::Gaussian,
                "truncated" => SampleDomainChoice::Truncated(1.0),
                other => match other.strip_prefix("truncated:") {
                    Some(h) => SampleDomainChoice::Truncated(parse_num("run.sample_domain", h)?),
                    None => {
                        return Err(ConfigError::invalid(
                            "run.sample_domain",
                            format!("unknown domain `{other}`"),
                        ))
                    }
                },
            };
        }
        if let Some(v) = raw.single("run.init")? {
            self.init = match v {
                "random" => InitChoice::Random,
                "center" => InitChoice::Center,
                other => {
                    return Err(ConfigError::invalid(
                        "run.init",
                        format!("unknown rule `{other}`"),
                    ))
                }
            };
        }
        if let Some(v) = raw.single("run.out")? {
            self.output_path = PathBuf::from(v);
        }
        Ok(())
    }

    fn apply_overrides(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(name) = &o.scenario {
            match name.as_str() {
                BUILTIN_SCENARIO => self.scenario = ScenarioSpec::Builtin,
                other => {
                    return Err(ConfigError::invalid(
                        "game.scenario",
                        format!("unknown built-in scenario `{other}`"),
                    ))
                }
            }
        }
        if !o.seeds.is_empty() {
            self.seeds = o.seeds.clone();
        }
        if let Some(v) = o.rounds {
            self.rounds = v;
        }
        if let Some(v) = o.mu {
            self.mu = v;
        }
        if let Some(v) = o.step_a {
            self.step_a = v;
        }
        if let Some(v) = o.step_p {
            self.step_p = v;
        }
        if let Some(v) = o.metrics_every {
            self.metrics_every = v;
        }
        if let Some(v) = &o.out {
            self.output_path = v.clone();
        }
        Ok(())
    }

    /// Checks scalar run parameters. Game and topology are checked by [`RunConfig::build`].
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rounds < 1 {
            return Err(ConfigError::invalid("run.rounds", "must be at least 1"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ConfigError::invalid("run.mu", "must be positive"));
        }
        if !(self.step_a > 0.0 && self.step_a.is_finite()) {
            return Err(ConfigError::invalid("run.step_a", "must be positive"));
        }
        if !(self.step_p > 0.5 && self.step_p <= 1.0) {
            return Err(ConfigError::invalid(
                "run.step_p",
                "must lie in (0.5, 1] so that steps sum to infinity while their squares stay summable",
            ));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid(
                "run.seeds",
                "at least one seed is required",
            ));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::invalid("run.seeds", "seeds must be distinct"));
        }
        if self.metrics_every < 1 {
            return Err(ConfigError::invalid(
                "run.metrics_every",
                "must be at least 1",
            ));
        }
        if let SampleDomainChoice::Truncated(h) = self.sample_domain {
            if !(h > 0.0 && h.is_finite()) {
                return Err(ConfigError::invalid(
                    "run.sample_domain",
                    "half-width must be positive",
                ));
            }
        }
        Ok(())
    }

    /// Instantiates game, topology, smoothing and schedule.
    pub fn build(&self) -> Result<Experiment, ConfigError> {
        self.validate()?;
        let game = match &self.scenario {
            ScenarioSpec::Builtin => builtin_game(),
            ScenarioSpec::Custom(c) => build_custom_game(c)?,
        };
        let topology = build_topology(self, game.m1(), game.m2())?;
        let domain_half = match self.sample_domain {
            SampleDomainChoice::ScenarioDefault => match self.scenario {
                ScenarioSpec::Builtin => Some(1.0),
                ScenarioSpec::Custom(_) => None,
            },
            SampleDomainChoice::Gaussian => None,
            SampleDomainChoice::Truncated(h) => Some(h),
        };
        let params = match domain_half {
            Some(h) => SmoothingParams::truncated_cube(self.mu, game.n1(), game.n2(), h),
            None => SmoothingParams::gaussian(self.mu, game.n1(), game.n2()),
        }
        .map_err(|e| ConfigError::invalid("run.mu", e.to_string()))?;
        let schedule = StepSchedule::new(self.step_a, self.step_p)
            .map_err(|e| ConfigError::invalid("run.step_p", e.to_string()))?;
        let init = match self.init {
            InitChoice::Random => InitRule::RandomInSet,
            InitChoice::Center => InitRule::SetCenter,
        };
        Ok(Experiment {
            game,
            topology,
            params,
            schedule,
            init,
        })
    }
}

/// Objects a run needs, built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub game: GameSpec,
    pub topology: NetworkTopology,
    pub params: SmoothingParams,
    pub schedule: StepSchedule,
    pub init: InitRule,
}

fn interval(key: &str, (lo, hi): (f64, f64)) -> Result<ConvexSet, ConfigError> {
    ConvexSet::boxed(vec![lo], vec![hi]).map_err(|e| ConfigError::invalid(key, e.to_string()))
}

fn build_custom_game(c: &CustomGame) -> Result<GameSpec, ConfigError> {
    if c.terms1.is_empty() {
        return Err(ConfigError::invalid(
            "game.cost1",
            "at least one agent is required",
        ));
    }
    if c.terms2.is_empty() {
        return Err(ConfigError::invalid(
            "game.cost2",
            "at least one agent is required",
        ));
    }
    let set_x = interval("game.x_set", c.x_set)?;
    let set_y = interval("game.y_set", c.y_set)?;
    if !set_x.contains(&[c.nash.0]) || !set_y.contains(&[c.nash.1]) {
        return Err(ConfigError::invalid(
            "game.nash",
            "equilibrium lies outside the strategy sets",
        ));
    }
    let game = GameSpec::scalar(set_x, set_y, &c.terms1, &c.terms2)
        .and_then(|g| g.with_equilibrium(vec![c.nash.0], vec![c.nash.1]))
        .map_err(|e| ConfigError::invalid("game.cost1", e.to_string()))?;
    game.check_zero_sum(200, 0, 1e-9)
        .map_err(|e| ConfigError::invalid("game.cost2", e.to_string()))?;
    let b = estimate_subgradient_bounds(&game, 1000, 0, BoundFallback::default())
        .map_err(|e| ConfigError::invalid("game.cost1", e.to_string()))?;
    game.with_bounds(b.d1, b.d2)
        .map_err(|e| ConfigError::invalid("game.cost1", e.to_string()))
}

fn ring(key: &str, m: usize, weights: &SelfWeights) -> Result<RowStochasticMatrix, ConfigError> {
    let w = match weights {
        SelfWeights::Default => default_ring_self_weights(m),
        SelfWeights::Uniform(v) => vec![*v; m],
        SelfWeights::List(list) => list.clone(),
    };
    make_ring_topology(m, &w).map_err(|e| ConfigError::invalid(key, e.to_string()))
}

fn cross(
    key: &str,
    spec: &CrossSpec,
    rows: usize,
    cols: usize,
) -> Result<CrossWeights, ConfigError> {
    match spec {
        CrossSpec::OneToOne => Ok(CrossWeights::one_to_one(rows, cols)),
        CrossSpec::Matrix(b) => {
            CrossWeights::new(b).map_err(|e| ConfigError::invalid(key, e.to_string()))
        }
    }
}

fn build_topology(cfg: &RunConfig, m1: usize, m2: usize) -> Result<NetworkTopology, ConfigError> {
    let (a1, a2) = match &cfg.topology {
        TopologySpec::Ring { net1, net2 } => (
            ring("topo.self_weights1", m1, net1)?,
            ring("topo.self_weights2", m2, net2)?,
        ),
        TopologySpec::Matrix { a1, a2 } => (
            validate_row_stochastic(a1)
                .map_err(|e| ConfigError::invalid("topo.matrix1", e.to_string()))?,
            validate_row_stochastic(a2)
                .map_err(|e| ConfigError::invalid("topo.matrix2", e.to_string()))?,
        ),
    };
    let b1 = cross("topo.cross1", &cfg.cross1, m1, m2)?;
    let b2 = cross("topo.cross2", &cfg.cross2, m2, m1)?;
    NetworkTopology::new(a1, a2, b1, b2)
        .map_err(|e| ConfigError::invalid("topo.kind", e.to_string()))
}

/// Parses config text, applies overrides, validates.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    cfg.apply_raw(&RawConfig::parse(text)?)?;
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads the file at `path` (if any) and applies command-line overrides.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.to_path_buf(),
            source,
        })?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}
