//! TOML run configuration with dotted keys, strict key checking and echoed
//! defaults.

use crate::confidence::{Aggregation, ConfidenceMetric};
use crate::engine::{EngineConfig, DEFAULT_MAX_STEPS};
use crate::generators::{Backend, GeneratorSpec, STEP_SEPARATOR};
use crate::mixture::EmConfig;
use crate::routing::RoutingPolicy;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;
use toml::Value;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Steer,
    AlwaysSmall,
    AlwaysLarge,
    Percentile,
    Sweep,
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            invalid("mode", format!("`{s}` is not one of steer, always_small, always_large, percentile, sweep"))
        })
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Mode::Steer => "steer",
            Mode::AlwaysSmall => "always_small",
            Mode::AlwaysLarge => "always_large",
            Mode::Percentile => "percentile",
            Mode::Sweep => "sweep",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    /// Scripted scenario JSON; drives scripted generators and grading.
    Scenario(PathBuf),
    /// JSONL of `{id, prompt, gold_answer?}` for live generators.
    Questions(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub engine: EngineConfig,
    pub gamma: f64,
    pub percentile: f64,
    pub small: GeneratorSpec,
    pub large: GeneratorSpec,
    pub input: InputSource,
    pub output_dir: PathBuf,
    pub sweep_grid: Vec<f64>,
    /// Command-line overrides applied on top of the file, as `key = value`.
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Routing policy for `mode` under this configuration. Sweep mode uses
    /// the threshold policy at `gamma`.
    pub fn policy_for(&self, mode: Mode, gamma: f64) -> RoutingPolicy {
        match mode {
            Mode::Steer | Mode::Sweep => RoutingPolicy::PosteriorThreshold { gamma },
            Mode::AlwaysSmall => RoutingPolicy::AlwaysSmall,
            Mode::AlwaysLarge => RoutingPolicy::AlwaysLarge,
            Mode::Percentile => RoutingPolicy::Percentile { p: self.percentile },
        }
    }

    pub fn engine_for(&self, policy: RoutingPolicy) -> EngineConfig {
        EngineConfig { policy, ..self.engine.clone() }
    }

    /// Applies command-line overrides, recording each, and revalidates.
    pub fn apply(&mut self, o: &Overrides, diagnostics: &mut Vec<String>) -> Result<(), ConfigError> {
        let mut note = |cfg: &mut RunConfig, line: String| {
            diagnostics.push(format!("override {line}"));
            cfg.overrides.push(line);
        };
        if let Some(mode) = o.mode {
            self.mode = mode;
            note(self, format!("mode = {mode}"));
        }
        if let Some(gamma) = o.gamma {
            self.gamma = gamma;
            note(self, format!("engine.gamma = {gamma}"));
        }
        if let Some(seed) = o.seed {
            self.engine.seed = seed;
            self.engine.em.seed = seed;
            note(self, format!("engine.seed = {seed}"));
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
            note(self, format!("output_dir = {}", dir.display()));
        }
        self.engine.policy = self.policy_for(self.mode, self.gamma);
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("engine.gamma", format!("must lie in [0, 1], got {}", self.gamma)));
        }
        if !(0.0..=100.0).contains(&self.percentile) {
            return Err(invalid("engine.percentile", format!("must lie in [0, 100], got {}", self.percentile)));
        }
        if self.mode == Mode::Sweep {
            if self.sweep_grid.is_empty() {
                return Err(invalid("sweep.grid", "must not be empty in sweep mode"));
            }
            if let Some(g) = self.sweep_grid.iter().find(|g| !(0.0..=1.0).contains(*g)) {
                return Err(invalid("sweep.grid", format!("values must lie in [0, 1], got {g}")));
            }
        }
        self.engine.validate().map_err(|e| invalid("engine", e.to_string()))?;
        self.small.validate().map_err(|e| invalid("generators.small", e.to_string()))?;
        self.large.validate().map_err(|e| invalid("generators.large", e.to_string()))?;
        if self.small.backend == Backend::Scripted || self.large.backend == Backend::Scripted {
            if let InputSource::Questions(_) = self.input {
                return Err(invalid("input.questions", "scripted generators need input.scenario"));
            }
        }
        Ok(())
    }
}

/// Reads and resolves a config file. Returns the config and one diagnostic
/// line per applied default.
pub fn validate_config(path: &Path) -> Result<(RunConfig, Vec<String>), ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

/// Resolves config text; relative paths are taken from `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<(RunConfig, Vec<String>), ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
    let mut keys = BTreeMap::new();
    flatten("", &table, &mut keys);
    let mut r = Reader { keys, diagnostics: Vec::new() };

    let mode: Mode = r.parsed_or("mode", "steer")?;
    let resolve = |p: String| {
        let p = PathBuf::from(p);
        if p.is_relative() {
            base_dir.join(p)
        } else {
            p
        }
    };
    let output_dir = resolve(r.string_or("output_dir", "steer-out")?);
    let input = match (r.opt_string("input.scenario")?, r.opt_string("input.questions")?) {
        (Some(s), None) => InputSource::Scenario(resolve(s)),
        (None, Some(q)) => InputSource::Questions(resolve(q)),
        (Some(_), Some(_)) => return Err(invalid("input", "set exactly one of input.scenario, input.questions")),
        (None, None) => return Err(ConfigError::Missing("input.scenario".into())),
    };

    let defaults = EngineConfig::default();
    let em_defaults = EmConfig::default();
    let gamma = r.f64_or("engine.gamma", 0.5)?;
    let percentile = r.f64_or("engine.percentile", 50.0)?;
    let seed = r.u64_or("engine.seed", 0)?;
    let temperature = r.f64_or("engine.temperature", defaults.temperature)?;
    let em = EmConfig {
        max_iterations: r.usize_or("engine.em.max_iterations", em_defaults.max_iterations)?,
        loglik_tolerance: r.f64_or("engine.em.loglik_tolerance", em_defaults.loglik_tolerance)?,
        variance_floor: r.f64_or("engine.em.variance_floor", em_defaults.variance_floor)?,
        min_samples: r.usize_or("engine.em.min_samples", em_defaults.min_samples)?,
        seed,
    };
    let mut engine = EngineConfig {
        max_steps: r.usize_or("engine.max_steps", DEFAULT_MAX_STEPS)?,
        policy: defaults.policy,
        aggregation: r.parsed_or::<Aggregation>("engine.aggregation", "all_tokens_mean")?,
        metric: r.parsed_or::<ConfidenceMetric>("engine.metric", "max_logit")?,
        group_count: r.usize_or("engine.group_count", defaults.group_count)?,
        temperature,
        em,
        seed,
        per_model_fit: r.bool_or("engine.per_model_fit", defaults.per_model_fit)?,
        warm_start: r.bool_or("engine.warm_start", defaults.warm_start)?,
        max_in_flight: r.usize_or("engine.max_in_flight", defaults.max_in_flight)?,
    };
    let small = r.generator("small", temperature)?;
    let large = r.generator("large", temperature)?;
    let default_grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let sweep_grid = r.f64_list_or("sweep.grid", &default_grid)?;

    if let Some(key) = r.keys.keys().next() {
        return Err(ConfigError::UnknownKey(key.clone()));
    }

    let mut config = RunConfig {
        mode,
        engine: engine.clone(),
        gamma,
        percentile,
        small,
        large,
        input,
        output_dir,
        sweep_grid,
        overrides: Vec::new(),
    };
    engine.policy = config.policy_for(mode, gamma);
    config.engine = engine;
    config.validate()?;
    Ok((config, r.diagnostics))
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

struct Reader {
    keys: BTreeMap<String, Value>,
    diagnostics: Vec<String>,
}

impl Reader {
    fn default_used(&mut self, key: &str, shown: impl std::fmt::Display) {
        self.diagnostics.push(format!("default {key} = {shown}"));
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.keys.remove(key) {
            Some(Value::Float(f)) => Ok(f),
            Some(Value::Integer(i)) => Ok(i as f64),
            Some(_) => Err(invalid(key, "expected a number")),
            None => {
                self.default_used(key, default);
                Ok(default)
            }
        }
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.keys.remove(key) {
            Some(Value::Integer(i)) => u64::try_from(i).map_err(|_| invalid(key, "must be non-negative")),
            Some(_) => Err(invalid(key, "expected an integer")),
            None => {
                self.default_used(key, default);
                Ok(default)
            }
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.u64_or(key, default as u64).map(|v| v as usize)
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.keys.remove(key) {
            Some(Value::Boolean(b)) => Ok(b),
            Some(_) => Err(invalid(key, "expected true or false")),
            None => {
                self.default_used(key, default);
                Ok(default)
            }
        }
    }

    fn opt_string(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.keys.remove(key) {
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(invalid(key, "expected a string")),
            None => Ok(None),
        }
    }

    fn string_or(&mut self, key: &str, default: &str) -> Result<String, ConfigError> {
        match self.opt_string(key)? {
            Some(s) => Ok(s),
            None => {
                self.default_used(key, format!("{default:?}"));
                Ok(default.to_string())
            }
        }
    }

    fn parsed_or<T: DeserializeOwned>(&mut self, key: &str, default: &str) -> Result<T, ConfigError> {
        let s = self.string_or(key, default)?;
        serde_json::from_value(serde_json::Value::String(s.clone()))
            .map_err(|_| invalid(key, format!("unrecognized value `{s}`")))
    }

    fn f64_list_or(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.keys.remove(key) {
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(f),
                    Value::Integer(i) => Ok(i as f64),
                    _ => Err(invalid(key, "expected an array of numbers")),
                })
                .collect(),
            Some(_) => Err(invalid(key, "expected an array of numbers")),
            None => {
                self.default_used(key, format!("{default:?}"));
                Ok(default.to_vec())
            }
        }
    }

    fn generator(&mut self, role: &str, temperature: f64) -> Result<GeneratorSpec, ConfigError> {
        let k = |field: &str| format!("generators.{role}.{field}");
        let name = self.string_or(&k("name"), role)?;
        let param_count = match self.keys.remove(&k("param_count")) {
            Some(Value::Integer(i)) if i > 0 => i as u64,
            Some(Value::Float(f)) if f >= 1.0 && f.fract() == 0.0 => f as u64,
            Some(_) => return Err(invalid(&k("param_count"), "expected a positive integer")),
            None => return Err(ConfigError::Missing(k("param_count"))),
        };
        let backend: Backend = self.parsed_or(&k("backend"), "scripted")?;
        let endpoint = self.opt_string(&k("endpoint"))?;
        let temperature = self.f64_or(&k("temperature"), temperature)?;
        let stop_sequence = self.string_or(&k("stop_sequence"), STEP_SEPARATOR)?;
        let max_tokens_per_step = self.usize_or(&k("max_tokens_per_step"), 512)?;
        Ok(GeneratorSpec { name, param_count, backend, endpoint, temperature, stop_sequence, max_tokens_per_step })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
input.scenario = "scenario.json"
generators.small.param_count = 1_000_000_000
generators.large.param_count = 8_000_000_000
"#;

    fn parse(text: &str) -> Result<(RunConfig, Vec<String>), ConfigError> {
        parse_config(text, Path::new("/base"))
    }

    #[test]
    fn minimal_config_echoes_defaults() {
        let (cfg, diags) = parse(MINIMAL).unwrap();
        assert_eq!(cfg.engine.max_steps, 64);
        assert_eq!(cfg.engine.em.loglik_tolerance, 1e-6);
        assert_eq!(cfg.input, InputSource::Scenario(PathBuf::from("/base/scenario.json")));
        assert_eq!(cfg.engine.policy, RoutingPolicy::PosteriorThreshold { gamma: 0.5 });
        for key in ["engine.max_steps = 64", "engine.em.loglik_tolerance = 0.000001", "engine.em.max_iterations = 200"] {
            assert!(diags.iter().any(|d| d == &format!("default {key}")), "{key} not echoed in {diags:?}");
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}\nengine.gama = 0.3\n");
        assert_eq!(parse(&text).unwrap_err(), ConfigError::UnknownKey("engine.gama".into()));
        let text = format!("gama = 0.3\n{MINIMAL}");
        assert_eq!(parse(&text).unwrap_err(), ConfigError::UnknownKey("gama".into()));
    }

    #[test]
    fn gamma_out_of_range() {
        let text = format!("{MINIMAL}\nengine.gamma = 1.5\n");
        match parse(&text).unwrap_err() {
            ConfigError::Invalid { key, .. } => assert_eq!(key, "engine.gamma"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn tables_and_dotted_keys_agree() {
        let dotted = format!("{MINIMAL}\nengine.em.min_samples = 6\nmode = \"percentile\"\n");
        let tabled = r#"
mode = "percentile"
[input]
scenario = "scenario.json"
[engine.em]
min_samples = 6
[generators.small]
param_count = 1_000_000_000
[generators.large]
param_count = 8_000_000_000
"#;
        assert_eq!(parse(&dotted).unwrap().0, parse(tabled).unwrap().0);
        assert_eq!(parse(tabled).unwrap().0.engine.policy, RoutingPolicy::Percentile { p: 50.0 });
    }

    #[test]
    fn input_must_be_single() {
        let text = format!("{MINIMAL}\ninput.questions = \"q.jsonl\"\n");
        assert!(matches!(parse(&text).unwrap_err(), ConfigError::Invalid { .. }));
        let text = "generators.small.param_count = 1\ngenerators.large.param_count = 2\n";
        assert_eq!(parse(text).unwrap_err(), ConfigError::Missing("input.scenario".into()));
    }

    #[test]
    fn overrides_win_and_are_recorded() {
        let (mut cfg, _) = parse(MINIMAL).unwrap();
        let mut diags = Vec::new();
        cfg.apply(&Overrides { gamma: Some(0.2), seed: Some(9), mode: Some(Mode::Sweep), ..Default::default() }, &mut diags)
            .unwrap();
        assert_eq!(cfg.gamma, 0.2);
        assert_eq!(cfg.engine.seed, 9);
        assert_eq!(cfg.overrides, vec!["mode = sweep", "engine.gamma = 0.2", "engine.seed = 9"]);
        assert_eq!(diags.len(), 3);
        assert!(cfg.apply(&Overrides { gamma: Some(2.0), ..Default::default() }, &mut diags).is_err());
    }

    #[test]
    fn bad_values_name_their_key() {
        let text = format!("{MINIMAL}\nengine.metric = \"loudness\"\n");
        assert!(matches!(parse(&text).unwrap_err(), ConfigError::Invalid { key, .. } if key == "engine.metric"));
        let text = format!("{MINIMAL}\nengine.max_steps = \"many\"\n");
        assert!(matches!(parse(&text).unwrap_err(), ConfigError::Invalid { key, .. } if key == "engine.max_steps"));
        assert!("fastest".parse::<Mode>().is_err());
        assert_eq!("always_large".parse::<Mode>().unwrap(), Mode::AlwaysLarge);
    }
}
