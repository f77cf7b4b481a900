//! Config-driven runs: STEER, the fixed-model baselines, percentile routing
//! and threshold sweeps, with their artifacts written to disk.

mod config;
mod report;

pub use config::{parse_config, validate_config, ConfigError, InputSource, Mode, Overrides, RunConfig};
pub use report::{frontier_table, summary_table, FrontierRow, RunLabel};

use crate::engine::{run_steer, Clock, EngineError, EventKind, EventLog, EventParams, EventRecord, Question, Trace};
use crate::generators::{Backend, Generator, GeneratorSpec, HttpGenerator, ScriptedGenerator, ScriptedScenario};
use crate::routing::{ModelChoice, RoutingPolicy};
use clap::Parser;
use serde::Deserialize;
use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime(context: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

/// Questions plus whatever is known about their answers.
#[derive(Debug, Clone)]
pub struct Workload {
    pub questions: Vec<Question>,
    pub scenario: Option<Arc<ScriptedScenario>>,
    gold: HashMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionLine {
    id: String,
    prompt: String,
    gold_answer: Option<String>,
}

impl Workload {
    pub fn from_scenario(scenario: Arc<ScriptedScenario>) -> Self {
        let questions = scenario.questions.iter().map(|q| Question::new(&q.id, &q.prompt)).collect();
        Self { questions, scenario: Some(scenario), gold: HashMap::new() }
    }

    pub fn load(input: &InputSource) -> Result<Self, CliError> {
        match input {
            InputSource::Scenario(path) => {
                let scenario = ScriptedScenario::load(path)
                    .map_err(|e| ConfigError::Invalid { key: "input.scenario".into(), message: e.to_string() })?;
                Ok(Self::from_scenario(Arc::new(scenario)))
            }
            InputSource::Questions(path) => {
                let bad = |message: String| ConfigError::Invalid { key: "input.questions".into(), message };
                let text = fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
                let mut questions = Vec::new();
                let mut gold = HashMap::new();
                for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let q: QuestionLine =
                        serde_json::from_str(line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
                    if let Some(g) = q.gold_answer {
                        gold.insert(q.id.clone(), g);
                    }
                    questions.push(Question::new(q.id, q.prompt));
                }
                if questions.is_empty() {
                    return Err(bad("no questions".into()).into());
                }
                Ok(Self { questions, scenario: None, gold })
            }
        }
    }

    /// Scenario grading when scripted, otherwise a containment check of the
    /// gold answer in the final step of an EOS-terminated trace.
    pub fn grade(&self, trace: &Trace) -> Option<bool> {
        if let Some(s) = &self.scenario {
            return s.grade(trace);
        }
        let gold = self.gold.get(&trace.question_id)?;
        Some(
            trace.status == crate::engine::TraceStatus::CompleteEos
                && trace.steps.last().is_some_and(|s| s.text.contains(gold.as_str())),
        )
    }
}

/// Builds the generator for one role. Scripted generators replay the
/// workload's scenario.
pub fn build_generator(
    spec: &GeneratorSpec,
    role: ModelChoice,
    workload: &Workload,
) -> Result<Box<dyn Generator>, CliError> {
    let key = format!("generators.{role}");
    let bad = |message: String| CliError::Config(ConfigError::Invalid { key: key.clone(), message });
    match spec.backend {
        Backend::Scripted => {
            let scenario = workload.scenario.clone().ok_or_else(|| bad("scripted backend needs a scenario".into()))?;
            Ok(Box::new(ScriptedGenerator::new(spec.clone(), role, scenario).map_err(|e| bad(e.to_string()))?))
        }
        Backend::Http => Ok(Box::new(HttpGenerator::new(spec.clone()).map_err(|e| bad(e.to_string()))?)),
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<FrontierRow>,
    pub failed_traces: usize,
}

/// Runs the configured mode and writes artifacts under `config.output_dir`.
pub fn run(config: &RunConfig, clock: Clock) -> Result<RunSummary, CliError> {
    config.validate()?;
    let workload = Workload::load(&config.input)?;
    let small = build_generator(&config.small, ModelChoice::Small, &workload)?;
    let large = build_generator(&config.large, ModelChoice::Large, &workload)?;
    for g in [&small, &large] {
        g.preflight()
            .map_err(|e| CliError::Runtime(format!("generator {} unreachable: {e}", g.spec().name)))?;
    }
    fs::create_dir_all(&config.output_dir).map_err(runtime("creating output directory"))?;

    let plan: Vec<(RunLabel, PathBuf)> = match config.mode {
        Mode::Sweep => {
            let mut plan = vec![
                (RunLabel::new("always_small", None, RoutingPolicy::AlwaysSmall), config.output_dir.join("always_small")),
                (RunLabel::new("always_large", None, RoutingPolicy::AlwaysLarge), config.output_dir.join("always_large")),
            ];
            for &g in &config.sweep_grid {
                let label = format!("gamma_{g:.2}");
                let dir = config.output_dir.join(&label);
                plan.push((RunLabel::new(&label, Some(g), config.policy_for(Mode::Sweep, g)), dir));
            }
            plan
        }
        mode => {
            let gamma = matches!(mode, Mode::Steer).then_some(config.gamma);
            vec![(RunLabel::new(&mode.to_string(), gamma, config.policy_for(mode, config.gamma)), config.output_dir.clone())]
        }
    };

    let mut summary = RunSummary { rows: Vec::new(), failed_traces: 0 };
    for (label, dir) in plan {
        let (row, failed) = run_one(config, &label, &workload, small.as_ref(), large.as_ref(), &dir, clock)?;
        summary.rows.push(row);
        summary.failed_traces += failed;
    }
    if config.mode == Mode::Sweep {
        let json = report::frontier_json(config, &summary.rows);
        fs::write(config.output_dir.join("frontier.json"), json).map_err(runtime("writing frontier.json"))?;
        fs::write(config.output_dir.join("frontier.txt"), frontier_table(config, &summary.rows))
            .map_err(runtime("writing frontier.txt"))?;
    }
    Ok(summary)
}

fn run_one(
    config: &RunConfig,
    label: &RunLabel,
    workload: &Workload,
    small: &dyn Generator,
    large: &dyn Generator,
    dir: &Path,
    clock: Clock,
) -> Result<(FrontierRow, usize), CliError> {
    fs::create_dir_all(dir).map_err(runtime("creating run directory"))?;
    let sink = fs::File::create(dir.join("events.jsonl")).map_err(runtime("creating events.jsonl"))?;
    let mut log = EventLog::new(clock).with_sink(BufWriter::new(sink));
    log.emit(EventRecord::new(EventKind::RunStarted).params(EventParams::Run {
        version: VERSION.to_string(),
        config: report::embedded_config(config, label),
    }))
    .map_err(runtime("writing events.jsonl"))?;

    let engine = config.engine_for(label.policy);
    let mut outcome = run_steer(&workload.questions, small, large, &engine, &mut log).map_err(|e| match e {
        EngineError::Io(e) => CliError::Runtime(format!("writing events.jsonl: {e}")),
        other => CliError::Config(ConfigError::Invalid { key: "engine".into(), message: other.to_string() }),
    })?;
    log.flush().map_err(runtime("writing events.jsonl"))?;

    for t in &outcome.traces {
        if let Some(correct) = workload.grade(t) {
            outcome.ledger.set_correct(&t.question_id, correct);
        }
    }
    let failed = outcome.ledger.summary().failed;
    let artifacts = report::Artifacts::build(config, label, &outcome, &|t: &Trace| workload.grade(t));
    artifacts.write(dir).map_err(runtime("writing artifacts"))?;
    Ok((artifacts.row, failed))
}

#[derive(Debug, Parser)]
#[command(name = "steer", version, about = "Step-level routing between a small and a large generator")]
struct Args {
    /// Run configuration (TOML, dotted keys).
    #[arg(long)]
    config: PathBuf,
    /// steer, always_small, always_large, percentile or sweep.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
}

/// Entry point shared by the binary and tests. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match resolve_and_run(&args) {
        Ok(summary) => {
            if summary.failed_traces > 0 {
                eprintln!("warning: {} trace(s) failed; see events.jsonl", summary.failed_traces);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_and_run(args: &Args) -> Result<RunSummary, CliError> {
    let (mut config, mut diagnostics) = validate_config(&args.config)?;
    let overrides = Overrides {
        mode: args.mode.as_deref().map(str::parse).transpose()?,
        gamma: args.gamma,
        seed: args.seed,
        output_dir: args.output_dir.clone(),
    };
    config.apply(&overrides, &mut diagnostics)?;
    for d in &diagnostics {
        eprintln!("{d}");
    }
    let summary = run(&config, Clock::System)?;
    print!("{}", frontier_table(&config, &summary.rows));
    Ok(summary)
}
