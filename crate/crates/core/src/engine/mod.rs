//! Batched, step-synchronized generation with confidence-based routing.
//!
//! Every ongoing trace finishes step `i` before anything is decided about
//! step `i + 1`. At each barrier the engine pools the latest step
//! confidences of the ongoing traces, fits the two-component mixture (or
//! applies the configured baseline policy) and assigns each trace a
//! generator for the next step. Step 0 is special: the small generator
//! drafts it for every question and drafts judged unconfident are
//! regenerated by the large generator.

mod audit;
mod events;

pub use audit::{audit_routing, AuditReport};
pub use events::{
    parse_jsonl, strip_timestamps, to_jsonl, Clock, EventKind, EventLog, EventParams, EventRecord, FitSource, Pool,
};

use crate::confidence::{aggregate_step, Aggregation, ConfidenceMetric, StepConfidence, TokenObservation};
use crate::cost::{CostLedger, ModelInfo};
use crate::generators::{GeneratedStep, Generator, GeneratorError, StepRequest, STEP_SEPARATOR};
use crate::mixture::{fit_em_from, posterior_confident, EmConfig, MixtureParams};
use crate::routing::{decide, percentile_cutoff, ModelChoice, RoutingPolicy};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("event log write failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub prompt: String,
}

impl Question {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self { id: id.into(), prompt: prompt.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TraceStatus {
    Ongoing,
    CompleteEos,
    CompleteMaxSteps,
    Failed { reason: String },
}

impl TraceStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TraceStatus::Ongoing => "ongoing",
            TraceStatus::CompleteEos => "complete_eos",
            TraceStatus::CompleteMaxSteps => "complete_max_steps",
            TraceStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub text: String,
    pub model: ModelChoice,
    pub confidence: StepConfidence,
    /// Tokens in the kept step text.
    pub token_count: usize,
    /// Step 0 regenerated by the large generator.
    pub refined: bool,
    /// Generation ended on end-of-sequence.
    pub eos: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub question_id: String,
    pub prompt: String,
    pub steps: Vec<StepRecord>,
    pub status: TraceStatus,
    /// Generator assigned to the most recently routed step.
    pub current_model: ModelChoice,
    /// The small generator's step 0 when it was replaced by a refinement.
    pub discarded_draft: Option<StepRecord>,
}

impl Trace {
    pub fn new(question_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            prompt: prompt.into(),
            steps: Vec::new(),
            status: TraceStatus::Ongoing,
            current_model: ModelChoice::Small,
            discarded_draft: None,
        }
    }

    pub fn is_ongoing(&self) -> bool {
        self.status == TraceStatus::Ongoing
    }

    pub fn large_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.model == ModelChoice::Large).count()
    }

    /// Full text of the solution so far.
    pub fn solution(&self) -> String {
        self.steps.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(STEP_SEPARATOR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub max_steps: usize,
    pub policy: RoutingPolicy,
    pub aggregation: Aggregation,
    pub metric: ConfidenceMetric,
    /// Number of independent question groups, each with its own fits.
    pub group_count: usize,
    pub temperature: f64,
    pub em: EmConfig,
    pub seed: u64,
    /// Fit small- and large-generated confidences separately.
    pub per_model_fit: bool,
    /// Start each EM run from the previous barrier's fit.
    pub warm_start: bool,
    /// Cap on concurrent generation calls within a barrier.
    pub max_in_flight: usize,
}

pub const DEFAULT_MAX_STEPS: usize = 64;

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            policy: RoutingPolicy::PosteriorThreshold { gamma: 0.5 },
            aggregation: Aggregation::AllTokensMean,
            metric: ConfidenceMetric::MaxLogit,
            group_count: 1,
            temperature: 0.7,
            em: EmConfig::default(),
            seed: 0,
            per_model_fit: false,
            warm_start: false,
            max_in_flight: 8,
        }
    }
}

impl EngineConfig {
    pub fn with_policy(mut self, policy: RoutingPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if self.group_count == 0 {
            return bad("group_count must be positive".into());
        }
        if !(self.temperature >= 0.0) {
            return bad("temperature must be >= 0".into());
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be positive".into());
        }
        self.policy.validate().map_err(EngineError::InvalidConfig)?;
        self.em.validate().map_err(|e| EngineError::InvalidConfig(e.to_string()))
    }
}

/// First step of a raw generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub text: String,
    pub hit_separator: bool,
    pub hit_eos: bool,
}

/// Cuts generated text at the first step separator. EOS counts only when
/// the generator signalled it and no separator came first.
pub fn segment_step(generated: &str, eos_signaled: bool) -> Segment {
    match generated.find(STEP_SEPARATOR) {
        Some(cut) => Segment { text: generated[..cut].to_string(), hit_separator: true, hit_eos: false },
        None => Segment { text: generated.to_string(), hit_separator: false, hit_eos: eos_signaled },
    }
}

/// Question followed by the steps so far, each joined and terminated by the
/// step separator.
pub fn assemble_prompt(prompt: &str, steps: &[StepRecord]) -> String {
    let mut out = String::from(prompt);
    for s in steps {
        out.push_str(STEP_SEPARATOR);
        out.push_str(&s.text);
    }
    out.push_str(STEP_SEPARATOR);
    out
}

pub fn is_complete(trace: &Trace, config: &EngineConfig) -> bool {
    trace.steps.last().is_some_and(|s| s.eos) || trace.steps.len() >= config.max_steps
}

/// Seeded partition of `count` items into `k` groups whose sizes differ by
/// at most one. Indices within each group are ascending; `k = 1` keeps the
/// original order.
pub fn group_split(count: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EngineError> {
    if k == 0 || k > count {
        return Err(EngineError::InvalidInput(format!("cannot split {count} questions into {k} groups")));
    }
    let mut order: Vec<usize> = (0..count).collect();
    if k > 1 {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let (base, extra) = (count / k, count % k);
    let mut groups = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let size = base + usize::from(g < extra);
        let mut members = order[start..start + size].to_vec();
        members.sort_unstable();
        groups.push(members);
        start += size;
    }
    Ok(groups)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// In input question order.
    pub traces: Vec<Trace>,
    pub ledger: CostLedger,
}

impl RunOutcome {
    /// Fraction of kept steps generated by the large model.
    pub fn large_step_fraction(&self) -> f64 {
        let total: usize = self.traces.iter().map(|t| t.steps.len()).sum();
        if total == 0 {
            return 0.0;
        }
        self.traces.iter().map(Trace::large_steps).sum::<usize>() as f64 / total as f64
    }
}

/// Runs the routed generation over all questions, split into
/// `config.group_count` independent groups.
pub fn run_steer(
    questions: &[Question],
    small: &dyn Generator,
    large: &dyn Generator,
    config: &EngineConfig,
    log: &mut EventLog,
) -> Result<RunOutcome, EngineError> {
    config.validate()?;
    if questions.is_empty() {
        return Err(EngineError::InvalidInput("no questions".into()));
    }
    let mut ids = std::collections::HashSet::new();
    if let Some(dup) = questions.iter().find(|q| !ids.insert(q.id.as_str())) {
        return Err(EngineError::InvalidInput(format!("duplicate question id {}", dup.id)));
    }

    let info = |g: &dyn Generator| ModelInfo { name: g.spec().name.clone(), param_count: g.spec().param_count };
    let mut ledger = CostLedger::new(info(small), info(large));
    let mut slots: Vec<Option<Trace>> = vec![None; questions.len()];

    for (group, members) in group_split(questions.len(), config.group_count, config.seed)?.into_iter().enumerate() {
        let group_questions: Vec<&Question> = members.iter().map(|&i| &questions[i]).collect();
        let run = GroupRun::new(group, config, small, large, &group_questions, ledger.model(ModelChoice::Small).clone(), ledger.model(ModelChoice::Large).clone());
        let (traces, group_ledger) = run.execute(log)?;
        ledger.absorb(group_ledger);
        for (i, t) in members.into_iter().zip(traces) {
            slots[i] = Some(t);
        }
    }
    log.flush()?;

    let traces: Vec<Trace> = slots.into_iter().map(|t| t.expect("every question belongs to a group")).collect();
    ledger.reorder(traces.iter().map(|t| t.question_id.as_str()));
    Ok(RunOutcome { traces, ledger })
}

struct Job {
    trace: usize,
    model: ModelChoice,
    step_index: usize,
    question_id: String,
    prompt: String,
}

#[derive(Debug, Clone, Copy)]
struct FitOutcome {
    source: FitSource,
    fit: Option<MixtureParams>,
    weak: bool,
}

struct GroupRun<'a> {
    group: usize,
    config: &'a EngineConfig,
    small: &'a dyn Generator,
    large: &'a dyn Generator,
    traces: Vec<Trace>,
    ledger: CostLedger,
    last_good: HashMap<Pool, MixtureParams>,
    last_fit: HashMap<Pool, MixtureParams>,
}

impl<'a> GroupRun<'a> {
    fn new(
        group: usize,
        config: &'a EngineConfig,
        small: &'a dyn Generator,
        large: &'a dyn Generator,
        questions: &[&Question],
        small_info: ModelInfo,
        large_info: ModelInfo,
    ) -> Self {
        let mut ledger = CostLedger::new(small_info, large_info);
        let traces = questions
            .iter()
            .map(|q| {
                ledger.open(&q.id);
                Trace::new(&q.id, &q.prompt)
            })
            .collect();
        Self { group, config, small, large, traces, ledger, last_good: HashMap::new(), last_fit: HashMap::new() }
    }

    fn ongoing(&self) -> Vec<usize> {
        (0..self.traces.len()).filter(|&i| self.traces[i].is_ongoing()).collect()
    }

    fn execute(mut self, log: &mut EventLog) -> Result<(Vec<Trace>, CostLedger), EngineError> {
        let adaptive = matches!(
            self.config.policy,
            RoutingPolicy::PosteriorThreshold { .. } | RoutingPolicy::Percentile { .. }
        );

        // Initial generation.
        let first = match self.config.policy {
            RoutingPolicy::AlwaysLarge => ModelChoice::Large,
            _ => ModelChoice::Small,
        };
        let assignments: Vec<(usize, ModelChoice)> = self.ongoing().into_iter().map(|i| (i, first)).collect();
        self.generate_step(0, &assignments, false, log)?;

        // First-step refinement.
        if adaptive {
            let decisions = self.route(0, log)?;
            let refine: Vec<(usize, ModelChoice)> =
                decisions.into_iter().filter(|(_, m)| *m == ModelChoice::Large).collect();
            self.generate_step(0, &refine, true, log)?;
        }

        // Iterative routing.
        for step in 1..self.config.max_steps {
            if self.ongoing().is_empty() {
                break;
            }
            let decisions = self.route(step, log)?;
            self.generate_step(step, &decisions, false, log)?;
        }

        for t in &self.traces {
            self.ledger.set_status(&t.question_id, t.status.clone());
        }
        Ok((self.traces, self.ledger))
    }

    /// Generates `step` for the given traces and applies the results in
    /// trace order.
    fn generate_step(
        &mut self,
        step: usize,
        assignments: &[(usize, ModelChoice)],
        refine: bool,
        log: &mut EventLog,
    ) -> Result<(), EngineError> {
        let jobs: Vec<Job> = assignments
            .iter()
            .map(|&(i, model)| {
                let t = &self.traces[i];
                let prior = if refine { &t.steps[..0] } else { &t.steps[..] };
                Job {
                    trace: i,
                    model,
                    step_index: step,
                    question_id: t.question_id.clone(),
                    prompt: assemble_prompt(&t.prompt, prior),
                }
            })
            .collect();
        let results = run_jobs(self.small, self.large, self.config.max_in_flight, &jobs);
        for (job, result) in jobs.iter().zip(results) {
            self.traces[job.trace].current_model = job.model;
            self.apply(job, result, refine, log)?;
        }
        Ok(())
    }

    fn apply(
        &mut self,
        job: &Job,
        result: Result<GeneratedStep, GeneratorError>,
        refine: bool,
        log: &mut EventLog,
    ) -> Result<(), EngineError> {
        let id = job.question_id.clone();
        let generated = match result {
            Ok(g) => g,
            Err(e) => return self.fail(job.trace, job.step_index, job.model, e.to_string(), log),
        };
        self.ledger.record(&id, job.model, generated.completion_tokens, generated.prompt_tokens);

        let segment = segment_step(&generated.text, generated.eos);
        let tokens = kept_tokens(generated.tokens, &segment, &generated.text);
        let confidence = match aggregate_step(&tokens, self.config.metric, self.config.aggregation) {
            Ok(c) => c,
            Err(e) => return self.fail(job.trace, job.step_index, job.model, e.to_string(), log),
        };
        let record = StepRecord {
            index: job.step_index,
            text: segment.text,
            model: job.model,
            token_count: tokens.len(),
            confidence,
            refined: refine,
            eos: segment.hit_eos,
        };
        log.emit(
            EventRecord::new(EventKind::StepGenerated)
                .step(job.step_index)
                .trace(&id)
                .model(job.model)
                .phi(record.confidence.value)
                .params(EventParams::Step {
                    refined: refine,
                    token_count: record.token_count,
                    completion_tokens: generated.completion_tokens,
                    prompt_tokens: generated.prompt_tokens,
                    eos: record.eos,
                }),
        )?;

        let trace = &mut self.traces[job.trace];
        if refine {
            trace.discarded_draft = trace.steps.pop();
        }
        trace.steps.push(record);
        if trace.steps.last().is_some_and(|s| s.eos) {
            trace.status = TraceStatus::CompleteEos;
        } else if trace.steps.len() >= self.config.max_steps {
            trace.status = TraceStatus::CompleteMaxSteps;
        }
        if !trace.is_ongoing() {
            let status = trace.status.label().to_string();
            log.emit(
                EventRecord::new(EventKind::TraceCompleted)
                    .step(job.step_index)
                    .trace(&id)
                    .model(job.model)
                    .params(EventParams::Outcome { status, detail: None }),
            )?;
        }
        Ok(())
    }

    fn fail(
        &mut self,
        trace: usize,
        step: usize,
        model: ModelChoice,
        reason: String,
        log: &mut EventLog,
    ) -> Result<(), EngineError> {
        let t = &mut self.traces[trace];
        t.status = TraceStatus::Failed { reason: reason.clone() };
        log.emit(
            EventRecord::new(EventKind::TraceFailed)
                .step(step)
                .trace(&t.question_id)
                .model(model)
                .params(EventParams::Outcome { status: "failed".into(), detail: Some(reason) }),
        )?;
        Ok(())
    }

    /// Fits (or reuses) the mixture for one pool of confidences.
    fn fit(&mut self, pool: Pool, samples: &[f64]) -> FitOutcome {
        let warm = if self.config.warm_start { self.last_fit.get(&pool).copied() } else { None };
        match fit_em_from(samples, &self.config.em, warm.as_ref()) {
            Ok(fit) => {
                self.last_fit.insert(pool, fit.params);
                if !fit.weak_separation {
                    self.last_good.insert(pool, fit.params);
                }
                FitOutcome { source: FitSource::Fresh, fit: Some(fit.params), weak: fit.weak_separation }
            }
            Err(_) => match self.last_good.get(&pool) {
                Some(p) => FitOutcome { source: FitSource::Reused, fit: Some(*p), weak: false },
                None => FitOutcome { source: FitSource::None, fit: None, weak: false },
            },
        }
    }

    /// Assigns a generator for `target` to every ongoing trace based on the
    /// confidence of its latest step, logging the fit and every decision.
    fn route(&mut self, target: usize, log: &mut EventLog) -> Result<Vec<(usize, ModelChoice)>, EngineError> {
        let ongoing = self.ongoing();
        if ongoing.is_empty() {
            return Ok(Vec::new());
        }
        let basis = target.saturating_sub(1);
        let phi = |t: &Trace| t.steps.last().expect("ongoing traces have a step").confidence.value;
        let mut decisions = Vec::with_capacity(ongoing.len());

        match self.config.policy {
            RoutingPolicy::AlwaysSmall | RoutingPolicy::AlwaysLarge => {
                let model = if self.config.policy == RoutingPolicy::AlwaysSmall {
                    ModelChoice::Small
                } else {
                    ModelChoice::Large
                };
                let params = EventParams::Static { group: self.group, model };
                for i in ongoing {
                    let t = &self.traces[i];
                    log.emit(
                        EventRecord::new(EventKind::RouteDecided)
                            .step(target)
                            .trace(&t.question_id)
                            .model(model)
                            .phi(phi(t))
                            .params(params.clone()),
                    )?;
                    decisions.push((i, model));
                }
            }
            RoutingPolicy::Percentile { p } => {
                let values: Vec<f64> = ongoing.iter().map(|&i| phi(&self.traces[i])).collect();
                let cutoff = percentile_cutoff(&values, p);
                let params = EventParams::Percentile { group: self.group, p, cutoff, sample_count: values.len() };
                log.emit(EventRecord::new(EventKind::FitComputed).step(basis).params(params.clone()))?;
                for (&i, &v) in ongoing.iter().zip(&values) {
                    let model = match cutoff {
                        Some(c) if v < c => ModelChoice::Large,
                        _ => ModelChoice::Small,
                    };
                    log.emit(
                        EventRecord::new(EventKind::RouteDecided)
                            .step(target)
                            .trace(&self.traces[i].question_id)
                            .model(model)
                            .phi(v)
                            .params(params.clone()),
                    )?;
                    decisions.push((i, model));
                }
            }
            RoutingPolicy::PosteriorThreshold { gamma } => {
                let pools: Vec<(Pool, Vec<usize>)> = if self.config.per_model_fit {
                    let (s, l): (Vec<usize>, Vec<usize>) = ongoing
                        .iter()
                        .partition(|&&i| self.traces[i].steps.last().map(|s| s.model) == Some(ModelChoice::Small));
                    vec![(Pool::Small, s), (Pool::Large, l)]
                } else {
                    vec![(Pool::All, ongoing)]
                };
                for (pool, members) in pools {
                    if members.is_empty() {
                        continue;
                    }
                    let values: Vec<f64> = members.iter().map(|&i| phi(&self.traces[i])).collect();
                    let outcome = self.fit(pool, &values);
                    let params = EventParams::Mixture {
                        group: self.group,
                        pool,
                        gamma,
                        source: outcome.source,
                        sample_count: values.len(),
                        weak_separation: outcome.weak,
                        fit: outcome.fit,
                    };
                    log.emit(EventRecord::new(EventKind::FitComputed).step(basis).params(params.clone()))?;
                    for (&i, &v) in members.iter().zip(&values) {
                        let (posterior, model) = match outcome.fit {
                            Some(fit) => {
                                let post = posterior_confident(v, &fit).expect("fitted params are valid");
                                let model = if outcome.weak { ModelChoice::Small } else { decide(post, gamma) };
                                (Some(post), model)
                            }
                            None => (None, ModelChoice::Small),
                        };
                        log.emit(
                            EventRecord::new(EventKind::RouteDecided)
                                .step(target)
                                .trace(&self.traces[i].question_id)
                                .model(model)
                                .phi(v)
                                .posterior(posterior)
                                .params(params.clone()),
                        )?;
                        decisions.push((i, model));
                    }
                }
                decisions.sort_by_key(|(i, _)| *i);
            }
        }
        Ok(decisions)
    }
}

/// Drops tokens that start after the step separator.
fn kept_tokens(tokens: Vec<TokenObservation>, segment: &Segment, generated: &str) -> Vec<TokenObservation> {
    if !segment.hit_separator {
        return tokens;
    }
    let cut = segment.text.len();
    debug_assert!(cut <= generated.len());
    let mut offset = 0;
    tokens
        .into_iter()
        .take_while(|t| {
            let start = offset;
            offset += t.text.len();
            start < cut
        })
        .collect()
}

/// Runs generation jobs with at most `cap` in flight; results come back in
/// job order regardless of completion order.
fn run_jobs(
    small: &dyn Generator,
    large: &dyn Generator,
    cap: usize,
    jobs: &[Job],
) -> Vec<Result<GeneratedStep, GeneratorError>> {
    let call = |job: &Job| {
        let generator = match job.model {
            ModelChoice::Small => small,
            ModelChoice::Large => large,
        };
        generator.generate_step(&StepRequest {
            question_id: &job.question_id,
            step_index: job.step_index,
            prompt: &job.prompt,
        })
    };
    let workers = cap.min(jobs.len());
    if workers <= 1 {
        return jobs.iter().map(call).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<GeneratedStep, GeneratorError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = call(job);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_at_first_separator() {
        assert_eq!(
            segment_step("a = 1\n\nNext", false),
            Segment { text: "a = 1".into(), hit_separator: true, hit_eos: false }
        );
        assert_eq!(
            segment_step("final answer.", true),
            Segment { text: "final answer.".into(), hit_separator: false, hit_eos: true }
        );
        let s = segment_step("x\n\ny\n\nz", true);
        assert_eq!(s.text, "x");
        assert!(s.hit_separator && !s.hit_eos);
        assert!(!segment_step("open", false).hit_eos);
    }

    #[test]
    fn group_sizes() {
        let sizes = |n, k| group_split(n, k, 3).unwrap().iter().map(Vec::len).collect::<Vec<_>>();
        assert_eq!(sizes(10, 1), vec![10]);
        assert_eq!(sizes(10, 2), vec![5, 5]);
        assert_eq!(sizes(10, 3), vec![4, 3, 3]);
        assert!(group_split(3, 4, 0).is_err());
        assert!(group_split(3, 0, 0).is_err());
        assert_eq!(group_split(5, 1, 9).unwrap(), vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn group_split_is_a_seeded_partition() {
        let a = group_split(37, 5, 11).unwrap();
        assert_eq!(a, group_split(37, 5, 11).unwrap());
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_ne!(a, group_split(37, 5, 12).unwrap());
    }

    fn step(index: usize, eos: bool) -> StepRecord {
        StepRecord {
            index,
            text: format!("s{index}"),
            model: ModelChoice::Small,
            confidence: StepConfidence {
                value: 1.0,
                metric: ConfidenceMetric::MaxLogit,
                aggregation: Aggregation::AllTokensMean,
                token_count: 1,
            },
            token_count: 1,
            refined: false,
            eos,
        }
    }

    #[test]
    fn completion_rule() {
        let config = EngineConfig { max_steps: 20, ..EngineConfig::default() };
        let mut t = Trace::new("q", "p");
        t.steps = (0..4).map(|i| step(i, i == 3)).collect();
        assert!(is_complete(&t, &config));
        t.steps = (0..20).map(|i| step(i, false)).collect();
        assert!(is_complete(&t, &config));
        t.steps = (0..2).map(|i| step(i, false)).collect();
        assert!(!is_complete(&t, &config));
    }

    #[test]
    fn prompt_assembly_uses_separator() {
        let steps = vec![step(0, false), step(1, false)];
        assert_eq!(assemble_prompt("Q", &steps), "Q\n\ns0\n\ns1\n\n");
        assert_eq!(assemble_prompt("Q", &[]), "Q\n\n");
    }

    #[test]
    fn tokens_after_separator_are_dropped() {
        use crate::confidence::ScoreSource;
        let tok = |t: &str| TokenObservation {
            text: t.into(),
            max_logit: 0.0,
            max_prob: None,
            entropy: None,
            source: ScoreSource::LogprobsProxy,
        };
        let text = "ab\n\ncd";
        let seg = segment_step(text, false);
        let kept = kept_tokens(vec![tok("a"), tok("b"), tok("\n\n"), tok("cd")], &seg, text);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::default().validate().is_ok());
        assert!(EngineConfig { max_steps: 0, ..EngineConfig::default() }.validate().is_err());
        assert!(EngineConfig::default()
            .with_policy(RoutingPolicy::PosteriorThreshold { gamma: 1.5 })
            .validate()
            .is_err());
    }
}
