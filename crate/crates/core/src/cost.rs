//! Inference-cost accounting.
//!
//! Cost follows the transformer rule of `2 * N` floating-point operations
//! per generated token for an `N`-parameter model, reported in units of
//! 10^12 FLOPs. Prompt (prefill) tokens are tracked separately and kept out
//! of the headline figure.

use crate::engine::{Trace, TraceStatus};
use crate::routing::ModelChoice;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

const TERA: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("average FLOPs must be positive, got {0}")]
    NonPositiveFlops(f64),
}

/// `2 * param_count * tokens / 10^12`, with the product formed exactly.
pub fn flops_for(param_count: u64, tokens: u64) -> f64 {
    let ops = 2u128 * param_count as u128 * tokens as u128;
    ops as f64 / TERA
}

/// Accuracy divided by average per-query FLOPs, in whatever accuracy
/// convention the caller uses (reports use percent).
pub fn accuracy_per_flops(accuracy: f64, avg_flops: f64) -> Result<f64, CostError> {
    if !(avg_flops > 0.0) {
        return Err(CostError::NonPositiveFlops(avg_flops));
    }
    Ok(accuracy / avg_flops)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCost {
    pub trace_id: String,
    pub tokens_small: u64,
    pub tokens_large: u64,
    pub prompt_tokens_small: u64,
    pub prompt_tokens_large: u64,
    pub status: TraceStatus,
    pub correct: Option<bool>,
}

impl TraceCost {
    fn new(trace_id: &str) -> Self {
        Self {
            trace_id: trace_id.to_string(),
            tokens_small: 0,
            tokens_large: 0,
            prompt_tokens_small: 0,
            prompt_tokens_large: 0,
            status: TraceStatus::Ongoing,
            correct: None,
        }
    }

    fn tokens(&self, model: ModelChoice) -> u64 {
        match model {
            ModelChoice::Small => self.tokens_small,
            ModelChoice::Large => self.tokens_large,
        }
    }

    fn prompt_tokens(&self, model: ModelChoice) -> u64 {
        match model {
            ModelChoice::Small => self.prompt_tokens_small,
            ModelChoice::Large => self.prompt_tokens_large,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTotals {
    pub name: String,
    pub param_count: u64,
    pub tokens: u64,
    pub prompt_tokens: u64,
    /// Generated-token FLOPs, 10^12 units.
    pub flops: f64,
    /// Prefill FLOPs, 10^12 units; reported but not part of `flops`.
    pub prompt_flops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub param_count: u64,
}

/// Token and FLOPs bookkeeping for one run. Totals are always derived from
/// the per-trace records.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger {
    small: ModelInfo,
    large: ModelInfo,
    traces: Vec<TraceCost>,
    index: HashMap<String, usize>,
}

impl CostLedger {
    pub fn new(small: ModelInfo, large: ModelInfo) -> Self {
        Self { small, large, traces: Vec::new(), index: HashMap::new() }
    }

    pub fn model(&self, model: ModelChoice) -> &ModelInfo {
        match model {
            ModelChoice::Small => &self.small,
            ModelChoice::Large => &self.large,
        }
    }

    fn entry(&mut self, trace_id: &str) -> &mut TraceCost {
        let idx = match self.index.get(trace_id) {
            Some(&i) => i,
            None => {
                self.traces.push(TraceCost::new(trace_id));
                self.index.insert(trace_id.to_string(), self.traces.len() - 1);
                self.traces.len() - 1
            }
        };
        &mut self.traces[idx]
    }

    /// Registers a trace so it appears in the ledger even if it never spends.
    pub fn open(&mut self, trace_id: &str) {
        self.entry(trace_id);
    }

    pub fn record(&mut self, trace_id: &str, model: ModelChoice, tokens: u64, prompt_tokens: u64) {
        let e = self.entry(trace_id);
        match model {
            ModelChoice::Small => {
                e.tokens_small += tokens;
                e.prompt_tokens_small += prompt_tokens;
            }
            ModelChoice::Large => {
                e.tokens_large += tokens;
                e.prompt_tokens_large += prompt_tokens;
            }
        }
    }

    pub fn set_status(&mut self, trace_id: &str, status: TraceStatus) {
        self.entry(trace_id).status = status;
    }

    pub fn set_correct(&mut self, trace_id: &str, correct: bool) {
        self.entry(trace_id).correct = Some(correct);
    }

    pub fn traces(&self) -> &[TraceCost] {
        &self.traces
    }

    pub fn trace(&self, trace_id: &str) -> Option<&TraceCost> {
        self.index.get(trace_id).map(|&i| &self.traces[i])
    }

    /// Appends another ledger's records (e.g. from a different question
    /// group). Trace ids must be disjoint.
    pub fn absorb(&mut self, other: CostLedger) {
        for t in other.traces {
            debug_assert!(!self.index.contains_key(&t.trace_id));
            self.index.insert(t.trace_id.clone(), self.traces.len());
            self.traces.push(t);
        }
    }

    /// Reorders trace records to follow `ids`; unknown ids are ignored.
    pub fn reorder<'a>(&mut self, ids: impl IntoIterator<Item = &'a str>) {
        let mut taken: Vec<Option<TraceCost>> = std::mem::take(&mut self.traces).into_iter().map(Some).collect();
        let mut ordered = Vec::with_capacity(taken.len());
        for id in ids {
            if let Some(&i) = self.index.get(id) {
                if let Some(t) = taken[i].take() {
                    ordered.push(t);
                }
            }
        }
        ordered.extend(taken.into_iter().flatten());
        self.index = ordered.iter().enumerate().map(|(i, t)| (t.trace_id.clone(), i)).collect();
        self.traces = ordered;
    }

    pub fn tokens(&self, model: ModelChoice) -> u64 {
        self.traces.iter().map(|t| t.tokens(model)).sum()
    }

    pub fn prompt_tokens(&self, model: ModelChoice) -> u64 {
        self.traces.iter().map(|t| t.prompt_tokens(model)).sum()
    }

    pub fn flops(&self, model: ModelChoice) -> f64 {
        flops_for(self.model(model).param_count, self.tokens(model))
    }

    pub fn totals(&self, model: ModelChoice) -> ModelTotals {
        let info = self.model(model);
        ModelTotals {
            name: info.name.clone(),
            param_count: info.param_count,
            tokens: self.tokens(model),
            prompt_tokens: self.prompt_tokens(model),
            flops: self.flops(model),
            prompt_flops: flops_for(info.param_count, self.prompt_tokens(model)),
        }
    }

    pub fn total_flops(&self) -> f64 {
        self.flops(ModelChoice::Small) + self.flops(ModelChoice::Large)
    }

    /// Mean generated-token FLOPs per query, failed traces included.
    pub fn avg_flops(&self) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        self.total_flops() / self.traces.len() as f64
    }

    /// Percent of graded traces that are correct; failed traces count as
    /// incorrect. `None` when no trace carries a grade.
    pub fn accuracy_percent(&self) -> Option<f64> {
        if self.traces.iter().all(|t| t.correct.is_none()) {
            return None;
        }
        let correct = self.traces.iter().filter(|t| t.correct == Some(true)).count();
        Some(100.0 * correct as f64 / self.traces.len() as f64)
    }

    pub fn summary(&self) -> LedgerSummary {
        let accuracy = self.accuracy_percent();
        let avg_flops = self.avg_flops();
        LedgerSummary {
            questions: self.traces.len(),
            failed: self.traces.iter().filter(|t| matches!(t.status, TraceStatus::Failed { .. })).count(),
            accuracy,
            avg_flops,
            avg_prompt_flops: if self.traces.is_empty() {
                0.0
            } else {
                (flops_for(self.small.param_count, self.prompt_tokens(ModelChoice::Small))
                    + flops_for(self.large.param_count, self.prompt_tokens(ModelChoice::Large)))
                    / self.traces.len() as f64
            },
            a_per_f: accuracy.and_then(|a| accuracy_per_flops(a, avg_flops).ok()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub questions: usize,
    pub failed: usize,
    /// Percent.
    pub accuracy: Option<f64>,
    pub avg_flops: f64,
    pub avg_prompt_flops: f64,
    pub a_per_f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageBin {
    /// Upper edge of the relative-position bin: 0.1, 0.2, ..., 1.0.
    pub position: f64,
    pub large_steps: usize,
    pub steps: usize,
    /// `large_steps / steps`, absent for an empty bin.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageProfile {
    pub all: Vec<UsageBin>,
    pub correct: Option<Vec<UsageBin>>,
    pub incorrect: Option<Vec<UsageBin>>,
}

/// Decile of the relative position `(i + 1) / len`, as a bin index 0..=9.
fn decile(step_index: usize, len: usize) -> usize {
    // ceil(10 (i + 1) / len) - 1 in integer arithmetic
    ((10 * (step_index + 1)).div_ceil(len)).clamp(1, 10) - 1
}

fn bins<'a>(traces: impl Iterator<Item = &'a Trace>) -> Vec<UsageBin> {
    let mut counts = [(0usize, 0usize); 10];
    for trace in traces {
        let len = trace.steps.len();
        for step in &trace.steps {
            let b = decile(step.index, len);
            counts[b].1 += 1;
            if step.model == ModelChoice::Large {
                counts[b].0 += 1;
            }
        }
    }
    counts
        .iter()
        .enumerate()
        .map(|(b, &(large_steps, steps))| UsageBin {
            position: (b + 1) as f64 / 10.0,
            large_steps,
            steps,
            ratio: (steps > 0).then(|| large_steps as f64 / steps as f64),
        })
        .collect()
}

/// Share of steps generated by the large model, by relative step position.
/// `correct` supplies per-trace grades for the split view.
pub fn usage_profile(traces: &[Trace], correct: Option<&dyn Fn(&Trace) -> Option<bool>>) -> UsageProfile {
    let (correct_bins, incorrect_bins) = match correct {
        Some(grade) => (
            Some(bins(traces.iter().filter(|t| grade(t) == Some(true)))),
            Some(bins(traces.iter().filter(|t| grade(t) == Some(false)))),
        ),
        None => (None, None),
    };
    UsageProfile { all: bins(traces.iter()), correct: correct_bins, incorrect: incorrect_bins }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::{Aggregation, ConfidenceMetric, StepConfidence};
    use crate::engine::StepRecord;

    #[test]
    fn flops_rule() {
        assert_eq!(flops_for(4_000_000_000, 0), 0.0);
        assert_eq!(flops_for(4_000_000_000, 100), 0.8);
        assert_eq!(flops_for(12_000_000_000, 1_000), 24.0);
    }

    #[test]
    fn accuracy_per_flops_rules() {
        assert_eq!(accuracy_per_flops(0.0, 3.0).unwrap(), 0.0);
        assert!((accuracy_per_flops(44.9, 24.0).unwrap() - 1.870_833).abs() < 1e-6);
        assert_eq!(accuracy_per_flops(10.0, 0.0), Err(CostError::NonPositiveFlops(0.0)));
    }

    fn info(name: &str, n: u64) -> ModelInfo {
        ModelInfo { name: name.into(), param_count: n }
    }

    #[test]
    fn ledger_totals_follow_records() {
        let mut l = CostLedger::new(info("s", 1_000_000_000), info("l", 7_000_000_000));
        l.record("a", ModelChoice::Small, 10, 5);
        l.record("a", ModelChoice::Large, 3, 20);
        l.record("b", ModelChoice::Small, 7, 0);
        assert_eq!(l.tokens(ModelChoice::Small), 17);
        assert_eq!(l.tokens(ModelChoice::Large), 3);
        assert_eq!(l.flops(ModelChoice::Large), flops_for(7_000_000_000, 3));
        assert_eq!(l.totals(ModelChoice::Small).prompt_tokens, 5);
        assert_eq!(l.avg_flops(), (flops_for(1_000_000_000, 17) + flops_for(7_000_000_000, 3)) / 2.0);
        assert_eq!(l.accuracy_percent(), None);
        l.set_correct("a", true);
        l.set_correct("b", false);
        assert_eq!(l.accuracy_percent(), Some(50.0));
    }

    fn trace(models: &[ModelChoice]) -> Trace {
        let mut t = Trace::new("q", "p");
        for (i, &m) in models.iter().enumerate() {
            t.steps.push(StepRecord {
                index: i,
                text: format!("s{i}"),
                model: m,
                confidence: StepConfidence {
                    value: 0.0,
                    metric: ConfidenceMetric::MaxLogit,
                    aggregation: Aggregation::AllTokensMean,
                    token_count: 1,
                },
                token_count: 1,
                refined: false,
                eos: false,
            });
        }
        t
    }

    #[test]
    fn usage_profile_bins() {
        use ModelChoice::*;
        let all_small = usage_profile(&[trace(&[Small; 10])], None);
        assert!(all_small.all.iter().all(|b| b.ratio == Some(0.0)));
        let all_large = usage_profile(&[trace(&[Large; 10])], None);
        assert!(all_large.all.iter().all(|b| b.ratio == Some(1.0)));

        // first and second steps large
        let mut models = [Small; 10];
        models[0] = Large;
        models[1] = Large;
        let p = usage_profile(&[trace(&models)], None);
        let ratios: Vec<_> = p.all.iter().map(|b| b.ratio.unwrap()).collect();
        assert_eq!(ratios, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn deciles_for_short_traces() {
        assert_eq!(decile(0, 1), 9);
        assert_eq!(decile(0, 3), 3);
        assert_eq!(decile(2, 3), 9);
        assert_eq!(decile(0, 20), 0);
        assert_eq!(decile(1, 20), 0);
        assert_eq!(decile(2, 20), 1);
    }
}
