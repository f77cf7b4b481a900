//! Run artifacts: traces, ledger report, summary and frontier tables.

use super::{RunConfig, VERSION};
use crate::cost::{usage_profile, LedgerSummary, ModelTotals, TraceCost, UsageProfile};
use crate::engine::{RunOutcome, Trace};
use crate::routing::{ModelChoice, RoutingPolicy};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLabel {
    pub label: String,
    pub gamma: Option<f64>,
    pub policy: RoutingPolicy,
}

impl RunLabel {
    pub fn new(label: &str, gamma: Option<f64>, policy: RoutingPolicy) -> Self {
        Self { label: label.to_string(), gamma, policy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub label: String,
    pub gamma: Option<f64>,
    /// Percent of questions graded correct.
    pub accuracy: Option<f64>,
    /// Generated-token FLOPs per question, in units of 10^12.
    pub avg_flops: f64,
    pub a_per_f: Option<f64>,
    /// Fraction of kept steps generated by the large model.
    pub large_usage: f64,
    pub large_tokens: u64,
    pub failed: usize,
}

pub(super) fn embedded_config(config: &RunConfig, label: &RunLabel) -> Value {
    json!({ "run_config": config, "run": label })
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    version: &'static str,
    run_config: &'a RunConfig,
    run: &'a RunLabel,
    models: Models,
    summary: LedgerSummary,
    large_step_fraction: f64,
    usage_profile: UsageProfile,
    traces: &'a [TraceCost],
}

#[derive(Debug, Serialize)]
struct Models {
    small: ModelTotals,
    large: ModelTotals,
}

pub(super) struct Artifacts {
    pub row: FrontierRow,
    traces: String,
    report: String,
    summary: String,
}

impl Artifacts {
    pub fn build(
        config: &RunConfig,
        label: &RunLabel,
        outcome: &RunOutcome,
        grade: &dyn Fn(&Trace) -> Option<bool>,
    ) -> Self {
        let ledger = &outcome.ledger;
        let summary = ledger.summary();
        let report = Report {
            version: VERSION,
            run_config: config,
            run: label,
            models: Models { small: ledger.totals(ModelChoice::Small), large: ledger.totals(ModelChoice::Large) },
            summary: summary.clone(),
            large_step_fraction: outcome.large_step_fraction(),
            usage_profile: usage_profile(&outcome.traces, Some(grade)),
            traces: ledger.traces(),
        };
        let row = FrontierRow {
            label: label.label.clone(),
            gamma: label.gamma,
            accuracy: summary.accuracy,
            avg_flops: summary.avg_flops,
            a_per_f: summary.a_per_f,
            large_usage: outcome.large_step_fraction(),
            large_tokens: ledger.tokens(ModelChoice::Large),
            failed: summary.failed,
        };
        let traces = json!({
            "version": VERSION,
            "run_config": config,
            "run": label,
            "traces": outcome.traces,
        });
        Self {
            summary: summary_table(config, label, &report.models.small, &report.models.large, &summary, &row),
            traces: pretty(&traces),
            report: pretty(&report),
            row,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::write(dir.join("traces.json"), &self.traces)?;
        std::fs::write(dir.join("report.json"), &self.report)?;
        std::fs::write(dir.join("summary.txt"), &self.summary)
    }
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

fn header(config: &RunConfig) -> String {
    format!(
        "# steer {VERSION}\n# config {}\n",
        serde_json::to_string(config).expect("config serializes")
    )
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn summary_table(
    config: &RunConfig,
    label: &RunLabel,
    small: &ModelTotals,
    large: &ModelTotals,
    summary: &LedgerSummary,
    row: &FrontierRow,
) -> String {
    let mut out = header(config);
    let _ = writeln!(out, "{:<14}{}", "run", label.label);
    let _ = writeln!(out, "{:<14}{}", "questions", summary.questions);
    let _ = writeln!(out, "{:<14}{}", "failed", summary.failed);
    let _ = writeln!(out, "{:<14}{}", "accuracy %", opt(summary.accuracy, 2));
    let _ = writeln!(out, "{:<14}{:.4}", "avg FLOPs e12", summary.avg_flops);
    let _ = writeln!(out, "{:<14}{:.4}", "prompt e12", summary.avg_prompt_flops);
    let _ = writeln!(out, "{:<14}{}", "A/F", opt(summary.a_per_f, 4));
    let _ = writeln!(out, "{:<14}{:.4}", "large usage", row.large_usage);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<8}{:<20}{:>16}{:>12}{:>14}", "model", "name", "params", "tokens", "FLOPs e12");
    for (role, m) in [("small", small), ("large", large)] {
        let _ = writeln!(out, "{:<8}{:<20}{:>16}{:>12}{:>14.4}", role, m.name, m.param_count, m.tokens, m.flops);
    }
    out
}

pub fn frontier_table(config: &RunConfig, rows: &[FrontierRow]) -> String {
    let mut out = header(config);
    let _ = writeln!(
        out,
        "{:<14}{:>7}{:>11}{:>14}{:>10}{:>9}{:>8}",
        "run", "gamma", "accuracy", "avg FLOPs e12", "A/F", "large", "failed"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<14}{:>7}{:>11}{:>14.4}{:>10}{:>9.4}{:>8}",
            r.label,
            opt(r.gamma, 2),
            opt(r.accuracy, 2),
            r.avg_flops,
            opt(r.a_per_f, 4),
            r.large_usage,
            r.failed
        );
    }
    out
}

pub(super) fn frontier_json(config: &RunConfig, rows: &[FrontierRow]) -> String {
    pretty(&json!({ "version": VERSION, "run_config": config, "rows": rows }))
}
