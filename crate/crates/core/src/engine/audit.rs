//! Re-derives every routing decision from an event log alone.

use super::events::{EventKind, EventParams, EventRecord, FitSource};
use crate::mixture::posterior_confident;
use crate::routing::{decide, ModelChoice};
use std::collections::{HashMap, HashSet};

/// Posterior values are recomputed from logged parameters; JSON round trips
/// `f64` exactly, so only evaluation-order noise is tolerated.
const POSTERIOR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub decisions_checked: usize,
    pub steps_checked: usize,
    pub discrepancies: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.discrepancies.is_empty()
    }
}

/// Checks that each `route_decided` record follows from the logged
/// confidence and fit, that its confidence matches the step it was based
/// on, and that the next step was generated by the chosen model.
pub fn audit_routing(events: &[EventRecord]) -> AuditReport {
    let mut report = AuditReport::default();
    // Latest confidence per (trace, step).
    let mut phis: HashMap<(String, usize), f64> = HashMap::new();
    // Routed model per (trace, target step).
    let mut routed: HashMap<(String, usize), ModelChoice> = HashMap::new();
    let mut refined: HashSet<String> = HashSet::new();
    let mut failed: HashSet<String> = HashSet::new();
    let issue = |report: &mut AuditReport, msg: String| report.discrepancies.push(msg);

    for (line, e) in events.iter().enumerate() {
        let line = line + 1;
        match e.event {
            EventKind::StepGenerated => {
                let (Some(trace), Some(step), Some(model), Some(phi)) = (&e.trace_id, e.step_index, e.model, e.phi)
                else {
                    issue(&mut report, format!("line {line}: step_generated missing fields"));
                    continue;
                };
                report.steps_checked += 1;
                let is_refinement = matches!(e.params, Some(EventParams::Step { refined: true, .. }));
                if is_refinement {
                    if routed.get(&(trace.clone(), 0)) != Some(&ModelChoice::Large) {
                        issue(&mut report, format!("line {line}: {trace} refined without a large decision"));
                    }
                    refined.insert(trace.clone());
                } else if step > 0 {
                    match routed.get(&(trace.clone(), step)) {
                        Some(&m) if m == model => {}
                        Some(&m) => issue(
                            &mut report,
                            format!("line {line}: {trace} step {step} generated by {model}, routed to {m}"),
                        ),
                        None => issue(&mut report, format!("line {line}: {trace} step {step} generated without a decision")),
                    }
                }
                phis.insert((trace.clone(), step), phi);
            }
            EventKind::RouteDecided => {
                let (Some(trace), Some(step), Some(model), Some(phi), Some(params)) =
                    (&e.trace_id, e.step_index, e.model, e.phi, &e.params)
                else {
                    issue(&mut report, format!("line {line}: route_decided missing fields"));
                    continue;
                };
                report.decisions_checked += 1;
                let basis = step.saturating_sub(1);
                match phis.get(&(trace.clone(), basis)) {
                    Some(&logged) if logged == phi => {}
                    Some(&logged) => issue(
                        &mut report,
                        format!("line {line}: {trace} routed on phi {phi}, step {basis} logged {logged}"),
                    ),
                    None => issue(&mut report, format!("line {line}: {trace} routed before step {basis} existed")),
                }
                match expected_choice(phi, e.posterior, params) {
                    Ok(expected) if expected == model => {}
                    Ok(expected) => issue(
                        &mut report,
                        format!("line {line}: {trace} step {step} routed to {model}, expected {expected}"),
                    ),
                    Err(msg) => issue(&mut report, format!("line {line}: {trace}: {msg}")),
                }
                routed.insert((trace.clone(), step), model);
            }
            EventKind::TraceFailed => {
                if let Some(t) = &e.trace_id {
                    failed.insert(t.clone());
                }
            }
            _ => {}
        }
    }

    let mut missing: Vec<&String> = routed
        .iter()
        .filter(|((t, s), m)| *s == 0 && **m == ModelChoice::Large && !refined.contains(t) && !failed.contains(t))
        .map(|((t, _), _)| t)
        .collect();
    missing.sort();
    for t in missing {
        issue(&mut report, format!("{t}: first step routed large but never refined"));
    }
    report
}

fn expected_choice(phi: f64, logged_posterior: Option<f64>, params: &EventParams) -> Result<ModelChoice, String> {
    match params {
        EventParams::Static { model, .. } => Ok(*model),
        EventParams::Percentile { cutoff, .. } => Ok(match cutoff {
            Some(c) if phi < *c => ModelChoice::Large,
            _ => ModelChoice::Small,
        }),
        EventParams::Mixture { gamma, source, weak_separation, fit, .. } => {
            let Some(fit) = fit else {
                if *source != FitSource::None {
                    return Err("fit missing from a fresh or reused mixture".into());
                }
                return Ok(ModelChoice::Small);
            };
            let posterior = posterior_confident(phi, fit).map_err(|e| e.to_string())?;
            match logged_posterior {
                Some(p) if (p - posterior).abs() <= POSTERIOR_TOLERANCE => {}
                Some(p) => return Err(format!("logged posterior {p} but parameters give {posterior}")),
                None => return Err("posterior missing".into()),
            }
            Ok(if *weak_separation { ModelChoice::Small } else { decide(posterior, *gamma) })
        }
        other => Err(format!("route_decided carries unexpected params {other:?}")),
    }
}
