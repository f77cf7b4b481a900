#![allow(dead_code)]

use astro_float::{BigFloat, Consts, RoundingMode};
use serde_json::Value;
use std::sync::Arc;
use steer_core::engine::{EventKind, EventParams, EventRecord, Question};
use steer_core::generators::{
    GeneratorSpec, ScriptQuestion, ScriptStep, ScriptToken, ScriptedGenerator, ScriptedScenario, StepVariant,
    SCENARIO_SCHEMA_VERSION,
};
use steer_core::mixture::MixtureParams;
use steer_core::routing::ModelChoice;

pub const SMALL_PARAMS: u64 = 1_000_000_000;
pub const LARGE_PARAMS: u64 = 8_000_000_000;

// ---------------------------------------------------------------------------
// High-precision oracle

pub const PREC: usize = 320;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Hp {
    cc: Consts,
}

impl Hp {
    pub fn new() -> Self {
        Self { cc: Consts::new().expect("constants cache") }
    }

    pub fn num(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, PREC)
    }

    pub fn to_f64(&self, x: &BigFloat) -> f64 {
        x.to_string().parse().unwrap_or_else(|_| panic!("cannot parse {x}"))
    }

    pub fn exp(&mut self, x: &BigFloat) -> BigFloat {
        x.exp(PREC, RM, &mut self.cc)
    }

    pub fn ln(&mut self, x: &BigFloat) -> BigFloat {
        x.ln(PREC, RM, &mut self.cc)
    }

    /// Gaussian density, evaluated directly.
    pub fn normal_pdf(&mut self, x: f64, mean: f64, var: f64) -> BigFloat {
        let d = self.num(x).sub(&self.num(mean), PREC, RM);
        let two_var = self.num(var).mul(&self.num(2.0), PREC, RM);
        let expo = d.mul(&d, PREC, RM).div(&two_var, PREC, RM).neg();
        let pi = self.cc.pi(PREC, RM);
        let norm = pi.mul(&two_var, PREC, RM).sqrt(PREC, RM);
        self.exp(&expo).div(&norm, PREC, RM)
    }

    /// w_c N_c / (w_c N_c + w_u N_u) at high precision.
    pub fn posterior(&mut self, phi: f64, p: &MixtureParams) -> f64 {
        let c = self.normal_pdf(phi, p.mean_c, p.var_c).mul(&self.num(p.weight_c), PREC, RM);
        let u = self.normal_pdf(phi, p.mean_u, p.var_u).mul(&self.num(p.weight_u), PREC, RM);
        let total = c.add(&u, PREC, RM);
        self.to_f64(&c.div(&total, PREC, RM))
    }

    pub fn log_likelihood(&mut self, samples: &[f64], p: &MixtureParams) -> f64 {
        let mut sum = self.num(0.0);
        for &x in samples {
            let c = self.normal_pdf(x, p.mean_c, p.var_c).mul(&self.num(p.weight_c), PREC, RM);
            let u = self.normal_pdf(x, p.mean_u, p.var_u).mul(&self.num(p.weight_u), PREC, RM);
            let l = self.ln(&c.add(&u, PREC, RM));
            sum = sum.add(&l, PREC, RM);
        }
        self.to_f64(&sum)
    }

    /// Softmax maximum and entropy (nats) of a logit vector.
    pub fn softmax_stats(&mut self, logits: &[f64]) -> (f64, f64) {
        let exps: Vec<BigFloat> = logits.iter().map(|&l| self.exp(&self.num(l))).collect();
        let mut z = self.num(0.0);
        for e in &exps {
            z = z.add(e, PREC, RM);
        }
        let mut max = self.num(0.0);
        let mut h = self.num(0.0);
        for e in &exps {
            let p = e.div(&z, PREC, RM);
            if p.cmp(&max) == Some(1) {
                max = p.clone();
            }
            let lp = self.ln(&p);
            h = h.sub(&p.mul(&lp, PREC, RM), PREC, RM);
        }
        (self.to_f64(&max), self.to_f64(&h))
    }

    /// `2 * params * tokens / 10^12`, correctly rounded.
    pub fn flops(&self, params: u64, tokens: u64) -> f64 {
        let ops = BigFloat::from_u128(2 * params as u128 * tokens as u128, PREC);
        self.to_f64(&ops.div(&self.num(1e12), PREC, RM))
    }
}

// ---------------------------------------------------------------------------
// Hand-built scenarios

pub fn variant(text: &str, phi: f64, tokens: usize, eos: bool, valid: bool) -> StepVariant {
    StepVariant {
        text: text.to_string(),
        tokens: (0..tokens).map(|i| ScriptToken::scalar(format!("t{i}"), phi)).collect(),
        emit_eos: eos,
        valid,
    }
}

/// One question per row of `small_phis` (one entry per step). The large
/// variant of each step scores `large_phi`; the last step ends the trace.
pub fn hand_scenario(small_phis: &[Vec<f64>], large_phi: f64) -> Arc<ScriptedScenario> {
    let questions = small_phis
        .iter()
        .enumerate()
        .map(|(qi, phis)| {
            let n = phis.len();
            let steps = phis
                .iter()
                .enumerate()
                .map(|(si, &phi)| {
                    let last = si + 1 == n;
                    let text = |who: &str| if last { format!("answer 7 ({who})") } else { format!("step {si} ({who})") };
                    ScriptStep {
                        label: None,
                        small: variant(&text("small"), phi, 4, last, true),
                        large: Some(variant(&text("large"), large_phi, 4, last, true)),
                    }
                })
                .collect();
            ScriptQuestion {
                id: format!("h{qi}"),
                prompt: format!("hand question {qi}"),
                difficulty: 0.0,
                gold_answer: "7".into(),
                steps,
            }
        })
        .collect();
    Arc::new(ScriptedScenario { schema_version: SCENARIO_SCHEMA_VERSION, questions })
}

pub fn questions(s: &ScriptedScenario) -> Vec<Question> {
    s.questions.iter().map(|q| Question::new(&q.id, &q.prompt)).collect()
}

pub fn pair(s: &Arc<ScriptedScenario>) -> (ScriptedGenerator, ScriptedGenerator) {
    (
        ScriptedGenerator::new(GeneratorSpec::scripted("small", SMALL_PARAMS), ModelChoice::Small, s.clone()).unwrap(),
        ScriptedGenerator::new(GeneratorSpec::scripted("large", LARGE_PARAMS), ModelChoice::Large, s.clone()).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// Independent replay auditor

/// Posterior from scratch in the log domain, sharing no code with the
/// library.
pub fn replay_posterior(phi: f64, p: &MixtureParams) -> f64 {
    let log_n = |x: f64, m: f64, v: f64| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v);
    let lc = p.weight_c.ln() + log_n(phi, p.mean_c, p.var_c);
    let lu = p.weight_u.ln() + log_n(phi, p.mean_u, p.var_u);
    let hi = lc.max(lu);
    let c = (lc - hi).exp();
    c / (c + (lu - hi).exp())
}

/// Walks the log and recomputes every routing choice from the logged
/// confidence and parameters, then checks the next generation used it.
/// Returns `(decisions checked, discrepancies)`.
pub fn replay_audit(events: &[EventRecord]) -> (usize, Vec<String>) {
    use std::collections::HashMap;
    let mut latest: HashMap<(String, usize), f64> = HashMap::new();
    let mut decided: HashMap<(String, usize), ModelChoice> = HashMap::new();
    let mut problems = Vec::new();
    let mut checked = 0;
    for e in events {
        let trace = e.trace_id.clone().unwrap_or_default();
        match (&e.event, &e.params) {
            (EventKind::StepGenerated, Some(EventParams::Step { refined, .. })) => {
                let step = e.step_index.unwrap();
                let key = (trace.clone(), step);
                if *refined {
                    if decided.get(&(trace.clone(), 0)) != Some(&ModelChoice::Large) {
                        problems.push(format!("{trace}: unexpected refinement"));
                    }
                } else if step > 0 && decided.get(&key) != e.model.as_ref() {
                    problems.push(format!("{trace} step {step}: generated by {:?}, decided {:?}", e.model, decided.get(&key)));
                }
                latest.insert(key, e.phi.unwrap());
            }
            (EventKind::RouteDecided, Some(params)) => {
                checked += 1;
                let step = e.step_index.unwrap();
                let phi = latest[&(trace.clone(), step.saturating_sub(1))];
                assert_eq!(Some(phi), e.phi, "logged phi differs from the step's");
                let expected = match params {
                    EventParams::Mixture { gamma, weak_separation, fit, .. } => match fit {
                        Some(p) if !weak_separation => {
                            if replay_posterior(phi, p) >= *gamma {
                                ModelChoice::Small
                            } else {
                                ModelChoice::Large
                            }
                        }
                        _ => ModelChoice::Small,
                    },
                    EventParams::Percentile { cutoff, .. } => match cutoff {
                        Some(c) if phi < *c => ModelChoice::Large,
                        _ => ModelChoice::Small,
                    },
                    EventParams::Static { model, .. } => *model,
                    other => panic!("unexpected params {other:?}"),
                };
                if Some(expected) != e.model {
                    problems.push(format!("{trace} step {step}: routed {:?}, replay says {expected:?}", e.model));
                }
                decided.insert((trace, step), e.model.unwrap());
            }
            _ => {}
        }
    }
    (checked, problems)
}

/// Event log with the timestamp field removed.
pub fn without_timestamps(events: &[EventRecord]) -> Vec<Value> {
    events
        .iter()
        .map(|e| {
            let mut v = serde_json::to_value(e).unwrap();
            v.as_object_mut().unwrap().remove("timestamp");
            v
        })
        .collect()
}
