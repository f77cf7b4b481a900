//! Scripted scenarios: per-question step scripts for both generators, with
//! ground truth for grading.
//!
//! A scenario file is JSON:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "questions": [{
//!     "id": "q0", "prompt": "...", "difficulty": 0.2, "gold_answer": "42",
//!     "steps": [{
//!       "label": "confident",
//!       "small": {"text": "so x=4", "emit_eos": false, "valid": true,
//!                 "tokens": [{"text": "so", "max_logit": 5.1}, {"text": " x", "logits": [6.0, 1.0]}]},
//!       "large": { ... }
//!     }]
//!   }]
//! }
//! ```
//!
//! `large` may be omitted, in which case both generators replay `small`.

use super::{GeneratorError, STEP_SEPARATOR};
use crate::confidence::{token_confidence, ScoreSource, TokenObservation};
use crate::engine::{Trace, TraceStatus};
use crate::routing::ModelChoice;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Ground-truth mixture component a scripted step was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Confident,
    Unconfident,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptToken {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_logit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
}

impl ScriptToken {
    pub fn scalar(text: impl Into<String>, max_logit: f64) -> Self {
        Self { text: text.into(), logits: None, max_logit: Some(max_logit), max_prob: None, entropy: None }
    }

    pub fn from_logits(text: impl Into<String>, logits: Vec<f64>) -> Self {
        Self { text: text.into(), logits: Some(logits), max_logit: None, max_prob: None, entropy: None }
    }

    pub fn observation(&self) -> Result<TokenObservation, GeneratorError> {
        match (&self.logits, self.max_logit) {
            (Some(logits), None) => token_confidence(self.text.clone(), logits)
                .map_err(|e| GeneratorError::InvalidScenario(format!("token {:?}: {e}", self.text))),
            (None, Some(max_logit)) if max_logit.is_finite() => {
                if let Some(p) = self.max_prob {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(GeneratorError::InvalidScenario(format!("token {:?}: max_prob {p}", self.text)));
                    }
                }
                if let Some(h) = self.entropy {
                    if !(h >= 0.0) {
                        return Err(GeneratorError::InvalidScenario(format!("token {:?}: entropy {h}", self.text)));
                    }
                }
                Ok(TokenObservation {
                    text: self.text.clone(),
                    max_logit,
                    max_prob: self.max_prob,
                    entropy: self.entropy,
                    source: ScoreSource::RawLogits,
                })
            }
            _ => Err(GeneratorError::InvalidScenario(format!(
                "token {:?} needs exactly one of `logits` or a finite `max_logit`",
                self.text
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepVariant {
    pub text: String,
    pub tokens: Vec<ScriptToken>,
    #[serde(default)]
    pub emit_eos: bool,
    /// Whether this output keeps the solution on track.
    #[serde(default = "default_true")]
    pub valid: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Component>,
    pub small: StepVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub large: Option<StepVariant>,
}

impl ScriptStep {
    pub fn variant(&self, model: ModelChoice) -> &StepVariant {
        match model {
            ModelChoice::Small => &self.small,
            ModelChoice::Large => self.large.as_ref().unwrap_or(&self.small),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptQuestion {
    pub id: String,
    pub prompt: String,
    #[serde(default)]
    pub difficulty: f64,
    pub gold_answer: String,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedScenario {
    pub schema_version: u32,
    pub questions: Vec<ScriptQuestion>,
}

impl ScriptedScenario {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |msg: String| Err(GeneratorError::InvalidScenario(msg));
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCENARIO_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.questions.is_empty() {
            return bad("no questions".into());
        }
        let mut seen = HashSet::new();
        for q in &self.questions {
            if !seen.insert(q.id.as_str()) {
                return bad(format!("duplicate question id {}", q.id));
            }
            if q.prompt.is_empty() {
                return bad(format!("{}: empty prompt", q.id));
            }
            if q.steps.is_empty() {
                return bad(format!("{}: no steps", q.id));
            }
            for (i, step) in q.steps.iter().enumerate() {
                for v in std::iter::once(&step.small).chain(step.large.as_ref()) {
                    if v.text.contains(STEP_SEPARATOR) {
                        return bad(format!("{} step {i}: text contains the step separator", q.id));
                    }
                    if v.tokens.is_empty() {
                        return bad(format!("{} step {i}: no tokens", q.id));
                    }
                    for t in &v.tokens {
                        t.observation()?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GeneratorError> {
        let s: Self = serde_json::from_str(text).map_err(|e| GeneratorError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeneratorError::InvalidScenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }

    pub fn question(&self, id: &str) -> Option<&ScriptQuestion> {
        self.questions.iter().find(|q| q.id == id)
    }

    /// A trace is correct when it ended on EOS, every kept step came from a
    /// valid variant, and the final step states the gold answer.
    pub fn grade(&self, trace: &Trace) -> Option<bool> {
        let q = self.question(&trace.question_id)?;
        if trace.status != TraceStatus::CompleteEos {
            return Some(false);
        }
        let all_valid = trace.steps.iter().all(|s| {
            q.steps
                .get(s.index)
                .map(|step| step.variant(s.model).valid)
                .unwrap_or(false)
        });
        let answered = trace.steps.last().is_some_and(|s| s.text.contains(&q.gold_answer));
        Some(all_valid && answered)
    }
}

/// Means and standard deviations of the two step-confidence components,
/// in max-logit units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub mean_u: f64,
    pub mean_c: f64,
    pub sd_u: f64,
    pub sd_c: f64,
}

/// Parameters for [`synth_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// One latent difficulty in [0, 1] per question; a step is drawn from
    /// the unconfident component with probability equal to it.
    pub difficulties: Vec<f64>,
    pub components: ComponentSpec,
    pub min_steps: usize,
    pub max_steps: usize,
    pub tokens_per_step: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(difficulties: Vec<f64>, components: ComponentSpec, seed: u64) -> Self {
        Self { difficulties, components, min_steps: 4, max_steps: 8, tokens_per_step: 8, vocab_size: 8, seed }
    }
}

const FILLER: &[&str] = &[
    "so", " we", " have", " x", " =", " 3", " +", " y", " then", " (", "2", ")", " \\frac", " the", " value", " is",
    ",", " 7", " hence", " *",
];

/// Builds a reproducible bimodal scenario.
///
/// Each step draws a hardness label; both generators' token confidences for
/// that step come from the labelled component. The small generator's output
/// on an unconfident step is invalid (and states a wrong answer when it is
/// the final step); the large generator is always valid.
pub fn synth_scenario(spec: &SynthSpec) -> Result<ScriptedScenario, GeneratorError> {
    let c = spec.components;
    let invalid = |m: &str| Err(GeneratorError::InvalidScenario(m.to_string()));
    if !(c.mean_u < c.mean_c) {
        return invalid("mean_u must be below mean_c");
    }
    if !(c.sd_u > 0.0 && c.sd_c > 0.0) || !c.mean_u.is_finite() || !c.mean_c.is_finite() {
        return invalid("component standard deviations must be positive and means finite");
    }
    if spec.difficulties.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return invalid("difficulties must lie in [0, 1]");
    }
    if spec.difficulties.is_empty() {
        return invalid("no questions");
    }
    if spec.min_steps == 0 || spec.min_steps > spec.max_steps {
        return invalid("need 1 <= min_steps <= max_steps");
    }
    if spec.tokens_per_step == 0 || spec.vocab_size < 2 {
        return invalid("need tokens_per_step >= 1 and vocab_size >= 2");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let confident = Normal::new(c.mean_c, c.sd_c).expect("checked sd");
    let unconfident = Normal::new(c.mean_u, c.sd_u).expect("checked sd");
    let margin = Normal::new(0.0, 1.0).expect("unit normal");

    let token = |rng: &mut ChaCha8Rng, text: &str, label: Component| {
        let (dist, spread) = match label {
            Component::Confident => (&confident, 2.5),
            Component::Unconfident => (&unconfident, 0.8),
        };
        let top: f64 = dist.sample(rng);
        let mut logits = Vec::with_capacity(spec.vocab_size);
        logits.push(top);
        for _ in 1..spec.vocab_size {
            let m: f64 = margin.sample(rng);
            logits.push(top - 0.05 - spread * m.abs());
        }
        logits.shuffle(rng);
        ScriptToken::from_logits(text, logits)
    };

    let mut questions = Vec::with_capacity(spec.difficulties.len());
    for (qi, &difficulty) in spec.difficulties.iter().enumerate() {
        let n_steps = rng.gen_range(spec.min_steps..=spec.max_steps);
        let gold: u32 = rng.gen_range(10..1000);
        let mut steps = Vec::with_capacity(n_steps);
        for si in 0..n_steps {
            let label = if rng.gen::<f64>() < difficulty { Component::Unconfident } else { Component::Confident };
            let last = si + 1 == n_steps;
            let variant = |rng: &mut ChaCha8Rng, valid: bool| {
                let texts: Vec<String> = if last {
                    let answer = if valid { gold } else { gold + 1 };
                    ["The", " answer", " is", " ", &answer.to_string(), "."].iter().map(|s| s.to_string()).collect()
                } else {
                    (0..spec.tokens_per_step).map(|_| FILLER.choose(rng).expect("non-empty").to_string()).collect()
                };
                let tokens: Vec<ScriptToken> = texts.iter().map(|t| token(rng, t, label)).collect();
                StepVariant { text: texts.concat(), tokens, emit_eos: last, valid }
            };
            let small = variant(&mut rng, label == Component::Confident);
            let large = variant(&mut rng, true);
            steps.push(ScriptStep { label: Some(label), small, large: Some(large) });
        }
        questions.push(ScriptQuestion {
            id: format!("q{qi:04}"),
            prompt: format!("Question {qi}: work out the value step by step."),
            difficulty,
            gold_answer: gold.to_string(),
            steps,
        });
    }

    let scenario = ScriptedScenario { schema_version: SCENARIO_SCHEMA_VERSION, questions };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn components() -> ComponentSpec {
        ComponentSpec { mean_u: 2.0, mean_c: 10.0, sd_u: 1.0, sd_c: 1.0 }
    }

    fn labels(s: &ScriptedScenario) -> Vec<Component> {
        s.questions.iter().flat_map(|q| q.steps.iter().map(|st| st.label.unwrap())).collect()
    }

    #[test]
    fn easy_profile_is_all_confident() {
        let s = synth_scenario(&SynthSpec::new(vec![0.0; 20], components(), 1)).unwrap();
        assert!(labels(&s).iter().all(|l| *l == Component::Confident));
        assert!(s.questions.iter().all(|q| q.steps.iter().all(|st| st.small.valid)));
    }

    #[test]
    fn hard_profile_is_all_unconfident() {
        let s = synth_scenario(&SynthSpec::new(vec![1.0; 20], components(), 1)).unwrap();
        assert!(labels(&s).iter().all(|l| *l == Component::Unconfident));
        assert!(s.questions.iter().all(|q| q.steps.iter().all(|st| !st.small.valid)));
    }

    #[test]
    fn seeded_synthesis_is_reproducible() {
        let spec = SynthSpec::new(vec![0.1, 0.5, 0.9, 0.3, 0.7], components(), 42);
        let a = synth_scenario(&spec).unwrap();
        let b = synth_scenario(&spec).unwrap();
        assert_eq!(labels(&a), labels(&b));
        assert_eq!(a.to_json(), b.to_json());
        let c = synth_scenario(&SynthSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn json_round_trip_preserves_scenario() {
        let s = synth_scenario(&SynthSpec::new(vec![0.5; 3], components(), 9)).unwrap();
        assert_eq!(ScriptedScenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = ComponentSpec { mean_u: 10.0, mean_c: 2.0, sd_u: 1.0, sd_c: 1.0 };
        assert!(synth_scenario(&SynthSpec::new(vec![0.5], bad, 0)).is_err());
        assert!(synth_scenario(&SynthSpec::new(vec![1.5], components(), 0)).is_err());
        assert!(synth_scenario(&SynthSpec::new(vec![], components(), 0)).is_err());
    }

    #[test]
    fn rejects_bad_files() {
        let mut s = synth_scenario(&SynthSpec::new(vec![0.5; 2], components(), 9)).unwrap();
        s.schema_version = 2;
        assert!(ScriptedScenario::from_json(&s.to_json()).is_err());

        let mut s = synth_scenario(&SynthSpec::new(vec![0.5; 2], components(), 9)).unwrap();
        s.questions[0].steps[0].small.text = "a\n\nb".into();
        assert!(s.validate().is_err());

        let unknown = r#"{"schema_version":1,"questions":[],"extra":1}"#;
        assert!(ScriptedScenario::from_json(unknown).is_err());

        let tok = ScriptToken { text: "x".into(), logits: Some(vec![1.0]), max_logit: Some(1.0), max_prob: None, entropy: None };
        assert!(tok.observation().is_err());
    }
}
