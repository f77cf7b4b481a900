use super::{GeneratedStep, Generator, GeneratorError, GeneratorSpec, ScriptedScenario, StepRequest};
use crate::routing::ModelChoice;
use std::collections::HashMap;
use std::sync::Arc;

/// Replays a [`ScriptedScenario`] as one of the two generators.
///
/// Output depends only on the scenario, the role, the question id and the
/// step index, so replays are bit-exact.
#[derive(Debug, Clone)]
pub struct ScriptedGenerator {
    spec: GeneratorSpec,
    role: ModelChoice,
    scenario: Arc<ScriptedScenario>,
    index: HashMap<String, usize>,
}

impl ScriptedGenerator {
    pub fn new(spec: GeneratorSpec, role: ModelChoice, scenario: Arc<ScriptedScenario>) -> Result<Self, GeneratorError> {
        spec.validate()?;
        scenario.validate()?;
        for q in &scenario.questions {
            for step in &q.steps {
                if step.variant(role).text.contains(&spec.stop_sequence) {
                    return Err(GeneratorError::InvalidScenario(format!(
                        "{}: scripted text contains the stop sequence",
                        q.id
                    )));
                }
            }
        }
        let index = scenario.questions.iter().enumerate().map(|(i, q)| (q.id.clone(), i)).collect();
        Ok(Self { spec, role, scenario, index })
    }

    pub fn role(&self) -> ModelChoice {
        self.role
    }
}

impl Generator for ScriptedGenerator {
    fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    fn generate_step(&self, request: &StepRequest<'_>) -> Result<GeneratedStep, GeneratorError> {
        let &qi = self
            .index
            .get(request.question_id)
            .ok_or_else(|| GeneratorError::UnknownQuestion(request.question_id.to_string()))?;
        let question = &self.scenario.questions[qi];
        let step = question.steps.get(request.step_index).ok_or_else(|| GeneratorError::ScriptExhausted {
            question: question.id.clone(),
            step: request.step_index,
        })?;
        let variant = step.variant(self.role);
        let tokens = variant
            .tokens
            .iter()
            .take(self.spec.max_tokens_per_step)
            .map(|t| t.observation())
            .collect::<Result<Vec<_>, _>>()?;
        let truncated = tokens.len() < variant.tokens.len();
        let text = if truncated { tokens.iter().map(|t| t.text.as_str()).collect() } else { variant.text.clone() };
        Ok(GeneratedStep {
            text,
            completion_tokens: tokens.len() as u64,
            tokens,
            eos: variant.emit_eos && !truncated,
            prompt_tokens: request.prompt.split_whitespace().count() as u64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{ScriptQuestion, ScriptStep, ScriptToken, StepVariant, SCENARIO_SCHEMA_VERSION};

    fn variant(text: &str, phis: &[f64], eos: bool) -> StepVariant {
        StepVariant {
            text: text.into(),
            tokens: phis.iter().enumerate().map(|(i, p)| ScriptToken::scalar(format!("t{i}"), *p)).collect(),
            emit_eos: eos,
            valid: true,
        }
    }

    fn scenario() -> Arc<ScriptedScenario> {
        let steps = vec![
            ScriptStep { label: None, small: variant("first", &[1.0], false), large: Some(variant("FIRST", &[9.0], false)) },
            ScriptStep { label: None, small: variant("second", &[2.0], false), large: None },
            ScriptStep { label: None, small: variant("so x=4", &[5.1, 6.0, 4.2], true), large: None },
        ];
        Arc::new(ScriptedScenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            questions: vec![ScriptQuestion {
                id: "q".into(),
                prompt: "p".into(),
                difficulty: 0.0,
                gold_answer: "4".into(),
                steps,
            }],
        })
    }

    fn request(step: usize) -> StepRequest<'static> {
        StepRequest { question_id: "q", step_index: step, prompt: "p\n\n" }
    }

    #[test]
    fn replays_scripted_step() {
        let g = ScriptedGenerator::new(GeneratorSpec::scripted("s", 1), ModelChoice::Small, scenario()).unwrap();
        let out = g.generate_step(&request(2)).unwrap();
        assert_eq!(out.text, "so x=4");
        let phis: Vec<f64> = out.tokens.iter().map(|t| t.max_logit).collect();
        assert_eq!(phis, vec![5.1, 6.0, 4.2]);
        assert!(out.eos);
        assert_eq!(out.completion_tokens, 3);
    }

    #[test]
    fn large_role_uses_large_variant_or_falls_back() {
        let g = ScriptedGenerator::new(GeneratorSpec::scripted("l", 1), ModelChoice::Large, scenario()).unwrap();
        assert_eq!(g.generate_step(&request(0)).unwrap().text, "FIRST");
        assert_eq!(g.generate_step(&request(1)).unwrap().text, "second");
    }

    #[test]
    fn exhausted_script_and_unknown_question() {
        let g = ScriptedGenerator::new(GeneratorSpec::scripted("s", 1), ModelChoice::Small, scenario()).unwrap();
        assert!(matches!(g.generate_step(&request(3)), Err(GeneratorError::ScriptExhausted { step: 3, .. })));
        let r = StepRequest { question_id: "nope", step_index: 0, prompt: "p" };
        assert!(matches!(g.generate_step(&r), Err(GeneratorError::UnknownQuestion(_))));
    }

    #[test]
    fn max_tokens_truncates_and_suppresses_eos() {
        let mut spec = GeneratorSpec::scripted("s", 1);
        spec.max_tokens_per_step = 2;
        let g = ScriptedGenerator::new(spec, ModelChoice::Small, scenario()).unwrap();
        let out = g.generate_step(&request(2)).unwrap();
        assert_eq!(out.tokens.len(), 2);
        assert_eq!(out.text, "t0t1");
        assert!(!out.eos);
    }

    #[test]
    fn replay_is_deterministic() {
        let g = ScriptedGenerator::new(GeneratorSpec::scripted("s", 1), ModelChoice::Small, scenario()).unwrap();
        assert_eq!(g.generate_step(&request(1)).unwrap(), g.generate_step(&request(1)).unwrap());
    }
}
