// Driving the engine through the OpenAI-compatible completions client,
// against an in-process stub server that plays both models.

use serde_json::Value;
use steer_core::confidence::ScoreSource;
use steer_core::engine::{run_steer, Clock, EngineConfig, EventLog, Question};
use steer_core::generators::stub::{completion_body, StubReply, StubRequest, StubServer};
use steer_core::generators::{Generator, GeneratorSpec, HttpGenerator, StepRequest};
use std::error::Error;

const STEPS: usize = 4;

// Hard questions get lower-probability tokens from both models, the large
// one a little less so.
fn respond(req: &StubRequest) -> StubReply {
    if req.method == "GET" {
        return StubReply::json(serde_json::json!({ "object": "list", "data": [] }));
    }
    let body = req.json().unwrap_or(Value::Null);
    let prompt = body["prompt"].as_str().unwrap_or_default();
    let model = body["model"].as_str().unwrap_or_default();
    let step = prompt.matches("\n\n").count() - 1;
    let hard = prompt.contains("hard");
    let lp = match (model, hard) {
        ("large", true) => -1.0,
        ("large", false) => -0.02,
        (_, true) => -1.6,
        _ => -0.05,
    };
    if step + 1 == STEPS {
        let tokens = [("The", lp), (" answer", lp), (" is", lp), (" 42", lp)];
        StubReply::json(completion_body("The answer is 42", &tokens, "stop", None))
    } else {
        let text = format!("step {step} by {model}");
        let tokens = [("step", lp), (" n", lp), (" by", lp), (" m", lp)];
        StubReply::json(completion_body(&text, &tokens, "stop", Some("\n\n")))
    }
}

fn run_example() -> Result<(), Box<dyn Error>> {
    let server = StubServer::start(respond);
    let small = HttpGenerator::new(GeneratorSpec::http("small", 1_000_000_000, server.url()))?;
    let large = HttpGenerator::new(GeneratorSpec::http("large", 8_000_000_000, server.url()))?;
    small.preflight()?;
    large.preflight()?;

    let questions: Vec<Question> = (0..8)
        .map(|i| Question::new(format!("q{i}"), if i % 4 == 0 { "A hard one." } else { "An easy one." }))
        .collect();
    let config = EngineConfig { max_steps: 16, ..EngineConfig::default() };
    let mut log = EventLog::new(Clock::Fixed(0));
    let outcome = run_steer(&questions, &small, &large, &config, &mut log)?;

    for t in &outcome.traces {
        let models: Vec<String> = t.steps.iter().map(|s| s.model.to_string()).collect();
        println!("{} {:<14} {}", t.question_id, t.status.label(), models.join(","));
    }
    let probe = small.generate_step(&StepRequest { question_id: "probe", step_index: 0, prompt: "An easy one.\n\n" })?;
    assert!(probe.tokens.iter().all(|t| t.source == ScoreSource::LogprobsProxy));
    println!("first probe token: {:?} scored {:.3} (max logprob proxy)", probe.tokens[0].text, probe.tokens[0].max_logit);
    println!("{} completion requests served", server.requests().iter().filter(|r| r.method == "POST").count());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
