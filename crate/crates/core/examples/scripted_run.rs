// End-to-end routed run over a synthetic bimodal scenario, compared with
// both fixed-model baselines.

use steer_core::engine::{run_steer, Clock, EngineConfig, EventLog, Question, RunOutcome};
use steer_core::generators::{synth_scenario, ComponentSpec, GeneratorSpec, ScriptedGenerator, SynthSpec};
use steer_core::routing::{ModelChoice, RoutingPolicy};
use std::error::Error;
use std::sync::Arc;

fn run_example() -> Result<(), Box<dyn Error>> {
    // A third of the questions are hard on every step.
    let difficulties: Vec<f64> = (0..60).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let components = ComponentSpec { mean_u: 2.0, mean_c: 6.0, sd_u: 1.0, sd_c: 1.0 };
    let scenario = Arc::new(synth_scenario(&SynthSpec::new(difficulties, components, 7))?);
    let questions: Vec<Question> = scenario.questions.iter().map(|q| Question::new(&q.id, &q.prompt)).collect();

    let small = ScriptedGenerator::new(GeneratorSpec::scripted("small-1b", 1_000_000_000), ModelChoice::Small, scenario.clone())?;
    let large = ScriptedGenerator::new(GeneratorSpec::scripted("large-8b", 8_000_000_000), ModelChoice::Large, scenario.clone())?;

    let run = |policy: RoutingPolicy| -> Result<RunOutcome, Box<dyn Error>> {
        let config = EngineConfig::default().with_policy(policy);
        let mut log = EventLog::new(Clock::Fixed(0));
        let mut outcome = run_steer(&questions, &small, &large, &config, &mut log)?;
        for t in &outcome.traces {
            if let Some(ok) = scenario.grade(t) {
                outcome.ledger.set_correct(&t.question_id, ok);
            }
        }
        Ok(outcome)
    };

    println!("{:<16}{:>10}{:>12}{:>10}{:>8}", "policy", "accuracy", "FLOPs e12", "A/F", "large");
    for (name, policy) in [
        ("always_small", RoutingPolicy::AlwaysSmall),
        ("always_large", RoutingPolicy::AlwaysLarge),
        ("steer 0.5", RoutingPolicy::PosteriorThreshold { gamma: 0.5 }),
    ] {
        let outcome = run(policy)?;
        let s = outcome.ledger.summary();
        println!(
            "{:<16}{:>10.1}{:>12.4}{:>10.2}{:>8.3}",
            name,
            s.accuracy.unwrap_or(0.0),
            s.avg_flops,
            s.a_per_f.unwrap_or(0.0),
            outcome.large_step_fraction()
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
