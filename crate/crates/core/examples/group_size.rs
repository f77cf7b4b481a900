// Splitting the questions into K independent groups, each with its own
// per-step mixture fits, and comparing routing across K.

use steer_core::engine::{run_steer, Clock, EngineConfig, EventLog, Question};
use steer_core::generators::{synth_scenario, ComponentSpec, GeneratorSpec, ScriptedGenerator, SynthSpec};
use steer_core::routing::ModelChoice;
use std::error::Error;
use std::sync::Arc;

fn run_example() -> Result<(), Box<dyn Error>> {
    let difficulties: Vec<f64> = (0..200).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
    let components = ComponentSpec { mean_u: 2.0, mean_c: 6.0, sd_u: 1.0, sd_c: 1.0 };
    let scenario = Arc::new(synth_scenario(&SynthSpec::new(difficulties, components, 3))?);
    let questions: Vec<Question> = scenario.questions.iter().map(|q| Question::new(&q.id, &q.prompt)).collect();
    let small = ScriptedGenerator::new(GeneratorSpec::scripted("small", 1_000_000_000), ModelChoice::Small, scenario.clone())?;
    let large = ScriptedGenerator::new(GeneratorSpec::scripted("large", 8_000_000_000), ModelChoice::Large, scenario.clone())?;

    println!("{:>4}{:>12}{:>10}{:>14}", "K", "group size", "large", "total FLOPs");
    for k in [1, 2, 5, 10] {
        let config = EngineConfig { group_count: k, seed: 17, ..EngineConfig::default() };
        let outcome = run_steer(&questions, &small, &large, &config, &mut EventLog::new(Clock::Fixed(0)))?;
        println!(
            "{k:>4}{:>12}{:>10.4}{:>14.4}",
            questions.len() / k,
            outcome.large_step_fraction(),
            outcome.ledger.total_flops()
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
