// Percentile routing: send the least confident p% of each barrier's traces
// to the large generator, for p from 10 to 90.

use steer_core::engine::{run_steer, Clock, EngineConfig, EventLog, Question};
use steer_core::generators::{synth_scenario, ComponentSpec, GeneratorSpec, ScriptedGenerator, SynthSpec};
use steer_core::routing::{ModelChoice, RoutingPolicy};
use std::error::Error;
use std::sync::Arc;

fn run_example() -> Result<(), Box<dyn Error>> {
    let difficulties: Vec<f64> = (0..40).map(|i| (i % 5) as f64 / 4.0).collect();
    let components = ComponentSpec { mean_u: 2.0, mean_c: 6.0, sd_u: 1.0, sd_c: 1.0 };
    let scenario = Arc::new(synth_scenario(&SynthSpec::new(difficulties, components, 11))?);
    let questions: Vec<Question> = scenario.questions.iter().map(|q| Question::new(&q.id, &q.prompt)).collect();
    let small = ScriptedGenerator::new(GeneratorSpec::scripted("small", 1_000_000_000), ModelChoice::Small, scenario.clone())?;
    let large = ScriptedGenerator::new(GeneratorSpec::scripted("large", 8_000_000_000), ModelChoice::Large, scenario.clone())?;

    println!("{:>4}{:>10}{:>12}{:>10}", "p", "large", "FLOPs e12", "accuracy");
    for p in (10..=90).step_by(10) {
        let config = EngineConfig::default().with_policy(RoutingPolicy::Percentile { p: p as f64 });
        let mut outcome = run_steer(&questions, &small, &large, &config, &mut EventLog::new(Clock::Fixed(0)))?;
        for t in &outcome.traces {
            outcome.ledger.set_correct(&t.question_id, scenario.grade(t) == Some(true));
        }
        let s = outcome.ledger.summary();
        println!(
            "{p:>4}{:>10.3}{:>12.4}{:>10.1}",
            outcome.large_step_fraction(),
            s.avg_flops,
            s.accuracy.unwrap_or(0.0)
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
