// Writing the event log as JSONL, reading it back, and re-deriving every
// routing decision from it.

use steer_core::engine::{audit_routing, parse_jsonl, run_steer, to_jsonl, Clock, EngineConfig, EventKind, EventLog, Question};
use steer_core::generators::{synth_scenario, ComponentSpec, GeneratorSpec, ScriptedGenerator, SynthSpec};
use steer_core::routing::ModelChoice;
use std::error::Error;
use std::sync::Arc;

fn run_example() -> Result<(), Box<dyn Error>> {
    let difficulties: Vec<f64> = (0..30).map(|i| (i % 3) as f64 / 2.0).collect();
    let components = ComponentSpec { mean_u: 2.0, mean_c: 6.0, sd_u: 1.0, sd_c: 1.0 };
    let scenario = Arc::new(synth_scenario(&SynthSpec::new(difficulties, components, 23))?);
    let questions: Vec<Question> = scenario.questions.iter().map(|q| Question::new(&q.id, &q.prompt)).collect();
    let small = ScriptedGenerator::new(GeneratorSpec::scripted("small", 1_000_000_000), ModelChoice::Small, scenario.clone())?;
    let large = ScriptedGenerator::new(GeneratorSpec::scripted("large", 8_000_000_000), ModelChoice::Large, scenario.clone())?;

    let mut log = EventLog::new(Clock::Fixed(0));
    run_steer(&questions, &small, &large, &EngineConfig { group_count: 2, ..EngineConfig::default() }, &mut log)?;
    let jsonl = to_jsonl(log.records());
    println!("{} events, {} bytes of JSONL", log.records().len(), jsonl.len());
    for line in jsonl.lines().filter(|l| l.contains("fit_computed")).take(2) {
        println!("{line}");
    }

    let replayed = parse_jsonl(&jsonl)?;
    let report = audit_routing(&replayed);
    let routes = replayed.iter().filter(|e| e.event == EventKind::RouteDecided).count();
    println!(
        "audited {} decisions ({routes} logged) over {} steps: {} discrepancies",
        report.decisions_checked,
        report.steps_checked,
        report.discrepancies.len()
    );
    if !report.is_clean() {
        return Err(report.discrepancies.join("\n").into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
