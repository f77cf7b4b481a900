// A threshold sweep through the config-driven runner: writes a scenario and
// a TOML config, runs sweep mode, and prints the frontier table. Pass a
// directory to keep the artifacts; otherwise a temporary one is used.

use steer_core::cli::{run, validate_config};
use steer_core::engine::Clock;
use steer_core::generators::{synth_scenario, ComponentSpec, SynthSpec};
use std::error::Error;
use std::path::{Path, PathBuf};

const CONFIG: &str = r#"
mode = "sweep"
output_dir = "out"
input.scenario = "scenario.json"

engine.seed = 1
engine.max_steps = 32

generators.small.name = "small-1b"
generators.small.param_count = 1_000_000_000
generators.large.name = "large-8b"
generators.large.param_count = 8_000_000_000

sweep.grid = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
"#;

fn temp_dir() -> PathBuf {
    std::env::temp_dir().join(format!("steer-gamma-sweep-{}", std::process::id()))
}

fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = temp_dir();
    run_in(&dir)?;
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn run_in(dir: &Path) -> Result<(), Box<dyn Error>> {
    std::fs::create_dir_all(dir)?;

    let difficulties: Vec<f64> = (0..90).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let components = ComponentSpec { mean_u: 2.0, mean_c: 6.0, sd_u: 1.0, sd_c: 1.0 };
    let scenario = synth_scenario(&SynthSpec::new(difficulties, components, 99))?;
    std::fs::write(dir.join("scenario.json"), scenario.to_json())?;
    std::fs::write(dir.join("steer.toml"), CONFIG)?;

    let (config, diagnostics) = validate_config(&dir.join("steer.toml"))?;
    println!("{} defaults applied, e.g. {}", diagnostics.len(), diagnostics[0]);
    run(&config, Clock::System)?;
    let table = std::fs::read_to_string(config.output_dir.join("frontier.txt"))?;
    // Skip the two header lines carrying version and config.
    for line in table.lines().skip(2) {
        println!("{line}");
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    // Pass a directory to keep the artifacts; otherwise they are removed.
    match std::env::args().nth(1) {
        Some(d) => {
            run_in(Path::new(&d))?;
            println!("artifacts in {d}/out");
            Ok(())
        }
        None => run_example(),
    }
}
