// Fitting the two-component mixture to pooled step confidences and reading
// off the confident-component posterior.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use steer_core::mixture::{fit_em, posterior_confident, EmConfig};
use steer_core::routing::decide;
use std::error::Error;

fn run_example() -> Result<(), Box<dyn Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let low = Normal::new(3.0, 0.6)?;
    let high = Normal::new(7.5, 0.8)?;
    let mut phis: Vec<f64> = (0..40).map(|_| low.sample(&mut rng)).collect();
    phis.extend((0..160).map(|_| high.sample(&mut rng)));

    let fit = fit_em(&phis, &EmConfig::default())?;
    let p = fit.params;
    println!(
        "converged={} after {} iterations, log-likelihood {:.3}",
        fit.converged,
        fit.iterations,
        fit.log_likelihood()
    );
    println!("unconfident: weight {:.3} mean {:.3} var {:.3}", p.weight_u, p.mean_u, p.var_u);
    println!("confident:   weight {:.3} mean {:.3} var {:.3}", p.weight_c, p.mean_c, p.var_c);

    println!("{:>6}{:>12}{:>10}", "phi", "Pr(c|phi)", "gamma=.5");
    for phi in [2.0, 4.0, 5.0, 5.5, 6.0, 8.0, 60.0] {
        let post = posterior_confident(phi, &p)?;
        println!("{phi:>6.1}{post:>12.6}{:>10}", decide(post, 0.5));
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
