// Token confidences from raw logits and their aggregation into step
// confidences under each metric.

use steer_core::confidence::{aggregate_step, is_math_token, token_confidence, Aggregation, ConfidenceMetric};
use std::error::Error;

fn run_example() -> Result<(), Box<dyn Error>> {
    let step = [
        ("so", vec![4.1, 1.0, 0.3, -2.0]),
        (" x", vec![7.9, 2.2, 2.1, 0.0]),
        (" =", vec![9.5, 1.3, -1.0, 0.4]),
        (" 12", vec![3.0, 2.9, 2.8, 2.7]),
    ];
    let tokens = step
        .iter()
        .map(|(text, logits)| token_confidence(*text, logits))
        .collect::<Result<Vec<_>, _>>()?;

    println!("{:<6}{:>10}{:>10}{:>10}{:>6}", "token", "max_logit", "max_prob", "entropy", "math");
    for t in &tokens {
        println!(
            "{:<6}{:>10.3}{:>10.3}{:>10.3}{:>6}",
            format!("{:?}", t.text),
            t.max_logit,
            t.max_prob.unwrap_or(f64::NAN),
            t.entropy.unwrap_or(f64::NAN),
            is_math_token(&t.text)
        );
    }

    for metric in [ConfidenceMetric::MaxLogit, ConfidenceMetric::MaxProb, ConfidenceMetric::Entropy] {
        let all = aggregate_step(&tokens, metric, Aggregation::AllTokensMean)?;
        let math = aggregate_step(&tokens, metric, Aggregation::MathTokensMean)?;
        println!("{metric:<10} all tokens {:>8.4}   math tokens {:>8.4}", all.value, math.value);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
