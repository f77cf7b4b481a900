//! Routing rules that map step confidences to a generator choice.

use crate::mixture::{posterior_confident, MixtureError, MixtureParams};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Small,
    Large,
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelChoice::Small => f.pad("small"),
            ModelChoice::Large => f.pad("large"),
        }
    }
}

/// How traces are assigned to generators at each step barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoutingPolicy {
    /// Keep a trace on the small generator while the posterior of its last
    /// step confidence is at least `gamma`.
    PosteriorThreshold { gamma: f64 },
    /// Send traces whose confidence falls strictly below the `p`-th
    /// percentile of the batch to the large generator.
    Percentile { p: f64 },
    AlwaysSmall,
    AlwaysLarge,
}

impl RoutingPolicy {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            RoutingPolicy::PosteriorThreshold { gamma } if !(0.0..=1.0).contains(&gamma) => {
                Err(format!("gamma must lie in [0, 1], got {gamma}"))
            }
            RoutingPolicy::Percentile { p } if !(0.0..=100.0).contains(&p) => {
                Err(format!("percentile must lie in [0, 100], got {p}"))
            }
            _ => Ok(()),
        }
    }
}

/// Threshold rule: small iff `posterior >= gamma`.
pub fn decide(posterior: f64, gamma: f64) -> ModelChoice {
    if posterior >= gamma {
        ModelChoice::Small
    } else {
        ModelChoice::Large
    }
}

/// Traces split by assigned generator, each side in input order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition<Id> {
    pub small: Vec<Id>,
    pub large: Vec<Id>,
}

impl<Id> Partition<Id> {
    fn push(&mut self, id: Id, choice: ModelChoice) {
        match choice {
            ModelChoice::Small => self.small.push(id),
            ModelChoice::Large => self.large.push(id),
        }
    }
}

/// Applies the threshold rule to every `(id, phi)` pair independently.
pub fn classify_batch<Id: Clone>(
    confidences: &[(Id, f64)],
    params: &MixtureParams,
    gamma: f64,
) -> Result<Partition<Id>, MixtureError> {
    params.validate()?;
    let mut out = Partition { small: Vec::new(), large: Vec::new() };
    for (id, phi) in confidences {
        out.push(id.clone(), decide(posterior_confident(*phi, params)?, gamma));
    }
    Ok(out)
}

/// Confidence value below which items are routed large at percentile `p`.
///
/// With `k = ceil(p * n / 100)` the cutoff is the `(k + 1)`-th smallest
/// value (clamped to the largest), so `k` distinct values fall strictly
/// below it. Returns `None` for an empty batch.
pub fn percentile_cutoff(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = (p * n as f64 / 100.0).ceil().max(0.0) as usize;
    Some(sorted[k.min(n - 1)])
}

/// Routes items strictly below the `p`-th percentile cutoff to large; ties
/// with the cutoff stay small.
pub fn percentile_route<Id: Clone>(confidences: &[(Id, f64)], p: f64) -> Partition<Id> {
    let values: Vec<f64> = confidences.iter().map(|(_, v)| *v).collect();
    let mut out = Partition { small: Vec::new(), large: Vec::new() };
    let Some(cutoff) = percentile_cutoff(&values, p) else {
        return out;
    };
    for (id, phi) in confidences {
        let choice = if *phi < cutoff { ModelChoice::Large } else { ModelChoice::Small };
        out.push(id.clone(), choice);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_boundary_is_inclusive() {
        assert_eq!(decide(0.7, 0.5), ModelChoice::Small);
        assert_eq!(decide(0.5, 0.5), ModelChoice::Small);
        assert_eq!(decide(0.49, 0.5), ModelChoice::Large);
        assert_eq!(decide(0.0, 0.0), ModelChoice::Small);
        assert_eq!(decide(1.0, 1.0), ModelChoice::Small);
    }

    fn params() -> MixtureParams {
        MixtureParams {
            weight_c: 0.6,
            weight_u: 0.4,
            mean_c: 8.0,
            mean_u: 2.0,
            var_c: 1.0,
            var_u: 1.0,
        }
    }

    #[test]
    fn gamma_zero_routes_everything_small() {
        let batch: Vec<_> = (0..20).map(|i| (i, i as f64 - 5.0)).collect();
        let part = classify_batch(&batch, &params(), 0.0).unwrap();
        assert!(part.large.is_empty());
        assert_eq!(part.small.len(), 20);
    }

    #[test]
    fn confident_batch_has_no_large() {
        let batch = vec![("a", 9.0), ("b", 8.5), ("c", 12.0)];
        let part = classify_batch(&batch, &params(), 0.5).unwrap();
        assert!(part.large.is_empty());
    }

    #[test]
    fn classify_matches_elementwise_decide() {
        let batch: Vec<_> = (0..40).map(|i| (i, i as f64 * 0.25)).collect();
        let part = classify_batch(&batch, &params(), 0.3).unwrap();
        for (id, phi) in &batch {
            let expected = decide(posterior_confident(*phi, &params()).unwrap(), 0.3);
            let got = if part.small.contains(id) { ModelChoice::Small } else { ModelChoice::Large };
            assert_eq!(expected, got, "trace {id}");
        }
        assert_eq!(part.small.len() + part.large.len(), batch.len());
    }

    #[test]
    fn percentile_edge_cases() {
        let distinct: Vec<_> = (0..10).map(|i| (i, [3.0, 9.0, 1.0, 7.0, 5.0, 2.0, 8.0, 0.0, 6.0, 4.0][i])).collect();
        assert!(percentile_route(&distinct, 0.0).large.is_empty());
        let half = percentile_route(&distinct, 50.0);
        let mut lows = half.large.clone();
        lows.sort();
        // values 0..=4 sit at indices 7, 2, 5, 0, 9
        assert_eq!(lows, vec![0, 2, 5, 7, 9]);

        let ties: Vec<_> = (0..7).map(|i| (i, 1.25)).collect();
        for p in [0.0, 10.0, 50.0, 99.0, 100.0] {
            assert!(percentile_route(&ties, p).large.is_empty());
        }
        assert!(percentile_route::<usize>(&[], 50.0).large.is_empty());
    }

    #[test]
    fn policy_validation() {
        assert!(RoutingPolicy::PosteriorThreshold { gamma: 1.5 }.validate().is_err());
        assert!(RoutingPolicy::Percentile { p: -1.0 }.validate().is_err());
        assert!(RoutingPolicy::PosteriorThreshold { gamma: 1.0 }.validate().is_ok());
    }

    proptest! {
        #[test]
        fn decide_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, gamma in 0.0f64..=1.0) {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            if decide(lo, gamma) == ModelChoice::Small {
                prop_assert_eq!(decide(hi, gamma), ModelChoice::Small);
            }
        }

        #[test]
        fn percentile_size_bounds(values in prop::collection::vec(-20.0f64..20.0, 1..60), p in 0.0f64..=100.0, q in 0.0f64..=100.0) {
            let batch: Vec<_> = values.iter().copied().enumerate().collect();
            let n = batch.len();
            let (p_lo, p_hi) = if p <= q { (p, q) } else { (q, p) };
            let lo = percentile_route(&batch, p_lo).large.len();
            let hi = percentile_route(&batch, p_hi).large.len();
            prop_assert!(lo <= hi);
            prop_assert!(hi as f64 <= (p_hi * n as f64 / 100.0).ceil());
        }

        #[test]
        fn percentile_shift_invariant(values in prop::collection::vec(-20.0f64..20.0, 1..60), p in 0.0f64..=100.0, c in -5.0f64..5.0) {
            // Integer grid keeps the shift exact in floating point.
            let grid: Vec<f64> = values.iter().map(|v| v.round()).collect();
            let batch: Vec<_> = grid.iter().copied().enumerate().collect();
            let shifted: Vec<_> = grid.iter().map(|v| v + c.round()).enumerate().collect();
            prop_assert_eq!(percentile_route(&batch, p), percentile_route(&shifted, p));
        }

        #[test]
        fn classify_order_invariant(values in prop::collection::vec(-5.0f64..15.0, 1..40), gamma in 0.0f64..=1.0) {
            let batch: Vec<_> = values.iter().copied().enumerate().collect();
            let mut reversed = batch.clone();
            reversed.reverse();
            let a = classify_batch(&batch, &params(), gamma).unwrap();
            let b = classify_batch(&reversed, &params(), gamma).unwrap();
            let mut a_large = a.large.clone();
            let mut b_large = b.large.clone();
            a_large.sort();
            b_large.sort();
            prop_assert_eq!(a_large, b_large);
        }
    }
}
