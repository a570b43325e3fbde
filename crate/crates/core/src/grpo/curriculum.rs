//! Orderings of the training stream by case hardness.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ExecutionCase;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    NoSelection,
    TwoStage,
    HardToEasy,
    #[default]
    EasyToHard,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::NoSelection,
        Strategy::TwoStage,
        Strategy::HardToEasy,
        Strategy::EasyToHard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::NoSelection => "no_selection",
            Strategy::TwoStage => "two_stage",
            Strategy::HardToEasy => "hard_to_easy",
            Strategy::EasyToHard => "easy_to_hard",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// Permutation of `0..hardness.len()` giving the training order.
///
/// Sorted orders are stable, so equal hardness keeps input order.
pub fn schedule_order(hardness: &[f64], strategy: Strategy, seed: u64, threshold: f64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..hardness.len()).collect();
    match strategy {
        Strategy::NoSelection => order.shuffle(&mut rng),
        Strategy::EasyToHard => order.sort_by(|&a, &b| hardness[a].total_cmp(&hardness[b])),
        Strategy::HardToEasy => order.sort_by(|&a, &b| hardness[b].total_cmp(&hardness[a])),
        Strategy::TwoStage => {
            let (mut easy, mut hard): (Vec<usize>, Vec<usize>) =
                order.into_iter().partition(|&i| hardness[i] <= threshold);
            easy.shuffle(&mut rng);
            hard.shuffle(&mut rng);
            easy.extend(hard);
            order = easy;
        }
    }
    order
}

/// Profiled cases reordered for training.
pub fn schedule_cases(
    cases: &[ExecutionCase],
    strategy: Strategy,
    seed: u64,
    threshold: f64,
) -> Result<Vec<ExecutionCase>> {
    let hardness = cases
        .iter()
        .map(ExecutionCase::hardness)
        .collect::<Result<Vec<_>>>()?;
    Ok(schedule_order(&hardness, strategy, seed, threshold)
        .into_iter()
        .map(|i| cases[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest};

    fn ordered(h: &[f64], s: Strategy) -> Vec<f64> {
        schedule_order(h, s, 3, 0.5).into_iter().map(|i| h[i]).collect()
    }

    #[test]
    fn sorted_strategies() {
        let h = [0.9, 0.1, 0.5];
        assert_eq!(ordered(&h, Strategy::EasyToHard), vec![0.1, 0.5, 0.9]);
        assert_eq!(ordered(&h, Strategy::HardToEasy), vec![0.9, 0.5, 0.1]);
    }

    #[test]
    fn shuffles_are_seeded() {
        let h: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let a = schedule_order(&h, Strategy::NoSelection, 7, 0.5);
        assert_eq!(a, schedule_order(&h, Strategy::NoSelection, 7, 0.5));
        assert_ne!(a, schedule_order(&h, Strategy::NoSelection, 8, 0.5));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn no_selection_golden_permutation() {
        let h = [0.0; 8];
        assert_eq!(schedule_order(&h, Strategy::NoSelection, 42, 0.5), vec![7, 1, 5, 4, 6, 0, 3, 2]);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
        }
        assert!("random".parse::<Strategy>().is_err());
    }

    proptest! {
        #[test]
        fn easy_to_hard_is_non_decreasing(h in prop::collection::vec(0.0..=1.0f64, 0..40)) {
            let o = ordered(&h, Strategy::EasyToHard);
            prop_assert!(o.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn two_stage_puts_easy_first(h in prop::collection::vec(0.0..=1.0f64, 0..40), seed in any::<u64>()) {
            let o: Vec<f64> = schedule_order(&h, Strategy::TwoStage, seed, 0.5).into_iter().map(|i| h[i]).collect();
            let first_hard = o.iter().position(|&x| x > 0.5).unwrap_or(o.len());
            prop_assert!(o[first_hard..].iter().all(|&x| x > 0.5));
            prop_assert_eq!(o.len(), h.len());
        }
    }
}
