use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{GoalSpec, ParamRegion};
use crate::trace::{TABLE_DEPTH, TABLE_HALF_WIDTH};

/// The three self-improvement tasks: far right, top edge and left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn objective_text(self) -> &'static str {
        match self {
            Scenario::S1 => "Hit the ball to the far right!",
            Scenario::S2 => "Hit the ball to the top edge!",
            Scenario::S3 => "Hit the ball to the left corner!",
        }
    }

    /// Landing point the distance is measured to.
    pub fn goal(self) -> GoalSpec {
        match self {
            Scenario::S1 => GoalSpec::point(TABLE_HALF_WIDTH, TABLE_DEPTH / 2.0),
            Scenario::S2 => GoalSpec::point(0.0, TABLE_DEPTH),
            Scenario::S3 => GoalSpec::point(-TABLE_HALF_WIDTH, TABLE_DEPTH),
        }
    }

    /// Where the initial examples are drawn from.
    pub fn seed_region(self) -> ParamRegion {
        match self {
            Scenario::S1 => ParamRegion::left_biased(),
            Scenario::S2 | Scenario::S3 => ParamRegion::lower_half(),
        }
    }

    pub fn from_text(text: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.objective_text() == text.trim())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown scenario '{s}' (expected S1, S2 or S3)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{distance_to_goal, seed_cache, EnvConfig};
    use crate::seed;

    #[test]
    fn initial_caches_start_far_from_goal() {
        let cfg = EnvConfig::sim_default();
        for s in Scenario::ALL {
            let c = seed_cache(&cfg, &s.seed_region(), 24, &mut seed::rng(0)).unwrap();
            let mean: f64 = c
                .traces()
                .iter()
                .map(|t| distance_to_goal(&t.landing, &s.goal()))
                .sum::<f64>()
                / 24.0;
            assert!(mean > 0.7, "{s}: {mean}");
            assert_eq!(Scenario::from_text(s.objective_text()), Some(s));
        }
    }
}
