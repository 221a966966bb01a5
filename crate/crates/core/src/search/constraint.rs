use serde::{Deserialize, Serialize};

/// Zeroes both objectives of policies that survive long while earning
/// little reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSpec {
    pub steps_threshold: f64,
    pub reward_threshold: f64,
    pub active: bool,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        ConstraintSpec {
            steps_threshold: 400.0,
            reward_threshold: 50.0,
            active: true,
        }
    }
}

/// `(0, 0)` iff `steps > steps_threshold` and `reward < reward_threshold`.
pub fn apply_fitness_constraint(reward: f64, steps: f64, spec: &ConstraintSpec) -> (f64, f64) {
    if spec.active && steps > spec.steps_threshold && reward < spec.reward_threshold {
        (0.0, 0.0)
    } else {
        (reward, steps)
    }
}
