//! Recursive deployment: factor a large scale into ratios in `(1, 2]` and run
//! one upscale-and-refine pass per ratio.

use std::fmt;

use crate::error::{invalid, Result};
use crate::imaging::ImagePlanar;
use crate::lfr::{represent, LevelPredictor};

// Relative slack when comparing a scale against a power of two, so inputs
// like 4.0000000000000001 do not spawn a near-1.0 final step.
const POW2_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentPlan {
    pub target: f64,
    pub steps: Vec<f64>,
}

impl DeploymentPlan {
    /// A caller-supplied ratio list; every ratio must lie in `(1, 2]`.
    pub fn custom(steps: Vec<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(invalid!("a plan needs at least one step"));
        }
        for &r in &steps {
            if !(r > 1.0 && r <= 2.0) {
                return Err(invalid!("plan ratio {r} is outside (1, 2]"));
            }
        }
        Ok(Self {
            target: steps.iter().product(),
            steps,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn product(&self) -> f64 {
        self.steps.iter().product()
    }

    /// Output dimensions after chaining the per-step size rule.
    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        self.steps.iter().fold((h, w), |(h, w), &r| {
            (
                crate::resample::scaled_dim(h, r),
                crate::resample::scaled_dim(w, r),
            )
        })
    }
}

impl fmt::Display for DeploymentPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.steps.iter().map(|r| format!("{r:.3}")).collect();
        write!(f, "{}", parts.join(", "))
    }
}

fn check_target(target: f64) -> Result<()> {
    if !(target > 1.0) || !target.is_finite() {
        return Err(invalid!("target scale must be a finite value above 1, got {target}"));
    }
    Ok(())
}

/// Number of doublings needed to reach `target`.
fn recursion_count(target: f64) -> usize {
    let mut n = 1;
    let mut reach = 2.0;
    while reach < target * (1.0 - POW2_SLACK) {
        reach *= 2.0;
        n += 1;
    }
    n
}

/// Largest ratios first: `[2, 2, ..., target / 2^(N-1)]`.
pub fn plan(target: f64) -> Result<DeploymentPlan> {
    check_target(target)?;
    if target <= 2.0 {
        return Ok(DeploymentPlan {
            target,
            steps: vec![target],
        });
    }
    let n = recursion_count(target);
    let head = 2f64.powi(n as i32 - 1);
    let mut steps = vec![2.0; n - 1];
    steps.push((target / head).min(2.0));
    Ok(DeploymentPlan { target, steps })
}

/// `count` equal ratios of `target^(1/count)`.
pub fn plan_equal(target: f64, count: usize) -> Result<DeploymentPlan> {
    check_target(target)?;
    if count == 0 {
        return Err(invalid!("recursion count must be at least 1"));
    }
    let r = target.powf(1.0 / count as f64);
    if r > 2.0 * (1.0 + POW2_SLACK) {
        return Err(invalid!(
            "{count} equal steps of {r:.4} exceed the per-step limit of 2"
        ));
    }
    Ok(DeploymentPlan {
        target,
        steps: vec![r.min(2.0); count],
    })
}

/// Runs every step in order, each on the previous step's full precision
/// output. The result has the ceil-chained size of [`DeploymentPlan::output_dims`].
pub fn execute(
    plan: &DeploymentPlan,
    lr: &ImagePlanar,
    predictor: &dyn LevelPredictor,
) -> Result<ImagePlanar> {
    if plan.steps.is_empty() {
        return Err(invalid!("empty deployment plan"));
    }
    let mut current = represent(plan.steps[0], lr, predictor)?;
    for &r in &plan.steps[1..] {
        current = represent(r, &current, predictor)?;
    }
    Ok(current)
}
