use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::rig::io::read_json;
use crate::rig::Level;

/// One optimization stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub level: Level,
    pub iterations: usize,
    pub step_size: f64,
    /// Per-iteration multiplicative step-size decay.
    #[serde(default = "one")]
    pub decay: f64,
    #[serde(default)]
    pub weights: LossWeights,
    /// Relative loss change over the convergence window that ends the
    /// stage early.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn one() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    1e-6
}

/// Ordered stages of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
}

impl Stage {
    pub fn new(level: Level, iterations: usize, step_size: f64, weights: LossWeights) -> Self {
        Stage {
            level,
            iterations,
            step_size,
            decay: 1.0,
            weights,
            tol: default_tol(),
        }
    }
}

impl Default for StagePlan {
    fn default() -> Self {
        StagePlan::three_stage()
    }
}

impl StagePlan {
    /// Rig, joint and vertex stages with regularizers strengthened at the
    /// vertex level.
    pub fn three_stage() -> Self {
        StagePlan {
            stages: vec![
                StagePlan::rig_stage(),
                Stage {
                    decay: 0.995,
                    ..Stage::new(Level::Joint, 300, 3e-3, LossWeights::default())
                },
                StagePlan::vertex_stage(),
            ],
        }
    }

    pub fn rig_only() -> Self {
        StagePlan {
            stages: vec![StagePlan::rig_stage()],
        }
    }

    /// The single-stage baseline: vertices only, same budget and weights as
    /// the last stage of the full plan.
    pub fn vertex_only() -> Self {
        StagePlan {
            stages: vec![StagePlan::vertex_stage()],
        }
    }

    fn rig_stage() -> Stage {
        Stage {
            decay: 0.99,
            ..Stage::new(Level::Rig, 300, 1e-2, LossWeights::default())
        }
    }

    fn vertex_stage() -> Stage {
        let w = LossWeights::default();
        Stage {
            decay: 0.99,
            ..Stage::new(
                Level::Vertex,
                500,
                3e-4,
                LossWeights {
                    gcc: 4.0 * w.gcc,
                    conformal: 4.0 * w.conformal,
                    flip: 4.0 * w.flip,
                    curve: 4.0 * w.curve,
                    ..w
                },
            )
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let plan: StagePlan = read_json(path.as_ref())?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid("plan has no stages"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.iterations == 0 {
                return Err(Error::invalid(format!("stage {i}: iterations must be at least 1")));
            }
            if !(s.step_size > 0.0 && s.step_size.is_finite()) {
                return Err(Error::invalid(format!("stage {i}: step size must be positive")));
            }
            if !(s.decay > 0.0 && s.decay <= 1.0) {
                return Err(Error::invalid(format!("stage {i}: decay must lie in (0, 1]")));
            }
            if !(s.tol >= 0.0 && s.tol.is_finite()) {
                return Err(Error::invalid(format!("stage {i}: tol must be finite and >= 0")));
            }
            s.weights
                .validate()
                .map_err(|e| Error::invalid(format!("stage {i}: {e}")))?;
        }
        let rank = |l: Level| match l {
            Level::Rig => 0,
            Level::Joint => 1,
            Level::Vertex => 2,
        };
        for w in self.stages.windows(2) {
            if rank(w[1].level) < rank(w[0].level) {
                return Err(Error::invalid(format!(
                    "stage levels must run coarse to fine, found {} after {}",
                    w[1].level.name(),
                    w[0].level.name()
                )));
            }
        }
        Ok(())
    }
}
