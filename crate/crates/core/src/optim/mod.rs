//! Coarse-to-fine fitting: rig controllers, then joint parameters, then
//! per-vertex residuals, each stage starting from the previous optimum.

mod adam;
mod plan;
mod synth;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adam::{pack_parameters, unpack_parameters, Adam, Packed, BETA1, BETA2, EPSILON, MIN_SCALE};
pub use plan::{Stage, StagePlan};
pub use synth::{synth_target, SynthOptions, Synthesized, TRUTH_MESH_FILE, TRUTH_STATE_FILE};

use crate::error::{Error, Result};
use crate::losses::{total_loss, LossContext, LossTerms, ReferenceGeometry, TargetObservation};
use crate::mesh::{write_obj, TriMesh};
use crate::rig::io::write_json;
use crate::rig::{Level, PoseState, RiggedTemplate};

/// Iterations over which the relative loss change is measured.
pub const CONVERGENCE_WINDOW: usize = 20;
/// A stage is abandoned after this many consecutive iterations above
/// `DIVERGENCE_FACTOR` times its initial loss.
pub const DIVERGENCE_PATIENCE: usize = 50;
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// One evaluated iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub stage: usize,
    pub level: Level,
    pub iteration: usize,
    pub terms: LossTerms,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "detail")]
pub enum StageStatus {
    /// Ran the full iteration budget.
    Completed,
    Converged,
    Diverged,
    /// Loss evaluation failed; the best iterate before the failure is kept.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub level: Level,
    pub iterations: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_iteration: usize,
    pub seconds: f64,
    #[serde(flatten)]
    pub status: StageStatus,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    /// Final state; `theta` is synchronized with `r` after a rig stage.
    pub state: PoseState,
    pub mesh: TriMesh,
    pub trace: Vec<TraceRow>,
    pub stages: Vec<StageReport>,
}

pub const MESH_FILE: &str = "fit.obj";
pub const STATE_FILE: &str = "state.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";

impl FitReport {
    /// True when any stage stopped on a failed loss evaluation.
    pub fn failed(&self) -> bool {
        self.stages.iter().any(|s| matches!(s.status, StageStatus::Failed(_)))
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("stage,level,iteration");
        for n in LossTerms::NAMES {
            out.push(',');
            out.push_str(n);
        }
        out.push_str(",total\n");
        for r in &self.trace {
            let _ = write!(out, "{},{},{}", r.stage, r.level.name(), r.iteration);
            for v in r.terms.values() {
                let _ = write!(out, ",{v:e}");
            }
            let _ = writeln!(out, ",{:e}", r.total);
        }
        out
    }

    /// Writes the final mesh, state, loss trace and a per-stage summary.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_obj(&self.mesh, dir.join(MESH_FILE))?;
        write_json(&dir.join(STATE_FILE), &self.state)?;
        let trace = dir.join(TRACE_FILE);
        std::fs::write(&trace, self.trace_csv()).map_err(|e| Error::io(&trace, e))?;
        write_json(&dir.join(REPORT_FILE), &self.stages)
    }
}

/// Runs every stage of `plan` from the neutral state.
pub fn fit(tmpl: &RiggedTemplate, target: &TargetObservation, plan: &StagePlan) -> Result<FitReport> {
    fit_from(tmpl, target, plan, tmpl.neutral_state())
}

/// Runs every stage of `plan` starting at `state`.
pub fn fit_from(
    tmpl: &RiggedTemplate,
    target: &TargetObservation,
    plan: &StagePlan,
    mut state: PoseState,
) -> Result<FitReport> {
    plan.validate()?;
    target.check(tmpl)?;
    tmpl.check_controllers(&state.r)?;
    if state.theta.len() != tmpl.theta_len() || state.delta.len() != tmpl.vertex_count() {
        return Err(Error::dim("initial state does not match the template"));
    }
    let reference = ReferenceGeometry::new(tmpl, &tmpl.neutral)?;
    let mut trace = Vec::new();
    let mut stages = Vec::with_capacity(plan.stages.len());
    let mut previous: Option<Level> = None;
    for (index, stage) in plan.stages.iter().enumerate() {
        if previous == Some(Level::Rig) && stage.level != Level::Rig {
            state.theta = tmpl.apply_controllers(&state.r)?;
        }
        let started = Instant::now();
        let (next, mut report) = run_stage(tmpl, target, &reference, stage, index, state, &mut trace)?;
        report.seconds = started.elapsed().as_secs_f64();
        state = next;
        stages.push(report);
        previous = Some(stage.level);
    }
    if previous == Some(Level::Rig) {
        state.theta = tmpl.apply_controllers(&state.r)?;
    }
    let mesh = tmpl.pose_from_state(&state, Level::Vertex)?;
    Ok(FitReport {
        state,
        mesh,
        trace,
        stages,
    })
}

fn run_stage(
    tmpl: &RiggedTemplate,
    target: &TargetObservation,
    reference: &ReferenceGeometry,
    stage: &Stage,
    index: usize,
    start: PoseState,
    trace: &mut Vec<TraceRow>,
) -> Result<(PoseState, StageReport)> {
    let level = stage.level;
    let anchor = tmpl.pose_from_state(&start, level)?;
    let ctx = LossContext {
        tmpl,
        target,
        weights: &stage.weights,
        reference,
        anchor: &anchor,
    };
    let Packed { mut x, lo, hi } = pack_parameters(tmpl, &start, level);
    let mut adam = Adam::new(x.len());
    let mut best = (f64::INFINITY, start.clone(), 0);
    let mut initial = f64::NAN;
    let mut history: Vec<f64> = Vec::with_capacity(stage.iterations);
    let mut above = 0;
    let mut status = StageStatus::Completed;
    let mut step_size = stage.step_size;
    for it in 0..stage.iterations {
        let state = unpack_parameters(&start, level, &x)?;
        let eval = match total_loss(&ctx, &state, level) {
            Ok(e) => e,
            Err(e) => {
                status = StageStatus::Failed(format!("iteration {it}: {e}"));
                break;
            }
        };
        let total = eval.loss.total;
        trace.push(TraceRow {
            stage: index,
            level,
            iteration: it,
            terms: eval.loss.terms,
            total,
        });
        if it == 0 {
            initial = total;
        }
        if total < best.0 {
            best = (total, state, it);
        }
        history.push(total);
        if it >= CONVERGENCE_WINDOW {
            let old = history[it - CONVERGENCE_WINDOW];
            let change = (old - total).abs();
            if change == 0.0 || change < stage.tol * old.abs() {
                status = StageStatus::Converged;
                break;
            }
        }
        if total > DIVERGENCE_FACTOR * initial {
            above += 1;
            if above >= DIVERGENCE_PATIENCE {
                status = StageStatus::Diverged;
                break;
            }
        } else {
            above = 0;
        }
        if it + 1 == stage.iterations {
            break;
        }
        if let Err(e) = adam.step(&mut x, &eval.grad, step_size, &lo, &hi) {
            status = StageStatus::Failed(format!("iteration {it}: {e}"));
            break;
        }
        step_size *= stage.decay;
    }
    let report = StageReport {
        level,
        iterations: history.len(),
        initial_loss: initial,
        best_loss: best.0,
        best_iteration: best.2,
        seconds: 0.0,
        status,
    };
    Ok((best.1, report))
}
