use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::TargetObservation;
use crate::mesh::{write_obj, TriMesh};
use crate::render::CameraModel;
use crate::rig::io::write_json;
use crate::rig::{Level, PoseState, RiggedTemplate, TRS_LEN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    /// Controllers are drawn uniformly from `[range·lo, range·hi]`.
    pub range: f64,
    /// Half-width of the uniform noise added to non-root joint translations
    /// and rotations.
    pub joint_jitter: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            range: 0.6,
            joint_jitter: 0.0,
        }
    }
}

/// A synthetic observation and the pose that produced it.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub target: TargetObservation,
    pub mesh: TriMesh,
    pub state: PoseState,
}

pub const TRUTH_MESH_FILE: &str = "truth.obj";
pub const TRUTH_STATE_FILE: &str = "truth_state.json";

impl Synthesized {
    /// Writes the observation files plus the ground-truth mesh and state.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.target.save(dir)?;
        write_obj(&self.mesh, dir.join(TRUTH_MESH_FILE))?;
        write_json(&dir.join(TRUTH_STATE_FILE), &self.state)
    }
}

/// Poses the template with random controller values (and optional joint
/// jitter), then renders its normals and projects its landmarks.
pub fn synth_target(tmpl: &RiggedTemplate, cam: &CameraModel, seed: u64, opts: &SynthOptions) -> Result<Synthesized> {
    if !(0.0..=1.0).contains(&opts.range) {
        return Err(Error::invalid(format!("sampling range {} outside [0, 1]", opts.range)));
    }
    if !(opts.joint_jitter >= 0.0 && opts.joint_jitter.is_finite()) {
        return Err(Error::invalid("joint jitter must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r: Vec<f64> = tmpl
        .controllers
        .iter()
        .map(|c| {
            let (lo, hi) = (opts.range * c.lo, opts.range * c.hi);
            if hi > lo {
                rng.gen_range(lo..=hi)
            } else {
                lo
            }
        })
        .collect();
    let mut theta = tmpl.apply_controllers(&r)?;
    if opts.joint_jitter > 0.0 {
        for (j, joint) in tmpl.joints.iter().enumerate() {
            if joint.parent.is_none() {
                continue;
            }
            for k in 0..6 {
                theta[j * TRS_LEN + k] += rng.gen_range(-opts.joint_jitter..=opts.joint_jitter);
            }
        }
    }
    let state = PoseState {
        r,
        theta,
        delta: tmpl.neutral_state().delta,
    };
    let mesh = tmpl.pose_from_state(&state, Level::Joint)?;
    let target = TargetObservation::from_mesh(tmpl, &mesh, cam)?;
    Ok(Synthesized { target, mesh, state })
}
