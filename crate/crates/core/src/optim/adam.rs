use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::rig::{Level, PoseState, RiggedTemplate, TRS_LEN};

/// Smallest joint scale a stage may reach.
pub const MIN_SCALE: f64 = 1e-3;

/// Stage-active parameters as a flat vector with per-coordinate bounds
/// (infinite where unbounded).
#[derive(Debug, Clone, PartialEq)]
pub struct Packed {
    pub x: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn pack_parameters(tmpl: &RiggedTemplate, state: &PoseState, level: Level) -> Packed {
    match level {
        Level::Rig => Packed {
            x: state.r.clone(),
            lo: tmpl.controllers.iter().map(|c| c.lo).collect(),
            hi: tmpl.controllers.iter().map(|c| c.hi).collect(),
        },
        Level::Joint => {
            let n = state.theta.len();
            let lo = (0..n)
                .map(|i| if i % TRS_LEN >= 6 { MIN_SCALE } else { f64::NEG_INFINITY })
                .collect();
            Packed {
                x: state.theta.clone(),
                lo,
                hi: vec![f64::INFINITY; n],
            }
        }
        Level::Vertex => {
            let n = 3 * state.delta.len();
            Packed {
                x: state.delta.iter().flat_map(|d| [d.x, d.y, d.z]).collect(),
                lo: vec![f64::NEG_INFINITY; n],
                hi: vec![f64::INFINITY; n],
            }
        }
    }
}

/// Writes `x` back into the level's slot of `state`.
pub fn unpack_parameters(state: &PoseState, level: Level, x: &[f64]) -> Result<PoseState> {
    let mut out = state.clone();
    let expect = match level {
        Level::Rig => state.r.len(),
        Level::Joint => state.theta.len(),
        Level::Vertex => 3 * state.delta.len(),
    };
    if x.len() != expect {
        return Err(Error::dim(format!(
            "{} parameters for a {} stage of size {expect}",
            x.len(),
            level.name()
        )));
    }
    match level {
        Level::Rig => out.r.copy_from_slice(x),
        Level::Joint => out.theta.copy_from_slice(x),
        Level::Vertex => {
            for (d, c) in out.delta.iter_mut().zip(x.chunks_exact(3)) {
                *d = Vec3::new(c[0], c[1], c[2]);
            }
        }
    }
    Ok(out)
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One bias-corrected update followed by clamping into `[lo, hi]`.
    pub fn step(&mut self, x: &mut [f64], g: &[f64], step_size: f64, lo: &[f64], hi: &[f64]) -> Result<()> {
        let n = x.len();
        if g.len() != n || lo.len() != n || hi.len() != n || self.m.len() != n {
            return Err(Error::dim(format!("optimizer of size {} given {n} parameters and {} gradients", self.m.len(), g.len())));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("gradient coordinate {i} is {}", g[i])));
        }
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..n {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g[i] * g[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            x[i] = (x[i] - step_size * m_hat / (v_hat.sqrt() + EPSILON)).clamp(lo[i], hi[i]);
        }
        Ok(())
    }
}
