//! Central-difference checks of every loss term at every parameter level.
//!
//! Each term is checked in isolation (unit weight, all others zero) at a
//! few random pose states. The image term is differenced under the
//! pixel-to-face assignment of the base point, which is the function its
//! analytic gradient describes. Top-k terms skip coordinates whose
//! perturbation changes the selected set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geom::Vec3;
use crate::losses::{
    evaluate_mesh_frozen, select_top, total_loss, LossContext, LossTerms, LossWeights, ReferenceGeometry,
    TargetObservation,
};
use crate::mesh::{face_normals, interior_angles, TriMesh};
use crate::optim::{pack_parameters, synth_target, unpack_parameters, SynthOptions};
use crate::render::CameraModel;
use crate::rig::{Level, PoseState, RiggedTemplate, TRS_LEN};

pub const FD_STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-3;
/// Coordinates with a smaller analytic derivative are not scored.
pub const MIN_ANALYTIC: f64 = 1e-8;
pub const PASS_FRACTION: f64 = 0.95;

const TERMS: usize = LossTerms::NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Random pose states per level.
    pub points: usize,
    /// Per term and point, at most this many vertex-level coordinates are
    /// differenced (a random subset of those with a scorable derivative).
    pub vertex_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            points: 3,
            vertex_coords: 60,
            seed: 0,
        }
    }
}

/// Agreement of one term at one level, pooled over all points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermCheck {
    pub term: &'static str,
    pub level: Level,
    pub checked: usize,
    pub passed: usize,
    /// Coordinates skipped because a top-k selection changed under ±h.
    pub unstable: usize,
    /// Largest relative error among checked coordinates.
    pub worst: f64,
}

impl TermCheck {
    pub fn fraction(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }

    /// Nothing checked counts as a failure: the point set did not exercise
    /// the term.
    pub fn ok(&self) -> bool {
        self.checked > 0 && self.fraction() >= PASS_FRACTION
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub checks: Vec<TermCheck>,
}

impl GradCheckReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(TermCheck::ok)
    }
}

fn single_term(base: &LossWeights, term: usize) -> LossWeights {
    let mut w = LossWeights {
        k_conf: base.k_conf,
        k_flip: base.k_flip,
        ..LossWeights::zero()
    };
    *[
        &mut w.normal,
        &mut w.landmark,
        &mut w.gcc,
        &mut w.conformal,
        &mut w.flip,
        &mut w.curve,
        &mut w.disp,
    ][term] = 1.0;
    w
}

fn relative_error(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs())
}

/// Per-element values of the two top-k terms: corner-angle deviations
/// and face-normal distances.
fn topk_values(mesh: &TriMesh, reference: &ReferenceGeometry) -> Result<[Vec<f64>; 2]> {
    let angles = interior_angles(mesh)?;
    let dev = angles
        .iter()
        .zip(&reference.angles)
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
        .collect();
    let normals = face_normals(mesh)?;
    let dist = normals.iter().zip(&reference.normals).map(|(a, b)| (a - b).norm()).collect();
    Ok([dev, dist])
}

/// Values below this are round-off; reordering them inside a top-k
/// selection does not change the loss.
const TIE_FLOOR: f64 = 1e-12;

/// The top-`k` set at a perturbed point equals the base set, up to
/// exchanges among elements at round-off level.
fn selection_stable(base: &[f64], moved: &[f64], k: f64) -> bool {
    let mut a = select_top(base, k);
    let mut b = select_top(moved, k);
    a.sort_unstable();
    b.sort_unstable();
    let small = |i: usize| base[i] < TIE_FLOOR && moved[i] < TIE_FLOOR;
    let only_a = a.iter().filter(|i| b.binary_search(i).is_err());
    let only_b = b.iter().filter(|i| a.binary_search(i).is_err());
    only_a.chain(only_b).all(|&i| small(i))
}

fn random_state(tmpl: &RiggedTemplate, level: Level, rng: &mut ChaCha8Rng) -> Result<PoseState> {
    let mut state = tmpl.neutral_state();
    for (r, c) in state.r.iter_mut().zip(&tmpl.controllers) {
        *r = rng.gen_range(0.5 * c.lo..=0.5 * c.hi);
    }
    state.theta = tmpl.apply_controllers(&state.r)?;
    match level {
        Level::Rig => {}
        Level::Joint => {
            for (i, t) in state.theta.iter_mut().enumerate() {
                *t += rng.gen_range(-0.02..0.02) * if i % TRS_LEN < 6 { 1.0 } else { 0.5 };
            }
        }
        Level::Vertex => {
            for d in &mut state.delta {
                *d = Vec3::new(
                    rng.gen_range(-2e-3..2e-3),
                    rng.gen_range(-2e-3..2e-3),
                    rng.gen_range(-2e-3..2e-3),
                );
            }
        }
    }
    Ok(state)
}

/// Runs the suite against a target synthesized from `opts.seed` and seen
/// through `cam`.
pub fn grad_check(tmpl: &RiggedTemplate, cam: &CameraModel, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let synth = synth_target(
        tmpl,
        cam,
        opts.seed,
        &SynthOptions {
            joint_jitter: 0.01,
            ..SynthOptions::default()
        },
    )?;
    let target: TargetObservation = synth.target;
    let reference = ReferenceGeometry::new(tmpl, &tmpl.neutral)?;
    let anchor = random_state(tmpl, Level::Vertex, &mut rng).and_then(|s| tmpl.pose_from_state(&s, Level::Vertex))?;
    let base = LossWeights::default();
    let weights: Vec<LossWeights> = (0..TERMS).map(|t| single_term(&base, t)).collect();
    let values_only = LossWeights {
        k_conf: base.k_conf,
        k_flip: base.k_flip,
        ..LossWeights::zero()
    };
    let ctx_for = |w| LossContext {
        tmpl,
        target: &target,
        weights: w,
        reference: &reference,
        anchor: &anchor,
    };

    let mut checks = Vec::new();
    for level in [Level::Rig, Level::Joint, Level::Vertex] {
        let mut pooled: Vec<TermCheck> = LossTerms::NAMES
            .iter()
            .map(|&term| TermCheck {
                term,
                level,
                checked: 0,
                passed: 0,
                unstable: 0,
                worst: 0.0,
            })
            .collect();
        for _ in 0..opts.points {
            let state = random_state(tmpl, level, &mut rng)?;
            let analytic: Vec<Vec<f64>> = weights
                .iter()
                .map(|w| total_loss(&ctx_for(w), &state, level).map(|s| s.grad))
                .collect::<Result<_>>()?;
            let base_eval = total_loss(&ctx_for(&values_only), &state, level)?;
            let frozen = base_eval.loss.raster;
            let base_vals = topk_values(&base_eval.mesh, &reference)?;
            let x = pack_parameters(tmpl, &state, level).x;

            // coordinates to difference, per term
            let mut wanted = vec![Vec::new(); TERMS];
            for (t, g) in analytic.iter().enumerate() {
                let mut scorable: Vec<usize> = (0..x.len()).filter(|&i| g[i].abs() > MIN_ANALYTIC).collect();
                if level == Level::Vertex && scorable.len() > opts.vertex_coords {
                    for k in 0..opts.vertex_coords {
                        let j = rng.gen_range(k..scorable.len());
                        scorable.swap(k, j);
                    }
                    scorable.truncate(opts.vertex_coords);
                    scorable.sort_unstable();
                }
                wanted[t] = scorable;
            }
            let mut coords: Vec<usize> = wanted.iter().flatten().copied().collect();
            coords.sort_unstable();
            coords.dedup();

            let ctx = ctx_for(&values_only);
            let eval_at = |x: &[f64]| -> Result<(LossTerms, bool, bool)> {
                let s = unpack_parameters(&state, level, x)?;
                let mesh = tmpl.pose_from_state(&s, level)?;
                let terms = evaluate_mesh_frozen(&ctx, &mesh, &frozen)?.terms;
                let [dev, dist] = topk_values(&mesh, &reference)?;
                Ok((
                    terms,
                    selection_stable(&base_vals[0], &dev, base.k_conf),
                    selection_stable(&base_vals[1], &dist, base.k_flip),
                ))
            };
            for i in coords {
                let mut xp = x.clone();
                xp[i] += FD_STEP;
                let mut xm = x.clone();
                xm[i] -= FD_STEP;
                let (fp, cp, lp) = eval_at(&xp)?;
                let (fm, cm, lm) = eval_at(&xm)?;
                let (vp, vm) = (fp.values(), fm.values());
                for t in 0..TERMS {
                    if wanted[t].binary_search(&i).is_err() {
                        continue;
                    }
                    let stable = match LossTerms::NAMES[t] {
                        "conformal" => cp && cm,
                        "flip" => lp && lm,
                        _ => true,
                    };
                    let c = &mut pooled[t];
                    if !stable {
                        c.unstable += 1;
                        continue;
                    }
                    let fd = (vp[t] - vm[t]) / (2.0 * FD_STEP);
                    let err = relative_error(fd, analytic[t][i]);
                    c.checked += 1;
                    c.worst = c.worst.max(err);
                    if err < REL_TOL {
                        c.passed += 1;
                    }
                }
            }
        }
        checks.extend(pooled);
    }
    Ok(GradCheckReport { seed: opts.seed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::{synthetic_head, HeadOptions};

    #[test]
    fn single_term_weights() {
        let base = LossWeights::default();
        for t in 0..TERMS {
            let w = single_term(&base, t);
            let v = LossTerms {
                normal: 1.0,
                landmark: 1.0,
                gcc: 1.0,
                conformal: 1.0,
                flip: 1.0,
                curve: 1.0,
                disp: 1.0,
            }
            .weighted_total(&w);
            assert_eq!(v, 1.0);
            assert_eq!(w.k_conf, base.k_conf);
        }
    }

    #[test]
    fn round_off_ties_do_not_break_stability() {
        let base = [3.0, 2.0, 1e-15, 0.0, 2e-16];
        let moved = [3.0, 2.0, 0.0, 1e-15, 2e-16];
        assert!(selection_stable(&base, &moved, 0.6));
        let swapped = [3.0, 0.5, 1e-15, 2.5, 0.0];
        assert!(!selection_stable(&base, &swapped, 0.4));
    }

    #[test]
    fn small_head_passes() {
        let (tmpl, cam) = synthetic_head(&HeadOptions { columns: 41, rows: 29 }, 96).unwrap();
        let opts = GradCheckOptions {
            points: 1,
            vertex_coords: 20,
            seed: 5,
        };
        let report = grad_check(&tmpl, &cam, &opts).unwrap();
        assert_eq!(report.checks.len(), 3 * TERMS);
        for c in &report.checks {
            assert!(c.ok(), "{c:?}");
        }
    }
}
