use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// A point on the surface given as a face and barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub face: usize,
    pub bary: [f64; 3],
}

impl SurfaceSample {
    pub fn position(&self, mesh: &TriMesh) -> Vec3 {
        let [a, b, c] = mesh.corners(self.face);
        a * self.bary[0] + b * self.bary[1] + c * self.bary[2]
    }
}

/// Area-weighted face choice followed by uniform barycentric sampling.
/// `face_filter`, when given, restricts sampling to faces marked `true`.
pub fn sample_surface(
    mesh: &TriMesh,
    n: usize,
    seed: u64,
    face_filter: Option<&[bool]>,
) -> Result<Vec<SurfaceSample>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.face_count());
    let mut total = 0.0;
    for f in 0..mesh.face_count() {
        let keep = face_filter.map_or(true, |m| m[f]);
        if keep {
            total += mesh.face_area(f);
        }
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::invalid("surface has zero sampled area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.gen::<f64>() * total;
        // first face whose cumulative area exceeds t; zero-area faces never win
        let mut face = cumulative.partition_point(|&c| c <= t);
        if face >= cumulative.len() {
            face = cumulative.len() - 1;
            while face > 0 && cumulative[face - 1] == total {
                face -= 1;
            }
        }
        let r1: f64 = rng.gen();
        let r2: f64 = rng.gen();
        let s = r1.sqrt();
        out.push(SurfaceSample {
            face,
            bary: [1.0 - s, s * (1.0 - r2), s * r2],
        });
    }
    Ok(out)
}

/// `n` points uniformly distributed over the surface area.
pub fn resample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    Ok(sample_surface(mesh, n, seed, None)?
        .iter()
        .map(|s| s.position(mesh))
        .collect())
}
