use std::collections::VecDeque;

use super::{BlendMasks, UvTexture};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Outcome of one conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonStats {
    pub unknowns: usize,
    pub iterations: usize,
    pub residual: f64,
}

fn neighbors(p: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (p % w, p / w);
    [
        (x > 0).then(|| p - 1),
        (x + 1 < w).then(|| p + 1),
        (y > 0).then(|| p - w),
        (y + 1 < h).then(|| p + w),
    ]
    .into_iter()
    .flatten()
}

/// Clears the unknown flag on components of `omega` that touch no fixed
/// texel; their values would only be determined up to a constant.
fn drop_floating_components(omega: &mut [bool], w: usize, h: usize) {
    let mut seen = vec![false; omega.len()];
    let mut queue = VecDeque::new();
    for start in 0..omega.len() {
        if !omega[start] || seen[start] {
            continue;
        }
        let mut component = vec![start];
        let mut anchored = false;
        seen[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbors(p, w, h) {
                if !omega[q] {
                    anchored = true;
                } else if !seen[q] {
                    seen[q] = true;
                    component.push(q);
                    queue.push_back(q);
                }
            }
        }
        if !anchored {
            for p in component {
                omega[p] = false;
            }
        }
    }
}

/// Solves the 5-point Poisson equation `Δf = Δg` on the texels marked in
/// `omega`, with every other texel of `values` fixed. `values` holds the
/// starting guess inside `omega` and receives the solution. Neighbors
/// beyond the image border are absent (natural boundary).
pub fn solve_dirichlet(
    values: &mut [f64],
    guidance: &[f64],
    omega: &[bool],
    width: usize,
    height: usize,
    tol: f64,
) -> Result<PoissonStats> {
    solve_capped(values, guidance, omega, width, height, tol, None)
}

fn solve_capped(
    values: &mut [f64],
    guidance: &[f64],
    omega: &[bool],
    width: usize,
    height: usize,
    tol: f64,
    cap: Option<usize>,
) -> Result<PoissonStats> {
    let n_pix = width * height;
    if values.len() != n_pix || guidance.len() != n_pix || omega.len() != n_pix {
        return Err(Error::dim("Poisson inputs differ in size"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    let mut omega = omega.to_vec();
    drop_floating_components(&mut omega, width, height);
    let cells: Vec<usize> = (0..n_pix).filter(|&p| omega[p]).collect();
    let mut index = vec![usize::MAX; n_pix];
    for (i, &p) in cells.iter().enumerate() {
        index[p] = i;
    }
    let n = cells.len();
    if n == 0 {
        return Ok(PoissonStats {
            unknowns: 0,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut degree = vec![0.0; n];
    let mut b = vec![0.0; n];
    for (i, &p) in cells.iter().enumerate() {
        for q in neighbors(p, width, height) {
            degree[i] += 1.0;
            b[i] += guidance[p] - guidance[q];
            if !omega[q] {
                b[i] += values[q];
            }
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        for (i, &p) in cells.iter().enumerate() {
            let mut s = degree[i] * x[i];
            for q in neighbors(p, width, height) {
                if omega[q] {
                    s -= x[index[q]];
                }
            }
            out[i] = s;
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut x: Vec<f64> = cells.iter().map(|&p| values[p]).collect();
    let mut ap = vec![0.0; n];
    apply(&x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut rr = dot(&r, &r);
    let mut p = r.clone();
    let max_iter = cap.unwrap_or(10 * n);
    let mut it = 0;
    while rr.sqrt() >= tol {
        if it == max_iter {
            return Err(Error::Numerical(format!(
                "conjugate gradients stopped after {it} iterations with residual {:.3e} (tol {tol:.1e})",
                rr.sqrt()
            )));
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        it += 1;
    }
    for (i, &p) in cells.iter().enumerate() {
        values[p] = x[i];
    }
    Ok(PoissonStats {
        unknowns: n,
        iterations: it,
        residual: rr.sqrt(),
    })
}

/// Dual-mask completion. Outside the hard mask the template is kept; on
/// soft ∩ source coverage the source is kept; the remaining hard-mask
/// texels are solved with template gradients as guidance.
pub fn poisson_blend(source: &UvTexture, template: &UvTexture, masks: &BlendMasks, tol: f64) -> Result<UvTexture> {
    let (w, h) = (template.image.width, template.image.height);
    if !source.image.same_shape(&template.image) {
        return Err(Error::dim(format!(
            "source is {}x{}x{}, template is {w}x{h}x{}",
            source.image.width, source.image.height, source.image.channels, template.image.channels
        )));
    }
    if masks.width != w || masks.height != h {
        return Err(Error::dim("blend masks differ in size from the textures"));
    }
    masks.validate()?;
    if let Some(p) = (0..w * h).find(|&p| masks.hard[p] && !template.mask[p]) {
        return Err(Error::invalid(format!(
            "template texture has no data at hard-mask texel ({}, {})",
            p % w,
            p / w
        )));
    }
    let known: Vec<bool> = (0..w * h).map(|p| masks.soft[p] && source.mask[p]).collect();
    let omega: Vec<bool> = (0..w * h).map(|p| masks.hard[p] && !known[p]).collect();
    let mut out = template.image.clone();
    for p in (0..w * h).filter(|&p| known[p]) {
        out.at_mut(p).copy_from_slice(source.image.at(p));
    }
    if omega.iter().any(|&b| b) {
        for c in 0..out.channels {
            let guide = template.image.channel(c);
            let mut values = out.channel(c);
            solve_dirichlet(&mut values, &guide, &omega, w, h, tol)?;
            out.set_channel(c, &values);
        }
    }
    UvTexture::new(out, template.mask.clone())
}
