//! UV appearance maps: image-gradient normals, soft-light fusion and
//! dual-mask Poisson completion against a template texture.

mod appearance;
mod poisson;

pub use appearance::{extract_appearance, luminance, uv_coverage, Appearance, AppearanceOptions};
pub use poisson::{poisson_blend, solve_dirichlet, PoissonStats, DEFAULT_TOL};

use crate::error::{Error, Result};
use crate::render::ImageBuffer;

/// A UV-space image and the texels that hold valid data.
#[derive(Debug, Clone, PartialEq)]
pub struct UvTexture {
    pub image: ImageBuffer,
    pub mask: Vec<bool>,
}

impl UvTexture {
    pub fn new(image: ImageBuffer, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != image.pixel_count() {
            return Err(Error::dim(format!(
                "mask has {} entries for a {}x{} image",
                mask.len(),
                image.width,
                image.height
            )));
        }
        Ok(UvTexture { image, mask })
    }

    /// Every texel valid.
    pub fn full(image: ImageBuffer) -> Self {
        let mask = vec![true; image.pixel_count()];
        UvTexture { image, mask }
    }
}

/// Hard seam mask and its one-step erosion.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendMasks {
    pub width: usize,
    pub height: usize,
    pub hard: Vec<bool>,
    pub soft: Vec<bool>,
}

impl BlendMasks {
    pub fn from_hard(hard: Vec<bool>, width: usize, height: usize) -> Result<Self> {
        if hard.len() != width * height {
            return Err(Error::dim("hard mask size differs from the UV size"));
        }
        let soft = erode_mask(&hard, width, height);
        Ok(BlendMasks {
            width,
            height,
            hard,
            soft,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.hard.len() != n || self.soft.len() != n {
            return Err(Error::dim("blend masks do not match their stated size"));
        }
        if let Some(p) = (0..n).find(|&p| self.soft[p] && !self.hard[p]) {
            return Err(Error::invalid(format!(
                "soft mask texel ({}, {}) lies outside the hard mask",
                p % self.width,
                p / self.width
            )));
        }
        Ok(())
    }
}

/// Texel stays true only when its whole 3×3 neighborhood is true; the
/// outside of the image counts as false.
pub fn erode_mask(mask: &[bool], width: usize, height: usize) -> Vec<bool> {
    let mut out = vec![false; width * height];
    if width < 3 || height < 3 {
        return out;
    }
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            out[y * width + x] = (y - 1..=y + 1).all(|yy| (x - 1..=x + 1).all(|xx| mask[yy * width + xx]));
        }
    }
    out
}

/// Tangent-space normals `normalize(s·gx, s·gy, 1)` from 3×3 Sobel
/// gradients of a single-channel image, borders replicated.
pub fn sobel_normals(image: &ImageBuffer, strength: f64) -> Result<ImageBuffer> {
    if image.channels != 1 {
        return Err(Error::invalid(format!(
            "gradient normals need a single-channel image, got {} channels",
            image.channels
        )));
    }
    if !(strength > 0.0 && strength.is_finite()) {
        return Err(Error::invalid("normal strength must be positive"));
    }
    let (w, h) = (image.width, image.height);
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        image.data[yc * w + xc]
    };
    let mut out = ImageBuffer::new(w, h, 3);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) - at(x - 1, y - 1))
                + 2.0 * (at(x + 1, y) - at(x - 1, y))
                + (at(x + 1, y + 1) - at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) - at(x - 1, y - 1))
                + 2.0 * (at(x, y + 1) - at(x, y - 1))
                + (at(x + 1, y + 1) - at(x + 1, y - 1));
            let n = [strength * gx, strength * gy, 1.0];
            let len = (n[0] * n[0] + n[1] * n[1] + 1.0).sqrt();
            let px = out.pixel_mut(x as usize, y as usize);
            for c in 0..3 {
                px[c] = n[c] / len;
            }
        }
    }
    Ok(out)
}

/// Soft-light blend of one channel in [0,1]: `b` base, `s` blend layer.
pub fn softlight(b: f64, s: f64) -> f64 {
    if s <= 0.5 {
        b - (1.0 - 2.0 * s) * b * (1.0 - b)
    } else {
        let d = if b <= 0.25 { ((16.0 * b - 12.0) * b + 4.0) * b } else { b.sqrt() };
        b + (2.0 * s - 1.0) * (d - b)
    }
}

/// Blends a fine normal map over a coarse one with soft light in the
/// `(n+1)/2` encoding, then renormalizes.
pub fn softlight_fuse(fine: &ImageBuffer, coarse: &ImageBuffer) -> Result<ImageBuffer> {
    if !fine.same_shape(coarse) || fine.channels != 3 {
        return Err(Error::dim(format!(
            "normal maps are {}x{}x{} and {}x{}x{}",
            fine.width, fine.height, fine.channels, coarse.width, coarse.height, coarse.channels
        )));
    }
    let mut out = coarse.clone();
    for (o, f) in out.data.chunks_exact_mut(3).zip(fine.data.chunks_exact(3)) {
        for c in 0..3 {
            let b = 0.5 * (o[c] + 1.0);
            let s = 0.5 * (f[c] + 1.0);
            // stay in the decoded domain so the neutral layer is a no-op
            o[c] += 2.0 * (softlight(b, s) - b);
        }
        let len = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt();
        if len > 0.0 && (len - 1.0).abs() > 1e-15 {
            for v in o.iter_mut() {
                *v /= len;
            }
        }
    }
    Ok(out)
}
