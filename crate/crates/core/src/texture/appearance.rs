use super::{poisson_blend, sobel_normals, softlight_fuse, BlendMasks, UvTexture, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::render::raster::{scan_triangle, uv_to_texel};
use crate::render::{bake_to_uv, CameraModel, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppearanceOptions {
    /// Gradient gain of the heuristic normal generator.
    pub strength: f64,
    pub tol: f64,
}

impl Default for AppearanceOptions {
    fn default() -> Self {
        AppearanceOptions {
            strength: 1.0,
            tol: DEFAULT_TOL,
        }
    }
}

/// Completed UV maps plus the raw bakes they were blended from.
#[derive(Debug, Clone)]
pub struct Appearance {
    pub albedo: UvTexture,
    pub normal: UvTexture,
    pub baked_albedo: UvTexture,
    pub baked_normal: UvTexture,
}

/// Rec. 601 luma of an RGB(A) image; single-channel input is returned as is.
pub fn luminance(image: &ImageBuffer) -> ImageBuffer {
    if image.channels < 3 {
        let mut out = ImageBuffer::new(image.width, image.height, 1);
        for (o, px) in out.data.iter_mut().zip(image.data.chunks(image.channels)) {
            *o = px[0];
        }
        return out;
    }
    let mut out = ImageBuffer::new(image.width, image.height, 1);
    for (o, px) in out.data.iter_mut().zip(image.data.chunks(image.channels)) {
        *o = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
    out
}

/// Texels inside at least one UV triangle, optionally only of the faces
/// marked in `faces`.
pub fn uv_coverage(mesh: &TriMesh, width: usize, height: usize, faces: Option<&[bool]>) -> Result<Vec<bool>> {
    let uv = mesh
        .uv
        .as_ref()
        .ok_or_else(|| Error::invalid("mesh has no texture coordinates"))?;
    let mut mask = vec![false; width * height];
    for (fi, f) in mesh.faces().iter().enumerate() {
        if faces.is_some_and(|m| !m[fi]) {
            continue;
        }
        let s = [
            uv_to_texel(&uv[f[0]], width, height),
            uv_to_texel(&uv[f[1]], width, height),
            uv_to_texel(&uv[f[2]], width, height),
        ];
        scan_triangle(&s, width, height, |p, _| mask[p] = true);
    }
    Ok(mask)
}

fn renormalize(img: &mut ImageBuffer) {
    for px in img.data.chunks_exact_mut(3) {
        let len = (px[0] * px[0] + px[1] * px[1] + px[2] * px[2]).sqrt();
        if len > 0.0 {
            for v in px.iter_mut() {
                *v /= len;
            }
        }
    }
}

/// Image-space normals from full- and half-resolution Sobel passes fused
/// with soft light, then both the normals and the color baked to UV and
/// completed against the template maps. Without a template normal map a
/// flat `(0, 0, 1)` map is used.
pub fn extract_appearance(
    image: &ImageBuffer,
    mesh: &TriMesh,
    cam: &CameraModel,
    template_albedo: &UvTexture,
    template_normal: Option<&UvTexture>,
    masks: &BlendMasks,
    opts: &AppearanceOptions,
) -> Result<Appearance> {
    let (uw, uh) = (template_albedo.image.width, template_albedo.image.height);
    if template_albedo.image.channels != image.channels {
        return Err(Error::dim(format!(
            "image has {} channels, template texture {}",
            image.channels, template_albedo.image.channels
        )));
    }
    let flat;
    let template_normal = match template_normal {
        Some(t) => {
            if t.image.width != uw || t.image.height != uh || t.image.channels != 3 {
                return Err(Error::dim("template normal map must be a 3-channel map of the texture's size"));
            }
            t
        }
        None => {
            let mut img = ImageBuffer::new(uw, uh, 3);
            for px in img.data.chunks_exact_mut(3) {
                px[2] = 1.0;
            }
            flat = UvTexture::full(img);
            &flat
        }
    };

    let gray = luminance(image);
    let fine = sobel_normals(&gray, opts.strength)?;
    let mut coarse = sobel_normals(&gray.downsample2(), opts.strength)?.resize(gray.width, gray.height);
    renormalize(&mut coarse);
    let fused = softlight_fuse(&fine, &coarse)?;

    let (albedo_uv, albedo_mask) = bake_to_uv(image, mesh, cam, uw, uh)?;
    let (mut normal_uv, normal_mask) = bake_to_uv(&fused, mesh, cam, uw, uh)?;
    renormalize(&mut normal_uv);
    let baked_albedo = UvTexture::new(albedo_uv, albedo_mask)?;
    let baked_normal = UvTexture::new(normal_uv, normal_mask)?;

    let albedo = poisson_blend(&baked_albedo, template_albedo, masks, opts.tol)?;
    let mut normal = poisson_blend(&baked_normal, template_normal, masks, opts.tol)?;
    renormalize(&mut normal.image);
    Ok(Appearance {
        albedo,
        normal,
        baked_albedo,
        baked_normal,
    })
}
