//! A small procedurally generated head template with the same structure as
//! a production facial rig: a lat/long shell with facial features, a joint
//! hierarchy, Gaussian skinning and a handful of semantic controllers.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{Controller, Joint, MapEntry, RiggedTemplate, TemplateParts, Trs, MAX_INFLUENCES, TRS_LEN};
use crate::error::Result;
use crate::geom::{Vec2, Vec3};
use crate::mesh::TriMesh;
use crate::render::CameraModel;

#[derive(Debug, Clone)]
pub struct HeadOptions {
    /// Vertex columns around the head.
    pub columns: usize,
    /// Vertex rows from neck to crown.
    pub rows: usize,
}

impl Default for HeadOptions {
    fn default() -> Self {
        HeadOptions { columns: 73, rows: 49 }
    }
}

const LON_MAX: f64 = 150.0 * PI / 180.0;
const LAT_MIN: f64 = -55.0 * PI / 180.0;
const LAT_MAX: f64 = 70.0 * PI / 180.0;

/// (lon, lat, amplitude, sigma_lon, sigma_lat) radial bumps.
const FEATURES: &[(f64, f64, f64, f64, f64)] = &[
    (0.0, -0.08, 0.16, 0.09, 0.17),  // nose ridge
    (0.0, -0.22, 0.06, 0.08, 0.07),  // nose tip
    (0.34, 0.27, 0.04, 0.22, 0.06),  // brow
    (-0.34, 0.27, 0.04, 0.22, 0.06), // brow
    (0.37, 0.12, -0.06, 0.12, 0.07), // eye socket
    (-0.37, 0.12, -0.06, 0.12, 0.07),
    (0.62, -0.08, 0.04, 0.16, 0.12), // cheekbone
    (-0.62, -0.08, 0.04, 0.16, 0.12),
    (0.0, -0.48, 0.035, 0.2, 0.06), // lips
    (0.0, -0.78, 0.05, 0.16, 0.1),  // chin
];

fn radial(lon: f64, lat: f64) -> f64 {
    let mut r = 1.0;
    for &(l0, p0, amp, sl, sp) in FEATURES {
        let d = ((lon - l0) / sl).powi(2) + ((lat - p0) / sp).powi(2);
        r += amp * (-0.5 * d).exp();
    }
    r
}

/// Unnormalized surface point at (lon, lat); lon 0 faces +z, lat is up.
fn surface(lon: f64, lat: f64) -> Vec3 {
    let dir = Vec3::new(lon.sin() * lat.cos(), lat.sin(), lon.cos() * lat.cos());
    // narrower jaw below the cheekbones
    let jaw = if lat < -0.2 { 1.0 - 0.22 * ((-0.2 - lat) / 0.8).min(1.0) } else { 1.0 };
    let r = radial(lon, lat);
    Vec3::new(0.78 * jaw * dir.x, 1.0 * dir.y, 0.9 * dir.z) * r
}

struct Grid {
    cols: usize,
    rows: usize,
}

impl Grid {
    fn lon(&self, i: usize) -> f64 {
        -LON_MAX + 2.0 * LON_MAX * i as f64 / (self.cols - 1) as f64
    }
    fn lat(&self, j: usize) -> f64 {
        LAT_MIN + (LAT_MAX - LAT_MIN) * j as f64 / (self.rows - 1) as f64
    }
    fn index(&self, i: usize, j: usize) -> usize {
        j * self.cols + i
    }
    /// Grid vertex closest in parameter space.
    fn nearest(&self, lon: f64, lat: f64) -> usize {
        let fi = (lon + LON_MAX) / (2.0 * LON_MAX) * (self.cols - 1) as f64;
        let fj = (lat - LAT_MIN) / (LAT_MAX - LAT_MIN) * (self.rows - 1) as f64;
        let i = fi.round().clamp(0.0, (self.cols - 1) as f64) as usize;
        let j = fj.round().clamp(0.0, (self.rows - 1) as f64) as usize;
        self.index(i, j)
    }
    /// Vertex ids along a parametric curve, with repeats collapsed.
    fn polyline(&self, pts: impl Iterator<Item = (f64, f64)>) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for (lon, lat) in pts {
            let v = self.nearest(lon, lat);
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }
}

struct JointSpec {
    name: &'static str,
    parent: Option<usize>,
    lon: f64,
    lat: f64,
    /// Fraction of the way from the surface toward the head center.
    depth: f64,
    sigma: f64,
}

const JOINTS: &[JointSpec] = &[
    JointSpec { name: "head", parent: None, lon: 0.0, lat: 0.0, depth: 1.0, sigma: 0.0 },
    JointSpec { name: "jaw", parent: Some(0), lon: 0.0, lat: -0.35, depth: 0.55, sigma: 0.16 },
    JointSpec { name: "chin", parent: Some(1), lon: 0.0, lat: -0.78, depth: 0.1, sigma: 0.07 },
    JointSpec { name: "mouth", parent: Some(1), lon: 0.0, lat: -0.48, depth: 0.1, sigma: 0.06 },
    JointSpec { name: "mouth_l", parent: Some(3), lon: 0.22, lat: -0.48, depth: 0.08, sigma: 0.045 },
    JointSpec { name: "mouth_r", parent: Some(3), lon: -0.22, lat: -0.48, depth: 0.08, sigma: 0.045 },
    JointSpec { name: "nose", parent: Some(0), lon: 0.0, lat: -0.06, depth: 0.15, sigma: 0.07 },
    JointSpec { name: "nose_tip", parent: Some(6), lon: 0.0, lat: -0.22, depth: 0.05, sigma: 0.045 },
    JointSpec { name: "brow_l", parent: Some(0), lon: 0.34, lat: 0.27, depth: 0.08, sigma: 0.06 },
    JointSpec { name: "brow_r", parent: Some(0), lon: -0.34, lat: 0.27, depth: 0.08, sigma: 0.06 },
    JointSpec { name: "eye_l", parent: Some(0), lon: 0.37, lat: 0.12, depth: 0.08, sigma: 0.05 },
    JointSpec { name: "eye_r", parent: Some(0), lon: -0.37, lat: 0.12, depth: 0.08, sigma: 0.05 },
    JointSpec { name: "cheek_l", parent: Some(0), lon: 0.62, lat: -0.12, depth: 0.1, sigma: 0.08 },
    JointSpec { name: "cheek_r", parent: Some(0), lon: -0.62, lat: -0.12, depth: 0.1, sigma: 0.08 },
    JointSpec { name: "forehead", parent: Some(0), lon: 0.0, lat: 0.6, depth: 0.1, sigma: 0.1 },
    JointSpec { name: "temple_l", parent: Some(0), lon: 1.05, lat: 0.3, depth: 0.1, sigma: 0.09 },
    JointSpec { name: "temple_r", parent: Some(0), lon: -1.05, lat: 0.3, depth: 0.1, sigma: 0.09 },
    JointSpec { name: "jaw_l", parent: Some(1), lon: 0.85, lat: -0.5, depth: 0.1, sigma: 0.09 },
    JointSpec { name: "jaw_r", parent: Some(1), lon: -0.85, lat: -0.5, depth: 0.1, sigma: 0.09 },
];

const TX: usize = 0;
const TY: usize = 1;
const TZ: usize = 2;
const RX: usize = 3;
const SX: usize = 6;
const SZ: usize = 8;

/// (controller name, [(joint, parameter, gain)]).
const CONTROLLERS: &[(&str, &[(usize, usize, f64)])] = &[
    ("jaw_open", &[(1, RX, 0.3)]),
    ("jaw_width", &[(17, TX, 0.09), (18, TX, -0.09)]),
    ("chin_length", &[(2, TY, -0.09)]),
    ("chin_forward", &[(2, TZ, 0.09)]),
    ("nose_length", &[(7, TZ, 0.09), (7, TY, -0.03)]),
    ("nose_width", &[(6, SX, 0.75)]),
    ("nose_bridge", &[(6, TZ, 0.06)]),
    ("brow_raise", &[(8, TY, 0.06), (9, TY, 0.06)]),
    ("brow_depth", &[(8, TZ, 0.045), (9, TZ, 0.045)]),
    ("eye_spacing", &[(10, TX, 0.045), (11, TX, -0.045)]),
    ("cheek_fullness", &[(12, TX, 0.06), (12, TZ, 0.045), (13, TX, -0.06), (13, TZ, 0.045)]),
    ("mouth_width", &[(4, TX, 0.06), (5, TX, -0.06)]),
    ("lip_fullness", &[(3, TZ, 0.045), (3, SZ, 0.75)]),
    ("forehead_slope", &[(14, TZ, 0.075)]),
    ("temple_width", &[(15, TX, 0.06), (16, TX, -0.06)]),
    ("face_length", &[(1, TY, -0.075)]),
];

/// Builds the synthetic head template and a frontal camera that frames it
/// at `image_size`×`image_size` pixels.
pub fn synthetic_head(opts: &HeadOptions, image_size: u32) -> Result<(RiggedTemplate, CameraModel)> {
    let grid = Grid {
        cols: opts.columns.max(8),
        rows: opts.rows.max(6),
    };
    let mut verts = Vec::with_capacity(grid.cols * grid.rows);
    let mut uvs = Vec::with_capacity(grid.cols * grid.rows);
    let mut params = Vec::with_capacity(grid.cols * grid.rows);
    for j in 0..grid.rows {
        for i in 0..grid.cols {
            let (lon, lat) = (grid.lon(i), grid.lat(j));
            verts.push(surface(lon, lat));
            uvs.push(Vec2::new(
                i as f64 / (grid.cols - 1) as f64,
                j as f64 / (grid.rows - 1) as f64,
            ));
            params.push((lon, lat));
        }
    }
    let mut faces = Vec::with_capacity(2 * (grid.cols - 1) * (grid.rows - 1));
    for j in 0..grid.rows - 1 {
        for i in 0..grid.cols - 1 {
            let a = grid.index(i, j);
            let b = grid.index(i + 1, j);
            let c = grid.index(i + 1, j + 1);
            let d = grid.index(i, j + 1);
            // alternate the split so the diagonals do not all lean one way
            if (i + j) % 2 == 0 {
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            } else {
                faces.push([a, b, d]);
                faces.push([b, c, d]);
            }
        }
    }

    // normalize to unit bbox diagonal about the bbox center
    let mut neutral = TriMesh::new(verts, faces, Some(uvs))?;
    let (lo, hi) = neutral.bbox();
    let center = (lo + hi) * 0.5;
    let scale = 1.0 / (hi - lo).norm();
    let to_norm = |p: Vec3| (p - center) * scale;
    neutral.vertices = neutral.vertices.iter().map(|&p| to_norm(p)).collect();

    let anchors: Vec<Vec3> = JOINTS.iter().map(|s| to_norm(surface(s.lon, s.lat))).collect();
    let world_pos: Vec<Vec3> = JOINTS
        .iter()
        .zip(&anchors)
        .map(|(s, a)| {
            let c = to_norm(Vec3::zeros());
            a + (c - a) * s.depth
        })
        .collect();
    let joints: Vec<Joint> = JOINTS
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let parent_pos = s.parent.map_or(Vec3::zeros(), |p| world_pos[p]);
            let t = world_pos[k] - parent_pos;
            Joint {
                name: s.name.to_string(),
                parent: s.parent,
                default_local: Trs {
                    translation: [t.x, t.y, t.z],
                    ..Trs::identity()
                },
            }
        })
        .collect();

    let skin_weights: Vec<Vec<(usize, f64)>> = neutral
        .vertices
        .iter()
        .map(|v| {
            let mut w: Vec<(usize, f64)> = JOINTS
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, s)| {
                    let d2 = (v - anchors[k]).norm_squared();
                    (k, (-0.5 * d2 / (s.sigma * s.sigma)).exp())
                })
                .filter(|&(_, w)| w > 1e-4)
                .collect();
            let local: f64 = w.iter().map(|(_, x)| x).sum();
            w.push((0, (1.0 - local).max(0.0) + 0.05));
            w.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            w.truncate(MAX_INFLUENCES);
            let total: f64 = w.iter().map(|(_, x)| x).sum();
            let mut row: Vec<(usize, f64)> = w.into_iter().map(|(k, x)| (k, x / total)).collect();
            row.sort_by_key(|&(k, _)| k);
            row
        })
        .collect();

    let controllers: Vec<Controller> = CONTROLLERS
        .iter()
        .map(|(name, _)| Controller {
            name: name.to_string(),
            lo: -1.0,
            hi: 1.0,
        })
        .collect();
    let ctrl_map: Vec<MapEntry> = CONTROLLERS
        .iter()
        .enumerate()
        .flat_map(|(c, (_, entries))| {
            entries.iter().map(move |&(j, k, gain)| MapEntry {
                controller: c,
                param: j * TRS_LEN + k,
                gain,
            })
        })
        .collect();

    let landmark_corners = [(0.52, 0.12), (0.2, 0.12), (-0.2, 0.12), (-0.52, 0.12), (0.22, -0.48), (-0.22, -0.48)]
        .iter()
        .map(|&(lon, lat)| grid.nearest(lon, lat))
        .collect();

    let ellipse = |lon0: f64, from: f64, to: f64, n: usize| {
        (0..=n).map(move |k| {
            let a = from + (to - from) * k as f64 / n as f64;
            (lon0 + 0.17 * a.cos(), 0.12 + 0.075 * a.sin())
        })
    };
    let mut landmark_contours = BTreeMap::new();
    landmark_contours.insert("eye_l".to_string(), grid.polyline(ellipse(0.37, 0.0, 2.0 * PI, 48)));
    landmark_contours.insert("eye_r".to_string(), grid.polyline(ellipse(-0.37, 0.0, 2.0 * PI, 48)));
    landmark_contours.insert(
        "face".to_string(),
        grid.polyline((0..=96).map(|k| {
            let a = PI * k as f64 / 96.0;
            (1.05 * a.cos(), 0.35 - 1.15 * a.sin())
        })),
    );
    let mut eyeline_curves = BTreeMap::new();
    // upper lids, inner corner to outer corner over the top
    eyeline_curves.insert("upper_lid_l".to_string(), grid.polyline(ellipse(0.37, PI, 0.0, 48)));
    eyeline_curves.insert("upper_lid_r".to_string(), grid.polyline(ellipse(-0.37, 0.0, PI, 48)));
    eyeline_curves.insert(
        "crease_l".to_string(),
        grid.polyline((0..=48).map(|k| {
            let a = PI - PI * k as f64 / 48.0;
            (0.37 + 0.24 * a.cos(), 0.16 + 0.12 * a.sin())
        })),
    );
    eyeline_curves.insert(
        "crease_r".to_string(),
        grid.polyline((0..=48).map(|k| {
            let a = PI * k as f64 / 48.0;
            (-0.37 + 0.24 * a.cos(), 0.16 + 0.12 * a.sin())
        })),
    );

    let loss_mask = params
        .iter()
        .map(|&(lon, lat)| if lon.abs() <= 1.25 && lat <= 0.95 { 1.0 } else { 0.0 })
        .collect();

    let tmpl = RiggedTemplate::new(TemplateParts {
        neutral,
        joints,
        controllers,
        skin_weights,
        ctrl_map,
        landmark_corners,
        landmark_contours,
        eyeline_curves,
        loss_mask,
    })?;
    let camera = CameraModel::frontal(&tmpl.neutral, image_size, image_size, 2.0, 0.8);
    Ok((tmpl, camera))
}
