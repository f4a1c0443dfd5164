use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Controller, Joint, MapEntry, RiggedTemplate, TemplateParts};
use crate::error::{Error, Result};
use crate::mesh::{load_obj, write_obj};
use crate::render::CameraModel;

/// JSON sidecar that accompanies the template OBJ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateFile {
    /// OBJ path, relative to the sidecar's directory.
    pub mesh: String,
    pub joints: Vec<Joint>,
    pub controllers: Vec<Controller>,
    /// Per vertex: list of `(joint, weight)`.
    pub skin_weights: Vec<Vec<(usize, f64)>>,
    /// `(controller, flat joint-parameter index, gain)` triplets.
    pub ctrl_map: Vec<(usize, usize, f64)>,
    pub landmark_corners: Vec<usize>,
    pub landmark_contours: BTreeMap<String, Vec<usize>>,
    pub eyeline_curves: BTreeMap<String, Vec<usize>>,
    pub loss_mask: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraModel>,
}

/// Loads a sidecar and its OBJ. The neutral mesh is rescaled to unit
/// bounding-box diagonal unless it already is (to 1e-6).
pub fn load_template(path: impl AsRef<Path>) -> Result<(RiggedTemplate, Option<CameraModel>)> {
    let path = path.as_ref();
    let file: TemplateFile = read_json(path)?;
    let mesh_path = path.parent().unwrap_or(Path::new(".")).join(&file.mesh);
    let mut neutral = load_obj(&mesh_path)?;
    if (neutral.bbox_diagonal() - 1.0).abs() > 1e-6 {
        neutral.normalize_unit_diagonal()?;
    }
    let tmpl = RiggedTemplate::new(TemplateParts {
        neutral,
        joints: file.joints,
        controllers: file.controllers,
        skin_weights: file.skin_weights,
        ctrl_map: file
            .ctrl_map
            .into_iter()
            .map(|(controller, param, gain)| MapEntry {
                controller,
                param,
                gain,
            })
            .collect(),
        landmark_corners: file.landmark_corners,
        landmark_contours: file.landmark_contours,
        eyeline_curves: file.eyeline_curves,
        loss_mask: file.loss_mask,
    })?;
    Ok((tmpl, file.camera))
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.obj`; returns the sidecar path.
pub fn save_template(
    tmpl: &RiggedTemplate,
    camera: Option<&CameraModel>,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let obj_name = format!("{stem}.obj");
    write_obj(&tmpl.neutral, dir.join(&obj_name))?;
    let file = TemplateFile {
        mesh: obj_name,
        joints: tmpl.joints.clone(),
        controllers: tmpl.controllers.clone(),
        skin_weights: tmpl.skin_weights.clone(),
        ctrl_map: tmpl.ctrl_map.iter().map(|e| (e.controller, e.param, e.gain)).collect(),
        landmark_corners: tmpl.landmark_corners.clone(),
        landmark_contours: tmpl.landmark_contours.clone(),
        eyeline_curves: tmpl.eyeline_curves.clone(),
        loss_mask: tmpl.loss_mask.clone(),
        camera: camera.cloned(),
    };
    let json_path = dir.join(format!("{stem}.json"));
    write_json(&json_path, &file)?;
    Ok(json_path)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
