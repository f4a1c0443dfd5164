use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriMesh;

/// Vertices closer to the image plane than this are rejected.
pub const MIN_DEPTH: f64 = 1e-6;

/// Pinhole camera: `x_cam = R·x_world + t`, `u = fx·x/z + cx`, `v = fy·y/z + cy`.
/// The camera looks down +z; image v grows downward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub width: u32,
    pub height: u32,
}

/// A projected vertex: pixel coordinates and camera-space depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image size must be nonzero"));
        }
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-9 || r.determinant() < 0.0 {
            return Err(Error::invalid(format!(
                "camera rotation is not a proper orthonormal matrix (error {err:e})"
            )));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vec(&self) -> Vec3 {
        Vec3::new(self.translation[0], self.translation[1], self.translation[2])
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation_matrix().transpose() * self.translation_vec())
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation_matrix() * p + self.translation_vec()
    }

    pub fn image_diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    /// Projects a camera-space point without the depth check.
    pub fn project_camera_space(&self, c: &Vec3) -> Projected {
        Projected {
            u: self.fx * c.x / c.z + self.cx,
            v: self.fy * c.y / c.z + self.cy,
            depth: c.z,
        }
    }

    pub fn project(&self, p: &Vec3) -> Result<Projected> {
        let c = self.to_camera(p);
        if c.z <= MIN_DEPTH {
            return Err(Error::invalid(format!(
                "point ({:.4}, {:.4}, {:.4}) lies behind the camera",
                p.x, p.y, p.z
            )));
        }
        Ok(self.project_camera_space(&c))
    }

    /// Camera orbiting the mesh's bounding-box center at `distance`, turned
    /// by `yaw` radians about the world y axis (0 looks at the +z side).
    /// The focal length makes the bounding box fill `fill` of the smaller
    /// image half-extent.
    pub fn orbit(mesh: &TriMesh, width: u32, height: u32, distance: f64, fill: f64, yaw: f64) -> Self {
        let (lo, hi) = mesh.bbox();
        let center = (lo + hi) * 0.5;
        let half = (hi - lo) * 0.5;
        let dir = Vec3::new(yaw.sin(), 0.0, yaw.cos());
        let eye = center + dir * distance;
        let x_axis = Vec3::new(yaw.cos(), 0.0, -yaw.sin());
        let y_axis = Vec3::new(0.0, -1.0, 0.0);
        let z_axis = -dir;
        let rotation = [
            [x_axis.x, x_axis.y, x_axis.z],
            [y_axis.x, y_axis.y, y_axis.z],
            [z_axis.x, z_axis.y, z_axis.z],
        ];
        let r = Matrix3::new(
            x_axis.x, x_axis.y, x_axis.z, y_axis.x, y_axis.y, y_axis.z, z_axis.x, z_axis.y, z_axis.z,
        );
        let t = -(r * eye);
        let radius = half.norm();
        let half_px = 0.5 * width.min(height) as f64;
        let f = fill * half_px * (distance - radius) / radius;
        CameraModel {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            rotation,
            translation: [t.x, t.y, t.z],
            width,
            height,
        }
    }

    pub fn frontal(mesh: &TriMesh, width: u32, height: u32, distance: f64, fill: f64) -> Self {
        Self::orbit(mesh, width, height, distance, fill, 0.0)
    }

    /// Same camera at a different resolution, intrinsics rescaled.
    pub fn resized(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraModel {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }
}

/// Pinhole projection of every vertex; fails if any vertex is at or behind
/// the image plane.
pub fn project_vertices(mesh: &TriMesh, cam: &CameraModel) -> Result<Vec<Projected>> {
    mesh.vertices.iter().map(|p| cam.project(p)).collect()
}
