//! Small differentiable vector primitives.
//!
//! Every loss in the crate is written as a composition of these pieces with
//! a hand-written reverse pass; each `*_backward` takes the adjoint of the
//! output and returns adjoints of the inputs.

use nalgebra::{Vector2, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// Below this `|â × b̂|` two directions count as parallel and the angle
/// between them gets a zero subgradient.
pub const PARALLEL_EPS: f64 = 1e-12;

/// Subgradient of `|x|` with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adjoint of `v / |v|` given the normalized output `n` and `|v|`.
pub fn normalize_backward(n: &Vec3, len: f64, g_n: &Vec3) -> Vec3 {
    (g_n - n * n.dot(g_n)) / len
}

/// Adjoints of `a × b`.
pub fn cross_backward(a: &Vec3, b: &Vec3, g_c: &Vec3) -> (Vec3, Vec3) {
    (b.cross(g_c), g_c.cross(a))
}

pub fn cross2(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Adjoints of the scalar 2D cross product.
pub fn cross2_backward(a: &Vec2, b: &Vec2, g: f64) -> (Vec2, Vec2) {
    (Vec2::new(b.y, -b.x) * g, Vec2::new(-a.y, a.x) * g)
}

/// Angle between two vectors as `atan2(|a × b|, a · b)`, which stays
/// accurate near 0 and π where `acos` of the cosine does not.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Adjoints of `angle_between`. At (anti)parallel inputs the angle has a
/// kink and the zero subgradient is returned.
pub fn angle_between_backward(a: &Vec3, b: &Vec3, g: f64) -> (Vec3, Vec3) {
    let x = a.cross(b);
    let s = x.norm();
    let c = a.dot(b);
    if g == 0.0 || s <= PARALLEL_EPS * a.norm() * b.norm() {
        return (Vec3::zeros(), Vec3::zeros());
    }
    let u = x / s;
    let k = g / (s * s + c * c);
    ((b.cross(&u) * c - b * s) * k, (u.cross(a) * c - a * s) * k)
}

/// Unnormalized face normal (twice the area vector) of a CCW triangle.
pub fn face_cross(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> Vec3 {
    (p1 - p0).cross(&(p2 - p0))
}

/// Adjoints of `face_cross` with respect to the three corners.
pub fn face_cross_backward(p0: &Vec3, p1: &Vec3, p2: &Vec3, g: &Vec3) -> [Vec3; 3] {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let (g1, g2) = cross_backward(&e1, &e2, g);
    [-(g1 + g2), g1, g2]
}
