//! Registration of a rigged head template against normal-map and landmark
//! observations.

pub mod error;
pub mod eval;
pub mod geom;
pub mod gradcheck;
pub mod losses;
pub mod mesh;
pub mod optim;
pub mod render;
pub mod rig;
pub mod texture;

pub use error::{Error, Result};
