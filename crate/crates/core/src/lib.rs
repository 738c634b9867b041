//! Broken light observations: null geodesics that reflect off a timelike
//! boundary, the sets of boundary points they reach, and the reconstruction of
//! interior geometry from those sets alone.

pub mod error;
pub mod linalg;
pub mod manifold;
pub mod raytrace;
pub mod observe;
pub mod io;
pub mod reconstruct;
