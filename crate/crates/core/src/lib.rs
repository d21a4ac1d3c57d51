//! Orbit measures of discrete groups acting on hyperbolic space, their
//! barycenters, and the natural and boundary maps they induce between
//! representations.

pub mod barycenter;
pub mod boundary_maps;
pub mod group_orbit;
pub mod hypgeom;
pub mod measure;
pub mod natural_map;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
