//! Volume- and mass-preserving parameterizations of simply connected
//! tetrahedral meshes onto the unit ball.
//!
//! The library computes a ball parameterization by volumetric stretch energy
//! minimization (a fixed-boundary fixed-point iteration on a map-dependent
//! Laplacian), and refines it into a volume-preserving optimal-mass-transport
//! map by a projected gradient method with optional Nesterov or FISTA
//! acceleration. Convergence diagnostics (iterate-difference transfer
//! operators and their spectra) are available for small meshes.

pub mod boundary;
pub mod diagnostics;
pub mod error;
pub mod generate;
pub mod io;
pub mod laplacian;
pub mod linsolve;
pub mod mesh;
pub mod report;
pub mod vomt;
pub mod vsem;

pub use error::{Error, Result};
pub use mesh::{
    boundary_enclosed_volume, folding_count, signed_volume, BoundaryMap, TetMesh, Vec3, VertexMap,
};
