//! 3D shape instantiation from a single 2D contour.
//!
//! Given a short sequence of corresponded 3D surface meshes of a deforming
//! organ (one mesh per time frame) this crate
//!
//! 1. finds the most informative cross-sectional scan plane via sparse
//!    principal component analysis ([`spca`], [`scanplane`]),
//! 2. synchronizes a 2D contour statistical shape model with the 3D one by
//!    slicing every frame with that plane ([`scanplane`], [`ssm`]),
//! 3. learns a regression from the 2D contours to the 3D meshes with partial
//!    least squares, linear or Gaussian-kernelized ([`regress`]), and
//! 4. instantiates the full 3D mesh from a single new contour — without any
//!    registration between the contour and the model ([`regress`], [`validate`]).
//!
//! Units are millimetres throughout; coordinates are right-handed and planar
//! contours are counter-clockwise.
//!
//! The [`phantom`] module generates deterministic deforming test bodies with
//! analytic cross-sections, and [`validate`] provides the leave-one-out
//! harness and the robustness studies built on it. The `shapeinst` binary and
//! the `examples/` directory drive the same public API.

pub mod cli;
pub mod io;
mod linalg;
pub mod phantom;
pub mod regress;
pub mod scanplane;
pub mod spca;
pub mod ssm;
pub mod validate;
