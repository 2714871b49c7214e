//! Certified two-sided estimates for hypersphericity and Uryson width of
//! closed triangulated surfaces, with explicit maps witnessing the bounds.
//!
//! The crate works on intrinsic metrics: a surface is a closed oriented 2-d
//! simplicial complex with positive edge lengths satisfying the strict
//! triangle inequality. Embedded meshes are a special case whose lengths come
//! from vertex positions. The central quantity is the largest intrinsic
//! diameter `D` of a connected component of a distance sphere around a point;
//! everything else (sandwich bounds, degree-one sphere maps, width bounds,
//! systolic data) is derived from it with machine-checkable certificates.

pub mod generators;
pub mod geodesic;
pub mod homology;
pub mod io;
pub mod levelset;
pub mod report;
pub mod spheremap;
pub mod sweepout;
pub mod surface;

pub use surface::{validate_surface, SurfaceInfo, TopologyError, TriSurface};
