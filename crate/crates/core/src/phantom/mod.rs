//! Synthetic vertebrae and spines with analytic ground truth.
//!
//! A vertebra is assembled from primitives in its local frame (lateral,
//! posterior, superior): a rounded cuboid corpus, a U-shaped arch of two
//! pedicles and a lamina, and capsules for the spinous, costal and articular
//! processes. Voxels are labelled by a center-inclusion test, so the 0.5
//! occupancy level sits half a voxel outside the outermost included centers.

mod generate;
mod geometry;
mod suite;

pub use generate::{
    arc_centerline, generate_spine, generate_vertebra, GridLayout, GridSpec, Jitter, LevelSpec, PhantomSpec, PhantomTruth, Pose,
    VertebraTruth,
};
pub use geometry::{Capsule, VertebraParams};
pub use suite::{generate_suite, run_orientation_suite, score_methods, suite_cases, SuiteCase, SuiteSample, SUITE_SEED, SUITE_SIZE};
