//! Landmark extraction on top of the local vertebral frames.

pub mod config;
pub mod extract;
pub mod landmark;
pub mod search;
pub mod set;

pub use config::{BisectionConfig, ExtractionConfig, RayConfig, ShiftMode};
pub use landmark::{LandmarkName, Side, CORNERS};
pub use set::{CoordinateSpace, Note, PoiSet, RetargetTarget, Skip};
pub use extract::{
    corpus_cardinal_pois, corpus_corners, corpus_origin, extract_all, extract_vertebra, flavum_points, lateral_shift_mm, process_tip_pois,
    shift_factor, shifted_pois, VertebraContext,
};
