//! Vertebral coordinate frames and sub-voxel landmark extraction from spine
//! subregion segmentations.

// Guards like `!(x > 0.0)` are written that way to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anatomy;
pub mod error;
pub mod grid;
pub mod io;
pub mod orientation;
pub mod phantom;
pub mod poi;

pub use error::{Error, Result};

// The guide's listings compile and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/getting-started.md")]
    mod getting_started {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/frames.md")]
    mod frames {}
    #[doc = include_str!("../../../book/src/landmarks.md")]
    mod landmarks {}
    #[doc = include_str!("../../../book/src/phantoms.md")]
    mod phantoms {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
