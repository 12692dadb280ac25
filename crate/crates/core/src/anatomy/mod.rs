//! Subregion taxonomy, per-vertebra instances and the cranio-caudal centerline.

mod dictionary;
mod spine;
mod spline;

pub use dictionary::{LabelDictionary, LevelCodes};
pub use spine::{assemble_spine, center_of_mass, centroid_of_indices, SpineInstance, VertebraInstance};
pub use spline::{craniocaudal_axis, fit_centerline, CenterlineSpline};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The nine vertebral subregions distinguished by the input segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubregionLabel {
    Corpus,
    Arcus,
    Spinosus,
    CostalLeft,
    CostalRight,
    SupArticularLeft,
    SupArticularRight,
    InfArticularLeft,
    InfArticularRight,
}

impl SubregionLabel {
    pub const ALL: [SubregionLabel; 9] = [
        SubregionLabel::Corpus,
        SubregionLabel::Arcus,
        SubregionLabel::Spinosus,
        SubregionLabel::CostalLeft,
        SubregionLabel::CostalRight,
        SubregionLabel::SupArticularLeft,
        SubregionLabel::SupArticularRight,
        SubregionLabel::InfArticularLeft,
        SubregionLabel::InfArticularRight,
    ];

    /// Every subregion except the corpus.
    pub const POSTERIOR: [SubregionLabel; 8] = [
        SubregionLabel::Arcus,
        SubregionLabel::Spinosus,
        SubregionLabel::CostalLeft,
        SubregionLabel::CostalRight,
        SubregionLabel::SupArticularLeft,
        SubregionLabel::SupArticularRight,
        SubregionLabel::InfArticularLeft,
        SubregionLabel::InfArticularRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SubregionLabel::Corpus => "corpus",
            SubregionLabel::Arcus => "arcus",
            SubregionLabel::Spinosus => "spinosus",
            SubregionLabel::CostalLeft => "costal_left",
            SubregionLabel::CostalRight => "costal_right",
            SubregionLabel::SupArticularLeft => "sup_articular_left",
            SubregionLabel::SupArticularRight => "sup_articular_right",
            SubregionLabel::InfArticularLeft => "inf_articular_left",
            SubregionLabel::InfArticularRight => "inf_articular_right",
        }
    }

    /// Subregion code used by the SPINEPS subregion mask.
    pub fn spineps_code(self) -> u32 {
        match self {
            SubregionLabel::Arcus => 41,
            SubregionLabel::Spinosus => 42,
            SubregionLabel::CostalLeft => 43,
            SubregionLabel::CostalRight => 44,
            SubregionLabel::SupArticularLeft => 45,
            SubregionLabel::SupArticularRight => 46,
            SubregionLabel::InfArticularLeft => 47,
            SubregionLabel::InfArticularRight => 48,
            SubregionLabel::Corpus => 50,
        }
    }
}

impl fmt::Display for SubregionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubregionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubregionLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown subregion '{s}'"))
    }
}

/// Standard vertebra index counted from C1 = 1: C1-C7, T1-T12, L1-L6, S1.
pub fn level_to_vid(level: &str) -> Option<u32> {
    let (region, num) = level.split_at(1.min(level.len()));
    let n: u32 = num.parse().ok()?;
    match region {
        "C" if (1..=7).contains(&n) => Some(n),
        "T" if (1..=12).contains(&n) => Some(7 + n),
        "L" if (1..=6).contains(&n) => Some(19 + n),
        "S" if n == 1 => Some(26),
        _ => None,
    }
}

/// Inverse of [`level_to_vid`].
pub fn vid_to_level(v_id: u32) -> Option<String> {
    match v_id {
        1..=7 => Some(format!("C{v_id}")),
        8..=19 => Some(format!("T{}", v_id - 7)),
        20..=25 => Some(format!("L{}", v_id - 19)),
        26 => Some("S1".to_string()),
        _ => None,
    }
}
