//! 3D Slicer markups (`.mrk.json`): one point list per vertebra, LPS
//! millimetres, control points labelled `<level>_<landmark>`.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anatomy::{level_to_vid, vid_to_level};
use crate::error::{Error, Result};
use crate::grid::{convert_convention, WorldConvention, WorldPoint};
use crate::poi::{CoordinateSpace, LandmarkName, PoiSet, RetargetTarget};

use super::round_sig9;

/// Schema identifier written to `@schema`.
pub const SLICER_SCHEMA: &str =
    "https://raw.githubusercontent.com/slicer/slicer/master/Modules/Loadable/Markups/Resources/Schema/markups-schema-v1.0.3.json#";

const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ControlPoint {
    pub id: String,
    pub label: String,
    pub position: [f64; 3],
    pub orientation: [f64; 9],
    pub selected: bool,
    pub locked: bool,
    pub visibility: bool,
    pub position_status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Markup {
    #[serde(rename = "type")]
    pub kind: String,
    pub name: String,
    pub coordinate_system: String,
    pub coordinate_units: String,
    pub control_points: Vec<ControlPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicerMarkupsDoc {
    #[serde(rename = "@schema")]
    pub schema: String,
    pub markups: Vec<Markup>,
}

fn level_name(set: &PoiSet, v_id: u32) -> String {
    set.level(v_id).map(str::to_string).or_else(|| vid_to_level(v_id)).unwrap_or_else(|| format!("V{v_id}"))
}

/// Builds the markups document for `set` (any space; points go out in LPS).
pub fn slicer_document(set: &PoiSet) -> Result<SlicerMarkupsDoc> {
    let lps = set.retarget(&RetargetTarget::World(WorldConvention::Lps))?;
    let mut markups = Vec::new();
    for v in lps.v_ids() {
        let level = level_name(&lps, v);
        let control_points: Vec<ControlPoint> = lps
            .vertebra(v)
            .enumerate()
            .map(|(i, (n, p))| ControlPoint {
                id: (i + 1).to_string(),
                label: format!("{level}_{n}"),
                position: [p.x, p.y, p.z].map(round_sig9),
                orientation: IDENTITY,
                selected: true,
                locked: false,
                visibility: true,
                position_status: "defined".into(),
            })
            .collect();
        if control_points.is_empty() {
            continue;
        }
        markups.push(Markup {
            kind: "Fiducial".into(),
            name: level,
            coordinate_system: "LPS".into(),
            coordinate_units: "mm".into(),
            control_points,
        });
    }
    Ok(SlicerMarkupsDoc { schema: SLICER_SCHEMA.into(), markups })
}

/// Writes the markups document for `set` to `path` and returns it.
pub fn export_slicer(set: &PoiSet, path: impl AsRef<Path>) -> Result<SlicerMarkupsDoc> {
    let doc = slicer_document(set)?;
    super::write_json(&doc, path.as_ref())?;
    Ok(doc)
}

/// Reads markups written by [`export_slicer`] (or edited in Slicer) back into
/// a landmark set in world coordinates of `convention`. Control points whose
/// label is not `<level>_<landmark>` are rejected.
pub fn import_slicer(bytes: &[u8], convention: WorldConvention) -> Result<PoiSet> {
    let doc: SlicerMarkupsDoc = serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let mut set = PoiSet::new(CoordinateSpace::World(convention));
    for m in &doc.markups {
        let from = WorldConvention::parse(&m.coordinate_system)
            .ok_or_else(|| Error::Format(format!("unknown coordinate system '{}'", m.coordinate_system)))?;
        if m.coordinate_units != "mm" {
            return Err(Error::Format(format!("unsupported units '{}'", m.coordinate_units)));
        }
        let mut labels = BTreeSet::new();
        for cp in &m.control_points {
            if !labels.insert(cp.label.as_str()) {
                return Err(Error::Format(format!("label '{}' repeated in markup '{}'", cp.label, m.name)));
            }
            let (level, name) = cp.label.split_once('_').ok_or_else(|| Error::Format(format!("label '{}' has no level prefix", cp.label)))?;
            let v_id = level_to_vid(level).ok_or_else(|| Error::Format(format!("unknown level '{level}'")))?;
            let name: LandmarkName = name.parse().map_err(Error::Format)?;
            if cp.position.iter().any(|x| !x.is_finite()) {
                return Err(Error::Format(format!("non-finite position for '{}'", cp.label)));
            }
            set.set_level(v_id, level);
            set.insert(v_id, name, convert_convention(WorldPoint::from(cp.position), from, convention))?;
        }
    }
    Ok(set)
}
