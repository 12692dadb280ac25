//! Native landmark document.
//!
//! Coordinates are written with the shortest decimal form that parses back
//! to the same `f64`, so a read after a write is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AffineFrame, UnitVector, Vec3, WorldConvention, WorldPoint};
use crate::orientation::LocalFrame;
use crate::poi::{CoordinateSpace, LandmarkName, PoiSet};

pub const POI_FORMAT: &str = "spinepoi.poi";
pub const POI_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceDoc {
    kind: String,
    convention: WorldConvention,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    affine: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    origin: [f64; 3],
    superior: [f64; 3],
    posterior: [f64; 3],
    lateral: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertebraDoc {
    v_id: u32,
    level: Option<String>,
    frame: Option<FrameDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    v_id: u32,
    name: String,
    position: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkipDoc {
    v_id: u32,
    name: String,
    reason: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoteDoc {
    v_id: u32,
    message: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoiDoc {
    format: String,
    version: u32,
    space: SpaceDoc,
    vertebrae: Vec<VertebraDoc>,
    entries: Vec<EntryDoc>,
    skips: Vec<SkipDoc>,
    notes: Vec<NoteDoc>,
}

/// Just enough of a document to check what it is before parsing the rest.
#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<serde_json::Value>,
    role: Option<String>,
}

fn xyz(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn unit(v: [f64; 3], what: &str) -> Result<UnitVector> {
    let v = Vec3::from(v);
    if !((v.norm() - 1.0).abs() < 1e-6) {
        return Err(Error::Format(format!("frame {what} axis is not a unit vector")));
    }
    Ok(UnitVector::new_unchecked(v))
}

/// Serializes a landmark set.
pub fn poi_to_json(set: &PoiSet) -> Result<Vec<u8>> {
    let space = match set.space() {
        CoordinateSpace::World(c) => SpaceDoc { kind: "world".into(), convention: *c, affine: None },
        CoordinateSpace::Voxel(f) => SpaceDoc { kind: "voxel".into(), convention: f.convention(), affine: Some(f.to_row_major().to_vec()) },
    };
    let vertebrae = set
        .v_ids()
        .into_iter()
        .map(|v| VertebraDoc {
            v_id: v,
            level: set.level(v).map(str::to_string),
            frame: set.frame(v).map(|f| FrameDoc {
                origin: xyz(&f.origin.coords),
                superior: xyz(&f.superior),
                posterior: xyz(&f.posterior),
                lateral: xyz(&f.lateral),
            }),
        })
        .collect();
    let doc = PoiDoc {
        format: POI_FORMAT.into(),
        version: POI_VERSION,
        space,
        vertebrae,
        entries: set.iter().map(|(v, n, p)| EntryDoc { v_id: v, name: n.as_str().into(), position: xyz(&p.coords) }).collect(),
        skips: set.skips().iter().map(|s| SkipDoc { v_id: s.v_id, name: s.name.clone(), reason: s.reason.clone() }).collect(),
        notes: set.notes().iter().map(|n| NoteDoc { v_id: n.v_id, message: n.message.clone() }).collect(),
    };
    super::to_json_bytes(&doc)
}

/// Parses a landmark document.
///
/// Errors: [`Error::Version`] for another format version,
/// [`Error::Format`] for anything malformed, including a `(v_id, name)` pair
/// listed twice.
pub fn poi_from_json(bytes: &[u8]) -> Result<PoiSet> {
    let header: Header = serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))?;
    if header.format.as_deref() != Some(POI_FORMAT) {
        return Err(Error::Format(format!("not a {POI_FORMAT} document")));
    }
    match header.version {
        Some(serde_json::Value::Number(n)) if n.as_u64() == Some(POI_VERSION as u64) => {}
        Some(v) => return Err(Error::Version(format!("{POI_FORMAT} version {v} (supported: {POI_VERSION})"))),
        None => return Err(Error::Format("missing version".into())),
    }
    if let Some(role) = header.role {
        return Err(Error::Format(format!("document has role '{role}'; ground truth is not read as landmarks")));
    }
    let doc: PoiDoc = serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))?;

    let space = match doc.space.kind.as_str() {
        "world" => CoordinateSpace::World(doc.space.convention),
        "voxel" => {
            let m = doc.space.affine.ok_or_else(|| Error::Format("voxel space without an affine".into()))?;
            CoordinateSpace::Voxel(AffineFrame::from_row_major(&m, doc.space.convention).map_err(|e| Error::Format(e.to_string()))?)
        }
        k => return Err(Error::Format(format!("unknown space kind '{k}'"))),
    };
    let mut set = PoiSet::new(space);
    let mut seen = std::collections::BTreeSet::new();
    for v in doc.vertebrae {
        if !seen.insert(v.v_id) {
            return Err(Error::Format(format!("vertebra {} listed twice", v.v_id)));
        }
        if let Some(level) = v.level {
            set.set_level(v.v_id, level);
        }
        if let Some(f) = v.frame {
            set.set_frame(
                v.v_id,
                LocalFrame {
                    origin: WorldPoint::from(f.origin),
                    superior: unit(f.superior, "superior")?,
                    posterior: unit(f.posterior, "posterior")?,
                    lateral: unit(f.lateral, "lateral")?,
                },
            );
        }
    }
    for e in doc.entries {
        let name: LandmarkName = e.name.parse().map_err(Error::Format)?;
        set.insert(e.v_id, name, WorldPoint::from(e.position))?;
    }
    for s in doc.skips {
        set.skip(s.v_id, s.name, s.reason);
    }
    for n in doc.notes {
        set.note(n.v_id, n.message);
    }
    Ok(set)
}

pub fn write_poi_json(set: &PoiSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, poi_to_json(set)?)?;
    Ok(())
}

pub fn read_poi_json(path: impl AsRef<Path>) -> Result<PoiSet> {
    poi_from_json(&std::fs::read(path)?)
}
