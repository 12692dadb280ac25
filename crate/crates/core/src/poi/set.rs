use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{convert_convention, convert_vector, AffineFrame, UnitVector, WorldConvention, WorldPoint};
use crate::orientation::LocalFrame;

use super::landmark::LandmarkName;

/// Coordinate space the points of a [`PoiSet`] are expressed in.
// One per set, so the inline affine costs nothing worth boxing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum CoordinateSpace {
    World(WorldConvention),
    /// Continuous voxel indices of the given grid.
    Voxel(AffineFrame),
}

impl CoordinateSpace {
    /// World convention of the space (for voxel spaces, the frame's world side).
    pub fn convention(&self) -> WorldConvention {
        match self {
            CoordinateSpace::World(c) => *c,
            CoordinateSpace::Voxel(f) => f.convention(),
        }
    }

    fn to_world(&self, p: &WorldPoint) -> WorldPoint {
        match self {
            CoordinateSpace::World(_) => *p,
            CoordinateSpace::Voxel(f) => f.voxel_to_world([p.x, p.y, p.z]),
        }
    }
}

/// Why a landmark (or a whole vertebra, with name `"frame"`) is missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub v_id: u32,
    pub name: String,
    pub reason: String,
}

/// Non-fatal remark attached to a vertebra, e.g. a fallback that was taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Note {
    pub v_id: u32,
    pub message: String,
}

/// Landmarks of a whole spine together with the per-vertebra frames and the
/// provenance of everything that could not be computed.
///
/// Frames are always stored in world coordinates in the convention of the
/// set's space, even when the points are in voxel space.
#[derive(Debug, Clone, PartialEq)]
pub struct PoiSet {
    space: CoordinateSpace,
    levels: BTreeMap<u32, String>,
    frames: BTreeMap<u32, LocalFrame>,
    entries: BTreeMap<(u32, LandmarkName), WorldPoint>,
    skips: Vec<Skip>,
    notes: Vec<Note>,
}

type PointMap = Box<dyn Fn(&WorldPoint) -> WorldPoint>;

/// Target of [`PoiSet::retarget`].
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum RetargetTarget {
    World(WorldConvention),
    Voxel(AffineFrame),
}

impl PoiSet {
    pub fn new(space: CoordinateSpace) -> Self {
        Self {
            space,
            levels: BTreeMap::new(),
            frames: BTreeMap::new(),
            entries: BTreeMap::new(),
            skips: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn space(&self) -> &CoordinateSpace {
        &self.space
    }

    pub fn set_level(&mut self, v_id: u32, level: impl Into<String>) {
        self.levels.insert(v_id, level.into());
    }

    pub fn level(&self, v_id: u32) -> Option<&str> {
        self.levels.get(&v_id).map(String::as_str)
    }

    pub fn levels(&self) -> &BTreeMap<u32, String> {
        &self.levels
    }

    pub fn set_frame(&mut self, v_id: u32, frame: LocalFrame) {
        self.frames.insert(v_id, frame);
    }

    pub fn frame(&self, v_id: u32) -> Option<&LocalFrame> {
        self.frames.get(&v_id)
    }

    pub fn frames(&self) -> &BTreeMap<u32, LocalFrame> {
        &self.frames
    }

    /// Adds a landmark; each `(v_id, name)` pair may be set once.
    pub fn insert(&mut self, v_id: u32, name: LandmarkName, p: WorldPoint) -> Result<()> {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::Format(format!("non-finite position for {name} of vertebra {v_id}")));
        }
        if self.entries.insert((v_id, name), p).is_some() {
            return Err(Error::Format(format!("duplicate landmark {name} for vertebra {v_id}")));
        }
        Ok(())
    }

    pub fn get(&self, v_id: u32, name: LandmarkName) -> Option<WorldPoint> {
        self.entries.get(&(v_id, name)).copied()
    }

    /// Entries in `(v_id, landmark)` order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, LandmarkName, WorldPoint)> + '_ {
        self.entries.iter().map(|(&(v, n), &p)| (v, n, p))
    }

    /// Landmarks of one vertebra.
    pub fn vertebra(&self, v_id: u32) -> impl Iterator<Item = (LandmarkName, WorldPoint)> + '_ {
        self.entries.range((v_id, LandmarkName::ALL[0])..).take_while(move |(k, _)| k.0 == v_id).map(|(k, &p)| (k.1, p))
    }

    pub fn v_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.levels.keys().chain(self.frames.keys()).copied().chain(self.entries.keys().map(|k| k.0)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skip(&mut self, v_id: u32, name: impl Into<String>, reason: impl Into<String>) {
        self.skips.push(Skip { v_id, name: name.into(), reason: reason.into() });
    }

    pub fn skips(&self) -> &[Skip] {
        &self.skips
    }

    pub fn is_skipped(&self, v_id: u32, name: LandmarkName) -> bool {
        self.skips.iter().any(|s| s.v_id == v_id && s.name == name.as_str())
    }

    pub fn note(&mut self, v_id: u32, message: impl Into<String>) {
        self.notes.push(Note { v_id, message: message.into() });
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    /// Moves everything from `other` into `self`. Both sets must live in the
    /// same space.
    pub fn merge(&mut self, other: PoiSet) -> Result<()> {
        if other.space != self.space {
            return Err(Error::Format("cannot merge landmark sets in different spaces".into()));
        }
        for ((v, n), p) in other.entries {
            self.insert(v, n, p)?;
        }
        self.levels.extend(other.levels);
        self.frames.extend(other.frames);
        self.skips.extend(other.skips);
        self.notes.extend(other.notes);
        Ok(())
    }

    /// Expresses every point in another space. Points are transformed exactly
    /// through the affines; nothing is recomputed from masks.
    pub fn retarget(&self, target: &RetargetTarget) -> Result<PoiSet> {
        let from_conv = self.space.convention();
        let (space, map): (CoordinateSpace, PointMap) = match target {
            RetargetTarget::World(conv) => {
                let conv = *conv;
                let src = self.space.clone();
                (CoordinateSpace::World(conv), Box::new(move |p| convert_convention(src.to_world(p), from_conv, conv)))
            }
            RetargetTarget::Voxel(frame) => {
                // Re-validates the target; a singular affine cannot be constructed.
                let frame = AffineFrame::new(*frame.matrix(), frame.convention())?;
                let src = self.space.clone();
                let f = frame.clone();
                (
                    CoordinateSpace::Voxel(frame),
                    Box::new(move |p| {
                        if let CoordinateSpace::Voxel(sf) = &src {
                            if *sf == f {
                                return *p;
                            }
                        }
                        let w = convert_convention(src.to_world(p), from_conv, f.convention());
                        WorldPoint::from(f.world_to_voxel(&w))
                    }),
                )
            }
        };
        let to_conv = space.convention();
        let frames = self.frames.iter().map(|(&v, f)| (v, convert_frame(f, from_conv, to_conv))).collect();
        let entries = self.entries.iter().map(|(&k, p)| (k, map(p))).collect();
        Ok(PoiSet {
            space,
            levels: self.levels.clone(),
            frames,
            entries,
            skips: self.skips.clone(),
            notes: self.notes.clone(),
        })
    }
}

fn convert_frame(f: &LocalFrame, from: WorldConvention, to: WorldConvention) -> LocalFrame {
    if from == to {
        return *f;
    }
    let v = |u: &UnitVector| UnitVector::new_unchecked(convert_vector(u.into_inner(), from, to));
    LocalFrame {
        origin: convert_convention(f.origin, from, to),
        superior: v(&f.superior),
        posterior: v(&f.posterior),
        lateral: v(&f.lateral),
    }
}
