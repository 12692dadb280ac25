//! Per-vertebra landmark extraction.
//!
//! Every function here appends to a [`PoiSet`] and records a skip instead of
//! failing, so one bad structure never takes down its neighbours.

use rayon::prelude::*;

use crate::anatomy::{SpineInstance, SubregionLabel, VertebraInstance};
use crate::error::Result;
use crate::grid::{LabelSet, LabelVolume, Vec3, WorldPoint, INSIDE_THRESHOLD};
use crate::orientation::{estimate_frame, LocalFrame, OrientationMethod};

use super::config::{ExtractionConfig, RayConfig, ShiftMode};
use super::landmark::{LandmarkName, Side, CORNERS};
use super::search::{bisect_1d, corner_bisection_2d, first_inside_along, raycast_surface_point};
use super::set::{CoordinateSpace, PoiSet};

/// Skip reason for landmarks whose subregion has no voxels.
pub const REASON_EMPTY: &str = "empty subregion";
/// Skip reason for shifted landmarks whose offset origin misses the corpus.
pub const REASON_OFFSET_OUTSIDE: &str = "offset outside corpus";
/// Longest march used to recover an inside start for the flavum search.
pub const FLAVUM_RECOVERY_MM: f64 = 10.0;

/// Everything the per-vertebra steps share.
pub struct VertebraContext<'a> {
    pub vol: &'a LabelVolume,
    pub vertebra: &'a VertebraInstance,
    pub frame: LocalFrame,
    /// Ray settings with the travel limit already resolved.
    pub ray: RayConfig,
    pub cfg: ExtractionConfig,
}

impl<'a> VertebraContext<'a> {
    pub fn new(vol: &'a LabelVolume, vertebra: &'a VertebraInstance, frame: LocalFrame, cfg: &ExtractionConfig) -> Self {
        let mut ray = cfg.ray;
        if ray.max_travel_mm.is_none() {
            ray.max_travel_mm = Some(vertebra_diagonal(vol, vertebra) + 2.0 * vol.max_spacing());
        }
        Self { vol, vertebra, frame, ray, cfg: *cfg }
    }

    fn v_id(&self) -> u32 {
        self.vertebra.v_id
    }

    fn set(&self, sub: SubregionLabel) -> LabelSet {
        self.vertebra.label_set(&[sub])
    }

    fn corpus(&self) -> LabelSet {
        self.set(SubregionLabel::Corpus)
    }
}

/// Longest diagonal of the voxel-index bounding box of a vertebra, in mm.
fn vertebra_diagonal(vol: &LabelVolume, vertebra: &VertebraInstance) -> f64 {
    let [nx, ny, _] = vol.dims();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for sub in SubregionLabel::ALL {
        for &idx in vertebra.voxels(sub) {
            let idx = idx as usize;
            let ijk = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
            for a in 0..3 {
                lo[a] = lo[a].min(ijk[a]);
                hi[a] = hi[a].max(ijk[a]);
            }
        }
    }
    if lo[0] == usize::MAX {
        return 0.0;
    }
    let f = vol.frame();
    let corner = |sx: bool, sy: bool, sz: bool| {
        let pick = |a: usize, s: bool| if s { hi[a] as f64 + 0.5 } else { lo[a] as f64 - 0.5 };
        f.voxel_to_world([pick(0, sx), pick(1, sy), pick(2, sz)])
    };
    [(false, false, false), (true, false, false), (false, true, false), (false, false, true)]
        .iter()
        .map(|&(x, y, z)| (corner(!x, !y, !z) - corner(x, y, z)).norm())
        .fold(0.0, f64::max)
}

/// Spinous, costal and articular process tips by raycasting from each
/// process' center of mass.
pub fn process_tip_pois(ctx: &VertebraContext<'_>, out: &mut PoiSet) {
    let f = &ctx.frame;
    let (up, down, post) = (f.superior.into_inner(), f.inferior(), f.posterior.into_inner());
    let jobs = [
        (LandmarkName::SpinosusTip, SubregionLabel::Spinosus, down + post * 0.2),
        (LandmarkName::CostalTipLeft, SubregionLabel::CostalLeft, f.left() * 0.5 + post * 0.5),
        (LandmarkName::CostalTipRight, SubregionLabel::CostalRight, f.right() * 0.5 + post * 0.5),
        (LandmarkName::SupArticularTipLeft, SubregionLabel::SupArticularLeft, up),
        (LandmarkName::SupArticularTipRight, SubregionLabel::SupArticularRight, up),
        (LandmarkName::InfArticularTipLeft, SubregionLabel::InfArticularLeft, down),
        (LandmarkName::InfArticularTipRight, SubregionLabel::InfArticularRight, down),
    ];
    for (name, sub, dir) in jobs {
        let origin = match ctx.vertebra.centroid(ctx.vol, &[sub]) {
            Ok(c) => c,
            Err(_) => {
                out.skip(ctx.v_id(), name.as_str(), REASON_EMPTY);
                continue;
            }
        };
        record(out, ctx.v_id(), name, raycast_surface_point(ctx.vol, &ctx.set(sub), &origin, &dir, &ctx.ray, &ctx.cfg.bisection));
    }
}

fn record(out: &mut PoiSet, v_id: u32, name: LandmarkName, r: Result<WorldPoint>) {
    match r {
        Ok(p) => {
            // Names are unique per vertebra by construction.
            out.insert(v_id, name, p).expect("landmark inserted twice");
        }
        Err(e) => out.skip(v_id, name.as_str(), e.to_string()),
    }
}

/// Center of the corpus voxel nearest to `p`.
fn nearest_voxel(vol: &LabelVolume, voxels: &[u32], p: &WorldPoint) -> Option<WorldPoint> {
    let mut best: Option<(f64, WorldPoint)> = None;
    for &idx in voxels {
        let c = vol.voxel_center(idx as usize);
        let d = (c - p).norm_squared();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    best.map(|b| b.1)
}

/// Origin for corpus searches: the corpus center of mass, or the nearest
/// corpus voxel center when the center of mass falls outside the mask.
pub fn corpus_origin(ctx: &VertebraContext<'_>) -> Option<WorldPoint> {
    let cms = ctx.vertebra.corpus_cms();
    if ctx.vol.sample_occupancy(&ctx.corpus(), &cms) >= INSIDE_THRESHOLD {
        return Some(cms);
    }
    nearest_voxel(ctx.vol, ctx.vertebra.voxels(SubregionLabel::Corpus), &cms)
}

const CARDINAL: [LandmarkName; 6] = [
    LandmarkName::CorpusSup,
    LandmarkName::CorpusInf,
    LandmarkName::CorpusAnt,
    LandmarkName::CorpusPost,
    LandmarkName::CorpusLeft,
    LandmarkName::CorpusRight,
];

fn cardinal_direction(f: &LocalFrame, name: LandmarkName) -> Vec3 {
    match name {
        LandmarkName::CorpusSup => f.superior.into_inner(),
        LandmarkName::CorpusInf => f.inferior(),
        LandmarkName::CorpusAnt => f.anterior(),
        LandmarkName::CorpusPost => f.posterior.into_inner(),
        LandmarkName::CorpusLeft => f.left(),
        LandmarkName::CorpusRight => f.right(),
        _ => unreachable!("not a cardinal landmark"),
    }
}

/// Six corpus surface points along the frame axes.
pub fn corpus_cardinal_pois(ctx: &VertebraContext<'_>, out: &mut PoiSet) {
    let Some(origin) = corpus_origin(ctx) else {
        for name in CARDINAL {
            out.skip(ctx.v_id(), name.as_str(), REASON_EMPTY);
        }
        return;
    };
    let set = ctx.corpus();
    for name in CARDINAL {
        let dir = cardinal_direction(&ctx.frame, name);
        record(out, ctx.v_id(), name, raycast_surface_point(ctx.vol, &set, &origin, &dir, &ctx.ray, &ctx.cfg.bisection));
    }
}

fn corners_from(ctx: &VertebraContext<'_>, start: &WorldPoint, side: Option<Side>, out: &mut PoiSet) {
    let set = ctx.corpus();
    for corner in CORNERS {
        let (s_sup, s_post) = corner.corner_signs().expect("corner");
        let name = side.map_or(corner, |s| corner.shifted(s).expect("corner has shifted variants"));
        let r = corner_bisection_2d(ctx.vol, &set, start, &ctx.frame.superior, &ctx.frame.posterior, s_sup, s_post, &ctx.cfg.bisection);
        record(out, ctx.v_id(), name, r);
    }
}

/// Four mid-sagittal corpus corners by 2D bisection from the corpus center.
pub fn corpus_corners(ctx: &VertebraContext<'_>, out: &mut PoiSet) {
    match corpus_origin(ctx) {
        Some(origin) => corners_from(ctx, &origin, None, out),
        None => {
            for name in CORNERS {
                out.skip(ctx.v_id(), name.as_str(), REASON_EMPTY);
            }
        }
    }
}

/// Ligamentum flavum attachments on the anterior surface of the arch, in the
/// axial planes of the posterior corners.
pub fn flavum_points(ctx: &VertebraContext<'_>, out: &mut PoiSet) {
    let pairs = [(LandmarkName::FlavumSup, LandmarkName::CornerSupPost), (LandmarkName::FlavumInf, LandmarkName::CornerInfPost)];
    let Ok(arcus_cms) = ctx.vertebra.centroid(ctx.vol, &[SubregionLabel::Arcus]) else {
        for (name, _) in pairs {
            out.skip(ctx.v_id(), name.as_str(), REASON_EMPTY);
        }
        return;
    };
    let arcus = ctx.set(SubregionLabel::Arcus);
    let up = ctx.frame.superior.into_inner();
    let post = ctx.frame.posterior.into_inner();
    for (name, corner) in pairs {
        let Some(c) = out.get(ctx.v_id(), corner) else {
            out.skip(ctx.v_id(), name.as_str(), format!("{corner} unavailable"));
            continue;
        };
        let start = arcus_cms - up * (arcus_cms - c).dot(&up);
        let Some(start) = first_inside_along(ctx.vol, &arcus, &start, &post, ctx.ray.march_step_mm, FLAVUM_RECOVERY_MM) else {
            out.skip(ctx.v_id(), name.as_str(), format!("no arcus within {FLAVUM_RECOVERY_MM} mm behind the projected start"));
            continue;
        };
        record(out, ctx.v_id(), name, bisect_1d(ctx.vol, &arcus, &start, &-post, &ctx.cfg.bisection));
    }
}

/// Vertebra-dependent factor: `(12 - v_id) / 11 + 1` up to T4, 1 below.
pub fn shift_factor(v_id: u32) -> f64 {
    if v_id <= 11 {
        (12.0 - v_id as f64) / 11.0 + 1.0
    } else {
        1.0
    }
}

/// Lateral offset for the shifted landmarks, in mm.
///
/// One third of the distance between the superior articular process centers,
/// rescaled by [`shift_factor`]. Without both articular processes the corpus
/// width from the cardinal points is used instead (one sixth of it).
pub fn lateral_shift_mm(ctx: &VertebraContext<'_>, out: &mut PoiSet) -> Option<f64> {
    let sap_l = ctx.vertebra.centroid(ctx.vol, &[SubregionLabel::SupArticularLeft]);
    let sap_r = ctx.vertebra.centroid(ctx.vol, &[SubregionLabel::SupArticularRight]);
    let base = match (sap_l, sap_r) {
        (Ok(l), Ok(r)) => (l - r).norm() / 3.0,
        _ => {
            let (l, r) = (out.get(ctx.v_id(), LandmarkName::CorpusLeft)?, out.get(ctx.v_id(), LandmarkName::CorpusRight)?);
            out.note(ctx.v_id(), "superior articular process missing; lateral shift taken from corpus width");
            return Some((l - r).norm() / 6.0);
        }
    };
    let f = shift_factor(ctx.v_id());
    Some(match ctx.cfg.shift_mode {
        ShiftMode::Divide => base / f,
        ShiftMode::Multiply => base * f,
    })
}

const SHIFTED_CARDINAL: [LandmarkName; 4] = [LandmarkName::CorpusSup, LandmarkName::CorpusInf, LandmarkName::CorpusAnt, LandmarkName::CorpusPost];

/// Corners and in-plane cardinal points repeated in the parasagittal planes
/// `shift` mm to either side of the corpus center.
pub fn shifted_pois(ctx: &VertebraContext<'_>, shift: f64, out: &mut PoiSet) {
    let set = ctx.corpus();
    let cms = ctx.vertebra.corpus_cms();
    let lateral = ctx.frame.lateral.into_inner();
    for side in [Side::Left, Side::Right] {
        let names: Vec<LandmarkName> = CORNERS.iter().chain(SHIFTED_CARDINAL.iter()).map(|n| n.shifted(side).expect("shiftable")).collect();
        if !(shift > 0.0) {
            for n in &names {
                out.skip(ctx.v_id(), n.as_str(), "no lateral shift available");
            }
            continue;
        }
        let o = cms + lateral * (side.sign() * shift);
        let back = -lateral * side.sign();
        let pull = ctx.vol.max_spacing().min(shift);
        let Some(start) = first_inside_along(ctx.vol, &set, &o, &back, ctx.ray.march_step_mm, pull) else {
            for n in &names {
                out.skip(ctx.v_id(), n.as_str(), REASON_OFFSET_OUTSIDE);
            }
            continue;
        };
        if start != o {
            out.note(ctx.v_id(), format!("{} offset origin pulled {:.3} mm toward the midline", side.as_str(), (start - o).norm()));
        }
        corners_from(ctx, &start, Some(side), out);
        for base in SHIFTED_CARDINAL {
            let dir = cardinal_direction(&ctx.frame, base);
            record(out, ctx.v_id(), base.shifted(side).expect("shiftable"), bisect_1d(ctx.vol, &set, &start, &dir, &ctx.cfg.bisection));
        }
    }
}

/// All landmarks of one vertebra given its frame.
pub fn extract_vertebra(ctx: &VertebraContext<'_>, out: &mut PoiSet) {
    out.set_frame(ctx.v_id(), ctx.frame);
    if let Some(p) = corpus_origin(ctx).filter(|p| *p != ctx.vertebra.corpus_cms()) {
        out.note(
            ctx.v_id(),
            format!("corpus center of mass outside the corpus; searches start at ({:.3}, {:.3}, {:.3})", p.x, p.y, p.z),
        );
    }
    process_tip_pois(ctx, out);
    corpus_cardinal_pois(ctx, out);
    corpus_corners(ctx, out);
    flavum_points(ctx, out);
    match lateral_shift_mm(ctx, out) {
        Some(shift) => shifted_pois(ctx, shift, out),
        None => shifted_pois(ctx, 0.0, out),
    }
}

/// Frame of vertebra `k`, falling back to the all-posterior center of mass
/// when the chosen method cannot produce one.
fn frame_with_fallback(spine: &SpineInstance, k: usize, method: OrientationMethod, out: &mut PoiSet) -> Result<LocalFrame> {
    let v_id = spine.vertebrae()[k].v_id;
    match estimate_frame(spine, k, method) {
        Ok(f) => Ok(f),
        Err(e) if method != OrientationMethod::Cms3dAllPosterior => {
            let f = estimate_frame(spine, k, OrientationMethod::Cms3dAllPosterior)?;
            out.note(v_id, format!("orientation fell back to {}: {e}", OrientationMethod::Cms3dAllPosterior));
            Ok(f)
        }
        Err(e) => Err(e),
    }
}

/// Frames and landmarks for every vertebra of `spine`.
///
/// Vertebrae are processed in parallel on the current rayon pool; the result
/// does not depend on the thread count. Per-vertebra failures become skips.
pub fn extract_all(spine: &SpineInstance, cfg: &ExtractionConfig) -> Result<PoiSet> {
    let vol = spine.volume();
    cfg.bisection.validate()?;
    cfg.ray.validate(vol.min_spacing())?;
    let space = CoordinateSpace::World(vol.convention());

    let parts: Vec<PoiSet> = (0..spine.len())
        .into_par_iter()
        .map(|k| {
            let v = &spine.vertebrae()[k];
            let mut part = PoiSet::new(space.clone());
            part.set_level(v.v_id, v.level.clone());
            match frame_with_fallback(spine, k, cfg.method, &mut part) {
                Ok(frame) => extract_vertebra(&VertebraContext::new(vol, v, frame, cfg), &mut part),
                Err(e) => part.skip(v.v_id, "frame", e.to_string()),
            }
            part
        })
        .collect();

    let mut all = PoiSet::new(space);
    for w in spine.warnings() {
        log::warn!("{w}");
    }
    for part in parts {
        all.merge(part)?;
    }
    Ok(all)
}
