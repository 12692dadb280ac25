use std::collections::BTreeSet;
use std::sync::Arc;

use log::warn;
use nalgebra::{Matrix3, SymmetricEigen};

use super::dictionary::LabelDictionary;
use super::spline::{craniocaudal_axis, fit_centerline, CenterlineSpline};
use super::{level_to_vid, SubregionLabel};
use crate::error::{Error, Result};
use crate::grid::{LabelSet, LabelVolume, UnitVector, Vec3, WorldPoint};

/// Unweighted mean of the world positions of all voxels whose label is in `set`.
pub fn center_of_mass(vol: &LabelVolume, set: &LabelSet) -> Result<WorldPoint> {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    let [nx, ny, _] = vol.dims();
    for (idx, &l) in vol.labels().iter().enumerate() {
        if set.contains(l) {
            sum[0] += (idx % nx) as f64;
            sum[1] += ((idx / nx) % ny) as f64;
            sum[2] += (idx / (nx * ny)) as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptySubregion(format!("no voxels carry labels {set}")));
    }
    let n = count as f64;
    Ok(vol.frame().voxel_to_world([sum[0] / n, sum[1] / n, sum[2] / n]))
}

/// Mean world position of the listed linear voxel indices, or `None` when empty.
pub fn centroid_of_indices<'a>(vol: &LabelVolume, groups: impl IntoIterator<Item = &'a [u32]>) -> Option<WorldPoint> {
    let [nx, ny, _] = vol.dims();
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for group in groups {
        for &idx in group {
            let idx = idx as usize;
            sum[0] += (idx % nx) as f64;
            sum[1] += ((idx / nx) % ny) as f64;
            sum[2] += (idx / (nx * ny)) as f64;
            count += 1;
        }
    }
    (count > 0).then(|| {
        let n = count as f64;
        vol.frame().voxel_to_world([sum[0] / n, sum[1] / n, sum[2] / n])
    })
}

/// One vertebra: identity, subregion codes and the voxels of each subregion.
#[derive(Debug, Clone)]
pub struct VertebraInstance {
    pub v_id: u32,
    pub level: String,
    codes: [Option<u32>; 9],
    voxels: [Vec<u32>; 9],
    corpus_cms: WorldPoint,
}

impl VertebraInstance {
    pub fn code(&self, sub: SubregionLabel) -> Option<u32> {
        self.codes[sub.index()]
    }

    pub fn label_set(&self, subs: &[SubregionLabel]) -> LabelSet {
        LabelSet::new(subs.iter().filter_map(|&s| self.code(s)))
    }

    /// Linear indices of the voxels carrying `sub`, in memory order.
    pub fn voxels(&self, sub: SubregionLabel) -> &[u32] {
        &self.voxels[sub.index()]
    }

    pub fn is_empty(&self, sub: SubregionLabel) -> bool {
        self.voxels[sub.index()].is_empty()
    }

    pub fn voxel_count(&self, sub: SubregionLabel) -> usize {
        self.voxels[sub.index()].len()
    }

    pub fn corpus_cms(&self) -> WorldPoint {
        self.corpus_cms
    }

    /// Center of mass of the union of `subs`.
    pub fn centroid(&self, vol: &LabelVolume, subs: &[SubregionLabel]) -> Result<WorldPoint> {
        centroid_of_indices(vol, subs.iter().map(|s| self.voxels(*s))).ok_or_else(|| {
            let names: Vec<_> = subs.iter().map(|s| s.as_str()).collect();
            Error::EmptySubregion(format!("{}: {}", self.level, names.join(" + ")))
        })
    }
}

/// Vertebrae ordered cranial to caudal over a shared label volume.
#[derive(Debug, Clone)]
pub struct SpineInstance {
    volume: Arc<LabelVolume>,
    vertebrae: Vec<VertebraInstance>,
    centerline: Option<CenterlineSpline>,
    warnings: Vec<String>,
}

impl SpineInstance {
    pub fn volume(&self) -> &LabelVolume {
        &self.volume
    }

    pub fn shared_volume(&self) -> Arc<LabelVolume> {
        Arc::clone(&self.volume)
    }

    pub fn vertebrae(&self) -> &[VertebraInstance] {
        &self.vertebrae
    }

    pub fn len(&self) -> usize {
        self.vertebrae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertebrae.is_empty()
    }

    pub fn by_vid(&self, v_id: u32) -> Option<&VertebraInstance> {
        self.vertebrae.iter().find(|v| v.v_id == v_id)
    }

    pub fn centerline(&self) -> Option<&CenterlineSpline> {
        self.centerline.as_ref()
    }

    /// Assembly notes: excluded levels, axis fallbacks.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `(up, down)` at the position of vertebra `k` in cranio-caudal order.
    ///
    /// A single-vertebra spine has no centerline; its down direction is the
    /// voxel axis closest to world inferior.
    pub fn craniocaudal_axis(&self, k: usize) -> Result<(UnitVector, UnitVector)> {
        match &self.centerline {
            Some(s) => craniocaudal_axis(s, k),
            None => {
                let lin = self.volume.frame().linear();
                let col = (0..3)
                    .max_by(|&a, &b| lin.column(a).z.abs().total_cmp(&lin.column(b).z.abs()))
                    .unwrap();
                let mut d: Vec3 = lin.column(col).into_owned().normalize();
                if d.z > 0.0 {
                    d = -d;
                }
                let down = UnitVector::new_unchecked(d);
                Ok((-down, down))
            }
        }
    }
}

/// Groups the labelled voxels into vertebrae and orders them cranial to caudal.
pub fn assemble_spine(volume: Arc<LabelVolume>, dict: &LabelDictionary) -> Result<SpineInstance> {
    let reverse = dict.reverse();
    let nlev = dict.levels().len();
    let mut buckets: Vec<[Vec<u32>; 9]> = (0..nlev).map(|_| Default::default()).collect();
    let mut unknown = BTreeSet::new();

    if volume.len() > u32::MAX as usize {
        return Err(Error::InvalidVolume("volumes above 2^32 voxels are not supported".into()));
    }
    let mut cached: Option<(u32, Option<(usize, SubregionLabel)>)> = None;
    for (idx, &l) in volume.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let hit = match cached {
            Some((code, hit)) if code == l => hit,
            _ => {
                let hit = reverse.get(&l).copied();
                cached = Some((l, hit));
                hit
            }
        };
        match hit {
            Some((lev, sub)) => buckets[lev][sub.index()].push(idx as u32),
            None if dict.ignored().contains(&l) => {}
            None => {
                unknown.insert(l);
            }
        }
    }
    if !unknown.is_empty() {
        let listed: Vec<String> = unknown.iter().take(12).map(|c| c.to_string()).collect();
        return Err(Error::LabelDictionary(format!(
            "{} label code(s) in the volume are not declared: {}{}",
            unknown.len(),
            listed.join(", "),
            if unknown.len() > 12 { ", ..." } else { "" }
        )));
    }

    let mut warnings = Vec::new();
    let mut vertebrae = Vec::new();
    for (lev, voxels) in buckets.into_iter().enumerate() {
        let lc = &dict.levels()[lev];
        let corpus = &voxels[SubregionLabel::Corpus.index()];
        if corpus.is_empty() {
            if voxels.iter().any(|v| !v.is_empty()) {
                let msg = format!("{}: vertebral body is empty, level excluded", lc.level);
                warn!("{msg}");
                warnings.push(msg);
            }
            continue;
        }
        let corpus_cms = centroid_of_indices(&volume, [corpus.as_slice()]).expect("non-empty corpus");
        let mut codes = [None; 9];
        for s in SubregionLabel::ALL {
            codes[s.index()] = lc.codes.get(&s).copied();
        }
        vertebrae.push(VertebraInstance { v_id: 0, level: lc.level.clone(), codes, voxels, corpus_cms });
    }
    if vertebrae.is_empty() {
        return Err(Error::EmptySpine);
    }

    let axis = principal_direction(&vertebrae.iter().map(|v| v.corpus_cms).collect::<Vec<_>>());
    let origin = vertebrae[0].corpus_cms;
    vertebrae.sort_by(|a, b| {
        let pa = (a.corpus_cms - origin).dot(&axis);
        let pb = (b.corpus_cms - origin).dot(&axis);
        pa.total_cmp(&pb)
    });

    let declared: Option<Vec<u32>> = vertebrae.iter().map(|v| level_to_vid(&v.level)).collect();
    match declared {
        Some(ids) => {
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                let order: Vec<&str> = vertebrae.iter().map(|v| v.level.as_str()).collect();
                return Err(Error::LabelDictionary(format!(
                    "declared levels contradict the cranio-caudal order of the vertebral bodies: {}",
                    order.join(" -> ")
                )));
            }
            for (v, id) in vertebrae.iter_mut().zip(ids) {
                v.v_id = id;
            }
        }
        None => {
            for (i, v) in vertebrae.iter_mut().enumerate() {
                v.v_id = i as u32 + 1;
            }
        }
    }

    let centerline = if vertebrae.len() >= 2 {
        let pts: Vec<WorldPoint> = vertebrae.iter().map(|v| v.corpus_cms).collect();
        Some(fit_centerline(&pts)?)
    } else {
        let msg = format!(
            "{}: single vertebra, cranio-caudal axis taken from the volume axes",
            vertebrae[0].level
        );
        warn!("{msg}");
        warnings.push(msg);
        None
    };

    Ok(SpineInstance { volume, vertebrae, centerline, warnings })
}

/// Dominant direction of a point set, oriented toward world inferior.
fn principal_direction(points: &[WorldPoint]) -> Vec3 {
    let down = Vec3::new(0.0, 0.0, -1.0);
    if points.len() < 2 {
        return down;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imax();
    let mut axis: Vec3 = eig.eigenvectors.column(i).into_owned();
    if axis.dot(&down) < 0.0 {
        axis = -axis;
    }
    axis
}
