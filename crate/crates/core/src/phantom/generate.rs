use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix4, Rotation3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anatomy::{level_to_vid, vid_to_level, LabelDictionary, SubregionLabel};
use crate::error::{Error, Result};
use crate::grid::{convert_convention, convert_vector, AffineFrame, LabelVolume, UnitVector, Vec3, WorldConvention, WorldPoint};
use crate::orientation::LocalFrame;
use crate::poi::{shift_factor, CoordinateSpace, LandmarkName, PoiSet};

use super::geometry::VertebraParams;

/// Rigid pose: rotations about the local lateral, posterior and superior axes
/// (applied in that order) followed by a translation. Angles are right-handed
/// about each axis' world direction; the local basis itself is left-handed in
/// RAS, so composing in local coordinates would flip every sign.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pose {
    pub rotation_deg: [f64; 3],
    pub translation_mm: [f64; 3],
}

impl Pose {
    /// World rotation about the world axes.
    pub fn rotation(&self) -> Matrix3<f64> {
        self.rotation_about(&Matrix3::identity())
    }

    /// World rotation about the three unit columns of `axes`.
    pub fn rotation_about(&self, axes: &Matrix3<f64>) -> Matrix3<f64> {
        let [a, b, c] = self.rotation_deg.map(f64::to_radians);
        let about = |i: usize, angle: f64| Rotation3::from_axis_angle(&UnitVector::new_normalize(axes.column(i).into_owned()), angle);
        *(about(2, c) * about(1, b) * about(0, a)).matrix()
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::from(self.translation_mm)
    }
}

/// How array axes map onto world axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridLayout {
    /// Array axes `(i, j, k)` along world `(x, y, z)`.
    #[default]
    Axial,
    /// Array axes along world `(y, z, x)`: slices are sagittal, so the third
    /// spacing is the left-right one.
    Sagittal,
}

/// Voxel grid the phantom is rasterized on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Spacing per array axis.
    pub spacing_mm: [f64; 3],
    pub layout: GridLayout,
    /// Space left around the phantom.
    pub margin_mm: f64,
    /// Put the world origin on a voxel corner (true) or on a voxel center.
    pub origin_on_corner: bool,
    pub convention: WorldConvention,
    /// Extra rigid transform applied to the grid after rasterization, i.e.
    /// composed into the affine. Moves volume and truth together.
    pub world_transform: Option<[[f64; 4]; 4]>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            spacing_mm: [1.0; 3],
            layout: GridLayout::Axial,
            margin_mm: 6.0,
            origin_on_corner: true,
            convention: WorldConvention::Ras,
            world_transform: None,
        }
    }
}

impl GridSpec {
    pub fn isotropic(h: f64) -> Self {
        Self { spacing_mm: [h; 3], ..Default::default() }
    }

    /// World axis of each array axis.
    fn world_axes(&self) -> [usize; 3] {
        match self.layout {
            GridLayout::Axial => [0, 1, 2],
            GridLayout::Sagittal => [1, 2, 0],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.spacing_mm.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::PhantomDegenerate("grid spacing must be positive".into()));
        }
        if !(self.margin_mm >= 0.0) {
            return Err(Error::PhantomDegenerate("grid margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// One level of a phantom spine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub level: String,
    #[serde(default)]
    pub params: VertebraParams,
    /// Pose relative to the level's slot on the centerline.
    #[serde(default)]
    pub pose: Pose,
}

/// Ranges for seeded random asymmetry; each level draws uniformly from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Jitter {
    pub arcus_skew_deg: f64,
    pub spinosus_deflection_deg: f64,
    /// Relative costal length difference, right = left * (1 + u), |u| <= this.
    pub costal_asymmetry: f64,
    /// Axial rotation about the superior axis.
    pub axial_rotation_deg: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self { arcus_skew_deg: 0.0, spinosus_deflection_deg: 0.0, costal_asymmetry: 0.0, axial_rotation_deg: 0.0 }
    }
}

/// Complete description of a phantom spine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub levels: Vec<LevelSpec>,
    /// Total change of the centerline tangent over the spine, in the coronal plane.
    #[serde(default)]
    pub curvature_deg: f64,
    /// Centerline arc length between consecutive corpus centers.
    #[serde(default = "default_pitch")]
    pub pitch_mm: f64,
    #[serde(default)]
    pub grid: GridSpec,
    /// Rigid pose of the whole spine.
    #[serde(default)]
    pub pose: Pose,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jitter: Option<Jitter>,
}

fn default_pitch() -> f64 {
    36.0
}

impl PhantomSpec {
    /// Straight spine of default vertebrae for the given level names.
    pub fn straight(levels: &[&str]) -> Self {
        Self {
            levels: levels.iter().map(|l| LevelSpec { level: l.to_string(), params: VertebraParams::default(), pose: Pose::default() }).collect(),
            curvature_deg: 0.0,
            pitch_mm: default_pitch(),
            grid: GridSpec::default(),
            pose: Pose::default(),
            seed: 0,
            jitter: None,
        }
    }

    /// Single-level spec.
    pub fn single(level: &str, params: VertebraParams) -> Self {
        let mut s = Self::straight(&[level]);
        s.levels[0].params = params;
        s
    }

    /// The 24 presacral levels C1 to L5 on a gently curved centerline,
    /// rasterized like a clinical sagittal MR series: 0.8 mm in plane, 3.3 mm
    /// slices left to right. Mild seeded asymmetry.
    pub fn full_spine() -> Self {
        let levels: Vec<String> = (1..=24).filter_map(vid_to_level).collect();
        let names: Vec<&str> = levels.iter().map(String::as_str).collect();
        let mut s = Self::straight(&names);
        s.curvature_deg = 15.0;
        s.grid = GridSpec { spacing_mm: [0.8, 0.8, 3.3], layout: GridLayout::Sagittal, margin_mm: 4.0, ..GridSpec::default() };
        s.seed = 24;
        s.jitter = Some(Jitter { arcus_skew_deg: 5.0, spinosus_deflection_deg: 3.0, costal_asymmetry: 0.2, axial_rotation_deg: 4.0 });
        s
    }
}

/// Ground truth of one phantom vertebra.
#[derive(Debug, Clone, PartialEq)]
pub struct VertebraTruth {
    pub v_id: u32,
    pub level: String,
    pub frame: LocalFrame,
    /// Cranio-caudal (downward) tangent of the centerline at this level.
    pub tangent: UnitVector,
    /// Final geometry after jitter.
    pub params: VertebraParams,
    pub landmarks: BTreeMap<LandmarkName, WorldPoint>,
}

/// Ground truth of a phantom spine, cranial to caudal.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    pub convention: WorldConvention,
    pub vertebrae: Vec<VertebraTruth>,
}

impl PhantomTruth {
    pub fn by_vid(&self, v_id: u32) -> Option<&VertebraTruth> {
        self.vertebrae.iter().find(|v| v.v_id == v_id)
    }

    /// Truth landmarks and frames as a landmark set.
    pub fn to_poi_set(&self) -> PoiSet {
        let mut s = PoiSet::new(CoordinateSpace::World(self.convention));
        for v in &self.vertebrae {
            s.set_level(v.v_id, v.level.clone());
            s.set_frame(v.v_id, v.frame);
            for (&n, &p) in &v.landmarks {
                s.insert(v.v_id, n, p).expect("truth landmarks are unique");
            }
        }
        s
    }
}

/// A level after jitter, with its world placement (RAS, before the grid transform).
struct Placed {
    v_id: u32,
    level: String,
    params: VertebraParams,
    rotation: Matrix3<f64>,
    center: Vec3,
    tangent: Vec3,
}

fn apply_jitter(params: &mut VertebraParams, pose: &mut Pose, j: &Jitter, rng: &mut ChaCha8Rng) {
    let mut draw = |m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
    params.arcus_skew_deg += draw(j.arcus_skew_deg);
    params.spinosus_deflection_deg += draw(j.spinosus_deflection_deg);
    let u = draw(j.costal_asymmetry);
    params.costal_length_mm[1] = params.costal_length_mm[0] * (1.0 + u);
    pose.rotation_deg[2] += draw(j.axial_rotation_deg);
}

/// Centers and downward tangents on a coronal circular arc through the
/// origin, cranial level first.
pub fn arc_centerline(n: usize, pitch: f64, curvature_deg: f64) -> Vec<(Vec3, Vec3)> {
    let total = curvature_deg.to_radians();
    let mid = (n as f64 - 1.0) / 2.0;
    if n < 2 || total.abs() < 1e-12 {
        return (0..n).map(|i| (Vec3::new(0.0, 0.0, -(i as f64 - mid) * pitch), -Vec3::z())).collect();
    }
    let dphi = total / (n as f64 - 1.0);
    let radius = pitch / dphi;
    let phi = |i: f64| -total / 2.0 + i * dphi;
    // p(phi) - p(0) = R (1 - cos phi, 0, -sin phi); dp/dphi = R (sin phi, 0, -cos phi).
    (0..n)
        .map(|i| {
            let f = phi(i as f64);
            let p = Vec3::new(radius * (1.0 - f.cos()), 0.0, -radius * f.sin());
            (p, Vec3::new(f.sin(), 0.0, -f.cos()))
        })
        .collect()
}

fn place(spec: &PhantomSpec) -> Result<Vec<Placed>> {
    if spec.levels.is_empty() {
        return Err(Error::PhantomDegenerate("no levels".into()));
    }
    if !(spec.pitch_mm > 0.0) {
        return Err(Error::PhantomDegenerate("pitch must be positive".into()));
    }
    let min_voxel = spec.grid.spacing_mm.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let line = arc_centerline(spec.levels.len(), spec.pitch_mm, spec.curvature_deg);
    let global = spec.pose.rotation();
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(spec.levels.len());
    for (i, (lvl, (p, d))) in spec.levels.iter().zip(line).enumerate() {
        let v_id = level_to_vid(&lvl.level).ok_or_else(|| Error::PhantomDegenerate(format!("unknown level '{}'", lvl.level)))?;
        if !seen.insert(v_id) {
            return Err(Error::PhantomDegenerate(format!("level {} listed twice", lvl.level)));
        }
        let (mut params, mut pose) = (lvl.params.clone(), lvl.pose);
        if let Some(j) = &spec.jitter {
            apply_jitter(&mut params, &mut pose, j, &mut rng);
        }
        params.validate(min_voxel).map_err(|e| Error::PhantomDegenerate(format!("{} (level {i}): {e}", lvl.level)))?;
        // Slot frame: superior along -tangent, posterior = -y (RAS).
        let sup = -d;
        let post = Vec3::new(0.0, -1.0, 0.0);
        let lat = sup.cross(&post);
        let slot = Matrix3::from_columns(&[lat, post, sup]);
        let rotation = global * pose.rotation_about(&slot) * slot;
        let center = global * (p + slot * pose.translation()) + spec.pose.translation();
        out.push(Placed { v_id, level: lvl.level.clone(), params, rotation, center, tangent: global * d });
    }
    Ok(out)
}

/// Grid frame covering all placed vertebrae, in RAS before the extra transform.
fn grid_frame(spec: &PhantomSpec, placed: &[Placed]) -> Result<([usize; 3], Matrix4<f64>)> {
    let g = &spec.grid;
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for v in placed {
        let (l, h) = v.params.local_bounds();
        for c in 0..8 {
            let corner = Vec3::new(if c & 1 == 0 { l.x } else { h.x }, if c & 2 == 0 { l.y } else { h.y }, if c & 4 == 0 { l.z } else { h.z });
            let w = v.center + v.rotation * corner;
            lo = lo.inf(&w);
            hi = hi.sup(&w);
        }
    }
    lo -= Vec3::repeat(g.margin_mm);
    hi += Vec3::repeat(g.margin_mm);
    let axes = g.world_axes();
    let shift = if g.origin_on_corner { 0.5 } else { 0.0 };
    let mut dims = [0usize; 3];
    let mut m = Matrix4::identity();
    for a in 0..3 {
        // f32-representable spacing so the grid survives a NIfTI round trip exactly.
        let h = g.spacing_mm[a] as f32 as f64;
        let w = axes[a];
        let first = (lo[w] / h - shift).floor();
        let last = (hi[w] / h - shift).ceil();
        dims[a] = (last - first) as usize + 1;
        for r in 0..4 {
            m[(r, a)] = 0.0;
        }
        m[(w, a)] = h;
        m[(w, 3)] = ((first + shift) * h) as f32 as f64;
    }
    let n: usize = dims.iter().product();
    if n > 400_000_000 {
        return Err(Error::PhantomDegenerate(format!("grid of {n} voxels is too large")));
    }
    Ok((dims, m))
}

/// Voxels of one vertebra as `(linear index, label)`, in index order.
fn rasterize(v: &Placed, dims: [usize; 3], m: &Matrix4<f64>) -> Vec<(usize, u32)> {
    let inv = m.try_inverse().expect("grid affine is diagonal up to permutation");
    let (l, h) = v.params.local_bounds();
    let mut ilo = [i64::MAX; 3];
    let mut ihi = [i64::MIN; 3];
    for c in 0..8 {
        let corner = Vec3::new(if c & 1 == 0 { l.x } else { h.x }, if c & 2 == 0 { l.y } else { h.y }, if c & 4 == 0 { l.z } else { h.z });
        let w = v.center + v.rotation * corner;
        let idx = inv * w.push(1.0);
        for a in 0..3 {
            ilo[a] = ilo[a].min(idx[a].floor() as i64);
            ihi[a] = ihi[a].max(idx[a].ceil() as i64);
        }
    }
    let rt = v.rotation.transpose();
    let mut out = Vec::new();
    let clamp = |a: usize, x: i64| x.clamp(0, dims[a] as i64 - 1) as usize;
    for k in clamp(2, ilo[2])..=clamp(2, ihi[2]) {
        for j in clamp(1, ilo[1])..=clamp(1, ihi[1]) {
            for i in clamp(0, ilo[0])..=clamp(0, ihi[0]) {
                let w = (m * nalgebra::Vector4::new(i as f64, j as f64, k as f64, 1.0)).xyz();
                let local = rt * (w - v.center);
                if (0..3).any(|a| local[a] < l[a] || local[a] > h[a]) {
                    continue;
                }
                if let Some(sub) = v.params.classify(&local) {
                    out.push((i + dims[0] * (j + dims[1] * k), LabelDictionary::spineps_code(&v.level, sub).expect("standard level")));
                }
            }
        }
    }
    out
}

/// Lateral shift the extractor uses with default settings on the analytic
/// geometry (divide mode).
fn analytic_shift(v_id: u32, params: &VertebraParams) -> Option<f64> {
    let has_sap = !params.omit.contains(&SubregionLabel::SupArticularLeft) && !params.omit.contains(&SubregionLabel::SupArticularRight);
    has_sap.then(|| params.sap_distance() / 3.0 / shift_factor(v_id))
}

/// Rasterizes a phantom spine. Vertebrae are placed on a coronal circular arc
/// whose tangent turns by `curvature_deg` in total, and labelled with
/// `100 * v_id + subregion` codes.
pub fn generate_spine(spec: &PhantomSpec) -> Result<(LabelVolume, PhantomTruth)> {
    spec.grid.validate()?;
    let placed = place(spec)?;
    let (dims, m) = grid_frame(spec, &placed)?;

    let parts: Vec<Vec<(usize, u32)>> = placed.par_iter().map(|v| rasterize(v, dims, &m)).collect();
    let mut labels = vec![0u32; dims.iter().product()];
    for (v, part) in placed.iter().zip(&parts) {
        if part.is_empty() {
            return Err(Error::PhantomDegenerate(format!("{} has no voxels on the grid", v.level)));
        }
        for &(idx, code) in part {
            if labels[idx] != 0 {
                return Err(Error::PhantomDegenerate(format!(
                    "{} overlaps a neighbouring vertebra (labels {} and {code})",
                    v.level, labels[idx]
                )));
            }
            labels[idx] = code;
        }
    }

    let world = match &spec.grid.world_transform {
        Some(t) => {
            let t = Matrix4::from_fn(|r, c| t[r][c]);
            if (t.fixed_view::<1, 4>(3, 0) - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).amax() > 1e-12 {
                return Err(Error::PhantomDegenerate("world transform must be affine".into()));
            }
            t
        }
        None => Matrix4::identity(),
    };
    let ras_frame = AffineFrame::new(world * m, WorldConvention::Ras)?;
    let conv = spec.grid.convention;
    let frame = ras_frame.with_convention(conv);
    let volume = LabelVolume::new(dims, labels, frame)?;

    let lin = world.fixed_view::<3, 3>(0, 0).into_owned();
    let off = world.fixed_view::<3, 1>(0, 3).into_owned();
    let to_world = |p: Vec3| convert_convention(WorldPoint::from(lin * p + off), WorldConvention::Ras, conv);
    let to_dir = |d: Vec3| UnitVector::new_normalize(convert_vector(lin * d, WorldConvention::Ras, conv));
    let vertebrae = placed
        .iter()
        .map(|v| {
            let axis = |c: usize| to_dir(v.rotation.column(c).into_owned());
            let frame = LocalFrame { origin: to_world(v.center), lateral: axis(0), posterior: axis(1), superior: axis(2) };
            let landmarks = v
                .params
                .local_landmarks(analytic_shift(v.v_id, &v.params))
                .into_iter()
                .map(|(n, l)| (n, to_world(v.center + v.rotation * l)))
                .collect();
            VertebraTruth { v_id: v.v_id, level: v.level.clone(), frame, tangent: to_dir(v.tangent), params: v.params.clone(), landmarks }
        })
        .collect();
    Ok((volume, PhantomTruth { convention: conv, vertebrae }))
}

/// Rasterizes a single vertebra.
pub fn generate_vertebra(level: &LevelSpec, grid: &GridSpec) -> Result<(LabelVolume, PhantomTruth)> {
    let spec = PhantomSpec {
        levels: vec![level.clone()],
        curvature_deg: 0.0,
        pitch_mm: default_pitch(),
        grid: grid.clone(),
        pose: Pose::default(),
        seed: 0,
        jitter: None,
    };
    generate_spine(&spec)
}
