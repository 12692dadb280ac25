//! Voxel grids, voxel/world transforms and sub-voxel mask sampling.
//!
//! A [`LabelVolume`] is an immutable dense grid of integer labels with an
//! [`AffineFrame`] mapping continuous voxel indices to world millimetres.
//! Voxel `(i, j, k)` has its center at continuous index `(i, j, k)`; the
//! first index varies fastest in memory, as in NIfTI.
//!
//! Masks are queried through [`LabelVolume::sample_occupancy`], the trilinear
//! interpolation of the binary indicator of a [`LabelSet`]. The 0.5 level set
//! of that field is the sub-voxel surface every landmark search converges to.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Point3, Unit, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
/// A point in world millimetres. The convention it is expressed in is carried
/// by the owning container (volume frame or landmark set).
pub type WorldPoint = Point3<f64>;
pub type UnitVector = Unit<Vector3<f64>>;

/// Occupancy at or above this value counts as inside a mask: one half, less a
/// small allowance. Points exactly on a voxel face have occupancy exactly 0.5
/// on axis-aligned grids; without the allowance, rounding in a rotated affine
/// would flip them outside and break rigid-motion equivariance.
pub const INSIDE_THRESHOLD: f64 = 0.5 - 1e-9;

/// World coordinate convention. NIfTI world space is RAS, ITK and the 3D
/// Slicer file formats use LPS. Both share the superior `+z` axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WorldConvention {
    #[serde(rename = "RAS")]
    Ras,
    #[serde(rename = "LPS")]
    Lps,
}

impl WorldConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            WorldConvention::Ras => "RAS",
            WorldConvention::Lps => "LPS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RAS" => Some(WorldConvention::Ras),
            "LPS" => Some(WorldConvention::Lps),
            _ => None,
        }
    }
}

impl fmt::Display for WorldConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Re-expresses `p` from one convention in another: identity when they are
/// equal, otherwise the first two coordinates change sign.
pub fn convert_convention(p: WorldPoint, from: WorldConvention, to: WorldConvention) -> WorldPoint {
    if from == to {
        p
    } else {
        WorldPoint::new(-p.x, -p.y, p.z)
    }
}

/// Same as [`convert_convention`] for free vectors (directions, offsets).
pub fn convert_vector(v: Vec3, from: WorldConvention, to: WorldConvention) -> Vec3 {
    if from == to {
        v
    } else {
        Vec3::new(-v.x, -v.y, v.z)
    }
}

/// Homogeneous voxel-index to world-mm transform with its cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFrame {
    matrix: Matrix4<f64>,
    inverse: Matrix4<f64>,
    convention: WorldConvention,
}

impl AffineFrame {
    pub fn new(matrix: Matrix4<f64>, convention: WorldConvention) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFrame("non-finite matrix entry".into()));
        }
        let last = matrix.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidFrame(format!(
                "last row must be (0, 0, 0, 1), got ({}, {}, {}, {})",
                last[0], last[1], last[2], last[3]
            )));
        }
        let linear: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let det = linear.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidFrame("singular linear part".into()));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or_else(|| Error::InvalidFrame("matrix is not invertible".into()))?;
        Ok(Self { matrix, inverse, convention })
    }

    pub fn identity(convention: WorldConvention) -> Self {
        Self {
            matrix: Matrix4::identity(),
            inverse: Matrix4::identity(),
            convention,
        }
    }

    /// Axis-aligned grid with the given spacing and the world position of voxel `(0, 0, 0)`.
    pub fn from_spacing(spacing: [f64; 3], origin: [f64; 3], convention: WorldConvention) -> Result<Self> {
        let mut m = Matrix4::identity();
        for a in 0..3 {
            m[(a, a)] = spacing[a];
            m[(a, 3)] = origin[a];
        }
        Self::new(m, convention)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix4<f64> {
        &self.inverse
    }

    pub fn convention(&self) -> WorldConvention {
        self.convention
    }

    pub fn linear(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Voxel spacing along each index axis (column norms of the linear part).
    pub fn spacing(&self) -> [f64; 3] {
        let l = self.linear();
        [l.column(0).norm(), l.column(1).norm(), l.column(2).norm()]
    }

    pub fn voxel_to_world(&self, p: [f64; 3]) -> WorldPoint {
        let h = self.matrix * Vector4::new(p[0], p[1], p[2], 1.0);
        WorldPoint::new(h.x, h.y, h.z)
    }

    pub fn world_to_voxel(&self, p: &WorldPoint) -> [f64; 3] {
        let h = self.inverse * Vector4::new(p.x, p.y, p.z, 1.0);
        [h.x, h.y, h.z]
    }

    /// The same grid expressed in another world convention.
    pub fn with_convention(&self, to: WorldConvention) -> AffineFrame {
        if to == self.convention {
            return self.clone();
        }
        let mut m = self.matrix;
        for c in 0..4 {
            m[(0, c)] = -m[(0, c)];
            m[(1, c)] = -m[(1, c)];
        }
        AffineFrame::new(m, to).expect("sign flip keeps the frame valid")
    }

    /// Row-major 16 entries.
    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.matrix[(r, c)];
            }
        }
        out
    }

    pub fn from_row_major(values: &[f64], convention: WorldConvention) -> Result<Self> {
        if values.len() != 16 {
            return Err(Error::InvalidFrame(format!("expected 16 entries, got {}", values.len())));
        }
        Self::new(Matrix4::from_row_slice(values), convention)
    }
}

/// A small set of label codes defining one binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LabelSet(Vec<u32>);

impl LabelSet {
    pub fn new(codes: impl IntoIterator<Item = u32>) -> Self {
        let mut v: Vec<u32> = codes.into_iter().filter(|&c| c != 0).collect();
        v.sort_unstable();
        v.dedup();
        LabelSet(v)
    }

    pub fn single(code: u32) -> Self {
        Self::new([code])
    }

    #[inline]
    pub fn contains(&self, code: u32) -> bool {
        code != 0 && self.0.contains(&code)
    }

    pub fn codes(&self) -> &[u32] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        LabelSet::new(self.0.iter().chain(other.0.iter()).copied())
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// Immutable dense label grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    labels: Vec<u32>,
    frame: AffineFrame,
}

impl LabelVolume {
    pub fn new(dims: [usize; 3], labels: Vec<u32>, frame: AffineFrame) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!("dimensions must be positive, got {dims:?}")));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::InvalidVolume("dimension product overflows".into()))?;
        if labels.len() != n {
            return Err(Error::InvalidVolume(format!(
                "label array has {} entries, dimensions {dims:?} need {n}",
                labels.len()
            )));
        }
        Ok(Self { dims, labels, frame })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn frame(&self) -> &AffineFrame {
        &self.frame
    }

    pub fn convention(&self) -> WorldConvention {
        self.frame.convention
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn index_to_ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Label at an integer index; 0 outside the grid.
    #[inline]
    pub fn label_at(&self, i: i64, j: i64, k: i64) -> u32 {
        if i < 0 || j < 0 || k < 0 {
            return 0;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return 0;
        }
        self.labels[self.linear_index(i, j, k)]
    }

    pub fn voxel_center(&self, idx: usize) -> WorldPoint {
        let [i, j, k] = self.index_to_ijk(idx);
        self.frame.voxel_to_world([i as f64, j as f64, k as f64])
    }

    pub fn min_spacing(&self) -> f64 {
        self.frame.spacing().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.frame.spacing().into_iter().fold(0.0, f64::max)
    }

    /// Trilinear interpolation of the indicator of `set` at a world point.
    /// Voxels outside the grid count as empty.
    pub fn sample_occupancy(&self, set: &LabelSet, p: &WorldPoint) -> f64 {
        self.occupancy_at_index(set, self.frame.world_to_voxel(p))
    }

    /// Trilinear occupancy at a continuous voxel index.
    pub fn occupancy_at_index(&self, set: &LabelSet, v: [f64; 3]) -> f64 {
        if v.iter().any(|c| !c.is_finite()) {
            return 0.0;
        }
        let base = [v[0].floor(), v[1].floor(), v[2].floor()];
        let t = [v[0] - base[0], v[1] - base[1], v[2] - base[2]];
        let (i0, j0, k0) = (base[0] as i64, base[1] as i64, base[2] as i64);
        let mut acc = 0.0;
        for dk in 0..2 {
            let wk = if dk == 0 { 1.0 - t[2] } else { t[2] };
            if wk == 0.0 {
                continue;
            }
            for dj in 0..2 {
                let wj = if dj == 0 { 1.0 - t[1] } else { t[1] };
                if wj == 0.0 {
                    continue;
                }
                for di in 0..2 {
                    let wi = if di == 0 { 1.0 - t[0] } else { t[0] };
                    if wi == 0.0 {
                        continue;
                    }
                    if set.contains(self.label_at(i0 + di, j0 + dj, k0 + dk)) {
                        acc += wi * wj * wk;
                    }
                }
            }
        }
        acc
    }

    pub fn is_inside(&self, set: &LabelSet, p: &WorldPoint) -> bool {
        self.sample_occupancy(set, p) >= INSIDE_THRESHOLD
    }

    /// Distinct nonzero labels present, ascending.
    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = Vec::new();
        let mut last = 0u32;
        for &l in &self.labels {
            if l != 0 && l != last {
                last = l;
                if let Err(pos) = seen.binary_search(&l) {
                    seen.insert(pos, l);
                }
            }
        }
        seen
    }

    /// A copy of this volume under a different voxel-to-world affine.
    pub fn with_frame(&self, frame: AffineFrame) -> LabelVolume {
        LabelVolume { dims: self.dims, labels: self.labels.clone(), frame }
    }
}
