//! Vertebra built from analytic primitives in local coordinates
//! `(x, y, z) = (lateral, posterior, superior)` with the corpus center at the
//! origin.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anatomy::SubregionLabel;
use crate::error::{Error, Result};
use crate::grid::Vec3;
use crate::poi::LandmarkName;

/// Geometry of one phantom vertebra. All lengths in mm, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VertebraParams {
    /// Corpus half extents (lateral, anterior-posterior, superior-inferior).
    pub corpus_half_mm: [f64; 3],
    /// Edge rounding of the corpus cuboid.
    pub corpus_radius_mm: f64,
    pub canal_half_width_mm: f64,
    /// Anterior-posterior depth of the canal, from the corpus back face to the lamina.
    pub canal_depth_mm: f64,
    /// Thickness of the pedicles and the lamina.
    pub arcus_wall_mm: f64,
    pub arcus_half_height_mm: f64,
    /// Tilts the arcus top face: its height grows by `x * tan(skew)`.
    pub arcus_skew_deg: f64,
    pub spinosus_length_mm: f64,
    pub spinosus_radius_mm: f64,
    /// Rotation of the spinous process about the posterior axis.
    pub spinosus_deflection_deg: f64,
    /// Costal process lengths (left, right).
    pub costal_length_mm: [f64; 2],
    pub costal_radius_mm: f64,
    pub articular_radius_mm: f64,
    /// Height of the superior articular tips above the corpus center.
    pub sap_tip_mm: f64,
    /// Depth of the inferior articular tips below the corpus center.
    pub iap_tip_mm: f64,
    /// Subregions left out of the rasterization.
    pub omit: Vec<SubregionLabel>,
}

impl Default for VertebraParams {
    fn default() -> Self {
        Self {
            corpus_half_mm: [20.0, 15.0, 12.0],
            corpus_radius_mm: 1.0,
            canal_half_width_mm: 8.0,
            canal_depth_mm: 14.0,
            arcus_wall_mm: 5.0,
            arcus_half_height_mm: 13.0,
            arcus_skew_deg: 0.0,
            spinosus_length_mm: 18.0,
            spinosus_radius_mm: 3.0,
            spinosus_deflection_deg: 0.0,
            costal_length_mm: [18.0, 18.0],
            costal_radius_mm: 2.5,
            articular_radius_mm: 2.0,
            sap_tip_mm: 17.0,
            iap_tip_mm: 17.0,
            omit: Vec::new(),
        }
    }
}

/// Segment with a radius: all points within `radius` of `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    pub fn contains(&self, p: &Vec3) -> bool {
        let ab = self.b - self.a;
        let t = ((p - self.a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        (p - (self.a + ab * t)).norm_squared() <= self.radius * self.radius
    }

    /// Surface point farthest along the axis beyond `b`.
    pub fn apex(&self) -> Vec3 {
        self.b + (self.b - self.a).normalize() * self.radius
    }

    pub fn volume(&self) -> f64 {
        let r = self.radius;
        std::f64::consts::PI * r * r * (self.b - self.a).norm() + 4.0 / 3.0 * std::f64::consts::PI * r * r * r
    }
}

impl VertebraParams {
    pub fn validate(&self, min_voxel: f64) -> Result<()> {
        let positive = [
            ("corpus half extent", self.corpus_half_mm.iter().cloned().fold(f64::INFINITY, f64::min)),
            ("canal half width", self.canal_half_width_mm),
            ("canal depth", self.canal_depth_mm),
            ("arcus wall", self.arcus_wall_mm),
            ("arcus half height", self.arcus_half_height_mm),
            ("spinosus length", self.spinosus_length_mm),
            ("spinosus radius", self.spinosus_radius_mm),
            ("costal radius", self.costal_radius_mm),
            ("articular radius", self.articular_radius_mm),
        ];
        for (what, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::PhantomDegenerate(format!("{what} must be positive, got {v}")));
            }
        }
        if self.costal_length_mm.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::PhantomDegenerate("costal lengths must be non-negative".into()));
        }
        let has_costal = self.costal_length_mm.iter().any(|&l| l > 0.0);
        let rods = [(true, self.spinosus_radius_mm), (has_costal, self.costal_radius_mm), (true, self.articular_radius_mm)];
        let smallest = self
            .corpus_half_mm
            .iter()
            .map(|h| 2.0 * h)
            .chain([self.arcus_wall_mm, 2.0 * self.arcus_half_height_mm])
            .chain(rods.iter().filter(|r| r.0).map(|r| 2.0 * r.1))
            .fold(f64::INFINITY, f64::min);
        if smallest < min_voxel {
            return Err(Error::PhantomDegenerate(format!(
                "extent {smallest} mm is below one voxel ({min_voxel} mm)"
            )));
        }
        let r = self.corpus_radius_mm;
        if !(r >= 0.0) || self.corpus_half_mm.iter().any(|&h| r >= h) {
            return Err(Error::PhantomDegenerate("corpus rounding must be below every half extent".into()));
        }
        if self.arcus_skew_deg.abs() >= 60.0 || self.spinosus_deflection_deg.abs() >= 60.0 {
            return Err(Error::PhantomDegenerate("asymmetry angles must stay below 60 degrees".into()));
        }
        if self.sap_tip_mm <= self.arcus_half_height_mm - 2.0 + self.articular_radius_mm
            || self.iap_tip_mm <= self.arcus_half_height_mm - 2.0 + self.articular_radius_mm
        {
            return Err(Error::PhantomDegenerate("articular tips must rise above the arcus".into()));
        }
        Ok(())
    }

    fn has(&self, s: SubregionLabel) -> bool {
        !self.omit.contains(&s)
    }

    fn canal_front(&self) -> f64 {
        self.corpus_half_mm[1]
    }

    fn lamina_front(&self) -> f64 {
        self.canal_front() + self.canal_depth_mm
    }

    fn outer_half_width(&self) -> f64 {
        self.canal_half_width_mm + self.arcus_wall_mm
    }

    /// Lateral position of the articular columns.
    fn articular_x(&self) -> f64 {
        self.canal_half_width_mm + 0.5 * self.arcus_wall_mm
    }

    fn articular_y(&self) -> f64 {
        self.canal_front() + 0.75 * self.canal_depth_mm
    }

    pub fn spinosus(&self) -> Capsule {
        let start = Vec3::new(0.0, self.lamina_front() + 0.5 * self.arcus_wall_mm, 0.3 * self.arcus_half_height_mm);
        let (s, c) = self.spinosus_deflection_deg.to_radians().sin_cos();
        // normalize(0, 0.2, -1) rotated about the posterior axis.
        let base = Vec3::new(0.0, 0.2, -1.0).normalize();
        let dir = Vec3::new(-base.z * s, base.y, base.z * c);
        Capsule { a: start, b: start + dir * self.spinosus_length_mm, radius: self.spinosus_radius_mm }
    }

    /// Costal process on `side` (-1 left, +1 right), or `None` for zero length.
    pub fn costal(&self, side: f64) -> Option<Capsule> {
        let len = self.costal_length_mm[if side < 0.0 { 0 } else { 1 }];
        if len <= 0.0 {
            return None;
        }
        let start = Vec3::new(side * (self.outer_half_width() - 1.0), self.canal_front() + 0.5 * self.canal_depth_mm, 0.0);
        let dir = Vec3::new(side, 1.0, 0.0).normalize();
        Some(Capsule { a: start, b: start + dir * len, radius: self.costal_radius_mm })
    }

    pub fn sap(&self, side: f64) -> Capsule {
        let (x, y, r) = (side * self.articular_x(), self.articular_y(), self.articular_radius_mm);
        Capsule { a: Vec3::new(x, y, self.arcus_half_height_mm - 2.0), b: Vec3::new(x, y, self.sap_tip_mm - r), radius: r }
    }

    pub fn iap(&self, side: f64) -> Capsule {
        let (x, y, r) = (side * self.articular_x(), self.articular_y(), self.articular_radius_mm);
        Capsule { a: Vec3::new(x, y, -(self.arcus_half_height_mm - 2.0)), b: Vec3::new(x, y, -(self.iap_tip_mm - r)), radius: r }
    }

    fn in_corpus(&self, p: &Vec3) -> bool {
        let r = self.corpus_radius_mm;
        let q = Vec3::new(
            p.x.abs() - (self.corpus_half_mm[0] - r),
            p.y.abs() - (self.corpus_half_mm[1] - r),
            p.z.abs() - (self.corpus_half_mm[2] - r),
        );
        q.map(|v| v.max(0.0)).norm_squared() <= r * r && q.max() <= r
    }

    fn in_arcus(&self, p: &Vec3) -> bool {
        let top = self.arcus_half_height_mm + p.x * self.arcus_skew_deg.to_radians().tan();
        if p.z < -self.arcus_half_height_mm || p.z > top {
            return false;
        }
        let (ax, w_in, w_out) = (p.x.abs(), self.canal_half_width_mm, self.outer_half_width());
        let pedicle = ax >= w_in && ax <= w_out && p.y >= self.canal_front() && p.y <= self.lamina_front();
        let lamina = ax <= w_out && p.y >= self.lamina_front() && p.y <= self.lamina_front() + self.arcus_wall_mm;
        pedicle || lamina
    }

    /// Subregion at local point `p`. The corpus wins over processes, which
    /// win over the arcus they grow out of.
    pub fn classify(&self, p: &Vec3) -> Option<SubregionLabel> {
        use SubregionLabel::*;
        if self.has(Corpus) && self.in_corpus(p) {
            return Some(Corpus);
        }
        if self.has(Spinosus) && self.spinosus().contains(p) {
            return Some(Spinosus);
        }
        for (side, costal, sap, iap) in [(-1.0, CostalLeft, SupArticularLeft, InfArticularLeft), (1.0, CostalRight, SupArticularRight, InfArticularRight)] {
            if self.has(costal) && self.costal(side).is_some_and(|c| c.contains(p)) {
                return Some(costal);
            }
            if self.has(sap) && self.sap(side).contains(p) {
                return Some(sap);
            }
            if self.has(iap) && self.iap(side).contains(p) {
                return Some(iap);
            }
        }
        if self.has(Arcus) && self.in_arcus(p) {
            return Some(Arcus);
        }
        None
    }

    /// Local axis-aligned box containing every primitive.
    pub fn local_bounds(&self) -> (Vec3, Vec3) {
        let h = self.corpus_half_mm;
        let mut lo = Vec3::new(-h[0], -h[1], -h[2]);
        let mut hi = Vec3::new(h[0], h[1], h[2]);
        let w = self.outer_half_width();
        let skew = self.arcus_skew_deg.to_radians().tan().abs() * w;
        let mut grow = |p: Vec3, r: f64| {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a] - r);
                hi[a] = hi[a].max(p[a] + r);
            }
        };
        grow(Vec3::new(w, self.lamina_front() + self.arcus_wall_mm, self.arcus_half_height_mm + skew), 0.0);
        grow(Vec3::new(-w, self.canal_front(), -self.arcus_half_height_mm), 0.0);
        let mut caps = vec![self.spinosus(), self.sap(-1.0), self.sap(1.0), self.iap(-1.0), self.iap(1.0)];
        caps.extend(self.costal(-1.0));
        caps.extend(self.costal(1.0));
        for c in caps {
            grow(c.a, c.radius);
            grow(c.b, c.radius);
        }
        (lo, hi)
    }

    /// Analytic volume of the rounded corpus cuboid.
    pub fn corpus_volume(&self) -> f64 {
        let r = self.corpus_radius_mm;
        let [a, b, c] = self.corpus_half_mm.map(|h| h - r);
        let pi = std::f64::consts::PI;
        8.0 * a * b * c + 8.0 * r * (a * b + b * c + a * c) + 2.0 * pi * r * r * (a + b + c) + 4.0 / 3.0 * pi * r * r * r
    }

    /// Mid-sagittal corner of the corpus section on the rounding arc, at 45
    /// degrees between the two faces.
    fn corner(&self, sup: f64, post: f64, x: f64) -> Vec3 {
        let r = self.corpus_radius_mm;
        let inset = r - r * std::f64::consts::FRAC_1_SQRT_2;
        Vec3::new(x, post * (self.corpus_half_mm[1] - inset), sup * (self.corpus_half_mm[2] - inset))
    }

    /// Distance between the superior articular column axes.
    pub fn sap_distance(&self) -> f64 {
        2.0 * self.articular_x()
    }

    /// Analytic landmarks in local coordinates. Shifted landmarks use the
    /// lateral offset `shift` (skipped when `None` or outside the flat part of
    /// the corpus).
    pub fn local_landmarks(&self, shift: Option<f64>) -> BTreeMap<LandmarkName, Vec3> {
        use LandmarkName::*;
        use SubregionLabel as S;
        let mut m = BTreeMap::new();
        let h = self.corpus_half_mm;
        if self.has(S::Spinosus) {
            m.insert(SpinosusTip, self.spinosus().apex());
        }
        for (side, costal, sap, iap, n_costal, n_sap, n_iap) in [
            (-1.0, S::CostalLeft, S::SupArticularLeft, S::InfArticularLeft, CostalTipLeft, SupArticularTipLeft, InfArticularTipLeft),
            (1.0, S::CostalRight, S::SupArticularRight, S::InfArticularRight, CostalTipRight, SupArticularTipRight, InfArticularTipRight),
        ] {
            if let (true, Some(c)) = (self.has(costal), self.costal(side)) {
                m.insert(n_costal, c.apex());
            }
            if self.has(sap) {
                m.insert(n_sap, self.sap(side).apex());
            }
            if self.has(iap) {
                m.insert(n_iap, self.iap(side).apex());
            }
        }
        if !self.has(S::Corpus) {
            return m;
        }
        m.insert(CorpusSup, Vec3::new(0.0, 0.0, h[2]));
        m.insert(CorpusInf, Vec3::new(0.0, 0.0, -h[2]));
        m.insert(CorpusAnt, Vec3::new(0.0, -h[1], 0.0));
        m.insert(CorpusPost, Vec3::new(0.0, h[1], 0.0));
        m.insert(CorpusLeft, Vec3::new(-h[0], 0.0, 0.0));
        m.insert(CorpusRight, Vec3::new(h[0], 0.0, 0.0));
        for corner in crate::poi::CORNERS {
            let (sup, post) = corner.corner_signs().expect("corner");
            m.insert(corner, self.corner(sup, post, 0.0));
        }
        if self.has(S::Arcus) {
            let y = self.lamina_front();
            m.insert(FlavumSup, Vec3::new(0.0, y, self.corner(1.0, 1.0, 0.0).z));
            m.insert(FlavumInf, Vec3::new(0.0, y, self.corner(-1.0, 1.0, 0.0).z));
        }
        if let Some(s) = shift.filter(|&s| s > 0.0 && s < h[0] - self.corpus_radius_mm) {
            for side in [crate::poi::Side::Left, crate::poi::Side::Right] {
                let x = side.sign() * s;
                for corner in crate::poi::CORNERS {
                    let (sup, post) = corner.corner_signs().expect("corner");
                    m.insert(corner.shifted(side).expect("shiftable"), self.corner(sup, post, x));
                }
                m.insert(CorpusSup.shifted(side).expect("shiftable"), Vec3::new(x, 0.0, h[2]));
                m.insert(CorpusInf.shifted(side).expect("shiftable"), Vec3::new(x, 0.0, -h[2]));
                m.insert(CorpusAnt.shifted(side).expect("shiftable"), Vec3::new(x, -h[1], 0.0));
                m.insert(CorpusPost.shifted(side).expect("shiftable"), Vec3::new(x, h[1], 0.0));
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_symmetric() {
        let p = VertebraParams::default();
        p.validate(1.0).unwrap();
        for pt in [Vec3::new(5.0, 20.0, 3.0), Vec3::new(11.0, 25.0, 14.0), Vec3::new(16.0, 30.0, 0.0)] {
            let mirrored = Vec3::new(-pt.x, pt.y, pt.z);
            let (a, b) = (p.classify(&pt), p.classify(&mirrored));
            assert_eq!(a.is_some(), b.is_some());
        }
        assert_eq!(p.classify(&Vec3::zeros()), Some(SubregionLabel::Corpus));
        assert_eq!(p.classify(&Vec3::new(0.0, 20.0, 0.0)), None); // canal
        assert_eq!(p.classify(&Vec3::new(0.0, 31.0, 10.0)), Some(SubregionLabel::Arcus)); // lamina
    }

    #[test]
    fn landmarks_lie_on_their_primitives() {
        let p = VertebraParams::default();
        let m = p.local_landmarks(Some(7.0));
        assert_eq!(m.len(), LandmarkName::ALL.len());
        // Tips are on the capsule surfaces: just inside along the axis, just outside beyond.
        let eps = 1e-6;
        for (name, cap) in [
            (LandmarkName::SpinosusTip, p.spinosus()),
            (LandmarkName::CostalTipLeft, p.costal(-1.0).unwrap()),
            (LandmarkName::SupArticularTipRight, p.sap(1.0)),
            (LandmarkName::InfArticularTipLeft, p.iap(-1.0)),
        ] {
            let axis = (cap.b - cap.a).normalize();
            let tip = m[&name];
            assert!(cap.contains(&(tip - axis * eps)), "{name}");
            assert!(!cap.contains(&(tip + axis * eps)), "{name}");
        }
        // Corners on the rounded section.
        let c = m[&LandmarkName::CornerSupPost];
        assert!(p.in_corpus(&(c * (1.0 - 1e-9))));
        assert!(!p.in_corpus(&(c * (1.0 + 1e-6))));
    }

    #[test]
    fn omitted_subregions_vanish() {
        let p = VertebraParams { omit: vec![SubregionLabel::Arcus, SubregionLabel::CostalLeft], ..Default::default() };
        assert_eq!(p.classify(&Vec3::new(0.0, 31.0, 10.0)), None);
        let m = p.local_landmarks(None);
        assert!(!m.contains_key(&LandmarkName::FlavumSup));
        assert!(!m.contains_key(&LandmarkName::CostalTipLeft));
        assert!(m.contains_key(&LandmarkName::CostalTipRight));
    }

    #[test]
    fn degenerate_extents_rejected() {
        let p = VertebraParams { corpus_half_mm: [0.2, 15.0, 12.0], corpus_radius_mm: 0.1, ..Default::default() };
        assert!(matches!(p.validate(1.0), Err(Error::PhantomDegenerate(_))));
        let p = VertebraParams { arcus_wall_mm: 0.5, ..Default::default() };
        assert!(p.validate(1.0).is_err());
        assert!(p.validate(0.4).is_ok());
    }

    #[test]
    fn rounded_box_volume_formula() {
        // r = 0 reduces to the cuboid; full rounding of a cube is a sphere.
        let p = VertebraParams { corpus_radius_mm: 0.0, corpus_half_mm: [2.0, 3.0, 4.0], ..Default::default() };
        assert!((p.corpus_volume() - 192.0).abs() < 1e-12);
        let p = VertebraParams { corpus_radius_mm: 2.0 - 1e-12, corpus_half_mm: [2.0; 3], ..Default::default() };
        assert!((p.corpus_volume() - 4.0 / 3.0 * std::f64::consts::PI * 8.0).abs() < 1e-9);
    }
}
