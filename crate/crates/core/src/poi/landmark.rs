use std::fmt;
use std::str::FromStr;

macro_rules! landmarks {
    ($($variant:ident),+ $(,)?) => {
        /// Every landmark the extractor can produce. Declaration order is the
        /// canonical iteration and serialization order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum LandmarkName {
            $($variant),+
        }

        impl LandmarkName {
            pub const ALL: &'static [LandmarkName] = &[$(LandmarkName::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(LandmarkName::$variant => stringify!($variant)),+
                }
            }
        }
    };
}

landmarks! {
    SpinosusTip,
    CostalTipLeft,
    CostalTipRight,
    SupArticularTipLeft,
    SupArticularTipRight,
    InfArticularTipLeft,
    InfArticularTipRight,
    CorpusSup,
    CorpusInf,
    CorpusAnt,
    CorpusPost,
    CorpusLeft,
    CorpusRight,
    CornerSupAnt,
    CornerSupPost,
    CornerInfAnt,
    CornerInfPost,
    FlavumSup,
    FlavumInf,
    CorpusSupShiftedLeft,
    CorpusInfShiftedLeft,
    CorpusAntShiftedLeft,
    CorpusPostShiftedLeft,
    CornerSupAntShiftedLeft,
    CornerSupPostShiftedLeft,
    CornerInfAntShiftedLeft,
    CornerInfPostShiftedLeft,
    CorpusSupShiftedRight,
    CorpusInfShiftedRight,
    CorpusAntShiftedRight,
    CorpusPostShiftedRight,
    CornerSupAntShiftedRight,
    CornerSupPostShiftedRight,
    CornerInfAntShiftedRight,
    CornerInfPostShiftedRight,
}

/// Side of a laterally shifted landmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Sign along the frame's lateral axis (which points right).
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// The four vertebral body corners in the mid-sagittal plane.
pub const CORNERS: [LandmarkName; 4] = [
    LandmarkName::CornerSupAnt,
    LandmarkName::CornerSupPost,
    LandmarkName::CornerInfAnt,
    LandmarkName::CornerInfPost,
];

impl LandmarkName {
    pub fn is_corner(self) -> bool {
        self.as_str().starts_with("Corner")
    }

    pub fn is_shifted(self) -> bool {
        self.as_str().contains("Shifted")
    }

    /// Signs `(superior, posterior)` of a corner search, or `None` for other landmarks.
    pub fn corner_signs(self) -> Option<(f64, f64)> {
        let s = self.as_str();
        if !s.starts_with("Corner") {
            return None;
        }
        let sup = if s.starts_with("CornerSup") { 1.0 } else { -1.0 };
        let post = if s[9..].starts_with("Post") { 1.0 } else { -1.0 };
        Some((sup, post))
    }

    /// Shifted counterpart of a midline corner or in-plane cardinal point.
    pub fn shifted(self, side: Side) -> Option<LandmarkName> {
        use LandmarkName::*;
        let out = match (self, side) {
            (CorpusSup, Side::Left) => CorpusSupShiftedLeft,
            (CorpusInf, Side::Left) => CorpusInfShiftedLeft,
            (CorpusAnt, Side::Left) => CorpusAntShiftedLeft,
            (CorpusPost, Side::Left) => CorpusPostShiftedLeft,
            (CornerSupAnt, Side::Left) => CornerSupAntShiftedLeft,
            (CornerSupPost, Side::Left) => CornerSupPostShiftedLeft,
            (CornerInfAnt, Side::Left) => CornerInfAntShiftedLeft,
            (CornerInfPost, Side::Left) => CornerInfPostShiftedLeft,
            (CorpusSup, Side::Right) => CorpusSupShiftedRight,
            (CorpusInf, Side::Right) => CorpusInfShiftedRight,
            (CorpusAnt, Side::Right) => CorpusAntShiftedRight,
            (CorpusPost, Side::Right) => CorpusPostShiftedRight,
            (CornerSupAnt, Side::Right) => CornerSupAntShiftedRight,
            (CornerSupPost, Side::Right) => CornerSupPostShiftedRight,
            (CornerInfAnt, Side::Right) => CornerInfAntShiftedRight,
            (CornerInfPost, Side::Right) => CornerInfPostShiftedRight,
            _ => return None,
        };
        Some(out)
    }

    /// Left/right counterpart, if the landmark comes in a mirrored pair.
    pub fn mirrored(self) -> Option<LandmarkName> {
        let s = self.as_str();
        let swapped = if let Some(stem) = s.strip_suffix("Left") {
            format!("{stem}Right")
        } else {
            format!("{}Left", s.strip_suffix("Right")?)
        };
        swapped.parse().ok()
    }
}

impl fmt::Display for LandmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandmarkName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LandmarkName::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown landmark '{s}'"))
    }
}
