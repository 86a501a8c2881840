use std::fmt;

/// Dataset tags for one collocation sextuple: the in situ reference and the
/// five analysis samples around it (nowcast, forecast/revcast one day out,
/// extended forecast/revcast two days out).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    /// In situ (drifter) sample, the calibration reference.
    I,
    /// Analysis nowcast at the collocation time.
    N,
    /// Analysis sample one day before.
    F,
    /// Analysis sample two days before.
    E,
    /// Analysis sample one day after.
    R,
    /// Analysis sample two days after.
    S,
}

pub const TAGS: [Tag; 6] = [Tag::I, Tag::N, Tag::F, Tag::E, Tag::R, Tag::S];

/// The five calibrated datasets (everything but the reference).
pub const CALIBRATED: [Tag; 5] = [Tag::N, Tag::F, Tag::E, Tag::R, Tag::S];

impl Tag {
    pub fn index(self) -> usize {
        match self {
            Tag::I => 0,
            Tag::N => 1,
            Tag::F => 2,
            Tag::E => 3,
            Tag::R => 4,
            Tag::S => 5,
        }
    }

    pub fn from_index(i: usize) -> Tag {
        TAGS[i]
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tag::I => "I",
            Tag::N => "N",
            Tag::F => "F",
            Tag::E => "E",
            Tag::R => "R",
            Tag::S => "S",
        };
        f.write_str(s)
    }
}
