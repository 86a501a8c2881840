use crate::tag::Tag;

/// Sanity bound for surface current speed components (m/s).
pub const MAX_SPEED: f64 = 10.0;

/// One matched sextuple of velocity samples with time/position metadata.
///
/// Velocities are stored as (u, v) component pairs in m/s, indexed by
/// [`Tag`]. Time is epoch seconds (UTC), position in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocationRecord {
    pub time: f64,
    pub lat: f64,
    pub lon: f64,
    /// (u, v) per tag, ordered I, N, F, E, R, S.
    pub vel: [(f64, f64); 6],
}

impl CollocationRecord {
    pub fn u(&self, tag: Tag) -> f64 {
        self.vel[tag.index()].0
    }

    pub fn v(&self, tag: Tag) -> f64 {
        self.vel[tag.index()].1
    }

    /// Drifter speed, used for speed-bin subsetting.
    pub fn speed(&self) -> f64 {
        let (u, v) = self.vel[Tag::I.index()];
        u.hypot(v)
    }

    /// Checks the ingest invariants: finite velocities below the sanity
    /// bound and position within range.
    pub fn is_valid(&self) -> bool {
        let pos_ok = self.time.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..360.0).contains(&self.lon);
        pos_ok
            && self.vel.iter().all(|&(u, v)| {
                u.is_finite() && v.is_finite() && u.abs() < MAX_SPEED && v.abs() < MAX_SPEED
            })
    }

    /// Flattens the sextuple into the 12-dimensional real vector
    /// (u_I, v_I, u_N, v_N, ..., u_S, v_S) used for outlier trimming.
    pub fn as_vector(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (k, &(u, v)) in self.vel.iter().enumerate() {
            out[2 * k] = u;
            out[2 * k + 1] = v;
        }
        out
    }
}
