use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(AgentId);
id_type!(NodeId);
id_type!(LinkId);
id_type!(
    /// Zones share their index with the road node at their centroid in the toy city.
    ZoneId
);
id_type!(StopId);
id_type!(LineId);

/// Industry code as used in the non-WFH table (NAICS-derived grouping).
pub type IndustryId = u32;

/// Industry id reserved for persons without employment.
pub const NOT_WORKING: IndustryId = 1;

/// Clock time in seconds from midnight.
pub type Seconds = u32;

pub fn format_clock(t: Seconds) -> String {
    format!("{:02}:{:02}:{:02}", t / 3600, (t / 60) % 60, t % 60)
}

pub fn parse_clock(s: &str) -> Option<Seconds> {
    let mut parts = s.trim().split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let sec: u32 = match parts.next() {
        Some(p) => p.parse().ok()?,
        None => 0,
    };
    if parts.next().is_some() || m >= 60 || sec >= 60 {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    /// Dense centre (Manhattan analog).
    Core,
    Periphery,
}

impl Segment {
    pub const ALL: [Segment; 2] = [Segment::Core, Segment::Periphery];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Core => "core",
            Segment::Periphery => "periphery",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "core" | "manhattan" => Ok(Segment::Core),
            "periphery" | "non-manhattan" => Ok(Segment::Periphery),
            other => Err(Error::Validation(format!("unknown segment '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Car,
    Carpool,
    Transit,
    Taxi,
    Bike,
    Walk,
    Citibike,
    Fhv,
}

impl Mode {
    pub const COUNT: usize = 8;
    pub const ALL: [Mode; Mode::COUNT] = [
        Mode::Car,
        Mode::Carpool,
        Mode::Transit,
        Mode::Taxi,
        Mode::Bike,
        Mode::Walk,
        Mode::Citibike,
        Mode::Fhv,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Car => "car",
            Mode::Carpool => "carpool",
            Mode::Transit => "transit",
            Mode::Taxi => "taxi",
            Mode::Bike => "bike",
            Mode::Walk => "walk",
            Mode::Citibike => "citibike",
            Mode::Fhv => "fhv",
        }
    }

    /// Modes that put a vehicle on the road network.
    pub fn uses_road(self) -> bool {
        matches!(self, Mode::Car | Mode::Carpool | Mode::Taxi | Mode::Fhv)
    }

    /// Modes moved at a fixed speed along the beeline distance.
    pub fn is_teleported(self) -> bool {
        matches!(self, Mode::Walk | Mode::Bike | Mode::Citibike)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .or(match key.as_str() {
                "citi bike" | "citi_bike" => Some(Mode::Citibike),
                "driving" => Some(Mode::Car),
                _ => None,
            })
            .ok_or_else(|| Error::Validation(format!("unknown mode '{key}'")))
    }
}

/// Per-mode storage indexed by [`Mode::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerMode<T>(pub [T; Mode::COUNT]);

impl<T> std::ops::Index<Mode> for PerMode<T> {
    type Output = T;
    fn index(&self, m: Mode) -> &T {
        &self.0[m.index()]
    }
}

impl<T> std::ops::IndexMut<Mode> for PerMode<T> {
    fn index_mut(&mut self, m: Mode) -> &mut T {
        &mut self.0[m.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "preCOVID")]
    PreCovid,
    #[serde(rename = "COVID")]
    Covid,
    #[serde(rename = "P1")]
    Phase1,
    #[serde(rename = "P2")]
    Phase2,
    #[serde(rename = "P3")]
    Phase3,
    #[serde(rename = "P4")]
    Phase4,
}

impl Phase {
    /// Phases carried by the non-WFH table, in table column order.
    pub const TABLE_PHASES: [Phase; 5] = [
        Phase::Covid,
        Phase::Phase1,
        Phase::Phase2,
        Phase::Phase3,
        Phase::Phase4,
    ];

    pub fn table_column(self) -> Option<usize> {
        match self {
            Phase::PreCovid => None,
            Phase::Covid => Some(0),
            Phase::Phase1 => Some(1),
            Phase::Phase2 => Some(2),
            Phase::Phase3 => Some(3),
            Phase::Phase4 => Some(4),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreCovid => "preCOVID",
            Phase::Covid => "COVID",
            Phase::Phase1 => "P1",
            Phase::Phase2 => "P2",
            Phase::Phase3 => "P3",
            Phase::Phase4 => "P4",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "precovid" | "pre-covid" => Ok(Phase::PreCovid),
            "covid" => Ok(Phase::Covid),
            "p1" | "phase1" => Ok(Phase::Phase1),
            "p2" | "phase2" => Ok(Phase::Phase2),
            "p3" | "phase3" => Ok(Phase::Phase3),
            "p4" | "phase4" => Ok(Phase::Phase4),
            other => Err(Error::Validation(format!("unknown phase '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_round_trip() {
        assert_eq!(parse_clock("08:05:00"), Some(8 * 3600 + 300));
        assert_eq!(parse_clock("25:00:00"), Some(25 * 3600));
        assert_eq!(parse_clock("08:61:00"), None);
        assert_eq!(format_clock(29_520), "08:12:00");
    }

    #[test]
    fn mode_names_parse() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("hovercraft".parse::<Mode>().is_err());
    }
}
