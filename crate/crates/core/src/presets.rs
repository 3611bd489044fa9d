//! Named initial data with `x = 0`, `x̄ = e₁` and opposite velocities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::PhasePoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Relative velocity along the line of centres.
    HeadOn,
    /// Incoming at an angle of about 11° to the line of centres.
    Oblique,
    /// Tangential relative velocity.
    Grazing,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::HeadOn, Preset::Oblique, Preset::Grazing];

    pub fn name(self) -> &'static str {
        match self {
            Preset::HeadOn => "head_on",
            Preset::Oblique => "oblique",
            Preset::Grazing => "grazing",
        }
    }

    pub fn datum(self) -> PhasePoint {
        let v = match self {
            Preset::HeadOn => [0.5, 0.0, 0.0],
            Preset::Oblique => [0.2, 0.04, 0.0],
            Preset::Grazing => [0.0, 0.2, 0.0],
        };
        PhasePoint::from_arrays([0.0; 3], [1.0, 0.0, 0.0], v, [-v[0], -v[1], -v[2]])
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset '{s}' (expected head_on, oblique or grazing)"))
    }
}
