//! Physical constants and the planetary element table.
//!
//! The table stores `gm_over_c2 = ω²a³/c²` (meters) per body and derives the
//! mean angular frequency from it, so no period or day-length convention is
//! ever needed. The Sun's gravitational parameter is never formed from `G`
//! and a mass in kilograms; see [`crate::rcn_orbit::third_kepler`].

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Newton's constant as quoted alongside the table, m³ kg⁻¹ s⁻².
pub const GRAVITATIONAL_CONSTANT: f64 = 6.673e-11;
/// Index reserved for the Sun.
pub const SUN_INDEX: u32 = 10;

pub const MERCURY: u32 = 1;
pub const VENUS: u32 = 2;
pub const EARTH: u32 = 3;
pub const MARS: u32 = 4;
pub const JUPITER: u32 = 5;
pub const SATURN: u32 = 6;
pub const URANUS: u32 = 7;
pub const NEPTUNE: u32 = 8;
pub const PLUTO: u32 = 9;

#[derive(Debug, Error)]
pub enum EphemerisError {
    #[error("cannot read ephemeris file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ephemeris parse error: {0}")]
    Parse(String),
    #[error("body {body}: field `{field}` = {value} is invalid ({reason})")]
    InvalidField { body: String, field: &'static str, value: f64, reason: &'static str },
    #[error("body {body}: missing required field `{field}`")]
    MissingField { body: String, field: &'static str },
    #[error("duplicate body index {0}")]
    DuplicateIndex(u32),
    #[error("constants: `{field}` = {value} must be positive")]
    InvalidConstant { field: &'static str, value: f64 },
    #[error("unknown body `{0}`")]
    UnknownBody(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Speed of light, m/s.
    pub c: f64,
    /// Gravitational constant, m³ kg⁻¹ s⁻². Kept for reference and for the
    /// gravity coupling `K = −G` of the causal field.
    pub g: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants { c: SPEED_OF_LIGHT, g: GRAVITATIONAL_CONSTANT }
    }
}

/// Orbital elements and mass ratio of one body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanetElements {
    /// 1..=9 planets, 10 the Sun, ≥ 11 user-defined bodies.
    pub index: u32,
    pub name: String,
    /// Semi-major axis, m.
    pub a: f64,
    /// Eccentricity.
    pub e: f64,
    /// ω²a³/c², m.
    pub gm_over_c2: f64,
    /// Inclination of the orbit plane against the reference plane, rad.
    pub inclination: f64,
    /// Perihelion angle φ₀, rad.
    pub perihelion_angle: f64,
    /// Mass relative to the Sun.
    pub mass_ratio: f64,
}

impl PlanetElements {
    pub fn is_sun(&self) -> bool {
        self.index == SUN_INDEX
    }

    /// Mean angular frequency ω = c·sqrt(gm_over_c2 / a³), rad/s.
    pub fn angular_frequency(&self, c: f64) -> f64 {
        debug_assert!(self.a > 0.0, "angular frequency needs a > 0");
        c * (self.gm_over_c2 / self.a.powi(3)).sqrt()
    }

    /// Orbital period T = 2π/ω, s.
    pub fn period(&self, c: f64) -> f64 {
        2.0 * PI / self.angular_frequency(c)
    }

    /// The small parameter ω²a²/c² = gm_over_c2 / a.
    pub fn velocity_parameter(&self) -> f64 {
        self.gm_over_c2 / self.a
    }

    fn validate(&self) -> Result<(), EphemerisError> {
        let bad = |field, value, reason| EphemerisError::InvalidField {
            body: self.name.clone(),
            field,
            value,
            reason,
        };
        let finite = [
            ("a", self.a),
            ("e", self.e),
            ("gm_over_c2", self.gm_over_c2),
            ("inclination", self.inclination),
            ("perihelion_angle", self.perihelion_angle),
            ("mass_ratio", self.mass_ratio),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(bad(field, value, "not finite"));
            }
        }
        if self.index == 0 {
            return Err(bad("index", 0.0, "indices start at 1"));
        }
        if self.gm_over_c2 <= 0.0 {
            return Err(bad("gm_over_c2", self.gm_over_c2, "must be > 0"));
        }
        if self.mass_ratio < 0.0 {
            return Err(bad("mass_ratio", self.mass_ratio, "must be >= 0"));
        }
        if self.is_sun() {
            if self.mass_ratio != 1.0 {
                return Err(bad("mass_ratio", self.mass_ratio, "the Sun entry must carry mass_ratio = 1"));
            }
            return Ok(());
        }
        if self.a <= 0.0 {
            return Err(bad("a", self.a, "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.e) {
            return Err(bad("e", self.e, "must satisfy 0 <= e < 1"));
        }
        if 4.0 * self.velocity_parameter() >= 1.0 {
            return Err(bad("gm_over_c2", self.gm_over_c2, "4ω²a²/c² must stay below 1"));
        }
        Ok(())
    }
}

/// Constants plus the list of bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EphemerisTable {
    pub constants: PhysicalConstants,
    #[serde(rename = "body")]
    pub bodies: Vec<PlanetElements>,
}

fn planet(index: u32, name: &str, a: f64, e: f64, gm_over_c2: f64, mass_ratio: f64) -> PlanetElements {
    PlanetElements {
        index,
        name: name.to_string(),
        a,
        e,
        gm_over_c2,
        inclination: 0.0,
        perihelion_angle: 0.0,
        mass_ratio,
    }
}

impl EphemerisTable {
    /// The nine planets and the Sun.
    pub fn load_default() -> EphemerisTable {
        let mut mercury = planet(MERCURY, "Mercury", 0.5791e11, 0.21, 1477.0, 1.660e-7);
        mercury.inclination = 7f64.to_radians();
        let bodies = vec![
            mercury,
            planet(VENUS, "Venus", 1.0821e11, 0.007, 1477.0, 2.448e-6),
            planet(EARTH, "Earth", 1.4960e11, 0.017, 1477.0, 3.01e-6),
            planet(MARS, "Mars", 2.2794e11, 0.093, 1477.0, 3.227e-7),
            planet(JUPITER, "Jupiter", 7.783e11, 0.048, 1478.0, 0.95e-3),
            planet(SATURN, "Saturn", 14.27e11, 0.056, 1477.0, 2.858e-4),
            planet(URANUS, "Uranus", 28.69e11, 0.047, 1476.0, 4.366e-5),
            planet(NEPTUNE, "Neptune", 44.98e11, 0.009, 1478.0, 5.151e-5),
            planet(PLUTO, "Pluto", 59.00e11, 0.249, 1469.0, 6.6e-9),
            planet(SUN_INDEX, "Sun", 0.0, 0.0, 1477.0, 1.0),
        ];
        EphemerisTable { constants: PhysicalConstants::default(), bodies }
    }

    /// Default table with the overrides from a TOML file merged on top.
    pub fn load_file(path: impl AsRef<Path>) -> Result<EphemerisTable, EphemerisError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| EphemerisError::Read { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    /// Parse a config document and merge it over the defaults.
    pub fn from_toml_str(text: &str) -> Result<EphemerisTable, EphemerisError> {
        let file: EphemerisFile = toml::from_str(text).map_err(|e| EphemerisError::Parse(e.to_string()))?;
        let mut table = Self::load_default();
        table.merge(file)?;
        table.validate()?;
        Ok(table)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("table serializes")
    }

    fn merge(&mut self, file: EphemerisFile) -> Result<(), EphemerisError> {
        if let Some(c) = file.constants {
            if let Some(v) = c.c {
                self.constants.c = v;
            }
            if let Some(v) = c.g {
                self.constants.g = v;
            }
        }
        let mut seen = Vec::new();
        for entry in file.body {
            if seen.contains(&entry.index) {
                return Err(EphemerisError::DuplicateIndex(entry.index));
            }
            seen.push(entry.index);
            match self.bodies.iter_mut().find(|b| b.index == entry.index) {
                Some(existing) => entry.apply_to(existing),
                None => {
                    let body = entry.into_new_body()?;
                    self.bodies.push(body);
                }
            }
        }
        self.bodies.sort_by_key(|b| b.index);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), EphemerisError> {
        if !(self.constants.c > 0.0 && self.constants.c.is_finite()) {
            return Err(EphemerisError::InvalidConstant { field: "c", value: self.constants.c });
        }
        if !(self.constants.g > 0.0 && self.constants.g.is_finite()) {
            return Err(EphemerisError::InvalidConstant { field: "g", value: self.constants.g });
        }
        for (i, body) in self.bodies.iter().enumerate() {
            if self.bodies[..i].iter().any(|b| b.index == body.index) {
                return Err(EphemerisError::DuplicateIndex(body.index));
            }
            body.validate()?;
        }
        Ok(())
    }

    pub fn c(&self) -> f64 {
        self.constants.c
    }

    /// Look a body up by index.
    pub fn get(&self, index: u32) -> Result<&PlanetElements, EphemerisError> {
        self.bodies
            .iter()
            .find(|b| b.index == index)
            .ok_or_else(|| EphemerisError::UnknownBody(index.to_string()))
    }

    /// Look a body up by case-insensitive name or by numeric index.
    pub fn find(&self, key: &str) -> Result<&PlanetElements, EphemerisError> {
        if let Ok(index) = key.parse::<u32>() {
            return self.get(index);
        }
        self.bodies
            .iter()
            .find(|b| b.name.eq_ignore_ascii_case(key))
            .ok_or_else(|| EphemerisError::UnknownBody(key.to_string()))
    }

    pub fn planets(&self) -> impl Iterator<Item = &PlanetElements> {
        self.bodies.iter().filter(|b| !b.is_sun())
    }

    /// Multiply the speed of light by `factor` while holding every ω and a
    /// fixed, so `gm_over_c2` shrinks by `factor²`. `factor → ∞` is the
    /// classical limit.
    pub fn with_c_scale(&self, factor: f64) -> EphemerisTable {
        let mut out = self.clone();
        out.constants.c *= factor;
        for b in &mut out.bodies {
            b.gm_over_c2 /= factor * factor;
        }
        out
    }
}

/// On-disk schema: every field except `index` is optional and overrides the
/// default value for that body. Bodies with a new index must be complete.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EphemerisFile {
    constants: Option<ConstantsOverride>,
    #[serde(default)]
    body: Vec<BodyOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsOverride {
    c: Option<f64>,
    g: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyOverride {
    index: u32,
    name: Option<String>,
    a: Option<f64>,
    e: Option<f64>,
    gm_over_c2: Option<f64>,
    inclination: Option<f64>,
    perihelion_angle: Option<f64>,
    mass_ratio: Option<f64>,
}

impl BodyOverride {
    fn apply_to(self, body: &mut PlanetElements) {
        if let Some(v) = self.name {
            body.name = v;
        }
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { body.$f = v; } )*};
        }
        set!(a, e, gm_over_c2, inclination, perihelion_angle, mass_ratio);
    }

    fn into_new_body(self) -> Result<PlanetElements, EphemerisError> {
        let name = self.name.clone().unwrap_or_else(|| format!("body-{}", self.index));
        let need = |v: Option<f64>, field| v.ok_or_else(|| EphemerisError::MissingField { body: name.clone(), field });
        Ok(PlanetElements {
            index: self.index,
            a: need(self.a, "a")?,
            e: need(self.e, "e")?,
            gm_over_c2: need(self.gm_over_c2, "gm_over_c2")?,
            inclination: self.inclination.unwrap_or(0.0),
            perihelion_angle: self.perihelion_angle.unwrap_or(0.0),
            mass_ratio: self.mass_ratio.unwrap_or(0.0),
            name,
        })
    }
}
