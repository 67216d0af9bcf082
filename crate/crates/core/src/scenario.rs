//! Experiment configuration and its on-disk format.
//!
//! Scenario files are TOML. Every key except `master_seed` is optional and
//! falls back to the defaults below. [`Scenario::to_canonical_string`] writes
//! the keys in a fixed order, so a file produced by it loads and saves back
//! byte-for-byte.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::RngPolicy;

pub const DEFAULT_NODE_COUNT: usize = 90;
pub const DEFAULT_EDGE_BUDGET: usize = 1400;
pub const DEFAULT_ENCOUNTER_RATE: f64 = 0.8;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.005;
pub const DEFAULT_TRANSMISSIBILITY: f64 = 1.0;
pub const DEFAULT_HORIZON: usize = 6;
pub const DEFAULT_DISTANCE_CAP: usize = 6;
pub const DEFAULT_SEED_COUNT: usize = 1;

/// Trinary preference direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Sign {
    Negative,
    Neutral,
    Positive,
}

impl Sign {
    pub const ALL: [Sign; 3] = [Sign::Negative, Sign::Neutral, Sign::Positive];

    pub fn value(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Neutral => 0.0,
            Sign::Positive => 1.0,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(Sign::Negative),
            0 => Ok(Sign::Neutral),
            1 => Ok(Sign::Positive),
            other => Err(format!("preference must be -1, 0 or 1, got {other}")),
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Negative => -1,
            Sign::Neutral => 0,
            Sign::Positive => 1,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", i8::from(*self))
    }
}

/// Shape of the age distribution over the nine decade groups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgeShape {
    #[default]
    Uniform,
    Bell,
    InverseBell,
    LeftSkewed,
    RightSkewed,
}

impl AgeShape {
    pub const ALL: [AgeShape; 5] = [
        AgeShape::Uniform,
        AgeShape::Bell,
        AgeShape::InverseBell,
        AgeShape::LeftSkewed,
        AgeShape::RightSkewed,
    ];

    pub fn code(self) -> char {
        match self {
            AgeShape::Uniform => 'U',
            AgeShape::Bell => 'B',
            AgeShape::InverseBell => 'I',
            AgeShape::LeftSkewed => 'L',
            AgeShape::RightSkewed => 'R',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgeShape::Uniform => "uniform",
            AgeShape::Bell => "bell",
            AgeShape::InverseBell => "inverse-bell",
            AgeShape::LeftSkewed => "left-skewed",
            AgeShape::RightSkewed => "right-skewed",
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        AgeShape::ALL.into_iter().find(|s| s.code() == c)
    }
}

impl fmt::Display for AgeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgeShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(shape) = AgeShape::from_code(c.to_ascii_uppercase()) {
                return Ok(shape);
            }
        }
        AgeShape::ALL
            .into_iter()
            .find(|shape| shape.name() == s)
            .ok_or_else(|| Error::invalid("age_shape", format!("unknown shape `{s}`")))
    }
}

/// Network formation rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "P+")]
    Pplus,
    #[serde(rename = "P-")]
    Pminus,
    #[serde(rename = "H+")]
    Hplus,
    #[serde(rename = "H-")]
    Hminus,
    #[default]
    #[serde(rename = "PH")]
    PH,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::Pplus, Rule::Pminus, Rule::Hplus, Rule::Hminus, Rule::PH];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Pplus => "P+",
            Rule::Pminus => "P-",
            Rule::Hplus => "H+",
            Rule::Hminus => "H-",
            Rule::PH => "PH",
        }
    }

    /// File-system friendly name.
    pub fn slug(self) -> &'static str {
        match self {
            Rule::Pplus => "Pplus",
            Rule::Pminus => "Pminus",
            Rule::Hplus => "Hplus",
            Rule::Hminus => "Hminus",
            Rule::PH => "PH",
        }
    }

    /// Homogeneous preferences for this rule on the given age shape. The pure
    /// rules ignore the shape; `PH` carries the fitted values per shape.
    pub fn preset(self, shape: AgeShape) -> Preferences {
        use Sign::{Negative as N, Positive as P};
        match self {
            Rule::Pplus => Preferences::new(P, 1.0, P, 0.0),
            Rule::Pminus => Preferences::new(N, 1.0, P, 0.0),
            Rule::Hplus => Preferences::new(P, 0.0, P, 1.0),
            Rule::Hminus => Preferences::new(P, 0.0, N, 1.0),
            Rule::PH => match shape {
                AgeShape::Uniform => Preferences::new(N, 0.05, P, 0.08),
                AgeShape::Bell => Preferences::new(N, 0.03, P, 0.06),
                AgeShape::InverseBell => Preferences::new(P, 0.68, N, 0.73),
                AgeShape::LeftSkewed => Preferences::new(P, 0.02, N, 0.08),
                AgeShape::RightSkewed => Preferences::new(P, 0.02, N, 0.06),
            },
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s || r.slug() == s)
            .ok_or_else(|| Error::invalid("rule", format!("unknown rule `{s}`")))
    }
}

/// Single-feature sDNA shared by every node of a population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preferences {
    pub p: Sign,
    pub wp: f64,
    pub h: Sign,
    pub wh: f64,
}

impl Preferences {
    pub fn new(p: Sign, wp: f64, h: Sign, wh: f64) -> Self {
        Self { p, wp, h, wh }
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        check_unit(&format!("{prefix}.wp"), self.wp)?;
        check_unit(&format!("{prefix}.wh"), self.wh)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "d_node_count")]
    pub node_count: usize,
    #[serde(default = "d_edge_budget")]
    pub edge_budget: usize,
    #[serde(default = "d_encounter_rate")]
    pub encounter_rate: f64,
    #[serde(default = "d_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub age_shape: AgeShape,
    #[serde(default)]
    pub rule: Rule,
    #[serde(default = "d_transmissibility")]
    pub transmissibility: f64,
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    #[serde(default = "d_distance_cap")]
    pub distance_cap: usize,
    #[serde(default = "d_seed_count")]
    pub seed_count: usize,
    #[serde(with = "seed_format")]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdna: Option<Preferences>,
}

fn d_node_count() -> usize {
    DEFAULT_NODE_COUNT
}
fn d_edge_budget() -> usize {
    DEFAULT_EDGE_BUDGET
}
fn d_encounter_rate() -> f64 {
    DEFAULT_ENCOUNTER_RATE
}
fn d_noise_sigma() -> f64 {
    DEFAULT_NOISE_SIGMA
}
fn d_transmissibility() -> f64 {
    DEFAULT_TRANSMISSIBILITY
}
fn d_horizon() -> usize {
    DEFAULT_HORIZON
}
fn d_distance_cap() -> usize {
    DEFAULT_DISTANCE_CAP
}
fn d_seed_count() -> usize {
    DEFAULT_SEED_COUNT
}

// TOML integers are signed 64-bit; seeds above i64::MAX are written as strings.
mod seed_format {
    use super::*;

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
        use serde::de::Error as _;
        match Raw::deserialize(d)? {
            Raw::Int(v) => u64::try_from(v).map_err(|_| D::Error::custom("master_seed must be non-negative")),
            Raw::Text(t) => t.parse().map_err(|_| D::Error::custom(format!("master_seed `{t}` is not a u64"))),
        }
    }
}

fn check_unit(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} is outside [0, 1]")))
    }
}

impl Scenario {
    pub fn with_seed(master_seed: u64) -> Self {
        Self {
            node_count: DEFAULT_NODE_COUNT,
            edge_budget: DEFAULT_EDGE_BUDGET,
            encounter_rate: DEFAULT_ENCOUNTER_RATE,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            age_shape: AgeShape::default(),
            rule: Rule::default(),
            transmissibility: DEFAULT_TRANSMISSIBILITY,
            horizon: DEFAULT_HORIZON,
            distance_cap: DEFAULT_DISTANCE_CAP,
            seed_count: DEFAULT_SEED_COUNT,
            master_seed,
            sdna: None,
        }
    }

    /// Named paradigm such as `U_PH` or `I_H-`: shape code, underscore, rule.
    pub fn preset(name: &str, master_seed: u64) -> Result<Self> {
        let (shape, rule) = name
            .split_once('_')
            .ok_or_else(|| Error::invalid("preset", format!("`{name}` is not of the form <shape>_<rule>")))?;
        let mut s = Scenario::with_seed(master_seed);
        s.age_shape = shape.parse()?;
        s.rule = rule.parse()?;
        Ok(s)
    }

    pub fn max_pairs(&self) -> usize {
        self.node_count * self.node_count.saturating_sub(1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::invalid("node_count", "must be positive"));
        }
        if self.edge_budget > self.max_pairs() {
            return Err(Error::invalid(
                "edge_budget",
                format!(
                    "{} exceeds the {} available node pairs",
                    self.edge_budget,
                    self.max_pairs()
                ),
            ));
        }
        check_unit("encounter_rate", self.encounter_rate)?;
        check_unit("transmissibility", self.transmissibility)?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma", "must be finite and non-negative"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if self.distance_cap == 0 {
            return Err(Error::invalid("distance_cap", "must be at least 1"));
        }
        if self.seed_count == 0 || self.seed_count > self.node_count {
            return Err(Error::invalid("seed_count", "must lie in 1..=node_count"));
        }
        if let Some(sdna) = &self.sdna {
            sdna.validate("sdna")?;
        }
        Ok(())
    }

    /// The sDNA applied to every node: the explicit override if present,
    /// otherwise the rule's preset for this shape.
    pub fn preferences(&self) -> Preferences {
        self.sdna.unwrap_or_else(|| self.rule.preset(self.age_shape))
    }

    pub fn rng_policy(&self) -> RngPolicy {
        RngPolicy::new(self.master_seed)
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, origin, &[])
    }

    /// Parses `text`, applies `key=value` overrides, then validates.
    pub fn from_toml_with_overrides(text: &str, origin: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            path: origin.to_string(),
            message: e.message().to_string(),
        })?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let parse = |t: toml::Table| -> Result<Scenario> {
            t.try_into().map_err(|e: toml::de::Error| Error::Parse {
                path: origin.to_string(),
                message: e.message().to_string(),
            })
        };
        // A partial [sdna] table is completed from the rule's preset.
        if let Some(toml::Value::Table(partial)) = table.remove("sdna") {
            let preset = parse(table.clone())?.preferences();
            let mut full = toml::Table::try_from(preset).map_err(|e| Error::Invariant(e.to_string()))?;
            full.extend(partial);
            table.insert("sdna".into(), toml::Value::Table(full));
        }
        let scenario = parse(table)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_canonical_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical_string()).map_err(|e| Error::io(path, e))
    }

    /// Short content hash of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Applies one `key=value` pair. Dotted keys address nested tables
/// (`sdna.wp=0.1`). Values are parsed as TOML, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, pair: &str) -> Result<()> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| Error::invalid(pair, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::invalid(key, "empty key"))?;
    let mut cursor = table;
    for part in parts {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::invalid(key, format!("`{part}` is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    load_scenario_with(path, &[])
}

pub fn load_scenario_with(path: &Path, overrides: &[String]) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_toml_with_overrides(&text, &path.display().to_string(), overrides)
}
