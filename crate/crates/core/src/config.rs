//! `key = value` simulation configuration.
//!
//! ```text
//! # comments start with '#'
//! protocol = pamc
//! n = 300
//! cache_capacity = 20
//! ```
//!
//! Omitted keys take the default deployment: 100 nodes on a 1000 m x 1000 m
//! field, sink at the centre, 0.1 J per node, 500-bit data and 10-bit
//! control packets, six power levels and ten cached MRP entries.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::election::ElectionParams;
use crate::model::{deploy, EnergyModel, Field, ModelError, Point, World};
use crate::power::{build_power_table, MrpCache, MrpMetric};
use crate::protocol::{EngineError, Protocol, ProtocolParams};

/// Where a configuration line came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override => f.write_str("--set"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: expected `key = value`, got `{text}`")]
    Malformed { origin: Origin, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: cannot parse `{value}` for `{key}`: {reason}")]
    InvalidValue { origin: Origin, key: String, value: String, reason: String },
    #[error("{origin}: `{key}` = {value} is out of range ({expected})")]
    OutOfRange { origin: Origin, key: String, value: String, expected: &'static str },
}

pub const KEYS: &[&str] = &[
    "protocol",
    "n",
    "field_width",
    "field_height",
    "sink_x",
    "sink_y",
    "phi",
    "power_levels",
    "cache_capacity",
    "mrp_metric",
    "seed",
    "seeds",
    "initial_energy",
    "round_cap",
    "max_levels",
    "e_elec",
    "eps_amp",
    "e_agg",
    "data_bits",
    "ctrl_bits",
    "series",
];

const PAMC_ONLY: &[&str] = &["power_levels", "cache_capacity", "mrp_metric"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub field: Field,
    pub sink: Point,
    pub phi: f64,
    pub power_levels: usize,
    pub cache_capacity: usize,
    pub mrp_metric: MrpMetric,
    pub seed: u64,
    /// Number of consecutive seeds an experiment runs.
    pub seeds: usize,
    pub initial_energy: f64,
    pub round_cap: u64,
    pub max_levels: u32,
    pub energy: EnergyModel,
    /// Include per-round series in JSON output.
    pub series: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Lamc,
            n: 100,
            field: Field::default(),
            sink: Point::new(500.0, 500.0),
            phi: 0.8,
            power_levels: 6,
            cache_capacity: 10,
            mrp_metric: MrpMetric::Ordinal,
            seed: 1,
            seeds: 20,
            initial_energy: 0.1,
            round_cap: 10_000,
            max_levels: 5,
            energy: EnergyModel::default(),
            series: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: SimConfig,
    pub warnings: Vec<String>,
}

fn parse_value<T: std::str::FromStr>(origin: Origin, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        origin,
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn check<T: fmt::Display>(ok: bool, origin: Origin, key: &str, value: T, expected: &'static str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange { origin, key: key.to_string(), value: value.to_string(), expected })
    }
}

fn positive(origin: Origin, key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_value(origin, key, value)?;
    check(v > 0.0 && v.is_finite(), origin, key, v, "> 0")?;
    Ok(v)
}

impl SimConfig {
    /// Assigns one key, validating its range.
    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "protocol" => {
                self.protocol = value.parse().map_err(|reason| ConfigError::InvalidValue {
                    origin,
                    key: key.into(),
                    value: value.into(),
                    reason,
                })?
            }
            "n" => {
                let v: usize = parse_value(origin, key, value)?;
                check(v >= 1, origin, key, v, ">= 1")?;
                self.n = v;
            }
            "field_width" => self.field.width = positive(origin, key, value)?,
            "field_height" => self.field.height = positive(origin, key, value)?,
            "sink_x" | "sink_y" => {
                let v: f64 = parse_value(origin, key, value)?;
                check(v.is_finite(), origin, key, v, "finite")?;
                if key == "sink_x" {
                    self.sink.x = v;
                } else {
                    self.sink.y = v;
                }
            }
            "phi" => {
                let v: f64 = parse_value(origin, key, value)?;
                check((0.0..=1.0).contains(&v), origin, key, v, "0 <= phi <= 1")?;
                self.phi = v;
            }
            "power_levels" => {
                let v: usize = parse_value(origin, key, value)?;
                check(v >= 2, origin, key, v, ">= 2")?;
                self.power_levels = v;
            }
            "cache_capacity" => self.cache_capacity = parse_value(origin, key, value)?,
            "mrp_metric" => {
                self.mrp_metric = match value {
                    "ordinal" => MrpMetric::Ordinal,
                    "range_squared" => MrpMetric::RangeSquared,
                    _ => {
                        return Err(ConfigError::InvalidValue {
                            origin,
                            key: key.into(),
                            value: value.into(),
                            reason: "expected `ordinal` or `range_squared`".into(),
                        })
                    }
                }
            }
            "seed" => self.seed = parse_value(origin, key, value)?,
            "seeds" => {
                let v: usize = parse_value(origin, key, value)?;
                check(v >= 1, origin, key, v, ">= 1")?;
                self.seeds = v;
            }
            "initial_energy" => self.initial_energy = positive(origin, key, value)?,
            "round_cap" => {
                let v: u64 = parse_value(origin, key, value)?;
                check(v >= 1, origin, key, v, ">= 1")?;
                self.round_cap = v;
            }
            "max_levels" => {
                let v: u32 = parse_value(origin, key, value)?;
                check(v >= 1, origin, key, v, ">= 1")?;
                self.max_levels = v;
            }
            "e_elec" => self.energy.e_elec = positive(origin, key, value)?,
            "eps_amp" => self.energy.eps_amp = positive(origin, key, value)?,
            "e_agg" => self.energy.e_agg = positive(origin, key, value)?,
            "data_bits" | "ctrl_bits" => {
                let v: u32 = parse_value(origin, key, value)?;
                check(v >= 1, origin, key, v, ">= 1")?;
                if key == "data_bits" {
                    self.energy.data_bits = v;
                } else {
                    self.energy.ctrl_bits = v;
                }
            }
            "series" => self.series = parse_value(origin, key, value)?,
            _ => return Err(ConfigError::UnknownKey { origin, key: key.to_string() }),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = split_assignment(assignment).ok_or_else(|| ConfigError::Malformed {
            origin: Origin::Override,
            text: assignment.to_string(),
        })?;
        self.set(key, value, Origin::Override)
    }

    /// Deploys the nodes of the run with this config's `seed`.
    pub fn build_world(&self, seed: u64) -> Result<World, ModelError> {
        let mut nodes = deploy(self.n, self.field, seed, self.initial_energy)?;
        for node in &mut nodes {
            node.mrp_cache = MrpCache::new(self.cache_capacity);
        }
        Ok(World::new(nodes, self.sink, self.field))
    }

    /// Protocol parameters for a freshly deployed `world`. The power table
    /// spans the deployment radius.
    pub fn protocol_params(&self, world: &World) -> Result<ProtocolParams, EngineError> {
        let radius = world.network_radius()?;
        Ok(ProtocolParams {
            election: ElectionParams::for_network(self.phi, self.n)?,
            max_levels: self.max_levels,
            energy: self.energy,
            power_table: build_power_table(radius.max(1.0), self.power_levels)?,
            mrp_metric: self.mrp_metric,
        })
    }
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (key, value) = line.split_once('=')?;
    let key = key.trim();
    let value = value.trim();
    (!key.is_empty() && !value.is_empty() && !key.contains(char::is_whitespace)).then_some((key, value))
}

/// Parses a configuration file, filling defaults for omitted keys.
pub fn parse_config(text: &str) -> Result<ParsedConfig, ConfigError> {
    let mut config = SimConfig::default();
    let mut pamc_keys = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let origin = Origin::Line(idx + 1);
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            split_assignment(line).ok_or_else(|| ConfigError::Malformed { origin, text: raw.to_string() })?;
        config.set(key, value, origin)?;
        if PAMC_ONLY.contains(&key) {
            pamc_keys.push(key.to_string());
        }
    }
    let warnings = if config.protocol == Protocol::Pamc {
        Vec::new()
    } else {
        pamc_keys
            .into_iter()
            .map(|k| format!("`{k}` only affects pamc and is ignored by {}", config.protocol))
            .collect()
    };
    Ok(ParsedConfig { config, warnings })
}
