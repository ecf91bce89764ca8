//! Physical model shared by every protocol: geometry, first-order radio
//! energy costs, node records and deployment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power::{MrpCache, PowerLevel};

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("distance must be non-negative and finite, got {0}")]
    InvalidDistance(f64),
    #[error("packet length must be positive")]
    ZeroBits,
    #[error("aggregation needs at least one signal")]
    NoSignals,
    #[error("field must have positive width and height, got {width} x {height}")]
    EmptyField { width: f64, height: f64 },
    #[error("cannot deploy zero nodes")]
    NoNodes,
    #[error("every node is dead")]
    AllDead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        distance(*self, *other)
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Point, b: Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Axis-aligned deployment rectangle anchored at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub width: f64,
    pub height: f64,
}

impl Field {
    pub fn new(width: f64, height: f64) -> Result<Self, ModelError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(ModelError::EmptyField { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

impl Default for Field {
    fn default() -> Self {
        Self { width: 1000.0, height: 1000.0 }
    }
}

/// First-order radio model: `E_tx(k, d) = e_elec*k + eps_amp*k*d^2`,
/// `E_rx(k) = e_elec*k`, plus a per-bit-per-signal aggregation charge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// J/bit spent by transmitter and receiver electronics.
    pub e_elec: f64,
    /// J/bit/m^2 spent by the transmit amplifier.
    pub eps_amp: f64,
    /// J/bit/signal spent aggregating at a cluster head.
    pub e_agg: f64,
    pub data_bits: u32,
    pub ctrl_bits: u32,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            e_elec: 50e-9,
            eps_amp: 10e-12,
            e_agg: 5e-9,
            data_bits: 500,
            ctrl_bits: 10,
        }
    }
}

impl EnergyModel {
    pub fn tx_cost(&self, bits: u32, d: f64) -> Result<f64, ModelError> {
        if bits == 0 {
            return Err(ModelError::ZeroBits);
        }
        if !(d >= 0.0 && d.is_finite()) {
            return Err(ModelError::InvalidDistance(d));
        }
        let k = f64::from(bits);
        Ok(self.e_elec * k + self.eps_amp * k * (d * d))
    }

    pub fn rx_cost(&self, bits: u32) -> Result<f64, ModelError> {
        if bits == 0 {
            return Err(ModelError::ZeroBits);
        }
        Ok(self.e_elec * f64::from(bits))
    }

    pub fn aggregation_cost(&self, bits: u32, signals: u32) -> Result<f64, ModelError> {
        if bits == 0 {
            return Err(ModelError::ZeroBits);
        }
        if signals == 0 {
            return Err(ModelError::NoSignals);
        }
        Ok(self.e_agg * f64::from(bits) * f64::from(signals))
    }

    pub fn is_valid(&self) -> bool {
        [self.e_elec, self.eps_amp, self.e_agg]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
            && self.data_bits > 0
            && self.ctrl_bits > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Regular,
    ClusterHead { level: u32 },
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Alive,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point,
    pub energy: f64,
    pub role: Role,
    /// Recently discovered MRPs to other nodes (PAMC only).
    pub mrp_cache: MrpCache,
    /// MRP to the sink, discovered once per lifetime (PAMC only).
    pub sink_mrp: Option<PowerLevel>,
}

impl Node {
    pub fn new(id: NodeId, pos: Point, energy: f64) -> Self {
        Self {
            id,
            pos,
            energy,
            role: Role::Regular,
            mrp_cache: MrpCache::new(0),
            sink_mrp: None,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.role != Role::Dead
    }

    /// Removes `cost` joules. A node whose energy reaches zero is clamped
    /// to 0 and marked dead.
    ///
    /// Panics when called on a dead node.
    pub fn debit(&mut self, cost: f64) -> NodeStatus {
        assert!(self.is_alive(), "debit on dead node {}", self.id);
        debug_assert!(cost >= 0.0);
        self.energy -= cost;
        if self.energy <= 0.0 {
            self.energy = 0.0;
            self.role = Role::Dead;
            NodeStatus::Dead
        } else {
            NodeStatus::Alive
        }
    }
}

/// Either a sensor node or the (mains-powered) sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Sink,
    Node(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub nodes: Vec<Node>,
    pub sink: Point,
    pub field: Field,
    pub round: u64,
}

impl World {
    pub fn new(nodes: Vec<Node>, sink: Point, field: Field) -> Self {
        Self { nodes, sink, field, round: 0 }
    }

    pub fn alive_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.is_alive()).map(|n| n.id)
    }

    pub fn alive_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_alive()).count()
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.nodes[id].is_alive()
    }

    pub fn total_energy(&self) -> f64 {
        self.nodes.iter().map(|n| n.energy).sum()
    }

    pub fn position(&self, at: Endpoint) -> Point {
        match at {
            Endpoint::Sink => self.sink,
            Endpoint::Node(id) => self.nodes[id].pos,
        }
    }

    pub fn distance(&self, a: Endpoint, b: Endpoint) -> f64 {
        distance(self.position(a), self.position(b))
    }

    /// Debits an endpoint. The sink has unlimited energy so debiting it
    /// does nothing.
    pub fn debit(&mut self, at: Endpoint, cost: f64) -> NodeStatus {
        match at {
            Endpoint::Sink => NodeStatus::Alive,
            Endpoint::Node(id) => self.nodes[id].debit(cost),
        }
    }

    pub fn network_radius(&self) -> Result<f64, ModelError> {
        network_radius(&self.nodes, self.sink)
    }
}

/// Places `n` nodes i.i.d. uniformly over `field`. Pure in `(n, field, seed)`.
pub fn deploy(n: usize, field: Field, seed: u64, initial_energy: f64) -> Result<Vec<Node>, ModelError> {
    let field = Field::new(field.width, field.height)?;
    if n == 0 {
        return Err(ModelError::NoNodes);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|id| {
            let x = rng.gen::<f64>() * field.width;
            let y = rng.gen::<f64>() * field.height;
            Node::new(id, Point::new(x, y), initial_energy)
        })
        .collect())
}

/// Largest distance from any alive node to the sink.
pub fn network_radius(nodes: &[Node], sink: Point) -> Result<f64, ModelError> {
    nodes
        .iter()
        .filter(|n| n.is_alive())
        .map(|n| distance(n.pos, sink))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))))
        .ok_or(ModelError::AllDead)
}
