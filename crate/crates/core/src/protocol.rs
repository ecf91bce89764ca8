//! Cluster setup for EEMC, LAMC and PAMC, and the shared data phase.
//!
//! The three protocols share one phase-ordered state machine:
//!
//! 1. all alive nodes reset to regular;
//! 2. sink start beacon (LAMC, PAMC);
//! 3. PAMC only: nodes without a known sink MRP discover it by probe descent;
//! 4. every node reports to the sink, the sink broadcasts the totals;
//! 5. level-1 election over all alive nodes;
//! 6. per level: advertisements, each answered by a join from every regular
//!    node that hears it, then per-cluster command and next-level election
//!    while the cluster has more than two members and the level cap is not
//!    reached;
//! 7. finalization: EEMC stays with the latest head it joined (which is on
//!    the deepest level it heard), LAMC/PAMC move to the closest head heard
//!    at any level (join + de-join when it changes).
//!
//! Within a phase nodes act in increasing id order. Election draws consume
//! the round RNG in that same order, cluster by cluster in head id order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::election::{
    broadcast_range, level1_probability, levelj_probability, reciprocal_distance, run_election,
    ElectionError, ElectionParams, ElectionTotals,
};
use crate::ledger::{Message, MessageKind, MessageLedger};
use crate::model::{Endpoint, EnergyModel, ModelError, NodeId, Role, World};
use crate::power::{discover_mrp, probe_descent, MrpMetric, PowerError, PowerLevel, PowerTable, ProbeStep};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Election(#[from] ElectionError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Eemc,
    Lamc,
    Pamc,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Eemc, Protocol::Lamc, Protocol::Pamc];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Eemc => "eemc",
            Protocol::Lamc => "lamc",
            Protocol::Pamc => "pamc",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eemc" => Ok(Protocol::Eemc),
            "lamc" => Ok(Protocol::Lamc),
            "pamc" => Ok(Protocol::Pamc),
            other => Err(format!("unknown protocol `{other}` (expected eemc, lamc or pamc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub election: ElectionParams,
    /// Deepest cluster-head level that may be elected.
    pub max_levels: u32,
    pub energy: EnergyModel,
    /// PAMC power levels; ignored by the other protocols.
    pub power_table: PowerTable,
    pub mrp_metric: MrpMetric,
}

/// A cluster-head advertisement as remembered by a regular node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateCh {
    pub ch: NodeId,
    pub level: u32,
    /// Meters (EEMC, LAMC) or MRP level (PAMC).
    pub metric: f64,
    /// Position in the order this node heard advertisements.
    pub heard_order: u32,
}

impl CandidateCh {
    /// Closer metric wins; equal metrics go to the earlier advertisement.
    fn beats(&self, other: &CandidateCh) -> bool {
        self.metric < other.metric || (self.metric == other.metric && self.heard_order < other.heard_order)
    }
}

fn closest<'a, I: IntoIterator<Item = &'a CandidateCh>>(it: I) -> Option<CandidateCh> {
    it.into_iter().fold(None, |best: Option<CandidateCh>, c| match best {
        Some(b) if !c.beats(&b) => Some(b),
        _ => Some(*c),
    })
}

/// Forest rooted at the sink produced by one setup phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// `None` for nodes dead at the end of setup.
    pub parent: Vec<Option<Endpoint>>,
    /// Cluster-head level, or for regular nodes one more than their head's
    /// level (1 for orphans that talk to the sink directly).
    pub level: Vec<Option<u32>>,
    /// Cluster heads per level, index 0 is level 1.
    pub ch_levels: Vec<Vec<NodeId>>,
    /// Cardinality of the cluster each head was elected from, along its
    /// chain from level 1.
    pub ancestor_sizes: Vec<Vec<usize>>,
}

impl Topology {
    pub fn is_ch(&self, id: NodeId) -> bool {
        self.ch_levels.iter().any(|l| l.contains(&id))
    }

    pub fn ch_count(&self) -> usize {
        self.ch_levels.iter().map(Vec::len).sum()
    }

    pub fn depth(&self) -> usize {
        self.ch_levels.len()
    }

    /// Alive regular nodes that send straight to the sink.
    pub fn orphans(&self) -> Vec<NodeId> {
        (0..self.parent.len())
            .filter(|&id| self.parent[id] == Some(Endpoint::Sink) && !self.is_ch(id))
            .collect()
    }

    /// Transmissions from `id` to the sink along parent links, or `None` if
    /// the walk hits a dead end or revisits a node.
    pub fn hops_to_sink(&self, id: NodeId) -> Option<u32> {
        let mut cur = id;
        let mut hops = 0u32;
        loop {
            hops += 1;
            if hops as usize > self.parent.len() + 1 {
                return None;
            }
            match self.parent[cur]? {
                Endpoint::Sink => return Some(hops),
                Endpoint::Node(p) => cur = p,
            }
        }
    }
}

/// Result of a cluster setup phase.
#[derive(Debug, Clone)]
pub struct Setup {
    pub topology: Topology,
    pub ledger: MessageLedger,
    /// Every advertisement each node heard while regular, in heard order.
    pub heard: Vec<Vec<CandidateCh>>,
    /// Latest head each regular node joined before finalization.
    pub provisional: Vec<Option<NodeId>>,
}

pub fn setup_eemc<R: Rng + ?Sized>(world: &mut World, params: &ProtocolParams, rng: &mut R) -> Result<Setup, EngineError> {
    setup(world, Protocol::Eemc, params, rng)
}

pub fn setup_lamc<R: Rng + ?Sized>(world: &mut World, params: &ProtocolParams, rng: &mut R) -> Result<Setup, EngineError> {
    setup(world, Protocol::Lamc, params, rng)
}

pub fn setup_pamc<R: Rng + ?Sized>(world: &mut World, params: &ProtocolParams, rng: &mut R) -> Result<Setup, EngineError> {
    setup(world, Protocol::Pamc, params, rng)
}

struct Engine<'a> {
    world: &'a mut World,
    params: &'a ProtocolParams,
    protocol: Protocol,
    ledger: MessageLedger,
    radius: f64,
    heard: Vec<Vec<CandidateCh>>,
    heard_counter: Vec<u32>,
    joined: Vec<Option<NodeId>>,
    members: Vec<Vec<NodeId>>,
    /// Advertisement range of each head.
    ad_range: Vec<f64>,
    parent: Vec<Option<Endpoint>>,
    ancestor_sizes: Vec<Vec<usize>>,
    ch_levels: Vec<Vec<NodeId>>,
    head_level: Vec<Option<u32>>,
}

pub fn setup<R: Rng + ?Sized>(
    world: &mut World,
    protocol: Protocol,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<Setup, EngineError> {
    let radius = world.network_radius()?;
    let n = world.nodes.len();
    for node in world.nodes.iter_mut().filter(|n| n.is_alive()) {
        node.role = Role::Regular;
    }
    let mut engine = Engine {
        world,
        params,
        protocol,
        ledger: MessageLedger::new(),
        radius,
        heard: vec![Vec::new(); n],
        heard_counter: vec![0; n],
        joined: vec![None; n],
        members: vec![Vec::new(); n],
        ad_range: vec![0.0; n],
        parent: vec![None; n],
        ancestor_sizes: vec![Vec::new(); n],
        ch_levels: Vec::new(),
        head_level: vec![None; n],
    };
    engine.run(rng)?;
    Ok(engine.finish())
}

impl Engine<'_> {
    fn alive(&self) -> Vec<NodeId> {
        self.world.alive_ids().collect()
    }

    fn is_regular(&self, id: NodeId) -> bool {
        self.world.nodes[id].role == Role::Regular
    }

    fn send(&mut self, kind: MessageKind, sender: Endpoint, receivers: Vec<NodeId>, bits: u32, span: f64) -> Result<Vec<NodeId>, EngineError> {
        let msg = Message::new(kind, sender, receivers, bits, span);
        Ok(self.ledger.transmit(self.world, &self.params.energy, msg)?.to_vec())
    }

    fn ctrl(&self) -> u32 {
        self.params.energy.ctrl_bits
    }

    fn unicast(&mut self, kind: MessageKind, from: NodeId, to: Endpoint) -> Result<(), EngineError> {
        let d = self.world.distance(Endpoint::Node(from), to);
        let receivers = match to {
            Endpoint::Node(id) => vec![id],
            Endpoint::Sink => Vec::new(),
        };
        self.send(kind, Endpoint::Node(from), receivers, self.ctrl(), d)?;
        Ok(())
    }

    fn sink_broadcast(&mut self, kind: MessageKind) -> Result<(), EngineError> {
        let everyone = self.alive();
        self.send(kind, Endpoint::Sink, everyone, self.ctrl(), self.radius)?;
        Ok(())
    }

    /// Alive nodes other than `from` strictly inside `range`.
    fn in_range(&self, from: NodeId, range: f64) -> Vec<NodeId> {
        let origin = self.world.nodes[from].pos;
        self.world
            .nodes
            .iter()
            .filter(|n| n.id != from && n.is_alive() && n.pos.distance(&origin) < range)
            .map(|n| n.id)
            .collect()
    }

    /// Emits the probe/ack exchange for `steps` from `prober` to `responder`.
    /// Stops early if either side dies; returns whether it completed.
    fn emit_probes(&mut self, prober: NodeId, responder: Endpoint, steps: &[ProbeStep]) -> Result<bool, EngineError> {
        let d = self.world.distance(Endpoint::Node(prober), responder);
        for step in steps {
            if !self.world.is_alive(prober) {
                return Ok(false);
            }
            self.send(MessageKind::Probe, Endpoint::Node(prober), Vec::new(), self.ctrl(), step.range)?;
            if step.acked {
                if let Endpoint::Node(r) = responder {
                    if !self.world.is_alive(r) {
                        return Ok(false);
                    }
                }
                if !self.world.is_alive(prober) {
                    return Ok(false);
                }
                self.send(MessageKind::Ack, responder, vec![prober], self.ctrl(), d)?;
            }
        }
        Ok(self.world.is_alive(prober))
    }

    fn become_ch(&mut self, id: NodeId, level: u32, parent: Endpoint, sizes: Vec<usize>) {
        self.world.nodes[id].role = Role::ClusterHead { level };
        self.parent[id] = Some(parent);
        let range = broadcast_range(self.radius, self.params.election.n_ch1_opt, &sizes);
        self.ad_range[id] = match self.protocol {
            Protocol::Pamc => {
                let table = &self.params.power_table;
                table.range(table.level_covering(range))
            }
            _ => range,
        };
        self.ancestor_sizes[id] = sizes;
        self.head_level[id] = Some(level);
        let idx = level as usize - 1;
        if self.ch_levels.len() <= idx {
            self.ch_levels.resize(idx + 1, Vec::new());
        }
        self.ch_levels[idx].push(id);
    }

    fn mrp_value(&self, level: PowerLevel) -> f64 {
        self.params.power_table.metric_value(level, self.params.mrp_metric)
    }

    fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), EngineError> {
        if self.protocol != Protocol::Eemc {
            self.sink_broadcast(MessageKind::Beacon)?;
        }
        if self.protocol == Protocol::Pamc {
            self.discover_sink_mrp()?;
        }
        for u in self.alive() {
            if self.world.is_alive(u) {
                self.unicast(MessageKind::Report, u, Endpoint::Sink)?;
            }
        }
        self.sink_broadcast(MessageKind::Command)?;

        let mut current = self.elect_level1(rng)?;
        let mut level = 1u32;
        while !current.is_empty() {
            self.advertise(&current, level)?;
            if level >= self.params.max_levels {
                break;
            }
            current = self.elect_next(&current, level, rng)?;
            level += 1;
        }
        self.finalize()
    }

    fn discover_sink_mrp(&mut self) -> Result<(), EngineError> {
        for u in self.alive() {
            if !self.world.is_alive(u) || self.world.nodes[u].sink_mrp.is_some() {
                continue;
            }
            let d = self.world.distance(Endpoint::Node(u), Endpoint::Sink);
            let found = probe_descent(&self.params.power_table, d)?;
            if self.emit_probes(u, Endpoint::Sink, &found.steps)? {
                self.world.nodes[u].sink_mrp = Some(found.level);
            }
        }
        Ok(())
    }

    /// Reciprocal closeness of `u` to the sink.
    fn sink_metric(&self, u: NodeId) -> f64 {
        match self.protocol {
            Protocol::Pamc => {
                // A node whose discovery was cut short by its own death never gets here.
                let level = self.world.nodes[u].sink_mrp.unwrap_or(self.params.power_table.max_level());
                1.0 / self.mrp_value(level)
            }
            _ => reciprocal_distance(self.world.distance(Endpoint::Node(u), Endpoint::Sink)),
        }
    }

    fn elect_level1<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<NodeId>, EngineError> {
        let candidates = self.alive();
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let stats: Vec<(f64, f64)> =
            candidates.iter().map(|&u| (self.world.nodes[u].energy, self.sink_metric(u))).collect();
        let totals = ElectionTotals::from_members(stats.iter().copied());
        let raw = candidates
            .iter()
            .zip(&stats)
            .map(|(&u, &(e, m))| Ok((u, level1_probability(e, m, &totals, &self.params.election)?)))
            .collect::<Result<Vec<_>, ElectionError>>()?;
        let elected = run_election(&raw, rng);
        for &c in &elected {
            self.become_ch(c, 1, Endpoint::Sink, Vec::new());
        }
        Ok(elected)
    }

    fn advertise(&mut self, heads: &[NodeId], level: u32) -> Result<(), EngineError> {
        for &c in heads {
            if !self.world.is_alive(c) {
                continue;
            }
            let range = self.ad_range[c];
            let receivers = self.in_range(c, range);
            let heard = self.send(MessageKind::Advertisement, Endpoint::Node(c), receivers, self.ctrl(), range)?;
            for u in heard {
                if !self.world.is_alive(u) || !self.is_regular(u) || !self.world.is_alive(c) {
                    continue;
                }
                let d = self.world.distance(Endpoint::Node(u), Endpoint::Node(c));
                let metric = match self.protocol {
                    Protocol::Pamc => {
                        let found = discover_mrp(&self.params.power_table, &mut self.world.nodes[u].mrp_cache, c, d)?;
                        if !self.emit_probes(u, Endpoint::Node(c), &found.steps)? {
                            continue;
                        }
                        f64::from(found.level.get())
                    }
                    _ => d,
                };
                let heard_order = self.heard_counter[u];
                self.heard_counter[u] += 1;
                self.heard[u].push(CandidateCh { ch: c, level, metric, heard_order });
                self.unicast(MessageKind::Join, u, Endpoint::Node(c))?;
                self.joined[u] = Some(c);
                self.members[c].push(u);
            }
        }
        Ok(())
    }

    /// Metric value used in a head's cluster election for member `u`.
    fn cluster_metric(&self, u: NodeId, ch: NodeId) -> f64 {
        match self.protocol {
            Protocol::Pamc => {
                let level = self.heard[u]
                    .iter()
                    .find(|c| c.ch == ch)
                    .map(|c| PowerLevel::new(c.metric as u32))
                    .expect("members heard their head");
                1.0 / self.mrp_value(level)
            }
            _ => reciprocal_distance(self.world.distance(Endpoint::Node(u), Endpoint::Node(ch))),
        }
    }

    fn elect_next<R: Rng + ?Sized>(&mut self, heads: &[NodeId], level: u32, rng: &mut R) -> Result<Vec<NodeId>, EngineError> {
        let mut next = Vec::new();
        for &c in heads {
            if !self.world.is_alive(c) {
                continue;
            }
            let eligible = |e: &Self, u: NodeId| e.world.is_alive(u) && e.is_regular(u);
            if self.members[c].iter().filter(|&&u| eligible(self, u)).count() <= 2 {
                continue;
            }
            let range = self.ad_range[c];
            let receivers = self.in_range(c, range);
            self.send(MessageKind::Command, Endpoint::Node(c), receivers, self.ctrl(), range)?;
            let cluster: Vec<NodeId> = self.members[c].iter().copied().filter(|&u| eligible(self, u)).collect();
            if cluster.is_empty() {
                continue;
            }
            let stats: Vec<(f64, f64)> =
                cluster.iter().map(|&u| (self.world.nodes[u].energy, self.cluster_metric(u, c))).collect();
            let totals = ElectionTotals::from_members(stats.iter().copied());
            let raw = cluster
                .iter()
                .zip(&stats)
                .map(|(&u, &(e, m))| Ok((u, levelj_probability(e, m, &totals, &self.params.election)?)))
                .collect::<Result<Vec<_>, ElectionError>>()?;
            let mut sizes = self.ancestor_sizes[c].clone();
            sizes.push(cluster.len());
            for e in run_election(&raw, rng) {
                self.become_ch(e, level + 1, Endpoint::Node(c), sizes.clone());
                next.push(e);
            }
        }
        Ok(next)
    }

    fn finalize(&mut self) -> Result<(), EngineError> {
        for u in self.alive() {
            if !self.world.is_alive(u) || !self.is_regular(u) {
                continue;
            }
            let provisional = self.joined[u].filter(|&c| self.world.is_alive(c));
            let chosen = match self.protocol {
                Protocol::Eemc => provisional,
                Protocol::Lamc | Protocol::Pamc => {
                    let best = closest(self.heard[u].iter().filter(|c| self.world.is_alive(c.ch))).map(|c| c.ch);
                    if let Some(new) = best.filter(|&b| Some(b) != provisional) {
                        self.unicast(MessageKind::Rejoin, u, Endpoint::Node(new))?;
                        if let Some(old) = provisional {
                            if self.world.is_alive(u) {
                                self.unicast(MessageKind::DeJoin, u, Endpoint::Node(old))?;
                            }
                        }
                    }
                    best
                }
            };
            self.parent[u] = Some(chosen.map_or(Endpoint::Sink, Endpoint::Node));
        }
        Ok(())
    }

    fn finish(self) -> Setup {
        let n = self.world.nodes.len();
        let mut parent = self.parent;
        let mut level = vec![None; n];
        for id in 0..n {
            match self.world.nodes[id].role {
                Role::Dead => parent[id] = None,
                Role::ClusterHead { level: l } => level[id] = Some(l),
                Role::Regular => {}
            }
        }
        for id in 0..n {
            if self.world.nodes[id].role == Role::Regular {
                level[id] = match parent[id] {
                    // The head may have died after being chosen; its level still applies.
                    Some(Endpoint::Node(p)) => self.head_level[p].map(|l| l + 1),
                    Some(Endpoint::Sink) => Some(1),
                    None => None,
                };
            }
        }
        let ch_levels = self
            .ch_levels
            .into_iter()
            .map(|l| l.into_iter().filter(|&c| self.world.nodes[c].is_alive()).collect())
            .collect();
        Setup {
            topology: Topology { parent, level, ch_levels, ancestor_sizes: self.ancestor_sizes },
            ledger: self.ledger,
            heard: self.heard,
            provisional: self.joined,
        }
    }
}

/// Data-phase outcome.
#[derive(Debug, Clone, Default)]
pub struct OperationReport {
    pub ledger: MessageLedger,
    /// `(source, transmissions to reach the sink)` for every reading sent.
    pub hops: Vec<(NodeId, u32)>,
}

/// Every alive node sends one data packet to its parent, deepest first.
/// Cluster heads aggregate what they received plus their own reading into
/// that one packet.
pub fn operate(topology: &Topology, world: &mut World, model: &EnergyModel) -> Result<OperationReport, EngineError> {
    let mut order: Vec<(u32, NodeId)> = world
        .alive_ids()
        .filter_map(|id| topology.level[id].map(|l| (l, id)))
        .collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut received = vec![0u32; world.nodes.len()];
    let mut report = OperationReport::default();
    for (level, u) in order {
        if !world.is_alive(u) {
            continue;
        }
        let Some(parent) = topology.parent[u] else { continue };
        let d = world.distance(Endpoint::Node(u), parent);
        let receivers = match parent {
            Endpoint::Node(p) => vec![p],
            Endpoint::Sink => Vec::new(),
        };
        let mut msg = Message::new(MessageKind::Data, Endpoint::Node(u), receivers, model.data_bits, d);
        if matches!(world.nodes[u].role, Role::ClusterHead { .. }) {
            msg.aggregated = Some(received[u] + 1);
        }
        for &r in report.ledger.transmit(world, model, msg)? {
            received[r] += 1;
        }
        report.hops.push((u, level));
    }
    Ok(report)
}
