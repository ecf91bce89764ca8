//! Per-round message ledger. Every radio transmission goes through
//! [`MessageLedger::transmit`], which charges energy and appends a record, so
//! the ledger alone is enough to recompute every node's energy.

use serde::{Deserialize, Serialize};

use crate::model::{Endpoint, EnergyModel, ModelError, NodeId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// Sink start-of-round beacon (LAMC, PAMC).
    Beacon,
    /// Node -> sink status report.
    Report,
    /// Election totals broadcast by the sink or a cluster head.
    Command,
    /// Cluster-head advertisement.
    Advertisement,
    Join,
    /// Join sent to a better cluster head during finalization.
    Rejoin,
    DeJoin,
    /// MRP discovery probe.
    Probe,
    /// MRP discovery acknowledgement.
    Ack,
    Data,
}

impl MessageKind {
    pub fn is_control(self) -> bool {
        self != MessageKind::Data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: Endpoint,
    /// Nodes charged for reception. The sink receives for free and is never listed.
    pub receivers: Vec<NodeId>,
    pub bits: u32,
    /// Broadcast range or unicast distance in meters.
    pub span: f64,
    /// Signals aggregated by the sender just before sending (data from cluster heads).
    pub aggregated: Option<u32>,
}

impl Message {
    pub fn new(kind: MessageKind, sender: Endpoint, receivers: Vec<NodeId>, bits: u32, span: f64) -> Self {
        Self { kind, sender, receivers, bits, span, aggregated: None }
    }

    /// Energy charged to the sender, or zero for the sink.
    pub fn sender_cost(&self, model: &EnergyModel) -> Result<f64, ModelError> {
        if self.sender == Endpoint::Sink {
            return Ok(0.0);
        }
        let agg = match self.aggregated {
            Some(n) => model.aggregation_cost(self.bits, n)?,
            None => 0.0,
        };
        Ok(agg + model.tx_cost(self.bits, self.span)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageLedger {
    records: Vec<Message>,
    control_tx: u64,
    data_tx: u64,
}

impl MessageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[Message] {
        &self.records
    }

    pub fn control_tx(&self) -> u64 {
        self.control_tx
    }

    pub fn data_tx(&self) -> u64 {
        self.data_tx
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.records.iter().filter(|m| m.kind == kind).count()
    }

    fn push(&mut self, msg: Message) {
        if msg.kind.is_control() {
            self.control_tx += 1;
        } else {
            self.data_tx += 1;
        }
        self.records.push(msg);
    }

    /// Sends `msg`: the sender pays first (it finishes the transmission even
    /// if that kills it), then every listed receiver still alive pays
    /// reception in list order. Dead receivers are dropped from the record.
    ///
    /// Returns the receivers that were actually charged.
    pub fn transmit(&mut self, world: &mut World, model: &EnergyModel, mut msg: Message) -> Result<&[NodeId], ModelError> {
        if let Endpoint::Node(id) = msg.sender {
            debug_assert!(world.is_alive(id), "dead node {id} cannot transmit");
        }
        let cost = msg.sender_cost(model)?;
        world.debit(msg.sender, cost);
        let rx = model.rx_cost(msg.bits)?;
        msg.receivers.retain(|&r| {
            if Endpoint::Node(r) != msg.sender && world.is_alive(r) {
                world.nodes[r].debit(rx);
                true
            } else {
                false
            }
        });
        self.push(msg);
        Ok(&self.records.last().expect("just pushed").receivers)
    }

    pub fn extend(&mut self, other: MessageLedger) {
        for m in other.records {
            self.push(m);
        }
    }

    /// Recomputes node energies by charging every record against `start`,
    /// clamping at zero. Independent of the world state the ledger was
    /// produced on.
    pub fn replay(&self, start: &[f64], model: &EnergyModel) -> Result<Vec<f64>, ModelError> {
        let mut energy = start.to_vec();
        let charge = |energy: &mut Vec<f64>, id: NodeId, cost: f64| {
            energy[id] -= cost;
            if energy[id] <= 0.0 {
                energy[id] = 0.0;
            }
        };
        for m in &self.records {
            if let Endpoint::Node(id) = m.sender {
                charge(&mut energy, id, m.sender_cost(model)?);
            }
            let rx = model.rx_cost(m.bits)?;
            for &r in &m.receivers {
                charge(&mut energy, r, rx);
            }
        }
        Ok(energy)
    }

    /// Nodes appearing in any record as sender or receiver.
    pub fn participants(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.records.iter().flat_map(|m| {
            let s = match m.sender {
                Endpoint::Node(id) => Some(id),
                Endpoint::Sink => None,
            };
            s.into_iter().chain(m.receivers.iter().copied())
        })
    }
}
