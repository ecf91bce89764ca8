//! Round driver and lifetime metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::ledger::MessageLedger;
use crate::model::{NodeId, World};
use crate::protocol::{operate, setup, EngineError, Protocol, ProtocolParams, Topology};

/// Stream of the run RNG used for elections; deployment uses stream 0.
const ELECTION_STREAM: u64 = 1;

/// Per-round tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u64,
    pub control_tx: u64,
    pub data_tx: u64,
    /// Transmissions needed by each reading sent this round.
    #[serde(skip)]
    pub hops: Vec<u32>,
    pub deaths: Vec<NodeId>,
    pub alive: usize,
    pub residual_energy: f64,
    /// Energy drained from nodes this round.
    pub energy_spent: f64,
    pub cluster_heads: usize,
}

impl RoundReport {
    pub fn overhead_ratio(&self) -> Option<f64> {
        overhead_ratio(self)
    }

    pub fn average_hops(&self) -> Option<f64> {
        average_hops(self)
    }
}

/// Control transmissions per data transmission; `None` when no data moved.
pub fn overhead_ratio(report: &RoundReport) -> Option<f64> {
    (report.data_tx > 0).then(|| report.control_tx as f64 / report.data_tx as f64)
}

/// Mean hop count over the readings sent in a round.
pub fn average_hops(report: &RoundReport) -> Option<f64> {
    if report.hops.is_empty() {
        return None;
    }
    let total: u64 = report.hops.iter().map(|&h| u64::from(h)).sum();
    Some(total as f64 / report.hops.len() as f64)
}

/// Everything one round produced, for inspection.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub report: RoundReport,
    pub topology: Topology,
    /// Setup messages followed by data messages.
    pub ledger: MessageLedger,
}

/// One setup phase followed by one data phase.
pub fn run_round_detailed<R: rand::Rng + ?Sized>(
    world: &mut World,
    protocol: Protocol,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<RoundOutcome, EngineError> {
    world.round += 1;
    let before = world.total_energy();
    let alive_before: Vec<bool> = world.nodes.iter().map(|n| n.is_alive()).collect();

    let s = setup(world, protocol, params, rng)?;
    let op = operate(&s.topology, world, &params.energy)?;
    let mut ledger = s.ledger;
    ledger.extend(op.ledger);

    let deaths = alive_before
        .iter()
        .zip(&world.nodes)
        .filter(|(was, now)| **was && !now.is_alive())
        .map(|(_, n)| n.id)
        .collect();
    let residual = world.total_energy();
    let report = RoundReport {
        round: world.round,
        control_tx: ledger.control_tx(),
        data_tx: ledger.data_tx(),
        hops: op.hops.iter().map(|&(_, h)| h).collect(),
        deaths,
        alive: world.alive_count(),
        residual_energy: residual,
        energy_spent: before - residual,
        cluster_heads: s.topology.ch_count(),
    };
    Ok(RoundOutcome { report, topology: s.topology, ledger })
}

pub fn run_round<R: rand::Rng + ?Sized>(
    world: &mut World,
    protocol: Protocol,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<RoundReport, EngineError> {
    run_round_detailed(world, protocol, params, rng).map(|o| o.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeResult {
    /// First round at whose end some node was dead; `None` if never reached.
    pub fnd: Option<u64>,
    /// First round at whose end at most half the nodes were alive.
    pub hnd: Option<u64>,
    /// True when the round cap stopped the run before half the nodes died.
    pub censored: bool,
    pub rounds: Vec<RoundReport>,
    /// Unweighted mean of the per-round overhead ratios.
    pub mean_overhead_ratio: Option<f64>,
    /// Unweighted mean of the per-round average hop counts.
    pub mean_average_hops: Option<f64>,
}

fn mean<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// The election RNG of a run with the given seed.
pub fn election_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ELECTION_STREAM);
    rng
}

/// Runs rounds until at most half of the initially deployed nodes are
/// alive, or `round_cap` rounds have run.
pub fn run_lifetime_on(
    world: &mut World,
    protocol: Protocol,
    params: &ProtocolParams,
    seed: u64,
    round_cap: u64,
) -> Result<LifetimeResult, EngineError> {
    let n = world.nodes.len();
    let over = |w: &World| w.alive_count() * 2 <= n;
    let mut rng = election_rng(seed);
    let mut rounds = Vec::new();
    let mut fnd = None;
    let mut hnd = None;
    while !over(world) && (rounds.len() as u64) < round_cap {
        let report = run_round(world, protocol, params, &mut rng)?;
        let r = report.round;
        rounds.push(report);
        if fnd.is_none() && world.alive_count() < n {
            fnd = Some(r);
        }
        if over(world) {
            hnd = Some(r);
        }
    }
    let mean_overhead_ratio = mean(rounds.iter().filter_map(overhead_ratio));
    let mean_average_hops = mean(rounds.iter().filter_map(average_hops));
    Ok(LifetimeResult {
        fnd,
        hnd,
        censored: hnd.is_none(),
        rounds,
        mean_overhead_ratio,
        mean_average_hops,
    })
}

/// Deploys with `config.seed` and runs one lifetime.
pub fn run_lifetime(config: &SimConfig) -> Result<LifetimeResult, EngineError> {
    run_lifetime_seeded(config, config.seed)
}

pub fn run_lifetime_seeded(config: &SimConfig, seed: u64) -> Result<LifetimeResult, EngineError> {
    let mut world = config.build_world(seed)?;
    let params = config.protocol_params(&world)?;
    run_lifetime_on(&mut world, config.protocol, &params, seed, config.round_cap)
}
