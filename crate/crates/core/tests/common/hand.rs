//! Hand-trace oracle: a second, deliberately naive implementation of one
//! round of each protocol, written with plain vectors and inline radio
//! arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wsn_mlc::election::ElectionParams;
use wsn_mlc::harness::run_round_detailed;
use wsn_mlc::ledger::{Message, MessageKind};
use wsn_mlc::model::{Endpoint, EnergyModel, Field, Node, Point, Role, World};
use wsn_mlc::power::{build_power_table, MrpCache, MrpMetric};
use wsn_mlc::protocol::{Protocol, ProtocolParams};

const E_ELEC: f64 = 50e-9;
const EPS_AMP: f64 = 10e-12;
const E_AGG: f64 = 5e-9;
const DATA: u32 = 500;
const CTRL: u32 = 10;
const SINK: (f64, f64) = (500.0, 500.0);

#[derive(Clone, Copy, PartialEq)]
enum St {
    Reg,
    Ch(u32),
    Dead,
}

#[derive(Clone)]
struct Hand {
    pos: Vec<(f64, f64)>,
    e: Vec<f64>,
    st: Vec<St>,
    // Front is most recent.
    cache: Vec<Vec<(usize, u32)>>,
    cap: usize,
    sink_mrp: Vec<Option<u32>>,
    ranges: Vec<f64>,
    n_opt: usize,
    phi: f64,
    max_levels: u32,
    squared: bool,
    log: Vec<Message>,
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

fn tx(bits: u32, d: f64) -> f64 {
    let k = bits as f64;
    E_ELEC * k + EPS_AMP * k * (d * d)
}

fn rx(bits: u32) -> f64 {
    E_ELEC * bits as f64
}

struct Cand {
    ch: usize,
    metric: f64,
}

impl Hand {
    fn new(pos: &[(f64, f64)], e: &[f64], cap: usize, phi: f64, max_levels: u32, levels: usize, squared: bool) -> Self {
        let n = pos.len();
        let mut r = 0.0f64;
        for &p in pos {
            r = r.max(dist(p, SINK));
        }
        let r_max = r.max(1.0);
        let ranges = (1..=levels).map(|i| r_max * (i as f64 / levels as f64)).collect();
        Hand {
            pos: pos.to_vec(),
            e: e.to_vec(),
            st: vec![St::Reg; n],
            cache: vec![Vec::new(); n],
            cap,
            sink_mrp: vec![None; n],
            ranges,
            n_opt: ((n as f64).sqrt().round() as usize).max(1),
            phi,
            max_levels,
            squared,
            log: Vec::new(),
        }
    }

    fn alive(&self, u: usize) -> bool {
        self.st[u] != St::Dead
    }

    fn pay(&mut self, u: usize, c: f64) {
        self.e[u] -= c;
        if self.e[u] <= 0.0 {
            self.e[u] = 0.0;
            self.st[u] = St::Dead;
        }
    }

    fn at(&self, x: Endpoint) -> (f64, f64) {
        match x {
            Endpoint::Sink => SINK,
            Endpoint::Node(u) => self.pos[u],
        }
    }

    fn send(&mut self, kind: MessageKind, from: Endpoint, to: Vec<usize>, bits: u32, span: f64, agg: Option<u32>) -> Vec<usize> {
        if let Endpoint::Node(s) = from {
            let mut c = tx(bits, span);
            if let Some(k) = agg {
                c += E_AGG * bits as f64 * k as f64;
            }
            self.pay(s, c);
        }
        let mut got = Vec::new();
        for r in to {
            if Endpoint::Node(r) != from && self.alive(r) {
                self.pay(r, rx(bits));
                got.push(r);
            }
        }
        self.log.push(Message { kind, sender: from, receivers: got.clone(), bits, span, aggregated: agg });
        got
    }

    fn alive_ids(&self) -> Vec<usize> {
        (0..self.pos.len()).filter(|&u| self.alive(u)).collect()
    }

    fn pval(&self, level: u32) -> f64 {
        if self.squared {
            let q = self.ranges[level as usize - 1] / self.ranges[0];
            q * q
        } else {
            level as f64
        }
    }

    fn descent(&self, d: f64) -> (u32, Vec<(f64, bool)>) {
        let top = self.ranges.len() as u32;
        let mut lowest = top;
        let mut steps = Vec::new();
        let mut l = top;
        while l >= 1 {
            let r = self.ranges[l as usize - 1];
            steps.push((r, r >= d));
            if r < d {
                break;
            }
            lowest = l;
            l -= 1;
        }
        (lowest, steps)
    }

    fn probes(&mut self, u: usize, to: Endpoint, steps: &[(f64, bool)]) -> bool {
        let d = dist(self.pos[u], self.at(to));
        for &(r, ack) in steps {
            if !self.alive(u) {
                return false;
            }
            self.send(MessageKind::Probe, Endpoint::Node(u), vec![], CTRL, r, None);
            if ack {
                if let Endpoint::Node(c) = to {
                    if !self.alive(c) {
                        return false;
                    }
                }
                if !self.alive(u) {
                    return false;
                }
                self.send(MessageKind::Ack, to, vec![u], CTRL, d, None);
            }
        }
        self.alive(u)
    }

    fn vote(&self, who: &[usize], quota: f64, metric: &dyn Fn(usize) -> f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut te = 0.0;
        let mut tm = 0.0;
        for &u in who {
            te += self.e[u];
            tm += metric(u);
        }
        let ps: Vec<f64> = who
            .iter()
            .map(|&u| quota * (self.phi * (self.e[u] / te) + (1.0 - self.phi) * (metric(u) / tm)))
            .collect();
        let mut won: Vec<usize> = Vec::new();
        for (i, &u) in who.iter().enumerate() {
            if rng.gen_bool(ps[i].clamp(0.0, 1.0)) {
                won.push(u);
            }
        }
        if won.is_empty() && !who.is_empty() {
            let mut best = 0;
            for i in 1..who.len() {
                if ps[i] > ps[best] {
                    best = i;
                }
            }
            won.push(who[best]);
        }
        won
    }

    /// One setup and data phase. Returns each alive node's hop count.
    fn round(&mut self, proto: Protocol, rng: &mut ChaCha8Rng) -> Vec<(usize, u32)> {
        let n = self.pos.len();
        self.log.clear();
        let mut radius = 0.0f64;
        for u in self.alive_ids() {
            radius = radius.max(dist(self.pos[u], SINK));
        }
        for u in self.alive_ids() {
            self.st[u] = St::Reg;
        }
        let pamc = proto == Protocol::Pamc;

        if proto != Protocol::Eemc {
            let all = self.alive_ids();
            self.send(MessageKind::Beacon, Endpoint::Sink, all, CTRL, radius, None);
        }
        if pamc {
            for u in self.alive_ids() {
                if !self.alive(u) || self.sink_mrp[u].is_some() {
                    continue;
                }
                let (lvl, steps) = self.descent(dist(self.pos[u], SINK));
                if self.probes(u, Endpoint::Sink, &steps) {
                    self.sink_mrp[u] = Some(lvl);
                }
            }
        }
        for u in self.alive_ids() {
            if self.alive(u) {
                let d = dist(self.pos[u], SINK);
                self.send(MessageKind::Report, Endpoint::Node(u), vec![], CTRL, d, None);
            }
        }
        let all = self.alive_ids();
        self.send(MessageKind::Command, Endpoint::Sink, all, CTRL, radius, None);

        let mut parent: Vec<Option<Endpoint>> = vec![None; n];
        let mut sizes: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut range = vec![0.0; n];
        let mut head_level: Vec<Option<u32>> = vec![None; n];
        let mut heard: Vec<Vec<Cand>> = (0..n).map(|_| Vec::new()).collect();
        let mut joined: Vec<Option<usize>> = vec![None; n];
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];

        let make_ch = |h: &mut Hand,
                       range: &mut Vec<f64>,
                       parent: &mut Vec<Option<Endpoint>>,
                       sizes: &mut Vec<Vec<usize>>,
                       head_level: &mut Vec<Option<u32>>,
                       c: usize,
                       lvl: u32,
                       up: Endpoint,
                       sz: Vec<usize>| {
            h.st[c] = St::Ch(lvl);
            parent[c] = Some(up);
            let mut prod = 1.0;
            for &s in &sz {
                prod *= s as f64;
            }
            let mut r = radius / (h.n_opt as f64 * prod).sqrt();
            if pamc {
                r = *h.ranges.iter().find(|&&x| x >= r).unwrap_or(h.ranges.last().unwrap());
            }
            range[c] = r;
            sizes[c] = sz;
            head_level[c] = Some(lvl);
        };

        let who = self.alive_ids();
        let snapshot = self.clone();
        let sink_metric = move |u: usize| {
            if pamc {
                let l = snapshot.sink_mrp[u].unwrap_or(snapshot.ranges.len() as u32);
                1.0 / snapshot.pval(l)
            } else {
                1.0 / dist(snapshot.pos[u], SINK).max(1.0)
            }
        };
        let mut current = self.vote(&who, self.n_opt as f64, &sink_metric, rng);
        for &c in &current {
            make_ch(self, &mut range, &mut parent, &mut sizes, &mut head_level, c, 1, Endpoint::Sink, Vec::new());
        }

        let mut level = 1;
        while !current.is_empty() {
            for &c in &current {
                if !self.alive(c) {
                    continue;
                }
                let hear: Vec<usize> =
                    (0..n).filter(|&u| u != c && self.alive(u) && dist(self.pos[u], self.pos[c]) < range[c]).collect();
                let got = self.send(MessageKind::Advertisement, Endpoint::Node(c), hear, CTRL, range[c], None);
                for u in got {
                    if !self.alive(u) || self.st[u] != St::Reg || !self.alive(c) {
                        continue;
                    }
                    let d = dist(self.pos[u], self.pos[c]);
                    let metric = if pamc {
                        let hit = self.cache[u].iter().position(|&(k, _)| k == c);
                        let lvl = match hit {
                            Some(i) => {
                                let entry = self.cache[u].remove(i);
                                self.cache[u].insert(0, entry);
                                entry.1
                            }
                            None => {
                                let (lvl, steps) = self.descent(d);
                                if self.cap > 0 {
                                    if self.cache[u].len() == self.cap {
                                        self.cache[u].pop();
                                    }
                                    self.cache[u].insert(0, (c, lvl));
                                }
                                if !self.probes(u, Endpoint::Node(c), &steps) {
                                    continue;
                                }
                                lvl
                            }
                        };
                        lvl as f64
                    } else {
                        d
                    };
                    heard[u].push(Cand { ch: c, metric });
                    self.send(MessageKind::Join, Endpoint::Node(u), vec![c], CTRL, d, None);
                    joined[u] = Some(c);
                    members[c].push(u);
                }
            }
            if level >= self.max_levels {
                break;
            }
            let mut next = Vec::new();
            for &c in &current {
                if !self.alive(c) {
                    continue;
                }
                let ok = |h: &Hand, u: usize| h.alive(u) && h.st[u] == St::Reg;
                if members[c].iter().filter(|&&u| ok(self, u)).count() <= 2 {
                    continue;
                }
                let hear: Vec<usize> =
                    (0..n).filter(|&u| u != c && self.alive(u) && dist(self.pos[u], self.pos[c]) < range[c]).collect();
                self.send(MessageKind::Command, Endpoint::Node(c), hear, CTRL, range[c], None);
                let cluster: Vec<usize> = members[c].iter().copied().filter(|&u| ok(self, u)).collect();
                if cluster.is_empty() {
                    continue;
                }
                let snap = self.clone();
                let heard_ref = &heard;
                let metric = move |u: usize| {
                    if pamc {
                        let l = heard_ref[u].iter().find(|k| k.ch == c).unwrap().metric as u32;
                        1.0 / snap.pval(l)
                    } else {
                        1.0 / dist(snap.pos[u], snap.pos[c]).max(1.0)
                    }
                };
                let won = self.vote(&cluster, (cluster.len() as f64).sqrt(), &metric, rng);
                let mut sz = sizes[c].clone();
                sz.push(cluster.len());
                for w in won {
                    make_ch(self, &mut range, &mut parent, &mut sizes, &mut head_level, w, level + 1, Endpoint::Node(c), sz.clone());
                    next.push(w);
                }
            }
            current = next;
            level += 1;
        }

        for u in self.alive_ids() {
            if !self.alive(u) || self.st[u] != St::Reg {
                continue;
            }
            let prov = joined[u].filter(|&c| self.alive(c));
            let chosen = if proto == Protocol::Eemc {
                prov
            } else {
                let mut best: Option<&Cand> = None;
                for k in heard[u].iter().filter(|k| self.alive(k.ch)) {
                    if best.is_none_or(|b| k.metric < b.metric) {
                        best = Some(k);
                    }
                }
                let best = best.map(|k| k.ch);
                if let Some(b) = best {
                    if Some(b) != prov {
                        let d = dist(self.pos[u], self.pos[b]);
                        self.send(MessageKind::Rejoin, Endpoint::Node(u), vec![b], CTRL, d, None);
                        if let Some(old) = prov {
                            if self.alive(u) {
                                let d = dist(self.pos[u], self.pos[old]);
                                self.send(MessageKind::DeJoin, Endpoint::Node(u), vec![old], CTRL, d, None);
                            }
                        }
                    }
                }
                best
            };
            parent[u] = Some(chosen.map_or(Endpoint::Sink, Endpoint::Node));
        }

        // Data phase, deepest level first.
        let mut lv: Vec<Option<u32>> = vec![None; n];
        for u in 0..n {
            lv[u] = match self.st[u] {
                St::Dead => None,
                St::Ch(l) => Some(l),
                St::Reg => match parent[u] {
                    Some(Endpoint::Node(p)) => Some(head_level[p].unwrap() + 1),
                    _ => Some(1),
                },
            };
        }
        let mut order: Vec<(u32, usize)> = (0..n).filter_map(|u| lv[u].map(|l| (l, u))).collect();
        order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut inbox = vec![0u32; n];
        let mut hops = Vec::new();
        for (l, u) in order {
            if !self.alive(u) {
                continue;
            }
            let up = parent[u].unwrap();
            let d = dist(self.pos[u], self.at(up));
            let to = match up {
                Endpoint::Node(p) => vec![p],
                Endpoint::Sink => vec![],
            };
            let agg = matches!(self.st[u], St::Ch(_)).then(|| inbox[u] + 1);
            for r in self.send(MessageKind::Data, Endpoint::Node(u), to, DATA, d, agg) {
                inbox[r] += 1;
            }
            hops.push((u, l));
        }
        hops
    }
}

#[derive(Debug, Clone)]
pub struct Script {
    pub pos: Vec<(f64, f64)>,
    pub e: Vec<f64>,
    pub cap: usize,
    pub phi: f64,
    pub max_levels: u32,
    pub levels: usize,
    pub squared: bool,
}

fn world_of(s: &Script) -> (World, ProtocolParams) {
    let nodes = s
        .pos
        .iter()
        .zip(&s.e)
        .enumerate()
        .map(|(i, (&(x, y), &e))| {
            let mut node = Node::new(i, Point::new(x, y), e);
            node.mrp_cache = MrpCache::new(s.cap);
            node
        })
        .collect();
    let world = World::new(nodes, Point::new(SINK.0, SINK.1), Field::default());
    let radius = world.network_radius().unwrap();
    let params = ProtocolParams {
        election: ElectionParams::for_network(s.phi, s.pos.len()).unwrap(),
        max_levels: s.max_levels,
        energy: EnergyModel::default(),
        power_table: build_power_table(radius.max(1.0), s.levels).unwrap(),
        mrp_metric: if s.squared { MrpMetric::RangeSquared } else { MrpMetric::Ordinal },
    };
    (world, params)
}

/// Runs `rounds` rounds through both implementations and demands identical
/// records, energies, hop counts and PAMC caches after each one.
pub fn check(s: &Script, proto: Protocol, seed: u64, rounds: usize) -> Result<(), String> {
    let (mut world, params) = world_of(s);
    let mut hand = Hand::new(&s.pos, &s.e, s.cap, s.phi, s.max_levels, s.levels, s.squared);
    let mut rng_a = ChaCha8Rng::seed_from_u64(seed);
    let mut rng_b = rng_a.clone();
    for r in 0..rounds {
        if world.alive_count() == 0 {
            break;
        }
        let out = run_round_detailed(&mut world, proto, &params, &mut rng_a).unwrap();
        let hops = hand.round(proto, &mut rng_b);
        ensure_eq!(out.ledger.records(), &hand.log[..], "{} round {} records", proto, r + 1);
        let energies: Vec<f64> = world.nodes.iter().map(|n| n.energy).collect();
        ensure_eq!(&energies, &hand.e, "{} round {} energies", proto, r + 1);
        let dead: Vec<bool> = world.nodes.iter().map(|n| n.role == Role::Dead).collect();
        let hand_dead: Vec<bool> = hand.st.iter().map(|s| *s == St::Dead).collect();
        ensure_eq!(dead, hand_dead);
        let engine_hops: Vec<u32> = out.report.hops.clone();
        let hand_hops: Vec<u32> = hops.iter().map(|h| h.1).collect();
        ensure_eq!(engine_hops, hand_hops);
        for (node, cache) in world.nodes.iter().zip(&hand.cache) {
            let got: Vec<(usize, u32)> = node.mrp_cache.entries().map(|(k, l)| (k, l.get())).collect();
            ensure_eq!(&got, cache);
            ensure_eq!(node.sink_mrp.map(|l| l.get()), hand.sink_mrp[node.id]);
        }
    }
    Ok(())
}

pub fn scripts() -> Vec<Script> {
    let base = |pos: Vec<(f64, f64)>, e: Vec<f64>| Script { pos, e, cap: 10, phi: 0.8, max_levels: 5, levels: 6, squared: false };
    let spread = vec![(100.0, 100.0), (900.0, 120.0), (480.0, 520.0), (300.0, 800.0), (850.0, 900.0)];
    let huddle = vec![(100.0, 100.0), (130.0, 110.0), (90.0, 140.0), (150.0, 150.0), (120.0, 60.0)];
    let line = vec![(0.0, 500.0), (200.0, 500.0), (400.0, 500.0), (600.0, 500.0), (800.0, 500.0)];
    let at_sink = vec![(500.0, 500.0), (500.5, 500.0), (700.0, 500.0), (500.0, 250.0), (0.0, 0.0)];
    vec![
        base(spread.clone(), vec![0.1; 5]),
        base(huddle.clone(), vec![0.1; 5]),
        base(line.clone(), vec![0.1, 0.05, 0.02, 0.08, 0.1]),
        base(at_sink, vec![0.1; 5]),
        // Nearly drained nodes die part-way through setup.
        base(spread.clone(), vec![1e-6, 3e-5, 0.1, 2e-6, 0.1]),
        base(huddle.clone(), vec![4e-6, 0.1, 7e-6, 0.1, 1.2e-5]),
        Script { cap: 0, ..base(huddle.clone(), vec![0.1; 5]) },
        Script { cap: 1, squared: true, ..base(line, vec![0.1; 5]) },
        Script { max_levels: 1, ..base(huddle, vec![0.1; 5]) },
        Script { phi: 0.0, levels: 3, ..base(spread.clone(), vec![0.1; 5]) },
        Script { phi: 1.0, ..base(spread, vec![0.1, 0.02, 0.03, 0.09, 0.05]) },
    ]
}

