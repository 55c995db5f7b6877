//! The event loop.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::io::Write;

use helia_core::admission::{AllocationMatrix, SetupVerdict};
use helia_core::crypto::{SecretKey, ValidationField};
use helia_core::router::{Annotation, Class, FrameOutcome, RouterState};
use helia_core::source::{Hop, PathPlan, Renewal, SourceService, Strategy};
use helia_core::wire::{self, DataPkt, HopField, Message, SetupFrame, SetupResp};
use helia_core::{AsId, Bandwidth, Direction, IfId, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::{AdversaryConfig, ConfigError, FlowConfig, Scenario};
use crate::report::{
    FlowReport, GrantRecord, LinkReport, ObserverReport, ReplayReport, Report, SpoofReport,
};

/// Simulated time zero, as seen by an unskewed clock.
const EPOCH_NS: u64 = 1_000_000_000_000;
const RETRY_NS: u64 = 10_000_000;
const SPOOF_PAYLOAD: usize = 64;

const ROUTER_AS_BASE: u64 = 100;
const FLOW_AS_BASE: u64 = 1_000;
const ATTACKER_AS_BASE: u64 = 100_000;
const FLOODER_AS: AsId = AsId(999_999);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Flow(usize),
    Attacker(usize, usize),
    Flood,
    Spoof,
    Replay(usize),
}

#[derive(Debug, Clone)]
struct Packet {
    id: u64,
    origin: Origin,
    src: AsId,
    bytes: Vec<u8>,
    emitted: u64,
    node: usize,
    is_data: bool,
    all_priority: bool,
    checked: bool,
}

#[derive(Debug, Clone, Copy)]
enum Sender {
    Flow(usize),
    Attacker(usize, usize),
}

enum Ev {
    Arrive(Box<Packet>),
    LinkFree(usize),
    FlowTick(usize),
    FlowRenew(usize),
    Response(Sender, SetupResp),
    FloodTick(usize),
    SpoofTick(usize),
    AttackerRequest(usize, usize),
}

struct Scheduled {
    at: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        (self.at, self.seq) == (o.at, o.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    // Min-heap on (time, insertion order).
    fn cmp(&self, o: &Self) -> Ordering {
        (o.at, o.seq).cmp(&(self.at, self.seq))
    }
}

struct Link {
    prio: VecDeque<Box<Packet>>,
    be: VecDeque<Box<Packet>>,
    busy: bool,
    report: LinkReport,
}

struct Flow {
    cfg: FlowConfig,
    source: SourceService,
    skew: i64,
    carrier: Option<DataPkt>,
    ticking: bool,
    report: FlowReport,
}

struct Attackers {
    sources: Vec<SourceService>,
    skews: Vec<i64>,
    interval: u64,
}

struct Spoofer {
    victim: AsId,
    skew: i64,
    left: u64,
    gap: u64,
}

struct Flood {
    packet: usize,
    gap: u64,
    skew: i64,
}

struct GrantBook {
    /// (router, ingress, egress) -> src -> valid grants (bw, ts_exp, tentative).
    held: HashMap<(usize, IfId, IfId), BTreeMap<AsId, Vec<(Bandwidth, Timestamp, bool)>>>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    now: u64,
    seq: u64,
    next_id: u64,
    queue: BinaryHeap<Scheduled>,
    rng: ChaCha8Rng,
    plan: PathPlan,
    routers: Vec<RouterState>,
    skews: Vec<i64>,
    links: Vec<Link>,
    flows: Vec<Flow>,
    attackers: BTreeMap<usize, Attackers>,
    spoofers: BTreeMap<usize, Spoofer>,
    floods: BTreeMap<usize, Flood>,
    replay_lag: BTreeMap<usize, u64>,
    observe: Option<usize>,
    observed: Vec<Vec<u8>>,
    stop_at: u64,
    end_at: u64,
    grants: GrantBook,
    report: Report,
    digest: Sha256,
    log: Option<&'a mut dyn Write>,
    events: u64,
}

fn ns(d: std::time::Duration) -> u64 {
    d.as_nanos() as u64
}

fn draw_skew(rng: &mut ChaCha8Rng, max: u64) -> i64 {
    if max == 0 {
        0
    } else {
        rng.gen_range(-(max as i64)..=max as i64)
    }
}

fn local(t: u64, skew: i64) -> Timestamp {
    Timestamp((EPOCH_NS + t).saturating_add_signed(skew))
}

fn tx_ns(capacity: Bandwidth, bytes: usize) -> u64 {
    capacity.transmit_ns(bytes as u64).expect("positive capacity")
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario, log: Option<&'a mut dyn Write>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let hops = sc.path.hops;
        let skew_max = ns(sc.path.skew);
        let caps = [sc.path.capacity; 3];
        let mut routers = Vec::with_capacity(hops);
        let mut skews = Vec::with_capacity(hops);
        let mut plan_hops = Vec::with_capacity(hops);
        for i in 0..hops {
            let id = AsId(ROUTER_AS_BASE + i as u64);
            let secret = SecretKey::random(&mut rng);
            let skew = draw_skew(&mut rng, skew_max);
            let seed = rng.gen();
            routers.push(RouterState::new(
                id,
                secret,
                AllocationMatrix::from_capacities(&caps),
                sc.router,
                local(0, skew),
                seed,
            ));
            skews.push(skew);
            plan_hops.push(Hop {
                as_id: id,
                ingress: IfId(1),
                egress: IfId(2),
            });
        }
        let plan = PathPlan::forward_all(plan_hops);
        let links = (0..=hops)
            .map(|_| Link {
                prio: VecDeque::new(),
                be: VecDeque::new(),
                busy: false,
                report: LinkReport::default(),
            })
            .collect();
        let mut sim = Sim {
            sc,
            now: 0,
            seq: 0,
            next_id: 0,
            queue: BinaryHeap::new(),
            rng,
            plan,
            routers,
            skews,
            links,
            flows: Vec::new(),
            attackers: BTreeMap::new(),
            spoofers: BTreeMap::new(),
            floods: BTreeMap::new(),
            replay_lag: BTreeMap::new(),
            observe: None,
            observed: Vec::new(),
            stop_at: ns(sc.duration - sc.drain),
            end_at: ns(sc.duration),
            grants: GrantBook {
                held: HashMap::new(),
            },
            report: Report::new(sc),
            digest: Sha256::new(),
            log,
            events: 0,
        };
        let mut flows = sc.flows.clone();
        for a in &sc.adversaries {
            if let AdversaryConfig::Overuser { factor, start } = a {
                flows.push(FlowConfig {
                    name: format!("overuser{}", flows.len()),
                    rate_factor: *factor,
                    start: *start,
                    ..FlowConfig::default()
                });
            }
        }
        for (i, f) in flows.into_iter().enumerate() {
            sim.add_flow(i, f);
        }
        for (k, a) in sc.adversaries.iter().enumerate() {
            sim.add_adversary(k, a);
        }
        sim
    }

    fn source_for(&mut self, id: AsId) -> SourceService {
        let mut s = SourceService::new(id);
        for r in &self.routers {
            s.add_key(r.as_id(), r.drkey_for(id));
        }
        s
    }

    fn add_flow(&mut self, i: usize, cfg: FlowConfig) {
        let id = AsId(FLOW_AS_BASE + i as u64);
        let source = self.source_for(id);
        let skew = draw_skew(&mut self.rng, ns(self.sc.path.skew));
        let start = ns(cfg.start);
        self.report.flows.push(FlowReport::new(&cfg, id));
        self.flows.push(Flow {
            cfg,
            source,
            skew,
            carrier: None,
            ticking: true,
            report: FlowReport::default(),
        });
        self.schedule(start, Ev::FlowRenew(i));
        self.schedule(start, Ev::FlowTick(i));
    }

    fn add_adversary(&mut self, k: usize, a: &AdversaryConfig) {
        let skew_max = ns(self.sc.path.skew);
        match a {
            AdversaryConfig::BestEffortFlood {
                factor,
                packet,
                start,
            } => {
                let rate = (self.sc.path.capacity.0 as f64 * factor) as u64;
                let gap = Bandwidth(rate.max(1)).transmit_ns(*packet as u64).unwrap().max(1);
                let skew = draw_skew(&mut self.rng, skew_max);
                self.floods.insert(
                    k,
                    Flood {
                        packet: *packet,
                        gap,
                        skew,
                    },
                );
                self.schedule(ns(*start), Ev::FloodTick(k));
            }
            AdversaryConfig::RequestFlood {
                sources,
                interval,
                start,
            } => {
                let n = *sources as usize;
                let mut srcs = Vec::with_capacity(n);
                let mut skews = Vec::with_capacity(n);
                for j in 0..n {
                    let id = AsId(ATTACKER_AS_BASE + (k * 10_000 + j) as u64);
                    srcs.push(self.source_for(id));
                    skews.push(draw_skew(&mut self.rng, skew_max));
                }
                let iv = ns(*interval);
                for j in 0..n {
                    self.schedule(ns(*start) + iv * j as u64 / n as u64, Ev::AttackerRequest(k, j));
                }
                self.attackers.insert(
                    k,
                    Attackers {
                        sources: srcs,
                        skews,
                        interval: iv,
                    },
                );
            }
            AdversaryConfig::Replayer { link, lag } => {
                self.replay_lag.insert(*link, ns(*lag).max(1));
                self.report.replay.get_or_insert_with(ReplayReport::default);
            }
            AdversaryConfig::Spoofer {
                victim,
                attempts,
                rate,
                start,
            } => {
                let idx = self.sc.flows.iter().position(|f| &f.name == victim).expect("validated");
                let skew = draw_skew(&mut self.rng, skew_max);
                self.spoofers.insert(
                    k,
                    Spoofer {
                        victim: AsId(FLOW_AS_BASE + idx as u64),
                        skew,
                        left: *attempts,
                        gap: (1_000_000_000 / rate).max(1),
                    },
                );
                self.report.spoof.get_or_insert_with(SpoofReport::default);
                self.schedule(ns(*start), Ev::SpoofTick(k));
            }
            AdversaryConfig::Overuser { .. } => {}
            AdversaryConfig::LinkObserver { link } => {
                self.observe = Some(*link);
                self.report.observer = Some(ObserverReport::default());
            }
        }
    }

    fn schedule(&mut self, at: u64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Scheduled {
            at,
            seq: self.seq,
            ev,
        });
    }

    fn log_line(&mut self, line: std::fmt::Arguments<'_>) {
        let s = format!("{line}\n");
        self.digest.update(s.as_bytes());
        if let Some(w) = self.log.as_mut() {
            let _ = w.write_all(s.as_bytes());
        }
    }

    fn new_packet(&mut self, origin: Origin, src: AsId, bytes: Vec<u8>, is_data: bool) -> Box<Packet> {
        self.next_id += 1;
        Box::new(Packet {
            id: self.next_id,
            origin,
            src,
            bytes,
            emitted: self.now,
            node: 0,
            is_data,
            all_priority: true,
            checked: false,
        })
    }

    /// A sender's access link: uncongested, propagation delay only.
    fn send(&mut self, pkt: Box<Packet>) {
        let at = self.now + ns(self.sc.path.delay);
        self.links[0].report.bytes += pkt.bytes.len() as u64;
        self.deliver(0, pkt, at);
    }

    /// Hands a packet leaving link `link` to the node behind it.
    fn deliver(&mut self, link: usize, mut pkt: Box<Packet>, at: u64) {
        if self.observe == Some(link) {
            self.observed.push(pkt.bytes.clone());
        }
        if let (Some(&lag), Origin::Flow(f)) = (self.replay_lag.get(&link), pkt.origin) {
            if wire::decode(&pkt.bytes).is_ok_and(|m| matches!(m, Message::Data(_))) {
                let mut copy = pkt.clone();
                self.next_id += 1;
                copy.id = self.next_id;
                copy.origin = Origin::Replay(f);
                copy.is_data = false;
                copy.checked = false;
                copy.node = link;
                self.report.replay.as_mut().unwrap().injected += 1;
                self.schedule(at + lag, Ev::Arrive(copy));
            }
        }
        pkt.node = link;
        self.schedule(at, Ev::Arrive(pkt));
    }

    fn enqueue(&mut self, link: usize, pkt: Box<Packet>, class: Class) {
        let guard = self.sc.path.priority_guard;
        let buffer = self.sc.path.buffer;
        let l = &mut self.links[link];
        if !l.busy {
            self.start_tx(link, pkt);
            return;
        }
        let dropped = match class {
            Class::Priority if l.prio.len() >= guard => {
                l.report.prio_drops += 1;
                Some("drop-priority")
            }
            Class::Priority => {
                l.prio.push_back(pkt.clone());
                None
            }
            _ if l.be.len() >= buffer => {
                l.report.be_drops += 1;
                Some("drop-be")
            }
            _ => {
                l.be.push_back(pkt.clone());
                None
            }
        };
        if let Some(what) = dropped {
            let (t, id) = (self.now, pkt.id);
            self.log_line(format_args!("{t} l{link} p{id} {what}"));
        }
    }

    fn start_tx(&mut self, link: usize, pkt: Box<Packet>) {
        let d = tx_ns(self.sc.path.capacity, pkt.bytes.len());
        let l = &mut self.links[link];
        l.busy = true;
        l.report.bytes += pkt.bytes.len() as u64;
        let done = self.now + d;
        self.schedule(done, Ev::LinkFree(link));
        self.deliver(link, pkt, done + ns(self.sc.path.delay));
    }

    fn link_free(&mut self, link: usize) {
        let l = &mut self.links[link];
        l.busy = false;
        if let Some(p) = l.prio.pop_front().or_else(|| l.be.pop_front()) {
            self.start_tx(link, p);
        }
    }

    fn arrive(&mut self, mut pkt: Box<Packet>) {
        let node = pkt.node;
        if node == self.sc.path.hops {
            self.at_destination(&pkt);
            return;
        }
        let t = local(self.now, self.skews[node]);
        let out = self.routers[node].handle_frame(&mut pkt.bytes, node as u8, IfId(1), IfId(2), t);
        let (now, id) = (self.now, pkt.id);
        let class = out.decision.class;
        let ann = &out.decision.annotations;
        self.log_line(format_args!("{now} n{node} p{id} {:?} {class:?} {ann:?}", pkt.origin));
        self.account(node, &mut pkt, &out, t);
        if out.return_to_source {
            self.return_response(node, &pkt);
            if pkt.bytes.first() != Some(&wire::TYPE_DATA) {
                return;
            }
        }
        match class {
            Class::Drop => {}
            c => self.enqueue(node + 1, pkt, c),
        }
    }

    fn account(&mut self, node: usize, pkt: &mut Packet, out: &FrameOutcome, t: Timestamp) {
        let class = out.decision.class;
        match pkt.origin {
            Origin::Flow(_) => {
                if class != Class::Priority {
                    pkt.all_priority = false;
                }
            }
            Origin::Spoof => {
                if class == Class::Priority {
                    self.report.spoof.as_mut().unwrap().priority += 1;
                }
            }
            Origin::Replay(_) if !pkt.checked => {
                pkt.checked = true;
                let r = self.report.replay.as_mut().unwrap();
                r.checked += 1;
                if class == Class::Drop {
                    r.dropped += 1;
                }
            }
            _ => {}
        }
        let saw_request = out.decision.annotations.iter().any(|a| {
            matches!(a, Annotation::Setup(v) if *v != SetupVerdict::NotRequested)
        });
        if saw_request && matches!(pkt.origin, Origin::Flow(_)) {
            self.report.first_request.entry((node, pkt.src)).or_insert(self.now);
        }
        for e in &out.granted {
            if matches!(pkt.origin, Origin::Flow(_)) {
                self.report.first_grant.entry((node, pkt.src)).or_insert(self.now);
            }
            let tentative = out.decision.annotations.iter().any(|a| {
                matches!(a, Annotation::Setup(SetupVerdict::Granted { direction, tentative: true })
                    if *direction == e.direction)
            });
            self.book_grant(node, pkt.src, e.direction, e.bw, e.ts_exp, tentative, t);
        }
    }

    /// Records a grant and checks the per-pair allocation bound at once.
    #[allow(clippy::too_many_arguments)]
    fn book_grant(
        &mut self,
        node: usize,
        src: AsId,
        dir: Direction,
        bw: Bandwidth,
        ts_exp: Timestamp,
        tentative: bool,
        t: Timestamp,
    ) {
        let (a, b) = match dir {
            Direction::Forward => (IfId(1), IfId(2)),
            Direction::Backward => (IfId(2), IfId(1)),
        };
        let cfg = self.sc.router.estimator;
        let m = self.routers[node].matrix().entry(a, b).0 as u128;
        let pair = self.grants.held.entry((node, a, b)).or_default();
        for v in pair.values_mut() {
            v.retain(|g| g.1 >= t);
        }
        pair.entry(src).or_default().push((bw, ts_exp, tentative));
        let mut firm = 0u128;
        let mut total = 0u128;
        for v in pair.values() {
            // Per source only the largest valid grant counts; a renewal replaces the monitor entry.
            let f = v.iter().filter(|g| !g.2).map(|g| g.0 .0).max().unwrap_or(0);
            let all = v.iter().map(|g| g.0 .0).max().unwrap_or(0);
            firm += f as u128;
            total += all as u128;
        }
        let (num, den) = (cfg.omega.numer() as u128, cfg.omega.denom() as u128);
        if firm * den > m * num || total > m {
            let now = self.now;
            self.report.over_allocation.push(format!(
                "t={now} router {node} pair ({},{}) firm={firm} total={total} M={m}",
                a.0, b.0
            ));
        }
        let now = self.now;
        self.log_line(format_args!(
            "{now} n{node} grant {src} {dir:?} {bw} exp={ts_exp} tentative={tentative}"
        ));
        self.report.grants.push(GrantRecord {
            time_ns: self.now,
            router: node,
            src,
            direction: dir,
            bw,
            tentative,
        });
    }

    fn return_response(&mut self, node: usize, pkt: &Packet) {
        let frame = match wire::decode(&pkt.bytes) {
            Ok(Message::Data(d)) => SetupFrame::decode(&d.payload),
            _ => SetupFrame::decode(&pkt.bytes),
        };
        let Ok(frame) = frame else { return };
        let sender = match pkt.origin {
            Origin::Flow(f) => Sender::Flow(f),
            Origin::Attacker(k, j) => Sender::Attacker(k, j),
            _ => return,
        };
        if let Some(obs) = self.report.observer.as_mut() {
            obs.responses += 1;
            if let Ok(b) = wire::encode_setup_resp(&frame.resp) {
                self.observed.push(b);
            }
        }
        let at = self.now + ns(self.sc.path.delay) * (node as u64 + 1);
        self.schedule(at, Ev::Response(sender, frame.resp));
    }

    fn at_destination(&mut self, pkt: &Packet) {
        let Origin::Flow(f) = pkt.origin else { return };
        if !pkt.is_data {
            return;
        }
        let delay = self.now - pkt.emitted;
        let bound = self.delay_bound(pkt.bytes.len());
        let r = &mut self.flows[f].report;
        r.delivered += 1;
        if pkt.all_priority {
            r.all_priority += 1;
        }
        r.max_delay_ns = r.max_delay_ns.max(delay);
        if delay > bound {
            r.delay_violations += 1;
        }
    }

    /// Propagation plus own transmission plus one maximum-size packet
    /// already in service, per link.
    fn delay_bound(&self, len: usize) -> u64 {
        let p = &self.sc.path;
        let per_link = ns(p.delay) + tx_ns(p.capacity, len) + tx_ns(p.capacity, p.mtu);
        ns(p.delay) + per_link * p.hops as u64
    }

    fn flow_rate(&self, f: usize) -> Bandwidth {
        let fl = &self.flows[f];
        let t = local(self.now, fl.skew);
        let c = fl.source.compose(std::slice::from_ref(&self.plan), Strategy::Concurrent, t);
        Bandwidth((c.paths[0].rate.0 as f64 * fl.cfg.rate_factor) as u64)
    }

    fn flow_tick(&mut self, f: usize) {
        if self.now >= self.stop_at {
            self.flows[f].ticking = false;
            return;
        }
        let rate = self.flow_rate(f);
        if rate.0 == 0 {
            self.schedule(self.now + RETRY_NS, Ev::FlowTick(f));
            return;
        }
        let t = local(self.now, self.flows[f].skew);
        let (pkt, is_data) = match self.flows[f].carrier.take() {
            Some(c) => (c, false),
            None => {
                let payload = vec![0u8; self.flows[f].cfg.payload];
                let plan = self.plan.clone();
                match self.flows[f].source.emit_packet(&plan, payload, None, t) {
                    Ok(p) => (p, true),
                    Err(_) => {
                        self.schedule(self.now + RETRY_NS, Ev::FlowTick(f));
                        return;
                    }
                }
            }
        };
        let bytes = wire::encode_data(&pkt).expect("source packets encode");
        let len = bytes.len();
        if is_data {
            self.flows[f].report.sent += 1;
        }
        let src = self.flows[f].source.as_id();
        let p = self.new_packet(Origin::Flow(f), src, bytes, is_data);
        self.send(p);
        let gap = rate.transmit_ns(len as u64).unwrap().max(1);
        self.schedule(self.now + gap, Ev::FlowTick(f));
    }

    fn flow_renew(&mut self, f: usize) {
        if self.now >= self.stop_at {
            return;
        }
        let t = local(self.now, self.flows[f].skew);
        let plan = self.plan.clone();
        let src = self.flows[f].source.as_id();
        match self.flows[f].source.renew(&plan, None, t) {
            Ok(Renewal::Priority(pkt)) if self.flows[f].ticking => {
                self.flows[f].carrier = Some(pkt);
            }
            Ok(Renewal::Priority(pkt)) => {
                let b = wire::encode_data(&pkt).expect("carrier encodes");
                let p = self.new_packet(Origin::Flow(f), src, b, false);
                self.send(p);
            }
            Ok(Renewal::BestEffort(frame)) => {
                let b = frame.encode().expect("frame encodes");
                let p = self.new_packet(Origin::Flow(f), src, b, false);
                self.send(p);
            }
            Err(_) => {}
        }
        let next = self.now + ns(self.flows[f].cfg.renew_every);
        self.schedule(next, Ev::FlowRenew(f));
    }

    fn attacker_request(&mut self, k: usize, j: usize) {
        if self.now >= self.stop_at {
            return;
        }
        let plan = self.plan.clone();
        let a = self.attackers.get_mut(&k).unwrap();
        let t = local(self.now, a.skews[j]);
        let src = a.sources[j].as_id();
        let frame = a.sources[j].build_setup(&plan, None, t).expect("keys present");
        let iv = a.interval;
        let p = self.new_packet(Origin::Attacker(k, j), src, frame.encode().unwrap(), false);
        self.send(p);
        self.schedule(self.now + iv, Ev::AttackerRequest(k, j));
    }

    fn flood_tick(&mut self, k: usize) {
        if self.now >= self.stop_at {
            return;
        }
        let fl = &self.floods[&k];
        let (packet, gap) = (fl.packet, fl.gap);
        let pkt = DataPkt {
            src: FLOODER_AS,
            backward: false,
            carries_setup: false,
            ts_pkt: local(self.now, fl.skew),
            len_b: 0,
            rvfs: Vec::new(),
            bvfs: Vec::new(),
            payload: vec![0; packet - wire::data_header_len(0, 0)],
        };
        let p = self.new_packet(Origin::Flood, FLOODER_AS, wire::encode_data(&pkt).unwrap(), false);
        self.send(p);
        self.schedule(self.now + gap, Ev::FloodTick(k));
    }

    fn spoof_tick(&mut self, k: usize) {
        let hops = self.sc.path.hops;
        let s = self.spoofers.get_mut(&k).unwrap();
        if s.left == 0 {
            return;
        }
        s.left -= 1;
        let (victim, skew, gap) = (s.victim, s.skew, s.gap);
        let rvfs = (0..hops as u8)
            .map(|hop| HopField {
                hop,
                field: ValidationField(self.rng.gen()),
            })
            .collect();
        let pkt = DataPkt {
            src: victim,
            backward: false,
            carries_setup: false,
            ts_pkt: local(self.now, skew),
            len_b: 0,
            rvfs,
            bvfs: Vec::new(),
            payload: vec![0; SPOOF_PAYLOAD],
        };
        self.report.spoof.as_mut().unwrap().attempts += 1;
        let p = self.new_packet(Origin::Spoof, victim, wire::encode_data(&pkt).unwrap(), false);
        self.send(p);
        self.schedule(self.now + gap, Ev::SpoofTick(k));
    }

    fn response(&mut self, sender: Sender, resp: SetupResp) {
        match sender {
            Sender::Flow(f) => {
                let rep = self.flows[f].source.ingest_response(&resp);
                self.flows[f].report.grants_accepted += rep.accepted.len() as u64;
                self.flows[f].report.grants_rejected += rep.rejected.len() as u64;
            }
            Sender::Attacker(k, j) => {
                self.attackers.get_mut(&k).unwrap().sources[j].ingest_response(&resp);
            }
        }
    }

    fn run(mut self) -> Report {
        while let Some(s) = self.queue.pop() {
            if s.at > self.end_at {
                break;
            }
            self.now = s.at;
            self.events += 1;
            match s.ev {
                Ev::Arrive(p) => self.arrive(p),
                Ev::LinkFree(l) => self.link_free(l),
                Ev::FlowTick(f) => self.flow_tick(f),
                Ev::FlowRenew(f) => self.flow_renew(f),
                Ev::Response(snd, r) => self.response(snd, r),
                Ev::FloodTick(k) => self.flood_tick(k),
                Ev::SpoofTick(k) => self.spoof_tick(k),
                Ev::AttackerRequest(k, j) => self.attacker_request(k, j),
            }
        }
        self.finish()
    }

    fn finish(mut self) -> Report {
        let stats = self.routers[0].monitor().stats().clone();
        for (i, f) in self.flows.iter().enumerate() {
            let r = &mut self.report.flows[i];
            let live = &f.report;
            r.sent = live.sent;
            r.delivered = live.delivered;
            r.all_priority = live.all_priority;
            r.max_delay_ns = live.max_delay_ns;
            r.delay_violations = live.delay_violations;
            r.grants_accepted = live.grants_accepted;
            r.grants_rejected = live.grants_rejected;
            if let Some(s) = stats.get(&f.source.as_id()) {
                r.hop0_conform_bytes = s.conform_bytes;
                r.hop0_overuse_bytes = s.overuse_bytes;
            }
        }
        self.report.links = self.links.iter().map(|l| l.report.clone()).collect();
        if let Some(obs) = self.report.observer.as_mut() {
            let issued: Vec<[u8; 16]> = self
                .routers
                .iter()
                .flat_map(|r| r.issued_authenticators().iter().map(|(_, a)| a.0))
                .collect();
            obs.frames = self.observed.len() as u64;
            obs.bytes = self.observed.iter().map(|b| b.len() as u64).sum();
            obs.issued = issued.len() as u64;
            obs.leaked = self
                .observed
                .iter()
                .filter(|b| b.windows(16).any(|w| issued.iter().any(|a| a == w)))
                .count() as u64;
        }
        self.report.events = self.events;
        self.report.log_digest = hex::encode(self.digest.finalize());
        self.report
    }
}

/// Runs a scenario to completion. The event log goes to `log` when given;
/// its SHA-256 digest is always part of the report.
pub fn run_scenario<'a>(sc: &'a Scenario, log: Option<&'a mut dyn Write>) -> Result<Report, ConfigError> {
    sc.validate()?;
    Ok(Sim::new(sc, log).run())
}
