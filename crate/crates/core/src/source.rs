//! Source-side service: building setup requests, holding granted
//! authenticators and stamping validation fields on outgoing packets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::Duration;

use thiserror::Error;

use crate::crypto::{
    compute_request_tag, compute_validation_field, unseal_grant, Authenticator, Demand, DrKey,
    BLOCK_LEN,
};
use crate::policing::TokenBucket;
use crate::types::{AsId, Bandwidth, Direction, IfId, Timestamp};
use crate::wire::{
    self, data_header_len, DataPkt, EncodeError, HopField, RequestEntry, SetupFrame, SetupReq,
    SetupResp,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SourceError {
    #[error("no DRKey for {0}")]
    MissingKey(AsId),
    #[error("no flyover grant for hop {hop} ({direction:?})")]
    MissingGrant { hop: u8, direction: Direction },
    #[error("flyover grant for hop {hop} ({direction:?}) has expired")]
    ExpiredGrant { hop: u8, direction: Direction },
    #[error("reply of {len} bytes exceeds the authorised {bound}")]
    ReplyTooLong { len: usize, bound: u16 },
    #[error("request carries no backward validation fields")]
    NoBvfs,
    #[error("hop index {0} is not on the path")]
    BadHop(u8),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("grant store line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One on-path AS with the interfaces the forward traffic uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hop {
    pub as_id: AsId,
    pub ingress: IfId,
    pub egress: IfId,
}

/// A path plus the hops on which forward and backward flyovers are wanted.
/// Hop indices are positions in `hops`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathPlan {
    pub hops: Vec<Hop>,
    pub forward: BTreeSet<u8>,
    pub backward: BTreeSet<u8>,
}

impl PathPlan {
    /// Forward flyovers on every hop, no backward ones.
    pub fn forward_all(hops: Vec<Hop>) -> Self {
        let forward = (0..hops.len() as u8).collect();
        PathPlan {
            hops,
            forward,
            backward: BTreeSet::new(),
        }
    }

    pub fn hop(&self, i: u8) -> Result<&Hop, SourceError> {
        self.hops.get(i as usize).ok_or(SourceError::BadHop(i))
    }

    fn grant_key(&self, i: u8, direction: Direction) -> Result<GrantKey, SourceError> {
        let h = self.hop(i)?;
        Ok(GrantKey {
            provider: h.as_id,
            ingress: h.ingress,
            egress: h.egress,
            direction,
        })
    }
}

/// Identifies a flyover by provider AS, forward-path interfaces and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GrantKey {
    pub provider: AsId,
    pub ingress: IfId,
    pub egress: IfId,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlyoverGrant {
    pub bw: Bandwidth,
    pub ts_exp: Timestamp,
    pub auth: Authenticator,
}

/// Granted flyovers of one source AS.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GrantStore {
    grants: BTreeMap<GrantKey, FlyoverGrant>,
}

impl GrantStore {
    pub fn get(&self, key: &GrantKey) -> Option<&FlyoverGrant> {
        self.grants.get(key)
    }

    pub fn insert(&mut self, key: GrantKey, grant: FlyoverGrant) {
        self.grants.insert(key, grant);
    }

    pub fn len(&self) -> usize {
        self.grants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grants.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GrantKey, &FlyoverGrant)> {
        self.grants.iter()
    }

    pub fn purge_expired(&mut self, now: Timestamp) {
        self.grants.retain(|_, g| g.ts_exp >= now);
    }

    /// One line per grant: `provider ingress egress dir bw ts_exp auth`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, g) in &self.grants {
            let dir = match k.direction {
                Direction::Forward => "fwd",
                Direction::Backward => "bwd",
            };
            writeln!(
                out,
                "{} {} {} {dir} {} {} {}",
                k.provider.0,
                k.ingress.0,
                k.egress.0,
                g.bw.0,
                g.ts_exp.0,
                hex::encode(g.auth.0)
            )
            .unwrap();
        }
        out
    }

    pub fn load(text: &str) -> Result<Self, SourceError> {
        let mut store = GrantStore::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| SourceError::Parse {
                line: n + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return Err(err("expected 7 fields"));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|_| err("bad number"));
            let iface = |s: &str| s.parse::<u16>().map_err(|_| err("bad interface"));
            let direction = match f[3] {
                "fwd" => Direction::Forward,
                "bwd" => Direction::Backward,
                _ => return Err(err("direction must be fwd or bwd")),
            };
            let mut auth = [0u8; BLOCK_LEN];
            hex::decode_to_slice(f[6], &mut auth).map_err(|_| err("bad authenticator"))?;
            store.insert(
                GrantKey {
                    provider: AsId(num(f[0])?),
                    ingress: IfId(iface(f[1])?),
                    egress: IfId(iface(f[2])?),
                    direction,
                },
                FlyoverGrant {
                    bw: Bandwidth(num(f[4])?),
                    ts_exp: Timestamp(num(f[5])?),
                    auth: Authenticator(auth),
                },
            );
        }
        Ok(store)
    }
}

/// Outcome of processing a setup response, per requested slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub accepted: Vec<(u8, Direction)>,
    /// Slots left empty by the router.
    pub denied: Vec<(u8, Direction)>,
    /// Slots whose sealed authenticator failed to open.
    pub rejected: Vec<(u8, Direction)>,
}

/// How several paths share the flyovers they have in common.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Every path sending at once; a shared flyover is split evenly.
    Concurrent,
    /// Paths that share a flyover take turns, each using it fully.
    Maximum,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathRate {
    pub rate: Bandwidth,
    /// Round-robin slot under [`Strategy::Maximum`]; 0 otherwise.
    pub color: usize,
    pub expired: Vec<GrantKey>,
    pub missing: Vec<GrantKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composition {
    pub strategy: Strategy,
    pub paths: Vec<PathRate>,
    pub colors: usize,
    pub quantum: Duration,
}

impl Composition {
    /// Whether path `i` may send at `now`.
    pub fn active(&self, i: usize, now: Timestamp) -> bool {
        match self.strategy {
            Strategy::Concurrent => true,
            Strategy::Maximum => {
                let q = self.quantum.as_nanos() as u64;
                ((now.0 / q) % self.colors.max(1) as u64) as usize == self.paths[i].color
            }
        }
    }
}

pub const MAXIMUM_QUANTUM: Duration = Duration::from_millis(100);

/// Result of a renewal attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Renewal {
    /// The setup frame rides inside a validated data packet.
    Priority(DataPkt),
    /// No valid reservation on the path; the bare frame goes best-effort.
    BestEffort(SetupFrame),
}

pub struct SourceService {
    as_id: AsId,
    keys: HashMap<AsId, DrKey>,
    grants: GrantStore,
    pending: HashMap<Timestamp, PathPlan>,
    last_ts: Timestamp,
}

impl SourceService {
    pub fn new(as_id: AsId) -> Self {
        SourceService {
            as_id,
            keys: HashMap::new(),
            grants: GrantStore::default(),
            pending: HashMap::new(),
            last_ts: Timestamp(0),
        }
    }

    pub fn as_id(&self) -> AsId {
        self.as_id
    }

    /// Stores `K_{i→S}` fetched from AS `provider`.
    pub fn add_key(&mut self, provider: AsId, key: DrKey) {
        self.keys.insert(provider, key);
    }

    pub fn grants(&self) -> &GrantStore {
        &self.grants
    }

    pub fn grants_mut(&mut self) -> &mut GrantStore {
        &mut self.grants
    }

    /// Packet timestamps double as per-source unique identifiers.
    fn next_ts(&mut self, now: Timestamp) -> Timestamp {
        let ts = if now > self.last_ts {
            now
        } else {
            Timestamp(self.last_ts.0 + 1)
        };
        self.last_ts = ts;
        ts
    }

    pub fn build_setup(
        &mut self,
        plan: &PathPlan,
        demand: Option<Demand>,
        now: Timestamp,
    ) -> Result<SetupFrame, SourceError> {
        let ts_req = self.next_ts(now);
        let hops: BTreeSet<u8> = plan.forward.union(&plan.backward).copied().collect();
        let mut entries = Vec::with_capacity(hops.len());
        for i in hops {
            let h = plan.hop(i)?;
            let key = self.keys.get(&h.as_id).ok_or(SourceError::MissingKey(h.as_id))?;
            let forward = plan.forward.contains(&i);
            let backward = plan.backward.contains(&i);
            entries.push(RequestEntry {
                hop: i,
                forward,
                backward,
                tag: compute_request_tag(key, ts_req, forward, backward, demand),
            });
        }
        self.pending.insert(ts_req, plan.clone());
        Ok(SetupFrame::new(SetupReq {
            src: self.as_id,
            ts_req,
            demand,
            entries,
        }))
    }

    /// Opens every filled slot independently; one bad entry does not affect the others.
    pub fn ingest_response(&mut self, resp: &SetupResp) -> IngestReport {
        let mut report = IngestReport::default();
        let Some(plan) = self.pending.remove(&resp.ts_req) else {
            return report;
        };
        for e in &resp.entries {
            let slot = (e.hop, e.direction);
            if e.is_placeholder() {
                report.denied.push(slot);
                continue;
            }
            let Ok(gk) = plan.grant_key(e.hop, e.direction) else {
                report.rejected.push(slot);
                continue;
            };
            let Some(key) = self.keys.get(&gk.provider) else {
                report.rejected.push(slot);
                continue;
            };
            match unseal_grant(key, &e.sealed, e.bw, e.ts_exp) {
                Ok(auth) => {
                    self.grants.insert(
                        gk,
                        FlyoverGrant {
                            bw: e.bw,
                            ts_exp: e.ts_exp,
                            auth,
                        },
                    );
                    report.accepted.push(slot);
                }
                Err(_) => report.rejected.push(slot),
            }
        }
        report
    }

    fn valid_grant(
        &self,
        plan: &PathPlan,
        hop: u8,
        direction: Direction,
        now: Timestamp,
    ) -> Result<&FlyoverGrant, SourceError> {
        let key = plan.grant_key(hop, direction)?;
        let g = self
            .grants
            .get(&key)
            .ok_or(SourceError::MissingGrant { hop, direction })?;
        if now > g.ts_exp {
            return Err(SourceError::ExpiredGrant { hop, direction });
        }
        Ok(g)
    }

    /// Builds a forward packet with RVFs for every planned forward hop. With
    /// `reply_len`, BVFs authorising a reply of at most that many bytes are
    /// added for every planned backward hop.
    pub fn emit_packet(
        &mut self,
        plan: &PathPlan,
        payload: Vec<u8>,
        reply_len: Option<u16>,
        now: Timestamp,
    ) -> Result<DataPkt, SourceError> {
        let mut fwd = Vec::with_capacity(plan.forward.len());
        for &i in &plan.forward {
            fwd.push((i, self.valid_grant(plan, i, Direction::Forward, now)?.auth));
        }
        let mut bwd = Vec::new();
        if reply_len.is_some() {
            for &i in &plan.backward {
                bwd.push((i, self.valid_grant(plan, i, Direction::Backward, now)?.auth));
            }
        }
        let ts = self.next_ts(now);
        Ok(build_data_packet(self.as_id, ts, &fwd, &bwd, reply_len.unwrap_or(0), payload)?)
    }

    /// Decides how a set of paths share their flyovers.
    pub fn compose(&self, plans: &[PathPlan], strategy: Strategy, now: Timestamp) -> Composition {
        let keys: Vec<Vec<GrantKey>> = plans
            .iter()
            .map(|p| {
                p.forward
                    .iter()
                    .filter_map(|&i| p.grant_key(i, Direction::Forward).ok())
                    .collect()
            })
            .collect();
        let mut users: HashMap<GrantKey, u64> = HashMap::new();
        for ks in &keys {
            for k in ks {
                *users.entry(*k).or_default() += 1;
            }
        }
        let colors = match strategy {
            Strategy::Concurrent => vec![0; plans.len()],
            Strategy::Maximum => greedy_coloring(&keys),
        };
        let n_colors = colors.iter().map(|c| c + 1).max().unwrap_or(0);
        let paths = keys
            .iter()
            .zip(&colors)
            .map(|(ks, &color)| {
                let mut rate: Option<u64> = None;
                let mut expired = Vec::new();
                let mut missing = Vec::new();
                for k in ks {
                    let share = match self.grants.get(k) {
                        None => {
                            missing.push(*k);
                            0
                        }
                        Some(g) if now > g.ts_exp => {
                            expired.push(*k);
                            0
                        }
                        Some(g) => match strategy {
                            Strategy::Concurrent => g.bw.0 / users[k],
                            Strategy::Maximum => g.bw.0,
                        },
                    };
                    rate = Some(rate.map_or(share, |r| r.min(share)));
                }
                PathRate {
                    rate: Bandwidth(rate.unwrap_or(0)),
                    color,
                    expired,
                    missing,
                }
            })
            .collect();
        Composition {
            strategy,
            paths,
            colors: n_colors,
            quantum: MAXIMUM_QUANTUM,
        }
    }

    /// Renewal piggybacked on a validated packet when the path's forward
    /// grants are still valid.
    pub fn renew(
        &mut self,
        plan: &PathPlan,
        demand: Option<Demand>,
        now: Timestamp,
    ) -> Result<Renewal, SourceError> {
        let frame = self.build_setup(plan, demand, now)?;
        let mut fwd = Vec::new();
        for &i in &plan.forward {
            match self.valid_grant(plan, i, Direction::Forward, now) {
                Ok(g) => fwd.push((i, g.auth)),
                Err(_) => return Ok(Renewal::BestEffort(frame)),
            }
        }
        let ts = self.next_ts(now);
        let mut pkt = build_data_packet(self.as_id, ts, &fwd, &[], 0, frame.encode()?)?;
        pkt.carries_setup = true;
        Ok(Renewal::Priority(pkt))
    }
}

/// Builds a data packet whose RVFs bind the full encoded length and whose
/// BVFs bind `len_b`.
pub fn build_data_packet(
    src: AsId,
    ts: Timestamp,
    forward: &[(u8, Authenticator)],
    backward: &[(u8, Authenticator)],
    len_b: u16,
    payload: Vec<u8>,
) -> Result<DataPkt, EncodeError> {
    let total = data_header_len(forward.len(), backward.len()) + payload.len();
    let len = u16::try_from(total).map_err(|_| EncodeError::PacketTooLong(total))?;
    Ok(DataPkt {
        src,
        backward: false,
        carries_setup: false,
        ts_pkt: ts,
        len_b,
        rvfs: forward
            .iter()
            .map(|(hop, a)| HopField {
                hop: *hop,
                field: compute_validation_field(a, ts, len),
            })
            .collect(),
        bvfs: backward
            .iter()
            .map(|(hop, a)| HopField {
                hop: *hop,
                field: compute_validation_field(a, ts, len_b),
            })
            .collect(),
        payload,
    })
}

/// Destination side: turns a forward packet into the authorised reply.
pub fn build_reply(request: &DataPkt, payload: Vec<u8>) -> Result<DataPkt, SourceError> {
    if request.bvfs.is_empty() {
        return Err(SourceError::NoBvfs);
    }
    let len = data_header_len(0, request.bvfs.len()) + payload.len();
    if len > request.len_b as usize {
        return Err(SourceError::ReplyTooLong {
            len,
            bound: request.len_b,
        });
    }
    Ok(DataPkt {
        src: request.src,
        backward: true,
        carries_setup: false,
        ts_pkt: request.ts_pkt,
        len_b: request.len_b,
        rvfs: Vec::new(),
        bvfs: request.bvfs.clone(),
        payload,
    })
}

/// Paths sharing a flyover get different colors; lowest free color first.
fn greedy_coloring(keys: &[Vec<GrantKey>]) -> Vec<usize> {
    let mut colors = Vec::with_capacity(keys.len());
    for (i, ks) in keys.iter().enumerate() {
        let taken: BTreeSet<usize> = (0..i)
            .filter(|&j| keys[j].iter().any(|k| ks.contains(k)))
            .map(|j| colors[j])
            .collect();
        colors.push((0..).find(|c| !taken.contains(c)).unwrap());
    }
    colors
}

/// Source-side pacing of one path at its composed rate.
#[derive(Debug, Clone, Copy)]
pub struct PathPacer {
    bucket: TokenBucket,
    rate: Bandwidth,
    window: Duration,
}

impl PathPacer {
    pub fn new(rate: Bandwidth, window: Duration, now: Timestamp) -> Self {
        PathPacer {
            bucket: TokenBucket::new(now),
            rate,
            window,
        }
    }

    pub fn set_rate(&mut self, rate: Bandwidth) {
        self.rate = rate;
    }

    pub fn try_send(&mut self, len: usize, now: Timestamp) -> bool {
        self.bucket.check(self.rate, self.window, len as u64, now)
    }
}

/// Encodes a packet; fails only on invariant violations.
pub fn encode(pkt: &DataPkt) -> Result<Vec<u8>, EncodeError> {
    wire::encode_data(pkt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> GrantKey {
        GrantKey {
            provider: AsId(3),
            ingress: IfId(1),
            egress: IfId(2),
            direction: Direction::Forward,
        }
    }

    #[test]
    fn store_dump_roundtrip() {
        let mut s = GrantStore::default();
        s.insert(
            key(),
            FlyoverGrant {
                bw: Bandwidth::mbps(40),
                ts_exp: Timestamp::from_secs(12),
                auth: Authenticator([7; 16]),
            },
        );
        let text = s.dump();
        assert_eq!(GrantStore::load(&text).unwrap(), s);
        assert!(matches!(GrantStore::load("3 1 2 up 1 1 00"), Err(SourceError::Parse { line: 1, .. })));
    }

    #[test]
    fn timestamps_unique() {
        let mut s = SourceService::new(AsId(1));
        let a = s.next_ts(Timestamp(5));
        let b = s.next_ts(Timestamp(5));
        let c = s.next_ts(Timestamp(4));
        assert!(a < b && b < c);
    }

    #[test]
    fn coloring_separates_shared() {
        let k1 = key();
        let k2 = GrantKey { provider: AsId(4), ..k1 };
        let c = greedy_coloring(&[vec![k1], vec![k1, k2], vec![k2], vec![]]);
        assert_eq!(c, vec![0, 1, 0, 0]);
    }

    #[test]
    fn reply_bounds() {
        let pkt = build_data_packet(
            AsId(1),
            Timestamp(9),
            &[(0, Authenticator([1; 16]))],
            &[(0, Authenticator([2; 16]))],
            100,
            vec![0; 10],
        )
        .unwrap();
        let r = build_reply(&pkt, vec![0; 100 - data_header_len(0, 1)]).unwrap();
        assert_eq!(wire::encode_data(&r).unwrap().len(), 100);
        assert!(matches!(
            build_reply(&pkt, vec![0; 101 - data_header_len(0, 1)]),
            Err(SourceError::ReplyTooLong { .. })
        ));
        let mut none = pkt.clone();
        none.bvfs.clear();
        assert_eq!(build_reply(&none, vec![]), Err(SourceError::NoBvfs));
    }
}
