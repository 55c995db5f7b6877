use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::Duration;

use super::bucket::TokenBucket;
use crate::admission::{Admission, BandwidthPolicy, PolicyRequest};
use crate::types::{AsId, Bandwidth, Direction, IfId, Timestamp};

/// One bucket per source, interface pair and direction. The interfaces are
/// the ones the policed traffic physically uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonitorKey {
    pub src: AsId,
    pub ingress: IfId,
    pub egress: IfId,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorEntry {
    pub bw: Bandwidth,
    pub ts_exp: Timestamp,
    pub bucket: TokenBucket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Conform,
    Overuse,
    Expired,
    Unknown,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourceStats {
    pub conform_bytes: u64,
    pub overuse_bytes: u64,
    pub expired_pkts: u64,
    pub replay_pkts: u64,
    pub unknown_pkts: u64,
}

impl SourceStats {
    pub fn merge(&mut self, o: &SourceStats) {
        self.conform_bytes += o.conform_bytes;
        self.overuse_bytes += o.overuse_bytes;
        self.expired_pkts += o.expired_pkts;
        self.replay_pkts += o.replay_pkts;
        self.unknown_pkts += o.unknown_pkts;
    }
}

/// Deterministic per-source traffic monitor.
#[derive(Debug, Clone)]
pub struct Monitor {
    window: Duration,
    entries: HashMap<MonitorKey, MonitorEntry>,
    stats: BTreeMap<AsId, SourceStats>,
}

impl Monitor {
    /// `window` is the bucket interval T (burst = rate · T).
    pub fn new(window: Duration) -> Self {
        Monitor {
            window,
            entries: HashMap::new(),
            stats: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> Duration {
        self.window
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, key: &MonitorKey) -> Option<&MonitorEntry> {
        self.entries.get(key)
    }

    pub fn remove(&mut self, key: &MonitorKey) -> Option<MonitorEntry> {
        self.entries.remove(key)
    }

    /// Creates the entry, or updates rate and expiry of an existing one
    /// while keeping its bucket: repeated requests never add capacity.
    pub fn register(&mut self, key: MonitorKey, bw: Bandwidth, ts_exp: Timestamp, now: Timestamp) {
        self.entries
            .entry(key)
            .and_modify(|e| {
                e.bw = bw;
                e.ts_exp = ts_exp;
            })
            .or_insert(MonitorEntry {
                bw,
                ts_exp,
                bucket: TokenBucket::new(now),
            });
    }

    pub fn police(&mut self, key: &MonitorKey, pkt_len: u64, now: Timestamp) -> Verdict {
        let stats = self.stats.entry(key.src).or_default();
        let Some(e) = self.entries.get_mut(key) else {
            stats.unknown_pkts += 1;
            return Verdict::Unknown;
        };
        if now > e.ts_exp {
            stats.expired_pkts += 1;
            return Verdict::Expired;
        }
        if e.bucket.check(e.bw, self.window, pkt_len, now) {
            stats.conform_bytes += pkt_len;
            Verdict::Conform
        } else {
            stats.overuse_bytes += pkt_len;
            Verdict::Overuse
        }
    }

    pub fn record_replay(&mut self, src: AsId) {
        self.stats.entry(src).or_default().replay_pkts += 1;
    }

    /// Implicit renewal driven by validated traffic: asks the policy exactly
    /// as an explicit request would and updates the entry on success.
    pub fn self_renew(
        &mut self,
        key: MonitorKey,
        policy: &mut dyn BandwidthPolicy,
        m_entry: Bandwidth,
        now: Timestamp,
    ) -> Option<(Bandwidth, Timestamp)> {
        let req = PolicyRequest {
            src: key.src,
            ingress: key.ingress,
            egress: key.egress,
            direction: key.direction,
            m_entry,
            demand: None,
            now,
        };
        match policy.get_bandwidth(&req) {
            Admission::Granted(g) => {
                self.register(key, g.bw, g.ts_exp, now);
                Some((g.bw, g.ts_exp))
            }
            Admission::Denied => None,
        }
    }

    /// Drops entries that expired more than `grace` ago.
    pub fn sweep(&mut self, now: Timestamp, grace: Duration) {
        self.entries.retain(|_, e| e.ts_exp + grace >= now);
    }

    pub fn stats(&self) -> &BTreeMap<AsId, SourceStats> {
        &self.stats
    }

    /// Serialized bucket state: each bucket's 8-byte timestamp, in key order.
    pub fn bucket_state(&self) -> Vec<u8> {
        let mut keys: Vec<&MonitorKey> = self.entries.keys().collect();
        keys.sort();
        keys.into_iter()
            .flat_map(|k| self.entries[k].bucket.to_bytes())
            .collect()
    }
}

/// CSV with one row per source.
pub fn report_csv<'a>(stats: impl IntoIterator<Item = (&'a AsId, &'a SourceStats)>) -> String {
    let mut out = String::from("src_as,conform_bytes,overuse_bytes,expired_pkts,replay_pkts\n");
    for (src, s) in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            src.0, s.conform_bytes, s.overuse_bytes, s.expired_pkts, s.replay_pkts
        );
    }
    out
}

/// Monitor partitioned by source AS. Each shard has a single writer;
/// statistics are merged on read.
#[derive(Debug, Clone)]
pub struct ShardedMonitor {
    shards: Vec<Monitor>,
}

impl ShardedMonitor {
    pub fn new(n: usize, window: Duration) -> Self {
        assert!(n > 0);
        ShardedMonitor {
            shards: (0..n).map(|_| Monitor::new(window)).collect(),
        }
    }

    pub fn shard_index(&self, src: AsId) -> usize {
        (src.0 % self.shards.len() as u64) as usize
    }

    pub fn shard_mut(&mut self, src: AsId) -> &mut Monitor {
        let i = self.shard_index(src);
        &mut self.shards[i]
    }

    pub fn shards_mut(&mut self) -> &mut [Monitor] {
        &mut self.shards
    }

    pub fn merged_stats(&self) -> BTreeMap<AsId, SourceStats> {
        let mut out: BTreeMap<AsId, SourceStats> = BTreeMap::new();
        for s in &self.shards {
            for (src, st) in s.stats() {
                out.entry(*src).or_default().merge(st);
            }
        }
        out
    }
}
