use std::collections::{BTreeSet, HashSet};
use std::hash::Hash;
use std::time::Duration;

use crate::types::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupVerdict {
    Fresh,
    Replay,
}

/// Exact duplicate suppressor over keys carrying a packet timestamp.
///
/// A key is remembered while its timestamp could still pass the currency
/// check, i.e. for `horizon = L + δ` after the timestamp; anything older is
/// rejected upstream anyway.
#[derive(Debug, Clone)]
pub struct DedupWindow<K> {
    horizon: Duration,
    seen: HashSet<K>,
    by_time: BTreeSet<(Timestamp, K)>,
}

impl<K: Hash + Eq + Ord + Copy> DedupWindow<K> {
    pub fn new(horizon: Duration) -> Self {
        DedupWindow {
            horizon,
            seen: HashSet::new(),
            by_time: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn evict(&mut self, now: Timestamp) {
        let cutoff = now.saturating_sub(self.horizon);
        while let Some(&(ts, key)) = self.by_time.first() {
            if ts >= cutoff {
                break;
            }
            self.by_time.pop_first();
            self.seen.remove(&key);
        }
    }

    pub fn check(&mut self, key: K, ts: Timestamp, now: Timestamp) -> DedupVerdict {
        self.evict(now);
        if self.seen.insert(key) {
            self.by_time.insert((ts, key));
            DedupVerdict::Fresh
        } else {
            DedupVerdict::Replay
        }
    }
}
