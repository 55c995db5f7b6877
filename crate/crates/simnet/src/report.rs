use std::collections::BTreeMap;
use std::fmt::Write as _;

use helia_core::{AsId, Bandwidth, Direction};

use crate::config::{FlowConfig, Requirement, Scenario};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowReport {
    pub name: String,
    pub src: AsId,
    pub rate_factor: f64,
    /// Data packets emitted (renewal carriers excluded).
    pub sent: u64,
    pub delivered: u64,
    /// Delivered packets that were Priority at every hop.
    pub all_priority: u64,
    pub max_delay_ns: u64,
    pub delay_violations: u64,
    pub grants_accepted: u64,
    pub grants_rejected: u64,
    pub hop0_conform_bytes: u64,
    pub hop0_overuse_bytes: u64,
}

impl FlowReport {
    pub(crate) fn new(cfg: &FlowConfig, src: AsId) -> Self {
        FlowReport {
            name: cfg.name.clone(),
            src,
            rate_factor: cfg.rate_factor,
            ..Default::default()
        }
    }

    pub fn honest(&self) -> bool {
        self.rate_factor <= 1.0
    }

    /// Share of first-hop reservation bytes that were demoted for overuse.
    pub fn demoted_share(&self) -> f64 {
        let total = self.hop0_conform_bytes + self.hop0_overuse_bytes;
        if total == 0 {
            0.0
        } else {
            self.hop0_overuse_bytes as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkReport {
    pub bytes: u64,
    pub be_drops: u64,
    pub prio_drops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantRecord {
    pub time_ns: u64,
    pub router: usize,
    pub src: AsId,
    pub direction: Direction,
    pub bw: Bandwidth,
    pub tentative: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpoofReport {
    pub attempts: u64,
    /// Forged packets classified Priority at any router.
    pub priority: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayReport {
    pub injected: u64,
    /// Copies that reached a router.
    pub checked: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObserverReport {
    pub frames: u64,
    pub bytes: u64,
    pub responses: u64,
    pub issued: u64,
    /// Captured frames containing an issued authenticator in the clear.
    pub leaked: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub epsilon_ns: u64,
    pub flows: Vec<FlowReport>,
    pub links: Vec<LinkReport>,
    pub grants: Vec<GrantRecord>,
    /// First request of a flow seen by a router, in simulated ns.
    pub first_request: BTreeMap<(usize, AsId), u64>,
    pub first_grant: BTreeMap<(usize, AsId), u64>,
    pub over_allocation: Vec<String>,
    pub spoof: Option<SpoofReport>,
    pub replay: Option<ReplayReport>,
    pub observer: Option<ObserverReport>,
    pub events: u64,
    pub log_digest: String,
}

impl Report {
    pub(crate) fn new(sc: &Scenario) -> Self {
        Report {
            scenario: sc.name.clone(),
            seed: sc.seed,
            epsilon_ns: sc.router.estimator.epsilon.as_nanos() as u64,
            ..Default::default()
        }
    }

    pub fn flow(&self, name: &str) -> Option<&FlowReport> {
        self.flows.iter().find(|f| f.name == name)
    }

    /// One row per flow.
    pub fn flows_csv(&self) -> String {
        let mut out = String::from(
            "scenario,seed,flow,src_as,rate_factor,sent,delivered,all_priority,max_delay_us,delay_violations,hop0_conform_bytes,hop0_overuse_bytes\n",
        );
        for f in &self.flows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.scenario,
                self.seed,
                f.name,
                f.src.0,
                f.rate_factor,
                f.sent,
                f.delivered,
                f.all_priority,
                f.max_delay_ns / 1_000,
                f.delay_violations,
                f.hop0_conform_bytes,
                f.hop0_overuse_bytes
            );
        }
        out
    }

    /// Scenario-wide counters as `metric,value` rows.
    pub fn summary_csv(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("scenario".into(), self.scenario.clone()),
            ("seed".into(), self.seed.to_string()),
            ("events".into(), self.events.to_string()),
            ("grants".into(), self.grants.len().to_string()),
            ("over_allocation".into(), self.over_allocation.len().to_string()),
            ("log_sha256".into(), self.log_digest.clone()),
        ];
        for (i, l) in self.links.iter().enumerate() {
            rows.push((format!("link{i}_bytes"), l.bytes.to_string()));
            rows.push((format!("link{i}_be_drops"), l.be_drops.to_string()));
            rows.push((format!("link{i}_prio_drops"), l.prio_drops.to_string()));
        }
        if let Some(s) = &self.spoof {
            rows.push(("spoof_attempts".into(), s.attempts.to_string()));
            rows.push(("spoof_priority".into(), s.priority.to_string()));
        }
        if let Some(r) = &self.replay {
            rows.push(("replay_injected".into(), r.injected.to_string()));
            rows.push(("replay_dropped".into(), r.dropped.to_string()));
        }
        if let Some(o) = &self.observer {
            rows.push(("observer_frames".into(), o.frames.to_string()));
            rows.push(("observer_leaked".into(), o.leaked.to_string()));
        }
        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }
}

/// Checks one requirement; the error names a counterexample.
pub fn assert_requirement(r: &Report, req: Requirement) -> Result<(), String> {
    match req {
        Requirement::R1 => {
            if let Some(v) = r.over_allocation.first() {
                return Err(format!("over-allocation: {v}"));
            }
            if let Some((i, l)) = r.links.iter().enumerate().find(|(_, l)| l.prio_drops > 0) {
                return Err(format!("link {i} dropped {} priority packets", l.prio_drops));
            }
            if r.observer.as_ref().is_some_and(|o| o.leaked > 0) {
                return Err("an authenticator crossed the observed link in the clear".into());
            }
            Ok(())
        }
        Requirement::R2 => {
            let bound = 2 * r.epsilon_ns;
            for (&(node, src), &seen) in &r.first_request {
                match r.first_grant.get(&(node, src)) {
                    None => return Err(format!("{src} never granted at hop {node}")),
                    Some(&g) if g - seen > bound => {
                        return Err(format!(
                            "{src} granted at hop {node} {} ms after its first request (bound {} ms)",
                            (g - seen) / 1_000_000,
                            bound / 1_000_000
                        ))
                    }
                    _ => {}
                }
            }
            if r.first_request.is_empty() {
                return Err("no honest request reached any router".into());
            }
            Ok(())
        }
        Requirement::R3 => {
            let s = r.spoof.as_ref().ok_or("scenario has no spoofer")?;
            if s.priority > 2 {
                return Err(format!("{} forged packets got priority in {} attempts", s.priority, s.attempts));
            }
            Ok(())
        }
        Requirement::R4 => {
            let mut any = false;
            for f in r.flows.iter().filter(|f| f.honest()) {
                any = true;
                if f.sent == 0 {
                    return Err(format!("flow {} never sent", f.name));
                }
                if f.delivered != f.sent {
                    return Err(format!("flow {} delivered {} of {}", f.name, f.delivered, f.sent));
                }
                if f.all_priority != f.sent {
                    return Err(format!(
                        "flow {}: {} of {} packets demoted somewhere",
                        f.name,
                        f.sent - f.all_priority,
                        f.sent
                    ));
                }
                if f.delay_violations > 0 {
                    return Err(format!(
                        "flow {}: {} packets over the delay bound (max {} us)",
                        f.name,
                        f.delay_violations,
                        f.max_delay_ns / 1000
                    ));
                }
            }
            if !any {
                return Err("scenario has no conforming flow".into());
            }
            Ok(())
        }
        Requirement::R5 => {
            for f in r.flows.iter().filter(|f| !f.honest()) {
                let expected = 1.0 - 1.0 / f.rate_factor;
                let got = f.demoted_share();
                if (got - expected).abs() > 0.02 {
                    return Err(format!(
                        "flow {} at {}x: {:.4} of bytes demoted, expected {:.2} ± 0.02",
                        f.name, f.rate_factor, got, expected
                    ));
                }
            }
            if let Some(rp) = &r.replay {
                if rp.injected == 0 || rp.dropped != rp.checked {
                    return Err(format!(
                        "{} of {} replayed packets dropped",
                        rp.dropped, rp.checked
                    ));
                }
            }
            Ok(())
        }
    }
}

/// `requirement,status,detail` rows.
pub fn requirements_csv(results: &[(Requirement, Result<(), String>)]) -> String {
    let mut out = String::from("requirement,status,detail\n");
    for (req, res) in results {
        let (status, detail) = match res {
            Ok(()) => ("pass", String::new()),
            Err(e) => ("fail", e.replace(',', ";")),
        };
        let _ = writeln!(out, "{req:?},{status},{detail}");
    }
    out
}
