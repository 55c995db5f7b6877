//! The per-AS border-router pipeline.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admission::{
    admit_setup, BandwidthPolicy, EstimatorConfig, EstimatorPolicy, EstimatorScope,
    AllocationMatrix, MatrixState, ScheduledUpdate, SetupVerdict,
};
use crate::crypto::{
    compute_authenticator, compute_validation_field, ct_eq, Authenticator, SecretKey,
};
use crate::policing::{DedupVerdict, DedupWindow, Monitor, MonitorKey, Verdict};
use crate::types::{AsId, Bandwidth, Direction, IfId, Timestamp};
use crate::units;
use crate::wire::{self, DataPkt, Message, SetupFrame, SetupRespEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouterConfig {
    /// Tolerated clock deviation δ.
    #[serde(with = "units::duration")]
    pub delta: Duration,
    /// Maximum packet and request lifetime L.
    #[serde(with = "units::duration")]
    pub lifetime: Duration,
    /// Token-bucket interval T.
    #[serde(with = "units::duration")]
    pub bucket_window: Duration,
    pub self_renew: bool,
    pub estimator: EstimatorConfig,
    pub scope: EstimatorScope,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            delta: Duration::from_millis(500),
            lifetime: Duration::from_secs(1),
            bucket_window: Duration::from_millis(50),
            self_renew: false,
            estimator: EstimatorConfig::default(),
            scope: EstimatorScope::PerPair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Class {
    Priority,
    BestEffort,
    Drop,
}

/// Reason attached to a forwarding decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Annotation {
    Malformed,
    Stale,
    MissingField,
    TooLong,
    BadMac,
    Replay,
    Policed(Verdict),
    Setup(SetupVerdict),
    Renewed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardDecision {
    pub class: Class,
    pub egress: IfId,
    pub annotations: Vec<Annotation>,
}

impl ForwardDecision {
    fn new(class: Class, egress: IfId) -> Self {
        ForwardDecision {
            class,
            egress,
            annotations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetupHandling {
    pub decision: ForwardDecision,
    pub entries: Vec<SetupRespEntry>,
    /// This was the last requested hop; the frame goes back to the source.
    pub return_to_source: bool,
}

/// Result of processing one raw frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameOutcome {
    pub decision: ForwardDecision,
    /// Set when a setup frame (bare or riding a data packet) reached its last requested hop.
    pub return_to_source: bool,
    /// Response entries this router wrote into a setup frame.
    pub granted: Vec<SetupRespEntry>,
}

/// Stateless part of data-packet validation: currency, field presence,
/// length binding and the two MACs.
pub fn verify_packet(
    secret: &SecretKey,
    cfg: &RouterConfig,
    pkt: &DataPkt,
    wire_len: usize,
    hop: u8,
    ingress: IfId,
    egress: IfId,
    now: Timestamp,
) -> Result<Direction, Annotation> {
    if !pkt.ts_pkt.is_current(now, cfg.delta, cfg.lifetime) {
        return Err(Annotation::Stale);
    }
    let (field, bound_len, direction) = if pkt.backward {
        if wire_len > pkt.len_b as usize {
            return Err(Annotation::TooLong);
        }
        (pkt.bvf_for(hop), pkt.len_b, Direction::Backward)
    } else {
        let len = u16::try_from(wire_len).map_err(|_| Annotation::TooLong)?;
        (pkt.rvf_for(hop), len, Direction::Forward)
    };
    let field = field.ok_or(Annotation::MissingField)?;
    // Backward traffic physically enters at the forward egress, so the
    // backward authenticator MAC(S, egr, ing) is computed the same way.
    let auth = compute_authenticator(secret, pkt.src, ingress, egress);
    let expected = compute_validation_field(&auth, pkt.ts_pkt, bound_len);
    if !ct_eq(&expected.0, &field.0) {
        return Err(Annotation::BadMac);
    }
    Ok(direction)
}

/// One packet of a validation batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub pkt: &'a DataPkt,
    pub wire_len: usize,
    pub hop: u8,
    pub ingress: IfId,
    pub egress: IfId,
}

/// Runs [`verify_packet`] over a batch, in parallel when the `parallel`
/// feature is enabled.
pub fn verify_batch(
    secret: &SecretKey,
    cfg: &RouterConfig,
    items: &[BatchItem<'_>],
    now: Timestamp,
) -> Vec<Result<Direction, Annotation>> {
    let check = |it: &BatchItem<'_>| {
        verify_packet(secret, cfg, it.pkt, it.wire_len, it.hop, it.ingress, it.egress, now)
    };
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(check).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(check).collect()
    }
}

pub fn verify_batch_sequential(
    secret: &SecretKey,
    cfg: &RouterConfig,
    items: &[BatchItem<'_>],
    now: Timestamp,
) -> Vec<Result<Direction, Annotation>> {
    items
        .iter()
        .map(|it| verify_packet(secret, cfg, it.pkt, it.wire_len, it.hop, it.ingress, it.egress, now))
        .collect()
}

/// Border-router state of one AS. The secret never leaves this struct.
pub struct RouterState {
    as_id: AsId,
    secret: SecretKey,
    matrix: MatrixState,
    policy: Box<dyn BandwidthPolicy>,
    monitor: Monitor,
    data_dedup: DedupWindow<(AsId, Timestamp, bool)>,
    setup_dedup: DedupWindow<(AsId, Timestamp, Direction)>,
    cfg: RouterConfig,
    rng: ChaCha8Rng,
    issued: Vec<(AsId, Authenticator)>,
}

impl RouterState {
    /// Router with the default estimator policy; estimator intervals start at `start`.
    pub fn new(
        as_id: AsId,
        secret: SecretKey,
        matrix: AllocationMatrix,
        cfg: RouterConfig,
        start: Timestamp,
        seed: u64,
    ) -> Self {
        let policy = EstimatorPolicy::new(cfg.estimator, cfg.scope, start);
        Self::with_policy(as_id, secret, matrix, cfg, Box::new(policy), seed)
    }

    pub fn with_policy(
        as_id: AsId,
        secret: SecretKey,
        matrix: AllocationMatrix,
        cfg: RouterConfig,
        policy: Box<dyn BandwidthPolicy>,
        seed: u64,
    ) -> Self {
        let horizon = cfg.lifetime + cfg.delta;
        RouterState {
            as_id,
            secret,
            matrix: MatrixState::new(matrix),
            policy,
            monitor: Monitor::new(cfg.bucket_window),
            data_dedup: DedupWindow::new(horizon),
            setup_dedup: DedupWindow::new(horizon),
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            issued: Vec::new(),
        }
    }

    pub fn as_id(&self) -> AsId {
        self.as_id
    }

    pub fn config(&self) -> &RouterConfig {
        &self.cfg
    }

    pub(crate) fn secret(&self) -> &SecretKey {
        &self.secret
    }

    pub fn matrix(&self) -> &MatrixState {
        &self.matrix
    }

    pub fn policy_mut(&mut self) -> &mut dyn BandwidthPolicy {
        self.policy.as_mut()
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn monitor_mut(&mut self) -> &mut Monitor {
        &mut self.monitor
    }

    pub(crate) fn nonce_rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub(crate) fn setup_dedup_check(
        &mut self,
        key: (AsId, Timestamp, Direction),
        ts: Timestamp,
        now: Timestamp,
    ) -> DedupVerdict {
        self.setup_dedup.check(key, ts, now)
    }

    pub(crate) fn record_issued(&mut self, src: AsId, auth: Authenticator) {
        self.issued.push((src, auth));
    }

    /// Every authenticator this router has handed out, for confidentiality checks.
    pub fn issued_authenticators(&self) -> &[(AsId, Authenticator)] {
        &self.issued
    }

    /// Provisions the DRKey for `remote` (normally fetched out of band).
    pub fn drkey_for(&self, remote: AsId) -> crate::crypto::DrKey {
        crate::crypto::derive_drkey(&self.secret, remote)
    }

    pub fn matrix_update(
        &mut self,
        ingress: IfId,
        egress: IfId,
        value: Bandwidth,
        now: Timestamp,
    ) -> ScheduledUpdate {
        let validity = self.cfg.estimator.epsilon;
        self.matrix.update(ingress, egress, value, now, validity)
    }

    pub fn capacity(&mut self, ingress: IfId, egress: IfId, now: Timestamp) -> Bandwidth {
        self.matrix.capacity(ingress, egress, now)
    }

    /// Ingress handles R, egress handles B; the request is forwarded in every case.
    pub fn handle_setup(
        &mut self,
        frame: &mut SetupFrame,
        hop: u8,
        ingress: IfId,
        egress: IfId,
        now: Timestamp,
    ) -> SetupHandling {
        let (entries, verdicts) = admit_setup(self, &frame.req, hop, ingress, egress, now);
        for e in &entries {
            frame.fill(e.clone());
        }
        let last = frame.req.entries.last().map(|e| e.hop);
        let mut decision = ForwardDecision::new(Class::BestEffort, egress);
        decision
            .annotations
            .extend(verdicts.into_iter().map(Annotation::Setup));
        SetupHandling {
            decision,
            entries,
            return_to_source: last.is_none_or(|h| hop >= h),
        }
    }

    fn finish_data(
        &mut self,
        pkt: &DataPkt,
        wire_len: usize,
        ingress: IfId,
        egress: IfId,
        verified: Result<Direction, Annotation>,
        now: Timestamp,
    ) -> ForwardDecision {
        let direction = match verified {
            Ok(d) => d,
            Err(a) => {
                let mut d = ForwardDecision::new(Class::BestEffort, egress);
                d.annotations.push(a);
                return d;
            }
        };
        if self.data_dedup.check((pkt.src, pkt.ts_pkt, pkt.backward), pkt.ts_pkt, now)
            == DedupVerdict::Replay
        {
            self.monitor.record_replay(pkt.src);
            let mut d = ForwardDecision::new(Class::Drop, egress);
            d.annotations.push(Annotation::Replay);
            return d;
        }
        let key = MonitorKey {
            src: pkt.src,
            ingress,
            egress,
            direction,
        };
        let verdict = self.monitor.police(&key, wire_len as u64, now);
        let class = if verdict == Verdict::Conform {
            Class::Priority
        } else {
            Class::BestEffort
        };
        let mut d = ForwardDecision::new(class, egress);
        d.annotations.push(Annotation::Policed(verdict));
        if verdict == Verdict::Conform && self.cfg.self_renew {
            let m = self.matrix.entry(ingress, egress);
            if self
                .monitor
                .self_renew(key, self.policy.as_mut(), m, now)
                .is_some()
            {
                d.annotations.push(Annotation::Renewed);
            }
        }
        d
    }

    /// Validates a data packet in either direction. A setup frame riding in
    /// the payload is admitted in place afterwards.
    pub fn handle_data(
        &mut self,
        pkt: &mut DataPkt,
        wire_len: usize,
        hop: u8,
        ingress: IfId,
        egress: IfId,
        now: Timestamp,
    ) -> (ForwardDecision, Option<SetupHandling>) {
        let verified = verify_packet(&self.secret, &self.cfg, pkt, wire_len, hop, ingress, egress, now);
        let mut decision = self.finish_data(pkt, wire_len, ingress, egress, verified, now);
        let mut setup = None;
        if pkt.carries_setup && decision.class != Class::Drop {
            match SetupFrame::decode(&pkt.payload) {
                Ok(mut frame) => {
                    let h = self.handle_setup(&mut frame, hop, ingress, egress, now);
                    decision.annotations.extend(h.decision.annotations.iter().copied());
                    pkt.payload = frame.encode().expect("decoded frame re-encodes");
                    setup = Some(h);
                }
                Err(_) => decision.annotations.push(Annotation::Malformed),
            }
        }
        (decision, setup)
    }

    /// Reply direction (D = 1). `ingress`/`egress` are the interfaces the
    /// reply uses, i.e. the forward path's egress and ingress.
    pub fn handle_backward(
        &mut self,
        pkt: &mut DataPkt,
        wire_len: usize,
        hop: u8,
        ingress: IfId,
        egress: IfId,
        now: Timestamp,
    ) -> ForwardDecision {
        debug_assert!(pkt.backward);
        self.handle_data(pkt, wire_len, hop, ingress, egress, now).0
    }

    /// Decodes, processes and re-encodes one frame in place.
    pub fn handle_frame(
        &mut self,
        bytes: &mut Vec<u8>,
        hop: u8,
        ingress: IfId,
        egress: IfId,
        now: Timestamp,
    ) -> FrameOutcome {
        match bytes.first() {
            Some(&wire::TYPE_SETUP_REQ) | Some(&wire::TYPE_SETUP_REQ_DEMAND) => {
                match SetupFrame::decode(bytes) {
                    Ok(mut frame) => {
                        let h = self.handle_setup(&mut frame, hop, ingress, egress, now);
                        *bytes = frame.encode().expect("decoded frame re-encodes");
                        FrameOutcome {
                            decision: h.decision,
                            return_to_source: h.return_to_source,
                            granted: h.entries,
                        }
                    }
                    Err(_) => malformed(egress),
                }
            }
            _ => match wire::decode(bytes) {
                Ok(Message::Data(mut pkt)) => {
                    let wire_len = bytes.len();
                    let (decision, setup) =
                        self.handle_data(&mut pkt, wire_len, hop, ingress, egress, now);
                    if pkt.carries_setup {
                        *bytes = wire::encode_data(&pkt).expect("decoded packet re-encodes");
                    }
                    let (return_to_source, granted) =
                        setup.map_or((false, Vec::new()), |h| (h.return_to_source, h.entries));
                    FrameOutcome {
                        decision,
                        return_to_source,
                        granted,
                    }
                }
                _ => malformed(egress),
            },
        }
    }

    /// Validates a batch: MAC checks run in parallel (with the `parallel`
    /// feature), duplicate suppression and policing in arrival order.
    pub fn process_batch(&mut self, items: &[BatchItem<'_>], now: Timestamp) -> Vec<ForwardDecision> {
        let verified = verify_batch(&self.secret, &self.cfg, items, now);
        items
            .iter()
            .zip(verified)
            .map(|(it, v)| self.finish_data(it.pkt, it.wire_len, it.ingress, it.egress, v, now))
            .collect()
    }

    pub fn process_batch_sequential(
        &mut self,
        items: &[BatchItem<'_>],
        now: Timestamp,
    ) -> Vec<ForwardDecision> {
        let verified = verify_batch_sequential(&self.secret, &self.cfg, items, now);
        items
            .iter()
            .zip(verified)
            .map(|(it, v)| self.finish_data(it.pkt, it.wire_len, it.ingress, it.egress, v, now))
            .collect()
    }
}

fn malformed(egress: IfId) -> FrameOutcome {
    let mut d = ForwardDecision::new(Class::BestEffort, egress);
    d.annotations.push(Annotation::Malformed);
    FrameOutcome {
        decision: d,
        return_to_source: false,
        granted: Vec::new(),
    }
}
