use rand::RngCore;

use crate::admission::{Admission, PolicyRequest};
use crate::crypto::{
    compute_authenticator, compute_request_tag, ct_eq, derive_drkey, seal_grant, NONCE_LEN,
};
use crate::policing::{DedupVerdict, MonitorKey};
use crate::router::RouterState;
use crate::types::{Direction, IfId, Timestamp};
use crate::wire::{SetupReq, SetupRespEntry};

/// Why a setup request did or did not produce a response entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetupVerdict {
    NotRequested,
    Stale,
    BadAuth,
    Replay(Direction),
    Denied(Direction),
    Granted { direction: Direction, tentative: bool },
}

/// Admission for this router's hop. `ingress`/`egress` are the interfaces
/// the request travels through; the forward flyover covers
/// `(ingress, egress)` and the backward one `(egress, ingress)`.
///
/// Failures never stop the request: the caller forwards it either way and
/// simply gets no entry for the failed direction.
pub fn admit_setup(
    state: &mut RouterState,
    req: &SetupReq,
    hop: u8,
    ingress: IfId,
    egress: IfId,
    now: Timestamp,
) -> (Vec<SetupRespEntry>, Vec<SetupVerdict>) {
    let mut entries = Vec::new();
    let mut verdicts = Vec::new();
    let Some(entry) = req.entry_for(hop) else {
        verdicts.push(SetupVerdict::NotRequested);
        return (entries, verdicts);
    };
    let cfg = *state.config();
    if !req.ts_req.is_current(now, cfg.delta, cfg.lifetime) {
        verdicts.push(SetupVerdict::Stale);
        return (entries, verdicts);
    }
    let key = derive_drkey(state.secret(), req.src);
    let expected = compute_request_tag(&key, req.ts_req, entry.forward, entry.backward, req.demand);
    if !ct_eq(&expected.0, &entry.tag.0) {
        verdicts.push(SetupVerdict::BadAuth);
        return (entries, verdicts);
    }

    for (direction, wanted) in [
        (Direction::Forward, entry.forward),
        (Direction::Backward, entry.backward),
    ] {
        if !wanted {
            continue;
        }
        if state.setup_dedup_check((req.src, req.ts_req, direction), req.ts_req, now)
            == DedupVerdict::Replay
        {
            verdicts.push(SetupVerdict::Replay(direction));
            continue;
        }
        let (a, b) = match direction {
            Direction::Forward => (ingress, egress),
            Direction::Backward => (egress, ingress),
        };
        let preq = PolicyRequest {
            src: req.src,
            ingress: a,
            egress: b,
            direction,
            m_entry: state.matrix().entry(a, b),
            demand: req.demand,
            now,
        };
        let grant = match state.policy_mut().get_bandwidth(&preq) {
            Admission::Granted(g) => g,
            Admission::Denied => {
                verdicts.push(SetupVerdict::Denied(direction));
                continue;
            }
        };
        let auth = compute_authenticator(state.secret(), req.src, a, b);
        let mut nonce = [0u8; NONCE_LEN];
        state.nonce_rng().fill_bytes(&mut nonce);
        let sealed = seal_grant(&key, &auth, grant.bw, grant.ts_exp, nonce);
        state.monitor_mut().register(
            MonitorKey {
                src: req.src,
                ingress: a,
                egress: b,
                direction,
            },
            grant.bw,
            grant.ts_exp,
            now,
        );
        state.record_issued(req.src, auth);
        entries.push(SetupRespEntry {
            hop,
            direction,
            sealed,
            bw: grant.bw,
            ts_exp: grant.ts_exp,
        });
        verdicts.push(SetupVerdict::Granted {
            direction,
            tentative: grant.tentative,
        });
    }
    (entries, verdicts)
}
