use helia_core::admission::AllocationMatrix;
use helia_core::crypto::{mac_invocations, reset_mac_invocations, SecretKey};
use helia_core::policing::{MonitorKey, Verdict};
use helia_core::router::{Annotation, Class, RouterConfig, RouterState};
use helia_core::source::{build_reply, Hop, PathPlan, Renewal, SourceService};
use helia_core::wire::{self, DataPkt, Message, SetupFrame};
use helia_core::{AsId, Bandwidth, Direction, IfId, Timestamp};
use proptest::prelude::*;
use std::collections::BTreeSet;

const SRC: AsId = AsId(1);

struct Net {
    routers: Vec<RouterState>,
    plan: PathPlan,
    source: SourceService,
}

fn start() -> Timestamp {
    Timestamp::from_secs(1_000)
}

fn net(n: usize) -> Net {
    let caps = [Bandwidth::gbps(100); 3];
    let mut routers = Vec::new();
    let mut hops = Vec::new();
    let mut source = SourceService::new(SRC);
    for i in 0..n {
        let id = AsId(100 + i as u64);
        let r = RouterState::new(
            id,
            SecretKey::from_bytes([i as u8 + 1; 16]),
            AllocationMatrix::from_capacities(&caps),
            RouterConfig::default(),
            start(),
            i as u64,
        );
        source.add_key(id, r.drkey_for(SRC));
        routers.push(r);
        hops.push(Hop { as_id: id, ingress: IfId(1), egress: IfId(2) });
    }
    Net { routers, plan: PathPlan::forward_all(hops), source }
}

/// Sends a frame down the path and returns the frame as it arrives at the end.
fn run_setup(n: &mut Net, mut frame: SetupFrame, now: Timestamp) -> SetupFrame {
    for (i, r) in n.routers.iter_mut().enumerate() {
        let h = r.handle_setup(&mut frame, i as u8, IfId(1), IfId(2), now);
        assert_eq!(h.decision.class, Class::BestEffort);
        if h.return_to_source {
            break;
        }
    }
    frame
}

fn reserve(n: &mut Net, now: Timestamp) {
    let plan = n.plan.clone();
    let frame = n.source.build_setup(&plan, None, now).unwrap();
    let frame = run_setup(n, frame, now);
    let rep = n.source.ingest_response(&frame.resp);
    assert!(rep.rejected.is_empty() && rep.denied.is_empty(), "{rep:?}");
}

fn forward(n: &mut Net, pkt: &DataPkt, now: Timestamp) -> Vec<Class> {
    let mut bytes = wire::encode_data(pkt).unwrap();
    n.routers
        .iter_mut()
        .enumerate()
        .map(|(i, r)| r.handle_frame(&mut bytes, i as u8, IfId(1), IfId(2), now).decision.class)
        .collect()
}

#[test]
fn five_hop_reservation_gives_priority() {
    let mut n = net(5);
    let now = start();
    reserve(&mut n, now);
    assert_eq!(n.source.grants().len(), 5);
    let plan = n.plan.clone();
    let pkt = n.source.emit_packet(&plan, vec![0; 1000], None, now).unwrap();
    assert_eq!(pkt.encoded_len(), 1042);
    assert_eq!(forward(&mut n, &pkt, now), vec![Class::Priority; 5]);
    // Same bytes again is a replay.
    assert_eq!(forward(&mut n, &pkt, now), vec![Class::Drop; 5]);
}

#[test]
fn two_macs_per_validated_packet() {
    let mut n = net(3);
    let now = start();
    reserve(&mut n, now);
    let plan = n.plan.clone();
    for k in 0..20u64 {
        let t = now + std::time::Duration::from_micros(k * 500);
        let mut pkt = n.source.emit_packet(&plan, vec![7; 200], None, t).unwrap();
        let len = pkt.encoded_len();
        for (i, r) in n.routers.iter_mut().enumerate() {
            reset_mac_invocations();
            let (d, _) = r.handle_data(&mut pkt, len, i as u8, IfId(1), IfId(2), t);
            assert_eq!(d.class, Class::Priority);
            assert_eq!(mac_invocations(), 2);
        }
    }
}

#[test]
fn stale_packet_needs_no_crypto() {
    let mut n = net(1);
    let now = start();
    reserve(&mut n, now);
    let plan = n.plan.clone();
    let mut pkt = n.source.emit_packet(&plan, vec![0; 10], None, now).unwrap();
    let len = pkt.encoded_len();
    reset_mac_invocations();
    let later = now + std::time::Duration::from_secs(2);
    let (d, _) = n.routers[0].handle_data(&mut pkt, len, 0, IfId(1), IfId(2), later);
    assert_eq!(d.class, Class::BestEffort);
    assert_eq!(d.annotations, vec![Annotation::Stale]);
    assert_eq!(mac_invocations(), 0);
}

#[test]
fn flipped_rvf_is_demoted() {
    let mut n = net(2);
    let now = start();
    reserve(&mut n, now);
    let plan = n.plan.clone();
    let mut pkt = n.source.emit_packet(&plan, vec![0; 64], None, now).unwrap();
    pkt.rvfs[1].field.0[2] ^= 1;
    assert_eq!(forward(&mut n, &pkt, now), vec![Class::Priority, Class::BestEffort]);
}

#[test]
fn expired_grant_is_demoted() {
    let mut n = net(1);
    let now = start();
    reserve(&mut n, now);
    let (k, g) = n.source.grants().iter().next().map(|(k, g)| (*k, *g)).unwrap();
    let after = g.ts_exp + std::time::Duration::from_millis(1);
    // Hand-build with the still-known authenticator.
    let pkt = helia_core::source::build_data_packet(SRC, after, &[(0, g.auth)], &[], 0, vec![1; 50]).unwrap();
    let mut bytes = wire::encode_data(&pkt).unwrap();
    let out = n.routers[0].handle_frame(&mut bytes, 0, k.ingress, k.egress, after);
    assert_eq!(out.decision.class, Class::BestEffort);
    assert!(out.decision.annotations.contains(&Annotation::Policed(Verdict::Expired)));
    assert!(n.source.emit_packet(&n.plan.clone(), vec![], None, after).is_err());
}

#[test]
fn bad_tag_and_replayed_setup_get_no_entry() {
    let mut n = net(3);
    let now = start();
    let plan = n.plan.clone();
    let mut frame = n.source.build_setup(&plan, None, now).unwrap();
    frame.req.entries[1].tag.0[0] ^= 0x80;
    let replay = frame.clone();
    let out = run_setup(&mut n, frame, now);
    let filled: Vec<_> = out.resp.entries.iter().map(|e| !e.is_placeholder()).collect();
    assert_eq!(filled, vec![true, false, true]);
    // A replay of the same request is blocked everywhere.
    let again = run_setup(&mut n, replay, now);
    assert!(again.resp.entries.iter().all(|e| e.is_placeholder()));
}

#[test]
fn partial_reservation_single_hop() {
    let mut n = net(5);
    let now = start();
    n.plan.forward = BTreeSet::from([3]);
    let plan = n.plan.clone();
    let frame = n.source.build_setup(&plan, None, now).unwrap();
    assert_eq!(frame.req.entries.len(), 1);
    let out = run_setup(&mut n, frame, now);
    assert_eq!(n.source.ingest_response(&out.resp).accepted, vec![(3, Direction::Forward)]);
}

#[test]
fn corrupted_entry_is_isolated() {
    let mut n = net(3);
    let now = start();
    let plan = n.plan.clone();
    let frame = n.source.build_setup(&plan, None, now).unwrap();
    let mut out = run_setup(&mut n, frame, now);
    out.resp.entries[1].sealed.tag[3] ^= 1;
    let rep = n.source.ingest_response(&out.resp);
    assert_eq!(rep.accepted.len(), 2);
    assert_eq!(rep.rejected, vec![(1, Direction::Forward)]);
}

fn bidirectional(n: &mut Net) {
    n.plan.backward = (0..n.routers.len() as u8).collect();
}

/// Passes a reply back along the path, last hop first.
fn backward(n: &mut Net, pkt: &DataPkt, now: Timestamp) -> Vec<Class> {
    let mut bytes = wire::encode_data(pkt).unwrap();
    let mut out: Vec<Class> = n
        .routers
        .iter_mut()
        .enumerate()
        .rev()
        .map(|(i, r)| r.handle_frame(&mut bytes, i as u8, IfId(2), IfId(1), now).decision.class)
        .collect();
    out.reverse();
    out
}

#[test]
fn reply_within_len_b_validates() {
    let mut n = net(3);
    bidirectional(&mut n);
    let now = start();
    reserve(&mut n, now);
    assert_eq!(n.source.grants().len(), 6);
    let plan = n.plan.clone();
    let pkt = n.source.emit_packet(&plan, vec![0; 100], Some(200), now).unwrap();
    assert_eq!(forward(&mut n, &pkt, now), vec![Class::Priority; 3]);
    let room = 200 - wire::data_header_len(0, 3);
    let reply = build_reply(&pkt, vec![9; room]).unwrap();
    assert_eq!(reply.encoded_len(), 200);
    assert_eq!(backward(&mut n, &reply, now), vec![Class::Priority; 3]);
    assert_eq!(backward(&mut n, &reply, now), vec![Class::Drop; 3]);

    // Forging a longer reply fails the length binding.
    let pkt = n.source.emit_packet(&plan, vec![0; 100], Some(200), now).unwrap();
    let mut long = build_reply(&pkt, vec![9; room]).unwrap();
    long.payload.push(0);
    assert_eq!(backward(&mut n, &long, now), vec![Class::BestEffort; 3]);
    let mut relabelled = long.clone();
    relabelled.len_b = 201;
    assert_eq!(backward(&mut n, &relabelled, now), vec![Class::BestEffort; 3]);
}

#[test]
fn backward_polices_backward_entry() {
    let mut n = net(1);
    bidirectional(&mut n);
    let now = start();
    reserve(&mut n, now);
    let key = MonitorKey { src: SRC, ingress: IfId(2), egress: IfId(1), direction: Direction::Backward };
    assert!(n.routers[0].monitor().entry(&key).is_some());
}

#[test]
fn renewal_rides_priority_and_keeps_authenticator() {
    let mut n = net(4);
    let now = start();
    reserve(&mut n, now);
    let before: Vec<_> = n.source.grants().iter().map(|(k, g)| (*k, g.auth, g.ts_exp)).collect();
    let later = now + std::time::Duration::from_millis(600);
    let plan = n.plan.clone();
    let Renewal::Priority(pkt) = n.source.renew(&plan, None, later).unwrap() else {
        panic!("expected priority renewal");
    };
    let mut bytes = wire::encode_data(&pkt).unwrap();
    let len = bytes.len();
    let mut back = false;
    for (i, r) in n.routers.iter_mut().enumerate() {
        let out = r.handle_frame(&mut bytes, i as u8, IfId(1), IfId(2), later);
        assert_eq!(out.decision.class, Class::Priority);
        back = out.return_to_source;
    }
    assert!(back);
    assert_eq!(bytes.len(), len);
    let Message::Data(done) = wire::decode(&bytes).unwrap() else { panic!() };
    let frame = SetupFrame::decode(&done.payload).unwrap();
    assert_eq!(n.source.ingest_response(&frame.resp).accepted.len(), 4);
    for (k, auth, exp) in before {
        let g = n.source.grants().get(&k).unwrap();
        assert_eq!(g.auth, auth);
        assert!(g.ts_exp > exp);
    }
}

#[test]
fn renewal_after_expiry_falls_back() {
    let mut n = net(2);
    let now = start();
    reserve(&mut n, now);
    let plan = n.plan.clone();
    let late = now + std::time::Duration::from_secs(60);
    assert!(matches!(n.source.renew(&plan, None, late).unwrap(), Renewal::BestEffort(_)));
}

#[test]
fn monitor_entry_is_the_only_state() {
    let mut n = net(1);
    let now = start();
    reserve(&mut n, now);
    let key = MonitorKey { src: SRC, ingress: IfId(1), egress: IfId(2), direction: Direction::Forward };
    let plan = n.plan.clone();
    let mut reference = net(1);
    reserve(&mut reference, now);
    let entry = n.routers[0].monitor_mut().remove(&key).unwrap();
    n.routers[0].monitor_mut().register(key, entry.bw, entry.ts_exp, now);
    for k in 0..50u64 {
        let t = now + std::time::Duration::from_micros(k * 10);
        let pkt = n.source.emit_packet(&plan, vec![0; 1400], None, t).unwrap();
        let a = forward(&mut n, &pkt, t);
        let b = forward(&mut reference, &pkt, t);
        assert_eq!(a, b);
    }
}

#[test]
fn batch_matches_single() {
    let mut a = net(1);
    let mut b = net(1);
    let now = start();
    reserve(&mut a, now);
    reserve(&mut b, now);
    let plan = a.plan.clone();
    let mut pkts = Vec::new();
    for k in 0..200u64 {
        let t = now + std::time::Duration::from_micros(k);
        let mut p = a.source.emit_packet(&plan, vec![0; 900], None, t).unwrap();
        if k % 7 == 0 {
            p.rvfs[0].field.0[0] ^= 1;
        }
        pkts.push(p.clone());
        if k % 11 == 0 {
            pkts.push(p);
        }
    }
    let t = now + std::time::Duration::from_millis(1);
    let items: Vec<_> = pkts
        .iter()
        .map(|p| helia_core::router::BatchItem { pkt: p, wire_len: p.encoded_len(), hop: 0, ingress: IfId(1), egress: IfId(2) })
        .collect();
    let par = a.routers[0].process_batch(&items, t);
    let seq = b.routers[0].process_batch_sequential(&items, t);
    assert_eq!(par, seq);
    assert!(par.iter().any(|d| d.class == Class::Drop));
    assert!(par.iter().any(|d| d.class == Class::Priority));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn corruption_never_drops(pos in 0usize..1100, bit in 0u8..8, payload in 0usize..1000) {
        let mut n = net(1);
        let now = start();
        reserve(&mut n, now);
        let plan = n.plan.clone();
        let pkt = n.source.emit_packet(&plan, vec![0xAB; payload], None, now).unwrap();
        let mut bytes = wire::encode_data(&pkt).unwrap();
        let p = pos % bytes.len();
        bytes[p] ^= 1 << bit;
        let out = n.routers[0].handle_frame(&mut bytes, 0, IfId(1), IfId(2), now);
        prop_assert_ne!(out.decision.class, Class::Drop);
    }

    #[test]
    fn paced_traffic_is_priority(sizes in proptest::collection::vec(100usize..1500, 1..200), gaps in proptest::collection::vec(0u64..2_000_000, 200)) {
        let mut n = net(3);
        let now = start();
        reserve(&mut n, now);
        let plan = n.plan.clone();
        let comp = n.source.compose(std::slice::from_ref(&plan), helia_core::source::Strategy::Concurrent, now);
        let rate = comp.paths[0].rate;
        let mut pacer = helia_core::source::PathPacer::new(rate, RouterConfig::default().bucket_window, now);
        let mut t = now;
        for (s, g) in sizes.iter().zip(&gaps) {
            t = t + std::time::Duration::from_nanos(*g / 1000);
            let hdr = wire::data_header_len(3, 0);
            if !pacer.try_send(hdr + s, t) {
                continue;
            }
            let pkt = n.source.emit_packet(&plan, vec![0; *s], None, t).unwrap();
            let ts = pkt.ts_pkt;
            prop_assert_eq!(forward(&mut n, &pkt, ts), vec![Class::Priority; 3]);
        }
    }
}
