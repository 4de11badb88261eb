//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Set `UPDATE_GOLDEN=1` to rewrite golden traces.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clnp_core::checksum::{adjust_checksum, compute_checksum, verify_checksum, ChecksumVerdict};
use clnp_core::input::{
    expire_reassembly, receive, Delivery, Disposition, NodeConfig, NodeContext, Sink,
};
use clnp_core::netsim::build_topology;
use clnp_core::output::{compose, fragment, DuidCounter, SendRequest};
use clnp_core::pdu::{
    compose_header, option_code, parse_pdu, ClnpHeader, Npdu, OptionParam, Pdu, PduType,
    ReasonForDiscard, CHECKSUM_POS, LIFETIME_POS,
};
use clnp_core::reassembly::{FragmentStore, InsertOutcome};
use clnp_core::routing::{forward, RouteEntry, RoutingTable, StaticInterfaces};
use clnp_core::trace::Action;
use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Check);
type Cuts = Vec<(usize, usize)>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "AC1",
            "codec round-trip and parser fuzzing",
            codec_round_trip,
        ),
        (
            "AC2",
            "checksum compute, verify and incremental adjust",
            checksum_suite,
        ),
        ("AC3", "input test matrix", input_matrix),
        ("AC4", "reassembly matrix", reassembly_matrix),
        ("AC5", "source routing matrix", routing_matrix),
        ("AC6", "forwarding", forwarding),
        ("AC7", "output matrix", output_matrix),
        ("AC8", "end-to-end determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let suite = Instant::now();
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {id} {name}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id} {name}: {why} [{secs:.2}s]");
            }
        }
    }
    let total = suite.elapsed();
    println!(
        "{} of {} criteria passed in {:.2}s",
        criteria.len() - failed,
        criteria.len(),
        total.as_secs_f64()
    );
    if failed > 0 || total > Duration::from_secs(120) {
        std::process::exit(1);
    }
}

fn codec_round_trip() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x8473_0001);
    for i in 0..10_000 {
        let pdu = random_pdu(&mut rng);
        let raw = pdu.encode();
        ensure(
            compose_header(&pdu.header).as_ref() == Ok(&pdu.header_bytes()),
            || format!("case {i}: compose_header disagrees with the encoder"),
        )?;
        match parse_pdu(&raw) {
            Ok(Npdu::Clnp(p)) if p == pdu => {}
            other => {
                return Err(format!(
                    "case {i}: {} parsed as {other:?}",
                    hex::encode(&raw)
                ))
            }
        }
    }
    let mut parsed = 0;
    for i in 0..100_000 {
        let raw: Vec<u8> = if i % 2 == 0 {
            let len = rng.random_range(0..300);
            let mut raw: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            if !raw.is_empty() && rng.random_bool(0.5) {
                raw[0] = 0x81;
            }
            raw
        } else {
            let mut raw = random_pdu(&mut rng).encode();
            for _ in 0..rng.random_range(1..4) {
                let k = rng.random_range(0..raw.len());
                raw[k] = rng.random();
            }
            if rng.random_bool(0.3) {
                raw.truncate(rng.random_range(0..=raw.len()));
            }
            raw
        };
        let outcome = panic::catch_unwind(|| parse_pdu(&raw))
            .map_err(|_| format!("parse_pdu panicked on {}", hex::encode(&raw)))?;
        if let Ok(Npdu::Clnp(p)) = outcome {
            parsed += 1;
            let enc = p.encode();
            ensure(raw.starts_with(&enc), || {
                format!("lossy parse of {}", hex::encode(&raw))
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:?}, limit 30s")
    })?;
    Ok(format!(
        "10000 round trips equal, 100000 fuzz inputs without panic ({parsed} parsed), {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn checksum_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x8473_0002);
    let mut stamped = 0;
    for len in 9..=254usize {
        for _ in 0..8 {
            let mut header: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            header[1] = len as u8;
            let (x, y) = compute_checksum(&header, CHECKSUM_POS).map_err(|e| e.to_string())?;
            header[CHECKSUM_POS] = x;
            header[CHECKSUM_POS + 1] = y;
            ensure(
                verify_checksum(&header, CHECKSUM_POS) == Ok(ChecksumVerdict::Valid),
                || format!("length {len}: stamped header does not verify"),
            )?;
            ensure(fletcher_sums(&header) == (0, 0), || {
                format!("length {len}: sums not zero")
            })?;
            ensure(x != 0 && y != 0, || {
                format!("length {len}: zero octet in stamped checksum")
            })?;
            stamped += 1;
        }
    }

    let mut mismatches = 0;
    let mut cases = 0;
    while cases < 1000 {
        let mut pdu = random_pdu(&mut rng);
        pdu.stamp_checksum();
        let mut header = pdu.header_bytes();
        let k = if cases % 4 == 0 {
            LIFETIME_POS
        } else {
            rng.random_range(0..header.len())
        };
        if k == CHECKSUM_POS || k == CHECKSUM_POS + 1 {
            continue;
        }
        let old = header[k];
        let new = if k == LIFETIME_POS {
            old.wrapping_sub(1)
        } else {
            rng.random()
        };
        header[k] = new;
        let adjusted =
            adjust_checksum(&header, k, old, new, CHECKSUM_POS).map_err(|e| e.to_string())?;
        let full = compute_checksum(&header, CHECKSUM_POS).map_err(|e| e.to_string())?;
        header[CHECKSUM_POS] = adjusted.0;
        header[CHECKSUM_POS + 1] = adjusted.1;
        if adjusted != full || fletcher_sums(&header) != (0, 0) {
            mismatches += 1;
        }
        cases += 1;
    }
    ensure(mismatches == 0, || {
        format!("{mismatches} of 1000 adjust cases disagree")
    })?;
    Ok(format!(
        "{stamped} headers of length 9..254 verify Valid; 1000 adjust cases, 0 mismatches"
    ))
}

fn local_ctx() -> NodeContext {
    NodeContext::new(vec![addr(DST)], NodeConfig::default()).unwrap()
}

fn actions(ctx: &mut NodeContext) -> Vec<Action> {
    ctx.take_events().into_iter().map(|(a, _)| a).collect()
}

fn data_pdu(dst: &str, er: bool, payload: &[u8]) -> Pdu {
    let mut h = ClnpHeader::data(addr(dst), addr(SRC), 16);
    h.flags.er = er;
    let mut p = Pdu::new(h, payload.to_vec()).unwrap();
    p.stamp_checksum();
    p
}

fn transport(pdu: &Pdu) -> Disposition {
    Disposition::DeliverLocal(Delivery {
        sink: Sink::Transport,
        payload: pdu.payload.clone(),
        src: Some(pdu.header.src.clone()),
        dst: Some(pdu.header.dest.clone()),
    })
}

fn input_matrix() -> Check {
    let mut passed = Vec::new();
    let mut case =
        |name: &str, raw: &[u8], expect: &dyn Fn(&Disposition) -> bool, trace: &[Action]| {
            let mut ctx = local_ctx();
            let got = receive(raw, &mut ctx);
            let acts = actions(&mut ctx);
            ensure(expect(&got), || {
                format!("{name}: unexpected disposition {got:?}")
            })?;
            ensure(acts == trace, || {
                format!("{name}: trace {acts:?}, expected {trace:?}")
            })?;
            passed.push(name.to_string());
            Ok::<(), String>(())
        };

    let plain = data_pdu(DST, false, b"fixed and address parts");
    ensure(plain.header.header_length == 17, || {
        "fixed+address header not 17 octets".into()
    })?;
    case(
        "1a-fixed-address",
        &plain.encode(),
        &|d| *d == transport(&plain),
        &[Action::Deliver],
    )?;

    let mut full = initial_pdu(DST, SRC, 7, b"all four parts".to_vec(), false);
    full.header.options.push(OptionParam::new(
        option_code::QOS_MAINTENANCE,
        vec![0xC0, 0x00],
    ));
    full.header
        .options
        .push(OptionParam::new(option_code::PADDING, vec![0; 3]));
    let mut full = Pdu::new(full.header, full.payload).unwrap();
    full.header.seg.as_mut().unwrap().total_length = full.header.segment_length;
    full.stamp_checksum();
    ensure(full.header.header_length == 23 + 4 + 5, || {
        "four-part header length".into()
    })?;
    case(
        "1a-all-parts",
        &full.encode(),
        &|d| *d == transport(&full),
        &[Action::Deliver],
    )?;

    let reason = ReasonForDiscard::incorrect_checksum();
    let mut er_header = ClnpHeader::data(addr(DST), addr(IS1), 16);
    er_header.pdu_type = PduType::ErrorReport;
    er_header.options.push(reason.to_option());
    let mut er = Pdu::new(er_header, plain.header_bytes()).unwrap();
    er.stamp_checksum();
    case(
        "1b-error-report",
        &er.encode(),
        &|d| matches!(d, Disposition::DeliverLocal(Delivery { sink: Sink::ErrorReport(Some(r)), .. }) if *r == reason),
        &[Action::Deliver],
    )?;

    let inactive = [&[0x00u8][..], b"inactive protocol"].concat();
    case(
        "1c-inactive",
        &inactive,
        &|d| matches!(d, Disposition::DeliverLocal(Delivery { sink: Sink::Inactive, payload, .. }) if payload == b"inactive protocol"),
        &[Action::Deliver],
    )?;

    let mut corrupted = plain.encode();
    corrupted[LIFETIME_POS] ^= 0x04;
    case(
        "1d-bit-error",
        &corrupted,
        &|d| {
            *d == Disposition::Discarded {
                reason,
                error_report: None,
            }
        },
        &[Action::Discard],
    )?;

    let elsewhere = data_pdu("490003", false, b"for another system");
    case(
        "1e-other-system",
        &elsewhere.encode(),
        &|d| *d == Disposition::ForwardCandidate(elsewhere.clone()),
        &[],
    )?;

    let mut unchecked = plain.clone();
    unchecked.header.checksum = [0, 0];
    ensure(
        unchecked.checksum_verdict() == ChecksumVerdict::NotUsed,
        || "zero checksum not NotUsed".into(),
    )?;
    case(
        "2a-zero-checksum",
        &unchecked.encode(),
        &|d| *d == transport(&unchecked),
        &[Action::Deliver],
    )?;

    ensure(plain.checksum_verdict() == ChecksumVerdict::Valid, || {
        "stamped checksum not Valid".into()
    })?;
    case(
        "2b-no-error",
        &plain.encode(),
        &|d| *d == transport(&plain),
        &[Action::Deliver],
    )?;

    let reporting = data_pdu(DST, true, b"report my errors");
    let mut corrupted = reporting.encode();
    corrupted[LIFETIME_POS] ^= 0x04;
    let corrupted_header = corrupted[..usize::from(corrupted[1])].to_vec();
    case(
        "2c-bit-error-er",
        &corrupted,
        &|d| match d {
            Disposition::Discarded {
                reason: r,
                error_report: Some(er),
            } => {
                *r == reason
                    && er.header.pdu_type == PduType::ErrorReport
                    && er.header.dest == addr(SRC)
                    && er.header.src == addr(DST)
                    && er.header.find_option(option_code::REASON_FOR_DISCARD)
                        == Some(&reason.to_option())
                    && er.payload == corrupted_header
                    && er.checksum_verdict() == ChecksumVerdict::Valid
            }
            _ => false,
        },
        &[Action::Discard, Action::EmitEr],
    )?;

    // An end system never relays: the foreign PDU is discarded in the simulator.
    let text = format!(
        "node a es addr {SRC}\nnode b es addr {DST}\nlink a.e0 b.e0 mtu 1500 delay 0\n\
         route a default via {DST} dev e0\nroute b default via {SRC} dev e0\n\
         inject_raw t=0 node=b dev=e0 hex={}\n",
        hex::encode(elsewhere.encode())
    );
    let mut sim = build_topology(&text).map_err(|e| e.to_string())?;
    sim.run_to_completion();
    let discards: Vec<_> = sim.trace().of_action(Action::Discard).collect();
    ensure(
        discards.len() == 1 && discards[0].detail.contains("destination-unknown"),
        || format!("end system kept a foreign PDU: {}", sim.trace()),
    )?;

    Ok(format!("{} cases: {}", passed.len(), passed.join(", ")))
}

struct Originals {
    a: Pdu,
    b: Pdu,
    c: Pdu,
}

fn originals() -> Originals {
    let data = |n: usize, salt: u8| {
        (0..n)
            .map(|i| (i as u8).wrapping_mul(31) ^ salt)
            .collect::<Vec<_>>()
    };
    Originals {
        a: initial_pdu(DST, SRC, 101, data(300, 0x11), true),
        b: initial_pdu(DST, SRC, 102, data(300, 0x22), true),
        c: initial_pdu(DST, SRC, 103, data(200, 0x33), true),
    }
}

/// Eight segments in a fixed scrambled order; the last one listed is B's
/// final segment placed sixth.
fn eight_segments(o: &Originals, overlap: bool) -> Vec<Pdu> {
    let (a, b, c): (Cuts, Cuts, Cuts) = if overlap {
        (
            vec![(0, 160), (96, 256), (200, 300)],
            vec![(0, 104), (104, 208), (136, 300)],
            vec![(0, 120), (64, 200)],
        )
    } else {
        (
            vec![(0, 104), (104, 208), (208, 300)],
            vec![(0, 104), (104, 208), (208, 300)],
            vec![(0, 104), (104, 200)],
        )
    };
    let seg = |p: &Pdu, r: &[(usize, usize)], i: usize| segment_of(p, r[i].0, r[i].1);
    vec![
        seg(&o.c, &c, 1),
        seg(&o.a, &a, 2),
        seg(&o.b, &b, 0),
        seg(&o.a, &a, 0),
        seg(&o.c, &c, 0),
        seg(&o.b, &b, 2),
        seg(&o.a, &a, 1),
        seg(&o.b, &b, 1),
    ]
}

fn reassembly_matrix() -> Check {
    let o = originals();
    for overlap in [false, true] {
        let label = if overlap {
            "3b overlap"
        } else {
            "3a no overlap"
        };
        let segments = eight_segments(&o, overlap);
        ensure(segments.len() == 8, || {
            format!("{label}: not eight segments")
        })?;

        let mut store = FragmentStore::new();
        let mut rebuilt = Vec::new();
        for s in &segments {
            if let InsertOutcome::Complete(p) = store
                .insert_fragment(s, 0, 10_000)
                .map_err(|e| e.to_string())?
            {
                rebuilt.push(p.encode());
            }
        }
        let mut want = vec![o.a.encode(), o.b.encode(), o.c.encode()];
        want.sort();
        rebuilt.sort();
        ensure(rebuilt == want, || {
            format!("{label}: rebuilt PDUs differ from the originals")
        })?;

        let mut ctx = local_ctx();
        let mut delivered = Vec::new();
        for (i, s) in segments.iter().enumerate() {
            ctx.now = i as u64;
            if let Disposition::DeliverLocal(d) = receive(&s.encode(), &mut ctx) {
                delivered.push(d.payload);
            }
        }
        let acts = actions(&mut ctx);
        let mut want: Vec<_> = [&o.a, &o.b, &o.c]
            .iter()
            .map(|p| p.payload.clone())
            .collect();
        want.sort();
        delivered.sort();
        ensure(delivered == want, || {
            format!("{label}: delivered payloads differ")
        })?;
        ensure(
            acts.iter().filter(|a| **a == Action::Reassembled).count() == 3,
            || format!("{label}: REASSEMBLED count {acts:?}"),
        )?;
        ensure(ctx.reassembly.is_empty(), || {
            format!("{label}: buffers left over")
        })?;
    }

    // 3c: B's last segment never arrives.
    let mut segments = eight_segments(&o, false);
    segments.remove(5);
    let mut ctx = local_ctx();
    let mut delivered = 0;
    for (i, s) in segments.iter().enumerate() {
        ctx.now = i as u64;
        if matches!(receive(&s.encode(), &mut ctx), Disposition::DeliverLocal(_)) {
            delivered += 1;
        }
    }
    ctx.take_events();
    ctx.now = 9_999;
    ensure(expire_reassembly(&mut ctx).is_empty(), || {
        "3c: expired before its deadline".into()
    })?;
    ctx.now = 2 + NodeConfig::default().reassembly_lifetime_ms;
    let reports = expire_reassembly(&mut ctx);
    let events = ctx.take_events();
    let expires: Vec<_> = events
        .iter()
        .filter(|(a, _)| *a == Action::Expire)
        .collect();
    ensure(delivered == 2, || {
        format!("3c: {delivered} PDUs delivered, expected 2")
    })?;
    ensure(
        expires.len() == 1 && expires[0].1.contains("duid=102"),
        || format!("3c: expiry events {events:?}"),
    )?;
    ensure(reports.len() == 1, || {
        "3c: no error report for the incomplete PDU".into()
    })?;
    ensure(
        reports[0]
            .header
            .find_option(option_code::REASON_FOR_DISCARD)
            == Some(&ReasonForDiscard::of(ReasonForDiscard::INCOMPLETE_PDU).to_option()),
        || "3c: wrong reason in error report".into(),
    )?;

    // The same matrix through the simulator.
    let mut sim =
        build_topology(&scenario("reassembly_out_of_order.scn")).map_err(|e| e.to_string())?;
    sim.run_to_completion();
    for i in 0..3 {
        let payload = sim.injection_payload(i).unwrap();
        ensure(
            sim.deliveries()
                .iter()
                .filter(|d| d.node == "dst" && d.delivery.payload == payload)
                .count()
                == 1,
            || format!("scenario 3a: injection {i} not delivered exactly once"),
        )?;
    }
    let mut sim = build_topology(&scenario("reassembly_timeout.scn")).map_err(|e| e.to_string())?;
    sim.run_to_completion();
    let expire: Vec<_> = sim.trace().of_action(Action::Expire).collect();
    ensure(
        expire.len() == 1 && expire[0].detail.contains("duid=1 "),
        || format!("scenario 3c: EXPIRE records {expire:?}"),
    )?;
    ensure(sim.trace().count(Action::EmitEr) == 1, || {
        "scenario 3c: EMIT_ER missing".into()
    })?;
    ensure(
        sim.deliveries().iter().filter(|d| d.node == "dst").count() == 2,
        || "scenario 3c: other PDUs not delivered".into(),
    )?;

    // Property: fragment, permute, duplicate, reassemble.
    let mut rng = ChaCha8Rng::seed_from_u64(0x8473_0004);
    let mut cases = 0;
    while cases < 500 {
        let len = rng.random_range(1..4000);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let original = initial_pdu(DST, SRC, rng.random(), payload, rng.random_bool(0.5));
        let mtu = rng.random_range(64..1500);
        if original.encoded_len() <= mtu {
            continue;
        }
        let mut pieces = fragment(&original, mtu).map_err(|e| e.to_string())?;
        let dups: Vec<_> = pieces
            .iter()
            .filter(|_| rng.random_bool(0.25))
            .cloned()
            .collect();
        pieces.extend(dups);
        pieces.shuffle(&mut rng);
        let mut store = FragmentStore::new();
        let mut first = None;
        for p in &pieces {
            if let InsertOutcome::Complete(whole) = store
                .insert_fragment(p, 0, 10_000)
                .map_err(|e| e.to_string())?
            {
                first.get_or_insert(whole);
            }
        }
        ensure(first.map(|p| p.encode()) == Some(original.encode()), || {
            format!("property case {cases}: len {len} mtu {mtu} not reassembled byte-identically")
        })?;
        cases += 1;
    }

    Ok("3a and 3b rebuild 3 byte-identical PDUs from 8 segments; 3c expires only the incomplete PDU; 500 property cases".into())
}

struct RoutingCase {
    label: &'static str,
    present: &'static [&'static str],
    hops: [&'static str; 2],
    kind: &'static str,
    deliver: bool,
    reason: Option<&'static str>,
}

fn routing_cases() -> Vec<RoutingCase> {
    let all: &'static [&'static str] = &[IS1, IS2, DST];
    let c = |label, present, hops, kind, reason: Option<&'static str>| RoutingCase {
        label,
        present,
        hops,
        kind,
        deliver: reason.is_none(),
        reason,
    };
    let unknown = Some("source-route-unknown-address");
    let unreachable = Some("destination-unreachable");
    vec![
        c("1a", all, [IS1, IS2], "complete", None),
        c("1a", all, [IS1, IS2], "partial", None),
        c("1b", &[IS1, IS2], [IS1, IS2], "complete", unreachable),
        c("1b", &[IS1, IS2], [IS1, IS2], "partial", unreachable),
        c("1c", all, [IS1, BOGUS], "complete", unknown),
        c("1c", all, [BOGUS, IS2], "complete", unknown),
        c("1d", &[DST, IS1], [IS1, IS2], "partial", None),
        c("1d", &[DST, IS1], [IS1, IS2], "complete", unknown),
        c("1e", &[IS1], [IS1, IS2], "partial", unreachable),
        c("1f", &[DST, IS2], [IS1, IS2], "partial", None),
        c("1f", &[DST, IS2], [IS1, IS2], "complete", unknown),
        c("1g", &[DST], [IS1, IS2], "partial", None),
        c("1g", &[DST], [IS1, IS2], "complete", unknown),
    ]
}

fn routing_scenario(c: &RoutingCase) -> String {
    format!(
        "{}{}inject t=0 node=src dst={DST} size=48 sp=1 er=0 lifetime=16 srcroute={}:{},{}\n",
        line_topology([1500; 3]),
        line_routes(c.present),
        c.kind,
        c.hops[0],
        c.hops[1]
    )
}

fn routing_matrix() -> Check {
    let cases = routing_cases();
    for c in &cases {
        let mut sim = build_topology(&routing_scenario(c)).map_err(|e| e.to_string())?;
        sim.run_to_completion();
        let delivered = sim.deliveries().iter().filter(|d| d.node == "dst").count();
        let trace = sim.trace();
        let name = format!("{} {}", c.label, c.kind);
        if c.deliver {
            ensure(delivered == 1, || {
                format!("{name}: expected delivery, trace:\n{trace}")
            })?;
            ensure(
                sim.deliveries()[0].delivery.payload == sim.injection_payload(0).unwrap(),
                || format!("{name}: payload altered"),
            )?;
            ensure(trace.count(Action::Discard) == 0, || {
                format!("{name}: unexpected discard")
            })?;
        } else {
            let reason = c.reason.unwrap();
            let discards: Vec<_> = trace.of_action(Action::Discard).collect();
            ensure(delivered == 0, || {
                format!("{name}: expected discard, trace:\n{trace}")
            })?;
            ensure(
                discards.len() == 1 && discards[0].detail.contains(&format!("reason={reason} ")),
                || format!("{name}: expected one {reason} discard, trace:\n{trace}"),
            )?;
        }
    }
    Ok(format!(
        "{} configurations over ES-IS1-IS2-ES: 1a deliver, 1b discard, 1c discard, 1d/1f/1g partial deliver, 1e discard, complete discards whenever a listed hop is unknown",
        cases.len()
    ))
}

fn ring(lifetime: u8) -> String {
    format!(
        "node src es addr {SRC}\nnode r1 is addr 490021\nnode r2 is addr 490022\nnode r3 is addr 490023\n\
         link src.e0 r1.e9 mtu 1500 delay 1\nlink r1.e0 r2.e1 mtu 1500 delay 1\n\
         link r2.e0 r3.e1 mtu 1500 delay 1\nlink r3.e0 r1.e1 mtu 1500 delay 1\n\
         route src default via 490021 dev e0\nroute r1 default via 490022 dev e0\n\
         route r2 default via 490023 dev e0\nroute r3 default via 490021 dev e0\n\
         inject t=0 node=src dst=4900ff size=32 sp=0 er=0 lifetime={lifetime}\n"
    )
}

fn forwarding() -> Check {
    // Lifetime expiry on a loop: the PDU crosses exactly `lifetime` links.
    let mut ring_text: Vec<(u8, String)> = (1..=12).map(|l| (l, ring(l))).collect();
    ring_text.push((5, scenario("ring_lifetime.scn")));
    for (lifetime, text) in &ring_text {
        let mut sim = build_topology(text).map_err(|e| e.to_string())?;
        sim.run_to_completion();
        let t = sim.trace();
        let hops = t.count(Action::Transmit);
        let discards: Vec<_> = t.of_action(Action::Discard).collect();
        ensure(usize::from(*lifetime) == hops, || {
            format!("lifetime {lifetime}: {hops} hops\n{t}")
        })?;
        ensure(
            t.count(Action::Forward) == usize::from(*lifetime) - 1,
            || {
                format!(
                    "lifetime {lifetime}: {} FORWARD records",
                    t.count(Action::Forward)
                )
            },
        )?;
        ensure(
            discards.len() == 1 && discards[0].detail.contains("reason=lifetime-expired "),
            || format!("lifetime {lifetime}: discard records {discards:?}"),
        )?;
        ensure(sim.deliveries().is_empty(), || {
            format!("lifetime {lifetime}: delivered on a loop")
        })?;
    }

    // Every PDU put on a wire in every scenario verifies.
    let mut checked = 0;
    let mut texts: Vec<String> = all_scenarios().into_iter().map(|(_, t)| t).collect();
    texts.extend(routing_cases().iter().map(routing_scenario));
    texts.extend(ring_text.iter().map(|(_, t)| t.clone()));
    for text in &texts {
        let mut sim = build_topology(text).map_err(|e| e.to_string())?;
        sim.run_to_completion();
        for t in sim.transmissions() {
            let Ok(Npdu::Clnp(p)) = parse_pdu(&t.body) else {
                return Err(format!("unparseable frame from {}", t.node));
            };
            ensure(p.checksum_verdict() == ChecksumVerdict::Valid, || {
                format!(
                    "{} sent a PDU with a bad checksum: {}",
                    t.node,
                    hex::encode(&t.body)
                )
            })?;
            checked += 1;
        }
    }
    // A PDU without a checksum stays without one.
    let mut bare = data_pdu("490003", false, b"no checksum");
    bare.header.checksum = [0, 0];
    let table: RoutingTable = [RouteEntry::default_route(
        addr(IS2),
        clnp_core::routing::DeviceId::new("e0"),
    )]
    .into_iter()
    .collect();
    let mut ctx = local_ctx();
    match forward(
        &bare,
        &mut ctx,
        &table,
        &StaticInterfaces::new().with("e0", 1500, 0),
    ) {
        clnp_core::routing::ForwardOutcome::Send(out) => ensure(
            out[0].0.checksum_verdict() == ChecksumVerdict::NotUsed
                && out[0].0.header.lifetime == 15,
            || "unused checksum not preserved on forward".into(),
        )?,
        other => return Err(format!("bare PDU not forwarded: {other:?}")),
    }

    // Oversize without segmentation permission.
    let mut sim =
        build_topology(&scenario("oversize_no_segmentation.scn")).map_err(|e| e.to_string())?;
    sim.run_to_completion();
    let discards: Vec<_> = sim.trace().of_action(Action::Discard).collect();
    ensure(
        discards.len() == 1
            && discards[0].node == "is2"
            && discards[0]
                .detail
                .contains("reason=segmentation-not-permitted "),
        || format!("sp=0 oversize: {discards:?}"),
    )?;
    ensure(sim.deliveries().iter().all(|d| d.node != "dst"), || {
        "sp=0 oversize delivered".into()
    })?;
    ensure(
        sim.deliveries().iter().any(|d| d.node == "src"
            && matches!(d.delivery.sink, Sink::ErrorReport(Some(r)) if r.class_code == ReasonForDiscard::SEGMENTATION_NOT_PERMITTED)),
        || "sp=0 oversize: no error report at the source".into(),
    )?;

    // Oversize with segmentation permitted.
    let mut sim = build_topology(&scenario("oversize_segmented.scn")).map_err(|e| e.to_string())?;
    sim.run_to_completion();
    let at_dst: Vec<_> = sim
        .deliveries()
        .iter()
        .filter(|d| d.node == "dst")
        .collect();
    ensure(
        at_dst.len() == 1 && at_dst[0].delivery.payload == sim.injection_payload(0).unwrap(),
        || "sp=1 oversize: not delivered intact".into(),
    )?;
    ensure(
        sim.trace()
            .of_action(Action::Fragment)
            .any(|r| r.node == "is2"),
        || "sp=1 oversize: is2 did not segment".into(),
    )?;
    ensure(
        sim.transmissions()
            .iter()
            .filter(|t| t.node == "is2")
            .all(|t| t.body.len() <= 128),
        || "sp=1 oversize: segment over the link MTU".into(),
    )?;

    Ok(format!(
        "loop discards after exactly `lifetime` hops for 1..=12; {checked} transmitted PDUs verify; sp=0 oversize discarded, sp=1 segmented and delivered"
    ))
}

fn header_len_oracle(dst: usize, src: usize, sp: bool, options: &[usize]) -> usize {
    9 + (1 + dst)
        + (1 + src)
        + if sp { 6 } else { 0 }
        + options.iter().map(|v| 2 + v).sum::<usize>()
}

fn output_matrix() -> Check {
    let req = |sp: bool, options: Vec<OptionParam>, payload: usize| SendRequest {
        payload: vec![0xA5; payload],
        src: addr(SRC),
        dst: addr(DST),
        er_flag: true,
        sp_flag: sp,
        lifetime: 32,
        options,
    };
    let qos = OptionParam::new(option_code::QOS_MAINTENANCE, vec![0xC0, 0x00]);
    let shapes = [
        (
            "fixed+address",
            req(false, vec![], 10),
            header_len_oracle(3, 3, false, &[]),
        ),
        (
            "+segmentation",
            req(true, vec![], 10),
            header_len_oracle(3, 3, true, &[]),
        ),
        (
            "+options",
            req(true, vec![qos.clone()], 10),
            header_len_oracle(3, 3, true, &[2]),
        ),
    ];
    let mut duid = DuidCounter::default();
    let mut lens = Vec::new();
    for (name, r, want) in &shapes {
        let pdu = compose(r, &mut duid).map_err(|e| e.to_string())?;
        ensure(usize::from(pdu.header.header_length) == *want, || {
            format!(
                "{name}: header length {} expected {want}",
                pdu.header.header_length
            )
        })?;
        ensure(pdu.checksum_verdict() == ChecksumVerdict::Valid, || {
            format!("{name}: checksum")
        })?;
        ensure(
            parse_pdu(&pdu.encode()) == Ok(Npdu::Clnp(pdu.clone())),
            || format!("{name}: re-parse"),
        )?;
        lens.push(*want);
    }

    // 100-octet PDU at MTU 128.
    let hl = header_len_oracle(3, 3, true, &[]);
    let small = compose(&req(true, vec![], 100 - hl), &mut duid).map_err(|e| e.to_string())?;
    ensure(small.encoded_len() == 100, || {
        "small PDU is not 100 octets".into()
    })?;
    let pieces = fragment(&small, 128).map_err(|e| e.to_string())?;
    ensure(pieces == vec![small.clone()], || {
        "100-octet PDU altered at MTU 128".into()
    })?;

    // 200-octet PDU with a 32-octet header at MTU 128.
    let big_req = SendRequest {
        payload: (0..168).map(|i| i as u8).collect(),
        src: addr("49000a0b0c0d0e"),
        dst: addr("4900010203040506"),
        er_flag: true,
        sp_flag: true,
        lifetime: 32,
        options: vec![],
    };
    let big = compose(&big_req, &mut duid).map_err(|e| e.to_string())?;
    let hl = header_len_oracle(8, 7, true, &[]);
    ensure(
        hl == 32 && usize::from(big.header.header_length) == hl && big.encoded_len() == 200,
        || "200-octet fixture shape".into(),
    )?;
    let chunk = (128 - hl) / 8 * 8;
    let want = [(0usize, chunk), (chunk, 168 - chunk)];
    let pieces = fragment(&big, 128).map_err(|e| e.to_string())?;
    let got: Vec<(usize, usize)> = pieces
        .iter()
        .map(|p| {
            (
                usize::from(p.header.seg.unwrap().segment_offset),
                p.payload.len(),
            )
        })
        .collect();
    ensure(got == want, || {
        format!("segments {got:?}, expected {want:?}")
    })?;
    ensure(got == [(0, 96), (96, 72)], || format!("segments {got:?}"))?;
    ensure(pieces[0].payload.len() % 8 == 0, || {
        "non-final part not a multiple of 8".into()
    })?;
    ensure(
        pieces[0].header.flags.ms && !pieces[1].header.flags.ms,
        || "more-segments flags".into(),
    )?;
    for p in &pieces {
        ensure(
            p.encoded_len() <= 128 && p.checksum_verdict() == ChecksumVerdict::Valid,
            || "segment too long or badly stamped".into(),
        )?;
    }
    let rejoined: Vec<u8> = pieces.iter().flat_map(|p| p.payload.clone()).collect();
    ensure(rejoined == big.payload, || {
        "segments do not cover the data".into()
    })?;

    Ok(format!(
        "header lengths {lens:?}; 100-octet PDU unchanged at MTU 128; 200-octet PDU -> 96@0 + 72@96"
    ))
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.trace"))
}

fn run_trace(text: &str) -> Result<String, String> {
    let mut sim = build_topology(text).map_err(|e| e.to_string())?;
    Ok(sim.run_to_completion().to_string())
}

fn determinism() -> Check {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let scenarios = all_scenarios();
    for (name, text) in &scenarios {
        let runs: Vec<String> = (0..3).map(|_| run_trace(text)).collect::<Result<_, _>>()?;
        ensure(runs.iter().all(|r| *r == runs[0]), || {
            format!("{name}: traces differ between runs")
        })?;
        ensure(!runs[0].is_empty(), || format!("{name}: empty trace"))?;
        let path = golden_path(name);
        if update {
            fs::write(&path, &runs[0]).map_err(|e| e.to_string())?;
        }
        let golden = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure(golden == runs[0], || {
            format!("{name}: trace differs from {}", path.display())
        })?;
    }
    let generated: Vec<String> = routing_cases().iter().map(routing_scenario).collect();
    for text in &generated {
        let runs: Vec<String> = (0..3).map(|_| run_trace(text)).collect::<Result<_, _>>()?;
        ensure(runs.iter().all(|r| *r == runs[0]), || {
            "generated scenario not deterministic".into()
        })?;
    }
    Ok(format!(
        "{} scenario files match their golden traces on 3 runs; {} generated scenarios stable",
        scenarios.len(),
        generated.len()
    ))
}
