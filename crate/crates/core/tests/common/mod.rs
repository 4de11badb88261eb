//! Helpers shared by the integration and acceptance test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use clnp_core::pdu::{
    option_code, ClnpHeader, Flags, NsapAddress, OptionParam, Pdu, PduType, SegmentationPart,
};
use rand::Rng;

pub fn addr(hex: &str) -> NsapAddress {
    NsapAddress::from_hex(hex).unwrap()
}

fn random_addr<R: Rng>(rng: &mut R) -> NsapAddress {
    let len = rng.random_range(1..=20);
    NsapAddress::new((0..len).map(|_| rng.random::<u8>()).collect::<Vec<_>>()).unwrap()
}

/// A random well-formed PDU. Header lengths stay within one octet, option
/// codes are distinct, and the checksum is either stamped or zero.
pub fn random_pdu<R: Rng>(rng: &mut R) -> Pdu {
    loop {
        let pdu_type = if rng.random_bool(0.8) {
            PduType::Data
        } else {
            PduType::ErrorReport
        };
        let sp = pdu_type == PduType::Data && rng.random_bool(0.5);
        let flags = Flags {
            sp,
            ms: sp && rng.random_bool(0.3),
            er: rng.random_bool(0.5),
        };
        let seg = sp.then(|| SegmentationPart {
            data_unit_id: rng.random(),
            segment_offset: rng.random::<u16>() & !7,
            total_length: rng.random(),
        });
        let mut codes = vec![
            option_code::QOS_MAINTENANCE,
            option_code::SOURCE_ROUTING,
            option_code::PADDING,
            option_code::REASON_FOR_DISCARD,
            0xC5,
        ];
        let mut options = Vec::new();
        for _ in 0..rng.random_range(0..=3) {
            let code = codes.remove(rng.random_range(0..codes.len()));
            let len = rng.random_range(0..=24);
            options.push(OptionParam::new(
                code,
                (0..len).map(|_| rng.random::<u8>()).collect::<Vec<_>>(),
            ));
        }
        let header = ClnpHeader {
            nlpid: 0x81,
            header_length: 0,
            version: 1,
            lifetime: rng.random(),
            flags,
            pdu_type,
            segment_length: 0,
            checksum: [0, 0],
            dest: random_addr(rng),
            src: random_addr(rng),
            seg,
            options,
        };
        let payload_len = rng.random_range(0..=96);
        let payload = (0..payload_len).map(|_| rng.random::<u8>()).collect();
        let Ok(mut pdu) = Pdu::new(header, payload) else {
            continue;
        };
        if rng.random_bool(0.8) {
            pdu.stamp_checksum();
        }
        return pdu;
    }
}

/// Straight Fletcher sums over a header, reduced mod 255.
pub fn fletcher_sums(bytes: &[u8]) -> (u32, u32) {
    let mut c0 = 0u32;
    let mut c1 = 0u32;
    for &b in bytes {
        c0 = (c0 + u32::from(b)) % 255;
        c1 = (c1 + c0) % 255;
    }
    (c0, c1)
}

/// An initial PDU with segmentation permitted, offset 0 and total length
/// equal to its own length.
pub fn initial_pdu(dst: &str, src: &str, duid: u16, payload: Vec<u8>, er: bool) -> Pdu {
    let mut h = ClnpHeader::data(addr(dst), addr(src), 20);
    h.flags.sp = true;
    h.flags.er = er;
    h.seg = Some(SegmentationPart {
        data_unit_id: duid,
        segment_offset: 0,
        total_length: 0,
    });
    let mut p = Pdu::new(h, payload).unwrap();
    let total = p.header.segment_length;
    p.header.seg.as_mut().unwrap().total_length = total;
    p.stamp_checksum();
    p
}

/// Cuts data octets `start..end` out of an initial PDU as a segment. Built
/// field by field rather than through the library's segmenter.
pub fn segment_of(original: &Pdu, start: usize, end: usize) -> Pdu {
    assert_eq!(start % 8, 0);
    let mut header = original.header.clone();
    header.flags.ms = end < original.payload.len();
    header.seg.as_mut().unwrap().segment_offset = start as u16;
    let payload = original.payload[start..end].to_vec();
    header.segment_length = (usize::from(header.header_length) + payload.len()) as u16;
    let mut p = Pdu { header, payload };
    p.stamp_checksum();
    p
}

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/scenarios")
}

pub fn scenario(name: &str) -> String {
    std::fs::read_to_string(scenario_dir().join(name)).unwrap()
}

/// Every `.scn` file, sorted by name.
pub fn all_scenarios() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "scn"))
        .map(|p| {
            (
                p.file_stem().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

pub const SRC: &str = "490001";
pub const IS1: &str = "490011";
pub const IS2: &str = "490012";
pub const DST: &str = "490002";
pub const BOGUS: &str = "4900ee";

/// The four-node line ES - IS1 - IS2 - ES with per-link MTUs.
pub fn line_topology(mtus: [usize; 3]) -> String {
    format!(
        "node src es addr {SRC}\nnode is1 is addr {IS1}\nnode is2 is addr {IS2}\nnode dst es addr {DST}\n\
         link src.e0 is1.e0 mtu {} delay 1\nlink is1.e1 is2.e0 mtu {} delay 1\nlink is2.e1 dst.e0 mtu {} delay 1\n",
        mtus[0], mtus[1], mtus[2]
    )
}

/// Routes on every node of the line for each listed address, toward its
/// position. The source is always routable so error reports can return.
pub fn line_routes(present: &[&str]) -> String {
    let names = ["src", "is1", "is2", "dst"];
    let addrs = [SRC, IS1, IS2, DST];
    let right = ["e0", "e1", "e1", ""];
    let mut out = String::new();
    for (p, name) in names.iter().enumerate() {
        for (q, a) in addrs.iter().enumerate() {
            if p == q || !(present.contains(a) || *a == SRC) {
                continue;
            }
            let (hop, dev) = if q > p {
                (addrs[p + 1], right[p])
            } else {
                (addrs[p - 1], "e0")
            };
            out.push_str(&format!("route {name} {a}/3 via {hop} dev {dev}\n"));
        }
    }
    out
}
