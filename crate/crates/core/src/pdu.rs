//! CLNP NPDU wire format.
//!
//! Normal header layout (all multi-octet fields big-endian):
//!
//! ```text
//!  0      NLPID (0x81)
//!  1      header length indicator
//!  2      version (0x01)
//!  3      lifetime, units of 500 ms
//!  4      SP | MS | E/R | type (5 bits)
//!  5..6   segment length
//!  7..8   checksum
//!  9..    dest len, dest, src len, src
//!         segmentation part if SP: data unit id, segment offset, total length
//!         options: (code, length, value) up to the header length
//! ```
//!
//! A first octet of `0x00` marks the inactive network layer protocol; the rest
//! of the buffer is user data.

use std::fmt;

use thiserror::Error;

use crate::checksum::{self, ChecksumVerdict};

pub const NLPID_CLNP: u8 = 0x81;
pub const NLPID_INACTIVE: u8 = 0x00;
pub const VERSION: u8 = 0x01;

pub const FIXED_PART_LEN: usize = 9;
pub const SEGMENTATION_PART_LEN: usize = 6;
pub const MAX_HEADER_LEN: usize = 254;
pub const MAX_ADDRESS_LEN: usize = 20;
pub const MAX_OPTION_VALUE_LEN: usize = 252;

pub const HEADER_LENGTH_POS: usize = 1;
pub const VERSION_POS: usize = 2;
pub const LIFETIME_POS: usize = 3;
pub const FLAGS_POS: usize = 4;
pub const SEGMENT_LENGTH_POS: usize = 5;
pub const CHECKSUM_POS: usize = 7;

/// Option parameter codes.
pub mod option_code {
    pub const REASON_FOR_DISCARD: u8 = 0xC1;
    pub const QOS_MAINTENANCE: u8 = 0xC3;
    pub const SOURCE_ROUTING: u8 = 0xC8;
    pub const PADDING: u8 = 0xCC;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("address length {0} outside 1..=20")]
    BadAddressLength(usize),
    #[error("invalid hex: {0}")]
    BadHex(String),
    #[error("header invariant violated: {0}")]
    InvariantViolation(String),
}

/// Errors from [`parse_pdu`]. Each maps onto the header octet that caused it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty buffer")]
    Empty,
    #[error("unknown network layer protocol id {0:#04x}")]
    BadNlpid(u8),
    #[error("header length indicator {0} below fixed part size")]
    BadHeaderLength(u8),
    #[error("header truncated at octet {offset}")]
    TruncatedHeader { offset: usize },
    #[error("address at octet {offset} has invalid length {len}")]
    BadAddressLength { offset: usize, len: u8 },
    #[error("segment length {segment_length} below header length {header_length}")]
    BadSegmentLength {
        segment_length: u16,
        header_length: u8,
    },
    #[error("pdu truncated: segment length {segment_length}, {available} octets available")]
    TruncatedPdu {
        segment_length: u16,
        available: usize,
    },
    #[error("option at octet {offset} runs past the header")]
    MalformedOptions { offset: usize },
}

impl ParseError {
    /// Index of the header octet blamed for the error.
    pub fn offending_octet(&self) -> u8 {
        let idx = match self {
            ParseError::Empty | ParseError::BadNlpid(_) => 0,
            ParseError::BadHeaderLength(_) => HEADER_LENGTH_POS,
            ParseError::TruncatedHeader { offset } => *offset,
            ParseError::BadAddressLength { offset, .. } => *offset,
            ParseError::BadSegmentLength { .. } | ParseError::TruncatedPdu { .. } => {
                SEGMENT_LENGTH_POS
            }
            ParseError::MalformedOptions { offset } => *offset,
        };
        idx.min(u8::MAX as usize) as u8
    }

    pub fn reason(&self) -> ReasonForDiscard {
        ReasonForDiscard::header_syntax(self.offending_octet())
    }
}

/// An NSAP address, treated as an opaque octet string of 1 to 20 octets.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NsapAddress(Vec<u8>);

impl NsapAddress {
    pub fn new(octets: impl Into<Vec<u8>>) -> Result<Self, CodecError> {
        let octets = octets.into();
        if octets.is_empty() || octets.len() > MAX_ADDRESS_LEN {
            return Err(CodecError::BadAddressLength(octets.len()));
        }
        Ok(NsapAddress(octets))
    }

    pub fn from_hex(s: &str) -> Result<Self, CodecError> {
        let octets = hex::decode(s.trim()).map_err(|e| CodecError::BadHex(e.to_string()))?;
        Self::new(octets)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl fmt::Display for NsapAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for NsapAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NsapAddress({})", self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PduType {
    /// DT, type code 0b11100.
    Data,
    /// ER, type code 0b00001.
    ErrorReport,
    /// Inactive network layer protocol; has no type code.
    Inactive,
    Unknown(u8),
}

impl PduType {
    pub const DATA_CODE: u8 = 0b11100;
    pub const ERROR_REPORT_CODE: u8 = 0b00001;

    pub fn from_code(code: u8) -> Self {
        match code & 0x1F {
            Self::DATA_CODE => PduType::Data,
            Self::ERROR_REPORT_CODE => PduType::ErrorReport,
            other => PduType::Unknown(other),
        }
    }

    pub fn code(self) -> Option<u8> {
        match self {
            PduType::Data => Some(Self::DATA_CODE),
            PduType::ErrorReport => Some(Self::ERROR_REPORT_CODE),
            PduType::Inactive => None,
            PduType::Unknown(c) => Some(c & 0x1F),
        }
    }

    pub fn mnemonic(self) -> String {
        match self {
            PduType::Data => "DT".into(),
            PduType::ErrorReport => "ER".into(),
            PduType::Inactive => "INACTIVE".into(),
            PduType::Unknown(c) => format!("UNKNOWN({c:#04x})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Flags {
    /// Segmentation permitted.
    pub sp: bool,
    /// More segments.
    pub ms: bool,
    /// Error report requested.
    pub er: bool,
}

impl Flags {
    fn to_bits(self) -> u8 {
        (u8::from(self.sp) << 7) | (u8::from(self.ms) << 6) | (u8::from(self.er) << 5)
    }

    fn from_octet(octet: u8) -> Self {
        Flags {
            sp: octet & 0x80 != 0,
            ms: octet & 0x40 != 0,
            er: octet & 0x20 != 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmentationPart {
    pub data_unit_id: u16,
    /// Octet offset of this segment's data within the initial PDU's data.
    pub segment_offset: u16,
    /// Length of the initial PDU, header included.
    pub total_length: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OptionParam {
    pub code: u8,
    pub value: Vec<u8>,
}

impl OptionParam {
    pub fn new(code: u8, value: impl Into<Vec<u8>>) -> Self {
        OptionParam {
            code,
            value: value.into(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        2 + self.value.len()
    }
}

/// Decoded header of a normal (non-inactive) CLNP PDU.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClnpHeader {
    pub nlpid: u8,
    pub header_length: u8,
    pub version: u8,
    pub lifetime: u8,
    pub flags: Flags,
    pub pdu_type: PduType,
    pub segment_length: u16,
    pub checksum: [u8; 2],
    pub dest: NsapAddress,
    pub src: NsapAddress,
    pub seg: Option<SegmentationPart>,
    pub options: Vec<OptionParam>,
}

impl ClnpHeader {
    /// A DT header with lengths computed for an empty payload and no checksum.
    pub fn data(dest: NsapAddress, src: NsapAddress, lifetime: u8) -> Self {
        let mut h = ClnpHeader {
            nlpid: NLPID_CLNP,
            header_length: 0,
            version: VERSION,
            lifetime,
            flags: Flags::default(),
            pdu_type: PduType::Data,
            segment_length: 0,
            checksum: [0, 0],
            dest,
            src,
            seg: None,
            options: Vec::new(),
        };
        h.header_length = h.layout_length().min(u8::MAX as usize) as u8;
        h.segment_length = u16::from(h.header_length);
        h
    }

    /// Header length implied by the address, segmentation and option parts.
    pub fn layout_length(&self) -> usize {
        FIXED_PART_LEN
            + 1
            + self.dest.len()
            + 1
            + self.src.len()
            + if self.seg.is_some() {
                SEGMENTATION_PART_LEN
            } else {
                0
            }
            + self
                .options
                .iter()
                .map(OptionParam::encoded_len)
                .sum::<usize>()
    }

    fn segmentation_pos(&self) -> usize {
        FIXED_PART_LEN + 2 + self.dest.len() + self.src.len()
    }

    /// Octet index of the segment offset field, if the header has one.
    pub fn segment_offset_pos(&self) -> Option<usize> {
        self.seg.map(|_| self.segmentation_pos() + 2)
    }

    /// Octet index of the total length field, if the header has one.
    pub fn total_length_pos(&self) -> Option<usize> {
        self.seg.map(|_| self.segmentation_pos() + 4)
    }

    pub fn options_pos(&self) -> usize {
        self.segmentation_pos()
            + if self.seg.is_some() {
                SEGMENTATION_PART_LEN
            } else {
                0
            }
    }

    /// Octet index of the first value octet of the first option with `code`.
    pub fn option_value_pos(&self, code: u8) -> Option<usize> {
        let mut pos = self.options_pos();
        for opt in &self.options {
            if opt.code == code {
                return Some(pos + 2);
            }
            pos += opt.encoded_len();
        }
        None
    }

    pub fn find_option(&self, code: u8) -> Option<&OptionParam> {
        self.options.iter().find(|o| o.code == code)
    }

    pub fn checksum_in_use(&self) -> bool {
        self.checksum != [0, 0]
    }

    /// Writes the header exactly as its fields say, without validation.
    fn write(&self, out: &mut Vec<u8>) {
        out.push(self.nlpid);
        out.push(self.header_length);
        out.push(self.version);
        out.push(self.lifetime);
        out.push(self.flags.to_bits() | self.pdu_type.code().unwrap_or(0));
        out.extend_from_slice(&self.segment_length.to_be_bytes());
        out.extend_from_slice(&self.checksum);
        for addr in [&self.dest, &self.src] {
            out.push(addr.len() as u8);
            out.extend_from_slice(addr.as_bytes());
        }
        if let Some(seg) = &self.seg {
            out.extend_from_slice(&seg.data_unit_id.to_be_bytes());
            out.extend_from_slice(&seg.segment_offset.to_be_bytes());
            out.extend_from_slice(&seg.total_length.to_be_bytes());
        }
        for opt in &self.options {
            out.push(opt.code);
            out.push(opt.value.len() as u8);
            out.extend_from_slice(&opt.value);
        }
    }

    /// Raw encoding of the header fields. Use [`compose_header`] when the
    /// header should be validated first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.layout_length());
        self.write(&mut out);
        out
    }

    /// One-line `key=value` summary used in traces.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "type={} src={} dst={} lifetime={} len={}",
            self.pdu_type.mnemonic(),
            self.src,
            self.dest,
            self.lifetime,
            self.segment_length
        );
        if let Some(seg) = &self.seg {
            s.push_str(&format!(
                " duid={} off={} total={} ms={}",
                seg.data_unit_id,
                seg.segment_offset,
                seg.total_length,
                u8::from(self.flags.ms)
            ));
        }
        s
    }
}

/// A normal CLNP PDU: header plus data part.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pdu {
    pub header: ClnpHeader,
    pub payload: Vec<u8>,
}

impl Pdu {
    /// Builds a PDU, filling in `header_length` and `segment_length` from the
    /// header layout and payload size. The checksum is left as given.
    pub fn new(mut header: ClnpHeader, payload: Vec<u8>) -> Result<Self, CodecError> {
        let hl = header.layout_length();
        if hl > MAX_HEADER_LEN {
            return Err(CodecError::InvariantViolation(format!(
                "header length {hl} exceeds {MAX_HEADER_LEN}"
            )));
        }
        let total = hl + payload.len();
        if total > u16::MAX as usize {
            return Err(CodecError::InvariantViolation(format!(
                "pdu length {total} exceeds 65535"
            )));
        }
        header.header_length = hl as u8;
        header.segment_length = total as u16;
        Ok(Pdu { header, payload })
    }

    pub fn header_bytes(&self) -> Vec<u8> {
        self.header.to_bytes()
    }

    /// Wire encoding: header fields as stored followed by the payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.header.write(&mut out);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn encoded_len(&self) -> usize {
        self.header.layout_length() + self.payload.len()
    }

    /// Computes and stores a fresh header checksum.
    pub fn stamp_checksum(&mut self) {
        self.header.checksum = [0, 0];
        let bytes = self.header.to_bytes();
        let (c0, c1) = checksum::compute_checksum(&bytes, CHECKSUM_POS)
            .expect("a normal header is always longer than the checksum field");
        self.header.checksum = [c0, c1];
    }

    /// Re-stamps the checksum only if the PDU uses one.
    pub fn restamp_if_in_use(&mut self) {
        if self.header.checksum_in_use() {
            self.stamp_checksum();
        }
    }

    pub fn checksum_verdict(&self) -> ChecksumVerdict {
        checksum::verify_checksum(&self.header.to_bytes(), CHECKSUM_POS)
            .expect("a normal header is always longer than the checksum field")
    }
}

/// Result of decoding a buffer: a normal PDU or an inactive-protocol payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Npdu {
    Inactive { payload: Vec<u8> },
    Clnp(Pdu),
}

impl Npdu {
    pub fn pdu_type(&self) -> PduType {
        match self {
            Npdu::Inactive { .. } => PduType::Inactive,
            Npdu::Clnp(p) => p.header.pdu_type,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Npdu::Inactive { payload } => {
                let mut out = Vec::with_capacity(payload.len() + 1);
                out.push(NLPID_INACTIVE);
                out.extend_from_slice(payload);
                out
            }
            Npdu::Clnp(p) => p.encode(),
        }
    }
}

fn read_u16(raw: &[u8], pos: usize) -> u16 {
    u16::from_be_bytes([raw[pos], raw[pos + 1]])
}

/// Decomposes a received buffer into header and data parts.
///
/// Octets past the segment length are ignored. A normal PDU re-encodes to
/// exactly `raw[..segment_length]`.
pub fn parse_pdu(raw: &[u8]) -> Result<Npdu, ParseError> {
    let Some(&nlpid) = raw.first() else {
        return Err(ParseError::Empty);
    };
    match nlpid {
        NLPID_INACTIVE => {
            return Ok(Npdu::Inactive {
                payload: raw[1..].to_vec(),
            });
        }
        NLPID_CLNP => {}
        other => return Err(ParseError::BadNlpid(other)),
    }
    if raw.len() < FIXED_PART_LEN {
        return Err(ParseError::TruncatedHeader { offset: raw.len() });
    }
    let header_length = raw[HEADER_LENGTH_POS];
    let hl = usize::from(header_length);
    if hl < FIXED_PART_LEN {
        return Err(ParseError::BadHeaderLength(header_length));
    }
    if raw.len() < hl {
        return Err(ParseError::TruncatedHeader {
            offset: HEADER_LENGTH_POS,
        });
    }
    let segment_length = read_u16(raw, SEGMENT_LENGTH_POS);
    if usize::from(segment_length) < hl {
        return Err(ParseError::BadSegmentLength {
            segment_length,
            header_length,
        });
    }
    if raw.len() < usize::from(segment_length) {
        return Err(ParseError::TruncatedPdu {
            segment_length,
            available: raw.len(),
        });
    }

    let type_octet = raw[FLAGS_POS];
    let flags = Flags::from_octet(type_octet);
    let mut pos = FIXED_PART_LEN;
    let read_address = |pos: &mut usize| -> Result<NsapAddress, ParseError> {
        if *pos >= hl {
            return Err(ParseError::TruncatedHeader { offset: *pos });
        }
        let len = raw[*pos];
        if len == 0 || usize::from(len) > MAX_ADDRESS_LEN {
            return Err(ParseError::BadAddressLength { offset: *pos, len });
        }
        let end = *pos + 1 + usize::from(len);
        if end > hl {
            return Err(ParseError::TruncatedHeader { offset: *pos });
        }
        let addr = NsapAddress(raw[*pos + 1..end].to_vec());
        *pos = end;
        Ok(addr)
    };
    let dest = read_address(&mut pos)?;
    let src = read_address(&mut pos)?;

    let seg = if flags.sp {
        if pos + SEGMENTATION_PART_LEN > hl {
            return Err(ParseError::TruncatedHeader { offset: pos });
        }
        let seg = SegmentationPart {
            data_unit_id: read_u16(raw, pos),
            segment_offset: read_u16(raw, pos + 2),
            total_length: read_u16(raw, pos + 4),
        };
        pos += SEGMENTATION_PART_LEN;
        Some(seg)
    } else {
        None
    };

    let mut options = Vec::new();
    while pos < hl {
        if pos + 2 > hl {
            return Err(ParseError::MalformedOptions { offset: pos });
        }
        let len = usize::from(raw[pos + 1]);
        if pos + 2 + len > hl {
            return Err(ParseError::MalformedOptions { offset: pos });
        }
        options.push(OptionParam::new(raw[pos], &raw[pos + 2..pos + 2 + len]));
        pos += 2 + len;
    }

    let header = ClnpHeader {
        nlpid,
        header_length,
        version: raw[VERSION_POS],
        lifetime: raw[LIFETIME_POS],
        flags,
        pdu_type: PduType::from_code(type_octet),
        segment_length,
        checksum: [raw[CHECKSUM_POS], raw[CHECKSUM_POS + 1]],
        dest,
        src,
        seg,
        options,
    };
    Ok(Npdu::Clnp(Pdu {
        header,
        payload: raw[hl..usize::from(segment_length)].to_vec(),
    }))
}

/// Encodes a header after checking every header invariant.
///
/// The checksum octets are written as stored; composition does not compute
/// them.
pub fn compose_header(header: &ClnpHeader) -> Result<Vec<u8>, CodecError> {
    let violation = |msg: String| Err(CodecError::InvariantViolation(msg));
    if header.nlpid != NLPID_CLNP {
        return violation(format!("nlpid {:#04x} is not 0x81", header.nlpid));
    }
    if header.version != VERSION {
        return violation(format!("version {} is not 1", header.version));
    }
    match header.pdu_type {
        PduType::Inactive => return violation("inactive pdus have no normal header".into()),
        PduType::Unknown(c) if c > 0x1F => {
            return violation(format!("type code {c:#04x} wider than 5 bits"))
        }
        _ => {}
    }
    for (name, addr) in [("dest", &header.dest), ("src", &header.src)] {
        if addr.is_empty() || addr.len() > MAX_ADDRESS_LEN {
            return violation(format!("{name} address length {}", addr.len()));
        }
    }
    if header.flags.sp != header.seg.is_some() {
        return violation("segmentation part present iff SP is set".into());
    }
    if header.flags.ms && !header.flags.sp {
        return violation("MS set without SP".into());
    }
    if let Some(seg) = &header.seg {
        if seg.segment_offset % 8 != 0 {
            return violation(format!(
                "segment offset {} not a multiple of 8",
                seg.segment_offset
            ));
        }
    }
    if let Some(opt) = header
        .options
        .iter()
        .find(|o| o.value.len() > MAX_OPTION_VALUE_LEN)
    {
        return violation(format!("option {:#04x} value longer than 252", opt.code));
    }
    let layout = header.layout_length();
    if layout > MAX_HEADER_LEN {
        return violation(format!("header length {layout} exceeds {MAX_HEADER_LEN}"));
    }
    if usize::from(header.header_length) != layout {
        return violation(format!(
            "header length field {} but layout needs {layout}",
            header.header_length
        ));
    }
    if header.segment_length < u16::from(header.header_length) {
        return violation(format!(
            "segment length {} below header length {}",
            header.segment_length, header.header_length
        ));
    }
    Ok(header.to_bytes())
}

/// Reason for discard carried in error reports (option 0xC1, two octets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReasonForDiscard {
    pub class_code: u8,
    /// Index of the offending header octet; 0 when not applicable.
    pub offending_octet: u8,
}

impl ReasonForDiscard {
    pub const NOT_SPECIFIED: u8 = 0x00;
    pub const INCORRECT_CHECKSUM: u8 = 0x02;
    pub const CONGESTION: u8 = 0x03;
    pub const HEADER_SYNTAX: u8 = 0x80;
    pub const SEGMENTATION_NOT_PERMITTED: u8 = 0x90;
    pub const INCOMPLETE_PDU: u8 = 0xA0;
    pub const DESTINATION_UNREACHABLE: u8 = 0xC0;
    pub const DESTINATION_UNKNOWN: u8 = 0xC1;
    pub const SOURCE_ROUTE_SYNTAX: u8 = 0xD1;
    pub const SOURCE_ROUTE_UNKNOWN_ADDRESS: u8 = 0xD2;
    pub const LIFETIME_EXPIRED_TRANSIT: u8 = 0xE0;
    pub const LIFETIME_EXPIRED_REASSEMBLY: u8 = 0xE1;

    pub const fn new(class_code: u8, offending_octet: u8) -> Self {
        ReasonForDiscard {
            class_code,
            offending_octet,
        }
    }

    pub const fn of(class_code: u8) -> Self {
        Self::new(class_code, 0)
    }

    pub const fn header_syntax(offending_octet: u8) -> Self {
        Self::new(Self::HEADER_SYNTAX, offending_octet)
    }

    pub const fn incorrect_checksum() -> Self {
        Self::new(Self::INCORRECT_CHECKSUM, CHECKSUM_POS as u8)
    }

    pub fn name(&self) -> &'static str {
        match self.class_code {
            Self::NOT_SPECIFIED => "not-specified",
            Self::INCORRECT_CHECKSUM => "incorrect-checksum",
            Self::CONGESTION => "congestion",
            Self::HEADER_SYNTAX => "header-syntax",
            Self::SEGMENTATION_NOT_PERMITTED => "segmentation-not-permitted",
            Self::INCOMPLETE_PDU => "incomplete-pdu",
            Self::DESTINATION_UNREACHABLE => "destination-unreachable",
            Self::DESTINATION_UNKNOWN => "destination-unknown",
            Self::SOURCE_ROUTE_SYNTAX => "source-route-syntax",
            Self::SOURCE_ROUTE_UNKNOWN_ADDRESS => "source-route-unknown-address",
            Self::LIFETIME_EXPIRED_TRANSIT => "lifetime-expired",
            Self::LIFETIME_EXPIRED_REASSEMBLY => "lifetime-expired-reassembly",
            _ => "unrecognised",
        }
    }

    pub fn to_option(&self) -> OptionParam {
        OptionParam::new(
            option_code::REASON_FOR_DISCARD,
            vec![self.class_code, self.offending_octet],
        )
    }

    pub fn from_option(opt: &OptionParam) -> Option<Self> {
        match (opt.code, opt.value.as_slice()) {
            (option_code::REASON_FOR_DISCARD, &[class, octet]) => Some(Self::new(class, octet)),
            _ => None,
        }
    }
}

impl fmt::Display for ReasonForDiscard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "reason={} code={:#04x} octet={}",
            self.name(),
            self.class_code,
            self.offending_octet
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("header analysis failed: {reason}")]
pub struct AnalysisError {
    pub reason: ReasonForDiscard,
}

/// Header format analysis. Returns the first violated rule.
///
/// Lifetime is not checked here: a zero lifetime only matters when the PDU
/// is forwarded.
pub fn analyze_header(pdu: &Pdu) -> Result<(), AnalysisError> {
    let h = &pdu.header;
    let fail = |octet: usize| {
        Err(AnalysisError {
            reason: ReasonForDiscard::header_syntax(octet.min(255) as u8),
        })
    };
    if h.version != VERSION {
        return fail(VERSION_POS);
    }
    if usize::from(h.header_length) != h.layout_length() {
        return fail(HEADER_LENGTH_POS);
    }
    if usize::from(h.segment_length) != usize::from(h.header_length) + pdu.payload.len() {
        return fail(SEGMENT_LENGTH_POS);
    }
    if h.flags.ms && !h.flags.sp {
        return fail(FLAGS_POS);
    }
    if h.flags.sp != h.seg.is_some() {
        return fail(FLAGS_POS);
    }
    if let (Some(seg), Some(pos)) = (&h.seg, h.segment_offset_pos()) {
        if seg.segment_offset % 8 != 0 {
            return fail(pos);
        }
    }
    let mut seen = [false; 256];
    let mut pos = h.options_pos();
    for opt in &h.options {
        if std::mem::replace(&mut seen[usize::from(opt.code)], true) {
            return fail(pos);
        }
        pos += opt.encoded_len();
    }
    Ok(())
}

pub fn find_option(header: &ClnpHeader, code: u8) -> Option<&OptionParam> {
    header.find_option(code)
}
