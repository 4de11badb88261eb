//! Output path: compose PDUs from transport data, segment them to the link
//! MTU and frame them for the link.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::pdu::{
    ClnpHeader, Flags, NsapAddress, OptionParam, Pdu, PduType, SegmentationPart, MAX_HEADER_LEN,
    NLPID_CLNP, VERSION,
};
use crate::routing::DeviceId;

pub type MacAddr = [u8; 6];

/// LLC DSAP, SSAP and control octets for OSI network layer traffic on 802.3.
pub const LLC_HEADER: [u8; 3] = [0xFE, 0xFE, 0x03];
pub const FRAME_HEADER_LEN: usize = 6 + 6 + 2 + 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OutputError {
    #[error("payload of {0} octets does not fit in a pdu")]
    PayloadTooLarge(usize),
    #[error("header of {0} octets exceeds 254")]
    HeaderTooLong(usize),
    #[error("mtu {mtu} cannot carry a {header_length}-octet header plus 8 data octets")]
    MtuTooSmall { mtu: usize, header_length: usize },
    #[error("pdu of {0} octets needs segmentation but SP is clear")]
    SegmentationNotPermitted(usize),
    #[error("pdu of {len} octets exceeds device mtu {mtu}")]
    PduExceedsMtu { len: usize, mtu: usize },
    #[error("no neighbour known on device {0}")]
    UnknownNeighbor(DeviceId),
    #[error("frame too short or malformed")]
    MalformedFrame,
}

/// Per-node data unit identifier source; wraps after 2^16 values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DuidCounter(u16);

impl DuidCounter {
    pub fn starting_at(v: u16) -> Self {
        DuidCounter(v)
    }

    pub fn next_id(&mut self) -> u16 {
        let id = self.0;
        self.0 = self.0.wrapping_add(1);
        id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendRequest {
    pub payload: Vec<u8>,
    pub src: NsapAddress,
    pub dst: NsapAddress,
    pub er_flag: bool,
    pub sp_flag: bool,
    pub lifetime: u8,
    pub options: Vec<OptionParam>,
}

/// Builds a DT PDU for a transport request and stamps its checksum.
pub fn compose(req: &SendRequest, duid: &mut DuidCounter) -> Result<Pdu, OutputError> {
    let mut header = ClnpHeader {
        nlpid: NLPID_CLNP,
        header_length: 0,
        version: VERSION,
        lifetime: req.lifetime,
        flags: Flags {
            sp: req.sp_flag,
            ms: false,
            er: req.er_flag,
        },
        pdu_type: PduType::Data,
        segment_length: 0,
        checksum: [0, 0],
        dest: req.dst.clone(),
        src: req.src.clone(),
        seg: None,
        options: req.options.clone(),
    };
    if req.sp_flag {
        header.seg = Some(SegmentationPart {
            data_unit_id: 0,
            segment_offset: 0,
            total_length: 0,
        });
    }
    let hl = header.layout_length();
    if hl > MAX_HEADER_LEN {
        return Err(OutputError::HeaderTooLong(hl));
    }
    if hl + req.payload.len() > u16::MAX as usize {
        return Err(OutputError::PayloadTooLarge(req.payload.len()));
    }
    let mut pdu = Pdu::new(header, req.payload.clone())
        .map_err(|_| OutputError::PayloadTooLarge(req.payload.len()))?;
    let total = pdu.header.segment_length;
    if let Some(seg) = pdu.header.seg.as_mut() {
        seg.data_unit_id = duid.next_id();
        seg.total_length = total;
    }
    pdu.stamp_checksum();
    Ok(pdu)
}

/// Splits `pdu` into segments of at most `mtu` octets.
///
/// Every segment carries a copy of the original header with its own offset
/// and length. Data parts are multiples of 8 octets except the last.
pub fn fragment(pdu: &Pdu, mtu: usize) -> Result<Vec<Pdu>, OutputError> {
    let len = pdu.encoded_len();
    if len <= mtu {
        return Ok(vec![pdu.clone()]);
    }
    let Some(seg) = pdu.header.seg.filter(|_| pdu.header.flags.sp) else {
        return Err(OutputError::SegmentationNotPermitted(len));
    };
    let hl = usize::from(pdu.header.header_length);
    if mtu < hl + 8 {
        return Err(OutputError::MtuTooSmall {
            mtu,
            header_length: hl,
        });
    }
    let chunk = (mtu - hl) / 8 * 8;
    let base = usize::from(seg.segment_offset);
    let last_ms = pdu.header.flags.ms;
    let pieces: Vec<&[u8]> = pdu.payload.chunks(chunk).collect();
    let count = pieces.len();
    let mut out = Vec::with_capacity(count);
    for (i, data) in pieces.into_iter().enumerate() {
        let mut header = pdu.header.clone();
        header.flags.ms = if i + 1 == count { last_ms } else { true };
        header.segment_length = (hl + data.len()) as u16;
        header.seg = Some(SegmentationPart {
            segment_offset: (base + i * chunk) as u16,
            ..seg
        });
        let mut piece = Pdu {
            header,
            payload: data.to_vec(),
        };
        piece.restamp_if_in_use();
        out.push(piece);
    }
    Ok(out)
}

/// Shrinks an error report's data part so the PDU fits in `mtu`. Error
/// reports are never segmented by their originator.
pub fn fit_error_report(pdu: &Pdu, mtu: usize) -> Pdu {
    if pdu.encoded_len() <= mtu {
        return pdu.clone();
    }
    let keep = mtu.saturating_sub(usize::from(pdu.header.header_length));
    let mut out = pdu.clone();
    out.payload.truncate(keep);
    out.header.segment_length = (usize::from(out.header.header_length) + keep) as u16;
    out.restamp_if_in_use();
    out
}

/// An 802.3 frame with an LLC header carrying one encoded PDU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub dst_mac: MacAddr,
    pub src_mac: MacAddr,
    /// LLC header plus body, in octets.
    pub length: u16,
    pub llc: [u8; 3],
    pub body: Vec<u8>,
}

impl Frame {
    pub fn new(dst_mac: MacAddr, src_mac: MacAddr, body: Vec<u8>) -> Self {
        Frame {
            dst_mac,
            src_mac,
            length: (LLC_HEADER.len() + body.len()) as u16,
            llc: LLC_HEADER,
            body,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.body.len());
        out.extend_from_slice(&self.dst_mac);
        out.extend_from_slice(&self.src_mac);
        out.extend_from_slice(&self.length.to_be_bytes());
        out.extend_from_slice(&self.llc);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn decode(raw: &[u8]) -> Result<Self, OutputError> {
        if raw.len() < FRAME_HEADER_LEN {
            return Err(OutputError::MalformedFrame);
        }
        let length = u16::from_be_bytes([raw[12], raw[13]]);
        let llc = [raw[14], raw[15], raw[16]];
        let body_len = usize::from(length)
            .checked_sub(3)
            .ok_or(OutputError::MalformedFrame)?;
        if llc != LLC_HEADER || raw.len() < FRAME_HEADER_LEN + body_len {
            return Err(OutputError::MalformedFrame);
        }
        Ok(Frame {
            dst_mac: raw[0..6].try_into().expect("6 octets"),
            src_mac: raw[6..12].try_into().expect("6 octets"),
            length,
            llc,
            body: raw[FRAME_HEADER_LEN..FRAME_HEADER_LEN + body_len].to_vec(),
        })
    }
}

pub fn format_mac(mac: &MacAddr) -> String {
    mac.iter()
        .map(|b| format!("{b:02x}"))
        .collect::<Vec<_>>()
        .join(":")
}

/// A network interface on a point-to-point link.
#[derive(Debug, Clone)]
pub struct Device {
    pub id: DeviceId,
    pub mac: MacAddr,
    pub mtu: usize,
    /// MAC of the station at the other end of the link.
    pub neighbor: Option<MacAddr>,
    pub queue: VecDeque<Frame>,
}

impl Device {
    pub fn new(id: DeviceId, mac: MacAddr, mtu: usize) -> Self {
        Device {
            id,
            mac,
            mtu,
            neighbor: None,
            queue: VecDeque::new(),
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} mac={} mtu={}",
            self.id,
            format_mac(&self.mac),
            self.mtu
        )
    }
}

/// Frames `pdu` for `device` and appends it to the device's outgoing queue.
pub fn transmit(pdu: &Pdu, device: &mut Device) -> Result<Frame, OutputError> {
    let body = pdu.encode();
    if body.len() > device.mtu {
        return Err(OutputError::PduExceedsMtu {
            len: body.len(),
            mtu: device.mtu,
        });
    }
    let neighbor = device
        .neighbor
        .ok_or_else(|| OutputError::UnknownNeighbor(device.id.clone()))?;
    let frame = Frame::new(neighbor, device.mac, body);
    device.queue.push_back(frame.clone());
    Ok(frame)
}
