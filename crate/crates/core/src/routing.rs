//! Forward path: next-hop lookup, lifetime decrement with checksum
//! adjustment, source routing, segmentation on forward and congestion
//! notification.
//!
//! Routing tables are static and searched sequentially; the first matching
//! entry wins.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::checksum::adjust_checksum;
use crate::input::{discard_pdu, NodeContext};
use crate::output::{fit_error_report, fragment, OutputError};
use crate::pdu::{
    option_code, CodecError, NsapAddress, Pdu, PduType, ReasonForDiscard, CHECKSUM_POS,
    LIFETIME_POS, MAX_ADDRESS_LEN,
};
use crate::trace::Action;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeviceId(String);

impl DeviceId {
    pub fn new(name: impl Into<String>) -> Self {
        DeviceId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteEntry {
    /// `None` for the default route.
    pub dest: Option<NsapAddress>,
    /// Number of leading octets of `dest` that must match; 0 matches all.
    pub prefix_len: u8,
    pub next_hop: NsapAddress,
    pub device: DeviceId,
}

impl RouteEntry {
    pub fn exact(dest: NsapAddress, next_hop: NsapAddress, device: DeviceId) -> Self {
        let prefix_len = dest.len() as u8;
        RouteEntry {
            dest: Some(dest),
            prefix_len,
            next_hop,
            device,
        }
    }

    pub fn default_route(next_hop: NsapAddress, device: DeviceId) -> Self {
        RouteEntry {
            dest: None,
            prefix_len: 0,
            next_hop,
            device,
        }
    }

    pub fn prefix(
        dest: NsapAddress,
        prefix_len: u8,
        next_hop: NsapAddress,
        device: DeviceId,
    ) -> Result<Self, RouteParseError> {
        if usize::from(prefix_len) > dest.len() {
            return Err(RouteParseError::PrefixTooLong {
                prefix_len,
                len: dest.len(),
            });
        }
        Ok(RouteEntry {
            dest: Some(dest),
            prefix_len,
            next_hop,
            device,
        })
    }

    pub fn matches(&self, dst: &NsapAddress) -> bool {
        let n = usize::from(self.prefix_len);
        match &self.dest {
            None => true,
            Some(d) => dst.len() >= n && d.as_bytes()[..n] == dst.as_bytes()[..n],
        }
    }
}

impl fmt::Display for RouteEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.dest {
            None => write!(f, "route default")?,
            Some(d) => write!(f, "route {d}/{}", self.prefix_len)?,
        }
        write!(f, " via {} dev {}", self.next_hop, self.device)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteParseError {
    #[error("expected `route <dest-hex>/<plen>|default via <hex> dev <name>`")]
    Syntax,
    #[error("bad address: {0}")]
    Address(#[from] CodecError),
    #[error("bad prefix length {0:?}")]
    PrefixLength(String),
    #[error("prefix length {prefix_len} longer than address of {len} octets")]
    PrefixTooLong { prefix_len: u8, len: usize },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        source: Box<RouteParseError>,
    },
}

impl RouteEntry {
    /// Parses the words after the leading `route` keyword.
    pub fn from_words(words: &[&str]) -> Result<Self, RouteParseError> {
        let [dest, "via", hop, "dev", dev] = words else {
            return Err(RouteParseError::Syntax);
        };
        let next_hop = NsapAddress::from_hex(hop)?;
        let device = DeviceId::new(*dev);
        if *dest == "default" {
            return Ok(RouteEntry::default_route(next_hop, device));
        }
        match dest.split_once('/') {
            None => Ok(RouteEntry::exact(
                NsapAddress::from_hex(dest)?,
                next_hop,
                device,
            )),
            Some((addr, plen)) => {
                let plen: u8 = plen
                    .parse()
                    .map_err(|_| RouteParseError::PrefixLength(plen.to_string()))?;
                if usize::from(plen) > MAX_ADDRESS_LEN {
                    return Err(RouteParseError::PrefixLength(plen.to_string()));
                }
                RouteEntry::prefix(NsapAddress::from_hex(addr)?, plen, next_hop, device)
            }
        }
    }
}

impl FromStr for RouteEntry {
    type Err = RouteParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        match words.split_first() {
            Some((&"route", rest)) => RouteEntry::from_words(rest),
            _ => Err(RouteParseError::Syntax),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutingTable {
    entries: Vec<RouteEntry>,
}

impl RoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: RouteEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[RouteEntry] {
        &self.entries
    }

    pub fn lookup(&self, dst: &NsapAddress) -> Option<&RouteEntry> {
        self.entries.iter().find(|e| e.matches(dst))
    }

    /// One `route ...` line per entry; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Result<Self, RouteParseError> {
        let mut table = RoutingTable::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let entry = line.parse().map_err(|e| RouteParseError::Line {
                line: i + 1,
                source: Box::new(e),
            })?;
            table.push(entry);
        }
        Ok(table)
    }
}

impl FromIterator<RouteEntry> for RoutingTable {
    fn from_iter<I: IntoIterator<Item = RouteEntry>>(iter: I) -> Self {
        RoutingTable {
            entries: iter.into_iter().collect(),
        }
    }
}

impl fmt::Display for RoutingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

pub fn lookup<'a>(table: &'a RoutingTable, dst: &NsapAddress) -> Option<&'a RouteEntry> {
    table.lookup(dst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceRouteKind {
    Complete,
    Partial,
}

/// Value of the source routing option: type octet (0x01 complete, 0x00
/// partial), index of the next entry, then `(length, address)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRouteParam {
    pub kind: SourceRouteKind,
    pub next_index: usize,
    pub entries: Vec<NsapAddress>,
}

impl SourceRouteParam {
    pub fn new(kind: SourceRouteKind, entries: Vec<NsapAddress>) -> Self {
        SourceRouteParam {
            kind,
            next_index: 0,
            entries,
        }
    }

    pub fn decode(value: &[u8]) -> Option<Self> {
        let (&kind, rest) = value.split_first()?;
        let kind = match kind {
            0x01 => SourceRouteKind::Complete,
            0x00 => SourceRouteKind::Partial,
            _ => return None,
        };
        let (&next_index, mut rest) = rest.split_first()?;
        let mut entries = Vec::new();
        while let Some((&len, tail)) = rest.split_first() {
            let len = usize::from(len);
            if len == 0 || len > MAX_ADDRESS_LEN || tail.len() < len {
                return None;
            }
            entries.push(NsapAddress::new(&tail[..len]).ok()?);
            rest = &tail[len..];
        }
        let next_index = usize::from(next_index);
        if next_index > entries.len() {
            return None;
        }
        Some(SourceRouteParam {
            kind,
            next_index,
            entries,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![
            match self.kind {
                SourceRouteKind::Complete => 0x01,
                SourceRouteKind::Partial => 0x00,
            },
            self.next_index as u8,
        ];
        for e in &self.entries {
            out.push(e.len() as u8);
            out.extend_from_slice(e.as_bytes());
        }
        out
    }

    pub fn to_option(&self) -> crate::pdu::OptionParam {
        crate::pdu::OptionParam::new(option_code::SOURCE_ROUTING, self.encode())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceRouteDecision {
    NextHop {
        route: RouteEntry,
        param: SourceRouteParam,
    },
    Discard(ReasonForDiscard),
}

/// Picks the next hop from the source routing option.
///
/// Complete routes require the next listed address to resolve. Partial
/// routes skip an unresolvable entry and fall back to the destination. Once
/// the list is used up, both route on the destination address.
pub fn source_route_analysis(pdu: &Pdu, table: &RoutingTable) -> SourceRouteDecision {
    let code_pos = pdu
        .header
        .option_value_pos(option_code::SOURCE_ROUTING)
        .map_or(0, |p| (p - 2).min(255) as u8);
    let syntax = ReasonForDiscard::new(ReasonForDiscard::SOURCE_ROUTE_SYNTAX, code_pos);
    let Some(mut param) = pdu
        .header
        .find_option(option_code::SOURCE_ROUTING)
        .and_then(|o| SourceRouteParam::decode(&o.value))
    else {
        return SourceRouteDecision::Discard(syntax);
    };

    let by_destination = |param: SourceRouteParam| match table.lookup(&pdu.header.dest) {
        Some(route) => SourceRouteDecision::NextHop {
            route: route.clone(),
            param,
        },
        None => SourceRouteDecision::Discard(ReasonForDiscard::of(
            ReasonForDiscard::DESTINATION_UNREACHABLE,
        )),
    };

    let Some(hop) = param.entries.get(param.next_index).cloned() else {
        return by_destination(param);
    };
    param.next_index += 1;
    match (table.lookup(&hop), param.kind) {
        (Some(route), _) => SourceRouteDecision::NextHop {
            route: route.clone(),
            param,
        },
        (None, SourceRouteKind::Complete) => SourceRouteDecision::Discard(ReasonForDiscard::new(
            ReasonForDiscard::SOURCE_ROUTE_UNKNOWN_ADDRESS,
            code_pos,
        )),
        (None, SourceRouteKind::Partial) => by_destination(param),
    }
}

/// What routing needs to know about a node's interfaces.
pub trait Interfaces {
    fn mtu(&self, device: &DeviceId) -> Option<usize>;

    fn queue_depth(&self, _device: &DeviceId) -> usize {
        0
    }
}

/// Fixed MTU and queue depth per device.
#[derive(Debug, Clone, Default)]
pub struct StaticInterfaces {
    devices: BTreeMap<DeviceId, (usize, usize)>,
}

impl StaticInterfaces {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, device: &str, mtu: usize, queue_depth: usize) -> Self {
        self.devices
            .insert(DeviceId::new(device), (mtu, queue_depth));
        self
    }
}

impl Interfaces for StaticInterfaces {
    fn mtu(&self, device: &DeviceId) -> Option<usize> {
        self.devices.get(device).map(|d| d.0)
    }

    fn queue_depth(&self, device: &DeviceId) -> usize {
        self.devices.get(device).map_or(0, |d| d.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardOutcome {
    /// PDUs paired with their outgoing device, in transmission order.
    Send(Vec<(Pdu, DeviceId)>),
    Discard {
        reason: ReasonForDiscard,
        error_report: Option<Pdu>,
    },
}

/// Writes `new` into the header octet at `pos` (already applied to the
/// structured header by the caller) and fixes the checksum incrementally.
fn patch_checksum(pdu: &mut Pdu, pos: usize, old: u8, new: u8) {
    let bytes = pdu.header.to_bytes();
    if let Ok((c0, c1)) = adjust_checksum(&bytes, pos, old, new, CHECKSUM_POS) {
        pdu.header.checksum = [c0, c1];
    }
}

fn apply_source_route(pdu: &mut Pdu, param: &SourceRouteParam) {
    let Some(value_pos) = pdu.header.option_value_pos(option_code::SOURCE_ROUTING) else {
        return;
    };
    let Some(opt) = pdu
        .header
        .options
        .iter_mut()
        .find(|o| o.code == option_code::SOURCE_ROUTING)
    else {
        return;
    };
    let new = param.next_index as u8;
    let old = std::mem::replace(&mut opt.value[1], new);
    patch_checksum(pdu, value_pos + 1, old, new);
}

/// Congestion experienced bit in the last octet of a QoS maintenance value.
pub const CONGESTION_EXPERIENCED: u8 = 0x08;

fn mark_congestion(pdu: &mut Pdu, queue_depth: usize, threshold: usize) -> bool {
    if queue_depth <= threshold {
        return false;
    }
    let Some(value_pos) = pdu.header.option_value_pos(option_code::QOS_MAINTENANCE) else {
        return false;
    };
    let Some(opt) = pdu
        .header
        .options
        .iter_mut()
        .find(|o| o.code == option_code::QOS_MAINTENANCE)
    else {
        return false;
    };
    // Only the globally unique format carries the congestion bit.
    let Some(first) = opt.value.first() else {
        return false;
    };
    if first & 0xC0 != 0xC0 {
        return false;
    }
    let last = opt.value.len() - 1;
    let old = opt.value[last];
    if old & CONGESTION_EXPERIENCED != 0 {
        return false;
    }
    let new = old | CONGESTION_EXPERIENCED;
    opt.value[last] = new;
    patch_checksum(pdu, value_pos + last, old, new);
    true
}

/// Sets the congestion experienced bit when the queue is over threshold and
/// the PDU carries a globally unique QoS maintenance option.
pub fn congestion_notify(pdu: Pdu, queue_depth: usize, threshold: usize) -> Pdu {
    let mut pdu = pdu;
    mark_congestion(&mut pdu, queue_depth, threshold);
    pdu
}

/// Next hop, segmentation and congestion marking. Shared by forwarded and
/// locally originated PDUs.
fn dispatch<I: Interfaces>(
    mut pdu: Pdu,
    ctx: &mut NodeContext,
    table: &RoutingTable,
    ifaces: &I,
    originating: bool,
) -> Result<Vec<(Pdu, DeviceId)>, ReasonForDiscard> {
    let unreachable = ReasonForDiscard::of(ReasonForDiscard::DESTINATION_UNREACHABLE);
    let route = if pdu
        .header
        .find_option(option_code::SOURCE_ROUTING)
        .is_some()
    {
        match source_route_analysis(&pdu, table) {
            SourceRouteDecision::NextHop { route, param } => {
                apply_source_route(&mut pdu, &param);
                route
            }
            SourceRouteDecision::Discard(reason) => return Err(reason),
        }
    } else {
        table.lookup(&pdu.header.dest).cloned().ok_or(unreachable)?
    };
    let mtu = ifaces.mtu(&route.device).ok_or(unreachable)?;
    if originating && pdu.header.pdu_type == PduType::ErrorReport {
        pdu = fit_error_report(&pdu, mtu);
    }
    let summary = pdu.header.summary();
    let pieces = match fragment(&pdu, mtu) {
        Ok(pieces) => pieces,
        Err(OutputError::SegmentationNotPermitted(_) | OutputError::MtuTooSmall { .. }) => {
            return Err(ReasonForDiscard::of(
                ReasonForDiscard::SEGMENTATION_NOT_PERMITTED,
            ));
        }
        Err(_) => return Err(ReasonForDiscard::of(ReasonForDiscard::NOT_SPECIFIED)),
    };

    if !originating {
        ctx.record(
            Action::Forward,
            format!("{summary} dev={} via={}", route.device, route.next_hop),
        );
    }
    if pieces.len() > 1 {
        ctx.record(
            Action::Fragment,
            format!(
                "duid={} segments={} mtu={mtu} dev={}",
                pdu.header.seg.map_or(0, |s| s.data_unit_id),
                pieces.len(),
                route.device
            ),
        );
    }
    let depth = ifaces.queue_depth(&route.device);
    let threshold = ctx.config.congestion_threshold;
    let mut out = Vec::with_capacity(pieces.len());
    for (i, mut piece) in pieces.into_iter().enumerate() {
        if mark_congestion(&mut piece, depth + i, threshold) {
            ctx.record(
                Action::CongestionMark,
                format!(
                    "dev={} depth={} {}",
                    route.device,
                    depth + i,
                    piece.header.summary()
                ),
            );
        }
        out.push((piece, route.device.clone()));
    }
    Ok(out)
}

/// Relays a PDU that arrived for another system.
///
/// Works on a copy: the lifetime is decremented (discarding at zero), the
/// checksum adjusted, a next hop chosen and the PDU segmented to the
/// outgoing MTU when needed.
pub fn forward<I: Interfaces>(
    pdu: &Pdu,
    ctx: &mut NodeContext,
    table: &RoutingTable,
    ifaces: &I,
) -> ForwardOutcome {
    let mut copy = pdu.clone();
    let old = copy.header.lifetime;
    if old <= 1 {
        let reason = ReasonForDiscard::of(ReasonForDiscard::LIFETIME_EXPIRED_TRANSIT);
        let error_report = discard_pdu(pdu, reason, ctx);
        return ForwardOutcome::Discard {
            reason,
            error_report,
        };
    }
    copy.header.lifetime = old - 1;
    patch_checksum(&mut copy, LIFETIME_POS, old, old - 1);

    match dispatch(copy, ctx, table, ifaces, false) {
        Ok(out) => ForwardOutcome::Send(out),
        Err(reason) => {
            let error_report = discard_pdu(pdu, reason, ctx);
            ForwardOutcome::Discard {
                reason,
                error_report,
            }
        }
    }
}

/// Routes a PDU this node composed. Failures are recorded but never
/// reported back to ourselves.
pub fn originate<I: Interfaces>(
    pdu: Pdu,
    ctx: &mut NodeContext,
    table: &RoutingTable,
    ifaces: &I,
) -> ForwardOutcome {
    let summary = pdu.header.summary();
    match dispatch(pdu, ctx, table, ifaces, true) {
        Ok(out) => ForwardOutcome::Send(out),
        Err(reason) => {
            ctx.record(Action::Discard, format!("{reason} {summary}"));
            ForwardOutcome::Discard {
                reason,
                error_report: None,
            }
        }
    }
}
