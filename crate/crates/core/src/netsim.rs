//! Deterministic discrete-event simulator for end and intermediate systems
//! joined by point-to-point links.
//!
//! Events are ordered by `(virtual time, insertion sequence)`. Every node
//! action lands in a [`TraceLog`], so a scenario text always yields the same
//! trace.
//!
//! Scenario format, one stanza per line (`#` starts a comment):
//!
//! ```text
//! node <name> es|is addr <hex>[,<hex>...]
//! link <a>.<dev> <b>.<dev> mtu <n> delay <ms>
//! route <node> <dest-hex>/<plen> via <hex> dev <dev>
//! route <node> default via <hex> dev <dev>
//! config <node>|* [reassembly_ms=<n>] [congestion=<n>] [er_lifetime=<n>]
//! inject t=<ms> node=<name> dst=<hex> size=<n> sp=<0|1> er=<0|1> lifetime=<n>
//!        [srcroute=complete|partial:<hex>,...] [qos=<hex>]
//! inject_raw t=<ms> node=<name> dev=<dev> hex=<npdu-hex>
//! drop <inj>.<seg>[,<inj>.<seg>...]
//! reorder <inj>.<seg>,<inj>.<seg>[,...]
//! ```
//!
//! `inject` and `inject_raw` lines share one index space, counted from 0 in
//! file order. `<seg>` counts the frames an `inject` puts on the wire at the
//! originating node. A `drop` loses those frames on the first link. A
//! `reorder` holds the listed frames until every injection it mentions has
//! been processed, then sends them in the listed order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::input::{
    discard_pdu, expire_reassembly, receive, Delivery, Disposition, NodeConfig, NodeContext,
};
use crate::output::{compose, transmit, Device, Frame, MacAddr, OutputError, SendRequest};
use crate::pdu::{NsapAddress, OptionParam, Pdu, ReasonForDiscard};
use crate::routing::{
    forward, originate, DeviceId, ForwardOutcome, Interfaces, RouteEntry, RoutingTable,
    SourceRouteKind, SourceRouteParam,
};
use crate::trace::{Action, TraceLog, TraceRecord};

/// Reassembly timers are checked at multiples of this many virtual ms.
pub const TIMER_GRANULARITY_MS: u64 = 1000;
pub const MIN_LINK_MTU: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("node {node:?} has no device {device:?}")]
    UnknownDevice { node: String, device: String },
    #[error("time {time} is before the current clock {clock}")]
    TimeInPast { time: u64, clock: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    EndSystem,
    IntermediateSystem,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::EndSystem => "es",
            NodeKind::IntermediateSystem => "is",
        })
    }
}

#[derive(Debug, Clone)]
struct Port {
    device: Device,
    peer: (usize, DeviceId),
    delay: u64,
}

#[derive(Debug, Clone)]
pub struct Node {
    name: String,
    kind: NodeKind,
    ctx: NodeContext,
    table: RoutingTable,
    ports: BTreeMap<DeviceId, Port>,
}

impl Node {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn context(&self) -> &NodeContext {
        &self.ctx
    }

    pub fn table(&self) -> &RoutingTable {
        &self.table
    }

    pub fn devices(&self) -> impl Iterator<Item = &Device> {
        self.ports.values().map(|p| &p.device)
    }
}

struct Ports<'a>(&'a BTreeMap<DeviceId, Port>);

impl Interfaces for Ports<'_> {
    fn mtu(&self, device: &DeviceId) -> Option<usize> {
        self.0.get(device).map(|p| p.device.mtu)
    }

    /// Frames sent on the device that have not reached the far end yet.
    fn queue_depth(&self, device: &DeviceId) -> usize {
        self.0.get(device).map_or(0, |p| p.device.queue.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub a: (String, DeviceId),
    pub b: (String, DeviceId),
    pub mtu: usize,
    pub delay: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Injection {
    Send {
        time: u64,
        node: usize,
        request: SendRequest,
    },
    Raw {
        time: u64,
        node: usize,
        device: DeviceId,
        bytes: Vec<u8>,
    },
}

#[derive(Debug, Clone)]
enum Event {
    Inject(usize),
    Arrival {
        node: usize,
        device: DeviceId,
        frame: Frame,
        from: Option<(usize, DeviceId)>,
    },
    TimerCheck,
}

type Tag = (usize, usize);

#[derive(Debug, Clone)]
struct ReorderGroup {
    order: Vec<Tag>,
    waiting: BTreeSet<usize>,
    held: BTreeMap<Tag, (usize, DeviceId, Frame)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub time: u64,
    pub node: String,
    pub delivery: Delivery,
}

/// A frame put on a link, including ones lost to a `drop` stanza.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmitRecord {
    pub time: u64,
    pub node: String,
    pub device: DeviceId,
    pub body: Vec<u8>,
    pub lost: bool,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    nodes: Vec<Node>,
    links: Vec<Link>,
    clock: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Event>,
    timer_at: Option<u64>,
    injections: Vec<Injection>,
    drops: BTreeSet<Tag>,
    reorders: Vec<ReorderGroup>,
    /// Injection being processed and the number of frames it has sent.
    tagging: Option<Tag>,
    trace: TraceLog,
    deliveries: Vec<DeliveryRecord>,
    transmissions: Vec<TransmitRecord>,
}

/// Octet `i` of the data injected by injection `idx`.
pub fn payload_octet(idx: usize, i: usize) -> u8 {
    ((idx * 7 + i) % 251) as u8
}

pub fn build_topology(config: &str) -> Result<Simulation, ConfigError> {
    Simulation::from_scenario(config)
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::new(line, format!("bad value for {key}: {v:?}")))
}

fn parse_flag(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(ConfigError::new(
            line,
            format!("{key} must be 0 or 1, got {v:?}"),
        )),
    }
}

fn parse_addr(line: usize, v: &str) -> Result<NsapAddress, ConfigError> {
    NsapAddress::from_hex(v).map_err(|e| ConfigError::new(line, format!("address {v:?}: {e}")))
}

fn parse_tags(line: usize, v: &str) -> Result<Vec<Tag>, ConfigError> {
    v.split(',')
        .map(|t| {
            let (i, s) = t.split_once('.').ok_or_else(|| {
                ConfigError::new(line, format!("expected <inj>.<seg>, got {t:?}"))
            })?;
            Ok((
                parse_u64(line, "injection", i)? as usize,
                parse_u64(line, "segment", s)? as usize,
            ))
        })
        .collect()
}

fn key_values(line: usize, words: &[&str]) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for w in words {
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| ConfigError::new(line, format!("expected key=value, got {w:?}")))?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::new(line, format!("duplicate key {k:?}")));
        }
    }
    Ok(out)
}

fn take<'a>(
    line: usize,
    kv: &'a BTreeMap<String, String>,
    key: &str,
) -> Result<&'a str, ConfigError> {
    kv.get(key)
        .map(String::as_str)
        .ok_or_else(|| ConfigError::new(line, format!("missing {key}=")))
}

fn check_keys(
    line: usize,
    kv: &BTreeMap<String, String>,
    allowed: &[&str],
) -> Result<(), ConfigError> {
    match kv.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ConfigError::new(line, format!("unknown key {k:?}"))),
        None => Ok(()),
    }
}

fn parse_source_route(line: usize, v: &str) -> Result<SourceRouteParam, ConfigError> {
    let (kind, list) = v
        .split_once(':')
        .ok_or_else(|| ConfigError::new(line, "srcroute needs complete:|partial:"))?;
    let kind = match kind {
        "complete" => SourceRouteKind::Complete,
        "partial" => SourceRouteKind::Partial,
        _ => {
            return Err(ConfigError::new(
                line,
                format!("unknown source route kind {kind:?}"),
            ))
        }
    };
    let entries = list
        .split(',')
        .map(|a| parse_addr(line, a))
        .collect::<Result<_, _>>()?;
    Ok(SourceRouteParam::new(kind, entries))
}

impl Simulation {
    fn empty() -> Self {
        Simulation {
            nodes: Vec::new(),
            links: Vec::new(),
            clock: 0,
            seq: 0,
            queue: BTreeMap::new(),
            timer_at: None,
            injections: Vec::new(),
            drops: BTreeSet::new(),
            reorders: Vec::new(),
            tagging: None,
            trace: TraceLog::new(),
            deliveries: Vec::new(),
            transmissions: Vec::new(),
        }
    }

    pub fn from_scenario(text: &str) -> Result<Self, ConfigError> {
        let mut sim = Simulation::empty();
        let mut route_devices = Vec::new();
        let mut configs = Vec::new();
        let mut tag_stanzas = Vec::new();
        let mut raw_injections = BTreeSet::new();

        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw_line.split('#').next().unwrap_or("");
            let words: Vec<&str> = content.split_whitespace().collect();
            let Some((&stanza, rest)) = words.split_first() else {
                continue;
            };
            match stanza {
                "node" => sim.parse_node(line, rest)?,
                "link" => sim.parse_link(line, rest)?,
                "route" => {
                    let [node, route @ ..] = rest else {
                        return Err(ConfigError::new(line, "route needs a node"));
                    };
                    let n = sim
                        .node_index(node)
                        .ok_or_else(|| ConfigError::new(line, format!("unknown node {node:?}")))?;
                    let entry = RouteEntry::from_words(route)
                        .map_err(|e| ConfigError::new(line, e.to_string()))?;
                    route_devices.push((line, n, entry.device.clone()));
                    sim.nodes[n].table.push(entry);
                }
                "config" => {
                    configs.push((line, rest.iter().map(|s| s.to_string()).collect::<Vec<_>>()))
                }
                "inject" => sim.parse_inject(line, rest)?,
                "inject_raw" => {
                    raw_injections.insert(sim.injections.len());
                    sim.parse_inject_raw(line, rest)?;
                }
                "drop" | "reorder" => {
                    let [list] = rest else {
                        return Err(ConfigError::new(line, format!("{stanza} takes one list")));
                    };
                    tag_stanzas.push((line, stanza, parse_tags(line, list)?));
                }
                _ => return Err(ConfigError::new(line, format!("unknown stanza {stanza:?}"))),
            }
        }

        for (line, n, dev) in route_devices {
            if !sim.nodes[n].ports.contains_key(&dev) {
                return Err(ConfigError::new(
                    line,
                    format!("node {} has no device {dev}", sim.nodes[n].name),
                ));
            }
        }
        for (line, words) in configs {
            sim.apply_config(line, &words)?;
        }
        let mut claimed = BTreeSet::new();
        for (line, stanza, tags) in tag_stanzas {
            for &(inj, _) in &tags {
                if inj >= sim.injections.len() {
                    return Err(ConfigError::new(line, format!("no injection {inj}")));
                }
                if raw_injections.contains(&inj) {
                    return Err(ConfigError::new(
                        line,
                        format!("injection {inj} is inject_raw"),
                    ));
                }
            }
            for t in &tags {
                if !claimed.insert(*t) {
                    return Err(ConfigError::new(
                        line,
                        format!("{}.{} listed twice", t.0, t.1),
                    ));
                }
            }
            if stanza == "drop" {
                sim.drops.extend(tags);
            } else {
                if tags.len() < 2 {
                    return Err(ConfigError::new(line, "reorder needs at least two frames"));
                }
                let waiting = tags.iter().map(|t| t.0).collect();
                sim.reorders.push(ReorderGroup {
                    order: tags,
                    waiting,
                    held: BTreeMap::new(),
                });
            }
        }
        Ok(sim)
    }

    fn parse_node(&mut self, line: usize, rest: &[&str]) -> Result<(), ConfigError> {
        let [name, kind, "addr", addrs] = rest else {
            return Err(ConfigError::new(
                line,
                "expected `node <name> es|is addr <hex>[,...]`",
            ));
        };
        if self.node_index(name).is_some() {
            return Err(ConfigError::new(line, format!("duplicate node {name:?}")));
        }
        let kind = match *kind {
            "es" => NodeKind::EndSystem,
            "is" => NodeKind::IntermediateSystem,
            _ => {
                return Err(ConfigError::new(
                    line,
                    format!("node kind must be es or is, got {kind:?}"),
                ))
            }
        };
        let addrs = addrs
            .split(',')
            .map(|a| parse_addr(line, a))
            .collect::<Result<Vec<_>, _>>()?;
        let ctx = NodeContext::new(addrs, NodeConfig::default())
            .map_err(|e| ConfigError::new(line, e.to_string()))?;
        self.nodes.push(Node {
            name: name.to_string(),
            kind,
            ctx,
            table: RoutingTable::new(),
            ports: BTreeMap::new(),
        });
        Ok(())
    }

    fn endpoint(&self, line: usize, s: &str) -> Result<(usize, DeviceId), ConfigError> {
        let (node, dev) = s
            .split_once('.')
            .ok_or_else(|| ConfigError::new(line, format!("expected <node>.<dev>, got {s:?}")))?;
        let n = self
            .node_index(node)
            .ok_or_else(|| ConfigError::new(line, format!("unknown node {node:?}")))?;
        let dev = DeviceId::new(dev);
        if self.nodes[n].ports.contains_key(&dev) {
            return Err(ConfigError::new(line, format!("device {s} already linked")));
        }
        Ok((n, dev))
    }

    fn parse_link(&mut self, line: usize, rest: &[&str]) -> Result<(), ConfigError> {
        let [a, b, "mtu", mtu, "delay", delay] = rest else {
            return Err(ConfigError::new(
                line,
                "expected `link <a>.<dev> <b>.<dev> mtu <n> delay <ms>`",
            ));
        };
        let a = self.endpoint(line, a)?;
        let b = self.endpoint(line, b)?;
        if a == b {
            return Err(ConfigError::new(line, "link endpoints must differ"));
        }
        let mtu = parse_u64(line, "mtu", mtu)? as usize;
        if mtu < MIN_LINK_MTU {
            return Err(ConfigError::new(
                line,
                format!("mtu {mtu} below {MIN_LINK_MTU}"),
            ));
        }
        let delay = parse_u64(line, "delay", delay)?;
        let mac_a = self.next_mac(a.0);
        let mac_b = self.next_mac(b.0);
        for ((n, dev), mac, peer, peer_mac) in [(&a, mac_a, &b, mac_b), (&b, mac_b, &a, mac_a)] {
            let mut device = Device::new(dev.clone(), mac, mtu);
            device.neighbor = Some(peer_mac);
            self.nodes[*n].ports.insert(
                dev.clone(),
                Port {
                    device,
                    peer: peer.clone(),
                    delay,
                },
            );
        }
        self.links.push(Link {
            a: (self.nodes[a.0].name.clone(), a.1),
            b: (self.nodes[b.0].name.clone(), b.1),
            mtu,
            delay,
        });
        Ok(())
    }

    fn next_mac(&self, n: usize) -> MacAddr {
        [0x02, 0, 0, 0, n as u8, self.nodes[n].ports.len() as u8]
    }

    fn parse_inject(&mut self, line: usize, rest: &[&str]) -> Result<(), ConfigError> {
        let kv = key_values(line, rest)?;
        check_keys(
            line,
            &kv,
            &[
                "t", "node", "dst", "size", "sp", "er", "lifetime", "srcroute", "qos",
            ],
        )?;
        let time = parse_u64(line, "t", take(line, &kv, "t")?)?;
        let node = take(line, &kv, "node")?;
        let n = self
            .node_index(node)
            .ok_or_else(|| ConfigError::new(line, format!("unknown node {node:?}")))?;
        let size = parse_u64(line, "size", take(line, &kv, "size")?)? as usize;
        let lifetime = parse_u64(line, "lifetime", take(line, &kv, "lifetime")?)?;
        let lifetime = u8::try_from(lifetime)
            .map_err(|_| ConfigError::new(line, "lifetime must fit one octet"))?;
        let mut options = Vec::new();
        if let Some(sr) = kv.get("srcroute") {
            options.push(parse_source_route(line, sr)?.to_option());
        }
        if let Some(q) = kv.get("qos") {
            let value = hex::decode(q).map_err(|e| ConfigError::new(line, format!("qos: {e}")))?;
            options.push(OptionParam::new(
                crate::pdu::option_code::QOS_MAINTENANCE,
                value,
            ));
        }
        let idx = self.injections.len();
        let request = SendRequest {
            payload: (0..size).map(|i| payload_octet(idx, i)).collect(),
            src: self.nodes[n].ctx.primary_address().clone(),
            dst: parse_addr(line, take(line, &kv, "dst")?)?,
            er_flag: parse_flag(line, "er", take(line, &kv, "er")?)?,
            sp_flag: parse_flag(line, "sp", take(line, &kv, "sp")?)?,
            lifetime,
            options,
        };
        self.push_injection(Injection::Send {
            time,
            node: n,
            request,
        });
        Ok(())
    }

    fn parse_inject_raw(&mut self, line: usize, rest: &[&str]) -> Result<(), ConfigError> {
        let kv = key_values(line, rest)?;
        check_keys(line, &kv, &["t", "node", "dev", "hex"])?;
        let time = parse_u64(line, "t", take(line, &kv, "t")?)?;
        let node = take(line, &kv, "node")?;
        let n = self
            .node_index(node)
            .ok_or_else(|| ConfigError::new(line, format!("unknown node {node:?}")))?;
        let bytes = hex::decode(take(line, &kv, "hex")?)
            .map_err(|e| ConfigError::new(line, format!("hex: {e}")))?;
        let device = DeviceId::new(take(line, &kv, "dev")?);
        self.push_injection(Injection::Raw {
            time,
            node: n,
            device,
            bytes,
        });
        Ok(())
    }

    fn apply_config(&mut self, line: usize, words: &[String]) -> Result<(), ConfigError> {
        let Some((target, rest)) = words.split_first() else {
            return Err(ConfigError::new(line, "config needs a node or *"));
        };
        let rest: Vec<&str> = rest.iter().map(String::as_str).collect();
        let kv = key_values(line, &rest)?;
        check_keys(line, &kv, &["reassembly_ms", "congestion", "er_lifetime"])?;
        let targets: Vec<usize> = if target == "*" {
            (0..self.nodes.len()).collect()
        } else {
            vec![self
                .node_index(target)
                .ok_or_else(|| ConfigError::new(line, format!("unknown node {target:?}")))?]
        };
        for n in targets {
            let cfg = &mut self.nodes[n].ctx.config;
            if let Some(v) = kv.get("reassembly_ms") {
                cfg.reassembly_lifetime_ms = parse_u64(line, "reassembly_ms", v)?;
            }
            if let Some(v) = kv.get("congestion") {
                cfg.congestion_threshold = parse_u64(line, "congestion", v)? as usize;
            }
            if let Some(v) = kv.get("er_lifetime") {
                cfg.er_lifetime = u8::try_from(parse_u64(line, "er_lifetime", v)?)
                    .map_err(|_| ConfigError::new(line, "er_lifetime must fit one octet"))?;
            }
        }
        Ok(())
    }

    fn push_injection(&mut self, inj: Injection) -> usize {
        let idx = self.injections.len();
        let time = match &inj {
            Injection::Send { time, .. } | Injection::Raw { time, .. } => *time,
        };
        self.injections.push(inj);
        self.schedule(time, Event::Inject(idx));
        idx
    }

    fn schedule(&mut self, time: u64, event: Event) {
        self.queue.insert((time, self.seq), event);
        self.seq += 1;
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn trace(&self) -> &TraceLog {
        &self.trace
    }

    pub fn deliveries(&self) -> &[DeliveryRecord] {
        &self.deliveries
    }

    pub fn transmissions(&self) -> &[TransmitRecord] {
        &self.transmissions
    }

    pub fn injections(&self) -> &[Injection] {
        &self.injections
    }

    /// Data carried by an `inject`, or `None` for raw injections.
    pub fn injection_payload(&self, idx: usize) -> Option<&[u8]> {
        match self.injections.get(idx)? {
            Injection::Send { request, .. } => Some(&request.payload),
            Injection::Raw { .. } => None,
        }
    }

    /// Schedules a transport send at `node`. Returns the injection index.
    pub fn inject(
        &mut self,
        time: u64,
        node: &str,
        request: SendRequest,
    ) -> Result<usize, SimError> {
        let n = self
            .node_index(node)
            .ok_or_else(|| SimError::UnknownNode(node.to_string()))?;
        if time < self.clock {
            return Err(SimError::TimeInPast {
                time,
                clock: self.clock,
            });
        }
        Ok(self.push_injection(Injection::Send {
            time,
            node: n,
            request,
        }))
    }

    /// Schedules raw NPDU octets arriving at `node` on `device`.
    pub fn inject_raw(
        &mut self,
        time: u64,
        node: &str,
        device: &str,
        bytes: Vec<u8>,
    ) -> Result<usize, SimError> {
        let n = self
            .node_index(node)
            .ok_or_else(|| SimError::UnknownNode(node.to_string()))?;
        if time < self.clock {
            return Err(SimError::TimeInPast {
                time,
                clock: self.clock,
            });
        }
        let device = DeviceId::new(device);
        Ok(self.push_injection(Injection::Raw {
            time,
            node: n,
            device,
            bytes,
        }))
    }

    /// Processes every event with time ≤ `until`.
    pub fn run(&mut self, until: u64) -> &TraceLog {
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > until {
                break;
            }
            let ((time, _), event) = entry.remove_entry();
            self.step(time, event);
        }
        self.clock = self.clock.max(until);
        &self.trace
    }

    /// Processes events until none are left.
    pub fn run_to_completion(&mut self) -> &TraceLog {
        while let Some(((time, _), event)) = self.queue.pop_first() {
            self.step(time, event);
        }
        &self.trace
    }

    fn step(&mut self, time: u64, event: Event) {
        self.clock = time;
        for node in &mut self.nodes {
            node.ctx.now = time;
        }
        match event {
            Event::Inject(idx) => self.process_injection(idx),
            Event::Arrival {
                node,
                device,
                frame,
                from,
            } => {
                if let Some((sender, dev)) = from {
                    if let Some(port) = self.nodes[sender].ports.get_mut(&dev) {
                        port.device.queue.pop_front();
                    }
                }
                self.arrive(node, &device, &frame.body);
            }
            Event::TimerCheck => {
                self.timer_at = None;
                for n in 0..self.nodes.len() {
                    let reports = expire_reassembly(&mut self.nodes[n].ctx);
                    self.flush(n);
                    for er in reports {
                        self.originate_from(n, er);
                    }
                }
            }
        }
        self.arm_timer();
    }

    fn arm_timer(&mut self) {
        if self.timer_at.is_some() || self.nodes.iter().all(|n| n.ctx.reassembly.is_empty()) {
            return;
        }
        let at = (self.clock / TIMER_GRANULARITY_MS + 1) * TIMER_GRANULARITY_MS;
        self.timer_at = Some(at);
        self.schedule(at, Event::TimerCheck);
    }

    fn process_injection(&mut self, idx: usize) {
        match self.injections[idx].clone() {
            Injection::Send { node, request, .. } => {
                self.tagging = Some((idx, 0));
                let ctx = &mut self.nodes[node].ctx;
                match compose(&request, &mut ctx.duid) {
                    Ok(pdu) => self.originate_from(node, pdu),
                    Err(e) => {
                        ctx.record(
                            Action::Discard,
                            format!(
                                "{} compose={e}",
                                ReasonForDiscard::of(ReasonForDiscard::NOT_SPECIFIED)
                            ),
                        );
                        self.flush(node);
                    }
                }
                self.tagging = None;
                self.release_reordered(idx);
            }
            Injection::Raw {
                node,
                device,
                bytes,
                ..
            } => {
                self.arrive(node, &device, &bytes);
            }
        }
    }

    fn release_reordered(&mut self, idx: usize) {
        let mut ready = Vec::new();
        for group in &mut self.reorders {
            if group.waiting.remove(&idx) && group.waiting.is_empty() {
                for tag in &group.order {
                    if let Some(held) = group.held.remove(tag) {
                        ready.push(held);
                    }
                }
            }
        }
        for (n, dev, frame) in ready {
            self.put_on_link(n, &dev, frame, false);
        }
    }

    fn arrive(&mut self, n: usize, device: &DeviceId, body: &[u8]) {
        let node = &mut self.nodes[n];
        node.ctx
            .record(Action::Recv, format!("dev={device} bytes={}", body.len()));
        let disposition = receive(body, &mut node.ctx);
        let outcome = match disposition {
            Disposition::DeliverLocal(delivery) => {
                self.deliveries.push(DeliveryRecord {
                    time: self.clock,
                    node: node.name.clone(),
                    delivery,
                });
                None
            }
            Disposition::ForwardCandidate(pdu) => Some(match node.kind {
                NodeKind::IntermediateSystem => {
                    forward(&pdu, &mut node.ctx, &node.table, &Ports(&node.ports))
                }
                NodeKind::EndSystem => {
                    let reason = ReasonForDiscard::of(ReasonForDiscard::DESTINATION_UNKNOWN);
                    let error_report = discard_pdu(&pdu, reason, &mut node.ctx);
                    ForwardOutcome::Discard {
                        reason,
                        error_report,
                    }
                }
            }),
            Disposition::Discarded {
                reason,
                error_report,
            } => Some(ForwardOutcome::Discard {
                reason,
                error_report,
            }),
            Disposition::Held => None,
        };
        let late_reports = node.ctx.take_outbox();
        self.flush(n);
        if let Some(outcome) = outcome {
            self.dispatch(n, outcome);
        }
        for er in late_reports {
            self.originate_from(n, er);
        }
    }

    fn originate_from(&mut self, n: usize, pdu: Pdu) {
        let node = &mut self.nodes[n];
        let outcome = originate(pdu, &mut node.ctx, &node.table, &Ports(&node.ports));
        self.flush(n);
        self.dispatch(n, outcome);
    }

    fn dispatch(&mut self, n: usize, outcome: ForwardOutcome) {
        match outcome {
            ForwardOutcome::Send(list) => {
                for (pdu, dev) in list {
                    self.send(n, &dev, &pdu);
                }
            }
            ForwardOutcome::Discard {
                error_report: Some(er),
                ..
            } => self.originate_from(n, er),
            ForwardOutcome::Discard {
                error_report: None, ..
            } => {}
        }
    }

    fn send(&mut self, n: usize, dev: &DeviceId, pdu: &Pdu) {
        let tag = self.tagging.map(|(idx, seg)| {
            self.tagging = Some((idx, seg + 1));
            (idx, seg)
        });
        let node = &mut self.nodes[n];
        let Some(port) = node.ports.get_mut(dev) else {
            return;
        };
        let frame = match transmit(pdu, &mut port.device) {
            Ok(frame) => frame,
            Err(e) => {
                let reason = match e {
                    OutputError::PduExceedsMtu { .. } => {
                        ReasonForDiscard::SEGMENTATION_NOT_PERMITTED
                    }
                    _ => ReasonForDiscard::NOT_SPECIFIED,
                };
                node.ctx.record(
                    Action::Discard,
                    format!(
                        "{} {} transmit={e}",
                        ReasonForDiscard::of(reason),
                        pdu.header.summary()
                    ),
                );
                self.flush(n);
                return;
            }
        };
        // The frame is back in flight when it is put on the link.
        port.device.queue.pop_back();
        if let Some(tag) = tag {
            if self.drops.contains(&tag) {
                self.put_on_link(n, dev, frame, true);
                return;
            }
            if let Some(group) = self.reorders.iter_mut().find(|g| g.order.contains(&tag)) {
                group.held.insert(tag, (n, dev.clone(), frame));
                return;
            }
        }
        self.put_on_link(n, dev, frame, false);
    }

    fn put_on_link(&mut self, n: usize, dev: &DeviceId, frame: Frame, lost: bool) {
        let node = &mut self.nodes[n];
        let Some(port) = node.ports.get_mut(dev) else {
            return;
        };
        let summary = match crate::pdu::parse_pdu(&frame.body) {
            Ok(crate::pdu::Npdu::Clnp(p)) => p.header.summary(),
            _ => String::from("raw"),
        };
        let mut detail = format!("dev={dev} bytes={} {summary}", frame.body.len());
        if lost {
            detail.push_str(" lost=1");
        }
        self.trace.push(TraceRecord {
            time: self.clock,
            node: node.name.clone(),
            action: Action::Transmit,
            detail,
        });
        self.transmissions.push(TransmitRecord {
            time: self.clock,
            node: node.name.clone(),
            device: dev.clone(),
            body: frame.body.clone(),
            lost,
        });
        if lost {
            return;
        }
        port.device.queue.push_back(frame.clone());
        let (peer, peer_dev) = port.peer.clone();
        let at = self.clock + port.delay;
        self.schedule(
            at,
            Event::Arrival {
                node: peer,
                device: peer_dev,
                frame,
                from: Some((n, dev.clone())),
            },
        );
    }

    fn flush(&mut self, n: usize) {
        let node = &mut self.nodes[n];
        for (action, detail) in node.ctx.take_events() {
            self.trace.push(TraceRecord {
                time: self.clock,
                node: node.name.clone(),
                action,
                detail,
            });
        }
    }
}
