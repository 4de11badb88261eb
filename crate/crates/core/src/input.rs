//! Receive path: decompose, analyse, verify the checksum, reassemble, then
//! deliver locally or hand the PDU to routing.
//!
//! Failures never escape as errors. Each one becomes a discard carrying a
//! [`ReasonForDiscard`], plus an error report when the sender asked for one.

use thiserror::Error;

use crate::checksum::ChecksumVerdict;
use crate::output::DuidCounter;
use crate::pdu::{
    analyze_header, option_code, parse_pdu, ClnpHeader, Flags, Npdu, NsapAddress, Pdu, PduType,
    ReasonForDiscard, NLPID_CLNP, VERSION,
};
use crate::reassembly::{ExpiredBuffer, FragmentStore, InsertOutcome, ReassemblyError};
use crate::trace::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeConfig {
    pub reassembly_lifetime_ms: u64,
    /// Queue depth above which outgoing PDUs are marked congested.
    pub congestion_threshold: usize,
    /// Lifetime given to locally generated error reports.
    pub er_lifetime: u8,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            reassembly_lifetime_ms: 10_000,
            congestion_threshold: 4,
            er_lifetime: 32,
        }
    }
}

/// Per-node protocol state shared by the input, routing and output paths.
#[derive(Debug, Clone)]
pub struct NodeContext {
    local_addresses: Vec<NsapAddress>,
    /// Virtual time in ms.
    pub now: u64,
    pub reassembly: FragmentStore,
    pub config: NodeConfig,
    pub duid: DuidCounter,
    events: Vec<(Action, String)>,
    outbox: Vec<Pdu>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputError {
    #[error("a node needs at least one local address")]
    NoLocalAddress,
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

impl NodeContext {
    pub fn new(local_addresses: Vec<NsapAddress>, config: NodeConfig) -> Result<Self, InputError> {
        let mut addrs: Vec<NsapAddress> = Vec::with_capacity(local_addresses.len());
        for a in local_addresses {
            if !addrs.contains(&a) {
                addrs.push(a);
            }
        }
        if addrs.is_empty() {
            return Err(InputError::NoLocalAddress);
        }
        Ok(NodeContext {
            local_addresses: addrs,
            now: 0,
            reassembly: FragmentStore::new(),
            config,
            duid: DuidCounter::default(),
            events: Vec::new(),
            outbox: Vec::new(),
        })
    }

    pub fn local_addresses(&self) -> &[NsapAddress] {
        &self.local_addresses
    }

    /// Source address for PDUs this node originates.
    pub fn primary_address(&self) -> &NsapAddress {
        &self.local_addresses[0]
    }

    pub fn is_local(&self, addr: &NsapAddress) -> bool {
        self.local_addresses.contains(addr)
    }

    pub fn record(&mut self, action: Action, detail: impl Into<String>) {
        self.events.push((action, detail.into()));
    }

    /// Drains trace events recorded since the last call.
    pub fn take_events(&mut self) -> Vec<(Action, String)> {
        std::mem::take(&mut self.events)
    }

    /// Drains error reports generated outside a [`Disposition`], such as on
    /// reassembly expiry.
    pub fn take_outbox(&mut self) -> Vec<Pdu> {
        std::mem::take(&mut self.outbox)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sink {
    Transport,
    /// Error reports addressed to this node. Never answered.
    ErrorReport(Option<ReasonForDiscard>),
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub sink: Sink,
    pub payload: Vec<u8>,
    /// Absent for inactive-protocol PDUs.
    pub src: Option<NsapAddress>,
    pub dst: Option<NsapAddress>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disposition {
    DeliverLocal(Delivery),
    ForwardCandidate(Pdu),
    Discarded {
        reason: ReasonForDiscard,
        error_report: Option<Pdu>,
    },
    /// A segment was stored; its initial PDU is not complete yet.
    Held,
}

/// Runs one received buffer through the input pipeline.
pub fn receive(raw: &[u8], ctx: &mut NodeContext) -> Disposition {
    let pdu = match parse_pdu(raw) {
        Ok(Npdu::Inactive { payload }) => {
            ctx.record(
                Action::Deliver,
                format!("sink=inactive len={}", payload.len()),
            );
            return Disposition::DeliverLocal(Delivery {
                sink: Sink::Inactive,
                payload,
                src: None,
                dst: None,
            });
        }
        Ok(Npdu::Clnp(pdu)) => pdu,
        Err(e) => {
            let reason = e.reason();
            ctx.record(Action::Discard, format!("{reason} len={}", raw.len()));
            return Disposition::Discarded {
                reason,
                error_report: None,
            };
        }
    };

    if let Err(e) = analyze_header(&pdu) {
        return discard(pdu, e.reason, ctx);
    }
    if pdu.checksum_verdict() == ChecksumVerdict::Invalid {
        return discard(pdu, ReasonForDiscard::incorrect_checksum(), ctx);
    }

    let pdu = if is_segment(&pdu) {
        match reassemble(pdu, ctx) {
            Ok(Some(whole)) => whole,
            Ok(None) => return Disposition::Held,
            Err(disposition) => return disposition,
        }
    } else {
        pdu
    };

    if ctx.is_local(&pdu.header.dest) {
        deliver(pdu, ctx)
    } else {
        Disposition::ForwardCandidate(pdu)
    }
}

fn is_segment(pdu: &Pdu) -> bool {
    pdu.header
        .seg
        .is_some_and(|s| s.segment_offset != 0 || pdu.header.flags.ms)
}

fn deliver(pdu: Pdu, ctx: &mut NodeContext) -> Disposition {
    let sink = match pdu.header.pdu_type {
        PduType::ErrorReport => Sink::ErrorReport(
            pdu.header
                .find_option(option_code::REASON_FOR_DISCARD)
                .and_then(ReasonForDiscard::from_option),
        ),
        _ => Sink::Transport,
    };
    let sink_name = match sink {
        Sink::ErrorReport(Some(r)) => format!("sink=error-report {r}"),
        Sink::ErrorReport(None) => "sink=error-report".to_string(),
        _ => "sink=transport".to_string(),
    };
    ctx.record(
        Action::Deliver,
        format!(
            "{sink_name} src={} dst={} len={}",
            pdu.header.src,
            pdu.header.dest,
            pdu.payload.len()
        ),
    );
    Disposition::DeliverLocal(Delivery {
        sink,
        src: Some(pdu.header.src),
        dst: Some(pdu.header.dest),
        payload: pdu.payload,
    })
}

fn discard(pdu: Pdu, reason: ReasonForDiscard, ctx: &mut NodeContext) -> Disposition {
    let error_report = discard_pdu(&pdu, reason, ctx);
    Disposition::Discarded {
        reason,
        error_report,
    }
}

/// Inserts a segment. `Ok(None)` while the initial PDU is incomplete.
fn reassemble(pdu: Pdu, ctx: &mut NodeContext) -> Result<Option<Pdu>, Disposition> {
    loop {
        let outcome =
            ctx.reassembly
                .insert_fragment(&pdu, ctx.now, ctx.config.reassembly_lifetime_ms);
        match outcome {
            Ok(InsertOutcome::Pending) => return Ok(None),
            Ok(InsertOutcome::Complete(whole)) => {
                ctx.record(Action::Reassembled, whole.header.summary());
                return Ok(Some(whole));
            }
            Ok(InsertOutcome::Expired(stale)) => {
                if let Some(er) = report_expired(stale, ctx) {
                    ctx.outbox.push(er);
                }
            }
            Err(e) => {
                let pos = match e {
                    ReassemblyError::InconsistentTotalLength { .. } => {
                        pdu.header.total_length_pos()
                    }
                    _ => pdu.header.segment_offset_pos(),
                };
                let octet = pos.unwrap_or(0).min(255) as u8;
                return Err(discard(pdu, ReasonForDiscard::header_syntax(octet), ctx));
            }
        }
    }
}

/// Discards `pdu`, returning an error report when one is due: the ER flag is
/// set and the PDU is not itself an error report.
pub fn discard_pdu(pdu: &Pdu, reason: ReasonForDiscard, ctx: &mut NodeContext) -> Option<Pdu> {
    ctx.record(
        Action::Discard,
        format!("{reason} {}", pdu.header.summary()),
    );
    if !pdu.header.flags.er || pdu.header.pdu_type == PduType::ErrorReport {
        return None;
    }
    emit_error_report(pdu, reason, ctx).ok()
}

/// Builds an error report about `offender`, addressed to its source. The data
/// part is the offender's whole header.
pub fn emit_error_report(
    offender: &Pdu,
    reason: ReasonForDiscard,
    ctx: &mut NodeContext,
) -> Result<Pdu, InputError> {
    if !offender.header.flags.er {
        return Err(InputError::InvariantViolation(
            "offender did not request reports".into(),
        ));
    }
    if offender.header.pdu_type == PduType::ErrorReport {
        return Err(InputError::InvariantViolation(
            "no reports about reports".into(),
        ));
    }
    let header = ClnpHeader {
        nlpid: NLPID_CLNP,
        header_length: 0,
        version: VERSION,
        lifetime: ctx.config.er_lifetime,
        flags: Flags::default(),
        pdu_type: PduType::ErrorReport,
        segment_length: 0,
        checksum: [0, 0],
        dest: offender.header.src.clone(),
        src: ctx.primary_address().clone(),
        seg: None,
        options: vec![reason.to_option()],
    };
    let mut er = Pdu::new(header, offender.header_bytes())
        .map_err(|e| InputError::InvariantViolation(e.to_string()))?;
    er.stamp_checksum();
    ctx.record(Action::EmitEr, format!("dst={} {reason}", er.header.dest));
    Ok(er)
}

fn report_expired(stale: ExpiredBuffer, ctx: &mut NodeContext) -> Option<Pdu> {
    ctx.record(
        Action::Expire,
        format!(
            "duid={} src={} dst={}",
            stale.key.data_unit_id, stale.key.src, stale.key.dst
        ),
    );
    let header = stale.first_header;
    if !header.flags.er || header.pdu_type == PduType::ErrorReport {
        return None;
    }
    let offender = Pdu {
        header,
        payload: Vec::new(),
    };
    emit_error_report(
        &offender,
        ReasonForDiscard::of(ReasonForDiscard::INCOMPLETE_PDU),
        ctx,
    )
    .ok()
}

/// Drops reassembly buffers past their deadline and returns the error
/// reports owed for them.
pub fn expire_reassembly(ctx: &mut NodeContext) -> Vec<Pdu> {
    let stale = ctx.reassembly.expire(ctx.now);
    stale
        .into_iter()
        .filter_map(|s| report_expired(s, ctx))
        .collect()
}
