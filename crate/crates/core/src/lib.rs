//! A user-space CLNP (ISO/IEC 8473-1) data plane.
//!
//! The crate is organised along the path a PDU takes through a node:
//!
//! * [`pdu`] decodes and encodes NPDUs byte-exactly and checks header syntax.
//! * [`checksum`] holds the header checksum arithmetic, including the
//!   incremental update used after the lifetime is decremented.
//! * [`input`] is the receive path: decompose, analyse, verify, reassemble and
//!   dispatch, generating error reports on discard.
//! * [`reassembly`] rebuilds initial PDUs from segments.
//! * [`routing`] is the forward path: lookup, lifetime handling, source routing
//!   and congestion notification.
//! * [`output`] composes PDUs, segments them to a link MTU and frames them.
//! * [`netsim`] wires nodes together on a virtual clock and records a
//!   deterministic [`trace::TraceLog`].

pub mod checksum;
pub mod input;
pub mod netsim;
pub mod output;
pub mod pdu;
pub mod reassembly;
pub mod routing;
pub mod trace;

pub use checksum::{adjust_checksum, compute_checksum, verify_checksum, ChecksumVerdict};
pub use input::{receive, Delivery, Disposition, NodeConfig, NodeContext, Sink};
pub use netsim::{build_topology, Simulation};
pub use output::{compose, fragment, transmit, Frame, SendRequest};
pub use pdu::{
    analyze_header, compose_header, find_option, parse_pdu, ClnpHeader, Flags, Npdu, NsapAddress,
    OptionParam, Pdu, PduType, ReasonForDiscard, SegmentationPart,
};
pub use routing::{forward, lookup, RouteEntry, RoutingTable};
pub use trace::{Action, TraceLog, TraceRecord};
