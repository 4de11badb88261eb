//! Append-only event record produced by the simulator.
//!
//! Serialised one record per line as `time<TAB>node<TAB>ACTION<TAB>detail`.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Recv,
    Deliver,
    Forward,
    Discard,
    EmitEr,
    Fragment,
    Reassembled,
    Transmit,
    Expire,
    CongestionMark,
}

impl Action {
    pub const ALL: [Action; 10] = [
        Action::Recv,
        Action::Deliver,
        Action::Forward,
        Action::Discard,
        Action::EmitEr,
        Action::Fragment,
        Action::Reassembled,
        Action::Transmit,
        Action::Expire,
        Action::CongestionMark,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Recv => "RECV",
            Action::Deliver => "DELIVER",
            Action::Forward => "FORWARD",
            Action::Discard => "DISCARD",
            Action::EmitEr => "EMIT_ER",
            Action::Fragment => "FRAGMENT",
            Action::Reassembled => "REASSEMBLED",
            Action::Transmit => "TRANSMIT",
            Action::Expire => "EXPIRE",
            Action::CongestionMark => "CONGESTION_MARK",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown trace action {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: u64,
    pub node: String,
    pub action: Action,
    pub detail: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.time, self.node, self.action, self.detail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceLog {
    records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, action: Action) -> usize {
        self.records.iter().filter(|r| r.action == action).count()
    }

    pub fn of_action(&self, action: Action) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.action == action)
    }

    /// `recv=N deliver=N ...` over every action, in a fixed order.
    pub fn summary(&self) -> String {
        Action::ALL
            .iter()
            .map(|a| format!("{}={}", a.as_str().to_ascii_lowercase(), self.count(*a)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for TraceLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
