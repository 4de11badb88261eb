//! Reassembly of initial PDUs from segments.
//!
//! Segments belong together when they share data unit identifier, source and
//! destination. Where a new segment overlaps data already held, the held
//! octets win and the new segment is trimmed. Duplicates therefore add
//! nothing.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::pdu::{ClnpHeader, NsapAddress, Pdu};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FragmentKey {
    pub data_unit_id: u16,
    pub src: NsapAddress,
    pub dst: NsapAddress,
}

impl FragmentKey {
    pub fn of(header: &ClnpHeader) -> Option<Self> {
        header.seg.map(|seg| FragmentKey {
            data_unit_id: seg.data_unit_id,
            src: header.src.clone(),
            dst: header.dest.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentBuffer {
    pub key: FragmentKey,
    pub total_length: u16,
    /// `total_length` minus the header length.
    pub data_length: usize,
    /// Header of the offset-0 segment, once it has arrived.
    pub header_template: Option<ClnpHeader>,
    /// Header of the first segment seen, whatever its offset.
    pub first_header: ClnpHeader,
    /// Sorted, pairwise disjoint `(start, octets)` runs.
    pub ranges: Vec<(usize, Vec<u8>)>,
    pub deadline: u64,
}

impl FragmentBuffer {
    pub fn covered(&self) -> usize {
        self.ranges.iter().map(|(_, d)| d.len()).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.header_template.is_some() && self.covered() == self.data_length
    }

    /// True when the runs are sorted, disjoint and inside the data part.
    pub fn ranges_well_formed(&self) -> bool {
        let mut end = 0;
        for (start, data) in &self.ranges {
            if *start < end || data.is_empty() {
                return false;
            }
            end = start + data.len();
        }
        end <= self.data_length
    }

    /// Copies the parts of `data` at `start` that no held run covers.
    fn merge(&mut self, start: usize, data: &[u8]) {
        let end = start + data.len();
        let mut cursor = start;
        let mut pieces = Vec::new();
        for (rs, held) in &self.ranges {
            let re = rs + held.len();
            if re <= cursor {
                continue;
            }
            if *rs >= end {
                break;
            }
            if *rs > cursor {
                pieces.push((cursor, data[cursor - start..rs - start].to_vec()));
            }
            cursor = re;
            if cursor >= end {
                break;
            }
        }
        if cursor < end {
            pieces.push((cursor, data[cursor - start..].to_vec()));
        }
        if pieces.is_empty() {
            return;
        }
        self.ranges.extend(pieces);
        self.ranges.sort_by_key(|(s, _)| *s);
        debug_assert!(self.ranges_well_formed());
    }

    fn rebuild(self) -> Pdu {
        let mut header = self
            .header_template
            .expect("complete buffers hold the offset-0 header");
        let mut payload = Vec::with_capacity(self.data_length);
        for (_, data) in self.ranges {
            payload.extend_from_slice(&data);
        }
        let checksum_in_use = header.checksum_in_use();
        header.flags.ms = false;
        if let Some(seg) = header.seg.as_mut() {
            seg.segment_offset = 0;
        }
        header.segment_length = self.total_length;
        header.checksum = [0, 0];
        let mut pdu = Pdu { header, payload };
        if checksum_in_use {
            pdu.stamp_checksum();
        }
        pdu
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpiredBuffer {
    pub key: FragmentKey,
    pub first_header: ClnpHeader,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    Complete(Pdu),
    Pending,
    /// The matching buffer was past its deadline and has been removed. The
    /// segment was not consumed; insert it again to start a fresh buffer.
    Expired(ExpiredBuffer),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReassemblyError {
    #[error("pdu carries no segmentation part")]
    NotSegmented,
    #[error("total length {got} disagrees with {expected} from an earlier segment")]
    InconsistentTotalLength { expected: u16, got: u16 },
    #[error("segment [{offset}, {end}) extends past data length {data_length}")]
    OffsetBeyondTotal {
        offset: usize,
        end: usize,
        data_length: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FragmentStore {
    buffers: BTreeMap<FragmentKey, FragmentBuffer>,
}

impl FragmentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.buffers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.is_empty()
    }

    pub fn get(&self, key: &FragmentKey) -> Option<&FragmentBuffer> {
        self.buffers.get(key)
    }

    pub fn buffers(&self) -> impl Iterator<Item = &FragmentBuffer> {
        self.buffers.values()
    }

    pub fn next_deadline(&self) -> Option<u64> {
        self.buffers.values().map(|b| b.deadline).min()
    }

    /// Adds one segment. New buffers expire at `now + lifetime_ms`.
    pub fn insert_fragment(
        &mut self,
        pdu: &Pdu,
        now: u64,
        lifetime_ms: u64,
    ) -> Result<InsertOutcome, ReassemblyError> {
        let header = &pdu.header;
        let (Some(seg), Some(key)) = (header.seg, FragmentKey::of(header)) else {
            return Err(ReassemblyError::NotSegmented);
        };

        if let Some(buf) = self.buffers.get(&key) {
            if buf.deadline <= now {
                let buf = self.buffers.remove(&key).expect("present");
                return Ok(InsertOutcome::Expired(ExpiredBuffer {
                    key,
                    first_header: buf.first_header,
                }));
            }
        }

        let data_length =
            usize::from(seg.total_length).saturating_sub(usize::from(header.header_length));
        let offset = usize::from(seg.segment_offset);
        let end = offset + pdu.payload.len();

        if let Some(buf) = self.buffers.get(&key) {
            if buf.total_length != seg.total_length || buf.data_length != data_length {
                return Err(ReassemblyError::InconsistentTotalLength {
                    expected: buf.total_length,
                    got: seg.total_length,
                });
            }
        }
        if usize::from(seg.total_length) < usize::from(header.header_length) || end > data_length {
            return Err(ReassemblyError::OffsetBeyondTotal {
                offset,
                end,
                data_length,
            });
        }

        let buf = self
            .buffers
            .entry(key.clone())
            .or_insert_with(|| FragmentBuffer {
                key: key.clone(),
                total_length: seg.total_length,
                data_length,
                header_template: None,
                first_header: header.clone(),
                ranges: Vec::new(),
                deadline: now.saturating_add(lifetime_ms),
            });
        if offset == 0 && buf.header_template.is_none() {
            buf.header_template = Some(header.clone());
        }
        buf.merge(offset, &pdu.payload);

        if buf.is_complete() {
            let buf = self.buffers.remove(&key).expect("present");
            return Ok(InsertOutcome::Complete(buf.rebuild()));
        }
        Ok(InsertOutcome::Pending)
    }

    /// Removes every buffer whose deadline is at or before `now`, in key order.
    pub fn expire(&mut self, now: u64) -> Vec<ExpiredBuffer> {
        let due: Vec<FragmentKey> = self
            .buffers
            .iter()
            .filter(|(_, b)| b.deadline <= now)
            .map(|(k, _)| k.clone())
            .collect();
        due.into_iter()
            .map(|key| {
                let buf = self.buffers.remove(&key).expect("present");
                ExpiredBuffer {
                    key,
                    first_header: buf.first_header,
                }
            })
            .collect()
    }
}

pub fn insert_fragment(
    store: &mut FragmentStore,
    pdu: &Pdu,
    now: u64,
    lifetime_ms: u64,
) -> Result<InsertOutcome, ReassemblyError> {
    store.insert_fragment(pdu, now, lifetime_ms)
}

pub fn expire(store: &mut FragmentStore, now: u64) -> Vec<ExpiredBuffer> {
    store.expire(now)
}
