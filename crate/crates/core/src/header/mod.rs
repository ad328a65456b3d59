//! SmartPacket header: four SuperFields (region stack, IDs, QoS, RBS).
//!
//! Wire layout, most significant bit first, every SuperField byte aligned:
//!
//! ```text
//! active:4  filler:4                      bit0 stack, bit1 ids, bit2 qos, bit3 rbs
//! -- region stack -------------------------------------------------------
//! present:4 ephemeral-fid|filler:4        bit0 ephemeral fid, bit1 intra fid
//! [intra-fid:8] count:8 rid:16 * count    front (next waypoint) first
//! -- ids ----------------------------------------------------------------
//! present:4 filler:4                      bit0 pid, bit1 fid, bit2 receiver
//! [pid:12] [fid:12] [filler:4 if only one of pid/fid]
//! sender:16 [receiver:16]
//! -- qos ----------------------------------------------------------------
//! present:4 fission:4                     bit0 hop latency, bit1 path latency,
//!                                         bit2 hop loss, bit3 path loss;
//!                                         fission nibble 0 = absent
//! budget:4 * present [filler:4 if odd]
//! -- rbs ----------------------------------------------------------------
//! present:4(=0) filler:4 count:8 rid:16 * count   oldest first
//! -- legacy (ids absent) ------------------------------------------------
//! opaque original header bytes to the end
//! ```

mod codec;
pub mod qos;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codec::{decode, encode, parse_hex};

/// Largest number of entries a stack can carry (8-bit count).
pub const MAX_STACK: usize = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeaderError {
    #[error("stack of {len} entries exceeds {MAX_STACK}")]
    StackOverflow { len: usize },
    #[error("{field} value {value} does not fit in {bits} bits")]
    ValueRange {
        field: &'static str,
        value: u32,
        bits: u32,
    },
    #[error("truncated header: needed {needed} more bits at byte {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown or inconsistent active bits {0:#06b}")]
    UnknownActiveBits(u8),
    #[error("non-zero filler or reserved bits at byte {offset}")]
    ReservedBits { offset: usize },
    #[error("count/length mismatch: {0}")]
    CountMismatch(&'static str),
    #[error("{0} trailing bytes after header")]
    TrailingBytes(usize),
    #[error("region stack is empty")]
    EmptyStack,
    #[error("header without IDs SuperField must carry a legacy header, and vice versa")]
    LegacyConflict,
    #[error("bad hex input: {0}")]
    Hex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegionStackSF {
    pub ephemeral_fid: Option<u8>,
    pub intra_region_fid: Option<u8>,
    /// Front is the next waypoint, back is the destination region.
    pub entries: Vec<u16>,
}

impl RegionStackSF {
    pub fn new(entries: impl IntoIterator<Item = u16>) -> Self {
        RegionStackSF {
            entries: entries.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn push_front(&mut self, rid: u16) -> Result<(), HeaderError> {
        if self.entries.len() >= MAX_STACK {
            return Err(HeaderError::StackOverflow {
                len: self.entries.len() + 1,
            });
        }
        self.entries.insert(0, rid);
        Ok(())
    }

    pub fn pop_front(&mut self) -> Result<u16, HeaderError> {
        if self.entries.is_empty() {
            return Err(HeaderError::EmptyStack);
        }
        Ok(self.entries.remove(0))
    }

    pub fn peek_front(&self) -> Result<u16, HeaderError> {
        self.entries.first().copied().ok_or(HeaderError::EmptyStack)
    }

    pub fn destination(&self) -> Result<u16, HeaderError> {
        self.entries.last().copied().ok_or(HeaderError::EmptyStack)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdsSF {
    pub packet_pid: Option<u16>,
    pub flow_fid: Option<u16>,
    pub sender_nid: u16,
    /// Absent means "every node of the destination region".
    pub receiver_nid: Option<u16>,
}

impl IdsSF {
    pub fn new(sender: u16, receiver: Option<u16>) -> Self {
        IdsSF {
            packet_pid: None,
            flow_fid: None,
            sender_nid: sender,
            receiver_nid: receiver,
        }
    }
}

/// Quantized 4-bit budgets; see [`qos`] for the level tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QosSmartSF {
    pub single_hop_latency: Option<u8>,
    pub path_latency: Option<u8>,
    pub single_hop_loss: Option<u8>,
    pub path_loss: Option<u8>,
    /// 1 is the default single path; above 1 requests RedunCast replication.
    pub fission_rate: Option<u8>,
}

impl QosSmartSF {
    pub fn fission(&self) -> usize {
        usize::from(self.fission_rate.unwrap_or(1).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RbsSF {
    /// Oldest first: source region through the immediate backward region.
    pub traversed: Vec<u16>,
}

impl RbsSF {
    pub fn append(&mut self, rid: u16) -> Result<(), HeaderError> {
        if self.traversed.len() >= MAX_STACK {
            return Err(HeaderError::StackOverflow {
                len: self.traversed.len() + 1,
            });
        }
        self.traversed.push(rid);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.traversed.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmartPacketHeader {
    pub region_stack: RegionStackSF,
    pub ids: Option<IdsSF>,
    pub qos: Option<QosSmartSF>,
    pub rbs: Option<RbsSF>,
    /// Original header of a packet from a sender that cannot build SmartPackets.
    pub legacy_payload_header: Option<Vec<u8>>,
}

impl SmartPacketHeader {
    pub fn new(stack: RegionStackSF, ids: IdsSF) -> Self {
        SmartPacketHeader {
            region_stack: stack,
            ids: Some(ids),
            qos: None,
            rbs: None,
            legacy_payload_header: None,
        }
    }

    pub fn with_qos(mut self, qos: QosSmartSF) -> Self {
        self.qos = Some(qos);
        self
    }

    pub fn with_rbs(mut self, rbs: RbsSF) -> Self {
        self.rbs = Some(rbs);
        self
    }

    pub fn receiver(&self) -> Option<u16> {
        self.ids.as_ref().and_then(|i| i.receiver_nid)
    }

    pub fn sender(&self) -> Option<u16> {
        self.ids.as_ref().map(|i| i.sender_nid)
    }

    pub fn fission(&self) -> usize {
        self.qos.map_or(1, |q| q.fission())
    }

    pub fn is_legacy(&self) -> bool {
        self.legacy_payload_header.is_some()
    }

    /// Structural invariants and field widths.
    pub fn validate(&self) -> Result<(), HeaderError> {
        let stack = &self.region_stack;
        if stack.entries.is_empty() {
            return Err(HeaderError::EmptyStack);
        }
        if stack.entries.len() > MAX_STACK {
            return Err(HeaderError::StackOverflow {
                len: stack.entries.len(),
            });
        }
        check_width("ephemeral fid", stack.ephemeral_fid.map(u32::from), 4)?;
        let legacy = self.legacy_payload_header.is_some();
        if legacy == self.ids.is_some() {
            return Err(HeaderError::LegacyConflict);
        }
        if legacy && (self.qos.is_some() || self.rbs.is_some()) {
            return Err(HeaderError::LegacyConflict);
        }
        if let Some(ids) = &self.ids {
            check_width("packet pid", ids.packet_pid.map(u32::from), 12)?;
            check_width("flow fid", ids.flow_fid.map(u32::from), 12)?;
        }
        if let Some(q) = &self.qos {
            check_width("single-hop latency", q.single_hop_latency.map(u32::from), 4)?;
            check_width("path latency", q.path_latency.map(u32::from), 4)?;
            check_width("single-hop loss", q.single_hop_loss.map(u32::from), 4)?;
            check_width("path loss", q.path_loss.map(u32::from), 4)?;
            check_width("fission rate", q.fission_rate.map(u32::from), 4)?;
            if q.fission_rate == Some(0) {
                return Err(HeaderError::ValueRange {
                    field: "fission rate",
                    value: 0,
                    bits: 4,
                });
            }
        }
        if let Some(rbs) = &self.rbs {
            if rbs.traversed.len() > MAX_STACK {
                return Err(HeaderError::StackOverflow {
                    len: rbs.traversed.len(),
                });
            }
        }
        Ok(())
    }
}

fn check_width(field: &'static str, value: Option<u32>, bits: u32) -> Result<(), HeaderError> {
    match value {
        Some(v) if v >> bits != 0 => Err(HeaderError::ValueRange {
            field,
            value: v,
            bits,
        }),
        _ => Ok(()),
    }
}

/// Wrap a packet from a non-SmartPacket sender: region stack followed by the
/// original header, with the other SuperFields excluded.
pub fn prepend_stack(
    legacy_packet: Vec<u8>,
    stack: RegionStackSF,
) -> Result<SmartPacketHeader, HeaderError> {
    if stack.entries.is_empty() {
        return Err(HeaderError::EmptyStack);
    }
    Ok(SmartPacketHeader {
        region_stack: stack,
        ids: None,
        qos: None,
        rbs: None,
        legacy_payload_header: Some(legacy_packet),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_then_peek() {
        let mut s = RegionStackSF::new([8]);
        s.push_front(5).unwrap();
        assert_eq!(s.peek_front().unwrap(), 5);
        assert_eq!(s.destination().unwrap(), 8);
    }

    #[test]
    fn pop_front_drops_nearest_waypoint() {
        // H=5, G=7, R=8
        let mut s = RegionStackSF::new([5, 7, 8]);
        assert_eq!(s.pop_front().unwrap(), 5);
        assert_eq!(s.entries, vec![7, 8]);
    }

    #[test]
    fn empty_stack_errors() {
        let mut s = RegionStackSF::default();
        assert_eq!(s.pop_front().unwrap_err(), HeaderError::EmptyStack);
        assert_eq!(s.peek_front().unwrap_err(), HeaderError::EmptyStack);
    }

    #[test]
    fn stack_overflow_on_push() {
        let mut s = RegionStackSF::new(0..255);
        assert!(matches!(
            s.push_front(1),
            Err(HeaderError::StackOverflow { len: 256 })
        ));
    }

    #[test]
    fn prepend_excludes_other_superfields() {
        let h = prepend_stack(vec![0x45, 0x00, 0x00, 0x54], RegionStackSF::new([8])).unwrap();
        assert!(h.qos.is_none() && h.ids.is_none() && h.rbs.is_none());
        assert_eq!(
            h.legacy_payload_header.as_deref(),
            Some(&[0x45, 0, 0, 0x54][..])
        );
        assert_eq!(
            prepend_stack(vec![1], RegionStackSF::default()).unwrap_err(),
            HeaderError::EmptyStack
        );
    }

    #[test]
    fn pid_width_enforced() {
        let mut ids = IdsSF::new(3, Some(4));
        ids.packet_pid = Some(4096);
        let h = SmartPacketHeader::new(RegionStackSF::new([8]), ids);
        assert_eq!(
            h.validate().unwrap_err(),
            HeaderError::ValueRange {
                field: "packet pid",
                value: 4096,
                bits: 12
            }
        );
    }
}
