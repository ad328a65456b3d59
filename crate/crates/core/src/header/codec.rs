use super::{HeaderError, IdsSF, QosSmartSF, RbsSF, RegionStackSF, SmartPacketHeader};

const ACTIVE_STACK: u8 = 0b0001;
const ACTIVE_IDS: u8 = 0b0010;
const ACTIVE_QOS: u8 = 0b0100;
const ACTIVE_RBS: u8 = 0b1000;

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    bit: usize,
}

impl BitWriter {
    fn put(&mut self, value: u32, bits: usize) {
        for i in (0..bits).rev() {
            if self.bit.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if (value >> i) & 1 == 1 {
                let last = self.bytes.last_mut().expect("pushed above");
                *last |= 0x80 >> (self.bit % 8);
            }
            self.bit += 1;
        }
    }

    fn finish(self) -> Vec<u8> {
        debug_assert_eq!(self.bit % 8, 0, "fields are byte aligned");
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    fn take(&mut self, bits: usize) -> Result<u32, HeaderError> {
        if self.bit + bits > self.bytes.len() * 8 {
            return Err(HeaderError::Truncated {
                offset: self.bit / 8,
                needed: self.bit + bits - self.bytes.len() * 8,
            });
        }
        let mut v = 0u32;
        for _ in 0..bits {
            let byte = self.bytes[self.bit / 8];
            let b = (byte >> (7 - self.bit % 8)) & 1;
            v = (v << 1) | u32::from(b);
            self.bit += 1;
        }
        Ok(v)
    }

    fn filler(&mut self, bits: usize) -> Result<(), HeaderError> {
        let offset = self.bit / 8;
        if self.take(bits)? != 0 {
            return Err(HeaderError::ReservedBits { offset });
        }
        Ok(())
    }

    fn rest(&mut self) -> &'a [u8] {
        let start = self.bit / 8;
        self.bit = self.bytes.len() * 8;
        &self.bytes[start..]
    }

    fn remaining_bytes(&self) -> usize {
        self.bytes.len() - self.bit / 8
    }
}

fn flag(present: bool, bit: u8) -> u8 {
    if present {
        bit
    } else {
        0
    }
}

/// Encode a header. Validates widths and invariants first.
pub fn encode(header: &SmartPacketHeader) -> Result<Vec<u8>, HeaderError> {
    header.validate()?;
    let mut w = BitWriter::default();
    let active = ACTIVE_STACK
        | flag(header.ids.is_some(), ACTIVE_IDS)
        | flag(header.qos.is_some(), ACTIVE_QOS)
        | flag(header.rbs.is_some(), ACTIVE_RBS);
    w.put(u32::from(active), 4);
    w.put(0, 4);

    let stack = &header.region_stack;
    let present =
        flag(stack.ephemeral_fid.is_some(), 0b01) | flag(stack.intra_region_fid.is_some(), 0b10);
    w.put(u32::from(present), 4);
    w.put(u32::from(stack.ephemeral_fid.unwrap_or(0)), 4);
    if let Some(fid) = stack.intra_region_fid {
        w.put(u32::from(fid), 8);
    }
    w.put(stack.entries.len() as u32, 8);
    for &rid in &stack.entries {
        w.put(u32::from(rid), 16);
    }

    if let Some(ids) = &header.ids {
        let present = flag(ids.packet_pid.is_some(), 0b001)
            | flag(ids.flow_fid.is_some(), 0b010)
            | flag(ids.receiver_nid.is_some(), 0b100);
        w.put(u32::from(present), 4);
        w.put(0, 4);
        let mut twelves = 0;
        for v in [ids.packet_pid, ids.flow_fid].into_iter().flatten() {
            w.put(u32::from(v), 12);
            twelves += 1;
        }
        if twelves == 1 {
            w.put(0, 4);
        }
        w.put(u32::from(ids.sender_nid), 16);
        if let Some(r) = ids.receiver_nid {
            w.put(u32::from(r), 16);
        }
    }

    if let Some(q) = &header.qos {
        let fields = [
            q.single_hop_latency,
            q.path_latency,
            q.single_hop_loss,
            q.path_loss,
        ];
        let present = fields
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, f)| acc | flag(f.is_some(), 1 << i));
        w.put(u32::from(present), 4);
        w.put(u32::from(q.fission_rate.unwrap_or(0)), 4);
        let mut count = 0;
        for v in fields.into_iter().flatten() {
            w.put(u32::from(v), 4);
            count += 1;
        }
        if count % 2 == 1 {
            w.put(0, 4);
        }
    }

    if let Some(rbs) = &header.rbs {
        w.put(0, 8);
        w.put(rbs.traversed.len() as u32, 8);
        for &rid in &rbs.traversed {
            w.put(u32::from(rid), 16);
        }
    }

    let mut out = w.finish();
    if let Some(legacy) = &header.legacy_payload_header {
        out.extend_from_slice(legacy);
    }
    Ok(out)
}

/// Decode a header. Total on arbitrary input: every malformed byte string
/// maps to an error.
pub fn decode(bytes: &[u8]) -> Result<SmartPacketHeader, HeaderError> {
    let mut r = BitReader { bytes, bit: 0 };
    let active = r.take(4)? as u8;
    r.filler(4)?;
    if active & ACTIVE_STACK == 0 {
        return Err(HeaderError::UnknownActiveBits(active));
    }
    let legacy = active & ACTIVE_IDS == 0;
    if legacy && active & (ACTIVE_QOS | ACTIVE_RBS) != 0 {
        return Err(HeaderError::UnknownActiveBits(active));
    }

    let offset = r.bit / 8;
    let present = r.take(4)? as u8;
    if present & !0b11 != 0 {
        return Err(HeaderError::ReservedBits { offset });
    }
    let eph = r.take(4)? as u8;
    let ephemeral_fid = if present & 0b01 != 0 {
        Some(eph)
    } else if eph != 0 {
        return Err(HeaderError::ReservedBits { offset });
    } else {
        None
    };
    let intra_region_fid = if present & 0b10 != 0 {
        Some(r.take(8)? as u8)
    } else {
        None
    };
    let count = r.take(8)? as usize;
    if count == 0 {
        return Err(HeaderError::CountMismatch("region stack count is zero"));
    }
    if r.remaining_bytes() < count * 2 {
        return Err(HeaderError::CountMismatch(
            "region stack count exceeds input",
        ));
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        entries.push(r.take(16)? as u16);
    }
    let region_stack = RegionStackSF {
        ephemeral_fid,
        intra_region_fid,
        entries,
    };

    if legacy {
        let rest = r.rest().to_vec();
        return Ok(SmartPacketHeader {
            region_stack,
            ids: None,
            qos: None,
            rbs: None,
            legacy_payload_header: Some(rest),
        });
    }

    let offset = r.bit / 8;
    let present = r.take(4)? as u8;
    if present & !0b111 != 0 {
        return Err(HeaderError::ReservedBits { offset });
    }
    r.filler(4)?;
    let packet_pid = if present & 0b001 != 0 {
        Some(r.take(12)? as u16)
    } else {
        None
    };
    let flow_fid = if present & 0b010 != 0 {
        Some(r.take(12)? as u16)
    } else {
        None
    };
    if packet_pid.is_some() != flow_fid.is_some() {
        r.filler(4)?;
    }
    let sender_nid = r.take(16)? as u16;
    let receiver_nid = if present & 0b100 != 0 {
        Some(r.take(16)? as u16)
    } else {
        None
    };
    let ids = IdsSF {
        packet_pid,
        flow_fid,
        sender_nid,
        receiver_nid,
    };

    let qos = if active & ACTIVE_QOS != 0 {
        let present = r.take(4)? as u8;
        let fission = r.take(4)? as u8;
        let mut fields = [None; 4];
        let mut count = 0;
        for (i, slot) in fields.iter_mut().enumerate() {
            if present & (1 << i) != 0 {
                *slot = Some(r.take(4)? as u8);
                count += 1;
            }
        }
        if count % 2 == 1 {
            r.filler(4)?;
        }
        Some(QosSmartSF {
            single_hop_latency: fields[0],
            path_latency: fields[1],
            single_hop_loss: fields[2],
            path_loss: fields[3],
            fission_rate: (fission != 0).then_some(fission),
        })
    } else {
        None
    };

    let rbs = if active & ACTIVE_RBS != 0 {
        r.filler(8)?;
        let count = r.take(8)? as usize;
        if r.remaining_bytes() < count * 2 {
            return Err(HeaderError::CountMismatch("rbs count exceeds input"));
        }
        let mut traversed = Vec::with_capacity(count);
        for _ in 0..count {
            traversed.push(r.take(16)? as u16);
        }
        Some(RbsSF { traversed })
    } else {
        None
    };

    let trailing = r.remaining_bytes();
    if trailing != 0 {
        return Err(HeaderError::TrailingBytes(trailing));
    }
    Ok(SmartPacketHeader {
        region_stack,
        ids: Some(ids),
        qos,
        rbs,
        legacy_payload_header: None,
    })
}

/// Parse a hex dump. `#` starts a comment; whitespace and `:` separators are ignored.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, HeaderError> {
    let digits: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::chars)
        .filter(|c| !c.is_whitespace() && *c != ':')
        .collect();
    hex::decode(&digits).map_err(|e| HeaderError::Hex(e.to_string()))
}
