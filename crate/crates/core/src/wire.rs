//! Byte-exact codec for setup requests, setup responses and data packets.
//!
//! All integers are big-endian.
//!
//! ```text
//! SetupReq   0x01 src(8) tsReq(8) n(1) n*[hop(1) flags(1) tag(16)]
//! SetupReqD  0x04 src(8) tsReq(8) bwDem(8) bwMin(8) n(1) n*[hop(1) flags(1) tag(16)]
//! SetupResp  0x02 src(8) tsReq(8) m(1) m*[hop(1) dir(1) nonce(12) enc(16) tag(16) bw(8) tsExp(8)]
//! DataPkt    0x03 src(8) flags(1) tsPkt(8) lenB(2) nF(1) nB(1) nF*[hop(1) rvf(3)] nB*[hop(1) bvf(3)] payload
//! ```
//!
//! Request flags: bit0 = forward (R), bit1 = backward (B).
//! Data flags: bit0 = D (backward direction), bit1 = the payload is a
//! setup frame riding the reservation (renewal).

use thiserror::Error;

use crate::crypto::{
    Demand, RequestTag, SealedGrant, ValidationField, BLOCK_LEN, NONCE_LEN, TAG_LEN,
    VALIDATION_FIELD_LEN,
};
use crate::types::{AsId, Bandwidth, Direction, Timestamp};

pub const TYPE_SETUP_REQ: u8 = 0x01;
pub const TYPE_SETUP_RESP: u8 = 0x02;
pub const TYPE_DATA: u8 = 0x03;
pub const TYPE_SETUP_REQ_DEMAND: u8 = 0x04;

/// Fixed part of a data packet header.
pub const DATA_HEADER_LEN: usize = 22;
pub const HOP_FIELD_LEN: usize = 1 + VALIDATION_FIELD_LEN;
pub const REQ_ENTRY_LEN: usize = 2 + BLOCK_LEN;
pub const RESP_ENTRY_LEN: usize = 2 + NONCE_LEN + BLOCK_LEN + TAG_LEN + 16;

const FLAG_R: u8 = 0b01;
const FLAG_B: u8 = 0b10;
const FLAG_D: u8 = 0b01;
const FLAG_SETUP: u8 = 0b10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("hop indices must be strictly increasing")]
    UnsortedHops,
    #[error("too many entries: {0}")]
    TooManyEntries(usize),
    #[error("packet length {0} exceeds the 16-bit length field")]
    PacketTooLong(usize),
    #[error("request entry for hop {0} sets neither R nor B")]
    EmptyFlags(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown message type {0:#04x}")]
    BadMagic(u8),
    #[error("entry lists are unsorted or inconsistent")]
    BadCounts,
    #[error("invalid field value")]
    BadField,
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RequestEntry {
    pub hop: u8,
    pub forward: bool,
    pub backward: bool,
    pub tag: RequestTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetupReq {
    pub src: AsId,
    pub ts_req: Timestamp,
    pub demand: Option<Demand>,
    pub entries: Vec<RequestEntry>,
}

impl SetupReq {
    pub fn entry_for(&self, hop: u8) -> Option<&RequestEntry> {
        self.entries
            .binary_search_by_key(&hop, |e| e.hop)
            .ok()
            .map(|i| &self.entries[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetupRespEntry {
    pub hop: u8,
    pub direction: Direction,
    pub sealed: SealedGrant,
    pub bw: Bandwidth,
    pub ts_exp: Timestamp,
}

impl SetupRespEntry {
    /// A reserved, unfilled slot. It never unseals.
    pub fn placeholder(hop: u8, direction: Direction) -> Self {
        SetupRespEntry {
            hop,
            direction,
            sealed: SealedGrant {
                nonce: [0; NONCE_LEN],
                ciphertext: [0; BLOCK_LEN],
                tag: [0; TAG_LEN],
            },
            bw: Bandwidth::ZERO,
            ts_exp: Timestamp::ZERO,
        }
    }

    pub fn is_placeholder(&self) -> bool {
        self.ts_exp == Timestamp::ZERO && self.sealed.tag == [0; TAG_LEN]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetupResp {
    pub src: AsId,
    pub ts_req: Timestamp,
    pub entries: Vec<SetupRespEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HopField {
    pub hop: u8,
    pub field: ValidationField,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataPkt {
    pub src: AsId,
    /// D flag: set for replies travelling back to the source.
    pub backward: bool,
    pub carries_setup: bool,
    pub ts_pkt: Timestamp,
    pub len_b: u16,
    pub rvfs: Vec<HopField>,
    pub bvfs: Vec<HopField>,
    pub payload: Vec<u8>,
}

impl DataPkt {
    pub fn header_len(&self) -> usize {
        data_header_len(self.rvfs.len(), self.bvfs.len())
    }

    /// Total encoded length, the value bound into every RVF.
    pub fn encoded_len(&self) -> usize {
        self.header_len() + self.payload.len()
    }

    pub fn rvf_for(&self, hop: u8) -> Option<ValidationField> {
        find_field(&self.rvfs, hop)
    }

    pub fn bvf_for(&self, hop: u8) -> Option<ValidationField> {
        find_field(&self.bvfs, hop)
    }
}

fn find_field(list: &[HopField], hop: u8) -> Option<ValidationField> {
    list.binary_search_by_key(&hop, |f| f.hop)
        .ok()
        .map(|i| list[i].field)
}

pub fn data_header_len(n_fwd: usize, n_bwd: usize) -> usize {
    DATA_HEADER_LEN + HOP_FIELD_LEN * (n_fwd + n_bwd)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Message {
    SetupReq(SetupReq),
    SetupResp(SetupResp),
    Data(DataPkt),
}

impl Message {
    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        match self {
            Message::SetupReq(m) => encode_setup_req(m),
            Message::SetupResp(m) => encode_setup_resp(m),
            Message::Data(m) => encode_data(m),
        }
    }
}

fn strictly_increasing<T, K: Ord>(items: &[T], key: impl Fn(&T) -> K) -> bool {
    items.windows(2).all(|w| key(&w[0]) < key(&w[1]))
}

fn count_byte(n: usize) -> Result<u8, EncodeError> {
    u8::try_from(n).map_err(|_| EncodeError::TooManyEntries(n))
}

pub fn encode_setup_req(m: &SetupReq) -> Result<Vec<u8>, EncodeError> {
    if !strictly_increasing(&m.entries, |e| e.hop) {
        return Err(EncodeError::UnsortedHops);
    }
    if let Some(e) = m.entries.iter().find(|e| !e.forward && !e.backward) {
        return Err(EncodeError::EmptyFlags(e.hop));
    }
    let n = count_byte(m.entries.len())?;
    let mut out = Vec::with_capacity(18 + 16 + m.entries.len() * REQ_ENTRY_LEN);
    match m.demand {
        Some(_) => out.push(TYPE_SETUP_REQ_DEMAND),
        None => out.push(TYPE_SETUP_REQ),
    }
    out.extend_from_slice(&m.src.0.to_be_bytes());
    out.extend_from_slice(&m.ts_req.0.to_be_bytes());
    if let Some(d) = m.demand {
        out.extend_from_slice(&d.requested.0.to_be_bytes());
        out.extend_from_slice(&d.minimum.0.to_be_bytes());
    }
    out.push(n);
    for e in &m.entries {
        out.push(e.hop);
        out.push((e.forward as u8 * FLAG_R) | (e.backward as u8 * FLAG_B));
        out.extend_from_slice(&e.tag.0);
    }
    Ok(out)
}

pub fn encode_setup_resp(m: &SetupResp) -> Result<Vec<u8>, EncodeError> {
    if !strictly_increasing(&m.entries, |e| (e.hop, e.direction)) {
        return Err(EncodeError::UnsortedHops);
    }
    let n = count_byte(m.entries.len())?;
    let mut out = Vec::with_capacity(18 + m.entries.len() * RESP_ENTRY_LEN);
    out.push(TYPE_SETUP_RESP);
    out.extend_from_slice(&m.src.0.to_be_bytes());
    out.extend_from_slice(&m.ts_req.0.to_be_bytes());
    out.push(n);
    for e in &m.entries {
        out.push(e.hop);
        out.push(e.direction.to_byte());
        out.extend_from_slice(&e.sealed.nonce);
        out.extend_from_slice(&e.sealed.ciphertext);
        out.extend_from_slice(&e.sealed.tag);
        out.extend_from_slice(&e.bw.0.to_be_bytes());
        out.extend_from_slice(&e.ts_exp.0.to_be_bytes());
    }
    Ok(out)
}

pub fn encode_data(m: &DataPkt) -> Result<Vec<u8>, EncodeError> {
    if !strictly_increasing(&m.rvfs, |f| f.hop) || !strictly_increasing(&m.bvfs, |f| f.hop) {
        return Err(EncodeError::UnsortedHops);
    }
    let n_f = count_byte(m.rvfs.len())?;
    let n_b = count_byte(m.bvfs.len())?;
    let total = m.encoded_len();
    if total > u16::MAX as usize {
        return Err(EncodeError::PacketTooLong(total));
    }
    let mut out = Vec::with_capacity(total);
    out.push(TYPE_DATA);
    out.extend_from_slice(&m.src.0.to_be_bytes());
    out.push((m.backward as u8 * FLAG_D) | (m.carries_setup as u8 * FLAG_SETUP));
    out.extend_from_slice(&m.ts_pkt.0.to_be_bytes());
    out.extend_from_slice(&m.len_b.to_be_bytes());
    out.push(n_f);
    out.push(n_b);
    for f in m.rvfs.iter().chain(&m.bvfs) {
        out.push(f.hop);
        out.extend_from_slice(&f.field.0);
    }
    out.extend_from_slice(&m.payload);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
}

/// Decodes one complete message. Setup messages must not carry trailing
/// bytes; for data packets everything after the field lists is payload.
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let (msg, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - used));
    }
    Ok(msg)
}

/// Decodes a message from the front of `bytes` and returns how many bytes it used.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Message, usize), DecodeError> {
    let mut r = Reader::new(bytes);
    let msg = match r.u8()? {
        t @ (TYPE_SETUP_REQ | TYPE_SETUP_REQ_DEMAND) => {
            let src = AsId(r.u64()?);
            let ts_req = Timestamp(r.u64()?);
            let demand = if t == TYPE_SETUP_REQ_DEMAND {
                Some(Demand {
                    requested: Bandwidth(r.u64()?),
                    minimum: Bandwidth(r.u64()?),
                })
            } else {
                None
            };
            let n = r.u8()? as usize;
            let mut entries = Vec::with_capacity(n);
            for _ in 0..n {
                let hop = r.u8()?;
                let flags = r.u8()?;
                if flags & !(FLAG_R | FLAG_B) != 0 || flags == 0 {
                    return Err(DecodeError::BadField);
                }
                entries.push(RequestEntry {
                    hop,
                    forward: flags & FLAG_R != 0,
                    backward: flags & FLAG_B != 0,
                    tag: RequestTag(r.array()?),
                });
            }
            if !strictly_increasing(&entries, |e| e.hop) {
                return Err(DecodeError::BadCounts);
            }
            Message::SetupReq(SetupReq {
                src,
                ts_req,
                demand,
                entries,
            })
        }
        TYPE_SETUP_RESP => {
            let src = AsId(r.u64()?);
            let ts_req = Timestamp(r.u64()?);
            let n = r.u8()? as usize;
            let mut entries = Vec::with_capacity(n);
            for _ in 0..n {
                let hop = r.u8()?;
                let direction = Direction::from_byte(r.u8()?).ok_or(DecodeError::BadField)?;
                let sealed = SealedGrant {
                    nonce: r.array()?,
                    ciphertext: r.array()?,
                    tag: r.array()?,
                };
                entries.push(SetupRespEntry {
                    hop,
                    direction,
                    sealed,
                    bw: Bandwidth(r.u64()?),
                    ts_exp: Timestamp(r.u64()?),
                });
            }
            if !strictly_increasing(&entries, |e| (e.hop, e.direction)) {
                return Err(DecodeError::BadCounts);
            }
            Message::SetupResp(SetupResp {
                src,
                ts_req,
                entries,
            })
        }
        TYPE_DATA => {
            let src = AsId(r.u64()?);
            let flags = r.u8()?;
            if flags & !(FLAG_D | FLAG_SETUP) != 0 {
                return Err(DecodeError::BadField);
            }
            let ts_pkt = Timestamp(r.u64()?);
            let len_b = r.u16()?;
            let n_f = r.u8()? as usize;
            let n_b = r.u8()? as usize;
            let mut read_fields = |n: usize| -> Result<Vec<HopField>, DecodeError> {
                (0..n)
                    .map(|_| {
                        Ok(HopField {
                            hop: r.u8()?,
                            field: ValidationField(r.array()?),
                        })
                    })
                    .collect()
            };
            let rvfs = read_fields(n_f)?;
            let bvfs = read_fields(n_b)?;
            if !strictly_increasing(&rvfs, |f| f.hop) || !strictly_increasing(&bvfs, |f| f.hop) {
                return Err(DecodeError::BadCounts);
            }
            Message::Data(DataPkt {
                src,
                backward: flags & FLAG_D != 0,
                carries_setup: flags & FLAG_SETUP != 0,
                ts_pkt,
                len_b,
                rvfs,
                bvfs,
                payload: r.rest().to_vec(),
            })
        }
        other => return Err(DecodeError::BadMagic(other)),
    };
    Ok((msg, r.pos))
}

/// A setup request in transit: the request followed by the response slots
/// that on-path routers fill in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetupFrame {
    pub req: SetupReq,
    pub resp: SetupResp,
}

impl SetupFrame {
    /// Builds the frame with one placeholder slot per requested direction and hop.
    pub fn new(req: SetupReq) -> Self {
        let mut entries = Vec::new();
        for e in &req.entries {
            if e.forward {
                entries.push(SetupRespEntry::placeholder(e.hop, Direction::Forward));
            }
            if e.backward {
                entries.push(SetupRespEntry::placeholder(e.hop, Direction::Backward));
            }
        }
        let resp = SetupResp {
            src: req.src,
            ts_req: req.ts_req,
            entries,
        };
        SetupFrame { req, resp }
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        let mut out = encode_setup_req(&self.req)?;
        out.extend(encode_setup_resp(&self.resp)?);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let (req, used) = match decode_prefix(bytes)? {
            (Message::SetupReq(req), used) => (req, used),
            (Message::SetupResp(_) | Message::Data(_), _) => return Err(DecodeError::BadField),
        };
        match decode(&bytes[used..])? {
            Message::SetupResp(resp) => Ok(SetupFrame { req, resp }),
            _ => Err(DecodeError::BadField),
        }
    }

    /// Writes `entry` into its reserved slot. Returns false when no slot
    /// matches, leaving the frame unchanged.
    pub fn fill(&mut self, entry: SetupRespEntry) -> bool {
        match self
            .resp
            .entries
            .binary_search_by_key(&(entry.hop, entry.direction), |e| (e.hop, e.direction))
        {
            Ok(i) => {
                self.resp.entries[i] = entry;
                true
            }
            Err(_) => false,
        }
    }
}
