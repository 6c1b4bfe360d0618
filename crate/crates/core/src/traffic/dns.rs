//! DNS wire parsing (header, first question, A answers) and pairing of
//! queries with their responses into transactions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use super::PacketRecord;
use crate::types::{DnsName, Proto, RecordType};

/// One resource record from a response's answer section. Only A records
/// carry an interpreted address; everything else is opaque.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsAnswer {
    pub name: DnsName,
    pub rtype: RecordType,
    pub ttl_s: u32,
    pub addr: Option<Ipv4Addr>,
}

/// Parsed DNS message: transaction id, first question, and (for
/// responses) the answer section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsMessage {
    pub is_response: bool,
    pub txid: u16,
    pub qtype: RecordType,
    pub qname: DnsName,
    pub answers: Vec<DnsAnswer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DnsParseError {
    #[error("message truncated")]
    Truncated,
    #[error("unparseable name")]
    BadName,
    #[error("no question section")]
    NoQuestion,
}

fn read_u16(data: &[u8], at: usize) -> Result<u16, DnsParseError> {
    if at + 2 > data.len() {
        return Err(DnsParseError::Truncated);
    }
    Ok(u16::from_be_bytes([data[at], data[at + 1]]))
}

fn read_u32(data: &[u8], at: usize) -> Result<u32, DnsParseError> {
    if at + 4 > data.len() {
        return Err(DnsParseError::Truncated);
    }
    Ok(u32::from_be_bytes([
        data[at],
        data[at + 1],
        data[at + 2],
        data[at + 3],
    ]))
}

/// Reads a (possibly compressed) name. Returns the name and the offset
/// just past it in the original position.
fn read_name(data: &[u8], start: usize) -> Result<(DnsName, usize), DnsParseError> {
    let mut labels: Vec<&str> = Vec::new();
    let mut offset = start;
    let mut after_pointer: Option<usize> = None;
    let mut jumps = 0u32;
    loop {
        let len = *data.get(offset).ok_or(DnsParseError::Truncated)? as usize;
        if len & 0xc0 == 0xc0 {
            let target = ((len & 0x3f) << 8) | *data.get(offset + 1).ok_or(DnsParseError::Truncated)? as usize;
            if after_pointer.is_none() {
                after_pointer = Some(offset + 2);
            }
            // pointers must go backwards; also guard against loops
            jumps += 1;
            if target >= offset || jumps > 32 {
                return Err(DnsParseError::BadName);
            }
            offset = target;
            continue;
        }
        if len == 0 {
            offset += 1;
            break;
        }
        if len > 63 || offset + 1 + len > data.len() {
            return Err(DnsParseError::BadName);
        }
        let label =
            core::str::from_utf8(&data[offset + 1..offset + 1 + len]).map_err(|_| DnsParseError::BadName)?;
        labels.push(label);
        offset += 1 + len;
    }
    if labels.is_empty() {
        return Err(DnsParseError::BadName);
    }
    let dotted: String = labels.join(".");
    let name: DnsName = dotted.parse().map_err(|_| DnsParseError::BadName)?;
    Ok((name, after_pointer.unwrap_or(offset)))
}

impl DnsMessage {
    /// Parses a DNS message from a UDP payload. Messages without a
    /// question section are rejected since they cannot be matched
    /// against a policy.
    pub fn parse(data: &[u8]) -> Result<DnsMessage, DnsParseError> {
        if data.len() < 12 {
            return Err(DnsParseError::Truncated);
        }
        let txid = read_u16(data, 0)?;
        let flags = read_u16(data, 2)?;
        let is_response = flags & 0x8000 != 0;
        let qdcount = read_u16(data, 4)?;
        let ancount = read_u16(data, 6)?;
        if qdcount == 0 {
            return Err(DnsParseError::NoQuestion);
        }

        let (qname, mut offset) = read_name(data, 12)?;
        let qtype = RecordType::from_code(read_u16(data, offset)?);
        offset += 4; // qtype + qclass

        // advance past any additional questions
        for _ in 1..qdcount {
            let (_, next) = read_name(data, offset)?;
            offset = next + 4;
        }

        let mut answers = Vec::new();
        if is_response {
            for _ in 0..ancount {
                let (name, next) = read_name(data, offset)?;
                let rtype = RecordType::from_code(read_u16(data, next)?);
                let class = read_u16(data, next + 2)?;
                let ttl_s = read_u32(data, next + 4)?;
                let rdlength = read_u16(data, next + 8)? as usize;
                let rdata_start = next + 10;
                if rdata_start + rdlength > data.len() {
                    return Err(DnsParseError::Truncated);
                }
                let addr = if rtype == RecordType::A && class == 1 && rdlength == 4 {
                    Some(Ipv4Addr::new(
                        data[rdata_start],
                        data[rdata_start + 1],
                        data[rdata_start + 2],
                        data[rdata_start + 3],
                    ))
                } else {
                    None
                };
                answers.push(DnsAnswer { name, rtype, ttl_s, addr });
                offset = rdata_start + rdlength;
            }
        }

        Ok(DnsMessage {
            is_response,
            txid,
            qtype,
            qname,
            answers,
        })
    }

    /// Addresses carried by A answers.
    pub fn a_addrs(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.answers.iter().filter_map(|a| a.addr)
    }
}

/// A query paired with its response (if one arrived) and the resolver
/// that served it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsTransaction {
    pub query: DnsMessage,
    pub response: Option<DnsMessage>,
    pub resolver: Ipv4Addr,
    pub query_ts: u64,
    pub response_ts: Option<u64>,
}

/// Result of pairing an ordered packet stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DnsLog {
    pub transactions: Vec<DnsTransaction>,
    /// Responses with no outstanding matching query; dropped.
    pub orphan_responses: u64,
}

/// Pairs DNS queries with responses by (transaction id, qtype, qname,
/// resolver), first-in first-out. Unanswered queries keep an absent
/// response; orphan responses are counted and dropped.
pub fn extract_dns<'a, I>(packets: I) -> DnsLog
where
    I: IntoIterator<Item = &'a PacketRecord>,
{
    let mut log = DnsLog::default();
    // key -> indexes of transactions still awaiting a response
    let mut open: BTreeMap<(u16, u16, DnsName, Ipv4Addr), Vec<usize>> = BTreeMap::new();

    for pkt in packets {
        if pkt.proto != Proto::Udp {
            continue;
        }
        let Some(msg) = &pkt.dns else { continue };
        if !msg.is_response && pkt.dst_port == Some(53) {
            let key = (msg.txid, msg.qtype.code(), msg.qname.clone(), pkt.dst_ip);
            log.transactions.push(DnsTransaction {
                query: msg.clone(),
                response: None,
                resolver: pkt.dst_ip,
                query_ts: pkt.ts_us,
                response_ts: None,
            });
            open.entry(key).or_default().push(log.transactions.len() - 1);
        } else if msg.is_response && pkt.src_port == Some(53) {
            let key = (msg.txid, msg.qtype.code(), msg.qname.clone(), pkt.src_ip);
            match open.get_mut(&key).and_then(|v| {
                if v.is_empty() {
                    None
                } else {
                    Some(v.remove(0))
                }
            }) {
                Some(idx) => {
                    let txn = &mut log.transactions[idx];
                    txn.response = Some(msg.clone());
                    txn.response_ts = Some(pkt.ts_us);
                }
                None => log.orphan_responses += 1,
            }
        }
    }
    log
}
