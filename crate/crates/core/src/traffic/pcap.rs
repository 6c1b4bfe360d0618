//! Classic pcap reader (magic 0xa1b2c3d4 in either byte order, version
//! 2.4, Ethernet link type) plus Ethernet/IPv4/TCP/UDP frame parsing.
//!
//! Frames that are not IPv4, do not involve the filtered device, or are
//! malformed/truncated are skipped and counted rather than surfaced as
//! errors; a capture with junk in it is normal.

use alloc::vec::Vec;
use core::net::Ipv4Addr;

use super::dns::DnsMessage;
use super::PacketRecord;
use crate::types::{MacAddr, Proto, TcpFlags};

const PCAP_MAGIC: u32 = 0xa1b2_c3d4;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const LINKTYPE_ETHERNET: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PcapError {
    #[error("capture shorter than a pcap global header")]
    TooShort,
    #[error("bad pcap magic {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported pcap version {0}.{1} (expected 2.4)")]
    UnsupportedVersion(u16, u16),
    #[error("unsupported link type {0} (expected Ethernet)")]
    UnsupportedLinkType(u32),
}

/// Why frames were dropped while reading a capture.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SkipCounters {
    /// Frames that are not IPv4 (ARP, IPv6, VLAN-tagged, ...).
    pub non_ip: u64,
    /// Frames filtered out because neither MAC matched the device.
    pub other_device: u64,
    /// Frames too short or inconsistent to parse.
    pub malformed: u64,
    /// Non-first IPv4 fragments (no transport header to read).
    pub fragments: u64,
    /// UDP port 53 payloads that did not parse as DNS. The packet is
    /// still yielded, just without a DNS message.
    pub dns_unparsed: u64,
}

impl SkipCounters {
    /// Total frames dropped from the stream.
    pub fn total(&self) -> u64 {
        self.non_ip + self.other_device + self.malformed + self.fragments
    }
}

/// Streaming reader over an in-memory capture.
pub struct CaptureReader<'a> {
    data: &'a [u8],
    offset: usize,
    swapped: bool,
    filter: Option<MacAddr>,
    skipped: SkipCounters,
}

impl<'a> CaptureReader<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self, PcapError> {
        if data.len() < GLOBAL_HEADER_LEN {
            return Err(PcapError::TooShort);
        }
        let magic = u32::from_le_bytes([data[0], data[1], data[2], data[3]]);
        let swapped = match magic {
            PCAP_MAGIC => false,
            m if m.swap_bytes() == PCAP_MAGIC => true,
            other => return Err(PcapError::BadMagic(other)),
        };
        let read_u16 = |at: usize| {
            let raw = u16::from_le_bytes([data[at], data[at + 1]]);
            if swapped {
                raw.swap_bytes()
            } else {
                raw
            }
        };
        let read_u32 = |at: usize| {
            let raw = u32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]]);
            if swapped {
                raw.swap_bytes()
            } else {
                raw
            }
        };
        let (major, minor) = (read_u16(4), read_u16(6));
        if (major, minor) != (2, 4) {
            return Err(PcapError::UnsupportedVersion(major, minor));
        }
        let linktype = read_u32(20);
        if linktype != LINKTYPE_ETHERNET {
            return Err(PcapError::UnsupportedLinkType(linktype));
        }
        Ok(CaptureReader {
            data,
            offset: GLOBAL_HEADER_LEN,
            swapped,
            filter: None,
            skipped: SkipCounters::default(),
        })
    }

    /// Keep only frames sent by or addressed to this device.
    pub fn with_device_filter(mut self, mac: MacAddr) -> Self {
        self.filter = Some(mac);
        self
    }

    pub fn skipped(&self) -> SkipCounters {
        self.skipped
    }

    fn u32_at(&self, at: usize) -> u32 {
        let d = self.data;
        let raw = u32::from_le_bytes([d[at], d[at + 1], d[at + 2], d[at + 3]]);
        if self.swapped {
            raw.swap_bytes()
        } else {
            raw
        }
    }

    fn next_frame(&mut self) -> Option<(u64, &'a [u8])> {
        if self.offset >= self.data.len() {
            return None;
        }
        if self.data.len() - self.offset < RECORD_HEADER_LEN {
            self.skipped.malformed += 1;
            self.offset = self.data.len();
            return None;
        }
        let ts_sec = self.u32_at(self.offset) as u64;
        let ts_usec = self.u32_at(self.offset + 4) as u64;
        let incl_len = self.u32_at(self.offset + 8) as usize;
        let body_start = self.offset + RECORD_HEADER_LEN;
        if self.data.len() - body_start < incl_len {
            self.skipped.malformed += 1;
            self.offset = self.data.len();
            return None;
        }
        self.offset = body_start + incl_len;
        Some((
            ts_sec * 1_000_000 + ts_usec,
            &self.data[body_start..body_start + incl_len],
        ))
    }

    fn parse_frame(&mut self, ts_us: u64, frame: &[u8]) -> Option<PacketRecord> {
        if frame.len() < 14 {
            self.skipped.malformed += 1;
            return None;
        }
        let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
        if ethertype != 0x0800 {
            self.skipped.non_ip += 1;
            return None;
        }
        let dst_mac = MacAddr(frame[0..6].try_into().unwrap());
        let src_mac = MacAddr(frame[6..12].try_into().unwrap());
        if let Some(mac) = self.filter {
            if src_mac != mac && dst_mac != mac {
                self.skipped.other_device += 1;
                return None;
            }
        }

        let ip = &frame[14..];
        if ip.len() < 20 || ip[0] >> 4 != 4 {
            self.skipped.malformed += 1;
            return None;
        }
        let ihl = ((ip[0] & 0x0f) as usize) * 4;
        let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
        if ihl < 20 || ip.len() < ihl || total_len < ihl {
            self.skipped.malformed += 1;
            return None;
        }
        let frag_offset = u16::from_be_bytes([ip[6], ip[7]]) & 0x1fff;
        if frag_offset != 0 {
            self.skipped.fragments += 1;
            return None;
        }
        let proto_num = ip[9];
        let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
        let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
        let ip_payload_len = total_len - ihl;
        let l4 = &ip[ihl..];

        let mut record = PacketRecord {
            ts_us,
            src_mac,
            dst_mac,
            src_ip,
            dst_ip,
            proto: Proto::Other(proto_num),
            src_port: None,
            dst_port: None,
            payload_len: ip_payload_len as u32,
            tcp_flags: TcpFlags::default(),
            dns: None,
        };

        match proto_num {
            6 => {
                if l4.len() < 20 {
                    self.skipped.malformed += 1;
                    return None;
                }
                let data_offset = ((l4[12] >> 4) as usize) * 4;
                if data_offset < 20 || data_offset > ip_payload_len {
                    self.skipped.malformed += 1;
                    return None;
                }
                record.proto = Proto::Tcp;
                record.src_port = Some(u16::from_be_bytes([l4[0], l4[1]]));
                record.dst_port = Some(u16::from_be_bytes([l4[2], l4[3]]));
                record.tcp_flags = TcpFlags(l4[13] & 0x3f);
                record.payload_len = (ip_payload_len - data_offset) as u32;
            }
            17 => {
                if l4.len() < 8 {
                    self.skipped.malformed += 1;
                    return None;
                }
                let udp_len = u16::from_be_bytes([l4[4], l4[5]]) as usize;
                if udp_len < 8 {
                    self.skipped.malformed += 1;
                    return None;
                }
                let src_port = u16::from_be_bytes([l4[0], l4[1]]);
                let dst_port = u16::from_be_bytes([l4[2], l4[3]]);
                record.proto = Proto::Udp;
                record.src_port = Some(src_port);
                record.dst_port = Some(dst_port);
                record.payload_len = (udp_len - 8) as u32;
                if src_port == 53 || dst_port == 53 {
                    let available = l4.len().min(udp_len);
                    match DnsMessage::parse(&l4[8..available]) {
                        Ok(msg) => record.dns = Some(msg),
                        Err(_) => self.skipped.dns_unparsed += 1,
                    }
                }
            }
            _ => {}
        }
        Some(record)
    }
}

impl Iterator for CaptureReader<'_> {
    type Item = PacketRecord;

    fn next(&mut self) -> Option<Self::Item> {
        while let Some((ts_us, frame)) = self.next_frame() {
            if let Some(record) = self.parse_frame(ts_us, frame) {
                return Some(record);
            }
        }
        None
    }
}

/// Reads a whole capture into memory-ordered records, optionally
/// keeping only one device's frames.
pub fn read_capture(
    data: &[u8],
    device: Option<MacAddr>,
) -> Result<(Vec<PacketRecord>, SkipCounters), PcapError> {
    let mut reader = CaptureReader::new(data)?;
    if let Some(mac) = device {
        reader = reader.with_device_filter(mac);
    }
    let records: Vec<PacketRecord> = reader.by_ref().collect();
    Ok((records, reader.skipped()))
}
