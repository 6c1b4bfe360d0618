//! Capture analysis: normalized packet records, flow tracking, DNS
//! transaction pairing, and per-device traffic summaries.

mod dns;
mod flow;
mod pcap;
mod summary;

pub use dns::{extract_dns, DnsAnswer, DnsLog, DnsMessage, DnsTransaction};
pub use flow::{track_flows, FlowKey, FlowRecord, UDP_IDLE_TIMEOUT_US};
pub use pcap::{read_capture, CaptureReader, PcapError, SkipCounters};
pub use summary::{summarize_capture, CaptureSummary};

use core::net::Ipv4Addr;

use crate::types::{MacAddr, Proto, TcpFlags};

/// One parsed frame from a capture, normalized to the fields the policy
/// pipeline cares about. Ports are present exactly when the protocol is
/// TCP or UDP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    /// Microseconds since the epoch.
    pub ts_us: u64,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub proto: Proto,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    /// Transport payload bytes (IP and transport headers excluded).
    pub payload_len: u32,
    /// TCP flag byte; empty for non-TCP packets.
    pub tcp_flags: TcpFlags,
    /// Parsed DNS message when this is a UDP port 53 packet.
    pub dns: Option<DnsMessage>,
}

impl PacketRecord {
    /// True when this packet was sent by the given device.
    pub fn from_device(&self, mac: MacAddr) -> bool {
        self.src_mac == mac
    }

    /// True when this packet is addressed to the given device.
    pub fn to_device(&self, mac: MacAddr) -> bool {
        self.dst_mac == mac
    }
}
