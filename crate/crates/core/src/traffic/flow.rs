//! TCP/UDP session tracking over an ordered packet stream.
//!
//! A flow starts at a device SYN (or at the first packet seen, for
//! sessions already running when the capture began), ends at FIN/RST or
//! stream end for TCP, and is delimited by a 60 s idle timeout for UDP.
//! The monitor applies the same three new-flow events, which keeps rate
//! accounting consistent between learning and enforcement.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use super::PacketRecord;
use crate::types::{L4Proto, TcpFlags};

/// Idle gap after which a UDP 5-tuple is considered a new session.
pub const UDP_IDLE_TIMEOUT_US: u64 = 60_000_000;

/// 5-tuple in canonical direction: the initiator (normally the device)
/// comes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub proto: L4Proto,
    pub src_port: u16,
    pub dst_port: u16,
}

impl FlowKey {
    pub fn reversed(&self) -> FlowKey {
        FlowKey {
            src_ip: self.dst_ip,
            dst_ip: self.src_ip,
            proto: self.proto,
            src_port: self.dst_port,
            dst_port: self.src_port,
        }
    }
}

/// One tracked session with initiator-to-remote byte/packet counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub first_ts: u64,
    pub last_ts: u64,
    pub out_bytes: u64,
    pub out_packets: u64,
}

struct ActiveFlow {
    record: usize,
    last_ts: u64,
    closing: bool,
}

fn flow_key(pkt: &PacketRecord) -> Option<FlowKey> {
    let proto = pkt.proto.l4()?;
    Some(FlowKey {
        src_ip: pkt.src_ip,
        dst_ip: pkt.dst_ip,
        proto,
        src_port: pkt.src_port?,
        dst_port: pkt.dst_port?,
    })
}

/// Groups an ordered packet stream into flow records, in order of first
/// appearance. Non-TCP/UDP packets are ignored.
pub fn track_flows<'a, I>(packets: I) -> Vec<FlowRecord>
where
    I: IntoIterator<Item = &'a PacketRecord>,
{
    let mut records: Vec<FlowRecord> = Vec::new();
    let mut active: BTreeMap<FlowKey, ActiveFlow> = BTreeMap::new();

    for pkt in packets {
        let Some(forward) = flow_key(pkt) else { continue };
        let reverse = forward.reversed();
        let closes = pkt.tcp_flags.contains(TcpFlags::FIN) || pkt.tcp_flags.contains(TcpFlags::RST);

        if let Some(flow) = active.get_mut(&forward) {
            // outbound packet of a known flow
            let needs_new = match forward.proto {
                L4Proto::Tcp => flow.closing && pkt.tcp_flags.contains(TcpFlags::SYN),
                L4Proto::Udp => pkt.ts_us.saturating_sub(flow.last_ts) > UDP_IDLE_TIMEOUT_US,
            };
            if !needs_new {
                flow.last_ts = pkt.ts_us;
                flow.closing |= closes;
                let record = &mut records[flow.record];
                record.last_ts = pkt.ts_us;
                record.out_bytes += pkt.payload_len as u64;
                record.out_packets += 1;
                continue;
            }
            active.remove(&forward);
        } else if let Some(flow) = active.get_mut(&reverse) {
            // reply packet of a known flow
            let expired = reverse.proto == L4Proto::Udp
                && pkt.ts_us.saturating_sub(flow.last_ts) > UDP_IDLE_TIMEOUT_US;
            if !expired {
                flow.last_ts = pkt.ts_us;
                flow.closing |= closes;
                records[flow.record].last_ts = pkt.ts_us;
                continue;
            }
            active.remove(&reverse);
        }

        // first packet of a new flow; its sender is the initiator
        records.push(FlowRecord {
            key: forward,
            first_ts: pkt.ts_us,
            last_ts: pkt.ts_us,
            out_bytes: pkt.payload_len as u64,
            out_packets: 1,
        });
        active.insert(
            forward,
            ActiveFlow {
                record: records.len() - 1,
                last_ts: pkt.ts_us,
                closing: closes,
            },
        );
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{MacAddr, Proto};
    use alloc::vec;
    use alloc::vec::Vec;

    const DEV_IP: [u8; 4] = [172, 16, 1, 2];
    const REMOTE: [u8; 4] = [62, 210, 92, 5];

    fn tcp_packet(ts_us: u64, out: bool, flags: u8, payload: u32) -> PacketRecord {
        let (src_ip, dst_ip, src_port, dst_port) = if out {
            (DEV_IP, REMOTE, 50001, 25050)
        } else {
            (REMOTE, DEV_IP, 25050, 50001)
        };
        PacketRecord {
            ts_us,
            src_mac: MacAddr([0; 6]),
            dst_mac: MacAddr([1; 6]),
            src_ip: src_ip.into(),
            dst_ip: dst_ip.into(),
            proto: Proto::Tcp,
            src_port: Some(src_port),
            dst_port: Some(dst_port),
            payload_len: payload,
            tcp_flags: TcpFlags(flags),
            dns: None,
        }
    }

    fn udp_packet(ts_us: u64, payload: u32) -> PacketRecord {
        PacketRecord {
            ts_us,
            src_mac: MacAddr([0; 6]),
            dst_mac: MacAddr([1; 6]),
            src_ip: DEV_IP.into(),
            dst_ip: REMOTE.into(),
            proto: Proto::Udp,
            src_port: Some(40000),
            dst_port: Some(7000),
            payload_len: payload,
            tcp_flags: TcpFlags::default(),
            dns: None,
        }
    }

    #[test]
    fn tcp_handshake_data_fin_is_one_flow() {
        // hand enumeration: outbound packets are SYN, 2 data, FIN -> 4
        // packets, 100 + 200 payload bytes
        let packets = vec![
            tcp_packet(0, true, TcpFlags::SYN.0, 0),
            tcp_packet(1_000, false, TcpFlags::SYN.0 | TcpFlags::ACK.0, 0),
            tcp_packet(2_000, true, TcpFlags::ACK.0, 100),
            tcp_packet(3_000, true, TcpFlags::ACK.0, 200),
            tcp_packet(4_000, false, TcpFlags::ACK.0, 50),
            tcp_packet(5_000, true, TcpFlags::FIN.0 | TcpFlags::ACK.0, 0),
        ];
        let flows = track_flows(&packets);
        assert_eq!(flows.len(), 1);
        let f = &flows[0];
        assert_eq!(f.out_packets, 4);
        assert_eq!(f.out_bytes, 300);
        assert_eq!(f.first_ts, 0);
        assert_eq!(f.last_ts, 5_000);
        assert_eq!(f.key.src_ip, Ipv4Addr::from(DEV_IP));
    }

    #[test]
    fn syn_after_fin_opens_second_flow() {
        let packets = vec![
            tcp_packet(0, true, TcpFlags::SYN.0, 0),
            tcp_packet(1_000, true, TcpFlags::FIN.0, 0),
            tcp_packet(2_000, false, TcpFlags::FIN.0 | TcpFlags::ACK.0, 0),
            tcp_packet(3_000, true, TcpFlags::ACK.0, 0), // final ack of old flow
            tcp_packet(4_000, true, TcpFlags::SYN.0, 0), // reopen
        ];
        let flows = track_flows(&packets);
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[0].out_packets, 3);
        assert_eq!(flows[1].first_ts, 4_000);
    }

    #[test]
    fn udp_idle_timeout_splits_flows() {
        // idle-timeout oracle: gaps > 60 s start a new flow
        let packets = vec![udp_packet(0, 10), udp_packet(120_000_000, 10)];
        let flows = track_flows(&packets);
        assert_eq!(flows.len(), 2);

        let packets = vec![udp_packet(0, 10), udp_packet(59_000_000, 10)];
        assert_eq!(track_flows(&packets).len(), 1);
    }

    #[test]
    fn empty_stream_is_empty() {
        let flows = track_flows(Vec::<PacketRecord>::new().iter());
        assert!(flows.is_empty());
    }

    #[test]
    fn mid_capture_flow_without_syn_is_accepted() {
        let packets = vec![tcp_packet(0, true, TcpFlags::ACK.0, 42)];
        let flows = track_flows(&packets);
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].out_bytes, 42);
    }

    #[test]
    fn out_bytes_count_initiator_direction_only() {
        let packets = vec![
            tcp_packet(0, true, TcpFlags::SYN.0, 0),
            tcp_packet(1, false, TcpFlags::ACK.0, 500),
            tcp_packet(2, true, TcpFlags::ACK.0, 70),
        ];
        let flows = track_flows(&packets);
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].out_bytes, 70);
        assert_eq!(flows[0].out_packets, 2);
    }
}
