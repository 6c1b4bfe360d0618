//! Brute-force oracles, written by direct enumeration so they stay
//! independent of the implementations they check.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use leash_core::policy::{Dest, DevicePolicy};
use leash_core::traffic::PacketRecord;
use leash_core::types::{L4Proto, Proto, RecordType};

use crate::frames::*;
use crate::{Frame, Host};

/// Counts events in the trailing window `(now - period, now]` the slow
/// way. A new event is admissible iff the count of prior admitted
/// events still inside the window is below the limit.
pub fn window_count(admitted: &[u64], now_us: u64, period_us: u64) -> usize {
    admitted
        .iter()
        .filter(|&&e| e <= now_us && now_us - e < period_us)
        .count()
}

/// Replays an event stream through a brute-force sliding-window
/// limiter, returning the admit/refuse decision per event.
pub fn sliding_window_decisions(events: &[u64], limit: u32, period_us: u64) -> Vec<bool> {
    let mut admitted: Vec<u64> = Vec::new();
    let mut out = Vec::with_capacity(events.len());
    for &ts in events {
        let ok = window_count(&admitted, ts, period_us) < limit as usize;
        if ok {
            admitted.push(ts);
        }
        out.push(ok);
    }
    out
}

/// Abstract traffic event for footprint tests: what the device did,
/// independent of the packet encoding.
#[derive(Debug, Clone)]
pub enum Intent {
    Lookup {
        t_us: u64,
        qname: String,
        resolver: Ipv4Addr,
        answers: Vec<Ipv4Addr>,
        answered: bool,
    },
    Connect {
        t_us: u64,
        dst: Ipv4Addr,
        proto: L4Proto,
        port: u16,
    },
}

impl Intent {
    pub fn t_us(&self) -> u64 {
        match self {
            Intent::Lookup { t_us, .. } | Intent::Connect { t_us, .. } => *t_us,
        }
    }
}

/// Renders intents as frames: one query (plus response, when answered)
/// per lookup, one SYN or UDP datagram per connect. Source ports and
/// transaction ids are allocated per intent so pairing is unambiguous.
pub fn intent_frames(device: &Host, gw_mac: leash_core::types::MacAddr, intents: &[Intent]) -> Vec<Frame> {
    let mut frames = Vec::new();
    for (i, intent) in intents.iter().enumerate() {
        let sport = 20_000 + i as u16;
        match intent {
            Intent::Lookup {
                t_us,
                qname,
                resolver,
                answers,
                answered,
            } => {
                let txid = 1_000 + i as u16;
                frames.push(Frame::legit(
                    *t_us,
                    dns_query_out(device, gw_mac, *resolver, sport, txid, qname),
                ));
                if *answered {
                    let records: Vec<(Ipv4Addr, u32)> = answers.iter().map(|a| (*a, 600)).collect();
                    frames.push(Frame::legit(
                        t_us + 1_000,
                        dns_response_in(device, gw_mac, *resolver, sport, txid, qname, &records),
                    ));
                }
            }
            Intent::Connect { t_us, dst, proto, port } => {
                let frame = match proto {
                    L4Proto::Tcp => tcp_out(
                        device,
                        gw_mac,
                        *dst,
                        sport,
                        *port,
                        leash_core::types::TcpFlags::SYN,
                        0,
                    ),
                    L4Proto::Udp => udp_out(device, gw_mac, *dst, sport, *port, &[0u8; 16]),
                };
                frames.push(Frame::legit(*t_us, frame));
            }
        }
    }
    crate::merge_frames(frames)
}

/// Set-arithmetic footprint oracle over intents:
/// endpoints = |{(dst, proto, port)} ∪ {(resolver, UDP, 53)}|,
/// domains = |{qname}|,
/// hardcoded = |{dst : first contact precedes every answer for dst}|.
pub fn footprint_oracle(intents: &[Intent]) -> (usize, usize, usize) {
    let mut endpoints: BTreeSet<(Ipv4Addr, u8, u16)> = BTreeSet::new();
    let mut domains: BTreeSet<&str> = BTreeSet::new();
    for intent in intents {
        match intent {
            Intent::Lookup { qname, resolver, .. } => {
                domains.insert(qname.as_str());
                endpoints.insert((*resolver, 17, 53));
            }
            Intent::Connect { dst, proto, port, .. } => {
                let proto_num = match proto {
                    L4Proto::Tcp => 6,
                    L4Proto::Udp => 17,
                };
                endpoints.insert((*dst, proto_num, *port));
            }
        }
    }

    let mut hardcoded: BTreeSet<Ipv4Addr> = BTreeSet::new();
    for intent in intents {
        let Intent::Connect { t_us, dst, .. } = intent else {
            continue;
        };
        let first_contact = intents
            .iter()
            .filter_map(|i| match i {
                Intent::Connect { t_us, dst: d, .. } if d == dst => Some(*t_us),
                _ => None,
            })
            .min()
            .unwrap_or(*t_us);
        let resolved_before = intents.iter().any(|i| match i {
            Intent::Lookup {
                t_us: lt,
                answers,
                answered: true,
                ..
            } => lt + 1_000 <= first_contact && answers.contains(dst),
            _ => false,
        });
        if !resolved_before {
            hardcoded.insert(*dst);
        }
    }

    (endpoints.len(), domains.len(), hardcoded.len())
}

/// Reconstructs by enumeration which (name, address) bindings are live
/// at time `now_us`: every response in the trace strictly before a
/// boundary packet whose interpreted answers all sit inside a
/// reply-rule range contributes its addresses until their TTL (floored
/// at 60 s, capped at 24 h) runs out.
pub fn live_bindings_at<'t>(
    policy: &DevicePolicy,
    trace: &'t [PacketRecord],
    boundary: &PacketRecord,
    now_us: u64,
) -> BTreeSet<(&'t str, Ipv4Addr)> {
    let mut live: BTreeSet<(&str, Ipv4Addr)> = BTreeSet::new();
    for earlier in trace
        .iter()
        .filter(|p| p.ts_us <= now_us && !std::ptr::eq(*p, boundary))
    {
        let Some(dns) = &earlier.dns else { continue };
        if !dns.is_response || earlier.proto != Proto::Udp || earlier.src_port != Some(53) {
            continue;
        }
        let ranges: Vec<_> = policy
            .allowed_dns_replies
            .iter()
            .filter(|r| r.qname == dns.qname && r.qtype == dns.qtype)
            .collect();
        if ranges.is_empty() {
            continue;
        }
        let all_in_range = dns
            .answers
            .iter()
            .filter_map(|a| a.addr)
            .all(|addr| ranges.iter().any(|r| r.answers.contains(addr)));
        if !all_in_range {
            continue;
        }
        for answer in &dns.answers {
            let Some(addr) = answer.addr else { continue };
            if answer.rtype != RecordType::A {
                continue;
            }
            let ttl = answer.ttl_s.clamp(60, 86_400) as u64 * 1_000_000;
            if now_us < earlier.ts_us + ttl {
                live.insert((dns.qname.as_str(), addr));
            }
        }
    }
    live
}

/// Independent re-matching of one packet against every policy entry,
/// used to confirm default-deny verdicts.
pub fn any_entry_matches(policy: &DevicePolicy, trace: &[PacketRecord], pkt: &PacketRecord) -> bool {
    // relevant only for outbound traffic
    if pkt.src_mac != policy.mac_addr {
        return false;
    }

    if let (Some(dns), Some(53)) = (&pkt.dns, pkt.dst_port) {
        if !dns.is_response {
            return policy
                .allowed_dns_queries
                .iter()
                .any(|q| q.qtype == dns.qtype && q.qname == dns.qname && q.resolver == pkt.dst_ip);
        }
    }

    let (Some(dst_port), Some(l4)) = (pkt.dst_port, pkt.proto.l4()) else {
        return false;
    };

    let live_bindings = live_bindings_at(policy, trace, pkt, pkt.ts_us);

    policy.allowed_connections.iter().any(|rule| {
        if rule.proto != l4 || rule.dstport != dst_port {
            return false;
        }
        if let Some(window) = rule.schedule {
            if !window.contains(pkt.ts_us) {
                return false;
            }
        }
        if let Some(max) = rule.max_packet_size {
            if pkt.payload_len > max {
                return false;
            }
        }
        match &rule.dest {
            Dest::Net(cidr) => cidr.contains(pkt.dst_ip),
            Dest::Host(name) => live_bindings.contains(&(name.as_str(), pkt.dst_ip)),
        }
    })
}
