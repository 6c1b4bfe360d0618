//! Reference executor for compiled rules: replays a packet stream
//! against the lowered rule list the way the firewall and DNS forwarder
//! together would dispose of it.
//!
//! Used to check that compilation preserves the monitor's semantics.
//! Rate limiting runs in either of two modes: an exact sliding window
//! (matching the monitor) or the netfilter-style token bucket, whose
//! burst behavior is a known, documented divergence.
//!
//! A sinkholed lookup is modeled as a deny: the query packet itself may
//! traverse the firewall, but the name resolves to the sinkhole, so the
//! lookup is functionally refused.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{Action, RuleIr};
use crate::monitor::RateWindow;
use crate::traffic::{FlowKey, PacketRecord, UDP_IDLE_TIMEOUT_US};
use crate::types::{L4Proto, MacAddr, TcpFlags};

/// How Accept-rule limits are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    /// Exact trailing-window count, identical to the monitor.
    SlidingWindow,
    /// netfilter `-m limit` token bucket with the default burst of 5.
    TokenBucket,
}

/// Per-packet outcome of running the compiled rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IrDecision {
    pub packet_index: usize,
    pub allowed: bool,
}

const NETFILTER_DEFAULT_BURST: f64 = 5.0;

enum Limiter {
    Sliding(RateWindow),
    Bucket {
        interval_us: f64,
        tokens: f64,
        last_us: u64,
    },
}

impl Limiter {
    fn would_allow(&mut self, now_us: u64) -> bool {
        match self {
            Limiter::Sliding(window) => window.would_allow(now_us),
            Limiter::Bucket {
                interval_us,
                tokens,
                last_us,
            } => {
                let elapsed = now_us.saturating_sub(*last_us) as f64;
                *tokens = (*tokens + elapsed / *interval_us).min(NETFILTER_DEFAULT_BURST);
                *last_us = now_us;
                *tokens >= 1.0
            }
        }
    }

    fn commit(&mut self, now_us: u64) {
        match self {
            Limiter::Sliding(window) => window.commit(now_us),
            Limiter::Bucket { tokens, .. } => *tokens -= 1.0,
        }
    }
}

struct FlowEntry {
    last_ts: u64,
    closing: bool,
}

struct Interpreter<'r> {
    rules: &'r [RuleIr],
    mode: RateMode,
    limiters: BTreeMap<usize, Limiter>,
    flows: BTreeMap<FlowKey, FlowEntry>,
}

impl<'r> Interpreter<'r> {
    fn new(rules: &'r [RuleIr], mode: RateMode) -> Self {
        Interpreter {
            rules,
            mode,
            limiters: BTreeMap::new(),
            flows: BTreeMap::new(),
        }
    }

    fn flow_key(pkt: &PacketRecord) -> Option<FlowKey> {
        Some(FlowKey {
            src_ip: pkt.src_ip,
            dst_ip: pkt.dst_ip,
            proto: pkt.proto.l4()?,
            src_port: pkt.src_port?,
            dst_port: pkt.dst_port?,
        })
    }

    fn rule_matches(rule: &RuleIr, key: &FlowKey, pkt: &PacketRecord) -> bool {
        let m = &rule.matches;
        if let Some(src) = m.src_ip {
            if pkt.src_ip != src {
                return false;
            }
        }
        if let Some(dst) = m.dst {
            if !dst.contains(key.dst_ip) {
                return false;
            }
        }
        if let Some(proto) = m.proto {
            if key.proto != proto {
                return false;
            }
        }
        if let Some(port) = m.dst_port {
            if key.dst_port != port {
                return false;
            }
        }
        true
    }

    fn track(&mut self, key: FlowKey, pkt: &PacketRecord) {
        let closes = pkt.tcp_flags.contains(TcpFlags::FIN) || pkt.tcp_flags.contains(TcpFlags::RST);
        self.flows.insert(
            key,
            FlowEntry {
                last_ts: pkt.ts_us,
                closing: closes,
            },
        );
    }

    fn continuation(&mut self, key: &FlowKey, pkt: &PacketRecord) -> bool {
        let Some(entry) = self.flows.get_mut(key) else {
            return false;
        };
        let reopened = match key.proto {
            L4Proto::Tcp => entry.closing && pkt.tcp_flags.contains(TcpFlags::SYN),
            L4Proto::Udp => pkt.ts_us.saturating_sub(entry.last_ts) > UDP_IDLE_TIMEOUT_US,
        };
        if reopened {
            return false;
        }
        entry.last_ts = pkt.ts_us;
        entry.closing |=
            pkt.tcp_flags.contains(TcpFlags::FIN) || pkt.tcp_flags.contains(TcpFlags::RST);
        true
    }

    /// First-match walk over Accept rules, honoring limits the way the
    /// firewall would: a rule whose limit is exhausted simply stops
    /// matching and evaluation falls through.
    fn accept_new_flow(&mut self, key: &FlowKey, pkt: &PacketRecord) -> bool {
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.action != Action::Accept || !Self::rule_matches(rule, key, pkt) {
                continue;
            }
            if let Some(limit) = rule.limit {
                let mode = self.mode;
                let limiter = self.limiters.entry(i).or_insert_with(|| match mode {
                    RateMode::SlidingWindow => Limiter::Sliding(RateWindow::new(limit)),
                    RateMode::TokenBucket => Limiter::Bucket {
                        interval_us: limit.unit.period_us() as f64 / limit.count as f64,
                        tokens: NETFILTER_DEFAULT_BURST,
                        last_us: 0,
                    },
                });
                if !limiter.would_allow(pkt.ts_us) {
                    continue;
                }
                limiter.commit(pkt.ts_us);
            }
            self.track(*key, pkt);
            return true;
        }
        false
    }

    fn forward_exists(&self, qname: &crate::types::DnsName) -> bool {
        self.rules.iter().any(|r| match &r.action {
            Action::ForwardDns { qname: name, .. } => name == qname,
            _ => false,
        })
    }

    fn outbound(&mut self, pkt: &PacketRecord) -> bool {
        let Some(key) = Self::flow_key(pkt) else {
            return false; // nothing in the rule set matches portless traffic
        };

        if let Some(dns) = &pkt.dns {
            if !dns.is_response && pkt.dst_port == Some(53) {
                // the query must both clear the firewall and name a
                // forwarded domain; otherwise it is sinkholed
                if !self.forward_exists(&dns.qname) {
                    return false;
                }
                if self.continuation(&key, pkt) {
                    return true;
                }
                return self.accept_new_flow(&key, pkt);
            }
        }

        if self.continuation(&key, pkt) {
            return true;
        }
        self.accept_new_flow(&key, pkt)
    }

    fn inbound(&mut self, pkt: &PacketRecord) -> bool {
        let Some(key) = Self::flow_key(pkt) else {
            return false;
        };
        let reverse = key.reversed();
        let Some(entry) = self.flows.get_mut(&reverse) else {
            return false;
        };
        if reverse.proto == L4Proto::Udp
            && pkt.ts_us.saturating_sub(entry.last_ts) > UDP_IDLE_TIMEOUT_US
        {
            return false;
        }
        entry.last_ts = pkt.ts_us;
        entry.closing |=
            pkt.tcp_flags.contains(TcpFlags::FIN) || pkt.tcp_flags.contains(TcpFlags::RST);
        true
    }
}

/// Replays a packet stream against compiled rules and returns the
/// allow/deny outcome per packet. Packets not involving the device are
/// skipped, mirroring the monitor's replay contract.
pub fn replay_ir(
    rules: &[RuleIr],
    packets: &[PacketRecord],
    device_mac: MacAddr,
    mode: RateMode,
) -> Vec<IrDecision> {
    let mut interp = Interpreter::new(rules, mode);
    let mut out = Vec::new();
    for (index, pkt) in packets.iter().enumerate() {
        let outbound = pkt.from_device(device_mac);
        let inbound = pkt.to_device(device_mac);
        if !outbound && !inbound {
            continue;
        }
        // inbound traffic, DNS responses included, rides the tracked
        // entry of whatever the device sent out
        let allowed = if outbound {
            interp.outbound(pkt)
        } else {
            interp.inbound(pkt)
        };
        out.push(IrDecision {
            packet_index: index,
            allowed,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::compile_policy;
    use super::super::tests::POLICY;
    use super::*;
    use crate::policy::parse_policy;
    use crate::traffic::{DnsAnswer, DnsMessage};
    use crate::types::{Proto, RecordType};
    use alloc::vec;

    fn device_mac() -> MacAddr {
        "70:ee:50:13:ab:cd".parse().unwrap()
    }

    fn router_mac() -> MacAddr {
        "02:00:00:00:00:01".parse().unwrap()
    }

    fn query(ts_us: u64, qname: &str, resolver: &str) -> PacketRecord {
        PacketRecord {
            ts_us,
            src_mac: device_mac(),
            dst_mac: router_mac(),
            src_ip: "172.16.1.2".parse().unwrap(),
            dst_ip: resolver.parse().unwrap(),
            proto: Proto::Udp,
            src_port: Some(40000),
            dst_port: Some(53),
            payload_len: 40,
            tcp_flags: TcpFlags::default(),
            dns: Some(DnsMessage {
                is_response: false,
                txid: 7,
                qtype: RecordType::A,
                qname: qname.parse().unwrap(),
                answers: vec![],
            }),
        }
    }

    fn response(ts_us: u64, qname: &str, resolver: &str, addr: &str) -> PacketRecord {
        PacketRecord {
            ts_us,
            src_mac: router_mac(),
            dst_mac: device_mac(),
            src_ip: resolver.parse().unwrap(),
            dst_ip: "172.16.1.2".parse().unwrap(),
            proto: Proto::Udp,
            src_port: Some(53),
            dst_port: Some(40000),
            payload_len: 56,
            tcp_flags: TcpFlags::default(),
            dns: Some(DnsMessage {
                is_response: true,
                txid: 7,
                qtype: RecordType::A,
                qname: qname.parse().unwrap(),
                answers: vec![DnsAnswer {
                    name: qname.parse().unwrap(),
                    rtype: RecordType::A,
                    ttl_s: 600,
                    addr: Some(addr.parse().unwrap()),
                }],
            }),
        }
    }

    fn syn(ts_us: u64, dst: &str, dst_port: u16, src_port: u16) -> PacketRecord {
        PacketRecord {
            ts_us,
            src_mac: device_mac(),
            dst_mac: router_mac(),
            src_ip: "172.16.1.2".parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
            proto: Proto::Tcp,
            src_port: Some(src_port),
            dst_port: Some(dst_port),
            payload_len: 0,
            tcp_flags: TcpFlags::SYN,
            dns: None,
        }
    }

    #[test]
    fn allows_whitelisted_lookup_and_connection() {
        let policy = parse_policy(POLICY).unwrap();
        let rules = compile_policy(&policy).unwrap();
        let packets = vec![
            query(0, "netcom.netatmo.net", "192.168.1.1"),
            response(1_000, "netcom.netatmo.net", "192.168.1.1", "62.210.92.5"),
            syn(2_000, "62.210.92.5", 25050, 50001),
        ];
        let decisions = replay_ir(&rules, &packets, device_mac(), RateMode::SlidingWindow);
        assert!(decisions.iter().all(|d| d.allowed), "{decisions:?}");
    }

    #[test]
    fn sinkholed_lookup_and_unlisted_connection_are_refused() {
        let policy = parse_policy(POLICY).unwrap();
        let rules = compile_policy(&policy).unwrap();
        let packets = vec![
            query(0, "evil.example.com", "192.168.1.1"),
            syn(1_000, "203.0.113.9", 23, 50001),
        ];
        let decisions = replay_ir(&rules, &packets, device_mac(), RateMode::SlidingWindow);
        assert!(decisions.iter().all(|d| !d.allowed));
    }

    #[test]
    fn token_bucket_burst_diverges_then_recovers() {
        let policy = parse_policy(POLICY).unwrap();
        let rules = compile_policy(&policy).unwrap();
        // 6 connections in quick succession: sliding window allows all
        // six, the bucket (burst 5) refuses the sixth
        let packets: Vec<PacketRecord> =
            (0..6).map(|i| syn(i * 1_000_000, "62.210.92.5", 25050, 50000 + i as u16)).collect();
        let sliding = replay_ir(&rules, &packets, device_mac(), RateMode::SlidingWindow);
        let bucket = replay_ir(&rules, &packets, device_mac(), RateMode::TokenBucket);
        assert!(sliding.iter().all(|d| d.allowed));
        assert_eq!(bucket.iter().filter(|d| d.allowed).count(), 5);
        assert!(!bucket[5].allowed);
    }
}
