//! Stateful reference enforcement point.
//!
//! Evaluates a device's packet stream against its policy, one packet at
//! a time, in timestamp order:
//!
//! 1. inbound packets of tracked flows are allowed as replies to
//!    connections that were allowed outbound;
//! 2. DNS queries must match an allowed (qtype, qname, resolver);
//! 3. DNS responses must match an allowed reply rule and every A answer
//!    must fall inside its address range; allowed answers feed the
//!    binding table;
//! 4. new outbound flows must match a connection rule, with the
//!    destination resolved through a literal range or a live binding,
//!    and then pass the rule's rate and byte budgets;
//! 5. everything else is denied.
//!
//! Monitor state changes only when a packet is allowed, so removing
//! denied packets from a trace does not change the remaining verdicts.

mod binding;
mod rate;

pub use binding::{binding_expiry, BindingTable, BINDING_TTL_CAP_S, BINDING_TTL_FLOOR_S};
pub use rate::{BandwidthWindow, ChargeOutcome, RateWindow};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::ToString;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use serde::Serialize;

use crate::policy::{ConnectionRule, Dest, DevicePolicy};
use crate::traffic::{DnsMessage, FlowKey, PacketRecord, UDP_IDLE_TIMEOUT_US};
use crate::types::{L4Proto, PolicyEntryId, Proto, TcpFlags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    RuleMatch,
    EstablishedReply,
    DefaultDeny,
    RateExceeded,
    DnsQnameDenied,
    DnsAnswerOutOfRange,
    BandwidthExceeded,
    ResolverMismatch,
}

/// Per-packet decision. Allows carry the matching rule; denies carry
/// the violated rule when one was involved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Verdict {
    #[serde(rename = "index")]
    pub packet_index: usize,
    #[serde(rename = "ts")]
    pub ts_us: u64,
    pub decision: Decision,
    pub reason: Reason,
    #[serde(rename = "rule_id")]
    pub matched_rule: Option<PolicyEntryId>,
}

impl Verdict {
    pub fn is_deny(&self) -> bool {
        self.decision == Decision::Deny
    }
}

/// A denied destination triple, evidence of a misbehaving device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ExtraneousTriple {
    pub dst: Ipv4Addr,
    pub proto: L4Proto,
    pub port: u16,
}

/// Rule hit counts and denial evidence collected over a replay.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatchStats {
    pub rule_hits: BTreeMap<alloc::string::String, u64>,
    pub extraneous: Vec<ExtraneousTriple>,
    pub denied_total: u64,
    pub allowed_total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MonitorError {
    #[error("packet {index} timestamp {ts_us} precedes {last_ts_us}")]
    OutOfOrderTimestamp {
        index: usize,
        ts_us: u64,
        last_ts_us: u64,
    },
}

fn verdict(
    index: usize,
    ts_us: u64,
    decision: Decision,
    reason: Reason,
    rule: Option<PolicyEntryId>,
) -> Verdict {
    Verdict {
        packet_index: index,
        ts_us,
        decision,
        reason,
        matched_rule: rule,
    }
}

struct FlowEntry {
    rule: usize,
    last_ts: u64,
    closing: bool,
}

enum FlowDisposition {
    /// Packet continues an allowed flow.
    Continuation(usize),
    /// Packet starts a new flow (unknown tuple, SYN after close, or
    /// UDP idle timeout).
    New,
}

/// One monitor instance per device; strictly sequential over its trace.
pub struct Monitor<'p> {
    policy: &'p DevicePolicy,
    last_ts: u64,
    packets_seen: usize,
    bindings: BindingTable,
    rate: BTreeMap<usize, RateWindow>,
    bandwidth: BTreeMap<usize, BandwidthWindow>,
    flows: BTreeMap<FlowKey, FlowEntry>,
}

impl<'p> Monitor<'p> {
    pub fn new(policy: &'p DevicePolicy) -> Self {
        Monitor {
            policy,
            last_ts: 0,
            packets_seen: 0,
            bindings: BindingTable::default(),
            rate: BTreeMap::new(),
            bandwidth: BTreeMap::new(),
            flows: BTreeMap::new(),
        }
    }

    pub fn bindings(&self) -> &BindingTable {
        &self.bindings
    }

    /// Evaluates one packet and updates state if it is allowed.
    /// `index` labels the verdict (position in the capture).
    pub fn evaluate_packet(&mut self, index: usize, pkt: &PacketRecord) -> Result<Verdict, MonitorError> {
        if self.packets_seen > 0 && pkt.ts_us < self.last_ts {
            return Err(MonitorError::OutOfOrderTimestamp {
                index,
                ts_us: pkt.ts_us,
                last_ts_us: self.last_ts,
            });
        }
        self.last_ts = pkt.ts_us;
        self.packets_seen += 1;

        let outbound = pkt.from_device(self.policy.mac_addr);
        let inbound = pkt.to_device(self.policy.mac_addr);

        if let Some(dns) = &pkt.dns {
            if pkt.proto == Proto::Udp {
                if outbound && !dns.is_response && pkt.dst_port == Some(53) {
                    return Ok(self.evaluate_dns_query(index, pkt, dns));
                }
                if inbound && dns.is_response && pkt.src_port == Some(53) {
                    return Ok(self.evaluate_dns_response(index, pkt, dns));
                }
            }
        }

        if outbound {
            Ok(self.evaluate_outbound(index, pkt))
        } else if inbound {
            Ok(self.evaluate_inbound(index, pkt))
        } else {
            Ok(verdict(index, pkt.ts_us, Decision::Deny, Reason::DefaultDeny, None))
        }
    }

    fn evaluate_dns_query(&mut self, index: usize, pkt: &PacketRecord, dns: &DnsMessage) -> Verdict {
        let resolver = pkt.dst_ip;
        let mut name_match: Option<usize> = None;
        for (i, rule) in self.policy.allowed_dns_queries.iter().enumerate() {
            if rule.qtype == dns.qtype && rule.qname == dns.qname {
                if rule.resolver == resolver {
                    return verdict(
                        index,
                        pkt.ts_us,
                        Decision::Allow,
                        Reason::RuleMatch,
                        Some(PolicyEntryId::Query(i)),
                    );
                }
                name_match.get_or_insert(i);
            }
        }
        match name_match {
            Some(i) => verdict(
                index,
                pkt.ts_us,
                Decision::Deny,
                Reason::ResolverMismatch,
                Some(PolicyEntryId::Query(i)),
            ),
            None => verdict(index, pkt.ts_us, Decision::Deny, Reason::DnsQnameDenied, None),
        }
    }

    fn evaluate_dns_response(&mut self, index: usize, pkt: &PacketRecord, dns: &DnsMessage) -> Verdict {
        let matching: Vec<(usize, crate::types::Cidr)> = self
            .policy
            .allowed_dns_replies
            .iter()
            .enumerate()
            .filter(|(_, r)| r.qname == dns.qname && r.qtype == dns.qtype)
            .map(|(i, r)| (i, r.answers))
            .collect();
        if matching.is_empty() {
            return verdict(index, pkt.ts_us, Decision::Deny, Reason::DnsQnameDenied, None);
        }
        // every interpreted answer must fall inside some allowed range;
        // a single stray address taints the whole response
        for addr in dns.a_addrs() {
            if !matching.iter().any(|(_, cidr)| cidr.contains(addr)) {
                return verdict(
                    index,
                    pkt.ts_us,
                    Decision::Deny,
                    Reason::DnsAnswerOutOfRange,
                    Some(PolicyEntryId::Reply(matching[0].0)),
                );
            }
        }
        for answer in &dns.answers {
            if let Some(addr) = answer.addr {
                let expiry = binding_expiry(pkt.ts_us, answer.ttl_s);
                self.bindings.insert(&dns.qname, addr, expiry, pkt.ts_us);
            }
        }
        verdict(
            index,
            pkt.ts_us,
            Decision::Allow,
            Reason::RuleMatch,
            Some(PolicyEntryId::Reply(matching[0].0)),
        )
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

    fn disposition(&self, key: &FlowKey, pkt: &PacketRecord) -> FlowDisposition {
        match self.flows.get(key) {
            None => FlowDisposition::New,
            Some(entry) => {
                let reopened = match key.proto {
                    L4Proto::Tcp => entry.closing && pkt.tcp_flags.contains(TcpFlags::SYN),
                    L4Proto::Udp => pkt.ts_us.saturating_sub(entry.last_ts) > UDP_IDLE_TIMEOUT_US,
                };
                if reopened {
                    FlowDisposition::New
                } else {
                    FlowDisposition::Continuation(entry.rule)
                }
            }
        }
    }

    fn rule_matches(&self, rule: &ConnectionRule, key: &FlowKey, pkt: &PacketRecord) -> bool {
        if rule.proto != key.proto || rule.dstport != key.dst_port {
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
            Dest::Net(cidr) => cidr.contains(key.dst_ip),
            Dest::Host(name) => self.bindings.contains_at(name, key.dst_ip, pkt.ts_us),
        }
    }

    fn evaluate_outbound(&mut self, index: usize, pkt: &PacketRecord) -> Verdict {
        let Some(key) = Self::flow_key(pkt) else {
            // no ports means no connection rule can describe it
            return verdict(index, pkt.ts_us, Decision::Deny, Reason::DefaultDeny, None);
        };
        let closes = pkt.tcp_flags.contains(TcpFlags::FIN) || pkt.tcp_flags.contains(TcpFlags::RST);

        if let FlowDisposition::Continuation(rule_idx) = self.disposition(&key, pkt) {
            // continuation packets only face the byte budget
            if self.policy.allowed_connections[rule_idx].max_bw_out.is_some() {
                let window = self.bandwidth.get(&rule_idx).expect("window exists for charged rule");
                if !window.would_allow(pkt.ts_us, pkt.payload_len as u64) {
                    return verdict(
                        index,
                        pkt.ts_us,
                        Decision::Deny,
                        Reason::BandwidthExceeded,
                        Some(PolicyEntryId::Connection(rule_idx)),
                    );
                }
                self.bandwidth
                    .get_mut(&rule_idx)
                    .expect("window exists for charged rule")
                    .commit(pkt.ts_us, pkt.payload_len as u64);
            }
            let entry = self.flows.get_mut(&key).expect("continuation implies entry");
            entry.last_ts = pkt.ts_us;
            entry.closing |= closes;
            return verdict(
                index,
                pkt.ts_us,
                Decision::Allow,
                Reason::RuleMatch,
                Some(PolicyEntryId::Connection(rule_idx)),
            );
        }

        // new outbound flow: first rule that matches and has budget wins
        let mut first_failure: Option<(usize, Reason)> = None;
        for (i, rule) in self.policy.allowed_connections.iter().enumerate() {
            if !self.rule_matches(rule, &key, pkt) {
                continue;
            }
            let rate_ok = match rule.freq {
                Some(spec) => self
                    .rate
                    .entry(i)
                    .or_insert_with(|| RateWindow::new(spec))
                    .would_allow(pkt.ts_us),
                None => true,
            };
            if !rate_ok {
                first_failure.get_or_insert((i, Reason::RateExceeded));
                continue;
            }
            let bw_ok = match rule.max_bw_out {
                Some(spec) => self
                    .bandwidth
                    .entry(i)
                    .or_insert_with(|| BandwidthWindow::new(spec))
                    .would_allow(pkt.ts_us, pkt.payload_len as u64),
                None => true,
            };
            if !bw_ok {
                first_failure.get_or_insert((i, Reason::BandwidthExceeded));
                continue;
            }

            // all checks passed: charge and track
            if rule.freq.is_some() {
                self.rate.get_mut(&i).expect("entry created above").commit(pkt.ts_us);
            }
            if rule.max_bw_out.is_some() {
                self.bandwidth
                    .get_mut(&i)
                    .expect("entry created above")
                    .commit(pkt.ts_us, pkt.payload_len as u64);
            }
            self.flows.insert(
                key,
                FlowEntry {
                    rule: i,
                    last_ts: pkt.ts_us,
                    closing: closes,
                },
            );
            return verdict(
                index,
                pkt.ts_us,
                Decision::Allow,
                Reason::RuleMatch,
                Some(PolicyEntryId::Connection(i)),
            );
        }

        match first_failure {
            Some((i, reason)) => verdict(
                index,
                pkt.ts_us,
                Decision::Deny,
                reason,
                Some(PolicyEntryId::Connection(i)),
            ),
            None => verdict(index, pkt.ts_us, Decision::Deny, Reason::DefaultDeny, None),
        }
    }

    fn evaluate_inbound(&mut self, index: usize, pkt: &PacketRecord) -> Verdict {
        let Some(key) = Self::flow_key(pkt) else {
            return verdict(index, pkt.ts_us, Decision::Deny, Reason::DefaultDeny, None);
        };
        let reverse = key.reversed();
        let closes = pkt.tcp_flags.contains(TcpFlags::FIN) || pkt.tcp_flags.contains(TcpFlags::RST);
        let live = match self.flows.get(&reverse) {
            Some(entry) => {
                reverse.proto != L4Proto::Udp
                    || pkt.ts_us.saturating_sub(entry.last_ts) <= UDP_IDLE_TIMEOUT_US
            }
            None => false,
        };
        if live {
            let entry = self.flows.get_mut(&reverse).expect("checked above");
            entry.last_ts = pkt.ts_us;
            entry.closing |= closes;
            let rule = entry.rule;
            return verdict(
                index,
                pkt.ts_us,
                Decision::Allow,
                Reason::EstablishedReply,
                Some(PolicyEntryId::Connection(rule)),
            );
        }
        verdict(index, pkt.ts_us, Decision::Deny, Reason::DefaultDeny, None)
    }
}

/// Replays an ordered packet stream against a policy. Packets that do
/// not involve the device at all (neither MAC matches) are skipped and
/// receive no verdict. Returns the verdict list and aggregate match
/// statistics.
pub fn replay<'a, I>(policy: &DevicePolicy, packets: I) -> Result<(Vec<Verdict>, MatchStats), MonitorError>
where
    I: IntoIterator<Item = &'a PacketRecord>,
{
    let mut monitor = Monitor::new(policy);
    let mut verdicts = Vec::new();
    let mut stats = MatchStats::default();
    for i in 0..policy.allowed_dns_queries.len() {
        stats.rule_hits.insert(PolicyEntryId::Query(i).to_string(), 0);
    }
    for i in 0..policy.allowed_dns_replies.len() {
        stats.rule_hits.insert(PolicyEntryId::Reply(i).to_string(), 0);
    }
    for i in 0..policy.allowed_connections.len() {
        stats
            .rule_hits
            .insert(PolicyEntryId::Connection(i).to_string(), 0);
    }
    let mut extraneous: BTreeSet<ExtraneousTriple> = BTreeSet::new();

    for (index, pkt) in packets.into_iter().enumerate() {
        if !pkt.from_device(policy.mac_addr) && !pkt.to_device(policy.mac_addr) {
            continue;
        }
        let verdict = monitor.evaluate_packet(index, pkt)?;
        match verdict.decision {
            Decision::Allow => {
                stats.allowed_total += 1;
                if verdict.reason == Reason::RuleMatch {
                    if let Some(id) = verdict.matched_rule {
                        *stats.rule_hits.entry(id.to_string()).or_insert(0) += 1;
                    }
                }
            }
            Decision::Deny => {
                stats.denied_total += 1;
                if pkt.from_device(policy.mac_addr) {
                    if let (Some(l4), Some(port)) = (pkt.proto.l4(), pkt.dst_port) {
                        extraneous.insert(ExtraneousTriple {
                            dst: pkt.dst_ip,
                            proto: l4,
                            port,
                        });
                    }
                }
            }
        }
        verdicts.push(verdict);
    }
    stats.extraneous = extraneous.into_iter().collect();
    Ok((verdicts, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;
    use crate::traffic::{DnsAnswer, DnsMessage};
    use crate::types::{MacAddr, RecordType};
    use alloc::format;
    use alloc::vec;
    use alloc::vec::Vec;

    const POLICY: &str = r#"{"Netatmo Weather Station": {
      "MACAddr": "70:ee:50:13:ab:cd",
      "IPAddr": "172.16.1.2",
      "AllowedDNSQueries": [
        {"type": "A", "query": "netcom.netatmo.net", "resolver": "192.168.1.1"}
      ],
      "AllowedDNSReplies": [
        {"type": "A", "query": "netcom.netatmo.net", "answers": "62.210.92.0/24"}
      ],
      "AllowedConnections": [
        {"family": "IPv4", "dest": "netcom.netatmo.net", "proto": "TCP", "dstport": "25050", "freq": "6/hr"}
      ]
    }}"#;

    fn device_mac() -> MacAddr {
        "70:ee:50:13:ab:cd".parse().unwrap()
    }

    fn router_mac() -> MacAddr {
        "02:00:00:00:00:01".parse().unwrap()
    }

    fn base_packet(ts_us: u64, out: bool) -> PacketRecord {
        PacketRecord {
            ts_us,
            src_mac: if out { device_mac() } else { router_mac() },
            dst_mac: if out { router_mac() } else { device_mac() },
            src_ip: if out { "172.16.1.2" } else { "192.168.1.1" }.parse().unwrap(),
            dst_ip: if out { "192.168.1.1" } else { "172.16.1.2" }.parse().unwrap(),
            proto: Proto::Udp,
            src_port: None,
            dst_port: None,
            payload_len: 0,
            tcp_flags: TcpFlags::default(),
            dns: None,
        }
    }

    fn dns_query(ts_us: u64, qname: &str, resolver: &str) -> PacketRecord {
        let mut pkt = base_packet(ts_us, true);
        pkt.dst_ip = resolver.parse().unwrap();
        pkt.src_port = Some(40000);
        pkt.dst_port = Some(53);
        pkt.payload_len = 40;
        pkt.dns = Some(DnsMessage {
            is_response: false,
            txid: 7,
            qtype: RecordType::A,
            qname: qname.parse().unwrap(),
            answers: vec![],
        });
        pkt
    }

    fn dns_response(ts_us: u64, qname: &str, resolver: &str, addrs: &[&str], ttl: u32) -> PacketRecord {
        let mut pkt = base_packet(ts_us, false);
        pkt.src_ip = resolver.parse().unwrap();
        pkt.src_port = Some(53);
        pkt.dst_port = Some(40000);
        pkt.payload_len = 56;
        pkt.dns = Some(DnsMessage {
            is_response: true,
            txid: 7,
            qtype: RecordType::A,
            qname: qname.parse().unwrap(),
            answers: addrs
                .iter()
                .map(|a| DnsAnswer {
                    name: qname.parse().unwrap(),
                    rtype: RecordType::A,
                    ttl_s: ttl,
                    addr: Some(a.parse().unwrap()),
                })
                .collect(),
        });
        pkt
    }

    fn tcp_to(ts_us: u64, dst: &str, dst_port: u16, src_port: u16, flags: u8, payload: u32) -> PacketRecord {
        let mut pkt = base_packet(ts_us, true);
        pkt.proto = Proto::Tcp;
        pkt.dst_ip = dst.parse().unwrap();
        pkt.src_port = Some(src_port);
        pkt.dst_port = Some(dst_port);
        pkt.tcp_flags = TcpFlags(flags);
        pkt.payload_len = payload;
        pkt
    }

    fn tcp_reply(ts_us: u64, src: &str, src_port: u16, dst_port: u16, flags: u8, payload: u32) -> PacketRecord {
        let mut pkt = base_packet(ts_us, false);
        pkt.proto = Proto::Tcp;
        pkt.src_ip = src.parse().unwrap();
        pkt.src_port = Some(src_port);
        pkt.dst_port = Some(dst_port);
        pkt.tcp_flags = TcpFlags(flags);
        pkt.payload_len = payload;
        pkt
    }

    #[test]
    fn allows_lookup_binding_and_connection() {
        let policy = parse_policy(POLICY).unwrap();
        let packets = vec![
            dns_query(0, "netcom.netatmo.net", "192.168.1.1"),
            dns_response(50_000, "netcom.netatmo.net", "192.168.1.1", &["62.210.92.5"], 600),
            tcp_to(100_000, "62.210.92.5", 25050, 50001, TcpFlags::SYN.0, 0),
            tcp_reply(150_000, "62.210.92.5", 25050, 50001, TcpFlags::SYN.0 | TcpFlags::ACK.0, 0),
            tcp_to(200_000, "62.210.92.5", 25050, 50001, TcpFlags::ACK.0, 300),
        ];
        let (verdicts, stats) = replay(&policy, &packets).unwrap();
        assert_eq!(verdicts.len(), 5);
        assert!(verdicts.iter().all(|v| v.decision == Decision::Allow), "{verdicts:?}");
        assert_eq!(verdicts[0].reason, Reason::RuleMatch);
        assert_eq!(verdicts[3].reason, Reason::EstablishedReply);
        assert_eq!(stats.denied_total, 0);
        assert_eq!(stats.rule_hits["connection[0]"], 2); // SYN + data packet
        assert_eq!(stats.rule_hits["query[0]"], 1);
    }

    #[test]
    fn deny_all_denies_everything() {
        let policy = parse_policy(
            r#"{"Dev": {"MACAddr":"70:ee:50:13:ab:cd","AllowedDNSQueries":[],"AllowedDNSReplies":[],"AllowedConnections":[]}}"#,
        )
        .unwrap();
        let packets = vec![
            dns_query(0, "netcom.netatmo.net", "192.168.1.1"),
            tcp_to(1_000, "62.210.92.5", 25050, 50001, TcpFlags::SYN.0, 0),
        ];
        let (verdicts, stats) = replay(&policy, &packets).unwrap();
        assert!(verdicts.iter().all(|v| v.is_deny()));
        assert_eq!(verdicts[0].reason, Reason::DnsQnameDenied);
        assert_eq!(verdicts[1].reason, Reason::DefaultDeny);
        assert_eq!(stats.denied_total, 2);
        assert_eq!(stats.extraneous.len(), 2);
    }

    #[test]
    fn seventh_connection_within_hour_is_rate_limited() {
        let policy = parse_policy(POLICY).unwrap();
        let mut packets = vec![
            dns_query(0, "netcom.netatmo.net", "192.168.1.1"),
            dns_response(1_000, "netcom.netatmo.net", "192.168.1.1", &["62.210.92.5"], 86_400),
        ];
        for i in 0..7u64 {
            packets.push(tcp_to(
                10_000_000 + i * 480_000_000, // every 8 minutes
                "62.210.92.5",
                25050,
                50000 + i as u16,
                TcpFlags::SYN.0,
                0,
            ));
        }
        let (verdicts, _) = replay(&policy, &packets).unwrap();
        let denies: Vec<&Verdict> = verdicts.iter().filter(|v| v.is_deny()).collect();
        assert_eq!(denies.len(), 1);
        assert_eq!(denies[0].reason, Reason::RateExceeded);
        assert_eq!(denies[0].packet_index, 8); // exactly the 7th connection
        assert_eq!(denies[0].matched_rule, Some(PolicyEntryId::Connection(0)));
    }

    #[test]
    fn out_of_range_answer_denied_without_binding() {
        let policy = parse_policy(POLICY).unwrap();
        let packets = vec![
            dns_query(0, "netcom.netatmo.net", "192.168.1.1"),
            dns_response(1_000, "netcom.netatmo.net", "192.168.1.1", &["8.8.8.8"], 600),
            // without a binding the connection cannot match either
            tcp_to(2_000, "8.8.8.8", 25050, 50001, TcpFlags::SYN.0, 0),
        ];
        let (verdicts, _) = replay(&policy, &packets).unwrap();
        assert_eq!(verdicts[1].decision, Decision::Deny);
        assert_eq!(verdicts[1].reason, Reason::DnsAnswerOutOfRange);
        assert_eq!(verdicts[2].decision, Decision::Deny);
        assert_eq!(verdicts[2].reason, Reason::DefaultDeny);
    }

    #[test]
    fn mixed_answers_taint_the_whole_response() {
        let policy = parse_policy(POLICY).unwrap();
        let packets = vec![dns_response(
            0,
            "netcom.netatmo.net",
            "192.168.1.1",
            &["62.210.92.5", "8.8.8.8"],
            600,
        )];
        let (verdicts, _) = replay(&policy, &packets).unwrap();
        assert_eq!(verdicts[0].reason, Reason::DnsAnswerOutOfRange);
    }

    #[test]
    fn resolver_mismatch_is_distinguished() {
        let policy = parse_policy(POLICY).unwrap();
        let packets = vec![dns_query(0, "netcom.netatmo.net", "8.8.8.8")];
        let (verdicts, _) = replay(&policy, &packets).unwrap();
        assert_eq!(verdicts[0].reason, Reason::ResolverMismatch);
        assert_eq!(verdicts[0].matched_rule, Some(PolicyEntryId::Query(0)));
    }

    #[test]
    fn expired_binding_no_longer_matches() {
        let policy = parse_policy(POLICY).unwrap();
        let packets = vec![
            dns_query(0, "netcom.netatmo.net", "192.168.1.1"),
            dns_response(1_000, "netcom.netatmo.net", "192.168.1.1", &["62.210.92.5"], 60),
            // 2 minutes later: the 60 s binding is gone
            tcp_to(120_000_000, "62.210.92.5", 25050, 50001, TcpFlags::SYN.0, 0),
        ];
        let (verdicts, _) = replay(&policy, &packets).unwrap();
        assert_eq!(verdicts[2].decision, Decision::Deny);
        assert_eq!(verdicts[2].reason, Reason::DefaultDeny);
    }

    #[test]
    fn unsolicited_inbound_is_denied() {
        let policy = parse_policy(POLICY).unwrap();
        let packets = vec![tcp_reply(0, "62.210.92.5", 25050, 50001, TcpFlags::SYN.0, 0)];
        let (verdicts, _) = replay(&policy, &packets).unwrap();
        assert_eq!(verdicts[0].reason, Reason::DefaultDeny);
    }

    #[test]
    fn out_of_order_timestamps_error() {
        let policy = parse_policy(POLICY).unwrap();
        let packets = vec![
            dns_query(1_000_000, "netcom.netatmo.net", "192.168.1.1"),
            dns_query(500_000, "netcom.netatmo.net", "192.168.1.1"),
        ];
        assert!(matches!(
            replay(&policy, &packets),
            Err(MonitorError::OutOfOrderTimestamp { index: 1, .. })
        ));
    }

    #[test]
    fn bandwidth_budget_denies_overflow_and_stays_uncharged() {
        let policy = parse_policy(
            &POLICY.replace(
                r#""freq": "6/hr""#,
                r#""freq": "6/hr", "max-bw-out": "1K/hr""#,
            ),
        )
        .unwrap();
        let packets = vec![
            dns_query(0, "netcom.netatmo.net", "192.168.1.1"),
            dns_response(1_000, "netcom.netatmo.net", "192.168.1.1", &["62.210.92.5"], 86_400),
            tcp_to(10_000, "62.210.92.5", 25050, 50001, TcpFlags::SYN.0, 600),
            tcp_to(20_000, "62.210.92.5", 25050, 50001, TcpFlags::ACK.0, 600), // would exceed 1000
            tcp_to(30_000, "62.210.92.5", 25050, 50001, TcpFlags::ACK.0, 400), // fits exactly
        ];
        let (verdicts, _) = replay(&policy, &packets).unwrap();
        assert_eq!(verdicts[2].decision, Decision::Allow);
        assert_eq!(verdicts[3].decision, Decision::Deny);
        assert_eq!(verdicts[3].reason, Reason::BandwidthExceeded);
        assert_eq!(verdicts[4].decision, Decision::Allow, "denied packet must not charge");
    }

    #[test]
    fn verdict_ndjson_shape() {
        let verdict = Verdict {
            packet_index: 3,
            ts_us: 42,
            decision: Decision::Deny,
            reason: Reason::RateExceeded,
            matched_rule: Some(PolicyEntryId::Connection(0)),
        };
        let line = serde_json::to_string(&verdict).unwrap();
        assert_eq!(
            line,
            r#"{"index":3,"ts":42,"decision":"DENY","reason":"RATE_EXCEEDED","rule_id":"connection[0]"}"#
        );
        let allow = Verdict {
            packet_index: 0,
            ts_us: 1,
            decision: Decision::Allow,
            reason: Reason::RuleMatch,
            matched_rule: None,
        };
        assert!(serde_json::to_string(&allow).unwrap().contains("\"rule_id\":null"));
    }

    #[test]
    fn stats_json_shape() {
        let policy = parse_policy(POLICY).unwrap();
        let (_, stats) = replay(&policy, &[tcp_to(0, "1.2.3.4", 23, 50001, TcpFlags::SYN.0, 0)]).unwrap();
        let json = serde_json::to_string(&stats).unwrap();
        for field in ["rule_hits", "extraneous", "denied_total", "allowed_total"] {
            assert!(json.contains(field), "{json} missing {field}");
        }
        assert!(json.contains(r#""dst":"1.2.3.4","proto":"TCP","port":23"#), "{json}");
        let _ = format!("{stats:?}");
    }
}
