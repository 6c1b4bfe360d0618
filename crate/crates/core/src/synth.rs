//! Automatic policy acquisition: observe a device's traffic for a
//! while, then emit the minimal whitelist that covers exactly what was
//! seen.
//!
//! The synthesized policy must replay cleanly: running the source
//! capture through the monitor under the synthesized policy (with slack
//! at least 1) produces zero denies. Rate inference therefore bounds
//! the peak number of flow starts in any trailing window of the chosen
//! unit, not the average over the capture.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use crate::monitor::binding_expiry;
use crate::policy::{ConnectionRule, Dest, DevicePolicy, DnsQueryRule, DnsReplyRule};
use crate::traffic::{DnsTransaction, FlowRecord};
use crate::types::{ceil_pos, Cidr, DnsName, L4Proto, MacAddr, RateSpec, RecordType, TimeUnit};

/// How observed answer addresses are generalized into reply-rule ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// One /32 per observed address (the default: nothing is allowed
    /// that was not seen).
    Exact,
    /// Cover the observed addresses with blocks of this prefix length.
    Prefix(u8),
}

impl Aggregation {
    fn prefix_len(&self) -> u8 {
        match self {
            Aggregation::Exact => 32,
            Aggregation::Prefix(n) => (*n).min(32),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub aggregate: Aggregation,
    /// Multiplier applied to inferred rates; 1.0 encodes exactly what
    /// was observed.
    pub rate_slack: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            aggregate: Aggregation::Exact,
            rate_slack: 1.0,
        }
    }
}

/// The device a policy is being learned for.
#[derive(Debug, Clone)]
pub struct DeviceSpec {
    pub name: String,
    pub mac: MacAddr,
    pub ip: Option<Ipv4Addr>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("capture contains no traffic for the device")]
    EmptyCapture,
}

/// Covers a set of addresses with the minimal set of fixed-length
/// prefixes: truncate each address and deduplicate.
pub fn aggregate_prefixes(ips: &BTreeSet<Ipv4Addr>, aggregation: Aggregation) -> Vec<Cidr> {
    let prefix = aggregation.prefix_len();
    let blocks: BTreeSet<Cidr> = ips.iter().map(|ip| Cidr::truncate(*ip, prefix)).collect();
    blocks.into_iter().collect()
}

/// Infers a connection-rate bound from observed flow start times.
///
/// Returns `None` for fewer than two observations (a single event gives
/// no period to generalize from). The unit is the smallest of hour/day
/// at which the average rate reaches one; the count is the peak number
/// of starts in any trailing window of that unit, scaled by `slack` and
/// rounded up.
pub fn infer_rate(start_times: &[u64], capture_duration_us: u64, slack: f64) -> Option<RateSpec> {
    if start_times.len() < 2 {
        return None;
    }
    let duration_us = capture_duration_us.max(1_000_000);
    let slack = if slack < 1.0 { 1.0 } else { slack };

    let avg_per_hour =
        start_times.len() as f64 * TimeUnit::Hour.period_us() as f64 / duration_us as f64;
    let unit = if avg_per_hour >= 1.0 {
        TimeUnit::Hour
    } else {
        TimeUnit::Day
    };

    let mut sorted: Vec<u64> = start_times.to_vec();
    sorted.sort_unstable();
    let period = unit.period_us();
    // peak over trailing windows (t - period, t]
    let mut peak = 0usize;
    let mut lo = 0usize;
    for hi in 0..sorted.len() {
        while sorted[hi] - sorted[lo] >= period {
            lo += 1;
        }
        peak = peak.max(hi - lo + 1);
    }

    let count = ceil_pos(peak as f64 * slack).max(1) as u32;
    Some(RateSpec { count, unit })
}

fn is_dns_flow(flow: &FlowRecord) -> bool {
    flow.key.proto == L4Proto::Udp && flow.key.dst_port == 53
}

/// Finds the hostname to attribute a flow to: the qname of the most
/// recent still-live DNS answer containing the flow's destination
/// address, mirroring what a resolver cache would have held when the
/// connection was made.
fn attribute_flow(flow: &FlowRecord, dns: &[DnsTransaction]) -> Option<DnsName> {
    let mut best: Option<(u64, &DnsName)> = None;
    for txn in dns {
        let (Some(resp), Some(resp_ts)) = (&txn.response, txn.response_ts) else {
            continue;
        };
        if resp_ts > flow.first_ts {
            continue;
        }
        for answer in &resp.answers {
            let Some(addr) = answer.addr else { continue };
            if addr != flow.key.dst_ip {
                continue;
            }
            if flow.first_ts >= binding_expiry(resp_ts, answer.ttl_s) {
                continue; // cache entry would have expired
            }
            if best.is_none_or(|(ts, _)| resp_ts >= ts) {
                best = Some((resp_ts, &txn.query.qname));
            }
        }
    }
    best.map(|(_, name)| name.clone())
}

/// Builds the minimal policy covering the observed flows and DNS
/// transactions of one device.
pub fn synthesize_policy(
    flows: &[FlowRecord],
    dns: &[DnsTransaction],
    device: &DeviceSpec,
    capture_duration_us: u64,
    options: &SynthOptions,
) -> Result<DevicePolicy, SynthError> {
    let flows: Vec<&FlowRecord> = flows
        .iter()
        .filter(|f| device.ip.is_none_or(|ip| f.key.src_ip == ip))
        .collect();
    if flows.is_empty() && dns.is_empty() {
        return Err(SynthError::EmptyCapture);
    }

    // one query rule per distinct (qtype, qname, resolver)
    let query_keys: BTreeSet<(DnsName, u16, Ipv4Addr)> = dns
        .iter()
        .map(|t| (t.query.qname.clone(), t.query.qtype.code(), t.resolver))
        .collect();
    let allowed_dns_queries: Vec<DnsQueryRule> = query_keys
        .into_iter()
        .map(|(qname, qtype, resolver)| DnsQueryRule {
            qtype: RecordType::from_code(qtype),
            qname,
            resolver,
        })
        .collect();

    // answered A lookups become reply rules, one per aggregated block
    let mut answers_by_name: BTreeMap<(DnsName, u16), BTreeSet<Ipv4Addr>> = BTreeMap::new();
    for txn in dns {
        let Some(resp) = &txn.response else { continue };
        let addrs: BTreeSet<Ipv4Addr> = resp.a_addrs().collect();
        if addrs.is_empty() {
            continue;
        }
        answers_by_name
            .entry((txn.query.qname.clone(), txn.query.qtype.code()))
            .or_default()
            .extend(addrs);
    }
    let mut allowed_dns_replies: Vec<DnsReplyRule> = Vec::new();
    for ((qname, qtype), addrs) in &answers_by_name {
        for block in aggregate_prefixes(addrs, options.aggregate) {
            allowed_dns_replies.push(DnsReplyRule {
                qtype: RecordType::from_code(*qtype),
                qname: qname.clone(),
                answers: block,
            });
        }
    }

    // connection rules from non-DNS flows, deduplicated by
    // (destination, protocol, port); DNS flows are covered by the
    // query rules and their compiled port-53 accepts
    let mut starts: BTreeMap<(Dest, L4Proto, u16), Vec<u64>> = BTreeMap::new();
    for flow in flows.iter().filter(|f| !is_dns_flow(f)) {
        let dest = match attribute_flow(flow, dns) {
            Some(qname) => Dest::Host(qname),
            None => Dest::Net(Cidr::host(flow.key.dst_ip)),
        };
        starts
            .entry((dest, flow.key.proto, flow.key.dst_port))
            .or_default()
            .push(flow.first_ts);
    }
    let allowed_connections: Vec<ConnectionRule> = starts
        .into_iter()
        .map(|((dest, proto, dstport), times)| ConnectionRule {
            dest,
            proto,
            dstport,
            freq: infer_rate(&times, capture_duration_us, options.rate_slack),
            max_bw_out: None,
            max_packet_size: None,
            schedule: None,
        })
        .collect();

    Ok(DevicePolicy {
        device_name: device.name.clone(),
        mac_addr: device.mac,
        ip_addr: device.ip,
        allowed_dns_queries,
        allowed_dns_replies,
        allowed_connections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{DnsAnswer, DnsMessage, FlowKey};
    use alloc::vec;

    #[test]
    fn aggregate_exact_gives_one_host_route_per_ip() {
        let ips: BTreeSet<Ipv4Addr> = ["10.0.0.1".parse().unwrap()].into_iter().collect();
        let blocks = aggregate_prefixes(&ips, Aggregation::Exact);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].to_string(), "10.0.0.1/32");
    }

    #[test]
    fn aggregate_prefix_covers_with_minimal_blocks() {
        let ips: BTreeSet<Ipv4Addr> = ["62.210.92.5".parse().unwrap(), "62.210.92.17".parse().unwrap()]
            .into_iter()
            .collect();
        let blocks = aggregate_prefixes(&ips, Aggregation::Prefix(24));
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].to_string(), "62.210.92.0/24");

        // set-cover-by-truncation oracle: distinct truncations remain
        let ips: BTreeSet<Ipv4Addr> = ["10.0.1.5".parse().unwrap(), "10.0.2.5".parse().unwrap()]
            .into_iter()
            .collect();
        let blocks = aggregate_prefixes(&ips, Aggregation::Prefix(24));
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].to_string(), "10.0.1.0/24");
        assert_eq!(blocks[1].to_string(), "10.0.2.0/24");
        for ip in &ips {
            assert!(blocks.iter().any(|b| b.contains(*ip)));
        }
    }

    #[test]
    fn rate_six_per_hour() {
        let starts: Vec<u64> = (0..6).map(|i| i * 600 * 1_000_000).collect();
        let rate = infer_rate(&starts, 3_600_000_000, 1.0).unwrap();
        assert_eq!((rate.count, rate.unit), (6, TimeUnit::Hour));
    }

    #[test]
    fn rate_slack_doubles_count() {
        let starts: Vec<u64> = (0..6).map(|i| i * 600 * 1_000_000).collect();
        let rate = infer_rate(&starts, 3_600_000_000, 2.0).unwrap();
        assert_eq!((rate.count, rate.unit), (12, TimeUnit::Hour));
    }

    #[test]
    fn single_observation_gives_no_rate() {
        assert_eq!(infer_rate(&[5_000_000], 3_600_000_000, 1.0), None);
        assert_eq!(infer_rate(&[], 3_600_000_000, 1.0), None);
    }

    #[test]
    fn sparse_events_use_day_unit() {
        // 2 events over a week: well under one per hour on average
        let starts = vec![0, 3_600_000_000];
        let week = 7 * 86_400_000_000;
        let rate = infer_rate(&starts, week, 1.0).unwrap();
        assert_eq!(rate.unit, TimeUnit::Day);
        assert_eq!(rate.count, 2); // both fall inside one day window
    }

    #[test]
    fn clustered_events_bound_the_peak_window() {
        // 10 starts in the first minute of a 2 h capture: the average
        // says 5/hour but a trailing hour window holds all 10, so the
        // inferred bound must be 10 for a clean replay.
        let starts: Vec<u64> = (0..10).map(|i| i * 6_000_000).collect();
        let rate = infer_rate(&starts, 2 * 3_600_000_000, 1.0).unwrap();
        assert_eq!((rate.count, rate.unit), (10, TimeUnit::Hour));
    }

    fn device() -> DeviceSpec {
        DeviceSpec {
            name: "Netatmo Weather Station".into(),
            mac: "70:ee:50:13:ab:cd".parse().unwrap(),
            ip: Some("172.16.1.2".parse().unwrap()),
        }
    }

    fn netatmo_dns(ts: u64) -> DnsTransaction {
        let qname: DnsName = "netcom.netatmo.net".parse().unwrap();
        DnsTransaction {
            query: DnsMessage {
                is_response: false,
                txid: 7,
                qtype: RecordType::A,
                qname: qname.clone(),
                answers: vec![],
            },
            response: Some(DnsMessage {
                is_response: true,
                txid: 7,
                qtype: RecordType::A,
                qname: qname.clone(),
                answers: vec![DnsAnswer {
                    name: qname,
                    rtype: RecordType::A,
                    ttl_s: 600,
                    addr: Some("62.210.92.5".parse().unwrap()),
                }],
            }),
            resolver: "192.168.1.1".parse().unwrap(),
            query_ts: ts,
            response_ts: Some(ts + 50_000),
        }
    }

    fn upload_flow(first_ts: u64, src_port: u16) -> FlowRecord {
        FlowRecord {
            key: FlowKey {
                src_ip: "172.16.1.2".parse().unwrap(),
                dst_ip: "62.210.92.5".parse().unwrap(),
                proto: L4Proto::Tcp,
                src_port,
                dst_port: 25050,
            },
            first_ts,
            last_ts: first_ts + 2_000_000,
            out_bytes: 1200,
            out_packets: 4,
        }
    }

    #[test]
    fn synthesizes_weather_station_shape() {
        // DNS lookup + upload every 10 minutes for an hour
        let mut dns = Vec::new();
        let mut flows = Vec::new();
        for i in 0..6u64 {
            let base = i * 600_000_000;
            dns.push(netatmo_dns(base));
            flows.push(upload_flow(base + 100_000, 50000 + i as u16));
        }
        let options = SynthOptions {
            aggregate: Aggregation::Prefix(24),
            rate_slack: 1.0,
        };
        let policy =
            synthesize_policy(&flows, &dns, &device(), 3_600_000_000, &options).unwrap();

        assert_eq!(policy.allowed_dns_queries.len(), 1);
        let q = &policy.allowed_dns_queries[0];
        assert_eq!(q.qname.as_str(), "netcom.netatmo.net");
        assert_eq!(q.resolver.to_string(), "192.168.1.1");

        assert_eq!(policy.allowed_dns_replies.len(), 1);
        assert_eq!(policy.allowed_dns_replies[0].answers.to_string(), "62.210.92.0/24");

        assert_eq!(policy.allowed_connections.len(), 1);
        let c = &policy.allowed_connections[0];
        assert_eq!(c.dest, Dest::Host("netcom.netatmo.net".parse().unwrap()));
        assert_eq!(c.dstport, 25050);
        assert_eq!(c.freq.map(|f| (f.count, f.unit)), Some((6, TimeUnit::Hour)));

        assert!(policy.check_hostnames().is_ok());
    }

    #[test]
    fn never_resolved_destination_becomes_literal() {
        let flows = vec![FlowRecord {
            key: FlowKey {
                src_ip: "172.16.1.2".parse().unwrap(),
                dst_ip: "203.0.113.9".parse().unwrap(),
                proto: L4Proto::Tcp,
                src_port: 40000,
                dst_port: 443,
            },
            first_ts: 0,
            last_ts: 10,
            out_bytes: 100,
            out_packets: 1,
        }];
        let policy =
            synthesize_policy(&flows, &[], &device(), 3_600_000_000, &SynthOptions::default())
                .unwrap();
        assert_eq!(policy.allowed_connections.len(), 1);
        assert_eq!(
            policy.allowed_connections[0].dest,
            Dest::Net("203.0.113.9/32".parse().unwrap())
        );
        // agrees with the footprint view of the same trace
        let summary = crate::traffic::summarize_capture(&flows, &[], None);
        assert_eq!(summary.hardcoded_ips, 1);
    }

    #[test]
    fn expired_answer_does_not_attribute() {
        // answer TTL 600 s, flow starts 2 h later: the cache entry is
        // long gone, so the destination is treated as hardcoded
        let dns = vec![netatmo_dns(0)];
        let flows = vec![upload_flow(2 * 3_600_000_000, 50000)];
        let policy =
            synthesize_policy(&flows, &dns, &device(), 3 * 3_600_000_000, &SynthOptions::default())
                .unwrap();
        assert_eq!(
            policy.allowed_connections[0].dest,
            Dest::Net("62.210.92.5/32".parse().unwrap())
        );
    }

    #[test]
    fn empty_traffic_is_an_error() {
        assert_eq!(
            synthesize_policy(&[], &[], &device(), 3_600_000_000, &SynthOptions::default()),
            Err(SynthError::EmptyCapture)
        );
    }

    #[test]
    fn duplicate_trace_yields_identical_rules() {
        let dns = vec![netatmo_dns(0), netatmo_dns(600_000_000)];
        let flows = vec![upload_flow(100_000, 50000), upload_flow(600_100_000, 50001)];
        let hour = 3_600_000_000u64;
        let once =
            synthesize_policy(&flows, &dns, &device(), hour, &SynthOptions::default()).unwrap();

        // the same trace again, shifted past the rate window so the
        // peak is unchanged
        let shift = 2 * hour;
        let mut dns2 = dns.clone();
        let mut flows2 = flows.clone();
        for t in &dns {
            let mut t = t.clone();
            t.query_ts += shift;
            t.response_ts = t.response_ts.map(|ts| ts + shift);
            dns2.push(t);
        }
        for (i, f) in flows.iter().enumerate() {
            let mut f = f.clone();
            f.first_ts += shift;
            f.last_ts += shift;
            f.key.src_port = 51000 + i as u16;
            flows2.push(f);
        }
        let twice =
            synthesize_policy(&flows2, &dns2, &device(), shift + hour, &SynthOptions::default())
                .unwrap();

        assert_eq!(once.allowed_dns_queries, twice.allowed_dns_queries);
        assert_eq!(once.allowed_dns_replies, twice.allowed_dns_replies);
        assert_eq!(once.allowed_connections, twice.allowed_connections);
    }
}
