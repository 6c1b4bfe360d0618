//! Per-device traffic footprint: distinct endpoints, distinct domains,
//! hardcoded IPs, and resolver behavior.

use alloc::collections::{BTreeMap, BTreeSet};
use core::net::Ipv4Addr;

use serde::Serialize;

use super::{DnsTransaction, FlowRecord};
use crate::types::L4Proto;

/// Footprint of one device over one capture.
///
/// An IP counts as hardcoded when the device's first contact with it was
/// not preceded by any DNS answer resolving to it; a lookup arriving
/// only after first contact does not clear the flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CaptureSummary {
    pub distinct_endpoints: usize,
    pub distinct_domains: usize,
    pub hardcoded_ips: usize,
    pub rogue_resolver: bool,
}

fn is_dns_flow(flow: &FlowRecord) -> bool {
    flow.key.proto == L4Proto::Udp && flow.key.dst_port == 53
}

/// Computes the footprint from tracked flows and DNS transactions.
/// Endpoints are keyed (address, protocol, port) over non-DNS flows,
/// plus one endpoint per distinct resolver actually queried.
pub fn summarize_capture(
    flows: &[FlowRecord],
    dns: &[DnsTransaction],
    dhcp_resolver: Option<Ipv4Addr>,
) -> CaptureSummary {
    let mut endpoints: BTreeSet<(Ipv4Addr, L4Proto, u16)> = BTreeSet::new();
    for flow in flows.iter().filter(|f| !is_dns_flow(f)) {
        endpoints.insert((flow.key.dst_ip, flow.key.proto, flow.key.dst_port));
    }
    for txn in dns {
        endpoints.insert((txn.resolver, L4Proto::Udp, 53));
    }

    let domains: BTreeSet<&str> = dns.iter().map(|t| t.query.qname.as_str()).collect();

    // first contact per destination IP, DNS traffic excluded
    let mut first_contact: BTreeMap<Ipv4Addr, u64> = BTreeMap::new();
    for flow in flows.iter().filter(|f| !is_dns_flow(f)) {
        first_contact
            .entry(flow.key.dst_ip)
            .and_modify(|ts| *ts = (*ts).min(flow.first_ts))
            .or_insert(flow.first_ts);
    }
    let hardcoded_ips = first_contact
        .iter()
        .filter(|(ip, first_ts)| {
            !dns.iter().any(|txn| match (&txn.response, txn.response_ts) {
                (Some(resp), Some(ts)) => ts <= **first_ts && resp.a_addrs().any(|a| a == **ip),
                _ => false,
            })
        })
        .count();

    let rogue_resolver = match dhcp_resolver {
        Some(expected) => dns.iter().any(|t| t.resolver != expected),
        None => false,
    };

    CaptureSummary {
        distinct_endpoints: endpoints.len(),
        distinct_domains: domains.len(),
        hardcoded_ips,
        rogue_resolver,
    }
}
