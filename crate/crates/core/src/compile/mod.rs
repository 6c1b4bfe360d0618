//! Lowers a device policy into a backend-neutral rule list, from which
//! firewall scripts and DNS-forwarder configuration are emitted.
//!
//! Connection rules naming a hostname are joined with the reply rule(s)
//! for that hostname, so the emitted rule pins both the destination
//! range and the port instead of trusting the name.

mod dnsmasq;
mod interp;
mod netfilter;

pub use dnsmasq::emit_dns_forwarder;
pub use interp::{replay_ir, RateMode};
pub use netfilter::{emit_netfilter, ChainMode};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use crate::policy::{Dest, DevicePolicy};
use crate::types::{Cidr, DnsName, L4Proto, PolicyEntryId, RateSpec};

/// Interface the enforcement point watches.
pub const DEFAULT_INTERFACE: &str = "wlan0";

/// Sinkhole address unmatched lookups resolve to.
pub const DNS_SINKHOLE: Ipv4Addr = Ipv4Addr::new(127, 0, 0, 1);

/// Match predicates of one lowered rule. Absent fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchSet {
    pub src_ip: Option<Ipv4Addr>,
    pub dst: Option<Cidr>,
    pub proto: Option<L4Proto>,
    pub dst_port: Option<u16>,
    pub in_interface: Option<&'static str>,
}

impl MatchSet {
    pub fn is_empty(&self) -> bool {
        self.src_ip.is_none()
            && self.dst.is_none()
            && self.proto.is_none()
            && self.dst_port.is_none()
            && self.in_interface.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Accept,
    Drop,
    /// Forward lookups of this name; the resolver recorded here is the
    /// one the policy names, emitters may substitute their upstream.
    ForwardDns { qname: DnsName, resolver: Ipv4Addr },
    /// Answer every other lookup with this address.
    SinkholeDns(Ipv4Addr),
}

/// One backend-neutral enforcement rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleIr {
    pub matches: MatchSet,
    pub limit: Option<RateSpec>,
    pub action: Action,
    /// Policy entry this rule was lowered from.
    pub origin: Option<PolicyEntryId>,
    /// Reply rule joined into this rule's destination range, if any.
    pub joined_reply: Option<PolicyEntryId>,
    /// Constraints with no lowering in this backend set, carried for
    /// comment emission (the reference monitor still enforces them).
    pub unsupported: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    /// A hostname destination has no reply rule, so no address range
    /// can bound it. Emitting an any-destination rule instead would
    /// silently void the whitelist.
    #[error("connection rule destination `{hostname}` has no reply rule to bound its addresses")]
    Join { hostname: String },
}

/// Lowers a policy. Accept rules come out in policy order (connections
/// first, then per-query DNS transport rules), followed by DNS forward
/// rules, the lookup sinkhole, and the default drop.
pub fn compile_policy(policy: &DevicePolicy) -> Result<Vec<RuleIr>, CompileError> {
    let mut rules = Vec::new();

    for (ci, conn) in policy.allowed_connections.iter().enumerate() {
        let mut unsupported = Vec::new();
        if let Some(bw) = conn.max_bw_out {
            unsupported.push(format!("max-bw-out {bw} is enforced by the monitor only"));
        }
        if let Some(size) = conn.max_packet_size {
            unsupported.push(format!("max-packet-size {size} is enforced by the monitor only"));
        }
        if let Some(window) = conn.schedule {
            unsupported.push(format!("schedule {window} is enforced by the monitor only"));
        }

        let dsts: Vec<(Option<PolicyEntryId>, Cidr)> = match &conn.dest {
            Dest::Net(cidr) => alloc::vec![(None, *cidr)],
            Dest::Host(name) => {
                let joined: Vec<(Option<PolicyEntryId>, Cidr)> = policy
                    .reply_rules_for(name)
                    .map(|(ri, r)| (Some(PolicyEntryId::Reply(ri)), r.answers))
                    .collect();
                if joined.is_empty() {
                    return Err(CompileError::Join {
                        hostname: name.as_str().into(),
                    });
                }
                joined
            }
        };
        for (joined_reply, dst) in dsts {
            rules.push(RuleIr {
                matches: MatchSet {
                    src_ip: policy.ip_addr,
                    dst: Some(dst),
                    proto: Some(conn.proto),
                    dst_port: Some(conn.dstport),
                    in_interface: Some(DEFAULT_INTERFACE),
                },
                limit: conn.freq,
                action: Action::Accept,
                origin: Some(PolicyEntryId::Connection(ci)),
                joined_reply,
                unsupported: unsupported.clone(),
            });
        }
    }

    for (qi, query) in policy.allowed_dns_queries.iter().enumerate() {
        rules.push(RuleIr {
            matches: MatchSet {
                src_ip: policy.ip_addr,
                dst: Some(Cidr::host(query.resolver)),
                proto: Some(L4Proto::Udp),
                dst_port: Some(53),
                in_interface: Some(DEFAULT_INTERFACE),
            },
            limit: None,
            action: Action::Accept,
            origin: Some(PolicyEntryId::Query(qi)),
            joined_reply: None,
            unsupported: Vec::new(),
        });
    }

    for (qi, query) in policy.allowed_dns_queries.iter().enumerate() {
        rules.push(RuleIr {
            matches: MatchSet::default(),
            limit: None,
            action: Action::ForwardDns {
                qname: query.qname.clone(),
                resolver: query.resolver,
            },
            origin: Some(PolicyEntryId::Query(qi)),
            joined_reply: None,
            unsupported: Vec::new(),
        });
    }

    rules.push(RuleIr {
        matches: MatchSet::default(),
        limit: None,
        action: Action::SinkholeDns(DNS_SINKHOLE),
        origin: None,
        joined_reply: None,
        unsupported: Vec::new(),
    });
    rules.push(RuleIr {
        matches: MatchSet {
            src_ip: policy.ip_addr,
            dst: None,
            proto: None,
            dst_port: None,
            in_interface: Some(DEFAULT_INTERFACE),
        },
        limit: None,
        action: Action::Drop,
        origin: None,
        joined_reply: None,
        unsupported: Vec::new(),
    });

    debug_assert!(rules
        .iter()
        .filter(|r| matches!(r.action, Action::Accept | Action::Drop))
        .all(|r| !r.matches.is_empty()));
    Ok(rules)
}
