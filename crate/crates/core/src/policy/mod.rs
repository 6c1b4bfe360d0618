//! Device policy model: a whitelist of allowed DNS queries, DNS replies,
//! and connections for one device. Anything not listed is denied.

mod explain;
mod json;
mod validate;

pub use explain::explain_policy;
pub use json::{parse_policy, serialize_policy};
pub use validate::{validate_policy, Warning};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv4Addr;

use crate::types::{
    BandwidthSpec, Cidr, DnsName, L4Proto, MacAddr, RateSpec, RecordType, TimeWindow,
};

/// Destination of a connection rule: either a hostname whose allowed
/// addresses are learned from DNS, or a literal address range.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Dest {
    Host(DnsName),
    Net(Cidr),
}

impl fmt::Display for Dest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dest::Host(name) => name.fmt(f),
            Dest::Net(cidr) => cidr.fmt(f),
        }
    }
}

/// Allows the device to look up one domain name via one resolver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsQueryRule {
    pub qtype: RecordType,
    pub qname: DnsName,
    pub resolver: Ipv4Addr,
}

/// Constrains the addresses a DNS answer for a domain may carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsReplyRule {
    pub qtype: RecordType,
    pub qname: DnsName,
    pub answers: Cidr,
}

/// Allows outbound connections to one destination/protocol/port, with
/// optional metadata bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionRule {
    pub dest: Dest,
    pub proto: L4Proto,
    pub dstport: u16,
    pub freq: Option<RateSpec>,
    pub max_bw_out: Option<BandwidthSpec>,
    pub max_packet_size: Option<u32>,
    pub schedule: Option<TimeWindow>,
}

/// Whitelist policy for a single device. An all-empty policy denies
/// everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DevicePolicy {
    pub device_name: String,
    pub mac_addr: MacAddr,
    pub ip_addr: Option<Ipv4Addr>,
    pub allowed_dns_queries: Vec<DnsQueryRule>,
    pub allowed_dns_replies: Vec<DnsReplyRule>,
    pub allowed_connections: Vec<ConnectionRule>,
}

/// Structural error in a policy document.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    /// Malformed JSON.
    #[error("syntax error: {0}")]
    Syntax(String),
    /// Well-formed JSON that does not fit the schema (unknown key,
    /// wrong shape, wrong type).
    #[error("schema error: {0}")]
    Schema(String),
    /// A field whose value fails its grammar (MAC, CIDR, port, rate...).
    #[error("invalid value: {0}")]
    Invariant(String),
    /// A connection rule names a host the device is not allowed to
    /// resolve.
    #[error("connection rule destination `{0}` has no matching DNS query rule")]
    DanglingHostname(String),
}

impl DevicePolicy {
    /// A policy with no rules at all: everything the device sends is
    /// denied.
    pub fn deny_all(device_name: impl Into<String>, mac_addr: MacAddr) -> Self {
        DevicePolicy {
            device_name: device_name.into(),
            mac_addr,
            ip_addr: None,
            allowed_dns_queries: Vec::new(),
            allowed_dns_replies: Vec::new(),
            allowed_connections: Vec::new(),
        }
    }

    pub fn is_deny_all(&self) -> bool {
        self.allowed_dns_queries.is_empty()
            && self.allowed_dns_replies.is_empty()
            && self.allowed_connections.is_empty()
    }

    /// Checks the cross-rule invariant: every hostname destination must
    /// be resolvable under the policy's own query rules.
    pub fn check_hostnames(&self) -> Result<(), PolicyError> {
        for rule in &self.allowed_connections {
            if let Dest::Host(name) = &rule.dest {
                let resolvable = self
                    .allowed_dns_queries
                    .iter()
                    .any(|q| q.qname == *name);
                if !resolvable {
                    return Err(PolicyError::DanglingHostname(name.as_str().into()));
                }
            }
        }
        Ok(())
    }

    /// Reply rules for a given name, restricted to address-bearing
    /// (type A) entries.
    pub fn reply_rules_for<'a>(
        &'a self,
        qname: &'a DnsName,
    ) -> impl Iterator<Item = (usize, &'a DnsReplyRule)> + 'a {
        self.allowed_dns_replies
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.qname == *qname && r.qtype == RecordType::A)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mac() -> MacAddr {
        "00:11:22:33:44:55".parse().unwrap()
    }

    #[test]
    fn deny_all_and_hostname_check() {
        let policy = DevicePolicy::deny_all("Test", mac());
        assert!(policy.is_deny_all());
        assert!(policy.check_hostnames().is_ok());

        let mut policy = policy;
        policy.allowed_connections.push(ConnectionRule {
            dest: Dest::Host("api.example.com".parse().unwrap()),
            proto: L4Proto::Tcp,
            dstport: 443,
            freq: None,
            max_bw_out: None,
            max_packet_size: None,
            schedule: None,
        });
        assert!(matches!(
            policy.check_hostnames(),
            Err(PolicyError::DanglingHostname(_))
        ));

        policy.allowed_dns_queries.push(DnsQueryRule {
            qtype: RecordType::A,
            qname: "api.example.com".parse().unwrap(),
            resolver: "192.168.1.1".parse().unwrap(),
        });
        assert!(policy.check_hostnames().is_ok());
    }
}
