//! Non-fatal policy lints. A structurally valid whitelist can still
//! leave room for a compromised device to be disruptive; these warnings
//! point at the loose ends.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::DevicePolicy;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// Connection rule has no rate and/or byte bound, so a compromised
    /// device could send unbounded traffic to this destination.
    UnboundedVolume { rule: usize, missing: String, dest: String },
    /// A query rule has no matching reply rule, so any answer address
    /// would be accepted for this name.
    UnconstrainedAnswers { rule: usize, qname: String },
    /// A reply rule that admits every IPv4 address.
    OpenAnswerRange { rule: usize, qname: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UnboundedVolume { rule, missing, dest } => write!(
                f,
                "connection rule {rule} ({dest}): no {missing} bound; traffic volume is unlimited"
            ),
            Warning::UnconstrainedAnswers { rule, qname } => write!(
                f,
                "query rule {rule} ({qname}): no matching reply rule constrains the answers"
            ),
            Warning::OpenAnswerRange { rule, qname } => write!(
                f,
                "reply rule {rule} ({qname}): /0 answer range admits any address"
            ),
        }
    }
}

/// Flags rules that leave traffic volume or DNS answers unconstrained.
/// A deny-all policy yields no warnings.
pub fn validate_policy(policy: &DevicePolicy) -> Vec<Warning> {
    let mut warnings = Vec::new();

    for (i, conn) in policy.allowed_connections.iter().enumerate() {
        let missing = match (conn.freq.is_some(), conn.max_bw_out.is_some()) {
            (true, true) => None,
            (true, false) => Some("byte/bandwidth"),
            (false, true) => Some("rate"),
            (false, false) => Some("rate or byte/bandwidth"),
        };
        if let Some(missing) = missing {
            warnings.push(Warning::UnboundedVolume {
                rule: i,
                missing: missing.into(),
                dest: format!("{} {}:{}", conn.proto, conn.dest, conn.dstport),
            });
        }
    }

    for (i, query) in policy.allowed_dns_queries.iter().enumerate() {
        let constrained = policy
            .allowed_dns_replies
            .iter()
            .any(|r| r.qname == query.qname && r.qtype == query.qtype);
        if !constrained {
            warnings.push(Warning::UnconstrainedAnswers {
                rule: i,
                qname: query.qname.as_str().into(),
            });
        }
    }

    for (i, reply) in policy.allowed_dns_replies.iter().enumerate() {
        if reply.answers.prefix() == 0 {
            warnings.push(Warning::OpenAnswerRange {
                rule: i,
                qname: reply.qname.as_str().into(),
            });
        }
    }

    warnings
}
