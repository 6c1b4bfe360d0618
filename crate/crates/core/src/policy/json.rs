//! Policy document format: UTF-8 JSON, one device per file, with the
//! device name as the single top-level key.
//!
//! Parsing is strict. Unknown keys are rejected rather than ignored, so
//! a misspelled key cannot silently weaken a whitelist. Field values are
//! validated in a second pass so grammar failures (bad MAC, bad CIDR,
//! bad rate) are reported as invariant errors, not schema errors.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ConnectionRule, Dest, DevicePolicy, DnsQueryRule, DnsReplyRule, PolicyError};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQueryRule {
    #[serde(rename = "type")]
    qtype: String,
    query: String,
    resolver: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReplyRule {
    #[serde(rename = "type")]
    qtype: String,
    query: String,
    answers: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConnectionRule {
    family: String,
    dest: String,
    proto: String,
    dstport: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    freq: Option<String>,
    #[serde(rename = "max-bw-out", default, skip_serializing_if = "Option::is_none")]
    max_bw_out: Option<String>,
    #[serde(rename = "max-packet-size", default, skip_serializing_if = "Option::is_none")]
    max_packet_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBody {
    #[serde(rename = "MACAddr")]
    mac_addr: String,
    #[serde(rename = "IPAddr", default, skip_serializing_if = "Option::is_none")]
    ip_addr: Option<String>,
    // `AllowedLookups` is accepted as an alias seen in older documents.
    #[serde(rename = "AllowedDNSQueries", alias = "AllowedLookups")]
    queries: Vec<RawQueryRule>,
    #[serde(rename = "AllowedDNSReplies")]
    replies: Vec<RawReplyRule>,
    #[serde(rename = "AllowedConnections")]
    connections: Vec<RawConnectionRule>,
}

fn invariant<T, E: core::fmt::Display>(
    context: &str,
    result: Result<T, E>,
) -> Result<T, PolicyError> {
    result.map_err(|e| PolicyError::Invariant(format!("{context}: {e}")))
}

fn parse_port(context: &str, text: &str) -> Result<u16, PolicyError> {
    let port: u16 = text
        .parse()
        .map_err(|_| PolicyError::Invariant(format!("{context}: invalid port `{text}`")))?;
    if port == 0 {
        return Err(PolicyError::Invariant(format!(
            "{context}: port must be in 1-65535"
        )));
    }
    Ok(port)
}

fn parse_dest(context: &str, text: &str) -> Result<Dest, PolicyError> {
    if text.contains('/') || text.parse::<core::net::Ipv4Addr>().is_ok() {
        return Ok(Dest::Net(invariant(context, text.parse())?));
    }
    Ok(Dest::Host(invariant(context, text.parse())?))
}

fn convert(device_name: String, raw: RawBody) -> Result<DevicePolicy, PolicyError> {
    let mac_addr = invariant("MACAddr", raw.mac_addr.parse())?;
    let ip_addr = match &raw.ip_addr {
        Some(text) => Some(
            text.parse()
                .map_err(|_| PolicyError::Invariant(format!("IPAddr: invalid address `{text}`")))?,
        ),
        None => None,
    };

    let mut allowed_dns_queries = Vec::with_capacity(raw.queries.len());
    for (i, q) in raw.queries.iter().enumerate() {
        let context = format!("AllowedDNSQueries[{i}]");
        allowed_dns_queries.push(DnsQueryRule {
            qtype: invariant(&context, q.qtype.parse())?,
            qname: invariant(&context, q.query.parse())?,
            resolver: q.resolver.parse().map_err(|_| {
                PolicyError::Invariant(format!("{context}: invalid resolver `{}`", q.resolver))
            })?,
        });
    }

    let mut allowed_dns_replies = Vec::with_capacity(raw.replies.len());
    for (i, r) in raw.replies.iter().enumerate() {
        let context = format!("AllowedDNSReplies[{i}]");
        allowed_dns_replies.push(DnsReplyRule {
            qtype: invariant(&context, r.qtype.parse())?,
            qname: invariant(&context, r.query.parse())?,
            answers: invariant(&context, r.answers.parse())?,
        });
    }

    let mut allowed_connections = Vec::with_capacity(raw.connections.len());
    for (i, c) in raw.connections.iter().enumerate() {
        let context = format!("AllowedConnections[{i}]");
        if c.family != "IPv4" {
            return Err(PolicyError::Invariant(format!(
                "{context}: unsupported family `{}`",
                c.family
            )));
        }
        allowed_connections.push(ConnectionRule {
            dest: parse_dest(&context, &c.dest)?,
            proto: invariant(&context, c.proto.parse())?,
            dstport: parse_port(&context, &c.dstport)?,
            freq: match &c.freq {
                Some(text) => Some(invariant(&context, text.parse())?),
                None => None,
            },
            max_bw_out: match &c.max_bw_out {
                Some(text) => Some(invariant(&context, text.parse())?),
                None => None,
            },
            max_packet_size: c.max_packet_size,
            schedule: match &c.schedule {
                Some(text) => Some(invariant(&context, text.parse())?),
                None => None,
            },
        });
    }

    let policy = DevicePolicy {
        device_name,
        mac_addr,
        ip_addr,
        allowed_dns_queries,
        allowed_dns_replies,
        allowed_connections,
    };
    policy.check_hostnames()?;
    Ok(policy)
}

/// Parses a policy document. Rejects unknown keys, values that fail
/// their grammar, and connection rules naming hosts the device cannot
/// resolve.
pub fn parse_policy(document: &str) -> Result<DevicePolicy, PolicyError> {
    let doc: BTreeMap<String, RawBody> = serde_json::from_str(document).map_err(|e| {
        if e.classify() == serde_json::error::Category::Data {
            PolicyError::Schema(e.to_string())
        } else {
            PolicyError::Syntax(e.to_string())
        }
    })?;
    if doc.len() != 1 {
        return Err(PolicyError::Schema(format!(
            "expected a single top-level device entry, found {}",
            doc.len()
        )));
    }
    let (device_name, raw) = doc.into_iter().next().expect("length checked");
    convert(device_name, raw)
}

fn to_raw(policy: &DevicePolicy) -> RawBody {
    RawBody {
        mac_addr: policy.mac_addr.to_string(),
        ip_addr: policy.ip_addr.map(|ip| ip.to_string()),
        queries: policy
            .allowed_dns_queries
            .iter()
            .map(|q| RawQueryRule {
                qtype: q.qtype.to_string(),
                query: q.qname.to_string(),
                resolver: q.resolver.to_string(),
            })
            .collect(),
        replies: policy
            .allowed_dns_replies
            .iter()
            .map(|r| RawReplyRule {
                qtype: r.qtype.to_string(),
                query: r.qname.to_string(),
                answers: r.answers.to_string(),
            })
            .collect(),
        connections: policy
            .allowed_connections
            .iter()
            .map(|c| RawConnectionRule {
                family: "IPv4".to_string(),
                dest: c.dest.to_string(),
                proto: c.proto.to_string(),
                dstport: c.dstport.to_string(),
                freq: c.freq.map(|f| f.to_string()),
                max_bw_out: c.max_bw_out.map(|b| b.to_string()),
                max_packet_size: c.max_packet_size,
                schedule: c.schedule.map(|s| s.to_string()),
            })
            .collect(),
    }
}

// Single-entry map wrapper: the device name is the top-level key and
// the body's fields serialize in declaration order.
struct Document<'a> {
    name: &'a str,
    body: RawBody,
}

impl serde::Serialize for Document<'_> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(1))?;
        map.serialize_entry(self.name, &self.body)?;
        map.end()
    }
}

/// Serializes a policy back to its document form. Key order follows the
/// canonical layout, so `parse_policy(serialize_policy(p)) == p`.
pub fn serialize_policy(policy: &DevicePolicy) -> String {
    let doc = Document {
        name: &policy.device_name,
        body: to_raw(policy),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("policy serialization cannot fail");
    out.push('\n');
    out
}
