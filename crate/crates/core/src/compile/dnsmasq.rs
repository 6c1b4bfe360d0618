//! Emits the DNS whitelist as dnsmasq directives: `no-resolv` first so
//! nothing is forwarded by default, one `server=` line per allowed
//! name, and a final wildcard sinkhole.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use core::net::Ipv4Addr;

use super::{Action, RuleIr, DNS_SINKHOLE};

/// Renders DNS forward/sinkhole rules. Lookups of whitelisted names go
/// to `upstream`; everything else resolves to the sinkhole address.
/// Server lines are emitted once per name, lexicographically.
pub fn emit_dns_forwarder(rules: &[RuleIr], upstream: Ipv4Addr) -> String {
    let mut names: BTreeSet<&str> = BTreeSet::new();
    let mut sinkhole = DNS_SINKHOLE;
    for rule in rules {
        match &rule.action {
            Action::ForwardDns { qname, .. } => {
                names.insert(qname.as_str());
            }
            Action::SinkholeDns(addr) => sinkhole = *addr,
            _ => {}
        }
    }

    let mut lines: Vec<String> = Vec::with_capacity(names.len() + 2);
    lines.push(String::from("no-resolv"));
    for name in names {
        let mut line = String::new();
        let _ = write!(line, "server=/{name}/{upstream}");
        lines.push(line);
    }
    let mut line = String::new();
    let _ = write!(line, "address=/#/{sinkhole}");
    lines.push(line);

    let mut out = lines.join("\n");
    out.push('\n');
    out
}
