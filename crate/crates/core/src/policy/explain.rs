//! Renders a machine-readable policy as plain English so a non-expert
//! can see what a device is allowed to do.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::DevicePolicy;

/// One deterministic sentence per rule; connection rules with a byte
/// bound get an extra sentence stating it.
pub fn explain_policy(policy: &DevicePolicy) -> String {
    if policy.is_deny_all() {
        return String::from("This device may not communicate at all.\n");
    }

    let mut lines: Vec<String> = Vec::new();

    for rule in &policy.allowed_dns_queries {
        let mut s = String::new();
        let _ = write!(
            s,
            "This device may look up {} (type {}) using resolver {}.",
            rule.qname, rule.qtype, rule.resolver
        );
        lines.push(s);
    }

    for rule in &policy.allowed_dns_replies {
        let mut s = String::new();
        let _ = write!(
            s,
            "DNS answers for {} (type {}) must lie within {}.",
            rule.qname, rule.qtype, rule.answers
        );
        lines.push(s);
    }

    for rule in &policy.allowed_connections {
        let mut s = String::new();
        let _ = write!(
            s,
            "This device may connect to {} over {} port {}",
            rule.dest, rule.proto, rule.dstport
        );
        if let Some(freq) = rule.freq {
            let _ = write!(s, ", at most {} times per {}", freq.count, freq.unit.noun());
        }
        if let Some(window) = rule.schedule {
            let _ = write!(s, ", only between {window}");
        }
        if let Some(size) = rule.max_packet_size {
            let _ = write!(s, ", with packets no larger than {size} bytes");
        }
        s.push('.');
        lines.push(s);

        if let Some(bw) = rule.max_bw_out {
            let mut s = String::new();
            let _ = write!(
                s,
                "This device will not send more than {} of data per {} to {}.",
                bw.human_bytes(),
                bw.unit.noun(),
                rule.dest
            );
            lines.push(s);
        }
    }

    let mut out = lines.join("\n");
    out.push('\n');
    out
}
