//! Emits lowered rules as an iptables command script.
//!
//! The default chain placement matches the reference deployment (NAT
//! PREROUTING on the access-point middlebox); `FilterForward` produces
//! conventional FORWARD-chain rules instead. Output is deterministic:
//! identical input yields identical bytes.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{Action, RuleIr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChainMode {
    #[default]
    NatPrerouting,
    FilterForward,
}

fn push_match_args(line: &mut String, rule: &RuleIr) {
    if let Some(iface) = rule.matches.in_interface {
        let _ = write!(line, " -i {iface}");
    }
    if let Some(src) = rule.matches.src_ip {
        let _ = write!(line, " -s {src}");
    }
    if let Some(dst) = rule.matches.dst {
        // single addresses render bare, ranges keep their prefix
        if dst.prefix() == 32 {
            let _ = write!(line, " -d {}", dst.addr());
        } else {
            let _ = write!(line, " -d {dst}");
        }
    }
    if let Some(proto) = rule.matches.proto {
        let _ = write!(line, " -p {}", proto.lowercase());
    }
    if let Some(port) = rule.matches.dst_port {
        let _ = write!(line, " --dport {port}");
    }
}

fn origin_label(rule: &RuleIr) -> String {
    match rule.origin {
        Some(id) => {
            let mut s = String::new();
            let _ = write!(s, "{id}");
            s
        }
        None => String::from("rule"),
    }
}

/// Renders the Accept/Drop rules as one `iptables` command line each.
/// Constraints with no netfilter lowering become comments next to their
/// rule. DNS forward/sinkhole rules belong to the DNS forwarder and are
/// not rendered here.
pub fn emit_netfilter(rules: &[RuleIr], chain: ChainMode) -> String {
    let chain_args = match chain {
        ChainMode::NatPrerouting => "-t nat -A PREROUTING",
        ChainMode::FilterForward => "-A FORWARD",
    };
    let mut lines: Vec<String> = Vec::new();

    if chain == ChainMode::FilterForward {
        let iface = rules
            .iter()
            .find_map(|r| r.matches.in_interface)
            .unwrap_or(super::DEFAULT_INTERFACE);
        let mut line = String::from("iptables -A FORWARD");
        let _ = write!(line, " -i {iface}");
        line.push_str(" -m conntrack --ctstate ESTABLISHED,RELATED -j ACCEPT");
        lines.push(line);
    }

    for rule in rules {
        match rule.action {
            Action::Accept => {
                for note in &rule.unsupported {
                    let mut comment = String::from("# ");
                    let _ = write!(comment, "{}: {note}", origin_label(rule));
                    lines.push(comment);
                }
                let mut line = String::from("iptables ");
                line.push_str(chain_args);
                push_match_args(&mut line, rule);
                if let Some(limit) = rule.limit {
                    match limit.unit.netfilter_token() {
                        Some(unit) => {
                            let _ = write!(line, " -m limit --limit {}/{unit}", limit.count);
                        }
                        None => {
                            let mut comment = String::from("# ");
                            let _ = write!(
                                comment,
                                "{}: freq {limit} has no netfilter limit unit; enforced by the monitor only",
                                origin_label(rule)
                            );
                            lines.push(comment);
                        }
                    }
                }
                line.push_str(" -j ACCEPT");
                lines.push(line);
            }
            Action::Drop => match chain {
                ChainMode::NatPrerouting => {
                    lines.push(String::from(
                        "# default policy: drop all other traffic from this device",
                    ));
                    lines.push(String::from(
                        "# replies to connections allowed outbound are permitted by connection tracking",
                    ));
                }
                ChainMode::FilterForward => {
                    let mut line = String::from("iptables ");
                    line.push_str(chain_args);
                    push_match_args(&mut line, rule);
                    line.push_str(" -j DROP");
                    lines.push(line);
                }
            },
            Action::ForwardDns { .. } | Action::SinkholeDns(_) => {}
        }
    }

    let mut out = lines.join("\n");
    out.push('\n');
    out
}
