//! leash: learn least-privilege network policies for IoT devices from
//! packet captures, compile them into firewall and DNS-forwarder
//! configuration, and audit traffic against them.
//!
//! Exit codes are a stable contract:
//!   0  success (for `simulate`: no policy violations)
//!   1  `simulate` found at least one denied packet
//!   2  the capture holds no usable traffic for the device
//!   3  the policy cannot be compiled (unresolvable hostname join)
//!   64 usage error
//!   65 malformed input data (policy or capture)
//!   74 I/O error
//!
//! Diagnostics go to stderr; data goes to files or stdout.

mod commands;
mod io;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{AggregateArg, ChainArg, FormatArg};
use leash_core::types::MacAddr;

#[derive(Parser)]
#[command(name = "leash", version, about = "Least-privilege network policies for IoT devices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a policy from a packet capture of one device
    Learn {
        /// Capture file (classic pcap, Ethernet)
        #[arg(long)]
        pcap: std::path::PathBuf,
        /// Device MAC address to learn for
        #[arg(long, value_name = "MAC")]
        device_mac: MacAddr,
        /// Device IPv4 address; inferred from the capture when omitted
        #[arg(long, value_name = "IP")]
        device_ip: Option<std::net::Ipv4Addr>,
        /// Device name used as the policy's top-level key
        #[arg(long)]
        device_name: Option<String>,
        /// Generalize observed DNS answers to this prefix length, or
        /// keep them exact
        #[arg(long, value_name = "N|exact", default_value = "exact")]
        aggregate_prefix: AggregateArg,
        /// Multiplier applied to inferred connection rates
        #[arg(long, value_name = "F", default_value_t = 1.0)]
        rate_slack: f64,
        /// Where to write the policy JSON
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Compile a policy into enforcement configuration
    Compile {
        /// Policy JSON file
        policy: std::path::PathBuf,
        /// Output dialect
        #[arg(long)]
        format: FormatArg,
        /// Upstream resolver for forwarded lookups (dnsforward format);
        /// defaults to $LEASH_UPSTREAM or 8.8.8.8
        #[arg(long, value_name = "IP")]
        upstream: Option<std::net::Ipv4Addr>,
        /// Firewall chain placement (netfilter format)
        #[arg(long, default_value = "nat-prerouting")]
        chain: ChainArg,
        /// Where to write the configuration
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Replay a capture against a policy and log per-packet verdicts
    Simulate {
        #[arg(long)]
        policy: std::path::PathBuf,
        #[arg(long)]
        pcap: std::path::PathBuf,
        /// Verdict log (newline-delimited JSON, one record per packet)
        #[arg(long)]
        log: std::path::PathBuf,
        /// Match statistics (single JSON document)
        #[arg(long)]
        stats: std::path::PathBuf,
    },
    /// Summarize a device's network footprint from a capture
    Summarize {
        #[arg(long)]
        pcap: std::path::PathBuf,
        #[arg(long, value_name = "MAC")]
        device_mac: Option<MacAddr>,
        /// Resolver handed out by DHCP, for rogue-resolver detection
        #[arg(long, value_name = "IP")]
        dhcp_resolver: Option<std::net::Ipv4Addr>,
        /// Emit the summary as JSON instead of a table
        #[arg(long)]
        json: bool,
    },
    /// Print a policy in plain English
    Explain {
        policy: std::path::PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Learn {
            pcap,
            device_mac,
            device_ip,
            device_name,
            aggregate_prefix,
            rate_slack,
            out,
        } => commands::learn(
            &pcap,
            device_mac,
            device_ip,
            device_name,
            aggregate_prefix,
            rate_slack,
            &out,
        ),
        Command::Compile {
            policy,
            format,
            upstream,
            chain,
            out,
        } => commands::compile(&policy, format, upstream, chain, &out),
        Command::Simulate {
            policy,
            pcap,
            log,
            stats,
        } => commands::simulate(&policy, &pcap, &log, &stats),
        Command::Summarize {
            pcap,
            device_mac,
            dhcp_resolver,
            json,
        } => commands::summarize(&pcap, device_mac, dhcp_resolver, json),
        Command::Explain { policy } => commands::explain(&policy),
    };

    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("leash: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
