//! Subcommand implementations.

use std::fmt;
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use leash_core::compile::{compile_policy, emit_dns_forwarder, emit_netfilter, ChainMode, CompileError};
use leash_core::monitor::replay;
use leash_core::policy::{parse_policy, serialize_policy, validate_policy, DevicePolicy};
use leash_core::synth::{synthesize_policy, Aggregation, DeviceSpec, SynthError, SynthOptions};
use leash_core::traffic::{extract_dns, read_capture, summarize_capture, track_flows, PacketRecord};
use leash_core::types::MacAddr;

use crate::io::{read_bytes, read_text, write_atomic};

const DEFAULT_UPSTREAM: Ipv4Addr = Ipv4Addr::new(8, 8, 8, 8);

#[derive(Debug)]
pub enum CliError {
    /// Capture holds nothing usable for the requested device.
    NoDeviceTraffic(String),
    /// Policy cannot be lowered (hostname with no reply rule).
    Join(CompileError),
    /// Malformed input file.
    Data(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::NoDeviceTraffic(_) => 2,
            CliError::Join(_) => 3,
            CliError::Data(_) => 65,
            CliError::Io(_) => 74,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::NoDeviceTraffic(msg) => write!(f, "{msg}"),
            CliError::Join(err) => write!(f, "{err}"),
            CliError::Data(msg) => write!(f, "{msg}"),
            CliError::Io(msg) => write!(f, "{msg}"),
        }
    }
}

fn io_err(path: &Path, err: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {err}", path.display()))
}

/// `--aggregate-prefix` argument: a prefix length or `exact`.
#[derive(Debug, Clone, Copy)]
pub struct AggregateArg(pub Aggregation);

impl FromStr for AggregateArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "exact" {
            return Ok(AggregateArg(Aggregation::Exact));
        }
        let n: u8 = s
            .parse()
            .map_err(|_| format!("expected a prefix length 0-32 or `exact`, got `{s}`"))?;
        if n > 32 {
            return Err(format!("prefix length {n} out of range 0-32"));
        }
        Ok(AggregateArg(Aggregation::Prefix(n)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FormatArg {
    Netfilter,
    Dnsforward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ChainArg {
    NatPrerouting,
    FilterForward,
}

impl From<ChainArg> for ChainMode {
    fn from(arg: ChainArg) -> ChainMode {
        match arg {
            ChainArg::NatPrerouting => ChainMode::NatPrerouting,
            ChainArg::FilterForward => ChainMode::FilterForward,
        }
    }
}

fn load_capture(path: &Path, device: Option<MacAddr>) -> Result<Vec<PacketRecord>, CliError> {
    let bytes = read_bytes(path).map_err(|e| io_err(path, e))?;
    let (records, skipped) = read_capture(&bytes, device)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if skipped.total() > 0 {
        eprintln!(
            "note: skipped {} frame(s) ({} non-IP, {} other devices, {} malformed, {} fragments)",
            skipped.total(),
            skipped.non_ip,
            skipped.other_device,
            skipped.malformed,
            skipped.fragments
        );
    }
    Ok(records)
}

fn load_policy(path: &Path) -> Result<DevicePolicy, CliError> {
    let text = read_text(path).map_err(|e| io_err(path, e))?;
    parse_policy(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
pub fn learn(
    pcap: &Path,
    device_mac: MacAddr,
    device_ip: Option<Ipv4Addr>,
    device_name: Option<String>,
    aggregate: AggregateArg,
    rate_slack: f64,
    out: &Path,
) -> Result<u8, CliError> {
    let records = load_capture(pcap, Some(device_mac))?;
    if records.is_empty() {
        return Err(CliError::NoDeviceTraffic(format!(
            "no traffic for {device_mac} in {}",
            pcap.display()
        )));
    }

    // first frame the device itself sent names its address
    let device_ip = device_ip.or_else(|| {
        records
            .iter()
            .find(|p| p.from_device(device_mac))
            .map(|p| p.src_ip)
    });
    let device_name = device_name.unwrap_or_else(|| {
        format!("device-{}", device_mac.to_string().replace(':', ""))
    });

    let flows = track_flows(&records);
    let dns = extract_dns(&records);
    let duration_us = records.last().map(|p| p.ts_us).unwrap_or(0)
        - records.first().map(|p| p.ts_us).unwrap_or(0);

    let device = DeviceSpec {
        name: device_name,
        mac: device_mac,
        ip: device_ip,
    };
    let options = SynthOptions {
        aggregate: aggregate.0,
        rate_slack,
    };
    let policy = synthesize_policy(&flows, &dns.transactions, &device, duration_us, &options)
        .map_err(|e| match e {
            SynthError::EmptyCapture => CliError::NoDeviceTraffic(format!(
                "no traffic for {device_mac} in {}",
                pcap.display()
            )),
        })?;

    for warning in validate_policy(&policy) {
        eprintln!("warning: {warning}");
    }

    write_atomic(out, serialize_policy(&policy).as_bytes()).map_err(|e| io_err(out, e))?;
    Ok(0)
}

pub fn compile(
    policy_path: &Path,
    format: FormatArg,
    upstream: Option<Ipv4Addr>,
    chain: ChainArg,
    out: &Path,
) -> Result<u8, CliError> {
    let policy = load_policy(policy_path)?;
    let rules = compile_policy(&policy).map_err(CliError::Join)?;
    let text = match format {
        FormatArg::Netfilter => emit_netfilter(&rules, chain.into()),
        FormatArg::Dnsforward => {
            let upstream = upstream
                .or_else(|| std::env::var("LEASH_UPSTREAM").ok().and_then(|v| v.parse().ok()))
                .unwrap_or(DEFAULT_UPSTREAM);
            emit_dns_forwarder(&rules, upstream)
        }
    };
    write_atomic(out, text.as_bytes()).map_err(|e| io_err(out, e))?;
    Ok(0)
}

pub fn simulate(policy_path: &Path, pcap: &Path, log: &Path, stats_path: &Path) -> Result<u8, CliError> {
    let policy = load_policy(policy_path)?;
    let records = load_capture(pcap, Some(policy.mac_addr))?;
    let (verdicts, stats) = replay(&policy, &records)
        .map_err(|e| CliError::Data(format!("{}: {e}", pcap.display())))?;

    let mut log_text = String::new();
    for verdict in &verdicts {
        log_text.push_str(&serde_json::to_string(verdict).expect("verdict serializes"));
        log_text.push('\n');
    }
    write_atomic(log, log_text.as_bytes()).map_err(|e| io_err(log, e))?;

    let mut stats_text = serde_json::to_string_pretty(&stats).expect("stats serialize");
    stats_text.push('\n');
    write_atomic(stats_path, stats_text.as_bytes()).map_err(|e| io_err(stats_path, e))?;

    eprintln!(
        "{} packet(s): {} allowed, {} denied",
        verdicts.len(),
        stats.allowed_total,
        stats.denied_total
    );
    Ok(if stats.denied_total > 0 { 1 } else { 0 })
}

pub fn summarize(
    pcap: &Path,
    device_mac: Option<MacAddr>,
    dhcp_resolver: Option<Ipv4Addr>,
    json: bool,
) -> Result<u8, CliError> {
    let records = load_capture(pcap, device_mac)?;
    let flows = track_flows(&records);
    let dns = extract_dns(&records);
    let summary = summarize_capture(&flows, &dns.transactions, dhcp_resolver);
    if json {
        println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    } else {
        println!("distinct endpoints  {}", summary.distinct_endpoints);
        println!("distinct domains    {}", summary.distinct_domains);
        println!("hardcoded ips       {}", summary.hardcoded_ips);
        println!(
            "rogue resolver      {}",
            if summary.rogue_resolver { "yes" } else { "no" }
        );
    }
    Ok(0)
}

pub fn explain(policy_path: &Path) -> Result<u8, CliError> {
    let policy = load_policy(policy_path)?;
    print!("{}", leash_core::explain_policy(&policy));
    Ok(0)
}
