//! Least-privilege network policies for consumer IoT devices.
//!
//! Consumer IoT devices talk to a small, predictable set of endpoints.
//! This crate turns that predictability into enforcement:
//!
//! - [`policy`] defines the per-device whitelist document (allowed DNS
//!   queries, allowed DNS replies, allowed connections) and renders it
//!   for humans;
//! - [`traffic`] parses classic pcap captures into normalized packet
//!   records, tracks flows and DNS transactions, and summarizes a
//!   device's network footprint;
//! - [`synth`] learns a minimal policy from observed traffic;
//! - [`compile`] lowers a policy to firewall commands and DNS-forwarder
//!   configuration;
//! - [`monitor`] replays packet streams against a policy as a stateful
//!   reference enforcement point, producing per-packet verdicts and
//!   match statistics.
//!
//! The crate is `no_std` (with `alloc`): it works over in-memory byte
//! slices and leaves file and process concerns to callers.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod compile;
pub mod monitor;
pub mod policy;
pub mod synth;
pub mod traffic;
pub mod types;

pub use policy::{
    explain_policy, parse_policy, serialize_policy, validate_policy, ConnectionRule, Dest,
    DevicePolicy, DnsQueryRule, DnsReplyRule, PolicyError, Warning,
};
pub use types::{
    BandwidthSpec, Cidr, DnsName, GrammarError, L4Proto, MacAddr, PolicyEntryId, Proto, RateSpec,
    RecordType, TcpFlags, TimeUnit, TimeWindow,
};
