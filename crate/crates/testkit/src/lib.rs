//! Test support for the leash workspace: synthetic frame and capture
//! construction, canned device traffic profiles, brute-force oracles,
//! and proptest strategies.
//!
//! Everything here is deliberately independent of the production code
//! paths it is used to check: captures are assembled byte by byte and
//! oracle answers are computed by direct enumeration.

pub mod frames;
pub mod oracle;
pub mod pcapgen;
pub mod profiles;
pub mod strategies;

/// The reference weather-station policy document used by golden tests.
pub const WEATHER_STATION_POLICY_JSON: &str = r#"{"Netatmo Weather Station": {
  "MACAddr": "70:ee:50:13:ab:cd",
  "IPAddr": "172.16.1.2",
  "AllowedDNSQueries": [
    {"type": "A", "query": "netcom.netatmo.net", "resolver": "192.168.1.1"}
  ],
  "AllowedDNSReplies": [
    {"type": "A", "query": "netcom.netatmo.net", "answers": "62.210.92.0/24"}
  ],
  "AllowedConnections": [
    {"family": "IPv4", "dest": "netcom.netatmo.net", "proto": "TCP", "dstport": "25050", "freq": "6/hr"}
  ]
 }
}
"#;

use std::net::Ipv4Addr;

use leash_core::types::MacAddr;

/// One endpoint on the synthetic network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Host {
    pub mac: MacAddr,
    pub ip: Ipv4Addr,
}

impl Host {
    pub fn new(mac: &str, ip: &str) -> Host {
        Host {
            mac: mac.parse().expect("valid test mac"),
            ip: ip.parse().expect("valid test ip"),
        }
    }
}

/// A timestamped Ethernet frame, possibly tagged as attack traffic.
#[derive(Debug, Clone)]
pub struct Frame {
    pub ts_us: u64,
    pub bytes: Vec<u8>,
    pub injected: bool,
}

impl Frame {
    pub fn legit(ts_us: u64, bytes: Vec<u8>) -> Frame {
        Frame {
            ts_us,
            bytes,
            injected: false,
        }
    }

    pub fn attack(ts_us: u64, bytes: Vec<u8>) -> Frame {
        Frame {
            ts_us,
            bytes,
            injected: true,
        }
    }
}

/// Stable merge of frame sequences by timestamp.
pub fn merge_frames(mut frames: Vec<Frame>) -> Vec<Frame> {
    frames.sort_by_key(|f| f.ts_us);
    frames
}
