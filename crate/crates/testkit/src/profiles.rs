//! Canned device traffic profiles: a weather station doing periodic
//! uploads, a scale doing event-driven uploads, and a bulb holding one
//! long-lived TCP connection. Plus a Mirai-style attack augmentation.

use std::net::Ipv4Addr;

use leash_core::types::{MacAddr, TcpFlags};

use crate::frames::*;
use crate::{merge_frames, Frame, Host};

/// A synthetic capture for one device plus everything needed to learn
/// and replay a policy for it.
#[derive(Debug, Clone)]
pub struct Profile {
    pub name: &'static str,
    pub device: Host,
    pub gw_mac: MacAddr,
    pub resolver: Ipv4Addr,
    pub frames: Vec<Frame>,
}

impl Profile {
    pub fn duration_us(&self) -> u64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(first), Some(last)) => last.ts_us - first.ts_us,
            _ => 0,
        }
    }
}

fn gw_mac() -> MacAddr {
    "02:00:00:00:00:01".parse().unwrap()
}

/// One full upload cycle: lookup, answer, TCP connect, payload, close.
#[allow(clippy::too_many_arguments)]
fn upload_cycle(
    frames: &mut Vec<Frame>,
    device: &Host,
    resolver: Ipv4Addr,
    qname: &str,
    server: Ipv4Addr,
    ttl: u32,
    base_us: u64,
    sport: u16,
    dport: u16,
    txid: u16,
) {
    let gw = gw_mac();
    frames.push(Frame::legit(
        base_us,
        dns_query_out(device, gw, resolver, sport, txid, qname),
    ));
    frames.push(Frame::legit(
        base_us + 50_000,
        dns_response_in(device, gw, resolver, sport, txid, qname, &[(server, ttl)]),
    ));
    frames.push(Frame::legit(
        base_us + 100_000,
        tcp_out(device, gw, server, sport, dport, TcpFlags::SYN, 0),
    ));
    frames.push(Frame::legit(
        base_us + 150_000,
        tcp_in(device, gw, server, dport, sport, TcpFlags(TcpFlags::SYN.0 | TcpFlags::ACK.0), 0),
    ));
    frames.push(Frame::legit(
        base_us + 200_000,
        tcp_out(device, gw, server, sport, dport, TcpFlags(TcpFlags::ACK.0 | TcpFlags::PSH.0), 600),
    ));
    frames.push(Frame::legit(
        base_us + 250_000,
        tcp_in(device, gw, server, dport, sport, TcpFlags::ACK, 80),
    ));
    frames.push(Frame::legit(
        base_us + 300_000,
        tcp_out(device, gw, server, sport, dport, TcpFlags(TcpFlags::FIN.0 | TcpFlags::ACK.0), 0),
    ));
    frames.push(Frame::legit(
        base_us + 350_000,
        tcp_in(device, gw, server, dport, sport, TcpFlags(TcpFlags::FIN.0 | TcpFlags::ACK.0), 0),
    ));
    frames.push(Frame::legit(
        base_us + 400_000,
        tcp_out(device, gw, server, sport, dport, TcpFlags::ACK, 0),
    ));
}

/// Weather station: wakes every 10 minutes for an hour, resolves its
/// upload host, and pushes a reading over TCP 25050.
pub fn weather_station() -> Profile {
    let device = Host::new("70:ee:50:13:ab:cd", "172.16.1.2");
    let resolver: Ipv4Addr = "192.168.1.1".parse().unwrap();
    let server: Ipv4Addr = "62.210.92.5".parse().unwrap();
    let mut frames = Vec::new();
    for i in 0..6u64 {
        upload_cycle(
            &mut frames,
            &device,
            resolver,
            "netcom.netatmo.net",
            server,
            600,
            i * 600_000_000,
            50_000 + i as u16,
            25050,
            100 + i as u16,
        );
    }
    Profile {
        name: "weather-station",
        device,
        gw_mac: gw_mac(),
        resolver,
        frames: merge_frames(frames),
    }
}

/// Scale: two user-triggered uploads in a twenty-minute capture.
pub fn scale() -> Profile {
    let device = Host::new("a4:5e:60:aa:bb:01", "172.16.1.3");
    let resolver: Ipv4Addr = "192.168.1.1".parse().unwrap();
    let server: Ipv4Addr = "198.51.100.7".parse().unwrap();
    let mut frames = Vec::new();
    for (i, base) in [120_000_000u64, 900_000_000].iter().enumerate() {
        upload_cycle(
            &mut frames,
            &device,
            resolver,
            "sync.scale.example.com",
            server,
            300,
            *base,
            52_000 + i as u16,
            443,
            200 + i as u16,
        );
    }
    Profile {
        name: "scale",
        device,
        gw_mac: gw_mac(),
        resolver,
        frames: merge_frames(frames),
    }
}

/// Bulb: one long-lived TCP connection to its broker with periodic
/// keepalives in both directions.
pub fn bulb() -> Profile {
    let device = Host::new("d0:73:d5:cc:dd:02", "172.16.1.4");
    let resolver: Ipv4Addr = "192.168.1.1".parse().unwrap();
    let server: Ipv4Addr = "203.0.113.50".parse().unwrap();
    let gw = gw_mac();
    let qname = "broker.bulbs.example.net";
    let sport = 53_000u16;
    let dport = 56_700u16;

    let mut frames = vec![
        Frame::legit(0, dns_query_out(&device, gw, resolver, sport, 300, qname)),
        Frame::legit(
            50_000,
            dns_response_in(&device, gw, resolver, sport, 300, qname, &[(server, 86_400)]),
        ),
        Frame::legit(
            100_000,
            tcp_out(&device, gw, server, sport, dport, TcpFlags::SYN, 0),
        ),
        Frame::legit(
            150_000,
            tcp_in(&device, gw, server, dport, sport, TcpFlags(TcpFlags::SYN.0 | TcpFlags::ACK.0), 0),
        ),
    ];
    for i in 0..60u64 {
        let t = 1_000_000 + i * 30_000_000;
        frames.push(Frame::legit(
            t,
            tcp_out(&device, gw, server, sport, dport, TcpFlags(TcpFlags::ACK.0 | TcpFlags::PSH.0), 48),
        ));
        frames.push(Frame::legit(
            t + 400_000,
            tcp_in(&device, gw, server, dport, sport, TcpFlags(TcpFlags::ACK.0 | TcpFlags::PSH.0), 64),
        ));
    }
    Profile {
        name: "bulb",
        device,
        gw_mac: gw_mac(),
        resolver,
        frames: merge_frames(frames),
    }
}

pub fn all_profiles() -> Vec<Profile> {
    vec![weather_station(), scale(), bulb()]
}

/// Counts of injected attack packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackLoad {
    pub telnet_scans: usize,
    pub dns_flood: usize,
}

impl AttackLoad {
    pub fn total(&self) -> usize {
        self.telnet_scans + self.dns_flood
    }
}

/// Interleaves a Mirai-style compromise into a profile's capture:
/// telnet SYN scans to `scan_hosts` distinct addresses and a flood of
/// lookups for names the policy has never seen.
pub fn mirai_augmentation(profile: &Profile, scan_hosts: usize, flood_queries: usize) -> (Vec<Frame>, AttackLoad) {
    let device = profile.device;
    let gw = profile.gw_mac;
    let start = profile.frames.first().map_or(0, |f| f.ts_us) + 1_000;
    let span = profile.duration_us().max(1_000_000);
    let total = (scan_hosts + flood_queries) as u64;

    let mut frames = profile.frames.clone();
    for i in 0..scan_hosts {
        let ts = start + span * i as u64 / total;
        let dst = Ipv4Addr::new(198, 18, (i / 250) as u8, (i % 250) as u8 + 1);
        frames.push(Frame::attack(
            ts,
            tcp_out(&device, gw, dst, 60_000 + (i % 5_000) as u16, 23, TcpFlags::SYN, 0),
        ));
    }
    for i in 0..flood_queries {
        let ts = start + span * (scan_hosts + i) as u64 / total;
        let qname = format!("bot{i}.evil.example");
        frames.push(Frame::attack(
            ts,
            dns_query_out(&device, gw, profile.resolver, 61_000 + (i % 4_000) as u16, 40_000 + i as u16, &qname),
        ));
    }
    (
        merge_frames(frames),
        AttackLoad {
            telnet_scans: scan_hosts,
            dns_flood: flood_queries,
        },
    )
}

/// A capture matching the reference weather-station footprint row:
/// one domain, four upload servers plus the resolver (five endpoints),
/// and no hardcoded addresses.
pub fn weather_station_footprint_capture() -> Profile {
    let device = Host::new("70:ee:50:13:ab:cd", "172.16.1.2");
    let resolver: Ipv4Addr = "192.168.1.1".parse().unwrap();
    let servers: [Ipv4Addr; 4] = [
        "62.210.92.5".parse().unwrap(),
        "62.210.92.17".parse().unwrap(),
        "62.210.93.20".parse().unwrap(),
        "62.210.94.31".parse().unwrap(),
    ];
    let gw = gw_mac();
    let mut frames = Vec::new();
    let answers: Vec<(Ipv4Addr, u32)> = servers.iter().map(|s| (*s, 600)).collect();
    frames.push(Frame::legit(
        0,
        dns_query_out(&device, gw, resolver, 50_000, 1, "netcom.netatmo.net"),
    ));
    frames.push(Frame::legit(
        50_000,
        dns_response_in(&device, gw, resolver, 50_000, 1, "netcom.netatmo.net", &answers),
    ));
    for (i, server) in servers.iter().enumerate() {
        frames.push(Frame::legit(
            1_000_000 + i as u64 * 60_000_000,
            tcp_out(&device, gw, *server, 50_100 + i as u16, 25050, TcpFlags::SYN, 0),
        ));
    }
    Profile {
        name: "weather-station-footprint",
        device,
        gw_mac: gw,
        resolver,
        frames: merge_frames(frames),
    }
}
