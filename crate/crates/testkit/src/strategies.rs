//! proptest strategies: random valid policies, and random
//! (policy, trace) worlds for monitor and compiler properties.

use std::net::Ipv4Addr;

use proptest::prelude::*;

use leash_core::policy::{ConnectionRule, Dest, DevicePolicy, DnsQueryRule, DnsReplyRule};
use leash_core::types::{
    BandwidthSpec, Cidr, DnsName, L4Proto, MacAddr, RateSpec, RecordType, TcpFlags, TimeUnit,
    TimeWindow,
};

use crate::frames::*;
use crate::{merge_frames, Frame, Host};

pub fn dns_name_strategy() -> impl Strategy<Value = DnsName> {
    "[a-z0-9]{1,8}(\\.[a-z0-9]{1,8}){1,2}".prop_map(|s| s.parse().unwrap())
}

pub fn mac_strategy() -> impl Strategy<Value = MacAddr> {
    any::<[u8; 6]>().prop_map(MacAddr)
}

pub fn ipv4_strategy() -> impl Strategy<Value = Ipv4Addr> {
    any::<u32>().prop_map(Ipv4Addr::from)
}

pub fn cidr_strategy() -> impl Strategy<Value = Cidr> {
    (any::<u32>(), 0u8..=32).prop_map(|(ip, len)| Cidr::truncate(Ipv4Addr::from(ip), len))
}

fn time_unit_strategy() -> impl Strategy<Value = TimeUnit> {
    prop_oneof![
        Just(TimeUnit::Second),
        Just(TimeUnit::Minute),
        Just(TimeUnit::Hour),
        Just(TimeUnit::Day),
        Just(TimeUnit::Week),
    ]
}

pub fn rate_strategy() -> impl Strategy<Value = RateSpec> {
    (1u32..10_000, time_unit_strategy()).prop_map(|(count, unit)| RateSpec { count, unit })
}

pub fn bandwidth_strategy() -> impl Strategy<Value = BandwidthSpec> {
    (1u64..10_000_000_000, time_unit_strategy())
        .prop_map(|(bytes, unit)| BandwidthSpec { bytes, unit })
}

fn window_strategy() -> impl Strategy<Value = TimeWindow> {
    (0u16..1440, 0u16..1440).prop_map(|(start_min, end_min)| TimeWindow { start_min, end_min })
}

fn record_type_strategy() -> impl Strategy<Value = RecordType> {
    prop_oneof![
        Just(RecordType::A),
        Just(RecordType::Aaaa),
        Just(RecordType::Cname),
        Just(RecordType::Txt),
        Just(RecordType::Mx),
        Just(RecordType::Srv),
    ]
}

fn query_rule_strategy() -> impl Strategy<Value = DnsQueryRule> {
    (record_type_strategy(), dns_name_strategy(), ipv4_strategy()).prop_map(
        |(qtype, qname, resolver)| DnsQueryRule {
            qtype,
            qname,
            resolver,
        },
    )
}

/// Any structurally valid policy: every hostname destination is backed
/// by a query rule, all grammars hold by construction.
pub fn policy_strategy() -> impl Strategy<Value = DevicePolicy> {
    let base = (
        "[A-Za-z][A-Za-z0-9 ._-]{0,20}",
        mac_strategy(),
        proptest::option::of(ipv4_strategy()),
        proptest::collection::vec(query_rule_strategy(), 0..4),
    );
    base.prop_flat_map(|(device_name, mac_addr, ip_addr, queries)| {
        let qnames: Vec<DnsName> = queries.iter().map(|q| q.qname.clone()).collect();

        let reply_qname = if qnames.is_empty() {
            dns_name_strategy().boxed()
        } else {
            prop_oneof![
                proptest::sample::select(qnames.clone()),
                dns_name_strategy()
            ]
            .boxed()
        };
        let replies = proptest::collection::vec(
            (record_type_strategy(), reply_qname, cidr_strategy()).prop_map(
                |(qtype, qname, answers)| DnsReplyRule {
                    qtype,
                    qname,
                    answers,
                },
            ),
            0..4,
        );

        let dest = if qnames.is_empty() {
            cidr_strategy().prop_map(Dest::Net).boxed()
        } else {
            prop_oneof![
                proptest::sample::select(qnames).prop_map(Dest::Host),
                cidr_strategy().prop_map(Dest::Net),
            ]
            .boxed()
        };
        let connections = proptest::collection::vec(
            (
                dest,
                prop_oneof![Just(L4Proto::Tcp), Just(L4Proto::Udp)],
                1u16..=65535,
                proptest::option::of(rate_strategy()),
                proptest::option::of(bandwidth_strategy()),
                proptest::option::of(1u32..9_000),
                proptest::option::of(window_strategy()),
            )
                .prop_map(
                    |(dest, proto, dstport, freq, max_bw_out, max_packet_size, schedule)| {
                        ConnectionRule {
                            dest,
                            proto,
                            dstport,
                            freq,
                            max_bw_out,
                            max_packet_size,
                            schedule,
                        }
                    },
                ),
            0..4,
        );

        (
            Just(device_name),
            Just(mac_addr),
            Just(ip_addr),
            Just(queries),
            replies,
            connections,
        )
            .prop_map(
                |(device_name, mac_addr, ip_addr, queries, replies, connections)| DevicePolicy {
                    device_name,
                    mac_addr,
                    ip_addr,
                    allowed_dns_queries: queries,
                    allowed_dns_replies: replies,
                    allowed_connections: connections,
                },
            )
    })
}

// ---------------------------------------------------------------------
// (policy, trace) worlds for monitor and compiler properties
// ---------------------------------------------------------------------

const HOSTNAMES: [&str; 3] = [
    "api.dev.example.com",
    "sync.dev.example.com",
    "cdn.dev.example.net",
];
const LISTED_PORTS: [u16; 3] = [443, 8883, 25050];
const UNLISTED_PORTS: [u16; 4] = [21, 22, 80, 8080];

/// A generated policy plus a frame trace exercising it.
#[derive(Debug, Clone)]
pub struct World {
    pub policy: DevicePolicy,
    pub device: Host,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    /// Lookup of hostname `h`, then up to `conns` connections to its
    /// answers, with data and replies.
    Session,
    /// Lookup of a name the policy does not list.
    UnlistedLookup,
    /// Connection to an address range the policy does not list.
    UnlistedConn,
    /// Lookup of a listed name via the wrong resolver.
    WrongResolver,
    /// Unsolicited inbound SYN from a random remote.
    UnsolicitedInbound,
    /// Connection matching the literal (non-hostname) rule.
    LiteralConn,
    /// Connection to a listed answer address without a fresh lookup;
    /// only generated in non-strict worlds since the static firewall
    /// range admits it while the monitor's binding table does not.
    StaleConn,
}

#[derive(Debug, Clone, Copy)]
struct EventSeed {
    kind_pick: u8,
    host_pick: u8,
    conns: u8,
    gap_s: u16,
    with_reply: bool,
}

fn event_seed_strategy() -> impl Strategy<Value = EventSeed> {
    (any::<u8>(), any::<u8>(), 0u8..3, 1u16..120, any::<bool>()).prop_map(
        |(kind_pick, host_pick, conns, gap_s, with_reply)| EventSeed {
            kind_pick,
            host_pick,
            conns,
            gap_s,
            with_reply,
        },
    )
}

fn answers_for(host_idx: usize) -> Vec<Ipv4Addr> {
    let base = 8 * host_idx as u8;
    vec![
        Ipv4Addr::new(203, 0, 113, base + 1),
        Ipv4Addr::new(203, 0, 113, base + 2),
    ]
}

fn world_policy(hosts: usize, freq: Option<RateSpec>) -> (DevicePolicy, Host, Ipv4Addr) {
    let device = Host::new("aa:bb:cc:00:00:01", "172.16.1.9");
    let resolver: Ipv4Addr = "192.168.1.1".parse().unwrap();
    let mut policy = DevicePolicy::deny_all("Generated Device", device.mac);
    policy.ip_addr = Some(device.ip);
    for i in 0..hosts {
        let qname: DnsName = HOSTNAMES[i].parse().unwrap();
        policy.allowed_dns_queries.push(DnsQueryRule {
            qtype: RecordType::A,
            qname: qname.clone(),
            resolver,
        });
        policy.allowed_dns_replies.push(DnsReplyRule {
            qtype: RecordType::A,
            qname: qname.clone(),
            answers: Cidr::truncate(answers_for(i)[0], 29),
        });
        policy.allowed_connections.push(ConnectionRule {
            dest: Dest::Host(qname),
            proto: L4Proto::Tcp,
            dstport: LISTED_PORTS[i],
            freq,
            max_bw_out: None,
            max_packet_size: None,
            schedule: None,
        });
    }
    // one literal-destination rule
    policy.allowed_connections.push(ConnectionRule {
        dest: Dest::Net("198.51.100.0/24".parse().unwrap()),
        proto: L4Proto::Udp,
        dstport: 9000,
        freq: None,
        max_bw_out: None,
        max_packet_size: None,
        schedule: None,
    });
    (policy, device, resolver)
}

fn build_world(hosts: usize, freq: Option<RateSpec>, seeds: &[EventSeed], strict: bool) -> World {
    let (policy, device, resolver) = world_policy(hosts, freq);
    let gw: MacAddr = "02:00:00:00:00:01".parse().unwrap();
    let wrong_resolver: Ipv4Addr = "8.8.8.8".parse().unwrap();
    let mut frames: Vec<Frame> = Vec::new();
    let mut clock: u64 = 1_000_000;

    for (i, seed) in seeds.iter().enumerate() {
        clock += seed.gap_s as u64 * 1_000_000;
        let host_idx = seed.host_pick as usize % hosts;
        let qname = HOSTNAMES[host_idx];
        let answers = answers_for(host_idx);
        let kinds: &[EventKind] = if strict {
            &[
                EventKind::Session,
                EventKind::Session,
                EventKind::UnlistedLookup,
                EventKind::UnlistedConn,
                EventKind::WrongResolver,
                EventKind::UnsolicitedInbound,
                EventKind::LiteralConn,
            ]
        } else {
            &[
                EventKind::Session,
                EventKind::Session,
                EventKind::UnlistedLookup,
                EventKind::UnlistedConn,
                EventKind::WrongResolver,
                EventKind::UnsolicitedInbound,
                EventKind::LiteralConn,
                EventKind::StaleConn,
            ]
        };
        let kind = kinds[seed.kind_pick as usize % kinds.len()];
        let txid = 1000 + i as u16;
        let sport = 20_000 + (i as u16) * 8;

        match kind {
            EventKind::Session => {
                let records: Vec<(Ipv4Addr, u32)> = answers.iter().map(|a| (*a, 600)).collect();
                frames.push(Frame::legit(
                    clock,
                    dns_query_out(&device, gw, resolver, sport, txid, qname),
                ));
                frames.push(Frame::legit(
                    clock + 1_000,
                    dns_response_in(&device, gw, resolver, sport, txid, qname, &records),
                ));
                for j in 0..seed.conns {
                    let t = clock + 100_000 + j as u64 * 2_000_000;
                    let dst = answers[j as usize % answers.len()];
                    let cport = sport + 1 + j as u16;
                    let port = LISTED_PORTS[host_idx];
                    frames.push(Frame::legit(
                        t,
                        tcp_out(&device, gw, dst, cport, port, TcpFlags::SYN, 0),
                    ));
                    if seed.with_reply {
                        frames.push(Frame::legit(
                            t + 10_000,
                            tcp_in(
                                &device,
                                gw,
                                dst,
                                port,
                                cport,
                                TcpFlags(TcpFlags::SYN.0 | TcpFlags::ACK.0),
                                0,
                            ),
                        ));
                        frames.push(Frame::legit(
                            t + 20_000,
                            tcp_out(&device, gw, dst, cport, port, TcpFlags::ACK, 220),
                        ));
                    }
                }
            }
            EventKind::UnlistedLookup => {
                let name = format!("junk{i}.evil.example");
                frames.push(Frame::legit(
                    clock,
                    dns_query_out(&device, gw, resolver, sport, txid, &name),
                ));
            }
            EventKind::UnlistedConn => {
                let dst = Ipv4Addr::new(198, 18, (i % 200) as u8, 7);
                let port = UNLISTED_PORTS[i % UNLISTED_PORTS.len()];
                frames.push(Frame::legit(
                    clock,
                    tcp_out(&device, gw, dst, sport, port, TcpFlags::SYN, 0),
                ));
            }
            EventKind::WrongResolver => {
                frames.push(Frame::legit(
                    clock,
                    dns_query_out(&device, gw, wrong_resolver, sport, txid, qname),
                ));
            }
            EventKind::UnsolicitedInbound => {
                let src = Ipv4Addr::new(198, 18, 99, (i % 200) as u8 + 1);
                frames.push(Frame::legit(
                    clock,
                    tcp_in(&device, gw, src, 4444, sport, TcpFlags::SYN, 0),
                ));
            }
            EventKind::LiteralConn => {
                let dst = Ipv4Addr::new(198, 51, 100, (i % 250) as u8 + 1);
                frames.push(Frame::legit(
                    clock,
                    udp_out(&device, gw, dst, sport, 9000, &[0u8; 24]),
                ));
            }
            EventKind::StaleConn => {
                frames.push(Frame::legit(
                    clock,
                    tcp_out(
                        &device,
                        gw,
                        answers[0],
                        sport,
                        LISTED_PORTS[host_idx],
                        TcpFlags::SYN,
                        0,
                    ),
                ));
            }
        }
    }

    World {
        policy,
        device,
        frames: merge_frames(frames),
    }
}

/// Random (policy, trace) pairs. Strict worlds only connect to listed
/// answers right after resolving them, so the monitor's binding table
/// and the compiled rules agree; non-strict worlds add stale
/// connections that only a binding-aware monitor refuses.
pub fn world_strategy(strict: bool) -> impl Strategy<Value = World> {
    (
        1usize..=3,
        proptest::option::of((1u32..4, prop_oneof![Just(TimeUnit::Minute), Just(TimeUnit::Hour)])),
        proptest::collection::vec(event_seed_strategy(), 5..40),
    )
        .prop_map(move |(hosts, freq, seeds)| {
            let freq = freq.map(|(count, unit)| RateSpec { count, unit });
            build_world(hosts, freq, &seeds, strict)
        })
}

/// Benign device behavior only: resolved uploads, literal-destination
/// traffic, unanswered lookups, replies on live flows. Self-consistent
/// learning material.
pub fn benign_trace_strategy() -> impl Strategy<Value = (Host, Vec<Frame>)> {
    proptest::collection::vec(
        (0u8..4, 0u8..3, 0u8..3, 1u16..400, any::<bool>()),
        4..30,
    )
    .prop_map(|seeds| {
        let device = Host::new("aa:bb:cc:00:00:02", "172.16.1.10");
        let gw: MacAddr = "02:00:00:00:00:01".parse().unwrap();
        let resolver: Ipv4Addr = "192.168.1.1".parse().unwrap();
        let mut frames: Vec<Frame> = Vec::new();
        let mut clock = 1_000_000u64;

        for (i, (kind, host_pick, conns, gap_s, with_reply)) in seeds.iter().enumerate() {
            clock += *gap_s as u64 * 1_000_000;
            let host_idx = *host_pick as usize % HOSTNAMES.len();
            let qname = HOSTNAMES[host_idx];
            let answers = answers_for(host_idx);
            let txid = 2_000 + i as u16;
            let sport = 30_000 + (i as u16) * 8;
            match kind % 4 {
                0 | 1 => {
                    // resolve then upload
                    let records: Vec<(Ipv4Addr, u32)> = answers.iter().map(|a| (*a, 600)).collect();
                    frames.push(Frame::legit(
                        clock,
                        dns_query_out(&device, gw, resolver, sport, txid, qname),
                    ));
                    frames.push(Frame::legit(
                        clock + 1_000,
                        dns_response_in(&device, gw, resolver, sport, txid, qname, &records),
                    ));
                    for j in 0..*conns {
                        let t = clock + 50_000 + j as u64 * 3_000_000;
                        let dst = answers[j as usize % answers.len()];
                        let cport = sport + 1 + j as u16;
                        let port = LISTED_PORTS[host_idx];
                        frames.push(Frame::legit(
                            t,
                            tcp_out(&device, gw, dst, cport, port, TcpFlags::SYN, 0),
                        ));
                        if *with_reply {
                            frames.push(Frame::legit(
                                t + 8_000,
                                tcp_in(
                                    &device,
                                    gw,
                                    dst,
                                    port,
                                    cport,
                                    TcpFlags(TcpFlags::SYN.0 | TcpFlags::ACK.0),
                                    0,
                                ),
                            ));
                            frames.push(Frame::legit(
                                t + 16_000,
                                tcp_out(&device, gw, dst, cport, port, TcpFlags(TcpFlags::ACK.0 | TcpFlags::PSH.0), 180),
                            ));
                        }
                    }
                }
                2 => {
                    // hardcoded destination
                    let dst = Ipv4Addr::new(198, 51, 100, (i % 250) as u8 + 1);
                    frames.push(Frame::legit(
                        clock,
                        udp_out(&device, gw, dst, sport, 9000, &[0u8; 32]),
                    ));
                    if *with_reply {
                        frames.push(Frame::legit(
                            clock + 5_000,
                            udp_in(&device, gw, dst, 9000, sport, &[0u8; 16]),
                        ));
                    }
                }
                _ => {
                    // lookup that never gets an answer
                    frames.push(Frame::legit(
                        clock,
                        dns_query_out(&device, gw, resolver, sport, txid, qname),
                    ));
                }
            }
        }
        (device, merge_frames(frames))
    })
}
