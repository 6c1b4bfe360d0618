//! Byte-level Ethernet/IPv4/TCP/UDP/DNS frame builders.

use std::net::Ipv4Addr;

use leash_core::types::{MacAddr, TcpFlags};

use crate::Host;

pub fn ethernet(src: MacAddr, dst: MacAddr, ethertype: u16, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + payload.len());
    out.extend_from_slice(&dst.0);
    out.extend_from_slice(&src.0);
    out.extend_from_slice(&ethertype.to_be_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn ipv4(src: Ipv4Addr, dst: Ipv4Addr, proto: u8, payload: &[u8]) -> Vec<u8> {
    let total = 20 + payload.len();
    let mut out = Vec::with_capacity(total);
    out.push(0x45);
    out.push(0);
    out.extend_from_slice(&(total as u16).to_be_bytes());
    out.extend_from_slice(&[0, 0, 0x40, 0, 64, proto, 0, 0]); // DF, no fragment
    out.extend_from_slice(&src.octets());
    out.extend_from_slice(&dst.octets());
    out.extend_from_slice(payload);
    out
}

pub fn tcp_segment(sport: u16, dport: u16, flags: TcpFlags, payload_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + payload_len);
    out.extend_from_slice(&sport.to_be_bytes());
    out.extend_from_slice(&dport.to_be_bytes());
    out.extend_from_slice(&[0; 8]); // seq/ack
    out.push(0x50); // data offset 5
    out.push(flags.0);
    out.extend_from_slice(&[0x20, 0x00, 0, 0]); // window, checksum
    out.resize(20 + payload_len, 0xaa);
    out
}

pub fn udp_datagram(sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + payload.len());
    out.extend_from_slice(&sport.to_be_bytes());
    out.extend_from_slice(&dport.to_be_bytes());
    out.extend_from_slice(&((payload.len() + 8) as u16).to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(payload);
    out
}

fn dns_name(out: &mut Vec<u8>, name: &str) {
    for label in name.split('.') {
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.push(0);
}

pub fn dns_query_payload(txid: u16, qname: &str, qtype: u16) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&txid.to_be_bytes());
    out.extend_from_slice(&[0x01, 0x00]); // standard query, RD
    out.extend_from_slice(&[0, 1, 0, 0, 0, 0, 0, 0]);
    dns_name(&mut out, qname);
    out.extend_from_slice(&qtype.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out
}

/// Builds a response; answers reference the question via a compression
/// pointer, matching what real resolvers emit.
pub fn dns_response_payload(
    txid: u16,
    qname: &str,
    qtype: u16,
    answers: &[(Ipv4Addr, u32)],
) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&txid.to_be_bytes());
    out.extend_from_slice(&[0x81, 0x80]); // response, RD+RA
    out.extend_from_slice(&[0, 1]);
    out.extend_from_slice(&(answers.len() as u16).to_be_bytes());
    out.extend_from_slice(&[0, 0, 0, 0]);
    dns_name(&mut out, qname);
    out.extend_from_slice(&qtype.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    for (addr, ttl) in answers {
        out.extend_from_slice(&[0xc0, 0x0c]);
        out.extend_from_slice(&1u16.to_be_bytes()); // type A
        out.extend_from_slice(&1u16.to_be_bytes()); // class IN
        out.extend_from_slice(&ttl.to_be_bytes());
        out.extend_from_slice(&4u16.to_be_bytes());
        out.extend_from_slice(&addr.octets());
    }
    out
}

/// Outbound TCP packet from the device toward a remote, via the
/// gateway's MAC.
pub fn tcp_out(
    device: &Host,
    gw_mac: MacAddr,
    dst: Ipv4Addr,
    sport: u16,
    dport: u16,
    flags: TcpFlags,
    payload_len: usize,
) -> Vec<u8> {
    ethernet(
        device.mac,
        gw_mac,
        0x0800,
        &ipv4(device.ip, dst, 6, &tcp_segment(sport, dport, flags, payload_len)),
    )
}

/// Inbound TCP packet from a remote back to the device.
pub fn tcp_in(
    device: &Host,
    gw_mac: MacAddr,
    src: Ipv4Addr,
    sport: u16,
    dport: u16,
    flags: TcpFlags,
    payload_len: usize,
) -> Vec<u8> {
    ethernet(
        gw_mac,
        device.mac,
        0x0800,
        &ipv4(src, device.ip, 6, &tcp_segment(sport, dport, flags, payload_len)),
    )
}

pub fn udp_out(
    device: &Host,
    gw_mac: MacAddr,
    dst: Ipv4Addr,
    sport: u16,
    dport: u16,
    payload: &[u8],
) -> Vec<u8> {
    ethernet(
        device.mac,
        gw_mac,
        0x0800,
        &ipv4(device.ip, dst, 17, &udp_datagram(sport, dport, payload)),
    )
}

pub fn udp_in(
    device: &Host,
    gw_mac: MacAddr,
    src: Ipv4Addr,
    sport: u16,
    dport: u16,
    payload: &[u8],
) -> Vec<u8> {
    ethernet(
        gw_mac,
        device.mac,
        0x0800,
        &ipv4(src, device.ip, 17, &udp_datagram(sport, dport, payload)),
    )
}

pub fn dns_query_out(
    device: &Host,
    gw_mac: MacAddr,
    resolver: Ipv4Addr,
    sport: u16,
    txid: u16,
    qname: &str,
) -> Vec<u8> {
    udp_out(
        device,
        gw_mac,
        resolver,
        sport,
        53,
        &dns_query_payload(txid, qname, 1),
    )
}

pub fn dns_response_in(
    device: &Host,
    gw_mac: MacAddr,
    resolver: Ipv4Addr,
    dport: u16,
    txid: u16,
    qname: &str,
    answers: &[(Ipv4Addr, u32)],
) -> Vec<u8> {
    udp_in(
        device,
        gw_mac,
        resolver,
        53,
        dport,
        &dns_response_payload(txid, qname, 1, answers),
    )
}
