//! Classic pcap emission, in either byte order, from timestamped frames.

use crate::Frame;

const PCAP_MAGIC: u32 = 0xa1b2_c3d4;

fn header(le: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(24);
    let w32 = |out: &mut Vec<u8>, v: u32| {
        out.extend_from_slice(&if le { v.to_le_bytes() } else { v.to_be_bytes() })
    };
    let w16 = |out: &mut Vec<u8>, v: u16| {
        out.extend_from_slice(&if le { v.to_le_bytes() } else { v.to_be_bytes() })
    };
    w32(&mut out, PCAP_MAGIC);
    w16(&mut out, 2);
    w16(&mut out, 4);
    w32(&mut out, 0); // thiszone
    w32(&mut out, 0); // sigfigs
    w32(&mut out, 65535); // snaplen
    w32(&mut out, 1); // Ethernet
    out
}

fn emit(frames: &[Frame], le: bool) -> Vec<u8> {
    let mut out = header(le);
    let w32 = |out: &mut Vec<u8>, v: u32| {
        out.extend_from_slice(&if le { v.to_le_bytes() } else { v.to_be_bytes() })
    };
    for frame in frames {
        w32(&mut out, (frame.ts_us / 1_000_000) as u32);
        w32(&mut out, (frame.ts_us % 1_000_000) as u32);
        w32(&mut out, frame.bytes.len() as u32);
        w32(&mut out, frame.bytes.len() as u32);
        out.extend_from_slice(&frame.bytes);
    }
    out
}

pub fn to_pcap_le(frames: &[Frame]) -> Vec<u8> {
    emit(frames, true)
}

pub fn to_pcap_be(frames: &[Frame]) -> Vec<u8> {
    emit(frames, false)
}
