//! Shared domain types: addresses, prefixes, protocols, DNS names and
//! record types, rate/bandwidth grammars, and daily time windows.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::net::Ipv4Addr;
use core::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Error raised when a textual domain value fails its grammar.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct GrammarError(pub String);

impl GrammarError {
    fn new(msg: impl Into<String>) -> Self {
        GrammarError(msg.into())
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = <&str>::deserialize(d)?;
                text.parse().map_err(|e: GrammarError| D::Error::custom(e.0))
            }
        }
    };
}

/// EUI-48 hardware address, canonically lowercase colon-separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl FromStr for MacAddr {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for slot in out.iter_mut() {
            let part = parts
                .next()
                .ok_or_else(|| GrammarError::new(format!("invalid MAC address `{s}`")))?;
            if part.len() != 2 {
                return Err(GrammarError::new(format!("invalid MAC address `{s}`")));
            }
            *slot = u8::from_str_radix(part, 16)
                .map_err(|_| GrammarError::new(format!("invalid MAC address `{s}`")))?;
        }
        if parts.next().is_some() {
            return Err(GrammarError::new(format!("invalid MAC address `{s}`")));
        }
        Ok(MacAddr(out))
    }
}

string_serde!(MacAddr);

/// IPv4 prefix in CIDR notation. The address must sit on the prefix
/// boundary (no host bits set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cidr {
    addr: Ipv4Addr,
    prefix: u8,
}

impl Cidr {
    pub fn new(addr: Ipv4Addr, prefix: u8) -> Result<Self, GrammarError> {
        if prefix > 32 {
            return Err(GrammarError::new(format!("prefix length {prefix} out of range")));
        }
        let cidr = Cidr { addr, prefix };
        if u32::from(addr) & !cidr.mask() != 0 {
            return Err(GrammarError::new(format!(
                "host bits set in `{addr}/{prefix}`"
            )));
        }
        Ok(cidr)
    }

    /// Single-address prefix.
    pub fn host(addr: Ipv4Addr) -> Self {
        Cidr { addr, prefix: 32 }
    }

    /// Truncates `addr` to the given prefix length, zeroing host bits.
    pub fn truncate(addr: Ipv4Addr, prefix: u8) -> Self {
        let prefix = prefix.min(32);
        let cidr = Cidr { addr, prefix };
        Cidr {
            addr: Ipv4Addr::from(u32::from(addr) & cidr.mask()),
            prefix,
        }
    }

    fn mask(&self) -> u32 {
        if self.prefix == 0 {
            0
        } else {
            u32::MAX << (32 - self.prefix)
        }
    }

    pub fn addr(&self) -> Ipv4Addr {
        self.addr
    }

    pub fn prefix(&self) -> u8 {
        self.prefix
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        u32::from(ip) & self.mask() == u32::from(self.addr)
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.prefix)
    }
}

impl FromStr for Cidr {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((addr, len)) => {
                let addr: Ipv4Addr = addr
                    .parse()
                    .map_err(|_| GrammarError::new(format!("invalid CIDR `{s}`")))?;
                let len: u8 = len
                    .parse()
                    .map_err(|_| GrammarError::new(format!("invalid CIDR `{s}`")))?;
                Cidr::new(addr, len)
            }
            None => {
                let addr: Ipv4Addr = s
                    .parse()
                    .map_err(|_| GrammarError::new(format!("invalid CIDR `{s}`")))?;
                Ok(Cidr::host(addr))
            }
        }
    }
}

string_serde!(Cidr);

/// Transport protocol a policy rule can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum L4Proto {
    Tcp,
    Udp,
}

impl L4Proto {
    pub fn lowercase(&self) -> &'static str {
        match self {
            L4Proto::Tcp => "tcp",
            L4Proto::Udp => "udp",
        }
    }
}

impl fmt::Display for L4Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            L4Proto::Tcp => f.write_str("TCP"),
            L4Proto::Udp => f.write_str("UDP"),
        }
    }
}

impl FromStr for L4Proto {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TCP" => Ok(L4Proto::Tcp),
            "UDP" => Ok(L4Proto::Udp),
            other => Err(GrammarError::new(format!("unknown protocol `{other}`"))),
        }
    }
}

string_serde!(L4Proto);

/// Protocol of a parsed packet. Anything that is not TCP or UDP is
/// carried as `Other` with the raw IP protocol number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Proto {
    Tcp,
    Udp,
    Other(u8),
}

impl Proto {
    pub fn l4(&self) -> Option<L4Proto> {
        match self {
            Proto::Tcp => Some(L4Proto::Tcp),
            Proto::Udp => Some(L4Proto::Udp),
            Proto::Other(_) => None,
        }
    }
}

impl From<L4Proto> for Proto {
    fn from(p: L4Proto) -> Self {
        match p {
            L4Proto::Tcp => Proto::Tcp,
            L4Proto::Udp => Proto::Udp,
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proto::Tcp => f.write_str("TCP"),
            Proto::Udp => f.write_str("UDP"),
            Proto::Other(n) => write!(f, "IPPROTO_{n}"),
        }
    }
}

/// TCP flag byte (FIN/SYN/RST/PSH/ACK/URG).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);

    pub fn contains(&self, flag: TcpFlags) -> bool {
        self.0 & flag.0 == flag.0
    }

    pub fn union(self, other: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | other.0)
    }
}

/// Fully qualified domain name, stored lowercase without a trailing dot.
///
/// Labels are limited to 63 bytes and the whole name to 253 bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DnsName(String);

impl DnsName {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DnsName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for DnsName {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.strip_suffix('.').unwrap_or(s);
        if trimmed.is_empty() || trimmed.len() > 253 {
            return Err(GrammarError::new(format!("invalid domain name `{s}`")));
        }
        for label in trimmed.split('.') {
            if label.is_empty() || label.len() > 63 {
                return Err(GrammarError::new(format!("invalid domain name `{s}`")));
            }
            if !label
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
            {
                return Err(GrammarError::new(format!("invalid domain name `{s}`")));
            }
        }
        Ok(DnsName(trimmed.to_ascii_lowercase()))
    }
}

string_serde!(DnsName);

/// DNS record types the policy grammar accepts, plus an opaque carrier
/// for anything else seen on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordType {
    A,
    Ns,
    Cname,
    Soa,
    Ptr,
    Mx,
    Txt,
    Aaaa,
    Srv,
    Any,
    Other(u16),
}

impl RecordType {
    pub fn from_code(code: u16) -> Self {
        match code {
            1 => RecordType::A,
            2 => RecordType::Ns,
            5 => RecordType::Cname,
            6 => RecordType::Soa,
            12 => RecordType::Ptr,
            15 => RecordType::Mx,
            16 => RecordType::Txt,
            28 => RecordType::Aaaa,
            33 => RecordType::Srv,
            255 => RecordType::Any,
            other => RecordType::Other(other),
        }
    }

    pub fn code(&self) -> u16 {
        match self {
            RecordType::A => 1,
            RecordType::Ns => 2,
            RecordType::Cname => 5,
            RecordType::Soa => 6,
            RecordType::Ptr => 12,
            RecordType::Mx => 15,
            RecordType::Txt => 16,
            RecordType::Aaaa => 28,
            RecordType::Srv => 33,
            RecordType::Any => 255,
            RecordType::Other(code) => *code,
        }
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordType::A => f.write_str("A"),
            RecordType::Ns => f.write_str("NS"),
            RecordType::Cname => f.write_str("CNAME"),
            RecordType::Soa => f.write_str("SOA"),
            RecordType::Ptr => f.write_str("PTR"),
            RecordType::Mx => f.write_str("MX"),
            RecordType::Txt => f.write_str("TXT"),
            RecordType::Aaaa => f.write_str("AAAA"),
            RecordType::Srv => f.write_str("SRV"),
            RecordType::Any => f.write_str("ANY"),
            RecordType::Other(code) => write!(f, "TYPE{code}"),
        }
    }
}

impl FromStr for RecordType {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(RecordType::A),
            "NS" => Ok(RecordType::Ns),
            "CNAME" => Ok(RecordType::Cname),
            "SOA" => Ok(RecordType::Soa),
            "PTR" => Ok(RecordType::Ptr),
            "MX" => Ok(RecordType::Mx),
            "TXT" => Ok(RecordType::Txt),
            "AAAA" => Ok(RecordType::Aaaa),
            "SRV" => Ok(RecordType::Srv),
            "ANY" => Ok(RecordType::Any),
            other => Err(GrammarError::new(format!("unknown DNS record type `{other}`"))),
        }
    }
}

string_serde!(RecordType);

/// Time unit for rate and bandwidth bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeUnit {
    Second,
    Minute,
    Hour,
    Day,
    Week,
}

impl TimeUnit {
    pub fn period_us(&self) -> u64 {
        match self {
            TimeUnit::Second => 1_000_000,
            TimeUnit::Minute => 60 * 1_000_000,
            TimeUnit::Hour => 3_600 * 1_000_000,
            TimeUnit::Day => 86_400 * 1_000_000,
            TimeUnit::Week => 7 * 86_400 * 1_000_000,
        }
    }

    /// Canonical token used when a policy is written back out.
    pub fn token(&self) -> &'static str {
        match self {
            TimeUnit::Second => "s",
            TimeUnit::Minute => "m",
            TimeUnit::Hour => "hr",
            TimeUnit::Day => "d",
            TimeUnit::Week => "w",
        }
    }

    /// English noun for human-readable policy rendering.
    pub fn noun(&self) -> &'static str {
        match self {
            TimeUnit::Second => "second",
            TimeUnit::Minute => "minute",
            TimeUnit::Hour => "hour",
            TimeUnit::Day => "day",
            TimeUnit::Week => "week",
        }
    }

    /// Unit accepted by `iptables -m limit`; weeks have no equivalent.
    pub fn netfilter_token(&self) -> Option<&'static str> {
        match self {
            TimeUnit::Second => Some("second"),
            TimeUnit::Minute => Some("minute"),
            TimeUnit::Hour => Some("hour"),
            TimeUnit::Day => Some("day"),
            TimeUnit::Week => None,
        }
    }

    fn from_token(token: &str) -> Option<Self> {
        match token {
            "s" | "sec" | "second" => Some(TimeUnit::Second),
            "m" | "min" | "minute" => Some(TimeUnit::Minute),
            "h" | "hr" | "hour" => Some(TimeUnit::Hour),
            "d" | "day" => Some(TimeUnit::Day),
            "w" | "week" => Some(TimeUnit::Week),
            _ => None,
        }
    }
}

/// Bound on new connections per time unit, written `<count>/<unit>`
/// (for example `6/hr`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RateSpec {
    pub count: u32,
    pub unit: TimeUnit,
}

impl RateSpec {
    pub fn new(count: u32, unit: TimeUnit) -> Result<Self, GrammarError> {
        if count == 0 {
            return Err(GrammarError::new("rate count must be at least 1"));
        }
        Ok(RateSpec { count, unit })
    }
}

impl fmt::Display for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.count, self.unit.token())
    }
}

impl FromStr for RateSpec {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (count, unit) = s
            .split_once('/')
            .ok_or_else(|| GrammarError::new(format!("invalid rate `{s}`")))?;
        let count: u32 = count
            .parse()
            .map_err(|_| GrammarError::new(format!("invalid rate `{s}`")))?;
        let unit = TimeUnit::from_token(unit)
            .ok_or_else(|| GrammarError::new(format!("invalid rate unit in `{s}`")))?;
        RateSpec::new(count, unit)
    }
}

string_serde!(RateSpec);

/// Bound on outbound bytes per time unit, written `<n><K|M|G>/<unit>`
/// (for example `10M/w`). Multipliers are decimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BandwidthSpec {
    pub bytes: u64,
    pub unit: TimeUnit,
}

impl BandwidthSpec {
    pub fn new(bytes: u64, unit: TimeUnit) -> Result<Self, GrammarError> {
        if bytes == 0 {
            return Err(GrammarError::new("bandwidth bound must be at least 1 byte"));
        }
        Ok(BandwidthSpec { bytes, unit })
    }

    /// Renders the byte count with the largest multiplier that divides it
    /// exactly: `10 MB`, `2 GB`, `1500 B`.
    pub fn human_bytes(&self) -> String {
        let b = self.bytes;
        if b.is_multiple_of(1_000_000_000) {
            format!("{} GB", b / 1_000_000_000)
        } else if b.is_multiple_of(1_000_000) {
            format!("{} MB", b / 1_000_000)
        } else if b.is_multiple_of(1_000) {
            format!("{} KB", b / 1_000)
        } else {
            format!("{b} B")
        }
    }
}

impl fmt::Display for BandwidthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.bytes;
        let (scaled, suffix) = if b.is_multiple_of(1_000_000_000) {
            (b / 1_000_000_000, "G")
        } else if b.is_multiple_of(1_000_000) {
            (b / 1_000_000, "M")
        } else if b.is_multiple_of(1_000) {
            (b / 1_000, "K")
        } else {
            (b, "")
        };
        write!(f, "{}{}/{}", scaled, suffix, self.unit.token())
    }
}

impl FromStr for BandwidthSpec {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (amount, unit) = s
            .split_once('/')
            .ok_or_else(|| GrammarError::new(format!("invalid bandwidth `{s}`")))?;
        let unit = TimeUnit::from_token(unit)
            .ok_or_else(|| GrammarError::new(format!("invalid bandwidth unit in `{s}`")))?;
        let (digits, multiplier) = match amount.as_bytes().last() {
            Some(b'K') => (&amount[..amount.len() - 1], 1_000),
            Some(b'M') => (&amount[..amount.len() - 1], 1_000_000),
            Some(b'G') => (&amount[..amount.len() - 1], 1_000_000_000),
            _ => (amount, 1),
        };
        let value: u64 = digits
            .parse()
            .map_err(|_| GrammarError::new(format!("invalid bandwidth `{s}`")))?;
        let bytes = value
            .checked_mul(multiplier)
            .ok_or_else(|| GrammarError::new(format!("bandwidth `{s}` overflows")))?;
        BandwidthSpec::new(bytes, unit)
    }
}

string_serde!(BandwidthSpec);

/// Daily time window `[start, end)` in minutes of the day, written
/// `HH:MM-HH:MM`. Windows may wrap past midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeWindow {
    pub start_min: u16,
    pub end_min: u16,
}

impl TimeWindow {
    pub fn contains(&self, ts_us: u64) -> bool {
        let minute_of_day = ((ts_us / 60_000_000) % 1440) as u16;
        if self.start_min <= self.end_min {
            minute_of_day >= self.start_min && minute_of_day < self.end_min
        } else {
            minute_of_day >= self.start_min || minute_of_day < self.end_min
        }
    }
}

fn parse_hhmm(s: &str) -> Option<u16> {
    let (h, m) = s.split_once(':')?;
    if h.len() != 2 || m.len() != 2 {
        return None;
    }
    let h: u16 = h.parse().ok()?;
    let m: u16 = m.parse().ok()?;
    if h > 23 || m > 59 {
        return None;
    }
    Some(h * 60 + m)
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:02}:{:02}-{:02}:{:02}",
            self.start_min / 60,
            self.start_min % 60,
            self.end_min / 60,
            self.end_min % 60
        )
    }
}

impl FromStr for TimeWindow {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (start, end) = s
            .split_once('-')
            .ok_or_else(|| GrammarError::new(format!("invalid schedule `{s}`")))?;
        let start_min =
            parse_hhmm(start).ok_or_else(|| GrammarError::new(format!("invalid schedule `{s}`")))?;
        let end_min =
            parse_hhmm(end).ok_or_else(|| GrammarError::new(format!("invalid schedule `{s}`")))?;
        Ok(TimeWindow { start_min, end_min })
    }
}

string_serde!(TimeWindow);

/// Identity of one policy entry, used for verdict provenance and
/// per-rule statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyEntryId {
    Query(usize),
    Reply(usize),
    Connection(usize),
}

impl fmt::Display for PolicyEntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyEntryId::Query(i) => write!(f, "query[{i}]"),
            PolicyEntryId::Reply(i) => write!(f, "reply[{i}]"),
            PolicyEntryId::Connection(i) => write!(f, "connection[{i}]"),
        }
    }
}

impl Serialize for PolicyEntryId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `ceil` for non-negative floats; avoids relying on std float intrinsics.
pub(crate) fn ceil_pos(x: f64) -> u64 {
    let truncated = x as u64;
    if (truncated as f64) < x {
        truncated + 1
    } else {
        truncated
    }
}
