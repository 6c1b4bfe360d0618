//! DNS-learned destination bindings: addresses a device may connect to
//! because an allowed DNS answer recently resolved a whitelisted name
//! to them.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use crate::types::DnsName;

/// Bindings live at least this long, whatever the answer TTL said.
pub const BINDING_TTL_FLOOR_S: u32 = 60;
/// And never longer than this, to bound monitor state.
pub const BINDING_TTL_CAP_S: u32 = 86_400;

/// When a binding created by an answer arriving at `answer_ts_us` with
/// the given record TTL stops being usable.
pub fn binding_expiry(answer_ts_us: u64, ttl_s: u32) -> u64 {
    let ttl = ttl_s.clamp(BINDING_TTL_FLOOR_S, BINDING_TTL_CAP_S);
    answer_ts_us + ttl as u64 * 1_000_000
}

/// qname -> set of (address, expiry) entries. Lookups at time t ignore
/// expired entries.
#[derive(Debug, Default, Clone)]
pub struct BindingTable {
    entries: BTreeMap<DnsName, Vec<(Ipv4Addr, u64)>>,
}

impl BindingTable {
    pub fn insert(&mut self, qname: &DnsName, addr: Ipv4Addr, expiry_us: u64, now_us: u64) {
        let set = self.entries.entry(qname.clone()).or_default();
        set.retain(|(_, exp)| *exp > now_us);
        match set.iter_mut().find(|(ip, _)| *ip == addr) {
            Some(entry) => entry.1 = entry.1.max(expiry_us),
            None => set.push((addr, expiry_us)),
        }
    }

    pub fn contains_at(&self, qname: &DnsName, addr: Ipv4Addr, now_us: u64) -> bool {
        self.entries
            .get(qname)
            .is_some_and(|set| set.iter().any(|(ip, exp)| *ip == addr && now_us < *exp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expiry_applies_floor_and_cap() {
        assert_eq!(binding_expiry(0, 10), 60_000_000); // floored to 60 s
        assert_eq!(binding_expiry(0, 600), 600_000_000);
        assert_eq!(binding_expiry(0, 1_000_000), 86_400_000_000); // capped at 24 h
    }

    #[test]
    fn lookup_respects_expiry() {
        let mut table = BindingTable::default();
        let name: DnsName = "api.example.com".parse().unwrap();
        let ip: Ipv4Addr = "62.210.92.5".parse().unwrap();
        table.insert(&name, ip, binding_expiry(0, 600), 0);
        assert!(table.contains_at(&name, ip, 1_000_000));
        assert!(table.contains_at(&name, ip, 599_999_999));
        assert!(!table.contains_at(&name, ip, 600_000_000));
        assert!(!table.contains_at(&name, "1.2.3.4".parse().unwrap(), 1_000_000));
    }

    #[test]
    fn refresh_extends_expiry() {
        let mut table = BindingTable::default();
        let name: DnsName = "api.example.com".parse().unwrap();
        let ip: Ipv4Addr = "62.210.92.5".parse().unwrap();
        table.insert(&name, ip, binding_expiry(0, 60), 0);
        table.insert(&name, ip, binding_expiry(30_000_000, 60), 30_000_000);
        assert!(table.contains_at(&name, ip, 80_000_000));
    }
}
