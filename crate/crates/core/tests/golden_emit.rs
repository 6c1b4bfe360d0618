//! Golden outputs for the reference weather-station policy: the exact
//! firewall command lines and DNS-forwarder directives.

use leash_core::compile::{compile_policy, emit_dns_forwarder, emit_netfilter, ChainMode};
use leash_core::policy::parse_policy;
use leash_testkit::WEATHER_STATION_POLICY_JSON;

#[test]
fn netfilter_script_is_byte_exact() {
    let policy = parse_policy(WEATHER_STATION_POLICY_JSON).unwrap();
    let rules = compile_policy(&policy).unwrap();
    let script = emit_netfilter(&rules, ChainMode::NatPrerouting);
    assert_eq!(
        script,
        "iptables -t nat -A PREROUTING -i wlan0 -s 172.16.1.2 -d 62.210.92.0/24 -p tcp --dport 25050 -m limit --limit 6/hour -j ACCEPT\n\
         iptables -t nat -A PREROUTING -i wlan0 -s 172.16.1.2 -d 192.168.1.1 -p udp --dport 53 -j ACCEPT\n\
         # default policy: drop all other traffic from this device\n\
         # replies to connections allowed outbound are permitted by connection tracking\n"
    );
}

#[test]
fn dns_forwarder_config_is_byte_exact() {
    let policy = parse_policy(WEATHER_STATION_POLICY_JSON).unwrap();
    let rules = compile_policy(&policy).unwrap();
    let config = emit_dns_forwarder(&rules, "8.8.8.8".parse().unwrap());
    assert_eq!(
        config,
        "no-resolv\nserver=/netcom.netatmo.net/8.8.8.8\naddress=/#/127.0.0.1\n"
    );
}
