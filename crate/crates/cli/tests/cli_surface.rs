//! Command-line contract tests: exit codes, output formats, and file
//! handling.

use std::path::PathBuf;
use std::process::Command;

use leash_testkit::pcapgen::to_pcap_le;
use leash_testkit::profiles::weather_station;
use leash_testkit::WEATHER_STATION_POLICY_JSON;

struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    fn new(tag: &str) -> Workspace {
        let dir = std::env::temp_dir().join(format!("leash-cli-{}-{tag}", std::process::id()));
        std::fs::create_dir_all(&dir).expect("create temp workspace");
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, bytes).expect("write temp file");
        path
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.dir);
    }
}

fn leash() -> Command {
    Command::new(env!("CARGO_BIN_EXE_leash"))
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let output = cmd.output().expect("spawn leash");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

#[test]
fn usage_errors_exit_64() {
    let (code, _, _) = run(leash().arg("learn")); // missing required flags
    assert_eq!(code, 64);
    let (code, _, _) = run(leash().arg("no-such-command"));
    assert_eq!(code, 64);
    let (code, _, _) = run(leash().args(["summarize", "--pcap", "x.pcap", "--device-mac", "junk"]));
    assert_eq!(code, 64);
}

#[test]
fn help_and_version_exit_0() {
    let (code, stdout, _) = run(leash().arg("--help"));
    assert_eq!(code, 0);
    assert!(stdout.contains("learn"));
    let (code, _, _) = run(leash().arg("--version"));
    assert_eq!(code, 0);
}

#[test]
fn learn_without_device_traffic_exits_2_and_writes_nothing() {
    let ws = Workspace::new("learn-empty");
    let profile = weather_station();
    let pcap = ws.write("w.pcap", &to_pcap_le(&profile.frames));
    let out = ws.path("policy.json");
    let (code, _, stderr) = run(leash()
        .arg("learn")
        .args(["--pcap"])
        .arg(&pcap)
        .args(["--device-mac", "00:11:22:33:44:55", "--out"]) // not in capture
        .arg(&out));
    assert_eq!(code, 2, "{stderr}");
    assert!(!out.exists());
}

#[test]
fn learn_emits_validation_warnings_on_stderr() {
    let ws = Workspace::new("learn-warn");
    let profile = weather_station();
    let pcap = ws.write("w.pcap", &to_pcap_le(&profile.frames));
    let out = ws.path("policy.json");
    let (code, _, stderr) = run(leash()
        .arg("learn")
        .args(["--pcap"])
        .arg(&pcap)
        .args(["--device-mac", "70:ee:50:13:ab:cd", "--out"])
        .arg(&out));
    assert_eq!(code, 0, "{stderr}");
    // rate is inferred but no byte bound can be learned
    assert!(stderr.contains("warning:"), "{stderr}");
    assert!(stderr.contains("byte/bandwidth"), "{stderr}");
    // no leftover temporary next to the output
    assert!(out.exists());
    assert!(!ws.path("policy.json.tmp").exists());
}

#[test]
fn learn_rate_slack_doubles_the_bound() {
    let ws = Workspace::new("learn-slack");
    let profile = weather_station();
    let pcap = ws.write("w.pcap", &to_pcap_le(&profile.frames));

    let out = ws.path("p1.json");
    run(leash()
        .arg("learn")
        .args(["--pcap"])
        .arg(&pcap)
        .args(["--device-mac", "70:ee:50:13:ab:cd", "--out"])
        .arg(&out));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"freq\": \"6/hr\""), "{text}");

    let out2 = ws.path("p2.json");
    run(leash()
        .arg("learn")
        .args(["--pcap"])
        .arg(&pcap)
        .args(["--device-mac", "70:ee:50:13:ab:cd", "--rate-slack", "2.0", "--out"])
        .arg(&out2));
    let text = std::fs::read_to_string(&out2).unwrap();
    assert!(text.contains("\"freq\": \"12/hr\""), "{text}");
}

#[test]
fn learn_aggregate_prefix_24_reproduces_reference_policy_shape() {
    let ws = Workspace::new("learn-shape");
    let profile = weather_station();
    let pcap = ws.write("w.pcap", &to_pcap_le(&profile.frames));
    let out = ws.path("policy.json");
    let (code, _, stderr) = run(leash()
        .arg("learn")
        .args(["--pcap"])
        .arg(&pcap)
        .args([
            "--device-mac",
            "70:ee:50:13:ab:cd",
            "--device-name",
            "Netatmo Weather Station",
            "--aggregate-prefix",
            "24",
            "--out",
        ])
        .arg(&out));
    assert_eq!(code, 0, "{stderr}");
    let learned = leash_core::parse_policy(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let reference = leash_core::parse_policy(WEATHER_STATION_POLICY_JSON).unwrap();
    assert_eq!(learned, reference);
}

#[test]
fn compile_join_error_exits_3_and_names_the_hostname() {
    let ws = Workspace::new("compile-join");
    let broken = WEATHER_STATION_POLICY_JSON.replace(
        r#"{"type": "A", "query": "netcom.netatmo.net", "answers": "62.210.92.0/24"}"#,
        "",
    );
    let broken = broken.replace("[\n    \n  ]", "[]");
    let policy = ws.write("broken.json", broken.as_bytes());
    let out = ws.path("rules.sh");
    let (code, _, stderr) = run(leash()
        .arg("compile")
        .arg(&policy)
        .args(["--format", "netfilter", "--out"])
        .arg(&out));
    assert_eq!(code, 3);
    assert!(stderr.contains("netcom.netatmo.net"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn malformed_policy_exits_65() {
    let ws = Workspace::new("bad-policy");
    let policy = ws.write("bad.json", b"{\"Dev\": {\"MACAddr\": \"zz\"}}");
    let (code, _, _) = run(leash().arg("explain").arg(&policy));
    assert_eq!(code, 65);
}

#[test]
fn missing_files_exit_74() {
    let (code, _, _) = run(leash().arg("explain").arg("/nonexistent/policy.json"));
    assert_eq!(code, 74);
}

#[test]
fn simulate_clean_exits_0_and_violation_exits_1() {
    let ws = Workspace::new("simulate");
    let profile = weather_station();
    let pcap = ws.write("w.pcap", &to_pcap_le(&profile.frames));
    let policy = ws.write("policy.json", WEATHER_STATION_POLICY_JSON.as_bytes());
    let log = ws.path("log.ndjson");
    let stats = ws.path("stats.json");

    let (code, _, stderr) = run(leash()
        .arg("simulate")
        .args(["--policy"])
        .arg(&policy)
        .args(["--pcap"])
        .arg(&pcap)
        .args(["--log"])
        .arg(&log)
        .args(["--stats"])
        .arg(&stats));
    assert_eq!(code, 0, "{stderr}");

    let log_text = std::fs::read_to_string(&log).unwrap();
    let first: serde_json::Value = serde_json::from_str(log_text.lines().next().unwrap()).unwrap();
    for field in ["index", "ts", "decision", "reason", "rule_id"] {
        assert!(first.get(field).is_some(), "missing {field}: {first}");
    }
    let stats_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(stats_doc["denied_total"], 0);
    assert!(stats_doc["rule_hits"].is_object());

    // deny-all policy over the same capture: violations, exit 1
    let deny_all = ws.write(
        "deny.json",
        br#"{"Dev": {"MACAddr":"70:ee:50:13:ab:cd","AllowedDNSQueries":[],"AllowedDNSReplies":[],"AllowedConnections":[]}}"#,
    );
    let (code, _, _) = run(leash()
        .arg("simulate")
        .args(["--policy"])
        .arg(&deny_all)
        .args(["--pcap"])
        .arg(&pcap)
        .args(["--log"])
        .arg(&log)
        .args(["--stats"])
        .arg(&stats));
    assert_eq!(code, 1);
    let stats_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert!(!stats_doc["extraneous"].as_array().unwrap().is_empty());
}

#[test]
fn simulate_empty_capture_exits_0_with_empty_log() {
    let ws = Workspace::new("simulate-empty");
    let pcap = ws.write("empty.pcap", &to_pcap_le(&[]));
    let policy = ws.write("policy.json", WEATHER_STATION_POLICY_JSON.as_bytes());
    let log = ws.path("log.ndjson");
    let stats = ws.path("stats.json");
    let (code, _, _) = run(leash()
        .arg("simulate")
        .args(["--policy"])
        .arg(&policy)
        .args(["--pcap"])
        .arg(&pcap)
        .args(["--log"])
        .arg(&log)
        .args(["--stats"])
        .arg(&stats));
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&log).unwrap(), "");
}

#[test]
fn summarize_prints_table_and_json() {
    let ws = Workspace::new("summarize");
    let profile = weather_station();
    let pcap = ws.write("w.pcap", &to_pcap_le(&profile.frames));

    let (code, stdout, _) = run(leash().arg("summarize").args(["--pcap"]).arg(&pcap));
    assert_eq!(code, 0);
    assert!(stdout.contains("distinct endpoints"), "{stdout}");

    let (code, stdout, _) = run(leash()
        .arg("summarize")
        .args(["--pcap"])
        .arg(&pcap)
        .args(["--dhcp-resolver", "192.168.1.1", "--json"]));
    assert_eq!(code, 0);
    let summary: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(summary["distinct_domains"], 1);
    assert_eq!(summary["rogue_resolver"], false);
}

#[test]
fn explain_prints_reference_sentences() {
    let ws = Workspace::new("explain");
    let policy = ws.write("policy.json", WEATHER_STATION_POLICY_JSON.as_bytes());
    let (code, stdout, _) = run(leash().arg("explain").arg(&policy));
    assert_eq!(code, 0);
    assert!(stdout.contains("netcom.netatmo.net"));
    assert!(stdout.contains("port 25050"));
    assert!(stdout.contains("6 times per hour"));

    let deny_all = ws.write(
        "deny.json",
        br#"{"Dev": {"MACAddr":"00:00:00:00:00:00","AllowedDNSQueries":[],"AllowedDNSReplies":[],"AllowedConnections":[]}}"#,
    );
    let (code, stdout, _) = run(leash().arg("explain").arg(&deny_all));
    assert_eq!(code, 0);
    assert_eq!(stdout, "This device may not communicate at all.\n");
}

#[test]
fn compile_dnsforward_honors_upstream_env() {
    let ws = Workspace::new("upstream-env");
    let policy = ws.write("policy.json", WEATHER_STATION_POLICY_JSON.as_bytes());
    let out = ws.path("dns.conf");
    let (code, _, _) = run(leash()
        .arg("compile")
        .arg(&policy)
        .args(["--format", "dnsforward", "--out"])
        .arg(&out)
        .env("LEASH_UPSTREAM", "9.9.9.9"));
    assert_eq!(code, 0);
    let config = std::fs::read_to_string(&out).unwrap();
    assert!(config.contains("server=/netcom.netatmo.net/9.9.9.9"), "{config}");
}

#[test]
fn compile_filter_forward_chain_mode() {
    let ws = Workspace::new("chain");
    let policy = ws.write("policy.json", WEATHER_STATION_POLICY_JSON.as_bytes());
    let out = ws.path("rules.sh");
    let (code, _, _) = run(leash()
        .arg("compile")
        .arg(&policy)
        .args(["--format", "netfilter", "--chain", "filter-forward", "--out"])
        .arg(&out));
    assert_eq!(code, 0);
    let script = std::fs::read_to_string(&out).unwrap();
    assert!(script.starts_with("iptables -A FORWARD -i wlan0 -m conntrack --ctstate ESTABLISHED,RELATED -j ACCEPT\n"), "{script}");
    assert!(script.trim_end().ends_with("-j DROP"), "{script}");
    assert!(!script.contains("PREROUTING"));
}
