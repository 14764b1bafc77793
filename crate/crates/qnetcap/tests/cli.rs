use qnetcap::network_graph::{capacities_from_channels, flooding_capacity, Network};
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qnetcap"));
    c.env_remove("QNETCAP_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn tmp(name: &str, body: &str) -> String {
    let dir = std::env::temp_dir().join(format!("qnetcap-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn bundled_network_matches_library() {
    let path = data("example_network.json");
    let o = run(&["network", &path, "--alpha", "alice", "--beta", "bob", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let net = capacities_from_channels(&Network::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap()).unwrap();
    let lib = flooding_capacity(&net, net.node_index("alice").unwrap(), net.node_index("bob").unwrap()).unwrap();
    assert_eq!(v["value"].as_f64().unwrap(), lib.value);
    assert!(!v["cut"].as_array().unwrap().is_empty());
}

#[test]
fn disconnected_users_give_zero() {
    let p = tmp(
        "split.json",
        r#"{"nodes":[{"id":"a"},{"id":"b"},{"id":"c"},{"id":"d"}],
            "edges":[{"u":"a","v":"b","capacity":1},{"u":"c","v":"d","capacity":2}]}"#,
    );
    for mode in ["multi", "single"] {
        let o = run(&["network", &p, "--alpha", "a", "--beta", "d", "--mode", mode, "--json"]);
        assert_eq!(o.status.code(), Some(0));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["value"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn exit_codes() {
    let net = data("example_network.json");
    // missing end-user id
    assert_eq!(run(&["network", &net, "--alpha", "alice", "--beta", "carol"]).status.code(), Some(4));
    // malformed JSON and unknown keys
    let bad = tmp("bad.json", "{\"nodes\": [");
    assert_eq!(run(&["network", &bad, "--alpha", "a", "--beta", "b"]).status.code(), Some(2));
    let typo = tmp("typo.json", r#"{"nodes":[{"id":"a"},{"id":"b"}],"edges":[{"u":"a","v":"b","capacty":1}]}"#);
    assert_eq!(run(&["network", &typo, "--alpha", "a", "--beta", "b"]).status.code(), Some(2));
    // usage errors
    assert_eq!(run(&["channel", "--preset", "table2", "--kind", "ground", "--z", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["channel", "--preset", "nope", "--kind", "ground", "--z", "1"]).status.code(), Some(2));
    // physics domain: zenith angle outside the validity window
    let o = run(&["channel", "--preset", "table1-setup1", "--kind", "downlink", "--h-sat", "500km", "--theta", "1.4"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // physics domain: channel edge with an invalid fiber length
    let neg = tmp(
        "neg.json",
        r#"{"nodes":[{"id":"a"},{"id":"b"}],"edges":[{"u":"a","v":"b","channel":{"type":"fiber","length_km":-3}}]}"#,
    );
    assert_eq!(run(&["network", &neg, "--alpha", "a", "--beta", "b"]).status.code(), Some(3));
    assert_eq!(run(&["presets", "list"]).status.code(), Some(0));
}

#[test]
fn intersatellite_line_of_sight_warning() {
    let o = run(&["channel", "--preset", "table1-setup1", "--kind", "intersat", "--z", "6000km", "--h1", "1500km", "--h2", "1500km"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("line-of-sight"), "{}", stderr(&o));
    let o = run(&["channel", "--preset", "table1-setup1", "--kind", "intersat", "--z", "5000km", "--h1", "1500km", "--h2", "1500km"]);
    assert!(!stderr(&o).contains("line-of-sight"));
}

#[test]
fn channel_config_file_and_overrides() {
    let p = tmp(
        "ch.json",
        r#"{"type":"free-space","setup":"table2","condition":"clear-day","trajectory":{"kind":"ground","h":30,"z":400}}"#,
    );
    let a = run(&["channel", "--config", &p, "--set", "trajectory.z=700", "--json"]);
    let b = run(&["channel", "--preset", "table2", "--condition", "clear-day", "--kind", "ground", "--z", "0.7km", "--json"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let (va, vb): (serde_json::Value, serde_json::Value) =
        (serde_json::from_slice(&a.stdout).unwrap(), serde_json::from_slice(&b.stdout).unwrap());
    assert_eq!(va["capacity"], vb["capacity"]);
    let bad = run(&["channel", "--config", &p, "--set", "trajectory.zz=700"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn theorem1_demo() {
    let o = run(&["modular", "report", &data("theorem1_demo.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("thresholds satisfied; flooding = global-community = "), "{}", stdout(&o));
}

#[test]
fn generate_is_seeded() {
    let a = run(&["modular", "generate", "--seed", "11"]);
    let b = run(&["modular", "generate", "--seed", "11"]);
    let c = run(&["modular", "generate", "--seed", "12"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn sweep_csv_is_byte_identical() {
    let args = ["sweep", "--figure", "fig3a", "--set", "c_grid=[0.01,0.1,1]"];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = bin().args(args).arg("--threads").arg("1").output().unwrap();
    let c = bin().args(args).env("QNETCAP_THREADS", "3").output().unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,quantity,regime,divisor,c_target,x_m,y,lower_m,upper_m,status"
    );
    assert_eq!(lines.count(), 3 * (3 * 2 + 3));
}

#[test]
fn sweep_bad_thread_env() {
    let o = bin().args(["sweep", "--figure", "fig4"]).env("QNETCAP_THREADS", "lots").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_grid_sweep() {
    let o = run(&["sweep", "--figure", "fig3b", "--set", "c_grid=[]"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn scenario_config_round_trip() {
    let o = run(&["sweep", "--figure", "fig4", "--dump-config"]);
    let p = tmp("fig4.json", &stdout(&o));
    let again = run(&["sweep", "--config", &p, "--dump-config"]);
    assert_eq!(o.stdout, again.stdout);
    let typo = tmp("typo-scn.json", &stdout(&o).replacen("\"k_b\"", "\"kb\"", 1));
    assert_eq!(run(&["sweep", "--config", &typo]).status.code(), Some(2));
}

#[test]
fn presets_show_table_values() {
    let o = run(&["presets", "show", "table1-setup1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["wavelength"].as_f64().unwrap(), 800e-9);
    assert_eq!(v["aperture"].as_f64().unwrap(), 1.0);
    assert_eq!(v["w0"].as_f64().unwrap(), 0.4);
    assert_eq!(v["eps_p"].as_f64().unwrap(), 1e-6);
}
