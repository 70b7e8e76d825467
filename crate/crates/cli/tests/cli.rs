use std::path::Path;
use std::process::Command;

use zklab::mixer::{MixerConfig, Scenario};
use zklab::permutations::{HashKind, Hasher};
use zklab::FieldElement;
use zklab_cli::bench::BENCH_HEADER;
use zklab_cli::{main_with, ARITH_HEADER, FEE_HEADER, TRADEOFF_HEADER};

fn data(rel: &str) -> String {
    format!("{}/../core/data/{rel}", env!("CARGO_MANIFEST_DIR"))
}

/// Runs in-process; returns (exit code, stdout, stderr).
fn zk(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("zklab").chain(args.iter().copied());
    let code = main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = zk(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    out
}

fn bin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_zklab")).args(args).output().unwrap()
}

#[test]
fn hash_matches_library_and_is_deterministic() {
    let a = ok(&["hash", "--fn", "poseidon2", "--inputs", "0x01,0x02"]);
    assert_eq!(a, ok(&["hash", "--fn", "poseidon2", "--inputs", "0x01,0x02"]));
    let h = Hasher::builtin(HashKind::Poseidon2);
    let want = h.hash(&[FieldElement::from_u64(1), FieldElement::from_u64(2)]).unwrap();
    assert_eq!(a.trim(), want.to_hex());
    let json: serde_json::Value = serde_json::from_str(&ok(&["hash", "--fn", "mimc", "--inputs", "0x05", "--format", "json"])).unwrap();
    assert_eq!(json["inputs"], 1);
}

#[test]
fn exit_codes() {
    let unknown = bin(&["hash", "--fn", "sha3", "--inputs", "0x01"]);
    assert_eq!(unknown.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&unknown.stderr);
    assert!(msg.contains("supported: mimc, gmimc, poseidon, poseidon2, neptune"), "{msg}");
    assert_eq!(bin(&["hash", "--fn", "mimc", "--inputs", "0xzz"]).status.code(), Some(2));
    // p itself is out of range
    let p = "0x30644e72e131a029b85045b68181585d2833e84879b9709143e1f593f0000001";
    assert_eq!(bin(&["hash", "--fn", "mimc", "--inputs", p]).status.code(), Some(2));
    assert_eq!(bin(&["hash", "--fn", "mimc", "--inputs", "0x01"]).status.code(), Some(0));
    assert_eq!(zk(&["bench", "--reps", "2"]).0, 2);
    assert_eq!(zk(&["bench", "--depths", "13"]).0, 2);
    assert_eq!(zk(&["bench", "--depths", "5:1"]).0, 2);
    assert_eq!(zk(&["mixer", "run", "--scenario", "/nonexistent/script"]).0, 1);
    assert_eq!(zk(&["frobnicate"]).0, 2);
}

#[test]
fn golden_headers() {
    let bench = ok(&["bench", "--depths", "0", "--reps", "3"]);
    assert_eq!(bench.lines().next().unwrap(), BENCH_HEADER);
    assert_eq!(
        BENCH_HEADER,
        "hash,depth,system,workload,constraints,power,wall_ns,hash_calls,peak_alloc_bytes,repetitions"
    );
    let arith = ok(&["arith", "report", "--fn", "poseidon2"]);
    assert_eq!(arith.lines().next().unwrap(), ARITH_HEADER);
    assert_eq!(ARITH_HEADER, "hash,gadget,d_slot,d_era,system,constraints,power,folded_sboxes");
    let fees = ok(&["cost", "report", "--table", "fees"]);
    assert_eq!(fees.lines().next().unwrap(), FEE_HEADER);
    let trade = ok(&["cost", "report", "--table", "tradeoff"]);
    assert_eq!(trade.lines().next().unwrap(), TRADEOFF_HEADER);
    assert_eq!(TRADEOFF_HEADER, "d_slot,d_era,amortized_gas,savings,normalized");
}

fn bench_rows(args: &[&str]) -> Vec<serde_json::Value> {
    let mut full = vec!["bench", "--format", "json"];
    full.extend_from_slice(args);
    serde_json::from_str(&ok(&full)).unwrap()
}

#[test]
fn bench_records() {
    let rows = bench_rows(&["--fn", "poseidon2,mimc", "--depths", "0,3,7", "--reps", "3"]);
    assert_eq!(rows.len(), 2 * 3 * 3);
    for r in &rows {
        assert!(r["wall_ns"].as_u64().unwrap() > 0);
        let native = r["system"] == "native";
        assert_eq!(r["constraints"].is_null(), native);
        assert_eq!(r["power"].is_null(), native);
        let want = match r["depth"].as_u64().unwrap() {
            0 => 1,
            d => (1 << d) - 1,
        };
        assert_eq!(r["hash_calls"], want);
    }
    let cons = |h: &str, d: u64| {
        rows.iter()
            .find(|r| r["hash"] == h && r["depth"] == d && r["system"] == "r1cs")
            .unwrap()["constraints"]
            .as_u64()
            .unwrap()
    };
    for d in [0, 3, 7] {
        assert!(cons("poseidon2", d) < cons("mimc", d));
    }
    assert_eq!(cons("mimc", 0), 1_320);
    assert_eq!(cons("mimc", 7), 1_320 * 127);
}

#[test]
fn merkle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let leaves = dir.path().join("leaves.txt");
    let proof = dir.path().join("proof.json");
    let (l, p) = (leaves.to_str().unwrap(), proof.to_str().unwrap());
    let built = ok(&["merkle", "build", "--depth", "4", "--seed", "3", "--save-leaves", l, "--format", "json"]);
    let built: serde_json::Value = serde_json::from_str(&built).unwrap();
    let again = ok(&["merkle", "build", "--depth", "4", "--leaves", l]);
    assert!(again.contains(built[0]["root"].as_str().unwrap()));

    ok(&["merkle", "prove", "--depth", "4", "--leaves", l, "--index", "9", "--out", p]);
    assert_eq!(ok(&["merkle", "verify", "--proof", p]), "valid\n");
    let (code, out, _) = zk(&["merkle", "verify", "--proof", p, "--leaf", "0x1234"]);
    assert_eq!((code, out.as_str()), (1, "invalid\n"));
    assert_eq!(zk(&["merkle", "verify", "--fn", "mimc", "--proof", p]).0, 2);
    assert_eq!(zk(&["merkle", "prove", "--depth", "4", "--leaves", l, "--index", "16"]).0, 2);
}

#[test]
fn params_directory() {
    let dir = format!("{}/../core/params", env!("CARGO_MANIFEST_DIR"));
    let a = ok(&["hash", "--fn", "neptune", "--inputs", "0x07"]);
    assert_eq!(a, ok(&["--params", &dir, "hash", "--fn", "neptune", "--inputs", "0x07"]));
    assert_eq!(zk(&["--params", "/nonexistent", "hash", "--fn", "mimc", "--inputs", "0x1"]).0, 1);
}

#[test]
fn mixer_runs() {
    let happy = ok(&["mixer", "run", "--scenario", &data("scenarios/happy_path.txt"), "--config", &data("mixer.json")]);
    let v: serde_json::Value = serde_json::from_str(&happy).unwrap();
    let amortized = v["metrics"]["amortized_gas"].as_f64().unwrap();
    assert!((amortized - 331_331.0).abs() <= 1.0, "{amortized}");

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let (code, _, err) = zk(&["mixer", "run", "--scenario", &data("scenarios/replay.txt"), "--seed", "9", "--out", d.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
    }
    for f in ["log.json", "metrics.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["rejections"]["double_spend"], 1);

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "deposit a 100\nstep\nwithdraw zero bob\n").unwrap();
    let (code, _, err) = zk(&["mixer", "run", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");
    let (code, _, _) = zk(&["mixer", "run", "--scenario", &data("scenarios/replay.txt"), "--format", "csv"]);
    assert_eq!(code, 2);
}

#[test]
fn bundled_scenarios_parse() {
    for s in ["happy_path", "replay", "tamper", "banned"] {
        let text = std::fs::read_to_string(data(&format!("scenarios/{s}.txt"))).unwrap();
        assert!(!Scenario::parse(&text).unwrap().is_empty());
    }
    let cfg = std::fs::read_to_string(data("mixer.json")).unwrap();
    assert_eq!(MixerConfig::from_json(&cfg).unwrap(), MixerConfig::default());
}

fn cost_json(args: &[&str]) -> serde_json::Value {
    let mut full = vec!["cost", "report", "--format", "json"];
    full.extend_from_slice(args);
    serde_json::from_str(&ok(&full)).unwrap()
}

#[test]
fn cost_report() {
    let v = cost_json(&["--schedule", &data("gas_schedule.json"), "--quotes", &data("quotes.json")]);
    let fee = |chain: &str| v["fees"].as_array().unwrap().iter().find(|r| r["chain"] == chain).unwrap().clone();
    assert!((fee("ethereum")["savings"].as_f64().unwrap() - 0.725).abs() < 0.005);
    assert!((fee("hedera")["savings"].as_f64().unwrap() - 0.26).abs() < 0.01);
    assert!((fee("gas")["total"].as_f64().unwrap() - 331_331.0).abs() <= 1.0);
    let cell = v["tradeoff"].as_array().unwrap().iter().find(|c| c["d_slot"] == 5 && c["d_era"] == 20).unwrap().clone();
    assert_eq!(cell["normalized"], 1.0);

    let one = cost_json(&["--batch-size", "1", "--table", "fees"]);
    assert!(one["fees"][0]["savings"].as_f64().unwrap() < 0.0);
    assert!(one.get("tradeoff").is_none());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("s.json");
    std::fs::write(&bad, r#"{"deposit":1,"commit":1,"withdraw":1,"baseline_deposit":1,"batch_size":4}"#).unwrap();
    let (code, _, err) = zk(&["cost", "report", "--schedule", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("baseline_withdraw"), "{err}");
}

#[test]
fn output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("arith.csv");
    let stdout = ok(&["arith", "report", "--gadget", "merkle", "--d-slot", "2", "--out", out.to_str().unwrap()]);
    assert!(stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * HashKind::ALL.len());
    assert!(Path::new(&out).exists());
    assert!(text.contains("mimc,merkle,2,,r1cs,3960,12,0"), "{text}");
}
