use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ivmnar::catalog::{catalog, lookup};
use ivmnar::data::{empirical_observable, PlugIn};
use ivmnar::engine::identify;
use ivmnar::forward::sample_dataset;
use ivmnar::io::parse_params;
use ivmnar::model::Tolerances;
use num_rational::BigRational;

const BIN: &str = env!("CARGO_BIN_EXE_ivmnar");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ivmnar-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn ivmnar(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn entry<'a>(report: &'a toml::Value, id: &str) -> &'a toml::Value {
    report["entry"].as_array().unwrap().iter().find(|e| e["mechanism"].as_str() == Some(id)).unwrap()
}

/// Wald ratio over rows with a recorded outcome, straight from the CSV text.
fn complete_case_wald(csv: &str) -> f64 {
    let mut sums = [[0.0f64; 3]; 2];
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[2].is_empty() {
            continue;
        }
        let z: usize = f[0].parse().unwrap();
        sums[z][0] += 1.0;
        sums[z][1] += f[1].parse::<f64>().unwrap();
        sums[z][2] += f[2].parse::<f64>().unwrap();
    }
    let m = |z: usize, c: usize| sums[z][c] / sums[z][0];
    (m(1, 2) - m(0, 2)) / (m(1, 1) - m(0, 1))
}

#[test]
fn simulate_then_sensitivity_end_to_end() {
    let params = data("ud_one_sided.toml");
    let csv = scratch("ud.csv");
    let args = ["simulate", params.to_str().unwrap(), "--n", "1000000", "--seed", "17"];
    let sampled = stdout(&ivmnar(&args));
    stdout(&ivmnar(&[&args[..], &["-o", csv.to_str().unwrap()]].concat()));
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), sampled);

    let sens = [
        "sensitivity",
        csv.to_str().unwrap(),
        "--mechanism",
        "MCAR-Y",
        "--mechanism",
        "1ZD",
        "--mechanism",
        "1UD",
        "--one-sided",
    ];
    let text = stdout(&ivmnar(&sens));
    assert_eq!(text, stdout(&ivmnar(&sens)));
    let report: toml::Value = toml::from_str(&text).unwrap();
    assert_eq!(report["regime"].as_str(), Some("OutcomeOnly"));
    assert_eq!(report["entry"].as_array().unwrap().len(), 3);

    let (p, mech) = parse_params::<BigRational>(&std::fs::read_to_string(&params).unwrap()).unwrap();
    let ds = sample_dataset(&p, &mech.unwrap(), 1_000_000, 17).unwrap();
    let obs = empirical_observable(&ds, &PlugIn { one_sided: true, ..PlugIn::default() }).unwrap();
    let direct = identify("1UD", &obs, &Tolerances::default()).unwrap().cace;
    let ud = entry(&report, "1UD")["cace"].as_float().unwrap();
    assert_eq!(ud, direct);
    assert!((ud - 1.0 / 3.0).abs() < 0.02);

    let mcar = entry(&report, "MCAR-Y")["cace"].as_float().unwrap();
    assert!((mcar - complete_case_wald(&sampled)).abs() < 1e-12);

    let other_seed = stdout(&ivmnar(&["simulate", params.to_str().unwrap(), "--n", "1000", "--seed", "18"]));
    assert_ne!(other_seed, stdout(&ivmnar(&["simulate", params.to_str().unwrap(), "--n", "1000", "--seed", "17"])));
}

#[test]
fn exact_identify_recovers_the_generating_effect() {
    let obs = scratch("ud_obs.toml");
    stdout(&ivmnar(&["simulate", data("ud_one_sided.toml").to_str().unwrap(), "-o", obs.to_str().unwrap()]));
    let out: toml::Value =
        toml::from_str(&stdout(&ivmnar(&["identify", obs.to_str().unwrap(), "--mechanism", "1UD", "--exact"])))
            .unwrap();
    assert_eq!(out["cace"].as_str(), Some("1/3"));
    assert_eq!(out["complier_mean_treated"].as_str(), Some("2/3"));
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let params = std::fs::read_to_string(data("ud_one_sided.toml")).unwrap();
    let zero = scratch("zero.toml");
    std::fs::write(&zero, params.replace("\"uc,d0\" = \"0.8\"", "\"uc,d0\" = \"0\"")).unwrap();
    let obs = scratch("zero_obs.toml");
    stdout(&ivmnar(&["simulate", zero.to_str().unwrap(), "-o", obs.to_str().unwrap()]));
    let path = obs.to_str().unwrap();
    assert_eq!(ivmnar(&["identify", path, "--mechanism", "1UD"]).status.code(), Some(2));
    assert_eq!(ivmnar(&["identify", path, "--mechanism", "1ZDY"]).status.code(), Some(3));
    assert_eq!(ivmnar(&["identify", path, "--mechanism", "9QQ"]).status.code(), Some(1));
    assert_eq!(ivmnar(&["identify", path]).status.code(), Some(1));

    let bad = scratch("bad.csv");
    std::fs::write(&bad, "z,d,y\n1,1,0\n,,1\n").unwrap();
    let out = ivmnar(&["sensitivity", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn sensitivity_refuses_with_reason() {
    let obs = scratch("ud_obs2.toml");
    stdout(&ivmnar(&["simulate", data("ud_one_sided.toml").to_str().unwrap(), "-o", obs.to_str().unwrap()]));
    let text = stdout(&ivmnar(&["sensitivity", obs.to_str().unwrap(), "--mechanism", "1ZDY"]));
    let report: toml::Value = toml::from_str(&text).unwrap();
    let e = entry(&report, "1ZDY");
    assert_eq!(e["applicable"].as_bool(), Some(false));
    assert_eq!(e["reason"].as_str(), Some("not identifiable (S3.1.4)"));
    assert!(e.get("cace").is_none());
}

#[test]
fn sensitivity_defaults_to_the_whole_catalog() {
    let obs = scratch("ud_obs3.toml");
    stdout(&ivmnar(&["simulate", data("ud_one_sided.toml").to_str().unwrap(), "-o", obs.to_str().unwrap()]));
    let report: toml::Value = toml::from_str(&stdout(&ivmnar(&["sensitivity", obs.to_str().unwrap()]))).unwrap();
    let entries = report["entry"].as_array().unwrap();
    assert_eq!(entries.len(), catalog().len());
    for e in entries {
        assert_eq!(e["applicable"].as_bool().unwrap(), e.get("cace").is_some());
    }
}

#[test]
fn verify_counterexamples_passes_every_fixture() {
    let out = stdout(&ivmnar(&["verify-counterexamples"]));
    assert!(out.contains("14 of 14 fixtures pass"));
    assert_eq!(out.lines().filter(|l| l.starts_with("S3") && l.ends_with("pass")).count(), 14);
}

#[test]
fn catalog_dump_lists_every_entry() {
    let all: toml::Value = toml::from_str(&stdout(&ivmnar(&["catalog", "dump"]))).unwrap();
    assert_eq!(all["mechanism"].as_array().unwrap().len(), catalog().len());
    let one: toml::Value = toml::from_str(&stdout(&ivmnar(&["catalog", "dump", "--mechanism", "1ud"]))).unwrap();
    let m = &one["mechanism"][0];
    assert_eq!(m["id"].as_str(), Some(lookup("1UD").unwrap().id.as_str()));
    assert_eq!(m["identifiable"].as_bool(), Some(true));
}
