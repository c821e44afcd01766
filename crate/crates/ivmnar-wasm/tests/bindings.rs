use ivmnar_wasm::{catalog_entry, catalog_ids, sensitivity, verify_counterexamples};

const OBSERVABLES: &str = include_str!("../www/sample.toml");

#[test]
fn sensitivity_on_observables() {
    let text = sensitivity(OBSERVABLES, "1UD, 1ZDY", false, false).unwrap();
    let report: toml::Value = toml::from_str(&text).unwrap();
    let entries = report["entry"].as_array().unwrap();
    assert!((entries[0]["cace"].as_float().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(entries[1]["reason"].as_str(), Some("not identifiable (S3.1.4)"));
}

#[test]
fn sensitivity_on_csv() {
    let csv = "z,d,y\n1,1,1\n1,0,0\n0,0,1\n0,0,0\n1,1,\n0,0,\n";
    let report: toml::Value = toml::from_str(&sensitivity(csv, "MCAR-Y", false, false).unwrap()).unwrap();
    assert_eq!(report["dataset"]["n"].as_integer(), Some(6));
    assert!(sensitivity("z,d,y\n,,1\n", "", false, false).unwrap_err().contains("line 2"));
}

#[test]
fn empty_list_means_every_mechanism() {
    let report: toml::Value = toml::from_str(&sensitivity(OBSERVABLES, " ", false, false).unwrap()).unwrap();
    assert_eq!(report["entry"].as_array().unwrap().len(), catalog_ids().lines().count());
}

#[test]
fn fixtures_and_catalog() {
    assert!(verify_counterexamples().contains("14 of 14 fixtures pass"));
    assert!(catalog_entry("1ud").unwrap().contains("id = \"1UD\""));
    assert!(catalog_entry("nope").is_err());
}
