//! Browser entry points. Every function takes and returns plain text so the
//! page needs no bindings beyond strings.

use wasm_bindgen::prelude::*;

use ivmnar::catalog::{catalog, lookup};
use ivmnar::data::{parse_dataset_str, PlugIn};
use ivmnar::io::{parse_observables, write_catalog};
use ivmnar::model::Tolerances;
use ivmnar::oracle::{builtin_fixtures, render_table, verify_all};
use ivmnar::sensitivity::{run_sensitivity, run_sensitivity_on_dataset};

fn mechanism_list(text: &str) -> Vec<String> {
    let ids: Vec<String> =
        text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::to_string).collect();
    if ids.is_empty() {
        catalog().iter().map(|m| m.id.clone()).collect()
    } else {
        ids
    }
}

/// Sensitivity report for a `z,d,y` CSV or an observables TOML document.
/// `mechanisms` is a comma or space separated list; empty means all.
#[wasm_bindgen]
pub fn sensitivity(input: &str, mechanisms: &str, one_sided: bool, smooth: bool) -> Result<String, String> {
    let ids = mechanism_list(mechanisms);
    let tol = Tolerances::default();
    let report = if input.trim_start().starts_with("z,d,y") {
        let ds = parse_dataset_str(input).map_err(|e| e.to_string())?;
        run_sensitivity_on_dataset(&ds, &ids, &PlugIn { one_sided, smooth, tol: 1e-12 }, &tol)
            .map_err(|e| e.to_string())?
    } else {
        let mut obs = parse_observables::<f64>(input).map_err(|e| e.to_string())?;
        obs.one_sided |= one_sided;
        run_sensitivity(&obs, &ids, &tol)
    };
    report.to_toml().map_err(|e| e.to_string())
}

/// Pass/fail table for the built-in counterexample fixtures.
#[wasm_bindgen]
pub fn verify_counterexamples() -> String {
    render_table(&verify_all(&builtin_fixtures()))
}

/// Catalog entry as TOML; ids are matched up to reordering and case.
#[wasm_bindgen]
pub fn catalog_entry(id: &str) -> Result<String, String> {
    let mech = lookup(id).map_err(|e| e.to_string())?;
    write_catalog(&[mech]).map_err(|e| e.to_string())
}

/// Every catalog id, one per line.
#[wasm_bindgen]
pub fn catalog_ids() -> String {
    catalog().iter().map(|m| m.id.as_str()).collect::<Vec<_>>().join("\n")
}
