//! The same observable law read under several missingness mechanisms.

use serde::Serialize;

use crate::catalog::lookup;
use crate::data::{empirical_observable, summarize, DataError, DatasetSummary, PlugIn};
use crate::engine::{check_conditions, identify, Diagnostic, IdentifyError, PositivityCheck};
use crate::forward::Dataset;
use crate::model::{ObservableDistribution, Tolerances};
use crate::scalar::Scalar;

/// One mechanism's reading of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityEntry {
    pub mechanism: String,
    pub applicable: bool,
    /// Why the entry has no estimate.
    pub reason: Option<String>,
    pub cace: Option<f64>,
    /// (treated, control) complier means.
    pub complier_means: Option<(f64, f64)>,
    pub diagnostics: Vec<Diagnostic>,
    pub positivity: Vec<PositivityCheck>,
    /// `None` when the mechanism was refused before any condition ran.
    pub conditions_passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub dataset: Option<DatasetSummary>,
    pub regime: crate::model::Regime,
    pub one_sided: bool,
    pub p_z: f64,
    pub tolerances: Tolerances,
    pub entries: Vec<SensitivityEntry>,
}

fn refusal_reason(e: &IdentifyError) -> String {
    match e {
        IdentifyError::MechanismNotIdentifiable { id, anchor } => {
            let tag = lookup(id)
                .ok()
                .and_then(|m| m.fixture)
                .and_then(|f| f.split('-').next().map(str::to_string))
                .unwrap_or_else(|| anchor.clone());
            format!("not identifiable ({tag})")
        }
        other => other.to_string(),
    }
}

fn entry<S: Scalar>(mech_id: &str, obs: &ObservableDistribution<S>, tol: &Tolerances) -> SensitivityEntry {
    let mechanism = lookup(mech_id).map(|m| m.id).unwrap_or_else(|_| mech_id.to_string());
    let blank = SensitivityEntry {
        mechanism,
        applicable: false,
        reason: None,
        cace: None,
        complier_means: None,
        diagnostics: Vec::new(),
        positivity: Vec::new(),
        conditions_passed: None,
    };
    let conditions = match check_conditions(mech_id, obs, tol) {
        Ok(c) => c,
        Err(e) => return SensitivityEntry { reason: Some(refusal_reason(&e)), ..blank },
    };
    if let Some(e) = conditions.blocked_by.as_ref().filter(|e| e.is_refusal()) {
        return SensitivityEntry { reason: Some(refusal_reason(e)), ..blank };
    }
    let base = SensitivityEntry {
        diagnostics: conditions.dependence.clone(),
        positivity: conditions.positivity.clone(),
        conditions_passed: Some(conditions.passed()),
        ..blank
    };
    match identify(mech_id, obs, tol) {
        Ok(r) => SensitivityEntry {
            applicable: true,
            cace: Some(r.cace.to_f64()),
            complier_means: r.complier_means.map(|(m1, m0)| (m1.to_f64(), m0.to_f64())),
            diagnostics: r.diagnostics,
            positivity: r.positivity,
            ..base
        },
        Err(e) => SensitivityEntry { reason: Some(refusal_reason(&e)), ..base },
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn entries<S: Scalar + Send + Sync>(
    obs: &ObservableDistribution<S>,
    mechanisms: &[String],
    tol: &Tolerances,
) -> Vec<SensitivityEntry> {
    std::thread::scope(|s| {
        let handles: Vec<_> = mechanisms.iter().map(|m| s.spawn(move || entry(m, obs, tol))).collect();
        handles
            .into_iter()
            .zip(mechanisms)
            .map(|(h, m)| {
                h.join().unwrap_or_else(|_| SensitivityEntry {
                    mechanism: m.clone(),
                    applicable: false,
                    reason: Some("internal error".into()),
                    cace: None,
                    complier_means: None,
                    diagnostics: Vec::new(),
                    positivity: Vec::new(),
                    conditions_passed: None,
                })
            })
            .collect()
    })
}

#[cfg(target_arch = "wasm32")]
fn entries<S: Scalar + Send + Sync>(
    obs: &ObservableDistribution<S>,
    mechanisms: &[String],
    tol: &Tolerances,
) -> Vec<SensitivityEntry> {
    mechanisms.iter().map(|m| entry(m, obs, tol)).collect()
}

/// Runs every requested mechanism on `obs`, one thread per mechanism.
/// Failures land in the entry; the batch itself cannot fail.
pub fn run_sensitivity<S: Scalar + Send + Sync>(
    obs: &ObservableDistribution<S>,
    mechanisms: &[String],
    tol: &Tolerances,
) -> SensitivityReport {
    let entries = entries(obs, mechanisms, tol);
    SensitivityReport {
        dataset: None,
        regime: obs.regime,
        one_sided: obs.one_sided,
        p_z: obs.p_z.to_f64(),
        tolerances: *tol,
        entries,
    }
}

/// Plug-in frequencies of `ds`, then [`run_sensitivity`].
pub fn run_sensitivity_on_dataset(
    ds: &Dataset,
    mechanisms: &[String],
    plug_in: &PlugIn,
    tol: &Tolerances,
) -> Result<SensitivityReport, DataError> {
    let obs = empirical_observable(ds, plug_in)?;
    let mut report = run_sensitivity(&obs, mechanisms, tol);
    report.dataset = Some(summarize(ds));
    Ok(report)
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    regime: &'a str,
    one_sided: bool,
    p_z: f64,
    tol_det: f64,
    tol_prob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<DatasetDoc>,
    entry: Vec<EntryDoc<'a>>,
}

#[derive(Serialize)]
struct DatasetDoc {
    n: usize,
    n_z0: usize,
    n_z1: usize,
    regime: String,
    missing_d: f64,
    missing_y: f64,
    one_sided_empirical: bool,
}

#[derive(Serialize)]
struct EntryDoc<'a> {
    mechanism: &'a str,
    applicable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cace: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    complier_mean_treated: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    complier_mean_control: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditions_passed: Option<bool>,
    diagnostic: Vec<DiagnosticDoc<'a>>,
    positivity: Vec<PositivityDoc<'a>>,
}

#[derive(Serialize)]
struct DiagnosticDoc<'a> {
    check: &'a str,
    magnitude: f64,
    threshold: f64,
    passed: bool,
}

#[derive(Serialize)]
struct PositivityDoc<'a> {
    cell: &'a str,
    mass: f64,
    passed: bool,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

impl SensitivityReport {
    /// Aligned plain-text table, one row per entry.
    pub fn table(&self) -> String {
        let header = ["mechanism", "applicable", "cace", "mean(c,1)", "mean(c,0)", "note"];
        let rows: Vec<[String; 6]> = self
            .entries
            .iter()
            .map(|e| {
                [
                    e.mechanism.clone(),
                    if e.applicable { "yes" } else { "no" }.into(),
                    fmt_opt(e.cace),
                    fmt_opt(e.complier_means.map(|m| m.0)),
                    fmt_opt(e.complier_means.map(|m| m.1)),
                    e.reason.clone().unwrap_or_default(),
                ]
            })
            .collect();
        let mut width = header.map(str::len);
        for r in &rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: Vec<&str>| {
            let padded: Vec<String> =
                cells.iter().zip(width).map(|(c, w)| format!("{c:<w$}")).collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = vec![line(header.to_vec())];
        out.extend(rows.iter().map(|r| line(r.iter().map(String::as_str).collect())));
        out.join("\n")
    }

    /// TOML report preceded by the table as `#` comments.
    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        let doc = ReportDoc {
            regime: self.regime.name(),
            one_sided: self.one_sided,
            p_z: self.p_z,
            tol_det: self.tolerances.det,
            tol_prob: self.tolerances.prob,
            dataset: self.dataset.as_ref().map(|d| DatasetDoc {
                n: d.n,
                n_z0: d.n_by_arm[0],
                n_z1: d.n_by_arm[1],
                regime: d.regime.name().to_string(),
                missing_d: d.missing_d,
                missing_y: d.missing_y,
                one_sided_empirical: d.one_sided_empirical,
            }),
            entry: self
                .entries
                .iter()
                .map(|e| EntryDoc {
                    mechanism: &e.mechanism,
                    applicable: e.applicable,
                    reason: e.reason.as_deref(),
                    cace: e.cace,
                    complier_mean_treated: e.complier_means.map(|m| m.0),
                    complier_mean_control: e.complier_means.map(|m| m.1),
                    conditions_passed: e.conditions_passed,
                    diagnostic: e
                        .diagnostics
                        .iter()
                        .map(|d| DiagnosticDoc {
                            check: &d.check,
                            magnitude: d.magnitude,
                            threshold: d.threshold,
                            passed: d.passed,
                        })
                        .collect(),
                    positivity: e
                        .positivity
                        .iter()
                        .map(|p| PositivityDoc { cell: &p.cell, mass: p.mass, passed: p.passed })
                        .collect(),
                })
                .collect(),
        };
        let mut out: String = self.table().lines().map(|l| format!("# {l}\n")).collect();
        out.push('\n');
        out.push_str(&toml::to_string(&doc)?);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{catalog, lookup};
    use crate::draw::{draw_params, DrawConfig};
    use crate::engine::wald_cace;
    use crate::forward::forward_observable;
    use crate::model::Regime;
    use num_rational::BigRational;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn complete_data_reads_as_wald() {
        let mech = lookup("1ZD").unwrap();
        let cfg = DrawConfig { fully_observed: true, one_sided: Some(false), ..DrawConfig::default() };
        let p = draw_params::<f64, _>(&mech, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let obs = forward_observable(&p, &mech).unwrap().as_complete(1e-12).unwrap();
        let report = run_sensitivity(&obs, &ids(&["1ZD"]), &Tolerances::default());
        let wald = wald_cace(&obs, &Tolerances::default()).unwrap();
        assert_eq!(report.entries[0].cace, Some(wald));
    }

    #[test]
    fn unidentifiable_entry_names_its_counterexample() {
        let mech = lookup("1ZD").unwrap();
        let p = draw_params::<f64, _>(&mech, &DrawConfig::default(), &mut ChaCha8Rng::seed_from_u64(4));
        let obs = forward_observable(&p, &mech).unwrap();
        let report = run_sensitivity(&obs, &ids(&["1ZDY", "1ZUDY", "nonsense"]), &Tolerances::default());
        let e = &report.entries[0];
        assert!(!e.applicable);
        assert_eq!(e.cace, None);
        assert_eq!(e.reason.as_deref(), Some("not identifiable (S3.1.4)"));
        assert_eq!(
            report.entries[1].reason.as_deref(),
            Some("not identifiable (outcome missing: most general mechanism)")
        );
        assert!(!report.entries[2].applicable);
    }

    #[test]
    fn generating_mechanism_recovers_truth_among_both_regime_entries() {
        let mech = lookup("1UD(+)2UD").unwrap();
        let cfg = DrawConfig { one_sided: Some(false), ..DrawConfig::default() };
        let p = draw_params::<BigRational, _>(&mech, &cfg, &mut ChaCha8Rng::seed_from_u64(11));
        let obs = forward_observable(&p, &mech).unwrap().to_float();
        let list: Vec<String> =
            catalog().iter().filter(|m| m.regime == Regime::Both).map(|m| m.id.clone()).collect();
        let report = run_sensitivity(&obs, &list, &Tolerances::default());
        assert_eq!(report.entries.len(), list.len());
        let own = report.entries.iter().find(|e| e.mechanism == mech.id).unwrap();
        let truth = p.true_cace().unwrap().to_f64();
        assert!((own.cace.unwrap() - truth).abs() < 1e-9);
        for e in &report.entries {
            assert!(e.applicable == e.cace.is_some());
            assert!(e.applicable || e.reason.is_some());
        }
    }

    #[test]
    fn every_catalog_id_gets_an_entry() {
        let mech = lookup("1UD").unwrap();
        let p = draw_params::<f64, _>(&mech, &DrawConfig::default(), &mut ChaCha8Rng::seed_from_u64(5));
        let obs = forward_observable(&p, &mech).unwrap();
        let list: Vec<String> = catalog().iter().map(|m| m.id.clone()).collect();
        let a = run_sensitivity(&obs, &list, &Tolerances::default());
        let b = run_sensitivity(&obs, &list, &Tolerances::default());
        assert_eq!(a.entries.len(), list.len());
        assert_eq!(a.to_toml().unwrap(), b.to_toml().unwrap());
    }

    #[test]
    fn report_parses_back_as_toml() {
        let ds = crate::data::parse_dataset_str("z,d,y\n1,1,1\n1,0,0\n0,0,1\n0,0,0\n1,1,\n0,0,\n").unwrap();
        let report =
            run_sensitivity_on_dataset(&ds, &ids(&["MCAR-Y", "1ZD"]), &PlugIn::default(), &Tolerances::default())
                .unwrap();
        let text = report.to_toml().unwrap();
        let value: toml::Value = toml::from_str(&text).unwrap();
        assert_eq!(value["dataset"]["n"].as_integer(), Some(6));
        assert_eq!(value["entry"].as_array().unwrap().len(), 2);
        assert!(text.starts_with("# mechanism"));
    }
}
