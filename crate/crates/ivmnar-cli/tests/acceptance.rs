use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ivmnar::catalog::{catalog, lookup, nonrandom_identified, JointRecoverability, Mechanism};
use ivmnar::data::{empirical_observable, PlugIn};
use ivmnar::draw::{draw_params, DrawConfig};
use ivmnar::engine::{check_conditions, identify, recover_joint, wald_cace, IdentifyError, JointError};
use ivmnar::forward::{forward_observable, sample_dataset};
use ivmnar::io::parse_params;
use ivmnar::model::{validate, ObservableDistribution, OutcomeLaw, StructuralParams, Tolerances};
use ivmnar::oracle::{builtin_fixtures, verify_all};
use ivmnar::scalar::Scalar;

type Q = BigRational;

const UD_PARAMS: &str = include_str!("data/ud_one_sided.toml");
const BIN: &str = env!("CARGO_BIN_EXE_ivmnar");

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (elapsed < limit, format!("{:.2}s of {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn counterexample_suite() -> Outcome {
    let start = Instant::now();
    let reports = verify_all(&builtin_fixtures());
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| r.id.clone()).collect();
    let (fast, time) = within(start.elapsed(), Duration::from_secs(5));
    outcome(
        failed.is_empty() && fast && reports.len() == 14,
        format!("{} of {} fixtures exact, {time}; failed: {failed:?}", reports.len() - failed.len(), reports.len()),
    )
}

/// Draws until `want` parameter sets pass validate and the conditions with
/// every dependence magnitude at least `floor`.
fn accepted_draws(mech: &Mechanism, cfg: &DrawConfig, want: usize, floor: f64, seed: u64) -> Vec<StructuralParams<Q>> {
    let tol = Tolerances::default();
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for _ in 0..want * 25 {
        if out.len() == want {
            break;
        }
        let p: StructuralParams<Q> = draw_params(mech, cfg, &mut rng);
        if !validate(&p, mech).is_empty() {
            continue;
        }
        let obs = forward_observable(&p, mech).unwrap();
        let report = check_conditions(&mech.id, &obs, &tol).unwrap();
        if report.passed() && report.min_magnitude() >= floor {
            out.push(p);
        }
    }
    out
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let mechs: Vec<&Mechanism> = nonrandom_identified().collect();
    let mut problems = Vec::new();
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (i, mech) in mechs.iter().enumerate() {
        let draws = accepted_draws(mech, &DrawConfig::default(), 200, 0.05, 1000 + i as u64);
        if draws.len() < 200 {
            problems.push(format!("{}: {} draws", mech.id, draws.len()));
        }
        for p in &draws {
            checked += 1;
            let exact = identify(&mech.id, &forward_observable(p, mech).unwrap(), &tol).map(|r| r.cace);
            if exact.as_ref() != Ok(&p.true_cace().unwrap()) {
                problems.push(format!("{} exact", mech.id));
            }
            let pf = p.to_float();
            match identify(&mech.id, &forward_observable(&pf, mech).unwrap(), &tol) {
                Ok(r) => worst = worst.max((r.cace - pf.true_cace().unwrap()).abs()),
                Err(e) => problems.push(format!("{} float: {e}", mech.id)),
            }
        }
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(60));
    outcome(
        problems.is_empty() && worst < 1e-9 && fast && mechs.len() == 37,
        format!("{} mechanisms, {checked} draws, max float error {worst:.1e}, {time}; problems: {problems:?}", mechs.len()),
    )
}

fn wald_reduction() -> Outcome {
    let tol = Tolerances::default();
    let ids = ["1ZD", "1UD", "1DY", "1ZY", "1Y", "2ZY", "2DY", "2UD", "1ZD+2ZD", "1UD(+)2UD"];
    let cfg = DrawConfig { fully_observed: true, ..DrawConfig::default() };
    let mut equal = 0;
    let mut total = 0;
    for (i, id) in ids.iter().enumerate() {
        let mech = lookup(id).unwrap();
        for p in accepted_draws(&mech, &cfg, 10, 0.0, 2000 + i as u64) {
            total += 1;
            let obs = forward_observable(&p, &mech).unwrap();
            let wald = wald_cace(&obs.as_complete(0.0).unwrap(), &tol).unwrap();
            if identify(id, &obs, &tol).map(|r| r.cace).as_ref() == Ok(&wald) {
                equal += 1;
            }
        }
    }
    outcome(equal == 100 && total == 100, format!("{equal} of {total} draws over {} mechanisms equal Wald exactly", ids.len()))
}

fn refuses(id: &str, obs: &ObservableDistribution<Q>) -> bool {
    match identify(id, obs, &Tolerances::default()) {
        Ok(_) => false,
        Err(e) => matches!(e, IdentifyError::MechanismNotIdentifiable { .. } | IdentifyError::SidednessMismatch { .. }),
    }
}

fn refusals() -> Outcome {
    let mut cases = 0;
    let mut refused = 0;
    let mut tally = |ok: bool| {
        cases += 1;
        refused += usize::from(ok);
    };
    let one_sided = DrawConfig { one_sided: Some(true), support_len: Some(2), ..DrawConfig::default() };
    let two_sided = DrawConfig { one_sided: Some(false), ..DrawConfig::default() };
    let outcome_only = lookup("1ZD").unwrap();
    let treatment_only = lookup("2ZY").unwrap();
    let mut r = rng(3000);
    for _ in 0..10 {
        let obs = forward_observable(&draw_params::<Q, _>(&outcome_only, &one_sided, &mut r), &outcome_only).unwrap();
        tally(refuses("1DY", &obs));
        tally(refuses("1ZY", &obs));
        let obs = forward_observable(&draw_params::<Q, _>(&treatment_only, &two_sided, &mut r), &treatment_only).unwrap();
        tally(refuses("2ZU", &obs));
    }
    for mech in catalog().iter().filter(|m| !m.identifiable) {
        for _ in 0..3 {
            let obs = forward_observable(&draw_params::<Q, _>(mech, &DrawConfig::default(), &mut r), mech).unwrap();
            tally(refuses(&mech.id, &obs));
        }
    }
    for f in builtin_fixtures() {
        tally(refuses(&f.mechanism, &f.observables));
    }
    outcome(refused == cases, format!("{refused} of {cases} inputs refused"))
}

/// Parameters whose latent outcome laws are all the same, so Y carries no
/// information about Z, D or the stratum.
fn flatten_outcome(p: &mut StructuralParams<Q>) {
    if let OutcomeLaw::Latent(l) = &mut p.outcome {
        let law = l.complier_control.clone();
        l.complier_treated = law.clone();
        l.never_control = law.clone();
        if !l.always_treated.is_empty() {
            l.always_treated = law;
        }
    }
}

fn dependence_detection() -> Outcome {
    let tol = Tolerances::default();
    let cases: [(&str, bool); 5] = [("1DY", false), ("1ZY", false), ("2ZD", false), ("1Y", false), ("2ZU", true)];
    let mut detected = 0;
    let mut total = 0;
    let mut worst = 0.0f64;
    for (i, (id, one_sided)) in cases.iter().enumerate() {
        let mech = lookup(id).unwrap();
        let cfg = DrawConfig { one_sided: Some(*one_sided), ..DrawConfig::default() };
        let mut r = rng(4000 + i as u64);
        for _ in 0..4 {
            total += 1;
            let mut p: StructuralParams<Q> = draw_params(&mech, &cfg, &mut r);
            flatten_outcome(&mut p);
            let exact = identify(id, &forward_observable(&p, &mech).unwrap(), &tol);
            let float = identify(id, &forward_observable(&p.to_float(), &mech).unwrap(), &tol);
            match (exact, float) {
                (
                    Err(IdentifyError::DependenceViolated { magnitude: m_exact, .. }),
                    Err(IdentifyError::DependenceViolated { magnitude: m_float, .. }),
                ) if m_exact == 0.0 && m_float < 1e-12 => {
                    detected += 1;
                    worst = worst.max(m_float);
                }
                _ => {}
            }
        }
    }
    outcome(detected == 20 && total == 20, format!("{detected} of {total} flagged, largest float magnitude {worst:.1e}"))
}

fn joint_recovery() -> Outcome {
    let tol = Tolerances::default();
    let mut problems = Vec::new();
    let mut recovered = 0;
    for (i, mech) in catalog().iter().filter(|m| m.joint == JointRecoverability::Yes).enumerate() {
        for p in accepted_draws(mech, &DrawConfig::default(), 10, 0.0, 5000 + i as u64) {
            let want = p.joint_law().unwrap();
            match recover_joint(&mech.id, &forward_observable(&p, mech).unwrap(), &tol) {
                Ok(j) if j == want => recovered += 1,
                other => problems.push(format!("{} exact: {:?}", mech.id, other.err())),
            }
            let pf = p.to_float();
            match recover_joint(&mech.id, &forward_observable(&pf, mech).unwrap(), &tol) {
                Ok(j) if j.max_abs_diff(&pf.joint_law().unwrap()) < 1e-9 => {}
                other => problems.push(format!("{} float: {:?}", mech.id, other.err())),
            }
        }
    }
    let mut refusals = 0;
    for (id, cfg) in [
        ("1UY", DrawConfig::default()),
        ("2UY", DrawConfig { one_sided: Some(false), ..DrawConfig::default() }),
    ] {
        let mech = lookup(id).unwrap();
        for p in accepted_draws(&mech, &cfg, 10, 0.0, 6000) {
            match recover_joint(id, &forward_observable(&p, &mech).unwrap(), &tol) {
                Err(JointError::NotRecoverable(_)) => refusals += 1,
                other => problems.push(format!("{id}: {:?}", other.map(|_| "recovered"))),
            }
        }
    }
    outcome(
        problems.is_empty() && refusals == 20 && recovered > 0,
        format!("{recovered} joints recovered, {refusals} of 20 refusals; problems: {problems:?}"),
    )
}

fn ud_params() -> (StructuralParams<Q>, Mechanism) {
    let (p, m) = parse_params::<Q>(UD_PARAMS).unwrap();
    (p, m.unwrap())
}

fn plug_in_consistency() -> Outcome {
    let start = Instant::now();
    let (p, mech) = ud_params();
    let truth = p.true_cace().unwrap().to_f64();
    let plug = PlugIn { one_sided: true, ..PlugIn::default() };
    let estimates: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..100u64)
            .map(|seed| {
                let (p, mech) = (&p, &mech);
                s.spawn(move || {
                    let ds = sample_dataset(p, mech, 1_000_000, seed).unwrap();
                    let obs = empirical_observable(&ds, &plug).unwrap();
                    identify("1UD", &obs, &Tolerances::default()).map(|r| r.cace).unwrap_or(f64::NAN)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let close = estimates.iter().filter(|e| (*e - truth).abs() < 0.02).count();
    let worst = estimates.iter().map(|e| (e - truth).abs()).fold(0.0, f64::max);
    let (fast, time) = within(start.elapsed(), Duration::from_secs(120));
    outcome(
        close >= 95 && fast && (truth - 1.0 / 3.0).abs() < 1e-15,
        format!("{close} of 100 seeds within 0.02 of {truth:.6}, largest error {worst:.4}, {time}"),
    )
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn cli_end_to_end() -> Result<Outcome, String> {
    let dir = std::env::temp_dir().join(format!("ivmnar-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let params = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/ud_one_sided.toml");
    let csv = dir.join("ud.csv");
    let (params, csv) = (params.to_str().unwrap(), csv.to_str().unwrap());
    let seed = "7";
    let run = |csv: &str| -> Result<String, String> {
        cli(&["simulate", params, "--n", "1000000", "--seed", seed, "-o", csv])?;
        cli(&["sensitivity", csv, "--mechanism", "MCAR-Y", "--mechanism", "1ZD", "--mechanism", "1UD", "--one-sided"])
    };
    let first = run(csv)?;
    let second_csv = dir.join("ud2.csv");
    let second = run(second_csv.to_str().unwrap())?;
    let same_csv = std::fs::read(csv).map_err(|e| e.to_string())? == std::fs::read(&second_csv).map_err(|e| e.to_string())?;
    let report: toml::Value = toml::from_str(&first).map_err(|e| e.to_string())?;
    let cace = |id: &str| -> Option<f64> {
        report["entry"].as_array()?.iter().find(|e| e["mechanism"].as_str() == Some(id))?.get("cace")?.as_float()
    };

    let (p, mech) = ud_params();
    let ds = sample_dataset(&p, &mech, 1_000_000, seed.parse().unwrap()).map_err(|e| e.to_string())?;
    let obs = empirical_observable(&ds, &PlugIn { one_sided: true, ..PlugIn::default() }).map_err(|e| e.to_string())?;
    let library = identify("1UD", &obs, &Tolerances::default()).map_err(|e| e.to_string())?.cace;

    let mut sums = [[0.0f64; 3]; 2];
    for r in ds.records.iter().filter(|r| r.y.is_some()) {
        let s = &mut sums[r.z as usize];
        s[0] += 1.0;
        s[1] += f64::from(r.d.unwrap());
        s[2] += ds.y_support[r.y.unwrap()];
    }
    let m = |z: usize, c: usize| sums[z][c] / sums[z][0];
    let complete_case_wald = (m(1, 2) - m(0, 2)) / (m(1, 1) - m(0, 1));

    let ud = cace("1UD").ok_or("no 1UD estimate")?;
    let mcar = cace("MCAR-Y").ok_or("no MCAR-Y estimate")?;
    let passed = ud == library
        && (ud - 1.0 / 3.0).abs() < 0.02
        && (mcar - complete_case_wald).abs() < 1e-12
        && cace("1ZD").is_some()
        && first == second
        && same_csv;
    Ok(outcome(
        passed,
        format!(
            "1UD {ud:.6} (library {library:.6}), MCAR-Y {mcar:.6} vs complete-case Wald {complete_case_wald:.6}, repeat run identical: {}",
            first == second && same_csv
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("counterexample suite", counterexample_suite),
        ("round-trip identification", round_trip),
        ("Wald reduction", wald_reduction),
        ("refusal correctness", refusals),
        ("dependence detection", dependence_detection),
        ("joint-law recovery", joint_recovery),
        ("plug-in consistency", plug_in_consistency),
        ("CLI end-to-end", || cli_end_to_end().unwrap_or_else(|e| outcome(false, e))),
    ];
    let mut all = true;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        all &= o.passed;
        println!("criterion {} {} {name}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
