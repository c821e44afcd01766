use std::collections::BTreeSet;

use ivmnar::catalog::{catalog, lookup};
use ivmnar::forward::forward_observable;
use ivmnar::io::parse_params;
use ivmnar::model::{validate, Sidedness};
use ivmnar::oracle::{builtin_fixtures, search_alternative, verify_all};
use num_rational::BigRational;

const UD_PARAMS: &str = r#"
p_z = "1/2"
one_sided = true
y_support = ["0", "1"]

[outcome]
kind = "latent"
share_always = "0"
share_complier = "3/4"
share_never = "1/4"
always_treated = []
complier_control = ["2/3", "1/3"]
complier_treated = ["1/3", "2/3"]
never_control = ["1/2", "1/2"]

[response_y]
parents = ["u", "d"]
[response_y.probs]
"un,d0" = "0.6"
"uc,d0" = "0.8"
"uc,d1" = "0.7"
"#;

#[test]
fn every_fixture_verifies() {
    let reports = verify_all(&builtin_fixtures());
    let mut failures = Vec::new();
    for r in &reports {
        for (name, a) in r.assertions() {
            if !a.passed {
                failures.push(format!("{} {}: {}", r.id, name, a.detail));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn fixtures_and_catalog_reference_each_other_once() {
    let fixtures = builtin_fixtures();
    let ids: BTreeSet<&str> = fixtures.iter().map(|f| f.id.as_str()).collect();
    assert_eq!(ids.len(), 14);
    for m in catalog().iter().filter(|m| !m.identifiable) {
        if let Some(id) = &m.fixture {
            assert_eq!(fixtures.iter().filter(|f| &f.id == id && f.mechanism == m.id).count(), 1, "{id}");
        }
    }
    for f in &fixtures {
        let owner = lookup(&f.mechanism).unwrap();
        if !owner.identifiable {
            assert_eq!(owner.fixture.as_deref(), Some(f.id.as_str()));
        }
    }
}

#[test]
fn each_fixture_breaks_identification_of_its_mechanism() {
    for f in builtin_fixtures() {
        assert_ne!(f.cace_a, f.cace_b, "{}", f.id);
        let mech = lookup(&f.mechanism).unwrap();
        let sidedness_broken = match mech.sidedness {
            Sidedness::OneSidedOnly => !f.observables.one_sided,
            Sidedness::TwoSidedOnly => f.observables.one_sided,
            Sidedness::Either => false,
        };
        assert!(!mech.identifiable || sidedness_broken, "{}", f.id);
    }
}

#[test]
fn search_finds_second_solution_for_first_fixture() {
    let f = &builtin_fixtures()[0];
    let alt = search_alternative(&f.observables.to_float(), &f.mechanism, 7, 20_000).unwrap().unwrap();
    assert!(alt.residual < 1e-10);
    assert!((alt.cace - alt.reference).abs() > 1e-3);
    assert!(validate(&alt.params, &lookup(&f.mechanism).unwrap()).is_empty());
}

#[test]
fn search_finds_nothing_when_the_effect_is_identified() {
    let (p, _) = parse_params::<BigRational>(UD_PARAMS).unwrap();
    let mech = lookup("1UD").unwrap();
    let obs = forward_observable(&p, &mech).unwrap().to_float();
    assert!(search_alternative(&obs, "1UD", 3, 100_000).unwrap().is_none());
}
