use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ivmnar::catalog::{canonical_label, catalog, nonrandom_identified, Mechanism};
use ivmnar::data::{parse_dataset_str, write_csv};
use ivmnar::draw::{draw_params, DrawConfig};
use ivmnar::engine::{check_conditions, identify, solve_linear_odds, wald_cace};
use ivmnar::forward::{forward_observable, Dataset, Record};
use ivmnar::model::{
    all_keys, cell_label, parse_cell_label, regime_cells, CellId, ComplianceType, Regime, ResponseTable,
    StructuralParams, Tolerances, Var,
};
use ivmnar::scalar::Scalar;
use ivmnar::sensitivity::run_sensitivity;

type Q = BigRational;

fn q(n: i64, d: i64) -> Q {
    Q::new(n.into(), d.into())
}

fn backed() -> Vec<&'static Mechanism> {
    nonrandom_identified().collect()
}

fn draw(mech: &Mechanism, cfg: &DrawConfig, seed: u64) -> StructuralParams<Q> {
    draw_params(mech, cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn with_unit_response(p: &StructuralParams<Q>, mech: &Mechanism) -> StructuralParams<Q> {
    let k = p.y_support.len();
    let unit = |parents: &Option<Vec<Var>>| parents.clone().map(|ps| ResponseTable::constant(ps, k, Q::one()));
    StructuralParams { response_d: unit(&mech.rd_parents), response_y: unit(&mech.ry_parents), ..p.clone() }
}

#[test]
fn compliance_type_fixes_treatment() {
    let table: Vec<(char, u8, u8)> = [ComplianceType::Always, ComplianceType::Complier, ComplianceType::Never]
        .into_iter()
        .flat_map(|u| (0..2).map(move |z| (u.letter(), z, u.treatment(z))))
        .collect();
    assert_eq!(table, vec![('a', 0, 1), ('a', 1, 1), ('c', 0, 0), ('c', 1, 1), ('n', 0, 0), ('n', 1, 0)]);
}

#[test]
fn catalog_labels_round_trip() {
    for m in catalog() {
        assert_eq!(canonical_label(&m.id).as_deref(), Some(m.id.as_str()));
        assert_eq!(canonical_label(&m.id.to_lowercase()).as_deref(), Some(m.id.as_str()));
        assert_eq!(canonical_label(&m.pretty()).as_deref(), Some(m.id.as_str()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cell_labels_round_trip(mask in 1u8..32, k in 2usize..4, pick in any::<u64>()) {
        let all = [Var::Z, Var::U, Var::D, Var::Y, Var::Rd];
        let parents: Vec<Var> = all.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, v)| *v).collect();
        let labels: Vec<String> = (0..k).map(|y| format!("{}", y * 5)).collect();
        let keys = all_keys(&parents, k);
        let key = &keys[(pick % keys.len() as u64) as usize];
        let text = cell_label(&parents, key, &labels);
        let parsed = parse_cell_label(&parents, &text, &labels);
        prop_assert_eq!(parsed.as_ref(), Some(key));
    }

    #[test]
    fn forward_arms_sum_to_one_exactly(m in 0usize..54, seed in any::<u64>()) {
        let mech = &catalog()[m % catalog().len()];
        let p = draw(mech, &DrawConfig::default(), seed);
        let obs = forward_observable(&p, mech).unwrap();
        for z in 0..2u8 {
            let total = regime_cells(obs.regime, obs.k()).into_iter().fold(Q::zero(), |acc, c| acc + obs.get(z, c).clone());
            prop_assert_eq!(total, Q::one());
        }
        if p.one_sided {
            for y in 0..obs.k() {
                let treated = obs.get(0, CellId::Full { d: 1, y });
                prop_assert_eq!(treated, &Q::zero());
            }
        }
        if obs.regime == Regime::OutcomeOnly {
            for z in 0..2u8 {
                for d in 0..2u8 {
                    let coarse = (0..obs.k()).fold(obs.get(z, CellId::DOnly { d }).clone(), |acc, y| acc + obs.get(z, CellId::Full { d, y }).clone());
                    let joint = p.dy_table();
                    let direct = joint[z as usize][d as usize].iter().fold(Q::zero(), |a, v| a + v.clone());
                    prop_assert_eq!(coarse, direct);
                }
            }
        }
    }

    #[test]
    fn unit_response_masks_nothing_under_any_mechanism(a in 0usize..54, b in 0usize..54, seed in any::<u64>()) {
        let (ma, mb) = (&catalog()[a % catalog().len()], &catalog()[b % catalog().len()]);
        let cfg = DrawConfig { fully_observed: true, support_len: Some(2), one_sided: Some(false) };
        let p = draw(ma, &cfg, seed);
        let oa = forward_observable(&p, ma).unwrap().as_complete(0.0).unwrap();
        let ob = forward_observable(&with_unit_response(&p, mb), mb).unwrap().as_complete(0.0).unwrap();
        prop_assert_eq!(oa, ob);
    }

    #[test]
    fn identified_effect_is_difference_of_complier_means(m in 0usize..37, seed in any::<u64>()) {
        let mechs = backed();
        let mech = mechs[m % mechs.len()];
        let p = draw(mech, &DrawConfig::default(), seed);
        let obs = forward_observable(&p, mech).unwrap();
        let tol = Tolerances::default();
        prop_assume!(check_conditions(&mech.id, &obs, &tol).unwrap().passed());
        let r = identify(&mech.id, &obs, &tol).unwrap();
        prop_assert_eq!(&r.cace, &p.true_cace().unwrap());
        if let Some((m1, m0)) = r.complier_means {
            prop_assert_eq!(r.cace, m1 - m0);
        }
    }

    #[test]
    fn fully_observed_data_reduces_to_wald(m in 0usize..37, seed in any::<u64>()) {
        let mechs = backed();
        let mech = mechs[m % mechs.len()];
        let cfg = DrawConfig { fully_observed: true, ..DrawConfig::default() };
        let p = draw(mech, &cfg, seed);
        let obs = forward_observable(&p, mech).unwrap();
        let tol = Tolerances::default();
        prop_assume!(check_conditions(&mech.id, &obs, &tol).unwrap().passed());
        let wald = wald_cace(&obs.as_complete(0.0).unwrap(), &tol).unwrap();
        prop_assert_eq!(identify(&mech.id, &obs, &tol).unwrap().cace, wald);
    }

    #[test]
    fn scaling_one_odds_equation_keeps_the_solution(
        n in 2usize..4,
        entries in prop::collection::vec(-9i64..10, 9),
        solution in prop::collection::vec(0i64..10, 3),
        row in 0usize..3,
        scale in 1i64..50,
    ) {
        let a: Vec<Vec<Q>> = (0..n).map(|i| (0..n).map(|j| q(entries[i * 3 + j], 1)).collect()).collect();
        let x: Vec<Q> = solution[..n].iter().map(|v| q(*v, 3)).collect();
        let b: Vec<Q> = a.iter().map(|r| r.iter().zip(&x).fold(Q::zero(), |acc, (c, v)| acc + c * v)).collect();
        let tol = Tolerances::default();
        let base = solve_linear_odds(&a, &b, &tol);
        prop_assume!(base.is_ok());
        let (mut a2, mut b2) = (a.clone(), b.clone());
        let r = row % n;
        let c = q(scale, 7);
        a2[r] = a2[r].iter().map(|v| v * &c).collect();
        b2[r] = &b2[r] * &c;
        prop_assert_eq!(base.clone().unwrap(), x);
        prop_assert_eq!(solve_linear_odds(&a2, &b2, &tol).unwrap(), base.unwrap());
    }

    #[test]
    fn dataset_text_round_trips(
        rows in prop::collection::vec((0u8..2, prop::option::of(0u8..2), prop::option::of(0usize..4)), 1..60),
    ) {
        let support = [-1.5, 0.0, 2.0, 10.25];
        let csv_text: String = std::iter::once("z,d,y\n".to_string())
            .chain(rows.iter().map(|(z, d, y)| {
                format!("{z},{},{}\n", d.map(|v| v.to_string()).unwrap_or_default(), y.map(|i| support[i].render()).unwrap_or_default())
            }))
            .collect();
        let ds: Dataset = parse_dataset_str(&csv_text).unwrap();
        prop_assert_eq!(write_csv(&ds), csv_text.clone());
        prop_assert_eq!(parse_dataset_str(&write_csv(&ds)).unwrap(), ds.clone());
        let expected: Vec<Record> = rows
            .iter()
            .map(|(z, d, y)| Record { z: *z, d: *d, y: y.map(|i| ds.y_support.iter().position(|s| *s == support[i]).unwrap()) })
            .collect();
        prop_assert_eq!(ds.records, expected);
    }

    #[test]
    fn sensitivity_answers_every_catalog_id(m in 0usize..54, seed in any::<u64>()) {
        let mech = &catalog()[m % catalog().len()];
        let p = draw(mech, &DrawConfig::default(), seed);
        let obs = forward_observable(&p, mech).unwrap().to_float();
        let ids: Vec<String> = catalog().iter().map(|m| m.id.clone()).collect();
        let report = run_sensitivity(&obs, &ids, &Tolerances::default());
        prop_assert_eq!(report.entries.len(), ids.len());
        for e in &report.entries {
            prop_assert_eq!(e.applicable, e.cace.is_some());
            prop_assert!(e.applicable || e.reason.is_some());
        }
    }
}
