use ivmnar::catalog::{catalog, JointRecoverability};
use ivmnar::draw::{draw_params, DrawConfig};
use ivmnar::engine::{check_conditions, identify, recover_joint, JointError};
use ivmnar::forward::forward_observable;
use ivmnar::model::{StructuralParams, Tolerances};
use ivmnar::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn round_trip_every_identifiable_mechanism() {
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    for mech in catalog().iter().filter(|m| m.identifiable) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut passed = 0;
        for i in 0..12 {
            let p: StructuralParams<BigRational> = draw_params(mech, &DrawConfig::default(), &mut rng);
            let obs = forward_observable(&p, mech).unwrap();
            let report = check_conditions(&mech.id, &obs, &tol).unwrap();
            if !report.passed() {
                continue;
            }
            passed += 1;
            let got = identify(&mech.id, &obs, &tol).unwrap().cace;
            let want = p.true_cace().unwrap();
            if got != want {
                failures.push(format!("{} #{i}: {} vs {}", mech.id, got, want));
            }
            let pf = p.to_float();
            let obs_f = forward_observable(&pf, mech).unwrap();
            match identify(&mech.id, &obs_f, &tol) {
                Ok(r) => {
                    if (r.cace - pf.true_cace().unwrap()).abs() > 1e-9 {
                        failures.push(format!("{} #{i} float: {} vs {}", mech.id, r.cace, pf.true_cace().unwrap()));
                    }
                }
                Err(e) => failures.push(format!("{} #{i} float: {e}", mech.id)),
            }
            match recover_joint(&mech.id, &obs, &tol) {
                Ok(j) => {
                    if j != p.joint_law().unwrap() {
                        failures.push(format!("{} #{i}: joint differs", mech.id));
                    }
                }
                Err(JointError::NotRecoverable(reason)) => {
                    if mech.joint == JointRecoverability::Yes {
                        failures.push(format!("{} #{i}: joint {reason}", mech.id));
                    }
                }
                Err(e) => failures.push(format!("{} #{i}: joint {e}", mech.id)),
            }
        }
        if passed < 6 {
            failures.push(format!("{}: only {passed} draws passed the conditions", mech.id));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
