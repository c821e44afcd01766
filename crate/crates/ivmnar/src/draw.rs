//! Random structural parameters on a rational grid, so the same draw is
//! available to both backends.

use rand::Rng;

use crate::catalog::Mechanism;
use crate::model::{all_keys, LatentOutcome, OutcomeLaw, ResponseTable, Sidedness, StructuralParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DrawConfig {
    /// Forced sidedness; otherwise taken from the mechanism or drawn.
    pub one_sided: Option<bool>,
    /// Outcome support size; defaults to 2 for binary mechanisms and 2 or 3
    /// otherwise.
    pub support_len: Option<usize>,
    /// Set every response probability to one.
    pub fully_observed: bool,
}

const GRID: i64 = 40;

fn prob<S: Scalar, R: Rng>(rng: &mut R) -> S {
    S::from_ratio(rng.gen_range(4..=GRID - 4), GRID)
}

fn simplex<S: Scalar, R: Rng>(rng: &mut R, n: usize) -> Vec<S> {
    let w: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=8)).collect();
    let total: i64 = w.iter().sum();
    w.into_iter().map(|x| S::from_ratio(x, total)).collect()
}

/// Draws parameters that satisfy the structural constraints of `mech`, with
/// every probability strictly inside (0, 1).
pub fn draw_params<S: Scalar, R: Rng>(mech: &Mechanism, cfg: &DrawConfig, rng: &mut R) -> StructuralParams<S> {
    let one_sided = cfg.one_sided.unwrap_or_else(|| match mech.sidedness {
        Sidedness::OneSidedOnly => true,
        Sidedness::TwoSidedOnly => false,
        Sidedness::Either => rng.gen_bool(0.5),
    });
    let k = cfg.support_len.unwrap_or_else(|| if mech.binary_y { 2 } else { rng.gen_range(2..=3) });
    let y_support: Vec<S> = (0..k as i64).map(|y| S::from_ratio(y, 1)).collect();
    let shares = if one_sided {
        let s = simplex::<S, _>(rng, 2);
        vec![S::zero(), s[0].clone(), s[1].clone()]
    } else {
        simplex(rng, 3)
    };
    let outcome = OutcomeLaw::Latent(LatentOutcome {
        share_always: shares[0].clone(),
        share_complier: shares[1].clone(),
        share_never: shares[2].clone(),
        always_treated: if one_sided { Vec::new() } else { simplex(rng, k) },
        complier_control: simplex(rng, k),
        complier_treated: simplex(rng, k),
        never_control: simplex(rng, k),
    });
    let mut response = |parents: &Option<Vec<crate::model::Var>>| {
        parents.as_ref().map(|p| {
            let mut t = ResponseTable::new(p.clone());
            for key in all_keys(p, k) {
                let v = if cfg.fully_observed { S::one() } else { prob(rng) };
                t.set(key, v);
            }
            t
        })
    };
    let response_d = response(&mech.rd_parents);
    let response_y = response(&mech.ry_parents);
    StructuralParams {
        p_z: S::from_ratio(rng.gen_range(1..=3), 4),
        one_sided,
        y_support,
        outcome,
        response_d,
        response_y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::catalog;
    use crate::model::validate;
    use num_rational::BigRational;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for mech in catalog() {
            for _ in 0..5 {
                let p: StructuralParams<BigRational> = draw_params(mech, &DrawConfig::default(), &mut rng);
                assert!(validate(&p, mech).is_empty(), "{}: {:?}", mech.id, validate(&p, mech));
            }
        }
    }
}
