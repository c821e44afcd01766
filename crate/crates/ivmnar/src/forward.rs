//! Forward map from structural parameters to the observable law, and
//! finite-sample simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::catalog::Mechanism;
use crate::model::{
    coarsen, validate_structure, Atom, CellId, ObservableDistribution, StructuralParams, Violation,
};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForwardError {
    #[error("invalid parameters: {}", .0.iter().map(|v| v.0.clone()).collect::<Vec<_>>().join("; "))]
    InvalidParams(Vec<Violation>),
}

/// An atom together with both indicators and its probability given Z.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedAtom<S> {
    pub atom: Atom,
    pub ry: u8,
    pub mass: S,
}

/// Dense joint law over (Z, U, D, Y, R^D, R^Y), conditional on Z.
pub fn masked_atoms<S: Scalar>(
    params: &StructuralParams<S>,
    mech: &Mechanism,
) -> Result<Vec<MaskedAtom<S>>, ForwardError> {
    let violations = validate_structure(params, mech);
    if !violations.is_empty() {
        return Err(ForwardError::InvalidParams(violations));
    }
    let mut out = Vec::new();
    for (atom, mass) in params.outcome_atoms() {
        if mass == S::zero() {
            continue;
        }
        let rd_branches: Vec<(u8, S)> = match &params.response_d {
            None => vec![(1, S::one())],
            Some(t) => {
                let s = t.get(&atom).cloned().unwrap_or_else(S::zero);
                vec![(1, s.clone()), (0, S::one() - s)]
            }
        };
        for (rd, p_rd) in rd_branches {
            let atom = Atom { rd, ..atom };
            let ry_branches: Vec<(u8, S)> = match &params.response_y {
                None => vec![(1, S::one())],
                Some(t) => {
                    let r = t.get(&atom).cloned().unwrap_or_else(S::zero);
                    vec![(1, r.clone()), (0, S::one() - r)]
                }
            };
            for (ry, p_ry) in ry_branches {
                let m = mass.clone() * p_rd.clone() * p_ry;
                if m != S::zero() {
                    out.push(MaskedAtom { atom, ry, mass: m });
                }
            }
        }
    }
    Ok(out)
}

/// The observable law of `params` under `mech`, in `mech`'s regime.
pub fn forward_observable<S: Scalar>(
    params: &StructuralParams<S>,
    mech: &Mechanism,
) -> Result<ObservableDistribution<S>, ForwardError> {
    let atoms = masked_atoms(params, mech)?;
    let mut obs = ObservableDistribution::zeros(
        mech.regime,
        params.p_z.clone(),
        params.one_sided,
        params.y_support.clone(),
    );
    for a in atoms {
        let cell = coarsen(mech.regime, a.atom.d, a.atom.y, a.atom.rd, a.ry);
        let slot = obs.arms[a.atom.z as usize].get_mut(cell);
        *slot = slot.clone() + a.mass;
    }
    Ok(obs)
}

/// One coarsened record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    pub z: u8,
    pub d: Option<u8>,
    /// Index into the dataset's outcome support.
    pub y: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
/// Coarsened records with a numeric outcome support; `y_labels` are the
/// shortest decimal forms of the support values.
pub struct Dataset {
    pub regime: crate::model::Regime,
    pub y_support: Vec<f64>,
    pub y_labels: Vec<String>,
    pub records: Vec<Record>,
}

/// Draws `n` i.i.d. records from the joint law and masks them.
///
/// The generator is ChaCha8 seeded through `seed_from_u64`, so a seed fixes
/// the dataset on every platform.
pub fn sample_dataset<S: Scalar>(
    params: &StructuralParams<S>,
    mech: &Mechanism,
    n: usize,
    seed: u64,
) -> Result<Dataset, ForwardError> {
    let atoms = masked_atoms(params, mech)?;
    let mut cumulative = Vec::with_capacity(atoms.len());
    let mut records_of = Vec::with_capacity(atoms.len());
    let mut total = 0.0;
    for a in &atoms {
        let pz = if a.atom.z == 1 { params.p_z.to_f64() } else { 1.0 - params.p_z.to_f64() };
        total += pz * a.mass.to_f64();
        cumulative.push(total);
        let record = match coarsen(mech.regime, a.atom.d, a.atom.y, a.atom.rd, a.ry) {
            CellId::Full { d, y } => Record { z: a.atom.z, d: Some(d), y: Some(y) },
            CellId::YOnly { y } => Record { z: a.atom.z, d: None, y: Some(y) },
            CellId::DOnly { d } => Record { z: a.atom.z, d: Some(d), y: None },
            CellId::Neither => Record { z: a.atom.z, d: None, y: None },
        };
        records_of.push(record);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = records_of.len() - 1;
    let records = (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * total;
            let i = cumulative.partition_point(|&c| c <= u).min(last);
            records_of[i]
        })
        .collect();
    Ok(Dataset {
        regime: mech.regime,
        y_support: params.y_support.iter().map(Scalar::to_f64).collect(),
        y_labels: params.y_support.iter().map(|v| v.to_f64().render()).collect(),
        records,
    })
}
