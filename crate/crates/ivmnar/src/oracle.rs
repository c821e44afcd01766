//! Counterexample fixtures: two parameterizations with one observable law
//! and different effects, verified in exact arithmetic. Also a numeric search
//! for observationally equivalent parameters on arbitrary inputs.

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::catalog::{lookup, Mechanism};
use crate::engine::{identify, IdentifyError};
use crate::forward::forward_observable;
use crate::io::{parse_fixture, FormatError, RawFixture};
use crate::model::{
    all_keys, validate, LatentOutcome, ObservableDistribution, OutcomeLaw, ResponseTable, StructuralParams,
    Tolerances,
};
use crate::scalar::Scalar;

const SOURCES: [&str; 14] = [
    include_str!("../fixtures/s3_1_1.toml"),
    include_str!("../fixtures/s3_1_2.toml"),
    include_str!("../fixtures/s3_1_3.toml"),
    include_str!("../fixtures/s3_1_4.toml"),
    include_str!("../fixtures/s3_1_5.toml"),
    include_str!("../fixtures/s3_2_1.toml"),
    include_str!("../fixtures/s3_2_2.toml"),
    include_str!("../fixtures/s3_2_3.toml"),
    include_str!("../fixtures/s3_3_1.toml"),
    include_str!("../fixtures/s3_3_2.toml"),
    include_str!("../fixtures/s3_3_3.toml"),
    include_str!("../fixtures/s3_3_4.toml"),
    include_str!("../fixtures/s3_3_5.toml"),
    include_str!("../fixtures/s3_3_6.toml"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleFixture {
    pub id: String,
    pub mechanism: String,
    pub note: String,
    pub observables: ObservableDistribution<BigRational>,
    pub params_a: StructuralParams<BigRational>,
    pub params_b: StructuralParams<BigRational>,
    pub cace_a: BigRational,
    pub cace_b: BigRational,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),
}

impl CounterexampleFixture {
    pub fn from_raw(raw: &RawFixture) -> Result<Self, OracleError> {
        let mech = lookup(&raw.mechanism).map_err(|_| OracleError::UnknownMechanism(raw.mechanism.clone()))?;
        Ok(Self {
            id: raw.id.clone(),
            mechanism: mech.id,
            note: raw.note.clone(),
            observables: raw.observables.to_observables()?,
            params_a: raw.params_a.to_params()?,
            params_b: raw.params_b.to_params()?,
            cace_a: BigRational::parse(&raw.cace_a.text()).map_err(|_| FormatError::Number {
                field: "cace_a".into(),
                value: raw.cace_a.text(),
            })?,
            cace_b: BigRational::parse(&raw.cace_b.text()).map_err(|_| FormatError::Number {
                field: "cace_b".into(),
                value: raw.cace_b.text(),
            })?,
        })
    }

    pub fn parse(text: &str) -> Result<Self, OracleError> {
        Self::from_raw(&parse_fixture(text)?)
    }
}

/// The fourteen checked-in fixtures, in section order.
pub fn builtin_fixtures() -> Vec<CounterexampleFixture> {
    SOURCES
        .iter()
        .map(|s| CounterexampleFixture::parse(s).expect("checked-in fixture parses"))
        .collect()
}

/// Source text of the checked-in fixtures.
pub fn builtin_sources() -> &'static [&'static str] {
    &SOURCES
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assertion {
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn pass(detail: impl Into<String>) -> Self {
        Self { passed: true, detail: detail.into() }
    }
    fn fail(detail: impl Into<String>) -> Self {
        Self { passed: false, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub id: String,
    pub mechanism: String,
    /// First parameterization reproduces every observable cell.
    pub observables_a: Assertion,
    /// Second parameterization reproduces every observable cell.
    pub observables_b: Assertion,
    /// Both parameterizations imply the recorded effects.
    pub caces: Assertion,
    /// The two recorded effects differ.
    pub distinct: Assertion,
    /// The engine refuses the fixture's mechanism on its observables.
    pub refused: Assertion,
}

impl VerificationReport {
    pub fn assertions(&self) -> [(&'static str, &Assertion); 5] {
        [
            ("observables_a", &self.observables_a),
            ("observables_b", &self.observables_b),
            ("caces", &self.caces),
            ("distinct", &self.distinct),
            ("refused", &self.refused),
        ]
    }

    pub fn passed(&self) -> bool {
        self.assertions().iter().all(|(_, a)| a.passed)
    }
}

fn reproduces(
    params: &StructuralParams<BigRational>,
    mech: &Mechanism,
    target: &ObservableDistribution<BigRational>,
) -> Assertion {
    let obs = match forward_observable(params, mech) {
        Ok(o) => o,
        Err(e) => return Assertion::fail(e.to_string()),
    };
    if obs.regime != target.regime {
        return Assertion::fail(format!("forward map is {} but fixture is {}", obs.regime, target.regime));
    }
    if obs.y_support != target.y_support {
        return Assertion::fail("outcome supports differ");
    }
    let mismatches: Vec<String> = obs
        .cells()
        .into_iter()
        .filter(|&(z, c)| obs.get(z, c) != target.get(z, c))
        .map(|(z, c)| {
            format!("{}: {} vs {}", obs.cell_key(z, c), obs.get(z, c).render(), target.get(z, c).render())
        })
        .collect();
    if mismatches.is_empty() {
        Assertion::pass(format!("{} cells match", obs.cells().len()))
    } else {
        Assertion::fail(mismatches.join("; "))
    }
}

/// Checks a fixture end to end in exact arithmetic.
pub fn verify_fixture(f: &CounterexampleFixture) -> VerificationReport {
    let mech = lookup(&f.mechanism);
    let (observables_a, observables_b, refused) = match &mech {
        Err(e) => {
            let fail = Assertion::fail(e.to_string());
            (fail.clone(), fail.clone(), fail)
        }
        Ok(m) => {
            let refused = match identify(&m.id, &f.observables, &Tolerances::default()) {
                Ok(r) => Assertion::fail(format!("identified cace {}", r.cace.render())),
                Err(
                    e @ (IdentifyError::MechanismNotIdentifiable { .. } | IdentifyError::SidednessMismatch { .. }),
                ) => Assertion::pass(e.to_string()),
                Err(e) => Assertion::fail(format!("unexpected error: {e}")),
            };
            (reproduces(&f.params_a, m, &f.observables), reproduces(&f.params_b, m, &f.observables), refused)
        }
    };
    let caces = match (f.params_a.true_cace(), f.params_b.true_cace()) {
        (Ok(a), Ok(b)) if a == f.cace_a && b == f.cace_b => Assertion::pass(format!("{} and {}", a.render(), b.render())),
        (Ok(a), Ok(b)) => Assertion::fail(format!(
            "implied {} and {}, recorded {} and {}",
            a.render(),
            b.render(),
            f.cace_a.render(),
            f.cace_b.render()
        )),
        (Err(e), _) | (_, Err(e)) => Assertion::fail(e.to_string()),
    };
    let distinct = if f.cace_a != f.cace_b {
        Assertion::pass(format!("{} != {}", f.cace_a.render(), f.cace_b.render()))
    } else {
        Assertion::fail(format!("both effects are {}", f.cace_a.render()))
    };
    VerificationReport {
        id: f.id.clone(),
        mechanism: f.mechanism.clone(),
        observables_a,
        observables_b,
        caces,
        distinct,
        refused,
    }
}

/// Verifies every fixture, one worker thread each.
#[cfg(not(target_arch = "wasm32"))]
pub fn verify_all(fixtures: &[CounterexampleFixture]) -> Vec<VerificationReport> {
    std::thread::scope(|s| {
        let handles: Vec<_> = fixtures.iter().map(|f| s.spawn(move || verify_fixture(f))).collect();
        handles.into_iter().map(|h| h.join().expect("verification thread")).collect()
    })
}

#[cfg(target_arch = "wasm32")]
pub fn verify_all(fixtures: &[CounterexampleFixture]) -> Vec<VerificationReport> {
    fixtures.iter().map(verify_fixture).collect()
}

/// Aligned pass/fail table with the detail of every failed assertion.
pub fn render_table(reports: &[VerificationReport]) -> String {
    let names = ["observables_a", "observables_b", "caces", "distinct", "refused"];
    let id_w = reports.iter().map(|r| r.id.len()).max().unwrap_or(2).max(2);
    let mut out = format!("{:<id_w$}  {}  result\n", "id", names.join("  "));
    for r in reports {
        let marks: Vec<String> = r
            .assertions()
            .iter()
            .map(|(name, a)| format!("{:<w$}", if a.passed { "ok" } else { "FAIL" }, w = name.len()))
            .collect();
        let verdict = if r.passed() { "pass" } else { "FAIL" };
        out.push_str(&format!("{:<id_w$}  {}  {verdict}\n", r.id, marks.join("  ")));
        for (name, a) in r.assertions() {
            if !a.passed {
                out.push_str(&format!("  {name}: {}\n", a.detail));
            }
        }
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    out.push_str(&format!("{passed} of {} fixtures pass\n", reports.len()));
    out
}

/// Observationally equivalent parameters with a different effect.
#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub params: StructuralParams<f64>,
    pub cace: f64,
    /// The effect it differs from: the identified value, or an earlier
    /// solution when the mechanism is not identified on this input.
    pub reference: f64,
    /// Euclidean norm of the observable residual.
    pub residual: f64,
    pub iterations: usize,
}

/// Maps points of the unit cube onto parameters of one mechanism.
struct Layout {
    mech: Mechanism,
    one_sided: bool,
    p_z: f64,
    y_support: Vec<f64>,
    latent: bool,
    rd_keys: Vec<Vec<u8>>,
    ry_keys: Vec<Vec<u8>>,
    dim: usize,
}

/// Stick-breaking from `n - 1` coordinates to an `n`-point simplex.
fn simplex(x: &[f64], n: usize) -> Vec<f64> {
    let mut rest = 1.0;
    let mut out = Vec::with_capacity(n);
    for &t in &x[..n - 1] {
        out.push(rest * t);
        rest *= 1.0 - t;
    }
    out.push(rest);
    out
}

impl Layout {
    fn new(mech: &Mechanism, obs: &ObservableDistribution<f64>) -> Self {
        let k = obs.k();
        let latent = [&mech.ry_parents, &mech.rd_parents]
            .into_iter()
            .flatten()
            .any(|p| p.contains(&crate::model::Var::U));
        let rd_keys = mech.rd_parents.as_ref().map_or(Vec::new(), |p| all_keys(p, k));
        let ry_keys = mech.ry_parents.as_ref().map_or(Vec::new(), |p| all_keys(p, k));
        let outcome_dim = if latent {
            let shares = if obs.one_sided { 1 } else { 2 };
            let laws = if obs.one_sided { 3 } else { 4 };
            shares + laws * (k - 1)
        } else {
            let z0 = if obs.one_sided { k } else { 2 * k };
            (z0 - 1) + (2 * k - 1)
        };
        Self {
            mech: mech.clone(),
            one_sided: obs.one_sided,
            p_z: obs.p_z,
            y_support: obs.y_support.clone(),
            latent,
            dim: outcome_dim + rd_keys.len() + ry_keys.len(),
            rd_keys,
            ry_keys,
        }
    }

    fn params(&self, x: &[f64]) -> StructuralParams<f64> {
        let k = self.y_support.len();
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &x[at..at + n];
            at += n;
            s
        };
        let outcome = if self.latent {
            let (a, c, n) = if self.one_sided {
                let s = simplex(take(1), 2);
                (0.0, s[0], s[1])
            } else {
                let s = simplex(take(2), 3);
                (s[0], s[1], s[2])
            };
            let always_treated = if self.one_sided { Vec::new() } else { simplex(take(k - 1), k) };
            OutcomeLaw::Latent(LatentOutcome {
                share_always: a,
                share_complier: c,
                share_never: n,
                always_treated,
                complier_control: simplex(take(k - 1), k),
                complier_treated: simplex(take(k - 1), k),
                never_control: simplex(take(k - 1), k),
            })
        } else {
            let z0 = if self.one_sided {
                let mut v = simplex(take(k - 1), k);
                v.extend(std::iter::repeat_n(0.0, k));
                v
            } else {
                simplex(take(2 * k - 1), 2 * k)
            };
            let z1 = simplex(take(2 * k - 1), 2 * k);
            OutcomeLaw::Reduced([
                [z0[..k].to_vec(), z0[k..].to_vec()],
                [z1[..k].to_vec(), z1[k..].to_vec()],
            ])
        };
        let mut table = |parents: &Option<Vec<crate::model::Var>>, keys: &[Vec<u8>]| {
            parents.as_ref().map(|p| {
                let mut t = ResponseTable::new(p.clone());
                for (key, &v) in keys.iter().zip(take(keys.len())) {
                    t.set(key.clone(), v);
                }
                t
            })
        };
        let response_d = table(&self.mech.rd_parents, &self.rd_keys);
        let response_y = table(&self.mech.ry_parents, &self.ry_keys);
        StructuralParams {
            p_z: self.p_z,
            one_sided: self.one_sided,
            y_support: self.y_support.clone(),
            outcome,
            response_d,
            response_y,
        }
    }

    fn residuals(&self, x: &[f64], target: &ObservableDistribution<f64>) -> Option<Vec<f64>> {
        let obs = forward_observable(&self.params(x), &self.mech).ok()?;
        Some(obs.cells().into_iter().map(|(z, c)| obs.get(z, c) - target.get(z, c)).collect())
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(pivot, col);
        b.swap(pivot, col);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

const SOLVED: f64 = 1e-10;
const DISTINCT: f64 = 1e-3;

/// One projected Levenberg–Marquardt descent from `x`. Returns the final
/// point, its residual norm and the iterations spent.
fn descend(
    layout: &Layout,
    target: &ObservableDistribution<f64>,
    mut x: Vec<f64>,
    max_iter: usize,
) -> (Vec<f64>, f64, usize) {
    let Some(mut r) = layout.residuals(&x, target) else { return (x, f64::INFINITY, 1) };
    let mut cost = norm2(&r);
    let mut lambda = 1e-3;
    let n = x.len();
    let mut used = 0;
    while used < max_iter && cost.sqrt() >= SOLVED * 1e-2 {
        used += 1;
        let mut jac = vec![vec![0.0; n]; r.len()];
        for j in 0..n {
            let h = 1e-7;
            let step = if x[j] + h <= 1.0 { h } else { -h };
            let mut xp = x.clone();
            xp[j] += step;
            let Some(rp) = layout.residuals(&xp, target) else { continue };
            for i in 0..r.len() {
                jac[i][j] = (rp[i] - r[i]) / step;
            }
        }
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for i in 0..r.len() {
            for a in 0..n {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..n {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj.clone();
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * (1.0 + jtj[a][a]);
            }
            let Some(delta) = solve_dense(m, jtr.iter().map(|v| -v).collect()) else {
                lambda *= 10.0;
                continue;
            };
            let candidate: Vec<f64> = x.iter().zip(&delta).map(|(xi, d)| (xi + d).clamp(0.0, 1.0)).collect();
            if let Some(rc) = layout.residuals(&candidate, target) {
                let c = norm2(&rc);
                if c < cost {
                    x = candidate;
                    r = rc;
                    cost = c;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (x, cost.sqrt(), used.max(1))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),
    #[error("{id} needs {expected} observables, got {found}")]
    RegimeMismatch { id: String, expected: String, found: String },
}

/// Random-restart least squares for parameters that reproduce `obs` under
/// `mech_id` with an effect more than 1e-3 away from the identified one (or
/// from the first solution found). `budget` caps the total number of descent
/// iterations across restarts; restart `i` draws its start from a generator
/// seeded with `seed` and `i`.
pub fn search_alternative(
    obs: &ObservableDistribution<f64>,
    mech_id: &str,
    seed: u64,
    budget: usize,
) -> Result<Option<Alternative>, SearchError> {
    let mech = lookup(mech_id).map_err(|_| SearchError::UnknownMechanism(mech_id.to_string()))?;
    if mech.regime != obs.regime {
        return Err(SearchError::RegimeMismatch {
            id: mech.id.clone(),
            expected: mech.regime.to_string(),
            found: obs.regime.to_string(),
        });
    }
    let layout = Layout::new(&mech, obs);
    let mut reference = identify(&mech.id, obs, &Tolerances::default()).ok().map(|r| r.cace);
    let mut spent = 0;
    let mut restart = 0u64;
    while spent < budget {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ restart.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        restart += 1;
        let start: Vec<f64> = (0..layout.dim).map(|_| rng.gen_range(0.02..0.98)).collect();
        let (x, residual, used) = descend(&layout, obs, start, (budget - spent).min(400));
        spent += used;
        if residual >= SOLVED {
            continue;
        }
        let params = layout.params(&x);
        if !validate(&params, &mech).is_empty() {
            continue;
        }
        let Ok(cace) = params.true_cace() else { continue };
        match reference {
            None => reference = Some(cace),
            Some(r) if (cace - r).abs() > DISTINCT => {
                return Ok(Some(Alternative { params, cace, reference: r, residual, iterations: spent }));
            }
            Some(_) => {}
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    #[test]
    fn fourteen_fixtures_with_recorded_effects() {
        let fixtures = builtin_fixtures();
        assert_eq!(fixtures.len(), 14);
        let first = &fixtures[0];
        assert_eq!(first.id, "S3.1.1-1DY");
        assert_eq!((first.cace_a.clone(), first.cace_b.clone()), (q(1, 2), q(2, 3)));
        let zu = fixtures.iter().find(|f| f.id == "S3.2.1-2ZU").unwrap();
        let cell = crate::model::CellId::Full { d: 0, y: 1 };
        assert_eq!(*zu.observables.get(0, cell), q(5, 48));
    }

    #[test]
    fn perturbed_observable_fails_reproduction() {
        let mut f = builtin_fixtures().remove(0);
        let cell = crate::model::CellId::Full { d: 0, y: 1 };
        let slot = f.observables.arms[0].get_mut(cell);
        *slot = slot.clone() + q(1, 1000);
        let report = verify_fixture(&f);
        assert!(!report.observables_a.passed);
        assert!(!report.observables_b.passed);
        assert!(report.distinct.passed);
    }

    #[test]
    fn identical_parameterizations_are_not_distinct() {
        let mut f = builtin_fixtures().remove(2);
        f.params_b = f.params_a.clone();
        f.cace_b = f.cace_a.clone();
        let report = verify_fixture(&f);
        assert!(!report.distinct.passed);
        assert!(report.observables_b.passed);
    }

    #[test]
    fn stick_breaking_covers_the_simplex() {
        let s = simplex(&[0.5, 0.5], 3);
        assert_eq!(s, vec![0.5, 0.25, 0.25]);
        assert_eq!(simplex(&[1.0, 0.3], 3), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_budget_finds_nothing() {
        let f = builtin_fixtures().remove(0);
        assert_eq!(search_alternative(&f.observables.to_float(), "1DY", 1, 0).unwrap(), None);
    }

    #[test]
    fn regime_is_checked() {
        let f = builtin_fixtures().remove(0);
        assert!(matches!(
            search_alternative(&f.observables.to_float(), "2ZD", 1, 10),
            Err(SearchError::RegimeMismatch { .. })
        ));
    }
}
