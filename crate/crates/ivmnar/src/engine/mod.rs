//! Inversion of observable laws to the complier average causal effect.
//!
//! Each identifiable catalog entry has a recipe in [`recipes`] that
//! reconstructs either P(D,Y|Z), the two complier outcome laws, or the binary
//! complier outcome probabilities. Dependence and positivity conditions are
//! checked as the recipe runs, and every magnitude is recorded.

pub mod linalg;
mod recipes;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::catalog::{lookup, JointRecoverability, Mechanism};
use crate::model::{
    mean, table_complier_means, ComplianceType, DyTable, JointLaw, LatentOutcome, ObservableDistribution, Regime,
    Sidedness, Tolerances,
};
use crate::scalar::{sum, Arithmetic, Scalar};
use linalg::{solve_system, SystemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdentifyError {
    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),
    #[error("{id} is not identifiable ({anchor})")]
    MechanismNotIdentifiable { id: String, anchor: String },
    #[error("{id} needs {expected} observables, got {found}")]
    RegimeMismatch { id: String, expected: Regime, found: Regime },
    #[error("{id} requires {required} noncompliance")]
    SidednessMismatch { id: String, required: &'static str },
    #[error("{id} requires a binary outcome, support has {support} values")]
    BinaryOutcomeRequired { id: String, support: usize },
    #[error("positivity violated: {cell} (mass {mass:e})")]
    PositivityViolated { cell: String, mass: f64 },
    #[error("dependence condition {check} fails (magnitude {magnitude:e})")]
    DependenceViolated { check: String, magnitude: f64 },
    #[error("inconsistent observables: {0}")]
    InconsistentObservables(String),
    #[error("zero first stage")]
    ZeroFirstStage,
}

impl IdentifyError {
    /// A positivity or dependence condition, as opposed to a refusal or a
    /// malformed input.
    pub fn is_condition(&self) -> bool {
        matches!(self, Self::PositivityViolated { .. } | Self::DependenceViolated { .. })
    }

    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Self::MechanismNotIdentifiable { .. }
                | Self::SidednessMismatch { .. }
                | Self::BinaryOutcomeRequired { .. }
                | Self::UnknownMechanism(_)
                | Self::RegimeMismatch { .. }
        )
    }
}

/// A dependence check with its magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub check: String,
    pub magnitude: f64,
    /// Zero for exact arithmetic, where only an exact zero fails.
    pub threshold: f64,
    pub passed: bool,
}

/// An observed mass that must be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityCheck {
    pub cell: String,
    pub mass: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult<S> {
    pub mechanism: String,
    pub arithmetic: Arithmetic,
    pub cace: S,
    /// (E[Y | c, D=1], E[Y | c, D=0]); `None` when only their difference is
    /// identified.
    pub complier_means: Option<(S, S)>,
    pub nuisance: BTreeMap<String, S>,
    pub diagnostics: Vec<Diagnostic>,
    pub positivity: Vec<PositivityCheck>,
    pub joint: Option<JointLaw<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub mechanism: String,
    pub positivity: Vec<PositivityCheck>,
    pub dependence: Vec<Diagnostic>,
    /// First failure, if any. Checks after it were not evaluated.
    pub blocked_by: Option<IdentifyError>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.blocked_by.is_none()
    }

    /// Smallest dependence magnitude seen, or 1 when there are no checks.
    pub fn min_magnitude(&self) -> f64 {
        self.dependence.iter().map(|d| d.magnitude).fold(1.0, f64::min)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JointError {
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error("joint law not recoverable: {0}")]
    NotRecoverable(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OddsError {
    #[error("singular system (magnitude {magnitude:e})")]
    SingularSystem { magnitude: f64 },
    #[error("odds component {index} is negative ({value:e})")]
    NegativeOdds { index: usize, value: f64 },
    #[error("overdetermined system has no exact solution (residual {residual:e})")]
    Inconsistent { residual: f64 },
}

/// Complier outcome probabilities from the two likelihood ratios.
#[derive(Debug, Clone, PartialEq)]
pub enum BinaryRatio<S> {
    /// P(Y=y1 | c, D=1) and P(Y=y1 | c, D=0).
    Solved { p1: S, p0: S },
    /// Equal complier laws: the effect is zero and the means are unknown.
    NoEffect,
}

/// Wald ratio of a Complete-regime law.
pub fn wald_cace<S: Scalar>(obs: &ObservableDistribution<S>, tol: &Tolerances) -> Result<S, IdentifyError> {
    wald_of_table(&obs.full_table(), &obs.y_support, tol.prob)
}

pub(crate) fn wald_of_table<S: Scalar>(t: &DyTable<S>, support: &[S], tol: f64) -> Result<S, IdentifyError> {
    let treated = |z: usize| sum(&t[z][1]);
    let outcome = |z: usize| mean(support, &t[z][0]) + mean(support, &t[z][1]);
    let first_stage = treated(1) - treated(0);
    if first_stage.near_zero(tol) {
        return Err(IdentifyError::ZeroFirstStage);
    }
    Ok((outcome(1) - outcome(0)) / first_stage)
}

/// Solves a square (or overdetermined) odds system and checks the solution
/// is nonnegative; values within tolerance below zero are clamped.
pub fn solve_linear_odds<S: Scalar>(
    coefficients: &[Vec<S>],
    rhs: &[S],
    tol: &Tolerances,
) -> Result<Vec<S>, OddsError> {
    let solution = solve_system(coefficients, rhs, tol.det, tol.prob).map_err(|e| match e {
        SystemError::Singular { magnitude } => OddsError::SingularSystem { magnitude },
        SystemError::Inconsistent { residual } => OddsError::Inconsistent { residual },
    })?;
    let mut out = Vec::with_capacity(solution.values.len());
    for (index, v) in solution.values.into_iter().enumerate() {
        let value = v.to_f64();
        out.push(clamp_nonneg(v, tol.prob).ok_or(OddsError::NegativeOdds { index, value })?);
    }
    Ok(out)
}

pub(crate) fn clamp_nonneg<S: Scalar>(v: S, tol: f64) -> Option<S> {
    if v >= S::zero() {
        Some(v)
    } else if v.near_zero(tol) {
        Some(S::zero())
    } else {
        None
    }
}

/// `arm - adjustment * counterpart`, cellwise, required to be nonnegative.
pub fn strip_stratum<S: Scalar>(
    arm: &[S],
    counterpart: &[S],
    adjustment: &S,
    tol: &Tolerances,
) -> Result<Vec<S>, IdentifyError> {
    arm.iter()
        .zip(counterpart)
        .map(|(a, c)| {
            let v = a.clone() - adjustment.clone() * c.clone();
            let f = v.to_f64();
            clamp_nonneg(v, tol.prob)
                .ok_or_else(|| IdentifyError::InconsistentObservables(format!("negative stratum mass {f:e}")))
        })
        .collect()
}

/// Inverts r1 = p0/p1 and r0 = (1-p0)/(1-p1), where p_d is the complier
/// probability of the upper outcome value under treatment d.
pub fn solve_binary_ratio<S: Scalar>(r1: &S, r0: &S, tol: &Tolerances) -> Result<BinaryRatio<S>, IdentifyError> {
    let gap = r1.clone() - r0.clone();
    let scale = r1.to_f64().abs().max(r0.to_f64().abs()).max(1.0);
    let equal = if S::is_exact() { gap == S::zero() } else { gap.to_f64().abs() <= tol.det * scale };
    if equal {
        let off = r1.clone() - S::one();
        let unit = if S::is_exact() { off == S::zero() } else { off.to_f64().abs() <= tol.det * scale };
        return if unit {
            Ok(BinaryRatio::NoEffect)
        } else {
            Err(IdentifyError::InconsistentObservables(format!(
                "equal likelihood ratios {} must both be 1",
                r1.render()
            )))
        };
    }
    let p1 = (S::one() - r0.clone()) / gap;
    let p0 = r1.clone() * p1.clone();
    let check = |p: S| -> Result<S, IdentifyError> {
        let f = p.to_f64();
        let lo = clamp_nonneg(p, tol.prob);
        let p = lo.ok_or_else(|| IdentifyError::InconsistentObservables(format!("solved probability {f} < 0")))?;
        let room = S::one() - p.clone();
        match clamp_nonneg(room, tol.prob) {
            Some(r) if r == S::zero() => Ok(S::one()),
            Some(_) => Ok(p),
            None => Err(IdentifyError::InconsistentObservables(format!("solved probability {f} > 1"))),
        }
    };
    Ok(BinaryRatio::Solved { p1: check(p1)?, p0: check(p0)? })
}

/// Records conditions, nuisance values and verdicts while a recipe runs.
pub(crate) struct Cx<'a, S> {
    pub obs: &'a ObservableDistribution<S>,
    pub tol: Tolerances,
    labels: Vec<String>,
    pub positivity: Vec<PositivityCheck>,
    pub diagnostics: Vec<Diagnostic>,
    pub nuisance: BTreeMap<String, S>,
}

impl<'a, S: Scalar> Cx<'a, S> {
    fn new(obs: &'a ObservableDistribution<S>, tol: Tolerances) -> Self {
        Self {
            obs,
            tol,
            labels: obs.y_labels(),
            positivity: Vec::new(),
            diagnostics: Vec::new(),
            nuisance: BTreeMap::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.obs.k()
    }

    pub fn y(&self, y: usize) -> &str {
        &self.labels[y]
    }

    pub fn one_sided(&self) -> bool {
        self.obs.one_sided
    }

    /// Whether stratum cell (z, d) can carry mass.
    pub fn reach(&self, z: usize, d: usize) -> bool {
        !(self.obs.one_sided && z == 0 && d == 1)
    }

    pub fn f(&self, z: usize, d: usize) -> &[S] {
        &self.obs.arms[z].full[d]
    }

    pub fn yo(&self, z: usize) -> &[S] {
        &self.obs.arms[z].y_only
    }

    pub fn dn(&self, z: usize, d: usize) -> S {
        self.obs.arms[z].d_only[d].clone()
    }

    pub fn nn(&self, z: usize) -> S {
        self.obs.arms[z].neither.clone()
    }

    pub fn p_z(&self, z: usize) -> S {
        if z == 1 {
            self.obs.p_z.clone()
        } else {
            S::one() - self.obs.p_z.clone()
        }
    }

    pub fn positive(&mut self, cell: impl Into<String>, mass: &S) -> Result<(), IdentifyError> {
        let cell = cell.into();
        let passed = mass.positive(self.tol.prob);
        self.positivity.push(PositivityCheck { cell: cell.clone(), mass: mass.to_f64(), passed });
        if passed {
            Ok(())
        } else {
            Err(IdentifyError::PositivityViolated { cell, mass: mass.to_f64() })
        }
    }

    /// `num / den`, after checking that `num` (hence `den`) is positive.
    pub fn ratio(&mut self, cell: impl Into<String>, num: &S, den: &S) -> Result<S, IdentifyError> {
        self.positive(cell, num)?;
        Ok(num.clone() / den.clone())
    }

    pub fn nonneg(&self, what: &str, v: S) -> Result<S, IdentifyError> {
        let f = v.to_f64();
        clamp_nonneg(v, self.tol.prob)
            .ok_or_else(|| IdentifyError::InconsistentObservables(format!("{what} is negative ({f:e})")))
    }

    pub fn note(&mut self, name: impl Into<String>, v: &S) {
        self.nuisance.insert(name.into(), v.clone());
    }

    fn diagnose(&mut self, check: &str, magnitude: f64) -> Result<(), IdentifyError> {
        let threshold = if S::is_exact() { 0.0 } else { self.tol.det };
        let passed = if S::is_exact() { magnitude > 0.0 } else { magnitude >= threshold };
        self.diagnostics.push(Diagnostic { check: check.to_string(), magnitude, threshold, passed });
        if passed {
            Ok(())
        } else {
            Err(IdentifyError::DependenceViolated { check: check.to_string(), magnitude })
        }
    }

    /// Solves a nonnegative unknown vector from a linear system whose rank is
    /// the dependence condition `check`.
    pub fn solve(&mut self, check: &str, rows: Vec<Vec<S>>, rhs: Vec<S>) -> Result<Vec<S>, IdentifyError> {
        match solve_system(&rows, &rhs, self.tol.det, self.tol.prob) {
            Ok(sol) => {
                self.diagnose(check, sol.magnitude)?;
                sol.values.into_iter().map(|v| self.nonneg(check, v)).collect()
            }
            Err(SystemError::Singular { magnitude }) => {
                self.diagnose(check, magnitude)?;
                Err(IdentifyError::DependenceViolated { check: check.to_string(), magnitude })
            }
            Err(SystemError::Inconsistent { residual }) => Err(IdentifyError::InconsistentObservables(format!(
                "{check}: equations disagree (residual {residual:e})"
            ))),
        }
    }

    /// Weight `w` with `target = w·a + (1-w)·b`; the dependence check is the
    /// relative contrast between `a` and `b`.
    pub fn mixture(&mut self, check: &str, target: &[S], a: &[S], b: &[S]) -> Result<S, IdentifyError> {
        let v: Vec<S> = a.iter().zip(b).map(|(x, y)| x.clone() - y.clone()).collect();
        let w: Vec<S> = target.iter().zip(b).map(|(x, y)| x.clone() - y.clone()).collect();
        let norm = |x: &[S]| x.iter().map(|e| e.to_f64().powi(2)).sum::<f64>().sqrt();
        let scale = norm(a).max(norm(b));
        let magnitude = if v.iter().all(|e| *e == S::zero()) || scale == 0.0 {
            0.0
        } else {
            (norm(&v) / scale).max(f64::MIN_POSITIVE)
        };
        self.diagnose(check, magnitude)?;
        let weight = if S::is_exact() {
            let pivot = (0..v.len()).find(|&i| v[i] != S::zero()).expect("nonzero contrast");
            let weight = w[pivot].clone() / v[pivot].clone();
            if v.iter().zip(&w).any(|(vi, wi)| weight.clone() * vi.clone() != *wi) {
                return Err(IdentifyError::InconsistentObservables(format!("{check}: mixture equations disagree")));
            }
            weight
        } else {
            let dot = |x: &[S], y: &[S]| x.iter().zip(y).fold(S::zero(), |acc, (p, q)| acc + p.clone() * q.clone());
            dot(&v, &w) / dot(&v, &v)
        };
        let weight = self.nonneg("mixture weight", weight)?;
        let rest = S::one() - weight.clone();
        if rest.near_zero(self.tol.prob) || rest < S::zero() {
            return Err(IdentifyError::ZeroFirstStage);
        }
        Ok(weight)
    }

    /// Normalizes a nonnegative vector whose total must be positive.
    pub fn normalize(&mut self, cell: &str, v: Vec<S>) -> Result<Vec<S>, IdentifyError> {
        let total = sum(&v);
        self.positive(cell, &total)?;
        Ok(v.into_iter().map(|x| x / total.clone()).collect())
    }
}

/// What a recipe reconstructs.
pub(crate) enum Route<S> {
    Table(DyTable<S>),
    Laws { treated: Vec<S>, control: Vec<S> },
    Ratio(BinaryRatio<S>),
}

/// How the joint law follows from the recipe, if at all.
pub(crate) enum JointRoute<S> {
    FromTable,
    Strata(LatentOutcome<S>),
    Unavailable(String),
}

pub(crate) struct Solved<S> {
    pub route: Route<S>,
    pub joint: JointRoute<S>,
}

struct Run<S> {
    mech: Mechanism,
    cx_positivity: Vec<PositivityCheck>,
    cx_diagnostics: Vec<Diagnostic>,
    nuisance: BTreeMap<String, S>,
    outcome: Result<Solved<S>, IdentifyError>,
}

fn preconditions<S: Scalar>(
    mech: &Mechanism,
    obs: &ObservableDistribution<S>,
    tol: &Tolerances,
) -> Result<Option<ObservableDistribution<S>>, IdentifyError> {
    if !mech.identifiable {
        return Err(IdentifyError::MechanismNotIdentifiable { id: mech.id.clone(), anchor: mech.anchor.clone() });
    }
    let lifted = if obs.regime == mech.regime {
        None
    } else if obs.regime == Regime::Complete {
        Some(obs.lift(mech.regime))
    } else {
        return Err(IdentifyError::RegimeMismatch { id: mech.id.clone(), expected: mech.regime, found: obs.regime });
    };
    if !mech.sidedness.admits(obs.one_sided) {
        let required = match mech.sidedness {
            Sidedness::OneSidedOnly => "one-sided",
            _ => "two-sided",
        };
        return Err(IdentifyError::SidednessMismatch { id: mech.id.clone(), required });
    }
    if mech.binary_y && obs.k() != 2 {
        return Err(IdentifyError::BinaryOutcomeRequired { id: mech.id.clone(), support: obs.k() });
    }
    let violations = obs.check(tol.prob);
    if let Some(v) = violations.first() {
        return Err(IdentifyError::InconsistentObservables(v.0.clone()));
    }
    Ok(lifted)
}

fn run<S: Scalar>(mech_id: &str, obs: &ObservableDistribution<S>, tol: &Tolerances) -> Result<Run<S>, IdentifyError> {
    let mech = lookup(mech_id).map_err(|_| IdentifyError::UnknownMechanism(mech_id.to_string()))?;
    let lifted = match preconditions(&mech, obs, tol) {
        Ok(l) => l,
        Err(e) => {
            return Ok(Run {
                mech,
                cx_positivity: vec![],
                cx_diagnostics: vec![],
                nuisance: BTreeMap::new(),
                outcome: Err(e),
            })
        }
    };
    let obs = lifted.as_ref().unwrap_or(obs);
    let mut cx = Cx::new(obs, *tol);
    let outcome = recipes::dispatch(&mech.id, &mut cx);
    Ok(Run {
        mech,
        cx_positivity: cx.positivity,
        cx_diagnostics: cx.diagnostics,
        nuisance: cx.nuisance,
        outcome,
    })
}

/// Identifies the CACE of `obs` under mechanism `mech_id`.
pub fn identify<S: Scalar>(
    mech_id: &str,
    obs: &ObservableDistribution<S>,
    tol: &Tolerances,
) -> Result<IdentificationResult<S>, IdentifyError> {
    let run = run(mech_id, obs, tol)?;
    let solved = run.outcome?;
    let support = &obs.y_support;
    let (cace, complier_means) = match &solved.route {
        Route::Table(t) => {
            let (m1, m0) = table_complier_means(t, support, tol.prob).ok_or(IdentifyError::ZeroFirstStage)?;
            (m1.clone() - m0.clone(), Some((m1, m0)))
        }
        Route::Laws { treated, control } => {
            let (m1, m0) = (mean(support, treated), mean(support, control));
            (m1.clone() - m0.clone(), Some((m1, m0)))
        }
        Route::Ratio(BinaryRatio::Solved { p1, p0 }) => {
            let span = support[1].clone() - support[0].clone();
            let m1 = support[0].clone() + span.clone() * p1.clone();
            let m0 = support[0].clone() + span * p0.clone();
            (m1.clone() - m0.clone(), Some((m1, m0)))
        }
        Route::Ratio(BinaryRatio::NoEffect) => (S::zero(), None),
    };
    let joint = joint_from(&run.mech, obs, &solved, tol).ok();
    Ok(IdentificationResult {
        mechanism: run.mech.id.clone(),
        arithmetic: S::ARITHMETIC,
        cace,
        complier_means,
        nuisance: run.nuisance,
        diagnostics: run.cx_diagnostics,
        positivity: run.cx_positivity,
        joint,
    })
}

/// Positivity and dependence verdicts for `mech_id` on `obs`, evaluated up to
/// the first failure.
pub fn check_conditions<S: Scalar>(
    mech_id: &str,
    obs: &ObservableDistribution<S>,
    tol: &Tolerances,
) -> Result<ConditionReport, IdentifyError> {
    let run = run(mech_id, obs, tol)?;
    let blocked_by = match run.outcome {
        Err(IdentifyError::RegimeMismatch { id, expected, found }) => {
            return Err(IdentifyError::RegimeMismatch { id, expected, found })
        }
        Err(e) => Some(e),
        Ok(_) => None,
    };
    Ok(ConditionReport {
        mechanism: run.mech.id,
        positivity: run.cx_positivity,
        dependence: run.cx_diagnostics,
        blocked_by,
    })
}

/// Recovers P(Z, U, D, Y) where the mechanism determines it.
pub fn recover_joint<S: Scalar>(
    mech_id: &str,
    obs: &ObservableDistribution<S>,
    tol: &Tolerances,
) -> Result<JointLaw<S>, JointError> {
    let run = run(mech_id, obs, tol)?;
    let solved = run.outcome?;
    joint_from(&run.mech, obs, &solved, tol)
}

fn joint_from<S: Scalar>(
    mech: &Mechanism,
    obs: &ObservableDistribution<S>,
    solved: &Solved<S>,
    tol: &Tolerances,
) -> Result<JointLaw<S>, JointError> {
    if mech.joint == JointRecoverability::No {
        return Err(JointError::NotRecoverable(format!("joint law is not identified under {}", mech.id)));
    }
    let strata = match (&solved.joint, &solved.route) {
        (JointRoute::FromTable, Route::Table(t)) => strata_from_table(t, tol.prob).map_err(JointError::NotRecoverable)?,
        (JointRoute::Strata(l), _) => l.clone(),
        (JointRoute::Unavailable(reason), _) => return Err(JointError::NotRecoverable(reason.clone())),
        (JointRoute::FromTable, _) => return Err(JointError::NotRecoverable("no table reconstructed".into())),
    };
    Ok(JointLaw::from_strata(&obs.p_z, &strata))
}

/// Decomposes P(D,Y|Z) into compliance shares and stratum outcome laws.
pub(crate) fn strata_from_table<S: Scalar>(t: &DyTable<S>, tol: f64) -> Result<LatentOutcome<S>, String> {
    let nonneg = |v: S, what: &str| clamp_nonneg(v, tol).ok_or_else(|| format!("negative {what} mass"));
    let diff = |a: &[S], b: &[S], what: &str| -> Result<Vec<S>, String> {
        a.iter().zip(b).map(|(x, y)| nonneg(x.clone() - y.clone(), what)).collect()
    };
    let always = t[0][1].clone();
    let never = t[1][0].clone();
    let c1 = diff(&t[1][1], &t[0][1], "treated complier")?;
    let c0 = diff(&t[0][0], &t[1][0], "untreated complier")?;
    let (sa, sn, sc) = (sum(&always), sum(&never), sum(&c1));
    if !sc.positive(tol) {
        return Err("complier share is zero".into());
    }
    let norm = |v: Vec<S>, total: &S| -> Vec<S> {
        if total.near_zero(tol) {
            Vec::new()
        } else {
            v.into_iter().map(|x| x / total.clone()).collect()
        }
    };
    let sc0 = sum(&c0);
    Ok(LatentOutcome {
        always_treated: norm(always, &sa),
        never_control: norm(never, &sn),
        complier_treated: norm(c1, &sc),
        complier_control: norm(c0, &sc0),
        share_always: if sa.near_zero(tol) { S::zero() } else { sa },
        share_never: if sn.near_zero(tol) { S::zero() } else { sn },
        share_complier: sc,
    })
}

/// Assembles stratum shares and laws, dropping laws of empty strata.
pub(crate) fn latent<S: Scalar>(
    shares: [(ComplianceType, S); 3],
    always_treated: Vec<S>,
    complier_control: Vec<S>,
    complier_treated: Vec<S>,
    never_control: Vec<S>,
) -> LatentOutcome<S> {
    let get = |u: ComplianceType| shares.iter().find(|(t, _)| *t == u).map(|(_, s)| s.clone()).unwrap();
    let keep = |s: &S, law: Vec<S>| if *s == S::zero() { Vec::new() } else { law };
    let (a, c, n) = (get(ComplianceType::Always), get(ComplianceType::Complier), get(ComplianceType::Never));
    LatentOutcome {
        always_treated: keep(&a, always_treated),
        complier_control,
        complier_treated,
        never_control: keep(&n, never_control),
        share_always: a,
        share_complier: c,
        share_never: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn complete(pz: Q, t: [[Vec<Q>; 2]; 2]) -> ObservableDistribution<Q> {
        let mut obs = ObservableDistribution::zeros(Regime::Complete, pz, false, vec![q(0, 1), q(1, 1)]);
        for z in 0..2 {
            obs.arms[z].full = t[z].clone();
        }
        obs
    }

    #[test]
    fn wald_arithmetic() {
        // E[Y|Z=1]=0.6, E[Y|Z=0]=0.5, P(D=1|Z=1)=0.8, P(D=1|Z=0)=0.3
        let obs = complete(
            q(1, 2),
            [
                [vec![q(35, 100), q(35, 100)], vec![q(15, 100), q(15, 100)]],
                [vec![q(10, 100), q(10, 100)], vec![q(30, 100), q(50, 100)]],
            ],
        );
        assert_eq!(wald_cace(&obs, &Tolerances::default()).unwrap(), q(1, 5));
    }

    #[test]
    fn wald_zero_first_stage() {
        let arm = [vec![q(1, 4), q(1, 4)], vec![q(1, 4), q(1, 4)]];
        let obs = complete(q(1, 2), [arm.clone(), arm]);
        assert_eq!(wald_cace(&obs, &Tolerances::default()), Err(IdentifyError::ZeroFirstStage));
    }

    #[test]
    fn wald_zero_numerator() {
        let obs = complete(
            q(1, 2),
            [
                [vec![q(1, 2), q(1, 4)], vec![q(1, 8), q(1, 8)]],
                [vec![q(1, 4), q(1, 4)], vec![q(3, 8), q(1, 8)]],
            ],
        );
        assert_eq!(wald_cace(&obs, &Tolerances::default()).unwrap(), q(0, 1));
    }

    #[test]
    fn binary_ratio_cases() {
        let tol = Tolerances::default();
        assert_eq!(solve_binary_ratio(&q(1, 1), &q(1, 1), &tol).unwrap(), BinaryRatio::NoEffect);
        assert_eq!(
            solve_binary_ratio(&q(1, 2), &q(2, 1), &tol).unwrap(),
            BinaryRatio::Solved { p1: q(2, 3), p0: q(1, 3) }
        );
        assert!(matches!(
            solve_binary_ratio(&q(2, 1), &q(2, 1), &tol),
            Err(IdentifyError::InconsistentObservables(_))
        ));
    }

    #[test]
    fn strip_stratum_cases() {
        let tol = Tolerances::default();
        let arm = vec![q(1, 3), q(1, 6)];
        assert_eq!(strip_stratum(&arm, &[q(0, 1), q(0, 1)], &q(1, 1), &tol).unwrap(), arm);
        assert_eq!(strip_stratum(&arm, &arm, &q(1, 1), &tol).unwrap(), vec![q(0, 1), q(0, 1)]);
        assert!(strip_stratum(&arm, &arm, &q(2, 1), &tol).is_err());
    }

    #[test]
    fn odds_identity_system() {
        let tol = Tolerances::default();
        let id = vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1)]];
        assert_eq!(solve_linear_odds(&id, &[q(2, 3), q(5, 7)], &tol).unwrap(), vec![q(2, 3), q(5, 7)]);
        assert!(matches!(
            solve_linear_odds(&id, &[q(-1, 3), q(5, 7)], &tol),
            Err(OddsError::NegativeOdds { index: 0, .. })
        ));
    }
}
