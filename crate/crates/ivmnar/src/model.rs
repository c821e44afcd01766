//! Core types: compliance strata, observable cell tables, structural
//! parameters, and their validation.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::catalog::{Indicator, Mechanism};
use crate::scalar::{sum, Scalar};

/// Latent compliance type. Defiers are excluded by assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComplianceType {
    Always,
    Complier,
    Never,
}

impl ComplianceType {
    pub const ALL: [ComplianceType; 3] = [Self::Always, Self::Complier, Self::Never];

    /// Treatment received under assignment `z`.
    pub fn treatment(self, z: u8) -> u8 {
        match self {
            Self::Always => 1,
            Self::Never => 0,
            Self::Complier => z,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Self::Always => 'a',
            Self::Complier => 'c',
            Self::Never => 'n',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'a' => Some(Self::Always),
            'c' => Some(Self::Complier),
            'n' => Some(Self::Never),
            _ => None,
        }
    }

    fn code(self) -> u8 {
        match self {
            Self::Always => 0,
            Self::Complier => 1,
            Self::Never => 2,
        }
    }

    fn from_code(code: u8) -> Self {
        match code {
            0 => Self::Always,
            1 => Self::Complier,
            _ => Self::Never,
        }
    }
}

/// Which of D and Y can be missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Complete,
    OutcomeOnly,
    TreatmentOnly,
    Both,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Self::Complete => "Complete",
            Self::OutcomeOnly => "OutcomeOnly",
            Self::TreatmentOnly => "TreatmentOnly",
            Self::Both => "Both",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::Complete, Self::OutcomeOnly, Self::TreatmentOnly, Self::Both]
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(name))
    }

    pub fn has_rd(self) -> bool {
        matches!(self, Self::TreatmentOnly | Self::Both)
    }

    pub fn has_ry(self) -> bool {
        matches!(self, Self::OutcomeOnly | Self::Both)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sidedness {
    OneSidedOnly,
    TwoSidedOnly,
    Either,
}

impl Sidedness {
    pub fn admits(self, one_sided: bool) -> bool {
        match self {
            Self::Either => true,
            Self::OneSidedOnly => one_sided,
            Self::TwoSidedOnly => !one_sided,
        }
    }
}

/// Thresholds used by the float backend. The exact backend ignores them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Normalized determinant (|det| over the product of row norms).
    pub det: f64,
    /// Probability masses.
    pub prob: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { det: 1e-10, prob: 1e-12 }
    }
}

/// Variables a response indicator may depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Z,
    U,
    D,
    Y,
    Rd,
}

impl Var {
    pub fn prefix(self) -> &'static str {
        match self {
            Self::Z => "z",
            Self::U => "u",
            Self::D => "d",
            Self::Y => "y",
            Self::Rd => "rd",
        }
    }
}

/// One fully specified configuration of the latent and observed variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Atom {
    pub z: u8,
    pub u: Option<ComplianceType>,
    pub d: u8,
    pub y: usize,
    pub rd: u8,
}

impl Atom {
    pub fn key(&self, parents: &[Var]) -> Vec<u8> {
        parents
            .iter()
            .map(|v| match v {
                Var::Z => self.z,
                Var::U => self.u.map(ComplianceType::code).unwrap_or(u8::MAX),
                Var::D => self.d,
                Var::Y => self.y as u8,
                Var::Rd => self.rd,
            })
            .collect()
    }
}

/// P(R = 1 | parents) as a table over parent cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable<S> {
    pub parents: Vec<Var>,
    pub probs: BTreeMap<Vec<u8>, S>,
}

impl<S: Scalar> ResponseTable<S> {
    pub fn new(parents: Vec<Var>) -> Self {
        Self { parents, probs: BTreeMap::new() }
    }

    /// Table with every cell of `parents` set to `value`.
    pub fn constant(parents: Vec<Var>, support_len: usize, value: S) -> Self {
        let mut table = Self::new(parents);
        for key in all_keys(&table.parents, support_len) {
            table.probs.insert(key, value.clone());
        }
        table
    }

    pub fn get(&self, atom: &Atom) -> Option<&S> {
        self.probs.get(&atom.key(&self.parents))
    }

    pub fn set(&mut self, key: Vec<u8>, value: S) {
        self.probs.insert(key, value);
    }

    pub fn cell_label(&self, key: &[u8], y_labels: &[String]) -> String {
        cell_label(&self.parents, key, y_labels)
    }

    pub fn parse_key(&self, text: &str, y_labels: &[String]) -> Option<Vec<u8>> {
        parse_cell_label(&self.parents, text, y_labels)
    }
}

/// Every combination of parent values (u ranges over a, c, n).
pub fn all_keys(parents: &[Var], support_len: usize) -> Vec<Vec<u8>> {
    let mut keys = vec![Vec::new()];
    for v in parents {
        let range: Vec<u8> = match v {
            Var::U => vec![0, 1, 2],
            Var::Y => (0..support_len as u8).collect(),
            _ => vec![0, 1],
        };
        keys = keys
            .into_iter()
            .flat_map(|k| {
                range.iter().map(move |&x| {
                    let mut k = k.clone();
                    k.push(x);
                    k
                })
            })
            .collect();
    }
    keys
}

pub fn cell_label(parents: &[Var], key: &[u8], y_labels: &[String]) -> String {
    if parents.is_empty() {
        return "all".into();
    }
    parents
        .iter()
        .zip(key)
        .map(|(v, &x)| match v {
            Var::U => format!("u{}", ComplianceType::from_code(x).letter()),
            Var::Y => format!("y{}", y_labels.get(x as usize).map(String::as_str).unwrap_or("?")),
            _ => format!("{}{}", v.prefix(), x),
        })
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_cell_label(parents: &[Var], text: &str, y_labels: &[String]) -> Option<Vec<u8>> {
    if parents.is_empty() {
        return (text.trim() == "all").then(Vec::new);
    }
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != parents.len() {
        return None;
    }
    parents
        .iter()
        .zip(parts)
        .map(|(v, p)| {
            let rest = p.strip_prefix(v.prefix())?;
            match v {
                Var::U => rest.chars().next().and_then(ComplianceType::from_letter).map(|u| u.code()),
                Var::Y => y_labels.iter().position(|l| l == rest).map(|i| i as u8),
                _ => match rest {
                    "0" => Some(0),
                    "1" => Some(1),
                    _ => None,
                },
            }
        })
        .collect()
}

/// P(D=d, Y=y | Z=z) indexed `[z][d][y]`.
pub type DyTable<S> = [[Vec<S>; 2]; 2];

pub fn empty_table<S: Scalar>(k: usize) -> DyTable<S> {
    std::array::from_fn(|_| std::array::from_fn(|_| vec![S::zero(); k]))
}

/// Compliance shares and the outcome law of each principal stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentOutcome<S> {
    pub share_always: S,
    pub share_complier: S,
    pub share_never: S,
    /// P(Y | a, D=1)
    pub always_treated: Vec<S>,
    /// P(Y | c, D=0)
    pub complier_control: Vec<S>,
    /// P(Y | c, D=1)
    pub complier_treated: Vec<S>,
    /// P(Y | n, D=0)
    pub never_control: Vec<S>,
}

impl<S: Scalar> LatentOutcome<S> {
    pub fn share(&self, u: ComplianceType) -> &S {
        match u {
            ComplianceType::Always => &self.share_always,
            ComplianceType::Complier => &self.share_complier,
            ComplianceType::Never => &self.share_never,
        }
    }

    /// Outcome law of stratum `u` under treatment `d`, when that pair occurs.
    pub fn law(&self, u: ComplianceType, d: u8) -> Option<&Vec<S>> {
        match (u, d) {
            (ComplianceType::Always, 1) => Some(&self.always_treated),
            (ComplianceType::Never, 0) => Some(&self.never_control),
            (ComplianceType::Complier, 0) => Some(&self.complier_control),
            (ComplianceType::Complier, 1) => Some(&self.complier_treated),
            _ => None,
        }
    }
}

/// Outcome side of the model: either compliance-type based or a direct
/// P(D,Y|Z) table.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeLaw<S> {
    Latent(LatentOutcome<S>),
    Reduced(DyTable<S>),
}

/// Full generative specification of the joint law.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralParams<S> {
    /// P(Z=1)
    pub p_z: S,
    pub one_sided: bool,
    pub y_support: Vec<S>,
    pub outcome: OutcomeLaw<S>,
    pub response_d: Option<ResponseTable<S>>,
    pub response_y: Option<ResponseTable<S>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("first stage P(D=1|Z=1) - P(D=1|Z=0) is zero")]
    ZeroFirstStage,
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.0.clone()).collect::<Vec<_>>().join("; ")
}

pub fn y_labels<S: Scalar>(support: &[S]) -> Vec<String> {
    support.iter().map(Scalar::render).collect()
}

pub fn mean<S: Scalar>(support: &[S], law: &[S]) -> S {
    support
        .iter()
        .zip(law)
        .fold(S::zero(), |acc, (y, p)| acc + y.clone() * p.clone())
}

impl<S: Scalar> StructuralParams<S> {
    pub fn p_arm(&self, z: u8) -> S {
        if z == 1 {
            self.p_z.clone()
        } else {
            S::one() - self.p_z.clone()
        }
    }

    /// P(D, Y | Z) implied by the outcome law.
    pub fn dy_table(&self) -> DyTable<S> {
        match &self.outcome {
            OutcomeLaw::Reduced(t) => t.clone(),
            OutcomeLaw::Latent(l) => {
                let mut t: DyTable<S> = empty_table(self.y_support.len());
                for z in 0..2u8 {
                    for u in ComplianceType::ALL {
                        let d = u.treatment(z);
                        if let Some(law) = l.law(u, d) {
                            for (y, p) in law.iter().enumerate() {
                                let cell = &mut t[z as usize][d as usize][y];
                                *cell = cell.clone() + l.share(u).clone() * p.clone();
                            }
                        }
                    }
                }
                t
            }
        }
    }

    /// (E[Y | c, D=1], E[Y | c, D=0]).
    pub fn complier_means(&self) -> Result<(S, S), ModelError> {
        match &self.outcome {
            OutcomeLaw::Latent(l) => Ok((
                mean(&self.y_support, &l.complier_treated),
                mean(&self.y_support, &l.complier_control),
            )),
            OutcomeLaw::Reduced(t) => table_complier_means(t, &self.y_support, 0.0)
                .ok_or(ModelError::ZeroFirstStage),
        }
    }

    /// The complier average causal effect implied by the parameters.
    pub fn true_cace(&self) -> Result<S, ModelError> {
        let (m1, m0) = self.complier_means()?;
        Ok(m1 - m0)
    }

    /// P(Z, U, D, Y), available for latent outcome laws.
    pub fn joint_law(&self) -> Option<JointLaw<S>> {
        match &self.outcome {
            OutcomeLaw::Latent(l) => Some(JointLaw::from_strata(&self.p_z, l)),
            OutcomeLaw::Reduced(_) => None,
        }
    }

    /// Every atom with its probability conditional on Z, before masking.
    pub fn outcome_atoms(&self) -> Vec<(Atom, S)> {
        let mut out = Vec::new();
        match &self.outcome {
            OutcomeLaw::Latent(l) => {
                for z in 0..2u8 {
                    for u in ComplianceType::ALL {
                        let d = u.treatment(z);
                        let Some(law) = l.law(u, d) else { continue };
                        for (y, p) in law.iter().enumerate() {
                            let mass = l.share(u).clone() * p.clone();
                            out.push((Atom { z, u: Some(u), d, y, rd: 1 }, mass));
                        }
                    }
                }
            }
            OutcomeLaw::Reduced(t) => {
                for z in 0..2u8 {
                    for d in 0..2u8 {
                        for (y, p) in t[z as usize][d as usize].iter().enumerate() {
                            out.push((Atom { z, u: None, d, y, rd: 1 }, p.clone()));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Complier means from a P(D,Y|Z) table; `None` under a zero first stage.
pub fn table_complier_means<S: Scalar>(t: &DyTable<S>, support: &[S], tol: f64) -> Option<(S, S)> {
    let treated = |z: usize| sum(&t[z][1]);
    let first_stage = treated(1) - treated(0);
    if first_stage.near_zero(tol) {
        return None;
    }
    let k = support.len();
    let c1: Vec<S> = (0..k).map(|y| t[1][1][y].clone() - t[0][1][y].clone()).collect();
    let c0: Vec<S> = (0..k).map(|y| t[0][0][y].clone() - t[1][0][y].clone()).collect();
    Some((
        mean(support, &c1) / first_stage.clone(),
        mean(support, &c0) / first_stage,
    ))
}

/// P(Z=z, U=u, D=d, Y=y).
#[derive(Debug, Clone, PartialEq)]
pub struct JointLaw<S> {
    pub mass: BTreeMap<(u8, ComplianceType, u8, usize), S>,
}

impl<S: Scalar> JointLaw<S> {
    pub fn from_strata(p_z: &S, l: &LatentOutcome<S>) -> Self {
        let mut mass = BTreeMap::new();
        for z in 0..2u8 {
            let pz = if z == 1 { p_z.clone() } else { S::one() - p_z.clone() };
            for u in ComplianceType::ALL {
                let d = u.treatment(z);
                let Some(law) = l.law(u, d) else { continue };
                for (y, p) in law.iter().enumerate() {
                    mass.insert((z, u, d, y), pz.clone() * l.share(u).clone() * p.clone());
                }
            }
        }
        Self { mass }
    }

    /// Largest absolute cell difference, treating absent cells as zero.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let keys: std::collections::BTreeSet<_> =
            self.mass.keys().chain(other.mass.keys()).copied().collect();
        keys.into_iter()
            .map(|k| {
                let a = self.mass.get(&k).map(Scalar::to_f64).unwrap_or(0.0);
                let b = other.mass.get(&k).map(Scalar::to_f64).unwrap_or(0.0);
                (a - b).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// One observable cell within an assignment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CellId {
    /// D and Y both recorded.
    Full { d: u8, y: usize },
    /// D missing, Y recorded.
    YOnly { y: usize },
    /// Y missing, D recorded.
    DOnly { d: u8 },
    /// Both missing.
    Neither,
}

/// Observable cell masses within one arm Z=z.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmCells<S> {
    pub full: [Vec<S>; 2],
    pub y_only: Vec<S>,
    pub d_only: [S; 2],
    pub neither: S,
}

impl<S: Scalar> ArmCells<S> {
    pub fn zeros(k: usize) -> Self {
        Self {
            full: [vec![S::zero(); k], vec![S::zero(); k]],
            y_only: vec![S::zero(); k],
            d_only: [S::zero(), S::zero()],
            neither: S::zero(),
        }
    }

    pub fn get(&self, cell: CellId) -> &S {
        match cell {
            CellId::Full { d, y } => &self.full[d as usize][y],
            CellId::YOnly { y } => &self.y_only[y],
            CellId::DOnly { d } => &self.d_only[d as usize],
            CellId::Neither => &self.neither,
        }
    }

    pub fn get_mut(&mut self, cell: CellId) -> &mut S {
        match cell {
            CellId::Full { d, y } => &mut self.full[d as usize][y],
            CellId::YOnly { y } => &mut self.y_only[y],
            CellId::DOnly { d } => &mut self.d_only[d as usize],
            CellId::Neither => &mut self.neither,
        }
    }
}

/// The coarsened law an analyst sees, conditional on each arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableDistribution<S> {
    pub regime: Regime,
    /// P(Z=1)
    pub p_z: S,
    pub one_sided: bool,
    pub y_support: Vec<S>,
    pub arms: [ArmCells<S>; 2],
}

/// Cells of a regime within one arm, in canonical order.
pub fn regime_cells(regime: Regime, k: usize) -> Vec<CellId> {
    let mut cells: Vec<CellId> =
        (0..2u8).flat_map(|d| (0..k).map(move |y| CellId::Full { d, y })).collect();
    if regime == Regime::TreatmentOnly || regime == Regime::Both {
        cells.extend((0..k).map(|y| CellId::YOnly { y }));
    }
    if regime == Regime::OutcomeOnly || regime == Regime::Both {
        cells.extend((0..2u8).map(|d| CellId::DOnly { d }));
    }
    if regime == Regime::Both {
        cells.push(CellId::Neither);
    }
    cells
}

/// Cell that an atom lands in once masked by the two indicators.
pub fn coarsen(regime: Regime, d: u8, y: usize, rd: u8, ry: u8) -> CellId {
    let rd = if regime.has_rd() { rd } else { 1 };
    let ry = if regime.has_ry() { ry } else { 1 };
    match (rd, ry) {
        (1, 1) => CellId::Full { d, y },
        (0, 1) => CellId::YOnly { y },
        (1, 0) => CellId::DOnly { d },
        _ => CellId::Neither,
    }
}

impl<S: Scalar> ObservableDistribution<S> {
    pub fn zeros(regime: Regime, p_z: S, one_sided: bool, y_support: Vec<S>) -> Self {
        let k = y_support.len();
        Self { regime, p_z, one_sided, y_support, arms: [ArmCells::zeros(k), ArmCells::zeros(k)] }
    }

    pub fn k(&self) -> usize {
        self.y_support.len()
    }

    pub fn cells(&self) -> Vec<(u8, CellId)> {
        let cells = regime_cells(self.regime, self.k());
        (0..2u8).flat_map(|z| cells.iter().map(move |c| (z, *c))).collect()
    }

    pub fn get(&self, z: u8, cell: CellId) -> &S {
        self.arms[z as usize].get(cell)
    }

    pub fn y_labels(&self) -> Vec<String> {
        y_labels(&self.y_support)
    }

    /// Text key of a cell, e.g. `z1:d0,y1,ry1`.
    pub fn cell_key(&self, z: u8, cell: CellId) -> String {
        cell_key(self.regime, z, cell, &self.y_labels())
    }

    /// Largest absolute difference between matching cells.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.cells()
            .into_iter()
            .map(|(z, c)| (self.get(z, c).to_f64() - other.get(z, c).to_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Structural checks: masses in [0,1], per-arm totals of one, and no
    /// treated units under Z=0 when declared one-sided.
    pub fn check(&self, tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if !in_unit(&self.p_z, tol) || self.p_z.near_zero(tol) || (S::one() - self.p_z.clone()).near_zero(tol) {
            out.push(Violation(format!("P(Z=1) = {} must lie strictly inside (0,1)", self.p_z.render())));
        }
        if self.y_support.is_empty() {
            out.push(Violation("outcome support is empty".into()));
        }
        for (z, c) in self.cells() {
            let v = self.get(z, c);
            if !in_unit(v, tol) {
                out.push(Violation(format!("cell {} = {} outside [0,1]", self.cell_key(z, c), v.render())));
            }
        }
        for z in 0..2u8 {
            let total = sum(
                &regime_cells(self.regime, self.k())
                    .into_iter()
                    .map(|c| self.get(z, c).clone())
                    .collect::<Vec<_>>(),
            );
            if !(total.clone() - S::one()).near_zero(tol.max(1e-12)) {
                out.push(Violation(format!("arm z={z} sums to {}", total.render())));
            }
        }
        if self.one_sided {
            let treated = self.arms[0].full[1].iter().chain(std::iter::once(&self.arms[0].d_only[1]));
            if treated.into_iter().any(|v| !v.near_zero(tol)) {
                out.push(Violation("declared one-sided but treated units appear under Z=0".into()));
            }
        }
        out
    }

    /// The same law in the Complete regime when nothing is missing.
    pub fn as_complete(&self, tol: f64) -> Option<Self> {
        let missing_free = self.cells().into_iter().all(|(z, c)| {
            matches!(c, CellId::Full { .. }) || self.get(z, c).near_zero(tol)
        });
        missing_free.then(|| Self { regime: Regime::Complete, ..self.clone() })
    }

    /// Embeds a Complete table into another regime with empty missing cells.
    pub fn lift(&self, regime: Regime) -> Self {
        Self { regime, ..self.clone() }
    }

    /// Observed-cell table `[z][d][y]`.
    pub fn full_table(&self) -> DyTable<S> {
        std::array::from_fn(|z| self.arms[z].full.clone())
    }
}

pub fn cell_key(regime: Regime, z: u8, cell: CellId, y_labels: &[String]) -> String {
    let y = |i: usize| y_labels.get(i).cloned().unwrap_or_else(|| "?".into());
    let body = match (regime, cell) {
        (Regime::Complete, CellId::Full { d, y: yi }) => format!("d{d},y{}", y(yi)),
        (Regime::OutcomeOnly, CellId::Full { d, y: yi }) => format!("d{d},y{},ry1", y(yi)),
        (Regime::TreatmentOnly, CellId::Full { d, y: yi }) => format!("d{d},y{},rd1", y(yi)),
        (Regime::Both, CellId::Full { d, y: yi }) => format!("d{d},y{},rd1,ry1", y(yi)),
        (Regime::TreatmentOnly, CellId::YOnly { y: yi }) => format!("y{},rd0", y(yi)),
        (_, CellId::YOnly { y: yi }) => format!("y{},rd0,ry1", y(yi)),
        (Regime::OutcomeOnly, CellId::DOnly { d }) => format!("d{d},ry0"),
        (_, CellId::DOnly { d }) => format!("d{d},rd1,ry0"),
        (_, CellId::Neither) => "rd0,ry0".into(),
    };
    format!("z{z}:{body}")
}

fn in_unit<S: Scalar>(v: &S, tol: f64) -> bool {
    let lo = if S::is_exact() { S::zero() } else { S::from_f64(-tol) };
    let hi = if S::is_exact() { S::one() } else { S::from_f64(1.0 + tol) };
    *v >= lo && *v <= hi
}

fn check_law<S: Scalar>(name: &str, law: &[S], k: usize, tol: f64, out: &mut Vec<Violation>) {
    if law.len() != k {
        out.push(Violation(format!("{name} has {} entries for an outcome support of {k}", law.len())));
        return;
    }
    if let Some(bad) = law.iter().find(|p| !in_unit(*p, tol)) {
        out.push(Violation(format!("{name} has entry {} outside [0,1]", bad.render())));
    }
    let total = sum(law);
    if !(total.clone() - S::one()).near_zero(tol.max(1e-12)) {
        out.push(Violation(format!("{name} sums to {}", total.render())));
    }
}

/// Every constraint the parameters violate relative to `mech`, including the
/// mechanism's positivity cells.
pub fn validate<S: Scalar>(params: &StructuralParams<S>, mech: &Mechanism) -> Vec<Violation> {
    let mut out = validate_structure(params, mech);
    if out.is_empty() {
        out.extend(positivity_violations(params, mech));
    }
    out
}

/// Constraints needed for the parameters to define a joint law under `mech`.
pub fn validate_structure<S: Scalar>(params: &StructuralParams<S>, mech: &Mechanism) -> Vec<Violation> {
    let tol = 1e-12;
    let k = params.y_support.len();
    let mut out = Vec::new();
    if k == 0 {
        out.push(Violation("outcome support is empty".into()));
        return out;
    }
    for (i, a) in params.y_support.iter().enumerate() {
        if params.y_support[..i].contains(a) {
            out.push(Violation(format!("outcome support repeats {}", a.render())));
        }
    }
    if !in_unit(&params.p_z, tol) || params.p_z.near_zero(tol) || (S::one() - params.p_z.clone()).near_zero(tol) {
        out.push(Violation("P(Z=1) must lie strictly inside (0,1)".into()));
    }
    match &params.outcome {
        OutcomeLaw::Latent(l) => {
            for u in ComplianceType::ALL {
                if !in_unit(l.share(u), tol) {
                    out.push(Violation(format!("share of type {} outside [0,1]", u.letter())));
                }
            }
            let total = l.share_always.clone() + l.share_complier.clone() + l.share_never.clone();
            if !(total - S::one()).near_zero(tol) {
                out.push(Violation("compliance shares do not sum to 1".into()));
            }
            if !l.share_complier.positive(tol) {
                out.push(Violation("complier share must be positive".into()));
            }
            if params.one_sided && !l.share_always.near_zero(tol) {
                out.push(Violation("one-sided compliance requires no always-takers".into()));
            }
            for (name, u, law) in [
                ("P(Y|a,1)", ComplianceType::Always, &l.always_treated),
                ("P(Y|c,0)", ComplianceType::Complier, &l.complier_control),
                ("P(Y|c,1)", ComplianceType::Complier, &l.complier_treated),
                ("P(Y|n,0)", ComplianceType::Never, &l.never_control),
            ] {
                if law.is_empty() && *l.share(u) == S::zero() {
                    continue;
                }
                check_law(name, law, k, tol, &mut out);
            }
        }
        OutcomeLaw::Reduced(t) => {
            for z in 0..2 {
                let joined: Vec<S> = t[z][0].iter().chain(&t[z][1]).cloned().collect();
                check_law(&format!("P(D,Y|Z={z})"), &joined, 2 * k, tol, &mut out);
            }
            let first_stage = sum(&t[1][1]) - sum(&t[0][1]);
            if !first_stage.positive(tol) {
                out.push(Violation("P(D=1|Z=1) - P(D=1|Z=0) must be positive".into()));
            }
            if params.one_sided && !sum(&t[0][1]).near_zero(tol) {
                out.push(Violation("one-sided compliance requires P(D=1|Z=0) = 0".into()));
            }
            for table in [&params.response_d, &params.response_y].into_iter().flatten() {
                if table.parents.contains(&Var::U) {
                    out.push(Violation("a P(D,Y|Z) outcome law cannot feed a response model on U".into()));
                }
            }
        }
    }
    let labels = y_labels(&params.y_support);
    for (indicator, table, expected) in [
        (Indicator::Rd, &params.response_d, &mech.rd_parents),
        (Indicator::Ry, &params.response_y, &mech.ry_parents),
    ] {
        match (table, expected) {
            (None, None) => {}
            (Some(_), None) => {
                out.push(Violation(format!("{} has a response model but {} does not", indicator.name(), mech.id)))
            }
            (None, Some(_)) => {
                out.push(Violation(format!("{} requires a response model for {}", mech.id, indicator.name())))
            }
            (Some(t), Some(parents)) => {
                if &t.parents != parents {
                    out.push(Violation(format!(
                        "{} response parents do not match {}",
                        indicator.name(),
                        mech.id
                    )));
                    continue;
                }
                for (key, p) in &t.probs {
                    if !in_unit(p, tol) {
                        out.push(Violation(format!(
                            "P({}=1|{}) = {} outside [0,1]",
                            indicator.name(),
                            t.cell_label(key, &labels),
                            p.render()
                        )));
                    }
                }
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    for key in reachable_keys(params, Indicator::Rd).into_iter().chain(reachable_keys(params, Indicator::Ry)) {
        let (ind, key) = key;
        let table = params.table(ind).expect("checked above");
        if !table.probs.contains_key(&key) {
            out.push(Violation(format!(
                "missing P({}=1|{})",
                ind.name(),
                table.cell_label(&key, &labels)
            )));
        }
    }
    out
}

fn positivity_violations<S: Scalar>(params: &StructuralParams<S>, mech: &Mechanism) -> Vec<Violation> {
    let labels = y_labels(&params.y_support);
    let tol = 1e-12;
    let mut out = Vec::new();
    for cell in &mech.positivity {
        let Some(table) = params.table(cell.indicator) else { continue };
        for (ind, key) in reachable_keys(params, cell.indicator) {
            debug_assert_eq!(ind, cell.indicator);
            if !cell.matches(&table.parents, &key) {
                continue;
            }
            if let Some(p) = table.probs.get(&key) {
                if !p.positive(tol) {
                    out.push(Violation(format!(
                        "positivity: P({}=1|{}) must be positive",
                        ind.name(),
                        table.cell_label(&key, &labels)
                    )));
                }
            }
        }
    }
    out
}

impl<S: Scalar> StructuralParams<S> {
    pub fn table(&self, ind: Indicator) -> Option<&ResponseTable<S>> {
        match ind {
            Indicator::Rd => self.response_d.as_ref(),
            Indicator::Ry => self.response_y.as_ref(),
        }
    }
}

/// Parent cells of an indicator that carry positive probability.
pub fn reachable_keys<S: Scalar>(params: &StructuralParams<S>, ind: Indicator) -> Vec<(Indicator, Vec<u8>)> {
    let Some(table) = params.table(ind) else { return Vec::new() };
    let mut keys = std::collections::BTreeSet::new();
    for (atom, mass) in params.outcome_atoms() {
        if mass == S::zero() {
            continue;
        }
        match ind {
            Indicator::Rd => {
                keys.insert(atom.key(&table.parents));
            }
            Indicator::Ry => {
                let rd_values: Vec<u8> = match &params.response_d {
                    None => vec![1],
                    Some(rd) => {
                        let s = rd.get(&atom).cloned().unwrap_or_else(S::zero);
                        let mut v = Vec::new();
                        if s != S::one() {
                            v.push(0);
                        }
                        if s != S::zero() {
                            v.push(1);
                        }
                        v
                    }
                };
                for rd in rd_values {
                    keys.insert(Atom { rd, ..atom }.key(&table.parents));
                }
            }
        }
    }
    keys.into_iter().map(|k| (ind, k)).collect()
}

impl<S: Scalar> ResponseTable<S> {
    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> ResponseTable<T> {
        ResponseTable { parents: self.parents.clone(), probs: self.probs.iter().map(|(k, v)| (k.clone(), f(v))).collect() }
    }
}

impl<S: Scalar> StructuralParams<S> {
    /// The same parameters on another backend.
    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> StructuralParams<T> {
        let v = |xs: &Vec<S>| xs.iter().map(&f).collect::<Vec<T>>();
        let outcome = match &self.outcome {
            OutcomeLaw::Latent(l) => OutcomeLaw::Latent(LatentOutcome {
                share_always: f(&l.share_always),
                share_complier: f(&l.share_complier),
                share_never: f(&l.share_never),
                always_treated: v(&l.always_treated),
                complier_control: v(&l.complier_control),
                complier_treated: v(&l.complier_treated),
                never_control: v(&l.never_control),
            }),
            OutcomeLaw::Reduced(t) => OutcomeLaw::Reduced(std::array::from_fn(|z| std::array::from_fn(|d| v(&t[z][d])))),
        };
        StructuralParams {
            p_z: f(&self.p_z),
            one_sided: self.one_sided,
            y_support: v(&self.y_support),
            outcome,
            response_d: self.response_d.as_ref().map(|t| t.map(&f)),
            response_y: self.response_y.as_ref().map(|t| t.map(&f)),
        }
    }

    pub fn to_float(&self) -> StructuralParams<f64> {
        self.map(Scalar::to_f64)
    }
}

impl<S: Scalar> ObservableDistribution<S> {
    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> ObservableDistribution<T> {
        let v = |xs: &Vec<S>| xs.iter().map(&f).collect::<Vec<T>>();
        let arm = |a: &ArmCells<S>| ArmCells {
            full: [v(&a.full[0]), v(&a.full[1])],
            y_only: v(&a.y_only),
            d_only: [f(&a.d_only[0]), f(&a.d_only[1])],
            neither: f(&a.neither),
        };
        ObservableDistribution {
            regime: self.regime,
            p_z: f(&self.p_z),
            one_sided: self.one_sided,
            y_support: v(&self.y_support),
            arms: [arm(&self.arms[0]), arm(&self.arms[1])],
        }
    }

    pub fn to_float(&self) -> ObservableDistribution<f64> {
        self.map(Scalar::to_f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::lookup;
    use num_rational::BigRational;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn one_sided_1ud() -> StructuralParams<Q> {
        let mut ry = ResponseTable::new(vec![Var::U, Var::D]);
        ry.set(vec![2, 0], q(3, 5));
        ry.set(vec![1, 0], q(4, 5));
        ry.set(vec![1, 1], q(7, 10));
        StructuralParams {
            p_z: q(1, 2),
            one_sided: true,
            y_support: vec![q(0, 1), q(1, 1)],
            outcome: OutcomeLaw::Latent(LatentOutcome {
                share_always: q(0, 1),
                share_complier: q(3, 4),
                share_never: q(1, 4),
                always_treated: vec![q(1, 2), q(1, 2)],
                complier_control: vec![q(2, 3), q(1, 3)],
                complier_treated: vec![q(1, 3), q(2, 3)],
                never_control: vec![q(1, 2), q(1, 2)],
            }),
            response_d: None,
            response_y: Some(ry),
        }
    }

    #[test]
    fn true_cace_is_complier_difference() {
        assert_eq!(one_sided_1ud().true_cace().unwrap(), q(1, 3));
    }

    #[test]
    fn valid_params_pass() {
        let mech = lookup("1UD").unwrap();
        assert!(validate(&one_sided_1ud(), &mech).is_empty());
    }

    #[test]
    fn missing_reachable_cell_is_reported() {
        let mech = lookup("1UD").unwrap();
        let mut p = one_sided_1ud();
        p.response_y.as_mut().unwrap().probs.remove(&vec![1, 1]);
        let v = validate(&p, &mech);
        assert!(v.iter().any(|x| x.0.contains("missing")), "{v:?}");
    }

    #[test]
    fn positivity_violation_is_reported() {
        let mech = lookup("1UD").unwrap();
        let mut p = one_sided_1ud();
        p.response_y.as_mut().unwrap().set(vec![1, 0], q(0, 1));
        let v = validate(&p, &mech);
        assert!(v.iter().any(|x| x.0.starts_with("positivity")), "{v:?}");
    }

    #[test]
    fn shares_must_sum_to_one() {
        let mech = lookup("1UD").unwrap();
        let mut p = one_sided_1ud();
        if let OutcomeLaw::Latent(l) = &mut p.outcome {
            l.share_never = q(1, 3);
        }
        assert!(!validate(&p, &mech).is_empty());
    }

    #[test]
    fn cell_labels_round_trip() {
        let parents = vec![Var::Z, Var::U, Var::D, Var::Y, Var::Rd];
        let labels = vec!["0".to_string(), "1".to_string()];
        for key in all_keys(&parents, 2) {
            let text = cell_label(&parents, &key, &labels);
            assert_eq!(parse_cell_label(&parents, &text, &labels), Some(key));
        }
    }

    #[test]
    fn dy_table_matches_strata() {
        let t = one_sided_1ud().dy_table();
        assert_eq!(t[0][0][1], q(1, 4) * q(1, 2) + q(3, 4) * q(1, 3));
        assert_eq!(t[1][1][1], q(3, 4) * q(2, 3));
        assert_eq!(t[0][1], vec![q(0, 1), q(0, 1)]);
    }
}
