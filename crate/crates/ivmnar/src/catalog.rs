//! The closed table of missingness mechanisms and their label grammar.
//!
//! Labels follow the `1<parents of R^Y>` / `2<parents of R^D>` convention,
//! joined by `(+)` when R^D also feeds R^Y and by `+` otherwise.

use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;

use crate::model::{Regime, Sidedness, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Indicator {
    Rd,
    Ry,
}

impl Indicator {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rd => "R^D",
            Self::Ry => "R^Y",
        }
    }
}

/// All response cells matching the fixed parent values must have a positive
/// probability of being observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositivityCell {
    pub indicator: Indicator,
    pub fixed: Vec<(Var, u8)>,
}

impl PositivityCell {
    pub fn matches(&self, parents: &[Var], key: &[u8]) -> bool {
        self.fixed.iter().all(|(var, value)| {
            parents.iter().position(|p| p == var).is_none_or(|i| key[i] == *value)
        })
    }
}

impl fmt::Display for PositivityCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P({}=1", self.indicator.name())?;
        if !self.fixed.is_empty() {
            let parts: Vec<String> = self
                .fixed
                .iter()
                .map(|(v, x)| match v {
                    Var::U => format!("U={}", ["a", "c", "n"][*x as usize]),
                    Var::Z => format!("Z={x}"),
                    Var::D => format!("D={x}"),
                    Var::Y => format!("Y={x}"),
                    Var::Rd => format!("R^D={x}"),
                })
                .collect();
            write!(f, "|{}", parts.join(","))?;
        }
        write!(f, ") > 0")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recipe {
    DirectDivision,
    StratumSubtraction,
    OddsLinearSystem,
    BinaryRatio,
    MixtureSolve,
    Composite(Vec<Recipe>),
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DirectDivision => f.write_str("DirectDivision"),
            Self::StratumSubtraction => f.write_str("StratumSubtraction"),
            Self::OddsLinearSystem => f.write_str("OddsLinearSystem"),
            Self::BinaryRatio => f.write_str("BinaryRatio"),
            Self::MixtureSolve => f.write_str("MixtureSolve"),
            Self::Composite(parts) => {
                let names: Vec<String> = parts.iter().map(ToString::to_string).collect();
                write!(f, "Composite[{}]", names.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointRecoverability {
    Yes,
    No,
    UnderExtraConditions,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mechanism {
    pub id: String,
    pub regime: Regime,
    pub ry_parents: Option<Vec<Var>>,
    pub rd_parents: Option<Vec<Var>>,
    pub sidedness: Sidedness,
    pub binary_y: bool,
    pub positivity: Vec<PositivityCell>,
    pub dependence: Vec<String>,
    pub identifiable: bool,
    pub joint: JointRecoverability,
    /// `false` when joint recoverability is recorded as a default rather
    /// than established.
    pub joint_stated: bool,
    pub recipe: Option<Recipe>,
    pub anchor: String,
    pub fixture: Option<String>,
}

impl Mechanism {
    /// Label with `⊕` in place of `(+)`.
    pub fn pretty(&self) -> String {
        self.id.replace("(+)", "⊕")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CatalogError {
    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),
}

/// Parsed structure of a mechanism label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Label {
    pub ry: Option<Vec<Var>>,
    pub rd: Option<Vec<Var>>,
    /// R^D is a parent of R^Y.
    pub feeds: bool,
    pub mcar: bool,
}

impl Label {
    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim().replace('⊕', "(+)");
        match t.to_ascii_uppercase().as_str() {
            "MCAR-Y" => return Some(Self { ry: Some(vec![]), rd: None, feeds: false, mcar: true }),
            "MCAR-D" => return Some(Self { ry: None, rd: Some(vec![]), feeds: false, mcar: true }),
            _ => {}
        }
        let (first, second, feeds) = if let Some((a, b)) = t.split_once("(+)") {
            (a, Some(b), true)
        } else if let Some((a, b)) = t.split_once('+') {
            (a, Some(b), false)
        } else {
            (t.as_str(), None, false)
        };
        let part = |s: &str, tag: char| -> Option<Vec<Var>> {
            let rest = s.trim().strip_prefix(tag)?;
            if rest.is_empty() {
                return None;
            }
            let mut vars = Vec::new();
            for c in rest.chars() {
                let v = match c.to_ascii_uppercase() {
                    'Z' => Var::Z,
                    'U' => Var::U,
                    'D' => Var::D,
                    'Y' => Var::Y,
                    _ => return None,
                };
                if vars.contains(&v) {
                    return None;
                }
                vars.push(v);
            }
            vars.sort();
            Some(vars)
        };
        match second {
            None => {
                if first.trim().starts_with('1') {
                    Some(Self { ry: Some(part(first, '1')?), rd: None, feeds: false, mcar: false })
                } else {
                    Some(Self { ry: None, rd: Some(part(first, '2')?), feeds: false, mcar: false })
                }
            }
            Some(second) => {
                let mut ry = part(first, '1')?;
                let rd = part(second, '2')?;
                if feeds {
                    ry.push(Var::Rd);
                }
                Some(Self { ry: Some(ry), rd: Some(rd), feeds, mcar: false })
            }
        }
    }

    pub fn regime(&self) -> Regime {
        match (&self.ry, &self.rd) {
            (Some(_), Some(_)) => Regime::Both,
            (Some(_), None) => Regime::OutcomeOnly,
            (None, Some(_)) => Regime::TreatmentOnly,
            (None, None) => Regime::Complete,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mcar {
            return f.write_str(if self.ry.is_some() { "MCAR-Y" } else { "MCAR-D" });
        }
        let letters = |vars: &[Var]| -> String {
            vars.iter()
                .filter_map(|v| match v {
                    Var::Z => Some('Z'),
                    Var::U => Some('U'),
                    Var::D => Some('D'),
                    Var::Y => Some('Y'),
                    Var::Rd => None,
                })
                .collect()
        };
        if let Some(ry) = &self.ry {
            write!(f, "1{}", letters(ry))?;
        }
        if let Some(rd) = &self.rd {
            if self.ry.is_some() {
                f.write_str(if self.feeds { "(+)" } else { "+" })?;
            }
            write!(f, "2{}", letters(rd))?;
        }
        Ok(())
    }
}

/// Canonical ASCII form of a label, or `None` if it does not parse.
pub fn canonical_label(text: &str) -> Option<String> {
    Label::parse(text).map(|l| l.to_string())
}

struct Entry {
    id: &'static str,
    side: Sidedness,
    binary: bool,
    positivity: &'static [&'static str],
    dependence: &'static [&'static str],
    joint: Option<JointRecoverability>,
    recipe: Option<Recipe>,
    anchor: &'static str,
    fixture: Option<&'static str>,
}

fn parse_positivity(spec: &str) -> PositivityCell {
    let (ind, rest) = spec.split_once(':').expect("positivity spec");
    let indicator = if ind == "RD" { Indicator::Rd } else { Indicator::Ry };
    let fixed = rest
        .split(',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            if let Some(x) = t.strip_prefix("rd") {
                (Var::Rd, x.parse().unwrap())
            } else if let Some(x) = t.strip_prefix('z') {
                (Var::Z, x.parse().unwrap())
            } else if let Some(x) = t.strip_prefix('d') {
                (Var::D, x.parse().unwrap())
            } else if let Some(x) = t.strip_prefix('u') {
                let code = match x {
                    "a" => 0,
                    "c" => 1,
                    _ => 2,
                };
                (Var::U, code)
            } else {
                panic!("bad positivity token {t}")
            }
        })
        .collect();
    PositivityCell { indicator, fixed }
}

fn entries() -> Vec<Entry> {
    use JointRecoverability::*;
    use Recipe::*;
    use Sidedness::*;
    let e = |id, side, binary, positivity, dependence, joint, recipe, anchor| Entry {
        id,
        side,
        binary,
        positivity,
        dependence,
        joint: Some(joint),
        recipe: Some(recipe),
        anchor,
        fixture: None,
    };
    let no = |id, fixture: Option<&'static str>, anchor| Entry {
        id,
        side: Either,
        binary: false,
        positivity: &[],
        dependence: &[],
        joint: None,
        recipe: None,
        anchor,
        fixture,
    };
    let c = |parts: &[Recipe]| Composite(parts.to_vec());
    const OUT: &str = "outcome missing";
    const TRT: &str = "treatment missing";
    const UD_FEED: &str = "both missing: R^D on (U,D), feeding R^Y";
    const ZD_SEP: &str = "both missing: R^D on (Z,D), separate from R^Y";
    const ZU_SEP: &str = "both missing: R^D on (Z,U), separate from R^Y";
    const Z_FEED: &str = "both missing: R^D on Z, feeding R^Y";
    const ZD_FEED: &str = "both missing: R^D on (Z,D) or (Z,U), feeding R^Y";
    vec![
        e("MCAR-Y", Either, false, &["RY:"], &[], Yes, DirectDivision, "outcome missing completely at random"),
        e("MCAR-D", Either, false, &["RD:"], &[], Yes, DirectDivision, "treatment missing completely at random"),
        e("1ZD", Either, false, &["RY:"], &[], Yes, DirectDivision, OUT),
        e("1UD", Either, false, &["RY:uc"], &[], UnderExtraConditions, StratumSubtraction, OUT),
        e("1DY", TwoSidedOnly, true, &["RY:"], &["Y !⊥ Z | D=d"], Yes, OddsLinearSystem, OUT),
        e("1ZY", TwoSidedOnly, true, &["RY:"], &["Y !⊥ D | Z=z"], Yes, OddsLinearSystem, OUT),
        e("1UY", Either, true, &["RY:uc"], &[], No, c(&[StratumSubtraction, BinaryRatio]), OUT),
        e("1Y", Either, false, &["RY:"], &["Y !⊥ (Z,D)"], UnderExtraConditions, OddsLinearSystem, OUT),
        e("2ZY", Either, false, &["RD:"], &[], Yes, DirectDivision, TRT),
        e("2UY", Either, true, &["RD:uc"], &[], UnderExtraConditions, c(&[StratumSubtraction, BinaryRatio]), TRT),
        e("2DY", Either, false, &["RD:"], &["D !⊥ Z | Y=y"], Yes, OddsLinearSystem, TRT),
        e("2UD", Either, false, &["RD:uc"], &[], UnderExtraConditions, StratumSubtraction, TRT),
        e("2ZD", Either, false, &["RD:"], &["Y !⊥ D | Z=z"], Yes, OddsLinearSystem, TRT),
        e("2ZU", OneSidedOnly, false, &["RD:z1"], &["Y !⊥ U | Z=1"], Yes, MixtureSolve, TRT),
        e("1ZD(+)2UD", Either, false, &["RD:uc", "RY:rd1"], &[], UnderExtraConditions, c(&[DirectDivision, StratumSubtraction]), UD_FEED),
        e("1UD(+)2UD", Either, false, &["RD:uc", "RY:uc,rd1"], &[], UnderExtraConditions, StratumSubtraction, UD_FEED),
        e("1DY(+)2UD", TwoSidedOnly, true, &["RD:uc", "RY:rd1"], &["Y !⊥ Z | D=d, R^D=1"], UnderExtraConditions, c(&[OddsLinearSystem, StratumSubtraction]), UD_FEED),
        e("1ZY(+)2UD", TwoSidedOnly, true, &["RD:uc", "RY:rd1"], &["Y !⊥ D | Z=z, R^D=1"], UnderExtraConditions, c(&[OddsLinearSystem, StratumSubtraction]), UD_FEED),
        e("1UY(+)2UD", Either, true, &["RD:uc", "RY:uc,rd1"], &[], UnderExtraConditions, c(&[StratumSubtraction, BinaryRatio]), UD_FEED),
        e("1ZD+2ZD", Either, false, &["RD:", "RY:"], &["Y† !⊥ D | Z=z"], UnderExtraConditions, OddsLinearSystem, ZD_SEP),
        e("1UD+2ZD", Either, false, &["RD:", "RY:uc"], &["Y† !⊥ D | Z=z"], UnderExtraConditions, c(&[OddsLinearSystem, StratumSubtraction]), ZD_SEP),
        e("1DY+2ZD", TwoSidedOnly, true, &["RD:", "RY:"], &["Y† !⊥ D | Z=z", "Y !⊥ Z | D=d, R^D=1"], UnderExtraConditions, OddsLinearSystem, ZD_SEP),
        e("1ZY+2ZD", TwoSidedOnly, true, &["RD:", "RY:"], &["Y !⊥ D | Z=z"], UnderExtraConditions, OddsLinearSystem, ZD_SEP),
        e("1UY+2ZD", Either, true, &["RD:", "RY:uc"], &["Y† !⊥ D | Z=z"], UnderExtraConditions, c(&[OddsLinearSystem, StratumSubtraction, BinaryRatio]), ZD_SEP),
        e("1ZD+2ZU", OneSidedOnly, false, &["RD:z1", "RY:"], &["Y !⊥ U | Z=1"], UnderExtraConditions, c(&[DirectDivision, MixtureSolve]), ZU_SEP),
        e("1UD+2ZU", OneSidedOnly, false, &["RD:z1", "RY:uc"], &["Y !⊥ U | Z=1"], UnderExtraConditions, MixtureSolve, ZU_SEP),
        e("1UY+2ZU", OneSidedOnly, true, &["RD:z1", "RY:uc"], &["Y !⊥ U | Z=1"], UnderExtraConditions, c(&[MixtureSolve, BinaryRatio]), ZU_SEP),
        e("1ZD(+)2Z", Either, false, &["RD:", "RY:rd1"], &[], UnderExtraConditions, DirectDivision, Z_FEED),
        e("1UD(+)2Z", Either, false, &["RD:", "RY:uc,rd1"], &[], UnderExtraConditions, StratumSubtraction, Z_FEED),
        e("1UY(+)2Z", Either, true, &["RD:", "RY:uc,rd1"], &[], UnderExtraConditions, c(&[StratumSubtraction, BinaryRatio]), Z_FEED),
        e("1DY(+)2Z", TwoSidedOnly, true, &["RD:", "RY:rd1"], &["Y !⊥ Z | D=d, R^D=1"], UnderExtraConditions, OddsLinearSystem, Z_FEED),
        e("1ZY(+)2Z", TwoSidedOnly, true, &["RD:", "RY:rd1"], &["Y !⊥ D | Z=z, R^D=1"], UnderExtraConditions, OddsLinearSystem, Z_FEED),
        e("1Z(+)2ZD", Either, false, &["RD:", "RY:"], &["Y !⊥ D | Z=z"], UnderExtraConditions, OddsLinearSystem, ZD_FEED),
        e("1D(+)2ZD", Either, false, &["RD:", "RY:"], &["Y !⊥ D | Z=z", "D !⊥ Z"], UnderExtraConditions, OddsLinearSystem, ZD_FEED),
        e("1Y(+)2ZD", Either, true, &["RD:", "RY:"], &["Y !⊥ (Z,D) | R^D=1", "Y !⊥ Z | R^D=0", "Y !⊥ D | Z=z"], UnderExtraConditions, OddsLinearSystem, ZD_FEED),
        e("1Z(+)2ZU", OneSidedOnly, false, &["RD:z1", "RY:"], &["Y !⊥ U | Z=1"], UnderExtraConditions, MixtureSolve, ZD_FEED),
        e("1U(+)2ZU", OneSidedOnly, false, &["RD:z1,un", "RD:uc", "RY:uc,rd1"], &["R^Y !⊥ U | R^D=1"], UnderExtraConditions, c(&[OddsLinearSystem, StratumSubtraction]), ZD_FEED),
        e("1D(+)2ZU", OneSidedOnly, false, &["RD:z1", "RY:rd1", "RY:d0,rd0"], &["Y !⊥ U | Z=1"], UnderExtraConditions, c(&[OddsLinearSystem, MixtureSolve]), ZD_FEED),
        e("1Y(+)2ZU", OneSidedOnly, true, &["RD:z1", "RY:"], &["Y !⊥ (Z,D) | R^D=1", "Y !⊥ Z | R^D=0", "Y !⊥ U | Z=1"], UnderExtraConditions, c(&[OddsLinearSystem, MixtureSolve]), ZD_FEED),
        no("1ZU", Some("S3.1.3-1ZU"), OUT),
        no("1ZDY", Some("S3.1.4-1ZDY"), OUT),
        no("1UDY", Some("S3.1.5-1UDY"), OUT),
        no("1ZUDY", None, "outcome missing: most general mechanism"),
        no("2ZDY", Some("S3.2.2-2ZDY"), TRT),
        no("2UDY", Some("S3.2.3-2UDY"), TRT),
        no("2ZUDY", None, "treatment missing: most general mechanism"),
        no("1ZD(+)2ZD", Some("S3.3.1-1ZD(+)2ZD"), ZD_FEED),
        no("1UD(+)2ZD", Some("S3.3.2-1UD(+)2ZD"), ZD_FEED),
        no("1UY(+)2ZD", Some("S3.3.3-1UY(+)2ZD"), ZD_FEED),
        no("1DY(+)2ZD", Some("S3.3.4-1DY(+)2ZD"), ZD_FEED),
        no("1ZY(+)2ZD", Some("S3.3.5-1ZY(+)2ZD"), ZD_FEED),
        no("1U(+)2ZD", Some("S3.3.6-1U(+)2ZD"), ZD_FEED),
        no("1DY+2ZU", None, "both missing: 1DY needs two-sided and 2ZU needs one-sided compliance"),
        no("1ZY+2ZU", None, "both missing: 1ZY needs two-sided and 2ZU needs one-sided compliance"),
    ]
}

fn build(entry: Entry) -> Mechanism {
    let label = Label::parse(entry.id).expect("catalog label");
    let regime = label.regime();
    let identifiable = entry.recipe.is_some();
    let joint = entry.joint.unwrap_or(JointRecoverability::No);
    let stated = !matches!(
        regime,
        Regime::Both
    ) && entry.id != "1Y";
    Mechanism {
        id: label.to_string(),
        regime,
        ry_parents: label.ry,
        rd_parents: label.rd,
        sidedness: entry.side,
        binary_y: entry.binary,
        positivity: entry.positivity.iter().map(|s| parse_positivity(s)).collect(),
        dependence: entry.dependence.iter().map(|s| s.to_string()).collect(),
        identifiable,
        joint,
        joint_stated: !identifiable || stated,
        recipe: entry.recipe,
        anchor: entry.anchor.to_string(),
        fixture: entry.fixture.map(str::to_string),
    }
}

/// Every catalogued mechanism, identifiable entries first.
pub fn catalog() -> &'static [Mechanism] {
    static CATALOG: OnceLock<Vec<Mechanism>> = OnceLock::new();
    CATALOG.get_or_init(|| entries().into_iter().map(build).collect())
}

/// Resolves a label (either connector glyph accepted) to its catalog entry.
pub fn lookup(id: &str) -> Result<Mechanism, CatalogError> {
    let canonical = canonical_label(id).ok_or_else(|| CatalogError::UnknownMechanism(id.to_string()))?;
    catalog()
        .iter()
        .find(|m| m.id == canonical)
        .cloned()
        .ok_or_else(|| CatalogError::UnknownMechanism(id.to_string()))
}

/// Identifiable entries other than the two completely-at-random baselines.
pub fn nonrandom_identified() -> impl Iterator<Item = &'static Mechanism> {
    catalog().iter().filter(|m| m.identifiable && !m.id.starts_with("MCAR"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_seven_nonrandom_identified_entries() {
        assert_eq!(nonrandom_identified().count(), 37);
    }

    #[test]
    fn ids_are_unique_and_canonical() {
        let ids: Vec<&str> = catalog().iter().map(|m| m.id.as_str()).collect();
        let set: std::collections::BTreeSet<&str> = ids.iter().copied().collect();
        assert_eq!(set.len(), ids.len());
        for m in catalog() {
            assert_eq!(canonical_label(&m.id).as_deref(), Some(m.id.as_str()));
            assert_eq!(canonical_label(&m.pretty()).as_deref(), Some(m.id.as_str()));
        }
    }

    #[test]
    fn lookup_parses_structure() {
        let m = lookup("1ZD⊕2UD").unwrap();
        assert_eq!(m.id, "1ZD(+)2UD");
        assert_eq!(m.regime, Regime::Both);
        assert_eq!(m.ry_parents, Some(vec![Var::Z, Var::D, Var::Rd]));
        assert_eq!(m.rd_parents, Some(vec![Var::U, Var::D]));
        assert!(m.identifiable);
        assert_eq!(m.pretty(), "1ZD⊕2UD");
    }

    #[test]
    fn unknown_labels_rejected() {
        assert!(matches!(lookup("1XY"), Err(CatalogError::UnknownMechanism(_))));
        assert!(matches!(lookup("2Y"), Err(CatalogError::UnknownMechanism(_))));
        assert!(lookup("1DZ").is_ok());
    }

    #[test]
    fn regime_follows_parent_sets() {
        for m in catalog() {
            assert_eq!(m.regime.has_ry(), m.ry_parents.is_some(), "{}", m.id);
            assert_eq!(m.regime.has_rd(), m.rd_parents.is_some(), "{}", m.id);
        }
    }

    #[test]
    fn identifiable_entries_carry_a_recipe_and_others_an_anchor() {
        for m in catalog() {
            assert_eq!(m.identifiable, m.recipe.is_some(), "{}", m.id);
            if !m.identifiable {
                assert!(!m.anchor.is_empty());
            }
        }
    }

    #[test]
    fn joint_flags() {
        for id in ["1ZD", "1DY", "1ZY", "2ZY", "2DY", "2ZD", "2ZU"] {
            assert_eq!(lookup(id).unwrap().joint, JointRecoverability::Yes);
        }
        for id in ["1UD", "2UD", "2UY"] {
            assert_eq!(lookup(id).unwrap().joint, JointRecoverability::UnderExtraConditions);
        }
        assert_eq!(lookup("1UY").unwrap().joint, JointRecoverability::No);
        assert!(!lookup("1ZD+2ZD").unwrap().joint_stated);
    }
}
