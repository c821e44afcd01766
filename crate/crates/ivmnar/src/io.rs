//! Structured text (TOML) forms of parameters, observables, mechanisms and
//! fixtures.
//!
//! Probabilities are written as strings, either `p/q` rationals or decimals.
//! Bare TOML numbers are accepted on input and read through their shortest
//! decimal form, so `0.6` is exactly 3/5 on the rational backend.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{lookup, Mechanism};
use crate::model::{
    cell_key, empty_table, regime_cells, y_labels, LatentOutcome, ObservableDistribution,
    OutcomeLaw, Regime, ResponseTable, StructuralParams, Var,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed document: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("cannot serialize: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("bad number `{value}` at {field}")]
    Number { field: String, value: String },
    #[error("unknown {what} `{key}`")]
    UnknownKey { what: &'static str, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Text(String),
    Int(i64),
    Float(f64),
}

impl Num {
    pub fn text(&self) -> String {
        match self {
            Self::Text(s) => s.clone(),
            Self::Int(i) => i.to_string(),
            Self::Float(f) => format!("{f}"),
        }
    }

    fn value<S: Scalar>(&self, field: &str) -> Result<S, FormatError> {
        let text = self.text();
        S::parse(&text).map_err(|_| FormatError::Number { field: field.to_string(), value: text })
    }

    fn of<S: Scalar>(x: &S) -> Self {
        Self::Text(x.render())
    }
}

fn values<S: Scalar>(nums: &[Num], field: &str) -> Result<Vec<S>, FormatError> {
    nums.iter().enumerate().map(|(i, n)| n.value(&format!("{field}[{i}]"))).collect()
}

fn nums<S: Scalar>(xs: &[S]) -> Vec<Num> {
    xs.iter().map(Num::of).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawResponse {
    pub parents: Vec<String>,
    pub probs: BTreeMap<String, Num>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RawOutcome {
    Latent {
        share_always: Num,
        share_complier: Num,
        share_never: Num,
        #[serde(default)]
        always_treated: Vec<Num>,
        complier_control: Vec<Num>,
        complier_treated: Vec<Num>,
        never_control: Vec<Num>,
    },
    /// P(D=d, Y=y | Z=z) keyed `z0:d1,y0`; omitted cells are zero.
    Reduced { table: BTreeMap<String, Num> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<String>,
    pub p_z: Num,
    #[serde(default)]
    pub one_sided: bool,
    pub y_support: Vec<Num>,
    pub outcome: RawOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_d: Option<RawResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_y: Option<RawResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawObservables {
    pub regime: String,
    pub p_z: Num,
    #[serde(default)]
    pub one_sided: bool,
    pub y_support: Vec<Num>,
    /// Keyed like `z0:d1,y0,ry1`; omitted cells are zero.
    pub cells: BTreeMap<String, Num>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFixture {
    pub id: String,
    pub mechanism: String,
    #[serde(default)]
    pub note: String,
    pub cace_a: Num,
    pub cace_b: Num,
    pub observables: RawObservables,
    pub params_a: RawParams,
    pub params_b: RawParams,
}

fn var_of(name: &str) -> Option<Var> {
    [Var::Z, Var::U, Var::D, Var::Y, Var::Rd].into_iter().find(|v| v.prefix() == name)
}

fn response_from<S: Scalar>(raw: &RawResponse, labels: &[String], field: &str) -> Result<ResponseTable<S>, FormatError> {
    let parents = raw
        .parents
        .iter()
        .map(|p| var_of(p).ok_or_else(|| FormatError::UnknownKey { what: "parent", key: p.clone() }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = ResponseTable::new(parents);
    for (label, p) in &raw.probs {
        let key = table
            .parse_key(label, labels)
            .ok_or_else(|| FormatError::UnknownKey { what: "response cell", key: label.clone() })?;
        table.set(key, p.value(&format!("{field}.{label}"))?);
    }
    Ok(table)
}

fn response_to<S: Scalar>(t: &ResponseTable<S>, labels: &[String]) -> RawResponse {
    RawResponse {
        parents: t.parents.iter().map(|v| v.prefix().to_string()).collect(),
        probs: t.probs.iter().map(|(k, p)| (t.cell_label(k, labels), Num::of(p))).collect(),
    }
}

fn table_key(z: usize, d: usize, y: &str) -> String {
    format!("z{z}:d{d},y{y}")
}

impl RawParams {
    pub fn to_params<S: Scalar>(&self) -> Result<StructuralParams<S>, FormatError> {
        let y_support: Vec<S> = values(&self.y_support, "y_support")?;
        let labels = y_labels(&y_support);
        let k = y_support.len();
        let outcome = match &self.outcome {
            RawOutcome::Latent {
                share_always,
                share_complier,
                share_never,
                always_treated,
                complier_control,
                complier_treated,
                never_control,
            } => OutcomeLaw::Latent(LatentOutcome {
                share_always: share_always.value("outcome.share_always")?,
                share_complier: share_complier.value("outcome.share_complier")?,
                share_never: share_never.value("outcome.share_never")?,
                always_treated: values(always_treated, "outcome.always_treated")?,
                complier_control: values(complier_control, "outcome.complier_control")?,
                complier_treated: values(complier_treated, "outcome.complier_treated")?,
                never_control: values(never_control, "outcome.never_control")?,
            }),
            RawOutcome::Reduced { table } => {
                let mut t = empty_table::<S>(k);
                let mut seen = 0;
                for z in 0..2 {
                    for d in 0..2 {
                        for (y, label) in labels.iter().enumerate() {
                            let key = table_key(z, d, label);
                            if let Some(v) = table.get(&key) {
                                t[z][d][y] = v.value(&format!("outcome.table.{key}"))?;
                                seen += 1;
                            }
                        }
                    }
                }
                if seen != table.len() {
                    let bad = table
                        .keys()
                        .find(|key| {
                            !(0..2).any(|z| (0..2).any(|d| labels.iter().any(|l| table_key(z, d, l) == **key)))
                        })
                        .cloned()
                        .unwrap_or_default();
                    return Err(FormatError::UnknownKey { what: "outcome table cell", key: bad });
                }
                OutcomeLaw::Reduced(t)
            }
        };
        Ok(StructuralParams {
            p_z: self.p_z.value("p_z")?,
            one_sided: self.one_sided,
            y_support,
            outcome,
            response_d: self.response_d.as_ref().map(|r| response_from(r, &labels, "response_d")).transpose()?,
            response_y: self.response_y.as_ref().map(|r| response_from(r, &labels, "response_y")).transpose()?,
        })
    }

    pub fn from_params<S: Scalar>(p: &StructuralParams<S>, mechanism: Option<&str>) -> Self {
        let labels = y_labels(&p.y_support);
        let outcome = match &p.outcome {
            OutcomeLaw::Latent(l) => RawOutcome::Latent {
                share_always: Num::of(&l.share_always),
                share_complier: Num::of(&l.share_complier),
                share_never: Num::of(&l.share_never),
                always_treated: nums(&l.always_treated),
                complier_control: nums(&l.complier_control),
                complier_treated: nums(&l.complier_treated),
                never_control: nums(&l.never_control),
            },
            OutcomeLaw::Reduced(t) => {
                let mut table = BTreeMap::new();
                for z in 0..2 {
                    for d in 0..2 {
                        for (y, label) in labels.iter().enumerate() {
                            table.insert(table_key(z, d, label), Num::of(&t[z][d][y]));
                        }
                    }
                }
                RawOutcome::Reduced { table }
            }
        };
        Self {
            mechanism: mechanism.map(str::to_string),
            p_z: Num::of(&p.p_z),
            one_sided: p.one_sided,
            y_support: nums(&p.y_support),
            outcome,
            response_d: p.response_d.as_ref().map(|t| response_to(t, &labels)),
            response_y: p.response_y.as_ref().map(|t| response_to(t, &labels)),
        }
    }
}

impl RawObservables {
    pub fn to_observables<S: Scalar>(&self) -> Result<ObservableDistribution<S>, FormatError> {
        let regime = Regime::from_name(&self.regime)
            .ok_or_else(|| FormatError::UnknownKey { what: "regime", key: self.regime.clone() })?;
        let y_support: Vec<S> = values(&self.y_support, "y_support")?;
        let labels = y_labels(&y_support);
        let mut obs = ObservableDistribution::zeros(regime, self.p_z.value("p_z")?, self.one_sided, y_support);
        let mut keys: BTreeMap<String, (u8, crate::model::CellId)> = BTreeMap::new();
        for z in 0..2u8 {
            for c in regime_cells(regime, labels.len()) {
                keys.insert(cell_key(regime, z, c, &labels), (z, c));
            }
        }
        for (key, v) in &self.cells {
            let (z, c) = keys
                .get(key)
                .ok_or_else(|| FormatError::UnknownKey { what: "observable cell", key: key.clone() })?;
            *obs.arms[*z as usize].get_mut(*c) = v.value(&format!("cells.{key}"))?;
        }
        Ok(obs)
    }

    pub fn from_observables<S: Scalar>(obs: &ObservableDistribution<S>) -> Self {
        Self {
            regime: obs.regime.name().to_string(),
            p_z: Num::of(&obs.p_z),
            one_sided: obs.one_sided,
            y_support: nums(&obs.y_support),
            cells: obs.cells().into_iter().map(|(z, c)| (obs.cell_key(z, c), Num::of(obs.get(z, c)))).collect(),
        }
    }
}

pub fn parse_params<S: Scalar>(text: &str) -> Result<(StructuralParams<S>, Option<Mechanism>), FormatError> {
    let raw: RawParams = toml::from_str(text)?;
    let mech = raw
        .mechanism
        .as_deref()
        .map(|id| lookup(id).map_err(|e| FormatError::Invalid(e.to_string())))
        .transpose()?;
    Ok((raw.to_params()?, mech))
}

pub fn write_params<S: Scalar>(p: &StructuralParams<S>, mechanism: Option<&str>) -> Result<String, FormatError> {
    Ok(toml::to_string(&RawParams::from_params(p, mechanism))?)
}

pub fn parse_observables<S: Scalar>(text: &str) -> Result<ObservableDistribution<S>, FormatError> {
    let raw: RawObservables = toml::from_str(text)?;
    raw.to_observables()
}

pub fn write_observables<S: Scalar>(obs: &ObservableDistribution<S>) -> Result<String, FormatError> {
    Ok(toml::to_string(&RawObservables::from_observables(obs))?)
}

pub fn parse_fixture(text: &str) -> Result<RawFixture, FormatError> {
    Ok(toml::from_str(text)?)
}

pub fn write_fixture(f: &RawFixture) -> Result<String, FormatError> {
    Ok(toml::to_string(f)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismRecord {
    pub id: String,
    pub regime: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ry_parents: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rd_parents: Option<Vec<String>>,
    pub sidedness: String,
    pub binary_y: bool,
    pub identifiable: bool,
    pub joint: String,
    pub joint_stated: bool,
    pub positivity: Vec<String>,
    pub dependence: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recipe: Option<String>,
    pub anchor: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
}

impl From<&Mechanism> for MechanismRecord {
    fn from(m: &Mechanism) -> Self {
        let names = |v: &Vec<Var>| v.iter().map(|x| x.prefix().to_string()).collect();
        Self {
            id: m.id.clone(),
            regime: m.regime.name().to_string(),
            ry_parents: m.ry_parents.as_ref().map(names),
            rd_parents: m.rd_parents.as_ref().map(names),
            sidedness: format!("{:?}", m.sidedness),
            binary_y: m.binary_y,
            identifiable: m.identifiable,
            joint: format!("{:?}", m.joint),
            joint_stated: m.joint_stated,
            positivity: m.positivity.iter().map(ToString::to_string).collect(),
            dependence: m.dependence.clone(),
            recipe: m.recipe.as_ref().map(ToString::to_string),
            anchor: m.anchor.clone(),
            fixture: m.fixture.clone(),
        }
    }
}

#[derive(Serialize)]
struct MechanismDump {
    mechanism: Vec<MechanismRecord>,
}

/// Every mechanism as an array of `[[mechanism]]` tables.
pub fn write_catalog(mechs: &[Mechanism]) -> Result<String, FormatError> {
    Ok(toml::to_string(&MechanismDump { mechanism: mechs.iter().map(MechanismRecord::from).collect() })?)
}
