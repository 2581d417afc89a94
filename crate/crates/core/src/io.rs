//! Economy files, trajectory CSV and summary reports.
//!
//! Economies are JSON documents (schema in `schema/economy.schema.json`).
//! Stage-1 data is keyed by scenario id so files stay readable when
//! scenarios are reordered or added.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{validate, Agent, Economy, ModelClass, PriceSystem, UtilitySpec, Violation};
use crate::scalar::Scalar;
use crate::solver::{SolveOutcome, SolveTrace, SolverConfig, Status};
use crate::walrasian::ExcessSupply;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Exchange,
    Dynamic,
    Stochastic,
}

impl From<ModelKind> for ModelClass {
    fn from(k: ModelKind) -> Self {
        match k {
            ModelKind::Exchange => ModelClass::Exchange,
            ModelKind::Dynamic => ModelClass::TwoStageDeterministic,
            ModelKind::Stochastic => ModelClass::TwoStageStochastic,
        }
    }
}

impl From<ModelClass> for ModelKind {
    fn from(c: ModelClass) -> Self {
        match c {
            ModelClass::Exchange => ModelKind::Exchange,
            ModelClass::TwoStageDeterministic => ModelKind::Dynamic,
            ModelClass::TwoStageStochastic => ModelKind::Stochastic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "kebab-case")]
pub enum UtilityEntry {
    CobbDouglas { beta: Vec<f64> },
    Ces { a: Vec<f64>, b: f64 },
}

impl From<UtilityEntry> for UtilitySpec<f64> {
    fn from(u: UtilityEntry) -> Self {
        match u {
            UtilityEntry::CobbDouglas { beta } => UtilitySpec::CobbDouglas { beta },
            UtilityEntry::Ces { a, b } => UtilitySpec::Ces { a, b },
        }
    }
}

impl From<&UtilitySpec<f64>> for UtilityEntry {
    fn from(u: &UtilitySpec<f64>) -> Self {
        match u {
            UtilitySpec::CobbDouglas { beta } => UtilityEntry::CobbDouglas { beta: beta.clone() },
            UtilitySpec::Ces { a, b } => UtilityEntry::Ces { a: a.clone(), b: *b },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub utility0: UtilityEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility1: Option<UtilityEntry>,
    pub e0: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub e1: BTreeMap<String, Vec<f64>>,
    /// Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival_lb: Option<Vec<f64>>,
    #[serde(rename = "T0", default, skip_serializing_if = "Vec::is_empty")]
    pub t0: Vec<Vec<f64>>,
    #[serde(rename = "T1", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub t1: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub beliefs: BTreeMap<String, f64>,
}

/// On-disk form of an [`Economy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyFile {
    /// Free-form remark, e.g. data provenance. Ignored by the solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub model: ModelKind,
    pub goods: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub activities: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<ScenarioEntry>,
    pub agents: Vec<AgentEntry>,
}

fn matrix_from_rows(rows: &[Vec<f64>], n_goods: usize, path: &str, out: &mut Vec<Violation>) -> Matrix<f64> {
    if rows.is_empty() {
        return Matrix::zeros(n_goods, 0);
    }
    Matrix::from_rows(rows).unwrap_or_else(|| {
        out.push(Violation { path: path.to_string(), message: "rows have different lengths".into() });
        Matrix::zeros(n_goods, 0)
    })
}

fn rows_of(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    if m.cols() == 0 {
        Vec::new()
    } else {
        m.to_rows()
    }
}

impl EconomyFile {
    /// Converts to an economy, reporting structural and model violations.
    pub fn into_economy(self) -> std::result::Result<Economy<f64>, Vec<Violation>> {
        let mut out = Vec::new();
        let n = self.goods.len();
        let ids: Vec<String> = self.scenarios.into_iter().map(|s| s.id).collect();
        for (k, id) in ids.iter().enumerate() {
            if ids[..k].contains(id) {
                out.push(Violation { path: format!("scenarios[{k}].id"), message: format!("duplicate scenario id '{id}'") });
            }
        }
        let mut agents = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.into_iter().enumerate() {
            let ap = format!("agents[{i}]");
            for (field, keys) in [
                ("e1", a.e1.keys().collect::<Vec<_>>()),
                ("T1", a.t1.keys().collect()),
                ("beliefs", a.beliefs.keys().collect()),
            ] {
                for key in keys {
                    if !ids.contains(key) {
                        out.push(Violation { path: format!("{ap}.{field}.{key}"), message: format!("unknown scenario '{key}'") });
                    }
                }
            }
            let mut e1 = Vec::new();
            let mut t1 = Vec::new();
            let mut beliefs = Vec::new();
            for id in &ids {
                if !a.e1.is_empty() || !a.t1.is_empty() || !a.beliefs.is_empty() {
                    match a.e1.get(id) {
                        Some(v) => e1.push(v.clone()),
                        None => out.push(Violation { path: format!("{ap}.e1"), message: format!("missing scenario '{id}'") }),
                    }
                    match a.beliefs.get(id) {
                        Some(&b) => beliefs.push(b),
                        None => out.push(Violation { path: format!("{ap}.beliefs"), message: format!("missing scenario '{id}'") }),
                    }
                    let rows = a.t1.get(id).map(Vec::as_slice).unwrap_or_default();
                    t1.push(matrix_from_rows(rows, n, &format!("{ap}.T1.{id}"), &mut out));
                }
            }
            let t0 = matrix_from_rows(&a.t0, n, &format!("{ap}.T0"), &mut out);
            agents.push(Agent {
                utility0: a.utility0.into(),
                utility1: a.utility1.map(Into::into),
                survival_lb: a.survival_lb.unwrap_or_else(|| vec![0.0; a.e0.len()]),
                e0: a.e0,
                e1,
                t0,
                t1,
                beliefs,
            });
        }
        let economy = Economy {
            model_class: self.model.into(),
            goods: self.goods,
            activities: self.activities,
            scenarios: ids,
            agents,
        };
        out.extend(validate(&economy));
        if out.is_empty() {
            Ok(economy)
        } else {
            Err(out)
        }
    }

    pub fn from_economy(economy: &Economy<f64>) -> Self {
        let ids = &economy.scenarios;
        let keyed = |v: &[Vec<f64>]| ids.iter().cloned().zip(v.iter().cloned()).collect::<BTreeMap<_, _>>();
        let agents = economy
            .agents
            .iter()
            .map(|a| AgentEntry {
                utility0: (&a.utility0).into(),
                utility1: a.utility1.as_ref().map(Into::into),
                e0: a.e0.clone(),
                e1: keyed(&a.e1),
                survival_lb: Some(a.survival_lb.clone()),
                t0: rows_of(&a.t0),
                t1: ids.iter().cloned().zip(a.t1.iter().map(rows_of)).collect(),
                beliefs: ids.iter().cloned().zip(a.beliefs.iter().copied()).collect(),
            })
            .collect();
        Self {
            note: None,
            model: economy.model_class.into(),
            goods: economy.goods.clone(),
            activities: economy.activities.clone(),
            scenarios: ids.iter().map(|id| ScenarioEntry { id: id.clone() }).collect(),
            agents,
        }
    }
}

/// Parses and validates an economy document.
pub fn parse_economy_str(text: &str) -> Result<Economy<f64>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: EconomyFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse { path, line: inner.line(), column: inner.column(), message: inner.to_string() }
    })?;
    file.into_economy().map_err(Error::InvalidEconomy)
}

pub fn parse_economy(path: impl AsRef<Path>) -> Result<Economy<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Read { path: path.display().to_string(), message: e.to_string() })?;
    parse_economy_str(&text)
}

pub fn serialize_economy(economy: &Economy<f64>) -> String {
    serde_json::to_string_pretty(&EconomyFile::from_economy(economy)).expect("economy files always serialize")
}

/// `printf("%.12g")`: twelve significant digits, trailing zeros removed.
pub fn format_g12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..DIGITS).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x))
    }
}

fn block_headers(prefix: &str, goods: usize, scenarios: &[String]) -> Vec<String> {
    let mut h: Vec<String> = (1..=goods).map(|g| format!("{prefix}0_g{g}")).collect();
    for id in scenarios {
        h.extend((1..=goods).map(|g| format!("{prefix}1_{id}_g{g}")));
    }
    h
}

/// Writes one row per outer iteration: `nu, r, residual, W_value,
/// Waug_value`, the price blocks, then the excess-supply blocks.
pub fn write_trajectory<T: Scalar, W: Write>(out: W, trace: &SolveTrace<T>, economy: &Economy<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| Error::Write(e.to_string());
    let mut header: Vec<String> = ["nu", "r", "residual", "W_value", "Waug_value"].map(String::from).to_vec();
    header.extend(block_headers("p", economy.n_goods(), &economy.scenarios));
    header.extend(block_headers("s", economy.n_goods(), &economy.scenarios));
    w.write_record(&header).map_err(io_err)?;
    for rec in &trace.records {
        let mut row = vec![rec.nu.to_string()];
        row.extend(
            [rec.r, rec.residual, rec.walrasian_value, rec.augmented_value]
                .iter()
                .chain(rec.p.blocks().flatten())
                .chain(rec.s.flat.iter())
                .map(|x| format_g12(x.as_f64())),
        );
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Write(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioVector {
    pub scenario: String,
    pub values: Vec<f64>,
}

/// A vector per stage: stage 0 and then each scenario in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVectors {
    pub stage0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage1: Vec<ScenarioVector>,
}

impl BlockVectors {
    fn new(stage0: &[f64], stage1: &[Vec<f64>], ids: &[String]) -> Self {
        Self {
            stage0: stage0.to_vec(),
            stage1: ids.iter().zip(stage1).map(|(id, v)| ScenarioVector { scenario: id.clone(), values: v.clone() }).collect(),
        }
    }

    fn scaled(&self, k: f64) -> Self {
        let s = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<_>>();
        Self {
            stage0: s(&self.stage0),
            stage1: self.stage1.iter().map(|b| ScenarioVector { scenario: b.scenario.clone(), values: s(&b.values) }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x1: Vec<ScenarioVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub start: String,
    pub solver: SolverConfig<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub status: Status,
    pub iterations: usize,
    pub residual: f64,
    pub prices: BlockVectors,
    pub prices_x100: BlockVectors,
    pub excess_supply: BlockVectors,
    pub agents: Vec<AgentSummary>,
    /// Omitted unless requested, so that reports stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<f64>,
    pub config: ConfigEcho,
}

impl SummaryReport {
    pub fn new(economy: &Economy<f64>, outcome: &SolveOutcome<f64>, config: ConfigEcho, wall_clock_ms: Option<f64>) -> Self {
        let ids = &economy.scenarios;
        let PriceSystem { p0, p1 } = &outcome.p;
        let prices = BlockVectors::new(p0, p1, ids);
        let ExcessSupply { s0, s1, .. } = &outcome.evaluation.supply;
        Self {
            status: outcome.trace.status,
            iterations: outcome.trace.iterations(),
            residual: outcome.residual,
            prices_x100: prices.scaled(100.0),
            prices,
            excess_supply: BlockVectors::new(s0, s1, ids),
            agents: outcome
                .evaluation
                .plans
                .iter()
                .map(|plan| AgentSummary {
                    x0: plan.x0.clone(),
                    y: plan.y.clone(),
                    x1: ids.iter().zip(&plan.x1).map(|(id, v)| ScenarioVector { scenario: id.clone(), values: v.clone() }).collect(),
                })
                .collect(),
            wall_clock_ms,
            config,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary reports always serialize")
    }
}
