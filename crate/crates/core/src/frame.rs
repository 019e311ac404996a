//! Study frame: sampled and non-sampled units, CSV ingestion, and the
//! design probabilities and plug-in rates every estimator consumes.
//!
//! A frame is the whole target population. Units with `sampled = true` took
//! part in the randomized trial and carry a treatment arm and an outcome.
//! Non-sampled units carry covariates and, optionally, a business-as-usual
//! outcome (their realized outcome under the control condition).

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Known range `[y_lo, y_hi]` of the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSupport {
    pub y_lo: f64,
    pub y_hi: f64,
}

impl OutcomeSupport {
    pub const BINARY: OutcomeSupport = OutcomeSupport { y_lo: 0.0, y_hi: 1.0 };

    pub fn new(y_lo: f64, y_hi: f64) -> Result<Self> {
        if !(y_lo.is_finite() && y_hi.is_finite() && y_lo < y_hi) {
            return Err(Error::InvalidSupport { lo: y_lo, hi: y_hi });
        }
        Ok(Self { y_lo, y_hi })
    }

    pub fn width(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn is_binary(&self) -> bool {
        self.y_lo == 0.0 && self.y_hi == 1.0
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.y_lo && y <= self.y_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn from_indicator(w: u8) -> Option<Arm> {
        match w {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }

    pub fn indicator(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Control => "control",
            Arm::Treated => "treated",
        })
    }
}

/// One school / unit of the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub id: String,
    /// Sample indicator Z.
    pub sampled: bool,
    /// Treatment W. Always present for sampled units; for non-sampled units
    /// it is a hypothetical arm label read only by the enumeration oracle.
    pub treatment: Option<Arm>,
    pub outcome: Option<f64>,
    /// Covariate values, aligned with [`StudyFrame::covariate_names`].
    pub covariates: Vec<f64>,
}

fn validate_unit(row: usize, u: &UnitRecord, support: OutcomeSupport, covariate_names: &[String]) -> Result<()> {
    if u.sampled {
        if u.treatment.is_none() {
            return Err(Error::MissingTreatment { row });
        }
        if u.outcome.is_none() {
            return Err(Error::MissingOutcome { row });
        }
    }
    if let Some(y) = u.outcome {
        if !y.is_finite() || !support.contains(y) {
            return Err(Error::OutcomeOutOfSupport {
                row,
                value: y,
                lo: support.y_lo,
                hi: support.y_hi,
            });
        }
    }
    if u.covariates.len() != covariate_names.len() {
        let column = covariate_names.get(u.covariates.len()).cloned().unwrap_or_default();
        return Err(Error::MissingCovariate { row, column });
    }
    if let Some(j) = u.covariates.iter().position(|x| !x.is_finite()) {
        return Err(Error::MissingCovariate {
            row,
            column: covariate_names[j].clone(),
        });
    }
    Ok(())
}

/// The combined sample + population frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFrame {
    units: Vec<UnitRecord>,
    support: OutcomeSupport,
    covariate_names: Vec<String>,
}

impl StudyFrame {
    /// Validates unit records against the support and covariate layout.
    /// Row numbers in errors are 1-based positions in `units`.
    pub fn new(units: Vec<UnitRecord>, support: OutcomeSupport, covariate_names: Vec<String>) -> Result<Self> {
        OutcomeSupport::new(support.y_lo, support.y_hi)?;
        let mut seen = HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        for (i, u) in units.iter().enumerate() {
            validate_unit(i + 1, u, support, &covariate_names)?;
        }
        Ok(Self {
            units,
            support,
            covariate_names,
        })
    }

    pub fn units(&self) -> &[UnitRecord] {
        &self.units
    }

    pub fn support(&self) -> OutcomeSupport {
        self.support
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Population size N.
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Sample size n.
    pub fn n_sampled(&self) -> usize {
        self.units.iter().filter(|u| u.sampled).count()
    }

    pub fn n_arm(&self, arm: Arm) -> usize {
        self.sampled_in(arm).count()
    }

    pub fn sampled_in(&self, arm: Arm) -> impl Iterator<Item = &UnitRecord> {
        self.units.iter().filter(move |u| u.sampled && u.treatment == Some(arm))
    }

    /// Non-sampled units that carry a business-as-usual outcome.
    pub fn population_outcomes(&self) -> impl Iterator<Item = f64> + '_ {
        self.units.iter().filter(|u| !u.sampled).filter_map(|u| u.outcome)
    }

    pub fn has_population_outcomes(&self) -> bool {
        self.population_outcomes().next().is_some()
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    pub fn covariate_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.covariate_index(name)?;
        Ok(self.units.iter().map(|u| u.covariates[j]).collect())
    }

    /// True when the support is {0,1} and every observed outcome is 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.support.is_binary()
            && self
                .units
                .iter()
                .filter_map(|u| u.outcome)
                .all(|y| y == 0.0 || y == 1.0)
    }

    /// New frame with the same support and covariates over a subset of units.
    pub fn subset<'a>(&self, units: impl IntoIterator<Item = &'a UnitRecord>) -> StudyFrame {
        StudyFrame {
            units: units.into_iter().cloned().collect(),
            support: self.support,
            covariate_names: self.covariate_names.clone(),
        }
    }
}

/// Declares a categorical column to be one-hot encoded at ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub column: String,
    /// Omitted level. Defaults to the lexicographically smallest level.
    #[serde(default)]
    pub reference: Option<String>,
}

/// Maps CSV headers onto the reserved column roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    /// Identifier column. If the header lacks it, ids are row numbers.
    pub id: String,
    pub sample: String,
    pub treatment: String,
    pub outcome: String,
    /// Explicit covariate list; `None` takes every non-reserved column.
    pub covariates: Option<Vec<String>>,
    pub exclude: Vec<String>,
    pub categorical: Vec<CategoricalSpec>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            id: "id".into(),
            sample: "in_sample".into(),
            treatment: "treatment".into(),
            outcome: "outcome".into(),
            covariates: None,
            exclude: Vec::new(),
            categorical: Vec::new(),
        }
    }
}

struct RawTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    fn read<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(source);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
        }
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

enum CovariateSource {
    Numeric { col: usize, name: String },
    Dummy { col: usize, level: String },
}

fn covariate_layout(
    table: &RawTable,
    mapping: &ColumnMapping,
    reserved: &[&str],
) -> Result<(Vec<String>, Vec<CovariateSource>)> {
    let selected: Vec<String> = match &mapping.covariates {
        Some(list) => list.clone(),
        None => table
            .headers
            .iter()
            .filter(|h| !reserved.contains(&h.as_str()))
            .filter(|h| !mapping.exclude.contains(h))
            .cloned()
            .collect(),
    };
    let mut names = Vec::new();
    let mut sources = Vec::new();
    for name in selected {
        if reserved.contains(&name.as_str()) {
            return Err(Error::DuplicateColumn(name));
        }
        let col = table.require(&name)?;
        match mapping.categorical.iter().find(|c| c.column == name) {
            None => {
                names.push(name.clone());
                sources.push(CovariateSource::Numeric { col, name });
            }
            Some(spec) => {
                let mut levels = BTreeSet::new();
                for (i, row) in table.rows.iter().enumerate() {
                    if row[col].is_empty() {
                        return Err(Error::MissingCovariate {
                            row: i + 1,
                            column: name.clone(),
                        });
                    }
                    levels.insert(row[col].clone());
                }
                let reference = match &spec.reference {
                    Some(r) => {
                        if !levels.contains(r) && !levels.is_empty() {
                            return Err(Error::Config(format!(
                                "reference level `{r}` not found in column `{name}`"
                            )));
                        }
                        r.clone()
                    }
                    None => levels.iter().next().cloned().unwrap_or_default(),
                };
                for level in levels.into_iter().filter(|l| *l != reference) {
                    names.push(format!("{name}={level}"));
                    sources.push(CovariateSource::Dummy { col, level });
                }
            }
        }
    }
    Ok((names, sources))
}

fn parse_indicator(row: usize, column: &str, value: &str) -> Result<u8> {
    match value {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(Error::BadIndicator {
            row,
            column: column.to_string(),
            value: value.to_string(),
        }),
    }
}

struct RowContext<'a> {
    id_col: Option<usize>,
    sample_col: Option<usize>,
    treatment_col: Option<usize>,
    outcome_col: usize,
    mapping: &'a ColumnMapping,
    sources: &'a [CovariateSource],
}

impl RowContext<'_> {
    fn build(&self, row: usize, fields: &[String], forced_z: Option<bool>) -> Result<UnitRecord> {
        let sampled = match (forced_z, self.sample_col) {
            (Some(z), _) => z,
            (None, Some(c)) => parse_indicator(row, &self.mapping.sample, &fields[c])? == 1,
            (None, None) => return Err(Error::MissingColumn(self.mapping.sample.clone())),
        };
        let treatment = match self.treatment_col.map(|c| fields[c].as_str()) {
            None | Some("") => None,
            Some(v) => Arm::from_indicator(parse_indicator(row, &self.mapping.treatment, v)?),
        };
        let outcome = match fields[self.outcome_col].as_str() {
            "" => None,
            v => Some(v.parse::<f64>().map_err(|_| Error::BadOutcome {
                row,
                value: v.to_string(),
            })?),
        };
        let mut covariates = Vec::with_capacity(self.sources.len());
        for src in self.sources {
            let x = match src {
                CovariateSource::Numeric { col, name } => {
                    let v = &fields[*col];
                    if v.is_empty() {
                        return Err(Error::MissingCovariate {
                            row,
                            column: name.clone(),
                        });
                    }
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::BadCovariate {
                            row,
                            column: name.clone(),
                            value: v.clone(),
                        })?
                }
                CovariateSource::Dummy { col, level } => {
                    if fields[*col] == *level {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            covariates.push(x);
        }
        let id = match self.id_col {
            Some(c) if !fields[c].is_empty() => fields[c].clone(),
            _ => row.to_string(),
        };
        Ok(UnitRecord {
            id,
            sampled,
            treatment,
            outcome,
            covariates,
        })
    }
}

/// Reads a single combined frame. Row numbers in errors are 1-based data
/// rows (the header is not counted).
pub fn load_frame<R: Read>(source: R, mapping: &ColumnMapping, support: OutcomeSupport) -> Result<StudyFrame> {
    let support = OutcomeSupport::new(support.y_lo, support.y_hi)?;
    let table = RawTable::read(source)?;
    let reserved = [
        mapping.id.as_str(),
        mapping.sample.as_str(),
        mapping.treatment.as_str(),
        mapping.outcome.as_str(),
    ];
    let ctx = RowContext {
        id_col: table.column(&mapping.id),
        sample_col: Some(table.require(&mapping.sample)?),
        treatment_col: Some(table.require(&mapping.treatment)?),
        outcome_col: table.require(&mapping.outcome)?,
        mapping,
        sources: &[],
    };
    let (names, sources) = covariate_layout(&table, mapping, &reserved)?;
    let ctx = RowContext {
        sources: &sources,
        ..ctx
    };
    let units = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, f)| ctx.build(i + 1, f, None))
        .collect::<Result<Vec<_>>>()?;
    StudyFrame::new(units, support, names)
}

/// Two-file mode: every row of `sample` is tagged Z=1; rows of `population`
/// are tagged Z=0 unless their id also appears in the sample file (the
/// population listing usually includes the sampled units).
pub fn load_two_files<R1: Read, R2: Read>(
    sample: R1,
    population: R2,
    mapping: &ColumnMapping,
    support: OutcomeSupport,
) -> Result<StudyFrame> {
    let support = OutcomeSupport::new(support.y_lo, support.y_hi)?;
    let s_table = RawTable::read(sample)?;
    let p_table = RawTable::read(population)?;
    let reserved = [
        mapping.id.as_str(),
        mapping.sample.as_str(),
        mapping.treatment.as_str(),
        mapping.outcome.as_str(),
    ];
    let (names, s_sources) = covariate_layout(&s_table, mapping, &reserved)?;
    let (p_names, p_sources) = covariate_layout(&p_table, mapping, &reserved)?;
    if names != p_names {
        return Err(Error::Config(format!(
            "sample covariates {names:?} differ from population covariates {p_names:?}"
        )));
    }
    let s_ctx = RowContext {
        id_col: s_table.column(&mapping.id),
        sample_col: None,
        treatment_col: Some(s_table.require(&mapping.treatment)?),
        outcome_col: s_table.require(&mapping.outcome)?,
        mapping,
        sources: &s_sources,
    };
    let p_ctx = RowContext {
        id_col: p_table.column(&mapping.id),
        sample_col: None,
        treatment_col: p_table.column(&mapping.treatment),
        outcome_col: p_table.require(&mapping.outcome)?,
        mapping,
        sources: &p_sources,
    };
    let mut units = Vec::new();
    for (i, f) in s_table.rows.iter().enumerate() {
        let u = s_ctx.build(i + 1, f, Some(true))?;
        validate_unit(i + 1, &u, support, &names)?;
        units.push(u);
    }
    let sample_ids: HashSet<String> = if s_ctx.id_col.is_some() && p_ctx.id_col.is_some() {
        units.iter().map(|u| u.id.clone()).collect()
    } else {
        HashSet::new()
    };
    for (i, f) in p_table.rows.iter().enumerate() {
        let mut u = p_ctx.build(i + 1, f, Some(false))?;
        if sample_ids.contains(&u.id) {
            continue;
        }
        if p_ctx.id_col.is_none() {
            u.id = format!("p{}", i + 1);
        }
        validate_unit(i + 1, &u, support, &names)?;
        units.push(u);
    }
    StudyFrame::new(units, support, names)
}

/// P(Z=1), P(W=1|Z=1) and the assumed P(W=0|Z=0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignProbs {
    pub p_z1: f64,
    pub p_w1_given_z1: f64,
    pub p_w0_given_z0: f64,
}

fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

impl DesignProbs {
    pub fn new(p_z1: f64, p_w1_given_z1: f64, p_w0_given_z0: f64) -> Result<Self> {
        check_probability("p_z1", p_z1)?;
        if p_z1 == 0.0 {
            return Err(Error::EmptySample);
        }
        Ok(Self {
            p_z1,
            p_w1_given_z1: check_probability("p_w1_given_z1", p_w1_given_z1)?,
            p_w0_given_z0: check_probability("p_w0_given_z0", p_w0_given_z0)?,
        })
    }

    pub fn p_z0(&self) -> f64 {
        1.0 - self.p_z1
    }

    /// P(W=1, Z=1).
    pub fn p_w1z1(&self) -> f64 {
        self.p_w1_given_z1 * self.p_z1
    }

    /// P(W=0, Z=1).
    pub fn p_w0z1(&self) -> f64 {
        (1.0 - self.p_w1_given_z1) * self.p_z1
    }

    /// P(W=0, Z=0), the mass identified by the population frame.
    pub fn p_w0z0(&self) -> f64 {
        self.p_w0_given_z0 * self.p_z0()
    }

    /// P(W=1, Z=0).
    pub fn p_w1z0(&self) -> f64 {
        (1.0 - self.p_w0_given_z0) * self.p_z0()
    }
}

pub fn design_probs(frame: &StudyFrame, assumed_p_w0_given_z0: f64) -> Result<DesignProbs> {
    let n = frame.n_sampled();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let treated = frame.n_arm(Arm::Treated);
    DesignProbs::new(
        n as f64 / frame.len() as f64,
        treated as f64 / n as f64,
        assumed_p_w0_given_z0,
    )
}

/// Plug-in conditional expectations feeding the bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRates {
    /// E(Y | W=1, Z=1).
    pub e_y1_w1z1: f64,
    /// E(Y | W=0, Z=1).
    pub e_y0_w0z1: f64,
    /// Mean business-as-usual outcome among non-sampled units.
    pub e_y0_w0z0: Option<f64>,
    /// P(Y=1 | W=1, Z=1); binary outcomes only.
    pub pass1_w1z1: Option<f64>,
    /// P(Y=0 | W=0, Z=1); binary outcomes only.
    pub fail0_w0z1: Option<f64>,
    /// P(Y=0 | W=0, Z=0); binary outcomes with population outcomes only.
    pub fail0_w0z0: Option<f64>,
}

impl EmpiricalRates {
    /// Rates for a bounded (possibly continuous) outcome.
    pub fn from_means(e_y1_w1z1: f64, e_y0_w0z1: f64, e_y0_w0z0: Option<f64>) -> Self {
        Self {
            e_y1_w1z1,
            e_y0_w0z1,
            e_y0_w0z0,
            pass1_w1z1: None,
            fail0_w0z1: None,
            fail0_w0z0: None,
        }
    }

    /// Rates for a binary outcome, with the pass/fail rates filled in.
    pub fn binary(e_y1_w1z1: f64, e_y0_w0z1: f64, e_y0_w0z0: Option<f64>) -> Self {
        Self {
            e_y1_w1z1,
            e_y0_w0z1,
            e_y0_w0z0,
            pass1_w1z1: Some(e_y1_w1z1),
            fail0_w0z1: Some(1.0 - e_y0_w0z1),
            fail0_w0z0: e_y0_w0z0.map(|q| 1.0 - q),
        }
    }

    /// Sample difference in arm means, the SATE estimate.
    pub fn sate(&self) -> f64 {
        self.e_y1_w1z1 - self.e_y0_w0z1
    }

    pub fn is_binary(&self) -> bool {
        self.pass1_w1z1.is_some() && self.fail0_w0z1.is_some()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), y| (s + y, c + 1));
    (count > 0).then(|| sum / count as f64)
}

pub fn empirical_rates(frame: &StudyFrame) -> Result<EmpiricalRates> {
    let arm_mean = |arm| mean(frame.sampled_in(arm).filter_map(|u| u.outcome)).ok_or(Error::EmptyArm(arm));
    let e1 = arm_mean(Arm::Treated)?;
    let e0 = arm_mean(Arm::Control)?;
    let q0 = mean(frame.population_outcomes());
    Ok(if frame.is_binary() {
        EmpiricalRates::binary(e1, e0, q0)
    } else {
        EmpiricalRates::from_means(e1, e0, q0)
    })
}
