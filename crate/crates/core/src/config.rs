//! Analysis configuration: a JSON document whose fields can all be
//! overridden individually (command-line flags win over the file).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bounds::{AssumptionTag, BsvOptions, Framework};
use crate::error::{Error, Result};
use crate::frame::{ColumnMapping, OutcomeSupport, StudyFrame};
use crate::lambda::LambdaSpec;
use crate::points::{DEFAULT_BOOTSTRAP_REPS, DEFAULT_SEED};
use crate::propensity::PropensityOptions;
use crate::stratify::DEFAULT_STRATA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameworkChoice {
    Full,
    Reduced,
    Both,
}

impl FrameworkChoice {
    pub fn frameworks(self) -> Vec<Framework> {
        match self {
            FrameworkChoice::Full => vec![Framework::Full],
            FrameworkChoice::Reduced => vec![Framework::Reduced],
            FrameworkChoice::Both => vec![Framework::Full, Framework::Reduced],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Md,
}

/// Everything optional; unset fields fall back to data-dependent defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub data: Option<PathBuf>,
    pub sample: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub columns: Option<ColumnMapping>,
    pub support: Option<[f64; 2]>,
    pub covariates: Option<Vec<String>>,
    pub strata: Option<usize>,
    pub pw0z0: Option<f64>,
    pub lambdas: Option<Vec<String>>,
    pub framework: Option<FrameworkChoice>,
    pub assumptions: Option<Vec<AssumptionTag>>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub format: Option<OutputFormat>,
    pub merge_strata: Option<bool>,
    /// Report the population-weighted pooled stratum interval.
    pub pooled: Option<bool>,
    pub bsv: Option<BsvOptions>,
    pub propensity: Option<PropensityOptions>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        AnalysisConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fields set in `top` win.
    pub fn overlay(self, top: AnalysisConfig) -> AnalysisConfig {
        let base = self;
        overlay!(base, top; data, sample, population, columns, support, covariates, strata, pw0z0,
            lambdas, framework, assumptions, seed, reps, format, merge_strata, pooled, bsv, propensity)
    }

    pub fn outcome_support(&self) -> Result<OutcomeSupport> {
        let [lo, hi] = self.support.unwrap_or([0.0, 1.0]);
        OutcomeSupport::new(lo, hi)
    }

    pub fn column_mapping(&self) -> ColumnMapping {
        self.columns.clone().unwrap_or_default()
    }

    /// Resolves defaults against a loaded frame and validates.
    pub fn resolve(&self, frame: &StudyFrame) -> Result<AnalysisSettings> {
        let covariates = match &self.covariates {
            Some(list) => {
                for c in list {
                    frame.covariate_index(c)?;
                }
                list.clone()
            }
            None => frame.covariate_names().to_vec(),
        };
        let strata = self.strata.unwrap_or(DEFAULT_STRATA);
        if strata == 0 {
            return Err(Error::ZeroStrata);
        }
        let pw0z0 = self.pw0z0.unwrap_or(0.5);
        if !(0.0..=1.0).contains(&pw0z0) {
            return Err(Error::InvalidProbability {
                name: "pw0z0",
                value: pw0z0,
            });
        }
        let lambdas = match &self.lambdas {
            Some(list) if !list.is_empty() => list.iter().map(|e| LambdaSpec::parse(e)).collect::<Result<_>>()?,
            _ => vec![LambdaSpec::default()],
        };
        let frameworks = match self.framework {
            Some(choice) => choice.frameworks(),
            None if frame.has_population_outcomes() => FrameworkChoice::Both.frameworks(),
            None => FrameworkChoice::Full.frameworks(),
        };
        let assumptions = match &self.assumptions {
            Some(list) if list.is_empty() => return Err(Error::Config("at least one assumption is required".into())),
            Some(list) => {
                let mut out: Vec<AssumptionTag> = Vec::new();
                for a in list {
                    if !out.contains(a) {
                        out.push(*a);
                    }
                }
                out
            }
            None if frame.is_binary() => vec![AssumptionTag::WorstCase, AssumptionTag::Bsv, AssumptionTag::Mtr],
            None => vec![AssumptionTag::WorstCase, AssumptionTag::Bsv],
        };
        let reps = self.reps.unwrap_or(DEFAULT_BOOTSTRAP_REPS);
        if reps < 2 {
            return Err(Error::Config(format!("reps must be at least 2, got {reps}")));
        }
        Ok(AnalysisSettings {
            covariates,
            strata,
            pw0z0,
            lambdas,
            frameworks,
            assumptions,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            reps,
            merge_strata: self.merge_strata.unwrap_or(false),
            pooled: self.pooled.unwrap_or(false),
            bsv: self.bsv.unwrap_or_default(),
            propensity: self.propensity.unwrap_or_default(),
        })
    }
}

/// Fully resolved analysis settings, recorded verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub covariates: Vec<String>,
    pub strata: usize,
    pub pw0z0: f64,
    pub lambdas: Vec<LambdaSpec>,
    pub frameworks: Vec<Framework>,
    pub assumptions: Vec<AssumptionTag>,
    pub seed: u64,
    pub reps: usize,
    pub merge_strata: bool,
    pub pooled: bool,
    pub bsv: BsvOptions,
    pub propensity: PropensityOptions,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_overlay() {
        let base = AnalysisConfig::from_json(
            r#"{"strata": 3, "lambdas": ["0.3"], "assumptions": ["worst", "bsv"], "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(
            base.assumptions,
            Some(vec![AssumptionTag::WorstCase, AssumptionTag::Bsv])
        );
        let top = AnalysisConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = base.overlay(top);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.strata, Some(3));
    }

    #[test]
    fn unknown_field_is_config_error() {
        let e = AnalysisConfig::from_json(r#"{"strats": 3}"#).unwrap_err();
        assert!(e.is_config());
        assert!(AnalysisConfig::from_json("[").unwrap_err().is_config());
    }

    #[test]
    fn bad_support() {
        let c = AnalysisConfig {
            support: Some([1.0, 0.0]),
            ..Default::default()
        };
        assert!(c.outcome_support().unwrap_err().is_config());
    }
}
