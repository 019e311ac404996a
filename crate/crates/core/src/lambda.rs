//! Data-driven choices of λ for bounded-variation bounds.
//!
//! Expressions accepted by [`LambdaSpec::parse`]:
//!
//! ```text
//! 0.3                      fixed value
//! asmd:max:pretest,size    max ASMD over the listed covariates
//! asmd:mean:pretest,size   mean ASMD
//! asmd:single:pretest      ASMD of one covariate
//! sd:pooled[:mult]         mult · SD of all sample outcomes (default mult 2)
//! sd:max_arm[:mult]        mult · max of the per-arm SDs
//! ```
//!
//! Variances use denominator n.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Arm, StudyFrame};
use crate::propensity::{asmd, BalanceReport};

pub const DEFAULT_SD_MULTIPLIER: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsmdAggregate {
    Max,
    Mean,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmRule {
    Pooled,
    MaxArm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaSpec {
    Fixed {
        value: f64,
    },
    Asmd {
        covariates: Vec<String>,
        aggregate: AsmdAggregate,
    },
    OutcomeSd {
        multiplier: f64,
        arm_rule: ArmRule,
    },
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::OutcomeSd {
            multiplier: DEFAULT_SD_MULTIPLIER,
            arm_rule: ArmRule::Pooled,
        }
    }
}

fn bad(expr: &str, reason: impl Into<String>) -> Error {
    Error::BadLambdaExpr {
        expr: expr.to_string(),
        reason: reason.into(),
    }
}

fn parse_nonneg(expr: &str, text: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| bad(expr, format!("`{text}` is not a number")))?;
    if !v.is_finite() {
        return Err(bad(expr, "value must be finite"));
    }
    if v < 0.0 {
        return Err(Error::NegativeLambda(v));
    }
    Ok(v)
}

impl LambdaSpec {
    pub fn parse(expr: &str) -> Result<Self> {
        let trimmed = expr.trim();
        if trimmed.is_empty() {
            return Err(bad(expr, "empty expression"));
        }
        let mut parts = trimmed.splitn(3, ':');
        let head = parts.next().unwrap_or_default();
        match head {
            "asmd" => {
                let aggregate = match parts.next() {
                    Some("max") => AsmdAggregate::Max,
                    Some("mean") => AsmdAggregate::Mean,
                    Some("single") => AsmdAggregate::Single,
                    Some(other) => return Err(bad(expr, format!("unknown aggregate `{other}`"))),
                    None => return Err(bad(expr, "expected asmd:<max|mean|single>:<covariates>")),
                };
                let list = parts.next().ok_or_else(|| bad(expr, "missing covariate list"))?;
                let covariates: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
                if covariates.iter().any(|c| c.is_empty()) {
                    return Err(bad(expr, "empty covariate name"));
                }
                if aggregate == AsmdAggregate::Single && covariates.len() != 1 {
                    return Err(bad(expr, "asmd:single takes exactly one covariate"));
                }
                Ok(LambdaSpec::Asmd { covariates, aggregate })
            }
            "sd" => {
                let arm_rule = match parts.next() {
                    Some("pooled") => ArmRule::Pooled,
                    Some("max_arm") => ArmRule::MaxArm,
                    Some(other) => return Err(bad(expr, format!("unknown arm rule `{other}`"))),
                    None => return Err(bad(expr, "expected sd:<pooled|max_arm>[:multiplier]")),
                };
                let multiplier = match parts.next() {
                    Some(m) => parse_nonneg(expr, m)?,
                    None => DEFAULT_SD_MULTIPLIER,
                };
                Ok(LambdaSpec::OutcomeSd { multiplier, arm_rule })
            }
            _ => Ok(LambdaSpec::Fixed {
                value: parse_nonneg(expr, trimmed)?,
            }),
        }
    }
}

impl FromStr for LambdaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LambdaSpec::parse(s)
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSpec::Fixed { value } => write!(f, "{value}"),
            LambdaSpec::Asmd { covariates, aggregate } => {
                let agg = match aggregate {
                    AsmdAggregate::Max => "max",
                    AsmdAggregate::Mean => "mean",
                    AsmdAggregate::Single => "single",
                };
                write!(f, "asmd:{agg}:{}", covariates.join(","))
            }
            LambdaSpec::OutcomeSd { multiplier, arm_rule } => {
                let rule = match arm_rule {
                    ArmRule::Pooled => "pooled",
                    ArmRule::MaxArm => "max_arm",
                };
                write!(f, "sd:{rule}:{multiplier}")
            }
        }
    }
}

fn plug_in_variance(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some(values.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n)
}

/// Denominator-n variance of sample outcomes, over both arms.
pub fn pooled_outcome_variance(frame: &StudyFrame) -> Result<f64> {
    let ys: Vec<f64> = frame
        .units()
        .iter()
        .filter(|u| u.sampled)
        .filter_map(|u| u.outcome)
        .collect();
    plug_in_variance(&ys).ok_or(Error::EmptySample)
}

/// Denominator-n variance of sample outcomes in one arm.
pub fn arm_outcome_variance(frame: &StudyFrame, arm: Arm) -> Result<f64> {
    let ys: Vec<f64> = frame.sampled_in(arm).filter_map(|u| u.outcome).collect();
    plug_in_variance(&ys).ok_or(Error::EmptyArm(arm))
}

fn outcome_sd(frame: &StudyFrame, rule: ArmRule) -> Result<f64> {
    let var = match rule {
        ArmRule::Pooled => pooled_outcome_variance(frame)?,
        ArmRule::MaxArm => arm_outcome_variance(frame, Arm::Treated)?.max(arm_outcome_variance(frame, Arm::Control)?),
    };
    Ok(var.sqrt())
}

fn covariate_asmd(frame: &StudyFrame, balance: Option<&BalanceReport>, name: &str) -> Result<f64> {
    frame.covariate_index(name)?;
    match balance.and_then(|b| b.get(name)) {
        Some(row) => row.asmd.ok_or_else(|| Error::ZeroVariance(name.to_string())),
        None => asmd(frame, name),
    }
}

/// Resolves a spec to a concrete λ ≥ 0. ASMDs are taken from `balance`
/// when it covers the covariate, otherwise computed from the frame.
pub fn resolve_lambda(spec: &LambdaSpec, frame: &StudyFrame, balance: Option<&BalanceReport>) -> Result<f64> {
    match spec {
        LambdaSpec::Fixed { value } => {
            if !(*value >= 0.0) {
                return Err(Error::NegativeLambda(*value));
            }
            Ok(*value)
        }
        LambdaSpec::Asmd { covariates, aggregate } => {
            if covariates.is_empty() {
                return Err(bad(&spec.to_string(), "no covariates"));
            }
            let values = covariates
                .iter()
                .map(|c| covariate_asmd(frame, balance, c))
                .collect::<Result<Vec<_>>>()?;
            Ok(match aggregate {
                AsmdAggregate::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                AsmdAggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
                AsmdAggregate::Single => {
                    if values.len() != 1 {
                        return Err(bad(&spec.to_string(), "asmd:single takes exactly one covariate"));
                    }
                    values[0]
                }
            })
        }
        LambdaSpec::OutcomeSd { multiplier, arm_rule } => {
            if !(*multiplier >= 0.0) {
                return Err(Error::NegativeLambda(*multiplier));
            }
            Ok(multiplier * outcome_sd(frame, *arm_rule)?)
        }
    }
}

/// One candidate λ. `value` is absent when the rule is undefined on this
/// frame (a zero-variance covariate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub rule: String,
    pub value: Option<f64>,
}

/// Every rule's output side by side: one ASMD row per covariate, the mean
/// and max ASMD over all covariates, and the pooled and max-arm outcome SD
/// rules at the default multiplier.
pub fn lambda_report(frame: &StudyFrame, balance: &BalanceReport) -> Result<Vec<LambdaRow>> {
    let mut rows = Vec::new();
    let mut defined = Vec::new();
    for c in &balance.covariates {
        rows.push(LambdaRow {
            rule: format!("asmd:single:{}", c.covariate),
            value: c.asmd,
        });
        defined.extend(c.asmd);
    }
    if !balance.covariates.is_empty() {
        let names: Vec<&str> = balance.covariates.iter().map(|c| c.covariate.as_str()).collect();
        let list = names.join(",");
        let all_defined = defined.len() == balance.covariates.len();
        let mean = all_defined.then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let max = all_defined.then(|| defined.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        rows.push(LambdaRow {
            rule: format!("asmd:mean:{list}"),
            value: mean,
        });
        rows.push(LambdaRow {
            rule: format!("asmd:max:{list}"),
            value: max,
        });
    }
    for rule in [ArmRule::Pooled, ArmRule::MaxArm] {
        let spec = LambdaSpec::OutcomeSd {
            multiplier: DEFAULT_SD_MULTIPLIER,
            arm_rule: rule,
        };
        rows.push(LambdaRow {
            rule: spec.to_string(),
            value: Some(resolve_lambda(&spec, frame, None)?),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(LambdaSpec::parse("0.3").unwrap(), LambdaSpec::Fixed { value: 0.3 });
        assert_eq!(
            LambdaSpec::parse("asmd:max:pretest, size").unwrap(),
            LambdaSpec::Asmd {
                covariates: vec!["pretest".into(), "size".into()],
                aggregate: AsmdAggregate::Max
            }
        );
        assert_eq!(LambdaSpec::parse("sd:pooled").unwrap(), LambdaSpec::default());
        assert_eq!(
            LambdaSpec::parse("sd:max_arm:1.5").unwrap(),
            LambdaSpec::OutcomeSd {
                multiplier: 1.5,
                arm_rule: ArmRule::MaxArm
            }
        );
    }

    #[test]
    fn parse_errors() {
        for e in [
            "",
            "abc",
            "asmd",
            "asmd:median:x",
            "asmd:max:",
            "asmd:max:a,,b",
            "asmd:single:a,b",
            "sd",
            "sd:mean",
            "sd:pooled:x",
            "inf",
            "NaN",
        ] {
            let err = LambdaSpec::parse(e).unwrap_err();
            assert!(err.is_config(), "{e}: {err}");
        }
        assert!(matches!(LambdaSpec::parse("-0.1"), Err(Error::NegativeLambda(_))));
    }

    #[test]
    fn display_round_trips() {
        for e in [
            "0.25",
            "asmd:mean:a,b",
            "asmd:single:a",
            "sd:pooled:2",
            "sd:max_arm:0.5",
        ] {
            let spec = LambdaSpec::parse(e).unwrap();
            assert_eq!(LambdaSpec::parse(&spec.to_string()).unwrap(), spec);
        }
    }

    #[test]
    fn binary_sd_rule() {
        // 2·√(p(1−p)) at p = 0.0257
        let p: f64 = 0.0257;
        let lam = 2.0 * (p * (1.0 - p)).sqrt();
        assert!((lam - 0.316).abs() < 1e-3);
        assert!((plug_in_variance(&[1.0, 0.0, 0.0, 0.0]).unwrap() - 0.1875).abs() < 1e-15);
    }
}
