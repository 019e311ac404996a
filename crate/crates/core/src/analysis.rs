//! End-to-end analysis: propensity model, strata, λ resolution, whole-frame
//! and per-stratum bounds, and point estimates, collected into one report.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    compute_bound, stratified_bounds, AssumptionTag, BoundOutcome, BoundSpec, Framework, MtrScope, PateInterval,
    StratifiedBounds,
};
use crate::config::AnalysisSettings;
use crate::error::Result;
use crate::frame::{design_probs, empirical_rates, Arm, DesignProbs, EmpiricalRates, StudyFrame};
use crate::lambda::{lambda_report, resolve_lambda, LambdaRow};
use crate::points::{ipw_estimate, naive_sate, subclass_estimate, BootstrapOptions, PointEstimate};
use crate::propensity::{balance_report, fit_propensity, logit_scores, BalanceReport, PropensityModel};
use crate::stratify::{make_strata, stratum_summary, StratumAssignment, StratumSummaryRow};

pub const TOOL_NAME: &str = "pibgen";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_population: usize,
    pub n_sample: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub n_population_outcomes: usize,
    pub binary: bool,
    pub support: [f64; 2],
}

impl DataSummary {
    pub fn of(frame: &StudyFrame) -> Self {
        let s = frame.support();
        Self {
            n_population: frame.len(),
            n_sample: frame.n_sampled(),
            n_treated: frame.n_arm(Arm::Treated),
            n_control: frame.n_arm(Arm::Control),
            n_population_outcomes: frame.population_outcomes().count(),
            binary: frame.is_binary(),
            support: [s.y_lo, s.y_hi],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedLambda {
    pub rule: String,
    pub value: f64,
}

/// One row of the whole-frame bounds table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_rule: Option<String>,
    #[serde(flatten)]
    pub interval: PateInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_rule: Option<String>,
    #[serde(flatten)]
    pub bounds: StratifiedBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataBlock {
    pub k: usize,
    pub breakpoints: Vec<f64>,
    pub summary: Vec<StratumSummaryRow>,
    /// `(from, into)` 1-based stratum merges made by `merge_strata`.
    pub merges: Vec<(usize, usize)>,
    pub bounds: Vec<StratifiedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityBlock {
    pub covariates: Vec<String>,
    pub model: PropensityModel,
    pub logit_min: f64,
    pub logit_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: ToolInfo,
    pub seed: u64,
    pub settings: AnalysisSettings,
    pub data: DataSummary,
    pub design: DesignProbs,
    pub rates: EmpiricalRates,
    pub propensity: PropensityBlock,
    pub balance: BalanceReport,
    pub lambdas: Vec<ResolvedLambda>,
    pub lambda_report: Vec<LambdaRow>,
    pub table1: Vec<BoundsRow>,
    pub table2: StrataBlock,
    pub table3: Vec<PointEstimate>,
    pub ledger: Vec<String>,
}

/// The bound specifications implied by the settings, in report order: each
/// assumption, then each framework, then each λ.
pub fn bound_specs(settings: &AnalysisSettings, lambdas: &[ResolvedLambda]) -> Vec<(BoundSpec, Option<String>)> {
    let mut specs = Vec::new();
    for &a in &settings.assumptions {
        for &fw in &settings.frameworks {
            match a {
                AssumptionTag::WorstCase => specs.push((BoundSpec::WorstCase { framework: fw }, None)),
                AssumptionTag::Bsv => {
                    for l in lambdas {
                        specs.push((
                            BoundSpec::Bsv {
                                framework: fw,
                                lambda: l.value,
                                options: settings.bsv,
                            },
                            Some(l.rule.clone()),
                        ));
                    }
                }
                AssumptionTag::Mtr => {
                    let scope = match fw {
                        Framework::Full => MtrScope::Sample,
                        Framework::Reduced => MtrScope::Population,
                    };
                    specs.push((BoundSpec::Mtr { scope }, None));
                }
            }
        }
    }
    specs
}

fn outcome_rows(outcome: BoundOutcome, rule: Option<String>) -> Vec<BoundsRow> {
    match outcome {
        BoundOutcome::Interval(iv) => vec![BoundsRow {
            lambda_rule: rule,
            interval: iv,
        }],
        BoundOutcome::Mtr(m) => vec![
            BoundsRow {
                lambda_rule: None,
                interval: m.interval_min_variant,
            },
            BoundsRow {
                lambda_rule: None,
                interval: m.interval_max_variant,
            },
        ],
    }
}

fn fmt_interval(iv: &PateInterval) -> String {
    format!("[{:.4}, {:.4}]", iv.lo, iv.hi)
}

fn describe(row: &BoundsRow) -> String {
    let iv = &row.interval;
    let mut s = format!("{:?}/{:?}", iv.assumption, iv.framework).to_lowercase();
    if let Some(l) = iv.lambda {
        s.push_str(&format!(" λ={l:.4}"));
    }
    if let Some(v) = iv.variant {
        s.push_str(&format!(" {v:?}-variant").to_lowercase());
    }
    s
}

pub struct Fitted {
    pub model: PropensityModel,
    pub logits: Vec<f64>,
    pub assignment: StratumAssignment,
    /// `(from, into)` 1-based merges.
    pub merges: Vec<(usize, usize)>,
}

/// Fits the selection model and assigns strata. Without covariates the
/// model is intercept-only and a single stratum is used.
pub fn fit_and_stratify(frame: &StudyFrame, settings: &AnalysisSettings, ledger: &mut Vec<String>) -> Result<Fitted> {
    let model = fit_propensity(frame, &settings.covariates, &settings.propensity)?;
    let logits = logit_scores(&model, frame)?;
    let k = if settings.covariates.is_empty() {
        if settings.strata != 1 {
            ledger.push(format!(
                "no covariates: propensity model is intercept-only, so {} strata collapse to 1",
                settings.strata
            ));
        }
        1
    } else {
        settings.strata
    };
    let mut assignment = make_strata(&logits, k)?.with_frame_counts(frame)?;
    let mut merges = Vec::new();
    if settings.merge_strata && !assignment.nonviable().is_empty() {
        let (merged, m) = assignment.merge_nonviable(frame)?;
        for &(from, into) in &m {
            log::warn!("merging non-viable stratum {} into stratum {}", from + 1, into + 1);
            ledger.push(format!(
                "merge_strata: non-viable stratum {} merged into stratum {}",
                from + 1,
                into + 1
            ));
        }
        merges = m.into_iter().map(|(a, b)| (a + 1, b + 1)).collect();
        assignment = merged;
    }
    Ok(Fitted {
        model,
        logits,
        assignment,
        merges,
    })
}

pub fn resolve_lambdas(
    frame: &StudyFrame,
    settings: &AnalysisSettings,
    balance: &BalanceReport,
) -> Result<Vec<ResolvedLambda>> {
    settings
        .lambdas
        .iter()
        .map(|spec| {
            Ok(ResolvedLambda {
                rule: spec.to_string(),
                value: resolve_lambda(spec, frame, Some(balance))?,
            })
        })
        .collect()
}

pub fn run_analysis(frame: &StudyFrame, settings: &AnalysisSettings) -> Result<Report> {
    let mut ledger = Vec::new();
    let design = design_probs(frame, settings.pw0z0)?;
    let rates = empirical_rates(frame)?;
    let balance = balance_report(frame, &settings.covariates)?;
    for c in &balance.covariates {
        if c.asmd.is_none() {
            ledger.push(format!(
                "covariate `{}` is constant in the population; ASMD undefined",
                c.covariate
            ));
        }
    }
    let Fitted {
        model,
        logits,
        assignment,
        merges,
    } = fit_and_stratify(frame, settings, &mut ledger)?;
    let lambdas = resolve_lambdas(frame, settings, &balance)?;
    let candidates = lambda_report(frame, &balance)?;

    let specs = bound_specs(settings, &lambdas);
    let mut table1 = Vec::new();
    for (spec, rule) in &specs {
        let outcome = compute_bound(spec, &rates, &design, frame.support())?;
        table1.extend(outcome_rows(outcome, rule.clone()));
    }
    for row in &table1 {
        let iv = &row.interval;
        if iv.improves == Some(false) {
            ledger.push(format!(
                "{}: not improving on worst case (d ± 2λ leaves the feasible range)",
                describe(row)
            ));
        }
        if iv.clamped.lo || iv.clamped.hi {
            ledger.push(format!(
                "{}: clamped to {} from pre-clamp [{:.4}, {:.4}]",
                describe(row),
                fmt_interval(iv),
                iv.pre_clamp.lo,
                iv.pre_clamp.hi
            ));
        }
    }

    let mut bounds = Vec::new();
    for (spec, rule) in &specs {
        let sb = stratified_bounds(frame, &assignment, spec, settings.pw0z0, settings.pooled)?;
        bounds.push(StratifiedRow {
            lambda_rule: rule.clone(),
            bounds: sb,
        });
    }
    let nonviable: Vec<usize> = assignment.nonviable().iter().map(|j| j + 1).collect();
    if !nonviable.is_empty() {
        ledger.push(format!(
            "non-viable strata (no sampled treated or control unit): {nonviable:?}"
        ));
    }
    let summary = stratum_summary(frame, &assignment)?;

    let boot = BootstrapOptions {
        reps: settings.reps,
        seed: settings.seed,
    };
    let mut table3 = vec![naive_sate(frame)?];
    match ipw_estimate(frame, &model, &boot) {
        Ok(e) => table3.push(e),
        Err(e) => ledger.push(format!("ipw: skipped ({e})")),
    }
    match subclass_estimate(frame, &assignment) {
        Ok(e) => table3.push(e),
        Err(e) => ledger.push(format!("subclassification: skipped ({e})")),
    }

    let (logit_min, logit_max) = logits.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| {
        (lo.min(l), hi.max(l))
    });
    Ok(Report {
        tool: ToolInfo {
            name: TOOL_NAME.into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        seed: settings.seed,
        settings: settings.clone(),
        data: DataSummary::of(frame),
        design,
        rates,
        propensity: PropensityBlock {
            covariates: settings.covariates.clone(),
            model,
            logit_min,
            logit_max,
        },
        balance,
        lambdas,
        lambda_report: candidates,
        table1,
        table2: StrataBlock {
            k: assignment.k,
            breakpoints: assignment.breakpoints.clone(),
            summary,
            merges,
            bounds,
        },
        table3,
        ledger,
    })
}
