//! Point estimators of the PATE under ignorable sample selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Arm, StudyFrame};
use crate::propensity::{propensity_scores, PropensityModel};
use crate::stratify::{stratum_frames, StratumAssignment};

pub const DEFAULT_BOOTSTRAP_REPS: usize = 1000;
pub const DEFAULT_SEED: u64 = 20240521;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Ipw,
    Subclassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub reps: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            reps: DEFAULT_BOOTSTRAP_REPS,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    /// 1-based.
    pub stratum: usize,
    pub weight: f64,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointDetails {
    Naive {
        n_treated: usize,
        n_control: usize,
        mean_treated: f64,
        mean_control: f64,
    },
    Ipw {
        /// Always true: weights are normalized within each arm.
        normalized: bool,
        reps: usize,
        seed: u64,
        min_weight: f64,
        max_weight: f64,
        weight_sum_treated: f64,
        weight_sum_control: f64,
    },
    Subclassification {
        strata: Vec<StratumEstimate>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub method: Method,
    pub estimate: f64,
    pub se: f64,
    pub details: PointDetails,
}

impl PointEstimate {
    /// `0.048 (0.038)`.
    pub fn table_cell(&self) -> String {
        format!("{:.3} ({:.3})", self.estimate, self.se)
    }
}

fn arm_outcomes(frame: &StudyFrame, arm: Arm) -> Result<Vec<f64>> {
    let ys: Vec<f64> = frame.sampled_in(arm).filter_map(|u| u.outcome).collect();
    if ys.is_empty() {
        return Err(Error::EmptyArm(arm));
    }
    Ok(ys)
}

fn mean_var(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let m = ys.iter().sum::<f64>() / n;
    (m, ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / n)
}

/// Difference in sample arm means with SE `√(v1/n1 + v0/n0)`, plug-in
/// variances.
pub fn naive_sate(frame: &StudyFrame) -> Result<PointEstimate> {
    let y1 = arm_outcomes(frame, Arm::Treated)?;
    let y0 = arm_outcomes(frame, Arm::Control)?;
    let (m1, v1) = mean_var(&y1);
    let (m0, v0) = mean_var(&y0);
    Ok(PointEstimate {
        method: Method::Naive,
        estimate: m1 - m0,
        se: (v1 / y1.len() as f64 + v0 / y0.len() as f64).sqrt(),
        details: PointDetails::Naive {
            n_treated: y1.len(),
            n_control: y0.len(),
            mean_treated: m1,
            mean_control: m0,
        },
    })
}

fn weighted_mean(pairs: &[(f64, f64)]) -> f64 {
    let (num, den) = pairs.iter().fold((0.0, 0.0), |(n, d), &(y, w)| (n + w * y, d + w));
    num / den
}

/// Arm-stratified nonparametric bootstrap of the weighted difference in
/// means. Replicate r draws from `ChaCha8Rng` seeded with `seed` on stream
/// r, so results do not depend on scheduling or thread count.
pub fn bootstrap_se(treated: &[(f64, f64)], control: &[(f64, f64)], options: &BootstrapOptions) -> Result<f64> {
    if options.reps < 2 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 2 replicates, got {}",
            options.reps
        )));
    }
    if treated.is_empty() {
        return Err(Error::EmptyArm(Arm::Treated));
    }
    if control.is_empty() {
        return Err(Error::EmptyArm(Arm::Control));
    }
    let draws: Vec<f64> = (0..options.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(r as u64);
            let mut resample = |arm: &[(f64, f64)]| {
                let (mut num, mut den) = (0.0, 0.0);
                for _ in 0..arm.len() {
                    let (y, w) = arm[rng.gen_range(0..arm.len())];
                    num += w * y;
                    den += w;
                }
                num / den
            };
            let t = resample(treated);
            let c = resample(control);
            t - c
        })
        .collect();
    let b = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / b;
    Ok((draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (b - 1.0)).sqrt())
}

/// Bootstrap SE of the unweighted difference in means.
pub fn naive_bootstrap_se(frame: &StudyFrame, options: &BootstrapOptions) -> Result<f64> {
    let unit =
        |arm| -> Result<Vec<(f64, f64)>> { Ok(arm_outcomes(frame, arm)?.into_iter().map(|y| (y, 1.0)).collect()) };
    bootstrap_se(&unit(Arm::Treated)?, &unit(Arm::Control)?, options)
}

/// Normalized inverse-propensity weighting: within each arm, sampled units
/// are weighted by 1/ŝ(X) and the weights are normalized to sum to one.
pub fn ipw_estimate(frame: &StudyFrame, model: &PropensityModel, options: &BootstrapOptions) -> Result<PointEstimate> {
    if !model.converged {
        return Err(Error::UnfittedModel);
    }
    let scores = propensity_scores(model, frame)?;
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for (u, &s) in frame.units().iter().zip(&scores) {
        if !u.sampled {
            continue;
        }
        if !(s > 0.0) {
            return Err(Error::ZeroPropensity { unit: u.id.clone() });
        }
        let Some(y) = u.outcome else { continue };
        let pair = (y, 1.0 / s);
        match u.treatment {
            Some(Arm::Treated) => treated.push(pair),
            Some(Arm::Control) => control.push(pair),
            None => {}
        }
    }
    if treated.is_empty() {
        return Err(Error::EmptyArm(Arm::Treated));
    }
    if control.is_empty() {
        return Err(Error::EmptyArm(Arm::Control));
    }
    let estimate = weighted_mean(&treated) - weighted_mean(&control);
    let se = bootstrap_se(&treated, &control, options)?;
    let weights = treated.iter().chain(&control).map(|&(_, w)| w);
    let (min_weight, max_weight) =
        weights.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| (lo.min(w), hi.max(w)));
    Ok(PointEstimate {
        method: Method::Ipw,
        estimate,
        se,
        details: PointDetails::Ipw {
            normalized: true,
            reps: options.reps,
            seed: options.seed,
            min_weight,
            max_weight,
            weight_sum_treated: treated.iter().map(|p| p.1).sum(),
            weight_sum_control: control.iter().map(|p| p.1).sum(),
        },
    })
}

/// Population-share weighted average of within-stratum naive estimates,
/// `Σ (N_j/N)·τ̂_j`, with SE `√Σ (N_j/N)²·SE_j²`.
pub fn subclass_estimate(frame: &StudyFrame, assignment: &StratumAssignment) -> Result<PointEstimate> {
    let parts = stratum_frames(frame, assignment)?;
    let bad: Vec<usize> = parts.iter().filter(|p| !p.viable).map(|p| p.index + 1).collect();
    if !bad.is_empty() {
        return Err(Error::NonViableStratum(bad));
    }
    let n = frame.len() as f64;
    let strata = parts
        .iter()
        .map(|p| {
            let est = naive_sate(&p.frame)?;
            Ok(StratumEstimate {
                stratum: p.index + 1,
                weight: p.frame.len() as f64 / n,
                estimate: est.estimate,
                se: est.se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let estimate = strata.iter().map(|s| s.weight * s.estimate).sum();
    let se = match strata.as_slice() {
        [only] => only.se,
        _ => strata.iter().map(|s| (s.weight * s.se).powi(2)).sum::<f64>().sqrt(),
    };
    Ok(PointEstimate {
        method: Method::Subclassification,
        estimate,
        se,
        details: PointDetails::Subclassification { strata },
    })
}
