//! Sampling propensity model and covariate balance.
//!
//! The selection model is a logistic regression of the sample indicator on
//! covariates, fitted by Newton-Raphson (equivalently IRLS) with step-halving.
//! Covariates are standardized internally; coefficients are reported on the
//! original scale.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::StudyFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropensityOptions {
    /// Convergence threshold on the Euclidean norm of the per-unit
    /// log-likelihood gradient (standardized scale).
    pub tolerance: f64,
    pub max_iter: usize,
    /// L2 penalty on standardized slopes; the intercept is never penalized.
    pub ridge: f64,
}

impl Default for PropensityOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iter: 100,
            ridge: 0.0,
        }
    }
}

/// Fitted logistic selection model, `logit s(X) = intercept + Σ βⱼ xⱼ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default)]
    pub final_gradient_norm: f64,
}

impl PropensityModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let model: PropensityModel = serde_json::from_str(text)?;
        if !model.intercept.is_finite() || model.coefficients.values().any(|b| !b.is_finite()) {
            return Err(Error::Json("non-finite coefficient".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^eta) without overflow.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Penalized binomial log-likelihood of z on a design matrix whose first
/// column is the intercept. Everything is averaged over rows.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    design: DMatrix<f64>,
    response: DVector<f64>,
    ridge: f64,
}

impl LogisticObjective {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, ridge: f64) -> Self {
        assert_eq!(design.nrows(), response.len());
        Self {
            design,
            response,
            ridge,
        }
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn rows(&self) -> f64 {
        self.design.nrows() as f64
    }

    fn penalty(&self, beta: &DVector<f64>) -> f64 {
        0.5 * self.ridge * beta.rows(1, beta.len() - 1).norm_squared()
    }

    pub fn log_likelihood(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.design * beta;
        let ll: f64 = eta
            .iter()
            .zip(self.response.iter())
            .map(|(&e, &z)| z * e - log1p_exp(e))
            .sum();
        ll / self.rows() - self.penalty(beta)
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = &self.design * beta;
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.response.iter()).map(|(&e, &z)| z - sigmoid(e)),
        );
        let mut g = self.design.tr_mul(&resid) / self.rows();
        for j in 1..g.len() {
            g[j] -= self.ridge * beta[j];
        }
        g
    }

    /// Negative Hessian (positive semi-definite).
    pub fn information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = &self.design * beta;
        let mut weighted = self.design.clone();
        for (i, &e) in eta.iter().enumerate() {
            let p = sigmoid(e);
            let w = p * (1.0 - p);
            weighted.row_mut(i).scale_mut(w);
        }
        let mut info = self.design.tr_mul(&weighted) / self.rows();
        for j in 1..info.ncols() {
            info[(j, j)] += self.ridge;
        }
        info
    }
}

struct Standardized {
    objective: LogisticObjective,
    means: Vec<f64>,
    sds: Vec<f64>,
}

fn standardize(frame: &StudyFrame, covariates: &[String], ridge: f64) -> Result<Standardized> {
    let n = frame.len();
    let p = covariates.len();
    let mut design = DMatrix::<f64>::zeros(n, p + 1);
    design.column_mut(0).fill(1.0);
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for (j, name) in covariates.iter().enumerate() {
        if covariates[..j].contains(name) {
            return Err(Error::SingularDesign(format!("covariate `{name}` listed twice")));
        }
        let col = frame.covariate_column(name)?;
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::SingularDesign(format!("covariate `{name}` is constant")));
        }
        for (i, x) in col.iter().enumerate() {
            design[(i, j + 1)] = (x - mean) / sd;
        }
        means.push(mean);
        sds.push(sd);
    }
    let response = DVector::from_iterator(n, frame.units().iter().map(|u| if u.sampled { 1.0 } else { 0.0 }));
    Ok(Standardized {
        objective: LogisticObjective::new(design, response, ridge),
        means,
        sds,
    })
}

/// Beyond this many standard deviations per unit of logit the fit is treated
/// as diverging.
const SEPARATION_SLOPE: f64 = 25.0;
const MAX_HALVINGS: usize = 40;

pub fn fit_propensity(
    frame: &StudyFrame,
    covariates: &[String],
    options: &PropensityOptions,
) -> Result<PropensityModel> {
    fit_propensity_traced(frame, covariates, options).map(|(m, _)| m)
}

/// As [`fit_propensity`], also returning the average log-likelihood after
/// each accepted step (starting point first).
pub fn fit_propensity_traced(
    frame: &StudyFrame,
    covariates: &[String],
    options: &PropensityOptions,
) -> Result<(PropensityModel, Vec<f64>)> {
    if frame.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let n = frame.n_sampled();
    if n == 0 || n == frame.len() {
        return Err(Error::SingleClass);
    }
    if !(options.ridge >= 0.0) {
        return Err(Error::Config(format!(
            "ridge must be non-negative, got {}",
            options.ridge
        )));
    }
    let std = standardize(frame, covariates, options.ridge)?;
    let obj = &std.objective;
    let share = n as f64 / frame.len() as f64;
    let mut beta = DVector::<f64>::zeros(obj.dim());
    beta[0] = (share / (1.0 - share)).ln();
    let mut ll = obj.log_likelihood(&beta);
    let mut trace = vec![ll];
    let mut grad = obj.gradient(&beta);
    let mut iterations = 0;
    let mut converged = grad.norm() <= options.tolerance;

    while !converged && iterations < options.max_iter {
        iterations += 1;
        let info = obj.information(&beta);
        let chol = info
            .cholesky()
            .ok_or_else(|| Error::SingularDesign("information matrix is not positive definite".into()))?;
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = obj.log_likelihood(&candidate);
        let mut halvings = 0;
        while !(cand_ll >= ll) && halvings < MAX_HALVINGS {
            t *= 0.5;
            halvings += 1;
            candidate = &beta + &step * t;
            cand_ll = obj.log_likelihood(&candidate);
        }
        if !(cand_ll >= ll) {
            // No ascent along the Newton direction: we are at the optimum to
            // within floating point resolution.
            break;
        }
        beta = candidate;
        ll = cand_ll;
        trace.push(ll);
        grad = obj.gradient(&beta);
        converged = grad.norm() <= options.tolerance;

        let slopes = beta.rows(1, beta.len() - 1);
        if !converged && slopes.amax() > SEPARATION_SLOPE {
            let norm = slopes.norm();
            let direction = covariates
                .iter()
                .zip(slopes.iter())
                .map(|(name, b)| (name.clone(), b / norm))
                .collect();
            return Err(Error::Separation { direction });
        }
    }
    let gradient_norm = grad.norm();
    if !converged {
        if gradient_norm <= options.tolerance.max(1e-10) {
            converged = true;
        } else {
            return Err(Error::NoConvergence {
                max_iter: options.max_iter,
                gradient_norm,
            });
        }
    }

    let mut intercept = beta[0];
    let mut coefficients = BTreeMap::new();
    for (j, name) in covariates.iter().enumerate() {
        let b = beta[j + 1] / std.sds[j];
        intercept -= b * std.means[j];
        coefficients.insert(name.clone(), b);
    }
    let model = PropensityModel {
        intercept,
        coefficients,
        converged,
        iterations,
        final_gradient_norm: gradient_norm,
    };
    Ok((model, trace))
}

/// Per-unit linear predictor `β₀ + Σ βⱼ xᵢⱼ`, in frame order.
pub fn logit_scores(model: &PropensityModel, frame: &StudyFrame) -> Result<Vec<f64>> {
    let cols: Vec<(usize, f64)> = model
        .coefficients
        .iter()
        .map(|(name, &b)| frame.covariate_index(name).map(|j| (j, b)))
        .collect::<Result<_>>()?;
    Ok(frame
        .units()
        .iter()
        .map(|u| model.intercept + cols.iter().map(|&(j, b)| b * u.covariates[j]).sum::<f64>())
        .collect())
}

/// Fitted selection probabilities s(X).
pub fn propensity_scores(model: &PropensityModel, frame: &StudyFrame) -> Result<Vec<f64>> {
    Ok(logit_scores(model, frame)?.into_iter().map(sigmoid).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBalance {
    pub covariate: String,
    /// X̄_S over sampled units.
    pub sample_mean: f64,
    /// μ_P over all N units.
    pub population_mean: f64,
    /// σ_P over all N units, denominator N.
    pub population_sd: f64,
    /// `None` when the covariate is constant over the population.
    pub asmd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub covariates: Vec<CovariateBalance>,
}

impl BalanceReport {
    pub fn get(&self, name: &str) -> Option<&CovariateBalance> {
        self.covariates.iter().find(|c| c.covariate == name)
    }
}

fn covariate_balance(frame: &StudyFrame, name: &str) -> Result<CovariateBalance> {
    let j = frame.covariate_index(name)?;
    let n_pop = frame.len();
    let n_s = frame.n_sampled();
    if n_pop == 0 {
        return Err(Error::EmptyFrame);
    }
    if n_s == 0 {
        return Err(Error::EmptySample);
    }
    let pop_mean = frame.units().iter().map(|u| u.covariates[j]).sum::<f64>() / n_pop as f64;
    let pop_var = frame
        .units()
        .iter()
        .map(|u| (u.covariates[j] - pop_mean).powi(2))
        .sum::<f64>()
        / n_pop as f64;
    let sample_mean = frame
        .units()
        .iter()
        .filter(|u| u.sampled)
        .map(|u| u.covariates[j])
        .sum::<f64>()
        / n_s as f64;
    let sd = pop_var.sqrt();
    let asmd = (sd > 1e-12 * pop_mean.abs().max(1.0)).then(|| (pop_mean - sample_mean).abs() / sd);
    Ok(CovariateBalance {
        covariate: name.to_string(),
        sample_mean,
        population_mean: pop_mean,
        population_sd: sd,
        asmd,
    })
}

/// Absolute standardized mean difference |μ_P − X̄_S| / σ_P.
pub fn asmd(frame: &StudyFrame, covariate: &str) -> Result<f64> {
    covariate_balance(frame, covariate)?
        .asmd
        .ok_or_else(|| Error::ZeroVariance(covariate.to_string()))
}

pub fn balance_report(frame: &StudyFrame, covariates: &[String]) -> Result<BalanceReport> {
    Ok(BalanceReport {
        covariates: covariates
            .iter()
            .map(|c| covariate_balance(frame, c))
            .collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{Arm, OutcomeSupport, UnitRecord};

    fn frame(rows: &[(bool, &[f64])], names: &[&str]) -> StudyFrame {
        let units = rows
            .iter()
            .enumerate()
            .map(|(i, (z, x))| UnitRecord {
                id: i.to_string(),
                sampled: *z,
                treatment: z.then_some(if i % 2 == 0 { Arm::Treated } else { Arm::Control }),
                outcome: z.then_some(1.0),
                covariates: x.to_vec(),
            })
            .collect();
        StudyFrame::new(
            units,
            OutcomeSupport::BINARY,
            names.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_covariate_is_singular() {
        let f = frame(&[(true, &[1.0]), (false, &[1.0]), (false, &[1.0])], &["c"]);
        let err = fit_propensity(&f, &["c".into()], &PropensityOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SingularDesign(_)), "{err}");
    }

    #[test]
    fn collinear_covariates_are_singular() {
        let rows: Vec<(bool, Vec<f64>)> = (0..20)
            .map(|i| (i % 3 == 0, vec![i as f64, 2.0 * i as f64 + 1.0]))
            .collect();
        let rows: Vec<(bool, &[f64])> = rows.iter().map(|(z, x)| (*z, x.as_slice())).collect();
        let f = frame(&rows, &["a", "b"]);
        let err = fit_propensity(&f, &["a".into(), "b".into()], &PropensityOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SingularDesign(_)), "{err}");
    }

    #[test]
    fn complete_separation_is_reported() {
        let rows: Vec<(bool, Vec<f64>)> = (0..20).map(|i| (i >= 10, vec![i as f64])).collect();
        let rows: Vec<(bool, &[f64])> = rows.iter().map(|(z, x)| (*z, x.as_slice())).collect();
        let f = frame(&rows, &["x"]);
        match fit_propensity(&f, &["x".into()], &PropensityOptions::default()) {
            Err(Error::Separation { direction }) => {
                assert_eq!(direction[0].0, "x");
                assert!(direction[0].1 > 0.0);
            }
            other => panic!("expected separation, got {other:?}"),
        }
        // A ridge penalty keeps the slopes finite.
        let opts = PropensityOptions {
            ridge: 0.1,
            ..Default::default()
        };
        let m = fit_propensity(&f, &["x".into()], &opts).unwrap();
        assert!(m.converged);
        assert!(m.coefficients["x"] > 0.0);
    }

    #[test]
    fn single_class_rejected() {
        let f = frame(&[(true, &[1.0]), (true, &[2.0])], &["x"]);
        assert!(matches!(
            fit_propensity(&f, &["x".into()], &PropensityOptions::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn zero_coefficients_give_half() {
        let m = PropensityModel {
            intercept: 0.0,
            coefficients: [("x".to_string(), 0.0)].into_iter().collect(),
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
        };
        let f = frame(&[(true, &[3.0]), (false, &[-7.0])], &["x"]);
        assert_eq!(logit_scores(&m, &f).unwrap(), vec![0.0, 0.0]);
        assert_eq!(propensity_scores(&m, &f).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn intercept_only_score() {
        // Intercept-only MLE at 56/1029 is ln(56/973) = -2.855.
        let at = |b0: f64| PropensityModel {
            intercept: b0,
            coefficients: BTreeMap::new(),
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
        };
        let f = frame(&[(true, &[]), (false, &[])], &[]);
        for s in propensity_scores(&at((56.0f64 / 973.0).ln()), &f).unwrap() {
            assert!((s - 56.0 / 1029.0).abs() < 1e-15, "{s}");
        }
        for s in propensity_scores(&at(-2.866), &f).unwrap() {
            assert!((s - 0.05386).abs() < 1e-5, "{s}");
        }
    }

    #[test]
    fn logits_are_dot_products() {
        let m = PropensityModel {
            intercept: 0.5,
            coefficients: [("a".to_string(), 2.0), ("b".to_string(), -1.5)].into_iter().collect(),
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
        };
        let f = frame(&[(true, &[1.0, 2.0]), (false, &[-0.5, 4.0])], &["a", "b"]);
        // 0.5 + 2*1 - 1.5*2 = -0.5 ; 0.5 + 2*(-0.5) - 1.5*4 = -6.5
        assert_eq!(logit_scores(&m, &f).unwrap(), vec![-0.5, -6.5]);
    }

    #[test]
    fn logits_need_model_covariates() {
        let m = PropensityModel {
            intercept: 0.0,
            coefficients: [("missing".to_string(), 1.0)].into_iter().collect(),
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
        };
        let f = frame(&[(true, &[1.0])], &["x"]);
        assert!(matches!(logit_scores(&m, &f), Err(Error::UnknownCovariate(_))));
    }

    #[test]
    fn asmd_cases() {
        // population {-1, 1, -1, 1}: mean 0, sd 1; sample {1, 1}... mean 1
        let f = frame(
            &[(true, &[1.0]), (true, &[0.0]), (false, &[-1.0]), (false, &[0.0])],
            &["x"],
        );
        // mu_P = 0, sigma_P = sqrt(0.5), Xbar_S = 0.5
        let expected = 0.5 / 0.5f64.sqrt();
        assert!((asmd(&f, "x").unwrap() - expected).abs() < 1e-15);

        let balanced = frame(
            &[(true, &[1.0]), (false, &[1.0]), (true, &[3.0]), (false, &[3.0])],
            &["x"],
        );
        assert_eq!(asmd(&balanced, "x").unwrap(), 0.0);

        let constant = frame(&[(true, &[2.0]), (false, &[2.0])], &["x"]);
        assert!(matches!(asmd(&constant, "x"), Err(Error::ZeroVariance(_))));
        assert_eq!(
            balance_report(&constant, &["x".into()]).unwrap().covariates[0].asmd,
            None
        );
    }

    #[test]
    fn asmd_direct_formula() {
        // Population of eight +-1 values: mu_P = 0, sigma_P = 1. Sample mean 0.5.
        let f = frame(
            &[
                (true, &[1.0]),
                (true, &[1.0]),
                (true, &[1.0]),
                (true, &[-1.0]),
                (false, &[-1.0]),
                (false, &[-1.0]),
                (false, &[-1.0]),
                (false, &[1.0]),
            ],
            &["x"],
        );
        assert_eq!(asmd(&f, "x").unwrap(), 0.5);
    }

    #[test]
    fn model_json_roundtrip() {
        let m = PropensityModel {
            intercept: -1.25,
            coefficients: [("pretest".to_string(), 0.75)].into_iter().collect(),
            converged: true,
            iterations: 6,
            final_gradient_norm: 1e-12,
        };
        assert_eq!(PropensityModel::from_json(&m.to_json()).unwrap(), m);
        let minimal = r#"{"intercept": 0.1, "coefficients": {"a": 1}, "converged": true, "iterations": 3}"#;
        assert_eq!(PropensityModel::from_json(minimal).unwrap().iterations, 3);
        assert!(PropensityModel::from_json("{}").is_err());
    }
}
