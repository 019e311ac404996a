//! Interval estimates of the population average treatment effect.
//!
//! Write P1 = P(Z=1), P0 = 1 − P1, p = P(W=0, Z=0), e_w = E(Y | W=w, Z=1),
//! q0 = E(Y | W=0, Z=0) and R = y_hi − y_lo. Every regime bounds
//! E(Y(1)) and E(Y(0)) separately and takes
//!
//! ```text
//! PATE_lo = E_lo(Y(1)) − E_hi(Y(0))      PATE_hi = E_hi(Y(1)) − E_lo(Y(0))
//! ```
//!
//! * worst case, full: E_lo(Y(w)) = e_w·P1 + y_lo·P0, E_hi = E_lo + R·P0
//! * worst case, reduced: E_lo(Y(0)) = e_0·P1 + q0·p + y_lo·(1 − P1 − p),
//!   E_hi(Y(0)) = E_lo(Y(0)) + R·(1 − P1 − p)
//! * bounded variation λ: the unknown non-sample expectations are replaced
//!   by e_w ∓ λ (the reduced form keeps q0·p and puts the λ band on the
//!   remaining mass 1 − P1 − p)
//! * monotone response: lower bound 0, upper bound from pass/fail rates
//!
//! Results are clamped to `[y_lo − y_hi, y_hi − y_lo]`; the raw values are
//! kept in `pre_clamp`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{design_probs, empirical_rates, Arm, DesignProbs, EmpiricalRates, OutcomeSupport, StudyFrame};
use crate::stratify::{stratum_frames, StratumAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    /// Sample data only.
    Full,
    /// Population frame identifies E(Y(0) | W=0, Z=0).
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionTag {
    #[serde(alias = "worst")]
    WorstCase,
    Bsv,
    Mtr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtrScope {
    Sample,
    Population,
}

impl MtrScope {
    pub fn framework(self) -> Framework {
        match self {
            MtrScope::Sample => Framework::Full,
            MtrScope::Population => Framework::Reduced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtrVariant {
    /// Unobserved non-sample contributions set to 0 ("best case").
    Min,
    /// Unobserved non-sample contributions set to 1.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `other ⊆ self`, with slack `tol` on each endpoint.
    pub fn covers(&self, other: &Interval, tol: f64) -> bool {
        self.lo <= other.lo + tol && other.hi <= self.hi + tol
    }

    fn clamp_to(&self, bound: f64) -> (Interval, ClampFlags) {
        let lo = self.lo.max(-bound);
        let hi = self.hi.min(bound);
        (
            Interval::new(lo.min(hi), hi.max(lo)),
            ClampFlags {
                lo: lo != self.lo,
                hi: hi != self.hi,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClampFlags {
    pub lo: bool,
    pub hi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsInputs {
    pub rates: EmpiricalRates,
    pub probs: DesignProbs,
    pub support: OutcomeSupport,
}

/// An assumption-tagged PATE interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PateInterval {
    pub assumption: AssumptionTag,
    pub framework: Framework,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<MtrVariant>,
    pub lo: f64,
    pub hi: f64,
    pub clamped: ClampFlags,
    pub pre_clamp: Interval,
    /// Bounded variation only: whether the sharpness/improvement condition
    /// holds for this λ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improves: Option<bool>,
    pub inputs: BoundsInputs,
}

impl PateInterval {
    pub fn interval(&self) -> Interval {
        Interval::new(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Sample- or population-scope MTR bounds in both upper-bound variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtrResult {
    pub scope: MtrScope,
    pub interval_min_variant: PateInterval,
    pub interval_max_variant: PateInterval,
}

/// How the reduced-framework λ band is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedMass {
    /// Mass 1 − P(Z=1) − P(W=0,Z=0): everything not pinned by q0.
    #[default]
    Remaining,
    /// Mass P(W=0,Z=0). Agrees with `Remaining` only when
    /// P(W=0|Z=0) = 0.5.
    ControlShare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BsvOptions {
    pub reduced_mass: ReducedMass,
    /// Intersect each λ band with the outcome support before combining. The
    /// default reproduces the unintersected formulas and only clamps the
    /// final difference.
    pub intersect_support: bool,
}

fn finalize(
    assumption: AssumptionTag,
    framework: Framework,
    raw: Interval,
    final_raw: Interval,
    inputs: BoundsInputs,
) -> PateInterval {
    let (clamped_iv, mut flags) = final_raw.clamp_to(inputs.support.width());
    flags.lo |= final_raw.lo != raw.lo;
    flags.hi |= final_raw.hi != raw.hi;
    PateInterval {
        assumption,
        framework,
        lambda: None,
        variant: None,
        lo: clamped_iv.lo,
        hi: clamped_iv.hi,
        clamped: flags,
        pre_clamp: raw,
        improves: None,
        inputs,
    }
}

fn require_q0(rates: &EmpiricalRates) -> Result<f64> {
    rates.e_y0_w0z0.ok_or(Error::MissingPopulationOutcome)
}

fn difference(y1: Interval, y0: Interval) -> Interval {
    Interval::new(y1.lo - y0.hi, y1.hi - y0.lo)
}

/// Raw (pre-clamp) worst-case interval.
fn worst_case_raw(
    rates: &EmpiricalRates,
    probs: &DesignProbs,
    framework: Framework,
    support: OutcomeSupport,
) -> Result<Interval> {
    let p1 = probs.p_z1;
    let p0 = probs.p_z0();
    let r = support.width();
    let bounds_full = |e: f64| {
        let lo = e * p1 + support.y_lo * p0;
        Interval::new(lo, lo + r * p0)
    };
    let y1 = bounds_full(rates.e_y1_w1z1);
    let y0 = match framework {
        Framework::Full => bounds_full(rates.e_y0_w0z1),
        Framework::Reduced => {
            let q0 = require_q0(rates)?;
            let p = probs.p_w0z0();
            let rest = 1.0 - p1 - p;
            let lo = rates.e_y0_w0z1 * p1 + q0 * p + support.y_lo * rest;
            Interval::new(lo, lo + r * rest)
        }
    };
    Ok(difference(y1, y0))
}

pub fn worst_case_bounds(
    rates: &EmpiricalRates,
    probs: &DesignProbs,
    framework: Framework,
    support: OutcomeSupport,
) -> Result<PateInterval> {
    let raw = worst_case_raw(rates, probs, framework, support)?;
    let inputs = BoundsInputs {
        rates: *rates,
        probs: *probs,
        support,
    };
    Ok(finalize(AssumptionTag::WorstCase, framework, raw, raw, inputs))
}

fn bsv_raw(
    rates: &EmpiricalRates,
    probs: &DesignProbs,
    framework: Framework,
    lambda: f64,
    support: OutcomeSupport,
    options: &BsvOptions,
    intersect: bool,
) -> Result<Interval> {
    let band = |e: f64| {
        if intersect {
            Interval::new((e - lambda).max(support.y_lo), (e + lambda).min(support.y_hi))
        } else {
            Interval::new(e - lambda, e + lambda)
        }
    };
    let p1 = probs.p_z1;
    let p0 = probs.p_z0();
    let expectation = |e: f64, base: f64, mass: f64| {
        let b = band(e);
        Interval::new(e * p1 + base + b.lo * mass, e * p1 + base + b.hi * mass)
    };
    let y1 = expectation(rates.e_y1_w1z1, 0.0, p0);
    let y0 = match framework {
        Framework::Full => expectation(rates.e_y0_w0z1, 0.0, p0),
        Framework::Reduced => {
            let q0 = require_q0(rates)?;
            let p = probs.p_w0z0();
            let mass = match options.reduced_mass {
                ReducedMass::Remaining => 1.0 - p1 - p,
                ReducedMass::ControlShare => p,
            };
            expectation(rates.e_y0_w0z1, q0 * p, mass)
        }
    };
    Ok(difference(y1, y0))
}

pub fn bsv_bounds(
    rates: &EmpiricalRates,
    probs: &DesignProbs,
    framework: Framework,
    lambda: f64,
    support: OutcomeSupport,
) -> Result<PateInterval> {
    bsv_bounds_with(rates, probs, framework, lambda, support, &BsvOptions::default())
}

pub fn bsv_bounds_with(
    rates: &EmpiricalRates,
    probs: &DesignProbs,
    framework: Framework,
    lambda: f64,
    support: OutcomeSupport,
    options: &BsvOptions,
) -> Result<PateInterval> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::NegativeLambda(lambda));
    }
    let raw = bsv_raw(rates, probs, framework, lambda, support, options, false)?;
    let final_raw = if options.intersect_support {
        bsv_raw(rates, probs, framework, lambda, support, options, true)?
    } else {
        raw
    };
    let inputs = BoundsInputs {
        rates: *rates,
        probs: *probs,
        support,
    };
    let mut iv = finalize(AssumptionTag::Bsv, framework, raw, final_raw, inputs);
    iv.lambda = Some(lambda);
    iv.improves = Some(bsv_improves(rates, lambda, support));
    Ok(iv)
}

/// Whether the bounded-variation interval is sharp and narrower than the
/// worst case: `d + 2λ < R` and `d − 2λ > −R` with d the sample difference.
pub fn bsv_improves(rates: &EmpiricalRates, lambda: f64, support: OutcomeSupport) -> bool {
    let d = rates.sate();
    let r = support.width();
    d + 2.0 * lambda < r && d - 2.0 * lambda > -r
}

pub fn mtr_bounds(rates: &EmpiricalRates, probs: &DesignProbs, scope: MtrScope) -> Result<MtrResult> {
    let (pass1, fail0) = match (rates.pass1_w1z1, rates.fail0_w0z1) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::NonBinaryOutcome),
    };
    let sample_part = fail0 * probs.p_w0z1() + pass1 * probs.p_w1z1();
    let (min_hi, max_hi) = match scope {
        MtrScope::Sample => (sample_part, sample_part + probs.p_z0()),
        MtrScope::Population => {
            let fail0_pop = rates.fail0_w0z0.ok_or(Error::MissingPopulationOutcome)?;
            let p = probs.p_w0z0();
            let min_hi = sample_part + fail0_pop * p;
            (min_hi, min_hi + (1.0 - probs.p_z1 - p))
        }
    };
    let inputs = BoundsInputs {
        rates: *rates,
        probs: *probs,
        support: OutcomeSupport::BINARY,
    };
    let make = |hi: f64, variant| {
        let raw = Interval::new(0.0, hi);
        let mut iv = finalize(AssumptionTag::Mtr, scope.framework(), raw, raw, inputs);
        iv.variant = Some(variant);
        iv
    };
    Ok(MtrResult {
        scope,
        interval_min_variant: make(min_hi, MtrVariant::Min),
        interval_max_variant: make(max_hi, MtrVariant::Max),
    })
}

/// Closed-form bound computations, behind a trait so verification can be
/// pointed at an alternative implementation.
pub trait BoundsEngine: Sync {
    fn worst_case(
        &self,
        rates: &EmpiricalRates,
        probs: &DesignProbs,
        framework: Framework,
        support: OutcomeSupport,
    ) -> Result<PateInterval> {
        worst_case_bounds(rates, probs, framework, support)
    }

    fn bsv(
        &self,
        rates: &EmpiricalRates,
        probs: &DesignProbs,
        framework: Framework,
        lambda: f64,
        support: OutcomeSupport,
        options: &BsvOptions,
    ) -> Result<PateInterval> {
        bsv_bounds_with(rates, probs, framework, lambda, support, options)
    }

    fn mtr(&self, rates: &EmpiricalRates, probs: &DesignProbs, scope: MtrScope) -> Result<MtrResult> {
        mtr_bounds(rates, probs, scope)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClosedForm;

impl BoundsEngine for ClosedForm {}

/// Which bound to compute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "assumption", rename_all = "snake_case")]
pub enum BoundSpec {
    WorstCase {
        framework: Framework,
    },
    Bsv {
        framework: Framework,
        lambda: f64,
        #[serde(default)]
        options: BsvOptions,
    },
    Mtr {
        scope: MtrScope,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundOutcome {
    Interval(PateInterval),
    Mtr(MtrResult),
}

pub fn compute_bound(
    spec: &BoundSpec,
    rates: &EmpiricalRates,
    probs: &DesignProbs,
    support: OutcomeSupport,
) -> Result<BoundOutcome> {
    Ok(match *spec {
        BoundSpec::WorstCase { framework } => {
            BoundOutcome::Interval(worst_case_bounds(rates, probs, framework, support)?)
        }
        BoundSpec::Bsv {
            framework,
            lambda,
            options,
        } => BoundOutcome::Interval(bsv_bounds_with(rates, probs, framework, lambda, support, &options)?),
        BoundSpec::Mtr { scope } => {
            if !support.is_binary() {
                return Err(Error::NonBinaryOutcome);
            }
            BoundOutcome::Mtr(mtr_bounds(rates, probs, scope)?)
        }
    })
}

/// Bounds computed on a whole frame.
pub fn frame_bound(frame: &StudyFrame, spec: &BoundSpec, assumed_p_w0_given_z0: f64) -> Result<BoundOutcome> {
    if matches!(spec, BoundSpec::Mtr { .. }) && !frame.is_binary() {
        return Err(Error::NonBinaryOutcome);
    }
    let probs = design_probs(frame, assumed_p_w0_given_z0)?;
    let rates = empirical_rates(frame)?;
    compute_bound(spec, &rates, &probs, frame.support())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumBounds {
    /// 1-based stratum number.
    pub stratum: usize,
    pub n_population: usize,
    pub n_treated: usize,
    pub n_control: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<BoundOutcome>,
    /// Why the stratum was skipped, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Population-share weighted sum of stratum intervals. Not part of the
/// original method; reported only on request and always labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledInterval {
    pub label: String,
    pub interval: Interval,
    /// MTR only: the pooled max-variant interval (`interval` pools the min variant).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_variant: Option<Interval>,
}

pub const POOLED_LABEL: &str = "extension: N_j/N-weighted sum of stratum intervals";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedBounds {
    pub spec: BoundSpec,
    pub strata: Vec<StratumBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<PooledInterval>,
}

impl StratifiedBounds {
    pub fn skipped(&self) -> Vec<usize> {
        self.strata
            .iter()
            .filter(|s| s.skipped.is_some())
            .map(|s| s.stratum)
            .collect()
    }
}

/// Per-stratum bounds. P(Z=1) and P(W=1|Z=1) are recomputed inside each
/// stratum; the assumed P(W=0|Z=0) is shared. Strata lacking a sampled
/// treated or control unit, or otherwise unable to support the requested
/// bound, are reported as skipped rather than failing the whole call.
pub fn stratified_bounds(
    frame: &StudyFrame,
    assignment: &StratumAssignment,
    spec: &BoundSpec,
    assumed_p_w0_given_z0: f64,
    pooled: bool,
) -> Result<StratifiedBounds> {
    if matches!(spec, BoundSpec::Mtr { .. }) && !frame.is_binary() {
        return Err(Error::NonBinaryOutcome);
    }
    let parts = stratum_frames(frame, assignment)?;
    let strata: Vec<StratumBounds> = parts
        .par_iter()
        .map(|part| {
            let f = &part.frame;
            let mut sb = StratumBounds {
                stratum: part.index + 1,
                n_population: f.len(),
                n_treated: f.n_arm(Arm::Treated),
                n_control: f.n_arm(Arm::Control),
                result: None,
                skipped: None,
            };
            if !part.viable {
                sb.skipped = Some(Error::NonViableStratum(vec![part.index + 1]).to_string());
                return sb;
            }
            match frame_bound(f, spec, assumed_p_w0_given_z0) {
                Ok(r) => sb.result = Some(r),
                Err(e) => sb.skipped = Some(e.to_string()),
            }
            sb
        })
        .collect();

    let pooled = if pooled && strata.iter().all(|s| s.result.is_some()) {
        let n = frame.len() as f64;
        let mut acc = Interval::point(0.0);
        let mut acc_max = Interval::point(0.0);
        let mut is_mtr = false;
        for s in &strata {
            let w = s.n_population as f64 / n;
            let (iv, iv_max) = match s.result.as_ref().unwrap() {
                BoundOutcome::Interval(p) => (p.interval(), None),
                BoundOutcome::Mtr(m) => {
                    is_mtr = true;
                    (
                        m.interval_min_variant.interval(),
                        Some(m.interval_max_variant.interval()),
                    )
                }
            };
            acc.lo += w * iv.lo;
            acc.hi += w * iv.hi;
            if let Some(m) = iv_max {
                acc_max.lo += w * m.lo;
                acc_max.hi += w * m.hi;
            }
        }
        Some(PooledInterval {
            label: POOLED_LABEL.to_string(),
            interval: acc,
            max_variant: is_mtr.then_some(acc_max),
        })
    } else {
        None
    };
    Ok(StratifiedBounds {
        spec: *spec,
        strata,
        pooled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn probs(p_z1: f64, p_w1: f64, p_w0z0: f64) -> DesignProbs {
        DesignProbs::new(p_z1, p_w1, p_w0z0).unwrap()
    }

    #[test]
    fn worst_case_full_small() {
        // Interval hand-derived: [0.2*0.5 - 0.5, 0.2*0.5 + 0.5].
        let r = EmpiricalRates::binary(0.6, 0.4, None);
        let iv = worst_case_bounds(&r, &probs(0.5, 0.5, 0.5), Framework::Full, OutcomeSupport::BINARY).unwrap();
        assert!((iv.lo - -0.4).abs() < TOL && (iv.hi - 0.6).abs() < TOL, "{iv:?}");
        assert_eq!(iv.clamped, ClampFlags::default());
    }

    #[test]
    fn census_collapses_to_sate() {
        let r = EmpiricalRates::binary(0.7, 0.25, None);
        let iv = worst_case_bounds(&r, &probs(1.0, 0.5, 0.5), Framework::Full, OutcomeSupport::BINARY).unwrap();
        assert!((iv.lo - 0.45).abs() < TOL && (iv.hi - 0.45).abs() < TOL);
        assert_eq!(iv.width(), 0.0);
    }

    #[test]
    fn reduced_needs_population_outcome() {
        let r = EmpiricalRates::binary(0.6, 0.4, None);
        assert!(matches!(
            worst_case_bounds(&r, &probs(0.5, 0.5, 0.5), Framework::Reduced, OutcomeSupport::BINARY),
            Err(Error::MissingPopulationOutcome)
        ));
        assert!(matches!(
            bsv_bounds(
                &r,
                &probs(0.5, 0.5, 0.5),
                Framework::Reduced,
                0.1,
                OutcomeSupport::BINARY
            ),
            Err(Error::MissingPopulationOutcome)
        ));
    }

    #[test]
    fn lambda_zero_is_a_point() {
        let r = EmpiricalRates::binary(0.55, 0.3, Some(0.6));
        for fw in [Framework::Full, Framework::Reduced] {
            let iv = bsv_bounds(&r, &probs(0.2, 0.6, 0.5), fw, 0.0, OutcomeSupport::BINARY).unwrap();
            assert_eq!(iv.width(), 0.0);
            if fw == Framework::Full {
                assert!((iv.lo - 0.25).abs() < TOL);
            }
        }
    }

    #[test]
    fn negative_lambda() {
        let r = EmpiricalRates::binary(0.5, 0.5, None);
        assert!(matches!(
            bsv_bounds(&r, &probs(0.5, 0.5, 0.5), Framework::Full, -0.1, OutcomeSupport::BINARY),
            Err(Error::NegativeLambda(_))
        ));
    }

    #[test]
    fn improvement_condition() {
        let r = EmpiricalRates::binary(0.257, 0.0, None);
        assert!(bsv_improves(&r, 0.3, OutcomeSupport::BINARY));
        assert!(!bsv_improves(&r, 0.5, OutcomeSupport::BINARY));
        assert!(bsv_improves(&r, 0.0, OutcomeSupport::BINARY));
        let extreme = EmpiricalRates::binary(1.0, 0.0, None);
        assert!(!bsv_improves(&extreme, 0.0, OutcomeSupport::BINARY));
    }

    #[test]
    fn clamping_is_flagged() {
        // d = 0.8, λ = 0.5, P0 = 0.9: raw hi = 0.8 + 0.9 = 1.7
        let r = EmpiricalRates::binary(0.9, 0.1, None);
        let iv = bsv_bounds(&r, &probs(0.1, 0.5, 0.5), Framework::Full, 0.5, OutcomeSupport::BINARY).unwrap();
        assert_eq!(iv.hi, 1.0);
        assert!(iv.clamped.hi && !iv.clamped.lo);
        assert!((iv.pre_clamp.hi - 1.7).abs() < TOL);
        assert!((iv.lo - -0.1).abs() < TOL);
        assert_eq!(iv.improves, Some(false));
    }

    #[test]
    fn intersected_bands_stay_in_support() {
        let r = EmpiricalRates::binary(0.9, 0.1, None);
        let opts = BsvOptions {
            intersect_support: true,
            ..Default::default()
        };
        let iv = bsv_bounds_with(
            &r,
            &probs(0.5, 0.5, 0.5),
            Framework::Full,
            0.5,
            OutcomeSupport::BINARY,
            &opts,
        )
        .unwrap();
        // E(Y1) <= 0.45 + 1*0.5, E(Y0) >= 0.05 + 0
        assert!((iv.hi - 0.9).abs() < TOL, "{iv:?}");
        assert!(iv.clamped.hi);
    }

    #[test]
    fn control_share_matches_remaining_at_one_half() {
        let r = EmpiricalRates::binary(0.6, 0.35, Some(0.8));
        let p = probs(0.1, 0.6, 0.5);
        let a = bsv_bounds(&r, &p, Framework::Reduced, 0.2, OutcomeSupport::BINARY).unwrap();
        let opts = BsvOptions {
            reduced_mass: ReducedMass::ControlShare,
            ..Default::default()
        };
        let b = bsv_bounds_with(&r, &p, Framework::Reduced, 0.2, OutcomeSupport::BINARY, &opts).unwrap();
        assert!((a.lo - b.lo).abs() < TOL && (a.hi - b.hi).abs() < TOL);
        let p = probs(0.1, 0.6, 0.7);
        let a = bsv_bounds(&r, &p, Framework::Reduced, 0.2, OutcomeSupport::BINARY).unwrap();
        let b = bsv_bounds_with(&r, &p, Framework::Reduced, 0.2, OutcomeSupport::BINARY, &opts).unwrap();
        assert!((a.width() - b.width()).abs() > 1e-3);
    }

    #[test]
    fn mtr_maximal_effect() {
        let r = EmpiricalRates::binary(1.0, 0.0, None);
        let m = mtr_bounds(&r, &probs(1.0, 0.5, 0.5), MtrScope::Sample).unwrap();
        assert_eq!(m.interval_max_variant.interval(), Interval::new(0.0, 1.0));
        assert_eq!(m.interval_min_variant.interval(), Interval::new(0.0, 1.0));
    }

    #[test]
    fn mtr_rejects_continuous_and_missing_population() {
        let r = EmpiricalRates::from_means(10.0, 5.0, None);
        assert!(matches!(
            mtr_bounds(&r, &probs(0.5, 0.5, 0.5), MtrScope::Sample),
            Err(Error::NonBinaryOutcome)
        ));
        let r = EmpiricalRates::binary(0.5, 0.5, None);
        assert!(matches!(
            mtr_bounds(&r, &probs(0.5, 0.5, 0.5), MtrScope::Population),
            Err(Error::MissingPopulationOutcome)
        ));
    }

    #[test]
    fn mtr_population_adds_identified_fail_mass() {
        // fail0_w0z0 = 0.09, P(W=0,Z=0) = 0.473 contributes ~0.0425
        let r = EmpiricalRates::binary(0.6, 0.4, Some(0.91));
        let p = probs(56.0 / 1029.0, 34.0 / 56.0, 0.5);
        let s = mtr_bounds(&r, &p, MtrScope::Sample).unwrap();
        let q = mtr_bounds(&r, &p, MtrScope::Population).unwrap();
        let added = q.interval_min_variant.hi - s.interval_min_variant.hi;
        assert!((added - 0.09 * p.p_w0z0()).abs() < TOL);
        assert!((added - 0.0425).abs() < 5e-4);
        assert_eq!(q.interval_min_variant.lo, 0.0);
        assert!(q.interval_min_variant.hi <= q.interval_max_variant.hi);
    }

    #[test]
    fn pate_interval_json_field_names() {
        let r = EmpiricalRates::binary(0.5, 0.25, None);
        let iv = bsv_bounds(&r, &probs(0.5, 0.5, 0.5), Framework::Full, 0.25, OutcomeSupport::BINARY).unwrap();
        let v = serde_json::to_value(&iv).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in [
            "assumption",
            "framework",
            "lambda",
            "lo",
            "hi",
            "clamped",
            "pre_clamp",
            "inputs",
        ] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(v["assumption"], "bsv");
        assert_eq!(v["framework"], "full");
        assert_eq!(v["clamped"]["lo"], false);
        assert!(v.get("variant").is_none());
    }
}
