//! Brute-force verifiers for the closed-form bounds on small binary frames.
//!
//! Worst case. Randomization fixes the sampled units' total effect at
//! `n·(S1/n1 − S0/n0)` (S_w the arm outcome sums): any completion of the
//! sampled units' missing potential outcomes that is consistent with random
//! assignment contributes exactly that. Only the non-sampled units' slots
//! are free. In the reduced framework an outcome-bearing non-sampled unit is
//! a business-as-usual control, so its Y(0) is fixed and only Y(1) is free.
//!
//! Monotone response. Every unobserved slot of every unit is enumerated,
//! subject to Y(1) ≥ Y(0) unit by unit. Sample scope ignores non-sampled
//! outcomes; population scope uses them.
//!
//! Bounded variation. The unknown non-sample expectations E(Y(w) | W=v, Z=0)
//! range over `[e_w − λ, e_w + λ]` (optionally intersected with the support);
//! the PATE is linear in them, so the extremes are at box corners.
//!
//! Worst-case and monotone enumerations use exact rationals.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundsEngine, BsvOptions, ClosedForm, Framework, Interval, MtrScope};
use crate::error::{Error, Result};
use crate::frame::{Arm, DesignProbs, EmpiricalRates, OutcomeSupport, StudyFrame, UnitRecord};

pub type Rational = Ratio<i128>;

/// Maximum number of free binary slots enumerated (2^24 completions).
pub const SLOT_CAP: usize = 24;

/// Observed potential outcomes of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleUnit {
    pub sampled: bool,
    pub arm: Option<Arm>,
    pub y0: Option<u8>,
    pub y1: Option<u8>,
}

/// A binary frame in potential-outcome form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleFrame {
    pub units: Vec<OracleUnit>,
}

fn bit(y: f64) -> u8 {
    u8::from(y == 1.0)
}

impl OracleFrame {
    /// Converts a binary study frame. A non-sampled unit is a control under
    /// business as usual iff it carries an outcome; an explicit arm label
    /// contradicting that is rejected.
    pub fn from_frame(frame: &StudyFrame) -> Result<Self> {
        if frame.is_empty() {
            return Err(Error::EmptyFrame);
        }
        if !frame.is_binary() {
            return Err(Error::NonBinaryOutcome);
        }
        let units = frame
            .units()
            .iter()
            .enumerate()
            .map(|(i, u)| {
                if u.sampled {
                    let arm = u.treatment.ok_or(Error::MissingTreatment { row: i + 1 })?;
                    let y = u.outcome.map(bit).ok_or(Error::MissingOutcome { row: i + 1 })?;
                    Ok(match arm {
                        Arm::Treated => OracleUnit {
                            sampled: true,
                            arm: Some(arm),
                            y0: None,
                            y1: Some(y),
                        },
                        Arm::Control => OracleUnit {
                            sampled: true,
                            arm: Some(arm),
                            y0: Some(y),
                            y1: None,
                        },
                    })
                } else {
                    let implied = if u.outcome.is_some() {
                        Arm::Control
                    } else {
                        Arm::Treated
                    };
                    if u.treatment.is_some_and(|a| a != implied) {
                        return Err(Error::InconsistentArmLabel { row: i + 1 });
                    }
                    Ok(OracleUnit {
                        sampled: false,
                        arm: Some(implied),
                        y0: u.outcome.map(bit),
                        y1: None,
                    })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { units })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    fn check_monotone(&self) -> Result<()> {
        for (i, u) in self.units.iter().enumerate() {
            if let (Some(y0), Some(y1)) = (u.y0, u.y1) {
                if y1 < y0 {
                    return Err(Error::ObservedViolation {
                        unit: (i + 1).to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    fn counts(&self) -> Counts {
        let mut c = Counts::default();
        for u in &self.units {
            if u.sampled {
                match u.arm {
                    Some(Arm::Treated) => {
                        c.n1 += 1;
                        c.s1 += i128::from(u.y1.unwrap_or(0));
                    }
                    _ => {
                        c.n0 += 1;
                        c.s0 += i128::from(u.y0.unwrap_or(0));
                    }
                }
            } else {
                c.big_n0 += 1;
                if let Some(y) = u.y0 {
                    c.m += 1;
                    c.q += i128::from(y);
                }
            }
        }
        c
    }

    /// Closed-form inputs implied by the frame. P(W=0|Z=0) is the share of
    /// non-sampled units carrying an outcome (0.5 when there are none).
    pub fn closed_form_inputs(&self) -> Result<(EmpiricalRates, DesignProbs)> {
        let c = self.counts();
        if c.n1 == 0 {
            return Err(Error::EmptyArm(Arm::Treated));
        }
        if c.n0 == 0 {
            return Err(Error::EmptyArm(Arm::Control));
        }
        let n = (c.n1 + c.n0) as f64;
        let total = n + c.big_n0 as f64;
        let q0 = (c.m > 0).then(|| c.q as f64 / c.m as f64);
        let rates = EmpiricalRates::binary(c.s1 as f64 / c.n1 as f64, c.s0 as f64 / c.n0 as f64, q0);
        let p_w0z0 = if c.big_n0 > 0 {
            c.m as f64 / c.big_n0 as f64
        } else {
            0.5
        };
        let probs = DesignProbs::new(n / total, c.n1 as f64 / n, p_w0z0)?;
        Ok((rates, probs))
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    n1: i128,
    n0: i128,
    s1: i128,
    s0: i128,
    /// Non-sampled units.
    big_n0: i128,
    /// Non-sampled units with an outcome, and their outcome sum.
    m: i128,
    q: i128,
}

impl Counts {
    fn total(&self) -> i128 {
        self.n1 + self.n0 + self.big_n0
    }

    /// Sampled units' total effect fixed by randomization, `n·(S1/n1 − S0/n0)`.
    fn sample_effect(&self) -> Rational {
        let n = self.n1 + self.n0;
        Rational::new(n * self.s1, self.n1) - Rational::new(n * self.s0, self.n0)
    }
}

/// One fully resolved set of potential outcomes. `None` marks a slot left
/// unresolved because randomization eliminates it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionTable {
    pub y0: Vec<Option<u8>>,
    pub y1: Vec<Option<u8>>,
    pub pate: Rational,
}

impl CompletionTable {
    pub fn tau(&self) -> Vec<Option<i8>> {
        self.y0
            .iter()
            .zip(&self.y1)
            .map(|(a, b)| Some(*b)?.zip(*a).map(|(y1, y0)| y1 as i8 - y0 as i8))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub min: Rational,
    pub max: Rational,
    pub completions: u64,
    pub argmin: CompletionTable,
    pub argmax: CompletionTable,
}

impl Enumeration {
    pub fn interval(&self) -> Interval {
        Interval::new(to_f64(self.min), to_f64(self.max))
    }
}

pub fn to_f64(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// A free slot: unit index and which potential outcome.
#[derive(Debug, Clone, Copy)]
struct Slot {
    unit: usize,
    treated: bool,
}

/// `(min total, its mask, max total, its mask, feasible completions)`.
type Extremes = (i64, u64, i64, u64, u64);

/// Enumerates all assignments of `slots` on top of `base`, scoring each with
/// the integer total effect of `scored` units, and returns (min, max)
/// totals with witnesses. Assignments violating `feasible` are skipped.
fn enumerate(
    base: &[(Option<u8>, Option<u8>)],
    slots: &[Slot],
    scored: &[usize],
    monotone: bool,
) -> Result<Option<Extremes>> {
    if slots.len() > SLOT_CAP {
        return Err(Error::TooLarge {
            slots: slots.len(),
            cap: SLOT_CAP,
        });
    }
    let total: u64 = 1 << slots.len();
    let chunk = 1u64 << slots.len().saturating_sub(10).min(16);
    let n_chunks = total.div_ceil(chunk);
    let best = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut pairs = base.to_vec();
            let mut acc: Option<Extremes> = None;
            for mask in c * chunk..((c + 1) * chunk).min(total) {
                for (b, s) in slots.iter().enumerate() {
                    let v = ((mask >> b) & 1) as u8;
                    if s.treated {
                        pairs[s.unit].1 = Some(v);
                    } else {
                        pairs[s.unit].0 = Some(v);
                    }
                }
                if monotone && pairs.iter().any(|p| matches!(p, (Some(y0), Some(y1)) if y1 < y0)) {
                    continue;
                }
                let t: i64 = scored
                    .iter()
                    .map(|&i| i64::from(pairs[i].1.unwrap_or(0)) - i64::from(pairs[i].0.unwrap_or(0)))
                    .sum();
                acc = Some(match acc {
                    None => (t, mask, t, mask, 1),
                    Some((lo, lm, hi, hm, k)) => {
                        let (lo, lm) = if t < lo { (t, mask) } else { (lo, lm) };
                        let (hi, hm) = if t > hi { (t, mask) } else { (hi, hm) };
                        (lo, lm, hi, hm, k + 1)
                    }
                });
            }
            acc
        })
        .collect::<Vec<_>>();
    // Reduce in chunk order so witnesses are the lowest-index extremes.
    let mut out: Option<Extremes> = None;
    for r in best.into_iter().flatten() {
        out = Some(match out {
            None => r,
            Some((lo, lm, hi, hm, k)) => {
                let (lo, lm) = if r.0 < lo { (r.0, r.1) } else { (lo, lm) };
                let (hi, hm) = if r.2 > hi { (r.2, r.3) } else { (hi, hm) };
                (lo, lm, hi, hm, k + r.4)
            }
        });
    }
    Ok(out)
}

fn apply(base: &[(Option<u8>, Option<u8>)], slots: &[Slot], mask: u64) -> (Vec<Option<u8>>, Vec<Option<u8>>) {
    let mut pairs = base.to_vec();
    for (b, s) in slots.iter().enumerate() {
        let v = ((mask >> b) & 1) as u8;
        if s.treated {
            pairs[s.unit].1 = Some(v);
        } else {
            pairs[s.unit].0 = Some(v);
        }
    }
    pairs.into_iter().unzip()
}

/// Exact worst-case PATE range over all completions consistent with the
/// observations and random assignment.
pub fn enumerate_worst_case(frame: &OracleFrame, framework: Framework) -> Result<Enumeration> {
    if frame.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let c = frame.counts();
    if c.n1 == 0 {
        return Err(Error::EmptyArm(Arm::Treated));
    }
    if c.n0 == 0 {
        return Err(Error::EmptyArm(Arm::Control));
    }
    if framework == Framework::Reduced && c.m == 0 {
        return Err(Error::MissingPopulationOutcome);
    }
    let mut base = Vec::with_capacity(frame.len());
    let mut slots = Vec::new();
    let mut scored = Vec::new();
    for (i, u) in frame.units.iter().enumerate() {
        if u.sampled {
            base.push((None, None));
            continue;
        }
        scored.push(i);
        let (y0, y1) = match framework {
            Framework::Full => (None, None),
            Framework::Reduced => (u.y0, u.y1),
        };
        if y0.is_none() {
            slots.push(Slot {
                unit: i,
                treated: false,
            });
        }
        if y1.is_none() {
            slots.push(Slot { unit: i, treated: true });
        }
        base.push((y0, y1));
    }
    let (lo, lm, hi, hm, k) = enumerate(&base, &slots, &scored, false)?.expect("at least one completion");
    let n = c.total();
    let pate = |t: i64| (c.sample_effect() + Rational::from_integer(i128::from(t))) / Rational::from_integer(n);
    let table = |mask, t| {
        let (y0, y1) = apply(&base, &slots, mask);
        CompletionTable { y0, y1, pate: pate(t) }
    };
    Ok(Enumeration {
        min: pate(lo),
        max: pate(hi),
        completions: k,
        argmin: table(lm, lo),
        argmax: table(hm, hi),
    })
}

/// Monotone-response enumeration. Returns the range over all completions
/// (`min` is 0 whenever some completion has no effect anywhere) and, for
/// the min variant, the maximum with every outcome-free non-sampled unit's
/// effect forced to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtrEnumeration {
    pub all: Enumeration,
    pub min_variant_max: Rational,
}

pub fn enumerate_mtr(frame: &OracleFrame, scope: MtrScope) -> Result<MtrEnumeration> {
    if frame.is_empty() {
        return Err(Error::EmptyFrame);
    }
    frame.check_monotone()?;
    let c = frame.counts();
    if scope == MtrScope::Population && c.m == 0 && c.big_n0 > 0 {
        return Err(Error::MissingPopulationOutcome);
    }
    let mut base = Vec::with_capacity(frame.len());
    let mut slots = Vec::new();
    let mut pinned = Vec::new();
    for (i, u) in frame.units.iter().enumerate() {
        let y0 = if !u.sampled && scope == MtrScope::Sample {
            None
        } else {
            u.y0
        };
        let y1 = u.y1;
        if y0.is_none() {
            slots.push(Slot {
                unit: i,
                treated: false,
            });
        }
        if y1.is_none() {
            slots.push(Slot { unit: i, treated: true });
        }
        base.push((y0, y1));
        if !u.sampled && y0.is_none() && y1.is_none() {
            pinned.push(i);
        }
    }
    let scored: Vec<usize> = (0..frame.len()).collect();
    let (lo, lm, hi, hm, k) = enumerate(&base, &slots, &scored, true)?.expect("y1 = y0 is always feasible");
    let n = Rational::from_integer(c.total());
    let table = |mask, t: i64| {
        let (y0, y1) = apply(&base, &slots, mask);
        CompletionTable {
            y0,
            y1,
            pate: Rational::from_integer(i128::from(t)) / n,
        }
    };
    let all = Enumeration {
        min: Rational::from_integer(i128::from(lo)) / n,
        max: Rational::from_integer(i128::from(hi)) / n,
        completions: k,
        argmin: table(lm, lo),
        argmax: table(hm, hi),
    };
    // Min variant: pinned units contribute y1 = y0 = 0.
    let mut base_min = base.clone();
    let mut slots_min = Vec::new();
    for s in &slots {
        if pinned.contains(&s.unit) {
            if !s.treated {
                base_min[s.unit] = (Some(0), Some(0));
            }
        } else {
            slots_min.push(*s);
        }
    }
    let (_, _, hi_min, _, _) = enumerate(&base_min, &slots_min, &scored, true)?.expect("feasible");
    Ok(MtrEnumeration {
        all,
        min_variant_max: Rational::from_integer(i128::from(hi_min)) / n,
    })
}

/// Corner sweep of the bounded-variation expectation box.
pub fn enumerate_bsv(
    rates: &EmpiricalRates,
    probs: &DesignProbs,
    lambda: f64,
    framework: Framework,
    support: OutcomeSupport,
    intersect_support: bool,
) -> Result<Interval> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    let band = |e: f64| {
        if intersect_support {
            [(e - lambda).max(support.y_lo), (e + lambda).min(support.y_hi)]
        } else {
            [e - lambda, e + lambda]
        }
    };
    let p1 = probs.p_z1;
    let p = probs.p_w0z0();
    let rest = 1.0 - p1 - p;
    let (e1, e0) = (rates.e_y1_w1z1, rates.e_y0_w0z1);
    // Unknowns: E(Y(1)|W=0,Z=0), E(Y(1)|W=1,Z=0), E(Y(0)|W=0,Z=0), E(Y(0)|W=1,Z=0).
    let b1 = band(e1);
    let b0 = band(e0);
    let y0_w0z0: Vec<f64> = match framework {
        Framework::Full => b0.to_vec(),
        Framework::Reduced => vec![rates.e_y0_w0z0.ok_or(Error::MissingPopulationOutcome)?],
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &a11 in &b1 {
        for &a10 in &b1 {
            for &a00 in &y0_w0z0 {
                for &a01 in &b0 {
                    let m1 = e1 * p1 + a10 * p + a11 * rest;
                    let m0 = e0 * p1 + a00 * p + a01 * rest;
                    let v = m1 - m0;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
    }
    Ok(Interval::new(lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    WorstCaseFull,
    WorstCaseReduced,
    BsvFull,
    BsvReduced,
    BsvFullIntersected,
    BsvReducedIntersected,
    MtrSampleMax,
    MtrSampleMin,
    MtrPopulationMax,
    MtrPopulationMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: CheckKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub passed: bool,
    pub closed_form: Interval,
    pub oracle: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub check: CheckResult,
    /// Smallest frame found that still fails the check.
    pub units: Vec<UnitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub lambdas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 0.1, 0.2, 0.3, 0.5],
            tolerance: 1e-12,
        }
    }
}

fn agree(a: Interval, b: Interval, tol: f64) -> bool {
    (a.lo - b.lo).abs() <= tol && (a.hi - b.hi).abs() <= tol
}

fn run_checks(frame: &OracleFrame, engine: &dyn BoundsEngine, options: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let (rates, probs) = frame.closed_form_inputs()?;
    let support = OutcomeSupport::BINARY;
    let has_pop = rates.e_y0_w0z0.is_some();
    let mut frameworks = vec![Framework::Full];
    if has_pop {
        frameworks.push(Framework::Reduced);
    }
    let tol = options.tolerance;
    let mut out = Vec::new();
    let mut push = |check, lambda, closed_form: Interval, oracle: Interval| {
        out.push(CheckResult {
            check,
            lambda,
            passed: agree(closed_form, oracle, tol),
            closed_form,
            oracle,
        });
    };
    for &fw in &frameworks {
        let cf = engine.worst_case(&rates, &probs, fw, support)?;
        let or = enumerate_worst_case(frame, fw)?;
        let kind = match fw {
            Framework::Full => CheckKind::WorstCaseFull,
            Framework::Reduced => CheckKind::WorstCaseReduced,
        };
        push(kind, None, cf.pre_clamp, or.interval());
    }
    for &lambda in &options.lambdas {
        for &fw in &frameworks {
            let plain = engine.bsv(&rates, &probs, fw, lambda, support, &BsvOptions::default())?;
            let or = enumerate_bsv(&rates, &probs, lambda, fw, support, false)?;
            let (k, ki) = match fw {
                Framework::Full => (CheckKind::BsvFull, CheckKind::BsvFullIntersected),
                Framework::Reduced => (CheckKind::BsvReduced, CheckKind::BsvReducedIntersected),
            };
            push(k, Some(lambda), plain.pre_clamp, or);
            let opts = BsvOptions {
                intersect_support: true,
                ..Default::default()
            };
            let inter = engine.bsv(&rates, &probs, fw, lambda, support, &opts)?;
            let or = enumerate_bsv(&rates, &probs, lambda, fw, support, true)?;
            push(ki, Some(lambda), inter.interval(), or);
        }
    }
    let mut scopes = vec![MtrScope::Sample];
    if has_pop {
        scopes.push(MtrScope::Population);
    }
    for scope in scopes {
        let cf = engine.mtr(&rates, &probs, scope)?;
        let or = enumerate_mtr(frame, scope)?;
        let (kmax, kmin) = match scope {
            MtrScope::Sample => (CheckKind::MtrSampleMax, CheckKind::MtrSampleMin),
            MtrScope::Population => (CheckKind::MtrPopulationMax, CheckKind::MtrPopulationMin),
        };
        push(kmax, None, cf.interval_max_variant.pre_clamp, or.all.interval());
        push(
            kmin,
            None,
            cf.interval_min_variant.pre_clamp,
            Interval::new(to_f64(or.all.min), to_f64(or.min_variant_max)),
        );
    }
    Ok(out)
}

/// Runs every oracle equivalence on a binary frame against `engine`. On a
/// mismatch, units are dropped greedily while the same check keeps failing
/// to produce a small counterexample.
pub fn verify(frame: &StudyFrame, engine: &dyn BoundsEngine, options: &VerifyOptions) -> Result<VerifyReport> {
    let oracle_frame = OracleFrame::from_frame(frame)?;
    let checks = run_checks(&oracle_frame, engine, options)?;
    let failed = checks.iter().find(|c| !c.passed).cloned();
    let counterexample = failed.map(|first| shrink(frame, engine, options, first));
    Ok(VerifyReport {
        passed: counterexample.is_none(),
        checks,
        counterexample,
    })
}

fn failing(
    units: &[UnitRecord],
    frame: &StudyFrame,
    engine: &dyn BoundsEngine,
    options: &VerifyOptions,
    kind: CheckKind,
) -> Option<CheckResult> {
    let sub = frame.subset(units.iter());
    let of = OracleFrame::from_frame(&sub).ok()?;
    let checks = run_checks(&of, engine, options).ok()?;
    checks.into_iter().find(|c| c.check == kind && !c.passed)
}

fn shrink(
    frame: &StudyFrame,
    engine: &dyn BoundsEngine,
    options: &VerifyOptions,
    first: CheckResult,
) -> Counterexample {
    let mut units = frame.units().to_vec();
    let mut check = first;
    let mut i = 0;
    while i < units.len() {
        let mut candidate = units.clone();
        candidate.remove(i);
        match failing(&candidate, frame, engine, options, check.check) {
            Some(c) => {
                units = candidate;
                check = c;
            }
            None => i += 1,
        }
    }
    Counterexample { check, units }
}

/// Verification with the default closed-form engine.
pub fn verify_closed_form(frame: &StudyFrame, options: &VerifyOptions) -> Result<VerifyReport> {
    verify(frame, &ClosedForm, options)
}
