mod common;

use common::{binary_frame, small_binary_frame};
use pibgen::bounds::{worst_case_bounds, MtrScope};
use pibgen::bounds::{BoundsEngine, Framework, PateInterval};
use pibgen::frame::{DesignProbs, EmpiricalRates, OutcomeSupport};
use pibgen::oracle::{
    enumerate_mtr, enumerate_worst_case, to_f64, verify, verify_closed_form, OracleFrame, VerifyOptions,
};
use pibgen::Result;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn closed_form_matches_enumeration(frame in small_binary_frame(10)) {
        let report = verify_closed_form(&frame, &VerifyOptions::default()).unwrap();
        prop_assert!(report.passed, "{:?}", report.counterexample);
    }

    #[test]
    fn worst_case_is_exact_in_rationals(frame in small_binary_frame(10)) {
        let of = OracleFrame::from_frame(&frame).unwrap();
        let (rates, probs) = of.closed_form_inputs().unwrap();
        let e = enumerate_worst_case(&of, Framework::Full).unwrap();
        let cf = worst_case_bounds(&rates, &probs, Framework::Full, OutcomeSupport::BINARY).unwrap();
        prop_assert!((to_f64(e.min) - cf.pre_clamp.lo).abs() <= 1e-12);
        prop_assert!((to_f64(e.max) - cf.pre_clamp.hi).abs() <= 1e-12);
        // every completion lies inside the closed-form interval
        prop_assert!(e.argmin.pate >= e.min && e.argmax.pate <= e.max);
    }

    #[test]
    fn mtr_min_variant_below_max(frame in small_binary_frame(9)) {
        let of = OracleFrame::from_frame(&frame).unwrap();
        let m = enumerate_mtr(&of, MtrScope::Sample).unwrap();
        prop_assert!(m.min_variant_max <= m.all.max);
        prop_assert_eq!(to_f64(m.all.min), 0.0);
    }
}

/// Worst-case engine with the full-framework upper bound off by one unit
/// of P(Z=0).
struct OffByOne;

impl BoundsEngine for OffByOne {
    fn worst_case(
        &self,
        rates: &EmpiricalRates,
        probs: &DesignProbs,
        framework: Framework,
        support: OutcomeSupport,
    ) -> Result<PateInterval> {
        let mut iv = worst_case_bounds(rates, probs, framework, support)?;
        if framework == Framework::Full {
            iv.pre_clamp.hi += probs.p_z0();
            iv.hi += probs.p_z0();
        }
        Ok(iv)
    }
}

#[test]
fn mutated_engine_is_caught_with_a_small_counterexample() {
    let f = binary_frame(&[
        (true, Some(1), Some(1)),
        (true, Some(1), Some(0)),
        (true, Some(0), Some(0)),
        (true, Some(0), Some(1)),
        (false, None, Some(1)),
        (false, None, Some(0)),
        (false, None, None),
        (false, None, None),
    ]);
    assert!(verify_closed_form(&f, &VerifyOptions::default()).unwrap().passed);
    let report = verify(&f, &OffByOne, &VerifyOptions::default()).unwrap();
    assert!(!report.passed);
    let cx = report.counterexample.expect("counterexample");
    assert!(cx.units.len() < f.len(), "shrunk to {} units", cx.units.len());
}
