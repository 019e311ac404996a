//! Reconstruction of the Indiana benchmark tables from back-solved inputs.

mod common;

use common::{ela, math};
use pibgen::bounds::{bsv_bounds, bsv_improves, mtr_bounds, worst_case_bounds, Framework, MtrScope};
use pibgen::frame::OutcomeSupport;

const TOL: f64 = 0.02;
const B: OutcomeSupport = OutcomeSupport::BINARY;

fn near(got: (f64, f64), want: (f64, f64)) -> bool {
    (got.0 - want.0).abs() <= TOL && (got.1 - want.1).abs() <= TOL
}

#[test]
fn worst_case_full() {
    for (rates, probs) in [ela(), math()] {
        let iv = worst_case_bounds(&rates, &probs, Framework::Full, B).unwrap();
        assert!(near((iv.lo, iv.hi), (-0.93, 0.96)), "{iv:?}");
    }
}

#[test]
fn worst_case_reduced() {
    let (r, p) = ela();
    let iv = worst_case_bounds(&r, &p, Framework::Reduced, B).unwrap();
    assert!(near((iv.lo, iv.hi), (-0.89, 0.54)), "ela {:?}", (iv.lo, iv.hi));
    let (r, p) = math();
    let iv = worst_case_bounds(&r, &p, Framework::Reduced, B).unwrap();
    assert!(near((iv.lo, iv.hi), (-0.87, 0.55)), "math {:?}", (iv.lo, iv.hi));
}

#[test]
fn bsv_full() {
    let (r, p) = ela();
    let iv = bsv_bounds(&r, &p, Framework::Full, 0.3, B).unwrap();
    assert!(near((iv.lo, iv.hi), (-0.31, 0.83)), "ela {:?}", (iv.lo, iv.hi));
    let (r, p) = math();
    let iv = bsv_bounds(&r, &p, Framework::Full, 0.1, B).unwrap();
    assert!(near((iv.lo, iv.hi), (0.02, 0.40)), "math {:?}", (iv.lo, iv.hi));
    assert!(iv.lo > 0.0, "sign of the effect is identified");
}

#[test]
fn improvement_flags() {
    let (r, _) = ela();
    assert!(bsv_improves(&r, 0.3, B));
    assert!(!bsv_improves(&r, 0.5, B));
    assert!(bsv_improves(&r, 0.0, B));
}

#[test]
fn mtr_variants() {
    let (r, p) = ela();
    let s = mtr_bounds(&r, &p, MtrScope::Sample).unwrap();
    assert!(s.interval_min_variant.hi > 0.015 && s.interval_min_variant.hi < 0.035);
    assert!((s.interval_max_variant.hi - 0.97).abs() <= TOL);
    let pop = mtr_bounds(&r, &p, MtrScope::Population).unwrap();
    assert!(
        (pop.interval_min_variant.hi - 0.07).abs() <= TOL,
        "{}",
        pop.interval_min_variant.hi
    );
    let (r, p) = math();
    let pop = mtr_bounds(&r, &p, MtrScope::Population).unwrap();
    assert!(
        (pop.interval_min_variant.hi - 0.09).abs() <= TOL,
        "{}",
        pop.interval_min_variant.hi
    );
}
