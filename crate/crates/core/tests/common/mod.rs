#![allow(dead_code)]

use pibgen::frame::{Arm, DesignProbs, EmpiricalRates, OutcomeSupport, StudyFrame, UnitRecord};
use proptest::prelude::*;

/// `(sampled, arm, outcome)` triples into a binary frame with no covariates.
pub fn binary_frame(rows: &[(bool, Option<u8>, Option<u8>)]) -> StudyFrame {
    let units = rows
        .iter()
        .enumerate()
        .map(|(i, &(z, w, y))| UnitRecord {
            id: format!("u{i}"),
            sampled: z,
            treatment: w.and_then(Arm::from_indicator),
            outcome: y.map(f64::from),
            covariates: vec![],
        })
        .collect();
    StudyFrame::new(units, OutcomeSupport::BINARY, vec![]).expect("valid frame")
}

/// Frames of at most `max_units` units with both sampled arms present.
pub fn small_binary_frame(max_units: usize) -> impl Strategy<Value = StudyFrame> {
    let treated = (0u8..=1).prop_map(|y| (true, Some(1u8), Some(y)));
    let control = (0u8..=1).prop_map(|y| (true, Some(0u8), Some(y)));
    let any_unit = prop_oneof![
        (0u8..=1, 0u8..=1).prop_map(|(w, y)| (true, Some(w), Some(y))),
        prop::option::of(0u8..=1).prop_map(|y| (false, None, y)),
    ];
    (
        treated,
        control,
        prop::collection::vec(any_unit, 0..=max_units - 2),
        any::<u64>(),
    )
        .prop_map(|(t, c, mut rest, salt)| {
            rest.push(t);
            rest.push(c);
            // deterministic shuffle so the required units are not always last
            let n = rest.len();
            for i in (1..n).rev() {
                let j = (salt.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 33) as usize % (i + 1);
                rest.swap(i, j);
            }
            binary_frame(&rest)
        })
}

/// Binary-outcome rates with population outcomes and design probabilities.
pub fn binary_inputs() -> impl Strategy<Value = (EmpiricalRates, DesignProbs)> {
    (
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.001..=1.0f64,
        0.01..=0.99f64,
        0.0..=1.0f64,
    )
        .prop_map(|(e1, e0, q0, pz1, pw1, pw0z0)| {
            (
                EmpiricalRates::binary(e1, e0, Some(q0)),
                DesignProbs::new(pz1, pw1, pw0z0).expect("valid probabilities"),
            )
        })
}

pub const INDIANA_P_Z1: f64 = 56.0 / 1029.0;
pub const INDIANA_P_W1: f64 = 34.0 / 56.0;

/// Reconstructed inputs for one outcome: treated rate `e1`, control rate
/// `e1 − d`, population business-as-usual rate `q0`.
pub fn indiana(e1: f64, d: f64, q0: f64) -> (EmpiricalRates, DesignProbs) {
    (
        EmpiricalRates::binary(e1, e1 - d, Some(q0)),
        DesignProbs::new(INDIANA_P_Z1, INDIANA_P_W1, 0.5).unwrap(),
    )
}

pub fn ela() -> (EmpiricalRates, DesignProbs) {
    indiana(0.614, 0.257, 0.91)
}

pub fn math() -> (EmpiricalRates, DesignProbs) {
    indiana(0.546, 0.209, 0.86)
}
