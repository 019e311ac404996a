mod common;

use common::binary_frame;
use pibgen::frame::{design_probs, empirical_rates, Arm, OutcomeSupport, StudyFrame, UnitRecord};
use pibgen::lambda::{lambda_report, resolve_lambda, LambdaSpec};
use pibgen::points::{
    bootstrap_se, ipw_estimate, naive_bootstrap_se, naive_sate, subclass_estimate, BootstrapOptions, PointDetails,
};
use pibgen::propensity::{balance_report, fit_propensity, logit_scores, PropensityModel};
use pibgen::stratify::{make_strata, stratum_frames};
use pibgen::synth::{generate, SynthSpec};
use proptest::prelude::*;

fn synth_frame() -> impl Strategy<Value = StudyFrame> {
    (any::<u64>(), 80usize..300, any::<bool>()).prop_map(|(seed, n, binary)| {
        generate(&SynthSpec {
            n_population: n,
            n_sample: n / 4,
            n_treated: n / 8,
            seed,
            population_outcomes: true,
            binary,
        })
        .unwrap()
    })
}

fn permuted(frame: &StudyFrame, seed: u64) -> StudyFrame {
    let mut units = frame.units().to_vec();
    let n = units.len();
    for i in (1..n).rev() {
        let j = (seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(i as u32 % 64) as usize ^ i) % (i + 1);
        units.swap(i, j);
    }
    StudyFrame::new(units, frame.support(), frame.covariate_names().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strata_partition_and_order(logits in prop::collection::vec(-6.0..3.0f64, 1..200), k in 1usize..8) {
        prop_assume!(k <= logits.len());
        let a = make_strata(&logits, k).unwrap();
        prop_assert_eq!(a.counts.iter().map(|c| c.population).sum::<usize>(), logits.len());
        let mut idx: Vec<usize> = (0..logits.len()).collect();
        idx.sort_by(|&i, &j| logits[i].total_cmp(&logits[j]));
        for w in idx.windows(2) {
            prop_assert!(a.stratum_of[w[0]] <= a.stratum_of[w[1]]);
        }
    }

    #[test]
    fn stratum_frames_partition_the_frame(frame in synth_frame(), k in 1usize..6) {
        let logits: Vec<f64> = frame.units().iter().map(|u| u.covariates[0]).collect();
        let a = make_strata(&logits, k).unwrap().with_frame_counts(&frame).unwrap();
        let parts = stratum_frames(&frame, &a).unwrap();
        let mut ids: Vec<String> = parts.iter().flat_map(|p| p.frame.units().iter().map(|u| u.id.clone())).collect();
        ids.sort();
        let mut want: Vec<String> = frame.units().iter().map(|u| u.id.clone()).collect();
        want.sort();
        prop_assert_eq!(ids, want);
    }

    #[test]
    fn single_stratum_subclassification_is_naive(frame in synth_frame()) {
        let a = make_strata(&vec![0.0; frame.len()], 1).unwrap().with_frame_counts(&frame).unwrap();
        let sub = subclass_estimate(&frame, &a).unwrap();
        let naive = naive_sate(&frame).unwrap();
        prop_assert_eq!(sub.estimate, naive.estimate);
        prop_assert_eq!(sub.se, naive.se);
    }

    #[test]
    fn constant_propensity_ipw_is_naive(frame in synth_frame(), b0 in -4.0..2.0f64) {
        let model = PropensityModel {
            intercept: b0,
            coefficients: Default::default(),
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
        };
        let ipw = ipw_estimate(&frame, &model, &BootstrapOptions { reps: 20, seed: 1 }).unwrap();
        let naive = naive_sate(&frame).unwrap();
        prop_assert!((ipw.estimate - naive.estimate).abs() <= 1e-12);
    }

    #[test]
    fn estimates_within_feasible_range(frame in synth_frame()) {
        let r = frame.support().width();
        let covs = vec!["pretest".to_string()];
        let model = fit_propensity(&frame, &covs, &Default::default()).unwrap();
        let logits = logit_scores(&model, &frame).unwrap();
        let a = make_strata(&logits, 2).unwrap().with_frame_counts(&frame).unwrap();
        let mut ests = vec![naive_sate(&frame).unwrap(), ipw_estimate(&frame, &model, &BootstrapOptions { reps: 20, seed: 3 }).unwrap()];
        if let Ok(s) = subclass_estimate(&frame, &a) {
            if let PointDetails::Subclassification { strata } = &s.details {
                let total: f64 = strata.iter().map(|e| e.weight).sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
            ests.push(s);
        }
        for e in ests {
            prop_assert!(e.estimate >= -r && e.estimate <= r);
        }
    }

    #[test]
    fn lambda_rules(frame in synth_frame(), seed in any::<u64>()) {
        let covs: Vec<String> = frame.covariate_names().to_vec();
        let balance = balance_report(&frame, &covs).unwrap();
        let max = resolve_lambda(&LambdaSpec::Asmd { covariates: covs.clone(), aggregate: pibgen::lambda::AsmdAggregate::Max }, &frame, Some(&balance)).unwrap();
        let mean = resolve_lambda(&LambdaSpec::Asmd { covariates: covs.clone(), aggregate: pibgen::lambda::AsmdAggregate::Mean }, &frame, Some(&balance)).unwrap();
        prop_assert!(max >= mean);
        let other = permuted(&frame, seed);
        for expr in ["sd:pooled", "sd:max_arm:1.5", "asmd:max:pretest,enrollment", "asmd:mean:pretest,title1"] {
            let spec = LambdaSpec::parse(expr).unwrap();
            let a = resolve_lambda(&spec, &frame, None).unwrap();
            let b = resolve_lambda(&spec, &other, None).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{expr}: {a} vs {b}");
            if frame.is_binary() && expr.starts_with("sd") {
                let mult = if expr.ends_with("1.5") { 1.5 } else { 2.0 };
                prop_assert!(a <= mult * 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn rates_are_permutation_invariant(frame in synth_frame(), seed in any::<u64>()) {
        let other = permuted(&frame, seed);
        let a = empirical_rates(&frame).unwrap();
        let b = empirical_rates(&other).unwrap();
        prop_assert!((a.e_y1_w1z1 - b.e_y1_w1z1).abs() <= 1e-12);
        prop_assert!((a.e_y0_w0z1 - b.e_y0_w0z1).abs() <= 1e-12);
        prop_assert!((a.e_y0_w0z0.unwrap() - b.e_y0_w0z0.unwrap()).abs() <= 1e-12);
        let p = design_probs(&frame, 0.5).unwrap();
        prop_assert_eq!((p.p_z1 * frame.len() as f64).round() as usize, frame.n_sampled());
        prop_assert!((p.p_z1 * frame.len() as f64 - frame.n_sampled() as f64).abs() < 1e-9);
    }
}

#[test]
fn two_strata_weighted_mean_by_hand() {
    let mut rows = Vec::new();
    let mut logits = Vec::new();
    for (stratum, treated) in [(0.0, [1, 0, 0, 0, 0]), (1.0, [1, 1, 0, 0, 0])] {
        for y in treated {
            rows.push((true, Some(1), Some(y)));
        }
        rows.push((true, Some(0), Some(0)));
        rows.push((true, Some(0), Some(0)));
        logits.extend(std::iter::repeat_n(stratum, 7));
    }
    let f = binary_frame(&rows);
    let a = make_strata(&logits, 2).unwrap().with_frame_counts(&f).unwrap();
    let e = subclass_estimate(&f, &a).unwrap();
    assert!((e.estimate - 0.3).abs() < 1e-12);
}

#[test]
fn missing_control_makes_stratum_nonviable() {
    let f = binary_frame(&[
        (true, Some(1), Some(1)),
        (true, Some(0), Some(0)),
        (true, Some(1), Some(0)),
        (false, None, Some(1)),
    ]);
    let a = make_strata(&[0.0, 0.0, 1.0, 1.0], 2)
        .unwrap()
        .with_frame_counts(&f)
        .unwrap();
    assert!(matches!(subclass_estimate(&f, &a), Err(pibgen::Error::NonViableStratum(v)) if v == vec![2]));
}

#[test]
fn bootstrap_is_independent_of_thread_count() {
    let f = generate(&Default::default()).unwrap();
    let opts = BootstrapOptions { reps: 1000, seed: 99 };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| naive_bootstrap_se(&f, &opts).unwrap())
    };
    let one = run(1);
    assert_eq!(one.to_bits(), run(4).to_bits());
    assert_eq!(one.to_bits(), run(7).to_bits());
    assert_eq!(one.to_bits(), naive_bootstrap_se(&f, &opts).unwrap().to_bits());
}

#[test]
fn bootstrap_tracks_plug_in_se() {
    for seed in 0..5 {
        let f = generate(&SynthSpec {
            n_population: 2000,
            n_sample: 400,
            n_treated: 200,
            seed,
            ..Default::default()
        })
        .unwrap();
        let plug = naive_sate(&f).unwrap().se;
        let boot = naive_bootstrap_se(&f, &BootstrapOptions { reps: 1000, seed }).unwrap();
        assert!((boot / plug - 1.0).abs() <= 0.15, "seed {seed}: {boot} vs {plug}");
    }
}

#[test]
fn bootstrap_weighted_pairs_deterministic() {
    let t = [(1.0, 2.0), (0.0, 1.0), (1.0, 1.0)];
    let c = [(0.0, 1.0), (1.0, 3.0)];
    let o = BootstrapOptions { reps: 500, seed: 5 };
    assert_eq!(
        bootstrap_se(&t, &c, &o).unwrap().to_bits(),
        bootstrap_se(&t, &c, &o).unwrap().to_bits()
    );
}

#[test]
fn balanced_covariate_gives_zero_lambda_and_point_bounds() {
    let units: Vec<UnitRecord> = (0..8)
        .map(|i| UnitRecord {
            id: i.to_string(),
            sampled: i % 2 == 0,
            treatment: (i % 2 == 0).then_some(if i % 4 == 0 { Arm::Treated } else { Arm::Control }),
            outcome: Some(f64::from(u8::from(i % 3 == 0))),
            covariates: vec![f64::from(i / 2)],
        })
        .collect();
    let f = StudyFrame::new(units, OutcomeSupport::BINARY, vec!["x".into()]).unwrap();
    let l = resolve_lambda(&LambdaSpec::parse("asmd:max:x").unwrap(), &f, None).unwrap();
    assert_eq!(l, 0.0);
    let iv = pibgen::bounds::frame_bound(
        &f,
        &pibgen::bounds::BoundSpec::Bsv {
            framework: pibgen::bounds::Framework::Full,
            lambda: l,
            options: Default::default(),
        },
        0.5,
    )
    .unwrap();
    let pibgen::bounds::BoundOutcome::Interval(iv) = iv else {
        panic!()
    };
    assert_eq!(iv.lo, iv.hi);
}

#[test]
fn low_pass_rate_sd_rule() {
    // 26 passes among 1000 sampled units: 2·sqrt(p(1−p)) ≈ 0.318
    let rows: Vec<_> = (0..1000)
        .map(|i| (true, Some((i % 2) as u8), Some(u8::from(i < 26))))
        .collect();
    let f = binary_frame(&rows);
    let l = resolve_lambda(&LambdaSpec::default(), &f, None).unwrap();
    assert!((l - 2.0 * (0.026f64 * 0.974).sqrt()).abs() < 1e-12);
    assert!((l - 0.3).abs() < 0.02);
}

#[test]
fn lambda_report_shape_and_constant_outcome() {
    let units: Vec<UnitRecord> = (0..10)
        .map(|i| UnitRecord {
            id: i.to_string(),
            sampled: i < 6,
            treatment: (i < 6).then_some(if i % 2 == 0 { Arm::Treated } else { Arm::Control }),
            outcome: Some(1.0),
            covariates: vec![f64::from(i), f64::from(i % 3)],
        })
        .collect();
    let f = StudyFrame::new(units, OutcomeSupport::BINARY, vec!["a".into(), "b".into()]).unwrap();
    let b = balance_report(&f, &["a".to_string(), "b".to_string()]).unwrap();
    let rows = lambda_report(&f, &b).unwrap();
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r.rule.starts_with("sd")) {
        assert_eq!(r.value, Some(0.0));
    }
}
