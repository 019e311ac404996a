//! Synthetic frames shaped like a school-level cluster randomized trial:
//! a population listing of schools, a self-selected sample, and a
//! business-as-usual outcome for every school outside the sample.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Arm, OutcomeSupport, StudyFrame, UnitRecord};
use crate::propensity::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_population: usize,
    pub n_sample: usize,
    pub n_treated: usize,
    pub seed: u64,
    /// Give every non-sampled unit a business-as-usual outcome.
    pub population_outcomes: bool,
    /// Binary pass/fail outcome; otherwise a pass rate in [0, 100].
    pub binary: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_population: 1029,
            n_sample: 56,
            n_treated: 34,
            seed: 2013,
            population_outcomes: true,
            binary: true,
        }
    }
}

pub const COVARIATES: [&str; 4] = ["pretest", "title1", "enrollment", "urban"];

fn round_to(x: f64, digits: i32) -> f64 {
    let m = 10f64.powi(digits);
    (x * m).round() / m
}

pub fn generate(spec: &SynthSpec) -> Result<StudyFrame> {
    if spec.n_sample == 0 || spec.n_sample > spec.n_population {
        return Err(Error::Config("sample size must be in 1..=population size".into()));
    }
    if spec.n_treated == 0 || spec.n_treated >= spec.n_sample {
        return Err(Error::Config("treated count must leave both arms non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let enrollment_dist = LogNormal::<f64>::new(6.0, 0.45).expect("valid lognormal");
    let mut x = Vec::with_capacity(spec.n_population);
    for _ in 0..spec.n_population {
        let z: f64 = StandardNormal.sample(&mut rng);
        let pretest = round_to(z, 2);
        let title1 = f64::from(u8::from(rng.gen_bool(0.4)));
        let enrollment = enrollment_dist.sample(&mut rng).round().max(20.0);
        let urban = f64::from(u8::from(rng.gen_bool(0.3)));
        x.push([pretest, title1, enrollment, urban]);
    }

    // Weighted sampling without replacement: keep the n largest u^(1/w).
    let mut keys: Vec<(f64, usize)> = x
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let w = sigmoid(-3.2 + 0.6 * c[0] - 0.5 * c[1] + 0.4 * (c[2] / 400.0).ln() + 0.5 * c[3]);
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / w, i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut sampled: Vec<usize> = keys[..spec.n_sample].iter().map(|k| k.1).collect();
    sampled.sort_unstable();
    let mut order = sampled.clone();
    order.shuffle(&mut rng);
    let treated: Vec<usize> = order[..spec.n_treated].to_vec();

    let mut units = Vec::with_capacity(spec.n_population);
    for (i, c) in x.iter().enumerate() {
        let in_sample = sampled.binary_search(&i).is_ok();
        let arm = in_sample.then(|| {
            if treated.contains(&i) {
                Arm::Treated
            } else {
                Arm::Control
            }
        });
        let effect = if arm == Some(Arm::Treated) { 1.0 } else { 0.0 };
        let eta = 0.4 + 1.2 * c[0] - 0.4 * c[1] + effect;
        let draw_u: f64 = rng.gen();
        let noise: f64 = StandardNormal.sample(&mut rng);
        let outcome = if spec.binary {
            f64::from(u8::from(draw_u < sigmoid(eta)))
        } else {
            round_to((100.0 * sigmoid(eta) + 8.0 * noise).clamp(0.0, 100.0), 1)
        };
        let observed = in_sample || spec.population_outcomes;
        units.push(UnitRecord {
            id: format!("s{:04}", i + 1),
            sampled: in_sample,
            treatment: arm,
            outcome: observed.then_some(outcome),
            covariates: c.to_vec(),
        });
    }
    let support = if spec.binary {
        OutcomeSupport::BINARY
    } else {
        OutcomeSupport::new(0.0, 100.0)?
    };
    StudyFrame::new(units, support, COVARIATES.iter().map(|s| s.to_string()).collect())
}

/// Writes a frame in the default column layout
/// (`id,in_sample,treatment,outcome,<covariates>`).
pub fn write_frame_csv<W: Write>(frame: &StudyFrame, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "id".to_string(),
        "in_sample".into(),
        "treatment".into(),
        "outcome".into(),
    ];
    header.extend(frame.covariate_names().iter().cloned());
    w.write_record(&header)?;
    for u in frame.units() {
        let mut rec = vec![
            u.id.clone(),
            u8::from(u.sampled).to_string(),
            u.treatment.map(|a| a.indicator().to_string()).unwrap_or_default(),
            u.outcome.map(|y| y.to_string()).unwrap_or_default(),
        ];
        rec.extend(u.covariates.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
