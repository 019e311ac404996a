//! Propensity-logit subclassification of the population.
//!
//! Breakpoints are the j/k empirical quantiles (inverse-ECDF convention) of
//! the logits of all N units. Stratum j holds logits in `(b_{j-1}, b_j]`, the
//! lowest stratum being closed below, so ties at a breakpoint fall into the
//! lower stratum.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Arm, StudyFrame};

pub const DEFAULT_STRATA: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub population: usize,
    pub sample_treated: usize,
    pub sample_control: usize,
}

impl StratumCounts {
    pub fn viable(&self) -> bool {
        self.sample_treated > 0 && self.sample_control > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAssignment {
    pub k: usize,
    /// k−1 ascending breakpoints.
    pub breakpoints: Vec<f64>,
    /// 0-based stratum index per unit, in frame order.
    pub stratum_of: Vec<usize>,
    /// Per-stratum counts. Filled by [`make_strata`] with population sizes
    /// only; [`StratumAssignment::with_frame_counts`] adds the arm counts.
    pub counts: Vec<StratumCounts>,
}

/// Returns the stratum index of a logit given ascending breakpoints.
fn locate(breakpoints: &[f64], logit: f64) -> usize {
    breakpoints.partition_point(|&b| b < logit)
}

pub fn make_strata(logits: &[f64], k: usize) -> Result<StratumAssignment> {
    if k == 0 {
        return Err(Error::ZeroStrata);
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Config("non-finite logit".into()));
    }
    let mut sorted = logits.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if k > distinct.len() {
        return Err(Error::TooManyStrata {
            k,
            distinct: distinct.len(),
        });
    }
    let n = sorted.len();
    let breakpoints: Vec<f64> = (1..k)
        .map(|j| {
            // smallest order statistic with ECDF >= j/k
            let rank = (j * n).div_ceil(k);
            sorted[rank - 1]
        })
        .collect();
    let stratum_of: Vec<usize> = logits.iter().map(|&l| locate(&breakpoints, l)).collect();
    let mut counts = vec![
        StratumCounts {
            population: 0,
            sample_treated: 0,
            sample_control: 0,
        };
        k
    ];
    for &s in &stratum_of {
        counts[s].population += 1;
    }
    Ok(StratumAssignment {
        k,
        breakpoints,
        stratum_of,
        counts,
    })
}

impl StratumAssignment {
    /// Fills in sampled-arm counts from the frame the logits came from.
    pub fn with_frame_counts(mut self, frame: &StudyFrame) -> Result<Self> {
        if frame.len() != self.stratum_of.len() {
            return Err(Error::AssignmentMismatch {
                logits: self.stratum_of.len(),
                units: frame.len(),
            });
        }
        for c in &mut self.counts {
            c.sample_treated = 0;
            c.sample_control = 0;
        }
        for (u, &s) in frame.units().iter().zip(&self.stratum_of) {
            if u.sampled {
                match u.treatment {
                    Some(Arm::Treated) => self.counts[s].sample_treated += 1,
                    Some(Arm::Control) => self.counts[s].sample_control += 1,
                    None => {}
                }
            }
        }
        Ok(self)
    }

    /// Logit range `(lower, upper]` covered by a stratum; infinite at the ends.
    pub fn range(&self, stratum: usize) -> (f64, f64) {
        let lo = if stratum == 0 {
            f64::NEG_INFINITY
        } else {
            self.breakpoints[stratum - 1]
        };
        let hi = self.breakpoints.get(stratum).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    pub fn nonviable(&self) -> Vec<usize> {
        (0..self.k).filter(|&j| !self.counts[j].viable()).collect()
    }

    /// Collapses each non-viable stratum into its upper neighbour (the last
    /// one into its lower neighbour) until every stratum is viable or one
    /// stratum remains. Returns the merged assignment and the merges made,
    /// as `(from, into)` pairs of original 0-based indices.
    pub fn merge_nonviable(&self, frame: &StudyFrame) -> Result<(Self, Vec<(usize, usize)>)> {
        let mut groups: Vec<Vec<usize>> = (0..self.k).map(|j| vec![j]).collect();
        let base = self.clone().with_frame_counts(frame)?;
        let group_counts = |g: &[usize]| {
            g.iter().fold((0, 0), |(t, c), &j| {
                (t + base.counts[j].sample_treated, c + base.counts[j].sample_control)
            })
        };
        let mut merges = Vec::new();
        loop {
            let bad = groups.iter().position(|g| {
                let (t, c) = group_counts(g);
                t == 0 || c == 0
            });
            match bad {
                Some(i) if groups.len() > 1 => {
                    let into = if i + 1 < groups.len() { i + 1 } else { i - 1 };
                    let moved = groups.remove(i);
                    let target = if into > i { into - 1 } else { into };
                    merges.push((moved[0], groups[target][0]));
                    groups[target].extend(moved);
                    groups[target].sort_unstable();
                }
                _ => break,
            }
        }
        let mut new_index = vec![0; self.k];
        for (g, members) in groups.iter().enumerate() {
            for &j in members {
                new_index[j] = g;
            }
        }
        let breakpoints = groups[..groups.len() - 1]
            .iter()
            .map(|g| self.breakpoints[*g.last().unwrap()])
            .collect();
        let stratum_of: Vec<usize> = self.stratum_of.iter().map(|&s| new_index[s]).collect();
        let mut counts = vec![
            StratumCounts {
                population: 0,
                sample_treated: 0,
                sample_control: 0,
            };
            groups.len()
        ];
        for &s in &stratum_of {
            counts[s].population += 1;
        }
        let merged = StratumAssignment {
            k: groups.len(),
            breakpoints,
            stratum_of,
            counts,
        }
        .with_frame_counts(frame)?;
        Ok((merged, merges))
    }
}

/// One stratum's slice of the frame.
#[derive(Debug, Clone)]
pub struct StratumFrame {
    pub index: usize,
    pub frame: StudyFrame,
    pub viable: bool,
}

pub fn stratum_frames(frame: &StudyFrame, assignment: &StratumAssignment) -> Result<Vec<StratumFrame>> {
    if frame.len() != assignment.stratum_of.len() {
        return Err(Error::AssignmentMismatch {
            logits: assignment.stratum_of.len(),
            units: frame.len(),
        });
    }
    Ok((0..assignment.k)
        .map(|j| {
            let sub = frame.subset(
                frame
                    .units()
                    .iter()
                    .zip(&assignment.stratum_of)
                    .filter(|(_, &s)| s == j)
                    .map(|(u, _)| u),
            );
            let viable = sub.n_arm(Arm::Treated) > 0 && sub.n_arm(Arm::Control) > 0;
            StratumFrame {
                index: j,
                frame: sub,
                viable,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummaryRow {
    /// 1-based stratum number.
    pub stratum: usize,
    pub logit_lower: f64,
    pub logit_upper: f64,
    pub n_population: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub viable: bool,
}

pub fn stratum_summary(frame: &StudyFrame, assignment: &StratumAssignment) -> Result<Vec<StratumSummaryRow>> {
    let a = assignment.clone().with_frame_counts(frame)?;
    Ok((0..a.k)
        .map(|j| {
            let (lo, hi) = a.range(j);
            StratumSummaryRow {
                stratum: j + 1,
                logit_lower: lo,
                logit_upper: hi,
                n_population: a.counts[j].population,
                n_treated: a.counts[j].sample_treated,
                n_control: a.counts[j].sample_control,
                viable: a.counts[j].viable(),
            }
        })
        .collect())
}

/// Writes the stratum summary as CSV: the data behind a logit-distribution
/// plot with stratum boundaries.
pub fn write_stratum_summary_csv<W: Write>(rows: &[StratumSummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "stratum",
        "logit_lower",
        "logit_upper",
        "n_population",
        "n_treated",
        "n_control",
        "viable",
    ])?;
    for r in rows {
        w.write_record([
            r.stratum.to_string(),
            r.logit_lower.to_string(),
            r.logit_upper.to_string(),
            r.n_population.to_string(),
            r.n_treated.to_string(),
            r.n_control.to_string(),
            r.viable.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
