//! Report views. JSON carries full precision; Markdown rounds intervals to
//! two decimals and point estimates to three, and is derived from the
//! report alone.

use std::fmt::Write as _;

use crate::analysis::{BoundsRow, Report};
use crate::bounds::{AssumptionTag, BoundOutcome, Framework, MtrVariant, PateInterval};
use crate::error::Result;
use crate::points::{Method, PointEstimate};

pub fn to_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Fixed-decimal formatting without negative zero.
pub fn fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Degenerate intervals print as a single value.
fn interval2(lo: f64, hi: f64) -> String {
    if (hi - lo).abs() <= 1e-12 {
        fixed(lo, 2)
    } else {
        format!("[{}, {}]", fixed(lo, 2), fixed(hi, 2))
    }
}

fn assumption_label(a: AssumptionTag) -> &'static str {
    match a {
        AssumptionTag::WorstCase => "Treatment randomization",
        AssumptionTag::Bsv => "Bounded sample variation",
        AssumptionTag::Mtr => "Monotone treatment response",
    }
}

fn framework_label(iv: &PateInterval) -> &'static str {
    match (iv.assumption, iv.framework) {
        (AssumptionTag::Mtr, Framework::Full) => "sample",
        (AssumptionTag::Mtr, Framework::Reduced) => "population",
        (_, Framework::Full) => "full",
        (_, Framework::Reduced) => "reduced",
    }
}

fn variant_label(v: Option<MtrVariant>) -> &'static str {
    match v {
        Some(MtrVariant::Min) => "smallest upper",
        Some(MtrVariant::Max) => "largest upper",
        None => "",
    }
}

fn lambda_cell(iv: &PateInterval, rule: Option<&str>) -> String {
    match (iv.lambda, rule) {
        (Some(l), Some(r)) if r.parse::<f64>().is_err() => format!("{} ({r})", fixed(l, 2)),
        (Some(l), _) => fixed(l, 2),
        (None, _) => String::new(),
    }
}

fn notes(iv: &PateInterval) -> String {
    let mut n = Vec::new();
    match iv.improves {
        Some(true) => n.push("sharp and improving"),
        Some(false) => n.push("not improving on worst case"),
        None => {}
    }
    if iv.clamped.lo || iv.clamped.hi {
        n.push("clamped");
    }
    n.join("; ")
}

fn table1_row(out: &mut String, row: &BoundsRow) {
    let iv = &row.interval;
    let _ = writeln!(
        out,
        "| {} | {} | {} | {} | {} | {} |",
        assumption_label(iv.assumption),
        framework_label(iv),
        lambda_cell(iv, row.lambda_rule.as_deref()),
        variant_label(iv.variant),
        interval2(iv.lo, iv.hi),
        notes(iv)
    );
}

fn method_label(m: Method) -> &'static str {
    match m {
        Method::Naive => "No weighting",
        Method::Ipw => "IPW (normalized)",
        Method::Subclassification => "Subclassification",
    }
}

fn point_row(out: &mut String, e: &PointEstimate) {
    let _ = writeln!(
        out,
        "| {} | {} | {} | {} ({}) |",
        method_label(e.method),
        fixed(e.estimate, 3),
        fixed(e.se, 3),
        fixed(e.estimate, 3),
        fixed(e.se, 3)
    );
}

/// Markdown report blocks, in document order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Header,
    Table1,
    Table2,
    Table3,
    Balance,
    Lambda,
    Propensity,
    Ledger,
}

impl Section {
    pub const ALL: [Section; 8] = [
        Section::Header,
        Section::Table1,
        Section::Table2,
        Section::Table3,
        Section::Balance,
        Section::Lambda,
        Section::Propensity,
        Section::Ledger,
    ];
}

pub fn to_markdown(report: &Report) -> String {
    to_markdown_sections(report, &Section::ALL)
}

pub fn to_markdown_sections(report: &Report, sections: &[Section]) -> String {
    let mut parts: Vec<String> = Vec::new();
    for &section in sections {
        let mut out = String::new();
        match section {
            Section::Header => header_md(&mut out, report),
            Section::Table1 => table1_md(&mut out, report),
            Section::Table2 => table2_md(&mut out, report),
            Section::Table3 => table3_md(&mut out, report),
            Section::Balance => balance_md(&mut out, report),
            Section::Lambda => lambda_md(&mut out, report),
            Section::Propensity => propensity_md(&mut out, report),
            Section::Ledger => ledger_md(&mut out, report),
        }
        parts.push(out.trim_end().to_string());
    }
    let mut doc = parts.join("\n\n");
    doc.push('\n');
    doc
}

fn header_md(out: &mut String, report: &Report) {
    let d = &report.data;
    let p = &report.design;
    let _ = writeln!(out, "# PATE bounds report\n");
    let _ = writeln!(
        out,
        "N = {}, n = {} ({} treated, {} control), P(Z=1) = {}, P(W=1|Z=1) = {}, assumed P(W=0|Z=0) = {}, support [{}, {}], seed {}.\n",
        d.n_population,
        d.n_sample,
        d.n_treated,
        d.n_control,
        fixed(p.p_z1, 2),
        fixed(p.p_w1_given_z1, 2),
        fixed(p.p_w0_given_z0, 2),
        d.support[0],
        d.support[1],
        report.seed
    );
}

fn table1_md(out: &mut String, report: &Report) {
    let _ = writeln!(out, "## Table 1. Bounds on the PATE\n");
    let _ = writeln!(out, "| Assumption | Framework | λ | Variant | Interval | Notes |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for row in &report.table1 {
        table1_row(out, row);
    }
}

fn table2_md(out: &mut String, report: &Report) {
    let t2 = &report.table2;
    let _ = writeln!(out, "## Table 2. Bounds by propensity stratum (k = {})\n", t2.k);
    let _ = writeln!(out, "| Stratum | Logit range | N_j | Treated | Control | Viable |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for s in &t2.summary {
        let _ = writeln!(
            out,
            "| {} | ({}, {}] | {} | {} | {} | {} |",
            s.stratum,
            fixed(s.logit_lower, 2),
            fixed(s.logit_upper, 2),
            s.n_population,
            s.n_treated,
            s.n_control,
            if s.viable { "yes" } else { "no" }
        );
    }
    let mut header = String::from("| Assumption | Framework | λ | Variant |");
    let mut rule = String::from("|---|---|---|---|");
    for s in &t2.summary {
        let _ = write!(header, " Stratum {} |", s.stratum);
        rule.push_str("---|");
    }
    let any_pooled = t2.bounds.iter().any(|b| b.bounds.pooled.is_some());
    if any_pooled {
        header.push_str(" Pooled (extension) |");
        rule.push_str("---|");
    }
    let _ = writeln!(out, "\n{header}\n{rule}");
    for row in &t2.bounds {
        // One line per result variant: MTR yields two.
        let first = row.bounds.strata.iter().find_map(|s| s.result.as_ref());
        let variants: Vec<Option<MtrVariant>> = match first {
            Some(BoundOutcome::Mtr(_)) => vec![Some(MtrVariant::Min), Some(MtrVariant::Max)],
            _ => vec![None],
        };
        for v in variants {
            let mut label_iv = None;
            let mut cells = Vec::new();
            for s in &row.bounds.strata {
                let iv = match (&s.result, v) {
                    (Some(BoundOutcome::Interval(iv)), _) => Some(iv),
                    (Some(BoundOutcome::Mtr(m)), Some(MtrVariant::Min)) => Some(&m.interval_min_variant),
                    (Some(BoundOutcome::Mtr(m)), _) => Some(&m.interval_max_variant),
                    (None, _) => None,
                };
                match iv {
                    Some(iv) => {
                        label_iv.get_or_insert(iv);
                        cells.push(interval2(iv.lo, iv.hi));
                    }
                    None => cells.push("skipped".into()),
                }
            }
            let Some(iv) = label_iv else {
                continue;
            };
            let _ = write!(
                out,
                "| {} | {} | {} | {} |",
                assumption_label(iv.assumption),
                framework_label(iv),
                lambda_cell(iv, row.lambda_rule.as_deref()),
                variant_label(v)
            );
            for c in cells {
                let _ = write!(out, " {c} |");
            }
            if any_pooled {
                let cell = match &row.bounds.pooled {
                    Some(pool) => match (v, pool.max_variant) {
                        (Some(MtrVariant::Max), Some(m)) => interval2(m.lo, m.hi),
                        _ => interval2(pool.interval.lo, pool.interval.hi),
                    },
                    None => String::new(),
                };
                let _ = write!(out, " {cell} |");
            }
            out.push('\n');
        }
    }
}

fn table3_md(out: &mut String, report: &Report) {
    let _ = writeln!(out, "## Table 3. Point estimates under ignorable selection\n");
    let _ = writeln!(out, "| Method | Estimate | SE | Cell |");
    let _ = writeln!(out, "|---|---|---|---|");
    for e in &report.table3 {
        point_row(out, e);
    }
}

fn balance_md(out: &mut String, report: &Report) {
    let _ = writeln!(out, "## Covariate balance\n");
    let _ = writeln!(
        out,
        "| Covariate | Sample mean | Population mean | Population SD | ASMD |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|");
    for c in &report.balance.covariates {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            c.covariate,
            fixed(c.sample_mean, 2),
            fixed(c.population_mean, 2),
            fixed(c.population_sd, 2),
            c.asmd.map(|a| fixed(a, 2)).unwrap_or_else(|| "undefined".into())
        );
    }
}

fn lambda_md(out: &mut String, report: &Report) {
    let _ = writeln!(out, "## Candidate λ values\n");
    let _ = writeln!(out, "| Rule | λ |");
    let _ = writeln!(out, "|---|---|");
    for r in &report.lambda_report {
        let _ = writeln!(
            out,
            "| {} | {} |",
            r.rule,
            r.value.map(|v| fixed(v, 2)).unwrap_or_else(|| "undefined".into())
        );
    }
}

fn propensity_md(out: &mut String, report: &Report) {
    let m = &report.propensity.model;
    let _ = writeln!(out, "## Propensity model\n");
    let _ = writeln!(
        out,
        "Converged: {} after {} iterations; logits in [{}, {}].\n",
        if m.converged { "yes" } else { "no" },
        m.iterations,
        fixed(report.propensity.logit_min, 2),
        fixed(report.propensity.logit_max, 2)
    );
    let _ = writeln!(out, "| Term | Coefficient |");
    let _ = writeln!(out, "|---|---|");
    let _ = writeln!(out, "| (intercept) | {} |", fixed(m.intercept, 2));
    for (name, b) in &m.coefficients {
        let _ = writeln!(out, "| {name} | {} |", fixed(*b, 2));
    }
}

fn ledger_md(out: &mut String, report: &Report) {
    let _ = writeln!(out, "## Assumptions ledger\n");
    if report.ledger.is_empty() {
        let _ = writeln!(out, "- nothing to report");
    }
    for note in &report.ledger {
        let _ = writeln!(out, "- {note}");
    }
}

/// Flat CSV of every interval and point estimate.
pub fn to_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "block",
        "stratum",
        "assumption",
        "framework",
        "lambda",
        "lambda_rule",
        "variant",
        "lo",
        "hi",
        "clamped_lo",
        "clamped_hi",
        "pre_clamp_lo",
        "pre_clamp_hi",
        "improves",
    ])?;
    let interval_record = |block: &str, stratum: String, iv: &PateInterval, rule: Option<&str>| -> Vec<String> {
        vec![
            block.to_string(),
            stratum,
            serde_plain(&iv.assumption),
            serde_plain(&iv.framework),
            iv.lambda.map(|l| l.to_string()).unwrap_or_default(),
            rule.unwrap_or_default().to_string(),
            iv.variant.map(|v| serde_plain(&v)).unwrap_or_default(),
            iv.lo.to_string(),
            iv.hi.to_string(),
            iv.clamped.lo.to_string(),
            iv.clamped.hi.to_string(),
            iv.pre_clamp.lo.to_string(),
            iv.pre_clamp.hi.to_string(),
            iv.improves.map(|b| b.to_string()).unwrap_or_default(),
        ]
    };
    for row in &report.table1 {
        w.write_record(interval_record(
            "table1",
            String::new(),
            &row.interval,
            row.lambda_rule.as_deref(),
        ))?;
    }
    for row in &report.table2.bounds {
        for s in &row.bounds.strata {
            match &s.result {
                Some(BoundOutcome::Interval(iv)) => w.write_record(interval_record(
                    "table2",
                    s.stratum.to_string(),
                    iv,
                    row.lambda_rule.as_deref(),
                ))?,
                Some(BoundOutcome::Mtr(m)) => {
                    for iv in [&m.interval_min_variant, &m.interval_max_variant] {
                        w.write_record(interval_record("table2", s.stratum.to_string(), iv, None))?;
                    }
                }
                None => {}
            }
        }
    }
    for e in &report.table3 {
        let mut rec = vec![String::new(); 14];
        rec[0] = "table3".into();
        rec[2] = serde_plain(&e.method);
        rec[7] = e.estimate.to_string();
        rec[8] = e.se.to_string();
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn serde_plain<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}
