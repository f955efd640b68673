//! Systematic grid exploration: generates every four-cell dataset over a
//! range of event counts, fits unadjusted and adjusted models per link,
//! and summarizes how the paired coefficients relate (Bland-Altman
//! coordinates, extremeness and sign-flip counts).

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{Cell, CellTable};
use crate::glm::{fit_glm, ModelSpec};
use crate::link::Link;
use crate::output::fmt17;

/// Estimates below this magnitude are treated as numerically null when
/// counting sign flips.
pub const SIGN_FLOOR: f64 = 1e-6;
/// Bland-Altman differences below this magnitude count as zero.
pub const DIFF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExplorerError {
    #[error("grid range is empty (low {low} > high {high})")]
    EmptyRange { low: u64, high: u64 },
    #[error("grid step must be positive")]
    ZeroStep,
    #[error("grid step {step} does not divide the range span {span}")]
    StepMismatch { step: u64, span: u64 },
    #[error("malformed records header: expected `{expected}`, got `{got}`")]
    MalformedRecordsHeader { expected: String, got: String },
    #[error("records row {row}: {message}")]
    MalformedRecord { row: usize, message: String },
}

/// The grid to explore: per-cell event counts `low, low+step, ..., high`
/// with a fixed number of trials per cell, fitted under each link.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub low: u64,
    pub high: u64,
    pub step: u64,
    pub trials: u64,
    pub links: Vec<Link>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            low: 10,
            high: 20,
            step: 2,
            trials: 200,
            links: vec![Link::Logit, Link::Identity, Link::Log],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), ExplorerError> {
        if self.low > self.high {
            return Err(ExplorerError::EmptyRange {
                low: self.low,
                high: self.high,
            });
        }
        if self.step == 0 {
            return Err(ExplorerError::ZeroStep);
        }
        let span = self.high - self.low;
        if !span.is_multiple_of(self.step) {
            return Err(ExplorerError::StepMismatch {
                step: self.step,
                span,
            });
        }
        Ok(())
    }

    pub fn event_levels(&self) -> Vec<u64> {
        (self.low..=self.high).step_by(self.step as usize).collect()
    }

    /// Number of datasets the grid generates: (range size)^4.
    pub fn dataset_count(&self) -> usize {
        self.event_levels().len().pow(4)
    }
}

/// Event counts of one grid dataset, indexed as `e<x><z>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellEvents {
    pub e00: u64,
    pub e01: u64,
    pub e10: u64,
    pub e11: u64,
}

impl CellEvents {
    /// Builds the four-cell table in the presentation order
    /// (x=0,z=1), (x=0,z=0), (x=1,z=1), (x=1,z=0).
    pub fn to_table(self, trials: u64) -> CellTable {
        CellTable::new(vec![
            Cell::new(0, 1, self.e01, trials).expect("valid cell"),
            Cell::new(0, 0, self.e00, trials).expect("valid cell"),
            Cell::new(1, 1, self.e11, trials).expect("valid cell"),
            Cell::new(1, 0, self.e10, trials).expect("valid cell"),
        ])
        .expect("valid table")
    }
}

/// One dataset fitted under one link. Coefficients are present only when
/// the corresponding fit converged.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub events: CellEvents,
    pub link: Link,
    pub unadjusted: Option<f64>,
    pub adjusted: Option<f64>,
}

impl GridRecord {
    pub fn converged(&self) -> bool {
        self.unadjusted.is_some() && self.adjusted.is_some()
    }
}

/// A Bland-Altman coordinate for one unadjusted/adjusted pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BAPoint {
    pub mean: f64,
    pub diff: f64,
}

fn event_tuples(spec: &GridSpec) -> Vec<CellEvents> {
    // lexicographic over (e(x=0,z=1), e(x=0,z=0), e(x=1,z=1), e(x=1,z=0))
    let levels = spec.event_levels();
    let mut out = Vec::with_capacity(spec.dataset_count());
    for &e01 in &levels {
        for &e00 in &levels {
            for &e11 in &levels {
                for &e10 in &levels {
                    out.push(CellEvents { e00, e01, e10, e11 });
                }
            }
        }
    }
    out
}

/// All grid datasets in lexicographic order.
pub fn generate_grid(spec: &GridSpec) -> Result<Vec<CellTable>, ExplorerError> {
    spec.validate()?;
    Ok(event_tuples(spec)
        .into_iter()
        .map(|e| e.to_table(spec.trials))
        .collect())
}

/// Fits every dataset under every link. Fit failures and non-convergence
/// are recorded as missing coefficients, never dropped. Datasets may be
/// fitted in parallel; output order is by dataset index, then link.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<GridRecord>, ExplorerError> {
    spec.validate()?;
    let tuples = event_tuples(spec);
    let records: Vec<Vec<GridRecord>> = tuples
        .par_iter()
        .map(|&events| {
            let table = events.to_table(spec.trials);
            spec.links
                .iter()
                .map(|&link| {
                    let coef = |adjusted: bool| {
                        fit_glm(ModelSpec { link, adjusted }, &table)
                            .ok()
                            .filter(|f| f.converged)
                            .map(|f| f.treatment_coefficient())
                    };
                    GridRecord {
                        events,
                        link,
                        unadjusted: coef(false),
                        adjusted: coef(true),
                    }
                })
                .collect()
        })
        .collect();
    Ok(records.into_iter().flatten().collect())
}

/// Bland-Altman coordinates for the converged pairs of one link.
pub fn bland_altman(records: &[GridRecord], link: Link) -> Vec<BAPoint> {
    records
        .iter()
        .filter(|r| r.link == link)
        .filter_map(|r| match (r.unadjusted, r.adjusted) {
            (Some(u), Some(a)) => Some(BAPoint {
                mean: (u + a) / 2.0,
                diff: a - u,
            }),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkPattern {
    pub link: String,
    pub datasets: usize,
    pub converged_pairs: usize,
    pub non_converged: usize,
    /// Pairs where the adjusted coefficient is not more extreme than the
    /// unadjusted one on the same side of the null.
    pub extremeness_violations: usize,
    /// Pairs where both coefficients exceed the sign floor with opposite
    /// signs.
    pub sign_flips: usize,
    /// Pairs where exactly one coefficient exceeds the sign floor:
    /// adjustment moved a numerically null estimate off the null (or
    /// vice versa).
    pub null_crossings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternReport {
    pub links: Vec<LinkPattern>,
}

impl PatternReport {
    pub fn for_link(&self, link: Link) -> Option<&LinkPattern> {
        self.links.iter().find(|l| l.link == link.name())
    }

    /// The canonical-link geometry check: no logit pair may violate
    /// extremeness.
    pub fn passes(&self) -> bool {
        self.for_link(Link::Logit)
            .map(|l| l.extremeness_violations == 0)
            .unwrap_or(true)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Summarizes the grid run per link: convergence counts, extremeness
/// violations, and sign flips.
pub fn pattern_checks(records: &[GridRecord]) -> PatternReport {
    let mut links: Vec<Link> = Vec::new();
    for r in records {
        if !links.contains(&r.link) {
            links.push(r.link);
        }
    }
    let summaries = links
        .into_iter()
        .map(|link| {
            let of_link: Vec<&GridRecord> = records.iter().filter(|r| r.link == link).collect();
            let mut converged_pairs = 0;
            let mut extremeness_violations = 0;
            let mut sign_flips = 0;
            let mut null_crossings = 0;
            for r in &of_link {
                let (Some(u), Some(a)) = (r.unadjusted, r.adjusted) else {
                    continue;
                };
                converged_pairs += 1;
                let diff = a - u;
                let mean = (a + u) / 2.0;
                let same_sign = (diff > 0.0 && mean > 0.0) || (diff < 0.0 && mean < 0.0);
                if !(diff.abs() <= DIFF_TOL || same_sign) {
                    extremeness_violations += 1;
                }
                if u.abs() > SIGN_FLOOR && a.abs() > SIGN_FLOOR && u * a < 0.0 {
                    sign_flips += 1;
                }
                if (u.abs() > SIGN_FLOOR) != (a.abs() > SIGN_FLOOR) {
                    null_crossings += 1;
                }
            }
            LinkPattern {
                link: link.name().to_string(),
                datasets: of_link.len(),
                converged_pairs,
                non_converged: of_link.len() - converged_pairs,
                extremeness_violations,
                sign_flips,
                null_crossings,
            }
        })
        .collect();
    PatternReport { links: summaries }
}

const RECORDS_HEADER: &str = "e00,e01,e10,e11,link,unadjusted,adjusted,converged";

/// Serializes records to CSV. Missing coefficients render as empty fields.
pub fn records_to_csv(records: &[GridRecord]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    for r in records {
        let field = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        let _ = write!(
            out,
            "\n{},{},{},{},{},{},{},{}",
            r.events.e00,
            r.events.e01,
            r.events.e10,
            r.events.e11,
            r.link,
            field(r.unadjusted),
            field(r.adjusted),
            r.converged()
        );
    }
    out.push('\n');
    out
}

/// Serializes Bland-Altman points to `mean,diff` CSV.
pub fn ba_points_to_csv(points: &[BAPoint]) -> String {
    let mut out = String::from("mean,diff");
    for p in points {
        let _ = write!(out, "\n{},{}", fmt17(p.mean), fmt17(p.diff));
    }
    out.push('\n');
    out
}

/// Parses a records CSV produced by [`records_to_csv`].
pub fn parse_records_csv(text: &str) -> Result<Vec<GridRecord>, ExplorerError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim_end_matches('\r');
    if header != RECORDS_HEADER {
        return Err(ExplorerError::MalformedRecordsHeader {
            expected: RECORDS_HEADER.to_string(),
            got: header.to_string(),
        });
    }
    let mut records = Vec::new();
    let mut row = 0usize;
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        row += 1;
        let bad = |message: String| ExplorerError::MalformedRecord { row, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", fields.len())));
        }
        let count = |i: usize| -> Result<u64, ExplorerError> {
            fields[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("`{}` is not a count", fields[i])))
        };
        let events = CellEvents {
            e00: count(0)?,
            e01: count(1)?,
            e10: count(2)?,
            e11: count(3)?,
        };
        let link = Link::from_str(fields[4]).map_err(|e| bad(e.to_string()))?;
        let coef = |i: usize| -> Result<Option<f64>, ExplorerError> {
            if fields[i].is_empty() {
                return Ok(None);
            }
            fields[i]
                .parse::<f64>()
                .map(Some)
                .map_err(|_| bad(format!("`{}` is not a number", fields[i])))
        };
        let unadjusted = coef(5)?;
        let adjusted = coef(6)?;
        let converged = fields[7]
            .parse::<bool>()
            .map_err(|_| bad(format!("`{}` is not a boolean", fields[7])))?;
        if converged != (unadjusted.is_some() && adjusted.is_some()) {
            return Err(bad(
                "converged flag inconsistent with coefficient presence".to_string()
            ));
        }
        records.push(GridRecord {
            events,
            link,
            unadjusted,
            adjusted,
        });
    }
    Ok(records)
}
