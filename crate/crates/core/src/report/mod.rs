//! Aggregation of persisted runs into tables and figures: accuracy by
//! model/task/mode, flip-rate curves with Wilson bands and parse-failure
//! overlays, moving-average classification series, and logit-lens tables.
//!
//! Conventions (also recorded in emitted metadata): accuracy tables count
//! parse failures as incorrect; flip rates use parsed-only denominators.
//! Every reported rate carries its denominator.

pub mod store;
pub mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::TraceLabel;
use crate::probe::LogitLens;
use crate::records::GenerationRecord;
use crate::steering::{DirectionKind, SweepPoint};
use crate::types::{PromptMode, TaskName};

pub use store::{RunEntry, RunStore, RunWriter, StoreError};

/// Accuracy convention applied everywhere a table is emitted.
pub const ACCURACY_CONVENTION: &str =
    "accuracy = parsed-and-correct / total; parse failures count as incorrect";
/// Flip-rate convention applied to sweep aggregation.
pub const FLIP_RATE_CONVENTION: &str =
    "flip_rate = flips / parsed generations; points with < 20 parsed are marked omitted";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("emit I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no data: {0}")]
    NoData(String),
}

// ---------------------------------------------------------------------------
// Accuracy table
// ---------------------------------------------------------------------------

/// One (backend, task, mode) accuracy cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub backend: String,
    pub task: TaskName,
    pub mode: PromptMode,
    pub n_total: usize,
    pub n_parsed: usize,
    pub n_correct: usize,
    pub parse_failures: usize,
    /// Correct over total; failures count as incorrect.
    pub accuracy: f64,
}

/// A requested cell with no backing run; rendered blank, never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub backend: String,
    pub task: TaskName,
    pub mode: PromptMode,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub convention: String,
    pub cells: Vec<AccuracyCell>,
    pub missing: Vec<MissingCell>,
}

/// Summarizes one evaluation run into an accuracy cell.
pub fn accuracy_cell(
    backend: &str,
    task: TaskName,
    mode: PromptMode,
    records: &[GenerationRecord],
) -> AccuracyCell {
    let n_total = records.len();
    let n_parsed = records.iter().filter(|r| r.is_parsed()).count();
    let n_correct = records.iter().filter(|r| r.is_correct()).count();
    AccuracyCell {
        backend: backend.to_string(),
        task,
        mode,
        n_total,
        n_parsed,
        n_correct,
        parse_failures: n_total - n_parsed,
        accuracy: if n_total > 0 {
            n_correct as f64 / n_total as f64
        } else {
            0.0
        },
    }
}

pub fn accuracy_table(mut cells: Vec<AccuracyCell>, missing: Vec<MissingCell>) -> AccuracyTable {
    cells.sort_by(|a, b| {
        (a.backend.as_str(), a.task, a.mode).cmp(&(b.backend.as_str(), b.task, b.mode))
    });
    AccuracyTable {
        convention: ACCURACY_CONVENTION.to_string(),
        cells,
        missing,
    }
}

// ---------------------------------------------------------------------------
// Flip curves
// ---------------------------------------------------------------------------

/// One plot-data row: flip rate with its Wilson band and the parse-failure
/// rate at the same strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipCurveRow {
    pub direction_kind: DirectionKind,
    pub alpha: f64,
    pub alpha_abs: f64,
    pub n_total: usize,
    pub n_parsed: usize,
    pub n_flipped: usize,
    pub flip_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub parse_failure_rate: f64,
    /// Fewer than the minimum parsed generations: kept in the data, left out
    /// of plots.
    pub omitted: bool,
}

/// Flattens persisted sweep points into plot rows, sorted by
/// (direction, |alpha|).
pub fn aggregate_flip_curves(points: &[SweepPoint], min_parsed: usize) -> Vec<FlipCurveRow> {
    let mut rows: Vec<FlipCurveRow> = points
        .iter()
        .map(|p| FlipCurveRow {
            direction_kind: p.direction_kind,
            alpha: p.alpha,
            alpha_abs: p.alpha.abs(),
            n_total: p.n_total,
            n_parsed: p.n_parsed,
            n_flipped: p.n_flipped,
            flip_rate: p.flip_rate,
            ci_low: p.ci_low,
            ci_high: p.ci_high,
            parse_failure_rate: if p.n_total > 0 {
                (p.n_total - p.n_parsed) as f64 / p.n_total as f64
            } else {
                0.0
            },
            omitted: p.n_parsed < min_parsed,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.direction_kind
            .cmp(&b.direction_kind)
            .then(a.alpha_abs.partial_cmp(&b.alpha_abs).expect("finite alpha"))
    });
    rows
}

// ---------------------------------------------------------------------------
// Classification series
// ---------------------------------------------------------------------------

/// Relative rates of the three failure labels over |alpha|, smoothed by a
/// centered moving average with edge truncation. Sound traces are excluded
/// from the normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MovingAverageSeries {
    pub x: Vec<f64>,
    pub non_entailment: Vec<f64>,
    pub confabulation: Vec<f64>,
    pub hallucination: Vec<f64>,
    /// Raw (non-entailment, confabulation, hallucination) counts per x.
    pub counts: Vec<(usize, usize, usize)>,
    pub window: usize,
}

/// Builds the series from pooled `(|alpha|, label)` pairs (yes/no directions
/// pooled per the figure convention). `window` must be odd.
pub fn classification_series(
    labeled: &[(f64, TraceLabel)],
    window: usize,
) -> Result<MovingAverageSeries, ReportError> {
    assert!(window % 2 == 1, "moving-average window must be odd");
    let mut by_alpha: BTreeMap<u64, (f64, [usize; 3])> = BTreeMap::new();
    for &(alpha_abs, label) in labeled {
        let slot = match label {
            TraceLabel::NonEntailment => 0,
            TraceLabel::Confabulation => 1,
            TraceLabel::Hallucination => 2,
            TraceLabel::Sound => continue, // excluded from relative rates
        };
        let entry = by_alpha
            .entry(alpha_abs.to_bits())
            .or_insert((alpha_abs, [0usize; 3]));
        entry.1[slot] += 1;
    }
    let mut settings: Vec<(f64, [usize; 3])> = by_alpha.into_values().collect();
    settings.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite alpha"));
    settings.retain(|(_, counts)| counts.iter().sum::<usize>() > 0);
    if settings.is_empty() {
        return Err(ReportError::NoData(
            "no classified failure traces to aggregate".into(),
        ));
    }

    let x: Vec<f64> = settings.iter().map(|(a, _)| *a).collect();
    let counts: Vec<(usize, usize, usize)> = settings
        .iter()
        .map(|(_, c)| (c[0], c[1], c[2]))
        .collect();
    let raw_rates: Vec<[f64; 3]> = settings
        .iter()
        .map(|(_, c)| {
            let total = (c[0] + c[1] + c[2]) as f64;
            let rates = [c[0] as f64 / total, c[1] as f64 / total, c[2] as f64 / total];
            debug_assert!((rates.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            rates
        })
        .collect();

    let smooth = |idx: usize| -> Vec<f64> {
        let half = window / 2;
        (0..raw_rates.len())
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half).min(raw_rates.len() - 1);
                let span = &raw_rates[lo..=hi];
                span.iter().map(|r| r[idx]).sum::<f64>() / span.len() as f64
            })
            .collect()
    };

    Ok(MovingAverageSeries {
        x,
        non_entailment: smooth(0),
        confabulation: smooth(1),
        hallucination: smooth(2),
        counts,
        window,
    })
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

/// Writes CSV/JSON plot data and deterministic SVG figures under `out_dir`.
pub struct Emitter {
    out_dir: PathBuf,
}

impl Emitter {
    pub fn new(out_dir: impl Into<PathBuf>) -> Result<Emitter, ReportError> {
        let out_dir = out_dir.into();
        fs::create_dir_all(&out_dir).map_err(|source| ReportError::Io {
            path: out_dir.clone(),
            source,
        })?;
        Ok(Emitter { out_dir })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, ReportError> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    /// `accuracy.csv` (+ `accuracy.json` with the convention note).
    pub fn emit_accuracy(&self, table: &AccuracyTable) -> Result<Vec<PathBuf>, ReportError> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "backend",
            "task",
            "mode",
            "n_total",
            "n_parsed",
            "n_correct",
            "parse_failures",
            "accuracy",
        ])?;
        for c in &table.cells {
            wtr.write_record([
                c.backend.clone(),
                c.task.to_string(),
                c.mode.to_string(),
                c.n_total.to_string(),
                c.n_parsed.to_string(),
                c.n_correct.to_string(),
                c.parse_failures.to_string(),
                c.accuracy.to_string(),
            ])?;
        }
        for m in &table.missing {
            wtr.write_record([
                m.backend.clone(),
                m.task.to_string(),
                m.mode.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("missing: {}", m.reason),
            ])?;
        }
        let csv_bytes = wtr.into_inner().expect("in-memory writer");
        let p1 = self.write("accuracy.csv", &csv_bytes)?;
        let p2 = self.write(
            "accuracy.json",
            serde_json::to_string_pretty(table).expect("serializes").as_bytes(),
        )?;
        Ok(vec![p1, p2])
    }

    /// `flip_curves.csv` plus the steering figure and its parse-failure
    /// companion.
    pub fn emit_flip_curves(
        &self,
        title: &str,
        rows: &[FlipCurveRow],
    ) -> Result<Vec<PathBuf>, ReportError> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "direction",
            "alpha",
            "alpha_abs",
            "n_total",
            "n_parsed",
            "n_flipped",
            "flip_rate",
            "ci_low",
            "ci_high",
            "parse_failure_rate",
            "omitted",
        ])?;
        for r in rows {
            wtr.write_record([
                r.direction_kind.as_str().to_string(),
                r.alpha.to_string(),
                r.alpha_abs.to_string(),
                r.n_total.to_string(),
                r.n_parsed.to_string(),
                r.n_flipped.to_string(),
                r.flip_rate.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
                r.parse_failure_rate.to_string(),
                r.omitted.to_string(),
            ])?;
        }
        let csv_bytes = wtr.into_inner().expect("in-memory writer");
        let mut written = vec![self.write("flip_curves.csv", &csv_bytes)?];

        let mut flip_chart = svg::Chart {
            title: title.to_string(),
            x_label: "|alpha|".into(),
            y_label: "flip rate".into(),
            series: Vec::new(),
            y_range: Some((0.0, 1.0)),
        };
        let mut failure_chart = svg::Chart {
            title: format!("{title} — parse failures"),
            x_label: "|alpha|".into(),
            y_label: "parse-failure rate".into(),
            series: Vec::new(),
            y_range: Some((0.0, 1.0)),
        };
        let kinds = [
            (DirectionKind::ProbeYes, "probe toward yes"),
            (DirectionKind::ProbeNo, "probe toward no"),
            (DirectionKind::Orthogonal, "orthogonal baseline"),
        ];
        let mut missing_baseline = true;
        for (i, (kind, name)) in kinds.iter().enumerate() {
            let kept: Vec<&FlipCurveRow> = rows
                .iter()
                .filter(|r| r.direction_kind == *kind && !r.omitted)
                .collect();
            if kept.is_empty() {
                continue;
            }
            if *kind == DirectionKind::Orthogonal {
                missing_baseline = false;
            }
            flip_chart.series.push(svg::Series {
                name: (*name).into(),
                color: svg::PALETTE[i % svg::PALETTE.len()].into(),
                dashed: *kind == DirectionKind::Orthogonal,
                points: kept.iter().map(|r| (r.alpha_abs, r.flip_rate)).collect(),
                band: Some(kept.iter().map(|r| (r.alpha_abs, r.ci_low, r.ci_high)).collect()),
            });
            failure_chart.series.push(svg::Series {
                name: (*name).into(),
                color: svg::PALETTE[i % svg::PALETTE.len()].into(),
                dashed: *kind == DirectionKind::Orthogonal,
                points: rows
                    .iter()
                    .filter(|r| r.direction_kind == *kind)
                    .map(|r| (r.alpha_abs, r.parse_failure_rate))
                    .collect(),
                band: None,
            });
        }
        if missing_baseline {
            flip_chart.title = format!("{} (no baseline run)", flip_chart.title);
        }
        written.push(self.write("flip_curves.svg", flip_chart.render_svg().as_bytes())?);
        written.push(self.write(
            "parse_failures.svg",
            failure_chart.render_svg().as_bytes(),
        )?);
        Ok(written)
    }

    /// `classification_series.csv` plus the moving-average figure.
    pub fn emit_classification_series(
        &self,
        title: &str,
        series: &MovingAverageSeries,
    ) -> Result<Vec<PathBuf>, ReportError> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "alpha_abs",
            "n_non_entailment",
            "n_confabulation",
            "n_hallucination",
            "non_entailment",
            "confabulation",
            "hallucination",
        ])?;
        for i in 0..series.x.len() {
            wtr.write_record([
                series.x[i].to_string(),
                series.counts[i].0.to_string(),
                series.counts[i].1.to_string(),
                series.counts[i].2.to_string(),
                series.non_entailment[i].to_string(),
                series.confabulation[i].to_string(),
                series.hallucination[i].to_string(),
            ])?;
        }
        let csv_bytes = wtr.into_inner().expect("in-memory writer");
        let mut written = vec![self.write("classification_series.csv", &csv_bytes)?];

        let mk = |name: &str, ys: &[f64], color: &str| svg::Series {
            name: name.into(),
            color: color.into(),
            dashed: false,
            points: series.x.iter().copied().zip(ys.iter().copied()).collect(),
            band: None,
        };
        let chart = svg::Chart {
            title: title.to_string(),
            x_label: "|alpha|".into(),
            y_label: format!("relative rate (window {})", series.window),
            series: vec![
                mk("non-entailment", &series.non_entailment, svg::PALETTE[0]),
                mk("confabulation", &series.confabulation, svg::PALETTE[1]),
                mk("hallucination", &series.hallucination, svg::PALETTE[3]),
            ],
            y_range: Some((0.0, 1.0)),
        };
        written.push(self.write(
            "classification_series.svg",
            chart.render_svg().as_bytes(),
        )?);
        Ok(written)
    }

    /// `logit_lens.csv`: top-k tokens for each probe direction.
    pub fn emit_logit_lens(&self, lens: &LogitLens) -> Result<Vec<PathBuf>, ReportError> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["direction", "rank", "token", "logit"])?;
        for (direction, tokens) in [("+w", &lens.positive), ("-w", &lens.negative)] {
            for (rank, tl) in tokens.iter().enumerate() {
                wtr.write_record([
                    direction.to_string(),
                    (rank + 1).to_string(),
                    tl.token.clone(),
                    tl.logit.to_string(),
                ])?;
            }
        }
        let csv_bytes = wtr.into_inner().expect("in-memory writer");
        Ok(vec![self.write("logit_lens.csv", &csv_bytes)?])
    }
}
