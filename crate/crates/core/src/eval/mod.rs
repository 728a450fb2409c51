//! Precision / recall against frame-indexed ground truth.
//!
//! A frame is *accepted* when its confidence is at least the threshold. An
//! accepted frame is a true positive when its reference lies within
//! `tolerance` frames of the ground truth, otherwise a false positive. Every
//! evaluated frame that has a ground-truth match but is not a true positive
//! is a false negative, so `TP + FN` is the number of matchable frames.

mod plot;

pub use plot::{emit_plot, read_curve_csv, render_svg, write_curve_csv, Series};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqmatch::MatchResult;

pub const DEFAULT_TOLERANCE: usize = 2;
pub const DEFAULT_GRID_POINTS: usize = 100;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("match for query frame {frame} has no ground-truth slot (ground truth covers {covered} frames)")]
    FrameMismatch { frame: usize, covered: usize },
    #[error("ground truth maps query {query} to reference {reference}, outside {ref_count} frames")]
    RefOutOfBounds {
        query: usize,
        reference: usize,
        ref_count: usize,
    },
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid is not ascending at position {0}")]
    UnsortedGrid(usize),
    #[error("duplicate ground-truth row for query {0}")]
    DuplicateRow(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    mapping: Vec<Option<usize>>,
    pub tolerance: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GtRow {
    query_index: usize,
    ref_index: usize,
}

impl GroundTruth {
    pub fn new(mapping: Vec<Option<usize>>, tolerance: usize) -> Self {
        Self { mapping, tolerance }
    }

    /// Query frame `i` matches reference frame `i`.
    pub fn identity(frames: usize, tolerance: usize) -> Self {
        Self::new((0..frames).map(Some).collect(), tolerance)
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn get(&self, query: usize) -> Option<usize> {
        self.mapping.get(query).copied().flatten()
    }

    pub fn mapping(&self) -> &[Option<usize>] {
        &self.mapping
    }

    /// Extends coverage to `frames` query frames; new frames have no match.
    pub fn cover(&mut self, frames: usize) {
        if self.mapping.len() < frames {
            self.mapping.resize(frames, None);
        }
    }

    pub fn validate(&self, ref_count: usize) -> Result<(), EvalError> {
        for (query, r) in self.mapping.iter().enumerate() {
            if let Some(reference) = *r {
                if reference >= ref_count {
                    return Err(EvalError::RefOutOfBounds {
                        query,
                        reference,
                        ref_count,
                    });
                }
            }
        }
        Ok(())
    }

    /// Reads `query_index,ref_index` rows; absent queries have no match.
    pub fn read_csv<R: Read>(r: R, tolerance: usize) -> Result<Self, EvalError> {
        let mut mapping: Vec<Option<usize>> = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: GtRow = row?;
            if mapping.len() <= row.query_index {
                mapping.resize(row.query_index + 1, None);
            }
            if mapping[row.query_index].replace(row.ref_index).is_some() {
                return Err(EvalError::DuplicateRow(row.query_index));
            }
        }
        Ok(Self::new(mapping, tolerance))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(["query_index", "ref_index"])?;
        for (q, r) in self.mapping.iter().enumerate() {
            if let Some(r) = r {
                out.serialize(GtRow {
                    query_index: q,
                    ref_index: *r,
                })?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    /// `TP / (TP + FP)`; 1 when nothing was accepted.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    /// `TP / (TP + FN)`; 0 when nothing is matchable.
    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLabel {
    pub query_index: usize,
    pub accepted: bool,
    pub has_truth: bool,
    pub within_tolerance: bool,
}

impl FrameLabel {
    pub fn is_tp(&self) -> bool {
        self.accepted && self.within_tolerance
    }

    pub fn is_fp(&self) -> bool {
        self.accepted && !self.within_tolerance
    }

    pub fn is_fn(&self) -> bool {
        self.has_truth && !self.is_tp()
    }
}

pub fn frame_labels(result: &MatchResult, gt: &GroundTruth, theta: f64) -> Result<Vec<FrameLabel>, EvalError> {
    result
        .frames
        .iter()
        .map(|f| {
            if f.query_index >= gt.len() {
                return Err(EvalError::FrameMismatch {
                    frame: f.query_index,
                    covered: gt.len(),
                });
            }
            let truth = gt.get(f.query_index);
            Ok(FrameLabel {
                query_index: f.query_index,
                accepted: f.confidence >= theta,
                has_truth: truth.is_some(),
                within_tolerance: truth.is_some_and(|y| f.best_ref.abs_diff(y) <= gt.tolerance),
            })
        })
        .collect()
}

pub fn counts_from_labels(labels: &[FrameLabel]) -> Counts {
    labels.iter().fold(Counts::default(), |mut c, l| {
        c.tp += usize::from(l.is_tp());
        c.fp += usize::from(l.is_fp());
        c.fn_ += usize::from(l.is_fn());
        c
    })
}

pub fn label_matches(result: &MatchResult, gt: &GroundTruth, theta: f64) -> Result<Counts, EvalError> {
    Ok(counts_from_labels(&frame_labels(result, gt, theta)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub curve: Vec<PrPoint>,
    /// Largest recall over thresholds with zero false positives.
    pub max_recall_at_full_precision: f64,
}

/// `points` thresholds taken as nearest-rank quantiles of the observed
/// confidences, ascending. Empty when `result` is empty.
pub fn default_thresholds(result: &MatchResult, points: usize) -> Vec<f64> {
    let mut conf: Vec<f64> = result.frames.iter().map(|f| f.confidence).collect();
    if conf.is_empty() || points == 0 {
        return Vec::new();
    }
    conf.sort_by(f64::total_cmp);
    let n = conf.len();
    (0..points)
        .map(|k| {
            let p = if points == 1 { 0.0 } else { k as f64 / (points - 1) as f64 };
            let rank = ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
            conf[rank - 1]
        })
        .collect()
}

pub fn pr_curve(result: &MatchResult, gt: &GroundTruth, thresholds: &[f64]) -> Result<EvalReport, EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if let Some(i) = thresholds.windows(2).position(|w| w[1] < w[0]) {
        return Err(EvalError::UnsortedGrid(i + 1));
    }
    let mut curve = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let c = label_matches(result, gt, threshold)?;
        curve.push(PrPoint {
            threshold,
            precision: c.precision(),
            recall: c.recall(),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        });
    }
    let max_recall_at_full_precision = curve
        .iter()
        .filter(|p| p.fp == 0)
        .map(|p| p.recall)
        .fold(0.0, f64::max);
    Ok(EvalReport {
        curve,
        max_recall_at_full_precision,
    })
}

/// PR curve over [`default_thresholds`]; an empty result gives an empty
/// report.
pub fn evaluate(result: &MatchResult, gt: &GroundTruth) -> Result<EvalReport, EvalError> {
    let grid = default_thresholds(result, DEFAULT_GRID_POINTS);
    if grid.is_empty() {
        return Ok(EvalReport::default());
    }
    pr_curve(result, gt, &grid)
}
