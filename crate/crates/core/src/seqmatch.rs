//! Sequence differences and the full-sweep sequence matcher.
//!
//! For a query frame `n`, candidate `q` and trajectory speed `v`, the
//! sequence difference sums `ds + 1` matrix entries
//!
//! ```text
//! sum(n, q, v) = Σ_{i=0..=ds} D[round(v * (q - ds/2 + i)), n - ds/2 + i]
//! ```
//!
//! with rows rounded half away from zero and clamped into the reference
//! range. The trajectory passes through reference row `round(v * q)` at the
//! middle query frame `n`; that row is the reference frame reported as the
//! match.

use std::io::{Read, Write};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::DescriptorSet;
use crate::diffmatrix::{DifferenceMatrix, MatrixError};
use crate::stats::{FrameStats, MatchStats};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("invalid matcher parameters: {0}")]
    BadParams(String),
    #[error("query window around frame {n} leaves the {cols}-frame query range (ds = {ds})")]
    OutOfSeqRange { n: usize, ds: usize, cols: usize },
    #[error("query has {count} frames, needs more than ds = {ds}")]
    QueryTooShort { count: usize, ds: usize },
    #[error("reference has {count} frames, needs more than ds = {ds}")]
    ReferenceTooShort { count: usize, ds: usize },
    #[error("need {needed} scored candidates to seed ranges, have {available}")]
    TooFewCandidates { needed: usize, available: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("match CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatcherParams {
    /// Sequence length; even, at least 2.
    pub ds: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub v_step: f64,
    /// Recent template range, in frames.
    pub r_window: usize,
    /// Reference and query are the same traversal; recent frames are not
    /// allowed to match.
    pub same_traversal: bool,
}

impl MatcherParams {
    pub const DEFAULT_V_MIN: f64 = 0.8;
    pub const DEFAULT_V_MAX: f64 = 1.2;
    pub const DEFAULT_V_STEP: f64 = 0.1;
    pub const DEFAULT_R_WINDOW: usize = 10;

    pub fn with_ds(ds: usize) -> Self {
        Self {
            ds,
            v_min: Self::DEFAULT_V_MIN,
            v_max: Self::DEFAULT_V_MAX,
            v_step: Self::DEFAULT_V_STEP,
            r_window: Self::DEFAULT_R_WINDOW,
            same_traversal: false,
        }
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: String| Err(MatchError::BadParams(m));
        if self.ds < 2 || !self.ds.is_multiple_of(2) {
            return bad(format!("ds must be even and >= 2, got {}", self.ds));
        }
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_step.is_finite()) {
            return bad("speeds must be finite".into());
        }
        if self.v_min <= 0.0 || self.v_min > self.v_max {
            return bad(format!("need 0 < v_min <= v_max, got [{}, {}]", self.v_min, self.v_max));
        }
        if self.v_step <= 0.0 {
            return bad(format!("v_step must be positive, got {}", self.v_step));
        }
        if (self.v_max - self.v_min) / self.v_step > 10_000.0 {
            return bad("speed sweep has more than 10000 steps".into());
        }
        Ok(())
    }

    pub fn half(&self) -> usize {
        self.ds / 2
    }

    /// `v_min, v_min + v_step, …` up to `v_max` inclusive (within 1e-9).
    /// Each speed is snapped to a 1e-9 grid so that, e.g., the fifth default
    /// speed is exactly the double nearest 1.2.
    pub fn speeds(&self) -> Vec<f64> {
        let steps = ((self.v_max - self.v_min) / self.v_step + 1e-9).floor() as usize;
        (0..=steps)
            .map(|i| ((self.v_min + i as f64 * self.v_step) * 1e9).round() / 1e9)
            .collect()
    }
}

/// Frames `n` whose `ds + 1` window fits inside a sequence of `len` frames.
pub fn valid_window_range(len: usize, ds: usize) -> Range<usize> {
    let half = ds / 2;
    half..len.saturating_sub(half).max(half)
}

/// Rounds half away from zero, then clamps into `[0, rows - 1]`.
/// Truncating cast plus an exact fractional test avoids a libm call in the
/// hot loop; `x - trunc(x)` is exact for every `x` below the clamp.
#[inline]
fn clamp_row(x: f64, rows: usize) -> usize {
    if x.is_nan() || x <= 0.0 {
        return 0;
    }
    if x >= rows as f64 {
        return rows - 1;
    }
    let t = x as usize;
    let r = if x - t as f64 >= 0.5 { t + 1 } else { t };
    r.min(rows - 1)
}

/// Reference row visited at step `i` of the trajectory for candidate `q`.
pub fn trajectory_row(v: f64, q: usize, ds: usize, i: usize, rows: usize) -> usize {
    clamp_row(v * (q as f64 - (ds / 2) as f64 + i as f64), rows)
}

/// Reference frame the trajectory for `(q, v)` passes through at its middle.
pub fn center_row(v: f64, q: usize, rows: usize) -> usize {
    clamp_row(v * q as f64, rows)
}

/// Matrix cells read by [`cal_seq_dif`] for `(n, q, v)`.
pub fn trajectory_cells(
    n: usize,
    q: usize,
    v: f64,
    ds: usize,
    rows: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let first_col = n - ds / 2;
    (0..=ds).map(move |i| (trajectory_row(v, q, ds, i, rows), first_col + i))
}

/// Sum of sequence differences for query frame `n` against candidate `q` at
/// speed `v`.
pub fn cal_seq_dif(
    d: &DifferenceMatrix,
    n: usize,
    q: usize,
    v: f64,
    params: &MatcherParams,
) -> Result<f64, MatchError> {
    let (ds, half) = (params.ds, params.half());
    if n < half || n + half >= d.cols() {
        return Err(MatchError::OutOfSeqRange { n, ds, cols: d.cols() });
    }
    let rows = d.rows();
    let first_col = n - half;
    let start = q as f64 - half as f64;
    let mut sum = 0.0_f64;
    for i in 0..=ds {
        let row = clamp_row(v * (start + i as f64), rows);
        let col = first_col + i;
        match d.cell(row, col) {
            Some(x) => sum += f64::from(x),
            None => return Err(MatrixError::UncomputedEntry { row, col }.into()),
        }
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeqScore {
    pub query_index: usize,
    /// Candidate middle frame `q`.
    pub ref_index: usize,
    /// Reference frame at the trajectory's middle, `round(speed * q)`.
    pub matched_ref: usize,
    pub speed: f64,
    pub score: f64,
}

/// Best speed for one candidate. Pairs whose middle reference frame falls
/// inside the recent-template window are skipped for same-traversal runs.
/// Returns `None` if every speed was skipped. `evals` counts kernel calls.
pub(crate) fn sweep_candidate(
    d: &DifferenceMatrix,
    n: usize,
    q: usize,
    params: &MatcherParams,
    speeds: &[f64],
    evals: &mut usize,
) -> Result<Option<SeqScore>, MatchError> {
    let mut best: Option<SeqScore> = None;
    for &v in speeds {
        let matched_ref = center_row(v, q, d.rows());
        if params.same_traversal && matched_ref.abs_diff(n) <= params.r_window {
            continue;
        }
        *evals += 1;
        let score = cal_seq_dif(d, n, q, v, params)?;
        if best.is_none_or(|b| score < b.score) {
            best = Some(SeqScore {
                query_index: n,
                ref_index: q,
                matched_ref,
                speed: v,
                score,
            });
        }
    }
    Ok(best)
}

/// Minimum sequence difference over the speed sweep; ties go to the smaller
/// speed.
pub fn sweep_speeds(
    d: &DifferenceMatrix,
    n: usize,
    q: usize,
    params: &MatcherParams,
) -> Result<SeqScore, MatchError> {
    let unrestricted = MatcherParams {
        same_traversal: false,
        ..*params
    };
    let mut evals = 0;
    let best = sweep_candidate(d, n, q, &unrestricted, &params.speeds(), &mut evals)?;
    Ok(best.expect("speed sweep always has at least one speed"))
}

/// Scores `candidates` for frame `n`, in the order given. Returns the scores
/// that survived the recent-template filter and the kernel call count.
pub(crate) fn score_candidates(
    d: &DifferenceMatrix,
    n: usize,
    candidates: &[usize],
    params: &MatcherParams,
    speeds: &[f64],
) -> Result<(Vec<SeqScore>, usize), MatchError> {
    let per: Vec<(Option<SeqScore>, usize)> = candidates
        .par_iter()
        .map(|&q| {
            let mut evals = 0;
            sweep_candidate(d, n, q, params, speeds, &mut evals).map(|s| (s, evals))
        })
        .collect::<Result<_, _>>()?;
    let evals = per.iter().map(|p| p.1).sum();
    Ok((per.into_iter().filter_map(|p| p.0).collect(), evals))
}

/// Orders scores ascending, ties broken by the smaller candidate index.
pub fn sort_scores(scores: &mut [SeqScore]) {
    scores.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.ref_index.cmp(&b.ref_index)));
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMatch {
    pub query_index: usize,
    /// Winning candidate `q`; equals `best_ref` whenever the winning speed is 1.
    pub candidate: usize,
    /// Matched reference frame.
    pub best_ref: usize,
    pub speed: f64,
    pub best_score: f64,
    /// Best score among candidates whose reference frame lies more than
    /// `r_window` frames from `best_ref`.
    pub second_score: Option<f64>,
    /// `second_score / best_score`; infinite when no competitor exists or
    /// the best score is exactly zero.
    pub confidence: f64,
    pub matched: bool,
}

pub fn confidence_ratio(best: f64, second: Option<f64>) -> f64 {
    match second {
        None => f64::INFINITY,
        Some(s) if best == 0.0 => {
            if s == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        }
        Some(s) => s / best,
    }
}

/// Picks the winner among `scored` and its ratio-test confidence.
pub(crate) fn select_match(scored: &[SeqScore], r_window: usize) -> Option<FrameMatch> {
    let best = scored.iter().min_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.ref_index.cmp(&b.ref_index))
    })?;
    let second = scored
        .iter()
        .filter(|s| s.matched_ref.abs_diff(best.matched_ref) > r_window)
        .map(|s| s.score)
        .min_by(f64::total_cmp);
    Some(FrameMatch {
        query_index: best.query_index,
        candidate: best.ref_index,
        best_ref: best.matched_ref,
        speed: best.speed,
        best_score: best.score,
        second_score: second,
        confidence: confidence_ratio(best.score, second),
        matched: false,
    })
}

/// Per-frame matches for the query frames that received one, in frame order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub frames: Vec<FrameMatch>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    query_index: usize,
    best_ref: usize,
    best_score: f64,
    second_score: Option<f64>,
    confidence: f64,
    speed: f64,
}

impl MatchResult {
    pub fn frame(&self, n: usize) -> Option<&FrameMatch> {
        self.frames
            .binary_search_by_key(&n, |f| f.query_index)
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn best_ref(&self, n: usize) -> Option<usize> {
        self.frame(n).map(|f| f.best_ref)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Marks frames with `confidence >= theta` as matched.
    pub fn apply_threshold(&mut self, theta: f64) {
        for f in &mut self.frames {
            f.matched = f.confidence >= theta;
        }
    }

    /// Writes `query_index,best_ref,best_score,second_score,confidence,speed`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MatchError> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(["query_index", "best_ref", "best_score", "second_score", "confidence", "speed"])?;
        for f in &self.frames {
            out.serialize(CsvRow {
                query_index: f.query_index,
                best_ref: f.best_ref,
                best_score: f.best_score,
                second_score: f.second_score,
                confidence: f.confidence,
                speed: f.speed,
            })?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the CSV written by [`MatchResult::write_csv`]. The candidate
    /// index is not stored, so it is set to `best_ref`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, MatchError> {
        let mut frames = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: CsvRow = row?;
            frames.push(FrameMatch {
                query_index: row.query_index,
                candidate: row.best_ref,
                best_ref: row.best_ref,
                speed: row.speed,
                best_score: row.best_score,
                second_score: row.second_score,
                confidence: row.confidence,
                matched: false,
            });
        }
        frames.sort_by_key(|f| f.query_index);
        Ok(Self { frames })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub result: MatchResult,
    pub stats: MatchStats,
}

pub(crate) fn check_inputs(
    reference: &DescriptorSet,
    query: &DescriptorSet,
    params: &MatcherParams,
) -> Result<(), MatchError> {
    params.validate()?;
    if reference.dim() != query.dim() {
        return Err(MatrixError::DimMismatch {
            reference: reference.dim(),
            query: query.dim(),
        }
        .into());
    }
    if query.len() <= params.ds {
        return Err(MatchError::QueryTooShort {
            count: query.len(),
            ds: params.ds,
        });
    }
    if reference.len() <= params.ds {
        return Err(MatchError::ReferenceTooShort {
            count: reference.len(),
            ds: params.ds,
        });
    }
    Ok(())
}

/// Full sweep: builds the whole matrix and scores every candidate with a
/// complete reference window for every query frame with a complete window.
pub fn match_all(
    reference: &DescriptorSet,
    query: &DescriptorSet,
    params: &MatcherParams,
) -> Result<MatchOutcome, MatchError> {
    check_inputs(reference, query, params)?;
    let d = DifferenceMatrix::build_full(reference, query)?;
    let speeds = params.speeds();
    let candidates: Vec<usize> = valid_window_range(d.rows(), params.ds).collect();

    let per_frame: Vec<(Option<FrameMatch>, FrameStats)> = valid_window_range(d.cols(), params.ds)
        .into_par_iter()
        .map(|n| {
            let (scored, evals) = score_candidates(&d, n, &candidates, params, &speeds)?;
            let stats = FrameStats {
                frame: n,
                candidates_scored: scored.len(),
                candidates_flagged: candidates.len(),
                seq_evals: evals,
                entries_computed: 0,
                reinit: true,
            };
            Ok((select_match(&scored, params.r_window), stats))
        })
        .collect::<Result<_, MatchError>>()?;

    let mut stats = MatchStats {
        setup_entries: d.computed_entries(),
        frames: Vec::with_capacity(per_frame.len()),
    };
    let mut frames = Vec::with_capacity(per_frame.len());
    for (m, s) in per_frame {
        frames.extend(m);
        stats.frames.push(s);
    }
    Ok(MatchOutcome {
        result: MatchResult { frames },
        stats,
    })
}
