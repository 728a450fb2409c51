//! Online adjustment of the number of matching ranges.
//!
//! Each matched frame records the 1-based index of the range that held its
//! match (its image matching label). While the scene changes at a steady
//! rate, every `t_window` labels shrink `k` to the largest recent label. A
//! change-degree reading outside `[cd_low, cd_high]` restores the initial
//! `k` immediately.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::accel::{run_windowed, CandidateSet, FrameOutcome, KSchedule};
use crate::descriptor::DescriptorSet;
use crate::seqmatch::{MatchError, MatchOutcome, MatcherParams};

/// Frames compared on each side of the change-degree ratio.
pub const CHANGE_HISTORY: usize = 10;

#[derive(Debug, Error)]
pub enum OnlineError {
    #[error("change degree at frame {n} needs frames {needed}..={n}")]
    InsufficientHistory { n: usize, needed: isize },
    #[error("chosen reference {chosen} lies in no matching range")]
    NotInAnyRange { chosen: usize },
    #[error("invalid online parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineParams {
    pub initial_k: usize,
    pub num: usize,
    /// Labels per adaptation batch; `usize::MAX` disables shrinking.
    pub t_window: usize,
    pub cd_low: f64,
    pub cd_high: f64,
}

impl Default for OnlineParams {
    fn default() -> Self {
        Self {
            initial_k: 30,
            num: 16,
            t_window: 10,
            cd_low: 0.9,
            cd_high: 1.1,
        }
    }
}

impl OnlineParams {
    pub fn validate(&self) -> Result<(), OnlineError> {
        if self.initial_k == 0 {
            return Err(OnlineError::BadParams("initial_k must be at least 1".into()));
        }
        if self.t_window == 0 {
            return Err(OnlineError::BadParams("t_window must be at least 1".into()));
        }
        if self.cd_low.is_nan() || self.cd_high.is_nan() || !(0.0 < self.cd_low && self.cd_low < self.cd_high) {
            return Err(OnlineError::BadParams(format!(
                "need 0 < cd_low < cd_high, got [{}, {}]",
                self.cd_low, self.cd_high
            )));
        }
        Ok(())
    }

    pub fn in_band(&self, cd: f64) -> bool {
        (self.cd_low..=self.cd_high).contains(&cd)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Change degree of the last row of `history`.
///
/// With `X_n` the last row, the numerator sums the distances from `X_n` to
/// `X_{n-10} … X_{n-1}` and the denominator the distances from `X_{n-1}` to
/// `X_{n-11} … X_{n-2}`, so the last twelve rows are read. A zero
/// denominator (a frozen scene) reads as 1.
pub fn change_degree<R: AsRef<[f64]>>(history: &[R]) -> Result<f64, OnlineError> {
    let len = history.len();
    if len < CHANGE_HISTORY + 2 {
        let n = len.saturating_sub(1);
        return Err(OnlineError::InsufficientHistory {
            n,
            needed: n as isize - (CHANGE_HISTORY as isize + 1),
        });
    }
    let row = |i: usize| history[i].as_ref();
    let n = len - 1;
    let numerator: f64 = (n - CHANGE_HISTORY..n).map(|i| distance(row(n), row(i))).sum();
    let denominator: f64 = (n - CHANGE_HISTORY..n).map(|i| distance(row(n - 1), row(i - 1))).sum();
    if denominator == 0.0 {
        return Ok(1.0);
    }
    Ok(numerator / denominator)
}

/// Change degree at query frame `n` of `set`.
pub fn change_degree_at(set: &DescriptorSet, n: usize) -> Result<f64, OnlineError> {
    if n < CHANGE_HISTORY + 1 || n >= set.len() {
        return Err(OnlineError::InsufficientHistory {
            n,
            needed: n as isize - (CHANGE_HISTORY as isize + 1),
        });
    }
    let rows: Vec<Vec<f64>> = (n - CHANGE_HISTORY - 1..=n)
        .map(|i| set.row(i).iter().map(|&v| f64::from(v)).collect())
        .collect();
    change_degree(&rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptState {
    pub iml_buffer: VecDeque<usize>,
    pub t_count: usize,
    pub current_k: usize,
}

impl AdaptState {
    pub fn new(initial_k: usize) -> Self {
        Self {
            iml_buffer: VecDeque::new(),
            t_count: 0,
            current_k: initial_k,
        }
    }
}

/// Appends the label of the first range containing `chosen`.
pub fn record_iml(
    state: &mut AdaptState,
    candidates: &CandidateSet,
    chosen: usize,
    params: &OnlineParams,
) -> Result<usize, OnlineError> {
    let label = candidates
        .range_label(chosen)
        .ok_or(OnlineError::NotInAnyRange { chosen })?;
    push_label(state, label, params);
    Ok(label)
}

fn push_label(state: &mut AdaptState, label: usize, params: &OnlineParams) {
    state.iml_buffer.push_back(label);
    if state.iml_buffer.len() > params.t_window {
        state.iml_buffer.pop_front();
    }
    state.t_count += 1;
}

/// Applies the change-degree gate. Returns `true` if `k` was reset.
pub fn maybe_update_k(state: &mut AdaptState, cd: f64, params: &OnlineParams) -> bool {
    if params.in_band(cd) {
        if state.t_count >= params.t_window {
            if let Some(&max) = state.iml_buffer.iter().max() {
                state.current_k = max;
            }
            state.iml_buffer.clear();
            state.t_count = 0;
        }
        false
    } else {
        state.current_k = params.initial_k;
        state.iml_buffer.clear();
        state.t_count = 0;
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KTraceRow {
    pub frame: usize,
    /// `None` while fewer than twelve query frames are available.
    pub change_degree: Option<f64>,
    pub current_k: usize,
    pub iml: Option<usize>,
    pub reset_flag: bool,
}

pub fn write_k_trace<W: Write>(rows: &[KTraceRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frame", "change_degree", "current_k", "iml", "reset_flag"])?;
    for r in rows {
        out.write_record([
            r.frame.to_string(),
            r.change_degree.map(|c| c.to_string()).unwrap_or_default(),
            r.current_k.to_string(),
            r.iml.map(|i| i.to_string()).unwrap_or_default(),
            u8::from(r.reset_flag).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

struct Adaptive<'a> {
    query: &'a DescriptorSet,
    params: OnlineParams,
    state: AdaptState,
    trace: Vec<KTraceRow>,
}

impl KSchedule for Adaptive<'_> {
    type Error = OnlineError;

    fn begin_frame(&mut self, n: usize) -> Result<usize, OnlineError> {
        let cd = match change_degree_at(self.query, n) {
            Ok(cd) => Some(cd),
            Err(OnlineError::InsufficientHistory { .. }) => None,
            Err(e) => return Err(e),
        };
        // Without enough history the scene counts as steady.
        let reset = maybe_update_k(&mut self.state, cd.unwrap_or(1.0), &self.params);
        self.trace.push(KTraceRow {
            frame: n,
            change_degree: cd,
            current_k: self.state.current_k,
            iml: None,
            reset_flag: reset,
        });
        Ok(self.state.current_k)
    }

    fn end_frame(&mut self, _: usize, outcome: FrameOutcome<'_>) -> Result<(), OnlineError> {
        let Some(chosen) = outcome.chosen else {
            return Ok(());
        };
        let label = match outcome.candidates {
            Some(set) if !outcome.reinit => record_iml(&mut self.state, set, chosen.candidate, &self.params)?,
            _ => {
                push_label(&mut self.state, 1, &self.params);
                1
            }
        };
        if let Some(row) = self.trace.last_mut() {
            row.iml = Some(label);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineOutcome {
    pub outcome: MatchOutcome,
    pub trace: Vec<KTraceRow>,
}

/// Windowed matching with `k` adapted online.
pub fn match_online(
    reference: &DescriptorSet,
    query: &DescriptorSet,
    base: &MatcherParams,
    l_reinit: usize,
    params: &OnlineParams,
) -> Result<OnlineOutcome, OnlineError> {
    params.validate()?;
    let mut schedule = Adaptive {
        query,
        params: *params,
        state: AdaptState::new(params.initial_k),
        trace: Vec::new(),
    };
    let outcome = run_windowed(reference, query, base, params.num, l_reinit, &mut schedule)?;
    Ok(OnlineOutcome {
        outcome,
        trace: schedule.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel::seed_candidates;
    use crate::seqmatch::SeqScore;
    use approx::assert_abs_diff_eq;

    fn seeds(qs: &[usize], num: usize) -> CandidateSet {
        let scores: Vec<_> = qs
            .iter()
            .enumerate()
            .map(|(i, &q)| SeqScore {
                query_index: 0,
                ref_index: q,
                matched_ref: q,
                speed: 1.0,
                score: i as f64,
            })
            .collect();
        seed_candidates(&scores, qs.len(), num, 1000).unwrap()
    }

    #[test]
    fn identical_frames_read_as_no_change() {
        let rows = vec![vec![0.6, 0.8]; 12];
        assert_eq!(change_degree(&rows).unwrap(), 1.0);
    }

    #[test]
    fn history_must_cover_twelve_frames() {
        let rows = vec![vec![1.0, 0.0]; 11];
        assert!(matches!(change_degree(&rows), Err(OnlineError::InsufficientHistory { .. })));
    }

    // A great circle at constant angular step: every chord to a frame k
    // steps back has the same length, so numerator and denominator agree.
    #[test]
    fn constant_drift_is_steady() {
        let eps = 0.05_f64;
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let a = i as f64 * eps;
                vec![a.cos(), a.sin(), 0.0]
            })
            .collect();
        let cd = change_degree(&rows).unwrap();
        assert_abs_diff_eq!(cd, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn jump_after_stationary_history() {
        // Eleven nearly identical frames then an orthogonal one.
        let mut rows: Vec<Vec<f64>> = (0..11)
            .map(|i| {
                let a = i as f64 * 0.01;
                vec![a.cos(), a.sin(), 0.0]
            })
            .collect();
        rows.push(vec![0.0, 0.0, 1.0]);
        let cd = change_degree(&rows).unwrap();
        assert!(cd > 1.2, "cd = {cd}");
    }

    #[test]
    fn labels_use_first_containing_range() {
        let p = OnlineParams::default();
        let mut st = AdaptState::new(30);
        let set = seeds(&[100, 200, 205], 16);
        assert_eq!(record_iml(&mut st, &set, 101, &p).unwrap(), 1);
        assert_eq!(record_iml(&mut st, &set, 203, &p).unwrap(), 2);
        assert_eq!(record_iml(&mut st, &set, 212, &p).unwrap(), 3);
        assert!(matches!(
            record_iml(&mut st, &set, 500, &p),
            Err(OnlineError::NotInAnyRange { chosen: 500 })
        ));
        assert_eq!(st.t_count, 3);
        assert_eq!(st.iml_buffer, [1, 2, 3]);
    }

    #[test]
    fn full_batch_shrinks_k() {
        let p = OnlineParams::default();
        let mut st = AdaptState::new(30);
        for label in [1, 2, 3, 1, 1, 2, 3, 1, 1, 1] {
            push_label(&mut st, label, &p);
        }
        assert!(!maybe_update_k(&mut st, 1.0, &p));
        assert_eq!(st.current_k, 3);
        assert_eq!(st.t_count, 0);
        assert!(st.iml_buffer.is_empty());
    }

    #[test]
    fn partial_batch_keeps_k() {
        let p = OnlineParams::default();
        let mut st = AdaptState::new(30);
        for _ in 0..4 {
            push_label(&mut st, 1, &p);
        }
        assert!(!maybe_update_k(&mut st, 1.0, &p));
        assert_eq!(st.current_k, 30);
        assert_eq!(st.t_count, 4);
    }

    #[test]
    fn out_of_band_resets() {
        let p = OnlineParams::default();
        let mut st = AdaptState {
            iml_buffer: VecDeque::from(vec![1, 1]),
            t_count: 2,
            current_k: 2,
        };
        assert!(maybe_update_k(&mut st, 1.5, &p));
        assert_eq!(st, AdaptState::new(30));
        st.current_k = 4;
        assert!(maybe_update_k(&mut st, 0.5, &p));
        assert_eq!(st.current_k, 30);
        // Band edges are inclusive.
        assert!(!maybe_update_k(&mut st, 0.9, &p));
        assert!(!maybe_update_k(&mut st, 1.1, &p));
    }

    #[test]
    fn gate_disabled_converges_after_one_batch() {
        let p = OnlineParams {
            cd_low: f64::MIN_POSITIVE,
            cd_high: f64::INFINITY,
            ..OnlineParams::default()
        };
        let mut st = AdaptState::new(30);
        for frame in 0..p.t_window {
            maybe_update_k(&mut st, 1.0, &p);
            assert_eq!(st.current_k, 30, "frame {frame}");
            push_label(&mut st, 1, &p);
        }
        maybe_update_k(&mut st, 1.0, &p);
        assert_eq!(st.current_k, 1);
    }

    #[test]
    fn params_validation() {
        assert!(OnlineParams::default().validate().is_ok());
        assert!(OnlineParams { initial_k: 0, ..Default::default() }.validate().is_err());
        assert!(OnlineParams { t_window: 0, ..Default::default() }.validate().is_err());
        assert!(OnlineParams { cd_low: 1.2, ..Default::default() }.validate().is_err());
        assert!(OnlineParams { cd_low: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let rows = [
            KTraceRow { frame: 5, change_degree: None, current_k: 30, iml: Some(1), reset_flag: false },
            KTraceRow { frame: 12, change_degree: Some(1.25), current_k: 30, iml: None, reset_flag: true },
        ];
        let mut buf = Vec::new();
        write_k_trace(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "frame,change_degree,current_k,iml,reset_flag\n5,,30,1,0\n12,1.25,30,,1\n"
        );
    }
}
