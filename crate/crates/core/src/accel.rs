//! Windowed matcher: each query frame only scores reference candidates
//! inside `k` matching ranges of `num + 1` frames, centred on the `k` best
//! candidates of the previous frame. A full sweep is forced every
//! `l_reinit` frames.
//!
//! Matrix cells are computed lazily, only where a scored trajectory reads
//! them.

use crate::descriptor::DescriptorSet;
use crate::diffmatrix::DifferenceMatrix;
use crate::seqmatch::{
    check_inputs, score_candidates, select_match, sort_scores, trajectory_cells, valid_window_range,
    center_row, FrameMatch, MatchError, MatchOutcome, MatchResult, MatcherParams, SeqScore,
};
use crate::stats::{FrameStats, MatchStats};

pub const DEFAULT_L_REINIT: usize = 450;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelParams {
    pub base: MatcherParams,
    /// Number of matching ranges.
    pub k: usize,
    /// Range width; `num / 2` frames each side of the seed.
    pub num: usize,
    /// Full-sweep period in query frames.
    pub l_reinit: usize,
}

impl AccelParams {
    pub fn new(base: MatcherParams, k: usize, num: usize) -> Self {
        Self {
            base,
            k,
            num,
            l_reinit: DEFAULT_L_REINIT,
        }
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        self.base.validate()?;
        if self.k == 0 {
            return Err(MatchError::BadParams("k must be at least 1".into()));
        }
        validate_range_params(self.num, self.l_reinit)
    }

    /// Upper bound on flagged reference frames for a non-reinit frame.
    pub fn candidate_bound(&self) -> usize {
        self.k * (self.num + 1)
    }
}

pub(crate) fn validate_range_params(num: usize, l_reinit: usize) -> Result<(), MatchError> {
    if num < 2 || !num.is_multiple_of(2) {
        return Err(MatchError::BadParams(format!("num must be even and >= 2, got {num}")));
    }
    if l_reinit == 0 {
        return Err(MatchError::BadParams("l_reinit must be at least 1".into()));
    }
    Ok(())
}

/// One matching range, bounds inclusive and clamped to the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchingRange {
    pub seed: usize,
    pub lo: usize,
    pub hi: usize,
}

impl MatchingRange {
    pub fn contains(&self, r: usize) -> bool {
        (self.lo..=self.hi).contains(&r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    flags: Vec<bool>,
    ranges: Vec<MatchingRange>,
}

impl CandidateSet {
    pub fn ranges(&self) -> &[MatchingRange] {
        &self.ranges
    }

    pub fn is_flagged(&self, r: usize) -> bool {
        self.flags.get(r).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Flagged reference indices in ascending order.
    pub fn flagged(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    /// 1-based index of the first range containing `r`.
    pub fn range_label(&self, r: usize) -> Option<usize> {
        self.ranges.iter().position(|g| g.contains(r)).map(|i| i + 1)
    }
}

/// Flags `[T(k) - num/2, T(k) + num/2]` around each of the first `k` seeds
/// in `sorted_scores`, clamped to `[0, ref_count - 1]`.
pub fn seed_candidates(
    sorted_scores: &[SeqScore],
    k: usize,
    num: usize,
    ref_count: usize,
) -> Result<CandidateSet, MatchError> {
    if sorted_scores.len() < k {
        return Err(MatchError::TooFewCandidates {
            needed: k,
            available: sorted_scores.len(),
        });
    }
    let mut flags = vec![false; ref_count];
    let mut ranges = Vec::with_capacity(k);
    if ref_count == 0 {
        return Ok(CandidateSet { flags, ranges });
    }
    let half = num / 2;
    for s in &sorted_scores[..k] {
        let seed = s.ref_index;
        let lo = seed.saturating_sub(half).min(ref_count - 1);
        let hi = (seed + half).min(ref_count - 1);
        for f in &mut flags[lo..=hi] {
            *f = true;
        }
        ranges.push(MatchingRange { seed, lo, hi });
    }
    Ok(CandidateSet { flags, ranges })
}

/// What happened on one frame of the windowed matcher.
pub(crate) struct FrameOutcome<'a> {
    pub reinit: bool,
    pub candidates: Option<&'a CandidateSet>,
    pub chosen: Option<&'a FrameMatch>,
}

/// Chooses `k` per frame. The fixed schedule gives the plain windowed
/// matcher; the online adapter plugs in here.
pub(crate) trait KSchedule {
    type Error: From<MatchError>;
    fn begin_frame(&mut self, n: usize) -> Result<usize, Self::Error>;
    fn end_frame(&mut self, n: usize, outcome: FrameOutcome<'_>) -> Result<(), Self::Error>;
}

struct FixedK(usize);

impl KSchedule for FixedK {
    type Error = MatchError;
    fn begin_frame(&mut self, _: usize) -> Result<usize, MatchError> {
        Ok(self.0)
    }
    fn end_frame(&mut self, _: usize, _: FrameOutcome<'_>) -> Result<(), MatchError> {
        Ok(())
    }
}

fn needed_cells(
    n: usize,
    candidates: &[usize],
    params: &MatcherParams,
    speeds: &[f64],
    rows: usize,
) -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(candidates.len() * speeds.len() * (params.ds + 1));
    for &q in candidates {
        for &v in speeds {
            if params.same_traversal && center_row(v, q, rows).abs_diff(n) <= params.r_window {
                continue;
            }
            cells.extend(trajectory_cells(n, q, v, params.ds, rows));
        }
    }
    cells
}

struct Scored {
    scores: Vec<SeqScore>,
    evals: usize,
    entries: usize,
}

fn score_lazily(
    d: &mut DifferenceMatrix,
    reference: &DescriptorSet,
    query: &DescriptorSet,
    n: usize,
    candidates: &[usize],
    params: &MatcherParams,
    speeds: &[f64],
) -> Result<Scored, MatchError> {
    let cells = needed_cells(n, candidates, params, speeds, d.rows());
    let entries = d.fill_cells(reference, query, &cells)?;
    let (scores, evals) = score_candidates(d, n, candidates, params, speeds)?;
    Ok(Scored { scores, evals, entries })
}

pub(crate) fn run_windowed<S: KSchedule>(
    reference: &DescriptorSet,
    query: &DescriptorSet,
    base: &MatcherParams,
    num: usize,
    l_reinit: usize,
    schedule: &mut S,
) -> Result<MatchOutcome, S::Error> {
    check_inputs(reference, query, base)?;
    validate_range_params(num, l_reinit)?;
    let mut d = DifferenceMatrix::for_sets(reference, query).map_err(MatchError::from)?;
    let speeds = base.speeds();
    let valid_refs = valid_window_range(reference.len(), base.ds);
    let all_candidates: Vec<usize> = valid_refs.clone().collect();
    let frames_range = valid_window_range(query.len(), base.ds);
    let first = frames_range.start;

    let mut stats = MatchStats::default();
    let mut frames = Vec::with_capacity(frames_range.len());
    let mut prev_sorted: Vec<SeqScore> = Vec::new();

    for n in frames_range {
        let k = schedule.begin_frame(n)?;
        let periodic = (n - first).is_multiple_of(l_reinit);
        let mut frame_stats = FrameStats {
            frame: n,
            candidates_scored: 0,
            candidates_flagged: 0,
            seq_evals: 0,
            entries_computed: 0,
            reinit: true,
        };

        let mut candidate_set = None;
        let mut scored = if periodic || prev_sorted.is_empty() {
            frame_stats.candidates_flagged = reference.len();
            score_lazily(&mut d, reference, query, n, &all_candidates, base, &speeds)?
        } else {
            let set = seed_candidates(&prev_sorted, k.min(prev_sorted.len()), num, reference.len())?;
            let candidates: Vec<usize> = set
                .flagged()
                .into_iter()
                .filter(|q| valid_refs.contains(q))
                .collect();
            frame_stats.candidates_flagged = set.count();
            frame_stats.reinit = false;
            let scored = score_lazily(&mut d, reference, query, n, &candidates, base, &speeds)?;
            candidate_set = Some(set);
            scored
        };

        let mut chosen = select_match(&scored.scores, base.r_window);
        if chosen.is_none() && !frame_stats.reinit {
            // Nothing scoreable in the ranges: fall back to a full sweep.
            let retry = score_lazily(&mut d, reference, query, n, &all_candidates, base, &speeds)?;
            scored.evals += retry.evals;
            scored.entries += retry.entries;
            scored.scores = retry.scores;
            frame_stats.reinit = true;
            candidate_set = None;
            chosen = select_match(&scored.scores, base.r_window);
        }

        frame_stats.candidates_scored = scored.scores.len();
        frame_stats.seq_evals = scored.evals;
        frame_stats.entries_computed = scored.entries;
        stats.frames.push(frame_stats);

        schedule.end_frame(
            n,
            FrameOutcome {
                reinit: frame_stats.reinit,
                candidates: candidate_set.as_ref(),
                chosen: chosen.as_ref(),
            },
        )?;
        frames.extend(chosen);

        prev_sorted = scored.scores;
        sort_scores(&mut prev_sorted);
    }

    Ok(MatchOutcome {
        result: MatchResult { frames },
        stats,
    })
}

/// Windowed matching with a fixed number of ranges.
pub fn match_accelerated(
    reference: &DescriptorSet,
    query: &DescriptorSet,
    params: &AccelParams,
) -> Result<MatchOutcome, MatchError> {
    params.validate()?;
    run_windowed(
        reference,
        query,
        &params.base,
        params.num,
        params.l_reinit,
        &mut FixedK(params.k),
    )
}
