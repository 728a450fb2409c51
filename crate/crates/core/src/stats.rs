//! Work counters recorded by the matchers.

use std::io::Write;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameStats {
    pub frame: usize,
    /// Distinct reference candidates whose sequence score was evaluated.
    pub candidates_scored: usize,
    /// Reference frames flagged before boundary filtering (equal to
    /// `candidates_scored` for a full sweep).
    pub candidates_flagged: usize,
    /// Calls to the sequence-difference kernel (one per candidate and speed).
    pub seq_evals: usize,
    /// Matrix cells computed while processing this frame.
    pub entries_computed: usize,
    pub reinit: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchStats {
    /// Cells computed before the per-frame loop (the whole matrix for a full
    /// sweep).
    pub setup_entries: usize,
    pub frames: Vec<FrameStats>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkTotals {
    pub seq_evals: usize,
    pub entries_computed: usize,
    pub candidates_scored: usize,
    pub frames: usize,
    pub reinit_frames: usize,
}

impl WorkTotals {
    /// Sequence evaluations plus matrix cells: the schedule-independent work
    /// proxy used to compare matchers.
    pub fn work(&self) -> usize {
        self.seq_evals + self.entries_computed
    }
}

impl MatchStats {
    pub fn totals(&self) -> WorkTotals {
        self.frames.iter().fold(
            WorkTotals {
                entries_computed: self.setup_entries,
                ..WorkTotals::default()
            },
            |mut t, f| {
                t.seq_evals += f.seq_evals;
                t.entries_computed += f.entries_computed;
                t.candidates_scored += f.candidates_scored;
                t.frames += 1;
                t.reinit_frames += usize::from(f.reinit);
                t
            },
        )
    }

    /// Largest flagged-candidate count over frames that were not full sweeps.
    pub fn max_flagged_non_reinit(&self) -> Option<usize> {
        self.frames
            .iter()
            .filter(|f| !f.reinit)
            .map(|f| f.candidates_flagged)
            .max()
    }

    /// Writes `frame,candidates_scored,entries_computed,reinit_flag`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["frame", "candidates_scored", "entries_computed", "reinit_flag"])?;
        for f in &self.frames {
            out.write_record([
                f.frame.to_string(),
                f.candidates_scored.to_string(),
                f.entries_computed.to_string(),
                u8::from(f.reinit).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-frame and total work counts from a matcher run.
pub fn count_distance_evals(stats: &MatchStats) -> (&[FrameStats], WorkTotals) {
    (&stats.frames, stats.totals())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_counts_nothing() {
        let stats = MatchStats::default();
        let (frames, totals) = count_distance_evals(&stats);
        assert!(frames.is_empty());
        assert_eq!(totals, WorkTotals::default());
        assert_eq!(totals.work(), 0);
        assert_eq!(stats.max_flagged_non_reinit(), None);
    }

    #[test]
    fn csv_layout() {
        let stats = MatchStats {
            setup_entries: 4,
            frames: vec![FrameStats {
                frame: 5,
                candidates_scored: 3,
                candidates_flagged: 3,
                seq_evals: 15,
                entries_computed: 7,
                reinit: true,
            }],
        };
        let mut buf = Vec::new();
        stats.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "frame,candidates_scored,entries_computed,reinit_flag\n5,3,7,1\n"
        );
        assert_eq!(stats.totals().work(), 15 + 11);
    }
}
