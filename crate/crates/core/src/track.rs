//! Per-round bookkeeping shared by the drivers.

use std::sync::Arc;

use crate::sim::{PhaseSnapshot, PhaseSummary, RoundStats, RunReport, Schedule, SlackEntry, TrajectoryPoint};

/// Collects trajectory points and phase-end snapshots for one engine run.
/// Round numbers in the output are shifted by `offset` so that successive
/// runs of a multi-stage driver line up.
pub(crate) struct Recorder<'a, S> {
    schedule: &'a Schedule<S>,
    spans: Vec<(Arc<str>, u64, u64)>,
    offset: u64,
    trajectory: Vec<TrajectoryPoint>,
    snapshots: Vec<PhaseSnapshot>,
}

impl<'a, S: Copy> Recorder<'a, S> {
    pub fn new(schedule: &'a Schedule<S>) -> Self {
        Self::with_offset(schedule, 0)
    }

    pub fn with_offset(schedule: &'a Schedule<S>, offset: u64) -> Self {
        Recorder {
            schedule,
            spans: schedule.phase_spans(),
            offset,
            trajectory: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    /// Records one round. Returns the phase label when this round closes a
    /// phase of the fixed prefix.
    pub fn record(&mut self, rs: &RoundStats, uncolored: u64, max_d: u64) -> Option<String> {
        let label = self.schedule.label_at_round(rs.round).unwrap_or("-").to_string();
        self.trajectory.push(TrajectoryPoint {
            round: rs.round + self.offset,
            label,
            uncolored,
            max_uncolored_degree: max_d,
            max_bits: rs.max_bits as u64,
        });
        self.spans
            .iter()
            .find(|(_, start, len)| start + len == rs.round + 1)
            .map(|(l, _, _)| l.to_string())
    }

    pub fn snapshot(&mut self, label: String, round: u64, entries: Vec<SlackEntry>) {
        self.snapshots.push(PhaseSnapshot { label, round: round + self.offset, entries });
    }

    /// Appends trajectory and phase summaries to `report`.
    pub fn finish(self, report: &mut RunReport) -> Vec<PhaseSnapshot> {
        let after = |end: u64| {
            self.trajectory
                .iter()
                .find(|p| p.round == end + self.offset)
                .map(|p| p.uncolored)
        };
        for (label, start, len) in &self.spans {
            report.phases.push(PhaseSummary {
                label: label.to_string(),
                start_round: start + self.offset,
                rounds: *len,
                uncolored_after: after(start + len - 1),
            });
        }
        let used = self.trajectory.len() as u64;
        let prefix = self.schedule.prefix_rounds();
        if self.schedule.has_cycle() && used > prefix {
            let fallback = used - prefix;
            report.fallback_rounds += fallback;
            report.phases.push(PhaseSummary {
                label: "C".into(),
                start_round: prefix + self.offset,
                rounds: fallback,
                uncolored_after: self.trajectory.last().map(|p| p.uncolored),
            });
        }
        report.trajectory.extend(self.trajectory);
        self.snapshots
    }
}
