use serde::{Deserialize, Serialize};

use super::EngineStats;

/// One engine round as seen by the driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub round: u64,
    pub label: String,
    pub uncolored: u64,
    /// Largest number of uncolored neighbors of an uncolored element.
    pub max_uncolored_degree: u64,
    pub max_bits: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub label: String,
    pub start_round: u64,
    pub rounds: u64,
    /// Uncolored elements when the phase ended, if it ran to completion.
    pub uncolored_after: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rounds_used: u64,
    pub max_bits_per_edge_round: u64,
    pub bandwidth_bits: u64,
    pub total_messages: u64,
    pub total_bits: u64,
    pub timed_out: bool,
    /// Rounds spent in the repeating fallback stage.
    pub fallback_rounds: u64,
    pub trajectory: Vec<TrajectoryPoint>,
    pub phases: Vec<PhaseSummary>,
    /// Notes such as a degenerate family or a missed intermediate target.
    pub flags: Vec<String>,
}

impl RunReport {
    pub fn absorb_engine(&mut self, stats: &EngineStats, bandwidth: usize) {
        self.rounds_used += stats.rounds_used;
        self.max_bits_per_edge_round = self
            .max_bits_per_edge_round
            .max(stats.max_bits_per_edge_round as u64);
        self.bandwidth_bits = self.bandwidth_bits.max(bandwidth as u64);
        self.total_messages += stats.total_messages;
        self.total_bits += stats.total_bits;
        self.timed_out |= stats.timed_out;
    }

    /// Trace lines: round, label, uncolored, max uncolored degree, max bits.
    pub fn trace_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.trajectory.iter().map(|p| {
            format!(
                "round={} phase={} uncolored={} max_dstar={} max_bits={}",
                p.round, p.label, p.uncolored, p.max_uncolored_degree, p.max_bits
            )
        })
    }
}

/// Ground-truth slack of one uncolored element (vertex or edge index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlackEntry {
    pub id: u32,
    pub uncolored_degree: u32,
    /// Free palette colors minus uncolored neighbors.
    pub slack: i64,
}

/// Slack distribution over uncolored elements at the end of a phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSnapshot {
    pub label: String,
    pub round: u64,
    pub entries: Vec<SlackEntry>,
}
