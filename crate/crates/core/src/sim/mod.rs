//! Synchronous CONGEST rounds over a [`Graph`], with a hard per-edge,
//! per-direction, per-round bit budget.
//!
//! Each round has three phases: every active node fills one optional frame
//! per port, the engine checks and delivers frames along the reverse slot,
//! then every active node reads its inbox. Node programs see only their own
//! ID, degree, round number and private randomness.

mod frame;
mod report;
mod schedule;

pub use frame::{ceil_log2, fragment, push_bits, read_bits, rounds_for, Payload};
pub use report::{PhaseSnapshot, PhaseSummary, RunReport, SlackEntry, TrajectoryPoint};
pub use schedule::{Protocol, Schedule, Scheduled, TimedStep};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{Graph, VertexId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(
        "bandwidth violation in round {round}: vertex {vertex} port {port} sent {bits} bits, budget {budget}"
    )]
    BudgetViolation {
        round: u64,
        vertex: VertexId,
        port: usize,
        bits: usize,
        budget: usize,
    },
    #[error("invalid simulation config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Bits per edge-direction per round.
    pub bandwidth_bits: usize,
    pub round_cap: u64,
    pub master_seed: u64,
}

impl SimConfig {
    /// Budget `max(1, ⌈log₂ n⌉)·multiplier`.
    pub fn for_graph(
        g: &Graph,
        multiplier: usize,
        round_cap: u64,
        master_seed: u64,
    ) -> Result<Self, SimError> {
        if multiplier == 0 {
            return Err(SimError::Config("bandwidth multiplier must be >= 1".into()));
        }
        let cfg = SimConfig {
            bandwidth_bits: base_bandwidth(g.n()) * multiplier,
            round_cap,
            master_seed,
        };
        cfg.validate(g)?;
        Ok(cfg)
    }

    pub fn validate(&self, g: &Graph) -> Result<(), SimError> {
        if self.bandwidth_bits < base_bandwidth(g.n()) {
            return Err(SimError::Config(format!(
                "bandwidth {} below ceil(log2 n) = {}",
                self.bandwidth_bits,
                base_bandwidth(g.n())
            )));
        }
        if self.round_cap == 0 {
            return Err(SimError::Config("round cap must be >= 1".into()));
        }
        Ok(())
    }
}

/// `max(1, ⌈log₂ n⌉)`.
pub fn base_bandwidth(n: usize) -> usize {
    ceil_log2(n as u64).max(1) as usize
}

/// What a node may see about itself in a round.
pub struct NodeCtx {
    id: VertexId,
    degree: usize,
    round: u64,
    bandwidth: usize,
    master_seed: u64,
    rng: Option<ChaCha8Rng>,
}

impl NodeCtx {
    pub fn id(&self) -> VertexId {
        self.id
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Private stream for this node and round. Keyed by the master seed with
    /// the ChaCha stream selecting `(id, round)`; successive draws advance the
    /// word position.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        let (seed, id, round) = (self.master_seed, self.id, self.round);
        self.rng.get_or_insert_with(|| node_rng(seed, id, round))
    }
}

pub fn node_rng(master_seed: u64, id: VertexId, round: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((id as u64) << 32) ^ round);
    rng
}

/// Derives an independent 64-bit seed from `(seed, tag)` (SplitMix64
/// finalizer over both words).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-vertex state machine driven by the engine.
pub trait NodeProgram: Send {
    /// Fill at most one frame per port. `out` arrives all `None`.
    fn send(&mut self, ctx: &mut NodeCtx, out: &mut [Option<Payload>]);
    /// Frames sent to this node in the current round, indexed by port.
    fn receive(&mut self, ctx: &mut NodeCtx, inbox: &[Option<Payload>]);
    fn is_done(&self) -> bool;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundStats {
    pub round: u64,
    pub max_bits: usize,
    pub messages: u64,
    pub bits: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub rounds_used: u64,
    pub max_bits_per_edge_round: usize,
    pub total_messages: u64,
    pub total_bits: u64,
    pub timed_out: bool,
}

/// Runs one program per vertex until all report done or the round cap is
/// hit. `observe` sees every node state after each round.
pub fn run<P, F, O>(
    g: &Graph,
    cfg: &SimConfig,
    factory: F,
    mut observe: O,
) -> Result<(EngineStats, Vec<P>), SimError>
where
    P: NodeProgram,
    F: Fn(VertexId, usize) -> P + Sync,
    O: FnMut(&RoundStats, &[P]),
{
    cfg.validate(g)?;
    let n = g.n();
    let offsets = g.offsets();
    let mut states: Vec<P> = (0..n as VertexId)
        .into_par_iter()
        .map(|v| factory(v, g.degree(v)))
        .collect();
    let slots = g.directed_slots();
    let mut outbox: Vec<Option<Payload>> = vec![None; slots];
    let mut inbox: Vec<Option<Payload>> = vec![None; slots];
    let mut done: Vec<bool> = states.iter().map(|s| s.is_done()).collect();
    let mut stats = EngineStats::default();
    let ctx_for = |v: usize, round: u64| NodeCtx {
        id: v as VertexId,
        degree: offsets[v + 1] - offsets[v],
        round,
        bandwidth: cfg.bandwidth_bits,
        master_seed: cfg.master_seed,
        rng: None,
    };

    let mut round = 0u64;
    while !done.iter().all(|&d| d) {
        if round >= cfg.round_cap {
            stats.timed_out = true;
            break;
        }
        states
            .par_iter_mut()
            .zip(split_by_offsets(&mut outbox, offsets).into_par_iter())
            .enumerate()
            .filter(|(v, _)| !done[*v])
            .for_each(|(v, (state, out))| state.send(&mut ctx_for(v, round), out));

        let mut rs = RoundStats {
            round,
            ..RoundStats::default()
        };
        for v in 0..n {
            for slot in offsets[v]..offsets[v + 1] {
                let Some(frame) = outbox[slot].take() else {
                    continue;
                };
                if frame.len() > cfg.bandwidth_bits {
                    return Err(SimError::BudgetViolation {
                        round,
                        vertex: v as VertexId,
                        port: slot - offsets[v],
                        bits: frame.len(),
                        budget: cfg.bandwidth_bits,
                    });
                }
                rs.max_bits = rs.max_bits.max(frame.len());
                rs.messages += 1;
                rs.bits += frame.len() as u64;
                inbox[g.reverse_slot(slot)] = Some(frame);
            }
        }

        states
            .par_iter_mut()
            .zip(split_by_offsets(&mut inbox, offsets).into_par_iter())
            .enumerate()
            .filter(|(v, _)| !done[*v])
            .for_each(|(v, (state, inb))| {
                state.receive(&mut ctx_for(v, round), inb);
                inb.iter_mut().for_each(|f| *f = None);
            });
        for (d, s) in done.iter_mut().zip(&states) {
            *d = *d || s.is_done();
        }

        stats.rounds_used += 1;
        stats.max_bits_per_edge_round = stats.max_bits_per_edge_round.max(rs.max_bits);
        stats.total_messages += rs.messages;
        stats.total_bits += rs.bits;
        observe(&rs, &states);
        round += 1;
    }
    Ok((stats, states))
}

fn split_by_offsets<'a, T>(mut rest: &'a mut [T], offsets: &[usize]) -> Vec<&'a mut [T]> {
    let mut parts = Vec::with_capacity(offsets.len().saturating_sub(1));
    for w in offsets.windows(2) {
        let (head, tail) = rest.split_at_mut(w[1] - w[0]);
        parts.push(head);
        rest = tail;
    }
    parts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, GraphModel};
    use rand::Rng;

    /// Sends its ID once and keeps the maximum seen.
    struct MaxId {
        best: u64,
        width: u32,
        sent: bool,
    }

    impl NodeProgram for MaxId {
        fn send(&mut self, _ctx: &mut NodeCtx, out: &mut [Option<Payload>]) {
            for o in out.iter_mut() {
                let mut p = Payload::new();
                push_bits(&mut p, self.best, self.width);
                *o = Some(p);
            }
        }
        fn receive(&mut self, _ctx: &mut NodeCtx, inbox: &[Option<Payload>]) {
            for f in inbox.iter().flatten() {
                self.best = self.best.max(read_bits(f, &mut 0, self.width));
            }
            self.sent = true;
        }
        fn is_done(&self) -> bool {
            self.sent
        }
    }

    #[test]
    fn single_edge_max_id() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let cfg = SimConfig::for_graph(&g, 1, 10, 0).unwrap();
        let (stats, states) = run(
            &g,
            &cfg,
            |v, _| MaxId { best: v as u64, width: 1, sent: false },
            |_, _| {},
        )
        .unwrap();
        assert_eq!(stats.rounds_used, 1);
        assert_eq!(stats.total_bits, 2);
        assert!(states.iter().all(|s| s.best == 1));
    }

    struct Loud;
    impl NodeProgram for Loud {
        fn send(&mut self, ctx: &mut NodeCtx, out: &mut [Option<Payload>]) {
            let b = ctx.bandwidth();
            for o in out.iter_mut() {
                *o = Some(bitvec::bitvec![u64, bitvec::order::Lsb0; 0; 2 * b]);
            }
        }
        fn receive(&mut self, _: &mut NodeCtx, _: &[Option<Payload>]) {}
        fn is_done(&self) -> bool {
            false
        }
    }

    #[test]
    fn oversized_frame_is_a_violation() {
        let g = generate_graph(&GraphModel::Cycle { n: 16 }, 0).unwrap();
        let cfg = SimConfig::for_graph(&g, 1, 10, 0).unwrap();
        let Err(err) = run(&g, &cfg, |_, _| Loud, |_, _| {}) else {
            panic!("expected a violation");
        };
        assert!(matches!(err, SimError::BudgetViolation { bits: 8, budget: 4, .. }));
    }

    #[test]
    fn config_rejects_small_budget() {
        let g = generate_graph(&GraphModel::Cycle { n: 16 }, 0).unwrap();
        assert!(SimConfig::for_graph(&g, 0, 10, 0).is_err());
        let cfg = SimConfig { bandwidth_bits: 3, round_cap: 5, master_seed: 0 };
        assert!(cfg.validate(&g).is_err());
    }

    /// Gossips private random draws for a few rounds.
    struct Noisy {
        acc: u64,
        left: u32,
    }
    impl NodeProgram for Noisy {
        fn send(&mut self, ctx: &mut NodeCtx, out: &mut [Option<Payload>]) {
            let x: u64 = ctx.rng().gen_range(0..16);
            self.acc = self.acc.wrapping_mul(31).wrapping_add(x);
            for o in out.iter_mut() {
                let mut p = Payload::new();
                push_bits(&mut p, x, 4);
                *o = Some(p);
            }
        }
        fn receive(&mut self, _: &mut NodeCtx, inbox: &[Option<Payload>]) {
            for f in inbox.iter().flatten() {
                self.acc = self.acc.wrapping_mul(17) ^ read_bits(f, &mut 0, 4);
            }
            self.left -= 1;
        }
        fn is_done(&self) -> bool {
            self.left == 0
        }
    }

    #[test]
    fn runs_are_deterministic_and_seed_dependent() {
        let g = generate_graph(&GraphModel::Gnp { n: 300, p: 0.05 }, 2).unwrap();
        let go = |seed| {
            let cfg = SimConfig::for_graph(&g, 1, 100, seed).unwrap();
            let mut trace = Vec::new();
            let (stats, states) = run(
                &g,
                &cfg,
                |_, _| Noisy { acc: 0, left: 5 },
                |rs, _| trace.push(*rs),
            )
            .unwrap();
            (stats, trace, states.iter().map(|s| s.acc).collect::<Vec<_>>())
        };
        assert_eq!(go(1), go(1));
        assert_ne!(go(1).2, go(2).2);
        assert_eq!(go(1).0.rounds_used, 5);
    }

    #[test]
    fn round_cap_times_out() {
        let g = generate_graph(&GraphModel::Path { n: 3 }, 0).unwrap();
        let cfg = SimConfig::for_graph(&g, 2, 3, 0).unwrap();
        let (stats, _) = run(&g, &cfg, |_, _| Noisy { acc: 0, left: 100 }, |_, _| {}).unwrap();
        assert!(stats.timed_out);
        assert_eq!(stats.rounds_used, 3);
    }
}
