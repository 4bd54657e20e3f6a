//! Edge coloring on vertex nodes. Each edge is driven by its endpoint with
//! the higher ID (the leader); the other endpoint (the follower) mirrors the
//! edge's trial state. Colors are `[k]` for a variant-specific `k`.
//!
//! A trial call shares a sampled palette: the leader sends a set index, the
//! follower answers with the mask of that set's colors free at its end, and
//! the leader returns its own free mask with the tried subset. Each endpoint
//! then reports which tried colors are unique among its incident edges, and
//! the leader adopts the smallest color unique at both ends.

use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, VertexId};
use crate::plan::{build_plan, choose_family, Plan, RunParams};
use crate::repset::RepFamily;
use crate::sim::{
    self, base_bandwidth, ceil_log2, push_bits, read_bits, rounds_for, NodeCtx, Payload, PhaseSnapshot, Protocol,
    RoundStats, RunReport, Schedule, Scheduled, SimConfig, SlackEntry, TimedStep,
};
use crate::track::Recorder;
use crate::vcolor::ColorError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum EdgeVariant {
    /// Palette `⌈(2+ε)Δ⌉`.
    TwoPlus { epsilon: f64 },
    /// Palette `2Δ−1`.
    TwoDeltaMinusOne,
    /// Palette `⌈(1+ε)Δ⌉` via a nibble phase.
    OnePlus { epsilon: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EStep {
    Ids,
    /// Each endpoint marks each uncolored edge; an edge takes part if either
    /// end marked it. `exact` marks `round(prob·u)` of the `u` uncolored
    /// edges instead of independent coins.
    Mark { prob: f64, exact: bool },
    /// Every uncolored edge takes part.
    Activate,
    Index,
    FollowerMask,
    LeaderTrials { x: u32 },
    /// One uniform pick from the sampled palette.
    Tentative,
    /// One uniform pick from the leader's palette, without sampling.
    SingleTry,
    Unique { width: u32 },
    Decide { width: u32 },
}

#[derive(Clone, Debug, Default)]
struct PortTrial {
    idx: u64,
    /// Positions of the sampled set free at both ends (leader after
    /// FollowerMask, follower after LeaderTrials); the follower keeps its own
    /// free mask here until then.
    free: FixedBitSet,
    /// Tried colors in ascending order.
    trials: Vec<u32>,
    my_ok: Vec<bool>,
    their_ok: Vec<bool>,
}

pub struct EdgeNode {
    family: Arc<RepFamily>,
    palette: u32,
    id_bits: u32,
    id: VertexId,
    leads: FixedBitSet,
    port_color: Vec<Option<u32>>,
    used: FixedBitSet,
    uncolored: usize,
    active: FixedBitSet,
    marked: FixedBitSet,
    ports: Vec<PortTrial>,
}

impl EdgeNode {
    pub fn new(family: Arc<RepFamily>, palette: u32, id_bits: u32, degree: usize) -> Self {
        EdgeNode {
            family,
            palette,
            id_bits,
            id: 0,
            leads: FixedBitSet::with_capacity(degree),
            port_color: vec![None; degree],
            used: FixedBitSet::with_capacity(palette as usize),
            uncolored: degree,
            active: FixedBitSet::with_capacity(degree),
            marked: FixedBitSet::with_capacity(degree),
            ports: vec![PortTrial::default(); degree],
        }
    }

    pub fn port_colors(&self) -> &[Option<u32>] {
        &self.port_color
    }

    /// Colors this node knows are on its incident edges.
    pub fn known_used(&self) -> &FixedBitSet {
        &self.used
    }

    fn degree(&self) -> usize {
        self.port_color.len()
    }

    fn adopt(&mut self, p: usize, c: u32) {
        debug_assert!(self.port_color[p].is_none() && !self.used.contains(c as usize));
        self.port_color[p] = Some(c);
        self.used.insert(c as usize);
        self.uncolored -= 1;
    }

    fn active_ports(&self, leading: bool) -> Vec<usize> {
        self.active.ones().filter(|&p| self.leads.contains(p) == leading).collect()
    }

    fn free_mask(&self, set: &[u32]) -> FixedBitSet {
        let mut m = FixedBitSet::with_capacity(set.len());
        for (j, &c) in set.iter().enumerate() {
            if !self.used.contains(c as usize) {
                m.insert(j);
            }
        }
        m
    }

    fn set_trials(&mut self, p: usize, trials: Vec<u32>) {
        let t = &mut self.ports[p];
        t.trials = trials;
        t.my_ok.clear();
        t.their_ok.clear();
    }

    fn reset_trials(&mut self) {
        for t in &mut self.ports {
            t.trials.clear();
        }
    }
}

fn mask_payload(out: &mut Payload, mask: &FixedBitSet, width: usize) {
    let at = out.len();
    out.resize(at + width, false);
    for j in mask.ones() {
        out.set(at + j, true);
    }
}

fn read_mask(f: &Payload, pos: &mut usize, width: usize) -> FixedBitSet {
    let mut m = FixedBitSet::with_capacity(width);
    let end = (*pos + width).min(f.len());
    if *pos < end {
        for j in f[*pos..end].iter_ones() {
            m.insert(j);
        }
    }
    *pos += width;
    m
}

impl Protocol for EdgeNode {
    type Step = EStep;

    fn send(&mut self, step: EStep, ctx: &mut NodeCtx, out: &mut [Option<Payload>]) {
        let params = *self.family.params();
        match step {
            EStep::Ids => {
                self.id = ctx.id();
                let mut p = Payload::new();
                push_bits(&mut p, ctx.id() as u64, self.id_bits);
                out.iter_mut().for_each(|o| *o = Some(p.clone()));
            }
            EStep::Mark { prob, exact } => {
                self.reset_trials();
                self.marked.clear();
                let open: Vec<usize> = (0..self.degree()).filter(|&p| self.port_color[p].is_none()).collect();
                if exact {
                    let take = ((prob * open.len() as f64).round() as usize).min(open.len());
                    for j in index::sample(ctx.rng(), open.len(), take) {
                        self.marked.insert(open[j]);
                    }
                } else {
                    for &p in &open {
                        if ctx.rng().gen_bool(prob.clamp(0.0, 1.0)) {
                            self.marked.insert(p);
                        }
                    }
                }
                for p in self.marked.ones() {
                    let mut f = Payload::new();
                    push_bits(&mut f, 1, 1);
                    out[p] = Some(f);
                }
            }
            EStep::Activate => {}
            EStep::Index => {
                for p in self.active_ports(true) {
                    let i = self.family.sample_index(ctx.rng());
                    self.ports[p].idx = i;
                    if params.index_bits() == 0 {
                        continue;
                    }
                    let mut f = Payload::new();
                    push_bits(&mut f, i, params.index_bits());
                    out[p] = Some(f);
                }
            }
            EStep::FollowerMask => {
                let fam = Arc::clone(&self.family);
                for p in self.active_ports(false) {
                    let set = fam.get_set(self.ports[p].idx).expect("index in range");
                    let m = self.free_mask(&set);
                    let mut f = Payload::new();
                    mask_payload(&mut f, &m, params.s as usize);
                    self.ports[p].free = m;
                    out[p] = Some(f);
                }
            }
            EStep::LeaderTrials { x } => {
                self.reset_trials();
                let fam = Arc::clone(&self.family);
                for p in self.active_ports(true) {
                    let set = fam.get_set(self.ports[p].idx).expect("index in range");
                    let sampled: Vec<usize> = self.ports[p].free.ones().collect();
                    let take = (x as usize).min(sampled.len());
                    let mut chosen: Vec<usize> =
                        index::sample(ctx.rng(), sampled.len(), take).into_iter().map(|j| sampled[j]).collect();
                    chosen.sort_unstable();
                    let mut xmask = FixedBitSet::with_capacity(params.s as usize);
                    chosen.iter().for_each(|&j| xmask.insert(j));
                    let mut f = Payload::new();
                    mask_payload(&mut f, &self.free_mask(&set), params.s as usize);
                    mask_payload(&mut f, &xmask, params.s as usize);
                    out[p] = Some(f);
                    let trials = chosen.iter().map(|&j| set[j]).collect();
                    self.set_trials(p, trials);
                }
            }
            EStep::Tentative => {
                self.reset_trials();
                let fam = Arc::clone(&self.family);
                for p in self.active_ports(true) {
                    let sampled: Vec<usize> = self.ports[p].free.ones().collect();
                    if sampled.is_empty() {
                        continue;
                    }
                    let set = fam.get_set(self.ports[p].idx).expect("index in range");
                    let c = set[sampled[ctx.rng().gen_range(0..sampled.len())]];
                    let mut f = Payload::new();
                    push_bits(&mut f, c as u64, params.color_bits());
                    out[p] = Some(f);
                    self.set_trials(p, vec![c]);
                }
            }
            EStep::SingleTry => {
                self.reset_trials();
                self.active.clear();
                for p in 0..self.degree() {
                    if self.port_color[p].is_none() {
                        self.active.insert(p);
                    }
                }
                let free = self.palette as usize - self.used.count_ones(..);
                for p in self.active_ports(true) {
                    if free == 0 {
                        break;
                    }
                    let r = ctx.rng().gen_range(0..free);
                    let c = self.used.zeroes().nth(r).expect("r < free") as u32;
                    let mut f = Payload::new();
                    push_bits(&mut f, c as u64, params.color_bits());
                    out[p] = Some(f);
                    self.set_trials(p, vec![c]);
                }
            }
            EStep::Unique { width } => {
                let mut once = FixedBitSet::with_capacity(self.palette as usize);
                let mut twice = FixedBitSet::with_capacity(self.palette as usize);
                for p in self.active.ones() {
                    for &c in &self.ports[p].trials {
                        if once.contains(c as usize) {
                            twice.insert(c as usize);
                        }
                        once.insert(c as usize);
                    }
                }
                for p in self.active.ones() {
                    let ok: Vec<bool> = self.ports[p]
                        .trials
                        .iter()
                        .map(|&c| !twice.contains(c as usize) && !self.used.contains(c as usize))
                        .collect();
                    if !self.leads.contains(p) && !self.ports[p].trials.is_empty() {
                        let mut f = Payload::new();
                        f.resize(width as usize, false);
                        for (j, &b) in ok.iter().enumerate() {
                            f.set(j, b);
                        }
                        out[p] = Some(f);
                    }
                    self.ports[p].my_ok = ok;
                }
            }
            EStep::Decide { width } => {
                let bits = ceil_log2(width as u64).max(1);
                for p in self.active_ports(true) {
                    let t = &self.ports[p];
                    let pick = (0..t.trials.len()).find(|&j| {
                        t.my_ok.get(j).copied().unwrap_or(false) && t.their_ok.get(j).copied().unwrap_or(false)
                    });
                    if let Some(j) = pick {
                        let c = t.trials[j];
                        self.adopt(p, c);
                        let mut f = Payload::new();
                        push_bits(&mut f, j as u64, bits);
                        out[p] = Some(f);
                    }
                }
            }
        }
    }

    fn receive(&mut self, step: EStep, _ctx: &mut NodeCtx, inbox: &[Option<Payload>]) {
        let params = *self.family.params();
        match step {
            EStep::Ids => {
                for (p, f) in inbox.iter().enumerate() {
                    let theirs = f.as_ref().map(|f| read_bits(f, &mut 0, self.id_bits)).unwrap_or(0);
                    self.leads.set(p, self.id as u64 > theirs);
                }
            }
            EStep::Mark { .. } => {
                self.active.clear();
                for (p, frame) in inbox.iter().enumerate() {
                    if self.port_color[p].is_none() && (self.marked.contains(p) || frame.is_some()) {
                        self.active.insert(p);
                    }
                }
            }
            EStep::Activate => {
                self.reset_trials();
                self.active.clear();
                for p in 0..self.degree() {
                    if self.port_color[p].is_none() {
                        self.active.insert(p);
                    }
                }
            }
            EStep::Index => {
                for p in self.active_ports(false) {
                    if params.index_bits() == 0 {
                        self.ports[p].idx = 0;
                    } else if let Some(f) = &inbox[p] {
                        self.ports[p].idx = read_bits(f, &mut 0, params.index_bits());
                    } else {
                        self.active.set(p, false);
                    }
                }
            }
            EStep::FollowerMask => {
                let fam = Arc::clone(&self.family);
                for p in self.active_ports(true) {
                    let Some(f) = &inbox[p] else {
                        self.active.set(p, false);
                        continue;
                    };
                    let theirs = read_mask(f, &mut 0, params.s as usize);
                    let set = fam.get_set(self.ports[p].idx).expect("index in range");
                    let mut free = self.free_mask(&set);
                    free.intersect_with(&theirs);
                    self.ports[p].free = free;
                }
            }
            EStep::LeaderTrials { .. } => {
                let fam = Arc::clone(&self.family);
                for p in self.active_ports(false) {
                    let Some(f) = &inbox[p] else {
                        self.set_trials(p, Vec::new());
                        continue;
                    };
                    let mut pos = 0;
                    let leader_free = read_mask(f, &mut pos, params.s as usize);
                    let xmask = read_mask(f, &mut pos, params.s as usize);
                    let set = fam.get_set(self.ports[p].idx).expect("index in range");
                    self.ports[p].free.intersect_with(&leader_free);
                    let trials = xmask.ones().map(|j| set[j]).collect();
                    self.set_trials(p, trials);
                }
            }
            EStep::Tentative | EStep::SingleTry => {
                for p in self.active_ports(false) {
                    let trials = match &inbox[p] {
                        Some(f) => vec![read_bits(f, &mut 0, params.color_bits()) as u32],
                        None => Vec::new(),
                    };
                    self.set_trials(p, trials);
                }
            }
            EStep::Unique { width } => {
                for p in self.active_ports(true) {
                    self.ports[p].their_ok = match &inbox[p] {
                        Some(f) => f.iter().by_vals().take(width as usize).collect(),
                        None => Vec::new(),
                    };
                }
            }
            EStep::Decide { width } => {
                let bits = ceil_log2(width as u64).max(1);
                for p in self.active_ports(false) {
                    if let Some(f) = &inbox[p] {
                        let j = read_bits(f, &mut 0, bits) as usize;
                        if let Some(&c) = self.ports[p].trials.get(j) {
                            self.adopt(p, c);
                        }
                    }
                }
                self.active.clear();
            }
        }
    }

    fn is_done(&self) -> bool {
        self.uncolored == 0
    }
}

pub type EdgeProgram = Scheduled<EdgeNode>;

/// One approximately uniform color of `free` through a sampled set: draw a
/// set index, intersect, pick uniformly. `None` when the intersection is
/// empty.
pub fn uniform_palette_pick<R: Rng + ?Sized>(family: &RepFamily, free: &FixedBitSet, rng: &mut R) -> Option<u32> {
    let set = family.get_set(family.sample_index(rng)).expect("sampled index");
    let hits: Vec<u32> = set.iter().copied().filter(|&c| free.contains(c as usize)).collect();
    if hits.is_empty() {
        None
    } else {
        Some(hits[rng.gen_range(0..hits.len())])
    }
}

/// Everything the nodes of one edge-coloring stage share up front.
#[derive(Clone, Debug)]
pub struct EdgeSetup {
    pub palette: u32,
    pub family: Arc<RepFamily>,
    pub slack_round: bool,
    pub fallback: bool,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NibbleSummary {
    pub iterations: u32,
    pub residual_max_degree: u32,
    /// `⌊εΔ/2⌋`.
    pub target: u32,
    pub met: bool,
}

#[derive(Clone, Debug)]
pub struct EdgeOutcome {
    /// Color per edge index of the input graph.
    pub colors: Vec<Option<u32>>,
    /// Size of the color budget `[palette]`.
    pub palette: u32,
    pub report: RunReport,
    pub snapshots: Vec<PhaseSnapshot>,
    pub nibble: Option<NibbleSummary>,
}

/// Per-call trial steps.
fn multitrials_call(x: u32, s: u32, label: &Arc<str>, p: &PhaseRounds) -> Vec<TimedStep<EStep>> {
    vec![
        TimedStep::new(EStep::Activate, 0, label),
        TimedStep::new(EStep::Index, p.index, label),
        TimedStep::new(EStep::FollowerMask, p.mask, label),
        TimedStep::new(EStep::LeaderTrials { x }, p.trials, label),
        TimedStep::new(EStep::Unique { width: s }, p.mask, label),
        TimedStep::new(EStep::Decide { width: s }, p.decide, label),
    ]
}

fn single_steps(first: EStep, label: &Arc<str>, p: &PhaseRounds) -> Vec<TimedStep<EStep>> {
    vec![
        TimedStep::new(first, p.color, label),
        TimedStep::new(EStep::Unique { width: 1 }, 1, label),
        TimedStep::new(EStep::Decide { width: 1 }, 1, label),
    ]
}

struct PhaseRounds {
    ids: u32,
    index: u32,
    mask: u32,
    trials: u32,
    decide: u32,
    color: u32,
}

impl PhaseRounds {
    fn new(g: &Graph, family: &RepFamily, bandwidth: usize) -> Self {
        let p = family.params();
        PhaseRounds {
            ids: rounds_for(base_bandwidth(g.n()), bandwidth),
            index: rounds_for(p.index_bits() as usize, bandwidth),
            mask: rounds_for(p.s as usize, bandwidth),
            trials: rounds_for(2 * p.s as usize, bandwidth),
            decide: rounds_for(p.pos_bits() as usize, bandwidth),
            color: rounds_for(p.color_bits() as usize, bandwidth),
        }
    }
}

fn trial_schedule(g: &Graph, setup: &EdgeSetup, plan: &Plan, bandwidth: usize) -> Schedule<EStep> {
    let r = PhaseRounds::new(g, &setup.family, bandwidth);
    let s = setup.family.params().s;
    let mut steps = vec![TimedStep::new(EStep::Ids, r.ids, &Arc::from("ids"))];
    if setup.slack_round {
        steps.extend(single_steps(EStep::SingleTry, &Arc::from("slack"), &r));
    }
    for phase in &plan.phases {
        let l: Arc<str> = Arc::from(phase.label.as_str());
        for _ in 0..phase.reps {
            steps.extend(multitrials_call(phase.x, s, &l, &r));
        }
    }
    let cycle = if setup.fallback { multitrials_call(1, s, &Arc::from("C"), &r) } else { Vec::new() };
    Schedule::new(steps, cycle)
}

fn nibble_schedule(g: &Graph, family: &RepFamily, bandwidth: usize, prob: f64, iterations: u32) -> Schedule<EStep> {
    let r = PhaseRounds::new(g, family, bandwidth);
    let l: Arc<str> = Arc::from("nibble");
    let mut steps = vec![TimedStep::new(EStep::Ids, r.ids, &Arc::from("ids"))];
    for _ in 0..iterations {
        steps.push(TimedStep::new(EStep::Mark { prob, exact: false }, 1, &l));
        steps.push(TimedStep::new(EStep::Index, r.index, &l));
        steps.push(TimedStep::new(EStep::FollowerMask, r.mask, &l));
        steps.extend(single_steps(EStep::Tentative, &l, &r));
    }
    Schedule::new(steps, Vec::new())
}

fn check_eps(epsilon: f64) -> Result<(), ColorError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ColorError::Input(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Setup and plan for the `(2+ε)Δ` variant.
pub fn two_plus_setup(g: &Graph, epsilon: f64, params: &RunParams) -> Result<(EdgeSetup, Plan), ColorError> {
    check_eps(epsilon)?;
    let delta = g.max_degree() as f64;
    let palette = ((2.0 + epsilon) * delta).ceil().max(1.0) as u32;
    let slack = epsilon * delta;
    let (family, flag) =
        choose_family(palette, slack / (4.0 * palette as f64), params.alpha, params.nu_for(g.n()), params.seed);
    let plan = build_plan(g.n(), slack, 2.0 + epsilon, params);
    let setup = EdgeSetup { palette, family, slack_round: false, fallback: params.fallback, flags: flag.into_iter().collect() };
    Ok((setup, plan))
}

/// Setup and plan for `2D−1` colors where `D` bounds the degree.
pub fn two_delta_minus_one_setup(g: &Graph, degree_bound: usize, params: &RunParams) -> (EdgeSetup, Plan) {
    let d = degree_bound.max(g.max_degree()).max(1) as f64;
    let palette = (2.0 * d - 1.0) as u32;
    let line_degree = 2.0 * (d - 1.0);
    let slack = params.eps_eff * line_degree;
    let (family, flag) =
        choose_family(palette, slack / (4.0 * palette as f64), params.alpha, params.nu_for(g.n()), params.seed);
    let plan = build_plan(g.n(), slack, palette as f64 / d, params);
    let setup = EdgeSetup { palette, family, slack_round: true, fallback: params.fallback, flags: flag.into_iter().collect() };
    (setup, plan)
}

pub fn color_edges(g: &Graph, variant: EdgeVariant, params: &RunParams) -> Result<EdgeOutcome, ColorError> {
    match variant {
        EdgeVariant::TwoPlus { epsilon } => {
            let (setup, plan) = two_plus_setup(g, epsilon, params)?;
            run_edge_plan(g, &setup, &plan, params, |_, _| {})
        }
        EdgeVariant::TwoDeltaMinusOne => {
            let (setup, plan) = two_delta_minus_one_setup(g, g.max_degree(), params);
            run_edge_plan(g, &setup, &plan, params, |_, _| {})
        }
        EdgeVariant::OnePlus { epsilon } => color_edges_1plus(g, epsilon, params),
    }
}

/// Edge colors read off the node states.
fn edge_colors(g: &Graph, ports: &[(usize, usize)], states: &[EdgeProgram]) -> Vec<Option<u32>> {
    g.edges()
        .iter()
        .zip(ports)
        .map(|(&(u, v), &(pu, pv))| {
            states[u as usize].inner().port_color[pu].or(states[v as usize].inner().port_color[pv])
        })
        .collect()
}

/// Uncolored edge count and the largest number of uncolored edges adjacent
/// to an uncolored edge.
fn edge_trajectory(g: &Graph, colors: &[Option<u32>]) -> (u64, u64) {
    let per_vertex = uncolored_per_vertex(g, colors);
    let mut count = 0;
    let mut max_d = 0;
    for (e, &(u, v)) in g.edges().iter().enumerate() {
        if colors[e].is_none() {
            count += 1;
            max_d = max_d.max((per_vertex[u as usize] + per_vertex[v as usize] - 2) as u64);
        }
    }
    (count, max_d)
}

fn uncolored_per_vertex(g: &Graph, colors: &[Option<u32>]) -> Vec<u32> {
    let mut c = vec![0u32; g.n()];
    for (e, &(u, v)) in g.edges().iter().enumerate() {
        if colors[e].is_none() {
            c[u as usize] += 1;
            c[v as usize] += 1;
        }
    }
    c
}

/// Ground-truth uncolored line-graph degree and slack of every uncolored
/// edge against palette `[palette]`.
pub fn edge_slack_entries(g: &Graph, palette: u32, colors: &[Option<u32>]) -> Vec<SlackEntry> {
    let per_vertex = uncolored_per_vertex(g, colors);
    let mut used: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(palette as usize); g.n()];
    for (e, &(u, v)) in g.edges().iter().enumerate() {
        if let Some(c) = colors[e] {
            used[u as usize].insert(c as usize);
            used[v as usize].insert(c as usize);
        }
    }
    let mut out = Vec::new();
    for (e, &(u, v)) in g.edges().iter().enumerate() {
        if colors[e].is_some() {
            continue;
        }
        let taken = used[u as usize].union_count(&used[v as usize]);
        let d = per_vertex[u as usize] + per_vertex[v as usize] - 2;
        out.push(SlackEntry { id: e as u32, uncolored_degree: d, slack: palette as i64 - taken as i64 - d as i64 });
    }
    out
}

fn run_edge_schedule<O>(
    g: &Graph,
    family: &Arc<RepFamily>,
    palette: u32,
    schedule: Arc<Schedule<EStep>>,
    cfg: &SimConfig,
    report: &mut RunReport,
    mut observe: O,
) -> Result<(Vec<Option<u32>>, Vec<PhaseSnapshot>), ColorError>
where
    O: FnMut(&RoundStats, &[EdgeProgram]),
{
    let ports: Vec<(usize, usize)> = (0..g.m()).map(|e| g.edge_ports(e)).collect();
    let id_bits = base_bandwidth(g.n()) as u32;
    let mut rec = Recorder::with_offset(&schedule, report.rounds_used);
    let (stats, states) = sim::run(
        g,
        cfg,
        |_, d| Scheduled::new(EdgeNode::new(Arc::clone(family), palette, id_bits, d), Arc::clone(&schedule), d),
        |rs, states| {
            let colors = edge_colors(g, &ports, states);
            let (uncolored, max_d) = edge_trajectory(g, &colors);
            if let Some(label) = rec.record(rs, uncolored, max_d) {
                rec.snapshot(label, rs.round, edge_slack_entries(g, palette, &colors));
            }
            observe(rs, states);
        },
    )?;
    report.absorb_engine(&stats, cfg.bandwidth_bits);
    let snapshots = rec.finish(report);
    Ok((edge_colors(g, &ports, &states), snapshots))
}

/// Runs the trial pipeline for one setup and plan.
pub fn run_edge_plan<O>(
    g: &Graph,
    setup: &EdgeSetup,
    plan: &Plan,
    params: &RunParams,
    observe: O,
) -> Result<EdgeOutcome, ColorError>
where
    O: FnMut(&RoundStats, &[EdgeProgram]),
{
    let cfg = SimConfig::for_graph(g, params.bandwidth_multiplier, params.round_cap, params.seed)?;
    let schedule = Arc::new(trial_schedule(g, setup, plan, cfg.bandwidth_bits));
    let mut report = RunReport { flags: setup.flags.clone(), ..RunReport::default() };
    let (colors, snapshots) = run_edge_schedule(g, &setup.family, setup.palette, schedule, &cfg, &mut report, observe)?;
    Ok(EdgeOutcome { colors, palette: setup.palette, report, snapshots, nibble: None })
}

/// Nibble iterations on palette `[Δ]`: marked edges make one tentative pick
/// and keep it when no adjacent edge picked the same color.
pub fn nibble_phase<O>(
    g: &Graph,
    epsilon: f64,
    params: &RunParams,
    observe: O,
) -> Result<EdgeOutcome, ColorError>
where
    O: FnMut(&RoundStats, &[EdgeProgram]),
{
    check_eps(epsilon)?;
    let delta = g.max_degree().max(1) as u32;
    let iterations = params.nibble_iterations();
    let (family, flag) = choose_family(delta, (epsilon / 4.0).min(0.5), params.alpha, params.nu_for(g.n()), params.seed);
    let cfg = SimConfig::for_graph(g, params.bandwidth_multiplier, params.round_cap, params.seed)?;
    let schedule = Arc::new(nibble_schedule(g, &family, cfg.bandwidth_bits, epsilon / 2.0, iterations));
    let mut report = RunReport { flags: flag.into_iter().collect(), ..RunReport::default() };
    let (colors, snapshots) = run_edge_schedule(g, &family, delta, schedule, &cfg, &mut report, observe)?;
    let residual = uncolored_per_vertex(g, &colors).into_iter().max().unwrap_or(0);
    let target = (epsilon * g.max_degree() as f64 / 2.0).floor() as u32;
    let nibble = NibbleSummary { iterations, residual_max_degree: residual, target, met: residual <= target };
    Ok(EdgeOutcome { colors, palette: delta, report, snapshots, nibble: Some(nibble) })
}

/// Nibble on `[Δ]`, then `2Δ_res − 1` fresh colors `[Δ, Δ + 2Δ_res − 1)` on
/// the residual graph.
pub fn color_edges_1plus(g: &Graph, epsilon: f64, params: &RunParams) -> Result<EdgeOutcome, ColorError> {
    let mut first = nibble_phase(g, epsilon, params, |_, _| {})?;
    let nibble = first.nibble.clone().expect("nibble summary");
    let budget = ((1.0 + epsilon) * g.max_degree() as f64).ceil() as u32;
    let residual = g.edge_subgraph(|e| first.colors[e].is_none());
    let mut report = std::mem::take(&mut first.report);
    if !nibble.met {
        report.flags.push(format!(
            "nibble-target-missed: residual degree {} > {}",
            nibble.residual_max_degree, nibble.target
        ));
    }
    let mut colors = first.colors;
    let mut snapshots = first.snapshots;
    if residual.m() > 0 {
        let rparams = RunParams { seed: crate::sim::derive_seed(params.seed, 0x2E51), ..params.clone() };
        let (setup, plan) = two_delta_minus_one_setup(&residual, residual.max_degree(), &rparams);
        let cfg = SimConfig::for_graph(&residual, params.bandwidth_multiplier, params.round_cap, rparams.seed)?;
        let schedule = Arc::new(trial_schedule(&residual, &setup, &plan, cfg.bandwidth_bits));
        report.flags.extend(setup.flags.iter().cloned());
        let offset = g.max_degree() as u32;
        let (rcolors, rsnaps) =
            run_edge_schedule(&residual, &setup.family, setup.palette, schedule, &cfg, &mut report, |_, _| {})?;
        let mut it = rcolors.into_iter();
        for c in colors.iter_mut().filter(|c| c.is_none()) {
            *c = it.next().expect("residual edge").map(|c| c + offset);
        }
        snapshots.extend(rsnaps);
    }
    Ok(EdgeOutcome { colors, palette: budget, report, snapshots, nibble: Some(nibble) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, GraphModel};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn proper(g: &Graph, colors: &[Option<u32>]) -> bool {
        let mut seen: Vec<std::collections::HashSet<u32>> = vec![Default::default(); g.n()];
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            if let Some(c) = colors[e] {
                if !seen[u as usize].insert(c) || !seen[v as usize].insert(c) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn triangle_two_plus() {
        let g = generate_graph(&GraphModel::Clique { n: 3 }, 0).unwrap();
        let out = color_edges(&g, EdgeVariant::TwoPlus { epsilon: 1.0 }, &RunParams::default()).unwrap();
        assert_eq!(out.palette, 6);
        assert!(out.colors.iter().all(|c| c.is_some_and(|c| c < 6)));
        assert!(proper(&g, &out.colors));
    }

    #[test]
    fn matching_colored_in_first_call() {
        let g = Graph::from_edges(8, [(0, 1), (2, 3), (4, 5), (6, 7)]).unwrap();
        let (setup, plan) = two_plus_setup(&g, 1.0, &RunParams::default()).unwrap();
        let mut first_call_end = None;
        let out = run_edge_plan(&g, &setup, &plan, &RunParams::default(), |rs, states| {
            if first_call_end.is_none() && states.iter().all(|s| s.inner().is_done()) {
                first_call_end = Some(rs.round);
            }
        })
        .unwrap();
        assert!(out.colors.iter().all(Option::is_some));
        let a0 = &out.report.phases[1];
        assert_eq!(a0.label, "A0");
        let per_call = a0.rounds / RunParams::default().reps_a as u64;
        assert!(first_call_end.unwrap() < a0.start_round + per_call);
    }

    #[test]
    fn single_edge_and_star_2d_minus_1() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let out = color_edges(&g, EdgeVariant::TwoDeltaMinusOne, &RunParams::default()).unwrap();
        assert_eq!((out.palette, out.colors.clone()), (1, vec![Some(0)]));
        let star = Graph::from_edges(7, (1..7).map(|v| (0, v))).unwrap();
        let out = color_edges(&star, EdgeVariant::TwoDeltaMinusOne, &RunParams::default()).unwrap();
        let mut cs: Vec<u32> = out.colors.iter().map(|c| c.unwrap()).collect();
        cs.sort_unstable();
        cs.dedup();
        assert_eq!(cs.len(), 6);
        assert!(cs.iter().all(|&c| c < 11));
    }

    #[test]
    fn adjacent_identical_singletons_conflict() {
        // Two edges at a shared vertex with palette {0}: both try 0.
        let g = generate_graph(&GraphModel::Path { n: 3 }, 0).unwrap();
        let family = Arc::new(RepFamily::whole_universe(1, 0.5, 0.5, 0.5).unwrap());
        let setup = EdgeSetup { palette: 1, family, slack_round: true, fallback: false, flags: vec![] };
        let out = run_edge_plan(&g, &setup, &Plan { x_max: 1, phases: vec![] }, &RunParams::default(), |_, _| {}).unwrap();
        assert_eq!(out.colors, vec![None, None]);
    }

    #[test]
    fn nibble_with_full_selection_colors_matching() {
        let g = Graph::from_edges(6, [(0, 1), (2, 3), (4, 5)]).unwrap();
        let params = RunParams { t_eps: Some(1), ..RunParams::default() };
        let out = nibble_phase(&g, 2.0, &params, |_, _| {}).unwrap();
        assert!(out.colors.iter().all(|&c| c == Some(0)));
        let out = color_edges(&g, EdgeVariant::OnePlus { epsilon: 2.0 }, &params).unwrap();
        assert!(out.colors.iter().all(|&c| c == Some(0)));
    }

    #[test]
    fn selection_probability_matches_two_coins() {
        // Brute force over both endpoints' marks: 1 − (1 − p)².
        let p = 0.3;
        let exact: f64 = [(true, true), (true, false), (false, true), (false, false)]
            .iter()
            .map(|&(a, b)| {
                let w = (if a { p } else { 1.0 - p }) * (if b { p } else { 1.0 - p });
                if a || b { w } else { 0.0 }
            })
            .sum();
        assert!((exact - (1.0 - (1.0 - p) * (1.0 - p))).abs() < 1e-12);
        // Measured on a long matching with one iteration and no conflicts.
        let n = 4000;
        let g = Graph::from_edges(n, (0..n as u32 / 2).map(|i| (2 * i, 2 * i + 1))).unwrap();
        let params = RunParams { t_eps: Some(1), seed: 5, ..RunParams::default() };
        let out = nibble_phase(&g, 2.0 * p, &params, |_, _| {}).unwrap();
        let rate = out.colors.iter().filter(|c| c.is_some()).count() as f64 / g.m() as f64;
        let sd = (exact * (1.0 - exact) / g.m() as f64).sqrt();
        assert!((rate - exact).abs() < 5.0 * sd, "{rate} vs {exact}");
    }

    #[test]
    fn uniform_pick_with_whole_family_is_uniform() {
        let f = RepFamily::whole_universe(8, 0.5, 0.5, 0.5).unwrap();
        let mut free = FixedBitSet::with_capacity(8);
        [1usize, 4, 6].iter().for_each(|&c| free.insert(c));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut count = [0u32; 8];
        for _ in 0..30_000 {
            count[uniform_palette_pick(&f, &free, &mut rng).unwrap() as usize] += 1;
        }
        for c in [1, 4, 6] {
            assert!((count[c] as f64 - 10_000.0).abs() < 500.0);
        }
        assert_eq!(count.iter().sum::<u32>(), 30_000);
    }

    #[test]
    fn sampled_palette_is_shared_and_exact() {
        // After every trial call both ends hold the same sampled palette,
        // equal to the set intersected with the true edge palette.
        let g = generate_graph(&GraphModel::RandomRegular { n: 400, d: 140 }, 1).unwrap();
        let params = RunParams { nu: Some(0.25), reps_a: 1, reps_b: 1, ..RunParams::default() };
        let (setup, plan) = two_plus_setup(&g, 1.0, &params).unwrap();
        assert!(!setup.family.is_whole_universe());
        let out = run_edge_plan(&g, &setup, &plan, &params, |_, _| {}).unwrap();
        assert!(proper(&g, &out.colors));
        assert!(out.colors.iter().all(|c| c.is_some_and(|c| c < setup.palette)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn edge_runs_proper_with_exact_views(n in 2usize..40, p in 0.05f64..0.5, seed in 0u64..1000, which in 0u8..3) {
            let g = generate_graph(&GraphModel::Gnp { n, p }, seed).unwrap();
            let variant = match which {
                0 => EdgeVariant::TwoPlus { epsilon: 0.5 },
                1 => EdgeVariant::TwoDeltaMinusOne,
                _ => EdgeVariant::OnePlus { epsilon: 1.0 },
            };
            let params = RunParams { seed, ..RunParams::default() };
            let out = color_edges(&g, variant, &params).unwrap();
            prop_assert!(proper(&g, &out.colors));
            prop_assert!(out.colors.iter().all(Option::is_some));
            prop_assert!(out.report.max_bits_per_edge_round <= out.report.bandwidth_bits);
            if which != 2 || out.nibble.as_ref().unwrap().met {
                prop_assert!(out.colors.iter().all(|c| c.unwrap() < out.palette));
            }
        }

        #[test]
        fn views_match_ground_truth(n in 2usize..30, p in 0.1f64..0.6, seed in 0u64..1000) {
            let g = generate_graph(&GraphModel::Gnp { n, p }, seed).unwrap();
            let params = RunParams { seed, ..RunParams::default() };
            let (setup, plan) = two_plus_setup(&g, 1.0, &params).unwrap();
            let mut ok = true;
            run_edge_plan(&g, &setup, &plan, &params, |_, states| {
                for v in 0..n {
                    if !states[v].at_step_boundary() {
                        continue;
                    }
                    let node = states[v].inner();
                    for (pt, &u) in g.neighbors(v as u32).iter().enumerate() {
                        let q = g.port_of(u, v as u32).unwrap();
                        let theirs = states[u as usize].inner().port_colors()[q];
                        ok &= node.port_colors()[pt] == theirs;
                    }
                    let truth: Vec<u32> = node.port_colors().iter().flatten().copied().collect();
                    ok &= truth.len() == node.known_used().count_ones(..)
                        && truth.iter().all(|&c| node.known_used().contains(c as usize));
                }
            }).unwrap();
            prop_assert!(ok);
        }
    }
}
