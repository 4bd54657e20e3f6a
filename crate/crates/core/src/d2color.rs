//! Distance-2 coloring. A node never learns its distance-2 palette; it only
//! learns that palette's intersection with a sampled set, by ANDing the
//! masks its neighbors return for the set index it broadcasts. Trials are
//! checked the same way: every neighbor compares the colors tried around it
//! and answers with a mask of the ones nobody else in its neighborhood tried.

use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{iterated_log2, square_graph, Graph};
use crate::plan::{build_plan, choose_family, Plan, RunParams};
use crate::repset::RepFamily;
use crate::sim::{
    self, push_bits, read_bits, rounds_for, NodeCtx, Payload, PhaseSnapshot, Protocol, RoundStats, RunReport,
    Schedule, Scheduled, SimConfig, TimedStep,
};
use crate::track::Recorder;
use crate::vcolor::{vertex_slack_entries, ColorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum D2Mode {
    /// Palette `⌈(1+ε)Δ²⌉`.
    OnePlusEps { epsilon: f64 },
    /// Palette `Δ²+1` for graphs whose square is `(1−ε)`-locally sparse;
    /// starts with one single-color try.
    Delta2PlusOneSparse { epsilon: f64 },
    /// Palette `⌈Δ²·log^(c) n⌉`.
    LogC { c: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DStep {
    /// One uniform color from the colors free around the node.
    SingleTry,
    Index,
    /// Neighbors answer each received index with the set's free-color mask.
    Masks,
    Trials { x: u32 },
    Conflicts { width: u32 },
    Adopt,
}

pub struct D2Node {
    family: Arc<RepFamily>,
    palette: u32,
    color: Option<u32>,
    /// Colors of the node and its neighbors.
    used: FixedBitSet,
    nbr_color: Vec<Option<u32>>,
    open: usize,
    my_idx: u64,
    /// Positions of the sampled set free within distance 2.
    sample: Vec<usize>,
    samples_taken: u64,
    trials: Vec<u32>,
    ok: Vec<bool>,
    nbr_idx: Vec<Option<u64>>,
    nbr_trials: Vec<Vec<u32>>,
}

impl D2Node {
    pub fn new(family: Arc<RepFamily>, palette: u32, degree: usize) -> Self {
        D2Node {
            family,
            palette,
            color: None,
            used: FixedBitSet::with_capacity(palette as usize),
            nbr_color: vec![None; degree],
            open: degree,
            my_idx: 0,
            sample: Vec::new(),
            samples_taken: 0,
            trials: Vec::new(),
            ok: Vec::new(),
            nbr_idx: vec![None; degree],
            nbr_trials: vec![Vec::new(); degree],
        }
    }

    pub fn color(&self) -> Option<u32> {
        self.color
    }

    /// Colors used by the node or a neighbor, as far as the node knows.
    pub fn known_used(&self) -> &FixedBitSet {
        &self.used
    }

    /// Count of completed palette samplings with the last set index and
    /// the colors found free within distance 2.
    pub fn last_sample(&self) -> (u64, u64, Vec<u32>) {
        let set = self.family.get_set(self.my_idx).expect("index in range");
        (self.samples_taken, self.my_idx, self.sample.iter().map(|&j| set[j]).collect())
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

    fn adopt(&mut self, c: u32) {
        self.color = Some(c);
        self.used.insert(c as usize);
    }
}

fn broadcast(out: &mut [Option<Payload>], p: Payload) {
    out.iter_mut().for_each(|o| *o = Some(p.clone()));
}

fn mask_payload(mask: impl Iterator<Item = bool>, width: usize) -> Payload {
    let mut f = Payload::new();
    f.resize(width, false);
    for (j, b) in mask.enumerate().take(width) {
        f.set(j, b);
    }
    f
}

impl Protocol for D2Node {
    type Step = DStep;

    fn send(&mut self, step: DStep, ctx: &mut NodeCtx, out: &mut [Option<Payload>]) {
        let params = *self.family.params();
        let s = params.s as usize;
        let uncolored = self.color.is_none();
        match step {
            DStep::SingleTry => {
                self.trials.clear();
                let free = self.palette as usize - self.used.count_ones(..);
                if uncolored && free > 0 {
                    let r = ctx.rng().gen_range(0..free);
                    let c = self.used.zeroes().nth(r).expect("r < free") as u32;
                    self.trials.push(c);
                    let mut f = Payload::new();
                    push_bits(&mut f, c as u64, params.color_bits());
                    broadcast(out, f);
                }
            }
            DStep::Index => {
                self.trials.clear();
                if !uncolored {
                    return;
                }
                self.my_idx = self.family.sample_index(ctx.rng());
                if out.is_empty() {
                    // Nothing within distance 2: any free sampled color will do.
                    let set = self.family.get_set(self.my_idx).expect("index in range");
                    if let Some(&c) = set.iter().find(|&&c| !self.used.contains(c as usize)) {
                        self.adopt(c);
                    }
                } else if params.index_bits() > 0 {
                    let mut f = Payload::new();
                    push_bits(&mut f, self.my_idx, params.index_bits());
                    broadcast(out, f);
                }
            }
            DStep::Masks => {
                let fam = Arc::clone(&self.family);
                for (p, idx) in self.nbr_idx.iter().enumerate() {
                    if let Some(i) = idx {
                        let set = fam.get_set(*i).expect("index in range");
                        let m = self.free_mask(&set);
                        out[p] = Some(mask_payload((0..s).map(|j| m.contains(j)), s));
                    }
                }
            }
            DStep::Trials { x } => {
                if !uncolored || self.sample.is_empty() {
                    return;
                }
                let take = (x as usize).min(self.sample.len());
                let mut chosen: Vec<usize> =
                    index::sample(ctx.rng(), self.sample.len(), take).into_iter().map(|j| self.sample[j]).collect();
                chosen.sort_unstable();
                let set = self.family.get_set(self.my_idx).expect("index in range");
                self.trials = chosen.iter().map(|&j| set[j]).collect();
                let mut m = FixedBitSet::with_capacity(s);
                chosen.iter().for_each(|&j| m.insert(j));
                broadcast(out, mask_payload((0..s).map(|j| m.contains(j)), s));
            }
            DStep::Conflicts { width } => {
                let mut once = FixedBitSet::with_capacity(self.palette as usize);
                let mut twice = FixedBitSet::with_capacity(self.palette as usize);
                for &c in self.trials.iter().chain(self.nbr_trials.iter().flatten()) {
                    if once.contains(c as usize) {
                        twice.insert(c as usize);
                    }
                    once.insert(c as usize);
                }
                for (p, tried) in self.nbr_trials.iter().enumerate() {
                    if tried.is_empty() {
                        continue;
                    }
                    let ok = tried.iter().map(|&c| !twice.contains(c as usize) && !self.used.contains(c as usize));
                    out[p] = Some(mask_payload(ok, width as usize));
                }
            }
            DStep::Adopt => {
                if !uncolored {
                    return;
                }
                let pick = self.trials.iter().zip(&self.ok).find(|(_, &ok)| ok).map(|(&c, _)| c);
                if let Some(c) = pick {
                    self.adopt(c);
                    let mut f = Payload::new();
                    push_bits(&mut f, c as u64, params.color_bits());
                    broadcast(out, f);
                }
                self.trials.clear();
            }
        }
    }

    fn receive(&mut self, step: DStep, _ctx: &mut NodeCtx, inbox: &[Option<Payload>]) {
        let params = *self.family.params();
        let s = params.s as usize;
        match step {
            DStep::SingleTry => {
                for (p, f) in inbox.iter().enumerate() {
                    self.nbr_trials[p] = match f {
                        Some(f) => vec![read_bits(f, &mut 0, params.color_bits()) as u32],
                        None => Vec::new(),
                    };
                }
            }
            DStep::Index => {
                for (p, f) in inbox.iter().enumerate() {
                    self.nbr_trials[p].clear();
                    self.nbr_idx[p] = if params.index_bits() == 0 {
                        self.nbr_color[p].is_none().then_some(0)
                    } else {
                        f.as_ref().map(|f| read_bits(f, &mut 0, params.index_bits()))
                    };
                }
            }
            DStep::Masks => {
                if self.color.is_some() {
                    return;
                }
                let set = self.family.get_set(self.my_idx).expect("index in range");
                let mut m = self.free_mask(&set);
                for f in inbox {
                    match f {
                        Some(f) => {
                            for j in 0..s {
                                if !f.get(j).is_some_and(|b| *b) {
                                    m.set(j, false);
                                }
                            }
                        }
                        None => m.clear(),
                    }
                }
                self.sample = m.ones().collect();
                self.samples_taken += 1;
            }
            DStep::Trials { .. } => {
                let fam = Arc::clone(&self.family);
                for (p, f) in inbox.iter().enumerate() {
                    self.nbr_trials[p] = match (f, self.nbr_idx[p]) {
                        (Some(f), Some(i)) => {
                            let set = fam.get_set(i).expect("index in range");
                            f.iter_ones().take_while(|&j| j < s).map(|j| set[j]).collect()
                        }
                        _ => Vec::new(),
                    };
                }
            }
            DStep::Conflicts { width } => {
                let mut ok: Vec<bool> = self.trials.iter().map(|&c| !self.used.contains(c as usize)).collect();
                for f in inbox {
                    for (j, o) in ok.iter_mut().enumerate() {
                        *o &= f.as_ref().is_some_and(|f| j < width as usize && f.get(j).is_some_and(|b| *b));
                    }
                }
                self.ok = ok;
            }
            DStep::Adopt => {
                for (p, f) in inbox.iter().enumerate() {
                    if let Some(f) = f {
                        let c = read_bits(f, &mut 0, params.color_bits()) as u32;
                        if self.nbr_color[p].is_none() {
                            self.open -= 1;
                        }
                        self.nbr_color[p] = Some(c);
                        self.used.insert(c as usize);
                    }
                    self.nbr_trials[p].clear();
                }
                self.ok.clear();
            }
        }
    }

    fn is_done(&self) -> bool {
        self.color.is_some() && self.open == 0
    }
}

pub type D2Program = Scheduled<D2Node>;

#[derive(Clone, Debug)]
pub struct D2Setup {
    pub palette: u32,
    pub family: Arc<RepFamily>,
    pub slack_round: bool,
    pub fallback: bool,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct D2Outcome {
    pub colors: Vec<Option<u32>>,
    pub palette: u32,
    pub plan: Plan,
    pub report: RunReport,
    pub snapshots: Vec<PhaseSnapshot>,
}

fn check_eps(epsilon: f64) -> Result<(), ColorError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ColorError::Input(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

pub fn d2_setup(g: &Graph, mode: D2Mode, params: &RunParams) -> Result<(D2Setup, Plan), ColorError> {
    let sq = (g.max_degree() * g.max_degree()) as f64;
    let least = sq + 1.0;
    let (palette, slack, slack_round) = match mode {
        D2Mode::OnePlusEps { epsilon } => {
            check_eps(epsilon)?;
            (((1.0 + epsilon) * sq).ceil().max(least), epsilon * sq, false)
        }
        D2Mode::Delta2PlusOneSparse { epsilon } => {
            check_eps(epsilon)?;
            (least, epsilon * sq / (4.0 * std::f64::consts::E.powi(3)), true)
        }
        D2Mode::LogC { c } => {
            if c == 0 {
                return Err(ColorError::Input("log depth c must be at least 1".into()));
            }
            let p = (sq * iterated_log2(g.n() as f64, c)).ceil().max(least);
            (p, p - sq, false)
        }
    };
    let ratio = palette / sq.max(1.0);
    let palette = palette as u32;
    let (family, flag) =
        choose_family(palette, slack / (4.0 * palette as f64), params.alpha, params.nu_for(g.n()), params.seed);
    let plan = build_plan(g.n(), slack, ratio, params);
    let setup = D2Setup { palette, family, slack_round, fallback: params.fallback, flags: flag.into_iter().collect() };
    Ok((setup, plan))
}

pub fn color_d2(g: &Graph, mode: D2Mode, params: &RunParams) -> Result<D2Outcome, ColorError> {
    let (setup, plan) = d2_setup(g, mode, params)?;
    run_d2_plan(g, &setup, &plan, params, |_, _| {})
}

fn multitrials_call(x: u32, s: u32, label: &Arc<str>, r: &StepRounds) -> Vec<TimedStep<DStep>> {
    let width = x.min(s);
    vec![
        TimedStep::new(DStep::Index, r.index, label),
        TimedStep::new(DStep::Masks, r.mask, label),
        TimedStep::new(DStep::Trials { x }, r.mask, label),
        TimedStep::new(DStep::Conflicts { width }, r.of(width as usize), label),
        TimedStep::new(DStep::Adopt, r.color, label),
    ]
}

struct StepRounds {
    bandwidth: usize,
    index: u32,
    mask: u32,
    color: u32,
}

impl StepRounds {
    fn of(&self, bits: usize) -> u32 {
        rounds_for(bits, self.bandwidth)
    }
}

fn d2_schedule(setup: &D2Setup, plan: &Plan, bandwidth: usize) -> Schedule<DStep> {
    let p = setup.family.params();
    let r = StepRounds {
        bandwidth,
        index: rounds_for(p.index_bits() as usize, bandwidth),
        mask: rounds_for(p.s as usize, bandwidth),
        color: rounds_for(p.color_bits() as usize, bandwidth),
    };
    let mut steps = Vec::new();
    if setup.slack_round {
        let l = Arc::from("slack");
        steps.push(TimedStep::new(DStep::SingleTry, r.color, &l));
        steps.push(TimedStep::new(DStep::Conflicts { width: 1 }, 1, &l));
        steps.push(TimedStep::new(DStep::Adopt, r.color, &l));
    }
    for phase in &plan.phases {
        let l: Arc<str> = Arc::from(phase.label.as_str());
        for _ in 0..phase.reps {
            steps.extend(multitrials_call(phase.x, p.s, &l, &r));
        }
    }
    let cycle = if setup.fallback { multitrials_call(1, p.s, &Arc::from("C"), &r) } else { Vec::new() };
    Schedule::new(steps, cycle)
}

/// Runs a given plan; `observe` sees the node states after every round.
pub fn run_d2_plan<O>(
    g: &Graph,
    setup: &D2Setup,
    plan: &Plan,
    params: &RunParams,
    mut observe: O,
) -> Result<D2Outcome, ColorError>
where
    O: FnMut(&RoundStats, &[D2Program]),
{
    let cfg = SimConfig::for_graph(g, params.bandwidth_multiplier, params.round_cap, params.seed)?;
    let schedule = Arc::new(d2_schedule(setup, plan, cfg.bandwidth_bits));
    let square = square_graph(g);
    let mut rec = Recorder::new(&schedule);
    let palette = setup.palette;
    let (stats, states) = sim::run(
        g,
        &cfg,
        |_, d| Scheduled::new(D2Node::new(Arc::clone(&setup.family), palette, d), Arc::clone(&schedule), d),
        |rs, states| {
            let colors = |v: usize| states[v].inner().color;
            let entries = vertex_slack_entries(&square, palette, &colors);
            let max_d = entries.iter().map(|e| e.uncolored_degree as u64).max().unwrap_or(0);
            if let Some(label) = rec.record(rs, entries.len() as u64, max_d) {
                rec.snapshot(label, rs.round, entries);
            }
            observe(rs, states);
        },
    )?;
    let mut report = RunReport { flags: setup.flags.clone(), ..RunReport::default() };
    report.absorb_engine(&stats, cfg.bandwidth_bits);
    let snapshots = rec.finish(&mut report);
    Ok(D2Outcome {
        colors: states.iter().map(|s| s.inner().color).collect(),
        palette,
        plan: plan.clone(),
        report,
        snapshots,
    })
}
