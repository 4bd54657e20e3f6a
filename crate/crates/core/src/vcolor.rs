//! `(1+ε)Δ` vertex coloring: single-color tries for slack generation,
//! multi-color trials over a sampled representative set, and the staged
//! driver.

use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, VertexId};
use crate::plan::{build_plan, choose_family, Plan, RunParams};
use crate::repset::RepFamily;
use crate::sim::{
    self, push_bits, read_bits, rounds_for, NodeCtx, Payload, PhaseSnapshot, Protocol, RoundStats, RunReport,
    Schedule, Scheduled, SimConfig, SimError, SlackEntry, TimedStep,
};
use crate::track::Recorder;

#[derive(Debug, Error)]
pub enum ColorError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum VertexVariant {
    /// Palette `⌈(1+ε)Δ⌉`.
    Slack { epsilon: f64 },
    /// Palette `Δ+1` on a locally sparse graph; a single-try round creates
    /// the slack.
    LocallySparse { epsilon: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VStep {
    AnnounceInitial,
    SingleTry,
    SingleConfirm,
    Propose { x: u32 },
    Adopt,
}

/// Per-vertex program state.
pub struct VertexNode {
    family: Arc<RepFamily>,
    palette: u32,
    color: Option<u32>,
    announced: bool,
    adopted_now: bool,
    used: FixedBitSet,
    nbr_colored: FixedBitSet,
    my_try: Option<u32>,
    my_set: Vec<u32>,
    my_trials: Vec<u32>,
    adopted_pos: u32,
    nbr_try: Vec<Option<u32>>,
    nbr_trials: Vec<Vec<(u32, u32)>>,
}

impl VertexNode {
    pub fn new(family: Arc<RepFamily>, palette: u32, degree: usize, precolor: Option<u32>) -> Self {
        VertexNode {
            family,
            palette,
            color: precolor,
            announced: false,
            adopted_now: false,
            used: FixedBitSet::with_capacity(palette as usize),
            nbr_colored: FixedBitSet::with_capacity(degree),
            my_try: None,
            my_set: Vec::new(),
            my_trials: Vec::new(),
            adopted_pos: 0,
            nbr_try: vec![None; degree],
            nbr_trials: vec![Vec::new(); degree],
        }
    }

    pub fn color(&self) -> Option<u32> {
        self.color
    }

    /// Colors this vertex has been told its neighbors hold.
    pub fn known_used(&self) -> &FixedBitSet {
        &self.used
    }

    pub fn announced(&self) -> bool {
        self.announced
    }

    fn color_bits(&self) -> u32 {
        self.family.params().color_bits()
    }

    fn to_open_ports(&self, out: &mut [Option<Payload>], payload: Payload) {
        for (p, o) in out.iter_mut().enumerate() {
            if !self.nbr_colored.contains(p) {
                *o = Some(payload.clone());
            }
        }
    }

    fn learn(&mut self, port: usize, c: u32) {
        self.used.insert(c as usize);
        self.nbr_colored.insert(port);
    }

    fn free_colors(&self) -> usize {
        self.palette as usize - self.used.count_ones(..)
    }
}

impl Protocol for VertexNode {
    type Step = VStep;

    fn send(&mut self, step: VStep, ctx: &mut NodeCtx, out: &mut [Option<Payload>]) {
        match step {
            VStep::AnnounceInitial => {
                if let Some(c) = self.color {
                    let mut p = Payload::new();
                    push_bits(&mut p, c as u64, self.color_bits());
                    self.to_open_ports(out, p);
                    self.announced = true;
                }
            }
            VStep::SingleTry => {
                self.my_try = None;
                let free = self.free_colors();
                if self.color.is_some() || free == 0 {
                    return;
                }
                let r = ctx.rng().gen_range(0..free);
                let c = self.used.zeroes().nth(r).expect("r < free") as u32;
                self.my_try = Some(c);
                let mut p = Payload::new();
                push_bits(&mut p, c as u64, self.color_bits());
                self.to_open_ports(out, p);
            }
            VStep::SingleConfirm | VStep::Adopt => {
                if self.adopted_now {
                    let mut p = Payload::new();
                    if step == VStep::Adopt {
                        push_bits(&mut p, self.adopted_pos as u64, self.family.params().pos_bits());
                    } else {
                        push_bits(&mut p, 1, 1);
                    }
                    self.to_open_ports(out, p);
                    self.adopted_now = false;
                    self.announced = true;
                }
            }
            VStep::Propose { x } => {
                self.my_trials.clear();
                if self.color.is_some() {
                    return;
                }
                let fam = Arc::clone(&self.family);
                let i = fam.sample_index(ctx.rng());
                let set = fam.get_set(i).expect("sampled index");
                let open: Vec<u32> = (0..set.len() as u32)
                    .filter(|&j| !self.used.contains(set[j as usize] as usize))
                    .collect();
                if open.is_empty() {
                    return;
                }
                let take = (x as usize).min(open.len());
                self.my_trials = index::sample(ctx.rng(), open.len(), take)
                    .into_iter()
                    .map(|j| open[j])
                    .collect();
                self.my_trials.sort_unstable();
                self.my_set = set.into_owned();
                let params = fam.params();
                let mut p = Payload::new();
                push_bits(&mut p, i, params.index_bits());
                let at = p.len();
                p.resize(at + params.s as usize, false);
                for &j in &self.my_trials {
                    p.set(at + j as usize, true);
                }
                self.to_open_ports(out, p);
            }
        }
    }

    fn receive(&mut self, step: VStep, _ctx: &mut NodeCtx, inbox: &[Option<Payload>]) {
        match step {
            VStep::AnnounceInitial => {
                let w = self.color_bits();
                for (p, f) in inbox.iter().enumerate() {
                    if let Some(f) = f {
                        self.learn(p, read_bits(f, &mut 0, w) as u32);
                    }
                }
            }
            VStep::SingleTry => {
                let w = self.color_bits();
                for (slot, f) in self.nbr_try.iter_mut().zip(inbox) {
                    *slot = f.as_ref().map(|f| read_bits(f, &mut 0, w) as u32);
                }
                if let Some(c) = self.my_try.take() {
                    if self.nbr_try.iter().all(|&t| t != Some(c)) {
                        self.color = Some(c);
                        self.adopted_now = true;
                    }
                }
            }
            VStep::SingleConfirm => {
                for (p, frame) in inbox.iter().enumerate() {
                    if frame.is_some() {
                        let c = self.nbr_try[p].expect("confirmed color was tried");
                        self.learn(p, c);
                    }
                }
            }
            VStep::Propose { .. } => {
                let params = *self.family.params();
                let mut tried = FixedBitSet::with_capacity(self.palette as usize);
                for (trials, f) in self.nbr_trials.iter_mut().zip(inbox) {
                    trials.clear();
                    let Some(f) = f else { continue };
                    let mut pos = 0;
                    let i = read_bits(f, &mut pos, params.index_bits());
                    let Ok(set) = self.family.get_set(i) else { continue };
                    let end = (pos + params.s as usize).min(f.len());
                    for j in f[pos..end].iter_ones() {
                        trials.push((j as u32, set[j]));
                        tried.insert(set[j] as usize);
                    }
                }
                if let Some(&j) = self
                    .my_trials
                    .iter()
                    .find(|&&j| !tried.contains(self.my_set[j as usize] as usize))
                {
                    self.color = Some(self.my_set[j as usize]);
                    self.adopted_pos = j;
                    self.adopted_now = true;
                }
            }
            VStep::Adopt => {
                let w = self.family.params().pos_bits();
                for (p, frame) in inbox.iter().enumerate() {
                    if let Some(f) = frame {
                        let j = read_bits(f, &mut 0, w) as u32;
                        let hit = self.nbr_trials[p].iter().find(|t| t.0 == j).map(|t| t.1);
                        debug_assert!(hit.is_some(), "adopted position was not tried");
                        if let Some(c) = hit {
                            self.learn(p, c);
                        }
                    }
                }
            }
        }
    }

    fn is_done(&self) -> bool {
        self.color.is_some() && self.announced
    }
}

pub type VertexProgram = Scheduled<VertexNode>;

/// Everything a run shares across nodes before round 0.
#[derive(Clone, Debug)]
pub struct VertexSetup {
    pub palette: u32,
    pub family: Arc<RepFamily>,
    /// Prepend one single-try round.
    pub slack_round: bool,
    pub fallback: bool,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct VertexOutcome {
    pub colors: Vec<Option<u32>>,
    pub palette: u32,
    pub plan: Plan,
    pub report: RunReport,
    pub snapshots: Vec<PhaseSnapshot>,
}

/// Palette, family and schedule for a variant.
pub fn vertex_setup(g: &Graph, variant: VertexVariant, params: &RunParams) -> Result<(VertexSetup, Plan), ColorError> {
    let delta = g.max_degree() as f64;
    let (palette, slack, ratio, slack_round) = match variant {
        VertexVariant::Slack { epsilon } => {
            check_eps(epsilon)?;
            let p = ((1.0 + epsilon) * delta).ceil().max(delta + 1.0);
            (p, epsilon * delta, 1.0 + epsilon, false)
        }
        VertexVariant::LocallySparse { epsilon } => {
            check_eps(epsilon)?;
            let p = delta + 1.0;
            (p, epsilon * delta / (4.0 * std::f64::consts::E.powi(3)), p / delta.max(1.0), true)
        }
    };
    let palette = palette as u32;
    let (family, flag) = choose_family(
        palette,
        slack / (4.0 * palette as f64),
        params.alpha,
        params.nu_for(g.n()),
        params.seed,
    );
    let plan = build_plan(g.n(), slack, ratio, params);
    let setup = VertexSetup {
        palette,
        family,
        slack_round,
        fallback: params.fallback,
        flags: flag.into_iter().collect(),
    };
    Ok((setup, plan))
}

fn check_eps(epsilon: f64) -> Result<(), ColorError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ColorError::Input(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

pub fn color_vertices(g: &Graph, variant: VertexVariant, params: &RunParams) -> Result<VertexOutcome, ColorError> {
    let (setup, plan) = vertex_setup(g, variant, params)?;
    run_vertex_plan(g, &setup, &plan, params, None, |_, _| {})
}

fn vertex_schedule(setup: &VertexSetup, plan: &Plan, bandwidth: usize, precolored: bool) -> Schedule<VStep> {
    let p = setup.family.params();
    let cb = p.color_bits() as usize;
    let propose = rounds_for(p.index_bits() as usize + p.s as usize, bandwidth);
    let adopt = rounds_for(p.pos_bits() as usize, bandwidth);
    let single = rounds_for(cb, bandwidth);
    let mut steps = Vec::new();
    if precolored {
        steps.push(TimedStep::new(VStep::AnnounceInitial, single, &Arc::from("init")));
    }
    if setup.slack_round {
        let l = Arc::from("slack");
        steps.push(TimedStep::new(VStep::SingleTry, single, &l));
        steps.push(TimedStep::new(VStep::SingleConfirm, 1, &l));
    }
    for phase in &plan.phases {
        let l: Arc<str> = Arc::from(phase.label.as_str());
        for _ in 0..phase.reps {
            steps.push(TimedStep::new(VStep::Propose { x: phase.x }, propose, &l));
            steps.push(TimedStep::new(VStep::Adopt, adopt, &l));
        }
    }
    let mut cycle = Vec::new();
    if setup.fallback {
        let l = Arc::from("C");
        cycle.push(TimedStep::new(VStep::SingleTry, single, &l));
        cycle.push(TimedStep::new(VStep::SingleConfirm, 1, &l));
    }
    Schedule::new(steps, cycle)
}

/// Runs a given plan. `precolor` fixes colors of some vertices up front;
/// `observe` sees the node states after every round.
pub fn run_vertex_plan<O>(
    g: &Graph,
    setup: &VertexSetup,
    plan: &Plan,
    params: &RunParams,
    precolor: Option<&[Option<u32>]>,
    mut observe: O,
) -> Result<VertexOutcome, ColorError>
where
    O: FnMut(&RoundStats, &[VertexProgram]),
{
    if let Some(pre) = precolor {
        check_precolor(g, pre, setup.palette)?;
    }
    let cfg = SimConfig::for_graph(g, params.bandwidth_multiplier, params.round_cap, params.seed)?;
    let schedule = Arc::new(vertex_schedule(setup, plan, cfg.bandwidth_bits, precolor.is_some()));
    let mut rec = Recorder::new(&schedule);
    let palette = setup.palette;
    let (stats, states) = sim::run(
        g,
        &cfg,
        |v, d| {
            let pre = precolor.and_then(|p| p[v as usize]);
            Scheduled::new(VertexNode::new(Arc::clone(&setup.family), palette, d, pre), Arc::clone(&schedule), d)
        },
        |rs, states| {
            let colors = |v: usize| states[v].inner().color;
            let (uncolored, max_d) = uncolored_degrees(g, &colors);
            if let Some(label) = rec.record(rs, uncolored, max_d) {
                let entries = vertex_slack_entries(g, palette, &colors);
                rec.snapshot(label, rs.round, entries);
            }
            observe(rs, states);
        },
    )?;
    let mut report = RunReport { flags: setup.flags.clone(), ..RunReport::default() };
    report.absorb_engine(&stats, cfg.bandwidth_bits);
    let snapshots = rec.finish(&mut report);
    Ok(VertexOutcome {
        colors: states.iter().map(|s| s.inner().color).collect(),
        palette,
        plan: plan.clone(),
        report,
        snapshots,
    })
}

fn check_precolor(g: &Graph, pre: &[Option<u32>], palette: u32) -> Result<(), ColorError> {
    if pre.len() != g.n() {
        return Err(ColorError::Input(format!("precoloring has {} entries for {} vertices", pre.len(), g.n())));
    }
    if let Some(c) = pre.iter().flatten().find(|&&c| c >= palette) {
        return Err(ColorError::Input(format!("precolor {c} outside palette of {palette}")));
    }
    for &(u, v) in g.edges() {
        if pre[u as usize].is_some() && pre[u as usize] == pre[v as usize] {
            return Err(ColorError::Input(format!("precoloring conflicts on edge {u}-{v}")));
        }
    }
    Ok(())
}

/// Uncolored vertex count and the largest number of uncolored neighbors of
/// an uncolored vertex.
fn uncolored_degrees(g: &Graph, color: &impl Fn(usize) -> Option<u32>) -> (u64, u64) {
    let mut count = 0;
    let mut max_d = 0;
    for v in 0..g.n() {
        if color(v).is_none() {
            count += 1;
            let d = g.neighbors(v as VertexId).iter().filter(|&&u| color(u as usize).is_none()).count();
            max_d = max_d.max(d as u64);
        }
    }
    (count, max_d)
}

/// Ground-truth uncolored degree and slack of every uncolored vertex.
pub fn vertex_slack_entries(g: &Graph, palette: u32, color: &impl Fn(usize) -> Option<u32>) -> Vec<SlackEntry> {
    let mut seen = FixedBitSet::with_capacity(palette as usize);
    let mut out = Vec::new();
    for v in 0..g.n() {
        if color(v).is_some() {
            continue;
        }
        seen.clear();
        let mut d = 0u32;
        for &u in g.neighbors(v as VertexId) {
            match color(u as usize) {
                Some(c) => seen.insert(c as usize),
                None => d += 1,
            }
        }
        let free = palette as i64 - seen.count_ones(..) as i64;
        out.push(SlackEntry { id: v as u32, uncolored_degree: d, slack: free - d as i64 });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, GraphModel};
    use crate::plan::PlanPhase;
    use proptest::prelude::*;

    fn proper(g: &Graph, colors: &[Option<u32>]) -> bool {
        g.edges().iter().all(|&(u, v)| colors[u as usize].is_none() || colors[u as usize] != colors[v as usize])
    }

    fn single_try_only(palette: u32) -> (VertexSetup, Plan) {
        let family = Arc::new(RepFamily::whole_universe(palette, 0.5, 0.5, 0.5).unwrap());
        let setup = VertexSetup { palette, family, slack_round: true, fallback: false, flags: vec![] };
        (setup, Plan { x_max: 1, phases: vec![] })
    }

    #[test]
    fn isolated_vertex_adopts_single_try() {
        let g = Graph::from_edges(1, []).unwrap();
        let (setup, plan) = single_try_only(3);
        for seed in 0..20 {
            let params = RunParams { seed, ..RunParams::default() };
            let out = run_vertex_plan(&g, &setup, &plan, &params, None, |_, _| {}).unwrap();
            assert!(out.colors[0].is_some());
        }
    }

    #[test]
    fn forced_collision_blocks_both() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let (setup, plan) = single_try_only(1);
        let out = run_vertex_plan(&g, &setup, &plan, &RunParams::default(), None, |_, _| {}).unwrap();
        assert_eq!(out.colors, vec![None, None]);
    }

    #[test]
    fn edgeless_graph_done_in_first_call() {
        let g = Graph::from_edges(10, []).unwrap();
        let out = color_vertices(&g, VertexVariant::Slack { epsilon: 1.0 }, &RunParams::default()).unwrap();
        assert!(out.colors.iter().all(Option::is_some));
        // One propose step and one adopt step at B = 4.
        assert_eq!(out.report.rounds_used, 2);
    }

    #[test]
    fn clique_completes_within_palette() {
        let g = generate_graph(&GraphModel::Clique { n: 17 }, 0).unwrap();
        for seed in 0..5 {
            let params = RunParams { seed, ..RunParams::default() };
            let out = color_vertices(&g, VertexVariant::Slack { epsilon: 1.0 }, &params).unwrap();
            assert_eq!(out.palette, 32);
            assert!(out.colors.iter().all(|c| c.is_some_and(|c| c < 32)));
            assert!(proper(&g, &out.colors));
            assert!(!out.report.timed_out);
        }
    }

    #[test]
    fn precolored_neighbors_shrink_palette() {
        // Path 0-1-2 with ends precolored 0 and 1; palette 3 leaves only 2.
        let g = generate_graph(&GraphModel::Path { n: 3 }, 0).unwrap();
        let family = Arc::new(RepFamily::whole_universe(3, 0.5, 0.5, 0.5).unwrap());
        let setup = VertexSetup { palette: 3, family, slack_round: false, fallback: true, flags: vec![] };
        let plan = Plan { x_max: 1, phases: vec![PlanPhase { label: "A0".into(), x: 1, reps: 1 }] };
        let pre = [Some(0), None, Some(1)];
        let out = run_vertex_plan(&g, &setup, &plan, &RunParams::default(), Some(&pre), |_, _| {}).unwrap();
        assert_eq!(out.colors, vec![Some(0), Some(2), Some(1)]);
        let bad = [Some(0), Some(0), None];
        assert!(run_vertex_plan(&g, &setup, &plan, &RunParams::default(), Some(&bad), |_, _| {}).is_err());
    }

    #[test]
    fn implicit_family_run_is_proper() {
        let g = generate_graph(&GraphModel::RandomRegular { n: 600, d: 200 }, 3).unwrap();
        let params = RunParams { nu: Some(0.125), ..RunParams::default() };
        let out = color_vertices(&g, VertexVariant::Slack { epsilon: 1.0 }, &params).unwrap();
        assert!(out.report.flags.is_empty(), "{:?}", out.report.flags);
        assert!(out.colors.iter().all(Option::is_some));
        assert!(proper(&g, &out.colors));
        assert!(out.report.max_bits_per_edge_round <= out.report.bandwidth_bits);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn runs_stay_proper_and_views_exact(
            n in 2usize..60,
            p in 0.05f64..0.6,
            seed in 0u64..1000,
            sparse: bool,
        ) {
            let g = generate_graph(&GraphModel::Gnp { n, p }, seed).unwrap();
            let variant = if sparse {
                VertexVariant::LocallySparse { epsilon: 0.5 }
            } else {
                VertexVariant::Slack { epsilon: 0.5 }
            };
            let params = RunParams { seed, ..RunParams::default() };
            let (setup, plan) = vertex_setup(&g, variant, &params).unwrap();
            let mut prev: Vec<Option<u32>> = vec![None; n];
            let mut ok = true;
            let out = run_vertex_plan(&g, &setup, &plan, &params, None, |_, states| {
                let colors: Vec<Option<u32>> = states.iter().map(|s| s.inner().color()).collect();
                ok &= proper(&g, &colors);
                // Colors are final.
                ok &= prev.iter().zip(&colors).all(|(a, b)| a.is_none() || a == b);
                for v in 0..n {
                    let node = states[v].inner();
                    if node.color().is_some() || !states[v].at_step_boundary() {
                        continue;
                    }
                    let truth: FixedBitSet = g.neighbors(v as u32).iter()
                        .filter(|&&u| states[u as usize].inner().announced())
                        .filter_map(|&u| colors[u as usize])
                        .map(|c| c as usize)
                        .collect::<Vec<_>>()
                        .into_iter()
                        .fold(FixedBitSet::with_capacity(setup.palette as usize), |mut b, c| { b.insert(c); b });
                    ok &= *node.known_used() == truth;
                }
                prev = colors;
            }).unwrap();
            prop_assert!(ok);
            prop_assert!(out.colors.iter().all(|c| c.is_some_and(|c| c < setup.palette)));
            prop_assert!(out.report.max_bits_per_edge_round <= out.report.bandwidth_bits);
        }
    }
}
