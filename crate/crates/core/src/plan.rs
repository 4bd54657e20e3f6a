//! Trial-count schedules and run parameters shared by the coloring drivers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::graph::{log_star, up_arrow};
use crate::repset::{family_params, RepFamily};
use crate::sim::derive_seed;

/// Knobs common to every driver. Unused fields are ignored by variants that
/// do not need them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunParams {
    pub epsilon: f64,
    /// Constant in the cleanup-stage trial counts.
    pub c_c: f64,
    pub reps_a: u32,
    pub reps_b: u32,
    pub alpha: f64,
    /// Family failure fraction; `None` means `n⁻³`.
    pub nu: Option<f64>,
    pub bandwidth_multiplier: usize,
    pub round_cap: u64,
    pub seed: u64,
    /// Nibble iterations; `None` means `⌈16/ε⌉`.
    pub t_eps: Option<u32>,
    /// Effective slack fraction after the edge slack round.
    pub eps_eff: f64,
    /// Iterated-log depth for the distance-2 `Δ²·log^(c) n` budget.
    pub log_c: u32,
    /// Append the repeating single-try fallback stage.
    pub fallback: bool,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            epsilon: 1.0,
            c_c: 8.0,
            reps_a: 4,
            reps_b: 4,
            alpha: 0.5,
            nu: None,
            bandwidth_multiplier: 1,
            round_cap: 100_000,
            seed: 0,
            t_eps: None,
            eps_eff: 1.0 / (32.0 * std::f64::consts::E.powi(3)),
            log_c: 1,
            fallback: true,
        }
    }
}

impl RunParams {
    pub fn nu_for(&self, n: usize) -> f64 {
        self.nu.unwrap_or_else(|| (n.max(2) as f64).powi(-3))
    }

    pub fn nibble_iterations(&self) -> u32 {
        self.t_eps.unwrap_or_else(|| (16.0 / self.epsilon).ceil() as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanPhase {
    pub label: String,
    pub x: u32,
    pub reps: u32,
}

/// Stage A (tetration growth) followed by stage B (cleanup) phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub x_max: u32,
    pub phases: Vec<PlanPhase>,
}

/// `slack` is the guaranteed slack (e.g. `εΔ`) and `ratio` the palette size
/// over the degree bound. Trial counts are capped at
/// `x_max = max(1, ⌊slack/(2·ratio)⌋)`.
pub fn build_plan(n: usize, slack: f64, ratio: f64, params: &RunParams) -> Plan {
    let x_max = ((slack / (2.0 * ratio)).floor() as u64).clamp(1, u32::MAX as u64) as u32;
    let ls = log_star(n as f64);
    let mut phases = Vec::new();
    for i in 0..=ls {
        let tower = up_arrow(2, i, x_max as u64 + 1);
        let over = tower.saturated || tower.value > x_max as u64;
        phases.push(PlanPhase {
            label: format!("A{i}"),
            x: tower.value.min(x_max as u64) as u32,
            reps: params.reps_a,
        });
        if over {
            break;
        }
    }
    let log_n = (n.max(2) as f64).log2().max(1.0);
    for i in 0..=ls {
        let exp = if ls == 0 { 1.0 } else { i as f64 / ls as f64 };
        let x = (slack * log_n.powf(exp) / (2.0 * ratio * params.c_c * log_n)).floor();
        phases.push(PlanPhase {
            label: format!("B{i}"),
            x: (x.max(1.0) as u64).min(x_max as u64) as u32,
            reps: params.reps_b,
        });
    }
    Plan { x_max, phases }
}

/// The family used by a run: a seeded implicit family when the parameters
/// are realizable over `[k]`, else the single whole-universe set (flagged).
pub fn choose_family(
    k: u32,
    delta: f64,
    alpha: f64,
    nu: f64,
    seed: u64,
) -> (Arc<RepFamily>, Option<String>) {
    let delta = delta.clamp(f64::MIN_POSITIVE, 0.999);
    match family_params(k, alpha, delta, nu) {
        Ok(p) => (Arc::new(RepFamily::implicit(p, derive_seed(seed, 0xFA41))), None),
        Err(e) => {
            let f = RepFamily::whole_universe(k.max(1), alpha, delta, nu).expect("valid parameters");
            (Arc::new(f), Some(format!("degenerate-family: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_a_stops_past_cap() {
        let p = RunParams::default();
        // x_max = ⌊64/(2·2)⌋ = 16; towers 1, 2, 4, 16, then 65536 > 16.
        let plan = build_plan(1 << 16, 64.0, 2.0, &p);
        assert_eq!(plan.x_max, 16);
        let a: Vec<u32> = plan.phases.iter().filter(|f| f.label.starts_with('A')).map(|f| f.x).collect();
        assert_eq!(a, vec![1, 2, 4, 16, 16]);
        let plan = build_plan(1 << 16, 20.0, 2.0, &p);
        let a: Vec<u32> = plan.phases.iter().filter(|f| f.label.starts_with('A')).map(|f| f.x).collect();
        assert_eq!(a, vec![1, 2, 4, 5]);
    }

    #[test]
    fn stage_b_is_clamped_and_grows() {
        let p = RunParams::default();
        let plan = build_plan(1 << 16, 1000.0, 2.0, &p);
        let b: Vec<u32> = plan.phases.iter().filter(|f| f.label.starts_with('B')).map(|f| f.x).collect();
        // log* 2^16 = 4; x_i = ⌊1000·16^{i/4}/(2·2·8·16)⌋ = ⌊1.953·2^i⌋.
        assert_eq!(b, vec![1, 3, 7, 15, 31]);
        assert!(b.iter().all(|&x| x >= 1 && x <= plan.x_max));
        let tiny = build_plan(4, 0.1, 2.0, &p);
        assert!(tiny.phases.iter().all(|f| f.x == 1));
    }

    #[test]
    fn family_falls_back_when_universe_small() {
        let (f, flag) = choose_family(64, 0.125, 0.5, 1e-9, 0);
        assert!(f.is_whole_universe() && flag.is_some());
        let (f, flag) = choose_family(1024, 0.125, 0.5, 0.125, 0);
        assert!(!f.is_whole_universe() && flag.is_none());
        assert_eq!(f.params().s, 333);
    }
}
