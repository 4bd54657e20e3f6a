//! Experiment configuration: flat `key = value` lines (TOML syntax, top
//! level keys only).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::d2color::D2Mode;
use crate::ecolor::EdgeVariant;
use crate::graph::GraphModel;
use crate::plan::RunParams;
use crate::vcolor::VertexVariant;

use super::{ColoringKind, HarnessError};

/// Raw configuration as written. Unset driver knobs take the driver
/// defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph_file: Option<PathBuf>,
    /// `gnp`, `random_regular`, `triangle_free`, `clique`, `path` or `cycle`.
    pub model: Option<String>,
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub d: Option<usize>,
    /// Generator seed; defaults to each run's seed.
    pub graph_seed: Option<u64>,
    /// `vertex`, `edge` or `d2`.
    pub algorithm: Option<String>,
    pub variant: Option<String>,
    pub epsilon: Option<f64>,
    pub c_c: Option<f64>,
    pub reps_a: Option<u32>,
    pub reps_b: Option<u32>,
    pub alpha: Option<f64>,
    pub nu: Option<f64>,
    pub t_eps: Option<u32>,
    pub eps_eff: Option<f64>,
    pub log_c: Option<u32>,
    pub fallback: Option<bool>,
    /// Per-edge bandwidth as a multiple of `⌈log₂ n⌉`.
    pub bandwidth_multiplier: Option<f64>,
    pub round_cap: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub json_out: Option<PathBuf>,
    pub csv_out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
    pub coloring_out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphSource {
    File(PathBuf),
    Model { model: GraphModel, seed: Option<u64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Algorithm {
    Vertex(VertexVariant),
    Edge(EdgeVariant),
    Distance2(D2Mode),
}

impl Algorithm {
    pub fn kind(&self) -> ColoringKind {
        match self {
            Algorithm::Vertex(_) => ColoringKind::Vertex,
            Algorithm::Edge(_) => ColoringKind::Edge,
            Algorithm::Distance2(_) => ColoringKind::Distance2,
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Algorithm::Vertex(VertexVariant::Slack { .. }) => "slack",
            Algorithm::Vertex(VertexVariant::LocallySparse { .. }) => "sparse",
            Algorithm::Edge(EdgeVariant::TwoPlus { .. }) => "2plus",
            Algorithm::Edge(EdgeVariant::TwoDeltaMinusOne) => "2dminus1",
            Algorithm::Edge(EdgeVariant::OnePlus { .. }) => "1plus",
            Algorithm::Distance2(D2Mode::OnePlusEps { .. }) => "1plus_eps",
            Algorithm::Distance2(D2Mode::Delta2PlusOneSparse { .. }) => "delta2_plus1_sparse",
            Algorithm::Distance2(D2Mode::LogC { .. }) => "log_c",
        }
    }
}

/// A validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub graph: GraphSource,
    pub algorithm: Algorithm,
    pub params: RunParams,
    pub seeds: Vec<u64>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    parse_config_with(text, &[])
}

/// Parses `text` and then applies `key=value` overrides, as if appended.
pub fn parse_config_with(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig, HarnessError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    for (key, raw) in overrides {
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.clone()));
        table.insert(key.clone(), value);
    }
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(HarnessError::Config(format!("key {k:?}: nested tables are not allowed")));
    }
    table.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))
}

fn need<T>(v: Option<T>, what: &str) -> Result<T, HarnessError> {
    v.ok_or_else(|| HarnessError::Config(format!("missing {what}")))
}

impl ExperimentConfig {
    /// Resolves and checks every setting. `default_seed` fills in a missing
    /// seed list.
    pub fn validate(&self, default_seed: Option<u64>) -> Result<Experiment, HarnessError> {
        let graph = match (&self.graph_file, &self.model) {
            (Some(_), Some(_)) => return Err(HarnessError::Config("set graph_file or model, not both".into())),
            (Some(path), None) => GraphSource::File(path.clone()),
            (None, Some(name)) => GraphSource::Model { model: self.model(name)?, seed: self.graph_seed },
            (None, None) => return Err(HarnessError::Config("missing graph_file or model".into())),
        };
        let mut params = RunParams::default();
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { params.$f = v; } )* };
        }
        take!(epsilon, c_c, reps_a, reps_b, alpha, eps_eff, log_c, fallback, round_cap);
        params.nu = self.nu;
        params.t_eps = self.t_eps;
        if let Some(m) = self.bandwidth_multiplier {
            if m.is_nan() || m < 1.0 {
                return Err(HarnessError::Config(format!(
                    "bandwidth multiplier {m} puts B below ceil(log2 n)"
                )));
            }
            if m.fract() != 0.0 || m > 1024.0 {
                return Err(HarnessError::Config(format!("bandwidth multiplier {m} must be an integer up to 1024")));
            }
            params.bandwidth_multiplier = m as usize;
        }
        if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
            return Err(HarnessError::Config(format!("epsilon must be positive, got {}", params.epsilon)));
        }
        if !(params.alpha > 0.0 && params.alpha < 1.0) {
            return Err(HarnessError::Config(format!("alpha must lie in (0, 1), got {}", params.alpha)));
        }
        if let Some(nu) = params.nu {
            if !(nu > 0.0 && nu < 1.0) {
                return Err(HarnessError::Config(format!("nu must lie in (0, 1), got {nu}")));
            }
        }
        if !(params.c_c > 0.0 && params.c_c.is_finite()) || !(params.eps_eff > 0.0 && params.eps_eff < 1.0) {
            return Err(HarnessError::Config("c_c must be positive and eps_eff in (0, 1)".into()));
        }
        if params.reps_a == 0 || params.reps_b == 0 || params.round_cap == 0 || params.log_c == 0 {
            return Err(HarnessError::Config("reps_a, reps_b, round_cap and log_c must be at least 1".into()));
        }
        if params.t_eps == Some(0) {
            return Err(HarnessError::Config("t_eps must be at least 1".into()));
        }
        let algorithm = self.algorithm(&params)?;
        let seeds = match &self.seeds {
            Some(s) if s.is_empty() => return Err(HarnessError::Config("seed list is empty".into())),
            Some(s) => s.clone(),
            None => vec![default_seed.unwrap_or(0)],
        };
        Ok(Experiment { graph, algorithm, params, seeds })
    }

    fn model(&self, name: &str) -> Result<GraphModel, HarnessError> {
        let n = need(self.n, "n")?;
        Ok(match name {
            "gnp" => GraphModel::Gnp { n, p: need(self.p, "p")? },
            "triangle_free" => GraphModel::TriangleFree { n, p: need(self.p, "p")? },
            "random_regular" => GraphModel::RandomRegular { n, d: need(self.d, "d")? },
            "clique" => GraphModel::Clique { n },
            "path" => GraphModel::Path { n },
            "cycle" => GraphModel::Cycle { n },
            _ => return Err(HarnessError::Config(format!("unknown model {name:?}"))),
        })
    }

    fn algorithm(&self, params: &RunParams) -> Result<Algorithm, HarnessError> {
        let epsilon = params.epsilon;
        let alg = need(self.algorithm.as_deref(), "algorithm")?;
        let variant = self.variant.as_deref();
        let bad = || HarnessError::Config(format!("unknown variant {variant:?} for algorithm {alg:?}"));
        Ok(match alg {
            "vertex" => Algorithm::Vertex(match variant.unwrap_or("slack") {
                "slack" => VertexVariant::Slack { epsilon },
                "sparse" => VertexVariant::LocallySparse { epsilon },
                _ => return Err(bad()),
            }),
            "edge" => Algorithm::Edge(match variant.unwrap_or("2plus") {
                "2plus" => EdgeVariant::TwoPlus { epsilon },
                "2dminus1" => EdgeVariant::TwoDeltaMinusOne,
                "1plus" => EdgeVariant::OnePlus { epsilon },
                _ => return Err(bad()),
            }),
            "d2" => Algorithm::Distance2(match variant.unwrap_or("1plus_eps") {
                "1plus_eps" => D2Mode::OnePlusEps { epsilon },
                "delta2_plus1_sparse" => D2Mode::Delta2PlusOneSparse { epsilon },
                "log_c" => D2Mode::LogC { c: params.log_c },
                _ => return Err(bad()),
            }),
            _ => return Err(HarnessError::Config(format!("unknown algorithm {alg:?}"))),
        })
    }
}
