use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use congest_color::graph::{generate_graph, read_graph, write_graph, GraphModel};
use congest_color::harness::{
    emit_report, parse_coloring, parse_config_with, run_experiment, verify_coloring, write_coloring, ColoringKind,
    ReportFormat,
};
use congest_color::repset::{
    build_explicit_family, check_family, family_params, read_family, standard_probes, write_family, RepFamily,
};

#[derive(Parser)]
#[command(name = "congest-color", version, about = "CONGEST coloring simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graph file.
    Gen(GenArgs),
    /// Run an experiment and write reports.
    Run(Box<RunArgs>),
    /// Check a coloring file against a graph file.
    Verify(VerifyArgs),
    /// Build or load a representative family and check its properties.
    CheckFamily(FamilyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// gnp, random_regular, triangle_free, clique, path or cycle.
    #[arg(long)]
    model: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, env = "CONGEST_COLOR_SEED", default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    /// vertex, edge or d2.
    #[arg(long)]
    algorithm: Option<String>,
    /// vertex: slack|sparse; edge: 2plus|2dminus1|1plus;
    /// d2: 1plus_eps|delta2_plus1_sparse|log_c.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    c_c: Option<f64>,
    #[arg(long)]
    reps_a: Option<u32>,
    #[arg(long)]
    reps_b: Option<u32>,
    #[arg(long)]
    t_eps: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    eps_eff: Option<f64>,
    #[arg(long)]
    log_c: Option<u32>,
    #[arg(long)]
    bandwidth_multiplier: Option<f64>,
    #[arg(long)]
    round_cap: Option<u64>,
    /// Drop the repeating fallback stage.
    #[arg(long)]
    no_fallback: bool,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Seed used when no seed list is given.
    #[arg(long, env = "CONGEST_COLOR_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-round trace file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Coloring output; `.seed<N>` is appended when several seeds run.
    #[arg(long)]
    coloring_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    coloring: PathBuf,
    /// vertex, edge or distance2.
    #[arg(long)]
    kind: String,
    /// Colors must be below this value.
    #[arg(long)]
    budget: u64,
    /// Accept uncolored elements.
    #[arg(long)]
    allow_partial: bool,
}

#[derive(Args)]
struct FamilyArgs {
    /// Explicit family file to check.
    #[arg(long, conflicts_with_all = ["k", "build"])]
    file: Option<PathBuf>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.125)]
    delta: f64,
    #[arg(long, default_value_t = 0.125)]
    nu: f64,
    #[arg(long, env = "CONGEST_COLOR_SEED", default_value_t = 0)]
    seed: u64,
    /// Materialize and retry until the family passes.
    #[arg(long, requires = "k")]
    build: bool,
    #[arg(long, default_value_t = 10)]
    attempts: u32,
    /// Where to write a built family.
    #[arg(long, requires = "build")]
    out: Option<PathBuf>,
    /// Random probe sets per size class.
    #[arg(long, default_value_t = 1000)]
    per_class: usize,
    /// Member sets drawn when the family is implicit.
    #[arg(long, default_value_t = 4096)]
    sets: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(*a),
        Command::Verify(a) => verify(a),
        Command::CheckFamily(a) => check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn need<T>(v: Option<T>, what: &str, model: &str) -> Result<T> {
    v.with_context(|| format!("--{what} is required for {model}"))
}

fn gen(a: GenArgs) -> Result<bool> {
    let model = match a.model.as_str() {
        "gnp" => GraphModel::Gnp { n: a.n, p: need(a.p, "p", &a.model)? },
        "triangle_free" => GraphModel::TriangleFree { n: a.n, p: need(a.p, "p", &a.model)? },
        "random_regular" => GraphModel::RandomRegular { n: a.n, d: need(a.d, "d", &a.model)? },
        "clique" => GraphModel::Clique { n: a.n },
        "path" => GraphModel::Path { n: a.n },
        "cycle" => GraphModel::Cycle { n: a.n },
        m => bail!("unknown model {m:?}"),
    };
    let g = generate_graph(&model, a.seed)?;
    write_out(a.out.as_deref(), &write_graph(&g))?;
    Ok(true)
}

fn run(a: RunArgs) -> Result<bool> {
    let text = match &a.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut ov: Vec<(String, String)> = Vec::new();
    let quote = |s: &str| format!("{s:?}");
    let path = |p: &PathBuf| quote(&p.to_string_lossy());
    macro_rules! flag {
        ($key:literal, $v:expr, $fmt:expr) => {
            if let Some(v) = &$v {
                ov.push(($key.to_string(), $fmt(v)));
            }
        };
    }
    flag!("graph_file", a.graph, path);
    flag!("model", a.model, |s: &String| quote(s));
    flag!("n", a.n, |v: &usize| v.to_string());
    flag!("p", a.p, |v: &f64| format!("{v:?}"));
    flag!("d", a.d, |v: &usize| v.to_string());
    flag!("algorithm", a.algorithm, |s: &String| quote(s));
    flag!("variant", a.variant, |s: &String| quote(s));
    flag!("epsilon", a.epsilon, |v: &f64| format!("{v:?}"));
    flag!("c_c", a.c_c, |v: &f64| format!("{v:?}"));
    flag!("reps_a", a.reps_a, |v: &u32| v.to_string());
    flag!("reps_b", a.reps_b, |v: &u32| v.to_string());
    flag!("t_eps", a.t_eps, |v: &u32| v.to_string());
    flag!("alpha", a.alpha, |v: &f64| format!("{v:?}"));
    flag!("nu", a.nu, |v: &f64| format!("{v:?}"));
    flag!("eps_eff", a.eps_eff, |v: &f64| format!("{v:?}"));
    flag!("log_c", a.log_c, |v: &u32| v.to_string());
    flag!("bandwidth_multiplier", a.bandwidth_multiplier, |v: &f64| format!("{v:?}"));
    flag!("round_cap", a.round_cap, |v: &u64| v.to_string());
    flag!("seeds", a.seeds, |v: &Vec<u64>| format!("{v:?}"));
    flag!("json_out", a.json, path);
    flag!("csv_out", a.csv, path);
    flag!("trace_out", a.trace, path);
    flag!("coloring_out", a.coloring_out, path);
    if a.no_fallback {
        ov.push(("fallback".into(), "false".into()));
    }
    for kv in &a.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        ov.push((k.trim().to_string(), v.trim().to_string()));
    }
    let cfg = parse_config_with(&text, &ov)?;
    let exp = cfg.validate(a.seed)?;
    let out = run_experiment(&cfg, &exp)?;

    for r in &out.report.runs {
        eprintln!(
            "seed={} {}/{} n={} rounds={} fallback={} colors={}/{} proper={} {}",
            r.seed,
            r.algorithm,
            r.variant,
            r.n,
            r.report.rounds_used,
            r.report.fallback_rounds,
            r.verdict.colors_used,
            r.verdict.budget,
            r.verdict.proper,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    let json = emit_report(&out.report, ReportFormat::Json)?;
    match &cfg.json_out {
        Some(p) => write_out(Some(p), &json)?,
        None if cfg.csv_out.is_none() => write_out(None, &json)?,
        None => {}
    }
    if let Some(p) = &cfg.csv_out {
        write_out(Some(p), &emit_report(&out.report, ReportFormat::Csv)?)?;
    }
    if let Some(p) = &cfg.trace_out {
        let mut t = String::new();
        for r in &out.report.runs {
            t.push_str(&format!("# seed={}\n", r.seed));
            for line in r.report.trace_lines() {
                t.push_str(&line);
                t.push('\n');
            }
        }
        write_out(Some(p), &t)?;
    }
    if let Some(base) = &cfg.coloring_out {
        let many = out.runs.len() > 1;
        for r in &out.runs {
            let path = if many {
                PathBuf::from(format!("{}.seed{}", base.display(), r.record.seed))
            } else {
                base.clone()
            };
            write_out(Some(&path), &write_coloring(&r.graph, exp.algorithm.kind(), &r.coloring))?;
        }
    }
    Ok(out.report.all_passed)
}

fn verify(a: VerifyArgs) -> Result<bool> {
    let kind: ColoringKind = a.kind.parse()?;
    let g = read_graph(&a.graph)?;
    let text = fs::read_to_string(&a.coloring).with_context(|| format!("reading {}", a.coloring.display()))?;
    let coloring = parse_coloring(&g, kind, &text)?;
    let v = verify_coloring(&g, &coloring, kind, a.budget)?;
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(v.proper && v.budget_ok && (v.complete || a.allow_partial))
}

fn check(a: FamilyArgs) -> Result<bool> {
    let family = match (&a.file, a.k) {
        (Some(path), _) => read_family(path)?,
        (None, Some(k)) => {
            let params = family_params(k, a.alpha, a.delta, a.nu)?;
            if a.build {
                let f = build_explicit_family(params, a.seed, a.attempts)?;
                if let Some(out) = &a.out {
                    write_family(&f, out)?;
                }
                f
            } else {
                RepFamily::implicit(params, a.seed)
            }
        }
        (None, None) => bail!("give --file or --k"),
    };
    let p = *family.params();
    let probes = standard_probes(p.k, p.delta, a.per_class, a.seed ^ 0x5EED);
    let report = check_family(&family, &probes, a.sets, a.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report.pass)
}
