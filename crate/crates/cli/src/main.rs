use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use eed_core::check::{check, dense_check, CheckMethod, DEFAULT_DENSE_CAP};
use eed_core::graph::{
    gen_block_graph, gen_geometric, graph_stats, load_edge_list, write_edge_list, write_node_map, BlockMode,
    GraphStats, LoadedGraph,
};
use eed_core::model::{load_embedding, save_embedding};
use eed_core::optim::{LossKind, TrainConfig, TrainTrace};
use eed_core::search::{compression_sweep, reconstructed_graph, search_eed, SearchConfig};
use eed_core::{Embedding, Error as CoreError, ModelKind, SparseGraph};
use ndarray::Axis;

#[derive(Parser, Debug)]
#[command(name = "eed", version, about = "Exact embedding dimension search for graphs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Search for the smallest exact embedding dimension.
    Search(SearchArgs),
    /// Check whether an embedding reconstructs a graph exactly.
    Check(CheckArgs),
    /// Write a synthetic graph.
    Generate(GenerateArgs),
    /// Graph statistics, optionally of the graph an embedding predicts.
    Stats(StatsArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct GraphArgs {
    /// Treat the edge list as directed.
    #[arg(long)]
    directed: bool,
    /// Model self-links (i, i); every node gets one.
    #[arg(long)]
    self_loops: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Lpca,
    Eig,
    L2,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Lpca => ModelKind::Lpca,
            ModelArg::Eig => ModelKind::Eig,
            ModelArg::L2 => ModelKind::L2,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum LossArg {
    Full,
    Rn,
    Cc,
    Hbdm,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Dense,
    Kdtree,
    Auto,
}

impl From<MethodArg> for CheckMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dense => CheckMethod::Dense,
            MethodArg::Kdtree => CheckMethod::KdTree,
            MethodArg::Auto => CheckMethod::Auto,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct SearchArgs {
    /// Edge list file.
    graph: PathBuf,
    #[command(flatten)]
    graph_args: GraphArgs,
    #[arg(long, value_enum, default_value = "l2")]
    model: ModelArg,
    #[arg(long, value_enum, default_value = "full")]
    loss: LossArg,
    #[arg(long, default_value_t = 1)]
    lb: usize,
    #[arg(long, default_value_t = 64)]
    ub: usize,
    /// Epoch budget per trial.
    #[arg(long, default_value_t = 30000)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    /// Epochs without improvement before the learning rate is halved.
    #[arg(long, default_value_t = 200)]
    patience: usize,
    #[arg(long, default_value_t = 100)]
    check_every: usize,
    /// Nodes per random-node batch.
    #[arg(long, default_value_t = 1000)]
    batch: usize,
    /// Non-links sampled per link for case-control.
    #[arg(long, default_value_t = 5)]
    cc_k: usize,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_DENSE_CAP)]
    dense_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent searches with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Searches run concurrently as child processes.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CheckArgs {
    embedding: PathBuf,
    graph: PathBuf,
    #[command(flatten)]
    graph_args: GraphArgs,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_DENSE_CAP)]
    dense_cap: usize,
    /// Write misclassified dyads to this CSV file.
    #[arg(long)]
    active_set: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GenerateArgs {
    #[command(subcommand)]
    kind: GenKind,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
enum GenKind {
    /// Block graph; sizes as `10x3` (three blocks of ten) or `4,5,6`.
    Blocks {
        #[arg(long)]
        sizes: String,
        #[arg(long, value_enum, default_value = "homophilous")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Points uniform in the unit ball, linked within `bias`.
    Geometric {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        bias: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Link with probability sigmoid(bias - distance).
        #[arg(long)]
        stochastic: bool,
        #[arg(long)]
        out: PathBuf,
        /// Also write the generating embedding.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Homophilous,
    Heterophilous,
}

#[derive(Args, Debug, Clone, Serialize)]
struct StatsArgs {
    graph: PathBuf,
    #[command(flatten)]
    graph_args: GraphArgs,
    /// Embedding whose predicted graph is analysed with --reconstructed.
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long, requires = "embedding")]
    reconstructed: bool,
    /// Compress the embedding to every lower dimension and report each.
    #[arg(long, requires = "embedding")]
    sweep: bool,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    path_sample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Cmd::Search(a) => cmd_search(a),
        Cmd::Check(a) => cmd_check(a),
        Cmd::Generate(a) => cmd_generate(a).map(|_| 0),
        Cmd::Stats(a) => cmd_stats(a).map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_graph(path: &Path, a: &GraphArgs) -> Result<LoadedGraph> {
    let loaded = load_edge_list(path, a.directed, a.self_loops).with_context(|| format!("loading {}", path.display()))?;
    Ok(LoadedGraph {
        graph: if a.self_loops {
            loaded.graph.with_self_loops()
        } else {
            loaded.graph
        },
        node_ids: loaded.node_ids,
    })
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: serde_json::Value,
    seed: u64,
    inputs: &[&Path],
    outputs: &[&str],
    started: Instant,
) -> Result<()> {
    let digests: Vec<serde_json::Value> = inputs
        .iter()
        .map(|p| Ok(json!({ "path": p.display().to_string(), "sha256": sha256_file(p)? })))
        .collect::<Result<_>>()?;
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": config,
        "inputs": digests,
        "outputs": outputs,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    write_json(&out.join("manifest.json"), &manifest)
}

fn loss_kind(a: &SearchArgs) -> LossKind {
    match a.loss {
        LossArg::Full => LossKind::Full,
        LossArg::Rn => LossKind::Rn { batch: a.batch },
        LossArg::Cc => LossKind::Cc { k: a.cc_k },
        LossArg::Hbdm => LossKind::Hbdm,
    }
}

fn cmd_search(a: SearchArgs) -> Result<u8> {
    if a.repeat > 1 {
        return fan_out(&a);
    }
    let started = Instant::now();
    let loaded = load_graph(&a.graph, &a.graph_args)?;
    let g = &loaded.graph;

    let mut cfg = SearchConfig::new(a.model.into(), a.lb, a.ub);
    cfg.loss = loss_kind(&a);
    cfg.train = TrainConfig {
        epochs: a.epochs,
        lr0: a.lr,
        patience: a.patience,
        check_every: a.check_every,
        seed: a.seed,
        check_method: a.method.into(),
        dense_cap: a.dense_cap,
        ..TrainConfig::default()
    };
    cfg.validate()?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let result = search_eed(g, &cfg)?;

    let mut outputs = vec!["result.json", "trace.csv", "activeset.csv", "node_map.tsv"];
    write_node_map(&loaded.node_ids, create(&a.out.join("node_map.tsv"))?)?;
    write_traces(&a.out.join("trace.csv"), &result.trials.iter().map(|t| t.dim).collect::<Vec<_>>(), &result.traces)?;

    let final_embedding = result.best.as_ref().unwrap_or(&result.last_trial);
    let active = check(final_embedding, g, cfg.train.check_method, cfg.train.dense_cap)?;
    let mut w = create(&a.out.join("activeset.csv"))?;
    active.write_csv(&mut w)?;
    w.flush()?;
    if let Some(best) = &result.best {
        save_embedding(best, a.out.join("embedding.eed"))?;
        outputs.push("embedding.eed");
    }

    let summary = json!({
        "config": cfg,
        "graph": {
            "path": a.graph.display().to_string(),
            "n": g.n(),
            "links": g.num_links(),
            "directed": g.is_directed(),
            "self_loops": g.include_self_loops(),
        },
        "d_star": result.d_star,
        "aborted": result.aborted(),
        "trials": result.trials,
        "embedding": result.best.as_ref().map(|_| "embedding.eed"),
        "misclassified_per_dyad": active.fraction(),
    });
    write_json(&a.out.join("result.json"), &summary)?;
    write_manifest(
        &a.out,
        "search",
        serde_json::to_value(&a)?,
        a.seed,
        &[&a.graph],
        &outputs,
        started,
    )?;

    match result.d_star {
        Some(d) => {
            println!("d_star: {d}");
            Ok(0)
        }
        None => {
            eprintln!("no exact embedding found at ub = {}; search stopped", a.ub);
            Ok(1)
        }
    }
}

fn write_traces(path: &Path, dims: &[usize], traces: &[TrainTrace]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "trial,dim,epoch,loss,lr,misclassified")?;
    for (t, (dim, trace)) in dims.iter().zip(traces).enumerate() {
        for r in &trace.rows {
            let mis = r.misclassified.map(|m| m.to_string()).unwrap_or_default();
            writeln!(w, "{t},{dim},{},{},{},{mis}", r.epoch, r.loss, r.lr)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs `repeat` single searches as child processes, at most `jobs` at a time.
fn fan_out(a: &SearchArgs) -> Result<u8> {
    let started = Instant::now();
    fs::create_dir_all(&a.out)?;
    let exe = std::env::current_exe()?;
    let seeds: Vec<u64> = (0..a.repeat as u64).map(|k| a.seed + k).collect();
    let mut codes = Vec::new();
    for chunk in seeds.chunks(a.jobs.max(1)) {
        let children: Vec<_> = chunk
            .iter()
            .map(|&seed| {
                let mut child = a.clone();
                child.repeat = 1;
                child.jobs = 1;
                child.seed = seed;
                child.out = a.out.join(format!("seed-{seed}"));
                Command::new(&exe).args(search_argv(&child)).spawn().map(|c| (seed, c))
            })
            .collect::<std::io::Result<_>>()?;
        for (seed, mut c) in children {
            let status = c.wait()?;
            codes.push((seed, status.code().unwrap_or(2)));
        }
    }
    let mut runs = Vec::new();
    for &(seed, code) in &codes {
        let path = a.out.join(format!("seed-{seed}")).join("result.json");
        let d_star = fs::read_to_string(&path)
            .ok()
            .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
            .and_then(|v| v["d_star"].as_u64());
        runs.push(json!({ "seed": seed, "exit_code": code, "d_star": d_star }));
    }
    if codes.iter().any(|&(_, c)| c == 2) {
        bail!("at least one search failed; see the per-seed output directories");
    }
    let best = runs.iter().filter_map(|r| r["d_star"].as_u64()).min();
    write_json(&a.out.join("summary.json"), &json!({ "runs": runs, "min_d_star": best }))?;
    write_manifest(&a.out, "search", serde_json::to_value(a)?, a.seed, &[&a.graph], &["summary.json"], started)?;
    match best {
        Some(d) => {
            println!("min d_star over {} searches: {d}", a.repeat);
            Ok(0)
        }
        None => Ok(1),
    }
}

fn search_argv(a: &SearchArgs) -> Vec<String> {
    let value = |v: &dyn ValueEnumName| v.name();
    let mut argv = vec![
        "search".to_string(),
        a.graph.display().to_string(),
        "--model".into(),
        value(&a.model),
        "--loss".into(),
        value(&a.loss),
        "--method".into(),
        value(&a.method),
    ];
    for (flag, v) in [
        ("--lb", a.lb.to_string()),
        ("--ub", a.ub.to_string()),
        ("--epochs", a.epochs.to_string()),
        ("--lr", a.lr.to_string()),
        ("--patience", a.patience.to_string()),
        ("--check-every", a.check_every.to_string()),
        ("--batch", a.batch.to_string()),
        ("--cc-k", a.cc_k.to_string()),
        ("--dense-cap", a.dense_cap.to_string()),
        ("--seed", a.seed.to_string()),
        ("--out", a.out.display().to_string()),
    ] {
        argv.push(flag.into());
        argv.push(v);
    }
    if a.graph_args.directed {
        argv.push("--directed".into());
    }
    if a.graph_args.self_loops {
        argv.push("--self-loops".into());
    }
    argv
}

trait ValueEnumName {
    fn name(&self) -> String;
}

impl<T: ValueEnum> ValueEnumName for T {
    fn name(&self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

fn cmd_check(a: CheckArgs) -> Result<u8> {
    let loaded = load_graph(&a.graph, &a.graph_args)?;
    let g = &loaded.graph;
    let e = load_embedding(&a.embedding).with_context(|| format!("loading {}", a.embedding.display()))?;
    if e.n() != g.n() {
        bail!("embedding has {} nodes but the graph has {}", e.n(), g.n());
    }
    let method: CheckMethod = a.method.into();
    let active = match method {
        CheckMethod::Dense => match dense_check(&e, g, a.dense_cap) {
            Ok(report) => {
                println!("frobenius_rel_error: {}", report.frobenius_rel_error);
                report.active
            }
            Err(err @ CoreError::DenseCapExceeded { .. }) => {
                bail!("{err} (pass --method kdtree or raise --dense-cap)")
            }
            Err(err) => return Err(err.into()),
        },
        _ => check(&e, g, method, a.dense_cap)?,
    };
    println!("misclassified: {}", active.len());
    println!("fraction: {}", active.fraction());
    if let Some(path) = &a.active_set {
        let mut w = create(path)?;
        active.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(if active.is_exact() { 0 } else { 1 })
}

fn parse_sizes(spec: &str) -> Result<Vec<usize>> {
    let parse = |s: &str| -> Result<usize> { s.trim().parse().with_context(|| format!("invalid block size {s:?}")) };
    if let Some((size, count)) = spec.split_once('x') {
        return Ok(vec![parse(size)?; parse(count)?]);
    }
    spec.split(',').map(parse).collect()
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    match a.kind {
        GenKind::Blocks { sizes, mode, out } => {
            let mode = match mode {
                ModeArg::Homophilous => BlockMode::Homophilous,
                ModeArg::Heterophilous => BlockMode::Heterophilous,
            };
            let g = gen_block_graph(&parse_sizes(&sizes)?, mode)?;
            let mut w = create(&out)?;
            write_edge_list(&g, &mut w)?;
            w.flush()?;
            println!("nodes: {} links: {}", g.n(), g.num_links());
        }
        GenKind::Geometric {
            n,
            d,
            bias,
            seed,
            stochastic,
            out,
            truth,
        } => {
            let (g, e) = gen_geometric(n, d, bias, seed, stochastic)?;
            let mut w = create(&out)?;
            write_edge_list(&g, &mut w)?;
            w.flush()?;
            // Isolated nodes do not survive an edge-list round trip, so the
            // written embedding keeps only the rows that will be reloaded.
            let kept: Vec<usize> = (0..g.n()).filter(|&i| g.out_degree(i) > 0).collect();
            if let Some(path) = truth {
                let e = Embedding::new(e.model, e.x.select(Axis(0), &kept), e.y.select(Axis(0), &kept), e.bias)?;
                save_embedding(&e, path)?;
            }
            println!("nodes: {} links: {}", g.n(), g.num_links());
            if kept.len() < g.n() {
                println!("isolated nodes dropped: {}", g.n() - kept.len());
            }
        }
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let loaded = load_graph(&a.graph, &a.graph_args)?;
    let g = &loaded.graph;
    let mut rows: Vec<(String, Option<f64>, GraphStats)> = Vec::new();
    let stats = |h: &SparseGraph| graph_stats(h, a.path_sample, a.seed);

    match &a.embedding {
        None => rows.push(("graph".into(), None, stats(g))),
        Some(path) => {
            let e = load_embedding(path).with_context(|| format!("loading {}", path.display()))?;
            if e.n() != g.n() {
                bail!("embedding has {} nodes but the graph has {}", e.n(), g.n());
            }
            rows.push(("graph".into(), None, stats(g)));
            if a.sweep {
                let mut cfg = SearchConfig::new(e.model, 1, e.dim().max(2));
                cfg.train = TrainConfig {
                    epochs: a.epochs,
                    lr0: a.lr,
                    seed: a.seed,
                    ..TrainConfig::default()
                };
                for p in compression_sweep(&e, g, &cfg)? {
                    let rg = reconstructed_graph(&p.embedding, g)?;
                    rows.push((format!("D={}", p.dim), Some(p.fraction()), stats(&rg)));
                }
            } else if a.reconstructed {
                let active = check(&e, g, CheckMethod::Auto, DEFAULT_DENSE_CAP)?;
                let rg = reconstructed_graph(&e, g)?;
                rows.push((format!("D={}", e.dim()), Some(active.fraction()), stats(&rg)));
            }
        }
    }

    let mut w: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(w, "source,misclassified_fraction,{}", GraphStats::CSV_HEADER)?;
    for (source, frac, s) in rows {
        let frac = frac.map(|f| f.to_string()).unwrap_or_default();
        writeln!(w, "{source},{frac},{}", s.csv_row())?;
    }
    w.flush()?;
    Ok(())
}
