//! The `plansteer` binary. Subcommands cover the whole toolchain: generate
//! a synthetic workload, build a reference store offline, map a single plan,
//! run the online pipeline, cross-validate the mapper, compare ablated
//! variants, and export a 2-D projection of the stored embeddings.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use plansteer_cli::formats;
use plansteer_cli::provider::{build_embedder, ProviderConfig, ProviderKind};
use plansteer_cli::report;
use plansteer_core::{
    adaptive_search, hint_frequency, make_reference_triple, map_plan, pca2, run_ablation,
    run_crossval, run_workload, template_label, CrossvalConfig, GroundTruth, HintSet,
    MappingDecision, MappingParams, PathTaken, PipelineConfig, PipelineMode, ReferenceStore,
    RetrievalMetric, SearchMode, SearchOptions, SyntheticQuery, SyntheticWorkload, WorkloadParams,
};

#[derive(Parser)]
#[command(name = "plansteer", version, about = "Hint steering over a synthetic query optimizer")]
struct Cli {
    /// Master seed; workload generation, fold shuffles, and parallel search
    /// schedules all derive from it.
    #[arg(long, global = true, default_value_t = 56)]
    seed: u64,

    /// Embedding provider.
    #[arg(long, global = true, value_enum, default_value_t = Provider::Local)]
    provider: Provider,

    /// Reference store path, shared by the subcommands that read or write one.
    #[arg(long, global = true)]
    store: Option<PathBuf>,

    /// Embedding dimension; for the remote provider this is the dimension
    /// the service is expected to return.
    #[arg(long, global = true, default_value_t = 256)]
    dimension: usize,

    /// Remote embedding endpoint URL.
    #[arg(long, global = true)]
    endpoint: Option<String>,

    /// Remote embedding model name.
    #[arg(long, global = true)]
    model: Option<String>,

    /// Environment variable holding the remote bearer token.
    #[arg(long, global = true, default_value = "PLANSTEER_API_TOKEN")]
    auth_env: String,

    /// Texts per remote embedding request.
    #[arg(long, global = true, default_value_t = 64)]
    batch_size: usize,

    /// Retry budget for transient remote failures.
    #[arg(long, global = true, default_value_t = 3)]
    max_retries: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Provider {
    Local,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Full,
    MapOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload file.
    GenWorkload {
        #[arg(long, default_value_t = 3133)]
        queries: usize,
        #[arg(long, default_value_t = 16)]
        templates: usize,
        #[arg(long)]
        out: PathBuf,
    },

    /// Search every query offline and write the resulting reference store.
    BuildStore {
        #[arg(long)]
        workload: PathBuf,
        /// Store output path; falls back to the global --store.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        workers: usize,
    },

    /// Map one query's default plan against a store and print the decision.
    Map {
        #[arg(long)]
        workload: PathBuf,
        /// Probe plan file (a query_id plus a plan tree).
        #[arg(long, conflicts_with = "query_id")]
        plan: Option<PathBuf>,
        /// Probe with this workload query's default plan instead.
        #[arg(long)]
        query_id: Option<String>,
        /// Neighbors consulted in the hint vote.
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Neighbors averaged per side of the consistency check.
        #[arg(long, default_value_t = 16)]
        k: usize,
    },

    /// Run the online pipeline over a workload.
    Run {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Full)]
        mode: Mode,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 450_000.0)]
        timeout_ms: f64,
        #[arg(long, default_value_t = 8)]
        workers: usize,
        /// Per-query report file, one JSON record per line plus a summary.
        #[arg(long)]
        report: Option<PathBuf>,
    },

    /// Cross-validate the mapping fast path over held-out folds.
    Crossval {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        k: usize,
        /// Timeout threshold; when omitted it is derived from the
        /// workload's own default latencies.
        #[arg(long)]
        timeout_ms: Option<f64>,
        /// Directory for folds.csv, bands.csv, outcomes.csv, summary.json.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },

    /// Cross-validate all four retrieval/consistency variants.
    Ablate {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long)]
        timeout_ms: Option<f64>,
    },

    /// Project stored default-plan embeddings onto two principal components.
    Pca {
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Ctx {
    seed: u64,
    store: Option<PathBuf>,
    provider: ProviderConfig,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let ctx = Ctx {
        seed: cli.seed,
        store: cli.store.clone(),
        provider: ProviderConfig {
            kind: match cli.provider {
                Provider::Local => ProviderKind::Local,
                Provider::Remote => ProviderKind::Remote,
            },
            dimension: cli.dimension,
            endpoint: cli.endpoint.clone(),
            model_name: cli.model.clone(),
            auth_env_var: Some(cli.auth_env.clone()),
            batch_size: cli.batch_size,
            max_retries: cli.max_retries,
        },
    };
    match cli.command {
        Command::GenWorkload { queries, templates, out } => cmd_gen_workload(&ctx, queries, templates, &out),
        Command::BuildStore { workload, out, workers } => cmd_build_store(&ctx, &workload, out, workers),
        Command::Map { workload, plan, query_id, n, k } => cmd_map(&ctx, &workload, plan, query_id, n, k),
        Command::Run { workload, mode, n, k, timeout_ms, workers, report } => {
            cmd_run(&ctx, &workload, mode, n, k, timeout_ms, workers, report)
        }
        Command::Crossval { workload, folds, n, k, timeout_ms, report_dir } => {
            cmd_crossval(&ctx, &workload, folds, n, k, timeout_ms, report_dir)
        }
        Command::Ablate { workload, folds, n, k, timeout_ms } => {
            cmd_ablate(&ctx, &workload, folds, n, k, timeout_ms)
        }
        Command::Pca { out } => cmd_pca(&ctx, out),
    }
}

fn cmd_gen_workload(ctx: &Ctx, queries: usize, templates: usize, out: &PathBuf) -> Result<()> {
    let params = WorkloadParams {
        template_count: templates,
        query_count: queries,
        ..WorkloadParams::default()
    };
    let workload = SyntheticWorkload::generate(ctx.seed, params)?;
    formats::save_workload(&workload, out)?;
    println!(
        "wrote {} queries over {} templates to {} (seed {})",
        workload.queries.len(),
        workload.templates.len(),
        out.display(),
        ctx.seed
    );
    Ok(())
}

fn search_options(ctx: &Ctx, workers: usize) -> SearchOptions {
    SearchOptions {
        mode: if workers <= 1 { SearchMode::Sequential } else { SearchMode::Parallel },
        workers,
        schedule_seed: ctx.seed,
    }
}

fn cmd_build_store(ctx: &Ctx, workload_path: &PathBuf, out: Option<PathBuf>, workers: usize) -> Result<()> {
    let out_path = out
        .or_else(|| ctx.store.clone())
        .context("no store output path: pass --out or the global --store")?;
    let workload = formats::load_workload(workload_path)?;
    let embedder = build_embedder(&ctx.provider)?;
    let options = search_options(ctx, workers);

    let mut store = ReferenceStore::new();
    for query in &workload.queries {
        let engine = workload.engine_for(query);
        let result = adaptive_search(&engine, &options)
            .with_context(|| format!("search failed for {}", query.query_id))?;
        let triple = make_reference_triple(&query.query_id, &result, &engine, embedder.as_ref())
            .with_context(|| format!("could not build a triple for {}", query.query_id))?;
        store.insert(triple)?;
    }
    formats::save_store(&store, &out_path)?;

    let rows = hint_frequency(store.iter().map(|t| t.best_hints));
    println!(
        "{}",
        report::render_table(&report::FREQUENCY_HEADERS, &report::frequency_rows(&rows))
    );
    println!("{} triples -> {}", store.len(), out_path.display());
    Ok(())
}

fn find_query<'a>(workload: &'a SyntheticWorkload, query_id: &str) -> Result<&'a SyntheticQuery> {
    workload
        .queries
        .iter()
        .find(|q| q.query_id == query_id)
        .with_context(|| format!("query {query_id} is not in the workload"))
}

fn cmd_map(
    ctx: &Ctx,
    workload_path: &PathBuf,
    plan: Option<PathBuf>,
    query_id: Option<String>,
    n: usize,
    k: usize,
) -> Result<()> {
    let store_path = ctx.store.clone().context("map needs the global --store")?;
    let store = formats::load_store(&store_path)?;
    if store.is_empty() {
        bail!("reference store {} is empty", store_path.display());
    }
    let workload = formats::load_workload(workload_path)?;
    let embedder = build_embedder(&ctx.provider)?;

    let (probe_id, probe_plan) = match (plan, query_id) {
        (Some(path), None) => formats::load_plan_file(&path)?,
        (None, Some(qid)) => {
            let query = find_query(&workload, &qid)?;
            let default_plan = workload.plan(query, &HintSet::DEFAULT)?;
            (qid, default_plan)
        }
        _ => bail!("pass exactly one of --plan or --query-id"),
    };
    let query = find_query(&workload, &probe_id)?;
    let engine = workload.engine_for(query);
    let params = MappingParams {
        vote_neighbors: n,
        check_neighbors: k,
    };
    let decision = map_plan(&engine, &probe_plan, embedder.as_ref(), &store, params)?;
    print_decision(&probe_id, &decision);
    Ok(())
}

fn print_decision(query_id: &str, decision: &MappingDecision) {
    println!("query: {query_id}");
    match &decision.candidate {
        Some(c) => println!("candidate: {}", c.format_bits()),
        None => println!("candidate: none"),
    }
    println!("votes:");
    let mut votes: Vec<(&HintSet, &usize)> = decision.vote_counts.iter().collect();
    votes.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    for (hints, count) in votes {
        println!("  {}  {}", hints.format_bits(), count);
    }
    let fmt_opt = |v: Option<f64>| match v {
        Some(ms) => format!("{ms:.3}"),
        None => String::from("-"),
    };
    println!("mean default ms:   {}", fmt_opt(decision.mean_default_ms));
    println!("mean candidate ms: {}", fmt_opt(decision.mean_candidate_ms));
    println!("accepted: {}", decision.accepted);
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    ctx: &Ctx,
    workload_path: &PathBuf,
    mode: Mode,
    n: usize,
    k: usize,
    timeout_ms: f64,
    workers: usize,
    report_path: Option<PathBuf>,
) -> Result<()> {
    let workload = formats::load_workload(workload_path)?;
    let embedder = build_embedder(&ctx.provider)?;
    let mut store = match &ctx.store {
        Some(path) if path.exists() => formats::load_store(path)?,
        _ => ReferenceStore::new(),
    };
    let seeded = store.len();

    let config = PipelineConfig {
        params: MappingParams {
            vote_neighbors: n,
            check_neighbors: k,
        },
        mode: match mode {
            Mode::Full => PipelineMode::Full,
            Mode::MapOnly => PipelineMode::MapOnly,
        },
        timeout_ms,
        search: search_options(ctx, workers),
    };
    let items = workload
        .queries
        .iter()
        .map(|q| (q.query_id.clone(), workload.engine_for(q)));
    let run = run_workload(items, embedder.as_ref(), &mut store, &config)?;

    let count = |path: PathTaken| run.reports.iter().filter(|r| r.path_taken == path).count();
    println!("queries:       {}", run.reports.len() + run.failures.len());
    println!("fast path:     {}", count(PathTaken::Fast));
    println!("fallback:      {}", count(PathTaken::Fallback));
    println!("default path:  {}", count(PathTaken::Default));
    println!("failures:      {}", run.failures.len());
    println!("timeouts:      {}", run.reports.iter().filter(|r| r.timed_out).count());
    println!("triples added: {}", store.len() - seeded);
    println!(
        "total latency: {:.3} ms",
        run.reports.iter().map(|r| r.latency_ms).sum::<f64>()
    );
    for failure in &run.failures {
        eprintln!("failed {}: {}", failure.query_id, failure.detail);
    }

    if let Some(path) = report_path {
        formats::write_run_report(&run, &path)?;
        println!("report -> {}", path.display());
    }
    if mode == Mode::Full {
        if let Some(path) = &ctx.store {
            formats::save_store(&store, path)?;
            println!("store ({} triples) -> {}", store.len(), path.display());
        }
    }
    Ok(())
}

fn crossval_config(ctx: &Ctx, folds: usize, n: usize, k: usize, timeout_ms: Option<f64>) -> CrossvalConfig {
    CrossvalConfig {
        folds,
        fold_seed: ctx.seed,
        params: MappingParams {
            vote_neighbors: n,
            check_neighbors: k,
        },
        metric: RetrievalMetric::Embedding,
        consistency_check: true,
        timeout_ms,
    }
}

/// The stock 450 000 ms cutoff assumes wall-clock query latencies; synthetic
/// latencies sit orders of magnitude lower, so a derived threshold reports
/// how far it was rescaled.
fn print_threshold(requested: Option<f64>, used: f64) {
    match requested {
        Some(_) => println!("timeout threshold: {used:.3} ms"),
        None => println!(
            "timeout threshold: {:.3} ms (450000 ms cutoff rescaled {:.0}x to this workload's latency range)",
            used,
            450_000.0 / used
        ),
    }
}

fn cmd_crossval(
    ctx: &Ctx,
    workload_path: &PathBuf,
    folds: usize,
    n: usize,
    k: usize,
    timeout_ms: Option<f64>,
    report_dir: Option<PathBuf>,
) -> Result<()> {
    let workload = formats::load_workload(workload_path)?;
    let embedder = build_embedder(&ctx.provider)?;
    let truth = GroundTruth::compute(&workload)?;
    let config = crossval_config(ctx, folds, n, k, timeout_ms);
    let output = run_crossval(&workload, &truth, embedder.as_ref(), &config)?;

    println!(
        "{}",
        report::render_table(&report::FOLD_HEADERS, &report::fold_rows(&output.folds, false))
    );
    println!();
    println!(
        "{}",
        report::render_table(&report::BAND_HEADERS, &report::band_rows(&output.bands, false))
    );
    println!();
    print!("{}", report::summary_lines(&output.summary));
    print_threshold(timeout_ms, output.timeout_ms);

    if let Some(dir) = report_dir {
        report::write_crossval_reports(&output, &dir)?;
        println!("reports -> {}", dir.display());
    }
    Ok(())
}

fn cmd_ablate(
    ctx: &Ctx,
    workload_path: &PathBuf,
    folds: usize,
    n: usize,
    k: usize,
    timeout_ms: Option<f64>,
) -> Result<()> {
    let workload = formats::load_workload(workload_path)?;
    let embedder = build_embedder(&ctx.provider)?;
    let truth = GroundTruth::compute(&workload)?;
    let base = crossval_config(ctx, folds, n, k, timeout_ms);
    let table = run_ablation(&workload, &truth, embedder.as_ref(), &base)?;

    println!(
        "{}",
        report::render_table(&report::ABLATION_HEADERS, &report::ablation_rows(&table, false))
    );
    print_threshold(timeout_ms, table.timeout_ms);
    Ok(())
}

fn cmd_pca(ctx: &Ctx, out: Option<PathBuf>) -> Result<()> {
    let store_path = ctx.store.clone().context("pca needs the global --store")?;
    let store = formats::load_store(&store_path)?;
    if store.len() < 3 {
        bail!("pca needs at least 3 stored triples, found {}", store.len());
    }
    let points: Vec<&[f64]> = store.iter().map(|t| t.default_vec.values()).collect();
    let pca = pca2(&points)?;
    if pca.degenerate {
        eprintln!("warning: covariance rank < 2, second component zeroed");
    }

    let mut rows = Vec::with_capacity(store.len());
    for triple in store.iter() {
        let (pc1, pc2) = pca.project(triple.default_vec.values())?;
        rows.push(vec![
            triple.query_id.clone(),
            template_label(&triple.query_id).unwrap_or("-").to_string(),
            format!("{pc1}"),
            format!("{pc2}"),
        ]);
    }
    let csv = report::render_csv(&["query_id", "template_label", "pc1", "pc2"], &rows);
    match out {
        Some(path) => {
            fs::write(&path, csv)?;
            println!("{} points -> {}", rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
