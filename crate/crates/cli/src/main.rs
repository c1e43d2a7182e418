//! `nkg`: build, normalize, query and evaluate narrative graphs.
//!
//! Exit codes: 0 success, 1 other failure, 2 parse or validation failure,
//! 3 graph already normalized, 4 embedding provider failure, 5 unknown id or
//! wrong node kind, 6 retrieval mode does not match the graph.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nkg_core::annotation::{parse_annotations, serialize_annotations, AnnotationError};
use nkg_core::builder::build_all;
use nkg_core::eval::{build_gold, render_report, run_eval, EvalError, EvalSettings, GoldLabelFile};
use nkg_core::fixture::{fixture_gold, generate_fixture, FixtureKind};
use nkg_core::graph::{GraphError, NarrativeGraph, SerdeError};
use nkg_core::normalize::{apply_normalization, GoldLabels, NormalizationMap, NormalizeError, Normalizer};
use nkg_core::reason::{
    character_trajectory, reconstruct_timeline, retrieve_actions_with, summarize_event, trace_dialogue,
    OrderKind, QueryResolver, ReasonError, RetrievalMode,
};

use config::{Config, FileConfig, FlagConfig};

#[derive(Parser, Debug)]
#[command(name = "nkg", version, about = "Layered narrative knowledge graphs from comic annotations")]
struct Cli {
    /// TOML config file; flags and NKG_* environment variables take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Cosine similarity threshold in [0, 1]
    #[arg(long)]
    threshold: Option<f64>,
    /// Embedding provider: hashed, file:PATH or remote:URL
    #[arg(long)]
    embedder: Option<String>,
    /// Synonym lexicon JSON (default: built-in lexicon)
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a raw graph from an annotation document
    Build {
        /// Annotation document (JSON)
        #[arg(long)]
        input: PathBuf,
        /// Graph JSON destination (default: standard output)
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Normalize action and event labels of a raw graph
    Normalize {
        /// Raw graph JSON
        #[arg(long)]
        input: PathBuf,
        /// Normalized graph destination
        #[arg(long)]
        output: PathBuf,
        /// Normalization map destination (default: <output>.map.json)
        #[arg(long)]
        map_output: Option<PathBuf>,
        /// Gold label file whose cluster names are preferred as canonicals
        #[arg(long)]
        gold: Option<PathBuf>,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Run one structured query and print the JSON result
    Query {
        /// Graph JSON
        #[arg(long)]
        input: PathBuf,
        task: QueryTask,
        /// Action label, event id, entity id, scope id or node id
        target: String,
        /// Action retrieval mode: raw or normalized (default: from the graph)
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, default_value = "reading")]
        order: OrderArg,
        /// Normalization map for unseen action labels (default: <input>.map.json if present)
        #[arg(long)]
        map: Option<PathBuf>,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Score all five tasks per macro-event on raw and normalized graphs
    Eval {
        /// Annotation document (JSON)
        #[arg(long)]
        input: PathBuf,
        /// Gold label file (JSON)
        #[arg(long)]
        gold: PathBuf,
        /// Report destination (default: standard output)
        #[arg(long)]
        output: Option<PathBuf>,
        /// json, csv, md or plotdata
        #[arg(long)]
        format: Option<String>,
        /// Also score T2 to T5 on the normalized graph
        #[arg(long)]
        also_normalized: bool,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Write a synthetic annotation document
    Fixture {
        kind: FixtureArg,
        /// Annotation destination (default: standard output)
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the matching gold label file
        #[arg(long)]
        gold_output: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Label and order noise for `noise` fixtures, in [0, 1]
        #[arg(long, default_value_t = 0.3)]
        variance: f64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum QueryTask {
    Action,
    Dialogue,
    Trajectory,
    Timeline,
    Summary,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OrderArg {
    Reading,
    Storytime,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FixtureArg {
    Battle,
    Romance,
    Noise,
}

fn resolve_config(file: Option<&Path>, flags: FlagConfig) -> anyhow::Result<Config> {
    let file = match file {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    Config::resolve(&flags, |k| std::env::var(k).ok(), &file)
}

fn flags(settings: &ConfigArgs, mode: Option<String>, format: Option<String>) -> FlagConfig {
    FlagConfig {
        threshold: settings.threshold,
        embedder: settings.embedder.clone(),
        lexicon: settings.lexicon.clone(),
        mode,
        format,
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_graph(path: &Path) -> anyhow::Result<NarrativeGraph> {
    NarrativeGraph::from_json(&read(path)?).with_context(|| format!("loading graph {}", path.display()))
}

/// Default location of the normalization map written next to a graph.
pub fn map_path_for(graph: &Path) -> PathBuf {
    graph.with_extension("map.json")
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("query results serialize");
    bytes.push(b'\n');
    bytes
}

fn cmd_build(input: &Path, output: Option<&Path>) -> anyhow::Result<()> {
    let doc = parse_annotations(&read(input)?).with_context(|| format!("parsing {}", input.display()))?;
    let graph = build_all(&doc).context("building graph")?;
    log::info!("built {} nodes and {} edges", graph.node_count(), graph.edge_count());
    write_output(output, &graph.to_json())
}

fn cmd_normalize(
    input: &Path,
    output: &Path,
    map_output: Option<&Path>,
    gold: Option<&Path>,
    config: &Config,
) -> anyhow::Result<()> {
    let graph = load_graph(input)?;
    if graph.is_normalized() {
        return Err(NormalizeError::AlreadyNormalized).with_context(|| format!("normalizing {}", input.display()));
    }
    let gold = match gold {
        Some(p) => GoldLabelFile::load(p)?.gold_labels(),
        None => GoldLabels::default(),
    };
    let provider = config.provider()?;
    let lexicon = config.lexicon()?;
    let map = Normalizer::new(provider.as_ref(), &lexicon, config.threshold)?
        .with_gold(gold)
        .build_map(&graph)
        .context("building normalization map")?;
    let normalized = apply_normalization(&graph, &map)?;
    let map_path = map_output.map(Path::to_path_buf).unwrap_or_else(|| map_path_for(output));
    write_output(Some(output), &normalized.to_json())?;
    write_output(Some(&map_path), &map.to_json())?;
    log::info!("{} clusters written to {}", map.clusters().len(), map_path.display());
    Ok(())
}

struct QueryRequest<'a> {
    input: &'a Path,
    task: QueryTask,
    target: &'a str,
    order: OrderKind,
    map: Option<&'a Path>,
}

fn cmd_query(req: QueryRequest<'_>, config: &Config) -> anyhow::Result<()> {
    let graph = load_graph(req.input)?;
    let payload = match req.task {
        QueryTask::Action => {
            let mode = config.mode.unwrap_or(if graph.is_normalized() {
                RetrievalMode::Normalized
            } else {
                RetrievalMode::Raw
            });
            let map_path = req.map.map(Path::to_path_buf).unwrap_or_else(|| map_path_for(req.input));
            let map = if mode == RetrievalMode::Normalized && (req.map.is_some() || map_path.exists()) {
                Some(NormalizationMap::from_json(&read(&map_path)?)?)
            } else {
                None
            };
            let provider = config.provider()?;
            let lexicon = config.lexicon()?;
            let resolver = map.as_ref().map(|map| QueryResolver {
                map,
                provider: provider.as_ref(),
                lexicon: &lexicon,
            });
            to_json(&retrieve_actions_with(&graph, req.target, mode, resolver.as_ref())?)
        }
        QueryTask::Dialogue => to_json(&trace_dialogue(&graph, req.target)?),
        QueryTask::Trajectory => to_json(&character_trajectory(&graph, req.target)?),
        QueryTask::Timeline => to_json(&reconstruct_timeline(&graph, req.target, req.order)?),
        QueryTask::Summary => to_json(&summarize_event(&graph, req.target)?),
    };
    write_output(None, &payload)
}

fn cmd_eval(
    input: &Path,
    gold_path: &Path,
    output: Option<&Path>,
    also_normalized: bool,
    config: &Config,
) -> anyhow::Result<()> {
    let doc = parse_annotations(&read(input)?).with_context(|| format!("parse stage: {}", input.display()))?;
    let labels = GoldLabelFile::load(gold_path).context("gold stage")?;
    let raw = build_all(&doc).context("build stage")?;
    let provider = config.provider()?;
    let lexicon = config.lexicon()?;
    let map = Normalizer::new(provider.as_ref(), &lexicon, config.threshold)?
        .with_gold(labels.gold_labels())
        .build_map(&raw)
        .context("normalize stage")?;
    let normalized = apply_normalization(&raw, &map).context("normalize stage")?;
    let gold = build_gold(&doc, &labels);
    let settings = EvalSettings {
        also_normalized,
        ..EvalSettings::from_map(&map)
    };
    let report = run_eval(&doc, &raw, &normalized, &gold, &settings).context("eval stage")?;
    write_output(output, &render_report(&report, config.output_format))
}

fn cmd_fixture(
    kind: FixtureArg,
    seed: u64,
    variance: f64,
    output: Option<&Path>,
    gold_output: Option<&Path>,
) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&variance) {
        anyhow::bail!(Usage(format!("variance {variance} is outside [0, 1]")));
    }
    let kind = match kind {
        FixtureArg::Battle => FixtureKind::Battle,
        FixtureArg::Romance => FixtureKind::Romance,
        FixtureArg::Noise => FixtureKind::Noise { seed, variance },
    };
    write_output(output, serialize_annotations(&generate_fixture(kind)).as_bytes())?;
    if let Some(path) = gold_output {
        write_output(Some(path), fixture_gold(kind).to_json().as_bytes())?;
    }
    Ok(())
}

/// Invalid argument values detected after clap parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn normalize_code(e: &NormalizeError) -> u8 {
    match e {
        NormalizeError::AlreadyNormalized => 3,
        e if e.is_provider_error() => 4,
        NormalizeError::EmptyLabel
        | NormalizeError::InvalidThreshold(_)
        | NormalizeError::Lexicon(_)
        | NormalizeError::InvalidMap(_) => 2,
        _ => 1,
    }
}

fn reason_code(e: &ReasonError) -> u8 {
    match e {
        ReasonError::UnknownEvent(_)
        | ReasonError::UnknownEntity(_)
        | ReasonError::UnknownScope(_)
        | ReasonError::UnknownNode(_)
        | ReasonError::NotAnEventNode(_) => 5,
        ReasonError::NotNormalized => 6,
        ReasonError::EmptyQuery | ReasonError::BrokenChain { .. } | ReasonError::Graph(_) => 2,
        ReasonError::Normalize(inner) => normalize_code(inner),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<NormalizeError>() {
            return normalize_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ReasonError>() {
            return reason_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::Reason(inner) => reason_code(inner),
                EvalError::GoldFile(_) => 2,
                _ => 1,
            };
        }
        if cause.is::<AnnotationError>() || cause.is::<SerdeError>() || cause.is::<GraphError>() || cause.is::<Usage>()
        {
            return 2;
        }
        if cause.is::<serde_json::Error>() || cause.is::<toml::de::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config_file = cli.config.as_deref();
    match cli.command {
        Command::Build { input, output } => cmd_build(&input, output.as_deref()),
        Command::Normalize {
            input,
            output,
            map_output,
            gold,
            settings,
        } => {
            let config = resolve_config(config_file, flags(&settings, None, None)).map_err(config_error)?;
            cmd_normalize(&input, &output, map_output.as_deref(), gold.as_deref(), &config)
        }
        Command::Query {
            input,
            task,
            target,
            mode,
            order,
            map,
            settings,
        } => {
            let config = resolve_config(config_file, flags(&settings, mode, None)).map_err(config_error)?;
            let order = match order {
                OrderArg::Reading => OrderKind::Reading,
                OrderArg::Storytime => OrderKind::Storytime,
            };
            cmd_query(
                QueryRequest {
                    input: &input,
                    task,
                    target: &target,
                    order,
                    map: map.as_deref(),
                },
                &config,
            )
        }
        Command::Eval {
            input,
            gold,
            output,
            format,
            also_normalized,
            settings,
        } => {
            let config = resolve_config(config_file, flags(&settings, None, format)).map_err(config_error)?;
            cmd_eval(&input, &gold, output.as_deref(), also_normalized, &config)
        }
        Command::Fixture {
            kind,
            output,
            gold_output,
            seed,
            variance,
        } => cmd_fixture(kind, seed, variance, output.as_deref(), gold_output.as_deref()),
    }
}

/// Configuration problems are usage errors unless reading a file failed.
fn config_error(e: anyhow::Error) -> anyhow::Error {
    if e.chain().any(|c| c.is::<std::io::Error>()) {
        e
    } else {
        let msg = format!("{e:#}");
        anyhow::Error::new(Usage(msg)).context("configuration")
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
