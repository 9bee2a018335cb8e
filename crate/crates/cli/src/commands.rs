use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use ucbmir_core::dataset::{
    build_reference_cdf, decode_image_bytes, decode_records, generate_synthetic, load_manifest, Manifest, Split,
    SyntheticSpec,
};
use ucbmir_core::eval::{contact_sheet, cross_evaluate, index_fingerprint, run_evaluation_detailed, LabelMap};
use ucbmir_core::index::{
    build_index, embed_images, export_embeddings, import_embeddings, load_index, save_index, EmbeddingIndex, Metric,
};
use ucbmir_core::model::{build_cae, load_checkpoint, save_checkpoint, train, CaeConfig, CaeModel, TrainState};

use crate::config::{parse_k_values, RunConfig};
use crate::error::CliError;
use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "ucbmir", version, about = "Unsupervised content-based patch retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic texture dataset.
    Synth(SynthArgs),
    /// Train the auto-encoder on the train split of a manifest.
    Train(TrainArgs),
    /// Embed manifest records into an index file.
    Index(IndexArgs),
    /// Write the vectors of an index as an embeddings file.
    Export(ExportArgs),
    /// Build an index from an embeddings file and a manifest.
    Import(ImportArgs),
    /// Rank index entries against one query image.
    Search(SearchArgs),
    /// Evaluate retrieval on the test split of a manifest.
    Eval(EvalArgs),
    /// Evaluate a second dataset against the index, with and without histogram matching.
    Xeval(XevalArgs),
    /// Serve the HTTP query API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub seed: u64,
    /// Added to the red channel before clamping.
    #[arg(long, default_value_t = 0.0)]
    pub red_shift: f32,
    #[arg(long, default_value = "synthetic")]
    pub dataset_id: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Patch side length; defaults to the manifest's `patch_size`.
    #[arg(long)]
    pub size: Option<usize>,
    /// Checkpoint to write.
    #[arg(long = "out")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated splits to index.
    #[arg(long, default_value = "train,val")]
    pub splits: String,
    /// Index file to write.
    #[arg(long = "out")]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Reject files whose vectors have another length.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "out")]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Query image file.
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Index id to leave out of the ranking.
    #[arg(long)]
    pub exclude: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated, e.g. `3,5,7`.
    #[arg(long, value_parser = parse_k_values)]
    pub k_values: Option<Vec<usize>>,
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    /// Also render a PNG contact sheet of sampled queries.
    #[arg(long)]
    pub contact_sheet: bool,
    #[arg(long, default_value_t = 8)]
    pub sheet_rows: usize,
}

#[derive(Debug, Args)]
pub struct XevalArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Manifest of the foreign dataset; its test split is queried.
    #[arg(long)]
    pub manifest_b: PathBuf,
    /// `source = target` lines mapping foreign labels onto index labels.
    #[arg(long)]
    pub label_map: Option<PathBuf>,
    /// Manifest of the indexed dataset; its train and val splits form the
    /// reference histogram. Enables the histogram-matched variant.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_parser = parse_k_values)]
    pub k_values: Option<Vec<usize>>,
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Source of thumbnails and `record_id` queries.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

impl Command {
    /// Flag values in config form, for overlaying onto the config file.
    pub fn flags(&self) -> RunConfig {
        let mut c = RunConfig::default();
        match self {
            Command::Synth(_) => {}
            Command::Train(a) => {
                c.manifest = a.manifest.clone();
                c.checkpoint = a.checkpoint.clone();
                c.epochs = a.epochs;
                c.lr = a.lr;
                c.batch_size = a.batch_size;
                c.size = a.size;
            }
            Command::Index(a) => {
                c.manifest = a.manifest.clone();
                c.checkpoint = a.checkpoint.clone();
                c.index = a.index.clone();
            }
            Command::Export(a) => c.index = a.index.clone(),
            Command::Import(a) => {
                c.manifest = a.manifest.clone();
                c.index = a.index.clone();
            }
            Command::Search(a) => {
                c.index = a.index.clone();
                c.checkpoint = a.checkpoint.clone();
                c.metric = a.metric;
            }
            Command::Eval(a) => {
                c.index = a.index.clone();
                c.checkpoint = a.checkpoint.clone();
                c.manifest = a.manifest.clone();
                c.k_values = a.k_values.clone();
                c.metric = a.metric;
                c.report_dir = a.report_dir.clone();
            }
            Command::Xeval(a) => {
                c.index = a.index.clone();
                c.checkpoint = a.checkpoint.clone();
                c.k_values = a.k_values.clone();
                c.metric = a.metric;
                c.report_dir = a.report_dir.clone();
            }
            Command::Serve(a) => {
                c.index = a.index.clone();
                c.checkpoint = a.checkpoint.clone();
                c.manifest = a.manifest.clone();
                c.report_dir = a.report_dir.clone();
                c.static_dir = a.static_dir.clone();
                c.metric = a.metric;
                c.bind = a.bind.clone();
                c.port = a.port;
            }
        }
        c
    }
}

/// Runs one command with `base` (the config file) under its flags and
/// returns what should be printed on stdout.
pub fn run(command: Command, base: RunConfig) -> Result<String, CliError> {
    let cfg = base.overlay(&command.flags());
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a, &cfg),
        Command::Index(a) => cmd_index(&a, &cfg),
        Command::Export(a) => cmd_export(&a, &cfg),
        Command::Import(a) => cmd_import(&a, &cfg),
        Command::Search(a) => cmd_search(&a, &cfg),
        Command::Eval(a) => cmd_eval(&a, &cfg),
        Command::Xeval(a) => cmd_xeval(&a, &cfg),
        Command::Serve(_) => cmd_serve(&cfg),
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<String, CliError> {
    let spec = SyntheticSpec {
        red_shift: a.red_shift,
        dataset_id: a.dataset_id.clone(),
        ..SyntheticSpec::new(a.classes, a.per_class, a.size)
    };
    let manifest = generate_synthetic(&spec, a.seed, &a.out)?;
    let n = |s| manifest.split(s).len();
    Ok(format!(
        "synth: {} images ({} train, {} val, {} test) -> {}",
        manifest.records.len(),
        n(Split::Train),
        n(Split::Val),
        n(Split::Test),
        a.out.join("manifest.csv").display()
    ))
}

/// `64` or `64x64` from the manifest metadata.
fn manifest_patch_size(m: &Manifest) -> Result<Option<usize>, CliError> {
    let Some(v) = m.metadata.get("patch_size") else { return Ok(None) };
    let (h, w) = v.split_once('x').unwrap_or((v, v));
    match (h.trim().parse::<usize>(), w.trim().parse::<usize>()) {
        (Ok(h), Ok(w)) if h == w => Ok(Some(h)),
        _ => Err(CliError::config(format!("manifest patch_size `{v}` is not a square size; pass --size"))),
    }
}

fn cmd_train(a: &TrainArgs, cfg: &RunConfig) -> Result<String, CliError> {
    let manifest = load_manifest(cfg.require("manifest")?)?;
    let out = cfg.require("checkpoint")?;
    let size = match cfg.size {
        Some(s) => s,
        None => manifest_patch_size(&manifest)?.unwrap_or(64),
    };
    let mut config = CaeConfig::published(size, size);
    config.seed = a.seed;
    if let Some(e) = cfg.epochs {
        config.epochs = e;
    }
    if let Some(lr) = cfg.lr {
        config.adam.lr = lr;
    }
    if let Some(b) = cfg.batch_size {
        config.batch_size = b;
    }
    let mut model = build_cae(config, a.seed)?;
    let records = manifest.split(Split::Train);
    if records.is_empty() {
        return Err(CliError::input("manifest has no train records"));
    }
    let images = decode_records(&records, (size, size))?;
    let mut state = TrainState::new(&model);
    train(&mut model, &mut state, &images, |_, _| {})?;
    save_checkpoint(&model, &state, out)?;
    let first = state.loss_history.first().copied().unwrap_or(f64::NAN);
    let last = state.loss_history.last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "train: {} images, {} epochs, mse {first:.6} -> {last:.6} -> {}",
        records.len(),
        state.epoch,
        out.display()
    ))
}

fn load_model(cfg: &RunConfig) -> Result<CaeModel, CliError> {
    Ok(load_checkpoint(cfg.require("checkpoint")?)?.0)
}

fn load_model_and_index(cfg: &RunConfig) -> Result<(CaeModel, EmbeddingIndex), CliError> {
    let model = load_model(cfg)?;
    let index = load_index(cfg.require("index")?)?;
    if model.embedding_dim() != index.dim() {
        return Err(CliError::config(format!(
            "checkpoint embeds {} dimensions but the index holds {}",
            model.embedding_dim(),
            index.dim()
        )));
    }
    Ok((model, index))
}

fn cmd_index(a: &IndexArgs, cfg: &RunConfig) -> Result<String, CliError> {
    let manifest = load_manifest(cfg.require("manifest")?)?;
    let model = load_model(cfg)?;
    let out = cfg.require("index")?;
    let splits = a
        .splits
        .split(',')
        .map(|s| s.trim().parse::<Split>().map_err(CliError::usage))
        .collect::<Result<Vec<_>, _>>()?;
    let index = build_index(&model, &manifest, &splits)?;
    save_index(&index, out)?;
    Ok(format!("index: {} entries, dim {} -> {}", index.len(), index.dim(), out.display()))
}

fn cmd_export(a: &ExportArgs, cfg: &RunConfig) -> Result<String, CliError> {
    let index = load_index(cfg.require("index")?)?;
    export_embeddings(&index, &a.out)?;
    Ok(format!("export: {} vectors, dim {} -> {}", index.len(), index.dim(), a.out.display()))
}

fn cmd_import(a: &ImportArgs, cfg: &RunConfig) -> Result<String, CliError> {
    let manifest = load_manifest(cfg.require("manifest")?)?;
    let out = cfg.require("index")?;
    let index = import_embeddings(&a.embeddings, &manifest, a.dim)?;
    save_index(&index, out)?;
    Ok(format!("import: {} entries, dim {} -> {}", index.len(), index.dim(), out.display()))
}

fn cmd_search(a: &SearchArgs, cfg: &RunConfig) -> Result<String, CliError> {
    let (model, index) = load_model_and_index(cfg)?;
    let bytes = std::fs::read(&a.query).map_err(|e| CliError::input(format!("{}: {e}", a.query.display())))?;
    let image = decode_image_bytes(&bytes, model.config.input_size)
        .map_err(|e| CliError::input(format!("{}: {e}", a.query.display())))?;
    let vector = embed_images(&model, &image)?.remove(0);
    let query_id = a.query.file_stem().map_or("query".into(), |s| s.to_string_lossy().into_owned());
    let metric = cfg.metric.unwrap_or_default();
    let result = index.top_k(&query_id, &vector, a.k, metric, a.exclude.as_deref())?;
    Ok(result.hits.iter().map(|h| format!("{}\t{}\t{}", h.id, h.label, h.distance)).collect::<Vec<_>>().join("\n"))
}

fn report_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.require("report_dir")?.to_path_buf();
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::new(crate::error::Category::Io, format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Settings recorded in report metadata.
fn echoed(cfg: &RunConfig, command: &str, extra: &[(&str, String)]) -> Result<BTreeMap<String, String>, CliError> {
    let eval = cfg.eval_config()?;
    let mut out = cfg.echo();
    out.insert("command".into(), command.into());
    out.insert("k_values".into(), eval.k_values.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    out.insert("metric".into(), eval.metric.to_string());
    for (k, v) in extra {
        out.insert(k.to_string(), v.clone());
    }
    Ok(out)
}

fn acc_summary(report: &ucbmir_core::eval::EvalReport) -> String {
    report.metrics.iter().map(|(k, m)| format!("ACC@{k} {:.4}", m.acc_at_k)).collect::<Vec<_>>().join(", ")
}

fn cmd_eval(a: &EvalArgs, cfg: &RunConfig) -> Result<String, CliError> {
    let (model, index) = load_model_and_index(cfg)?;
    let manifest = load_manifest(cfg.require("manifest")?)?;
    let config = cfg.eval_config()?;
    let dir = report_dir(cfg)?;
    let mut outcome = run_evaluation_detailed(&index, &model, &manifest, &config)?;
    outcome.report.metadata.config = echoed(cfg, "eval", &[])?;
    let name = format!("eval-{}.json", config.metric);
    outcome.report.save(&dir.join(&name))?;
    outcome.report.save(&dir.join("latest.json"))?;
    if a.contact_sheet {
        let k = config.k_values.iter().copied().filter(|&k| k <= 5).max().unwrap_or(config.k_values[0]);
        let sheet = contact_sheet(&outcome, &manifest, &manifest, k, a.sheet_rows, 96)?;
        let path = dir.join(format!("contact-sheet-{}.png", config.metric));
        sheet.save(&path).map_err(|e| CliError::new(crate::error::Category::Io, format!("{}: {e}", path.display())))?;
    }
    info!("index {}", index_fingerprint(&index));
    Ok(format!(
        "eval: {} queries, {} -> {}",
        outcome.report.metadata.query_count,
        acc_summary(&outcome.report),
        dir.join(name).display()
    ))
}

/// Parses `source = target` lines.
pub fn parse_label_map(text: &str) -> Result<LabelMap, CliError> {
    let mut map = LabelMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (from, to) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("label map line {}: expected `source = target`", n + 1)))?;
        map.insert(from.trim().to_string(), to.trim().to_string());
    }
    Ok(map)
}

fn cmd_xeval(a: &XevalArgs, cfg: &RunConfig) -> Result<String, CliError> {
    let (model, index) = load_model_and_index(cfg)?;
    let manifest_b = load_manifest(&a.manifest_b)?;
    let config = cfg.eval_config()?;
    let dir = report_dir(cfg)?;
    let label_map = match &a.label_map {
        Some(p) => {
            parse_label_map(&std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?)?
        }
        None => LabelMap::new(),
    };
    let reference = match &a.reference {
        Some(p) => {
            let m = load_manifest(p)?;
            Some(build_reference_cdf(&m.in_splits(&[Split::Train, Split::Val]), model.config.input_size)?)
        }
        None => None,
    };
    let mut report = cross_evaluate(&model, &index, &manifest_b, reference.as_ref(), &label_map, &config)?;
    let mut extra = vec![("manifest_b", a.manifest_b.display().to_string())];
    if let Some(p) = &a.label_map {
        extra.push(("label_map", p.display().to_string()));
    }
    if let Some(p) = &a.reference {
        extra.push(("reference", p.display().to_string()));
    }
    let echo = echoed(cfg, "xeval", &extra)?;
    report.unmatched.metadata.config = echo.clone();
    if let Some(m) = &mut report.matched {
        m.metadata.config = echo;
    }
    let path = dir.join(format!("xeval-{}.json", config.metric));
    report.save(&path)?;
    let mut line = format!("xeval: unmatched {}", acc_summary(&report.unmatched));
    if let Some(m) = &report.matched {
        line += &format!("; matched {}", acc_summary(m));
    }
    Ok(format!("{line} -> {}", path.display()))
}

/// Loads the artifacts named in `cfg` into service state.
pub fn load_state(cfg: &RunConfig) -> Result<AppState, CliError> {
    let (model, index) = load_model_and_index(cfg)?;
    let manifest = cfg.manifest.as_deref().map(load_manifest).transpose()?;
    Ok(AppState {
        index,
        model,
        manifest,
        report_dir: cfg.report_dir.clone(),
        metric_default: cfg.metric.unwrap_or_default(),
    })
}

fn cmd_serve(cfg: &RunConfig) -> Result<String, CliError> {
    let state = Arc::new(load_state(cfg)?);
    let bind = cfg.bind.as_deref().unwrap_or("127.0.0.1");
    let port = cfg.port.unwrap_or(8080);
    let addr: SocketAddr = format!("{bind}:{port}")
        .parse()
        .map_err(|e| CliError::config(format!("bad bind address `{bind}:{port}`: {e}")))?;
    if let Some(dir) = &cfg.static_dir {
        if !Path::new(dir).is_dir() {
            return Err(CliError::input(format!("static dir {} does not exist", dir.display())));
        }
    }
    let runtime =
        tokio::runtime::Runtime::new().map_err(|e| CliError::new(crate::error::Category::Service, e.to_string()))?;
    runtime.block_on(service::serve(state, cfg.static_dir.clone(), addr))?;
    Ok("serve: stopped".into())
}
