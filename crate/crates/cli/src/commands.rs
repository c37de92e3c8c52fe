//! Subcommand implementations. Each one applies its flag overrides to the
//! run config, hashes the result, and tags every artifact with that hash.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use synthq_core::corpus::{
    human_query_map, load_documents, load_human_queries, load_pairs, load_synthetic, pairs_from_sets, save_pairs,
    save_synthetic, Cache, Corpus, QueryMode, WeightedPair,
};
use synthq_core::eval_stats::{
    analyze, evaluate, load_eval_queries, load_points, load_qrels, BucketCount, CdpReport, DocIndex, EvalReport,
};
use synthq_core::par;
use synthq_core::qd_metrics::{backend_from_spec, measure, QdReport};
use synthq_core::report::{provenance_path, write_json, write_report, ReportFormat};
use synthq_core::synth::{
    sample_documents, tune_prompt, DocFailure, Generator, PromptSelection, PromptTemplate, QdProbe, Target,
};
use synthq_core::tokenize::content_word_count;
use synthq_core::trainer::{Checkpoint, TrainLog, Trainer};
use synthq_core::weighting::{cw_weights, WeightScheme};

use crate::config::{required, ModeChoice, RunConfig};

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct TokenizerArgs {
    /// Language tag for tokenization and stopwords.
    #[arg(long)]
    pub lang: Option<String>,
    /// Directory holding `<lang>.txt` stopword lists.
    #[arg(long)]
    pub stopwords_dir: Option<PathBuf>,
    /// Segmentation strategy: regex, presegmented or sidecar.
    #[arg(long)]
    pub tokenizer: Option<String>,
}

impl TokenizerArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if let Some(v) = self.lang {
            cfg.tokenizer.lang = v;
        }
        if let Some(v) = self.stopwords_dir {
            cfg.tokenizer.stopwords_dir = Some(v);
        }
        if let Some(v) = self.tokenizer {
            cfg.tokenizer.strategy = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Documents JSON-Lines file.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    /// Output query sets (JSON-Lines).
    #[arg(long, default_value = "synthetic.jsonl")]
    pub out: PathBuf,
    /// Prompt to use; `auto` tunes on a document sample.
    #[arg(long, value_enum)]
    pub mode: Option<ModeChoice>,
    /// Queries per document.
    #[arg(long)]
    pub m: Option<usize>,
    /// Diversity target for `--mode auto`: in_domain or ood.
    #[arg(long)]
    pub target: Option<Target>,
    #[arg(long)]
    pub model: Option<String>,
    /// OpenAI-compatible API base URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Request rate limit.
    #[arg(long)]
    pub rps: Option<f64>,
    /// Use only the first N documents.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Response cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Documents sampled for prompt tuning.
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long)]
    pub sample_seed: Option<u64>,
    /// Scorer backend for tuning and `--measure-out`: stub, stub:<dim> or sidecar:<url>.
    #[arg(long)]
    pub backend: Option<String>,
    /// Human queries, required by `--measure-out`.
    #[arg(long)]
    pub human: Option<PathBuf>,
    /// Also measure the generated sets and write the report here.
    #[arg(long)]
    pub measure_out: Option<PathBuf>,
    #[command(flatten)]
    pub tok: TokenizerArgs,
}

#[derive(Debug, Serialize)]
struct GenerateSummary<'a> {
    n_documents: usize,
    n_sets: usize,
    mode: QueryMode,
    prompt_hash: String,
    selection: Option<PromptSelection>,
    failures: &'a [DocFailure],
    requests: u64,
}

pub fn generate(mut cfg: RunConfig, a: GenerateArgs) -> Result<()> {
    if let Some(v) = a.docs {
        cfg.paths.docs = Some(v);
    }
    if let Some(v) = a.human {
        cfg.paths.human = Some(v);
    }
    if let Some(v) = a.mode {
        cfg.prompt.mode = v;
    }
    if let Some(v) = a.target {
        cfg.prompt.target = v;
    }
    if let Some(v) = a.sample_size {
        cfg.prompt.sample_size = v;
    }
    if let Some(v) = a.sample_seed {
        cfg.prompt.sample_seed = v;
    }
    if let Some(v) = a.cache_dir {
        cfg.prompt.cache_dir = Some(v);
    }
    if let Some(v) = a.m {
        cfg.generation.m = v;
    }
    if let Some(v) = a.model {
        cfg.generation.model = v;
    }
    if let Some(v) = a.endpoint {
        cfg.generation.endpoint_url = v;
    }
    if let Some(v) = a.api_key_env {
        cfg.generation.api_key_env = v;
    }
    if let Some(v) = a.max_in_flight {
        cfg.generation.max_in_flight = v;
    }
    if let Some(v) = a.rps {
        cfg.generation.requests_per_second = Some(v);
    }
    if let Some(v) = a.backend {
        cfg.metrics.backend = v;
    }
    a.tok.apply(&mut cfg);
    let hash = cfg.config_hash();

    let docs_path = required(None, &cfg.paths.docs, "docs")?;
    let docs = load_documents(&docs_path, a.limit)?;
    let cache = cfg.prompt.cache_dir.as_ref().map(Cache::open).transpose()?;
    let generator = Generator::over_http(cfg.generation.clone(), cache)?;

    let (template, selection) = match cfg.prompt.mode {
        ModeChoice::Diverse => (PromptTemplate::builtin(QueryMode::Diverse), None),
        ModeChoice::Paraphrase => (PromptTemplate::builtin(QueryMode::Paraphrase), None),
        ModeChoice::Auto => {
            let sample = sample_documents(&docs, cfg.prompt.sample_size, cfg.prompt.sample_seed);
            let backend = backend_from_spec(&cfg.metrics.backend)?;
            let spec = cfg.tokenizer.spec()?;
            let probe = QdProbe {
                backend: backend.as_ref(),
                tokenizer: &spec,
                ce_threshold: cfg.metrics.ce_threshold,
            };
            let candidates = [
                PromptTemplate::builtin(QueryMode::Paraphrase),
                PromptTemplate::builtin(QueryMode::Diverse),
            ];
            let sel = tune_prompt(&sample, &candidates, cfg.prompt.target, &generator, &probe)?;
            println!(
                "selected {} prompt for {} (CE {:.3}, Self-BLEU {:.3})",
                sel.chosen_mode, sel.target, sel.sample_ce, sel.sample_self_bleu
            );
            (PromptTemplate::builtin(sel.chosen_mode), Some(sel))
        }
    };

    let outcome = generator.build_dataset(&docs, &template)?;
    save_synthetic(&outcome.sets, &a.out)?;
    let summary = GenerateSummary {
        n_documents: docs.len(),
        n_sets: outcome.sets.len(),
        mode: template.mode,
        prompt_hash: template.prompt_hash(),
        selection,
        failures: &outcome.failures,
        requests: generator.request_count(),
    };
    write_json(&provenance_path(&a.out), "synthetic_queries", &hash, &summary)?;
    println!(
        "wrote {} query sets to {} ({} failed)",
        outcome.sets.len(),
        a.out.display(),
        outcome.failures.len()
    );

    if let Some(out) = a.measure_out {
        let human_path = required(None, &cfg.paths.human, "human")?;
        let report = measure_sets(&cfg, &outcome.sets, &human_path)?;
        write_json(&out, "qd_report", &hash, &report)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn measure_sets(
    cfg: &RunConfig,
    sets: &[synthq_core::corpus::SyntheticQuerySet],
    human_path: &Path,
) -> Result<QdReport> {
    let corpus = match &cfg.paths.docs {
        Some(p) => Some(Corpus::new(load_documents(p, None)?)?),
        None => None,
    };
    let human = human_query_map(&load_human_queries(human_path, corpus.as_ref())?);
    let backend = backend_from_spec(&cfg.metrics.backend)?;
    let spec = cfg.tokenizer.spec()?;
    Ok(measure(sets, &human, backend.as_ref(), &spec, cfg.metrics.ce_threshold)?)
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Synthetic query sets (JSON-Lines).
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Human reference queries (JSON-Lines).
    #[arg(long)]
    pub human: Option<PathBuf>,
    /// Documents, used to validate human query doc ids.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    /// stub, stub:<dim> or sidecar:<url>.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub ce_threshold: Option<f64>,
    #[arg(long, default_value = "qd_report.json")]
    pub out: PathBuf,
    /// json or csv.
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub format: ReportFormat,
    #[command(flatten)]
    pub tok: TokenizerArgs,
}

pub fn measure_cmd(mut cfg: RunConfig, a: MeasureArgs) -> Result<()> {
    if let Some(v) = a.input {
        cfg.paths.synthetic = Some(v);
    }
    if let Some(v) = a.human {
        cfg.paths.human = Some(v);
    }
    if let Some(v) = a.docs {
        cfg.paths.docs = Some(v);
    }
    if let Some(v) = a.backend {
        cfg.metrics.backend = v;
    }
    if let Some(v) = a.ce_threshold {
        cfg.metrics.ce_threshold = v;
    }
    a.tok.apply(&mut cfg);
    let hash = cfg.config_hash();
    let synthetic = required(None, &cfg.paths.synthetic, "in")?;
    let human = required(None, &cfg.paths.human, "human")?;
    let sets = load_synthetic(&synthetic)?;
    let report = measure_sets(&cfg, &sets, &human)?;
    write_report(&a.out, a.format, "qd_report", &hash, &report)?;
    println!(
        "Dist-Sim {:.4}  Len-Sim {:.4}  CE {:.4}  Self-BLEU {}",
        report.dist_sim,
        report.len_sim,
        report.ce,
        report.self_bleu.map_or("n/a".to_string(), |v| format!("{v:.4}"))
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Pairs or query sets (JSON-Lines).
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Annotated pairs (JSON-Lines).
    #[arg(long, default_value = "pairs.jsonl")]
    pub out: PathBuf,
    /// uniform, cw, ri or ri_times_cw.
    #[arg(long)]
    pub scheme: Option<WeightScheme>,
    #[arg(long)]
    pub kappa_cw: Option<f64>,
    /// Documents, used to validate pair doc ids.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[command(flatten)]
    pub tok: TokenizerArgs,
}

#[derive(Debug, Serialize)]
struct WeightSummary {
    n_pairs: usize,
    scheme: WeightScheme,
    kappa_cw: f64,
    mean_raw_cw: f64,
    zero_cw_pairs: usize,
    /// Weights written to the file are corpus-level previews; the trainer
    /// recomputes them per mini-batch.
    preview_weights: bool,
}

/// Pairs from a pairs file, or expanded from a query-set file.
fn load_pairs_or_sets(path: &Path) -> Result<Vec<WeightedPair>> {
    match load_pairs(path) {
        Ok(p) => Ok(p),
        Err(pairs_err) => match load_synthetic(path) {
            Ok(sets) => Ok(pairs_from_sets(&sets)),
            Err(_) => Err(pairs_err).with_context(|| format!("{} holds neither pairs nor query sets", path.display())),
        },
    }
}

fn annotate_cw(cfg: &RunConfig, pairs: &mut [WeightedPair]) -> Result<()> {
    let spec = cfg.tokenizer.spec()?;
    let stopwords = cfg.tokenizer.stopwords()?;
    let cws = par::try_map_collect(pairs, |p| content_word_count(&p.query, &spec, &stopwords))?;
    for (p, cw) in pairs.iter_mut().zip(cws) {
        p.raw_cw = u32::try_from(cw).unwrap_or(u32::MAX);
    }
    Ok(())
}

fn write_pairs_jsonl(pairs: &[WeightedPair], path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

pub fn weight(mut cfg: RunConfig, a: WeightArgs) -> Result<()> {
    if let Some(v) = a.input {
        cfg.paths.pairs = Some(v);
    }
    if let Some(v) = a.docs {
        cfg.paths.docs = Some(v);
    }
    if let Some(v) = a.scheme {
        cfg.train.weight_scheme.scheme = v;
    }
    if let Some(v) = a.kappa_cw {
        cfg.train.weight_scheme.kappa_cw = v;
    }
    a.tok.apply(&mut cfg);
    cfg.train.weight_scheme.validate()?;
    let hash = cfg.config_hash();
    let input = required(None, &cfg.paths.pairs, "in")?;
    let mut pairs = load_pairs_or_sets(&input)?;
    if pairs.is_empty() {
        bail!("{} holds no pairs", input.display());
    }
    annotate_cw(&cfg, &mut pairs)?;

    let ws = cfg.train.weight_scheme;
    match ws.scheme {
        WeightScheme::Uniform => pairs.iter_mut().for_each(|p| p.weight = 1.0),
        WeightScheme::Cw => {
            let cws: Vec<u32> = pairs.iter().map(|p| p.raw_cw).collect();
            for (p, w) in pairs.iter_mut().zip(cw_weights(&cws, ws.kappa_cw)?) {
                p.weight = w;
            }
        }
        WeightScheme::Ri | WeightScheme::RiTimesCw => {
            log::warn!("{} weights need model losses; they are computed during training", ws.scheme);
            pairs.iter_mut().for_each(|p| p.weight = 1.0);
        }
    }
    match &cfg.paths.docs {
        Some(d) => save_pairs(&pairs, &a.out, &Corpus::new(load_documents(d, None)?)?)?,
        None => write_pairs_jsonl(&pairs, &a.out)?,
    }
    let summary = WeightSummary {
        n_pairs: pairs.len(),
        scheme: ws.scheme,
        kappa_cw: ws.kappa_cw,
        mean_raw_cw: pairs.iter().map(|p| p.raw_cw as f64).sum::<f64>() / pairs.len() as f64,
        zero_cw_pairs: pairs.iter().filter(|p| p.raw_cw == 0).count(),
        preview_weights: true,
    };
    write_json(&provenance_path(&a.out), "weighted_pairs", &hash, &summary)?;
    println!(
        "wrote {} pairs to {} (mean CW {:.2})",
        summary.n_pairs,
        a.out.display(),
        summary.mean_raw_cw
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training pairs (JSON-Lines).
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub docs: Option<PathBuf>,
    /// uniform, cw, ri or ri_times_cw.
    #[arg(long)]
    pub scheme: Option<WeightScheme>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Checkpoint path, rewritten after every epoch.
    #[arg(long, default_value = "model.ckpt")]
    pub out: PathBuf,
    /// Continue an interrupted run from its checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Step and validation log (`.csv` for CSV, JSON otherwise).
    #[arg(long)]
    pub log_out: Option<PathBuf>,
    #[command(flatten)]
    pub tok: TokenizerArgs,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    model_config_hash: String,
    epochs_run: u32,
    steps: u64,
    n_train: usize,
    n_validation: usize,
    initial_ndcg: Option<f64>,
    best_epoch: u32,
    best_ndcg: Option<f64>,
}

fn format_for(path: &Path) -> ReportFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => ReportFormat::Csv,
        _ => ReportFormat::Json,
    }
}

pub fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    if let Some(v) = a.pairs {
        cfg.paths.pairs = Some(v);
    }
    if let Some(v) = a.docs {
        cfg.paths.docs = Some(v);
    }
    if let Some(v) = a.scheme {
        cfg.train.weight_scheme.scheme = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.train.lr = v;
    }
    a.tok.apply(&mut cfg);
    let resume = a.resume.map(|p| Checkpoint::load(&p).with_context(|| format!("cannot resume from {}", p.display())));
    let resume = resume.transpose()?;
    if let Some(ck) = &resume {
        if ck.header.config != cfg.train {
            bail!("training settings differ from the checkpoint being resumed");
        }
    }
    let hash = cfg.config_hash();
    let pairs_path = required(None, &cfg.paths.pairs, "pairs")?;
    let docs_path = required(None, &cfg.paths.docs, "docs")?;
    let corpus = Corpus::new(load_documents(&docs_path, None)?)?;
    let mut pairs = load_pairs_or_sets(&pairs_path)?;
    annotate_cw(&cfg, &mut pairs)?;

    let mut trainer = match &resume {
        Some(ck) => Trainer::resume(ck, &pairs, &corpus)?,
        None => Trainer::new(&pairs, &corpus, cfg.train.clone())?,
    };
    log::info!(
        "training on {} pairs, validating on {}",
        trainer.n_train(),
        trainer.n_validation()
    );
    while trainer.epoch() < cfg.train.epochs {
        let ndcg = trainer.run_epoch()?;
        trainer.checkpoint().save(&a.out)?;
        match ndcg {
            Some(n) => println!("epoch {} ndcg@{} {:.4}", trainer.epoch(), cfg.train.eval_k, n),
            None => println!("epoch {}", trainer.epoch()),
        }
    }
    let (n_train, n_validation) = (trainer.n_train(), trainer.n_validation());
    let outcome = trainer.finish();
    outcome.checkpoint.save(&a.out)?;
    let summary = TrainSummary {
        model_config_hash: outcome.checkpoint.header.config_hash.clone(),
        epochs_run: outcome.checkpoint.header.epoch,
        steps: outcome.checkpoint.header.step,
        n_train,
        n_validation,
        initial_ndcg: outcome.initial_ndcg,
        best_epoch: outcome.best_epoch,
        best_ndcg: outcome.best_ndcg,
    };
    write_json(&provenance_path(&a.out), "model", &hash, &summary)?;
    if let Some(p) = a.log_out {
        write_report(&p, format_for(&p), "train_log", &hash, &outcome.log)?;
    }
    println!("wrote {} (best epoch {})", a.out.display(), outcome.best_epoch);
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub docs: Option<PathBuf>,
    /// Judgments: `{"query_id", "doc_id", "rel"}` per line.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Test queries: `{"query_id", "text"}` per line.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = "eval_report.json")]
    pub out: PathBuf,
    /// json or csv.
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub format: ReportFormat,
}

pub fn eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    if let Some(v) = a.model {
        cfg.paths.model = Some(v);
    }
    if let Some(v) = a.docs {
        cfg.paths.docs = Some(v);
    }
    if let Some(v) = a.qrels {
        cfg.paths.qrels = Some(v);
    }
    if let Some(v) = a.queries {
        cfg.paths.queries = Some(v);
    }
    if let Some(v) = a.k {
        cfg.eval.k = v;
    }
    let hash = cfg.config_hash();
    let model = required(None, &cfg.paths.model, "model")?;
    let docs = load_documents(&required(None, &cfg.paths.docs, "docs")?, None)?;
    let qrels = load_qrels(&required(None, &cfg.paths.qrels, "qrels")?)?;
    let queries = load_eval_queries(&required(None, &cfg.paths.queries, "queries")?)?;
    let encoder = Checkpoint::load(&model)
        .with_context(|| format!("cannot load model {}", model.display()))?
        .encoder();
    let index = DocIndex::build(&encoder, &docs);
    let report = evaluate(&encoder, &index, &queries, &qrels, cfg.eval.k)?;
    write_report(&a.out, a.format, "eval_report", &hash, &report)?;
    println!(
        "NDCG@{} {:.4} over {} queries ({} skipped)",
        report.k, report.mean_ndcg, report.n_queries, report.n_skipped
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// CSV with columns `cw,delta,condition`.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long, default_value = "cdp_report.json")]
    pub out: PathBuf,
    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// json, or csv for the per-condition table.
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub format: ReportFormat,
}

pub fn correlate(mut cfg: RunConfig, a: CorrelateArgs) -> Result<()> {
    if let Some(v) = a.points {
        cfg.paths.points = Some(v);
    }
    if let Some(v) = a.alpha {
        cfg.correlate.alpha = v;
    }
    let hash = cfg.config_hash();
    let points = load_points(&required(None, &cfg.paths.points, "points")?)?;
    let report = analyze(&points, cfg.correlate.alpha, cfg.correlate.bucket_boundaries)?;
    write_report(&a.out, a.format, "cdp_report", &hash, &report)?;
    let t = &report.threshold;
    println!(
        "{}/{} conditions significant at alpha {}; pooled r {:.4}, zero crossing at CW {:.3}",
        report.n_significant,
        report.conditions.len(),
        report.alpha,
        t.r,
        t.zero_crossing
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CdpTable {
    Conditions,
    Buckets,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A JSON report written by another subcommand.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// json or csv.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: ReportFormat,
    /// Which table of a correlation report to emit.
    #[arg(long, value_enum, default_value = "conditions")]
    pub table: CdpTable,
}

#[derive(serde::Deserialize)]
struct EnvelopeIn {
    kind: String,
    config_hash: String,
    result: serde_json::Value,
}

/// Re-emits a stored report in another format, keeping its config hash.
pub fn report(a: ReportArgs) -> Result<()> {
    let bytes = std::fs::read(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let env: EnvelopeIn =
        serde_json::from_slice(&bytes).with_context(|| format!("{} is not a report", a.input.display()))?;
    let (kind, hash) = (env.kind.as_str(), env.config_hash.as_str());
    let bad = |e: serde_json::Error| anyhow::anyhow!("malformed {kind} in {}: {e}", a.input.display());
    match kind {
        "qd_report" => {
            let r: QdReport = serde_json::from_value(env.result).map_err(bad)?;
            write_report(&a.out, a.format, kind, hash, &r)?;
        }
        "eval_report" => {
            let r: EvalReport = serde_json::from_value(env.result).map_err(bad)?;
            write_report(&a.out, a.format, kind, hash, &r)?;
        }
        "train_log" => {
            let r: TrainLog = serde_json::from_value(env.result).map_err(bad)?;
            write_report(&a.out, a.format, kind, hash, &r)?;
        }
        "cdp_report" => {
            let r: CdpReport = serde_json::from_value(env.result).map_err(bad)?;
            match a.table {
                CdpTable::Conditions => write_report(&a.out, a.format, kind, hash, &r)?,
                CdpTable::Buckets => {
                    let b: Vec<BucketCount> = r.buckets;
                    write_report(&a.out, a.format, "cdp_buckets", hash, &b)?
                }
            }
        }
        other => bail!("no table layout for report kind {other:?}"),
    }
    println!("wrote {}", a.out.display());
    Ok(())
}
