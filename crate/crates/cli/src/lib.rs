//! `trie-decode` subcommands. Each `cmd_*` writes human output to `out` and
//! returns a [`CliError`] that maps onto the process exit code.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use trie_lookahead::baseline::{Bm25Index, Bm25Params};
use trie_lookahead::eval::{self, dataset, synth, Bm25System, DecoderSystem, MetricsReport};
use trie_lookahead::{beam_search, BeamConfig, CountScorer, CountScorerConfig, Scorer, TableScorer, TokenId, Trie, Vocabulary};

pub const THREADS_ENV: &str = "TRIE_DECODE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable inputs, invalid configuration.
    #[error("{0}")]
    Usage(String),
    /// Inputs that load but fail validation.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn data(msg: impl std::fmt::Display) -> CliError {
    CliError::Data(msg.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "trie-decode", version, about = "Trie-constrained keyword generation with lookahead")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a vocabulary from text files (keyword lists, pair TSVs).
    BuildVocab(BuildVocabArgs),
    /// Build a serialized keyword trie.
    BuildTrie(BuildTrieArgs),
    /// Train an interpolated n-gram count scorer on query/keyword pairs.
    TrainScorer(TrainScorerArgs),
    /// Decode in-library keywords for one query.
    Extend(ExtendArgs),
    /// Recall@K / MAP@K over a configuration grid.
    Eval(EvalArgs),
    /// Generate the synthetic adversarial benchmark.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long = "corpus", required = true, num_args = 1..)]
    pub corpus: Vec<PathBuf>,
    /// Maximum size including the reserved tokens.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildTrieArgs {
    #[arg(long)]
    pub keywords: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainScorerArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Markov order of the count model.
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Copy bonus for query tokens (log space).
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Number of future distributions produced per call.
    #[arg(long, default_value_t = 3)]
    pub prediction_order: usize,
    #[arg(long, default_value_t = 8)]
    pub future_top_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtendArgs {
    #[arg(long)]
    pub trie: PathBuf,
    #[arg(long)]
    pub scorer: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 3)]
    pub ngram: usize,
    #[arg(long, default_value_t = 0.8, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Disable lookahead (λ = 1).
    #[arg(long)]
    pub plain: bool,
    /// Write a run manifest here.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub trie: PathBuf,
    #[arg(long)]
    pub scorer: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Cutoffs K; decoding runs once per cell with beam size max(K).
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
    pub beams: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.8", allow_negative_numbers = true)]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub ngrams: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    /// Add a BM25 row over the trie's keywords.
    #[arg(long)]
    pub bm25: bool,
    /// Add a round-robin merge of all rows.
    #[arg(long)]
    pub merge: bool,
    /// JSON report path (a manifest is written next to it).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON generator parameters; omitted fields take defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    /// sha256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub timestamp_unix: u64,
    pub tool_version: String,
}

impl RunManifest {
    fn new(command: &str, config: Value, inputs: &[&Path], seed: Option<u64>) -> Result<Self> {
        let mut digests = BTreeMap::new();
        for p in inputs {
            let bytes = read_bytes(p)?;
            digests.insert(p.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        }
        Ok(Self {
            command: command.to_string(),
            config,
            inputs: digests,
            seed,
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(path, text.as_bytes())
    }
}

/// `<out>.manifest.json`
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_bytes(path)?).map_err(|_| data(format!("{}: not valid UTF-8", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let bytes = read_bytes(path)?;
    Vocabulary::read_from(bytes.as_slice()).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_trie(path: &Path) -> Result<Trie> {
    let bytes = read_bytes(path)?;
    Trie::from_bytes(&bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// A count model (single JSON object with a `format` field) or a table
/// scorer (JSON lines).
pub fn load_scorer(path: &Path, vocab: &Vocabulary) -> Result<Box<dyn Scorer>> {
    let text = read_text(path)?;
    let is_model = serde_json::from_str::<Value>(&text).is_ok_and(|v| v.get("format").is_some());
    let scorer: Box<dyn Scorer> = if is_model {
        Box::new(CountScorer::from_json(&text).map_err(|e| data(format!("{}: {e}", path.display())))?)
    } else {
        Box::new(TableScorer::from_reader(text.as_bytes(), vocab).map_err(|e| data(format!("{}: {e}", path.display())))?)
    };
    if scorer.vocab_size() != vocab.len() {
        return Err(data(format!(
            "{}: scorer vocabulary size {} does not match vocabulary size {}",
            path.display(),
            scorer.vocab_size(),
            vocab.len()
        )));
    }
    Ok(scorer)
}

fn out_err(e: std::io::Error) -> CliError {
    usage(format!("write failed: {e}"))
}

pub fn cmd_build_vocab(args: &BuildVocabArgs, out: &mut dyn Write) -> Result<()> {
    let mut lines = Vec::new();
    for p in &args.corpus {
        lines.extend(read_text(p)?.lines().map(String::from));
    }
    let vocab = Vocabulary::build(&lines, args.max_size).map_err(usage)?;
    let mut buf = Vec::new();
    vocab.write_to(&mut buf).map_err(out_err)?;
    write_file(&args.out, &buf)?;
    let inputs: Vec<&Path> = args.corpus.iter().map(PathBuf::as_path).collect();
    RunManifest::new("build-vocab", json!({ "max_size": args.max_size }), &inputs, None)?.write(&manifest_path(&args.out))?;
    writeln!(out, "tokens: {}", vocab.len()).map_err(out_err)
}

pub fn cmd_build_trie(args: &BuildTrieArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(&args.vocab)?;
    let text = read_text(&args.keywords)?;
    let keywords = eval::dataset::read_keywords(text.as_bytes()).map_err(|e| data(format!("{}: {e}", args.keywords.display())))?;
    if keywords.is_empty() {
        return Err(usage(format!("{}: no keywords", args.keywords.display())));
    }
    let mut trie = Trie::new(vocab.len());
    for (i, kw) in keywords.iter().enumerate() {
        let ids = vocab.tokenize(kw);
        if ids.contains(&TokenId::UNK) {
            return Err(data(format!("{}: keyword {} ({kw:?}) has out-of-vocabulary words", args.keywords.display(), i + 1)));
        }
        trie.insert(&ids).map_err(|e| data(format!("{}: keyword {}: {e}", args.keywords.display(), i + 1)))?;
    }
    write_file(&args.out, &trie.to_bytes())?;
    RunManifest::new("build-trie", json!({}), &[&args.keywords, &args.vocab], None)?.write(&manifest_path(&args.out))?;
    writeln!(out, "keywords: {}", trie.keyword_count()).map_err(out_err)?;
    writeln!(out, "nodes: {}", trie.node_count()).map_err(out_err)
}

pub fn cmd_train_scorer(args: &TrainScorerArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = load_vocab(&args.vocab)?;
    let text = read_text(&args.pairs)?;
    let pairs = dataset::read_pairs(text.as_bytes()).map_err(|e| data(format!("{}: {e}", args.pairs.display())))?;
    if pairs.is_empty() {
        return Err(usage(format!("{}: no training pairs", args.pairs.display())));
    }
    let ids: Vec<(Vec<TokenId>, Vec<TokenId>)> = pairs.iter().map(|(q, k)| (vocab.tokenize(q), vocab.tokenize(k))).collect();
    let config = CountScorerConfig {
        copy_bonus_beta: args.beta,
        future_top_k: args.future_top_k,
        prediction_order: args.prediction_order,
        ..CountScorerConfig::with_markov_order(args.order)
    };
    let scorer = CountScorer::train(&ids, vocab.len(), config.clone()).map_err(usage)?;
    write_file(&args.out, scorer.to_json().as_bytes())?;
    let config = serde_json::to_value(&config).expect("config serializes");
    RunManifest::new("train-scorer", config, &[&args.pairs, &args.vocab], None)?.write(&manifest_path(&args.out))?;
    writeln!(out, "pairs: {}", pairs.len()).map_err(out_err)
}

pub fn cmd_extend(args: &ExtendArgs, out: &mut dyn Write) -> Result<()> {
    let config = BeamConfig {
        beam_size: args.beam,
        ngram_order: args.ngram,
        residual_weight: if args.plain { 1.0 } else { args.lambda },
        max_length: args.max_len,
        length_norm_alpha: args.alpha,
    };
    config.validate().map_err(usage)?;
    let vocab = load_vocab(&args.vocab)?;
    let trie = load_trie(&args.trie)?;
    let scorer = load_scorer(&args.scorer, &vocab)?;
    let query = vocab.tokenize(&args.query);
    let result = beam_search(&query, &trie, &scorer, &config).map_err(usage)?;
    for ext in &result.outputs {
        let text = vocab.detokenize(&ext.keyword).map_err(data)?;
        writeln!(out, "{:.6}\t{text}", ext.original_score).map_err(out_err)?;
    }
    if let Some(path) = &args.manifest {
        let mut cfg = serde_json::to_value(&config).expect("config serializes");
        cfg["query"] = json!(args.query);
        RunManifest::new("extend", cfg, &[&args.trie, &args.scorer, &args.vocab], None)?.write(path)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub rows: Vec<MetricsReport>,
    pub table: String,
}

pub fn cell_label(ngram: usize, lambda: f64) -> String {
    format!("n={ngram} lambda={lambda}")
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<EvalReport> {
    if args.beams.is_empty() || args.beams.contains(&0) {
        return Err(usage("--beams must list positive cutoffs"));
    }
    if args.lambdas.is_empty() || args.ngrams.is_empty() {
        return Err(usage("--lambdas and --ngrams must be non-empty"));
    }
    let cells: Vec<BeamConfig> = args
        .ngrams
        .iter()
        .flat_map(|&n| {
            args.lambdas.iter().map(move |&l| BeamConfig {
                beam_size: 1,
                ngram_order: n,
                residual_weight: l,
                max_length: args.max_len,
                length_norm_alpha: 0.0,
            })
        })
        .collect();
    for c in &cells {
        c.validate().map_err(usage)?;
    }
    let vocab = load_vocab(&args.vocab)?;
    let trie = load_trie(&args.trie)?;
    let scorer = load_scorer(&args.scorer, &vocab)?;
    if let Some(c) = cells.iter().find(|c| c.ngram_order > scorer.order()) {
        return Err(usage(format!("ngram {} exceeds scorer order {}", c.ngram_order, scorer.order())));
    }
    let text = read_text(&args.dataset)?;
    let records = dataset::read_dataset(text.as_bytes()).map_err(|e| data(format!("{}: {e}", args.dataset.display())))?;
    if records.is_empty() {
        return Err(usage(format!("{}: no queries", args.dataset.display())));
    }
    let in_library = |g: &str| trie.contains(&vocab.tokenize(g));
    let missing = eval::missing_goldens(&records, in_library);
    if !missing.is_empty() {
        return Err(data(format!("golden keywords not in trie for query ids {missing:?}")));
    }

    let eval_err = |e: eval::EvalError| match e {
        eval::EvalError::GoldenNotInLibrary(_) | eval::EvalError::Parse { .. } => data(e),
        _ => usage(e),
    };
    let mut rows: Vec<MetricsReport> = cells
        .par_iter()
        .map(|c| {
            let system = DecoderSystem { vocab: &vocab, trie: &trie, scorer: scorer.as_ref(), config: c.clone() };
            eval::evaluate(&cell_label(c.ngram_order, c.residual_weight), &records, &system, &args.beams, in_library)
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(eval_err)?;
    if args.bm25 {
        let library: Vec<String> = trie.keywords().iter().map(|k| vocab.detokenize(k).expect("trie ids are in vocabulary")).collect();
        let index = Bm25Index::build(&library, Bm25Params::default()).map_err(data)?;
        rows.push(eval::evaluate("BM25", &records, &Bm25System { index: &index }, &args.beams, in_library).map_err(eval_err)?);
    }
    if args.merge && rows.len() > 1 {
        let parts: Vec<&MetricsReport> = rows.iter().collect();
        let merged = eval::merge_reports("Merged", &records, &parts, &args.beams).map_err(eval_err)?;
        rows.push(merged);
    }
    let refs: Vec<&MetricsReport> = rows.iter().collect();
    let table = eval::render_table(&refs, true);
    out.write_all(table.as_bytes()).map_err(out_err)?;
    for r in &rows {
        if !r.recall_by_scenario.is_empty() {
            for (s, rec) in &r.recall_by_scenario {
                let cols: Vec<String> = rec.iter().map(|v| format!("{:.2}", v * 100.0)).collect();
                writeln!(out, "# {} [{s}] R: {}", r.label, cols.join(" ")).map_err(out_err)?;
            }
        }
    }
    let report = EvalReport { ks: args.beams.clone(), rows, table };
    if let Some(path) = &args.out {
        write_file(path, serde_json::to_string_pretty(&report).expect("report serializes").as_bytes())?;
        let cfg = json!({
            "beams": args.beams,
            "lambdas": args.lambdas,
            "ngrams": args.ngrams,
            "max_len": args.max_len,
            "bm25": args.bm25,
            "merge": args.merge,
        });
        RunManifest::new("eval", cfg, &[&args.trie, &args.scorer, &args.vocab, &args.dataset], None)?.write(&manifest_path(path))?;
    }
    Ok(report)
}

pub const SYNTH_FILES: [&str; 4] = ["keywords.txt", "train.tsv", "test.tsv", "spec.json"];

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec: synth::SynthSpec = match &args.spec {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => synth::SynthSpec::default(),
    };
    let generated = synth::generate(&spec, args.seed).map_err(usage)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| usage(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let dir = &args.out_dir;
    let mut kw = String::new();
    for k in &generated.keywords {
        kw.push_str(k);
        kw.push('\n');
    }
    write_file(&dir.join(SYNTH_FILES[0]), kw.as_bytes())?;
    let mut buf = Vec::new();
    dataset::write_pairs(&mut buf, &generated.train_pairs).map_err(out_err)?;
    write_file(&dir.join(SYNTH_FILES[1]), &buf)?;
    let mut buf = Vec::new();
    dataset::write_dataset(&mut buf, &generated.test).map_err(out_err)?;
    write_file(&dir.join(SYNTH_FILES[2]), &buf)?;
    let spec_json = serde_json::to_string_pretty(&spec).expect("spec serializes");
    write_file(&dir.join(SYNTH_FILES[3]), spec_json.as_bytes())?;
    let inputs: Vec<&Path> = args.spec.iter().map(PathBuf::as_path).collect();
    let cfg = serde_json::to_value(&spec).expect("spec serializes");
    RunManifest::new("synth", cfg, &inputs, Some(args.seed))?.write(&dir.join("manifest.json"))?;
    writeln!(out, "keywords: {}", generated.keywords.len()).map_err(out_err)?;
    writeln!(out, "train pairs: {}", generated.train_pairs.len()).map_err(out_err)?;
    writeln!(out, "test queries: {}", generated.test.len()).map_err(out_err)
}

/// Size the global pool from `TRIE_DECODE_THREADS` when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(usage(format!("{THREADS_ENV} must be positive")));
        }
        // a pool may already exist when embedded; keep it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    init_threads()?;
    match &cli.command {
        Command::BuildVocab(a) => cmd_build_vocab(a, out),
        Command::BuildTrie(a) => cmd_build_trie(a, out),
        Command::TrainScorer(a) => cmd_train_scorer(a, out),
        Command::Extend(a) => cmd_extend(a, out),
        Command::Eval(a) => cmd_eval(a, out).map(|_| ()),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

/// Parse `argv` and run; returns the exit code.
pub fn main_with_args<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return 2;
            }
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
