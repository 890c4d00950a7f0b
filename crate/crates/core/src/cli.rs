//! Command-line front end. Every subcommand reads a flat TOML config whose
//! resolved values (defaults included) are recorded in a run manifest next
//! to the primary output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dialog_model::{read_sessions, write_sessions, Session};
use crate::error::{Error, Result};
use crate::evalmetrics::{accuracy_with_tuned_threshold, auc, cla, precision_recall_table, DEFAULT_PRECISION_FLOOR};
use crate::gate_sim::{report_csv, simulate_ab, BehaviorModel, SimConfig, Variant};
use crate::satformer::{Predictor, PredictorConfig};
use crate::synthcorpus::{generate, CorpusConfig};
use crate::training::{self, trace_csv, Examples, TrainConfig};
use crate::weaklabel::features::{FeatureExtractor, NUM_FEATURES};
use crate::weaklabel::{label_corpus, labeled_pairs, train_weak_labeler, FeatureBaseline, WeakLabeler};

#[derive(Debug, Parser)]
#[command(name = "satgate", version, about = "Turn-level satisfaction prediction and clarification gating", arg_required_else_help = true)]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic session corpus (JSONL).
    GenCorpus(GenCorpusArgs),
    /// Write the 21 weak-label features of every turn as CSV.
    ExtractFeatures(ExtractArgs),
    /// Fit the weak labeler on oracle-labelled sessions.
    TrainWeak(TrainWeakArgs),
    /// Attach weak labels to every turn of a corpus.
    Label(LabelArgs),
    /// Train the transformer predictor on weak labels.
    Train(TrainArgs),
    /// Score a corpus with a checkpoint and report ranking metrics.
    Eval(EvalArgs),
    /// Replay a corpus under gating variants and report average CUS.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainWeakArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sessions with oracle labels.
    #[arg(long)]
    pub labeled: PathBuf,
    /// Corpus whose domain/intent frequencies define popularity features
    /// (defaults to the labelled sessions).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weakly labelled training sessions.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Checkpoint to continue training from.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub variants: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Record of one run: enough to reproduce it and to check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: BTreeMap<String, serde_json::Value>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub seed: Option<u64>,
    /// SHA-256 of every input and output file, keyed by path.
    pub checksums: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(subcommand: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        let value = serde_json::to_value(config).expect("serializable config");
        let config = match value {
            serde_json::Value::Object(map) => map.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        RunManifest {
            subcommand: subcommand.into(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seed,
            checksums: BTreeMap::new(),
        }
    }

    fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.to_path_buf());
        self
    }

    fn output(mut self, name: &str, path: &Path) -> Self {
        self.outputs.insert(name.into(), path.to_path_buf());
        self
    }

    /// Checksums all files and writes `<primary>.manifest.json` atomically.
    fn finish(mut self, primary: &Path) -> Result<PathBuf> {
        for p in self.inputs.values().chain(self.outputs.values()) {
            self.checksums.insert(p.display().to_string(), sha256_file(p)?);
        }
        let path = manifest_path(primary);
        let mut text = serde_json::to_string_pretty(&self).expect("serializable manifest");
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))
        }
    }
}

/// Flat view of [`CorpusConfig`]; the domain catalog and confidence shapes
/// keep their built-in values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenCorpusConfig {
    pub seed: u64,
    pub num_sessions: usize,
    pub turns_min: usize,
    pub turns_max: usize,
    pub asr_error_rate: f64,
    pub nlu_error_rate: f64,
    pub user_error_rate: f64,
    pub rephrase_prob: f64,
    pub continue_prob: f64,
}

impl Default for GenCorpusConfig {
    fn default() -> Self {
        let d = CorpusConfig::default();
        GenCorpusConfig {
            seed: d.seed,
            num_sessions: d.num_sessions,
            turns_min: d.turns_min,
            turns_max: d.turns_max,
            asr_error_rate: d.asr_error_rate,
            nlu_error_rate: d.nlu_error_rate,
            user_error_rate: d.user_error_rate,
            rephrase_prob: d.rephrase_prob,
            continue_prob: d.continue_prob,
        }
    }
}

impl GenCorpusConfig {
    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            seed: self.seed,
            num_sessions: self.num_sessions,
            turns_min: self.turns_min,
            turns_max: self.turns_max,
            asr_error_rate: self.asr_error_rate,
            nlu_error_rate: self.nlu_error_rate,
            user_error_rate: self.user_error_rate,
            rephrase_prob: self.rephrase_prob,
            continue_prob: self.continue_prob,
            ..CorpusConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainWeakConfig {
    pub reg_strength: f64,
    /// Use at most this many labelled turn pairs (0 = all), drawn by seed.
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for TrainWeakConfig {
    fn default() -> Self {
        TrainWeakConfig { reg_strength: 1e-3, max_pairs: 0, seed: 0 }
    }
}

/// Model and optimizer settings in one flat table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub vocab_size: usize,
    pub max_text_len: usize,
    pub embed_dim: usize,
    pub num_turns: usize,
    pub text_blocks: usize,
    pub struct_blocks: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub attention_scale: f64,
    pub decision_threshold: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub label_noise_rate: f64,
    /// "oracle" or "weak": which labels of the validation corpus AUC uses.
    pub val_labels: String,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        let m = PredictorConfig::desk();
        let t = TrainConfig::default();
        TrainRunConfig {
            vocab_size: m.vocab_size,
            max_text_len: m.max_text_len,
            embed_dim: m.embed_dim,
            num_turns: m.num_turns,
            text_blocks: m.text_blocks,
            struct_blocks: m.struct_blocks,
            num_heads: m.num_heads,
            ffn_dim: m.ffn_dim,
            attention_scale: m.attention_scale,
            decision_threshold: m.decision_threshold,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: t.seed,
            eval_every: t.eval_every,
            label_noise_rate: t.label_noise_rate,
            val_labels: "oracle".into(),
        }
    }
}

impl TrainRunConfig {
    pub fn predictor(&self) -> PredictorConfig {
        PredictorConfig {
            vocab_size: self.vocab_size,
            max_text_len: self.max_text_len,
            embed_dim: self.embed_dim,
            num_turns: self.num_turns,
            text_blocks: self.text_blocks,
            struct_blocks: self.struct_blocks,
            num_heads: self.num_heads,
            ffn_dim: self.ffn_dim,
            attention_scale: self.attention_scale,
            decision_threshold: self.decision_threshold,
        }
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed: self.seed,
            eval_every: self.eval_every,
            label_noise_rate: self.label_noise_rate,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// "oracle" or "weak".
    pub labels: String,
    pub precision_floor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { labels: "oracle".into(), precision_floor: DEFAULT_PRECISION_FLOOR }
    }
}

/// Variant set for `simulate`. A no-predictor variant is always included;
/// the others are enabled by their keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantsConfig {
    pub seed: u64,
    pub threshold: f64,
    pub p_fix: f64,
    pub p_annoy: f64,
    /// Transformer checkpoint ("" = none).
    pub checkpoint: String,
    /// Weakly labelled corpus to fit the feature baseline on ("" = none).
    pub baseline_corpus: String,
    pub baseline_reg: f64,
    pub oracle: bool,
    /// Comma-separated group weights, one per variant in the order
    /// none, baseline, transformer, oracle ("" = replay every session per variant).
    pub partition_weights: String,
    /// Replay a seeded sample of this many sessions (0 = all).
    pub sample_sessions: usize,
}

impl Default for VariantsConfig {
    fn default() -> Self {
        let b = BehaviorModel::default();
        VariantsConfig {
            seed: 0,
            threshold: 0.7,
            p_fix: b.p_fix,
            p_annoy: b.p_annoy,
            checkpoint: String::new(),
            baseline_corpus: String::new(),
            baseline_reg: 1e-3,
            oracle: false,
            partition_weights: String::new(),
            sample_sessions: 0,
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn labels_for(sessions: &[Session], which: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for s in sessions {
        match which {
            "oracle" => out.extend(
                s.oracle_satisfaction
                    .as_ref()
                    .ok_or_else(|| Error::Validation(format!("session {} has no oracle labels", s.session_id)))?
                    .iter()
                    .map(|&v| v as f64),
            ),
            "weak" => out.extend(
                s.weak_labels
                    .as_ref()
                    .ok_or_else(|| Error::Validation(format!("session {} has no weak labels", s.session_id)))?,
            ),
            other => return Err(Error::Config(format!("labels must be \"oracle\" or \"weak\", got {other:?}"))),
        }
    }
    Ok(out)
}

fn examples(predictor: &Predictor, sessions: &[Session], which: &str) -> Result<Examples> {
    let labels = labels_for(sessions, which)?;
    let mut windows = Vec::with_capacity(labels.len());
    for s in sessions {
        for n in 0..s.len() {
            windows.push(predictor.window(s, n)?);
        }
    }
    Ok(Examples { windows, labels })
}

pub fn gen_corpus(args: &GenCorpusArgs) -> Result<PathBuf> {
    let mut cfg: GenCorpusConfig = read_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let corpus = generate(&cfg.corpus_config())?;
    write_sessions(&corpus, &args.out)?;
    let mut m = RunManifest::new("gen-corpus", &cfg, Some(cfg.seed)).output("corpus", &args.out);
    if let Some(c) = &args.config {
        m = m.input("config", c);
    }
    m.finish(&args.out)
}

pub fn extract_features(args: &ExtractArgs) -> Result<PathBuf> {
    let sessions = read_sessions(&args.input)?;
    let extractor = FeatureExtractor::fit(&sessions);
    let mut csv = String::from("session_id,turn");
    for i in 1..=NUM_FEATURES {
        csv.push_str(&format!(",f{i}"));
    }
    csv.push_str(",oracle\n");
    for s in &sessions {
        for n in 0..s.len() {
            let fv = extractor.extract(s, n)?;
            csv.push_str(&format!("{},{}", s.session_id, n));
            for v in fv.values() {
                csv.push_str(&format!(",{v}"));
            }
            match &s.oracle_satisfaction {
                Some(o) => csv.push_str(&format!(",{}\n", o[n])),
                None => csv.push_str(",\n"),
            }
        }
    }
    write_text(&args.out, &csv)?;
    RunManifest::new("extract-features", &serde_json::json!({}), None)
        .input("corpus", &args.input)
        .output("features", &args.out)
        .finish(&args.out)
}

pub fn train_weak(args: &TrainWeakArgs) -> Result<PathBuf> {
    let mut cfg: TrainWeakConfig = read_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let labeled = read_sessions(&args.labeled)?;
    let extractor = match &args.corpus {
        Some(p) => FeatureExtractor::fit(&read_sessions(p)?),
        None => FeatureExtractor::fit(&labeled),
    };
    let (mut feats, mut labels) = labeled_pairs(&extractor, &labeled);
    if cfg.max_pairs > 0 && cfg.max_pairs < feats.len() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut pick = rand::seq::index::sample(&mut rng, feats.len(), cfg.max_pairs).into_vec();
        pick.sort_unstable();
        feats = pick.iter().map(|&i| feats[i]).collect();
        labels = pick.iter().map(|&i| labels[i]).collect();
    }
    let model = train_weak_labeler(&feats, &labels, cfg.reg_strength)?;
    WeakLabeler { extractor, model }.save(&args.out)?;
    let mut m = RunManifest::new("train-weak", &cfg, Some(cfg.seed)).input("labeled", &args.labeled).output("model", &args.out);
    if let Some(c) = &args.corpus {
        m = m.input("corpus", c);
    }
    if let Some(c) = &args.config {
        m = m.input("config", c);
    }
    m.finish(&args.out)
}

pub fn label(args: &LabelArgs) -> Result<PathBuf> {
    let labeler = WeakLabeler::load(&args.model)?;
    let sessions = read_sessions(&args.input)?;
    write_sessions(&label_corpus(&labeler, &sessions), &args.out)?;
    RunManifest::new("label", &serde_json::json!({}), None)
        .input("model", &args.model)
        .input("corpus", &args.input)
        .output("corpus", &args.out)
        .finish(&args.out)
}

pub fn train(args: &TrainArgs) -> Result<PathBuf> {
    let mut cfg: TrainRunConfig = read_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let corpus = read_sessions(&args.corpus)?;
    let val_sessions = read_sessions(&args.val)?;
    let init = match &args.warm_start {
        Some(p) => {
            let prior = Predictor::load(p)?;
            if prior.config != cfg.predictor() {
                return Err(Error::Config("warm-start checkpoint was trained with a different model config".into()));
            }
            prior
        }
        None => Predictor::new(cfg.predictor(), &corpus, cfg.seed)?,
    };
    let train_set = examples(&init, &corpus, "weak")?;
    let val_set = examples(&init, &val_sessions, &cfg.val_labels)?;
    let outcome = training::train(init, &cfg.training(), &train_set, &val_set)?;
    outcome.best.save(&args.out)?;
    let mut trace_path = args.out.as_os_str().to_owned();
    trace_path.push(".trace.csv");
    let trace_path = PathBuf::from(trace_path);
    write_text(&trace_path, &trace_csv(&outcome.trace))?;
    let mut m = RunManifest::new("train", &cfg, Some(cfg.seed))
        .input("corpus", &args.corpus)
        .input("val", &args.val)
        .output("checkpoint", &args.out)
        .output("trace", &trace_path);
    if let Some(w) = &args.warm_start {
        m = m.input("warm_start", w);
    }
    if let Some(c) = &args.config {
        m = m.input("config", c);
    }
    m.finish(&args.out)
}

pub fn eval(args: &EvalArgs) -> Result<PathBuf> {
    let cfg: EvalConfig = read_config(args.config.as_deref())?;
    let predictor = Predictor::load(&args.ckpt)?;
    let sessions = read_sessions(&args.corpus)?;
    let set = examples(&predictor, &sessions, &cfg.labels)?;
    let scores = training::predict_all(&predictor, &set)?;
    let labels = set.binary_labels();
    let (acc, thr) = accuracy_with_tuned_threshold(&scores, &labels)?;
    let mut csv = String::from("metric,value\n");
    csv.push_str(&format!("n_turns,{}\n", labels.len()));
    csv.push_str(&format!("auc,{:.10}\n", auc(&scores, &labels)?));
    csv.push_str(&format!("cla,{:.10}\n", cla(&scores, &labels, cfg.precision_floor)?));
    csv.push_str(&format!("accuracy,{acc:.10}\n"));
    csv.push_str(&format!("accuracy_threshold,{thr:.2}\n"));
    // the same metrics with the unsatisfied turn as the positive class
    let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
    let neg: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
    csv.push_str(&format!("cla_unsatisfied,{:.10}\n", cla(&neg, &flipped, cfg.precision_floor)?));
    csv.push('\n');
    csv.push_str("threshold,precision,recall\n");
    for p in precision_recall_table(&scores, &labels)? {
        csv.push_str(&format!("{:.2},{:.10},{:.10}\n", p.threshold, p.precision, p.recall));
    }
    write_text(&args.report, &csv)?;
    let mut m = RunManifest::new("eval", &cfg, None)
        .input("checkpoint", &args.ckpt)
        .input("corpus", &args.corpus)
        .output("report", &args.report);
    if let Some(c) = &args.config {
        m = m.input("config", c);
    }
    m.finish(&args.report)
}

pub fn simulate(args: &SimulateArgs) -> Result<PathBuf> {
    let mut cfg: VariantsConfig = read_config(Some(&args.variants))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let corpus = read_sessions(&args.corpus)?;
    let mut variants = vec![Variant::no_predictor("no-predictor")];
    let mut m = RunManifest::new("simulate", &cfg, Some(cfg.seed)).input("corpus", &args.corpus).input("variants", &args.variants);
    if !cfg.baseline_corpus.is_empty() {
        let path = PathBuf::from(&cfg.baseline_corpus);
        let train_sessions = read_sessions(&path)?;
        let baseline = FeatureBaseline::train(FeatureExtractor::fit(&train_sessions), &train_sessions, cfg.baseline_reg)?;
        variants.push(Variant::scored("feature-baseline", &corpus, cfg.threshold, |s, n| baseline.score(s, n))?);
        m = m.input("baseline_corpus", &path);
    }
    if !cfg.checkpoint.is_empty() {
        let path = PathBuf::from(&cfg.checkpoint);
        let predictor = Predictor::load(&path)?;
        variants.push(Variant::scored("transformer", &corpus, cfg.threshold, |s, n| predictor.predict(s, n))?);
        m = m.input("checkpoint", &path);
    }
    if cfg.oracle {
        variants.push(Variant::oracle("oracle", &corpus, cfg.threshold)?);
    }
    let partition_weights = if cfg.partition_weights.trim().is_empty() {
        None
    } else {
        let w = cfg
            .partition_weights
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Config(format!("partition_weights: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        Some(w)
    };
    let sim = SimConfig {
        seed: cfg.seed,
        behavior: BehaviorModel { p_fix: cfg.p_fix, p_annoy: cfg.p_annoy },
        partition_weights,
        sample_sessions: (cfg.sample_sessions > 0).then_some(cfg.sample_sessions),
    };
    let reports = simulate_ab(&corpus, &variants, &sim)?;
    write_text(&args.out, &report_csv(&reports))?;
    m.output("report", &args.out).finish(&args.out)
}

pub fn run(cli: &Cli) -> Result<PathBuf> {
    match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::ExtractFeatures(a) => extract_features(a),
        Command::TrainWeak(a) => train_weak(a),
        Command::Label(a) => label(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => simulate(a),
    }
}

/// One-line machine-parsable error.
pub fn format_error(e: &Error) -> String {
    format!("error: kind={} message={:?}", e.kind(), e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_configs_reject_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "num_sessions = 5\nbogus = 1\n").unwrap();
        assert!(matches!(read_config::<GenCorpusConfig>(Some(&p)), Err(Error::Config(_))));
        fs::write(&p, "num_sessions = 5\n").unwrap();
        let c: GenCorpusConfig = read_config(Some(&p)).unwrap();
        assert_eq!(c.num_sessions, 5);
        assert_eq!(c.asr_error_rate, 0.10);
    }

    #[test]
    fn manifest_lists_every_default() {
        let m = RunManifest::new("train", &TrainRunConfig::default(), Some(1));
        for key in ["embed_dim", "batch_size", "learning_rate", "label_noise_rate", "val_labels"] {
            assert!(m.config.contains_key(key), "{key}");
        }
        assert_eq!(manifest_path(Path::new("out/x.jsonl")), PathBuf::from("out/x.jsonl.manifest.json"));
    }

    #[test]
    fn error_line_is_single_line() {
        let e = Error::Parse { line: 3, message: "bad\nthing".into() };
        let s = format_error(&e);
        assert!(!s.contains('\n'));
        assert!(s.starts_with("error: kind=parse "));
    }
}
