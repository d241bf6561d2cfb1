//! Command implementations behind the CLI: parse a config file, run,
//! write a results directory with a manifest sufficient to reproduce
//! the run.
//!
//! Every command is a pure function of (config file, seed) up to the
//! manifest's timing fields. Derived seeds are mixed from the top-level
//! seed, so `--seed` replaces one number and changes the whole run
//! coherently.

use crate::bounds::{regime_sweep, SweepSpec, SweepTable};
use crate::cascade::{
    compare_strategies, run_plan, CascadePlan, ComparisonSpec, PlanSpec, Strategy,
};
use crate::data::{build_corpus, export_corpus, Corpus, CorpusConfig, SplitName};
use crate::error::{Error, Result};
use crate::eval::{emit_report, evaluate, make_table, ReportFormat, ResultRow, ResultTable};
use crate::model::{load_checkpoint, save_checkpoint, CapacityTier, TinyVlm};
use crate::pipeline::{
    train_tinyllava, EncoderProxyConfig, LlavaKdConfig, MetricsRecord, StepConfig, StepKind,
    TinyLlavaConfig,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "CKD_OUT_ROOT";

pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed.wrapping_add(salt).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// ── config loading ───────────────────────────────────────────────────

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Parse a TOML config into `T`, reporting the path of the offending key
/// on schema violations.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
        path: "<syntax>".into(),
        detail: e.to_string(),
    })?;
    let json = serde_json::to_value(&value)?;
    serde_path_to_error::deserialize(json).map_err(|e| Error::Config {
        path: e.path().to_string(),
        detail: e.inner().to_string(),
    })
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<(T, String, serde_json::Value)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config { path: path.display().to_string(), detail: e.to_string() })?;
    let cfg = parse_config::<T>(&text)?;
    let value: toml::Table = text.parse().expect("parsed above");
    Ok((cfg, sha256_hex(text.as_bytes()), serde_json::to_value(&value)?))
}

// ── run manifests ────────────────────────────────────────────────────

/// Reproducibility record written into every run directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    /// Resolved snapshot of the config file.
    pub config: serde_json::Value,
    /// SHA-256 of the config file and of every input checkpoint.
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub duration_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

struct ManifestBuilder {
    command: String,
    seed: u64,
    config: serde_json::Value,
    input_hashes: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: u128,
}

impl ManifestBuilder {
    fn new(command: &str, seed: u64, config: serde_json::Value, config_hash: String) -> Self {
        let mut input_hashes = BTreeMap::new();
        input_hashes.insert("config".into(), config_hash);
        ManifestBuilder {
            command: command.into(),
            seed,
            config,
            input_hashes,
            outputs: Vec::new(),
            started: now_ms(),
        }
    }

    fn input(&mut self, name: &str, hash: String) {
        self.input_hashes.insert(name.into(), hash);
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    fn write(self, out_dir: &Path) -> Result<()> {
        let finished = now_ms();
        let manifest = RunManifest {
            command: self.command,
            seed: self.seed,
            config: self.config,
            input_hashes: self.input_hashes,
            outputs: self.outputs,
            started_unix_ms: self.started,
            finished_unix_ms: finished,
            duration_ms: finished.saturating_sub(self.started),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        std::fs::write(out_dir.join("manifest.json"), s)?;
        Ok(())
    }
}

fn write_metrics(path: &Path, metrics: &[MetricsRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for m in metrics {
        let line = serde_json::to_string(m)?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

// ── shared config pieces ─────────────────────────────────────────────

/// Partial per-step settings; unset fields keep the step's defaults.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StepOverrides {
    pub peak_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub warmup_ratio: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub tau3: Option<f64>,
    pub temperature: Option<f64>,
    pub raw_sums: Option<bool>,
    pub weight_decay: Option<f64>,
    pub clip_norm: Option<f64>,
}

impl StepOverrides {
    pub fn apply(&self, kind: StepKind, seed: u64) -> StepConfig {
        let mut cfg = StepConfig::defaults_for(kind, seed);
        if let Some(v) = self.peak_lr {
            cfg.peak_lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.warmup_ratio {
            cfg.warmup_ratio = v;
        }
        if let Some(v) = self.tau1 {
            cfg.weights.tau1 = v;
        }
        if let Some(v) = self.tau2 {
            cfg.weights.tau2 = v;
        }
        if let Some(v) = self.tau3 {
            cfg.weights.tau3 = v;
        }
        if let Some(v) = self.temperature {
            cfg.weights.temperature = v;
        }
        if let Some(v) = self.raw_sums {
            cfg.weights.raw_sums = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = self.clip_norm {
            cfg.clip_norm = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EncoderOverrides {
    pub peak_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub warmup_ratio: Option<f64>,
}

impl EncoderOverrides {
    pub fn apply(&self, seed: u64) -> EncoderProxyConfig {
        let mut cfg = EncoderProxyConfig { seed, ..EncoderProxyConfig::default() };
        if let Some(v) = self.peak_lr {
            cfg.peak_lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.warmup_ratio {
            cfg.warmup_ratio = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StepsSection {
    #[serde(default)]
    pub pt: StepOverrides,
    #[serde(default)]
    pub ft: StepOverrides,
    #[serde(default)]
    pub dpt: StepOverrides,
    #[serde(default)]
    pub sft: StepOverrides,
    #[serde(default)]
    pub dft: StepOverrides,
    #[serde(default)]
    pub distill_only: bool,
}

impl StepsSection {
    pub fn tinyllava(&self, seed: u64) -> TinyLlavaConfig {
        TinyLlavaConfig {
            pt: self.pt.apply(StepKind::Pt, mix(seed, 101)),
            ft: self.ft.apply(StepKind::Ft, mix(seed, 102)),
        }
    }

    pub fn llavakd(&self, seed: u64) -> LlavaKdConfig {
        LlavaKdConfig {
            dpt: self.dpt.apply(StepKind::Dpt, mix(seed, 103)),
            sft: self.sft.apply(StepKind::Sft, mix(seed, 104)),
            dft: self.dft.apply(StepKind::Dft, mix(seed, 105)),
            distill_only: self.distill_only,
        }
    }
}

fn effective_corpus(corpus: &CorpusConfig, seed: u64) -> CorpusConfig {
    CorpusConfig { seed: mix(seed, corpus.seed), ..corpus.clone() }
}

fn student_config(corpus: &CorpusConfig, base_hidden: usize, seed: u64) -> crate::model::ModelConfig {
    crate::model::ModelConfig::for_tier(
        CapacityTier::Student,
        corpus.d_embed,
        corpus.vocab().size(),
        corpus.max_seq,
        corpus.n_visual_tokens(),
        base_hidden,
        mix(seed, 1),
    )
}

// ── pretrain ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainFileConfig {
    pub seed: u64,
    pub base_hidden: usize,
    pub tiers: Vec<CapacityTier>,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub encoder: EncoderOverrides,
    #[serde(default)]
    pub steps: StepsSection,
    /// Also export the generated corpus as line-delimited records.
    #[serde(default)]
    pub export_corpus: bool,
}

#[derive(Debug)]
pub struct PretrainArtifacts {
    pub checkpoints: BTreeMap<CapacityTier, PathBuf>,
    pub out_dir: PathBuf,
}

fn tier_salt(tier: CapacityTier) -> u64 {
    match tier {
        CapacityTier::Student => 1,
        CapacityTier::Assistant => 2,
        CapacityTier::Teacher => 3,
    }
}

/// Build the corpus, pretrain each requested tier (encoder proxy, PT,
/// FT), and write one checkpoint directory per tier.
pub fn cmd_pretrain(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<PretrainArtifacts> {
    let (cfg, cfg_hash, snapshot) = load_config::<PretrainFileConfig>(config_path)?;
    if cfg.tiers.is_empty() {
        return Err(Error::Config { path: "tiers".into(), detail: "no tiers requested".into() });
    }
    let seed = seed_override.unwrap_or(cfg.seed);
    let mut manifest = ManifestBuilder::new("pretrain", seed, snapshot, cfg_hash);
    std::fs::create_dir_all(out_dir)?;

    let corpus = build_corpus(&effective_corpus(&cfg.corpus, seed))?;
    if cfg.export_corpus {
        let path = out_dir.join("corpus.jsonl");
        let f = std::fs::File::create(&path)?;
        export_corpus(&corpus, std::io::BufWriter::new(f))?;
        manifest.output(&path);
    }

    let mut checkpoints = BTreeMap::new();
    for &tier in &cfg.tiers {
        let tier_seed = mix(seed, tier_salt(tier));
        let model_cfg = crate::model::ModelConfig::for_tier(
            tier,
            cfg.corpus.d_embed,
            cfg.corpus.vocab().size(),
            cfg.corpus.max_seq,
            cfg.corpus.n_visual_tokens(),
            cfg.base_hidden,
            tier_seed,
        );
        let mut model =
            crate::cascade::prepare_model(&model_cfg, &corpus, &cfg.encoder.apply(mix(seed, 9)))?;
        let out = train_tinyllava(&mut model, &corpus, &cfg.steps.tinyllava(mix(seed, tier_salt(tier) << 4)))?;

        let tier_dir = out_dir.join(tier.as_str());
        std::fs::create_dir_all(&tier_dir)?;
        let ckpt_path = tier_dir.join("checkpoint.ckpt");
        save_checkpoint(&ckpt_path, &out.checkpoint)?;
        manifest.output(&ckpt_path);
        for run in &out.steps {
            let mpath = tier_dir.join(format!("metrics_{}.jsonl", run.kind.as_str()));
            write_metrics(&mpath, &run.metrics)?;
            manifest.output(&mpath);
        }
        checkpoints.insert(tier, ckpt_path);
    }
    manifest.write(out_dir)?;
    Ok(PretrainArtifacts { checkpoints, out_dir: out_dir.to_path_buf() })
}

// ── cascade / distill ────────────────────────────────────────────────

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeFileConfig {
    pub seed: u64,
    pub strategy: Strategy,
    /// Checkpoint paths, weakest teacher first. Relative paths resolve
    /// against the config file's directory.
    #[serde(default)]
    pub ladder: Vec<String>,
    pub base_hidden: usize,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub encoder: EncoderOverrides,
    #[serde(default)]
    pub steps: StepsSection,
}

#[derive(Debug)]
pub struct CascadeArtifacts {
    pub final_checkpoint: PathBuf,
    pub table: ResultTable,
    pub out_dir: PathBuf,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = PathBuf::from(rel);
    if p.is_absolute() {
        p
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Execute one cascade plan: run the strategy, then evaluate the final
/// student and write stage records, metrics, checkpoint and report.
pub fn cmd_cascade(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    format: ReportFormat,
) -> Result<CascadeArtifacts> {
    let (cfg, cfg_hash, snapshot) = load_config::<CascadeFileConfig>(config_path)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let mut manifest = ManifestBuilder::new("cascade", seed, snapshot, cfg_hash);
    std::fs::create_dir_all(out_dir)?;

    let mut ladder = Vec::new();
    for rel in &cfg.ladder {
        let path = resolve(config_path, rel);
        if !path.exists() {
            return Err(Error::InvalidPlan(format!(
                "missing checkpoint `{}`",
                path.display()
            )));
        }
        let ckpt = load_checkpoint(&path)?;
        manifest.input(&format!("ladder:{}", path.display()), ckpt.content_hash()?);
        ladder.push(ckpt);
    }

    let corpus = build_corpus(&effective_corpus(&cfg.corpus, seed))?;
    let plan = CascadePlan {
        strategy: cfg.strategy,
        ladder,
        student: student_config(&cfg.corpus, cfg.base_hidden, seed),
        kd: cfg.steps.llavakd(seed),
        stage_overrides: BTreeMap::new(),
        tinyllava: cfg.steps.tinyllava(seed),
        encoder: cfg.encoder.apply(mix(seed, 9)),
    };
    let out = run_plan(&plan, &corpus)?;

    // Results directory layout: stage metrics, records, final
    // checkpoint, evaluation report.
    let metrics_dir = out_dir.join("metrics");
    std::fs::create_dir_all(&metrics_dir)?;
    for (name, metrics) in &out.step_logs {
        let path = metrics_dir.join(format!("{}.jsonl", name.replace('/', "_")));
        write_metrics(&path, metrics)?;
        manifest.output(&path);
    }
    let records_path = out_dir.join("records.json");
    let mut s = serde_json::to_string_pretty(&out.records)?;
    s.push('\n');
    std::fs::write(&records_path, s)?;
    manifest.output(&records_path);

    let final_dir = out_dir.join("final");
    std::fs::create_dir_all(&final_dir)?;
    let ckpt_path = final_dir.join("checkpoint.ckpt");
    save_checkpoint(&ckpt_path, &out.final_model.to_checkpoint())?;
    manifest.output(&ckpt_path);

    let mut scores = Vec::new();
    for name in SplitName::ALL {
        scores.push(evaluate(&out.final_model, corpus.split(name))?);
    }
    let row = ResultRow {
        method: cfg.strategy.as_str().to_string(),
        strategy: cfg.strategy.as_str().to_string(),
        seed,
        scores,
    };
    let table = make_table(
        SplitName::ALL.iter().map(|s| s.as_str().to_string()).collect(),
        vec![row],
    )?;
    let report_path = out_dir.join(format!("report.{}", format.extension()));
    std::fs::write(&report_path, emit_report(&table, format)?)?;
    manifest.output(&report_path);
    manifest.write(out_dir)?;
    Ok(CascadeArtifacts { final_checkpoint: ckpt_path, table, out_dir: out_dir.to_path_buf() })
}

/// Single-teacher distillation; a cascade plan with the strategy fixed.
pub fn cmd_distill(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    format: ReportFormat,
) -> Result<CascadeArtifacts> {
    let (cfg, _, _) = load_config::<CascadeFileConfig>(config_path)?;
    if cfg.strategy != Strategy::SingleTeacher {
        return Err(Error::Config {
            path: "strategy".into(),
            detail: "distill requires strategy = \"single_teacher\"".into(),
        });
    }
    cmd_cascade(config_path, out_dir, seed_override, format)
}

// ── ablate ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AblateFileConfig {
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub base_hidden: usize,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub encoder: EncoderOverrides,
    #[serde(default)]
    pub steps: StepsSection,
    pub plans: Vec<PlanSpec>,
}

/// Seed-replicated strategy comparison; writes the comparison table in
/// csv, json and markdown.
pub fn cmd_ablate(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    seeds_override: Option<usize>,
    jobs: Option<usize>,
) -> Result<ResultTable> {
    let (cfg, cfg_hash, snapshot) = load_config::<AblateFileConfig>(config_path)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let mut manifest = ManifestBuilder::new("ablate", seed, snapshot, cfg_hash);
    std::fs::create_dir_all(out_dir)?;

    let seeds: Vec<u64> = match seeds_override {
        Some(n) => (0..n as u64).map(|i| mix(seed, 1000 + i)).collect(),
        None => cfg.seeds.clone(),
    };
    if seeds.is_empty() {
        return Err(Error::Config { path: "seeds".into(), detail: "no seeds given".into() });
    }
    let spec = ComparisonSpec {
        corpus: effective_corpus(&cfg.corpus, seed),
        base_hidden: cfg.base_hidden,
        encoder: cfg.encoder.apply(mix(seed, 9)),
        tinyllava: cfg.steps.tinyllava(seed),
        kd: cfg.steps.llavakd(seed),
        plans: cfg.plans.clone(),
    };
    let table = match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Serde(e.to_string()))?;
            pool.install(|| compare_strategies(&spec, &seeds))?
        }
        None => compare_strategies(&spec, &seeds)?,
    };

    for fmt in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown] {
        let path = out_dir.join(format!("report.{}", fmt.extension()));
        std::fs::write(&path, emit_report(&table, fmt)?)?;
        manifest.output(&path);
    }
    manifest.write(out_dir)?;
    Ok(table)
}

// ── bounds ───────────────────────────────────────────────────────────

#[derive(Debug)]
pub struct BoundsArtifacts {
    pub table: SweepTable,
    pub out_dir: PathBuf,
}

/// Run a bound-parameter sweep and write the records plus a boundary
/// summary.
pub fn cmd_bounds(config_path: &Path, out_dir: &Path) -> Result<BoundsArtifacts> {
    let (spec, cfg_hash, snapshot) = load_config::<SweepSpec>(config_path)?;
    let mut manifest = ManifestBuilder::new("bounds", 0, snapshot, cfg_hash);
    std::fs::create_dir_all(out_dir)?;
    let table = regime_sweep(&spec)?;

    let records_path = out_dir.join("sweep.json");
    let mut s = serde_json::to_string_pretty(&table)?;
    s.push('\n');
    std::fs::write(&records_path, s)?;
    manifest.output(&records_path);

    #[derive(Serialize)]
    struct Summary<'a> {
        n_records: usize,
        holds_fraction: f64,
        n_flips: usize,
        flips: &'a [crate::bounds::FlipPoint],
    }
    let summary_path = out_dir.join("summary.json");
    let mut s = serde_json::to_string_pretty(&Summary {
        n_records: table.records.len(),
        holds_fraction: table.holds_fraction,
        n_flips: table.flips.len(),
        flips: &table.flips,
    })?;
    s.push('\n');
    std::fs::write(&summary_path, s)?;
    manifest.output(&summary_path);
    manifest.write(out_dir)?;
    Ok(BoundsArtifacts { table, out_dir: out_dir.to_path_buf() })
}

// ── eval / report ────────────────────────────────────────────────────

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFileConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    /// (label, checkpoint path) pairs to evaluate.
    pub checkpoints: Vec<EvalTarget>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvalTarget {
    pub name: String,
    pub path: String,
}

/// Evaluate checkpoints on the held-out splits of the configured corpus.
pub fn cmd_eval(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    format: ReportFormat,
) -> Result<ResultTable> {
    let (cfg, cfg_hash, snapshot) = load_config::<EvalFileConfig>(config_path)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let mut manifest = ManifestBuilder::new("eval", seed, snapshot, cfg_hash);
    std::fs::create_dir_all(out_dir)?;
    let corpus = build_corpus(&effective_corpus(&cfg.corpus, seed))?;

    let mut rows = Vec::new();
    for target in &cfg.checkpoints {
        let path = resolve(config_path, &target.path);
        let ckpt = load_checkpoint(&path)?;
        manifest.input(&format!("checkpoint:{}", target.name), ckpt.content_hash()?);
        let model = TinyVlm::from_checkpoint(&ckpt)?;
        let mut scores = Vec::new();
        for name in SplitName::ALL {
            scores.push(evaluate(&model, corpus.split(name))?);
        }
        rows.push(ResultRow {
            method: target.name.clone(),
            strategy: ckpt.last_tag().step.to_string(),
            seed,
            scores,
        });
    }
    let table = make_table(
        SplitName::ALL.iter().map(|s| s.as_str().to_string()).collect(),
        rows,
    )?;
    let report_path = out_dir.join(format!("report.{}", format.extension()));
    std::fs::write(&report_path, emit_report(&table, format)?)?;
    manifest.output(&report_path);
    manifest.write(out_dir)?;
    Ok(table)
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFileConfig {
    /// A previously written JSON report (or CSV, by extension).
    pub input: String,
}

/// Re-emit a stored result table in another format.
pub fn cmd_report(config_path: &Path, out_dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    let (cfg, cfg_hash, snapshot) = load_config::<ReportFileConfig>(config_path)?;
    let mut manifest = ManifestBuilder::new("report", 0, snapshot, cfg_hash);
    std::fs::create_dir_all(out_dir)?;
    let input = resolve(config_path, &cfg.input);
    let text = std::fs::read_to_string(&input)?;
    manifest.input("table", sha256_hex(text.as_bytes()));
    let table: ResultTable = if input.extension().and_then(|e| e.to_str()) == Some("csv") {
        crate::eval::parse_report_csv(&text)?
    } else {
        serde_json::from_str(&text)?
    };
    let out_path = out_dir.join(format!("report.{}", format.extension()));
    std::fs::write(&out_path, emit_report(&table, format)?)?;
    manifest.output(&out_path);
    manifest.write(out_dir)?;
    Ok(out_path)
}

/// Export the corpus a config describes, without training anything.
pub fn write_corpus_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    export_corpus(corpus, std::io::BufWriter::new(f))
}
