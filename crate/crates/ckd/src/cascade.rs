//! Cascade orchestration: bottom-up cascaded distillation, the top-down
//! ablation baseline, plain single-teacher distillation, and direct
//! training, over an arbitrary ladder of teacher checkpoints.
//!
//! Bottom-up runs one distillation stage per ladder rung, weakest
//! teacher first, threading the student through the stages. Top-down
//! first distills the strongest teacher down the ladder (each rung
//! trained as a student of the rung above) and distills the student
//! exactly once, from the last distilled assistant. Teachers are never
//! mutated; every stage starts from an immutable checkpoint.

use crate::data::{build_corpus, Corpus, CorpusConfig, SplitName};
use crate::error::{Error, Result};
use crate::eval::{evaluate, make_table, ResultRow, ResultTable};
use crate::model::{
    build_model, CapacityTier, Checkpoint, ModelConfig, TinyVlm,
};
use crate::pipeline::{
    pretrain_encoder, train_llavakd_stage, train_tinyllava, EncoderProxyConfig, LlavaKdConfig,
    MetricsRecord, StepConfig, TinyLlavaConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Full-scale reference averages for the two cascade orderings, kept
/// alongside desk-scale results for context.
pub const FULL_SCALE_BOTTOM_UP_AVG: f64 = 61.8;
pub const FULL_SCALE_TOP_DOWN_AVG: f64 = 61.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    BottomUp,
    TopDown,
    SingleTeacher,
    None,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::BottomUp => "bottom_up",
            Strategy::TopDown => "top_down",
            Strategy::SingleTeacher => "single_teacher",
            Strategy::None => "none",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully resolved run: strategy, teacher ladder (weakest → strongest),
/// the student config, and the step settings.
#[derive(Debug, Clone)]
pub struct CascadePlan {
    pub strategy: Strategy,
    pub ladder: Vec<Checkpoint>,
    pub student: ModelConfig,
    pub kd: LlavaKdConfig,
    /// Per-stage overrides of the step settings (stage index → config).
    pub stage_overrides: BTreeMap<u32, LlavaKdConfig>,
    /// Used by `Strategy::None` (direct training).
    pub tinyllava: TinyLlavaConfig,
    pub encoder: EncoderProxyConfig,
}

impl CascadePlan {
    pub fn validate(&self) -> Result<()> {
        self.student.validate()?;
        match self.strategy {
            Strategy::None => {
                if !self.ladder.is_empty() {
                    return Err(Error::InvalidPlan(
                        "strategy `none` takes no teacher ladder".into(),
                    ));
                }
                return Ok(());
            }
            Strategy::TopDown => {
                if self.ladder.len() < 2 {
                    return Err(Error::InvalidPlan(
                        "top_down needs a ladder of at least two teachers".into(),
                    ));
                }
            }
            // A one-rung bottom-up plan is permitted: it degenerates to
            // single-teacher distillation, and the equivalence is a
            // tested contract.
            Strategy::BottomUp | Strategy::SingleTeacher => {
                if self.ladder.is_empty() {
                    return Err(Error::InvalidPlan("ladder must not be empty".into()));
                }
            }
        }
        // Ladder must ascend strictly in capacity.
        for w in self.ladder.windows(2) {
            if w[0].param_count() >= w[1].param_count() {
                return Err(Error::InvalidPlan(format!(
                    "ladder out of capacity order: {} params precede {}",
                    w[0].param_count(),
                    w[1].param_count()
                )));
            }
        }
        for (i, t) in self.ladder.iter().enumerate() {
            let c = &t.config;
            let s = &self.student;
            if c.vocab_size != s.vocab_size
                || c.d_embed != s.d_embed
                || c.max_seq != s.max_seq
                || c.n_visual_tokens != s.n_visual_tokens
            {
                return Err(Error::InvalidPlan(format!(
                    "ladder entry {i} is incompatible with the student config"
                )));
            }
        }
        Ok(())
    }

    fn kd_for_stage(&self, stage: u32) -> &LlavaKdConfig {
        self.stage_overrides.get(&stage).unwrap_or(&self.kd)
    }
}

/// What one stage did: which teacher, which checkpoints in and out,
/// and the closing loss of each step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u32,
    pub teacher: String,
    pub teacher_hash: String,
    pub input_hash: String,
    pub output_hash: String,
    pub final_losses: Vec<(String, f64)>,
}

#[derive(Debug)]
pub struct CascadeOutput {
    pub final_model: TinyVlm,
    pub records: Vec<StageRecord>,
    /// Metrics logs keyed "stage<i>/<STEP>".
    pub step_logs: Vec<(String, Vec<MetricsRecord>)>,
}

fn describe(ckpt: &Checkpoint) -> String {
    format!(
        "{}({} params, {})",
        ckpt.config.capacity_tier.as_str(),
        ckpt.param_count(),
        ckpt.last_tag().step
    )
}

/// Build a fresh model and run its encoder proxy pretraining; every
/// strategy prepares its students (and top-down its assistants) through
/// this single path.
pub fn prepare_model(
    config: &ModelConfig,
    corpus: &Corpus,
    encoder: &EncoderProxyConfig,
) -> Result<TinyVlm> {
    let mut model = build_model(config)?;
    let enc = EncoderProxyConfig { seed: encoder.seed ^ config.seed, ..encoder.clone() };
    pretrain_encoder(&mut model, corpus, &enc)?;
    Ok(model)
}

fn run_stage(
    student: &mut TinyVlm,
    teacher: &TinyVlm,
    corpus: &Corpus,
    kd: &LlavaKdConfig,
    stage: u32,
    records: &mut Vec<StageRecord>,
    logs: &mut Vec<(String, Vec<MetricsRecord>)>,
) -> Result<()> {
    let teacher_ckpt = teacher.to_checkpoint();
    let input_hash = student.to_checkpoint().content_hash()?;
    let out = train_llavakd_stage(student, teacher, corpus, kd, stage)?;
    let mut final_losses = Vec::new();
    for run in &out.steps {
        let last = run.metrics.last().map(|m| m.loss).unwrap_or(f64::NAN);
        final_losses.push((run.kind.as_str().to_string(), last));
        logs.push((format!("stage{stage}/{}", run.kind.as_str()), run.metrics.clone()));
    }
    records.push(StageRecord {
        stage,
        teacher: describe(&teacher_ckpt),
        teacher_hash: teacher_ckpt.content_hash()?,
        input_hash,
        output_hash: out.checkpoint.content_hash()?,
        final_losses,
    });
    Ok(())
}

/// Bottom-up cascade: distill each ladder rung into the student,
/// weakest teacher first.
pub fn run_bottom_up(plan: &CascadePlan, corpus: &Corpus) -> Result<CascadeOutput> {
    plan.validate()?;
    let mut student = prepare_model(&plan.student, corpus, &plan.encoder)?;
    let mut records = Vec::new();
    let mut logs = Vec::new();
    for (i, rung) in plan.ladder.iter().enumerate() {
        let stage = (i + 1) as u32;
        let teacher = TinyVlm::from_checkpoint(rung)?;
        run_stage(
            &mut student,
            &teacher,
            corpus,
            plan.kd_for_stage(stage),
            stage,
            &mut records,
            &mut logs,
        )?;
    }
    Ok(CascadeOutput { final_model: student, records, step_logs: logs })
}

/// Top-down baseline: distill the strongest teacher down the ladder
/// (each assistant trained as a student of the rung above), then distill
/// the student exactly once from the last distilled assistant.
pub fn run_top_down(plan: &CascadePlan, corpus: &Corpus) -> Result<CascadeOutput> {
    plan.validate()?;
    let mut records = Vec::new();
    let mut logs = Vec::new();
    let mut teacher = TinyVlm::from_checkpoint(plan.ladder.last().expect("validated"))?;
    let mut stage: u32 = 1;
    // Walk the assistants from second-strongest down to weakest; each is
    // rebuilt from its own config and distilled from the current teacher.
    for rung in plan.ladder[..plan.ladder.len() - 1].iter().rev() {
        let mut assistant = prepare_model(&rung.config, corpus, &plan.encoder)?;
        run_stage(
            &mut assistant,
            &teacher,
            corpus,
            plan.kd_for_stage(stage),
            stage,
            &mut records,
            &mut logs,
        )?;
        teacher = assistant;
        stage += 1;
    }
    let mut student = prepare_model(&plan.student, corpus, &plan.encoder)?;
    run_stage(
        &mut student,
        &teacher,
        corpus,
        plan.kd_for_stage(stage),
        stage,
        &mut records,
        &mut logs,
    )?;
    Ok(CascadeOutput { final_model: student, records, step_logs: logs })
}

/// Plain distillation from the strongest ladder entry.
pub fn run_single_teacher(plan: &CascadePlan, corpus: &Corpus) -> Result<CascadeOutput> {
    plan.validate()?;
    let mut student = prepare_model(&plan.student, corpus, &plan.encoder)?;
    let mut records = Vec::new();
    let mut logs = Vec::new();
    let teacher = TinyVlm::from_checkpoint(plan.ladder.last().expect("validated"))?;
    run_stage(&mut student, &teacher, corpus, plan.kd_for_stage(1), 1, &mut records, &mut logs)?;
    Ok(CascadeOutput { final_model: student, records, step_logs: logs })
}

/// Direct training (no distillation): the student runs PT + FT.
pub fn run_direct(plan: &CascadePlan, corpus: &Corpus) -> Result<CascadeOutput> {
    plan.validate()?;
    let mut student = prepare_model(&plan.student, corpus, &plan.encoder)?;
    let out = train_tinyllava(&mut student, corpus, &plan.tinyllava)?;
    let logs = out
        .steps
        .iter()
        .map(|s| (format!("tier/{}", s.kind.as_str()), s.metrics.clone()))
        .collect();
    Ok(CascadeOutput { final_model: student, records: Vec::new(), step_logs: logs })
}

/// Dispatch a plan to its strategy.
pub fn run_plan(plan: &CascadePlan, corpus: &Corpus) -> Result<CascadeOutput> {
    match plan.strategy {
        Strategy::BottomUp => run_bottom_up(plan, corpus),
        Strategy::TopDown => run_top_down(plan, corpus),
        Strategy::SingleTeacher => run_single_teacher(plan, corpus),
        Strategy::None => run_direct(plan, corpus),
    }
}

// ── seed-replicated strategy comparison ──────────────────────────────

/// A strategy row of a comparison experiment, naming which pretrained
/// tiers form its ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub name: String,
    pub strategy: Strategy,
    #[serde(default)]
    pub ladder_tiers: Vec<CapacityTier>,
}

/// Everything a seed-replicated comparison needs. Per replicate, the
/// corpus seed and every step seed are re-derived from the replicate
/// seed, so replicas are fully independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub corpus: CorpusConfig,
    /// Student-tier backbone width; assistants and teachers scale ×2, ×4.
    pub base_hidden: usize,
    pub encoder: EncoderProxyConfig,
    pub tinyllava: TinyLlavaConfig,
    pub kd: LlavaKdConfig,
    pub plans: Vec<PlanSpec>,
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 round; decorrelates derived seeds.
    let mut z = seed.wrapping_add(salt).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn tier_salt(tier: CapacityTier) -> u64 {
    match tier {
        CapacityTier::Student => 1,
        CapacityTier::Assistant => 2,
        CapacityTier::Teacher => 3,
    }
}

fn reseed_step(cfg: &StepConfig, s: u64) -> StepConfig {
    StepConfig { seed: mix(cfg.seed, s), ..cfg.clone() }
}

fn reseed_tinyllava(cfg: &TinyLlavaConfig, s: u64) -> TinyLlavaConfig {
    TinyLlavaConfig { pt: reseed_step(&cfg.pt, s), ft: reseed_step(&cfg.ft, mix(s, 2)) }
}

fn reseed_kd(cfg: &LlavaKdConfig, s: u64) -> LlavaKdConfig {
    LlavaKdConfig {
        dpt: reseed_step(&cfg.dpt, s),
        sft: reseed_step(&cfg.sft, mix(s, 3)),
        dft: reseed_step(&cfg.dft, mix(s, 4)),
        distill_only: cfg.distill_only,
    }
}

impl ComparisonSpec {
    pub fn model_config_for(&self, tier: CapacityTier, replicate: u64) -> ModelConfig {
        ModelConfig::for_tier(
            tier,
            self.corpus.d_embed,
            self.corpus.vocab().size(),
            self.corpus.max_seq,
            self.corpus.n_visual_tokens(),
            self.base_hidden,
            mix(replicate, tier_salt(tier)),
        )
    }

    pub fn corpus_for(&self, replicate: u64) -> CorpusConfig {
        CorpusConfig { seed: mix(self.corpus.seed, replicate), ..self.corpus.clone() }
    }
}

/// Artifacts of one replicate: the corpus and the directly pretrained
/// tiers the plans draw their teachers from.
pub struct Replicate {
    pub seed: u64,
    pub corpus: Corpus,
    pub tiers: BTreeMap<CapacityTier, TinyVlm>,
}

/// Pretrain every tier any plan needs (plus the student tier, which
/// doubles as the direct baseline).
pub fn build_replicate(spec: &ComparisonSpec, seed: u64) -> Result<Replicate> {
    let corpus = build_corpus(&spec.corpus_for(seed))?;
    let mut needed: Vec<CapacityTier> = vec![CapacityTier::Student];
    for p in &spec.plans {
        needed.extend(p.ladder_tiers.iter().copied());
    }
    needed.sort();
    needed.dedup();
    let mut tiers = BTreeMap::new();
    for tier in needed {
        let cfg = spec.model_config_for(tier, seed);
        let mut model = prepare_model(&cfg, &corpus, &spec.encoder)?;
        let tl = reseed_tinyllava(&spec.tinyllava, mix(seed, 10 + tier_salt(tier)));
        train_tinyllava(&mut model, &corpus, &tl)?;
        tiers.insert(tier, model);
    }
    Ok(Replicate { seed, corpus, tiers })
}

/// Run one plan inside a replicate and return the distilled (or
/// directly trained) student.
pub fn run_plan_in_replicate(
    spec: &ComparisonSpec,
    rep: &Replicate,
    plan: &PlanSpec,
) -> Result<TinyVlm> {
    if plan.strategy == Strategy::None {
        // The direct baseline is exactly the pretrained student tier.
        return Ok(rep.tiers[&CapacityTier::Student].clone());
    }
    let ladder = plan
        .ladder_tiers
        .iter()
        .map(|t| {
            rep.tiers
                .get(t)
                .map(|m| m.to_checkpoint())
                .ok_or_else(|| Error::InvalidPlan(format!("tier {} not pretrained", t.as_str())))
        })
        .collect::<Result<Vec<_>>>()?;
    let cascade = CascadePlan {
        strategy: plan.strategy,
        ladder,
        student: spec.model_config_for(CapacityTier::Student, rep.seed),
        kd: reseed_kd(&spec.kd, mix(rep.seed, 20)),
        stage_overrides: BTreeMap::new(),
        tinyllava: reseed_tinyllava(&spec.tinyllava, mix(rep.seed, 21)),
        encoder: spec.encoder.clone(),
    };
    Ok(run_plan(&cascade, &rep.corpus)?.final_model)
}

fn evaluate_rows(rep: &Replicate, plan: &PlanSpec, model: &TinyVlm) -> Result<ResultRow> {
    let mut scores = Vec::new();
    for name in SplitName::ALL {
        scores.push(evaluate(model, rep.corpus.split(name))?);
    }
    Ok(ResultRow {
        method: plan.name.clone(),
        strategy: plan.strategy.as_str().to_string(),
        seed: rep.seed,
        scores,
    })
}

/// Seed-replicated comparison of strategies: per-seed accuracy rows for
/// every plan plus mean ± stdev aggregates, with the full-scale
/// reference averages attached when both cascade orderings are present.
pub fn compare_strategies(spec: &ComparisonSpec, seeds: &[u64]) -> Result<ResultTable> {
    if spec.plans.len() < 2 {
        return Err(Error::InvalidPlan("comparison needs at least two plans".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidPlan("comparison needs at least one seed".into()));
    }
    let per_seed: Vec<Vec<ResultRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let rep = build_replicate(spec, seed)?;
            spec.plans
                .iter()
                .map(|plan| {
                    let model = run_plan_in_replicate(spec, &rep, plan)?;
                    evaluate_rows(&rep, plan, &model)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    // Row order: plan-major, seed-minor.
    let mut rows = Vec::new();
    for p in 0..spec.plans.len() {
        for rep_rows in &per_seed {
            rows.push(rep_rows[p].clone());
        }
    }
    let split_names: Vec<String> =
        SplitName::ALL.iter().map(|s| s.as_str().to_string()).collect();
    let mut table = make_table(split_names, rows)?;
    let have = |s: Strategy| spec.plans.iter().any(|p| p.strategy == s);
    if have(Strategy::BottomUp) && have(Strategy::TopDown) {
        table.reference_full_scale =
            Some((FULL_SCALE_BOTTOM_UP_AVG, FULL_SCALE_TOP_DOWN_AVG));
    }
    Ok(table)
}
