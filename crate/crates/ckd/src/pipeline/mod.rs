//! The five training steps and their compositions.
//!
//! PT aligns the connector on caption pairs; FT finetunes connector and
//! backbone on instruction pairs; DPT/DFT are their distillation
//! counterparts against a frozen teacher; SFT is FT inside a
//! distillation stage. The freeze schedule is fixed per step: PT and DPT
//! touch the connector only, FT/SFT/DFT touch connector, backbone and
//! vocabulary head, and the encoder is never trained after its
//! reconstruction pretraining.

mod optim;
mod schedule;

pub use optim::{clip_global_norm, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use schedule::warmup_cosine;

use crate::data::{rng_for, render_scene, Corpus, TokenBatch};
use crate::error::{Error, Result};
use crate::losses::{
    autoregressive_loss_graph, dft_loss_graph, DftBreakdown, LogitBundle, LossInputs, LossWeights,
};
use crate::model::{Checkpoint, Part, ProvenanceTag, StepTag, TinyVlm};
use crate::autodiff::{Tape, Tensor};
use rand::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const STREAM_TRAIN: u64 = 0x545249;
const STREAM_ENCODER: u64 = 0x454e43;

/// The five pipeline steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StepKind {
    Pt,
    Ft,
    Dpt,
    Sft,
    Dft,
}

/// Which corpus subset a step trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetId {
    /// Caption pairs.
    D1,
    /// Instruction pairs.
    D2,
}

impl StepKind {
    pub fn trainable_parts(&self) -> &'static [Part] {
        match self {
            StepKind::Pt | StepKind::Dpt => &[Part::Connector],
            // The head is the backbone's vocabulary projection; it
            // trains whenever the backbone does.
            StepKind::Ft | StepKind::Sft | StepKind::Dft => {
                &[Part::Connector, Part::Backbone, Part::Head]
            }
        }
    }

    pub fn dataset(&self) -> DatasetId {
        match self {
            StepKind::Pt | StepKind::Dpt => DatasetId::D1,
            StepKind::Ft | StepKind::Sft | StepKind::Dft => DatasetId::D2,
        }
    }

    pub fn uses_teacher(&self) -> bool {
        matches!(self, StepKind::Dpt | StepKind::Dft)
    }

    pub fn tag(&self) -> StepTag {
        match self {
            StepKind::Pt => StepTag::Pt,
            StepKind::Ft => StepTag::Ft,
            StepKind::Dpt => StepTag::Dpt,
            StepKind::Sft => StepTag::Sft,
            StepKind::Dft => StepTag::Dft,
        }
    }

    pub fn as_str(&self) -> &'static str {
        self.tag().as_str()
    }
}

/// Everything one training step needs besides the models and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub kind: StepKind,
    pub peak_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_ratio: f64,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    pub seed: u64,
}

fn default_clip_norm() -> f64 {
    1.0
}

impl StepConfig {
    /// Desk-scale defaults. Alignment steps keep the reference peak of
    /// 1e-3; the finetuning steps run at 3e-4 because the backbone here
    /// starts untrained and the corpora are four orders of magnitude
    /// smaller than the reference setting's.
    pub fn defaults_for(kind: StepKind, seed: u64) -> StepConfig {
        let (peak_lr, batch_size) = match kind {
            StepKind::Pt | StepKind::Dpt => (1e-3, 32),
            StepKind::Ft | StepKind::Sft | StepKind::Dft => (3e-4, 16),
        };
        StepConfig {
            kind,
            peak_lr,
            batch_size,
            epochs: 1,
            warmup_ratio: 0.03,
            weights: LossWeights::default(),
            weight_decay: 0.0,
            clip_norm: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "warmup_ratio must lie in (0,1), got {}",
                self.warmup_ratio
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and epochs must be positive".into()));
        }
        if !(self.peak_lr > 0.0) {
            return Err(Error::InvalidConfig(format!("peak_lr must be positive, got {}", self.peak_lr)));
        }
        Ok(())
    }
}

/// Learning rate for a step of a configured run.
pub fn lr_at(step: usize, total_steps: usize, cfg: &StepConfig) -> Result<f64> {
    warmup_cosine(step, total_steps, cfg.peak_lr, cfg.warmup_ratio)
}

/// One line of the training log. Deterministic for a fixed
/// (config, seed); wall-clock timing lives in run manifests instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub rg: f64,
    pub td: f64,
    pub vd: f64,
    pub vc: f64,
}

/// Checkpoint plus the metrics log of one step.
#[derive(Debug)]
pub struct StepOutput {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRecord>,
}

fn check_model_compat(student: &TinyVlm, teacher: &TinyVlm) -> Result<()> {
    let (s, t) = (&student.config, &teacher.config);
    if s.vocab_size != t.vocab_size
        || s.d_embed != t.d_embed
        || s.max_seq != t.max_seq
        || s.n_visual_tokens != t.n_visual_tokens
    {
        return Err(Error::IncompatibleModels(format!(
            "student (c={}, d={}, k={}, m={}) vs teacher (c={}, d={}, k={}, m={})",
            s.vocab_size,
            s.d_embed,
            s.max_seq,
            s.n_visual_tokens,
            t.vocab_size,
            t.d_embed,
            t.max_seq,
            t.n_visual_tokens
        )));
    }
    Ok(())
}

/// Step-order state machine: FT follows PT; SFT follows DPT of the same
/// stage; DFT follows SFT (or DPT when supervised finetuning is skipped)
/// of the same stage.
fn check_step_order(model: &TinyVlm, kind: StepKind, stage: u32) -> Result<()> {
    if !model.encoder_pretrained {
        return Err(Error::StepOrder(format!(
            "{} requires the encoder reconstruction pretraining to have run",
            kind.as_str()
        )));
    }
    let last = model.last_tag();
    let ok = match kind {
        StepKind::Pt | StepKind::Dpt => true,
        StepKind::Ft => last.step == StepTag::Pt,
        StepKind::Sft => last.step == StepTag::Dpt && last.stage == stage,
        StepKind::Dft => {
            (last.step == StepTag::Sft || last.step == StepTag::Dpt) && last.stage == stage
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::StepOrder(format!(
            "{} at stage {stage} cannot follow {} (stage {})",
            kind.as_str(),
            last.step,
            last.stage
        )))
    }
}

/// Run one training step, mutating `model` and returning its checkpoint
/// and metrics log. The teacher, when present, is read-only.
pub fn run_step(
    model: &mut TinyVlm,
    teacher: Option<&TinyVlm>,
    corpus: &Corpus,
    cfg: &StepConfig,
    stage: u32,
) -> Result<StepOutput> {
    cfg.validate()?;
    let kind = cfg.kind;
    match (kind.uses_teacher(), teacher) {
        (true, None) => return Err(Error::MissingTeacher(kind.as_str().into())),
        (false, Some(_)) => {
            return Err(Error::InvalidArgument {
                op: "run_step",
                detail: format!("{} does not take a teacher", kind.as_str()),
            })
        }
        _ => {}
    }
    if let Some(t) = teacher {
        check_model_compat(model, t)?;
    }
    check_step_order(model, kind, stage)?;
    model.set_trainable(kind.trainable_parts());

    let data: &[TokenBatch] = match kind.dataset() {
        DatasetId::D1 => &corpus.captions,
        DatasetId::D2 => &corpus.instructions,
    };
    if data.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "corpus subset for {} is empty",
            kind.as_str()
        )));
    }

    let n = data.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut rng = rng_for(cfg.seed, STREAM_TRAIN ^ ((stage as u64) << 8));
    let mut optimizer = OptimizerState::new(cfg.weight_decay);
    let mut metrics = Vec::with_capacity(total_steps);
    // The teacher is fixed for the whole step, so its per-sample logits
    // are computed once and reused across epochs.
    let mut teacher_cache: Vec<Option<LogitBundle>> = vec![None; n];
    let mut indices: Vec<usize> = (0..n).collect();
    let mut step_no: u64 = 0;

    for _epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            step_no += 1;
            let mut tape = Tape::new();
            let mut sample_losses = Vec::with_capacity(chunk.len());
            let mut trainable_vars: Vec<(String, crate::autodiff::Var)> = Vec::new();
            let mut term_sums = DftBreakdown { total: 0.0, rg: 0.0, td: 0.0, vd: 0.0, vc: 0.0 };

            for &i in chunk {
                let batch = &data[i];
                let out = model.forward_graph(&mut tape, batch)?;
                trainable_vars.extend(out.trainables);
                let inp = LossInputs {
                    m: batch.m,
                    mask: &batch.relevance_mask,
                    targets: &batch.target_classes,
                };
                let loss_var = if kind.uses_teacher() {
                    let t = teacher.expect("teacher checked above");
                    if teacher_cache[i].is_none() {
                        teacher_cache[i] = Some(t.infer(batch)?);
                    }
                    let graph = dft_loss_graph(
                        &mut tape,
                        teacher_cache[i].as_ref().expect("cached"),
                        out.logits,
                        &inp,
                        &cfg.weights,
                    )?;
                    let b = graph.breakdown(&tape);
                    term_sums.rg += b.rg;
                    term_sums.td += b.td;
                    term_sums.vd += b.vd;
                    term_sums.vc += b.vc;
                    graph.total
                } else {
                    let v = autoregressive_loss_graph(&mut tape, out.logits, &inp, &cfg.weights)?;
                    term_sums.rg += tape.item(v);
                    v
                };
                sample_losses.push(loss_var);
            }

            // Batch loss is the mean of per-sample losses.
            let mut acc = sample_losses[0];
            for &l in &sample_losses[1..] {
                acc = tape.add(acc, l)?;
            }
            let batch_loss = tape.scale(acc, 1.0 / chunk.len() as f64);
            let loss_value = tape.item(batch_loss);
            let grads_by_var = tape.backward(batch_loss)?;

            // Forward binds fresh leaves per sample; sum them by name.
            let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (name, var) in &trainable_vars {
                let Some(g) = grads_by_var.get(*var) else { continue };
                match grads.get_mut(name) {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                    None => {
                        grads.insert(name.clone(), g.to_vec());
                    }
                }
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            let lr = lr_at(step_no as usize, total_steps, cfg)?;
            let mut params = model.named_params_mut();
            optimizer.step(&mut params, &grads, lr)?;

            let inv = 1.0 / chunk.len() as f64;
            metrics.push(MetricsRecord {
                step: step_no,
                lr,
                loss: loss_value,
                rg: term_sums.rg * inv,
                td: term_sums.td * inv,
                vd: term_sums.vd * inv,
                vc: term_sums.vc * inv,
            });
        }
    }

    model.set_trainable(&[]);
    model.push_tag(ProvenanceTag { step: kind.tag(), stage });
    Ok(StepOutput { checkpoint: model.to_checkpoint(), metrics })
}

// ── encoder reconstruction pretraining ───────────────────────────────

/// Proxy-task settings for the patch encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderProxyConfig {
    pub peak_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_ratio: f64,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for EncoderProxyConfig {
    fn default() -> Self {
        EncoderProxyConfig {
            peak_lr: 1e-3,
            batch_size: 32,
            epochs: 2,
            warmup_ratio: 0.03,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

/// Train the patch encoder once on denoising reconstruction: noisy
/// patches in, clean glyph patterns out, mean squared error. Afterwards
/// the encoder is frozen for good.
pub fn pretrain_encoder(
    model: &mut TinyVlm,
    corpus: &Corpus,
    cfg: &EncoderProxyConfig,
) -> Result<Vec<MetricsRecord>> {
    if model.encoder_pretrained {
        return Err(Error::StepOrder("encoder is already pretrained".into()));
    }
    if corpus.caption_records.is_empty() {
        return Err(Error::InvalidConfig("no caption scenes for encoder pretraining".into()));
    }
    let d = model.config.d_embed;
    // Noisy inputs and clean targets from the caption scenes.
    let pairs: Vec<(Tensor, Tensor)> = corpus
        .caption_records
        .iter()
        .map(|r| {
            let noisy = render_scene(r.scene(), &corpus.vocab, d, corpus.config.patch_noise);
            let clean = render_scene(r.scene(), &corpus.vocab, d, 0.0);
            (noisy, clean)
        })
        .collect();

    let n = pairs.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut rng = rng_for(cfg.seed, STREAM_ENCODER);
    let mut optimizer = OptimizerState::new(0.0);
    let mut metrics = Vec::with_capacity(total_steps);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut step_no: u64 = 0;

    for _epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            step_no += 1;
            let mut tape = Tape::new();
            let mut trainable_vars = Vec::new();
            let mut sample_losses = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (noisy, clean) = &pairs[i];
                let x = tape.constant(noisy);
                let (out, vars) = model.encoder_graph(&mut tape, x, true)?;
                trainable_vars.extend(vars);
                let target = tape.constant(clean);
                let neg_t = tape.scale(target, -1.0);
                let diff = tape.add(out, neg_t)?;
                let sq = tape.mul(diff, diff)?;
                let sum = tape.sum(sq);
                sample_losses.push(tape.scale(sum, 1.0 / clean.numel() as f64));
            }
            let mut acc = sample_losses[0];
            for &l in &sample_losses[1..] {
                acc = tape.add(acc, l)?;
            }
            let batch_loss = tape.scale(acc, 1.0 / chunk.len() as f64);
            let loss_value = tape.item(batch_loss);
            let grads_by_var = tape.backward(batch_loss)?;
            let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (name, var) in &trainable_vars {
                let Some(g) = grads_by_var.get(*var) else { continue };
                match grads.get_mut(name) {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                    None => {
                        grads.insert(name.clone(), g.to_vec());
                    }
                }
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            let lr = warmup_cosine(step_no as usize, total_steps, cfg.peak_lr, cfg.warmup_ratio)?;
            let mut params = model.named_params_mut();
            optimizer.step(&mut params, &grads, lr)?;
            metrics.push(MetricsRecord {
                step: step_no,
                lr,
                loss: loss_value,
                rg: 0.0,
                td: 0.0,
                vd: 0.0,
                vc: 0.0,
            });
        }
    }

    model.encoder_pretrained = true;
    model.push_tag(ProvenanceTag { step: StepTag::EncoderProxy, stage: 0 });
    Ok(metrics)
}

// ── compositions ─────────────────────────────────────────────────────

/// PT + FT settings for pretraining one tier directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyLlavaConfig {
    pub pt: StepConfig,
    pub ft: StepConfig,
}

impl TinyLlavaConfig {
    pub fn defaults(seed: u64) -> Self {
        TinyLlavaConfig {
            pt: StepConfig::defaults_for(StepKind::Pt, seed),
            ft: StepConfig::defaults_for(StepKind::Ft, seed.wrapping_add(1)),
        }
    }
}

/// DPT + SFT + DFT settings for one distillation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlavaKdConfig {
    pub dpt: StepConfig,
    pub sft: StepConfig,
    pub dft: StepConfig,
    /// Skip SFT inside each stage (sensitivity mode).
    #[serde(default)]
    pub distill_only: bool,
}

impl LlavaKdConfig {
    pub fn defaults(seed: u64) -> Self {
        LlavaKdConfig {
            dpt: StepConfig::defaults_for(StepKind::Dpt, seed),
            sft: StepConfig::defaults_for(StepKind::Sft, seed.wrapping_add(1)),
            dft: StepConfig::defaults_for(StepKind::Dft, seed.wrapping_add(2)),
            distill_only: false,
        }
    }
}

/// Metrics of one named step inside a composition.
#[derive(Debug)]
pub struct StepRun {
    pub kind: StepKind,
    pub metrics: Vec<MetricsRecord>,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub checkpoint: Checkpoint,
    pub steps: Vec<StepRun>,
}

/// Direct two-step training of a tier: PT on captions, FT on
/// instructions. Requires a pretrained encoder.
pub fn train_tinyllava(
    model: &mut TinyVlm,
    corpus: &Corpus,
    cfg: &TinyLlavaConfig,
) -> Result<PipelineOutput> {
    for (name, step, want) in
        [("pt", &cfg.pt, StepKind::Pt), ("ft", &cfg.ft, StepKind::Ft)]
    {
        if step.kind != want {
            return Err(Error::InvalidConfig(format!(
                "step `{name}` must have kind {}",
                want.as_str()
            )));
        }
    }
    let pt = run_step(model, None, corpus, &cfg.pt, 0)?;
    let ft = run_step(model, None, corpus, &cfg.ft, 0)?;
    Ok(PipelineOutput {
        checkpoint: ft.checkpoint,
        steps: vec![
            StepRun { kind: StepKind::Pt, metrics: pt.metrics },
            StepRun { kind: StepKind::Ft, metrics: ft.metrics },
        ],
    })
}

/// One distillation stage against a fixed teacher: DPT, SFT (unless
/// `distill_only`), then DFT.
pub fn train_llavakd_stage(
    student: &mut TinyVlm,
    teacher: &TinyVlm,
    corpus: &Corpus,
    cfg: &LlavaKdConfig,
    stage: u32,
) -> Result<PipelineOutput> {
    for (name, step, want) in [
        ("dpt", &cfg.dpt, StepKind::Dpt),
        ("sft", &cfg.sft, StepKind::Sft),
        ("dft", &cfg.dft, StepKind::Dft),
    ] {
        if step.kind != want {
            return Err(Error::InvalidConfig(format!(
                "step `{name}` must have kind {}",
                want.as_str()
            )));
        }
    }
    check_model_compat(student, teacher)?;
    let trained = teacher
        .history
        .iter()
        .any(|t| matches!(t.step, StepTag::Ft | StepTag::Dft));
    if !trained {
        return Err(Error::InvalidPlan(
            "teacher has no FT or DFT provenance; distill only from trained models".into(),
        ));
    }

    let mut steps = Vec::new();
    let dpt = run_step(student, Some(teacher), corpus, &cfg.dpt, stage)?;
    steps.push(StepRun { kind: StepKind::Dpt, metrics: dpt.metrics });
    if !cfg.distill_only {
        let sft = run_step(student, None, corpus, &cfg.sft, stage)?;
        steps.push(StepRun { kind: StepKind::Sft, metrics: sft.metrics });
    }
    let dft = run_step(student, Some(teacher), corpus, &cfg.dft, stage)?;
    let checkpoint = dft.checkpoint;
    steps.push(StepRun { kind: StepKind::Dft, metrics: dft.metrics });
    Ok(PipelineOutput { checkpoint, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::bit_identical;
    use crate::data::{build_corpus, CorpusConfig};
    use crate::model::{build_model, CapacityTier, ModelConfig};

    fn corpus_config() -> CorpusConfig {
        CorpusConfig {
            grid: 2,
            n_colors: 3,
            n_shapes: 3,
            max_objects: 3,
            d_embed: 8,
            max_seq: 12,
            n_caption_pairs: 8,
            n_instruction_pairs: 8,
            n_eval_per_split: 2,
            patch_noise: 0.1,
            min_objects: 2,
            seed: 31,
        }
    }

    fn model_config(seed: u64) -> ModelConfig {
        let c = corpus_config();
        ModelConfig {
            d_embed: c.d_embed,
            vocab_size: c.vocab().size(),
            max_seq: c.max_seq,
            n_visual_tokens: c.n_visual_tokens(),
            n_layers: 1,
            n_heads: 2,
            d_hidden: 8,
            capacity_tier: CapacityTier::Student,
            seed,
        }
    }

    fn prepared_model(seed: u64, corpus: &Corpus) -> TinyVlm {
        let mut model = build_model(&model_config(seed)).unwrap();
        let enc = EncoderProxyConfig { epochs: 1, seed, ..EncoderProxyConfig::default() };
        pretrain_encoder(&mut model, corpus, &enc).unwrap();
        model
    }

    fn small_step(kind: StepKind, seed: u64) -> StepConfig {
        StepConfig { epochs: 1, batch_size: 4, ..StepConfig::defaults_for(kind, seed) }
    }

    #[test]
    fn steps_require_encoder_pretraining() {
        let corpus = build_corpus(&corpus_config()).unwrap();
        let mut model = build_model(&model_config(1)).unwrap();
        let err = run_step(&mut model, None, &corpus, &small_step(StepKind::Pt, 1), 0).unwrap_err();
        assert!(matches!(err, Error::StepOrder(_)));
    }

    #[test]
    fn pt_touches_connector_only() {
        let corpus = build_corpus(&corpus_config()).unwrap();
        let mut model = prepared_model(2, &corpus);
        let before = model.to_checkpoint();
        run_step(&mut model, None, &corpus, &small_step(StepKind::Pt, 2), 0).unwrap();
        let after = model.to_checkpoint();
        let mut connector_changed = false;
        for ((name, a), (_, b)) in before.params.iter().zip(&after.params) {
            if name.starts_with("connector.") {
                connector_changed |= !bit_identical(a, b);
            } else {
                assert!(bit_identical(a, b), "{name} changed in PT");
            }
        }
        assert!(connector_changed);
    }

    #[test]
    fn ft_keeps_encoder_frozen_and_trains_head_only_when_selected() {
        let corpus = build_corpus(&corpus_config()).unwrap();
        let mut model = prepared_model(3, &corpus);
        run_step(&mut model, None, &corpus, &small_step(StepKind::Pt, 3), 0).unwrap();
        let before = model.to_checkpoint();
        run_step(&mut model, None, &corpus, &small_step(StepKind::Ft, 3), 0).unwrap();
        let after = model.to_checkpoint();
        for ((name, a), (_, b)) in before.params.iter().zip(&after.params) {
            if name.starts_with("encoder.") {
                assert!(bit_identical(a, b), "{name} changed in FT");
            }
        }
    }

    #[test]
    fn step_order_enforced() {
        let corpus = build_corpus(&corpus_config()).unwrap();
        let teacher = {
            let mut t = prepared_model(40, &corpus);
            train_tinyllava(&mut t, &corpus, &TinyLlavaConfig {
                pt: small_step(StepKind::Pt, 40),
                ft: small_step(StepKind::Ft, 40),
            })
            .unwrap();
            t
        };
        // DFT directly after encoder pretraining must fail.
        let mut model = prepared_model(4, &corpus);
        let err =
            run_step(&mut model, Some(&teacher), &corpus, &small_step(StepKind::Dft, 4), 0).unwrap_err();
        assert!(matches!(err, Error::StepOrder(_)), "{err}");
        // FT before PT must fail.
        let err = run_step(&mut model, None, &corpus, &small_step(StepKind::Ft, 4), 0).unwrap_err();
        assert!(matches!(err, Error::StepOrder(_)));
    }

    #[test]
    fn distillation_requires_teacher() {
        let corpus = build_corpus(&corpus_config()).unwrap();
        let mut model = prepared_model(5, &corpus);
        let err = run_step(&mut model, None, &corpus, &small_step(StepKind::Dpt, 5), 0).unwrap_err();
        assert!(matches!(err, Error::MissingTeacher(_)));
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = build_corpus(&corpus_config()).unwrap();
        let run = || {
            let mut model = prepared_model(6, &corpus);
            let out = run_step(&mut model, None, &corpus, &small_step(StepKind::Pt, 6), 0).unwrap();
            (out.checkpoint, out.metrics)
        };
        let (c1, m1) = run();
        let (c2, m2) = run();
        assert_eq!(m1, m2);
        assert_eq!(c1.to_bytes().unwrap(), c2.to_bytes().unwrap());
    }

    #[test]
    fn self_distillation_kd_terms_vanish() {
        // teacher == student parameters → KL terms are exactly zero and
        // the cosine term is ~0.
        let corpus = build_corpus(&corpus_config()).unwrap();
        let mut student = prepared_model(7, &corpus);
        train_tinyllava(&mut student, &corpus, &TinyLlavaConfig {
            pt: small_step(StepKind::Pt, 7),
            ft: small_step(StepKind::Ft, 7),
        })
        .unwrap();
        let teacher = student.clone();
        let dpt = small_step(StepKind::Dpt, 7);
        let out = run_step(&mut student, Some(&teacher), &corpus, &dpt, 1).unwrap();
        let first = &out.metrics[0];
        assert_eq!(first.td, 0.0);
        assert_eq!(first.vd, 0.0);
        assert!(first.vc.abs() < 1e-12);
    }

    #[test]
    fn overfits_a_four_sample_batch() {
        // Overfit sanity: a few hundred steps on four fixed samples
        // drive the training loss under 0.01.
        let mut cfg = corpus_config();
        cfg.n_instruction_pairs = 4;
        cfg.seed = 77;
        let corpus = build_corpus(&cfg).unwrap();
        let mut model = prepared_model(8, &corpus);
        run_step(&mut model, None, &corpus, &small_step(StepKind::Pt, 8), 0).unwrap();
        let ft = StepConfig {
            epochs: 500,
            batch_size: 4,
            peak_lr: 1e-2,
            ..StepConfig::defaults_for(StepKind::Ft, 8)
        };
        let out = run_step(&mut model, None, &corpus, &ft, 0).unwrap();
        let last = out.metrics.last().unwrap();
        assert!(last.loss < 0.01, "final loss {}", last.loss);
    }

    #[test]
    fn dft_with_zero_weights_behaves_like_ft() {
        let corpus = build_corpus(&corpus_config()).unwrap();
        let mut a = prepared_model(9, &corpus);
        train_tinyllava(&mut a, &corpus, &TinyLlavaConfig {
            pt: small_step(StepKind::Pt, 9),
            ft: small_step(StepKind::Ft, 9),
        })
        .unwrap();
        let teacher = {
            let mut t = prepared_model(41, &corpus);
            train_tinyllava(&mut t, &corpus, &TinyLlavaConfig {
                pt: small_step(StepKind::Pt, 41),
                ft: small_step(StepKind::Ft, 41),
            })
            .unwrap();
            t
        };
        let mut b = a.clone();

        // DFT with all KD weights zero...
        let mut dpt = small_step(StepKind::Dpt, 9);
        dpt.epochs = 1;
        run_step(&mut a, Some(&teacher), &corpus, &dpt, 1).unwrap();
        run_step(&mut b, Some(&teacher), &corpus, &dpt, 1).unwrap();
        let zero = LossWeights { tau1: 0.0, tau2: 0.0, tau3: 0.0, ..LossWeights::default() };
        let dft = StepConfig { weights: zero, ..small_step(StepKind::Dft, 9) };
        let out_a = run_step(&mut a, Some(&teacher), &corpus, &dft, 1).unwrap();
        // ...must produce the same loss curve as the plain
        // autoregressive objective over the same data order.
        let sft_like = StepConfig { kind: StepKind::Sft, ..dft.clone() };
        let out_b = run_step(&mut b, None, &corpus, &sft_like, 1).unwrap();
        let la: Vec<f64> = out_a.metrics.iter().map(|m| m.loss).collect();
        let lb: Vec<f64> = out_b.metrics.iter().map(|m| m.loss).collect();
        assert_eq!(la.len(), lb.len());
        for (x, y) in la.iter().zip(&lb) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn llavakd_stage_runs_all_three_steps() {
        let corpus = build_corpus(&corpus_config()).unwrap();
        let mut teacher = prepared_model(42, &corpus);
        train_tinyllava(&mut teacher, &corpus, &TinyLlavaConfig {
            pt: small_step(StepKind::Pt, 42),
            ft: small_step(StepKind::Ft, 42),
        })
        .unwrap();
        let mut student = prepared_model(10, &corpus);
        let cfg = LlavaKdConfig {
            dpt: small_step(StepKind::Dpt, 10),
            sft: small_step(StepKind::Sft, 10),
            dft: small_step(StepKind::Dft, 10),
            distill_only: false,
        };
        let out = train_llavakd_stage(&mut student, &teacher, &corpus, &cfg, 1).unwrap();
        let kinds: Vec<StepKind> = out.steps.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, vec![StepKind::Dpt, StepKind::Sft, StepKind::Dft]);
        assert_eq!(student.last_tag().step, StepTag::Dft);
        assert_eq!(student.last_tag().stage, 1);
    }

    #[test]
    fn untrained_teacher_rejected() {
        let corpus = build_corpus(&corpus_config()).unwrap();
        let teacher = prepared_model(43, &corpus);
        let mut student = prepared_model(11, &corpus);
        let cfg = LlavaKdConfig {
            dpt: small_step(StepKind::Dpt, 11),
            sft: small_step(StepKind::Sft, 11),
            dft: small_step(StepKind::Dft, 11),
            distill_only: false,
        };
        let err = train_llavakd_stage(&mut student, &teacher, &corpus, &cfg, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidPlan(_)));
    }
}
