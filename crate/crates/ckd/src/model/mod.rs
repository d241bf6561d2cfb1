//! Capacity-parameterized tiny multimodal model.
//!
//! Anatomy follows the three-part split the training steps freeze
//! against: a patch encoder over the visual positions, a two-layer GELU
//! connector lifting vision features into the backbone width, a causal
//! transformer decoder with learned absolute position embeddings, and a
//! linear vocabulary head. Text embeddings arrive pre-computed in the
//! batch (the shared tokenizer); the backbone projects them to its own
//! width.
//!
//! Forward maps a k×d embedding sequence to k×c logits per position.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, ProvenanceTag, StepTag, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::TokenBatch;
use crate::error::{Error, Result};
use crate::losses::LogitBundle;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Capacity tiers, strictly ordered by parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityTier {
    Student,
    Assistant,
    Teacher,
}

impl CapacityTier {
    pub fn as_str(&self) -> &'static str {
        match self {
            CapacityTier::Student => "student",
            CapacityTier::Assistant => "assistant",
            CapacityTier::Teacher => "teacher",
        }
    }
}

/// The four freezable parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Part {
    Encoder,
    Connector,
    Backbone,
    Head,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::Encoder, Part::Connector, Part::Backbone, Part::Head];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input embedding width d (shared across tiers).
    pub d_embed: usize,
    /// Vocabulary size c.
    pub vocab_size: usize,
    /// Maximum sequence length k.
    pub max_seq: usize,
    /// Leading visual-token count m.
    pub n_visual_tokens: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Backbone width (tier-dependent).
    pub d_hidden: usize,
    pub capacity_tier: CapacityTier,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.n_visual_tokens >= self.max_seq {
            violations.push(format!(
                "n_visual_tokens {} must be < max_seq {}",
                self.n_visual_tokens, self.max_seq
            ));
        }
        if self.vocab_size < 2 {
            violations.push(format!("vocab_size {} must be ≥ 2", self.vocab_size));
        }
        if self.n_heads == 0 || self.d_hidden % self.n_heads != 0 {
            violations.push(format!(
                "n_heads {} must divide d_hidden {}",
                self.n_heads, self.d_hidden
            ));
        }
        if self.n_layers == 0 {
            violations.push("n_layers must be ≥ 1".into());
        }
        if self.d_embed == 0 {
            violations.push("d_embed must be ≥ 1".into());
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(violations.join("; ")))
        }
    }

    /// Tier ladder with a ×2 progression in depth, width and heads.
    pub fn for_tier(
        tier: CapacityTier,
        d_embed: usize,
        vocab_size: usize,
        max_seq: usize,
        n_visual_tokens: usize,
        base_hidden: usize,
        seed: u64,
    ) -> Self {
        let factor = match tier {
            CapacityTier::Student => 1,
            CapacityTier::Assistant => 2,
            CapacityTier::Teacher => 4,
        };
        ModelConfig {
            d_embed,
            vocab_size,
            max_seq,
            n_visual_tokens,
            n_layers: factor,
            n_heads: 2 * factor,
            d_hidden: base_hidden * factor,
            capacity_tier: tier,
            seed,
        }
    }

    fn mlp_width(&self) -> usize {
        4 * self.d_hidden
    }
}

#[derive(Debug, Clone)]
struct Mlp2 {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

#[derive(Debug, Clone)]
struct Block {
    ln1_g: Tensor,
    ln1_b: Tensor,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    ln2_g: Tensor,
    ln2_b: Tensor,
    mw1: Tensor,
    mb1: Tensor,
    mw2: Tensor,
    mb2: Tensor,
}

#[derive(Debug, Clone)]
struct Backbone {
    text_w: Tensor,
    text_b: Tensor,
    pos: Tensor,
    blocks: Vec<Block>,
    lnf_g: Tensor,
    lnf_b: Tensor,
}

/// Which parts the optimizer may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub encoder: bool,
    pub connector: bool,
    pub backbone: bool,
    pub head: bool,
}

impl Trainable {
    pub const NONE: Trainable =
        Trainable { encoder: false, connector: false, backbone: false, head: false };

    pub fn of(parts: &[Part]) -> Trainable {
        let mut t = Trainable::NONE;
        for p in parts {
            match p {
                Part::Encoder => t.encoder = true,
                Part::Connector => t.connector = true,
                Part::Backbone => t.backbone = true,
                Part::Head => t.head = true,
            }
        }
        t
    }

    fn part(&self, p: Part) -> bool {
        match p {
            Part::Encoder => self.encoder,
            Part::Connector => self.connector,
            Part::Backbone => self.backbone,
            Part::Head => self.head,
        }
    }
}

/// The model: parameters plus freeze flags and training provenance.
#[derive(Debug, Clone)]
pub struct TinyVlm {
    pub config: ModelConfig,
    encoder: Mlp2,
    connector: Mlp2,
    backbone: Backbone,
    head_w: Tensor,
    head_b: Tensor,
    trainable: Trainable,
    pub encoder_pretrained: bool,
    pub history: Vec<ProvenanceTag>,
}

/// Result of a taped forward pass: the logits node plus the tape handles
/// of every trainable parameter, for the optimizer.
pub struct GraphOut {
    pub logits: Var,
    pub trainables: Vec<(String, Var)>,
}

const LN_EPS: f64 = 1e-5;
const CAUSAL_FILL: f64 = -1e30;

fn init_normal(rng: &mut ChaCha8Rng, shape: Vec<usize>, std: f64) -> Tensor {
    let normal = Normal::new(0.0, std).expect("std");
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape, data).expect("init shape")
}

/// Fan-in-scaled weight init; keeps activation variance flat through
/// the stack so tiny models train in few steps.
fn init_linear(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    init_normal(rng, vec![rows, cols], 1.0 / (rows as f64).sqrt())
}

/// Position embeddings need to be a visible fraction of each row's
/// variance or attention cannot learn positional addressing.
const POS_EMB_STD: f64 = 0.3;

fn ones(n: usize) -> Tensor {
    Tensor::new(vec![n], vec![1.0; n]).expect("ones")
}

/// Build a model with deterministic parameters from the config seed.
pub fn build_model(config: &ModelConfig) -> Result<TinyVlm> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0x4d4f44454c);
    let d = config.d_embed;
    let dh = config.d_hidden;
    let c = config.vocab_size;

    let encoder = Mlp2 {
        w1: init_linear(&mut rng, d, d),
        b1: Tensor::zeros(vec![d]),
        w2: init_linear(&mut rng, d, d),
        b2: Tensor::zeros(vec![d]),
    };
    let connector = Mlp2 {
        w1: init_linear(&mut rng, d, dh),
        b1: Tensor::zeros(vec![dh]),
        w2: init_linear(&mut rng, dh, dh),
        b2: Tensor::zeros(vec![dh]),
    };
    let blocks = (0..config.n_layers)
        .map(|_| Block {
            ln1_g: ones(dh),
            ln1_b: Tensor::zeros(vec![dh]),
            wq: init_linear(&mut rng, dh, dh),
            bq: Tensor::zeros(vec![dh]),
            wk: init_linear(&mut rng, dh, dh),
            bk: Tensor::zeros(vec![dh]),
            wv: init_linear(&mut rng, dh, dh),
            bv: Tensor::zeros(vec![dh]),
            wo: init_linear(&mut rng, dh, dh),
            bo: Tensor::zeros(vec![dh]),
            ln2_g: ones(dh),
            ln2_b: Tensor::zeros(vec![dh]),
            mw1: init_linear(&mut rng, dh, config.mlp_width()),
            mb1: Tensor::zeros(vec![config.mlp_width()]),
            mw2: init_linear(&mut rng, config.mlp_width(), dh),
            mb2: Tensor::zeros(vec![dh]),
        })
        .collect();
    let backbone = Backbone {
        text_w: init_linear(&mut rng, d, dh),
        text_b: Tensor::zeros(vec![dh]),
        pos: init_normal(&mut rng, vec![config.max_seq, dh], POS_EMB_STD),
        blocks,
        lnf_g: ones(dh),
        lnf_b: Tensor::zeros(vec![dh]),
    };
    let head_w = init_linear(&mut rng, dh, c);
    let head_b = Tensor::zeros(vec![c]);

    Ok(TinyVlm {
        config: config.clone(),
        encoder,
        connector,
        backbone,
        head_w,
        head_b,
        trainable: Trainable::NONE,
        encoder_pretrained: false,
        history: vec![ProvenanceTag { step: StepTag::Init, stage: 0 }],
    })
}

impl TinyVlm {
    /// Restrict optimizer updates to exactly these parts.
    pub fn set_trainable(&mut self, parts: &[Part]) {
        self.trainable = Trainable::of(parts);
    }

    pub fn trainable_parts(&self) -> Vec<Part> {
        Part::ALL.iter().copied().filter(|&p| self.trainable.part(p)).collect()
    }

    pub fn last_tag(&self) -> &ProvenanceTag {
        self.history.last().expect("history never empty")
    }

    pub fn push_tag(&mut self, tag: ProvenanceTag) {
        self.history.push(tag);
    }

    /// Named parameters in a fixed order (checkpoint and optimizer order).
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        collect_params(
            &self.encoder,
            &self.connector,
            &self.backbone,
            &self.head_w,
            &self.head_b,
            &mut |name, t| out.push((name, t)),
        );
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let TinyVlm { encoder, connector, backbone, head_w, head_b, .. } = self;
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("encoder.w1".into(), &mut encoder.w1),
            ("encoder.b1".into(), &mut encoder.b1),
            ("encoder.w2".into(), &mut encoder.w2),
            ("encoder.b2".into(), &mut encoder.b2),
            ("connector.w1".into(), &mut connector.w1),
            ("connector.b1".into(), &mut connector.b1),
            ("connector.w2".into(), &mut connector.w2),
            ("connector.b2".into(), &mut connector.b2),
            ("backbone.text.w".into(), &mut backbone.text_w),
            ("backbone.text.b".into(), &mut backbone.text_b),
            ("backbone.pos".into(), &mut backbone.pos),
        ];
        for (i, blk) in backbone.blocks.iter_mut().enumerate() {
            out.push((format!("backbone.block{i}.ln1.g"), &mut blk.ln1_g));
            out.push((format!("backbone.block{i}.ln1.b"), &mut blk.ln1_b));
            out.push((format!("backbone.block{i}.attn.wq"), &mut blk.wq));
            out.push((format!("backbone.block{i}.attn.bq"), &mut blk.bq));
            out.push((format!("backbone.block{i}.attn.wk"), &mut blk.wk));
            out.push((format!("backbone.block{i}.attn.bk"), &mut blk.bk));
            out.push((format!("backbone.block{i}.attn.wv"), &mut blk.wv));
            out.push((format!("backbone.block{i}.attn.bv"), &mut blk.bv));
            out.push((format!("backbone.block{i}.attn.wo"), &mut blk.wo));
            out.push((format!("backbone.block{i}.attn.bo"), &mut blk.bo));
            out.push((format!("backbone.block{i}.ln2.g"), &mut blk.ln2_g));
            out.push((format!("backbone.block{i}.ln2.b"), &mut blk.ln2_b));
            out.push((format!("backbone.block{i}.mlp.w1"), &mut blk.mw1));
            out.push((format!("backbone.block{i}.mlp.b1"), &mut blk.mb1));
            out.push((format!("backbone.block{i}.mlp.w2"), &mut blk.mw2));
            out.push((format!("backbone.block{i}.mlp.b2"), &mut blk.mb2));
        }
        out.push(("backbone.lnf.g".into(), &mut backbone.lnf_g));
        out.push(("backbone.lnf.b".into(), &mut backbone.lnf_b));
        out.push(("head.w".into(), head_w));
        out.push(("head.b".into(), head_b));
        out
    }

    pub fn part_of(name: &str) -> Part {
        if name.starts_with("encoder.") {
            Part::Encoder
        } else if name.starts_with("connector.") {
            Part::Connector
        } else if name.starts_with("backbone.") {
            Part::Backbone
        } else {
            Part::Head
        }
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Forward pass on a tape. Parameters of trainable parts enter as
    /// gradient leaves; everything else is constant.
    pub fn forward_graph(&self, tape: &mut Tape, batch: &TokenBatch) -> Result<GraphOut> {
        let k = batch.k();
        let m = batch.m;
        if k > self.config.max_seq {
            return Err(Error::ShapeMismatch {
                op: "forward",
                detail: format!("sequence length {k} exceeds max_seq {}", self.config.max_seq),
            });
        }
        if batch.d() != self.config.d_embed {
            return Err(Error::ShapeMismatch {
                op: "forward",
                detail: format!("embedding width {} vs model d_embed {}", batch.d(), self.config.d_embed),
            });
        }
        if m != self.config.n_visual_tokens || m >= k {
            return Err(Error::ShapeMismatch {
                op: "forward",
                detail: format!("batch m {m} vs model n_visual_tokens {} (k = {k})", self.config.n_visual_tokens),
            });
        }

        let mut trainables: Vec<(String, Var)> = Vec::new();
        let mut bind = |tape: &mut Tape, name: &str, t: &Tensor| -> Var {
            if self.trainable.part(TinyVlm::part_of(name)) {
                let mut leaf = t.clone();
                leaf.requires_grad = true;
                let v = tape.leaf(&leaf);
                trainables.push((name.to_string(), v));
                v
            } else {
                tape.constant(t)
            }
        };

        let x = tape.constant(&batch.embeddings);
        let visual = tape.slice_rows(x, 0, m)?;
        let text = tape.slice_rows(x, m, k)?;

        // Patch encoder (visual rows only).
        let enc = {
            let w1 = bind(tape, "encoder.w1", &self.encoder.w1);
            let b1 = bind(tape, "encoder.b1", &self.encoder.b1);
            let w2 = bind(tape, "encoder.w2", &self.encoder.w2);
            let b2 = bind(tape, "encoder.b2", &self.encoder.b2);
            let h = tape.matmul(visual, w1)?;
            let h = tape.add_row(h, b1)?;
            let h = tape.gelu(h);
            let h = tape.matmul(h, w2)?;
            tape.add_row(h, b2)?
        };

        // Vision-language connector into backbone width.
        let vis_h = {
            let w1 = bind(tape, "connector.w1", &self.connector.w1);
            let b1 = bind(tape, "connector.b1", &self.connector.b1);
            let w2 = bind(tape, "connector.w2", &self.connector.w2);
            let b2 = bind(tape, "connector.b2", &self.connector.b2);
            let h = tape.matmul(enc, w1)?;
            let h = tape.add_row(h, b1)?;
            let h = tape.gelu(h);
            let h = tape.matmul(h, w2)?;
            tape.add_row(h, b2)?
        };

        // Text projection into backbone width.
        let text_h = {
            let w = bind(tape, "backbone.text.w", &self.backbone.text_w);
            let b = bind(tape, "backbone.text.b", &self.backbone.text_b);
            let h = tape.matmul(text, w)?;
            tape.add_row(h, b)?
        };

        let mut h = tape.concat_rows(vis_h, text_h)?;
        let pos = bind(tape, "backbone.pos", &self.backbone.pos);
        let pos_k = tape.slice_rows(pos, 0, k)?;
        h = tape.add(h, pos_k)?;

        // Causal mask shared by all heads and layers.
        let mut causal = vec![false; k * k];
        for i in 0..k {
            for j in i + 1..k {
                causal[i * k + j] = true;
            }
        }
        let dh = self.config.d_hidden;
        let d_head = dh / self.config.n_heads;
        let scale = 1.0 / (d_head as f64).sqrt();

        for (bi, blk) in self.backbone.blocks.iter().enumerate() {
            let p = |s: &str| format!("backbone.block{bi}.{s}");
            // Attention sublayer (pre-norm).
            let ln1_g = bind(tape, &p("ln1.g"), &blk.ln1_g);
            let ln1_b = bind(tape, &p("ln1.b"), &blk.ln1_b);
            let normed = tape.layer_norm(h, ln1_g, ln1_b, LN_EPS)?;
            let wq = bind(tape, &p("attn.wq"), &blk.wq);
            let bq = bind(tape, &p("attn.bq"), &blk.bq);
            let wk = bind(tape, &p("attn.wk"), &blk.wk);
            let bk = bind(tape, &p("attn.bk"), &blk.bk);
            let wv = bind(tape, &p("attn.wv"), &blk.wv);
            let bv = bind(tape, &p("attn.bv"), &blk.bv);
            let q = tape.matmul(normed, wq)?;
            let q = tape.add_row(q, bq)?;
            let kk = tape.matmul(normed, wk)?;
            let kk = tape.add_row(kk, bk)?;
            let v = tape.matmul(normed, wv)?;
            let v = tape.add_row(v, bv)?;

            let mut ctx: Option<Var> = None;
            for head in 0..self.config.n_heads {
                let (lo, hi) = (head * d_head, (head + 1) * d_head);
                let qh = tape.slice_cols(q, lo, hi)?;
                let kh = tape.slice_cols(kk, lo, hi)?;
                let vh = tape.slice_cols(v, lo, hi)?;
                let kt = tape.transpose(kh)?;
                let scores = tape.matmul(qh, kt)?;
                let scores = tape.scale(scores, scale);
                let scores = tape.mask_fill(scores, &causal, CAUSAL_FILL)?;
                let att = tape.softmax(scores)?;
                let out = tape.matmul(att, vh)?;
                ctx = Some(match ctx {
                    Some(prev) => tape.concat_cols(prev, out)?,
                    None => out,
                });
            }
            let ctx = ctx.expect("n_heads ≥ 1");
            let wo = bind(tape, &p("attn.wo"), &blk.wo);
            let bo = bind(tape, &p("attn.bo"), &blk.bo);
            let att_out = tape.matmul(ctx, wo)?;
            let att_out = tape.add_row(att_out, bo)?;
            h = tape.add(h, att_out)?;

            // MLP sublayer (pre-norm).
            let ln2_g = bind(tape, &p("ln2.g"), &blk.ln2_g);
            let ln2_b = bind(tape, &p("ln2.b"), &blk.ln2_b);
            let normed = tape.layer_norm(h, ln2_g, ln2_b, LN_EPS)?;
            let mw1 = bind(tape, &p("mlp.w1"), &blk.mw1);
            let mb1 = bind(tape, &p("mlp.b1"), &blk.mb1);
            let mw2 = bind(tape, &p("mlp.w2"), &blk.mw2);
            let mb2 = bind(tape, &p("mlp.b2"), &blk.mb2);
            let f = tape.matmul(normed, mw1)?;
            let f = tape.add_row(f, mb1)?;
            let f = tape.gelu(f);
            let f = tape.matmul(f, mw2)?;
            let f = tape.add_row(f, mb2)?;
            h = tape.add(h, f)?;
        }

        let lnf_g = bind(tape, "backbone.lnf.g", &self.backbone.lnf_g);
        let lnf_b = bind(tape, "backbone.lnf.b", &self.backbone.lnf_b);
        let h = tape.layer_norm(h, lnf_g, lnf_b, LN_EPS)?;
        let head_w = bind(tape, "head.w", &self.head_w);
        let head_b = bind(tape, "head.b", &self.head_b);
        let logits = tape.matmul(h, head_w)?;
        let logits = tape.add_row(logits, head_b)?;
        Ok(GraphOut { logits, trainables })
    }

    /// Inference convenience: forward on an internal tape, returning the
    /// bundle the losses consume. Never mutates the model.
    pub fn infer(&self, batch: &TokenBatch) -> Result<LogitBundle> {
        let mut tape = Tape::new();
        let out = self.forward_graph(&mut tape, batch)?;
        Ok(LogitBundle {
            logits: tape.to_tensor(out.logits),
            m: batch.m,
            relevance_mask: batch.relevance_mask.clone(),
            target_classes: batch.target_classes.clone(),
        })
    }

    /// Encoder forward alone (for the reconstruction proxy task).
    pub fn encoder_graph(&self, tape: &mut Tape, patches: Var, train: bool) -> Result<(Var, Vec<(String, Var)>)> {
        let mut trainables = Vec::new();
        let mut bind = |tape: &mut Tape, name: &str, t: &Tensor| -> Var {
            if train {
                let mut leaf = t.clone();
                leaf.requires_grad = true;
                let v = tape.leaf(&leaf);
                trainables.push((name.to_string(), v));
                v
            } else {
                tape.constant(t)
            }
        };
        let w1 = bind(tape, "encoder.w1", &self.encoder.w1);
        let b1 = bind(tape, "encoder.b1", &self.encoder.b1);
        let w2 = bind(tape, "encoder.w2", &self.encoder.w2);
        let b2 = bind(tape, "encoder.b2", &self.encoder.b2);
        let h = tape.matmul(patches, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.gelu(h);
        let h = tape.matmul(h, w2)?;
        let out = tape.add_row(h, b2)?;
        Ok((out, trainables))
    }
}

fn collect_params<'a>(
    encoder: &'a Mlp2,
    connector: &'a Mlp2,
    backbone: &'a Backbone,
    head_w: &'a Tensor,
    head_b: &'a Tensor,
    push: &mut dyn FnMut(String, &'a Tensor),
) {
    push("encoder.w1".into(), &encoder.w1);
    push("encoder.b1".into(), &encoder.b1);
    push("encoder.w2".into(), &encoder.w2);
    push("encoder.b2".into(), &encoder.b2);
    push("connector.w1".into(), &connector.w1);
    push("connector.b1".into(), &connector.b1);
    push("connector.w2".into(), &connector.w2);
    push("connector.b2".into(), &connector.b2);
    push("backbone.text.w".into(), &backbone.text_w);
    push("backbone.text.b".into(), &backbone.text_b);
    push("backbone.pos".into(), &backbone.pos);
    for (i, blk) in backbone.blocks.iter().enumerate() {
        push(format!("backbone.block{i}.ln1.g"), &blk.ln1_g);
        push(format!("backbone.block{i}.ln1.b"), &blk.ln1_b);
        push(format!("backbone.block{i}.attn.wq"), &blk.wq);
        push(format!("backbone.block{i}.attn.bq"), &blk.bq);
        push(format!("backbone.block{i}.attn.wk"), &blk.wk);
        push(format!("backbone.block{i}.attn.bk"), &blk.bk);
        push(format!("backbone.block{i}.attn.wv"), &blk.wv);
        push(format!("backbone.block{i}.attn.bv"), &blk.bv);
        push(format!("backbone.block{i}.attn.wo"), &blk.wo);
        push(format!("backbone.block{i}.attn.bo"), &blk.bo);
        push(format!("backbone.block{i}.ln2.g"), &blk.ln2_g);
        push(format!("backbone.block{i}.ln2.b"), &blk.ln2_b);
        push(format!("backbone.block{i}.mlp.w1"), &blk.mw1);
        push(format!("backbone.block{i}.mlp.b1"), &blk.mb1);
        push(format!("backbone.block{i}.mlp.w2"), &blk.mw2);
        push(format!("backbone.block{i}.mlp.b2"), &blk.mb2);
    }
    push("backbone.lnf.g".into(), &backbone.lnf_g);
    push("backbone.lnf.b".into(), &backbone.lnf_b);
    push("head.w".into(), head_w);
    push("head.b".into(), head_b);
}
