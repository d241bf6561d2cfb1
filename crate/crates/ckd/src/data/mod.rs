//! Deterministic synthetic multimodal corpora.
//!
//! Scenes are grids of colored shapes. Each scene renders to one patch
//! vector per cell (the visual tokens) and yields either a caption that
//! enumerates its objects in raster order, or a single-token-answer
//! question. Because every answer is computable from the scene spec,
//! evaluation accuracy has exact ground truth.
//!
//! All generation is a pure function of [`CorpusConfig`]; train and
//! eval splits are disjoint by construction (scene signatures are
//! partitioned before any pair is generated).

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};

/// Fixed stream ids for the per-purpose RNGs derived from a corpus seed.
mod stream {
    pub const SCENES: u64 = 1;
    pub const INSTRUCTIONS: u64 = 2;
    pub const EVAL: u64 = 3;
}

/// Seeds for the token-pattern tables; constants so every corpus and
/// every model share one embedding geometry for a given vocabulary.
const SHAPE_PATTERN_SEED: u64 = 0x5348_4150;
const COLOR_PATTERN_SEED: u64 = 0x434f_4c52;
const EMBED_TABLE_SEED: u64 = 0x454d_4244;

pub fn rng_for(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

// ── vocabulary ───────────────────────────────────────────────────────

/// Token id layout for the synthetic language. Shared by every model in
/// an experiment ("same tokenizer").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub grid: usize,
    pub n_colors: usize,
    pub n_shapes: usize,
    pub max_objects: usize,
}

pub const PAD: u32 = 0;
pub const EOS: u32 = 1;
pub const IMG: u32 = 2;

impl Vocab {
    pub fn color(&self, i: usize) -> u32 {
        debug_assert!(i < self.n_colors);
        3 + i as u32
    }

    pub fn shape(&self, i: usize) -> u32 {
        debug_assert!(i < self.n_shapes);
        (3 + self.n_colors + i) as u32
    }

    pub fn digit(&self, n: usize) -> u32 {
        debug_assert!(n <= self.max_objects);
        (3 + self.n_colors + self.n_shapes + n) as u32
    }

    pub fn q_color(&self) -> u32 {
        (3 + self.n_colors + self.n_shapes + self.max_objects + 1) as u32
    }

    pub fn q_count(&self) -> u32 {
        self.q_color() + 1
    }

    pub fn q_shape(&self) -> u32 {
        self.q_color() + 2
    }

    pub fn row(&self, r: usize) -> u32 {
        debug_assert!(r < self.grid);
        self.q_color() + 3 + r as u32
    }

    pub fn col(&self, c: usize) -> u32 {
        debug_assert!(c < self.grid);
        self.q_color() + 3 + (self.grid + c) as u32
    }

    pub fn size(&self) -> usize {
        self.q_color() as usize + 3 + 2 * self.grid
    }

    /// Human-readable token name for reports and debugging.
    pub fn name(&self, id: u32) -> String {
        let colors = ["red", "green", "blue", "yellow", "cyan", "magenta", "white", "black"];
        let shapes = ["circle", "square", "triangle", "cross", "star", "ring", "wedge", "dot"];
        match id {
            PAD => "<pad>".into(),
            EOS => "<eos>".into(),
            IMG => "<img>".into(),
            _ => {
                let i = id as usize;
                let c0 = 3;
                let s0 = c0 + self.n_colors;
                let d0 = s0 + self.n_shapes;
                let q0 = d0 + self.max_objects + 1;
                let r0 = q0 + 3;
                let cc0 = r0 + self.grid;
                if i < s0 {
                    colors.get(i - c0).copied().unwrap_or("color?").into()
                } else if i < d0 {
                    shapes.get(i - s0).copied().unwrap_or("shape?").into()
                } else if i < q0 {
                    format!("{}", i - d0)
                } else if i < r0 {
                    ["color-of?", "count-of?", "shape-at?"][i - q0].into()
                } else if i < cc0 {
                    format!("row{}", i - r0)
                } else if i < cc0 + self.grid {
                    format!("col{}", i - cc0)
                } else {
                    format!("<{id}>")
                }
            }
        }
    }
}

// ── scenes ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: u8,
    pub color: u8,
    pub cell: (u8, u8),
}

/// A grid scene: objects at distinct cells, plus the seed that drives
/// its patch noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub grid: usize,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
}

impl SceneSpec {
    /// Stable 64-bit signature of the visible scene (grid + objects,
    /// not the noise seed). Split hygiene partitions on this.
    pub fn signature(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.grid as u64).to_le_bytes());
        for o in &self.objects {
            h.update([o.shape, o.color, o.cell.0, o.cell.1]);
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 length"))
    }

    pub fn object_at(&self, cell: (u8, u8)) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.cell == cell)
    }

    pub fn count_color(&self, color: u8) -> usize {
        self.objects.iter().filter(|o| o.color == color).count()
    }

    /// Shapes occurring exactly once, in raster order of their object.
    pub fn unique_shapes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for o in &self.objects {
            if self.objects.iter().filter(|p| p.shape == o.shape).count() == 1 {
                out.push(o.shape);
            }
        }
        out
    }
}

/// Deterministic random scene with `min_objects..=max_objects` objects.
pub fn gen_scene(seed: u64, vocab: &Vocab, min_objects: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = vocab.grid;
    let n_obj = rng.random_range(min_objects.max(1)..=vocab.max_objects);
    // Partial Fisher-Yates over cells for distinct placements.
    let mut cells: Vec<usize> = (0..g * g).collect();
    for i in 0..n_obj {
        let j = rng.random_range(i..cells.len());
        cells.swap(i, j);
    }
    let mut objects: Vec<SceneObject> = cells[..n_obj]
        .iter()
        .map(|&c| SceneObject {
            shape: rng.random_range(0..vocab.n_shapes) as u8,
            color: rng.random_range(0..vocab.n_colors) as u8,
            cell: ((c / g) as u8, (c % g) as u8),
        })
        .collect();
    objects.sort_by_key(|o| o.cell);
    SceneSpec { grid: g, objects, seed }
}

// ── rendering and embedding ──────────────────────────────────────────

/// ±1 glyph patterns, one row per kind.
fn pattern_table(kinds: usize, width: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..kinds)
        .map(|_| (0..width).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect()
}

/// Render a scene to its m = g² patch vectors: shape glyph in the first
/// half of each patch, color glyph in the second, plus scene noise.
/// Empty cells are noise around zero.
pub fn render_scene(scene: &SceneSpec, vocab: &Vocab, d: usize, noise_std: f64) -> Tensor {
    debug_assert!(d >= 2 && d % 2 == 0);
    let half = d / 2;
    let shapes = pattern_table(vocab.n_shapes, half, SHAPE_PATTERN_SEED);
    let colors = pattern_table(vocab.n_colors, half, COLOR_PATTERN_SEED);
    let g = scene.grid;
    let mut data = vec![0.0; g * g * d];
    for o in &scene.objects {
        let base = (o.cell.0 as usize * g + o.cell.1 as usize) * d;
        data[base..base + half].copy_from_slice(&shapes[o.shape as usize]);
        data[base + half..base + d].copy_from_slice(&colors[o.color as usize]);
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x504e);
        let normal = Normal::new(0.0, noise_std).expect("noise std");
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    Tensor::new(vec![g * g, d], data).expect("patch shape")
}

/// Fixed token embedding table, shared by construction across models.
pub fn embedding_table(vocab_size: usize, d: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(EMBED_TABLE_SEED);
    let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("std");
    let data: Vec<f64> = (0..vocab_size * d).map(|_| normal.sample(&mut rng)).collect();
    Tensor::new(vec![vocab_size, d], data).expect("embed shape")
}

// ── token batches ────────────────────────────────────────────────────

/// One padded training instance: per-position input embeddings, token
/// classes, relevance mask, and the modality split m. Visual positions
/// come first.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    /// k×d input embeddings (patches then text embeddings then padding).
    pub embeddings: Tensor,
    /// Token class of each position; rows one-hot by construction.
    pub target_classes: Vec<u32>,
    /// Positions whose logits carry learning signal.
    pub relevance_mask: Vec<bool>,
    /// Count of leading visual positions.
    pub m: usize,
}

impl TokenBatch {
    pub fn k(&self) -> usize {
        self.embeddings.shape()[0]
    }

    pub fn d(&self) -> usize {
        self.embeddings.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Lookup,
    Counting,
    Relational,
}

/// An exportable corpus record: the scene plus the text token ids.
/// Everything else (embeddings, masks) is rebuilt deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusRecord {
    Caption { scene: SceneSpec, tokens: Vec<u32> },
    Question { scene: SceneSpec, question: QuestionKind, tokens: Vec<u32>, answer: u32 },
}

impl CorpusRecord {
    pub fn scene(&self) -> &SceneSpec {
        match self {
            CorpusRecord::Caption { scene, .. } => scene,
            CorpusRecord::Question { scene, .. } => scene,
        }
    }

    pub fn text_tokens(&self) -> &[u32] {
        match self {
            CorpusRecord::Caption { tokens, .. } => tokens,
            CorpusRecord::Question { tokens, .. } => tokens,
        }
    }

    /// Position whose logits predict the answer token (questions only).
    pub fn predict_pos(&self, m: usize) -> Option<usize> {
        match self {
            CorpusRecord::Caption { .. } => None,
            CorpusRecord::Question { tokens, .. } => Some(m + tokens.len() - 3),
        }
    }

    pub fn to_batch(&self, cfg: &CorpusConfig, embed: &Tensor) -> Result<TokenBatch> {
        let vocab = cfg.vocab();
        let m = vocab.grid * vocab.grid;
        let k = cfg.max_seq;
        let d = cfg.d_embed;
        let text = self.text_tokens();
        if m + text.len() > k {
            return Err(Error::InvalidConfig(format!(
                "sequence {} + {} exceeds max_seq {k}",
                m,
                text.len()
            )));
        }
        let patches = render_scene(self.scene(), &vocab, d, cfg.patch_noise);

        let mut emb = vec![0.0; k * d];
        emb[..m * d].copy_from_slice(patches.data());
        let mut classes = vec![PAD; k];
        let mut mask = vec![false; k];
        for i in 0..m {
            classes[i] = IMG;
            mask[i] = true;
        }
        for (t, &tok) in text.iter().enumerate() {
            let pos = m + t;
            emb[pos * d..(pos + 1) * d].copy_from_slice(embed.row(tok as usize));
            classes[pos] = tok;
        }
        for pos in m + text.len()..k {
            emb[pos * d..(pos + 1) * d].copy_from_slice(embed.row(PAD as usize));
        }
        match self {
            CorpusRecord::Caption { .. } => {
                // Caption and eos all carry signal.
                for t in 0..text.len() {
                    mask[m + t] = true;
                }
            }
            CorpusRecord::Question { tokens, .. } => {
                // Only the answer-predicting position and the answer
                // itself carry signal; prompt tokens and eos do not.
                let q_len = tokens.len() - 2;
                mask[m + q_len - 1] = true;
                mask[m + q_len] = true;
            }
        }
        Ok(TokenBatch {
            embeddings: Tensor::new(vec![k, d], emb)?,
            target_classes: classes,
            relevance_mask: mask,
            m,
        })
    }
}

/// Caption record: (color, shape) per object in raster order, then eos.
pub fn gen_caption_pair(scene: &SceneSpec, vocab: &Vocab) -> CorpusRecord {
    let mut tokens = Vec::with_capacity(scene.objects.len() * 2 + 1);
    for o in &scene.objects {
        tokens.push(vocab.color(o.color as usize));
        tokens.push(vocab.shape(o.shape as usize));
    }
    tokens.push(EOS);
    CorpusRecord::Caption { scene: scene.clone(), tokens }
}

/// Question record of the requested kind, or None when the scene cannot
/// support it (e.g. a lookup question with no uniquely-shaped object).
pub fn gen_instruction_pair(
    scene: &SceneSpec,
    vocab: &Vocab,
    kind: QuestionKind,
    rng: &mut ChaCha8Rng,
) -> Option<CorpusRecord> {
    if scene.objects.is_empty() {
        return None;
    }
    let (q, answer) = match kind {
        QuestionKind::Lookup => {
            let unique = scene.unique_shapes();
            if unique.is_empty() {
                return None;
            }
            let s = unique[rng.random_range(0..unique.len())];
            let obj = scene.objects.iter().find(|o| o.shape == s).expect("unique shape");
            (vec![vocab.q_color(), vocab.shape(s as usize)], vocab.color(obj.color as usize))
        }
        QuestionKind::Counting => {
            let c = rng.random_range(0..vocab.n_colors);
            (vec![vocab.q_count(), vocab.color(c)], vocab.digit(scene.count_color(c as u8)))
        }
        QuestionKind::Relational => {
            let obj = &scene.objects[rng.random_range(0..scene.objects.len())];
            (
                vec![
                    vocab.q_shape(),
                    vocab.row(obj.cell.0 as usize),
                    vocab.col(obj.cell.1 as usize),
                ],
                vocab.shape(obj.shape as usize),
            )
        }
    };
    let mut tokens = q;
    tokens.push(answer);
    tokens.push(EOS);
    Some(CorpusRecord::Question { scene: scene.clone(), question: kind, tokens, answer })
}

// ── evaluation splits ────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Lookup,
    Counting,
    Relational,
    Captioning,
}

impl SplitName {
    pub const ALL: [SplitName; 4] =
        [SplitName::Lookup, SplitName::Counting, SplitName::Relational, SplitName::Captioning];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Lookup => "lookup",
            SplitName::Counting => "counting",
            SplitName::Relational => "relational",
            SplitName::Captioning => "captioning",
        }
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Held-out items with oracle answers.
#[derive(Debug, Clone)]
pub struct EvalSplit {
    pub name: SplitName,
    pub records: Vec<CorpusRecord>,
    pub batches: Vec<TokenBatch>,
}

// ── corpus ───────────────────────────────────────────────────────────

/// Fully determines a corpus: sizes, vocabulary dimensions, embedding
/// width, sequence length, and the generation seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub grid: usize,
    pub n_colors: usize,
    pub n_shapes: usize,
    pub max_objects: usize,
    pub d_embed: usize,
    pub max_seq: usize,
    pub n_caption_pairs: usize,
    pub n_instruction_pairs: usize,
    pub n_eval_per_split: usize,
    #[serde(default = "default_patch_noise")]
    pub patch_noise: f64,
    /// Lower bound on objects per generated scene; keeps the scene
    /// space large enough that signature collisions stay rare.
    #[serde(default = "default_min_objects")]
    pub min_objects: usize,
    pub seed: u64,
}

fn default_patch_noise() -> f64 {
    0.25
}

fn default_min_objects() -> usize {
    2
}

impl CorpusConfig {
    pub fn vocab(&self) -> Vocab {
        Vocab {
            grid: self.grid,
            n_colors: self.n_colors,
            n_shapes: self.n_shapes,
            max_objects: self.max_objects,
        }
    }

    pub fn n_visual_tokens(&self) -> usize {
        self.grid * self.grid
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_visual_tokens();
        let longest_text = (2 * self.max_objects + 1).max(5);
        if self.max_seq < m + longest_text {
            return Err(Error::InvalidConfig(format!(
                "max_seq {} cannot hold {m} visual tokens plus {longest_text} text tokens",
                self.max_seq
            )));
        }
        if self.d_embed < 4 || self.d_embed % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_embed must be an even number ≥ 4, got {}",
                self.d_embed
            )));
        }
        if self.grid == 0 || self.n_colors == 0 || self.n_shapes == 0 || self.max_objects == 0 {
            return Err(Error::InvalidConfig("grid, colors, shapes, max_objects must be positive".into()));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::InvalidConfig(format!(
                "min_objects {} must lie in 1..=max_objects {}",
                self.min_objects, self.max_objects
            )));
        }
        if self.max_objects > self.grid * self.grid {
            return Err(Error::InvalidConfig(format!(
                "max_objects {} exceeds cell count {}",
                self.max_objects,
                self.grid * self.grid
            )));
        }
        Ok(())
    }
}

/// A generated corpus: caption pairs (𝒟₁), instruction pairs (𝒟₂), and
/// held-out evaluation splits, all from disjoint scene sets.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub vocab: Vocab,
    /// Token embedding table shared by every model ("same tokenizer").
    pub embed: Tensor,
    pub caption_records: Vec<CorpusRecord>,
    pub instruction_records: Vec<CorpusRecord>,
    pub captions: Vec<TokenBatch>,
    pub instructions: Vec<TokenBatch>,
    pub eval_splits: Vec<EvalSplit>,
}

impl Corpus {
    pub fn split(&self, name: SplitName) -> &EvalSplit {
        self.eval_splits.iter().find(|s| s.name == name).expect("split exists")
    }
}

/// Generate distinct scenes (unique signatures) by advancing a seed
/// counter. Pure function of (seed, count, vocab).
fn distinct_scenes(seed: u64, count: usize, vocab: &Vocab, min_objects: usize) -> Vec<SceneSpec> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut rng = rng_for(seed, stream::SCENES);
    while out.len() < count {
        let scene = gen_scene(rng.random::<u64>(), vocab, min_objects);
        if seen.insert(scene.signature()) {
            out.push(scene);
        }
    }
    out
}

pub fn build_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let vocab = config.vocab();
    let embed = embedding_table(vocab.size(), config.d_embed);

    // One scene per pair; eval needs head-room because not every scene
    // supports every question kind.
    let n_eval_scene_budget = 4 * config.n_eval_per_split * 2;
    let total =
        config.n_caption_pairs + config.n_instruction_pairs + n_eval_scene_budget;
    let scenes = distinct_scenes(config.seed, total, &vocab, config.min_objects);
    let (caption_scenes, rest) = scenes.split_at(config.n_caption_pairs);
    let (instruction_scenes, eval_scenes) = rest.split_at(config.n_instruction_pairs);

    let caption_records: Vec<CorpusRecord> =
        caption_scenes.iter().map(|s| gen_caption_pair(s, &vocab)).collect();

    let kinds = [QuestionKind::Lookup, QuestionKind::Counting, QuestionKind::Relational];
    let mut rng = rng_for(config.seed, stream::INSTRUCTIONS);
    let mut instruction_records = Vec::with_capacity(config.n_instruction_pairs);
    for (i, scene) in instruction_scenes.iter().enumerate() {
        let kind = kinds[i % kinds.len()];
        // Counting is always satisfiable; fall back to it when the
        // drawn kind is not.
        let record = gen_instruction_pair(scene, &vocab, kind, &mut rng)
            .or_else(|| gen_instruction_pair(scene, &vocab, QuestionKind::Counting, &mut rng))
            .expect("counting question always satisfiable");
        instruction_records.push(record);
    }

    let mut rng = rng_for(config.seed, stream::EVAL);
    let mut eval_iter = eval_scenes.iter();
    let mut eval_splits = Vec::new();
    for name in SplitName::ALL {
        let mut records = Vec::with_capacity(config.n_eval_per_split);
        while records.len() < config.n_eval_per_split {
            let scene = eval_iter.next().ok_or_else(|| {
                Error::InvalidConfig("eval scene budget exhausted; raise n_eval_per_split headroom".into())
            })?;
            let record = match name {
                SplitName::Captioning => Some(gen_caption_pair(scene, &vocab)),
                SplitName::Lookup => {
                    gen_instruction_pair(scene, &vocab, QuestionKind::Lookup, &mut rng)
                }
                SplitName::Counting => {
                    gen_instruction_pair(scene, &vocab, QuestionKind::Counting, &mut rng)
                }
                SplitName::Relational => {
                    gen_instruction_pair(scene, &vocab, QuestionKind::Relational, &mut rng)
                }
            };
            if let Some(r) = record {
                records.push(r);
            }
        }
        let batches = records
            .iter()
            .map(|r| r.to_batch(config, &embed))
            .collect::<Result<Vec<_>>>()?;
        eval_splits.push(EvalSplit { name, records, batches });
    }

    let captions = caption_records
        .iter()
        .map(|r| r.to_batch(config, &embed))
        .collect::<Result<Vec<_>>>()?;
    let instructions = instruction_records
        .iter()
        .map(|r| r.to_batch(config, &embed))
        .collect::<Result<Vec<_>>>()?;

    Ok(Corpus {
        config: config.clone(),
        vocab,
        embed,
        caption_records,
        instruction_records,
        captions,
        instructions,
        eval_splits,
    })
}

// ── line-delimited export / import ───────────────────────────────────

#[derive(Serialize, Deserialize)]
#[serde(tag = "line", rename_all = "snake_case")]
enum CorpusLine {
    Header { config: CorpusConfig },
    Record { set: String, record: CorpusRecord },
}

/// Write a corpus as line-delimited JSON: a header line with the config,
/// then one line per record tagged with its set.
pub fn export_corpus<W: Write>(corpus: &Corpus, mut w: W) -> Result<()> {
    let mut emit = |line: &CorpusLine| -> Result<()> {
        let s = serde_json::to_string(line)?;
        writeln!(w, "{s}")?;
        Ok(())
    };
    emit(&CorpusLine::Header { config: corpus.config.clone() })?;
    for r in &corpus.caption_records {
        emit(&CorpusLine::Record { set: "d1".into(), record: r.clone() })?;
    }
    for r in &corpus.instruction_records {
        emit(&CorpusLine::Record { set: "d2".into(), record: r.clone() })?;
    }
    for split in &corpus.eval_splits {
        for r in &split.records {
            emit(&CorpusLine::Record { set: format!("eval:{}", split.name), record: r.clone() })?;
        }
    }
    Ok(())
}

/// Rebuild a corpus from its export. Embeddings and masks are re-derived
/// from the records, so a round trip reproduces the corpus exactly.
pub fn import_corpus<R: BufRead>(r: R) -> Result<Corpus> {
    let mut lines = r.lines();
    let header: CorpusLine = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::Serde("empty corpus file".into())),
    };
    let CorpusLine::Header { config } = header else {
        return Err(Error::Serde("first line must be the corpus header".into()));
    };
    config.validate()?;
    let vocab = config.vocab();
    let embed = embedding_table(vocab.size(), config.d_embed);

    let mut caption_records = Vec::new();
    let mut instruction_records = Vec::new();
    let mut eval: Vec<(SplitName, Vec<CorpusRecord>)> =
        SplitName::ALL.iter().map(|&n| (n, Vec::new())).collect();
    for line in lines {
        let parsed: CorpusLine = serde_json::from_str(&line?)?;
        let CorpusLine::Record { set, record } = parsed else {
            return Err(Error::Serde("duplicate corpus header".into()));
        };
        match set.as_str() {
            "d1" => caption_records.push(record),
            "d2" => instruction_records.push(record),
            other => {
                let name = other.strip_prefix("eval:").and_then(|n| {
                    SplitName::ALL.iter().find(|s| s.as_str() == n).copied()
                });
                match name {
                    Some(n) => eval.iter_mut().find(|(s, _)| *s == n).expect("split").1.push(record),
                    None => return Err(Error::Serde(format!("unknown record set `{other}`"))),
                }
            }
        }
    }

    let to_batches = |records: &[CorpusRecord]| -> Result<Vec<TokenBatch>> {
        records.iter().map(|r| r.to_batch(&config, &embed)).collect()
    };
    let captions = to_batches(&caption_records)?;
    let instructions = to_batches(&instruction_records)?;
    let eval_splits = eval
        .into_iter()
        .map(|(name, records)| {
            let batches = to_batches(&records)?;
            Ok(EvalSplit { name, records, batches })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        config,
        vocab,
        embed,
        caption_records,
        instruction_records,
        captions,
        instructions,
        eval_splits,
    })
}
