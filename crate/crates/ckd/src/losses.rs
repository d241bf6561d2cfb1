//! The distillation loss family: autoregressive cross-entropy, text and
//! visual KL divergence, visual cosine divergence over Gram matrices,
//! and their weighted combination.
//!
//! Every loss has two faces: a graph builder that attaches the student
//! logits to a [`Tape`] (used by training and by gradient checks), and a
//! plain value API over [`LogitBundle`]s that builds an ephemeral tape
//! internally. One implementation path serves both.
//!
//! Masking semantics: `relevance_mask[i]` marks logit vectors that carry
//! learning signal. Masked positions contribute to no loss, exactly —
//! perturbing a masked logit never changes any loss value. The first `m`
//! positions of a bundle are visual, the rest textual; the KL losses
//! split on that boundary. The autoregressive loss supervises a position
//! `i` only when both `i` and `i+1` are unmasked and the predicted token
//! at `i+1` is textual (visual positions have no next-token class worth
//! learning).
//!
//! The KL terms normalize both logit sequences into temperature-softmax
//! distributions per position; the teacher side is detached, so no
//! gradient reaches a teacher. By default each positional sum is divided
//! by its count of contributing positions so loss weights stay balanced
//! across variable-length batches; `raw_sums` restores the literal sums.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Per-position logits from one forward pass, with the modality split
/// and relevance mask that the losses consume.
#[derive(Debug, Clone)]
pub struct LogitBundle {
    /// k×c logits.
    pub logits: Tensor,
    /// Leading visual-token count; positions `0..m` are visual.
    pub m: usize,
    /// Which positions carry learning signal.
    pub relevance_mask: Vec<bool>,
    /// Token class of each position (the target at position `i` during
    /// next-token prediction is `target_classes[i+1]`).
    pub target_classes: Vec<u32>,
}

impl LogitBundle {
    pub fn k(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn c(&self) -> usize {
        self.logits.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.logits.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "logit_bundle",
                detail: format!("logits must be 2-d, got {:?}", self.logits.shape()),
            });
        }
        let k = self.k();
        if self.relevance_mask.len() != k || self.target_classes.len() != k {
            return Err(Error::ShapeMismatch {
                op: "logit_bundle",
                detail: format!(
                    "mask len {} / targets len {} vs k {k}",
                    self.relevance_mask.len(),
                    self.target_classes.len()
                ),
            });
        }
        if self.m > k {
            return Err(Error::InvalidArgument {
                op: "logit_bundle",
                detail: format!("m {} exceeds k {k}", self.m),
            });
        }
        if let Some(&t) = self.target_classes.iter().find(|&&t| t as usize >= self.c()) {
            return Err(Error::InvalidArgument {
                op: "logit_bundle",
                detail: format!("target class {t} outside vocab {}", self.c()),
            });
        }
        Ok(())
    }

    /// Targets as one-hot rows (each sums to exactly 1).
    pub fn one_hot_targets(&self) -> Tensor {
        one_hot(&self.target_classes, self.c())
    }
}

pub fn one_hot(classes: &[u32], c: usize) -> Tensor {
    let mut data = vec![0.0; classes.len() * c];
    for (i, &cls) in classes.iter().enumerate() {
        data[i * c + cls as usize] = 1.0;
    }
    Tensor::new(vec![classes.len(), c], data).expect("one_hot shape")
}

/// Loss weights and shared loss options. Defaults: all weights one,
/// temperature one, per-position normalization.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LossWeights {
    /// Weight of the text KL term.
    pub tau1: f64,
    /// Weight of the visual KL term.
    pub tau2: f64,
    /// Weight of the visual cosine term.
    pub tau3: f64,
    /// Softmax temperature applied to both sides of the KL terms.
    pub temperature: f64,
    /// Emit literal positional sums instead of per-position means.
    #[serde(default)]
    pub raw_sums: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { tau1: 1.0, tau2: 1.0, tau3: 1.0, temperature: 1.0, raw_sums: false }
    }
}

impl LossWeights {
    fn validate(&self) -> Result<()> {
        if self.tau1 < 0.0 || self.tau2 < 0.0 || self.tau3 < 0.0 {
            return Err(Error::InvalidArgument {
                op: "loss_weights",
                detail: "loss weights must be nonnegative".into(),
            });
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument {
                op: "loss_weights",
                detail: format!("temperature must be positive, got {}", self.temperature),
            });
        }
        Ok(())
    }
}

/// Which modality range a KL loss covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModalityRange {
    Visual,
    Text,
}

/// Metadata a graph-side loss needs about the student sequence.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub m: usize,
    pub mask: &'a [bool],
    pub targets: &'a [u32],
}

impl<'a> LossInputs<'a> {
    pub fn of(bundle: &'a LogitBundle) -> Self {
        LossInputs { m: bundle.m, mask: &bundle.relevance_mask, targets: &bundle.target_classes }
    }
}

fn check_pair(teacher: &LogitBundle, k: usize, c: usize, inp: &LossInputs) -> Result<()> {
    teacher.validate()?;
    if teacher.k() != k || teacher.c() != c {
        return Err(Error::ShapeMismatch {
            op: "kd_loss",
            detail: format!(
                "teacher logits {:?} vs student [{k}, {c}]",
                teacher.logits.shape()
            ),
        });
    }
    if teacher.m != inp.m {
        return Err(Error::MaskMismatch(format!(
            "modality split m {} vs {}",
            teacher.m, inp.m
        )));
    }
    if teacher.relevance_mask != inp.mask {
        return Err(Error::MaskMismatch("relevance masks differ".into()));
    }
    Ok(())
}

fn softmax_row(logits: &[f64], inv_temp: f64) -> Vec<f64> {
    let max = logits.iter().map(|&z| z * inv_temp).fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z * inv_temp - max).exp()).collect();
    let denom: f64 = out.iter().sum();
    for v in &mut out {
        *v /= denom;
    }
    out
}

/// Positions contributing to the autoregressive loss: `i` and `i+1`
/// unmasked, with a textual next-token target.
fn rg_positions(inp: &LossInputs) -> Vec<usize> {
    let k = inp.mask.len();
    (0..k.saturating_sub(1))
        .filter(|&i| inp.mask[i] && inp.mask[i + 1] && i + 1 >= inp.m)
        .collect()
}

fn range_positions(inp: &LossInputs, range: ModalityRange) -> Vec<usize> {
    let k = inp.mask.len();
    let (lo, hi) = match range {
        ModalityRange::Visual => (0, inp.m),
        ModalityRange::Text => (inp.m, k),
    };
    (lo..hi).filter(|&i| inp.mask[i]).collect()
}

// ── graph builders ───────────────────────────────────────────────────

/// Next-token cross-entropy −Σᵢ Σⱼ y_{i+1,j} ln pᵢⱼ over contributing
/// positions, where p = softmax(z).
pub fn autoregressive_loss_graph(
    tape: &mut Tape,
    z: Var,
    inp: &LossInputs,
    w: &LossWeights,
) -> Result<Var> {
    let (k, c) = (tape.shape(z)[0], tape.shape(z)[1]);
    debug_assert_eq!(k, inp.mask.len());
    let support = rg_positions(inp);
    if support.is_empty() {
        return Err(Error::EmptyLossSupport);
    }
    // Wᵢⱼ = 1 at (i, class of i+1) for contributing i; one mul+sum
    // realizes the double sum of the one-hot form.
    let mut pick = vec![0.0; k * c];
    for &i in &support {
        pick[i * c + inp.targets[i + 1] as usize] = 1.0;
    }
    let pick = tape.constant(&Tensor::new(vec![k, c], pick)?);
    let p = tape.softmax(z)?;
    let log_p = tape.log(p);
    let picked = tape.mul(log_p, pick)?;
    let total = tape.sum(picked);
    let norm = if w.raw_sums { -1.0 } else { -1.0 / support.len() as f64 };
    Ok(tape.scale(total, norm))
}

/// KL(teacher ‖ student) over one modality range, temperature-softened
/// on both sides. The teacher enters as constants; `z` is the student
/// logits on the tape.
pub fn kd_kl_loss_graph(
    tape: &mut Tape,
    teacher: &LogitBundle,
    z: Var,
    inp: &LossInputs,
    range: ModalityRange,
    w: &LossWeights,
) -> Result<Var> {
    w.validate()?;
    let (k, c) = (tape.shape(z)[0], tape.shape(z)[1]);
    check_pair(teacher, k, c, inp)?;
    let positions = range_positions(inp, range);
    if positions.is_empty() {
        return Ok(tape.constant_scalar(0.0));
    }
    let inv_temp = 1.0 / w.temperature;

    // Teacher side: per-position distributions and their entropy term,
    // both constant under the student's gradient.
    let mut coeff = vec![0.0; k * c];
    let mut entropy_term = 0.0;
    for &i in &positions {
        let p = softmax_row(teacher.logits.row(i), inv_temp);
        for (j, &pj) in p.iter().enumerate() {
            coeff[i * c + j] = pj;
            if pj > 0.0 {
                entropy_term += pj * pj.ln();
            }
        }
    }
    // Student cross term: −Σ p·ln q. Entries with zero coefficient are
    // filled to 0 before the product so an underflowed q (ln q = −∞)
    // cannot poison the sum with 0·∞.
    let zero_coeff: Vec<bool> = coeff.iter().map(|&p| p == 0.0).collect();
    let scaled = tape.scale(z, inv_temp);
    let q = tape.softmax(scaled)?;
    let log_q = tape.log(q);
    let log_q = tape.mask_fill(log_q, &zero_coeff, 0.0)?;
    let coeff = tape.constant(&Tensor::new(vec![k, c], coeff)?);
    let weighted = tape.mul(log_q, coeff)?;
    let cross = tape.sum(weighted);
    let neg_cross = tape.scale(cross, -1.0);
    let kl = tape.add_scalar(neg_cross, entropy_term);
    let norm = if w.raw_sums { 1.0 } else { 1.0 / positions.len() as f64 };
    Ok(tape.scale(kl, norm))
}

/// Gram matrix of the student's unmasked visual logits, on the tape.
fn visual_gram_graph(tape: &mut Tape, z: Var, inp: &LossInputs) -> Result<Var> {
    let positions = range_positions(inp, ModalityRange::Visual);
    if positions.is_empty() {
        return Err(Error::NoVisualTokens);
    }
    let rows = tape.gather_rows(z, &positions)?;
    let rows_t = tape.transpose(rows)?;
    tape.matmul(rows, rows_t)
}

/// One minus the cosine similarity between the vectorized visual Gram
/// matrices of teacher and student.
pub fn visual_cosine_loss_graph(
    tape: &mut Tape,
    teacher: &LogitBundle,
    z: Var,
    inp: &LossInputs,
) -> Result<Var> {
    let (k, c) = (tape.shape(z)[0], tape.shape(z)[1]);
    check_pair(teacher, k, c, inp)?;
    let gram_t = visual_gram(teacher)?;
    let norm_t = gram_t.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_t == 0.0 {
        return Err(Error::DegenerateVisualLogits);
    }
    let gram_s = visual_gram_graph(tape, z, inp)?;
    let sq = tape.mul(gram_s, gram_s)?;
    let sum_sq = tape.sum(sq);
    if tape.item(sum_sq) == 0.0 {
        return Err(Error::DegenerateVisualLogits);
    }
    let gram_t = tape.constant(&gram_t);
    let prod = tape.mul(gram_t, gram_s)?;
    let inner = tape.sum(prod);
    let norm_s = tape.powf(sum_sq, 0.5);
    let denom = tape.scale(norm_s, norm_t);
    let inv_denom = tape.powf(denom, -1.0);
    let cos = tape.mul(inner, inv_denom)?;
    let neg = tape.scale(cos, -1.0);
    Ok(tape.add_scalar(neg, 1.0))
}

/// Graph nodes of the combined loss, kept for per-term logging. Terms
/// with zero weight are skipped entirely.
pub struct DftGraph {
    pub total: Var,
    pub rg: Var,
    pub td: Option<Var>,
    pub vd: Option<Var>,
    pub vc: Option<Var>,
}

impl DftGraph {
    pub fn breakdown(&self, tape: &Tape) -> DftBreakdown {
        DftBreakdown {
            total: tape.item(self.total),
            rg: tape.item(self.rg),
            td: self.td.map(|v| tape.item(v)).unwrap_or(0.0),
            vd: self.vd.map(|v| tape.item(v)).unwrap_or(0.0),
            vc: self.vc.map(|v| tape.item(v)).unwrap_or(0.0),
        }
    }
}

/// Component values of one combined-loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DftBreakdown {
    pub total: f64,
    pub rg: f64,
    pub td: f64,
    pub vd: f64,
    pub vc: f64,
}

/// Combined distillation loss: rg + τ₁·td + τ₂·vd + τ₃·vc.
pub fn dft_loss_graph(
    tape: &mut Tape,
    teacher: &LogitBundle,
    z: Var,
    inp: &LossInputs,
    w: &LossWeights,
) -> Result<DftGraph> {
    w.validate()?;
    let rg = autoregressive_loss_graph(tape, z, inp, w)?;
    let mut total = rg;
    let add_weighted = |tape: &mut Tape, total: &mut Var, term: Var, weight: f64| {
        let scaled = tape.scale(term, weight);
        *total = tape.add(*total, scaled).expect("scalar add");
    };
    let td = if w.tau1 != 0.0 {
        let t = kd_kl_loss_graph(tape, teacher, z, inp, ModalityRange::Text, w)?;
        add_weighted(tape, &mut total, t, w.tau1);
        Some(t)
    } else {
        None
    };
    let vd = if w.tau2 != 0.0 {
        let t = kd_kl_loss_graph(tape, teacher, z, inp, ModalityRange::Visual, w)?;
        add_weighted(tape, &mut total, t, w.tau2);
        Some(t)
    } else {
        None
    };
    let vc = if w.tau3 != 0.0 {
        let t = visual_cosine_loss_graph(tape, teacher, z, inp)?;
        add_weighted(tape, &mut total, t, w.tau3);
        Some(t)
    } else {
        None
    };
    Ok(DftGraph { total, rg, td, vd, vc })
}

// ── value-level API ──────────────────────────────────────────────────

/// Autoregressive loss of a bundle.
pub fn autoregressive_loss(bundle: &LogitBundle, w: &LossWeights) -> Result<f64> {
    bundle.validate()?;
    let mut tape = Tape::new();
    let z = tape.constant(&bundle.logits);
    let loss = autoregressive_loss_graph(&mut tape, z, &LossInputs::of(bundle), w)?;
    Ok(tape.item(loss))
}

/// KL(teacher ‖ student) over the selected modality range.
pub fn kd_kl_loss(
    teacher: &LogitBundle,
    student: &LogitBundle,
    range: ModalityRange,
    w: &LossWeights,
) -> Result<f64> {
    student.validate()?;
    let mut tape = Tape::new();
    let z = tape.constant(&student.logits);
    let loss = kd_kl_loss_graph(&mut tape, teacher, z, &LossInputs::of(student), range, w)?;
    Ok(tape.item(loss))
}

/// Gram (autocorrelation) matrix of the unmasked visual logits:
/// Gᵢⱼ = zᵢᵀ zⱼ.
pub fn visual_gram(bundle: &LogitBundle) -> Result<Tensor> {
    bundle.validate()?;
    let inp = LossInputs::of(bundle);
    let positions = range_positions(&inp, ModalityRange::Visual);
    if positions.is_empty() {
        return Err(Error::NoVisualTokens);
    }
    let mv = positions.len();
    let c = bundle.c();
    let mut g = vec![0.0; mv * mv];
    for (a, &i) in positions.iter().enumerate() {
        for (b, &j) in positions.iter().enumerate() {
            let (zi, zj) = (bundle.logits.row(i), bundle.logits.row(j));
            g[a * mv + b] = (0..c).map(|t| zi[t] * zj[t]).sum();
        }
    }
    Tensor::new(vec![mv, mv], g)
}

/// Visual cosine divergence between teacher and student bundles.
pub fn visual_cosine_loss(teacher: &LogitBundle, student: &LogitBundle) -> Result<f64> {
    student.validate()?;
    let mut tape = Tape::new();
    let z = tape.constant(&student.logits);
    let loss = visual_cosine_loss_graph(&mut tape, teacher, z, &LossInputs::of(student))?;
    Ok(tape.item(loss))
}

/// Combined loss with per-term breakdown.
pub fn dft_loss(
    teacher: &LogitBundle,
    student: &LogitBundle,
    w: &LossWeights,
) -> Result<DftBreakdown> {
    student.validate()?;
    let mut tape = Tape::new();
    let z = tape.constant(&student.logits);
    let graph = dft_loss_graph(&mut tape, teacher, z, &LossInputs::of(student), w)?;
    Ok(graph.breakdown(&tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn bundle(k: usize, c: usize, m: usize, logits: Vec<f64>, mask: Vec<bool>, targets: Vec<u32>) -> LogitBundle {
        LogitBundle {
            logits: Tensor::new(vec![k, c], logits).unwrap(),
            m,
            relevance_mask: mask,
            target_classes: targets,
        }
    }

    fn random_bundle(rng: &mut ChaCha8Rng, k: usize, c: usize, m: usize) -> LogitBundle {
        let logits: Vec<f64> = (0..k * c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let targets: Vec<u32> = (0..k).map(|_| rng.random_range(0..c as u32)).collect();
        bundle(k, c, m, logits, vec![true; k], targets)
    }

    #[test]
    fn perfect_prediction_gives_zero() {
        // Probability ~1 on the next position's class at every position.
        let k = 4;
        let c = 3;
        let mut logits = vec![0.0; k * c];
        let targets = vec![0u32, 1, 2, 1];
        for i in 0..k - 1 {
            for j in 0..c {
                logits[i * c + j] = if j == targets[i + 1] as usize { 200.0 } else { -200.0 };
            }
        }
        let b = bundle(k, c, 0, logits, vec![true; k], targets);
        let loss = autoregressive_loss(&b, &LossWeights::default()).unwrap();
        assert!(loss.abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn uniform_logits_match_ln_c() {
        // c = 16, 5 positions all relevant, m = 0 → 4 prediction
        // positions; raw sums give 4·ln 16.
        let k = 5;
        let c = 16;
        let b = bundle(k, c, 0, vec![0.0; k * c], vec![true; k], vec![3; k]);
        let w = LossWeights { raw_sums: true, ..LossWeights::default() };
        let loss = autoregressive_loss(&b, &w).unwrap();
        assert!((loss - 4.0 * (16.0f64).ln()).abs() < 1e-12);
        // Mean mode divides by the 4 contributing positions.
        let mean = autoregressive_loss(&b, &LossWeights::default()).unwrap();
        assert!((mean - (16.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        // Independent per-position cross-entropy summation.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (k, c, m) = (5, 4, 2);
            let b = random_bundle(&mut rng, k, c, m);
            let w = LossWeights { raw_sums: true, ..LossWeights::default() };
            let got = autoregressive_loss(&b, &w).unwrap();

            let mut want = 0.0;
            for i in 0..k - 1 {
                if !(b.relevance_mask[i] && b.relevance_mask[i + 1] && i + 1 >= m) {
                    continue;
                }
                let row = b.logits.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = row.iter().map(|z| (z - max).exp()).sum();
                let target = b.target_classes[i + 1] as usize;
                want -= row[target] - max - denom.ln();
            }
            assert!((got - want).abs() < 1e-10, "got {got} want {want}");
        }
    }

    #[test]
    fn all_masked_is_an_error() {
        let b = bundle(3, 2, 0, vec![0.0; 6], vec![false; 3], vec![0; 3]);
        assert!(matches!(
            autoregressive_loss(&b, &LossWeights::default()),
            Err(Error::EmptyLossSupport)
        ));
    }

    #[test]
    fn kl_zero_on_identical_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_bundle(&mut rng, 6, 5, 2);
        let w = LossWeights::default();
        assert_eq!(kd_kl_loss(&b, &b, ModalityRange::Visual, &w).unwrap(), 0.0);
        assert_eq!(kd_kl_loss(&b, &b, ModalityRange::Text, &w).unwrap(), 0.0);
    }

    #[test]
    fn kl_hand_computed_case() {
        // One text position, c=2, teacher (0.8, 0.2), student (0.5, 0.5):
        // 0.8·ln 1.6 + 0.2·ln 0.4.
        let teacher = bundle(1, 2, 0, vec![(4.0f64).ln(), 0.0], vec![true], vec![0]);
        let student = bundle(1, 2, 0, vec![0.0, 0.0], vec![true], vec![0]);
        let got = kd_kl_loss(&teacher, &student, ModalityRange::Text, &LossWeights::default())
            .unwrap();
        let want = 0.8 * (1.6f64).ln() + 0.2 * (0.4f64).ln();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.1927).abs() < 1e-4);
    }

    #[test]
    fn kl_rejects_mask_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let teacher = random_bundle(&mut rng, 4, 3, 1);
        let mut student = random_bundle(&mut rng, 4, 3, 1);
        student.relevance_mask[2] = false;
        assert!(matches!(
            kd_kl_loss(&teacher, &student, ModalityRange::Text, &LossWeights::default()),
            Err(Error::MaskMismatch(_))
        ));
    }

    #[test]
    fn gram_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_bundle(&mut rng, 6, 5, 3);
        let g = visual_gram(&b).unwrap();
        assert_eq!(g.shape(), &[3, 3]);
        for i in 0..3 {
            for j in 0..3 {
                let mut want = 0.0;
                for t in 0..5 {
                    want += b.logits.row(i)[t] * b.logits.row(j)[t];
                }
                assert!((g.row(i)[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_single_token_is_dot_product() {
        let b = bundle(2, 2, 1, vec![3.0, 4.0, 0.0, 0.0], vec![true; 2], vec![0; 2]);
        let g = visual_gram(&b).unwrap();
        assert_eq!(g.data(), &[25.0]);
    }

    #[test]
    fn gram_requires_visual_tokens() {
        let b = bundle(2, 2, 0, vec![0.0; 4], vec![true; 2], vec![0; 2]);
        assert!(matches!(visual_gram(&b), Err(Error::NoVisualTokens)));
    }

    #[test]
    fn cosine_zero_on_identical_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = random_bundle(&mut rng, 6, 5, 3);
        let same = visual_cosine_loss(&b, &b).unwrap();
        assert!(same.abs() < 1e-12);
        // Positive scaling of one side's logits scales its Gram by λ².
        let mut scaled = b.clone();
        let data: Vec<f64> = scaled.logits.data().iter().map(|v| v * 2.5).collect();
        scaled.logits = Tensor::new(scaled.logits.shape().to_vec(), data).unwrap();
        let loss = visual_cosine_loss(&b, &scaled).unwrap();
        assert!(loss.abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn cosine_orthogonal_grams_give_one() {
        // Teacher Gram [[1,1],[1,1]] vs student Gram [[1,-1],[-1,1]]:
        // vectorizations are orthogonal, so the loss is exactly 1.
        let teacher =
            bundle(3, 2, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0], vec![true; 3], vec![0; 3]);
        let student =
            bundle(3, 2, 2, vec![1.0, 0.0, -1.0, 0.0, 0.0, 0.0], vec![true; 3], vec![0; 3]);
        let gt = visual_gram(&teacher).unwrap();
        let gs = visual_gram(&student).unwrap();
        let inner: f64 = gt.data().iter().zip(gs.data()).map(|(a, b)| a * b).sum();
        assert_eq!(inner, 0.0, "fixture must have orthogonal grams");
        let loss = visual_cosine_loss(&teacher, &student).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_zero_gram() {
        let z = bundle(2, 2, 1, vec![0.0; 4], vec![true; 2], vec![0; 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ok = random_bundle(&mut rng, 2, 2, 1);
        assert!(matches!(visual_cosine_loss(&z, &ok), Err(Error::DegenerateVisualLogits)));
        assert!(matches!(visual_cosine_loss(&ok, &z), Err(Error::DegenerateVisualLogits)));
    }

    #[test]
    fn dft_reduces_to_autoregressive() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let teacher = random_bundle(&mut rng, 6, 5, 2);
        let mut student = random_bundle(&mut rng, 6, 5, 2);
        student.target_classes = teacher.target_classes.clone();
        let w = LossWeights { tau1: 0.0, tau2: 0.0, tau3: 0.0, ..LossWeights::default() };
        let b = dft_loss(&teacher, &student, &w).unwrap();
        let rg = autoregressive_loss(&student, &LossWeights::default()).unwrap();
        assert_eq!(b.total, rg);
        assert_eq!(b.td, 0.0);
    }

    #[test]
    fn dft_matches_component_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let teacher = random_bundle(&mut rng, 6, 5, 2);
            let mut student = random_bundle(&mut rng, 6, 5, 2);
            student.target_classes = teacher.target_classes.clone();
            let w = LossWeights { tau1: 0.7, tau2: 1.3, tau3: 0.4, ..LossWeights::default() };
            let b = dft_loss(&teacher, &student, &w).unwrap();
            let rg = autoregressive_loss(&student, &w).unwrap();
            let td = kd_kl_loss(&teacher, &student, ModalityRange::Text, &w).unwrap();
            let vd = kd_kl_loss(&teacher, &student, ModalityRange::Visual, &w).unwrap();
            let vc = visual_cosine_loss(&teacher, &student).unwrap();
            assert!((b.total - (rg + 0.7 * td + 1.3 * vd + 0.4 * vc)).abs() < 1e-12);
            assert_eq!(b.rg, rg);
            assert_eq!(b.td, td);
            assert_eq!(b.vd, vd);
            assert_eq!(b.vc, vc);
        }
    }

    #[test]
    fn masked_positions_are_inert() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut teacher = random_bundle(&mut rng, 7, 5, 3);
        let mut student = random_bundle(&mut rng, 7, 5, 3);
        student.target_classes = teacher.target_classes.clone();
        teacher.relevance_mask[1] = false;
        teacher.relevance_mask[5] = false;
        student.relevance_mask = teacher.relevance_mask.clone();
        let w = LossWeights::default();
        let before = dft_loss(&teacher, &student, &w).unwrap();
        // Slam the masked student logits: nothing may move.
        let mut poked = student.clone();
        for &i in &[1usize, 5] {
            for j in 0..5 {
                let c = poked.logits.shape()[1];
                poked.logits.data_mut()[i * c + j] = rng.random_range(-100.0..100.0);
            }
        }
        let after = dft_loss(&teacher, &poked, &w).unwrap();
        assert_eq!(before.total, after.total);
        assert_eq!(before.rg, after.rg);
        assert_eq!(before.td, after.td);
        assert_eq!(before.vd, after.vd);
        assert_eq!(before.vc, after.vc);
    }
}
