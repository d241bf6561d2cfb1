//! One-off learnability probe: how far do the tiers get on the
//! synthetic tasks as training lengthens? Run manually:
//! `cargo test -p ckd --test probe -- --ignored --nocapture`

use ckd::cascade::prepare_model;
use ckd::data::{build_corpus, CorpusConfig, SplitName};
use ckd::eval::evaluate;
use ckd::model::{CapacityTier, ModelConfig};
use ckd::pipeline::{
    train_tinyllava, EncoderProxyConfig, StepConfig, StepKind, TinyLlavaConfig,
};

fn corpus_cfg() -> CorpusConfig {
    CorpusConfig {
        grid: 2,
        n_colors: 4,
        n_shapes: 4,
        max_objects: 4,
        min_objects: 3,
        d_embed: 16,
        max_seq: 14,
        n_caption_pairs: 320,
        n_instruction_pairs: 960,
        n_eval_per_split: 96,
        patch_noise: 0.25,
        seed: 1234,
    }
}

#[test]
#[ignore = "manual probe"]
fn tier_learnability() {
    let corpus = build_corpus(&corpus_cfg()).unwrap();
    let c = corpus_cfg();
    for (tier, epochs, lr, batch) in [
        (CapacityTier::Student, 20usize, 2e-3f64, 8usize),
        (CapacityTier::Assistant, 20, 2e-3, 8),
        (CapacityTier::Teacher, 20, 1e-3, 8),
        (CapacityTier::Teacher, 20, 2e-3, 8),
    ] {
        let start = std::time::Instant::now();
        let cfg = ModelConfig::for_tier(
            tier,
            c.d_embed,
            c.vocab().size(),
            c.max_seq,
            c.n_visual_tokens(),
            12,
            42,
        );
        let mut model = prepare_model(&cfg, &corpus, &EncoderProxyConfig::default()).unwrap();
        let tl = TinyLlavaConfig {
            pt: StepConfig { epochs: 4, ..StepConfig::defaults_for(StepKind::Pt, 7) },
            ft: StepConfig {
                epochs,
                peak_lr: lr,
                batch_size: batch,
                ..StepConfig::defaults_for(StepKind::Ft, 8)
            },
        };
        let out = train_tinyllava(&mut model, &corpus, &tl).unwrap();
        let ft_metrics = &out.steps[1].metrics;
        let first = ft_metrics.first().unwrap().loss;
        let mid = ft_metrics[ft_metrics.len() / 2].loss;
        let last = ft_metrics.last().unwrap().loss;
        let mut line = format!(
            "{} ep={epochs} lr={lr} b={batch}: loss {first:.3}→{mid:.3}→{last:.3}",
            tier.as_str()
        );
        for split in SplitName::ALL {
            let acc = evaluate(&model, corpus.split(split)).unwrap();
            line.push_str(&format!(" {}={:.3}", split.as_str(), acc));
        }
        line.push_str(&format!(" [{:?}]", start.elapsed()));
        println!("{line}");
    }
}
