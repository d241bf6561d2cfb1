//! Manual calibration driver: run with
//! `cargo test -p ckd --test calibration -- --ignored --nocapture`
//! to print the full strategy-comparison table for the current
//! experiment settings.

use ckd::cascade::{compare_strategies, ComparisonSpec, PlanSpec, Strategy};
use ckd::data::CorpusConfig;
use ckd::model::CapacityTier;
use ckd::pipeline::{EncoderProxyConfig, LlavaKdConfig, StepConfig, StepKind, TinyLlavaConfig};

fn spec() -> ComparisonSpec {
    let corpus = CorpusConfig {
        grid: 3,
        n_colors: 4,
        n_shapes: 4,
        max_objects: 4,
        d_embed: 16,
        max_seq: 20,
        n_caption_pairs: 384,
        n_instruction_pairs: 768,
        n_eval_per_split: 128,
        patch_noise: 0.25,
        min_objects: 2,
        seed: 1234,
    };
    let step = |kind: StepKind, lr: f64, batch: usize, epochs: usize| StepConfig {
        peak_lr: lr,
        batch_size: batch,
        epochs,
        ..StepConfig::defaults_for(kind, 0)
    };
    ComparisonSpec {
        corpus,
        base_hidden: 12,
        encoder: EncoderProxyConfig::default(),
        tinyllava: TinyLlavaConfig {
            pt: step(StepKind::Pt, 1e-3, 32, 2),
            ft: step(StepKind::Ft, 3e-4, 16, 4),
        },
        kd: LlavaKdConfig {
            dpt: step(StepKind::Dpt, 1e-3, 32, 2),
            sft: step(StepKind::Sft, 3e-4, 16, 4),
            dft: step(StepKind::Dft, 3e-4, 16, 4),
            distill_only: false,
        },
        plans: vec![
            PlanSpec { name: "direct".into(), strategy: Strategy::None, ladder_tiers: vec![] },
            PlanSpec {
                name: "kd_teacher".into(),
                strategy: Strategy::SingleTeacher,
                ladder_tiers: vec![CapacityTier::Teacher],
            },
            PlanSpec {
                name: "bottom_up".into(),
                strategy: Strategy::BottomUp,
                ladder_tiers: vec![CapacityTier::Assistant, CapacityTier::Teacher],
            },
            PlanSpec {
                name: "top_down".into(),
                strategy: Strategy::TopDown,
                ladder_tiers: vec![CapacityTier::Assistant, CapacityTier::Teacher],
            },
        ],
    }
}

#[test]
#[ignore = "manual calibration driver"]
fn calibration_table() {
    let seeds: Vec<u64> = (1..=3).collect();
    let start = std::time::Instant::now();
    let table = compare_strategies(&spec(), &seeds).unwrap();
    println!("elapsed: {:?}", start.elapsed());
    println!("{}", ckd::eval::emit_report(&table, ckd::eval::ReportFormat::Markdown).unwrap());

    // Tier accuracy context: evaluate every pretrained tier directly.
    use ckd::cascade::build_replicate;
    use ckd::eval::evaluate;
    for &seed in &seeds {
        let spec = spec();
        let mut spec_all = spec.clone();
        spec_all.plans = vec![
            PlanSpec {
                name: "tiers".into(),
                strategy: Strategy::SingleTeacher,
                ladder_tiers: vec![
                    CapacityTier::Student,
                    CapacityTier::Assistant,
                    CapacityTier::Teacher,
                ],
            },
            PlanSpec { name: "direct".into(), strategy: Strategy::None, ladder_tiers: vec![] },
        ];
        let rep = build_replicate(&spec_all, seed).unwrap();
        for (tier, model) in &rep.tiers {
            let mut line = format!("seed {seed} {}:", tier.as_str());
            for split in ckd::data::SplitName::ALL {
                let acc = evaluate(model, rep.corpus.split(split)).unwrap();
                line.push_str(&format!(" {}={:.3}", split.as_str(), acc));
            }
            println!("{line}");
        }
    }
}
