//! CLI command layer: config schema errors name the offending key, runs
//! write complete results directories, and identical (config, seed)
//! pairs reproduce outputs bit for bit.

use ckd::commands::{
    cmd_bounds, cmd_cascade, cmd_eval, cmd_pretrain, cmd_report, parse_config, PretrainFileConfig,
};
use ckd::error::Error;
use ckd::eval::ReportFormat;
use ckd::model::CapacityTier;
use std::path::Path;

fn pretrain_toml() -> String {
    r#"
seed = 77
base_hidden = 6
tiers = ["student", "teacher"]
export_corpus = true

[corpus]
grid = 2
n_colors = 3
n_shapes = 3
max_objects = 3
d_embed = 8
max_seq = 12
n_caption_pairs = 10
n_instruction_pairs = 10
n_eval_per_split = 4
patch_noise = 0.1
min_objects = 2
seed = 5

[encoder]
epochs = 1

[steps.pt]
epochs = 1
batch_size = 5

[steps.ft]
epochs = 1
batch_size = 5
"#
    .to_string()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn schema_error_names_offending_key() {
    let toml = pretrain_toml().replace("grid = 2", "grid = \"two\"");
    let err = parse_config::<PretrainFileConfig>(&toml).unwrap_err();
    match err {
        Error::Config { path, .. } => assert!(path.contains("grid"), "path was `{path}`"),
        other => panic!("expected config error, got {other}"),
    }
}

#[test]
fn missing_section_is_a_config_error() {
    let toml = "seed = 1\nbase_hidden = 6\ntiers = [\"student\"]\n";
    let err = parse_config::<PretrainFileConfig>(toml).unwrap_err();
    assert!(err.is_config_error());
    assert!(err.to_string().contains("corpus"), "{err}");
}

#[test]
fn unknown_key_rejected() {
    let toml = pretrain_toml().replace("[encoder]", "[encoder]\nbogus_key = 3");
    let err = parse_config::<PretrainFileConfig>(&toml).unwrap_err();
    assert!(err.is_config_error());
}

#[test]
fn pretrain_cascade_eval_report_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("pretrain.toml");
    write(&cfg_path, &pretrain_toml());
    let pre_out = dir.path().join("pre");
    let artifacts = cmd_pretrain(&cfg_path, &pre_out, None).unwrap();
    assert!(artifacts.checkpoints[&CapacityTier::Student].exists());
    assert!(artifacts.checkpoints[&CapacityTier::Teacher].exists());
    assert!(pre_out.join("manifest.json").exists());
    assert!(pre_out.join("corpus.jsonl").exists());
    assert!(pre_out.join("student").join("metrics_PT.jsonl").exists());

    // Cascade from the pretrained teacher.
    let teacher_path = artifacts.checkpoints[&CapacityTier::Teacher].display().to_string();
    let cascade_toml = format!(
        r#"
seed = 78
strategy = "single_teacher"
ladder = ["{teacher_path}"]
base_hidden = 6

[corpus]
grid = 2
n_colors = 3
n_shapes = 3
max_objects = 3
d_embed = 8
max_seq = 12
n_caption_pairs = 10
n_instruction_pairs = 10
n_eval_per_split = 4
patch_noise = 0.1
min_objects = 2
seed = 5

[encoder]
epochs = 1

[steps.dpt]
epochs = 1
batch_size = 5

[steps.sft]
epochs = 1
batch_size = 5

[steps.dft]
epochs = 1
batch_size = 5
"#
    );
    let cascade_cfg = dir.path().join("cascade.toml");
    write(&cascade_cfg, &cascade_toml);
    let cascade_out = dir.path().join("kd");
    let result =
        cmd_cascade(&cascade_cfg, &cascade_out, None, ReportFormat::Markdown).unwrap();
    assert!(result.final_checkpoint.exists());
    assert!(cascade_out.join("records.json").exists());
    assert!(cascade_out.join("report.md").exists());
    assert!(cascade_out.join("metrics").join("stage1_DPT.jsonl").exists());

    // Evaluate both checkpoints.
    let student_path = artifacts.checkpoints[&CapacityTier::Student].display().to_string();
    let final_path = result.final_checkpoint.display().to_string();
    let eval_toml = format!(
        r#"
seed = 79

[corpus]
grid = 2
n_colors = 3
n_shapes = 3
max_objects = 3
d_embed = 8
max_seq = 12
n_caption_pairs = 10
n_instruction_pairs = 10
n_eval_per_split = 4
patch_noise = 0.1
min_objects = 2
seed = 5

[[checkpoints]]
name = "direct"
path = "{student_path}"

[[checkpoints]]
name = "distilled"
path = "{final_path}"
"#
    );
    let eval_cfg = dir.path().join("eval.toml");
    write(&eval_cfg, &eval_toml);
    let eval_out = dir.path().join("eval");
    let table = cmd_eval(&eval_cfg, &eval_out, None, ReportFormat::Json).unwrap();
    assert_eq!(table.rows.len(), 2);
    for r in &table.rows {
        for s in &r.scores {
            assert!((0.0..=1.0).contains(s));
        }
    }

    // Re-emit the stored JSON report as CSV.
    let report_toml = format!("input = \"{}\"\n", eval_out.join("report.json").display());
    let report_cfg = dir.path().join("report.toml");
    write(&report_cfg, &report_toml);
    let report_out = dir.path().join("report");
    let path = cmd_report(&report_cfg, &report_out, ReportFormat::Csv).unwrap();
    let csv = std::fs::read_to_string(path).unwrap();
    assert!(csv.starts_with("row,method,strategy,seed"));
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("pretrain.toml");
    write(&cfg_path, &pretrain_toml());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    cmd_pretrain(&cfg_path, &out_a, Some(123)).unwrap();
    cmd_pretrain(&cfg_path, &out_b, Some(123)).unwrap();
    for rel in [
        "corpus.jsonl",
        "student/checkpoint.ckpt",
        "student/metrics_PT.jsonl",
        "student/metrics_FT.jsonl",
        "teacher/checkpoint.ckpt",
        "teacher/metrics_PT.jsonl",
        "teacher/metrics_FT.jsonl",
    ] {
        assert_eq!(
            read_bytes(&out_a.join(rel)),
            read_bytes(&out_b.join(rel)),
            "{rel} differs between identical runs"
        );
    }
    // A different seed changes the outputs.
    let out_c = dir.path().join("c");
    cmd_pretrain(&cfg_path, &out_c, Some(124)).unwrap();
    assert_ne!(
        read_bytes(&out_a.join("student/checkpoint.ckpt")),
        read_bytes(&out_c.join("student/checkpoint.ckpt"))
    );
}

#[test]
fn bounds_sweep_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let toml = r#"
n_values = [1.0, 100.0, 10000.0]
student_from_teacher = [0.5, 0.6]
distilled_gap = [0.0, 0.1]

[base]
student_cap = 1.0
ta_cap = 2.0
teacher_cap = 8.0
distilled_student_cap = 1.0
n = 1000000.0
k = 1.0
enforce_assumptions = true

[base.exponents]
direct_student = 0.5
direct_ta = 0.6
direct_teacher = 0.8
student_from_ta = 0.55
student_from_teacher = 0.55
distilled_student = 0.6
distilled_from_teacher = 0.7

[base.epsilons]
direct_student = 0.01
direct_ta = 0.01
direct_teacher = 0.01
student_from_ta = 0.01
student_from_teacher = 0.01
distilled_student = 0.01
distilled_from_teacher = 0.01
"#;
    let cfg = dir.path().join("sweep.toml");
    write(&cfg, toml);
    let out = dir.path().join("bounds");
    let artifacts = cmd_bounds(&cfg, &out).unwrap();
    assert_eq!(artifacts.table.records.len(), 12);
    assert_eq!(artifacts.table.holds_fraction, 1.0);
    assert!(out.join("sweep.json").exists());
    assert!(out.join("summary.json").exists());
}

#[test]
fn missing_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let toml = r#"
seed = 1
strategy = "single_teacher"
ladder = ["/nonexistent/teacher.ckpt"]
base_hidden = 6

[corpus]
grid = 2
n_colors = 3
n_shapes = 3
max_objects = 3
d_embed = 8
max_seq = 12
n_caption_pairs = 10
n_instruction_pairs = 10
n_eval_per_split = 4
patch_noise = 0.1
min_objects = 2
seed = 5
"#;
    let cfg = dir.path().join("cascade.toml");
    write(&cfg, toml);
    let err = cmd_cascade(&cfg, &dir.path().join("out"), None, ReportFormat::Csv).unwrap_err();
    assert!(err.to_string().contains("missing checkpoint"));
}
