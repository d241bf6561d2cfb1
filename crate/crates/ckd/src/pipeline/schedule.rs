//! Linear-warmup + cosine-decay learning-rate schedule.

use crate::error::{Error, Result};

/// Learning rate at `step ∈ 0..=total_steps`: linear warmup from 0 to
/// `peak` over `ceil(warmup_ratio·total_steps)` steps, then cosine decay
/// from peak to exactly 0 at `total_steps`.
pub fn warmup_cosine(step: usize, total_steps: usize, peak: f64, warmup_ratio: f64) -> Result<f64> {
    if !(warmup_ratio > 0.0 && warmup_ratio < 1.0) {
        return Err(Error::InvalidArgument {
            op: "lr_at",
            detail: format!("warmup_ratio must lie in (0,1), got {warmup_ratio}"),
        });
    }
    if step > total_steps {
        return Err(Error::InvalidArgument {
            op: "lr_at",
            detail: format!("step {step} exceeds total_steps {total_steps}"),
        });
    }
    if total_steps == 0 {
        return Ok(0.0);
    }
    let warmup = (warmup_ratio * total_steps as f64).ceil() as usize;
    let warmup = warmup.max(1);
    if step <= warmup {
        return Ok(peak * step as f64 / warmup as f64);
    }
    let span = (total_steps - warmup) as f64;
    let t = (step - warmup) as f64 / span;
    Ok(peak * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}
