//! Learning-rate schedule: linear warmup from zero, then stepwise
//! exponential decay.

/// Piecewise schedule: `base_lr * step/warmup` on `[0, warmup)`, then
/// `base_lr * decay_rate^floor((step - warmup)/decay_every)`.
pub fn lr_schedule(step: u64, base_lr: f64, warmup_steps: u64, decay_every: u64, decay_rate: f64) -> f64 {
    assert!(warmup_steps >= 1, "warmup_steps must be >= 1");
    if step < warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    if decay_every == 0 {
        return base_lr;
    }
    let k = (step - warmup_steps) / decay_every;
    base_lr * decay_rate.powi(k as i32)
}
