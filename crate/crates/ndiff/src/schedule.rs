//! Learning-rate schedules.

/// Cosine decay from `lr_max` at step 0 to `lr_min` at `total_steps`.
///
/// Monotone nonincreasing in `step`; callers clamp `step` to the valid
/// range as a contract (`0 <= step <= total_steps`, `lr_min <= lr_max`).
pub fn cosine_lr(step: usize, total_steps: usize, lr_max: f64, lr_min: f64) -> f64 {
    debug_assert!(step <= total_steps);
    debug_assert!(lr_min <= lr_max);
    if total_steps == 0 {
        return lr_max;
    }
    let phase = std::f64::consts::PI * step as f64 / total_steps as f64;
    lr_min + 0.5 * (1.0 + phase.cos()) * (lr_max - lr_min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(cosine_lr(0, 100, 5e-3, 1e-4), 5e-3);
        let end = cosine_lr(100, 100, 5e-3, 1e-4);
        assert!((end - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn midpoint_is_arithmetic_mean() {
        // cos(π/2) = 0 ⇒ lr = lr_min + (lr_max − lr_min)/2.
        let lr = cosine_lr(50, 100, 2e-3, 4e-4);
        assert!((lr - (2e-3 + 4e-4) / 2.0).abs() < 1e-18);
    }

    #[test]
    fn monotone_nonincreasing() {
        let mut prev = f64::INFINITY;
        for s in 0..=250 {
            let lr = cosine_lr(s, 250, 5e-3, 1e-4);
            assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }
}
