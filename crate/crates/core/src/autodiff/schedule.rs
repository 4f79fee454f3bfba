/// Exponential decay `lr0 * (lr1 / lr0)^min(iteration / total, 1)`.
pub fn lr_at(iteration: u64, total: u64, lr0: f64, lr1: f64) -> f64 {
    let f = if total == 0 {
        1.0
    } else {
        (iteration as f64 / total as f64).min(1.0)
    };
    lr0 * (lr1 / lr0).powf(f)
}

/// Full-scale schedule: 1e-4 to 1e-5 over 200k iterations.
pub fn default_lr_at(iteration: u64) -> f64 {
    lr_at(iteration, 200_000, 1e-4, 1e-5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert!((default_lr_at(0) - 1e-4).abs() < 1e-18);
        assert!((default_lr_at(200_000) - 1e-5).abs() < 1e-18);
        assert!((default_lr_at(100_000) - 3.1623e-5).abs() < 1e-9);
        assert_eq!(default_lr_at(400_000), default_lr_at(200_000));
    }
}
