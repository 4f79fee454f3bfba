use super::params::ParamSet;

/// Loss value plus a fingerprint of the non-smooth branches taken (e.g.
/// which rectifiers were active). Parameters whose `+h` and `-h`
/// evaluations disagree on the fingerprint straddle a kink and are skipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossProbe {
    pub loss: f64,
    pub signature: u64,
}

impl LossProbe {
    pub fn smooth(loss: f64) -> Self {
        Self { loss, signature: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (block, index) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Central differences with step `h` against the gradients stored in
/// `analytic`. Relative error is `|a - n| / max(|a|, |n|, floor)`. `select`
/// restricts the check to a subset of `(block, index)` entries.
pub fn grad_check(
    params: &ParamSet<f64>,
    analytic: &ParamSet<f64>,
    mut loss: impl FnMut(&ParamSet<f64>) -> LossProbe,
    h: f64,
    floor: f64,
    select: &dyn Fn(usize, usize) -> bool,
) -> GradCheckReport {
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    for b in 0..params.blocks.len() {
        for i in 0..params.blocks[b].value.len() {
            if !select(b, i) {
                continue;
            }
            let x = params.blocks[b].value[i];
            work.blocks[b].value[i] = x + h;
            let up = loss(&work);
            work.blocks[b].value[i] = x - h;
            let down = loss(&work);
            work.blocks[b].value[i] = x;
            if up.signature != down.signature {
                report.skipped_kinks += 1;
                continue;
            }
            let num = (up.loss - down.loss) / (2.0 * h);
            let ana = analytic.blocks[b].grad[i];
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(floor);
            report.checked += 1;
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((b, i));
            }
        }
    }
    report
}
