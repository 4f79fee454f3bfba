use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::error::{domain_err, Result};
use crate::renderer::VisibilitySource;

/// Optimization settings. Defaults follow the full-scale setup; desk
/// presets override most of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_rays: usize,
    pub total_iters: u64,
    /// Weight of the visibility term.
    pub mu: f64,
    pub seed: u64,
    /// Iterations between checkpoints (0 keeps only the final one).
    pub checkpoint_every: u64,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Stratified samples per training ray.
    pub n_samples: usize,
    /// SH integration directions per iteration.
    pub k_dirs: usize,
    /// Environment shadow directions per iteration.
    pub env_dirs: usize,
    /// Ray samples per ray that become visibility training pairs.
    pub vis_samples_per_ray: usize,
    /// Quadrature points of the visibility target.
    pub vis_target_steps: usize,
    /// Shadow visibility used inside the render term. With `Oracle` the
    /// shadow transmittance is marched through the learned density and
    /// differentiated with respect to it.
    pub visibility_source: VisibilitySource,
    /// Jittered density samples per shadow segment in `Oracle` mode.
    pub shadow_steps: usize,
    pub literal_estimator: bool,
    pub adam: AdamConfig,
    /// Iterations between metrics rows.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_rays: 1200,
            total_iters: 200_000,
            mu: 0.1,
            seed: 0,
            checkpoint_every: 10_000,
            lr_start: 1e-4,
            lr_end: 1e-5,
            n_samples: 64,
            k_dirs: 64,
            env_dirs: 64,
            vis_samples_per_ray: 64,
            vis_target_steps: 64,
            visibility_source: VisibilitySource::Learned,
            shadow_steps: 16,
            literal_estimator: false,
            adam: AdamConfig::default(),
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_rays == 0 {
            return Err(domain_err!("batch_rays must be >= 1"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(domain_err!("mu must be >= 0"));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(domain_err!("learning rates must be positive"));
        }
        for (name, v) in [
            ("n_samples", self.n_samples),
            ("k_dirs", self.k_dirs),
            ("env_dirs", self.env_dirs),
            ("vis_target_steps", self.vis_target_steps),
            ("shadow_steps", self.shadow_steps),
        ] {
            if v == 0 {
                return Err(domain_err!("{name} must be >= 1"));
            }
        }
        if self.log_every == 0 {
            return Err(domain_err!("log_every must be >= 1"));
        }
        Ok(())
    }
}
