//! Named bundles of scene, dataset protocol, networks and training settings.

use crate::error::{Error, Result};
use crate::evalkit::DatasetConfig;
use crate::fields::NetworkConfig;
use crate::mathkit::Vec3;
use crate::media::{MediumField, SceneDescription};
use crate::renderer::{MarchConfig, VisibilitySource};
use crate::trainer::TrainConfig;

pub const PRESET_NAMES: [&str; 4] = ["sphere-desk", "sphere-a95", "sphere-a95-nosh", "paper-scale"];

#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub scene: SceneDescription,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Settings used to render the trained model for evaluation.
    pub render: MarchConfig,
}

/// Homogeneous unit sphere at the origin.
pub fn sphere_scene(sigma: f64, albedo: f64, g: f64) -> Result<SceneDescription> {
    SceneDescription::single(MediumField::homogeneous_sphere(1.0, sigma, Vec3::splat(albedo), g)?)
}

fn desk_dataset() -> DatasetConfig {
    DatasetConfig {
        train: 20,
        val: 2,
        test: 4,
        width: 64,
        height: 64,
        spp: 256,
        ..Default::default()
    }
}

fn desk_network() -> NetworkConfig {
    NetworkConfig {
        l_max: 5,
        feature_layers: 4,
        feature_width: 64,
        property_width: 32,
        sh_layers: 4,
        sh_width: 64,
        vis_layers: 3,
        vis_width: 64,
        ..Default::default()
    }
}

fn desk_train() -> TrainConfig {
    TrainConfig {
        batch_rays: 256,
        total_iters: 5000,
        checkpoint_every: 1000,
        lr_start: 1e-3,
        lr_end: 1e-4,
        n_samples: 32,
        k_dirs: 32,
        env_dirs: 16,
        vis_samples_per_ray: 4,
        vis_target_steps: 32,
        log_every: 100,
        visibility_source: VisibilitySource::Oracle,
        shadow_steps: 8,
        ..Default::default()
    }
}

fn desk_render() -> MarchConfig {
    MarchConfig {
        n_samples: 64,
        k_dirs: 64,
        ..Default::default()
    }
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<Preset> {
    let p = match name {
        "sphere-desk" => Preset {
            name: "sphere-desk",
            scene: sphere_scene(2.0, 0.8, 0.0)?,
            dataset: desk_dataset(),
            network: desk_network(),
            train: desk_train(),
            render: desk_render(),
        },
        "sphere-a95" | "sphere-a95-nosh" => {
            let nosh = name == "sphere-a95-nosh";
            Preset {
                name: if nosh { "sphere-a95-nosh" } else { "sphere-a95" },
                scene: sphere_scene(2.0, 0.95, 0.0)?,
                dataset: desk_dataset(),
                network: NetworkConfig {
                    sh_enabled: !nosh,
                    ..desk_network()
                },
                train: desk_train(),
                render: desk_render(),
            }
        }
        "paper-scale" => Preset {
            name: "paper-scale",
            scene: sphere_scene(2.0, 0.8, 0.0)?,
            dataset: DatasetConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            render: MarchConfig::default(),
        },
        other => {
            return Err(Error::Usage(format!(
                "unknown preset '{other}' (one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for n in PRESET_NAMES {
            let p = preset(n).unwrap();
            assert_eq!(p.name, n);
            p.dataset.validate().unwrap();
            p.network.validate().unwrap();
            p.train.validate().unwrap();
            p.render.validate().unwrap();
            p.scene.validate().unwrap();
        }
        assert!(matches!(preset("nope"), Err(Error::Usage(_))));
    }

    #[test]
    fn ablation_pair_differs_only_in_the_sh_head() {
        let (a, b) = (preset("sphere-a95").unwrap(), preset("sphere-a95-nosh").unwrap());
        assert!(a.network.sh_enabled && !b.network.sh_enabled);
        assert_eq!(NetworkConfig { sh_enabled: true, ..b.network }, a.network);
        assert_eq!(a.train, b.train);
        assert_eq!(a.scene, b.scene);
    }
}
