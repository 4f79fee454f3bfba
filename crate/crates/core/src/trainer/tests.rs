use super::*;
use crate::autodiff::{grad_check, LossProbe, ParamSet};
use crate::camera::Camera;
use crate::error::Error;
use crate::fields::{NetworkConfig, NetworkSet};
use crate::image::HdrImage;
use crate::light::{EnvLight, LightCondition};
use crate::mathkit::{Direction, RngStream, Vec3};
use crate::renderer::VisibilitySource;

fn tiny() -> NetworkConfig {
    NetworkConfig {
        l_max: 2,
        pos_bands: 3,
        feature_layers: 2,
        feature_width: 16,
        property_width: 8,
        sh_layers: 2,
        sh_width: 8,
        vis_layers: 2,
        vis_width: 8,
        ..Default::default()
    }
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        batch_rays: 4,
        total_iters: 6,
        n_samples: 8,
        k_dirs: 8,
        env_dirs: 4,
        vis_samples_per_ray: 2,
        vis_target_steps: 8,
        checkpoint_every: 2,
        log_every: 1,
        ..Default::default()
    }
}

/// Rays through the unit cube under two light conditions, one with the sky.
fn records() -> Vec<RayRecord> {
    (0..8)
        .map(|k| {
            let x = -0.3 + 0.2 * (k % 4) as f64;
            let y = if k < 4 { -0.15 } else { 0.2 };
            let origin = Vec3::new(x, y, -3.0);
            let dir = Direction::normalize(Vec3::new(0.05 * x, 0.02, 1.0)).unwrap();
            let light = if k % 2 == 0 {
                LightCondition::point(Vec3::new(2.0, 2.5, -3.0), 60.0)
            } else {
                LightCondition {
                    position: Vec3::new(-3.0, 1.0, 2.0),
                    intensity: 30.0,
                    env: true,
                }
            };
            RayRecord {
                origin,
                dir,
                radiance: Vec3::new(0.2, 0.3, 0.4) * (1.0 + k as f64 * 0.3),
                light,
                image: (k % 2) as u32,
            }
        })
        .collect()
}

fn set() -> TrainingSet {
    TrainingSet {
        records: records(),
        env: EnvLight::default(),
        background: Vec3::new(0.05, 0.05, 0.1),
    }
}

fn batch_for<T: crate::autodiff::Real>(net: &NetworkSet<T>, recs: &[RayRecord], cfg: &TrainConfig, seed: u64) -> PreparedBatch {
    let picks: Vec<&RayRecord> = recs.iter().collect();
    let s = set();
    prepare_records(net, &picks, &s.env, s.background, cfg, &mut RngStream::new(seed, 0)).unwrap()
}

/// Randomizes biases so that rectifiers and SH clamps take both branches.
fn jitter(net: &mut NetworkSet<f64>, seed: u64) {
    let mut rng = RngStream::new(seed, 99);
    for b in &mut net.params.blocks {
        if b.name.ends_with(".b") {
            b.value.iter_mut().for_each(|v| *v += rng.uniform_range(-0.2, 0.2));
        }
    }
}

#[test]
fn loss_examples() {
    let one = [Vec3::splat(1.0)];
    assert_eq!(render_loss(&one, &one), 0.0);
    assert!((render_loss(&one, &[Vec3::ZERO]) - 0.75).abs() < 1e-15);
    assert!((visibility_loss(&[0.8], &[0.3], 0.1) - 0.025).abs() < 1e-15);
    assert_eq!(visibility_loss(&[0.8], &[0.3], 0.0), 0.0);
}

#[test]
fn visibility_target_examples() {
    let mut net = NetworkSet::<f64>::init(tiny(), 1).unwrap();
    let (w, b) = *net.property.layers.last().unwrap();
    net.params.get_mut(w).value.fill(0.0);
    net.params.get_mut(b).value[0] = -1e4;
    let d = Direction::new(Vec3::new(1.0, 0.0, 0.0)).unwrap();
    assert_eq!(visibility_target(&net, Vec3::ZERO, d, 10.0, 16).unwrap(), 1.0);
    net.params.get_mut(b).value[0] = 2.0f64.exp_m1().ln();
    let t = visibility_target(&net, Vec3::new(-0.5, 0.0, 0.0), d, 1.0, 64).unwrap();
    assert!((t - 0.135).abs() < 1e-3, "{t}");
}

fn grads(net: &NetworkSet<f64>) -> Vec<Vec<f64>> {
    net.params.blocks.iter().map(|b| b.grad.clone()).collect()
}

#[test]
fn gradient_stop_topology() {
    for source in [VisibilitySource::Learned, VisibilitySource::Oracle] {
        let cfg = TrainConfig {
            visibility_source: source,
            ..small_cfg()
        };
        let mut net = NetworkSet::<f64>::init(tiny(), 3).unwrap();
        jitter(&mut net, 3);
        let batch = batch_for(&net, &records(), &cfg, 7);
        assert!(!batch.vis_pairs.is_empty());
        let vis: Vec<usize> = net.visibility_blocks().iter().map(|p| p.0).collect();

        let render = Terms {
            render: true,
            visibility: false,
        };
        evaluate(&mut net, &batch, render, true).unwrap();
        let gr = grads(&net);
        for (i, g) in gr.iter().enumerate() {
            if vis.contains(&i) {
                assert!(g.iter().all(|&x| x == 0.0), "render term reached {}", net.params.blocks[i].name);
            }
        }
        assert!(gr.iter().enumerate().any(|(i, g)| !vis.contains(&i) && g.iter().any(|&x| x != 0.0)));

        let only_vis = Terms {
            render: false,
            visibility: true,
        };
        evaluate(&mut net, &batch, only_vis, true).unwrap();
        let gv = grads(&net);
        for (i, g) in gv.iter().enumerate() {
            if !vis.contains(&i) {
                assert!(g.iter().all(|&x| x == 0.0), "visibility term reached {}", net.params.blocks[i].name);
            }
        }
        assert!(vis.iter().any(|&i| gv[i].iter().any(|&x| x != 0.0)));

        evaluate(&mut net, &batch, Terms::BOTH, true).unwrap();
        let gb = grads(&net);
        for i in 0..gb.len() {
            let expect = if vis.contains(&i) { &gv[i] } else { &gr[i] };
            assert_eq!(&gb[i], expect, "block {}", net.params.blocks[i].name);
        }
    }
}

#[test]
fn full_pipeline_gradient_check() {
    for (sh_enabled, source) in [
        (true, VisibilitySource::Learned),
        (false, VisibilitySource::Learned),
        (true, VisibilitySource::Oracle),
    ] {
        let cfg = TrainConfig {
            visibility_source: source,
            shadow_steps: 4,
            ..small_cfg()
        };
        let ncfg = NetworkConfig { sh_enabled, ..tiny() };
        let mut net = NetworkSet::<f64>::init(ncfg.clone(), 11).unwrap();
        jitter(&mut net, 11);
        let recs = &records()[..4];
        let mut with_env = recs.to_vec();
        with_env[0].light.env = true;
        let batch = batch_for(&net, &with_env, &cfg, 5);
        let ev = evaluate(&mut net, &batch, Terms::BOTH, true).unwrap();
        assert!(ev.render > 0.0 && ev.visibility > 0.0);
        let analytic = net.params.clone();
        let probe = |q: &ParamSet<f64>| {
            let mut n = NetworkSet::from_params(ncfg.clone(), q.clone()).unwrap();
            let e = evaluate(&mut n, &batch, Terms::BOTH, false).unwrap();
            LossProbe {
                loss: e.loss,
                signature: e.signature,
            }
        };
        let r = grad_check(&net.params, &analytic, probe, 1e-6, 1e-7, &|_, _| true);
        assert!(r.max_rel_error < 1e-3, "sh {sh_enabled} {source:?}: {r:?} at {:?}", r.worst.map(|(b, _)| &net.params.blocks[b].name));
        assert!(r.checked > 500, "{r:?}");
    }
}

#[test]
fn evaluation_signature_tracks_branches() {
    let mut net = NetworkSet::<f64>::init(tiny(), 2).unwrap();
    let batch = batch_for(&net, &records(), &small_cfg(), 1);
    let a = evaluate(&mut net, &batch, Terms::BOTH, false).unwrap();
    let b = evaluate(&mut net, &batch, Terms::BOTH, true).unwrap();
    assert_eq!(a.signature, b.signature);
    assert_eq!(a.loss, b.loss);
}

#[test]
fn compute_loss_is_nonnegative() {
    let mut net = NetworkSet::<f32>::init(tiny(), 4).unwrap();
    let s = set();
    let e = compute_loss(&mut net, &s.records, &s.env, s.background, &small_cfg(), &mut RngStream::new(0, 0)).unwrap();
    assert!(e.render > 0.0 && e.visibility >= 0.0);
    assert_eq!(e.loss, e.render + e.visibility);
    assert_eq!(e.predictions.len(), s.records.len());
}

#[test]
fn training_is_deterministic() {
    let a = train(&set(), tiny(), &small_cfg(), &RunDir::default()).unwrap();
    let b = train(&set(), tiny(), &small_cfg(), &RunDir::default()).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.net.params, b.net.params);
    assert_eq!(a.metrics.len(), 6);
    assert!(a.metrics.iter().all(|m| m.render_loss.is_finite() && m.grad_norm > 0.0));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let whole = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    let cfg = small_cfg();
    let full = train(&set(), tiny(), &cfg, &RunDir { dir: Some(whole.path().into()), ..Default::default() }).unwrap();
    let first = train(
        &set(),
        tiny(),
        &cfg,
        &RunDir {
            dir: Some(split.path().into()),
            resume: true,
            stop_after: Some(4),
        },
    )
    .unwrap();
    assert_eq!(first.metrics.len(), 4);
    let rest = train(
        &set(),
        tiny(),
        &cfg,
        &RunDir {
            dir: Some(split.path().into()),
            resume: true,
            stop_after: None,
        },
    )
    .unwrap();
    assert_eq!(rest.metrics[0].iteration, 4);
    let joined: Vec<StepMetrics> = first.metrics.iter().chain(&rest.metrics).copied().collect();
    assert_eq!(joined, full.metrics);
    assert_eq!(rest.net.params, full.net.params);
    let (loaded, ck) = crate::fields::load_network(&whole.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck.iteration, 6);
    let values = |p: &ParamSet<f32>| p.blocks.iter().map(|b| b.value.clone()).collect::<Vec<_>>();
    assert_eq!(values(&loaded.params), values(&full.net.params));
    let log = std::fs::read_to_string(split.path().join(METRICS_FILE)).unwrap();
    assert_eq!(log.lines().count(), 1 + 6);
    assert!(!split.path().join(LOCK_FILE).exists());
}

#[test]
fn lock_file_blocks_second_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(LOCK_FILE), "1").unwrap();
    let err = train(
        &set(),
        tiny(),
        &small_cfg(),
        &RunDir {
            dir: Some(dir.path().into()),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::State(_)), "{err}");
}

#[test]
fn without_visibility_weight_the_visibility_net_is_untouched() {
    let cfg = TrainConfig { mu: 0.0, ..small_cfg() };
    let init = NetworkSet::<f32>::init(tiny(), cfg.seed).unwrap();
    let out = train(&set(), tiny(), &cfg, &RunDir::default()).unwrap();
    for id in init.visibility_blocks() {
        assert_eq!(init.params.get(id).value, out.net.params.get(id).value);
    }
    assert_ne!(init.params, out.net.params);
}

#[test]
fn mismatched_views_are_rejected() {
    let cam = Camera::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), 40.0, 4, 4).unwrap();
    let view = TrainingView {
        camera: cam.clone(),
        light: LightCondition::point(Vec3::new(3.0, 0.0, 0.0), 100.0),
        image: HdrImage::new(4, 3),
    };
    let err = TrainingSet::from_views(&[view], EnvLight::default(), Vec3::ZERO).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    let ok = TrainingView {
        camera: cam,
        light: LightCondition::point(Vec3::new(3.0, 0.0, 0.0), 100.0),
        image: HdrImage::new(4, 4),
    };
    assert_eq!(TrainingSet::from_views(&[ok], EnvLight::default(), Vec3::ZERO).unwrap().records.len(), 16);
}
