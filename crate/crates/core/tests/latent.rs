use nalgebra::{DVector, Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_rom::latent::*;
use tactile_rom::mpm::*;
use tactile_rom::rom::{Autoencoder, AutoencoderArch, Checkpoint, NormStats, CHANNELS};

fn toy_config() -> SimConfig {
    let mut c = SimConfig::with_fitted_grid([6e-3, 6e-3, 2e-3], 1e-3, [4, 4, 2], 2, 4);
    c.indenter = Indenter {
        shape: IndenterShape::Sphere { radius: 2e-3 },
        ..Indenter::default()
    };
    c.press.depth = 0.2e-3;
    c.press.speed = 0.05;
    c.press.hold_time = 2e-3;
    c.press.frame_interval = 1e-3;
    c.damping = 1000.0;
    c
}

/// Stats that map unit decoder outputs to ~10 µm displacements and F within 10⁻³ of I.
fn toy_stats() -> NormStats {
    let mut stats = NormStats::default();
    for c in 0..CHANNELS {
        stats.scale[c] = if c < 3 { 1e-5 } else { 1e-3 };
    }
    for d in [3, 7, 11] {
        stats.mean[d] = 1.0;
    }
    stats
}

fn toy_model(particles: usize, latent: usize, seed: u64) -> Autoencoder<f64> {
    let arch = AutoencoderArch {
        input_dim: CHANNELS * particles,
        hidden: vec![8],
        latent,
        output_dim: CHANNELS * particles,
    };
    Autoencoder::new(arch, seed).unwrap()
}

struct Scene {
    config: SimConfig,
    rest: Vec<Vector3<f64>>,
    mass: Vec<f64>,
    volume0: Vec<f64>,
}

fn scene() -> Scene {
    let config = toy_config().refined(0.5e-3, [8, 8, 4]);
    let state = FullState::seed(&config, 0);
    Scene {
        rest: state.positions(),
        mass: state.particles.iter().map(|p| p.mass).collect(),
        volume0: state.particles.iter().map(|p| p.volume0).collect(),
        config,
    }
}

fn rest_raw(n: usize) -> Vec<f64> {
    let mut q = vec![0.0; CHANNELS * n];
    for p in 0..n {
        for d in [3, 7, 11] {
            q[CHANNELS * p + d] = 1.0;
        }
    }
    q
}

/// Sphere pressed 0.1 mm into the top face.
fn pressing_pose(config: &SimConfig) -> Pose {
    let c = config.elastomer_center();
    Pose {
        position: Vector3::new(c.x + 0.3e-3, c.y, config.top_z() + 2e-3 - 0.1e-3),
        orientation: UnitQuaternion::identity(),
    }
}

fn context<'a>(s: &'a Scene, model: &'a Autoencoder<f64>, stats: &'a NormStats, q_inertial: Vec<f64>, dt: f64, pose: Pose) -> LatentObjectiveContext<'a> {
    LatentObjectiveContext {
        q_inertial,
        mass: &s.mass,
        volume0: &s.volume0,
        rest: &s.rest,
        dt,
        config: &s.config,
        pose,
        model,
        stats,
        energy_scale: default_energy_scale(&s.config),
    }
}

#[test]
fn inertial_target_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 5;
    let q: Vec<f64> = (0..CHANNELS * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let zero = vec![Vector3::zeros(); n];
    assert_eq!(inertial_target(&q, &zero, 1e-3, &Vector3::zeros()).unwrap(), q);

    let v: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen())).collect();
    let g = Vector3::new(0.0, 0.0, -9.81);
    let dt = 2e-3;
    let out = inertial_target(&q, &v, dt, &g).unwrap();
    for p in 0..n {
        for c in 0..CHANNELS {
            let i = CHANNELS * p + c;
            let expected = if c < 3 { q[i] + dt * v[p][c] + dt * dt * g[c] } else { q[i] };
            assert!((out[i] - expected).abs() <= 1e-15 * expected.abs().max(1.0));
        }
    }
    assert!(matches!(
        inertial_target(&q[1..], &v, dt, &g),
        Err(LatentError::LengthMismatch { .. })
    ));
}

#[test]
fn objective_vanishes_when_decoder_returns_the_inertial_rest_state() {
    let s = scene();
    let mut model = toy_model(s.rest.len(), 3, 1);
    model.decoder.params_mut().fill(0.0);
    let stats = toy_stats();
    let far = Pose {
        position: Vector3::new(0.0, 0.0, 1.0),
        orientation: UnitQuaternion::identity(),
    };
    let ctx = context(&s, &model, &stats, rest_raw(s.rest.len()), 1e-3, far);
    let e = latent_objective(&DVector::from_vec(vec![0.3, -0.2, 0.5]), &ctx).unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(e.inertia, 0.0);
    assert!(e.gradient.iter().all(|g| *g == 0.0));
    assert_eq!(e.positions, s.rest);
    assert!(e.f.iter().all(|f| *f == Matrix3::identity()));
}

#[test]
fn objective_gradient_matches_central_differences() {
    let s = scene();
    let n = s.rest.len();
    let model = toy_model(n, 4, 7);
    let stats = toy_stats();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()) * 1e-3).collect();
    let q_in = inertial_target(&rest_raw(n), &v, 1e-3, &Vector3::new(0.0, 0.0, -9.81)).unwrap();
    let mut cfg = s.config.clone();
    cfg.gravity = [0.0, 0.0, -9.81];
    let s = Scene { config: cfg, ..s };
    let ctx = context(&s, &model, &stats, q_in, 1e-3, pressing_pose(&s.config));
    let z = DVector::from_iterator(4, (0..4).map(|_| rng.gen_range(-1.0..1.0)));
    let e = latent_objective(&z, &ctx).unwrap();
    assert!(e.potential.contact > 0.0, "indenter must be in contact: {:?}", e.potential);
    assert!(e.inertia > 0.0);
    let h = 1e-5;
    let scale = e.gradient.amax().max(1e-12);
    for k in 0..4 {
        let (mut zp, mut zm) = (z.clone(), z.clone());
        zp[k] += h;
        zm[k] -= h;
        let fd = (latent_objective(&zp, &ctx).unwrap().value - latent_objective(&zm, &ctx).unwrap().value) / (2.0 * h);
        let err = (fd - e.gradient[k]).abs() / scale;
        assert!(err < 1e-4, "component {k}: fd {fd:.6e} analytic {:.6e}", e.gradient[k]);
    }
}

#[test]
fn inertia_scales_with_mass_and_vanishes_for_infinite_step() {
    let s = scene();
    let n = s.rest.len();
    let model = toy_model(n, 3, 2);
    let stats = toy_stats();
    let pose = pressing_pose(&s.config);
    let z = DVector::from_vec(vec![0.1, 0.4, -0.3]);
    let base = latent_objective(&z, &context(&s, &model, &stats, rest_raw(n), 1e-3, pose)).unwrap();
    let heavy = Scene {
        mass: s.mass.iter().map(|m| 2.0 * m).collect(),
        rest: s.rest.clone(),
        volume0: s.volume0.clone(),
        config: s.config.clone(),
    };
    let doubled = latent_objective(&z, &context(&heavy, &model, &stats, rest_raw(n), 1e-3, pose)).unwrap();
    assert!((doubled.inertia - 2.0 * base.inertia).abs() <= 1e-12 * base.inertia);
    assert_eq!(doubled.potential.elastic, base.potential.elastic);
    assert_eq!(doubled.potential.contact, base.potential.contact);

    let static_ = latent_objective(&z, &context(&s, &model, &stats, rest_raw(n), f64::INFINITY, pose)).unwrap();
    assert_eq!(static_.inertia, 0.0);
    let es = default_energy_scale(&s.config);
    assert!((static_.value - base.potential.total() / es).abs() <= 1e-12 * static_.value.abs());
}

#[test]
fn inverted_decoding_is_reported_and_mapped_to_infinity() {
    let s = scene();
    let n = s.rest.len();
    let mut model = toy_model(n, 2, 5);
    model.decoder.params_mut().fill(0.0);
    let mut stats = toy_stats();
    stats.mean[3] = -1.0;
    let ctx = context(&s, &model, &stats, rest_raw(n), 1e-3, pressing_pose(&s.config));
    let z = DVector::from_vec(vec![0.0, 0.0]);
    assert!(matches!(latent_objective(&z, &ctx), Err(LatentError::Inverted(_))));
    let (v, g) = objective_or_infinity(&z, &ctx).unwrap();
    assert_eq!(v, f64::INFINITY);
    assert_eq!(g.len(), 2);
}

#[test]
fn context_validation_catches_mismatches() {
    let s = scene();
    let n = s.rest.len();
    let model = toy_model(n, 2, 5);
    let stats = toy_stats();
    let pose = pressing_pose(&s.config);
    assert!(context(&s, &model, &stats, rest_raw(n), 1e-3, pose).validate().is_ok());
    assert!(context(&s, &model, &stats, rest_raw(n - 1), 1e-3, pose).validate().is_err());
    assert!(context(&s, &model, &stats, rest_raw(n), 0.0, pose).validate().is_err());
    let small = toy_model(n - 1, 2, 5);
    assert!(context(&s, &small, &stats, rest_raw(n), 1e-3, pose).validate().is_err());
}

fn quadratic(a: &DVector<f64>) -> impl FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>), LatentError> + '_ {
    move |z| {
        let d = z - a;
        Ok((d.norm_squared(), 2.0 * d))
    }
}

#[test]
fn lbfgs_solves_an_isotropic_quadratic() {
    let a = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5, -0.25, 4.0, -3.5, 2.25]);
    let r = lbfgs_minimize(&DVector::zeros(8), &LbfgsSettings::default(), quadratic(&a)).unwrap();
    assert!((&r.z - &a).norm() < 1e-8, "distance {:.3e}", (&r.z - &a).norm());
    assert!(r.iterations <= 10);
    assert!(!r.stalled);
}

#[test]
fn lbfgs_solves_an_anisotropic_quadratic() {
    let d: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
    let a = DVector::from_fn(8, |i, _| (i as f64 - 3.0) * 0.5);
    let f = |z: &DVector<f64>| {
        let e = z - &a;
        let g = DVector::from_fn(8, |i, _| 2.0 * d[i] * e[i]);
        Ok((e.iter().zip(&d).map(|(e, d)| d * e * e).sum(), g))
    };
    let settings = LbfgsSettings {
        max_iters: 100,
        grad_tolerance: 1e-10,
        ..LbfgsSettings::default()
    };
    let r = lbfgs_minimize(&DVector::zeros(8), &settings, f).unwrap();
    assert!((&r.z - &a).norm() < 1e-9);
}

#[test]
fn lbfgs_returns_an_optimal_start_unchanged() {
    let a = DVector::from_vec(vec![0.5; 8]);
    let r = lbfgs_minimize(&a, &LbfgsSettings::default(), quadratic(&a)).unwrap();
    assert_eq!(r.iterations, 0);
    assert_eq!(r.z, a);
    assert_eq!(r.value, 0.0);
}

#[test]
fn lbfgs_rosenbrock_accepted_values_never_increase() {
    let f = |z: &DVector<f64>| {
        let (x, y) = (z[0], z[1]);
        let v = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
        let g = DVector::from_vec(vec![-2.0 * (1.0 - x) - 400.0 * x * (y - x * x), 200.0 * (y - x * x)]);
        Ok((v, g))
    };
    let settings = LbfgsSettings {
        max_iters: 200,
        grad_tolerance: 1e-8,
        ..LbfgsSettings::default()
    };
    let r = lbfgs_minimize(&DVector::from_vec(vec![-1.2, 1.0]), &settings, f).unwrap();
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!((r.z[0] - 1.0).abs() < 1e-6 && (r.z[1] - 1.0).abs() < 1e-6, "{:?}", r.z);
}

#[test]
fn lbfgs_settings_are_validated() {
    let bad = LbfgsSettings {
        c1: 1.5,
        ..LbfgsSettings::default()
    };
    let a = DVector::zeros(2);
    assert!(lbfgs_minimize(&a, &bad, quadratic(&a)).is_err());
}

fn rollout_setup(offset: [f64; 2]) -> RolloutSetup {
    let mut coarse = toy_config();
    coarse.press.offset = offset;
    coarse.dt = Some(0.9 * coarse.cfl_limit());
    let mut fine = coarse.refined(0.5e-3, [8, 8, 4]);
    fine.dt = Some(0.9 * fine.cfl_limit());
    RolloutSetup { fine, coarse, seed: 0 }
}

/// Random weights with nonzero biases, so that rest is not a trivial fixed point.
fn toy_checkpoint(particles: usize) -> Checkpoint {
    let mut model = toy_model(particles, 3, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in model.encoder.params_mut().iter_mut().chain(model.decoder.params_mut().iter_mut()) {
        *p += rng.gen_range(-0.05..0.05);
    }
    Checkpoint {
        model: model.cast(),
        stats: toy_stats(),
        metadata: serde_json::Value::Null,
    }
}

#[test]
fn rollout_without_contact_stays_at_the_settled_state() {
    let setup = rollout_setup([20e-3, 0.0]);
    let ck = toy_checkpoint(setup.fine.particle_count());
    let out = rollout(&setup, &ck, &RolloutSettings::default(), Some(4), ExecMode::Deterministic, false).unwrap();
    assert_eq!(out.reports.len(), 4);
    assert_eq!(out.fine.frames.len(), 4);
    let z0 = &out.reports[0].z;
    for rep in &out.reports[1..] {
        let dz = rep.z.iter().zip(z0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dz < 1e-6, "frame {} drifted by {dz:.3e}", rep.frame);
    }
}

#[test]
fn rollout_under_contact_is_deterministic_and_descends() {
    let setup = rollout_setup([0.0, 0.0]);
    let ck = toy_checkpoint(setup.fine.particle_count());
    let settings = RolloutSettings::default();
    let a = rollout(&setup, &ck, &settings, Some(6), ExecMode::Deterministic, false).unwrap();
    let b = rollout(&setup, &ck, &settings, Some(6), ExecMode::Deterministic, false).unwrap();
    assert_eq!(a.reports, b.reports);
    // Contact begins during the second frame and the indenter keeps moving.
    assert!(a.reports[1].objective <= a.reports[1].warm_objective);
    for rep in &a.reports[2..] {
        assert!(rep.objective < rep.warm_objective, "frame {}: {rep:?}", rep.frame);
        assert!(rep.iterations > 0);
    }
    assert!(a.reports.iter().all(|r| r.wall_ms == 0.0));
    let dir = tempfile::tempdir().unwrap();
    write_rollout(dir.path(), &a).unwrap();
    for f in ["rollout.traj", "coarse.traj", "rollout.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn rollout_rejects_mismatched_checkpoint() {
    let setup = rollout_setup([0.0, 0.0]);
    let ck = toy_checkpoint(setup.fine.particle_count() - 1);
    assert!(rollout(&setup, &ck, &RolloutSettings::default(), Some(2), ExecMode::Deterministic, false).is_err());
}

#[test]
fn lbfgs_result_is_reproducible() {
    let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let z0 = DVector::zeros(3);
    let r1 = lbfgs_minimize(&z0, &LbfgsSettings::default(), quadratic(&a)).unwrap();
    let r2 = lbfgs_minimize(&z0, &LbfgsSettings::default(), quadratic(&a)).unwrap();
    assert_eq!(r1.z, r2.z);
    assert_eq!(r1.trace, r2.trace);
}
