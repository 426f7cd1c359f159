use lomap_core::denoiser::{FnDenoiser, GaussianMixtureDenoiser, GmmComponent, GmmSpec, NoisePredictor};
use lomap_core::diffusion::{forward_diffuse, tweedie_denoise};
use lomap_core::io::{decode_dataset, encode_dataset, ArtifactMeta};
use lomap_core::lomap::{local_basis, AnnIndex, LomapContext, NeighborNoise, ProjectionMode, ProjectionSchedule, RetrievalKey};
use lomap_core::planner::{Constraint, Planner, PlannerConfig};
use lomap_core::synthworld::{
    generate_offline_dataset, sample_subspace_dataset, wall_collision_oracle, DatasetConfig, EnvParams, MazeSpec,
    OfflineDataset, PointMassEnv, RealismReference, SubspaceSpec,
};
use lomap_core::{NoiseSchedule, RowMatrix, ScheduleKind, Trajectory, TrajectoryLayout};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

fn rows(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(finite(-5.0, 5.0), d), n)
}

fn cosine(steps: usize) -> NoiseSchedule {
    NoiseSchedule::build(steps, ScheduleKind::Cosine, 1e-4, 0.999, false).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedules_are_monotone(steps in 1usize..200, linear in any::<bool>(), lo in 1e-5f64..1e-3, span in 1e-3f64..0.5) {
        let kind = if linear { ScheduleKind::Linear } else { ScheduleKind::Cosine };
        // forced: short or gentle schedules need not reach a near-zero terminal alpha_bar
        let s = NoiseSchedule::build(steps, kind, lo, lo + span, true).unwrap();
        prop_assert_eq!(s.alpha_bar(0), 1.0);
        for i in 1..=steps {
            prop_assert!(s.beta(i) > 0.0 && s.beta(i) < 1.0);
            prop_assert!(s.alpha_bar(i) < s.alpha_bar(i - 1));
        }
    }

    #[test]
    fn oracle_round_trip_is_exact(x0 in prop::collection::vec(finite(-10.0, 10.0), 1..12), step in 1usize..=20, seed in any::<u64>()) {
        let s = cosine(20);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = lomap_core::diffusion::standard_normal(&mut rng, x0.len());
        let xi = forward_diffuse(&x0, step, &eps, &s).unwrap();
        let e = eps.clone();
        let oracle = FnDenoiser::new(x0.len(), move |_, _| e.clone());
        let back = tweedie_denoise(&xi, step, &oracle, &s).unwrap();
        let scale = x0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (b, x) in back.iter().zip(&x0) {
            prop_assert!((b - x).abs() <= 1e-9 * scale, "{} vs {}", b, x);
        }
    }

    #[test]
    fn identical_mixture_components_match_single(mean in prop::collection::vec(finite(-3.0, 3.0), 1..6), var in 0.05f64..3.0, w in 0.05f64..0.95, step in 1usize..=20, seed in any::<u64>()) {
        let s = cosine(20);
        let single = GaussianMixtureDenoiser::new(GmmSpec::single(mean.clone(), var).unwrap(), s.clone());
        let comps = vec![
            GmmComponent { weight: w, mean: mean.clone(), var },
            GmmComponent { weight: 1.0 - w, mean: mean.clone(), var },
        ];
        let mixed = GaussianMixtureDenoiser::new(GmmSpec::new(comps).unwrap(), s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = lomap_core::diffusion::standard_normal(&mut rng, mean.len());
        let a = single.predict_noise(&x, step).unwrap();
        let b = mixed.predict_noise(&x, step).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn bases_are_orthonormal_and_contracting(pts in rows(2..25, 6), x in prop::collection::vec(finite(-10.0, 10.0), 6), lambda in 0.5f64..=1.0) {
        let m = RowMatrix::from_rows(&pts).unwrap();
        for mode in [ProjectionMode::Affine, ProjectionMode::Literal] {
            let b = local_basis(&m, lambda, mode).unwrap();
            prop_assert!(b.orthonormality_error() < 1e-8);
            let p = b.project(&x).unwrap();
            let pp = b.project(&p).unwrap();
            for (u, v) in p.iter().zip(&pp) {
                prop_assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()));
            }
            let mean = b.mean().to_vec();
            prop_assert!(norm(&sub(&p, &mean)) <= norm(&sub(&x, &mean)) * (1.0 + 1e-12) + 1e-12);
            prop_assert!(b.captured_variance() >= lambda - 1e-12 || b.rank() == b.dim().min(pts.len()));
        }
    }

    #[test]
    fn affine_fixed_points(pts in rows(3..20, 5), w in prop::collection::vec(finite(-3.0, 3.0), 5)) {
        let m = RowMatrix::from_rows(&pts).unwrap();
        let b = local_basis(&m, 0.9, ProjectionMode::Affine).unwrap();
        let u = b.basis();
        let coef = DMatrix::from_fn(u.ncols(), 1, |i, _| w[i]);
        let off = u * coef;
        let x: Vec<f64> = (0..5).map(|j| b.mean()[j] + off[(j, 0)]).collect();
        let p = b.project(&x).unwrap();
        for (a, c) in p.iter().zip(&x) {
            prop_assert!((a - c).abs() <= 1e-10 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn rank_grows_with_lambda(pts in rows(3..20, 6), l1 in 0.3f64..1.0, l2 in 0.3f64..1.0) {
        let m = RowMatrix::from_rows(&pts).unwrap();
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        for mode in [ProjectionMode::Affine, ProjectionMode::Literal] {
            let a = local_basis(&m, lo, mode).unwrap();
            let b = local_basis(&m, hi, mode).unwrap();
            prop_assert!(a.rank() <= b.rank());
        }
    }

    #[test]
    fn full_probe_matches_exact_scan(pts in rows(20..120, 4), n_list in 1usize..10, k in 1usize..8, q in prop::collection::vec(finite(-5.0, 5.0), 4), seed in any::<u64>()) {
        let n_list = n_list.min(pts.len());
        let idx = AnnIndex::build(Arc::new(RowMatrix::from_rows(&pts).unwrap()), n_list, seed).unwrap();
        prop_assert_eq!(idx.knn(&q, k, n_list).unwrap(), idx.exact_knn(&q, k).unwrap());
    }

    #[test]
    fn collision_verdict_survives_subdivision(pts in prop::collection::vec((0.0f64..9.0, 0.0f64..9.0), 2..8), cuts in 1usize..5) {
        let maze = MazeSpec::four_rooms();
        let path: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let mut fine = vec![path[0]];
        for w in path.windows(2) {
            for c in 1..=cuts {
                let t = c as f64 / cuts as f64;
                fine.push(if c == cuts { w[1] } else { [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])] });
            }
        }
        prop_assert_eq!(maze.path_collides(&path), maze.path_collides(&fine));
        let layout = TrajectoryLayout::new(path.len(), 4, 0).unwrap();
        let traj = Trajectory::new(layout, path.iter().flat_map(|p| [p[0], p[1], 0.0, 0.0]).collect()).unwrap();
        prop_assert_eq!(wall_collision_oracle(&traj, &maze), maze.path_collides(&path));
    }

    #[test]
    fn rows_inside_some_neighbourhood_score_at_least_one(pts in rows(4..30, 3), k in 2usize..4) {
        prop_assume!(pts.len() > k);
        let m = RowMatrix::from_rows(&pts).unwrap();
        let reference = RealismReference::new(m.clone(), k).unwrap();
        let radii = reference.radii();
        for i in 0..m.rows() {
            let covered = (0..m.rows()).any(|j| {
                j != i && radii[j] > 0.0 && norm(&sub(m.row(i), m.row(j))) <= radii[j]
            });
            if covered {
                prop_assert!(reference.score_excluding(m.row(i), Some(i)).unwrap() >= 1.0);
            }
        }
    }

    #[test]
    fn dataset_bytes_round_trip(n in 1usize..6, horizon in 1usize..5, sd in 1usize..4, ad in 0usize..3, seed in any::<u64>(), hash in any::<[u8; 32]>()) {
        let layout = TrajectoryLayout::new(horizon, sd, ad).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // the file stores f32
        let f32s = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x as f32 as f64).collect() };
        let data = f32s(lomap_core::diffusion::standard_normal(&mut rng, n * layout.dim()));
        let returns = f32s(lomap_core::diffusion::standard_normal(&mut rng, n));
        let ds = OfflineDataset::new(layout, RowMatrix::new(n, layout.dim(), data).unwrap(), returns).unwrap();
        let meta = ArtifactMeta { seed, config_hash: hash };
        let bytes = encode_dataset(&ds, &meta).unwrap();
        let (back, m2) = decode_dataset(&bytes).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(m2, meta);
        prop_assert_eq!(encode_dataset(&back, &m2).unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn plans_honour_constraints_and_seeds(seed in any::<u64>(), t in 0usize..6, state in prop::collection::vec(finite(-4.0, 4.0), 2)) {
        let s = cosine(10);
        let layout = TrajectoryLayout::new(6, 2, 1).unwrap();
        let den = FnDenoiser::new(layout.dim(), |x: &[f64], i: usize| x.iter().map(|v| 0.3 * v.sin() + 0.01 * i as f64).collect());
        let planner = Planner::new(&den, &s, layout).unwrap();
        let config = PlannerConfig {
            conditioning: vec![Constraint { t, state: state.clone() }, Constraint { t: 0, state: vec![1.0, -1.0] }],
            ..PlannerConfig::default()
        };
        let a = planner.sample(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = planner.sample(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
        prop_assert_eq!(a.state(0), &[1.0, -1.0][..]);
        if t != 0 {
            prop_assert_eq!(a.state(t), &state[..]);
        }
    }

    #[test]
    fn projected_iterates_lie_in_neighbour_span(seed in any::<u64>()) {
        let s = cosine(10);
        let layout = TrajectoryLayout::new(4, 2, 0).unwrap();
        let spec = SubspaceSpec::random(8, 2, 1.0, seed).unwrap();
        let data = Arc::new(sample_subspace_dataset(&spec, 200, seed ^ 1).unwrap());
        let ctx = LomapContext::build(data, RetrievalKey::Full, 8, 8, seed).unwrap();
        let den = FnDenoiser::new(8, |x: &[f64], _| x.iter().map(|v| 0.2 * v).collect());
        let planner = Planner::new(&den, &s, layout).unwrap().with_lomap(&ctx);
        let proj = ProjectionSchedule::new((1, 6), 10, 0.99, ProjectionMode::Affine, NeighborNoise::Fresh, 10).unwrap();
        let config = PlannerConfig { projection: Some(proj), ..PlannerConfig::default() };
        let (_, trace) = planner.sample_traced(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut checked = 0;
        for rec in &trace {
            if let Some(b) = &rec.basis {
                let x = &rec.after_projection;
                let c = DMatrix::from_column_slice(8, 1, &sub(x, b.mean()));
                let resid = &c - b.basis() * (b.basis().transpose() * &c);
                prop_assert!(resid.norm() <= 1e-8 * norm(x).max(1.0));
                checked += 1;
            }
        }
        prop_assert_eq!(checked, 6);
    }
}

#[test]
fn generated_rollouts_are_clean_and_dynamically_exact() {
    let env = PointMassEnv::new(Arc::new(MazeSpec::four_rooms()), EnvParams::default()).unwrap();
    let cfg = DatasetConfig {
        episodes: 60,
        ..DatasetConfig::default()
    };
    let ds = generate_offline_dataset(&env, &cfg, 5).unwrap();
    let plans: Vec<Trajectory> = (0..ds.len()).map(|i| ds.trajectory(i)).collect();
    assert_eq!(lomap_core::synthworld::artifact_ratio(&plans, env.maze()).unwrap(), 0.0);
    for p in &plans {
        assert_eq!(lomap_core::synthworld::dynamic_mse(p, &env).unwrap(), 0.0);
    }
}

fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = (a.transpose() * b).svd(false, false).singular_values;
    s.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0).acos()
}

/// Bases fitted to diffused neighbours of data on a 3-plane in 20-d align
/// with the plane near the clean end of a fine schedule, and less so later.
/// Coefficients are scaled so each coordinate has unit variance, as after
/// normalization.
#[test]
fn fitted_bases_recover_the_data_subspace() {
    let steps = 100;
    let s = cosine(steps);
    let spec = SubspaceSpec::random(20, 3, (20.0f64 / 3.0).sqrt(), 11).unwrap();
    let data = Arc::new(sample_subspace_dataset(&spec, 2000, 12).unwrap());
    let ctx = LomapContext::build(data.clone(), RetrievalKey::Full, 16, 16, 13).unwrap();
    let oracle = FnDenoiser::new(20, |_, _| vec![0.0; 20]);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = ProjectionSchedule::new((1, steps), 20, 0.99, ProjectionMode::Affine, NeighborNoise::Fresh, steps).unwrap();
    let mut mean_angle = |step: usize| {
        let mut total = 0.0;
        for probe in 0..20 {
            let x = forward_diffuse(data.row(probe * 97), step, &[0.0; 20], &s).unwrap();
            let b = ctx.fit_basis(&x, step, &cfg, &oracle, &s, &mut rng).unwrap();
            assert!(b.rank() >= 3, "rank {} at step {step}", b.rank());
            let lead = b.basis().columns(0, 3).into_owned();
            total += max_principal_angle(&lead, spec.basis());
        }
        total / 20.0
    };
    let angles: Vec<f64> = [1, 5, 50].into_iter().map(&mut mean_angle).collect();
    assert!(angles[0] < 0.1, "mean principal angle {} rad at step 1", angles[0]);
    assert!(angles[0] < angles[1] && angles[1] < angles[2], "angles did not shrink towards step 1: {angles:?}");
}
