use kbsc::assess::{class_correlation, cross_entropy, mse_closeness};
use kbsc::baselines::{bayclass, belclass, fuzzyclass, maxlike, train_fuzzy, train_gaussian, FuzzyTraining, TrainingSet};
use kbsc::kbsc::{band_probability, harden, joint_probability, Combine, MapKind, ProbabilityMap};
use kbsc::kriging::{predict_point, solve_weights, KrigingSystem};
use kbsc::radiometry::{dos_correct, reflectance_to_dn, CalibrationParams};
use kbsc::raster::{decode_raster, encode_raster, upscale_mean, BandStack, DataType, Geometry, RasterGrid, RasterHeader};
use kbsc::signatures::{compute_thresholds, t_quantile, ClassSamples, DfMode};
use kbsc::synth::{generate_scene, ClassSpec, Draws, SceneSpec};
use kbsc::variogram::{empirical_variogram, fit_model, range_bounds, ModelFamily, VariogramModel};
use proptest::prelude::*;

fn geom(rows: usize, cols: usize) -> Geometry {
    Geometry::new(rows, cols, 10.0, (0.0, 0.0)).unwrap()
}

fn grid(rows: usize, cols: usize, values: Vec<f64>) -> RasterGrid<f64> {
    RasterGrid::from_geometry(geom(rows, cols), values).unwrap()
}

fn family() -> impl Strategy<Value = ModelFamily> {
    prop_oneof![
        Just(ModelFamily::Spherical),
        Just(ModelFamily::Exponential),
        Just(ModelFamily::Gaussian),
    ]
}

fn model() -> impl Strategy<Value = VariogramModel<f64>> {
    (family(), 0.0..0.3f64, 0.2..2.0f64, 10.0..150.0f64)
        .prop_map(|(f, n, s, r)| VariogramModel::new(f, n, s, r).unwrap())
}

/// Distinct sample points on a 5 m lattice.
fn points(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    proptest::collection::btree_set((0u32..20, 0u32..20), 2..=max)
        .prop_map(|s| s.into_iter().map(|(a, b)| [a as f64 * 5.0, b as f64 * 5.0]).collect())
}

/// Random two-class, three-band scene with pixels drawn around class means.
fn labeled_stack(seed: u64) -> (BandStack<f64>, TrainingSet) {
    let mut rng = Draws::new(seed, 0);
    let n = 60;
    let means = [[40.0, 80.0, 55.0], [70.0, 50.0, 65.0]];
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let bands: Vec<RasterGrid<f64>> = (0..3)
        .map(|b| grid(6, 10, labels.iter().map(|&c| means[c][b] + 8.0 * rng.normal()).collect()))
        .collect();
    let stack = BandStack::new(bands, None).unwrap();
    let training = TrainingSet {
        classes: vec!["a".into(), "b".into()],
        pixels: (0..n).collect(),
        labels,
    };
    (stack, training)
}

fn normalized_rows(seed: u64, n: usize, classes: usize) -> Vec<ProbabilityMap<f64>> {
    let mut rng = Draws::new(seed, 0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..classes).map(|_| 0.01 + rng.uniform()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    (0..classes)
        .map(|c| ProbabilityMap::new(grid(1, n, rows.iter().map(|r| r[c]).collect()), format!("c{c}"), MapKind::Joint))
        .collect()
}

fn scene_spec(seed: u64, sd: f64, noise: f64) -> SceneSpec {
    SceneSpec {
        seed,
        fine_rows: 24,
        fine_cols: 24,
        fine_pixel_size: 10.0,
        coarsen_factor: 4,
        classes: vec![
            ClassSpec {
                label: "wheat".into(),
                band_means: vec![60.0, 90.0],
                band_sds: vec![sd, sd],
                target_fraction: 0.4,
            },
            ClassSpec {
                label: "mustard".into(),
                band_means: vec![90.0, 60.0],
                band_sds: vec![sd, sd],
                target_fraction: 0.6,
            },
        ],
        autocorr_range: 60.0,
        noise_sd: noise,
        labels: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f32_raster_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e6f32..1e6, 12)) {
        let g: Vec<f32> = vals.clone();
        let stack = BandStack::single(RasterGrid::from_geometry(geom(3, 4), g).unwrap());
        let bytes = encode_raster(&stack, DataType::F32).unwrap();
        let header = RasterHeader::parse("rows = 3\ncols = 4\nbands = 1\ndtype = f32\npixel_size = 10\n").unwrap();
        let back: BandStack<f32> = decode_raster(&bytes, &header).unwrap();
        for (a, b) in back.band(0).values().iter().zip(&vals) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn upscale_keeps_grand_mean_and_unit_range(vals in proptest::collection::vec(0.0..1.0f64, 36)) {
        let g = grid(6, 6, vals);
        let up = upscale_mean(&g, 3).unwrap();
        let (m0, m1) = (g.mean().unwrap(), up.mean().unwrap());
        prop_assert!((m0 - m1).abs() <= 1e-12 * m0.abs().max(1.0));
        prop_assert!(up.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn dn_monotone_in_reflectance(r1 in 0.0..1.0f64, r2 in 0.0..1.0f64, gain in 0.1..3.0f64, se in 5.0..90.0f64) {
        let cal = CalibrationParams {
            gain: vec![gain],
            bias: vec![1.5],
            esun: vec![1500.0],
            sun_elevation_deg: se,
            earth_sun_distance_au: 1.0,
        };
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(reflectance_to_dn(lo, 0, &cal).unwrap() <= reflectance_to_dn(hi, 0, &cal).unwrap());
    }

    #[test]
    fn dos_minimum_is_zero(vals in proptest::collection::vec(5.0..200.0f64, 20)) {
        let out = dos_correct(&BandStack::single(grid(4, 5, vals)), 0.0).unwrap();
        let min = out.band(0).values().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(min, 0.0);
    }

    #[test]
    fn thresholds_widen_as_alpha_shrinks(
        samples in proptest::collection::vec(proptest::collection::vec(10.0..200.0f64, 2), 3..10),
        a1 in 0.01..0.3f64,
        a2 in 0.01..0.3f64,
    ) {
        let cls = [ClassSamples { label: "c".into(), samples, spectral_band_counts: None }];
        let (small, large) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let tight = compute_thresholds(&cls, large, DfMode::Samples).unwrap();
        let wide = compute_thresholds(&cls, small, DfMode::Samples).unwrap();
        for b in 0..2 {
            let (t, w) = (tight.get("c", b).unwrap(), wide.get("c", b).unwrap());
            prop_assert!(w.lower <= t.lower + 1e-9 && w.upper >= t.upper - 1e-9);
        }
    }

    #[test]
    fn t_quantile_decreases_with_df(df in 1.0..200.0f64, alpha in 0.01..0.5f64) {
        let a = t_quantile(alpha, df).unwrap();
        let b = t_quantile(alpha, df + 1.0).unwrap();
        prop_assert!(b <= a + 1e-9);
    }

    #[test]
    fn variogram_shift_and_scale(vals in proptest::collection::vec(0.0..10.0f64, 64), c in -50.0..50.0f64, k in 0.1..5.0f64) {
        let g = grid(8, 8, vals.clone());
        let base = empirical_variogram(&g, 60.0, 6).unwrap();
        let shifted = empirical_variogram(&grid(8, 8, vals.iter().map(|v| v + c).collect()), 60.0, 6).unwrap();
        let scaled = empirical_variogram(&grid(8, 8, vals.iter().map(|v| v * k).collect()), 60.0, 6).unwrap();
        for i in 0..base.gamma.len() {
            let g0 = base.gamma[i];
            prop_assert!((shifted.gamma[i] - g0).abs() <= 1e-9 * (1.0 + g0));
            prop_assert!((scaled.gamma[i] - k * k * g0).abs() <= 1e-9 * (1.0 + k * k * g0));
        }
    }

    #[test]
    fn model_is_non_decreasing(m in model()) {
        let mut prev = 0.0;
        for i in 0..2000 {
            let v = m.eval(i as f64 * 0.1);
            prop_assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn kriging_weights_sum_to_one_and_are_exact(m in model(), locs in points(10), tx in 0.0..100.0f64, ty in 0.0..100.0f64) {
        let values: Vec<f64> = (0..locs.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let sys = KrigingSystem { locations: &locs, values: &values, model: &m, target: [tx, ty] };
        let w = solve_weights(&sys).unwrap();
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        let at = KrigingSystem { target: locs[0], ..sys };
        prop_assert!((predict_point(&at).unwrap() - values[0]).abs() <= 1e-9);
    }

    #[test]
    fn kriging_shift_and_scale(m in model(), locs in points(8), c in -5.0..5.0f64, k in 0.1..4.0f64) {
        let values: Vec<f64> = (0..locs.len()).map(|i| (i as f64 * 1.3).cos()).collect();
        let target = [47.0, 33.0];
        let z = predict_point(&KrigingSystem { locations: &locs, values: &values, model: &m, target }).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        let zs = predict_point(&KrigingSystem { locations: &locs, values: &shifted, model: &m, target }).unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
        let zk = predict_point(&KrigingSystem { locations: &locs, values: &scaled, model: &m, target }).unwrap();
        prop_assert!((zs - z - c).abs() <= 1e-8);
        prop_assert!((zk - k * z).abs() <= 1e-8 * (1.0 + k));
    }

    #[test]
    fn eq5_in_unit_range_and_monotone(p1 in 0.0..=1.0f64, p2 in 0.0..=1.0f64, d in 0.0..=1.0f64) {
        let g = |v: f64| grid(1, 1, vec![v]);
        let at = |a: f64, b: f64| band_probability(&g(a), &g(b), Combine::Eq5).unwrap().values()[0];
        let v = at(p1, p2);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(at((p1 + d).min(1.0), p2) >= v - 1e-15);
        prop_assert!(at(p1, (p2 + d).min(1.0)) >= v - 1e-15);
    }

    #[test]
    fn joint_at_most_min_band(bands in proptest::collection::vec(proptest::collection::vec(0.0..=1.0f64, 6), 1..5)) {
        let maps: Vec<ProbabilityMap<f64>> = bands
            .iter()
            .enumerate()
            .map(|(b, v)| ProbabilityMap::new(grid(2, 3, v.clone()), "c", MapKind::Band(b)))
            .collect();
        let joint = joint_probability(&maps).unwrap();
        for (i, v) in joint.grid.values().iter().enumerate() {
            let min = bands.iter().map(|b| b[i]).fold(1.0, f64::min);
            prop_assert!(*v <= min + 1e-15);
        }
    }

    #[test]
    fn harden_ignores_monotone_transforms(vals in proptest::collection::vec(0.0..1.0f64, 18)) {
        let maps: Vec<ProbabilityMap<f64>> = vals
            .chunks(6)
            .enumerate()
            .map(|(c, v)| ProbabilityMap::new(grid(2, 3, v.to_vec()), format!("c{c}"), MapKind::Joint))
            .collect();
        let squashed: Vec<ProbabilityMap<f64>> = maps
            .iter()
            .map(|m| ProbabilityMap::new(m.grid.map(|v| v.powi(3) * 0.5), m.class.clone(), MapKind::Joint))
            .collect();
        prop_assert_eq!(harden(&maps, 0.0).unwrap().labels, harden(&squashed, 0.0).unwrap().labels);
    }

    #[test]
    fn s_symmetric_and_d_non_negative(seed in 0u64..1000) {
        let f = normalized_rows(seed, 50, 3);
        let g = normalized_rows(seed + 5000, 50, 3);
        let s1 = mse_closeness(&f, &g).unwrap();
        let s2 = mse_closeness(&g, &f).unwrap();
        prop_assert_eq!(s1.grid.values(), s2.grid.values());
        prop_assert!(s1.grid.values().iter().all(|v| *v >= 0.0));
        let d = cross_entropy(&f, &g, 1e-12).unwrap();
        prop_assert!(d.grid.values().iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn correlation_affine_invariant(seed in 0u64..1000, a in 0.1..10.0f64, b in -5.0..5.0f64) {
        let f = normalized_rows(seed, 40, 2);
        let g = normalized_rows(seed + 1, 40, 2);
        let r = class_correlation(&f[0], &g[0]).unwrap().r;
        let moved = ProbabilityMap::new(g[0].grid.map(|v| a * v + b), "c0", MapKind::Joint);
        let r2 = class_correlation(&f[0], &moved).unwrap().r;
        prop_assert!((r - r2).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fit_beats_random_parameters(seed in 0u64..500, fam in family()) {
        let spec = scene_spec(seed, 8.0, 1.0);
        let scene = generate_scene(&spec).unwrap();
        let band = scene.fine.band(0);
        let emp = empirical_variogram(band, 120.0, 10).unwrap();
        let fit = fit_model(&emp, fam).unwrap();
        let (lo, hi) = range_bounds(&emp).unwrap();
        let gmax = emp.gamma.iter().cloned().fold(0.0, f64::max);
        let objective = |m: &VariogramModel<f64>| -> f64 {
            emp.lags
                .iter()
                .zip(&emp.gamma)
                .zip(&emp.pair_counts)
                .filter(|(_, n)| **n > 0)
                .map(|((h, g), n)| *n as f64 * (g - m.eval(*h)).powi(2))
                .sum()
        };
        let fitted = objective(&fit.model);
        let mut rng = Draws::new(seed, 9);
        for _ in 0..100 {
            let range = (lo.ln() + rng.uniform() * (hi.ln() - lo.ln())).exp();
            let m = VariogramModel::new(fam, 2.0 * gmax * rng.uniform(), 2.0 * gmax * rng.uniform(), range).unwrap();
            prop_assert!(fitted <= objective(&m) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn classifiers_consistent_and_band_order_free(seed in 0u64..1000) {
        let (stack, training) = labeled_stack(seed);
        let sigs = train_gaussian(&stack, &training, None).unwrap();
        let post = bayclass(&stack, &sigs).unwrap();
        let hard = maxlike(&stack, &sigs).unwrap();
        let fuzzy = fuzzyclass(&stack, &train_fuzzy(&stack, &FuzzyTraining::crisp(&training)).unwrap()).unwrap();
        for i in 0..stack.geometry().len() {
            let p: Vec<f64> = post.iter().map(|m| m.grid.values()[i]).collect();
            let best = if p[1] > p[0] { 1 } else { 0 };
            prop_assert_eq!(hard.labels[i], Some(best));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            let fsum: f64 = fuzzy.iter().map(|m| m.grid.values()[i]).sum();
            prop_assert!((fsum - 1.0).abs() <= 1e-10);
        }
        for b in belclass(&stack, &sigs).unwrap() {
            for (bel, pl) in b.belief.values().iter().zip(b.plausibility.values()) {
                prop_assert!(0.0 <= *bel && bel <= pl && *pl <= 1.0 + 1e-15);
            }
        }

        let order = [2, 0, 1];
        let permuted = stack.select(&order).unwrap();
        let psigs = train_gaussian(&permuted, &training, None).unwrap();
        let ppost = bayclass(&permuted, &psigs).unwrap();
        prop_assert_eq!(maxlike(&permuted, &psigs).unwrap().labels, hard.labels);
        for (a, b) in post.iter().zip(&ppost) {
            for (x, y) in a.grid.values().iter().zip(b.grid.values()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
        let pfuzzy = fuzzyclass(&permuted, &train_fuzzy(&permuted, &FuzzyTraining::crisp(&training)).unwrap()).unwrap();
        for (a, b) in fuzzy.iter().zip(&pfuzzy) {
            for (x, y) in a.grid.values().iter().zip(b.grid.values()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn synth_is_deterministic(seed in 0u64..10_000) {
        let spec = scene_spec(seed, 5.0, 1.0);
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        prop_assert_eq!(a.labels.labels, b.labels.labels);
        for (x, y) in a.coarse.bands().iter().zip(b.coarse.bands()) {
            prop_assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn noiseless_coarse_dn_is_linear_mixture(seed in 0u64..10_000) {
        let spec = scene_spec(seed, 0.0, 0.0);
        let scene = generate_scene(&spec).unwrap();
        for b in 0..2 {
            for i in 0..scene.coarse.geometry().len() {
                let mix: f64 = spec
                    .classes
                    .iter()
                    .zip(&scene.proportions)
                    .map(|(c, p)| c.band_means[b] * p.grid.values()[i])
                    .sum();
                prop_assert!((scene.coarse.band(b).values()[i] - mix).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn two_stage_coarsening_matches_one_stage(seed in 0u64..10_000) {
        let mut spec = scene_spec(seed, 5.0, 1.0);
        spec.coarsen_factor = 2;
        let fine = generate_scene(&spec).unwrap();
        let mut once = spec.clone();
        once.coarsen_factor = 4;
        let direct = generate_scene(&once).unwrap();
        for (two, one) in fine.proportions.iter().zip(&direct.proportions) {
            let staged = upscale_mean(&two.grid, 2).unwrap();
            for (x, y) in staged.values().iter().zip(one.grid.values()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
