//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use faer::linalg::solvers::Solve;
use faer::Mat;
use kbsc::assess::{class_correlation, cross_entropy, mse_closeness, percent_deviation};
use kbsc::baselines::{bayclass, belclass, fuzzyclass, pure_pixel_training, train_fuzzy, train_gaussian, FuzzyTraining};
use kbsc::cli::cmd_benchmark;
use kbsc::config::RunConfig;
use kbsc::kbsc::{band_probability, classify_kbsc, joint_probability, Combine, KbscConfig, MapKind, ProbabilityMap};
use kbsc::kriging::{predict_point, solve_weights, KrigingSystem};
use kbsc::radiometry::{dn_to_radiance, radiance_to_dn, reflectance_to_radiance, CalibrationParams};
use kbsc::raster::{Geometry, RasterGrid};
use kbsc::signatures::{compute_thresholds, t_quantile, DfMode};
use kbsc::synth::{generate_scene, ghs_from_spec, Draws, SceneSpec};
use kbsc::variogram::{ModelFamily, VariogramModel};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(outcome: Outcome, elapsed: Duration, limit: Duration) -> Outcome {
    let t = format!("{:.2}s of {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64());
    match outcome {
        Ok(d) if elapsed <= limit => Ok(format!("{d}; {t}")),
        Ok(d) => Err(format!("{d}; too slow: {t}")),
        Err(d) => Err(format!("{d}; {t}")),
    }
}

fn grid(rows: usize, cols: usize, values: Vec<f64>) -> RasterGrid<f64> {
    RasterGrid::from_geometry(Geometry::new(rows, cols, 1.0, (0.0, 0.0)).unwrap(), values).unwrap()
}

fn band_map(values: Vec<f64>, band: usize) -> ProbabilityMap<f64> {
    ProbabilityMap::new(grid(4, 4, values), "wheat", MapKind::Band(band))
}

fn worked_joint_example() -> Outcome {
    let a = vec![
        1.0, 0.9, 0.84, 0.91, 1.0, 0.92, 0.9, 1.0, 0.8, 0.76, 0.84, 1.0, 0.4, 0.93, 1.0, 1.0,
    ];
    let b = vec![
        1.0, 0.9, 0.64, 0.82, 0.9, 0.73, 0.65, 0.82, 1.0, 0.75, 0.64, 1.0, 0.94, 0.96, 0.92, 1.0,
    ];
    let expected = [
        1.0, 0.81, 0.5376, 0.7462, 0.9, 0.6716, 0.585, 0.82, 0.8, 0.57, 0.5376, 1.0, 0.376, 0.8928, 0.92, 1.0,
    ];
    let joint = joint_probability(&[band_map(a, 0), band_map(b, 1)]).map_err(|e| e.to_string())?;
    let worst = joint
        .grid
        .values()
        .iter()
        .zip(expected)
        .map(|(g, e)| (g - e).abs())
        .fold(0.0, f64::max);
    check(worst <= 1e-4, format!("max |diff| {worst:.2e}"))
}

fn area_anchors() -> Outcome {
    let a = percent_deviation(1_684_582.0, 2_000_000.0).map_err(|e| e.to_string())?;
    let b = percent_deviation(585_341.0, 612_000.0).map_err(|e| e.to_string())?;
    let (fa, fb) = (format!("{a:.4}"), format!("{b:.4}"));
    check(fa == "-15.7709" && fb == "-4.3560", format!("{fa}, {fb}"))
}

/// Dense solve by Gauss-Jordan elimination with full pivoting.
fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let mut col_of: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, -1.0);
        for (i, row) in a.iter().enumerate().skip(k) {
            for (j, v) in row.iter().enumerate().skip(k) {
                if v.abs() > best {
                    (pr, pc, best) = (i, j, v.abs());
                }
            }
        }
        a.swap(k, pr);
        b.swap(k, pr);
        for row in a.iter_mut() {
            row.swap(k, pc);
        }
        col_of.swap(k, pc);
        let p = a[k][k];
        for j in 0..n {
            a[k][j] /= p;
        }
        b[k] /= p;
        for i in 0..n {
            if i != k && a[i][k] != 0.0 {
                let f = a[i][k];
                for j in 0..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[col_of[k]] = b[k];
    }
    x
}

fn kriging_oracle() -> Outcome {
    let mut rng = Draws::new(2024, 0);
    let (mut worst_w, mut worst_sum, mut worst_exact) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..200 {
        let k = 1 + (rng.uniform() * 10.0) as usize;
        let family = ModelFamily::ALL[case % 4];
        let model = VariogramModel::new(
            family,
            0.3 * rng.uniform(),
            if family == ModelFamily::Nugget { 0.0 } else { 0.2 + 1.8 * rng.uniform() },
            10.0 + 140.0 * rng.uniform(),
        )
        .unwrap();
        let mut locs: Vec<[f64; 2]> = Vec::new();
        while locs.len() < k {
            let p = [100.0 * rng.uniform(), 100.0 * rng.uniform()];
            if locs.iter().all(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() > 1.0) {
                locs.push(p);
            }
        }
        let values: Vec<f64> = (0..k).map(|_| rng.uniform()).collect();
        let target = [100.0 * rng.uniform(), 100.0 * rng.uniform()];
        let sys = KrigingSystem {
            locations: &locs,
            values: &values,
            model: &model,
            target,
        };
        let w = solve_weights(&sys).map_err(|e| format!("case {case}: {e}"))?;
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let gamma = |h: f64| if h == 0.0 { 0.0 } else { model.eval(h) };
        let mut a = vec![vec![0.0; k + 1]; k + 1];
        let mut rhs = vec![0.0; k + 1];
        for i in 0..k {
            for j in 0..k {
                a[i][j] = gamma(d(locs[i], locs[j]));
            }
            a[i][k] = 1.0;
            a[k][i] = 1.0;
            rhs[i] = gamma(d(locs[i], target));
        }
        rhs[k] = 1.0;
        let oracle = gauss_jordan(a, rhs);
        for i in 0..k {
            worst_w = worst_w.max((w.weights[i] - oracle[i]).abs());
        }
        worst_w = worst_w.max((w.lagrange - oracle[k]).abs());
        worst_sum = worst_sum.max((w.weights.iter().sum::<f64>() - 1.0).abs());
        let at = locs[case % k];
        let z = predict_point(&KrigingSystem { target: at, ..sys }).map_err(|e| e.to_string())?;
        worst_exact = worst_exact.max((z - values[case % k]).abs());
    }
    check(
        worst_w <= 1e-8 && worst_sum <= 1e-10 && worst_exact <= 1e-12,
        format!("weights {worst_w:.2e}, sum {worst_sum:.2e}, exactness {worst_exact:.2e}"),
    )
}

fn benchmark_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json");
    RunConfig::load(&path).expect("benchmark config")
}

fn scene_spec(seed: u64, coarse: usize) -> SceneSpec {
    let mut s = benchmark_config().synth.expect("synth section").scene;
    s.seed = seed;
    s.fine_rows = coarse * s.coarsen_factor;
    s.fine_cols = coarse * s.coarsen_factor;
    s
}

fn probability_laws() -> Outcome {
    let mut rng = Draws::new(7, 0);
    let n = 10_000;
    let p1: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let p2: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let bump: Vec<f64> = p1.iter().map(|v| (v + 0.1 * rng.uniform()).min(1.0)).collect();
    let bump2: Vec<f64> = p2.iter().map(|v| (v + 0.1 * rng.uniform()).min(1.0)).collect();
    let g = |v: &[f64]| grid(1, n, v.to_vec());
    let e = band_probability(&g(&p1), &g(&p2), Combine::Eq5).map_err(|e| e.to_string())?;
    let e_up = band_probability(&g(&bump), &g(&p2), Combine::Eq5).map_err(|e| e.to_string())?;
    let e_up2 = band_probability(&g(&p1), &g(&bump2), Combine::Eq5).map_err(|e| e.to_string())?;
    let in_range = e.values().iter().all(|v| (0.0..=1.0).contains(v));
    let monotone = e
        .values()
        .iter()
        .zip(e_up.values())
        .zip(e_up2.values())
        .all(|((a, b), c)| *b >= a - 1e-15 && *c >= a - 1e-15);
    let maps = [
        ProbabilityMap::new(g(&p1), "c", MapKind::Band(0)),
        ProbabilityMap::new(g(&p2), "c", MapKind::Band(1)),
    ];
    let joint = joint_probability(&maps).map_err(|e| e.to_string())?;
    let bounded = joint
        .grid
        .values()
        .iter()
        .enumerate()
        .all(|(i, v)| *v <= p1[i].min(p2[i]) && *v >= 0.0);

    let spec = scene_spec(42, 32);
    let scene = generate_scene(&spec).map_err(|e| e.to_string())?;
    let stats = compute_thresholds(&ghs_from_spec(&spec, 7).unwrap(), 0.05, DfMode::Samples).unwrap();
    let classes = spec.class_names();
    let training = pure_pixel_training(&scene.coarse, &stats, &classes).map_err(|e| e.to_string())?;
    let sigs = train_gaussian(&scene.coarse, &training, None).map_err(|e| e.to_string())?;
    let fsigs = train_fuzzy(&scene.coarse, &FuzzyTraining::crisp(&training)).map_err(|e| e.to_string())?;
    let mut worst_sum = 0.0f64;
    for maps in [
        bayclass(&scene.coarse, &sigs).map_err(|e| e.to_string())?,
        fuzzyclass(&scene.coarse, &fsigs).map_err(|e| e.to_string())?,
    ] {
        for i in 0..maps[0].grid.values().len() {
            let s: f64 = maps.iter().map(|m| m.grid.values()[i]).sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
    }
    let bel = belclass(&scene.coarse, &sigs).map_err(|e| e.to_string())?;
    let ordered = bel.iter().all(|b| {
        b.belief
            .values()
            .iter()
            .zip(b.plausibility.values())
            .all(|(x, y)| *x >= 0.0 && x <= y && *y <= 1.0 + 1e-15)
    });
    check(
        in_range && monotone && bounded && worst_sum <= 1e-10 && ordered,
        format!(
            "eq5 range {in_range}, monotone {monotone}, product bound {bounded}, row sums {worst_sum:.1e}, belief<=plausibility {ordered}"
        ),
    )
}

fn metric_identities() -> Outcome {
    let mut rng = Draws::new(11, 0);
    let n = 10_000;
    let classes = 3;
    let draw = |rng: &mut Draws| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..classes).map(|_| 0.01 + rng.uniform()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect()
    };
    let to_maps = |rows: &[Vec<f64>]| -> Vec<ProbabilityMap<f64>> {
        (0..classes)
            .map(|c| {
                ProbabilityMap::new(grid(1, n, rows.iter().map(|r| r[c]).collect()), format!("c{c}"), MapKind::Joint)
            })
            .collect()
    };
    let f = to_maps(&draw(&mut rng));
    let g = to_maps(&draw(&mut rng));
    let s_self = mse_closeness(&f, &f).map_err(|e| e.to_string())?;
    let d_self = cross_entropy(&f, &f, 1e-12).map_err(|e| e.to_string())?;
    let d_fg = cross_entropy(&f, &g, 1e-12).map_err(|e| e.to_string())?;
    let s_zero = s_self.grid.values().iter().all(|v| *v == 0.0);
    let d_zero = d_self.grid.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let d_min = d_fg.grid.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let base: Vec<f64> = (0..50).map(|_| rng.uniform()).collect();
    let pm = |v: Vec<f64>| ProbabilityMap::new(grid(1, 50, v), "c", MapKind::Joint);
    let linear = class_correlation(&pm(base.clone()), &pm(base.iter().map(|v| 0.2 + 0.5 * v).collect()))
        .map_err(|e| e.to_string())?
        .r;
    let anti = class_correlation(&pm(base.clone()), &pm(base.iter().map(|v| 1.0 - v).collect()))
        .map_err(|e| e.to_string())?
        .r;
    check(
        s_zero && d_zero <= 1e-12 && d_min >= -1e-12 && (linear - 1.0).abs() < 1e-12 && (anti + 1.0).abs() < 1e-12,
        format!("S(f,f)=0 {s_zero}, max|D(f,f)| {d_zero:.1e}, min D {d_min:.2e}, r {linear:.12}, {anti:.12}"),
    )
}

/// Straight-line pipeline: direct indicator thresholds, dual-form global
/// ordinary kriging solved once per map with an external LU, product of
/// clamped limit maps, product over bands.
fn reference_kbsc(
    stack: &kbsc::raster::BandStack<f64>,
    stats: &kbsc::signatures::SignatureStats,
    models: &[Vec<[VariogramModel<f64>; 2]>],
    classes: &[String],
    h: f64,
) -> Vec<Vec<f64>> {
    let g = stack.geometry();
    let ps = g.pixel_size;
    let pts: Vec<[f64; 2]> = (0..g.rows)
        .flat_map(|r| (0..g.cols).map(move |c| [(c as f64 + 0.5) * ps, (r as f64 + 0.5) * ps]))
        .collect();
    let out_rows = ((g.rows as f64 * ps) / h).ceil() as usize;
    let out_cols = ((g.cols as f64 * ps) / h).ceil() as usize;
    let targets: Vec<[f64; 2]> = (0..out_rows)
        .flat_map(|r| (0..out_cols).map(move |c| [(c as f64 + 0.5) * h, (r as f64 + 0.5) * h]))
        .collect();
    let n = pts.len();
    let krige = |z: &[f64], model: &VariogramModel<f64>| -> Vec<f64> {
        if z.iter().all(|v| *v == z[0]) {
            return vec![z[0]; targets.len()];
        }
        let gamma = |a: [f64; 2], b: [f64; 2]| {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            if d == 0.0 {
                0.0
            } else {
                model.eval(d)
            }
        };
        let a = Mat::<f64>::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) => gamma(pts[i], pts[j]),
            (false, false) => 0.0,
            _ => 1.0,
        });
        let rhs = Mat::<f64>::from_fn(n + 1, 1, |i, _| if i < n { z[i] } else { 0.0 });
        let sol = a.partial_piv_lu().solve(&rhs);
        targets
            .iter()
            .map(|&t| {
                let v: f64 = (0..n).map(|i| sol[(i, 0)] * gamma(t, pts[i])).sum::<f64>() + sol[(n, 0)];
                v.clamp(0.0, 1.0)
            })
            .collect()
    };
    classes
        .iter()
        .enumerate()
        .map(|(ci, class)| {
            let mut joint = vec![1.0; targets.len()];
            for (b, band) in stack.bands().iter().enumerate() {
                let th = stats.get(class, b).unwrap();
                let upper: Vec<f64> = band.values().iter().map(|&v| if v <= th.upper { 1.0 } else { 0.0 }).collect();
                let lower: Vec<f64> = band.values().iter().map(|&v| if v >= th.lower { 1.0 } else { 0.0 }).collect();
                let p1 = krige(&upper, &models[ci][b][0]);
                let p2 = krige(&lower, &models[ci][b][1]);
                for (j, v) in joint.iter_mut().enumerate() {
                    *v *= p1[j] * p2[j];
                }
            }
            joint
        })
        .collect()
}

fn end_to_end_oracle() -> Outcome {
    let spec = scene_spec(42, 64);
    let scene = generate_scene(&spec).map_err(|e| e.to_string())?;
    let stats = compute_thresholds(&ghs_from_spec(&spec, 7).unwrap(), 0.05, DfMode::Samples).unwrap();
    let classes = spec.class_names();
    let h = spec.coarse_pixel_size();
    let cfg = KbscConfig {
        combine: Combine::Product,
        ..Default::default()
    };
    let out = classify_kbsc(&scene.coarse, &stats, &classes, h, &cfg).map_err(|e| e.to_string())?;
    if !out.failures.is_empty() {
        return Err(format!("class failures: {:?}", out.failures));
    }
    // the oracle checks kriging and assembly; it reuses the fitted models
    let models: Vec<Vec<[VariogramModel<f64>; 2]>> = out
        .reports
        .iter()
        .map(|r| r.bands.iter().map(|b| [b.upper.fit.model, b.lower.fit.model]).collect())
        .collect();
    let reference = reference_kbsc(&scene.coarse, &stats, &models, &classes, h);
    let mut worst = 0.0f64;
    for (m, r) in out.maps.iter().zip(&reference) {
        for (a, b) in m.grid.values().iter().zip(r) {
            worst = worst.max((a - b).abs());
        }
    }
    let soft = out.maps.iter().flat_map(|m| m.grid.values()).filter(|v| **v > 0.0 && **v < 1.0).count();
    check(
        worst <= 1e-6,
        format!("{} cells x {} classes, max |diff| {worst:.2e}, {soft} non-binary cells", reference[0].len(), classes.len()),
    )
}

struct BenchRow {
    seed: u64,
    method: String,
    h: f64,
    s: f64,
    d: f64,
}

fn run_benchmark(out: &Path) -> Result<Vec<BenchRow>, String> {
    let mut cfg = benchmark_config();
    cfg.paths.output_dir = out.to_path_buf();
    cmd_benchmark(&cfg).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(out.join("benchmark.csv")).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (cs, cm, ch, cs_mean, cd_mean) = (col("seed"), col("method"), col("h"), col("s_mean"), col("d_mean"));
    Ok(lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            BenchRow {
                seed: f[cs].parse().unwrap(),
                method: f[cm].to_string(),
                h: f[ch].parse().unwrap(),
                s: f[cs_mean].parse().unwrap_or(f64::NAN),
                d: f[cd_mean].parse().unwrap_or(f64::NAN),
            }
        })
        .collect())
}

fn lookup<'a>(rows: &'a [BenchRow], seed: u64, method: &str, h: f64) -> Option<&'a BenchRow> {
    rows.iter().find(|r| r.seed == seed && r.method == method && r.h == h)
}

fn directional(rows: &[BenchRow], native: f64) -> Outcome {
    let seeds: Vec<u64> = benchmark_config().benchmark.seeds;
    let (mut s_wins, mut d_wins) = (0, 0);
    for &seed in &seeds {
        let (Some(k), Some(m)) = (lookup(rows, seed, "kbsc", native), lookup(rows, seed, "maxlike", native)) else {
            return Err(format!("missing rows for seed {seed}"));
        };
        s_wins += (k.s < m.s) as usize;
        d_wins += (k.d < m.d) as usize;
    }
    check(
        seeds.len() == 20 && s_wins >= 16 && d_wins >= 16,
        format!("KBSC < MAXLIKE in mean S for {s_wins}/20 seeds, mean D for {d_wins}/20"),
    )
}

fn scale_sweep(rows: &[BenchRow], native: f64) -> Outcome {
    let seeds: Vec<u64> = benchmark_config().benchmark.seeds;
    let hs = [native / 2.0, native, 4.0 * native];
    let mut wins = 0;
    for &seed in &seeds {
        let s: Vec<f64> = hs
            .iter()
            .map(|&h| lookup(rows, seed, "kbsc", h).map_or(f64::NAN, |r| r.s))
            .collect();
        if s.iter().any(|v| v.is_nan()) {
            return Err(format!("missing kbsc rows for seed {seed}"));
        }
        wins += (s[1] < s[0] && s[1] < s[2]) as usize;
    }
    check(wins >= 12, format!("h = native has the lowest mean S in {wins}/20 seeds"))
}

fn calibration_round_trip() -> Outcome {
    let mut rng = Draws::new(99, 0);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let cal = CalibrationParams {
            gain: vec![0.01 + 2.0 * rng.uniform()],
            bias: vec![-5.0 + 10.0 * rng.uniform()],
            esun: vec![100.0 + 2000.0 * rng.uniform()],
            sun_elevation_deg: 1.0 + 89.0 * rng.uniform(),
            earth_sun_distance_au: 0.98 + 0.04 * rng.uniform(),
        };
        let dn = 255.0 * rng.uniform();
        let back = radiance_to_dn(dn_to_radiance(dn, 0, &cal).unwrap(), 0, &cal).unwrap();
        worst = worst.max((back - dn).abs() / dn.abs().max(1.0));
        let l = 300.0 * rng.uniform();
        let lb = dn_to_radiance(radiance_to_dn(l, 0, &cal).unwrap(), 0, &cal).unwrap();
        worst = worst.max((lb - l).abs() / l.abs().max(1.0));
    }
    let ident = CalibrationParams {
        gain: vec![1.0],
        bias: vec![0.0],
        esun: vec![std::f64::consts::PI],
        sun_elevation_deg: 90.0,
        earth_sun_distance_au: 1.0,
    };
    let l: f64 = reflectance_to_radiance(1.0, 0, &ident).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-12 && (l - 1.0).abs() <= 1e-12,
        format!("max relative round-trip error {worst:.2e}, identity case L = {l}"),
    )
}

fn t_accuracy() -> Outcome {
    let cauchy = (std::f64::consts::PI * (0.975 - 0.5)).tan();
    let normal = {
        use statrs::distribution::{ContinuousCDF, Normal};
        Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.975)
    };
    let t1 = t_quantile(0.05, 1.0).map_err(|e| e.to_string())?;
    let tn = t_quantile(0.05, 1e4).map_err(|e| e.to_string())?;
    check(
        (t1 - 12.7062).abs() <= 1e-3 && (t1 - cauchy).abs() <= 1e-3 && (tn - 1.96).abs() <= 1e-3 && (tn - normal).abs() <= 1e-3,
        format!("df=1: {t1:.5} (Cauchy {cauchy:.5}); df=1e4: {tn:.5} (normal {normal:.5})"),
    )
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    let a = files_under(first);
    let b = files_under(second);
    if a != b {
        return Err("runs produced different file sets".into());
    }
    let mut compared = 0;
    for rel in &a {
        if rel.ends_with("benchmark_runtime.csv") {
            continue;
        }
        let (x, y) = (std::fs::read(first.join(rel)).unwrap(), std::fs::read(second.join(rel)).unwrap());
        if x != y {
            return Err(format!("{} differs", rel.display()));
        }
        compared += 1;
    }
    check(compared > 3, format!("{compared} files byte-identical (runtime CSV excluded)"))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("PASS criterion {n:>2} {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n:>2} {name}: {d}");
            }
        }
    };
    let timed = |f: &dyn Fn() -> Outcome, limit: u64| {
        let t = Instant::now();
        let o = f();
        within_time(o, t.elapsed(), Duration::from_secs(limit))
    };
    report(1, "worked joint probability example", timed(&worked_joint_example, 1));
    report(2, "area deviation anchors", area_anchors());
    report(3, "kriging oracle", timed(&kriging_oracle, 10));
    report(4, "probability laws", probability_laws());
    report(5, "metric identities", metric_identities());
    report(6, "end-to-end oracle", timed(&end_to_end_oracle, 60));

    let dir = tempfile::tempdir().unwrap();
    let (run1, run2) = (dir.path().join("run1"), dir.path().join("run2"));
    let t = Instant::now();
    let rows = run_benchmark(&run1);
    let bench_time = t.elapsed();
    let native = benchmark_config().synth.unwrap().scene.coarse_pixel_size();
    match &rows {
        Ok(rows) => {
            report(7, "directional benchmark", within_time(directional(rows, native), bench_time, Duration::from_secs(900)));
            report(8, "scale sweep", scale_sweep(rows, native));
        }
        Err(e) => {
            report(7, "directional benchmark", Err(e.clone()));
            report(8, "scale sweep", Err(e.clone()));
        }
    }
    report(9, "calibration round trip", calibration_round_trip());
    report(10, "t quantile accuracy", t_accuracy());
    let second = run_benchmark(&run2);
    report(
        11,
        "determinism",
        match (&rows, &second) {
            (Ok(_), Ok(_)) => determinism(&run1, &run2),
            _ => Err("benchmark run failed".into()),
        },
    );
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
