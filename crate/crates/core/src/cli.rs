//! Subcommand implementations. Each returns a JSON summary for stdout;
//! files go under the configured output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::assess::{assess_closeness, area_report, one_hot, pixel_area_ha};
use crate::baselines::{
    bayclass, belclass, fuzzyclass, maxlike, pure_pixel_training, train_fuzzy, train_gaussian, FuzzyTraining,
};
use crate::config::{check_method, RunConfig};
use crate::error::{Error, Result};
use crate::kbsc::{classify_kbsc, harden, MapKind, ProbabilityMap};
use crate::raster::{
    load_raster_auto, save_raster, to_pgm_preview, upscale_mean, BandStack, DataType, LabelGrid, RasterGrid,
};
use crate::signatures::{compute_thresholds, load_manifest, spectra_to_band_dn, ClassSamples, SignatureStats};
use crate::synth::{generate_scene, ghs_from_spec, Scene, SceneSpec};

/// Version of the benchmark CSV column layout.
pub const BENCHMARK_SCHEMA: u32 = 1;

pub const BENCHMARK_COLUMNS: &str =
    "schema_version,seed,method,h,pixels,s_mean,s_median,s_sd,d_mean,d_median,d_sd,r_mean,r2_mean,error";

struct Out {
    dir: PathBuf,
}

impl Out {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn json(&self, name: &str, value: &impl serde::Serialize) -> Result<PathBuf> {
        self.write(name, serde_json::to_string_pretty(value)? + "\n")
    }

    /// Writes a multi-band f32 raster plus a `.classes` sidecar.
    fn maps(&self, name: &str, maps: &[ProbabilityMap<f64>]) -> Result<PathBuf> {
        let stack = BandStack::new(maps.iter().map(|m| m.grid.clone()).collect(), None)?;
        let p = self.path(name);
        save_raster(&stack, &p, DataType::F32)?;
        let names: String = maps.iter().map(|m| format!("{}\n", m.class)).collect();
        fs::write(classes_path(&p), names).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn grid(&self, name: &str, grid: &RasterGrid<f64>) -> Result<PathBuf> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        save_raster(&BandStack::single(grid.clone()), &p, DataType::F32)?;
        Ok(p)
    }

    fn labels(&self, name: &str, labels: &LabelGrid) -> Result<PathBuf> {
        self.grid(name, &labels.to_raster())
    }

    fn preview(&self, name: &str, grid: &RasterGrid<f64>, lo: f64, hi: f64) -> Result<PathBuf> {
        let p = self.path(name);
        to_pgm_preview(grid, lo, hi, &p)?;
        Ok(p)
    }
}

fn classes_path(raster: &Path) -> PathBuf {
    raster.with_extension("classes")
}

fn read_classes(raster: &Path) -> Result<Option<Vec<String>>> {
    let p = classes_path(raster);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(Some(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()))
}

fn safe_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn fmt_h(h: f64) -> String {
    format!("{h}")
}

fn require<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| Error::validation(format!("{name} is required for this command")))
}

/// Thresholds from, in order of preference, a stats file, a field-samples
/// file, or a spectra manifest calibrated with the input's band windows.
pub fn load_stats(cfg: &RunConfig, stack: &BandStack<f64>) -> Result<SignatureStats> {
    let p = &cfg.paths;
    if let Some(path) = &p.stats {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return SignatureStats::from_json(&text);
    }
    if let Some(path) = &p.field_samples {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let samples: Vec<ClassSamples> = serde_json::from_str(&text)?;
        return compute_thresholds(&samples, cfg.alpha, cfg.df_mode);
    }
    if let Some(path) = &p.spectra_manifest {
        let cal = require(&cfg.calibration, "calibration")?;
        let windows = stack
            .band_windows()
            .ok_or_else(|| Error::validation("input raster header has no band windows for the spectra"))?;
        let spectra = load_manifest(path)?;
        let samples = spectra_to_band_dn(&spectra, windows, cal)?;
        return compute_thresholds(&samples, cfg.alpha, cfg.df_mode);
    }
    Err(Error::validation(
        "no signature source: set paths.stats, paths.field_samples or paths.spectra_manifest",
    ))
}

fn class_list(cfg: &RunConfig, stats: &SignatureStats) -> Vec<String> {
    if cfg.classes.is_empty() {
        stats.class_names()
    } else {
        cfg.classes.clone()
    }
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    Ok(json!({ "valid": true }))
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let synth = require(&cfg.synth, "synth")?;
    let out = Out::new(&cfg.paths.output_dir)?;
    let scene = generate_scene(&synth.scene)?;
    let ghs = ghs_from_spec(&synth.scene, synth.samples_per_class)?;
    let files = write_scene(&out, &synth.scene, &scene, &ghs)?;
    Ok(json!({
        "command": "synth",
        "seed": synth.scene.seed,
        "files": files,
    }))
}

fn write_scene(out: &Out, spec: &SceneSpec, scene: &Scene, ghs: &[ClassSamples]) -> Result<Vec<PathBuf>> {
    Ok(vec![
        out.labels("fine_labels.dat", &scene.labels)?,
        {
            let p = out.path("fine_dn.dat");
            save_raster(&scene.fine, &p, DataType::F32)?;
            p
        },
        {
            let p = out.path("coarse_dn.dat");
            save_raster(&scene.coarse, &p, DataType::F32)?;
            p
        },
        out.maps("coarse_proportions.dat", &scene.proportions)?,
        out.json("field_samples.json", &ghs)?,
        out.json("scene.json", spec)?,
    ])
}

/// Maps produced by one method, plus what to put in the report.
struct Classified {
    maps: Vec<ProbabilityMap<f64>>,
    labels: LabelGrid,
    extra: Vec<(String, Vec<ProbabilityMap<f64>>)>,
    report: Value,
    failures: usize,
}

fn run_method(
    method: &str,
    cfg: &RunConfig,
    stack: &BandStack<f64>,
    stats: &SignatureStats,
    classes: &[String],
    h: f64,
) -> Result<Classified> {
    check_method(method)?;
    if method == "kbsc" {
        let out = classify_kbsc(stack, stats, classes, h, &cfg.kbsc_config())?;
        if out.maps.is_empty() {
            return Err(Error::numerical(format!(
                "every class failed: {}",
                out.failures.iter().map(|f| format!("{}: {}", f.class, f.error)).collect::<Vec<_>>().join("; ")
            )));
        }
        let labels = harden(&out.maps, cfg.harden_threshold)?;
        return Ok(Classified {
            labels,
            extra: Vec::new(),
            report: json!({
                "classes": out.reports,
                "failures": out.failures,
                "thresholds": stats,
            }),
            failures: out.failures.len(),
            maps: out.maps,
        });
    }
    let training = pure_pixel_training(stack, stats, classes)?;
    let sigs = train_gaussian(stack, &training, cfg.priors.as_deref())?;
    let report = json!({ "signatures": sigs, "training_pixels": training.pixels.len() });
    let (maps, extra) = match method {
        "maxlike" => {
            let labels = maxlike(stack, &sigs)?;
            return Ok(Classified {
                maps: one_hot(&labels),
                labels,
                extra: Vec::new(),
                report,
                failures: 0,
            });
        }
        "bayclass" => (bayclass(stack, &sigs)?, Vec::new()),
        "belclass" => {
            let bel = belclass(stack, &sigs)?;
            let to_map = |f: &dyn Fn(&crate::baselines::BeliefMaps<f64>) -> RasterGrid<f64>| {
                bel.iter()
                    .map(|b| ProbabilityMap::new(f(b), b.class.clone(), MapKind::Joint))
                    .collect::<Vec<_>>()
            };
            let beliefs = to_map(&|b| b.belief.clone());
            let extra = vec![
                ("plausibility".to_string(), to_map(&|b| b.plausibility.clone())),
                ("interval".to_string(), to_map(&|b| b.interval())),
            ];
            (beliefs, extra)
        }
        "fuzzyclass" => {
            let fsigs = train_fuzzy(stack, &FuzzyTraining::crisp(&training))?;
            (fuzzyclass(stack, &fsigs)?, Vec::new())
        }
        _ => unreachable!("checked"),
    };
    Ok(Classified {
        labels: harden(&maps, cfg.harden_threshold)?,
        maps,
        extra,
        report,
        failures: 0,
    })
}

pub fn cmd_classify(cfg: &RunConfig, method: &str) -> Result<Value> {
    check_method(method)?;
    cfg.validate()?;
    let input = require(&cfg.paths.input, "paths.input")?;
    let stack: BandStack<f64> = load_raster_auto(input)?;
    let stats = load_stats(cfg, &stack)?;
    let classes = class_list(cfg, &stats);
    let h = cfg.kriging.out_pixel_size.unwrap_or(stack.geometry().pixel_size);
    let out = Out::new(&cfg.paths.output_dir)?;
    let result = run_method(method, cfg, &stack, &stats, &classes, h)?;
    let mut files = vec![
        out.maps(&format!("{method}_maps.dat"), &result.maps)?,
        out.labels(&format!("{method}_labels.dat"), &result.labels)?,
    ];
    for (kind, maps) in &result.extra {
        files.push(out.maps(&format!("{method}_{kind}.dat"), maps)?);
    }
    for m in &result.maps {
        files.push(out.preview(&format!("{method}_{}.pgm", safe_name(&m.class)), &m.grid, 0.0, 1.0)?);
    }
    let report = json!({
        "method": method,
        "h": h,
        "classes": result.maps.iter().map(|m| m.class.clone()).collect::<Vec<_>>(),
        "geometry": {
            "rows": result.labels.geometry.rows,
            "cols": result.labels.geometry.cols,
            "pixel_size": result.labels.geometry.pixel_size,
        },
        "class_fractions": result.labels.class_fractions(),
        "details": result.report,
    });
    files.push(out.json(&format!("{method}_report.json"), &report)?);
    if result.failures > 0 {
        return Err(Error::numerical(format!(
            "{} class(es) failed; see {method}_report.json",
            result.failures
        )));
    }
    Ok(json!({ "command": "classify", "method": method, "h": h, "files": files }))
}

fn load_maps(path: &Path, fallback: &[String]) -> Result<Vec<ProbabilityMap<f64>>> {
    let stack: BandStack<f64> = load_raster_auto(path)?;
    let names = match read_classes(path)? {
        Some(n) => n,
        None if !fallback.is_empty() => fallback.to_vec(),
        None => (0..stack.band_count()).map(|i| format!("class{i}")).collect(),
    };
    if names.len() != stack.band_count() {
        return Err(Error::validation(format!(
            "{} has {} bands but classes {names:?}",
            path.display(),
            stack.band_count()
        )));
    }
    Ok(stack
        .into_bands()
        .into_iter()
        .zip(names)
        .map(|(g, n)| ProbabilityMap::new(g, n, MapKind::Joint))
        .collect())
}

/// Brings two map sets onto one grid by averaging the finer one by an
/// integer factor.
fn align_maps(
    reference: Vec<ProbabilityMap<f64>>,
    test: Vec<ProbabilityMap<f64>>,
) -> Result<(Vec<ProbabilityMap<f64>>, Vec<ProbabilityMap<f64>>)> {
    let (gr, gt) = (*reference[0].grid.geometry(), *test[0].grid.geometry());
    if gr.same_as(&gt) {
        return Ok((reference, test));
    }
    let coarsen = |maps: Vec<ProbabilityMap<f64>>, ratio: f64| -> Result<Vec<ProbabilityMap<f64>>> {
        let k = ratio.round();
        if (ratio - k).abs() > 1e-9 || k < 2.0 {
            return Err(Error::validation(format!(
                "map grids ({}x{} at {} m, {}x{} at {} m) are not related by an integer factor",
                gr.rows, gr.cols, gr.pixel_size, gt.rows, gt.cols, gt.pixel_size
            )));
        }
        maps.into_iter()
            .map(|m| Ok(ProbabilityMap::new(upscale_mean(&m.grid, k as usize)?, m.class, m.kind)))
            .collect()
    };
    let (r, t) = if gr.pixel_size < gt.pixel_size {
        (coarsen(reference, gt.pixel_size / gr.pixel_size)?, test)
    } else {
        (reference, coarsen(test, gr.pixel_size / gt.pixel_size)?)
    };
    if !r[0].grid.geometry().same_as(t[0].grid.geometry()) {
        return Err(Error::validation("map grids do not align after averaging"));
    }
    Ok((r, t))
}

pub fn cmd_assess(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let reference = load_maps(require(&cfg.paths.reference, "paths.reference")?, &cfg.classes)?;
    let test = load_maps(require(&cfg.paths.test, "paths.test")?, &cfg.classes)?;
    let (reference, test) = align_maps(reference, test)?;
    let closeness = assess_closeness(&reference, &test, cfg.assess.eps)?;
    let area = cfg
        .assess
        .pixel_area
        .unwrap_or_else(|| pixel_area_ha(reference[0].grid.pixel_size()));
    let areas = area_report(&reference, &test, area)?;
    let out = Out::new(&cfg.paths.output_dir)?;
    let s_max = closeness.s_grid.valid_values().fold(0.0, f64::max).max(1e-12);
    let d_max = closeness.d_grid.valid_values().fold(0.0, f64::max).max(1e-12);
    let files = vec![
        out.json("closeness.json", &closeness.report)?,
        out.json("area.json", &areas)?,
        out.write("s.csv", grid_csv(&closeness.s_grid))?,
        out.write("d.csv", grid_csv(&closeness.d_grid))?,
        out.preview("s.pgm", &closeness.s_grid, 0.0, s_max)?,
        out.preview("d.pgm", &closeness.d_grid, 0.0, d_max)?,
    ];
    Ok(json!({
        "command": "assess",
        "closeness": closeness.report,
        "area": areas,
        "files": files,
    }))
}

fn grid_csv(grid: &RasterGrid<f64>) -> String {
    let mut s = String::new();
    for r in 0..grid.rows() {
        let row: Vec<String> = (0..grid.cols()).map(|c| format!("{}", grid.get(r, c))).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Fraction maps of the fine labels averaged onto grid distance `h`.
pub fn truth_at(scene: &Scene, h: f64) -> Result<Vec<ProbabilityMap<f64>>> {
    let fine = scene.labels.geometry.pixel_size;
    let ratio = h / fine;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-9 || k < 1.0 {
        return Err(Error::validation(format!(
            "h = {h} m is not a whole multiple of the {fine} m fine pixels"
        )));
    }
    let maps = one_hot::<f64>(&scene.labels);
    if k == 1.0 {
        return Ok(maps);
    }
    maps.into_iter()
        .map(|m| Ok(ProbabilityMap::new(upscale_mean(&m.grid, k as usize)?, m.class, m.kind)))
        .collect()
}

#[derive(Debug, Clone)]
struct Row {
    seed: u64,
    method: String,
    h: f64,
    seconds: f64,
    outcome: std::result::Result<Metrics, String>,
}

#[derive(Debug, Clone)]
struct Metrics {
    pixels: usize,
    s: [f64; 3],
    d: [f64; 3],
    r: f64,
    r2: f64,
    per_class: Vec<(String, Option<(f64, f64)>)>,
    s_grid: RasterGrid<f64>,
    d_grid: RasterGrid<f64>,
}

fn evaluate(
    cfg: &RunConfig,
    scene: &Scene,
    stats: &SignatureStats,
    classes: &[String],
    method: &str,
    h: f64,
    native: f64,
) -> Result<Metrics> {
    let truth = truth_at(scene, h)?;
    let maps = if method == "kbsc" {
        run_method(method, cfg, &scene.coarse, stats, classes, h)?.maps
    } else {
        let maps = run_method(method, cfg, &scene.coarse, stats, classes, native)?.maps;
        let ratio = h / native;
        if (ratio - 1.0).abs() < 1e-9 {
            maps
        } else if ratio > 1.0 && (ratio - ratio.round()).abs() < 1e-9 {
            maps.into_iter()
                .map(|m| Ok(ProbabilityMap::new(upscale_mean(&m.grid, ratio.round() as usize)?, m.class, m.kind)))
                .collect::<Result<_>>()?
        } else {
            return Err(Error::validation(format!(
                "{method} maps exist on the {native} m grid; h = {h} m is not a whole multiple"
            )));
        }
    };
    let c = assess_closeness(&truth, &maps, cfg.assess.eps)?;
    let summary = |s: Option<crate::assess::Summary>| s.map_or([f64::NAN; 3], |s| [s.mean, s.median, s.sd]);
    let per_class: Vec<(String, Option<(f64, f64)>)> = c
        .report
        .correlations
        .iter()
        .map(|cc| (cc.class.clone(), cc.correlation.map(|x| (x.r, x.r2))))
        .collect();
    let defined: Vec<(f64, f64)> = per_class.iter().filter_map(|p| p.1).collect();
    let avg = |f: fn(&(f64, f64)) -> f64| {
        if defined.is_empty() {
            f64::NAN
        } else {
            defined.iter().map(f).sum::<f64>() / defined.len() as f64
        }
    };
    Ok(Metrics {
        pixels: c.report.pixels,
        s: summary(c.report.s),
        d: summary(c.report.d),
        r: avg(|p| p.0),
        r2: avg(|p| p.1),
        per_class,
        s_grid: c.s_grid,
        d_grid: c.d_grid,
    })
}

fn seed_rows(cfg: &RunConfig, template: &SceneSpec, samples: usize, seed: u64, methods: &[String], hs: &[f64]) -> Vec<Row> {
    let spec = SceneSpec {
        seed,
        ..template.clone()
    };
    let native = spec.coarse_pixel_size();
    let hs: Vec<f64> = if hs.is_empty() { vec![native] } else { hs.to_vec() };
    let prepared = (|| -> Result<_> {
        let scene = generate_scene(&spec)?;
        let ghs = ghs_from_spec(&spec, samples)?;
        let stats = compute_thresholds(&ghs, cfg.alpha, cfg.df_mode)?;
        Ok((scene, stats))
    })();
    let mut rows = Vec::new();
    for method in methods {
        for &h in &hs {
            let start = Instant::now();
            let outcome = match &prepared {
                Ok((scene, stats)) => evaluate(cfg, scene, stats, &spec.class_names(), method, h, native),
                Err(e) => Err(Error::numerical(format!("scene generation failed: {e}"))),
            };
            if let Err(e) = &outcome {
                log::warn!("seed {seed} {method} h={h}: {e}");
            }
            rows.push(Row {
                seed,
                method: method.clone(),
                h,
                seconds: start.elapsed().as_secs_f64(),
                outcome: outcome.map_err(|e| e.to_string()),
            });
        }
    }
    rows
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let synth = require(&cfg.synth, "synth")?;
    let bench = &cfg.benchmark;
    if bench.seeds.is_empty() {
        return Err(Error::validation("benchmark.seeds: at least one seed is required"));
    }
    if bench.methods.is_empty() {
        return Err(Error::validation("benchmark.methods: at least one method is required"));
    }
    let out = Out::new(&cfg.paths.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(bench.jobs)
        .build()
        .map_err(|e| Error::numerical(format!("thread pool: {e}")))?;
    let rows: Vec<Row> = pool.install(|| {
        bench
            .seeds
            .par_iter()
            .map(|&seed| seed_rows(cfg, &synth.scene, synth.samples_per_class, seed, &bench.methods, &bench.h_list))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let mut main = String::from(BENCHMARK_COLUMNS);
    main.push('\n');
    let mut corr = String::from("schema_version,seed,method,h,class,r,r2\n");
    let mut runtime = String::from("schema_version,seed,method,h,seconds\n");
    let mut files = Vec::new();
    let mut failures = 0;
    for row in &rows {
        let key = format!("{BENCHMARK_SCHEMA},{},{},{}", row.seed, csv_field(&row.method), fmt_h(row.h));
        runtime.push_str(&format!("{key},{:.6}\n", row.seconds));
        match &row.outcome {
            Ok(m) => {
                main.push_str(&format!(
                    "{key},{},{},{},{},{},{},{},{},{},\n",
                    m.pixels, m.s[0], m.s[1], m.s[2], m.d[0], m.d[1], m.d[2], m.r, m.r2
                ));
                for (class, c) in &m.per_class {
                    let (r, r2) = c.unwrap_or((f64::NAN, f64::NAN));
                    corr.push_str(&format!("{key},{},{r},{r2}\n", csv_field(class)));
                }
                let stem = format!("grids/seed{}_{}_h{}", row.seed, safe_name(&row.method), fmt_h(row.h));
                files.push(out.grid(&format!("{stem}_s.dat"), &m.s_grid)?);
                files.push(out.grid(&format!("{stem}_d.dat"), &m.d_grid)?);
            }
            Err(e) => {
                failures += 1;
                main.push_str(&format!("{key},,,,,,,,,,{}\n", csv_field(e)));
            }
        }
    }
    files.insert(0, out.write("benchmark.csv", &main)?);
    files.insert(1, out.write("benchmark_correlations.csv", &corr)?);
    files.insert(2, out.write("benchmark_runtime.csv", &runtime)?);
    Ok(json!({
        "command": "benchmark",
        "rows": rows.len(),
        "failed_rows": failures,
        "files": files.iter().take(3).collect::<Vec<_>>(),
    }))
}
