//! JSON run configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kbsc::{Combine, KbscConfig, VariogramSettings};
use crate::radiometry::CalibrationParams;
use crate::signatures::DfMode;
use crate::synth::SceneSpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Coarse DN raster to classify.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// CSV manifest of field spectra (`path,label` lines).
    #[serde(default)]
    pub spectra_manifest: Option<PathBuf>,
    /// JSON list of per-class DN samples, an alternative to spectra.
    #[serde(default)]
    pub field_samples: Option<PathBuf>,
    /// Precomputed thresholds JSON, used as-is when given.
    #[serde(default)]
    pub stats: Option<PathBuf>,
    /// Reference proportion raster for `assess`, one band per class.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    /// Test proportion raster for `assess`, one band per class.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrigingSection {
    /// Output grid distance `h`, meters. `None` keeps the input pixel size.
    #[serde(default)]
    pub out_pixel_size: Option<f64>,
    #[serde(default = "default_max_neighbors")]
    pub max_neighbors: usize,
    #[serde(default)]
    pub search_radius: Option<f64>,
    #[serde(default = "yes")]
    pub clamp: bool,
}

fn default_max_neighbors() -> usize {
    crate::kriging::KrigingConfig::default().max_neighbors
}

fn yes() -> bool {
    true
}

impl Default for KrigingSection {
    fn default() -> Self {
        Self {
            out_pixel_size: None,
            max_neighbors: default_max_neighbors(),
            search_radius: None,
            clamp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessSection {
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Hectares per output pixel; `None` derives it from the pixel size.
    #[serde(default)]
    pub pixel_area: Option<f64>,
}

fn default_eps() -> f64 {
    crate::assess::DEFAULT_EPS
}

impl Default for AssessSection {
    fn default() -> Self {
        Self {
            eps: default_eps(),
            pixel_area: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub scene: SceneSpec,
    #[serde(default = "default_samples")]
    pub samples_per_class: usize,
}

fn default_samples() -> usize {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    /// Grid distances in meters; empty means the native coarse pixel size.
    #[serde(default)]
    pub h_list: Vec<f64>,
    #[serde(default = "one")]
    pub jobs: usize,
}

fn default_seeds() -> Vec<u64> {
    (1..=20).collect()
}

fn default_methods() -> Vec<String> {
    vec!["kbsc".into(), "maxlike".into()]
}

fn one() -> usize {
    1
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            methods: default_methods(),
            h_list: Vec::new(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub calibration: Option<CalibrationParams>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub df_mode: DfMode,
    #[serde(default)]
    pub variogram: VariogramSettings,
    #[serde(default)]
    pub kriging: KrigingSection,
    #[serde(default)]
    pub combine: Combine,
    /// Class order for outputs; empty means the order found in the signatures.
    #[serde(default)]
    pub classes: Vec<String>,
    #[serde(default)]
    pub harden_threshold: f64,
    /// Class priors for the Gaussian baselines, in class order.
    #[serde(default)]
    pub priors: Option<Vec<f64>>,
    #[serde(default)]
    pub assess: AssessSection,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
}

fn default_alpha() -> f64 {
    0.05
}

pub const METHODS: [&str; 5] = ["kbsc", "maxlike", "bayclass", "belclass", "fuzzyclass"];

pub fn check_method(name: &str) -> Result<()> {
    if METHODS.contains(&name) {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "unknown method `{name}`; expected one of {}",
            METHODS.join(", ")
        )))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.paths.resolve(dir);
        }
        Ok(cfg)
    }

    pub fn kbsc_config(&self) -> KbscConfig {
        KbscConfig {
            variogram: self.variogram,
            kriging: crate::kriging::KrigingConfig {
                max_neighbors: self.kriging.max_neighbors,
                search_radius: self.kriging.search_radius,
                clamp: self.kriging.clamp,
            },
            combine: self.combine,
            bands: None,
        }
    }

    /// Checks value ranges and the existence of referenced files.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Err(Error::validation(format!("{name}: {msg}")));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return field("alpha", format!("must be in (0, 1), got {}", self.alpha));
        }
        if self.variogram.n_bins < 3 {
            return field("variogram.n_bins", format!("must be at least 3, got {}", self.variogram.n_bins));
        }
        if let Some(l) = self.variogram.max_lag {
            if !(l > 0.0 && l.is_finite()) {
                return field("variogram.max_lag", format!("must be positive, got {l}"));
            }
        }
        if let Some(h) = self.kriging.out_pixel_size {
            if !(h > 0.0 && h.is_finite()) {
                return field("kriging.out_pixel_size", format!("must be positive, got {h}"));
            }
        }
        self.kbsc_config().kriging.validate()?;
        if !(0.0..=1.0).contains(&self.harden_threshold) {
            return field("harden_threshold", format!("must be in [0, 1], got {}", self.harden_threshold));
        }
        if !(self.assess.eps > 0.0) {
            return field("assess.eps", format!("must be positive, got {}", self.assess.eps));
        }
        if let Some(a) = self.assess.pixel_area {
            if !(a > 0.0) {
                return field("assess.pixel_area", format!("must be positive, got {a}"));
            }
        }
        if let Some(cal) = &self.calibration {
            cal.validate()?;
        }
        if let Some(s) = &self.synth {
            s.scene.validate()?;
            if s.samples_per_class < 2 {
                return field("synth.samples_per_class", format!("must be at least 2, got {}", s.samples_per_class));
            }
        }
        for m in &self.benchmark.methods {
            check_method(m)?;
        }
        if self.benchmark.jobs == 0 {
            return field("benchmark.jobs", "must be at least 1".into());
        }
        if let Some(h) = self.benchmark.h_list.iter().find(|h| !(**h > 0.0)) {
            return field("benchmark.h_list", format!("grid distances must be positive, got {h}"));
        }
        let p = &self.paths;
        for (name, path) in [
            ("paths.input", &p.input),
            ("paths.spectra_manifest", &p.spectra_manifest),
            ("paths.field_samples", &p.field_samples),
            ("paths.stats", &p.stats),
            ("paths.reference", &p.reference),
            ("paths.test", &p.test),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    return field(name, format!("{} does not exist", path.display()));
                }
            }
        }
        Ok(())
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.input,
            &mut self.spectra_manifest,
            &mut self.field_samples,
            &mut self.stats,
            &mut self.reference,
            &mut self.test,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }
}
