//! Synthetic scenes with known subpixel proportions.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)` and one stream per purpose:
//!
//! | stream | use                          |
//! |--------|------------------------------|
//! | 0      | latent white noise           |
//! | 1      | fine DN noise                |
//! | 2      | coarse sensor noise          |
//! | 3      | field (GHS) samples          |
//!
//! Uniforms are `(next_u64 >> 11) · 2⁻⁵³`; normals use Box–Muller on two
//! uniforms, `√(−2 ln(1 − u1)) · cos(2π u2)`, one normal per pair.
//!
//! The latent field is white noise smoothed by a separable Gaussian kernel
//! on a torus. Its standard deviation is `range / (2√3)` so the field has a
//! Gaussian covariance with practical range `autocorr_range`. Fine labels
//! come from cutting the sorted latent values at the cumulative target
//! fractions, so the first class takes the lowest values.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kbsc::{MapKind, ProbabilityMap};
use crate::raster::{upscale_mean, BandStack, Geometry, LabelGrid, RasterGrid};
use crate::signatures::ClassSamples;

const STREAM_LATENT: u64 = 0;
const STREAM_FINE: u64 = 1;
const STREAM_SENSOR: u64 = 2;
const STREAM_GHS: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub band_means: Vec<f64>,
    pub band_sds: Vec<f64>,
    pub target_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub fine_rows: usize,
    pub fine_cols: usize,
    /// Meters.
    pub fine_pixel_size: f64,
    pub coarsen_factor: usize,
    pub classes: Vec<ClassSpec>,
    /// Meters.
    pub autocorr_range: f64,
    /// Coarse sensor noise, DN.
    pub noise_sd: f64,
    /// Fine class indices to use instead of the latent field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl SceneSpec {
    pub fn bands(&self) -> usize {
        self.classes.first().map_or(0, |c| c.band_means.len())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }

    pub fn fine_geometry(&self) -> Result<Geometry> {
        Geometry::new(self.fine_rows, self.fine_cols, self.fine_pixel_size, (0.0, 0.0))
    }

    pub fn coarse_pixel_size(&self) -> f64 {
        self.fine_pixel_size * self.coarsen_factor as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::validation(format!("{field}: {why}")));
        if self.classes.is_empty() {
            return bad("classes", "at least one class is required".into());
        }
        if self.coarsen_factor < 2 {
            return bad("coarsen_factor", format!("must be at least 2, got {}", self.coarsen_factor));
        }
        if self.fine_rows == 0 || self.fine_cols == 0 {
            return bad("fine_rows/fine_cols", "must be positive".into());
        }
        if self.fine_rows % self.coarsen_factor != 0 || self.fine_cols % self.coarsen_factor != 0 {
            return bad(
                "coarsen_factor",
                format!(
                    "{} does not divide the {}x{} fine grid",
                    self.coarsen_factor, self.fine_rows, self.fine_cols
                ),
            );
        }
        if !(self.fine_pixel_size > 0.0 && self.fine_pixel_size.is_finite()) {
            return bad("fine_pixel_size", format!("must be positive, got {}", self.fine_pixel_size));
        }
        if !(self.autocorr_range > 0.0 && self.autocorr_range.is_finite()) {
            return bad("autocorr_range", format!("must be positive, got {}", self.autocorr_range));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd", format!("must be non-negative, got {}", self.noise_sd));
        }
        let bands = self.bands();
        if bands == 0 {
            return bad("band_means", "at least one band is required".into());
        }
        let mut total = 0.0;
        for c in &self.classes {
            if c.band_means.len() != bands || c.band_sds.len() != bands {
                return bad(
                    "band_means/band_sds",
                    format!("class `{}` must have {bands} values in both", c.label),
                );
            }
            if c.band_means.iter().any(|v| !v.is_finite()) {
                return bad("band_means", format!("class `{}` has a non-finite mean", c.label));
            }
            if c.band_sds.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad("band_sds", format!("class `{}` has a negative or non-finite sd", c.label));
            }
            if !(0.0..=1.0).contains(&c.target_fraction) {
                return bad(
                    "target_fraction",
                    format!("class `{}` has fraction {} outside [0, 1]", c.label, c.target_fraction),
                );
            }
            total += c.target_fraction;
        }
        if (total - 1.0).abs() > 1e-9 {
            return bad("target_fraction", format!("fractions sum to {total}, not 1"));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.fine_rows * self.fine_cols {
                return bad("labels", format!("{} labels for {} pixels", labels.len(), self.fine_rows * self.fine_cols));
            }
            if labels.iter().any(|&l| l >= self.classes.len()) {
                return bad("labels", "label index without a class".into());
            }
        }
        Ok(())
    }
}

/// Seeded uniform and normal draws.
pub struct Draws {
    rng: ChaCha8Rng,
}

impl Draws {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma < 1e-9 {
        return vec![1.0];
    }
    let half = (4.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-half..=half)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn smooth_periodic(field: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as isize;
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![0.0; field.len()];
    for r in 0..rows {
        for c in 0..cols {
            tmp[r * cols + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * field[r * cols + wrap(c as isize + k as isize - half, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; field.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[wrap(r as isize + k as isize - half, rows) * cols + c])
                .sum();
        }
    }
    out
}

/// Spatially correlated field with unit-scale white noise input.
pub fn latent_field(rows: usize, cols: usize, range_px: f64, seed: u64) -> Vec<f64> {
    let mut draws = Draws::new(seed, STREAM_LATENT);
    let noise: Vec<f64> = (0..rows * cols).map(|_| draws.normal()).collect();
    let sigma = range_px / (2.0 * 3f64.sqrt());
    smooth_periodic(&noise, rows, cols, &gaussian_kernel(sigma))
}

/// Assigns classes by cutting the sorted field at cumulative fractions.
pub fn quantile_labels(field: &[f64], fractions: &[f64]) -> Vec<usize> {
    let n = field.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| field[a].total_cmp(&field[b]).then(a.cmp(&b)));
    let mut labels = vec![0; n];
    let mut cum = 0.0;
    let mut start = 0;
    for (c, f) in fractions.iter().enumerate() {
        cum += f;
        let end = if c + 1 == fractions.len() {
            n
        } else {
            ((cum * n as f64).round() as usize).min(n)
        };
        for &i in &order[start..end.max(start)] {
            labels[i] = c;
        }
        start = end.max(start);
    }
    labels
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub labels: LabelGrid,
    pub fine: BandStack<f64>,
    pub coarse: BandStack<f64>,
    /// Fraction of each class's fine pixels per coarse cell.
    pub proportions: Vec<ProbabilityMap<f64>>,
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let geometry = spec.fine_geometry()?;
    let (rows, cols) = (spec.fine_rows, spec.fine_cols);
    let labels = match &spec.labels {
        Some(l) => l.clone(),
        None => {
            let field = latent_field(rows, cols, spec.autocorr_range / spec.fine_pixel_size, spec.seed);
            let fractions: Vec<f64> = spec.classes.iter().map(|c| c.target_fraction).collect();
            quantile_labels(&field, &fractions)
        }
    };
    let bands = spec.bands();
    let mut fine_noise = Draws::new(spec.seed, STREAM_FINE);
    let mut fine_bands: Vec<Vec<f64>> = vec![Vec::with_capacity(rows * cols); bands];
    for &l in &labels {
        let class = &spec.classes[l];
        for (b, band) in fine_bands.iter_mut().enumerate() {
            band.push(class.band_means[b] + class.band_sds[b] * fine_noise.normal());
        }
    }
    let fine = BandStack::new(
        fine_bands
            .into_iter()
            .map(|v| RasterGrid::from_geometry(geometry, v))
            .collect::<Result<_>>()?,
        None,
    )?;
    let mut sensor = Draws::new(spec.seed, STREAM_SENSOR);
    let mut coarse_bands = Vec::with_capacity(bands);
    for band in fine.bands() {
        let mean = upscale_mean(band, spec.coarsen_factor)?;
        let noisy = mean.values().iter().map(|v| v + spec.noise_sd * sensor.normal()).collect();
        coarse_bands.push(mean.with_values(noisy)?);
    }
    let coarse = BandStack::new(coarse_bands, None)?;
    let proportions = spec
        .classes
        .iter()
        .enumerate()
        .map(|(c, class)| {
            let one_hot = RasterGrid::from_geometry(
                geometry,
                labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect(),
            )?;
            Ok(ProbabilityMap::new(
                upscale_mean(&one_hot, spec.coarsen_factor)?,
                class.label.clone(),
                MapKind::Joint,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(Scene {
        labels: LabelGrid {
            geometry,
            classes: spec.class_names(),
            labels: labels.into_iter().map(Some).collect(),
        },
        fine,
        coarse,
        proportions,
    })
}

/// Field samples per class drawn from each band's Gaussian.
pub fn ghs_from_spec(spec: &SceneSpec, samples_per_class: usize) -> Result<Vec<ClassSamples>> {
    spec.validate()?;
    if samples_per_class < 2 {
        return Err(Error::validation(format!(
            "samples_per_class must be at least 2, got {samples_per_class}"
        )));
    }
    let mut draws = Draws::new(spec.seed, STREAM_GHS);
    Ok(spec
        .classes
        .iter()
        .map(|c| ClassSamples {
            label: c.label.clone(),
            samples: (0..samples_per_class)
                .map(|_| {
                    c.band_means
                        .iter()
                        .zip(&c.band_sds)
                        .map(|(m, s)| m + s * draws.normal())
                        .collect()
                })
                .collect(),
            spectral_band_counts: None,
        })
        .collect())
}
