//! Ground spectra → per-band DN thresholds.
//!
//! Field spectra are averaged per class, reduced to sensor bands by
//! averaging the samples inside each band window, calibrated to DN, and
//! summarized as a Student-t interval `mean ± t·sd/√n` per class and band.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiometry::{reflectance_to_dn, CalibrationParams};
use crate::raster::BandWindow;

/// A reflectance spectrum on an ascending wavelength grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelengths_nm: Vec<f64>,
    pub reflectance: Vec<f64>,
    pub label: String,
}

impl Spectrum {
    pub fn new(wavelengths_nm: Vec<f64>, reflectance: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if wavelengths_nm.is_empty() || wavelengths_nm.len() != reflectance.len() {
            return Err(Error::validation(format!(
                "spectrum `{label}`: {} wavelengths vs {} reflectances",
                wavelengths_nm.len(),
                reflectance.len()
            )));
        }
        if wavelengths_nm.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::validation(format!(
                "spectrum `{label}`: wavelengths must be strictly ascending"
            )));
        }
        if let Some(r) = reflectance.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::validation(format!(
                "spectrum `{label}`: reflectance {r} outside [0, 1]"
            )));
        }
        Ok(Self {
            wavelengths_nm,
            reflectance,
            label,
        })
    }

    /// Number of spectral samples with `low ≤ λ ≤ high`.
    pub fn samples_in(&self, window: BandWindow) -> usize {
        self.wavelengths_nm
            .iter()
            .filter(|&&w| w >= window.low_nm && w <= window.high_nm)
            .count()
    }

    /// Reads a `wavelength_nm,reflectance` CSV. A non-numeric first line is
    /// treated as a header.
    pub fn from_csv(path: &Path, label: &str) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut wl = Vec::new();
        let mut refl = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (a, b) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    wl.push(x);
                    refl.push(y);
                }
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::format(format!(
                        "{}: line {}: expected two numbers",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
        Self::new(wl, refl, label)
    }
}

/// Reads a `file,class` manifest and the spectra it lists. Relative paths
/// resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<Spectrum>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("file,class")) {
            continue;
        }
        let (file, class) = line.split_once(',').ok_or_else(|| {
            Error::format(format!("{}: line {}: expected `file,class`", path.display(), i + 1))
        })?;
        out.push(Spectrum::from_csv(&base.join(file.trim()), class.trim())?);
    }
    Ok(out)
}

/// Pointwise mean of all spectra carrying `class`.
pub fn average_spectra(spectra: &[Spectrum], class: &str) -> Result<Spectrum> {
    let members: Vec<&Spectrum> = spectra.iter().filter(|s| s.label == class).collect();
    let Some(first) = members.first() else {
        return Err(Error::validation(format!("no spectra for class `{class}`")));
    };
    if members.iter().any(|s| s.wavelengths_nm != first.wavelengths_nm) {
        return Err(Error::validation(format!(
            "spectra of class `{class}` are on different wavelength grids"
        )));
    }
    let n = members.len() as f64;
    let reflectance = (0..first.reflectance.len())
        .map(|i| members.iter().map(|s| s.reflectance[i]).sum::<f64>() / n)
        .collect();
    Ok(Spectrum {
        wavelengths_nm: first.wavelengths_nm.clone(),
        reflectance,
        label: class.to_string(),
    })
}

/// Mean reflectance of the samples inside `window` (inclusive bounds).
pub fn band_integrate(spec: &Spectrum, window: BandWindow) -> Result<f64> {
    let (lo, hi) = (spec.wavelengths_nm[0], *spec.wavelengths_nm.last().unwrap());
    if window.low_nm < lo || window.high_nm > hi {
        return Err(Error::validation(format!(
            "band window ({}, {}) nm outside spectrum coverage ({lo}, {hi}) nm",
            window.low_nm, window.high_nm
        )));
    }
    let inside: Vec<f64> = spec
        .wavelengths_nm
        .iter()
        .zip(&spec.reflectance)
        .filter(|(w, _)| **w >= window.low_nm && **w <= window.high_nm)
        .map(|(_, r)| *r)
        .collect();
    if inside.is_empty() {
        return Err(Error::validation(format!(
            "no spectral samples inside band window ({}, {}) nm",
            window.low_nm, window.high_nm
        )));
    }
    Ok(inside.iter().sum::<f64>() / inside.len() as f64)
}

/// Two-sided Student-t critical value: `P(|T_df| ≤ t) = 1 − alpha`.
///
/// Uses `P(|T| > t) = I_{df/(df+t²)}(df/2, 1/2)` and bisects on `t` until
/// the bracket is below 1e-13 relative.
pub fn t_quantile(alpha: f64, df: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if !(df >= 1.0) || !df.is_finite() {
        return Err(Error::validation(format!(
            "degrees of freedom must be at least 1, got {df}"
        )));
    }
    let tail = |t: f64| statrs::function::beta::beta_reg(df / 2.0, 0.5, df / (df + t * t));
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while tail(hi) > alpha {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::numerical("t quantile bracket diverged"));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-band DN values of every field sample of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSamples {
    pub label: String,
    /// `samples[k][band]`: DN of field sample `k` in sensor band `band`.
    pub samples: Vec<Vec<f64>>,
    /// Spectral samples per sensor band window, when the DNs came from
    /// spectra. Needed for the spectral-band degrees of freedom.
    #[serde(default)]
    pub spectral_band_counts: Option<Vec<usize>>,
}

/// Which count plays the role of `n` in `mean ± t_{α,n}·sd/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DfMode {
    /// Number of spectral samples inside the sensor band window.
    #[default]
    Bands,
    /// Number of field samples minus one.
    Samples,
}

/// Interval for one class in one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandThreshold {
    pub mean: f64,
    pub sd: f64,
    pub df: f64,
    pub t: f64,
    pub upper: f64,
    pub lower: f64,
    /// Spread undefined (a single sample): the interval collapsed to the mean.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureStats {
    pub alpha: f64,
    pub df_mode: DfMode,
    /// class → per-band thresholds, in band order.
    pub classes: IndexMap<String, Vec<BandThreshold>>,
}

impl SignatureStats {
    pub fn get(&self, class: &str, band: usize) -> Option<&BandThreshold> {
        self.classes.get(class).and_then(|b| b.get(band))
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.keys().cloned().collect()
    }

    pub fn band_count(&self) -> usize {
        self.classes.values().map(Vec::len).min().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Interval `mean ± t·sd/√n` from a precomputed critical value.
pub fn interval(mean: f64, sd: f64, n: f64, t: f64) -> (f64, f64) {
    let half = t * sd / n.sqrt();
    (mean - half, mean + half)
}

/// Builds per-class per-band thresholds from field-sample DNs.
pub fn compute_thresholds(
    classes: &[ClassSamples],
    alpha: f64,
    df_mode: DfMode,
) -> Result<SignatureStats> {
    t_quantile(alpha, 1.0)?;
    let mut out = IndexMap::new();
    for cls in classes {
        let n_samples = cls.samples.len();
        if n_samples == 0 {
            return Err(Error::validation(format!(
                "class `{}` has no field samples",
                cls.label
            )));
        }
        let bands = cls.samples[0].len();
        if bands == 0 || cls.samples.iter().any(|s| s.len() != bands) {
            return Err(Error::validation(format!(
                "class `{}`: samples must all have the same non-zero band count",
                cls.label
            )));
        }
        let mut per_band = Vec::with_capacity(bands);
        for b in 0..bands {
            let vals: Vec<f64> = cls.samples.iter().map(|s| s[b]).collect();
            let mean = vals.iter().sum::<f64>() / n_samples as f64;
            if n_samples == 1 {
                log::warn!(
                    "class `{}` band {b}: single field sample, interval collapsed to the mean",
                    cls.label
                );
                per_band.push(BandThreshold {
                    mean,
                    sd: 0.0,
                    df: 0.0,
                    t: 0.0,
                    upper: mean,
                    lower: mean,
                    degenerate: true,
                });
                continue;
            }
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_samples - 1) as f64;
            let sd = var.sqrt();
            let n = match df_mode {
                DfMode::Samples => (n_samples - 1) as f64,
                DfMode::Bands => {
                    let counts = cls.spectral_band_counts.as_ref().ok_or_else(|| {
                        Error::validation(format!(
                            "class `{}`: df_mode `bands` needs spectral band counts; use df_mode `samples` for DN-only samples",
                            cls.label
                        ))
                    })?;
                    *counts.get(b).ok_or_else(|| {
                        Error::validation(format!("class `{}`: no spectral count for band {b}", cls.label))
                    })? as f64
                }
            };
            if n < 1.0 {
                return Err(Error::validation(format!(
                    "class `{}` band {b}: degrees of freedom is zero",
                    cls.label
                )));
            }
            let t = t_quantile(alpha, n)?;
            let (lower, upper) = interval(mean, sd, n, t);
            per_band.push(BandThreshold {
                mean,
                sd,
                df: n,
                t,
                upper,
                lower,
                degenerate: false,
            });
        }
        out.insert(cls.label.clone(), per_band);
    }
    Ok(SignatureStats {
        alpha,
        df_mode,
        classes: out,
    })
}

/// Calibrates every field spectrum into per-band DNs, grouped by class in
/// first-seen order.
pub fn spectra_to_band_dn(
    spectra: &[Spectrum],
    windows: &[BandWindow],
    cal: &CalibrationParams,
) -> Result<Vec<ClassSamples>> {
    if cal.band_count() != windows.len() {
        return Err(Error::validation(format!(
            "{} band windows but calibration for {} bands",
            windows.len(),
            cal.band_count()
        )));
    }
    let mut groups: IndexMap<String, Vec<&Spectrum>> = IndexMap::new();
    for s in spectra {
        groups.entry(s.label.clone()).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(label, members)| {
            let avg = average_spectra(spectra, &label)?;
            let counts = windows.iter().map(|w| avg.samples_in(*w)).collect();
            let samples = members
                .iter()
                .map(|s| {
                    windows
                        .iter()
                        .enumerate()
                        .map(|(b, w)| reflectance_to_dn(band_integrate(s, *w)?, b, cal))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ClassSamples {
                label,
                samples,
                spectral_band_counts: Some(counts),
            })
        })
        .collect()
}
