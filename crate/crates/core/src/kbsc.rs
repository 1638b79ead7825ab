//! Kriging-based soft classification.
//!
//! For every class and band the DN band is turned into two indicator maps
//! against the class interval `[L, U]`:
//!
//! * upper: 1 where `DN ≤ U` (the pixel lies below the upper limit),
//! * lower: 1 where `DN ≥ L` (the pixel lies above the lower limit).
//!
//! Both comparisons are inclusive. Each indicator map gets its own fitted
//! variogram and is kriged onto the output grid, giving `p1 = Pr{DN ≤ U}`
//! and `p2 = Pr{DN ≥ L}`. The per-band probability combines them with
//! `p1 + p2 − p1·p2` (or `p1·p2` under [`Combine::Product`]), and the
//! class membership is the product of the band probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kriging::{predict_grid, KrigingConfig, KrigingDiagnostics};
use crate::raster::{BandStack, LabelGrid, RasterGrid};
use crate::scalar::{lit, Real};
use crate::signatures::SignatureStats;
use crate::variogram::{default_max_lag, empirical_variogram, fit_model, ModelFamily, VariogramFit, DEFAULT_BINS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Band(usize),
    Joint,
}

/// Per-class membership values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap<T> {
    pub grid: RasterGrid<T>,
    pub class: String,
    pub kind: MapKind,
}

impl<T: Real> ProbabilityMap<T> {
    pub fn new(grid: RasterGrid<T>, class: impl Into<String>, kind: MapKind) -> Self {
        Self {
            grid,
            class: class.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorPair<T> {
    pub upper: RasterGrid<T>,
    pub lower: RasterGrid<T>,
    pub class: String,
    pub band: usize,
}

/// How the two kriged limit maps of a band are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// `p1 + p2 − p1·p2`.
    #[default]
    Eq5,
    /// `p1·p2`, both limits satisfied under independence.
    Product,
}

pub fn indicator_maps<T: Real>(
    band: &RasterGrid<T>,
    stats: &SignatureStats,
    class: &str,
    band_index: usize,
) -> Result<IndicatorPair<T>> {
    let th = stats.get(class, band_index).ok_or_else(|| {
        Error::validation(format!(
            "no thresholds for class `{class}` band {band_index}"
        ))
    })?;
    let (u, l) = (lit::<T>(th.upper), lit::<T>(th.lower));
    let ind = |hit: bool| if hit { T::one() } else { T::zero() };
    Ok(IndicatorPair {
        upper: band.map(|v| if v.is_nan() { v } else { ind(v <= u) }),
        lower: band.map(|v| if v.is_nan() { v } else { ind(v >= l) }),
        class: class.to_string(),
        band: band_index,
    })
}

/// Pointwise combination of the kriged upper (`p1`) and lower (`p2`) maps.
pub fn band_probability<T: Real>(
    upper: &RasterGrid<T>,
    lower: &RasterGrid<T>,
    combine: Combine,
) -> Result<RasterGrid<T>> {
    if !upper.same_geometry(lower) {
        return Err(Error::validation("upper and lower maps differ in geometry"));
    }
    let values = upper
        .values()
        .iter()
        .zip(lower.values())
        .map(|(&p1, &p2)| match combine {
            Combine::Eq5 => p1 + p2 - p1 * p2,
            Combine::Product => p1 * p2,
        })
        .collect();
    upper.with_values(values)
}

/// Pointwise product of band probability maps.
pub fn joint_probability<T: Real>(band_maps: &[ProbabilityMap<T>]) -> Result<ProbabilityMap<T>> {
    let Some(first) = band_maps.first() else {
        return Err(Error::validation("joint probability needs at least one band map"));
    };
    let mut values = first.grid.values().to_vec();
    for m in &band_maps[1..] {
        if !m.grid.same_geometry(&first.grid) {
            return Err(Error::validation("band maps differ in geometry"));
        }
        if m.class != first.class {
            return Err(Error::validation(format!(
                "band maps mix classes `{}` and `{}`",
                first.class, m.class
            )));
        }
        for (v, &p) in values.iter_mut().zip(m.grid.values()) {
            *v = *v * p;
        }
    }
    Ok(ProbabilityMap::new(
        first.grid.with_values(values)?,
        first.class.clone(),
        MapKind::Joint,
    ))
}

/// Lag binning used for every indicator variogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramSettings {
    #[serde(default)]
    pub family: ModelFamily,
    /// Meters; `None` is half the grid diagonal.
    #[serde(default)]
    pub max_lag: Option<f64>,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl Default for VariogramSettings {
    fn default() -> Self {
        Self {
            family: ModelFamily::default(),
            max_lag: None,
            n_bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KbscConfig {
    #[serde(default)]
    pub variogram: VariogramSettings,
    #[serde(default)]
    pub kriging: KrigingConfig,
    #[serde(default)]
    pub combine: Combine,
    /// Bands to use, in order; `None` uses all bands of the stack.
    #[serde(default)]
    pub bands: Option<Vec<usize>>,
}

/// What happened to one indicator map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub fit: VariogramFit<f64>,
    pub kriging: KrigingDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub band: usize,
    pub upper: LimitReport,
    pub lower: LimitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub bands: Vec<BandReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFailure {
    pub class: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct KbscOutput<T> {
    /// One joint map per successfully classified class, in class order.
    pub maps: Vec<ProbabilityMap<T>>,
    /// Per-band maps, grouped per class like `maps`.
    pub band_maps: Vec<Vec<ProbabilityMap<T>>>,
    pub reports: Vec<ClassReport>,
    pub failures: Vec<ClassFailure>,
}

fn krige_indicator<T: Real>(
    indicator: &RasterGrid<T>,
    out_pixel_size: f64,
    config: &KbscConfig,
) -> Result<(RasterGrid<T>, LimitReport)> {
    let settings = &config.variogram;
    let max_lag = settings
        .max_lag
        .unwrap_or_else(|| default_max_lag(indicator.geometry()));
    let emp = empirical_variogram(indicator, max_lag, settings.n_bins)?;
    let fit = fit_model(&emp, settings.family)?;
    let kriged = predict_grid(indicator, &fit.model, out_pixel_size, &config.kriging)?;
    let report = LimitReport {
        fit: VariogramFit {
            model: fit.model.cast(),
            residual: crate::scalar::to_f64(fit.residual),
            range_unconstrained: fit.range_unconstrained,
        },
        kriging: kriged.diagnostics,
    };
    Ok((kriged.grid, report))
}

fn classify_one<T: Real>(
    stack: &BandStack<T>,
    stats: &SignatureStats,
    class: &str,
    bands: &[usize],
    out_pixel_size: f64,
    config: &KbscConfig,
) -> Result<(ProbabilityMap<T>, Vec<ProbabilityMap<T>>, ClassReport)> {
    let mut band_maps = Vec::with_capacity(bands.len());
    let mut reports = Vec::with_capacity(bands.len());
    for &b in bands {
        let grid = stack.bands().get(b).ok_or_else(|| {
            Error::validation(format!("band {b} not in stack of {} bands", stack.band_count()))
        })?;
        let pair = indicator_maps(grid, stats, class, b)?;
        let (upper, upper_report) = krige_indicator(&pair.upper, out_pixel_size, config)?;
        let (lower, lower_report) = krige_indicator(&pair.lower, out_pixel_size, config)?;
        let p = band_probability(&upper, &lower, config.combine)?;
        band_maps.push(ProbabilityMap::new(p, class, MapKind::Band(b)));
        reports.push(BandReport {
            band: b,
            upper: upper_report,
            lower: lower_report,
        });
    }
    let joint = joint_probability(&band_maps)?;
    Ok((
        joint,
        band_maps,
        ClassReport {
            class: class.to_string(),
            bands: reports,
        },
    ))
}

/// Runs the full pipeline for each class. A failing class is reported in
/// `failures` and the others are still produced.
pub fn classify_kbsc<T: Real>(
    stack: &BandStack<T>,
    stats: &SignatureStats,
    classes: &[String],
    out_pixel_size: f64,
    config: &KbscConfig,
) -> Result<KbscOutput<T>> {
    config.kriging.validate()?;
    let bands: Vec<usize> = config
        .bands
        .clone()
        .unwrap_or_else(|| (0..stack.band_count()).collect());
    if bands.is_empty() {
        return Err(Error::validation("no bands selected"));
    }
    let mut out = KbscOutput {
        maps: Vec::new(),
        band_maps: Vec::new(),
        reports: Vec::new(),
        failures: Vec::new(),
    };
    for class in classes {
        match classify_one(stack, stats, class, &bands, out_pixel_size, config) {
            Ok((joint, per_band, report)) => {
                out.maps.push(joint);
                out.band_maps.push(per_band);
                out.reports.push(report);
            }
            Err(e) => {
                log::error!("class `{class}` failed: {e}");
                out.failures.push(ClassFailure {
                    class: class.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Argmax over class maps with a minimum-probability gate. Ties go to the
/// earlier class; NaN memberships never win; pixels whose best value is
/// below `min_probability` stay unclassified.
pub fn harden<T: Real>(maps: &[ProbabilityMap<T>], min_probability: f64) -> Result<LabelGrid> {
    let Some(first) = maps.first() else {
        return Err(Error::validation("hardening needs at least one class map"));
    };
    if !(0.0..=1.0).contains(&min_probability) {
        return Err(Error::validation(format!(
            "min_probability must be in [0, 1], got {min_probability}"
        )));
    }
    if maps.iter().any(|m| !m.grid.same_geometry(&first.grid)) {
        return Err(Error::validation("class maps differ in geometry"));
    }
    let gate = lit::<T>(min_probability);
    let labels = (0..first.grid.values().len())
        .map(|i| {
            let mut best: Option<(usize, T)> = None;
            for (c, m) in maps.iter().enumerate() {
                let v = m.grid.values()[i];
                if v.is_nan() {
                    continue;
                }
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((c, v));
                }
            }
            best.filter(|&(_, v)| v >= gate).map(|(c, _)| c)
        })
        .collect();
    Ok(LabelGrid {
        geometry: *first.grid.geometry(),
        classes: maps.iter().map(|m| m.class.clone()).collect(),
        labels,
    })
}
