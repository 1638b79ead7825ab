//! Soft-classification accuracy against reference proportions.
//!
//! Both closeness measures work on per-pixel class proportions. Each map set
//! is normalized to sum to 1 per pixel first; a pixel whose memberships sum
//! to 0 becomes uniform and is counted in the report.
//!
//! * `S = (1/C) Σ_c (e1c − e2c)²`
//! * `D = −Σ f1 log2 f2 + Σ f1 log2 f1`, the Kullback-Leibler divergence of
//!   the test proportions from the reference, in bits. It keeps the name
//!   "cross entropy" used in reports. `f2` is clamped below at `eps` and
//!   terms with `f1 = 0` contribute 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kbsc::ProbabilityMap;
use crate::raster::{LabelGrid, RasterGrid};
use crate::scalar::{lit, stable_sum, to_f64, Real};

pub const DEFAULT_EPS: f64 = 1e-12;

/// Distribution summary over non-NaN values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation, 0 for a single value.
    pub sd: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = stable_sum(v.iter().copied()) / n as f64;
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        let sd = if n > 1 {
            (stable_sum(v.iter().map(|x| (x - mean).powi(2))) / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            median,
            sd,
            count: n,
        })
    }
}

/// Per-pixel proportions after normalization, one row per pixel, `None`
/// where any class map is NaN.
struct Proportions {
    rows: Vec<Option<Vec<f64>>>,
    zero_sum: usize,
}

fn proportions<T: Real>(maps: &[&ProbabilityMap<T>]) -> Result<Proportions> {
    let n = maps[0].grid.values().len();
    let k = maps.len();
    let mut zero_sum = 0;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let raw: Vec<f64> = maps.iter().map(|m| to_f64(m.grid.values()[i])).collect();
        if raw.iter().any(|v| v.is_nan()) {
            rows.push(None);
            continue;
        }
        if let Some(v) = raw.iter().find(|&&v| v < 0.0) {
            return Err(Error::validation(format!("negative proportion {v} at pixel {i}")));
        }
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            rows.push(Some(raw.iter().map(|v| v / total).collect()));
        } else {
            zero_sum += 1;
            rows.push(Some(vec![1.0 / k as f64; k]));
        }
    }
    Ok(Proportions { rows, zero_sum })
}

/// Pairs the test maps with the reference maps by class name, in reference
/// order.
fn align<'a, T: Real>(
    reference: &'a [ProbabilityMap<T>],
    test: &'a [ProbabilityMap<T>],
) -> Result<(Vec<&'a ProbabilityMap<T>>, Vec<&'a ProbabilityMap<T>>)> {
    let names = |m: &[ProbabilityMap<T>]| m.iter().map(|x| x.class.clone()).collect::<Vec<_>>();
    let (rn, tn) = (names(reference), names(test));
    let mut rs = rn.clone();
    let mut ts = tn.clone();
    rs.sort();
    ts.sort();
    if reference.is_empty() || rs != ts || {
        rs.dedup();
        rs.len() != rn.len()
    } {
        return Err(Error::validation(format!(
            "class lists differ: reference {rn:?}, test {tn:?}"
        )));
    }
    let geometry = reference[0].grid.geometry();
    if reference.iter().chain(test).any(|m| !m.grid.geometry().same_as(geometry)) {
        return Err(Error::validation("reference and test maps differ in geometry"));
    }
    let ordered = rn
        .iter()
        .map(|name| test.iter().find(|m| &m.class == name).expect("checked"))
        .collect();
    Ok((reference.iter().collect(), ordered))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGrid<T> {
    pub grid: RasterGrid<T>,
    pub summary: Option<Summary>,
}

fn per_pixel<T: Real>(
    reference: &[ProbabilityMap<T>],
    test: &[ProbabilityMap<T>],
    f: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<(MetricGrid<T>, usize)> {
    let (r, t) = align(reference, test)?;
    let pr = proportions(&r)?;
    let pt = proportions(&t)?;
    let values: Vec<f64> = pr
        .rows
        .iter()
        .zip(&pt.rows)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => f(a, b),
            _ => f64::NAN,
        })
        .collect();
    let summary = Summary::of(values.iter().copied());
    let grid = r[0].grid.with_values(values.into_iter().map(lit).collect())?;
    Ok((MetricGrid { grid, summary }, pr.zero_sum + pt.zero_sum))
}

fn s_value(a: &[f64], b: &[f64]) -> f64 {
    stable_sum(a.iter().zip(b).map(|(x, y)| (x - y).powi(2))) / a.len() as f64
}

fn d_value(f1: &[f64], f2: &[f64], eps: f64) -> f64 {
    stable_sum(f1.iter().zip(f2).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * (p / q.max(eps)).log2()))
}

pub fn mse_closeness<T: Real>(reference: &[ProbabilityMap<T>], test: &[ProbabilityMap<T>]) -> Result<MetricGrid<T>> {
    Ok(per_pixel(reference, test, s_value)?.0)
}

pub fn cross_entropy<T: Real>(
    reference: &[ProbabilityMap<T>],
    test: &[ProbabilityMap<T>],
    eps: f64,
) -> Result<MetricGrid<T>> {
    if !(eps > 0.0) {
        return Err(Error::validation(format!("eps must be positive, got {eps}")));
    }
    Ok(per_pixel(reference, test, |a, b| d_value(a, b, eps))?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub r2: f64,
    pub pairs: usize,
}

/// Pearson correlation over pixels where both maps are defined.
pub fn class_correlation<T: Real>(reference: &ProbabilityMap<T>, test: &ProbabilityMap<T>) -> Result<Correlation> {
    if !reference.grid.same_geometry(&test.grid) {
        return Err(Error::validation("maps differ in geometry"));
    }
    let pairs: Vec<(f64, f64)> = reference
        .grid
        .values()
        .iter()
        .zip(test.grid.values())
        .map(|(&a, &b)| (to_f64(a), to_f64(b)))
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::UndefinedCorrelation(format!("{n} paired pixels")));
    }
    let mx = stable_sum(pairs.iter().map(|p| p.0)) / n as f64;
    let my = stable_sum(pairs.iter().map(|p| p.1)) / n as f64;
    let sxy = stable_sum(pairs.iter().map(|(a, b)| (a - mx) * (b - my)));
    let sxx = stable_sum(pairs.iter().map(|(a, _)| (a - mx).powi(2)));
    let syy = stable_sum(pairs.iter().map(|(_, b)| (b - my).powi(2)));
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(format!(
            "zero variance in {}",
            if sxx == 0.0 { "reference" } else { "test" }
        )));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(Correlation { r, r2: r * r, pairs: n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCorrelation {
    pub class: String,
    /// `None` when the correlation is undefined (constant map).
    pub correlation: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub s: Option<Summary>,
    pub d: Option<Summary>,
    pub correlations: Vec<ClassCorrelation>,
    pub pixels: usize,
    /// Pixels whose memberships summed to 0 and were made uniform.
    pub zero_sum_pixels: usize,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct Closeness<T> {
    pub s_grid: RasterGrid<T>,
    pub d_grid: RasterGrid<T>,
    pub report: ClosenessReport,
}

/// S, D and per-class correlations in one pass.
pub fn assess_closeness<T: Real>(
    reference: &[ProbabilityMap<T>],
    test: &[ProbabilityMap<T>],
    eps: f64,
) -> Result<Closeness<T>> {
    let (s, zero_sum) = per_pixel(reference, test, s_value)?;
    let d = cross_entropy(reference, test, eps)?;
    let (r, t) = align(reference, test)?;
    let correlations = r
        .iter()
        .zip(&t)
        .map(|(a, b)| match class_correlation(a, b) {
            Ok(c) => Ok(ClassCorrelation {
                class: a.class.clone(),
                correlation: Some(c),
            }),
            Err(Error::UndefinedCorrelation(msg)) => {
                log::warn!("correlation for `{}` undefined: {msg}", a.class);
                Ok(ClassCorrelation {
                    class: a.class.clone(),
                    correlation: None,
                })
            }
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok(Closeness {
        report: ClosenessReport {
            s: s.summary,
            d: d.summary,
            correlations,
            pixels: s.summary.map_or(0, |x| x.count),
            zero_sum_pixels: zero_sum,
            eps,
        },
        s_grid: s.grid,
        d_grid: d.grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaEstimate {
    pub hectares: f64,
    /// Pixels that were NaN and contributed nothing.
    pub nan_pixels: usize,
}

/// Σ proportion × pixel area.
pub fn area_estimate<T: Real>(map: &ProbabilityMap<T>, pixel_area_ha: f64) -> AreaEstimate {
    let nan_pixels = map.grid.values().iter().filter(|v| v.is_nan()).count();
    AreaEstimate {
        hectares: stable_sum(map.grid.valid_values().map(to_f64)) * pixel_area_ha,
        nan_pixels,
    }
}

/// Hectares covered by a square pixel of the given side in meters.
pub fn pixel_area_ha(pixel_size_m: f64) -> f64 {
    pixel_size_m * pixel_size_m / 1e4
}

pub fn percent_deviation(estimate: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::validation(format!("reference area must be positive, got {reference}")));
    }
    Ok(100.0 * (estimate - reference) / reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassArea {
    pub class: String,
    pub estimate_ha: f64,
    pub reference_ha: f64,
    pub percent_deviation: Option<f64>,
    pub nan_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    pub pixel_area_ha: f64,
    pub classes: Vec<ClassArea>,
}

pub fn area_report<T: Real>(
    reference: &[ProbabilityMap<T>],
    test: &[ProbabilityMap<T>],
    pixel_area_ha: f64,
) -> Result<AreaReport> {
    let (r, t) = align(reference, test)?;
    let classes = r
        .iter()
        .zip(&t)
        .map(|(a, b)| {
            let reference_ha = area_estimate(a, pixel_area_ha).hectares;
            let est = area_estimate(b, pixel_area_ha);
            ClassArea {
                class: a.class.clone(),
                estimate_ha: est.hectares,
                reference_ha,
                percent_deviation: percent_deviation(est.hectares, reference_ha).ok(),
                nan_pixels: est.nan_pixels,
            }
        })
        .collect();
    Ok(AreaReport {
        pixel_area_ha,
        classes,
    })
}

/// One-hot proportion maps from hard labels; unclassified pixels are 0 in
/// every class.
pub fn one_hot<T: Real>(labels: &LabelGrid) -> Vec<ProbabilityMap<T>> {
    labels
        .classes
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let values = labels
                .labels
                .iter()
                .map(|l| if *l == Some(c) { T::one() } else { T::zero() })
                .collect();
            ProbabilityMap::new(
                RasterGrid::from_geometry(labels.geometry, values).expect("label geometry"),
                name.clone(),
                crate::kbsc::MapKind::Joint,
            )
        })
        .collect()
}
