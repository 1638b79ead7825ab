//! Ordinary kriging: BLUE weights under the unit-sum constraint, and grid
//! prediction at any output pixel size.
//!
//! The weights solve the augmented system
//!
//! ```text
//! | Γ   1 | |λ|   |γ(x_l, x_0)|
//! | 1ᵀ  0 | |μ| = |     1     |
//! ```
//!
//! with `Γ_lm = γ(|x_l − x_m|)`, by LU with partial pivoting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::raster::RasterGrid;
use crate::scalar::{lit, to_f64, Real};
use crate::variogram::VariogramModel;

/// Below this many valid samples every prediction uses all of them.
pub const GLOBAL_KRIGING_MAX_SAMPLES: usize = 64;

/// One ordinary kriging problem.
#[derive(Debug, Clone, Copy)]
pub struct KrigingSystem<'a, T> {
    pub locations: &'a [[T; 2]],
    pub values: &'a [T],
    pub model: &'a VariogramModel<T>,
    pub target: [T; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingWeights<T> {
    pub weights: Vec<T>,
    pub lagrange: T,
}

#[inline]
fn dist<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Solves for the kriging weights and Lagrange multiplier.
pub fn solve_weights<T: Real>(system: &KrigingSystem<'_, T>) -> Result<KrigingWeights<T>> {
    let locs = system.locations;
    let k = locs.len();
    if k == 0 {
        return Err(Error::validation("kriging needs at least one sample"));
    }
    if k == 1 {
        return Ok(KrigingWeights {
            weights: vec![T::one()],
            lagrange: system.model.eval(dist(locs[0], system.target)),
        });
    }
    let n = k + 1;
    let mut a = vec![T::zero(); n * n];
    for i in 0..k {
        for j in i + 1..k {
            let d = dist(locs[i], locs[j]);
            if d == T::zero() {
                return Err(Error::numerical(format!(
                    "singular kriging system: samples {i} and {j} share location ({}, {})",
                    locs[i][0], locs[i][1]
                )));
            }
            let g = system.model.eval(d);
            a[i * n + j] = g;
            a[j * n + i] = g;
        }
        a[i * n + k] = T::one();
        a[k * n + i] = T::one();
    }
    let mut rhs: Vec<T> = locs.iter().map(|&x| system.model.eval(dist(x, system.target))).collect();
    rhs.push(T::one());
    let lu = Lu::factor(&a, n).map_err(|e| {
        Error::numerical(format!(
            "singular kriging system ({k} samples, model {:?} nugget {} sill {} range {}): {e}",
            system.model.family, system.model.nugget, system.model.sill, system.model.range
        ))
    })?;
    let mut sol = lu.solve(&rhs);
    let lagrange = sol.pop().expect("augmented solution");
    Ok(KrigingWeights {
        weights: sol,
        lagrange,
    })
}

/// Kriged estimate `Σ λ_l z_l`. A target on a sample location returns that
/// sample's value.
pub fn predict_point<T: Real>(system: &KrigingSystem<'_, T>) -> Result<T> {
    if system.values.len() != system.locations.len() {
        return Err(Error::validation("kriging needs one value per location"));
    }
    if let Some(i) = system
        .locations
        .iter()
        .position(|&x| dist(x, system.target) == T::zero())
    {
        return Ok(system.values[i]);
    }
    let w = solve_weights(system)?;
    Ok(crate::scalar::stable_sum(
        w.weights.iter().zip(system.values).map(|(&l, &z)| l * z),
    ))
}

fn default_max_neighbors() -> usize {
    16
}

fn default_clamp() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingConfig {
    #[serde(default = "default_max_neighbors")]
    pub max_neighbors: usize,
    /// Meters. `None` uses four variogram ranges, but never less than four
    /// input pixels.
    #[serde(default)]
    pub search_radius: Option<f64>,
    /// Clip predictions to `[0, 1]` (indicator data).
    #[serde(default = "default_clamp")]
    pub clamp: bool,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        Self {
            max_neighbors: default_max_neighbors(),
            search_radius: None,
            clamp: default_clamp(),
        }
    }
}

impl KrigingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_neighbors == 0 {
            return Err(Error::validation("max_neighbors must be at least 1"));
        }
        if let Some(r) = self.search_radius {
            if !(r > 0.0) {
                return Err(Error::validation(format!("search_radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn radius_for<T: Real>(&self, model: &VariogramModel<T>, pixel_size: f64) -> f64 {
        self.search_radius
            .unwrap_or_else(|| (4.0 * to_f64(model.range)).max(4.0 * pixel_size))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KrigingDiagnostics {
    pub cells: usize,
    pub nan_cells: usize,
    pub clamped_cells: usize,
    pub min_neighbors: usize,
    pub max_neighbors: usize,
    pub mean_neighbors: f64,
    pub global: bool,
    pub constant_input: bool,
    pub search_radius: f64,
}

#[derive(Debug, Clone)]
pub struct KrigedGrid<T> {
    pub grid: RasterGrid<T>,
    pub diagnostics: KrigingDiagnostics,
}

/// Valid samples of a grid as point data at pixel centers, in local
/// coordinates (x east, y south, meters from the origin corner).
struct PointSamples<T> {
    locations: Vec<[T; 2]>,
    values: Vec<T>,
    /// Sample index per grid cell, `usize::MAX` for NaN cells.
    index: Vec<usize>,
    rows: usize,
    cols: usize,
    pixel_size: f64,
}

impl<T: Real> PointSamples<T> {
    fn from_grid(grid: &RasterGrid<T>) -> Self {
        let ps = grid.pixel_size();
        let mut locations = Vec::new();
        let mut values = Vec::new();
        let mut index = vec![usize::MAX; grid.values().len()];
        for r in 0..grid.rows() {
            for c in 0..grid.cols() {
                let v = grid.get(r, c);
                if v.is_nan() {
                    continue;
                }
                index[r * grid.cols() + c] = values.len();
                locations.push([lit((c as f64 + 0.5) * ps), lit((r as f64 + 0.5) * ps)]);
                values.push(v);
            }
        }
        Self {
            locations,
            values,
            index,
            rows: grid.rows(),
            cols: grid.cols(),
            pixel_size: ps,
        }
    }

    /// Up to `max` nearest samples within `radius` of `(x, y)`, ordered by
    /// distance then sample index.
    fn neighbors(&self, x: f64, y: f64, max: usize, radius: f64) -> Vec<usize> {
        let ps = self.pixel_size;
        let fr = y / ps - 0.5;
        let fc = x / ps - 0.5;
        let r0 = fr.round().clamp(0.0, (self.rows - 1) as f64) as isize;
        let c0 = fc.round().clamp(0.0, (self.cols - 1) as f64) as isize;
        let slack = (fr - r0 as f64).abs().max((fc - c0 as f64).abs());
        let max_ring = self.rows.max(self.cols) as isize;
        let mut found: Vec<(f64, usize)> = Vec::new();
        for d in 0..=max_ring {
            let lower = ((d as f64 - slack) * ps).max(0.0);
            if lower > radius {
                break;
            }
            if found.len() >= max {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if lower > found[max - 1].0 {
                    break;
                }
            }
            let mut visit = |r: isize, c: isize| {
                if r < 0 || c < 0 || r >= self.rows as isize || c >= self.cols as isize {
                    return;
                }
                let idx = self.index[r as usize * self.cols + c as usize];
                if idx == usize::MAX {
                    return;
                }
                let loc = self.locations[idx];
                let dx = to_f64(loc[0]) - x;
                let dy = to_f64(loc[1]) - y;
                let dd = (dx * dx + dy * dy).sqrt();
                if dd <= radius {
                    found.push((dd, idx));
                }
            };
            if d == 0 {
                visit(r0, c0);
                continue;
            }
            for c in c0 - d..=c0 + d {
                visit(r0 - d, c);
                visit(r0 + d, c);
            }
            for r in r0 - d + 1..=r0 + d - 1 {
                visit(r, c0 - d);
                visit(r, c0 + d);
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(max);
        found.into_iter().map(|(_, i)| i).collect()
    }
}

/// Kriges a grid, taken as point samples at pixel centers, onto a grid of
/// `out_pixel_size` over the same origin and extent.
///
/// Each output center uses its `max_neighbors` nearest samples within the
/// search radius, or all samples when there are at most
/// [`GLOBAL_KRIGING_MAX_SAMPLES`]. Cells with no neighbor are NaN. When
/// every valid sample has the same value the output is that constant.
pub fn predict_grid<T: Real>(
    samples: &RasterGrid<T>,
    model: &VariogramModel<T>,
    out_pixel_size: f64,
    config: &KrigingConfig,
) -> Result<KrigedGrid<T>> {
    config.validate()?;
    let out_geom = samples.geometry().resampled(out_pixel_size)?;
    let pts = PointSamples::from_grid(samples);
    if pts.values.is_empty() {
        return Err(Error::validation("kriging input has no valid pixels"));
    }
    let radius = config.radius_for(model, samples.pixel_size());
    let global = pts.values.len() <= GLOBAL_KRIGING_MAX_SAMPLES;
    let mut diag = KrigingDiagnostics {
        cells: out_geom.len(),
        global,
        search_radius: radius,
        ..Default::default()
    };

    let first = pts.values[0];
    if pts.values.iter().all(|&v| v == first) {
        diag.constant_input = true;
        diag.min_neighbors = pts.values.len();
        diag.max_neighbors = pts.values.len();
        diag.mean_neighbors = pts.values.len() as f64;
        return Ok(KrigedGrid {
            grid: RasterGrid::filled(out_geom, first),
            diagnostics: diag,
        });
    }
    if model.total_sill() <= T::zero() {
        return Err(Error::numerical(
            "variogram model has zero sill but the input is not constant",
        ));
    }

    let all: Vec<usize> = (0..pts.values.len()).collect();
    let cells: Vec<(usize, usize)> = (0..out_geom.rows)
        .flat_map(|r| (0..out_geom.cols).map(move |c| (r, c)))
        .collect();
    let results: Vec<Result<(T, usize)>> = cells
        .par_iter()
        .map(|&(r, c)| {
            let x = (c as f64 + 0.5) * out_pixel_size;
            let y = (r as f64 + 0.5) * out_pixel_size;
            let idx = if global {
                all.clone()
            } else {
                pts.neighbors(x, y, config.max_neighbors, radius)
            };
            if idx.is_empty() {
                return Ok((T::nan(), 0));
            }
            let locations: Vec<[T; 2]> = idx.iter().map(|&i| pts.locations[i]).collect();
            let values: Vec<T> = idx.iter().map(|&i| pts.values[i]).collect();
            let system = KrigingSystem {
                locations: &locations,
                values: &values,
                model,
                target: [lit(x), lit(y)],
            };
            Ok((predict_point(&system)?, idx.len()))
        })
        .collect();

    let mut values = Vec::with_capacity(cells.len());
    let mut nsum = 0usize;
    let mut counted = 0usize;
    diag.min_neighbors = usize::MAX;
    for res in results {
        let (mut v, n) = res?;
        if n == 0 {
            diag.nan_cells += 1;
        } else {
            nsum += n;
            counted += 1;
            diag.min_neighbors = diag.min_neighbors.min(n);
            diag.max_neighbors = diag.max_neighbors.max(n);
            if config.clamp && (v < T::zero() || v > T::one()) {
                v = v.max(T::zero()).min(T::one());
                diag.clamped_cells += 1;
            }
        }
        values.push(v);
    }
    if counted == 0 {
        diag.min_neighbors = 0;
    } else {
        diag.mean_neighbors = nsum as f64 / counted as f64;
    }
    if diag.nan_cells > 0 {
        log::warn!(
            "{} of {} kriged cells had no sample within {radius} m",
            diag.nan_cells,
            diag.cells
        );
    }
    Ok(KrigedGrid {
        grid: RasterGrid::from_geometry(out_geom, values)?,
        diagnostics: diag,
    })
}
