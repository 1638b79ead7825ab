//! Empirical semivariograms on regular grids and permissible model fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Geometry, RasterGrid};
use crate::scalar::{lit, to_f64, CompensatedSum, Real};

/// Default number of lag bins.
pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Nugget,
    #[default]
    Spherical,
    Exponential,
    Gaussian,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::Nugget,
        ModelFamily::Spherical,
        ModelFamily::Exponential,
        ModelFamily::Gaussian,
    ];

    /// Normalized structure function `g(u)`, `u = h / range`, rising from 0
    /// towards 1. The exponential and gaussian forms use the practical range.
    #[inline]
    pub fn shape<T: Real>(self, u: T) -> T {
        let three = lit::<T>(3.0);
        match self {
            ModelFamily::Nugget => T::one(),
            ModelFamily::Spherical => {
                if u >= T::one() {
                    T::one()
                } else {
                    lit::<T>(1.5) * u - lit::<T>(0.5) * u * u * u
                }
            }
            ModelFamily::Exponential => T::one() - (-three * u).exp(),
            ModelFamily::Gaussian => T::one() - (-three * u * u).exp(),
        }
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nugget" => Ok(Self::Nugget),
            "spherical" => Ok(Self::Spherical),
            "exponential" => Ok(Self::Exponential),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::validation(format!("unknown variogram family `{other}`"))),
        }
    }
}

/// Binned semivariance estimates. Empty bins carry `pair_counts == 0` and a
/// zero estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariogram<T> {
    pub lags: Vec<T>,
    pub gamma: Vec<T>,
    pub pair_counts: Vec<u64>,
}

impl<T: Real> EmpiricalVariogram<T> {
    pub fn new(lags: Vec<T>, gamma: Vec<T>, pair_counts: Vec<u64>) -> Result<Self> {
        if lags.len() != gamma.len() || lags.len() != pair_counts.len() {
            return Err(Error::validation("variogram lists must have equal length"));
        }
        if lags.iter().any(|h| !(*h > T::zero())) || lags.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::validation("lags must be positive and strictly ascending"));
        }
        if gamma.iter().any(|g| !(*g >= T::zero())) {
            return Err(Error::validation("semivariances must be non-negative"));
        }
        Ok(Self {
            lags,
            gamma,
            pair_counts,
        })
    }

    pub fn non_empty_bins(&self) -> usize {
        self.pair_counts.iter().filter(|&&n| n > 0).count()
    }

    /// `lag,gamma,count` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,gamma,count\n");
        for ((h, g), n) in self.lags.iter().zip(&self.gamma).zip(&self.pair_counts) {
            s.push_str(&format!("{h},{g},{n}\n"));
        }
        s
    }
}

/// Half the grid diagonal.
pub fn default_max_lag(geometry: &Geometry) -> f64 {
    let (w, h) = geometry.extent();
    0.5 * (w * w + h * h).sqrt()
}

/// Omnidirectional semivariogram of all pixel pairs whose center distance
/// falls in `(0, max_lag]`, split into `n_bins` equal-width bins. A bin
/// `k` holds distances in `(k·w, (k+1)·w]`; its lag is the bin center.
/// Pairs with a NaN member are skipped.
pub fn empirical_variogram<T: Real>(
    grid: &RasterGrid<T>,
    max_lag: f64,
    n_bins: usize,
) -> Result<EmpiricalVariogram<T>> {
    if !(max_lag > 0.0) {
        return Err(Error::validation(format!("max_lag must be positive, got {max_lag}")));
    }
    if n_bins == 0 {
        return Err(Error::validation("n_bins must be at least 1"));
    }
    if grid.valid_values().take(2).count() < 2 {
        return Err(Error::validation("variogram needs at least two valid pixels"));
    }
    let (rows, cols) = (grid.rows() as isize, grid.cols() as isize);
    let ps = grid.pixel_size();
    let width = max_lag / n_bins as f64;
    let reach = (max_lag / ps + 1e-9).floor() as isize;
    let mut offsets = Vec::new();
    for dr in 0..=reach.min(rows - 1) {
        for dc in -reach.min(cols - 1)..=reach.min(cols - 1) {
            if dr == 0 && dc <= 0 {
                continue;
            }
            let d = ps * ((dr * dr + dc * dc) as f64).sqrt();
            if d <= max_lag * (1.0 + 1e-12) {
                let bin = (((d / width) * (1.0 - 1e-12)).ceil() as usize).clamp(1, n_bins) - 1;
                offsets.push((dr, dc, bin));
            }
        }
    }
    let values = grid.values();
    let partials: Vec<(usize, CompensatedSum<T>, u64)> = offsets
        .par_iter()
        .map(|&(dr, dc, bin)| {
            let mut acc = CompensatedSum::new();
            let mut n = 0u64;
            let c_lo = (-dc).max(0);
            let c_hi = cols - dc.max(0);
            for r in 0..rows - dr {
                let row_a = (r * cols) as usize;
                let row_b = ((r + dr) * cols) as usize;
                for c in c_lo..c_hi {
                    let a = values[row_a + c as usize];
                    let b = values[row_b + (c + dc) as usize];
                    if a.is_nan() || b.is_nan() {
                        continue;
                    }
                    let d = a - b;
                    acc.add(d * d);
                    n += 1;
                }
            }
            (bin, acc, n)
        })
        .collect();
    let mut sums = vec![CompensatedSum::<T>::new(); n_bins];
    let mut counts = vec![0u64; n_bins];
    for (bin, acc, n) in &partials {
        sums[*bin].merge(acc);
        counts[*bin] += n;
    }
    if counts.iter().all(|&n| n == 0) {
        return Err(Error::validation("no valid pixel pairs within max_lag"));
    }
    let gamma = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            if n == 0 {
                T::zero()
            } else {
                s.value() / lit::<T>(2.0 * n as f64)
            }
        })
        .collect();
    let lags = (0..n_bins).map(|k| lit((k as f64 + 0.5) * width)).collect();
    EmpiricalVariogram::new(lags, gamma, counts)
}

/// Nugget `c0`, partial sill `c` and range `a` of one structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel<T> {
    pub family: ModelFamily,
    pub nugget: T,
    pub sill: T,
    pub range: T,
}

impl<T: Real> VariogramModel<T> {
    pub fn new(family: ModelFamily, nugget: T, sill: T, range: T) -> Result<Self> {
        if !(nugget >= T::zero()) || !(sill >= T::zero()) {
            return Err(Error::validation("nugget and partial sill must be non-negative"));
        }
        if !(range > T::zero()) {
            return Err(Error::validation(format!("range must be positive, got {range}")));
        }
        Ok(Self {
            family,
            nugget,
            sill,
            range,
        })
    }

    /// γ(h); zero at `h = 0` for every family.
    #[inline]
    pub fn eval(&self, h: T) -> T {
        if h <= T::zero() {
            T::zero()
        } else {
            self.nugget + self.sill * self.family.shape(h / self.range)
        }
    }

    pub fn total_sill(&self) -> T {
        self.nugget + self.sill
    }

    pub fn cast<U: Real>(&self) -> VariogramModel<U> {
        VariogramModel {
            family: self.family,
            nugget: lit(to_f64(self.nugget)),
            sill: lit(to_f64(self.sill)),
            range: lit(to_f64(self.range)),
        }
    }
}

/// `model_eval` as a free function.
pub fn model_eval<T: Real>(model: &VariogramModel<T>, h: T) -> T {
    model.eval(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramFit<T> {
    pub model: VariogramModel<T>,
    /// Weighted sum of squared residuals at the optimum.
    pub residual: T,
    /// The data do not pin the range down (flat or purely nugget variogram).
    pub range_unconstrained: bool,
}

struct FitData {
    lags: Vec<f64>,
    gamma: Vec<f64>,
    weights: Vec<f64>,
}

impl FitData {
    fn objective(&self, family: ModelFamily, c0: f64, c: f64, a: f64) -> f64 {
        self.lags
            .iter()
            .zip(&self.gamma)
            .zip(&self.weights)
            .map(|((&h, &g), &w)| {
                let r = g - (c0 + c * family.shape(h / a));
                w * r * r
            })
            .sum()
    }

    /// Best non-negative (c0, c) for a fixed range.
    fn best_sills(&self, family: ModelFamily, a: f64) -> (f64, f64, f64) {
        let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((&h, &g), &w) in self.lags.iter().zip(&self.gamma).zip(&self.weights) {
            let s = family.shape(h / a);
            s11 += w;
            s12 += w * s;
            s22 += w * s * s;
            b1 += w * g;
            b2 += w * s * g;
        }
        let mut candidates = vec![(b1 / s11, 0.0)];
        if s22 > 0.0 {
            candidates.push((0.0, b2 / s22));
        }
        let det = s11 * s22 - s12 * s12;
        if det > 1e-10 * s11 * s22 {
            candidates.push(((b1 * s22 - b2 * s12) / det, (s11 * b2 - s12 * b1) / det));
        }
        candidates.push((0.0, 0.0));
        candidates
            .into_iter()
            .filter(|&(c0, c)| c0 >= 0.0 && c >= 0.0)
            .map(|(c0, c)| (c0, c, self.objective(family, c0, c, a)))
            .fold((0.0, 0.0, f64::INFINITY), |best, cur| if cur.2 < best.2 { cur } else { best })
    }
}

/// Search interval for the range: from a twentieth of the shortest populated
/// lag to twenty times the longest.
pub fn range_bounds<T: Real>(emp: &EmpiricalVariogram<T>) -> Option<(f64, f64)> {
    let populated: Vec<f64> = emp
        .lags
        .iter()
        .zip(&emp.pair_counts)
        .filter(|(_, &n)| n > 0)
        .map(|(h, _)| to_f64(*h))
        .collect();
    let lo = populated.first()?;
    let hi = populated.last()?;
    Some((0.05 * lo, 20.0 * hi))
}

const RANGE_GRID: usize = 64;
const OBJECTIVE_TOL: f64 = 1e-8;

/// Weighted least-squares fit minimizing `Σ N(h)·(γ̂(h) − γ(h))²`.
///
/// The sills enter linearly, so for each candidate range the best
/// non-negative pair is solved exactly. The range is searched on a
/// log-spaced grid, and the three best local minima are refined by
/// golden-section search until the bracket's objective spread drops
/// below 1e-8 (relative).
pub fn fit_model<T: Real>(emp: &EmpiricalVariogram<T>, family: ModelFamily) -> Result<VariogramFit<T>> {
    let mut data = FitData {
        lags: Vec::new(),
        gamma: Vec::new(),
        weights: Vec::new(),
    };
    for ((h, g), &n) in emp.lags.iter().zip(&emp.gamma).zip(&emp.pair_counts) {
        if n > 0 {
            data.lags.push(to_f64(*h));
            data.gamma.push(to_f64(*g));
            data.weights.push(n as f64);
        }
    }
    if data.lags.len() < 3 {
        return Err(Error::validation(format!(
            "variogram fit needs at least 3 non-empty bins, got {}",
            data.lags.len()
        )));
    }
    let (a_lo, a_hi) = range_bounds(emp).expect("non-empty bins");
    let max_lag = *data.lags.last().unwrap();

    let finish = |c0: f64, c: f64, a: f64, obj: f64| -> Result<VariogramFit<T>> {
        if !obj.is_finite() {
            return Err(Error::NonConvergence {
                message: "objective is not finite".into(),
                best: VariogramModel::new(family, c0, c, a).ok(),
                residual: obj,
            });
        }
        let unconstrained =
            family == ModelFamily::Nugget || c <= 0.0 || family.shape(data.lags[0] / a) > 1.0 - 1e-6;
        Ok(VariogramFit {
            model: VariogramModel::new(family, lit(c0), lit(c), lit(a))?,
            residual: lit(obj),
            range_unconstrained: unconstrained,
        })
    };

    if family == ModelFamily::Nugget {
        let (c0, _, obj) = data.best_sills(family, max_lag);
        return finish(c0, 0.0, max_lag, obj);
    }

    let (ln_lo, ln_hi) = (a_lo.ln(), a_hi.ln());
    let step = (ln_hi - ln_lo) / (RANGE_GRID - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..RANGE_GRID)
        .map(|i| {
            let la = ln_lo + step * i as f64;
            (la, data.best_sills(family, la.exp()).2)
        })
        .collect();

    let mut minima: Vec<usize> = (0..RANGE_GRID)
        .filter(|&i| {
            let left = if i == 0 { f64::INFINITY } else { grid[i - 1].1 };
            let right = if i + 1 == RANGE_GRID { f64::INFINITY } else { grid[i + 1].1 };
            grid[i].1 <= left && grid[i].1 <= right
        })
        .collect();
    minima.sort_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1).then(a.cmp(&b)));
    minima.truncate(3);

    let profile = |la: f64| data.best_sills(family, la.exp()).2;
    let mut best = (f64::INFINITY, ln_lo);
    for &i in &minima {
        let (mut lo, mut hi) = (
            grid[i.saturating_sub(1)].0,
            grid[(i + 1).min(RANGE_GRID - 1)].0,
        );
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let (mut f1, mut f2) = (profile(x1), profile(x2));
        for _ in 0..200 {
            if (hi - lo) < 1e-12 || (f1 - f2).abs() <= OBJECTIVE_TOL * (f1.abs() + f2.abs() + 1e-300) && (hi - lo) < 1e-6 {
                break;
            }
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = profile(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = profile(x2);
            }
        }
        for (f, x) in [(f1, x1), (f2, x2), (grid[i].1, grid[i].0)] {
            if f < best.0 {
                best = (f, x);
            }
        }
    }
    let a = best.1.exp();
    let (c0, c, obj) = data.best_sills(family, a);
    finish(c0, c, a, obj)
}
