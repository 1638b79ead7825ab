//! Reference classifiers: maximum likelihood, Bayesian posterior,
//! Dempster-Shafer belief and supervised fuzzy classification.
//!
//! All four share a Gaussian class model. Densities are evaluated in log
//! space and normalized with log-sum-exp, so posteriors stay finite even when
//! every density underflows.
//!
//! Belief construction: class supports `s_c` are the normalized posteriors.
//! The ignorance set gets `m(Θ) = 1 − max s`, each class gets
//! `m(c) = s_c · max s`, so the masses sum to 1. Then `belief(c) = m(c)` and
//! `plausibility(c) = m(c) + m(Θ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kbsc::{MapKind, ProbabilityMap};
use crate::linalg::{symmetric_eigenvalues, Lu};
use crate::raster::{BandStack, LabelGrid, RasterGrid};
use crate::scalar::{lit, to_f64, Real};
use crate::signatures::SignatureStats;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Labeled training pixels, by flat pixel index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub classes: Vec<String>,
    pub pixels: Vec<usize>,
    /// Index into `classes` for each entry of `pixels`.
    pub labels: Vec<usize>,
}

impl TrainingSet {
    pub fn validate(&self, pixel_count: usize) -> Result<()> {
        if self.pixels.len() != self.labels.len() {
            return Err(Error::validation("training pixels and labels differ in length"));
        }
        if let Some(&p) = self.pixels.iter().find(|&&p| p >= pixel_count) {
            return Err(Error::validation(format!("training pixel {p} outside image")));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.classes.len()) {
            return Err(Error::validation(format!("training label {l} has no class")));
        }
        Ok(())
    }

    pub fn pixels_of(&self, class: usize) -> impl Iterator<Item = usize> + '_ {
        self.pixels
            .iter()
            .zip(&self.labels)
            .filter(move |(_, &l)| l == class)
            .map(|(&p, _)| p)
    }
}

/// Training pixels with graded class memberships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyTraining {
    pub classes: Vec<String>,
    pub pixels: Vec<usize>,
    /// `memberships[i][c]` for pixel `pixels[i]`.
    pub memberships: Vec<Vec<f64>>,
}

impl FuzzyTraining {
    /// Memberships of 1 for the labeled class and 0 elsewhere.
    pub fn crisp(training: &TrainingSet) -> Self {
        let k = training.classes.len();
        Self {
            classes: training.classes.clone(),
            pixels: training.pixels.clone(),
            memberships: training
                .labels
                .iter()
                .map(|&l| (0..k).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussian {
    pub class: String,
    pub mean: Vec<f64>,
    /// Row-major `bands × bands`, ridge already applied.
    pub covariance: Vec<f64>,
    pub prior: f64,
    /// Diagonal ridge that was added, 0 if none.
    pub ridge: f64,
}

/// Gaussian class signatures shared by all four classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSignatures {
    pub bands: usize,
    pub classes: Vec<ClassGaussian>,
}

/// Fuzzy mean and covariance per class; classification ignores priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzySignatures {
    pub bands: usize,
    pub classes: Vec<ClassGaussian>,
}

impl GaussianSignatures {
    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.class.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Adds `1e-8·trace/bands` to the diagonal when the smallest eigenvalue is
/// below `1e-10·trace`. A zero matrix gets `1e-8`. Returns the ridge used.
pub fn stabilize_covariance(cov: &mut [f64], bands: usize) -> f64 {
    let trace: f64 = (0..bands).map(|i| cov[i * bands + i]).sum();
    let ridge = if trace <= 0.0 {
        1e-8
    } else if symmetric_eigenvalues(cov, bands)[0] < 1e-10 * trace {
        1e-8 * trace / bands as f64
    } else {
        0.0
    };
    for i in 0..bands {
        cov[i * bands + i] += ridge;
    }
    ridge
}

/// Weighted mean and covariance. The covariance uses the unbiased
/// reliability-weight denominator `V1 − V2/V1`, which is `n − 1` for unit
/// weights.
fn weighted_moments(points: &[(Vec<f64>, f64)], bands: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let v1: f64 = points.iter().map(|(_, w)| w).sum();
    if !(v1 > 0.0) {
        return Err(Error::validation("class has no training weight"));
    }
    let v2: f64 = points.iter().map(|(_, w)| w * w).sum();
    let mut mean = vec![0.0; bands];
    for (x, w) in points {
        for b in 0..bands {
            mean[b] += w * x[b];
        }
    }
    mean.iter_mut().for_each(|m| *m /= v1);
    let mut cov = vec![0.0; bands * bands];
    let denom = v1 - v2 / v1;
    if denom > 1e-12 * v1 {
        for (x, w) in points {
            for i in 0..bands {
                let di = x[i] - mean[i];
                for j in 0..bands {
                    cov[i * bands + j] += w * di * (x[j] - mean[j]);
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= denom);
    }
    Ok((mean, cov))
}

fn pixel_f64<T: Real>(stack: &BandStack<T>, index: usize) -> Vec<f64> {
    stack.bands().iter().map(|b| to_f64(b.values()[index])).collect()
}

fn normalized_priors(priors: Option<&[f64]>, k: usize) -> Result<Vec<f64>> {
    match priors {
        None => Ok(vec![1.0 / k as f64; k]),
        Some(p) => {
            if p.len() != k {
                return Err(Error::validation(format!("{} priors for {k} classes", p.len())));
            }
            if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::validation("priors must be finite and non-negative"));
            }
            let s: f64 = p.iter().sum();
            if !(s > 0.0) {
                return Err(Error::validation("priors sum to zero"));
            }
            Ok(p.iter().map(|v| v / s).collect())
        }
    }
}

/// Per-class sample mean and covariance (`n − 1` denominator). Pixels with
/// NaN in any band are skipped.
pub fn train_gaussian<T: Real>(
    stack: &BandStack<T>,
    training: &TrainingSet,
    priors: Option<&[f64]>,
) -> Result<GaussianSignatures> {
    let bands = stack.band_count();
    training.validate(stack.geometry().len())?;
    let priors = normalized_priors(priors, training.classes.len())?;
    let mut classes = Vec::with_capacity(training.classes.len());
    for (c, name) in training.classes.iter().enumerate() {
        let points: Vec<(Vec<f64>, f64)> = training
            .pixels_of(c)
            .map(|p| pixel_f64(stack, p))
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .map(|x| (x, 1.0))
            .collect();
        if points.is_empty() {
            return Err(Error::validation(format!("class `{name}` has no training pixels")));
        }
        if points.len() <= bands {
            log::warn!(
                "class `{name}` has {} training pixels for {bands} bands; covariance relies on the ridge",
                points.len()
            );
        }
        let (mean, mut covariance) = weighted_moments(&points, bands)?;
        let ridge = stabilize_covariance(&mut covariance, bands);
        classes.push(ClassGaussian {
            class: name.clone(),
            mean,
            covariance,
            prior: priors[c],
            ridge,
        });
    }
    Ok(GaussianSignatures { bands, classes })
}

/// Membership-weighted mean and covariance per class.
pub fn train_fuzzy<T: Real>(stack: &BandStack<T>, training: &FuzzyTraining) -> Result<FuzzySignatures> {
    let bands = stack.band_count();
    let k = training.classes.len();
    if training.pixels.len() != training.memberships.len() {
        return Err(Error::validation("fuzzy pixels and memberships differ in length"));
    }
    for (p, m) in training.pixels.iter().zip(&training.memberships) {
        if *p >= stack.geometry().len() {
            return Err(Error::validation(format!("training pixel {p} outside image")));
        }
        if m.len() != k || m.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::validation("memberships must have one value in [0, 1] per class"));
        }
    }
    let pixels: Vec<Vec<f64>> = training.pixels.iter().map(|&p| pixel_f64(stack, p)).collect();
    let mut classes = Vec::with_capacity(k);
    for (c, name) in training.classes.iter().enumerate() {
        let points: Vec<(Vec<f64>, f64)> = pixels
            .iter()
            .zip(&training.memberships)
            .filter(|(x, m)| m[c] > 0.0 && x.iter().all(|v| v.is_finite()))
            .map(|(x, m)| (x.clone(), m[c]))
            .collect();
        if points.is_empty() {
            return Err(Error::validation(format!("class `{name}` has no training membership")));
        }
        let (mean, mut covariance) = weighted_moments(&points, bands)?;
        let ridge = stabilize_covariance(&mut covariance, bands);
        classes.push(ClassGaussian {
            class: name.clone(),
            mean,
            covariance,
            prior: 1.0 / k as f64,
            ridge,
        });
    }
    Ok(FuzzySignatures { bands, classes })
}

struct Prepared {
    mean: Vec<f64>,
    inv: Vec<f64>,
    /// `ln prior − ½(ln|Σ| + d·ln 2π)`.
    offset: f64,
}

fn prepare(classes: &[ClassGaussian], bands: usize, use_priors: bool) -> Result<Vec<Prepared>> {
    if classes.is_empty() {
        return Err(Error::validation("no class signatures"));
    }
    classes
        .iter()
        .map(|c| {
            if c.mean.len() != bands || c.covariance.len() != bands * bands {
                return Err(Error::validation(format!("signature `{}` has wrong band count", c.class)));
            }
            let lu = Lu::factor(&c.covariance, bands).map_err(|e| {
                Error::numerical(format!("covariance of `{}` is singular: {e}", c.class))
            })?;
            let prior = if use_priors { c.prior.ln() } else { 0.0 };
            Ok(Prepared {
                mean: c.mean.clone(),
                inv: lu.inverse(),
                offset: prior - 0.5 * (lu.ln_abs_det() + bands as f64 * LN_2PI),
            })
        })
        .collect()
}

fn log_scores(prep: &[Prepared], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    prep.iter()
        .map(|p| {
            let diff: Vec<f64> = x.iter().zip(&p.mean).map(|(a, b)| a - b).collect();
            let mut q = 0.0;
            for i in 0..d {
                let row: f64 = (0..d).map(|j| p.inv[i * d + j] * diff[j]).sum();
                q += diff[i] * row;
            }
            p.offset - 0.5 * q
        })
        .collect()
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_stack<T: Real>(stack: &BandStack<T>, bands: usize) -> Result<()> {
    if stack.band_count() != bands {
        return Err(Error::validation(format!(
            "stack has {} bands, signatures have {bands}",
            stack.band_count()
        )));
    }
    Ok(())
}

/// Per-pixel log scores; `None` for pixels with NaN in any band.
fn per_pixel<T: Real, R: Send>(
    stack: &BandStack<T>,
    prep: &[Prepared],
    f: impl Fn(Vec<f64>) -> R + Sync,
) -> Vec<Option<R>> {
    (0..stack.geometry().len())
        .into_par_iter()
        .map(|i| {
            let x = pixel_f64(stack, i);
            if x.iter().any(|v| !v.is_finite()) {
                None
            } else {
                Some(f(log_scores(prep, &x)))
            }
        })
        .collect()
}

fn to_maps<T: Real>(
    stack: &BandStack<T>,
    names: &[String],
    rows: &[Option<Vec<f64>>],
) -> Result<Vec<ProbabilityMap<T>>> {
    let grid = stack.band(0);
    names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let values = rows
                .iter()
                .map(|r| r.as_ref().map_or(T::nan(), |p| lit(p[c])))
                .collect();
            Ok(ProbabilityMap::new(grid.with_values(values)?, name.clone(), MapKind::Joint))
        })
        .collect()
}

/// Hard classification by maximum of log prior plus log density. Ties go
/// to the earlier class.
pub fn maxlike<T: Real>(stack: &BandStack<T>, sigs: &GaussianSignatures) -> Result<LabelGrid> {
    check_stack(stack, sigs.bands)?;
    let prep = prepare(&sigs.classes, sigs.bands, true)?;
    let labels = per_pixel(stack, &prep, |s| argmax_first(&s));
    Ok(LabelGrid {
        geometry: *stack.geometry(),
        classes: sigs.class_names(),
        labels,
    })
}

/// Posterior class probabilities, summing to 1 per valid pixel.
pub fn bayclass<T: Real>(stack: &BandStack<T>, sigs: &GaussianSignatures) -> Result<Vec<ProbabilityMap<T>>> {
    check_stack(stack, sigs.bands)?;
    let prep = prepare(&sigs.classes, sigs.bands, true)?;
    let rows = per_pixel(stack, &prep, |s| softmax(&s));
    to_maps(stack, &sigs.class_names(), &rows)
}

#[derive(Debug, Clone)]
pub struct BeliefMaps<T> {
    pub class: String,
    pub belief: RasterGrid<T>,
    pub plausibility: RasterGrid<T>,
}

impl<T: Real> BeliefMaps<T> {
    /// `plausibility − belief`.
    pub fn interval(&self) -> RasterGrid<T> {
        let values = self
            .plausibility
            .values()
            .iter()
            .zip(self.belief.values())
            .map(|(&p, &b)| p - b)
            .collect();
        RasterGrid::from_geometry(*self.belief.geometry(), values).expect("same geometry")
    }
}

/// Masses `(m(c) for each c, m(Θ))` from class supports.
pub fn belief_masses(supports: &[f64]) -> (Vec<f64>, f64) {
    let max = supports.iter().cloned().fold(0.0, f64::max);
    (supports.iter().map(|s| s * max).collect(), 1.0 - max)
}

pub fn belclass<T: Real>(stack: &BandStack<T>, sigs: &GaussianSignatures) -> Result<Vec<BeliefMaps<T>>> {
    check_stack(stack, sigs.bands)?;
    let prep = prepare(&sigs.classes, sigs.bands, true)?;
    let rows = per_pixel(stack, &prep, |s| belief_masses(&softmax(&s)));
    let grid = stack.band(0);
    sigs.classes
        .iter()
        .enumerate()
        .map(|(c, sig)| {
            let pick = |plaus: bool| -> Vec<T> {
                rows.iter()
                    .map(|r| {
                        r.as_ref().map_or(T::nan(), |(m, theta)| {
                            lit(if plaus { m[c] + theta } else { m[c] })
                        })
                    })
                    .collect()
            };
            Ok(BeliefMaps {
                class: sig.class.clone(),
                belief: grid.with_values(pick(false))?,
                plausibility: grid.with_values(pick(true))?,
            })
        })
        .collect()
}

/// Memberships proportional to the fuzzy-signature densities.
pub fn fuzzyclass<T: Real>(stack: &BandStack<T>, fsigs: &FuzzySignatures) -> Result<Vec<ProbabilityMap<T>>> {
    check_stack(stack, fsigs.bands)?;
    let prep = prepare(&fsigs.classes, fsigs.bands, false)?;
    let rows = per_pixel(stack, &prep, |s| softmax(&s));
    let names: Vec<String> = fsigs.classes.iter().map(|c| c.class.clone()).collect();
    to_maps(stack, &names, &rows)
}

/// Training pixels taken from the image itself: a pixel trains class `c`
/// when every band lies inside the class interval. A class with fewer than
/// `bands + 1` such pixels is filled up with the pixels nearest its interval
/// centers.
pub fn pure_pixel_training<T: Real>(
    stack: &BandStack<T>,
    stats: &SignatureStats,
    classes: &[String],
) -> Result<TrainingSet> {
    let bands = stack.band_count();
    if stats.band_count() != bands {
        return Err(Error::validation(format!(
            "signature stats have {} bands, stack has {bands}",
            stats.band_count()
        )));
    }
    let n = stack.geometry().len();
    let pixels: Vec<Vec<f64>> = (0..n).map(|i| pixel_f64(stack, i)).collect();
    let want = bands + 1;
    let mut set = TrainingSet {
        classes: classes.to_vec(),
        pixels: Vec::new(),
        labels: Vec::new(),
    };
    for (c, name) in classes.iter().enumerate() {
        let th: Vec<_> = (0..bands)
            .map(|b| {
                stats
                    .get(name, b)
                    .ok_or_else(|| Error::validation(format!("no thresholds for class `{name}`")))
            })
            .collect::<Result<_>>()?;
        let mut chosen: Vec<usize> = (0..n)
            .filter(|&i| {
                pixels[i]
                    .iter()
                    .zip(&th)
                    .all(|(v, t)| *v >= t.lower && *v <= t.upper)
            })
            .collect();
        if chosen.len() < want {
            log::warn!(
                "class `{name}` has {} pure pixels; filling with nearest pixels",
                chosen.len()
            );
            let mut ranked: Vec<(f64, usize)> = (0..n)
                .filter(|&i| pixels[i].iter().all(|v| v.is_finite()) && !chosen.contains(&i))
                .map(|i| {
                    let d: f64 = pixels[i].iter().zip(&th).map(|(v, t)| (v - t.mean).powi(2)).sum();
                    (d, i)
                })
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            chosen.extend(ranked.into_iter().take(want - chosen.len()).map(|(_, i)| i));
        }
        set.labels.extend(std::iter::repeat_n(c, chosen.len()));
        set.pixels.extend(chosen);
    }
    Ok(set)
}
