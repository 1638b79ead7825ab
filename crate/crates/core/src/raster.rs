//! Raster grids, band stacks and their on-disk format.
//!
//! A raster on disk is a pair of files: raw band-sequential little-endian
//! samples, and a plain-text header next to it (same stem, `.hdr`
//! extension) holding `key = value` lines:
//!
//! ```text
//! rows = 64
//! cols = 64
//! bands = 2
//! dtype = f32
//! pixel_size = 188
//! origin_easting = 0
//! origin_northing = 0
//! band_low_nm = 620, 770
//! band_high_nm = 680, 860
//! ```
//!
//! `origin_*` and the band window keys are optional. NaN is the nodata
//! marker for `f32`; `u8` has no nodata value.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Shape and placement of a grid. `origin` is the upper-left corner
/// (easting, northing) in meters; rows run southwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub rows: usize,
    pub cols: usize,
    pub pixel_size: f64,
    pub origin: (f64, f64),
}

impl Geometry {
    pub fn new(rows: usize, cols: usize, pixel_size: f64, origin: (f64, f64)) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::validation(format!(
                "grid must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if !(pixel_size > 0.0) || !pixel_size.is_finite() {
            return Err(Error::validation(format!(
                "pixel_size must be positive, got {pixel_size}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            pixel_size,
            origin,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Map coordinates of the center of pixel (row, col).
    #[inline]
    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin.0 + (col as f64 + 0.5) * self.pixel_size,
            self.origin.1 - (row as f64 + 0.5) * self.pixel_size,
        )
    }

    /// Width and height of the covered area in meters.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.cols as f64 * self.pixel_size,
            self.rows as f64 * self.pixel_size,
        )
    }

    /// Geometry of a grid over the same origin with a new pixel size, covering
    /// at least the same extent.
    pub fn resampled(&self, pixel_size: f64) -> Result<Self> {
        if !(pixel_size > 0.0) || !pixel_size.is_finite() {
            return Err(Error::validation(format!(
                "output pixel size must be positive, got {pixel_size}"
            )));
        }
        let (w, h) = self.extent();
        let cols = ((w / pixel_size) - 1e-9).ceil().max(1.0) as usize;
        let rows = ((h / pixel_size) - 1e-9).ceil().max(1.0) as usize;
        Geometry::new(rows, cols, pixel_size, self.origin)
    }

    pub fn same_as(&self, other: &Geometry) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && (self.pixel_size - other.pixel_size).abs() <= 1e-9 * self.pixel_size
            && (self.origin.0 - other.origin.0).abs() <= 1e-6
            && (self.origin.1 - other.origin.1).abs() <= 1e-6
    }
}

/// A single band of values with geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid<T> {
    geometry: Geometry,
    values: Vec<T>,
}

impl<T: Real> RasterGrid<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        pixel_size: f64,
        origin: (f64, f64),
        values: Vec<T>,
    ) -> Result<Self> {
        Self::from_geometry(Geometry::new(rows, cols, pixel_size, origin)?, values)
    }

    pub fn from_geometry(geometry: Geometry, values: Vec<T>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::validation(format!(
                "expected {} values for a {}x{} grid, got {}",
                geometry.len(),
                geometry.rows,
                geometry.cols,
                values.len()
            )));
        }
        Ok(Self { geometry, values })
    }

    pub fn filled(geometry: Geometry, value: T) -> Self {
        Self {
            values: vec![value; geometry.len()],
            geometry,
        }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(geometry.len());
        for r in 0..geometry.rows {
            for c in 0..geometry.cols {
                values.push(f(r, c));
            }
        }
        Self { geometry, values }
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }
    #[inline]
    pub fn rows(&self) -> usize {
        self.geometry.rows
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.geometry.cols
    }
    #[inline]
    pub fn pixel_size(&self) -> f64 {
        self.geometry.pixel_size
    }
    #[inline]
    pub fn origin(&self) -> (f64, f64) {
        self.geometry.origin
    }
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn into_values(self) -> Vec<T> {
        self.values
    }
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.geometry.cols + col]
    }

    pub fn same_geometry<U>(&self, other: &RasterGrid<U>) -> bool {
        self.geometry.same_as(&other.geometry)
    }

    /// New grid with the same geometry and the given values.
    pub fn with_values<U: Real>(&self, values: Vec<U>) -> Result<RasterGrid<U>> {
        RasterGrid::from_geometry(self.geometry, values)
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> RasterGrid<U> {
        RasterGrid {
            geometry: self.geometry,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> RasterGrid<U> {
        self.map(|v| U::from(v).unwrap_or_else(U::nan))
    }

    /// Non-NaN values in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = T> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }

    /// Mean over non-NaN pixels, `None` when every pixel is NaN.
    pub fn mean(&self) -> Option<T> {
        let mut n = 0usize;
        let s = crate::scalar::stable_sum(self.valid_values().inspect(|_| n += 1));
        (n > 0).then(|| s / lit(n as f64))
    }
}

/// Spectral interval of a sensor band, in nanometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandWindow {
    pub low_nm: f64,
    pub high_nm: f64,
}

impl BandWindow {
    pub fn new(low_nm: f64, high_nm: f64) -> Result<Self> {
        if !(low_nm < high_nm) {
            return Err(Error::validation(format!(
                "band window low ({low_nm}) must be below high ({high_nm})"
            )));
        }
        Ok(Self { low_nm, high_nm })
    }
}

/// Co-registered bands sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStack<T> {
    bands: Vec<RasterGrid<T>>,
    band_windows: Option<Vec<BandWindow>>,
}

impl<T: Real> BandStack<T> {
    /// `band_windows` is either `None` (non-spectral products such as
    /// probability maps) or one window per band.
    pub fn new(bands: Vec<RasterGrid<T>>, band_windows: Option<Vec<BandWindow>>) -> Result<Self> {
        let Some(first) = bands.first() else {
            return Err(Error::validation("band stack must contain at least one band"));
        };
        if let Some((i, _)) = bands
            .iter()
            .enumerate()
            .find(|(_, b)| !b.geometry.same_as(&first.geometry))
        {
            return Err(Error::validation(format!(
                "band {i} geometry differs from band 0"
            )));
        }
        if let Some(w) = &band_windows {
            if w.len() != bands.len() {
                return Err(Error::validation(format!(
                    "{} band windows for {} bands",
                    w.len(),
                    bands.len()
                )));
            }
            for win in w {
                BandWindow::new(win.low_nm, win.high_nm)?;
            }
        }
        Ok(Self {
            bands,
            band_windows,
        })
    }

    pub fn single(band: RasterGrid<T>) -> Self {
        Self {
            bands: vec![band],
            band_windows: None,
        }
    }

    pub fn bands(&self) -> &[RasterGrid<T>] {
        &self.bands
    }
    pub fn band(&self, i: usize) -> &RasterGrid<T> {
        &self.bands[i]
    }
    pub fn band_count(&self) -> usize {
        self.bands.len()
    }
    pub fn band_windows(&self) -> Option<&[BandWindow]> {
        self.band_windows.as_deref()
    }
    pub fn geometry(&self) -> &Geometry {
        self.bands[0].geometry()
    }
    pub fn into_bands(self) -> Vec<RasterGrid<T>> {
        self.bands
    }

    /// Band values of one pixel, in band order.
    pub fn pixel(&self, index: usize) -> Vec<T> {
        self.bands.iter().map(|b| b.values[index]).collect()
    }

    /// Keeps the listed bands in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut bands = Vec::with_capacity(indices.len());
        let mut windows = self.band_windows.as_ref().map(|_| Vec::new());
        for &i in indices {
            let band = self.bands.get(i).ok_or_else(|| {
                Error::validation(format!(
                    "band index {i} out of range for {} bands",
                    self.bands.len()
                ))
            })?;
            bands.push(band.clone());
            if let (Some(out), Some(all)) = (windows.as_mut(), self.band_windows.as_ref()) {
                out.push(all[i]);
            }
        }
        Self::new(bands, windows)
    }

    pub fn cast<U: Real>(&self) -> BandStack<U> {
        BandStack {
            bands: self.bands.iter().map(|b| b.cast()).collect(),
            band_windows: self.band_windows.clone(),
        }
    }
}

/// Per-pixel class assignment (hard classification output).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    pub geometry: Geometry,
    pub classes: Vec<String>,
    /// Index into `classes`, `None` for unclassified or nodata pixels.
    pub labels: Vec<Option<usize>>,
}

impl LabelGrid {
    /// Class index as a value, NaN where unclassified.
    pub fn to_raster(&self) -> RasterGrid<f64> {
        RasterGrid {
            geometry: self.geometry,
            values: self
                .labels
                .iter()
                .map(|l| l.map_or(f64::NAN, |i| i as f64))
                .collect(),
        }
    }

    /// Fraction of each class over all pixels.
    pub fn class_fractions(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.classes.len()];
        for l in self.labels.iter().flatten() {
            counts[*l] += 1;
        }
        let n = self.labels.len() as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

/// Sample type of a raster data file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    U8,
    F32,
}

impl DataType {
    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::F32 => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DataType::U8 => "u8",
            DataType::F32 => "f32",
        }
    }
}

/// Parsed raster header.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterHeader {
    pub geometry: Geometry,
    pub bands: usize,
    pub dtype: DataType,
    pub band_windows: Option<Vec<BandWindow>>,
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::format(format!("header key `{key}`: bad number `{s}`")))
        })
        .collect()
}

impl RasterHeader {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = None;
        let mut cols = None;
        let mut bands = None;
        let mut dtype = None;
        let mut pixel_size = None;
        let mut origin = (0.0, 0.0);
        let mut low = None;
        let mut high = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format(format!("header line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let count = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::format(format!("header key `{key}`: bad count `{v}`")))
            };
            let real = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| Error::format(format!("header key `{key}`: bad number `{v}`")))
            };
            match key {
                "rows" => rows = Some(count(value)?),
                "cols" => cols = Some(count(value)?),
                "bands" => bands = Some(count(value)?),
                "dtype" => {
                    dtype = Some(match value {
                        "u8" => DataType::U8,
                        "f32" => DataType::F32,
                        other => return Err(Error::format(format!("unknown dtype `{other}`"))),
                    })
                }
                "pixel_size" => pixel_size = Some(real(value)?),
                "origin_easting" => origin.0 = real(value)?,
                "origin_northing" => origin.1 = real(value)?,
                "band_low_nm" => low = Some(parse_list(key, value)?),
                "band_high_nm" => high = Some(parse_list(key, value)?),
                other => return Err(Error::format(format!("unknown header key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::format(format!("header is missing `{k}`"));
        let rows = rows.ok_or_else(|| missing("rows"))?;
        let cols = cols.ok_or_else(|| missing("cols"))?;
        let bands = bands.ok_or_else(|| missing("bands"))?;
        let dtype = dtype.ok_or_else(|| missing("dtype"))?;
        let pixel_size = pixel_size.ok_or_else(|| missing("pixel_size"))?;
        if bands == 0 {
            return Err(Error::format("header declares zero bands"));
        }
        let geometry =
            Geometry::new(rows, cols, pixel_size, origin).map_err(|e| Error::format(e.to_string()))?;
        let band_windows = match (low, high) {
            (None, None) => None,
            (Some(lo), Some(hi)) => {
                if lo.len() != bands || hi.len() != bands {
                    return Err(Error::format(format!(
                        "band windows list {} / {} entries for {bands} bands",
                        lo.len(),
                        hi.len()
                    )));
                }
                Some(
                    lo.into_iter()
                        .zip(hi)
                        .map(|(l, h)| BandWindow::new(l, h).map_err(|e| Error::format(e.to_string())))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => {
                return Err(Error::format(
                    "band_low_nm and band_high_nm must be given together",
                ))
            }
        };
        Ok(Self {
            geometry,
            bands,
            dtype,
            band_windows,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let mut s = String::new();
        let _ = writeln!(s, "rows = {}", g.rows);
        let _ = writeln!(s, "cols = {}", g.cols);
        let _ = writeln!(s, "bands = {}", self.bands);
        let _ = writeln!(s, "dtype = {}", self.dtype.name());
        let _ = writeln!(s, "pixel_size = {}", g.pixel_size);
        let _ = writeln!(s, "origin_easting = {}", g.origin.0);
        let _ = writeln!(s, "origin_northing = {}", g.origin.1);
        if let Some(w) = &self.band_windows {
            let join = |f: fn(&BandWindow) -> f64| {
                w.iter().map(|b| f(b).to_string()).collect::<Vec<_>>().join(", ")
            };
            let _ = writeln!(s, "band_low_nm = {}", join(|b| b.low_nm));
            let _ = writeln!(s, "band_high_nm = {}", join(|b| b.high_nm));
        }
        s
    }

    /// Expected byte length of the data file.
    pub fn data_len(&self) -> usize {
        self.geometry.len() * self.bands * self.dtype.size()
    }
}

/// Header path paired with a data file: same stem, `.hdr` extension.
pub fn header_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("hdr")
}

/// Reads a band-sequential data file described by `header`.
pub fn load_raster<T: Real>(path: &Path, header: &RasterHeader) -> Result<BandStack<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raster(&bytes, header)
}

/// Reads a data file and its sibling `.hdr` header.
pub fn load_raster_auto<T: Real>(path: &Path) -> Result<BandStack<T>> {
    let header = RasterHeader::read(&header_path(path))?;
    load_raster(path, &header)
}

pub fn decode_raster<T: Real>(bytes: &[u8], header: &RasterHeader) -> Result<BandStack<T>> {
    if bytes.len() != header.data_len() {
        return Err(Error::format(format!(
            "data size {} bytes does not match header ({}x{}x{} {} = {} bytes)",
            bytes.len(),
            header.geometry.rows,
            header.geometry.cols,
            header.bands,
            header.dtype.name(),
            header.data_len()
        )));
    }
    let n = header.geometry.len();
    let band_bytes = n * header.dtype.size();
    let bands = bytes
        .chunks_exact(band_bytes)
        .map(|chunk| {
            let values: Vec<T> = match header.dtype {
                DataType::U8 => chunk.iter().map(|&b| lit(b as f64)).collect(),
                DataType::F32 => chunk
                    .chunks_exact(4)
                    .map(|b| {
                        let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                        T::from(v).unwrap_or_else(T::nan)
                    })
                    .collect(),
            };
            RasterGrid::from_geometry(header.geometry, values)
        })
        .collect::<Result<Vec<_>>>()?;
    BandStack::new(bands, header.band_windows.clone())
}

/// Encodes a stack as band-sequential little-endian samples. `u8` output
/// rounds half away from zero and rejects NaN or out-of-range values.
pub fn encode_raster<T: Real>(stack: &BandStack<T>, dtype: DataType) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(stack.geometry().len() * stack.band_count() * dtype.size());
    for band in stack.bands() {
        for &v in band.values() {
            match dtype {
                DataType::F32 => {
                    let x = v.to_f32().unwrap_or(f32::NAN);
                    out.extend_from_slice(&x.to_le_bytes());
                }
                DataType::U8 => {
                    let x = to_f64(v);
                    if x.is_nan() || !(-0.5..255.5).contains(&x) {
                        return Err(Error::validation(format!(
                            "value {x} cannot be stored as u8"
                        )));
                    }
                    out.push(x.round() as u8);
                }
            }
        }
    }
    Ok(out)
}

/// Writes `stack` to `path` plus a `.hdr` header alongside.
pub fn save_raster<T: Real>(stack: &BandStack<T>, path: &Path, dtype: DataType) -> Result<()> {
    let header = RasterHeader {
        geometry: *stack.geometry(),
        bands: stack.band_count(),
        dtype,
        band_windows: stack.band_windows().map(|w| w.to_vec()),
    };
    let bytes = encode_raster(stack, dtype)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let hdr = header_path(path);
    fs::write(&hdr, header.to_text()).map_err(|e| Error::io(&hdr, e))?;
    Ok(())
}

/// Mean-filter aggregation by an integer factor. Each output pixel is the
/// mean of the non-NaN pixels in its `factor x factor` block (NaN if none).
pub fn upscale_mean<T: Real>(grid: &RasterGrid<T>, factor: usize) -> Result<RasterGrid<T>> {
    if factor < 2 {
        return Err(Error::validation(format!(
            "upscale factor must be at least 2, got {factor}"
        )));
    }
    let (rows, cols) = (grid.rows(), grid.cols());
    if rows % factor != 0 || cols % factor != 0 {
        return Err(Error::validation(format!(
            "grid {rows}x{cols} is not divisible by factor {factor}"
        )));
    }
    let geometry = Geometry::new(
        rows / factor,
        cols / factor,
        grid.pixel_size() * factor as f64,
        grid.origin(),
    )?;
    Ok(RasterGrid::from_fn(geometry, |r, c| {
        let mut sum = crate::scalar::CompensatedSum::new();
        let mut n = 0usize;
        for rr in r * factor..(r + 1) * factor {
            for cc in c * factor..(c + 1) * factor {
                let v = grid.get(rr, cc);
                if !v.is_nan() {
                    sum.add(v);
                    n += 1;
                }
            }
        }
        if n == 0 {
            T::nan()
        } else {
            sum.value() / lit(n as f64)
        }
    }))
}

/// 8-bit grey level of `v` under a linear stretch of `[lo, hi]` onto
/// `[0, 255]`, clamped, rounded half away from zero. NaN maps to 0.
pub fn stretch_to_u8(v: f64, lo: f64, hi: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    let x = ((v - lo) / (hi - lo) * 255.0).clamp(0.0, 255.0);
    x.round() as u8
}

/// Binary (P5) PGM image bytes for a grid.
pub fn pgm_bytes<T: Real>(grid: &RasterGrid<T>, lo: f64, hi: f64) -> Result<Vec<u8>> {
    if !(lo < hi) {
        return Err(Error::validation(format!(
            "preview stretch needs lo < hi, got lo={lo} hi={hi}"
        )));
    }
    let mut out = format!("P5\n{} {}\n255\n", grid.cols(), grid.rows()).into_bytes();
    out.extend(grid.values().iter().map(|&v| stretch_to_u8(to_f64(v), lo, hi)));
    Ok(out)
}

pub fn to_pgm_preview<T: Real>(grid: &RasterGrid<T>, lo: f64, hi: f64, path: &Path) -> Result<()> {
    let bytes = pgm_bytes(grid, lo, hi)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `row,col,value` CSV of a grid.
pub fn write_csv<T: Real>(grid: &RasterGrid<T>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::from("row,col,value\n");
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            let _ = writeln!(s, "{r},{c},{}", grid.get(r, c));
        }
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}
