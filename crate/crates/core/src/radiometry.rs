//! Reflectance / radiance / DN conversions and dark-object subtraction.
//!
//! Radiance is in mW cm⁻² sr⁻¹ µm⁻¹. DN values stay real-valued; nothing
//! here quantizes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BandStack, RasterGrid};
use crate::scalar::{lit, to_f64, Real};

/// Per-band sensor calibration plus scene illumination geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// Radiance per DN, one per band.
    pub gain: Vec<f64>,
    /// Radiance offset, one per band.
    pub bias: Vec<f64>,
    /// Mean solar exoatmospheric irradiance, one per band.
    pub esun: Vec<f64>,
    pub sun_elevation_deg: f64,
    pub earth_sun_distance_au: f64,
}

impl CalibrationParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.gain.len();
        if n == 0 || self.bias.len() != n || self.esun.len() != n {
            return Err(Error::validation(format!(
                "calibration lists must be non-empty and equal length (gain {}, bias {}, esun {})",
                self.gain.len(),
                self.bias.len(),
                self.esun.len()
            )));
        }
        if let Some(g) = self.gain.iter().find(|g| !(**g > 0.0)) {
            return Err(Error::validation(format!("gain must be positive, got {g}")));
        }
        if let Some(e) = self.esun.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::validation(format!("esun must be positive, got {e}")));
        }
        if !(self.sun_elevation_deg > 0.0 && self.sun_elevation_deg <= 90.0) {
            return Err(Error::validation(format!(
                "sun_elevation_deg must be in (0, 90], got {}",
                self.sun_elevation_deg
            )));
        }
        if !(self.earth_sun_distance_au > 0.0) {
            return Err(Error::validation(format!(
                "earth_sun_distance_au must be positive, got {}",
                self.earth_sun_distance_au
            )));
        }
        Ok(())
    }

    pub fn band_count(&self) -> usize {
        self.gain.len()
    }

    fn check_band(&self, band: usize) -> Result<()> {
        if band >= self.gain.len() {
            return Err(Error::validation(format!(
                "band {band} has no calibration (only {} bands)",
                self.gain.len()
            )));
        }
        Ok(())
    }

    /// Radiance of a perfect reflector in `band`: esun·sin(SE)/(π·d²).
    /// The sun elevation is converted from degrees here.
    fn reflectance_scale(&self, band: usize) -> f64 {
        let se = self.sun_elevation_deg.to_radians();
        self.esun[band] * se.sin() / (PI * self.earth_sun_distance_au.powi(2))
    }
}

/// At-satellite radiance of a surface with reflectance `r`.
pub fn reflectance_to_radiance<T: Real>(r: T, band: usize, cal: &CalibrationParams) -> Result<T> {
    cal.check_band(band)?;
    if !(r >= T::zero() && r <= T::one()) {
        return Err(Error::validation(format!(
            "reflectance must be in [0, 1], got {r}"
        )));
    }
    Ok(r * lit::<T>(cal.reflectance_scale(band)))
}

/// DN = (L − bias) / gain, not rounded.
pub fn radiance_to_dn<T: Real>(radiance: T, band: usize, cal: &CalibrationParams) -> Result<T> {
    cal.check_band(band)?;
    Ok((radiance - lit(cal.bias[band])) / lit(cal.gain[band]))
}

/// L = DN·gain + bias.
pub fn dn_to_radiance<T: Real>(dn: T, band: usize, cal: &CalibrationParams) -> Result<T> {
    cal.check_band(band)?;
    Ok(dn * lit(cal.gain[band]) + lit(cal.bias[band]))
}

/// Reflectance straight to real-valued DN.
pub fn reflectance_to_dn<T: Real>(r: T, band: usize, cal: &CalibrationParams) -> Result<T> {
    radiance_to_dn(reflectance_to_radiance(r, band, cal)?, band, cal)
}

/// Lower-percentile value of the non-NaN samples. The rank is
/// `floor(p·(n−1))` in ascending order, so `p = 0` is the minimum.
pub fn dark_object_value<T: Real>(band: &RasterGrid<T>, percentile: f64) -> Result<T> {
    let mut vals: Vec<T> = band.valid_values().collect();
    if vals.is_empty() {
        return Err(Error::validation("band has no valid (non-NaN) pixels"));
    }
    vals.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered"));
    let rank = (percentile * (vals.len() - 1) as f64).floor() as usize;
    Ok(vals[rank.min(vals.len() - 1)])
}

/// Subtracts each band's dark-object value and clamps at zero. NaN pixels
/// stay NaN.
pub fn dos_correct<T: Real>(stack: &BandStack<T>, percentile: f64) -> Result<BandStack<T>> {
    if !(0.0..=0.05).contains(&percentile) {
        return Err(Error::validation(format!(
            "dark-object percentile must be within [0, 0.05], got {percentile}"
        )));
    }
    let bands = stack
        .bands()
        .iter()
        .enumerate()
        .map(|(i, band)| {
            let dark = dark_object_value(band, percentile)
                .map_err(|e| Error::validation(format!("band {i}: {e}")))?;
            log::debug!("band {i}: dark object value {}", to_f64(dark));
            Ok(band.map(|v| if v.is_nan() { v } else { (v - dark).max(T::zero()) }))
        })
        .collect::<Result<Vec<_>>>()?;
    BandStack::new(bands, stack.band_windows().map(|w| w.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Geometry;
    use approx::assert_relative_eq;

    fn cal(gain: f64, bias: f64, esun: f64, se: f64, d: f64) -> CalibrationParams {
        CalibrationParams {
            gain: vec![gain],
            bias: vec![bias],
            esun: vec![esun],
            sun_elevation_deg: se,
            earth_sun_distance_au: d,
        }
    }

    #[test]
    fn reflectance_zero_and_identity_forcing() {
        let c = cal(1.0, 0.0, PI, 90.0, 1.0);
        assert_eq!(reflectance_to_radiance(0.0, 0, &c).unwrap(), 0.0);
        assert_relative_eq!(reflectance_to_radiance(1.0, 0, &c).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reflectance_hand_case() {
        let c = cal(1.0, 0.0, 185.3, 40.0, 1.0);
        let expected = 0.4 * 185.3 * (40.0_f64 * PI / 180.0).sin() / PI;
        assert_relative_eq!(
            reflectance_to_radiance(0.4, 0, &c).unwrap(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn reflectance_out_of_range() {
        let c = cal(1.0, 0.0, 1.0, 45.0, 1.0);
        assert!(reflectance_to_radiance(1.2, 0, &c).is_err());
        assert!(reflectance_to_radiance(-0.1, 0, &c).is_err());
    }

    #[test]
    fn dn_conversions() {
        let c = cal(0.04, 1.0, 1.0, 45.0, 1.0);
        assert_eq!(radiance_to_dn(1.0, 0, &c).unwrap(), 0.0);
        assert_relative_eq!(radiance_to_dn(5.2, 0, &c).unwrap(), 105.0, max_relative = 1e-12);
        assert_eq!(dn_to_radiance(0.0, 0, &c).unwrap(), 1.0);
        assert_relative_eq!(dn_to_radiance(105.0, 0, &c).unwrap(), 5.2, max_relative = 1e-12);
        let id = cal(1.0, 0.0, 1.0, 45.0, 1.0);
        assert_eq!(radiance_to_dn(3.7, 0, &id).unwrap(), 3.7);
    }

    #[test]
    fn composed_conversion_is_monotone() {
        let c = cal(0.05, 0.3, 160.0, 35.0, 0.99);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=100 {
            let dn = reflectance_to_dn(i as f64 / 100.0, 0, &c).unwrap();
            assert!(dn > prev);
            prev = dn;
        }
    }

    #[test]
    fn unknown_band_rejected() {
        let c = cal(1.0, 0.0, 1.0, 45.0, 1.0);
        assert!(radiance_to_dn(1.0, 3, &c).is_err());
    }

    #[test]
    fn validation_catches_bad_params() {
        assert!(cal(0.0, 0.0, 1.0, 45.0, 1.0).validate().is_err());
        assert!(cal(1.0, 0.0, 1.0, 0.0, 1.0).validate().is_err());
        assert!(cal(1.0, 0.0, 1.0, 91.0, 1.0).validate().is_err());
        assert!(cal(1.0, 0.0, 1.0, 90.0, 0.0).validate().is_err());
        assert!(cal(1.0, 0.0, 1.0, 90.0, 1.0).validate().is_ok());
    }

    fn stack(values: Vec<f64>) -> BandStack<f64> {
        let g = Geometry::new(1, values.len(), 1.0, (0.0, 0.0)).unwrap();
        BandStack::single(RasterGrid::from_geometry(g, values).unwrap())
    }

    #[test]
    fn dos_min_subtraction() {
        let out = dos_correct(&stack(vec![10.0, 12.0, 50.0, 60.0]), 0.0).unwrap();
        assert_eq!(out.band(0).values(), &[0.0, 2.0, 40.0, 50.0]);
    }

    #[test]
    fn dos_constant_and_already_dark() {
        let out = dos_correct(&stack(vec![7.0; 5]), 0.0).unwrap();
        assert!(out.band(0).values().iter().all(|&v| v == 0.0));
        let dark = vec![0.0, 3.0, 9.0];
        assert_eq!(dos_correct(&stack(dark.clone()), 0.0).unwrap().band(0).values(), &dark[..]);
    }

    #[test]
    fn dos_keeps_nan_and_rejects_all_nan() {
        let out = dos_correct(&stack(vec![f64::NAN, 4.0, 6.0]), 0.0).unwrap();
        assert!(out.band(0).values()[0].is_nan());
        assert_eq!(&out.band(0).values()[1..], &[0.0, 2.0]);
        assert!(dos_correct(&stack(vec![f64::NAN; 3]), 0.0).is_err());
        assert!(dos_correct(&stack(vec![1.0]), 0.2).is_err());
    }

    #[test]
    fn dos_percentile_clamps_at_zero() {
        let vals: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let out = dos_correct(&stack(vals), 0.05).unwrap();
        assert_eq!(out.band(0).values()[0], 0.0);
        assert_eq!(out.band(0).values()[5], 0.0);
        assert_eq!(out.band(0).values()[100], 95.0);
    }
}
