//! Uniform linear array geometry and near-field steering vectors.
//!
//! Element `m` sits at `m̄·d_ant` on the x-axis with the centred index
//! `m̄ = m − (M−1)/2`. A source at angle `θ` (measured from the array axis)
//! and range `r` is located at `[r cosθ, r sinθ]`.
//!
//! Two manifolds are provided:
//!
//! - exact uniform spherical wave (USW), phase-referenced to the array centre;
//! - the Fresnel chirp `exp(j ω m̄ − j κ m̄²)` with
//!   `ω = 2π d_ant cosθ / λ` and `κ = c(θ)/r`, `c(θ) = π d_ant² sin²θ / λ`.
//!
//! The chirp form is also available in inverse-range coordinates `u = 1/r`,
//! where `u = 0` gives the far-field Vandermonde vector.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::{CVec, Error, Result, C64};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Centred element index `m − (M−1)/2` for `m = 0..M`.
pub fn centred_index(elements: usize) -> Vec<f64> {
    let half = (elements as f64 - 1.0) / 2.0;
    (0..elements).map(|m| m as f64 - half).collect()
}

#[derive(Debug, Clone)]
pub struct ArrayConfig {
    carrier_hz: f64,
    elements: usize,
    spacing: f64,
    wavelength: f64,
    centred: Arc<[f64]>,
}

impl ArrayConfig {
    /// Half-wavelength ULA.
    pub fn new(carrier_hz: f64, elements: usize) -> Result<Self> {
        let wavelength = SPEED_OF_LIGHT / carrier_hz;
        Self::with_spacing(carrier_hz, elements, wavelength / 2.0)
    }

    pub fn with_spacing(carrier_hz: f64, elements: usize, spacing: f64) -> Result<Self> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(Error::InvalidConfig(format!("carrier must be positive, got {carrier_hz}")));
        }
        if elements < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 elements, got {elements}")));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidConfig(format!("spacing must be positive, got {spacing}")));
        }
        Ok(Self {
            carrier_hz,
            elements,
            spacing,
            wavelength: SPEED_OF_LIGHT / carrier_hz,
            centred: centred_index(elements).into(),
        })
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// `D = (M−1)·d_ant`.
    pub fn aperture(&self) -> f64 {
        (self.elements as f64 - 1.0) * self.spacing
    }

    /// `2D²/λ`.
    pub fn rayleigh_distance(&self) -> f64 {
        2.0 * self.aperture().powi(2) / self.wavelength
    }

    /// Cached centred index.
    pub fn centred(&self) -> &[f64] {
        &self.centred
    }

    /// Linear phase slope per element.
    pub fn omega(&self, theta: f64) -> f64 {
        2.0 * PI * self.spacing / self.wavelength * theta.cos()
    }

    /// `dω/dθ`.
    pub fn omega_derivative(&self, theta: f64) -> f64 {
        -2.0 * PI * self.spacing / self.wavelength * theta.sin()
    }

    /// Chirp constant `c(θ)` such that `κ = c·u`.
    pub fn chirp_constant(&self, theta: f64) -> f64 {
        PI * self.spacing.powi(2) / self.wavelength * theta.sin().powi(2)
    }

    pub fn curvature_coords(&self, theta: f64, range: f64) -> Result<CurvatureCoords> {
        check_range(range)?;
        let chirp = self.chirp_constant(theta);
        Ok(CurvatureCoords {
            omega: self.omega(theta),
            kappa: chirp / range,
            chirp,
        })
    }

    /// Effective beamfocused Rayleigh distance `r_RD cos²θ / 10`.
    pub fn ebrd(&self, theta: f64) -> f64 {
        self.rayleigh_distance() * theta.cos().powi(2) / 10.0
    }

    /// Exact spherical-wave steering vector.
    pub fn steering_usw(&self, theta: f64, range: f64) -> Result<CVec> {
        check_range(range)?;
        let k = 2.0 * PI / self.wavelength;
        let (sin_t, cos_t) = theta.sin_cos();
        Ok(CVec::from_iterator(
            self.elements,
            self.centred.iter().map(|&m| {
                let x = m * self.spacing;
                // ‖p − s‖ − r, written to avoid cancellation at large r
                let dist = ((range * cos_t - x).powi(2) + (range * sin_t).powi(2)).sqrt();
                let excess = (x * x - 2.0 * range * x * cos_t) / (dist + range);
                C64::from_polar(1.0, -k * excess)
            }),
        ))
    }

    /// Fresnel (second-order) steering vector at `(θ, r)`.
    pub fn steering_fresnel(&self, theta: f64, range: f64) -> Result<CVec> {
        check_range(range)?;
        Ok(self.steering_chirp(theta, 1.0 / range))
    }

    /// Fresnel steering vector in inverse-range coordinates; `u = 0` is the
    /// far-field Vandermonde vector.
    ///
    /// # Panics
    ///
    /// If `u` is negative or not finite.
    pub fn steering_chirp(&self, theta: f64, u: f64) -> CVec {
        assert!(u.is_finite() && u >= 0.0, "inverse range must be finite and >= 0, got {u}");
        self.steering_omega_kappa(self.omega(theta), self.chirp_constant(theta) * u)
    }

    /// Chirp vector `exp(j ω m̄ − j κ m̄²)` from raw phase coefficients.
    pub fn steering_omega_kappa(&self, omega: f64, kappa: f64) -> CVec {
        CVec::from_iterator(
            self.elements,
            self.centred
                .iter()
                .map(|&m| C64::from_polar(1.0, omega * m - kappa * m * m)),
        )
    }
}

fn check_range(range: f64) -> Result<()> {
    if range.is_finite() && range > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveRange(range))
    }
}

/// One propagation path. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParam {
    pub theta: f64,
    pub range: f64,
    pub power: f64,
}

impl PathParam {
    pub fn new(theta: f64, range: f64, power: f64) -> Result<Self> {
        check_range(range)?;
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::InvalidConfig(format!("path power must be >= 0, got {power}")));
        }
        Ok(Self { theta, range, power })
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureCoords {
    pub omega: f64,
    pub kappa: f64,
    pub chirp: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_array() -> ArrayConfig {
        ArrayConfig::new(28e9, 64).unwrap()
    }

    #[test]
    fn centred_index_examples() {
        assert_eq!(centred_index(4), vec![-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(centred_index(3), vec![-1.0, 0.0, 1.0]);
        let c = centred_index(64);
        assert_eq!(c[0], -31.5);
        assert_eq!(c[63], 31.5);
        assert_eq!(c.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn default_geometry() {
        let a = default_array();
        assert!((a.spacing() - a.wavelength() / 2.0).abs() < 1e-15);
        assert!((a.wavelength() - 10.71e-3).abs() < 0.01e-3);
        assert!((a.aperture() - 0.338).abs() < 0.001);
        // 21.26 m is what c = 3e8 gives; the exact speed of light lands at 21.248 m
        assert!((a.rayleigh_distance() - 21.26).abs() / 21.26 < 1e-3);
    }

    #[test]
    fn ebrd_examples() {
        let a = default_array();
        assert!((a.ebrd(30f64.to_radians()) - 1.60).abs() / 1.60 < 0.01);
        assert!((a.ebrd(45f64.to_radians()) - 1.06).abs() / 1.06 < 0.01);
        // 45° EBRD equals r_min = 0.05 r_RD
        assert!((a.ebrd(45f64.to_radians()) - 0.05 * a.rayleigh_distance()).abs() < 1e-12);
        assert!(a.ebrd(90f64.to_radians()) < 1e-30);
        assert_eq!(a.ebrd(0.0), a.rayleigh_distance() / 10.0);
    }

    #[test]
    fn rejects_non_positive_range() {
        let a = default_array();
        assert!(matches!(a.steering_usw(0.3, 0.0), Err(Error::NonPositiveRange(_))));
        assert!(matches!(a.steering_fresnel(0.3, -1.0), Err(Error::NonPositiveRange(_))));
        assert!(ArrayConfig::new(28e9, 1).is_err());
    }

    #[test]
    fn broadside_usw_tends_to_all_ones() {
        let a = default_array();
        let v = a.steering_usw(90f64.to_radians(), 1e9).unwrap();
        for z in v.iter() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn chirp_is_fresnel_at_inverse_range() {
        let a = default_array();
        let t = 0.7;
        let f = a.steering_fresnel(t, 3.2).unwrap();
        let c = a.steering_chirp(t, 1.0 / 3.2);
        assert!((f - c).camax() < 1e-15);
    }

    #[test]
    fn far_field_chirp_is_vandermonde() {
        let a = default_array();
        let t = 0.9;
        let v = a.steering_chirp(t, 0.0);
        let w = a.omega(t);
        for (z, &m) in v.iter().zip(a.centred()) {
            assert!((z - C64::from_polar(1.0, w * m)).norm() < 1e-14);
        }
    }

    #[test]
    fn quadratic_part_is_even_in_index() {
        let a = default_array();
        let t = 45f64.to_radians();
        let v = a.steering_fresnel(t, 1.85).unwrap();
        let w = a.omega(t);
        let n = a.elements();
        for m in 0..n / 2 {
            let mm = a.centred()[m];
            let lhs = v[m] * C64::from_polar(1.0, -w * mm);
            let rhs = v[n - 1 - m] * C64::from_polar(1.0, w * mm);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn kappa_at_45_degrees() {
        let a = default_array();
        let t = 45f64.to_radians();
        let cc = a.curvature_coords(t, 1.85).unwrap();
        let expected = PI * a.spacing().powi(2) * 0.5 / a.wavelength() / 1.85;
        assert!((cc.kappa - expected).abs() < 1e-15);
        assert!((cc.kappa * 1.85 - cc.chirp).abs() < 1e-15);
    }
}
