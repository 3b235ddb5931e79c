//! Per-photon transmission of one elementary link: Gaussian beam
//! diffraction onto a circular aperture, transmitter pointing jitter,
//! Rayleigh-scattering loss for down-links, and terminal optics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, Error, Result};
use crate::numerics::{bessel_i0e, integrate};

/// Transmit waist as a fraction of the telescope radius (clipped-Gaussian
/// optimum for far-field on-axis intensity).
pub const DEFAULT_WAIST_FACTOR: f64 = 0.89;
pub const DEFAULT_WAVELENGTH: f64 = 780e-9;
pub const DEFAULT_INTERNAL_TRANSMITTANCE: f64 = 0.75;

/// Below this elevation the plane-parallel airmass is replaced by a
/// spherical-shell one.
pub const FLAT_AIRMASS_LIMIT: f64 = 15.0 * PI / 180.0;
/// Earth radius over the effective scattering scale height (6371 km / 8 km).
const SHELL_RADIUS_RATIO: f64 = 6371.0 / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalSpec {
    /// m
    pub aperture_radius: f64,
    /// rad, per axis
    pub pointing_sigma: f64,
    pub internal_transmittance: f64,
    /// m
    pub wavelength: f64,
    /// Transmit waist over aperture radius.
    pub waist_factor: f64,
}

impl TerminalSpec {
    pub fn new(aperture_radius: f64, pointing_sigma: f64) -> Self {
        Self {
            aperture_radius,
            pointing_sigma,
            internal_transmittance: DEFAULT_INTERNAL_TRANSMITTANCE,
            wavelength: DEFAULT_WAVELENGTH,
            waist_factor: DEFAULT_WAIST_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("aperture_radius", self.aperture_radius)?;
        check_positive("wavelength", self.wavelength)?;
        check_positive("waist_factor", self.waist_factor)?;
        if !(self.pointing_sigma >= 0.0 && self.pointing_sigma.is_finite()) {
            return Err(Error::invalid("pointing_sigma", "must be non-negative"));
        }
        if !(self.internal_transmittance > 0.0 && self.internal_transmittance <= 1.0) {
            return Err(Error::invalid("internal_transmittance", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn tx_waist(&self) -> f64 {
        self.waist_factor * self.aperture_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtmosphereSpec {
    /// Zenith transmittance above the ground station.
    pub zenith_transmittance: f64,
    /// Multiplier on the received beam radius (>= 1).
    pub turbulence_widening: f64,
    pub enabled: bool,
}

impl Default for AtmosphereSpec {
    fn default() -> Self {
        Self {
            zenith_transmittance: 1.0,
            turbulence_widening: 1.0,
            enabled: true,
        }
    }
}

impl AtmosphereSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.zenith_transmittance > 0.0 && self.zenith_transmittance <= 1.0) {
            return Err(Error::invalid("zenith_transmittance", "must lie in (0, 1]"));
        }
        if !(self.turbulence_widening >= 1.0 && self.turbulence_widening.is_finite()) {
            return Err(Error::invalid("turbulence_widening", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkBudgetResult {
    pub link_length: f64,
    pub p_diffraction: f64,
    pub p_jitter: f64,
    pub p_atmosphere: f64,
    pub p_terminal: f64,
    pub p_t: f64,
    /// Beam radius at the receiver, including turbulence widening (m).
    pub beam_waist_at_rx: f64,
    pub rx_aperture_radius: f64,
    /// Standard deviation of the beam-centre offset per axis at the
    /// receiver (m).
    pub sigma_offset: f64,
    pub w_over_sigma_offset: f64,
}

impl LinkBudgetResult {
    /// Transmission for one realisation of the beam-centre offset. Averaging
    /// this over the offset distribution gives `p_t`.
    pub fn transmission_at_offset(&self, offset: f64) -> f64 {
        offset_collection(self.rx_aperture_radius, self.beam_waist_at_rx, offset)
            * self.p_atmosphere
            * self.p_terminal
    }
}

/// Radius of a fundamental Gaussian beam of waist `w0` after `z` metres.
pub fn beam_radius(w0: f64, wavelength: f64, z: f64) -> f64 {
    let rayleigh = PI * w0 * w0 / wavelength;
    w0 * (1.0 + (z / rayleigh).powi(2)).sqrt()
}

/// Fraction of a Gaussian beam of radius `w` falling on a centred circular
/// aperture of radius `aperture`.
pub fn encircled_power(aperture: f64, w: f64) -> f64 {
    -(-2.0 * aperture * aperture / (w * w)).exp_m1()
}

/// Returns `(p_diffraction, beam radius at the receiver)`.
pub fn gaussian_collection(
    tx: &TerminalSpec,
    rx_aperture_radius: f64,
    link_length: f64,
) -> Result<(f64, f64)> {
    tx.validate()?;
    check_positive("rx_aperture_radius", rx_aperture_radius)?;
    check_positive("link_length", link_length)?;
    let w = beam_radius(tx.tx_waist(), tx.wavelength, link_length);
    Ok((encircled_power(rx_aperture_radius, w), w))
}

/// Fraction of a Gaussian beam of radius `w` whose centre is displaced by
/// `offset` from the centre of a circular aperture of radius `aperture`.
pub fn offset_collection(aperture: f64, w: f64, offset: f64) -> f64 {
    if offset == 0.0 {
        return encircled_power(aperture, w);
    }
    let w2 = w * w;
    // exp(-2(r^2+d^2)/w^2) I0(4rd/w^2), rewritten with the scaled Bessel
    // function so that nothing overflows for large r*d/w^2.
    let radial = |r: f64| {
        4.0 * r / w2 * (-2.0 * (r - offset).powi(2) / w2).exp() * bessel_i0e(4.0 * r * offset / w2)
    };
    // The integrand peaks near r = offset with width ~w; split there.
    let mut cuts = vec![0.0];
    for c in [offset - 6.0 * w, offset, offset + 6.0 * w] {
        if c > 0.0 && c < aperture {
            cuts.push(c);
        }
    }
    cuts.push(aperture);
    cuts.windows(2)
        .map(|s| integrate(radial, s[0], s[1]))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Average of a radial transmission profile over a centred 2-D Gaussian
/// offset with per-axis deviation `sigma_offset`.
///
/// The offset radius is Rayleigh distributed; with `u = d^2 / (2 sigma^2)`
/// its density becomes `exp(-u)`, which is what gets integrated.
pub fn jitter_average<F: Fn(f64) -> f64>(profile: F, sigma_offset: f64) -> f64 {
    if sigma_offset <= 0.0 {
        return profile(0.0);
    }
    let f = |u: f64| (-u).exp() * profile(sigma_offset * (2.0 * u).sqrt());
    [0.0, 1.0, 5.0, 15.0, 50.0]
        .windows(2)
        .map(|s| integrate(f, s[0], s[1]))
        .sum()
}

/// Relative airmass at an elevation: `1/sin(el)` down to 15 degrees,
/// spherical-shell below, scaled to join continuously.
pub fn airmass(elevation: f64) -> f64 {
    let flat = |e: f64| 1.0 / e.sin();
    let shell = |e: f64| {
        let rs = SHELL_RADIUS_RATIO * e.sin();
        (rs * rs + 2.0 * SHELL_RADIUS_RATIO + 1.0).sqrt() - rs
    };
    if elevation >= FLAT_AIRMASS_LIMIT {
        flat(elevation)
    } else {
        shell(elevation) * flat(FLAT_AIRMASS_LIMIT) / shell(FLAT_AIRMASS_LIMIT)
    }
}

pub fn atmospheric_transmittance(atm: &AtmosphereSpec, elevation: f64) -> Result<f64> {
    if !atm.enabled {
        return Ok(1.0);
    }
    atm.validate()?;
    if !(elevation > 0.0 && elevation <= PI / 2.0 + 1e-12) {
        return Err(Error::invalid(
            "elevation",
            format!("{elevation} rad is not above the horizon"),
        ));
    }
    Ok(atm.zenith_transmittance.powf(airmass(elevation)))
}

/// Full budget of one link. `elevation` is the ground-station elevation for
/// a down-link and `None` for a satellite-satellite link.
pub fn link_transmission(
    tx: &TerminalSpec,
    rx: &TerminalSpec,
    atm: &AtmosphereSpec,
    link_length: f64,
    elevation: Option<f64>,
) -> Result<LinkBudgetResult> {
    rx.validate()?;
    let (_, vacuum_w) = gaussian_collection(tx, rx.aperture_radius, link_length)?;
    let (p_atmosphere, widening) = match elevation {
        Some(el) => {
            let p = atmospheric_transmittance(atm, el)?;
            (p, if atm.enabled { atm.turbulence_widening } else { 1.0 })
        }
        None => (1.0, 1.0),
    };
    let w = vacuum_w * widening;
    let a = rx.aperture_radius;
    let p_diffraction = encircled_power(a, w);
    let sigma_offset = link_length * tx.pointing_sigma;
    let p_jitter = if sigma_offset > 0.0 {
        (jitter_average(|d| offset_collection(a, w, d), sigma_offset) / p_diffraction).min(1.0)
    } else {
        1.0
    };
    let p_terminal = tx.internal_transmittance * rx.internal_transmittance;
    for (name, p) in [
        ("p_diffraction", p_diffraction),
        ("p_jitter", p_jitter),
        ("p_atmosphere", p_atmosphere),
    ] {
        check_probability(name, p)?;
    }
    Ok(LinkBudgetResult {
        link_length,
        p_diffraction,
        p_jitter,
        p_atmosphere,
        p_terminal,
        p_t: p_diffraction * p_jitter * p_atmosphere * p_terminal,
        beam_waist_at_rx: w,
        rx_aperture_radius: a,
        sigma_offset,
        w_over_sigma_offset: if sigma_offset > 0.0 {
            w / sigma_offset
        } else {
            f64::INFINITY
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micius() -> TerminalSpec {
        TerminalSpec::new(0.15, 0.41e-6)
    }

    #[test]
    fn huge_aperture_collects_everything() {
        let (p, _) = gaussian_collection(&micius(), 1e3, 500e3).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn encircled_power_identity() {
        let (_, w) = gaussian_collection(&micius(), 1.0, 500e3).unwrap();
        let (p, _) = gaussian_collection(&micius(), w / 2f64.sqrt(), 500e3).unwrap();
        assert!((p - (1.0 - (-1f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn zero_jitter_returns_on_axis_value() {
        let v = jitter_average(|d| offset_collection(0.3, 0.5, d), 0.0);
        assert_eq!(v, encircled_power(0.3, 0.5));
    }

    #[test]
    fn constant_profile_is_preserved() {
        let v = jitter_average(|_| 0.37, 1.3);
        assert!((v - 0.37).abs() < 1e-12);
    }

    #[test]
    fn jitter_average_matches_widened_beam() {
        // Convolving a Gaussian spot with Gaussian jitter widens it to
        // w^2 + 4 sigma^2.
        for &(a, w, s) in &[(0.6, 0.28, 0.2), (0.5, 1.4, 1.05), (0.3, 0.3, 0.01)] {
            let v = jitter_average(|d| offset_collection(a, w, d), s);
            let exact = encircled_power(a, (w * w + 4.0 * s * s).sqrt());
            assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
        }
    }

    #[test]
    fn ten_to_one_beam_to_jitter_ratio() {
        // Aperture matched to the beam: under 2% jitter loss.
        let w = 0.7;
        let v = jitter_average(|d| offset_collection(w, w, d), w / 10.0) / encircled_power(w, w);
        assert!(v > 0.98 && v <= 1.0, "{v}");
        // Small aperture: the loss tends to 1 - 1/(1 + 4 (sigma/w)^2).
        let a = 1e-3 * w;
        let v = jitter_average(|d| offset_collection(a, w, d), w / 10.0) / encircled_power(a, w);
        assert!((v - 1.0 / 1.04).abs() < 1e-6, "{v}");
    }

    #[test]
    fn atmosphere_limits() {
        let atm = AtmosphereSpec {
            zenith_transmittance: 0.8,
            ..Default::default()
        };
        assert!((atmospheric_transmittance(&atm, PI / 2.0).unwrap() - 0.8).abs() < 1e-15);
        let off = AtmosphereSpec {
            enabled: false,
            ..atm
        };
        assert_eq!(atmospheric_transmittance(&off, 0.3).unwrap(), 1.0);
        assert!((airmass(PI / 6.0) - 2.0).abs() < 1e-12);
        assert!(atmospheric_transmittance(&atm, 0.0).is_err());
        assert!(atmospheric_transmittance(&atm, -0.1).is_err());
    }

    #[test]
    fn airmass_is_continuous_and_monotone() {
        let below = airmass(FLAT_AIRMASS_LIMIT - 1e-9);
        let above = airmass(FLAT_AIRMASS_LIMIT + 1e-9);
        assert!((below - above).abs() < 1e-6);
        let mut last = f64::INFINITY;
        for k in 1..=90 {
            let m = airmass((k as f64).to_radians());
            assert!(m <= last);
            last = m;
        }
        assert!(airmass(1e-6) < 50.0);
    }

    #[test]
    fn factors_compose() {
        let atm = AtmosphereSpec {
            zenith_transmittance: 0.6,
            turbulence_widening: 1.2,
            enabled: true,
        };
        let ground = TerminalSpec::new(0.6, 0.0);
        let r = link_transmission(&micius(), &ground, &atm, 520e3, Some(1.3)).unwrap();
        let prod = r.p_diffraction * r.p_jitter * r.p_atmosphere * r.p_terminal;
        assert!((r.p_t - prod).abs() < 1e-15);
        let (_, w) = gaussian_collection(&micius(), 0.6, 520e3).unwrap();
        assert!((r.beam_waist_at_rx - 1.2 * w).abs() < 1e-12);
        assert!((r.w_over_sigma_offset - r.beam_waist_at_rx / (520e3 * 0.41e-6)).abs() < 1e-9);
        let avg = jitter_average(|d| r.transmission_at_offset(d), r.sigma_offset);
        assert!((avg - r.p_t).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_terminals() {
        let mut t = micius();
        t.internal_transmittance = 0.0;
        assert!(t.validate().is_err());
        t = micius();
        t.pointing_sigma = -1.0;
        assert!(t.validate().is_err());
        assert!(gaussian_collection(&micius(), 0.5, 0.0).is_err());
    }
}
