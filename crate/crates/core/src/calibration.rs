//! One-scalar calibration of the atmospheric zenith transmittance against
//! target down-link transmissions.
//!
//! The down-link from the first satellite at pass centre is evaluated with
//! the atmosphere switched off for each anchor aperture. A common
//! atmospheric factor `x` then scales every anchor, and the value that
//! minimizes the largest relative error balances the two extreme anchors:
//! `x = 2 / (max_k q_k + min_k q_k)` with `q_k = p_vacuum_k / target_k`. The
//! zenith transmittance follows from `x = T^airmass`.

use serde::Serialize;

use crate::chain::ChainConfig;
use crate::error::{check_probability, Error, Result};
use crate::geometry::place_chain;
use crate::link_budget::{airmass, link_transmission, AtmosphereSpec, TerminalSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationAnchor {
    /// Satellite transmit aperture radius (m).
    pub aperture_radius: f64,
    pub target_p_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnchorFit {
    pub anchor: CalibrationAnchor,
    pub p_t_vacuum: f64,
    pub p_t: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub zenith_transmittance: f64,
    /// Atmospheric factor on the calibration link.
    pub p_atmosphere: f64,
    pub elevation: f64,
    pub airmass: f64,
    pub link_length: f64,
    pub fits: Vec<AnchorFit>,
}

impl Calibration {
    pub fn max_relative_error(&self) -> f64 {
        self.fits.iter().map(|f| f.relative_error.abs()).fold(0.0, f64::max)
    }
}

pub fn calibrate_zenith_transmittance(
    config: &ChainConfig,
    anchors: &[CalibrationAnchor],
) -> Result<Calibration> {
    if anchors.is_empty() {
        return Err(Error::invalid("anchors", "need at least one anchor"));
    }
    for a in anchors {
        check_probability("target_p_t", a.target_p_t)?;
        if !(a.target_p_t > 0.0) {
            return Err(Error::invalid("target_p_t", "must be positive"));
        }
    }
    config.validate()?;
    let geometry = place_chain(&config.constellation, 0.5)?;
    if !geometry.in_view {
        return Err(Error::InfeasibleGeometry(
            "calibration geometry is not in view at pass centre".into(),
        ));
    }
    let elevation = geometry.elevation_angles[0];
    let link_length = geometry.link_lengths[0];
    let vacuum = AtmosphereSpec {
        zenith_transmittance: 1.0,
        ..config.atmosphere
    };
    let p_vacuum = anchors
        .iter()
        .map(|a| {
            let tx = TerminalSpec {
                aperture_radius: a.aperture_radius,
                ..config.satellite_terminal
            };
            link_transmission(&tx, &config.ground_terminal, &vacuum, link_length, Some(elevation))
                .map(|b| b.p_t)
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = p_vacuum.iter().zip(anchors).map(|(p, a)| p / a.target_p_t).collect();
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let p_atmosphere = (2.0 / (hi + lo)).min(1.0);
    let m = airmass(elevation);
    let zenith_transmittance = p_atmosphere.powf(1.0 / m);
    let fits = anchors
        .iter()
        .zip(&p_vacuum)
        .map(|(a, &pv)| {
            let p_t = pv * p_atmosphere;
            AnchorFit {
                anchor: *a,
                p_t_vacuum: pv,
                p_t,
                relative_error: p_t / a.target_p_t - 1.0,
            }
        })
        .collect();
    Ok(Calibration {
        zenith_transmittance,
        p_atmosphere,
        elevation,
        airmass: m,
        link_length,
        fits,
    })
}
