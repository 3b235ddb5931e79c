//! Equatorial string-of-pearls geometry.
//!
//! Everything lives in the equatorial plane. Angles are measured at the
//! Earth's centre from the midpoint between the two ground stations; a point
//! at central angle `theta` and radius `r` sits at `(r sin theta, r cos theta)`.
//! Ground station A is at `-Phi/2`, B at `+Phi/2`, where `Phi` is the
//! great-circle separation divided by the Earth radius. Satellites are spread
//! evenly so that satellite `i` sits at `-Phi/2 + (i + 1/2) Phi / n_sat`
//! when the chain is centred, and the whole chain rotates rigidly with the
//! pass phase.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Standard gravitational parameter of the Earth (m^3/s^2).
pub const EARTH_MU: f64 = 3.986_004_418e14;
pub const EARTH_RADIUS: f64 = 6_371e3;
/// Minimum altitude of a satellite-satellite line of sight.
pub const ATMOSPHERE_CLEARANCE: f64 = 100e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub n_sat: usize,
    /// m
    pub orbit_altitude: f64,
    /// Great-circle separation of the ground stations (m).
    pub ground_distance: f64,
    /// m
    pub ground_altitude: f64,
    /// m
    pub earth_radius: f64,
    /// rad
    pub min_elevation: f64,
}

impl Default for ConstellationSpec {
    fn default() -> Self {
        Self {
            n_sat: 5,
            orbit_altitude: 500e3,
            ground_distance: 1500e3,
            ground_altitude: 2e3,
            earth_radius: EARTH_RADIUS,
            min_elevation: 20f64.to_radians(),
        }
    }
}

impl ConstellationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_sat < 1 {
            return Err(Error::invalid("n_sat", "need at least one satellite"));
        }
        check_positive("earth_radius", self.earth_radius)?;
        check_positive("ground_distance", self.ground_distance)?;
        if !(self.ground_altitude >= 0.0) {
            return Err(Error::invalid("ground_altitude", "must be non-negative"));
        }
        if !(self.orbit_altitude > self.ground_altitude) {
            return Err(Error::invalid(
                "orbit_altitude",
                "must exceed the ground-station altitude",
            ));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.min_elevation) {
            return Err(Error::invalid("min_elevation", "must lie in [0, pi/2)"));
        }
        Ok(())
    }

    pub fn orbit_radius(&self) -> f64 {
        self.earth_radius + self.orbit_altitude
    }

    pub fn ground_radius(&self) -> f64 {
        self.earth_radius + self.ground_altitude
    }

    /// Central angle between the two ground stations.
    pub fn ground_angle(&self) -> f64 {
        self.ground_distance / self.earth_radius
    }

    /// Central angle between neighbouring satellites.
    pub fn sat_spacing_angle(&self) -> f64 {
        self.ground_angle() / self.n_sat as f64
    }

    /// Central angle from a ground station to a satellite sitting exactly on
    /// its horizon. Pass phase 0 and 1 rotate the chain by minus and plus this
    /// angle.
    pub fn horizon_angle(&self) -> f64 {
        (self.ground_radius() / self.orbit_radius()).acos()
    }

    /// Orbital angular rate of a circular orbit (rad/s). Earth rotation is
    /// not included.
    pub fn angular_rate(&self) -> f64 {
        (EARTH_MU / self.orbit_radius().powi(3)).sqrt()
    }

    /// Time covered by pass phase 0..1.
    pub fn phase_span_time(&self) -> f64 {
        2.0 * self.horizon_angle() / self.angular_rate()
    }

    /// Chain rotation offset for a pass phase.
    pub fn phase_offset(&self, pass_phase: f64) -> f64 {
        (2.0 * pass_phase - 1.0) * self.horizon_angle()
    }

    pub fn sat_angles(&self, pass_phase: f64) -> Vec<f64> {
        let half = 0.5 * self.ground_angle();
        let step = self.sat_spacing_angle();
        let offset = self.phase_offset(pass_phase);
        (0..self.n_sat)
            .map(|i| -half + (i as f64 + 0.5) * step + offset)
            .collect()
    }

    pub fn station_angles(&self) -> [f64; 2] {
        let half = 0.5 * self.ground_angle();
        [-half, half]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainGeometry {
    pub pass_phase: f64,
    /// Ground A to first satellite, satellite to satellite, last satellite
    /// to ground B (m).
    pub link_lengths: Vec<f64>,
    /// Elevation of the first satellite seen from A and of the last seen
    /// from B (rad).
    pub elevation_angles: [f64; 2],
    /// Longest round-trip signalling time over the links (s).
    pub t_com: f64,
    pub in_view: bool,
}

impl ChainGeometry {
    pub fn max_link_length(&self) -> f64 {
        self.link_lengths.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_ground_link(&self, index: usize) -> bool {
        index == 0 || index + 1 == self.link_lengths.len()
    }

    /// Elevation of the ground station end of a link, if it is a ground link.
    pub fn link_elevation(&self, index: usize) -> Option<f64> {
        if index == 0 {
            Some(self.elevation_angles[0])
        } else if index + 1 == self.link_lengths.len() {
            Some(self.elevation_angles[1])
        } else {
            None
        }
    }
}

fn point(radius: f64, theta: f64) -> [f64; 2] {
    [radius * theta.sin(), radius * theta.cos()]
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn elevation(ground: [f64; 2], sat: [f64; 2]) -> f64 {
    let d = [sat[0] - ground[0], sat[1] - ground[1]];
    let up = ground[0].hypot(ground[1]);
    let along = (d[0] * ground[0] + d[1] * ground[1]) / up;
    (along / d[0].hypot(d[1])).clamp(-1.0, 1.0).asin()
}

pub fn place_chain(spec: &ConstellationSpec, pass_phase: f64) -> Result<ChainGeometry> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&pass_phase) {
        return Err(Error::invalid("pass_phase", "must lie in [0, 1]"));
    }
    if spec.n_sat > 1 {
        let chord_floor = spec.orbit_radius() * (0.5 * spec.sat_spacing_angle()).cos();
        if chord_floor - spec.earth_radius < ATMOSPHERE_CLEARANCE {
            return Err(Error::InfeasibleGeometry(format!(
                "satellite-satellite line of sight dips to {:.1} km altitude (need {:.0} km)",
                (chord_floor - spec.earth_radius) / 1e3,
                ATMOSPHERE_CLEARANCE / 1e3
            )));
        }
    }

    let [theta_a, theta_b] = spec.station_angles();
    let ground_a = point(spec.ground_radius(), theta_a);
    let ground_b = point(spec.ground_radius(), theta_b);
    let sats: Vec<[f64; 2]> = spec
        .sat_angles(pass_phase)
        .into_iter()
        .map(|t| point(spec.orbit_radius(), t))
        .collect();

    let first = sats[0];
    let last = sats[sats.len() - 1];
    let mut link_lengths = Vec::with_capacity(spec.n_sat + 1);
    link_lengths.push(distance(ground_a, first));
    link_lengths.extend(sats.windows(2).map(|w| distance(w[0], w[1])));
    link_lengths.push(distance(last, ground_b));

    let elevation_angles = [elevation(ground_a, first), elevation(ground_b, last)];
    let in_view = elevation_angles.iter().all(|&e| e >= spec.min_elevation);
    let max_len = link_lengths.iter().copied().fold(0.0, f64::max);

    Ok(ChainGeometry {
        pass_phase,
        link_lengths,
        elevation_angles,
        t_com: 2.0 * max_len / SPEED_OF_LIGHT,
        in_view,
    })
}

/// Visibility window of one pass.
#[derive(Debug, Clone)]
pub struct PassWindow {
    /// Phase interval over which both ground links clear `min_elevation`.
    /// `None` when no phase gives mutual visibility.
    pub phase_range: Option<(f64, f64)>,
    pub duration: f64,
    /// Midpoint samples of the interval, every one in view.
    pub samples: Vec<ChainGeometry>,
}

impl PassWindow {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn center(&self) -> Option<f64> {
        self.phase_range.map(|(lo, hi)| 0.5 * (lo + hi))
    }
}

/// Smallest end-link elevation margin above the cutoff at a phase.
fn visibility_margin(spec: &ConstellationSpec, pass_phase: f64) -> Result<f64> {
    let g = place_chain(spec, pass_phase)?;
    Ok(g.elevation_angles[0].min(g.elevation_angles[1]) - spec.min_elevation)
}

fn bisect_edge(spec: &ConstellationSpec, inside: f64, outside: f64) -> Result<f64> {
    let (mut a, mut b) = (inside, outside);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if visibility_margin(spec, mid)? >= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a).abs() < 1e-15 {
            break;
        }
    }
    Ok(a)
}

/// Visible phase interval. The margin is a minimum of two single-peaked
/// functions that peak symmetrically about phase 0.5, so the visible set is
/// an interval containing 0.5 whenever it is non-empty.
pub fn visibility_interval(spec: &ConstellationSpec) -> Result<Option<(f64, f64)>> {
    if visibility_margin(spec, 0.5)? < 0.0 {
        return Ok(None);
    }
    let lo = if visibility_margin(spec, 0.0)? >= 0.0 {
        0.0
    } else {
        bisect_edge(spec, 0.5, 0.0)?
    };
    let hi = if visibility_margin(spec, 1.0)? >= 0.0 {
        1.0
    } else {
        bisect_edge(spec, 0.5, 1.0)?
    };
    Ok(Some((lo, hi)))
}

pub fn pass_window(spec: &ConstellationSpec, sampling: usize) -> Result<PassWindow> {
    if sampling < 2 {
        return Err(Error::invalid("sampling", "need at least two samples"));
    }
    let Some((lo, hi)) = visibility_interval(spec)? else {
        return Ok(PassWindow {
            phase_range: None,
            duration: 0.0,
            samples: Vec::new(),
        });
    };
    let step = (hi - lo) / sampling as f64;
    let mut samples = Vec::with_capacity(sampling);
    for k in 0..sampling {
        let g = place_chain(spec, lo + (k as f64 + 0.5) * step)?;
        debug_assert!(g.in_view);
        samples.push(g);
    }
    Ok(PassWindow {
        phase_range: Some((lo, hi)),
        duration: (hi - lo) * spec.phase_span_time(),
        samples,
    })
}
