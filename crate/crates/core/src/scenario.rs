//! Scenario files: sectioned TOML with unit-suffixed quantities.
//!
//! ```toml
//! [chain]
//! n_sat = 5
//! orbit_altitude = "500 km"
//! ground_distance = "1500 km"
//! ground_altitude = "2000 m"
//!
//! [terminals.satellite]
//! aperture_radius = "0.5 m"
//! pointing_sigma = "0.41 urad"
//!
//! [terminals.ground]
//! aperture_radius = "0.6 m"
//! pointing_sigma = "0 rad"
//!
//! [hardware.satellite]  # and [hardware.ground]
//! p1 = 0.99
//! # ...
//!
//! [atmosphere]
//! zenith_transmittance = 0.61
//! ```
//!
//! Dimensional values are strings with a unit (`m`, `km`, `rad`, `urad`,
//! `deg`, `s`, `ms`, `Hz`, ...); dimensionless values are plain numbers.
//! Unknown keys are errors. Optional keys fall back to the defaults listed in
//! [`DEFAULTS`], and every fallback used is recorded in
//! [`Scenario::defaults_used`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::calibration::CalibrationAnchor;
use crate::chain::{ChainConfig, DEFAULT_PASS_SAMPLES};
use crate::error::{Error, Result};
use crate::geometry::{ConstellationSpec, EARTH_RADIUS};
use crate::link_budget::{
    AtmosphereSpec, TerminalSpec, DEFAULT_INTERNAL_TRANSMITTANCE, DEFAULT_WAIST_FACTOR, DEFAULT_WAVELENGTH,
};
use crate::monte_carlo::JitterMode;
use crate::quantum_model::HardwareParams;

pub const SCENARIO_DIR_ENV: &str = "SATQR_SCENARIO_DIR";
pub const DEFAULT_SCENARIO: &str = "table1";

const BUNDLED: &[(&str, &str)] = &[
    ("table1", include_str!("../scenarios/table1.scenario")),
    ("micius", include_str!("../scenarios/micius.scenario")),
    ("upgraded", include_str!("../scenarios/upgraded.scenario")),
];

/// Documented defaults for optional keys.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("chain.earth_radius", "6371 km"),
    ("chain.min_elevation", "20 deg"),
    ("chain.pass_samples", "64"),
    ("chain.swap_latency", "0 s"),
    ("terminals.*.internal_transmittance", "0.75"),
    ("terminals.*.wavelength", "780 nm"),
    ("terminals.*.waist_factor", "0.89"),
    ("atmosphere.turbulence_widening", "1"),
    ("atmosphere.enabled", "true"),
    ("run.n_mem", "[200]"),
    ("run.distances", "[\"1500 km\"]"),
    ("run.target_rates", "[\"10 Hz\", \"100 Hz\"]"),
    ("run.target_fidelity", "0.9"),
    ("run.n_max", "100000"),
    ("run.pass_phase", "0.5"),
    ("run.mc_trials", "100000"),
    ("run.mc_jitter", "\"correlated-per-attempt\""),
    ("run.seed", "1"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub n_mem: Vec<usize>,
    /// Ground-station separations for sweeps (m).
    pub distances: Vec<f64>,
    /// Hz
    pub target_rates: Vec<f64>,
    pub target_fidelity: f64,
    pub n_max: usize,
    /// Pass phase for single-phase runs such as Monte-Carlo validation.
    pub pass_phase: f64,
    pub mc_trials: u64,
    pub mc_jitter: JitterMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSettings {
    /// Ground-station separation of the calibration geometry (m).
    pub ground_distance: f64,
    pub anchors: Vec<CalibrationAnchor>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub config: ChainConfig,
    pub run: RunSettings,
    pub calibration: Option<CalibrationSettings>,
    /// `key = value` for every optional key that fell back to its default.
    pub defaults_used: Vec<String>,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.run == other.run && self.calibration == other.calibration
    }
}

#[derive(Clone, Copy)]
enum Dim {
    Length,
    Angle,
    Time,
    Rate,
}

impl Dim {
    fn name(self) -> &'static str {
        match self {
            Dim::Length => "length",
            Dim::Angle => "angle",
            Dim::Time => "time",
            Dim::Rate => "rate",
        }
    }

    fn base_unit(self) -> &'static str {
        match self {
            Dim::Length => "m",
            Dim::Angle => "rad",
            Dim::Time => "s",
            Dim::Rate => "Hz",
        }
    }

    /// Decimal exponent of a unit, or `None` for non-decimal units.
    fn exponent(self, unit: &str) -> Option<Option<i32>> {
        let e = match (self, unit) {
            (Dim::Length, "m") => 0,
            (Dim::Length, "km") => 3,
            (Dim::Length, "cm") => -2,
            (Dim::Length, "mm") => -3,
            (Dim::Length, "um") => -6,
            (Dim::Length, "nm") => -9,
            (Dim::Angle, "rad") => 0,
            (Dim::Angle, "mrad") => -3,
            (Dim::Angle, "urad") => -6,
            (Dim::Angle, "nrad") => -9,
            (Dim::Angle, "deg") => return Some(None),
            (Dim::Time, "s") => 0,
            (Dim::Time, "ms") => -3,
            (Dim::Time, "us") => -6,
            (Dim::Time, "ns") => -9,
            (Dim::Rate, "Hz") => 0,
            (Dim::Rate, "kHz") => 3,
            (Dim::Rate, "MHz") => 6,
            _ => return None,
        };
        Some(Some(e))
    }
}

/// Parse `"<number> <unit>"` into SI base units. Decimal prefixes are applied
/// by shifting the decimal exponent before parsing, so `"0.41 urad"` and
/// `"4.1e-7 rad"` give the same double.
fn parse_quantity(text: &str, dim: Dim) -> std::result::Result<f64, String> {
    let expected = || format!("expected a {} like \"1.5 {}\", got \"{text}\"", dim.name(), dim.base_unit());
    let mut parts = text.split_whitespace();
    let (Some(number), Some(unit), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(expected());
    };
    let scale = dim
        .exponent(unit)
        .ok_or_else(|| format!("unknown {} unit `{unit}` in \"{text}\"", dim.name()))?;
    let (mantissa, exp) = match number.find(['e', 'E']) {
        Some(i) => (&number[..i], number[i + 1..].parse::<i32>().map_err(|_| expected())?),
        None => (number, 0),
    };
    let value = match scale {
        Some(shift) if mantissa.chars().all(|c| c.is_ascii_digit() || "+-.".contains(c)) => {
            format!("{mantissa}e{}", exp + shift).parse::<f64>().map_err(|_| expected())?
        }
        Some(_) => number.parse::<f64>().map_err(|_| expected())?,
        None => number.parse::<f64>().map_err(|_| expected())? * PI / 180.0,
    };
    if value.is_nan() {
        return Err(expected());
    }
    Ok(value)
}

fn format_quantity(value: f64, dim: Dim) -> String {
    format!("{value} {}", dim.base_unit())
}

fn config_error(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{path}`: {msg}"))
}

/// Reads keys out of one table and reports whatever is left as unknown.
struct Reader<'d> {
    path: String,
    table: Table,
    defaults: &'d mut Vec<String>,
}

impl<'d> Reader<'d> {
    fn new(path: impl Into<String>, table: Table, defaults: &'d mut Vec<String>) -> Self {
        Self {
            path: path.into(),
            table,
            defaults,
        }
    }

    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.path)
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    fn missing(&self, key: &str) -> Error {
        config_error(&self.key(key), "required key is missing")
    }

    fn note_default(&mut self, key: &str, shown: String) {
        self.defaults.push(format!("{} = {shown}", self.key(key)));
    }

    fn as_number(&self, key: &str, v: Value) -> Result<f64> {
        match v {
            Value::Float(f) => Ok(f),
            Value::Integer(i) => Ok(i as f64),
            Value::String(s) if s == "inf" => Ok(f64::INFINITY),
            other => Err(config_error(&self.key(key), format!("expected a number, got {other}"))),
        }
    }

    fn number(&mut self, key: &str) -> Result<f64> {
        let v = self.take(key).ok_or_else(|| self.missing(key))?;
        self.as_number(key, v)
    }

    fn number_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some(v) => self.as_number(key, v),
            None => {
                self.note_default(key, default.to_string());
                Ok(default)
            }
        }
    }

    fn as_quantity(&self, key: &str, v: Value, dim: Dim) -> Result<f64> {
        match v {
            Value::String(s) if s.trim() == "inf" => Ok(f64::INFINITY),
            Value::Float(f) if f == f64::INFINITY => Ok(f),
            Value::String(s) => parse_quantity(&s, dim).map_err(|m| config_error(&self.key(key), m)),
            other => Err(config_error(
                &self.key(key),
                format!("expected a {} string with a unit, got {other}", dim.name()),
            )),
        }
    }

    fn quantity(&mut self, key: &str, dim: Dim) -> Result<f64> {
        let v = self.take(key).ok_or_else(|| self.missing(key))?;
        self.as_quantity(key, v, dim)
    }

    fn quantity_or(&mut self, key: &str, dim: Dim, default: f64) -> Result<f64> {
        match self.take(key) {
            Some(v) => self.as_quantity(key, v, dim),
            None => {
                self.note_default(key, format_quantity(default, dim));
                Ok(default)
            }
        }
    }

    fn as_count(&self, key: &str, v: &Value) -> Result<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            other => Err(config_error(&self.key(key), format!("expected a non-negative integer, got {other}"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<u64> {
        let v = self.take(key).ok_or_else(|| self.missing(key))?;
        self.as_count(key, &v)
    }

    fn count_or(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            Some(v) => self.as_count(key, &v),
            None => {
                self.note_default(key, default.to_string());
                Ok(default)
            }
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            Some(Value::Boolean(b)) => Ok(b),
            Some(other) => Err(config_error(&self.key(key), format!("expected true or false, got {other}"))),
            None => {
                self.note_default(key, default.to_string());
                Ok(default)
            }
        }
    }

    fn string_or(&mut self, key: &str, default: &str) -> Result<String> {
        match self.take(key) {
            Some(Value::String(s)) => Ok(s),
            Some(other) => Err(config_error(&self.key(key), format!("expected a string, got {other}"))),
            None => {
                self.note_default(key, format!("\"{default}\""));
                Ok(default.to_string())
            }
        }
    }

    /// A scalar or array of values, each converted by `f`.
    fn list_or<T>(
        &mut self,
        key: &str,
        default: Vec<T>,
        shown: &str,
        f: impl Fn(&Self, Value) -> Result<T>,
    ) -> Result<Vec<T>> {
        match self.take(key) {
            Some(Value::Array(items)) => {
                if items.is_empty() {
                    return Err(config_error(&self.key(key), "list is empty"));
                }
                items.into_iter().map(|v| f(self, v)).collect()
            }
            Some(v) => Ok(vec![f(self, v)?]),
            None => {
                self.note_default(key, shown.to_string());
                Ok(default)
            }
        }
    }

    fn subtable(&mut self, key: &str) -> Result<Option<Table>> {
        match self.take(key) {
            Some(Value::Table(t)) => Ok(Some(t)),
            Some(_) => Err(config_error(&self.key(key), "expected a section")),
            None => Ok(None),
        }
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            Some(k) => Err(config_error(&format!("{}.{k}", self.path), "unknown key")),
            None => Ok(()),
        }
    }
}

fn read_terminal(table: Table, path: &str, defaults: &mut Vec<String>) -> Result<TerminalSpec> {
    let mut r = Reader::new(path, table, defaults);
    let t = TerminalSpec {
        aperture_radius: r.quantity("aperture_radius", Dim::Length)?,
        pointing_sigma: r.quantity("pointing_sigma", Dim::Angle)?,
        internal_transmittance: r.number_or("internal_transmittance", DEFAULT_INTERNAL_TRANSMITTANCE)?,
        wavelength: r.quantity_or("wavelength", Dim::Length, DEFAULT_WAVELENGTH)?,
        waist_factor: r.number_or("waist_factor", DEFAULT_WAIST_FACTOR)?,
    };
    r.finish()?;
    t.validate().map_err(|e| config_error(path, e))?;
    Ok(t)
}

fn read_hardware(table: Table, path: &str, defaults: &mut Vec<String>) -> Result<HardwareParams> {
    let mut r = Reader::new(path, table, defaults);
    let hw = HardwareParams {
        p1: r.number("p1")?,
        p2: r.number("p2")?,
        eta_coll: r.number("eta_coll")?,
        visibility: r.number("visibility")?,
        eta_det: r.number("eta_det")?,
        p_dark: r.number("p_dark")?,
        p_swap: r.number("p_swap")?,
        p_loss_swap: r.number("p_loss_swap")?,
        tau_c: r.quantity("tau_c", Dim::Time)?,
        t_loss: r.quantity("t_loss", Dim::Time)?,
    };
    r.finish()?;
    hw.validate().map_err(|e| config_error(path, e))?;
    Ok(hw)
}

/// Read the `satellite` and `ground` node classes of a section.
fn node_classes(
    table: Table,
    section: &str,
    defaults: &mut Vec<String>,
) -> Result<(Table, Table)> {
    let mut r = Reader::new(section, table, defaults);
    let sat = r
        .subtable("satellite")?
        .ok_or_else(|| config_error(&format!("{section}.satellite"), "node class is not defined"))?;
    let ground = r
        .subtable("ground")?
        .ok_or_else(|| config_error(&format!("{section}.ground"), "node class is not defined"))?;
    r.finish()?;
    Ok((sat, ground))
}

fn parse_table(name: &str, mut root: Table) -> Result<Scenario> {
    const REQUIRED: [&str; 4] = ["chain", "terminals", "hardware", "atmosphere"];
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|s| !root.contains_key(*s)).collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing required sections: {}",
            missing.join(", ")
        )));
    }
    let mut defaults = Vec::new();
    let mut section = |key: &str| -> Result<Table> {
        match root.remove(key) {
            Some(Value::Table(t)) => Ok(t),
            Some(_) => Err(config_error(key, "expected a section")),
            None => Ok(Table::new()),
        }
    };
    let chain_t = section("chain")?;
    let terminals_t = section("terminals")?;
    let hardware_t = section("hardware")?;
    let atmosphere_t = section("atmosphere")?;
    let run_t = section("run")?;
    let calibration_t = match root.remove("calibration") {
        Some(Value::Table(t)) => Some(t),
        Some(_) => return Err(config_error("calibration", "expected a section")),
        None => None,
    };
    if let Some(k) = root.keys().next() {
        return Err(config_error(k, "unknown section"));
    }

    let mut r = Reader::new("chain", chain_t, &mut defaults);
    let n_sat = r.count("n_sat")? as usize;
    let constellation = ConstellationSpec {
        n_sat,
        orbit_altitude: r.quantity("orbit_altitude", Dim::Length)?,
        ground_distance: r.quantity("ground_distance", Dim::Length)?,
        ground_altitude: r.quantity("ground_altitude", Dim::Length)?,
        earth_radius: r.quantity_or("earth_radius", Dim::Length, EARTH_RADIUS)?,
        min_elevation: r.quantity_or("min_elevation", Dim::Angle, 20f64.to_radians())?,
    };
    let pass_samples = r.count_or("pass_samples", DEFAULT_PASS_SAMPLES as u64)? as usize;
    let swap_latency = r.quantity_or("swap_latency", Dim::Time, 0.0)?;
    r.finish()?;

    let (sat_term, ground_term) = node_classes(terminals_t, "terminals", &mut defaults)?;
    let satellite_terminal = read_terminal(sat_term, "terminals.satellite", &mut defaults)?;
    let ground_terminal = read_terminal(ground_term, "terminals.ground", &mut defaults)?;
    let (sat_hw, ground_hw) = node_classes(hardware_t, "hardware", &mut defaults)?;
    let satellite_hw = read_hardware(sat_hw, "hardware.satellite", &mut defaults)?;
    let ground_hw = read_hardware(ground_hw, "hardware.ground", &mut defaults)?;

    let mut r = Reader::new("atmosphere", atmosphere_t, &mut defaults);
    let atmosphere = AtmosphereSpec {
        zenith_transmittance: r.number("zenith_transmittance")?,
        turbulence_widening: r.number_or("turbulence_widening", 1.0)?,
        enabled: r.bool_or("enabled", true)?,
    };
    r.finish()?;

    let config = ChainConfig {
        constellation,
        satellite_terminal,
        ground_terminal,
        atmosphere,
        satellite_hw,
        ground_hw,
        swap_latency,
        pass_samples,
    };
    config.validate().map_err(|e| Error::Config(format!("scenario `{name}`: {e}")))?;

    let mut r = Reader::new("run", run_t, &mut defaults);
    let n_mem = r.list_or("n_mem", vec![200], "[200]", |r, v| {
        r.as_count("n_mem", &v).map(|n| n as usize)
    })?;
    let distances = r.list_or("distances", vec![1500e3], "[\"1500 km\"]", |r, v| {
        r.as_quantity("distances", v, Dim::Length)
    })?;
    let target_rates = r.list_or("target_rates", vec![10.0, 100.0], "[\"10 Hz\", \"100 Hz\"]", |r, v| {
        r.as_quantity("target_rates", v, Dim::Rate)
    })?;
    let run = RunSettings {
        n_mem,
        distances,
        target_rates,
        target_fidelity: r.number_or("target_fidelity", 0.9)?,
        n_max: r.count_or("n_max", 100_000)? as usize,
        pass_phase: r.number_or("pass_phase", 0.5)?,
        mc_trials: r.count_or("mc_trials", 100_000)?,
        mc_jitter: r
            .string_or("mc_jitter", JitterMode::CorrelatedPerAttempt.as_str())?
            .parse()
            .map_err(|e| config_error("run.mc_jitter", e))?,
        seed: r.count_or("seed", 1)?,
    };
    r.finish()?;
    if run.n_mem.iter().any(|&n| n < 1) || run.n_max < 1 {
        return Err(config_error("run.n_mem", "memory mode counts must be at least 1"));
    }
    if !(0.0..=1.0).contains(&run.pass_phase) {
        return Err(config_error("run.pass_phase", "must lie in [0, 1]"));
    }

    let calibration = match calibration_t {
        None => None,
        Some(t) => {
            let mut r = Reader::new("calibration", t, &mut defaults);
            let ground_distance = r.quantity("ground_distance", Dim::Length)?;
            let anchors = match r.take("anchors") {
                Some(Value::Array(items)) if !items.is_empty() => items
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| match v {
                        Value::Table(t) => {
                            let mut dummy = Vec::new();
                            let mut a = Reader::new(format!("calibration.anchors[{i}]"), t, &mut dummy);
                            let anchor = CalibrationAnchor {
                                aperture_radius: a.quantity("aperture_radius", Dim::Length)?,
                                target_p_t: a.number("p_t")?,
                            };
                            a.finish()?;
                            Ok(anchor)
                        }
                        _ => Err(config_error("calibration.anchors", "expected a list of tables")),
                    })
                    .collect::<Result<Vec<_>>>()?,
                _ => return Err(config_error("calibration.anchors", "expected a non-empty list of anchors")),
            };
            r.finish()?;
            Some(CalibrationSettings {
                ground_distance,
                anchors,
            })
        }
    };

    Ok(Scenario {
        name: name.to_string(),
        config,
        run,
        calibration,
        defaults_used: defaults,
    })
}

fn parse_root(text: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| Error::Config(format!("parse error: {}", e.to_string().trim_end())))
}

impl Scenario {
    pub fn from_str(name: &str, text: &str) -> Result<Self> {
        parse_table(name, parse_root(text)?)
    }

    /// Parse with `key=value` overrides applied to the raw tables first.
    pub fn from_str_with_overrides(name: &str, text: &str, overrides: &[String]) -> Result<Self> {
        let mut root = parse_root(text)?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        parse_table(name, root)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::load_path(path, &[])
    }

    fn load_path(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::from_str_with_overrides(name, &text, overrides)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let text = bundled_text(name).ok_or_else(|| {
            Error::Config(format!(
                "no bundled scenario `{name}` (have: {})",
                BUNDLED.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ))
        })?;
        Self::from_str(name, text)
    }

    /// Resolve a scenario reference: an existing file path, a file in the
    /// directory named by `SATQR_SCENARIO_DIR`, or a bundled scenario name.
    pub fn resolve(reference: Option<&str>, overrides: &[String]) -> Result<Self> {
        let reference = reference.unwrap_or(DEFAULT_SCENARIO);
        let direct = PathBuf::from(reference);
        if direct.is_file() {
            return Self::load_path(&direct, overrides);
        }
        if let Ok(dir) = std::env::var(SCENARIO_DIR_ENV) {
            for candidate in [reference.to_string(), format!("{reference}.scenario")] {
                let p = Path::new(&dir).join(candidate);
                if p.is_file() {
                    return Self::load_path(&p, overrides);
                }
            }
        }
        let name = reference.trim_end_matches(".scenario");
        match bundled_text(name) {
            Some(text) => Self::from_str_with_overrides(name, text, overrides),
            None => Err(Error::Config(format!(
                "scenario `{reference}` is neither a file, in ${SCENARIO_DIR_ENV}, nor bundled"
            ))),
        }
    }

    /// Normalized form: every key explicit, quantities in SI base units.
    pub fn to_table(&self) -> Table {
        let c = &self.config;
        let q = |v: f64, d: Dim| Value::String(format_quantity(v, d));
        let f = Value::Float;
        let mut root = Table::new();

        let mut chain = Table::new();
        chain.insert("n_sat".into(), Value::Integer(c.constellation.n_sat as i64));
        chain.insert("orbit_altitude".into(), q(c.constellation.orbit_altitude, Dim::Length));
        chain.insert("ground_distance".into(), q(c.constellation.ground_distance, Dim::Length));
        chain.insert("ground_altitude".into(), q(c.constellation.ground_altitude, Dim::Length));
        chain.insert("earth_radius".into(), q(c.constellation.earth_radius, Dim::Length));
        chain.insert("min_elevation".into(), q(c.constellation.min_elevation, Dim::Angle));
        chain.insert("pass_samples".into(), Value::Integer(c.pass_samples as i64));
        chain.insert("swap_latency".into(), q(c.swap_latency, Dim::Time));
        root.insert("chain".into(), Value::Table(chain));

        let terminal = |t: &TerminalSpec| {
            let mut m = Table::new();
            m.insert("aperture_radius".into(), q(t.aperture_radius, Dim::Length));
            m.insert("pointing_sigma".into(), q(t.pointing_sigma, Dim::Angle));
            m.insert("internal_transmittance".into(), f(t.internal_transmittance));
            m.insert("wavelength".into(), q(t.wavelength, Dim::Length));
            m.insert("waist_factor".into(), f(t.waist_factor));
            Value::Table(m)
        };
        let mut terminals = Table::new();
        terminals.insert("satellite".into(), terminal(&c.satellite_terminal));
        terminals.insert("ground".into(), terminal(&c.ground_terminal));
        root.insert("terminals".into(), Value::Table(terminals));

        let hardware = |h: &HardwareParams| {
            let mut m = Table::new();
            for (k, v) in [
                ("p1", h.p1),
                ("p2", h.p2),
                ("eta_coll", h.eta_coll),
                ("visibility", h.visibility),
                ("eta_det", h.eta_det),
                ("p_dark", h.p_dark),
                ("p_swap", h.p_swap),
                ("p_loss_swap", h.p_loss_swap),
            ] {
                m.insert(k.into(), f(v));
            }
            m.insert("tau_c".into(), q(h.tau_c, Dim::Time));
            m.insert("t_loss".into(), q(h.t_loss, Dim::Time));
            Value::Table(m)
        };
        let mut hw = Table::new();
        hw.insert("satellite".into(), hardware(&c.satellite_hw));
        hw.insert("ground".into(), hardware(&c.ground_hw));
        root.insert("hardware".into(), Value::Table(hw));

        let mut atm = Table::new();
        atm.insert("zenith_transmittance".into(), f(c.atmosphere.zenith_transmittance));
        atm.insert("turbulence_widening".into(), f(c.atmosphere.turbulence_widening));
        atm.insert("enabled".into(), Value::Boolean(c.atmosphere.enabled));
        root.insert("atmosphere".into(), Value::Table(atm));

        let r = &self.run;
        let mut run = Table::new();
        run.insert(
            "n_mem".into(),
            Value::Array(r.n_mem.iter().map(|&n| Value::Integer(n as i64)).collect()),
        );
        run.insert(
            "distances".into(),
            Value::Array(r.distances.iter().map(|&d| q(d, Dim::Length)).collect()),
        );
        run.insert(
            "target_rates".into(),
            Value::Array(r.target_rates.iter().map(|&d| q(d, Dim::Rate)).collect()),
        );
        run.insert("target_fidelity".into(), f(r.target_fidelity));
        run.insert("n_max".into(), Value::Integer(r.n_max as i64));
        run.insert("pass_phase".into(), f(r.pass_phase));
        run.insert("mc_trials".into(), Value::Integer(r.mc_trials as i64));
        run.insert("mc_jitter".into(), Value::String(r.mc_jitter.as_str().into()));
        run.insert("seed".into(), Value::Integer(r.seed as i64));
        root.insert("run".into(), Value::Table(run));

        if let Some(cal) = &self.calibration {
            let mut t = Table::new();
            t.insert("ground_distance".into(), q(cal.ground_distance, Dim::Length));
            t.insert(
                "anchors".into(),
                Value::Array(
                    cal.anchors
                        .iter()
                        .map(|a| {
                            let mut m = Table::new();
                            m.insert("aperture_radius".into(), q(a.aperture_radius, Dim::Length));
                            m.insert("p_t".into(), f(a.target_p_t));
                            Value::Table(m)
                        })
                        .collect(),
                ),
            );
            root.insert("calibration".into(), Value::Table(t));
        }
        root
    }

    pub fn to_normalized_string(&self) -> String {
        toml::to_string(&self.to_table()).expect("scenario tables always serialize")
    }

    /// SHA-256 of the normalized form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_normalized_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parse the value half of an override. TOML literals are taken as is;
/// anything else becomes a string, so `chain.orbit_altitude=600 km` works
/// without quotes.
fn override_value(text: &str) -> Value {
    format!("v = {text}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.trim().to_string()))
}

/// Apply `a.b.c=value`. For `hardware` and `terminals`, a key given without
/// a node class applies to every class.
pub fn apply_override(root: &mut Table, spec: &str) -> Result<()> {
    let (path, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) || keys.len() < 2 {
        return Err(Error::Config(format!("override key `{path}` needs a section and a key")));
    }
    let value = override_value(value);
    let classed = matches!(keys[0], "hardware" | "terminals");
    if classed && keys.len() == 2 {
        let section = root
            .get_mut(keys[0])
            .and_then(Value::as_table_mut)
            .ok_or_else(|| Error::Config(format!("override `{path}`: no section `{}`", keys[0])))?;
        let mut hit = false;
        for (_, class) in section.iter_mut() {
            if let Some(t) = class.as_table_mut() {
                t.insert(keys[1].to_string(), value.clone());
                hit = true;
            }
        }
        if !hit {
            return Err(Error::Config(format!("override `{path}`: no node classes defined")));
        }
        return Ok(());
    }
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        table = table
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{k}` is not a section")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Provenance comment lines, without the leading `#`.
pub fn provenance(scenario: &Scenario, extra: &BTreeMap<&str, String>) -> Vec<String> {
    let mut lines = vec![format!(
        "satqr {} scenario={} sha256={}",
        env!("CARGO_PKG_VERSION"),
        scenario.name,
        scenario.hash()
    )];
    if !extra.is_empty() {
        lines.push(
            extra
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    if scenario.defaults_used.is_empty() {
        lines.push("defaults: none".into());
    } else {
        lines.push(format!("defaults: {}", scenario.defaults_used.join("; ")));
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_prefixes_are_exact() {
        let a = parse_quantity("0.41 urad", Dim::Angle).unwrap();
        let b = parse_quantity("4.1e-7 rad", Dim::Angle).unwrap();
        assert_eq!(a, b);
        assert_eq!(parse_quantity("500 km", Dim::Length).unwrap(), 500e3);
        assert_eq!(parse_quantity("1.5e2 ms", Dim::Time).unwrap(), 0.15);
        assert_eq!(parse_quantity("90 deg", Dim::Angle).unwrap(), PI / 2.0);
    }

    #[test]
    fn bad_quantities() {
        assert!(parse_quantity("500", Dim::Length).is_err());
        assert!(parse_quantity("500 s", Dim::Length).is_err());
        assert!(parse_quantity("abc km", Dim::Length).is_err());
    }

    #[test]
    fn quantities_round_trip() {
        for v in [4.1e-7, 0.1, 6371e3, 1.0 / 3.0] {
            let s = format_quantity(v, Dim::Length);
            assert_eq!(parse_quantity(&s, Dim::Length).unwrap(), v);
        }
    }

    #[test]
    fn override_values() {
        assert_eq!(override_value("0"), Value::Integer(0));
        assert_eq!(override_value("1e-6"), Value::Float(1e-6));
        assert_eq!(override_value("600 km"), Value::String("600 km".into()));
        assert_eq!(override_value("\"3 s\""), Value::String("3 s".into()));
    }
}
