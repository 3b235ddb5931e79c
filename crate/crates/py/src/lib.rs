//! Python bindings. Quantities are SI base units throughout (m, rad, s, Hz).

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use satqr_core::chain::ChainConfig;
use satqr_core::error::Error;
use satqr_core::link_budget::{AtmosphereSpec, LinkBudgetResult, TerminalSpec};
use satqr_core::monte_carlo::{JitterMode, McConfig, McResult};
use satqr_core::rate_model::{ModeSearch, PairDistribution, RateResult};
use satqr_core::{chain, geometry, link_budget, monte_carlo, quantum_model, rate_model, scenario};

create_exception!(satqr, InfeasibleError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InfeasibleGeometry(_) | Error::InfeasibleLink(_) | Error::InfeasibleTarget(_) => {
            InfeasibleError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for satqr_core::error::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn distribution(probabilities: Vec<f64>) -> PyResult<PairDistribution> {
    PairDistribution::new(probabilities).py_err()
}

/// A parsed scenario file.
#[pyclass(frozen, skip_from_py_object, module = "satqr")]
pub struct Scenario {
    inner: scenario::Scenario,
}

impl Scenario {
    fn config(&self) -> &ChainConfig {
        &self.inner.config
    }
}

#[pymethods]
impl Scenario {
    /// Resolve a file path, a name in `$SATQR_SCENARIO_DIR`, or a bundled
    /// scenario name, applying `key=value` overrides.
    #[new]
    #[pyo3(signature = (reference = None, overrides = Vec::new()))]
    fn new(reference: Option<&str>, overrides: Vec<String>) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::Scenario::resolve(reference, &overrides).py_err()?,
        })
    }

    #[staticmethod]
    fn from_str(name: &str, text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::Scenario::from_str(name, text).py_err()?,
        })
    }

    #[staticmethod]
    fn bundled_names() -> Vec<&'static str> {
        scenario::bundled_names()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn n_sat(&self) -> usize {
        self.config().constellation.n_sat
    }

    #[getter]
    fn ground_distance(&self) -> f64 {
        self.config().constellation.ground_distance
    }

    #[getter]
    fn zenith_transmittance(&self) -> f64 {
        self.config().atmosphere.zenith_transmittance
    }

    /// sha256 of the normalized form.
    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn to_normalized_string(&self) -> String {
        self.inner.to_normalized_string()
    }

    /// Copy with a different ground-station separation (m).
    fn with_ground_distance(&self, metres: f64) -> Self {
        let mut inner = self.inner.clone();
        inner.config = inner.config.with_ground_distance(metres);
        Self { inner }
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, hash={})", self.inner.name, &self.inner.hash()[..12])
    }
}

#[pyclass(frozen, get_all, module = "satqr")]
pub struct ChainGeometry {
    pass_phase: f64,
    link_lengths: Vec<f64>,
    elevation_angles: (f64, f64),
    t_com: f64,
    in_view: bool,
}

impl From<geometry::ChainGeometry> for ChainGeometry {
    fn from(g: geometry::ChainGeometry) -> Self {
        Self {
            pass_phase: g.pass_phase,
            link_lengths: g.link_lengths,
            elevation_angles: (g.elevation_angles[0], g.elevation_angles[1]),
            t_com: g.t_com,
            in_view: g.in_view,
        }
    }
}

#[pyclass(frozen, get_all, module = "satqr")]
pub struct LinkBudget {
    link_length: f64,
    p_diffraction: f64,
    p_jitter: f64,
    p_atmosphere: f64,
    p_terminal: f64,
    p_t: f64,
    beam_waist_at_rx: f64,
    w_over_sigma_offset: f64,
}

impl From<LinkBudgetResult> for LinkBudget {
    fn from(b: LinkBudgetResult) -> Self {
        Self {
            link_length: b.link_length,
            p_diffraction: b.p_diffraction,
            p_jitter: b.p_jitter,
            p_atmosphere: b.p_atmosphere,
            p_terminal: b.p_terminal,
            p_t: b.p_t,
            beam_waist_at_rx: b.beam_waist_at_rx,
            w_over_sigma_offset: b.w_over_sigma_offset,
        }
    }
}

#[pyclass(frozen, get_all, module = "satqr")]
pub struct LinkState {
    alpha: f64,
    beta: f64,
    gamma: f64,
    p_link: f64,
    fidelity: f64,
}

impl From<quantum_model::LinkState> for LinkState {
    fn from(l: quantum_model::LinkState) -> Self {
        Self {
            alpha: l.alpha,
            beta: l.beta,
            gamma: l.gamma,
            p_link: l.p_link,
            fidelity: l.fidelity(),
        }
    }
}

#[pyclass(frozen, get_all, module = "satqr")]
pub struct Rate {
    pf: Vec<f64>,
    expected_pairs: f64,
    rate_hz: f64,
    t_com: f64,
    p_loss: f64,
}

impl From<RateResult> for Rate {
    fn from(r: RateResult) -> Self {
        Self {
            pf: r.pf.probabilities().to_vec(),
            expected_pairs: r.expected_pairs,
            rate_hz: r.rate_hz,
            t_com: r.t_com,
            p_loss: r.p_loss,
        }
    }
}

/// Outcome of a minimum-mode search. `n_mem` is None when infeasible.
#[pyclass(frozen, get_all, module = "satqr")]
pub struct ModeSearchResult {
    n_mem: Option<usize>,
    rate_hz: Option<f64>,
    fidelity: f64,
    reason: Option<String>,
}

impl From<ModeSearch> for ModeSearchResult {
    fn from(m: ModeSearch) -> Self {
        match m {
            ModeSearch::Found {
                n_mem,
                rate_hz,
                fidelity,
            } => Self {
                n_mem: Some(n_mem),
                rate_hz: Some(rate_hz),
                fidelity,
                reason: None,
            },
            ModeSearch::Infeasible { reason, fidelity } => Self {
                n_mem: None,
                rate_hz: None,
                fidelity,
                reason: Some(reason),
            },
        }
    }
}

#[pyclass(frozen, get_all, module = "satqr")]
pub struct McSummary {
    histogram: Vec<u64>,
    trials: u64,
    mean_pairs: f64,
    std_error: f64,
    variance: f64,
    rate_estimate: f64,
    rate_std_error: f64,
    analytic_mean: f64,
    analytic_variance: f64,
    tv_distance: f64,
}

impl From<McResult> for McSummary {
    fn from(r: McResult) -> Self {
        Self {
            histogram: r.histogram,
            trials: r.trials,
            mean_pairs: r.mean_pairs,
            std_error: r.std_error,
            variance: r.variance,
            rate_estimate: r.rate_estimate,
            rate_std_error: r.rate_std_error,
            analytic_mean: r.analytic_mean,
            analytic_variance: r.analytic_variance,
            tv_distance: r.tv_distance_to_analytic,
        }
    }
}

fn jitter_mode(name: &str) -> PyResult<JitterMode> {
    name.parse().map_err(|e: Error| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (scenario, pass_phase = 0.5))]
fn place_chain(scenario: &Scenario, pass_phase: f64) -> PyResult<ChainGeometry> {
    Ok(geometry::place_chain(&scenario.config().constellation, pass_phase).py_err()?.into())
}

/// Per-link budgets of the scenario's chain at one pass phase.
#[pyfunction]
#[pyo3(signature = (scenario, pass_phase = 0.5))]
fn chain_budgets(scenario: &Scenario, pass_phase: f64) -> PyResult<Vec<LinkBudget>> {
    let snap = chain::snapshot(scenario.config(), pass_phase).py_err()?;
    Ok(snap.budgets.into_iter().map(Into::into).collect())
}

/// Budget of a single link. `elevation` (rad) marks a down-link and
/// switches on the atmosphere.
#[pyfunction]
#[pyo3(signature = (tx_aperture_radius, rx_aperture_radius, pointing_sigma, link_length, elevation = None, zenith_transmittance = 1.0))]
fn link_transmission(
    tx_aperture_radius: f64,
    rx_aperture_radius: f64,
    pointing_sigma: f64,
    link_length: f64,
    elevation: Option<f64>,
    zenith_transmittance: f64,
) -> PyResult<LinkBudget> {
    let atm = AtmosphereSpec {
        zenith_transmittance,
        ..Default::default()
    };
    Ok(link_budget::link_transmission(
        &TerminalSpec::new(tx_aperture_radius, pointing_sigma),
        &TerminalSpec::new(rx_aperture_radius, 0.0),
        &atm,
        link_length,
        elevation,
    )
    .py_err()?
    .into())
}

/// Elementary-link state between a satellite and the ground (or another
/// satellite) of the scenario.
#[pyfunction]
#[pyo3(signature = (scenario, p_t, storage_time, ground = true))]
fn elementary_link(scenario: &Scenario, p_t: f64, storage_time: f64, ground: bool) -> PyResult<LinkState> {
    let c = scenario.config();
    let rx = if ground { &c.ground_hw } else { &c.satellite_hw };
    Ok(quantum_model::elementary_link(&c.satellite_hw, rx, p_t, storage_time).py_err()?.into())
}

/// End-to-end fidelity of a chain of links given as (alpha, beta, gamma).
#[pyfunction]
fn chain_fidelity(links: Vec<(f64, f64, f64)>, p_swap: f64) -> PyResult<f64> {
    let states: Vec<_> = links
        .iter()
        .map(|&(a, b, g)| quantum_model::LinkState::from_weights(a, b, g))
        .collect();
    let n_sat = states.len().saturating_sub(1);
    Ok(quantum_model::chain_state(&states, n_sat, p_swap).py_err()?.fidelity())
}

#[pyfunction]
fn link_distribution(n_mem: usize, p_link: f64) -> PyResult<Vec<f64>> {
    Ok(rate_model::link_distribution(n_mem, p_link).py_err()?.probabilities().to_vec())
}

/// Minimum pair count over two ground links and `n_sat - 1` satellite links.
#[pyfunction]
fn end_to_end_distribution(sat: Vec<f64>, ground: Vec<f64>, n_sat: usize) -> PyResult<Vec<f64>> {
    let d = rate_model::end_to_end_distribution(&distribution(sat)?, &distribution(ground)?, n_sat).py_err()?;
    Ok(d.probabilities().to_vec())
}

#[pyfunction]
fn min_distribution(links: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let links = links.into_iter().map(distribution).collect::<PyResult<Vec<_>>>()?;
    Ok(rate_model::min_distribution(&links).py_err()?.probabilities().to_vec())
}

#[pyfunction]
fn loss_thinning(probabilities: Vec<f64>, p_loss: f64) -> PyResult<Vec<f64>> {
    let d = rate_model::loss_thinning(&distribution(probabilities)?, p_loss).py_err()?;
    Ok(d.probabilities().to_vec())
}

#[pyfunction]
fn rate_at_phase(py: Python<'_>, scenario: &Scenario, pass_phase: f64, n_mem: usize) -> PyResult<Rate> {
    let c = *scenario.config();
    Ok(py.detach(|| rate_model::rate_at_phase(&c, pass_phase, n_mem)).py_err()?.into())
}

/// Pass-averaged rate.
#[pyfunction]
fn average_rate(py: Python<'_>, scenario: &Scenario, n_mem: usize) -> PyResult<Rate> {
    let c = *scenario.config();
    Ok(py.detach(|| rate_model::average_rate(&c, n_mem)).py_err()?.into())
}

#[pyfunction]
#[pyo3(signature = (scenario, target_rate, target_fidelity, n_max = 100_000))]
fn find_min_modes(
    py: Python<'_>,
    scenario: &Scenario,
    target_rate: f64,
    target_fidelity: f64,
    n_max: usize,
) -> PyResult<ModeSearchResult> {
    let c = *scenario.config();
    let out = py.detach(|| rate_model::find_min_modes(&c, target_rate, target_fidelity, n_max));
    Ok(out.py_err()?.into())
}

/// Monte-Carlo pair counts of the first (ground) link of the scenario at
/// one pass phase.
#[pyfunction]
#[pyo3(signature = (scenario, n_mem, trials, seed = 1, jitter = "correlated-per-attempt", pass_phase = 0.5))]
fn simulate_link(
    py: Python<'_>,
    scenario: &Scenario,
    n_mem: usize,
    trials: u64,
    seed: u64,
    jitter: &str,
    pass_phase: f64,
) -> PyResult<McSummary> {
    let c = *scenario.config();
    let cfg = McConfig::new(trials, seed, jitter_mode(jitter)?);
    let out = py.detach(|| {
        let snap = chain::snapshot(&c, pass_phase)?;
        monte_carlo::simulate_link(n_mem, &snap.budgets[0], &c.satellite_hw, &c.ground_hw, &cfg)
    });
    Ok(out.py_err()?.into())
}

#[pyfunction]
#[pyo3(signature = (scenario, n_mem, trials, seed = 1, jitter = "off", pass_phase = 0.5))]
fn simulate_chain(
    py: Python<'_>,
    scenario: &Scenario,
    n_mem: usize,
    trials: u64,
    seed: u64,
    jitter: &str,
    pass_phase: f64,
) -> PyResult<McSummary> {
    let c = *scenario.config();
    let cfg = McConfig::new(trials, seed, jitter_mode(jitter)?);
    Ok(py
        .detach(|| monte_carlo::simulate_chain(&c, pass_phase, n_mem, &cfg))
        .py_err()?
        .into())
}

#[pymodule]
pub fn satqr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_class::<Scenario>()?;
    m.add_class::<ChainGeometry>()?;
    m.add_class::<LinkBudget>()?;
    m.add_class::<LinkState>()?;
    m.add_class::<Rate>()?;
    m.add_class::<ModeSearchResult>()?;
    m.add_class::<McSummary>()?;
    m.add_function(wrap_pyfunction!(place_chain, m)?)?;
    m.add_function(wrap_pyfunction!(chain_budgets, m)?)?;
    m.add_function(wrap_pyfunction!(link_transmission, m)?)?;
    m.add_function(wrap_pyfunction!(elementary_link, m)?)?;
    m.add_function(wrap_pyfunction!(chain_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(link_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(end_to_end_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(min_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(loss_thinning, m)?)?;
    m.add_function(wrap_pyfunction!(rate_at_phase, m)?)?;
    m.add_function(wrap_pyfunction!(average_rate, m)?)?;
    m.add_function(wrap_pyfunction!(find_min_modes, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_link, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_chain, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
