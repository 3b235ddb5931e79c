//! Full chain description and its evaluation at one point of a pass.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{place_chain, ChainGeometry, ConstellationSpec};
use crate::link_budget::{link_transmission, AtmosphereSpec, LinkBudgetResult, TerminalSpec};
use crate::quantum_model::{chain_state, elementary_link, EndToEndState, HardwareParams, LinkState};
use crate::rate_model::pair_loss_probability;

pub const DEFAULT_PASS_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainConfig {
    pub constellation: ConstellationSpec,
    pub satellite_terminal: TerminalSpec,
    pub ground_terminal: TerminalSpec,
    pub atmosphere: AtmosphereSpec,
    pub satellite_hw: HardwareParams,
    pub ground_hw: HardwareParams,
    /// Hold time added to `t_com` before the swap round (s).
    pub swap_latency: f64,
    pub pass_samples: usize,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        self.constellation.validate()?;
        self.satellite_terminal.validate()?;
        self.ground_terminal.validate()?;
        self.atmosphere.validate()?;
        self.satellite_hw.validate()?;
        self.ground_hw.validate()?;
        if !(self.swap_latency >= 0.0) {
            return Err(Error::invalid("swap_latency", "must be non-negative"));
        }
        if self.pass_samples < 2 {
            return Err(Error::invalid("pass_samples", "need at least two samples"));
        }
        Ok(())
    }

    /// Hardware of every node in chain order: ground A, satellites, ground B.
    pub fn node_hardware(&self) -> Vec<HardwareParams> {
        let n = self.constellation.n_sat;
        let mut nodes = Vec::with_capacity(n + 2);
        nodes.push(self.ground_hw);
        nodes.extend(std::iter::repeat_n(self.satellite_hw, n));
        nodes.push(self.ground_hw);
        nodes
    }

    pub fn with_ground_distance(mut self, metres: f64) -> Self {
        self.constellation.ground_distance = metres;
        self
    }
}

/// Everything about the chain at one pass phase that does not depend on
/// the number of memory modes.
#[derive(Debug, Clone, Serialize)]
pub struct ChainSnapshot {
    pub geometry: ChainGeometry,
    pub budgets: Vec<LinkBudgetResult>,
    pub links: Vec<LinkState>,
    pub state: EndToEndState,
    /// Time each pair is held before the swap round (s).
    pub storage_time: f64,
    pub p_loss: f64,
}

impl ChainSnapshot {
    pub fn fidelity(&self) -> f64 {
        self.state.fidelity()
    }

    pub fn t_com(&self) -> f64 {
        self.geometry.t_com
    }

    pub fn p_links(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.p_link).collect()
    }
}

/// Link budgets for every link of a placed chain. Ground links are
/// down-links from the end satellites.
pub fn chain_budgets(config: &ChainConfig, geometry: &ChainGeometry) -> Result<Vec<LinkBudgetResult>> {
    geometry
        .link_lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| match geometry.link_elevation(i) {
            Some(el) => link_transmission(
                &config.satellite_terminal,
                &config.ground_terminal,
                &config.atmosphere,
                len,
                Some(el),
            ),
            None => link_transmission(
                &config.satellite_terminal,
                &config.satellite_terminal,
                &config.atmosphere,
                len,
                None,
            ),
        })
        .collect()
}

pub fn snapshot(config: &ChainConfig, pass_phase: f64) -> Result<ChainSnapshot> {
    config.validate()?;
    let geometry = place_chain(&config.constellation, pass_phase)?;
    evaluate_geometry(config, geometry)
}

/// Link states and loss probability for an already placed chain.
pub fn evaluate_geometry(config: &ChainConfig, geometry: ChainGeometry) -> Result<ChainSnapshot> {
    if !geometry.in_view {
        return Err(Error::InfeasibleGeometry(format!(
            "chain not in view at pass phase {}",
            geometry.pass_phase
        )));
    }
    let budgets = chain_budgets(config, &geometry)?;
    let storage_time = geometry.t_com + config.swap_latency;
    let links = budgets
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let rx = if geometry.is_ground_link(i) {
                &config.ground_hw
            } else {
                &config.satellite_hw
            };
            elementary_link(&config.satellite_hw, rx, b.p_t, storage_time)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_sat = config.constellation.n_sat;
    let state = chain_state(&links, n_sat, config.satellite_hw.p_swap)?;
    let p_loss = pair_loss_probability(&config.node_hardware(), storage_time)?;
    Ok(ChainSnapshot {
        geometry,
        budgets,
        links,
        state,
        storage_time,
        p_loss,
    })
}
