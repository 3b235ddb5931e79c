//! Elementary-link states and their composition through entanglement swaps.
//!
//! A link state is `alpha |psi><psi| + beta rho_deph + gamma |g><g|`: the
//! target Bell state, the fully dephased mixture of `|01>` and `|10>`, and a
//! garbage state with no overlap with the target.
//!
//! # Heralding model
//!
//! The heralding station runs a two-click time-bin Bell measurement on one
//! photon that travelled over the link and one emitted locally. Each arm
//! emits nothing, one photon (`p1`) or two photons in the same time bin
//! (`p2`); the bin is early or late with equal odds. Each photon reaches the
//! detectors with `eta_coll * transmission * eta_det`. Every detector/bin
//! window also fires a dark count with `p_dark`. The station counts events
//! per time bin across both detectors and heralds when each bin holds exactly
//! one event. Outcomes:
//!
//! * one single-emission photon from each arm in opposite bins: the target
//!   state, with the coherence scaled by the visibility;
//! * one detected photon from each arm in opposite bins where at least one
//!   arm had a two-photon emission (the undetected partner leaks the time
//!   bin): dephased;
//! * any herald completed by a dark count: garbage.
//!
//! Memory dephasing then decays the remaining coherence with the combined
//! rate of both atoms.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareParams {
    /// Single-photon emission probability.
    pub p1: f64,
    /// Two-photon emission probability.
    pub p2: f64,
    /// Emission into the collected mode.
    pub eta_coll: f64,
    pub visibility: f64,
    /// Detector and fibre-coupling efficiency at this node.
    pub eta_det: f64,
    /// Dark-count probability per detector per time-bin window.
    pub p_dark: f64,
    /// Probability that a swap at this node is error free.
    pub p_swap: f64,
    /// Probability of losing one atom in a swap.
    pub p_loss_swap: f64,
    /// Coherence time (s).
    pub tau_c: f64,
    /// Trap-loss time constant (s).
    pub t_loss: f64,
}

impl HardwareParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p1", self.p1),
            ("p2", self.p2),
            ("eta_coll", self.eta_coll),
            ("visibility", self.visibility),
            ("eta_det", self.eta_det),
            ("p_dark", self.p_dark),
            ("p_swap", self.p_swap),
            ("p_loss_swap", self.p_loss_swap),
        ] {
            check_probability(name, p)?;
        }
        if self.p1 + self.p2 > 1.0 {
            return Err(Error::invalid("p1 + p2", "emission probabilities exceed 1"));
        }
        // Infinite time constants switch the channel off.
        for (name, t) in [("tau_c", self.tau_c), ("t_loss", self.t_loss)] {
            if !(t > 0.0) {
                return Err(Error::invalid(name, format!("{t} must be positive")));
            }
        }
        Ok(())
    }

    /// Error-free hardware: perfect source, detectors and memories.
    pub fn ideal() -> Self {
        Self {
            p1: 1.0,
            p2: 0.0,
            eta_coll: 1.0,
            visibility: 1.0,
            eta_det: 1.0,
            p_dark: 0.0,
            p_swap: 1.0,
            p_loss_swap: 0.0,
            tau_c: f64::INFINITY,
            t_loss: f64::INFINITY,
        }
    }
}

/// Detection statistics of one arm of the heralding measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmStatistics {
    /// Single emission, photon detected.
    pub single: f64,
    /// Two-photon emission, exactly one detected.
    pub leaky: f64,
    /// Two-photon emission, both detected.
    pub double: f64,
    /// Nothing detected.
    pub none: f64,
}

impl ArmStatistics {
    pub fn new(p1: f64, p2: f64, eta: f64) -> Self {
        let single = p1 * eta;
        let leaky = 2.0 * p2 * eta * (1.0 - eta);
        let double = p2 * eta * eta;
        let none = (1.0 - p1 - p2) + p1 * (1.0 - eta) + p2 * (1.0 - eta) * (1.0 - eta);
        Self {
            single,
            leaky,
            double,
            none,
        }
    }

    /// Exactly one photon detected.
    pub fn one(&self) -> f64 {
        self.single + self.leaky
    }
}

/// Unnormalized herald probabilities split by resulting state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldBreakdown {
    pub coherent: f64,
    pub dephased: f64,
    pub garbage: f64,
}

impl HeraldBreakdown {
    pub fn total(&self) -> f64 {
        self.coherent + self.dephased + self.garbage
    }
}

/// Heralding outcome for a photon from `hw_tx` travelling with transmission
/// `p_t` to the station at `hw_rx`, interfered with a local photon.
pub fn herald_breakdown(hw_tx: &HardwareParams, hw_rx: &HardwareParams, p_t: f64) -> HeraldBreakdown {
    let travelled = ArmStatistics::new(hw_tx.p1, hw_tx.p2, hw_tx.eta_coll * p_t * hw_rx.eta_det);
    let local = ArmStatistics::new(hw_rx.p1, hw_rx.p2, hw_rx.eta_coll * hw_rx.eta_det);
    let d = hw_rx.p_dark;
    // Two detector windows per time bin.
    let quiet = (1.0 - d) * (1.0 - d);
    let one_dark = 2.0 * d * (1.0 - d);

    // One photon per arm, opposite bins (probability 1/2), no dark counts.
    let photons = 0.5 * quiet * quiet;
    let coherent = photons * travelled.single * local.single;
    let dephased = photons
        * (travelled.single * local.leaky
            + travelled.leaky * local.single
            + travelled.leaky * local.leaky);
    // A lone photon completed by a dark count in the other bin, or a dark
    // count in each bin with no photons at all.
    let garbage = (travelled.one() * local.none + travelled.none * local.one()) * quiet * one_dark
        + travelled.none * local.none * one_dark * one_dark;
    HeraldBreakdown {
        coherent,
        dephased,
        garbage,
    }
}

/// Per-photon-pair heralding probability of a link.
pub fn heralding_probability(hw_tx: &HardwareParams, hw_rx: &HardwareParams, p_t: f64) -> f64 {
    herald_breakdown(hw_tx, hw_rx, p_t).total()
}

/// Coherence time of a pair held by two atoms with independent dephasing.
pub fn pair_coherence_time(a: &HardwareParams, b: &HardwareParams) -> f64 {
    1.0 / (1.0 / a.tau_c + 1.0 / b.tau_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkState {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub p_link: f64,
    /// Time the atoms hold the pair before the swap (s).
    pub storage_time: f64,
}

impl LinkState {
    pub fn from_weights(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            p_link: 1.0,
            storage_time: 0.0,
        }
    }

    pub fn perfect() -> Self {
        Self::from_weights(1.0, 0.0, 0.0)
    }

    pub fn fidelity(&self) -> f64 {
        self.alpha + 0.5 * self.beta
    }
}

pub fn elementary_link(
    hw_tx: &HardwareParams,
    hw_rx: &HardwareParams,
    p_t: f64,
    storage_time: f64,
) -> Result<LinkState> {
    hw_tx.validate()?;
    hw_rx.validate()?;
    check_probability("p_t", p_t)?;
    if !(storage_time >= 0.0) {
        return Err(Error::invalid("storage_time", "must be non-negative"));
    }
    let h = herald_breakdown(hw_tx, hw_rx, p_t);
    let p_link = h.total();
    if !(p_link > 0.0) {
        return Err(Error::InfeasibleLink(
            "heralding probability is zero".to_string(),
        ));
    }
    let coherent = h.coherent / p_link;
    let mut alpha = hw_rx.visibility * coherent;
    let mut beta = h.dephased / p_link + (1.0 - hw_rx.visibility) * coherent;
    let gamma = h.garbage / p_link;

    let decay = (-storage_time / pair_coherence_time(hw_tx, hw_rx)).exp();
    beta += alpha * (1.0 - decay);
    alpha *= decay;

    Ok(LinkState {
        alpha,
        beta,
        gamma: gamma.max(0.0),
        p_link,
        storage_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndToEndState {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Probability that every swap so far was error free.
    pub swap_power: f64,
    pub swaps: usize,
}

impl EndToEndState {
    pub fn fidelity(&self) -> f64 {
        self.swap_power * (self.a + 0.5 * self.b) / (self.a + self.b + self.c)
    }
}

impl From<LinkState> for EndToEndState {
    fn from(l: LinkState) -> Self {
        Self {
            a: l.alpha,
            b: l.beta,
            c: l.gamma,
            swap_power: 1.0,
            swaps: 0,
        }
    }
}

/// Ideal swap of the accumulated state with the next link; the swap error
/// probability is carried separately in `swap_power`.
pub fn swap_links(left: &EndToEndState, right: &LinkState, p_swap: f64) -> EndToEndState {
    let a = left.a * right.alpha;
    let b = left.a * right.beta + left.b * right.alpha + left.b * right.beta;
    let c = 1.0 - (left.a + left.b) * (right.alpha + right.beta);
    EndToEndState {
        a,
        b,
        c: c.max(0.0),
        swap_power: left.swap_power * p_swap,
        swaps: left.swaps + 1,
    }
}

pub fn chain_state(links: &[LinkState], n_sat: usize, p_swap: f64) -> Result<EndToEndState> {
    if links.len() != n_sat + 1 {
        return Err(Error::invalid(
            "links",
            format!("expected {} links for {} satellites, got {}", n_sat + 1, n_sat, links.len()),
        ));
    }
    check_probability("p_swap", p_swap)?;
    let first = EndToEndState::from(links[0]);
    Ok(links[1..]
        .iter()
        .fold(first, |acc, l| swap_links(&acc, l, p_swap)))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table1() -> HardwareParams {
        HardwareParams {
            p1: 0.99,
            p2: 0.002,
            eta_coll: 0.49,
            visibility: 0.999,
            eta_det: 0.98,
            p_dark: 1e-6,
            p_swap: 0.995,
            p_loss_swap: 0.1,
            tau_c: 1.5,
            t_loss: 0.01,
        }
    }

    fn clean() -> HardwareParams {
        HardwareParams {
            p2: 0.0,
            visibility: 1.0,
            p_dark: 0.0,
            tau_c: 1.0,
            ..table1()
        }
    }

    fn sum(l: &LinkState) -> f64 {
        l.alpha + l.beta + l.gamma
    }

    #[test]
    fn error_free_link() {
        let hw = clean();
        let l = elementary_link(&hw, &hw, 0.33, 0.0).unwrap();
        assert_eq!((l.alpha, l.beta, l.gamma), (1.0, 0.0, 0.0));
        let expected = 0.5 * 0.99f64.powi(2) * 0.49f64.powi(2) * 0.98f64.powi(2) * 0.33;
        assert!((l.p_link - expected).abs() < 1e-15);
    }

    #[test]
    fn dephasing_over_one_coherence_time() {
        let hw = clean();
        let tau = pair_coherence_time(&hw, &hw);
        let l = elementary_link(&hw, &hw, 0.2, tau).unwrap();
        assert!((l.alpha - (-1f64).exp()).abs() < 1e-15);
        assert!((l.beta - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert_eq!(l.gamma, 0.0);
    }

    #[test]
    fn coherence_rates_add() {
        let sat = table1();
        let ground = HardwareParams { tau_c: 10.0, ..sat };
        let t = pair_coherence_time(&sat, &ground);
        assert!((1.0 / t - (1.0 / 1.5 + 1.0 / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn table1_link_is_normalized() {
        let hw = table1();
        let l = elementary_link(&hw, &hw, 0.33, 3.4e-3).unwrap();
        assert!((sum(&l) - 1.0).abs() < 1e-12);
        assert!(l.alpha > 0.98 && l.gamma < 1e-4);
    }

    #[test]
    fn zero_transmission_is_infeasible() {
        let hw = clean();
        let err = elementary_link(&hw, &hw, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleLink(_)));
    }

    #[test]
    fn dark_counts_alone_still_herald_garbage() {
        let hw = HardwareParams { p_dark: 1e-3, ..clean() };
        let l = elementary_link(&hw, &hw, 0.0, 0.0).unwrap();
        assert!((l.gamma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn garbage_absorbs() {
        let left = EndToEndState::from(LinkState::from_weights(0.0, 0.0, 1.0));
        let out = swap_links(&left, &LinkState::perfect(), 1.0);
        assert_eq!(out.c, 1.0);
        assert_eq!(out.a + out.b, 0.0);
    }

    #[test]
    fn two_mostly_good_links() {
        // Dephased on both sides stays dephased, so nothing reaches garbage.
        let l = LinkState::from_weights(0.9, 0.1, 0.0);
        let out = swap_links(&EndToEndState::from(l), &l, 1.0);
        assert!((out.a - 0.81).abs() < 1e-14);
        assert!((out.b - 0.19).abs() < 1e-14);
        assert!(out.c.abs() < 1e-14);
    }

    #[test]
    fn perfect_chain_fidelity_is_swap_ceiling() {
        let links = vec![LinkState::perfect(); 6];
        let s = chain_state(&links, 5, 0.995).unwrap();
        assert_eq!(s.fidelity(), (0..5).fold(1.0, |acc, _| acc * 0.995));
        assert!((s.fidelity() - 0.975249).abs() < 1e-6);
        assert!(chain_state(&links, 4, 0.995).is_err());
    }

    #[test]
    fn bare_link_fidelity() {
        let l = LinkState::from_weights(0.7, 0.3, 0.0);
        assert!((EndToEndState::from(l).fidelity() - 0.85).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_error_parameters() {
        let base = table1();
        let f = |hw: HardwareParams, t: f64| {
            let l = elementary_link(&hw, &hw, 0.3, t).unwrap();
            chain_state(&[l, l, l], 2, hw.p_swap).unwrap().fidelity()
        };
        let f0 = f(base, 1e-3);
        assert!(f(base, 1e-2) <= f0);
        assert!(f(HardwareParams { visibility: 0.99, ..base }, 1e-3) <= f0);
        assert!(f(HardwareParams { p2: 0.01, ..base }, 1e-3) <= f0);
        assert!(f(HardwareParams { p_dark: 1e-4, ..base }, 1e-3) <= f0);
    }
}
