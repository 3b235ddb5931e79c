//! Pair-count distributions, loss thinning, pass-averaged rates and the
//! memory-mode search.

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{evaluate_geometry, snapshot, ChainConfig, ChainSnapshot};
use crate::error::{check_probability, Error, Result};
use crate::geometry::pass_window;
use crate::numerics::{binomial_pmf, binomial_window, kahan_sum, KahanSum};
use crate::quantum_model::HardwareParams;

/// Thinning kernels drop binomial masses below this fraction of the mode.
const THINNING_REL_CUT: f64 = 1e-20;
/// Source masses below this are skipped during thinning.
const THINNING_MASS_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDistribution {
    probabilities: Vec<f64>,
}

impl PairDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::invalid("probabilities", "need at least one entry"));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("probabilities", "masses must be finite and non-negative"));
        }
        let total = kahan_sum(probabilities.iter().copied());
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("probabilities", format!("masses sum to {total}")));
        }
        Ok(Self { probabilities })
    }

    pub fn point_mass(n_mem: usize, at: usize) -> Self {
        let mut probabilities = vec![0.0; n_mem + 1];
        probabilities[at.min(n_mem)] = 1.0;
        Self { probabilities }
    }

    pub fn n_mem(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probabilities.get(n).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        kahan_sum(self.probabilities.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        kahan_sum(self.probabilities.iter().enumerate().map(|(n, p)| n as f64 * p))
    }

    /// `P(X > n)` for `n = 0..=n_mem`.
    pub fn tails_above(&self) -> Vec<f64> {
        let len = self.probabilities.len();
        let mut out = vec![0.0; len];
        let mut acc = KahanSum::default();
        for n in (0..len).rev() {
            out[n] = acc.value();
            acc.add(self.probabilities[n]);
        }
        out
    }

    /// `P(X >= n)` for `n = 0..=n_mem`.
    pub fn tails_at_least(&self) -> Vec<f64> {
        let above = self.tails_above();
        above
            .iter()
            .zip(&self.probabilities)
            .map(|(a, p)| (a + p).min(1.0))
            .collect()
    }
}

/// Number of heralded pairs among `n_mem` independent attempts.
pub fn link_distribution(n_mem: usize, p_link: f64) -> Result<PairDistribution> {
    if n_mem < 1 {
        return Err(Error::invalid("n_mem", "need at least one memory mode"));
    }
    check_probability("p_link", p_link)?;
    Ok(PairDistribution {
        probabilities: binomial_pmf(n_mem, p_link),
    })
}

fn binomial_coefficient(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Minimum pair count over `n_sat - 1` satellite links and two ground links,
/// written as the tie-counting sum over links holding exactly `n` pairs.
pub fn end_to_end_distribution(
    sat: &PairDistribution,
    ground: &PairDistribution,
    n_sat: usize,
) -> Result<PairDistribution> {
    if n_sat < 1 {
        return Err(Error::invalid("n_sat", "need at least one satellite"));
    }
    if sat.n_mem() != ground.n_mem() {
        return Err(Error::invalid("n_mem", "link distributions differ in size"));
    }
    let s_above = sat.tails_above();
    let g_above = ground.tails_above();
    let m = n_sat - 1;
    let probabilities = (0..=sat.n_mem())
        .map(|n| {
            let (ps, pg) = (sat.get(n), ground.get(n));
            let (ss, gg) = (s_above[n], g_above[n]);
            let sat_factor = kahan_sum(
                (0..=m).map(|i| binomial_coefficient(m, i) * ps.powi(i as i32) * ss.powi((m - i) as i32)),
            );
            let ground_factor =
                kahan_sum((0..=2).map(|j| binomial_coefficient(2, j) * pg.powi(j as i32) * gg.powi(2 - j as i32)));
            (sat_factor * ground_factor - ss.powi(m as i32) * gg * gg).max(0.0)
        })
        .collect();
    Ok(PairDistribution { probabilities })
}

/// Distribution of the minimum of independent pair counts.
pub fn min_distribution(links: &[PairDistribution]) -> Result<PairDistribution> {
    let Some(first) = links.first() else {
        return Err(Error::invalid("links", "need at least one link"));
    };
    let n_mem = first.n_mem();
    if links.iter().any(|l| l.n_mem() != n_mem) {
        return Err(Error::invalid("n_mem", "link distributions differ in size"));
    }
    // P(min >= n) as a product of per-link tails.
    let mut survival = vec![1.0; n_mem + 2];
    for link in links {
        for (s, t) in survival.iter_mut().zip(link.tails_at_least()) {
            *s *= t;
        }
    }
    survival[n_mem + 1] = 0.0;
    let probabilities = (0..=n_mem)
        .map(|n| (survival[n] - survival[n + 1]).max(0.0))
        .collect();
    Ok(PairDistribution { probabilities })
}

/// Keep each pair independently with probability `1 - p_loss`.
pub fn loss_thinning(dist: &PairDistribution, p_loss: f64) -> Result<PairDistribution> {
    check_probability("p_loss", p_loss)?;
    let n_mem = dist.n_mem();
    if p_loss == 0.0 {
        return Ok(dist.clone());
    }
    if p_loss == 1.0 {
        return Ok(PairDistribution::point_mass(n_mem, 0));
    }
    let keep = 1.0 - p_loss;
    let mut acc = vec![KahanSum::default(); n_mem + 1];
    for (i, &p) in dist.probabilities.iter().enumerate() {
        if p < THINNING_MASS_FLOOR {
            continue;
        }
        let (first, kernel) = binomial_window(i, keep, THINNING_REL_CUT);
        for (k, w) in kernel.iter().enumerate() {
            acc[first + k].add(p * w);
        }
    }
    let mut probabilities: Vec<f64> = acc.iter().map(KahanSum::value).collect();
    let total = kahan_sum(probabilities.iter().copied());
    for v in &mut probabilities {
        *v /= total;
    }
    Ok(PairDistribution { probabilities })
}

/// Probability that a delivered pair is lost because one of the atoms
/// holding it is gone by the swap round.
///
/// `nodes` lists the chain in order: ground A, satellites, ground B. The
/// pair runs through one atom at each ground station and two atoms at each
/// satellite. A satellite atom survives its swap with `1 - p_loss_swap` and
/// stays trapped for `storage_time` with `exp(-t / t_loss)`; ground atoms
/// only see the trap loss.
pub fn pair_loss_probability(nodes: &[HardwareParams], storage_time: f64) -> Result<f64> {
    if nodes.len() < 3 {
        return Err(Error::invalid("nodes", "need two ground stations and a satellite"));
    }
    if !(storage_time >= 0.0) {
        return Err(Error::invalid("storage_time", "must be non-negative"));
    }
    let trap = |hw: &HardwareParams| (-storage_time / hw.t_loss).exp();
    let last = nodes.len() - 1;
    let mut survival = 1.0;
    for (k, hw) in nodes.iter().enumerate() {
        hw.validate()?;
        let atom = if k == 0 || k == last {
            trap(hw)
        } else {
            (1.0 - hw.p_loss_swap) * trap(hw)
        };
        let atoms = if k == 0 || k == last { 1 } else { 2 };
        survival *= atom.powi(atoms);
    }
    Ok(1.0 - survival)
}

#[derive(Debug, Clone, Serialize)]
pub struct RateResult {
    pub pf: PairDistribution,
    pub expected_pairs: f64,
    pub rate_hz: f64,
    /// Attempt period (s). For pass averages this is the period that makes
    /// `rate_hz = expected_pairs / t_com` hold for the averaged values.
    pub t_com: f64,
    pub p_loss: f64,
}

/// Pair-count distribution delivered between the ground stations before
/// loss thinning. Uses the homogeneous closed form when both ground links
/// and all satellite links agree, and the direct minimum otherwise.
pub fn chain_distribution(p_links: &[f64], n_mem: usize) -> Result<PairDistribution> {
    if p_links.len() < 2 {
        return Err(Error::invalid("p_links", "need at least two links"));
    }
    let last = p_links.len() - 1;
    let inner = &p_links[1..last];
    let homogeneous = p_links[0] == p_links[last] && inner.windows(2).all(|w| w[0] == w[1]);
    if homogeneous {
        let ground = link_distribution(n_mem, p_links[0])?;
        let sat = match inner.first() {
            Some(&p) => link_distribution(n_mem, p)?,
            None => PairDistribution::point_mass(n_mem, n_mem),
        };
        end_to_end_distribution(&sat, &ground, last)
    } else {
        let links = p_links
            .iter()
            .map(|&p| link_distribution(n_mem, p))
            .collect::<Result<Vec<_>>>()?;
        min_distribution(&links)
    }
}

pub fn rate_from_snapshot(snap: &ChainSnapshot, n_mem: usize) -> Result<RateResult> {
    let raw = chain_distribution(&snap.p_links(), n_mem)?;
    let pf = loss_thinning(&raw, snap.p_loss)?;
    let expected_pairs = pf.mean();
    Ok(RateResult {
        expected_pairs,
        rate_hz: expected_pairs / snap.t_com(),
        t_com: snap.t_com(),
        p_loss: snap.p_loss,
        pf,
    })
}

pub fn rate_at_phase(config: &ChainConfig, pass_phase: f64, n_mem: usize) -> Result<RateResult> {
    rate_from_snapshot(&snapshot(config, pass_phase)?, n_mem)
}

/// Per-phase summary within a pass average.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhaseRate {
    pub pass_phase: f64,
    pub rate_hz: f64,
    pub expected_pairs: f64,
    pub t_com: f64,
    pub p_loss: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PassRate {
    pub n_mem: usize,
    pub average: RateResult,
    pub center: RateResult,
    pub phases: Vec<PhaseRate>,
}

/// Chain snapshots over one pass. Everything here is independent of the
/// number of memory modes, so it is built once per configuration.
#[derive(Debug, Clone)]
pub struct PassEvaluation {
    pub phase_range: (f64, f64),
    /// s
    pub duration: f64,
    pub snapshots: Vec<ChainSnapshot>,
    pub center: ChainSnapshot,
}

impl PassEvaluation {
    pub fn new(config: &ChainConfig) -> Result<Self> {
        config.validate()?;
        let window = pass_window(&config.constellation, config.pass_samples)?;
        let Some(phase_range) = window.phase_range else {
            return Err(Error::InfeasibleGeometry(format!(
                "no pass phase keeps both ground stations above {:.1} deg elevation",
                config.constellation.min_elevation.to_degrees()
            )));
        };
        let snapshots = window
            .samples
            .into_par_iter()
            .map(|g| evaluate_geometry(config, g))
            .collect::<Result<Vec<_>>>()?;
        let center = snapshot(config, 0.5 * (phase_range.0 + phase_range.1))?;
        Ok(Self {
            phase_range,
            duration: window.duration,
            snapshots,
            center,
        })
    }

    /// Worst fidelity over the pass.
    pub fn min_fidelity(&self) -> f64 {
        self.snapshots
            .iter()
            .map(ChainSnapshot::fidelity)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_fidelity(&self) -> f64 {
        kahan_sum(self.snapshots.iter().map(ChainSnapshot::fidelity)) / self.snapshots.len() as f64
    }

    pub fn rate(&self, n_mem: usize) -> Result<PassRate> {
        let per_phase = self
            .snapshots
            .par_iter()
            .map(|s| rate_from_snapshot(s, n_mem))
            .collect::<Result<Vec<_>>>()?;
        let k = per_phase.len() as f64;
        let mut pf = vec![KahanSum::default(); n_mem + 1];
        for r in &per_phase {
            for (acc, p) in pf.iter_mut().zip(r.pf.probabilities()) {
                acc.add(p / k);
            }
        }
        let pf = PairDistribution {
            probabilities: pf.iter().map(KahanSum::value).collect(),
        };
        let rate_hz = kahan_sum(per_phase.iter().map(|r| r.rate_hz)) / k;
        let expected_pairs = kahan_sum(per_phase.iter().map(|r| r.expected_pairs)) / k;
        let p_loss = kahan_sum(per_phase.iter().map(|r| r.p_loss)) / k;
        let t_com = if rate_hz > 0.0 {
            expected_pairs / rate_hz
        } else {
            kahan_sum(per_phase.iter().map(|r| r.t_com)) / k
        };
        let phases = per_phase
            .iter()
            .zip(&self.snapshots)
            .map(|(r, s)| PhaseRate {
                pass_phase: s.geometry.pass_phase,
                rate_hz: r.rate_hz,
                expected_pairs: r.expected_pairs,
                t_com: r.t_com,
                p_loss: r.p_loss,
                fidelity: s.fidelity(),
            })
            .collect();
        Ok(PassRate {
            n_mem,
            average: RateResult {
                pf,
                expected_pairs,
                rate_hz,
                t_com,
                p_loss,
            },
            center: rate_from_snapshot(&self.center, n_mem)?,
            phases,
        })
    }
}

/// Pass-averaged rate with `n_mem` modes per link.
pub fn average_rate(config: &ChainConfig, n_mem: usize) -> Result<RateResult> {
    Ok(PassEvaluation::new(config)?.rate(n_mem)?.average)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ModeSearch {
    Found {
        n_mem: usize,
        rate_hz: f64,
        fidelity: f64,
    },
    Infeasible {
        reason: String,
        fidelity: f64,
    },
}

impl ModeSearch {
    pub fn n_mem(&self) -> Option<usize> {
        match self {
            ModeSearch::Found { n_mem, .. } => Some(*n_mem),
            ModeSearch::Infeasible { .. } => None,
        }
    }
}

/// Smallest `n_mem <= n_max` whose pass-averaged rate reaches
/// `target_rate` with worst-case pass fidelity at least `target_fidelity`.
pub fn find_min_modes(
    config: &ChainConfig,
    target_rate: f64,
    target_fidelity: f64,
    n_max: usize,
) -> Result<ModeSearch> {
    find_min_modes_in(&PassEvaluation::new(config)?, target_rate, target_fidelity, n_max)
}

pub fn find_min_modes_in(
    pass: &PassEvaluation,
    target_rate: f64,
    target_fidelity: f64,
    n_max: usize,
) -> Result<ModeSearch> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::invalid("target_rate", "must be positive"));
    }
    if !(target_fidelity > 0.0 && target_fidelity < 1.0) {
        return Err(Error::invalid("target_fidelity", "must lie in (0, 1)"));
    }
    if n_max < 1 {
        return Err(Error::invalid("n_max", "need at least one memory mode"));
    }
    let fidelity = pass.min_fidelity();
    if fidelity < target_fidelity {
        return Ok(ModeSearch::Infeasible {
            reason: format!("fidelity {fidelity:.6} below target {target_fidelity}"),
            fidelity,
        });
    }
    let rate = |n: usize| pass.rate(n).map(|r| r.average.rate_hz);

    let mut lo = 0; // largest n known to miss the target
    let mut hi = 1;
    let mut hi_rate = rate(hi)?;
    while hi_rate < target_rate {
        if hi == n_max {
            return Ok(ModeSearch::Infeasible {
                reason: format!("rate {hi_rate:.4} Hz at n_max = {n_max} below target {target_rate} Hz"),
                fidelity,
            });
        }
        lo = hi;
        hi = (hi * 2).min(n_max);
        hi_rate = rate(hi)?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let r = rate(mid)?;
        if r >= target_rate {
            hi = mid;
            hi_rate = r;
        } else {
            lo = mid;
        }
    }
    Ok(ModeSearch::Found {
        n_mem: hi,
        rate_hz: hi_rate,
        fidelity,
    })
}
