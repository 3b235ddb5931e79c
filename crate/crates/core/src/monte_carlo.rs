//! Sampling oracle for the binomial link model and the chain rate.
//!
//! Every random draw is addressed by `(seed, trial, stream, position)`: the
//! ChaCha key is built from the seed and trial index, the stream selects the
//! link and the purpose of the draws, and photons consume the stream in
//! order. Results therefore do not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{snapshot, ChainConfig, ChainSnapshot};
use crate::error::{Error, Result};
use crate::geometry::SPEED_OF_LIGHT;
use crate::link_budget::{jitter_average, LinkBudgetResult};
use crate::numerics::kahan_sum;
use crate::quantum_model::{heralding_probability, HardwareParams};
use crate::rate_model::{link_distribution, rate_from_snapshot, PairDistribution};

const CHUNK: u64 = 2048;
const TABLE_POINTS: usize = 4097;
/// Offsets beyond this many standard deviations are clamped to the table end.
const TABLE_SIGMAS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterMode {
    /// One pointing offset per link per attempt, shared by all photons.
    CorrelatedPerAttempt,
    /// A fresh offset for every photon.
    IndependentPerPhoton,
    /// Every photon sees the jitter-averaged transmission.
    Off,
}

impl JitterMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            JitterMode::CorrelatedPerAttempt => "correlated-per-attempt",
            JitterMode::IndependentPerPhoton => "independent-per-photon",
            JitterMode::Off => "off",
        }
    }
}

impl std::str::FromStr for JitterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlated-per-attempt" | "correlated" => Ok(JitterMode::CorrelatedPerAttempt),
            "independent-per-photon" | "independent" => Ok(JitterMode::IndependentPerPhoton),
            "off" => Ok(JitterMode::Off),
            other => Err(Error::invalid(
                "jitter_mode",
                format!("unknown mode `{other}` (correlated-per-attempt, independent-per-photon, off)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    pub jitter_mode: JitterMode,
    pub record_histogram: bool,
}

impl McConfig {
    pub fn new(trials: u64, seed: u64, jitter_mode: JitterMode) -> Self {
        Self {
            trials,
            seed,
            jitter_mode,
            record_histogram: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::invalid("trials", "need at least one trial"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    /// Trials per pair count; empty unless requested.
    pub histogram: Vec<u64>,
    pub trials: u64,
    pub mean_pairs: f64,
    pub variance: f64,
    /// Standard error of `mean_pairs`.
    pub std_error: f64,
    /// s
    pub t_com: f64,
    pub rate_estimate: f64,
    pub rate_std_error: f64,
    pub analytic: PairDistribution,
    pub analytic_mean: f64,
    pub analytic_variance: f64,
    pub tv_distance_to_analytic: f64,
}

/// Total-variation distance between an empirical histogram and a pmf.
pub fn tv_distance(histogram: &[u64], pmf: &[f64]) -> f64 {
    let total: u64 = histogram.iter().sum();
    let n = histogram.len().max(pmf.len());
    let diff = (0..n).map(|k| {
        let h = histogram.get(k).copied().unwrap_or(0) as f64 / total as f64;
        (h - pmf.get(k).copied().unwrap_or(0.0)).abs()
    });
    (0.5 * kahan_sum(diff)).min(1.0)
}

fn trial_rng(seed: u64, trial: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Heralding probability as a function of the beam-centre offset, tabulated
/// on a uniform grid out to `TABLE_SIGMAS` standard deviations.
#[derive(Debug, Clone)]
struct OffsetTable {
    step: f64,
    values: Vec<f64>,
    sigma: f64,
}

impl OffsetTable {
    fn new(budget: &LinkBudgetResult, tx: &HardwareParams, rx: &HardwareParams) -> Self {
        let sigma = budget.sigma_offset;
        let step = TABLE_SIGMAS * sigma / (TABLE_POINTS - 1) as f64;
        let values = (0..TABLE_POINTS)
            .into_par_iter()
            .map(|k| heralding_probability(tx, rx, budget.transmission_at_offset(k as f64 * step)))
            .collect();
        Self { step, values, sigma }
    }

    fn at(&self, offset: f64) -> f64 {
        let x = offset / self.step;
        let k = x.floor() as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let f = x - k as f64;
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        self.at(self.sigma * x.hypot(y))
    }
}

/// Per-photon heralding model of one link under a jitter mode.
#[derive(Debug, Clone)]
enum LinkSampler {
    Fixed(f64),
    Correlated(OffsetTable),
    Independent(OffsetTable),
}

impl LinkSampler {
    fn new(
        budget: &LinkBudgetResult,
        tx: &HardwareParams,
        rx: &HardwareParams,
        mode: JitterMode,
    ) -> Self {
        let fixed = || LinkSampler::Fixed(heralding_probability(tx, rx, budget.p_t));
        if budget.sigma_offset <= 0.0 {
            return fixed();
        }
        match mode {
            JitterMode::Off => fixed(),
            JitterMode::CorrelatedPerAttempt => LinkSampler::Correlated(OffsetTable::new(budget, tx, rx)),
            JitterMode::IndependentPerPhoton => LinkSampler::Independent(OffsetTable::new(budget, tx, rx)),
        }
    }

    /// Mean per-photon heralding probability over the jitter distribution.
    fn mean_probability(&self, budget: &LinkBudgetResult, tx: &HardwareParams, rx: &HardwareParams) -> f64 {
        match self {
            LinkSampler::Fixed(p) => *p,
            _ => jitter_average(
                |d| heralding_probability(tx, rx, budget.transmission_at_offset(d)),
                budget.sigma_offset,
            ),
        }
    }

    /// Successes among `n_mem` photons. Photon draws use stream
    /// `2 * link`, the shared jitter draw uses stream `2 * link + 1`.
    fn count(&self, n_mem: usize, seed: u64, trial: u64, link: u64) -> usize {
        let mut photons = trial_rng(seed, trial, 2 * link);
        match self {
            LinkSampler::Fixed(p) => bernoulli_count(&mut photons, n_mem, *p),
            LinkSampler::Correlated(table) => {
                let mut jitter = trial_rng(seed, trial, 2 * link + 1);
                let p = table.draw(&mut jitter);
                bernoulli_count(&mut photons, n_mem, p)
            }
            LinkSampler::Independent(table) => (0..n_mem)
                .filter(|_| {
                    let p = table.draw(&mut photons);
                    photons.random::<f64>() < p
                })
                .count(),
        }
    }
}

fn bernoulli_count(rng: &mut ChaCha8Rng, n: usize, p: f64) -> usize {
    (0..n).filter(|_| rng.random::<f64>() < p).count()
}

/// Run `trials` independent trials in fixed-size chunks and merge the
/// histograms by addition.
fn run_trials<F>(trials: u64, n_mem: usize, trial: F) -> Vec<u64>
where
    F: Fn(u64) -> usize + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut hist = vec![0u64; n_mem + 1];
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                hist[trial(t)] += 1;
            }
            hist
        })
        .reduce(
            || vec![0u64; n_mem + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

fn summarize(hist: Vec<u64>, cfg: &McConfig, t_com: f64, analytic: PairDistribution) -> McResult {
    let trials = cfg.trials as f64;
    let mean = kahan_sum(hist.iter().enumerate().map(|(n, &c)| n as f64 * c as f64)) / trials;
    let second = kahan_sum(hist.iter().enumerate().map(|(n, &c)| (n * n) as f64 * c as f64)) / trials;
    let variance = if cfg.trials > 1 {
        (second - mean * mean).max(0.0) * trials / (trials - 1.0)
    } else {
        0.0
    };
    let std_error = (variance / trials).sqrt();
    let analytic_mean = analytic.mean();
    let analytic_variance = kahan_sum(
        analytic
            .probabilities()
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - analytic_mean).powi(2) * p),
    );
    let tv = tv_distance(&hist, analytic.probabilities());
    McResult {
        histogram: if cfg.record_histogram { hist } else { Vec::new() },
        trials: cfg.trials,
        mean_pairs: mean,
        variance,
        std_error,
        t_com,
        rate_estimate: mean / t_com,
        rate_std_error: std_error / t_com,
        analytic,
        analytic_mean,
        analytic_variance,
        tv_distance_to_analytic: tv,
    }
}

/// Pair counts of one elementary link. The analytic reference is the
/// binomial with the jitter-averaged heralding probability.
pub fn simulate_link(
    n_mem: usize,
    budget: &LinkBudgetResult,
    hw_tx: &HardwareParams,
    hw_rx: &HardwareParams,
    cfg: &McConfig,
) -> Result<McResult> {
    cfg.validate()?;
    hw_tx.validate()?;
    hw_rx.validate()?;
    if n_mem < 1 {
        return Err(Error::invalid("n_mem", "need at least one memory mode"));
    }
    let sampler = LinkSampler::new(budget, hw_tx, hw_rx, cfg.jitter_mode);
    let p_mean = sampler.mean_probability(budget, hw_tx, hw_rx).clamp(0.0, 1.0);
    let analytic = link_distribution(n_mem, p_mean)?;
    let hist = run_trials(cfg.trials, n_mem, |t| sampler.count(n_mem, cfg.seed, t, 0));
    let t_com = 2.0 * budget.link_length / SPEED_OF_LIGHT;
    Ok(summarize(hist, cfg, t_com, analytic))
}

/// Pairs delivered end to end by the whole chain at one pass phase.
pub fn simulate_chain(config: &ChainConfig, pass_phase: f64, n_mem: usize, cfg: &McConfig) -> Result<McResult> {
    simulate_snapshot(config, &snapshot(config, pass_phase)?, n_mem, cfg)
}

pub fn simulate_snapshot(
    config: &ChainConfig,
    snap: &ChainSnapshot,
    n_mem: usize,
    cfg: &McConfig,
) -> Result<McResult> {
    cfg.validate()?;
    if n_mem < 1 {
        return Err(Error::invalid("n_mem", "need at least one memory mode"));
    }
    let samplers: Vec<LinkSampler> = snap
        .budgets
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let rx = if snap.geometry.is_ground_link(i) {
                &config.ground_hw
            } else {
                &config.satellite_hw
            };
            LinkSampler::new(b, &config.satellite_hw, rx, cfg.jitter_mode)
        })
        .collect();
    let n_links = samplers.len() as u64;

    // Survival of each atom holding a delivered pair: one per ground
    // station, two per satellite.
    let storage = snap.storage_time;
    let mut atoms = Vec::new();
    for (k, hw) in config.node_hardware().iter().enumerate() {
        let trap = (-storage / hw.t_loss).exp();
        if k == 0 || k == config.constellation.n_sat + 1 {
            atoms.push(trap);
        } else {
            atoms.push((1.0 - hw.p_loss_swap) * trap);
            atoms.push((1.0 - hw.p_loss_swap) * trap);
        }
    }

    let hist = run_trials(cfg.trials, n_mem, |t| {
        let pairs = samplers
            .iter()
            .enumerate()
            .map(|(i, s)| s.count(n_mem, cfg.seed, t, i as u64))
            .min()
            .unwrap_or(0);
        let mut survival = trial_rng(cfg.seed, t, 2 * n_links);
        (0..pairs)
            .filter(|_| atoms.iter().all(|&p| survival.random::<f64>() < p))
            .count()
    });
    let analytic = if cfg.jitter_mode == JitterMode::Off {
        rate_from_snapshot(snap, n_mem)?.pf
    } else {
        let mut mean_snap = snap.clone();
        for ((link, s), (i, b)) in mean_snap.links.iter_mut().zip(&samplers).zip(snap.budgets.iter().enumerate()) {
            let rx = if snap.geometry.is_ground_link(i) {
                &config.ground_hw
            } else {
                &config.satellite_hw
            };
            link.p_link = s.mean_probability(b, &config.satellite_hw, rx);
        }
        rate_from_snapshot(&mean_snap, n_mem)?.pf
    };
    Ok(summarize(hist, cfg, snap.t_com(), analytic))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_of_identical_is_zero() {
        assert_eq!(tv_distance(&[1, 2, 1], &[0.25, 0.5, 0.25]), 0.0);
        assert!((tv_distance(&[4, 0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn streams_are_distinct() {
        let a: u64 = trial_rng(1, 2, 0).random();
        let b: u64 = trial_rng(1, 2, 1).random();
        let c: u64 = trial_rng(1, 3, 0).random();
        let a2: u64 = trial_rng(1, 2, 0).random();
        assert_eq!(a, a2);
        assert!(a != b && a != c);
    }

    #[test]
    fn jitter_mode_names_round_trip() {
        for m in [JitterMode::CorrelatedPerAttempt, JitterMode::IndependentPerPhoton, JitterMode::Off] {
            assert_eq!(m.as_str().parse::<JitterMode>().unwrap(), m);
        }
    }
}
