//! Command-line front end. Every subcommand writes CSV files into `--out`
//! with provenance comment lines followed by a header whose column names
//! carry their units.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::calibration::calibrate_zenith_transmittance;
use crate::chain::{snapshot, ChainConfig};
use crate::error::{Error, Result};
use crate::monte_carlo::{simulate_link, simulate_snapshot, JitterMode, McConfig, McResult};
use crate::quantum_model::heralding_probability;
use crate::rate_model::{find_min_modes_in, rate_from_snapshot, ModeSearch, PassEvaluation};
use crate::scenario::{provenance, Scenario};

#[derive(Debug, Parser)]
#[command(name = "satqr", version, about = "Entanglement rate and fidelity of satellite repeater chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file, a name in $SATQR_SCENARIO_DIR, or a bundled name
    /// (table1, micius, upgraded).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Override a scenario value, e.g. `hardware.p_dark=0`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed for Monte-Carlo runs (defaults to run.seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-link transmission budget at `run.pass_phase`.
    LinkBudget(Common),
    /// Rate and fidelity for every `run.distances` x `run.n_mem`.
    ChainSim(Common),
    /// Smallest memory-mode count reaching each target rate at the
    /// scenario's ground distance.
    FindModes(Common),
    /// Mode search over `run.distances` x `run.target_rates`.
    Sweep(Common),
    /// Monte-Carlo check of the link and chain distributions.
    McValidate(Common),
    /// Fit the atmospheric zenith transmittance to the calibration anchors.
    Calibrate(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::LinkBudget(c)
            | Command::ChainSim(c)
            | Command::FindModes(c)
            | Command::Sweep(c)
            | Command::McValidate(c)
            | Command::Calibrate(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::LinkBudget(_) => "link-budget",
            Command::ChainSim(_) => "chain-sim",
            Command::FindModes(_) => "find-modes",
            Command::Sweep(_) => "sweep",
            Command::McValidate(_) => "mc-validate",
            Command::Calibrate(_) => "calibrate",
        }
    }
}

/// Result of a run: the files written, and an error to report after the
/// files were written (infeasible targets still produce a CSV).
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failure: Option<Error>,
}

fn num(v: f64) -> String {
    v.to_string()
}

struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    fn create(dir: &Path, file: &str, comments: &[String], header: &[&str]) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(file);
        let mut buf = BufWriter::new(File::create(&path)?);
        for c in comments {
            writeln!(buf, "# {c}")?;
        }
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        self.writer.write_record(fields.into_iter().collect::<Vec<_>>())?;
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

struct Context {
    scenario: Scenario,
    common: Common,
    seed: u64,
    command: &'static str,
}

impl Context {
    fn comments(&self, extra: &[(&'static str, String)]) -> Vec<String> {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("command", self.command.to_string());
        if !self.common.overrides.is_empty() {
            map.insert("overrides", self.common.overrides.join(","));
        }
        for (k, v) in extra {
            map.insert(k, v.clone());
        }
        provenance(&self.scenario, &map)
    }

    fn config(&self) -> &ChainConfig {
        &self.scenario.config
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let common = cli.command.common().clone();
    let scenario = Scenario::resolve(common.scenario.as_deref(), &common.overrides)?;
    let seed = common.seed.unwrap_or(scenario.run.seed);
    let ctx = Context {
        scenario,
        common,
        seed,
        command: cli.command.name(),
    };
    let work = || match &cli.command {
        Command::LinkBudget(_) => link_budget(&ctx),
        Command::ChainSim(_) => chain_sim(&ctx),
        Command::FindModes(_) => find_modes(&ctx),
        Command::Sweep(_) => sweep(&ctx),
        Command::McValidate(_) => mc_validate(&ctx),
        Command::Calibrate(_) => calibrate(&ctx),
    };
    match ctx.common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 64 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            match outcome.failure {
                None => 0,
                Some(e) => report(&e),
            }
        }
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("satqr: error[{}]: {e}", e.category());
    match e {
        Error::InfeasibleGeometry(_) | Error::InfeasibleLink(_) | Error::InfeasibleTarget(_) => 2,
        _ => 1,
    }
}

fn link_budget(ctx: &Context) -> Result<Outcome> {
    let phase = ctx.scenario.run.pass_phase;
    let snap = snapshot(ctx.config(), phase)?;
    let mut out = CsvOut::create(
        &ctx.common.out,
        "link_budget.csv",
        &ctx.comments(&[("pass_phase", num(phase))]),
        &[
            "link",
            "kind",
            "length_km",
            "elevation_deg",
            "p_diffraction",
            "p_jitter",
            "p_atmosphere",
            "p_terminal",
            "p_t",
            "beam_radius_m",
            "w_over_sigma_offset",
            "p_link",
            "alpha",
            "beta",
            "gamma",
        ],
    )?;
    for (i, (b, l)) in snap.budgets.iter().zip(&snap.links).enumerate() {
        let el = snap.geometry.link_elevation(i);
        out.row([
            i.to_string(),
            if el.is_some() { "sat-ground" } else { "sat-sat" }.to_string(),
            num(b.link_length / 1e3),
            el.map(|e| num(e.to_degrees())).unwrap_or_default(),
            num(b.p_diffraction),
            num(b.p_jitter),
            num(b.p_atmosphere),
            num(b.p_terminal),
            num(b.p_t),
            num(b.beam_waist_at_rx),
            num(b.w_over_sigma_offset),
            num(l.p_link),
            num(l.alpha),
            num(l.beta),
            num(l.gamma),
        ])?;
    }
    Ok(Outcome {
        files: vec![out.finish()?],
        failure: None,
    })
}

fn chain_sim(ctx: &Context) -> Result<Outcome> {
    let run = &ctx.scenario.run;
    let n_links = ctx.config().constellation.n_sat + 1;
    let mut header: Vec<String> = [
        "distance_km",
        "n_mem",
        "rate_hz",
        "rate_center_hz",
        "expected_pairs",
        "fidelity_min",
        "fidelity_center",
        "p_loss",
        "t_com_center_ms",
        "pass_duration_s",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..n_links).map(|i| format!("p_t_{i}")));
    header.extend(["status".to_string(), "reason".to_string()]);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = CsvOut::create(&ctx.common.out, "chain_sim.csv", &ctx.comments(&[]), &header_refs)?;
    let mut feasible = 0;
    for &d in &run.distances {
        let config = ctx.config().with_ground_distance(d);
        match PassEvaluation::new(&config) {
            Ok(pass) => {
                for &n in &run.n_mem {
                    let r = pass.rate(n)?;
                    let mut row = vec![
                        num(d / 1e3),
                        n.to_string(),
                        num(r.average.rate_hz),
                        num(r.center.rate_hz),
                        num(r.average.expected_pairs),
                        num(pass.min_fidelity()),
                        num(pass.center.fidelity()),
                        num(r.center.p_loss),
                        num(pass.center.t_com() * 1e3),
                        num(pass.duration),
                    ];
                    row.extend(pass.center.budgets.iter().map(|b| num(b.p_t)));
                    row.extend(["ok".to_string(), String::new()]);
                    out.row(row)?;
                    feasible += 1;
                }
            }
            Err(e) => {
                for &n in &run.n_mem {
                    let mut row = vec![num(d / 1e3), n.to_string()];
                    row.extend(std::iter::repeat_n(String::new(), 8 + n_links));
                    row.extend([e.category().to_string(), e.to_string()]);
                    out.row(row)?;
                }
            }
        }
    }
    let files = vec![out.finish()?];
    let failure = (feasible == 0).then(|| Error::InfeasibleGeometry("no distance gave a visible chain".into()));
    Ok(Outcome { files, failure })
}

const SEARCH_HEADER: [&str; 9] = [
    "distance_km",
    "target_rate_hz",
    "target_fidelity",
    "min_modes",
    "rate_hz",
    "rate_center_hz",
    "fidelity",
    "status",
    "reason",
];

/// One mode search per target rate at one distance.
fn search_rows(ctx: &Context, distance: f64) -> Result<(Vec<Vec<String>>, usize)> {
    let run = &ctx.scenario.run;
    let config = ctx.config().with_ground_distance(distance);
    let dist = num(distance / 1e3);
    let fid = num(run.target_fidelity);
    let pass = match PassEvaluation::new(&config) {
        Ok(p) => p,
        Err(e) => {
            let rows = run
                .target_rates
                .iter()
                .map(|&t| {
                    vec![
                        dist.clone(),
                        num(t),
                        fid.clone(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        e.category().to_string(),
                        e.to_string(),
                    ]
                })
                .collect();
            return Ok((rows, run.target_rates.len()));
        }
    };
    let mut rows = Vec::new();
    let mut failures = 0;
    for &target in &run.target_rates {
        let row = match find_min_modes_in(&pass, target, run.target_fidelity, run.n_max)? {
            ModeSearch::Found {
                n_mem,
                rate_hz,
                fidelity,
            } => vec![
                dist.clone(),
                num(target),
                fid.clone(),
                n_mem.to_string(),
                num(rate_hz),
                num(rate_from_snapshot(&pass.center, n_mem)?.rate_hz),
                num(fidelity),
                "ok".into(),
                String::new(),
            ],
            ModeSearch::Infeasible { reason, fidelity } => {
                failures += 1;
                vec![
                    dist.clone(),
                    num(target),
                    fid.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    num(fidelity),
                    "infeasible".into(),
                    reason,
                ]
            }
        };
        rows.push(row);
    }
    Ok((rows, failures))
}

fn find_modes(ctx: &Context) -> Result<Outcome> {
    let mut out = CsvOut::create(
        &ctx.common.out,
        "find_modes.csv",
        &ctx.comments(&[("n_max", ctx.scenario.run.n_max.to_string())]),
        &SEARCH_HEADER,
    )?;
    let (rows, failures) = search_rows(ctx, ctx.config().constellation.ground_distance)?;
    let reasons: Vec<String> = rows
        .iter()
        .filter(|r| r[7] != "ok")
        .map(|r| r[8].clone())
        .collect();
    for r in rows {
        out.row(r)?;
    }
    let files = vec![out.finish()?];
    let failure = (failures > 0).then(|| Error::InfeasibleTarget(reasons.join("; ")));
    Ok(Outcome { files, failure })
}

fn sweep(ctx: &Context) -> Result<Outcome> {
    let mut out = CsvOut::create(
        &ctx.common.out,
        "sweep.csv",
        &ctx.comments(&[("n_max", ctx.scenario.run.n_max.to_string())]),
        &SEARCH_HEADER,
    )?;
    for &d in &ctx.scenario.run.distances {
        for r in search_rows(ctx, d)?.0 {
            out.row(r)?;
        }
    }
    Ok(Outcome {
        files: vec![out.finish()?],
        failure: None,
    })
}

fn mc_validate(ctx: &Context) -> Result<Outcome> {
    let run = &ctx.scenario.run;
    let config = ctx.config();
    let n_mem = run.n_mem[0];
    let snap = snapshot(config, run.pass_phase)?;
    let extra = [
        ("seed", ctx.seed.to_string()),
        ("trials", run.mc_trials.to_string()),
        ("n_mem", n_mem.to_string()),
        ("pass_phase", num(run.pass_phase)),
    ];
    let comments = ctx.comments(&extra);
    let mut summary = CsvOut::create(
        &ctx.common.out,
        "mc_summary.csv",
        &comments,
        &[
            "scope",
            "link",
            "jitter_mode",
            "w_over_sigma_offset",
            "trials",
            "mean_pairs",
            "std_error",
            "analytic_mean",
            "z_score",
            "variance",
            "analytic_variance",
            "tv_distance",
            "rate_hz",
            "rate_std_error_hz",
        ],
    )?;
    let mut hist = CsvOut::create(
        &ctx.common.out,
        "mc_histogram.csv",
        &comments,
        &["scope", "link", "jitter_mode", "n", "mc_count", "mc_frequency", "analytic_p"],
    )?;
    let mut emit = |scope: &str, link: String, mode: JitterMode, w_over_sigma: f64, r: &McResult| -> Result<()> {
        let z = if r.std_error > 0.0 {
            (r.mean_pairs - r.analytic_mean) / r.std_error
        } else {
            0.0
        };
        summary.row([
            scope.to_string(),
            link.clone(),
            mode.as_str().to_string(),
            num(w_over_sigma),
            r.trials.to_string(),
            num(r.mean_pairs),
            num(r.std_error),
            num(r.analytic_mean),
            num(z),
            num(r.variance),
            num(r.analytic_variance),
            num(r.tv_distance_to_analytic),
            num(r.rate_estimate),
            num(r.rate_std_error),
        ])?;
        for (n, &c) in r.histogram.iter().enumerate() {
            hist.row([
                scope.to_string(),
                link.clone(),
                mode.as_str().to_string(),
                n.to_string(),
                c.to_string(),
                num(c as f64 / r.trials as f64),
                num(r.analytic.get(n)),
            ])?;
        }
        Ok(())
    };
    let mode = run.mc_jitter;
    for (i, b) in snap.budgets.iter().enumerate() {
        let rx = if snap.geometry.is_ground_link(i) {
            &config.ground_hw
        } else {
            &config.satellite_hw
        };
        let cfg = McConfig::new(run.mc_trials, ctx.seed, mode);
        let r = simulate_link(n_mem, b, &config.satellite_hw, rx, &cfg)?;
        emit("link", i.to_string(), mode, b.w_over_sigma_offset, &r)?;
    }
    let chain_modes = if mode == JitterMode::Off {
        vec![mode]
    } else {
        vec![JitterMode::Off, mode]
    };
    let w = snap.budgets.iter().map(|b| b.w_over_sigma_offset).fold(f64::INFINITY, f64::min);
    for chain_mode in chain_modes {
        let cfg = McConfig::new(run.mc_trials, ctx.seed, chain_mode);
        let r = simulate_snapshot(config, &snap, n_mem, &cfg)?;
        emit("chain", String::new(), chain_mode, w, &r)?;
    }
    Ok(Outcome {
        files: vec![summary.finish()?, hist.finish()?],
        failure: None,
    })
}

fn calibrate(ctx: &Context) -> Result<Outcome> {
    let cal = ctx.scenario.calibration.as_ref().ok_or_else(|| {
        Error::Config(format!("scenario `{}` has no [calibration] section", ctx.scenario.name))
    })?;
    let config = ctx.config().with_ground_distance(cal.ground_distance);
    let c = calibrate_zenith_transmittance(&config, &cal.anchors)?;
    let mut out = CsvOut::create(
        &ctx.common.out,
        "calibration.csv",
        &ctx.comments(&[
            ("calibration_distance_km", num(cal.ground_distance / 1e3)),
            ("zenith_transmittance", num(c.zenith_transmittance)),
        ]),
        &[
            "aperture_radius_m",
            "target_p_t",
            "p_t_vacuum",
            "p_t",
            "relative_error",
            "zenith_transmittance",
            "elevation_deg",
            "airmass",
            "link_length_km",
            "p_link",
        ],
    )?;
    for f in &c.fits {
        out.row([
            num(f.anchor.aperture_radius),
            num(f.anchor.target_p_t),
            num(f.p_t_vacuum),
            num(f.p_t),
            num(f.relative_error),
            num(c.zenith_transmittance),
            num(c.elevation.to_degrees()),
            num(c.airmass),
            num(c.link_length / 1e3),
            num(heralding_probability(&config.satellite_hw, &config.ground_hw, f.p_t)),
        ])?;
    }
    Ok(Outcome {
        files: vec![out.finish()?],
        failure: None,
    })
}
