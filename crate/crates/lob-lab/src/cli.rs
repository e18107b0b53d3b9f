//! Command line front end: flag parsing, key=value config files, dispatch,
//! atomic output writing, and the one-line result summaries.
//!
//! Exit codes: 0 success (degeneracy is a result, not an error), 2 validation
//! problems, 3 numerical non-convergence or a failed monotonicity scan,
//! 4 a check that ran but failed (profitable deviation, unstable bound).

use crate::error::Error;
use crate::output;
use crate::sim::{DeviationCheck, Exchange, SimConfig, ValueCheck};
use crate::solver::{solve_full, ModelParams};
use crate::sweep;
use crate::tails::{
    self, conditional_mean_gap, exponential_bound_check, gaussian_proximity, ItoProcessSpec,
    ProximityConfig, VolModel,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "lob-lab", version, about = "Limit-order-book equilibrium laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// key=value file supplying defaults; explicit flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// worker cap for path simulation (default: LOB_LAB_THREADS or 1)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailSpecKind {
    Brownian,
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VolKind {
    Constant,
    Tanh,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Construct the equilibrium path and write the per-step table
    Solve {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long = "N")]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Sweep the construction over trading frequencies
    SweepSpread {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "T")]
        horizon: Option<f64>,
        /// comma-separated list of frequencies
        #[arg(long = "N", value_delimiter = ',')]
        steps: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Bisect the largest drift with a non-degenerate construction
    CriticalAlpha {
        #[arg(long = "N")]
        steps: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-read a solve table, re-solve, and Monte-Carlo-verify optimality
    Verify {
        /// CSV produced by `solve`; parameters are read from its header
        #[arg(long)]
        path_file: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long = "N")]
        steps: Option<usize>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// deviation offsets in units of sigma sqrt(dt)
        #[arg(long, value_delimiter = ',')]
        offsets: Vec<f64>,
        /// inventories for the value-function checks
        #[arg(long = "s-list", value_delimiter = ',')]
        s_list: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Conditional-tail bound and (optionally) the mean-gap sweep
    Tails {
        #[arg(long, value_enum)]
        spec: Option<TailSpecKind>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        c1: Option<f64>,
        #[arg(long = "euler-steps")]
        euler_steps: Option<usize>,
        /// run the conditional-mean-gap sweep at these horizons
        #[arg(long = "mean-gap-dts", value_delimiter = ',')]
        mean_gap_dts: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gaussian proximity of normalized increments over shrinking horizons
    Proximity {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        vol: Option<VolKind>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "vol-amp")]
        vol_amp: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        dts: Vec<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "euler-steps")]
        euler_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Defaults loaded from a key=value file ('#' starts a comment).
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig {
            values: HashMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::validation(format!("config line {}: expected key=value", lineno + 1))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::validation(format!("config key `{key}`: bad value `{raw}`"))),
        }
    }

    fn get_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, Error> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| Error::validation(format!("config key `{key}`: bad list `{raw}`"))),
        }
    }
}

fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn resolve_required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, Error> {
    flag.or(file)
        .ok_or_else(|| Error::validation(format!("missing required parameter `{name}`")))
}

fn threads_default(cli_threads: Option<usize>, file: &FileConfig) -> Result<usize, Error> {
    if let Some(t) = cli_threads {
        return Ok(t.max(1));
    }
    if let Some(t) = file.get::<usize>("threads")? {
        return Ok(t.max(1));
    }
    match std::env::var("LOB_LAB_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .map(|t| t.max(1))
            .map_err(|_| Error::validation(format!("LOB_LAB_THREADS: bad value `{v}`"))),
        Err(_) => Ok(1),
    }
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    params: ModelParams,
    config: &'a SimConfig,
    round_trip_checked: bool,
    value_function_checks: Vec<ValueCheck>,
    deviation_checks: Vec<DeviationCheck>,
    max_gain: f64,
    max_gain_stderr: f64,
}

#[derive(Serialize)]
struct TailsReport {
    bound_check: tails::BoundCheck,
    mean_gap: Option<tails::MeanGapReport>,
}

pub fn run(cli: Cli) -> Result<(), Error> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::empty(),
    };
    let threads = threads_default(cli.threads, &file)?;
    match cli.command {
        Command::Solve {
            alpha,
            sigma,
            horizon,
            steps,
            out,
            format,
        } => {
            let params = ModelParams::new(
                resolve(alpha, file.get("alpha")?, 0.0),
                resolve(sigma, file.get("sigma")?, 1.0),
                resolve(horizon, file.get("T")?, 1.0),
                resolve_required(steps, file.get("N")?, "N")?,
            )?;
            let path = solve_full(&params)?;
            let report = sweep::path_report_from(&path);
            match resolve(format, file.get("format")?, Format::Csv) {
                Format::Csv => {
                    output::write_atomic(&out, output::path_to_csv(&report).as_bytes())?
                }
                Format::Json => output::write_json(&out, &report)?,
            }
            match path.degenerate_from {
                Some(k) => println!(
                    "degenerate from step {k} ({}); constructed steps {}..={}; wrote {}",
                    path.degeneracy.as_ref().map(summary_degeneracy).unwrap_or("?"),
                    k + 1,
                    params.steps,
                    out.display()
                ),
                None => println!(
                    "non-degenerate path: N={} spread0={:.6e} spreadT={:.6e} min|la|={:.3e}; wrote {}",
                    params.steps,
                    path.spread_at(0),
                    path.spread_at(params.steps),
                    path.min_abs_la.unwrap_or(f64::NAN),
                    out.display()
                ),
            }
            Ok(())
        }
        Command::SweepSpread {
            alpha,
            sigma,
            horizon,
            steps,
            out,
            format,
        } => {
            let n_list = if steps.is_empty() {
                file.get_list::<usize>("N")?
                    .ok_or_else(|| Error::validation("missing required parameter `N`"))?
            } else {
                steps
            };
            let table = sweep::spread_vs_frequency(
                resolve(alpha, file.get("alpha")?, 0.0),
                resolve(sigma, file.get("sigma")?, 1.0),
                resolve(horizon, file.get("T")?, 1.0),
                &n_list,
            )?;
            for (n, msg) in &table.row_errors {
                eprintln!("warning: N={n}: {msg}");
            }
            match resolve(format, file.get("format")?, Format::Csv) {
                Format::Csv => output::write_atomic(&out, output::sweep_to_csv(&table).as_bytes())?,
                Format::Json => output::write_json(&out, &table)?,
            }
            let degenerate = table
                .rows
                .iter()
                .filter(|r| r.degenerate_from.is_some())
                .count();
            println!(
                "swept {} frequencies ({} degenerate); wrote {}",
                table.rows.len(),
                degenerate,
                out.display()
            );
            Ok(())
        }
        Command::CriticalAlpha {
            steps,
            sigma,
            horizon,
            tol,
            out,
        } => {
            let result = sweep::critical_alpha(
                resolve_required(steps, file.get("N")?, "N")?,
                resolve(sigma, file.get("sigma")?, 1.0),
                resolve(horizon, file.get("T")?, 1.0),
                resolve(tol, file.get("tol")?, 1e-5),
            )?;
            output::write_json(&out, &result)?;
            println!(
                "alpha_star(N={}) = {:.8} +- {:.2e}; wrote {}",
                result.steps,
                result.alpha_star,
                result.bracket_width,
                out.display()
            );
            Ok(())
        }
        Command::Verify {
            path_file,
            alpha,
            sigma,
            horizon,
            steps,
            paths,
            seed,
            offsets,
            s_list,
            out,
        } => {
            let (params, round_trip) = match path_file {
                Some(file_path) => {
                    let text = std::fs::read_to_string(&file_path)?;
                    let parsed = output::parse_path_csv(&text)?;
                    (parsed.params, Some(parsed))
                }
                None => (
                    ModelParams::new(
                        resolve(alpha, file.get("alpha")?, 0.0),
                        resolve(sigma, file.get("sigma")?, 1.0),
                        resolve(horizon, file.get("T")?, 1.0),
                        resolve_required(steps, file.get("N")?, "N")?,
                    )?,
                    None,
                ),
            };
            let path = solve_full(&params)?;
            if let Some(parsed) = &round_trip {
                check_round_trip(parsed, &path)?;
            }
            let s_scale = params.step_increment().std();
            let offsets = if offsets.is_empty() {
                file.get_list("offsets")?.unwrap_or(vec![0.1, 0.5, 1.0])
            } else {
                offsets
            };
            let s_list = if s_list.is_empty() {
                file.get_list("s_list")?
                    .unwrap_or(vec![1.0, -1.0, 2.0, -2.0])
            } else {
                s_list
            };
            let mut cfg = SimConfig::new(
                resolve(paths, file.get("paths")?, 200_000),
                resolve(seed, file.get("seed")?, 42),
            );
            cfg.threads = threads;
            cfg.deviation_grid = offsets.iter().map(|o| o * s_scale).collect();
            let exchange = Exchange::new(&path)?;
            let value_report = exchange.verify_value_function(&s_list, &cfg)?;
            let dev_report = exchange.deviation_test(
                s_list.iter().copied().find(|&s| s != 0.0).unwrap_or(1.0),
                &cfg,
            )?;
            let report = VerifyReport {
                params,
                config: &cfg,
                round_trip_checked: round_trip.is_some(),
                value_function_checks: value_report.checks.clone(),
                deviation_checks: dev_report.checks.clone(),
                max_gain: dev_report.max_gain,
                max_gain_stderr: dev_report.max_gain_std_error,
            };
            output::write_json(&out, &report)?;
            let value_ok = value_report.checks.iter().all(|c| c.within_three_se);
            let dev_ok = dev_report.max_gain <= 3.0 * dev_report.max_gain_std_error;
            println!(
                "value checks {}; max deviation gain {:.3e} ({:.2} s.e., step {}, {:?}); wrote {}",
                if value_ok { "pass" } else { "FAIL" },
                dev_report.max_gain,
                if dev_report.max_gain_std_error > 0.0 {
                    dev_report.max_gain / dev_report.max_gain_std_error
                } else {
                    0.0
                },
                dev_report.max_gain_step,
                dev_report.max_gain_kind,
                out.display()
            );
            if !value_ok {
                return Err(Error::CheckFailed(
                    "value-function check outside 3 standard errors".into(),
                ));
            }
            if !dev_ok {
                return Err(Error::CheckFailed(format!(
                    "profitable deviation found: gain {:.3e} > 3 x {:.3e}",
                    dev_report.max_gain, dev_report.max_gain_std_error
                )));
            }
            Ok(())
        }
        Command::Tails {
            spec,
            eps,
            paths,
            seed,
            c1,
            euler_steps,
            mean_gap_dts,
            out,
        } => {
            let kind = resolve(
                spec,
                match file.values.get("spec").map(String::as_str) {
                    Some("brownian") => Some(TailSpecKind::Brownian),
                    Some("perturbed") => Some(TailSpecKind::Perturbed),
                    Some(other) => {
                        return Err(Error::validation(format!("config spec: `{other}`")))
                    }
                    None => None,
                },
                TailSpecKind::Brownian,
            );
            let mut ito = match kind {
                TailSpecKind::Brownian => ItoProcessSpec::brownian(),
                TailSpecKind::Perturbed => {
                    ItoProcessSpec::perturbed(resolve(eps, file.get("eps")?, 0.01))
                }
            };
            ito.euler_steps = resolve(euler_steps, file.get("euler_steps")?, 1000);
            let paths = resolve(paths, file.get("paths")?, 1_000_000);
            let seed = resolve(seed, file.get("seed")?, 42);
            let bound_check = exponential_bound_check(
                &ito,
                &tails::default_tail_grid(),
                paths,
                seed,
                resolve(c1, file.get("c1")?, 1.0),
            )?;
            let dts = if mean_gap_dts.is_empty() {
                file.get_list("mean_gap_dts")?.unwrap_or_default()
            } else {
                mean_gap_dts
            };
            let mean_gap = if dts.is_empty() {
                None
            } else {
                Some(conditional_mean_gap(&ito, &dts, paths, seed)?)
            };
            let pass = bound_check.pass;
            let summary = format!(
                "{}: C1 = {:.4} / {:.4} (ratio {:.3}) at c1={}; {}{}",
                bound_check.spec.kind,
                bound_check.fits.0.c1_const,
                bound_check.fits.1.c1_const,
                bound_check.stability_ratio,
                bound_check.fits.0.c1,
                if pass { "stable" } else { "UNSTABLE" },
                mean_gap
                    .as_ref()
                    .map(|m| format!("; mean-gap bound {:.4}", m.common_bound))
                    .unwrap_or_default()
            );
            output::write_json(
                &out,
                &TailsReport {
                    bound_check,
                    mean_gap,
                },
            )?;
            println!("{summary}; wrote {}", out.display());
            if !pass {
                return Err(Error::CheckFailed(
                    "fitted tail constant unstable across seeds".into(),
                ));
            }
            Ok(())
        }
        Command::Proximity {
            alpha,
            vol,
            sigma,
            vol_amp,
            dts,
            paths,
            seed,
            euler_steps,
            out,
        } => {
            let sigma = resolve(sigma, file.get("sigma")?, 1.0);
            let kind = resolve(
                vol,
                match file.values.get("vol").map(String::as_str) {
                    Some("constant") => Some(VolKind::Constant),
                    Some("tanh") => Some(VolKind::Tanh),
                    Some(other) => return Err(Error::validation(format!("config vol: `{other}`"))),
                    None => None,
                },
                VolKind::Constant,
            );
            let vol_model = match kind {
                VolKind::Constant => VolModel::Constant { sigma },
                VolKind::Tanh => VolModel::TanhOfBm {
                    base: sigma,
                    amp: resolve(vol_amp, file.get("vol_amp")?, 0.1),
                },
            };
            let dt_list = if dts.is_empty() {
                file.get_list("dts")?.unwrap_or(vec![1e-1, 1e-2, 1e-3])
            } else {
                dts
            };
            let cfg = ProximityConfig {
                alpha: resolve(alpha, file.get("alpha")?, 0.0),
                vol: vol_model,
                dt_list,
                paths: resolve(paths, file.get("paths")?, 1_000_000),
                seed: resolve(seed, file.get("seed")?, 42),
                euler_steps: resolve(euler_steps, file.get("euler_steps")?, 200),
            };
            let report = gaussian_proximity(&cfg)?;
            let floor = 2.0 * report.dkw_bound;
            let pass = match kind {
                VolKind::Constant => report.rows.iter().all(|r| r.weighted_tail_gap <= floor),
                VolKind::Tanh => {
                    let g: Vec<f64> = report.rows.iter().map(|r| r.weighted_tail_gap).collect();
                    let m: Vec<f64> = report.rows.iter().map(|r| r.truncated_mean_gap).collect();
                    g.windows(2).all(|w| w[1] <= w[0] + floor)
                        && m.windows(2).all(|w| w[1] <= w[0] + floor)
                        && (g.len() < 2 || g[g.len() - 1] <= g[0])
                }
            };
            output::write_json(&out, &report)?;
            println!(
                "proximity gaps {:?} (dkw {:.2e}); {}; wrote {}",
                report
                    .rows
                    .iter()
                    .map(|r| format!("{:.2e}", r.weighted_tail_gap))
                    .collect::<Vec<_>>(),
                report.dkw_bound,
                if pass { "pass" } else { "FAIL" },
                out.display()
            );
            if !pass {
                return Err(Error::CheckFailed(
                    "proximity metrics did not settle to the noise floor".into(),
                ));
            }
            Ok(())
        }
    }
}

fn summary_degeneracy(d: &crate::solver::Degeneracy) -> &'static str {
    match d {
        crate::solver::Degeneracy::AskSideWithdraws { .. } => "ask side withdraws",
        crate::solver::Degeneracy::BidSideWithdraws { .. } => "bid side withdraws",
        crate::solver::Degeneracy::MarketOrders(_) => "market-order condition violated",
    }
}

/// Every value in the file must match the re-solved path to the CSV print
/// precision (12 significant digits).
fn check_round_trip(
    parsed: &output::ParsedPathCsv,
    path: &crate::solver::EquilibriumPath,
) -> Result<(), Error> {
    if parsed.degenerate_from != path.degenerate_from {
        return Err(Error::validation(format!(
            "path file degeneracy {:?} does not match re-solve {:?}",
            parsed.degenerate_from, path.degenerate_from
        )));
    }
    for (n, row) in parsed.rows.iter().enumerate() {
        let pairs = [
            (row.1, path.pa[n]),
            (row.2, path.pb[n]),
            (row.3, path.la[n]),
            (row.4, path.lb[n]),
        ];
        for (got, want) in pairs {
            let ok = match got {
                None => !want.is_finite(),
                Some(v) => want.is_finite() && (v - want).abs() <= 1e-11 * (1.0 + want.abs()),
            };
            if !ok {
                return Err(Error::validation(format!(
                    "path file row {n} does not reproduce the solve (file {got:?} vs {want})"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parses_and_types() {
        let cfg = FileConfig::parse("alpha=0.1\nN = 100  # frequency\n\nsigma=2.0\n").unwrap();
        assert_eq!(cfg.get::<f64>("alpha").unwrap(), Some(0.1));
        assert_eq!(cfg.get::<usize>("N").unwrap(), Some(100));
        assert_eq!(cfg.get::<f64>("missing").unwrap(), None);
        assert!(cfg.get::<usize>("sigma").is_err());
        assert!(FileConfig::parse("just a line").is_err());
    }

    #[test]
    fn flags_override_config() {
        assert_eq!(resolve(Some(1.0), Some(2.0), 3.0), 1.0);
        assert_eq!(resolve(None, Some(2.0), 3.0), 2.0);
        assert_eq!(resolve::<f64>(None, None, 3.0), 3.0);
    }
}
