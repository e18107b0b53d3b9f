//! Monte Carlo checks of the stochastic-analysis backbone: exponential
//! bounds on conditional tails of Itô increments, the conditional-mean gap
//! near the time boundary, and Gaussian proximity of normalized increments.

use crate::error::Error;
use crate::gauss::{std_normal_pdf, std_normal_tail};
use crate::rng::PathStream;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Drift/diffusion pair for the unit-horizon process
/// X_t = int mu dt + int sigma dB, with |mu| <= sqrt(eps) and |sigma| in [c, C].
pub enum Coefficients {
    /// mu = 0, sigma = 1.
    Brownian,
    /// mu = sqrt(eps) sin(t x), sigma = 1 + 0.1 tanh(x) clipped to [0.9, 1.1].
    PerturbedSine { eps: f64 },
    Custom {
        drift: Box<dyn Fn(f64, f64) -> f64 + Sync>,
        diffusion: Box<dyn Fn(f64, f64) -> f64 + Sync>,
    },
}

pub struct ItoProcessSpec {
    pub coefficients: Coefficients,
    pub c: f64,
    pub big_c: f64,
    pub eps: f64,
    pub euler_steps: usize,
}

impl ItoProcessSpec {
    pub fn brownian() -> Self {
        ItoProcessSpec {
            coefficients: Coefficients::Brownian,
            c: 1.0,
            big_c: 1.0,
            eps: 0.0,
            euler_steps: 1000,
        }
    }

    pub fn perturbed(eps: f64) -> Self {
        ItoProcessSpec {
            coefficients: Coefficients::PerturbedSine { eps },
            c: 0.9,
            big_c: 1.1,
            eps,
            euler_steps: 1000,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.coefficients {
            Coefficients::Brownian => "brownian",
            Coefficients::PerturbedSine { .. } => "perturbed",
            Coefficients::Custom { .. } => "custom",
        }
    }

    fn validate(&self) -> Result<(), Error> {
        if !(self.c > 0.0 && self.big_c >= self.c) {
            return Err(Error::validation("need 0 < c <= C"));
        }
        if self.eps < 0.0 {
            return Err(Error::validation("eps must be >= 0"));
        }
        if self.euler_steps < 100 {
            return Err(Error::validation("euler_steps must be >= 100"));
        }
        Ok(())
    }
}

/// Serializable description of a spec (closures elided).
#[derive(Debug, Clone, Serialize)]
pub struct SpecDescriptor {
    pub kind: String,
    pub c: f64,
    pub big_c: f64,
    pub eps: f64,
    pub euler_steps: usize,
}

impl From<&ItoProcessSpec> for SpecDescriptor {
    fn from(s: &ItoProcessSpec) -> Self {
        SpecDescriptor {
            kind: s.name().to_string(),
            c: s.c,
            big_c: s.big_c,
            eps: s.eps,
            euler_steps: s.euler_steps,
        }
    }
}

#[derive(Debug)]
pub struct TerminalSamples {
    /// X at the end of the horizon, one entry per path.
    pub x1: Vec<f64>,
    /// Running maximum over the Euler grid (including the start point).
    pub sup: Vec<f64>,
}

#[inline]
fn euler_run<D, S>(
    drift: D,
    diffusion: S,
    horizon: f64,
    steps: usize,
    bounds: (f64, f64, f64),
    paths: usize,
    seed: u64,
    block: u64,
) -> Result<TerminalSamples, Error>
where
    D: Fn(f64, f64) -> f64,
    S: Fn(f64, f64) -> f64,
{
    let (c, big_c, eps) = bounds;
    let drift_cap = eps.sqrt() + 1e-12;
    let h = horizon / steps as f64;
    let sqrt_h = h.sqrt();
    let mut x1 = vec![0.0_f64; paths];
    let mut sup = vec![0.0_f64; paths];
    for path in 0..paths {
        let mut stream = PathStream::for_path(seed, block, path as u64);
        let mut x = 0.0_f64;
        let mut running_max = 0.0_f64;
        let mut t = 0.0_f64;
        for _ in 0..steps {
            let mu = drift(t, x);
            if mu.abs() > drift_cap {
                return Err(Error::CoefficientBound {
                    what: "drift",
                    t,
                    x,
                    value: mu,
                    lo: -drift_cap,
                    hi: drift_cap,
                });
            }
            let sig = diffusion(t, x);
            if !(sig.abs() >= c && sig.abs() <= big_c) {
                return Err(Error::CoefficientBound {
                    what: "diffusion",
                    t,
                    x,
                    value: sig,
                    lo: c,
                    hi: big_c,
                });
            }
            let z: f64 = StandardNormal.sample(&mut stream);
            x += mu * h + sig * sqrt_h * z;
            t += h;
            if x > running_max {
                running_max = x;
            }
        }
        x1[path] = x;
        sup[path] = running_max;
    }
    Ok(TerminalSamples { x1, sup })
}

fn simulate_horizon(
    spec: &ItoProcessSpec,
    horizon: f64,
    paths: usize,
    seed: u64,
    block: u64,
) -> Result<TerminalSamples, Error> {
    spec.validate()?;
    let bounds = (spec.c, spec.big_c, spec.eps);
    match &spec.coefficients {
        Coefficients::Brownian => euler_run(
            |_, _| 0.0,
            |_, _| 1.0,
            horizon,
            spec.euler_steps,
            bounds,
            paths,
            seed,
            block,
        ),
        Coefficients::PerturbedSine { eps } => {
            let amp = eps.sqrt();
            euler_run(
                move |t, x| amp * (t * x).sin(),
                |_, x| (1.0 + 0.1 * x.tanh()).clamp(0.9, 1.1),
                horizon,
                spec.euler_steps,
                bounds,
                paths,
                seed,
                block,
            )
        }
        Coefficients::Custom { drift, diffusion } => euler_run(
            |t, x| drift(t, x),
            |t, x| diffusion(t, x),
            horizon,
            spec.euler_steps,
            bounds,
            paths,
            seed,
            block,
        ),
    }
}

/// Euler-Maruyama samples of X_1 and of the grid running maximum.
pub fn simulate_terminal(
    spec: &ItoProcessSpec,
    paths: usize,
    seed: u64,
) -> Result<TerminalSamples, Error> {
    simulate_horizon(spec, 1.0, paths, seed, 0)
}

/// Wilson score interval for a binomial proportion at 95%. The all-failure
/// and all-success endpoints are pinned exactly, where the closed form only
/// reaches them up to rounding.
fn wilson(successes: usize, trials: usize) -> (f64, f64) {
    const Z: f64 = 1.959963984540054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (Z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

pub const MIN_CONDITIONING_SAMPLES: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct TailCell {
    pub x: f64,
    pub z: f64,
    pub probability: f64,
    pub ci_halfwidth: f64,
    pub ci_upper: f64,
    pub n_conditioning: usize,
    pub reliable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailEstimate {
    pub cells: Vec<TailCell>,
}

/// Default grid for the exponential-bound checks: z in [0, 4] by 0.25,
/// x in [0, 3] by 0.5.
pub fn default_tail_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::new();
    for xi in 0..=6 {
        for zi in 0..=16 {
            grid.push((0.5 * xi as f64, 0.25 * zi as f64));
        }
    }
    grid
}

/// Ratio estimator of P(X > x + z | X > x) on the conditioned subsample,
/// with Wilson 95% intervals. Cells with fewer than
/// `MIN_CONDITIONING_SAMPLES` conditioning samples are flagged unreliable.
pub fn conditional_tail(samples: &[f64], grid: &[(f64, f64)]) -> TailEstimate {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let count_above = |v: f64| sorted.len() - sorted.partition_point(|&s| s <= v);
    let cells = grid
        .iter()
        .map(|&(x, z)| {
            let n_x = count_above(x);
            let n_xz = if z == 0.0 { n_x } else { count_above(x + z) };
            let (probability, lo, hi) = if n_x == 0 {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let p = n_xz as f64 / n_x as f64;
                let (lo, hi) = wilson(n_xz, n_x);
                (p, lo, hi)
            };
            TailCell {
                x,
                z,
                probability,
                ci_halfwidth: 0.5 * (hi - lo),
                ci_upper: hi,
                n_conditioning: n_x,
                reliable: n_x >= MIN_CONDITIONING_SAMPLES,
            }
        })
        .collect();
    TailEstimate { cells }
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedBound {
    pub c1: f64,
    /// max over reliable cells of (upper CI bound) * exp(c1 z).
    pub c1_const: f64,
    pub argmax_x: f64,
    pub argmax_z: f64,
    pub reliable_cells: usize,
}

pub fn fit_exponential_bound(estimate: &TailEstimate, c1: f64) -> Result<FittedBound, Error> {
    if !(c1 > 0.0) {
        return Err(Error::validation(format!("c1 must be > 0, got {c1}")));
    }
    let mut best = f64::NEG_INFINITY;
    let mut arg = (0.0, 0.0);
    let mut reliable = 0;
    for cell in estimate.cells.iter().filter(|c| c.reliable) {
        reliable += 1;
        let value = cell.ci_upper * (c1 * cell.z).exp();
        if value > best {
            best = value;
            arg = (cell.x, cell.z);
        }
    }
    if reliable == 0 {
        return Err(Error::validation("no reliable cells to fit"));
    }
    Ok(FittedBound {
        c1,
        c1_const: best,
        argmax_x: arg.0,
        argmax_z: arg.1,
        reliable_cells: reliable,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub spec: SpecDescriptor,
    pub paths: usize,
    pub seeds: (u64, u64),
    pub estimates: (TailEstimate, TailEstimate),
    pub fits: (FittedBound, FittedBound),
    pub stability_ratio: f64,
    pub pass: bool,
}

/// Run the conditional-tail estimator on two independent seeds and require
/// the fitted constant to be finite and stable within a factor of 2.
pub fn exponential_bound_check(
    spec: &ItoProcessSpec,
    grid: &[(f64, f64)],
    paths: usize,
    seed: u64,
    c1: f64,
) -> Result<BoundCheck, Error> {
    let seed_b = seed ^ 0x5bf0_3635_dcb2_9359;
    let run = |s: u64| -> Result<(TailEstimate, FittedBound), Error> {
        let samples = simulate_terminal(spec, paths, s)?;
        let estimate = conditional_tail(&samples.x1, grid);
        let fit = fit_exponential_bound(&estimate, c1)?;
        Ok((estimate, fit))
    };
    let (est_a, fit_a) = run(seed)?;
    let (est_b, fit_b) = run(seed_b)?;
    let ratio = {
        let (lo, hi) = if fit_a.c1_const <= fit_b.c1_const {
            (fit_a.c1_const, fit_b.c1_const)
        } else {
            (fit_b.c1_const, fit_a.c1_const)
        };
        hi / lo
    };
    let pass = fit_a.c1_const.is_finite() && fit_b.c1_const.is_finite() && ratio <= 2.0;
    Ok(BoundCheck {
        spec: SpecDescriptor::from(spec),
        paths,
        seeds: (seed, seed_b),
        estimates: (est_a, est_b),
        fits: (fit_a, fit_b),
        stability_ratio: ratio,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanGapCell {
    pub p_normalized: f64,
    pub gap_normalized: Option<f64>,
    pub n_conditioning: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanGapRow {
    pub dt: f64,
    pub cells: Vec<MeanGapCell>,
    /// sup over reliable cells of |p - E[X_dt | X_dt < p]| / sqrt(dt).
    pub sup_gap: f64,
    /// The p = 0 cell, whose Brownian value is sqrt(2/pi) sigma.
    pub gap_at_zero: f64,
    pub gap_at_zero_ci: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanGapReport {
    pub spec: SpecDescriptor,
    pub paths: usize,
    pub seed: u64,
    pub rows: Vec<MeanGapRow>,
    /// max over dt of sup_gap: the common constant the horizons share.
    pub common_bound: f64,
}

/// For each horizon dt, estimate sup_{p <= 0} |p - E[X_dt | X_dt < p]|
/// normalized by sqrt(dt), on a p-grid spanning [-5 C sqrt(dt), 0].
pub fn conditional_mean_gap(
    spec: &ItoProcessSpec,
    dt_list: &[f64],
    paths: usize,
    seed: u64,
) -> Result<MeanGapReport, Error> {
    if dt_list.is_empty() {
        return Err(Error::validation("dt_list must be nonempty"));
    }
    let mut rows = Vec::with_capacity(dt_list.len());
    for (i, &dt) in dt_list.iter().enumerate() {
        if !(dt > 0.0) {
            return Err(Error::validation(format!("dt must be > 0, got {dt}")));
        }
        let samples = simulate_horizon(spec, dt, paths, seed, 1 + i as u64)?;
        let mut sorted = samples.x1;
        sorted.sort_unstable_by(f64::total_cmp);
        // prefix sums for truncated means from below
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        prefix.push(0.0_f64);
        for &v in &sorted {
            prefix.push(prefix.last().unwrap() + v);
        }
        let sqrt_dt = dt.sqrt();
        let grid_points = 21;
        let mut cells = Vec::with_capacity(grid_points);
        let mut sup_gap = f64::NEG_INFINITY;
        let mut gap_at_zero = f64::NAN;
        let mut gap_at_zero_ci = f64::NAN;
        for g in 0..grid_points {
            // normalized grid from -5C up to 0
            let p_norm = -5.0 * spec.big_c * (1.0 - g as f64 / (grid_points - 1) as f64);
            let p = p_norm * sqrt_dt;
            let k = sorted.partition_point(|&s| s < p);
            let (gap, ci) = if k >= MIN_CONDITIONING_SAMPLES {
                let mean = prefix[k] / k as f64;
                let gap = (p - mean).abs() / sqrt_dt;
                // s.e. of the subsample mean, normalized
                let var = sorted[..k]
                    .iter()
                    .map(|&v| (v - mean) * (v - mean))
                    .sum::<f64>()
                    / k as f64;
                (Some(gap), 1.96 * (var / k as f64).sqrt() / sqrt_dt)
            } else {
                (None, f64::NAN)
            };
            if let Some(gapv) = gap {
                sup_gap = sup_gap.max(gapv);
                if g == grid_points - 1 {
                    gap_at_zero = gapv;
                    gap_at_zero_ci = ci;
                }
            }
            cells.push(MeanGapCell {
                p_normalized: p_norm,
                gap_normalized: gap,
                n_conditioning: k,
            });
        }
        rows.push(MeanGapRow {
            dt,
            cells,
            sup_gap,
            gap_at_zero,
            gap_at_zero_ci,
        });
    }
    let common_bound = rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.sup_gap));
    Ok(MeanGapReport {
        spec: SpecDescriptor::from(spec),
        paths,
        seed,
        rows,
        common_bound,
    })
}

/// Volatility process of the proximity benchmark.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum VolModel {
    Constant { sigma: f64 },
    /// sigma_t = base + amp * tanh(W_t), driven by the same Brownian motion.
    TanhOfBm { base: f64, amp: f64 },
}

impl VolModel {
    fn at_start(&self) -> f64 {
        match *self {
            VolModel::Constant { sigma } => sigma,
            VolModel::TanhOfBm { base, .. } => base,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProximityConfig {
    pub alpha: f64,
    pub vol: VolModel,
    pub dt_list: Vec<f64>,
    pub paths: usize,
    pub seed: u64,
    pub euler_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProximityRow {
    pub dt: f64,
    /// sup over the p-grid of (|p| v 1) |P(xi/sqrt(dt) > p) - P(sigma0 eta > p)|.
    pub weighted_tail_gap: f64,
    pub tail_gap_argmax_p: f64,
    /// sup over the p-grid of |E xi 1{xi > p} - E sigma0 eta 1{eta sigma0 > p}|
    /// in normalized units.
    pub truncated_mean_gap: f64,
    pub truncated_mean_gap_at_6: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProximityReport {
    pub config: ProximityConfig,
    /// 95% Dvoretzky-Kiefer-Wolfowitz band for the empirical cdf.
    pub dkw_bound: f64,
    pub rows: Vec<ProximityRow>,
}

/// Compare normalized fundamental-price increments over shrinking horizons
/// with the Gaussian frozen at the interval start.
pub fn gaussian_proximity(cfg: &ProximityConfig) -> Result<ProximityReport, Error> {
    if cfg.dt_list.is_empty() {
        return Err(Error::validation("dt_list must be nonempty"));
    }
    if cfg.euler_steps < 1 || cfg.paths < 1 {
        return Err(Error::validation("paths and euler_steps must be >= 1"));
    }
    let sigma0 = cfg.vol.at_start();
    if !(sigma0 > 0.0) {
        return Err(Error::validation("initial volatility must be > 0"));
    }
    let dkw_bound = ((2.0_f64 / 0.05).ln() / (2.0 * cfg.paths as f64)).sqrt();
    let mut rows = Vec::with_capacity(cfg.dt_list.len());
    for (i, &dt) in cfg.dt_list.iter().enumerate() {
        if !(dt > 0.0) {
            return Err(Error::validation(format!("dt must be > 0, got {dt}")));
        }
        let h = dt / cfg.euler_steps as f64;
        let sqrt_h = h.sqrt();
        let mut xi_norm = vec![0.0_f64; cfg.paths];
        let sqrt_dt = dt.sqrt();
        for path in 0..cfg.paths {
            let mut stream = PathStream::for_path(cfg.seed, 16 + i as u64, path as u64);
            let mut x = 0.0_f64;
            let mut w = 0.0_f64;
            for _ in 0..cfg.euler_steps {
                let sig = match cfg.vol {
                    VolModel::Constant { sigma } => sigma,
                    VolModel::TanhOfBm { base, amp } => base + amp * w.tanh(),
                };
                let z: f64 = StandardNormal.sample(&mut stream);
                x += cfg.alpha * h + sig * sqrt_h * z;
                w += sqrt_h * z;
            }
            xi_norm[path] = x / sqrt_dt;
        }
        xi_norm.sort_unstable_by(f64::total_cmp);
        let mut suffix = vec![0.0_f64; xi_norm.len() + 1];
        for k in (0..xi_norm.len()).rev() {
            suffix[k] = suffix[k + 1] + xi_norm[k];
        }
        let n = cfg.paths as f64;
        let mut weighted_tail_gap = f64::NEG_INFINITY;
        let mut tail_gap_argmax_p = 0.0;
        let mut truncated_mean_gap = f64::NEG_INFINITY;
        let mut truncated_mean_gap_at_6 = f64::NAN;
        for k in -60..=60_i32 {
            let p = 0.1 * k as f64 * sigma0;
            let idx = xi_norm.partition_point(|&s| s <= p);
            let emp_tail = (xi_norm.len() - idx) as f64 / n;
            let gauss_tail = std_normal_tail(p / sigma0);
            let weighted = p.abs().max(1.0) * (emp_tail - gauss_tail).abs();
            if weighted > weighted_tail_gap {
                weighted_tail_gap = weighted;
                tail_gap_argmax_p = p;
            }
            let emp_trunc = suffix[idx] / n;
            let gauss_trunc = sigma0 * std_normal_pdf(p / sigma0);
            let trunc_gap = (emp_trunc - gauss_trunc).abs();
            truncated_mean_gap = truncated_mean_gap.max(trunc_gap);
            if k == 60 {
                truncated_mean_gap_at_6 = trunc_gap;
            }
        }
        rows.push(ProximityRow {
            dt,
            weighted_tail_gap,
            tail_gap_argmax_p,
            truncated_mean_gap,
            truncated_mean_gap_at_6,
        });
    }
    Ok(ProximityReport {
        config: cfg.clone(),
        dkw_bound,
        rows,
    })
}
