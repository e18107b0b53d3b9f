//! Parameter sweeps: spread against trading frequency, per-step path tables,
//! and the critical drift below which the whole horizon stays non-degenerate.

use crate::error::Error;
use crate::solver::{solve_full, EquilibriumPath, ModelParams};
use serde::Serialize;

/// One row of a frequency sweep. Fields are None when the corresponding part
/// of the path was never constructed (degenerate before step 0, or a solver
/// error recorded in `SweepTable::row_errors`).
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub steps: usize,
    pub alpha: f64,
    pub spread0: Option<f64>,
    pub spread_terminal: Option<f64>,
    pub max_abs_la: Option<f64>,
    pub max_abs_lb: Option<f64>,
    pub degenerate_from: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// (steps, message) for rows whose solve failed outright.
    pub row_errors: Vec<(usize, String)>,
}

fn row_from_path(path: &EquilibriumPath) -> SweepRow {
    let n = path.params.steps;
    let finite = |v: f64| v.is_finite().then_some(v);
    SweepRow {
        steps: n,
        alpha: path.params.alpha,
        spread0: finite(path.pa[0] - path.pb[0]),
        spread_terminal: finite(path.pa[n] - path.pb[n]),
        max_abs_la: path.max_abs_la(),
        max_abs_lb: path.max_abs_lb(),
        degenerate_from: path.degenerate_from,
    }
}

/// Solve once per requested frequency. Row order follows the input order;
/// solver errors are recorded per row without aborting the sweep.
pub fn spread_vs_frequency(
    alpha: f64,
    sigma: f64,
    horizon: f64,
    n_list: &[usize],
) -> Result<SweepTable, Error> {
    if n_list.is_empty() {
        return Err(Error::validation("n_list must be nonempty"));
    }
    if let Some(&bad) = n_list.iter().find(|&&n| n < 2) {
        return Err(Error::validation(format!("each N must be >= 2, got {bad}")));
    }
    let mut table = SweepTable {
        rows: Vec::with_capacity(n_list.len()),
        row_errors: Vec::new(),
    };
    for &n in n_list {
        match ModelParams::new(alpha, sigma, horizon, n).and_then(|p| solve_full(&p)) {
            Ok(path) => table.rows.push(row_from_path(&path)),
            Err(e) => {
                table.rows.push(SweepRow {
                    steps: n,
                    alpha,
                    spread0: None,
                    spread_terminal: None,
                    max_abs_la: None,
                    max_abs_lb: None,
                    degenerate_from: None,
                });
                table.row_errors.push((n, e.to_string()));
            }
        }
    }
    Ok(table)
}

/// Evidence that the degeneracy indicator was monotone in alpha on the
/// probed grid before bisection started.
#[derive(Debug, Clone, Serialize)]
pub struct ScanCertificate {
    pub grid: Vec<(f64, bool)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalDrift {
    pub steps: usize,
    pub alpha_star: f64,
    pub bracket_width: f64,
    /// Exact bracket ends: solve_full is non-degenerate at `bracket_lo` and
    /// degenerate at `bracket_hi`.
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub scan_certificate: ScanCertificate,
}

fn is_degenerate(alpha: f64, sigma: f64, horizon: f64, steps: usize) -> Result<bool, Error> {
    let params = ModelParams::new(alpha, sigma, horizon, steps)?;
    Ok(solve_full(&params)?.is_degenerate())
}

/// Largest drift with a non-degenerate construction on the whole horizon,
/// located by bisection after a coarse monotonicity scan.
pub fn critical_alpha(
    steps: usize,
    sigma: f64,
    horizon: f64,
    tol: f64,
) -> Result<CriticalDrift, Error> {
    if !(tol > 0.0) {
        return Err(Error::validation(format!("tol must be > 0, got {tol}")));
    }
    // grow until degenerate
    let mut hi = 1e-3 * sigma / horizon.sqrt();
    while !is_degenerate(hi, sigma, horizon, steps)? {
        hi *= 2.0;
        if hi > 1e9 * sigma {
            return Err(Error::validation(
                "no degenerate drift found below 1e9 sigma; parameters out of range",
            ));
        }
    }
    // coarse scan: the indicator must switch from false to true exactly once
    let scan_points = 9;
    let mut grid = Vec::with_capacity(scan_points);
    for k in 0..scan_points {
        let a = hi * k as f64 / (scan_points - 1) as f64;
        grid.push((a, is_degenerate(a, sigma, horizon, steps)?));
    }
    let switches = grid.windows(2).filter(|w| w[0].1 != w[1].1).count();
    let monotone = switches == 1 && !grid[0].1 && grid[scan_points - 1].1;
    if !monotone {
        return Err(Error::NonMonotoneScan { points: grid });
    }
    let mut lo = grid
        .iter()
        .rev()
        .find(|(_, d)| !d)
        .map(|(a, _)| *a)
        .unwrap();
    let mut hi = grid.iter().find(|(_, d)| *d).map(|(a, _)| *a).unwrap();
    while hi - lo > 2.0 * tol {
        let mid = 0.5 * (lo + hi);
        if is_degenerate(mid, sigma, horizon, steps)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalDrift {
        steps,
        alpha_star: 0.5 * (lo + hi),
        bracket_width: 0.5 * (hi - lo),
        bracket_lo: lo,
        bracket_hi: hi,
        scan_certificate: ScanCertificate { grid },
    })
}

/// Per-step table of the constructed path, for plotting.
#[derive(Debug, Clone, Serialize)]
pub struct PathRow {
    pub t: f64,
    pub pa: Option<f64>,
    pub pb: Option<f64>,
    pub la: Option<f64>,
    pub lb: Option<f64>,
    /// Expected remaining change of the fundamental price, alpha (T - t);
    /// the dashed-overlay comparison column.
    pub drift_remaining: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathReport {
    pub params: ModelParams,
    pub degenerate_from: Option<usize>,
    pub rows: Vec<PathRow>,
}

pub fn path_report(params: &ModelParams) -> Result<PathReport, Error> {
    let path = solve_full(params)?;
    Ok(path_report_from(&path))
}

pub fn path_report_from(path: &EquilibriumPath) -> PathReport {
    let params = path.params;
    let dt = params.dt();
    let finite = |v: f64| v.is_finite().then_some(v);
    let rows = (0..=params.steps)
        .map(|n| {
            let t = n as f64 * dt;
            PathRow {
                t,
                pa: finite(path.pa[n]),
                pb: finite(path.pb[n]),
                la: finite(path.la[n]),
                lb: finite(path.lb[n]),
                drift_remaining: params.alpha * (params.horizon - t),
            }
        })
        .collect();
    PathReport {
        params,
        degenerate_from: path.degenerate_from,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_inputs() {
        assert!(spread_vs_frequency(0.0, 1.0, 1.0, &[]).is_err());
        assert!(spread_vs_frequency(0.0, 1.0, 1.0, &[1]).is_err());
        assert!(critical_alpha(100, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_drift_spread_decreases_with_frequency() {
        let t = spread_vs_frequency(0.0, 1.0, 1.0, &[20, 50, 100, 200, 500]).unwrap();
        assert!(t.row_errors.is_empty());
        let spreads: Vec<f64> = t.rows.iter().map(|r| r.spread0.unwrap()).collect();
        for w in spreads.windows(2) {
            assert!(w[1] < w[0], "spread0 not decreasing: {spreads:?}");
        }
        // terminal spread scales as 2 pbar sigma sqrt(dt)
        for r in &t.rows {
            let dt = 1.0 / r.steps as f64;
            let expected = 2.0 * 0.751791524693564 * dt.sqrt();
            assert!((r.spread_terminal.unwrap() - expected).abs() < 1e-6);
            assert!(r.degenerate_from.is_none());
        }
        // expected execution prices shrink toward the fundamental
        let las: Vec<f64> = t.rows.iter().map(|r| r.max_abs_la.unwrap()).collect();
        for w in las.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn degenerate_rows_carry_the_step() {
        let t = spread_vs_frequency(0.1, 1.0, 1.0, &[20, 100]).unwrap();
        assert_eq!(t.rows[0].degenerate_from, None);
        assert!(t.rows[1].degenerate_from.is_some());
        // nothing constructed at step 0, so no time-zero spread
        assert!(t.rows[1].spread0.is_none());
        assert!(t.rows[1].spread_terminal.is_some());
    }

    #[test]
    fn critical_alpha_brackets_the_boundary() {
        let c = critical_alpha(50, 1.0, 1.0, 1e-4).unwrap();
        assert!(c.alpha_star > 0.0);
        assert!(c.bracket_width <= 1e-4);
        assert!(!is_degenerate(c.bracket_lo, 1.0, 1.0, 50).unwrap());
        assert!(is_degenerate(c.bracket_hi, 1.0, 1.0, 50).unwrap());
        // certificate grid was recorded and is monotone
        let g = &c.scan_certificate.grid;
        assert!(!g[0].1 && g[g.len() - 1].1);
    }

    #[test]
    fn critical_alpha_tolerances_agree() {
        let coarse = critical_alpha(80, 1.0, 1.0, 1e-4).unwrap();
        let fine = critical_alpha(80, 1.0, 1.0, 1e-6).unwrap();
        assert!((coarse.alpha_star - fine.alpha_star).abs() <= 1e-4);
    }

    #[test]
    fn path_report_includes_overlay_column() {
        let params = ModelParams::new(0.1, 1.0, 1.0, 100).unwrap();
        let rep = path_report(&params).unwrap();
        assert_eq!(rep.rows.len(), 101);
        let k = rep.degenerate_from.unwrap();
        // la crosses zero at the degeneracy step
        assert!(rep.rows[k + 1].la.unwrap() >= 0.0);
        assert!(rep.rows[k].la.is_none());
        assert!((rep.rows[0].drift_remaining - 0.1).abs() < 1e-15);
        assert_eq!(rep.rows[100].drift_remaining, 0.0);
    }

    #[test]
    fn zero_drift_path_has_negative_la_throughout() {
        let params = ModelParams::new(0.0, 1.0, 1.0, 60).unwrap();
        let rep = path_report(&params).unwrap();
        for row in &rep.rows {
            assert!(row.la.unwrap() < 0.0);
        }
    }
}
