//! Construction of the non-degenerate LTC equilibrium: terminal fixed point,
//! backward recursion for quotes and expected execution prices, and the
//! per-step degeneracy checks.
//!
//! All quotes and execution prices are stored relative to the fundamental
//! price; absolute levels exist only inside the exchange simulator.

use crate::error::Error;
use crate::gauss::{
    buy_objective, buy_objective_maximizer, mills_ratio, sell_objective, sell_objective_maximizer,
    GaussianIncrement,
};
use serde::Serialize;

/// Benchmark model: fundamental price p0 + alpha t + sigma W_t on [0, horizon],
/// traded at `steps` uniformly spaced auctions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub steps: usize,
}

impl ModelParams {
    pub fn new(alpha: f64, sigma: f64, horizon: f64, steps: usize) -> Result<Self, Error> {
        if !alpha.is_finite() || !sigma.is_finite() || !horizon.is_finite() {
            return Err(Error::validation("model parameters must be finite"));
        }
        if sigma <= 0.0 {
            return Err(Error::validation(format!("sigma must be > 0, got {sigma}")));
        }
        if horizon <= 0.0 {
            return Err(Error::validation(format!("horizon must be > 0, got {horizon}")));
        }
        if steps < 1 {
            return Err(Error::validation("steps must be >= 1"));
        }
        Ok(ModelParams {
            alpha,
            sigma,
            horizon,
            steps,
        })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// One-step fundamental increment, N(alpha dt, sigma^2 dt).
    pub fn step_increment(&self) -> GaussianIncrement {
        let dt = self.dt();
        GaussianIncrement::new(self.alpha * dt, self.sigma * dt.sqrt())
            .expect("valid params give a valid increment")
    }
}

/// A violated no-market-order / no-arbitrage condition at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Violation {
    /// bid > ask-side execution price: long agents would submit market orders.
    LongMarketOrders { pb: f64, la: f64 },
    /// bid-side execution price > ask: short agents would submit market orders.
    ShortMarketOrders { lb: f64, pa: f64 },
    /// ask < bid + |alpha| dt: a round trip against the drift scales to
    /// unbounded expected profit.
    ScalableRoundTrip { pa: f64, pb: f64, min_spread: f64 },
}

/// Why the construction stopped at a step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Degeneracy {
    /// Next-step ask execution price is nonnegative: posting limit sells has
    /// strictly negative relative profit at every level, so the ask side of
    /// the book empties.
    AskSideWithdraws { la_next: f64 },
    /// Mirror case: the bid side empties.
    BidSideWithdraws { lb_next: f64 },
    /// One of the fifth-line inequalities fails after the step.
    MarketOrders(Vec<Violation>),
}

/// Quotes and execution prices produced by one backward step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepQuotes {
    pub pa: f64,
    pub pb: f64,
    pub la: f64,
    pub lb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum StepResult {
    Quotes(StepQuotes),
    Degenerate(Degeneracy),
}

/// The constructed LTC equilibrium path. Entries are indexed 0..=steps; on a
/// degenerate run, entries at indices <= degenerate_from stay NaN (unset) and
/// the construction holds on [degenerate_from+1, steps].
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumPath {
    pub params: ModelParams,
    pub pa: Vec<f64>,
    pub pb: Vec<f64>,
    pub la: Vec<f64>,
    pub lb: Vec<f64>,
    pub degenerate_from: Option<usize>,
    pub degeneracy: Option<Degeneracy>,
    /// Smallest |la[n]| over constructed steps; diagnostic for runs probing
    /// the degeneracy boundary.
    pub min_abs_la: Option<f64>,
    pub min_abs_lb: Option<f64>,
}

impl EquilibriumPath {
    /// First index with constructed entries.
    pub fn first_constructed(&self) -> usize {
        self.degenerate_from.map(|n| n + 1).unwrap_or(0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate_from.is_some()
    }

    pub fn spread_at(&self, n: usize) -> f64 {
        self.pa[n] - self.pb[n]
    }

    /// sup_n |la[n]| over constructed entries.
    pub fn max_abs_la(&self) -> Option<f64> {
        fold_abs_max(&self.la)
    }

    pub fn max_abs_lb(&self) -> Option<f64> {
        fold_abs_max(&self.lb)
    }
}

fn fold_abs_max(v: &[f64]) -> Option<f64> {
    let m = v.iter().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, |m, &x| m.max(x.abs()));
    m.is_finite().then_some(m)
}

fn fold_abs_min(v: &[f64]) -> Option<f64> {
    let m = v.iter().filter(|x| x.is_finite()).fold(f64::INFINITY, |m, &x| m.min(x.abs()));
    m.is_finite().then_some(m)
}

/// The fifth-line conditions: empty iff pb <= la, lb <= pa and
/// pa >= pb + |alpha| dt.
pub fn check_no_market_order(
    pa: f64,
    pb: f64,
    la: f64,
    lb: f64,
    params: &ModelParams,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    if pb > la {
        violations.push(Violation::LongMarketOrders { pb, la });
    }
    if lb > pa {
        violations.push(Violation::ShortMarketOrders { lb, pa });
    }
    let min_spread = params.alpha.abs() * params.dt();
    if pa < pb + min_spread {
        violations.push(Violation::ScalableRoundTrip { pa, pb, min_spread });
    }
    violations
}

const DAMPING: f64 = 0.5;
const MAX_FIXED_POINT_ITERS: usize = 10_000;

/// Solve the single-period terminal system: the coupled best responses for
/// (pa, pb), then the execution prices, then the fifth-line inequalities.
///
/// The iteration runs on the inverted first-order conditions
///   pa <- m + s Mills((m - pb)/s),  pb <- m - s Mills((pa - m)/s),
/// damped by 0.5. The raw best-response map shares the fixed point but
/// repels it: its Jacobian has spectral radius 1/(1 - pbar^2) ~ 2.3 at the
/// zero-drift solution, so no damping of it converges, while the inverted
/// map contracts at rate |Mills'(pbar)| ~ 0.43.
pub fn solve_terminal_period(params: &ModelParams) -> Result<StepResult, Error> {
    let inc = params.step_increment();
    let (m, s) = (inc.mean(), inc.std());
    let mut pa = 0.75 * s;
    let mut pb = -0.75 * s;
    let tol = 1e-12 * s;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let pa_next = (1.0 - DAMPING) * pa + DAMPING * (m + s * mills_ratio((m - pb) / s));
        let pb_next = (1.0 - DAMPING) * pb + DAMPING * (m - s * mills_ratio((pa_next - m) / s));
        residual = (pa_next - pa).abs().max((pb_next - pb).abs());
        pa = pa_next;
        pb = pb_next;
        if residual < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iters: MAX_FIXED_POINT_ITERS,
            pa,
            pb,
            residual,
        });
    }
    // first two lines of the system require pb < 0 < pa
    if !(pb < 0.0 && pa > 0.0) {
        return Ok(StepResult::Degenerate(if pa <= 0.0 {
            Degeneracy::AskSideWithdraws { la_next: pb }
        } else {
            Degeneracy::BidSideWithdraws { lb_next: pa }
        }));
    }
    let la = pb + m + sell_objective(pa, pb, inc);
    let lb = pa + m - buy_objective(pb, pa, inc);
    let violations = check_no_market_order(pa, pb, la, lb, params);
    if !violations.is_empty() {
        return Ok(StepResult::Degenerate(Degeneracy::MarketOrders(violations)));
    }
    Ok(StepResult::Quotes(StepQuotes { pa, pb, la, lb }))
}

/// One backward step of the recursion. Signals degeneracy when the next-step
/// execution price has the wrong sign (the side stops posting limit orders)
/// or when the post-step no-market-order checks fail.
pub fn backward_step(la_next: f64, lb_next: f64, params: &ModelParams) -> StepResult {
    if la_next >= 0.0 {
        return StepResult::Degenerate(Degeneracy::AskSideWithdraws { la_next });
    }
    if lb_next <= 0.0 {
        return StepResult::Degenerate(Degeneracy::BidSideWithdraws { lb_next });
    }
    let inc = params.step_increment();
    let m = inc.mean();
    let (pa, ask_gain) = sell_objective_maximizer(la_next, inc)
        .interior()
        .expect("la_next < 0 gives an interior maximizer");
    let (pb, bid_gain) = buy_objective_maximizer(lb_next, inc)
        .interior()
        .expect("lb_next > 0 gives an interior maximizer");
    let la = la_next + m + ask_gain;
    let lb = lb_next + m - bid_gain;
    let violations = check_no_market_order(pa, pb, la, lb, params);
    if !violations.is_empty() {
        return StepResult::Degenerate(Degeneracy::MarketOrders(violations));
    }
    StepResult::Quotes(StepQuotes { pa, pb, la, lb })
}

/// Run the terminal solve and the backward recursion over the whole horizon.
pub fn solve_full(params: &ModelParams) -> Result<EquilibriumPath, Error> {
    let n = params.steps;
    let mut path = EquilibriumPath {
        params: *params,
        pa: vec![f64::NAN; n + 1],
        pb: vec![f64::NAN; n + 1],
        la: vec![f64::NAN; n + 1],
        lb: vec![f64::NAN; n + 1],
        degenerate_from: None,
        degeneracy: None,
        min_abs_la: None,
        min_abs_lb: None,
    };
    match solve_terminal_period(params)? {
        StepResult::Degenerate(d) => {
            path.degenerate_from = Some(n - 1);
            path.degeneracy = Some(d);
            return Ok(path);
        }
        StepResult::Quotes(q) => {
            // LTC: the terminal book is the (N-1) book shifted by the last
            // increment, and residual inventory marks to the opposite side.
            path.pa[n] = q.pa;
            path.pb[n] = q.pb;
            path.la[n] = q.pb;
            path.lb[n] = q.pa;
            path.pa[n - 1] = q.pa;
            path.pb[n - 1] = q.pb;
            path.la[n - 1] = q.la;
            path.lb[n - 1] = q.lb;
        }
    }
    for k in (0..n.saturating_sub(1)).rev() {
        match backward_step(path.la[k + 1], path.lb[k + 1], params) {
            StepResult::Quotes(q) => {
                path.pa[k] = q.pa;
                path.pb[k] = q.pb;
                path.la[k] = q.la;
                path.lb[k] = q.lb;
            }
            StepResult::Degenerate(d) => {
                path.degenerate_from = Some(k);
                path.degeneracy = Some(d);
                break;
            }
        }
    }
    path.min_abs_la = fold_abs_min(&path.la);
    path.min_abs_lb = fold_abs_min(&path.lb);
    Ok(path)
}
