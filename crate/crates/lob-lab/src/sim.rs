//! Discrete-time exchange engine: state dynamics, two-atom book, linear
//! demand clearing, and the Monte Carlo checks that the solver's output is
//! an equilibrium (value-function slopes and one-shot deviation tests).

use crate::error::Error;
use crate::rng::PathStream;
use crate::solver::EquilibriumPath;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Resting limit orders as price/mass atoms, absolute prices.
#[derive(Debug, Clone, Serialize)]
pub struct LobState {
    pub sell_atoms: Vec<(f64, f64)>,
    pub buy_atoms: Vec<(f64, f64)>,
}

impl LobState {
    pub fn two_atom(ask: f64, ask_mass: f64, bid: f64, bid_mass: f64) -> Self {
        LobState {
            sell_atoms: vec![(ask, ask_mass)],
            buy_atoms: vec![(bid, bid_mass)],
        }
    }

    pub fn ask(&self) -> Option<f64> {
        self.sell_atoms
            .iter()
            .map(|&(p, _)| p)
            .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.min(p))))
    }

    pub fn bid(&self) -> Option<f64> {
        self.buy_atoms
            .iter()
            .map(|&(p, _)| p)
            .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))))
    }

    fn sell_mass_below(&self, price: f64) -> f64 {
        self.sell_atoms
            .iter()
            .filter(|&&(p, _)| p < price)
            .map(|&(_, m)| m)
            .sum()
    }

    fn buy_mass_above(&self, price: f64) -> f64 {
        self.buy_atoms
            .iter()
            .filter(|&&(p, _)| p > price)
            .map(|&(_, m)| m)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentState {
    pub inventory: f64,
}

/// One period's action. Market order size is signed: positive sells at the
/// bid, negative buys at the ask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Control {
    LimitSell { price: f64, size: f64 },
    LimitBuy { price: f64, size: f64 },
    MarketOrder { size: f64 },
    Wait,
}

/// Linear demand curve D_n(p) = kappa (p0_n - p): strictly decreasing and
/// vanishing at the fundamental price. The equilibrium itself never depends
/// on kappa; it only shapes execution for orders shadowed by book mass.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DemandModel {
    pub kappa: f64,
}

impl DemandModel {
    pub fn new(kappa: f64) -> Result<Self, Error> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::validation(format!("kappa must be > 0, got {kappa}")));
        }
        Ok(DemandModel { kappa })
    }

    /// Shares demanded to buy at or below `price` once the next fundamental
    /// level is `p0_next`.
    #[inline]
    fn buy_demand(&self, price: f64, p0_next: f64) -> f64 {
        (self.kappa * (p0_next - price)).max(0.0)
    }

    #[inline]
    fn sell_demand(&self, price: f64, p0_next: f64) -> f64 {
        (self.kappa * (price - p0_next)).max(0.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub paths: usize,
    pub seed: u64,
    /// Price offsets probed around the equilibrium quote in deviation tests.
    pub deviation_grid: Vec<f64>,
    /// Reduction granularity: payoffs are accumulated per batch and batches
    /// combined in index order, so totals do not depend on worker count.
    pub batch: usize,
    pub threads: usize,
}

impl SimConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        SimConfig {
            paths,
            seed,
            deviation_grid: Vec::new(),
            batch: 4096,
            threads: 1,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        if self.paths < 1 {
            return Err(Error::validation("paths must be >= 1"));
        }
        if self.batch < 1 {
            return Err(Error::validation("batch must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub state: AgentState,
    pub cash_delta: f64,
    pub executed: bool,
}

/// Advance one agent through one clearing period. Limit orders execute when
/// the realized demand at their level exceeds the resting mass with better
/// price priority; market orders trade at the current bid/ask.
pub fn step_state(
    state: &AgentState,
    control: &Control,
    lob: &LobState,
    demand: &DemandModel,
    p0_next: f64,
) -> Result<StepOutcome, Error> {
    let mut out = StepOutcome {
        state: *state,
        cash_delta: 0.0,
        executed: false,
    };
    match *control {
        Control::Wait => {}
        Control::LimitSell { price, size } => {
            if !(size > 0.0) || !price.is_finite() {
                return Err(Error::validation(format!(
                    "limit sell needs finite price and size > 0, got ({price}, {size})"
                )));
            }
            if demand.buy_demand(price, p0_next) > lob.sell_mass_below(price) {
                out.state.inventory -= size;
                out.cash_delta = price * size;
                out.executed = true;
            }
        }
        Control::LimitBuy { price, size } => {
            if !(size > 0.0) || !price.is_finite() {
                return Err(Error::validation(format!(
                    "limit buy needs finite price and size > 0, got ({price}, {size})"
                )));
            }
            if demand.sell_demand(price, p0_next) > lob.buy_mass_above(price) {
                out.state.inventory += size;
                out.cash_delta = -price * size;
                out.executed = true;
            }
        }
        Control::MarketOrder { size } => {
            if size > 0.0 {
                let bid = lob.bid().ok_or_else(|| {
                    Error::validation("market sell against an empty bid side")
                })?;
                out.state.inventory -= size;
                out.cash_delta = bid * size;
                out.executed = true;
            } else if size < 0.0 {
                let ask = lob.ask().ok_or_else(|| {
                    Error::validation("market buy against an empty ask side")
                })?;
                out.state.inventory -= size;
                out.cash_delta = ask * size;
                out.executed = true;
            }
        }
    }
    Ok(out)
}

/// A per-step control rule. `Sync` so path workers can share it.
pub trait Strategy: Sync {
    fn control(&self, step: usize, state: &AgentState, book: &LobState) -> Control;
}

/// The candidate equilibrium strategy: post the full inventory at the near
/// book side, do nothing once flat.
pub struct EquilibriumStrategy;

impl Strategy for EquilibriumStrategy {
    fn control(&self, _step: usize, state: &AgentState, book: &LobState) -> Control {
        if state.inventory > 0.0 {
            Control::LimitSell {
                price: book.ask().expect("two-atom book"),
                size: state.inventory,
            }
        } else if state.inventory < 0.0 {
            Control::LimitBuy {
                price: book.bid().expect("two-atom book"),
                size: -state.inventory,
            }
        } else {
            Control::Wait
        }
    }
}

pub struct AlwaysWait;

impl Strategy for AlwaysWait {
    fn control(&self, _: usize, _: &AgentState, _: &LobState) -> Control {
        Control::Wait
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DeviationKind {
    /// Replace the step's post with one at quote + offset.
    PostOffset { offset: f64 },
    /// Liquidate with a market order at the step, then resume.
    MarketOrder,
    /// Skip the step's post, then resume.
    Wait,
}

/// Follow a base strategy except for a single-step substitution.
pub struct OneShotDeviation<S> {
    pub base: S,
    pub step: usize,
    pub kind: DeviationKind,
}

impl<S: Strategy> Strategy for OneShotDeviation<S> {
    fn control(&self, step: usize, state: &AgentState, book: &LobState) -> Control {
        let base = self.base.control(step, state, book);
        if step != self.step {
            return base;
        }
        match (self.kind, base) {
            (DeviationKind::Wait, _) => Control::Wait,
            (DeviationKind::MarketOrder, _) => Control::MarketOrder {
                size: state.inventory,
            },
            (DeviationKind::PostOffset { offset }, Control::LimitSell { price, size }) => {
                Control::LimitSell {
                    price: price + offset,
                    size,
                }
            }
            (DeviationKind::PostOffset { offset }, Control::LimitBuy { price, size }) => {
                Control::LimitBuy {
                    price: price + offset,
                    size,
                }
            }
            (DeviationKind::PostOffset { .. }, other) => other,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimPayoff {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
}

/// The simulated exchange around one constructed equilibrium path.
pub struct Exchange<'a> {
    path: &'a EquilibriumPath,
    demand: DemandModel,
    ask_mass: f64,
    bid_mass: f64,
}

impl<'a> Exchange<'a> {
    pub fn new(path: &'a EquilibriumPath) -> Result<Self, Error> {
        if path.is_degenerate() {
            return Err(Error::validation(
                "simulation needs a non-degenerate equilibrium path",
            ));
        }
        Ok(Exchange {
            path,
            demand: DemandModel::new(1.0)?,
            ask_mass: 1.0,
            bid_mass: 1.0,
        })
    }

    pub fn with_book(mut self, demand: DemandModel, ask_mass: f64, bid_mass: f64) -> Result<Self, Error> {
        if !(ask_mass > 0.0) || !(bid_mass > 0.0) {
            return Err(Error::validation("book masses must be > 0"));
        }
        self.demand = demand;
        self.ask_mass = ask_mass;
        self.bid_mass = bid_mass;
        Ok(self)
    }

    /// One full path of the game under `strategy`, returning the realized
    /// objective (trading cash plus terminal marking).
    fn run_path(
        &self,
        strategy: &dyn Strategy,
        s0: f64,
        stream: &mut PathStream,
    ) -> Result<f64, Error> {
        let params = &self.path.params;
        let n = params.steps;
        let inc = params.step_increment();
        let mut p0 = 0.0_f64;
        let mut state = AgentState { inventory: s0 };
        let mut cash = 0.0_f64;
        let mut book = LobState::two_atom(0.0, self.ask_mass, 0.0, self.bid_mass);
        for step in 0..n {
            let ask_rel = self.path.pa[step];
            let bid_rel = self.path.pb[step];
            book.sell_atoms[0].0 = ask_rel + p0;
            book.buy_atoms[0].0 = bid_rel + p0;
            let control = strategy.control(step, &state, &book);
            let z: f64 = StandardNormal.sample(stream);
            let xi = inc.mean() + inc.std() * z;
            let p0_next = p0 + xi;
            let out = step_state(&state, &control, &book, &self.demand, p0_next)
                .map_err(|e| Error::InvalidControl {
                    step,
                    reason: e.to_string(),
                })?;
            // On the ansatz (posting at the near quote, no better-priced
            // mass) the general clearing rule must reduce to the increment
            // indicator of the one-period objective; cross-check both.
            match control {
                Control::LimitSell { price, .. }
                    if price == book.sell_atoms[0].0 && book.sell_mass_below(price) == 0.0 =>
                {
                    let band = 1e-12 * (1.0 + ask_rel.abs());
                    if (xi - ask_rel).abs() > band {
                        assert_eq!(
                            out.executed,
                            xi > ask_rel,
                            "general rule and reduced indicator disagree"
                        );
                    }
                }
                Control::LimitBuy { price, .. }
                    if price == book.buy_atoms[0].0 && book.buy_mass_above(price) == 0.0 =>
                {
                    let band = 1e-12 * (1.0 + bid_rel.abs());
                    if (xi - bid_rel).abs() > band {
                        assert_eq!(
                            out.executed,
                            xi < bid_rel,
                            "general rule and reduced indicator disagree"
                        );
                    }
                }
                _ => {}
            }
            state = out.state;
            cash += out.cash_delta;
            p0 = p0_next;
        }
        // terminal marking against the LTC book shifted by the last increment
        let bid_terminal = self.path.pb[n] + p0;
        let ask_terminal = self.path.pa[n] + p0;
        Ok(cash + state.inventory.max(0.0) * bid_terminal
            + state.inventory.min(0.0) * ask_terminal)
    }

    /// Monte Carlo mean payoff of `strategy`, with its standard error.
    /// Deterministic in (seed, batch) regardless of thread count.
    pub fn simulate_objective(
        &self,
        strategy: &dyn Strategy,
        s0: f64,
        cfg: &SimConfig,
    ) -> Result<SimPayoff, Error> {
        cfg.validate()?;
        let mut payoffs = vec![0.0_f64; cfg.paths];
        self.fill_payoffs(strategy, s0, cfg, &mut payoffs)?;
        Ok(reduce_mean(&payoffs, cfg.batch))
    }

    fn fill_payoffs(
        &self,
        strategy: &dyn Strategy,
        s0: f64,
        cfg: &SimConfig,
        payoffs: &mut [f64],
    ) -> Result<(), Error> {
        let run = |offset: usize, chunk: &mut [f64]| -> Result<(), Error> {
            for (i, slot) in chunk.iter_mut().enumerate() {
                let mut stream = PathStream::for_path(cfg.seed, 0, (offset + i) as u64);
                *slot = self.run_path(strategy, s0, &mut stream)?;
            }
            Ok(())
        };
        if cfg.threads <= 1 {
            return run(0, payoffs);
        }
        // round-robin the batches over a fixed worker count; each path still
        // owns its stream, so the outputs do not depend on the assignment
        let chunk_len = cfg.batch;
        let mut per_worker: Vec<Vec<(usize, &mut [f64])>> =
            (0..cfg.threads).map(|_| Vec::new()).collect();
        for (ci, chunk) in payoffs.chunks_mut(chunk_len).enumerate() {
            per_worker[ci % cfg.threads].push((ci * chunk_len, chunk));
        }
        let run = &run;
        let results: Vec<Result<(), Error>> = std::thread::scope(|scope| {
            let handles: Vec<_> = per_worker
                .into_iter()
                .map(|chunks| {
                    scope.spawn(move || -> Result<(), Error> {
                        for (offset, chunk) in chunks {
                            run(offset, chunk)?;
                        }
                        Ok(())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        results.into_iter().collect()
    }
}

/// Mean and standard error with a fixed pairwise order: per-batch sums first,
/// batches combined in index order.
fn reduce_mean(values: &[f64], batch: usize) -> SimPayoff {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for chunk in values.chunks(batch.max(1)) {
        let mut s = 0.0;
        let mut s2 = 0.0;
        for &v in chunk {
            s += v;
            s2 += v * v;
        }
        sum += s;
        sumsq += s2;
    }
    let n = values.len() as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    SimPayoff {
        mean,
        std_error: (var / n).sqrt(),
        paths: values.len(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueCheck {
    pub s: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub predicted: f64,
    pub discrepancy: f64,
    pub within_three_se: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearityCheck {
    pub s_small: f64,
    pub s_large: f64,
    pub payoff_ratio: f64,
    pub expected_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueFunctionReport {
    pub checks: Vec<ValueCheck>,
    pub linearity: Vec<LinearityCheck>,
}

impl<'a> Exchange<'a> {
    /// Compare Monte Carlo payoffs of the candidate strategy against the
    /// piecewise-linear prediction s+ la[0] - s- lb[0] for each inventory.
    pub fn verify_value_function(
        &self,
        s_list: &[f64],
        cfg: &SimConfig,
    ) -> Result<ValueFunctionReport, Error> {
        let mut checks = Vec::with_capacity(s_list.len());
        let mut by_s = std::collections::BTreeMap::new();
        for &s in s_list {
            let payoff = self.simulate_objective(&EquilibriumStrategy, s, cfg)?;
            let predicted =
                s.max(0.0) * self.path.la[0] + s.min(0.0) * self.path.lb[0];
            let discrepancy = payoff.mean - predicted;
            checks.push(ValueCheck {
                s,
                mc_mean: payoff.mean,
                mc_std_error: payoff.std_error,
                predicted,
                discrepancy,
                within_three_se: discrepancy.abs() <= 3.0 * payoff.std_error,
            });
            by_s.insert((s * 1e6).round() as i64, payoff.mean);
        }
        let mut linearity = Vec::new();
        for (&key, &mean_small) in &by_s {
            let doubled = key * 2;
            if let Some(&mean_large) = by_s.get(&doubled) {
                if mean_small != 0.0 {
                    linearity.push(LinearityCheck {
                        s_small: key as f64 / 1e6,
                        s_large: doubled as f64 / 1e6,
                        payoff_ratio: mean_large / mean_small,
                        expected_ratio: 2.0,
                    });
                }
            }
        }
        Ok(ValueFunctionReport { checks, linearity })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationCheck {
    pub step: usize,
    pub kind: DeviationKind,
    pub gain: f64,
    pub std_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub s0: f64,
    pub max_gain: f64,
    pub max_gain_std_error: f64,
    pub max_gain_step: usize,
    pub max_gain_kind: DeviationKind,
    pub any_flagged: bool,
    pub checks: Vec<DeviationCheck>,
}

impl<'a> Exchange<'a> {
    /// One-shot deviation family around the candidate strategy, evaluated
    /// with common random numbers: payoff differences are computed on the
    /// same fundamental path for the deviation and the baseline.
    pub fn deviation_test(&self, s0: f64, cfg: &SimConfig) -> Result<DeviationReport, Error> {
        cfg.validate()?;
        if s0 == 0.0 {
            return Err(Error::validation("deviation test needs nonzero inventory"));
        }
        let n = self.path.params.steps;
        let mut kinds = Vec::new();
        for &off in &cfg.deviation_grid {
            if !(off > 0.0) || !off.is_finite() {
                return Err(Error::validation(format!(
                    "deviation offsets must be positive, got {off}"
                )));
            }
            kinds.push(DeviationKind::PostOffset { offset: off });
            kinds.push(DeviationKind::PostOffset { offset: -off });
        }
        kinds.push(DeviationKind::MarketOrder);
        kinds.push(DeviationKind::Wait);
        let n_checks = n * kinds.len();

        let long_side = s0 > 0.0;
        let size = s0.abs();
        let inc = self.path.params.step_increment();
        // shadow distance for a post behind the resting atom
        let shadow = if long_side {
            self.ask_mass / self.demand.kappa
        } else {
            self.bid_mass / self.demand.kappa
        };

        let mut sums = vec![0.0_f64; n_checks];
        let mut sumsqs = vec![0.0_f64; n_checks];
        let mut xi = vec![0.0_f64; n];
        let mut p0 = vec![0.0_f64; n + 1];
        // next_exec[i]: first step >= i whose posted quote executes; n if none
        let mut next_exec = vec![0_usize; n + 1];

        let mut batch_sums = vec![0.0_f64; n_checks];
        let mut batch_sumsqs = vec![0.0_f64; n_checks];
        for batch_start in (0..cfg.paths).step_by(cfg.batch) {
            let batch_end = (batch_start + cfg.batch).min(cfg.paths);
            batch_sums.iter_mut().for_each(|v| *v = 0.0);
            batch_sumsqs.iter_mut().for_each(|v| *v = 0.0);
            for path_idx in batch_start..batch_end {
                let mut stream = PathStream::for_path(cfg.seed, 0, path_idx as u64);
                for k in 0..n {
                    let z: f64 = StandardNormal.sample(&mut stream);
                    xi[k] = inc.mean() + inc.std() * z;
                    p0[k + 1] = p0[k] + xi[k];
                }
                next_exec[n] = n;
                for k in (0..n).rev() {
                    let hits = if long_side {
                        xi[k] > self.path.pa[k]
                    } else {
                        xi[k] < self.path.pb[k]
                    };
                    next_exec[k] = if hits { k } else { next_exec[k + 1] };
                }
                // realized objective of the candidate strategy from step j,
                // holding the full inventory
                let resume = |j: usize| -> f64 {
                    let k = next_exec[j];
                    if k < n {
                        if long_side {
                            (self.path.pa[k] + p0[k]) * size
                        } else {
                            -(self.path.pb[k] + p0[k]) * size
                        }
                    } else if long_side {
                        (self.path.pb[n] + p0[n]) * size
                    } else {
                        -(self.path.pa[n] + p0[n]) * size
                    }
                };
                let base_exec = next_exec[0];
                let payoff_base = resume(0);
                for (ki, &kind) in kinds.iter().enumerate() {
                    for step in 0..n {
                        let idx = step * kinds.len() + ki;
                        // deviation only differs while the order is unfilled
                        if base_exec < step {
                            continue;
                        }
                        let payoff_dev = match kind {
                            DeviationKind::MarketOrder => {
                                if long_side {
                                    (self.path.pb[step] + p0[step]) * size
                                } else {
                                    -(self.path.pa[step] + p0[step]) * size
                                }
                            }
                            DeviationKind::Wait => resume(step + 1),
                            DeviationKind::PostOffset { offset } => {
                                let behind = if long_side { offset > 0.0 } else { offset < 0.0 };
                                let gap = if behind { shadow } else { 0.0 };
                                let fills = if long_side {
                                    xi[step] > self.path.pa[step] + offset + gap
                                } else {
                                    xi[step] < self.path.pb[step] + offset - gap
                                };
                                if fills {
                                    if long_side {
                                        (self.path.pa[step] + offset + p0[step]) * size
                                    } else {
                                        -(self.path.pb[step] + offset + p0[step]) * size
                                    }
                                } else {
                                    resume(step + 1)
                                }
                            }
                        };
                        let diff = payoff_dev - payoff_base;
                        batch_sums[idx] += diff;
                        batch_sumsqs[idx] += diff * diff;
                    }
                }
            }
            for i in 0..n_checks {
                sums[i] += batch_sums[i];
                sumsqs[i] += batch_sumsqs[i];
            }
        }

        let paths = cfg.paths as f64;
        let mut checks = Vec::with_capacity(n_checks);
        for step in 0..n {
            for (ki, &kind) in kinds.iter().enumerate() {
                let idx = step * kinds.len() + ki;
                let gain = sums[idx] / paths;
                let var = (sumsqs[idx] / paths - gain * gain).max(0.0);
                let std_error = (var / paths).sqrt();
                checks.push(DeviationCheck {
                    step,
                    kind,
                    gain,
                    std_error,
                    flagged: gain > 3.0 * std_error,
                });
            }
        }
        let best = checks
            .iter()
            .max_by(|a, b| a.gain.total_cmp(&b.gain))
            .expect("at least one check");
        Ok(DeviationReport {
            s0,
            max_gain: best.gain,
            max_gain_std_error: best.std_error,
            max_gain_step: best.step,
            max_gain_kind: best.kind,
            any_flagged: checks.iter().any(|c| c.flagged),
            checks,
        })
    }
}
