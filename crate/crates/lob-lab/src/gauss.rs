//! Standard-normal primitives, the Mills ratio and its inverse, and the
//! closed-form posting objectives for Gaussian price increments.
//!
//! The objectives are the expected relative profit of a limit order versus
//! marking to market: `sell_objective` is E[(p - x - xi) 1{xi > p}] and
//! `buy_objective` is E[(x - p + xi) 1{xi < p}] for xi ~ N(mean, std^2).
//! Both are evaluated in closed form; quadrature appears only in test oracles.

use crate::error::Error;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_94; // 1/sqrt(2 pi)
/// Mills ratio at zero, sqrt(pi/2).
pub const MILLS_AT_ZERO: f64 = 1.253_314_137_315_500_251_2;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// phi(x) = exp(-x^2/2)/sqrt(2 pi)
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// F(x), via the complementary error function.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// 1 - F(x), relatively accurate deep into the upper tail.
#[inline]
pub fn std_normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

// Above this point the tail/density quotient is replaced by the Gauss
// continued fraction, which stays finite long after erfc underflows.
const MILLS_CF_SWITCH: f64 = 6.0;

/// Gauss continued fraction 1/(p + 1/(p + 2/(p + 3/(p + ...)))), p > 0,
/// evaluated by the modified Lentz algorithm.
fn mills_continued_fraction(p: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = p.max(TINY);
    let mut c = f;
    let mut d = 0.0_f64;
    for k in 1..=500_usize {
        let a = k as f64;
        d = p + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = p + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// Mills ratio (1 - F(p)) / f(p). Strictly decreasing on all of R, with
/// range (0, inf); returns `inf` once the density underflows (p < -38).
pub fn mills_ratio(p: f64) -> f64 {
    if p > MILLS_CF_SWITCH {
        mills_continued_fraction(p)
    } else {
        std_normal_tail(p) / std_normal_pdf(p)
    }
}

/// Inverse of the Mills ratio: the unique p with `mills_ratio(p) = y`.
///
/// Bracketed Newton iteration. The bracket is `[0, 1/y]` or `[-y, 0]`
/// depending on which side of `mills_ratio(0)` the target lies; both ends
/// are valid for every y > 0 because Mills(p) < 1/p for p > 0 and
/// Mills(-y) > y for y > 0.
pub fn mills_inverse(y: f64) -> Result<f64, Error> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::validation(format!(
            "mills_inverse requires a positive finite argument, got {y}"
        )));
    }
    let (mut lo, mut hi) = if y < MILLS_AT_ZERO {
        (0.0, 1.0 / y)
    } else {
        (-y, 0.0)
    };
    // Asymptotic starting points keep Newton quadratic even when the
    // bracket is enormous (y near 0 or very large).
    let mut p = if y < 0.05 {
        1.0 / y - y
    } else if y > 1e3 {
        -(2.0 * (y * INV_SQRT_2PI).ln()).sqrt()
    } else {
        0.5 * (lo + hi)
    };
    // Newton on ln Mills: the ratio is a pure exponential on the far left,
    // where plain Newton would crawl by 1/|p| per step.
    let ln_y = y.ln();
    for _ in 0..200 {
        let m = mills_ratio(p);
        if m > y {
            lo = p;
        } else {
            hi = p;
        }
        let slope = p - 1.0 / m; // d/dp ln mills_ratio(p), < 0 everywhere
        let mut next = p - (m.ln() - ln_y) / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - p).abs() <= 1e-15 * (1.0 + p.abs()) {
            return Ok(next);
        }
        p = next;
    }
    Ok(p)
}

/// One fundamental-price increment: N(mean, std^2) in price units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GaussianIncrement {
    mean: f64,
    std: f64,
}

impl GaussianIncrement {
    pub fn new(mean: f64, std: f64) -> Result<Self, Error> {
        if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
            return Err(Error::validation(format!(
                "GaussianIncrement requires finite mean and std > 0, got mean={mean}, std={std}"
            )));
        }
        Ok(GaussianIncrement { mean, std })
    }

    #[inline]
    pub fn mean(&self) -> f64 {
        self.mean
    }

    #[inline]
    pub fn std(&self) -> f64 {
        self.std
    }
}

/// E[(p - x - xi) 1{xi > p}] = (p - x - m) (1 - F(d)) - s f(d), d = (p - m)/s.
pub fn sell_objective(p: f64, x: f64, inc: GaussianIncrement) -> f64 {
    debug_assert!(p.is_finite() && x.is_finite());
    let d = (p - inc.mean) / inc.std;
    (p - x - inc.mean) * std_normal_tail(d) - inc.std * std_normal_pdf(d)
}

/// E[(x - p + xi) 1{xi < p}] = (x - p + m) F(d) - s f(d), d = (p - m)/s.
///
/// Satisfies the mirror identity
/// `buy_objective(p, x, (m, s)) = sell_objective(-p, -x, (-m, s))`.
pub fn buy_objective(p: f64, x: f64, inc: GaussianIncrement) -> f64 {
    debug_assert!(p.is_finite() && x.is_finite());
    let d = (p - inc.mean) / inc.std;
    (x - p + inc.mean) * std_normal_cdf(d) - inc.std * std_normal_pdf(d)
}

/// Outcome of maximizing a posting objective over the price level.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum MaximizerResult {
    /// Unique interior maximizer and the objective value there.
    Interior { price: f64, value: f64 },
    /// The objective is negative for every finite price; its supremum
    /// (always 0) is approached as the price runs away from the book.
    NoFiniteMaximizer { supremum: f64 },
}

impl MaximizerResult {
    pub fn interior(&self) -> Option<(f64, f64)> {
        match *self {
            MaximizerResult::Interior { price, value } => Some((price, value)),
            MaximizerResult::NoFiniteMaximizer { .. } => None,
        }
    }
}

/// Maximize `sell_objective(., x, inc)` over the price.
///
/// Stationarity reads Mills((p - m)/s) = -x/s, so a finite maximizer exists
/// iff x < 0; for x >= 0 the objective is strictly negative everywhere and
/// increases towards 0 as p -> +inf.
pub fn sell_objective_maximizer(x: f64, inc: GaussianIncrement) -> MaximizerResult {
    assert!(x.is_finite(), "continuation value must be finite");
    if x >= 0.0 {
        return MaximizerResult::NoFiniteMaximizer { supremum: 0.0 };
    }
    let d = mills_inverse(-x / inc.std).expect("-x/s > 0");
    let price = inc.mean + inc.std * d;
    MaximizerResult::Interior {
        price,
        value: sell_objective(price, x, inc),
    }
}

/// Mirror of [`sell_objective_maximizer`]: finite maximizer iff x > 0, at
/// p = m - s Mills^{-1}(x/s).
pub fn buy_objective_maximizer(x: f64, inc: GaussianIncrement) -> MaximizerResult {
    assert!(x.is_finite(), "continuation value must be finite");
    if x <= 0.0 {
        return MaximizerResult::NoFiniteMaximizer { supremum: 0.0 };
    }
    let d = mills_inverse(x / inc.std).expect("x/s > 0");
    let price = inc.mean - inc.std * d;
    MaximizerResult::Interior {
        price,
        value: buy_objective(price, x, inc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inc(mean: f64, std: f64) -> GaussianIncrement {
        GaussianIncrement::new(mean, std).unwrap()
    }

    /// Trapezoidal quadrature of E[(p - x - xi) 1{xi > p}]; the independent
    /// oracle for the closed form. Step 1e-5 in normalized units.
    fn sell_objective_quadrature(p: f64, x: f64, m: f64, s: f64) -> f64 {
        let lo = (p - m) / s;
        let hi = lo.max(0.0) + 14.0;
        let n = ((hi - lo) / 1e-5).ceil() as usize;
        let h = (hi - lo) / n as f64;
        let f = |d: f64| (m + s * d + x - p) * std_normal_pdf(d);
        // integrand of -E[...] in normalized units; flip sign at the end
        let mut acc = 0.5 * (f(lo) + f(hi));
        for k in 1..n {
            acc += f(lo + h * k as f64);
        }
        -(acc * h)
    }

    #[test]
    fn pdf_reference_values() {
        assert!((std_normal_pdf(0.0) - 0.3989422804014327).abs() < 1e-16);
        assert!((std_normal_pdf(1.0) - 0.24197072451914337).abs() / 0.242 < 1e-14);
        assert_eq!(std_normal_pdf(1.0), std_normal_pdf(-1.0));
        // arbitrary-precision value of exp(-50)/sqrt(2 pi)
        assert!((std_normal_pdf(10.0) - 7.694598626706419e-23).abs() / 7.69e-23 < 1e-13);
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!(std_normal_cdf(8.0) > 1.0 - 1e-14 && std_normal_cdf(8.0) < 1.0);
        for k in -40..=40 {
            let x = 0.15 * k as f64;
            assert!((std_normal_cdf(x) + std_normal_cdf(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tail_keeps_relative_accuracy() {
        // 1 - F(20) = erfc(20/sqrt(2))/2; reference from the asymptotic series
        let q20 = std_normal_tail(20.0);
        assert!(q20 > 0.0);
        let phi20 = std_normal_pdf(20.0);
        assert!((q20 / phi20 - mills_ratio(20.0)).abs() / mills_ratio(20.0) < 1e-12);
    }

    #[test]
    fn mills_reference_values() {
        assert!((mills_ratio(0.0) - 1.2533141373155003).abs() < 1e-15);
        // asymptotic bracket at p = 20
        let m20 = mills_ratio(20.0);
        assert!(m20 > 1.0 / 20.1 && m20 < 1.0 / 20.0);
        // quadrature oracle value for p = -5 (see note: the tail is ~1 here,
        // so Mills is essentially 1/phi(5))
        assert!((mills_ratio(-5.0) - 672_621.637).abs() / 672_621.637 < 1e-9);
    }

    #[test]
    fn mills_is_strictly_decreasing_and_bracketed() {
        let mut prev = f64::INFINITY;
        for k in -120..=360 {
            let p = 0.05 * k as f64;
            let m = mills_ratio(p);
            assert!(m > 0.0);
            assert!(m < prev, "not decreasing at p={p}");
            prev = m;
            if p >= 3.0 {
                assert!(m > 1.0 / (p + 1.0 / p) && m < 1.0 / p, "bracket fails at p={p}");
            }
        }
    }

    #[test]
    fn mills_branches_agree_at_the_switch() {
        for p in [5.5_f64, 5.9, 6.0, 6.1, 6.5, 8.0, 12.0] {
            let direct = std_normal_tail(p) / std_normal_pdf(p);
            let cf = mills_continued_fraction(p);
            assert!((direct - cf).abs() / direct < 5e-14, "seam mismatch at p={p}");
        }
    }

    #[test]
    fn mills_inverse_reference_values() {
        assert!(mills_inverse(1.2533141373155003).unwrap().abs() < 1e-12);
        // bisection oracle on the quadrature Mills gives 0.302630840711573
        assert!((mills_inverse(1.0).unwrap() - 0.302630840711573).abs() < 1e-10);
        assert!(mills_inverse(0.0).is_err());
        assert!(mills_inverse(-1.0).is_err());
        assert!(mills_inverse(f64::NAN).is_err());
    }

    #[test]
    fn mills_inverse_round_trip() {
        for k in -30..=30 {
            let p = 0.1 * k as f64;
            let y = mills_ratio(p);
            let back = mills_inverse(y).unwrap();
            assert!((back - p).abs() < 1e-10, "round trip off at p={p}: {back}");
        }
        // deep posting depths show up near degeneracy
        for y in [1e-6_f64, 1e-3, 0.02, 0.2, 5.0, 1e4] {
            let p = mills_inverse(y).unwrap();
            assert!((mills_ratio(p) - y).abs() / y < 1e-11, "inverse residual at y={y}");
        }
    }

    #[test]
    fn sell_objective_reference_values() {
        // (p - x)(1 - F) = 0 and the truncated first moment at 0 is phi(0)
        let v = sell_objective(0.0, 0.0, inc(0.0, 1.0));
        assert!((v + 0.3989422804014327).abs() < 1e-16);
        // vanishing far from the book
        let far = sell_objective(40.0, -1.0, inc(0.0, 1.0));
        assert!(far > -1e-300 && far <= 0.0);
    }

    #[test]
    fn sell_objective_scaling_law() {
        for (p, x, sigma) in [(0.3, -0.5, 0.2), (1.0, -2.0, 3.0), (-0.2, -0.1, 0.05)] {
            let lhs = sell_objective(p, x, inc(0.0, sigma));
            let rhs = sigma * sell_objective(p / sigma, x / sigma, inc(0.0, 1.0));
            assert!((lhs - rhs).abs() < 1e-14 * (1.0 + lhs.abs()), "scaling at {p},{x},{sigma}");
        }
    }

    #[test]
    fn buy_objective_mirrors_sell() {
        let v = buy_objective(0.0, 0.0, inc(0.0, 1.0));
        assert!((v + 0.3989422804014327).abs() < 1e-16);
        for (p, x, m, s) in [
            (0.5, 1.0, 0.0, 1.0),
            (-0.3, 0.7, 0.02, 0.5),
            (1.3, -0.4, -0.01, 2.0),
        ] {
            let lhs = buy_objective(p, x, inc(m, s));
            let rhs = sell_objective(-p, -x, inc(-m, s));
            assert!((lhs - rhs).abs() < 1e-14 * (1.0 + lhs.abs()));
        }
        // quadrature cross-check of the quoted example
        let direct = buy_objective(0.5, 1.0, inc(0.0, 1.0));
        let oracle = sell_objective_quadrature(-0.5, -1.0, 0.0, 1.0);
        assert!((direct - oracle).abs() < 1e-8);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        // deterministic pseudo-random sample of 100 inputs
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut unit = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let p = -2.0 + 4.0 * unit();
            let x = -2.0 + 4.0 * unit();
            let m = -0.2 + 0.4 * unit();
            let s = 0.2 + 1.8 * unit();
            let cf = sell_objective(p, x, inc(m, s));
            let qd = sell_objective_quadrature(p, x, m, s);
            assert!((cf - qd).abs() < 1e-8, "quadrature mismatch p={p} x={x} m={m} s={s}");
        }
    }

    #[test]
    fn maximizer_matches_grid_search() {
        // grid-search oracle on [-10, 10] step 1e-5
        let i = inc(0.0, 1.0);
        let (mut gp, mut gv) = (0.0, f64::NEG_INFINITY);
        for k in 0..=2_000_000_u64 {
            let p = -10.0 + k as f64 * 1e-5;
            let v = sell_objective(p, -1.0, i);
            if v > gv {
                gv = v;
                gp = p;
            }
        }
        let (price, value) = sell_objective_maximizer(-1.0, i).interior().unwrap();
        assert!((price - gp).abs() < 1e-4, "grid {gp} vs analytic {price}");
        assert!(value >= gv - 1e-9);
        assert!(value > 0.0);
        // frozen from the bisection oracle
        assert!((price - 0.302630840711573).abs() < 1e-10);
    }

    #[test]
    fn maximizer_sentinel_cases() {
        let i = inc(0.0, 1.0);
        assert_eq!(
            sell_objective_maximizer(0.0, i),
            MaximizerResult::NoFiniteMaximizer { supremum: 0.0 }
        );
        assert_eq!(
            buy_objective_maximizer(0.0, i),
            MaximizerResult::NoFiniteMaximizer { supremum: 0.0 }
        );
        // positive drift does not rescue a nonnegative continuation value
        assert_eq!(
            sell_objective_maximizer(0.0, inc(0.5, 1.0)),
            MaximizerResult::NoFiniteMaximizer { supremum: 0.0 }
        );
    }

    #[test]
    fn maximizer_scaling_law() {
        for sigma in [0.25_f64, 1.0, 4.0] {
            let (p_s, _) = sell_objective_maximizer(-0.8 * sigma, inc(0.0, sigma))
                .interior()
                .unwrap();
            let (p_1, _) = sell_objective_maximizer(-0.8, inc(0.0, 1.0)).interior().unwrap();
            assert!((p_s - sigma * p_1).abs() < 1e-12 * sigma);
        }
    }

    #[test]
    fn maximizer_is_unimodal_peak() {
        let i = inc(0.01, 0.5);
        let (p_star, v_star) = sell_objective_maximizer(-0.3, i).interior().unwrap();
        let mut last = f64::NEG_INFINITY;
        for k in -400..=400 {
            let p = p_star + 0.005 * k as f64;
            let v = sell_objective(p, -0.3, i);
            assert!(v <= v_star + 1e-15);
            if k <= 0 {
                assert!(v >= last - 1e-15, "not increasing left of the max");
            } else {
                assert!(v <= last + 1e-15, "not decreasing right of the max");
            }
            last = v;
        }
    }

    #[test]
    fn posting_depth_increases_with_continuation() {
        // p*(x) is increasing in x and runs to -inf as x -> -inf
        let i = inc(0.0, 1.0);
        let mut prev = f64::NEG_INFINITY;
        for k in (0..=40).rev() {
            let x = -(1.07_f64).powi(k) * 20.0; // log-spaced down to ~ -20*1.07^40
            let (p, _) = sell_objective_maximizer(x, i).interior().unwrap();
            assert!(p > prev, "p*(x) not increasing at x={x}");
            prev = p;
        }
        // divergence is logarithmic: p*(x) ~ -sqrt(2 ln |x|)
        let (d6, _) = sell_objective_maximizer(-1e6, i).interior().unwrap();
        let (d12, _) = sell_objective_maximizer(-1e12, i).interior().unwrap();
        let (d300, _) = sell_objective_maximizer(-1e300, i).interior().unwrap();
        assert!(d6 < -4.9 && d12 < d6 && d300 < d12);
        assert!(d300 < -36.0, "p*(x) must keep falling, got {d300}");
    }

    proptest! {
        #[test]
        fn first_order_condition_holds(
            x in -50.0_f64..-1e-3,
            m in -0.5_f64..0.5,
            s in 0.05_f64..5.0,
        ) {
            // keep the posting depth shallow enough that the objective value
            // stays above the f64 underflow threshold
            prop_assume!(x / s <= -0.05 && x / s >= -30.0);
            let i = inc(m, s);
            let (price, value) = sell_objective_maximizer(x, i).interior().unwrap();
            let d = (price - m) / s;
            prop_assert!((mills_ratio(d) + x / s).abs() < 1e-9 * (1.0 + (x / s).abs()));
            let eps = 1e-4 * s;
            prop_assert!(sell_objective(price + eps, x, i) <= value);
            prop_assert!(sell_objective(price - eps, x, i) <= value);
            prop_assert!(value > 0.0);
        }

        #[test]
        fn mirror_identity(
            p in -3.0_f64..3.0,
            x in -3.0_f64..3.0,
            m in -0.5_f64..0.5,
            s in 0.05_f64..5.0,
        ) {
            let lhs = buy_objective(p, x, inc(m, s));
            let rhs = sell_objective(-p, -x, inc(-m, s));
            prop_assert!((lhs - rhs).abs() < 1e-13 * (1.0 + lhs.abs()));
        }
    }
}
