//! Upper confidence bounds on a mean of `[0, 1]`-valued losses.

use core::fmt;

use crate::error::{invalid, Result};

/// Which concentration bound turns empirical risk into an upper confidence bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundKind {
    Hoeffding,
    #[default]
    HoeffdingBentkus,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Hoeffding => "hoeffding",
            BoundKind::HoeffdingBentkus => "hoeffding-bentkus",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "hoeffding" => Ok(BoundKind::Hoeffding),
            "hoeffding-bentkus" | "hb" => Ok(BoundKind::HoeffdingBentkus),
            other => invalid(alloc::format!("unknown bound kind `{other}`")),
        }
    }

    pub fn ucb(&self, mean: f64, n: usize, delta: f64) -> Result<f64> {
        match self {
            BoundKind::Hoeffding => hoeffding_ucb(mean, n, delta),
            BoundKind::HoeffdingBentkus => hb_ucb(mean, n, delta),
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check(mean: f64, n: usize, delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mean) {
        return invalid(alloc::format!("mean {mean} outside [0, 1]"));
    }
    if n == 0 {
        return invalid("sample size must be at least 1");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(alloc::format!("delta {delta} outside (0, 1)"));
    }
    Ok(())
}

/// `mean + sqrt(ln(1/delta) / 2n)`, capped at 1.
pub fn hoeffding_ucb(mean: f64, n: usize, delta: f64) -> Result<f64> {
    check(mean, n, delta)?;
    Ok((mean + libm::sqrt(libm::log(1.0 / delta) / (2.0 * n as f64))).min(1.0))
}

/// Binary-search tolerance for [`hb_ucb`].
pub const HB_TOLERANCE: f64 = 1e-9;

/// Hoeffding-Bentkus upper confidence bound.
///
/// The smallest `r` in `[mean, 1]` whose tail probability
///
/// ```text
/// p(r) = min( exp(-n h1(min(mean, r), r)),  e * P[Binomial(n, r) <= ceil(n mean)] )
/// h1(a, b) = a ln(a/b) + (1 - a) ln((1 - a)/(1 - b))
/// ```
///
/// is at most `delta`. `p` is nonincreasing in `r`, so the root is bracketed
/// by bisection down to [`HB_TOLERANCE`]; the upper end of the bracket is
/// returned.
pub fn hb_ucb(mean: f64, n: usize, delta: f64) -> Result<f64> {
    check(mean, n, delta)?;
    if mean >= 1.0 {
        return Ok(1.0);
    }
    let successes = ceil_count(n as f64 * mean).min(n as u64);
    let tail = BinomialTail::new(n as u64, successes);
    let p = |r: f64| -> f64 {
        let hoeffding = libm::exp(-(n as f64) * kl_bernoulli(mean.min(r), r));
        let bentkus = core::f64::consts::E * tail.cdf(r);
        hoeffding.min(bentkus)
    };
    let (mut lo, mut hi) = (mean, 1.0);
    while hi - lo > HB_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if p(mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `ceil(x)`, treating values within 1e-9 of an integer as that integer so
/// that `n * (k / n)` maps back to `k`.
fn ceil_count(x: f64) -> u64 {
    let r = libm::round(x);
    if (x - r).abs() < 1e-9 {
        r as u64
    } else {
        libm::ceil(x) as u64
    }
}

/// Bernoulli relative entropy `h1(a, b)`, with `0 ln 0 = 0`.
pub(crate) fn kl_bernoulli(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| if x <= 0.0 { 0.0 } else { x * libm::log(x / y) };
    term(a, b) + term(1.0 - a, 1.0 - b)
}

/// `P[Binomial(n, r) <= k]` for fixed `n, k` as a function of `r`.
///
/// Terms are summed in log space from the side of the tail that decreases
/// geometrically and truncated once they stop contributing, so each
/// evaluation costs roughly `O(sqrt(n))`.
pub(crate) struct BinomialTail {
    n: u64,
    k: u64,
    ln_choose_k: f64,
    ln_choose_k1: f64,
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (1..=k)
        .map(|i| libm::log((n - k + i) as f64 / i as f64))
        .sum()
}

impl BinomialTail {
    pub(crate) fn new(n: u64, k: u64) -> Self {
        let ln_choose_k = ln_choose(n, k.min(n));
        let ln_choose_k1 = if k < n { ln_choose(n, k + 1) } else { 0.0 };
        Self {
            n,
            k,
            ln_choose_k,
            ln_choose_k1,
        }
    }

    pub(crate) fn cdf(&self, r: f64) -> f64 {
        let (n, k) = (self.n, self.k);
        if k >= n || r <= 0.0 {
            return 1.0;
        }
        if r >= 1.0 {
            return 0.0;
        }
        let (ln_r, ln_q) = (libm::log(r), libm::log(1.0 - r));
        let ln_odds = ln_q - ln_r;
        let mode = (n as f64 + 1.0) * r;
        if (k as f64) < mode {
            // lower tail, terms shrink as j decreases from k
            let ln_top = self.ln_choose_k + k as f64 * ln_r + (n - k) as f64 * ln_q;
            let mut sum = 1.0f64;
            let mut ln_rel = 0.0f64;
            let mut j = k;
            while j > 0 {
                ln_rel += libm::log(j as f64 / (n - j + 1) as f64) + ln_odds;
                let rel = libm::exp(ln_rel);
                sum += rel;
                j -= 1;
                if rel < sum * 1e-17 {
                    break;
                }
            }
            (libm::exp(ln_top) * sum).min(1.0)
        } else {
            // 1 - upper tail, terms shrink as j increases from k + 1
            let k1 = k + 1;
            let ln_bottom = self.ln_choose_k1 + k1 as f64 * ln_r + (n - k1) as f64 * ln_q;
            let mut sum = 1.0f64;
            let mut ln_rel = 0.0f64;
            let mut j = k1;
            while j < n {
                ln_rel += libm::log((n - j) as f64 / (j + 1) as f64) - ln_odds;
                let rel = libm::exp(ln_rel);
                sum += rel;
                j += 1;
                if rel < sum * 1e-17 {
                    break;
                }
            }
            (1.0 - libm::exp(ln_bottom) * sum).clamp(0.0, 1.0)
        }
    }
}
