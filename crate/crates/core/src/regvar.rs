//! Regularly varying tails: the law of the return time, the rate function
//! `R(k)` solving `k·L(R)/R^α = 1`, its integer inverse `N(t)`, and
//! truncated moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Slowly varying part `L` of the tail `P(τ > t) = L(t)/t^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum SlowPart {
    /// `L(t) = c`.
    #[serde(rename = "const")]
    Constant { c: f64 },
    /// `L(t) = c·(1 + ln t)^beta`, `t ≥ 1`.
    #[serde(rename = "logpow")]
    LogPower { c: f64, beta: f64 },
}

impl SlowPart {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            SlowPart::Constant { c } => c,
            SlowPart::LogPower { c, beta } => c * (1.0 + t.max(1.0).ln()).powf(beta),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TailModelRepr {
    alpha: f64,
    slow: SlowPart,
    t_min: f64,
}

/// Law of a positive return time with `P(τ > t) = min(1, L(t)/t^α)`.
///
/// The tail equals one below `t_min`, so every model is a proper
/// probability law with support `[t_min, ∞)` and no atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TailModelRepr")]
pub struct TailModel {
    alpha: f64,
    slow: SlowPart,
    t_min: f64,
}

impl TryFrom<TailModelRepr> for TailModel {
    type Error = Error;

    fn try_from(r: TailModelRepr) -> Result<Self> {
        TailModel::new(r.alpha, r.slow, r.t_min)
    }
}

impl TailModel {
    /// Validates an explicit `(alpha, slow, t_min)` triple.
    pub fn new(alpha: f64, slow: SlowPart, t_min: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0,1), got {alpha}")));
        }
        match slow {
            SlowPart::Constant { c } | SlowPart::LogPower { c, .. } if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::config("slow.c", format!("must be positive, got {c}")));
            }
            _ => {}
        }
        if !(t_min >= 1.0 && t_min.is_finite()) {
            return Err(Error::config("t_min", format!("must be ≥ 1, got {t_min}")));
        }
        if let SlowPart::LogPower { beta, .. } = slow {
            if 1.0 + t_min.ln() < beta / alpha - 1e-12 {
                return Err(Error::config(
                    "t_min",
                    "tail is not monotone beyond t_min (need 1 + ln t_min ≥ beta/alpha)",
                ));
            }
        }
        let m = TailModel { alpha, slow, t_min };
        let edge = m.raw_tail(t_min);
        if (edge - 1.0).abs() > 1e-10 {
            return Err(Error::config(
                "t_min",
                format!("L(t_min)/t_min^alpha must equal 1, got {edge}"),
            ));
        }
        Ok(m)
    }

    /// Pure power tail `c/t^α` on `[c^{1/α}, ∞)`.
    pub fn pareto(alpha: f64, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::config("slow.c", "must be positive"));
        }
        TailModel::new(alpha, SlowPart::Constant { c }, c.powf(1.0 / alpha).max(1.0))
            .or_else(|_| Err(Error::config("slow.c", "c^{1/alpha} must be ≥ 1")))
    }

    /// Tail `c(1+ln t)^β/t^α`, with `t_min` solved so the law is proper.
    pub fn log_power(alpha: f64, c: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config("alpha", "must lie in (0,1)"));
        }
        let slow = SlowPart::LogPower { c, beta };
        let start = (beta / alpha - 1.0).exp().max(1.0);
        let raw = |t: f64| slow.eval(t) / t.powf(alpha);
        if raw(start) < 1.0 {
            return Err(Error::config(
                "slow.c",
                "tail is below one where it starts decreasing; no proper normalization",
            ));
        }
        let mut lo = start.ln();
        let mut hi = lo + 1.0;
        while raw(hi.exp()) > 1.0 {
            hi += 2.0 * (hi - lo);
            if hi > 700.0 {
                return Err(Error::numeric("t_min bracket overflow"));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if raw(mid.exp()) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t_min = if raw(hi.exp()) == 1.0 { hi.exp() } else { lo.exp() };
        Ok(TailModel { alpha, slow, t_min })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn slow_part(&self) -> SlowPart {
        self.slow
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    /// `L(t)`.
    pub fn slow(&self, t: f64) -> f64 {
        self.slow.eval(t)
    }

    fn raw_tail(&self, t: f64) -> f64 {
        self.slow.eval(t) / t.powf(self.alpha)
    }

    /// `P(τ > t)`.
    pub fn tail(&self, t: f64) -> f64 {
        if t <= self.t_min {
            1.0
        } else {
            self.raw_tail(t).min(1.0)
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        1.0 - self.tail(t)
    }

    /// `P(a < τ ≤ b)`, accurate when both tails are small.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.tail(a) - self.tail(b)).max(0.0)
    }

    /// Probability density on `(t_min, ∞)`.
    pub fn density(&self, t: f64) -> f64 {
        if t < self.t_min {
            return 0.0;
        }
        let a = self.alpha;
        match self.slow {
            SlowPart::Constant { c } => a * c * t.powf(-a - 1.0),
            SlowPart::LogPower { c, beta } => {
                let g = 1.0 + t.ln();
                c * t.powf(-a - 1.0) * g.powf(beta - 1.0) * (a * g - beta)
            }
        }
    }

    /// The `t` with `P(τ > t) = u`, `u ∈ (0, 1]`.
    pub fn upper_quantile(&self, u: f64) -> f64 {
        if u >= 1.0 {
            return self.t_min;
        }
        match self.slow {
            SlowPart::Constant { c } => (c / u).powf(1.0 / self.alpha),
            SlowPart::LogPower { .. } => {
                let mut lo = self.t_min.ln();
                let mut hi = lo + 1.0;
                while self.tail(hi.exp()) > u && hi < 700.0 {
                    hi += 2.0 * (hi - lo);
                }
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.tail(mid.exp()) > u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (0.5 * (lo + hi)).exp()
            }
        }
    }

    /// `R(k)`: the root of `k·L(x)/x^α = 1`.
    pub fn rate(&self, k: f64) -> Result<f64> {
        rate_r(self, k)
    }

    /// `N(t)`: the least integer `n` with `R(n) ≥ t`.
    pub fn counting(&self, t: f64) -> Result<u64> {
        counting_n(self, t)
    }

    /// `E[τ; τ ≤ h]`.
    pub fn truncated_mean(&self, h: f64) -> Result<f64> {
        truncated_mean(self, h)
    }

    /// `E[τ; a < τ ≤ b]` for `t_min ≤ a ≤ b`.
    pub fn partial_moment(&self, a: f64, b: f64) -> Result<f64> {
        let a = a.max(self.t_min);
        if b <= a {
            return Ok(0.0);
        }
        match self.slow {
            SlowPart::Constant { c } => {
                let e = 1.0 - self.alpha;
                Ok(c * self.alpha / e * (b.powf(e) - a.powf(e)))
            }
            SlowPart::LogPower { .. } => {
                // ∫_a^b x dF = a S(a) − b S(b) + ∫_a^b S
                let body = quad::gauss_kronrod(
                    |u| {
                        let x = u.exp();
                        self.tail(x) * x
                    },
                    a.ln(),
                    b.ln(),
                    1e-300,
                    1e-13,
                )?;
                Ok(a * self.tail(a) - b * self.tail(b) + body)
            }
        }
    }
}

/// `P(τ > t)` for `t ≥ 0`.
pub fn tail_prob(model: &TailModel, t: f64) -> f64 {
    model.tail(t)
}

/// Solves `k·L(x)/x^α = 1` for `x ≥ t_min`.
pub fn rate_r(model: &TailModel, k: f64) -> Result<f64> {
    if !(k >= 1.0) || !k.is_finite() {
        return Err(Error::domain(format!("rate_R needs k ≥ 1, got {k}")));
    }
    let a = model.alpha;
    match model.slow {
        SlowPart::Constant { c } => Ok((c * k).powf(1.0 / a)),
        SlowPart::LogPower { .. } => {
            let target = k.ln();
            let h = |lx: f64| a * lx - model.slow(lx.exp()).ln();
            let mut lo = model.t_min.ln();
            if h(lo) >= target {
                return Ok(model.t_min);
            }
            let mut hi = lo + (target / a).max(1.0);
            let mut grow = 0;
            while h(hi) < target {
                hi += (hi - lo).max(1.0);
                grow += 1;
                if grow > 60 {
                    return Err(Error::numeric("rate_R bracket failed; degenerate slow part"));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    return Ok(mid.exp());
                }
                if h(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Err(Error::numeric("rate_R bisection did not converge in 200 iterations"))
        }
    }
}

/// Least integer `n ≥ 1` with `R(n) ≥ t`.
pub fn counting_n(model: &TailModel, t: f64) -> Result<u64> {
    let r1 = rate_r(model, 1.0)?;
    if !(t >= r1) {
        return Err(Error::domain(format!("counting_N needs t ≥ R(1) = {r1}, got {t}")));
    }
    let guess = (t.powf(model.alpha) / model.slow(t)).ceil().max(1.0);
    let reaches = |n: u64| -> Result<bool> { Ok(rate_r(model, n as f64)? >= t) };
    // bracket: lo fails (or is 0), hi succeeds
    let mut hi = guess as u64;
    let mut lo;
    if reaches(hi)? {
        let mut step = 1u64;
        lo = hi.saturating_sub(step);
        while lo >= 1 && reaches(lo)? {
            hi = lo;
            step *= 2;
            lo = hi.saturating_sub(step);
        }
    } else {
        lo = hi;
        let mut step = 1u64;
        hi = lo + step;
        while !reaches(hi)? {
            lo = hi;
            step *= 2;
            hi = lo + step;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if mid >= 1 && reaches(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.max(1))
}

/// `E[τ·1{τ ≤ h}]` under the continuous (atom-free) convention.
pub fn truncated_mean(model: &TailModel, h: f64) -> Result<f64> {
    if !(h >= model.t_min) {
        return Err(Error::domain(format!(
            "truncated_mean needs H ≥ t_min = {}, got {h}",
            model.t_min
        )));
    }
    match model.slow {
        SlowPart::Constant { c } => {
            let a = model.alpha;
            Ok((a / (1.0 - a) * (c * h.powf(1.0 - a) - model.t_min)).max(0.0))
        }
        SlowPart::LogPower { .. } => model.partial_moment(model.t_min, h),
    }
}

/// Cached rate function on a geometric grid of `k` with log-log linear
/// interpolation between nodes. Read-only after construction.
#[derive(Debug, Clone)]
pub struct RateFunction {
    model: TailModel,
    log_k: Vec<f64>,
    log_r: Vec<f64>,
}

impl RateFunction {
    /// Nodes at `k = 2^{j/per_octave}` up to `k_max`.
    pub fn new(model: TailModel, k_max: f64, per_octave: usize) -> Result<Self> {
        if !(k_max >= 1.0) || per_octave == 0 {
            return Err(Error::domain("RateFunction needs k_max ≥ 1 and per_octave ≥ 1"));
        }
        let n = (k_max.log2() * per_octave as f64).ceil() as usize + 1;
        let mut log_k = Vec::with_capacity(n);
        let mut log_r = Vec::with_capacity(n);
        for j in 0..n {
            let k = 2f64.powf(j as f64 / per_octave as f64);
            let r = rate_r(&model, k)?;
            log_k.push(k.ln());
            log_r.push(r.ln());
        }
        Ok(RateFunction { model, log_k, log_r })
    }

    pub fn model(&self) -> &TailModel {
        &self.model
    }

    /// Nodes `(k, R(k))`.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.log_k.iter().zip(&self.log_r).map(|(a, b)| (a.exp(), b.exp()))
    }

    /// Largest `|k·L(R)/R^α − 1|` over the nodes.
    pub fn max_residual(&self) -> f64 {
        let a = self.model.alpha;
        self.nodes()
            .map(|(k, r)| (k * self.model.slow(r) / r.powf(a) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Interpolated `R(k)`; exact at nodes, solved directly beyond the grid.
    pub fn eval(&self, k: f64) -> Result<f64> {
        if !(k >= 1.0) {
            return Err(Error::domain("k must be ≥ 1"));
        }
        let lk = k.ln();
        let last = *self.log_k.last().expect("nonempty grid");
        if lk > last {
            return rate_r(&self.model, k);
        }
        let i = self.log_k.partition_point(|&x| x <= lk);
        if i == 0 {
            return Ok(self.log_r[0].exp());
        }
        if i >= self.log_k.len() {
            return Ok(self.log_r[self.log_r.len() - 1].exp());
        }
        let (k0, k1) = (self.log_k[i - 1], self.log_k[i]);
        let w = (lk - k0) / (k1 - k0);
        Ok((self.log_r[i - 1] * (1.0 - w) + self.log_r[i] * w).exp())
    }
}
