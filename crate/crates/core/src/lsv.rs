//! The LSV intermittent map `x ↦ x(1 + (2x)^r)` on `[0, ½)`, `x ↦ 2x - 1` on
//! `[½, 1]`, induced on `X = [½, 1]`.
//!
//! Long excursions near the neutral fixed point are not iterated step by
//! step. Near zero the left branch is conjugated to the unit translation by a
//! Fatou coordinate `F` (`F(g(y)) = F(y) + 1`), expanded in `w = y^{-r}` as
//! `F = -w/s + β ln w + Σ b_k w^{-k}` with `s = r·2^r`. An excursion of `m`
//! left steps then costs one evaluation of `F`, one inversion, and a fixed
//! number of exact steps at its end.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Terms kept in the Fatou series.
const SERIES_TERMS: usize = 10;
/// Step cap for plain orbit iteration.
pub const STEP_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Branch {
    Square,
    ThreeHalves,
    General,
}

/// Roof over the full interval, `τ̃ > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RoofSpec {
    /// `τ̃(x) = p + q·x`.
    Affine { p: f64, q: f64 },
    /// Piecewise constant: `values[i]` on `[breaks[i-1], breaks[i])`, with
    /// `breaks` increasing in `(0, 1)`. `holder` is recorded for reports.
    Table { breaks: Vec<f64>, values: Vec<f64>, holder: f64 },
}

impl RoofSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RoofSpec::Affine { p, q } => {
                if !(*p > 0.0 && p + q > 0.0) {
                    return Err(Error::config("roof", "affine roof must be positive on [0, 1]"));
                }
            }
            RoofSpec::Table { breaks, values, holder } => {
                if values.len() != breaks.len() + 1 {
                    return Err(Error::config("roof.values", "need one more value than breakpoints"));
                }
                if values.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::config("roof.values", "roof must be positive"));
                }
                if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
                    return Err(Error::config("roof.breaks", "breakpoints must increase inside (0, 1)"));
                }
                if !(*holder > 0.0 && *holder <= 1.0) {
                    return Err(Error::config("roof.holder", "exponent must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            RoofSpec::Affine { p, q } => p + q * x,
            RoofSpec::Table { breaks, values, .. } => values[breaks.partition_point(|b| *b <= x)],
        }
    }

    pub fn min_value(&self) -> f64 {
        match self {
            RoofSpec::Affine { p, q } => p.min(p + q),
            RoofSpec::Table { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// The constant roof `τ̃ ≡ 1`, whose induced roof is the return time.
    pub fn unit() -> Self {
        RoofSpec::Affine { p: 1.0, q: 0.0 }
    }
}

/// One application of the induced map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InducedStep {
    /// Return time `R(x)`.
    pub ret: u64,
    /// `f(x) = f̃^{R(x)}(x)`.
    pub next: f64,
    /// Induced roof `Σ_{i<R} τ̃(f̃^i x)`, when a roof was supplied.
    pub roof: f64,
}

#[derive(Debug, Clone)]
pub struct LsvSystem {
    r: f64,
    branch: Branch,
    s: f64,
    beta: f64,
    b: [f64; SERIES_TERMS + 1],
    /// `y[n]`, `n = 0..=n_max`, with `y[0] = 1`, `y[1] = ½`.
    y: Vec<f64>,
    n_max: usize,
    /// Excursions end with this many exact steps.
    tail_steps: usize,
    /// `F` is used only for `y` at or below this value.
    y_switch: f64,
}

/// Resolution of the Fatou coordinate below which its fraction is dithered.
const DITHER_ULP: f64 = 1.0 / (1u64 << 20) as f64;

/// Uniform value in `[0, 1)` from a 64-bit key (splitmix64 finalizer).
fn unit_hash(key: u64) -> f64 {
    let mut z = key.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn binom(x: f64, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (x - i as f64) / (i + 1) as f64)
}

impl LsvSystem {
    /// Builds the system and its cylinder boundaries `y_0 .. y_{n_max}`.
    pub fn new(r: f64, n_max: usize) -> Result<Self> {
        if !(r > 1.0) || !r.is_finite() {
            return Err(Error::config("r", format!("must exceed 1, got {r}")));
        }
        if n_max < 1 {
            return Err(Error::config("n_max", "must be at least 1"));
        }
        let branch = if r == 2.0 {
            Branch::Square
        } else if r == 1.5 {
            Branch::ThreeHalves
        } else {
            Branch::General
        };
        let a = 2f64.powf(r);
        let s = r * a;
        let beta = -(r + 1.0) / (2.0 * r);
        let mut b = [0.0; SERIES_TERMS + 1];
        for n in 2..=SERIES_TERMS + 1 {
            let mut acc = -binom(-r, n + 1) * a.powi(n as i32 + 1) / s
                - r * beta * if n % 2 == 1 { 1.0 } else { -1.0 } * a.powi(n as i32) / n as f64;
            for (k, bk) in b.iter().enumerate().take(n - 1).skip(1) {
                acc += bk * binom(r * k as f64, n - k) * a.powi((n - k) as i32);
            }
            b[n - 1] = -acc / ((n - 1) as f64 * s);
        }
        let tail_steps = (64.0 * (r / 1.5).max(1.0)).ceil() as usize;
        let w_switch = s * tail_steps as f64;
        let mut sys = LsvSystem {
            r,
            branch,
            s,
            beta,
            b,
            y: Vec::new(),
            n_max: 0,
            tail_steps,
            y_switch: w_switch.powf(-1.0 / r),
        };
        // the table reaches past the switch point so every y below its end
        // is handled by F
        let n_table = n_max.max(4 * tail_steps);
        let mut y = Vec::with_capacity(n_table + 1);
        y.push(1.0);
        y.push(0.5);
        for n in 1..n_table {
            let next = sys.left_inverse(y[n])?;
            y.push(next);
        }
        sys.y = y;
        sys.n_max = n_table;
        Ok(sys)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Tail index `1/r` of the return time.
    pub fn alpha(&self) -> f64 {
        1.0 / self.r
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `y_n` for `n ≤ n_max`.
    pub fn y(&self, n: usize) -> f64 {
        self.y[n]
    }

    /// `x_n = (1 + y_{n-1})/2`, `x_1 = 1`, `n ≤ n_max + 1`.
    pub fn x(&self, n: usize) -> f64 {
        assert!(n >= 1);
        0.5 * (1.0 + self.y[n - 1])
    }

    pub fn boundaries_y(&self) -> &[f64] {
        &self.y
    }

    /// Left branch `g(y) = y(1 + (2y)^r)`.
    #[inline]
    pub fn left(&self, y: f64) -> f64 {
        let t = 2.0 * y;
        let p = match self.branch {
            Branch::Square => t * t,
            Branch::ThreeHalves => t * t.sqrt(),
            Branch::General => t.powf(self.r),
        };
        y + y * p
    }

    /// The map on `[0, 1]`; `x = ½` takes the right branch.
    pub fn map_apply(&self, x: f64) -> f64 {
        if x < 0.5 {
            self.left(x)
        } else {
            2.0 * x - 1.0
        }
    }

    /// Inverse of the left branch on `[0, 1]`.
    pub fn left_inverse(&self, v: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("left-branch inverse needs v in [0,1], got {v}")));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0f64, v.min(0.5));
        // g(y) = y + 2^r y^{r+1} ≥ y, so the root lies in [v/(1 + (2v)^r), v]
        lo = lo.max(v / (1.0 + (2.0 * v).powf(self.r)));
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let gy = self.left(y) - v;
            if gy > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let d = 1.0 + (self.r + 1.0) * (2.0 * y).powf(self.r);
            let mut next = y - gy / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() <= 1e-17 * y || hi - lo <= 4.0 * f64::EPSILON * hi {
                // polish: pick the better of the two neighbours
                let cand = [next, lo, hi];
                let best = cand
                    .iter()
                    .copied()
                    .min_by(|p, q| (self.left(*p) - v).abs().total_cmp(&(self.left(*q) - v).abs()))
                    .unwrap();
                return Ok(best);
            }
            y = next;
        }
        Err(Error::numeric(format!("left-branch inverse failed to converge at {v}")))
    }

    /// Fatou coordinate in the variable `w = y^{-r}`.
    fn fatou_w(&self, w: f64) -> f64 {
        let inv = 1.0 / w;
        let mut series = 0.0;
        for k in (1..=SERIES_TERMS).rev() {
            series = (series + self.b[k]) * inv;
        }
        -w / self.s + self.beta * w.ln() + series
    }

    /// `dF/dw`.
    fn fatou_w_prime(&self, w: f64) -> f64 {
        let inv = 1.0 / w;
        let mut series = 0.0;
        for k in (1..=SERIES_TERMS).rev() {
            series = (series - k as f64 * self.b[k]) * inv;
        }
        -1.0 / self.s + self.beta * inv + series * inv
    }

    /// `F(y)`, valid for `0 < y ≤ y_switch`.
    pub fn fatou(&self, y: f64) -> f64 {
        self.fatou_w(y.powf(-self.r))
    }

    /// Largest `y` at which the Fatou coordinate is used.
    pub fn fatou_threshold(&self) -> f64 {
        self.y_switch
    }

    fn fatou_inverse_w(&self, u: f64) -> f64 {
        let mut w = (-self.s * u).max(1.0);
        for _ in 0..4 {
            w -= (self.fatou_w(w) - u) / self.fatou_w_prime(w);
        }
        for _ in 0..60 {
            let dw = (self.fatou_w(w) - u) / self.fatou_w_prime(w);
            w -= dw;
            if dw.abs() <= 2e-16 * w {
                break;
            }
        }
        w
    }

    /// `y` with `F(y) = u`.
    pub fn fatou_inverse(&self, u: f64) -> f64 {
        self.fatou_inverse_w(u).powf(-1.0 / self.r)
    }

    /// Largest deviation `|F(g(y)) - F(y) - 1|` over `y_n`, `n ∈ [n_lo, n_max)`.
    pub fn fatou_residual(&self, n_lo: usize) -> f64 {
        (n_lo.max(1)..self.n_max)
            .filter(|&n| self.y[n] <= self.y_switch && self.left(self.y[n]) <= self.y_switch)
            .map(|n| (self.fatou(self.left(self.y[n])) - self.fatou(self.y[n]) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Number of left steps `m = R(x) - 1` for `y = 2x - 1 ∈ (0, 1]`.
    // beyond about 1.8e19 steps the count saturates at `u64::MAX`
    fn left_steps(&self, y: f64) -> u64 {
        let n_tab = self.n_max;
        if y > self.y[n_tab] {
            // y ∈ (y_n, y_{n-1}] with y decreasing in n
            let n = self.y.partition_point(|&b| b >= y);
            return (n - 1) as u64;
        }
        let u = self.fatou(y) - self.fatou(self.y[n_tab]);
        let n = n_tab as f64 + (-u).floor() + 1.0;
        (n - 1.0) as u64
    }

    fn check_x(x: f64) -> Result<f64> {
        if !(x > 0.5 && x <= 1.0) {
            return Err(Error::domain(format!("point {x} is outside (1/2, 1]")));
        }
        Ok(2.0 * x - 1.0)
    }

    /// First return time to `X`, by boundary lookup.
    pub fn return_time(&self, x: f64) -> Result<u64> {
        let y = Self::check_x(x)?;
        Ok(self.left_steps(y).saturating_add(1))
    }

    /// `∫ y dF` between `w_a` and `w_b`, as a function of `w`.
    fn moment_primitive(&self, w: f64) -> f64 {
        let r = self.r;
        let e = -1.0 / r;
        let mut v = -w.powf(1.0 + e) / (self.s * (1.0 + e)) + self.beta * w.powf(e) / e;
        for k in 1..=SERIES_TERMS {
            let p = -(k as f64) + e;
            v -= k as f64 * self.b[k] * w.powf(p) / p;
        }
        v
    }

    /// `Σ y_i` along the orbit `y_i = F^{-1}(u)`, `u = u0, u0 + 1, …, u1`, by
    /// Euler-Maclaurin; at least two terms.
    fn orbit_sum(&self, u0: f64, u1: f64) -> f64 {
        let (w0, w1) = (self.fatou_inverse_w(u0), self.fatou_inverse_w(u1));
        let (y0, y1) = (w0.powf(-1.0 / self.r), w1.powf(-1.0 / self.r));
        // dy/du = 1 / (dF/dw · dw/dy), dw/dy = -r w^{1+1/r}
        let dydu = |w: f64| 1.0 / (self.fatou_w_prime(w) * (-self.r) * w.powf(1.0 + 1.0 / self.r));
        let integral = self.moment_primitive(w1) - self.moment_primitive(w0);
        integral + 0.5 * (y0 + y1) + (dydu(w1) - dydu(w0)) / 12.0
    }

    /// `F` at the first of the final exact steps of an excursion of `m`
    /// left steps from `y`, i.e. `F(y) + m - tail_steps`. Beyond the table
    /// `m` was read off `F(y)`, so only the fractional part of `F(y)` enters;
    /// this stays exact when `|F(y)|` exceeds `2^53`, where the plain sum
    /// cancels catastrophically.
    fn landing_coordinate(&self, y: f64, u0: f64, m: u64) -> f64 {
        let l = self.tail_steps as f64;
        let n_tab = self.n_max;
        if y > self.y[n_tab] {
            return u0 + (m as f64 - l);
        }
        let f_tab = self.fatou(self.y[n_tab]);
        let neg_d = f_tab - u0;
        let mut frac = neg_d - neg_d.floor();
        let ulp = f64::from_bits(neg_d.abs().to_bits() + 1) - neg_d.abs();
        if ulp >= DITHER_ULP {
            // the low bits of the fraction are below the resolution of `y`;
            // any value is consistent with it, but a coarse fraction lands
            // on cylinder boundaries and traps orbits in spurious cycles
            let h = unit_hash(y.to_bits());
            // `frac` is a multiple of `ulp`, so the sum stays below one
            frac = if ulp >= 1.0 { h } else { frac + ulp * h };
        }
        f_tab + (n_tab as f64 - l) - frac
    }

    /// Induced map and return time, with the induced roof of `roof` if given.
    pub fn induced_step(&self, x: f64, roof: Option<&RoofSpec>) -> Result<InducedStep> {
        let y = Self::check_x(x)?;
        let m = self.left_steps(y);
        let mut total = roof.map_or(0.0, |rf| rf.eval(x));
        let direct_limit = (self.tail_steps + 16) as u64;
        if m <= direct_limit {
            let mut v = y;
            for _ in 0..m {
                if let Some(rf) = roof {
                    total += rf.eval(v);
                }
                v = self.left(v);
            }
            return Ok(InducedStep { ret: m.saturating_add(1), next: v, roof: total });
        }
        let l = self.tail_steps as u64;
        let u0 = self.fatou(y);
        let bulk = m - l;
        let u_land = self.landing_coordinate(y, u0, m);
        let mut v = self.fatou_inverse(u_land);
        if let Some(rf) = roof {
            total += self.bulk_roof(rf, y, u0, u_land - 1.0, bulk)?;
        }
        for _ in 0..l {
            if let Some(rf) = roof {
                total += rf.eval(v);
            }
            v = self.left(v);
        }
        // the last step must land in (½, 1]; nudge a boundary case back
        let v = v.clamp(f64::from_bits(0.5f64.to_bits() + 1), 1.0);
        Ok(InducedStep { ret: m.saturating_add(1), next: v, roof: total })
    }

    /// `Σ_{i<bulk} τ̃(y_i)` over the part of an excursion that stays below
    /// the switch point.
    fn bulk_roof(&self, roof: &RoofSpec, y: f64, u0: f64, u_last: f64, bulk: u64) -> Result<f64> {
        match roof {
            RoofSpec::Affine { p, q } => {
                let sum_y = if bulk == 1 { y } else { self.orbit_sum(u0, u_last) };
                Ok(p * bulk as f64 + q * sum_y)
            }
            RoofSpec::Table { breaks, values, .. } => {
                if breaks.first().is_none_or(|&b0| b0 > self.y_switch) {
                    return Ok(values[0] * bulk as f64);
                }
                let mut v = y;
                let mut total = 0.0;
                for i in 0..bulk {
                    total += roof.eval(v);
                    v = self.left(v);
                    if i > STEP_CAP {
                        return Err(Error::numeric("excursion exceeded the step cap"));
                    }
                }
                Ok(total)
            }
        }
    }

    /// `f(x)` for `x ∈ (½, 1]`.
    pub fn induced_map(&self, x: f64) -> Result<f64> {
        Ok(self.induced_step(x, None)?.next)
    }

    /// Induced roof `τ(x)`.
    pub fn induced_roof(&self, roof: &RoofSpec, x: f64) -> Result<f64> {
        Ok(self.induced_step(x, Some(roof))?.roof)
    }

    /// Return time, image and induced roof by plain iteration of the map.
    pub fn induced_step_direct(&self, x: f64, roof: Option<&RoofSpec>) -> Result<InducedStep> {
        let mut v = Self::check_x(x)?;
        let mut total = roof.map_or(0.0, |rf| rf.eval(x));
        let mut n = 1u64;
        while v < 0.5 {
            if let Some(rf) = roof {
                total += rf.eval(v);
            }
            v = self.left(v);
            n += 1;
            if n > STEP_CAP {
                return Err(Error::numeric(format!(
                    "orbit of {x} did not return within {STEP_CAP} steps"
                )));
            }
        }
        if v == 0.5 {
            // ½ itself lies in X
            return Ok(InducedStep { ret: n, next: v, roof: total });
        }
        Ok(InducedStep { ret: n, next: v, roof: total })
    }

    /// Inverse of the branch on `X_n`: the point of `X_n` mapped to `v ∈ [½, 1]`.
    pub fn inverse_branch(&self, n: u64, v: f64) -> Result<f64> {
        let mut u = v;
        for _ in 1..n {
            u = self.left_inverse(u)?;
        }
        Ok(0.5 * (1.0 + u))
    }

    /// Point of the periodic orbit with itinerary `(n_1, …, n_k)` (first
    /// return times along the orbit) and the flow period, i.e. the induced
    /// roof summed around the orbit.
    pub fn periodic_orbit(&self, itinerary: &[u64], roof: &RoofSpec) -> Result<(f64, f64)> {
        if itinerary.is_empty() || itinerary.contains(&0) {
            return Err(Error::domain("itinerary must be nonempty with entries ≥ 1"));
        }
        let mut x = 0.75;
        for _ in 0..200 {
            let mut v = x;
            for &n in itinerary.iter().rev() {
                v = self.inverse_branch(n, v)?;
            }
            let done = (v - x).abs() <= 1e-16;
            x = v;
            if done {
                break;
            }
        }
        let mut period = 0.0;
        let mut v = x;
        for &n in itinerary {
            let st = self.induced_step_direct(v, Some(roof))?;
            if st.ret != n {
                return Err(Error::numeric("periodic orbit left its cylinder"));
            }
            period += st.roof;
            v = st.next;
        }
        Ok((x, period))
    }
}

/// Histograms collected along induced orbits; merging is associative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitStats {
    pub steps: u64,
    /// Visits to `bins` equal cells of `X`.
    pub bins: Vec<u64>,
    /// `ret_hist[n]` counts return time `n` for `n < ret_hist.len()`.
    pub ret_hist: Vec<u64>,
    pub ret_over: u64,
}

impl OrbitStats {
    pub fn new(bins: usize, ret_cap: usize) -> Self {
        OrbitStats { steps: 0, bins: vec![0; bins], ret_hist: vec![0; ret_cap], ret_over: 0 }
    }

    pub fn merge(mut self, o: &OrbitStats) -> Self {
        self.steps += o.steps;
        self.bins.iter_mut().zip(&o.bins).for_each(|(a, b)| *a += b);
        self.ret_hist.iter_mut().zip(&o.ret_hist).for_each(|(a, b)| *a += b);
        self.ret_over += o.ret_over;
        self
    }

    /// Empirical `μ(R > n)` for `n < ret_hist.len()`.
    pub fn tail_of_return(&self, n: usize) -> f64 {
        let le: u64 = self.ret_hist[..=n.min(self.ret_hist.len() - 1)].iter().sum();
        (self.steps - le) as f64 / self.steps as f64
    }

    /// Normalized bin masses.
    pub fn masses(&self) -> Vec<f64> {
        let tot: u64 = self.bins.iter().sum();
        self.bins.iter().map(|&c| c as f64 / tot as f64).collect()
    }
}

/// Steps per independent orbit segment.
pub const ORBIT_CHUNK: u64 = 1 << 22;
/// Induced steps discarded at the start of each segment.
pub const BURN_IN: u64 = 64;

fn bin_of(x: f64, bins: usize) -> usize {
    (((x - 0.5) * 2.0 * bins as f64) as usize).min(bins - 1)
}

/// Runs `n` induced steps split into independent segments keyed by
/// `(seed, chunk)`; each segment starts from a uniform point and discards a
/// burn-in.
pub fn orbit_stats(sys: &LsvSystem, n: u64, bins: usize, ret_cap: usize, seed: u64) -> Result<OrbitStats> {
    let chunks = n.div_ceil(ORBIT_CHUNK);
    let parts: Vec<OrbitStats> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = ORBIT_CHUNK.min(n - c * ORBIT_CHUNK);
            let mut rng = rng::stream(seed, "lsv-orbit", c);
            let mut st = OrbitStats::new(bins, ret_cap);
            let mut x = 0.5 + 0.5 * (1.0 - rng.random::<f64>());
            for _ in 0..BURN_IN {
                x = sys.induced_map(x)?;
            }
            for _ in 0..len {
                st.bins[bin_of(x, bins)] += 1;
                let step = sys.induced_step(x, None)?;
                match st.ret_hist.get_mut(step.ret as usize) {
                    Some(c) => *c += 1,
                    None => st.ret_over += 1,
                }
                x = step.next;
            }
            st.steps = len;
            Ok(st)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().fold(OrbitStats::new(bins, ret_cap), |a, b| a.merge(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureMethod {
    /// Visit frequencies of `n_orbit` induced steps.
    Birkhoff { n_orbit: u64, seed: u64 },
    /// Dominant left eigenvector of the Ulam matrix on `n_cells` cells.
    Ulam { n_cells: usize, n_iter: usize },
}

/// Invariant probability of the induced map as masses of equal cells of `X`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub masses: Vec<f64>,
    pub method: MeasureMethod,
}

impl MeasureEstimate {
    pub fn total_variation(&self, other: &MeasureEstimate) -> Result<f64> {
        if self.masses.len() != other.masses.len() {
            return Err(Error::domain("measures live on different grids"));
        }
        Ok(0.5 * self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// `μ([lo, hi])` with the boundary cells prorated.
    pub fn mass_of(&self, lo: f64, hi: f64) -> f64 {
        let n = self.masses.len() as f64;
        let (ulo, uhi) = (((lo - 0.5) * 2.0 * n).clamp(0.0, n), ((hi - 0.5) * 2.0 * n).clamp(0.0, n));
        let mut s = 0.0;
        for (i, m) in self.masses.iter().enumerate() {
            let (a, b) = (ulo.max(i as f64), uhi.min(i as f64 + 1.0));
            if b > a {
                s += m * (b - a);
            }
        }
        s
    }
}

pub fn invariant_measure(sys: &LsvSystem, method: MeasureMethod, bins: usize) -> Result<MeasureEstimate> {
    if bins == 0 {
        return Err(Error::config("bins", "must be positive"));
    }
    match method {
        MeasureMethod::Birkhoff { n_orbit, seed } => {
            let st = orbit_stats(sys, n_orbit, bins, 2, seed)?;
            Ok(MeasureEstimate { masses: st.masses(), method })
        }
        MeasureMethod::Ulam { n_cells, n_iter } => {
            if n_cells != bins {
                return Err(Error::config("n_cells", "Ulam cells must match the requested bins"));
            }
            let p = ulam_matrix(sys, n_cells)?;
            let masses = stationary(&p, n_cells, n_iter)?;
            Ok(MeasureEstimate { masses, method })
        }
    }
}

/// Row-stochastic Ulam matrix of the induced map on `cells` equal cells,
/// built from exact preimages of the cell edges under each branch.
///
/// Branches beyond the boundary table share the image distribution of the
/// last tabulated branch; they cover `(½, x_{N+1}]`.
pub fn ulam_matrix(sys: &LsvSystem, cells: usize) -> Result<Vec<f64>> {
    let edges: Vec<f64> = (0..=cells).map(|j| 0.5 + 0.5 * j as f64 / cells as f64).collect();
    let h = 0.5 / cells as f64;
    let mut p = vec![0.0; cells * cells];
    // pre[j] = g^{-(n-1)}(edge_j)
    let mut pre: Vec<f64> = edges.clone();
    let n_last = sys.n_max();
    let mut last_dist = vec![0.0; cells];
    for n in 1..=n_last {
        if n > 1 {
            for v in pre.iter_mut() {
                *v = sys.left_inverse(*v)?;
            }
        }
        for j in 0..cells {
            let (lo, hi) = (0.5 * (1.0 + pre[j]), 0.5 * (1.0 + pre[j + 1]));
            if hi <= lo {
                continue;
            }
            let mut i = bin_of(lo, cells);
            while i < cells && edges[i] < hi {
                let ov = hi.min(edges[i + 1]) - lo.max(edges[i]);
                if ov > 0.0 {
                    p[i * cells + j] += ov / h;
                }
                i += 1;
            }
        }
        if n == n_last {
            let span = pre[cells] - pre[0];
            for j in 0..cells {
                last_dist[j] = (pre[j + 1] - pre[j]) / span;
            }
        }
    }
    // remaining branches: (½, x_{N+1}] = (½, (1 + y_N)/2]
    let top = 0.5 * (1.0 + sys.y(n_last));
    let mut i = 0;
    while i < cells && edges[i] < top {
        let ov = top.min(edges[i + 1]) - edges[i];
        for j in 0..cells {
            p[i * cells + j] += ov / h * last_dist[j];
        }
        i += 1;
    }
    Ok(p)
}

/// Left fixed vector of a row-stochastic matrix by power iteration.
pub fn stationary(p: &[f64], n: usize, n_iter: usize) -> Result<Vec<f64>> {
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..n_iter {
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            let row = &p[i * n..(i + 1) * n];
            for (x, &pij) in next.iter_mut().zip(row) {
                *x += vi * pij;
            }
        }
        let tot: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= tot);
        let diff: f64 = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut v, &mut next);
        if diff < 1e-14 {
            return Ok(v);
        }
    }
    Err(Error::numeric(format!("Ulam power iteration did not converge in {n_iter} steps")))
}

/// One ratio `μ̂(C₁ ∩ f^{-j}C₂) / (μ̂(C₁)μ̂(C₂))` with a confidence band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderRatio {
    pub first: Vec<u64>,
    pub second: Vec<u64>,
    pub joint: u64,
    pub expected: f64,
    pub ratio: f64,
    /// Half-width of the simultaneous confidence band on `ratio`.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QiReport {
    pub depth: usize,
    pub lag: usize,
    pub k_hat: f64,
    pub pairs: Vec<CylinderRatio>,
    /// Pairs whose expected joint count was below the floor.
    pub skipped: usize,
    pub n: usize,
}

impl QiReport {
    /// True when every ratio is within its band of 1.
    pub fn consistent_with_independence(&self) -> bool {
        self.pairs.iter().all(|p| (p.ratio - 1.0).abs() <= p.half_width)
    }
}

/// Minimum expected joint count for a pair to be used.
pub const QI_MIN_EXPECTED: f64 = 1000.0;

fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Quasi-independence constant from a sequence of return times `rets`
/// (`rets[i] = R(f^i x)`): depth-`depth` cylinders are runs of `depth`
/// consecutive return times, compared at lag `lag ≥ depth`.
pub fn qi_constant(rets: &[u32], depth: usize, lag: usize, level: f64) -> Result<QiReport> {
    if depth == 0 || lag < depth {
        return Err(Error::domain("need depth ≥ 1 and lag ≥ depth"));
    }
    if rets.len() < lag + depth + 1 {
        return Err(Error::domain("return-time sequence too short"));
    }
    let n = rets.len() - lag - depth + 1;
    let mut single: HashMap<&[u32], u64> = HashMap::new();
    for i in 0..rets.len() - depth + 1 {
        *single.entry(&rets[i..i + depth]).or_default() += 1;
    }
    let total = (rets.len() - depth + 1) as f64;
    let mut joint: HashMap<(&[u32], &[u32]), u64> = HashMap::new();
    for i in 0..n {
        *joint.entry((&rets[i..i + depth], &rets[i + lag..i + lag + depth])).or_default() += 1;
    }
    let mut candidates = Vec::new();
    let mut skipped = 0;
    let frequent: Vec<(&[u32], f64)> = single.iter().map(|(k, &c)| (*k, c as f64 / total)).collect();
    for &(c1, p1) in &frequent {
        for &(c2, p2) in &frequent {
            let expected = p1 * p2 * n as f64;
            if expected < QI_MIN_EXPECTED {
                skipped += 1;
                continue;
            }
            let j = joint.get(&(c1, c2)).copied().unwrap_or(0);
            candidates.push((c1, c2, j, expected));
        }
    }
    let z = normal_quantile(1.0 - level / (2.0 * candidates.len().max(1) as f64));
    let mut pairs: Vec<CylinderRatio> = candidates
        .into_iter()
        .map(|(c1, c2, j, expected)| {
            let ratio = j as f64 / expected;
            // Poisson error of the joint count dominates; marginals are
            // estimated from n-fold larger samples
            let half_width = z * (j.max(1) as f64).sqrt() / expected;
            CylinderRatio { first: c1.iter().map(|&v| v as u64).collect(), second: c2.iter().map(|&v| v as u64).collect(), joint: j, expected, ratio, half_width }
        })
        .collect();
    pairs.sort_by(|a, b| (&a.first, &a.second).cmp(&(&b.first, &b.second)));
    let k_hat = pairs.iter().map(|p| p.ratio).fold(0.0, f64::max);
    Ok(QiReport { depth, lag, k_hat, pairs, skipped, n })
}

/// Return times (capped at `u32::MAX`) along one induced orbit of length `n`.
pub fn return_sequence(sys: &LsvSystem, n: usize, seed: u64) -> Result<Vec<u32>> {
    let mut rng = rng::stream(seed, "lsv-returns", 0);
    let mut x = 0.5 + 0.5 * (1.0 - rng.random::<f64>());
    for _ in 0..BURN_IN {
        x = sys.induced_map(x)?;
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let st = sys.induced_step(x, None)?;
        out.push(st.ret.min(u32::MAX as u64) as u32);
        x = st.next;
    }
    Ok(out)
}

/// A shuffled copy: the i.i.d. surrogate with the same marginal law.
pub fn shuffled(rets: &[u32], seed: u64) -> Vec<u32> {
    let mut v = rets.to_vec();
    v.shuffle(&mut rng::stream(seed, "lsv-shuffle", 0));
    v
}

/// Ratio `μ̂(R = a, R∘f = b, R∘f² = c) / (μ̂(R=a)μ̂(R=b)μ̂(R=c))` with its
/// Poisson half-width at normal quantile `z`.
pub fn triple_ratio(rets: &[u32], cyl: [u32; 3], z: f64) -> (f64, f64) {
    let n = rets.len() as f64;
    let p = |v: u32| rets.iter().filter(|&&r| r == v).count() as f64 / n;
    let m = rets.len() - 2;
    let joint = (0..m).filter(|&i| rets[i] == cyl[0] && rets[i + 1] == cyl[1] && rets[i + 2] == cyl[2]).count() as f64;
    let expected = p(cyl[0]) * p(cyl[1]) * p(cyl[2]) * m as f64;
    (joint / expected, z * joint.max(1.0).sqrt() / expected)
}

/// Ratio `μ̂(τ > t, τ∘f^j > t) / μ̂(τ > t)²` for a sequence of roof values.
pub fn large_value_ratio(roofs: &[f64], t: f64, lag: usize, z: f64) -> (f64, f64) {
    let n = roofs.len() as f64;
    let p = roofs.iter().filter(|&&v| v > t).count() as f64 / n;
    let m = roofs.len() - lag;
    let joint = (0..m).filter(|&i| roofs[i] > t && roofs[i + lag] > t).count() as f64;
    let expected = p * p * m as f64;
    (joint / expected, z * joint.max(1.0).sqrt() / expected)
}
