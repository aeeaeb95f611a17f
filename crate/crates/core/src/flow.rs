//! Suspension flows over a base map: simulation, hitting-probability
//! estimates, and the renewal sum for i.i.d. roofs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{discretize_mean_preserving, discretize_mean_preserving_on, sample_tail, FixedKernel, LatticeDist};
use crate::error::{Error, Result};
use crate::lsv::{invariant_measure, LsvSystem, MeasureEstimate, MeasureMethod, RoofSpec};
use crate::regvar::TailModel;
use crate::rng;

/// Laps allowed in a single `flow_advance`.
pub const LAP_CAP: u64 = 10_000_000;

/// Base sets. For i.i.d. roofs the coordinate is the value of the current
/// roof; for the LSV map it is the position `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BaseSet {
    All,
    Interval { lo: f64, hi: f64 },
}

impl BaseSet {
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            BaseSet::All => true,
            BaseSet::Interval { lo, hi } => lo <= v && v <= hi,
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            BaseSet::All => (f64::NEG_INFINITY, f64::INFINITY),
            BaseSet::Interval { lo, hi } => (lo, hi),
        }
    }

    fn intersect(&self, o: &BaseSet) -> Option<BaseSet> {
        let (a, b) = self.bounds();
        let (c, d) = o.bounds();
        let (lo, hi) = (a.max(c), b.min(d));
        if lo.is_infinite() && hi.is_infinite() {
            Some(BaseSet::All)
        } else if lo <= hi {
            Some(BaseSet::Interval { lo, hi })
        } else {
            None
        }
    }
}

/// `A × [a1, a2]` under the roof.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSet {
    pub base: BaseSet,
    pub fiber: [f64; 2],
}

impl ProductSet {
    pub fn new(base: BaseSet, a1: f64, a2: f64) -> Self {
        ProductSet { base, fiber: [a1, a2] }
    }

    pub fn width(&self) -> f64 {
        self.fiber[1] - self.fiber[0]
    }

    /// Checks `0 ≤ a1 < a2 < inf τ` on the base set.
    pub fn validate<B: SuspensionBase + ?Sized>(&self, base: &B, field: &str) -> Result<()> {
        let [a1, a2] = self.fiber;
        if !(0.0 <= a1 && a1 < a2) {
            return Err(Error::config(field, format!("fiber interval [{a1}, {a2}] must satisfy 0 ≤ a1 < a2")));
        }
        if let BaseSet::Interval { lo, hi } = self.base {
            if !(lo < hi) {
                return Err(Error::config(field, "base interval is empty"));
            }
        }
        let floor = base.roof_floor(&self.base);
        if !(a2 < floor) {
            return Err(Error::config(field, format!("fiber end {a2} is not below the roof minimum {floor}")));
        }
        Ok(())
    }

    /// `ν(A × [a1, a2]) = μ(A)(a2 - a1)`.
    pub fn measure<B: SuspensionBase + ?Sized>(&self, base: &B) -> Result<f64> {
        Ok(base.measure(&self.base)? * self.width())
    }
}

/// A base map with a roof, seen through what the flow needs.
pub trait SuspensionBase: Sync {
    type Point: Copy + Send + std::fmt::Debug;

    fn roof(&self, p: &Self::Point) -> f64;
    /// Coordinate tested by [`BaseSet`].
    fn coord(&self, p: &Self::Point) -> f64;
    /// The base map; i.i.d. bases draw the next roof from `rng`.
    fn advance(&self, p: Self::Point, rng: &mut ChaCha8Rng) -> Result<Self::Point>;
    /// A point from the invariant law conditioned on `set`.
    fn sample_in(&self, set: &BaseSet, rng: &mut ChaCha8Rng) -> Result<Self::Point>;
    /// `μ(set)`.
    fn measure(&self, set: &BaseSet) -> Result<f64>;
    /// A lower bound for the roof on `set`.
    fn roof_floor(&self, set: &BaseSet) -> f64;
    /// Normalization `L(t) t^{1-α}` of correlations at time `t`.
    fn scale(&self, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuspensionState<P> {
    pub point: P,
    pub fiber: f64,
}

/// Moves a state forward by `t ≥ 0`; returns the new state and the number of
/// roof crossings.
pub fn flow_advance<B: SuspensionBase + ?Sized>(
    base: &B,
    state: SuspensionState<B::Point>,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(SuspensionState<B::Point>, u64)> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("flow time must be nonnegative, got {t}")));
    }
    let mut p = state.point;
    let mut s = state.fiber + t;
    let mut laps = 0u64;
    loop {
        let h = base.roof(&p);
        if s < h {
            break;
        }
        s -= h;
        p = base.advance(p, rng)?;
        laps += 1;
        if laps > LAP_CAP {
            return Err(Error::numeric(format!("flow exceeded {LAP_CAP} roof crossings")));
        }
    }
    Ok((SuspensionState { point: p, fiber: s }, laps))
}

/// Law of an i.i.d. roof.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum IidRoof {
    /// `τ ~ model`.
    Continuous,
    /// `τ = offset + span·⌊(X - t_min)/span⌋`, `X ~ model`.
    Lattice { offset: f64, span: f64 },
}

/// Suspension over a full shift with i.i.d. roofs; a point is the value of
/// the current roof.
#[derive(Debug, Clone)]
pub struct IidBase {
    pub model: TailModel,
    pub roof: IidRoof,
}

impl IidBase {
    pub fn new(model: TailModel, roof: IidRoof) -> Result<Self> {
        if let IidRoof::Lattice { offset, span } = roof {
            if !(span > 0.0 && offset > 0.0) {
                return Err(Error::config("roof", "lattice roof needs offset > 0 and span > 0"));
            }
        }
        Ok(IidBase { model, roof })
    }

    /// Atom indices `j` with `offset + j·span ∈ [lo, hi]`.
    fn atom_range(&self, offset: f64, span: f64, set: &BaseSet) -> (f64, f64) {
        let (lo, hi) = set.bounds();
        let jl = ((lo - offset) / span).ceil().max(0.0);
        let jh = ((hi - offset) / span).floor();
        (jl, jh)
    }

    /// Range of the underlying `X` that produces roofs in `set`.
    fn source_range(&self, set: &BaseSet) -> (f64, f64) {
        let t0 = self.model.t_min();
        match self.roof {
            IidRoof::Continuous => {
                let (lo, hi) = set.bounds();
                (lo.max(t0), hi)
            }
            IidRoof::Lattice { offset, span } => {
                let (jl, jh) = self.atom_range(offset, span, set);
                (t0 + jl * span, t0 + (jh + 1.0) * span)
            }
        }
    }

    fn map_source(&self, x: f64) -> f64 {
        match self.roof {
            IidRoof::Continuous => x,
            IidRoof::Lattice { offset, span } => offset + span * ((x - self.model.t_min()) / span).floor(),
        }
    }

    fn tail_at(&self, x: f64) -> f64 {
        if x.is_infinite() {
            0.0
        } else {
            self.model.tail(x)
        }
    }
}

impl SuspensionBase for IidBase {
    type Point = f64;

    fn roof(&self, p: &f64) -> f64 {
        *p
    }

    fn coord(&self, p: &f64) -> f64 {
        *p
    }

    fn advance(&self, _p: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        Ok(self.map_source(sample_tail(&self.model, rng)))
    }

    fn sample_in(&self, set: &BaseSet, rng: &mut ChaCha8Rng) -> Result<f64> {
        let (lo, hi) = self.source_range(set);
        let (ul, uh) = (self.tail_at(hi), self.tail_at(lo));
        if !(uh > ul) {
            return Err(Error::domain("base set has zero probability"));
        }
        let u = uh - (uh - ul) * rng.random::<f64>();
        let x = self.model.upper_quantile(u.max(f64::MIN_POSITIVE)).clamp(lo, hi);
        Ok(self.map_source(x))
    }

    fn measure(&self, set: &BaseSet) -> Result<f64> {
        let (lo, hi) = self.source_range(set);
        if !(hi > lo) {
            return Ok(0.0);
        }
        Ok((self.tail_at(lo) - self.tail_at(hi)).max(0.0))
    }

    fn roof_floor(&self, set: &BaseSet) -> f64 {
        let (lo, _) = set.bounds();
        match self.roof {
            IidRoof::Continuous => lo.max(self.model.t_min()),
            IidRoof::Lattice { offset, span } => offset + self.atom_range(offset, span, set).0 * span,
        }
    }

    fn scale(&self, t: f64) -> f64 {
        self.model.slow(t) * t.powf(1.0 - self.model.alpha())
    }
}

/// Point of the induced LSV base: position, induced roof there, and the
/// image under the induced map (computed together).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsvPoint {
    pub x: f64,
    pub roof: f64,
    pub next: f64,
}

/// Burn-in of induced steps used to draw from the invariant law.
pub const LSV_BURN_IN: u64 = 40;
const LSV_MAX_TRIES: usize = 100_000;

/// Suspension over the induced LSV map `f` on `X = [½, 1]` under the induced
/// roof `τ = Σ τ̃ ∘ f̃^i`.
#[derive(Debug, Clone)]
pub struct LsvInducedBase {
    pub sys: LsvSystem,
    pub roof: RoofSpec,
    pub invariant: MeasureEstimate,
    /// Iterate excursions step by step instead of using the Fatou shortcut.
    pub direct: bool,
}

impl LsvInducedBase {
    /// `cells` sets the resolution of the Ulam estimate used for `μ(A)`.
    pub fn new(sys: LsvSystem, roof: RoofSpec, cells: usize) -> Result<Self> {
        roof.validate()?;
        let invariant = invariant_measure(&sys, MeasureMethod::Ulam { n_cells: cells, n_iter: 100_000 }, cells)?;
        Ok(LsvInducedBase { sys, roof, invariant, direct: false })
    }

    pub fn point(&self, x: f64) -> Result<LsvPoint> {
        let st = if self.direct {
            self.sys.induced_step_direct(x, Some(&self.roof))?
        } else {
            self.sys.induced_step(x, Some(&self.roof))?
        };
        Ok(LsvPoint { x, roof: st.roof, next: st.next })
    }

    /// `x` drawn from a uniform start pushed through the burn-in.
    pub fn sample_invariant(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut x = 0.5 + 0.5 * (1.0 - rng.random::<f64>());
        for _ in 0..LSV_BURN_IN {
            x = self.sys.induced_map(x)?;
        }
        Ok(x)
    }
}

fn check_inside_x(set: &BaseSet) -> Result<()> {
    if let BaseSet::Interval { lo, hi } = *set {
        if lo < 0.5 || hi > 1.0 {
            return Err(Error::config("base", "LSV base sets must lie in [1/2, 1]"));
        }
    }
    Ok(())
}

impl SuspensionBase for LsvInducedBase {
    type Point = LsvPoint;

    fn roof(&self, p: &LsvPoint) -> f64 {
        p.roof
    }

    fn coord(&self, p: &LsvPoint) -> f64 {
        p.x
    }

    fn advance(&self, p: LsvPoint, _rng: &mut ChaCha8Rng) -> Result<LsvPoint> {
        self.point(p.next)
    }

    fn sample_in(&self, set: &BaseSet, rng: &mut ChaCha8Rng) -> Result<LsvPoint> {
        check_inside_x(set)?;
        for _ in 0..LSV_MAX_TRIES {
            let x = self.sample_invariant(rng)?;
            if set.contains(x) {
                return self.point(x);
            }
        }
        Err(Error::numeric("rejection sampling of the base set failed"))
    }

    fn measure(&self, set: &BaseSet) -> Result<f64> {
        check_inside_x(set)?;
        Ok(match *set {
            BaseSet::All => 1.0,
            BaseSet::Interval { lo, hi } => self.invariant.mass_of(lo, hi),
        })
    }

    fn roof_floor(&self, _set: &BaseSet) -> f64 {
        self.roof.min_value()
    }

    fn scale(&self, t: f64) -> f64 {
        t.powf(1.0 - self.sys.alpha())
    }
}

/// Suspension over the LSV map itself on `[0, 1]` under `τ̃`. Base sets are
/// confined to `X`, where the invariant measure is normalized.
#[derive(Debug, Clone)]
pub struct LsvBase {
    pub induced: LsvInducedBase,
}

impl SuspensionBase for LsvBase {
    type Point = f64;

    fn roof(&self, p: &f64) -> f64 {
        self.induced.roof.eval(*p)
    }

    fn coord(&self, p: &f64) -> f64 {
        *p
    }

    fn advance(&self, p: f64, _rng: &mut ChaCha8Rng) -> Result<f64> {
        Ok(self.induced.sys.map_apply(p))
    }

    fn sample_in(&self, set: &BaseSet, rng: &mut ChaCha8Rng) -> Result<f64> {
        Ok(self.induced.sample_in(set, rng)?.x)
    }

    fn measure(&self, set: &BaseSet) -> Result<f64> {
        self.induced.measure(set)
    }

    fn roof_floor(&self, _set: &BaseSet) -> f64 {
        self.induced.roof.min_value()
    }

    fn scale(&self, t: f64) -> f64 {
        self.induced.scale(t)
    }
}

/// Times in `[0, horizon]` at which the flow from `(p, fiber)` enters `target`.
pub fn entry_times<B: SuspensionBase + ?Sized>(
    base: &B,
    state: SuspensionState<B::Point>,
    target: &ProductSet,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut p = state.point;
    let mut lap_start = -state.fiber;
    let mut laps = 0u64;
    while lap_start <= horizon {
        if target.base.contains(base.coord(&p)) {
            let [b1, b2] = target.fiber;
            let entry = lap_start + b1;
            if lap_start + b2 >= 0.0 && entry <= horizon {
                out.push(entry.max(0.0));
            }
        }
        lap_start += base.roof(&p);
        p = base.advance(p, rng)?;
        laps += 1;
        if laps > LAP_CAP {
            return Err(Error::numeric("entry scan exceeded the lap cap"));
        }
    }
    Ok(out)
}

/// One scaled-correlation measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingEstimate {
    pub t: f64,
    /// Estimate of `ν(𝒜 ∩ g_{-t}ℬ)`.
    pub raw_corr: f64,
    /// `raw_corr · L(t) t^{1-α}`.
    pub scaled: f64,
    /// Standard error of `raw_corr`.
    pub stderr: f64,
    pub scaled_stderr: f64,
    pub hits: u64,
    pub n_samples: u64,
    pub seed: u64,
}

/// Standard error of a binomial proportion; for few hits or misses the
/// Wilson interval at one standard deviation is used instead.
pub fn proportion_stderr(hits: u64, n: u64) -> f64 {
    let nf = n as f64;
    let p = hits as f64 / nf;
    if hits >= 10 && n - hits >= 10 {
        (p * (1.0 - p) / nf).sqrt()
    } else {
        let z2 = 1.0;
        (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf)
    }
}

/// Monte Carlo estimate of `ν(𝒜 ∩ g_{-t}ℬ)` for every `t` in `t_grid`: start
/// ν-uniformly in `𝒜`, flow, and count hits of `ℬ`. One trajectory serves the
/// whole grid. Trials are grouped in chunks with their own random streams, so
/// the result does not depend on the thread count.
pub fn correlation_mc<B: SuspensionBase + ?Sized>(
    base: &B,
    a: &ProductSet,
    b: &ProductSet,
    t_grid: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<MixingEstimate>> {
    if n_samples < 1000 {
        return Err(Error::Refused(format!("{n_samples} samples is below the minimum of 1000")));
    }
    if t_grid.is_empty() {
        return Err(Error::config("t-grid", "time grid is empty"));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::config("t-grid", "times must be finite and nonnegative"));
    }
    a.validate(base, "A")?;
    b.validate(base, "B")?;
    let nu_a = a.measure(base)?;
    let mut order: Vec<usize> = (0..t_grid.len()).collect();
    order.sort_by(|&i, &j| t_grid[i].total_cmp(&t_grid[j]));
    let chunks = n_samples.div_ceil(rng::CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<u64>> {
            let mut rng = rng::stream(seed, "flow-mc", c);
            let mut hits = vec![0u64; t_grid.len()];
            let len = rng::CHUNK.min(n_samples - c * rng::CHUNK);
            for _ in 0..len {
                let p = base.sample_in(&a.base, &mut rng)?;
                let s = a.fiber[0] + a.width() * rng.random::<f64>();
                let mut state = SuspensionState { point: p, fiber: s };
                let mut now = 0.0;
                for &i in &order {
                    let (next, _) = flow_advance(base, state, t_grid[i] - now, &mut rng)?;
                    state = next;
                    now = t_grid[i];
                    let [b1, b2] = b.fiber;
                    if b.base.contains(base.coord(&state.point)) && b1 <= state.fiber && state.fiber <= b2 {
                        hits[i] += 1;
                    }
                }
            }
            Ok(hits)
        })
        .try_reduce(
            || vec![0u64; t_grid.len()],
            |mut x, y| {
                x.iter_mut().zip(&y).for_each(|(p, q)| *p += q);
                Ok(x)
            },
        )?;
    Ok(t_grid
        .iter()
        .zip(&counts)
        .map(|(&t, &h)| {
            let p = h as f64 / n_samples as f64;
            let se = nu_a * proportion_stderr(h, n_samples);
            let sc = base.scale(t);
            MixingEstimate {
                t,
                raw_corr: nu_a * p,
                scaled: nu_a * p * sc,
                stderr: se,
                scaled_stderr: se * sc,
                hits: h,
                n_samples,
                seed,
            }
        })
        .collect())
}

/// Lattice parameters of the renewal sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalConfig {
    /// Lattice step; `None` picks `T / 2^18` with `T` the largest time needed.
    pub step: Option<f64>,
    /// Terms run over `k ≤ N(t)/eps_cut`.
    pub eps_cut: f64,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        RenewalConfig { step: None, eps_cut: 0.05 }
    }
}

/// Terms of the renewal sum `Σ_k ∫ μ(x ∈ A, τ_k ∈ [t + a - b2, t + a - b1],
/// f^k x ∈ B) da`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalSum {
    pub t: f64,
    /// `terms[k]`, from `k = 0`.
    pub terms: Vec<f64>,
    pub value: f64,
    /// Bound on the neglected terms beyond the last one computed.
    pub tail_budget: f64,
    /// Last `k` the sum was allowed to reach.
    pub k_max: u64,
    pub step: f64,
}

/// The renewal sum from lattice laws: `first` is the sub-probability law of
/// `τ` on `A`, `kernel` that of a single roof; `mu_b = μ(B)`, `mu_ab =
/// μ(A ∩ B)`, and `kernel_tail` is `P(τ > T)` beyond the largest time `T`
/// needed. Terms with `P(τ_k ≤ T)` below `1e-17` of the running sum end the
/// loop early; the remainder is covered by the geometric bound
/// `P(τ_j ≤ T) ≤ P(τ_k ≤ T)(1 - P(τ > T))^{j-k}`.
#[allow(clippy::too_many_arguments)]
pub fn renewal_sum_lattice(
    first: &LatticeDist,
    kernel: &LatticeDist,
    kernel_tail: f64,
    mu_b: f64,
    mu_ab: f64,
    a: [f64; 2],
    b: [f64; 2],
    t: f64,
    k_max: u64,
) -> Result<RenewalSum> {
    let [a1, a2] = a;
    let [b1, b2] = b;
    let top = t + a2 - b1;
    let step = kernel.step();
    let mut terms = Vec::new();
    // lap 0: the point is still in its first house
    let overlap = ((a2).min(b2 - t) - a1.max(b1 - t)).max(0.0);
    terms.push(mu_ab * overlap);
    let kern = FixedKernel::new(kernel, top + step)?;
    let mut d = first.clone();
    let mut value = terms[0];
    let mut tail_budget = 0.0;
    let ratio = |tail: f64| if tail > 0.0 { (1.0 - tail) / tail } else { f64::INFINITY };
    for k in 1..=k_max {
        if d.exact_upto() < top {
            return Err(Error::numeric(format!(
                "lattice law of τ_{k} is exact only up to {} < {top}",
                d.exact_upto()
            )));
        }
        let hi = d.cdf_integral(t + a1 - b1, t + a2 - b1);
        let lo = d.cdf_integral(t + a1 - b2, t + a2 - b2);
        let term = mu_b * (hi - lo).max(0.0);
        terms.push(term);
        value += term;
        let below = d.grid_cdf(top);
        let bound = if below == 0.0 { 0.0 } else { (a2 - a1) * mu_b * below * ratio(kernel_tail) };
        if k == k_max || bound <= 1e-17 * value {
            tail_budget = bound;
            break;
        }
        d = kern.apply(&d)?;
    }
    Ok(RenewalSum { t, terms, value, tail_budget, k_max, step })
}

fn iid_masses(model: &TailModel, a: &BaseSet, b: &BaseSet) -> (f64, f64) {
    let base = IidBase { model: model.clone(), roof: IidRoof::Continuous };
    let mu_b = base.measure(b).unwrap_or(0.0);
    let mu_ab = a.intersect(b).map_or(0.0, |s| base.measure(&s).unwrap_or(0.0));
    (mu_b, mu_ab)
}

/// `ν(𝒜 ∩ g_{-t}ℬ)` for i.i.d. roofs with law `model`, where `A` and `B` are
/// events on the current roof value.
pub fn renewal_sum_eval(
    model: &TailModel,
    a: &ProductSet,
    b: &ProductSet,
    t: f64,
    cfg: &RenewalConfig,
) -> Result<RenewalSum> {
    let base = IidBase { model: model.clone(), roof: IidRoof::Continuous };
    a.validate(&base, "A")?;
    b.validate(&base, "B")?;
    if !(cfg.eps_cut > 0.0 && cfg.eps_cut < 1.0) {
        return Err(Error::config("eps_cut", "must lie in (0, 1)"));
    }
    if !(t >= 0.0) {
        return Err(Error::domain("t must be nonnegative"));
    }
    let top = t + a.fiber[1] - b.fiber[0];
    let step = cfg.step.unwrap_or((top.max(model.t_min() + 1.0)) / (1u64 << 18) as f64);
    let cutoff = top.max(model.t_min()) + 4.0 * step;
    let (lo, hi) = a.base.bounds();
    let first = discretize_mean_preserving_on(model, step, cutoff, lo.max(model.t_min()), hi)?;
    let kernel = discretize_mean_preserving(model, step, cutoff)?;
    let (mu_b, mu_ab) = iid_masses(model, &a.base, &b.base);
    let n_t = if t >= model.rate(1.0)? { model.counting(t)? } else { 1 };
    let k_max = ((n_t as f64) / cfg.eps_cut).ceil() as u64;
    renewal_sum_lattice(&first, &kernel, model.tail(top), mu_b, mu_ab, a.fiber, b.fiber, t, k_max.max(1))
}

/// The renewal sum split by lap count into `k < εN(t)`, `εN(t) ≤ k ≤
/// N(t)/ε` and `k > N(t)/ε`, each scaled by `L(t) t^{1-α}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    pub eps: f64,
    pub n_t: u64,
    pub small: f64,
    pub middle: f64,
    pub large: f64,
    pub total: f64,
    pub tail_budget: f64,
}

impl Decomposition {
    pub fn middle_share(&self) -> f64 {
        self.middle / self.total
    }
}

pub fn decomposition_diagnostics(sum: &RenewalSum, model: &TailModel, eps: f64) -> Result<Decomposition> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::domain("eps must lie in (0, 1/2)"));
    }
    let t = sum.t;
    let n_t = model.counting(t)?;
    let scale = model.slow(t) * t.powf(1.0 - model.alpha());
    let lo = eps * n_t as f64;
    let hi = n_t as f64 / eps;
    let (mut small, mut middle, mut large) = (0.0, 0.0, 0.0);
    for (k, v) in sum.terms.iter().enumerate() {
        let kf = k as f64;
        if kf < lo {
            small += v;
        } else if kf <= hi {
            middle += v;
        } else {
            large += v;
        }
    }
    Ok(Decomposition {
        eps,
        n_t,
        small: small * scale,
        middle: middle * scale,
        large: large * scale,
        total: sum.value * scale,
        tail_budget: sum.tail_budget * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pareto_base() -> IidBase {
        IidBase::new(TailModel::pareto(0.5, 1.0).unwrap(), IidRoof::Continuous).unwrap()
    }

    struct Constant(f64);

    impl SuspensionBase for Constant {
        type Point = u64;
        fn roof(&self, _: &u64) -> f64 {
            self.0
        }
        fn coord(&self, _: &u64) -> f64 {
            0.0
        }
        fn advance(&self, p: u64, _: &mut ChaCha8Rng) -> Result<u64> {
            Ok(p + 1)
        }
        fn sample_in(&self, _: &BaseSet, _: &mut ChaCha8Rng) -> Result<u64> {
            Ok(0)
        }
        fn measure(&self, _: &BaseSet) -> Result<f64> {
            Ok(1.0)
        }
        fn roof_floor(&self, _: &BaseSet) -> f64 {
            self.0
        }
        fn scale(&self, _: f64) -> f64 {
            1.0
        }
    }

    #[test]
    fn advance_constant_roof() {
        let mut r = rng::stream(0, "flow-test", 0);
        let s0 = SuspensionState { point: 0u64, fiber: 0.0 };
        let (s, laps) = flow_advance(&Constant(2.0), s0, 5.0, &mut r).unwrap();
        assert_eq!((s.point, laps), (2, 2));
        assert!((s.fiber - 1.0).abs() < 1e-15);
        let (s, laps) = flow_advance(&Constant(2.0), s0, 0.0, &mut r).unwrap();
        assert_eq!((s, laps), (s0, 0));
    }

    #[test]
    fn semigroup_on_random_states() {
        let base = pareto_base();
        let mut r = rng::stream(1, "flow-test", 0);
        for i in 0..1000 {
            let p = base.sample_in(&BaseSet::All, &mut r).unwrap();
            let s = p * r.random::<f64>();
            let (t1, t2) = (50.0 * r.random::<f64>(), 50.0 * r.random::<f64>());
            let st = SuspensionState { point: p, fiber: s };
            let mut r1 = rng::stream(2, "flow-test", i);
            let mut r2 = r1.clone();
            let (mid, _) = flow_advance(&base, st, t1, &mut r1).unwrap();
            let (two, _) = flow_advance(&base, mid, t2, &mut r1).unwrap();
            let (one, _) = flow_advance(&base, st, t1 + t2, &mut r2).unwrap();
            assert_eq!(two.point, one.point);
            // roofs reach 1e10 and more; compare relative to the distance flown
            assert!((two.fiber - one.fiber).abs() < 1e-12 * (s + t1 + t2).max(1.0));
        }
    }

    #[test]
    fn mc_at_time_zero() {
        let base = pareto_base();
        let a = ProductSet::new(BaseSet::All, 0.0, 0.4);
        let b = ProductSet::new(BaseSet::All, 0.5, 0.9);
        let est = correlation_mc(&base, &a, &a, &[0.0], 10_000, 3).unwrap();
        assert_eq!(est[0].raw_corr, 0.4);
        let est = correlation_mc(&base, &a, &b, &[0.0], 10_000, 3).unwrap();
        assert_eq!(est[0].raw_corr, 0.0);
        assert!(matches!(correlation_mc(&base, &a, &b, &[1.0], 999, 3), Err(Error::Refused(_))));
        assert!(matches!(correlation_mc(&base, &a, &b, &[], 1000, 3), Err(Error::Config { .. })));
    }

    #[test]
    fn mc_is_reproducible() {
        let base = pareto_base();
        let a = ProductSet::new(BaseSet::All, 0.0, 0.4);
        let x = correlation_mc(&base, &a, &a, &[10.0, 30.0], 5000, 9).unwrap();
        let y = correlation_mc(&base, &a, &a, &[30.0, 10.0], 5000, 9).unwrap();
        assert_eq!(x[0], y[1]);
        assert_eq!(x[1], y[0]);
    }

    #[test]
    fn unit_roof_renewal_by_enumeration() {
        // τ ≡ 1: at time t the fiber coordinate is frac(a + t)
        let one = LatticeDist::point_mass(1.0, 0.05).unwrap();
        let run = |t| renewal_sum_lattice(&one, &one, 0.0, 1.0, 1.0, [0.0, 0.4], [0.0, 0.4], t, 20).unwrap();
        let s = run(5.5);
        assert!(s.value.abs() < 1e-12, "{}", s.value);
        let s = run(5.2);
        assert!((s.value - 0.2).abs() < 1e-12, "{}", s.value);
        for (k, v) in s.terms.iter().enumerate() {
            if k != 5 {
                assert!(v.abs() < 1e-12, "k = {k}: {v}");
            }
        }
    }

    #[test]
    fn renewal_matches_monte_carlo() {
        let model = TailModel::pareto(0.5, 1.0).unwrap();
        let base = pareto_base();
        let a = ProductSet::new(BaseSet::All, 0.0, 0.4);
        let b = ProductSet::new(BaseSet::Interval { lo: 1.0, hi: 3.0 }, 0.1, 0.6);
        let ts = [100.0, 1000.0];
        let mc = correlation_mc(&base, &a, &b, &ts, 400_000, 11).unwrap();
        for (e, &t) in mc.iter().zip(&ts) {
            let s = renewal_sum_eval(&model, &a, &b, t, &RenewalConfig::default()).unwrap();
            assert!((e.raw_corr - s.value).abs() < 3.0 * e.stderr, "t {t}: {} vs {} ± {}", e.raw_corr, s.value, e.stderr);
        }
    }

    #[test]
    fn restricted_start_matches_monte_carlo() {
        let model = TailModel::pareto(0.5, 1.0).unwrap();
        let base = pareto_base();
        let a = ProductSet::new(BaseSet::Interval { lo: 2.0, hi: 10.0 }, 0.0, 0.4);
        let t = 300.0;
        let mc = correlation_mc(&base, &a, &a, &[t], 400_000, 12).unwrap();
        let s = renewal_sum_eval(&model, &a, &a, t, &RenewalConfig::default()).unwrap();
        assert!((mc[0].raw_corr - s.value).abs() < 3.0 * mc[0].stderr, "{} vs {}", mc[0].raw_corr, s.value);
    }

    #[test]
    fn decomposition_partitions_the_sum() {
        let model = TailModel::pareto(0.5, 1.0).unwrap();
        let a = ProductSet::new(BaseSet::All, 0.0, 0.4);
        let s = renewal_sum_eval(&model, &a, &a, 1000.0, &RenewalConfig::default()).unwrap();
        let d = decomposition_diagnostics(&s, &model, 0.25).unwrap();
        assert!(((d.small + d.middle + d.large) / d.total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_roof_sampling() {
        let base = IidBase::new(TailModel::pareto(0.5, 1.0).unwrap(), IidRoof::Lattice { offset: 1.0, span: 1.0 }).unwrap();
        let mut r = rng::stream(4, "flow-test", 0);
        for _ in 0..1000 {
            let v = base.advance(0.0, &mut r).unwrap();
            assert_eq!(v, v.floor());
            assert!(v >= 1.0);
        }
        // roofs in [1, 2] are the atoms 1 and 2: X ∈ [1, 3)
        let m = base.measure(&BaseSet::Interval { lo: 1.0, hi: 2.0 }).unwrap();
        assert!((m - (1.0 - 3f64.powf(-0.5))).abs() < 1e-15);
        assert_eq!(base.roof_floor(&BaseSet::Interval { lo: 1.5, hi: 9.0 }), 2.0);
    }

    #[test]
    fn lsv_presentations_agree() {
        let sys = LsvSystem::new(1.5, 2000).unwrap();
        // both presentations must follow the same floating-point orbit: the
        // map is expanding, so any rounding difference is amplified
        let mut induced = LsvInducedBase::new(sys, RoofSpec::Affine { p: 1.0, q: 1.0 }, 64).unwrap();
        induced.direct = true;
        let plain = LsvBase { induced: induced.clone() };
        let target = ProductSet::new(BaseSet::Interval { lo: 0.6, hi: 1.0 }, 0.1, 0.5);
        let mut r = rng::stream(5, "flow-test", 0);
        for _ in 0..100 {
            let x = 0.5 + 0.5 * (1.0 - r.random::<f64>());
            let ti = entry_times(&induced, SuspensionState { point: induced.point(x).unwrap(), fiber: 0.0 }, &target, 1000.0, &mut r).unwrap();
            let tp = entry_times(&plain, SuspensionState { point: x, fiber: 0.0 }, &target, 1000.0, &mut r).unwrap();
            assert_eq!(ti.len(), tp.len());
            for (u, v) in ti.iter().zip(&tp) {
                assert!((u - v).abs() < 1e-8 * v.max(1.0), "{u} vs {v}");
            }
        }
    }
}
