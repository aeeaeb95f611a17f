//! One-sided α-stable law with Laplace transform `exp(-Γ(1-α)λ^α)`: density,
//! distribution function, the mixing constant `ĉ = α∫ρ(z)z^{-α}dz`, and an
//! exact sampler.
//!
//! Writing `Y = σS` with `σ = Γ(1-α)^{1/α}` and `S` the standard law
//! (`E e^{-λS} = e^{-λ^α}`), everything reduces to Zolotarev's integral
//! over `φ ∈ (0, π)` of the Kanter function
//! `A(φ) = [sin(αφ)^α sin((1-α)φ)^{1-α} / sin φ]^{1/(1-α)}`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::quad;

/// Quadrature controls for the Zolotarev integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Relative tolerance between successive tanh-sinh levels.
    pub tolerance: f64,
    /// Number of terms of the large-`z` series.
    pub series_terms: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { tolerance: 1e-13, series_terms: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableDensity {
    alpha: f64,
    sigma: f64,
    quad: QuadratureSpec,
}

impl StableDensity {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_quadrature(alpha, QuadratureSpec::default())
    }

    pub fn with_quadrature(alpha: f64, quad: QuadratureSpec) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0,1), got {alpha}")));
        }
        if !(quad.tolerance > 0.0) {
            return Err(Error::config("quadrature.tolerance", "must be positive"));
        }
        let sigma = gamma(1.0 - alpha).powf(1.0 / alpha);
        Ok(StableDensity { alpha, sigma, quad })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Scale `σ` with `Y = σS`.
    pub fn scale(&self) -> f64 {
        self.sigma
    }

    /// The normalizing prefactor multiplying `ρ`; fixed to one.
    pub fn cbar(&self) -> f64 {
        1.0
    }

    /// `ln A(φ)`, taking both `φ` and `π - φ` so neither end cancels.
    fn ln_kanter(&self, phi: f64, pi_minus_phi: f64) -> f64 {
        let a = self.alpha;
        let sin_phi = if phi < pi_minus_phi { phi.sin() } else { pi_minus_phi.sin() };
        let s1 = (a * phi).sin();
        let s2 = ((1.0 - a) * phi).sin();
        (a * s1.ln() + (1.0 - a) * s2.ln() - sin_phi.ln()) / (1.0 - a)
    }

    /// Kanter function `A(φ)` on `(0, π)`.
    pub fn kanter(&self, phi: f64) -> f64 {
        self.ln_kanter(phi, PI - phi).exp()
    }

    /// Argument beyond which the series replaces quadrature.
    fn series_cutoff(&self) -> f64 {
        // ratio of successive terms is about (σ/z)^α·n^{α-1}; keep it below 1/8
        self.sigma * 8f64.powf(1.0 / self.alpha)
    }

    /// Density of the standard law `S` at `x > 0`, by quadrature.
    fn standard_density(&self, x: f64) -> Result<f64> {
        let a = self.alpha;
        let w = x.powf(-a / (1.0 - a));
        let ln_a0 = (a * a.ln() + (1.0 - a) * (1.0 - a).ln()) / (1.0 - a);
        if ln_a0 + w.ln() > 6.6 {
            // e^{-A w} with A ≥ A(0) is far below any tolerance of interest
            // once A(0)w > e^{6.6} ≈ 735
            return Ok(0.0);
        }
        let integral = quad::tanh_sinh_gaps(
            |phi, ga, gb| {
                let la = self.ln_kanter(ga.min(phi), gb);
                let aw = la.exp() * w;
                if aw > 745.0 {
                    0.0
                } else {
                    (la - aw).exp()
                }
            },
            0.0,
            PI,
            self.quad.tolerance,
        )?;
        Ok(a / (1.0 - a) * x.powf(-1.0 / (1.0 - a)) * integral / PI)
    }

    /// `P(S > x)` for the standard law, without cancellation.
    fn standard_tail(&self, x: f64) -> Result<f64> {
        let a = self.alpha;
        let w = x.powf(-a / (1.0 - a));
        let v = quad::tanh_sinh_gaps(
            |phi, ga, gb| {
                let la = self.ln_kanter(ga.min(phi), gb);
                -(-(la.exp() * w)).exp_m1()
            },
            0.0,
            PI,
            self.quad.tolerance,
        )?;
        Ok(v / PI)
    }

    /// `ρ(z) = Σ_n c_n z^{-nα-1}`, the convergent large-`z` expansion.
    pub fn rho_series(&self, z: f64) -> f64 {
        self.series(z, |n| -(n as f64) * self.alpha - 1.0, |_| 1.0)
    }

    /// `P(Y > z)` from the termwise-integrated series.
    pub fn tail_series(&self, z: f64) -> f64 {
        let a = self.alpha;
        self.series(z, |n| -(n as f64) * a, |n| 1.0 / (n as f64 * a))
    }

    /// `∫_z^∞ ρ(u)u^{-α}du` from the series.
    fn moment_tail_series(&self, z: f64) -> f64 {
        let a = self.alpha;
        self.series(z, |n| -((n + 1) as f64) * a, |n| 1.0 / ((n + 1) as f64 * a))
    }

    fn series(&self, z: f64, power: impl Fn(usize) -> f64, factor: impl Fn(usize) -> f64) -> f64 {
        let a = self.alpha;
        let ln_sa = a * self.sigma.ln();
        let mut sum = 0.0;
        let mut comp = 0.0;
        for n in 1..=self.quad.series_terms {
            let nf = n as f64;
            let s = (nf * PI * a).sin();
            if s == 0.0 {
                continue;
            }
            let ln_mag = ln_gamma(nf * a + 1.0) - ln_gamma(nf + 1.0) + nf * ln_sa + power(n) * z.ln();
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            let term = sign * s * ln_mag.exp() * factor(n) / PI;
            // Neumaier summation
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    /// Density `ρ(z)` of `Y`.
    pub fn rho(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::domain(format!("density argument must be positive, got {z}")));
        }
        if z > self.series_cutoff() {
            return Ok(self.rho_series(z));
        }
        Ok(self.standard_density(z / self.sigma)? / self.sigma)
    }

    /// `P(Y ≤ z)`.
    pub fn cdf(&self, z: f64) -> Result<f64> {
        Ok(1.0 - self.tail(z)?)
    }

    /// `P(Y > z)`.
    pub fn tail(&self, z: f64) -> Result<f64> {
        if z <= 0.0 {
            return Ok(1.0);
        }
        if z > self.series_cutoff() {
            return Ok(self.tail_series(z));
        }
        self.standard_tail(z / self.sigma)
    }

    /// Mode location and `max ρ`, by a log-grid scan refined with golden
    /// section search.
    pub fn max_rho(&self) -> Result<(f64, f64)> {
        let f = |lz: f64| self.rho(lz.exp());
        let (lo, hi) = ((self.sigma * 1e-3).ln(), (self.sigma * 1e2).ln());
        let n = 200;
        let mut best = (lo, f64::NEG_INFINITY);
        for i in 0..=n {
            let lz = lo + (hi - lo) * i as f64 / n as f64;
            let v = f(lz)?;
            if v > best.1 {
                best = (lz, v);
            }
        }
        let d = (hi - lo) / n as f64;
        let (mut a, mut b) = (best.0 - d, best.0 + d);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut e = a + g * (b - a);
        let (mut fc, mut fe) = (f(c)?, f(e)?);
        while b - a > 1e-10 {
            if fc > fe {
                b = e;
                e = c;
                fe = fc;
                c = b - g * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + g * (b - a);
                fe = f(e)?;
            }
        }
        let lz = 0.5 * (a + b);
        Ok((lz.exp(), f(lz)?.max(best.1)))
    }

    /// `ĉ = c̄·α·∫_0^∞ ρ(z)z^{-α}dz`.
    ///
    /// Quadrature in `ln z` from where `ρ` underflows up to the series cutoff;
    /// the remainder comes from the series. Below the lower limit `ρ(z)z^{-α}`
    /// is bounded by `ρ(z_lo)z_lo^{-α}` times a superexponentially small factor.
    pub fn c_hat(&self) -> Result<f64> {
        let a = self.alpha;
        let z_hi = self.series_cutoff();
        let mut z_lo = self.sigma;
        while self.rho(z_lo)? > 1e-300 {
            z_lo *= 0.5;
        }
        let body = quad::gauss_kronrod(
            |lz| {
                let z = lz.exp();
                self.rho(z).unwrap_or(f64::NAN) * z.powf(1.0 - a)
            },
            z_lo.ln(),
            z_hi.ln(),
            1e-13,
            1e-11,
        )?;
        if !body.is_finite() {
            return Err(Error::numeric("ĉ quadrature produced a non-finite value"));
        }
        Ok(self.cbar() * a * (body + self.moment_tail_series(z_hi)))
    }

    /// One draw of `Y` via Kanter's representation `S = (A(U)/E)^{(1-α)/α}`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random::<f64>() * PI;
            let e: f64 = rng.sample(Exp1);
            if u <= 0.0 || e <= 0.0 {
                continue;
            }
            let s = (self.kanter(u) / e).powf((1.0 - self.alpha) / self.alpha);
            let y = self.sigma * s;
            if y > 0.0 && y.is_finite() {
                return y;
            }
        }
    }
}

/// Free-function form of [`StableDensity::rho`].
pub fn rho(density: &StableDensity, z: f64) -> Result<f64> {
    density.rho(z)
}

/// Free-function form of [`StableDensity::c_hat`].
pub fn c_hat(density: &StableDensity) -> Result<f64> {
    density.c_hat()
}

/// Free-function form of [`StableDensity::sample`].
pub fn sample_stable<R: Rng + ?Sized>(density: &StableDensity, rng: &mut R) -> f64 {
    density.sample(rng)
}

/// Upper bound on the Kolmogorov-Smirnov distance between the empirical law
/// of `samples` and the continuous distribution function `cdf`.
///
/// The CDF is evaluated only at every `stride`-th order statistic; monotonicity
/// of both functions bounds the discrepancy in between, so the result can
/// exceed the exact distance by at most `stride/n`.
pub fn ks_upper_bound<F>(samples: &mut [f64], stride: usize, cdf: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    let n = samples.len();
    if n == 0 {
        return Err(Error::domain("empty sample"));
    }
    samples.sort_by(f64::total_cmp);
    let stride = stride.max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().expect("nonempty") != n - 1 {
        idx.push(n - 1);
    }
    let vals: Vec<f64> = idx.par_iter().map(|&i| cdf(samples[i])).collect::<Result<_>>()?;
    let nf = n as f64;
    // at the order statistic i (0-based), the ECDF jumps from i/n to (i+1)/n
    let mut d: f64 = vals[0].max(1.0 / nf - vals[0]);
    d = d.max((vals.last().copied().unwrap() - (n - 1) as f64 / nf).max(1.0 - vals.last().unwrap()));
    for w in 0..idx.len() - 1 {
        let (i, j) = (idx[w], idx[w + 1]);
        let (fi, fj) = (vals[w], vals[w + 1]);
        // for i ≤ m ≤ j: F(x_m) - m/n ≤ F(x_j) - i/n and (m+1)/n - F(x_m) ≤ (j+1)/n - F(x_i)
        d = d.max(fj - i as f64 / nf).max((j + 1) as f64 / nf - fi);
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn levy_closed_form(z: f64) -> f64 {
        // α = 1/2: σ = π and g(x) = x^{-3/2} e^{-1/(4x)} / (2√π)
        let x = z / PI;
        x.powf(-1.5) * (-0.25 / x).exp() / (2.0 * PI.sqrt()) / PI
    }

    #[test]
    fn half_matches_closed_form() {
        let d = StableDensity::new(0.5).unwrap();
        assert!((d.scale() - PI).abs() < 1e-12);
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let z = 10f64.powf(-2.0 + 4.5 * i as f64 / 99.0);
            worst = worst.max((d.rho(z).unwrap() - levy_closed_form(z)).abs());
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn half_cdf_closed_form() {
        let d = StableDensity::new(0.5).unwrap();
        for &z in &[0.1, 1.0, 3.0, 30.0, 500.0] {
            let exact = statrs::function::erf::erfc(1.0 / (2.0 * (z / PI).sqrt()));
            assert!((d.cdf(z).unwrap() - exact).abs() < 1e-10, "{z}");
        }
    }

    #[test]
    fn series_agrees_with_quadrature_near_cutoff() {
        for &a in &[0.25, 0.5, 0.75] {
            let d = StableDensity::new(a).unwrap();
            let z = d.series_cutoff();
            for &m in &[1.0, 2.0, 4.0] {
                let q = d.standard_density(m * z / d.sigma).unwrap() / d.sigma;
                let s = d.rho_series(m * z);
                assert!((q - s).abs() <= 1e-9 * q, "alpha {a} m {m}: {q} vs {s}");
                let qt = d.standard_tail(m * z / d.sigma).unwrap();
                assert!((qt - d.tail_series(m * z)).abs() <= 1e-9 * qt);
            }
        }
    }

    #[test]
    fn normalization() {
        for &a in &[0.25, 0.4, 0.5, 0.6, 0.75] {
            let d = StableDensity::new(a).unwrap();
            let z_hi = d.series_cutoff();
            let mut z_lo = d.sigma;
            while d.rho(z_lo).unwrap() > 1e-300 {
                z_lo *= 0.5;
            }
            let body = quad::gauss_kronrod(
                |lz| {
                    let z = lz.exp();
                    d.rho(z).unwrap() * z
                },
                z_lo.ln(),
                z_hi.ln(),
                1e-14,
                1e-12,
            )
            .unwrap();
            let total = body + d.tail_series(z_hi);
            assert!((total - 1.0).abs() < 1e-8, "alpha {a}: {total}");
        }
    }

    #[test]
    fn tail_exponent() {
        for &a in &[0.3, 0.6] {
            let d = StableDensity::new(a).unwrap();
            let (z1, z2) = (1e10 * d.sigma, 1e11 * d.sigma);
            let slope = (d.rho(z2).unwrap() / d.rho(z1).unwrap()).ln() / (z2 / z1).ln();
            assert!((slope + 1.0 + a).abs() < 1e-3, "{slope}");
            assert!((d.rho(z2).unwrap() / (a * z2.powf(-1.0 - a)) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn c_hat_identity() {
        for &a in &[0.25, 0.4, 0.5, 0.6, 0.75] {
            let d = StableDensity::new(a).unwrap();
            let c = d.c_hat().unwrap();
            assert!((c - (PI * a).sin() / PI).abs() < 1e-6, "alpha {a}: {c}");
        }
    }

    #[test]
    fn max_rho_half() {
        // the Lévy density peaks at x = 1/6
        let d = StableDensity::new(0.5).unwrap();
        let (z, m) = d.max_rho().unwrap();
        assert!((z - PI / 6.0).abs() < 1e-6);
        assert!((m - levy_closed_form(PI / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn sampler_positive_and_ks() {
        let d = StableDensity::new(0.7).unwrap();
        let mut r = rng::stream(7, "stable-test", 0);
        let mut xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut r)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let ks = ks_upper_bound(&mut xs, 20, |z| d.cdf(z)).unwrap();
        assert!(ks < 1.63 / (1e5f64).sqrt() + 2e-4, "{ks}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(StableDensity::new(1.0).is_err());
        let d = StableDensity::new(0.5).unwrap();
        assert!(d.rho(0.0).is_err());
        assert!(d.rho(-1.0).is_err());
    }
}
