//! Acceptance suite: one line per criterion with the measured statistic, the
//! tolerance and the runtime against its limit.
//!
//! The process exits 0 even when criteria fail, so that `cargo test` reports
//! honest failures without aborting the workspace run; set
//! `ACCEPTANCE_STRICT=1` to turn any failure into a nonzero exit. Set
//! `ACCEPTANCE_ONLY=4,9` to run a subset.

use std::time::{Duration, Instant};

use infmix::dist::{convolve, convolve_power, discretize, LatticeDist};
use infmix::flow::{
    correlation_mc, decomposition_diagnostics, renewal_sum_eval, BaseSet, IidBase, IidRoof, ProductSet, RenewalConfig,
};
use infmix::lsv::{
    invariant_measure, orbit_stats, qi_constant, return_sequence, shuffled, LsvSystem, MeasureEstimate, MeasureMethod,
    RoofSpec,
};
use infmix::regvar::TailModel;
use infmix::stable::{ks_upper_bound, StableDensity};
use infmix::verify::{self, BaseConfig, LdConfig, LltConfig, LocalLdConfig, MixingConfig};
use num_rational::BigRational;
use rand::Rng;
use statrs::function::erf::erfc;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn pareto(alpha: f64) -> TailModel {
    TailModel::pareto(alpha, 1.0).unwrap()
}

fn stable_constant() -> Outcome {
    let mut worst: f64 = 0.0;
    for a in [0.25, 0.4, 0.5, 0.6, 0.75] {
        let c = StableDensity::new(a)?.c_hat()?;
        worst = worst.max((c - (std::f64::consts::PI * a).sin() / std::f64::consts::PI).abs());
    }
    Ok((worst <= 1e-4, format!("max |c_hat - sin(pi a)/pi| = {worst:.2e} (tol 1e-4)")))
}

/// At α = ½, `Y = πS` with `S` Lévy: `P(S ≤ s) = erfc(1/(2√s))`.
fn half_cdf(z: f64) -> f64 {
    let s = z / std::f64::consts::PI;
    if s <= 0.0 {
        0.0
    } else {
        erfc(0.5 / s.sqrt())
    }
}

fn half_density(z: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let s = z / pi;
    s.powf(-1.5) * (-0.25 / s).exp() / (2.0 * pi.sqrt()) / pi
}

fn half_closed_form() -> Outcome {
    let d = StableDensity::new(0.5)?;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let z = 0.02 + 30.0 * i as f64 / 99.0;
        worst = worst.max((d.rho(z)? - half_density(z)).abs());
    }
    let n = 1_000_000;
    let mut rng = infmix::rng::stream(2024, "acceptance-ks", 0);
    let mut xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
    let ks = ks_upper_bound(&mut xs, 1, |z| Ok(half_cdf(z)))?;
    // asymptotic Kolmogorov critical value at level 0.01
    let crit = 1.6276 / (n as f64).sqrt();
    Ok((
        worst <= 1e-8 && ks <= crit,
        format!("density error {worst:.2e} (tol 1e-8); KS {ks:.2e} vs critical {crit:.2e}"),
    ))
}

fn brute_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn fft_exactness() -> Outcome {
    let mut rng = infmix::rng::stream(7, "acceptance-toy", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut w: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let d = LatticeDist::new(1.0, 0.5, w.clone(), 0.0)?;
        let mut brute = w.clone();
        for k in 1..=4u64 {
            if k > 1 {
                brute = brute_convolve(&brute, &w);
            }
            let f = convolve_power(&d, k, None)?;
            let diff = f.weights().iter().zip(&brute).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(diff).max(if f.len() == brute.len() { 0.0 } else { 1.0 });
        }
        let pair = convolve(&d, &d, None)?;
        let b2 = brute_convolve(&w, &w);
        worst = worst.max(pair.weights().iter().zip(&b2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let base = discretize(&pareto(0.6), 1.0, 4096.0)?;
    let mut defect: f64 = 0.0;
    for j in 0..=14 {
        let p = convolve_power(&base, 1 << j, Some(2e6))?;
        defect = defect.max(p.mass_defect());
    }
    let toy = LatticeDist::new(0.0, 1.0, vec![1.0 / 64.0; 64], 0.0)?;
    let big = convolve_power(&toy, 1 << 14, None)?;
    defect = defect.max(big.mass_defect());
    Ok((
        worst <= 1e-12 && defect <= 1e-10,
        format!("max |fft - brute| = {worst:.2e} (tol 1e-12); mass defect up to k=2^14 {defect:.2e} (tol 1e-10)"),
    ))
}

fn llt() -> Outcome {
    let cfg = LltConfig::default();
    let mut ok = true;
    let mut msg = Vec::new();
    for a in [0.5, 0.75] {
        let m = pareto(a);
        let ks: Vec<u64> = (8..=14).map(|j| 1u64 << j).collect();
        let (reports, trend) = verify::llt_trend(&m, &ks, &cfg)?;
        let at = &reports[4];
        ok &= at.pass && trend.pass;
        let stats: Vec<String> = reports.iter().map(|r| format!("{:.2e}", r.statistic)).collect();
        msg.push(format!(
            "a={a}: k=2^12 stat+budget {:.3e} vs {:.3e} [{}]; k-doubling 2^8..2^14 [{}] {}",
            at.inflated(),
            at.threshold,
            if at.pass { "ok" } else { "over" },
            stats.join(" "),
            if trend.pass { "decreasing" } else { "not decreasing" }
        ));
    }
    Ok((ok, msg.join("; ")))
}

fn anticoncentration() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    for a in [0.6, 0.75] {
        let r = verify::anticonc_check_model(&pareto(a), 12, 1.0)?;
        ok &= r.pass;
        msg.push(format!("a={a}: max/median {:.3} (tol 3)", r.inflated()));
    }
    let m = pareto(0.6);
    let point = LatticeDist::point_mass(1.0, 1.0)?;
    let r = verify::anticonc_check(&point, &|k| m.rate(k), 12, 5000.0, "point mass")?;
    ok &= !r.pass;
    msg.push(format!("point mass: max/median {:.3e}, check {}", r.inflated(), if r.pass { "passed (wrong)" } else { "fails as required" }));
    Ok((ok, msg.join("; ")))
}

fn sharp_ld() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    for a in [0.4, 0.6] {
        let m = pareto(a);
        let pairs = [50u64, 200]
            .iter()
            .map(|&k| Ok((k, verify::ld_time(&m, k, 0.01)?)))
            .collect::<infmix::Result<Vec<_>>>()?;
        let r = verify::ld_check(&m, &pairs, &LdConfig::default())?;
        ok &= r.pass;
        let ratios: Vec<String> = r.details["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|row| format!("k={} {:.5}", row["k"], row["ratio"].as_f64().unwrap()))
            .collect();
        msg.push(format!("a={a}: {} (band [0.9, 1.1])", ratios.join(", ")));
    }
    Ok((ok, msg.join("; ")))
}

fn local_ld() -> Outcome {
    let r = verify::local_ld_check(&pareto(0.4), 1 << 8, &LocalLdConfig::default())?;
    let u = verify::unit_interval_check(&pareto(0.7), 1 << 8, 0.25, 1 << 20)?;
    Ok((
        r.pass && u.pass,
        format!(
            "a=0.4 k=2^8: C1={:.3e} C2={:.3e}, held-out max ratio {:.3} (tol 1.2); a=0.7: Cbar(2^8)={:.4} Cbar(2^9)={:.4}, change {:.1}% (tol 25%)",
            r.details["C1"].as_f64().unwrap_or(f64::NAN),
            r.details["C2"].as_f64().unwrap_or(f64::NAN),
            r.inflated(),
            u.details["C_k"].as_f64().unwrap_or(f64::NAN),
            u.details["C_2k"].as_f64().unwrap_or(f64::NAN),
            100.0 * u.statistic
        ),
    ))
}

fn admissibility() -> Outcome {
    let one = BigRational::from_integer(1.into());
    let half = BigRational::new(1.into(), 2.into());
    let mut ok = true;
    for d in [2i64, 3, 7, 10, 1000, 1_000_003] {
        for n in 1..d.min(2000) {
            let a = BigRational::new(n.into(), d.into());
            let t = verify::ExponentTriple::new(a.clone(), -one.clone(), one.clone());
            ok &= verify::admissible(&[t], &a)? == (a > half);
        }
    }
    let mut msg = vec![format!("(a,-1,1) admissible iff a>1/2 on exact grids: {}", if ok { "agrees" } else { "DISAGREES" })];
    for a in ["0.3", "0.7"] {
        let rep = verify::exponent_report(&verify::parse_rational(a)?)?;
        ok &= rep.pass;
        for row in rep.details.as_array().unwrap() {
            msg.push(format!("a={a} {}: {}", row["label"].as_str().unwrap(), row["admissible"]));
        }
    }
    Ok((ok, msg.join("; ")))
}

fn iid_mixing() -> Outcome {
    let m = pareto(0.5);
    let set = ProductSet::new(BaseSet::All, 0.0, 0.5);
    let t = 1e4;
    let sum = renewal_sum_eval(&m, &set, &set, t, &RenewalConfig::default())?;
    let nu = 0.25;
    let scale = m.slow(t) * t.powf(0.5);
    let scaled = sum.value * scale / nu;
    let target = 1.0 / std::f64::consts::PI;
    let rel = (scaled / target - 1.0).abs() + sum.tail_budget * scale / nu / target;
    let base = IidBase::new(m, IidRoof::Continuous)?;
    let est = correlation_mc(&base, &set, &set, &[t], 10_000_000, 11)?;
    let z = (est[0].raw_corr - sum.value).abs() / est[0].stderr;
    let dec = decomposition_diagnostics(&sum, &m, 0.25)?;
    Ok((
        rel <= 0.02 && z <= 3.0 && dec.middle_share() >= 0.9,
        format!(
            "renewal scaled {scaled:.5} vs 1/pi {target:.5}: rel {:.2}% (tol 2%); MC {:.4e} vs {:.4e}, {z:.2} stderr (tol 3); middle share {:.3} (tol 0.9)",
            100.0 * rel,
            est[0].raw_corr,
            sum.value,
            dec.middle_share()
        ),
    ))
}

fn mixing_cfg(base: BaseConfig, set: ProductSet, t_grid: Vec<f64>, samples: u64, seed: u64) -> MixingConfig {
    MixingConfig { base, a: set, b: set, t_grid, samples, seed, limit_tolerance: 0.15 }
}

fn trichotomy() -> Outcome {
    let m = pareto(0.5);
    let set = ProductSet::new(BaseSet::All, 0.0, 0.4);
    let grid = vec![1000.0, 2000.0, 4000.0];
    let mut ok = true;
    let mut msg = Vec::new();
    let cases = [
        ("integer", IidRoof::Lattice { offset: 1.0, span: 1.0 }),
        ("pi+n", IidRoof::Lattice { offset: std::f64::consts::PI, span: 1.0 }),
        ("aperiodic", IidRoof::Continuous),
    ];
    for (i, (label, roof)) in cases.into_iter().enumerate() {
        let cfg = mixing_cfg(BaseConfig::Iid { model: m, roof }, set, grid.clone(), 1_000_000, 100 + i as u64);
        let reps = verify::mixing_suite(&cfg)?;
        let r = &reps[0];
        ok &= r.pass;
        let what = if label == "integer" {
            format!("phase separation {:.1} stderr (tol > 5)", -r.statistic)
        } else {
            format!("Cauchy trend {:.2} stderr (tol 3)", r.statistic)
        };
        msg.push(format!("{label}: {what}"));
    }
    Ok((ok, msg.join("; ")))
}

fn slope(stats: &infmix::lsv::OrbitStats, lo: f64, hi: f64) -> f64 {
    let ns = verify::geometric_grid(lo, hi, 24);
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let n = n.round() as usize;
            ((n as f64).ln(), stats.tail_of_return(n).ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn lsv_structure() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    let mut exact = true;
    let mut resid: f64 = 0.0;
    for r in [1.1, 1.5, 2.0, 2.5, 3.0] {
        let sys = LsvSystem::new(r, 10_000)?;
        exact &= sys.y(1) == 0.5 && sys.x(2) == 0.75;
        for n in 1..sys.n_max() {
            resid = resid.max((sys.left(sys.y(n + 1)) - sys.y(n)).abs());
        }
    }
    ok &= exact && resid <= 1e-14;
    msg.push(format!("y_1=1/2, x_2=3/4 exact: {exact}; boundary residual {resid:.1e} (tol 1e-14)"));
    for r in [1.5, 2.0] {
        let sys = LsvSystem::new(r, 100_000)?;
        let st = orbit_stats(&sys, 1_000_000_000, 256, 100_001, 5)?;
        let s = slope(&st, 1e3, 1e5);
        let birkhoff = MeasureEstimate { masses: st.masses(), method: MeasureMethod::Birkhoff { n_orbit: st.steps, seed: 5 } };
        let ulam = invariant_measure(&sys, MeasureMethod::Ulam { n_cells: 256, n_iter: 100_000 }, 256)?;
        let tv = birkhoff.total_variation(&ulam)?;
        ok &= (s + 1.0 / r).abs() <= 0.05 && tv <= 0.01;
        msg.push(format!("r={r}: slope {s:.4} vs {:.4} (tol 0.05), TV {tv:.2e} (tol 0.01)", -1.0 / r));
    }
    Ok((ok, msg.join("; ")))
}

fn lsv_mixing() -> Outcome {
    let base = BaseConfig::Lsv { r: 1.5, n_max: 10_000, roof: RoofSpec::Affine { p: 1.0, q: 1.0 }, cells: 256 };
    let set = ProductSet::new(BaseSet::Interval { lo: 0.6, hi: 1.0 }, 0.0, 0.5);
    let cfg = mixing_cfg(base, set, vec![250.0, 500.0, 1000.0, 2000.0], 1_000_000, 12);
    let r = &verify::mixing_suite(&cfg)?[0];
    let scaled: Vec<String> = r.details["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| format!("{:.4}±{:.4}", e["scaled"].as_f64().unwrap(), e["scaled_stderr"].as_f64().unwrap()))
        .collect();
    Ok((r.pass, format!("scaled [{}]; Cauchy trend {:.2} stderr (tol 3){}", scaled.join(" "), r.statistic, r.notes.join("; "))))
}

fn quasi_independence() -> Outcome {
    let sys = LsvSystem::new(1.5, 10_000)?;
    let long = return_sequence(&sys, 40_000_000, 13)?;
    let short = &long[..10_000_000];
    let surrogate = qi_constant(&shuffled(&long, 14), 1, 1, 0.05)?;
    let q_short = qi_constant(short, 1, 1, 0.05)?;
    let q_long = qi_constant(&long, 1, 1, 0.05)?;
    let worst = |q: &infmix::lsv::QiReport| {
        q.pairs.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio)).map(|p| p.half_width).unwrap_or(f64::INFINITY)
    };
    let drift = (q_long.k_hat - q_short.k_hat).abs();
    let band = worst(&q_short) + worst(&q_long);
    let ok = surrogate.consistent_with_independence()
        && q_long.k_hat.is_finite()
        && q_long.k_hat > 0.0
        && drift <= band;
    Ok((
        ok,
        format!(
            "surrogate K={:.4} ({} pairs, all within band: {}); LSV K at 1e7 {:.4}, at 4e7 {:.4}, change {drift:.4} vs band {band:.4}",
            surrogate.k_hat,
            surrogate.pairs.len(),
            surrogate.consistent_with_independence(),
            q_short.k_hat,
            q_long.k_hat
        ),
    ))
}

fn main() {
    let secs = Duration::from_secs;
    let all = [
        Criterion { id: 1, name: "stable constant identity", limit: secs(10), run: stable_constant },
        Criterion { id: 2, name: "alpha=1/2 closed form and sampler", limit: secs(30), run: half_closed_form },
        Criterion { id: 3, name: "FFT oracle exactness", limit: secs(10), run: fft_exactness },
        Criterion { id: 4, name: "local limit theorem", limit: secs(120), run: llt },
        Criterion { id: 5, name: "anticoncentration", limit: secs(60), run: anticoncentration },
        Criterion { id: 6, name: "sharp large deviations", limit: secs(60), run: sharp_ld },
        Criterion { id: 7, name: "local large deviations", limit: secs(120), run: local_ld },
        Criterion { id: 8, name: "admissibility logic", limit: secs(1), run: admissibility },
        Criterion { id: 9, name: "i.i.d. mixing", limit: secs(600), run: iid_mixing },
        Criterion { id: 10, name: "trichotomy", limit: secs(600), run: trichotomy },
        Criterion { id: 11, name: "LSV structure", limit: secs(900), run: lsv_structure },
        Criterion { id: 12, name: "LSV mixing trend", limit: secs(1800), run: lsv_mixing },
        Criterion { id: 13, name: "quasi-independence", limit: secs(300), run: quasi_independence },
    ];
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failures = 0;
    for c in all.iter().filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.id))) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((p, d)) => (p, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = took <= c.limit;
        let verdict = if pass && in_time { "PASS" } else { "FAIL" };
        if verdict == "FAIL" {
            failures += 1;
        }
        println!(
            "criterion {:>2} {verdict} {}: {detail} | {:.1} s (limit {} s{})",
            c.id,
            c.name,
            took.as_secs_f64(),
            c.limit.as_secs(),
            if in_time { "" } else { ", exceeded" }
        );
    }
    println!("acceptance: {failures} failing");
    if failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
