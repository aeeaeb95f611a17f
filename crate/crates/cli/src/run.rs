use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use infmix::dist::{convolve_power, discretize};
use infmix::flow::{correlation_mc, IidBase, LsvInducedBase};
use infmix::lsv::{orbit_stats, LsvSystem};
use infmix::stable::StableDensity;
use infmix::verify::{self, BaseConfig, CheckReport};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::*;

/// Outputs of one command before they are written.
struct Artifacts {
    csv: String,
    summary: String,
    budgets: Value,
    extra: Vec<(&'static str, String)>,
    status: i32,
}

/// Runs the command and writes its artifacts into `out`; returns the exit
/// status.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let start = Instant::now();
    let art = match cfg {
        ExperimentConfig::StableDensity(c) => stable_density(c)?,
        ExperimentConfig::ConvolveOracle(c) => convolve_oracle(c)?,
        ExperimentConfig::LsvTail(c) => lsv_tail(c)?,
        ExperimentConfig::MixEstimate(c) => mix_estimate(c)?,
        ExperimentConfig::Verify(c) => verify_suite(c)?,
    };
    let wall = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let name = cfg.command();
    let csv_name = format!("{name}.csv");
    let mut files = vec![csv_name.clone(), "manifest.json".to_string(), "summary.txt".to_string()];
    std::fs::write(out.join(&csv_name), &art.csv)?;
    for (f, body) in &art.extra {
        std::fs::write(out.join(f), body)?;
        files.push(f.to_string());
    }
    let manifest = json!({
        "command": name,
        "config": cfg,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall,
        "budgets": art.budgets,
        "exit_status": art.status,
        "files": files,
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let summary = format!("{name}: {}\nwall time {wall:.2} s\n", art.summary.trim_end());
    std::fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(art.status)
}

fn stable_density(c: &StableDensityConfig) -> Result<Artifacts> {
    let d = StableDensity::new(c.alpha)?;
    let grid = linear_grid(&c.grid, "grid")?;
    let mut csv = String::from("z,rho\n");
    let mut max: f64 = 0.0;
    for z in grid {
        let r = d.rho(z)?;
        max = max.max(r);
        writeln!(csv, "{},{}", fmt_f(z), fmt_f(r))?;
    }
    Ok(Artifacts {
        csv,
        summary: format!("alpha {}, largest density on grid {max:.6}", c.alpha),
        budgets: json!({ "scale": d.scale() }),
        extra: vec![],
        status: 0,
    })
}

fn convolve_oracle(c: &ConvolveOracleConfig) -> Result<Artifacts> {
    let (lo, hi) = interval(&c.query, "query")?;
    if c.k.is_empty() {
        return Err(infmix::Error::config("k", "no k given").into());
    }
    let d = discretize(&c.model, c.step, c.cutoff)?;
    let mut csv = String::from("k,lo,hi,prob,overflow_budget\n");
    let mut budgets = Vec::new();
    let mut summary = String::new();
    for &k in &c.k {
        let dk = if k == 1 { d.clone() } else { convolve_power(&d, k, Some(c.cutoff))? };
        let p = dk.interval_prob(lo, hi);
        let b = dk.interval_budget(lo, hi);
        writeln!(csv, "{k},{},{},{},{}", fmt_f(lo), fmt_f(hi), fmt_f(p), fmt_f(b))?;
        writeln!(summary, "k={k}: P(sum in [{lo}, {hi}]) = {p:.6e} ± {b:.1e}")?;
        budgets.push(json!({ "k": k, "overflow": dk.overflow(), "mass_defect": dk.mass_defect(), "interval": b }));
    }
    Ok(Artifacts { csv, summary, budgets: Value::Array(budgets), extra: vec![], status: 0 })
}

fn lsv_tail(c: &LsvTailConfig) -> Result<Artifacts> {
    let sys = LsvSystem::new(c.r, c.nmax)?;
    let st = orbit_stats(&sys, c.orbit, 1, c.nmax + 1, c.seed)?;
    let mut csv = String::from("n,x_n,y_n,mu_R_gt_n\n");
    for n in 1..=c.nmax {
        writeln!(csv, "{n},{},{},{}", fmt_f(sys.x(n)), fmt_f(sys.y(n)), fmt_f(st.tail_of_return(n)))?;
    }
    Ok(Artifacts {
        csv,
        summary: format!(
            "r {}, {} induced steps, mu(R > {}) = {:.6e}",
            c.r,
            st.steps,
            c.nmax,
            st.tail_of_return(c.nmax)
        ),
        budgets: json!({ "returns_beyond_nmax": st.ret_over, "steps": st.steps }),
        extra: vec![],
        status: 0,
    })
}

fn mix_estimate(c: &MixEstimateConfig) -> Result<Artifacts> {
    if c.t_grid.is_empty() {
        return Err(infmix::Error::config("t-grid", "time grid is empty").into());
    }
    let est = match c.base_config()? {
        BaseConfig::Iid { model, roof } => {
            let base = IidBase::new(model, roof)?;
            c.a.validate(&base, "A")?;
            c.b.validate(&base, "B")?;
            correlation_mc(&base, &c.a, &c.b, &c.t_grid, c.samples, c.seed)?
        }
        BaseConfig::Lsv { r, n_max, roof, cells } => {
            let base = LsvInducedBase::new(LsvSystem::new(r, n_max)?, roof, cells)?;
            c.a.validate(&base, "A")?;
            c.b.validate(&base, "B")?;
            correlation_mc(&base, &c.a, &c.b, &c.t_grid, c.samples, c.seed)?
        }
    };
    let mut csv = String::from("t,raw,scaled,stderr,n,seed\n");
    let mut summary = String::new();
    for e in &est {
        writeln!(csv, "{}", estimate_row(e))?;
        writeln!(summary, "t={}: scaled {:.5} ± {:.5}", e.t, e.scaled, e.scaled_stderr)?;
    }
    let trend = verify::cauchy_trend(&est);
    writeln!(summary, "largest successive change {trend:.2} combined stderr")?;
    Ok(Artifacts {
        csv,
        summary,
        budgets: json!({ "max_stderr": est.iter().map(|e| e.stderr).fold(0.0, f64::max), "trend": trend }),
        extra: vec![],
        status: 0,
    })
}

type Job<'a> = Box<dyn Fn() -> infmix::Result<Vec<CheckReport>> + Send + Sync + 'a>;

fn jobs(c: &VerifyConfig) -> Vec<Job<'_>> {
    let m = c.model;
    let mut v: Vec<Job> = Vec::new();
    if c.suite.includes(Suite::Llt) {
        v.push(Box::new(move || {
            let d = StableDensity::new(m.alpha())?;
            Ok(vec![verify::llt_check(&m, c.llt.k, &d, &c.llt.check)?])
        }));
    }
    if c.suite.includes(Suite::Anticonc) {
        v.push(Box::new(move || {
            let a = &c.anticonc;
            Ok(vec![verify::anticonc_check_model(&m, a.j_max, a.trunc_factor)?])
        }));
        v.push(Box::new(move || {
            // a point mass has no anticoncentration; the check must reject it
            let point = infmix::dist::LatticeDist::point_mass(m.t_min(), 1.0)?;
            let top = m.t_min() * (1u64 << c.anticonc.j_max) as f64 + 1.0;
            let inner = verify::anticonc_check(&point, &|k| m.rate(k), c.anticonc.j_max, top, "point mass")?;
            let mut rep = inner.clone();
            rep.name = "anticoncentration rejects point mass".into();
            rep.pass = !inner.pass;
            rep.notes.push("passes when the inner check fails".into());
            Ok(vec![rep])
        }));
    }
    if c.suite.includes(Suite::Ld) {
        v.push(Box::new(move || {
            let pairs = c
                .ld
                .ks
                .iter()
                .map(|&k| Ok((k, verify::ld_time(&m, k, c.ld.level)?)))
                .collect::<infmix::Result<Vec<_>>>()?;
            Ok(vec![verify::ld_check(&m, &pairs, &c.ld.check)?])
        }));
    }
    if c.suite.includes(Suite::LocalLd) {
        v.push(Box::new(move || {
            let mut out = vec![verify::local_ld_check(&m, c.local_ld.k, &c.local_ld.check)?];
            let a = verify::parse_rational(&format!("{}", m.alpha()))?;
            out.push(verify::exponent_report(&a)?);
            if m.alpha() > 0.5 {
                out.push(verify::unit_interval_check(&m, c.local_ld.k, 0.25, c.local_ld.check.cells)?);
            }
            Ok(out)
        }));
    }
    if c.suite.includes(Suite::Mixing) {
        v.push(Box::new(move || verify::mixing_suite(&c.mixing)));
    }
    v
}

fn verify_suite(c: &VerifyConfig) -> Result<Artifacts> {
    let results: Vec<infmix::Result<Vec<CheckReport>>> = jobs(c).par_iter().map(|j| j()).collect();
    let mut reports = Vec::new();
    for r in results {
        reports.extend(r?);
    }
    let mut csv = String::from("name,statistic,threshold,budget,pass,inconclusive\n");
    let mut summary = String::new();
    for r in &reports {
        let budget = r.inflated() - r.statistic;
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.name.replace(',', ";"),
            fmt_f(r.statistic),
            fmt_f(r.threshold),
            fmt_f(budget),
            r.pass,
            r.inconclusive
        )?;
        let verdict = if r.inconclusive {
            "INCONCLUSIVE"
        } else if r.pass {
            "PASS"
        } else {
            "FAIL"
        };
        writeln!(summary, "{verdict:>12}  {}  statistic {:.4e} + budget {budget:.1e} vs {:.4e}", r.name, r.statistic, r.threshold)?;
        for n in &r.notes {
            writeln!(summary, "              {n}")?;
        }
    }
    let failed = reports.iter().any(|r| !r.pass && !r.inconclusive);
    let inconclusive = reports.iter().any(|r| r.inconclusive);
    let status = if failed {
        1
    } else if inconclusive {
        2
    } else {
        0
    };
    let budgets = reports.iter().map(|r| json!({ "name": r.name, "terms": r.budget_terms })).collect();
    Ok(Artifacts {
        csv,
        summary,
        budgets: Value::Array(budgets),
        extra: vec![("report.json", serde_json::to_string_pretty(&reports)?)],
        status,
    })
}
