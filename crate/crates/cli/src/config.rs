//! Experiment configuration: one section per subcommand, loadable from JSON
//! and overridable from flags.

use infmix::flow::{BaseSet, IidRoof, MixingEstimate, ProductSet};
use infmix::lsv::RoofSpec;
use infmix::regvar::TailModel;
use infmix::verify::{BaseConfig, LdConfig, LltConfig, LocalLdConfig, MixingConfig};
use infmix::Error;
use serde::{Deserialize, Serialize};

/// A fully resolved run; serializes to the manifest and reads back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    StableDensity(StableDensityConfig),
    ConvolveOracle(ConvolveOracleConfig),
    LsvTail(LsvTailConfig),
    MixEstimate(MixEstimateConfig),
    Verify(VerifyConfig),
}

impl ExperimentConfig {
    pub fn command(&self) -> &'static str {
        match self {
            ExperimentConfig::StableDensity(_) => "stable-density",
            ExperimentConfig::ConvolveOracle(_) => "convolve-oracle",
            ExperimentConfig::LsvTail(_) => "lsv-tail",
            ExperimentConfig::MixEstimate(_) => "mix-estimate",
            ExperimentConfig::Verify(_) => "verify",
        }
    }
}

fn pareto_half() -> TailModel {
    TailModel::pareto(0.5, 1.0).expect("valid model")
}

/// `lo:hi:n` with `n` evenly spaced points.
pub fn linear_grid(spec: &str, field: &str) -> Result<Vec<f64>, Error> {
    let (lo, hi, n) = triple(spec, field)?;
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn triple(spec: &str, field: &str) -> Result<(f64, f64, usize), Error> {
    let bad = |m: &str| Error::config(field, format!("`{spec}`: {m}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected lo:hi:n"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad("bad lower end"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad("bad upper end"))?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad("bad point count"))?;
    if n == 0 {
        return Err(bad("grid is empty"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(bad("need finite lo ≤ hi"));
    }
    Ok((lo, hi, n))
}

/// Time grids: `t0:t1:n` is geometric, otherwise a comma-separated list.
pub fn time_grid(spec: &str) -> Result<Vec<f64>, Error> {
    const FIELD: &str = "t-grid";
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(Error::config(FIELD, "time grid is empty"));
    }
    if spec.contains(':') {
        let (lo, hi, n) = triple(spec, FIELD)?;
        if !(lo > 0.0) {
            return Err(Error::config(FIELD, "geometric grid needs t0 > 0"));
        }
        return Ok(infmix::verify::geometric_grid(lo, hi, n));
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::config(FIELD, format!("cannot parse `{s}`"))))
        .collect()
}

/// `lo:hi` interval.
pub fn interval(spec: &str, field: &str) -> Result<(f64, f64), Error> {
    let bad = || Error::config(field, format!("`{spec}`: expected lo:hi"));
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn numbers(spec: &str, field: &str) -> Result<Vec<f64>, Error> {
    spec.split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::config(field, format!("cannot parse `{s}` in `{spec}`"))))
        .collect()
}

/// `all:a1:a2`, `lo:hi:a1:a2`, or a JSON object.
pub fn product_set(spec: &str, field: &str) -> Result<ProductSet, Error> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        return serde_json::from_str(spec).map_err(|e| Error::config(field, e.to_string()));
    }
    if let Some(rest) = spec.strip_prefix("all:") {
        let v = numbers(rest, field)?;
        if v.len() == 2 {
            return Ok(ProductSet::new(BaseSet::All, v[0], v[1]));
        }
    } else {
        let v = numbers(spec, field)?;
        if v.len() == 4 {
            return Ok(ProductSet::new(BaseSet::Interval { lo: v[0], hi: v[1] }, v[2], v[3]));
        }
    }
    Err(Error::config(field, format!("`{spec}`: expected all:a1:a2 or lo:hi:a1:a2")))
}

/// Roof of either base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoofChoice {
    Iid(IidRoof),
    Lsv(RoofSpec),
}

/// `continuous`, `lattice:offset:span`, `affine:p:q`, or a JSON object.
pub fn roof(spec: &str) -> Result<RoofChoice, Error> {
    const FIELD: &str = "roof";
    let spec = spec.trim();
    if spec.starts_with('{') {
        return serde_json::from_str(spec).map_err(|e| Error::config(FIELD, e.to_string()));
    }
    if spec == "continuous" {
        return Ok(RoofChoice::Iid(IidRoof::Continuous));
    }
    if let Some(rest) = spec.strip_prefix("lattice:") {
        let v = numbers(rest, FIELD)?;
        if v.len() == 2 {
            return Ok(RoofChoice::Iid(IidRoof::Lattice { offset: v[0], span: v[1] }));
        }
    }
    if let Some(rest) = spec.strip_prefix("affine:") {
        let v = numbers(rest, FIELD)?;
        if v.len() == 2 {
            return Ok(RoofChoice::Lsv(RoofSpec::Affine { p: v[0], q: v[1] }));
        }
    }
    Err(Error::config(FIELD, format!("`{spec}`: expected continuous, lattice:offset:span, affine:p:q or JSON")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StableDensityConfig {
    pub alpha: f64,
    /// `zmin:zmax:n`, evenly spaced.
    pub grid: String,
}

impl Default for StableDensityConfig {
    fn default() -> Self {
        StableDensityConfig { alpha: 0.5, grid: "0.01:10:100".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvolveOracleConfig {
    pub model: TailModel,
    pub step: f64,
    pub cutoff: f64,
    pub k: Vec<u64>,
    /// `lo:hi`.
    pub query: String,
}

impl Default for ConvolveOracleConfig {
    fn default() -> Self {
        ConvolveOracleConfig {
            model: pareto_half(),
            step: 0.01,
            cutoff: 1000.0,
            k: vec![1, 2, 4],
            query: "10:20".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsvTailConfig {
    pub r: f64,
    pub nmax: usize,
    /// Induced orbit length.
    pub orbit: u64,
    pub seed: u64,
}

impl Default for LsvTailConfig {
    fn default() -> Self {
        LsvTailConfig { r: 1.5, nmax: 1000, orbit: 10_000_000, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Iid,
    Lsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixEstimateConfig {
    pub base: BaseKind,
    /// Roof law for the i.i.d. base.
    pub model: TailModel,
    /// LSV parameter.
    pub r: f64,
    /// Cylinder table size for the LSV base.
    pub n_max: usize,
    /// Ulam cells for `μ(A)` on the LSV base.
    pub cells: usize,
    pub roof: RoofChoice,
    #[serde(rename = "A")]
    pub a: ProductSet,
    #[serde(rename = "B")]
    pub b: ProductSet,
    pub t_grid: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

impl Default for MixEstimateConfig {
    fn default() -> Self {
        let set = ProductSet::new(BaseSet::All, 0.0, 0.4);
        MixEstimateConfig {
            base: BaseKind::Iid,
            model: pareto_half(),
            r: 1.5,
            n_max: 10_000,
            cells: 256,
            roof: RoofChoice::Iid(IidRoof::Continuous),
            a: set,
            b: set,
            t_grid: vec![1000.0, 2000.0, 4000.0],
            samples: 100_000,
            seed: 1,
        }
    }
}

impl MixEstimateConfig {
    pub fn base_config(&self) -> Result<BaseConfig, Error> {
        match (self.base, &self.roof) {
            (BaseKind::Iid, RoofChoice::Iid(roof)) => Ok(BaseConfig::Iid { model: self.model, roof: *roof }),
            (BaseKind::Lsv, RoofChoice::Lsv(roof)) => {
                Ok(BaseConfig::Lsv { r: self.r, n_max: self.n_max, roof: roof.clone(), cells: self.cells })
            }
            _ => Err(Error::config("roof", "roof kind does not match the base")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Llt,
    Anticonc,
    Ld,
    LocalLd,
    Mixing,
    All,
}

impl Suite {
    pub fn includes(self, s: Suite) -> bool {
        self == Suite::All || self == s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LltSection {
    pub k: u64,
    pub check: LltConfig,
}

impl Default for LltSection {
    fn default() -> Self {
        LltSection { k: 1 << 10, check: LltConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnticoncSection {
    pub j_max: u32,
    /// Truncation as a multiple of `R(2^{j_max})`.
    pub trunc_factor: f64,
}

impl Default for AnticoncSection {
    fn default() -> Self {
        AnticoncSection { j_max: 10, trunc_factor: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdSection {
    pub ks: Vec<u64>,
    /// `k L(t)/t^α` at the evaluation time.
    pub level: f64,
    pub check: LdConfig,
}

impl Default for LdSection {
    fn default() -> Self {
        LdSection { ks: vec![50, 200], level: 0.01, check: LdConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalLdSection {
    pub k: u64,
    pub check: LocalLdConfig,
}

impl Default for LocalLdSection {
    fn default() -> Self {
        LocalLdSection { k: 1 << 8, check: LocalLdConfig { cells: 1 << 20, ..LocalLdConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub suite: Suite,
    /// Roof law shared by the analytic suites.
    pub model: TailModel,
    pub llt: LltSection,
    pub anticonc: AnticoncSection,
    pub ld: LdSection,
    pub local_ld: LocalLdSection,
    pub mixing: MixingConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let model = pareto_half();
        let set = ProductSet::new(BaseSet::All, 0.0, 0.4);
        VerifyConfig {
            suite: Suite::All,
            model,
            llt: LltSection::default(),
            anticonc: AnticoncSection::default(),
            ld: LdSection::default(),
            local_ld: LocalLdSection::default(),
            mixing: MixingConfig {
                base: BaseConfig::Iid { model, roof: IidRoof::Continuous },
                a: set,
                b: set,
                t_grid: vec![1000.0, 2000.0, 4000.0],
                samples: 1_000_000,
                seed: 1,
                limit_tolerance: 0.15,
            },
        }
    }
}

/// CSV row helper: floats with 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:.16e}")
    }
}

pub fn estimate_row(e: &MixingEstimate) -> String {
    format!("{},{},{},{},{},{}", fmt_f(e.t), fmt_f(e.raw_corr), fmt_f(e.scaled), fmt_f(e.stderr), e.n_samples, e.seed)
}
