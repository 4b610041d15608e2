//! Experiment registry, parameter handling and result persistence.
//!
//! Every experiment is a pure function of its resolved parameters and a seed.
//! [`execute`] returns the tables and test reports in memory; [`run`] also
//! writes one CSV per table, a `summary.csv` of the reports and a
//! `manifest.json`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::beta::construct_beta_circle;
use crate::error::{invalid, Error, Result};
use crate::green::{green_entry_explicit, green_from_field, invert_r_explicit, Provenance, USequence};
use crate::kernel::{self, EnsembleConfig, MbgConfig};
use crate::matsumoto_yor::{build_my_chain, kernel_chain_terminal, z_diffusion_step_check, ZDiffusionConfig};
use crate::spectrum::{self, RenewalConfig};
use crate::stats::{ks_one_sample, ks_two_sample, TestReport, MIN_KS_SAMPLES};
use crate::stochastic::{
    inverse_gamma_half_cdf_total, par_replicas, sample_gamma_half, IgParams, RngStream,
};

/// Raw `key=value` parameters as given on the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Params(BTreeMap<String, String>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key=value` items; later items override earlier ones.
    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        let mut out = Self::new();
        for item in items {
            let item = item.as_ref();
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("parameter `{item}` is not of the form key=value")))?;
            if key.trim().is_empty() {
                return Err(invalid(format!("parameter `{item}` has an empty key")));
            }
            out.0.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(out)
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// A declared parameter with its default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub key: &'static str,
    pub default: &'static str,
}

const fn p(key: &'static str, default: &'static str) -> ParamSpec {
    ParamSpec { key, default }
}

/// Parameters after defaults are filled in and unknown keys rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    values: BTreeMap<&'static str, String>,
}

impl Resolved {
    fn resolve(specs: &[ParamSpec], given: &Params) -> Result<Self> {
        if let Some((key, _)) = given.iter().find(|(k, _)| !specs.iter().any(|s| s.key == *k)) {
            let known: Vec<&str> = specs.iter().map(|s| s.key).collect();
            return Err(invalid(format!("unknown parameter `{key}`; expected one of {}", known.join(", "))));
        }
        let values = specs
            .iter()
            .map(|s| (s.key, given.get(s.key).unwrap_or(s.default).to_string()))
            .collect();
        Ok(Self { values })
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.raw(key))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let x = self.f64(key)?;
        if !(x > 0.0) {
            return Err(invalid(format!("`{key}` must be positive, got {x}")));
        }
        Ok(x)
    }

    fn count(&self, key: &str) -> Result<usize> {
        let raw = self.raw(key);
        raw.parse::<usize>()
            .map_err(|_| invalid(format!("`{key}` must be a nonnegative integer, got `{raw}`")))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        let out = self
            .raw(key)
            .split(',')
            .filter(|x| !x.trim().is_empty())
            .map(|x| parse_f64(key, x.trim()))
            .collect::<Result<Vec<_>>>()?;
        if out.is_empty() {
            return Err(invalid(format!("`{key}` needs at least one value")));
        }
        Ok(out)
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    let x = match raw {
        "pi" => PI,
        _ => raw
            .parse::<f64>()
            .map_err(|_| invalid(format!("`{key}` must be a number, got `{raw}`")))?,
    };
    if !x.is_finite() {
        return Err(invalid(format!("`{key}` must be finite")));
    }
    Ok(x)
}

/// A named numeric table, written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn samples(name: &str, values: &[f64]) -> Self {
        let mut t = Self::new(name, &["index", "value"]);
        for (i, v) in values.iter().enumerate() {
            t.push(vec![i.to_string(), num(*v)]);
        }
        t
    }
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Tables and verdicts produced by one experiment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub reports: Vec<TestReport>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(TestReport::passed)
    }

    pub fn report(&self, label: &str) -> Option<&TestReport> {
        self.reports.iter().find(|r| r.label == label)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

type Runner = fn(&Resolved, &RngStream) -> Result<Outcome>;

/// One registry entry.
pub struct Experiment {
    pub name: &'static str,
    pub summary: &'static str,
    /// The result being checked, in a few words.
    pub anchor: &'static str,
    pub params: &'static [ParamSpec],
    runner: Runner,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment").field("name", &self.name).finish_non_exhaustive()
    }
}

static REGISTRY: &[Experiment] = &[
    Experiment {
        name: "deterministic_spectrum",
        summary: "eigenvalues and counts on the flat path against the closed-form spectrum",
        anchor: "spectrum 1/4 + (k pi/lambda)^2 when B = 0",
        params: &[p("lambda", "pi"), p("step", "1e-3"), p("eigen_count", "7"), p("energies", "0.2,1.25,5"), p("tol", "1e-3")],
        runner: run_deterministic_spectrum,
    },
    Experiment {
        name: "discrete_green_law",
        summary: "diagonal entry of the discrete circle Green matrix against 1/(2 gamma)",
        anchor: "discrete diagonal Green entry is 1/(2 gamma)",
        params: &[p("n", "8"), p("lambda", "1"), p("samples", "10000"), p("vertex", "0"), p("alpha", "0.01")],
        runner: run_discrete_green_law,
    },
    Experiment {
        name: "dos_sweep",
        summary: "phase counts N(E)/(2 lambda) on long paths against sqrt(E)/pi",
        anchor: "integrated density of states sqrt(E)/pi",
        params: &[
            p("energies", "1,4,9"),
            p("lambda", "200"),
            p("replicas", "50"),
            p("step", "1e-3"),
            p("tol", "0.05"),
            p("alpha", "0.01"),
            p("ratio_num", "4"),
            p("ratio_den", "1"),
        ],
        runner: run_dos_sweep,
    },
    Experiment {
        name: "dufresne_diagonal",
        summary: "continuum circle kernel on the diagonal against 1/(2 gamma)",
        anchor: "continuum diagonal kernel is 1/(2 gamma)",
        params: &[p("lambda", "1"), p("t", "0"), p("step", "1e-3"), p("samples", "10000"), p("alpha", "0.01")],
        runner: run_dufresne_diagonal,
    },
    Experiment {
        name: "dufresne_ratio",
        summary: "truncated exponential functional over (M_lambda - 1)^2 against 1/(2 gamma)",
        anchor: "truncated exponential functional identity",
        params: &[p("lambdas", "0.1,5,40"), p("max_step", "1e-3"), p("min_cells", "1000"), p("samples", "10000"), p("alpha", "0.01")],
        runner: run_dufresne_ratio,
    },
    Experiment {
        name: "explicit_inverse",
        summary: "closed-form inverse of the cyclic matrix R against a dense solve",
        anchor: "explicit inverse of the circle operator",
        params: &[p("fields", "20"), p("max_dim", "401"), p("n", "8"), p("tol", "1e-10"), p("exact_tol", "1e-14")],
        runner: run_explicit_inverse,
    },
    Experiment {
        name: "functional_identity",
        summary: "quadratic form of f against (int f)^2/(2 gamma) for two test functions",
        anchor: "quadratic form identity for nonnegative f",
        params: &[p("lambda", "1"), p("step", "1e-3"), p("samples", "10000"), p("alpha", "0.01")],
        runner: run_functional_identity,
    },
    Experiment {
        name: "intertwining",
        summary: "psi_n given Z_n against IG(1, 1/z), binned by deciles of Z_n",
        anchor: "conditional law of psi_n given Z_n",
        params: &[
            p("m", "5"),
            p("n", "20"),
            p("samples", "100000"),
            p("bins", "10"),
            p("min_pass", "9"),
            p("var_tol", "0.15"),
            p("alpha", "0.01"),
        ],
        runner: run_intertwining,
    },
    Experiment {
        name: "ks_null_calibration",
        summary: "rejection rate of the one-sample KS test on exact 1/(2 gamma) draws",
        anchor: "test layer calibration",
        params: &[p("runs", "200"), p("samples", "10000"), p("alpha", "0.01"), p("max_rate", "0.04")],
        runner: run_ks_null_calibration,
    },
    Experiment {
        name: "matsumoto_yor_kernel",
        summary: "Z_n from the chain construction against Z_n from the Markov kernel",
        anchor: "Markov kernel of the discrete Z process",
        params: &[p("m", "5"), p("n", "20"), p("samples", "10000"), p("alpha", "0.01")],
        runner: run_matsumoto_yor_kernel,
    },
    Experiment {
        name: "mbg_transform",
        summary: "moments and increments of ln V_t against a drifted Brownian motion",
        anchor: "line kernel ratio is a geometric Brownian motion",
        params: &[p("times", "0.5,1,2"), p("tail", "40"), p("samples", "10000"), p("step", "1e-3"), p("alpha", "0.01")],
        runner: run_mbg_transform,
    },
    Experiment {
        name: "mean_t1_quadrature",
        summary: "double integral for the mean crossing time against pi/sqrt(E)",
        anchor: "mean interarrival pi/sqrt(E)",
        params: &[p("energies", "1,2,4,9"), p("tol", "1e-4")],
        runner: run_mean_t1_quadrature,
    },
    Experiment {
        name: "renewal",
        summary: "interarrival times of phase crossings on long paths",
        anchor: "crossing times form a renewal process",
        params: &[
            p("energies", "1,4"),
            p("horizon", "500"),
            p("paths", "250"),
            p("step", "1e-3"),
            p("tol", "0.02"),
            p("min_count", "1000"),
            p("alpha", "0.01"),
        ],
        runner: run_renewal,
    },
    Experiment {
        name: "z_diffusion",
        summary: "pathwise Z_t against an Euler-Maruyama solution of its diffusion",
        anchor: "generator of the continuum Z process",
        params: &[p("tmax", "1"), p("samples", "10000"), p("step", "1e-3"), p("alpha", "0.01")],
        runner: run_z_diffusion,
    },
];

/// All experiments, sorted by name.
pub fn registry() -> &'static [Experiment] {
    REGISTRY
}

pub fn find(name: &str) -> Result<&'static Experiment> {
    REGISTRY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownExperiment(name.to_string()))
}

/// One line per experiment: name, summary and anchor.
pub fn list_experiments() -> Vec<String> {
    REGISTRY
        .iter()
        .map(|e| format!("{:<24}{}  [{}]", e.name, e.summary, e.anchor))
        .collect()
}

/// Runs an experiment in memory.
pub fn execute(name: &str, params: &Params, seed: u64) -> Result<Outcome> {
    let exp = find(name)?;
    let resolved = Resolved::resolve(exp.params, params)?;
    (exp.runner)(&resolved, &RngStream::new(seed, 0))
}

/// What to run and where to write it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub params: Params,
    pub output_dir: PathBuf,
}

/// Record of a completed run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    /// Parameters after defaults were applied.
    pub resolved_params: BTreeMap<String, String>,
    pub artifact_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub result_files: Vec<String>,
    pub verdicts: Vec<TestReport>,
    pub passed: bool,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn write_table(dir: &Path, table: &Table) -> Result<String> {
    let file = format!("{}.csv", table.name);
    let mut w = csv::Writer::from_path(dir.join(&file))?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(file)
}

fn summary_table(reports: &[TestReport]) -> Table {
    let mut t = Table::new("summary", &["label", "statistic", "critical", "n", "alpha", "verdict"]);
    for r in reports {
        t.push(vec![
            r.label.clone(),
            num(r.statistic),
            num(r.critical),
            r.n.to_string(),
            num(r.alpha),
            r.verdict.to_string(),
        ]);
    }
    t
}

/// Runs an experiment and writes its CSV tables and `manifest.json` into the
/// output directory. Nothing is written if the name or the parameters are
/// rejected.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest> {
    let exp = find(&config.name)?;
    let resolved = Resolved::resolve(exp.params, &config.params)?;
    let started = now_ms();
    let outcome = (exp.runner)(&resolved, &RngStream::new(config.seed, 0))?;
    std::fs::create_dir_all(&config.output_dir)?;
    let mut result_files = Vec::new();
    for table in outcome.tables.iter().chain(std::iter::once(&summary_table(&outcome.reports))) {
        result_files.push(write_table(&config.output_dir, table)?);
    }
    let manifest = RunManifest {
        config: config.clone(),
        resolved_params: resolved.values.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        result_files,
        passed: outcome.passed(),
        verdicts: outcome.reports,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(config.output_dir.join("manifest.json"), json)?;
    Ok(manifest)
}

fn collect<T>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

fn ensemble(p: &Resolved) -> Result<EnsembleConfig> {
    Ok(EnsembleConfig {
        replicas: p.count("samples")?,
        step: p.positive("step")?,
        alpha: p.f64("alpha")?,
    })
}

fn run_dufresne_diagonal(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let cfg = ensemble(p)?;
    let samples = kernel::diagonal_samples(p.positive("lambda")?, p.f64("t")?, cfg, s)?;
    let report = ks_one_sample(&samples, inverse_gamma_half_cdf_total, cfg.alpha)?.with_label("dufresne_diagonal");
    Ok(Outcome {
        tables: vec![Table::samples("samples", &samples)],
        reports: vec![report],
    })
}

fn run_dufresne_ratio(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let (max_step, min_cells) = (p.positive("max_step")?, p.count("min_cells")?.max(1) as f64);
    let mut table = Table::new("ratio", &["lambda", "step", "statistic", "critical", "verdict"]);
    let mut reports = Vec::new();
    for (i, lambda) in p.list("lambdas")?.into_iter().enumerate() {
        let cfg = EnsembleConfig {
            replicas: p.count("samples")?,
            step: max_step.min(lambda / min_cells),
            alpha: p.f64("alpha")?,
        };
        let r = kernel::dufresne_ratio_check(lambda, cfg, &s.child(i as u64))?
            .with_label(format!("dufresne_ratio lambda={lambda}"));
        table.push(vec![num(lambda), num(cfg.step), num(r.statistic), num(r.critical), r.verdict.to_string()]);
        reports.push(r);
    }
    Ok(Outcome {
        tables: vec![table],
        reports,
    })
}

fn run_functional_identity(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let cfg = ensemble(p)?;
    let lambda = p.positive("lambda")?;
    let constant = kernel::functional_identity_check(lambda, |_| 1.0, 2.0 * lambda, cfg, &s.child(0))?
        .with_label("functional_identity constant");
    let cosine = kernel::functional_identity_check(
        lambda,
        move |t| (PI * t / lambda).cos() + 2.0,
        4.0 * lambda,
        cfg,
        &s.child(1),
    )?
    .with_label("functional_identity cosine");
    Ok(Outcome {
        tables: Vec::new(),
        reports: vec![constant, cosine],
    })
}

fn run_discrete_green_law(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let n = u32::try_from(p.count("n")?).map_err(|_| invalid("`n` is too large"))?;
    let lambda = p.positive("lambda")?;
    let label = p.f64("vertex")? as i64;
    let samples = collect(par_replicas(s, p.count("samples")?, |r| {
        let field = construct_beta_circle(lambda, n, r)?;
        let pos = field.graph.position(label)?;
        green_entry_explicit(&field, pos, pos)
    }))?;
    let report =
        ks_one_sample(&samples, inverse_gamma_half_cdf_total, p.f64("alpha")?)?.with_label("discrete_green_law");
    Ok(Outcome {
        tables: vec![Table::samples("samples", &samples)],
        reports: vec![report],
    })
}

fn run_explicit_inverse(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let fields = p.count("fields")?.max(1);
    let max_size = (p.count("max_dim")?.max(3) - 1) / 2;
    let n = u32::try_from(p.count("n")?.max(1)).map_err(|_| invalid("`n` is too large"))?;
    let mut table = Table::new("fields", &["dim", "max_relative_deviation"]);
    let deviations = collect(par_replicas(s, fields, |r| -> Result<(usize, f64)> {
        let k = r.stream_id() as usize;
        let size = (max_size * (k + 1) / fields).max(1);
        let field = construct_beta_circle(size as f64 / n as f64, n, r)?;
        let explicit = green_from_field(&field, Provenance::ExplicitFormula)?;
        let dense = green_from_field(&field, Provenance::DenseSolve)?;
        Ok((field.dim(), explicit.max_relative_deviation(&dense)))
    }))?;
    let mut worst: f64 = 0.0;
    for (dim, dev) in &deviations {
        table.push(vec![dim.to_string(), num(*dev)]);
        worst = worst.max(*dev);
    }
    let g = invert_r_explicit(&USequence::new(vec![2.0; 3])?);
    let exact_gap = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (g.get(i, j) - if i == j { 3.0 / 7.0 } else { 2.0 / 7.0 }).abs())
        .fold(0.0, f64::max);
    Ok(Outcome {
        tables: vec![table],
        reports: vec![
            TestReport::threshold("explicit_inverse random", worst, p.positive("tol")?, fields, 0.0),
            TestReport::threshold("explicit_inverse u=2", exact_gap, p.positive("exact_tol")?, 1, 0.0),
        ],
    })
}

fn my_params(p: &Resolved) -> Result<(u32, usize)> {
    let m = u32::try_from(p.count("m")?).map_err(|_| invalid("`m` is too large"))?;
    let n = p.count("n")?;
    if m == 0 || n == 0 {
        return Err(invalid("need m >= 1 and n >= 1"));
    }
    Ok((m, n))
}

fn run_matsumoto_yor_kernel(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let (m, n) = my_params(p)?;
    let samples = p.count("samples")?;
    let chain = collect(par_replicas(&s.child(0), samples, |r| Ok(build_my_chain(m, n, r)?.zhat[n])))?;
    let kernel = collect(par_replicas(&s.child(1), samples, |r| kernel_chain_terminal(m, n, r)))?;
    let report = ks_two_sample(&chain, &kernel, p.f64("alpha")?)?.with_label("matsumoto_yor_kernel");
    Ok(Outcome {
        tables: vec![Table::samples("chain", &chain), Table::samples("kernel", &kernel)],
        reports: vec![report],
    })
}

fn run_intertwining(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let (m, n) = my_params(p)?;
    let bins = p.count("bins")?.max(1);
    let alpha = p.f64("alpha")?;
    let mut pairs = collect(par_replicas(s, p.count("samples")?, |r| {
        let c = build_my_chain(m, n, r)?;
        Ok((c.zhat[n], c.psi[n]))
    }))?;
    if pairs.len() < bins * MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: bins * MIN_KS_SAMPLES,
            got: pairs.len(),
        });
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut table = Table::new(
        "bins",
        &["bin", "z_lo", "z_hi", "mean_z", "ks_statistic", "ks_critical", "ks_verdict", "variance_ratio", "raw_variance_ratio"],
    );
    let (mut failing, mut worst_ratio) = (0usize, 0.0_f64);
    for b in 0..bins {
        let bin = &pairs[b * pairs.len() / bins..(b + 1) * pairs.len() / bins];
        let len = bin.len() as f64;
        // Each sample goes through its own conditional CDF, so the bin is
        // uniform under the hypothesis whatever the spread of z inside it.
        let pit = collect(bin.iter().map(|&(z, psi)| Ok(IgParams::new(1.0, 1.0 / z)?.cdf(psi))).collect())?;
        let ks = ks_one_sample(&pit, |x| x.clamp(0.0, 1.0), alpha)?;
        failing += usize::from(!ks.passed());
        // (psi - 1)^2 / (psi z) is chi-square(1) given z, so its bin mean
        // estimates Var(psi | z) / z with standard error sqrt(2 / len).
        let ratio = bin.iter().map(|&(z, psi)| (psi - 1.0).powi(2) / (psi * z)).sum::<f64>() / len;
        let mean_z = bin.iter().map(|x| x.0).sum::<f64>() / len;
        let raw = bin.iter().map(|&(_, psi)| (psi - 1.0).powi(2)).sum::<f64>() / len / mean_z;
        worst_ratio = worst_ratio.max((ratio - 1.0).abs());
        table.push(vec![
            b.to_string(),
            num(bin[0].0),
            num(bin[bin.len() - 1].0),
            num(mean_z),
            num(ks.statistic),
            num(ks.critical),
            ks.verdict.to_string(),
            num(ratio),
            num(raw),
        ]);
    }
    let allowed_failures = bins.saturating_sub(p.count("min_pass")?);
    Ok(Outcome {
        tables: vec![table],
        reports: vec![
            TestReport::threshold("intertwining bins failing", failing as f64, allowed_failures as f64 + 0.5, bins, alpha),
            TestReport::threshold("intertwining variance", worst_ratio, p.positive("var_tol")?, bins, alpha),
        ],
    })
}

fn run_z_diffusion(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let cfg = ZDiffusionConfig {
        tmax: p.positive("tmax")?,
        replicas: p.count("samples")?,
        step: p.positive("step")?,
        alpha: p.f64("alpha")?,
    };
    Ok(Outcome {
        tables: Vec::new(),
        reports: vec![z_diffusion_step_check(cfg, s)?],
    })
}

fn run_mbg_transform(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let cfg = MbgConfig {
        times: p.list("times")?,
        tail: p.positive("tail")?,
        replicas: p.count("samples")?,
        step: p.positive("step")?,
    };
    let alpha = p.f64("alpha")?;
    let rep = kernel::mbg_transform_check(&cfg, s)?;
    let mut table = Table::new("moments", &["t", "mean", "std_error", "variance"]);
    let mut reports = Vec::new();
    for m in &rep.moments {
        table.push(vec![num(m.t), num(m.mean), num(m.std_error), num(m.variance)]);
        reports.push(TestReport::threshold(
            format!("mbg mean t={}", m.t),
            (m.mean + 0.5 * m.t).abs() / m.std_error,
            3.0,
            cfg.replicas,
            alpha,
        ));
        reports.push(TestReport::threshold(
            format!("mbg variance t={}", m.t),
            (m.variance - m.t).abs() / m.t,
            0.1,
            cfg.replicas,
            alpha,
        ));
    }
    for (k, (c, hw)) in rep.increment_correlations.iter().enumerate() {
        reports.push(TestReport::threshold(format!("mbg increments {k}"), c.abs(), *hw, cfg.replicas, alpha));
    }
    reports.push(TestReport::threshold("mbg v0", rep.v0_max_deviation, 1e-12, cfg.replicas, alpha));
    Ok(Outcome {
        tables: vec![table],
        reports,
    })
}

fn run_mean_t1_quadrature(p: &Resolved, _s: &RngStream) -> Result<Outcome> {
    let tol = p.positive("tol")?;
    let mut table = Table::new("quadrature", &["energy", "value", "swapped", "target", "relative_error"]);
    let mut reports = Vec::new();
    let mut scaled = Vec::new();
    for e in p.list("energies")? {
        let value = spectrum::mean_t1_quadrature(e)?;
        let swapped = spectrum::mean_t1_quadrature_swapped(e)?;
        let target = PI / e.sqrt();
        let rel = (value - target).abs() / target;
        table.push(vec![num(e), num(value), num(swapped), num(target), num(rel)]);
        reports.push(TestReport::threshold(format!("quadrature E={e}"), rel, tol, 1, 0.0));
        reports.push(TestReport::threshold(
            format!("quadrature swapped E={e}"),
            (swapped - value).abs() / value,
            tol,
            1,
            0.0,
        ));
        scaled.push(value * e.sqrt());
    }
    let spread = scaled.iter().copied().fold(f64::MIN, f64::max) - scaled.iter().copied().fold(f64::MAX, f64::min);
    reports.push(TestReport::threshold("quadrature scaling", spread / PI, tol, scaled.len(), 0.0));
    Ok(Outcome {
        tables: vec![table],
        reports,
    })
}

fn run_renewal(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let cfg = RenewalConfig {
        paths: p.count("paths")?,
        step: p.positive("step")?,
        alpha: p.f64("alpha")?,
    };
    let (horizon, tol, min_count) = (p.positive("horizon")?, p.positive("tol")?, p.count("min_count")?);
    let mut table = Table::new(
        "renewal",
        &["energy", "count", "mean", "half_width", "variance", "target", "lag1_correlation", "lag1_half_width"],
    );
    let mut reports = Vec::new();
    for (i, e) in p.list("energies")?.into_iter().enumerate() {
        let r = spectrum::renewal_statistics(e, horizon, cfg, &s.child(i as u64))?;
        table.push(vec![
            num(e),
            r.count.to_string(),
            num(r.mean.estimate),
            num(r.mean.half_width),
            num(r.variance),
            num(r.target),
            num(r.lag1_correlation),
            num(r.lag1_half_width),
        ]);
        reports.push(TestReport::threshold(format!("renewal mean E={e}"), r.relative_error(), tol, r.count, cfg.alpha));
        // Passes when count >= min_count.
        reports.push(TestReport::threshold(
            format!("renewal shortfall E={e}"),
            min_count as f64 / r.count.max(1) as f64,
            1.0 + 1e-9,
            r.count,
            cfg.alpha,
        ));
        reports.push(TestReport::threshold(
            format!("renewal lag1 E={e}"),
            r.lag1_correlation.abs(),
            r.lag1_half_width,
            r.count,
            cfg.alpha,
        ));
    }
    Ok(Outcome {
        tables: vec![table],
        reports,
    })
}

fn run_dos_sweep(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let energies = p.list("energies")?;
    let (lambda, replicas, step) = (p.positive("lambda")?, p.count("replicas")?, p.positive("step")?);
    let (tol, alpha) = (p.positive("tol")?, p.f64("alpha")?);
    let samples = spectrum::dos_samples(&energies, lambda, replicas, step, s)?;
    let mut table = Table::new("dos", &["energy", "density", "half_width", "target", "relative_error"]);
    let mut reports = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        let column: Vec<f64> = samples.iter().map(|r| r[i]).collect();
        let density = crate::stats::moment_ci(&column, 1, alpha)?;
        let target = e.sqrt() / PI;
        let rel = (density.estimate - target).abs() / target;
        table.push(vec![num(e), num(density.estimate), num(density.half_width), num(target), num(rel)]);
        reports.push(TestReport::threshold(format!("dos E={e}"), rel, tol, replicas, alpha));
    }
    let (num_e, den_e) = (p.f64("ratio_num")?, p.f64("ratio_den")?);
    let position = |x: f64| energies.iter().position(|&e| e == x);
    if let (Some(a), Some(b)) = (position(num_e), position(den_e)) {
        let ratio = spectrum::dos_ratio(&samples, a, b, alpha)?;
        let target = (num_e / den_e).sqrt();
        reports.push(TestReport::threshold(
            format!("dos ratio E={num_e}/E={den_e}"),
            (ratio.estimate - target).abs(),
            ratio.half_width,
            replicas,
            alpha,
        ));
    }
    Ok(Outcome {
        tables: vec![table],
        reports,
    })
}

fn run_deterministic_spectrum(p: &Resolved, _s: &RngStream) -> Result<Outcome> {
    let lambda = p.positive("lambda")?;
    let path = spectrum::drift_only_path(lambda, p.positive("step")?)?;
    let spec = spectrum::fd_spectrum(&path, p.count("eigen_count")?)?;
    let mut exact = vec![0.25];
    for k in 1.. {
        if exact.len() >= spec.eigenvalues().len() {
            break;
        }
        let v = 0.25 + (k as f64 * PI / lambda).powi(2);
        exact.extend([v, v]);
    }
    let mut eig = Table::new("eigenvalues", &["index", "fd", "exact"]);
    let mut worst: f64 = 0.0;
    for (i, (got, want)) in spec.eigenvalues().iter().zip(&exact).enumerate() {
        eig.push(vec![i.to_string(), num(*got), num(*want)]);
        worst = worst.max((got - want).abs());
    }
    let mut counts = Table::new("counts", &["energy", "exact", "phase", "fd"]);
    let mut bracket = 0usize;
    for e in p.list("energies")? {
        let exact = spectrum::drift_only_count(lambda, e);
        let phase = spectrum::count_states_phase(e, &path)?;
        let fd = spectrum::count_states_fd(e, &path)?;
        counts.push(vec![num(e), exact.to_string(), phase.to_string(), fd.to_string()]);
        bracket = bracket.max(exact.abs_diff(phase));
    }
    Ok(Outcome {
        tables: vec![eig, counts],
        reports: vec![
            TestReport::threshold("deterministic eigenvalues", worst, p.positive("tol")?, exact.len(), 0.0),
            TestReport::threshold(
                "deterministic phase bracket",
                bracket as f64,
                spectrum::PHASE_COUNT_SLACK as f64 + 0.5,
                1,
                0.0,
            ),
        ],
    })
}

fn run_ks_null_calibration(p: &Resolved, s: &RngStream) -> Result<Outcome> {
    let (runs, samples, alpha) = (p.count("runs")?, p.count("samples")?, p.f64("alpha")?);
    let reports = collect(par_replicas(s, runs, |r| {
        let draws: Vec<f64> = (0..samples).map(|_| 0.5 / sample_gamma_half(r)).collect();
        ks_one_sample(&draws, inverse_gamma_half_cdf_total, alpha)
    }))?;
    let mut table = Table::new("runs", &["run", "statistic", "critical", "verdict"]);
    for (i, r) in reports.iter().enumerate() {
        table.push(vec![i.to_string(), num(r.statistic), num(r.critical), r.verdict.to_string()]);
    }
    let rejected = reports.iter().filter(|r| !r.passed()).count();
    let rate = rejected as f64 / runs.max(1) as f64;
    let max_rate = p.f64("max_rate")?;
    Ok(Outcome {
        tables: vec![table],
        reports: vec![TestReport::threshold(
            "ks_null_calibration rejection rate",
            rate,
            max_rate + 0.5 / runs.max(1) as f64,
            runs,
            alpha,
        )],
    })
}
