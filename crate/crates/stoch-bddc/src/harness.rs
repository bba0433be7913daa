//! Experiment driver: configuration, Monte Carlo loops over samples with
//! paired seeding, method comparison, reference-solution errors for the
//! surrogate operator, and CSV/table emission.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::bddc::{
    build_preconditioner, mean_preconditioner, rho_scaling, BddcPreconditioner, SchurOperator,
};
use crate::cache;
use crate::error::{Error, Result};
use crate::field::{evaluate_kappa, global_kl, sample_xi, CovarianceSpec, KlBasis};
use crate::krylov::pcg;
use crate::mesh::{build_mesh, l2_norm_sq, load_vector, Mesh};
use crate::offline::{build_offline, OfflineOptions, StochMethod, SurrogateComponents};
use crate::online::{instantiate, surrogate_schur};
use crate::partition::{classify_dofs, DofPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Mpc,
    Sg,
    Sc,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "mpc" => Ok(Method::Mpc),
            "sg" => Ok(Method::Sg),
            "sc" => Ok(Method::Sc),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Mpc => "mpc",
            Method::Sg => "sg",
            Method::Sc => "sc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorMode {
    Exact,
    Surrogate,
}

impl OperatorMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(OperatorMode::Exact),
            "surrogate" => Ok(OperatorMode::Surrogate),
            other => Err(Error::Config(format!("unknown operator mode '{other}'"))),
        }
    }
    pub fn name(&self) -> &'static str {
        match self {
            OperatorMode::Exact => "exact",
            OperatorMode::Surrogate => "surrogate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub ns: usize,
    pub n: usize,
    pub sigma2: f64,
    pub ell: f64,
    /// Global KL terms `M_KL`.
    pub mkl: usize,
    /// Subdomain-local KL terms `N_KL`.
    pub nkl: usize,
    /// Chaos degree `d`.
    pub degree: usize,
    /// Gauss–Hermite points per dimension for the SC construction.
    pub quad: usize,
    pub method: Method,
    pub operator: OperatorMode,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub maxit: usize,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
    pub residual_log: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ns: 8,
            n: 8,
            sigma2: 0.5,
            ell: 1.0,
            mkl: 4,
            nkl: 1,
            degree: 4,
            quad: 5,
            method: Method::Exact,
            operator: OperatorMode::Exact,
            samples: 100,
            seed: 2024,
            tol: 1e-8,
            maxit: 100,
            out: None,
            workers: 0,
            cache_dir: None,
            residual_log: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ns < 1 || self.n < 1 {
            return Err(Error::Config("ns and n must be positive".into()));
        }
        if !(self.sigma2 > 0.0) || !(self.ell > 0.0) {
            return Err(Error::Config("sigma2 and ell must be positive".into()));
        }
        if self.mkl < 1 || self.nkl < 1 {
            return Err(Error::Config("mkl and nkl must be positive".into()));
        }
        if self.nkl > 2 * self.n * self.n {
            return Err(Error::Config("nkl exceeds subdomain cell count".into()));
        }
        if self.quad < 1 {
            return Err(Error::Config("quad must be positive".into()));
        }
        if self.samples < 1 {
            return Err(Error::Config("samples must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config("tol must lie in (0, 1)".into()));
        }
        if self.maxit < 1 {
            return Err(Error::Config("maxit must be positive".into()));
        }
        if self.operator == OperatorMode::Surrogate
            && !matches!(self.method, Method::Sg | Method::Sc)
        {
            return Err(Error::Config(
                "surrogate operator requires the sg or sc method".into(),
            ));
        }
        Ok(())
    }

    /// Parse a flat `key=value` config file (`#` comments).
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("invalid {what}: '{value}'"));
        match key {
            "ns" => self.ns = value.parse().map_err(|_| bad("ns"))?,
            "n" => self.n = value.parse().map_err(|_| bad("n"))?,
            "sigma2" => self.sigma2 = value.parse().map_err(|_| bad("sigma2"))?,
            "ell" => self.ell = value.parse().map_err(|_| bad("ell"))?,
            "mkl" => self.mkl = value.parse().map_err(|_| bad("mkl"))?,
            "nkl" => self.nkl = value.parse().map_err(|_| bad("nkl"))?,
            "degree" => self.degree = value.parse().map_err(|_| bad("degree"))?,
            "quad" => self.quad = value.parse().map_err(|_| bad("quad"))?,
            "method" => self.method = Method::parse(value)?,
            "operator" => self.operator = OperatorMode::parse(value)?,
            "samples" => self.samples = value.parse().map_err(|_| bad("samples"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "tol" => self.tol = value.parse().map_err(|_| bad("tol"))?,
            "maxit" => self.maxit = value.parse().map_err(|_| bad("maxit"))?,
            "out" => self.out = Some(PathBuf::from(value)),
            "workers" => self.workers = value.parse().map_err(|_| bad("workers"))?,
            "cache_dir" => self.cache_dir = Some(PathBuf::from(value)),
            "residual_log" => self.residual_log = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }
}

/// Per-sample outcome.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub cond_est: f64,
    pub lambda_min: f64,
    pub spd_ok: bool,
    pub l2_error: Option<f64>,
    pub wall_ms: f64,
    /// Preconditioner construction / instantiation time.
    pub build_ms: f64,
    /// Interface solve time.
    pub solve_ms: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub method: Method,
    pub operator: OperatorMode,
    pub master_seed: u64,
    pub records: Vec<SampleRecord>,
    pub offline_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Aggregates {
    pub included: usize,
    pub excluded: usize,
    pub mean_iterations: f64,
    pub mean_cond: f64,
    pub mean_l2_error: Option<f64>,
    pub min_lambda_min: f64,
}

impl RunReport {
    /// Summed per-phase wall times across samples.
    pub fn phase_totals(&self) -> (f64, f64) {
        let build: f64 = self.records.iter().map(|r| r.build_ms).sum();
        let solve: f64 = self.records.iter().map(|r| r.solve_ms).sum();
        (build, solve)
    }

    /// Means over converged, SPD-ok samples; exclusions counted.
    pub fn aggregates(&self) -> Aggregates {
        let mut included = 0usize;
        let mut iter_sum = 0.0;
        let mut cond_sum = 0.0;
        let mut l2_sum = 0.0;
        let mut l2_count = 0usize;
        let mut min_lambda = f64::INFINITY;
        for r in &self.records {
            if !(r.converged && r.spd_ok) {
                continue;
            }
            included += 1;
            iter_sum += r.iterations as f64;
            cond_sum += r.cond_est;
            min_lambda = min_lambda.min(r.lambda_min);
            if let Some(e) = r.l2_error {
                l2_sum += e;
                l2_count += 1;
            }
        }
        Aggregates {
            included,
            excluded: self.records.len() - included,
            mean_iterations: if included > 0 {
                iter_sum / included as f64
            } else {
                f64::NAN
            },
            mean_cond: if included > 0 {
                cond_sum / included as f64
            } else {
                f64::NAN
            },
            mean_l2_error: if l2_count > 0 {
                Some(l2_sum / l2_count as f64)
            } else {
                None
            },
            min_lambda_min: min_lambda,
        }
    }
}

/// Per-sample seed derivation (splitmix64 over the master seed and index),
/// shared by every method so samples pair across runs.
pub fn derive_seed(master: u64, sample_id: usize) -> u64 {
    let mut z = master.wrapping_add((sample_id as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn load_or_build_global_kl(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<KlBasis> {
    let spec = CovarianceSpec::new(cfg.sigma2, cfg.ell);
    let key = cache::KlKey {
        kind: 0,
        ns: cfg.ns as u32,
        n: cfg.n as u32,
        sigma2: cfg.sigma2,
        ell: cfg.ell,
        count: cfg.mkl as u32,
    };
    if let Some(dir) = &cfg.cache_dir {
        if let Some(hit) = cache::load_kl(dir, &key)? {
            if hit.num_cells() == mesh.cells.len() {
                return Ok(hit);
            }
        }
    }
    let basis = global_kl(mesh, &spec, cfg.mkl)?;
    if let Some(dir) = &cfg.cache_dir {
        cache::save_kl(dir, &key, &basis)?;
    }
    Ok(basis)
}

fn load_or_build_offline(
    cfg: &ExperimentConfig,
    mesh: &Mesh,
    part: &DofPartition,
    global: &KlBasis,
    with_schur: bool,
) -> Result<SurrogateComponents> {
    let spec = CovarianceSpec::new(cfg.sigma2, cfg.ell);
    let method = match cfg.method {
        Method::Sg => StochMethod::Galerkin,
        Method::Sc => StochMethod::Collocation,
        _ => unreachable!("offline stage only applies to sg/sc"),
    };
    let key = cache::OfflineKey {
        ns: cfg.ns as u32,
        n: cfg.n as u32,
        sigma2: cfg.sigma2,
        ell: cfg.ell,
        mkl_global: cfg.mkl as u32,
        nkl: cfg.nkl as u32,
        degree: cfg.degree as u32,
        quad_points: cfg.quad as u32,
        method: match method {
            StochMethod::Galerkin => 0,
            StochMethod::Collocation => 1,
        },
        with_schur,
    };
    if let Some(dir) = &cfg.cache_dir {
        if let Some(hit) = cache::load_offline(dir, &key)? {
            if hit.validate(part).is_ok() {
                return Ok(hit);
            }
        }
    }
    let opts = OfflineOptions {
        method,
        nkl: cfg.nkl,
        degree: cfg.degree,
        quad_points: cfg.quad,
        with_schur,
    };
    let off = build_offline(mesh, part, global, &spec, &opts)?;
    if let Some(dir) = &cfg.cache_dir {
        cache::save_offline(dir, &key, &off)?;
    }
    Ok(off)
}

/// L² norm of the P1 interpolant difference, relative to the reference.
fn relative_l2_error(mesh: &Mesh, u: &[f64], reference: &[f64]) -> f64 {
    let mut diff = vec![0.0; mesh.nodes.len()];
    let mut base = vec![0.0; mesh.nodes.len()];
    for (fi, &nd) in mesh.free_nodes.iter().enumerate() {
        diff[nd] = u[fi] - reference[fi];
        base[nd] = reference[fi];
    }
    (l2_norm_sq(mesh, &diff) / l2_norm_sq(mesh, &base)).sqrt()
}

/// Run one experiment cell: offline construction once, then the Monte Carlo
/// loop over paired samples.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let t_total = Instant::now();
    let mesh = Arc::new(build_mesh(cfg.ns, cfg.n));
    let part = Arc::new(classify_dofs(&mesh));
    let spec = CovarianceSpec::new(cfg.sigma2, cfg.ell);
    let f_free = Arc::new(load_vector(&mesh));

    let t_offline = Instant::now();
    let global = Arc::new(load_or_build_global_kl(cfg, &mesh)?);
    let needs_offline = matches!(cfg.method, Method::Sg | Method::Sc);
    let with_schur = cfg.operator == OperatorMode::Surrogate;
    let offline: Option<Arc<SurrogateComponents>> = if needs_offline {
        Some(Arc::new(load_or_build_offline(
            cfg, &mesh, &part, &global, with_schur,
        )?))
    } else {
        None
    };
    // mean preconditioner: the MPC method itself, and the fallback for
    // indefinite stochastic coarse problems
    let mean_prec: Option<Arc<BddcPreconditioner>> =
        if matches!(cfg.method, Method::Mpc | Method::Sg | Method::Sc) {
            Some(Arc::new(mean_preconditioner(&mesh, &part, &spec)?))
        } else {
            None
        };
    let offline_ms = t_offline.elapsed().as_secs_f64() * 1e3;

    let run_sample = |sample_id: usize| -> Result<SampleRecord> {
        let t_sample = Instant::now();
        let seed = derive_seed(cfg.seed, sample_id);
        let xi = sample_xi(seed, cfg.mkl);
        let kappa = evaluate_kappa(&global, &xi.xi)?;
        let weights = rho_scaling(&mesh, &part, &kappa);
        let exact_op = SchurOperator::exact(&mesh, &part, &kappa)?;
        let g = exact_op.reduce_rhs(&mesh, &part, &f_free);

        let mut spd_ok = true;
        let mut xihat: Option<Vec<Vec<f64>>> = None;
        let t_build = Instant::now();
        let preconditioner: Arc<BddcPreconditioner> = match cfg.method {
            Method::Exact => Arc::new(build_preconditioner(&mesh, &part, &kappa, weights.clone())?),
            Method::Mpc => mean_prec.clone().unwrap(),
            Method::Sg | Method::Sc => {
                let off = offline.as_ref().unwrap();
                let inst = instantiate(off, &part, &xi.xi, weights.clone())?;
                spd_ok = inst.spd_ok;
                xihat = Some(inst.xihat);
                match inst.preconditioner {
                    Some(p) => Arc::new(p),
                    // indefinite coarse matrix: solve with the mean
                    // preconditioner, keep the sample out of the averages
                    None => mean_prec.clone().unwrap(),
                }
            }
        };

        // the surrogate operator evaluation belongs to the online build
        let surrogate_op = if cfg.operator == OperatorMode::Surrogate {
            let off = offline.as_ref().unwrap();
            Some(surrogate_schur(off, &part, xihat.as_ref().unwrap())?)
        } else {
            None
        };
        let build_ms = t_build.elapsed().as_secs_f64() * 1e3;

        let t_solve = Instant::now();
        let solve_result = match &surrogate_op {
            Some(sur) => pcg(sur, preconditioner.as_ref(), &g, cfg.tol, cfg.maxit),
            None => pcg(&exact_op, preconditioner.as_ref(), &g, cfg.tol, cfg.maxit),
        };

        let solve_ms = t_solve.elapsed().as_secs_f64() * 1e3;
        let report = match solve_result {
            Ok(r) => r,
            Err(Error::PcgBreakdown(..)) => {
                // indefinite surrogate action: record the sample as failed
                return Ok(SampleRecord {
                    sample_id,
                    seed,
                    iterations: cfg.maxit,
                    converged: false,
                    cond_est: f64::NAN,
                    lambda_min: f64::NAN,
                    spd_ok: false,
                    l2_error: None,
                    wall_ms: t_sample.elapsed().as_secs_f64() * 1e3,
                    build_ms,
                    solve_ms,
                    residuals: Vec::new(),
                });
            }
            Err(e) => return Err(e),
        };

        let l2_error = if cfg.operator == OperatorMode::Surrogate {
            let reference = {
                let exact_prec = build_preconditioner(&mesh, &part, &kappa, weights.clone())?;
                pcg(&exact_op, &exact_prec, &g, 1e-12, 1000)?
            };
            let u_sur = exact_op.recover_interior(&mesh, &part, &report.solution, &f_free);
            let u_ref = exact_op.recover_interior(&mesh, &part, &reference.solution, &f_free);
            Some(relative_l2_error(&mesh, &u_sur, &u_ref))
        } else {
            None
        };

        Ok(SampleRecord {
            sample_id,
            seed,
            iterations: report.iterations,
            converged: report.converged,
            cond_est: report.cond,
            lambda_min: report.lambda_min,
            spd_ok,
            l2_error,
            wall_ms: t_sample.elapsed().as_secs_f64() * 1e3,
            build_ms,
            solve_ms,
            residuals: report.residual_history,
        })
    };

    let mut records: Vec<SampleRecord> = (0..cfg.samples)
        .into_par_iter()
        .map(run_sample)
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.sample_id);

    let report = RunReport {
        method: cfg.method,
        operator: cfg.operator,
        master_seed: cfg.seed,
        records,
        offline_ms,
        total_ms: t_total.elapsed().as_secs_f64() * 1e3,
    };
    if let Some(path) = &cfg.residual_log {
        write_residual_log(&report, path)?;
    }
    Ok(report)
}

/// Sweep one parameter, sharing the master seed so samples pair across runs.
pub fn sweep(base: &ExperimentConfig, axis: &str, values: &[f64]) -> Result<Vec<RunReport>> {
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut cfg = base.clone();
        match axis {
            "ns" | "n" | "mkl" | "nkl" | "degree" | "quad" | "samples" | "maxit" => {
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(Error::Config(format!(
                        "axis {axis} needs positive integers"
                    )));
                }
                cfg.apply_kv(axis, &format!("{}", v as u64))?;
            }
            "sigma2" | "ell" | "tol" => cfg.apply_kv(axis, &format!("{v}"))?,
            other => return Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        }
        out.push(run_experiment(&cfg)?);
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// CSV with the fixed column schema, one row per sample plus an aggregate
/// row (`wall_ms` carries the total run time there).
pub fn emit_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "sample_id,seed,method,operator_mode,iterations,converged,cond_est,spd_ok,l2_error,wall_ms\n",
    );
    for r in &report.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.sample_id,
            r.seed,
            report.method.name(),
            report.operator.name(),
            r.iterations,
            r.converged,
            r.cond_est,
            r.spd_ok,
            fmt_opt(r.l2_error),
            r.wall_ms
        );
    }
    let agg = report.aggregates();
    let _ = writeln!(
        out,
        "aggregate,{},{},{},{},{},{},{},{},{}",
        report.master_seed,
        report.method.name(),
        report.operator.name(),
        agg.mean_iterations,
        agg.included,
        agg.mean_cond,
        agg.excluded,
        fmt_opt(agg.mean_l2_error),
        report.total_ms
    );
    out
}

/// Human-readable summary table.
pub fn emit_table(report: &RunReport) -> String {
    let agg = report.aggregates();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "method={} operator={}",
        report.method.name(),
        report.operator.name()
    );
    let _ = writeln!(
        out,
        "samples included={} excluded={} (non-converged or indefinite coarse problem)",
        agg.included, agg.excluded
    );
    let _ = writeln!(
        out,
        "mean iterations = {:.2}   mean cond = {:.2}",
        agg.mean_iterations, agg.mean_cond
    );
    if let Some(e) = agg.mean_l2_error {
        let _ = writeln!(out, "mean relative L2 error = {e:.3e}");
    }
    let (build, solve) = report.phase_totals();
    let _ = writeln!(
        out,
        "offline {:.1} ms, online build {:.1} ms, solve {:.1} ms, total {:.1} ms",
        report.offline_ms, build, solve, report.total_ms
    );
    out
}

/// Comparison table over a sweep, one row per parameter value: the layout
/// used for reporting method behavior across an axis.
pub fn emit_sweep_table(axis: &str, values: &[f64], reports: &[RunReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>10} | {:>8} {:>8} | {:>8} | method={} operator={}",
        axis,
        "cond",
        "iter",
        "excl",
        reports.first().map(|r| r.method.name()).unwrap_or("-"),
        reports.first().map(|r| r.operator.name()).unwrap_or("-"),
    );
    for (v, report) in values.iter().zip(reports) {
        let agg = report.aggregates();
        let _ = writeln!(
            out,
            "{v:>10} | {:>8.2} {:>8.2} | {:>8} |",
            agg.mean_cond, agg.mean_iterations, agg.excluded
        );
    }
    out
}

/// One JSON object per line with the residual history of each sample.
pub fn write_residual_log(report: &RunReport, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    for r in &report.records {
        let hist: Vec<String> = r.residuals.iter().map(|v| format!("{v}")).collect();
        writeln!(
            f,
            "{{\"sample_id\":{},\"seed\":{},\"residuals\":[{}]}}",
            r.sample_id,
            r.seed,
            hist.join(",")
        )?;
    }
    Ok(())
}

/// Parse an emitted CSV back into (per-sample rows, aggregate row) for
/// round-trip checks.
pub fn parse_csv(text: &str) -> Result<(Vec<SampleRecord>, Vec<String>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty csv".into()))?;
    if !header.starts_with("sample_id,") {
        return Err(Error::Config("bad csv header".into()));
    }
    let mut records = Vec::new();
    let mut aggregate = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0] == "aggregate" {
            aggregate = fields.iter().map(|s| s.to_string()).collect();
            continue;
        }
        records.push(SampleRecord {
            sample_id: fields[0].parse().map_err(|_| Error::Config("id".into()))?,
            seed: fields[1]
                .parse()
                .map_err(|_| Error::Config("seed".into()))?,
            iterations: fields[4]
                .parse()
                .map_err(|_| Error::Config("iters".into()))?,
            converged: fields[5] == "true",
            cond_est: fields[6].parse().unwrap_or(f64::NAN),
            lambda_min: f64::NAN,
            spd_ok: fields[7] == "true",
            l2_error: if fields[8].is_empty() {
                None
            } else {
                Some(fields[8].parse().map_err(|_| Error::Config("l2".into()))?)
            },
            wall_ms: fields[9].parse().unwrap_or(0.0),
            build_ms: 0.0,
            solve_ms: 0.0,
            residuals: Vec::new(),
        });
    }
    Ok((records, aggregate))
}
