//! Monte Carlo study: per-run samples, fits, error metrics and aggregates.

use std::fmt::Write as _;

use phidiv::estimators::{
    basu_lindsay_with, beran_with, classical_mdphide, contamination_mdphide, dphide, kernel_mdphide_with, mle, mpd,
    ContaminationInit,
};
use phidiv::metrics::{chi2_distance, tvd};
use phidiv::{DensityEstimate, EstimatorResult, FitOptions, KdeSpec, QuadratureConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Escort, EstimatorKind, Experiment, InitRule};
use crate::contamination::apply_contamination;
use crate::error::{Result, SimError};
use crate::format::g6;

/// Environment variable overriding the absolute quadrature tolerance.
pub const QUAD_TOL_ENV: &str = "SIMLAB_QUAD_TOL";

/// Overrides applied on top of a config.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    pub quad_tol: Option<f64>,
}

/// SIMLAB_QUAD_TOL, if set.
pub fn quad_tol_from_env() -> Result<Option<f64>> {
    match std::env::var(QUAD_TOL_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(t) if t > 0.0 && t.is_finite() => Ok(Some(t)),
            _ => Err(SimError::Config(format!("{QUAD_TOL_ENV}={s:?} is not a positive number"))),
        },
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `index`; depends only on the master seed and the index, so
/// results do not depend on scheduling.
pub fn run_seed(master: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master) ^ index as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    NotConverged,
    Failed,
}

impl RowStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::NotConverged => "not_converged",
            RowStatus::Failed => "failed",
        }
    }
}

/// One fit in one run. `theta`, `chi2` and `tvd` are NaN when the fit
/// failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run: usize,
    pub estimator: String,
    pub status: RowStatus,
    pub theta: Vec<f64>,
    pub chi2: f64,
    pub tvd: f64,
    pub message: String,
}

/// Mean, median and sd (divisor n-1) of the finite values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: impl Iterator<Item = f64>) -> Stats {
        let mut v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Stats { mean: f64::NAN, median: f64::NAN, sd: f64::NAN, count: 0 };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { f64::NAN };
        v.sort_by(|a, b| a.total_cmp(b));
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Stats { mean, median, sd, count: n }
    }
}

/// Aggregates over the non-failed runs of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: String,
    pub runs_ok: usize,
    pub runs_not_converged: usize,
    pub runs_failed: usize,
    pub params: Vec<Stats>,
    pub chi2: Stats,
    /// Runs whose χ² distance is infinite; they are left out of `chi2`.
    pub chi2_infinite: usize,
    pub tvd: Stats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub param_names: Vec<String>,
    pub rows: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
}

impl RunSummary {
    pub fn estimator(&self, id: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.estimator == id)
    }

    /// Per-run CSV: `run,estimator,status,<params>,chi2,tvd,message`.
    pub fn runs_csv(&self) -> String {
        let mut s = format!("run,estimator,status,{},chi2,tvd,message\n", self.param_names.join(","));
        for r in &self.rows {
            let mut vals = r.theta.clone();
            vals.push(r.chi2);
            vals.push(r.tvd);
            let msg: String = r.message.chars().map(|c| if c == ',' || c == '\n' || c == '\r' { ';' } else { c }).collect();
            let _ = writeln!(s, "{},{},{},{},{}", r.run, r.estimator, r.status.as_str(), crate::format::row(&vals), msg);
        }
        s
    }

    /// Aggregate CSV; see `docs/csv-columns.md` for the column order.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("estimator,runs_ok,runs_not_converged,runs_failed");
        for p in &self.param_names {
            let _ = write!(s, ",{p}_mean,{p}_sd");
        }
        s.push_str(",chi2_mean,chi2_median,chi2_sd,chi2_infinite,tvd_mean,tvd_median,tvd_sd\n");
        for r in &self.summary {
            let _ = write!(s, "{},{},{},{}", r.estimator, r.runs_ok, r.runs_not_converged, r.runs_failed);
            for p in &r.params {
                let _ = write!(s, ",{},{}", g6(p.mean), g6(p.sd));
            }
            let _ = writeln!(
                s,
                ",{},{},{},{},{},{},{}",
                g6(r.chi2.mean),
                g6(r.chi2.median),
                g6(r.chi2.sd),
                r.chi2_infinite,
                g6(r.tvd.mean),
                g6(r.tvd.median),
                g6(r.tvd.sd)
            );
        }
        s
    }
}

/// Fit options for a study: the quadrature tolerance comes from the
/// override, else the config, else the library default.
pub fn fit_options(exp: &Experiment, opts: &RunOptions) -> FitOptions {
    let mut fit = FitOptions::default();
    if let Some(t) = opts.quad_tol.or(exp.quad_tol) {
        fit.quad = QuadratureConfig::default().with_abs_tol(t);
    }
    fit
}

/// The (possibly contaminated) sample of run `index`.
pub fn run_sample(exp: &Experiment, seed: u64, index: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(seed, index));
    let clean = exp.model.sample(&exp.truth, exp.sample_size, &mut rng)?;
    apply_contamination(&clean, &exp.contamination, &mut rng)
}

struct KdeCache<'a> {
    sample: &'a [f64],
    quad: QuadratureConfig,
    entries: Vec<(KdeSpec, std::result::Result<DensityEstimate, String>)>,
}

impl KdeCache<'_> {
    fn get(&mut self, spec: KdeSpec) -> phidiv::Result<&DensityEstimate> {
        let i = match self.entries.iter().position(|(s, _)| *s == spec) {
            Some(i) => i,
            None => {
                let kde = DensityEstimate::with_config(spec, self.sample, &self.quad).map_err(|e| e.to_string());
                self.entries.push((spec, kde));
                self.entries.len() - 1
            }
        };
        self.entries[i].1.as_ref().map_err(|e| phidiv::Error::InvalidInput(e.clone()))
    }
}

fn fit_one(
    exp: &Experiment,
    k: usize,
    sample: &[f64],
    init: &[f64],
    done: &[Option<Vec<f64>>],
    kdes: &mut KdeCache,
    fit: &FitOptions,
) -> phidiv::Result<EstimatorResult> {
    let e = &exp.estimators[k];
    let m = &exp.model;
    match &e.kind {
        EstimatorKind::Mle => mle(m, sample, init, fit),
        EstimatorKind::Classical => classical_mdphide(m, sample, &e.spec, init, fit),
        EstimatorKind::Kernel(s) => kernel_mdphide_with(m, kdes.get(*s)?, &e.spec, init, fit),
        EstimatorKind::BasuLindsay(s) => basu_lindsay_with(m, kdes.get(*s)?, &e.spec, init, fit),
        EstimatorKind::Beran(s) => beran_with(m, kdes.get(*s)?, &e.spec, init, fit),
        EstimatorKind::Dphide(escort) => {
            let escort = match escort {
                Escort::Fixed(v) => v.clone(),
                Escort::Estimator(j) => done[*j].clone().ok_or_else(|| {
                    phidiv::Error::InvalidInput(format!("escort estimator {} failed in this run", exp.estimators[*j].id))
                })?,
            };
            dphide(m, &escort, sample, &e.spec, &escort, fit)
        }
        EstimatorKind::Mpd(a) => mpd(m, sample, *a, init, fit),
        EstimatorKind::Contamination { noise_model, noise0, lambda0, lambda_max } => {
            let ci = ContaminationInit {
                phi0: init.to_vec(),
                alpha0: init.to_vec(),
                noise0: noise0.clone(),
                lambda0: *lambda0,
                lambda_max: *lambda_max,
                force_zero: false,
            };
            contamination_mdphide(m, noise_model, sample, &e.spec, &ci, fit)
        }
    }
}

/// All fits of run `index`, in config order.
pub fn run_once(exp: &Experiment, seed: u64, index: usize, fit: &FitOptions) -> Vec<RunRow> {
    let d = exp.model.dim();
    let failed = |id: &str, msg: String| RunRow {
        run: index,
        estimator: id.to_string(),
        status: RowStatus::Failed,
        theta: vec![f64::NAN; d],
        chi2: f64::NAN,
        tvd: f64::NAN,
        message: msg,
    };
    let sample = match run_sample(exp, seed, index) {
        Ok(s) => s,
        Err(err) => return exp.estimators.iter().map(|e| failed(&e.id, format!("sampling: {err}"))).collect(),
    };
    let init = match &exp.init {
        InitRule::Truth => Ok(exp.truth.clone()),
        InitRule::Fixed(v) => Ok(v.clone()),
        InitRule::Mle => mle(&exp.model, &sample, &exp.truth, fit).map(|r| r.theta_hat),
    };
    let init = match init {
        Ok(v) => v,
        Err(err) => return exp.estimators.iter().map(|e| failed(&e.id, format!("initial fit: {err}"))).collect(),
    };
    let mut kdes = KdeCache { sample: &sample, quad: fit.quad, entries: Vec::new() };
    let mut done: Vec<Option<Vec<f64>>> = Vec::with_capacity(exp.estimators.len());
    let mut rows = Vec::with_capacity(exp.estimators.len());
    for (k, e) in exp.estimators.iter().enumerate() {
        let res = fit_one(exp, k, &sample, &init, &done, &mut kdes, fit);
        let row = match res {
            Ok(r) if r.theta_hat.iter().all(|v| v.is_finite()) => {
                let chi2 = chi2_distance(&exp.model, &r.theta_hat, &exp.truth, &fit.quad).unwrap_or(f64::NAN);
                let tv = tvd(&exp.model, &r.theta_hat, &exp.truth, &fit.quad).unwrap_or(f64::NAN);
                let status = if r.status.converged { RowStatus::Ok } else { RowStatus::NotConverged };
                RunRow {
                    run: index,
                    estimator: e.id.clone(),
                    status,
                    theta: r.theta_hat,
                    chi2,
                    tvd: tv,
                    message: r.status.warnings.join("; "),
                }
            }
            Ok(r) => failed(&e.id, format!("non-finite estimate {:?}", r.theta_hat)),
            Err(err) => failed(&e.id, err.to_string()),
        };
        done.push((row.status != RowStatus::Failed).then(|| row.theta.clone()));
        rows.push(row);
    }
    rows
}

fn summarize(exp: &Experiment, rows: &[RunRow]) -> Vec<SummaryRow> {
    let d = exp.model.dim();
    exp.estimators
        .iter()
        .map(|e| {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| r.estimator == e.id).collect();
            let good: Vec<&RunRow> = mine.iter().copied().filter(|r| r.status != RowStatus::Failed).collect();
            SummaryRow {
                estimator: e.id.clone(),
                runs_ok: mine.iter().filter(|r| r.status == RowStatus::Ok).count(),
                runs_not_converged: mine.iter().filter(|r| r.status == RowStatus::NotConverged).count(),
                runs_failed: mine.iter().filter(|r| r.status == RowStatus::Failed).count(),
                params: (0..d).map(|j| Stats::of(good.iter().map(|r| r.theta[j]))).collect(),
                chi2: Stats::of(good.iter().map(|r| r.chi2)),
                chi2_infinite: good.iter().filter(|r| r.chi2 == f64::INFINITY).count(),
                tvd: Stats::of(good.iter().map(|r| r.tvd)),
            }
        })
        .collect()
}

/// Runs the study. Runs execute in parallel up to `opts.jobs`; the output is
/// folded in run-index order and is identical for any job count.
pub fn run_experiment(exp: &Experiment, opts: &RunOptions) -> Result<RunSummary> {
    let seed = opts.seed.unwrap_or(exp.seed);
    let runs = opts.runs.unwrap_or(exp.runs);
    if runs == 0 {
        return Err(SimError::Config("runs must be positive".into()));
    }
    let fit = fit_options(exp, opts);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        if j == 0 {
            return Err(SimError::Config("jobs must be positive".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| SimError::Pool(e.to_string()))?;
    let per_run: Vec<Vec<RunRow>> = pool.install(|| (0..runs).into_par_iter().map(|i| run_once(exp, seed, i, &fit)).collect());
    let rows: Vec<RunRow> = per_run.into_iter().flatten().collect();
    Ok(RunSummary {
        param_names: exp.model.param_names().iter().map(|s| s.to_string()).collect(),
        summary: summarize(exp, &rows),
        rows,
    })
}
