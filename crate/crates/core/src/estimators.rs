//! Parametric estimators: the classical min-sup dual estimator, the
//! kernel-plugged dual estimator, the dual estimator at a fixed escort,
//! Basu-Lindsay, Beran, minimum density power, maximum likelihood and the
//! contamination-aware dual estimator.
//!
//! Every objective is evaluated with log densities; a failed evaluation
//! (quadrature error, parameter outside the natural domain) scores +∞ inside
//! the optimizer rather than aborting the fit.

use crate::density::{ln_smooth_model, DensityEstimate, KdeSpec, KernelKind};
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::models::{Bounds, Family, ModelSpec, ParamVector, Prepared, Support};
use crate::optimize::{nelder_mead, nelder_mead_max, nested_infsup, OptimOptions, OptimResult, OptimStatus};
use crate::quadrature::{integrate_breaks, integrate_real_line, integrate_semi_infinite, integrate_via_quantile, QuadratureConfig};
use crate::special::{ln_add_exp, ln_norm_pdf, mean};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub quad: QuadratureConfig,
    /// Outer (or only) optimization.
    pub optim: OptimOptions,
    /// Inner maximization of the nested estimators.
    pub inner_optim: OptimOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        let optim = OptimOptions::default();
        FitOptions {
            quad: QuadratureConfig::default(),
            optim,
            inner_optim: OptimOptions { f_tol: optim.f_tol / 10.0, restarts: 1, ..optim },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitStatus {
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

impl FitStatus {
    fn from_optim(r: &OptimResult) -> Self {
        FitStatus {
            converged: r.status == OptimStatus::Converged,
            iterations: r.iterations,
            evaluations: r.evaluations,
            warnings: Vec::new(),
        }
    }
}

/// Inner solutions reported next to the estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    None,
    /// Maximizer of the dual objective.
    Dual { alpha: ParamVector },
    Contamination { alpha: ParamVector, noise: ParamVector, lambda: f64 },
    /// `trace` holds the log-likelihood after every EM step of the final
    /// attempt.
    Em { iterations: usize, log_likelihood: f64, restarts: usize, trace: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub theta_hat: ParamVector,
    pub objective_value: f64,
    pub status: FitStatus,
    pub witness: Witness,
}

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::InvalidInput("estimation needs at least two observations".into()));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("sample contains non-finite values".into()));
    }
    Ok(())
}

fn score(r: Result<f64>) -> f64 {
    match r {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

fn start_point(model: &ModelSpec, init: &[f64]) -> Result<Vec<f64>> {
    if init.len() != model.dim() {
        return Err(Error::InvalidInput(format!("start has length {}, model needs {}", init.len(), model.dim())));
    }
    Ok(model.bounds.clamp_inside(init, 1e-6))
}

/// Integration domain for one fit evaluation.
struct Domain {
    lower: f64,
    /// `None` means +∞.
    upper: Option<f64>,
    scale: f64,
    breaks: Vec<f64>,
}

impl Domain {
    fn integrate<F: Fn(f64) -> f64>(&self, f: F, quad: &QuadratureConfig) -> Result<f64> {
        match self.upper {
            Some(u) => {
                let mut br = vec![self.lower];
                br.extend(self.breaks.iter().copied().filter(|&b| b > self.lower && b < u));
                br.push(u);
                br.dedup();
                Ok(integrate_breaks(f, &br, quad)?.value)
            }
            // on [0, ∞) integrate in s = ln x: power-law behaviour at the
            // origin (Weibull shapes below 1) becomes an exponential tail
            None if self.lower == 0.0 => {
                let g = |s: f64| {
                    let x = s.exp();
                    if x == 0.0 || !x.is_finite() {
                        0.0
                    } else {
                        let v = f(x);
                        if v == 0.0 {
                            0.0
                        } else {
                            v * x
                        }
                    }
                };
                let br: Vec<f64> = self.breaks.iter().filter(|&&b| b > 0.0).map(|b| b.ln()).collect();
                Ok(integrate_real_line(g, self.scale.ln(), 4.0, &br, quad)?.value)
            }
            None => Ok(integrate_semi_infinite(f, self.lower, self.scale, &self.breaks, quad)?.value),
        }
    }
}

/// Domain covering the mass of `model` at every θ in `thetas` and, when
/// given, of the kernel estimate. `k_weighted` asks for the region where the
/// estimate itself lives even outside the model support.
fn domain(model: &ModelSpec, thetas: &[&[f64]], kde: Option<&DensityEstimate>, k_weighted: bool) -> Result<Domain> {
    let mut breaks: Vec<f64> = kde.map(|k| k.breakpoints()).unwrap_or_default();
    match model.support() {
        Support::RealLine => {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for t in thetas {
                let (a, b) = model.envelope(t)?;
                lo = lo.min(a);
                hi = hi.max(b);
                breaks.extend(centers(model, t));
            }
            if let Some(k) = kde {
                let s = k.sorted_sample();
                let pad = 12.0 * k.bandwidth();
                lo = lo.min(s[0] - pad);
                hi = hi.max(s[s.len() - 1] + pad);
            }
            breaks.sort_by(|a, b| a.total_cmp(b));
            Ok(Domain { lower: lo, upper: Some(hi), scale: 1.0, breaks })
        }
        Support::HalfLine => {
            let mut lower = 0.0;
            if let Some(k) = kde {
                if k_weighted && k.kernel().support() == Support::RealLine {
                    lower = k.sorted_sample()[0].min(0.0) - 12.0 * k.bandwidth();
                    breaks.push(0.0);
                }
            }
            let scale = thetas.iter().map(|t| model.typical_scale(t)).fold(0.0, f64::max).max(1e-3);
            breaks.sort_by(|a, b| a.total_cmp(b));
            Ok(Domain { lower, upper: None, scale, breaks })
        }
    }
}

fn centers(model: &ModelSpec, theta: &[f64]) -> Vec<f64> {
    match model.family {
        Family::Gaussian | Family::GaussianLocation { .. } => vec![theta[0]],
        Family::GaussMix2 => vec![theta[1], theta[2]],
        _ => Vec::new(),
    }
}

/// ∫ φ'(p_φ/q) p_φ with q given through `ln_q`.
fn dual_integral<Q: Fn(f64) -> f64>(
    model: &ModelSpec,
    phi: &[f64],
    prep: &Prepared,
    ln_q: Q,
    spec: &DivergenceSpec,
    dom: &Domain,
    quad: &QuadratureConfig,
) -> Result<f64> {
    if model.family == Family::Gpd {
        let r = integrate_via_quantile(|x| spec.phi_prime_ln(prep.ln_pdf(x) - ln_q(x)), model, phi, &dom.breaks, quad)?;
        return Ok(r.value);
    }
    dom.integrate(|x| spec.dual_integrand(prep.ln_pdf(x), ln_q(x)), quad)
}

/// (1/n) Σ φ#(p_φ/q)(y_i) from ln p_φ(y_i) - ln q(y_i).
fn sharp_mean<I: Iterator<Item = f64>>(spec: &DivergenceSpec, ln_ratios: I, n: usize) -> f64 {
    ln_ratios.map(|r| spec.phi_sharp_ln(r)).sum::<f64>() / n as f64
}

/// Classical dual objective ∫φ'(p_φ/p_α)p_φ - (1/n)Σφ#(p_φ/p_α)(y_i).
/// Vanishes identically at α = φ.
pub fn dual_inner_objective(
    model: &ModelSpec,
    phi: &[f64],
    alpha: &[f64],
    sample: &[f64],
    spec: &DivergenceSpec,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_sample(sample)?;
    let pp = model.prepare(phi)?;
    let pa = model.prepare(alpha)?;
    let integral = match spec.gamma() {
        Some(gamma) => match model.ln_cross_power_integral(phi, alpha, gamma) {
            Some(lc) => lc.exp_m1() / (gamma - 1.0),
            None => {
                let dom = domain(model, &[phi, alpha], None, false)?;
                dual_integral(model, phi, &pp, |x| pa.ln_pdf(x), spec, &dom, quad)?
            }
        },
        // ∫ (p_φ - p_α) = 0
        None => 0.0,
    };
    let s = sharp_mean(spec, sample.iter().map(|&y| pp.ln_pdf(y) - pa.ln_pdf(y)), sample.len());
    Ok(integral - s)
}

/// inf over φ of sup over α of the classical dual objective.
pub fn classical_mdphide(
    model: &ModelSpec,
    sample: &[f64],
    spec: &DivergenceSpec,
    init: &[f64],
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    check_sample(sample)?;
    spec.validate()?;
    let x0 = start_point(model, init)?;
    let r = nested_infsup(
        |phi, alpha| dual_inner_objective(model, phi, alpha, sample, spec, &opts.quad).unwrap_or(f64::NAN),
        &x0,
        &x0,
        &model.bounds,
        &model.bounds,
        &opts.optim,
        &opts.inner_optim,
    )?;
    let mut status = FitStatus::from_optim(&r.outer);
    if r.inner_failures > 0 {
        status.warnings.push(format!("{} inner maximizations failed", r.inner_failures));
    }
    Ok(EstimatorResult {
        theta_hat: model.canonicalize(&r.phi),
        objective_value: r.value,
        status,
        witness: Witness::Dual { alpha: r.alpha },
    })
}

/// Kernel dual objective ∫φ'(p_φ/K)p_φ - (1/n)Σφ#(p_φ/K)(y_i) with K the
/// estimate built on the sample.
pub fn kernel_dual_objective(
    model: &ModelSpec,
    phi: &[f64],
    kde: &DensityEstimate,
    spec: &DivergenceSpec,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let pp = model.prepare(phi)?;
    let ln_k = kde.ln_at_sample();
    if let Some(i) = ln_k.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("kernel estimate vanishes at observation {}", kde.sample()[i])));
    }
    let dom = domain(model, &[phi], Some(kde), false)?;
    let integral = dual_integral(model, phi, &pp, |x| kde.ln_eval(x), spec, &dom, quad)?;
    let s = sharp_mean(spec, kde.sample().iter().zip(ln_k).map(|(&y, &lk)| pp.ln_pdf(y) - lk), ln_k.len());
    Ok(integral - s)
}

/// Minimizes the kernel dual objective; the bandwidth is resolved once from
/// `kde_spec` before optimizing.
pub fn kernel_mdphide(
    model: &ModelSpec,
    sample: &[f64],
    kde_spec: KdeSpec,
    spec: &DivergenceSpec,
    init: &[f64],
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    check_sample(sample)?;
    let kde = DensityEstimate::with_config(kde_spec, sample, &opts.quad)?;
    kernel_mdphide_with(model, &kde, spec, init, opts)
}

/// [`kernel_mdphide`] with a prebuilt estimate.
pub fn kernel_mdphide_with(
    model: &ModelSpec,
    kde: &DensityEstimate,
    spec: &DivergenceSpec,
    init: &[f64],
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    spec.validate()?;
    let x0 = start_point(model, init)?;
    let r = nelder_mead(|phi| score(kernel_dual_objective(model, phi, kde, spec, &opts.quad)), &x0, &model.bounds, &opts.optim)?;
    let mut status = FitStatus::from_optim(&r);
    status.warnings.extend(kde.warnings().iter().cloned());
    Ok(EstimatorResult { theta_hat: model.canonicalize(&r.x), objective_value: r.f, status, witness: Witness::None })
}

/// Maximizer over α of the classical dual objective at a fixed escort φ.
pub fn dphide(
    model: &ModelSpec,
    escort: &[f64],
    sample: &[f64],
    spec: &DivergenceSpec,
    alpha0: &[f64],
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    check_sample(sample)?;
    spec.validate()?;
    model.validate(escort)?;
    let a0 = start_point(model, alpha0)?;
    let r = nelder_mead_max(
        |alpha| dual_inner_objective(model, escort, alpha, sample, spec, &opts.quad).unwrap_or(f64::NAN),
        &a0,
        &model.bounds,
        &opts.optim,
    )?;
    Ok(EstimatorResult {
        theta_hat: model.canonicalize(&r.x),
        objective_value: r.f,
        status: FitStatus::from_optim(&r),
        witness: Witness::Dual { alpha: r.x },
    })
}

/// ∫ φ(p*_φ/K) K with p* the model smoothed by the same kernel.
pub fn basu_lindsay_objective(
    model: &ModelSpec,
    phi: &[f64],
    kde: &DensityEstimate,
    spec: &DivergenceSpec,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let kernel = kde.kernel();
    if !matches!(kernel, KernelKind::Gaussian | KernelKind::Varying) {
        return Err(Error::Unsupported(format!("Basu-Lindsay needs a Gaussian or varying kernel, got {kernel:?}")));
    }
    model.validate(phi)?;
    let w = kde.bandwidth();
    let dom = domain(model, &[phi], Some(kde), true)?;
    // a failing inner smoothing integral poisons the whole evaluation
    let failed = std::cell::Cell::new(None);
    let v = dom.integrate(
        |x| match ln_smooth_model(kernel, w, model, phi, x, quad) {
            Ok(ls) => spec.divergence_integrand(ls, kde.ln_eval(x)),
            Err(e) => {
                failed.set(Some(e));
                0.0
            }
        },
        quad,
    )?;
    match failed.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

pub fn basu_lindsay(
    model: &ModelSpec,
    sample: &[f64],
    kde_spec: KdeSpec,
    spec: &DivergenceSpec,
    init: &[f64],
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    check_sample(sample)?;
    let kde = DensityEstimate::with_config(kde_spec, sample, &opts.quad)?;
    basu_lindsay_with(model, &kde, spec, init, opts)
}

pub fn basu_lindsay_with(
    model: &ModelSpec,
    kde: &DensityEstimate,
    spec: &DivergenceSpec,
    init: &[f64],
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    spec.validate()?;
    if !matches!(kde.kernel(), KernelKind::Gaussian | KernelKind::Varying) {
        return Err(Error::Unsupported(format!("Basu-Lindsay needs a Gaussian or varying kernel, got {:?}", kde.kernel())));
    }
    let x0 = start_point(model, init)?;
    let r =
        nelder_mead(|phi| score(basu_lindsay_objective(model, phi, kde, spec, &opts.quad)), &x0, &model.bounds, &opts.optim)?;
    let mut status = FitStatus::from_optim(&r);
    status.warnings.extend(kde.warnings().iter().cloned());
    Ok(EstimatorResult { theta_hat: model.canonicalize(&r.x), objective_value: r.f, status, witness: Witness::None })
}

/// ∫ φ(p_φ/K) K.
pub fn beran_objective(
    model: &ModelSpec,
    phi: &[f64],
    kde: &DensityEstimate,
    spec: &DivergenceSpec,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let pp = model.prepare(phi)?;
    let dom = domain(model, &[phi], Some(kde), true)?;
    dom.integrate(|x| spec.divergence_integrand(pp.ln_pdf(x), kde.ln_eval(x)), quad)
}

pub fn beran(
    model: &ModelSpec,
    sample: &[f64],
    kde_spec: KdeSpec,
    spec: &DivergenceSpec,
    init: &[f64],
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    check_sample(sample)?;
    let kde = DensityEstimate::with_config(kde_spec, sample, &opts.quad)?;
    beran_with(model, &kde, spec, init, opts)
}

pub fn beran_with(
    model: &ModelSpec,
    kde: &DensityEstimate,
    spec: &DivergenceSpec,
    init: &[f64],
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    spec.validate()?;
    let x0 = start_point(model, init)?;
    let r = nelder_mead(|phi| score(beran_objective(model, phi, kde, spec, &opts.quad)), &x0, &model.bounds, &opts.optim)?;
    let mut status = FitStatus::from_optim(&r);
    status.warnings.extend(kde.warnings().iter().cloned());
    Ok(EstimatorResult { theta_hat: model.canonicalize(&r.x), objective_value: r.f, status, witness: Witness::None })
}

/// ∫p_φ^{1+a} - ((a+1)/a)(1/n)Σp_φ^a(y_i).
pub fn mpd_objective(model: &ModelSpec, phi: &[f64], sample: &[f64], a: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("power tradeoff must be positive, got {a}")));
    }
    let pp = model.prepare(phi)?;
    let integral = match model.power_integral(phi, a) {
        Some(v) => v,
        None if model.family == Family::Gpd => {
            integrate_via_quantile(|x| (a * pp.ln_pdf(x)).exp(), model, phi, &[], quad)?.value
        }
        None => domain(model, &[phi], None, false)?.integrate(|x| ((1.0 + a) * pp.ln_pdf(x)).exp(), quad)?,
    };
    let s = sample.iter().map(|&y| (a * pp.ln_pdf(y)).exp()).sum::<f64>() / sample.len() as f64;
    Ok(integral - (a + 1.0) / a * s)
}

/// Minimum density power divergence estimate with tradeoff `a`.
pub fn mpd(model: &ModelSpec, sample: &[f64], a: f64, init: &[f64], opts: &FitOptions) -> Result<EstimatorResult> {
    check_sample(sample)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("power tradeoff must be positive, got {a}")));
    }
    let x0 = start_point(model, init)?;
    let r = nelder_mead(|phi| score(mpd_objective(model, phi, sample, a, &opts.quad)), &x0, &model.bounds, &opts.optim)?;
    Ok(EstimatorResult {
        theta_hat: model.canonicalize(&r.x),
        objective_value: r.f,
        status: FitStatus::from_optim(&r),
        witness: Witness::None,
    })
}

fn mean_ln_lik(model: &ModelSpec, theta: &[f64], sample: &[f64]) -> Result<f64> {
    let p = model.prepare(theta)?;
    Ok(sample.iter().map(|&y| p.ln_pdf(y)).sum::<f64>() / sample.len() as f64)
}

/// Maximum likelihood. Gaussian: sample mean and the n-1 standard
/// deviation. Mixtures: EM from `init`. GPD: Nelder-Mead. The objective
/// value is the negative mean log-likelihood.
pub fn mle(model: &ModelSpec, sample: &[f64], init: &[f64], opts: &FitOptions) -> Result<EstimatorResult> {
    check_sample(sample)?;
    let closed = |theta: Vec<f64>| -> Result<EstimatorResult> {
        let mut status = FitStatus { converged: true, ..Default::default() };
        if !model.bounds.contains(&theta) {
            status.warnings.push(format!("closed-form estimate {theta:?} clamped into the box"));
        }
        let theta = model.bounds.clamp_inside(&theta, 0.0);
        Ok(EstimatorResult {
            objective_value: -mean_ln_lik(model, &theta, sample)?,
            theta_hat: theta,
            status,
            witness: Witness::None,
        })
    };
    match model.family {
        Family::Gaussian => closed(vec![mean(sample), crate::special::sd(sample)]),
        Family::GaussianLocation { .. } => closed(vec![mean(sample)]),
        Family::GaussMix2 => em_gauss_mix2(model, sample, init, &EmOptions::default()),
        Family::WeibullMix2 { .. } => em_weibull_mix2(model, sample, init, &EmOptions::default()),
        Family::Gpd => {
            if sample.iter().any(|&y| y < 0.0) {
                return Err(Error::InvalidInput("GPD likelihood needs nonnegative data".into()));
            }
            let x0 = start_point(model, init)?;
            let r = nelder_mead(|t| score(mean_ln_lik(model, t, sample).map(|v| -v)), &x0, &model.bounds, &opts.optim)?;
            Ok(EstimatorResult {
                theta_hat: r.x.clone(),
                objective_value: r.f,
                status: FitStatus::from_optim(&r),
                witness: Witness::None,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    /// Stop once the mean log-likelihood gains less than this.
    pub tol: f64,
    pub max_iters: usize,
    /// Jittered restarts after a collapsed component.
    pub max_restarts: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { tol: 1e-12, max_iters: 10_000, max_restarts: 5 }
    }
}

const COLLAPSE: f64 = 1e-6;

/// Runs `step` (θ → (θ', mean log-likelihood at θ)) until the gain falls
/// below tol. Returns θ, trace, iterations and whether it collapsed.
fn em_loop<S: FnMut(&[f64]) -> (Vec<f64>, f64)>(
    mut theta: Vec<f64>,
    mut step: S,
    opts: &EmOptions,
) -> (Vec<f64>, Vec<f64>, usize, bool) {
    let mut trace = Vec::new();
    let mut iters = 0;
    while iters < opts.max_iters {
        let (next, ll) = step(&theta);
        iters += 1;
        if !ll.is_finite() {
            return (theta, trace, iters, true);
        }
        let gain = trace.last().map(|&prev: &f64| ll - prev);
        trace.push(ll);
        theta = next;
        if theta[0] < COLLAPSE || theta[0] > 1.0 - COLLAPSE || theta.iter().any(|v| !v.is_finite()) {
            return (theta, trace, iters, true);
        }
        if let Some(g) = gain {
            if g.abs() < opts.tol {
                break;
            }
        }
    }
    (theta, trace, iters, false)
}

fn em_driver<S, J>(
    model: &ModelSpec,
    sample: &[f64],
    init: &[f64],
    opts: &EmOptions,
    mut step: S,
    mut jitter: J,
) -> Result<EstimatorResult>
where
    S: FnMut(&[f64]) -> (Vec<f64>, f64),
    J: FnMut(&[f64], usize) -> Vec<f64>,
{
    if init.len() != model.dim() {
        return Err(Error::InvalidInput("EM start has the wrong length".into()));
    }
    let mut start = init.to_vec();
    let mut warnings = Vec::new();
    for attempt in 0..=opts.max_restarts {
        let (theta, trace, iters, collapsed) = em_loop(start.clone(), &mut step, opts);
        if collapsed {
            warnings.push(format!("EM collapsed on attempt {attempt}; restarting from a jittered start"));
            start = jitter(init, attempt + 1);
            continue;
        }
        let theta = model.canonicalize(&theta);
        if !model.bounds.contains(&theta) {
            warnings.push(format!("EM estimate {theta:?} clamped into the box"));
        }
        let theta = model.bounds.clamp_inside(&theta, 0.0);
        let ll = mean_ln_lik(model, &theta, sample)?;
        return Ok(EstimatorResult {
            theta_hat: theta,
            objective_value: -ll,
            status: FitStatus { converged: iters < opts.max_iters, iterations: iters, evaluations: iters, warnings },
            witness: Witness::Em { iterations: iters, log_likelihood: ll, restarts: attempt, trace },
        });
    }
    Err(Error::Optimizer(format!("EM collapsed after {} restarts", opts.max_restarts)))
}

/// EM for λN(μ1,1) + (1-λ)N(μ2,1).
pub fn em_gauss_mix2(model: &ModelSpec, sample: &[f64], init: &[f64], opts: &EmOptions) -> Result<EstimatorResult> {
    check_sample(sample)?;
    if model.family != Family::GaussMix2 {
        return Err(Error::Unsupported("em_gauss_mix2 needs the GaussMix2 family".into()));
    }
    model.validate(init)?;
    let n = sample.len() as f64;
    let step = |t: &[f64]| {
        let (l, m1, m2) = (t[0], t[1], t[2]);
        let (ll1, ll2) = (l.ln(), (-l).ln_1p());
        let (mut sr, mut sry, mut sy, mut ll) = (0.0, 0.0, 0.0, 0.0);
        for &y in sample {
            let a = ll1 + ln_norm_pdf(y - m1);
            let b = ll2 + ln_norm_pdf(y - m2);
            let lm = ln_add_exp(a, b);
            let r = (a - lm).exp();
            ll += lm;
            sr += r;
            sry += r * y;
            sy += y;
        }
        let m1n = if sr > 0.0 { sry / sr } else { m1 };
        let m2n = if n - sr > 0.0 { (sy - sry) / (n - sr) } else { m2 };
        (vec![sr / n, m1n, m2n], ll / n)
    };
    let jitter = |t: &[f64], k: usize| {
        let d = 0.5 * k as f64;
        vec![0.5, t[1] - d, t[2] + d]
    };
    em_driver(model, sample, init, opts, step, jitter)
}

/// Root in ν of Σ r_i [1/ν + L_i - e^{νL_i} L_i], which is decreasing in ν.
fn weibull_shape_mstep(resp: &[f64], ln_z: &[f64]) -> f64 {
    let g = |nu: f64| -> f64 {
        resp.iter().zip(ln_z).map(|(&r, &l)| r * (1.0 / nu + l - (nu * l).exp() * l)).sum()
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while g(hi) > 0.0 && hi < 1e4 {
        lo = hi;
        hi *= 2.0;
    }
    while g(lo) < 0.0 && lo > 1e-8 {
        hi = lo;
        lo /= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// EM for λW(ν1, s1) + (1-λ)W(ν2, s2) with the scales fixed by the family.
/// The shape M-step is solved by bisection.
pub fn em_weibull_mix2(model: &ModelSpec, sample: &[f64], init: &[f64], opts: &EmOptions) -> Result<EstimatorResult> {
    check_sample(sample)?;
    let (s1, s2) = match model.family {
        Family::WeibullMix2 { scale1, scale2 } => (scale1, scale2),
        _ => return Err(Error::Unsupported("em_weibull_mix2 needs the WeibullMix2 family".into())),
    };
    if sample.iter().any(|&y| y <= 0.0) {
        return Err(Error::InvalidInput("Weibull likelihood needs positive data".into()));
    }
    model.validate(init)?;
    let n = sample.len() as f64;
    let lz1: Vec<f64> = sample.iter().map(|&y| (y / s1).ln()).collect();
    let lz2: Vec<f64> = sample.iter().map(|&y| (y / s2).ln()).collect();
    let mut r1 = vec![0.0; sample.len()];
    let mut r2 = vec![0.0; sample.len()];
    let step = |t: &[f64]| {
        let (l, nu1, nu2) = (t[0], t[1], t[2]);
        let ln_w = |lz: f64, nu: f64, s: f64| nu.ln() - s.ln() + (nu - 1.0) * lz - (nu * lz).exp();
        let mut ll = 0.0;
        for i in 0..sample.len() {
            let a = l.ln() + ln_w(lz1[i], nu1, s1);
            let b = (-l).ln_1p() + ln_w(lz2[i], nu2, s2);
            let lm = ln_add_exp(a, b);
            ll += lm;
            r1[i] = (a - lm).exp();
            r2[i] = 1.0 - r1[i];
        }
        let lam = r1.iter().sum::<f64>() / n;
        (vec![lam, weibull_shape_mstep(&r1, &lz1), weibull_shape_mstep(&r2, &lz2)], ll / n)
    };
    let jitter = |t: &[f64], k: usize| {
        let f = 1.0 + 0.25 * k as f64;
        vec![0.5, t[1] * f, t[2] / f]
    };
    em_driver(model, sample, init, opts, step, jitter)
}

/// Starting values and λ box for [`contamination_mdphide`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationInit {
    pub phi0: ParamVector,
    pub alpha0: ParamVector,
    pub noise0: ParamVector,
    pub lambda0: f64,
    /// Upper end of the λ box; the lower end is 0.
    pub lambda_max: f64,
    /// Holds λ at 0 and the noise parameters at `noise0`.
    pub force_zero: bool,
}

/// Default noise submodel: a location-scale Gaussian on the real line, a
/// GPD on the half line.
pub fn default_noise_model(model: &ModelSpec) -> ModelSpec {
    match model.support() {
        Support::RealLine => ModelSpec {
            family: Family::Gaussian,
            bounds: Bounds { lower: vec![-100.0, 0.05], upper: vec![100.0, 50.0] },
        },
        Support::HalfLine => ModelSpec {
            family: Family::Gpd,
            bounds: Bounds { lower: vec![0.05, 0.05], upper: vec![20.0, 1000.0] },
        },
    }
}

/// Dual objective with the mixture (1-λ)p_α + λq_θ in the denominator.
/// `inner` is α, then θ, then λ. At λ = 0 this is the classical objective.
pub fn contamination_dual_objective(
    model: &ModelSpec,
    noise_model: &ModelSpec,
    phi: &[f64],
    inner: &[f64],
    sample: &[f64],
    spec: &DivergenceSpec,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let d = model.dim();
    let dn = noise_model.dim();
    if inner.len() != d + dn + 1 {
        return Err(Error::InvalidInput("inner vector must hold alpha, noise parameters and lambda".into()));
    }
    let (alpha, rest) = inner.split_at(d);
    let (theta, lam) = (&rest[..dn], rest[dn]);
    if !(0.0..1.0).contains(&lam) {
        return Err(Error::Domain(format!("mixing weight must lie in [0, 1), got {lam}")));
    }
    if lam == 0.0 {
        return dual_inner_objective(model, phi, alpha, sample, spec, quad);
    }
    check_sample(sample)?;
    let pp = model.prepare(phi)?;
    let pa = model.prepare(alpha)?;
    let pn = noise_model.prepare(theta)?;
    let (l0, l1) = ((-lam).ln_1p(), lam.ln());
    let ln_q = |x: f64| ln_add_exp(l0 + pa.ln_pdf(x), l1 + pn.ln_pdf(x));
    let mut dom = domain(model, &[phi, alpha], None, false)?;
    if let (Some(u), Support::RealLine) = (dom.upper, noise_model.support()) {
        let (a, b) = noise_model.envelope(theta)?;
        dom.lower = dom.lower.min(a);
        dom.upper = Some(u.max(b));
        dom.breaks.push(theta[0]);
        dom.breaks.sort_by(|a, b| a.total_cmp(b));
    }
    let integral = dual_integral(model, phi, &pp, ln_q, spec, &dom, quad)?;
    let s = sharp_mean(spec, sample.iter().map(|&y| pp.ln_pdf(y) - ln_q(y)), sample.len());
    Ok(integral - s)
}

/// inf over φ of sup over (α, θ, λ) of [`contamination_dual_objective`],
/// with λ boxed to [0, lambda_max].
pub fn contamination_mdphide(
    model: &ModelSpec,
    noise_model: &ModelSpec,
    sample: &[f64],
    spec: &DivergenceSpec,
    init: &ContaminationInit,
    opts: &FitOptions,
) -> Result<EstimatorResult> {
    check_sample(sample)?;
    spec.validate()?;
    if !(init.lambda_max > 0.0 && init.lambda_max < 1.0) {
        return Err(Error::InvalidParameter(format!("lambda_max must lie in (0, 1), got {}", init.lambda_max)));
    }
    let phi0 = start_point(model, &init.phi0)?;
    let alpha0 = start_point(model, &init.alpha0)?;
    if init.noise0.len() != noise_model.dim() {
        return Err(Error::InvalidInput("noise start has the wrong length".into()));
    }
    let (noise_bounds, lam_bounds) = if init.force_zero {
        (Bounds::new(init.noise0.clone(), init.noise0.clone())?, Bounds::new(vec![0.0], vec![0.0])?)
    } else {
        (noise_model.bounds.clone(), Bounds::new(vec![0.0], vec![init.lambda_max])?)
    };
    let inner_bounds = model.bounds.concat(&noise_bounds).concat(&lam_bounds);
    let mut inner0 = alpha0;
    inner0.extend(noise_bounds.clamp_inside(&init.noise0, 1e-6));
    inner0.push(if init.force_zero { 0.0 } else { init.lambda0.clamp(1e-6, init.lambda_max * (1.0 - 1e-6)) });
    let d = model.dim();
    let dn = noise_model.dim();
    let r = nested_infsup(
        |phi, inner| {
            contamination_dual_objective(model, noise_model, phi, inner, sample, spec, &opts.quad).unwrap_or(f64::NAN)
        },
        &phi0,
        &inner0,
        &model.bounds,
        &inner_bounds,
        &opts.optim,
        &opts.inner_optim,
    )?;
    let mut status = FitStatus::from_optim(&r.outer);
    if r.inner_failures > 0 {
        status.warnings.push(format!("{} inner maximizations failed", r.inner_failures));
    }
    Ok(EstimatorResult {
        theta_hat: model.canonicalize(&r.phi),
        objective_value: r.value,
        status,
        witness: Witness::Contamination {
            alpha: r.alpha[..d].to_vec(),
            noise: r.alpha[d..d + dn].to_vec(),
            lambda: r.alpha[d + dn],
        },
    })
}
