//! Influence function of the kernel dual estimator, escort conditions,
//! dual-gap and smoothed-objective curves, and consistency-bound
//! diagnostics.
//!
//! All of this is written for a Gaussian smoothing kernel K_w. The truth
//! P_T is either a member of the model or an explicit Gaussian mixture; its
//! smoothed density K_w*P_T is closed form in the Gaussian cases and obtained
//! by quadrature otherwise.

use nalgebra::{DMatrix, DVector};

use crate::density::{ln_smooth_model, BandwidthRule, DensityEstimate, KdeSpec, KernelKind};
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::estimators::{dual_inner_objective, kernel_dual_objective, FitOptions};
use crate::models::{Family, ModelSpec, ParamVector, Support};
use crate::optimize::nelder_mead_max;
use crate::quadrature::{integrate_breaks, integrate_real_line, integrate_semi_infinite, QuadratureConfig};
use crate::special::{ln_norm_pdf, ln_sum_exp_slice};

/// Data-generating distribution for population-level computations.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Model { model: ModelSpec, theta: ParamVector },
    /// Σ w_k N(m_k, s_k²); weights must sum to one.
    GaussianMixture { weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64> },
}

impl Truth {
    pub fn validate(&self) -> Result<()> {
        match self {
            Truth::Model { model, theta } => model.validate(theta),
            Truth::GaussianMixture { weights, means, sds } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len() {
                    return Err(Error::InvalidInput("mixture components have mismatched lengths".into()));
                }
                if weights.iter().any(|&w| !(w > 0.0)) || sds.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::InvalidParameter("mixture weights and sds must be positive".into()));
                }
                if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter("mixture weights must sum to one".into()));
                }
                Ok(())
            }
        }
    }

    pub fn support(&self) -> Support {
        match self {
            Truth::Model { model, .. } => model.support(),
            Truth::GaussianMixture { .. } => Support::RealLine,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Truth::Model { model, theta } => model.ln_pdf(theta, x).unwrap_or(f64::NAN),
            Truth::GaussianMixture { weights, means, sds } => {
                let terms: Vec<f64> = (0..weights.len())
                    .map(|k| weights[k].ln() - sds[k].ln() + ln_norm_pdf((x - means[k]) / sds[k]))
                    .collect();
                ln_sum_exp_slice(&terms)
            }
        }
    }

    /// ln (K_w * P_T)(x) for the Gaussian kernel.
    pub fn ln_smoothed(&self, w: f64, x: f64, quad: &QuadratureConfig) -> Result<f64> {
        match self {
            Truth::Model { model, theta } => ln_smooth_model(KernelKind::Gaussian, w, model, theta, x, quad),
            Truth::GaussianMixture { weights, means, sds } => {
                if !(w > 0.0) {
                    return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {w}")));
                }
                let terms: Vec<f64> = (0..weights.len())
                    .map(|k| {
                        let t = (sds[k] * sds[k] + w * w).sqrt();
                        weights[k].ln() - t.ln() + ln_norm_pdf((x - means[k]) / t)
                    })
                    .collect();
                Ok(ln_sum_exp_slice(&terms))
            }
        }
    }

    fn centers(&self) -> Vec<f64> {
        match self {
            Truth::Model { model, theta } => match model.family {
                Family::Gaussian | Family::GaussianLocation { .. } => vec![theta[0]],
                Family::GaussMix2 => vec![theta[1], theta[2]],
                _ => Vec::new(),
            },
            Truth::GaussianMixture { means, .. } => means.clone(),
        }
    }

    fn scale(&self) -> f64 {
        match self {
            Truth::Model { model, theta } => model.typical_scale(theta),
            Truth::GaussianMixture { sds, .. } => sds.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// ∫ f over the real line or the half line, with breakpoints.
fn integrate_on(support: Support, f: impl Fn(f64) -> f64, center: f64, scale: f64, breaks: &[f64], quad: &QuadratureConfig) -> Result<f64> {
    Ok(match support {
        Support::RealLine => integrate_real_line(f, center, scale, breaks, quad)?.value,
        Support::HalfLine => integrate_semi_infinite(f, 0.0, scale, breaks, quad)?.value,
    })
}

fn model_center(model: &ModelSpec, theta: &[f64]) -> f64 {
    match model.family {
        Family::Gaussian | Family::GaussianLocation { .. } => theta[0],
        Family::GaussMix2 => theta[0] * theta[1] + (1.0 - theta[0]) * theta[2],
        _ => 0.0,
    }
}

fn model_breaks(model: &ModelSpec, theta: &[f64]) -> Vec<f64> {
    match model.family {
        Family::Gaussian | Family::GaussianLocation { .. } => vec![theta[0]],
        Family::GaussMix2 => vec![theta[1], theta[2]],
        _ => Vec::new(),
    }
}

/// Influence-function report over a grid of contamination points.
#[derive(Debug, Clone, PartialEq)]
pub struct IfReport {
    pub grid: Vec<f64>,
    /// IF(x0) for every grid point; empty when A is singular.
    pub values: Vec<Vec<f64>>,
    /// max over the grid of the Euclidean norm of IF(x0); +∞ when A is
    /// singular.
    pub sup_norm: f64,
    pub condition_number: f64,
    pub invertible: bool,
}

/// Everything about the IF that does not depend on x0.
struct IfSetup<'a> {
    model: &'a ModelSpec,
    theta: &'a [f64],
    truth: &'a Truth,
    gamma: f64,
    w: f64,
    quad: QuadratureConfig,
    a: DMatrix<f64>,
}

fn check_if_inputs(model: &ModelSpec, theta: &[f64], truth: &Truth, gamma: f64, w: f64) -> Result<()> {
    model.validate(theta)?;
    truth.validate()?;
    if !(gamma.is_finite() && gamma != 0.0 && gamma != 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must be finite and differ from 0 and 1, got {gamma}")));
    }
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {w}")));
    }
    Ok(())
}

impl<'a> IfSetup<'a> {
    fn new(model: &'a ModelSpec, theta: &'a [f64], truth: &'a Truth, gamma: f64, w: f64, quad: &QuadratureConfig) -> Result<Self> {
        check_if_inputs(model, theta, truth, gamma, w)?;
        let d = model.dim();
        let center = model_center(model, theta);
        let scale = model.typical_scale(theta).max(w);
        let mut breaks = model_breaks(model, theta);
        breaks.extend(truth.centers());
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let f = |x: f64| -> f64 {
                    let Ok((lp, g, h)) = model.ln_pdf_derivatives(theta, x) else { return f64::NAN };
                    if !lp.is_finite() {
                        return 0.0;
                    }
                    let Ok(lkp) = truth.ln_smoothed(w, x, quad) else { return f64::NAN };
                    let lpt = truth.ln_pdf(x);
                    let weight = (gamma / (gamma - 1.0) - (lpt - lkp).exp()) * (gamma * lp + (1.0 - gamma) * lkp).exp();
                    if weight == 0.0 {
                        return 0.0;
                    }
                    weight * (gamma * g[i] * g[j] + h[(i, j)])
                };
                let v = integrate_on(model.support(), f, center, scale, &breaks, quad)?;
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        Ok(IfSetup { model, theta, truth, gamma, w, quad: *quad, a })
    }

    fn condition_number(&self) -> f64 {
        let sv = self.a.clone().svd(false, false).singular_values;
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    fn inverse(&self) -> Result<DMatrix<f64>> {
        let det = self.a.determinant();
        if !(det.abs() >= 1e-10) {
            return Err(Error::Singular(det));
        }
        self.a.clone().try_inverse().ok_or(Error::Singular(det))
    }

    /// Bracketed term: integral against K_w(· - x0) plus the point term.
    fn rhs(&self, x0: f64) -> Result<DVector<f64>> {
        let (model, theta, truth, gamma, w, quad) = (self.model, self.theta, self.truth, self.gamma, self.w, &self.quad);
        let d = model.dim();
        let mut out = DVector::zeros(d);
        let mut lo = x0 - 12.0 * w;
        if model.support() == Support::HalfLine {
            lo = lo.max(0.0);
        }
        let hi = (x0 + 12.0 * w).max(lo);
        if hi > lo {
            for i in 0..d {
                let f = |x: f64| -> f64 {
                    let Ok((lp, g, _)) = model.ln_pdf_derivatives(theta, x) else { return f64::NAN };
                    if !lp.is_finite() {
                        return 0.0;
                    }
                    let Ok(lkp) = truth.ln_smoothed(w, x, quad) else { return f64::NAN };
                    let lpt = truth.ln_pdf(x);
                    let lk = ln_norm_pdf((x - x0) / w) - w.ln();
                    gamma * (gamma * (lp - lkp) + lk).exp() * g[i] * (1.0 - (lpt - lkp).exp())
                };
                let mut br = vec![lo];
                if x0 > lo && x0 < hi {
                    br.push(x0);
                }
                br.push(hi);
                out[i] = integrate_breaks(f, &br, quad)?.value;
            }
        }
        let (lp, g, _) = model.ln_pdf_derivatives(theta, x0)?;
        if lp.is_finite() {
            let lkp = truth.ln_smoothed(w, x0, quad)?;
            out += g * (gamma * (lp - lkp)).exp();
        }
        Ok(out)
    }
}

/// IF(P_T, x0) of the kernel dual estimator with Cressie-Read power γ and
/// Gaussian window w, at the functional's value θ_T = T(P_T):
/// A⁻¹ [γ∫(p/KP)^γ ∇ℓ K_w(x - x0)(1 - p_T/KP) dx + (p/KP)^γ ∇ℓ (x0)] with
/// KP = K_w*P_T and A = ∫(γ/(γ-1) - p_T/KP) p^γ KP^{1-γ} [γ∇ℓ∇ℓᵀ + ∇²ℓ].
pub fn influence_function(
    model: &ModelSpec,
    theta_t: &[f64],
    truth: &Truth,
    gamma: f64,
    w: f64,
    x0: f64,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let s = IfSetup::new(model, theta_t, truth, gamma, w, quad)?;
    let inv = s.inverse()?;
    Ok((inv * s.rhs(x0)?).iter().copied().collect())
}

/// [`influence_function`] with the truth equal to the model at θ_T, which
/// makes θ_T the functional's value (Fisher consistency).
pub fn influence_kernel_mdphide(
    model: &ModelSpec,
    theta_t: &[f64],
    gamma: f64,
    w: f64,
    x0: f64,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let truth = Truth::Model { model: model.clone(), theta: theta_t.to_vec() };
    influence_function(model, theta_t, &truth, gamma, w, x0, quad)
}

/// Default contamination grid: 201 points over [-50, 50] on the real line
/// or [0, 100] on the half line.
pub fn default_if_grid(support: Support) -> Vec<f64> {
    let (a, b) = match support {
        Support::RealLine => (-50.0, 50.0),
        Support::HalfLine => (0.0, 100.0),
    };
    (0..201).map(|i| a + (b - a) * i as f64 / 200.0).collect()
}

/// IF over a grid with A factored once.
pub fn if_scan(
    model: &ModelSpec,
    theta_t: &[f64],
    truth: &Truth,
    gamma: f64,
    w: f64,
    grid: &[f64],
    quad: &QuadratureConfig,
) -> Result<IfReport> {
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("IF grid must be non-empty and finite".into()));
    }
    let s = IfSetup::new(model, theta_t, truth, gamma, w, quad)?;
    let cond = s.condition_number();
    let inv = match s.inverse() {
        Ok(m) => m,
        Err(Error::Singular(_)) => {
            return Ok(IfReport {
                grid: grid.to_vec(),
                values: Vec::new(),
                sup_norm: f64::INFINITY,
                condition_number: cond,
                invertible: false,
            })
        }
        Err(e) => return Err(e),
    };
    let mut values = Vec::with_capacity(grid.len());
    let mut sup = 0.0f64;
    for &x0 in grid {
        let v = &inv * s.rhs(x0)?;
        sup = sup.max(v.norm());
        values.push(v.iter().copied().collect());
    }
    Ok(IfReport { grid: grid.to_vec(), values, sup_norm: sup, condition_number: cond, invertible: true })
}

/// Escort position condition for a two-component Gaussian mixture, both in
/// canonical order: for γ > 0 the escort means sit strictly inside the true
/// ones (μ1 > μ1ᵀ, μ2 < μ2ᵀ), for γ < 0 strictly outside.
pub fn escort_condition_gaussmix(escort: &[f64], truth: &[f64], gamma: f64) -> bool {
    if escort.len() != 3 || truth.len() != 3 {
        return false;
    }
    let (m1, m2, t1, t2) = (escort[1], escort[2], truth[1], truth[2]);
    if gamma > 0.0 {
        m1 > t1 && m2 < t2
    } else if gamma < 0.0 {
        m1 < t1 && m2 > t2
    } else {
        false
    }
}

/// One point of a dual-gap curve.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub phi: ParamVector,
    /// sup over α of the classical dual objective.
    pub classical_dual_sup: f64,
    pub kernel_dual: f64,
    /// D_φ(p_φ, P_T).
    pub true_divergence: f64,
}

/// ∫ f(x, ln p_T(x)) dx where f already carries the p_T weight; f is not
/// called outside the truth's support.
fn expect_truth(truth: &Truth, f: impl Fn(f64, f64) -> f64, quad: &QuadratureConfig) -> Result<f64> {
    let c = truth.centers();
    let center = if c.is_empty() { 0.0 } else { c[0] };
    integrate_on(
        truth.support(),
        |x| {
            let lt = truth.ln_pdf(x);
            if lt == f64::NEG_INFINITY {
                0.0
            } else {
                f(x, lt)
            }
        },
        center,
        truth.scale(),
        &c,
        quad,
    )
}

/// φ#(e^r)·e^{lt} without forming e^r.
fn sharp_weighted(spec: &DivergenceSpec, r: f64, lt: f64) -> f64 {
    match spec.gamma() {
        Some(g) => ((g * r + lt).exp() - lt.exp()) / g,
        None => r * lt.exp(),
    }
}

fn joint_breaks(model: &ModelSpec, phi: &[f64], truth: &Truth) -> Vec<f64> {
    let mut b = model_breaks(model, phi);
    b.extend(truth.centers());
    b.sort_by(|a, b| a.total_cmp(b));
    b
}

/// D_φ(p_φ, P_T) = ∫ φ(p_φ/p_T) dP_T.
pub fn true_divergence(model: &ModelSpec, phi: &[f64], truth: &Truth, spec: &DivergenceSpec, quad: &QuadratureConfig) -> Result<f64> {
    let pp = model.prepare(phi)?;
    let scale = model.typical_scale(phi).max(truth.scale());
    integrate_on(
        model.support(),
        |x| spec.divergence_integrand(pp.ln_pdf(x), truth.ln_pdf(x)),
        model_center(model, phi),
        scale,
        &joint_breaks(model, phi, truth),
        quad,
    )
}

/// ∫ φ'(p_φ/q) p_φ over the model support.
fn population_dual_integral(
    model: &ModelSpec,
    phi: &[f64],
    ln_q: impl Fn(f64) -> f64,
    spec: &DivergenceSpec,
    breaks: &[f64],
    scale: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let pp = model.prepare(phi)?;
    integrate_on(model.support(), |x| spec.dual_integrand(pp.ln_pdf(x), ln_q(x)), model_center(model, phi), scale, breaks, quad)
}

/// Classical dual objective with the empirical mean replaced by the
/// expectation under the truth.
pub fn population_dual_objective(
    model: &ModelSpec,
    phi: &[f64],
    alpha: &[f64],
    truth: &Truth,
    spec: &DivergenceSpec,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let pp = model.prepare(phi)?;
    let pa = model.prepare(alpha)?;
    let integral = match spec.gamma() {
        Some(g) => match model.ln_cross_power_integral(phi, alpha, g) {
            Some(lc) => lc.exp_m1() / (g - 1.0),
            None => {
                let mut br = joint_breaks(model, phi, truth);
                br.extend(model_breaks(model, alpha));
                let scale = model.typical_scale(phi).max(model.typical_scale(alpha));
                population_dual_integral(model, phi, |x| pa.ln_pdf(x), spec, &br, scale, quad)?
            }
        },
        None => 0.0,
    };
    let s = expect_truth(truth, |x, lt| sharp_weighted(spec, pp.ln_pdf(x) - pa.ln_pdf(x), lt), quad)?;
    Ok(integral - s)
}

/// Kernel dual objective with K replaced by K_w*P_T and the empirical mean
/// by the expectation under the truth.
pub fn population_kernel_objective(
    model: &ModelSpec,
    phi: &[f64],
    truth: &Truth,
    w: f64,
    spec: &DivergenceSpec,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let pp = model.prepare(phi)?;
    let ln_kp = |x: f64| truth.ln_smoothed(w, x, quad).unwrap_or(f64::NAN);
    let br = joint_breaks(model, phi, truth);
    let scale = model.typical_scale(phi).max(truth.scale()).max(w);
    let integral = population_dual_integral(model, phi, ln_kp, spec, &br, scale, quad)?;
    let s = expect_truth(truth, |x, lt| sharp_weighted(spec, pp.ln_pdf(x) - ln_kp(x), lt), quad)?;
    Ok(integral - s)
}

/// Classical dual supremum, kernel dual and true divergence along a grid of
/// model parameters.
///
/// With a sample the dual quantities use the empirical measure and a kernel
/// estimate built from `kde_spec`; without one they are population versions
/// under `truth`, and `kde_spec` must be a Gaussian kernel with a fixed
/// window.
pub fn dual_gap_curve(
    model: &ModelSpec,
    truth: &Truth,
    sample: Option<&[f64]>,
    spec: &DivergenceSpec,
    grid: &[ParamVector],
    kde_spec: KdeSpec,
    opts: &FitOptions,
) -> Result<Vec<GapRow>> {
    truth.validate()?;
    spec.validate()?;
    let quad = &opts.quad;
    let kde = match sample {
        Some(y) => Some(DensityEstimate::with_config(kde_spec, y, quad)?),
        None => None,
    };
    let pop_w = match (sample, kde_spec.kernel, kde_spec.rule) {
        (Some(_), _, _) => None,
        (None, KernelKind::Gaussian, BandwidthRule::Fixed(w)) => Some(w),
        (None, _, _) => {
            return Err(Error::InvalidInput("population curves need a Gaussian kernel with a fixed window".into()))
        }
    };
    let mut rows = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for phi in grid {
        model.validate(phi)?;
        let start = model.bounds.clamp_inside(warm.as_deref().unwrap_or(phi), 1e-6);
        let inner = |alpha: &[f64]| -> f64 {
            let v = match sample {
                Some(y) => dual_inner_objective(model, phi, alpha, y, spec, quad),
                None => population_dual_objective(model, phi, alpha, truth, spec, quad),
            };
            v.unwrap_or(f64::NAN)
        };
        let sup = nelder_mead_max(inner, &start, &model.bounds, &opts.inner_optim)?;
        // α = φ always scores 0, so the supremum is at least that
        let classical = sup.f.max(0.0);
        warm = Some(sup.x);
        let kernel = match (&kde, pop_w) {
            (Some(k), _) => kernel_dual_objective(model, phi, k, spec, quad)?,
            (None, Some(w)) => population_kernel_objective(model, phi, truth, w, spec, quad)?,
            _ => unreachable!(),
        };
        rows.push(GapRow {
            phi: phi.clone(),
            classical_dual_sup: classical,
            kernel_dual: kernel,
            true_divergence: true_divergence(model, phi, truth, spec, quad)?,
        });
    }
    Ok(rows)
}

/// (∫ p_μ^γ KP^{1-γ}, ∫ p_μ^γ KP^{-γ} p_T) for p_μ = N(μ, 1), P_T = N(0, 1)
/// and KP = N(0, 1 + w²).
pub fn smoothed_affinity_integrals(gamma: f64, w: f64, mu: f64) -> Result<(f64, f64)> {
    check_smoothed(gamma, w)?;
    let w2 = w * w;
    let i1 = (1.0 + w2).powf(gamma / 2.0) / (1.0 + gamma * w2).sqrt()
        * (-gamma * (1.0 - gamma) * mu * mu / (2.0 * (1.0 + gamma * w2))).exp();
    let i2 = (1.0 + w2).powf((gamma + 1.0) / 2.0) / (1.0 + (gamma + 1.0) * w2).sqrt()
        * (-gamma * (w2 + 1.0 - gamma) * mu * mu / (2.0 * (1.0 + (gamma + 1.0) * w2))).exp();
    Ok((i1, i2))
}

fn check_smoothed(gamma: f64, w: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {w}")));
    }
    Ok(())
}

/// Population kernel objective in the Gaussian location model with a
/// N(0, 1) truth: I1/(γ-1) - I2/γ - 1/(γ(γ-1)).
pub fn smoothed_objective(gamma: f64, w: f64, mu: f64) -> Result<f64> {
    let (i1, i2) = smoothed_affinity_integrals(gamma, w, mu)?;
    Ok(i1 / (gamma - 1.0) - i2 / gamma - 1.0 / (gamma * (gamma - 1.0)))
}

/// (μ, objective) rows along `mus`.
pub fn smoothed_objective_curve(gamma: f64, w: f64, mus: &[f64]) -> Result<Vec<(f64, f64)>> {
    mus.iter().map(|&m| Ok((m, smoothed_objective(gamma, w, m)?))).collect()
}

/// Smallest window for which the smoothed objective's consistency
/// condition holds at power γ: w² ≥ (2γ - 1 + √(4γ² + 1))/2.
pub fn window_condition_min_bandwidth(gamma: f64) -> f64 {
    ((2.0 * gamma - 1.0 + (4.0 * gamma * gamma + 1.0).sqrt()) / 2.0).max(0.0).sqrt()
}

/// (∫ p_T^{(1-γ)/2} p_μ^γ, ∫ p_μ^γ p_T) for unit-variance Gaussians with
/// p_T = N(0, 1) and p_μ = N(μ, 1). Requires γ > -1.
pub fn gaussian_location_power_integrals(gamma: f64, mu: f64) -> Result<(f64, f64)> {
    if !(gamma > -1.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must exceed -1, got {gamma}")));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let c1 = two_pi.powf((1.0 - gamma) / 4.0) * (2.0 / (1.0 + gamma)).sqrt();
    let c2 = two_pi.powf(-gamma / 2.0) / (1.0 + gamma).sqrt();
    Ok((
        c1 * ((gamma * gamma - gamma) * mu * mu / (2.0 * (1.0 + gamma))).exp(),
        c2 * (-gamma * mu * mu / (2.0 * (1.0 + gamma))).exp(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyBounds {
    /// sup_φ ∫ (K^{(1-γ)/2} + p_T^{(1-γ)/2}) p_φ^γ.
    pub a_n: f64,
    /// sup_φ (1/n) Σ p_φ^γ(y_i).
    pub b_n: f64,
    pub warnings: Vec<String>,
}

/// Consistency-bound diagnostics for γ ∈ (-1, 0), suprema taken over the
/// model box by Nelder-Mead started at θ_T.
pub fn consistency_bounds(
    model: &ModelSpec,
    kde: &DensityEstimate,
    theta_t: &[f64],
    gamma: f64,
    opts: &FitOptions,
) -> Result<ConsistencyBounds> {
    if !(gamma > -1.0 && gamma < 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (-1, 0), got {gamma}")));
    }
    let pt = model.prepare(theta_t)?;
    let quad = &opts.quad;
    let half = (1.0 - gamma) / 2.0;
    let sample = kde.sample();
    let mut breaks = kde.breakpoints();
    breaks.extend(model_breaks(model, theta_t));
    breaks.sort_by(|a, b| a.total_cmp(b));
    let a_obj = |phi: &[f64]| -> f64 {
        let Ok(pp) = model.prepare(phi) else { return f64::NAN };
        let f = |x: f64| {
            let lp = pp.ln_pdf(x);
            if lp == f64::NEG_INFINITY {
                return 0.0;
            }
            let k = (half * kde.ln_eval(x) + gamma * lp).exp();
            let t = (half * pt.ln_pdf(x) + gamma * lp).exp();
            k + t
        };
        let scale = model.typical_scale(phi).max(kde.bandwidth());
        integrate_on(model.support(), f, model_center(model, phi), scale, &breaks, quad).unwrap_or(f64::NAN)
    };
    let b_obj = |phi: &[f64]| -> f64 {
        let Ok(pp) = model.prepare(phi) else { return f64::NAN };
        sample.iter().map(|&y| (gamma * pp.ln_pdf(y)).exp()).sum::<f64>() / sample.len() as f64
    };
    let start = model.bounds.clamp_inside(theta_t, 1e-6);
    let a = nelder_mead_max(a_obj, &start, &model.bounds, &opts.optim)?;
    let b = nelder_mead_max(b_obj, &start, &model.bounds, &opts.optim)?;
    let mut warnings = Vec::new();
    if a.nonfinite_evaluations > 0 || b.nonfinite_evaluations > 0 {
        warnings.push(format!(
            "{} non-finite evaluations while bounding; the suprema may be infinite",
            a.nonfinite_evaluations + b.nonfinite_evaluations
        ));
    }
    Ok(ConsistencyBounds { a_n: a.f, b_n: b.f, warnings })
}
