//! Kernel density estimates, bandwidth selectors and model smoothing.
//!
//! Four kernels are available. The Gaussian kernel lives on ℝ; the gamma,
//! reciprocal inverse Gaussian (RIG) and varying (Mnatsakanov-Tsaturyan)
//! kernels live on [0, ∞). For the gamma and RIG kernels the kernel is a
//! density in the data argument, not in the evaluation point, so those
//! estimates are renormalized by their total mass once at construction.
//!
//! For the varying kernel the bandwidth slot holds the integer order α.
//!
//! Evaluation sums only the data points whose kernel term can exceed
//! e^-45 of the peak, located by binary search in the sorted sample. The
//! varying kernel has polynomial tails and is always summed in full.

use crate::error::{Error, Result};
use crate::models::{Family, ModelSpec, Support};
use crate::quadrature::{integrate_breaks, integrate_semi_infinite, QuadratureConfig};
use crate::special::{ln_add_exp, ln_gamma, ln_norm_pdf, quantile_sorted, sd, LN_SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    Gamma,
    Rig,
    Varying,
}

impl KernelKind {
    pub fn support(&self) -> Support {
        match self {
            KernelKind::Gaussian => Support::RealLine,
            _ => Support::HalfLine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    Fixed(f64),
    Silverman,
    SheatherJones,
    Lscv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeSpec {
    pub kernel: KernelKind,
    pub rule: BandwidthRule,
}

impl KdeSpec {
    pub fn new(kernel: KernelKind, rule: BandwidthRule) -> Self {
        KdeSpec { kernel, rule }
    }
}

/// A selected bandwidth and, when the selector degraded, why.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthChoice {
    pub value: f64,
    pub warning: Option<String>,
}

const WINDOW_LOG: f64 = 45.0;

/// Fitted kernel density estimate.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    kernel: KernelKind,
    bandwidth: f64,
    sample: Vec<f64>,
    sorted: Vec<f64>,
    ln_sorted: Vec<f64>,
    ln_n: f64,
    ln_mass: f64,
    ln_at_sample: Vec<f64>,
    warnings: Vec<String>,
    ln_gamma_order: f64,
}

fn check_sample(sample: &[f64], kernel: KernelKind) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::InvalidInput("density estimation needs at least two points".into()));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("sample contains non-finite values".into()));
    }
    match kernel {
        KernelKind::Gaussian => {}
        KernelKind::Gamma => {
            if sample.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidInput("gamma kernel needs nonnegative data".into()));
            }
        }
        KernelKind::Rig | KernelKind::Varying => {
            if sample.iter().any(|&v| v <= 0.0) {
                return Err(Error::InvalidInput(format!("{kernel:?} kernel needs positive data")));
            }
        }
    }
    Ok(())
}

fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

impl DensityEstimate {
    /// Builds the estimate, choosing the bandwidth with `spec.rule`.
    pub fn new(spec: KdeSpec, sample: &[f64]) -> Result<Self> {
        Self::with_config(spec, sample, &QuadratureConfig::default())
    }

    pub fn with_config(spec: KdeSpec, sample: &[f64], quad: &QuadratureConfig) -> Result<Self> {
        check_sample(sample, spec.kernel)?;
        let choice = select_bandwidth(spec, sample, quad)?;
        let mut est = Self::build(spec.kernel, choice.value, sample, quad)?;
        if let Some(w) = choice.warning {
            est.warnings.push(w);
        }
        Ok(est)
    }

    /// Builds the estimate with a given bandwidth (order for the varying
    /// kernel).
    pub fn with_bandwidth(kernel: KernelKind, bandwidth: f64, sample: &[f64]) -> Result<Self> {
        check_sample(sample, kernel)?;
        Self::build(kernel, bandwidth, sample, &QuadratureConfig::default())
    }

    fn build(kernel: KernelKind, bandwidth: f64, sample: &[f64], quad: &QuadratureConfig) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if kernel == KernelKind::Varying && (bandwidth.fract() != 0.0 || bandwidth < 1.0) {
            return Err(Error::InvalidParameter(format!("varying-kernel order must be an integer >= 1, got {bandwidth}")));
        }
        let sorted = sorted_copy(sample);
        let ln_sorted = sorted.iter().map(|v| v.ln()).collect();
        let mut est = DensityEstimate {
            kernel,
            bandwidth,
            sample: sample.to_vec(),
            sorted,
            ln_sorted,
            ln_n: (sample.len() as f64).ln(),
            ln_mass: 0.0,
            ln_at_sample: Vec::new(),
            warnings: Vec::new(),
            ln_gamma_order: if kernel == KernelKind::Varying { ln_gamma(bandwidth) } else { 0.0 },
        };
        if matches!(kernel, KernelKind::Gamma | KernelKind::Rig) {
            let mass = est.integrate(|x| est.ln_eval(x).exp(), quad)?;
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(Error::InvalidInput(format!("estimate has unusable mass {mass}")));
            }
            est.ln_mass = mass.ln();
        }
        est.ln_at_sample = est.sample.iter().map(|&y| est.ln_eval(y)).collect();
        Ok(est)
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    pub fn sorted_sample(&self) -> &[f64] {
        &self.sorted
    }

    /// ln f̂ at each sample point, in the original sample order.
    pub fn ln_at_sample(&self) -> &[f64] {
        &self.ln_at_sample
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Total mass before renormalization (1 for Gaussian and varying).
    pub fn raw_mass(&self) -> f64 {
        self.ln_mass.exp()
    }

    /// f̂(x). Half-line kernels reject x < 0.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("cannot evaluate estimate at {x}")));
        }
        if self.kernel.support() == Support::HalfLine && x < 0.0 {
            return Err(Error::Domain(format!("{:?} estimate is defined on [0, ∞), got {x}", self.kernel)));
        }
        Ok(self.ln_eval(x).exp())
    }

    /// ln f̂(x); -∞ outside the support.
    pub fn ln_eval(&self, x: f64) -> f64 {
        if self.kernel.support() == Support::HalfLine && x < 0.0 {
            return f64::NEG_INFINITY;
        }
        let w = self.bandwidth;
        let (lo, hi) = match self.window(x) {
            Some(r) => r,
            None => (0, self.sorted.len()),
        };
        let (lo, hi) = if lo < hi {
            (lo, hi)
        } else {
            (lo.saturating_sub(1), (lo + 1).min(self.sorted.len()))
        };
        let mut m = f64::NEG_INFINITY;
        let mut s = 0.0;
        let mut push = |t: f64| {
            if t > m {
                s = if m == f64::NEG_INFINITY { 1.0 } else { s * (m - t).exp() + 1.0 };
                m = t;
            } else if t > f64::NEG_INFINITY {
                s += (t - m).exp();
            }
        };
        match self.kernel {
            KernelKind::Gaussian => {
                let c = -w.ln() - LN_SQRT_2PI;
                for &y in &self.sorted[lo..hi] {
                    let z = (x - y) / w;
                    push(c - 0.5 * z * z);
                }
            }
            KernelKind::Gamma => {
                let a = x / w;
                let c = ln_gamma(1.0 + a) + (1.0 + a) * w.ln();
                for (&y, &ly) in self.sorted[lo..hi].iter().zip(&self.ln_sorted[lo..hi]) {
                    let t = if a == 0.0 { 0.0 } else { a * ly };
                    push(t - y / w - c);
                }
            }
            KernelKind::Rig => {
                let xi = (x - w).max(0.5 * w);
                let c = -0.5 * (2.0 * std::f64::consts::PI * w).ln();
                for (&t, &lt) in self.sorted[lo..hi].iter().zip(&self.ln_sorted[lo..hi]) {
                    let d = t - xi;
                    push(c - 0.5 * lt - d * d / (2.0 * w * t));
                }
            }
            KernelKind::Varying => {
                if x == 0.0 {
                    return f64::NEG_INFINITY;
                }
                let a = w;
                let c = a * (a * x).ln() - self.ln_gamma_order;
                for (&y, &ly) in self.sorted[lo..hi].iter().zip(&self.ln_sorted[lo..hi]) {
                    push(c - (a + 1.0) * ly - a * x / y);
                }
            }
        }
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + s.ln() - self.ln_n - self.ln_mass
    }

    /// Index range of sorted data whose kernel term at x is not negligible.
    fn window(&self, x: f64) -> Option<(usize, usize)> {
        let w = self.bandwidth;
        let (a, b) = match self.kernel {
            KernelKind::Gaussian => {
                let r = (2.0 * WINDOW_LOG).sqrt() * w;
                (x - r, x + r)
            }
            KernelKind::Gamma => {
                let m = x + w;
                let s = (w * m).sqrt();
                (m - 12.0 * s, m + 12.0 * s + WINDOW_LOG * w)
            }
            KernelKind::Rig => {
                let xi = (x - w).max(0.5 * w);
                let c = xi + WINDOW_LOG * w;
                let r = (c * c - xi * xi).sqrt();
                (c - r, c + r)
            }
            KernelKind::Varying => return None,
        };
        let lo = self.sorted.partition_point(|&v| v < a);
        let hi = self.sorted.partition_point(|&v| v <= b);
        Some((lo, hi))
    }

    /// Local kernel width at data point y, used to thin breakpoints.
    fn local_width(&self, y: f64) -> f64 {
        let w = self.bandwidth;
        match self.kernel {
            KernelKind::Gaussian => w,
            KernelKind::Gamma | KernelKind::Rig => (w * y.max(w)).sqrt(),
            KernelKind::Varying => y / w.sqrt(),
        }
    }

    /// Sorted data thinned so that consecutive points are at least one local
    /// kernel width apart. Extremes are always kept.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        let n = self.sorted.len();
        for (i, &y) in self.sorted.iter().enumerate() {
            match out.last() {
                None => out.push(y),
                Some(&last) => {
                    if y - last >= self.local_width(last) || (i == n - 1 && y > last) {
                        out.push(y);
                    }
                }
            }
        }
        out
    }

    /// ∫ f over the estimate's natural domain with data breakpoints.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, quad: &QuadratureConfig) -> Result<f64> {
        let bps = self.breakpoints();
        match self.kernel.support() {
            Support::RealLine => {
                let pad = 12.0 * self.bandwidth;
                let mut br = vec![self.sorted[0] - pad];
                br.extend(bps.iter().copied());
                br.push(self.sorted[self.sorted.len() - 1] + pad);
                br.dedup();
                Ok(integrate_breaks(f, &br, quad)?.value)
            }
            Support::HalfLine => {
                let scale = quantile_sorted(&self.sorted, 0.5).max(1e-3);
                Ok(integrate_semi_infinite(f, 0.0, scale, &bps, quad)?.value)
            }
        }
    }
}

/// Applies a bandwidth rule.
pub fn select_bandwidth(spec: KdeSpec, sample: &[f64], quad: &QuadratureConfig) -> Result<BandwidthChoice> {
    check_sample(sample, spec.kernel)?;
    match spec.rule {
        BandwidthRule::Fixed(w) => Ok(BandwidthChoice { value: w, warning: None }),
        BandwidthRule::Silverman => {
            if spec.kernel == KernelKind::Varying {
                return Err(Error::Unsupported("Silverman's rule does not give a varying-kernel order".into()));
            }
            Ok(BandwidthChoice { value: bandwidth_silverman(sample)?, warning: None })
        }
        BandwidthRule::SheatherJones => {
            if spec.kernel == KernelKind::Varying {
                return Err(Error::Unsupported("Sheather-Jones does not give a varying-kernel order".into()));
            }
            bandwidth_sj(sample)
        }
        BandwidthRule::Lscv => bandwidth_lscv(sample, spec.kernel, quad),
    }
}

fn robust_scale(sample: &[f64], iqr_div: f64) -> Result<f64> {
    let s = sorted_copy(sample);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let sdv = sd(sample);
    let mut lo = sdv.min(iqr / iqr_div);
    if lo <= 0.0 {
        lo = sdv.max(iqr / iqr_div);
    }
    if !(lo > 0.0 && lo.is_finite()) {
        return Err(Error::InvalidInput("sample has zero spread".into()));
    }
    Ok(lo)
}

/// Silverman's rule of thumb: 0.9 min(sd, IQR/1.34) n^(-1/5).
pub fn bandwidth_silverman(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 || sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("Silverman's rule needs at least two finite points".into()));
    }
    Ok(0.9 * robust_scale(sample, 1.34)? * (sample.len() as f64).powf(-0.2))
}

/// Pairwise second- and third-order density-derivative functionals used by
/// the Sheather-Jones plug-in.
fn sj_sums(x: &[f64], h: f64, six: bool) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (x[i] - x[j]) / h;
            let d2 = d * d;
            if d2 > 2.0 * 745.0 {
                continue;
            }
            let e = (-0.5 * d2).exp();
            s += if six {
                (d2 * d2 * d2 - 15.0 * d2 * d2 + 45.0 * d2 - 15.0) * e
            } else {
                (d2 * d2 - 6.0 * d2 + 3.0) * e
            };
        }
    }
    let nf = n as f64;
    let root2pi = (2.0 * std::f64::consts::PI).sqrt();
    if six {
        (2.0 * s - 15.0 * nf) / (nf * (nf - 1.0) * h.powi(7) * root2pi)
    } else {
        (2.0 * s + 3.0 * nf) / (nf * (nf - 1.0) * h.powi(5) * root2pi)
    }
}

/// Sheather-Jones solve-the-equation bandwidth. Falls back to Silverman's
/// rule with a warning when the fixed-point equation has no bracketed root.
pub fn bandwidth_sj(sample: &[f64]) -> Result<BandwidthChoice> {
    let fallback = |why: &str| -> Result<BandwidthChoice> {
        Ok(BandwidthChoice {
            value: bandwidth_silverman(sample)?,
            warning: Some(format!("Sheather-Jones failed ({why}); used Silverman's rule")),
        })
    };
    if sample.len() < 3 {
        return fallback("fewer than three points");
    }
    let n = sample.len() as f64;
    let scale = match robust_scale(sample, 1.349) {
        Ok(s) => s,
        Err(_) => return fallback("zero spread"),
    };
    let a = 1.24 * scale * n.powf(-1.0 / 7.0);
    let b = 1.23 * scale * n.powf(-1.0 / 9.0);
    let c1 = 1.0 / (2.0 * std::f64::consts::PI.sqrt() * n);
    let td = -sj_sums(sample, b, true);
    if !(td.is_finite() && td > 0.0) {
        return fallback("sample too sparse for the sixth-derivative functional");
    }
    let alph2 = 1.357 * (sj_sums(sample, a, false) / td).powf(1.0 / 7.0);
    if !alph2.is_finite() {
        return fallback("non-finite pilot ratio");
    }
    let f = |h: f64| (c1 / sj_sums(sample, alph2 * h.powf(5.0 / 7.0), false)).powf(0.2) - h;
    let hmax = 1.144 * scale * n.powf(-0.2);
    let (mut lo, mut hi) = (0.1 * hmax, hmax);
    let mut flo = f(lo);
    let mut fhi = f(hi);
    let mut tries = 0;
    while !(flo * fhi <= 0.0) {
        if tries > 99 || !(flo.is_finite() || fhi.is_finite()) {
            return fallback("no sign change in the bandwidth bracket");
        }
        if tries % 2 == 0 {
            hi *= 1.2;
            fhi = f(hi);
        } else {
            lo /= 1.2;
            flo = f(lo);
        }
        tries += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * mid {
            break;
        }
        let fm = f(mid);
        if (fm <= 0.0) == (flo <= 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(BandwidthChoice { value: 0.5 * (lo + hi), warning: None })
}

/// Least-squares cross-validation score for the Gaussian kernel, in closed
/// form.
pub fn lscv_score_gaussian(sample: &[f64], h: f64) -> f64 {
    let n = sample.len() as f64;
    let mut s_sq = 0.0;
    let mut s_loo = 0.0;
    for i in 0..sample.len() {
        for j in (i + 1)..sample.len() {
            let d = (sample[i] - sample[j]) / h;
            s_sq += ln_norm_pdf(d / std::f64::consts::SQRT_2).exp();
            s_loo += ln_norm_pdf(d).exp();
        }
    }
    let phi0 = ln_norm_pdf(0.0).exp();
    let int_sq = (n * phi0 + 2.0 * s_sq) / (n * n * h * std::f64::consts::SQRT_2);
    let loo_mean = 2.0 * s_loo / (n * (n - 1.0) * h);
    int_sq - 2.0 * loo_mean
}

/// LSCV score ∫f̂² - (2/n) Σ f̂₋ᵢ(yᵢ) for any kernel, by quadrature.
pub fn lscv_score(sample: &[f64], kernel: KernelKind, w: f64, quad: &QuadratureConfig) -> Result<f64> {
    if kernel == KernelKind::Gaussian {
        return Ok(lscv_score_gaussian(sample, w));
    }
    let est = DensityEstimate::build(kernel, w, sample, quad)?;
    let int_sq = est.integrate(|x| (2.0 * est.ln_eval(x)).exp(), quad)?;
    let n = sample.len();
    // leave-one-out value: full normalized sum minus the self term
    let mut loo = 0.0;
    for &y in sample {
        let full = est.ln_eval(y).exp() * n as f64;
        let own = est.ln_kernel_normalized(y, y);
        loo += ((full - own) / (n as f64 - 1.0)).max(0.0);
    }
    Ok(int_sq - 2.0 * loo / n as f64)
}

impl DensityEstimate {
    /// Single kernel term K_x(y) divided by the renormalizing mass.
    fn ln_kernel_raw(&self, x: f64, y: f64) -> f64 {
        let w = self.bandwidth;
        match self.kernel {
            KernelKind::Gaussian => -w.ln() + ln_norm_pdf((x - y) / w),
            KernelKind::Gamma => {
                let a = x / w;
                let t = if a == 0.0 { 0.0 } else { a * y.ln() };
                t - y / w - ln_gamma(1.0 + a) - (1.0 + a) * w.ln()
            }
            KernelKind::Rig => {
                let xi = (x - w).max(0.5 * w);
                let d = y - xi;
                -0.5 * (2.0 * std::f64::consts::PI * w * y).ln() - d * d / (2.0 * w * y)
            }
            KernelKind::Varying => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                w * (w * x).ln() - self.ln_gamma_order - (w + 1.0) * y.ln() - w * x / y
            }
        }
    }

    fn ln_kernel_normalized(&self, x: f64, y: f64) -> f64 {
        (self.ln_kernel_raw(x, y) - self.ln_mass).exp()
    }
}

/// Bandwidth minimizing the LSCV score on a grid (integer orders for the
/// varying kernel). A flat score returns the grid midpoint with a warning; a
/// minimum on the grid edge is also flagged.
pub fn bandwidth_lscv(sample: &[f64], kernel: KernelKind, quad: &QuadratureConfig) -> Result<BandwidthChoice> {
    check_sample(sample, kernel)?;
    let grid: Vec<f64> = match kernel {
        KernelKind::Varying => (1..=80).map(|k| k as f64).collect(),
        KernelKind::Gaussian => {
            let h0 = bandwidth_silverman(sample)?;
            log_grid(0.02 * h0, 4.0 * h0, 80)
        }
        KernelKind::Gamma | KernelKind::Rig => {
            let s = robust_scale(sample, 1.34)?;
            log_grid(1e-4 * s, s, 60)
        }
    };
    let scores: Vec<f64> = grid
        .iter()
        .map(|&w| lscv_score(sample, kernel, w, quad).unwrap_or(f64::INFINITY))
        .collect();
    let finite: Vec<f64> = scores.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::InvalidInput("LSCV score is not finite anywhere on the grid".into()));
    }
    let (mn, mx) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if mx - mn <= 1e-12 * mn.abs().max(1e-300) {
        return Ok(BandwidthChoice {
            value: grid[grid.len() / 2],
            warning: Some("flat LSCV score; returned grid midpoint".into()),
        });
    }
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty");
    let warning = if best == 0 || best == grid.len() - 1 {
        Some("LSCV minimum on the edge of the search grid".into())
    } else {
        None
    };
    Ok(BandwidthChoice { value: grid[best], warning })
}

fn log_grid(a: f64, b: f64, k: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..k).map(|i| (la + (lb - la) * i as f64 / (k - 1) as f64).exp()).collect()
}

/// ln of the kernel-smoothed model density ∫ K_w(x - y) p_θ(y) dy.
///
/// Gaussian kernels on the Gaussian families are closed form; other
/// half-line families are smoothed by quadrature. The varying kernel smooths
/// half-line families through x ↦ E[p_θ(αx/V)] with V ~ Gamma(α, 1). Gamma and
/// RIG smoothing are not supported.
pub fn ln_smooth_model(
    kernel: KernelKind,
    w: f64,
    model: &ModelSpec,
    theta: &[f64],
    x: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {w}")));
    }
    let prep = model.prepare(theta)?;
    match kernel {
        KernelKind::Gaussian => match model.family {
            Family::Gaussian | Family::GaussianLocation { .. } => {
                let (mu, s) = match model.family {
                    Family::Gaussian => (theta[0], theta[1]),
                    Family::GaussianLocation { sigma } => (theta[0], sigma),
                    _ => unreachable!(),
                };
                let t = (s * s + w * w).sqrt();
                Ok(-t.ln() + ln_norm_pdf((x - mu) / t))
            }
            Family::GaussMix2 => {
                let t = (1.0 + w * w).sqrt();
                let l = theta[0];
                Ok(ln_add_exp(
                    l.ln() - t.ln() + ln_norm_pdf((x - theta[1]) / t),
                    (-l).ln_1p() - t.ln() + ln_norm_pdf((x - theta[2]) / t),
                ))
            }
            Family::Gpd | Family::WeibullMix2 { .. } => {
                let lo = (x - 10.0 * w).max(0.0);
                let hi = x + 10.0 * w;
                if hi <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                let r = integrate_breaks(
                    |y| (prep.ln_pdf(y) + ln_norm_pdf((x - y) / w)).exp() / w,
                    &[lo, hi],
                    quad,
                )?;
                Ok(r.value.max(0.0).ln())
            }
        },
        KernelKind::Varying => {
            if model.support() != Support::HalfLine {
                return Err(Error::Unsupported("varying kernel smooths half-line models only".into()));
            }
            if w.fract() != 0.0 || w < 1.0 {
                return Err(Error::InvalidParameter(format!("varying-kernel order must be an integer >= 1, got {w}")));
            }
            if x < 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let a = w;
            let lg = ln_gamma(a);
            let r = integrate_semi_infinite(
                |v| {
                    if v <= 0.0 {
                        return 0.0;
                    }
                    ((a - 1.0) * v.ln() - v - lg + prep.ln_pdf(a * x / v)).exp()
                },
                0.0,
                a,
                &[a],
                quad,
            )?;
            Ok(r.value.max(0.0).ln())
        }
        KernelKind::Gamma | KernelKind::Rig => {
            Err(Error::Unsupported(format!("{kernel:?} kernels cannot smooth a model")))
        }
    }
}

/// Kernel-smoothed model density.
pub fn smooth_model(
    kernel: KernelKind,
    w: f64,
    model: &ModelSpec,
    theta: &[f64],
    x: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    Ok(ln_smooth_model(kernel, w, model, theta, x, quad)?.exp())
}
