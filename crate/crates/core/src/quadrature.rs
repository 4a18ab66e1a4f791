//! Adaptive Gauss-Kronrod integration with a Gauss-Legendre cross-check.
//!
//! The adaptive driver starts from the supplied breakpoints, applies the
//! 21-point Kronrod rule on every segment and keeps bisecting the segment with
//! the largest error estimate. When the subdivision budget runs out, the
//! integral is recomputed with a fixed composite Gauss-Legendre rule; if the
//! two disagree by more than 100 times the tolerance the call fails.
//!
//! Any non-finite integrand value aborts with the offending abscissa.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::models::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of bisections beyond the initial segments.
    pub max_subdivisions: usize,
    /// Nodes of the Gauss-Legendre fallback rule, per initial segment.
    pub fallback_points: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { abs_tol: 1e-8, rel_tol: 1e-6, max_subdivisions: 200, fallback_points: 100 }
    }
}

impl QuadratureConfig {
    /// Same config with the absolute tolerance replaced.
    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0) || (self.abs_tol == 0.0 && self.rel_tol == 0.0) {
            return Err(Error::InvalidParameter("quadrature tolerances must be >= 0 and not both zero".into()));
        }
        if self.fallback_points < 2 {
            return Err(Error::InvalidParameter("fallback rule needs at least 2 nodes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureMethod {
    Adaptive,
    GaussLegendreFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error: f64,
    pub method: QuadratureMethod,
    pub evaluations: usize,
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn eval<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteIntegrand { x })
    }
}

/// 21-point Kronrod rule with the QUADPACK error estimate.
fn qk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = eval(f, center)?;
    let mut resk = fc * WGK[10];
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(f, center - dx)?;
        let f2 = eval(f, center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let value = resk * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok(Segment { a, b, value, err })
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn gl_rule(n: usize) -> std::borrow::Cow<'static, (Vec<f64>, Vec<f64>)> {
    static GL100: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    if n == 100 {
        std::borrow::Cow::Borrowed(GL100.get_or_init(|| gauss_legendre(100)))
    } else {
        std::borrow::Cow::Owned(gauss_legendre(n))
    }
}

fn gl_segment<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> Result<f64> {
    let rule = gl_rule(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (x, w) in rule.0.iter().zip(&rule.1) {
        s += w * eval(f, c + h * x)?;
    }
    Ok(s * h)
}

/// Integrates over `[breaks[0], breaks[last]]`, using every interior
/// breakpoint as an initial segment boundary. Breakpoints must be finite and
/// nondecreasing; zero-length segments are dropped.
pub fn integrate_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    cfg.validate()?;
    if breaks.len() < 2 {
        return Err(Error::InvalidInput("need at least two breakpoints".into()));
    }
    if breaks.iter().any(|b| !b.is_finite()) || breaks.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("breakpoints must be finite and sorted".into()));
    }
    let mut segs = Vec::with_capacity(breaks.len() + cfg.max_subdivisions);
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            segs.push(qk21(&f, w[0], w[1])?);
        }
    }
    let initial: Vec<(f64, f64)> = segs.iter().map(|s| (s.a, s.b)).collect();
    let mut evaluations = 21 * segs.len();
    if segs.is_empty() {
        return Ok(QuadratureResult { value: 0.0, abs_error: 0.0, method: QuadratureMethod::Adaptive, evaluations });
    }
    let mut subdivisions = 0;
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.err).sum();
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if err <= tol {
            return Ok(QuadratureResult { value: total, abs_error: err, method: QuadratureMethod::Adaptive, evaluations });
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s.err > acc.1 { (i, s.err) } else { acc });
        let s = segs[worst];
        let mid = 0.5 * (s.a + s.b);
        let resolvable = mid > s.a && mid < s.b;
        if subdivisions >= cfg.max_subdivisions || !resolvable {
            let mut fallback = 0.0;
            for &(a, b) in &initial {
                fallback += gl_segment(&f, a, b, cfg.fallback_points)?;
            }
            evaluations += cfg.fallback_points * initial.len();
            if (fallback - total).abs() > 100.0 * tol {
                return Err(Error::QuadratureDisagreement { adaptive: total, fallback });
            }
            return Ok(QuadratureResult {
                value: fallback,
                abs_error: (fallback - total).abs().max(err),
                method: QuadratureMethod::GaussLegendreFallback,
                evaluations,
            });
        }
        let left = qk21(&f, s.a, mid)?;
        let right = qk21(&f, mid, s.b)?;
        evaluations += 42;
        segs[worst] = left;
        segs.push(right);
        subdivisions += 1;
    }
}

/// ∫_a^b f(x) dx over a finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput(format!("finite limits required, got [{a}, {b}]")));
    }
    if b < a {
        let r = integrate_breaks(f, &[b, a], cfg)?;
        return Ok(QuadratureResult { value: -r.value, ..r });
    }
    integrate_breaks(f, &[a, b], cfg)
}

/// ∫_lower^∞ f(x) dx through x = lower + scale·t/(1-t). Interior breakpoints
/// (in x) become initial segment boundaries in t.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    scale: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    if !(lower.is_finite() && scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidInput("semi-infinite integration needs finite lower limit and positive scale".into()));
    }
    let mut ts = vec![0.0];
    let mut inner: Vec<f64> = breaks
        .iter()
        .filter(|&&b| b > lower && b.is_finite())
        .map(|&b| {
            let d = b - lower;
            d / (scale + d)
        })
        .filter(|&t| t < 1.0)
        .collect();
    inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
    inner.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    ts.extend(inner);
    ts.push(1.0);
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let om = 1.0 - t;
        let x = lower + scale * t / om;
        if !x.is_finite() {
            return 0.0;
        }
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v * scale / (om * om)
        }
    };
    integrate_breaks(g, &ts, cfg).map_err(|e| match e {
        Error::NonFiniteIntegrand { x: t } => Error::NonFiniteIntegrand { x: lower + scale * t / (1.0 - t) },
        other => other,
    })
}

/// ∫_ℝ f(x) dx as two semi-infinite pieces meeting at `center`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(
    f: F,
    center: f64,
    scale: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    let right = integrate_semi_infinite(&f, center, scale, breaks, cfg)?;
    let mirrored: Vec<f64> = breaks.iter().map(|b| 2.0 * center - b).collect();
    let left = integrate_semi_infinite(|x| f(2.0 * center - x), center, scale, &mirrored, cfg)?;
    let method = if right.method == QuadratureMethod::Adaptive && left.method == QuadratureMethod::Adaptive {
        QuadratureMethod::Adaptive
    } else {
        QuadratureMethod::GaussLegendreFallback
    };
    Ok(QuadratureResult {
        value: right.value + left.value,
        abs_error: right.abs_error + left.abs_error,
        method,
        evaluations: right.evaluations + left.evaluations,
    })
}

/// ∫_0^∞ f(x) dx.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    integrate_semi_infinite(f, 0.0, 1.0, &[], cfg)
}

/// ∫ g(x) p_θ(x) dx computed as ∫_0^1 g(F⁻¹(u)) du. Requires an analytic
/// quantile. Breakpoints in x are mapped through the cdf.
pub fn integrate_via_quantile<G: Fn(f64) -> f64>(
    g: G,
    model: &ModelSpec,
    theta: &[f64],
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    if !model.has_analytic_quantile() {
        return Err(Error::Unsupported(format!("{:?} has no analytic quantile", model.family)));
    }
    model.validate(theta)?;
    let mut us = vec![0.0];
    let mut inner: Vec<f64> = breaks
        .iter()
        .map(|&b| model.cdf_unchecked(theta, b))
        .filter(|&u| u > 0.0 && u < 1.0)
        .collect();
    inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
    inner.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    us.extend(inner);
    us.push(1.0);
    let h = |u: f64| {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        let x = model.quantile_unchecked(theta, u);
        if !x.is_finite() {
            return 0.0;
        }
        g(x)
    };
    integrate_breaks(h, &us, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        let (_, w) = gauss_legendre(100);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn standard_normal_mass() {
        let r = integrate(|x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(), -12.0, 12.0, &cfg()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        assert_eq!(r.method, QuadratureMethod::Adaptive);
    }

    #[test]
    fn half_line_exponential() {
        let r = integrate_half_line(|x| (-x).exp(), &cfg()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn real_line_cauchy_mass() {
        let r = integrate_real_line(|x| 1.0 / (std::f64::consts::PI * (1.0 + x * x)), 0.5, 1.0, &[-2.0, 3.0], &cfg()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-7);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(|x| x * x, 1.0, 0.0, &cfg()).unwrap();
        assert!((r.value + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nonfinite_integrand_reports_abscissa() {
        let e = integrate(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, &cfg()).unwrap_err();
        match e {
            Error::NonFiniteIntegrand { x } => assert!(x > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fallback_engages_when_budget_exhausted() {
        let tight = QuadratureConfig { max_subdivisions: 0, abs_tol: 1e-3, rel_tol: 0.0, ..cfg() };
        let r = integrate(|x| x.sqrt(), 0.0, 1.0, &tight).unwrap();
        assert_eq!(r.method, QuadratureMethod::GaussLegendreFallback);
        assert!((r.value - 2.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn fallback_disagreement_is_an_error() {
        let tight = QuadratureConfig { max_subdivisions: 0, abs_tol: 1e-14, rel_tol: 0.0, fallback_points: 4 };
        let r = integrate(|x| (40.0 * x).sin() * (-x).exp(), 0.0, 30.0, &tight);
        assert!(matches!(r, Err(Error::QuadratureDisagreement { .. })));
    }

    #[test]
    fn quantile_transform_recovers_mean() {
        let m = ModelSpec::new(Family::Gpd);
        // GPD(ν=0.3, σ=2) has mean σ/(1-ν)
        let r = integrate_via_quantile(|x| x, &m, &[0.3, 2.0], &[], &cfg()).unwrap();
        assert!((r.value - 2.0 / 0.7).abs() < 1e-5);
        let g = ModelSpec::new(Family::Gaussian);
        let r = integrate_via_quantile(|x| x * x, &g, &[1.0, 2.0], &[0.0, 3.0], &cfg()).unwrap();
        assert!((r.value - 5.0).abs() < 1e-6);
    }

    #[test]
    fn quantile_transform_rejects_mixtures() {
        let m = ModelSpec::new(Family::GaussMix2);
        assert!(integrate_via_quantile(|x| x, &m, &[0.3, -1.0, 1.0], &[], &cfg()).is_err());
    }
}
