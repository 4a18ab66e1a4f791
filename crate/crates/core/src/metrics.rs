//! Distances between a fitted and a true member of the same family.

use crate::error::{Error, Result};
use crate::models::{Family, ModelSpec, Prepared, Support};
use crate::quadrature::{integrate_breaks, integrate_real_line, integrate_semi_infinite, QuadratureConfig};

/// Whether ∫ p_θ̂² / p_θT is finite, decided from the tail and origin
/// behaviour of each family.
pub fn chi2_is_finite(model: &ModelSpec, theta_hat: &[f64], theta_true: &[f64]) -> Result<bool> {
    model.validate(theta_hat)?;
    model.validate(theta_true)?;
    Ok(match model.family {
        Family::Gaussian => 2.0 / theta_hat[1].powi(2) - 1.0 / theta_true[1].powi(2) > 0.0,
        Family::GaussianLocation { .. } | Family::GaussMix2 => true,
        // p ~ x^{-1-1/ν} at infinity
        Family::Gpd => 2.0 / theta_hat[0] - 1.0 / theta_true[0] > 0.0,
        Family::WeibullMix2 { scale1, scale2 } => {
            let m_hat = theta_hat[1].min(theta_hat[2]);
            let m_true = theta_true[1].min(theta_true[2]);
            let origin_ok = 2.0 * m_hat - m_true > 0.0;
            // slowest-decaying component: smallest shape, ties broken by the
            // larger scale; decay exp(-(x/s)^ν)
            let tail = |nu1: f64, nu2: f64| -> (f64, f64) {
                if nu1 < nu2 || (nu1 == nu2 && scale1 > scale2) {
                    (nu1, scale1)
                } else {
                    (nu2, scale2)
                }
            };
            let (nh, sh) = tail(theta_hat[1], theta_hat[2]);
            let (nt, st) = tail(theta_true[1], theta_true[2]);
            let tail_ok = nh > nt || (nh == nt && 2.0 / sh.powf(nh) - 1.0 / st.powf(nt) > 0.0);
            origin_ok && tail_ok
        }
    })
}

/// χ² distance sqrt(∫ (p_θ̂ - p_θT)² / p_θT); +∞ when the integral
/// diverges.
pub fn chi2_distance(model: &ModelSpec, theta_hat: &[f64], theta_true: &[f64], quad: &QuadratureConfig) -> Result<f64> {
    if !chi2_is_finite(model, theta_hat, theta_true)? {
        return Ok(f64::INFINITY);
    }
    let p = model.prepare(theta_hat)?;
    let q = model.prepare(theta_true)?;
    let f = |x: f64| {
        let (lp, lq) = (p.ln_pdf(x), q.ln_pdf(x));
        if lq == f64::NEG_INFINITY {
            return if lp == f64::NEG_INFINITY { 0.0 } else { f64::INFINITY };
        }
        let r = lp - lq;
        if r == 0.0 {
            return 0.0;
        }
        // ln |e^r - 1| without overflow
        let l = if r > 30.0 { r + (-(-r).exp()).ln_1p() } else { r.exp_m1().abs().ln() };
        (lq + 2.0 * l).exp()
    };
    let v = integrate_family(model, theta_hat, theta_true, f, &[], quad)?;
    Ok(v.max(0.0).sqrt())
}

/// Total variation distance ½ ∫ |p_θ̂ - p_θT|, integrated piecewise between
/// the sign changes of the difference.
pub fn tvd(model: &ModelSpec, theta_hat: &[f64], theta_true: &[f64], quad: &QuadratureConfig) -> Result<f64> {
    let p = model.prepare(theta_hat)?;
    let q = model.prepare(theta_true)?;
    let roots = sign_changes(model, &p, &q, theta_hat, theta_true)?;
    let f = |x: f64| {
        let (lp, lq) = (p.ln_pdf(x), q.ln_pdf(x));
        (lp.exp() - lq.exp()).abs()
    };
    let v = integrate_family(model, theta_hat, theta_true, f, &roots, quad)?;
    Ok((0.5 * v).clamp(0.0, 1.0))
}

fn integrate_family<F: Fn(f64) -> f64>(
    model: &ModelSpec,
    theta_hat: &[f64],
    theta_true: &[f64],
    f: F,
    roots: &[f64],
    quad: &QuadratureConfig,
) -> Result<f64> {
    match model.support() {
        Support::RealLine => {
            let (a1, b1) = model.envelope(theta_hat)?;
            let (a2, b2) = model.envelope(theta_true)?;
            let center = 0.5 * (a2 + b2);
            let scale = (b1.max(b2) - a1.min(a2)) / 24.0;
            let mut br = roots.to_vec();
            br.extend([a1.max(a2), b1.min(b2), 0.5 * (a1 + b1)]);
            Ok(integrate_real_line(f, center, scale, &br, quad)?.value)
        }
        Support::HalfLine => {
            let s = model.typical_scale(theta_true).max(model.typical_scale(theta_hat));
            let mut br = roots.to_vec();
            br.extend([s, model.typical_scale(theta_true), model.typical_scale(theta_hat)]);
            Ok(integrate_semi_infinite(f, 0.0, s, &br, quad)?.value)
        }
    }
}

/// Sign changes of p - q located on a grid and refined by bisection.
fn sign_changes(model: &ModelSpec, p: &Prepared, q: &Prepared, th: &[f64], tt: &[f64]) -> Result<Vec<f64>> {
    let d = |x: f64| p.pdf(x) - q.pdf(x);
    let xs: Vec<f64> = match model.support() {
        Support::RealLine => {
            let (a1, b1) = model.envelope(th)?;
            let (a2, b2) = model.envelope(tt)?;
            let (a, b) = (a1.min(a2), b1.max(b2));
            (0..=4000).map(|i| a + (b - a) * i as f64 / 4000.0).collect()
        }
        Support::HalfLine => {
            let s = model.typical_scale(tt).max(model.typical_scale(th));
            (1..4000).map(|i| {
                let t = i as f64 / 4000.0;
                s * t / (1.0 - t)
            })
            .collect()
        }
    };
    let mut roots = Vec::new();
    let mut prev = (xs[0], d(xs[0]));
    for &x in &xs[1..] {
        let v = d(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand { x });
        }
        if (v > 0.0 && prev.1 < 0.0) || (v < 0.0 && prev.1 > 0.0) {
            let (mut lo, mut hi, flo) = (prev.0, x, prev.1);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (d(mid) > 0.0) == (flo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        if v != 0.0 {
            prev = (x, v);
        }
    }
    Ok(roots)
}

/// ∫_a^b |p - q| on a finite interval with the same root splitting; exposed
/// for diagnostics on truncated supports.
pub fn l1_on_interval(model: &ModelSpec, theta_hat: &[f64], theta_true: &[f64], a: f64, b: f64, quad: &QuadratureConfig) -> Result<f64> {
    let p = model.prepare(theta_hat)?;
    let q = model.prepare(theta_true)?;
    let mut br = vec![a];
    br.extend(sign_changes(model, &p, &q, theta_hat, theta_true)?.into_iter().filter(|r| *r > a && *r < b));
    br.push(b);
    Ok(integrate_breaks(|x| (p.pdf(x) - q.pdf(x)).abs(), &br, quad)?.value)
}
