//! Bounded Nelder-Mead and the nested inf-sup driver.
//!
//! Box constraints are removed by a coordinatewise change of variables: a
//! finite interval `[lo, hi]` maps to ℝ through a scaled logistic, a
//! half-bounded one through an exponential, and fixed coordinates
//! (`lo == hi`) are dropped from the search space entirely. The box midpoint
//! maps to z = 0.
//!
//! Objective values that are NaN or infinite are treated as +∞. A run is
//! aborted once more than half of the evaluations were non-finite.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::models::Bounds;
use crate::special::{logit, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Iteration cap per restart.
    pub max_iters: usize,
    /// A run stops once the simplex diameter (max-norm, in θ) is below
    /// `x_tol` and the spread of its values is below `f_tol`.
    pub x_tol: f64,
    pub f_tol: f64,
    /// Extra runs re-seeded around the incumbent.
    pub restarts: usize,
    /// Initial simplex step as a fraction of each box width.
    pub initial_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_iters: 2000, x_tol: 1e-6, f_tol: 1e-8, restarts: 2, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub status: OptimStatus,
    pub iterations: usize,
    pub evaluations: usize,
    pub nonfinite_evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
enum Coord {
    Fixed(f64),
    Interval(f64, f64),
    Lower(f64),
    Upper(f64),
    Free,
}

/// Change of variables between a box and unconstrained coordinates.
#[derive(Debug, Clone)]
pub struct BoxTransform {
    coords: Vec<Coord>,
}

const EDGE: f64 = 1e-12;

impl BoxTransform {
    pub fn new(bounds: &Bounds) -> Self {
        let coords = bounds
            .lower
            .iter()
            .zip(&bounds.upper)
            .map(|(&l, &u)| match (l.is_finite(), u.is_finite()) {
                _ if l == u => Coord::Fixed(l),
                (true, true) => Coord::Interval(l, u),
                (true, false) => Coord::Lower(l),
                (false, true) => Coord::Upper(u),
                (false, false) => Coord::Free,
            })
            .collect();
        BoxTransform { coords }
    }

    /// Number of free coordinates.
    pub fn free_dim(&self) -> usize {
        self.coords.iter().filter(|c| !matches!(c, Coord::Fixed(_))).count()
    }

    /// θ → z. θ must lie strictly inside every non-fixed finite side.
    pub fn to_unconstrained(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.coords.len() {
            return Err(Error::InvalidInput("parameter length does not match bounds".into()));
        }
        let mut z = Vec::with_capacity(self.free_dim());
        for (&t, c) in theta.iter().zip(&self.coords) {
            let v = match *c {
                Coord::Fixed(_) => continue,
                Coord::Interval(l, u) => {
                    if !(t > l && t < u) {
                        return Err(Error::Domain(format!("{t} is not strictly inside ({l}, {u})")));
                    }
                    logit((t - l) / (u - l))
                }
                Coord::Lower(l) => {
                    if !(t > l) {
                        return Err(Error::Domain(format!("{t} is not above {l}")));
                    }
                    (t - l).ln()
                }
                Coord::Upper(u) => {
                    if !(t < u) {
                        return Err(Error::Domain(format!("{t} is not below {u}")));
                    }
                    (u - t).ln()
                }
                Coord::Free => t,
            };
            z.push(v);
        }
        Ok(z)
    }

    /// z → θ, always strictly inside the box.
    pub fn from_unconstrained(&self, z: &[f64]) -> Vec<f64> {
        let mut it = z.iter();
        self.coords
            .iter()
            .map(|c| match *c {
                Coord::Fixed(v) => v,
                Coord::Interval(l, u) => {
                    let s = sigmoid(*it.next().expect("z too short")).clamp(EDGE, 1.0 - EDGE);
                    l + (u - l) * s
                }
                Coord::Lower(l) => l + it.next().expect("z too short").exp().max(f64::MIN_POSITIVE),
                Coord::Upper(u) => u - it.next().expect("z too short").exp().max(f64::MIN_POSITIVE),
                Coord::Free => *it.next().expect("z too short"),
            })
            .collect()
    }
}

/// θ → z for `bounds`.
pub fn to_unconstrained(theta: &[f64], bounds: &Bounds) -> Result<Vec<f64>> {
    BoxTransform::new(bounds).to_unconstrained(theta)
}

/// z → θ for `bounds`.
pub fn from_unconstrained(z: &[f64], bounds: &Bounds) -> Vec<f64> {
    BoxTransform::new(bounds).from_unconstrained(z)
}

struct Counter<F> {
    f: F,
    evaluations: usize,
    nonfinite: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    fn call(&mut self, theta: &[f64]) -> Result<f64> {
        let v = (self.f)(theta);
        self.evaluations += 1;
        let v = if v.is_finite() {
            v
        } else {
            self.nonfinite += 1;
            f64::INFINITY
        };
        if self.evaluations >= 8 && 2 * self.nonfinite > self.evaluations {
            return Err(Error::Optimizer(format!(
                "{} of {} evaluations were not finite",
                self.nonfinite, self.evaluations
            )));
        }
        Ok(v)
    }
}

/// Starting vertices in θ, one step per free coordinate, stepping away from
/// the nearer side when the forward step would leave the box.
fn initial_vertices(theta0: &[f64], bounds: &Bounds, step: f64) -> Vec<Vec<f64>> {
    let mut out = vec![theta0.to_vec()];
    for i in 0..theta0.len() {
        let (l, u) = (bounds.lower[i], bounds.upper[i]);
        if l == u {
            continue;
        }
        let width = if l.is_finite() && u.is_finite() { u - l } else { theta0[i].abs().max(1.0) };
        let mut h = step * width;
        let margin = 1e-9 * width;
        if theta0[i] + h >= u - margin {
            h = -h;
            if theta0[i] + h <= l + margin {
                h = 0.5 * (if u - theta0[i] > theta0[i] - l { u - theta0[i] } else { l - theta0[i] });
            }
        }
        let mut v = theta0.to_vec();
        v[i] += h;
        out.push(v);
    }
    out
}

fn diameter(thetas: &[Vec<f64>]) -> f64 {
    let best = &thetas[0];
    thetas[1..]
        .iter()
        .flat_map(|t| t.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn run_simplex<F: FnMut(&[f64]) -> f64>(
    counter: &mut Counter<F>,
    tr: &BoxTransform,
    theta0: &[f64],
    bounds: &Bounds,
    opts: &OptimOptions,
    step: f64,
    f0: Option<f64>,
) -> Result<(Vec<f64>, f64, OptimStatus, usize)> {
    let n = tr.free_dim();
    let verts_theta = initial_vertices(theta0, bounds, step);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    for (k, v) in verts_theta.iter().enumerate() {
        let z = tr.to_unconstrained(v)?;
        let fv = match (k, f0) {
            (0, Some(f)) => f,
            _ => counter.call(&tr.from_unconstrained(&z))?,
        };
        simplex.push((z, fv));
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut iters = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let thetas: Vec<Vec<f64>> = simplex.iter().map(|(z, _)| tr.from_unconstrained(z)).collect();
        let spread = simplex[n].1 - simplex[0].1;
        let diam = diameter(&thetas);
        if diam < opts.x_tol && ((spread.is_finite() && spread <= opts.f_tol) || diam < 1e-3 * opts.x_tol) {
            return Ok((thetas[0].clone(), simplex[0].1, OptimStatus::Converged, iters));
        }
        if iters >= opts.max_iters {
            return Ok((thetas[0].clone(), simplex[0].1, OptimStatus::MaxIterations, iters));
        }
        iters += 1;
        let mut c = vec![0.0; n];
        for (z, _) in &simplex[..n] {
            for (ci, zi) in c.iter_mut().zip(z) {
                *ci += zi / nf;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { c.iter().zip(&worst.0).map(|(ci, wi)| ci + t * (ci - wi)).collect() };
        let zr = along(alpha);
        let fr = counter.call(&tr.from_unconstrained(&zr))?;
        if fr < simplex[0].1 {
            let ze = along(alpha * beta);
            let fe = counter.call(&tr.from_unconstrained(&ze))?;
            simplex[n] = if fe < fr { (ze, fe) } else { (zr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (zr, fr);
            continue;
        }
        let (zc, fc) = if fr < worst.1 {
            let z = along(alpha * gamma);
            let f = counter.call(&tr.from_unconstrained(&z))?;
            (z, f)
        } else {
            let z = along(-gamma);
            let f = counter.call(&tr.from_unconstrained(&z))?;
            (z, f)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (zc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let z: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + delta * (x - b)).collect();
            let f = counter.call(&tr.from_unconstrained(&z))?;
            *v = (z, f);
        }
    }
}

/// Minimizes `f` over `bounds` starting from `theta0`.
///
/// A start on a finite side is nudged inside; a start outside the box is an
/// error. Each restart re-inflates the simplex around the incumbent and the
/// sequence stops early once a restart fails to improve by more than
/// `f_tol`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: F,
    theta0: &[f64],
    bounds: &Bounds,
    opts: &OptimOptions,
) -> Result<OptimResult> {
    if theta0.len() != bounds.dim() {
        return Err(Error::InvalidInput("start point does not match bounds".into()));
    }
    if !bounds.contains(theta0) || theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("start point {theta0:?} lies outside the box")));
    }
    if !(opts.initial_step > 0.0 && opts.initial_step < 1.0) {
        return Err(Error::InvalidParameter("initial_step must lie in (0, 1)".into()));
    }
    let tr = BoxTransform::new(bounds);
    let start = bounds.clamp_inside(theta0, 1e-6);
    let mut counter = Counter { f, evaluations: 0, nonfinite: 0 };
    if tr.free_dim() == 0 {
        let v = counter.call(&start)?;
        return Ok(OptimResult {
            x: start,
            f: v,
            status: OptimStatus::Converged,
            iterations: 0,
            evaluations: 1,
            nonfinite_evaluations: counter.nonfinite,
        });
    }
    let (mut x, mut fx, mut status, mut iterations) =
        run_simplex(&mut counter, &tr, &start, bounds, opts, opts.initial_step, None)?;
    for _ in 0..opts.restarts {
        let seed = bounds.clamp_inside(&x, 1e-6);
        let (x2, f2, s2, it2) = run_simplex(&mut counter, &tr, &seed, bounds, opts, opts.initial_step, None)?;
        iterations += it2;
        let improved = f2 < fx - opts.f_tol;
        if f2 < fx {
            x = x2;
            fx = f2;
            status = s2;
        }
        if !improved {
            break;
        }
    }
    if !fx.is_finite() {
        return Err(Error::Optimizer("no finite objective value found".into()));
    }
    Ok(OptimResult {
        x,
        f: fx,
        status,
        iterations,
        evaluations: counter.evaluations,
        nonfinite_evaluations: counter.nonfinite,
    })
}

/// Maximizes `f` by minimizing its negation; the returned `f` is the maximum.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    theta0: &[f64],
    bounds: &Bounds,
    opts: &OptimOptions,
) -> Result<OptimResult> {
    let mut r = nelder_mead(|t| -f(t), theta0, bounds, opts)?;
    r.f = -r.f;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfSupResult {
    /// Outer minimizer.
    pub phi: Vec<f64>,
    /// Inner maximizer at `phi`.
    pub alpha: Vec<f64>,
    /// inf_φ sup_α f(φ, α).
    pub value: f64,
    pub outer: OptimResult,
    /// Outer probes scored +∞ because the inner search failed.
    pub inner_failures: usize,
}

/// inf over φ of sup over α of `f(φ, α)`.
///
/// Each outer probe runs an inner maximization warm-started from the
/// previous inner solution. Inner failures score the probe as +∞.
pub fn nested_infsup<F: Fn(&[f64], &[f64]) -> f64>(
    f: F,
    phi0: &[f64],
    alpha0: &[f64],
    outer_bounds: &Bounds,
    inner_bounds: &Bounds,
    outer_opts: &OptimOptions,
    inner_opts: &OptimOptions,
) -> Result<InfSupResult> {
    if !inner_bounds.contains(alpha0) {
        return Err(Error::Domain(format!("inner start {alpha0:?} lies outside the box")));
    }
    let warm = RefCell::new(inner_bounds.clamp_inside(alpha0, 1e-6));
    let failures = RefCell::new(0usize);
    let inner = |phi: &[f64]| -> Result<OptimResult> {
        let start = inner_bounds.clamp_inside(&warm.borrow(), 1e-6);
        nelder_mead_max(|a| f(phi, a), &start, inner_bounds, inner_opts)
    };
    let outer = nelder_mead(
        |phi| match inner(phi) {
            Ok(r) => {
                *warm.borrow_mut() = r.x;
                r.f
            }
            Err(_) => {
                *failures.borrow_mut() += 1;
                f64::INFINITY
            }
        },
        phi0,
        outer_bounds,
        outer_opts,
    )?;
    let last = inner(&outer.x)?;
    Ok(InfSupResult {
        phi: outer.x.clone(),
        alpha: last.x,
        value: last.f,
        outer,
        inner_failures: failures.into_inner(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_quadratic() {
        let b = Bounds::new(vec![-10.0], vec![10.0]).unwrap();
        let r = nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], &b, &OptimOptions::default()).unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-6);
        assert!(r.f < 1e-10);
        assert_eq!(r.status, OptimStatus::Converged);
    }

    #[test]
    fn rosenbrock_unbounded() {
        let b = Bounds::unbounded(2);
        let opts = OptimOptions { x_tol: 1e-9, f_tol: 1e-14, ..Default::default() };
        let r = nelder_mead(|x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2), &[-1.2, 1.0], &b, &opts)
            .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn optimum_on_boundary_is_approached_from_inside() {
        let b = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let r = nelder_mead(|x| x[0] + (x[1] - 0.5).powi(2), &[0.5, 0.5], &b, &OptimOptions::default()).unwrap();
        assert!(r.x[0] > 0.0 && r.x[0] < 1e-4);
        assert!((r.x[1] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn fixed_coordinates_are_held() {
        let b = Bounds::new(vec![-5.0, 2.0], vec![5.0, 2.0]).unwrap();
        let r = nelder_mead(|x| (x[0] - x[1]).powi(2), &[0.0, 2.0], &b, &OptimOptions::default()).unwrap();
        assert_eq!(r.x[1], 2.0);
        assert!((r.x[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn mostly_nonfinite_objective_aborts() {
        let b = Bounds::new(vec![-1.0], vec![1.0]).unwrap();
        let r = nelder_mead(|_| f64::NAN, &[0.0], &b, &OptimOptions::default());
        assert!(matches!(r, Err(Error::Optimizer(_))));
    }

    #[test]
    fn start_outside_box_is_rejected() {
        let b = Bounds::new(vec![-1.0], vec![1.0]).unwrap();
        assert!(nelder_mead(|x| x[0], &[2.0], &b, &OptimOptions::default()).is_err());
    }

    #[test]
    fn saddle_infsup() {
        // f = (φ-1)² - (α-φ)²: inner sup at α = φ, outer inf at φ = 1.
        let ob = Bounds::new(vec![-5.0], vec![5.0]).unwrap();
        let ib = Bounds::new(vec![-5.0], vec![5.0]).unwrap();
        let o = OptimOptions::default();
        let r = nested_infsup(|p, a| (p[0] - 1.0).powi(2) - (a[0] - p[0]).powi(2), &[0.0], &[0.0], &ob, &ib, &o, &o)
            .unwrap();
        assert!((r.phi[0] - 1.0).abs() < 1e-4);
        assert!((r.alpha[0] - 1.0).abs() < 1e-3);
        assert!(r.value.abs() < 1e-7);
    }

    #[test]
    fn inner_start_on_boundary_recovers() {
        let ob = Bounds::new(vec![-5.0], vec![5.0]).unwrap();
        let ib = Bounds::new(vec![0.0], vec![4.0]).unwrap();
        let o = OptimOptions::default();
        let r = nested_infsup(|p, a| (p[0] - 1.0).powi(2) - (a[0] - 2.0).powi(2), &[0.0], &[0.0], &ob, &ib, &o, &o)
            .unwrap();
        assert!((r.alpha[0] - 2.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn transform_round_trips(t in 0.0001f64..0.9999, lo in -50.0f64..50.0, w in 0.01f64..100.0) {
            let b = Bounds::new(vec![lo, 0.0, f64::NEG_INFINITY], vec![lo + w, f64::INFINITY, f64::INFINITY]).unwrap();
            let theta = vec![lo + t * w, 3.0 * t + 0.1, 7.0 * t - 2.0];
            let z = to_unconstrained(&theta, &b).unwrap();
            let back = from_unconstrained(&z, &b);
            for (a, c) in theta.iter().zip(&back) {
                prop_assert!((a - c).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn mapped_points_stay_inside(z in -800.0f64..800.0) {
            let b = Bounds::new(vec![0.05], vec![20.0]).unwrap();
            let t = from_unconstrained(&[z], &b)[0];
            prop_assert!(t > 0.05 && t < 20.0);
        }

        #[test]
        fn incumbent_never_worse_than_start(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let bx = Bounds::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap();
            let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 0.5).powi(4) + (3.0 * x[0]).sin();
            let r = nelder_mead(f, &[a, b], &bx, &OptimOptions::default()).unwrap();
            prop_assert!(r.f <= f(&[a, b]) + 1e-12);
        }
    }
}
