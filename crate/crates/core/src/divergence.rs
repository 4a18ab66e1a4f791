//! Convex divergence generators and their dual-form derivatives.
//!
//! Two families are supported: the Cressie-Read power family
//! `φ_γ(t) = (t^γ - γt + γ - 1) / (γ(γ-1))`, γ ∉ {0, 1}, and the modified
//! Kullback-Leibler generator `φ(t) = -ln t + t - 1`. Every generator satisfies
//! φ(1) = φ'(1) = 0 and φ''(1) = 1.
//!
//! Besides the pointwise functions, the log-space helpers used by the
//! estimators evaluate products such as `φ'(p/q)·p` directly from `ln p` and
//! `ln q`, so that neither density has to be exponentiated on its own.

use crate::error::{Error, Result};

/// A divergence generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceSpec {
    CressieRead { gamma: f64 },
    ModifiedKl,
}

impl DivergenceSpec {
    /// Cressie-Read generator with power `gamma`.
    pub fn cressie_read(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma == 0.0 || gamma == 1.0 {
            return Err(Error::InvalidParameter(format!(
                "Cressie-Read power must be finite and outside {{0, 1}}, got {gamma}"
            )));
        }
        Ok(DivergenceSpec::CressieRead { gamma })
    }

    /// Hellinger distance up to a factor: Cressie-Read with γ = 1/2.
    pub fn hellinger() -> Self {
        DivergenceSpec::CressieRead { gamma: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DivergenceSpec::CressieRead { gamma } => Self::cressie_read(gamma).map(|_| ()),
            DivergenceSpec::ModifiedKl => Ok(()),
        }
    }

    /// Power γ of the Cressie-Read family; `None` for modified KL.
    pub fn gamma(&self) -> Option<f64> {
        match *self {
            DivergenceSpec::CressieRead { gamma } => Some(gamma),
            DivergenceSpec::ModifiedKl => None,
        }
    }

    fn check_nonneg(t: f64) -> Result<()> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::Domain(format!("divergence argument must be >= 0, got {t}")));
        }
        Ok(())
    }

    fn check_pos(t: f64) -> Result<()> {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::Domain(format!("divergence argument must be > 0, got {t}")));
        }
        Ok(())
    }

    /// φ(t). At t = 0 returns the limit, which is +∞ for γ < 0 and for
    /// modified KL.
    pub fn phi(&self, t: f64) -> Result<f64> {
        Self::check_nonneg(t)?;
        Ok(match *self {
            DivergenceSpec::CressieRead { gamma } => {
                if t == 0.0 {
                    if gamma > 0.0 {
                        1.0 / gamma
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (t.powf(gamma) - gamma * t + gamma - 1.0) / (gamma * (gamma - 1.0))
                }
            }
            DivergenceSpec::ModifiedKl => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    -t.ln() + t - 1.0
                }
            }
        })
    }

    /// φ'(t), t > 0.
    pub fn phi_prime(&self, t: f64) -> Result<f64> {
        Self::check_pos(t)?;
        Ok(self.phi_prime_ln(t.ln()))
    }

    /// φ''(t), t > 0.
    pub fn phi_second(&self, t: f64) -> Result<f64> {
        Self::check_pos(t)?;
        Ok(match *self {
            DivergenceSpec::CressieRead { gamma } => t.powf(gamma - 2.0),
            DivergenceSpec::ModifiedKl => 1.0 / (t * t),
        })
    }

    /// φ#(t) = t φ'(t) - φ(t), t > 0.
    pub fn phi_sharp(&self, t: f64) -> Result<f64> {
        Self::check_pos(t)?;
        Ok(self.phi_sharp_ln(t.ln()))
    }

    /// φ'(t) from ln t.
    #[inline]
    pub fn phi_prime_ln(&self, ln_t: f64) -> f64 {
        match *self {
            DivergenceSpec::CressieRead { gamma } => ((gamma - 1.0) * ln_t).exp_m1() / (gamma - 1.0),
            DivergenceSpec::ModifiedKl => -(-ln_t).exp_m1(),
        }
    }

    /// φ#(t) from ln t.
    #[inline]
    pub fn phi_sharp_ln(&self, ln_t: f64) -> f64 {
        match *self {
            DivergenceSpec::CressieRead { gamma } => (gamma * ln_t).exp_m1() / gamma,
            DivergenceSpec::ModifiedKl => ln_t,
        }
    }

    /// φ'(p/q)·p from ln p, ln q. Finite whenever the corresponding dual
    /// integral can be finite.
    #[inline]
    pub fn dual_integrand(&self, ln_p: f64, ln_q: f64) -> f64 {
        let p = ln_p.exp();
        // ratio form is exact at p = q; far from it the cross-power form
        // avoids 0·∞
        let r = ln_p - ln_q;
        if r.abs() < 50.0 {
            return p * self.phi_prime_ln(r);
        }
        match *self {
            DivergenceSpec::CressieRead { gamma } => {
                let cross = if ln_p == f64::NEG_INFINITY {
                    if gamma > 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else if ln_q == f64::NEG_INFINITY {
                    if gamma < 1.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (gamma * ln_p + (1.0 - gamma) * ln_q).exp()
                };
                (cross - p) / (gamma - 1.0)
            }
            DivergenceSpec::ModifiedKl => p - ln_q.exp(),
        }
    }

    /// φ(p/q)·q from ln p, ln q.
    #[inline]
    pub fn divergence_integrand(&self, ln_p: f64, ln_q: f64) -> f64 {
        let p = ln_p.exp();
        let q = ln_q.exp();
        match *self {
            DivergenceSpec::CressieRead { gamma } => {
                let cross = if ln_p == f64::NEG_INFINITY {
                    if gamma > 0.0 {
                        0.0
                    } else if q == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else if ln_q == f64::NEG_INFINITY {
                    if gamma < 1.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (gamma * ln_p + (1.0 - gamma) * ln_q).exp()
                };
                (cross - gamma * p + (gamma - 1.0) * q) / (gamma * (gamma - 1.0))
            }
            DivergenceSpec::ModifiedKl => {
                if q == 0.0 {
                    p
                } else if ln_p == f64::NEG_INFINITY {
                    f64::INFINITY
                } else {
                    q * (ln_q - ln_p) + p - q
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn specs() -> Vec<DivergenceSpec> {
        let mut v: Vec<DivergenceSpec> = [-2.0, -1.0, -0.5, 0.25, 0.5, 2.0]
            .iter()
            .map(|&g| DivergenceSpec::cressie_read(g).unwrap())
            .collect();
        v.push(DivergenceSpec::ModifiedKl);
        v
    }

    #[test]
    fn rejects_degenerate_powers() {
        assert!(DivergenceSpec::cressie_read(0.0).is_err());
        assert!(DivergenceSpec::cressie_read(1.0).is_err());
        assert!(DivergenceSpec::cressie_read(f64::NAN).is_err());
    }

    #[test]
    fn hellinger_values() {
        let h = DivergenceSpec::hellinger();
        assert!((h.phi(4.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((h.phi(0.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((h.phi_prime(4.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((h.phi_sharp(4.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn modified_kl_values() {
        let d = DivergenceSpec::ModifiedKl;
        let e = std::f64::consts::E;
        assert!((d.phi(e).unwrap() - (e - 2.0)).abs() < 1e-12);
        assert!((d.phi_sharp(e).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(d.phi(0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn boundary_and_domain() {
        let d = DivergenceSpec::cressie_read(-0.5).unwrap();
        assert_eq!(d.phi(0.0).unwrap(), f64::INFINITY);
        assert!(d.phi(-1.0).is_err());
        assert!(d.phi_prime(0.0).is_err());
        assert!(d.phi_sharp(f64::NAN).is_err());
    }

    #[test]
    fn normalized_at_one() {
        for d in specs() {
            assert!(d.phi(1.0).unwrap().abs() < 1e-12);
            assert!(d.phi_prime(1.0).unwrap().abs() < 1e-12);
            assert!((d.phi_second(1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_space_integrands_match_direct_forms() {
        for d in specs() {
            for &(p, q) in &[(0.3, 0.7), (2.0, 0.1), (1e-3, 4.0)] {
                let t: f64 = p / q;
                let a = d.dual_integrand(f64::ln(p), f64::ln(q));
                let b = d.phi_prime(t).unwrap() * p;
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
                let a = d.divergence_integrand(f64::ln(p), f64::ln(q));
                let b = d.phi(t).unwrap() * q;
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn sharp_identity(t in 0.01f64..100.0, gi in 0usize..7) {
            let d = specs()[gi];
            let lhs = d.phi_sharp(t).unwrap();
            let rhs = t * d.phi_prime(t).unwrap() - d.phi(t).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())) * 10.0);
        }

        #[test]
        fn nonnegative_and_convex(t in 0.0f64..50.0, gi in 0usize..7) {
            let d = specs()[gi];
            prop_assert!(d.phi(t).unwrap() >= -1e-15);
            if t > 0.0 {
                prop_assert!(d.phi_second(t).unwrap() > 0.0);
            }
        }

        #[test]
        fn derivatives_match_finite_differences(t in 0.1f64..10.0, gi in 0usize..7) {
            let d = specs()[gi];
            let h = 1e-5 * t;
            let fd1 = (d.phi(t + h).unwrap() - d.phi(t - h).unwrap()) / (2.0 * h);
            let fd2 = (d.phi_prime(t + h).unwrap() - d.phi_prime(t - h).unwrap()) / (2.0 * h);
            let a1 = d.phi_prime(t).unwrap();
            let a2 = d.phi_second(t).unwrap();
            prop_assert!((fd1 - a1).abs() <= 1e-6 * a1.abs().max(1.0));
            prop_assert!((fd2 - a2).abs() <= 1e-6 * a2.abs().max(1.0));
        }
    }
}
