//! Outlier-injection schemes applied to a clean sample.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Distribution of injected values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseDist {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Weibull { shape: f64, scale: f64 },
    /// Generalized Pareto shifted to start at `location`.
    Gpd { shape: f64, scale: f64, location: f64 },
}

impl NoiseDist {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseDist::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            NoiseDist::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            NoiseDist::Weibull { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
            NoiseDist::Gpd { shape, scale, location } => shape > 0.0 && scale > 0.0 && location.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("invalid noise distribution {self:?}")))
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseDist::Uniform { low, high } => Uniform::new(low, high).expect("validated").sample(rng),
            NoiseDist::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            NoiseDist::Weibull { shape, scale } => Weibull::new(scale, shape).expect("validated").sample(rng),
            NoiseDist::Gpd { shape, scale, location } => {
                let u: f64 = rng.random();
                location + scale / shape * ((-shape * (-u).ln_1p()).exp_m1())
            }
        }
    }
}

/// How injected values enter the extreme positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremeMode {
    /// y ← y + noise.
    #[default]
    Add,
    /// y ← noise.
    Replace,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContaminationScheme {
    #[default]
    None,
    /// The k largest observations become `value`.
    ReplaceLargestK { k: usize, value: f64 },
    /// k observations chosen uniformly without replacement are redrawn from
    /// `noise`.
    ReplaceRandomK { k: usize, noise: NoiseDist },
    /// Each of the k largest observations gets an independent noise draw
    /// added to it.
    AddToLargestK { k: usize, noise: NoiseDist },
    /// The k_low smallest and k_high largest observations are shifted by (or
    /// replaced with) draws from `low` and `high`.
    PerturbExtremesK {
        k_low: usize,
        low: NoiseDist,
        k_high: usize,
        high: NoiseDist,
        #[serde(default)]
        mode: ExtremeMode,
    },
    /// k random observations are redrawn from U[max(sample), upper].
    ReplaceRandomKUniformTail { k: usize, upper: f64 },
}

impl ContaminationScheme {
    pub fn validate(&self, n: usize) -> Result<()> {
        let check_k = |k: usize| {
            if k >= n {
                Err(SimError::Config(format!("contamination count {k} must be below the sample size {n}")))
            } else {
                Ok(())
            }
        };
        match self {
            ContaminationScheme::None => Ok(()),
            ContaminationScheme::ReplaceLargestK { k, value } => {
                check_k(*k)?;
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(SimError::Config("replacement value must be finite".into()))
                }
            }
            ContaminationScheme::ReplaceRandomK { k, noise } | ContaminationScheme::AddToLargestK { k, noise } => {
                check_k(*k)?;
                noise.validate()
            }
            ContaminationScheme::PerturbExtremesK { k_low, low, k_high, high, .. } => {
                check_k(k_low + k_high)?;
                low.validate()?;
                high.validate()
            }
            ContaminationScheme::ReplaceRandomKUniformTail { k, upper } => {
                check_k(*k)?;
                if upper.is_finite() {
                    Ok(())
                } else {
                    Err(SimError::Config("uniform tail upper end must be finite".into()))
                }
            }
        }
    }
}

/// Indices of the sample in ascending order of value; ties keep position
/// order so the result is deterministic.
fn ranks(sample: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sample.len()).collect();
    idx.sort_by(|&a, &b| sample[a].total_cmp(&sample[b]));
    idx
}

/// Contaminated copy of `sample`. Positions of untouched observations are
/// preserved and the length never changes.
pub fn apply_contamination<R: Rng + ?Sized>(sample: &[f64], scheme: &ContaminationScheme, rng: &mut R) -> Result<Vec<f64>> {
    scheme.validate(sample.len())?;
    let mut out = sample.to_vec();
    let n = sample.len();
    match scheme {
        ContaminationScheme::None => {}
        ContaminationScheme::ReplaceLargestK { k, value } => {
            for &i in &ranks(sample)[n - k..] {
                out[i] = *value;
            }
        }
        ContaminationScheme::ReplaceRandomK { k, noise } => {
            for i in index::sample(rng, n, *k).into_vec() {
                out[i] = noise.draw(rng);
            }
        }
        ContaminationScheme::AddToLargestK { k, noise } => {
            for &i in &ranks(sample)[n - k..] {
                out[i] += noise.draw(rng);
            }
        }
        ContaminationScheme::PerturbExtremesK { k_low, low, k_high, high, mode } => {
            let r = ranks(sample);
            let apply = |y: f64, d: f64| match mode {
                ExtremeMode::Add => y + d,
                ExtremeMode::Replace => d,
            };
            for &i in &r[..*k_low] {
                out[i] = apply(out[i], low.draw(rng));
            }
            for &i in &r[n - k_high..] {
                out[i] = apply(out[i], high.draw(rng));
            }
        }
        ContaminationScheme::ReplaceRandomKUniformTail { k, upper } => {
            let lower = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(lower < *upper) {
                return Err(SimError::Config(format!("uniform tail needs max(sample) = {lower} below upper = {upper}")));
            }
            let u = Uniform::new(lower, *upper).expect("checked bounds");
            for i in index::sample(rng, n, *k).into_vec() {
                out[i] = u.sample(rng);
            }
        }
    }
    Ok(out)
}
