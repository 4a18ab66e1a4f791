//! Versioned JSON experiment configs. The schema is documented in
//! `docs/config-schema.md`; keep the two in sync.

use std::path::Path;

use phidiv::estimators::default_noise_model;
use phidiv::{BandwidthRule, Bounds, DivergenceSpec, Family, KdeSpec, KernelKind, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::contamination::ContaminationScheme;
use crate::error::{Result, SimError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Gaussian,
    GaussianLocation,
    GaussMix2,
    Gpd,
    WeibullMix2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyName,
    /// Known sd of `gaussian_location`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Known component scales of `weibull_mix2` (defaults 0.5 and 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale2: Option<f64>,
    /// Parameter box; both ends or neither.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl ModelConfig {
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let unused = |name: &str, v: &Option<f64>| match v {
            Some(_) => Err(SimError::Config(format!("`{name}` does not apply to {:?}", self.family))),
            None => Ok(()),
        };
        let family = match self.family {
            FamilyName::Gaussian | FamilyName::GaussMix2 | FamilyName::Gpd => {
                unused("sigma", &self.sigma)?;
                unused("scale1", &self.scale1)?;
                unused("scale2", &self.scale2)?;
                match self.family {
                    FamilyName::Gaussian => Family::Gaussian,
                    FamilyName::GaussMix2 => Family::GaussMix2,
                    _ => Family::Gpd,
                }
            }
            FamilyName::GaussianLocation => {
                unused("scale1", &self.scale1)?;
                unused("scale2", &self.scale2)?;
                Family::GaussianLocation { sigma: self.sigma.unwrap_or(1.0) }
            }
            FamilyName::WeibullMix2 => {
                unused("sigma", &self.sigma)?;
                Family::WeibullMix2 { scale1: self.scale1.unwrap_or(0.5), scale2: self.scale2.unwrap_or(2.0) }
            }
        };
        match (&self.lower, &self.upper) {
            (None, None) => Ok(ModelSpec::new(family)),
            (Some(lo), Some(hi)) => Ok(ModelSpec::with_bounds(family, Bounds::new(lo.clone(), hi.clone())?)?),
            _ => Err(SimError::Config("model bounds need both `lower` and `upper`".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Gaussian,
    Gamma,
    Rig,
    Varying,
}

impl From<KernelName> for KernelKind {
    fn from(k: KernelName) -> Self {
        match k {
            KernelName::Gaussian => KernelKind::Gaussian,
            KernelName::Gamma => KernelKind::Gamma,
            KernelName::Rig => KernelKind::Rig,
            KernelName::Varying => KernelKind::Varying,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthName {
    Silverman,
    Sj,
    Lscv,
}

/// A rule name or a fixed window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandwidthConfig {
    Fixed(f64),
    Rule(BandwidthName),
}

impl From<BandwidthConfig> for BandwidthRule {
    fn from(b: BandwidthConfig) -> Self {
        match b {
            BandwidthConfig::Fixed(w) => BandwidthRule::Fixed(w),
            BandwidthConfig::Rule(BandwidthName::Silverman) => BandwidthRule::Silverman,
            BandwidthConfig::Rule(BandwidthName::Sj) => BandwidthRule::SheatherJones,
            BandwidthConfig::Rule(BandwidthName::Lscv) => BandwidthRule::Lscv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscortConfig {
    /// θ̂ of an estimator listed earlier in the same config, per run.
    Estimator(String),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// The data-generating parameter.
    #[default]
    Truth,
    /// The per-run maximum likelihood estimate.
    Mle,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Mle,
    Classical,
    Kernel,
    BasuLindsay,
    Beran,
    Dphide,
    Mpd,
    Contamination,
}

/// One estimator entry. Which optional fields are required depends on
/// `method`; see the schema document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub id: String,
    pub method: MethodName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<BandwidthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escort: Option<EscortConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
}

fn default_sample_size() -> usize {
    100
}

fn default_runs() -> usize {
    100
}

fn default_seed() -> u64 {
    1
}

fn default_gamma() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub model: ModelConfig,
    pub truth: Vec<f64>,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub contamination: ContaminationScheme,
    /// Cressie-Read power shared by the divergence-based estimators.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_tol: Option<f64>,
    #[serde(default)]
    pub init: InitRule,
    pub estimators: Vec<EstimatorConfig>,
}

/// Estimator with every option resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind {
    Mle,
    Classical,
    Kernel(KdeSpec),
    BasuLindsay(KdeSpec),
    Beran(KdeSpec),
    /// Escort is either the index of an earlier estimator or a fixed point.
    Dphide(Escort),
    Mpd(f64),
    Contamination { noise_model: ModelSpec, noise0: Vec<f64>, lambda0: f64, lambda_max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Escort {
    Estimator(usize),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedEstimator {
    pub id: String,
    pub spec: DivergenceSpec,
    pub kind: EstimatorKind,
}

/// A validated experiment ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub model: ModelSpec,
    pub truth: Vec<f64>,
    pub sample_size: usize,
    pub runs: usize,
    pub seed: u64,
    pub contamination: ContaminationScheme,
    pub quad_tol: Option<f64>,
    pub init: InitRule,
    pub estimators: Vec<ResolvedEstimator>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn resolve(&self) -> Result<Experiment> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !valid_id(&self.name) {
            return Err(SimError::Config(format!("name {:?} must be non-empty [A-Za-z0-9_.-]", self.name)));
        }
        let model = self.model.to_spec()?;
        model.validate(&self.truth)?;
        if self.sample_size < 2 {
            return Err(SimError::Config("sample_size must be at least 2".into()));
        }
        if self.runs == 0 {
            return Err(SimError::Config("runs must be positive".into()));
        }
        self.contamination.validate(self.sample_size)?;
        if let Some(t) = self.quad_tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(SimError::Config(format!("quad_tol must be positive, got {t}")));
            }
        }
        if let InitRule::Fixed(v) = &self.init {
            model.validate(v)?;
        }
        if self.estimators.is_empty() {
            return Err(SimError::Config("at least one estimator is required".into()));
        }
        let mut out: Vec<ResolvedEstimator> = Vec::with_capacity(self.estimators.len());
        for e in &self.estimators {
            if !valid_id(&e.id) {
                return Err(SimError::Config(format!("estimator id {:?} must be non-empty [A-Za-z0-9_.-]", e.id)));
            }
            if out.iter().any(|r| r.id == e.id) {
                return Err(SimError::Config(format!("duplicate estimator id {:?}", e.id)));
            }
            out.push(resolve_estimator(e, &model, self.gamma, &out)?);
        }
        Ok(Experiment {
            name: self.name.clone(),
            model,
            truth: self.truth.clone(),
            sample_size: self.sample_size,
            runs: self.runs,
            seed: self.seed,
            contamination: self.contamination.clone(),
            quad_tol: self.quad_tol,
            init: self.init.clone(),
            estimators: out,
        })
    }
}

fn resolve_estimator(e: &EstimatorConfig, model: &ModelSpec, gamma: f64, earlier: &[ResolvedEstimator]) -> Result<ResolvedEstimator> {
    let bad = |what: &str| SimError::Config(format!("estimator {:?}: {what}", e.id));
    let allowed: &[&str] = match e.method {
        MethodName::Mle => &[],
        MethodName::Classical => &["gamma"],
        MethodName::Kernel | MethodName::BasuLindsay | MethodName::Beran => &["gamma", "kernel", "bandwidth"],
        MethodName::Dphide => &["gamma", "escort"],
        MethodName::Mpd => &["a"],
        MethodName::Contamination => &["gamma", "noise0", "lambda0", "lambda_max"],
    };
    let present = [
        ("gamma", e.gamma.is_some()),
        ("kernel", e.kernel.is_some()),
        ("bandwidth", e.bandwidth.is_some()),
        ("a", e.a.is_some()),
        ("escort", e.escort.is_some()),
        ("noise0", e.noise0.is_some()),
        ("lambda0", e.lambda0.is_some()),
        ("lambda_max", e.lambda_max.is_some()),
    ];
    for (name, is_set) in present {
        if is_set && !allowed.contains(&name) {
            return Err(bad(&format!("field `{name}` does not apply to method {:?}", e.method)));
        }
    }
    let spec = DivergenceSpec::cressie_read(e.gamma.unwrap_or(gamma))?;
    let kde = || -> Result<KdeSpec> {
        let kernel = e.kernel.ok_or_else(|| bad("`kernel` is required"))?;
        let bw = e.bandwidth.ok_or_else(|| bad("`bandwidth` is required"))?;
        Ok(KdeSpec::new(kernel.into(), bw.into()))
    };
    let kind = match e.method {
        MethodName::Mle => EstimatorKind::Mle,
        MethodName::Classical => EstimatorKind::Classical,
        MethodName::Kernel => EstimatorKind::Kernel(kde()?),
        MethodName::BasuLindsay => EstimatorKind::BasuLindsay(kde()?),
        MethodName::Beran => EstimatorKind::Beran(kde()?),
        MethodName::Dphide => match e.escort.as_ref().ok_or_else(|| bad("`escort` is required"))? {
            EscortConfig::Estimator(id) => {
                let i = earlier.iter().position(|r| &r.id == id).ok_or_else(|| bad(&format!("escort {id:?} must name an earlier estimator")))?;
                EstimatorKind::Dphide(Escort::Estimator(i))
            }
            EscortConfig::Fixed(v) => {
                model.validate(v)?;
                EstimatorKind::Dphide(Escort::Fixed(v.clone()))
            }
        },
        MethodName::Mpd => {
            let a = e.a.ok_or_else(|| bad("`a` is required"))?;
            if !(a > 0.0 && a.is_finite()) {
                return Err(bad("`a` must be positive"));
            }
            EstimatorKind::Mpd(a)
        }
        MethodName::Contamination => {
            let noise_model = default_noise_model(model);
            let noise0 = e.noise0.clone().ok_or_else(|| bad("`noise0` is required"))?;
            noise_model.validate(&noise0)?;
            let lambda_max = e.lambda_max.unwrap_or(0.5);
            let lambda0 = e.lambda0.unwrap_or(0.05);
            if !(lambda_max > 0.0 && lambda_max < 1.0 && (0.0..=lambda_max).contains(&lambda0)) {
                return Err(bad("need 0 < lambda_max < 1 and 0 <= lambda0 <= lambda_max"));
            }
            EstimatorKind::Contamination { noise_model, noise0, lambda0, lambda_max }
        }
    };
    Ok(ResolvedEstimator { id: e.id.clone(), spec, kind })
}
