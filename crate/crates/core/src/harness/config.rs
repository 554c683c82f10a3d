//! Experiment configuration (TOML).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TgdError};
use crate::observation::Operator;
use crate::reconstruct::{ModuleSpec, OdeSettings};
use crate::schedules::{
    edm_noise_grid, noise_dependent_tempering, uniform_tempering, NoiseSchedule, TemperingSchedule,
};
use crate::smc::{PruneConfig, ResamplePolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_conditions")]
    pub conditions: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_particles")]
    pub particles: Vec<usize>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub observation: ObservationSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSpec>,
    /// Output location; excluded from the config hash.
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_experiment() -> String {
    "toy2d".into()
}
fn default_conditions() -> usize {
    10
}
fn default_repetitions() -> usize {
    1
}
fn default_particles() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 32, 64, 128]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub dim: usize,
    pub components: usize,
    /// Means are drawn uniformly on `[-(1 - margin), 1 - margin]^dim`.
    pub margin: f64,
    pub tau: f64,
    /// Explicit means; when present, `components` and `margin` are ignored.
    pub means: Option<Vec<Vec<f64>>>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { dim: 2, components: 5, margin: 0.1, tau: 0.005, means: None }
    }
}

/// Observation operators the harness can score; every one needs an exact oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    AbsValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationSpec {
    pub operator: OperatorKind,
    pub sigma_y: f64,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self { operator: OperatorKind::AbsValue, sigma_y: 0.01 }
    }
}

/// Outer EDM noise grid shared by every method unless overridden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub points: usize,
    pub s_max: f64,
    pub s_min: f64,
    pub curvature: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { points: 20, s_max: 80.0, s_min: 0.002, curvature: 7.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSpec {
    pub n_proj: usize,
    pub p: f64,
    /// Pooled clean samples per cell.
    pub pooled_target: usize,
    /// Oracle reference samples per condition.
    pub oracle_samples: usize,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self { n_proj: 100, p: 2.0, pooled_target: 10_000, oracle_samples: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Also write `results.jsonl`.
    pub jsonl: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("results"), jsonl: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Tgd,
    Atgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemperingSpec {
    Uniform {
        #[serde(default)]
        lambda_r: f64,
    },
    NoiseDependent {
        #[serde(default)]
        lambda_r: f64,
        alpha: f64,
    },
    ConstantOne,
}

impl Default for TemperingSpec {
    fn default() -> Self {
        TemperingSpec::Uniform { lambda_r: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_module")]
    pub module: ModuleSpec,
    #[serde(default)]
    pub tempering: TemperingSpec,
    #[serde(default)]
    pub resample: ResamplePolicy,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Overrides `schedule.points` for this method.
    #[serde(default)]
    pub outer_points: Option<usize>,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Tgd
}
fn default_module() -> ModuleSpec {
    ModuleSpec::Dps { ode: OdeSettings::default() }
}
fn default_rho() -> f64 {
    0.5
}

fn default_methods() -> Vec<MethodSpec> {
    let method = |name: &str| MethodSpec {
        name: name.into(),
        algorithm: Algorithm::Tgd,
        module: default_module(),
        tempering: TemperingSpec::default(),
        resample: ResamplePolicy::default(),
        rho: default_rho(),
        outer_points: None,
    };
    vec![
        method("tgd"),
        MethodSpec { module: ModuleSpec::Exact, ..method("ideal_tgd") },
        MethodSpec { algorithm: Algorithm::Atgd, ..method("atgd") },
        MethodSpec {
            module: ModuleSpec::Dps { ode: OdeSettings { n_steps: 20, ..OdeSettings::default() } },
            outer_points: Some(1),
            resample: ResamplePolicy::never(),
            ..method("dps")
        },
        MethodSpec {
            tempering: TemperingSpec::ConstantOne,
            resample: ResamplePolicy::never(),
            ..method("dps_daps")
        },
    ]
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| TgdError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TgdError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TgdError::Config(m));
        if self.particles.is_empty() || self.particles.contains(&0) {
            return bad("particles must be a non-empty list of positive counts".into());
        }
        if self.conditions == 0 || self.repetitions == 0 {
            return bad("conditions and repetitions must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        let p = &self.prior;
        if !(p.tau > 0.0) {
            return bad(format!("prior.tau must be positive, got {}", p.tau));
        }
        match &p.means {
            Some(m) if m.is_empty() || m.iter().any(|v| v.len() != p.dim) => {
                return bad("prior.means must be non-empty and match prior.dim".into());
            }
            None if p.components == 0 || p.dim == 0 => {
                return bad("prior needs positive dim and components".into());
            }
            None if !(0.0..1.0).contains(&p.margin) => {
                return bad("prior.margin must lie in [0, 1)".into());
            }
            _ => {}
        }
        if !(self.observation.sigma_y > 0.0) {
            return bad("observation.sigma_y must be positive".into());
        }
        let m = &self.metric;
        if m.n_proj == 0 || m.pooled_target == 0 || m.oracle_samples == 0 {
            return bad("metric counts must be positive".into());
        }
        if !(m.p >= 1.0) {
            return bad("metric.p must be >= 1".into());
        }
        if m.pooled_target != m.oracle_samples {
            return bad("metric.pooled_target must equal metric.oracle_samples".into());
        }
        let mut names = HashSet::new();
        for method in &self.methods {
            if method.name.is_empty() || !names.insert(method.name.as_str()) {
                return bad(format!("method names must be unique and non-empty: {:?}", method.name));
            }
            let ctx = |e: TgdError| TgdError::Config(format!("method {}: {e}", method.name));
            method.module.validate().map_err(ctx)?;
            method.resample.validate().map_err(ctx)?;
            PruneConfig::new(method.rho).map_err(ctx)?;
            let noise = self.noise_schedule(method).map_err(ctx)?;
            self.tempering_schedule(method, &noise).map_err(ctx)?;
        }
        Ok(())
    }

    pub fn noise_schedule(&self, method: &MethodSpec) -> Result<NoiseSchedule> {
        let s = &self.schedule;
        edm_noise_grid(method.outer_points.unwrap_or(s.points), s.s_max, s.s_min, s.curvature)
    }

    pub fn tempering_schedule(&self, method: &MethodSpec, noise: &NoiseSchedule) -> Result<TemperingSchedule> {
        match method.tempering {
            TemperingSpec::Uniform { lambda_r } => uniform_tempering(noise.stages(), lambda_r),
            TemperingSpec::NoiseDependent { lambda_r, alpha } => noise_dependent_tempering(noise, lambda_r, alpha),
            TemperingSpec::ConstantOne => Ok(TemperingSchedule::constant_one(noise.stages())),
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form, output section excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        let digest = Sha256::digest(canonical_json(&v).as_bytes());
        hex::encode(&digest[..8])
    }

    /// Number of result rows a sweep produces.
    pub fn cell_count(&self) -> usize {
        self.conditions * self.methods.len() * self.particles.len() * self.repetitions
    }
}

impl ObservationSpec {
    pub fn to_operator(&self) -> Operator {
        match self.operator {
            OperatorKind::AbsValue => Operator::AbsValue,
        }
    }
}

/// JSON with object keys sorted recursively.
fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                let mut out = serde_json::Map::new();
                for k in keys {
                    out.insert(k.clone(), sort(&m[k]));
                }
                Value::Object(out)
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    sort(v).to_string()
}
