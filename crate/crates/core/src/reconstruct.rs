//! Stagewise reconstruction modules: maps from a noisy state `z` at level `s`
//! to a clean candidate `x0`, optionally pulled toward the observation with a
//! tempering exponent `λ`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TgdError};
use crate::numeric::norm;
use crate::observation::Observation;
use crate::oracle::build_sign_branch_posterior;
use crate::prior::GaussianMixturePrior;
use crate::rng::StreamRng;
use crate::schedules::edm_noise_grid;

/// Inner probability-flow ODE settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSettings {
    /// Euler steps from the request level down to `inner_s_min`.
    pub n_steps: usize,
    pub inner_s_min: f64,
    pub curvature: f64,
    /// Proposal smoothing: the guidance likelihood uses std `gamma·s + σ_y`.
    pub gamma: f64,
    /// Guidance increments are norm-clipped at `clip·s`; `None` disables clipping.
    pub clip: Option<f64>,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            n_steps: 1,
            inner_s_min: 0.01,
            curvature: 7.0,
            gamma: 0.8,
            clip: Some(1e3),
        }
    }
}

impl OdeSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(TgdError::param("inner ODE needs n_steps >= 1"));
        }
        if !(self.inner_s_min > 0.0 && self.inner_s_min.is_finite()) {
            return Err(TgdError::param("inner_s_min must be positive"));
        }
        if !(self.curvature > 0.0) {
            return Err(TgdError::param("inner curvature must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(TgdError::param("gamma must be non-negative"));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(TgdError::param("clip bound must be positive"));
            }
        }
        Ok(())
    }
}

/// Unadjusted Langevin settings. Step sizes are fractions of the local curvature
/// scale `(1/r² + λ/σ_y²)^{-1}` and decay linearly from `step_init` to `step_final`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangevinConfig {
    pub n_steps: usize,
    pub step_init: f64,
    pub step_final: f64,
    /// Clean-prior approximation std is `r_scale · s_start`.
    pub r_scale: f64,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            n_steps: 100,
            step_init: 0.2,
            step_final: 0.02,
            r_scale: 1.0,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_init > 0.0 && self.step_final > 0.0) {
            return Err(TgdError::param("Langevin step sizes must be positive"));
        }
        if self.step_final > self.step_init {
            return Err(TgdError::param("Langevin step_final must not exceed step_init"));
        }
        if !(self.r_scale > 0.0 && self.r_scale.is_finite()) {
            return Err(TgdError::param("r_scale must be positive"));
        }
        Ok(())
    }

    fn step(&self, t: usize) -> f64 {
        if self.n_steps <= 1 {
            return self.step_init;
        }
        let f = t as f64 / (self.n_steps - 1) as f64;
        self.step_init + f * (self.step_final - self.step_init)
    }
}

/// One reconstruction call.
#[derive(Clone, Copy, Debug)]
pub struct ReconstructionRequest<'a> {
    pub z: &'a [f64],
    pub s_start: f64,
    pub lambda: f64,
    pub obs: &'a Observation,
    pub ode: &'a OdeSettings,
}

impl ReconstructionRequest<'_> {
    fn validate(&self, prior: &GaussianMixturePrior) -> Result<()> {
        if !(self.s_start > 0.0 && self.s_start.is_finite()) {
            return Err(TgdError::param(format!("s_start must be positive, got {}", self.s_start)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(TgdError::param(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.z.len() != prior.dim() {
            return Err(TgdError::param("state dimension differs from prior dimension"));
        }
        self.ode.validate()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Sensitivity {
    None,
    Jacobian,
    Identity,
}

fn clip_increment(inc: &mut [f64], bound: Option<f64>, s: f64) {
    if let Some(c) = bound {
        let n = norm(inc);
        let cap = c * s;
        if n > cap {
            let f = cap / n;
            inc.iter_mut().for_each(|v| *v *= f);
        }
    }
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TgdError::numerical(format!("non-finite state in {what}")))
    }
}

/// Descending inner levels from `s_start` to the floor. Empty integration when
/// `s_start` is already at or below the floor.
fn inner_levels(s_start: f64, ode: &OdeSettings) -> Result<Vec<f64>> {
    if s_start <= ode.inner_s_min {
        return Ok(vec![s_start]);
    }
    if ode.n_steps == 1 {
        // The grid's endpoints are exact, so a single step needs no interpolation.
        return Ok(vec![s_start, ode.inner_s_min]);
    }
    let grid = edm_noise_grid(ode.n_steps + 1, s_start, ode.inner_s_min, ode.curvature)?;
    Ok(grid.sampling_order().collect())
}

fn guided_ode(
    prior: &GaussianMixturePrior,
    req: &ReconstructionRequest<'_>,
    lambda: f64,
    mode: Sensitivity,
) -> Result<Vec<f64>> {
    req.validate(prior)?;
    let levels = inner_levels(req.s_start, req.ode)?;
    let guided = mode != Sensitivity::None && lambda > 0.0;
    let mut x = req.z.to_vec();
    for w in levels.windows(2) {
        let (s, s_next) = (w[0], w[1]);
        let (xhat, geom) = prior.denoise(&x, s);
        let guidance = if guided {
            let g = req.obs.guidance_gradient(&xhat, req.obs.proposal_std(s, req.ode.gamma));
            let mut gi = match mode {
                Sensitivity::Jacobian => prior.jacobian_t_vec(&x, s, &geom, &g),
                _ => g,
            };
            let c = (s - s_next) * s * lambda;
            gi.iter_mut().for_each(|v| *v *= c);
            clip_increment(&mut gi, req.ode.clip, s);
            Some(gi)
        } else {
            None
        };
        let ds = s_next - s;
        for (j, (xi, hi)) in x.iter_mut().zip(&xhat).enumerate() {
            let drift = ds * (*xi - hi) / s;
            *xi += match &guidance {
                Some(gi) => drift + gi[j],
                None => drift,
            };
        }
        check_finite(&x, "inner ODE")?;
    }
    let s_last = *levels.last().expect("at least one level");
    let out = prior.denoise(&x, s_last).0;
    check_finite(&out, "inner ODE")?;
    Ok(out)
}

/// Unguided Euler probability-flow reconstruction.
pub fn ode_reconstruct_uncond(prior: &GaussianMixturePrior, req: &ReconstructionRequest<'_>) -> Result<Vec<f64>> {
    guided_ode(prior, req, 0.0, Sensitivity::None)
}

/// Plug-in guided reconstruction through the exact denoiser Jacobian.
pub fn dps_reconstruct(prior: &GaussianMixturePrior, req: &ReconstructionRequest<'_>) -> Result<Vec<f64>> {
    guided_ode(prior, req, req.lambda, Sensitivity::Jacobian)
}

/// Clean-space guidance with identity sensitivity.
pub fn mpgd_reconstruct(prior: &GaussianMixturePrior, req: &ReconstructionRequest<'_>) -> Result<Vec<f64>> {
    guided_ode(prior, req, req.lambda, Sensitivity::Identity)
}

/// Unadjusted Langevin on `−‖x − center‖²/(2r²) + λ log p(y|x)` started at `init`.
fn langevin(
    obs: &Observation,
    center: &[f64],
    init: Vec<f64>,
    r: f64,
    lambda: f64,
    lang: &LangevinConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let sy2 = obs.sigma_y() * obs.sigma_y();
    let scale = 1.0 / (1.0 / (r * r) + lambda / sy2);
    let inv_r2 = 1.0 / (r * r);
    let mut x = init;
    for t in 0..lang.n_steps {
        let eta = lang.step(t) * scale;
        let g = if lambda > 0.0 {
            obs.guidance_gradient(&x, obs.sigma_y())
        } else {
            vec![0.0; x.len()]
        };
        let noise_sd = (2.0 * eta).sqrt();
        for ((xi, ci), gi) in x.iter_mut().zip(center).zip(g) {
            let grad = -(*xi - ci) * inv_r2 + lambda * gi;
            let e: f64 = StandardNormal.sample(rng);
            *xi += eta * grad + noise_sd * e;
        }
        check_finite(&x, "Langevin correction")?;
    }
    Ok(x)
}

/// Unconditional reconstruction followed by a clean-space Langevin correction.
pub fn daps_reconstruct(
    prior: &GaussianMixturePrior,
    req: &ReconstructionRequest<'_>,
    lang: &LangevinConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    lang.validate()?;
    let xbar = ode_reconstruct_uncond(prior, req)?;
    let r = lang.r_scale * req.s_start;
    langevin(req.obs, &xbar, xbar.clone(), r, req.lambda, lang, rng)
}

/// Guided reconstruction at exponent `nu`, then a Langevin correction toward the
/// full tempered target around the unconditional reconstruction.
pub fn hybrid_reconstruct(
    prior: &GaussianMixturePrior,
    req: &ReconstructionRequest<'_>,
    nu: f64,
    lang: &LangevinConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    if !(0.0..=req.lambda).contains(&nu) {
        return Err(TgdError::param(format!("nu must lie in [0, {}], got {nu}", req.lambda)));
    }
    lang.validate()?;
    let guided = guided_ode(prior, req, nu, Sensitivity::Jacobian)?;
    if lang.n_steps == 0 {
        return Ok(guided);
    }
    let xbar = if nu == 0.0 {
        guided.clone()
    } else {
        ode_reconstruct_uncond(prior, req)?
    };
    let r = lang.r_scale * req.s_start;
    langevin(req.obs, &xbar, guided, r, req.lambda, lang, rng)
}

/// Exact draw from `p_s(x0 | z) · p(y | x0)^λ` for the absolute-value model.
pub fn exact_tempered_reconstruct(
    prior: &GaussianMixturePrior,
    z: &[f64],
    s: f64,
    lambda: f64,
    obs: &Observation,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(TgdError::param(format!("lambda must be >= 0, got {lambda}")));
    }
    if !obs.is_abs_value() {
        return Err(TgdError::param("exact reconstruction requires the absolute-value operator"));
    }
    let post = prior.posterior_mixture_given_z(z, s)?;
    if lambda == 0.0 {
        return Ok(post.sample(rng));
    }
    let sbp = build_sign_branch_posterior(&post, obs.y(), obs.sigma_y() / lambda.sqrt())?;
    Ok(sbp.sample(rng))
}

/// Config-level choice of reconstruction module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModuleSpec {
    Uncond {
        #[serde(default)]
        ode: OdeSettings,
    },
    Dps {
        #[serde(default)]
        ode: OdeSettings,
    },
    Mpgd {
        #[serde(default)]
        ode: OdeSettings,
    },
    Daps {
        #[serde(default)]
        ode: OdeSettings,
        #[serde(default)]
        langevin: LangevinConfig,
    },
    Hybrid {
        #[serde(default)]
        ode: OdeSettings,
        /// `nu = nu_fraction · λ`.
        #[serde(default = "half")]
        nu_fraction: f64,
        #[serde(default)]
        langevin: LangevinConfig,
    },
    Exact,
}

fn half() -> f64 {
    0.5
}

/// Anything that maps `(z, s, λ)` to a clean candidate.
pub trait Reconstructor: Sync {
    fn reconstruct(
        &self,
        prior: &GaussianMixturePrior,
        obs: &Observation,
        z: &[f64],
        s: f64,
        lambda: f64,
        rng: &mut StreamRng,
    ) -> Result<Vec<f64>>;
}

impl ModuleSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModuleSpec::Uncond { .. } => "uncond",
            ModuleSpec::Dps { .. } => "dps",
            ModuleSpec::Mpgd { .. } => "mpgd",
            ModuleSpec::Daps { .. } => "daps",
            ModuleSpec::Hybrid { .. } => "hybrid",
            ModuleSpec::Exact => "exact",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModuleSpec::Uncond { ode } | ModuleSpec::Dps { ode } | ModuleSpec::Mpgd { ode } => ode.validate(),
            ModuleSpec::Daps { ode, langevin } => {
                ode.validate()?;
                langevin.validate()
            }
            ModuleSpec::Hybrid { ode, nu_fraction, langevin } => {
                ode.validate()?;
                langevin.validate()?;
                if !(0.0..=1.0).contains(nu_fraction) {
                    return Err(TgdError::param("nu_fraction must lie in [0, 1]"));
                }
                Ok(())
            }
            ModuleSpec::Exact => Ok(()),
        }
    }
}

impl Reconstructor for ModuleSpec {
    fn reconstruct(
        &self,
        prior: &GaussianMixturePrior,
        obs: &Observation,
        z: &[f64],
        s: f64,
        lambda: f64,
        rng: &mut StreamRng,
    ) -> Result<Vec<f64>> {
        let req = |ode| ReconstructionRequest { z, s_start: s, lambda, obs, ode };
        match self {
            ModuleSpec::Uncond { ode } => ode_reconstruct_uncond(prior, &req(ode)),
            ModuleSpec::Dps { ode } => dps_reconstruct(prior, &req(ode)),
            ModuleSpec::Mpgd { ode } => mpgd_reconstruct(prior, &req(ode)),
            ModuleSpec::Daps { ode, langevin } => daps_reconstruct(prior, &req(ode), langevin, rng),
            ModuleSpec::Hybrid { ode, nu_fraction, langevin } => {
                hybrid_reconstruct(prior, &req(ode), nu_fraction * lambda, langevin, rng)
            }
            ModuleSpec::Exact => exact_tempered_reconstruct(prior, z, s, lambda, obs, rng),
        }
    }
}
