//! Annealed SMC over tempered clean-space posteriors (TGD) and its pruned,
//! single-trajectory variant (A-TGD).

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TgdError};
use crate::numeric::{normalize_log_weights, weights_from_log};
use crate::observation::{argmax_likelihood, Observation};
use crate::prior::{forward_noise, GaussianMixturePrior};
use crate::reconstruct::Reconstructor;
use crate::rng::{SeedTree, StreamRng};
use crate::schedules::{NoiseSchedule, TemperingSchedule};

const INIT: u64 = 1;
const RECON: u64 = 2;
const RESAMPLE: u64 = 3;
const RENOISE: u64 = 4;
const PRUNE: u64 = 5;

/// Substream addresses for one sampler run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunStreams {
    root: SeedTree,
}

impl RunStreams {
    pub fn new(root: SeedTree) -> Self {
        Self { root }
    }

    pub fn root(&self) -> SeedTree {
        self.root
    }

    pub fn init(&self, i: usize) -> StreamRng {
        self.root.path(&[INIT, i as u64]).rng()
    }

    pub fn recon(&self, stage: usize, i: usize) -> StreamRng {
        self.root.path(&[RECON, stage as u64, i as u64]).rng()
    }

    pub fn resample(&self, stage: usize) -> StreamRng {
        self.root.path(&[RESAMPLE, stage as u64]).rng()
    }

    pub fn renoise(&self, stage: usize, i: usize) -> StreamRng {
        self.root.path(&[RENOISE, stage as u64, i as u64]).rng()
    }

    pub fn prune(&self, stage: usize, i: usize) -> StreamRng {
        self.root.path(&[PRUNE, stage as u64, i as u64]).rng()
    }
}

/// Particles at one stage of the outer loop.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub z: Vec<Vec<f64>>,
    pub x0: Option<Vec<Vec<f64>>>,
    pub log_w: Vec<f64>,
    pub stage: usize,
    pub level: f64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        weights_from_log(&self.log_w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Systematic,
    Multinomial,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    Always,
    Never,
    /// Resample when `ESS < theta · N`.
    Ess { theta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResamplePolicy {
    pub scheme: Scheme,
    pub trigger: Trigger,
}

impl Default for ResamplePolicy {
    fn default() -> Self {
        Self { scheme: Scheme::Systematic, trigger: Trigger::Always }
    }
}

impl ResamplePolicy {
    pub fn never() -> Self {
        Self { scheme: Scheme::None, trigger: Trigger::Never }
    }

    pub fn validate(&self) -> Result<()> {
        if let Trigger::Ess { theta } = self.trigger {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(TgdError::param(format!("ESS threshold must lie in (0, 1], got {theta}")));
            }
        }
        Ok(())
    }

    fn fires(&self, ess_value: f64, n: usize) -> bool {
        if self.scheme == Scheme::None {
            return false;
        }
        match self.trigger {
            Trigger::Always => true,
            Trigger::Never => false,
            Trigger::Ess { theta } => ess_value < theta * n as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub rho: f64,
}

impl PruneConfig {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(TgdError::param(format!("rho must lie in [0, 1], got {rho}")));
        }
        Ok(Self { rho })
    }
}

/// Number of populated transitions before pruning: `min{R, max{1, ⌈ρR⌉}}`.
pub fn prune_stage_count(rho: f64, stages: usize) -> usize {
    if stages == 0 {
        return 0;
    }
    let raw = rho * stages as f64;
    let nearest = raw.round();
    // Guard against ρR landing a hair above an integer through rounding.
    let ceil = if (raw - nearest).abs() < 1e-9 { nearest } else { raw.ceil() };
    (ceil as usize).clamp(1, stages)
}

/// Draw `N` states from the noisy prior at level `s` with uniform weights.
pub fn init_particles(
    prior: &GaussianMixturePrior,
    n: usize,
    s: f64,
    stage: usize,
    streams: &RunStreams,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(TgdError::param("particle count must be at least 1"));
    }
    if !(s > 0.0) {
        return Err(TgdError::param(format!("initial level must be positive, got {s}")));
    }
    let z = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.init(i);
            let x0 = prior.sample(&mut rng);
            forward_noise(&x0, s, &mut rng)
        })
        .collect();
    Ok(ParticleEnsemble {
        z,
        x0: None,
        log_w: vec![-(n as f64).ln(); n],
        stage,
        level: s,
    })
}

/// `log_w_i += (λ_next − λ_prev) · log p(y | x0_i)`, then normalize.
/// A zero increment leaves the weights untouched.
pub fn incremental_log_weights(
    ens: &mut ParticleEnsemble,
    obs: &Observation,
    lambda_prev: f64,
    lambda_next: f64,
) -> Result<()> {
    if lambda_next < lambda_prev {
        return Err(TgdError::param("tempering exponent must not decrease"));
    }
    let delta = lambda_next - lambda_prev;
    if delta == 0.0 {
        return Ok(());
    }
    let x0 = ens
        .x0
        .as_ref()
        .ok_or_else(|| TgdError::param("weighting requires reconstructed candidates"))?;
    for (lw, x) in ens.log_w.iter_mut().zip(x0) {
        let ll = obs.log_likelihood(x)?;
        *lw += if ll.is_nan() { f64::NEG_INFINITY } else { delta * ll };
    }
    normalize_log_weights(&mut ens.log_w).ok_or(TgdError::DegenerateEnsemble { stage: ens.stage })?;
    Ok(())
}

/// Effective sample size `(Σw)² / Σw²` from log-weights.
pub fn ess(log_w: &[f64]) -> f64 {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let (s1, s2) = log_w.iter().fold((0.0, 0.0), |(a, b), lw| {
        let w = (lw - max).exp();
        (a + w, b + w * w)
    });
    s1 * s1 / s2
}

/// Systematic selection for a fixed offset `u ∈ [0, 1)`: comb points `(i + u)/N`.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0] / total;
    let mut j = 0;
    for i in 0..n {
        let p = (i as f64 + u) / n as f64;
        while cum <= p && j + 1 < n {
            j += 1;
            cum += weights[j] / total;
        }
        out.push(j);
    }
    out
}

/// Independent categorical selection.
pub fn multinomial_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w / total;
        cdf.push(acc);
    }
    let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.partition_point(|c| *c <= u).min(last)
        })
        .collect()
}

fn select(ens: &mut ParticleEnsemble, idx: &[usize]) {
    ens.z = idx.iter().map(|&i| ens.z[i].clone()).collect();
    if let Some(x0) = ens.x0.take() {
        ens.x0 = Some(idx.iter().map(|&i| x0[i].clone()).collect());
    }
    let n = idx.len();
    ens.log_w = vec![-(n as f64).ln(); n];
}

pub fn systematic_resample<R: Rng + ?Sized>(ens: &mut ParticleEnsemble, rng: &mut R) {
    let u: f64 = rng.random();
    let idx = systematic_indices(&ens.weights(), u);
    select(ens, &idx);
}

pub fn multinomial_resample<R: Rng + ?Sized>(ens: &mut ParticleEnsemble, rng: &mut R) {
    let idx = multinomial_indices(&ens.weights(), ens.len(), rng);
    select(ens, &idx);
}

/// Per-stage diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: usize,
    pub level: f64,
    pub lambda: f64,
    pub lambda_next: f64,
    pub ess_before: f64,
    pub ess_after: f64,
    pub resampled: bool,
    pub loglik_min: f64,
    pub loglik_mean: f64,
    pub loglik_max: f64,
}

pub fn write_trace_jsonl<W: Write>(mut w: W, trace: &[StageTrace]) -> Result<()> {
    for t in trace {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Everything a run needs besides the particle count and the streams.
#[derive(Clone, Copy)]
pub struct Sampler<'a> {
    pub prior: &'a GaussianMixturePrior,
    pub obs: &'a Observation,
    pub noise: &'a NoiseSchedule,
    pub temper: &'a TemperingSchedule,
    pub module: &'a dyn Reconstructor,
    pub policy: ResamplePolicy,
}

/// Weighted clean particles returned by [`Sampler::run_tgd`].
#[derive(Clone, Debug, PartialEq)]
pub struct TgdOutput {
    pub samples: Vec<Vec<f64>>,
    pub log_w: Vec<f64>,
    pub trace: Vec<StageTrace>,
}

impl TgdOutput {
    pub fn ess(&self) -> f64 {
        ess(&self.log_w)
    }

    pub fn weights(&self) -> Vec<f64> {
        weights_from_log(&self.log_w)
    }
}

/// Single clean sample returned by [`Sampler::run_atgd`].
#[derive(Clone, Debug, PartialEq)]
pub struct AtgdOutput {
    pub sample: Vec<f64>,
    /// Stage at which the population was pruned.
    pub prune_stage: usize,
    /// Index of the retained particle.
    pub survivor: usize,
    pub trace: Vec<StageTrace>,
}

impl<'a> Sampler<'a> {
    pub fn validate(&self) -> Result<()> {
        if self.noise.stages() != self.temper.stages() {
            return Err(TgdError::param(format!(
                "noise schedule has {} stages, tempering schedule has {}",
                self.noise.stages(),
                self.temper.stages()
            )));
        }
        if self.prior.dim() != self.obs.signal_dim() {
            return Err(TgdError::param("prior and observation dimensions differ"));
        }
        self.policy.validate()
    }

    fn reconstruct_all(&self, ens: &ParticleEnsemble, stream: impl Fn(usize) -> StreamRng + Sync) -> Result<Vec<Vec<f64>>> {
        let r = ens.stage;
        let s = self.noise.level(r);
        let lambda = self.temper.exponent(r);
        ens.z
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                let mut rng = stream(i);
                self.module.reconstruct(self.prior, self.obs, z, s, lambda, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_stage(r))
    }

    /// Reconstruct, reweight and (if the policy fires) resample at stage
    /// `r = ens.stage ≥ 1`. The returned ensemble carries the selected candidates
    /// in `x0` and is still at stage `r`.
    pub fn reweight(&self, mut ens: ParticleEnsemble, streams: &RunStreams) -> Result<(ParticleEnsemble, StageTrace)> {
        let r = ens.stage;
        if r == 0 {
            return Err(TgdError::param("no transition below stage 0"));
        }
        let x0 = self.reconstruct_all(&ens, |i| streams.recon(r, i))?;
        let (lambda, lambda_next) = (self.temper.exponent(r), self.temper.exponent(r - 1));
        let lls: Vec<f64> = x0.iter().map(|x| self.obs.log_likelihood(x)).collect::<Result<_>>()?;
        ens.x0 = Some(x0);

        let n = ens.len();
        let nontrivial = lambda_next > lambda && n > 1;
        if nontrivial {
            incremental_log_weights(&mut ens, self.obs, lambda, lambda_next).map_err(|e| e.at_stage(r))?;
        }
        let ess_before = ess(&ens.log_w);
        let resampled = nontrivial && self.policy.fires(ess_before, n);
        if resampled {
            let mut rng = streams.resample(r);
            match self.policy.scheme {
                Scheme::Systematic => systematic_resample(&mut ens, &mut rng),
                Scheme::Multinomial => multinomial_resample(&mut ens, &mut rng),
                Scheme::None => {}
            }
        }
        let trace = StageTrace {
            stage: r,
            level: self.noise.level(r),
            lambda,
            lambda_next,
            ess_before,
            ess_after: ess(&ens.log_w),
            resampled,
            loglik_min: lls.iter().copied().fold(f64::INFINITY, f64::min),
            loglik_mean: lls.iter().sum::<f64>() / lls.len() as f64,
            loglik_max: lls.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        Ok((ens, trace))
    }

    /// Re-noise the candidates of a reweighted ensemble to level `s_{r−1}`, drawing
    /// particle `i`'s noise from `stream(i)`. Weights are carried over untouched.
    pub fn propagate(
        &self,
        mut ens: ParticleEnsemble,
        stream: impl Fn(usize) -> StreamRng + Sync,
    ) -> Result<ParticleEnsemble> {
        let r = ens.stage;
        if r == 0 {
            return Err(TgdError::param("no transition below stage 0"));
        }
        let x0 = ens
            .x0
            .take()
            .ok_or_else(|| TgdError::param("propagation requires reconstructed candidates"))?;
        let s_next = self.noise.level(r - 1);
        ens.z = x0
            .par_iter()
            .enumerate()
            .map(|(i, x)| forward_noise(x, s_next, &mut stream(i)))
            .collect();
        ens.stage = r - 1;
        ens.level = s_next;
        Ok(ens)
    }

    /// One outer transition from stage `r = ens.stage ≥ 1` to `r − 1`.
    pub fn tgd_stage(&self, ens: ParticleEnsemble, streams: &RunStreams) -> Result<(ParticleEnsemble, StageTrace)> {
        let r = ens.stage;
        let (ens, trace) = self.reweight(ens, streams)?;
        let ens = self.propagate(ens, |i| streams.renoise(r, i))?;
        Ok((ens, trace))
    }

    /// Full TGD run: initialize at `s_R`, `R` transitions, then a terminal reconstruction.
    pub fn run_tgd(&self, n: usize, streams: &RunStreams) -> Result<TgdOutput> {
        self.validate()?;
        let big_r = self.noise.stages();
        let mut ens = init_particles(self.prior, n, self.noise.s_max(), big_r, streams)?;
        let mut trace = Vec::with_capacity(big_r);
        while ens.stage > 0 {
            let (next, t) = self.tgd_stage(ens, streams)?;
            ens = next;
            trace.push(t);
        }
        let samples = self.reconstruct_all(&ens, |i| streams.recon(0, i))?;
        Ok(TgdOutput { samples, log_w: ens.log_w, trace })
    }

    /// A-TGD: populated transitions down to the pruning stage, keep the particle whose
    /// reconstruction best explains `y`, then continue with that one trajectory.
    pub fn run_atgd(&self, n: usize, prune: PruneConfig, streams: &RunStreams) -> Result<AtgdOutput> {
        self.validate()?;
        let big_r = self.noise.stages();
        let k = prune_stage_count(prune.rho, big_r);
        let mut ens = init_particles(self.prior, n, self.noise.s_max(), big_r, streams)?;
        let mut trace = Vec::with_capacity(big_r);
        for _ in 0..k {
            let (next, t) = self.tgd_stage(ens, streams)?;
            ens = next;
            trace.push(t);
        }
        let prune_stage = ens.stage;
        let survivor = if ens.len() == 1 {
            0
        } else {
            let cands = self.reconstruct_all(&ens, |i| streams.prune(prune_stage, i))?;
            argmax_likelihood(self.obs, &cands)?
        };

        let mut z = ens.z.swap_remove(survivor);
        let mut r = prune_stage;
        while r > 0 {
            let s = self.noise.level(r);
            let lambda = self.temper.exponent(r);
            let x0 = self
                .module
                .reconstruct(self.prior, self.obs, &z, s, lambda, &mut streams.recon(r, survivor))
                .map_err(|e| e.at_stage(r))?;
            z = forward_noise(&x0, self.noise.level(r - 1), &mut streams.renoise(r, survivor));
            r -= 1;
        }
        let sample = self
            .module
            .reconstruct(
                self.prior,
                self.obs,
                &z,
                self.noise.level(0),
                self.temper.exponent(0),
                &mut streams.recon(0, survivor),
            )
            .map_err(|e| e.at_stage(0))?;
        Ok(AtgdOutput { sample, prune_stage, survivor, trace })
    }
}
