//! Conditions, oracle references and the (condition × method × N × repetition) sweep.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TgdError};
use crate::metrics::{random_directions, ProjectedReference, SampleSet};
use crate::observation::Observation;
use crate::oracle::exact_posterior;
use crate::prior::{sample_prior_means, GaussianMixturePrior};
use crate::rng::{label_tag, SeedTree};
use crate::schedules::{NoiseSchedule, TemperingSchedule};
use crate::smc::{systematic_indices, PruneConfig, RunStreams, Sampler};

use super::config::{Algorithm, MethodSpec, RunConfig};

/// One test condition: a hidden clean point and its simulated observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub id: usize,
    pub x0: Vec<f64>,
    pub obs: Observation,
}

/// A method with its schedules resolved.
#[derive(Clone, Debug)]
pub struct PreparedMethod {
    pub spec: MethodSpec,
    pub noise: NoiseSchedule,
    pub temper: TemperingSchedule,
}

/// Everything fixed by the config and master seed before any sampler runs.
#[derive(Clone, Debug)]
pub struct Experiment {
    config: RunConfig,
    hash: String,
    root: SeedTree,
    prior: GaussianMixturePrior,
    conditions: Vec<Condition>,
    methods: Vec<PreparedMethod>,
}

/// Result of one sweep cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub condition_id: usize,
    pub method: String,
    pub n_particles: usize,
    pub repetition: usize,
    pub swd: f64,
    pub mean_swd: f64,
    pub ess_final: f64,
    pub samples_pooled: usize,
    pub wall_ms: f64,
    pub seed: u64,
    pub config_hash: String,
    /// `ok`, or the error kind when the cell failed.
    pub status: String,
}

/// Two-oracle distance for one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorRecord {
    pub condition_id: usize,
    pub floor_swd: f64,
    pub floor_mean_swd: f64,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub records: Vec<CellRecord>,
    pub floors: Vec<FloorRecord>,
}

/// Per-condition oracle data shared by every method.
#[derive(Clone, Debug)]
pub struct ConditionReference {
    pub reference: ProjectedReference,
    pub floor: FloorRecord,
}

fn tag(name: &str) -> u64 {
    label_tag(name)
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        let root = SeedTree::new(config.seed);
        let p = &config.prior;
        let means = match &p.means {
            Some(m) => m.clone(),
            None => sample_prior_means(p.dim, p.components, p.margin, &mut root.child(tag("prior")).rng())?,
        };
        let prior = GaussianMixturePrior::equally_weighted(means, p.tau)?;
        let conditions = (0..config.conditions)
            .map(|k| {
                let mut rng = root.path(&[tag("condition"), k as u64]).rng();
                let x0 = prior.sample(&mut rng);
                let obs = Observation::simulate(
                    config.observation.to_operator(),
                    &x0,
                    config.observation.sigma_y,
                    &mut rng,
                )?;
                Ok(Condition { id: k, x0, obs })
            })
            .collect::<Result<Vec<_>>>()?;
        let methods = config
            .methods
            .iter()
            .map(|m| {
                let noise = config.noise_schedule(m)?;
                let temper = config.tempering_schedule(m, &noise)?;
                Ok(PreparedMethod { spec: m.clone(), noise, temper })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, hash, root, prior, conditions, methods })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn prior(&self) -> &GaussianMixturePrior {
        &self.prior
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn methods(&self) -> &[PreparedMethod] {
        &self.methods
    }

    pub fn method(&self, name: &str) -> Option<&PreparedMethod> {
        self.methods.iter().find(|m| m.spec.name == name)
    }

    fn condition(&self, k: usize) -> Result<&Condition> {
        self.conditions
            .get(k)
            .ok_or_else(|| TgdError::param(format!("condition {k} out of range (have {})", self.conditions.len())))
    }

    /// `m` exact posterior draws for condition `k`. The first `oracle_samples` of
    /// these are the reference set used by the sweep.
    pub fn oracle_samples(&self, k: usize, m: usize) -> Result<Vec<Vec<f64>>> {
        let cond = self.condition(k)?;
        let post = exact_posterior(&self.prior, &cond.obs)?;
        let mut rng = self.root.path(&[tag("oracle"), k as u64]).rng();
        Ok(post.sample_n(m, &mut rng))
    }

    /// An independent oracle set for the two-oracle floor.
    fn floor_samples(&self, k: usize) -> Result<Vec<Vec<f64>>> {
        let cond = self.condition(k)?;
        let post = exact_posterior(&self.prior, &cond.obs)?;
        let mut rng = self.root.path(&[tag("floor"), k as u64]).rng();
        Ok(post.sample_n(self.config.metric.oracle_samples, &mut rng))
    }

    pub fn projections(&self, k: usize) -> Vec<Vec<f64>> {
        let mut rng = self.root.path(&[tag("projection"), k as u64]).rng();
        random_directions(self.prior.dim(), self.config.metric.n_proj, &mut rng)
    }

    pub fn condition_reference(&self, k: usize) -> Result<ConditionReference> {
        let oracle = SampleSet::new(self.oracle_samples(k, self.config.metric.oracle_samples)?)?;
        let reference = ProjectedReference::new(&oracle, self.projections(k))?;
        let d = reference.distances(&self.floor_samples(k)?, self.config.metric.p)?;
        Ok(ConditionReference {
            reference,
            floor: FloorRecord { condition_id: k, floor_swd: d.max, floor_mean_swd: d.mean },
        })
    }

    fn cell_root(&self, method: &str, k: usize, n: usize, rep: usize) -> SeedTree {
        self.root.path(&[tag("method"), tag(method), k as u64, n as u64, rep as u64])
    }

    /// Pooled, equal-weight clean samples from repeated independent runs.
    /// Returns the pooled points and the mean final ESS over runs.
    pub fn pooled_samples(
        &self,
        method: &PreparedMethod,
        k: usize,
        n: usize,
        rep: usize,
    ) -> Result<(Vec<Vec<f64>>, f64)> {
        let cond = self.condition(k)?;
        let cell = self.cell_root(&method.spec.name, k, n, rep);
        let target = self.config.metric.pooled_target;
        let sampler = Sampler {
            prior: &self.prior,
            obs: &cond.obs,
            noise: &method.noise,
            temper: &method.temper,
            module: &method.spec.module,
            policy: method.spec.resample,
        };
        let per_run: Vec<(Vec<Vec<f64>>, f64)> = match method.spec.algorithm {
            Algorithm::Tgd => {
                let runs = target.div_ceil(n);
                (0..runs)
                    .into_par_iter()
                    .map(|j| {
                        let streams = RunStreams::new(cell.path(&[tag("run"), j as u64]));
                        let out = sampler.run_tgd(n, &streams)?;
                        let ess = out.ess();
                        if n == 1 {
                            return Ok((out.samples, ess));
                        }
                        let u: f64 = cell.path(&[tag("pool"), j as u64]).rng().random();
                        let idx = systematic_indices(&out.weights(), u);
                        Ok((idx.into_iter().map(|i| out.samples[i].clone()).collect(), ess))
                    })
                    .collect::<Result<_>>()?
            }
            Algorithm::Atgd => {
                let prune = PruneConfig::new(method.spec.rho)?;
                (0..target)
                    .into_par_iter()
                    .map(|j| {
                        let streams = RunStreams::new(cell.path(&[tag("run"), j as u64]));
                        Ok((vec![sampler.run_atgd(n, prune, &streams)?.sample], 1.0))
                    })
                    .collect::<Result<_>>()?
            }
        };
        let ess_mean = per_run.iter().map(|r| r.1).sum::<f64>() / per_run.len() as f64;
        let mut pooled: Vec<Vec<f64>> = per_run.into_iter().flat_map(|r| r.0).collect();
        pooled.truncate(target);
        Ok((pooled, ess_mean))
    }

    pub fn run_cell(
        &self,
        method: &PreparedMethod,
        k: usize,
        n: usize,
        rep: usize,
        reference: &ProjectedReference,
    ) -> CellRecord {
        let start = Instant::now();
        let outcome = self
            .pooled_samples(method, k, n, rep)
            .and_then(|(pooled, ess)| Ok((reference.distances(&pooled, self.config.metric.p)?, ess, pooled.len())));
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut rec = CellRecord {
            condition_id: k,
            method: method.spec.name.clone(),
            n_particles: n,
            repetition: rep,
            swd: f64::NAN,
            mean_swd: f64::NAN,
            ess_final: f64::NAN,
            samples_pooled: 0,
            wall_ms,
            seed: self.cell_root(&method.spec.name, k, n, rep).key(),
            config_hash: self.hash.clone(),
            status: "ok".into(),
        };
        match outcome {
            Ok((d, ess, count)) => {
                rec.swd = d.max;
                rec.mean_swd = d.mean;
                rec.ess_final = ess;
                rec.samples_pooled = count;
            }
            Err(e) => rec.status = e.kind().to_string(),
        }
        rec
    }

    /// Every cell of the sweep, in (condition, method, N, repetition) order.
    pub fn sweep(&self) -> Result<SweepOutput> {
        self.sweep_with(|_| {})
    }

    /// As [`Self::sweep`], calling `progress` after each finished cell.
    pub fn sweep_with<F: Fn(&CellRecord) + Sync>(&self, progress: F) -> Result<SweepOutput> {
        let refs: Vec<ConditionReference> = (0..self.conditions.len())
            .into_par_iter()
            .map(|k| self.condition_reference(k))
            .collect::<Result<_>>()?;
        let mut jobs = Vec::with_capacity(self.config.cell_count());
        for k in 0..self.conditions.len() {
            for m in &self.methods {
                for &n in &self.config.particles {
                    for rep in 0..self.config.repetitions {
                        jobs.push((k, m, n, rep));
                    }
                }
            }
        }
        let records = jobs
            .into_par_iter()
            .map(|(k, m, n, rep)| {
                let rec = self.run_cell(m, k, n, rep, &refs[k].reference);
                progress(&rec);
                rec
            })
            .collect();
        Ok(SweepOutput { records, floors: refs.into_iter().map(|r| r.floor).collect() })
    }
}
