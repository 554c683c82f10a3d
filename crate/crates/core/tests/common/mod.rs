//! Checks shared by the integration tests and the acceptance runner. Each check
//! takes its sizes as arguments so the integration tests can run small versions.

#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use tgd::harness::config::RunConfig;
use tgd::harness::output::{aggregate, results_without_timing, AggregateRow};
use tgd::harness::run::{CellRecord, Experiment};
use tgd::metrics::{max_sliced_wasserstein, SampleSet};
use tgd::numeric::log_normal_pdf;
use tgd::observation::{argmin_measurement_error, Observation};
use tgd::oracle::{exact_posterior, grid_from_log_density, grid_posterior, GridSpec};
use tgd::prior::{forward_noise, GaussianMixturePrior};
use tgd::reconstruct::{LangevinConfig, ModuleSpec, OdeSettings, Reconstructor};
use tgd::rng::SeedTree;
use tgd::schedules::{
    edm_noise_grid, noise_dependent_tempering, uniform_tempering, NoiseSchedule, TemperingSchedule,
};
use tgd::smc::{
    ess, incremental_log_weights, init_particles, multinomial_indices, prune_stage_count, systematic_indices,
    systematic_resample, ParticleEnsemble, PruneConfig, ResamplePolicy, RunStreams, Sampler,
};

/// Outcome of one check: pass flag plus a one-line summary of the numbers.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }

    pub fn all(parts: Vec<Outcome>) -> Self {
        let passed = parts.iter().all(|p| p.passed);
        let detail = parts.iter().map(|p| p.detail.as_str()).collect::<Vec<_>>().join("; ");
        Self { passed, detail }
    }

    pub fn assert(&self) {
        assert!(self.passed, "{}", self.detail);
    }
}

/// The default experiment: shared prior and the standard conditions.
pub fn default_experiment() -> Experiment {
    Experiment::new(RunConfig::default()).expect("default config is valid")
}

pub fn dps_module() -> ModuleSpec {
    ModuleSpec::Dps { ode: OdeSettings::default() }
}

pub fn daps_module() -> ModuleSpec {
    ModuleSpec::Daps { ode: OdeSettings::default(), langevin: LangevinConfig { n_steps: 10, ..Default::default() } }
}

// ---------------------------------------------------------------- prior

/// Worst relative error of the analytic score of `p_s` against central
/// differences of `log p_s`, over `n` points drawn from `p_s` per level.
pub fn score_vs_finite_differences(prior: &GaussianMixturePrior, levels: &[f64], n: usize, seed: u64) -> Outcome {
    let mut worst = 0.0f64;
    for (li, &s) in levels.iter().enumerate() {
        let noised = prior.noised(s);
        let h = 1e-4 * noised.var().sqrt();
        let mut rng = SeedTree::new(seed).path(&[li as u64]).rng();
        for _ in 0..n {
            let x = forward_noise(&prior.sample(&mut rng), s, &mut rng);
            let g = noised.score(&x);
            let mut err2 = 0.0;
            for j in 0..x.len() {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[j] += h;
                b[j] -= h;
                let fd = (noised.log_pdf(&a) - noised.log_pdf(&b)) / (2.0 * h);
                err2 += (fd - g[j]).powi(2);
            }
            let scale = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            worst = worst.max(err2.sqrt() / scale);
        }
    }
    Outcome::new(worst < 1e-5, format!("score max rel err {worst:.2e} (tol 1e-5)"))
}

fn log_conditional<'a>(prior: &'a GaussianMixturePrior, z: &[f64], s: f64) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    let z = z.to_vec();
    move |x: &[f64]| prior.log_pdf(x) + x.iter().zip(&z).map(|(xi, zi)| log_normal_pdf(*zi, *xi, s * s)).sum::<f64>()
}

/// Random `(z, s)` pairs with `s` log-uniform on `[0.01, 80]` and `z ~ p_s`.
pub fn random_pairs(prior: &GaussianMixturePrior, n: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let mut rng = SeedTree::new(seed).rng();
    (0..n)
        .map(|_| {
            let s = (0.01f64.ln() + rng.random::<f64>() * (80.0f64.ln() - 0.01f64.ln())).exp();
            (forward_noise(&prior.sample(&mut rng), s, &mut rng), s)
        })
        .collect()
}

/// Tweedie denoiser against the mean of a grid discretization of `p(x0 | z)`.
pub fn denoiser_vs_grid(prior: &GaussianMixturePrior, pairs: &[(Vec<f64>, f64)]) -> Outcome {
    let spec = GridSpec::default();
    let mut worst = 0.0f64;
    for (z, s) in pairs {
        let grid = grid_from_log_density(&spec, log_conditional(prior, z, *s)).expect("grid");
        let want = grid.mean();
        let got = prior.denoised_mean(z, *s).unwrap();
        for j in 0..2 {
            worst = worst.max((got[j] - want[j]).abs());
        }
    }
    Outcome::new(worst < 1e-6, format!("denoiser vs grid mean max abs err {worst:.2e} (tol 1e-6)"))
}

/// Closed-form `p_s(x0 | z)` density against the grid-normalized density at
/// points drawn from the conditional itself.
pub fn conditional_density_vs_grid(prior: &GaussianMixturePrior, pairs: &[(Vec<f64>, f64)], points: usize) -> Outcome {
    let spec = GridSpec::default();
    let mut worst = 0.0f64;
    for (pi, (z, s)) in pairs.iter().enumerate() {
        let f = log_conditional(prior, z, *s);
        let grid = grid_from_log_density(&spec, &f).expect("grid");
        let post = prior.posterior_mixture_given_z(z, *s).unwrap();
        let mut rng = SeedTree::new(pi as u64).rng();
        for _ in 0..points {
            let x = post.sample(&mut rng);
            let rel = ((post.log_pdf(&x) - (f(&x) - grid.log_normalizer())).exp() - 1.0).abs();
            worst = worst.max(rel);
        }
    }
    Outcome::new(worst < 1e-8, format!("conditional density vs grid max rel err {worst:.2e} (tol 1e-8)"))
}

// ---------------------------------------------------------------- oracle

/// Sign-branch sampler against the grid oracle on one condition: the distance
/// must sit below `slack` times the `q`-quantile of `floor_reps` grid-vs-grid
/// distances.
/// Also checks that both give the same component weights (TV < 1e-3).
pub fn oracle_vs_grid(
    prior: &GaussianMixturePrior,
    obs: &Observation,
    n: usize,
    n_proj: usize,
    floor_reps: usize,
    q: f64,
    slack: f64,
    seed: u64,
) -> Outcome {
    let sbp = exact_posterior(prior, obs).unwrap();
    let grid = grid_posterior(prior, obs, &GridSpec::default()).unwrap();
    let root = SeedTree::new(seed);
    let dist = |a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, i: u64| {
        let mut rng = root.path(&[3, i]).rng();
        max_sliced_wasserstein(&SampleSet::new(a).unwrap(), &SampleSet::new(b).unwrap(), n_proj, 2.0, &mut rng)
            .unwrap()
    };
    let exact = sbp.sample_n(n, &mut root.path(&[1]).rng());
    let gridded = grid.sample_n(n, &mut root.path(&[2]).rng());
    let d = dist(exact, gridded, 0);
    let mut floor: Vec<f64> = (0..floor_reps)
        .into_par_iter()
        .map(|i| {
            let a = grid.sample_n(n, &mut root.path(&[4, i as u64]).rng());
            let b = grid.sample_n(n, &mut root.path(&[5, i as u64]).rng());
            dist(a, b, 1 + i as u64)
        })
        .collect();
    floor.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * floor_reps as f64).ceil() as usize).clamp(1, floor_reps) - 1;
    let thresh = slack * floor[idx];
    let gw = grid.component_weights(prior.mixture());
    let tv = 0.5 * gw.iter().zip(sbp.component_weights()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Outcome::new(
        d < thresh && tv < 1e-3,
        format!("swd {d:.2e} vs {slack} x floor q{q} {thresh:.2e}, weight TV {tv:.1e}"),
    )
}

/// Prior symmetric under both coordinate reflections, observed at `|y|` off
/// the axes: the four sign branches must carry equal mass.
pub fn four_mode_symmetry() -> Outcome {
    let means = vec![vec![0.5, 0.5], vec![-0.5, 0.5], vec![0.5, -0.5], vec![-0.5, -0.5]];
    let prior = GaussianMixturePrior::equally_weighted(means, 0.1).unwrap();
    let obs = Observation::abs_value(vec![0.45, 0.55], 0.05).unwrap();
    let analytic = exact_posterior(&prior, &obs).unwrap().orthant_masses();
    let grid = grid_posterior(&prior, &obs, &GridSpec::default()).unwrap();
    let gridded: Vec<f64> = [(true, true), (false, true), (true, false), (false, false)]
        .iter()
        .map(|&(px, py)| grid.mass_where(|x| (x[0] > 0.0) == px && (x[1] > 0.0) == py))
        .collect();
    let spread = |m: &[f64]| {
        let hi = m.iter().copied().fold(f64::MIN, f64::max);
        let lo = m.iter().copied().fold(f64::MAX, f64::min);
        (hi - lo) / lo
    };
    let (a, g) = (spread(&analytic), spread(&gridded));
    let sum: f64 = analytic.iter().sum();
    Outcome::new(
        a < 0.01 && g < 0.01 && (sum - 1.0).abs() < 1e-12,
        format!("four-mode pairwise spread analytic {a:.1e}, grid {g:.1e} (tol 1%)"),
    )
}

// ---------------------------------------------------------------- reductions

pub struct Fixture {
    pub prior: GaussianMixturePrior,
    pub obs: Observation,
    pub noise: NoiseSchedule,
}

pub fn fixture(points: usize) -> Fixture {
    let exp = default_experiment();
    Fixture {
        prior: exp.prior().clone(),
        obs: exp.conditions()[0].obs.clone(),
        noise: edm_noise_grid(points, 80.0, 0.002, 7.0).unwrap(),
    }
}

fn sampler<'a>(f: &'a Fixture, temper: &'a TemperingSchedule, module: &'a dyn Reconstructor, policy: ResamplePolicy) -> Sampler<'a> {
    Sampler { prior: &f.prior, obs: &f.obs, noise: &f.noise, temper, module, policy }
}

/// R = 0: TGD is one module call on the initial state, under the same streams.
pub fn reduction_single_stage(seed: u64) -> Outcome {
    let f = Fixture { noise: edm_noise_grid(1, 0.5, 0.5, 7.0).unwrap(), ..fixture(2) };
    let temper = TemperingSchedule::constant_one(0);
    let module = daps_module();
    let streams = RunStreams::new(SeedTree::new(seed));
    let out = sampler(&f, &temper, &module, ResamplePolicy::default()).run_tgd(3, &streams).unwrap();
    let ok = (0..3).all(|i| {
        let z = init_particles(&f.prior, 3, 0.5, 0, &streams).unwrap().z[i].clone();
        let direct = module.reconstruct(&f.prior, &f.obs, &z, 0.5, 1.0, &mut streams.recon(0, i)).unwrap();
        direct == out.samples[i]
    });
    Outcome::new(ok, format!("R=0 equals direct module call: {ok}"))
}

/// λ ≡ 1, no resampling, N = 1: TGD is the plain reconstruct/re-noise loop.
pub fn reduction_daps_loop(seed: u64) -> Outcome {
    let f = fixture(8);
    let big_r = f.noise.stages();
    let temper = TemperingSchedule::constant_one(big_r);
    let module = daps_module();
    let streams = RunStreams::new(SeedTree::new(seed));
    let out = sampler(&f, &temper, &module, ResamplePolicy::never()).run_tgd(1, &streams).unwrap();

    let mut rng = streams.init(0);
    let mut z = forward_noise(&f.prior.sample(&mut rng), f.noise.s_max(), &mut rng);
    for r in (1..=big_r).rev() {
        let x0 = module.reconstruct(&f.prior, &f.obs, &z, f.noise.level(r), 1.0, &mut streams.recon(r, 0)).unwrap();
        z = forward_noise(&x0, f.noise.level(r - 1), &mut streams.renoise(r, 0));
    }
    let direct = module.reconstruct(&f.prior, &f.obs, &z, f.noise.level(0), 1.0, &mut streams.recon(0, 0)).unwrap();
    let ok = direct == out.samples[0] && out.log_w == vec![0.0];
    Outcome::new(ok, format!("lambda=1 N=1 equals standalone loop: {ok}"))
}

/// A-TGD with one particle follows TGD's single trajectory exactly.
pub fn reduction_atgd_single(seed: u64) -> Outcome {
    let f = fixture(12);
    let temper = uniform_tempering(f.noise.stages(), 0.0).unwrap();
    let module = dps_module();
    let s = sampler(&f, &temper, &module, ResamplePolicy::default());
    let ok = (0..4).all(|j| {
        let streams = RunStreams::new(SeedTree::new(seed).child(j));
        let a = s.run_atgd(1, PruneConfig::new(0.5).unwrap(), &streams).unwrap();
        let t = s.run_tgd(1, &streams).unwrap();
        a.sample == t.samples[0] && a.survivor == 0
    });
    Outcome::new(ok, format!("A-TGD N=1 equals TGD N=1: {ok}"))
}

// ---------------------------------------------------------------- weights

/// A stage with `λ_{r-1} = λ_r` leaves arbitrary weights bit-identical.
pub fn constant_lambda_weights(seed: u64) -> Outcome {
    let f = fixture(6);
    let temper = TemperingSchedule::from_exponents(vec![1.0, 0.6, 0.6, 0.3, 0.3, 0.0]).unwrap();
    let module = dps_module();
    let s = sampler(&f, &temper, &module, ResamplePolicy::default());
    let streams = RunStreams::new(SeedTree::new(seed));
    let mut ens = init_particles(&f.prior, 6, f.noise.level(4), 4, &streams).unwrap();
    ens.log_w = vec![-0.3, -2.0, -1.1, -4.0, -0.7, -1.9];
    let before = ens.log_w.clone();
    let (after, trace) = s.tgd_stage(ens, &streams).unwrap();
    let ok = after.log_w == before && !trace.resampled;
    Outcome::new(ok, format!("constant-lambda stage keeps weights: {ok}"))
}

/// Two particles with a known likelihood gap: the weight is a logistic function.
pub fn two_particle_softmax() -> Outcome {
    let obs = Observation::abs_value(vec![0.3, 0.4], 0.1).unwrap();
    let mut ens = ParticleEnsemble {
        z: vec![vec![0.0; 2]; 2],
        x0: Some(vec![vec![0.3, -0.4], vec![0.4, 0.4]]),
        log_w: vec![-(2.0f64).ln(); 2],
        stage: 1,
        level: 0.1,
    };
    incremental_log_weights(&mut ens, &obs, 0.25, 0.75).unwrap();
    // Squared residual 0.01 at σ = 0.1: log-likelihood gap 0.5, halved by Δλ.
    let want = 1.0 / (1.0 + (-0.25f64).exp());
    let w = ens.weights();
    let err = (w[0] - want).abs().max((w[1] - (1.0 - want)).abs());
    Outcome::new(err < 1e-12, format!("N=2 softmax err {err:.1e} (tol 1e-12)"))
}

/// Permuting the re-noising substreams changes the states but not the weights.
pub fn renoise_permutation_weights(seed: u64) -> Outcome {
    let f = fixture(6);
    let temper = uniform_tempering(f.noise.stages(), 0.0).unwrap();
    let module = dps_module();
    let s = sampler(&f, &temper, &module, ResamplePolicy::never());
    let streams = RunStreams::new(SeedTree::new(seed));
    let n = 8;
    let ens = init_particles(&f.prior, n, f.noise.s_max(), f.noise.stages(), &streams).unwrap();
    let (weighted, _) = s.reweight(ens, &streams).unwrap();
    let r = weighted.stage;
    let plain = s.propagate(weighted.clone(), |i| streams.renoise(r, i)).unwrap();
    let permuted = s.propagate(weighted, |i| streams.renoise(r, n - 1 - i)).unwrap();
    let ok = plain.log_w == permuted.log_w && plain.z != permuted.z;
    Outcome::new(ok, format!("renoise permutation keeps weights: {ok}"))
}

// ---------------------------------------------------------------- resampling

fn random_weights<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    // Mix of flat and highly skewed vectors, with exact zeros.
    let spread = rng.random_range(0.0..8.0);
    (0..n)
        .map(|_| if rng.random::<f64>() < 0.1 { 0.0 } else { (spread * rng.random::<f64>()).exp() })
        .collect()
}

/// `⌊N w_i⌋ ≤ count_i ≤ ⌈N w_i⌉` for systematic resampling on random vectors.
pub fn systematic_count_bounds(vectors: usize, seed: u64) -> Outcome {
    let mut rng = SeedTree::new(seed).rng();
    let mut bad = 0;
    for _ in 0..vectors {
        let n = rng.random_range(1..64);
        let mut w = random_weights(n, &mut rng);
        if w.iter().all(|v| *v == 0.0) {
            w[0] = 1.0;
        }
        let total: f64 = w.iter().sum();
        let idx = systematic_indices(&w, rng.random());
        let mut counts = vec![0usize; n];
        for i in idx {
            counts[i] += 1;
        }
        for (c, wi) in counts.iter().zip(&w) {
            let nw = n as f64 * wi / total;
            // Comb positions and cumulative sums are both rounded; allow that slack.
            if (*c as f64) < (nw - 1e-9).floor() || (*c as f64) > (nw + 1e-9).ceil() {
                bad += 1;
            }
        }
    }
    Outcome::new(bad == 0, format!("systematic bound violations {bad} over {vectors} vectors"))
}

/// Mean multinomial counts stay within 4 standard errors of `N w_i`.
pub fn multinomial_mean_counts(reps: usize, seed: u64) -> Outcome {
    let w = [0.05, 0.3, 0.0, 0.15, 0.4, 0.1];
    let n = w.len();
    let mut rng = SeedTree::new(seed).rng();
    let mut sums = vec![0.0; n];
    for _ in 0..reps {
        for i in multinomial_indices(&w, n, &mut rng) {
            sums[i] += 1.0;
        }
    }
    let mut worst = 0.0f64;
    for (sum, wi) in sums.iter().zip(&w) {
        let mean = sum / reps as f64;
        let se = (n as f64 * wi * (1.0 - wi) / reps as f64).sqrt();
        let z = if se == 0.0 {
            if mean == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            (mean - n as f64 * wi).abs() / se
        };
        worst = worst.max(z);
    }
    Outcome::new(worst <= 4.0, format!("multinomial worst |z| {worst:.2} (tol 4)"))
}

/// ESS equals N exactly after resampling.
pub fn ess_after_resample(seed: u64) -> Outcome {
    let mut rng = SeedTree::new(seed).rng();
    let ok = (1..50).all(|n| {
        let mut ens = ParticleEnsemble {
            z: vec![vec![0.0]; n],
            x0: None,
            log_w: (0..n).map(|_| -5.0 * rng.random::<f64>()).collect(),
            stage: 1,
            level: 1.0,
        };
        systematic_resample(&mut ens, &mut rng);
        ess(&ens.log_w) == n as f64
    });
    Outcome::new(ok, format!("ESS = N after resampling: {ok}"))
}

// ---------------------------------------------------------------- pruning

pub fn prune_counts() -> Outcome {
    let cases = [(0.0, 10, 1), (0.5, 64, 32), (0.8, 64, 52), (1.0, 20, 20), (1.0, 7, 7)];
    let bad: Vec<_> = cases.iter().filter(|(rho, r, k)| prune_stage_count(*rho, *r) != *k).collect();
    Outcome::new(bad.is_empty(), format!("K_rho mismatches: {bad:?}"))
}

/// The retained particle is the measurement-error argmin of the pruning candidates.
pub fn prune_selects_best(seed: u64, runs: u64) -> Outcome {
    let f = fixture(12);
    let big_r = f.noise.stages();
    let temper = uniform_tempering(big_r, 0.0).unwrap();
    let module = dps_module();
    let s = sampler(&f, &temper, &module, ResamplePolicy::default());
    let prune = PruneConfig::new(0.5).unwrap();
    let k = prune_stage_count(prune.rho, big_r);
    let n = 16;
    let mut bad = 0;
    for j in 0..runs {
        let streams = RunStreams::new(SeedTree::new(seed).child(j));
        let out = s.run_atgd(n, prune, &streams).unwrap();
        let mut ens = init_particles(&f.prior, n, f.noise.s_max(), big_r, &streams).unwrap();
        for _ in 0..k {
            ens = s.tgd_stage(ens, &streams).unwrap().0;
        }
        let stage = ens.stage;
        let cands: Vec<Vec<f64>> = ens
            .z
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let lambda = temper.exponent(stage);
                module.reconstruct(&f.prior, &f.obs, z, f.noise.level(stage), lambda, &mut streams.prune(stage, i)).unwrap()
            })
            .collect();
        if out.prune_stage != stage || argmin_measurement_error(&f.obs, &cands).unwrap() != out.survivor {
            bad += 1;
        }
    }
    Outcome::new(bad == 0, format!("pruning choice mismatches {bad}/{runs}"))
}

// ---------------------------------------------------------------- schedules

pub fn schedule_values() -> Outcome {
    let t = uniform_tempering(4, 0.0).unwrap();
    let table = [1.0, 0.75, 0.5, 0.25, 0.0];
    let table_err = t.exponents().iter().zip(table).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let u = uniform_tempering(19, 0.2).unwrap();
    let ends = u.exponent(0) == 1.0 && u.exponent(19) == 0.2;
    let g = edm_noise_grid(20, 80.0, 0.002, 7.0).unwrap();
    let grid_ends = g.level(0) == 0.002 && g.level(19) == 80.0;
    let mid = NoiseSchedule::from_levels(vec![0.002, 40.0, 80.0], 7.0).unwrap();
    let nd = noise_dependent_tempering(&mid, 0.0, 1.0).unwrap();
    let nd_err = (nd.exponent(1) - 0.5).abs();
    let ok = table_err <= 1e-15 && ends && grid_ends && nd_err <= 1e-12 && nd.exponent(2) == 0.0 && nd.exponent(0) == 1.0;
    Outcome::new(
        ok,
        format!("R=4 table err {table_err:.1e}, uniform ends {ends}, grid ends {grid_ends}, midpoint err {nd_err:.1e}"),
    )
}

// ---------------------------------------------------------------- sweep criteria

pub fn row<'a>(rows: &'a [AggregateRow], method: &str, n: usize) -> Option<&'a AggregateRow> {
    rows.iter().find(|r| r.method == method && r.n_particles == n)
}

fn cell(records: &[CellRecord], method: &str, k: usize, n: usize) -> Option<f64> {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.method == method && r.condition_id == k && r.n_particles == n)
        .map(|r| r.swd)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn method_ms(records: &[CellRecord], method: &str) -> f64 {
    records.iter().filter(|r| r.method == method).map(|r| r.wall_ms).sum()
}

/// Ideal TGD improves from N=8 to N=128 on most conditions and ends within
/// twice the two-oracle floor.
pub fn ideal_consistency(records: &[CellRecord], floors: &[f64], method: &str, min_wins: usize) -> Outcome {
    let conds = floors.len();
    let wins = (0..conds)
        .filter(|&k| match (cell(records, method, k, 128), cell(records, method, k, 8)) {
            (Some(a), Some(b)) => a < b,
            _ => false,
        })
        .count();
    let rows = aggregate(records);
    let at128 = row(&rows, method, 128).map_or(f64::NAN, |r| r.mean_swd);
    let floor = floors.iter().sum::<f64>() / conds as f64;
    let minutes = method_ms(records, method) / 6e4;
    Outcome::new(
        wins >= min_wins && at128 <= 2.0 * floor && minutes < 5.0,
        format!(
            "N=128 < N=8 on {wins}/{conds} (need {min_wins}); mean swd N=128 {at128:.3e} vs 2x floor {:.3e}; {minutes:.2} min",
            2.0 * floor
        ),
    )
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &t in &idx[i..=j] {
                r[t] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// TGD beats its own N=1 run and both baselines at N=64, and improves with N.
pub fn particle_scaling(records: &[CellRecord], particles: &[usize]) -> Outcome {
    let rows = aggregate(records);
    let get = |m: &str, n: usize| row(&rows, m, n).map_or(f64::NAN, |r| r.mean_swd);
    let (t1, t64, dps, daps) = (get("tgd", 1), get("tgd", 64), get("dps", 64), get("dps_daps", 64));
    let curve: Vec<f64> = particles.iter().map(|&n| get("tgd", n)).collect();
    let logn: Vec<f64> = particles.iter().map(|&n| (n as f64).ln()).collect();
    let rho = spearman(&curve, &logn);
    let minutes = ["tgd", "dps", "dps_daps"].iter().map(|m| method_ms(records, m)).sum::<f64>() / 6e4;
    Outcome::new(
        t64 * 2.0 <= t1 && t64 < dps && t64 < daps && rho <= -0.8 && minutes < 30.0,
        format!(
            "tgd N=1 {t1:.3e}, N=64 {t64:.3e}; dps {dps:.3e}, dps_daps {daps:.3e}; spearman {rho:.3}; {minutes:.2} min"
        ),
    )
}

const RESULT_FILES: [&str; 5] = ["results.csv", "aggregate.csv", "floor.csv", "conditions.csv", "metadata.json"];

/// Every result file identical between two output directories (timings masked).
pub fn same_outputs(a: &Path, b: &Path) -> Outcome {
    let mut diff = Vec::new();
    for f in RESULT_FILES {
        let same = if f == "results.csv" {
            results_without_timing(&a.join(f)).ok() == results_without_timing(&b.join(f)).ok()
        } else {
            std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok()
        };
        if !same {
            diff.push(f);
        }
    }
    Outcome::new(diff.is_empty(), format!("differing files: {diff:?}"))
}
