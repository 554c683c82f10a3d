//! A-TGD for several pruning fractions: how many populated stages run, which
//! particle survives, and how close the single output lands to y.
//!
//! cargo run --release --example atgd_pruning -- [N]

use tgd::observation::{Observation, Operator};
use tgd::prior::{sample_prior_means, GaussianMixturePrior};
use tgd::reconstruct::{ModuleSpec, OdeSettings};
use tgd::rng::SeedTree;
use tgd::schedules::{edm_noise_grid, uniform_tempering};
use tgd::smc::{prune_stage_count, PruneConfig, ResamplePolicy, RunStreams, Sampler};

fn main() -> tgd::error::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(64);
    let root = SeedTree::new(5);
    let mut rng = root.child(0).rng();
    let prior = GaussianMixturePrior::equally_weighted(sample_prior_means(2, 5, 0.1, &mut rng)?, 0.005)?;
    let x0 = prior.sample(&mut rng);
    let obs = Observation::simulate(Operator::AbsValue, &x0, 0.01, &mut rng)?;

    let noise = edm_noise_grid(20, 80.0, 0.002, 7.0)?;
    let temper = uniform_tempering(noise.stages(), 0.0)?;
    let module = ModuleSpec::Dps { ode: OdeSettings::default() };
    let sampler = Sampler {
        prior: &prior,
        obs: &obs,
        noise: &noise,
        temper: &temper,
        module: &module,
        policy: ResamplePolicy::default(),
    };

    println!("x0 = {x0:.4?}");
    for rho in [0.0, 0.25, 0.5, 0.8, 1.0] {
        let k = prune_stage_count(rho, noise.stages());
        let out = sampler.run_atgd(n, PruneConfig::new(rho)?, &RunStreams::new(root.child(1)))?;
        println!(
            "rho {rho:.2}: K = {k:>2}, pruned at s = {:>8.4}, survivor {:>3}, sample {:.4?}, error {:.2e}",
            noise.level(out.prune_stage),
            out.survivor,
            out.sample,
            obs.measurement_error(&out.sample)?
        );
    }
    Ok(())
}
