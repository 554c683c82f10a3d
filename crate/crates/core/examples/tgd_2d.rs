//! One TGD run with N particles on a simulated condition, with the stage trace
//! and the weighted sample compared against the exact posterior.
//!
//! cargo run --release --example tgd_2d -- [N] [exact|dps]

use tgd::metrics::{max_sliced_wasserstein, SampleSet};
use tgd::observation::{Observation, Operator};
use tgd::oracle::exact_posterior;
use tgd::prior::{sample_prior_means, GaussianMixturePrior};
use tgd::reconstruct::{ModuleSpec, OdeSettings};
use tgd::rng::SeedTree;
use tgd::schedules::{edm_noise_grid, uniform_tempering};
use tgd::smc::{ResamplePolicy, RunStreams, Sampler};

fn main() -> tgd::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(256);
    let module = match args.next().as_deref() {
        Some("dps") => ModuleSpec::Dps { ode: OdeSettings::default() },
        _ => ModuleSpec::Exact,
    };

    let root = SeedTree::new(11);
    let mut rng = root.child(0).rng();
    let prior = GaussianMixturePrior::equally_weighted(sample_prior_means(2, 5, 0.1, &mut rng)?, 0.005)?;
    let x0 = prior.sample(&mut rng);
    let obs = Observation::simulate(Operator::AbsValue, &x0, 0.01, &mut rng)?;

    let noise = edm_noise_grid(20, 80.0, 0.002, 7.0)?;
    let temper = uniform_tempering(noise.stages(), 0.0)?;
    let sampler = Sampler {
        prior: &prior,
        obs: &obs,
        noise: &noise,
        temper: &temper,
        module: &module,
        policy: ResamplePolicy::default(),
    };
    let out = sampler.run_tgd(n, &RunStreams::new(root.child(1)))?;

    println!("{:>3} {:>9} {:>6} {:>6} {:>8} {:>8}", "r", "s_r", "lam", "lam'", "ess", "resamp");
    for t in &out.trace {
        println!(
            "{:>3} {:>9.4} {:>6.3} {:>6.3} {:>8.1} {:>8}",
            t.stage, t.level, t.lambda, t.lambda_next, t.ess_before, t.resampled
        );
    }

    let truth = SampleSet::new(exact_posterior(&prior, &obs)?.sample_n(10_000, &mut rng))?;
    let got = SampleSet::weighted(out.samples.clone(), out.weights())?;
    let d = max_sliced_wasserstein(&got, &truth, 100, 2.0, &mut rng)?;
    println!("{} module, N = {n}: final ESS {:.1}, max-sliced W2 to the posterior {d:.4}", module.name(), out.ess());
    Ok(())
}
