//! Build the exact posterior for one simulated observation y = |x0| + noise,
//! compare sign-branch draws with a grid reference, and report orthant masses.
//!
//! cargo run --release --example exact_posterior -- [seed]

use tgd::metrics::{max_sliced_wasserstein, SampleSet};
use tgd::observation::{Observation, Operator};
use tgd::oracle::{exact_posterior, grid_posterior, GridSpec};
use tgd::prior::{sample_prior_means, GaussianMixturePrior};
use tgd::rng::SeedTree;

fn main() -> tgd::error::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(7);
    let mut rng = SeedTree::new(seed).rng();

    let prior = GaussianMixturePrior::equally_weighted(sample_prior_means(2, 5, 0.1, &mut rng)?, 0.005)?;
    let x0 = prior.sample(&mut rng);
    let obs = Observation::simulate(Operator::AbsValue, &x0, 0.01, &mut rng)?;
    println!("x0 = ({:+.4}, {:+.4}), y = ({:.4}, {:.4})", x0[0], x0[1], obs.y()[0], obs.y()[1]);

    let post = exact_posterior(&prior, &obs)?;
    println!("component weights: {:.4?}", post.component_weights());
    let m = post.orthant_masses();
    println!("orthant masses (++, -+, +-, --): {m:.4?}");
    println!("posterior mean: {:.5?}", post.mean());

    let grid = grid_posterior(&prior, &obs, &GridSpec::default())?;
    println!("grid mean:      {:.5?}", grid.mean());

    let a = SampleSet::new(post.sample_n(10_000, &mut rng))?;
    let b = SampleSet::new(grid.sample_n(10_000, &mut rng))?;
    let c = SampleSet::new(grid.sample_n(10_000, &mut rng))?;
    let d_exact = max_sliced_wasserstein(&a, &b, 100, 2.0, &mut rng)?;
    let d_grid = max_sliced_wasserstein(&b, &c, 100, 2.0, &mut rng)?;
    println!("max-sliced W2: exact vs grid {d_exact:.2e}, grid vs grid {d_grid:.2e}");
    Ok(())
}
