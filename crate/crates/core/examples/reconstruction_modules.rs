//! Apply every reconstruction module to the same noisy state at a few noise
//! levels and report the spread of the outputs and their fit to y.
//!
//! cargo run --release --example reconstruction_modules

use tgd::observation::{Observation, Operator};
use tgd::prior::{forward_noise, sample_prior_means, GaussianMixturePrior};
use tgd::reconstruct::{LangevinConfig, ModuleSpec, OdeSettings, Reconstructor};
use tgd::rng::SeedTree;

fn main() -> tgd::error::Result<()> {
    let root = SeedTree::new(3);
    let mut rng = root.child(0).rng();
    let prior = GaussianMixturePrior::equally_weighted(sample_prior_means(2, 5, 0.1, &mut rng)?, 0.005)?;
    let x0 = prior.sample(&mut rng);
    let obs = Observation::simulate(Operator::AbsValue, &x0, 0.01, &mut rng)?;

    let ode = OdeSettings { n_steps: 10, ..OdeSettings::default() };
    let modules = [
        ModuleSpec::Uncond { ode: ode.clone() },
        ModuleSpec::Mpgd { ode: ode.clone() },
        ModuleSpec::Dps { ode: ode.clone() },
        ModuleSpec::Daps { ode: ode.clone(), langevin: LangevinConfig::default() },
        ModuleSpec::Hybrid { ode, nu_fraction: 0.5, langevin: LangevinConfig::default() },
        ModuleSpec::Exact,
    ];

    println!("x0 = {x0:.4?}");
    for s in [5.0, 0.5, 0.05] {
        let z = forward_noise(&x0, s, &mut rng);
        println!("s = {s}, z = {z:.4?}");
        for m in &modules {
            let mut stream = root.path(&[1, (s * 1e3) as u64]).rng();
            let outs: Vec<Vec<f64>> = (0..200)
                .map(|_| m.reconstruct(&prior, &obs, &z, s, 1.0, &mut stream))
                .collect::<tgd::error::Result<_>>()?;
            let mean: Vec<f64> = (0..2).map(|j| outs.iter().map(|o| o[j]).sum::<f64>() / 200.0).collect();
            let err = outs.iter().map(|o| obs.measurement_error(o)).sum::<tgd::error::Result<f64>>()? / 200.0;
            println!("  {:<7} mean {mean:+.4?}  mean error {err:.3e}", m.name());
        }
    }
    Ok(())
}
