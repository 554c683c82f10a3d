//! Print the outer noise grid and the tempering exponents paired with it.
//!
//! cargo run --example schedules -- [points] [lambda_r]

use tgd::schedules::{edm_noise_grid, noise_dependent_tempering, uniform_tempering};

fn main() -> tgd::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let points: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let lambda_r: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.0);

    let noise = edm_noise_grid(points, 80.0, 0.002, 7.0)?;
    let uniform = uniform_tempering(noise.stages(), lambda_r)?;
    let quadratic = noise_dependent_tempering(&noise, lambda_r, 2.0)?;

    println!("{:>3} {:>12} {:>10} {:>10}", "r", "s_r", "uniform", "alpha=2");
    for r in (0..=noise.stages()).rev() {
        println!(
            "{r:>3} {:>12.6} {:>10.6} {:>10.6}",
            noise.level(r),
            uniform.exponent(r),
            quadratic.exponent(r)
        );
    }
    Ok(())
}
