mod common;

use proptest::prelude::*;

use common::{default_experiment, dps_module, fixture};
use tgd::metrics::{sliced_distances, SampleSet};
use tgd::numeric::log_sum_exp;
use tgd::observation::{argmax_likelihood, argmin_measurement_error, Observation};
use tgd::oracle::{build_sign_branch_posterior, exact_posterior};
use tgd::prior::{forward_noise, GaussianMixturePrior};
use tgd::reconstruct::{
    ode_reconstruct_uncond, LangevinConfig, ModuleSpec, OdeSettings, ReconstructionRequest, Reconstructor,
};
use tgd::rng::SeedTree;
use tgd::schedules::{edm_noise_grid, noise_dependent_tempering, uniform_tempering};
use tgd::smc::{
    incremental_log_weights, init_particles, systematic_indices, ParticleEnsemble, PruneConfig, ResamplePolicy,
    RunStreams, Sampler,
};

fn small_prior() -> GaussianMixturePrior {
    GaussianMixturePrior::new(
        vec![0.2, 0.5, 0.3],
        vec![vec![0.4, -0.6], vec![-0.7, 0.1], vec![0.2, 0.8]],
        0.05,
    )
    .unwrap()
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_grid_endpoints_and_order(n in 2usize..40, s_min in 1e-4f64..0.5, ratio in 1.5f64..1e4, rho in 1.0f64..10.0) {
        let s_max = s_min * ratio;
        let g = edm_noise_grid(n, s_max, s_min, rho).unwrap();
        prop_assert_eq!(g.level(0), s_min);
        prop_assert_eq!(g.level(n - 1), s_max);
        prop_assert!(g.levels().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tempering_ends_at_one_and_is_monotone(stages in 1usize..40, lambda_r in 0.0f64..=1.0, alpha in 0.1f64..5.0) {
        let noise = edm_noise_grid(stages + 1, 80.0, 0.002, 7.0).unwrap();
        for t in [uniform_tempering(stages, lambda_r).unwrap(), noise_dependent_tempering(&noise, lambda_r, alpha).unwrap()] {
            prop_assert_eq!(t.exponent(0), 1.0);
            prop_assert_eq!(t.exponent(stages), lambda_r);
            prop_assert!(t.exponents().windows(2).all(|w| w[0] >= w[1]));
        }
        let flat = uniform_tempering(stages, 1.0).unwrap();
        prop_assert!(flat.exponents().windows(2).all(|w| w[0] - w[1] == 0.0));
    }

    #[test]
    fn conditional_mean_is_the_denoiser(z in point(), s in 0.01f64..10.0) {
        let prior = small_prior();
        let post = prior.posterior_mixture_given_z(&z, s).unwrap();
        prop_assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let d = prior.denoised_mean(&z, s).unwrap();
        for (a, b) in post.mean().iter().zip(&d) {
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn abs_likelihood_ignores_signs(x in point(), flips in prop::collection::vec(any::<bool>(), 2)) {
        let obs = Observation::abs_value(vec![0.3, 0.9], 0.1).unwrap();
        let flipped: Vec<f64> = x.iter().zip(&flips).map(|(v, f)| if *f { -v } else { *v }).collect();
        prop_assert_eq!(obs.log_likelihood(&x).unwrap(), obs.log_likelihood(&flipped).unwrap());
    }

    #[test]
    fn argmax_likelihood_is_argmin_error(cands in prop::collection::vec(point(), 1..20)) {
        let obs = Observation::abs_value(vec![0.3, 0.9], 0.05).unwrap();
        prop_assert_eq!(argmax_likelihood(&obs, &cands).unwrap(), argmin_measurement_error(&obs, &cands).unwrap());
    }

    #[test]
    fn guidance_is_the_proposal_gradient(x in point(), s in 0.0f64..2.0) {
        prop_assume!(x.iter().all(|v| v.abs() > 1e-3));
        let obs = Observation::abs_value(vec![0.3, 0.9], 0.1).unwrap();
        let std = obs.proposal_std(s, 0.8);
        let g = obs.guidance_gradient(&x, std);
        let h = 1e-6;
        for j in 0..2 {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (obs.proposal_log_likelihood(&a, s, 0.8).unwrap() - obs.proposal_log_likelihood(&b, s, 0.8).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()), "{} vs {}", fd, g[j]);
        }
    }

    /// `J^T ∇ log ℓ̃(x̂0)` is the gradient of `x ↦ log ℓ̃(x̂0(x))`.
    #[test]
    fn dps_sensitivity_matches_composed_gradient(seed in 0u64..1000, s in 0.05f64..2.0) {
        let prior = small_prior();
        let obs = Observation::abs_value(vec![0.3, 0.9], 0.1).unwrap();
        let mut rng = SeedTree::new(seed).rng();
        let x = forward_noise(&prior.sample(&mut rng), s, &mut rng);
        let f = |x: &[f64]| obs.proposal_log_likelihood(&prior.denoised_mean(x, s).unwrap(), s, 0.8).unwrap();
        let xhat = prior.denoised_mean(&x, s).unwrap();
        prop_assume!(xhat.iter().all(|v| v.abs() > 1e-3));
        let g = prior.denoiser_jacobian_t_vec(&x, s, &obs.guidance_gradient(&xhat, obs.proposal_std(s, 0.8)));
        let h = 1e-6 * s;
        let scale = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..2 {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + scale), "{} vs {}", fd, g[j]);
        }
    }

    #[test]
    fn zero_exponent_modules_are_unconditional(z in point(), s in 0.02f64..20.0, seed in any::<u64>()) {
        let prior = small_prior();
        let obs = Observation::abs_value(vec![0.3, 0.9], 0.1).unwrap();
        let ode = OdeSettings { n_steps: 5, ..Default::default() };
        let req = ReconstructionRequest { z: &z, s_start: s, lambda: 0.0, obs: &obs, ode: &ode };
        let base = ode_reconstruct_uncond(&prior, &req).unwrap();
        let still = LangevinConfig { n_steps: 0, ..Default::default() };
        let modules = [
            ModuleSpec::Dps { ode: ode.clone() },
            ModuleSpec::Mpgd { ode: ode.clone() },
            ModuleSpec::Daps { ode: ode.clone(), langevin: still.clone() },
            ModuleSpec::Hybrid { ode: ode.clone(), nu_fraction: 0.5, langevin: still },
        ];
        for m in modules {
            let out = m.reconstruct(&prior, &obs, &z, s, 0.0, &mut SeedTree::new(seed).rng()).unwrap();
            prop_assert_eq!(&out, &base, "{}", m.name());
        }
    }

    #[test]
    fn tempered_oracle_at_full_exponent_is_the_posterior(y in prop::collection::vec(0.0f64..1.2, 2), sigma in 0.01f64..0.5) {
        let prior = small_prior();
        let obs = Observation::abs_value(y.clone(), sigma).unwrap();
        let plain = exact_posterior(&prior, &obs).unwrap();
        let tempered = build_sign_branch_posterior(prior.mixture(), &y, sigma / 1.0f64.sqrt()).unwrap();
        prop_assert_eq!(plain, tempered);
    }

    #[test]
    fn weights_normalized_after_weighting(lls in prop::collection::vec(-50.0f64..0.0, 1..30), dl in 0.0f64..1.0) {
        let obs = Observation::abs_value(vec![0.5], 0.1).unwrap();
        // Candidates whose log-likelihood offsets are the drawn values.
        let x0: Vec<Vec<f64>> = lls.iter().map(|l| vec![0.5 + 0.1 * (-2.0 * l).sqrt()]).collect();
        let n = x0.len();
        let mut ens = ParticleEnsemble { z: x0.clone(), x0: Some(x0), log_w: vec![-(n as f64).ln(); n], stage: 1, level: 0.1 };
        incremental_log_weights(&mut ens, &obs, 0.0, dl).unwrap();
        prop_assert!(log_sum_exp(&ens.log_w).abs() < 1e-9);
    }

    #[test]
    fn systematic_counts_bracket_expectation(w in prop::collection::vec(0.0f64..1.0, 1..50), u in 0.0f64..1.0) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let n = w.len();
        let total: f64 = w.iter().sum();
        let mut counts = vec![0usize; n];
        for i in systematic_indices(&w, u) {
            counts[i] += 1;
        }
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (c, wi) in counts.iter().zip(&w) {
            let nw = n as f64 * wi / total;
            prop_assert!((*c as f64) >= (nw - 1e-9).floor() && (*c as f64) <= (nw + 1e-9).ceil());
        }
    }

    #[test]
    fn sliced_distance_axioms(seed in any::<u64>(), n in 5usize..60, shift in -1.0f64..1.0) {
        let mut rng = SeedTree::new(seed).rng();
        let prior = small_prior();
        let a: Vec<Vec<f64>> = (0..n).map(|_| prior.sample(&mut rng)).collect();
        let b: Vec<Vec<f64>> = (0..n).map(|_| prior.sample(&mut rng).iter().map(|v| v + shift).collect()).collect();
        let (sa, sb) = (SampleSet::new(a).unwrap(), SampleSet::new(b).unwrap());
        let dirs = tgd::metrics::random_directions(2, 16, &mut rng);
        let ab = sliced_distances(&sa, &sb, &dirs, 2.0, &mut SeedTree::new(1).rng()).unwrap();
        let ba = sliced_distances(&sb, &sa, &dirs, 2.0, &mut SeedTree::new(1).rng()).unwrap();
        prop_assert_eq!(ab.max, ba.max);
        prop_assert!(ab.max >= ab.mean && ab.mean >= 0.0);
        let aa = sliced_distances(&sa, &sa, &dirs, 2.0, &mut rng).unwrap();
        prop_assert_eq!(aa.max, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn single_particle_atgd_is_tgd(seed in any::<u64>(), rho in 0.0f64..=1.0) {
        let f = fixture(10);
        let temper = uniform_tempering(f.noise.stages(), 0.0).unwrap();
        let module = dps_module();
        let s = Sampler { prior: &f.prior, obs: &f.obs, noise: &f.noise, temper: &temper, module: &module, policy: ResamplePolicy::default() };
        let streams = RunStreams::new(SeedTree::new(seed));
        let a = s.run_atgd(1, PruneConfig::new(rho).unwrap(), &streams).unwrap();
        let t = s.run_tgd(1, &streams).unwrap();
        prop_assert_eq!(a.sample, t.samples[0].clone());
    }

    #[test]
    fn renoise_permutation_keeps_weights(seed in any::<u64>(), n in 2usize..12, shift in 1usize..11) {
        let f = fixture(8);
        let temper = uniform_tempering(f.noise.stages(), 0.0).unwrap();
        let module = dps_module();
        let s = Sampler { prior: &f.prior, obs: &f.obs, noise: &f.noise, temper: &temper, module: &module, policy: ResamplePolicy::default() };
        let streams = RunStreams::new(SeedTree::new(seed));
        let ens = init_particles(&f.prior, n, f.noise.s_max(), f.noise.stages(), &streams).unwrap();
        let (w, _) = s.reweight(ens, &streams).unwrap();
        let r = w.stage;
        let a = s.propagate(w.clone(), |i| streams.renoise(r, i)).unwrap();
        let b = s.propagate(w, |i| streams.renoise(r, (i + shift) % n)).unwrap();
        prop_assert_eq!(a.log_w, b.log_w);
    }
}

#[test]
fn conditions_and_references_are_shared_by_methods() {
    let exp = default_experiment();
    let again = default_experiment();
    assert_eq!(exp.conditions(), again.conditions());
    assert_eq!(exp.oracle_samples(3, 50).unwrap(), again.oracle_samples(3, 50).unwrap());
    assert_eq!(exp.projections(3), again.projections(3));
}
