//! Analytic Gaussian-mixture diffusion prior.
//!
//! Under variance-exploding noising `x_s = x_0 + s ε`, an isotropic mixture with
//! component variance `τ²` stays an isotropic mixture with variance `τ² + s²`,
//! so scores, Tweedie denoisers and their Jacobians are available in closed form.
//! Everything is evaluated through log-sum-exp because `τ` is tiny in the
//! experiments of interest.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TgdError};
use crate::numeric::{categorical, dot, log_sum_exp, softmax_in_place, sq_dist, LN_2PI};

/// Mixture `Σ_k w_k N(μ_k, var·I)` sharing one isotropic variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    var: f64,
    #[serde(skip)]
    log_weights: Vec<f64>,
}

/// Noised marginal `p_s`; same representation as any other isotropic mixture.
pub type NoisedMixture = IsotropicMixture;

/// Posterior responsibilities and score at one point, reused by the Hessian.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    pub responsibilities: Vec<f64>,
    pub score: Vec<f64>,
}

impl IsotropicMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, var: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(TgdError::param("mixture needs one weight per mean and at least one component"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(TgdError::param("mixture weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(TgdError::param(format!("mixture weights sum to {total}, expected 1")));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim || m.iter().any(|v| !v.is_finite())) {
            return Err(TgdError::param("mixture means must be finite and share one positive dimension"));
        }
        if !(var.is_finite() && var > 0.0) {
            return Err(TgdError::param(format!("mixture variance must be positive, got {var}")));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            means,
            var,
            log_weights,
        })
    }

    /// Weights proportional to `exp(log_weights)`.
    pub fn from_log_weights(log_weights: &[f64], means: Vec<Vec<f64>>, var: f64) -> Result<Self> {
        let lse = log_sum_exp(log_weights);
        if !lse.is_finite() {
            return Err(TgdError::DegeneratePosterior(
                "mixture log-weights carry no mass".into(),
            ));
        }
        let mut weights: Vec<f64> = log_weights.iter().map(|l| (l - lse).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        Self::new(weights, means, var)
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn var(&self) -> f64 {
        self.var
    }

    fn log_weight(&self, k: usize) -> f64 {
        // Deserialized values skip the cache.
        match self.log_weights.get(k) {
            Some(l) => *l,
            None => self.weights[k].ln(),
        }
    }

    /// `ln w_k - ||x - μ_k||² / (2 var)` for every component.
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.logits_at(x, self.var)
    }

    // The `_at` variants evaluate the same mixture with its component variance
    // replaced by `var`, which is how the noised marginals are handled without
    // copying the means.
    fn logits_at(&self, x: &[f64], var: f64) -> Vec<f64> {
        let inv2v = 0.5 / var;
        self.means
            .iter()
            .enumerate()
            .map(|(k, m)| self.log_weight(k) - sq_dist(x, m) * inv2v)
            .collect()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.dim() as f64;
        log_sum_exp(&self.logits(x)) - 0.5 * d * (LN_2PI + self.var.ln())
    }

    /// Softmax responsibilities `p(k | x)`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let mut l = self.logits(x);
        softmax_in_place(&mut l);
        l
    }

    pub fn local_geometry(&self, x: &[f64]) -> LocalGeometry {
        self.geometry_at(x, self.var)
    }

    fn geometry_at(&self, x: &[f64], var: f64) -> LocalGeometry {
        let mut r = self.logits_at(x, var);
        softmax_in_place(&mut r);
        let mut score = vec![0.0; x.len()];
        for (rk, m) in r.iter().zip(&self.means) {
            if *rk == 0.0 {
                continue;
            }
            for j in 0..x.len() {
                score[j] += rk * (m[j] - x[j]);
            }
        }
        for g in score.iter_mut() {
            *g /= var;
        }
        LocalGeometry {
            responsibilities: r,
            score,
        }
    }

    /// `∇ log p(x) = Σ_k r_k(x) (μ_k - x) / var`.
    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        self.local_geometry(x).score
    }

    /// Hessian of `log p` at `x` applied to `v`:
    /// `Σ_k r_k u_k (u_k·v) / var² - v / var - g (g·v)` with `u_k = μ_k - x`.
    pub fn hessian_vec(&self, x: &[f64], geom: &LocalGeometry, v: &[f64]) -> Vec<f64> {
        self.hessian_vec_at(x, geom, v, self.var)
    }

    fn hessian_vec_at(&self, x: &[f64], geom: &LocalGeometry, v: &[f64], var: f64) -> Vec<f64> {
        let d = x.len();
        let inv_v = 1.0 / var;
        let mut out: Vec<f64> = v.iter().map(|vj| -vj * inv_v).collect();
        let mut u = vec![0.0; d];
        for (rk, m) in geom.responsibilities.iter().zip(&self.means) {
            if *rk == 0.0 {
                continue;
            }
            for j in 0..d {
                u[j] = m[j] - x[j];
            }
            let c = rk * dot(&u, v) * inv_v * inv_v;
            for j in 0..d {
                out[j] += c * u[j];
            }
        }
        let gv = dot(&geom.score, v);
        for j in 0..d {
            out[j] -= geom.score[j] * gv;
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for j in 0..out.len() {
                out[j] += w * m[j];
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = categorical(&self.weights, rng);
        let sd = self.var.sqrt();
        self.means[k]
            .iter()
            .map(|m| {
                let e: f64 = StandardNormal.sample(rng);
                m + sd * e
            })
            .collect()
    }
}

/// Clean-signal prior `p(x_0)`: isotropic mixture with component std `τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixturePrior {
    mixture: IsotropicMixture,
    tau: f64,
}

impl GaussianMixturePrior {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(TgdError::param(format!("tau must be positive, got {tau}")));
        }
        Ok(Self {
            mixture: IsotropicMixture::new(weights, means, tau * tau)?,
            tau,
        })
    }

    pub fn equally_weighted(means: Vec<Vec<f64>>, tau: f64) -> Result<Self> {
        let k = means.len().max(1);
        Self::new(vec![1.0 / k as f64; means.len()], means, tau)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.mixture.dim()
    }

    pub fn mixture(&self) -> &IsotropicMixture {
        &self.mixture
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.mixture.log_pdf(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mixture.sample(rng)
    }

    /// Noised marginal `p_s` with component variance `τ² + s²`.
    pub fn noised(&self, s: f64) -> NoisedMixture {
        let mut m = self.mixture.clone();
        if s != 0.0 {
            m.var = self.tau * self.tau + s * s;
        }
        m
    }

    /// Tweedie denoiser `x̂_0(x, s) = x + s² ∇ log p_s(x) = E[x_0 | x_s = x]`.
    pub fn denoised_mean(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        if !(s > 0.0) {
            return Err(TgdError::param(format!("denoiser needs s > 0, got {s}")));
        }
        Ok(self.denoise(x, s).0)
    }

    fn noised_var(&self, s: f64) -> f64 {
        self.tau * self.tau + s * s
    }

    /// Denoised mean together with the local geometry of `p_s` at `x`.
    pub(crate) fn denoise(&self, x: &[f64], s: f64) -> (Vec<f64>, LocalGeometry) {
        let geom = self.mixture.geometry_at(x, self.noised_var(s));
        let s2 = s * s;
        let xhat = x.iter().zip(&geom.score).map(|(xi, g)| xi + s2 * g).collect();
        (xhat, geom)
    }

    /// `J^T v` for the denoiser Jacobian `J = ∂x̂_0/∂x = I + s² H`, with `H` the
    /// Hessian of `log p_s` (symmetric, so `J^T = J`).
    pub fn denoiser_jacobian_t_vec(&self, x: &[f64], s: f64, v: &[f64]) -> Vec<f64> {
        let geom = self.mixture.geometry_at(x, self.noised_var(s));
        self.jacobian_t_vec(x, s, &geom, v)
    }

    pub(crate) fn jacobian_t_vec(&self, x: &[f64], s: f64, geom: &LocalGeometry, v: &[f64]) -> Vec<f64> {
        let hv = self.mixture.hessian_vec_at(x, geom, v, self.noised_var(s));
        let s2 = s * s;
        v.iter().zip(hv).map(|(vj, h)| vj + s2 * h).collect()
    }

    /// Exact conditional `p_s(x_0 | z) ∝ p(x_0) N(z; x_0, s² I)`.
    pub fn posterior_mixture_given_z(&self, z: &[f64], s: f64) -> Result<IsotropicMixture> {
        if !(s > 0.0) {
            return Err(TgdError::param(format!("conditional needs s > 0, got {s}")));
        }
        let t2 = self.tau * self.tau;
        let s2 = s * s;
        let v = 1.0 / (1.0 / t2 + 1.0 / s2);
        let means = self
            .mixture
            .means
            .iter()
            .map(|mu| mu.iter().zip(z).map(|(m, zj)| v * (m / t2 + zj / s2)).collect())
            .collect();
        // w_k N(z; μ_k, (τ² + s²) I); the shared normalizer cancels.
        let logits = self.mixture.logits_at(z, self.noised_var(s));
        IsotropicMixture::from_log_weights(&logits, means, v)
    }
}

/// Draw `k` means with every coordinate uniform on `[-(1 - margin), 1 - margin]`.
pub fn sample_prior_means<R: Rng + ?Sized>(
    dim: usize,
    k: usize,
    margin: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if !(0.0..1.0).contains(&margin) {
        return Err(TgdError::param(format!("margin must lie in [0, 1), got {margin}")));
    }
    let half = 1.0 - margin;
    Ok((0..k)
        .map(|_| (0..dim).map(|_| rng.random_range(-half..=half)).collect())
        .collect())
}

/// `x_0 + s ε` with `ε ~ N(0, I)`.
pub fn forward_noise<R: Rng + ?Sized>(x0: &[f64], s: f64, rng: &mut R) -> Vec<f64> {
    x0.iter()
        .map(|x| {
            let e: f64 = StandardNormal.sample(rng);
            x + s * e
        })
        .collect()
}
