//! Ground-truth posteriors for the absolute-value observation model.
//!
//! Two independent constructions are provided. [`SignBranchPosterior`] is an exact
//! sampler that splits every coordinate into its positive and negative half-line
//! and draws truncated Gaussians. [`GridDistribution`] is a brute-force 2D
//! quadrature with local refinement around the modes.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Result, TgdError};
use crate::numeric::{categorical, log_add_exp, log_ndtr, log_normal_pdf, log_sum_exp, weights_from_log};
use crate::observation::Observation;
use crate::prior::{GaussianMixturePrior, IsotropicMixture};

/// Half-line used by [`sample_truncated_normal`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfLine {
    Positive,
    Negative,
}

// Above this standardized bound the inverse-CDF tail mass starts to underflow.
const INVERSE_CDF_LIMIT: f64 = 30.0;

/// Exact draw from `N(mean, std²)` restricted to the requested open half-line.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, std: f64, half: HalfLine, rng: &mut R) -> f64 {
    match half {
        HalfLine::Positive => positive_truncated(mean, std, rng),
        HalfLine::Negative => -positive_truncated(-mean, std, rng),
    }
}

fn positive_truncated<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    let a = -mean / std;
    let t = if a < INVERSE_CDF_LIMIT {
        // X = Q^{-1}(u Q(a)) with Q(t) = erfc(t/√2)/2.
        let u = open_unit(rng);
        let tail = erfc(a / std::f64::consts::SQRT_2);
        let t = std::f64::consts::SQRT_2 * erfc_inv(u * tail);
        t.max(a)
    } else {
        robert_tail(a, rng)
    };
    let x = mean + std * t;
    if x > 0.0 {
        x
    } else {
        f64::MIN_POSITIVE
    }
}

/// Exponential proposal rejection sampler for `N(0,1)` restricted to `(a, ∞)`, `a > 0`.
fn robert_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - open_unit(rng).ln() / alpha;
        let d = z - alpha;
        if open_unit(rng) <= (-0.5 * d * d).exp() {
            return z;
        }
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Positive and negative branch of one coordinate under one mixture component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateBranches {
    /// Log of the unnormalized branch mass on `x > 0`.
    pub log_mass_pos: f64,
    /// Log of the unnormalized branch mass on `x < 0`.
    pub log_mass_neg: f64,
    /// Mean of the untruncated Gaussian product for the positive branch.
    pub mean_pos: f64,
    /// Mean of the untruncated Gaussian product for the negative branch.
    pub mean_neg: f64,
    /// Shared standard deviation of both branch Gaussians.
    pub std: f64,
}

impl CoordinateBranches {
    fn new(m: f64, v: f64, y: f64, sigma2: f64) -> Self {
        let tot = v + sigma2;
        let c = v * sigma2 / tot;
        let sd = c.sqrt();
        let mean_pos = (m * sigma2 + y * v) / tot;
        let mean_neg = (m * sigma2 - y * v) / tot;
        Self {
            log_mass_pos: log_normal_pdf(y, m, tot) + log_ndtr(mean_pos / sd),
            log_mass_neg: log_normal_pdf(-y, m, tot) + log_ndtr(-mean_neg / sd),
            mean_pos,
            mean_neg,
            std: sd,
        }
    }

    pub fn log_mass(&self) -> f64 {
        log_add_exp(self.log_mass_pos, self.log_mass_neg)
    }

    /// Probability of the positive branch.
    pub fn prob_pos(&self) -> f64 {
        let lse = self.log_mass();
        if lse == f64::NEG_INFINITY {
            0.5
        } else {
            (self.log_mass_pos - lse).exp()
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p = self.prob_pos();
        if rng.random::<f64>() < p {
            sample_truncated_normal(self.mean_pos, self.std, HalfLine::Positive, rng)
        } else {
            sample_truncated_normal(self.mean_neg, self.std, HalfLine::Negative, rng)
        }
    }
}

/// Exact posterior of an isotropic mixture under `y = |x| + σ ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignBranchPosterior {
    component_weights: Vec<f64>,
    log_component_weights: Vec<f64>,
    branches: Vec<Vec<CoordinateBranches>>,
}

/// Build the sign-branch decomposition of `mixture(x) · N(y; |x|, σ_eff² I)`.
pub fn build_sign_branch_posterior(
    mixture: &IsotropicMixture,
    y: &[f64],
    sigma_eff: f64,
) -> Result<SignBranchPosterior> {
    if !(sigma_eff > 0.0) {
        return Err(TgdError::param(format!("sigma_eff must be positive, got {sigma_eff}")));
    }
    if y.len() != mixture.dim() {
        return Err(TgdError::param(format!(
            "observation has {} entries, mixture dimension is {}",
            y.len(),
            mixture.dim()
        )));
    }
    let s2 = sigma_eff * sigma_eff;
    let v = mixture.var();
    let mut logits = Vec::with_capacity(mixture.n_components());
    let mut branches = Vec::with_capacity(mixture.n_components());
    for (w, mu) in mixture.weights().iter().zip(mixture.means()) {
        let per: Vec<CoordinateBranches> =
            mu.iter().zip(y).map(|(m, yj)| CoordinateBranches::new(*m, v, *yj, s2)).collect();
        let lw = if *w > 0.0 {
            w.ln() + per.iter().map(|b| b.log_mass()).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        };
        logits.push(lw);
        branches.push(per);
    }
    let lse = log_sum_exp(&logits);
    if !lse.is_finite() || logits.iter().any(|l| l.is_nan()) {
        return Err(TgdError::DegeneratePosterior(
            "every component has zero posterior mass".into(),
        ));
    }
    let log_component_weights: Vec<f64> = logits.iter().map(|l| l - lse).collect();
    Ok(SignBranchPosterior {
        component_weights: weights_from_log(&logits),
        log_component_weights,
        branches,
    })
}

/// Exact posterior `p(x0 | y)` for a prior and an absolute-value observation.
pub fn exact_posterior(prior: &GaussianMixturePrior, obs: &Observation) -> Result<SignBranchPosterior> {
    require_abs(obs)?;
    build_sign_branch_posterior(prior.mixture(), obs.y(), obs.sigma_y())
}

fn require_abs(obs: &Observation) -> Result<()> {
    if obs.is_abs_value() {
        Ok(())
    } else {
        Err(TgdError::param("sign-branch oracle requires the absolute-value operator"))
    }
}

impl SignBranchPosterior {
    pub fn dim(&self) -> usize {
        self.branches.first().map_or(0, Vec::len)
    }

    pub fn component_weights(&self) -> &[f64] {
        &self.component_weights
    }

    pub fn log_component_weights(&self) -> &[f64] {
        &self.log_component_weights
    }

    /// Branch parameters indexed by `[component][coordinate]`.
    pub fn branches(&self) -> &[Vec<CoordinateBranches>] {
        &self.branches
    }

    /// Normalized mass of every sign pattern; bit `j` of the index set means coordinate `j` is negative.
    pub fn orthant_masses(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; 1 << d];
        for (w, per) in self.component_weights.iter().zip(&self.branches) {
            for (pattern, slot) in out.iter_mut().enumerate() {
                let p: f64 = per
                    .iter()
                    .enumerate()
                    .map(|(j, b)| {
                        let pp = b.prob_pos();
                        if pattern >> j & 1 == 0 {
                            pp
                        } else {
                            1.0 - pp
                        }
                    })
                    .product();
                *slot += w * p;
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        sample_exact_posterior(self, rng)
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Posterior mean, in closed form from the truncated-Gaussian moments.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, per) in self.component_weights.iter().zip(&self.branches) {
            for (o, b) in out.iter_mut().zip(per) {
                let p = b.prob_pos();
                let pos = b.mean_pos + b.std * mills(-b.mean_pos / b.std);
                let neg = b.mean_neg - b.std * mills(b.mean_neg / b.std);
                *o += w * (p * pos + (1.0 - p) * neg);
            }
        }
        out
    }
}

// φ(a)/Q(a): mean shift of a standard normal truncated to (a, ∞).
fn mills(a: f64) -> f64 {
    let log_phi = -0.5 * (a * a + crate::numeric::LN_2PI);
    (log_phi - log_ndtr(-a)).exp()
}

/// Component, then sign branch, then truncated Gaussian, per coordinate.
pub fn sample_exact_posterior<R: Rng + ?Sized>(sbp: &SignBranchPosterior, rng: &mut R) -> Vec<f64> {
    let k = categorical(&sbp.component_weights, rng);
    sbp.branches[k].iter().map(|b| b.sample(rng)).collect()
}

/// Grid construction settings. The box is split into `resolution` coarse cells per
/// axis; cells whose log-mass lies within `refine_window` nats of the maximum, and
/// their neighbours, are split `refine` times per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub resolution: [usize; 2],
    pub refine: usize,
    pub refine_window: f64,
    pub boundary_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: [-1.5, -1.5],
            hi: [1.5, 1.5],
            resolution: [400, 400],
            refine: 16,
            refine_window: 30.0,
            boundary_tol: 1e-6,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        for a in 0..2 {
            if !(self.lo[a].is_finite() && self.hi[a].is_finite() && self.lo[a] < self.hi[a]) {
                return Err(TgdError::param(format!("grid axis {a} has an empty range")));
            }
            if self.resolution[a] < 3 {
                return Err(TgdError::param("grid resolution must be at least 3 per axis"));
            }
        }
        if self.refine == 0 {
            return Err(TgdError::param("refinement factor must be at least 1"));
        }
        if !(self.refine_window >= 0.0) {
            return Err(TgdError::param("refine_window must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cell {
    center: [f64; 2],
    half: [f64; 2],
}

/// Discretized 2D density over a box.
#[derive(Clone, Debug)]
pub struct GridDistribution {
    spec: GridSpec,
    cells: Vec<Cell>,
    masses: Vec<f64>,
    cdf: Vec<f64>,
    log_normalizer: f64,
    boundary_mass: f64,
}

/// Midpoint-rule discretization of an unnormalized 2D log-density.
pub fn grid_from_log_density<F>(spec: &GridSpec, log_density: F) -> Result<GridDistribution>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    use rayon::prelude::*;

    spec.validate()?;
    let [nx, ny] = spec.resolution;
    let hx = (spec.hi[0] - spec.lo[0]) / nx as f64;
    let hy = (spec.hi[1] - spec.lo[1]) / ny as f64;
    let center = |i: usize, j: usize| {
        [spec.lo[0] + (i as f64 + 0.5) * hx, spec.lo[1] + (j as f64 + 0.5) * hy]
    };
    let coarse: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|idx| log_density(&center(idx / ny, idx % ny)))
        .collect();
    let peak = coarse.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(TgdError::DegeneratePosterior("density vanishes on the whole grid".into()));
    }

    let mut refine = vec![false; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            if coarse[i * ny + j] < peak - spec.refine_window {
                continue;
            }
            for di in i.saturating_sub(1)..=(i + 1).min(nx - 1) {
                for dj in j.saturating_sub(1)..=(j + 1).min(ny - 1) {
                    refine[di * ny + dj] = true;
                }
            }
        }
    }

    let f = spec.refine;
    let log_area = (hx * hy).ln();
    let sub_log_area = log_area - 2.0 * (f as f64).ln();
    let per_cell: Vec<(Vec<Cell>, Vec<f64>, bool)> = (0..nx * ny)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / ny, idx % ny);
            let boundary = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
            let c = center(i, j);
            if !refine[idx] || f == 1 {
                let cell = Cell { center: c, half: [0.5 * hx, 0.5 * hy] };
                return (vec![cell], vec![coarse[idx] + log_area], boundary);
            }
            let (sx, sy) = (hx / f as f64, hy / f as f64);
            let x0 = c[0] - 0.5 * hx;
            let y0 = c[1] - 0.5 * hy;
            let mut cells = Vec::with_capacity(f * f);
            let mut logs = Vec::with_capacity(f * f);
            for a in 0..f {
                for b in 0..f {
                    let sc = [x0 + (a as f64 + 0.5) * sx, y0 + (b as f64 + 0.5) * sy];
                    logs.push(log_density(&sc) + sub_log_area);
                    cells.push(Cell { center: sc, half: [0.5 * sx, 0.5 * sy] });
                }
            }
            (cells, logs, boundary)
        })
        .collect();

    let all_logs: Vec<f64> = per_cell.iter().flat_map(|(_, l, _)| l.iter().copied()).collect();
    let log_normalizer = log_sum_exp(&all_logs);
    if !log_normalizer.is_finite() {
        return Err(TgdError::DegeneratePosterior("grid mass is not finite".into()));
    }

    let mut cells = Vec::new();
    let mut masses = Vec::new();
    let mut boundary_mass = 0.0;
    for (cs, ls, boundary) in per_cell {
        for (c, l) in cs.into_iter().zip(ls) {
            let m = (l - log_normalizer).exp();
            if boundary {
                boundary_mass += m;
            }
            if m > 0.0 {
                cells.push(c);
                masses.push(m);
            }
        }
    }
    if boundary_mass > spec.boundary_tol {
        return Err(TgdError::BoxTooSmall { mass: boundary_mass, threshold: spec.boundary_tol });
    }
    let total: f64 = masses.iter().sum();
    for m in masses.iter_mut() {
        *m /= total;
    }
    let mut cdf = Vec::with_capacity(masses.len());
    let mut acc = 0.0;
    for m in &masses {
        acc += m;
        cdf.push(acc);
    }
    Ok(GridDistribution {
        spec: spec.clone(),
        cells,
        masses,
        cdf,
        log_normalizer,
        boundary_mass,
    })
}

/// Grid discretization of `p(x0) p(y | x0)` for a 2D prior.
pub fn grid_posterior(
    prior: &GaussianMixturePrior,
    obs: &Observation,
    spec: &GridSpec,
) -> Result<GridDistribution> {
    if prior.dim() != 2 || obs.signal_dim() != 2 {
        return Err(TgdError::param("grid oracle is two-dimensional"));
    }
    grid_from_log_density(spec, |x| {
        prior.log_pdf(x) + obs.log_likelihood(x).unwrap_or(f64::NEG_INFINITY)
    })
}

impl GridDistribution {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Normalized cell masses, in storage order.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Cell centers, aligned with [`Self::masses`].
    pub fn centers(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.cells.iter().map(|c| c.center)
    }

    /// `ln ∫ exp(log_density)` over the box.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Mass on the outermost ring of coarse cells.
    pub fn boundary_mass(&self) -> f64 {
        self.boundary_mass
    }

    /// `Σ mass · f(center)`.
    pub fn expect<F: Fn(&[f64; 2]) -> f64>(&self, f: F) -> f64 {
        self.cells.iter().zip(&self.masses).map(|(c, m)| m * f(&c.center)).sum()
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.expect(|x| x[0]), self.expect(|x| x[1])]
    }

    /// Mass of the cells whose center satisfies `pred`.
    pub fn mass_where<F: Fn(&[f64; 2]) -> bool>(&self, pred: F) -> f64 {
        self.cells.iter().zip(&self.masses).filter(|(c, _)| pred(&c.center)).map(|(_, m)| m).sum()
    }

    /// Posterior component weights: prior responsibilities averaged over the grid.
    pub fn component_weights(&self, mixture: &IsotropicMixture) -> Vec<f64> {
        let mut out = vec![0.0; mixture.n_components()];
        for (c, m) in self.cells.iter().zip(&self.masses) {
            if *m < 1e-300 {
                continue;
            }
            for (o, r) in out.iter_mut().zip(mixture.responsibilities(&c.center)) {
                *o += m * r;
            }
        }
        out
    }

    /// Cell drawn by mass, then a uniform point inside it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let total = *self.cdf.last().expect("grid has at least one cell");
        let u = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|c| *c <= u).min(self.cells.len() - 1);
        let c = &self.cells[k];
        (0..2)
            .map(|a| c.center[a] + c.half[a] * (2.0 * rng.random::<f64>() - 1.0))
            .collect()
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Write points as CSV with header `x0,x1,...`.
pub fn write_points_csv(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = points.first().map_or(0, Vec::len);
    w.write_record((0..d).map(|j| format!("x{j}")))?;
    for p in points {
        w.write_record(p.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Write points as little-endian binary: `u64 n`, `u64 dim`, then `n·dim` `f64` values row-major.
pub fn write_points_bin(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    let d = points.first().map_or(0, Vec::len);
    let mut buf = Vec::with_capacity(16 + 8 * d * points.len());
    buf.extend_from_slice(&(points.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u64).to_le_bytes());
    for p in points {
        for v in p {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Inverse of [`write_points_bin`].
pub fn read_points_bin(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = std::fs::read(path)?;
    let word = |i: usize| -> Result<[u8; 8]> {
        bytes
            .get(8 * i..8 * i + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| TgdError::param("truncated point file"))
    };
    let n = u64::from_le_bytes(word(0)?) as usize;
    let d = u64::from_le_bytes(word(1)?) as usize;
    (0..n)
        .map(|i| (0..d).map(|j| Ok(f64::from_le_bytes(word(2 + i * d + j)?))).collect())
        .collect()
}
