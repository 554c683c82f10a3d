//! Sliced Wasserstein distances between point clouds.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TgdError};
use crate::numeric::dot;

/// A finite point cloud with optional weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    points: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let d = points.first().map(Vec::len).ok_or_else(|| TgdError::param("empty sample set"))?;
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(TgdError::param("sample set points must share a positive dimension"));
        }
        Ok(Self { points, weights: None })
    }

    /// Weighted set; weights are rescaled to sum to one.
    pub fn weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let mut set = Self::new(points)?;
        if weights.len() != set.points.len() {
            return Err(TgdError::param("weights and points differ in length"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(TgdError::param("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(TgdError::param("weights sum to zero"));
        }
        set.weights = Some(weights.into_iter().map(|w| w / total).collect());
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn project(&self, dir: &[f64]) -> Vec<f64> {
        self.points.iter().map(|p| dot(p, dir)).collect()
    }
}

/// `(mean_i |a_(i) − b_(i)|^p)^{1/p}` over sorted, equal-length inputs.
pub fn wasserstein_1d(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(TgdError::param("empty input to wasserstein_1d"));
    }
    if a.len() != b.len() {
        return Err(TgdError::param("wasserstein_1d needs equal sizes"));
    }
    if !(p >= 1.0) {
        return Err(TgdError::param(format!("order p must be >= 1, got {p}")));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| lp(x - y, p)).sum();
    Ok(root(sum / a.len() as f64, p))
}

/// Quantile-coupling distance between two weighted, sorted 1D distributions.
pub fn wasserstein_1d_weighted(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(TgdError::param("empty input to wasserstein_1d"));
    }
    let (ta, tb): (f64, f64) = (wa.iter().sum(), wb.iter().sum());
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (wa[0] / ta, wb[0] / tb);
    let mut sum = 0.0;
    loop {
        let m = ra.min(rb);
        sum += m * lp(a[i] - b[j], p);
        ra -= m;
        rb -= m;
        if ra <= 0.0 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = wa[i] / ta;
        }
        if rb <= 0.0 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = wb[j] / tb;
        }
    }
    Ok(root(sum, p))
}

#[inline]
fn lp(d: f64, p: f64) -> f64 {
    if p == 2.0 {
        d * d
    } else if p == 1.0 {
        d.abs()
    } else {
        d.abs().powf(p)
    }
}

#[inline]
fn root(v: f64, p: f64) -> f64 {
    if p == 2.0 {
        v.sqrt()
    } else if p == 1.0 {
        v
    } else {
        v.powf(1.0 / p)
    }
}

/// Unit directions obtained by normalizing standard Gaussian vectors.
pub fn random_directions<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let nrm = dot(&v, &v).sqrt();
            if nrm > 0.0 {
                break v.into_iter().map(|x| x / nrm).collect();
            }
        })
        .collect()
}

/// Max- and mean-sliced distances over one shared direction list.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicedDistances {
    pub max: f64,
    pub mean: f64,
    pub per_direction: Vec<f64>,
}

fn sort(v: &mut [f64]) {
    v.sort_unstable_by(f64::total_cmp);
}

/// Sorted projections with aligned weights, or `None` weights when uniform.
fn sorted_projection(set: &SampleSet, keep: Option<&[usize]>, dir: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
    let mut proj = set.project(dir);
    if let Some(k) = keep {
        proj = k.iter().map(|&i| proj[i]).collect();
    }
    match set.weights() {
        None => {
            sort(&mut proj);
            (proj, None)
        }
        Some(w) => {
            let mut pairs: Vec<(f64, f64)> = proj.into_iter().zip(w.iter().copied()).collect();
            pairs.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
            let (v, w) = pairs.into_iter().unzip();
            (v, Some(w))
        }
    }
}

/// Sliced distances over explicit directions. When two unweighted sets differ in
/// size, the larger one is uniformly subsampled to the smaller size using `rng`.
pub fn sliced_distances<R: Rng + ?Sized>(
    x: &SampleSet,
    y: &SampleSet,
    dirs: &[Vec<f64>],
    p: f64,
    rng: &mut R,
) -> Result<SlicedDistances> {
    if x.dim() != y.dim() {
        return Err(TgdError::param("sample sets differ in dimension"));
    }
    if dirs.is_empty() {
        return Err(TgdError::param("at least one projection is required"));
    }
    let weighted = x.weights().is_some() || y.weights().is_some();
    let (mut kx, mut ky) = (None, None);
    if !weighted && x.len() != y.len() {
        let m = x.len().min(y.len());
        let pick = |n: usize, rng: &mut R| {
            let mut v = sample_indices(rng, n, m).into_vec();
            v.sort_unstable();
            v
        };
        if x.len() > m {
            kx = Some(pick(x.len(), rng));
        } else {
            ky = Some(pick(y.len(), rng));
        }
    }
    let per_direction = dirs
        .iter()
        .map(|d| {
            let (a, wa) = sorted_projection(x, kx.as_deref(), d);
            let (b, wb) = sorted_projection(y, ky.as_deref(), d);
            if weighted {
                let wa = wa.unwrap_or_else(|| vec![1.0; a.len()]);
                let wb = wb.unwrap_or_else(|| vec![1.0; b.len()]);
                wasserstein_1d_weighted(&a, &wa, &b, &wb, p)
            } else {
                wasserstein_1d(&a, &b, p)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = per_direction.iter().copied().fold(0.0, f64::max);
    let mean = per_direction.iter().sum::<f64>() / per_direction.len() as f64;
    Ok(SlicedDistances { max, mean, per_direction })
}

/// Max over `n_proj` random directions of the 1D `W_p` distance.
pub fn max_sliced_wasserstein<R: Rng + ?Sized>(
    x: &SampleSet,
    y: &SampleSet,
    n_proj: usize,
    p: f64,
    rng: &mut R,
) -> Result<f64> {
    let dirs = random_directions(x.dim(), n_proj, rng);
    Ok(sliced_distances(x, y, &dirs, p, rng)?.max)
}

/// Mean over `n_proj` random directions of the 1D `W_p` distance.
pub fn mean_sliced_wasserstein<R: Rng + ?Sized>(
    x: &SampleSet,
    y: &SampleSet,
    n_proj: usize,
    p: f64,
    rng: &mut R,
) -> Result<f64> {
    let dirs = random_directions(x.dim(), n_proj, rng);
    Ok(sliced_distances(x, y, &dirs, p, rng)?.mean)
}

/// A reference set with its projections sorted once, for repeated comparisons
/// against equally sized unweighted sets.
#[derive(Clone, Debug)]
pub struct ProjectedReference {
    dirs: Vec<Vec<f64>>,
    sorted: Vec<Vec<f64>>,
}

impl ProjectedReference {
    pub fn new(reference: &SampleSet, dirs: Vec<Vec<f64>>) -> Result<Self> {
        if reference.weights().is_some() {
            return Err(TgdError::param("projected reference must be unweighted"));
        }
        if dirs.is_empty() || dirs.iter().any(|d| d.len() != reference.dim()) {
            return Err(TgdError::param("directions must match the reference dimension"));
        }
        let sorted = dirs.iter().map(|d| sorted_projection(reference, None, d).0).collect();
        Ok(Self { dirs, sorted })
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.dirs
    }

    pub fn len(&self) -> usize {
        self.sorted[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted[0].is_empty()
    }

    pub fn distances(&self, points: &[Vec<f64>], p: f64) -> Result<SlicedDistances> {
        if points.len() != self.len() {
            return Err(TgdError::param(format!(
                "expected {} points, got {}",
                self.len(),
                points.len()
            )));
        }
        let set = SampleSet::new(points.to_vec())?;
        let per_direction = self
            .dirs
            .iter()
            .zip(&self.sorted)
            .map(|(d, r)| wasserstein_1d(&sorted_projection(&set, None, d).0, r, p))
            .collect::<Result<Vec<f64>>>()?;
        let max = per_direction.iter().copied().fold(0.0, f64::max);
        let mean = per_direction.iter().sum::<f64>() / per_direction.len() as f64;
        Ok(SlicedDistances { max, mean, per_direction })
    }
}
