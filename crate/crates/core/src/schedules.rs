//! Outer noise grids and likelihood-tempering schedules.
//!
//! Both schedule types are indexed by stage `r`, where `r = R` is the first
//! (highest-noise, weakest-conditioning) stage and `r = 0` the terminal one.
//! `levels()[r]` is therefore `s_r`, and sampling visits the vector back to front.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TgdError};

/// Decreasing noise levels `s_R > ... > s_0 > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    levels: Vec<f64>,
    curvature: f64,
}

impl NoiseSchedule {
    /// Wrap explicit levels given by stage index (`levels[0] = s_0`).
    pub fn from_levels(levels: Vec<f64>, curvature: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(TgdError::param("noise schedule needs at least one level"));
        }
        if levels.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(TgdError::param("noise levels must be finite and positive"));
        }
        let s_min = levels[0];
        let s_max = levels[levels.len() - 1];
        for w in levels.windows(2) {
            let ok = if s_max > s_min { w[1] > w[0] } else { w[1] >= w[0] };
            if !ok {
                return Err(TgdError::param(
                    "noise levels must strictly increase with the stage index",
                ));
            }
        }
        Ok(Self { levels, curvature })
    }

    /// Number of outer transitions `R`.
    pub fn stages(&self) -> usize {
        self.levels.len() - 1
    }

    /// `s_r`.
    #[inline]
    pub fn level(&self, r: usize) -> f64 {
        self.levels[r]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn s_max(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    pub fn s_min(&self) -> f64 {
        self.levels[0]
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    /// Levels in the order they are visited: `s_R, s_{R-1}, ..., s_0`.
    pub fn sampling_order(&self) -> impl Iterator<Item = f64> + '_ {
        self.levels.iter().rev().copied()
    }
}

/// Karras/EDM discretization: interpolate linearly in `s^(1/c)` from `s_max` to `s_min`.
///
/// The endpoints are written back exactly after evaluation so they are bit-equal
/// to the requested values.
pub fn edm_noise_grid(n_points: usize, s_max: f64, s_min: f64, curvature: f64) -> Result<NoiseSchedule> {
    if n_points == 0 {
        return Err(TgdError::param("EDM grid needs n_points >= 1"));
    }
    if !(s_max > 0.0 && s_min > 0.0 && curvature > 0.0) {
        return Err(TgdError::param(format!(
            "EDM grid needs positive s_max, s_min and curvature (got {s_max}, {s_min}, {curvature})"
        )));
    }
    if s_min > s_max {
        return Err(TgdError::param(format!("s_min {s_min} exceeds s_max {s_max}")));
    }
    if n_points == 1 {
        return NoiseSchedule::from_levels(vec![s_max], curvature);
    }
    let inv = 1.0 / curvature;
    let hi = s_max.powf(inv);
    let lo = s_min.powf(inv);
    let last = (n_points - 1) as f64;
    // i counts from the high-noise end.
    let mut high_first: Vec<f64> = (0..n_points)
        .map(|i| {
            let f = i as f64 / last;
            (hi + f * (lo - hi)).powf(curvature)
        })
        .collect();
    high_first[0] = s_max;
    high_first[n_points - 1] = s_min;
    high_first.reverse();
    NoiseSchedule::from_levels(high_first, curvature)
}

/// Non-decreasing tempering exponents `λ_R <= ... <= λ_0 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperingSchedule {
    exponents: Vec<f64>,
}

impl TemperingSchedule {
    /// Wrap exponents by stage index (`exponents[0] = λ_0`).
    pub fn from_exponents(exponents: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(TgdError::param("tempering schedule needs at least one exponent"));
        }
        if exponents.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(TgdError::param("tempering exponents must lie in [0, 1]"));
        }
        if exponents[0] != 1.0 {
            return Err(TgdError::param("terminal tempering exponent must equal 1"));
        }
        if exponents.windows(2).any(|w| w[1] > w[0]) {
            return Err(TgdError::param(
                "tempering exponents must be non-decreasing as the stage index decreases",
            ));
        }
        Ok(Self { exponents })
    }

    /// Constant schedule `λ ≡ 1` over `R + 1` stages.
    pub fn constant_one(stages: usize) -> Self {
        Self {
            exponents: vec![1.0; stages + 1],
        }
    }

    pub fn stages(&self) -> usize {
        self.exponents.len() - 1
    }

    /// `λ_r`.
    #[inline]
    pub fn exponent(&self, r: usize) -> f64 {
        self.exponents[r]
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }
}

fn check_lambda_r(lambda_r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda_r) {
        return Err(TgdError::param(format!("lambda_R must lie in [0, 1], got {lambda_r}")));
    }
    Ok(())
}

/// Linear schedule in the stage index: `λ_r = λ_R + (R - r)/R · (1 - λ_R)`.
pub fn uniform_tempering(stages: usize, lambda_r: f64) -> Result<TemperingSchedule> {
    check_lambda_r(lambda_r)?;
    if stages == 0 {
        return TemperingSchedule::from_exponents(vec![1.0]);
    }
    let big_r = stages as f64;
    let mut exponents: Vec<f64> = (0..=stages)
        .map(|r| lambda_r + ((stages - r) as f64 / big_r) * (1.0 - lambda_r))
        .collect();
    exponents[0] = 1.0;
    exponents[stages] = lambda_r;
    TemperingSchedule::from_exponents(exponents)
}

/// Schedule tied to normalized noise progress:
/// `λ_r = λ_R + (1 - λ_R) · ((s_R - s_r) / s_R)^α`, with `λ_0` set to exactly 1.
pub fn noise_dependent_tempering(
    noise: &NoiseSchedule,
    lambda_r: f64,
    alpha: f64,
) -> Result<TemperingSchedule> {
    check_lambda_r(lambda_r)?;
    if !(alpha > 0.0) {
        return Err(TgdError::param(format!("alpha must be positive, got {alpha}")));
    }
    let s_top = noise.s_max();
    let mut exponents: Vec<f64> = noise
        .levels()
        .iter()
        .map(|&s| {
            let progress = ((s_top - s) / s_top).clamp(0.0, 1.0);
            (lambda_r + (1.0 - lambda_r) * progress.powf(alpha)).min(1.0)
        })
        .collect();
    // s_0 > 0 leaves the formula short of 1 at the terminal stage.
    exponents[0] = 1.0;
    TemperingSchedule::from_exponents(exponents)
}
