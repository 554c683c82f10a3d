//! Observation models `y = A(x_0) + σ_y ε` and the likelihoods built on them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TgdError};
use crate::numeric::LN_2PI;

/// Forward operator `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operator", rename_all = "snake_case")]
pub enum Operator {
    /// Elementwise `|x|`.
    AbsValue,
    /// Keep the entries flagged `true`, in order.
    Mask { keep: Vec<bool> },
}

/// Observation vector with Gaussian noise of known std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(flatten)]
    operator: Operator,
    y: Vec<f64>,
    sigma_y: f64,
}

impl Observation {
    pub fn abs_value(y: Vec<f64>, sigma_y: f64) -> Result<Self> {
        Self::new(Operator::AbsValue, y, sigma_y)
    }

    pub fn mask(keep: Vec<bool>, y: Vec<f64>, sigma_y: f64) -> Result<Self> {
        Self::new(Operator::Mask { keep }, y, sigma_y)
    }

    pub fn new(operator: Operator, y: Vec<f64>, sigma_y: f64) -> Result<Self> {
        if !(sigma_y.is_finite() && sigma_y > 0.0) {
            return Err(TgdError::param(format!("sigma_y must be positive, got {sigma_y}")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(TgdError::param("observation must be finite"));
        }
        if let Operator::Mask { keep } = &operator {
            let kept = keep.iter().filter(|k| **k).count();
            if kept != y.len() {
                return Err(TgdError::param(format!(
                    "mask keeps {kept} entries but y has {}",
                    y.len()
                )));
            }
        }
        Ok(Self { operator, y, sigma_y })
    }

    /// Simulate an observation of `x0` under `operator`.
    pub fn simulate<R: Rng + ?Sized>(
        operator: Operator,
        x0: &[f64],
        sigma_y: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let a = apply_operator(&operator, x0)?;
        let y = a
            .into_iter()
            .map(|v| {
                let e: f64 = StandardNormal.sample(rng);
                v + sigma_y * e
            })
            .collect();
        Self::new(operator, y, sigma_y)
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn is_abs_value(&self) -> bool {
        matches!(self.operator, Operator::AbsValue)
    }

    /// Dimension of the clean signal this observation expects.
    pub fn signal_dim(&self) -> usize {
        match &self.operator {
            Operator::AbsValue => self.y.len(),
            Operator::Mask { keep } => keep.len(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.signal_dim() {
            return Err(TgdError::param(format!(
                "signal has dimension {} but the observation expects {}",
                x.len(),
                self.signal_dim()
            )));
        }
        Ok(())
    }

    /// `A(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        apply_operator(&self.operator, x)
    }

    fn gaussian_log_lik(&self, x: &[f64], std: f64) -> Result<f64> {
        self.check_dim(x)?;
        let var = std * std;
        let n = self.y.len() as f64;
        let rss = self.residual_sq(x);
        Ok(-0.5 * (n * (LN_2PI + var.ln()) + rss / var))
    }

    fn residual_sq(&self, x: &[f64]) -> f64 {
        match &self.operator {
            Operator::AbsValue => self
                .y
                .iter()
                .zip(x)
                .map(|(y, xi)| {
                    let r = y - xi.abs();
                    r * r
                })
                .sum(),
            Operator::Mask { keep } => keep
                .iter()
                .zip(x)
                .filter(|(k, _)| **k)
                .zip(&self.y)
                .map(|((_, xi), y)| {
                    let r = y - xi;
                    r * r
                })
                .sum(),
        }
    }

    /// `log p(y | x0) = Σ_j log N(y_j; A(x0)_j, σ_y²)`.
    pub fn log_likelihood(&self, x0: &[f64]) -> Result<f64> {
        self.gaussian_log_lik(x0, self.sigma_y)
    }

    /// `λ · log p(y | x0)`, exactly zero when `λ = 0`.
    pub fn tempered_log_likelihood(&self, x0: &[f64], lambda: f64) -> Result<f64> {
        if lambda < 0.0 {
            return Err(TgdError::param(format!("tempering exponent must be >= 0, got {lambda}")));
        }
        if lambda == 0.0 {
            self.check_dim(x0)?;
            return Ok(0.0);
        }
        Ok(lambda * self.log_likelihood(x0)?)
    }

    /// Smoothed proposal std `γ s + σ_y`.
    pub fn proposal_std(&self, s: f64, gamma: f64) -> f64 {
        gamma * s + self.sigma_y
    }

    /// `Σ_j log N(y_j; A(x)_j, (γ s + σ_y)²)`.
    pub fn proposal_log_likelihood(&self, x: &[f64], s: f64, gamma: f64) -> Result<f64> {
        let std = self.proposal_std(s, gamma);
        if !(std > 0.0) {
            return Err(TgdError::param(format!("proposal std must be positive, got {std}")));
        }
        self.gaussian_log_lik(x, std)
    }

    /// `∇_x log N(y; A(x), std² I)`, using `sign(0) = 0` for the absolute value.
    pub fn guidance_gradient(&self, xhat0: &[f64], std: f64) -> Vec<f64> {
        let inv = 1.0 / (std * std);
        match &self.operator {
            Operator::AbsValue => self
                .y
                .iter()
                .zip(xhat0)
                .map(|(y, x)| sign0(*x) * (y - x.abs()) * inv)
                .collect(),
            Operator::Mask { keep } => {
                let mut ys = self.y.iter();
                keep.iter()
                    .zip(xhat0)
                    .map(|(k, x)| match k {
                        true => (ys.next().expect("mask validated against y") - x) * inv,
                        false => 0.0,
                    })
                    .collect()
            }
        }
    }

    /// `||A(x0) - y||²`.
    pub fn measurement_error(&self, x0: &[f64]) -> Result<f64> {
        self.check_dim(x0)?;
        Ok(self.residual_sq(x0))
    }
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn apply_operator(op: &Operator, x: &[f64]) -> Result<Vec<f64>> {
    Ok(match op {
        Operator::AbsValue => x.iter().map(|v| v.abs()).collect(),
        Operator::Mask { keep } => {
            if keep.len() != x.len() {
                return Err(TgdError::param("mask length differs from signal dimension"));
            }
            keep.iter().zip(x).filter(|(k, _)| **k).map(|(_, v)| *v).collect()
        }
    })
}

/// Index of the candidate with the largest log-likelihood, lowest index on ties.
pub fn argmax_likelihood(obs: &Observation, candidates: &[Vec<f64>]) -> Result<usize> {
    let mut best = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let ll = obs.log_likelihood(c)?;
        if ll > best_ll || (i == 0 && ll == best_ll) {
            best = i;
            best_ll = ll;
        }
    }
    if candidates.is_empty() {
        return Err(TgdError::param("no candidates to select from"));
    }
    Ok(best)
}

/// Index of the candidate with the smallest measurement error, lowest index on ties.
pub fn argmin_measurement_error(obs: &Observation, candidates: &[Vec<f64>]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(TgdError::param("no candidates to select from"));
    }
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let e = obs.measurement_error(c)?;
        if e < best_err {
            best = i;
            best_err = e;
        }
    }
    Ok(best)
}
