//! The achievable sum-rate objective, its Wirtinger ascent directions, and
//! the training losses.
//!
//! All gradient operations return the derivative with respect to the
//! conjugated variable, i.e. the direction D for which the one-sided ascent
//! step `X + mu * D` increases the rate, and which satisfies
//! `(d/dt) R(X + t*Delta)|_0 = 2 Re<D, Delta>` for every perturbation Delta.
//! That directional-derivative contract is checked by finite differences in
//! the tests and is the authoritative definition of each direction.

use thiserror::Error;

use crate::channel::{ChannelSet, ErrorSet};
use crate::matcore::{self, adjoint, identity, logdet_hpd, solve_hpd, CMat, MatError};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("channel set must be normalized")]
    NotNormalized,
    #[error("rate trajectory is empty")]
    EmptyTrajectory,
    #[error("error set is empty")]
    EmptySet,
    #[error("numerical failure: {0}")]
    Numeric(#[from] MatError),
}

/// Analog-architecture constraint tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AnalogConstraint {
    Unconstrained,
    PhaseShifter,
}

/// Hybrid precoder pair: one analog M×L matrix shared across bands plus a
/// digital L×N matrix per band.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    pub analog: CMat,
    pub digital: Vec<CMat>,
    pub constraint: AnalogConstraint,
}

impl Precoders {
    /// Average transmit power (1/B) sum_b ||W_a W_d,b||_F^2.
    pub fn avg_power(&self) -> f64 {
        let b = self.digital.len() as f64;
        self.digital
            .iter()
            .map(|wd| (&self.analog * wd).norm_squared())
            .sum::<f64>()
            / b
    }
}

fn check_dims(p: &Precoders, ch: &ChannelSet) -> Result<(), ObjectiveError> {
    if !ch.normalized {
        return Err(ObjectiveError::NotNormalized);
    }
    let d = ch.dims;
    if p.analog.shape() != (d.antennas, d.rf_chains) {
        return Err(ObjectiveError::DimensionMismatch(format!(
            "analog precoder is {:?}, expected ({}, {})",
            p.analog.shape(),
            d.antennas,
            d.rf_chains
        )));
    }
    if p.digital.len() != d.bands {
        return Err(ObjectiveError::DimensionMismatch(format!(
            "{} digital precoders for {} bands",
            p.digital.len(),
            d.bands
        )));
    }
    for wd in &p.digital {
        if wd.shape() != (d.rf_chains, d.users) {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "digital precoder is {:?}, expected ({}, {})",
                wd.shape(),
                d.rf_chains,
                d.users
            )));
        }
    }
    Ok(())
}

/// Gram matrix G_b = I_N + F Fᴴ with F = H̃_b W_a W_d,b.
fn gram(h: &CMat, wa: &CMat, wd: &CMat) -> CMat {
    let f = h * wa * wd;
    identity(f.nrows()) + &f * adjoint(&f)
}

/// Sum-rate (1/B) sum_b log2 |I_N + H̃_b W_a W_d,b W_d,bᴴ W_aᴴ H̃_bᴴ|.
pub fn sum_rate(p: &Precoders, ch: &ChannelSet) -> Result<f64, ObjectiveError> {
    check_dims(p, ch)?;
    let mut acc = 0.0;
    for (h, wd) in ch.bands.iter().zip(p.digital.iter()) {
        acc += logdet_hpd(&gram(h, &p.analog, wd))?;
    }
    Ok(acc / ch.dims.bands as f64)
}

/// Sum-rate of the channel perturbed band-wise by `errors` (normalized domain).
pub fn sum_rate_perturbed(
    p: &Precoders,
    ch: &ChannelSet,
    errors: &[CMat],
) -> Result<f64, ObjectiveError> {
    check_dims(p, ch)?;
    if errors.len() != ch.dims.bands {
        return Err(ObjectiveError::DimensionMismatch(format!(
            "{} error matrices for {} bands",
            errors.len(),
            ch.dims.bands
        )));
    }
    let mut acc = 0.0;
    for ((h, e), wd) in ch.bands.iter().zip(errors.iter()).zip(p.digital.iter()) {
        acc += logdet_hpd(&gram(&(h + e), &p.analog, wd))?;
    }
    Ok(acc / ch.dims.bands as f64)
}

/// Ascent direction of the sum-rate in the analog precoder:
/// (1/(B ln2)) sum_b H̃_bᴴ G_b⁻¹ H̃_b W_a W_d,b W_d,bᴴ.
pub fn grad_analog(p: &Precoders, ch: &ChannelSet) -> Result<CMat, ObjectiveError> {
    check_dims(p, ch)?;
    let d = ch.dims;
    let mut acc = matcore::zeros(d.antennas, d.rf_chains);
    for (h, wd) in ch.bands.iter().zip(p.digital.iter()) {
        let g = gram(h, &p.analog, wd);
        // N×L right-hand side: H̃ W_a W_d W_dᴴ
        let rhs = h * &p.analog * wd * adjoint(wd);
        acc += adjoint(h) * solve_hpd(&g, &rhs)?;
    }
    Ok(acc.scale(1.0 / (d.bands as f64 * LN_2)))
}

/// Ascent direction of the sum-rate in the digital precoder of band `b`:
/// (1/(B ln2)) W_aᴴ H̃_bᴴ G_b⁻¹ H̃_b W_a W_d,b.
pub fn grad_digital(p: &Precoders, ch: &ChannelSet, b: usize) -> Result<CMat, ObjectiveError> {
    check_dims(p, ch)?;
    let d = ch.dims;
    let h = &ch.bands[b];
    let wd = &p.digital[b];
    let g = gram(h, &p.analog, wd);
    let rhs = h * &p.analog * wd;
    let dir = adjoint(&p.analog) * adjoint(h) * solve_hpd(&g, &rhs)?;
    Ok(dir.scale(1.0 / (d.bands as f64 * LN_2)))
}

/// Ascent direction of the perturbed sum-rate in the error matrix of band
/// `b`: (1/(B ln2)) G_b⁻¹ (H̃_b + E_b) W_a W_d,b W_d,bᴴ W_aᴴ. Used with a
/// negative step when the adversary descends the rate.
pub fn grad_error(
    p: &Precoders,
    ch: &ChannelSet,
    errors: &[CMat],
    b: usize,
) -> Result<CMat, ObjectiveError> {
    check_dims(p, ch)?;
    let d = ch.dims;
    if errors.len() != d.bands || errors[b].shape() != (d.users, d.antennas) {
        return Err(ObjectiveError::DimensionMismatch(
            "error matrices must be one N×M matrix per band".into(),
        ));
    }
    let c = &ch.bands[b] + &errors[b];
    let wd = &p.digital[b];
    let g = gram(&c, &p.analog, wd);
    let rhs = &c * &p.analog * wd * adjoint(wd) * adjoint(&p.analog);
    Ok(solve_hpd(&g, &rhs)?.scale(1.0 / (d.bands as f64 * LN_2)))
}

/// Unfolded-PGA training loss: (1/K) sum_k ln(1+k) * (-rate_k) over the
/// post-iteration rates (k = 1..K).
pub fn pga_loss(rates: &[f64]) -> Result<f64, ObjectiveError> {
    if rates.is_empty() {
        return Err(ObjectiveError::EmptyTrajectory);
    }
    let k_total = rates.len() as f64;
    let acc: f64 = rates
        .iter()
        .enumerate()
        .map(|(i, r)| ((i + 2) as f64).ln() * (-r))
        .sum();
    Ok(acc / k_total)
}

/// Robust training loss: max over the error set of the negative perturbed
/// sum-rate at the final precoders.
pub fn robust_loss(p: &Precoders, ch: &ChannelSet, es: &ErrorSet) -> Result<f64, ObjectiveError> {
    Ok(-min_rate_over_errors(p, ch, es)?)
}

/// Minimal rate over the finite error set (the maximin evaluation metric).
pub fn min_rate_over_errors(
    p: &Precoders,
    ch: &ChannelSet,
    es: &ErrorSet,
) -> Result<f64, ObjectiveError> {
    if es.patterns.is_empty() {
        return Err(ObjectiveError::EmptySet);
    }
    let mut min = f64::INFINITY;
    for pattern in &es.patterns {
        let r = sum_rate_perturbed(p, ch, pattern)?;
        if r < min {
            min = r;
        }
    }
    Ok(min)
}
