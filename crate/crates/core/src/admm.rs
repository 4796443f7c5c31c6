//! Single-band ADMM baseline: variable splitting V = W_a W_d, the augmented
//! Lagrangian, and its four alternating updates.
//!
//! The Lagrangian trace coupling Re Tr[Yᵀ(W_aW_d − V)] takes the real part
//! so the functional is real-valued. Both matrix gradients are descent
//! directions defined authoritatively by the finite-difference contract
//! `(d/dt) L(X + tΔ)|_0 = 2 Re<D, Δ>` with ⟨X,Y⟩ = Tr[XᴴY]; the tests
//! enforce it. The multiplier update keeps the descent sign `Y − μ_y(W_aW_d
//! − V)`; a dual-ascent flag is available on [`admm_run_with_mode`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{gaussian_matrix, ChannelSet};
use crate::matcore::{adjoint, logdet_hpd, solve_hpd, CMat, MatError};
use crate::objective::{AnalogConstraint, ObjectiveError, Precoders};
use crate::optim::{project_digital, OptimError};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate parameters: lambda + mu must be positive")]
    DegenerateParameters,
    #[error(transparent)]
    Numeric(#[from] MatError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// ADMM variables: the precoder pair, the auxiliary split V ≈ W_a W_d, and
/// the multiplier Y.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w_a: CMat,
    pub w_d: CMat,
    pub v: CMat,
    pub y: CMat,
}

impl AdmmState {
    fn check(&self) -> Result<(), AdmmError> {
        let (m, l) = self.w_a.shape();
        let (l2, n) = self.w_d.shape();
        if l2 != l || self.v.shape() != (m, n) || self.y.shape() != (m, n) {
            return Err(AdmmError::DimensionMismatch(format!(
                "W_a {:?}, W_d {:?}, V {:?}, Y {:?}",
                self.w_a.shape(),
                self.w_d.shape(),
                self.v.shape(),
                self.y.shape()
            )));
        }
        Ok(())
    }
}

/// Per-iteration parameters: row k holds (λ, μ, μ_a, μ_d, μ_y).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdmmParams {
    pub rows: Vec<[f64; 5]>,
}

impl AdmmParams {
    pub fn fixed(i_max: usize, lambda: f64, mu: f64, mu_a: f64, mu_d: f64, mu_y: f64) -> Self {
        Self { rows: vec![[lambda, mu, mu_a, mu_d, mu_y]; i_max] }
    }

    pub fn iterations(&self) -> usize {
        self.rows.len()
    }
}

fn single_band(ch: &ChannelSet) -> Result<&CMat, AdmmError> {
    if !ch.normalized {
        return Err(ObjectiveError::NotNormalized.into());
    }
    if ch.dims.bands != 1 {
        return Err(AdmmError::DimensionMismatch(format!(
            "ADMM is single-band; got B={}",
            ch.dims.bands
        )));
    }
    Ok(&ch.bands[0])
}

/// Gram matrix I_N + H̃ W_a W_d W_dᴴ W_aᴴ H̃ᴴ of the current iterate.
fn gram(h: &CMat, s: &AdmmState) -> CMat {
    let f = h * &s.w_a * &s.w_d;
    crate::matcore::identity(f.nrows()) + &f * adjoint(&f)
}

/// Augmented Lagrangian
/// −log2|G| + λ(‖V‖²_F − N) + μ‖W_aW_d − V‖²_F + Re Tr[Yᵀ(W_aW_d − V)].
pub fn lagrangian(
    s: &AdmmState,
    ch: &ChannelSet,
    lambda: f64,
    mu: f64,
) -> Result<f64, AdmmError> {
    s.check()?;
    let h = single_band(ch)?;
    let n = ch.dims.users as f64;
    let rate = logdet_hpd(&gram(h, s))?;
    let gap = &s.w_a * &s.w_d - &s.v;
    let coupling: f64 = s
        .y
        .iter()
        .zip(gap.iter())
        .map(|(y, g)| (y * g).re)
        .sum();
    Ok(-rate + lambda * (s.v.norm_squared() - n) + mu * gap.norm_squared() + coupling)
}

/// Descent direction of the Lagrangian in the analog precoder:
/// −(1/ln2) H̃ᴴ G⁻¹ H̃ W_a W_d W_dᴴ + μ(W_aW_d − V)W_dᴴ + ½ Y* W_dᴴ.
pub fn admm_grad_wa(s: &AdmmState, ch: &ChannelSet, mu: f64) -> Result<CMat, AdmmError> {
    s.check()?;
    let h = single_band(ch)?;
    let g = gram(h, s);
    let rhs = h * &s.w_a * &s.w_d * adjoint(&s.w_d);
    let rate_dir = (adjoint(h) * solve_hpd(&g, &rhs)?).scale(1.0 / LN_2);
    let gap = &s.w_a * &s.w_d - &s.v;
    Ok(-rate_dir + (gap.scale(mu) + s.y.conjugate().scale(0.5)) * adjoint(&s.w_d))
}

/// Descent direction of the Lagrangian in the digital precoder:
/// −(1/ln2) W_aᴴ H̃ᴴ G⁻¹ H̃ W_a W_d + μ W_aᴴ(W_aW_d − V) + ½ W_aᴴ Y*.
pub fn admm_grad_wd(s: &AdmmState, ch: &ChannelSet, mu: f64) -> Result<CMat, AdmmError> {
    s.check()?;
    let h = single_band(ch)?;
    let g = gram(h, s);
    let rhs = h * &s.w_a * &s.w_d;
    let rate_dir = (adjoint(&s.w_a) * adjoint(h) * solve_hpd(&g, &rhs)?).scale(1.0 / LN_2);
    let gap = &s.w_a * &s.w_d - &s.v;
    Ok(-rate_dir + adjoint(&s.w_a) * (gap.scale(mu) + s.y.conjugate().scale(0.5)))
}

/// Closed-form auxiliary update
/// V = (μ/(λ+μ)) W_aW_d − (1/(λ+μ)) Y*.
pub fn admm_v_update(s: &AdmmState, lambda: f64, mu: f64) -> Result<CMat, AdmmError> {
    s.check()?;
    let denom = lambda + mu;
    if denom <= 0.0 {
        return Err(AdmmError::DegenerateParameters);
    }
    Ok((&s.w_a * &s.w_d).scale(mu / denom) - s.y.conjugate().scale(1.0 / denom))
}

/// Multiplier step Y ← Y − μ_y(W_aW_d − V), exactly as printed.
pub fn admm_y_update(s: &AdmmState, mu_y: f64) -> CMat {
    &s.y - (&s.w_a * &s.w_d - &s.v).scale(mu_y)
}

/// One run's outcome: the power-projected final precoders and the
/// unconstrained rate recorded at init and after each iteration.
#[derive(Debug, Clone)]
pub struct AdmmRun {
    pub precoders: Precoders,
    pub final_rate: f64,
    pub rates: Vec<f64>,
    pub state: AdmmState,
}

pub fn admm_run(ch: &ChannelSet, params: &AdmmParams, seed: u64) -> Result<AdmmRun, AdmmError> {
    admm_run_with_mode(ch, params, seed, false)
}

/// Full ADMM loop. `dual_ascent` flips the sign of the multiplier step to
/// the textbook dual-ascent direction.
pub fn admm_run_with_mode(
    ch: &ChannelSet,
    params: &AdmmParams,
    seed: u64,
    dual_ascent: bool,
) -> Result<AdmmRun, AdmmError> {
    let h = single_band(ch)?;
    let d = ch.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_a = gaussian_matrix(&mut rng, d.antennas, d.rf_chains, 1.0);
    // Start on the power sphere so the penalty terms begin near feasibility.
    let w_d = project_digital(
        &[gaussian_matrix(&mut rng, d.rf_chains, d.users, 1.0)],
        &w_a,
        d.users,
    )?
    .pop()
    .expect("one band in, one band out");
    let v = &w_a * &w_d;
    let y = crate::matcore::zeros(d.antennas, d.users);
    let mut s = AdmmState { w_a, w_d, v, y };

    let mut rates = vec![logdet_hpd(&gram(h, &s))?];
    for row in &params.rows {
        let [lambda, mu, mu_a, mu_d, mu_y] = *row;
        let ga = admm_grad_wa(&s, ch, mu)?;
        s.w_a -= ga.scale(mu_a);
        let gd = admm_grad_wd(&s, ch, mu)?;
        s.w_d -= gd.scale(mu_d);
        s.v = admm_v_update(&s, lambda, mu)?;
        s.y = admm_y_update(&s, if dual_ascent { -mu_y } else { mu_y });
        rates.push(logdet_hpd(&gram(h, &s))?);
    }

    let digital = project_digital(std::slice::from_ref(&s.w_d), &s.w_a, d.users)?;
    let precoders = Precoders {
        analog: s.w_a.clone(),
        digital,
        constraint: AnalogConstraint::Unconstrained,
    };
    let final_rate = crate::objective::sum_rate(&precoders, ch)?;
    Ok(AdmmRun { precoders, final_rate, rates, state: s })
}
