//! Projected gradient ascent (PGA), the projected conceptual mirror prox
//! (PCMP) robust optimizer, their projections and initializations, and the
//! fully-digital upper-bound baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{gaussian_matrix, ChannelSet, SystemDims};
use crate::matcore::{self, adjoint, cplx, frob_norm, svd_full, CMat, MatError};
use crate::objective::{
    grad_analog, grad_digital, grad_error, sum_rate, AnalogConstraint, ObjectiveError, Precoders,
};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("digital precoders carry zero power; cannot project onto the power sphere")]
    ZeroPower,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Numeric(#[from] MatError),
}

/// Per-iteration PGA step sizes: row k holds (μ_a, μ_d,1, ..., μ_d,B).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PgaSchedule {
    pub steps: Vec<Vec<f64>>,
}

impl PgaSchedule {
    /// Constant schedule with every step size equal to `value`.
    pub fn fixed(k: usize, bands: usize, value: f64) -> Self {
        Self { steps: vec![vec![value; bands + 1]; k] }
    }

    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn bands(&self) -> Option<usize> {
        self.steps.first().map(|row| row.len() - 1)
    }

    fn validate(&self, bands: usize) -> Result<(), OptimError> {
        for row in &self.steps {
            if row.len() != bands + 1 {
                return Err(OptimError::DimensionMismatch(format!(
                    "schedule row has {} entries, expected {}",
                    row.len(),
                    bands + 1
                )));
            }
        }
        Ok(())
    }
}

/// PCMP step sizes: steps[k][i] holds (μ_a, μ_d,1..μ_d,B, μ_e,1..μ_e,B) for
/// inner step i of outer iteration k.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PcmpSchedule {
    pub steps: Vec<Vec<Vec<f64>>>,
}

impl PcmpSchedule {
    pub fn fixed(k: usize, i_max: usize, bands: usize, value: f64) -> Self {
        Self { steps: vec![vec![vec![value; 2 * bands + 1]; i_max]; k] }
    }

    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn inner_iterations(&self) -> Option<usize> {
        self.steps.first().map(|k| k.len())
    }

    /// Embed a PGA schedule as the degenerate PCMP schedule with one inner
    /// step and zero error steps.
    pub fn from_pga(pga: &PgaSchedule) -> Self {
        let steps = pga
            .steps
            .iter()
            .map(|row| {
                let bands = row.len() - 1;
                let mut inner = row.clone();
                inner.extend(std::iter::repeat(0.0).take(bands));
                vec![inner]
            })
            .collect();
        Self { steps }
    }

    fn validate(&self, bands: usize) -> Result<(), OptimError> {
        let i_max = self.inner_iterations().unwrap_or(0);
        for outer in &self.steps {
            if outer.len() != i_max {
                return Err(OptimError::DimensionMismatch(
                    "ragged inner iteration counts".into(),
                ));
            }
            for inner in outer {
                if inner.len() != 2 * bands + 1 {
                    return Err(OptimError::DimensionMismatch(format!(
                        "inner step row has {} entries, expected {}",
                        inner.len(),
                        2 * bands + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How the error-ball radius is interpreted by [`project_error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RadiusMode {
    /// Ball of Frobenius radius ε (default).
    Frobenius,
    /// Ball of Frobenius radius ε·N·M.
    EntrywiseScaled,
}

/// One recorded optimizer state: the precoders, their nominal sum-rate, and
/// (for PCMP) the adversarial error matrices.
#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub precoders: Precoders,
    pub rate: f64,
    pub errors: Option<Vec<CMat>>,
}

/// Iterates from iteration 0 (post-init) through K.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub iterates: Vec<TrajectoryPoint>,
}

impl Trajectory {
    /// Nominal rates of the post-iteration states (iterations 1..K).
    pub fn step_rates(&self) -> Vec<f64> {
        self.iterates.iter().skip(1).map(|p| p.rate).collect()
    }

    pub fn final_point(&self) -> &TrajectoryPoint {
        self.iterates.last().expect("trajectory is never empty")
    }

    pub fn final_rate(&self) -> f64 {
        self.final_point().rate
    }
}

/// Analog initializer: the first L right-singular vectors (descending
/// singular value) of the band-average normalized channel. For L exceeding
/// the channel rank the remaining columns come from the orthonormal basis
/// completion of the full SVD factor.
pub fn init_analog(ch: &ChannelSet, rf_chains: usize) -> Result<CMat, OptimError> {
    let d = ch.dims;
    if !ch.normalized {
        return Err(ObjectiveError::NotNormalized.into());
    }
    if rf_chains > d.antennas {
        return Err(OptimError::DimensionMismatch(format!(
            "L={} exceeds M={}",
            rf_chains, d.antennas
        )));
    }
    let mut avg = matcore::zeros(d.users, d.antennas);
    for band in &ch.bands {
        avg += band;
    }
    avg /= cplx(d.bands as f64, 0.0);
    let (_, _, vh) = svd_full(&avg)?;
    let v = adjoint(&vh);
    Ok(v.columns(0, rf_chains).into_owned())
}

/// Digital initializer: i.i.d. complex Gaussian matrices jointly rescaled so
/// the average power constraint holds with equality under `w_a`.
pub fn init_digital(dims: SystemDims, w_a: &CMat, seed: u64) -> Result<Vec<CMat>, OptimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<CMat> = (0..dims.bands)
        .map(|_| gaussian_matrix(&mut rng, dims.rf_chains, dims.users, 1.0))
        .collect();
    project_digital(&raw, w_a, dims.users)
}

/// Projection onto the analog feasible set for the given constraint tag.
/// Phase-shifter entries are normalized to unit modulus; a zero entry maps
/// to 1+0j by convention so the result stays feasible.
pub fn project_analog(w: &CMat, c: AnalogConstraint) -> CMat {
    match c {
        AnalogConstraint::Unconstrained => w.clone(),
        AnalogConstraint::PhaseShifter => w.map(|z| {
            let r = z.norm();
            if r > 0.0 {
                z / r
            } else {
                cplx(1.0, 0.0)
            }
        }),
    }
}

/// Joint digital power projection: one common scale
/// sqrt(NB / Σ_b ‖W_a Ŵ_d,b‖²_F) applied to every band.
pub fn project_digital(
    digital: &[CMat],
    w_a: &CMat,
    users: usize,
) -> Result<Vec<CMat>, OptimError> {
    let total: f64 = digital.iter().map(|wd| (w_a * wd).norm_squared()).sum();
    if total <= 0.0 {
        return Err(OptimError::ZeroPower);
    }
    let scale = ((users * digital.len()) as f64 / total).sqrt();
    Ok(digital.iter().map(|wd| wd.scale(scale)).collect())
}

/// Projection of an error matrix onto the uncertainty ball: shrink by
/// min{radius/‖Ê‖_F, 1} where the radius is ε (Frobenius mode) or ε·N·M
/// (EntrywiseScaled mode).
pub fn project_error(e_hat: &CMat, epsilon: f64, mode: RadiusMode) -> CMat {
    let radius = match mode {
        RadiusMode::Frobenius => epsilon,
        RadiusMode::EntrywiseScaled => epsilon * (e_hat.nrows() * e_hat.ncols()) as f64,
    };
    let norm = frob_norm(e_hat);
    if norm <= radius {
        e_hat.clone()
    } else {
        e_hat.scale(radius / norm)
    }
}

fn initialize(
    ch: &ChannelSet,
    c: AnalogConstraint,
    seed: u64,
) -> Result<Precoders, OptimError> {
    let w_a = project_analog(&init_analog(ch, ch.dims.rf_chains)?, c);
    let digital = init_digital(ch.dims, &w_a, seed)?;
    Ok(Precoders { analog: w_a, digital, constraint: c })
}

/// Algorithm: projected gradient ascent on the sum-rate. Each iteration
/// takes the analog ascent step and projects it, then takes every digital
/// step using the *new* analog precoder but the *old* digital precoders,
/// and finally applies the joint power projection.
pub fn pga_run(
    ch: &ChannelSet,
    sched: &PgaSchedule,
    c: AnalogConstraint,
    seed: u64,
) -> Result<Trajectory, OptimError> {
    sched.validate(ch.dims.bands)?;
    let mut p = initialize(ch, c, seed)?;
    let mut iterates = vec![TrajectoryPoint {
        precoders: p.clone(),
        rate: sum_rate(&p, ch)?,
        errors: None,
    }];
    for row in &sched.steps {
        p = pga_step(&p, ch, row)?;
        iterates.push(TrajectoryPoint {
            precoders: p.clone(),
            rate: sum_rate(&p, ch)?,
            errors: None,
        });
    }
    Ok(Trajectory { iterates })
}

fn pga_step(p: &Precoders, ch: &ChannelSet, row: &[f64]) -> Result<Precoders, OptimError> {
    let ga = grad_analog(p, ch)?;
    let w_a = project_analog(&(&p.analog + ga.scale(row[0])), p.constraint);
    // All digital gradients see the updated analog precoder and the previous
    // digital precoders.
    let half = Precoders { analog: w_a.clone(), digital: p.digital.clone(), ..p.clone() };
    let mut hats = Vec::with_capacity(p.digital.len());
    for (b, wd) in p.digital.iter().enumerate() {
        let gd = grad_digital(&half, ch, b)?;
        hats.push(wd + gd.scale(row[1 + b]));
    }
    let digital = project_digital(&hats, &w_a, ch.dims.users)?;
    Ok(Precoders { analog: w_a, digital, constraint: p.constraint })
}

/// Algorithm: projected conceptual mirror prox for the robust maximin
/// problem. Every inner step starts from the outer anchor; the analog hat
/// is computed and projected first, and the digital and error gradients of
/// that inner step are evaluated at the projected analog hat together with
/// the previous inner digital/error iterates, so the ε=0, i_max=1 case
/// degenerates exactly to one PGA iteration. Error steps descend the rate.
pub fn pcmp_run(
    ch: &ChannelSet,
    sched: &PcmpSchedule,
    epsilon: f64,
    c: AnalogConstraint,
    seed: u64,
) -> Result<Trajectory, OptimError> {
    pcmp_run_with_mode(ch, sched, epsilon, RadiusMode::Frobenius, c, seed)
}

pub fn pcmp_run_with_mode(
    ch: &ChannelSet,
    sched: &PcmpSchedule,
    epsilon: f64,
    mode: RadiusMode,
    c: AnalogConstraint,
    seed: u64,
) -> Result<Trajectory, OptimError> {
    sched.validate(ch.dims.bands)?;
    if epsilon < 0.0 {
        return Err(OptimError::DimensionMismatch("epsilon must be >= 0".into()));
    }
    let d = ch.dims;
    let mut p = initialize(ch, c, seed)?;
    // Adversary init: Gaussian matrices scaled strictly into the ball.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut errors: Vec<CMat> = (0..d.bands)
        .map(|_| {
            let raw = gaussian_matrix(&mut rng, d.users, d.antennas, 1.0);
            let norm = frob_norm(&raw);
            if norm > 0.0 {
                raw.scale(0.5 * epsilon / norm)
            } else {
                raw
            }
        })
        .collect();

    let mut iterates = vec![TrajectoryPoint {
        precoders: p.clone(),
        rate: sum_rate(&p, ch)?,
        errors: Some(errors.clone()),
    }];

    for outer in &sched.steps {
        // Anchor for this outer iteration.
        let anchor = p.clone();
        let anchor_err = errors.clone();
        // Inner iterates start at the anchor.
        let mut cur = anchor.clone();
        let mut cur_err = anchor_err.clone();
        for inner in outer {
            // Analog hat from the anchor, gradients at the previous inner
            // iterates; projected before the digital/error gradients use it.
            let grad_state = Precoders {
                analog: cur.analog.clone(),
                digital: cur.digital.clone(),
                constraint: c,
            };
            let ga = grad_analog(&grad_state, ch)?;
            let a_hat =
                project_analog(&(&anchor.analog + ga.scale(inner[0])), c);

            let eval = Precoders {
                analog: a_hat.clone(),
                digital: cur.digital.clone(),
                constraint: c,
            };
            let mut d_hats = Vec::with_capacity(d.bands);
            for b in 0..d.bands {
                let gd = grad_digital(&eval, ch, b)?;
                d_hats.push(&anchor.digital[b] + gd.scale(inner[1 + b]));
            }
            let d_next = project_digital(&d_hats, &a_hat, d.users)?;

            let mut e_next = Vec::with_capacity(d.bands);
            for b in 0..d.bands {
                let ge = grad_error(&eval, ch, &cur_err, b)?;
                let e_hat = &anchor_err[b] - ge.scale(inner[1 + d.bands + b]);
                e_next.push(project_error(&e_hat, epsilon, mode));
            }

            cur = Precoders { analog: a_hat, digital: d_next, constraint: c };
            cur_err = e_next;
        }
        p = cur;
        errors = cur_err;
        iterates.push(TrajectoryPoint {
            precoders: p.clone(),
            rate: sum_rate(&p, ch)?,
            errors: Some(errors.clone()),
        });
    }
    Ok(Trajectory { iterates })
}

/// Fully digital upper bound: PGA with L = M, the analog precoder pinned to
/// the identity, and digital-only updates. Returns the final rate.
pub fn fully_digital_baseline(
    ch: &ChannelSet,
    iterations: usize,
    step: f64,
    seed: u64,
) -> Result<f64, OptimError> {
    let d = ch.dims;
    let dims = SystemDims::new(d.bands, d.users, d.antennas, d.antennas, d.noise_var)
        .expect("identity-analog dims are valid when the input dims are");
    let w_a = matcore::identity(d.antennas);
    let digital = init_digital(dims, &w_a, seed)?;
    let mut p = Precoders {
        analog: w_a,
        digital,
        constraint: AnalogConstraint::Unconstrained,
    };
    let ch_full = ChannelSet::new(dims, ch.bands.clone(), ch.normalized);
    for _ in 0..iterations {
        let mut hats = Vec::with_capacity(dims.bands);
        for (b, wd) in p.digital.iter().enumerate() {
            let gd = grad_digital(&p, &ch_full, b)?;
            hats.push(wd + gd.scale(step));
        }
        p.digital = project_digital(&hats, &p.analog, dims.users)?;
    }
    Ok(sum_rate(&p, &ch_full)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::gen_rayleigh;
    use crate::matcore::{from_rows, inner_re};
    use num_complex::Complex64;

    fn small_channel(seed: i64) -> ChannelSet {
        let dims = SystemDims::new(2, 2, 2, 3, 1.0).unwrap();
        crate::channel::normalize(&gen_rayleigh(dims, 1, seed).unwrap().realizations[0]).unwrap()
    }

    fn line_channel() -> ChannelSet {
        // B=1, N=1, M=2, L=1, h̃ = [3, 4].
        let dims = SystemDims::new(1, 1, 1, 2, 1.0).unwrap();
        ChannelSet::new(dims, vec![from_rows(1, 2, &[cplx(3.0, 0.0), cplx(4.0, 0.0)])], true)
    }

    #[test]
    fn init_analog_hand_svd() {
        let ch = line_channel();
        let wa = init_analog(&ch, 1).unwrap();
        // ±[0.6, 0.8]ᵀ; the phase pin makes the first entry real-positive.
        assert!((wa[(0, 0)].re - 0.6).abs() < 1e-12);
        assert!((wa[(1, 0)].re - 0.8).abs() < 1e-12);
        assert!(wa[(0, 0)].im.abs() < 1e-12 && wa[(1, 0)].im.abs() < 1e-12);
    }

    #[test]
    fn init_analog_full_width_is_unitary() {
        let ch = small_channel(10);
        let wa = init_analog(&ch, 3).unwrap();
        let gram = adjoint(&wa) * &wa;
        assert!((gram - matcore::identity(3)).norm() < 1e-10);
    }

    #[test]
    fn init_analog_null_space_completion() {
        // N=2 < L=3 <= M=4: the last column must be orthonormal to the rest.
        let dims = SystemDims::new(1, 2, 3, 4, 1.0).unwrap();
        let ch =
            crate::channel::normalize(&gen_rayleigh(dims, 1, 77).unwrap().realizations[0]).unwrap();
        let wa = init_analog(&ch, 3).unwrap();
        let gram = adjoint(&wa) * &wa;
        assert!((gram - matcore::identity(3)).norm() < 1e-10);
    }

    #[test]
    fn init_digital_power_and_determinism() {
        let ch = small_channel(11);
        let wa = init_analog(&ch, 2).unwrap();
        let d1 = init_digital(ch.dims, &wa, 5).unwrap();
        let d2 = init_digital(ch.dims, &wa, 5).unwrap();
        let d3 = init_digital(ch.dims, &wa, 6).unwrap();
        assert_eq!(d1, d2);
        assert_ne!(d1, d3);
        let p = Precoders {
            analog: wa,
            digital: d1,
            constraint: AnalogConstraint::Unconstrained,
        };
        assert!((p.avg_power() - ch.dims.users as f64).abs() < 1e-9);
    }

    #[test]
    fn project_analog_cases() {
        let z = cplx(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
        let w = from_rows(2, 1, &[z * 2.0, Complex64::default()]);
        let pu = project_analog(&w, AnalogConstraint::Unconstrained);
        assert_eq!(pu, w);
        let pp = project_analog(&w, AnalogConstraint::PhaseShifter);
        assert!((pp[(0, 0)] - z).norm() < 1e-12);
        assert_eq!(pp[(1, 0)], cplx(1.0, 0.0));
        // Idempotence.
        assert!((project_analog(&pp, AnalogConstraint::PhaseShifter) - &pp).norm() < 1e-12);
    }

    #[test]
    fn project_digital_scale_and_idempotence() {
        // B=1, W_a = I (2×2), ‖Ŵ_d‖²_F = 4N with N=2 → scale 1/2.
        let wa = matcore::identity(2);
        let wd = from_rows(2, 2, &[cplx(2.0f64.sqrt(), 0.0); 4]);
        let out = project_digital(&[wd.clone()], &wa, 2).unwrap();
        let scale = out[0][(0, 0)].re / wd[(0, 0)].re;
        assert!((scale - 0.5).abs() < 1e-12);
        let again = project_digital(&out, &wa, 2).unwrap();
        assert!((&again[0] - &out[0]).norm() < 1e-12);

        let zero = matcore::zeros(2, 2);
        assert!(matches!(project_digital(&[zero], &wa, 2), Err(OptimError::ZeroPower)));
    }

    #[test]
    fn project_digital_random_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..20 {
            let wa = gaussian_matrix(&mut rng, 4, 3, 1.0);
            let digital: Vec<CMat> =
                (0..2).map(|_| gaussian_matrix(&mut rng, 3, 2, 1.0)).collect();
            let out = project_digital(&digital, &wa, 2).unwrap();
            let power: f64 =
                out.iter().map(|wd| (&wa * wd).norm_squared()).sum::<f64>() / 2.0;
            assert!((power - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn project_error_cases() {
        let e = from_rows(1, 2, &[cplx(0.3, 0.0), cplx(0.4, 0.0)]); // norm 0.5
        let inside = project_error(&e, 1.0, RadiusMode::Frobenius);
        assert_eq!(inside, e);
        let shrunk = project_error(&e, 0.25, RadiusMode::Frobenius);
        assert!((frob_norm(&shrunk) - 0.25).abs() < 1e-12);
        // EntrywiseScaled radius is ε·N·M = 0.25·2 = 0.5 → boundary, kept.
        let kept = project_error(&e, 0.25, RadiusMode::EntrywiseScaled);
        assert_eq!(kept, e);
        let zero = matcore::zeros(1, 2);
        assert_eq!(project_error(&zero, 0.1, RadiusMode::Frobenius), zero);
    }

    #[test]
    fn pga_zero_iterations_and_zero_steps() {
        let ch = small_channel(30);
        let t0 = pga_run(&ch, &PgaSchedule::fixed(0, 2, 0.1), AnalogConstraint::Unconstrained, 1)
            .unwrap();
        assert_eq!(t0.iterates.len(), 1);

        let tz = pga_run(&ch, &PgaSchedule::fixed(3, 2, 0.0), AnalogConstraint::Unconstrained, 1)
            .unwrap();
        assert_eq!(tz.iterates.len(), 4);
        for p in &tz.iterates {
            assert!((&p.precoders.analog - &tz.iterates[0].precoders.analog).norm() < 1e-12);
            for (a, b) in p.precoders.digital.iter().zip(&tz.iterates[0].precoders.digital) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pga_scalar_reaches_matched_filter_optimum() {
        let ch = line_channel();
        let sched = PgaSchedule::fixed(200, 1, 0.05);
        let t = pga_run(&ch, &sched, AnalogConstraint::Unconstrained, 3).unwrap();
        assert!((t.final_rate() - 26.0f64.log2()).abs() < 1e-3, "rate {}", t.final_rate());
    }

    #[test]
    fn pga_iterates_stay_feasible() {
        for (seed, c) in [(40, AnalogConstraint::Unconstrained), (41, AnalogConstraint::PhaseShifter)]
        {
            let ch = small_channel(seed);
            let t = pga_run(&ch, &PgaSchedule::fixed(10, 2, 0.05), c, 7).unwrap();
            for p in &t.iterates {
                assert!((p.precoders.avg_power() - 2.0).abs() < 1e-9);
                if c == AnalogConstraint::PhaseShifter {
                    for z in p.precoders.analog.iter() {
                        assert!((z.norm() - 1.0).abs() < 1e-12);
                    }
                }
                assert!(p.rate.is_finite());
            }
        }
    }

    #[test]
    fn pga_ascends_statistically() {
        let mut improved = 0;
        for seed in 0..20 {
            let ch = small_channel(100 + seed);
            let t = pga_run(
                &ch,
                &PgaSchedule::fixed(50, 2, 1e-3),
                AnalogConstraint::Unconstrained,
                seed as u64,
            )
            .unwrap();
            if t.final_rate() >= t.iterates[0].rate {
                improved += 1;
            }
        }
        assert!(improved >= 18, "only {improved}/20 runs improved");
    }

    #[test]
    fn pga_deterministic() {
        let ch = small_channel(50);
        let sched = PgaSchedule::fixed(5, 2, 0.05);
        let a = pga_run(&ch, &sched, AnalogConstraint::Unconstrained, 9).unwrap();
        let b = pga_run(&ch, &sched, AnalogConstraint::Unconstrained, 9).unwrap();
        for (x, y) in a.iterates.iter().zip(b.iterates.iter()) {
            assert_eq!(x.precoders, y.precoders);
            assert_eq!(x.rate, y.rate);
        }
    }

    #[test]
    fn pcmp_degenerates_to_pga() {
        for seed in 0..20 {
            let ch = small_channel(200 + seed);
            let pga_sched = PgaSchedule::fixed(6, 2, 0.04);
            let pcmp_sched = PcmpSchedule::from_pga(&pga_sched);
            for c in [AnalogConstraint::Unconstrained, AnalogConstraint::PhaseShifter] {
                let tp = pga_run(&ch, &pga_sched, c, seed as u64).unwrap();
                let tc = pcmp_run(&ch, &pcmp_sched, 0.0, c, seed as u64).unwrap();
                assert_eq!(tp.iterates.len(), tc.iterates.len());
                for (x, y) in tp.iterates.iter().zip(tc.iterates.iter()) {
                    assert!((&x.precoders.analog - &y.precoders.analog).norm() < 1e-12);
                    for (a, b) in x.precoders.digital.iter().zip(&y.precoders.digital) {
                        assert!((a - b).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn pcmp_errors_stay_in_ball() {
        let ch = small_channel(60);
        let eps = 0.3;
        let sched = PcmpSchedule::fixed(8, 2, 2, 0.05);
        let t = pcmp_run(&ch, &sched, eps, AnalogConstraint::Unconstrained, 4).unwrap();
        assert_eq!(t.iterates.len(), 9);
        for p in &t.iterates {
            for e in p.errors.as_ref().unwrap() {
                assert!(frob_norm(e) <= eps + 1e-12);
            }
            assert!((p.precoders.avg_power() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pcmp_scalar_grid_search_oracle() {
        // N=M=L=B=1, h̃=2, ε=0.5: at unit power the adversary pushes the
        // effective channel to 1.5, so min rate → log2(1+2.25).
        let dims = SystemDims::new(1, 1, 1, 1, 1.0).unwrap();
        let ch = ChannelSet::new(dims, vec![from_rows(1, 1, &[cplx(2.0, 0.0)])], true);
        let sched = PcmpSchedule::fixed(300, 2, 1, 0.05);
        let t = pcmp_run(&ch, &sched, 0.5, AnalogConstraint::Unconstrained, 2).unwrap();
        let last = t.final_point();
        // Worst-case rate of the final precoder over a fine error grid.
        let p = &last.precoders;
        let mut worst = f64::INFINITY;
        for i in -500..=500 {
            let e = from_rows(1, 1, &[cplx(i as f64 * 1e-3, 0.0)]);
            let r = crate::objective::sum_rate_perturbed(p, &ch, &[e]).unwrap();
            worst = worst.min(r);
        }
        assert!((worst - 3.25f64.log2()).abs() < 1e-3, "worst {worst}");
        // The tracked adversarial iterate should approach the worst case too.
        let e_rate = crate::objective::sum_rate_perturbed(p, &ch, last.errors.as_ref().unwrap())
            .unwrap();
        assert!((e_rate - 3.25f64.log2()).abs() < 1e-2, "adversary rate {e_rate}");
    }

    #[test]
    fn pcmp_deterministic() {
        let ch = small_channel(70);
        let sched = PcmpSchedule::fixed(4, 2, 2, 0.05);
        let a = pcmp_run(&ch, &sched, 0.2, AnalogConstraint::Unconstrained, 8).unwrap();
        let b = pcmp_run(&ch, &sched, 0.2, AnalogConstraint::Unconstrained, 8).unwrap();
        for (x, y) in a.iterates.iter().zip(b.iterates.iter()) {
            assert_eq!(x.precoders, y.precoders);
            assert_eq!(x.errors.as_ref().unwrap(), y.errors.as_ref().unwrap());
        }
    }

    #[test]
    fn fully_digital_scalar_closed_form() {
        // M=L=1: the baseline must hit log2(1 + h̃²) at full power.
        let dims = SystemDims::new(1, 1, 1, 1, 1.0).unwrap();
        let ch = ChannelSet::new(dims, vec![from_rows(1, 1, &[cplx(3.0, 0.0)])], true);
        let r = fully_digital_baseline(&ch, 100, 0.05, 1).unwrap();
        assert!((r - 10.0f64.log2()).abs() < 1e-6, "rate {r}");
    }

    #[test]
    fn fully_digital_upper_bounds_hybrid_on_average() {
        let mut hybrid_sum = 0.0;
        let mut full_sum = 0.0;
        for seed in 0..20 {
            let dims = SystemDims::new(2, 2, 2, 4, 1.0).unwrap();
            let ch = crate::channel::normalize(
                &gen_rayleigh(dims, 1, 300 + seed).unwrap().realizations[0],
            )
            .unwrap();
            let t = pga_run(
                &ch,
                &PgaSchedule::fixed(100, 2, 0.05),
                AnalogConstraint::Unconstrained,
                seed as u64,
            )
            .unwrap();
            hybrid_sum += t.final_rate();
            full_sum += fully_digital_baseline(&ch, 100, 0.05, seed as u64).unwrap();
        }
        assert!(
            full_sum >= hybrid_sum,
            "fully digital mean {} below hybrid mean {}",
            full_sum / 20.0,
            hybrid_sum / 20.0
        );
    }

    #[test]
    fn schedule_shape_validation() {
        let ch = small_channel(80);
        let bad = PgaSchedule { steps: vec![vec![0.1; 2]] }; // needs B+1 = 3
        assert!(matches!(
            pga_run(&ch, &bad, AnalogConstraint::Unconstrained, 1),
            Err(OptimError::DimensionMismatch(_))
        ));
        let bad = PcmpSchedule { steps: vec![vec![vec![0.1; 3]]] }; // needs 2B+1 = 5
        assert!(matches!(
            pcmp_run(&ch, &bad, 0.1, AnalogConstraint::Unconstrained, 1),
            Err(OptimError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn pga_first_step_matches_manual_gradient_step() {
        // One iteration of pga_run must equal a hand-rolled gradient step.
        let ch = small_channel(90);
        let sched = PgaSchedule::fixed(1, 2, 0.07);
        let t = pga_run(&ch, &sched, AnalogConstraint::Unconstrained, 13).unwrap();
        let p0 = &t.iterates[0].precoders;

        let ga = grad_analog(p0, &ch).unwrap();
        let wa1 = &p0.analog + ga.scale(0.07);
        let half = Precoders { analog: wa1.clone(), ..p0.clone() };
        let mut hats = Vec::new();
        for b in 0..2 {
            let gd = grad_digital(&half, &ch, b).unwrap();
            hats.push(&p0.digital[b] + gd.scale(0.07));
        }
        let d1 = project_digital(&hats, &wa1, 2).unwrap();
        assert!((&t.iterates[1].precoders.analog - &wa1).norm() < 1e-12);
        for (a, b) in t.iterates[1].precoders.digital.iter().zip(&d1) {
            assert!((a - b).norm() < 1e-12);
        }
        // Sanity: the analog step really ascends along its own direction.
        assert!(inner_re(&ga, &ga) >= 0.0);
    }
}
