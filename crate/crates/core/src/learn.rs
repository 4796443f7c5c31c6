//! Learn-to-optimize training: tuning per-iteration step-size schedules
//! (PGA, PCMP, ADMM) on a channel dataset by stochastic gradient descent on
//! the unsupervised loss.
//!
//! Hyper-gradients use central finite differences over the flattened
//! schedule. Schedules are small (tens of entries) and every probe is one
//! unrolled optimizer run, so this stays cheap while avoiding reverse-mode
//! differentiation through the complex SVD/solve kernels. All probes of one
//! gradient reuse the same run seed so stochastic initialization cancels in
//! the differences.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::admm::{admm_run, AdmmError, AdmmParams};
use crate::channel::{sample_error_set, ChannelDataset, ChannelSet, ErrorSet};
use crate::objective::{pga_loss, robust_loss, AnalogConstraint, ObjectiveError};
use crate::optim::{pcmp_run, pga_run, OptimError, PcmpSchedule, PgaSchedule};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("finite-difference step {fd_step} reaches or crosses zero at schedule entry {entry}")]
    StepTooLarge { fd_step: f64, entry: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("unrolled hyper-gradients are not implemented; use CentralFiniteDifference")]
    UnsupportedGradMode,
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Admm(#[from] AdmmError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("schedule file format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OptimizerKind {
    Adam,
    PlainSgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GradMode {
    CentralFiniteDifference,
    Unrolled,
}

/// Training hyperparameters shared by all three trainers.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Unrolled iteration budget K (I_max for ADMM).
    pub unroll: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_mode: GradMode,
    pub fd_step: f64,
    /// Constant value filling the initial schedule.
    pub init_step: f64,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, unroll: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            learning_rate,
            unroll,
            seed,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_mode: GradMode::CentralFiniteDifference,
            fd_step: 1e-4,
            init_step: 5e-2,
        }
    }

    fn validate(&self, dataset_len: usize) -> Result<(), LearnError> {
        if dataset_len == 0 {
            return Err(LearnError::EmptyDataset);
        }
        if self.batch_size < 1 || self.batch_size > dataset_len {
            return Err(LearnError::BadConfig(format!(
                "batch_size {} outside 1..={dataset_len}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(LearnError::BadConfig("learning_rate must be positive".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(LearnError::BadConfig("fd_step must be positive".into()));
        }
        Ok(())
    }
}

/// Schedule floor: entries must stay strictly positive after every update.
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// Mean unfolded-PGA loss over a batch of channels.
pub fn batch_loss_pga(
    batch: &[ChannelSet],
    sched: &PgaSchedule,
    c: AnalogConstraint,
    seed: u64,
) -> Result<f64, LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let mut acc = 0.0;
    for ch in batch {
        let t = pga_run(ch, sched, c, seed)?;
        acc += pga_loss(&t.step_rates())?;
    }
    Ok(acc / batch.len() as f64)
}

/// Error set used by the robust loss: the zero pattern alone when ε ≤ 0,
/// otherwise `sample_error_set`.
fn robust_error_set(ch: &ChannelSet, epsilon: f64, n_e: usize, es_seed: i64) -> ErrorSet {
    if epsilon > 0.0 {
        sample_error_set(ch.dims, epsilon, n_e, es_seed)
    } else {
        let zero: Vec<_> = (0..ch.dims.bands)
            .map(|_| crate::matcore::zeros(ch.dims.users, ch.dims.antennas))
            .collect();
        ErrorSet { dims: ch.dims, epsilon: 0.0, patterns: vec![zero] }
    }
}

/// Mean robust (maximin) loss at the final PCMP iterate over a batch.
pub fn batch_loss_pcmp(
    batch: &[ChannelSet],
    sched: &PcmpSchedule,
    epsilon: f64,
    es_seed: i64,
    n_e: usize,
    c: AnalogConstraint,
    seed: u64,
) -> Result<f64, LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let mut acc = 0.0;
    for ch in batch {
        let t = pcmp_run(ch, sched, epsilon, c, seed)?;
        let es = robust_error_set(ch, epsilon, n_e, es_seed);
        acc += robust_loss(&t.final_point().precoders, ch, &es)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Mean negative final rate of ADMM runs over a batch (single-band).
pub fn batch_loss_admm(
    batch: &[ChannelSet],
    params: &AdmmParams,
    seed: u64,
) -> Result<f64, LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let mut acc = 0.0;
    for ch in batch {
        acc += -admm_run(ch, params, seed)?.final_rate;
    }
    Ok(acc / batch.len() as f64)
}

/// Central finite-difference gradient of `loss` over the flattened schedule.
/// Every schedule entry must exceed `cfg.fd_step` so no probe crosses zero.
pub fn hyper_gradient<F>(
    mut loss: F,
    params: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, LearnError>
where
    F: FnMut(&[f64]) -> Result<f64, LearnError>,
{
    if cfg.grad_mode != GradMode::CentralFiniteDifference {
        return Err(LearnError::UnsupportedGradMode);
    }
    let h = cfg.fd_step;
    for &p in params {
        if p <= h {
            return Err(LearnError::StepTooLarge { fd_step: h, entry: p });
        }
    }
    let mut grad = Vec::with_capacity(params.len());
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let plus = loss(&probe)?;
        probe[i] = params[i] - h;
        let minus = loss(&probe)?;
        probe[i] = params[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Adam first/second moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One Adam descent step with bias correction; parameters are clamped to
/// the positivity floor afterwards.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    eta: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(), LearnError> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(LearnError::ShapeMismatch(format!(
            "params {}, grad {}, state {}",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as f64;
    for i in 0..params.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / (1.0 - beta1.powf(t));
        let v_hat = state.v[i] / (1.0 - beta2.powf(t));
        params[i] -= eta * m_hat / (v_hat.sqrt() + eps);
        params[i] = params[i].max(POSITIVITY_FLOOR);
    }
    Ok(())
}

fn sgd_step(params: &mut [f64], grad: &[f64], eta: f64) -> Result<(), LearnError> {
    if grad.len() != params.len() {
        return Err(LearnError::ShapeMismatch(format!(
            "params {}, grad {}",
            params.len(),
            grad.len()
        )));
    }
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= eta * g;
        *p = p.max(POSITIVITY_FLOOR);
    }
    Ok(())
}

/// Shared SGD driver over a flattened schedule. `loss(flat, batch)` is the
/// batch loss at a candidate schedule. Returns the trained flat schedule and
/// the per-epoch mean batch loss (evaluated before each update).
fn train_flat<F>(
    ds: &ChannelDataset,
    cfg: &TrainConfig,
    init: Vec<f64>,
    mut loss: F,
) -> Result<(Vec<f64>, Vec<f64>), LearnError>
where
    F: FnMut(&[f64], &[ChannelSet]) -> Result<f64, LearnError>,
{
    cfg.validate(ds.len())?;
    let mut flat = init;
    let mut adam = AdamState::new(flat.len());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        // Fresh random partition each epoch, derived from the config seed.
        let mut order: Vec<usize> = (0..ds.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9).wrapping_mul(epoch as u64 + 1));
        order.shuffle(&mut rng);

        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<ChannelSet> =
                chunk.iter().map(|&i| ds.realizations[i].clone()).collect();
            let batch_loss = loss(&flat, &batch)?;
            sum += batch_loss;
            batches += 1;
            let grad = hyper_gradient(|p| loss(p, &batch), &flat, cfg)?;
            match cfg.optimizer {
                OptimizerKind::Adam => adam_step(
                    &mut flat,
                    &grad,
                    &mut adam,
                    cfg.learning_rate,
                    cfg.adam_beta1,
                    cfg.adam_beta2,
                    cfg.adam_eps,
                )?,
                OptimizerKind::PlainSgd => sgd_step(&mut flat, &grad, cfg.learning_rate)?,
            }
            // The next gradient's central differences must not cross zero,
            // so the trainer holds entries strictly above the probe step.
            let floor = (2.0 * cfg.fd_step).max(POSITIVITY_FLOOR);
            for p in flat.iter_mut() {
                *p = p.max(floor);
            }
        }
        epoch_losses.push(sum / batches as f64);
    }
    Ok((flat, epoch_losses))
}

fn flatten_pga(s: &PgaSchedule) -> Vec<f64> {
    s.steps.iter().flatten().copied().collect()
}

fn unflatten_pga(flat: &[f64], k: usize, width: usize) -> PgaSchedule {
    PgaSchedule { steps: flat.chunks(width).take(k).map(|c| c.to_vec()).collect() }
}

fn flatten_pcmp(s: &PcmpSchedule) -> Vec<f64> {
    s.steps.iter().flatten().flatten().copied().collect()
}

fn unflatten_pcmp(flat: &[f64], k: usize, i_max: usize, width: usize) -> PcmpSchedule {
    let steps = (0..k)
        .map(|ki| {
            (0..i_max)
                .map(|ii| {
                    let base = (ki * i_max + ii) * width;
                    flat[base..base + width].to_vec()
                })
                .collect()
        })
        .collect();
    PcmpSchedule { steps }
}

fn flatten_admm(p: &AdmmParams) -> Vec<f64> {
    p.rows.iter().flatten().copied().collect()
}

fn unflatten_admm(flat: &[f64]) -> AdmmParams {
    AdmmParams {
        rows: flat
            .chunks(5)
            .map(|c| [c[0], c[1], c[2], c[3], c[4]])
            .collect(),
    }
}

/// Train a PGA step-size schedule; returns it with the epoch-loss log.
pub fn train_pga(
    ds: &ChannelDataset,
    cfg: &TrainConfig,
    c: AnalogConstraint,
    init_sched: &PgaSchedule,
) -> Result<(PgaSchedule, Vec<f64>), LearnError> {
    let k = init_sched.iterations();
    let width = init_sched.bands().map(|b| b + 1).unwrap_or(1);
    let seed = cfg.seed;
    let (flat, log) = train_flat(ds, cfg, flatten_pga(init_sched), |p, batch| {
        batch_loss_pga(batch, &unflatten_pga(p, k, width), c, seed)
    })?;
    Ok((unflatten_pga(&flat, k, width), log))
}

/// Train a PCMP schedule on the robust maximin loss.
pub fn train_pcmp(
    ds: &ChannelDataset,
    cfg: &TrainConfig,
    epsilon: f64,
    n_e: usize,
    c: AnalogConstraint,
    init_sched: &PcmpSchedule,
) -> Result<(PcmpSchedule, Vec<f64>), LearnError> {
    let k = init_sched.iterations();
    let i_max = init_sched.inner_iterations().unwrap_or(0);
    let width = init_sched.steps.first().and_then(|o| o.first()).map(|v| v.len()).unwrap_or(1);
    let seed = cfg.seed;
    let es_seed = cfg.seed as i64 ^ 0x5bd1_e995;
    let (flat, log) = train_flat(ds, cfg, flatten_pcmp(init_sched), |p, batch| {
        batch_loss_pcmp(
            batch,
            &unflatten_pcmp(p, k, i_max, width),
            epsilon,
            es_seed,
            n_e,
            c,
            seed,
        )
    })?;
    Ok((unflatten_pcmp(&flat, k, i_max, width), log))
}

/// Train the ADMM per-iteration parameter matrix (single-band dataset).
pub fn train_admm(
    ds: &ChannelDataset,
    cfg: &TrainConfig,
    init_params: &AdmmParams,
) -> Result<(AdmmParams, Vec<f64>), LearnError> {
    let seed = cfg.seed;
    let (flat, log) = train_flat(ds, cfg, flatten_admm(init_params), |p, batch| {
        batch_loss_admm(batch, &unflatten_admm(p), seed)
    })?;
    Ok((unflatten_admm(&flat), log))
}

/// Serialized form of a trained schedule.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScheduleFile {
    pub kind: String,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    #[serde(rename = "I_max", skip_serializing_if = "Option::is_none", default)]
    pub i_max_admm: Option<usize>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none", default)]
    pub bands: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub i_max: Option<usize>,
    pub steps: serde_json::Value,
    pub seed: u64,
    pub config: TrainConfig,
}

/// A schedule loaded back from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedSchedule {
    Pga(PgaSchedule),
    Pcmp(PcmpSchedule),
    Admm(AdmmParams),
}

pub fn schedule_to_file(
    sched: &TrainedSchedule,
    seed: u64,
    config: &TrainConfig,
) -> ScheduleFile {
    match sched {
        TrainedSchedule::Pga(s) => ScheduleFile {
            kind: "pga".into(),
            k: Some(s.iterations()),
            i_max_admm: None,
            bands: s.bands(),
            i_max: None,
            steps: serde_json::json!(s.steps),
            seed,
            config: config.clone(),
        },
        TrainedSchedule::Pcmp(s) => ScheduleFile {
            kind: "pcmp".into(),
            k: Some(s.iterations()),
            i_max_admm: None,
            bands: s
                .steps
                .first()
                .and_then(|o| o.first())
                .map(|v| (v.len() - 1) / 2),
            i_max: s.inner_iterations(),
            steps: serde_json::json!(s.steps),
            seed,
            config: config.clone(),
        },
        TrainedSchedule::Admm(p) => ScheduleFile {
            kind: "admm".into(),
            k: None,
            i_max_admm: Some(p.iterations()),
            bands: Some(1),
            i_max: None,
            steps: serde_json::json!(p.rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()),
            seed,
            config: config.clone(),
        },
    }
}

pub fn save_schedule(
    path: &Path,
    sched: &TrainedSchedule,
    seed: u64,
    config: &TrainConfig,
) -> Result<(), LearnError> {
    let file = schedule_to_file(sched, seed, config);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_schedule(path: &Path) -> Result<(TrainedSchedule, ScheduleFile), LearnError> {
    let text = std::fs::read_to_string(path)?;
    let file: ScheduleFile = serde_json::from_str(&text)?;
    let sched = match file.kind.as_str() {
        "pga" => {
            let steps: Vec<Vec<f64>> = serde_json::from_value(file.steps.clone())?;
            TrainedSchedule::Pga(PgaSchedule { steps })
        }
        "pcmp" => {
            let steps: Vec<Vec<Vec<f64>>> = serde_json::from_value(file.steps.clone())?;
            TrainedSchedule::Pcmp(PcmpSchedule { steps })
        }
        "admm" => {
            let rows: Vec<Vec<f64>> = serde_json::from_value(file.steps.clone())?;
            let rows = rows
                .into_iter()
                .map(|r| {
                    if r.len() != 5 {
                        return Err(LearnError::ShapeMismatch(format!(
                            "ADMM parameter row has {} entries, expected 5",
                            r.len()
                        )));
                    }
                    Ok([r[0], r[1], r[2], r[3], r[4]])
                })
                .collect::<Result<Vec<_>, _>>()?;
            TrainedSchedule::Admm(AdmmParams { rows })
        }
        other => {
            return Err(LearnError::ShapeMismatch(format!(
                "unknown schedule kind {other:?}"
            )))
        }
    };
    Ok((sched, file))
}
