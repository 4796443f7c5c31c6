//! `hpcli` — benchmark harness for hybrid precoder optimization.
//!
//! Subcommands: `gen` (dataset generation), `train` (schedule training),
//! `convergence` (learned-K vs fixed-step iteration curves), `sweep-snr`,
//! `eval-robust`, and `admm-run`. All outputs are CSV (header row, '.'
//! decimal, ',' separator, LF endings) or JSON and are byte-stable across
//! reruns given the same seeds.
//!
//! SNR convention: unit total transmit power with σ² = 10^(−SNR_dB/10).
//! The env var `HPCLI_SEED` overrides every configured seed. Exit codes:
//! 0 success, 2 config error, 3 I/O error, 4 numerical failure.

mod config;
mod csv;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use hpcore::admm::{admm_run, AdmmParams};
use hpcore::channel::{
    gen_rayleigh, load_dataset, sample_error_set, save_dataset, ChannelDataset, ChannelSet,
    ErrorSet, SystemDims,
};
use hpcore::learn::{
    load_schedule, save_schedule, train_admm, train_pcmp, train_pga, TrainConfig, TrainedSchedule,
};
use hpcore::objective::min_rate_over_errors;
use hpcore::optim::{pcmp_run, pga_run, PcmpSchedule, PgaSchedule};

use config::{CliError, Overrides};

#[derive(Parser)]
#[command(
    name = "hpcli",
    about = "Hybrid MIMO precoder optimization benchmark harness",
    long_about = "Dataset generation, step-size schedule training, and CSV evaluation \
        for hybrid analog/digital precoder optimizers (PGA, robust PCMP, ADMM).\n\
        SNR convention: unit transmit power, noise variance 10^(-SNR_dB/10).\n\
        HPCLI_SEED overrides configured seeds. Exit codes: 0 ok, 2 config, 3 I/O, 4 numerical."
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads for evaluation fan-out.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Rayleigh channel dataset file.
    Gen {
        #[arg(long)]
        b: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<i64>,
        #[arg(long)]
        noise_var: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a step-size schedule on a dataset.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Schedule kind: pga, pcmp, or admm.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        i_max: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        init_step: Option<f64>,
        #[arg(long)]
        fd_step: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        n_e: Option<usize>,
        #[arg(long)]
        constraint: Option<String>,
        #[arg(long)]
        out_schedule: Option<PathBuf>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Iteration-wise mean sum-rate: learned-K schedule vs fixed-step PGA.
    Convergence {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        fixed_step: Option<f64>,
        #[arg(long)]
        fixed_iters: Option<usize>,
        #[arg(long)]
        constraint: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean sum-rate over an SNR grid, with the fully-digital upper bound.
    SweepSnr {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<f64>>,
        #[arg(long)]
        fixed_step: Option<f64>,
        #[arg(long)]
        fixed_iters: Option<usize>,
        #[arg(long)]
        constraint: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Worst-case (minimal) rate over error balls of several radii.
    EvalRobust {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long)]
        n_e: Option<usize>,
        #[arg(long)]
        fixed_step: Option<f64>,
        #[arg(long)]
        fixed_iters: Option<usize>,
        #[arg(long)]
        i_max: Option<usize>,
        #[arg(long)]
        constraint: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the single-band ADMM baseline over a dataset.
    AdmmRun {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = config::load_file_config(cli.config.as_deref())?;
    if let Some(threads) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen { b, n, l, m, count, seed, noise_var, out } => {
            let ov = Overrides { file: &file };
            let dims = SystemDims::new(
                ov.usize_of(b, |f| f.b, "b")?,
                ov.usize_of(n, |f| f.n, "n")?,
                ov.usize_of(l, |f| f.l, "l")?,
                ov.usize_of(m, |f| f.m, "m")?,
                noise_var.or(file.noise_var).unwrap_or(1.0),
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            let count = ov.usize_of(count, |f| f.count, "count")?;
            let seed = config::seed_override()?
                .map(|s| s as i64)
                .or(seed)
                .or(file.seed.map(|s| s as i64))
                .unwrap_or(0);
            let out = ov.path_of(out, |f| f.out.clone(), "out")?;
            let ds = gen_rayleigh(dims, count, seed).map_err(CliError::config)?;
            save_dataset(&ds, &out).map_err(CliError::io)?;
            println!(
                "wrote R={} B={} N={} M={} seed={} to {}",
                count, dims.bands, dims.users, dims.antennas, seed,
                out.display()
            );
            Ok(())
        }
        Command::Train {
            dataset,
            kind,
            l,
            k,
            i_max,
            epochs,
            batch_size,
            lr,
            seed,
            init_step,
            fd_step,
            epsilon,
            n_e,
            constraint,
            out_schedule,
            out_csv,
        } => {
            let ov = Overrides { file: &file };
            let ds = load_normalized(
                &ov.path_of(dataset, |f| f.dataset.clone(), "dataset")?,
                ov.usize_of(l, |f| f.l, "l")?,
            )?;
            let kind = kind.or(file.kind.clone()).unwrap_or_else(|| "pga".into());
            let c = config::parse_constraint(constraint.or(file.constraint.clone()))?;
            let seed = config::seed_override()?
                .or(seed)
                .or(file.seed)
                .unwrap_or(0);
            let mut cfg = TrainConfig::new(
                epochs.or(file.epochs).unwrap_or(10),
                batch_size.or(file.batch_size).unwrap_or(10.min(ds.len())),
                lr.or(file.lr).unwrap_or(0.01),
                k.or(file.k).unwrap_or(5),
                seed,
            );
            if let Some(s) = init_step.or(file.init_step) {
                cfg.init_step = s;
            }
            if let Some(s) = fd_step.or(file.fd_step) {
                cfg.fd_step = s;
            }
            let b = ds.dims.bands;
            let (trained, log) = match kind.as_str() {
                "pga" => {
                    let init = PgaSchedule::fixed(cfg.unroll, b, cfg.init_step);
                    let (s, log) = train_pga(&ds, &cfg, c, &init).map_err(CliError::numeric)?;
                    (TrainedSchedule::Pga(s), log)
                }
                "pcmp" => {
                    let i_max = i_max.or(file.i_max).unwrap_or(2);
                    let eps = epsilon.or(file.epsilon).unwrap_or(0.05);
                    let n_e = n_e.or(file.n_e).unwrap_or(20);
                    let init = PcmpSchedule::fixed(cfg.unroll, i_max, b, cfg.init_step);
                    let (s, log) =
                        train_pcmp(&ds, &cfg, eps, n_e, c, &init).map_err(CliError::numeric)?;
                    (TrainedSchedule::Pcmp(s), log)
                }
                "admm" => {
                    let init =
                        AdmmParams::fixed(cfg.unroll, 1.0, 1.0, cfg.init_step, cfg.init_step, 1e-3);
                    let (p, log) = train_admm(&ds, &cfg, &init).map_err(CliError::numeric)?;
                    (TrainedSchedule::Admm(p), log)
                }
                other => {
                    return Err(CliError::Config(format!(
                        "unknown schedule kind {other:?} (expected pga, pcmp, or admm)"
                    )))
                }
            };
            let out_schedule = ov.path_of(out_schedule, |f| f.out_schedule.clone(), "out-schedule")?;
            save_schedule(&out_schedule, &trained, seed, &cfg).map_err(CliError::io)?;
            if let Some(csv_path) = out_csv.or(file.out_csv.clone()) {
                let mut rows = vec!["epoch,mean_loss".to_string()];
                for (i, loss) in log.iter().enumerate() {
                    rows.push(format!("{i},{loss}"));
                }
                csv::write_rows(&csv_path, &rows)?;
            }
            println!("trained kind={kind} epochs={} to {}", cfg.epochs, out_schedule.display());
            Ok(())
        }
        Command::Convergence {
            dataset,
            schedule,
            l,
            seed,
            fixed_step,
            fixed_iters,
            constraint,
            out,
        } => {
            let ov = Overrides { file: &file };
            let ds = load_normalized(
                &ov.path_of(dataset, |f| f.dataset.clone(), "dataset")?,
                ov.usize_of(l, |f| f.l, "l")?,
            )?;
            let c = config::parse_constraint(constraint.or(file.constraint.clone()))?;
            let seed = config::seed_override()?.or(seed).or(file.seed).unwrap_or(0);
            let sched = load_pga_schedule(&ov.path_of(schedule, |f| f.schedule.clone(), "schedule")?)?;
            let fixed = PgaSchedule::fixed(
                fixed_iters.or(file.fixed_iters).unwrap_or(100),
                ds.dims.bands,
                fixed_step.or(file.fixed_step).unwrap_or(0.05),
            );
            let mut rows = vec!["iteration,method,mean_rate".to_string()];
            for (name, s) in [("learned", &sched), ("fixed-step-100", &fixed)] {
                let curves: Vec<Vec<f64>> = ds
                    .realizations
                    .par_iter()
                    .map(|ch| {
                        pga_run(ch, s, c, seed)
                            .map(|t| t.iterates.iter().map(|p| p.rate).collect())
                    })
                    .collect::<Result<_, _>>()
                    .map_err(CliError::numeric)?;
                for it in 0..=s.iterations() {
                    let mean: f64 =
                        curves.iter().map(|cv| cv[it]).sum::<f64>() / curves.len() as f64;
                    rows.push(format!("{it},{name},{mean}"));
                }
            }
            csv::write_rows(&ov.path_of(out, |f| f.out.clone(), "out")?, &rows)
        }
        Command::SweepSnr {
            dataset,
            schedule,
            l,
            seed,
            snr,
            fixed_step,
            fixed_iters,
            constraint,
            out,
        } => {
            let ov = Overrides { file: &file };
            let raw = load_raw(
                &ov.path_of(dataset, |f| f.dataset.clone(), "dataset")?,
                ov.usize_of(l, |f| f.l, "l")?,
            )?;
            let c = config::parse_constraint(constraint.or(file.constraint.clone()))?;
            let seed = config::seed_override()?.or(seed).or(file.seed).unwrap_or(0);
            let snr_grid = snr
                .or(file.snr_grid.clone())
                .ok_or_else(|| CliError::Config("missing snr grid".into()))?;
            if snr_grid.iter().any(|s| !s.is_finite()) {
                return Err(CliError::Config("snr values must be finite".into()));
            }
            let learned = match schedule.or(file.schedule.clone()) {
                Some(p) => Some(load_pga_schedule(&p)?),
                None => None,
            };
            let fixed = |b: usize| {
                PgaSchedule::fixed(
                    fixed_iters.or(file.fixed_iters).unwrap_or(100),
                    b,
                    fixed_step.or(file.fixed_step).unwrap_or(0.05),
                )
            };
            let mut rows = vec!["snr_db,method,mean_rate".to_string()];
            for &snr_db in &snr_grid {
                let noise_var = 10f64.powf(-snr_db / 10.0);
                let ds = raw
                    .with_noise_var(noise_var)
                    .and_then(|d| d.normalize_all())
                    .map_err(CliError::config)?;
                let mut methods: Vec<(&str, PgaSchedule)> = Vec::new();
                if let Some(s) = &learned {
                    methods.push(("learned", s.clone()));
                }
                methods.push(("fixed-step-100", fixed(ds.dims.bands)));
                for (name, s) in &methods {
                    let mean = mean_over(&ds.realizations, |ch| {
                        Ok(pga_run(ch, s, c, seed)?.final_rate())
                    })?;
                    rows.push(format!("{snr_db},{name},{mean}"));
                }
                let mean = mean_over(&ds.realizations, |ch| {
                    Ok(hpcore::optim::fully_digital_baseline(
                        ch,
                        fixed_iters.or(file.fixed_iters).unwrap_or(100),
                        fixed_step.or(file.fixed_step).unwrap_or(0.05),
                        seed,
                    )?)
                })?;
                rows.push(format!("{snr_db},fully-digital,{mean}"));
            }
            csv::write_rows(&ov.path_of(out, |f| f.out.clone(), "out")?, &rows)
        }
        Command::EvalRobust {
            dataset,
            schedule,
            l,
            seed,
            epsilons,
            n_e,
            fixed_step,
            fixed_iters,
            i_max,
            constraint,
            out,
        } => {
            let ov = Overrides { file: &file };
            let ds = load_normalized(
                &ov.path_of(dataset, |f| f.dataset.clone(), "dataset")?,
                ov.usize_of(l, |f| f.l, "l")?,
            )?;
            let c = config::parse_constraint(constraint.or(file.constraint.clone()))?;
            let seed = config::seed_override()?.or(seed).or(file.seed).unwrap_or(0);
            let eps_list = epsilons
                .or(file.epsilons.clone())
                .ok_or_else(|| CliError::Config("missing epsilons list".into()))?;
            let n_e = n_e.or(file.n_e).unwrap_or(20);
            let learned = load_pcmp_schedule(&ov.path_of(schedule, |f| f.schedule.clone(), "schedule")?)?;
            let i_max = i_max.or(file.i_max).unwrap_or(2);
            let fixed = PcmpSchedule::fixed(
                fixed_iters.or(file.fixed_iters).unwrap_or(100),
                i_max,
                ds.dims.bands,
                fixed_step.or(file.fixed_step).unwrap_or(0.05),
            );
            let mut rows = vec!["epsilon,method,mean_min_rate".to_string()];
            for &eps in &eps_list {
                let es = error_set_for(ds.dims, eps, n_e, seed as i64);
                for (name, s) in [("learned", &learned), ("fixed-step-100", &fixed)] {
                    let mean = mean_over(&ds.realizations, |ch| {
                        let t = pcmp_run(ch, s, eps, c, seed)?;
                        Ok(min_rate_over_errors(&t.final_point().precoders, ch, &es)
                            .map_err(hpcore::optim::OptimError::Objective)?)
                    })?;
                    rows.push(format!("{eps},{name},{mean}"));
                }
            }
            csv::write_rows(&ov.path_of(out, |f| f.out.clone(), "out")?, &rows)
        }
        Command::AdmmRun { dataset, params, l, seed, iters, out } => {
            let ov = Overrides { file: &file };
            let ds = load_normalized(
                &ov.path_of(dataset, |f| f.dataset.clone(), "dataset")?,
                ov.usize_of(l, |f| f.l, "l")?,
            )?;
            let seed = config::seed_override()?.or(seed).or(file.seed).unwrap_or(0);
            let params = match params.or(file.params.clone()) {
                Some(path) => match load_schedule(&path).map_err(CliError::io)? {
                    (TrainedSchedule::Admm(p), _) => p,
                    _ => {
                        return Err(CliError::Config(format!(
                            "{} is not an ADMM parameter file",
                            path.display()
                        )))
                    }
                },
                None => AdmmParams::fixed(
                    iters.or(file.fixed_iters).unwrap_or(200),
                    1.0,
                    1.0,
                    0.01,
                    0.01,
                    1e-3,
                ),
            };
            let curves: Vec<Vec<f64>> = ds
                .realizations
                .par_iter()
                .map(|ch| admm_run(ch, &params, seed).map(|o| o.rates))
                .collect::<Result<_, _>>()
                .map_err(CliError::numeric)?;
            let mut rows = vec!["iteration,mean_rate".to_string()];
            for it in 0..=params.iterations() {
                let mean: f64 = curves.iter().map(|cv| cv[it]).sum::<f64>() / curves.len() as f64;
                rows.push(format!("{it},{mean}"));
            }
            csv::write_rows(&ov.path_of(out, |f| f.out.clone(), "out")?, &rows)
        }
    }
}

fn load_raw(path: &std::path::Path, rf_chains: usize) -> Result<ChannelDataset, CliError> {
    load_dataset(path, rf_chains).map_err(CliError::io)
}

fn load_normalized(path: &std::path::Path, rf_chains: usize) -> Result<ChannelDataset, CliError> {
    let ds = load_raw(path, rf_chains)?;
    if ds.normalized() {
        Ok(ds)
    } else {
        ds.normalize_all().map_err(CliError::numeric)
    }
}

fn load_pga_schedule(path: &std::path::Path) -> Result<PgaSchedule, CliError> {
    match load_schedule(path).map_err(CliError::io)? {
        (TrainedSchedule::Pga(s), _) => Ok(s),
        _ => Err(CliError::Config(format!(
            "{} is not a PGA schedule",
            path.display()
        ))),
    }
}

fn load_pcmp_schedule(path: &std::path::Path) -> Result<PcmpSchedule, CliError> {
    match load_schedule(path).map_err(CliError::io)? {
        (TrainedSchedule::Pcmp(s), _) => Ok(s),
        _ => Err(CliError::Config(format!(
            "{} is not a PCMP schedule",
            path.display()
        ))),
    }
}

/// Error set for robust evaluation; ε = 0 degenerates to the zero pattern.
fn error_set_for(dims: SystemDims, epsilon: f64, n_e: usize, seed: i64) -> ErrorSet {
    if epsilon > 0.0 {
        sample_error_set(dims, epsilon, n_e, seed)
    } else {
        let zero = (0..dims.bands)
            .map(|_| hpcore::matcore::zeros(dims.users, dims.antennas))
            .collect();
        ErrorSet { dims, epsilon: 0.0, patterns: vec![zero] }
    }
}

/// Order-stable parallel mean of a per-channel metric.
fn mean_over<F>(channels: &[ChannelSet], f: F) -> Result<f64, CliError>
where
    F: Fn(&ChannelSet) -> Result<f64, hpcore::optim::OptimError> + Sync,
{
    let values: Vec<f64> = channels
        .par_iter()
        .map(&f)
        .collect::<Result<_, _>>()
        .map_err(CliError::numeric)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
