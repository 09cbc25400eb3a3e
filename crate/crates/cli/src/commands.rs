use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lodempc::controller::{fit_hyperparams, initial_dataset};
use lodempc::gpcore::{optimize_hyperparams, sample_posterior};
use lodempc::lodegp::{build_h, require_unit_factors};
use lodempc::polyalg::{right_nullspace_columns, smith_normal_form};
use lodempc::{
    build_prior, run_closed_loop, DataPoint, Dataset, Hyperparams, LodeGpPrior, OperatorKernel,
    Plant, PosteriorGp, Role, Trajectory,
};
use serde::Serialize;

use crate::config::{Conditioning, ExperimentConfig};
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperSummary {
    pub signal_variance: f64,
    pub lengthscale_sq: f64,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_marginal_likelihood: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub name: String,
    pub steps: usize,
    pub constraint_error: f64,
    pub control_error: f64,
    pub final_state_norm: f64,
    pub wall_time_s: f64,
    pub hyperparameters: HyperSummary,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub trajectory: Trajectory,
    pub summary: MetricsSummary,
    pub trajectory_path: PathBuf,
    pub metrics_path: PathBuf,
}

fn prior_for(cfg: &ExperimentConfig) -> Result<LodeGpPrior, CliError> {
    Ok(build_prior(&cfg.system()?, &cfg.x_ref())?)
}

fn output_path(cfg: &ExperimentConfig, file: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.join(file))
}

/// Fixed hyperparameters from the config, or the likelihood optimum on `data`.
fn resolve_hyperparams(
    cfg: &ExperimentConfig,
    fit: impl FnOnce() -> lodempc::Result<lodempc::gpcore::Optimum>,
) -> Result<(Hyperparams, HyperSummary), CliError> {
    if let Some(hp) = cfg.fixed_hyperparams()? {
        let s = HyperSummary {
            signal_variance: hp.signal_variance,
            lengthscale_sq: hp.lengthscale_sq,
            source: "fixed".into(),
            log_marginal_likelihood: None,
        };
        return Ok((hp, s));
    }
    let opt = fit()?;
    let hp = opt.hyperparams;
    let s = HyperSummary {
        signal_variance: hp.signal_variance,
        lengthscale_sq: hp.lengthscale_sq,
        source: "optimized".into(),
        log_marginal_likelihood: Some(opt.log_marginal_likelihood),
    };
    Ok((hp, s))
}

/// Builds the prior, fits hyperparameters at `t0`, runs the closed loop and
/// writes the trajectory CSV and metrics summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let prior = prior_for(cfg)?;
    let ctrl = cfg.controller_config()?;
    let bounds = cfg.bounds()?;
    let (hp, hyper) = resolve_hyperparams(cfg, || fit_hyperparams(&prior, &ctrl, &bounds))?;
    let plant = Plant {
        system: prior.system.clone(),
        substeps: cfg.control.plant_substeps,
    };
    let traj = run_closed_loop(&prior, &plant, &ctrl, &hp)?;
    let wall = start.elapsed().as_secs_f64();

    let trajectory_path = output_path(cfg, &cfg.output.trajectory)?;
    write_trajectory(&trajectory_path, &traj)?;

    let (constraint_error, control_error) = match traj.metrics {
        Some(m) => (m.constraint_error, m.control_error),
        None => (0.0, 0.0),
    };
    let summary = MetricsSummary {
        name: cfg.name.clone(),
        steps: traj.len(),
        constraint_error,
        control_error,
        final_state_norm: traj.final_state().map_or(0.0, |x| x.norm()),
        wall_time_s: wall,
        hyperparameters: hyper,
    };
    let metrics_path = output_path(cfg, &cfg.output.metrics)?;
    let text = toml::to_string(&summary).map_err(|e| CliError::Output(e.to_string()))?;
    fs::write(&metrics_path, text)?;
    Ok(RunReport {
        trajectory: traj,
        summary,
        trajectory_path,
        metrics_path,
    })
}

fn num(v: f64) -> String {
    // Display for f64 is locale independent and round-trips exactly
    format!("{v}")
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let n_x = traj.states.first().map_or(0, |x| x.len());
    let n_u = traj.controls.first().map_or(0, |u| u.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n_x).map(|i| format!("x{i}")));
    header.extend((1..=n_u).map(|i| format!("u{i}")));
    header.extend((1..=n_x).map(|i| format!("std_x{i}")));
    header.extend((1..=n_u).map(|i| format!("std_u{i}")));
    w.write_record(&header)?;
    for i in 0..traj.len() {
        let row = std::iter::once(traj.times[i])
            .chain(traj.states[i].iter().copied())
            .chain(traj.controls[i].iter().copied())
            .chain(traj.stds[i].iter().copied())
            .map(num);
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Conditioning set for `samples`.
fn samples_dataset(cfg: &ExperimentConfig, prior: &LodeGpPrior) -> Result<Dataset, CliError> {
    let ctrl = cfg.controller_config()?;
    match cfg.samples.conditioning {
        Conditioning::Initial => Ok(initial_dataset(prior, &ctrl)?),
        Conditioning::Endpoints => {
            let z0: Vec<f64> = ctrl.x0.iter().chain(ctrl.u0.iter()).copied().collect();
            let z_ref: Vec<f64> = prior.mean().iter().copied().collect();
            let mut pts = vec![DataPoint::hard(ctrl.t0, &z0, Role::Init)];
            if ctrl.t_end > ctrl.t0 {
                pts.push(DataPoint::hard(ctrl.t_end, &z_ref, Role::Virtual));
            }
            Ok(Dataset::new(prior.n_z(), pts)?)
        }
    }
}

/// Writes `count` posterior draws as `sample_id,t,channel,value` rows and
/// returns the number of data rows.
pub fn dump_samples(cfg: &ExperimentConfig, count: usize, seed: u64) -> Result<(PathBuf, usize), CliError> {
    let prior = prior_for(cfg)?;
    let data = samples_dataset(cfg, &prior)?;
    let bounds = cfg.bounds()?;
    let (hp, _) = resolve_hyperparams(cfg, || optimize_hyperparams(&prior, &data, &bounds))?;
    let gp = PosteriorGp::condition(&prior, data, hp)?;
    let ts = cfg.sample_times();
    let draws = sample_posterior(&gp, &ts, count, seed);

    let path = output_path(cfg, &cfg.output.samples)?;
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["sample_id", "t", "channel", "value"])?;
    let names = prior.system.channel_names();
    let mut rows = 0;
    for (id, s) in draws.iter().enumerate() {
        for (q, &t) in ts.iter().enumerate() {
            for (c, name) in names.iter().enumerate() {
                w.write_record([id.to_string(), num(t), name.clone(), num(s[(q, c)])])?;
                rows += 1;
            }
        }
    }
    w.flush()?;
    Ok((path, rows))
}

/// Prints `H`, its Smith form, the nullspace generators and the kernel table.
/// Systems that fail the invariant-factor check still get `H` and `D` printed.
pub fn dump_algebra(cfg: &ExperimentConfig, out: &mut impl Write) -> Result<(), CliError> {
    let sys = cfg.system()?;
    let h = build_h(&sys);
    let dec = smith_normal_form(&h)?;
    writeln!(out, "channels: {}", sys.channel_names().join(", "))?;
    writeln!(out, "H =\n{h}")?;
    writeln!(out, "D =\n{}", dec.d)?;
    require_unit_factors(&sys, &dec)?;
    let v = right_nullspace_columns(&h, &dec);
    writeln!(out, "nullspace columns =\n{v}")?;
    let kernel = OperatorKernel::build(&v)?;
    writeln!(out, "kernel (u = t - t', λ = 1/l^2, times sigma_f^2) =\n{kernel}")?;
    Ok(())
}
