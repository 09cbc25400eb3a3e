//! Experiment configuration files.

use std::path::{Path, PathBuf};

use lodempc::nalgebra::{DMatrix, DVector};
use lodempc::{ControlApplication, ControllerConfig, HyperBounds, Hyperparams, LinearSystem};
use serde::Deserialize;

use crate::CliError;

/// Environment variable that replaces `output.dir` when set.
pub const OUTPUT_DIR_ENV: &str = "LODEMPC_OUTPUT_DIR";

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSection,
    pub reference: ReferenceSection,
    pub initial: InitialSection,
    pub horizon: HorizonSection,
    pub bounds: BoundsSection,
    pub datasets: DatasetsSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub hyperparameters: HyperSection,
    #[serde(default)]
    pub samples: SamplesSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Rows of `A`.
    pub a: Vec<Vec<f64>>,
    /// Rows of `B`.
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub channel_names: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub x_ref: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub z_min: Vec<f64>,
    pub z_max: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn times(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.start + k as f64 * self.step)
            .collect()
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetsSection {
    pub grid: GridSpec,
    #[serde(default)]
    pub m_p: usize,
    #[serde(default)]
    pub t_v: Option<f64>,
    #[serde(default)]
    pub constraint_noise_is_variance: bool,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ApplicationKind {
    #[default]
    HoldEndpoint,
    SubgridInterpolation,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default)]
    pub application: ApplicationKind,
    #[serde(default = "default_subgrid")]
    pub subgrid: usize,
    #[serde(default = "default_substeps")]
    pub plant_substeps: usize,
}

fn default_subgrid() -> usize {
    10
}

fn default_substeps() -> usize {
    lodempc::Plant::DEFAULT_SUBSTEPS
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            application: ApplicationKind::default(),
            subgrid: default_subgrid(),
            plant_substeps: default_substeps(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSection {
    #[serde(default = "default_bounds")]
    pub signal_variance_bounds: [f64; 2],
    #[serde(default = "default_bounds")]
    pub lengthscale_sq_bounds: [f64; 2],
    /// Skip optimization when both are given.
    pub signal_variance: Option<f64>,
    pub lengthscale_sq: Option<f64>,
}

fn default_bounds() -> [f64; 2] {
    [0.01, 100.0]
}

impl Default for HyperSection {
    fn default() -> Self {
        HyperSection {
            signal_variance_bounds: default_bounds(),
            lengthscale_sq_bounds: default_bounds(),
            signal_variance: None,
            lengthscale_sq: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// The controller's conditioning set at `t0`.
    #[default]
    Initial,
    /// Only `z0` at `t0` and the reference at `tT`, both hard.
    Endpoints,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesSection {
    #[serde(default)]
    pub conditioning: Conditioning,
    /// Query grid; defaults to the `dt` grid of the horizon.
    pub grid: Option<GridSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_metrics")]
    pub metrics: String,
    #[serde(default = "default_samples")]
    pub samples: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_trajectory() -> String {
    "trajectory.csv".into()
}

fn default_metrics() -> String {
    "metrics.toml".into()
}

fn default_samples() -> String {
    "samples.csv".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            trajectory: default_trajectory(),
            metrics: default_metrics(),
            samples: default_samples(),
        }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::Config(format!(
            "system.{name} must be a nonempty list of equal-length rows"
        )));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| CliError::Config(e.to_string().lines().next().unwrap_or("").to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let sys = self.system()?;
        self.controller_config()?.validate()?;
        if self.initial.x0.len() != sys.n_x() || self.initial.u0.len() != sys.n_u() {
            return Err(CliError::Config(format!(
                "initial state/input have {}/{} entries, system has {}/{}",
                self.initial.x0.len(),
                self.initial.u0.len(),
                sys.n_x(),
                sys.n_u()
            )));
        }
        self.bounds()?;
        if let Some(g) = &self.samples.grid {
            if !(g.step > 0.0 && g.step.is_finite() && g.start.is_finite()) {
                return Err(CliError::Config("samples.grid needs a positive step".into()));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<LinearSystem, CliError> {
        let a = matrix("a", &self.system.a)?;
        let b = matrix("b", &self.system.b)?;
        let sys = match &self.system.channel_names {
            Some(names) => LinearSystem::with_names(a, b, names.clone())?,
            None => LinearSystem::new(a, b)?,
        };
        Ok(sys)
    }

    pub fn x_ref(&self) -> DVector<f64> {
        DVector::from_vec(self.reference.x_ref.clone())
    }

    pub fn controller_config(&self) -> Result<ControllerConfig, CliError> {
        let grid = &self.datasets.grid;
        if !(grid.step > 0.0 && grid.step.is_finite()) && grid.count > 1 {
            return Err(CliError::Config("datasets.grid.step must be positive".into()));
        }
        let control_application = match self.control.application {
            ApplicationKind::HoldEndpoint => ControlApplication::HoldEndpoint,
            ApplicationKind::SubgridInterpolation => {
                ControlApplication::SubgridInterpolation(self.control.subgrid)
            }
        };
        if self.control.plant_substeps == 0 {
            return Err(CliError::Config("control.plant_substeps must be at least 1".into()));
        }
        Ok(ControllerConfig {
            t0: self.horizon.t0,
            t_end: self.horizon.t_end,
            dt: self.horizon.dt,
            x0: DVector::from_vec(self.initial.x0.clone()),
            u0: DVector::from_vec(self.initial.u0.clone()),
            z_min: DVector::from_vec(self.bounds.z_min.clone()),
            z_max: DVector::from_vec(self.bounds.z_max.clone()),
            x_ref: self.x_ref(),
            m_p: self.datasets.m_p,
            t_v: self.datasets.t_v,
            grid: grid.times(),
            constraint_noise_is_variance: self.datasets.constraint_noise_is_variance,
            control_application,
        })
    }

    pub fn bounds(&self) -> Result<HyperBounds, CliError> {
        let h = &self.hyperparameters;
        let b = HyperBounds {
            signal_variance: (h.signal_variance_bounds[0], h.signal_variance_bounds[1]),
            lengthscale_sq: (h.lengthscale_sq_bounds[0], h.lengthscale_sq_bounds[1]),
        };
        b.validate()?;
        Ok(b)
    }

    /// Fixed hyperparameters, if the config pins both.
    pub fn fixed_hyperparams(&self) -> Result<Option<Hyperparams>, CliError> {
        match (self.hyperparameters.signal_variance, self.hyperparameters.lengthscale_sq) {
            (Some(s), Some(l)) => Ok(Some(Hyperparams::new(s, l)?)),
            (None, None) => Ok(None),
            _ => Err(CliError::Config(
                "fix both signal_variance and lengthscale_sq or neither".into(),
            )),
        }
    }

    /// `output.dir`, unless overridden through [`OUTPUT_DIR_ENV`].
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output.dir.clone(),
        }
    }

    pub fn sample_times(&self) -> Vec<f64> {
        match &self.samples.grid {
            Some(g) => g.times(),
            None => {
                let n = ((self.horizon.t_end - self.horizon.t0) / self.horizon.dt).round() as usize;
                (0..=n).map(|i| self.horizon.t0 + i as f64 * self.horizon.dt).collect()
            }
        }
    }
}
