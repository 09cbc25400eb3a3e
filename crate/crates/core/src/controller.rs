//! Model predictive control as GP conditioning: at every step the prior is
//! conditioned on the current state, soft box constraints on the future,
//! recent history and virtual reference points, and the control channels of
//! the posterior mean drive the plant over the next interval.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gpcore::{
    optimize_hyperparams, DataPoint, Dataset, HyperBounds, Optimum, PosteriorGp, Role,
};
use crate::kernelops::Hyperparams;
use crate::lodegp::LodeGpPrior;
use crate::metrics;
use crate::plant::{ControlSignal, Plant, Trajectory};

/// States with a norm beyond this abort the closed loop.
pub const DIVERGENCE_NORM: f64 = 1e6;

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Strictly later than `t`, ignoring rounding noise in the time stamps.
fn after(s: f64, t: f64) -> bool {
    s > t && !same_time(s, t)
}

/// How the posterior control channels become the input over one interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlApplication {
    /// Hold `u*(t_{i+1})` over `[t_i, t_{i+1}]`.
    HoldEndpoint,
    /// Interpolate `u*` linearly between `k + 1` equispaced points of the interval.
    SubgridInterpolation(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub x0: DVector<f64>,
    pub u0: DVector<f64>,
    pub z_min: DVector<f64>,
    pub z_max: DVector<f64>,
    pub x_ref: DVector<f64>,
    pub m_p: usize,
    pub t_v: Option<f64>,
    pub grid: Vec<f64>,
    /// Read `(z_max - z_min) / 2` as a variance instead of a standard deviation.
    pub constraint_noise_is_variance: bool,
    pub control_application: ControlApplication,
}

impl ControllerConfig {
    pub fn n_x(&self) -> usize {
        self.x0.len()
    }

    pub fn n_z(&self) -> usize {
        self.x0.len() + self.u0.len()
    }

    /// Number of `dt` steps from `t0` to `t_end`.
    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t0) / self.dt).round() as usize
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.t0.is_finite() && self.t_end.is_finite() && self.t0 <= self.t_end) {
            return bad(format!("need t0 <= tT, got {} and {}", self.t0, self.t_end));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        let steps = (self.t_end - self.t0) / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return bad("horizon must be a whole number of steps".into());
        }
        let n_z = self.n_z();
        if self.u0.is_empty() || self.x0.is_empty() {
            return bad("initial state and input must be nonempty".into());
        }
        for (name, v) in [("z_min", &self.z_min), ("z_max", &self.z_max)] {
            if v.len() != n_z {
                return bad(format!("{name} has {} entries, expected {n_z}", v.len()));
            }
        }
        if self.x_ref.len() != self.n_x() {
            return bad(format!("x_ref has {} entries, expected {}", self.x_ref.len(), self.n_x()));
        }
        if let Some(c) = (0..n_z).find(|&c| !(self.z_min[c] <= self.z_max[c])) {
            return bad(format!(
                "z_min > z_max on channel {c}: {} > {}",
                self.z_min[c], self.z_max[c]
            ));
        }
        let all = self
            .x0
            .iter()
            .chain(self.u0.iter())
            .chain(self.z_min.iter())
            .chain(self.z_max.iter())
            .chain(self.x_ref.iter())
            .chain(self.grid.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return bad("non-finite value".into());
        }
        if self.grid.windows(2).any(|w| !after(w[1], w[0])) {
            return bad("constraint grid must be strictly increasing".into());
        }
        for w in self.grid.windows(2) {
            let r = (w[1] - w[0]) / self.dt;
            if (r - r.round()).abs() > 1e-6 {
                return bad(format!(
                    "constraint grid spacing {} is not a multiple of dt = {}",
                    w[1] - w[0],
                    self.dt
                ));
            }
        }
        if let ControlApplication::SubgridInterpolation(0) = self.control_application {
            return bad("subgrid count must be at least 1".into());
        }
        if self.t_v.is_some_and(|t| !t.is_finite()) {
            return bad("t_v must be finite".into());
        }
        Ok(())
    }

    /// `(z_min + z_max) / 2` and the per-channel noise variance of the soft constraints.
    pub fn constraint_target(&self) -> (Vec<f64>, Vec<f64>) {
        let centre = (&self.z_min + &self.z_max) * 0.5;
        let half = (&self.z_max - &self.z_min) * 0.5;
        let noise = if self.constraint_noise_is_variance {
            half.iter().copied().collect()
        } else {
            half.iter().map(|s| s * s).collect()
        };
        (centre.iter().copied().collect(), noise)
    }
}

/// Observations gathered so far: the current one plus the history before it.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub index: usize,
    pub t: f64,
    pub z: Vec<Option<f64>>,
    history: Vec<(f64, Vec<Option<f64>>)>,
}

impl ControllerState {
    pub fn new(t: f64, z: &[f64]) -> Self {
        ControllerState {
            index: 0,
            t,
            z: z.iter().copied().map(Some).collect(),
            history: Vec::new(),
        }
    }

    /// Moves the current observation into the history.
    pub fn advance(&mut self, t: f64, z: &[f64]) -> Result<()> {
        if !after(t, self.t) {
            return Err(Error::InvalidObservation(format!(
                "observation at t={t} does not follow t={}",
                self.t
            )));
        }
        let prev = std::mem::replace(&mut self.z, z.iter().copied().map(Some).collect());
        self.history.push((self.t, prev));
        self.t = t;
        self.index += 1;
        Ok(())
    }

    pub fn history(&self) -> &[(f64, Vec<Option<f64>>)] {
        &self.history
    }
}

/// The current observation as a hard point; masked channels stay masked.
pub fn make_d_init(t: f64, z: &[Option<f64>]) -> Vec<DataPoint> {
    vec![DataPoint {
        t,
        values: z.to_vec(),
        noise_var: vec![0.0; z.len()],
        role: Role::Init,
    }]
}

/// Soft box constraints at grid times strictly after `t_now`.
pub fn make_d_con(cfg: &ControllerConfig, t_now: f64) -> Vec<DataPoint> {
    let (centre, noise) = cfg.constraint_target();
    cfg.grid
        .iter()
        .filter(|&&t| after(t, t_now))
        .map(|&t| DataPoint::soft(t, &centre, &noise, Role::Constraint))
        .collect()
}

/// The `m_p` most recent history entries, hard.
pub fn make_d_past(state: &ControllerState, m_p: usize) -> Vec<DataPoint> {
    let h = state.history();
    h[h.len().saturating_sub(m_p)..]
        .iter()
        .map(|(t, z)| DataPoint {
            t: *t,
            values: z.clone(),
            noise_var: vec![0.0; z.len()],
            role: Role::Past,
        })
        .collect()
}

/// Hard reference points at grid times after both `t_v` and `t_now`.
pub fn make_d_v(cfg: &ControllerConfig, z_ref: &DVector<f64>, t_now: f64) -> Vec<DataPoint> {
    let Some(t_v) = cfg.t_v else {
        return Vec::new();
    };
    let z: Vec<f64> = z_ref.iter().copied().collect();
    cfg.grid
        .iter()
        .filter(|&&t| after(t, t_v) && after(t, t_now))
        .map(|&t| DataPoint::hard(t, &z, Role::Virtual))
        .collect()
}

/// `D_init ∪ D_con ∪ D_past ∪ D_v`, with virtual points replacing soft
/// constraints at the same time.
pub fn build_dataset(
    prior: &LodeGpPrior,
    state: &ControllerState,
    cfg: &ControllerConfig,
) -> Result<Dataset> {
    let d_v = make_d_v(cfg, prior.mean(), state.t);
    let d_con: Vec<DataPoint> = make_d_con(cfg, state.t)
        .into_iter()
        .filter(|p| !d_v.iter().any(|v| same_time(v.t, p.t)))
        .collect();
    let points = make_d_init(state.t, &state.z)
        .into_iter()
        .chain(d_con)
        .chain(make_d_past(state, cfg.m_p))
        .chain(d_v);
    Dataset::new(cfg.n_z(), points)
}

/// Per-step by-products of the conditioning.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    pub n_obs: usize,
    pub jitter_used: f64,
    /// Posterior mean and standard deviation at the end of the interval.
    pub mean_end: DVector<f64>,
    pub std_end: DVector<f64>,
    /// Largest `|mu*(t) - z|` over the current observation.
    pub init_residual: f64,
    /// Largest `|mu*(t) - z|` over every hard point in the dataset.
    pub hard_residual: f64,
}

fn hard_residual(gp: &PosteriorGp<'_>, roles: &[Role]) -> f64 {
    let pts: Vec<&DataPoint> = gp
        .data()
        .points()
        .iter()
        .filter(|p| roles.contains(&p.role))
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.t).collect();
    let mean = gp.posterior_mean(&ts);
    let mut worst: f64 = 0.0;
    for (q, p) in pts.iter().enumerate() {
        for (c, v) in p.observed_channels() {
            if p.noise_var[c] == 0.0 {
                worst = worst.max((mean[(q, c)] - v).abs());
            }
        }
    }
    worst
}

/// One conditioning step at the state's current time.
pub fn mpc_step(
    prior: &LodeGpPrior,
    state: &ControllerState,
    cfg: &ControllerConfig,
    hp: &Hyperparams,
) -> Result<(ControlSignal, StepDiagnostics)> {
    let data = build_dataset(prior, state, cfg)?;
    let n_obs = data.n_obs();
    let gp = PosteriorGp::condition(prior, data, *hp)?;
    let n_x = cfg.n_x();
    let t = state.t;
    let t_next = t + cfg.dt;
    let controls = |m: &DMatrix<f64>, j: usize| -> DVector<f64> {
        DVector::from_iterator(m.ncols() - n_x, (n_x..m.ncols()).map(|c| m[(j, c)]))
    };
    let signal = match cfg.control_application {
        ControlApplication::HoldEndpoint => {
            let m = gp.posterior_mean(&[t_next]);
            ControlSignal::Constant(controls(&m, 0))
        }
        ControlApplication::SubgridInterpolation(k) => {
            let times: Vec<f64> = (0..=k).map(|j| t + cfg.dt * j as f64 / k as f64).collect();
            let m = gp.posterior_mean(&times);
            let values = (0..=k)
                .map(|j| controls(&m, j))
                .collect();
            ControlSignal::piecewise_linear(times, values)?
        }
    };
    let mean_end = gp.posterior_mean(&[t_next]).row(0).transpose();
    let std_end = gp
        .posterior_variance(&[t_next])
        .row(0)
        .transpose()
        .map(f64::sqrt);
    let diag = StepDiagnostics {
        t,
        n_obs,
        jitter_used: gp.jitter_used(),
        mean_end,
        std_end,
        init_residual: hard_residual(&gp, &[Role::Init]),
        hard_residual: hard_residual(&gp, &[Role::Init, Role::Past, Role::Virtual]),
    };
    Ok((signal, diag))
}

/// The conditioning set at `t0`, used to fit hyperparameters before the run.
pub fn initial_dataset(prior: &LodeGpPrior, cfg: &ControllerConfig) -> Result<Dataset> {
    cfg.validate()?;
    let z0: Vec<f64> = cfg.x0.iter().chain(cfg.u0.iter()).copied().collect();
    build_dataset(prior, &ControllerState::new(cfg.t0, &z0), cfg)
}

/// Hyperparameters maximizing the likelihood of the conditioning set at `t0`;
/// they stay fixed for the whole run.
pub fn fit_hyperparams(
    prior: &LodeGpPrior,
    cfg: &ControllerConfig,
    bounds: &HyperBounds,
) -> Result<Optimum> {
    optimize_hyperparams(prior, &initial_dataset(prior, cfg)?, bounds)
}

/// Observe, condition, apply, from `t0` through `tT` on the `dt` grid.
/// Row `i` of the result holds the state observed at `t_i`, the applied
/// control at `t_i` and the posterior standard deviation predicted for
/// `t_{i+1}`.
pub fn run_closed_loop(
    prior: &LodeGpPrior,
    plant: &Plant,
    cfg: &ControllerConfig,
    hp: &Hyperparams,
) -> Result<Trajectory> {
    run_closed_loop_with(prior, plant, cfg, hp, |_, _| {})
}

/// [`run_closed_loop`] with a callback receiving the state and diagnostics of every step.
pub fn run_closed_loop_with(
    prior: &LodeGpPrior,
    plant: &Plant,
    cfg: &ControllerConfig,
    hp: &Hyperparams,
    mut on_step: impl FnMut(&ControllerState, &StepDiagnostics),
) -> Result<Trajectory> {
    cfg.validate()?;
    if plant.system != prior.system || cfg.n_z() != prior.n_z() || cfg.n_x() != prior.system.n_x() {
        return Err(Error::InvalidConfig(
            "plant, prior and controller disagree on the system".into(),
        ));
    }
    let n_x = cfg.n_x();
    let mut x = cfg.x0.clone();
    let z0: Vec<f64> = x.iter().chain(cfg.u0.iter()).copied().collect();
    let mut state = ControllerState::new(cfg.t0, &z0);
    let mut traj = Trajectory::new();
    let n = cfg.n_steps();
    for i in 0..=n {
        let t = cfg.time(i);
        let (signal, diag) = mpc_step(prior, &state, cfg, hp)?;
        on_step(&state, &diag);
        traj.push(t, x.clone(), signal.eval(t), diag.std_end.clone());
        if i == n {
            break;
        }
        let x_next = plant.advance(&x, &signal, t, cfg.dt);
        let norm = x_next.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::PlantDivergence {
                t: cfg.time(i + 1),
                norm,
            });
        }
        x = x_next;
        let z: Vec<f64> = x.iter().chain(signal.end_value().iter()).copied().collect();
        debug_assert_eq!(z.len(), n_x + signal.dim());
        state.advance(cfg.time(i + 1), &z)?;
    }
    if traj.len() >= 2 {
        traj.metrics = Some(metrics::evaluate(&traj, &cfg.z_min, &cfg.z_max, &cfg.x_ref)?);
    }
    Ok(traj)
}
