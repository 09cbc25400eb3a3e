//! Ground-truth simulation of `x' = A x + B u`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lodegp::LinearSystem;
use crate::metrics::Metrics;

/// Input applied over one controller interval.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlSignal {
    Constant(DVector<f64>),
    /// Linear between knots, held flat outside them.
    PiecewiseLinear {
        times: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
}

impl ControlSignal {
    pub fn piecewise_linear(times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} knot times for {} knot values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("knot times must be strictly increasing".into()));
        }
        let n = values[0].len();
        if values.iter().any(|v| v.len() != n) {
            return Err(Error::DimensionMismatch("knot values differ in length".into()));
        }
        Ok(ControlSignal::PiecewiseLinear { times, values })
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSignal::Constant(u) => u.len(),
            ControlSignal::PiecewiseLinear { values, .. } => values[0].len(),
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            ControlSignal::Constant(u) => u.clone(),
            ControlSignal::PiecewiseLinear { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= times[last] {
                    return values[last].clone();
                }
                let k = times.partition_point(|&s| s <= t) - 1;
                let s = (t - times[k]) / (times[k + 1] - times[k]);
                &values[k] * (1.0 - s) + &values[k + 1] * s
            }
        }
    }

    /// Value at the right end of the support (the constant itself if constant).
    pub fn end_value(&self) -> DVector<f64> {
        match self {
            ControlSignal::Constant(u) => u.clone(),
            ControlSignal::PiecewiseLinear { values, .. } => values[values.len() - 1].clone(),
        }
    }
}

/// Exact zero-order-hold step through the exponential of `[[A, B u], [0, 0]] h`.
pub fn step_exact(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    m.view_mut((0, n), (n, 1)).copy_from(&(b * u * h));
    let e = m.exp();
    e.view((0, 0), (n, n)) * x + e.view((0, n), (n, 1)).column(0)
}

/// Classical fourth-order Runge-Kutta step with `u` sampled at `t`, `t + h/2`, `t + h`.
pub fn step_rk4(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &ControlSignal,
    t: f64,
    h: f64,
) -> DVector<f64> {
    let f = |x: &DVector<f64>, t: f64| a * x + b * u.eval(t);
    let k1 = f(x, t);
    let k2 = f(&(x + &k1 * (h / 2.0)), t + h / 2.0);
    let k3 = f(&(x + &k2 * (h / 2.0)), t + h / 2.0);
    let k4 = f(&(x + &k3 * h), t + h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates one controller interval `[t, t + dt]` in `substeps` equal steps,
/// exactly for constant inputs and by RK4 otherwise.
pub fn simulate(
    sys: &LinearSystem,
    x0: &DVector<f64>,
    u: &ControlSignal,
    t: f64,
    dt: f64,
    substeps: usize,
) -> DVector<f64> {
    let h = dt / substeps.max(1) as f64;
    let mut x = x0.clone();
    for k in 0..substeps.max(1) {
        let tk = t + k as f64 * h;
        x = match u {
            ControlSignal::Constant(c) => step_exact(sys.a(), sys.b(), &x, c, h),
            _ => step_rk4(sys.a(), sys.b(), &x, u, tk, h),
        };
    }
    x
}

/// The simulated plant: a system plus its inner step count per interval.
#[derive(Clone, Debug)]
pub struct Plant {
    pub system: LinearSystem,
    pub substeps: usize,
}

impl Plant {
    pub const DEFAULT_SUBSTEPS: usize = 10;

    pub fn new(system: LinearSystem) -> Self {
        Plant {
            system,
            substeps: Self::DEFAULT_SUBSTEPS,
        }
    }

    pub fn advance(&self, x: &DVector<f64>, u: &ControlSignal, t: f64, dt: f64) -> DVector<f64> {
        simulate(&self.system, x, u, t, dt, self.substeps)
    }
}

/// Closed-loop record on the `dt` grid. Row `i` holds the state observed at
/// `t_i`, the control value at `t_i`, and posterior standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub stds: Vec<DVector<f64>>,
    pub metrics: Option<Metrics>,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
            stds: Vec::new(),
            metrics: None,
        }
    }

    pub fn push(&mut self, t: f64, x: DVector<f64>, u: DVector<f64>, std: DVector<f64>) {
        self.times.push(t);
        self.states.push(x);
        self.controls.push(u);
        self.stds.push(std);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Stacked `(x, u)` at row `i`.
    pub fn z(&self, i: usize) -> DVector<f64> {
        let x = &self.states[i];
        let u = &self.controls[i];
        DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        Self::new()
    }
}
