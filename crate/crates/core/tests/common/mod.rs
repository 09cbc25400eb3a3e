#![allow(dead_code)]

use lodempc::{build_prior, LinearSystem, LodeGpPrior};
use nalgebra::{DMatrix, DVector};

/// `x1' = x2`, `x2' = x1 + x2 + u`.
pub fn unstable_system() -> LinearSystem {
    LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    )
    .unwrap()
}

/// `x' = u`; the state channel carries the bare squared-exponential kernel.
pub fn integrator() -> LinearSystem {
    LinearSystem::new(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)).unwrap()
}

pub fn unstable_prior() -> LodeGpPrior {
    build_prior(&unstable_system(), &DVector::zeros(2)).unwrap()
}

pub fn integrator_prior() -> LodeGpPrior {
    build_prior(&integrator(), &DVector::zeros(1)).unwrap()
}

pub fn se(sf2: f64, l2: f64, u: f64) -> f64 {
    sf2 * (-u * u / (2.0 * l2)).exp()
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn regulation_config(
    m_p: usize,
    t_v: Option<f64>,
    app: lodempc::ControlApplication,
) -> lodempc::ControllerConfig {
    lodempc::ControllerConfig {
        t0: 0.0,
        t_end: 10.0,
        dt: 0.1,
        x0: DVector::from_vec(vec![1.0, 0.0]),
        u0: DVector::from_vec(vec![0.0]),
        z_min: DVector::from_vec(vec![-1.0, -1.0, -2.5]),
        z_max: DVector::from_vec(vec![1.0, 1.0, 2.5]),
        x_ref: DVector::zeros(2),
        m_p,
        t_v,
        grid: (1..=100).map(|k| 0.1 * k as f64).collect(),
        constraint_noise_is_variance: false,
        control_application: app,
    }
}
