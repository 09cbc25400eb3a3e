//! Fixtures shared by the criterion benchmarks in `benches/`.

use lodempc::nalgebra::{DMatrix, DVector};
use lodempc::{ControlApplication, ControllerConfig, LinearSystem};

/// `x1' = x2`, `x2' = x1 + x2 + u`.
pub fn regulation_system() -> LinearSystem {
    LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    )
    .expect("valid system")
}

/// Regulation from `(1, 0)` to the origin on `[0, t_end]` with unit-box
/// state constraints and `|u| <= 2.5`.
pub fn regulation_config(t_end: f64, m_p: usize, t_v: Option<f64>) -> ControllerConfig {
    ControllerConfig {
        t0: 0.0,
        t_end,
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
        control_application: ControlApplication::SubgridInterpolation(10),
    }
}
