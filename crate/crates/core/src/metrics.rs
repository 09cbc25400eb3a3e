//! Evaluation functionals over a closed-loop trajectory. Both average over
//! the samples after the initial one.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::plant::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub constraint_error: f64,
    pub control_error: f64,
}

fn sampled_rows(traj: &Trajectory) -> Result<std::ops::Range<usize>> {
    if traj.len() < 2 {
        return Err(Error::EmptyTrajectory);
    }
    Ok(1..traj.len())
}

/// Mean over samples of the summed per-channel distance outside `[z_min, z_max]`.
pub fn constraint_violation(
    traj: &Trajectory,
    z_min: &DVector<f64>,
    z_max: &DVector<f64>,
) -> Result<f64> {
    let rows = sampled_rows(traj)?;
    let n = rows.len() as f64;
    let mut total = 0.0;
    for i in rows {
        let z = traj.z(i);
        if z.len() != z_min.len() || z.len() != z_max.len() {
            return Err(Error::DimensionMismatch(format!(
                "trajectory has {} channels, bounds have {} / {}",
                z.len(),
                z_min.len(),
                z_max.len()
            )));
        }
        for c in 0..z.len() {
            total += (z[c] - z_max[c]).max(0.0) + (z_min[c] - z[c]).max(0.0);
        }
    }
    Ok(total / n)
}

/// Mean over samples of `|x - x_ref|^2`.
pub fn control_error(traj: &Trajectory, x_ref: &DVector<f64>) -> Result<f64> {
    let rows = sampled_rows(traj)?;
    let n = rows.len() as f64;
    let mut total = 0.0;
    for i in rows {
        let x = &traj.states[i];
        if x.len() != x_ref.len() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} entries, reference has {}",
                x.len(),
                x_ref.len()
            )));
        }
        total += (x - x_ref).norm_squared();
    }
    Ok(total / n)
}

pub fn evaluate(
    traj: &Trajectory,
    z_min: &DVector<f64>,
    z_max: &DVector<f64>,
    x_ref: &DVector<f64>,
) -> Result<Metrics> {
    Ok(Metrics {
        constraint_error: constraint_violation(traj, z_min, z_max)?,
        control_error: control_error(traj, x_ref)?,
    })
}
