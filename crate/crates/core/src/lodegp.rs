//! From a state-space pair `(A, B)` to the ODE-constrained GP prior.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernelops::OperatorKernel;
use crate::polyalg::{
    decimal_rational, right_nullspace_columns, smith_normal_form, Poly, PolyMatrix,
    SmithDecomposition,
};

/// Residual bound for the steady-state input solve.
pub const REFERENCE_FEASIBILITY_TOL: f64 = 1e-8;

/// `x' = A x + B u` with named channels `(x_1..x_nx, u_1..u_nu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    channel_names: Vec<String>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let names = (1..=a.nrows())
            .map(|i| format!("x{i}"))
            .chain((1..=b.ncols()).map(|i| format!("u{i}")))
            .collect();
        Self::with_names(a, b, names)
    }

    pub fn with_names(a: DMatrix<f64>, b: DMatrix<f64>, channel_names: Vec<String>) -> Result<Self> {
        let n_x = a.nrows();
        if n_x == 0 || a.ncols() != n_x {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n_x || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {n_x}xn_u with n_u >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if channel_names.len() != n_x + b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                n_x + b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("system matrices must be finite".into()));
        }
        Ok(LinearSystem { a, b, channel_names })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_z(&self) -> usize {
        self.n_x() + self.n_u()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    /// `A x + B u - x'` evaluated on a stacked `z = (x, u)` and a state derivative.
    pub fn residual(&self, z: &[f64], x_dot: &[f64]) -> DVector<f64> {
        let x = DVector::from_column_slice(&z[..self.n_x()]);
        let u = DVector::from_column_slice(&z[self.n_x()..]);
        &self.a * x + &self.b * u - DVector::from_column_slice(x_dot)
    }
}

/// `H = [A - d I | B]`, so that `H z = 0` is the system written on `z = (x, u)`.
pub fn build_h(sys: &LinearSystem) -> PolyMatrix {
    let (n_x, n_u) = (sys.n_x(), sys.n_u());
    let mut h = PolyMatrix::zeros(n_x, n_x + n_u);
    let c = |v: f64| Poly::constant(decimal_rational(v).expect("finite entries are validated"));
    for i in 0..n_x {
        for j in 0..n_x {
            h[(i, j)] = c(sys.a[(i, j)]);
        }
        h[(i, i)] = &h[(i, i)] - &Poly::d();
        for j in 0..n_u {
            h[(i, n_x + j)] = c(sys.b[(i, j)]);
        }
    }
    h
}

/// True when every invariant factor of `H` is a nonzero constant.
pub fn controllability_check(sys: &LinearSystem) -> bool {
    let h = build_h(sys);
    smith_normal_form(&h).is_ok_and(|dec| {
        let f = dec.invariant_factors();
        f.len() == sys.n_x() && f.iter().all(Poly::is_constant)
    })
}

/// Everything needed to evaluate the prior: the algebra that produced the
/// kernel, the kernel itself, and the constant reference mean.
#[derive(Clone, Debug)]
pub struct LodeGpPrior {
    pub system: LinearSystem,
    pub h: PolyMatrix,
    pub decomposition: SmithDecomposition,
    pub v_cols: PolyMatrix,
    pub kernel: OperatorKernel,
    prior_mean: DVector<f64>,
}

impl LodeGpPrior {
    /// Constant mean `(x_ref, u_ref)`.
    pub fn mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn n_z(&self) -> usize {
        self.system.n_z()
    }
}

/// Minimum-norm `u` with `B u = -A x_ref`, rejected when the residual exceeds
/// [`REFERENCE_FEASIBILITY_TOL`].
pub fn steady_state_input(sys: &LinearSystem, x_ref: &DVector<f64>) -> Result<DVector<f64>> {
    if x_ref.len() != sys.n_x() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} entries, system has {} states",
            x_ref.len(),
            sys.n_x()
        )));
    }
    let rhs = -(&sys.a * x_ref);
    let svd = sys.b.clone().svd(true, true);
    let u = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let resid = &sys.b * &u - &rhs;
    let bad: Vec<usize> = resid
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() > REFERENCE_FEASIBILITY_TOL)
        .map(|(i, _)| i)
        .collect();
    if bad.is_empty() {
        Ok(u)
    } else {
        Err(Error::InfeasibleReference {
            rows: bad,
            residual: resid.amax(),
        })
    }
}

/// Rejects decompositions with a non-constant or zero invariant factor.
pub fn require_unit_factors(sys: &LinearSystem, dec: &SmithDecomposition) -> Result<()> {
    let factors = dec.invariant_factors();
    if let Some(bad) = factors.iter().find(|f| !f.is_constant()) {
        return Err(Error::NotControllable {
            factor: bad.to_string(),
        });
    }
    if factors.len() < sys.n_x() {
        // a zero invariant factor leaves a free autonomous component
        return Err(Error::NotControllable { factor: "0".into() });
    }
    Ok(())
}

pub fn build_prior(sys: &LinearSystem, x_ref: &DVector<f64>) -> Result<LodeGpPrior> {
    let u_ref = steady_state_input(sys, x_ref)?;
    let h = build_h(sys);
    let decomposition = smith_normal_form(&h)?;
    require_unit_factors(sys, &decomposition)?;
    let v_cols = right_nullspace_columns(&h, &decomposition);
    let kernel = OperatorKernel::build(&v_cols)?;
    let prior_mean = DVector::from_iterator(
        sys.n_z(),
        x_ref.iter().chain(u_ref.iter()).copied(),
    );
    Ok(LodeGpPrior {
        system: sys.clone(),
        h,
        decomposition,
        v_cols,
        kernel,
        prior_mean,
    })
}
