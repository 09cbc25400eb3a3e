//! Differential operators applied to the squared-exponential kernel.
//!
//! With `u = t - t'` and `lam = 1 / l^2`, every operator image of
//! `exp(-lam u^2 / 2)` has the form `c(u, lam) * exp(-lam u^2 / 2)` for a
//! polynomial `c` with rational coefficients. That polynomial is tracked
//! exactly; the hyperparameters are only substituted at evaluation time.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::polyalg::{Poly, PolyMatrix, Rational};

/// Signal variance, squared lengthscale and diagonal jitter of the latent SE kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparams {
    pub signal_variance: f64,
    pub lengthscale_sq: f64,
    pub jitter: f64,
}

impl Hyperparams {
    pub const DEFAULT_JITTER: f64 = 1e-8;

    pub fn new(signal_variance: f64, lengthscale_sq: f64) -> Result<Self> {
        Self::with_jitter(signal_variance, lengthscale_sq, Self::DEFAULT_JITTER)
    }

    pub fn with_jitter(signal_variance: f64, lengthscale_sq: f64, jitter: f64) -> Result<Self> {
        let hp = Hyperparams {
            signal_variance,
            lengthscale_sq,
            jitter,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.signal_variance.is_finite()
            && self.signal_variance > 0.0
            && self.lengthscale_sq.is_finite()
            && self.lengthscale_sq > 0.0
            && self.jitter.is_finite()
            && self.jitter >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidHyperparams(format!("{self:?}")))
        }
    }

    /// `lam = 1 / l^2`
    pub fn inverse_lengthscale_sq(&self) -> f64 {
        1.0 / self.lengthscale_sq
    }
}

/// `c(u, lam) * exp(-lam u^2 / 2)`, keyed by `(power of u, power of lam)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GaussPolyTerm {
    coeffs: BTreeMap<(u32, u32), Rational>,
}

impl GaussPolyTerm {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The bare squared-exponential kernel (signal variance applied at evaluation).
    pub fn se_kernel() -> Self {
        let mut t = Self::zero();
        t.insert(0, 0, Rational::one());
        t
    }

    pub fn from_terms(terms: impl IntoIterator<Item = ((u32, u32), Rational)>) -> Self {
        let mut t = Self::zero();
        for ((pu, pl), c) in terms {
            t.insert(pu, pl, c);
        }
        t
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, u_pow: u32, lam_pow: u32) -> Rational {
        self.coeffs
            .get(&(u_pow, lam_pow))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &Rational)> {
        self.coeffs.iter()
    }

    fn insert(&mut self, u_pow: u32, lam_pow: u32, c: Rational) {
        if c.is_zero() {
            return;
        }
        let key = (u_pow, lam_pow);
        let sum = self.coeff(u_pow, lam_pow) + c;
        if sum.is_zero() {
            self.coeffs.remove(&key);
        } else {
            self.coeffs.insert(key, sum);
        }
    }

    pub fn add(&self, other: &GaussPolyTerm) -> GaussPolyTerm {
        let mut out = self.clone();
        for (&(pu, pl), c) in &other.coeffs {
            out.insert(pu, pl, c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> GaussPolyTerm {
        Self::from_terms(self.coeffs.iter().map(|(k, v)| (*k, v * c)))
    }

    /// Derivative in the first argument `t`: `p g -> (dp/du - lam u p) g`.
    pub fn diff_first(&self) -> GaussPolyTerm {
        let mut out = GaussPolyTerm::zero();
        for (&(pu, pl), c) in &self.coeffs {
            if pu > 0 {
                out.insert(pu - 1, pl, c * Rational::from_integer(pu.into()));
            }
            out.insert(pu + 1, pl + 1, -c.clone());
        }
        out
    }

    /// Derivative in the second argument `t'`: `p g -> (-dp/du + lam u p) g`.
    pub fn diff_second(&self) -> GaussPolyTerm {
        let mut out = GaussPolyTerm::zero();
        for (&(pu, pl), c) in &self.coeffs {
            if pu > 0 {
                out.insert(pu - 1, pl, -c * Rational::from_integer(pu.into()));
            }
            out.insert(pu + 1, pl + 1, c.clone());
        }
        out
    }

    /// Derivative with respect to `lam`: `p g -> (dp/dlam - u^2 p / 2) g`.
    pub fn diff_lambda(&self) -> GaussPolyTerm {
        let half = Rational::new(1.into(), 2.into());
        let mut out = GaussPolyTerm::zero();
        for (&(pu, pl), c) in &self.coeffs {
            if pl > 0 {
                out.insert(pu, pl - 1, c * Rational::from_integer(pl.into()));
            }
            out.insert(pu + 2, pl, -(c * &half));
        }
        out
    }

    /// `c(u, lam) * exp(-lam u^2 / 2)` in floating point, without the signal variance.
    pub fn eval(&self, u: f64, lam: f64) -> f64 {
        CompiledTerm::new(self).eval_poly(u, lam) * (-0.5 * lam * u * u).exp()
    }
}

/// `v_i(d/dt) v_j(d/dt') base`
pub fn apply_operator_pair(v_i: &Poly, v_j: &Poly, base: &GaussPolyTerm) -> GaussPolyTerm {
    let mut out = GaussPolyTerm::zero();
    // first-argument derivatives of base, iterated once per power
    let mut left = base.clone();
    for (a, ca) in v_i.coeffs().iter().enumerate() {
        if a > 0 {
            left = left.diff_first();
        }
        if ca.is_zero() {
            continue;
        }
        let mut both = left.clone();
        for (b, cb) in v_j.coeffs().iter().enumerate() {
            if b > 0 {
                both = both.diff_second();
            }
            if cb.is_zero() {
                continue;
            }
            out = out.add(&both.scale(&(ca * cb)));
        }
    }
    out
}

impl fmt::Display for GaussPolyTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut parts = Vec::new();
        for (&(pu, pl), c) in &self.coeffs {
            let mut s = c.to_string();
            if pu > 0 {
                s.push_str(&if pu == 1 { "*u".into() } else { format!("*u^{pu}") });
            }
            if pl > 0 {
                s.push_str(&if pl == 1 { "*λ".into() } else { format!("*λ^{pl}") });
            }
            parts.push(s);
        }
        write!(f, "({}) * exp(-λ u²/2)", parts.join(" + ").replace("+ -", "- "))
    }
}

/// Floating-point copy of a term's coefficient table.
#[derive(Clone, Debug)]
struct CompiledTerm {
    terms: Vec<(i32, i32, f64)>,
}

impl CompiledTerm {
    fn new(t: &GaussPolyTerm) -> Self {
        CompiledTerm {
            terms: t
                .coeffs
                .iter()
                .map(|(&(pu, pl), c)| (pu as i32, pl as i32, c.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    fn eval_poly(&self, u: f64, lam: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(pu, pl, c)| c * u.powi(pu) * lam.powi(pl))
            .sum()
    }
}

/// Matrix-valued covariance `V(d/dt) k_SE V(d/dt')^T` for the nullspace
/// generators `V`.
#[derive(Clone, Debug)]
pub struct OperatorKernel {
    n: usize,
    entries: Vec<GaussPolyTerm>,
    compiled: Vec<CompiledTerm>,
    compiled_dlam: Vec<CompiledTerm>,
}

impl OperatorKernel {
    /// Entry `(i, j)` sums the operator pair over all latent channels; every
    /// latent channel shares one signal variance and lengthscale.
    pub fn build(v_cols: &PolyMatrix) -> Result<Self> {
        if v_cols.cols() == 0 || v_cols.rows() == 0 {
            return Err(Error::EmptyNullspace);
        }
        let n = v_cols.rows();
        let base = GaussPolyTerm::se_kernel();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = GaussPolyTerm::zero();
                for c in 0..v_cols.cols() {
                    acc = acc.add(&apply_operator_pair(&v_cols[(i, c)], &v_cols[(j, c)], &base));
                }
                entries.push(acc);
            }
        }
        let compiled = entries.iter().map(CompiledTerm::new).collect();
        let compiled_dlam = entries
            .iter()
            .map(|e| CompiledTerm::new(&e.diff_lambda()))
            .collect();
        Ok(OperatorKernel {
            n,
            entries,
            compiled,
            compiled_dlam,
        })
    }

    /// Number of output channels.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &GaussPolyTerm {
        &self.entries[i * self.n + j]
    }

    pub fn eval(&self, t: f64, t_prime: f64, hp: &Hyperparams, i: usize, j: usize) -> f64 {
        let lam = hp.inverse_lengthscale_sq();
        let u = t - t_prime;
        hp.signal_variance
            * self.compiled[i * self.n + j].eval_poly(u, lam)
            * (-0.5 * lam * u * u).exp()
    }

    /// All `n x n` channel pairs at one time pair, row-major into `out`.
    pub fn eval_block(&self, t: f64, t_prime: f64, hp: &Hyperparams, out: &mut [f64]) {
        let lam = hp.inverse_lengthscale_sq();
        let u = t - t_prime;
        let g = hp.signal_variance * (-0.5 * lam * u * u).exp();
        for (o, c) in out.iter_mut().zip(&self.compiled) {
            *o = g * c.eval_poly(u, lam);
        }
    }

    /// Like [`Self::eval_block`] for the derivative with respect to `log l^2`.
    pub fn eval_block_dlog_lengthscale_sq(
        &self,
        t: f64,
        t_prime: f64,
        hp: &Hyperparams,
        out: &mut [f64],
    ) {
        let lam = hp.inverse_lengthscale_sq();
        let u = t - t_prime;
        let g = -lam * hp.signal_variance * (-0.5 * lam * u * u).exp();
        for (o, c) in out.iter_mut().zip(&self.compiled_dlam) {
            *o = g * c.eval_poly(u, lam);
        }
    }

    /// Derivative of [`Self::eval`] with respect to `log l^2`.
    pub fn eval_dlog_lengthscale_sq(
        &self,
        t: f64,
        t_prime: f64,
        hp: &Hyperparams,
        i: usize,
        j: usize,
    ) -> f64 {
        // d/dlog(l^2) = -lam d/dlam
        let lam = hp.inverse_lengthscale_sq();
        let u = t - t_prime;
        -lam * hp.signal_variance
            * self.compiled_dlam[i * self.n + j].eval_poly(u, lam)
            * (-0.5 * lam * u * u).exp()
    }
}

impl fmt::Display for OperatorKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            for j in 0..self.n {
                writeln!(f, "k[{i},{j}] = {}", self.entry(i, j))?;
            }
        }
        Ok(())
    }
}
