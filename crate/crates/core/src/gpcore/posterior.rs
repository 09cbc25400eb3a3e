use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernelops::Hyperparams;
use crate::lodegp::LodeGpPrior;

use super::data::Dataset;

/// Largest jitter tried before a factorization failure is reported.
pub const MAX_JITTER: f64 = 1e-4;

/// Flattened `(time, channel)` layout of the observed entries: points in
/// time order, channels ascending inside each point, masked channels skipped.
#[derive(Clone, Debug)]
struct Layout {
    times: Vec<f64>,
    /// For each point, the observed channels and their row offset.
    blocks: Vec<(usize, Vec<usize>)>,
    values: DVector<f64>,
    noise: Vec<f64>,
}

impl Layout {
    fn new(data: &Dataset) -> Self {
        let mut times = Vec::new();
        let mut blocks = Vec::new();
        let mut values = Vec::new();
        let mut noise = Vec::new();
        for p in data.points() {
            let chans: Vec<usize> = p.observed_channels().map(|(c, _)| c).collect();
            if chans.is_empty() {
                continue;
            }
            times.push(p.t);
            blocks.push((values.len(), chans.clone()));
            for c in chans {
                values.push(p.values[c].expect("observed"));
                noise.push(p.noise_var[c]);
            }
        }
        Layout {
            times,
            blocks,
            values: DVector::from_vec(values),
            noise,
        }
    }

    fn n_obs(&self) -> usize {
        self.values.len()
    }
}

/// Symmetric kernel matrix over the observed entries, with a caller-chosen
/// block evaluator (the kernel itself or one of its hyperparameter derivatives).
fn kernel_over_layout(
    layout: &Layout,
    n_z: usize,
    mut block: impl FnMut(f64, f64, &mut [f64]),
) -> DMatrix<f64> {
    let n = layout.n_obs();
    let mut k = DMatrix::zeros(n, n);
    let mut buf = vec![0.0; n_z * n_z];
    for (p, (op, cp)) in layout.blocks.iter().enumerate() {
        for (q, (oq, cq)) in layout.blocks.iter().enumerate().skip(p) {
            block(layout.times[p], layout.times[q], &mut buf);
            for (a, &ci) in cp.iter().enumerate() {
                for (b, &cj) in cq.iter().enumerate() {
                    let v = buf[ci * n_z + cj];
                    k[(op + a, oq + b)] = v;
                    k[(oq + b, op + a)] = v;
                }
            }
        }
    }
    k
}

/// Gram matrix `K + diag(noise)` over all unmasked observations, zero noise
/// entries replaced by `hp.jitter`, and the residual `z - mu` in the same order.
pub fn assemble_gram(
    prior: &LodeGpPrior,
    data: &Dataset,
    hp: &Hyperparams,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if data.n_obs() == 0 {
        return Err(Error::EmptyDataset);
    }
    check_dims(prior, data)?;
    hp.validate()?;
    let layout = Layout::new(data);
    Ok(gram_from_layout(prior, &layout, hp))
}

fn gram_from_layout(
    prior: &LodeGpPrior,
    layout: &Layout,
    hp: &Hyperparams,
) -> (DMatrix<f64>, DVector<f64>) {
    let n_z = prior.n_z();
    let mut k = kernel_over_layout(layout, n_z, |t, s, out| prior.kernel.eval_block(t, s, hp, out));
    for (i, &nv) in layout.noise.iter().enumerate() {
        k[(i, i)] += if nv > 0.0 { nv } else { hp.jitter };
    }
    (k, residual(prior, layout))
}

fn residual(prior: &LodeGpPrior, layout: &Layout) -> DVector<f64> {
    let mean = prior.mean();
    let mut r = layout.values.clone();
    for (off, chans) in &layout.blocks {
        for (a, &c) in chans.iter().enumerate() {
            r[off + a] -= mean[c];
        }
    }
    r
}

fn check_dims(prior: &LodeGpPrior, data: &Dataset) -> Result<()> {
    if data.n_z() != prior.n_z() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} channels, prior has {}",
            data.n_z(),
            prior.n_z()
        )));
    }
    Ok(())
}

/// Cholesky factorization, raising the diagonal by decades of jitter on failure.
fn factorize(gram: DMatrix<f64>, base_jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(gram.clone()) {
        return Ok((c, base_jitter));
    }
    let mut jitter = base_jitter.max(1e-8);
    loop {
        jitter *= 10.0;
        if jitter > MAX_JITTER * (1.0 + 1e-12) {
            return Err(Error::Factorization { jitter: MAX_JITTER });
        }
        let extra = jitter - base_jitter;
        let mut g = gram.clone();
        for i in 0..g.nrows() {
            g[(i, i)] += extra;
        }
        if let Some(c) = Cholesky::new(g) {
            return Ok((c, jitter));
        }
    }
}

/// A prior conditioned on a dataset. Immutable; conditioning on new data
/// builds a new value.
#[derive(Clone, Debug)]
pub struct PosteriorGp<'a> {
    prior: &'a LodeGpPrior,
    data: Dataset,
    hp: Hyperparams,
    layout: Layout,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter_used: f64,
}

impl<'a> PosteriorGp<'a> {
    /// An empty dataset gives back the prior.
    pub fn condition(prior: &'a LodeGpPrior, data: Dataset, hp: Hyperparams) -> Result<Self> {
        check_dims(prior, &data)?;
        hp.validate()?;
        let layout = Layout::new(&data);
        let (chol, alpha, jitter_used) = if layout.n_obs() == 0 {
            (None, DVector::zeros(0), hp.jitter)
        } else {
            let (gram, resid) = gram_from_layout(prior, &layout, &hp);
            let (chol, jitter) = factorize(gram, hp.jitter)?;
            let alpha = chol.solve(&resid);
            (Some(chol), alpha, jitter)
        };
        Ok(PosteriorGp {
            prior,
            data,
            hp,
            layout,
            chol,
            alpha,
            jitter_used,
        })
    }

    pub fn prior(&self) -> &LodeGpPrior {
        self.prior
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    /// Weights `(K + Sigma)^-1 (z - mu)`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Jitter actually in effect; larger than `hp.jitter` after escalation.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Lower-triangular factor of the regularized Gram matrix.
    pub fn cholesky_factor(&self) -> Option<DMatrix<f64>> {
        self.chol.as_ref().map(|c| c.l())
    }

    /// Residual `z - mu` in assembly order.
    pub fn residual(&self) -> DVector<f64> {
        residual(self.prior, &self.layout)
    }

    /// Cross covariance between observations (rows) and query entries
    /// (columns, query-major with channels inside).
    fn cross(&self, t_query: &[f64]) -> DMatrix<f64> {
        let n_z = self.prior.n_z();
        let mut ks = DMatrix::zeros(self.layout.n_obs(), t_query.len() * n_z);
        let mut buf = vec![0.0; n_z * n_z];
        for (p, (off, chans)) in self.layout.blocks.iter().enumerate() {
            for (q, &tq) in t_query.iter().enumerate() {
                self.prior
                    .kernel
                    .eval_block(self.layout.times[p], tq, &self.hp, &mut buf);
                for (a, &ci) in chans.iter().enumerate() {
                    for cj in 0..n_z {
                        ks[(off + a, q * n_z + cj)] = buf[ci * n_z + cj];
                    }
                }
            }
        }
        ks
    }

    fn prior_cov(&self, t_query: &[f64]) -> DMatrix<f64> {
        let n_z = self.prior.n_z();
        let m = t_query.len();
        let mut k = DMatrix::zeros(m * n_z, m * n_z);
        let mut buf = vec![0.0; n_z * n_z];
        for (p, &tp) in t_query.iter().enumerate() {
            for (q, &tq) in t_query.iter().enumerate().skip(p) {
                self.prior.kernel.eval_block(tp, tq, &self.hp, &mut buf);
                for i in 0..n_z {
                    for j in 0..n_z {
                        k[(p * n_z + i, q * n_z + j)] = buf[i * n_z + j];
                        k[(q * n_z + j, p * n_z + i)] = buf[i * n_z + j];
                    }
                }
            }
        }
        k
    }

    /// Posterior mean, one row per query time.
    pub fn posterior_mean(&self, t_query: &[f64]) -> DMatrix<f64> {
        let n_z = self.prior.n_z();
        let mean = self.prior.mean();
        let mut out = DMatrix::from_fn(t_query.len(), n_z, |_, c| mean[c]);
        if self.layout.n_obs() == 0 {
            return out;
        }
        let shift = self.cross(t_query).tr_mul(&self.alpha);
        for q in 0..t_query.len() {
            for c in 0..n_z {
                out[(q, c)] += shift[q * n_z + c];
            }
        }
        out
    }

    /// Joint posterior covariance over `(query, channel)` entries, query-major.
    pub fn posterior_cov(&self, t_query: &[f64]) -> DMatrix<f64> {
        let mut k = self.prior_cov(t_query);
        if let Some(chol) = &self.chol {
            let mut w = self.cross(t_query);
            chol.l_dirty().solve_lower_triangular_mut(&mut w);
            k -= w.tr_mul(&w);
        }
        (&k + k.transpose()) * 0.5
    }

    /// Diagonal of [`Self::posterior_cov`], one row per query time.
    pub fn posterior_variance(&self, t_query: &[f64]) -> DMatrix<f64> {
        let n_z = self.prior.n_z();
        let mut var = DMatrix::zeros(t_query.len(), n_z);
        let mut buf = vec![0.0; n_z * n_z];
        for (q, &t) in t_query.iter().enumerate() {
            self.prior.kernel.eval_block(t, t, &self.hp, &mut buf);
            for c in 0..n_z {
                var[(q, c)] = buf[c * n_z + c];
            }
        }
        if let Some(chol) = &self.chol {
            let mut w = self.cross(t_query);
            chol.l_dirty().solve_lower_triangular_mut(&mut w);
            for q in 0..t_query.len() {
                for c in 0..n_z {
                    let col = w.column(q * n_z + c);
                    var[(q, c)] = (var[(q, c)] - col.norm_squared()).max(0.0);
                }
            }
        }
        var
    }

    /// `-1/2 r^T (K + Sigma)^-1 r - 1/2 log det(K + Sigma)` on the centered residual.
    pub fn log_marginal_likelihood(&self) -> f64 {
        match &self.chol {
            None => 0.0,
            Some(chol) => {
                let r = self.residual();
                let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
                -0.5 * r.dot(&self.alpha) - log_det_half
            }
        }
    }

    /// Gradient of [`Self::log_marginal_likelihood`] with respect to
    /// `(log sigma_f^2, log l^2)`.
    pub fn log_marginal_likelihood_gradient(&self) -> [f64; 2] {
        let Some(chol) = &self.chol else {
            return [0.0, 0.0];
        };
        let n_z = self.prior.n_z();
        let hp = self.hp;
        let kernel = &self.prior.kernel;
        // dK/dlog(sigma_f^2) is the noise-free kernel matrix itself
        let dk_sf = kernel_over_layout(&self.layout, n_z, |t, s, out| kernel.eval_block(t, s, &hp, out));
        let dk_l = kernel_over_layout(&self.layout, n_z, |t, s, out| {
            kernel.eval_block_dlog_lengthscale_sq(t, s, &hp, out)
        });
        let inv = chol.inverse();
        let a = &self.alpha;
        let grad = |dk: &DMatrix<f64>| {
            let quad = a.dot(&(dk * a));
            let trace: f64 = inv.component_mul(dk).sum();
            0.5 * quad - 0.5 * trace
        };
        [grad(&dk_sf), grad(&dk_l)]
    }
}

pub fn log_marginal_likelihood(prior: &LodeGpPrior, data: &Dataset, hp: &Hyperparams) -> Result<f64> {
    if data.n_obs() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(PosteriorGp::condition(prior, data.clone(), *hp)?.log_marginal_likelihood())
}

/// `count` joint draws from `N(mu*, k* + jitter I)` over the query times, each
/// shaped like [`PosteriorGp::posterior_mean`]. Reproducible per seed.
pub fn sample_posterior(
    gp: &PosteriorGp<'_>,
    t_query: &[f64],
    count: usize,
    seed: u64,
) -> Vec<DMatrix<f64>> {
    if count == 0 || t_query.is_empty() {
        return vec![DMatrix::zeros(t_query.len(), gp.prior().n_z()); count];
    }
    let n_z = gp.prior().n_z();
    let mean = gp.posterior_mean(t_query);
    let mut cov = gp.posterior_cov(t_query);
    for i in 0..cov.nrows() {
        cov[(i, i)] += gp.hyperparams().jitter;
    }
    // symmetric square root; tolerates the slightly indefinite matrices that
    // hard constraints leave behind
    let dim = cov.nrows();
    let eig = cov.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let xi = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let draw = &root * xi;
            DMatrix::from_fn(t_query.len(), n_z, |q, c| mean[(q, c)] + draw[q * n_z + c])
        })
        .collect()
}
