use crate::error::{Error, Result};
use crate::kernelops::Hyperparams;
use crate::lodegp::LodeGpPrior;

use super::data::Dataset;
use super::posterior::PosteriorGp;

/// Closed intervals for the signal variance and the squared lengthscale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperBounds {
    pub signal_variance: (f64, f64),
    pub lengthscale_sq: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            signal_variance: (0.01, 100.0),
            lengthscale_sq: (0.01, 100.0),
        }
    }
}

impl HyperBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("signal_variance", self.signal_variance),
            ("lengthscale_sq", self.lengthscale_sq),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "{name} bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn log_box(&self) -> [(f64, f64); 2] {
        [
            (self.signal_variance.0.ln(), self.signal_variance.1.ln()),
            (self.lengthscale_sq.0.ln(), self.lengthscale_sq.1.ln()),
        ]
    }
}

/// Result of [`optimize_hyperparams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimum {
    pub hyperparams: Hyperparams,
    pub log_marginal_likelihood: f64,
    pub evaluations: usize,
}

const PROBES_PER_AXIS: usize = 4;
const STARTS: usize = 3;
const MAX_ITERS: usize = 200;
const SIMPLEX_TOL: f64 = 1e-6;

/// Maximizes the log marginal likelihood over `(log sigma_f^2, log l^2)`
/// inside `bounds`. A fixed probe grid seeds a few Nelder-Mead runs, so the
/// result depends only on the inputs.
pub fn optimize_hyperparams(
    prior: &LodeGpPrior,
    data: &Dataset,
    bounds: &HyperBounds,
) -> Result<Optimum> {
    bounds.validate()?;
    if data.n_obs() == 0 {
        return Err(Error::EmptyDataset);
    }
    let bx = bounds.log_box();
    let mut evals = 0usize;
    let mut objective = |p: [f64; 2]| -> f64 {
        evals += 1;
        let hp = Hyperparams {
            signal_variance: p[0].exp(),
            lengthscale_sq: p[1].exp(),
            jitter: Hyperparams::DEFAULT_JITTER,
        };
        match PosteriorGp::condition(prior, data.clone(), hp) {
            Ok(gp) => {
                let v = gp.log_marginal_likelihood();
                if v.is_finite() { -v } else { f64::INFINITY }
            }
            Err(_) => f64::INFINITY,
        }
    };

    let mut probes = Vec::with_capacity(PROBES_PER_AXIS * PROBES_PER_AXIS);
    for i in 0..PROBES_PER_AXIS {
        for j in 0..PROBES_PER_AXIS {
            let p = [grid_point(bx[0], i), grid_point(bx[1], j)];
            probes.push((objective(p), p));
        }
    }
    probes.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best = probes[0];
    for &(f0, p0) in probes.iter().take(STARTS) {
        let (f, p) = nelder_mead(&mut objective, p0, f0, &bx);
        if f < best.0 {
            best = (f, p);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Factorization { jitter: super::posterior::MAX_JITTER });
    }
    Ok(Optimum {
        hyperparams: Hyperparams {
            signal_variance: best.1[0].exp(),
            lengthscale_sq: best.1[1].exp(),
            jitter: Hyperparams::DEFAULT_JITTER,
        },
        log_marginal_likelihood: -best.0,
        evaluations: evals,
    })
}

fn grid_point((lo, hi): (f64, f64), i: usize) -> f64 {
    lo + (hi - lo) * (i as f64 + 0.5) / PROBES_PER_AXIS as f64
}

fn clamp(p: [f64; 2], bx: &[(f64, f64); 2]) -> [f64; 2] {
    [p[0].clamp(bx[0].0, bx[0].1), p[1].clamp(bx[1].0, bx[1].1)]
}

fn lerp(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Minimizes `f` from `start`; trial points are projected onto the box.
fn nelder_mead(
    f: &mut impl FnMut([f64; 2]) -> f64,
    start: [f64; 2],
    f_start: f64,
    bx: &[(f64, f64); 2],
) -> (f64, [f64; 2]) {
    let step = |k: usize| 0.1 * (bx[k].1 - bx[k].0).max(1e-3);
    let mut simplex: Vec<(f64, [f64; 2])> = vec![(f_start, start)];
    for k in 0..2 {
        let mut p = start;
        p[k] += step(k);
        if p[k] > bx[k].1 {
            p[k] = start[k] - step(k);
        }
        let p = clamp(p, bx);
        simplex.push((f(p), p));
    }
    for _ in 0..MAX_ITERS {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(_, p)| (p[0] - simplex[0].1[0]).abs().max((p[1] - simplex[0].1[1]).abs()))
            .fold(0.0, f64::max);
        if spread < SIMPLEX_TOL {
            break;
        }
        let centroid = lerp(simplex[0].1, simplex[1].1, 0.5);
        let worst = simplex[2];
        let reflected = clamp(lerp(worst.1, centroid, 2.0), bx);
        let fr = f(reflected);
        if fr < simplex[0].0 {
            let expanded = clamp(lerp(worst.1, centroid, 3.0), bx);
            let fe = f(expanded);
            simplex[2] = if fe < fr { (fe, expanded) } else { (fr, reflected) };
        } else if fr < simplex[1].0 {
            simplex[2] = (fr, reflected);
        } else {
            let contracted = if fr < worst.0 {
                clamp(lerp(worst.1, centroid, 1.5), bx)
            } else {
                lerp(worst.1, centroid, 0.5)
            };
            let fc = f(contracted);
            if fc < worst.0.min(fr) {
                simplex[2] = (fc, contracted);
            } else {
                let best = simplex[0].1;
                for v in simplex.iter_mut().skip(1) {
                    let p = lerp(best, v.1, 0.5);
                    *v = (f(p), p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
    simplex[0]
}
