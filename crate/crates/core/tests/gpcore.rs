mod common;

use common::*;
use lodempc::gpcore::{
    assemble_gram, log_marginal_likelihood, optimize_hyperparams, sample_posterior, DataPoint,
    Dataset, HyperBounds, PosteriorGp, Role,
};
use lodempc::{build_prior, Hyperparams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hp(sf2: f64, l2: f64) -> Hyperparams {
    Hyperparams::new(sf2, l2).unwrap()
}

fn masked(t: f64, values: Vec<Option<f64>>, noise: Vec<f64>) -> DataPoint {
    DataPoint {
        t,
        values,
        noise_var: noise,
        role: Role::Constraint,
    }
}

fn hard_state(t: f64, x: f64) -> DataPoint {
    masked(t, vec![Some(x), None], vec![0.0, 0.0])
}

/// Scale of the integrator's state kernel at zero lag relative to sigma_f^2.
fn integrator_scale() -> f64 {
    let p = integrator_prior();
    p.kernel.eval(0.0, 0.0, &hp(1.0, 1.0), 0, 0)
}

#[test]
fn state_channel_of_integrator_is_squared_exponential() {
    let p = integrator_prior();
    let c = integrator_scale();
    assert!(c > 0.0);
    let h = hp(0.7, 1.3);
    for u in [0.0, 0.3, -1.1, 2.5] {
        let k = p.kernel.eval(u, 0.0, &h, 0, 0);
        assert!((k - c * se(0.7, 1.3, u)).abs() < 1e-14);
    }
}

#[test]
fn single_hard_point_gram() {
    let p = integrator_prior();
    let d = Dataset::new(2, [hard_state(0.0, 1.0)]).unwrap();
    let h = hp(2.0, 1.0);
    let (k, r) = assemble_gram(&p, &d, &h).unwrap();
    assert_eq!(k.shape(), (1, 1));
    assert!((k[(0, 0)] - (2.0 * integrator_scale() + 1e-8)).abs() < 1e-15);
    assert_eq!(r.as_slice(), &[1.0]);
}

#[test]
fn near_duplicate_times_are_rescued_by_jitter() {
    let p = integrator_prior();
    let d = Dataset::new(2, [hard_state(1.0, 0.5), hard_state(1.0 + 1e-7, 0.5)]).unwrap();
    assert_eq!(d.len(), 2);
    let gp = PosteriorGp::condition(&p, d, hp(1.0, 1.0)).unwrap();
    let m = gp.posterior_mean(&[1.0]);
    assert!((m[(0, 0)] - 0.5).abs() < 1e-6);
}

#[test]
fn gram_diagonal_carries_per_channel_noise() {
    let p = unstable_prior();
    let noise = [1.0, 1.0, 6.25];
    let d = Dataset::new(3, [DataPoint::soft(0.5, &[0.0; 3], &noise, Role::Constraint)]).unwrap();
    let h = hp(1.0, 1.0);
    let (k, _) = assemble_gram(&p, &d, &h).unwrap();
    for c in 0..3 {
        let prior_var = p.kernel.eval(0.5, 0.5, &h, c, c);
        assert!((k[(c, c)] - prior_var - noise[c]).abs() < 1e-12);
    }
}

#[test]
fn empty_dataset_is_rejected_for_gram_and_mll() {
    let p = integrator_prior();
    let d = Dataset::empty(2);
    assert!(assemble_gram(&p, &d, &hp(1.0, 1.0)).is_err());
    assert!(log_marginal_likelihood(&p, &d, &hp(1.0, 1.0)).is_err());
}

#[test]
fn posterior_interpolates_hard_point() {
    let p = unstable_prior();
    let z0 = [1.0, 0.0, 0.0];
    let d = Dataset::new(3, [DataPoint::hard(0.0, &z0, Role::Init)]).unwrap();
    let h = hp(1.0, 1.0);
    let gp = PosteriorGp::condition(&p, d, h).unwrap();
    let m = gp.posterior_mean(&[0.0]);
    for c in 0..3 {
        assert!((m[(0, c)] - z0[c]).abs() < 1e-6);
    }
    let var = gp.posterior_variance(&[0.0]);
    for c in 0..3 {
        assert!(var[(0, c)] <= 1e-6 * h.signal_variance);
    }
}

#[test]
fn data_at_prior_mean_gives_zero_weights() {
    let sys = unstable_system();
    let x_ref = DVector::from_vec(vec![1.0, 0.0]);
    let p = build_prior(&sys, &x_ref).unwrap();
    let z: Vec<f64> = p.mean().iter().copied().collect();
    let d = Dataset::new(
        3,
        [
            DataPoint::hard(0.0, &z, Role::Init),
            DataPoint::soft(1.0, &z, &[1.0, 1.0, 1.0], Role::Constraint),
        ],
    )
    .unwrap();
    let gp = PosteriorGp::condition(&p, d, hp(1.0, 1.0)).unwrap();
    assert!(gp.alpha().iter().all(|&a| a == 0.0));
    let m = gp.posterior_mean(&[0.3, 5.0]);
    for q in 0..2 {
        for c in 0..3 {
            assert_eq!(m[(q, c)], z[c]);
        }
    }
}

#[test]
fn influence_decays_ten_lengthscales_away() {
    let p = integrator_prior();
    let d = Dataset::new(2, [hard_state(0.0, 3.0)]).unwrap();
    for l2 in [0.25, 1.0, 4.0] {
        let gp = PosteriorGp::condition(&p, d.clone(), hp(1.0, l2)).unwrap();
        let far = 10.0 * f64::sqrt(l2);
        let m = gp.posterior_mean(&[far]);
        assert!(m[(0, 0)].abs() <= 1e-8 * 3.0, "l2={l2}: {}", m[(0, 0)]);
    }
}

#[test]
fn stability_beyond_eight_lengthscales() {
    let p = unstable_prior();
    let z0 = [1.0, -0.5, 2.0];
    let d = Dataset::new(3, [DataPoint::hard(2.0, &z0, Role::Init)]).unwrap();
    for l2 in [0.1, 1.0, 3.0] {
        let gp = PosteriorGp::condition(&p, d.clone(), hp(1.0, l2)).unwrap();
        let l = f64::sqrt(l2);
        let ts: Vec<f64> = (0..40).map(|k| 8.0 * l * (1.0 + 0.25 * k as f64)).flat_map(|s| [2.0 + s, 2.0 - s]).collect();
        let m = gp.posterior_mean(&ts);
        assert!(m.amax() <= 1e-6 * 2.0, "l2={l2}: {}", m.amax());
    }
}

#[test]
fn no_data_gives_prior_covariance() {
    let p = unstable_prior();
    let h = hp(1.5, 0.7);
    let gp = PosteriorGp::condition(&p, Dataset::empty(3), h).unwrap();
    let ts = [0.0, 0.4, 1.0];
    let cov = gp.posterior_cov(&ts);
    for (a, &ta) in ts.iter().enumerate() {
        for (b, &tb) in ts.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let expect = p.kernel.eval(ta, tb, &h, i, j);
                    assert!((cov[(a * 3 + i, b * 3 + j)] - expect).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn variance_far_from_data_returns_to_prior() {
    let p = unstable_prior();
    let h = hp(1.0, 0.5);
    let d = Dataset::new(3, [DataPoint::hard(0.0, &[1.0, 0.0, 0.0], Role::Init)]).unwrap();
    let gp = PosteriorGp::condition(&p, d, h).unwrap();
    let var = gp.posterior_variance(&[30.0]);
    for c in 0..3 {
        let prior = p.kernel.eval(30.0, 30.0, &h, c, c);
        assert!((var[(0, c)] - prior).abs() <= 1e-10 * prior);
    }
}

#[test]
fn factorization_reproduces_regularized_gram() {
    let p = unstable_prior();
    let pts: Vec<DataPoint> = (0..12)
        .map(|k| {
            let t = 0.1 * k as f64;
            DataPoint::soft(t, &[t.sin(), t.cos(), 0.3], &[0.0, 0.1, 1.0], Role::Constraint)
        })
        .collect();
    let d = Dataset::new(3, pts).unwrap();
    let h = hp(0.5, 0.8);
    let (gram, _) = assemble_gram(&p, &d, &h).unwrap();
    let gp = PosteriorGp::condition(&p, d, h).unwrap();
    let l = gp.cholesky_factor().unwrap();
    let mut target = gram;
    for i in 0..target.nrows() {
        target[(i, i)] += gp.jitter_used() - h.jitter;
    }
    assert!(rel_diff(&(&l * l.transpose()), &target) <= 1e-10);
}

#[test]
fn weights_match_independent_dense_solve() {
    let p = unstable_prior();
    let pts = [
        DataPoint::hard(0.0, &[1.0, 0.0, 0.0], Role::Init),
        DataPoint::soft(0.5, &[0.0, 0.0, 0.0], &[1.0, 1.0, 6.25], Role::Constraint),
        masked(1.0, vec![None, Some(0.2), Some(-0.4)], vec![0.0, 0.5, 0.5]),
        DataPoint::soft(2.0, &[0.1, -0.1, 0.0], &[0.2, 0.2, 0.2], Role::Constraint),
    ];
    let d = Dataset::new(3, pts).unwrap();
    let h = hp(0.8, 0.6);
    let gp = PosteriorGp::condition(&p, d.clone(), h).unwrap();
    let (gram, r) = assemble_gram(&p, &d, &h).unwrap();
    let c = gram.lu().solve(&r).unwrap();
    let rel = (gp.alpha() - &c).norm() / c.norm();
    assert!(rel <= 1e-8, "{rel}");
}

#[test]
fn mll_closed_form_cases() {
    let p = integrator_prior();
    let s = integrator_scale();
    // K + sigma^2 = 1 exactly: sigma_f^2 * s + noise
    let unit = Hyperparams::with_jitter(0.5 / s, 1.0, 0.0).unwrap();
    let zero = Dataset::new(2, [masked(0.0, vec![Some(0.0), None], vec![0.5, 0.0])]).unwrap();
    assert!(log_marginal_likelihood(&p, &zero, &unit).unwrap().abs() < 1e-15);
    let one = Dataset::new(2, [masked(0.0, vec![Some(1.0), None], vec![0.5, 0.0])]).unwrap();
    assert!((log_marginal_likelihood(&p, &one, &unit).unwrap() + 0.5).abs() < 1e-15);
}

#[test]
fn mll_matches_dense_oracle() {
    let p = unstable_prior();
    let d = Dataset::new(
        3,
        [
            DataPoint::hard(0.0, &[1.0, 0.0, 0.0], Role::Init),
            DataPoint::soft(0.7, &[0.0, 0.0, 0.0], &[1.0, 1.0, 2.5], Role::Constraint),
            DataPoint::soft(1.4, &[0.0, 0.0, 0.0], &[1.0, 1.0, 2.5], Role::Constraint),
        ],
    )
    .unwrap();
    let h = hp(0.9, 0.4);
    let (gram, r) = assemble_gram(&p, &d, &h).unwrap();
    let lu = gram.clone().lu();
    let expect = -0.5 * r.dot(&lu.solve(&r).unwrap()) - 0.5 * lu.determinant().ln();
    let got = log_marginal_likelihood(&p, &d, &h).unwrap();
    assert!((got - expect).abs() <= 1e-9 * expect.abs().max(1.0), "{got} vs {expect}");
}

#[test]
fn larger_signal_variance_lowers_mll_at_zero_residual() {
    let p = unstable_prior();
    let d = Dataset::new(
        3,
        [
            DataPoint::soft(0.0, &[0.0; 3], &[0.1; 3], Role::Constraint),
            DataPoint::soft(0.5, &[0.0; 3], &[0.1; 3], Role::Constraint),
        ],
    )
    .unwrap();
    let a = log_marginal_likelihood(&p, &d, &hp(1.0, 1.0)).unwrap();
    let b = log_marginal_likelihood(&p, &d, &hp(2.0, 1.0)).unwrap();
    assert!(b < a);
}

#[test]
fn mll_gradient_matches_central_differences() {
    let p = unstable_prior();
    let d = Dataset::new(
        3,
        [
            DataPoint::hard(0.0, &[1.0, 0.0, 0.0], Role::Init),
            DataPoint::soft(0.5, &[0.0, 0.0, 0.0], &[1.0, 1.0, 2.5], Role::Constraint),
            DataPoint::soft(1.0, &[0.0, 0.0, 0.0], &[1.0, 1.0, 2.5], Role::Constraint),
            DataPoint::soft(1.5, &[0.0, 0.0, 0.0], &[1.0, 1.0, 2.5], Role::Constraint),
        ],
    )
    .unwrap();
    let mll = |ls: f64, ll: f64| {
        let h = Hyperparams::new(ls.exp(), ll.exp()).unwrap();
        log_marginal_likelihood(&p, &d, &h).unwrap()
    };
    for (ls, ll) in [(0.0, 0.0), (-1.0, -0.5), (0.7, -1.5)] {
        let h = Hyperparams::new(f64::exp(ls), f64::exp(ll)).unwrap();
        let g = PosteriorGp::condition(&p, d.clone(), h)
            .unwrap()
            .log_marginal_likelihood_gradient();
        let e = 1e-5;
        let fd = [
            (mll(ls + e, ll) - mll(ls - e, ll)) / (2.0 * e),
            (mll(ls, ll + e) - mll(ls, ll - e)) / (2.0 * e),
        ];
        for k in 0..2 {
            let rel = (g[k] - fd[k]).abs() / fd[k].abs().max(1e-3);
            assert!(rel <= 1e-5, "({ls},{ll}) k={k}: {} vs {}", g[k], fd[k]);
        }
    }
}

/// Draw from the integrator prior's state channel on a grid by an
/// independent Cholesky of the hand-written SE Gram matrix.
fn se_draw(ts: &[f64], sf2: f64, l2: f64, seed: u64) -> Vec<f64> {
    let n = ts.len();
    let k = DMatrix::from_fn(n, n, |i, j| se(sf2, l2, ts[i] - ts[j]) + if i == j { 1e-6 } else { 0.0 });
    let l = k.cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    (l * xi).iter().copied().collect()
}

#[test]
fn optimizer_recovers_lengthscale_of_prior_draw() {
    let p = integrator_prior();
    let s = integrator_scale();
    let ts: Vec<f64> = (0..60).map(|k| 0.25 * k as f64).collect();
    let xs = se_draw(&ts, s, 1.0, 3);
    let pts = ts
        .iter()
        .zip(&xs)
        .map(|(&t, &x)| masked(t, vec![Some(x), None], vec![1e-6, 0.0]));
    let d = Dataset::new(2, pts).unwrap();
    let opt = optimize_hyperparams(&p, &d, &HyperBounds::default()).unwrap();
    let l2 = opt.hyperparams.lengthscale_sq;
    assert!((0.5..=2.0).contains(&l2), "{l2}");
}

#[test]
fn optimizer_handles_single_point() {
    let p = integrator_prior();
    let d = Dataset::new(2, [hard_state(0.0, 1.0)]).unwrap();
    let b = HyperBounds::default();
    let opt = optimize_hyperparams(&p, &d, &b).unwrap();
    let h = opt.hyperparams;
    assert!(h.signal_variance >= b.signal_variance.0 && h.signal_variance <= b.signal_variance.1);
    assert!(h.lengthscale_sq >= b.lengthscale_sq.0 && h.lengthscale_sq <= b.lengthscale_sq.1);
    assert!(opt.log_marginal_likelihood.is_finite());
}

#[test]
fn optimizer_beats_random_probes() {
    let p = unstable_prior();
    let noise = [1.0, 1.0, 2.5];
    let pts = std::iter::once(DataPoint::hard(0.0, &[1.0, 0.0, 0.0], Role::Init)).chain(
        (1..=30).map(|k| DataPoint::soft(0.1 * k as f64, &[0.0; 3], &noise, Role::Constraint)),
    );
    let d = Dataset::new(3, pts).unwrap();
    let b = HyperBounds::default();
    let opt = optimize_hyperparams(&p, &d, &b).unwrap();
    let best = opt.log_marginal_likelihood;
    let again = log_marginal_likelihood(&p, &d, &opt.hyperparams).unwrap();
    assert_eq!(best, again);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let sf2 = rng.random_range(b.signal_variance.0.ln()..b.signal_variance.1.ln()).exp();
        let l2 = rng.random_range(b.lengthscale_sq.0.ln()..b.lengthscale_sq.1.ln()).exp();
        if let Ok(v) = log_marginal_likelihood(&p, &d, &hp(sf2, l2)) {
            assert!(best >= v, "probe ({sf2}, {l2}) gives {v} > {best}");
        }
    }
    // deterministic
    assert_eq!(optimize_hyperparams(&p, &d, &b).unwrap(), opt);
}

#[test]
fn sample_mean_matches_posterior_mean() {
    let p = unstable_prior();
    let d = Dataset::new(
        3,
        [
            DataPoint::hard(0.0, &[1.0, 0.0, 0.0], Role::Init),
            DataPoint::soft(1.0, &[0.0; 3], &[1.0, 1.0, 2.5], Role::Constraint),
        ],
    )
    .unwrap();
    let gp = PosteriorGp::condition(&p, d, hp(1.0, 1.0)).unwrap();
    let ts = [0.25, 0.5, 1.5];
    let n = 10_000;
    let draws = sample_posterior(&gp, &ts, n, 42);
    assert_eq!(draws.len(), n);
    let mean = gp.posterior_mean(&ts);
    let var = gp.posterior_variance(&ts);
    let mut acc = DMatrix::zeros(3, 3);
    for s in &draws {
        acc += s;
    }
    acc /= n as f64;
    for q in 0..3 {
        for c in 0..3 {
            let se = ((var[(q, c)] + 1e-8) / n as f64).sqrt();
            assert!((acc[(q, c)] - mean[(q, c)]).abs() <= 3.0 * se + 1e-12, "q={q} c={c}");
        }
    }
}

#[test]
fn zero_samples_and_reproducibility() {
    let p = unstable_prior();
    let gp = PosteriorGp::condition(&p, Dataset::empty(3), hp(1.0, 1.0)).unwrap();
    assert!(sample_posterior(&gp, &[0.0, 1.0], 0, 1).is_empty());
    let a = sample_posterior(&gp, &[0.0, 1.0], 3, 9);
    let b = sample_posterior(&gp, &[0.0, 1.0], 3, 9);
    let c = sample_posterior(&gp, &[0.0, 1.0], 3, 10);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn samples_satisfy_the_ode() {
    let p = unstable_prior();
    let d = Dataset::new(3, [DataPoint::hard(0.0, &[1.0, 0.0, 0.0], Role::Init)]).unwrap();
    let gp = PosteriorGp::condition(&p, d, hp(1.0, 1.0)).unwrap();
    let h = 0.02;
    let ts: Vec<f64> = (0..101).map(|k| k as f64 * h).collect();
    let sys = unstable_system();
    for s in sample_posterior(&gp, &ts, 5, 7) {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 1..ts.len() - 1 {
            let z: Vec<f64> = (0..3).map(|c| s[(k, c)]).collect();
            let xdot: Vec<f64> = (0..2).map(|c| (s[(k + 1, c)] - s[(k - 1, c)]) / (2.0 * h)).collect();
            worst = worst.max(sys.residual(&z, &xdot).amax());
            scale = scale.max(xdot.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
        }
        // O(h^2) truncation plus jitter-level noise amplified by 1/h
        assert!(worst <= 0.05 * scale.max(1.0), "{worst} at scale {scale}");
    }
}

#[test]
fn adding_a_point_never_inflates_variance() {
    let p = unstable_prior();
    let h = hp(1.0, 0.5);
    let base = vec![
        DataPoint::hard(0.0, &[1.0, 0.0, 0.0], Role::Init),
        DataPoint::soft(1.0, &[0.0; 3], &[1.0, 1.0, 2.5], Role::Constraint),
    ];
    let mut more = base.clone();
    more.push(DataPoint::soft(0.6, &[0.3, 0.1, 0.0], &[0.2, 0.2, 0.2], Role::Constraint));
    let ts: Vec<f64> = (0..25).map(|k| -1.0 + 0.15 * k as f64).collect();
    let v0 = PosteriorGp::condition(&p, Dataset::new(3, base).unwrap(), h)
        .unwrap()
        .posterior_variance(&ts);
    let v1 = PosteriorGp::condition(&p, Dataset::new(3, more).unwrap(), h)
        .unwrap()
        .posterior_variance(&ts);
    for (a, b) in v1.iter().zip(v0.iter()) {
        assert!(*a <= b + 1e-8 * h.signal_variance);
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let p = unstable_prior();
    let d = Dataset::new(2, [hard_state(0.0, 1.0)]).unwrap();
    assert!(PosteriorGp::condition(&p, d, hp(1.0, 1.0)).is_err());
}
