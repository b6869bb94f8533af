use dr_optout::behavior::logistic;
use dr_optout::online::{
    jj_lambda, sample_params, variational_update, variational_update_with, Belief,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn random_obs<R: Rng>(rng: &mut R) -> Vec<f64> {
    let mut w = vec![1.0];
    w.extend((0..5).map(|_| rng.sample::<f64, _>(StandardNormal)));
    w
}

#[test]
fn first_pass_hand_values() {
    let prior = Belief::isotropic(&[0.0], 1.0).unwrap();
    let out = variational_update_with(&prior, &[1.0], true, 1).unwrap();
    assert!((jj_lambda(1.0) - 0.11553).abs() < 5e-6);
    assert!((out.belief.sigma[(0, 0)] - 0.81231).abs() < 5e-6);
    assert!((out.belief.mu[0] - 0.40615).abs() < 5e-6);
}

#[test]
fn mean_moves_toward_the_outcome() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let prior = Belief::isotropic(&[0.0; 6], 2.0).unwrap();
    for _ in 0..200 {
        let w = random_obs(&mut rng);
        let wv = DVector::from_column_slice(&w);
        for z in [true, false] {
            let post = variational_update(&prior, &w, z).unwrap().belief;
            let s = wv.dot(&post.mu);
            assert!(if z { s > 0.0 } else { s < 0.0 });
        }
    }
}

#[test]
fn covariance_stays_positive_definite_and_shrinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut b = Belief::isotropic(&[2.0, 0.0, 0.0, 0.0, 0.0, 0.0], 4.0).unwrap();
    for i in 0..10_000 {
        let mut w = random_obs(&mut rng);
        // Mix in extreme and repeated directions.
        if i % 7 == 0 {
            w.iter_mut().skip(1).for_each(|v| *v *= 30.0);
        }
        let z = rng.random::<f64>() < 0.8;
        let next = variational_update(&b, &w, z).unwrap().belief;
        assert!(next.min_eigenvalue() > 1e-12, "update {i}");
        let diff: DMatrix<f64> = &b.sigma - &next.sigma;
        let diff = (&diff + diff.transpose()) * 0.5;
        let min = SymmetricEigen::new(diff).eigenvalues.min();
        assert!(min >= -1e-10, "update {i}: {min}");
        b = next;
    }
}

/// Posterior mean and variance of a scalar logistic model by quadrature.
fn exact_posterior(mu: f64, var: f64, w: f64, z: bool) -> (f64, f64) {
    let sd = var.sqrt();
    let n = 20_001;
    let (lo, hi) = (mu - 12.0 * sd, mu + 12.0 * sd);
    let h = (hi - lo) / (n - 1) as f64;
    let (mut z0, mut z1, mut z2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let th = lo + h * i as f64;
        let weight = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let lik = logistic(if z { w * th } else { -w * th });
        let p = weight * (-(th - mu).powi(2) / (2.0 * var)).exp() * lik;
        z0 += p;
        z1 += p * th;
        z2 += p * th * th;
    }
    let m = z1 / z0;
    (m, z2 / z0 - m * m)
}

/// The grid over which the one-dimensional update is expected to be
/// accurate: prior variance and prior logit variance `w^2 var` both at
/// most one.
pub fn accuracy_grid() -> Vec<(f64, f64, f64, bool)> {
    let mut grid = Vec::new();
    for mu in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        for var in [0.25, 0.5, 1.0] {
            for w in [0.5, 1.0, 1.5, 2.0] {
                if w * w * var <= 1.0 {
                    for z in [false, true] {
                        grid.push((mu, var, w, z));
                    }
                }
            }
        }
    }
    grid
}

#[test]
fn scalar_update_tracks_exact_posterior() {
    for (mu, var, w, z) in accuracy_grid() {
        let prior = Belief::isotropic(&[mu], var).unwrap();
        let post = variational_update(&prior, &[w], z).unwrap().belief;
        let (m, v) = exact_posterior(mu, var, w, z);
        assert!(
            (post.mu[0] - m).abs() <= 0.1,
            "{mu} {var} {w} {z}: mean {} vs {m}",
            post.mu[0]
        );
        assert!(
            (post.sigma[(0, 0)] - v).abs() <= 0.1,
            "{mu} {var} {w} {z}: var {} vs {v}",
            post.sigma[(0, 0)]
        );
    }
}

#[test]
fn posterior_concentrates_around_truth() {
    let mut hits = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let truth: Vec<f64> = (0..6).map(|_| normal.sample(&mut rng)).collect();
        let mut b = Belief::isotropic(&[0.0; 6], 4.0).unwrap();
        let err = |b: &Belief| {
            b.mu.iter()
                .zip(&truth)
                .map(|(a, t)| (a - t).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let initial = err(&b);
        for _ in 0..2000 {
            let w = random_obs(&mut rng);
            let logit: f64 = w.iter().zip(&truth).map(|(a, t)| a * t).sum();
            let z = rng.random::<f64>() < logistic(logit);
            b = variational_update(&b, &w, z).unwrap().belief;
        }
        if err(&b) < 0.5 * initial {
            hits += 1;
        }
    }
    assert!(hits >= 19, "{hits} of 20 seeds concentrated");
}

#[test]
fn draws_are_seeded_and_centred() {
    let mu = [1.0, -2.0, 0.5, 0.0, 3.0, -1.0];
    let mut sigma = DMatrix::from_diagonal_element(6, 6, 0.5);
    sigma[(0, 1)] = 0.2;
    sigma[(1, 0)] = 0.2;
    let b = Belief::new(DVector::from_column_slice(&mu), sigma.clone()).unwrap();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mean = [0.0; 6];
    for _ in 0..n {
        let d = sample_params(&mut rng, &b).unwrap();
        for k in 0..6 {
            mean[k] += d[k] / n as f64;
        }
    }
    for k in 0..6 {
        let se = (sigma[(k, k)] / n as f64).sqrt();
        assert!((mean[k] - mu[k]).abs() <= 4.0 * se, "component {k}");
    }
    let a = sample_params(&mut ChaCha8Rng::seed_from_u64(9), &b).unwrap();
    let c = sample_params(&mut ChaCha8Rng::seed_from_u64(9), &b).unwrap();
    assert_eq!(a, c);
    let tight = Belief::isotropic(&mu, 1e-16).unwrap();
    let d = sample_params(&mut rng, &tight).unwrap();
    let dist = d
        .iter()
        .zip(&mu)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(dist <= 1e-6);
}
