use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

use asugs::niw::{log_predictive_density, prior_predictive};
use asugs::{NiwPosterior, PriorConfig};

fn spd(d: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(d, d, &entries[..d * d]);
    &a * a.transpose() + DMatrix::identity(d, d) * 0.2
}

/// Batch posterior from the prior and the whole sample.
fn batch(
    mu0: &DVector<f64>,
    c0: f64,
    delta0: f64,
    sigma0: &DMatrix<f64>,
    ys: &[Vec<f64>],
) -> (DVector<f64>, DMatrix<f64>) {
    let d = mu0.len();
    let n = ys.len() as f64;
    let mean = ys.iter().fold(DVector::zeros(d), |acc, y| {
        acc + DVector::from_column_slice(y)
    }) / n;
    let scatter = ys.iter().fold(DMatrix::zeros(d, d), |acc, y| {
        let r = DVector::from_column_slice(y) - &mean;
        acc + &r * r.transpose()
    });
    let shift = &mean - mu0;
    let mu = (mu0 * c0 + &mean * n) / (c0 + n);
    let v_inv =
        sigma0 * (2.0 * delta0) + scatter + &shift * shift.transpose() * (c0 * n / (c0 + n));
    (mu, v_inv / (2.0 * (delta0 + n / 2.0)))
}

fn stream_strategy(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-20.0..20.0f64, d), 1..60)
}

proptest! {
    #[test]
    fn recursion_matches_batch(
        ys in stream_strategy(2),
        c0 in 0.01..10.0f64,
        delta0 in 1.0..30.0f64,
        entries in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let mu0 = DVector::from_vec(vec![0.3, -1.0]);
        let sigma0 = spd(2, &entries);
        let mut post = NiwPosterior::new(mu0.clone(), c0, delta0, sigma0.clone()).unwrap();
        for y in &ys {
            post.update(y).unwrap();
        }
        let (mu, sigma) = batch(&mu0, c0, delta0, &sigma0, &ys);
        let mu_scale = mu.amax().max(1.0);
        prop_assert!((post.mu() - &mu).amax() <= 1e-10 * mu_scale);
        prop_assert!((post.sigma() - &sigma).amax() <= 1e-9 * sigma.amax());
    }

    #[test]
    fn updates_stay_positive_definite(
        ys in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 3), 1..40),
        entries in prop::collection::vec(-1.0..1.0f64, 9),
    ) {
        let mut post = NiwPosterior::new(DVector::zeros(3), 1.0, 2.5, spd(3, &entries)).unwrap();
        for y in &ys {
            post.update(y).unwrap();
            prop_assert!(post.sigma().clone().cholesky().is_some());
            prop_assert_eq!(post.sigma().clone(), post.sigma().transpose());
        }
    }

    #[test]
    fn translation_moves_mean_only(
        ys in stream_strategy(2),
        shift in prop::collection::vec(-50.0..50.0f64, 2),
        probe in prop::collection::vec(-5.0..5.0f64, 2),
    ) {
        let t = DVector::from_column_slice(&shift);
        let sigma0 = DMatrix::identity(2, 2) * 0.5;
        let mut plain = NiwPosterior::new(DVector::zeros(2), 0.5, 2.0, sigma0.clone()).unwrap();
        let mut moved = NiwPosterior::new(t.clone(), 0.5, 2.0, sigma0).unwrap();
        for y in &ys {
            plain.update(y).unwrap();
            moved.update(&[y[0] + shift[0], y[1] + shift[1]]).unwrap();
        }
        let scale = plain.mu().amax().max(1.0) + t.amax();
        prop_assert!((moved.mu() - plain.mu() - &t).amax() <= 1e-10 * scale);
        prop_assert!((moved.sigma() - plain.sigma()).amax() <= 1e-8 * plain.sigma().amax());
        let a = log_predictive_density(&plain, &probe).unwrap();
        let b = log_predictive_density(&moved, &[probe[0] + shift[0], probe[1] + shift[1]]).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
    }

    #[test]
    fn density_is_finite_and_peaks_at_mean(
        ys in stream_strategy(3),
        probe in prop::collection::vec(-30.0..30.0f64, 3),
    ) {
        let mut post = PriorConfig::standard(3).posterior();
        for y in &ys {
            post.update(y).unwrap();
        }
        let at_probe = log_predictive_density(&post, &probe).unwrap();
        let at_mean = log_predictive_density(&post, post.mu().as_slice()).unwrap();
        prop_assert!(at_probe.is_finite());
        prop_assert!(at_probe <= at_mean + 1e-12);
    }
}

/// One-dimensional predictive by integrating the precision out numerically:
/// `y | T ~ N(mu, (1 + 1/c)/T)` and `T ~ Gamma(delta, scale 1/(delta sigma))`.
fn normal_gamma_density(mu: f64, c: f64, delta: f64, sigma: f64, y: f64) -> f64 {
    let scale = 1.0 / (delta * sigma);
    let var_factor = 1.0 + 1.0 / c;
    let (lo, hi, points) = (-40.0, 40.0, 400_000);
    let h = (hi - lo) / points as f64;
    (0..points)
        .map(|i| {
            // T = e^s, dT = T ds
            let s = lo + (i as f64 + 0.5) * h;
            let t = s.exp();
            let log_normal = -0.5 * (2.0 * std::f64::consts::PI * var_factor / t).ln()
                - 0.5 * t * (y - mu).powi(2) / var_factor;
            let log_gamma = (delta - 1.0) * s - t / scale - ln_gamma(delta) - delta * scale.ln();
            (log_normal + log_gamma + s).exp() * h
        })
        .sum()
}

fn one_dim(mu: f64, c: f64, delta: f64, sigma: f64) -> NiwPosterior {
    NiwPosterior::new(
        DVector::from_element(1, mu),
        c,
        delta,
        DMatrix::from_element(1, 1, sigma),
    )
    .unwrap()
}

#[test]
fn unit_state_at_its_mean_is_one_quarter() {
    let post = one_dim(0.0, 1.0, 1.0, 1.0);
    let closed = log_predictive_density(&post, &[0.0]).unwrap().exp();
    assert!((closed - 0.25).abs() < 1e-14, "{closed}");
    assert!((normal_gamma_density(0.0, 1.0, 1.0, 1.0, 0.0) - 0.25).abs() < 1e-9);
}

#[test]
fn closed_form_matches_normal_gamma_integral() {
    for &(mu, c, delta, sigma, y) in &[
        (0.0, 1.0, 1.0, 1.0, 1.5),
        (2.0, 0.3, 1.7, 0.4, 1.1),
        (-1.0, 25.0, 12.5, 2.0, 3.0),
        (0.5, 4.0, 0.6, 0.1, 0.5),
        (0.0, 100.0, 50.5, 0.025, -0.3),
    ] {
        let closed = log_predictive_density(&one_dim(mu, c, delta, sigma), &[y])
            .unwrap()
            .exp();
        let integral = normal_gamma_density(mu, c, delta, sigma, y);
        assert!(
            (closed - integral).abs() <= 1e-9 * integral.max(1e-300),
            "({mu}, {c}, {delta}, {sigma}) at {y}: {closed} vs {integral}"
        );
    }
}

#[test]
fn prior_predictive_is_the_fresh_cluster_density() {
    let prior = PriorConfig::isotropic(2, 0.01, 20.0, 0.04);
    let y = [0.3, -0.2];
    let direct = log_predictive_density(&prior.posterior(), &y).unwrap();
    assert_eq!(prior_predictive(&prior, &y).unwrap(), direct);
}

#[test]
fn invalid_states_are_rejected() {
    let bad_sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(NiwPosterior::new(DVector::zeros(2), 1.0, 2.0, bad_sigma).is_err());
    assert!(NiwPosterior::new(DVector::zeros(2), 0.0, 2.0, DMatrix::identity(2, 2)).is_err());
    assert!(NiwPosterior::new(DVector::zeros(3), 1.0, 0.9, DMatrix::identity(3, 3)).is_err());
    let mut post = PriorConfig::standard(2).posterior();
    assert!(post.update(&[1.0]).is_err());
}
