use std::f64::consts::PI;
use std::sync::Arc;

use accelmc::diffusion::*;

/// Gibbs average of `cos` for `U = cos x`, `T = 1`, by the periodic trapezoid rule.
fn gibbs_cos_average() -> f64 {
    let n = 4000;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n {
        let x = 2.0 * PI * k as f64 / n as f64;
        let w = (-x.cos()).exp();
        num += x.cos() * w;
        den += w;
    }
    num / den
}

/// `-I_1(1) / I_0(1)` from the power series of the modified Bessel functions.
fn bessel_ratio() -> f64 {
    let series = |order: i32| -> f64 {
        let mut fact = [1.0_f64; 30];
        for k in 1..30 {
            fact[k] = fact[k - 1] * k as f64;
        }
        (0..20).map(|k| 0.5_f64.powi(2 * k as i32 + order) / (fact[k] * fact[k + order as usize])).sum()
    };
    -series(1) / series(0)
}

#[test]
fn quadrature_oracle_matches_bessel_series() {
    let q = gibbs_cos_average();
    assert!((q - bessel_ratio()).abs() < 1e-12);
    assert!((q + 0.44639).abs() < 1e-5);
}

#[test]
fn long_run_average_of_cos_matches_gibbs() {
    let pot = PotentialSpec::cosine_1d(1.0).unwrap();
    let t = 200.0;
    let est = replicated_variance_sde(&pot, &MobilitySpec::identity(), None, &|x| x[0].cos(), t, 1e-3, 32, 8).unwrap();
    let se = est.mean_std_error(t);
    assert!((est.mean - gibbs_cos_average()).abs() < 3.0 * se, "{} +- {se}", est.mean);
}

#[test]
fn brownian_motion_occupies_half_the_torus() {
    let pot = PotentialSpec::new(torus1(), Arc::new(|_| 0.0), Arc::new(|_| [0.0, 0.0]), 1.0).unwrap();
    let t = 100.0;
    let half = |x: &Point| if x[0] < PI { 1.0 } else { 0.0 };
    let est = replicated_variance_sde(&pot, &MobilitySpec::identity(), None, &half, t, 1e-2, 64, 2).unwrap();
    assert!((est.mean - 0.5).abs() < 3.0 * est.mean_std_error(t), "{est:?}");
}

fn torus1() -> TorusDomain {
    TorusDomain::standard(1).unwrap()
}

#[test]
fn halving_the_step_moves_averages_less_than_noise() {
    let pot = PotentialSpec::cosine_1d(1.0).unwrap();
    let mob = MobilitySpec::sin_squared(0.5);
    let t = 100.0;
    let f = |x: &Point| x[0].cos();
    let a = replicated_variance_sde(&pot, &mob, None, &f, t, 4e-3, 48, 21).unwrap();
    let b = replicated_variance_sde(&pot, &mob, None, &f, t, 2e-3, 48, 22).unwrap();
    let se = (a.mean_std_error(t).powi(2) + b.mean_std_error(t).powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() < 3.0 * se, "{} vs {} (se {se})", a.mean, b.mean);
    // both agree with the Gibbs average since the mobility keeps it invariant
    assert!((b.mean - gibbs_cos_average()).abs() < 3.0 * b.mean_std_error(t));
}

#[test]
fn path_histogram_matches_gibbs_density() {
    let pot = PotentialSpec::cosine_1d(1.0).unwrap();
    let dt = 5e-3;
    let thin = 400; // two time units between recorded samples
    let samples = 10_000;
    let path = euler_maruyama(&pot, &MobilitySpec::identity(), None, [PI, 0.0], dt, thin * samples, 17).unwrap();
    let bins = 20;
    let mut counts = vec![0.0; bins];
    for x in path.points.iter().skip(thin).step_by(thin) {
        counts[((x[0] / (2.0 * PI) * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    // bin probabilities of exp(-cos x) by fine quadrature
    let fine = 200;
    let mass: Vec<f64> = (0..bins)
        .map(|b| {
            (0..fine)
                .map(|k| {
                    let x = 2.0 * PI * (b as f64 + (k as f64 + 0.5) / fine as f64) / bins as f64;
                    (-x.cos()).exp()
                })
                .sum()
        })
        .collect();
    let z: f64 = mass.iter().sum();
    let chi2: f64 = counts
        .iter()
        .zip(&mass)
        .map(|(o, m)| {
            let e = total * m / z;
            (o - e).powi(2) / e
        })
        .sum();
    // 1% upper quantile of chi-square with 19 degrees of freedom
    assert!(chi2 < 36.19, "chi2 = {chi2}");
}

#[test]
fn different_seeds_give_consistent_averages() {
    let pot = PotentialSpec::two_well_2d(1.0).unwrap();
    let f = |x: &Point| x[0].sin();
    let t = 50.0;
    let a = replicated_variance_sde(&pot, &MobilitySpec::identity(), None, &f, t, 5e-3, 40, 1).unwrap();
    let b = replicated_variance_sde(&pot, &MobilitySpec::identity(), None, &f, t, 5e-3, 40, 2).unwrap();
    let se = (a.mean_std_error(t).powi(2) + b.mean_std_error(t).powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() < 3.0 * se);
    let again = replicated_variance_sde(&pot, &MobilitySpec::identity(), None, &f, t, 5e-3, 40, 1).unwrap();
    assert_eq!(a, again);
}

#[test]
fn perturbed_samplers_do_not_increase_variance() {
    let pot = PotentialSpec::cosine_2d(1.0).unwrap();
    let f = |x: &Point| x[0].sin();
    let (t, dt, r) = (100.0, 5e-3, 160);
    let base = replicated_variance_sde(&pot, &MobilitySpec::identity(), None, &f, t, dt, r, 5).unwrap();
    let c = solenoidal_drift(&pot, rotation(1.0)).unwrap();
    let irr = replicated_variance_sde(&pot, &MobilitySpec::identity(), Some(&c), &f, t, dt, r, 6).unwrap();
    let fast = replicated_variance_sde(&pot, &MobilitySpec::constant(2.0).unwrap(), None, &f, t, dt, r, 7).unwrap();
    for est in [irr, fast] {
        let se = (base.std_error.powi(2) + est.std_error.powi(2)).sqrt();
        assert!(est.scaled_variance <= base.scaled_variance + 2.0 * se, "{est:?} vs {base:?}");
    }
}
