use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use safepol::gp::{
    fit_gp_binary, fit_gp_continuous, lipschitz_bound_unclamped, matern32,
    probabilistic_lipschitz_bound, GpModelSpec, Link, MaternKernelParams, NoiseModel,
    PosteriorDrawSet,
};
use safepol::sim::{fit_posterior, DgpSpec, EstimatorConfig, OutcomeModel, Scenario};
use safepol::{rng, Dataset, OutcomeKind, Policy, Unit, UtilitySpec};

fn unit(x: &[f64], d: usize, y: f64) -> Unit {
    Unit {
        covariates: x.to_vec(),
        decision: d,
        outcome: y,
    }
}

// one-covariate constant policies
fn treat_none() -> Policy {
    Policy::constant(vec![vec![0.0]], 0)
}

fn treat_all() -> Policy {
    Policy::constant(vec![vec![0.0]], 1)
}

/// `K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt` by the trapezoid rule.
fn bessel_k(nu: f64, z: f64) -> f64 {
    let h: f64 = 1e-4;
    let mut total = 0.5 * (-z).exp();
    let mut t = h;
    loop {
        let term = (-z * t.cosh()).exp() * (nu * t).cosh();
        total += term;
        if term < 1e-300 || t > 50.0 {
            break;
        }
        t += h;
    }
    total * h
}

fn gamma_fn(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

#[test]
fn kernel_matches_general_bessel_form() {
    let nu: f64 = 1.5;
    for (l, s2, d) in [(1.0, 1.0, 1.0), (0.5, 4.0, 0.3), (2.0, 16.0, 1.7), (1.0, 1.0, 3.0)] {
        let r = (2.0 * nu).sqrt() * d / l;
        let general = s2 * 2f64.powf(1.0 - nu) / gamma_fn(nu) * r.powf(nu) * bessel_k(nu, r);
        let k = matern32(&[0.0, 0.0], &[d, 0.0], &MaternKernelParams::new(l, s2).unwrap()).unwrap();
        assert!((k - general).abs() < 1e-8, "l={l} d={d}: {k} vs {general}");
    }
    let k = matern32(&[0.0], &[1.0], &MaternKernelParams::new(1.0, 1.0).unwrap()).unwrap();
    assert!((k - 0.48335).abs() < 1e-4);
}

#[test]
fn kernel_symmetry_and_gram_psd() {
    let mut g = rng::seeded(11);
    for trial in 0..20 {
        let n = 5 + trial * 3;
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![g.random_range(-2.0..2.0), g.random_range(-2.0..2.0)])
            .collect();
        let params = MaternKernelParams::new(g.random_range(0.2..3.0), g.random_range(0.5..10.0)).unwrap();
        let gram = DMatrix::from_fn(n, n, |i, j| matern32(&pts[i], &pts[j], &params).unwrap());
        assert_eq!(gram, gram.transpose());
        let min = SymmetricEigen::new(gram).eigenvalues.min();
        assert!(min >= -1e-8, "min eigenvalue {min}");
    }
}

#[test]
fn lipschitz_bound_examples() {
    let p = MaternKernelParams::new(1.0, 4.0).unwrap();
    let b = probabilistic_lipschitz_bound(&p, 0.0, 10.95).unwrap();
    assert!((b - 12.0 / (10.95 * 10.95)).abs() < 1e-15);
    assert!((b - 0.100).abs() < 0.002);
    let big = lipschitz_bound_unclamped(&p, 0.0, 1e6).unwrap();
    assert!(big < 1e-10);
    let p2 = MaternKernelParams::new(1.0, 8.0).unwrap();
    let doubled = lipschitz_bound_unclamped(&p2, 0.3, 0.5).unwrap();
    assert!((doubled - 2.0 * lipschitz_bound_unclamped(&p, 0.3, 0.5).unwrap()).abs() < 1e-12);
    assert!(probabilistic_lipschitz_bound(&p, 0.0, 0.0).is_err());
    assert_eq!(probabilistic_lipschitz_bound(&p, 0.0, 0.1).unwrap(), 1.0);
}

fn column_mean(draws: &PosteriorDrawSet, i: usize, d: usize) -> f64 {
    let c = draws.draws(i, d);
    c.iter().sum::<f64>() / c.len() as f64
}

#[test]
fn unobserved_level_is_a_prior_draw() {
    // all units at decision 0, so f_1 sees no data and tau_1 = f_1
    let units: Vec<Unit> = (0..8)
        .map(|i| unit(&[i as f64 / 4.0 - 1.0], 0, (i as f64).sin()))
        .collect();
    let data = Dataset::new(units, 2, OutcomeKind::Continuous).unwrap();
    let spec = GpModelSpec::uniform(2, MaternKernelParams::new(1.0, 4.0).unwrap(), Link::Identity);
    let query = vec![vec![0.3], vec![5.0]];
    let m = 4000;
    let draws = fit_gp_continuous(&data, &spec, &treat_none(), &query, m, 17).unwrap();
    let sd = 2.0;
    for i in 0..2 {
        assert!(draws.draws(i, 0).iter().all(|&t| t == 0.0));
        let mean = column_mean(&draws, i, 1);
        assert!(mean.abs() < 3.0 * sd / (m as f64).sqrt(), "mean {mean}");
        let var = draws.draws(i, 1).iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!((var - 4.0).abs() < 0.4, "variance {var}");
    }
}

#[test]
fn nearly_noiseless_fit_interpolates() {
    let xs: [f64; 5] = [-0.8, -0.3, 0.1, 0.5, 0.9];
    let mut units = Vec::new();
    let mut targets = Vec::new();
    for (q, &x) in xs.iter().enumerate() {
        let y0 = (2.0 * x).cos();
        let y1 = y0 + 0.5 * q as f64 - 1.0;
        units.push(unit(&[x], 0, y0));
        units.push(unit(&[x], 1, y1));
        targets.push(y1 - y0);
    }
    let data = Dataset::new(units, 2, OutcomeKind::Continuous).unwrap();
    let mut spec = GpModelSpec::uniform(2, MaternKernelParams::new(1.0, 4.0).unwrap(), Link::Identity);
    spec.noise = NoiseModel::Fixed { variance: 1e-8 };
    let query: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let draws = fit_gp_continuous(&data, &spec, &treat_none(), &query, 200, 5).unwrap();
    for (i, t) in targets.iter().enumerate() {
        let mean = column_mean(&draws, i, 1);
        assert!((mean - t).abs() < 1e-3, "unit {i}: {mean} vs {t}");
    }
}

#[test]
fn baseline_column_is_exactly_zero_and_draws_reproduce() {
    let dgp = DgpSpec {
        scenario: Scenario::NoOverlap,
        outcome: OutcomeModel::Continuous { sigma: 1.0 },
        n: 40,
    };
    let data = dgp.generate(&mut rng::seeded(2)).unwrap();
    let est = EstimatorConfig {
        draws: 300,
        ..EstimatorConfig::default()
    };
    let a = fit_posterior(&data, &dgp, &est, 99).unwrap();
    let b = fit_posterior(&data, &dgp, &est, 99).unwrap();
    let c = fit_posterior(&data, &dgp, &est, 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for (i, &d0) in a.baseline_decisions().iter().enumerate() {
        assert!(a.draws(i, d0).iter().all(|&t| t == 0.0));
        assert!(a.draws(i, 1 - d0).iter().all(|t| t.is_finite()));
    }

    let bin = DgpSpec {
        outcome: OutcomeModel::Binary { gamma: 2.0 },
        ..dgp
    };
    let data = bin.generate(&mut rng::seeded(2)).unwrap();
    let a = fit_posterior(&data, &bin, &est, 4).unwrap();
    assert_eq!(a, fit_posterior(&data, &bin, &est, 4).unwrap());
    for (i, &d0) in a.baseline_decisions().iter().enumerate() {
        assert!(a.draws(i, d0).iter().all(|&t| t == 0.0));
        assert!(a.draws(i, 1 - d0).iter().all(|t| t.abs() <= 1.0));
    }
}

/// `tau_0 = u(0, .) - u(1, .)` with `u(1, .) = 0` recovers `p_0` directly.
fn p0_utility() -> UtilitySpec {
    UtilitySpec::CustomTable {
        table: vec![[0.0, 1.0], [0.0, 0.0]],
    }
}

#[test]
fn single_success_tilts_probability_up() {
    let data = Dataset::new(vec![unit(&[0.2], 0, 1.0)], 2, OutcomeKind::Binary).unwrap();
    let mut spec = GpModelSpec::uniform(2, MaternKernelParams::default(), Link::Logit);
    spec.utility = p0_utility();
    let draws = fit_gp_binary(&data, &spec, &treat_all(), &[vec![0.2]], 4000, 8).unwrap();
    let p0 = column_mean(&draws, 0, 0);
    assert!(p0 > 0.5, "{p0}");
}

#[test]
fn zero_data_binary_is_symmetric() {
    let data = Dataset::new(vec![], 2, OutcomeKind::Binary).unwrap();
    let spec = GpModelSpec::uniform(2, MaternKernelParams::default(), Link::Logit);
    let draws = fit_gp_binary(&data, &spec, &treat_none(), &[vec![0.0]], 4000, 1).unwrap();
    let mean = column_mean(&draws, 0, 1);
    assert!(mean.abs() < 0.03, "{mean}");
}

/// Preconditioned Crank-Nicolson sampler on the exact logit model, used as
/// a reference for the Laplace approximation.
fn pcn_reference(data: &Dataset, kernel: &MaternKernelParams, iters: usize, seed: u64) -> Vec<f64> {
    let n = data.len();
    let xs = data.covariates();
    let gram = DMatrix::from_fn(n, n, |i, j| matern32(&xs[i], &xs[j], kernel).unwrap())
        + DMatrix::identity(n, n) * 1e-8 * kernel.variance;
    let l = gram.cholesky().unwrap().l();
    let mut g = rng::seeded(seed);
    let draw = |g: &mut rng::Rng| -> (Vec<f64>, Vec<f64>) {
        let z0 = nalgebra::DVector::from_fn(n, |_, _| StandardNormal.sample(g));
        let z1 = nalgebra::DVector::from_fn(n, |_, _| StandardNormal.sample(g));
        ((&l * z0).iter().copied().collect(), (&l * z1).iter().copied().collect())
    };
    let loglik = |f0: &[f64], f1: &[f64]| -> f64 {
        data.units()
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let s = f0[i] + if u.decision == 1 { f1[i] } else { 0.0 };
                let s = if u.outcome > 0.5 { s } else { -s };
                s.min(0.0) - (-s.abs()).exp().ln_1p()
            })
            .sum()
    };
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let beta: f64 = 0.15;
    let (mut f0, mut f1) = draw(&mut g);
    let mut ll = loglik(&f0, &f1);
    let mut sums = vec![0.0; n];
    let burn = iters / 5;
    for it in 0..iters {
        let (x0, x1) = draw(&mut g);
        let c = (1.0 - beta * beta).sqrt();
        let p0: Vec<f64> = f0.iter().zip(&x0).map(|(a, b)| c * a + beta * b).collect();
        let p1: Vec<f64> = f1.iter().zip(&x1).map(|(a, b)| c * a + beta * b).collect();
        let lp = loglik(&p0, &p1);
        if g.random::<f64>().ln() < lp - ll {
            f0 = p0;
            f1 = p1;
            ll = lp;
        }
        if it >= burn {
            for i in 0..n {
                sums[i] += sig(f0[i] + f1[i]) - sig(f0[i]);
            }
        }
    }
    sums.iter().map(|s| s / (iters - burn) as f64).collect()
}

#[test]
fn laplace_posterior_close_to_reference_sampler() {
    let mut g = rng::seeded(21);
    let units: Vec<Unit> = (0..12)
        .map(|i| {
            let x = -1.0 + 2.0 * i as f64 / 11.0;
            let d = i % 2;
            let p = 1.0 / (1.0 + (-(x + if d == 1 { 1.0 - x } else { 0.0 })).exp());
            unit(&[x], d, f64::from(u8::from(g.random::<f64>() < p)))
        })
        .collect();
    let data = Dataset::new(units, 2, OutcomeKind::Binary).unwrap();
    let kernel = MaternKernelParams::new(1.0, 1.0).unwrap();
    let spec = GpModelSpec::uniform(2, kernel, Link::Logit);
    let query = data.covariates();
    let draws = fit_gp_binary(&data, &spec, &treat_none(), &query, 20_000, 3).unwrap();
    let reference = pcn_reference(&data, &kernel, 400_000, 77);
    for (i, r) in reference.iter().enumerate() {
        let laplace = column_mean(&draws, i, 1);
        assert!((laplace - r).abs() < 0.05, "unit {i}: laplace {laplace} reference {r}");
    }
}

#[test]
fn smoother_prior_extrapolates_further() {
    let dgp = DgpSpec {
        scenario: Scenario::NoOverlap,
        outcome: OutcomeModel::Continuous { sigma: 1.0 },
        n: 100,
    };
    let far: Vec<Vec<f64>> = (0..9).map(|q| vec![-0.9, -0.8 + 0.2 * q as f64]).collect();
    let reps = 100;
    let mut avg = Vec::new();
    for l in [0.5, 1.0, 2.0] {
        let mut total = 0.0;
        for rep in 0..reps {
            let data = dgp.generate(&mut rng::stream(5, 0, rep)).unwrap();
            let mut spec = GpModelSpec::uniform(2, MaternKernelParams::new(l, 4.0).unwrap(), Link::Identity);
            spec.sampler.burn_in = 100;
            let draws = fit_gp_continuous(&data, &spec, &dgp.baseline_policy(), &far, 200, rep).unwrap();
            total += (0..far.len()).map(|i| column_mean(&draws, i, 1).abs()).sum::<f64>() / far.len() as f64;
        }
        avg.push(total / reps as f64);
    }
    assert!(avg[0] < avg[1] && avg[1] < avg[2], "{avg:?}");
}

#[test]
fn bad_inputs_are_rejected() {
    let data = Dataset::new(vec![unit(&[0.0], 0, 1.0)], 2, OutcomeKind::Continuous).unwrap();
    let spec = GpModelSpec::uniform(2, MaternKernelParams::default(), Link::Identity);
    assert!(fit_gp_continuous(&data, &spec, &treat_none(), &[vec![0.0]], 0, 1).is_err());
    assert!(fit_gp_continuous(&data, &spec, &treat_none(), &[vec![0.0, 1.0]], 5, 1).is_err());
    assert!(fit_gp_binary(&data, &spec, &treat_none(), &[vec![0.0]], 5, 1).is_err());
    let logit = GpModelSpec::uniform(2, MaternKernelParams::default(), Link::Logit);
    assert!(fit_gp_continuous(&data, &logit, &treat_none(), &[vec![0.0]], 5, 1).is_err());
    let three = GpModelSpec::uniform(3, MaternKernelParams::default(), Link::Identity);
    assert!(fit_gp_continuous(&data, &three, &treat_none(), &[vec![0.0]], 5, 1).is_err());
}
