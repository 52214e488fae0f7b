use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use super::draws::PosteriorDrawSet;
use super::{check_inputs, logistic, GpModelSpec, LatentModel, Link, BLOCK};
use crate::dataset::{Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng;

/// Laplace-approximate posterior for Bernoulli outcomes with a logit link.
///
/// Finds the posterior mode of the training latents `g` by damped Newton
/// iterations, then draws independent samples of all latent functions from
/// the Gaussian approximation. Draws use `rng::stream(seed, 2, 0)`.
pub fn fit_gp_binary(
    data: &Dataset,
    spec: &GpModelSpec,
    baseline: &Policy,
    query: &[Vec<f64>],
    n_draws: usize,
    seed: u64,
) -> Result<PosteriorDrawSet> {
    if data.outcome_kind() != OutcomeKind::Binary {
        return Err(Error::invalid("binary sampler needs a binary outcome"));
    }
    if spec.link != Link::Logit {
        return Err(Error::invalid("binary outcomes use the logit link"));
    }
    let baseline_decisions = check_inputs(data, spec, baseline, query, n_draws)?;
    let model = LatentModel::build(data, spec, query)?;
    let y = DVector::from_iterator(data.len(), data.units().iter().map(|u| u.outcome));
    let mut rng = rng::stream(seed, 2, 0);

    let mut latent = Vec::with_capacity(n_draws);
    let blocks = (0..n_draws).step_by(BLOCK).map(|start| BLOCK.min(n_draws - start));
    if data.is_empty() {
        for s in blocks {
            model.push_query(&model.prior_draw(&mut rng, s), &mut latent);
        }
    } else {
        let mode = laplace_mode(
            &model.train_cov,
            &model.train_mean,
            &y,
            spec.sampler.max_newton_iters,
            spec.sampler.newton_tol,
        )?;
        let n = y.len();
        for s in blocks {
            let mut f = model.prior_draw(&mut rng, s);
            let prior_g = model.train_latent(&f);
            // alpha = (K + W^{-1})^{-1} (z - g~ - e) with z the pseudo-targets
            // and e ~ N(0, W^{-1}); scaled by sqrt(W) the noise is standard.
            let scaled = DMatrix::from_fn(n, s, |i, c| {
                let e: f64 = StandardNormal.sample(&mut rng);
                mode.sqrt_w[i] * (mode.g[i] - prior_g[(i, c)]) + mode.grad[i] / mode.sqrt_w[i] - e
            });
            let mut alpha = mode.b_chol.solve(&scaled);
            for (i, mut row) in alpha.row_iter_mut().enumerate() {
                row *= mode.sqrt_w[i];
            }
            model.correct(&mut f, &alpha);
            model.push_query(&f, &mut latent);
        }
    }
    PosteriorDrawSet::from_latent(
        query.to_vec(),
        baseline.clone(),
        baseline_decisions,
        model.k,
        &latent,
        Link::Logit,
        &spec.utility,
        seed,
    )
}

struct LaplaceMode {
    g: DVector<f64>,
    grad: DVector<f64>,
    sqrt_w: DVector<f64>,
    /// Cholesky of `I + sqrt(W) K sqrt(W)` at the mode.
    b_chol: Cholesky<f64, Dyn>,
}

fn log_lik(y: &DVector<f64>, g: &DVector<f64>) -> f64 {
    y.iter()
        .zip(g.iter())
        .map(|(&yi, &gi)| {
            // log sigma(s) with s = +-g, written to avoid overflow
            let s = if yi > 0.5 { gi } else { -gi };
            s.min(0.0) - (-s.abs()).exp().ln_1p()
        })
        .sum()
}

fn laplace_mode(
    cov: &DMatrix<f64>,
    mean: &DVector<f64>,
    y: &DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<LaplaceMode> {
    let n = y.len();
    let mut a = DVector::<f64>::zeros(n);
    let mut g = mean.clone();
    let objective = |a: &DVector<f64>, g: &DVector<f64>| -> f64 {
        -0.5 * a.dot(&(g - mean)) + log_lik(y, g)
    };
    let mut current = objective(&a, &g);
    for iter in 0..max_iters {
        let pi = g.map(logistic);
        let w = pi.map(|p| (p * (1.0 - p)).max(1e-300));
        let sqrt_w = w.map(f64::sqrt);
        let grad = y - &pi;
        let b = w.component_mul(&(&g - mean)) + &grad;
        let kb = cov * &b;
        let b_chol = b_matrix(cov, &sqrt_w)?;
        let correction = b_chol.solve(&sqrt_w.component_mul(&kb));
        let a_new = &b - sqrt_w.component_mul(&correction);

        // damped step in a-space; the objective is concave
        let direction = &a_new - &a;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let a_try = &a + &direction * step;
            let g_try = cov * &a_try + mean;
            let value = objective(&a_try, &g_try);
            if value >= current - 1e-12 * current.abs().max(1.0) {
                accepted = Some((a_try, g_try, value));
                break;
            }
            step *= 0.5;
        }
        let Some((a_next, g_next, value)) = accepted else {
            return Err(Error::Numerical(format!(
                "latent mode search stalled after {iter} iterations"
            )));
        };
        let improvement = value - current;
        a = a_next;
        g = g_next;
        current = value;
        if improvement.abs() <= tol * current.abs().max(1.0) {
            let pi = g.map(logistic);
            let w = pi.map(|p| (p * (1.0 - p)).max(1e-300));
            let sqrt_w = w.map(f64::sqrt);
            let grad = y - &pi;
            let b_chol = b_matrix(cov, &sqrt_w)?;
            return Ok(LaplaceMode {
                g,
                grad,
                sqrt_w,
                b_chol,
            });
        }
    }
    Err(Error::Numerical(format!(
        "latent mode search did not converge in {max_iters} iterations"
    )))
}

fn b_matrix(cov: &DMatrix<f64>, sqrt_w: &DVector<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = sqrt_w.len();
    let b = DMatrix::from_fn(n, n, |i, j| {
        let v = sqrt_w[i] * cov[(i, j)] * sqrt_w[j];
        if i == j {
            v + 1.0
        } else {
            v
        }
    });
    Cholesky::new(b).ok_or_else(|| Error::Numerical("I + W^1/2 K W^1/2 is not positive definite".into()))
}
