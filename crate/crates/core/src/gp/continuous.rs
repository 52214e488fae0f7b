use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use super::draws::PosteriorDrawSet;
use super::{check_inputs, GpModelSpec, LatentModel, Link, NoiseModel, BLOCK};
use crate::dataset::{Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng;

/// Blocked Gibbs sampler for Gaussian outcomes.
///
/// Given `sigma^2` the training latents are conjugate. In the eigenbasis of
/// their prior covariance both prior and likelihood factorize, so the
/// `sigma^2` chain (latents, then an inverse-gamma draw) costs `O(n)` per
/// sweep. Each retained `sigma^2` is paired with a draw of every latent
/// function from its exact conditional, obtained by pathwise conditioning in
/// blocks. Chain `c` uses `rng::stream(seed, 1, c)`; retained draws are
/// concatenated in chain order.
pub fn fit_gp_continuous(
    data: &Dataset,
    spec: &GpModelSpec,
    baseline: &Policy,
    query: &[Vec<f64>],
    n_draws: usize,
    seed: u64,
) -> Result<PosteriorDrawSet> {
    if data.outcome_kind() != OutcomeKind::Continuous {
        return Err(Error::invalid("continuous sampler needs a continuous outcome"));
    }
    if spec.link != Link::Identity {
        return Err(Error::invalid("continuous outcomes use the identity link"));
    }
    let baseline_decisions = check_inputs(data, spec, baseline, query, n_draws)?;
    let model = LatentModel::build(data, spec, query)?;
    let n = data.len();
    let y = DVector::from_iterator(n, data.units().iter().map(|u| u.outcome));
    let eig = SymmetricEigen::new(model.train_cov.clone());
    let eigvals: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let eigvecs = eig.eigenvectors;
    // plain products are much faster than transposed ones for blocks
    let eigvecs_t = eigvecs.transpose();
    let y_rot = &eigvecs_t * (&y - &model.train_mean);

    let chains = spec.sampler.chains;
    let per_chain: Vec<usize> = (0..chains)
        .map(|c| n_draws / chains + usize::from(c < n_draws % chains))
        .collect();
    let initial_sigma2 = initial_noise(&y);

    let chain_draws: Vec<Result<Vec<Vec<Vec<f64>>>>> = per_chain
        .par_iter()
        .enumerate()
        .map(|(c, &keep)| {
            let mut rng = rng::stream(seed, 1, c as u64);
            let mut sigma2 = match spec.noise {
                NoiseModel::Fixed { variance } => variance,
                NoiseModel::InverseGamma { .. } => initial_sigma2,
            };
            let mut retained = Vec::with_capacity(keep);
            for sweep in 0..spec.sampler.burn_in + keep {
                if let (NoiseModel::InverseGamma { shape, scale }, true) = (spec.noise, n > 0) {
                    let mut ssr = 0.0;
                    for (&l, &yr) in eigvals.iter().zip(y_rot.iter()) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let g = l / (l + sigma2) * yr + (l * sigma2 / (l + sigma2)).sqrt() * z;
                        ssr += (yr - g) * (yr - g);
                    }
                    let gamma = Gamma::new(shape + 0.5 * n as f64, 1.0 / (scale + 0.5 * ssr))
                        .map_err(|e| Error::Numerical(e.to_string()))?;
                    sigma2 = 1.0 / gamma.sample(&mut rng);
                    if !sigma2.is_finite() || sigma2 <= 0.0 {
                        return Err(Error::Numerical(format!(
                            "noise variance draw {sigma2} at sweep {sweep}"
                        )));
                    }
                }
                if sweep >= spec.sampler.burn_in {
                    retained.push(sigma2);
                }
            }

            let mut kept = Vec::with_capacity(keep);
            for block in retained.chunks(BLOCK) {
                let mut f = model.prior_draw(&mut rng, block.len());
                if n > 0 {
                    let prior_g = model.train_latent(&f);
                    let resid = DMatrix::from_fn(n, block.len(), |i, s| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        y[i] - prior_g[(i, s)] - block[s].sqrt() * e
                    });
                    let mut rotated = &eigvecs_t * resid;
                    for (s, &s2) in block.iter().enumerate() {
                        for (i, &l) in eigvals.iter().enumerate() {
                            rotated[(i, s)] /= l + s2;
                        }
                    }
                    let alpha = &eigvecs * rotated;
                    model.correct(&mut f, &alpha);
                }
                model.push_query(&f, &mut kept);
            }
            Ok(kept)
        })
        .collect();

    let mut latent = Vec::with_capacity(n_draws);
    for chain in chain_draws {
        latent.extend(chain?);
    }
    PosteriorDrawSet::from_latent(
        query.to_vec(),
        baseline.clone(),
        baseline_decisions,
        model.k,
        &latent,
        Link::Identity,
        &spec.utility,
        seed,
    )
}

fn initial_noise(y: &DVector<f64>) -> f64 {
    if y.len() < 2 {
        return 1.0;
    }
    let mean = y.mean();
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (y.len() - 1) as f64;
    if var > 0.0 {
        0.5 * var
    } else {
        1.0
    }
}
