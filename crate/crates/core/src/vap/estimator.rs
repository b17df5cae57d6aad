//! Zeroth-order gradient estimation from loss queries alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Perturbation};
use crate::par::map_indexed;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub gradient: Perturbation,
    pub base_loss: f64,
    /// Always `num_queries + 1`.
    pub evaluations: usize,
}

/// `(1/(N·β))·Σₙ [L(clamp(x + β·γₙ)) − L(x)]·γₙ` with `γₙ ~ N(0, I)`.
pub fn estimate_gradient<F>(
    loss_at: F,
    x: &ImageTensor,
    beta: f64,
    num_queries: usize,
    seed: u64,
) -> Result<Perturbation>
where
    F: Fn(&ImageTensor) -> Result<f64> + Sync,
{
    estimate_gradient_with(|_, img| loss_at(img), x, beta, num_queries, seed, 1).map(|e| e.gradient)
}

/// Like [`estimate_gradient`], with the sample index passed to the loss
/// (`0` is the base point, `1..=N` the probes) and the probes evaluated on up
/// to `concurrency` threads. Aggregation is by sample index, so the result
/// does not depend on completion order.
pub fn estimate_gradient_with<F>(
    loss_at: F,
    x: &ImageTensor,
    beta: f64,
    num_queries: usize,
    seed: u64,
    concurrency: usize,
) -> Result<GradientEstimate>
where
    F: Fn(usize, &ImageTensor) -> Result<f64> + Sync,
{
    let (h, w) = x.shape();
    let (grad, base_loss) = estimate_gradient_flat(
        |n, probe| loss_at(n, &ImageTensor::new(h, w, probe.to_vec())?),
        x.data(),
        beta,
        num_queries,
        seed,
        concurrency,
    )?;
    Ok(GradientEstimate {
        gradient: Perturbation::new(h, w, grad)?,
        base_loss,
        evaluations: num_queries + 1,
    })
}

/// The estimator over a flat point in `[0, 1]^d`; probes are clamped into the cube.
/// Returns the gradient estimate and the base loss.
pub fn estimate_gradient_flat<F>(
    loss_at: F,
    x: &[f64],
    beta: f64,
    num_queries: usize,
    seed: u64,
    concurrency: usize,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(usize, &[f64]) -> Result<f64> + Sync,
{
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::validation(format!("beta must be > 0, got {beta}")));
    }
    if num_queries == 0 {
        return Err(Error::validation("num_queries must be >= 1"));
    }
    let base_loss = loss_at(0, x)?;
    if !base_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            sample: 0,
            value: base_loss,
        });
    }

    let dim = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gammas: Vec<Vec<f64>> = (0..num_queries)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();

    let losses = map_indexed(num_queries, concurrency, |n| {
        let probe: Vec<f64> = x
            .iter()
            .zip(&gammas[n])
            .map(|(v, g)| (v + beta * g).clamp(0.0, 1.0))
            .collect();
        loss_at(n + 1, &probe)
    });

    let mut grad = vec![0.0; dim];
    for (n, (loss, gamma)) in losses.into_iter().zip(&gammas).enumerate() {
        let loss = loss?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                sample: n + 1,
                value: loss,
            });
        }
        let diff = loss - base_loss;
        if diff != 0.0 {
            for (g, y) in grad.iter_mut().zip(gamma) {
                *g += diff * y;
            }
        }
    }
    let scale = 1.0 / (num_queries as f64 * beta);
    for g in &mut grad {
        *g *= scale;
    }
    Ok((grad, base_loss))
}
