use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::{DataError, Result};
use crate::divergence::GaussianDist;
use crate::gaussian::GaussianTask;
use crate::spd::{Cholesky, Matrix};

/// `n` draws (rows) from `dist` as `μ + L z` with `L` the Cholesky factor.
///
/// Draws come from a single ChaCha20 stream seeded by `seed`, consumed row
/// by row, so output is identical on every platform and thread count.
pub fn synth_gaussian_samples(dist: &GaussianDist, n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Err(DataError::EmptySample);
    }
    let chol = Cholesky::new(dist.cov())?;
    let l = chol.lower();
    let d = dist.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for r in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut s = dist.mean()[i];
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                s += l[(i, k)] * zk;
            }
            out[(r, i)] = s;
        }
    }
    Ok(out)
}

/// Joint `(x, y)` rows of a Gaussian task, inputs first.
pub fn synth_task_samples(task: &GaussianTask, n: usize, seed: u64) -> Result<Matrix> {
    synth_gaussian_samples(&task.joint(), n, seed)
}
