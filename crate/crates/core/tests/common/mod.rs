//! Independent reference computations shared by the integration tests and
//! the acceptance suite. Nothing here calls the library's numerics.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use transfer_risk::divergence::GaussianDist;
use transfer_risk::gaussian::GaussianTask;
use transfer_risk::spd::SymMatrix;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
}

/// `A Aᵀ + floor·I` with standard normal-ish entries in `A`.
pub fn random_spd_rows(rng: &mut ChaCha20Rng, n: usize, floor: f64) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let s: f64 = (0..n).map(|k| a[i][k] * a[j][k]).sum();
                    s + if i == j { floor } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

pub fn random_vec(rng: &mut ChaCha20Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Scalar-output task with `d` inputs from a random joint law.
pub fn random_task(rng: &mut ChaCha20Rng, d: usize) -> GaussianTask {
    let cov = random_spd_rows(rng, d + 1, 0.1);
    let mean = random_vec(rng, d + 1, 1.0);
    let joint = GaussianDist::new(mean, SymMatrix::from_rows(&cov).unwrap()).unwrap();
    GaussianTask::from_joint(&joint, d).unwrap()
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn quad(a: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += x[i] * a[i][j] * x[j];
        }
    }
    s
}

/// Iterated integrals of the piecewise-linear path through `points`, levels
/// `1..=order` flattened in row-major multi-index order.
///
/// Each segment is cut into `2^(order−1)` equal steps and every level is
/// integrated from the previous one with Simpson's rule over step pairs, so
/// level `k` lives on a grid `2^(k−1)` times coarser than level 1. Within a
/// segment the integrand of level `k` is a polynomial of degree `k − 1`, for
/// which Simpson's rule is exact up to order 3.
pub fn signature_oracle(points: &[Vec<f64>], order: usize) -> Vec<f64> {
    assert!((1..=3).contains(&order));
    let d = points[0].len();
    let sub = 1usize << (order - 1);
    // Fine grid: level-1 values and the constant derivative on each step.
    let mut s1 = Vec::new();
    let mut deriv = Vec::new();
    let x0 = &points[0];
    for seg in points.windows(2) {
        let delta: Vec<f64> = (0..d).map(|i| seg[1][i] - seg[0][i]).collect();
        for j in 0..sub {
            if s1.is_empty() {
                s1.push(vec![0.0; d]);
            }
            let t = (j + 1) as f64 / sub as f64;
            s1.push((0..d).map(|i| seg[0][i] + t * delta[i] - x0[i]).collect());
            deriv.push(delta.iter().map(|v| v / sub as f64).collect::<Vec<f64>>());
        }
    }
    let mut out: Vec<f64> = s1.last().unwrap().clone();
    // prev[g] is the level-(k−1) tensor at grid point g; step is the fine
    // step count between grid points of the previous level.
    let mut prev = s1;
    let mut step = 1;
    for _ in 2..=order {
        let n_pairs = (prev.len() - 1) / 2;
        let width = prev[0].len() * d;
        let mut cur = vec![vec![0.0; width]];
        for p in 0..n_pairs {
            let (a, m, b) = (&prev[2 * p], &prev[2 * p + 1], &prev[2 * p + 2]);
            // All three nodes lie on one segment: one derivative per pair.
            let dx = &deriv[2 * p * step];
            let h = 2.0 * step as f64;
            let mut next = cur.last().unwrap().clone();
            for (ia, ((va, vm), vb)) in a.iter().zip(m).zip(b).enumerate() {
                for (i, dxi) in dx.iter().enumerate() {
                    next[ia * d + i] += h / 6.0 * (va + 4.0 * vm + vb) * dxi;
                }
            }
            cur.push(next);
        }
        out.extend(cur.last().unwrap());
        prev = cur;
        step *= 2;
    }
    out
}

/// Plain gradient descent on `(1/T)‖Xθ − y‖² + λ‖θ − anchor‖²` from zero.
pub fn gradient_descent_ridge(
    x: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    anchor: &[f64],
    iters: usize,
) -> Vec<f64> {
    let (t, p) = (x.len(), x[0].len());
    // Lipschitz bound from the Frobenius norm of the Gram matrix.
    let fro: f64 = x.iter().flatten().map(|v| v * v).sum::<f64>() / t as f64;
    let step = 1.0 / (2.0 * (fro + lambda));
    let mut theta = vec![0.0; p];
    for _ in 0..iters {
        let mut grad: Vec<f64> = (0..p)
            .map(|j| 2.0 * lambda * (theta[j] - anchor[j]))
            .collect();
        for r in 0..t {
            let e: f64 = x[r].iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() - y[r];
            for j in 0..p {
                grad[j] += 2.0 * e * x[r][j] / t as f64;
            }
        }
        for j in 0..p {
            theta[j] -= step * grad[j];
        }
    }
    theta
}

/// Compares every file of `golden` byte for byte with its namesake in
/// `produced`; returns the number of files or the first mismatch.
pub fn compare_dir(produced: &Path, golden: &Path) -> Result<usize, String> {
    let mut n = 0;
    let mut entries: Vec<_> = fs::read_dir(golden).map_err(|e| e.to_string())?.collect();
    entries.sort_by_key(|e| e.as_ref().map(|e| e.path()).ok());
    for e in entries {
        let path = e.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap();
        compare_file(&produced.join(name), &path)?;
        n += 1;
    }
    Ok(n)
}

pub fn compare_file(produced: &Path, golden: &Path) -> Result<(), String> {
    let a = fs::read(produced).map_err(|e| format!("{}: {e}", produced.display()))?;
    let b = fs::read(golden).map_err(|e| format!("{}: {e}", golden.display()))?;
    if a != b {
        return Err(format!(
            "{} differs from {}",
            produced.display(),
            golden.display()
        ));
    }
    Ok(())
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        fs::copy(&p, to.join(p.file_name().unwrap())).unwrap();
    }
}

/// Arguments of every golden CLI case, with `{out}` standing for a scratch
/// path and `{fx}` for the fixture directory. The last field names the
/// golden file or directory.
pub const CLI_CASES: &[(&str, &[&str], &str)] = &[
    (
        "gaussian-risk pair",
        &[
            "gaussian-risk",
            "--spec",
            "{fx}/gaussian_pair.json",
            "--out",
            "{out}",
        ],
        "gaussian_pair.json",
    ),
    (
        "gaussian-risk augmentation",
        &[
            "gaussian-risk",
            "--spec",
            "{fx}/gaussian_augment.json",
            "--out",
            "{out}",
        ],
        "gaussian_augment.json",
    ),
    (
        "signature",
        &[
            "signature",
            "--input",
            "{fx}/path.csv",
            "--order",
            "3",
            "--out",
            "{out}",
        ],
        "signature.csv",
    ),
    (
        "predict",
        &[
            "predict",
            "--source",
            "{fx}/bars/sources.csv",
            "--target",
            "{fx}/bars/target.csv",
            "--train-end",
            "2024-06-01",
            "--out",
            "{out}",
        ],
        "predict",
    ),
    (
        "portfolio",
        &[
            "portfolio",
            "--source",
            "{fx}/bars/portfolio_source.csv",
            "--target",
            "{fx}/bars/portfolio_target.csv",
            "--train-end",
            "2024-06-01",
            "--seed",
            "3",
            "--out",
            "{out}",
        ],
        "portfolio",
    ),
];

/// Runs one golden case in `scratch` and compares the outputs.
pub fn run_cli_case(args: &[&str], golden_name: &str, scratch: &Path) -> Result<(), String> {
    let fx = fixtures();
    let out = scratch.join(golden_name);
    let argv: Vec<String> = std::iter::once("transfer-risk".to_string())
        .chain(args.iter().map(|a| {
            a.replace("{fx}", fx.to_str().unwrap())
                .replace("{out}", out.to_str().unwrap())
        }))
        .collect();
    let code = transfer_risk::cli::run_command(&argv);
    if code != 0 {
        return Err(format!("exit code {code} for {argv:?}"));
    }
    let golden = fx.join("golden").join(golden_name);
    if golden.is_dir() {
        compare_dir(&out, &golden).map(|_| ())
    } else {
        compare_file(&out, &golden)
    }
}

/// Runs the experiment fixture from a scratch copy and compares outputs.
pub fn run_experiment_case(scratch: &Path) -> Result<(), String> {
    let fx = fixtures();
    fs::copy(fx.join("experiment.toml"), scratch.join("experiment.toml"))
        .map_err(|e| e.to_string())?;
    copy_dir(&fx.join("data"), &scratch.join("data"));
    let cfg = scratch.join("experiment.toml");
    let code = transfer_risk::cli::run_command([
        "transfer-risk",
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    if code != 0 {
        return Err(format!("experiment exit code {code}"));
    }
    compare_dir(&scratch.join("out"), &fx.join("golden").join("experiment")).map(|_| ())
}
