//! Truncated signatures of piecewise-linear paths.
//!
//! Level `k` of a signature over `ℝ^d` is a flat block of `d^k` iterated
//! integrals; the multi-index `(i₁, …, i_k)` (0-based) sits at offset
//! `Σ_j i_j · d^{k-j}`, i.e. row-major with the first index slowest.

use rayon::prelude::*;
use thiserror::Error;

/// Upper bound on the coefficient count of a single signature.
pub const MAX_COEFFICIENTS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignatureError {
    #[error("signature of dimension {dim} and order {order} overflows usize")]
    Overflow { dim: usize, order: usize },
    #[error("signature of dimension {dim} and order {order} has {count} coefficients, limit is {MAX_COEFFICIENTS}")]
    TooLarge {
        dim: usize,
        order: usize,
        count: usize,
    },
    #[error("dimension and order must be at least 1 (got d = {dim}, M = {order})")]
    InvalidShape { dim: usize, order: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("path needs at least 2 points, got {0}")]
    DegeneratePath(usize),
    #[error("path times must be strictly increasing (index {0})")]
    NonIncreasingTimes(usize),
    #[error("non-finite value in path at index {0}")]
    NonFinite(usize),
    #[error("price and volume series differ in length ({price} vs {volume})")]
    SeriesMismatch { price: usize, volume: usize },
    #[error("need at least {needed} observations for lag {lag}, got {found}")]
    InsufficientHistory {
        lag: usize,
        needed: usize,
        found: usize,
    },
    #[error("lag must be at least 2, got {0}")]
    InvalidLag(usize),
}

pub type Result<T> = std::result::Result<T, SignatureError>;

/// `Σ_{k=0..M} d^k`.
pub fn sig_length(dim: usize, order: usize) -> Result<usize> {
    if dim == 0 || order == 0 {
        return Err(SignatureError::InvalidShape { dim, order });
    }
    let overflow = SignatureError::Overflow { dim, order };
    let mut total: usize = 1;
    let mut block: usize = 1;
    for _ in 0..order {
        block = block.checked_mul(dim).ok_or(overflow.clone())?;
        total = total.checked_add(block).ok_or(overflow.clone())?;
    }
    Ok(total)
}

fn check_shape(dim: usize, order: usize) -> Result<()> {
    let count = sig_length(dim, order)?;
    if count > MAX_COEFFICIENTS {
        return Err(SignatureError::TooLarge { dim, order, count });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSignature {
    dim: usize,
    order: usize,
    levels: Vec<Vec<f64>>,
}

impl TruncatedSignature {
    /// Signature of a constant path: `1` at level 0, zeros elsewhere.
    pub fn identity(dim: usize, order: usize) -> Result<Self> {
        check_shape(dim, order)?;
        let levels = (0..=order).map(|k| {
            let mut block = vec![0.0; dim.pow(k as u32)];
            if k == 0 {
                block[0] = 1.0;
            }
            block
        });
        Ok(Self {
            dim,
            order,
            levels: levels.collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Coefficient at a 0-based multi-index; the empty index is level 0.
    pub fn coefficient(&self, index: &[usize]) -> f64 {
        let offset = index.iter().fold(0, |acc, &i| {
            debug_assert!(i < self.dim);
            acc * self.dim + i
        });
        self.levels[index.len()][offset]
    }

    /// All coefficients level by level, optionally skipping level 0.
    pub fn flatten(&self, include_level0: bool) -> Vec<f64> {
        let skip = usize::from(!include_level0);
        self.levels.iter().skip(skip).flatten().copied().collect()
    }
}

/// Column labels `S_i₁_…_i_k` (1-based) matching `flatten(false)`.
pub fn coefficient_labels(dim: usize, order: usize) -> Result<Vec<String>> {
    check_shape(dim, order)?;
    let mut labels = Vec::new();
    let mut current: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..order {
        current = current
            .iter()
            .flat_map(|prefix| {
                (1..=dim).map(move |i| {
                    let mut next = prefix.clone();
                    next.push(i);
                    next
                })
            })
            .collect();
        labels.extend(current.iter().map(|idx| {
            let parts: Vec<String> = idx.iter().map(usize::to_string).collect();
            format!("S_{}", parts.join("_"))
        }));
    }
    Ok(labels)
}

/// Signature of one linear segment with increment `delta`: level `k` is
/// `δ^{⊗k} / k!`.
pub fn segment_signature(delta: &[f64], order: usize) -> Result<TruncatedSignature> {
    let dim = delta.len();
    check_shape(dim, order)?;
    let mut levels = Vec::with_capacity(order + 1);
    levels.push(vec![1.0]);
    for k in 1..=order {
        let prev: &Vec<f64> = &levels[k - 1];
        let mut block = Vec::with_capacity(prev.len() * dim);
        for &p in prev {
            for &x in delta {
                block.push(p * x / k as f64);
            }
        }
        levels.push(block);
    }
    Ok(TruncatedSignature { dim, order, levels })
}

/// Truncated tensor product; the signature of `a`'s path followed by `b`'s.
pub fn chen_product(a: &TruncatedSignature, b: &TruncatedSignature) -> Result<TruncatedSignature> {
    if a.dim != b.dim {
        return Err(SignatureError::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    if a.order != b.order {
        return Err(SignatureError::DimensionMismatch {
            expected: a.order,
            found: b.order,
        });
    }
    let mut levels = Vec::with_capacity(a.order + 1);
    for k in 0..=a.order {
        let mut block = vec![0.0; a.levels[k].len()];
        for i in 0..=k {
            let (left, right) = (&a.levels[i], &b.levels[k - i]);
            let width = right.len();
            for (ia, &x) in left.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let dst = &mut block[ia * width..(ia + 1) * width];
                for (d, &y) in dst.iter_mut().zip(right) {
                    *d += x * y;
                }
            }
        }
        levels.push(block);
    }
    Ok(TruncatedSignature {
        dim: a.dim,
        order: a.order,
        levels,
    })
}

/// Piecewise-linear path through `(times[i], values[i])`.
#[derive(Debug, Clone)]
pub struct Path {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Path {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(SignatureError::DimensionMismatch {
                expected: times.len(),
                found: values.len(),
            });
        }
        if values.len() < 2 {
            return Err(SignatureError::DegeneratePath(values.len()));
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(SignatureError::InvalidShape { dim, order: 1 });
        }
        for (i, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(SignatureError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if !times[i].is_finite() || v.iter().any(|x| !x.is_finite()) {
                return Err(SignatureError::NonFinite(i));
            }
            if i > 0 && times[i] <= times[i - 1] {
                return Err(SignatureError::NonIncreasingTimes(i));
            }
        }
        Ok(Self { times, values })
    }

    /// Points indexed `0, 1, …, n−1`.
    pub fn from_points(values: Vec<Vec<f64>>) -> Result<Self> {
        let times = (0..values.len()).map(|i| i as f64).collect();
        Self::new(times, values)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// Chen fold of the segment signatures, left to right.
pub fn path_signature(path: &Path, order: usize) -> Result<TruncatedSignature> {
    let mut acc = TruncatedSignature::identity(path.dim(), order)?;
    for w in path.values.windows(2) {
        let delta: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
        acc = chen_product(&acc, &segment_signature(&delta, order)?)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    /// Position `t` of the last observation in the window.
    pub index: usize,
    pub x: Vec<f64>,
    /// `log s_{t+1} − log s_t`.
    pub y: f64,
}

/// Windowed signature features for next-step return prediction.
///
/// Each window of `lag` consecutive observations becomes the 3D path
/// `(τ, log price, log volume)` with `τ` spaced evenly on `[0, 1]`. Its
/// order-`order` signature without level 0 is paired with the following
/// log return, giving `T − lag` rows.
pub fn build_feature_dataset(
    log_price: &[f64],
    log_volume: &[f64],
    lag: usize,
    order: usize,
) -> Result<Vec<FeatureRow>> {
    if log_price.len() != log_volume.len() {
        return Err(SignatureError::SeriesMismatch {
            price: log_price.len(),
            volume: log_volume.len(),
        });
    }
    if lag < 2 {
        return Err(SignatureError::InvalidLag(lag));
    }
    let n = log_price.len();
    if n < lag + 1 {
        return Err(SignatureError::InsufficientHistory {
            lag,
            needed: lag + 1,
            found: n,
        });
    }
    check_shape(3, order)?;
    if let Some(i) = (0..n).find(|&i| !log_price[i].is_finite() || !log_volume[i].is_finite()) {
        return Err(SignatureError::NonFinite(i));
    }
    let step = 1.0 / (lag - 1) as f64;
    (lag - 1..n - 1)
        .into_par_iter()
        .map(|t| {
            let start = t + 1 - lag;
            let values = (0..lag)
                .map(|j| vec![j as f64 * step, log_price[start + j], log_volume[start + j]])
                .collect();
            let path = Path::from_points(values)?;
            let sig = path_signature(&path, order)?;
            Ok(FeatureRow {
                index: t,
                x: sig.flatten(false),
                y: log_price[t + 1] - log_price[t],
            })
        })
        .collect()
}
