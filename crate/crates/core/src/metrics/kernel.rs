//! Per-population similarity scores.
//!
//! All kernels work on [`Vectors`] and accumulate in f64. Image order inside a
//! population never matters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::store::{Element, Vectors, NORM_TOLERANCE};

fn dot<T: Element>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x.into() * y.into())
        .sum()
}

fn norm<T: Element>(a: &[T]) -> f64 {
    dot(a, a).sqrt()
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine<T: Element>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimMismatch(a.len(), b.len()));
    }
    let denom = norm(a) * norm(b);
    if denom == 0.0 || !denom.is_finite() {
        return Err(MetricError::ZeroNorm);
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

// Validated inputs only: dims equal, norms nonzero.
fn sim<T: Element>(a: &[T], b: &[T]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0)
}

fn check_nonzero<T: Element>(v: &Vectors<T>) -> Result<(), MetricError> {
    if v.rows().any(|r| norm(r) == 0.0) {
        return Err(MetricError::ZeroNorm);
    }
    Ok(())
}

fn check_dims<T: Element>(a: &Vectors<T>, b: &Vectors<T>) -> Result<(), MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

/// Self-consistency: mean similarity over the `n² − n` ordered pairs of
/// distinct images.
pub fn self_consistency<T: Element>(set: &Vectors<T>) -> Result<f64, MetricError> {
    let n = set.len();
    if n < 2 {
        return Err(MetricError::TooFewImages(n));
    }
    check_nonzero(set)?;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += sim(set.row(i), set.row(j));
            }
        }
    }
    Ok(total / (n * n - n) as f64)
}

/// Cross-consistency: mean similarity over all `n_t · n_s` pairs between the
/// target-language and source-language populations.
pub fn cross_consistency<T: Element>(target: &Vectors<T>, source: &Vectors<T>) -> Result<f64, MetricError> {
    if target.is_empty() || source.is_empty() {
        return Err(MetricError::EmptySet);
    }
    check_dims(target, source)?;
    check_nonzero(target)?;
    check_nonzero(source)?;
    let mut total = 0.0;
    for t in target.rows() {
        for s in source.rows() {
            total += sim(t, s);
        }
    }
    Ok(total / (target.len() * source.len()) as f64)
}

/// Word correctness: mean dot product of a unit-norm text embedding with
/// every image embedding.
pub fn word_correctness<T: Element>(text: &[T], images: &Vectors<T>) -> Result<f64, MetricError> {
    if images.is_empty() {
        return Err(MetricError::EmptySet);
    }
    if text.len() != images.dim() {
        return Err(MetricError::DimMismatch(text.len(), images.dim()));
    }
    let n = norm(text);
    if (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(MetricError::NotUnitNorm(n));
    }
    let total: f64 = images.rows().map(|r| dot(text, r)).sum();
    Ok(total / images.len() as f64)
}

/// How `Dt` visits the other-concept pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DtMode {
    /// Every pooled image exactly once.
    Exhaustive,
    /// `draws` samples with replacement; `None` picks [`default_draws`].
    Sampled { draws: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtConfig {
    pub mode: DtMode,
    pub rng_seed: u64,
}

impl Default for DtConfig {
    fn default() -> Self {
        Self {
            mode: DtMode::Sampled { draws: None },
            rng_seed: 0,
        }
    }
}

pub const MAX_DEFAULT_DRAWS: usize = 1000;

/// Ten draws per pooled image, capped at [`MAX_DEFAULT_DRAWS`].
pub fn default_draws(pool_images: usize) -> usize {
    (10 * pool_images).clamp(1, MAX_DEFAULT_DRAWS)
}

/// Images of the other concepts in the same language.
#[derive(Debug, Clone)]
pub struct Pool<'a, T: Element = f32> {
    members: Vec<(&'a str, &'a Vectors<T>)>,
}

impl<'a, T: Element> Pool<'a, T> {
    /// Build the pool for `target_concept`, dropping its own entry and any
    /// empty populations.
    pub fn excluding(
        target_concept: &str,
        candidates: impl IntoIterator<Item = (&'a str, &'a Vectors<T>)>,
    ) -> Result<Self, MetricError> {
        let members: Vec<_> = candidates
            .into_iter()
            .filter(|(c, v)| *c != target_concept && !v.is_empty())
            .collect();
        if members.is_empty() {
            return Err(MetricError::EmptyPool);
        }
        Ok(Self { members })
    }

    pub fn concepts(&self) -> usize {
        self.members.len()
    }

    pub fn images(&self) -> usize {
        self.members.iter().map(|(_, v)| v.len()).sum()
    }
}

/// Inverse distinctiveness: mean similarity of the target population to
/// images drawn from other concepts. Sampling picks a concept uniformly and
/// then one of its images uniformly, with replacement.
pub fn inverse_distinctiveness<T: Element>(
    target: &Vectors<T>,
    pool: &Pool<'_, T>,
    cfg: &DtConfig,
) -> Result<f64, MetricError> {
    if target.is_empty() {
        return Err(MetricError::EmptySet);
    }
    check_nonzero(target)?;
    for (_, v) in &pool.members {
        check_dims(target, v)?;
        check_nonzero(v)?;
    }
    let mean_to = |other: &[T]| -> f64 {
        target.rows().map(|e| sim(e, other)).sum::<f64>() / target.len() as f64
    };
    match cfg.mode {
        DtMode::Exhaustive => {
            let mut total = 0.0;
            let mut count = 0usize;
            for (_, v) in &pool.members {
                for other in v.rows() {
                    total += mean_to(other);
                    count += 1;
                }
            }
            Ok(total / count as f64)
        }
        DtMode::Sampled { draws } => {
            let m = draws.unwrap_or_else(|| default_draws(pool.images()));
            if m == 0 {
                return Err(MetricError::ZeroDraws);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            let mut total = 0.0;
            for _ in 0..m {
                let (_, set) = pool.members[rng.gen_range(0..pool.members.len())];
                let s = rng.gen_range(0..set.len());
                total += mean_to(set.row(s));
            }
            Ok(total / m as f64)
        }
    }
}
