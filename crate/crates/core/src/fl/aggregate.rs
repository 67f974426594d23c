//! Aggregation rules: plaintext baselines and the masked field sum.

use serde::{Deserialize, Serialize};

use super::metrics::{cosine_similarity, norm, squared_distance};
use super::model::ModelVector;
use super::FlError;
use crate::field::PrimeField;
use crate::fixed::FixedPointCodec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum AggregationRule {
    FedAvg,
    Krum { f: usize },
    Median,
    Bulyan { f: usize },
    FlTrust,
    /// Field sum of masked encodings; see [`masked_sum`].
    MaskedSum,
}

/// Aggregates plaintext models. `reference` is the server model used by FLTrust.
pub fn aggregate(
    rule: AggregationRule,
    models: &[ModelVector],
    reference: Option<&[f64]>,
) -> Result<ModelVector, FlError> {
    let d = check_models(models)?;
    match rule {
        AggregationRule::FedAvg => Ok(mean(models.iter().map(|m| m.as_slice()), d)),
        AggregationRule::Krum { f } => Ok(models[krum_index(models, f)?].clone()),
        AggregationRule::Median => Ok(coordinate_median(models, d)),
        AggregationRule::Bulyan { f } => bulyan(models, f, d),
        AggregationRule::FlTrust => {
            let r = reference.ok_or(FlError::MissingReference)?;
            fltrust(models, r)
        }
        AggregationRule::MaskedSum => Err(FlError::PlaintextMaskedSum),
    }
}

fn check_models(models: &[ModelVector]) -> Result<usize, FlError> {
    let d = models.first().ok_or(FlError::NoModels)?.len();
    for m in models {
        if m.len() != d {
            return Err(FlError::Dimension {
                expected: d,
                actual: m.len(),
            });
        }
    }
    Ok(d)
}

fn mean<'a>(models: impl Iterator<Item = &'a [f64]>, d: usize) -> ModelVector {
    let mut out = vec![0.0; d];
    let mut n = 0usize;
    for m in models {
        for (o, v) in out.iter_mut().zip(m) {
            *o += v;
        }
        n += 1;
    }
    out.iter_mut().for_each(|o| *o /= n as f64);
    out
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn coordinate_median(models: &[ModelVector], d: usize) -> ModelVector {
    let mut column = vec![0.0; models.len()];
    (0..d)
        .map(|j| {
            for (c, m) in column.iter_mut().zip(models) {
                *c = m[j];
            }
            median_of(&mut column)
        })
        .collect()
}

/// Index of the model with the smallest sum of squared distances to its
/// `n - f - 2` nearest peers. Ties go to the lowest index.
pub fn krum_index(models: &[ModelVector], f: usize) -> Result<usize, FlError> {
    let n = models.len();
    if n < 2 * f + 3 {
        return Err(FlError::TooFewModels {
            rule: "krum",
            needed: 2 * f + 3,
            got: n,
        });
    }
    let k = n - f - 2;
    let mut best = (f64::INFINITY, 0);
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| squared_distance(&models[i], &models[j]))
            .collect();
        dists.sort_by(|a, b| a.total_cmp(b));
        let score: f64 = dists[..k].iter().sum();
        if score < best.0 {
            best = (score, i);
        }
    }
    Ok(best.1)
}

/// Krum-select `n - 2f` models, then per coordinate average the `n - 4f`
/// values closest to the median. Needs `n >= 4f + 3`.
fn bulyan(models: &[ModelVector], f: usize, d: usize) -> Result<ModelVector, FlError> {
    let n = models.len();
    if n < 4 * f + 3 {
        return Err(FlError::TooFewModels {
            rule: "bulyan",
            needed: 4 * f + 3,
            got: n,
        });
    }
    let theta = n - 2 * f;
    let mut pool: Vec<ModelVector> = models.to_vec();
    let mut selected = Vec::with_capacity(theta);
    while selected.len() < theta {
        // Krum over the shrinking pool; fall back to f = 0 once it gets small
        let fk = f.min(pool.len().saturating_sub(3) / 2);
        let i = krum_index(&pool, fk)?;
        selected.push(pool.swap_remove(i));
    }
    let beta = theta - 2 * f;
    let mut column = vec![0.0; theta];
    Ok((0..d)
        .map(|j| {
            for (c, m) in column.iter_mut().zip(&selected) {
                *c = m[j];
            }
            let med = median_of(&mut column);
            column.sort_by(|a, b| (a - med).abs().total_cmp(&(b - med).abs()));
            column[..beta].iter().sum::<f64>() / beta as f64
        })
        .collect())
}

/// `TS_i = max(0, cos(w_i, w_S))`, zero when either norm vanishes.
pub fn trust_score(model: &[f64], reference: &[f64]) -> f64 {
    cosine_similarity(model, reference).map_or(0.0, |c| c.max(0.0))
}

/// Trust-weighted mean of norm-matched models; returns the reference itself
/// when every trust score is zero.
fn fltrust(models: &[ModelVector], reference: &[f64]) -> Result<ModelVector, FlError> {
    let d = reference.len();
    if models[0].len() != d {
        return Err(FlError::Dimension {
            expected: d,
            actual: models[0].len(),
        });
    }
    let ref_norm = norm(reference);
    let mut out = vec![0.0; d];
    let mut total = 0.0;
    for m in models {
        let ts = trust_score(m, reference);
        if ts == 0.0 {
            continue;
        }
        let scale = ts * ref_norm / norm(m);
        for (o, v) in out.iter_mut().zip(m) {
            *o += scale * v;
        }
        total += ts;
    }
    if total == 0.0 {
        return Ok(reference.to_vec());
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(out)
}

/// Masked models summed in the field; division by `count` happens after
/// unmasking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSum<F: PrimeField> {
    pub sum: Vec<F>,
    pub count: usize,
}

pub fn masked_sum<F: PrimeField>(masked: &[Vec<F>]) -> Result<EncodedSum<F>, FlError> {
    let d = masked.first().ok_or(FlError::NoModels)?.len();
    let mut sum = vec![F::ZERO; d];
    for m in masked {
        if m.len() != d {
            return Err(FlError::Dimension {
                expected: d,
                actual: m.len(),
            });
        }
        for (s, v) in sum.iter_mut().zip(m) {
            *s += *v;
        }
    }
    Ok(EncodedSum {
        sum,
        count: masked.len(),
    })
}

/// `encode(w) + r`.
pub fn mask_model<F: PrimeField>(codec: &FixedPointCodec, w: &[f64], r: &[F]) -> Result<Vec<F>, FlError> {
    if w.len() != r.len() {
        return Err(FlError::Dimension {
            expected: r.len(),
            actual: w.len(),
        });
    }
    Ok(codec
        .encode_vec::<F>(w)?
        .into_iter()
        .zip(r)
        .map(|(a, b)| a + *b)
        .collect())
}

/// Removes `count * r` and returns the real-valued mean. Each unmasked
/// coordinate must lift to at most `count * floor(k W_max)` in magnitude,
/// otherwise the sum was tampered with or the mask is wrong.
pub fn unmask_global<F: PrimeField>(
    encoded: &EncodedSum<F>,
    r: &[F],
    codec: &FixedPointCodec,
) -> Result<ModelVector, FlError> {
    if encoded.count == 0 {
        return Err(FlError::NoModels);
    }
    if r.len() != encoded.sum.len() {
        return Err(FlError::Dimension {
            expected: encoded.sum.len(),
            actual: r.len(),
        });
    }
    let count = F::from_u64(encoded.count as u64);
    let limit = num_bigint::BigInt::from(codec.max_encoded_weight()) * encoded.count;
    encoded
        .sum
        .iter()
        .zip(r)
        .enumerate()
        .map(|(j, (s, rj))| {
            let lift = (*s - count * *rj).signed_lift();
            if lift.magnitude() > limit.magnitude() {
                return Err(FlError::UnmaskRange { coordinate: j });
            }
            let v = num_traits::ToPrimitive::to_f64(&lift).expect("bounded");
            Ok(v / codec.scale() / encoded.count as f64)
        })
        .collect()
}
