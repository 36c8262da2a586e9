//! Local training, evaluation and global-update application for a
//! logistic-regression threat classifier, plus the synthetic data it trains
//! on.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labelled feature vectors. Label 1 is malicious, 0 benign.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                actual: labels.len(),
            });
        }
        if let Some(row) = features.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: row.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidArgument {
                field: "labels".into(),
                reason: "labels must be 0 or 1".into(),
            });
        }
        Ok(Dataset {
            dim,
            features,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Same features, every label replaced by `1 - y`.
    pub fn with_flipped_labels(&self) -> Dataset {
        Dataset {
            dim: self.dim,
            features: self.features.clone(),
            labels: self.labels.iter().map(|&y| 1 - y).collect(),
        }
    }

    /// Concatenates datasets of equal dimension.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let dim = parts.first().map(|d| d.dim).ok_or(Error::EmptyDataset)?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.dim,
                });
            }
            features.extend(p.features.iter().cloned());
            labels.extend_from_slice(&p.labels);
        }
        Dataset::new(dim, features, labels)
    }

    /// CSV with header `f0,…,f{d-1},label`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        out.write_record(&header).map_err(csv_err)?;
        for (x, y) in self.features.iter().zip(&self.labels) {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let dim = header.len().checked_sub(1).ok_or_else(|| Error::Malformed {
            what: "dataset csv",
            reason: "missing header".into(),
        })?;
        let expected: Vec<String> = (0..dim)
            .map(|i| format!("f{i}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Malformed {
                what: "dataset csv",
                reason: format!("header must be f0..f{},label", dim.saturating_sub(1)),
            });
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Malformed {
                    what: "dataset csv",
                    reason: e.to_string(),
                })
            };
            let row = rec.iter().take(dim).map(parse).collect::<Result<Vec<_>>>()?;
            let label = rec.get(dim).unwrap_or("").parse::<u8>().map_err(|e| Error::Malformed {
                what: "dataset csv",
                reason: e.to_string(),
            })?;
            features.push(row);
            labels.push(label);
        }
        Dataset::new(dim, features, labels)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        ModelParams {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `weights ∥ bias`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        let (bias, weights) = flat.split_last().ok_or(Error::DimensionMismatch {
            expected: 1,
            actual: 0,
        })?;
        Ok(ModelParams {
            weights: weights.to_vec(),
            bias: *bias,
        })
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// One participant's parameter delta `weights ∥ bias` for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientUpdate {
    client_id: u32,
    round: u32,
    delta: Vec<f64>,
    norm: f64,
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl GradientUpdate {
    pub fn new(client_id: u32, round: u32, delta: Vec<f64>) -> Result<Self> {
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient update"));
        }
        let norm = l2_norm(&delta);
        Ok(GradientUpdate {
            client_id,
            round,
            delta,
            norm,
        })
    }

    pub fn client_id(&self) -> u32 {
        self.client_id
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn into_delta(self) -> Vec<f64> {
        self.delta
    }

    /// Same identity, new payload.
    pub fn with_delta(&self, delta: Vec<f64>) -> Result<Self> {
        Self::new(self.client_id, self.round, delta)
    }

    /// Little-endian f64 encoding of the delta, for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.delta.len());
        out.extend_from_slice(&self.client_id.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        for v in &self.delta {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub local_epochs: u32,
    pub batch_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.5,
            local_epochs: 1,
            batch_size: 16,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::InvalidArgument {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be a positive finite number");
        }
        if self.local_epochs < 1 {
            return bad("local_epochs", "must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size", "must be at least 1");
        }
        Ok(())
    }
}

/// Synthetic generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub samples_per_client: usize,
    pub dim: usize,
    pub separation: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            samples_per_client: 64,
            dim: 8,
            separation: 4.0,
        }
    }
}

/// Standard deviation of each client's shared offset of both class means.
const CLIENT_JITTER: f64 = 0.5;

/// Per-client Gaussian blobs: benign around `-μ`, malicious around `+μ`
/// with `‖2μ‖ = separation`, unit isotropic noise. Each client shifts both
/// class means by its own jitter and draws its own malicious fraction in
/// `[0.3, 0.7]`, which makes the shards non-IID.
pub fn generate_synthetic_threat_data(
    seed: u64,
    n_clients: usize,
    samples_per_client: usize,
    dim: usize,
    separation: f64,
) -> Result<Vec<Dataset>> {
    let invalid = |field: &str, reason: &str| Error::InvalidArgument {
        field: field.into(),
        reason: reason.into(),
    };
    if n_clients < 1 {
        return Err(invalid("n_clients", "must be at least 1"));
    }
    if samples_per_client < 1 {
        return Err(invalid("samples_per_client", "must be at least 1"));
    }
    if dim < 2 {
        return Err(invalid("d", "must be at least 2"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(invalid("separation", "must be a finite number >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let mut direction: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
    let len = l2_norm(&direction).max(f64::MIN_POSITIVE);
    direction.iter_mut().for_each(|v| *v *= separation / 2.0 / len);

    (0..n_clients)
        .map(|_| {
            let jitter: Vec<f64> = (0..dim).map(|_| CLIENT_JITTER * normal(&mut rng)).collect();
            let malicious_frac = 0.3 + 0.4 * rng.gen::<f64>();
            let mut features = Vec::with_capacity(samples_per_client);
            let mut labels = Vec::with_capacity(samples_per_client);
            for _ in 0..samples_per_client {
                let y = u8::from(rng.gen::<f64>() < malicious_frac);
                let sign = if y == 1 { 1.0 } else { -1.0 };
                let x = (0..dim)
                    .map(|i| sign * direction[i] + jitter[i] + normal(&mut rng))
                    .collect();
                features.push(x);
                labels.push(y);
            }
            Dataset::new(dim, features, labels)
        })
        .collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_dims(params: &ModelParams, data: &Dataset) -> Result<()> {
    if params.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            actual: data.dim(),
        });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

fn batch_gradient(params: &ModelParams, data: &Dataset, idx: &[usize]) -> Vec<f64> {
    let d = params.dim();
    let mut g = vec![0.0; d + 1];
    for &i in idx {
        let x = &data.features[i];
        let residual = sigmoid(params.logit(x)) - data.labels[i] as f64;
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += residual * xj;
        }
        g[d] += residual;
    }
    let scale = 1.0 / idx.len() as f64;
    g.iter_mut().for_each(|v| *v *= scale);
    g
}

/// Full-batch gradient of the mean binary cross-entropy, `weights ∥ bias`.
pub fn loss_gradient(params: &ModelParams, data: &Dataset) -> Result<Vec<f64>> {
    check_dims(params, data)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    Ok(batch_gradient(params, data, &idx))
}

/// Mini-batch SGD on the logistic loss from `params`; the update carries the
/// parameter change. Batches are reshuffled every epoch from `rng_seed`.
pub fn local_train_step(
    params: &ModelParams,
    data: &Dataset,
    cfg: &TrainingConfig,
    rng_seed: u64,
    client_id: u32,
    round: u32,
) -> Result<GradientUpdate> {
    cfg.validate()?;
    check_dims(params, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut current = params.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let g = batch_gradient(&current, data, batch);
            for (w, gj) in current.weights.iter_mut().zip(&g) {
                *w -= cfg.learning_rate * gj;
            }
            current.bias -= cfg.learning_rate * g[params.dim()];
        }
    }
    let delta = current
        .to_flat()
        .iter()
        .zip(params.to_flat())
        .map(|(after, before)| after - before)
        .collect();
    GradientUpdate::new(client_id, round, delta)
}

/// `params + agg`, elementwise over `weights ∥ bias`.
pub fn apply_global_update(params: &ModelParams, agg: &[f64]) -> Result<ModelParams> {
    if agg.len() != params.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: params.dim() + 1,
            actual: agg.len(),
        });
    }
    if agg.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("aggregate"));
    }
    let flat: Vec<f64> = params.to_flat().iter().zip(agg).map(|(p, a)| p + a).collect();
    ModelParams::from_flat(&flat)
}

/// Clamp keeping log-probabilities finite.
const PROB_EPS: f64 = 1e-12;

/// Accuracy (predict malicious when `σ(w·x + b) >= 0.5`) and mean binary
/// cross-entropy.
pub fn evaluate(params: &ModelParams, data: &Dataset) -> Result<(f64, f64)> {
    check_dims(params, data)?;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let p = sigmoid(params.logit(x));
        let predicted = u8::from(p >= 0.5);
        correct += usize::from(predicted == y);
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        loss -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    let n = data.len() as f64;
    Ok((correct as f64 / n, loss / n))
}
