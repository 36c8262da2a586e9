//! Robust aggregation: percentile clipping, server momentum, trimmed mean,
//! Krum, and the signature-gated secure pipeline in [`secure`].

pub mod secure;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::{l2_norm, GradientUpdate};

pub use secure::{
    open_submission, seal_update, verified_secure_aggregate, GlobalUpdate, Quantizer,
    SignedCipherUpdate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    Off,
    Static,
    Adaptive,
}

fn default_percentile() -> f64 {
    95.0
}

/// Norm clipping policy. `threshold` is used only in static mode,
/// `percentile` only in adaptive mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipPolicy {
    pub mode: ClipMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    #[serde(default)]
    pub momentum_beta: f64,
}

impl Default for ClipPolicy {
    fn default() -> Self {
        Self::adaptive(95.0)
    }
}

impl ClipPolicy {
    pub fn off() -> Self {
        ClipPolicy {
            mode: ClipMode::Off,
            threshold: None,
            percentile: default_percentile(),
            momentum_beta: 0.0,
        }
    }

    pub fn fixed(threshold: f64) -> Self {
        ClipPolicy {
            mode: ClipMode::Static,
            threshold: Some(threshold),
            ..Self::off()
        }
    }

    pub fn adaptive(percentile: f64) -> Self {
        ClipPolicy {
            mode: ClipMode::Adaptive,
            percentile,
            ..Self::off()
        }
    }

    pub fn with_momentum(self, beta: f64) -> Self {
        ClipPolicy {
            momentum_beta: beta,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::InvalidArgument {
                field: field.into(),
                reason,
            })
        };
        match self.mode {
            ClipMode::Static => match self.threshold {
                Some(t) if t > 0.0 && t.is_finite() => {}
                _ => return bad("threshold", "static mode needs a positive threshold".into()),
            },
            ClipMode::Adaptive | ClipMode::Off if self.threshold.is_some() => {
                return bad("threshold", "only allowed in static mode".into())
            }
            _ => {}
        }
        if self.mode == ClipMode::Adaptive && !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return bad("percentile", format!("{} is outside (0, 100]", self.percentile));
        }
        if !(0.0..1.0).contains(&self.momentum_beta) {
            return bad("momentum_beta", format!("{} is outside [0, 1)", self.momentum_beta));
        }
        Ok(())
    }
}

/// How verified updates are combined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggRule {
    Mean,
    TrimmedMean { fraction: f64 },
    Krum { f: usize },
    /// Unnormalized sum over contributors (the literal reading of the gated
    /// sum). Kept for comparison; the cohort size scales the result.
    Sum,
}

impl Default for AggRule {
    fn default() -> Self {
        AggRule::Mean
    }
}

impl AggRule {
    pub fn validate(&self) -> Result<()> {
        if let AggRule::TrimmedMean { fraction } = self {
            if !(0.0..0.5).contains(fraction) {
                return Err(Error::InvalidArgument {
                    field: "fraction".into(),
                    reason: format!("{fraction} is outside [0, 0.5)"),
                });
            }
        }
        Ok(())
    }
}

/// Nearest-rank percentile: the `⌈p/100 · n⌉`-th smallest value.
pub fn nearest_rank(values: &[f64], percentile: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard against 0.95 * 20 landing a hair above 19.
    let rank = ((percentile * n as f64 / 100.0) - 1e-9).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

/// The clipping threshold `policy` would apply to these updates.
pub fn clip_threshold(updates: &[GradientUpdate], policy: &ClipPolicy) -> Option<f64> {
    match policy.mode {
        ClipMode::Off => None,
        ClipMode::Static => policy.threshold,
        ClipMode::Adaptive => {
            let norms: Vec<f64> = updates.iter().map(GradientUpdate::norm).collect();
            nearest_rank(&norms, policy.percentile)
        }
    }
}

fn rescale_to(delta: &[f64], norm: f64, tau: f64) -> Vec<f64> {
    let mut factor = tau / norm;
    loop {
        let v: Vec<f64> = delta.iter().map(|x| x * factor).collect();
        if l2_norm(&v) <= tau {
            return v;
        }
        factor *= 1.0 - f64::EPSILON;
    }
}

/// Rescales every update whose norm exceeds the policy threshold down to
/// that threshold, keeping its direction. Others pass through unchanged.
pub fn adaptive_clip(updates: &[GradientUpdate], policy: &ClipPolicy) -> Result<Vec<GradientUpdate>> {
    if updates.is_empty() {
        return Err(Error::EmptyUpdates);
    }
    policy.validate()?;
    let Some(tau) = clip_threshold(updates, policy) else {
        return Ok(updates.to_vec());
    };
    updates
        .iter()
        .map(|u| {
            if u.norm() > tau {
                u.with_delta(rescale_to(u.delta(), u.norm(), tau))
            } else {
                Ok(u.clone())
            }
        })
        .collect()
}

/// `m' = beta·m + (1 − beta)·aggregate`; returns `(m', m')`.
pub fn momentum_normalize(momentum: &[f64], aggregate: &[f64], beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if momentum.len() != aggregate.len() {
        return Err(Error::DimensionMismatch {
            expected: momentum.len(),
            actual: aggregate.len(),
        });
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidArgument {
            field: "momentum_beta".into(),
            reason: format!("{beta} is outside [0, 1)"),
        });
    }
    let next: Vec<f64> = momentum
        .iter()
        .zip(aggregate)
        .map(|(m, g)| beta * m + (1.0 - beta) * g)
        .collect();
    Ok((next.clone(), next))
}

fn common_dim(updates: &[GradientUpdate]) -> Result<usize> {
    let first = updates.first().ok_or(Error::EmptyUpdates)?;
    let dim = first.delta().len();
    if let Some(u) = updates.iter().find(|u| u.delta().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: u.delta().len(),
        });
    }
    Ok(dim)
}

fn sorted_by_client(updates: &[GradientUpdate]) -> Vec<&GradientUpdate> {
    let mut v: Vec<&GradientUpdate> = updates.iter().collect();
    v.sort_by_key(|u| u.client_id());
    v
}

pub fn coordinate_sum(updates: &[GradientUpdate]) -> Result<Vec<f64>> {
    let dim = common_dim(updates)?;
    let mut acc = vec![0.0; dim];
    for u in sorted_by_client(updates) {
        for (a, x) in acc.iter_mut().zip(u.delta()) {
            *a += x;
        }
    }
    Ok(acc)
}

pub fn coordinate_mean(updates: &[GradientUpdate]) -> Result<Vec<f64>> {
    let n = updates.len() as f64;
    Ok(coordinate_sum(updates)?.into_iter().map(|v| v / n).collect())
}

/// Coordinatewise mean after dropping the `⌊fraction·n⌋` smallest and
/// largest values.
pub fn trimmed_mean(updates: &[GradientUpdate], fraction: f64) -> Result<Vec<f64>> {
    AggRule::TrimmedMean { fraction }.validate()?;
    let dim = common_dim(updates)?;
    let n = updates.len();
    let trimmed = (fraction * n as f64 + 1e-9).floor() as usize;
    if n <= 2 * trimmed {
        return Err(Error::OverTrimmed { n, trimmed });
    }
    let kept = (n - 2 * trimmed) as f64;
    Ok((0..dim)
        .map(|j| {
            let mut col: Vec<f64> = updates.iter().map(|u| u.delta()[j]).collect();
            col.sort_by(f64::total_cmp);
            col[trimmed..n - trimmed].iter().sum::<f64>() / kept
        })
        .collect())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Krum: the update whose `n − f − 2` nearest neighbours are closest in
/// summed squared distance. Ties go to the lowest client id.
pub fn krum(updates: &[GradientUpdate], f: usize) -> Result<GradientUpdate> {
    let n = updates.len();
    if n < 2 * f + 3 {
        return Err(Error::KrumPrecondition { n, f });
    }
    common_dim(updates)?;
    let ordered = sorted_by_client(updates);
    let neighbours = n - f - 2;
    let mut best: Option<(f64, &GradientUpdate)> = None;
    for (i, u) in ordered.iter().enumerate() {
        let mut d: Vec<f64> = ordered
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, v)| squared_distance(u.delta(), v.delta()))
            .collect();
        d.sort_by(f64::total_cmp);
        let score: f64 = d[..neighbours].iter().sum();
        if best.map_or(true, |(s, _)| score < s) {
            best = Some((score, u));
        }
    }
    Ok(best.expect("n >= 3").1.clone())
}

/// Clip per `policy`, then combine per `rule`.
pub fn aggregate(updates: &[GradientUpdate], rule: &AggRule, policy: &ClipPolicy) -> Result<Vec<f64>> {
    rule.validate()?;
    let clipped = adaptive_clip(updates, policy)?;
    match *rule {
        AggRule::Mean => coordinate_mean(&clipped),
        AggRule::Sum => coordinate_sum(&clipped),
        AggRule::TrimmedMean { fraction } => trimmed_mean(&clipped, fraction),
        AggRule::Krum { f } => krum(&clipped, f).map(GradientUpdate::into_delta),
    }
}
