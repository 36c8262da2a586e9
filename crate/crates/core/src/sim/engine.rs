//! The round engine: local training, upload, verified aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{CryptoSuite, ScenarioConfig};
use super::transcript::{tag, Phase, PhaseTimings, RoundTranscript, SessionInfo, WireMessage, AGGREGATOR};
use crate::adversary::rsa::decrypt_payload;
use crate::adversary::{byzantine_transform, rsa_toy_keygen, AttackKind, RsaToyKey};
use crate::agg::{aggregate, momentum_normalize, seal_update, verified_secure_aggregate, GlobalUpdate, Quantizer, SignedCipherUpdate};
use crate::dp::dp_sanitize;
use crate::error::{Error, Result};
use crate::fl::{apply_global_update, evaluate, generate_synthetic_threat_data, local_train_step, Dataset, GradientUpdate, ModelParams};
use crate::hash::{derive_seed, derive_u64};
use crate::kem::{kem_keygen, KemKeyPair};
use crate::sig::{sig_keygen, SigKeyPair, SigParams, SigPublicKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub loss: f64,
    pub accuracy: f64,
    pub contributors: usize,
    pub excluded: usize,
    pub bytes: usize,
    pub phase_a_s: Option<f64>,
    pub phase_b_s: Option<f64>,
    pub phase_c_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub accuracy: f64,
    pub loss: f64,
    pub overhead_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub crypto_suite: CryptoSuite,
    pub setup_bytes: usize,
    pub rounds: Vec<RoundMetrics>,
    #[serde(rename = "final")]
    pub final_: FinalMetrics,
}

impl Metrics {
    /// Drops wall-clock fields, leaving a pure function of the config.
    pub fn without_timings(&self) -> Metrics {
        let mut m = self.clone();
        for r in &mut m.rounds {
            r.phase_a_s = None;
            r.phase_b_s = None;
            r.phase_c_s = None;
        }
        m
    }

    /// Phase B + C wall time summed over rounds.
    pub fn crypto_seconds(&self) -> f64 {
        self.rounds
            .iter()
            .map(|r| r.phase_b_s.unwrap_or(0.0) + r.phase_c_s.unwrap_or(0.0))
            .sum()
    }

    /// Full round wall time (all three phases) summed over rounds.
    pub fn round_seconds(&self) -> f64 {
        self.rounds
            .iter()
            .map(|r| r.phase_a_s.unwrap_or(0.0) + r.phase_b_s.unwrap_or(0.0) + r.phase_c_s.unwrap_or(0.0))
            .sum()
    }
}

/// What a client actually sent in a round, kept for test assertions only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentUpdate {
    pub round: u32,
    pub client_id: u32,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config_hash: [u8; 32],
    pub metrics: Metrics,
    pub transcripts: Vec<RoundTranscript>,
    pub ground_truth: Vec<SentUpdate>,
    pub final_params: ModelParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundPhase {
    /// Local training, attacks and DP.
    A,
    /// Quantize, encrypt, sign and post.
    B,
    /// Verify, aggregate, update and broadcast.
    C,
}

impl fmt::Display for RoundPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RoundPhase::A => "A",
            RoundPhase::B => "B",
            RoundPhase::C => "C",
        };
        f.write_str(s)
    }
}

/// One round in flight. Created by [`Simulation::begin_round`].
#[derive(Debug, Clone)]
pub struct RoundState {
    round: u32,
    next: Option<RoundPhase>,
    updates: Vec<GradientUpdate>,
    uploads: Vec<WireMessage>,
    outcome: Option<GlobalUpdate>,
    timings: PhaseTimings,
}

impl RoundState {
    pub fn round(&self) -> u32 {
        self.round
    }

    /// Phase A output.
    pub fn updates(&self) -> &[GradientUpdate] {
        &self.updates
    }

    /// Phase B output, in client order.
    pub fn uploads(&self) -> &[WireMessage] {
        &self.uploads
    }

    /// The bus between B and C, for tampering in tests.
    pub fn uploads_mut(&mut self) -> &mut Vec<WireMessage> {
        &mut self.uploads
    }

    /// Phase C output.
    pub fn outcome(&self) -> Option<&GlobalUpdate> {
        self.outcome.as_ref()
    }

    pub fn is_complete(&self) -> bool {
        self.next.is_none()
    }
}

enum SuiteKeys {
    Plaintext,
    Rsa(RsaToyKey),
    Pqc {
        kem: KemKeyPair,
        signers: Vec<SigKeyPair>,
        verify_keys: BTreeMap<u32, SigPublicKey>,
    },
}

pub struct Simulation {
    config: ScenarioConfig,
    quantizer: Quantizer,
    /// Clean shards, used for evaluation.
    shards: Vec<Dataset>,
    /// What each client trains on (label-flipped for those attackers).
    train_sets: Vec<Dataset>,
    eval: Dataset,
    keys: SuiteKeys,
    params: ModelParams,
    momentum: Vec<f64>,
    transcripts: Vec<RoundTranscript>,
    ground_truth: Vec<SentUpdate>,
    metrics: Vec<RoundMetrics>,
}

fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn bytes_f64(bytes: &[u8]) -> Option<Vec<f64>> {
    (bytes.len() % 8 == 0).then(|| {
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    })
}

impl Simulation {
    /// Generates data and keys and records the setup round.
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let quantizer = config.quantizer()?;
        let shards = generate_synthetic_threat_data(
            derive_u64("pqfl/sim/data", seed, &[]),
            config.n_clients,
            config.data.samples_per_client,
            config.data.dim,
            config.data.separation,
        )?;
        let train_sets = shards
            .iter()
            .enumerate()
            .map(|(i, d)| {
                if config.attack.kind == AttackKind::LabelFlip && config.attack.is_attacker(i as u32) {
                    d.with_flipped_labels()
                } else {
                    d.clone()
                }
            })
            .collect();
        let eval = Dataset::concat(&shards)?;

        let mut setup = RoundTranscript::new(0);
        let session = SessionInfo {
            suite_code: config.crypto_suite.code(),
            quant_scale: config.quant_scale,
            dim: config.data.dim as u32,
            n_clients: config.n_clients as u32,
        };
        setup
            .messages
            .push(WireMessage::new(AGGREGATOR, Phase::Setup, tag::SESSION, &session.to_bytes()));
        let keys = match config.crypto_suite {
            CryptoSuite::Plaintext => SuiteKeys::Plaintext,
            CryptoSuite::RsaToy => {
                let key = rsa_toy_keygen(config.rsa_bits, derive_u64("pqfl/sim/rsa", seed, &[]))?;
                setup.messages.push(WireMessage::new(
                    AGGREGATOR,
                    Phase::Setup,
                    tag::RSA_PUBLIC_KEY,
                    &key.public().to_bytes(),
                ));
                SuiteKeys::Rsa(key)
            }
            CryptoSuite::Pqc => {
                let kem = kem_keygen(config.kem_params(), &derive_seed("pqfl/sim/kem", seed, &[]))?;
                let mut body = vec![config.kem_rank as u8];
                body.extend_from_slice(&kem.public().to_bytes());
                setup
                    .messages
                    .push(WireMessage::new(AGGREGATOR, Phase::Setup, tag::KEM_PUBLIC_KEY, &body));
                let signers = config
                    .exec
                    .map_range(config.n_clients, |i| {
                        sig_keygen(SigParams::default(), &derive_seed("pqfl/sim/sig", seed, &[i as u64]))
                    })
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                let mut verify_keys = BTreeMap::new();
                for (i, s) in signers.iter().enumerate() {
                    setup.messages.push(WireMessage::new(
                        i as u32,
                        Phase::Setup,
                        tag::SIG_PUBLIC_KEY,
                        &s.public().to_bytes(),
                    ));
                    verify_keys.insert(i as u32, s.public().clone());
                }
                SuiteKeys::Pqc {
                    kem,
                    signers,
                    verify_keys,
                }
            }
        };
        let dim = config.data.dim;
        Ok(Simulation {
            quantizer,
            shards,
            train_sets,
            eval,
            keys,
            params: ModelParams::zeros(dim),
            momentum: vec![0.0; dim + 1],
            transcripts: vec![setup],
            ground_truth: Vec::new(),
            metrics: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn shards(&self) -> &[Dataset] {
        &self.shards
    }

    pub fn transcripts(&self) -> &[RoundTranscript] {
        &self.transcripts
    }

    /// Seed client `client` trains with in `round`.
    pub fn training_seed(&self, round: u32, client: u32) -> u64 {
        derive_u64("pqfl/sim/train", self.config.seed, &[round as u64, client as u64])
    }

    pub fn rounds_done(&self) -> u32 {
        self.metrics.len() as u32
    }

    pub fn begin_round(&self) -> RoundState {
        RoundState {
            round: self.rounds_done() + 1,
            next: Some(RoundPhase::A),
            updates: Vec::new(),
            uploads: Vec::new(),
            outcome: None,
            timings: PhaseTimings::default(),
        }
    }

    /// Runs one phase. Phases go A, B, C within a round, and rounds go in order.
    pub fn run_phase(&mut self, mut state: RoundState, phase: RoundPhase) -> Result<RoundState> {
        let expected_round = self.rounds_done() + 1;
        if state.round != expected_round {
            return Err(Error::PhaseOutOfOrder {
                expected: format!("round {expected_round}"),
                got: format!("round {}", state.round),
            });
        }
        if state.next != Some(phase) {
            return Err(Error::PhaseOutOfOrder {
                expected: state.next.map_or("none (round complete)".into(), |p| p.to_string()),
                got: phase.to_string(),
            });
        }
        let start = Instant::now();
        match phase {
            RoundPhase::A => {
                state.updates = self.local_training(state.round)?;
                state.timings.local_training_s = start.elapsed().as_secs_f64();
                state.next = Some(RoundPhase::B);
            }
            RoundPhase::B => {
                state.uploads = self.upload(state.round, &state.updates)?;
                state.timings.upload_s = start.elapsed().as_secs_f64();
                state.next = Some(RoundPhase::C);
            }
            RoundPhase::C => {
                let outcome = self.aggregate(state.round, &state.uploads)?;
                let (m, emitted) = momentum_normalize(&self.momentum, &outcome.vector, self.config.clip.momentum_beta)?;
                let params = apply_global_update(&self.params, &emitted)?;
                let broadcast = WireMessage::new(AGGREGATOR, Phase::Broadcast, tag::BROADCAST, &f64_bytes(&params.to_flat()));
                state.timings.aggregation_s = start.elapsed().as_secs_f64();

                self.momentum = m;
                self.params = params;
                let (accuracy, loss) = evaluate(&self.params, &self.eval)?;
                let mut transcript = RoundTranscript::new(state.round);
                transcript.messages = state.uploads.clone();
                transcript.messages.push(broadcast);
                transcript.timings = Some(state.timings);
                self.ground_truth.extend(state.updates.iter().map(|u| SentUpdate {
                    round: state.round,
                    client_id: u.client_id(),
                    delta: u.delta().to_vec(),
                }));
                self.metrics.push(RoundMetrics {
                    round: state.round,
                    loss,
                    accuracy,
                    contributors: outcome.contributors.len(),
                    excluded: outcome.excluded.len(),
                    bytes: transcript.bytes_on_wire(),
                    phase_a_s: Some(state.timings.local_training_s),
                    phase_b_s: Some(state.timings.upload_s),
                    phase_c_s: Some(state.timings.aggregation_s),
                });
                self.transcripts.push(transcript);
                state.outcome = Some(outcome);
                state.next = None;
            }
        }
        Ok(state)
    }

    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let mut state = self.begin_round();
        for phase in [RoundPhase::A, RoundPhase::B, RoundPhase::C] {
            state = self.run_phase(state, phase)?;
        }
        Ok(self.metrics.last().cloned().expect("round recorded"))
    }

    pub fn finish(self) -> ScenarioRun {
        let last = self.metrics.last();
        let final_ = FinalMetrics {
            accuracy: last.map_or(0.0, |m| m.accuracy),
            loss: last.map_or(0.0, |m| m.loss),
            overhead_ratio: None,
        };
        let metrics = Metrics {
            crypto_suite: self.config.crypto_suite,
            setup_bytes: self.transcripts[0].bytes_on_wire(),
            rounds: self.metrics,
            final_,
        };
        ScenarioRun {
            config_hash: self.config.hash(),
            metrics,
            transcripts: self.transcripts,
            ground_truth: self.ground_truth,
            final_params: self.params,
        }
    }

    fn local_training(&self, round: u32) -> Result<Vec<GradientUpdate>> {
        let cfg = &self.config;
        cfg.exec
            .map_range(cfg.n_clients, |i| {
                let id = i as u32;
                let path = [round as u64, i as u64];
                let honest = local_train_step(
                    &self.params,
                    &self.train_sets[i],
                    &cfg.training,
                    self.training_seed(round, id),
                    id,
                    round,
                )?;
                let sent = if cfg.attack.is_attacker(id) && cfg.attack.kind != AttackKind::LabelFlip {
                    byzantine_transform(&honest, &cfg.attack, derive_u64("pqfl/sim/attack", cfg.seed, &path))?
                } else {
                    honest
                };
                dp_sanitize(&sent, &cfg.dp, derive_u64("pqfl/sim/dp", cfg.seed, &path))
            })
            .into_iter()
            .collect()
    }

    fn upload(&self, round: u32, updates: &[GradientUpdate]) -> Result<Vec<WireMessage>> {
        let seed = self.config.seed;
        self.config
            .exec
            .map(updates, |u| {
                let id = u.client_id();
                let (body_tag, body) = match &self.keys {
                    SuiteKeys::Plaintext => (tag::UPLOAD_PLAINTEXT, f64_bytes(u.delta())),
                    SuiteKeys::Rsa(key) => (tag::UPLOAD_RSA, key.public().encrypt_payload(&self.quantizer.encode(u.delta()))?),
                    SuiteKeys::Pqc { kem, signers, .. } => {
                        let sub = seal_update(
                            u,
                            &self.quantizer,
                            kem.public(),
                            &signers[id as usize],
                            &derive_seed("pqfl/sim/seal", seed, &[round as u64, id as u64]),
                        )?;
                        (tag::UPLOAD_PQC, sub.to_bytes())
                    }
                };
                Ok(WireMessage::new(id, Phase::Upload, body_tag, &body))
            })
            .into_iter()
            .collect()
    }

    /// Reads only what is on the bus. Uploads that do not parse, claim the
    /// wrong sender or round, or fail verification are excluded.
    fn aggregate(&self, round: u32, uploads: &[WireMessage]) -> Result<GlobalUpdate> {
        let cfg = &self.config;
        let mut excluded = Vec::new();
        let result = match &self.keys {
            SuiteKeys::Pqc { kem, verify_keys, .. } => {
                let mut subs = Vec::new();
                for m in uploads {
                    let sub = (m.body_tag() == Some(tag::UPLOAD_PQC))
                        .then(|| SignedCipherUpdate::from_bytes(m.body()).ok())
                        .flatten()
                        .filter(|s| s.client_id == m.sender && s.round == round && verify_keys.contains_key(&s.client_id));
                    match sub {
                        Some(s) => subs.push(s),
                        None => excluded.push(m.sender),
                    }
                }
                if subs.is_empty() {
                    return Err(Error::NoVerifiedContributors);
                }
                verified_secure_aggregate(&subs, verify_keys, kem, &cfg.agg_rule, &cfg.clip, &self.quantizer, cfg.exec)?
            }
            keys => {
                let mut updates = Vec::new();
                for m in uploads {
                    let delta = match (keys, m.body_tag()) {
                        (SuiteKeys::Plaintext, Some(tag::UPLOAD_PLAINTEXT)) => bytes_f64(m.body()),
                        (SuiteKeys::Rsa(key), Some(tag::UPLOAD_RSA)) => decrypt_payload(&key.public(), key.d_priv, m.body())
                            .ok()
                            .and_then(|p| self.quantizer.decode(&p)),
                        _ => None,
                    };
                    match delta.and_then(|d| GradientUpdate::new(m.sender, round, d).ok()) {
                        Some(u) if u.delta().len() == cfg.data.dim + 1 => updates.push(u),
                        _ => excluded.push(m.sender),
                    }
                }
                if updates.is_empty() {
                    return Err(Error::NoVerifiedContributors);
                }
                updates.sort_by_key(GradientUpdate::client_id);
                let vector = aggregate(&updates, &cfg.agg_rule, &cfg.clip)?;
                GlobalUpdate {
                    vector,
                    contributors: updates.iter().map(GradientUpdate::client_id).collect(),
                    excluded: Vec::new(),
                }
            }
        };
        excluded.extend(result.excluded);
        excluded.sort_unstable();
        if result.vector.len() != cfg.data.dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: cfg.data.dim + 1,
                actual: result.vector.len(),
            });
        }
        Ok(GlobalUpdate { excluded, ..result })
    }
}

/// Runs every round of a scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun> {
    let mut sim = Simulation::new(config.clone())?;
    for _ in 0..config.rounds {
        sim.run_round()?;
    }
    Ok(sim.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    /// `(T_variant − T_base) / T_base` on median phase B+C time.
    pub ratio: f64,
    pub base_seconds: Vec<f64>,
    pub variant_seconds: Vec<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

const BLOCK_SECONDS: f64 = 0.5;
const MAX_BLOCK: usize = 100;

/// Median over `reps` paired timings of two configs that differ only in
/// crypto settings; the ratio is relative full-round latency overhead.
pub fn measure_overhead_reps(base: &ScenarioConfig, variant: &ScenarioConfig, reps: usize) -> Result<OverheadReport> {
    if !base.same_except_crypto(variant) {
        return Err(Error::InvalidArgument {
            field: "config_variant".into(),
            reason: "configs differ outside crypto_suite, kem_rank and rsa_bits".into(),
        });
    }
    if reps == 0 {
        return Err(Error::InvalidArgument {
            field: "reps".into(),
            reason: "at least one repetition".into(),
        });
    }
    // Each repetition times a block of base runs right next to one variant
    // run and takes their ratio, so slow drift in machine speed cancels out
    // within a pair. Cheap bases get enough runs per block to sample about
    // half a second.
    let seconds = |c: &ScenarioConfig| -> Result<f64> { Ok(run_scenario(c)?.metrics.round_seconds()) };
    let warm = seconds(base)?.max(1e-6);
    seconds(variant)?;
    let block = ((BLOCK_SECONDS / warm).ceil() as usize).clamp(1, MAX_BLOCK);
    let mut base_seconds = Vec::with_capacity(reps * block);
    let mut variant_seconds = Vec::with_capacity(reps);
    let mut ratios = Vec::with_capacity(reps);
    for _ in 0..reps {
        let b: Vec<f64> = (0..block).map(|_| seconds(base)).collect::<Result<_>>()?;
        let v = seconds(variant)?;
        let bm = median(&b);
        ratios.push((v - bm) / bm);
        base_seconds.extend(b);
        variant_seconds.push(v);
    }
    Ok(OverheadReport {
        ratio: median(&ratios),
        base_seconds,
        variant_seconds,
    })
}

pub fn measure_overhead(base: &ScenarioConfig, variant: &ScenarioConfig) -> Result<OverheadReport> {
    measure_overhead_reps(base, variant, 9)
}
