//! Recorded wire traffic and its file encoding.
//!
//! File layout: `"PQFLTR1" ∥ config hash (32) ∥ count u32`, then per round
//! `round u32 ∥ messages u32` followed by records of
//! `phase u8 ∥ sender u32 ∥ len u32 ∥ bytes`. Integers are little-endian.
//! Timings are not stored, so files are pure functions of the scenario.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"PQFLTR1";

/// Sender id of the aggregator.
pub const AGGREGATOR: u32 = u32::MAX;

/// Body tags, first byte of every message.
pub mod tag {
    pub const SESSION: u8 = 0x00;
    pub const KEM_PUBLIC_KEY: u8 = 0x01;
    pub const SIG_PUBLIC_KEY: u8 = 0x02;
    pub const RSA_PUBLIC_KEY: u8 = 0x03;
    pub const UPLOAD_PLAINTEXT: u8 = 0x10;
    pub const UPLOAD_RSA: u8 = 0x11;
    pub const UPLOAD_PQC: u8 = 0x12;
    pub const BROADCAST: u8 = 0x20;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    Upload,
    Broadcast,
}

impl Phase {
    pub fn code(self) -> u8 {
        match self {
            Phase::Setup => 0,
            Phase::Upload => 1,
            Phase::Broadcast => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Phase::Setup),
            1 => Some(Phase::Upload),
            2 => Some(Phase::Broadcast),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub sender: u32,
    pub phase: Phase,
    pub bytes: Vec<u8>,
}

impl WireMessage {
    pub fn new(sender: u32, phase: Phase, body_tag: u8, body: &[u8]) -> Self {
        let mut bytes = Vec::with_capacity(1 + body.len());
        bytes.push(body_tag);
        bytes.extend_from_slice(body);
        WireMessage { sender, phase, bytes }
    }

    pub fn body_tag(&self) -> Option<u8> {
        self.bytes.first().copied()
    }

    pub fn body(&self) -> &[u8] {
        self.bytes.get(1..).unwrap_or(&[])
    }
}

/// Public session parameters, the first setup message of every scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionInfo {
    pub suite_code: u8,
    pub quant_scale: f64,
    pub dim: u32,
    pub n_clients: u32,
}

impl SessionInfo {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17);
        out.push(self.suite_code);
        out.extend_from_slice(&self.quant_scale.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(&self.n_clients.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 17 {
            return Err(Error::Malformed {
                what: "session info",
                reason: format!("expected 17 bytes, got {}", bytes.len()),
            });
        }
        Ok(SessionInfo {
            suite_code: bytes[0],
            quant_scale: f64::from_le_bytes(bytes[1..9].try_into().unwrap()),
            dim: u32::from_le_bytes(bytes[9..13].try_into().unwrap()),
            n_clients: u32::from_le_bytes(bytes[13..17].try_into().unwrap()),
        })
    }
}

/// Wall-clock seconds spent in each phase of a round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub local_training_s: f64,
    pub upload_s: f64,
    pub aggregation_s: f64,
}

/// Everything that crossed the bus in one round. Round 0 is key setup.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub round: u32,
    pub messages: Vec<WireMessage>,
    /// `None` for transcripts loaded from disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<PhaseTimings>,
}

impl RoundTranscript {
    pub fn new(round: u32) -> Self {
        RoundTranscript {
            round,
            ..Default::default()
        }
    }

    pub fn bytes_on_wire(&self) -> usize {
        self.messages.iter().map(|m| m.bytes.len()).sum()
    }
}

pub fn encode_transcripts(config_hash: &[u8; 32], transcripts: &[RoundTranscript]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(config_hash);
    out.extend_from_slice(&(transcripts.len() as u32).to_le_bytes());
    for t in transcripts {
        out.extend_from_slice(&t.round.to_le_bytes());
        out.extend_from_slice(&(t.messages.len() as u32).to_le_bytes());
        for m in &t.messages {
            out.push(m.phase.code());
            out.extend_from_slice(&m.sender.to_le_bytes());
            out.extend_from_slice(&(m.bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&m.bytes);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Parses a transcript file. Errors name the first record (counted across
/// the whole file from 0) that is cut short or malformed.
pub fn decode_transcripts(bytes: &[u8]) -> Result<([u8; 32], Vec<RoundTranscript>)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len()) != Some(&MAGIC[..]) {
        return Err(Error::Transcript("bad magic (expected PQFLTR1)".into()));
    }
    let hash: [u8; 32] = c
        .take(32)
        .ok_or_else(|| Error::Transcript("truncated header".into()))?
        .try_into()
        .unwrap();
    let count = c.u32().ok_or_else(|| Error::Transcript("truncated header".into()))?;
    let mut transcripts = Vec::new();
    let mut record = 0usize;
    for i in 0..count {
        let truncated_round = || Error::Transcript(format!("truncated round header {i} (before record {record})"));
        let round = c.u32().ok_or_else(truncated_round)?;
        let n = c.u32().ok_or_else(truncated_round)?;
        let mut t = RoundTranscript::new(round);
        for _ in 0..n {
            let truncated = || Error::Transcript(format!("truncated record {record}"));
            let phase_code = c.take(1).ok_or_else(truncated)?[0];
            let phase = Phase::from_code(phase_code)
                .ok_or_else(|| Error::Transcript(format!("record {record}: unknown phase tag {phase_code}")))?;
            let sender = c.u32().ok_or_else(truncated)?;
            let len = c.u32().ok_or_else(truncated)? as usize;
            let body = c.take(len).ok_or_else(truncated)?;
            t.messages.push(WireMessage {
                sender,
                phase,
                bytes: body.to_vec(),
            });
            record += 1;
        }
        transcripts.push(t);
    }
    if c.pos != bytes.len() {
        return Err(Error::Transcript(format!(
            "{} trailing bytes after record {record}",
            bytes.len() - c.pos
        )));
    }
    Ok((hash, transcripts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RoundTranscript> {
        let mut t0 = RoundTranscript::new(0);
        t0.messages.push(WireMessage::new(AGGREGATOR, Phase::Setup, tag::SESSION, &[1, 2, 3]));
        let mut t1 = RoundTranscript::new(1);
        t1.messages.push(WireMessage::new(0, Phase::Upload, tag::UPLOAD_PLAINTEXT, &[9; 16]));
        t1.messages.push(WireMessage::new(AGGREGATOR, Phase::Broadcast, tag::BROADCAST, &[]));
        vec![t0, t1]
    }

    #[test]
    fn roundtrip_and_bytes_on_wire() {
        let ts = sample();
        assert_eq!(ts[1].bytes_on_wire(), 17 + 1);
        let bytes = encode_transcripts(&[7; 32], &ts);
        let (hash, back) = decode_transcripts(&bytes).unwrap();
        assert_eq!(hash, [7; 32]);
        assert_eq!(back, ts);
        assert_eq!(encode_transcripts(&hash, &back), bytes);
    }

    #[test]
    fn session_info_roundtrip() {
        let s = SessionInfo {
            suite_code: 2,
            quant_scale: 1024.0,
            dim: 8,
            n_clients: 10,
        };
        assert_eq!(SessionInfo::from_bytes(&s.to_bytes()).unwrap(), s);
        assert!(SessionInfo::from_bytes(&[0; 16]).is_err());
    }

    #[test]
    fn empty_list() {
        let bytes = encode_transcripts(&[0; 32], &[]);
        assert_eq!(bytes.len(), 7 + 32 + 4);
        assert!(decode_transcripts(&bytes).unwrap().1.is_empty());
    }

    #[test]
    fn framing_errors() {
        let bytes = encode_transcripts(&[0; 32], &sample());
        let err = decode_transcripts(&bytes[..bytes.len() - 1]).unwrap_err();
        assert_eq!(err, Error::Transcript("truncated record 2".into()));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_transcripts(&bad), Err(Error::Transcript(m)) if m.contains("magic")));
        let mut long = bytes;
        long.push(0);
        assert!(decode_transcripts(&long).is_err());
    }
}
