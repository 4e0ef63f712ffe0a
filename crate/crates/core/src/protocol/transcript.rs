use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::share::Party;
use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Offline,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    Keys,
    EncryptedMasks,
    EncryptedLinearShare,
    GarbledCircuit,
    Labels,
    OTMessage,
    MaskedTensor,
    OutputLabels,
    /// Masks a party samples for itself (local, no wire bytes).
    LocalMasks,
    /// Garbling seeds and decode state kept by the garbler (local).
    GarblerState,
}

/// One scheduled action. Local actions have `sender == receiver` and zero wire bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub phase: Phase,
    pub step: usize,
    pub sender: Party,
    pub receiver: Party,
    pub bytes: u64,
    pub stored_by_receiver: bool,
    /// Bytes the receiver keeps; can be less than `bytes` (OT responses carry both label sets).
    pub stored_bytes: u64,
    pub payload_kind: PayloadKind,
    /// Linear block the payload belongs to, if any.
    pub block: Option<usize>,
}

impl TranscriptEvent {
    pub fn is_local(&self) -> bool {
        self.sender == self.receiver
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub events: Vec<TranscriptEvent>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteTotals {
    pub offline_c2s: u64,
    pub offline_s2c: u64,
    pub online_c2s: u64,
    pub online_s2c: u64,
    pub client_storage: u64,
    pub server_storage: u64,
}

impl ByteTotals {
    pub fn offline(&self) -> u64 {
        self.offline_c2s + self.offline_s2c
    }

    pub fn online(&self) -> u64 {
        self.online_c2s + self.online_s2c
    }
}

impl Transcript {
    pub fn new(mut events: Vec<TranscriptEvent>) -> Self {
        events.sort_by_key(|e| (e.phase, e.step));
        Transcript { events }
    }

    pub fn extend(&mut self, other: Transcript) {
        self.events.extend(other.events);
        self.events.sort_by_key(|e| (e.phase, e.step));
    }

    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &TranscriptEvent> {
        self.events.iter().filter(move |e| e.phase == phase)
    }

    /// Offline bytes kept by `party`.
    pub fn stored_by(&self, party: Party) -> u64 {
        self.phase(Phase::Offline)
            .filter(|e| e.stored_by_receiver && e.receiver == party)
            .map(|e| e.stored_bytes)
            .sum()
    }

    pub fn totals(&self) -> ByteTotals {
        let mut t = ByteTotals {
            client_storage: self.stored_by(Party::Client),
            server_storage: self.stored_by(Party::Server),
            ..ByteTotals::default()
        };
        for e in self.events.iter().filter(|e| !e.is_local()) {
            let slot = match (e.phase, e.sender) {
                (Phase::Offline, Party::Client) => &mut t.offline_c2s,
                (Phase::Offline, Party::Server) => &mut t.offline_s2c,
                (Phase::Online, Party::Client) => &mut t.online_c2s,
                (Phase::Online, Party::Server) => &mut t.online_s2c,
            };
            *slot += e.bytes;
        }
        t
    }

    pub fn contains(&self, phase: Phase, kind: PayloadKind) -> bool {
        self.phase(phase).any(|e| e.payload_kind == kind)
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), ProtocolError> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e).map_err(|e| ProtocolError::Io(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| ProtocolError::Io(e.to_string()))?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, ProtocolError> {
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ProtocolError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|e| ProtocolError::Io(format!("line {}: {e}", i + 1)))?;
            events.push(e);
        }
        Ok(Transcript::new(events))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(phase: Phase, step: usize, sender: Party, bytes: u64, stored: u64) -> TranscriptEvent {
        TranscriptEvent {
            phase,
            step,
            sender,
            receiver: sender.other(),
            bytes,
            stored_by_receiver: stored > 0,
            stored_bytes: stored,
            payload_kind: PayloadKind::Labels,
            block: None,
        }
    }

    #[test]
    fn totals_and_jsonl_round_trip() {
        let t = Transcript::new(vec![
            ev(Phase::Online, 0, Party::Client, 8, 0),
            ev(Phase::Offline, 1, Party::Server, 40, 20),
            ev(Phase::Offline, 0, Party::Client, 5, 0),
        ]);
        assert_eq!(t.events[0].step, 0);
        assert_eq!(t.events[0].phase, Phase::Offline);
        let totals = t.totals();
        assert_eq!((totals.offline_c2s, totals.offline_s2c, totals.online_c2s), (5, 40, 8));
        assert_eq!(totals.client_storage, 20);
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 3);
        assert_eq!(Transcript::read_jsonl(buf.as_slice()).unwrap(), t);
    }
}
