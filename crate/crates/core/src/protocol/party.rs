//! Party state machines and the duplex channel between them.

use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};

use super::field::F61;
use super::gc::{GcBlob, Labels, OtChoice, OutputLabels};
use super::he::{Ciphertext, PublicKey};
use super::share::Party;
use super::transcript::{PayloadKind, Phase, TranscriptEvent};
use super::{ProtocolError, Scheduling};

#[derive(Debug)]
pub enum Payload {
    Keys(PublicKey),
    /// One ciphertext per activation mask.
    EncryptedMasks(Vec<Ciphertext>),
    /// One ciphertext per block.
    EncryptedLinearShare(Vec<Ciphertext>),
    BaseOt,
    GarbledCircuit(GcBlob),
    Labels(Labels),
    OtChoice(OtChoice),
    OtLabels(Labels),
    MaskedTensor(Vec<F61>),
    OutputLabels(OutputLabels),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Keys(_) => PayloadKind::Keys,
            Payload::EncryptedMasks(_) => PayloadKind::EncryptedMasks,
            Payload::EncryptedLinearShare(_) => PayloadKind::EncryptedLinearShare,
            Payload::BaseOt | Payload::OtChoice(_) | Payload::OtLabels(_) => PayloadKind::OTMessage,
            Payload::GarbledCircuit(_) => PayloadKind::GarbledCircuit,
            Payload::Labels(_) => PayloadKind::Labels,
            Payload::MaskedTensor(_) => PayloadKind::MaskedTensor,
            Payload::OutputLabels(_) => PayloadKind::OutputLabels,
        }
    }
}

#[derive(Debug)]
pub struct Envelope {
    pub phase: Phase,
    pub step: usize,
    pub payload: Payload,
}

/// One end of an in-memory duplex channel.
#[derive(Debug)]
pub struct Endpoint {
    tx: Sender<Envelope>,
    rx: Receiver<Envelope>,
}

pub fn duplex() -> (Endpoint, Endpoint) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (Endpoint { tx: a_tx, rx: a_rx }, Endpoint { tx: b_tx, rx: b_rx })
}

/// Protocol logic of one party; the [`Runner`] calls it once per scheduled action.
pub trait Role {
    fn party(&self) -> Party;
    fn produce(&mut self, ev: &TranscriptEvent) -> Result<Payload, ProtocolError>;
    fn consume(&mut self, ev: &TranscriptEvent, payload: Payload) -> Result<(), ProtocolError>;
    fn local(&mut self, ev: &TranscriptEvent) -> Result<(), ProtocolError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Poll {
    Blocked,
    Done,
}

pub struct Runner<R> {
    pub role: R,
    program: Vec<TranscriptEvent>,
    pc: usize,
    endpoint: Endpoint,
    /// Events this party sent or performed locally.
    pub log: Vec<TranscriptEvent>,
}

impl<R: Role> Runner<R> {
    pub fn new(role: R, schedule: &[TranscriptEvent], endpoint: Endpoint) -> Self {
        let me = role.party();
        let program = schedule
            .iter()
            .filter(|e| e.sender == me || e.receiver == me)
            .cloned()
            .collect();
        Runner {
            role,
            program,
            pc: 0,
            endpoint,
            log: Vec::new(),
        }
    }

    /// Runs actions until the next one needs a message that has not arrived.
    pub fn poll(&mut self, blocking: bool) -> Result<Poll, ProtocolError> {
        let me = self.role.party();
        while let Some(ev) = self.program.get(self.pc).cloned() {
            if ev.sender == me && ev.receiver == me {
                self.role.local(&ev)?;
                self.log.push(ev);
            } else if ev.sender == me {
                let payload = self.role.produce(&ev)?;
                if payload.kind() != ev.payload_kind {
                    return Err(ProtocolError::Channel(format!(
                        "step {} produced {:?}, scheduled {:?}",
                        ev.step,
                        payload.kind(),
                        ev.payload_kind
                    )));
                }
                self.endpoint
                    .tx
                    .send(Envelope {
                        phase: ev.phase,
                        step: ev.step,
                        payload,
                    })
                    .map_err(|_| ProtocolError::Channel(format!("{} hung up", me.other())))?;
                self.log.push(ev);
            } else {
                let env = if blocking {
                    self.endpoint
                        .rx
                        .recv()
                        .map_err(|_| ProtocolError::Channel(format!("{} hung up", me.other())))?
                } else {
                    match self.endpoint.rx.try_recv() {
                        Ok(env) => env,
                        Err(TryRecvError::Empty) => return Ok(Poll::Blocked),
                        Err(TryRecvError::Disconnected) => {
                            return Err(ProtocolError::Channel(format!("{} hung up", me.other())))
                        }
                    }
                };
                if env.phase != ev.phase || env.step != ev.step || env.payload.kind() != ev.payload_kind {
                    return Err(ProtocolError::Channel(format!(
                        "expected {:?} at step {}, got {:?} at step {}",
                        ev.payload_kind,
                        ev.step,
                        env.payload.kind(),
                        env.step
                    )));
                }
                self.role.consume(&ev, env.payload)?;
            }
            self.pc += 1;
        }
        Ok(Poll::Done)
    }
}

/// Drives both parties to completion and returns their roles and logs.
pub fn run_pair<C: Role + Send, S: Role + Send>(
    client: C,
    server: S,
    schedule: &[TranscriptEvent],
    scheduling: Scheduling,
) -> Result<(Runner<C>, Runner<S>), ProtocolError> {
    let (ce, se) = duplex();
    let mut c = Runner::new(client, schedule, ce);
    let mut s = Runner::new(server, schedule, se);
    match scheduling {
        Scheduling::Interleaved => loop {
            let before = (c.pc, s.pc);
            let pc = c.poll(false)?;
            let ps = s.poll(false)?;
            if (pc, ps) == (Poll::Done, Poll::Done) {
                break;
            }
            if (c.pc, s.pc) == before {
                return Err(ProtocolError::Deadlock);
            }
        },
        Scheduling::Threaded => {
            let (rc, rs) = std::thread::scope(|scope| {
                let hc = scope.spawn(move || c.poll(true).map(|_| c));
                let hs = scope.spawn(move || s.poll(true).map(|_| s));
                (
                    hc.join().expect("client thread panicked"),
                    hs.join().expect("server thread panicked"),
                )
            });
            // Report the root cause rather than the peer's hang-up.
            return match (rc, rs) {
                (Ok(c), Ok(s)) => Ok((c, s)),
                (Err(e), Err(ProtocolError::Channel(_))) | (Err(ProtocolError::Channel(_)), Err(e)) => Err(e),
                (Err(e), _) | (_, Err(e)) => Err(e),
            };
        }
    }
    Ok((c, s))
}
