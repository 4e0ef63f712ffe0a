//! Offline and online phases of both protocols.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bounds::check_field_bounds;
use super::field::{PrimeField, F61};
use super::gc::{ot_choose, GarblerSecret, GcBlob, LabelRole, Labels};
use super::he::{keygen, PublicKey, SecretKey};
use super::party::{run_pair, Payload, Role};
use super::schedule::{offline_schedule, online_schedule};
use super::share::{reconstruct, Party, Share};
use super::transcript::{PayloadKind as K, Transcript, TranscriptEvent};
use super::{ProtocolConfig, ProtocolError};
use crate::costmodel::Protocol;
use crate::netarch::plain::eval_block;
use crate::netarch::{serialize_arch, ActivationId, LinearBlock, NetworkArch, Segmentation, Weights};

/// Long-lived client material: the HE secret key and the public network description.
#[derive(Debug)]
pub struct ClientState {
    pub arch: NetworkArch,
    seg: Segmentation,
    sk: SecretKey,
    session: u64,
}

/// Long-lived server material: the model weights embedded in the field.
#[derive(Debug)]
pub struct ServerState {
    pub arch: NetworkArch,
    seg: Segmentation,
    weights: Weights<F61>,
    pk: PublicKey,
    session: u64,
}

/// What the client keeps after the offline phase.
#[derive(Debug)]
pub struct ClientMaterial {
    /// `r` for every activation, input first.
    pub masks: Vec<Vec<F61>>,
    /// `L_b(r) + s_b` for every block.
    pub linear_shares: Vec<Vec<F61>>,
    /// SG: circuits received from the server.
    blobs: Vec<Option<GcBlob>>,
    /// SG: labels for the client's circuit inputs, fetched by OT.
    labels: Vec<Option<Labels>>,
    /// CG: the client garbled every circuit.
    garblers: Vec<Option<GarblerSecret>>,
}

#[derive(Debug)]
pub struct ServerMaterial {
    /// `s_b` for every block.
    pub masks: Vec<Vec<F61>>,
    garblers: Vec<Option<GarblerSecret>>,
    /// CG: circuits and the client's input labels, received offline.
    blobs: Vec<Option<GcBlob>>,
    client_labels: Vec<Option<Labels>>,
}

/// Precomputed material for exactly one online inference.
#[derive(Debug)]
pub struct PrecomputeBundle {
    pub protocol: Protocol,
    pub rng_seed: u64,
    fingerprint: u64,
    session: u64,
    material: Option<(ClientMaterial, ServerMaterial)>,
}

impl PrecomputeBundle {
    pub fn is_consumed(&self) -> bool {
        self.material.is_none()
    }

    /// Party that stores the garbled circuits.
    pub fn owner_of_gc(&self) -> Party {
        match self.protocol {
            Protocol::ServerGarbler => Party::Client,
            Protocol::ClientGarbler => Party::Server,
        }
    }

    pub fn gc_bytes(&self) -> u64 {
        let Some((c, s)) = &self.material else { return 0 };
        c.blobs.iter().chain(&s.blobs).flatten().map(|b| b.bytes).sum()
    }

    pub fn client(&self) -> Option<&ClientMaterial> {
        self.material.as_ref().map(|m| &m.0)
    }

    pub fn server(&self) -> Option<&ServerMaterial> {
        self.material.as_ref().map(|m| &m.1)
    }
}

#[derive(Debug)]
pub struct Offline {
    pub bundle: PrecomputeBundle,
    pub client: ClientState,
    pub server: ServerState,
    pub transcript: Transcript,
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    /// Client share first.
    pub output_shares: (Share, Share),
    pub reconstructed_logits: Vec<F61>,
    pub transcript: Transcript,
    /// With debug checks on: (client, server) shares of every block output.
    pub block_shares: Vec<(Share, Share)>,
}

impl InferenceResult {
    pub fn signed_logits(&self) -> Vec<i128> {
        self.reconstructed_logits.iter().map(|v| v.signed()).collect()
    }
}

fn fingerprint(protocol: Protocol, arch: &NetworkArch) -> u64 {
    let mut h = DefaultHasher::new();
    protocol.short().hash(&mut h);
    serialize_arch(arch).hash(&mut h);
    h.finish()
}

fn party_rng(seed: u64, party: Party) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match party {
        Party::Client => 1,
        Party::Server => 2,
    });
    rng
}

fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<F61> {
    (0..n).map(|_| F61::random(rng)).collect()
}

/// Activation produced by the ReLU after `block`.
fn relu_output(block: &LinearBlock) -> ActivationId {
    block.index + 1
}

fn block_of(ev: &TranscriptEvent) -> Result<usize, ProtocolError> {
    ev.block
        .ok_or_else(|| ProtocolError::Channel(format!("step {} carries no block", ev.step)))
}

fn unexpected(ev: &TranscriptEvent, who: Party) -> ProtocolError {
    ProtocolError::Channel(format!(
        "{who} has no handler for {:?} at step {}",
        ev.payload_kind, ev.step
    ))
}

struct OfflineClient<'a> {
    protocol: Protocol,
    seg: &'a Segmentation,
    cfg: &'a ProtocolConfig,
    sk: &'a SecretKey,
    rng: ChaCha8Rng,
    m: ClientMaterial,
}

impl Role for OfflineClient<'_> {
    fn party(&self) -> Party {
        Party::Client
    }

    fn local(&mut self, ev: &TranscriptEvent) -> Result<(), ProtocolError> {
        match ev.payload_kind {
            K::LocalMasks => {
                let rng = &mut self.rng;
                self.m.masks = self
                    .seg
                    .activation_shapes
                    .iter()
                    .map(|s| random_vec(s.len(), rng))
                    .collect();
            }
            K::GarblerState => {
                let b = block_of(ev)?;
                let n = self.seg.blocks[b].output_len();
                self.m.garblers[b] = Some(GarblerSecret::new(self.rng.random(), b, n));
            }
            _ => return Err(unexpected(ev, Party::Client)),
        }
        Ok(())
    }

    fn produce(&mut self, ev: &TranscriptEvent) -> Result<Payload, ProtocolError> {
        Ok(match (ev.payload_kind, ev.block) {
            (K::Keys, _) => Payload::Keys(self.sk.public()),
            (K::EncryptedMasks, _) => {
                Payload::EncryptedMasks(self.m.masks.iter().map(|r| self.sk.encrypt(r.clone())).collect())
            }
            (K::OTMessage, None) => Payload::BaseOt,
            // SG: choose labels for (own share, next mask).
            (K::OTMessage, Some(b)) => Payload::OtChoice(ot_choose(b, LabelRole::ClientInputs, self.circuit_inputs(b))),
            (K::GarbledCircuit, Some(b)) => {
                let g = self.m.garblers[b]
                    .as_ref()
                    .ok_or_else(|| unexpected(ev, Party::Client))?;
                let size = self.seg.blocks[b].output_len() as u64 * self.cfg.bytes.gc_circuit_bytes_per_relu();
                Payload::GarbledCircuit(g.garble(Party::Client, size, true))
            }
            (K::Labels, Some(b)) => {
                let inputs = self.circuit_inputs(b);
                let g = self.m.garblers[b]
                    .as_ref()
                    .ok_or_else(|| unexpected(ev, Party::Client))?;
                Payload::Labels(g.encode(LabelRole::ClientInputs, inputs))
            }
            _ => return Err(unexpected(ev, Party::Client)),
        })
    }

    fn consume(&mut self, ev: &TranscriptEvent, payload: Payload) -> Result<(), ProtocolError> {
        match payload {
            Payload::EncryptedLinearShare(cts) => {
                if cts.len() != self.seg.blocks.len() {
                    return Err(ProtocolError::LengthMismatch(cts.len(), self.seg.blocks.len()));
                }
                self.m.linear_shares = cts.into_iter().map(|c| self.sk.decrypt(c)).collect::<Result<_, _>>()?;
            }
            Payload::BaseOt => {}
            Payload::GarbledCircuit(blob) if self.protocol == Protocol::ServerGarbler => {
                let b = block_of(ev)?;
                self.m.blobs[b] = Some(blob);
            }
            Payload::OtLabels(labels) if self.protocol == Protocol::ServerGarbler => {
                let b = block_of(ev)?;
                self.m.labels[b] = Some(labels);
            }
            _ => return Err(unexpected(ev, Party::Client)),
        }
        Ok(())
    }
}

impl OfflineClient<'_> {
    /// The client's circuit inputs for block `b`: its share of the block output, then the
    /// mask of the next activation.
    fn circuit_inputs(&self, b: usize) -> Vec<F61> {
        let mut v = self.m.linear_shares[b].clone();
        v.extend_from_slice(&self.m.masks[relu_output(&self.seg.blocks[b])]);
        v
    }
}

struct OfflineServer<'a> {
    protocol: Protocol,
    arch: &'a NetworkArch,
    seg: &'a Segmentation,
    weights: &'a Weights<F61>,
    cfg: &'a ProtocolConfig,
    pk: Option<PublicKey>,
    rng: ChaCha8Rng,
    encrypted_masks: Vec<super::he::Ciphertext>,
    /// OT response waiting to be sent.
    pending: Option<Labels>,
    m: ServerMaterial,
}

impl Role for OfflineServer<'_> {
    fn party(&self) -> Party {
        Party::Server
    }

    fn local(&mut self, ev: &TranscriptEvent) -> Result<(), ProtocolError> {
        match ev.payload_kind {
            K::LocalMasks => {
                let rng = &mut self.rng;
                self.m.masks = self
                    .seg
                    .blocks
                    .iter()
                    .map(|b| random_vec(b.output_len(), rng))
                    .collect();
            }
            K::GarblerState => {
                let b = block_of(ev)?;
                let n = self.seg.blocks[b].output_len();
                self.m.garblers[b] = Some(GarblerSecret::new(self.rng.random(), b, n));
            }
            _ => return Err(unexpected(ev, Party::Server)),
        }
        Ok(())
    }

    fn produce(&mut self, ev: &TranscriptEvent) -> Result<Payload, ProtocolError> {
        Ok(match (ev.payload_kind, ev.block) {
            (K::EncryptedLinearShare, _) => {
                let pk = self.pk.ok_or_else(|| unexpected(ev, Party::Server))?;
                let mut out = Vec::with_capacity(self.seg.blocks.len());
                for block in &self.seg.blocks {
                    let ids: Vec<ActivationId> = block.inputs().collect();
                    let cts: Vec<&super::he::Ciphertext> = ids.iter().map(|&a| &self.encrypted_masks[a]).collect();
                    let (arch, seg, w) = (self.arch, self.seg, self.weights);
                    // L_b(r) + s_b under encryption; the bias stays with the server's share.
                    let ct = pk.eval_linear(
                        &cts,
                        |vals| {
                            eval_block(
                                arch,
                                seg,
                                block,
                                w,
                                |a| vals[ids.iter().position(|&x| x == a).expect("block input")],
                                false,
                            )
                        },
                        &self.m.masks[block.index],
                    )?;
                    out.push(ct);
                }
                Payload::EncryptedLinearShare(out)
            }
            (K::OTMessage, None) => Payload::BaseOt,
            (K::OTMessage, Some(_)) => {
                Payload::OtLabels(self.pending.take().ok_or_else(|| unexpected(ev, Party::Server))?)
            }
            (K::GarbledCircuit, Some(b)) => {
                let g = self.m.garblers[b]
                    .as_ref()
                    .ok_or_else(|| unexpected(ev, Party::Server))?;
                let size = self.seg.blocks[b].output_len() as u64 * self.cfg.bytes.gc_circuit_bytes_per_relu();
                Payload::GarbledCircuit(g.garble(Party::Server, size, false))
            }
            _ => return Err(unexpected(ev, Party::Server)),
        })
    }

    fn consume(&mut self, ev: &TranscriptEvent, payload: Payload) -> Result<(), ProtocolError> {
        match payload {
            Payload::Keys(pk) => self.pk = Some(pk),
            Payload::EncryptedMasks(cts) => {
                if cts.len() != self.seg.activation_shapes.len() {
                    return Err(ProtocolError::LengthMismatch(
                        cts.len(),
                        self.seg.activation_shapes.len(),
                    ));
                }
                self.encrypted_masks = cts;
            }
            Payload::BaseOt => {}
            Payload::OtChoice(choice) => {
                // SG offline OT: answer on the same step pair, the response is produced next.
                let b = block_of(ev)?;
                let g = self.m.garblers[b]
                    .as_ref()
                    .ok_or_else(|| unexpected(ev, Party::Server))?;
                self.pending = Some(g.ot_respond(choice)?);
            }
            Payload::GarbledCircuit(blob) if self.protocol == Protocol::ClientGarbler => {
                let b = block_of(ev)?;
                self.m.blobs[b] = Some(blob);
            }
            Payload::Labels(labels) if self.protocol == Protocol::ClientGarbler => {
                let b = block_of(ev)?;
                self.m.client_labels[b] = Some(labels);
            }
            _ => return Err(unexpected(ev, Party::Server)),
        }
        Ok(())
    }
}

struct OnlineClient<'a> {
    protocol: Protocol,
    seg: &'a Segmentation,
    input: Vec<F61>,
    m: ClientMaterial,
    server_labels: Option<Labels>,
    choice: Option<super::gc::OtChoice>,
    server_output: Option<Vec<F61>>,
}

impl Role for OnlineClient<'_> {
    fn party(&self) -> Party {
        Party::Client
    }

    fn local(&mut self, ev: &TranscriptEvent) -> Result<(), ProtocolError> {
        Err(unexpected(ev, Party::Client))
    }

    fn produce(&mut self, ev: &TranscriptEvent) -> Result<Payload, ProtocolError> {
        let b = block_of(ev)?;
        Ok(match ev.payload_kind {
            K::MaskedTensor => {
                let r = &self.m.masks[0];
                if r.len() != self.input.len() {
                    return Err(ProtocolError::LengthMismatch(self.input.len(), r.len()));
                }
                Payload::MaskedTensor(self.input.iter().zip(r).map(|(&x, &r)| x - r).collect())
            }
            K::OutputLabels if self.protocol == Protocol::ServerGarbler => {
                let blob = self.m.blobs[b].as_ref().ok_or_else(|| unexpected(ev, Party::Client))?;
                let own = self.m.labels[b].take().ok_or_else(|| unexpected(ev, Party::Client))?;
                let theirs = self.server_labels.take().ok_or_else(|| unexpected(ev, Party::Client))?;
                Payload::OutputLabels(blob.evaluate(&theirs, &own)?)
            }
            K::OTMessage if self.protocol == Protocol::ClientGarbler => {
                let g = self.m.garblers[b]
                    .as_ref()
                    .ok_or_else(|| unexpected(ev, Party::Client))?;
                let choice = self.choice.take().ok_or_else(|| unexpected(ev, Party::Client))?;
                Payload::OtLabels(g.ot_respond(choice)?)
            }
            _ => return Err(unexpected(ev, Party::Client)),
        })
    }

    fn consume(&mut self, ev: &TranscriptEvent, payload: Payload) -> Result<(), ProtocolError> {
        match payload {
            Payload::Labels(l) if self.protocol == Protocol::ServerGarbler => self.server_labels = Some(l),
            Payload::OtChoice(c) if self.protocol == Protocol::ClientGarbler => self.choice = Some(c),
            Payload::MaskedTensor(v) => {
                let last = self.seg.blocks.len() - 1;
                if v.len() != self.seg.blocks[last].output_len() {
                    return Err(ProtocolError::LengthMismatch(
                        v.len(),
                        self.seg.blocks[last].output_len(),
                    ));
                }
                self.server_output = Some(v);
            }
            _ => return Err(unexpected(ev, Party::Client)),
        }
        Ok(())
    }
}

struct OnlineServer<'a> {
    protocol: Protocol,
    arch: &'a NetworkArch,
    seg: &'a Segmentation,
    weights: &'a Weights<F61>,
    m: ServerMaterial,
    /// `y - r` for each activation, filled in as the inference proceeds.
    masked: Vec<Option<Vec<F61>>>,
    /// The server's share of each block output.
    shares: Vec<Option<Vec<F61>>>,
}

impl OnlineServer<'_> {
    /// `L_b(y - r) + bias - s_b`.
    fn share_of(&mut self, b: usize) -> Result<Vec<F61>, ProtocolError> {
        if let Some(s) = &self.shares[b] {
            return Ok(s.clone());
        }
        let block = &self.seg.blocks[b];
        if let Some(a) = block.inputs().find(|&a| self.masked[a].is_none()) {
            return Err(ProtocolError::Discipline(format!(
                "block {b} evaluated before activation {a} arrived"
            )));
        }
        let masked = &self.masked;
        let mut out = eval_block(
            self.arch,
            self.seg,
            block,
            self.weights,
            |a| masked[a].as_deref().expect("checked above"),
            true,
        );
        for (o, &s) in out.iter_mut().zip(&self.m.masks[b]) {
            *o -= s;
        }
        self.shares[b] = Some(out.clone());
        Ok(out)
    }
}

impl Role for OnlineServer<'_> {
    fn party(&self) -> Party {
        Party::Server
    }

    fn local(&mut self, ev: &TranscriptEvent) -> Result<(), ProtocolError> {
        Err(unexpected(ev, Party::Server))
    }

    fn produce(&mut self, ev: &TranscriptEvent) -> Result<Payload, ProtocolError> {
        let b = block_of(ev)?;
        Ok(match ev.payload_kind {
            K::Labels if self.protocol == Protocol::ServerGarbler => {
                let share = self.share_of(b)?;
                let g = self.m.garblers[b]
                    .as_ref()
                    .ok_or_else(|| unexpected(ev, Party::Server))?;
                Payload::Labels(g.encode(LabelRole::ServerShare, share))
            }
            K::OTMessage if self.protocol == Protocol::ClientGarbler => {
                Payload::OtChoice(ot_choose(b, LabelRole::ServerShare, self.share_of(b)?))
            }
            K::MaskedTensor => Payload::MaskedTensor(self.share_of(b)?),
            _ => return Err(unexpected(ev, Party::Server)),
        })
    }

    fn consume(&mut self, ev: &TranscriptEvent, payload: Payload) -> Result<(), ProtocolError> {
        match payload {
            Payload::MaskedTensor(v) => {
                if v.len() != self.seg.activation_shapes[0].len() {
                    return Err(ProtocolError::LengthMismatch(
                        v.len(),
                        self.seg.activation_shapes[0].len(),
                    ));
                }
                self.masked[0] = Some(v);
            }
            Payload::OutputLabels(out) if self.protocol == Protocol::ServerGarbler => {
                let b = block_of(ev)?;
                let g = self.m.garblers[b]
                    .as_ref()
                    .ok_or_else(|| unexpected(ev, Party::Server))?;
                self.masked[relu_output(&self.seg.blocks[b])] = Some(g.decode(out)?);
            }
            Payload::OtLabels(own) if self.protocol == Protocol::ClientGarbler => {
                let b = block_of(ev)?;
                let blob = self.m.blobs[b].as_ref().ok_or_else(|| unexpected(ev, Party::Server))?;
                let client = self.m.client_labels[b]
                    .take()
                    .ok_or_else(|| unexpected(ev, Party::Server))?;
                let out = blob.evaluate(&own, &client)?;
                self.masked[relu_output(&self.seg.blocks[b])] = Some(blob.decode(out)?);
            }
            _ => return Err(unexpected(ev, Party::Server)),
        }
        Ok(())
    }
}

static NEXT_SESSION: AtomicU64 = AtomicU64::new(1);

/// Runs the offline phase: key exchange, masks, HE linear shares, circuits and labels.
pub fn offline_phase(
    protocol: Protocol,
    arch: &NetworkArch,
    weights: &Weights<i64>,
    seed: u64,
    cfg: &ProtocolConfig,
) -> Result<Offline, ProtocolError> {
    let seg = arch.segmentation()?;
    weights.check(arch)?;
    check_field_bounds::<F61>(arch, &seg, weights, cfg.input_bound)?;
    let fw: Weights<F61> = weights.convert();
    let mut crng = party_rng(seed, Party::Client);
    let (sk, pk) = keygen(crng.random());
    let nblocks = seg.blocks.len();
    let client = OfflineClient {
        protocol,
        seg: &seg,
        cfg,
        sk: &sk,
        rng: crng,
        m: ClientMaterial {
            masks: Vec::new(),
            linear_shares: Vec::new(),
            blobs: (0..nblocks).map(|_| None).collect(),
            labels: (0..nblocks).map(|_| None).collect(),
            garblers: (0..nblocks).map(|_| None).collect(),
        },
    };
    let server = OfflineServer {
        protocol,
        arch,
        seg: &seg,
        weights: &fw,
        cfg,
        pk: None,
        rng: party_rng(seed, Party::Server),
        encrypted_masks: Vec::new(),
        pending: None,
        m: ServerMaterial {
            masks: Vec::new(),
            garblers: (0..nblocks).map(|_| None).collect(),
            blobs: (0..nblocks).map(|_| None).collect(),
            client_labels: (0..nblocks).map(|_| None).collect(),
        },
    };
    let schedule = offline_schedule(protocol, &seg, &cfg.bytes);
    let (c, s) = run_pair(client, server, &schedule, cfg.scheduling)?;
    let transcript = Transcript::new(c.log.into_iter().chain(s.log).collect());
    let session = NEXT_SESSION.fetch_add(1, Ordering::Relaxed);
    let material = (c.role.m, s.role.m);
    Ok(Offline {
        bundle: PrecomputeBundle {
            protocol,
            rng_seed: seed,
            fingerprint: fingerprint(protocol, arch),
            session,
            material: Some(material),
        },
        client: ClientState {
            arch: arch.clone(),
            seg: seg.clone(),
            sk,
            session,
        },
        server: ServerState {
            arch: arch.clone(),
            seg,
            weights: fw,
            pk,
            session,
        },
        transcript,
    })
}

/// Runs one online inference, consuming `bundle`.
pub fn online_phase(
    bundle: &mut PrecomputeBundle,
    input: &[i64],
    client: &ClientState,
    server: &ServerState,
    cfg: &ProtocolConfig,
) -> Result<InferenceResult, ProtocolError> {
    if bundle.is_consumed() {
        return Err(ProtocolError::BundleConsumed);
    }
    let protocol = bundle.protocol;
    if bundle.fingerprint != fingerprint(protocol, &client.arch)
        || bundle.fingerprint != fingerprint(protocol, &server.arch)
    {
        return Err(ProtocolError::BundleMismatch(
            "generated for a different network".into(),
        ));
    }
    if bundle.session != client.session || bundle.session != server.session || server.pk != client.sk.public() {
        return Err(ProtocolError::BundleMismatch(
            "generated in a different offline session".into(),
        ));
    }
    let seg = &client.seg;
    if input.len() != seg.activation_shapes[0].len() {
        return Err(ProtocolError::ShapeMismatch(format!(
            "input has {} values, network expects {}",
            input.len(),
            seg.activation_shapes[0].len()
        )));
    }
    if let Some(v) = input
        .iter()
        .map(|v| v.unsigned_abs())
        .max()
        .filter(|&v| v > cfg.input_bound)
    {
        return Err(ProtocolError::FieldOverflowRisk {
            bound: v as u128,
            limit: cfg.input_bound,
        });
    }
    let (cm, sm) = bundle.material.take().expect("checked above");
    let linear_shares = cm.linear_shares.clone();
    let oc = OnlineClient {
        protocol,
        seg,
        input: input.iter().map(|&v| F61::from_i128(v as i128)).collect(),
        m: cm,
        server_labels: None,
        choice: None,
        server_output: None,
    };
    let os = OnlineServer {
        protocol,
        arch: &server.arch,
        seg: &server.seg,
        weights: &server.weights,
        m: sm,
        masked: vec![None; seg.activation_shapes.len()],
        shares: vec![None; seg.blocks.len()],
    };
    let schedule = online_schedule(protocol, seg, &cfg.bytes);
    let (c, s) = run_pair(oc, os, &schedule, cfg.scheduling)?;
    let transcript = Transcript::new(c.log.into_iter().chain(s.log).collect());
    let last = seg.blocks.len() - 1;
    let server_out = c
        .role
        .server_output
        .expect("schedule ends with the server's output share");
    let output_shares = (
        Share {
            party: Party::Client,
            values: linear_shares[last].clone(),
            layer_index: last,
        },
        Share {
            party: Party::Server,
            values: server_out,
            layer_index: last,
        },
    );
    let reconstructed_logits = reconstruct(&output_shares.0, &output_shares.1)?;
    let block_shares = if cfg.debug_checks {
        s.role
            .shares
            .into_iter()
            .enumerate()
            .map(|(b, z)| {
                let z = z.ok_or_else(|| ProtocolError::Discipline(format!("block {b} never evaluated")))?;
                Ok((
                    Share {
                        party: Party::Client,
                        values: linear_shares[b].clone(),
                        layer_index: b,
                    },
                    Share {
                        party: Party::Server,
                        values: z,
                        layer_index: b,
                    },
                ))
            })
            .collect::<Result<_, ProtocolError>>()?
    } else {
        Vec::new()
    };
    Ok(InferenceResult {
        output_shares,
        reconstructed_logits,
        transcript,
        block_shares,
    })
}

/// Offline then online on one input; the result's transcript covers both phases.
pub fn run_inference(
    protocol: Protocol,
    arch: &NetworkArch,
    weights: &Weights<i64>,
    input: &[i64],
    seed: u64,
    cfg: &ProtocolConfig,
) -> Result<InferenceResult, ProtocolError> {
    let mut off = offline_phase(protocol, arch, weights, seed, cfg)?;
    let mut res = online_phase(&mut off.bundle, input, &off.client, &off.server, cfg)?;
    let mut t = off.transcript;
    t.extend(res.transcript);
    res.transcript = t;
    Ok(res)
}
