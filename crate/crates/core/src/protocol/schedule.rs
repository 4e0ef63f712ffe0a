//! The global action list of each protocol. Each party runs the slice of it that concerns it.

use super::share::Party::{self, Client, Server};
use super::transcript::{PayloadKind as K, Phase, TranscriptEvent};
use crate::costmodel::{ByteModel, Protocol};
use crate::netarch::Segmentation;

struct Builder {
    phase: Phase,
    events: Vec<TranscriptEvent>,
}

impl Builder {
    fn new(phase: Phase) -> Self {
        Builder {
            phase,
            events: Vec::new(),
        }
    }

    fn push(&mut self, from: Party, to: Party, kind: K, bytes: u64, stored: u64, block: Option<usize>) {
        self.events.push(TranscriptEvent {
            phase: self.phase,
            step: self.events.len(),
            sender: from,
            receiver: to,
            bytes: if from == to { 0 } else { bytes },
            stored_by_receiver: stored > 0,
            stored_bytes: stored,
            payload_kind: kind,
            block,
        });
    }

    fn local(&mut self, party: Party, kind: K, stored: u64, block: Option<usize>) {
        self.push(party, party, kind, 0, stored, block);
    }
}

/// ReLU blocks with their ReLU count.
fn relu_blocks(seg: &Segmentation) -> impl Iterator<Item = (usize, u64)> + '_ {
    seg.blocks
        .iter()
        .filter(|b| b.relu_layer.is_some())
        .map(|b| (b.index, b.output_len() as u64))
}

pub fn offline_schedule(protocol: Protocol, seg: &Segmentation, bm: &ByteModel) -> Vec<TranscriptEvent> {
    let fp = seg.footprint();
    let l = bm.label_bytes_per_relu();
    let gc = bm.gc_circuit_bytes_per_relu();
    let gs = bm.garbler_state_bytes_per_relu;
    let e = bm.elem_bytes;
    let ct = bm.he_ciphertext_bytes_per_elem;
    let mut b = Builder::new(Phase::Offline);
    b.push(Client, Server, K::Keys, bm.he_key_bytes, 0, None);
    b.local(Client, K::LocalMasks, fp.activation_elems * e, None);
    b.local(Server, K::LocalMasks, fp.block_output_elems * e, None);
    b.push(Client, Server, K::EncryptedMasks, fp.activation_elems * ct, 0, None);
    b.push(
        Server,
        Client,
        K::EncryptedLinearShare,
        fp.block_output_elems * ct,
        fp.block_output_elems * e,
        None,
    );
    b.push(Client, Server, K::OTMessage, bm.base_ot_bytes, 0, None);
    b.push(Server, Client, K::OTMessage, bm.base_ot_bytes, 0, None);
    for (blk, n) in relu_blocks(seg) {
        let blk = Some(blk);
        match protocol {
            Protocol::ServerGarbler => {
                b.local(Server, K::GarblerState, n * gs, blk);
                b.push(Server, Client, K::GarbledCircuit, n * gc, n * gc, blk);
                // The client fetches labels for its share and the next mask.
                b.push(Client, Server, K::OTMessage, n * 2 * l, 0, blk);
                b.push(Server, Client, K::OTMessage, n * 4 * l, n * 2 * l, blk);
            }
            Protocol::ClientGarbler => {
                b.local(Client, K::GarblerState, n * gs, blk);
                b.push(Client, Server, K::GarbledCircuit, n * gc, n * gc, blk);
                b.push(Client, Server, K::Labels, n * 2 * l, n * 2 * l, blk);
            }
        }
    }
    b.events
}

pub fn online_schedule(protocol: Protocol, seg: &Segmentation, bm: &ByteModel) -> Vec<TranscriptEvent> {
    let fp = seg.footprint();
    let l = bm.label_bytes_per_relu();
    let e = bm.elem_bytes;
    let mut b = Builder::new(Phase::Online);
    b.push(Client, Server, K::MaskedTensor, fp.input_elems * e, 0, Some(0));
    for (blk, n) in relu_blocks(seg) {
        let blk = Some(blk);
        match protocol {
            Protocol::ServerGarbler => {
                b.push(Server, Client, K::Labels, n * l, 0, blk);
                b.push(Client, Server, K::OutputLabels, n * l, 0, blk);
            }
            Protocol::ClientGarbler => {
                b.push(Server, Client, K::OTMessage, n * l, 0, blk);
                b.push(Client, Server, K::OTMessage, n * 2 * l, 0, blk);
            }
        }
    }
    b.push(
        Server,
        Client,
        K::MaskedTensor,
        fp.output_elems * e,
        0,
        Some(fp.blocks - 1),
    );
    b.events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netarch::{build_preset, DatasetSpec};
    use crate::protocol::transcript::Transcript;

    #[test]
    fn schedules_match_byte_model() {
        let arch = build_preset("resnet32", &DatasetSpec::cifar100()).unwrap();
        let seg = arch.segmentation().unwrap();
        let bm = ByteModel::default();
        for p in Protocol::ALL {
            let mut t = Transcript::new(offline_schedule(p, &seg, &bm));
            t.extend(Transcript::new(online_schedule(p, &seg, &bm)));
            let tot = t.totals();
            let want = bm.breakdown(p, &seg.footprint());
            assert_eq!(
                (tot.offline_c2s, tot.offline_s2c, tot.online_c2s, tot.online_s2c),
                (want.offline_c2s, want.offline_s2c, want.online_c2s, want.online_s2c),
                "{p}"
            );
            assert_eq!(
                (tot.client_storage, tot.server_storage),
                (want.client_storage, want.server_storage)
            );
        }
    }
}
