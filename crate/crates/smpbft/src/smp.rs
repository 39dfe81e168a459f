//! Shared-mempool state machine: chained microblocks, the Dispersal phase
//! (chunk fan-out, ack collection, availability certificates) and the
//! Retrieval phase (chunk re-broadcast, decode, re-encode check).
//!
//! One `SmpNode` instance is a single node's view of all n microblock
//! chains. It is strictly single-threaded: every handler consumes one input
//! and returns the messages to emit; the surrounding event loop owns
//! delivery. Wire formats are canonical (see [`messages`]), and every size
//! feeds the simulator's bandwidth model.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::ordering::Transaction;
use crate::primitives::{
    self, hash_tagged, AggregateSignature, Chunk, CodingParams, Digest, NodeId, PartialSignature,
    ThresholdScheme,
};
use crate::wire::{self, Encode, Reader, WireError};

/// Domain tag for ack signatures, binding (chain, position, root) so a
/// certificate cannot be replayed for a different slot.
const ACK_TAG: u8 = 0x20;
const BODY_TAG: u8 = 0x21;

pub fn ack_digest(chain: NodeId, position: u64, root: &Digest) -> Digest {
    let mut buf = Vec::with_capacity(2 + 8 + 32);
    wire::put_u16(&mut buf, chain);
    wire::put_u64(&mut buf, position);
    buf.extend_from_slice(&root.0);
    hash_tagged(ACK_TAG, &buf)
}

/// Aggregate of 2f+1 signed acknowledgments over a microblock identifier:
/// proof that enough nodes hold chunks for eventual reconstruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvailabilityCertificate {
    pub chain: NodeId,
    pub position: u64,
    pub id: Digest,
    pub sig: AggregateSignature,
}

impl AvailabilityCertificate {
    /// The universally accepted base certificate at position 0 of a chain.
    pub fn genesis(chain: NodeId) -> AvailabilityCertificate {
        AvailabilityCertificate {
            chain,
            position: 0,
            id: Digest::ZERO,
            sig: AggregateSignature::empty(),
        }
    }

    pub fn is_genesis(&self) -> bool {
        self.position == 0 && self.id.is_zero() && self.sig.is_empty()
    }

    pub fn verify(&self, scheme: &dyn ThresholdScheme) -> bool {
        self.is_genesis()
            || scheme.verify_aggregate(&ack_digest(self.chain, self.position, &self.id), &self.sig)
    }
}

impl Encode for AvailabilityCertificate {
    fn encode(&self, out: &mut Vec<u8>) {
        wire::put_u16(out, self.chain);
        wire::put_u64(out, self.position);
        self.id.encode(out);
        self.sig.encode(out);
    }

    fn wire_size(&self) -> usize {
        2 + 8 + 32 + self.sig.wire_size()
    }
}

impl AvailabilityCertificate {
    pub fn decode(r: &mut Reader<'_>) -> Result<AvailabilityCertificate, WireError> {
        Ok(AvailabilityCertificate {
            chain: r.get_u16()?,
            position: r.get_u64()?,
            id: Digest::decode(r)?,
            sig: AggregateSignature::decode(r)?,
        })
    }
}

/// A batch of transactions on one node's chain. The identifier is the Merkle
/// root of the erasure-coded body under the chain's coding parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Microblock {
    pub chain: NodeId,
    pub position: u64,
    pub created_at: u64,
    pub prev_ac: AvailabilityCertificate,
    pub payload: Vec<Transaction>,
    pub id: Digest,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmpError {
    #[error("prev AC is for (chain {chain}, position {position}), expected ({expect_chain}, {expect_position})")]
    ChainBreak {
        chain: NodeId,
        position: u64,
        expect_chain: NodeId,
        expect_position: u64,
    },
    #[error("dispersal already started at position {0}")]
    DuplicateDispersal(u64),
    #[error("node {me} does not own chain {chain}")]
    NotOwnChain { me: NodeId, chain: NodeId },
}

impl Microblock {
    /// Canonical body bytes: chain, position, created_at, prev AC, tx count,
    /// transactions. This is the unit that gets erasure coded.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_u16(&mut out, self.chain);
        wire::put_u64(&mut out, self.position);
        wire::put_u64(&mut out, self.created_at);
        self.prev_ac.encode(&mut out);
        wire::put_u32(&mut out, self.payload.len() as u32);
        for tx in &self.payload {
            tx.encode(&mut out);
        }
        out
    }

    /// Parses a body from decoded bytes. Trailing bytes must be the zero
    /// padding added by the erasure encoder; anything else is a malformed
    /// body (the caller marks the slot Empty).
    pub fn parse_padded(bytes: &[u8], id: Digest) -> Option<Microblock> {
        let mut r = Reader::new(bytes);
        let chain = r.get_u16().ok()?;
        let position = r.get_u64().ok()?;
        let created_at = r.get_u64().ok()?;
        let prev_ac = AvailabilityCertificate::decode(&mut r).ok()?;
        let count = r.get_u32().ok()? as usize;
        if count > bytes.len() {
            return None;
        }
        let mut payload = Vec::with_capacity(count);
        for _ in 0..count {
            payload.push(Transaction::decode(&mut r).ok()?);
        }
        let mut tail = r;
        while tail.remaining() > 0 {
            if tail.get_u8().ok()? != 0 {
                return None;
            }
        }
        Some(Microblock {
            chain,
            position,
            created_at,
            prev_ac,
            payload,
            id,
        })
    }

    pub fn body_hash(&self) -> Digest {
        hash_tagged(BODY_TAG, &self.body_bytes())
    }
}

/// Builds a microblock and computes its identifier under `params`.
///
/// `prev_ac` must certify position−1 of the same chain (genesis at position
/// 1). Empty payloads are allowed — idle nodes disperse empty microblocks
/// for workload balancing.
pub fn make_microblock(
    chain: NodeId,
    position: u64,
    txs: Vec<Transaction>,
    prev_ac: AvailabilityCertificate,
    now: u64,
    params: &CodingParams,
) -> Result<Microblock, SmpError> {
    if prev_ac.chain != chain || prev_ac.position + 1 != position {
        return Err(SmpError::ChainBreak {
            chain: prev_ac.chain,
            position: prev_ac.position,
            expect_chain: chain,
            expect_position: position.saturating_sub(1),
        });
    }
    let mut mb = Microblock {
        chain,
        position,
        created_at: now,
        prev_ac,
        payload: txs,
        id: Digest::ZERO,
    };
    let (root, _) = primitives::encode_committed(&mb.body_bytes(), params)
        .expect("body is never empty");
    mb.id = root;
    Ok(mb)
}

pub mod messages {
    //! Wire messages of the two SMP phases.
    //!
    //! `MbDis` carries (root, predecessor AC, one chunk with proof); the
    //! chain and position are implied by the predecessor certificate.
    //! `MbAck` returns a partial signature over the ack digest. `MbChk`
    //! re-broadcasts a held chunk during retrieval.

    use super::*;

    #[derive(Clone, Debug, PartialEq, Eq)]
    pub struct MbDis {
        pub root: Digest,
        pub prev_ac: AvailabilityCertificate,
        pub chunk: Chunk,
    }

    impl MbDis {
        pub fn chain(&self) -> NodeId {
            self.prev_ac.chain
        }

        pub fn position(&self) -> u64 {
            self.prev_ac.position + 1
        }
    }

    impl Encode for MbDis {
        fn encode(&self, out: &mut Vec<u8>) {
            self.root.encode(out);
            self.prev_ac.encode(out);
            self.chunk.encode(out);
        }

        fn wire_size(&self) -> usize {
            32 + self.prev_ac.wire_size() + self.chunk.wire_size()
        }
    }

    impl MbDis {
        pub fn decode(r: &mut Reader<'_>) -> Result<MbDis, WireError> {
            Ok(MbDis {
                root: Digest::decode(r)?,
                prev_ac: AvailabilityCertificate::decode(r)?,
                chunk: Chunk::decode(r)?,
            })
        }
    }

    #[derive(Clone, Debug, PartialEq, Eq)]
    pub struct MbAck {
        pub root: Digest,
        pub partial: PartialSignature,
    }

    impl Encode for MbAck {
        fn encode(&self, out: &mut Vec<u8>) {
            self.root.encode(out);
            self.partial.encode(out);
        }

        fn wire_size(&self) -> usize {
            32 + self.partial.wire_size()
        }
    }

    impl MbAck {
        pub fn decode(r: &mut Reader<'_>) -> Result<MbAck, WireError> {
            Ok(MbAck {
                root: Digest::decode(r)?,
                partial: PartialSignature::decode(r)?,
            })
        }
    }

    #[derive(Clone, Debug, PartialEq, Eq)]
    pub struct MbChk {
        pub chunk: Chunk,
    }

    impl MbChk {
        pub fn root(&self) -> Digest {
            self.chunk.root
        }
    }

    impl Encode for MbChk {
        fn encode(&self, out: &mut Vec<u8>) {
            self.chunk.encode(out);
        }

        fn wire_size(&self) -> usize {
            self.chunk.wire_size()
        }
    }

    impl MbChk {
        pub fn decode(r: &mut Reader<'_>) -> Result<MbChk, WireError> {
            Ok(MbChk {
                chunk: Chunk::decode(r)?,
            })
        }
    }
}

use messages::{MbAck, MbChk, MbDis};

/// Outcome of decoding a retrieved microblock.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resolution {
    Decoded(Box<Microblock>),
    /// Payload dropped after execution; only the body hash is kept.
    DecodedGc(Digest),
    /// Re-encode check or body parse failed: consensus treats this slot as a
    /// zero-transaction microblock.
    Empty,
}

impl Resolution {
    pub fn summary(&self) -> ResolutionSummary {
        match self {
            Resolution::Decoded(mb) => ResolutionSummary::Decoded(mb.body_hash()),
            Resolution::DecodedGc(h) => ResolutionSummary::Decoded(*h),
            Resolution::Empty => ResolutionSummary::Empty,
        }
    }
}

/// Comparable decode outcome for cross-node consistency checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResolutionSummary {
    Decoded(Digest),
    Empty,
}

/// How a position of a chain looks locally — mirrors the mempool-chain view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChainEntry {
    ChunkOnly,
    Decoded,
    Empty,
    Pending,
}

#[derive(Default)]
struct RootRecord {
    /// (chain, position, predecessor root) from a verified Mb-Dis, or from
    /// our own dispersal. Absent when only Mb-Chk traffic has been seen.
    meta: Option<(NodeId, u64, Digest)>,
    prev_ac: Option<AvailabilityCertificate>,
    local_chunk: Option<Chunk>,
    collected: BTreeMap<u16, Vec<u8>>,
    senders: BTreeSet<NodeId>,
    triggered: bool,
    broadcasted: bool,
    suppressed: bool,
    completed: bool,
    resolution: Option<Resolution>,
}

/// Effects of one retrieval-phase input.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct ChkEffects {
    /// Root newly resolved by this message (decode happened).
    pub resolved: Option<(Digest, ResolutionSummary)>,
    /// Root whose retrieval just completed at this node (f+1 distinct
    /// senders observed, or the 2f+1 observation shortcut).
    pub completed: Option<Digest>,
}

pub struct SmpNode {
    me: NodeId,
    params: CodingParams,
    scheme: Arc<dyn ThresholdScheme>,
    records: BTreeMap<Digest, RootRecord>,
    /// First dispersal root seen per (chain, position); later conflicting
    /// dispersals for the slot are ignored (one ack per slot, ever).
    dis_first: BTreeMap<(NodeId, u64), Digest>,
    /// Own-chain state.
    next_position: u64,
    own_roots: BTreeMap<u64, Digest>,
    own_acs: BTreeMap<u64, AvailabilityCertificate>,
    ack_acc: BTreeMap<Digest, BTreeMap<NodeId, PartialSignature>>,
    /// Per-chain count of stored-but-unresolved chunk positions, with
    /// high-water marks (over-distribution bound check).
    undecoded: BTreeMap<NodeId, usize>,
    undecoded_high: BTreeMap<NodeId, usize>,
    /// Approximate retained payload bytes (chunks + bodies), high-water.
    mem_bytes: u64,
    mem_high: u64,
    /// Count of Mb-Chk broadcasts per root (at-most-once invariant).
    chk_broadcasts: BTreeMap<Digest, u32>,
}

impl SmpNode {
    pub fn new(me: NodeId, params: CodingParams, scheme: Arc<dyn ThresholdScheme>) -> SmpNode {
        SmpNode {
            me,
            params,
            scheme,
            records: BTreeMap::new(),
            dis_first: BTreeMap::new(),
            next_position: 1,
            own_roots: BTreeMap::new(),
            own_acs: BTreeMap::new(),
            ack_acc: BTreeMap::new(),
            undecoded: BTreeMap::new(),
            undecoded_high: BTreeMap::new(),
            mem_bytes: 0,
            mem_high: 0,
            chk_broadcasts: BTreeMap::new(),
        }
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    pub fn params(&self) -> &CodingParams {
        &self.params
    }

    pub fn next_position(&self) -> u64 {
        self.next_position
    }

    /// Certificate to embed in the next own microblock, if formed yet.
    pub fn prev_ac_for_next(&self) -> Option<AvailabilityCertificate> {
        if self.next_position == 1 {
            Some(AvailabilityCertificate::genesis(self.me))
        } else {
            self.own_acs.get(&(self.next_position - 1)).cloned()
        }
    }

    /// Highest-position AC on the node's own chain (genesis if none yet).
    pub fn highest_own_ac(&self) -> AvailabilityCertificate {
        self.own_acs
            .values()
            .next_back()
            .cloned()
            .unwrap_or_else(|| AvailabilityCertificate::genesis(self.me))
    }

    pub fn make_own_microblock(&self, txs: Vec<Transaction>, now: u64) -> Result<Microblock, SmpError> {
        let prev = self
            .prev_ac_for_next()
            .ok_or(SmpError::DuplicateDispersal(self.next_position))?;
        make_microblock(self.me, self.next_position, txs, prev, now, &self.params)
    }

    /// Encodes, commits, and fans out one own microblock: returns the n
    /// Mb-Dis messages (one per node, self included — the caller loops the
    /// self-addressed one back through `handle_mb_dis`).
    pub fn start_dispersal(&mut self, mb: &Microblock) -> Result<Vec<(NodeId, MbDis)>, SmpError> {
        if mb.chain != self.me {
            return Err(SmpError::NotOwnChain {
                me: self.me,
                chain: mb.chain,
            });
        }
        if mb.position != self.next_position {
            return Err(SmpError::DuplicateDispersal(mb.position));
        }
        let body = mb.body_bytes();
        let (root, chunks) =
            primitives::encode_committed(&body, &self.params).expect("nonempty body");
        debug_assert_eq!(root, mb.id);

        let rec = self.records.entry(root).or_default();
        rec.meta = Some((mb.chain, mb.position, mb.prev_ac.id));
        rec.prev_ac = Some(mb.prev_ac.clone());
        rec.resolution = Some(Resolution::Decoded(Box::new(mb.clone())));
        self.mem_add(body.len() as u64);

        self.own_roots.insert(mb.position, root);
        self.next_position += 1;

        Ok(chunks
            .into_iter()
            .enumerate()
            .map(|(j, chunk)| {
                (
                    j as NodeId,
                    MbDis {
                        root,
                        prev_ac: mb.prev_ac.clone(),
                        chunk,
                    },
                )
            })
            .collect())
    }

    /// Dispersal receipt: verify, store the chunk, return the signed ack.
    ///
    /// Silently drops (returns None) on: repeat slot, bad certificate, bad
    /// proof, wrong chunk index, or `guard_allow == false` (the
    /// over-distribution guard decision supplied by the pacing layer).
    pub fn handle_mb_dis(&mut self, src: NodeId, msg: &MbDis, guard_allow: bool) -> Option<MbAck> {
        let chain = msg.chain();
        let position = msg.position();
        if src != chain {
            return None;
        }
        if self.dis_first.contains_key(&(chain, position)) {
            return None;
        }
        if !guard_allow {
            return None;
        }
        // The chunk must sit at this node's index, or retrieval could stall
        // with 2f+1 acks over fewer than f+1 distinct chunks.
        if msg.chunk.index != self.me + 1 || msg.chunk.root != msg.root {
            return None;
        }
        if !msg.prev_ac.verify(self.scheme.as_ref()) {
            return None;
        }
        if !msg.chunk.verify(self.params.n) {
            return None;
        }

        self.dis_first.insert((chain, position), msg.root);
        let rec = self.records.entry(msg.root).or_default();
        if rec.meta.is_none() {
            rec.meta = Some((chain, position, msg.prev_ac.id));
        }
        rec.prev_ac.get_or_insert_with(|| msg.prev_ac.clone());
        if rec.local_chunk.is_none() {
            self.mem_add(msg.chunk.data.len() as u64);
            rec.local_chunk = Some(msg.chunk.clone());
            if rec.resolution.is_none() {
                let cur = self.undecoded.entry(chain).or_insert(0);
                *cur += 1;
                let high = self.undecoded_high.entry(chain).or_insert(0);
                *high = (*high).max(*cur);
            }
        }

        let partial = self
            .scheme
            .sign(self.me, &ack_digest(chain, position, &msg.root));
        Some(MbAck {
            root: msg.root,
            partial,
        })
    }

    /// Ack receipt at the disperser. Returns the certificate on the
    /// (2f+1)-th distinct valid partial; duplicates count once.
    pub fn handle_mb_ack(&mut self, src: NodeId, msg: &MbAck) -> Option<AvailabilityCertificate> {
        let (position, _) = self
            .own_roots
            .iter()
            .find(|(_, r)| **r == msg.root)
            .map(|(p, r)| (*p, *r))?;
        if self.own_acs.contains_key(&position) {
            return None;
        }
        if msg.partial.signer != src {
            return None;
        }
        let digest = ack_digest(self.me, position, &msg.root);
        if !self.scheme.verify_partial(&digest, &msg.partial) {
            return None;
        }
        let acc = self.ack_acc.entry(msg.root).or_default();
        acc.insert(src, msg.partial.clone());
        if acc.len() < self.scheme.threshold() {
            return None;
        }
        let partials: Vec<PartialSignature> = acc.values().cloned().collect();
        let sig = self
            .scheme
            .combine(&digest, &partials)
            .expect("threshold partials verified individually");
        let ac = AvailabilityCertificate {
            chain: self.me,
            position,
            id: msg.root,
            sig,
        };
        self.own_acs.insert(position, ac.clone());
        self.ack_acc.remove(&msg.root);
        Some(ac)
    }

    /// Enters the retrieval phase for `root` (idempotent). Walks untriggered
    /// predecessors first, so broadcasts come out oldest-first; each
    /// microblock is retrieved at most once per node, ever.
    pub fn trigger_retrieval(&mut self, root: Digest) -> Vec<MbChk> {
        let mut stack = Vec::new();
        let mut cursor = root;
        loop {
            let rec = self.records.entry(cursor).or_default();
            if rec.triggered {
                break;
            }
            rec.triggered = true;
            stack.push(cursor);
            match rec.meta {
                Some((_, position, prev_root)) if position > 1 => cursor = prev_root,
                _ => break,
            }
        }
        let mut out = Vec::new();
        for r in stack.into_iter().rev() {
            let rec = self.records.get_mut(&r).expect("just inserted");
            if rec.suppressed || rec.broadcasted {
                continue;
            }
            if let Some(chunk) = &rec.local_chunk {
                rec.broadcasted = true;
                *self.chk_broadcasts.entry(r).or_insert(0) += 1;
                out.push(MbChk {
                    chunk: chunk.clone(),
                });
            } else if let Some(Resolution::Decoded(_)) = &rec.resolution {
                // Own microblock: the disperser holds every chunk; broadcast
                // the one at its own index.
                if let Some((chain, _, _)) = rec.meta {
                    if chain == self.me {
                        let body = match rec.resolution.as_ref() {
                            Some(Resolution::Decoded(mb)) => mb.body_bytes(),
                            _ => unreachable!(),
                        };
                        let (_, chunks) = primitives::encode_committed(&body, &self.params)
                            .expect("nonempty body");
                        let chunk = chunks[self.me as usize].clone();
                        rec.broadcasted = true;
                        *self.chk_broadcasts.entry(r).or_insert(0) += 1;
                        out.push(MbChk { chunk });
                    }
                }
            }
        }
        out
    }

    /// Chunk receipt during retrieval. First message per sender per root
    /// counts; chunk index collisions keep the first. Decode fires exactly
    /// once, on reaching f+1 distinct chunks.
    pub fn handle_mb_chk(&mut self, src: NodeId, msg: &MbChk) -> ChkEffects {
        let mut fx = ChkEffects::default();
        if !msg.chunk.verify(self.params.n) {
            return fx;
        }
        let root = msg.root();
        let rec = self.records.entry(root).or_default();
        if !rec.senders.insert(src) {
            return fx;
        }
        if rec.resolution.is_none() {
            if let std::collections::btree_map::Entry::Vacant(slot) =
                rec.collected.entry(msg.chunk.index)
            {
                slot.insert(msg.chunk.data.clone());
                self.mem_bytes += msg.chunk.data.len() as u64;
                self.mem_high = self.mem_high.max(self.mem_bytes);
            }
        }

        // 2f+1 distinct Mb-Chk before our own broadcast: everyone will reach
        // the decode threshold without us; suppress our broadcast.
        if rec.senders.len() >= self.scheme.threshold() && !rec.broadcasted {
            rec.suppressed = true;
        }
        if !rec.completed && rec.senders.len() >= self.params.k {
            rec.completed = true;
            fx.completed = Some(root);
        }

        if rec.resolution.is_none() && rec.collected.len() >= self.params.k {
            let outcome = self.finalize_decode(root);
            fx.resolved = Some((root, outcome));
        }
        fx
    }

    /// Decode + re-encode check. Mismatching commitment or malformed body
    /// uniformly becomes Empty — never an error, never retried.
    fn finalize_decode(&mut self, root: Digest) -> ResolutionSummary {
        let rec = self.records.get_mut(&root).expect("record exists");
        debug_assert!(rec.resolution.is_none());
        let fragments: Vec<(u16, Vec<u8>)> = rec
            .collected
            .iter()
            .take(self.params.k)
            .map(|(i, d)| (*i, d.clone()))
            .collect();
        let shard_len = fragments[0].1.len();
        let padded_len = self.params.k * shard_len;
        let resolution = match primitives::decode(&fragments, &self.params, padded_len) {
            Ok(padded) => match primitives::encode_committed(&padded, &self.params) {
                Ok((re_root, _)) if re_root == root => {
                    match Microblock::parse_padded(&padded, root) {
                        Some(mb) => Resolution::Decoded(Box::new(mb)),
                        None => Resolution::Empty,
                    }
                }
                _ => Resolution::Empty,
            },
            Err(_) => Resolution::Empty,
        };
        let summary = resolution.summary();
        rec.resolution = Some(resolution);
        // Collected fragments are no longer needed.
        let freed: u64 = rec.collected.values().map(|d| d.len() as u64).sum();
        rec.collected.clear();
        self.mem_bytes = self.mem_bytes.saturating_sub(freed);
        if rec.local_chunk.is_some() {
            if let Some((chain, _, _)) = rec.meta {
                if let Some(cur) = self.undecoded.get_mut(&chain) {
                    *cur = cur.saturating_sub(1);
                }
            }
        }
        summary
    }

    pub fn resolution(&self, root: &Digest) -> Option<&Resolution> {
        self.records.get(root).and_then(|r| r.resolution.as_ref())
    }

    pub fn resolution_summary(&self, root: &Digest) -> Option<ResolutionSummary> {
        self.resolution(root).map(|r| r.summary())
    }

    pub fn retrieval_triggered(&self, root: &Digest) -> bool {
        self.records.get(root).map(|r| r.triggered).unwrap_or(false)
    }

    /// Chain of `chain` as locally known, for inspection and tests.
    pub fn chain_entries(&self, chain: NodeId) -> BTreeMap<u64, ChainEntry> {
        let mut out = BTreeMap::new();
        for rec in self.records.values() {
            let Some((c, position, _)) = rec.meta else {
                continue;
            };
            if c != chain {
                continue;
            }
            let entry = match (&rec.resolution, &rec.local_chunk) {
                (Some(Resolution::Empty), _) => ChainEntry::Empty,
                (Some(_), _) => ChainEntry::Decoded,
                (None, Some(_)) => ChainEntry::ChunkOnly,
                (None, None) => ChainEntry::Pending,
            };
            out.insert(position, entry);
        }
        out
    }

    /// Frees retained payloads for an executed root, keeping the resolution
    /// marker so retrieval is never re-entered.
    pub fn gc_executed(&mut self, root: &Digest) {
        if let Some(rec) = self.records.get_mut(root) {
            if let Some(chunk) = rec.local_chunk.take() {
                self.mem_bytes = self.mem_bytes.saturating_sub(chunk.data.len() as u64);
            }
            if let Some(Resolution::Decoded(mb)) = rec.resolution.as_ref() {
                let hash = mb.body_hash();
                let len = mb.body_bytes().len() as u64;
                rec.resolution = Some(Resolution::DecodedGc(hash));
                self.mem_bytes = self.mem_bytes.saturating_sub(len);
            }
        }
    }

    fn mem_add(&mut self, bytes: u64) {
        self.mem_bytes += bytes;
        self.mem_high = self.mem_high.max(self.mem_bytes);
    }

    pub fn mem_high_water(&self) -> u64 {
        self.mem_high
    }

    /// Current and high-water counts of stored-but-undecoded positions for a
    /// chain (the quantity the over-distribution guard bounds).
    pub fn undecoded_positions(&self, chain: NodeId) -> (usize, usize) {
        (
            self.undecoded.get(&chain).copied().unwrap_or(0),
            self.undecoded_high.get(&chain).copied().unwrap_or(0),
        )
    }

    pub fn chk_broadcast_counts(&self) -> &BTreeMap<Digest, u32> {
        &self.chk_broadcasts
    }

    /// All resolved roots with their summaries (consistency checks).
    pub fn resolved_roots(&self) -> Vec<(Digest, ResolutionSummary)> {
        self.records
            .iter()
            .filter_map(|(root, rec)| rec.resolution.as_ref().map(|r| (*root, r.summary())))
            .collect()
    }
}
