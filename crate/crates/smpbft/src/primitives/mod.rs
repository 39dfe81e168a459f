//! Coding and commitment substrate: systematic Reed-Solomon erasure coding,
//! Merkle commitments over the coded chunks, and a threshold-signature
//! abstraction.
//!
//! All operations here are pure functions of their inputs; values are
//! immutable after construction and safe to move across threads.

mod merkle;
mod tsig;

pub use merkle::{merkle_build, merkle_verify, MerkleProof};
pub use tsig::{
    AggregateSignature, PartialSignature, SimTsigScheme, ThresholdScheme, TsigError,
};

use reed_solomon_erasure::galois_8::ReedSolomon;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::wire::{self, Encode, Reader, WireError};

/// Fixed digest length (λ). Signatures and hashes share this unit size in the
/// byte-accounting model.
pub const DIGEST_LEN: usize = 32;

pub type NodeId = u16;

/// A λ-byte hash value.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; DIGEST_LEN]
    }

    pub fn short_hex(&self) -> String {
        self.0[..6].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({}…)", self.short_hex())
    }
}

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.short_hex())
    }
}

impl Encode for Digest {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }

    fn wire_size(&self) -> usize {
        DIGEST_LEN
    }
}

impl Digest {
    pub fn decode(r: &mut Reader<'_>) -> Result<Digest, WireError> {
        Ok(Digest(r.get_array::<DIGEST_LEN>()?))
    }
}

/// SHA-256 over a domain-tagged byte string.
pub fn hash_tagged(tag: u8, data: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([tag]);
    h.update(data);
    Digest(h.finalize().into())
}

/// Erasure-coding parameters: an (f+1, n) code with n = 3f+1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodingParams {
    /// Total chunk count, n = 3f+1.
    pub n: usize,
    /// Decode threshold, k = f+1.
    pub k: usize,
    /// Fault bound.
    pub f: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodingError {
    #[error("n must be 3f+1 with n >= 4, got n={0}")]
    BadParams(usize),
    #[error("n={0} exceeds the GF(2^8) shard limit of 255")]
    TooManyShards(usize),
    #[error("cannot encode empty data")]
    EmptyData,
    #[error("need at least {need} fragments, got {got}")]
    Insufficient { need: usize, got: usize },
    #[error("fragments malformed: {0}")]
    Malformed(&'static str),
}

impl CodingParams {
    pub fn new(n: usize) -> Result<CodingParams, CodingError> {
        if n < 4 || (n - 1) % 3 != 0 {
            return Err(CodingError::BadParams(n));
        }
        if n > 255 {
            return Err(CodingError::TooManyShards(n));
        }
        let f = (n - 1) / 3;
        Ok(CodingParams { n, k: f + 1, f })
    }

    /// Ack / vote quorum size, 2f+1.
    pub fn quorum(&self) -> usize {
        2 * self.f + 1
    }

    /// Chunk length for a message of `len` bytes: ceil(len / k).
    pub fn chunk_len(&self, len: usize) -> usize {
        len.div_ceil(self.k)
    }
}

/// One coded fragment plus its commitment metadata — the unit of transfer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    /// Position in [1, n].
    pub index: u16,
    pub data: Vec<u8>,
    pub proof: MerkleProof,
    pub root: Digest,
}

impl Chunk {
    /// Checks the index range and the Merkle proof binding `data` at `index`
    /// under `root`. The upper bound matters: the duplicated tail node of an
    /// odd Merkle level gives position n+1 the same path as position n.
    pub fn verify(&self, n: usize) -> bool {
        self.index >= 1
            && self.index as usize <= n
            && merkle_verify(&self.proof, &self.data, self.index as usize - 1, &self.root)
    }
}

impl Encode for Chunk {
    fn encode(&self, out: &mut Vec<u8>) {
        wire::put_u16(out, self.index);
        wire::put_bytes(out, &self.data);
        self.proof.encode(out);
        self.root.encode(out);
    }

    fn wire_size(&self) -> usize {
        2 + wire::bytes_size(&self.data) + self.proof.wire_size() + DIGEST_LEN
    }
}

impl Chunk {
    pub fn decode(r: &mut Reader<'_>) -> Result<Chunk, WireError> {
        Ok(Chunk {
            index: r.get_u16()?,
            data: r.get_bytes()?,
            proof: MerkleProof::decode(r)?,
            root: Digest::decode(r)?,
        })
    }
}

/// Encodes `data` into n equal-length fragments; any k reconstruct it.
///
/// Systematic layout: `data` is zero-filled to a multiple of k and the first
/// k fragments are the padded data split in order, so every fragment is
/// exactly `ceil(len/k)` bytes. Fragment indices are implicit (position 1..=n
/// in the returned vector).
pub fn encode(data: &[u8], params: &CodingParams) -> Result<Vec<Vec<u8>>, CodingError> {
    if data.is_empty() {
        return Err(CodingError::EmptyData);
    }
    let shard_len = params.chunk_len(data.len());
    let mut shards: Vec<Vec<u8>> = Vec::with_capacity(params.n);
    for i in 0..params.k {
        let start = i * shard_len;
        let end = ((i + 1) * shard_len).min(data.len());
        let mut shard = if start < data.len() {
            data[start..end].to_vec()
        } else {
            Vec::new()
        };
        shard.resize(shard_len, 0);
        shards.push(shard);
    }
    for _ in params.k..params.n {
        shards.push(vec![0u8; shard_len]);
    }
    let rs = ReedSolomon::new(params.k, params.n - params.k)
        .map_err(|_| CodingError::BadParams(params.n))?;
    rs.encode(&mut shards)
        .expect("shard layout is consistent by construction");
    Ok(shards)
}

/// Reconstructs the original `original_len` bytes from at least k fragments.
///
/// Fragment indices are 1-based. Decoding is deterministic regardless of
/// which k-subset is supplied; the result is the unique codeword-consistent
/// message truncated to `original_len`.
pub fn decode(
    fragments: &[(u16, Vec<u8>)],
    params: &CodingParams,
    original_len: usize,
) -> Result<Vec<u8>, CodingError> {
    if fragments.len() < params.k {
        return Err(CodingError::Insufficient {
            need: params.k,
            got: fragments.len(),
        });
    }
    let shard_len = fragments[0].1.len();
    if shard_len == 0 {
        return Err(CodingError::Malformed("zero-length fragment"));
    }
    let mut shards: Vec<Option<Vec<u8>>> = vec![None; params.n];
    let mut distinct = 0usize;
    for (index, data) in fragments {
        if *index < 1 || *index as usize > params.n {
            return Err(CodingError::Malformed("fragment index out of range"));
        }
        if data.len() != shard_len {
            return Err(CodingError::Malformed("mixed fragment lengths"));
        }
        let slot = &mut shards[*index as usize - 1];
        if slot.is_none() {
            *slot = Some(data.clone());
            distinct += 1;
        }
    }
    if distinct < params.k {
        return Err(CodingError::Insufficient {
            need: params.k,
            got: distinct,
        });
    }
    if original_len > params.k * shard_len {
        return Err(CodingError::Malformed("original_len exceeds capacity"));
    }
    let rs = ReedSolomon::new(params.k, params.n - params.k)
        .map_err(|_| CodingError::BadParams(params.n))?;
    rs.reconstruct_data(&mut shards)
        .map_err(|_| CodingError::Malformed("reconstruction failed"))?;
    let mut out = Vec::with_capacity(params.k * shard_len);
    for shard in shards.into_iter().take(params.k) {
        out.extend_from_slice(&shard.expect("data shard present after reconstruct"));
    }
    out.truncate(original_len);
    Ok(out)
}

/// Encodes `data` and commits to the fragments, returning the full chunk set.
pub fn encode_committed(
    data: &[u8],
    params: &CodingParams,
) -> Result<(Digest, Vec<Chunk>), CodingError> {
    let shards = encode(data, params)?;
    let (root, proofs) = merkle_build(&shards).expect("n >= 1 leaves");
    let chunks = shards
        .into_iter()
        .zip(proofs)
        .enumerate()
        .map(|(i, (data, proof))| Chunk {
            index: (i + 1) as u16,
            data,
            proof,
            root,
        })
        .collect();
    Ok((root, chunks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize) -> CodingParams {
        CodingParams::new(n).unwrap()
    }

    #[test]
    fn params_reject_bad_n() {
        assert!(CodingParams::new(3).is_err());
        assert!(CodingParams::new(5).is_err());
        assert_eq!(params(4), CodingParams { n: 4, k: 2, f: 1 });
        assert_eq!(params(7), CodingParams { n: 7, k: 3, f: 2 });
        assert_eq!(
            CodingParams::new(256).unwrap_err(),
            CodingError::TooManyShards(256)
        );
    }

    #[test]
    fn systematic_layout_small() {
        // 6 bytes at (k=2, n=4): fragments of 3 bytes, first two are the halves.
        let data = b"abcdef";
        let frags = encode(data, &params(4)).unwrap();
        assert_eq!(frags.len(), 4);
        assert!(frags.iter().all(|f| f.len() == 3));
        assert_eq!(&frags[0], b"abc");
        assert_eq!(&frags[1], b"def");
    }

    #[test]
    fn empty_data_rejected() {
        assert_eq!(encode(&[], &params(4)).unwrap_err(), CodingError::EmptyData);
    }

    #[test]
    fn round_trip_with_padding() {
        // Length not divisible by k: padded, decode strips the padding.
        let p = params(7);
        let data: Vec<u8> = (0u8..=99).collect(); // 100 bytes, k = 3
        let frags = encode(&data, &p).unwrap();
        assert!(frags.iter().all(|f| f.len() == 34)); // ceil(100/3)
        let subset: Vec<(u16, Vec<u8>)> = [2usize, 4, 6]
            .iter()
            .map(|&i| ((i + 1) as u16, frags[i].clone()))
            .collect();
        assert_eq!(decode(&subset, &p, 100).unwrap(), data);
    }

    /// Brute force over all C(n, k) subsets: every one must decode to the
    /// original data. Exhaustive at n = 4 and n = 7.
    fn all_subsets_decode(n: usize, data_len: usize, seed: u64) {
        let p = params(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<u8> = (0..data_len).map(|_| rng.random()).collect();
        let frags = encode(&data, &p).unwrap();
        let mut subsets = 0;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != p.k {
                continue;
            }
            let subset: Vec<(u16, Vec<u8>)> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| ((i + 1) as u16, frags[i].clone()))
                .collect();
            assert_eq!(decode(&subset, &p, data_len).unwrap(), data);
            subsets += 1;
        }
        let expect = match (n, p.k) {
            (4, 2) => 6,
            (7, 3) => 35,
            _ => subsets,
        };
        assert_eq!(subsets, expect);
    }

    #[test]
    fn every_k_subset_decodes_n4() {
        all_subsets_decode(4, 1024, 11);
    }

    #[test]
    fn every_k_subset_decodes_n7() {
        all_subsets_decode(7, 1024, 12);
    }

    #[test]
    fn insufficient_fragments() {
        let p = params(4);
        let frags = encode(b"abcdef", &p).unwrap();
        let one = vec![(1u16, frags[0].clone())];
        assert!(matches!(
            decode(&one, &p, 6),
            Err(CodingError::Insufficient { need: 2, got: 1 })
        ));
        // Duplicate indices do not count twice.
        let dup = vec![(1u16, frags[0].clone()), (1u16, frags[0].clone())];
        assert!(matches!(
            decode(&dup, &p, 6),
            Err(CodingError::Insufficient { .. })
        ));
    }

    #[test]
    fn mixed_lengths_rejected() {
        let p = params(4);
        let frags = encode(b"abcdef", &p).unwrap();
        let bad = vec![(1u16, frags[0].clone()), (2u16, vec![1, 2])];
        assert!(matches!(decode(&bad, &p, 6), Err(CodingError::Malformed(_))));
    }

    #[test]
    fn mixed_encodings_decode_but_commitment_catches_it() {
        // Chunks from two different encodings decode to *something*; the
        // re-encode root check is what detects the mismatch.
        let p = params(4);
        let (root_a, chunks_a) = encode_committed(b"first payload....", &p).unwrap();
        let (_root_b, chunks_b) = encode_committed(b"second payload...", &p).unwrap();
        let mixed = vec![
            (3u16, chunks_a[2].data.clone()),
            (4u16, chunks_b[3].data.clone()),
        ];
        let decoded = decode(&mixed, &p, p.k * chunks_a[0].data.len()).unwrap();
        let (re_root, _) = encode_committed(&decoded, &p).unwrap();
        assert_ne!(re_root, root_a);
    }

    #[test]
    fn committed_chunks_verify() {
        let p = params(7);
        let data: Vec<u8> = (0..500u32).map(|i| (i % 251) as u8).collect();
        let (root, chunks) = encode_committed(&data, &p).unwrap();
        for c in &chunks {
            assert_eq!(c.root, root);
            assert!(c.verify(p.n));
        }
        // Wrong index fails, as does an out-of-range one.
        let mut c = chunks[0].clone();
        c.index = 2;
        assert!(!c.verify(p.n));
        let mut c = chunks[6].clone();
        c.index = 8;
        assert!(!c.verify(p.n));
    }

    proptest! {
        #[test]
        fn prop_round_trip(data in proptest::collection::vec(any::<u8>(), 1..600), n in prop_oneof![Just(4usize), Just(7), Just(10)]) {
            let p = params(n);
            let frags = encode(&data, &p).unwrap();
            prop_assert!(frags.iter().all(|f| f.len() == p.chunk_len(data.len())));
            // Take the last k fragments (always includes parity).
            let subset: Vec<(u16, Vec<u8>)> = (n - p.k..n)
                .map(|i| ((i + 1) as u16, frags[i].clone()))
                .collect();
            prop_assert_eq!(decode(&subset, &p, data.len()).unwrap(), data);
        }
    }

    #[test]
    fn chunk_wire_round_trip() {
        let p = params(4);
        let (_, chunks) = encode_committed(b"wire bytes", &p).unwrap();
        let bytes = chunks[1].to_bytes();
        assert_eq!(bytes.len(), chunks[1].wire_size());
        let mut r = Reader::new(&bytes);
        assert_eq!(Chunk::decode(&mut r).unwrap(), chunks[1]);
        r.finish().unwrap();
    }
}
