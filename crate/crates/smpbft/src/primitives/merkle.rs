//! Binary Merkle tree over byte-string leaves.
//!
//! Leaf and internal hashes use distinct domain tags; a lone node at an odd
//! level is paired with a copy of itself. A proof is the bottom-up list of
//! sibling digests — `ceil(log2(n))` of them for n leaves — and verification
//! takes the leaf index to fix left/right order at each level.

use super::{hash_tagged, Digest, DIGEST_LEN};
use crate::wire::{self, Encode, Reader, WireError};

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MerkleProof {
    pub siblings: Vec<Digest>,
}

impl Encode for MerkleProof {
    fn encode(&self, out: &mut Vec<u8>) {
        wire::put_u8(out, self.siblings.len() as u8);
        for s in &self.siblings {
            s.encode(out);
        }
    }

    fn wire_size(&self) -> usize {
        1 + DIGEST_LEN * self.siblings.len()
    }
}

impl MerkleProof {
    pub fn decode(r: &mut Reader<'_>) -> Result<MerkleProof, WireError> {
        let count = r.get_u8()? as usize;
        let mut siblings = Vec::with_capacity(count);
        for _ in 0..count {
            siblings.push(Digest::decode(r)?);
        }
        Ok(MerkleProof { siblings })
    }
}

fn leaf_hash(leaf: &[u8]) -> Digest {
    hash_tagged(LEAF_TAG, leaf)
}

fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut buf = [0u8; 2 * DIGEST_LEN];
    buf[..DIGEST_LEN].copy_from_slice(&left.0);
    buf[DIGEST_LEN..].copy_from_slice(&right.0);
    hash_tagged(NODE_TAG, &buf)
}

/// Builds the tree and returns the root plus one inclusion proof per leaf.
/// Rejects an empty leaf list.
pub fn merkle_build<L: AsRef<[u8]>>(leaves: &[L]) -> Option<(Digest, Vec<MerkleProof>)> {
    if leaves.is_empty() {
        return None;
    }
    let mut level: Vec<Digest> = leaves.iter().map(|l| leaf_hash(l.as_ref())).collect();
    let mut proofs: Vec<MerkleProof> = vec![MerkleProof::default(); leaves.len()];
    // Tracks which level-node each leaf's path currently sits at.
    let mut cursor: Vec<usize> = (0..leaves.len()).collect();
    while level.len() > 1 {
        if level.len() % 2 == 1 {
            level.push(*level.last().unwrap());
        }
        for (leaf, pos) in cursor.iter_mut().enumerate() {
            let sib = if *pos % 2 == 0 { *pos + 1 } else { *pos - 1 };
            proofs[leaf].siblings.push(level[sib]);
            *pos /= 2;
        }
        level = level
            .chunks_exact(2)
            .map(|pair| node_hash(&pair[0], &pair[1]))
            .collect();
    }
    Some((level[0], proofs))
}

/// True iff `leaf` at 0-based `index` is committed under `root`.
pub fn merkle_verify(proof: &MerkleProof, leaf: &[u8], index: usize, root: &Digest) -> bool {
    let mut acc = leaf_hash(leaf);
    let mut pos = index;
    for sib in &proof.siblings {
        acc = if pos % 2 == 0 {
            node_hash(&acc, sib)
        } else {
            node_hash(sib, &acc)
        };
        pos /= 2;
    }
    pos == 0 && acc == *root
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn leaves(n: usize, seed: u64) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..24).map(|_| rng.random()).collect())
            .collect()
    }

    #[test]
    fn empty_rejected() {
        assert!(merkle_build::<&[u8]>(&[]).is_none());
    }

    #[test]
    fn single_leaf_root_is_tagged_leaf_hash() {
        let (root, proofs) = merkle_build(&[b"only".as_slice()]).unwrap();
        assert_eq!(root, leaf_hash(b"only"));
        assert_eq!(proofs.len(), 1);
        assert!(proofs[0].siblings.is_empty());
        assert!(merkle_verify(&proofs[0], b"only", 0, &root));
    }

    #[test]
    fn proof_depth_is_ceil_log2() {
        for (n, depth) in [(2usize, 1usize), (4, 2), (5, 3), (7, 3), (8, 3), (9, 4)] {
            let ls = leaves(n, n as u64);
            let (_, proofs) = merkle_build(&ls).unwrap();
            assert!(
                proofs.iter().all(|p| p.siblings.len() == depth),
                "n={n} expected depth {depth}"
            );
        }
    }

    #[test]
    fn all_proofs_verify_and_wrong_index_fails() {
        // In-range wrong indices must fail; indices >= n are excluded by the
        // chunk index-range check, since the duplicated tail node makes the
        // position just past the end an unavoidable twin.
        let ls = leaves(7, 3);
        let (root, proofs) = merkle_build(&ls).unwrap();
        for (i, l) in ls.iter().enumerate() {
            assert!(merkle_verify(&proofs[i], l, i, &root));
            assert!(!merkle_verify(&proofs[i], l, (i + 1) % ls.len(), &root));
        }
    }

    #[test]
    fn mutated_leaf_fails_verification() {
        // Mutate-and-verify oracle: flipping any byte of any leaf must break
        // its proof against the original root.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..1000 {
            let n = rng.random_range(1..=16);
            let ls = leaves(n, case);
            let (root, proofs) = merkle_build(&ls).unwrap();
            let i = rng.random_range(0..n);
            let mut bad = ls[i].clone();
            let byte = rng.random_range(0..bad.len());
            bad[byte] ^= 1 << rng.random_range(0..8);
            assert!(!merkle_verify(&proofs[i], &bad, i, &root), "case {case}");
        }
    }

    #[test]
    fn proof_from_other_tree_fails() {
        let a = leaves(4, 1);
        let b = leaves(4, 2);
        let (root_a, _) = merkle_build(&a).unwrap();
        let (_, proofs_b) = merkle_build(&b).unwrap();
        assert!(!merkle_verify(&proofs_b[0], &b[0], 0, &root_a));
        assert!(!merkle_verify(&proofs_b[0], &a[0], 0, &root_a));
    }

    #[test]
    fn distinct_leaf_lists_distinct_roots() {
        // Collision smoke test over a pile of randomized leaf lists.
        let mut roots = HashSet::new();
        for seed in 0..200u64 {
            let n = (seed as usize % 9) + 1;
            let (root, _) = merkle_build(&leaves(n, seed)).unwrap();
            assert!(roots.insert(root), "root collision at seed {seed}");
        }
        // Leaf/node domain separation: a two-leaf tree's root differs from a
        // single leaf whose bytes are the concatenated child hashes.
        let ls = leaves(2, 7);
        let (root, _) = merkle_build(&ls).unwrap();
        let mut cat = Vec::new();
        cat.extend_from_slice(&leaf_hash(&ls[0]).0);
        cat.extend_from_slice(&leaf_hash(&ls[1]).0);
        let (fake, _) = merkle_build(&[cat]).unwrap();
        assert_ne!(root, fake);
    }
}
