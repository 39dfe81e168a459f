//! (2f+1, n) threshold-signature abstraction.
//!
//! The protocol only needs three operations — sign a digest, combine 2f+1
//! distinct partials, verify the aggregate — so the scheme is a trait with
//! two implementations:
//!
//! * [`SimTsigScheme`]: a deterministic simulation scheme. A partial is a
//!   keyed MAC over (signer, message); an aggregate is the sorted signer set
//!   plus a MAC over (signer set, message). Verification checks the set size
//!   against the threshold and the MAC. Every test uses this scheme.
//! * `BlsScheme` (feature `bls`): BLS signatures over BLS12-381 with
//!   signer-set aggregation, behind the same contract.
//!
//! Byzantine strategies in the simulator only ever hold their own node's
//! signing handle, so neither scheme lets them produce a partial for an
//! honest signer.

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use super::{Digest, NodeId, DIGEST_LEN};
use crate::wire::{self, Encode, Reader, WireError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TsigError {
    #[error("threshold not met: need {need} distinct valid partials, got {got}")]
    ThresholdNotMet { need: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialSignature {
    pub signer: NodeId,
    pub bytes: Vec<u8>,
}

impl Encode for PartialSignature {
    fn encode(&self, out: &mut Vec<u8>) {
        wire::put_u16(out, self.signer);
        wire::put_bytes(out, &self.bytes);
    }

    fn wire_size(&self) -> usize {
        2 + wire::bytes_size(&self.bytes)
    }
}

impl PartialSignature {
    pub fn decode(r: &mut Reader<'_>) -> Result<PartialSignature, WireError> {
        Ok(PartialSignature {
            signer: r.get_u16()?,
            bytes: r.get_bytes()?,
        })
    }
}

/// Aggregate of at least 2f+1 partials over one message. `signers` is sorted
/// and duplicate-free; the all-empty value is the genesis placeholder, which
/// never verifies under a scheme and is special-cased by certificate types.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct AggregateSignature {
    pub signers: Vec<NodeId>,
    pub bytes: Vec<u8>,
}

impl AggregateSignature {
    pub fn empty() -> AggregateSignature {
        AggregateSignature::default()
    }

    pub fn is_empty(&self) -> bool {
        self.signers.is_empty() && self.bytes.is_empty()
    }
}

impl Encode for AggregateSignature {
    fn encode(&self, out: &mut Vec<u8>) {
        wire::put_u16(out, self.signers.len() as u16);
        for s in &self.signers {
            wire::put_u16(out, *s);
        }
        wire::put_bytes(out, &self.bytes);
    }

    fn wire_size(&self) -> usize {
        2 + 2 * self.signers.len() + wire::bytes_size(&self.bytes)
    }
}

impl AggregateSignature {
    pub fn decode(r: &mut Reader<'_>) -> Result<AggregateSignature, WireError> {
        let count = r.get_u16()? as usize;
        let mut signers = Vec::with_capacity(count);
        for _ in 0..count {
            signers.push(r.get_u16()?);
        }
        Ok(AggregateSignature {
            signers,
            bytes: r.get_bytes()?,
        })
    }
}

pub trait ThresholdScheme: Send + Sync {
    /// Partial signature threshold, 2f+1.
    fn threshold(&self) -> usize;

    fn sign(&self, signer: NodeId, message: &Digest) -> PartialSignature;

    fn verify_partial(&self, message: &Digest, partial: &PartialSignature) -> bool;

    /// Combines distinct valid partials over `message`. Duplicate signers
    /// count once; invalid partials are dropped; fewer than 2f+1 surviving
    /// signers is an error.
    fn combine(
        &self,
        message: &Digest,
        partials: &[PartialSignature],
    ) -> Result<AggregateSignature, TsigError>;

    fn verify_aggregate(&self, message: &Digest, sig: &AggregateSignature) -> bool;
}

/// Collects the distinct signers whose partials verify, sorted.
fn distinct_valid(
    scheme: &dyn ThresholdScheme,
    message: &Digest,
    partials: &[PartialSignature],
) -> Vec<NodeId> {
    let mut signers: Vec<NodeId> = partials
        .iter()
        .filter(|p| scheme.verify_partial(message, p))
        .map(|p| p.signer)
        .collect();
    signers.sort_unstable();
    signers.dedup();
    signers
}

fn canonical_signer_set(signers: &[NodeId]) -> bool {
    signers.windows(2).all(|w| w[0] < w[1])
}

/// Deterministic keyed-MAC scheme for simulation.
#[derive(Clone, Debug)]
pub struct SimTsigScheme {
    secret: [u8; 32],
    threshold: usize,
}

const PARTIAL_TAG: u8 = 0x10;
const AGGREGATE_TAG: u8 = 0x11;

impl SimTsigScheme {
    pub fn new(run_secret: u64, threshold: usize) -> SimTsigScheme {
        let mut h = Sha256::new();
        h.update(b"tsig-secret");
        h.update(run_secret.to_le_bytes());
        SimTsigScheme {
            secret: h.finalize().into(),
            threshold,
        }
    }

    fn mac(&self, tag: u8, message: &Digest, signers: &[NodeId]) -> [u8; DIGEST_LEN] {
        let mut h = Sha256::new();
        h.update([tag]);
        h.update(self.secret);
        h.update(message.0);
        for s in signers {
            h.update(s.to_le_bytes());
        }
        h.finalize().into()
    }
}

impl ThresholdScheme for SimTsigScheme {
    fn threshold(&self) -> usize {
        self.threshold
    }

    fn sign(&self, signer: NodeId, message: &Digest) -> PartialSignature {
        PartialSignature {
            signer,
            bytes: self.mac(PARTIAL_TAG, message, &[signer]).to_vec(),
        }
    }

    fn verify_partial(&self, message: &Digest, partial: &PartialSignature) -> bool {
        partial.bytes == self.mac(PARTIAL_TAG, message, &[partial.signer])
    }

    fn combine(
        &self,
        message: &Digest,
        partials: &[PartialSignature],
    ) -> Result<AggregateSignature, TsigError> {
        let signers = distinct_valid(self, message, partials);
        if signers.len() < self.threshold {
            return Err(TsigError::ThresholdNotMet {
                need: self.threshold,
                got: signers.len(),
            });
        }
        let bytes = self.mac(AGGREGATE_TAG, message, &signers).to_vec();
        Ok(AggregateSignature { signers, bytes })
    }

    fn verify_aggregate(&self, message: &Digest, sig: &AggregateSignature) -> bool {
        sig.signers.len() >= self.threshold
            && canonical_signer_set(&sig.signers)
            && sig.bytes == self.mac(AGGREGATE_TAG, message, &sig.signers)
    }
}

/// BLS over BLS12-381: partials in G1 via hash-to-curve, public keys in G2,
/// aggregation by point addition over a recorded signer set. Key material is
/// derived deterministically from the run secret.
#[cfg(feature = "bls")]
pub mod bls {
    use super::*;
    use bls12_381::hash_to_curve::{ExpandMsgXmd, HashToCurve};
    use bls12_381::{pairing, G1Affine, G1Projective, G2Affine, G2Projective, Scalar};
    use sha2_09::Sha256 as Sha256Xmd;

    const DST: &[u8] = b"SMPBFT_BLS_SIG_XMD:SHA-256_SSWU_RO_";

    pub struct BlsScheme {
        secrets: Vec<Scalar>,
        pubkeys: Vec<G2Affine>,
        threshold: usize,
    }

    fn derive_scalar(run_secret: u64, signer: NodeId) -> Scalar {
        let mut wide = [0u8; 64];
        let mut h = Sha256::new();
        h.update(b"bls-sk");
        h.update(run_secret.to_le_bytes());
        h.update(signer.to_le_bytes());
        wide[..32].copy_from_slice(&h.finalize());
        Scalar::from_bytes_wide(&wide)
    }

    fn hash_to_g1(message: &Digest) -> G1Projective {
        <G1Projective as HashToCurve<ExpandMsgXmd<Sha256Xmd>>>::hash_to_curve(&message.0, DST)
    }

    impl BlsScheme {
        pub fn new(run_secret: u64, n: usize, threshold: usize) -> BlsScheme {
            let secrets: Vec<Scalar> = (0..n as NodeId).map(|i| derive_scalar(run_secret, i)).collect();
            let pubkeys = secrets
                .iter()
                .map(|sk| G2Affine::from(G2Projective::generator() * sk))
                .collect();
            BlsScheme {
                secrets,
                pubkeys,
                threshold,
            }
        }
    }

    impl ThresholdScheme for BlsScheme {
        fn threshold(&self) -> usize {
            self.threshold
        }

        fn sign(&self, signer: NodeId, message: &Digest) -> PartialSignature {
            let sig = hash_to_g1(message) * self.secrets[signer as usize];
            PartialSignature {
                signer,
                bytes: G1Affine::from(sig).to_compressed().to_vec(),
            }
        }

        fn verify_partial(&self, message: &Digest, partial: &PartialSignature) -> bool {
            let Some(pk) = self.pubkeys.get(partial.signer as usize) else {
                return false;
            };
            let Ok(raw) = <[u8; 48]>::try_from(partial.bytes.as_slice()) else {
                return false;
            };
            let sig = G1Affine::from_compressed(&raw);
            if sig.is_none().into() {
                return false;
            }
            let sig = sig.unwrap();
            pairing(&sig, &G2Affine::generator())
                == pairing(&G1Affine::from(hash_to_g1(message)), pk)
        }

        fn combine(
            &self,
            message: &Digest,
            partials: &[PartialSignature],
        ) -> Result<AggregateSignature, TsigError> {
            let signers = distinct_valid(self, message, partials);
            if signers.len() < self.threshold {
                return Err(TsigError::ThresholdNotMet {
                    need: self.threshold,
                    got: signers.len(),
                });
            }
            let mut acc = G1Projective::identity();
            for s in &signers {
                let p = partials
                    .iter()
                    .find(|p| p.signer == *s && self.verify_partial(message, p))
                    .expect("signer came from distinct_valid");
                let raw = <[u8; 48]>::try_from(p.bytes.as_slice()).unwrap();
                acc += G1Projective::from(G1Affine::from_compressed(&raw).unwrap());
            }
            Ok(AggregateSignature {
                signers,
                bytes: G1Affine::from(acc).to_compressed().to_vec(),
            })
        }

        fn verify_aggregate(&self, message: &Digest, sig: &AggregateSignature) -> bool {
            if sig.signers.len() < self.threshold || !canonical_signer_set(&sig.signers) {
                return false;
            }
            if sig.signers.iter().any(|s| *s as usize >= self.pubkeys.len()) {
                return false;
            }
            let Ok(raw) = <[u8; 48]>::try_from(sig.bytes.as_slice()) else {
                return false;
            };
            let agg = G1Affine::from_compressed(&raw);
            if agg.is_none().into() {
                return false;
            }
            let mut pk = G2Projective::identity();
            for s in &sig.signers {
                pk += G2Projective::from(self.pubkeys[*s as usize]);
            }
            pairing(&agg.unwrap(), &G2Affine::generator())
                == pairing(&G1Affine::from(hash_to_g1(message)), &G2Affine::from(pk))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::hash_tagged;

    fn scheme_n4() -> SimTsigScheme {
        // n = 4, f = 1: threshold 2f+1 = 3.
        SimTsigScheme::new(42, 3)
    }

    fn msg(s: &str) -> Digest {
        hash_tagged(0xFF, s.as_bytes())
    }

    #[test]
    fn three_distinct_partials_aggregate() {
        let s = scheme_n4();
        let m = msg("m");
        let partials: Vec<_> = [0, 1, 3].iter().map(|i| s.sign(*i, &m)).collect();
        let agg = s.combine(&m, &partials).unwrap();
        assert_eq!(agg.signers, vec![0, 1, 3]);
        assert!(s.verify_aggregate(&m, &agg));
    }

    #[test]
    fn two_partials_threshold_not_met() {
        let s = scheme_n4();
        let m = msg("m");
        let partials: Vec<_> = [0, 1].iter().map(|i| s.sign(*i, &m)).collect();
        assert_eq!(
            s.combine(&m, &partials).unwrap_err(),
            TsigError::ThresholdNotMet { need: 3, got: 2 }
        );
    }

    #[test]
    fn duplicate_signers_count_once() {
        let s = scheme_n4();
        let m = msg("m");
        let partials = vec![s.sign(0, &m), s.sign(0, &m), s.sign(1, &m), s.sign(1, &m)];
        assert_eq!(
            s.combine(&m, &partials).unwrap_err(),
            TsigError::ThresholdNotMet { need: 3, got: 2 }
        );
    }

    #[test]
    fn partial_over_wrong_message_dropped() {
        let s = scheme_n4();
        let m = msg("m");
        let other = s.sign(2, &msg("other"));
        let mut partials: Vec<_> = [0, 1].iter().map(|i| s.sign(*i, &m)).collect();
        partials.push(other);
        assert!(s.combine(&m, &partials).is_err());
    }

    #[test]
    fn aggregate_fails_on_wrong_digest() {
        let s = scheme_n4();
        let m = msg("m");
        let partials: Vec<_> = [0, 1, 2].iter().map(|i| s.sign(*i, &m)).collect();
        let agg = s.combine(&m, &partials).unwrap();
        assert!(!s.verify_aggregate(&msg("other"), &agg));
    }

    #[test]
    fn forged_partial_never_verifies() {
        let s = scheme_n4();
        let m = msg("m");
        let forged = PartialSignature {
            signer: 2,
            bytes: vec![0u8; 32],
        };
        assert!(!s.verify_partial(&m, &forged));
        // An aggregate whose signer set was tampered with fails too.
        let partials: Vec<_> = [0, 1, 2].iter().map(|i| s.sign(*i, &m)).collect();
        let mut agg = s.combine(&m, &partials).unwrap();
        agg.signers = vec![0, 1, 3];
        assert!(!s.verify_aggregate(&m, &agg));
    }

    #[test]
    fn padded_signer_set_rejected() {
        let s = scheme_n4();
        let m = msg("m");
        let partials: Vec<_> = [0, 1, 2].iter().map(|i| s.sign(*i, &m)).collect();
        let mut agg = s.combine(&m, &partials).unwrap();
        // Duplicating an entry to fake a larger quorum breaks canonicity.
        agg.signers = vec![0, 1, 1, 2];
        assert!(!s.verify_aggregate(&m, &agg));
    }

    #[test]
    fn empty_aggregate_never_verifies() {
        let s = scheme_n4();
        assert!(!s.verify_aggregate(&msg("m"), &AggregateSignature::empty()));
    }

    #[test]
    fn wire_round_trip() {
        let s = scheme_n4();
        let m = msg("m");
        let partials: Vec<_> = [0, 1, 2].iter().map(|i| s.sign(*i, &m)).collect();
        let agg = s.combine(&m, &partials).unwrap();
        let bytes = agg.to_bytes();
        assert_eq!(bytes.len(), agg.wire_size());
        let mut r = Reader::new(&bytes);
        assert_eq!(AggregateSignature::decode(&mut r).unwrap(), agg);
    }

    #[cfg(feature = "bls")]
    mod bls_tests {
        use super::super::bls::BlsScheme;
        use super::*;

        #[test]
        fn bls_same_contract() {
            let s = BlsScheme::new(42, 4, 3);
            let m = msg("m");
            let partials: Vec<_> = [0u16, 2, 3].iter().map(|i| s.sign(*i, &m)).collect();
            assert!(partials.iter().all(|p| s.verify_partial(&m, p)));
            let agg = s.combine(&m, &partials).unwrap();
            assert!(s.verify_aggregate(&m, &agg));
            assert!(!s.verify_aggregate(&msg("other"), &agg));
            let two: Vec<_> = [0u16, 2].iter().map(|i| s.sign(*i, &m)).collect();
            assert!(s.combine(&m, &two).is_err());
        }
    }
}
