//! Erasure-coded shared-mempool BFT.
//!
//! Each node packages client transactions into chained *microblocks*,
//! disperses them as Reed-Solomon chunks under a Merkle commitment, and
//! collects an *availability certificate* (AC) — an aggregate of 2f+1 signed
//! acknowledgments — proving the microblock can be reconstructed by every
//! honest node. A pipelined, leader-rotating BFT core (Fast-HotStuff style)
//! then orders only the certificates; committed microblocks are pulled back
//! together in a chunk-broadcast retrieval phase, expanded in chain order,
//! and executed against a toy key-value state machine.
//!
//! Everything runs inside [`netsim`], a deterministic discrete-event
//! simulator with per-node bandwidth modeling and a catalog of Byzantine
//! strategies, so protocol invariants (certificate uniqueness, totality,
//! chain consistency, safety, liveness, order keeping) are checked over
//! seeded adversarial executions. [`baseline`] provides a pull-based shared
//! mempool under the same consensus core for comparison runs.

pub mod baseline;
pub mod consensus;
pub mod harness;
pub mod netsim;
pub mod node;
pub mod ordering;
pub mod pacing;
pub mod primitives;
pub mod smp;
pub mod wire;
