//! A laboratory for ZK-friendly hashing over the BN254 scalar field.
//!
//! - [`field`]: the scalar field itself.
//! - [`permutations`]: MiMC, GMiMC, Poseidon, Poseidon2 and Neptune plus a
//!   fixed-arity sponge.
//! - [`merkle`]: fully populated and incremental fixed-depth Merkle trees.
//! - [`circuit`]: an arithmetic-circuit IR lowered to R1CS and Plonkish.
//! - [`hash_circuits`]: hash, deposit and withdrawal gadgets.
//! - [`mixer`]: a simulator of a sequencer-batched mixer.
//! - [`costmodel`]: closed-form constraint and gas models.

pub mod circuit;
pub mod costmodel;
pub mod field;
pub mod hash_circuits;
pub mod merkle;
pub mod mixer;
pub mod permutations;

pub use field::FieldElement;
