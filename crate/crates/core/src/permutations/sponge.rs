use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{permute_in_place, HashError, HashKind, PermutationSpec};
use crate::field::FieldElement;

/// Fixed-arity sponge. Inputs are added into lanes `0..rate` of a
/// zero-initialized state with one permutation per block. The digest is
/// lane 0 of the final state. There is no padding rule; callers fix the
/// input length up front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpongeConfig {
    pub rate: usize,
    pub capacity: usize,
}

impl SpongeConfig {
    /// Rate `t - 1`, capacity 1.
    pub fn for_spec(spec: &PermutationSpec) -> Self {
        SpongeConfig { rate: spec.width() - 1, capacity: 1 }
    }

    pub fn check(&self, spec: &PermutationSpec) -> Result<(), HashError> {
        if self.rate == 0 || self.rate + self.capacity != spec.width() {
            return Err(HashError::BadRate { rate: self.rate, width: spec.width() });
        }
        Ok(())
    }

    /// Permutation calls needed to absorb `n` inputs.
    pub fn blocks(&self, n: usize) -> usize {
        n.div_ceil(self.rate)
    }
}

fn absorb(
    spec: &PermutationSpec,
    sponge: &SpongeConfig,
    inputs: &[FieldElement],
    mut on_permute: impl FnMut(),
) -> Result<FieldElement, HashError> {
    sponge.check(spec)?;
    if inputs.is_empty() {
        return Err(HashError::EmptyInput);
    }
    let mut state = vec![FieldElement::ZERO; spec.width()];
    for block in inputs.chunks(sponge.rate) {
        for (lane, x) in state.iter_mut().zip(block) {
            *lane += *x;
        }
        permute_in_place(spec, &mut state)?;
        on_permute();
    }
    Ok(state[0])
}

pub fn sponge_hash(
    spec: &PermutationSpec,
    sponge: &SpongeConfig,
    inputs: &[FieldElement],
) -> Result<FieldElement, HashError> {
    absorb(spec, sponge, inputs, || {})
}

pub fn hash2(
    spec: &PermutationSpec,
    sponge: &SpongeConfig,
    left: FieldElement,
    right: FieldElement,
) -> Result<FieldElement, HashError> {
    sponge_hash(spec, sponge, &[left, right])
}

/// A validated (permutation, sponge) pair with call counters.
///
/// Counters are shared by reference only; cloning a `Hasher` starts fresh
/// counters over the same parameters.
#[derive(Debug)]
pub struct Hasher {
    spec: Arc<PermutationSpec>,
    sponge: SpongeConfig,
    hash_calls: AtomicU64,
    permutation_calls: AtomicU64,
}

impl Clone for Hasher {
    fn clone(&self) -> Self {
        Hasher {
            spec: Arc::clone(&self.spec),
            sponge: self.sponge,
            hash_calls: AtomicU64::new(0),
            permutation_calls: AtomicU64::new(0),
        }
    }
}

impl Hasher {
    pub fn new(spec: PermutationSpec) -> Self {
        let sponge = SpongeConfig::for_spec(&spec);
        Self::with_sponge(Arc::new(spec), sponge).expect("default sponge fits")
    }

    pub fn builtin(kind: HashKind) -> Self {
        Self::new(PermutationSpec::builtin(kind))
    }

    pub fn with_sponge(spec: Arc<PermutationSpec>, sponge: SpongeConfig) -> Result<Self, HashError> {
        sponge.check(&spec)?;
        Ok(Hasher {
            spec,
            sponge,
            hash_calls: AtomicU64::new(0),
            permutation_calls: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &PermutationSpec {
        &self.spec
    }

    pub fn sponge(&self) -> SpongeConfig {
        self.sponge
    }

    pub fn kind(&self) -> HashKind {
        self.spec.kind()
    }

    pub fn hash(&self, inputs: &[FieldElement]) -> Result<FieldElement, HashError> {
        self.hash_calls.fetch_add(1, Ordering::Relaxed);
        absorb(&self.spec, &self.sponge, inputs, || {
            self.permutation_calls.fetch_add(1, Ordering::Relaxed);
        })
    }

    /// Two-to-one compression used for Merkle nodes and commitments.
    pub fn hash2(&self, left: FieldElement, right: FieldElement) -> FieldElement {
        self.hash(&[left, right]).expect("two inputs always absorb")
    }

    /// Number of `hash`/`hash2` calls since construction or the last reset.
    pub fn calls(&self) -> u64 {
        self.hash_calls.load(Ordering::Relaxed)
    }

    pub fn permutation_calls(&self) -> u64 {
        self.permutation_calls.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.hash_calls.store(0, Ordering::Relaxed);
        self.permutation_calls.store(0, Ordering::Relaxed);
    }
}
