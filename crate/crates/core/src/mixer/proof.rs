//! Simulated proofs.
//!
//! A `SimProof` is NOT a cryptographic proof. It carries a digest over the
//! public inputs the prover committed to and a handle to the prover's
//! witness; verification recomputes the relation from that witness against
//! the public inputs the verifier actually received. This reproduces the
//! soundness consequences the protocol relies on (a proof is tied to its
//! recipient, nullifier and roots) without a proving system.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::circuit::{check_satisfied, R1csSystem};
use crate::field::FieldElement;
use crate::hash_circuits::{tx_binding, Gadget, WithdrawWitness};
use crate::merkle::MerkleTree;
use crate::permutations::Hasher;

const SLOT_DOMAIN: u64 = 0x736c_6f74;
const WITHDRAW_DOMAIN: u64 = 0x7769_7468;

#[derive(Debug, Clone)]
enum ProverWitness {
    Slot { leaves: Vec<FieldElement> },
    Withdraw(Box<WithdrawWitness>),
}

#[derive(Debug, Clone)]
pub struct SimProof {
    digest: FieldElement,
    witness: Arc<ProverWitness>,
}

/// Public inputs of a withdrawal, in circuit order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WithdrawPublic {
    pub root: FieldElement,
    pub nullifier_hash: FieldElement,
    pub recipient: FieldElement,
    pub relayer: FieldElement,
    pub fee: FieldElement,
    pub refund: FieldElement,
}

impl WithdrawPublic {
    fn digest(&self, hasher: &Hasher) -> FieldElement {
        let binding = tx_binding(self.recipient, self.relayer, self.fee, self.refund);
        hasher
            .hash(&[
                FieldElement::from_u64(WITHDRAW_DOMAIN),
                self.root,
                self.nullifier_hash,
                self.recipient,
                self.relayer,
                self.fee,
                self.refund,
                binding,
            ])
            .expect("nonempty input")
    }
}

fn slot_digest(hasher: &Hasher, r_slot: FieldElement, leaves: &[FieldElement]) -> FieldElement {
    let mut input = vec![FieldElement::from_u64(SLOT_DOMAIN), r_slot];
    input.extend_from_slice(leaves);
    hasher.hash(&input).expect("nonempty input")
}

impl SimProof {
    /// Sequencer's proof that `r_slot` is the root over `leaves`.
    pub fn prove_slot(digest_hasher: &Hasher, leaves: Vec<FieldElement>, r_slot: FieldElement) -> Self {
        SimProof { digest: slot_digest(digest_hasher, r_slot, &leaves), witness: Arc::new(ProverWitness::Slot { leaves }) }
    }

    pub fn prove_withdraw(digest_hasher: &Hasher, witness: WithdrawWitness, public: &WithdrawPublic) -> Self {
        SimProof {
            digest: public.digest(digest_hasher),
            witness: Arc::new(ProverWitness::Withdraw(Box::new(witness))),
        }
    }

    /// The slot relation: the digest names `r_slot` and the published
    /// leaves, and those leaves hash to `r_slot`.
    pub fn verify_slot(
        &self,
        digest_hasher: &Hasher,
        tree_hasher: &Hasher,
        d_slot: u32,
        published: &[FieldElement],
        r_slot: FieldElement,
    ) -> bool {
        let ProverWitness::Slot { leaves } = &*self.witness else { return false };
        if self.digest != slot_digest(digest_hasher, r_slot, published) || leaves != published {
            return false;
        }
        MerkleTree::build(tree_hasher, leaves, d_slot).map(|t| t.root() == r_slot).unwrap_or(false)
    }

    /// The withdrawal relation, checked on the circuit: the prover's private
    /// signals combined with the verifier's public inputs must satisfy it.
    pub fn verify_withdraw(
        &self,
        digest_hasher: &Hasher,
        gadget: &Gadget,
        r1cs: &R1csSystem,
        public: &WithdrawPublic,
    ) -> bool {
        let ProverWitness::Withdraw(w) = &*self.witness else { return false };
        if self.digest != public.digest(digest_hasher) {
            return false;
        }
        let (d_slot, d_era) = match gadget.shape() {
            crate::hash_circuits::GadgetShape::Withdraw { d_slot, d_era } => (d_slot, d_era),
            _ => return false,
        };
        let Ok(mut signals) = w.signals(d_slot, d_era) else { return false };
        let overrides: BTreeMap<&str, FieldElement> = BTreeMap::from([
            ("root", public.root),
            ("nullifier_hash", public.nullifier_hash),
            ("recipient", public.recipient),
            ("relayer", public.relayer),
            ("fee", public.fee),
            ("refund", public.refund),
        ]);
        for (k, v) in overrides {
            signals.insert(k.to_string(), v);
        }
        match gadget.eval(&signals) {
            Ok(witness) => check_satisfied(r1cs, &witness).unwrap_or(false),
            Err(_) => false,
        }
    }

    /// The prover's withdrawal witness, for callers that need the paths.
    pub fn withdraw_witness(&self) -> Option<&WithdrawWitness> {
        match &*self.witness {
            ProverWitness::Withdraw(w) => Some(w),
            ProverWitness::Slot { .. } => None,
        }
    }
}
