//! On-chain state machine: deposits, slot commits and withdrawals.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;

use super::proof::{SimProof, WithdrawPublic};
use super::sequencer::SlotBatch;
use super::{Address, DepositEvent, MixerConfig, MixerError, Rejection};
use crate::circuit::R1csSystem;
use crate::field::FieldElement;
use crate::hash_circuits::{build_withdraw_gadget_with, note_commitment, Gadget, WithdrawConfig};
use crate::merkle::{verify_composed, IncrementalMerkleTree};
use crate::permutations::Hasher;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GasOp {
    Deposit,
    Commit,
    Withdraw,
}

impl GasOp {
    pub fn name(&self) -> &'static str {
        match self {
            GasOp::Deposit => "deposit",
            GasOp::Commit => "commit",
            GasOp::Withdraw => "withdraw",
        }
    }
}

/// A withdrawal as it reaches the contract.
#[derive(Debug, Clone)]
pub struct WithdrawRequest {
    pub root: FieldElement,
    pub nullifier_hash: FieldElement,
    pub recipient: Address,
    pub relayer: Address,
    pub fee: u64,
    pub refund: u64,
    pub proof: SimProof,
}

impl WithdrawRequest {
    pub fn public(&self) -> WithdrawPublic {
        WithdrawPublic {
            root: self.root,
            nullifier_hash: self.nullifier_hash,
            recipient: self.recipient.to_field(),
            relayer: self.relayer.to_field(),
            fee: FieldElement::from_u64(self.fee),
            refund: FieldElement::from_u64(self.refund),
        }
    }
}

/// Verification key material: the withdrawal circuit lowered once.
struct Verifier {
    gadget: Gadget,
    r1cs: R1csSystem,
}

pub struct Contract {
    d_slot: u32,
    denomination: u64,
    gas: crate::costmodel::GasSchedule,
    tree_hasher: Arc<Hasher>,
    commit_hasher: Arc<Hasher>,
    digest_hasher: Arc<Hasher>,
    era: IncrementalMerkleTree,
    slot_roots: Vec<FieldElement>,
    /// Published leaves of every committed slot.
    slots: Vec<Vec<FieldElement>>,
    events: Vec<DepositEvent>,
    committed: BTreeSet<usize>,
    spent: BTreeSet<FieldElement>,
    balances: BTreeMap<Address, u64>,
    initial_balance: u64,
    pool: u64,
    deposited: u64,
    paid: u64,
    fees: u64,
    gas_log: Vec<(GasOp, u64)>,
    verifier: Verifier,
}

impl Contract {
    pub fn new(
        cfg: &MixerConfig,
        tree_hasher: Arc<Hasher>,
        commit_hasher: Arc<Hasher>,
        digest_hasher: Arc<Hasher>,
    ) -> Result<Self, MixerError> {
        let era = IncrementalMerkleTree::with_history(tree_hasher.clone(), cfg.d_era, cfg.root_history)?;
        let wcfg = WithdrawConfig {
            tree: Arc::new(tree_hasher.spec().clone()),
            commitment: Arc::new(commit_hasher.spec().clone()),
            d_slot: cfg.d_slot,
            d_era: cfg.d_era,
        };
        let gadget = build_withdraw_gadget_with(&wcfg)?;
        let r1cs = gadget.circuit().lower_to_r1cs();
        Ok(Contract {
            d_slot: cfg.d_slot,
            denomination: cfg.denomination,
            gas: cfg.gas.clone(),
            tree_hasher,
            commit_hasher,
            digest_hasher,
            era,
            slot_roots: Vec::new(),
            slots: Vec::new(),
            events: Vec::new(),
            committed: BTreeSet::new(),
            spent: BTreeSet::new(),
            balances: cfg.balances.clone(),
            initial_balance: cfg.initial_balance,
            pool: 0,
            deposited: 0,
            paid: 0,
            fees: 0,
            gas_log: Vec::new(),
            verifier: Verifier { gadget, r1cs },
        })
    }

    pub fn balance(&self, addr: &Address) -> u64 {
        self.balances.get(addr).copied().unwrap_or(self.initial_balance)
    }

    fn balance_mut(&mut self, addr: &Address) -> &mut u64 {
        let init = self.initial_balance;
        self.balances.entry(addr.clone()).or_insert(init)
    }

    pub fn balances(&self) -> &BTreeMap<Address, u64> {
        &self.balances
    }

    pub fn pool(&self) -> u64 {
        self.pool
    }

    pub fn total_deposited(&self) -> u64 {
        self.deposited
    }

    pub fn total_paid(&self) -> u64 {
        self.paid
    }

    pub fn total_fees(&self) -> u64 {
        self.fees
    }

    /// Pool plus everything paid out equals everything deposited.
    pub fn conserved(&self) -> bool {
        self.pool + self.paid + self.fees == self.deposited
    }

    pub fn era_root(&self) -> FieldElement {
        self.era.root()
    }

    pub fn era(&self) -> &IncrementalMerkleTree {
        &self.era
    }

    pub fn slot_roots(&self) -> &[FieldElement] {
        &self.slot_roots
    }

    pub fn slots(&self) -> &[Vec<FieldElement>] {
        &self.slots
    }

    pub fn events(&self) -> &[DepositEvent] {
        &self.events
    }

    pub fn is_spent(&self, nullifier_hash: &FieldElement) -> bool {
        self.spent.contains(nullifier_hash)
    }

    pub fn spent_count(&self) -> usize {
        self.spent.len()
    }

    pub fn gas_log(&self) -> &[(GasOp, u64)] {
        &self.gas_log
    }

    pub fn is_known_root(&self, root: FieldElement) -> bool {
        self.era.is_known_root(root)
    }

    /// Moves one denomination into the pool and records the event. The era
    /// tree is untouched.
    pub fn deposit(
        &mut self,
        user: &Address,
        commitment: FieldElement,
        denomination: u64,
    ) -> Result<DepositEvent, Rejection> {
        if denomination != self.denomination {
            return Err(Rejection::Denomination);
        }
        if self.balance(user) < denomination {
            return Err(Rejection::InsufficientFunds);
        }
        *self.balance_mut(user) -= denomination;
        self.pool += denomination;
        self.deposited += denomination;
        let ev = DepositEvent { index: self.events.len(), depositor: user.clone(), commitment, denomination };
        self.events.push(ev.clone());
        self.gas_log.push((GasOp::Deposit, self.gas.deposit));
        Ok(ev)
    }

    /// Accepts a slot root with the sequencer's proof and inserts it into
    /// the era tree. Returns the new era root.
    pub fn commit_batch(
        &mut self,
        batch: &SlotBatch,
        r_slot: FieldElement,
        proof: &SimProof,
    ) -> Result<FieldElement, Rejection> {
        let size = 1usize << self.d_slot;
        if batch.leaves.len() != size || batch.events.len() != size {
            return Err(Rejection::InvalidBatch);
        }
        let mut seen = BTreeSet::new();
        for (ev, leaf) in batch.events.iter().zip(&batch.leaves) {
            let known = self.events.get(*ev).is_some_and(|e| e.commitment == *leaf);
            if !known || self.committed.contains(ev) || !seen.insert(*ev) {
                return Err(Rejection::InvalidBatch);
            }
        }
        if !proof.verify_slot(&self.digest_hasher, &self.tree_hasher, self.d_slot, &batch.leaves, r_slot) {
            return Err(Rejection::Soundness);
        }
        if self.era.next_index() >= self.era.capacity() {
            return Err(Rejection::EraFull);
        }
        let root = self.era.insert(r_slot).map_err(|_| Rejection::EraFull)?;
        self.slot_roots.push(r_slot);
        self.slots.push(batch.leaves.clone());
        self.committed.extend(batch.events.iter().copied());
        self.gas_log.push((GasOp::Commit, self.gas.commit));
        Ok(root)
    }

    /// Checks, in order: proof against the received public inputs, root
    /// freshness, nullifier freshness and composed membership. Pays out on
    /// success.
    pub fn withdraw(&mut self, req: &WithdrawRequest) -> Result<(), Rejection> {
        if req.fee > self.denomination || req.refund != 0 {
            return Err(Rejection::Fee);
        }
        let public = req.public();
        let v = &self.verifier;
        if !req.proof.verify_withdraw(&self.digest_hasher, &v.gadget, &v.r1cs, &public) {
            return Err(Rejection::Soundness);
        }
        if !self.era.is_known_root(req.root) {
            return Err(Rejection::StaleRoot);
        }
        if self.spent.contains(&req.nullifier_hash) {
            return Err(Rejection::DoubleSpend);
        }
        let w = req.proof.withdraw_witness().ok_or(Rejection::Soundness)?;
        let commitment = note_commitment(&self.commit_hasher, w.secret, w.nullifier);
        let slot_root = w.slot_path.fold(&self.tree_hasher, commitment);
        if !verify_composed(&self.tree_hasher, commitment, &w.slot_path, slot_root, &w.era_path, req.root) {
            return Err(Rejection::Membership);
        }
        self.spent.insert(req.nullifier_hash);
        let payout = self.denomination - req.fee;
        self.pool -= self.denomination;
        self.paid += payout;
        self.fees += req.fee;
        *self.balance_mut(&req.recipient) += payout;
        *self.balance_mut(&req.relayer) += req.fee;
        self.gas_log.push((GasOp::Withdraw, self.gas.withdraw));
        Ok(())
    }
}
