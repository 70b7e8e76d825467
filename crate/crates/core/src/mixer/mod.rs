//! Deterministic simulator of the batched mixer: users make notes and
//! deposit, a FCFS sequencer packs admissible commitments into slots, and a
//! contract inserts slot roots into the era tree and pays out withdrawals.
//!
//! Proofs are simulated (see [`proof`]); nothing here is cryptographically
//! sound.

mod contract;
pub mod proof;
mod scenario;
mod sequencer;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use contract::{Contract, GasOp, WithdrawRequest};
pub use proof::{SimProof, WithdrawPublic};
pub use scenario::{Instruction, Scenario, ScenarioError, WithdrawMode};
pub use sequencer::{oas, Pending, Sequencer, SlotBatch, StepReport};

use crate::circuit::CircuitError;
use crate::costmodel::{GasSchedule, Rational};
use crate::field::FieldElement;
use crate::hash_circuits::{note_commitment, nullifier_hash, GadgetError, WithdrawWitness, MAX_SLOT_DEPTH};
use crate::merkle::{prove_in_prefix, MerkleError, MerkleTree, MAX_DEPTH};
use crate::permutations::{HashKind, Hasher};

/// An account name. Mapped into the field by hashing when it becomes a
/// public input.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    pub fn new(name: &str) -> Result<Self, String> {
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c.is_control()) {
            return Err(format!("invalid address `{name}`"));
        }
        Ok(Address(name.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First 31 bytes of SHA-256, so the value is always below p.
    pub fn to_field(&self) -> FieldElement {
        let digest = Sha256::new().chain_update(b"address:").chain_update(self.0.as_bytes()).finalize();
        let mut bytes = [0u8; 32];
        bytes[1..].copy_from_slice(&digest[..31]);
        FieldElement::from_bytes(&bytes).expect("248-bit value is canonical")
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Address {
    /// Panics on an invalid name; meant for literals.
    fn from(s: &str) -> Self {
        Address::new(s).expect("valid address literal")
    }
}

/// A user's private note. Never serialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Note {
    pub secret: FieldElement,
    pub nullifier: FieldElement,
    pub owner: Address,
    pub denomination: u64,
}

/// `E_dep`: a completed deposit as seen by the sequencer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DepositEvent {
    pub index: usize,
    pub depositor: Address,
    pub commitment: FieldElement,
    pub denomination: u64,
}

/// Why an operation was turned down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rejection {
    InsufficientFunds,
    Denomination,
    InvalidBatch,
    EraFull,
    Soundness,
    StaleRoot,
    DoubleSpend,
    Membership,
    Fee,
    UnknownNote,
    /// The note's commitment is in no committed slot, so no proof exists.
    NotIncluded,
    NothingToReplay,
}

impl Rejection {
    pub fn name(&self) -> &'static str {
        match self {
            Rejection::InsufficientFunds => "insufficient_funds",
            Rejection::Denomination => "denomination",
            Rejection::InvalidBatch => "invalid_batch",
            Rejection::EraFull => "era_full",
            Rejection::Soundness => "soundness",
            Rejection::StaleRoot => "stale_root",
            Rejection::DoubleSpend => "double_spend",
            Rejection::Membership => "membership",
            Rejection::Fee => "fee",
            Rejection::UnknownNote => "unknown_note",
            Rejection::NotIncluded => "not_included",
            Rejection::NothingToReplay => "nothing_to_replay",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Rejection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Result of one operation, serialized as `"accepted"` or the rejection cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Rejected(Rejection),
}

impl Outcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Outcome::Accepted)
    }
}

impl<T> From<Result<T, Rejection>> for Outcome {
    fn from(r: Result<T, Rejection>) -> Self {
        match r {
            Ok(_) => Outcome::Accepted,
            Err(e) => Outcome::Rejected(e),
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Outcome::Accepted => s.serialize_str("accepted"),
            Outcome::Rejected(r) => r.serialize(s),
        }
    }
}

#[derive(Debug, Error)]
pub enum MixerError {
    #[error("invalid mixer config: {0}")]
    Config(String),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error(transparent)]
    Gadget(#[from] GadgetError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

fn default_d_slot() -> u32 {
    5
}
fn default_d_era() -> u32 {
    20
}
fn default_denomination() -> u64 {
    100
}
fn default_initial_balance() -> u64 {
    10_000
}
fn default_hash() -> HashKind {
    HashKind::Poseidon2
}
fn default_root_history() -> usize {
    crate::merkle::DEFAULT_ROOT_HISTORY
}
fn default_relayer() -> Address {
    Address::from("relayer")
}
fn default_interceptor() -> Address {
    Address::from("interceptor")
}

/// Pool parameters. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixerConfig {
    #[serde(default = "default_d_slot")]
    pub d_slot: u32,
    #[serde(default = "default_d_era")]
    pub d_era: u32,
    /// The single amount this pool accepts.
    #[serde(default = "default_denomination")]
    pub denomination: u64,
    /// Balance of any address not listed in `balances`.
    #[serde(default = "default_initial_balance")]
    pub initial_balance: u64,
    #[serde(default)]
    pub balances: BTreeMap<Address, u64>,
    #[serde(default = "default_hash")]
    pub tree_hash: HashKind,
    #[serde(default = "default_hash")]
    pub commitment_hash: HashKind,
    #[serde(default = "default_root_history")]
    pub root_history: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_relayer")]
    pub relayer: Address,
    #[serde(default)]
    pub fee: u64,
    /// Who swaps in their own address on `--tamper-recipient`.
    #[serde(default = "default_interceptor")]
    pub interceptor: Address,
    #[serde(default)]
    pub gas: GasSchedule,
}

impl Default for MixerConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl MixerConfig {
    pub fn validate(&self) -> Result<(), MixerError> {
        let bad = |m: String| Err(MixerError::Config(m));
        if self.d_slot == 0 || self.d_slot > MAX_SLOT_DEPTH {
            return bad(format!("d_slot must be in 1..={MAX_SLOT_DEPTH}, got {}", self.d_slot));
        }
        if self.d_era == 0 || self.d_era > MAX_DEPTH {
            return bad(format!("d_era must be in 1..={MAX_DEPTH}, got {}", self.d_era));
        }
        if self.denomination == 0 {
            return bad("denomination must be positive".into());
        }
        if self.fee > self.denomination {
            return bad(format!("fee {} exceeds denomination {}", self.fee, self.denomination));
        }
        if self.root_history == 0 {
            return bad("root_history must be positive".into());
        }
        self.gas.validate().map_err(|e| MixerError::Config(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, MixerError> {
        let cfg: MixerConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn batch_size(&self) -> u64 {
        1u64 << self.d_slot
    }
}

/// `1 / oas`, or `None` before the first slot closes.
pub fn privacy(oas: u64) -> Option<Rational> {
    (oas > 0).then(|| Rational::new(1, oas as i128))
}

fn fmt_privacy(oas: u64) -> String {
    privacy(oas).map_or_else(|| "none".to_string(), |p| p.to_string())
}

/// One line of the event log. `t` is the instruction counter.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogEntry {
    Deposit {
        t: u64,
        note: usize,
        address: Address,
        denomination: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        commitment: Option<FieldElement>,
        outcome: Outcome,
        gas: u64,
    },
    Ban {
        t: u64,
        address: Address,
    },
    Unban {
        t: u64,
        address: Address,
    },
    Step {
        t: u64,
        skipped: Vec<usize>,
        batch: Vec<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        r_slot: Option<FieldElement>,
        #[serde(skip_serializing_if = "Option::is_none")]
        outcome: Option<Outcome>,
        gas: u64,
        oas: u64,
    },
    Withdraw {
        t: u64,
        note: usize,
        recipient: Address,
        mode: WithdrawMode,
        #[serde(skip_serializing_if = "Option::is_none")]
        nullifier_hash: Option<FieldElement>,
        outcome: Outcome,
        gas: u64,
        oas: u64,
        privacy: String,
    },
}

/// Run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub instructions: u64,
    pub deposits: u64,
    pub commits: u64,
    pub withdrawals: u64,
    pub skipped_deposits: u64,
    pub rejections: BTreeMap<String, u64>,
    pub gas: BTreeMap<String, u64>,
    pub total_gas: u64,
    /// Total gas over successful withdrawals; absent when there are none.
    pub amortized_gas: Option<f64>,
    pub amortized_gas_exact: Option<String>,
    pub oas_trajectory: Vec<u64>,
    pub final_oas: u64,
    pub privacy: String,
    pub pool: u64,
    pub paid: u64,
    pub fees: u64,
    pub conserved: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub log: Vec<LogEntry>,
    pub metrics: Metrics,
}

impl RunOutput {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run output serializes")
    }
}

/// Users, sequencer and contract advanced one instruction at a time.
pub struct Mixer {
    cfg: MixerConfig,
    tree_hasher: Arc<Hasher>,
    commit_hasher: Arc<Hasher>,
    digest_hasher: Arc<Hasher>,
    contract: Contract,
    sequencer: Sequencer,
    rng: ChaCha20Rng,
    /// Indexed by note id; `None` for deposits the contract refused.
    notes: Vec<Option<(Note, FieldElement)>>,
    last_request: BTreeMap<usize, WithdrawRequest>,
    t: u64,
    log: Vec<LogEntry>,
    oas_trajectory: Vec<u64>,
    accepted_nullifiers: BTreeSet<FieldElement>,
    violations: Vec<String>,
}

impl Mixer {
    pub fn new(cfg: MixerConfig) -> Result<Self, MixerError> {
        cfg.validate()?;
        let tree_hasher = Arc::new(Hasher::builtin(cfg.tree_hash));
        let commit_hasher = Arc::new(Hasher::builtin(cfg.commitment_hash));
        let digest_hasher = Arc::new(Hasher::builtin(HashKind::Poseidon2));
        let contract = Contract::new(&cfg, tree_hasher.clone(), commit_hasher.clone(), digest_hasher.clone())?;
        Ok(Mixer {
            sequencer: Sequencer::new(cfg.d_slot),
            rng: ChaCha20Rng::seed_from_u64(cfg.seed),
            cfg,
            tree_hasher,
            commit_hasher,
            digest_hasher,
            contract,
            notes: Vec::new(),
            last_request: BTreeMap::new(),
            t: 0,
            log: Vec::new(),
            oas_trajectory: Vec::new(),
            accepted_nullifiers: BTreeSet::new(),
            violations: Vec::new(),
        })
    }

    pub fn config(&self) -> &MixerConfig {
        &self.cfg
    }

    pub fn contract(&self) -> &Contract {
        &self.contract
    }

    pub fn sequencer(&self) -> &Sequencer {
        &self.sequencer
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn oas(&self) -> u64 {
        oas(self.cfg.d_slot, self.sequencer.completed_slots())
    }

    pub fn note(&self, id: usize) -> Option<&Note> {
        self.notes.get(id)?.as_ref().map(|(n, _)| n)
    }

    pub fn commitment(&self, id: usize) -> Option<FieldElement> {
        self.notes.get(id)?.as_ref().map(|(_, c)| *c)
    }

    /// Draws a fresh note for `owner` and deposits it. Returns the note id,
    /// which is allocated even when the contract refuses the deposit.
    pub fn deposit(&mut self, owner: &Address, denomination: u64) -> (usize, Result<DepositEvent, Rejection>) {
        let note = Note {
            secret: FieldElement::random(&mut self.rng),
            nullifier: FieldElement::random(&mut self.rng),
            owner: owner.clone(),
            denomination,
        };
        let commitment = note_commitment(&self.commit_hasher, note.secret, note.nullifier);
        let id = self.notes.len();
        let res = self.contract.deposit(owner, commitment, denomination);
        self.notes.push(res.is_ok().then_some((note, commitment)));
        (id, res)
    }

    pub fn ban(&mut self, addr: Address) {
        self.sequencer.ban(addr);
    }

    pub fn unban(&mut self, addr: &Address) {
        self.sequencer.unban(addr);
    }

    /// One sequencer step; a closed batch is proven and committed at once.
    pub fn sequencer_step(&mut self) -> (StepReport, Option<(FieldElement, Result<FieldElement, Rejection>)>) {
        let size = self.sequencer.batch_size();
        let backlog = self.sequencer.admissible_backlog(self.contract.events());
        let report = self.sequencer.step(self.contract.events());
        let Some(batch) = report.batch.clone() else {
            if backlog >= size {
                self.violations.push(format!("t={}: liveness: {backlog} admissible pending but no batch", self.t));
            }
            return (report, None);
        };
        for ev in &batch.events {
            if self.sequencer.is_banned(&self.contract.events()[*ev].depositor) {
                self.violations.push(format!("t={}: censorship: banned deposit {ev} in slot", self.t));
            }
        }
        let r_slot = MerkleTree::build(&self.tree_hasher, &batch.leaves, self.cfg.d_slot)
            .expect("batch fits its slot")
            .root();
        let proof = SimProof::prove_slot(&self.digest_hasher, batch.leaves.clone(), r_slot);
        let res = self.contract.commit_batch(&batch, r_slot, &proof);
        match res {
            Ok(_) => self.sequencer.mark_completed(),
            Err(_) => {
                let events = self.contract.events();
                self.sequencer.requeue(&batch, |i| events[i].depositor.clone());
            }
        }
        (report, Some((r_slot, res)))
    }

    /// Builds the honest request a note owner would send: paths from the
    /// published slots and slot roots, proof against the current era root.
    pub fn prepare_withdraw(&self, note_id: usize, recipient: &Address) -> Result<WithdrawRequest, Rejection> {
        let (note, commitment) = self.notes.get(note_id).and_then(|n| n.as_ref()).ok_or(Rejection::UnknownNote)?;
        let (slot, pos) = self
            .contract
            .slots()
            .iter()
            .enumerate()
            .find_map(|(s, leaves)| leaves.iter().position(|l| l == commitment).map(|p| (s, p)))
            .ok_or(Rejection::NotIncluded)?;
        let slot_tree = MerkleTree::build(&self.tree_hasher, &self.contract.slots()[slot], self.cfg.d_slot)
            .map_err(|_| Rejection::Membership)?;
        let slot_path = slot_tree.prove(pos as u64).map_err(|_| Rejection::Membership)?;
        let (era_path, root) =
            prove_in_prefix(&self.tree_hasher, self.contract.slot_roots(), self.cfg.d_era, slot as u64)
                .map_err(|_| Rejection::Membership)?;
        let public = WithdrawPublic {
            root,
            nullifier_hash: nullifier_hash(&self.commit_hasher, note.nullifier),
            recipient: recipient.to_field(),
            relayer: self.cfg.relayer.to_field(),
            fee: FieldElement::from_u64(self.cfg.fee),
            refund: FieldElement::ZERO,
        };
        let witness = WithdrawWitness {
            secret: note.secret,
            nullifier: note.nullifier,
            slot_path,
            era_path,
            root: public.root,
            nullifier_hash: public.nullifier_hash,
            recipient: public.recipient,
            relayer: public.relayer,
            fee: public.fee,
            refund: public.refund,
        };
        Ok(WithdrawRequest {
            root,
            nullifier_hash: public.nullifier_hash,
            recipient: recipient.clone(),
            relayer: self.cfg.relayer.clone(),
            fee: self.cfg.fee,
            refund: 0,
            proof: SimProof::prove_withdraw(&self.digest_hasher, witness, &public),
        })
    }

    pub fn submit(&mut self, req: &WithdrawRequest) -> Result<(), Rejection> {
        let res = self.contract.withdraw(req);
        if res.is_ok() && !self.accepted_nullifiers.insert(req.nullifier_hash) {
            self.violations.push(format!("t={}: nullifier accepted twice", self.t));
        }
        res
    }

    pub fn withdraw(&mut self, note_id: usize, recipient: &Address, mode: WithdrawMode) -> (Option<FieldElement>, Result<(), Rejection>) {
        let req = match mode {
            WithdrawMode::Replay => match self.last_request.get(&note_id) {
                Some(r) => Ok(r.clone()),
                None => Err(Rejection::NothingToReplay),
            },
            WithdrawMode::Honest => self.prepare_withdraw(note_id, recipient).inspect(|r| {
                self.last_request.insert(note_id, r.clone());
            }),
            WithdrawMode::TamperRecipient => self.prepare_withdraw(note_id, recipient).map(|mut r| {
                r.recipient = self.cfg.interceptor.clone();
                r
            }),
        };
        match req {
            Ok(r) => (Some(r.nullifier_hash), self.submit(&r)),
            Err(e) => (None, Err(e)),
        }
    }

    /// Applies one instruction and appends its log entry.
    pub fn apply(&mut self, ins: &Instruction) {
        self.t += 1;
        let t = self.t;
        let entry = match ins {
            Instruction::Deposit { address, denomination } => {
                let (note, res) = self.deposit(address, *denomination);
                LogEntry::Deposit {
                    t,
                    note,
                    address: address.clone(),
                    denomination: *denomination,
                    commitment: res.as_ref().ok().map(|e| e.commitment),
                    gas: if res.is_ok() { self.cfg.gas.deposit } else { 0 },
                    outcome: res.into(),
                }
            }
            Instruction::Ban(a) => {
                self.ban(a.clone());
                LogEntry::Ban { t, address: a.clone() }
            }
            Instruction::Unban(a) => {
                self.unban(a);
                LogEntry::Unban { t, address: a.clone() }
            }
            Instruction::Step => {
                let (report, commit) = self.sequencer_step();
                let batch = report.batch.map(|b| b.events).unwrap_or_default();
                let (r_slot, outcome) = match commit {
                    Some((r, res)) => (Some(r), Some(Outcome::from(res))),
                    None => (None, None),
                };
                let gas = if outcome.is_some_and(|o| o.is_accepted()) { self.cfg.gas.commit } else { 0 };
                LogEntry::Step { t, skipped: report.skipped, batch, r_slot, outcome, gas, oas: self.oas() }
            }
            Instruction::Withdraw { note, recipient, mode } => {
                let (nullifier_hash, res) = self.withdraw(*note, recipient, *mode);
                let oas = self.oas();
                LogEntry::Withdraw {
                    t,
                    note: *note,
                    recipient: recipient.clone(),
                    mode: *mode,
                    nullifier_hash,
                    gas: if res.is_ok() { self.cfg.gas.withdraw } else { 0 },
                    outcome: res.into(),
                    oas,
                    privacy: fmt_privacy(oas),
                }
            }
        };
        if !self.contract.conserved() {
            self.violations.push(format!("t={t}: conservation"));
        }
        if self.oas_trajectory.last().is_some_and(|&prev| prev > self.oas()) {
            self.violations.push(format!("t={t}: oas decreased"));
        }
        self.oas_trajectory.push(self.oas());
        self.log.push(entry);
    }

    pub fn metrics(&self) -> Metrics {
        let mut m = Metrics {
            instructions: self.t,
            deposits: 0,
            commits: 0,
            withdrawals: 0,
            skipped_deposits: 0,
            rejections: BTreeMap::new(),
            gas: BTreeMap::new(),
            total_gas: 0,
            amortized_gas: None,
            amortized_gas_exact: None,
            oas_trajectory: self.oas_trajectory.clone(),
            final_oas: self.oas(),
            privacy: fmt_privacy(self.oas()),
            pool: self.contract.pool(),
            paid: self.contract.total_paid(),
            fees: self.contract.total_fees(),
            conserved: self.contract.conserved(),
            violations: self.violations.clone(),
        };
        for (op, gas) in self.contract.gas_log() {
            *m.gas.entry(op.name().to_string()).or_default() += gas;
            m.total_gas += gas;
            match op {
                GasOp::Deposit => m.deposits += 1,
                GasOp::Commit => m.commits += 1,
                GasOp::Withdraw => m.withdrawals += 1,
            }
        }
        for entry in &self.log {
            let outcome = match entry {
                LogEntry::Deposit { outcome, .. } | LogEntry::Withdraw { outcome, .. } => Some(*outcome),
                LogEntry::Step { outcome, skipped, .. } => {
                    m.skipped_deposits += skipped.len() as u64;
                    *outcome
                }
                _ => None,
            };
            if let Some(Outcome::Rejected(r)) = outcome {
                *m.rejections.entry(r.name().to_string()).or_default() += 1;
            }
        }
        if m.withdrawals > 0 {
            let exact = Rational::new(m.total_gas as i128, m.withdrawals as i128);
            m.amortized_gas = Some((crate::costmodel::to_f64(exact) * 100.0).round() / 100.0);
            m.amortized_gas_exact = Some(exact.to_string());
        }
        m
    }

    pub fn output(&self) -> RunOutput {
        RunOutput { log: self.log.clone(), metrics: self.metrics() }
    }
}

/// Replays `script` from a fresh pool.
pub fn run_scenario(cfg: MixerConfig, script: &Scenario) -> Result<RunOutput, MixerError> {
    let mut mixer = Mixer::new(cfg)?;
    for (_, ins) in &script.instructions {
        mixer.apply(ins);
    }
    Ok(mixer.output())
}
