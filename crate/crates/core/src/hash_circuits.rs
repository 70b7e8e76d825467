//! Circuit gadgets for the five permutations and the two protocol circuits:
//! the deposit circuit (slot root over a batch of commitments) and the
//! withdrawal circuit (note opening, nullifier, two-level membership and
//! transaction binding).
//!
//! Gadgets are written against [`CircuitBuilder`] independently of the
//! native round loops, and are checked against them in tests.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{
    circuit_power, Circuit, CircuitBuilder, CircuitError, ConstraintSystem, GateId, Witness,
};
use crate::field::FieldElement;
use crate::merkle::{MerklePath, Side};
use crate::permutations::{HashKind, Hasher, PermutationSpec, SpongeConfig};

/// Largest slot depth for which the deposit circuit is materialized.
pub const MAX_SLOT_DEPTH: u32 = 16;
/// Largest era depth accepted by the withdrawal circuit.
pub const MAX_ERA_DEPTH: u32 = 48;

/// Second absorbed element of a nullifier hash. Commitments absorb two free
/// elements, so fixing one keeps the two digest domains apart.
pub fn nullifier_domain() -> FieldElement {
    FieldElement::from_u64(0x6e75_6c6c_6966_7931)
}

/// Weight of the relayer signal in the transaction binding; fee and refund
/// use its square and cube.
pub fn tx_binding_weight() -> FieldElement {
    FieldElement::from_u64(0x7478_6269_6e64)
}

pub fn note_commitment(hasher: &Hasher, secret: FieldElement, nullifier: FieldElement) -> FieldElement {
    hasher.hash2(secret, nullifier)
}

pub fn nullifier_hash(hasher: &Hasher, nullifier: FieldElement) -> FieldElement {
    hasher.hash2(nullifier, nullifier_domain())
}

/// `recipient + w*relayer + w^2*fee + w^3*refund`.
pub fn tx_binding(recipient: FieldElement, relayer: FieldElement, fee: FieldElement, refund: FieldElement) -> FieldElement {
    let w = tx_binding_weight();
    recipient + w * relayer + w * w * fee + w * w * w * refund
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GadgetError {
    #[error("unsupported hash configuration: {0}")]
    Unsupported(String),
    #[error("{what} depth must be at least 1 (a depth-0 tree is its own leaf)")]
    DegenerateDepth { what: &'static str },
    #[error("{what} depth {depth} exceeds the supported maximum {max}")]
    DepthTooLarge { what: &'static str, depth: u32, max: u32 },
    #[error("{what}: expected {expected} path levels, got {found}")]
    PathLength { what: &'static str, expected: usize, found: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    R1cs,
    Plonkish,
}

impl SystemKind {
    pub const ALL: [SystemKind; 2] = [SystemKind::R1cs, SystemKind::Plonkish];

    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::R1cs => "r1cs",
            SystemKind::Plonkish => "plonkish",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "r1cs" => Ok(SystemKind::R1cs),
            "plonkish" | "plonk" => Ok(SystemKind::Plonkish),
            other => Err(format!("unknown constraint system `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "gadget", rename_all = "snake_case")]
pub enum GadgetShape {
    Hash2,
    MerkleRoot { d_slot: u32 },
    Withdraw { d_slot: u32, d_era: u32 },
}

/// A built circuit together with its named signals.
#[derive(Debug, Clone)]
pub struct Gadget {
    circuit: Circuit,
    inputs: BTreeMap<String, GateId>,
    outputs: BTreeMap<String, GateId>,
    spec: Arc<PermutationSpec>,
    shape: GadgetShape,
    folded_sboxes: usize,
    sections: Vec<(String, usize)>,
}

impl Gadget {
    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn spec(&self) -> &PermutationSpec {
        &self.spec
    }

    pub fn shape(&self) -> GadgetShape {
        self.shape
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(|s| s.as_str())
    }

    pub fn input(&self, name: &str) -> Option<GateId> {
        self.inputs.get(name).copied()
    }

    pub fn output(&self, name: &str) -> Option<GateId> {
        self.outputs.get(name).copied()
    }

    /// S-boxes whose input was a known constant and so cost nothing.
    pub fn folded_sboxes(&self) -> usize {
        self.folded_sboxes
    }

    /// Multiplication rows contributed by each part of the circuit, in build
    /// order. Binding rows for linear outputs are not included.
    pub fn sections(&self) -> &[(String, usize)] {
        &self.sections
    }

    pub fn eval(&self, inputs: &BTreeMap<String, FieldElement>) -> Result<Witness, CircuitError> {
        self.circuit.eval_witness(inputs)
    }

    pub fn output_value(&self, witness: &Witness, name: &str) -> Option<FieldElement> {
        self.output(name).map(|g| witness.value(g))
    }

    pub fn constraint_count(&self, system: SystemKind) -> usize {
        match system {
            SystemKind::R1cs => self.circuit.lower_to_r1cs().num_constraints(),
            SystemKind::Plonkish => self.circuit.lower_to_plonkish().num_constraints(),
        }
    }

    pub fn constraint_report(&self, system: SystemKind) -> ConstraintReport {
        let constraints = self.constraint_count(system);
        ConstraintReport {
            hash: self.spec.kind(),
            system,
            shape: self.shape,
            constraints,
            power: circuit_power(constraints as u64).unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub hash: HashKind,
    pub system: SystemKind,
    #[serde(flatten)]
    pub shape: GadgetShape,
    pub constraints: usize,
    pub power: u32,
}

/// Applies `m` to the state as linear gates.
fn matrix_gadget(b: &mut CircuitBuilder, m: &[Vec<FieldElement>], state: &[GateId]) -> Vec<GateId> {
    m.iter().map(|row| b.linear(row, state)).collect()
}

/// Appends one permutation to the builder, mirroring the native definition.
pub fn permutation_gadget(b: &mut CircuitBuilder, spec: &PermutationSpec, state: &[GateId]) -> Vec<GateId> {
    assert_eq!(state.len(), spec.width(), "state width");
    let d = spec.exponent();
    let rc = spec.round_constants();
    let mut s = state.to_vec();
    match spec.kind() {
        HashKind::Mimc => {
            let n = rc.len();
            let (mut l, mut r) = (s[0], s[1]);
            for (i, c) in rc.iter().enumerate() {
                let t = b.add_constant(l, c[0]);
                let f = b.pow(t, d);
                let mixed = b.add(r, f);
                if i + 1 < n {
                    r = l;
                    l = mixed;
                } else {
                    r = mixed;
                }
            }
            s = vec![l, r];
        }
        HashKind::Gmimc => {
            for c in rc {
                let t = b.add_constant(s[0], c[0]);
                let f = b.pow(t, d);
                let first = s[0];
                let mut next: Vec<GateId> = s[1..].iter().map(|x| b.add(*x, f)).collect();
                next.push(first);
                s = next;
            }
        }
        HashKind::Poseidon => {
            let mds = spec.matrix("mds").expect("validated spec");
            for (round, c) in rc.iter().enumerate() {
                let mut x: Vec<GateId> = s.iter().zip(c).map(|(v, k)| b.add_constant(*v, *k)).collect();
                if spec.is_full_round(round) {
                    x = x.into_iter().map(|v| b.pow(v, d)).collect();
                } else {
                    x[0] = b.pow(x[0], d);
                }
                s = matrix_gadget(b, mds, &x);
            }
        }
        HashKind::Poseidon2 | HashKind::Neptune => {
            let external = spec.matrix("external").expect("validated spec");
            let internal = spec.matrix("internal").expect("validated spec");
            s = matrix_gadget(b, external, &s);
            for (round, c) in rc.iter().enumerate() {
                if spec.is_full_round(round) {
                    let x: Vec<GateId> = s
                        .iter()
                        .zip(c)
                        .map(|(v, k)| {
                            let t = b.add_constant(*v, *k);
                            b.pow(t, d)
                        })
                        .collect();
                    s = matrix_gadget(b, external, &x);
                } else {
                    let t = b.add_constant(s[0], c[0]);
                    s[0] = b.pow(t, d);
                    s = matrix_gadget(b, internal, &s);
                }
            }
        }
    }
    s
}

/// Fixed-arity sponge over the builder; same absorption rule as the native
/// sponge.
pub fn sponge_gadget(
    b: &mut CircuitBuilder,
    spec: &PermutationSpec,
    sponge: &SpongeConfig,
    inputs: &[GateId],
) -> Result<GateId, GadgetError> {
    sponge.check(spec).map_err(|e| GadgetError::Unsupported(e.to_string()))?;
    if inputs.is_empty() {
        return Err(GadgetError::Unsupported("empty sponge input".into()));
    }
    let zero = b.constant(FieldElement::ZERO);
    let mut state = vec![zero; spec.width()];
    for block in inputs.chunks(sponge.rate) {
        for (lane, x) in state.iter_mut().zip(block) {
            *lane = b.add(*lane, *x);
        }
        state = permutation_gadget(b, spec, &state);
    }
    Ok(state[0])
}

pub fn hash2_gadget(
    b: &mut CircuitBuilder,
    spec: &PermutationSpec,
    sponge: &SpongeConfig,
    left: GateId,
    right: GateId,
) -> Result<GateId, GadgetError> {
    sponge_gadget(b, spec, sponge, &[left, right])
}

fn finish(
    b: CircuitBuilder,
    inputs: BTreeMap<String, GateId>,
    outputs: BTreeMap<String, GateId>,
    spec: Arc<PermutationSpec>,
    shape: GadgetShape,
    sections: Vec<(String, usize)>,
) -> Result<Gadget, GadgetError> {
    let folded_sboxes = b.folded_sboxes();
    let circuit = b.finish()?;
    Ok(Gadget { circuit, inputs, outputs, spec, shape, folded_sboxes, sections })
}

/// `hash2(left, right)` with the default sponge.
pub fn build_hash2_gadget(spec: &PermutationSpec) -> Result<Gadget, GadgetError> {
    build_hash2_gadget_with(spec, &SpongeConfig::for_spec(spec))
}

pub fn build_hash2_gadget_with(spec: &PermutationSpec, sponge: &SpongeConfig) -> Result<Gadget, GadgetError> {
    let mut b = CircuitBuilder::new();
    let left = b.input("left");
    let right = b.input("right");
    let out = hash2_gadget(&mut b, spec, sponge, left, right)?;
    b.output(out);
    let muls = b.nonlinear_muls();
    finish(
        b,
        BTreeMap::from([("left".into(), left), ("right".into(), right)]),
        BTreeMap::from([("digest".into(), out)]),
        Arc::new(spec.clone()),
        GadgetShape::Hash2,
        vec![("hash2".into(), muls)],
    )
}

pub fn leaf_signal(i: usize) -> String {
    format!("leaf_{i}")
}

/// The deposit circuit: a full binary tree over `2^d_slot` leaf signals,
/// output `root`.
pub fn build_merkle_root_gadget(spec: &PermutationSpec, d_slot: u32) -> Result<Gadget, GadgetError> {
    if d_slot == 0 {
        return Err(GadgetError::DegenerateDepth { what: "slot" });
    }
    if d_slot > MAX_SLOT_DEPTH {
        return Err(GadgetError::DepthTooLarge { what: "slot", depth: d_slot, max: MAX_SLOT_DEPTH });
    }
    let sponge = SpongeConfig::for_spec(spec);
    let mut b = CircuitBuilder::new();
    let mut inputs = BTreeMap::new();
    let mut level: Vec<GateId> = (0..1usize << d_slot)
        .map(|i| {
            let g = b.input(leaf_signal(i));
            inputs.insert(leaf_signal(i), g);
            g
        })
        .collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| hash2_gadget(&mut b, spec, &sponge, pair[0], pair[1]))
            .collect::<Result<_, _>>()?;
    }
    b.output(level[0]);
    let muls = b.nonlinear_muls();
    finish(
        b,
        inputs,
        BTreeMap::from([("root".into(), level[0])]),
        Arc::new(spec.clone()),
        GadgetShape::MerkleRoot { d_slot },
        vec![("tree".into(), muls)],
    )
}

/// One Merkle level: a dual mux on the position bit (two products plus the
/// booleanity check) and a hash. Bit 0 puts the running node on the left.
fn path_level(
    b: &mut CircuitBuilder,
    spec: &PermutationSpec,
    sponge: &SpongeConfig,
    node: GateId,
    sibling: GateId,
    bit: GateId,
) -> Result<GateId, GadgetError> {
    b.assert_boolean(bit);
    let sib_minus_node = b.sub(sibling, node);
    let pick_left = b.mul(bit, sib_minus_node);
    let left = b.add(node, pick_left);
    let node_minus_sib = b.sub(node, sibling);
    let pick_right = b.mul(bit, node_minus_sib);
    let right = b.add(sibling, pick_right);
    hash2_gadget(b, spec, sponge, left, right)
}

/// Parameters of the withdrawal circuit.
#[derive(Debug, Clone)]
pub struct WithdrawConfig {
    /// Hash of the slot and era trees.
    pub tree: Arc<PermutationSpec>,
    /// Hash used for note commitments and nullifier hashes.
    pub commitment: Arc<PermutationSpec>,
    pub d_slot: u32,
    pub d_era: u32,
}

impl WithdrawConfig {
    /// Trees over `spec`, commitments over Poseidon2.
    pub fn new(spec: &PermutationSpec, d_slot: u32, d_era: u32) -> Self {
        WithdrawConfig {
            tree: Arc::new(spec.clone()),
            commitment: Arc::new(PermutationSpec::builtin(HashKind::Poseidon2)),
            d_slot,
            d_era,
        }
    }
}

pub fn slot_sibling(i: usize) -> String {
    format!("slot_sibling_{i}")
}
pub fn slot_bit(i: usize) -> String {
    format!("slot_bit_{i}")
}
pub fn era_sibling(i: usize) -> String {
    format!("era_sibling_{i}")
}
pub fn era_bit(i: usize) -> String {
    format!("era_bit_{i}")
}

/// Public signals of a withdrawal.
pub const WITHDRAW_PUBLIC: [&str; 6] = ["root", "nullifier_hash", "recipient", "relayer", "fee", "refund"];

/// The withdrawal circuit over the default commitment hash.
pub fn build_withdraw_gadget(spec: &PermutationSpec, d_slot: u32, d_era: u32) -> Result<Gadget, GadgetError> {
    build_withdraw_gadget_with(&WithdrawConfig::new(spec, d_slot, d_era))
}

pub fn build_withdraw_gadget_with(cfg: &WithdrawConfig) -> Result<Gadget, GadgetError> {
    for (what, depth, max) in [("slot", cfg.d_slot, MAX_SLOT_DEPTH), ("era", cfg.d_era, MAX_ERA_DEPTH)] {
        if depth == 0 {
            return Err(GadgetError::DegenerateDepth { what });
        }
        if depth > max {
            return Err(GadgetError::DepthTooLarge { what, depth, max });
        }
    }
    let tree = &*cfg.tree;
    let tree_sponge = SpongeConfig::for_spec(tree);
    let cspec = &*cfg.commitment;
    let c_sponge = SpongeConfig::for_spec(cspec);

    let mut b = CircuitBuilder::new();
    let mut inputs = BTreeMap::new();
    let mut input = |b: &mut CircuitBuilder, name: String| {
        let g = b.input(name.clone());
        inputs.insert(name, g);
        g
    };
    let public: Vec<GateId> = WITHDRAW_PUBLIC.iter().map(|n| input(&mut b, n.to_string())).collect();
    let [root, nh_public, recipient, relayer, fee, refund] = public[..] else { unreachable!() };
    let secret = input(&mut b, "secret".into());
    let nullifier = input(&mut b, "nullifier".into());
    let slot: Vec<(GateId, GateId)> = (0..cfg.d_slot as usize)
        .map(|i| (input(&mut b, slot_sibling(i)), input(&mut b, slot_bit(i))))
        .collect();
    let era: Vec<(GateId, GateId)> = (0..cfg.d_era as usize)
        .map(|i| (input(&mut b, era_sibling(i)), input(&mut b, era_bit(i))))
        .collect();

    let mut sections = Vec::new();
    let mut mark = 0;
    let mut section = |b: &CircuitBuilder, name: &str| {
        let now = b.nonlinear_muls();
        sections.push((name.to_string(), now - mark));
        mark = now;
    };

    let commitment = hash2_gadget(&mut b, cspec, &c_sponge, secret, nullifier)?;
    section(&b, "commitment");
    let domain = b.constant(nullifier_domain());
    let nh = hash2_gadget(&mut b, cspec, &c_sponge, nullifier, domain)?;
    b.assert_equal(nh, nh_public);
    section(&b, "nullifier");

    let mut node = commitment;
    for (sib, bit) in &slot {
        node = path_level(&mut b, tree, &tree_sponge, node, *sib, *bit)?;
    }
    section(&b, "slot_path");
    for (sib, bit) in &era {
        node = path_level(&mut b, tree, &tree_sponge, node, *sib, *bit)?;
    }
    b.assert_equal(node, root);
    section(&b, "era_path");

    let w = tx_binding_weight();
    let binding = b.linear(&[FieldElement::ONE, w, w * w, w * w * w], &[recipient, relayer, fee, refund]);
    b.output(binding);

    finish(
        b,
        inputs,
        BTreeMap::from([("tx_binding".into(), binding)]),
        cfg.tree.clone(),
        GadgetShape::Withdraw { d_slot: cfg.d_slot, d_era: cfg.d_era },
        sections,
    )
}

/// Everything a prover knows about one withdrawal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WithdrawWitness {
    pub secret: FieldElement,
    pub nullifier: FieldElement,
    pub slot_path: MerklePath,
    pub era_path: MerklePath,
    pub root: FieldElement,
    pub nullifier_hash: FieldElement,
    pub recipient: FieldElement,
    pub relayer: FieldElement,
    pub fee: FieldElement,
    pub refund: FieldElement,
}

impl WithdrawWitness {
    /// Named input signals for [`build_withdraw_gadget`].
    pub fn signals(&self, d_slot: u32, d_era: u32) -> Result<BTreeMap<String, FieldElement>, GadgetError> {
        let check = |what, path: &MerklePath, d: u32| {
            if path.siblings.len() != d as usize || !path.is_well_formed() {
                return Err(GadgetError::PathLength { what, expected: d as usize, found: path.siblings.len() });
            }
            Ok(())
        };
        check("slot path", &self.slot_path, d_slot)?;
        check("era path", &self.era_path, d_era)?;
        let bit = |s: &Side| match s {
            Side::Left => FieldElement::ZERO,
            Side::Right => FieldElement::ONE,
        };
        let mut m = BTreeMap::from([
            ("root".to_string(), self.root),
            ("nullifier_hash".to_string(), self.nullifier_hash),
            ("recipient".to_string(), self.recipient),
            ("relayer".to_string(), self.relayer),
            ("fee".to_string(), self.fee),
            ("refund".to_string(), self.refund),
            ("secret".to_string(), self.secret),
            ("nullifier".to_string(), self.nullifier),
        ]);
        for (i, (s, p)) in self.slot_path.siblings.iter().zip(&self.slot_path.positions).enumerate() {
            m.insert(slot_sibling(i), *s);
            m.insert(slot_bit(i), bit(p));
        }
        for (i, (s, p)) in self.era_path.siblings.iter().zip(&self.era_path.positions).enumerate() {
            m.insert(era_sibling(i), *s);
            m.insert(era_bit(i), bit(p));
        }
        Ok(m)
    }

    /// Public signals in [`WITHDRAW_PUBLIC`] order followed by the binding.
    pub fn public_inputs(&self) -> Vec<FieldElement> {
        vec![
            self.root,
            self.nullifier_hash,
            self.recipient,
            self.relayer,
            self.fee,
            self.refund,
            tx_binding(self.recipient, self.relayer, self.fee, self.refund),
        ]
    }
}
