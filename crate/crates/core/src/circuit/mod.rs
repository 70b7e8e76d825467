//! Arithmetic circuits over the BN254 scalar field and their lowering to
//! R1CS and Plonkish constraint systems.
//!
//! A [`Circuit`] is a topologically ordered gate list. Besides inputs,
//! constants, additions and multiplications there is an `AssertZero` gate,
//! which is how gadgets state in-circuit checks (booleanity, equality with a
//! public input). Outputs and assertions are the roots of the DAG.

mod plonkish;
mod r1cs;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, FieldElement};

pub use plonkish::{Cell, CellColumn, PlonkishAssignment, PlonkishRow, PlonkishSystem};
pub use r1cs::{ColumnSource, LinearCombination, R1csRowKind, R1csSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GateId(pub usize);

impl fmt::Display for GateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Gate {
    Input { name: String },
    Constant(FieldElement),
    Add(GateId, GateId),
    Mul(GateId, GateId),
    /// Holds iff the operand evaluates to zero.
    AssertZero(GateId),
}

impl Gate {
    pub fn operands(&self) -> Vec<GateId> {
        match self {
            Gate::Input { .. } | Gate::Constant(_) => vec![],
            Gate::Add(a, b) | Gate::Mul(a, b) => vec![*a, *b],
            Gate::AssertZero(a) => vec![*a],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Gate::Input { .. } => "input",
            Gate::Constant(_) => "constant",
            Gate::Add(..) => "add",
            Gate::Mul(..) => "mul",
            Gate::AssertZero(_) => "assert_zero",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("gate {gate} references {operand}, which is not an earlier gate")]
    NotTopological { gate: GateId, operand: GateId },
    #[error("circuit has no outputs")]
    NoOutputs,
    #[error("output {0} does not exist or is an assertion")]
    BadOutput(GateId),
    #[error("output {0} is listed twice")]
    DuplicateOutput(GateId),
    #[error("input name `{0}` is used twice")]
    DuplicateInput(String),
    #[error("no value assigned to input `{0}`")]
    MissingInput(String),
    #[error("unknown input `{0}`")]
    UnknownInput(String),
    #[error("expected {expected} input values, got {found}")]
    InputCount { expected: usize, found: usize },
    #[error("assignment has {found} entries, system expects {expected}")]
    Shape { expected: usize, found: usize },
    #[error("circuit power is undefined for zero constraints")]
    ZeroConstraints,
    #[error("malformed circuit file: {0}")]
    Format(String),
}

/// A validated arithmetic circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    gates: Vec<Gate>,
    outputs: Vec<GateId>,
    inputs: Vec<GateId>,
}

impl Circuit {
    pub fn new(gates: Vec<Gate>, outputs: Vec<GateId>) -> Result<Self, CircuitError> {
        let mut names = HashSet::new();
        let mut inputs = Vec::new();
        for (i, g) in gates.iter().enumerate() {
            for op in g.operands() {
                if op.0 >= i {
                    return Err(CircuitError::NotTopological { gate: GateId(i), operand: op });
                }
            }
            if let Gate::Input { name } = g {
                if !names.insert(name.clone()) {
                    return Err(CircuitError::DuplicateInput(name.clone()));
                }
                inputs.push(GateId(i));
            }
        }
        if outputs.is_empty() {
            return Err(CircuitError::NoOutputs);
        }
        let mut seen = HashSet::new();
        for o in &outputs {
            match gates.get(o.0) {
                None | Some(Gate::AssertZero(_)) => return Err(CircuitError::BadOutput(*o)),
                _ => {}
            }
            if !seen.insert(*o) {
                return Err(CircuitError::DuplicateOutput(*o));
            }
        }
        Ok(Circuit { gates, outputs, inputs })
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, id: GateId) -> &Gate {
        &self.gates[id.0]
    }

    pub fn outputs(&self) -> &[GateId] {
        &self.outputs
    }

    /// Input gates in declaration order.
    pub fn inputs(&self) -> &[GateId] {
        &self.inputs
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.inputs
            .iter()
            .map(|id| match &self.gates[id.0] {
                Gate::Input { name } => name.as_str(),
                _ => unreachable!("inputs index input gates"),
            })
            .collect()
    }

    pub fn input_id(&self, name: &str) -> Option<GateId> {
        self.inputs
            .iter()
            .copied()
            .find(|id| matches!(&self.gates[id.0], Gate::Input { name: n } if n == name))
    }

    pub fn assertions(&self) -> impl Iterator<Item = GateId> + '_ {
        self.gates
            .iter()
            .enumerate()
            .filter(|(_, g)| matches!(g, Gate::AssertZero(_)))
            .map(|(i, _)| GateId(i))
    }

    pub fn count(&self, kind: &str) -> usize {
        self.gates.iter().filter(|g| g.kind() == kind).count()
    }

    /// Gates in the order constraint rows are emitted: a pre-order walk from
    /// each output, then each assertion, followed by any gate not reachable
    /// from a root, in gate order.
    pub(crate) fn row_order(&self) -> Vec<GateId> {
        let mut visited = vec![false; self.gates.len()];
        let mut order = Vec::with_capacity(self.gates.len());
        let roots: Vec<GateId> = self.outputs.iter().copied().chain(self.assertions()).collect();
        let mut stack = Vec::new();
        for root in roots {
            stack.push(root);
            while let Some(g) = stack.pop() {
                if visited[g.0] {
                    continue;
                }
                visited[g.0] = true;
                order.push(g);
                for op in self.gates[g.0].operands().into_iter().rev() {
                    if !visited[op.0] {
                        stack.push(op);
                    }
                }
            }
        }
        order.extend((0..self.gates.len()).filter(|i| !visited[*i]).map(GateId));
        order
    }

    /// Evaluates every gate given named input values.
    pub fn eval_witness(&self, inputs: &BTreeMap<String, FieldElement>) -> Result<Witness, CircuitError> {
        for name in inputs.keys() {
            if self.input_id(name).is_none() {
                return Err(CircuitError::UnknownInput(name.clone()));
            }
        }
        let ordered = self
            .input_names()
            .into_iter()
            .map(|n| inputs.get(n).copied().ok_or_else(|| CircuitError::MissingInput(n.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        self.eval_ordered(&ordered)
    }

    /// Evaluates every gate given input values in declaration order.
    pub fn eval_ordered(&self, inputs: &[FieldElement]) -> Result<Witness, CircuitError> {
        if inputs.len() != self.inputs.len() {
            return Err(CircuitError::InputCount { expected: self.inputs.len(), found: inputs.len() });
        }
        let mut next_input = inputs.iter();
        let mut values = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let v = match g {
                Gate::Input { .. } => *next_input.next().expect("counted above"),
                Gate::Constant(c) => *c,
                Gate::Add(a, b) => values[a.0] + values[b.0],
                Gate::Mul(a, b) => values[a.0] * values[b.0],
                Gate::AssertZero(a) => values[a.0],
            };
            values.push(v);
        }
        Ok(Witness { values })
    }

    pub fn lower_to_r1cs(&self) -> R1csSystem {
        r1cs::lower(self)
    }

    pub fn lower_to_plonkish(&self) -> PlonkishSystem {
        plonkish::lower(self)
    }

    pub fn to_file(&self) -> CircuitFile {
        CircuitFile {
            gates: self
                .gates
                .iter()
                .enumerate()
                .map(|(i, g)| GateRecord {
                    id: i,
                    kind: g.kind().to_string(),
                    operands: g.operands().iter().map(|o| o.0).collect(),
                    r#const: match g {
                        Gate::Constant(c) => Some(*c),
                        _ => None,
                    },
                    name: match g {
                        Gate::Input { name } => Some(name.clone()),
                        _ => None,
                    },
                })
                .collect(),
            outputs: self.outputs.iter().map(|o| o.0).collect(),
        }
    }

    pub fn from_file(file: CircuitFile) -> Result<Self, CircuitError> {
        let mut gates = Vec::with_capacity(file.gates.len());
        for (i, rec) in file.gates.into_iter().enumerate() {
            if rec.id != i {
                return Err(CircuitError::Format(format!("gate ids must be dense, found {} at {i}", rec.id)));
            }
            let ops = |n: usize| -> Result<Vec<GateId>, CircuitError> {
                if rec.operands.len() != n {
                    return Err(CircuitError::Format(format!(
                        "gate {i} ({}) needs {n} operands, has {}",
                        rec.kind,
                        rec.operands.len()
                    )));
                }
                Ok(rec.operands.iter().map(|o| GateId(*o)).collect())
            };
            let gate = match rec.kind.as_str() {
                "input" => {
                    ops(0)?;
                    Gate::Input { name: rec.name.clone().unwrap_or_else(|| format!("x{i}")) }
                }
                "constant" => {
                    ops(0)?;
                    Gate::Constant(
                        rec.r#const.ok_or_else(|| CircuitError::Format(format!("constant gate {i} has no value")))?,
                    )
                }
                "add" => {
                    let o = ops(2)?;
                    Gate::Add(o[0], o[1])
                }
                "mul" => {
                    let o = ops(2)?;
                    Gate::Mul(o[0], o[1])
                }
                "assert_zero" => Gate::AssertZero(ops(1)?[0]),
                other => return Err(CircuitError::Format(format!("unknown gate kind `{other}`"))),
            };
            gates.push(gate);
        }
        Circuit::new(gates, file.outputs.into_iter().map(GateId).collect())
    }
}

/// JSON interchange form of a circuit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitFile {
    pub gates: Vec<GateRecord>,
    pub outputs: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateRecord {
    pub id: usize,
    pub kind: String,
    #[serde(default)]
    pub operands: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r#const: Option<FieldElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// One value per gate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    values: Vec<FieldElement>,
}

impl Witness {
    pub fn value(&self, id: GateId) -> FieldElement {
        self.values[id.0]
    }

    pub fn values(&self) -> &[FieldElement] {
        &self.values
    }

    pub fn outputs(&self, circuit: &Circuit) -> Vec<FieldElement> {
        circuit.outputs().iter().map(|o| self.value(*o)).collect()
    }

    pub fn set(&mut self, id: GateId, value: FieldElement) {
        self.values[id.0] = value;
    }
}

/// A lowered constraint system with its own assignment shape.
pub trait ConstraintSystem {
    type Assignment;

    /// Lays a circuit witness out in this system's shape.
    fn assign(&self, witness: &Witness) -> Self::Assignment;

    fn is_satisfied(&self, assignment: &Self::Assignment) -> Result<bool, CircuitError>;

    fn num_constraints(&self) -> usize;
}

/// Convenience: assign `witness` and check it.
pub fn check_satisfied<S: ConstraintSystem>(system: &S, witness: &Witness) -> Result<bool, CircuitError> {
    system.is_satisfied(&system.assign(witness))
}

/// Smallest `k` with `num_constraints <= 2^k`.
pub fn circuit_power(num_constraints: u64) -> Result<u32, CircuitError> {
    if num_constraints == 0 {
        return Err(CircuitError::ZeroConstraints);
    }
    Ok(64 - (num_constraints - 1).leading_zeros())
}

/// Incremental circuit construction with constant folding.
///
/// Operations whose operands are all constants produce constant gates, so a
/// built circuit never multiplies two constants. S-boxes applied to constant
/// inputs are counted in [`CircuitBuilder::folded_sboxes`].
#[derive(Debug, Default)]
pub struct CircuitBuilder {
    gates: Vec<Gate>,
    outputs: Vec<GateId>,
    constants: HashMap<FieldElement, GateId>,
    folded_sboxes: usize,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, g: Gate) -> GateId {
        self.gates.push(g);
        GateId(self.gates.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn input(&mut self, name: impl Into<String>) -> GateId {
        self.push(Gate::Input { name: name.into() })
    }

    pub fn constant(&mut self, c: FieldElement) -> GateId {
        if let Some(id) = self.constants.get(&c) {
            return *id;
        }
        let id = self.push(Gate::Constant(c));
        self.constants.insert(c, id);
        id
    }

    pub fn constant_value(&self, id: GateId) -> Option<FieldElement> {
        match self.gates[id.0] {
            Gate::Constant(c) => Some(c),
            _ => None,
        }
    }

    pub fn add(&mut self, a: GateId, b: GateId) -> GateId {
        match (self.constant_value(a), self.constant_value(b)) {
            (Some(x), Some(y)) => self.constant(x + y),
            (Some(x), None) if x.is_zero() => b,
            (None, Some(y)) if y.is_zero() => a,
            _ => self.push(Gate::Add(a, b)),
        }
    }

    pub fn mul(&mut self, a: GateId, b: GateId) -> GateId {
        match (self.constant_value(a), self.constant_value(b)) {
            (Some(x), Some(y)) => self.constant(x * y),
            (Some(x), None) if x == FieldElement::ONE => b,
            (None, Some(y)) if y == FieldElement::ONE => a,
            _ => self.push(Gate::Mul(a, b)),
        }
    }

    pub fn add_constant(&mut self, a: GateId, c: FieldElement) -> GateId {
        let k = self.constant(c);
        self.add(a, k)
    }

    pub fn scale(&mut self, a: GateId, c: FieldElement) -> GateId {
        let k = self.constant(c);
        self.mul(a, k)
    }

    pub fn sub(&mut self, a: GateId, b: GateId) -> GateId {
        let neg = self.scale(b, -FieldElement::ONE);
        self.add(a, neg)
    }

    /// `sum_i coeffs[i] * xs[i]`.
    pub fn linear(&mut self, coeffs: &[FieldElement], xs: &[GateId]) -> GateId {
        let mut acc: Option<GateId> = None;
        for (c, x) in coeffs.iter().zip(xs) {
            if c.is_zero() {
                continue;
            }
            let term = self.scale(*x, *c);
            acc = Some(match acc {
                None => term,
                Some(a) => self.add(a, term),
            });
        }
        acc.unwrap_or_else(|| self.constant(FieldElement::ZERO))
    }

    /// `x^d` via the same addition chain the native field uses.
    pub fn pow(&mut self, x: GateId, d: u64) -> GateId {
        if let Some(c) = self.constant_value(x) {
            self.folded_sboxes += 1;
            return self.constant(c.pow(d).expect("exponent >= 1"));
        }
        match d {
            0 => self.constant(FieldElement::ONE),
            1 => x,
            3 => {
                let x2 = self.mul(x, x);
                self.mul(x2, x)
            }
            5 => {
                let x2 = self.mul(x, x);
                let x4 = self.mul(x2, x2);
                self.mul(x4, x)
            }
            7 => {
                let x2 = self.mul(x, x);
                let x4 = self.mul(x2, x2);
                let x6 = self.mul(x4, x2);
                self.mul(x6, x)
            }
            _ => {
                // left-to-right binary method, matching field::chain_multiplications
                let bits = 64 - d.leading_zeros();
                let mut acc = x;
                for bit in (0..bits - 1).rev() {
                    acc = self.mul(acc, acc);
                    if (d >> bit) & 1 == 1 {
                        acc = self.mul(acc, x);
                    }
                }
                acc
            }
        }
    }

    pub fn assert_zero(&mut self, a: GateId) -> GateId {
        self.push(Gate::AssertZero(a))
    }

    pub fn assert_equal(&mut self, a: GateId, b: GateId) -> GateId {
        let d = self.sub(a, b);
        self.assert_zero(d)
    }

    /// Constrains `b` to {0, 1}.
    pub fn assert_boolean(&mut self, b: GateId) -> GateId {
        let b_minus_one = self.add_constant(b, -FieldElement::ONE);
        let prod = self.mul(b, b_minus_one);
        self.assert_zero(prod)
    }

    pub fn output(&mut self, a: GateId) {
        self.outputs.push(a);
    }

    pub fn folded_sboxes(&self) -> usize {
        self.folded_sboxes
    }

    /// Number of multiplications whose operands are both non-constant.
    pub fn nonlinear_muls(&self) -> usize {
        count_nonlinear_muls(&self.gates)
    }

    pub fn finish(self) -> Result<Circuit, CircuitError> {
        Circuit::new(self.gates, self.outputs)
    }
}

fn count_nonlinear_muls(gates: &[Gate]) -> usize {
    gates
        .iter()
        .filter(|g| match g {
            Gate::Mul(a, b) => {
                !matches!(gates[a.0], Gate::Constant(_)) && !matches!(gates[b.0], Gate::Constant(_))
            }
            _ => false,
        })
        .count()
}

impl Circuit {
    /// Multiplications with two non-constant operands (ignores values that
    /// merely become constant through linear folding).
    pub fn nonlinear_muls(&self) -> usize {
        count_nonlinear_muls(&self.gates)
    }
}

/// Sanity bound used by the chain: `pow` with exponent `d` costs this many
/// nonlinear multiplications.
pub fn sbox_cost(d: u64) -> usize {
    field::chain_multiplications(d).expect("exponent >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fe(v: u64) -> FieldElement {
        FieldElement::from_u64(v)
    }

    #[test]
    fn power_rule() {
        assert_eq!(circuit_power(1024), Ok(10));
        assert_eq!(circuit_power(1025), Ok(11));
        assert_eq!(circuit_power(1), Ok(0));
        assert_eq!(circuit_power(2), Ok(1));
        assert_eq!(circuit_power(1320), Ok(11));
        assert_eq!(circuit_power(0), Err(CircuitError::ZeroConstraints));
    }

    #[test]
    fn validation_errors() {
        let x = Gate::Input { name: "x".into() };
        assert_eq!(
            Circuit::new(vec![Gate::Add(GateId(0), GateId(0))], vec![GateId(0)]),
            Err(CircuitError::NotTopological { gate: GateId(0), operand: GateId(0) })
        );
        assert_eq!(Circuit::new(vec![x.clone()], vec![]), Err(CircuitError::NoOutputs));
        assert_eq!(
            Circuit::new(vec![x.clone(), x.clone()], vec![GateId(0)]),
            Err(CircuitError::DuplicateInput("x".into()))
        );
        assert_eq!(
            Circuit::new(vec![x.clone()], vec![GateId(0), GateId(0)]),
            Err(CircuitError::DuplicateOutput(GateId(0)))
        );
        assert_eq!(Circuit::new(vec![x], vec![GateId(3)]), Err(CircuitError::BadOutput(GateId(3))));
    }

    #[test]
    fn missing_and_unknown_inputs() {
        let mut b = CircuitBuilder::new();
        let x = b.input("x");
        let y = b.input("y");
        let s = b.add(x, y);
        b.output(s);
        let c = b.finish().unwrap();
        let mut inputs = BTreeMap::from([("x".to_string(), fe(1))]);
        assert_eq!(c.eval_witness(&inputs), Err(CircuitError::MissingInput("y".into())));
        inputs.insert("y".into(), fe(2));
        assert_eq!(c.eval_witness(&inputs).unwrap().outputs(&c), vec![fe(3)]);
        inputs.insert("z".into(), fe(2));
        assert_eq!(c.eval_witness(&inputs), Err(CircuitError::UnknownInput("z".into())));
    }

    #[test]
    fn builder_folds_constants() {
        let mut b = CircuitBuilder::new();
        let two = b.constant(fe(2));
        let three = b.constant(fe(3));
        let six = b.mul(two, three);
        assert_eq!(b.constant_value(six), Some(fe(6)));
        let x = b.input("x");
        let before = b.len();
        let y = b.pow(six, 5);
        assert_eq!(b.constant_value(y), Some(fe(7776)));
        assert_eq!(b.folded_sboxes(), 1);
        let z = b.pow(x, 5);
        assert_eq!(b.nonlinear_muls(), 3);
        assert!(b.len() > before);
        b.output(z);
        let c = b.finish().unwrap();
        assert_eq!(c.eval_ordered(&[fe(2)]).unwrap().value(z), fe(32));
    }

    #[test]
    fn generic_pow_chain_cost() {
        for d in [3u64, 5, 7, 11, 13] {
            let mut b = CircuitBuilder::new();
            let x = b.input("x");
            let y = b.pow(x, d);
            assert_eq!(b.nonlinear_muls(), sbox_cost(d), "d = {d}");
            b.output(y);
            let c = b.finish().unwrap();
            assert_eq!(c.eval_ordered(&[fe(3)]).unwrap().value(y), fe(3).pow(d).unwrap());
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let mut b = CircuitBuilder::new();
        let x = b.input("x");
        let k = b.constant(fe(9));
        let y = b.mul(x, k);
        b.assert_boolean(x);
        b.output(y);
        let c = b.finish().unwrap();
        let json = serde_json::to_string(&c.to_file()).unwrap();
        let back = Circuit::from_file(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, c);

        let bad: CircuitFile = serde_json::from_str(r#"{"gates":[{"id":0,"kind":"xor"}],"outputs":[0]}"#).unwrap();
        assert!(matches!(Circuit::from_file(bad), Err(CircuitError::Format(_))));
        let bad: CircuitFile =
            serde_json::from_str(r#"{"gates":[{"id":0,"kind":"input"},{"id":1,"kind":"add","operands":[0]}],"outputs":[1]}"#)
                .unwrap();
        assert!(matches!(Circuit::from_file(bad), Err(CircuitError::Format(_))));
    }
}
