//! Lowering to rank-1 constraint systems.
//!
//! Additions and multiplications by constants fold into linear combinations.
//! Every multiplication of two non-constant values gets a row and a column.
//! An output or assertion costs an extra row only when its combination
//! contains no product column; otherwise one product column is solved for
//! and substituted away, so the root rides on that product's row.

use serde::{Deserialize, Serialize};

use super::{Circuit, CircuitError, ConstraintSystem, Gate, GateId, Witness};
use crate::field::FieldElement;

/// Sparse `sum_j coeff_j * column_j`, sorted by column, no zero coefficients.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinearCombination {
    terms: Vec<(usize, FieldElement)>,
}

impl LinearCombination {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn var(col: usize) -> Self {
        Self { terms: vec![(col, FieldElement::ONE)] }
    }

    pub fn constant(c: FieldElement) -> Self {
        if c.is_zero() {
            Self::zero()
        } else {
            Self { terms: vec![(0, c)] }
        }
    }

    pub fn from_terms(mut terms: Vec<(usize, FieldElement)>) -> Self {
        terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, FieldElement)> = Vec::with_capacity(terms.len());
        for (col, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == col => last.1 += c,
                _ => out.push((col, c)),
            }
        }
        out.retain(|t| !t.1.is_zero());
        Self { terms: out }
    }

    pub fn terms(&self) -> &[(usize, FieldElement)] {
        &self.terms
    }

    pub fn coefficient(&self, col: usize) -> FieldElement {
        self.terms
            .binary_search_by_key(&col, |t| t.0)
            .map(|i| self.terms[i].1)
            .unwrap_or(FieldElement::ZERO)
    }

    /// The value when only the constant column appears.
    pub fn constant_value(&self) -> Option<FieldElement> {
        match self.terms.as_slice() {
            [] => Some(FieldElement::ZERO),
            [(0, c)] => Some(*c),
            _ => None,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = (&self.terms, &other.terms);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                out.push(b[j]);
                j += 1;
            } else {
                let s = a[i].1 + b[j].1;
                if !s.is_zero() {
                    out.push((a[i].0, s));
                }
                i += 1;
                j += 1;
            }
        }
        Self { terms: out }
    }

    pub fn scale(&self, c: FieldElement) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self { terms: self.terms.iter().map(|(col, k)| (*col, *k * c)).collect() }
    }

    pub fn without(&self, col: usize) -> Self {
        Self { terms: self.terms.iter().copied().filter(|t| t.0 != col).collect() }
    }

    pub fn eval(&self, assignment: &[FieldElement]) -> FieldElement {
        self.terms.iter().map(|(col, c)| *c * assignment[*col]).sum()
    }

    fn remap(&self, map: &[usize]) -> Self {
        Self::from_terms(self.terms.iter().map(|(col, c)| (map[*col], *c)).collect())
    }
}

/// Where the value of an assignment column comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSource {
    One,
    Input(GateId),
    Internal(GateId),
    Output(GateId),
}

/// Which gate a row was emitted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R1csRowKind {
    Mul(GateId),
    Output(GateId),
    Assert(GateId),
}

/// Rows `<A_i, z> * <B_i, z> = <C_i, z>` over the assignment `z`, whose
/// columns are laid out as `[1, inputs, internal wires, outputs]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct R1csSystem {
    pub columns: Vec<ColumnSource>,
    pub a: Vec<LinearCombination>,
    pub b: Vec<LinearCombination>,
    pub c: Vec<LinearCombination>,
    pub rows: Vec<R1csRowKind>,
}

impl R1csSystem {
    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.columns.iter().filter(|c| matches!(c, ColumnSource::Input(_))).count()
    }

    pub fn num_outputs(&self) -> usize {
        self.columns.iter().filter(|c| matches!(c, ColumnSource::Output(_))).count()
    }

    /// Number of rows that bind an output or assertion on their own.
    pub fn binding_rows(&self) -> usize {
        self.rows.iter().filter(|r| !matches!(r, R1csRowKind::Mul(_))).count()
    }

    /// Checks that row vectors agree in length and reference existing columns.
    pub fn validate(&self) -> Result<(), CircuitError> {
        let n = self.rows.len();
        if self.a.len() != n || self.b.len() != n || self.c.len() != n {
            return Err(CircuitError::Format(format!(
                "row counts disagree: A {}, B {}, C {}, labels {n}",
                self.a.len(),
                self.b.len(),
                self.c.len()
            )));
        }
        if self.columns.first() != Some(&ColumnSource::One) {
            return Err(CircuitError::Format("column 0 must be the constant one".into()));
        }
        for lc in self.a.iter().chain(&self.b).chain(&self.c) {
            if let Some((col, _)) = lc.terms().iter().find(|t| t.0 >= self.columns.len()) {
                return Err(CircuitError::Format(format!("column {col} out of range")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("r1cs serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CircuitError> {
        let sys: Self = serde_json::from_str(s).map_err(|e| CircuitError::Format(e.to_string()))?;
        sys.validate()?;
        Ok(sys)
    }
}

impl ConstraintSystem for R1csSystem {
    type Assignment = Vec<FieldElement>;

    fn assign(&self, witness: &Witness) -> Vec<FieldElement> {
        self.columns
            .iter()
            .map(|c| match c {
                ColumnSource::One => FieldElement::ONE,
                ColumnSource::Input(g) | ColumnSource::Internal(g) | ColumnSource::Output(g) => witness.value(*g),
            })
            .collect()
    }

    fn is_satisfied(&self, z: &Vec<FieldElement>) -> Result<bool, CircuitError> {
        if z.len() != self.columns.len() {
            return Err(CircuitError::Shape { expected: self.columns.len(), found: z.len() });
        }
        if z[0] != FieldElement::ONE {
            return Ok(false);
        }
        Ok((0..self.rows.len()).all(|i| self.a[i].eval(z) * self.b[i].eval(z) == self.c[i].eval(z)))
    }

    fn num_constraints(&self) -> usize {
        self.rows.len()
    }
}

struct MulRow {
    gate: GateId,
    var: usize,
    a: LinearCombination,
    b: LinearCombination,
    c: LinearCombination,
}

pub(super) fn lower(circuit: &Circuit) -> R1csSystem {
    let gates = circuit.gates();
    // Provisional column numbering: 0, inputs, multiplications, outputs.
    let mut input_var = vec![usize::MAX; gates.len()];
    for (i, id) in circuit.inputs().iter().enumerate() {
        input_var[id.0] = 1 + i;
    }
    let mut next_var = 1 + circuit.inputs().len();
    let mut lcs: Vec<LinearCombination> = Vec::with_capacity(gates.len());
    let mut mul_rows: Vec<MulRow> = Vec::new();
    let mut mul_row_of_gate = vec![usize::MAX; gates.len()];
    for (i, g) in gates.iter().enumerate() {
        let lc = match g {
            Gate::Input { .. } => LinearCombination::var(input_var[i]),
            Gate::Constant(c) => LinearCombination::constant(*c),
            Gate::Add(a, b) => lcs[a.0].add(&lcs[b.0]),
            Gate::Mul(a, b) => {
                let (la, lb) = (&lcs[a.0], &lcs[b.0]);
                if let Some(k) = la.constant_value() {
                    lb.scale(k)
                } else if let Some(k) = lb.constant_value() {
                    la.scale(k)
                } else {
                    let var = next_var;
                    next_var += 1;
                    mul_row_of_gate[i] = mul_rows.len();
                    mul_rows.push(MulRow {
                        gate: GateId(i),
                        var,
                        a: la.clone(),
                        b: lb.clone(),
                        c: LinearCombination::var(var),
                    });
                    LinearCombination::var(var)
                }
            }
            Gate::AssertZero(a) => lcs[a.0].clone(),
        };
        lcs.push(lc);
    }
    let first_mul_var = 1 + circuit.inputs().len();
    let output_vars: Vec<usize> = (0..circuit.outputs().len()).map(|k| next_var + k).collect();
    let total_vars = next_var + output_vars.len();

    // Roots are outputs (bound to their column) and assertions (bound to 0).
    let mut roots: Vec<(GateId, Option<usize>)> =
        circuit.outputs().iter().zip(&output_vars).map(|(g, v)| (*g, Some(*v))).collect();
    roots.extend(circuit.assertions().map(|g| (g, None)));

    let mut uses = vec![0u32; total_vars];
    for row in &mul_rows {
        for (col, _) in row.a.terms().iter().chain(row.b.terms()) {
            uses[*col] += 1;
        }
    }
    for (g, _) in &roots {
        for (col, _) in lcs[g.0].terms() {
            uses[*col] += 1;
        }
    }

    // A root whose combination mentions a product column `m` absorbs its
    // binding: solve `k*m + rest = target` for `m` and substitute everywhere.
    // Columns with a single use are preferred since they cause no fill-in.
    let mut root_lcs: Vec<LinearCombination> = roots.iter().map(|(g, _)| lcs[g.0].clone()).collect();
    let mut eliminated = vec![false; total_vars];
    let mut bindings: Vec<(R1csRowKind, LinearCombination, LinearCombination)> = Vec::new();
    for r in 0..roots.len() {
        let (g, out_var) = roots[r];
        let l = root_lcs[r].clone();
        let target = out_var.map(LinearCombination::var).unwrap_or_default();
        let is_mul = |col: usize| col >= first_mul_var && col < next_var && !eliminated[col];
        let candidate = l
            .terms()
            .iter()
            .rev()
            .find(|(col, _)| is_mul(*col) && uses[*col] == 1)
            .or_else(|| l.terms().iter().rev().find(|(col, _)| is_mul(*col)))
            .copied();
        match candidate {
            Some((m, k)) => {
                let k_inv = k.inv().expect("coefficients are nonzero");
                let value = target.add(&l.without(m).scale(-FieldElement::ONE)).scale(k_inv);
                let substitute = |lc: &mut LinearCombination| {
                    let coeff = lc.coefficient(m);
                    if !coeff.is_zero() {
                        *lc = lc.without(m).add(&value.scale(coeff));
                    }
                };
                for row in mul_rows.iter_mut() {
                    substitute(&mut row.a);
                    substitute(&mut row.b);
                    substitute(&mut row.c);
                }
                for other in root_lcs.iter_mut().skip(r + 1) {
                    substitute(other);
                }
                eliminated[m] = true;
            }
            None => {
                let kind = match out_var {
                    Some(_) => R1csRowKind::Output(g),
                    None => R1csRowKind::Assert(g),
                };
                bindings.push((kind, l, target));
            }
        }
    }

    // Final numbering: 1, inputs, surviving multiplication columns, outputs.
    let mut map = vec![usize::MAX; total_vars];
    let mut columns = vec![ColumnSource::One];
    map[0] = 0;
    for (i, id) in circuit.inputs().iter().enumerate() {
        map[1 + i] = columns.len();
        columns.push(ColumnSource::Input(*id));
    }
    for row in &mul_rows {
        if !eliminated[row.var] {
            map[row.var] = columns.len();
            columns.push(ColumnSource::Internal(row.gate));
        }
    }
    for (g, v) in circuit.outputs().iter().zip(&output_vars) {
        map[*v] = columns.len();
        columns.push(ColumnSource::Output(*g));
    }

    let one = LinearCombination::var(0);
    let mut sys = R1csSystem { columns, a: vec![], b: vec![], c: vec![], rows: vec![] };
    for g in circuit.row_order() {
        let r = mul_row_of_gate[g.0];
        if r == usize::MAX {
            continue;
        }
        let row = &mul_rows[r];
        sys.a.push(row.a.remap(&map));
        sys.b.push(row.b.remap(&map));
        sys.c.push(row.c.remap(&map));
        sys.rows.push(R1csRowKind::Mul(row.gate));
    }
    for (kind, l, target) in bindings {
        sys.a.push(l.remap(&map));
        sys.b.push(one.clone());
        sys.c.push(target.remap(&map));
        sys.rows.push(kind);
    }
    sys
}
