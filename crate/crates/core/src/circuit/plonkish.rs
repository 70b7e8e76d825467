//! Lowering to a Plonkish gate table.
//!
//! Each row enforces `q_l*a + q_r*b + q_m*a*b + q_c + q_o*c = 0` over its
//! three cells. One row per addition or multiplication gate; constant
//! operands fold into the selectors. Copy constraints tie together every
//! cell that carries the same wire.

use serde::{Deserialize, Serialize};

use super::{Circuit, CircuitError, ConstraintSystem, Gate, GateId, Witness};
use crate::field::FieldElement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellColumn {
    L,
    R,
    O,
}

impl CellColumn {
    pub const ALL: [CellColumn; 3] = [CellColumn::L, CellColumn::R, CellColumn::O];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub column: CellColumn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlonkishRow {
    /// Gate that emitted the row.
    pub gate: GateId,
    /// Wires placed in the `a`, `b` and `c` cells; `None` cells are unused.
    pub wires: [Option<GateId>; 3],
    pub q_l: FieldElement,
    pub q_r: FieldElement,
    pub q_m: FieldElement,
    pub q_c: FieldElement,
    pub q_o: FieldElement,
}

impl PlonkishRow {
    fn new(gate: GateId) -> Self {
        let z = FieldElement::ZERO;
        PlonkishRow { gate, wires: [None; 3], q_l: z, q_r: z, q_m: z, q_c: z, q_o: z }
    }

    pub fn holds(&self, cells: &[FieldElement; 3]) -> bool {
        let [a, b, c] = *cells;
        (self.q_l * a + self.q_r * b + self.q_m * a * b + self.q_c + self.q_o * c).is_zero()
    }
}

/// Cell values, one triple per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlonkishAssignment {
    pub cells: Vec<[FieldElement; 3]>,
}

impl PlonkishAssignment {
    pub fn get(&self, cell: Cell) -> FieldElement {
        self.cells[cell.row][cell.column.index()]
    }

    pub fn set(&mut self, cell: Cell, v: FieldElement) {
        self.cells[cell.row][cell.column.index()] = v;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlonkishSystem {
    pub rows: Vec<PlonkishRow>,
    pub copies: Vec<(Cell, Cell)>,
}

impl PlonkishSystem {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Cells that carry a wire.
    pub fn wired_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.rows.iter().enumerate().flat_map(|(row, r)| {
            CellColumn::ALL
                .into_iter()
                .filter(move |col| r.wires[col.index()].is_some())
                .map(move |column| Cell { row, column })
        })
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        for (a, b) in &self.copies {
            for c in [a, b] {
                if c.row >= self.rows.len() {
                    return Err(CircuitError::Format(format!("copy constraint references row {}", c.row)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plonkish serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CircuitError> {
        let sys: Self = serde_json::from_str(s).map_err(|e| CircuitError::Format(e.to_string()))?;
        sys.validate()?;
        Ok(sys)
    }
}

impl ConstraintSystem for PlonkishSystem {
    type Assignment = PlonkishAssignment;

    fn assign(&self, witness: &Witness) -> PlonkishAssignment {
        let cells = self
            .rows
            .iter()
            .map(|r| r.wires.map(|w| w.map(|g| witness.value(g)).unwrap_or(FieldElement::ZERO)))
            .collect();
        PlonkishAssignment { cells }
    }

    fn is_satisfied(&self, assignment: &PlonkishAssignment) -> Result<bool, CircuitError> {
        if assignment.cells.len() != self.rows.len() {
            return Err(CircuitError::Shape { expected: self.rows.len(), found: assignment.cells.len() });
        }
        let rows_ok = self.rows.iter().zip(&assignment.cells).all(|(r, c)| r.holds(c));
        let copies_ok = self.copies.iter().all(|(a, b)| assignment.get(*a) == assignment.get(*b));
        Ok(rows_ok && copies_ok)
    }

    fn num_constraints(&self) -> usize {
        self.rows.len()
    }
}

pub(super) fn lower(circuit: &Circuit) -> PlonkishSystem {
    let gates = circuit.gates();
    let konst = |g: GateId| match gates[g.0] {
        Gate::Constant(c) => Some(c),
        _ => None,
    };
    let minus_one = -FieldElement::ONE;
    let is_output: Vec<bool> = {
        let mut v = vec![false; gates.len()];
        for o in circuit.outputs() {
            v[o.0] = true;
        }
        v
    };

    let mut rows = Vec::new();
    for g in circuit.row_order() {
        let mut row = PlonkishRow::new(g);
        match &gates[g.0] {
            Gate::Input { .. } => continue,
            Gate::Constant(c) => {
                if !is_output[g.0] {
                    continue;
                }
                row.wires[2] = Some(g);
                row.q_c = *c;
                row.q_o = minus_one;
            }
            Gate::Add(a, b) => {
                row.wires[2] = Some(g);
                row.q_o = minus_one;
                match (konst(*a), konst(*b)) {
                    (Some(x), Some(y)) => row.q_c = x + y,
                    (Some(x), None) => {
                        row.wires[0] = Some(*b);
                        row.q_l = FieldElement::ONE;
                        row.q_c = x;
                    }
                    (None, Some(y)) => {
                        row.wires[0] = Some(*a);
                        row.q_l = FieldElement::ONE;
                        row.q_c = y;
                    }
                    (None, None) => {
                        row.wires[0] = Some(*a);
                        row.wires[1] = Some(*b);
                        row.q_l = FieldElement::ONE;
                        row.q_r = FieldElement::ONE;
                    }
                }
            }
            Gate::Mul(a, b) => {
                row.wires[2] = Some(g);
                row.q_o = minus_one;
                match (konst(*a), konst(*b)) {
                    (Some(x), Some(y)) => row.q_c = x * y,
                    (Some(x), None) => {
                        row.wires[0] = Some(*b);
                        row.q_l = x;
                    }
                    (None, Some(y)) => {
                        row.wires[0] = Some(*a);
                        row.q_l = y;
                    }
                    (None, None) => {
                        row.wires[0] = Some(*a);
                        row.wires[1] = Some(*b);
                        row.q_m = FieldElement::ONE;
                    }
                }
            }
            Gate::AssertZero(a) => match konst(*a) {
                Some(c) => row.q_c = c,
                None => {
                    row.wires[0] = Some(*a);
                    row.q_l = FieldElement::ONE;
                }
            },
        }
        rows.push(row);
    }

    // Chain all cells carrying the same wire.
    let mut last_seen: Vec<Option<Cell>> = vec![None; gates.len()];
    let mut copies = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        for column in CellColumn::ALL {
            if let Some(w) = r.wires[column.index()] {
                let cell = Cell { row: i, column };
                if let Some(prev) = last_seen[w.0] {
                    copies.push((prev, cell));
                }
                last_seen[w.0] = Some(cell);
            }
        }
    }
    PlonkishSystem { rows, copies }
}
