//! Permutation parameter sets: validation, JSON files and the deterministic
//! constant generator.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::{self, FieldElement, MODULUS_DECIMAL};

pub type Matrix = Vec<Vec<FieldElement>>;

/// The supported type-1 hash constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashKind {
    Mimc,
    Gmimc,
    Poseidon,
    Poseidon2,
    Neptune,
}

impl HashKind {
    pub const ALL: [HashKind; 5] = [
        HashKind::Mimc,
        HashKind::Gmimc,
        HashKind::Poseidon,
        HashKind::Poseidon2,
        HashKind::Neptune,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            HashKind::Mimc => "mimc",
            HashKind::Gmimc => "gmimc",
            HashKind::Poseidon => "poseidon",
            HashKind::Poseidon2 => "poseidon2",
            HashKind::Neptune => "neptune",
        }
    }

    /// Default shape: (width, exponent, full rounds, partial rounds).
    /// MiMC and GMiMC carry their whole round count in `rounds_full`.
    pub fn default_shape(&self) -> (usize, u64, usize, usize) {
        match self {
            HashKind::Mimc => (2, 5, 220, 0),
            HashKind::Gmimc => (4, 5, 226, 0),
            HashKind::Poseidon => (3, 5, 8, 57),
            HashKind::Poseidon2 => (3, 5, 8, 56),
            HashKind::Neptune => (4, 5, 6, 68),
        }
    }

    /// Names of the linear layers this construction needs.
    pub fn matrix_names(&self) -> &'static [&'static str] {
        match self {
            HashKind::Mimc | HashKind::Gmimc => &[],
            HashKind::Poseidon => &["mds"],
            HashKind::Poseidon2 | HashKind::Neptune => &["external", "internal"],
        }
    }

    fn is_feistel(&self) -> bool {
        matches!(self, HashKind::Mimc | HashKind::Gmimc)
    }
}

impl fmt::Display for HashKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HashKind {
    type Err = ParamError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HashKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParamError::UnknownHash(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("unknown hash function `{0}`")]
    UnknownHash(String),
    #[error("exponent {0} is not coprime to p - 1")]
    BadExponent(u64),
    #[error("width {width} is not valid for {kind}")]
    BadWidth { kind: HashKind, width: usize },
    #[error("round schedule invalid: {0}")]
    BadRounds(String),
    #[error("expected {expected} round-constant rows, found {found}")]
    ConstantCount { expected: usize, found: usize },
    #[error("round {round}: expected {expected} constants, found {found}")]
    ConstantRow { round: usize, expected: usize, found: usize },
    #[error("missing linear layer `{0}`")]
    MissingMatrix(String),
    #[error("unexpected linear layer `{0}`")]
    UnexpectedMatrix(String),
    #[error("linear layer `{name}` must be {width}x{width}")]
    MatrixShape { name: String, width: usize },
    #[error("linear layer `{0}` is singular")]
    SingularMatrix(String),
    #[error("parameter file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parameter file: {0}")]
    Io(#[from] std::io::Error),
}

/// A validated parameterization of one permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationSpec {
    kind: HashKind,
    width: usize,
    exponent: u64,
    rounds_full: usize,
    rounds_partial: usize,
    round_constants: Vec<Vec<FieldElement>>,
    matrices: BTreeMap<String, Matrix>,
}

/// On-disk form of a parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamFile {
    pub name: HashKind,
    pub t: usize,
    pub d: u64,
    pub rounds_full: usize,
    pub rounds_partial: usize,
    pub constants: Vec<Vec<FieldElement>>,
    #[serde(default)]
    pub matrices: BTreeMap<String, Matrix>,
}

impl PermutationSpec {
    pub fn new(
        kind: HashKind,
        width: usize,
        exponent: u64,
        rounds_full: usize,
        rounds_partial: usize,
        round_constants: Vec<Vec<FieldElement>>,
        matrices: BTreeMap<String, Matrix>,
    ) -> Result<Self, ParamError> {
        let spec = PermutationSpec {
            kind,
            width,
            exponent,
            rounds_full,
            rounds_partial,
            round_constants,
            matrices,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ParamError> {
        if !field::is_permutation_exponent(self.exponent) || self.exponent < 3 {
            return Err(ParamError::BadExponent(self.exponent));
        }
        let width_ok = match self.kind {
            HashKind::Mimc => self.width == 2,
            _ => self.width >= 2,
        };
        if !width_ok {
            return Err(ParamError::BadWidth { kind: self.kind, width: self.width });
        }
        if self.kind.is_feistel() {
            if self.rounds_partial != 0 || self.rounds_full == 0 {
                return Err(ParamError::BadRounds(format!(
                    "{} uses a single round count (got {} full, {} partial)",
                    self.kind, self.rounds_full, self.rounds_partial
                )));
            }
        } else if self.rounds_full == 0 || self.rounds_full % 2 != 0 {
            return Err(ParamError::BadRounds(format!(
                "full rounds must be even and positive, got {}",
                self.rounds_full
            )));
        }

        let total = self.total_rounds();
        if self.round_constants.len() != total {
            return Err(ParamError::ConstantCount {
                expected: total,
                found: self.round_constants.len(),
            });
        }
        for (round, row) in self.round_constants.iter().enumerate() {
            let expected = self.constants_in_round(round);
            if row.len() != expected {
                return Err(ParamError::ConstantRow { round, expected, found: row.len() });
            }
        }

        let wanted = self.kind.matrix_names();
        for name in wanted {
            let m = self
                .matrices
                .get(*name)
                .ok_or_else(|| ParamError::MissingMatrix(name.to_string()))?;
            if m.len() != self.width || m.iter().any(|r| r.len() != self.width) {
                return Err(ParamError::MatrixShape { name: name.to_string(), width: self.width });
            }
            if determinant(m).is_zero() {
                return Err(ParamError::SingularMatrix(name.to_string()));
            }
        }
        if let Some(extra) = self.matrices.keys().find(|k| !wanted.contains(&k.as_str())) {
            return Err(ParamError::UnexpectedMatrix(extra.clone()));
        }
        Ok(())
    }

    pub fn kind(&self) -> HashKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn exponent(&self) -> u64 {
        self.exponent
    }

    pub fn rounds_full(&self) -> usize {
        self.rounds_full
    }

    pub fn rounds_partial(&self) -> usize {
        self.rounds_partial
    }

    pub fn total_rounds(&self) -> usize {
        self.rounds_full + self.rounds_partial
    }

    pub fn round_constants(&self) -> &[Vec<FieldElement>] {
        &self.round_constants
    }

    pub fn matrix(&self, name: &str) -> Option<&Matrix> {
        self.matrices.get(name)
    }

    /// True for a Poseidon-style round applying the S-box to every lane.
    pub fn is_full_round(&self, round: usize) -> bool {
        if self.kind.is_feistel() {
            return true;
        }
        let half = self.rounds_full / 2;
        round < half || round >= half + self.rounds_partial
    }

    /// Number of round constants consumed by `round`.
    pub fn constants_in_round(&self, round: usize) -> usize {
        match self.kind {
            HashKind::Mimc | HashKind::Gmimc => 1,
            HashKind::Poseidon => self.width,
            HashKind::Poseidon2 | HashKind::Neptune => {
                if self.is_full_round(round) {
                    self.width
                } else {
                    1
                }
            }
        }
    }

    /// S-box applications in one permutation call.
    pub fn sboxes_per_permutation(&self) -> usize {
        if self.kind.is_feistel() {
            self.rounds_full
        } else {
            self.rounds_full * self.width + self.rounds_partial
        }
    }

    /// Returns a copy with one round constant replaced. Useful for
    /// sensitivity experiments; constants are data and are not checksummed.
    pub fn with_constant(
        &self,
        round: usize,
        lane: usize,
        value: FieldElement,
    ) -> Option<PermutationSpec> {
        let mut out = self.clone();
        *out.round_constants.get_mut(round)?.get_mut(lane)? = value;
        Some(out)
    }

    pub fn to_file(&self) -> ParamFile {
        ParamFile {
            name: self.kind,
            t: self.width,
            d: self.exponent,
            rounds_full: self.rounds_full,
            rounds_partial: self.rounds_partial,
            constants: self.round_constants.clone(),
            matrices: self.matrices.clone(),
        }
    }

    pub fn from_file(file: ParamFile) -> Result<Self, ParamError> {
        PermutationSpec::new(
            file.name,
            file.t,
            file.d,
            file.rounds_full,
            file.rounds_partial,
            file.constants,
            file.matrices,
        )
    }

    pub fn from_json(text: &str) -> Result<Self, ParamError> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("parameter file serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ParamError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ParamError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// The parameter set shipped with the crate for `kind`.
    pub fn builtin(kind: HashKind) -> PermutationSpec {
        let text = match kind {
            HashKind::Mimc => include_str!("../../params/mimc.json"),
            HashKind::Gmimc => include_str!("../../params/gmimc.json"),
            HashKind::Poseidon => include_str!("../../params/poseidon.json"),
            HashKind::Poseidon2 => include_str!("../../params/poseidon2.json"),
            HashKind::Neptune => include_str!("../../params/neptune.json"),
        };
        Self::from_json(text).expect("shipped parameter files are valid")
    }
}

/// Determinant by Gaussian elimination over the field.
pub fn determinant(m: &Matrix) -> FieldElement {
    let n = m.len();
    let mut a = m.clone();
    let mut det = FieldElement::ONE;
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return FieldElement::ZERO;
        };
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        let inv = a[col][col].inv().expect("pivot is nonzero");
        for r in col + 1..n {
            let factor = a[r][col] * inv;
            if factor.is_zero() {
                continue;
            }
            for c in col..n {
                let sub = factor * a[col][c];
                a[r][c] -= sub;
            }
        }
    }
    det
}

/// Counter-mode constant stream: SHA-256 over a domain tag, the seed and a
/// counter, truncated to 254 bits and rejection-sampled below p.
fn derive_constant(tag: &str, seed: u64) -> FieldElement {
    for counter in 0u64.. {
        let mut h = Sha256::new();
        h.update(tag.as_bytes());
        h.update(seed.to_be_bytes());
        h.update(counter.to_be_bytes());
        let mut bytes: [u8; 32] = h.finalize().into();
        bytes[0] &= 0x3f;
        if let Ok(x) = FieldElement::from_bytes(&bytes) {
            return x;
        }
    }
    unreachable!("counter space exhausted")
}

fn cauchy_matrix(width: usize) -> Matrix {
    (0..width)
        .map(|i| {
            (0..width)
                .map(|j| {
                    FieldElement::from_u64((i + j + width) as u64)
                        .inv()
                        .expect("nonzero denominator")
                })
                .collect()
        })
        .collect()
}

/// All-ones matrix plus `diag`.
fn ones_plus_diagonal(diag: &[u64]) -> Matrix {
    let n = diag.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        FieldElement::from_u64(1 + diag[i])
                    } else {
                        FieldElement::ONE
                    }
                })
                .collect()
        })
        .collect()
}

fn default_matrices(kind: HashKind, width: usize) -> BTreeMap<String, Matrix> {
    let mut out = BTreeMap::new();
    match kind {
        HashKind::Mimc | HashKind::Gmimc => {}
        HashKind::Poseidon => {
            out.insert("mds".to_string(), cauchy_matrix(width));
        }
        HashKind::Poseidon2 | HashKind::Neptune => {
            // Poseidon2 external layer is circ(2, 1, .., 1); the Neptune
            // stand-in uses a Cauchy MDS instead. Both share the internal
            // layer J + diag(1, .., 1, 2).
            let external = match kind {
                HashKind::Neptune => cauchy_matrix(width),
                _ => ones_plus_diagonal(&vec![1; width]),
            };
            let mut diag = vec![1u64; width];
            diag[width - 1] = 2;
            out.insert("external".to_string(), external);
            out.insert("internal".to_string(), ones_plus_diagonal(&diag));
        }
    }
    out
}

/// Deterministically generates the default-shaped parameter set for `kind`.
pub fn generate_params(kind: HashKind, seed: u64) -> PermutationSpec {
    let (width, exponent, rounds_full, rounds_partial) = kind.default_shape();
    generate_params_with(kind, seed, width, exponent, rounds_full, rounds_partial)
        .expect("default shapes are valid")
}

/// Generator for an explicit shape.
pub fn generate_params_with(
    kind: HashKind,
    seed: u64,
    width: usize,
    exponent: u64,
    rounds_full: usize,
    rounds_partial: usize,
) -> Result<PermutationSpec, ParamError> {
    let mut skeleton = PermutationSpec {
        kind,
        width,
        exponent,
        rounds_full,
        rounds_partial,
        round_constants: Vec::new(),
        matrices: default_matrices(kind, width),
    };
    let total = skeleton.total_rounds();
    skeleton.round_constants = (0..total)
        .map(|round| {
            (0..skeleton.constants_in_round(round))
                .map(|lane| {
                    let tag = format!("{}|{}|{}|{}|{}", kind.name(), MODULUS_DECIMAL, width, round, lane);
                    derive_constant(&tag, seed)
                })
                .collect()
        })
        .collect();
    skeleton.validate()?;
    Ok(skeleton)
}
