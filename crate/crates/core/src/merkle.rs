//! Binary Merkle trees: fully populated trees (one batch) and incremental
//! fixed-depth trees filled left to right (the long-lived on-chain tree).
//!
//! Missing leaves are `FieldElement::ZERO`. Node hashing goes through a
//! shared [`Hasher`], whose call counter is how the work bounds are tested:
//! `build` costs `2^d - 1` compressions, `insert` and `verify` cost `d`.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldElement, FieldError};
use crate::permutations::Hasher;

/// Largest depth a fully populated tree may be built at.
pub const MAX_FULL_DEPTH: u32 = 26;
/// Largest depth for incremental trees and paths.
pub const MAX_DEPTH: u32 = 48;
/// Recent roots an incremental tree remembers.
pub const DEFAULT_ROOT_HISTORY: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MerkleError {
    #[error("{got} leaves do not fit a tree of capacity {capacity}")]
    Capacity { capacity: u64, got: u64 },
    #[error("leaf index {index} out of range (tree holds {len})")]
    Index { index: u64, len: u64 },
    #[error("tree is full ({capacity} leaves)")]
    Full { capacity: u64 },
    #[error("depth {0} is too large")]
    DepthTooLarge(u32),
    #[error("line {line}: {source}")]
    LeafLine { line: usize, source: FieldError },
}

/// Which child the running node is at a given level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn of(index: u64) -> Side {
        if index & 1 == 0 {
            Side::Left
        } else {
            Side::Right
        }
    }
}

/// An authentication path from a leaf to the root, bottom level first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PathFile", into = "PathFile")]
pub struct MerklePath {
    pub siblings: Vec<FieldElement>,
    pub positions: Vec<Side>,
    pub leaf_index: u64,
}

#[derive(Serialize, Deserialize)]
struct PathFile {
    siblings: Vec<FieldElement>,
    bits: Vec<u8>,
    index: u64,
}

impl From<MerklePath> for PathFile {
    fn from(p: MerklePath) -> Self {
        PathFile {
            siblings: p.siblings,
            bits: p.positions.iter().map(|s| (*s == Side::Right) as u8).collect(),
            index: p.leaf_index,
        }
    }
}

impl TryFrom<PathFile> for MerklePath {
    type Error = String;
    fn try_from(f: PathFile) -> Result<Self, Self::Error> {
        if f.bits.len() != f.siblings.len() {
            return Err(format!("{} siblings but {} bits", f.siblings.len(), f.bits.len()));
        }
        let positions = f
            .bits
            .iter()
            .map(|b| match b {
                0 => Ok(Side::Left),
                1 => Ok(Side::Right),
                other => Err(format!("position bit must be 0 or 1, got {other}")),
            })
            .collect::<Result<_, _>>()?;
        Ok(MerklePath { siblings: f.siblings, positions, leaf_index: f.index })
    }
}

impl MerklePath {
    pub fn depth(&self) -> usize {
        self.siblings.len()
    }

    pub fn is_well_formed(&self) -> bool {
        self.siblings.len() == self.positions.len()
    }

    /// Folds `leaf` up the path.
    pub fn fold(&self, hasher: &Hasher, leaf: FieldElement) -> FieldElement {
        self.siblings.iter().zip(&self.positions).fold(leaf, |node, (sib, side)| match side {
            Side::Left => hasher.hash2(node, *sib),
            Side::Right => hasher.hash2(*sib, node),
        })
    }
}

/// Membership check: true iff folding `leaf` up `path` reaches `root`.
/// A malformed path is simply not a proof of membership.
pub fn verify(hasher: &Hasher, leaf: FieldElement, root: FieldElement, path: &MerklePath) -> bool {
    path.is_well_formed() && path.fold(hasher, leaf) == root
}

/// Two-level membership: `leaf` sits in a slot tree whose root `slot_root`
/// is itself a leaf of the era tree with root `era_root`.
pub fn verify_composed(
    hasher: &Hasher,
    leaf: FieldElement,
    slot_path: &MerklePath,
    slot_root: FieldElement,
    era_path: &MerklePath,
    era_root: FieldElement,
) -> bool {
    verify(hasher, leaf, slot_root, slot_path) && verify(hasher, slot_root, era_root, era_path)
}

/// Roots of all-zero subtrees, `zeros[i]` at height `i`.
pub fn zero_hashes(hasher: &Hasher, depth: u32) -> Vec<FieldElement> {
    let mut zeros = Vec::with_capacity(depth as usize + 1);
    zeros.push(FieldElement::ZERO);
    for i in 0..depth as usize {
        zeros.push(hasher.hash2(zeros[i], zeros[i]));
    }
    zeros
}

/// A fully populated tree of `2^depth` leaves with every level stored.
#[derive(Debug, Clone)]
pub struct MerkleTree {
    depth: u32,
    /// `levels[0]` are the leaves, `levels[depth]` is `[root]`.
    levels: Vec<Vec<FieldElement>>,
}

impl MerkleTree {
    /// Builds the tree, padding with zero leaves up to `2^depth`.
    pub fn build(hasher: &Hasher, leaves: &[FieldElement], depth: u32) -> Result<Self, MerkleError> {
        if depth > MAX_FULL_DEPTH {
            return Err(MerkleError::DepthTooLarge(depth));
        }
        let capacity = 1u64 << depth;
        if leaves.len() as u64 > capacity {
            return Err(MerkleError::Capacity { capacity, got: leaves.len() as u64 });
        }
        let mut level = leaves.to_vec();
        level.resize(capacity as usize, FieldElement::ZERO);
        let mut levels = vec![level];
        for _ in 0..depth {
            let below = levels.last().expect("at least the leaf level");
            let above = below.chunks_exact(2).map(|pair| hasher.hash2(pair[0], pair[1])).collect();
            levels.push(above);
        }
        Ok(MerkleTree { depth, levels })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn root(&self) -> FieldElement {
        self.levels[self.depth as usize][0]
    }

    pub fn leaves(&self) -> &[FieldElement] {
        &self.levels[0]
    }

    /// Node at `height` (0 = leaves) and horizontal `index`.
    pub fn node(&self, height: u32, index: u64) -> Option<FieldElement> {
        self.levels.get(height as usize)?.get(index as usize).copied()
    }

    pub fn prove(&self, index: u64) -> Result<MerklePath, MerkleError> {
        let len = self.levels[0].len() as u64;
        if index >= len {
            return Err(MerkleError::Index { index, len });
        }
        let mut siblings = Vec::with_capacity(self.depth as usize);
        let mut positions = Vec::with_capacity(self.depth as usize);
        let mut i = index;
        for level in &self.levels[..self.depth as usize] {
            siblings.push(level[(i ^ 1) as usize]);
            positions.push(Side::of(i));
            i >>= 1;
        }
        Ok(MerklePath { siblings, positions, leaf_index: index })
    }
}

/// Authentication path for `index` in a depth-`depth` tree whose leaves are
/// `leaves` followed by zeros. Only the populated prefix is hashed, so this
/// stays cheap for deep, sparsely filled trees.
pub fn prove_in_prefix(
    hasher: &Hasher,
    leaves: &[FieldElement],
    depth: u32,
    index: u64,
) -> Result<(MerklePath, FieldElement), MerkleError> {
    if depth > MAX_DEPTH {
        return Err(MerkleError::DepthTooLarge(depth));
    }
    let capacity = 1u128 << depth;
    if leaves.len() as u128 > capacity {
        return Err(MerkleError::Capacity { capacity: capacity.min(u64::MAX as u128) as u64, got: leaves.len() as u64 });
    }
    if index >= leaves.len() as u64 {
        return Err(MerkleError::Index { index, len: leaves.len() as u64 });
    }
    let zeros = zero_hashes(hasher, depth);
    let mut level = leaves.to_vec();
    let mut siblings = Vec::with_capacity(depth as usize);
    let mut positions = Vec::with_capacity(depth as usize);
    let mut i = index;
    for height in 0..depth as usize {
        let sib = level.get((i ^ 1) as usize).copied().unwrap_or(zeros[height]);
        siblings.push(sib);
        positions.push(Side::of(i));
        level = level
            .chunks(2)
            .map(|pair| hasher.hash2(pair[0], pair.get(1).copied().unwrap_or(zeros[height])))
            .collect();
        i >>= 1;
    }
    let root = level.first().copied().unwrap_or(zeros[depth as usize]);
    Ok((MerklePath { siblings, positions, leaf_index: index }, root))
}

/// Append-only tree of fixed depth that keeps only the left frontier.
#[derive(Debug, Clone)]
pub struct IncrementalMerkleTree {
    hasher: Arc<Hasher>,
    depth: u32,
    next_index: u64,
    frontier: Vec<FieldElement>,
    zeros: Vec<FieldElement>,
    root: FieldElement,
    history: VecDeque<FieldElement>,
    history_len: usize,
}

impl IncrementalMerkleTree {
    pub fn new(hasher: Arc<Hasher>, depth: u32) -> Result<Self, MerkleError> {
        Self::with_history(hasher, depth, DEFAULT_ROOT_HISTORY)
    }

    pub fn with_history(hasher: Arc<Hasher>, depth: u32, history_len: usize) -> Result<Self, MerkleError> {
        if depth > MAX_DEPTH {
            return Err(MerkleError::DepthTooLarge(depth));
        }
        let zeros = zero_hashes(&hasher, depth);
        let root = zeros[depth as usize];
        let mut history = VecDeque::with_capacity(history_len.max(1));
        history.push_back(root);
        Ok(IncrementalMerkleTree {
            hasher,
            depth,
            next_index: 0,
            frontier: zeros[..depth as usize].to_vec(),
            zeros,
            root,
            history,
            history_len: history_len.max(1),
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn capacity(&self) -> u64 {
        1u64 << self.depth.min(63)
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    pub fn root(&self) -> FieldElement {
        self.root
    }

    pub fn zero_hashes(&self) -> &[FieldElement] {
        &self.zeros
    }

    pub fn hasher(&self) -> &Arc<Hasher> {
        &self.hasher
    }

    /// Appends `leaf` at `next_index`; exactly `depth` compressions.
    pub fn insert(&mut self, leaf: FieldElement) -> Result<FieldElement, MerkleError> {
        if self.next_index >= self.capacity() {
            return Err(MerkleError::Full { capacity: self.capacity() });
        }
        let mut node = leaf;
        let mut i = self.next_index;
        for height in 0..self.depth as usize {
            node = if i & 1 == 0 {
                self.frontier[height] = node;
                self.hasher.hash2(node, self.zeros[height])
            } else {
                self.hasher.hash2(self.frontier[height], node)
            };
            i >>= 1;
        }
        self.next_index += 1;
        self.root = node;
        if self.history.len() == self.history_len {
            self.history.pop_front();
        }
        self.history.push_back(node);
        Ok(node)
    }

    /// Whether `root` is among the most recent roots (including the current one).
    pub fn is_known_root(&self, root: FieldElement) -> bool {
        self.history.iter().any(|r| *r == root)
    }

    pub fn recent_roots(&self) -> impl Iterator<Item = &FieldElement> {
        self.history.iter()
    }
}

/// Parses a leaf file: one hex field element per line, blank lines ignored.
pub fn parse_leaves(text: &str) -> Result<Vec<FieldElement>, MerkleError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| FieldElement::from_hex(l).map_err(|source| MerkleError::LeafLine { line: i + 1, source }))
        .collect()
}

pub fn format_leaves(leaves: &[FieldElement]) -> String {
    leaves.iter().map(|l| l.to_hex() + "\n").collect()
}
