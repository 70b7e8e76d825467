//! Merkle trees against naive oracles, plus the hash-count work bounds.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zklab::field::FieldElement as F;
use zklab::merkle::{
    prove_in_prefix, verify, verify_composed, IncrementalMerkleTree, MerkleTree, Side,
};
use zklab::permutations::{HashKind, Hasher};

fn hasher() -> Hasher {
    Hasher::builtin(HashKind::Poseidon2)
}

fn random_leaves(rng: &mut ChaCha8Rng, n: usize) -> Vec<F> {
    (0..n).map(|_| F::random(rng)).collect()
}

fn recursive_root(h: &Hasher, leaves: &[F]) -> F {
    if leaves.len() == 1 {
        return leaves[0];
    }
    let (l, r) = leaves.split_at(leaves.len() / 2);
    h.hash2(recursive_root(h, l), recursive_root(h, r))
}

/// Every node keyed by (height, index), computed recursively.
fn node_set(h: &Hasher, leaves: &[F], height: u32, index: u64, out: &mut HashMap<(u32, u64), F>) -> F {
    let v = if height == 0 {
        leaves[index as usize]
    } else {
        let l = node_set(h, leaves, height - 1, 2 * index, out);
        let r = node_set(h, leaves, height - 1, 2 * index + 1, out);
        h.hash2(l, r)
    };
    out.insert((height, index), v);
    v
}

#[test]
fn build_matches_recursive_oracle() {
    let h = hasher();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for depth in 1..=6 {
        let leaves = random_leaves(&mut rng, 1 << depth);
        let tree = MerkleTree::build(&h, &leaves, depth).unwrap();
        assert_eq!(tree.root(), recursive_root(&h, &leaves));
    }
}

#[test]
fn short_leaf_lists_are_zero_padded() {
    let h = hasher();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let leaves = random_leaves(&mut rng, 5);
    let mut padded = leaves.clone();
    padded.resize(8, F::ZERO);
    assert_eq!(
        MerkleTree::build(&h, &leaves, 3).unwrap().root(),
        MerkleTree::build(&h, &padded, 3).unwrap().root()
    );
}

#[test]
fn build_costs_two_to_the_depth_minus_one() {
    let h = hasher();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for depth in 0..=7u32 {
        h.reset_counters();
        MerkleTree::build(&h, &random_leaves(&mut rng, 1 << depth), depth).unwrap();
        assert_eq!(h.calls(), (1u64 << depth) - 1);
    }
}

#[test]
fn insert_and_verify_cost_depth() {
    let h = Arc::new(hasher());
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut tree = IncrementalMerkleTree::new(h.clone(), 20).unwrap();
    for _ in 0..5 {
        h.reset_counters();
        tree.insert(F::random(&mut rng)).unwrap();
        assert_eq!(h.calls(), 20);
    }
    let full = MerkleTree::build(&h, &random_leaves(&mut rng, 16), 4).unwrap();
    let path = full.prove(9).unwrap();
    h.reset_counters();
    assert!(verify(&h, full.leaves()[9], full.root(), &path));
    assert_eq!(h.calls(), 4);
}

#[test]
fn incremental_matches_rebuild_on_every_prefix() {
    let h = Arc::new(hasher());
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..50 {
        let depth = rng.gen_range(0..=6u32);
        let k = rng.gen_range(0..=(1usize << depth));
        let leaves = random_leaves(&mut rng, k);
        let mut tree = IncrementalMerkleTree::new(h.clone(), depth).unwrap();
        assert_eq!(tree.root(), MerkleTree::build(&h, &[], depth).unwrap().root());
        for i in 0..k {
            tree.insert(leaves[i]).unwrap();
            assert_eq!(tree.root(), MerkleTree::build(&h, &leaves[..=i], depth).unwrap().root());
        }
    }
}

#[test]
fn paths_match_node_set_oracle() {
    let h = hasher();
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for depth in 1..=8u32 {
        let leaves = random_leaves(&mut rng, 1 << depth);
        let tree = MerkleTree::build(&h, &leaves, depth).unwrap();
        let mut nodes = HashMap::new();
        node_set(&h, &leaves, depth, 0, &mut nodes);
        for _ in 0..8 {
            let index = rng.gen_range(0..1u64 << depth);
            let path = tree.prove(index).unwrap();
            for level in 0..depth {
                let i = index >> level;
                assert_eq!(path.siblings[level as usize], nodes[&(level, i ^ 1)]);
                let side = if i & 1 == 0 { Side::Left } else { Side::Right };
                assert_eq!(path.positions[level as usize], side);
            }
        }
    }
}

#[test]
fn every_index_round_trips_and_perturbation_fails() {
    let h = hasher();
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let leaves = random_leaves(&mut rng, 16);
    let tree = MerkleTree::build(&h, &leaves, 4).unwrap();
    for (i, leaf) in leaves.iter().enumerate() {
        let path = tree.prove(i as u64).unwrap();
        assert!(verify(&h, *leaf, tree.root(), &path));
        let mut bad = path.clone();
        let j = rng.gen_range(0..4);
        bad.siblings[j] += F::ONE;
        assert!(!verify(&h, *leaf, tree.root(), &bad));
    }
}

#[test]
fn depth_two_membership_is_exhaustive() {
    let h = hasher();
    let mut rng = ChaCha8Rng::seed_from_u64(38);
    let leaves = random_leaves(&mut rng, 4);
    let tree = MerkleTree::build(&h, &leaves, 2).unwrap();
    let candidates: Vec<F> = leaves.iter().copied().chain(random_leaves(&mut rng, 2)).collect();
    for c in &candidates {
        for index in 0..4u64 {
            let path = tree.prove(index).unwrap();
            let brute = leaves[index as usize] == *c;
            assert_eq!(verify(&h, *c, tree.root(), &path), brute);
        }
    }
}

#[test]
fn prefix_paths_match_full_tree() {
    let h = hasher();
    let mut rng = ChaCha8Rng::seed_from_u64(39);
    for _ in 0..20 {
        let depth = rng.gen_range(1..=7u32);
        let n = rng.gen_range(1..=(1usize << depth));
        let leaves = random_leaves(&mut rng, n);
        let full = MerkleTree::build(&h, &leaves, depth).unwrap();
        let index = rng.gen_range(0..n as u64);
        let (path, root) = prove_in_prefix(&h, &leaves, depth, index).unwrap();
        assert_eq!(root, full.root());
        assert_eq!(path, full.prove(index).unwrap());
    }
}

#[test]
fn composed_membership_matches_flattened_tree() {
    let h = Arc::new(hasher());
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..100 {
        let ds = rng.gen_range(2..=3u32);
        let de = rng.gen_range(2..=3u32);
        let flat = random_leaves(&mut rng, 1 << (ds + de));
        let slots: Vec<MerkleTree> =
            flat.chunks(1 << ds).map(|c| MerkleTree::build(&h, c, ds).unwrap()).collect();
        let mut era = IncrementalMerkleTree::new(h.clone(), de).unwrap();
        for s in &slots {
            era.insert(s.root()).unwrap();
        }
        let flattened = MerkleTree::build(&h, &flat, ds + de).unwrap();
        assert_eq!(era.root(), flattened.root());

        let slot_roots: Vec<F> = slots.iter().map(|s| s.root()).collect();
        let s = rng.gen_range(0..slots.len());
        let j = rng.gen_range(0..1u64 << ds);
        let slot_path = slots[s].prove(j).unwrap();
        let (era_path, _) = prove_in_prefix(&h, &slot_roots, de, s as u64).unwrap();
        let flat_index = (s << ds) + j as usize;

        let candidate = match rng.gen_range(0..3) {
            0 => flat[flat_index],
            1 => flat[rng.gen_range(0..flat.len())],
            _ => F::random(&mut rng),
        };
        let oracle = flattened.leaves()[flat_index] == candidate;
        let got = verify_composed(&h, candidate, &slot_path, slot_roots[s], &era_path, era.root());
        assert_eq!(got, oracle);
    }
}
