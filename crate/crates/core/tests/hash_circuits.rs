//! Gadgets against the native hashes and trees, plus constraint accounting.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zklab::circuit::{check_satisfied, ColumnSource, ConstraintSystem};
use zklab::field::{chain_multiplications, FieldElement as F};
use zklab::hash_circuits::{
    build_hash2_gadget, build_merkle_root_gadget, build_withdraw_gadget, leaf_signal, note_commitment,
    nullifier_hash, tx_binding, Gadget, GadgetShape, SystemKind, WithdrawWitness,
};
use zklab::merkle::{prove_in_prefix, MerkleTree};
use zklab::permutations::{HashKind, Hasher, PermutationSpec};

fn sbox_cost(spec: &PermutationSpec) -> usize {
    chain_multiplications(spec.exponent()).unwrap()
}

#[test]
fn hash2_counts_follow_sbox_law() {
    for kind in HashKind::ALL {
        let spec = PermutationSpec::builtin(kind);
        let g = build_hash2_gadget(&spec).unwrap();
        let perms = 2usize.div_ceil(spec.width() - 1);
        let live_sboxes = perms * spec.sboxes_per_permutation() - g.folded_sboxes();
        let r1cs = g.constraint_count(SystemKind::R1cs);
        assert_eq!(r1cs, live_sboxes * sbox_cost(&spec), "{kind}");
        println!("{kind}: {r1cs} r1cs, {} folded S-boxes", g.folded_sboxes());
    }
}

#[test]
fn published_hash2_counts() {
    let count = |k| build_hash2_gadget(&PermutationSpec::builtin(k)).unwrap().constraint_count(SystemKind::R1cs);
    assert_eq!(count(HashKind::Mimc), 1320);
    assert_eq!(count(HashKind::Poseidon2), 240);
    let mimc = build_hash2_gadget(&PermutationSpec::builtin(HashKind::Mimc)).unwrap();
    let report = mimc.constraint_report(SystemKind::R1cs);
    assert_eq!((report.constraints, report.power), (1320, 11));
}

#[test]
fn hash2_gadgets_match_native() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for kind in HashKind::ALL {
        let hasher = Hasher::builtin(kind);
        let g = build_hash2_gadget(hasher.spec()).unwrap();
        for _ in 0..100 {
            let (l, r) = (F::random(&mut rng), F::random(&mut rng));
            let w = g.eval(&BTreeMap::from([("left".into(), l), ("right".into(), r)])).unwrap();
            assert_eq!(g.output_value(&w, "digest"), Some(hasher.hash2(l, r)), "{kind}");
        }
    }
}

#[test]
fn deposit_circuit_counts() {
    let mimc = PermutationSpec::builtin(HashKind::Mimc);
    let p2 = PermutationSpec::builtin(HashKind::Poseidon2);
    assert_eq!(build_merkle_root_gadget(&mimc, 5).unwrap().constraint_count(SystemKind::R1cs), 40_920);
    assert_eq!(build_merkle_root_gadget(&p2, 5).unwrap().constraint_count(SystemKind::R1cs), 7_440);
    for kind in HashKind::ALL {
        let spec = PermutationSpec::builtin(kind);
        let h = build_hash2_gadget(&spec).unwrap().constraint_count(SystemKind::R1cs);
        for d in 1..=3u32 {
            let g = build_merkle_root_gadget(&spec, d).unwrap();
            assert_eq!(g.constraint_count(SystemKind::R1cs), h * ((1 << d) - 1), "{kind} d={d}");
        }
    }
}

#[test]
fn deposit_circuit_matches_tree_root() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for kind in HashKind::ALL {
        let hasher = Hasher::builtin(kind);
        for d in 1..=3u32 {
            let g = build_merkle_root_gadget(hasher.spec(), d).unwrap();
            let trials = if d == 1 { 100 } else { 20 };
            for _ in 0..trials {
                let leaves: Vec<F> = (0..1usize << d).map(|_| F::random(&mut rng)).collect();
                let inputs = leaves.iter().enumerate().map(|(i, x)| (leaf_signal(i), *x)).collect();
                let w = g.eval(&inputs).unwrap();
                let tree = MerkleTree::build(&hasher, &leaves, d).unwrap();
                assert_eq!(g.output_value(&w, "root"), Some(tree.root()), "{kind} d={d}");
            }
        }
    }
}

/// A deposit into slot `slot_index` of a batch, inside an era whose earlier
/// slots are filled with random roots.
fn honest_withdrawal(
    rng: &mut ChaCha8Rng,
    tree: &Hasher,
    commit: &Hasher,
    d_slot: u32,
    d_era: u32,
) -> WithdrawWitness {
    let secret = F::random(rng);
    let nullifier = F::random(rng);
    let cm = note_commitment(commit, secret, nullifier);
    let mut leaves: Vec<F> = (0..1usize << d_slot).map(|_| F::random(rng)).collect();
    let slot_index = rng.gen_range(0..leaves.len());
    leaves[slot_index] = cm;
    let slot_tree = MerkleTree::build(tree, &leaves, d_slot).unwrap();
    let slot_path = slot_tree.prove(slot_index as u64).unwrap();
    let mut slots: Vec<F> = (0..rng.gen_range(1..6)).map(|_| F::random(rng)).collect();
    let era_index = rng.gen_range(0..slots.len());
    slots[era_index] = slot_tree.root();
    let (era_path, root) = prove_in_prefix(tree, &slots, d_era, era_index as u64).unwrap();
    WithdrawWitness {
        secret,
        nullifier,
        slot_path,
        era_path,
        root,
        nullifier_hash: nullifier_hash(commit, nullifier),
        recipient: F::random(rng),
        relayer: F::random(rng),
        fee: F::from_u64(rng.gen_range(0..1000)),
        refund: F::ZERO,
    }
}

fn assert_withdraw_behaviour(g: &Gadget, tree: &Hasher, d_slot: u32, d_era: u32, rng: &mut ChaCha8Rng) {
    let commit = Hasher::builtin(HashKind::Poseidon2);
    let wit = honest_withdrawal(rng, tree, &commit, d_slot, d_era);
    let signals = wit.signals(d_slot, d_era).unwrap();
    let w = g.eval(&signals).unwrap();
    assert_eq!(
        g.output_value(&w, "tx_binding"),
        Some(tx_binding(wit.recipient, wit.relayer, wit.fee, wit.refund))
    );
    let r1cs = g.circuit().lower_to_r1cs();
    let plonk = g.circuit().lower_to_plonkish();
    assert!(check_satisfied(&r1cs, &w).unwrap());
    assert!(check_satisfied(&plonk, &w).unwrap());

    // Recipient swapped after the witness was produced.
    let recipient = g.input("recipient").unwrap();
    let mut z = r1cs.assign(&w);
    let col = r1cs.columns.iter().position(|c| *c == ColumnSource::Input(recipient)).unwrap();
    z[col] += F::ONE;
    assert!(!r1cs.is_satisfied(&z).unwrap());

    // Any altered signal that feeds a check must be caught.
    for name in ["secret", "nullifier", "root", "nullifier_hash", "slot_sibling_0", "era_bit_0", "fee"] {
        let mut bad = signals.clone();
        *bad.get_mut(name).unwrap() += F::ONE;
        let mut w2 = g.eval(&bad).unwrap();
        // keep the public binding output from the honest run
        let out = g.output("tx_binding").unwrap();
        w2.set(out, w.value(out));
        assert!(!check_satisfied(&r1cs, &w2).unwrap(), "{name}");
        assert!(!check_satisfied(&plonk, &w2).unwrap(), "{name}");
    }
}

#[test]
fn withdraw_circuit_accepts_honest_and_rejects_tampered() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for kind in HashKind::ALL {
        let tree = Hasher::builtin(kind);
        let (d_slot, d_era) = (2, 3);
        let g = build_withdraw_gadget(tree.spec(), d_slot, d_era).unwrap();
        for _ in 0..3 {
            assert_withdraw_behaviour(&g, &tree, d_slot, d_era, &mut rng);
        }
    }
}

#[test]
fn withdraw_circuit_at_protocol_depths() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let tree = Hasher::builtin(HashKind::Mimc);
    let g = build_withdraw_gadget(tree.spec(), 5, 20).unwrap();
    assert_eq!(g.shape(), GadgetShape::Withdraw { d_slot: 5, d_era: 20 });
    let sections: BTreeMap<&str, usize> = g.sections().iter().map(|(n, c)| (n.as_str(), *c)).collect();
    assert_eq!(sections["slot_path"] + sections["era_path"], 1_323 * 25);
    let h_commit = build_hash2_gadget(&PermutationSpec::builtin(HashKind::Poseidon2))
        .unwrap()
        .constraint_count(SystemKind::R1cs);
    let total = g.constraint_count(SystemKind::R1cs);
    // commitment + nullifier hash, 25 path levels, one binding row
    assert_eq!(total, 2 * h_commit + 1_323 * 25 + 1);
    println!("MiMC withdraw circuit (5, 20): {total} constraints");
    assert_withdraw_behaviour(&g, &tree, 5, 20, &mut rng);
}

#[test]
fn plonkish_rows_dominate_products() {
    for kind in HashKind::ALL {
        let spec = PermutationSpec::builtin(kind);
        for g in [
            build_hash2_gadget(&spec).unwrap(),
            build_merkle_root_gadget(&spec, 2).unwrap(),
            build_withdraw_gadget(&spec, 1, 2).unwrap(),
        ] {
            let products = g.circuit().nonlinear_muls();
            assert!(g.constraint_count(SystemKind::Plonkish) >= products, "{kind}");
            assert!(g.constraint_count(SystemKind::Plonkish) >= g.constraint_count(SystemKind::R1cs) - 1);
        }
    }
}

#[test]
fn poseidon2_is_cheapest_bare_hash() {
    let counts: BTreeMap<HashKind, usize> = HashKind::ALL
        .into_iter()
        .map(|k| {
            let g = build_hash2_gadget(&PermutationSpec::builtin(k)).unwrap();
            (k, g.constraint_count(SystemKind::R1cs))
        })
        .collect();
    assert!(counts[&HashKind::Poseidon2] < counts[&HashKind::Mimc]);
    assert_eq!(counts.values().min(), Some(&counts[&HashKind::Poseidon2]));
}

#[test]
fn perturbing_any_column_breaks_a_gadget() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for kind in HashKind::ALL {
        let hasher = Hasher::builtin(kind);
        let g = build_merkle_root_gadget(hasher.spec(), 1).unwrap();
        let inputs = BTreeMap::from([(leaf_signal(0), F::random(&mut rng)), (leaf_signal(1), F::random(&mut rng))]);
        let w = g.eval(&inputs).unwrap();
        let sys = g.circuit().lower_to_r1cs();
        let z = sys.assign(&w);
        assert!(sys.is_satisfied(&z).unwrap());
        for j in 1..z.len() {
            let mut bad = z.clone();
            bad[j] += F::ONE;
            assert!(!sys.is_satisfied(&bad).unwrap(), "{kind} column {j}");
        }
        let plonk = g.circuit().lower_to_plonkish();
        let cells = plonk.assign(&w);
        for cell in plonk.wired_cells() {
            let mut bad = cells.clone();
            bad.set(cell, bad.get(cell) + F::ONE);
            assert!(!plonk.is_satisfied(&bad).unwrap(), "{kind} cell {cell:?}");
        }
    }
}

#[test]
fn reports_serialize() {
    let g = build_withdraw_gadget(&PermutationSpec::builtin(HashKind::Poseidon2), 2, 3).unwrap();
    let report = g.constraint_report(SystemKind::Plonkish);
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["hash"], "poseidon2");
    assert_eq!(json["system"], "plonkish");
    assert_eq!(json["gadget"], "withdraw");
    assert_eq!(json["d_slot"], 2);
    assert_eq!(json["d_era"], 3);
    assert_eq!(json["constraints"], report.constraints);
    let exported = serde_json::to_string(&g.circuit().to_file()).unwrap();
    let back = zklab::circuit::Circuit::from_file(serde_json::from_str(&exported).unwrap()).unwrap();
    assert_eq!(&back, g.circuit());
}
