//! Median-of-n timing of native Merkle builds and circuit witness
//! generation per (hash, depth).
//!
//! These are this crate's own workloads. They are not SNARK setup or
//! proving times.

use std::collections::BTreeMap;
use std::hint::black_box;
use std::time::Instant;

use anyhow::{ensure, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use zklab::circuit::{circuit_power, ConstraintSystem};
use zklab::hash_circuits::{build_hash2_gadget, build_merkle_root_gadget, Gadget, SystemKind};
use zklab::merkle::MerkleTree;
use zklab::permutations::{Hasher, PermutationSpec};
use zklab::FieldElement;

use crate::alloc::measure_peak;

pub const MAX_BENCH_DEPTH: u32 = 12;
pub const MIN_REPETITIONS: usize = 3;

/// One CSV/JSON row. Constraint fields are empty for native rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub hash: String,
    pub depth: u32,
    pub system: String,
    pub workload: String,
    pub constraints: Option<u64>,
    pub power: Option<u32>,
    pub wall_ns: u64,
    pub hash_calls: u64,
    pub peak_alloc_bytes: Option<u64>,
    pub repetitions: usize,
}

pub const BENCH_HEADER: &str =
    "hash,depth,system,workload,constraints,power,wall_ns,hash_calls,peak_alloc_bytes,repetitions";

/// Hash invocations for a depth: one for depth 0, `2^d - 1` otherwise.
pub fn hash_calls(depth: u32) -> u64 {
    ((1u64 << depth) - 1).max(1)
}

/// Warm-up once, then the median wall time of `reps` runs and the largest
/// peak allocation seen.
fn time<T>(reps: usize, mut f: impl FnMut() -> T) -> (u64, u64) {
    black_box(f());
    let mut times = Vec::with_capacity(reps);
    let mut peak = 0;
    for _ in 0..reps {
        let start = Instant::now();
        let (out, p) = measure_peak(&mut f);
        let ns = start.elapsed().as_nanos() as u64;
        black_box(out);
        times.push(ns.max(1));
        peak = peak.max(p);
    }
    times.sort_unstable();
    (times[times.len() / 2], peak)
}

/// The circuit for a depth: a bare hash2 at depth 0, the deposit (slot
/// root) circuit otherwise.
pub fn depth_gadget(spec: &PermutationSpec, depth: u32) -> Result<Gadget> {
    Ok(if depth == 0 { build_hash2_gadget(spec)? } else { build_merkle_root_gadget(spec, depth)? })
}

fn random_inputs(g: &Gadget, rng: &mut ChaCha20Rng) -> BTreeMap<String, FieldElement> {
    g.input_names().map(|n| (n.to_string(), FieldElement::random(rng))).collect()
}

/// Records for one (hash, depth): native, then one per constraint system.
pub fn bench_cell(spec: &PermutationSpec, depth: u32, reps: usize, seed: u64) -> Result<Vec<BenchRecord>> {
    ensure!(depth <= MAX_BENCH_DEPTH, "depth {depth} exceeds {MAX_BENCH_DEPTH}");
    ensure!(reps >= MIN_REPETITIONS, "repetitions must be at least {MIN_REPETITIONS}, got {reps}");
    let name = spec.kind().name().to_string();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ ((depth as u64) << 32));
    let calls = hash_calls(depth);
    let mut out = Vec::new();

    let hasher = Hasher::new(spec.clone());
    let leaves: Vec<FieldElement> = (0..(1u64 << depth).max(2)).map(|_| FieldElement::random(&mut rng)).collect();
    let before = hasher.calls();
    let (ns, peak) = if depth == 0 {
        time(reps, || hasher.hash2(leaves[0], leaves[1]))
    } else {
        time(reps, || MerkleTree::build(&hasher, &leaves, depth).expect("depth checked").root())
    };
    let per_run = (hasher.calls() - before) / (reps as u64 + 1);
    ensure!(per_run == calls, "native run made {per_run} hash calls, expected {calls}");
    out.push(BenchRecord {
        hash: name.clone(),
        depth,
        system: "native".into(),
        workload: if depth == 0 { "native_hash2".into() } else { "native_merkle_build".into() },
        constraints: None,
        power: None,
        wall_ns: ns,
        hash_calls: calls,
        peak_alloc_bytes: Some(peak),
        repetitions: reps,
    });

    let gadget = depth_gadget(spec, depth)?;
    let inputs = random_inputs(&gadget, &mut rng);
    for system in SystemKind::ALL {
        let (constraints, (ns, peak)) = match system {
            SystemKind::R1cs => {
                let sys = gadget.circuit().lower_to_r1cs();
                let t = time(reps, || sys.assign(&gadget.eval(&inputs).expect("inputs complete")));
                (sys.num_constraints(), t)
            }
            SystemKind::Plonkish => {
                let sys = gadget.circuit().lower_to_plonkish();
                let t = time(reps, || sys.assign(&gadget.eval(&inputs).expect("inputs complete")));
                (sys.num_constraints(), t)
            }
        };
        out.push(BenchRecord {
            hash: name.clone(),
            depth,
            system: system.name().into(),
            workload: "witness_eval".into(),
            constraints: Some(constraints as u64),
            power: Some(circuit_power(constraints as u64)?),
            wall_ns: ns,
            hash_calls: calls,
            peak_alloc_bytes: Some(peak),
            repetitions: reps,
        });
    }
    Ok(out)
}
