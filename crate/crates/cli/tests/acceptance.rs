//! Acceptance suite. Every criterion runs in one sequential test so timing
//! figures are not disturbed by sibling tests; each prints a PASS/FAIL line.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zklab::circuit::{check_satisfied, Cell, Circuit, ConstraintSystem, Gate, GateId};
use zklab::costmodel::{ConstraintModel, GasSchedule, QuoteFile, Rational};
use zklab::hash_circuits::{build_hash2_gadget, build_merkle_root_gadget, SystemKind};
use zklab::merkle::{verify, verify_composed, IncrementalMerkleTree, MerkleTree};
use zklab::mixer::{oas, privacy, run_scenario, LogEntry, MixerConfig, Scenario};
use zklab::permutations::{permute, HashKind, Hasher, PermutationSpec};
use zklab::FieldElement as F;
use zklab_cli::bench::bench_cell;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fe(v: u64) -> F {
    F::from_u64(v)
}

fn rand_fe(rng: &mut ChaCha8Rng) -> F {
    F::random(rng)
}

/// 1. Small two-multiplication example: y = (x1 + x2) * (x3 * x4).
fn small_circuit() -> Outcome {
    let gates = vec![
        Gate::Input { name: "x1".into() },
        Gate::Input { name: "x2".into() },
        Gate::Input { name: "x3".into() },
        Gate::Input { name: "x4".into() },
        Gate::Mul(GateId(2), GateId(3)),
        Gate::Add(GateId(0), GateId(1)),
        Gate::Mul(GateId(5), GateId(4)),
    ];
    let c = Circuit::new(gates, vec![GateId(6)]).map_err(|e| e.to_string())?;
    let r1cs = c.lower_to_r1cs();
    let plonk = c.lower_to_plonkish();
    check(r1cs.num_rows() == 2, format!("{} R1CS rows", r1cs.num_rows()))?;
    check(plonk.num_rows() == 3, format!("{} Plonkish rows", plonk.num_rows()))?;
    let (one, z, m1) = (F::ONE, F::ZERO, -F::ONE);
    // mul, add, mul
    let pattern = [[z, z, one, z, m1], [one, one, z, z, m1], [z, z, one, z, m1]];
    for (row, q) in plonk.rows.iter().zip(pattern) {
        check([row.q_l, row.q_r, row.q_m, row.q_c, row.q_o] == q, "selector pattern")?;
    }
    let w = c.eval_ordered(&[fe(1), fe(2), fe(3), fe(4)]).map_err(|e| e.to_string())?;
    check(w.outputs(&c) == vec![fe(36)], "y != 36")?;
    check(check_satisfied(&r1cs, &w).unwrap() && check_satisfied(&plonk, &w).unwrap(), "witness unsatisfied")?;
    Ok("2 R1CS rows, 3 Plonkish rows (mul/add/mul selectors), y = 36 satisfies both".into())
}

/// 2. Built gadget counts.
fn constraint_parity() -> Outcome {
    let mimc = PermutationSpec::builtin(HashKind::Mimc);
    let p2 = PermutationSpec::builtin(HashKind::Poseidon2);
    let h_mimc = build_hash2_gadget(&mimc).unwrap().constraint_count(SystemKind::R1cs);
    let h_p2 = build_hash2_gadget(&p2).unwrap().constraint_count(SystemKind::R1cs);
    let dep = build_merkle_root_gadget(&mimc, 5).unwrap().constraint_count(SystemKind::R1cs);
    check((h_mimc, h_p2, dep) == (1_320, 240, 40_920), format!("got {h_mimc}, {h_p2}, {dep}"))?;
    Ok(format!("MiMC hash2 {h_mimc}, Poseidon2 hash2 {h_p2}, Cir_dep(MiMC, 5) {dep}"))
}

/// 3. Closed-form counts.
fn formula_parity() -> Outcome {
    let m = ConstraintModel::mimc();
    let got = (m.n_wit(5, 20), m.n_tc(25), m.n_dep(5));
    check(got == (34_890, 34_815, 40_920), format!("got {got:?}"))?;
    Ok(format!("n_wit {} n_tc {} n_dep {}", got.0, got.1, got.2))
}

fn dist(a: Rational, b: Rational) -> Rational {
    if a > b { a - b } else { b - a }
}

/// 4. Measured gas economics.
fn economics() -> Outcome {
    let s = GasSchedule::measured();
    let amortized = s.amortized_gas();
    check(
        dist(amortized, Rational::from_integer(331_331)) <= Rational::from_integer(1),
        format!("amortized {amortized}"),
    )?;
    let evm = s.savings_ratio();
    check(dist(evm, Rational::new(725, 1000)) <= Rational::new(5, 1000), format!("EVM savings {evm}"))?;
    let quotes = QuoteFile::measured();
    let hedera = quotes.quotes.iter().find(|q| q.chain == "hedera").unwrap().row(&s).savings();
    check(dist(hedera, Rational::new(26, 100)) <= Rational::new(1, 100), format!("Hedera savings {hedera}"))?;
    let pct = |r: Rational| zklab::costmodel::percent(r);
    Ok(format!("amortized {:.2} gas, EVM savings {}, Hedera savings {}", zklab::costmodel::to_f64(amortized), pct(evm), pct(hedera)))
}

/// 5. Batch size 4, two completed slots.
fn oas_parity() -> Outcome {
    check(oas(2, 2) == 8 && privacy(8) == Some(Rational::new(1, 8)), "closed form")?;
    let mut script = String::new();
    for i in 0..9 {
        script += &format!("deposit u{i} 100\n");
        if i == 3 || i == 8 {
            script += "step\n";
        }
    }
    script += "withdraw 0 w\n";
    let cfg = MixerConfig { d_slot: 2, d_era: 4, ..MixerConfig::default() };
    let out = run_scenario(cfg, &Scenario::parse(&script).unwrap()).map_err(|e| e.to_string())?;
    let Some(LogEntry::Withdraw { oas, privacy, .. }) = out.log.last() else { return Err("no withdraw".into()) };
    check(*oas == 8 && privacy == "1/8", format!("simulated oas {oas}, privacy {privacy}"))?;
    Ok("OAS 8, privacy 1/8 (closed form and simulator)".into())
}

/// 6. Incremental vs rebuilt roots; exhaustive membership at depth 2.
fn merkle_oracle() -> Outcome {
    let h = Arc::new(Hasher::builtin(HashKind::Poseidon2));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    for _ in 0..1_000 {
        let d = rng.gen_range(1..=10u32);
        let n = rng.gen_range(0..=(1usize << d).min(64));
        let leaves: Vec<F> = (0..n).map(|_| rand_fe(&mut rng)).collect();
        let mut inc = IncrementalMerkleTree::new(h.clone(), d).unwrap();
        // mid-sequence rebuilds only where they are cheap
        let probe = if d <= 6 { rng.gen_range(0..=n) } else { usize::MAX };
        for (i, l) in leaves.iter().enumerate() {
            if i == probe {
                check(inc.root() == MerkleTree::build(&h, &leaves[..i], d).unwrap().root(), "prefix root")?;
                checked += 1;
            }
            inc.insert(*l).unwrap();
        }
        check(inc.root() == MerkleTree::build(&h, &leaves, d).unwrap().root(), format!("root mismatch at d={d} n={n}"))?;
        checked += 1;
    }
    // depth 2, leaves over {0,1,2}: every leaf set, every claimed value, every path
    let mut cases = 0;
    for code in 0..81u32 {
        let leaves: Vec<F> = (0..4).map(|i| fe(((code / 3u32.pow(i)) % 3) as u64)).collect();
        let tree = MerkleTree::build(&h, &leaves, 2).unwrap();
        for j in 0..4 {
            let path = tree.prove(j).unwrap();
            for v in 0..3 {
                let brute = leaves[j as usize] == fe(v);
                check(verify(&h, fe(v), tree.root(), &path) == brute, "membership mismatch")?;
                cases += 1;
            }
        }
    }
    Ok(format!("{checked} root comparisons, {cases} exhaustive membership cases, 0 mismatches"))
}

/// 7. Composed slot/era membership vs the flattened tree.
fn composed_membership() -> Outcome {
    let h = Hasher::builtin(HashKind::Poseidon2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut positives = 0;
    for trial in 0..1_000 {
        let ds = rng.gen_range(2..=3u32);
        let de = rng.gen_range(2..=3u32);
        let flat: Vec<F> = (0..1usize << (ds + de)).map(|_| rand_fe(&mut rng)).collect();
        let slots: Vec<MerkleTree> = flat.chunks(1 << ds).map(|c| MerkleTree::build(&h, c, ds).unwrap()).collect();
        let roots: Vec<F> = slots.iter().map(|t| t.root()).collect();
        let era = MerkleTree::build(&h, &roots, de).unwrap();
        let flattened = MerkleTree::build(&h, &flat, ds + de).unwrap();
        let idx = rng.gen_range(0..flat.len());
        let (s, j) = (idx >> ds, (idx & ((1 << ds) - 1)) as u64);
        let leaf = if rng.gen_bool(0.5) { flat[idx] } else { rand_fe(&mut rng) };
        let composed = verify_composed(&h, leaf, &slots[s].prove(j).unwrap(), roots[s], &era.prove(s as u64).unwrap(), era.root());
        let oracle = verify(&h, leaf, flattened.root(), &flattened.prove(idx as u64).unwrap());
        check(composed == oracle, format!("trial {trial}: composed {composed}, flattened {oracle}"))?;
        check(era.root() == flattened.root(), "roots differ")?;
        positives += composed as usize;
    }
    Ok(format!("1000 trials ({positives} members), 0 mismatches"))
}

/// 8. Gadget outputs vs native; single-wire perturbations.
fn gadget_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut probes = 0;
    for kind in HashKind::ALL {
        let spec = PermutationSpec::builtin(kind);
        let hasher = Hasher::new(spec.clone());
        let g = build_hash2_gadget(&spec).unwrap();
        let r1cs = g.circuit().lower_to_r1cs();
        let plonk = g.circuit().lower_to_plonkish();
        let wired: Vec<Cell> = plonk.wired_cells().collect();
        for i in 0..100 {
            let (l, r) = (rand_fe(&mut rng), rand_fe(&mut rng));
            let inputs = BTreeMap::from([("left".to_string(), l), ("right".to_string(), r)]);
            let w = g.eval(&inputs).unwrap();
            check(g.output_value(&w, "digest") == Some(hasher.hash2(l, r)), format!("{kind} output mismatch"))?;

            let mut z = r1cs.assign(&w);
            check(r1cs.is_satisfied(&z).unwrap(), format!("{kind} honest R1CS"))?;
            let col = rng.gen_range(1..z.len());
            z[col] += F::from_u64(rng.gen_range(1..u64::MAX));
            check(!r1cs.is_satisfied(&z).unwrap(), format!("{kind} probe {i}: R1CS column {col} perturbation undetected"))?;

            let mut cells = plonk.assign(&w);
            let cell = wired[rng.gen_range(0..wired.len())];
            cells.set(cell, cells.get(cell) + F::ONE);
            check(!plonk.is_satisfied(&cells).unwrap(), format!("{kind} probe {i}: Plonkish cell perturbation undetected"))?;
            probes += 2;
        }
    }
    Ok(format!("5 hashes x 100 inputs match native; {probes}/{probes} perturbations detected"))
}

/// 9. Adversary scenarios on the bundled scripts.
fn security_suite() -> Outcome {
    let cfg = MixerConfig::from_json(include_str!("../../core/data/mixer.json")).map_err(|e| e.to_string())?;
    let run = |s: &str| run_scenario(cfg.clone(), &Scenario::parse(s).unwrap()).unwrap();

    let replay = run(include_str!("../../core/data/scenarios/replay.txt")).metrics;
    check(replay.rejections.get("double_spend") == Some(&1) && replay.withdrawals == 1, "replay not rejected")?;

    let tamper = run(include_str!("../../core/data/scenarios/tamper.txt")).metrics;
    check(tamper.rejections.get("soundness") == Some(&1), "tampered recipient not rejected")?;
    check(tamper.withdrawals == 1, "honest retry after tampering failed")?;

    let banned_text = include_str!("../../core/data/scenarios/banned.txt");
    let banned = run(banned_text);
    let script = Scenario::parse(banned_text).unwrap();
    let mut deposits = Vec::new();
    for (_, ins) in &script.instructions {
        if let zklab::mixer::Instruction::Deposit { address, .. } = ins {
            deposits.push(address.as_str().to_string());
        }
    }
    let mut in_slots = 0;
    for e in &banned.log {
        if let LogEntry::Step { batch, .. } = e {
            in_slots += batch.iter().filter(|&&i| deposits[i] == "mallory").count();
        }
    }
    check(in_slots == 0, format!("{in_slots} banned commitments in slots"))?;
    check(banned.metrics.rejections.get("not_included") == Some(&1), "banned note withdrew")?;

    let happy = run(include_str!("../../core/data/scenarios/happy_path.txt")).metrics;
    let m = &happy;
    check(m.conserved && m.pool == 0 && m.paid + m.fees == m.deposits * cfg.denomination, "funds not conserved")?;
    check(m.violations.is_empty(), "invariant violations")?;
    Ok(format!(
        "replay -> double_spend, tamper -> soundness, {} banned deposits skipped and 0 in slots, happy path paid {} of {}",
        banned.metrics.skipped_deposits,
        m.paid + m.fees,
        m.deposits * cfg.denomination
    ))
}

/// 10. Collisions, determinism and constant sensitivity.
fn permutation_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for kind in HashKind::ALL {
        let spec = PermutationSpec::builtin(kind);
        let h = Hasher::new(spec.clone());
        let mut seen = HashSet::with_capacity(100_000);
        for _ in 0..100_000 {
            let out = h.hash2(rand_fe(&mut rng), rand_fe(&mut rng));
            check(seen.insert(out), format!("{kind} collision"))?;
        }
        let state: Vec<F> = (0..spec.width()).map(|_| rand_fe(&mut rng)).collect();
        let a = permute(&spec, &state).unwrap();
        check(a == permute(&spec, &state).unwrap(), format!("{kind} nondeterministic"))?;
        check(a == permute(&PermutationSpec::builtin(kind), &state).unwrap(), format!("{kind} params unstable"))?;
        let rounds = spec.round_constants().len();
        for _ in 0..10 {
            let round = rng.gen_range(0..rounds);
            let lanes = spec.round_constants()[round].len();
            if lanes == 0 {
                continue;
            }
            let lane = rng.gen_range(0..lanes);
            let old = spec.round_constants()[round][lane];
            let tweaked = spec.with_constant(round, lane, old + F::ONE).unwrap();
            check(permute(&tweaked, &state).unwrap() != a, format!("{kind} insensitive to constant ({round},{lane})"))?;
        }
    }
    Ok("5 hashes x 1e5 random inputs, 0 collisions; deterministic; every tweaked constant changes the output".into())
}

fn r_squared(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

/// 11. Witness time grows linearly with constraints; exact hash-call counts.
fn scaling() -> Outcome {
    let mut summary = Vec::new();
    for kind in [HashKind::Poseidon2, HashKind::Mimc] {
        let spec = PermutationSpec::builtin(kind);
        let mut points = Vec::new();
        for d in 0..=7 {
            for r in bench_cell(&spec, d, 5, 11).map_err(|e| e.to_string())? {
                let want = if d == 0 { 1 } else { (1u64 << d) - 1 };
                check(r.hash_calls == want, format!("{kind} d={d}: {} hash calls", r.hash_calls))?;
                if r.system == "r1cs" {
                    points.push((r.constraints.unwrap() as f64, r.wall_ns as f64));
                }
            }
        }
        let r2 = r_squared(&points);
        check(r2 >= 0.9, format!("{kind} R^2 = {r2:.4}"))?;
        summary.push(format!("{kind} R^2 {r2:.4}"));
    }
    Ok(format!("{}; hash calls 1, 1, 3, ..., 127", summary.join(", ")))
}

#[test]
fn acceptance_criteria() {
    type Criterion = (u32, &'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 11] = [
        (1, "small-circuit lowering", small_circuit, Some(Duration::from_secs(1))),
        (2, "constraint parity", constraint_parity, Some(Duration::from_secs(10))),
        (3, "formula parity", formula_parity, None),
        (4, "economics parity", economics, None),
        (5, "OAS parity", oas_parity, None),
        (6, "Merkle oracle equivalence", merkle_oracle, Some(Duration::from_secs(30))),
        (7, "composed vs flattened membership", composed_membership, None),
        (8, "gadget oracle equivalence", gadget_oracle, Some(Duration::from_secs(120))),
        (9, "protocol security suite", security_suite, None),
        (10, "permutation properties", permutation_properties, Some(Duration::from_secs(120))),
        (11, "witness-time scaling", scaling, None),
    ];
    let mut failed = Vec::new();
    for (n, name, f, limit) in criteria {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let res = match (res, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        match &res {
            Ok(detail) => println!("criterion {n:>2} PASS {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                println!("criterion {n:>2} FAIL {name}: {why} [{elapsed:.2?}]");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
