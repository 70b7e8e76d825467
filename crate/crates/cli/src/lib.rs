//! `zklab` command line: hashing, Merkle trees, constraint reports,
//! benchmarks, mixer scenarios and cost reports.
//!
//! Exit codes: 0 success, 1 runtime or invariant failure, 2 usage error.

pub mod alloc;
pub mod bench;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use zklab::circuit::circuit_power;
use zklab::costmodel::{
    to_f64, tradeoff_surface, CommitScaling, GasSchedule, QuoteFile, Rational,
};
use zklab::hash_circuits::{build_hash2_gadget, build_merkle_root_gadget, build_withdraw_gadget, Gadget, SystemKind};
use zklab::merkle::{format_leaves, parse_leaves, verify, MerklePath, MerkleTree};
use zklab::mixer::{run_scenario, MixerConfig, Scenario};
use zklab::permutations::{HashKind, Hasher, PermutationSpec};
use zklab::FieldElement;

/// A problem with how the tool was invoked or with its input files.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "zklab", version, about = "ZK-friendly hash and arithmetization laboratory")]
pub struct Cli {
    /// Directory of permutation parameter files (`<hash>.json`).
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Seed for random leaves and inputs; overrides the mixer config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (a directory for `mixer run`). Defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Tabular output format (default csv).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Csv)
    }
}

fn parse_hash(s: &str) -> Result<HashKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = HashKind::ALL.iter().map(|k| k.name()).collect();
        format!("unsupported hash `{s}`; supported: {}", names.join(", "))
    })
}

fn parse_fe(s: &str) -> Result<FieldElement, String> {
    FieldElement::from_hex(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sponge hash of field elements.
    Hash {
        #[arg(long = "fn", value_parser = parse_hash)]
        hash: HashKind,
        /// Comma-separated hex field elements.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_fe)]
        inputs: Vec<FieldElement>,
    },
    Merkle {
        #[command(subcommand)]
        cmd: MerkleCmd,
    },
    Arith {
        #[command(subcommand)]
        cmd: ArithCmd,
    },
    /// Time native tree builds and witness generation per (hash, depth).
    Bench {
        #[arg(long = "fn", value_delimiter = ',', value_parser = parse_hash, default_value = "poseidon2")]
        hashes: Vec<HashKind>,
        /// Depth list or range, e.g. `0:7` or `3,5`.
        #[arg(long, default_value = "0:7")]
        depths: String,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    Mixer {
        #[command(subcommand)]
        cmd: MixerCmd,
    },
    Cost {
        #[command(subcommand)]
        cmd: CostCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum MerkleCmd {
    /// Root of a full tree over a leaf file or random leaves.
    Build {
        #[arg(long = "fn", value_parser = parse_hash, default_value = "poseidon2")]
        hash: HashKind,
        #[arg(long)]
        depth: u32,
        /// One hex leaf per line; missing leaves are zero.
        #[arg(long)]
        leaves: Option<PathBuf>,
        /// Write the leaves used (handy with random leaves).
        #[arg(long)]
        save_leaves: Option<PathBuf>,
    },
    /// Authentication path for one leaf, as JSON.
    Prove {
        #[arg(long = "fn", value_parser = parse_hash, default_value = "poseidon2")]
        hash: HashKind,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        leaves: PathBuf,
        #[arg(long)]
        index: u64,
    },
    /// Checks a proof file written by `merkle prove`. Exit 1 if invalid.
    Verify {
        #[arg(long = "fn", value_parser = parse_hash, default_value = "poseidon2")]
        hash: HashKind,
        #[arg(long)]
        proof: PathBuf,
        /// Overrides the leaf in the proof file.
        #[arg(long, value_parser = parse_fe)]
        leaf: Option<FieldElement>,
        /// Overrides the root in the proof file.
        #[arg(long, value_parser = parse_fe)]
        root: Option<FieldElement>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GadgetArg {
    Hash2,
    Merkle,
    Withdraw,
}

#[derive(Debug, Subcommand)]
pub enum ArithCmd {
    /// Constraint counts and circuit power per hash and system.
    Report {
        #[arg(long = "fn", value_delimiter = ',', value_parser = parse_hash)]
        hashes: Vec<HashKind>,
        #[arg(long, value_enum, default_value_t = GadgetArg::Hash2)]
        gadget: GadgetArg,
        #[arg(long, default_value_t = 5)]
        d_slot: u32,
        #[arg(long, default_value_t = 20)]
        d_era: u32,
    },
}

#[derive(Debug, Subcommand)]
pub enum MixerCmd {
    /// Replays a scenario script; exit 1 if an invariant broke.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Mixer config JSON; built-in defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostTable {
    Fees,
    Tradeoff,
    All,
}

#[derive(Debug, Subcommand)]
pub enum CostCmd {
    /// Fee comparison and the normalized (d_slot, d_era) trade-off table.
    Report {
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        quotes: Option<PathBuf>,
        /// Overrides the schedule's batch size.
        #[arg(long)]
        batch_size: Option<u64>,
        #[arg(long, default_value = "1:8")]
        d_slots: String,
        #[arg(long, default_value = "10:30:5")]
        d_eras: String,
        #[arg(long, value_enum, default_value_t = CostTable::All)]
        table: CostTable,
    },
}

/// `a:b` or `a:b:step` (inclusive), or a comma list.
pub fn parse_range(s: &str) -> Result<Vec<u32>> {
    let bad = || usage(format!("bad range `{s}`; use a:b, a:b:step or a,b,c"));
    let nums = |parts: &[&str]| parts.iter().map(|p| p.trim().parse::<u32>().map_err(|_| bad())).collect::<Result<Vec<_>>>();
    let parts: Vec<&str> = s.split(':').collect();
    let out = match parts.len() {
        1 => nums(&s.split(',').collect::<Vec<_>>())?,
        2 | 3 => {
            let v = nums(&parts)?;
            let step = v.get(2).copied().unwrap_or(1);
            if step == 0 || v[0] > v[1] {
                return Err(bad());
            }
            (v[0]..=v[1]).step_by(step as usize).collect()
        }
        _ => return Err(bad()),
    };
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Built-in parameters, or `<dir>/<hash>.json` with `--params`.
pub fn load_spec(params: Option<&Path>, kind: HashKind) -> Result<PermutationSpec> {
    let Some(dir) = params else { return Ok(PermutationSpec::builtin(kind)) };
    let path = dir.join(format!("{}.json", kind.name()));
    let spec = PermutationSpec::from_json(&read(&path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if spec.kind() != kind {
        return Err(usage(format!("{} holds {} parameters, not {}", path.display(), spec.kind(), kind)));
    }
    Ok(spec)
}

struct Sink<'a> {
    out: Option<&'a Path>,
    stdout: &'a mut dyn Write,
}

impl Sink<'_> {
    fn write(&mut self, text: &str) -> Result<()> {
        match self.out {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => self.stdout.write_all(text.as_bytes()).context("writing stdout"),
        }
    }
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

fn render<T: Serialize>(format: Format, rows: &[T]) -> Result<String> {
    match format {
        Format::Csv => csv_string(rows),
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
    }
}

#[derive(Debug, Serialize)]
struct HashRecord {
    hash: String,
    inputs: usize,
    digest: String,
}

#[derive(Debug, Serialize)]
struct RootRecord {
    hash: String,
    depth: u32,
    leaves: usize,
    root: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProofFile {
    pub hash: HashKind,
    pub leaf: FieldElement,
    pub root: FieldElement,
    pub path: MerklePath,
}

#[derive(Debug, Serialize)]
pub struct ArithRecord {
    pub hash: String,
    pub gadget: String,
    pub d_slot: Option<u32>,
    pub d_era: Option<u32>,
    pub system: String,
    pub constraints: usize,
    pub power: u32,
    pub folded_sboxes: usize,
}

pub const ARITH_HEADER: &str = "hash,gadget,d_slot,d_era,system,constraints,power,folded_sboxes";

#[derive(Debug, Serialize)]
pub struct FeeRecord {
    pub chain: String,
    pub unit: String,
    pub baseline_deposit: f64,
    pub baseline_withdraw: f64,
    pub baseline_total: f64,
    pub deposit: f64,
    pub commit_per_tx: f64,
    pub withdraw: f64,
    pub total: f64,
    pub savings: f64,
    pub baseline_total_usd: Option<f64>,
    pub total_usd: Option<f64>,
}

pub const FEE_HEADER: &str = "chain,unit,baseline_deposit,baseline_withdraw,baseline_total,deposit,commit_per_tx,withdraw,total,savings,baseline_total_usd,total_usd";

#[derive(Debug, Serialize)]
pub struct TradeoffRecord {
    pub d_slot: u32,
    pub d_era: u32,
    pub amortized_gas: f64,
    pub savings: f64,
    pub normalized: f64,
}

pub const TRADEOFF_HEADER: &str = "d_slot,d_era,amortized_gas,savings,normalized";

fn round6(r: Rational) -> f64 {
    (to_f64(r) * 1e6).round() / 1e6
}

fn gadget_for(spec: &PermutationSpec, g: GadgetArg, d_slot: u32, d_era: u32) -> Result<Gadget> {
    Ok(match g {
        GadgetArg::Hash2 => build_hash2_gadget(spec)?,
        GadgetArg::Merkle => build_merkle_root_gadget(spec, d_slot).map_err(|e| usage(e.to_string()))?,
        GadgetArg::Withdraw => build_withdraw_gadget(spec, d_slot, d_era).map_err(|e| usage(e.to_string()))?,
    })
}

pub fn arith_records(params: Option<&Path>, hashes: &[HashKind], g: GadgetArg, d_slot: u32, d_era: u32) -> Result<Vec<ArithRecord>> {
    let hashes = if hashes.is_empty() { HashKind::ALL.to_vec() } else { hashes.to_vec() };
    let mut rows = Vec::new();
    for kind in hashes {
        let gadget = gadget_for(&load_spec(params, kind)?, g, d_slot, d_era)?;
        for system in SystemKind::ALL {
            let constraints = gadget.constraint_count(system);
            rows.push(ArithRecord {
                hash: kind.name().into(),
                gadget: format!("{g:?}").to_lowercase(),
                d_slot: (g != GadgetArg::Hash2).then_some(d_slot),
                d_era: (g == GadgetArg::Withdraw).then_some(d_era),
                system: system.name().into(),
                constraints,
                power: circuit_power(constraints as u64)?,
                folded_sboxes: gadget.folded_sboxes(),
            });
        }
    }
    Ok(rows)
}

pub fn fee_records(schedule: &GasSchedule, quotes: &QuoteFile) -> Vec<FeeRecord> {
    let g = |v: u64| v as f64;
    let per_tx = Rational::new(schedule.commit as i128, schedule.batch_size as i128);
    let mut rows = vec![FeeRecord {
        chain: "gas".into(),
        unit: "gas".into(),
        baseline_deposit: g(schedule.baseline_deposit),
        baseline_withdraw: g(schedule.baseline_withdraw),
        baseline_total: g(schedule.baseline_total()),
        deposit: g(schedule.deposit),
        commit_per_tx: round6(per_tx),
        withdraw: g(schedule.withdraw),
        total: round6(schedule.amortized_gas()),
        savings: round6(schedule.savings_ratio()),
        baseline_total_usd: None,
        total_usd: None,
    }];
    for q in &quotes.quotes {
        let row = q.row(schedule);
        rows.push(FeeRecord {
            chain: row.chain.clone(),
            unit: row.native.clone(),
            baseline_deposit: round6(row.ops.baseline_deposit),
            baseline_withdraw: round6(row.ops.baseline_withdraw),
            baseline_total: round6(row.baseline_total()),
            deposit: round6(row.ops.deposit),
            commit_per_tx: round6(row.ops.commit),
            withdraw: round6(row.ops.withdraw),
            total: round6(row.total()),
            savings: round6(row.savings()),
            baseline_total_usd: Some(round6(row.usd(row.baseline_total()))),
            total_usd: Some(round6(row.usd(row.total()))),
        });
    }
    rows
}

fn mixer_run(cli: &Cli, scenario: &Path, config: Option<&Path>, stdout: &mut dyn Write) -> Result<i32> {
    if cli.format == Some(Format::Csv) {
        return Err(usage("mixer run writes JSON; drop --format csv"));
    }
    let script = Scenario::parse(&read(scenario)?).map_err(|e| usage(format!("{}: {e}", scenario.display())))?;
    let mut cfg = match config {
        Some(p) => MixerConfig::from_json(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => MixerConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = run_scenario(cfg, &script)?;
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("log.json"), serde_json::to_string_pretty(&out.log)? + "\n")?;
            fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&out.metrics)? + "\n")?;
        }
        None => stdout.write_all((out.to_json() + "\n").as_bytes())?,
    }
    if out.metrics.violations.is_empty() {
        Ok(0)
    } else {
        for v in &out.metrics.violations {
            eprintln!("invariant violated: {v}");
        }
        Ok(1)
    }
}

/// Runs a parsed command; returns the exit code for non-error outcomes.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<i32> {
    let params = cli.params.as_deref();
    let seed = cli.seed.unwrap_or(0);
    let mut sink = Sink { out: cli.out.as_deref(), stdout };
    match &cli.command {
        Command::Hash { hash, inputs } => {
            let hasher = Hasher::new(load_spec(params, *hash)?);
            let digest = hasher.hash(inputs)?;
            let text = match cli.format() {
                Format::Csv => digest.to_hex() + "\n",
                Format::Json => {
                    let rec = HashRecord { hash: hash.name().into(), inputs: inputs.len(), digest: digest.to_hex() };
                    serde_json::to_string_pretty(&rec)? + "\n"
                }
            };
            sink.write(&text)?;
        }
        Command::Merkle { cmd } => return merkle(cli, cmd, &mut sink, seed),
        Command::Arith { cmd: ArithCmd::Report { hashes, gadget, d_slot, d_era } } => {
            let rows = arith_records(params, hashes, *gadget, *d_slot, *d_era)?;
            sink.write(&render(cli.format(), &rows)?)?;
        }
        Command::Bench { hashes, depths, reps } => {
            let depths = parse_range(depths)?;
            if let Some(d) = depths.iter().find(|&&d| d > bench::MAX_BENCH_DEPTH) {
                return Err(usage(format!("depth {d} exceeds {}", bench::MAX_BENCH_DEPTH)));
            }
            if *reps < bench::MIN_REPETITIONS {
                return Err(usage(format!("--reps must be at least {}", bench::MIN_REPETITIONS)));
            }
            let mut rows = Vec::new();
            for kind in hashes {
                let spec = load_spec(params, *kind)?;
                for &d in &depths {
                    rows.extend(bench::bench_cell(&spec, d, *reps, seed)?);
                }
            }
            sink.write(&render(cli.format(), &rows)?)?;
        }
        Command::Mixer { cmd: MixerCmd::Run { scenario, config } } => {
            return mixer_run(cli, scenario, config.as_deref(), sink.stdout);
        }
        Command::Cost { cmd: CostCmd::Report { schedule, quotes, batch_size, d_slots, d_eras, table } } => {
            let mut schedule = match schedule {
                Some(p) => GasSchedule::from_json(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
                None => GasSchedule::measured(),
            };
            if let Some(b) = batch_size {
                schedule = schedule.with_batch_size(*b);
                schedule.validate().map_err(|e| usage(e.to_string()))?;
            }
            let quotes = match quotes {
                Some(p) => QuoteFile::from_json(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
                None => QuoteFile::measured(),
            };
            let fees = fee_records(&schedule, &quotes);
            let cells = tradeoff_surface(&schedule, &CommitScaling::default(), parse_range(d_slots)?, parse_range(d_eras)?)
                .map_err(|e| usage(e.to_string()))?;
            let trade: Vec<TradeoffRecord> = cells
                .iter()
                .map(|c| TradeoffRecord {
                    d_slot: c.d_slot,
                    d_era: c.d_era,
                    amortized_gas: round6(c.amortized_gas),
                    savings: round6(c.savings),
                    normalized: round6(c.normalized),
                })
                .collect();
            let text = match (cli.format(), table) {
                (Format::Csv, CostTable::Fees) => csv_string(&fees)?,
                (Format::Csv, CostTable::Tradeoff) => csv_string(&trade)?,
                (Format::Csv, CostTable::All) => csv_string(&fees)? + "\n" + &csv_string(&trade)?,
                (Format::Json, t) => {
                    let mut v = serde_json::Map::new();
                    if *t != CostTable::Tradeoff {
                        v.insert("fees".into(), serde_json::to_value(&fees)?);
                    }
                    if *t != CostTable::Fees {
                        v.insert("tradeoff".into(), serde_json::to_value(&trade)?);
                    }
                    serde_json::to_string_pretty(&v)? + "\n"
                }
            };
            sink.write(&text)?;
        }
    }
    Ok(0)
}

fn merkle(cli: &Cli, cmd: &MerkleCmd, sink: &mut Sink<'_>, seed: u64) -> Result<i32> {
    let params = cli.params.as_deref();
    let load_leaves = |p: &Path| -> Result<Vec<FieldElement>> {
        parse_leaves(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))
    };
    match cmd {
        MerkleCmd::Build { hash, depth, leaves, save_leaves } => {
            let leaves = match leaves {
                Some(p) => load_leaves(p)?,
                None => {
                    if *depth > 20 {
                        return Err(usage("random leaves are limited to depth 20; pass --leaves"));
                    }
                    let mut rng = ChaCha20Rng::seed_from_u64(seed);
                    (0..1u64 << depth).map(|_| FieldElement::random(&mut rng)).collect()
                }
            };
            let hasher = Hasher::new(load_spec(params, *hash)?);
            let tree = MerkleTree::build(&hasher, &leaves, *depth).map_err(|e| usage(e.to_string()))?;
            if let Some(p) = save_leaves {
                fs::write(p, format_leaves(&leaves)).with_context(|| format!("writing {}", p.display()))?;
            }
            let rec = RootRecord { hash: hash.name().into(), depth: *depth, leaves: leaves.len(), root: tree.root().to_hex() };
            sink.write(&render(cli.format(), &[rec])?)?;
        }
        MerkleCmd::Prove { hash, depth, leaves, index } => {
            let leaves = load_leaves(leaves)?;
            let hasher = Hasher::new(load_spec(params, *hash)?);
            let tree = MerkleTree::build(&hasher, &leaves, *depth).map_err(|e| usage(e.to_string()))?;
            let path = tree.prove(*index).map_err(|e| usage(e.to_string()))?;
            let leaf = leaves.get(*index as usize).copied().unwrap_or(FieldElement::ZERO);
            let file = ProofFile { hash: *hash, leaf, root: tree.root(), path };
            sink.write(&(serde_json::to_string_pretty(&file)? + "\n"))?;
        }
        MerkleCmd::Verify { hash, proof, leaf, root } => {
            let file: ProofFile =
                serde_json::from_str(&read(proof)?).map_err(|e| usage(format!("{}: {e}", proof.display())))?;
            if file.hash != *hash {
                bail!(usage(format!("proof is for {}, not {}", file.hash, hash)));
            }
            let hasher = Hasher::new(load_spec(params, *hash)?);
            let ok = verify(&hasher, leaf.unwrap_or(file.leaf), root.unwrap_or(file.root), &file.path);
            sink.write(if ok { "valid\n" } else { "invalid\n" })?;
            return Ok(if ok { 0 } else { 1 });
        }
    }
    Ok(0)
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match run(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
