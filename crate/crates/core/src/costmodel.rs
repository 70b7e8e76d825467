//! Closed-form constraint counts and gas economics.
//!
//! All ratios are exact rationals; decimal inputs (exchange rates, per-op
//! quotes) are parsed digit by digit so `0.14` means 14/100, not the nearest
//! binary float.

use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Rational = Ratio<i128>;

/// Measured gas per operation for the batched and single-tree contracts.
pub const MEASURED_DEPOSIT: u64 = 27_880;
pub const MEASURED_COMMIT: u64 = 1_135_599;
pub const MEASURED_WITHDRAW: u64 = 267_964;
pub const MEASURED_BASELINE_DEPOSIT: u64 = 938_626;
pub const MEASURED_BASELINE_WITHDRAW: u64 = 267_998;
/// Gas of one isolated commit. Slightly above the schedule figure, which is
/// averaged over many commits.
pub const SINGLE_COMMIT: u64 = 1_157_773;

/// Fixed overhead of the withdrawal circuit outside the Merkle paths.
pub const WITHDRAW_BASE: u64 = 1_815;
/// Constraints of one MiMC hash2.
pub const MIMC_HASH2: u64 = 1_320;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("invalid gas schedule: {0}")]
    Schedule(String),
    #[error("invalid fee quote: {0}")]
    Quote(String),
    #[error("cannot parse `{0}` as a decimal")]
    Decimal(String),
    #[error("empty sweep range")]
    EmptyRange,
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn read(path: &Path) -> Result<String, CostError> {
    std::fs::read_to_string(path).map_err(|source| CostError::Io { path: path.display().to_string(), source })
}

/// Exact decimal read from JSON numbers or strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Decimal(pub Rational);

impl Decimal {
    pub fn parse(s: &str) -> Result<Self, CostError> {
        let err = || CostError::Decimal(s.to_string());
        let t = s.trim();
        let (mantissa, exp) = match t.find(['e', 'E']) {
            Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| err())?),
            None => (t, 0),
        };
        let (neg, mantissa) = match mantissa.strip_prefix('-') {
            Some(m) => (true, m),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        let digits = format!("{int}{frac}");
        if !digits.chars().all(|c| c.is_ascii_digit()) || digits.len() > 30 {
            return Err(err());
        }
        let n: i128 = digits.parse().map_err(|_| err())?;
        let scale = exp - frac.len() as i32;
        if scale.unsigned_abs() > 30 {
            return Err(err());
        }
        let pow = 10i128.checked_pow(scale.unsigned_abs()).ok_or_else(err)?;
        let mut r = if scale >= 0 {
            Rational::from_integer(n.checked_mul(pow).ok_or_else(err)?)
        } else {
            Rational::new(n, pow)
        };
        if neg {
            r = -r;
        }
        Ok(Decimal(r))
    }

    pub fn from_int(v: i128) -> Self {
        Decimal(Rational::from_integer(v))
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let text = match &v {
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::String(s) => s.clone(),
            other => return Err(serde::de::Error::custom(format!("expected a number, got {other}"))),
        };
        Decimal::parse(&text).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(to_f64(self.0))
    }
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Renders to three significant figures.
pub fn sig3(r: Rational) -> String {
    let x = to_f64(r);
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (2 - mag).max(0) as usize;
    let scale = 10f64.powi(2 - mag);
    let rounded = (x * scale).round() / scale;
    format!("{rounded:.decimals$}")
}

/// Percentage with one decimal, e.g. `72.5%`.
pub fn percent(r: Rational) -> String {
    format!("{:.1}%", to_f64(r) * 100.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSchedule {
    pub deposit: u64,
    pub commit: u64,
    pub withdraw: u64,
    pub baseline_deposit: u64,
    pub baseline_withdraw: u64,
    /// Transactions per committed slot, `2^d_slot`.
    pub batch_size: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule::measured()
    }
}

impl GasSchedule {
    pub fn measured() -> Self {
        GasSchedule {
            deposit: MEASURED_DEPOSIT,
            commit: MEASURED_COMMIT,
            withdraw: MEASURED_WITHDRAW,
            baseline_deposit: MEASURED_BASELINE_DEPOSIT,
            baseline_withdraw: MEASURED_BASELINE_WITHDRAW,
            batch_size: 32,
        }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.batch_size == 0 {
            return Err(CostError::Schedule("batch_size must be at least 1".into()));
        }
        if self.baseline_total() == 0 {
            return Err(CostError::Schedule("baseline_deposit + baseline_withdraw must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, CostError> {
        let sched: GasSchedule =
            serde_json::from_str(s).map_err(|e| CostError::Schedule(e.to_string()))?;
        sched.validate()?;
        Ok(sched)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CostError> {
        Self::from_json(&read(path.as_ref())?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn with_batch_size(&self, batch_size: u64) -> Self {
        GasSchedule { batch_size, ..self.clone() }
    }

    pub fn baseline_total(&self) -> u64 {
        self.baseline_deposit + self.baseline_withdraw
    }

    /// Unbatched sum of the three operations.
    pub fn total(&self) -> u64 {
        self.deposit + self.commit + self.withdraw
    }

    /// Per-transaction gas with the commit split across the batch.
    pub fn amortized_gas(&self) -> Rational {
        Rational::from_integer((self.deposit + self.withdraw) as i128)
            + Rational::new(self.commit as i128, self.batch_size as i128)
    }

    /// `1 - amortized / baseline`.
    pub fn savings_ratio(&self) -> Rational {
        Rational::from_integer(1) - self.amortized_gas() / Rational::from_integer(self.baseline_total() as i128)
    }
}

/// Per-operation costs in a chain's native unit. `commit` is per transaction
/// (already divided by the batch), as published.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpCosts {
    pub deposit: Decimal,
    pub commit: Decimal,
    pub withdraw: Decimal,
    pub baseline_deposit: Decimal,
    pub baseline_withdraw: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pricing {
    /// Fee = gas x gas price.
    Gas { gas_price_gwei: Decimal },
    /// Flat per-operation quotes (fee schedules set in fiat terms).
    PerOp { native_per_op: OpCosts },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeQuote {
    pub chain: String,
    /// Ticker of the native token.
    pub native: String,
    pub native_usd: Decimal,
    #[serde(flatten)]
    pub pricing: Pricing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteFile {
    pub quotes: Vec<FeeQuote>,
}

impl QuoteFile {
    /// Exchange rates and prices at the time of the published measurements.
    pub fn measured() -> Self {
        let d = |s: &str| Decimal::parse(s).expect("literal");
        let gas = |g| Pricing::Gas { gas_price_gwei: d(g) };
        QuoteFile {
            quotes: vec![
                FeeQuote { chain: "ethereum".into(), native: "ETH".into(), native_usd: d("3251"), pricing: gas("10") },
                FeeQuote { chain: "bnb".into(), native: "BNB".into(), native_usd: d("609"), pricing: gas("10") },
                FeeQuote {
                    chain: "hedera".into(),
                    native: "HBAR".into(),
                    native_usd: d("0.14"),
                    pricing: Pricing::PerOp {
                        native_per_op: OpCosts {
                            deposit: d("0.53"),
                            commit: d("0.03"),
                            withdraw: d("0.58"),
                            baseline_deposit: d("0.96"),
                            baseline_withdraw: d("0.58"),
                        },
                    },
                },
            ],
        }
    }

    pub fn from_json(s: &str) -> Result<Self, CostError> {
        let file: QuoteFile = serde_json::from_str(s).map_err(|e| CostError::Quote(e.to_string()))?;
        for q in &file.quotes {
            q.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CostError> {
        Self::from_json(&read(path.as_ref())?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("quotes serialize")
    }
}

impl FeeQuote {
    pub fn validate(&self) -> Result<(), CostError> {
        let zero = Rational::from_integer(0);
        if self.native_usd.0 <= zero {
            return Err(CostError::Quote(format!("{}: native_usd must be positive", self.chain)));
        }
        match &self.pricing {
            Pricing::Gas { gas_price_gwei } if gas_price_gwei.0 <= zero => {
                Err(CostError::Quote(format!("{}: gas_price_gwei must be positive", self.chain)))
            }
            Pricing::PerOp { native_per_op: c }
                if [&c.deposit, &c.commit, &c.withdraw, &c.baseline_deposit, &c.baseline_withdraw]
                    .iter()
                    .any(|x| x.0 < zero) =>
            {
                Err(CostError::Quote(format!("{}: per-op costs must be nonnegative", self.chain)))
            }
            _ => Ok(()),
        }
    }

    /// One fee row: per-transaction costs in native units.
    pub fn row(&self, schedule: &GasSchedule) -> FeeRow {
        let ops = match &self.pricing {
            Pricing::Gas { gas_price_gwei } => {
                let price = gas_price_gwei.0 / Rational::from_integer(1_000_000_000);
                let f = |gas: Rational| gas * price;
                let g = |v: u64| Rational::from_integer(v as i128);
                OpRational {
                    baseline_deposit: f(g(schedule.baseline_deposit)),
                    baseline_withdraw: f(g(schedule.baseline_withdraw)),
                    deposit: f(g(schedule.deposit)),
                    commit: f(Rational::new(schedule.commit as i128, schedule.batch_size as i128)),
                    withdraw: f(g(schedule.withdraw)),
                }
            }
            Pricing::PerOp { native_per_op: c } => OpRational {
                baseline_deposit: c.baseline_deposit.0,
                baseline_withdraw: c.baseline_withdraw.0,
                deposit: c.deposit.0,
                commit: c.commit.0,
                withdraw: c.withdraw.0,
            },
        };
        FeeRow { chain: self.chain.clone(), native: self.native.clone(), native_usd: self.native_usd.0, ops }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpRational {
    pub baseline_deposit: Rational,
    pub baseline_withdraw: Rational,
    pub deposit: Rational,
    /// Per transaction.
    pub commit: Rational,
    pub withdraw: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeeRow {
    pub chain: String,
    pub native: String,
    pub native_usd: Rational,
    pub ops: OpRational,
}

impl FeeRow {
    pub fn baseline_total(&self) -> Rational {
        self.ops.baseline_deposit + self.ops.baseline_withdraw
    }

    pub fn total(&self) -> Rational {
        self.ops.deposit + self.ops.commit + self.ops.withdraw
    }

    pub fn savings(&self) -> Rational {
        Rational::from_integer(1) - self.total() / self.baseline_total()
    }

    pub fn usd(&self, native: Rational) -> Rational {
        native * self.native_usd
    }
}

/// Closed-form constraint accounting for a hash costing `h_c` per hash2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintModel {
    pub h_c: u64,
    pub base: u64,
    pub per_level: u64,
}

impl ConstraintModel {
    pub fn new(h_c: u64) -> Self {
        ConstraintModel { h_c, base: WITHDRAW_BASE, per_level: h_c + 3 }
    }

    pub fn mimc() -> Self {
        Self::new(MIMC_HASH2)
    }

    /// Deposit circuit: one hash per internal node of the slot tree.
    pub fn n_dep(&self, d_slot: u32) -> u64 {
        self.h_c * ((1u64 << d_slot) - 1)
    }

    /// Withdrawal circuit, `base + per_level * (d_slot + d_era)`.
    pub fn n_wit(&self, d_slot: u32, d_era: u32) -> u64 {
        self.base + self.per_level * (d_slot + d_era) as u64
    }

    /// Single-tree baseline, `base + h_c * depth`.
    pub fn n_tc(&self, depth: u32) -> u64 {
        self.base + self.h_c * depth as u64
    }

    /// Simplified total: `base + h_c * (2^d_slot + d_era)`.
    pub fn n_new_simplified(&self, d_slot: u32, d_era: u32) -> u64 {
        self.base + self.h_c * ((1u64 << d_slot) + d_era as u64)
    }

    /// Both circuits together: withdraw plus deposit.
    pub fn n_new_exact(&self, d_slot: u32, d_era: u32) -> u64 {
        self.n_wit(d_slot, d_era) + self.n_dep(d_slot)
    }
}

/// How commit gas grows with the era depth: a fixed part (proof
/// verification, calldata) plus one hash per era level, anchored so that
/// the reference depth reproduces the schedule's commit figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitScaling {
    pub fixed: u64,
    pub reference_d_era: u32,
}

impl Default for CommitScaling {
    fn default() -> Self {
        CommitScaling { fixed: 220_000, reference_d_era: 20 }
    }
}

impl CommitScaling {
    pub fn commit_gas(&self, schedule: &GasSchedule, d_era: u32) -> Rational {
        let fixed = Rational::from_integer(self.fixed.min(schedule.commit) as i128);
        let variable = Rational::from_integer(schedule.commit as i128) - fixed;
        fixed + variable * Rational::new(d_era as i128, self.reference_d_era as i128)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradeoffCell {
    pub d_slot: u32,
    pub d_era: u32,
    pub amortized_gas: Rational,
    pub savings: Rational,
    /// Savings relative to the (5, 20) configuration.
    pub normalized: Rational,
}

pub const REFERENCE_D_SLOT: u32 = 5;
pub const REFERENCE_D_ERA: u32 = 20;

fn cell_savings(schedule: &GasSchedule, scaling: &CommitScaling, d_slot: u32, d_era: u32) -> (Rational, Rational) {
    let commit = scaling.commit_gas(schedule, d_era);
    let amortized = Rational::from_integer((schedule.deposit + schedule.withdraw) as i128)
        + commit / Rational::from_integer(1i128 << d_slot);
    let savings = Rational::from_integer(1) - amortized / Rational::from_integer(schedule.baseline_total() as i128);
    (amortized, savings)
}

/// Savings over a grid of depths, normalized so the (5, 20) cell is 1.
pub fn tradeoff_surface(
    schedule: &GasSchedule,
    scaling: &CommitScaling,
    d_slots: impl IntoIterator<Item = u32>,
    d_eras: impl IntoIterator<Item = u32> + Clone,
) -> Result<Vec<TradeoffCell>, CostError> {
    let (_, reference) = cell_savings(schedule, scaling, REFERENCE_D_SLOT, REFERENCE_D_ERA);
    if reference == Rational::from_integer(0) {
        return Err(CostError::Schedule("reference configuration has zero savings".into()));
    }
    let mut cells = Vec::new();
    for d_slot in d_slots {
        if d_slot > 62 {
            return Err(CostError::Schedule(format!("d_slot {d_slot} too large")));
        }
        for d_era in d_eras.clone() {
            let (amortized_gas, savings) = cell_savings(schedule, scaling, d_slot, d_era);
            cells.push(TradeoffCell { d_slot, d_era, amortized_gas, savings, normalized: savings / reference });
        }
    }
    if cells.is_empty() {
        return Err(CostError::EmptyRange);
    }
    Ok(cells)
}

impl fmt::Display for TradeoffCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}): {}", self.d_slot, self.d_era, sig3(self.normalized))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_are_exact() {
        assert_eq!(Decimal::parse("0.14").unwrap().0, Rational::new(14, 100));
        assert_eq!(Decimal::parse("3251").unwrap().0, Rational::from_integer(3251));
        assert_eq!(Decimal::parse("1e-9").unwrap().0, Rational::new(1, 1_000_000_000));
        assert_eq!(Decimal::parse("-2.5E1").unwrap().0, Rational::from_integer(-25));
        for bad in ["", ".", "abc", "1.2.3", "1e", "--1"] {
            assert!(Decimal::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn three_significant_figures() {
        assert_eq!(sig3(Rational::new(7254, 10000)), "0.725");
        assert_eq!(sig3(Rational::from_integer(1)), "1.00");
        assert_eq!(sig3(Rational::new(2597, 10000)), "0.260");
        assert_eq!(sig3(Rational::from_integer(331_331)), "331000");
    }

    #[test]
    fn missing_field_is_named() {
        let err = GasSchedule::from_json(r#"{"deposit":1,"withdraw":2,"baseline_deposit":3,"baseline_withdraw":4,"batch_size":1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("commit"), "{err}");
        let err = GasSchedule::from_json(&GasSchedule { batch_size: 0, ..GasSchedule::measured() }.to_json())
            .unwrap_err()
            .to_string();
        assert!(err.contains("batch_size"), "{err}");
    }

    #[test]
    fn quotes_round_trip() {
        let q = QuoteFile::measured();
        assert_eq!(QuoteFile::from_json(&q.to_json()).unwrap(), q);
    }
}
