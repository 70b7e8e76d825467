//! Line-oriented scenario scripts.
//!
//! ```text
//! # comment
//! deposit alice 100
//! ban mallory
//! unban mallory
//! step
//! withdraw 0 bob [--tamper-recipient|--replay]
//! ```
//!
//! Note ids count `deposit` lines from 0, whether or not the deposit is
//! accepted.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use super::Address;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WithdrawMode {
    Honest,
    /// An interceptor swaps the recipient after the proof is made.
    TamperRecipient,
    /// The note's last honest request is broadcast again verbatim.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    Deposit { address: Address, denomination: u64 },
    Ban(Address),
    Unban(Address),
    Step,
    Withdraw { note: usize, recipient: Address, mode: WithdrawMode },
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Deposit { address, denomination } => write!(f, "deposit {address} {denomination}"),
            Instruction::Ban(a) => write!(f, "ban {a}"),
            Instruction::Unban(a) => write!(f, "unban {a}"),
            Instruction::Step => write!(f, "step"),
            Instruction::Withdraw { note, recipient, mode } => {
                write!(f, "withdraw {note} {recipient}")?;
                match mode {
                    WithdrawMode::Honest => Ok(()),
                    WithdrawMode::TamperRecipient => write!(f, " --tamper-recipient"),
                    WithdrawMode::Replay => write!(f, " --replay"),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}: `{text}`")]
pub struct ScenarioError {
    pub line: usize,
    pub text: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    /// Instructions with their 1-based source line.
    pub instructions: Vec<(usize, Instruction)>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut instructions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: &str| ScenarioError { line: i + 1, text: raw.trim().to_string(), message: message.into() };
            let words: Vec<&str> = line.split_whitespace().collect();
            let addr = |w: &str| Address::new(w).map_err(|e| err(&e));
            let ins = match words.as_slice() {
                ["deposit", a, d] => Instruction::Deposit {
                    address: addr(a)?,
                    denomination: d.parse().map_err(|_| err("denomination must be a non-negative integer"))?,
                },
                ["deposit", ..] => return Err(err("expected `deposit <addr> <denom>`")),
                ["ban", a] => Instruction::Ban(addr(a)?),
                ["unban", a] => Instruction::Unban(addr(a)?),
                ["ban" | "unban", ..] => return Err(err("expected exactly one address")),
                ["step"] => Instruction::Step,
                ["step", ..] => return Err(err("`step` takes no arguments")),
                ["withdraw", n, r, rest @ ..] => {
                    let note = n.parse().map_err(|_| err("note id must be a non-negative integer"))?;
                    let mode = match rest {
                        [] => WithdrawMode::Honest,
                        ["--tamper-recipient"] => WithdrawMode::TamperRecipient,
                        ["--replay"] => WithdrawMode::Replay,
                        _ => return Err(err("expected at most one of --tamper-recipient, --replay")),
                    };
                    Instruction::Withdraw { note, recipient: addr(r)?, mode }
                }
                ["withdraw", ..] => return Err(err("expected `withdraw <note-id> <recipient> [flag]`")),
                [other, ..] => return Err(err(&format!("unknown instruction `{other}`"))),
                [] => unreachable!("blank lines are skipped"),
            };
            instructions.push((i + 1, ins));
        }
        Ok(Scenario { instructions })
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::parse(s)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (_, ins) in &self.instructions {
            writeln!(f, "{ins}")?;
        }
        Ok(())
    }
}
