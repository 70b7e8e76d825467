//! FCFS sequencer with an address denylist.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use super::{Address, DepositEvent};
use crate::field::FieldElement;

/// A queued admissible deposit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Pending {
    pub event: usize,
    pub commitment: FieldElement,
    pub depositor: Address,
}

/// Exactly `2^d_slot` commitments in arrival order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlotBatch {
    pub events: Vec<usize>,
    pub leaves: Vec<FieldElement>,
}

/// What one sequencer step did with the events it read.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepReport {
    pub skipped: Vec<usize>,
    pub batch: Option<SlotBatch>,
}

#[derive(Debug, Clone)]
pub struct Sequencer {
    d_slot: u32,
    pending: VecDeque<Pending>,
    banned: BTreeSet<Address>,
    /// Events already read from the contract log.
    cursor: usize,
    completed: u64,
}

impl Sequencer {
    pub fn new(d_slot: u32) -> Self {
        Sequencer { d_slot, pending: VecDeque::new(), banned: BTreeSet::new(), cursor: 0, completed: 0 }
    }

    pub fn d_slot(&self) -> u32 {
        self.d_slot
    }

    pub fn batch_size(&self) -> usize {
        1usize << self.d_slot
    }

    pub fn ban(&mut self, addr: Address) {
        self.banned.insert(addr);
    }

    pub fn unban(&mut self, addr: &Address) {
        self.banned.remove(addr);
    }

    pub fn is_banned(&self, addr: &Address) -> bool {
        self.banned.contains(addr)
    }

    pub fn pending(&self) -> impl Iterator<Item = &Pending> {
        self.pending.iter()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Admissible deposits waiting, counting events not yet read.
    pub fn admissible_backlog(&self, events: &[DepositEvent]) -> usize {
        let queued = self.pending.iter().filter(|p| !self.banned.contains(&p.depositor)).count();
        let unread = events.iter().skip(self.cursor).filter(|e| !self.banned.contains(&e.depositor)).count();
        queued + unread
    }

    /// Completed slots, `C_t`.
    pub fn completed_slots(&self) -> u64 {
        self.completed
    }

    /// Reads the events appended since the last step, then closes at most
    /// one batch. A queued deposit whose owner was banned after it was
    /// queued is dropped too, so no slot ever holds a banned commitment.
    pub fn step(&mut self, events: &[DepositEvent]) -> StepReport {
        let mut report = StepReport::default();
        for ev in events.iter().skip(self.cursor) {
            if self.banned.contains(&ev.depositor) {
                report.skipped.push(ev.index);
            } else {
                self.pending.push_back(Pending {
                    event: ev.index,
                    commitment: ev.commitment,
                    depositor: ev.depositor.clone(),
                });
            }
        }
        self.cursor = self.cursor.max(events.len());

        let banned = &self.banned;
        self.pending.retain(|p| {
            let keep = !banned.contains(&p.depositor);
            if !keep {
                report.skipped.push(p.event);
            }
            keep
        });
        report.skipped.sort_unstable();

        let size = self.batch_size();
        if self.pending.len() >= size {
            let taken: Vec<Pending> = self.pending.drain(..size).collect();
            report.batch = Some(SlotBatch {
                events: taken.iter().map(|p| p.event).collect(),
                leaves: taken.iter().map(|p| p.commitment).collect(),
            });
        }
        report
    }

    /// Called once the contract accepted a batch.
    pub(crate) fn mark_completed(&mut self) {
        self.completed += 1;
    }

    /// Puts a rejected batch back at the head of the queue.
    pub(crate) fn requeue(&mut self, batch: &SlotBatch, depositors: impl Fn(usize) -> Address) {
        for (ev, leaf) in batch.events.iter().zip(&batch.leaves).rev() {
            self.pending.push_front(Pending { event: *ev, commitment: *leaf, depositor: depositors(*ev) });
        }
    }
}

/// Observed anonymity set after `completed` slots: `2^d_slot * C_t`.
pub fn oas(d_slot: u32, completed: u64) -> u64 {
    (1u64 << d_slot) * completed
}
