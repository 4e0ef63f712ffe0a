use serde::{Deserialize, Serialize};

use crate::protocol::Party;

/// Storage of one party. Bytes are reserved when an offline phase starts, committed when it
/// finishes and released when the bundle's online phase finishes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageLedger {
    pub party: Party,
    pub capacity: u64,
    pub reserved: u64,
    pub committed: u64,
    pub high_water: u64,
}

impl StorageLedger {
    pub fn new(party: Party, capacity: u64) -> Self {
        StorageLedger {
            party,
            capacity,
            reserved: 0,
            committed: 0,
            high_water: 0,
        }
    }

    pub fn used(&self) -> u64 {
        self.reserved + self.committed
    }

    pub fn can_reserve(&self, bytes: u64) -> bool {
        self.used().checked_add(bytes).is_some_and(|u| u <= self.capacity)
    }

    pub fn reserve(&mut self, bytes: u64) {
        assert!(self.can_reserve(bytes), "{} ledger over capacity", self.party);
        self.reserved += bytes;
        self.high_water = self.high_water.max(self.used());
    }

    pub fn commit(&mut self, bytes: u64) {
        assert!(
            self.reserved >= bytes,
            "{} ledger commits more than reserved",
            self.party
        );
        self.reserved -= bytes;
        self.committed += bytes;
    }

    pub fn release(&mut self, bytes: u64) {
        assert!(
            self.committed >= bytes,
            "{} ledger releases more than committed",
            self.party
        );
        self.committed -= bytes;
    }

    pub fn check(&self) {
        assert!(self.used() <= self.capacity, "{} ledger over capacity", self.party);
        assert!(self.high_water >= self.used());
    }
}
