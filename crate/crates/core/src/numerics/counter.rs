use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Complex multiplication and addition tally.
///
/// One complex multiply is one mult and one complex add or subtract is one
/// add. `|w|²` is one mult plus one add, and scaling by a real is one mult.
/// Counters only grow; [`OpCounter::reset`] starts a new call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCounter {
    pub complex_mults: u64,
    pub complex_adds: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn mults(&mut self, n: u64) {
        self.complex_mults += n;
    }

    #[inline]
    pub fn adds(&mut self, n: u64) {
        self.complex_adds += n;
    }

    pub fn total(&self) -> u64 {
        self.complex_mults + self.complex_adds
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

impl Add for OpCounter {
    type Output = OpCounter;

    fn add(self, rhs: OpCounter) -> OpCounter {
        OpCounter {
            complex_mults: self.complex_mults + rhs.complex_mults,
            complex_adds: self.complex_adds + rhs.complex_adds,
        }
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: OpCounter) {
        *self = *self + rhs;
    }
}
