//! Simulation and analysis of polarization-entangled 810 nm photon pairs
//! distributed through standard telecom fiber.

use std::fmt;

pub mod coincidence;
pub mod fiber;
pub mod link;
pub mod polarization;
pub mod qkd;
pub mod scenario;
pub mod special;
pub mod sync;
pub mod tagfile;
pub mod units;

/// The two receiving parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    A,
    B,
}

impl Party {
    pub fn index(self) -> usize {
        match self {
            Party::A => 0,
            Party::B => 1,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::A => "A",
            Party::B => "B",
        })
    }
}
