//! Deterministic grid-world simulator for a block-assembly scenario, plus
//! two agent-team engines: a reactive option/priority engine ([`fitbut`])
//! and a proactive scenario-automaton engine ([`desouches`]).
//!
//! The crate is `no_std` and only needs `alloc`. IO, configuration files and
//! the command line live in the companion runner crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod beliefs;
pub mod budget;
pub mod desouches;
pub mod fitbut;
pub mod geom;
pub mod pathfind;
pub mod reservation;
pub mod rng;
pub mod sync;
pub mod team;
pub mod world;

pub use geom::{Coord, Dir, Turn};
