//! Instruction-level energy modelling for a small RISC ISA.
//!
//! The crate covers the whole pipeline from assembly text to a worst-case
//! energy bound:
//!
//! - [`isa`] parses and prints the toy assembly language.
//! - [`cfg`] builds reducible control-flow graphs and loop forests.
//! - [`energy`] holds the instruction-level energy model with operand
//!   switching terms, trace accounting and calibration against measurement
//!   tables.
//! - [`sim`] executes programs on a round-robin multithreaded pipeline and
//!   records energy traces with dynamic taint.
//! - [`analysis`] runs the static taint and interval analyses and classifies
//!   every read port of every instruction.
//! - [`wcec`] turns the classification into a worst-case energy bound and
//!   validates it against simulation.
//! - [`bench`] generates the FIR benchmark family, its input patterns and the
//!   experiment tables.
//!
//! Everything here is `no_std` with `alloc`; file formats and the command
//! line tool live in the companion `wcec` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod bench;
pub mod cfg;
pub mod energy;
pub mod isa;
pub mod sim;
pub mod wcec;

pub use cfg::{build_cfg, Cfg, CfgError};
pub use energy::{EnergyModel, EnergyReport, TraceEvent};
pub use isa::{parse_program, parse_threads, pretty_print, Opcode, Program};
