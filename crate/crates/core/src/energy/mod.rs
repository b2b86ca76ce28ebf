//! Instruction-level energy model with operand switching terms.
//!
//! Every executed instruction draws `base + alpha * H + O(prev, op)` mW for
//! one pipeline slot, where `H` is the number of bits that toggle on its read
//! ports relative to the values those ports held before. The always-on
//! platform power is added on top.

mod fit;
mod model;
mod trace;

pub use fit::{
    fit_model, CellFeatures, CellResidual, FitDesign, FitError, FitReport, LoopSlot,
    MeasurementRow, MeasurementTable, Pattern,
};
pub use model::{
    event_cost, EnergyModel, InterInstruction, ModelError, OpcodeCost, DEFAULT_BASE_POWER_MW,
    DEFAULT_CYCLE_TIME_NS,
};
pub use trace::{
    trace_energy, EnergyAccumulator, EnergyReport, OpcodeShare, Ports, TraceError, TraceEvent,
};

use crate::isa::Opcode;

/// Number of differing bits between two words.
pub fn hamming_distance(a: u32, b: u32) -> u32 {
    (a ^ b).count_ones()
}

/// Bits toggled when `opcode` drives `current` onto its ports.
///
/// `previous` holds the *effective* values latched by the previous execution
/// of the same ports; `current` holds the raw operand values, which are mapped
/// through [`Opcode::effective_port_value`] first.
///
/// # Panics
///
/// If either slice length differs from `opcode.port_count()`.
pub fn port_switching_metric(current: &[u32], previous: &[u32], opcode: Opcode) -> u32 {
    assert_eq!(current.len(), opcode.port_count(), "port count of {opcode}");
    assert_eq!(previous.len(), current.len(), "previous port state length");
    current
        .iter()
        .zip(previous)
        .enumerate()
        .map(|(port, (&cur, &prev))| hamming_distance(opcode.effective_port_value(port, cur), prev))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid interval [{lo:#x}, {hi:#x}]")]
pub struct InvalidInterval {
    pub lo: u32,
    pub hi: u32,
}

/// Largest hamming distance between any two words of `[lo, hi]`.
///
/// Two words in the interval can differ in every bit below the highest bit
/// where `lo` and `hi` differ, and in that bit itself, but never above it.
pub fn max_hamming_interval(lo: u32, hi: u32) -> Result<u32, InvalidInterval> {
    if lo > hi {
        return Err(InvalidInterval { lo, hi });
    }
    Ok(32 - (lo ^ hi).leading_zeros())
}
