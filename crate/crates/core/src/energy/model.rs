use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::isa::Opcode;

/// Idle power of the reference board with one thread blocked on an event.
pub const DEFAULT_BASE_POWER_MW: f64 = 200.0;

/// One pipeline slot at 400 MHz.
pub const DEFAULT_CYCLE_TIME_NS: f64 = 2.5;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OpcodeCost {
    pub base_mw: f64,
    pub alpha_mw_per_bit: f64,
}

/// Cost of the pipeline moving from one kind of instruction to another.
#[derive(Clone, Debug, PartialEq)]
pub enum InterInstruction {
    Constant(f64),
    /// Missing pairs cost nothing.
    Matrix(BTreeMap<(Opcode, Opcode), f64>),
}

impl Default for InterInstruction {
    fn default() -> Self {
        InterInstruction::Constant(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("no cost entry for opcode `{0}`")]
    MissingOpcode(Opcode),
    #[error("{what} must be finite and non-negative, got {value}")]
    InvalidCost { what: String, value: f64 },
    #[error("cycle time must be positive, got {0}")]
    InvalidCycleTime(f64),
    #[error("nop reads no data; its alpha must be 0, got {0}")]
    NopAlpha(f64),
}

/// Per-opcode base and switching costs plus the platform power.
///
/// Costs are average power (mW) over the slot an instruction occupies;
/// energy follows by multiplying with the cycle time.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyModel {
    base_power_mw: f64,
    cycle_time_ns: f64,
    costs: [OpcodeCost; Opcode::COUNT],
    inter: InterInstruction,
}

fn check(what: impl FnOnce() -> String, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidCost {
            what: what(),
            value,
        })
    }
}

impl EnergyModel {
    /// Builds a model; every opcode must have an entry.
    pub fn new(
        base_power_mw: f64,
        cycle_time_ns: f64,
        costs: &BTreeMap<Opcode, OpcodeCost>,
        inter: InterInstruction,
    ) -> Result<Self, ModelError> {
        let mut table = [OpcodeCost::default(); Opcode::COUNT];
        for op in Opcode::ALL {
            table[op.index()] = *costs.get(&op).ok_or(ModelError::MissingOpcode(op))?;
        }
        Self::from_table(base_power_mw, cycle_time_ns, table, inter)
    }

    pub fn from_table(
        base_power_mw: f64,
        cycle_time_ns: f64,
        costs: [OpcodeCost; Opcode::COUNT],
        inter: InterInstruction,
    ) -> Result<Self, ModelError> {
        check(|| "base_power_mw".into(), base_power_mw)?;
        if !(cycle_time_ns.is_finite() && cycle_time_ns > 0.0) {
            return Err(ModelError::InvalidCycleTime(cycle_time_ns));
        }
        for op in Opcode::ALL {
            let c = costs[op.index()];
            check(|| alloc::format!("{op}.base_mw"), c.base_mw)?;
            check(|| alloc::format!("{op}.alpha_mw_per_bit"), c.alpha_mw_per_bit)?;
        }
        let nop_alpha = costs[Opcode::Nop.index()].alpha_mw_per_bit;
        if nop_alpha != 0.0 {
            return Err(ModelError::NopAlpha(nop_alpha));
        }
        match &inter {
            InterInstruction::Constant(c) => check(|| "inter_instruction".into(), *c)?,
            InterInstruction::Matrix(m) => {
                for (&(from, to), &v) in m {
                    check(|| alloc::format!("inter_instruction[{from}->{to}]"), v)?;
                }
            }
        }
        Ok(EnergyModel {
            base_power_mw,
            cycle_time_ns,
            costs,
            inter,
        })
    }

    /// Every opcode costs `cost` (nop without the switching term), no
    /// inter-instruction overhead.
    pub fn uniform(base_power_mw: f64, cycle_time_ns: f64, cost: OpcodeCost) -> Result<Self, ModelError> {
        let mut costs = [cost; Opcode::COUNT];
        costs[Opcode::Nop.index()].alpha_mw_per_bit = 0.0;
        Self::from_table(base_power_mw, cycle_time_ns, costs, InterInstruction::default())
    }

    pub fn base_power_mw(&self) -> f64 {
        self.base_power_mw
    }

    pub fn cycle_time_ns(&self) -> f64 {
        self.cycle_time_ns
    }

    /// Raw entry for `op`. Use [`EnergyModel::price`] for the entry an
    /// executed instruction is charged with.
    pub fn cost(&self, op: Opcode) -> OpcodeCost {
        self.costs[op.index()]
    }

    pub fn price(&self, op: Opcode) -> OpcodeCost {
        self.costs[op.priced_as().index()]
    }

    pub fn costs(&self) -> &[OpcodeCost; Opcode::COUNT] {
        &self.costs
    }

    pub fn inter_instruction(&self) -> &InterInstruction {
        &self.inter
    }

    /// `O(prev, op)`; zero without a predecessor.
    pub fn transition_mw(&self, prev: Option<Opcode>, op: Opcode) -> f64 {
        let Some(prev) = prev else { return 0.0 };
        match &self.inter {
            InterInstruction::Constant(c) => *c,
            InterInstruction::Matrix(m) => m
                .get(&(prev.priced_as(), op.priced_as()))
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// Largest transition cost into `op` from any opcode in `preds`.
    pub fn max_transition_mw(&self, preds: impl IntoIterator<Item = Opcode>, op: Opcode) -> f64 {
        preds
            .into_iter()
            .map(|p| self.transition_mw(Some(p), op))
            .fold(0.0, f64::max)
    }

    /// Converts `mw * cycles` into nanojoules.
    pub fn mw_cycles_to_nj(&self, mw_cycles: f64) -> f64 {
        mw_cycles * self.cycle_time_ns * 1e-3
    }
}

/// Power drawn in the slot of one instruction.
pub fn event_cost(opcode: Opcode, switching_bits: u32, prev: Option<Opcode>, model: &EnergyModel) -> f64 {
    let c = model.price(opcode);
    c.base_mw + c.alpha_mw_per_bit * f64::from(switching_bits) + model.transition_mw(prev, opcode)
}
