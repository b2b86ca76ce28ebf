//! The toy RISC instruction set.
//!
//! Words are 32 bits wide and there are twelve general purpose registers
//! `r0`..`r11`. Every instruction occupies one pipeline slot. Each opcode has
//! a fixed number of *read ports*: the words it pulls onto the datapath in
//! the cycle it executes. Ports are what the energy model charges switching
//! activity for.

mod parse;
mod print;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use parse::{parse_program, parse_threads, ParseError};
pub use print::pretty_print;

/// Number of general purpose registers.
pub const NUM_REGS: usize = 12;

/// Largest port count of any opcode.
pub const MAX_PORTS: usize = 3;

/// Word address of the first data segment of every program.
pub const DATA_BASE: u32 = 0x100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(u8);

impl Reg {
    pub fn new(index: u8) -> Option<Reg> {
        (usize::from(index) < NUM_REGS).then_some(Reg(index))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn all() -> impl Iterator<Item = Reg> {
        (0..NUM_REGS as u8).map(Reg)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    Add,
    Sub,
    Xor,
    And,
    Or,
    Lmul,
    Maccs,
    Ldw,
    Stw,
    Ldc,
    Mov,
    Nop,
    Bt,
    Bu,
    In,
    Out,
    Halt,
}

impl Opcode {
    pub const COUNT: usize = 17;

    pub const ALL: [Opcode; Opcode::COUNT] = [
        Opcode::Add,
        Opcode::Sub,
        Opcode::Xor,
        Opcode::And,
        Opcode::Or,
        Opcode::Lmul,
        Opcode::Maccs,
        Opcode::Ldw,
        Opcode::Stw,
        Opcode::Ldc,
        Opcode::Mov,
        Opcode::Nop,
        Opcode::Bt,
        Opcode::Bu,
        Opcode::In,
        Opcode::Out,
        Opcode::Halt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Xor => "xor",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Lmul => "lmul",
            Opcode::Maccs => "maccs",
            Opcode::Ldw => "ldw",
            Opcode::Stw => "stw",
            Opcode::Ldc => "ldc",
            Opcode::Mov => "mov",
            Opcode::Nop => "nop",
            Opcode::Bt => "bt",
            Opcode::Bu => "bu",
            Opcode::In => "in",
            Opcode::Out => "out",
            Opcode::Halt => "halt",
        }
    }

    pub fn from_name(name: &str) -> Option<Opcode> {
        Opcode::ALL
            .iter()
            .copied()
            .find(|op| op.name().eq_ignore_ascii_case(name))
    }

    /// Dense index into per-opcode tables.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of words this opcode reads onto the datapath.
    ///
    /// ALU ops and `maccs` read their two source operands (the accumulator
    /// pair of `maccs` is not a port). Loads and stores read the base
    /// address, the index and the data word. `in` reads the incoming stream
    /// word, `ldc` its constant.
    pub fn port_count(self) -> usize {
        match self {
            Opcode::Add
            | Opcode::Sub
            | Opcode::Xor
            | Opcode::And
            | Opcode::Or
            | Opcode::Lmul
            | Opcode::Maccs => 2,
            Opcode::Ldw | Opcode::Stw => 3,
            Opcode::Ldc | Opcode::Mov | Opcode::Bt | Opcode::In | Opcode::Out => 1,
            Opcode::Nop | Opcode::Bu | Opcode::Halt => 0,
        }
    }

    /// The model entry used to price this opcode. `halt` retires its thread
    /// in one slot at the cost of a `nop`.
    pub fn priced_as(self) -> Opcode {
        match self {
            Opcode::Halt => Opcode::Nop,
            op => op,
        }
    }

    pub fn is_branch(self) -> bool {
        matches!(self, Opcode::Bt | Opcode::Bu)
    }

    /// Value a port presents to the switching metric. The second operand of
    /// `sub` goes through the adder inverted.
    pub fn effective_port_value(self, port: usize, value: u32) -> u32 {
        if self == Opcode::Sub && port == 1 {
            !value
        } else {
            value
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Opcode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Opcode::from_name(s).ok_or(())
    }
}

/// Register or immediate source operand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Src {
    Reg(Reg),
    Imm(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Base {
    Reg(Reg),
    Segment(String),
}

/// `base[index]` memory operand; addresses count words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemRef {
    pub base: Base,
    pub index: Src,
}

/// Operand of `ldc`: a literal or the address of a data segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Const {
    Imm(u32),
    Segment(String),
}

/// Resolved branch target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub label: String,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AluOp {
    Add,
    Sub,
    Xor,
    And,
    Or,
    Lmul,
}

impl AluOp {
    pub fn opcode(self) -> Opcode {
        match self {
            AluOp::Add => Opcode::Add,
            AluOp::Sub => Opcode::Sub,
            AluOp::Xor => Opcode::Xor,
            AluOp::And => Opcode::And,
            AluOp::Or => Opcode::Or,
            AluOp::Lmul => Opcode::Lmul,
        }
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Xor => a ^ b,
            AluOp::And => a & b,
            AluOp::Or => a | b,
            // Low word of the product; the high word is not kept.
            AluOp::Lmul => a.wrapping_mul(b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Alu { op: AluOp, rd: Reg, ra: Reg, rb: Src },
    /// `hi:lo += sext(a) * sext(b)`
    Maccs { hi: Reg, lo: Reg, a: Reg, b: Reg },
    Ldw { rd: Reg, addr: MemRef },
    Stw { rs: Reg, addr: MemRef },
    Ldc { rd: Reg, value: Const },
    Mov { rd: Reg, rs: Reg },
    Nop,
    /// Branch if `cond` is non-zero.
    Bt { cond: Reg, target: Target },
    Bu { target: Target },
    In { rd: Reg },
    Out { rs: Reg },
    Halt,
}

impl Op {
    pub fn opcode(&self) -> Opcode {
        match self {
            Op::Alu { op, .. } => op.opcode(),
            Op::Maccs { .. } => Opcode::Maccs,
            Op::Ldw { .. } => Opcode::Ldw,
            Op::Stw { .. } => Opcode::Stw,
            Op::Ldc { .. } => Opcode::Ldc,
            Op::Mov { .. } => Opcode::Mov,
            Op::Nop => Opcode::Nop,
            Op::Bt { .. } => Opcode::Bt,
            Op::Bu { .. } => Opcode::Bu,
            Op::In { .. } => Opcode::In,
            Op::Out { .. } => Opcode::Out,
            Op::Halt => Opcode::Halt,
        }
    }

    pub fn target(&self) -> Option<&Target> {
        match self {
            Op::Bt { target, .. } | Op::Bu { target } => Some(target),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instruction {
    /// Index of the instruction in program order.
    pub site: usize,
    pub op: Op,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        self.op.opcode()
    }

    pub fn branch_target(&self) -> Option<usize> {
        self.op.target().map(|t| t.index)
    }

    /// A branch whose target does not lie after it.
    pub fn is_backward_branch(&self) -> bool {
        self.branch_target().is_some_and(|t| t <= self.site)
    }

    /// Whether control can continue at `site + 1`.
    pub fn falls_through(&self) -> bool {
        !matches!(self.op, Op::Bu { .. } | Op::Halt)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataSegment {
    pub name: String,
    pub words: Vec<u32>,
}

/// Registers and segments holding external input when the program starts.
/// Every `in` destination is an additional implicit source.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaintSources {
    pub registers: BTreeSet<Reg>,
    pub segments: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    pub labels: BTreeMap<String, usize>,
    /// Backward branch site -> maximum executions of the loop header per
    /// entry into the loop.
    pub loop_bounds: BTreeMap<usize, u32>,
    pub taint_sources: TaintSources,
    pub data: Vec<DataSegment>,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn segment_index(&self, name: &str) -> Option<usize> {
        self.data.iter().position(|s| s.name == name)
    }

    /// Word address of segment `index`. Segments are laid out back to back
    /// from [`DATA_BASE`] in declaration order.
    pub fn segment_base(&self, index: usize) -> u32 {
        let offset: usize = self.data[..index].iter().map(|s| s.words.len()).sum();
        DATA_BASE.wrapping_add(offset as u32)
    }

    /// Maps a word address to `(segment, offset)`.
    pub fn resolve_address(&self, address: u32) -> Option<(usize, usize)> {
        let mut base = DATA_BASE;
        for (i, seg) in self.data.iter().enumerate() {
            let len = seg.words.len() as u32;
            if address >= base && address - base < len {
                return Some((i, (address - base) as usize));
            }
            base = base.wrapping_add(len);
        }
        None
    }

    pub fn backward_branches(&self) -> impl Iterator<Item = &Instruction> {
        self.instructions.iter().filter(|i| i.is_backward_branch())
    }

    pub fn opcodes(&self) -> BTreeSet<Opcode> {
        self.instructions.iter().map(Instruction::opcode).collect()
    }
}
