use alloc::vec::Vec;

use super::{solve, Domain};
use crate::cfg::Cfg;
use crate::isa::{Base, Instruction, MemRef, Op, Program, Reg, Src};

/// May-taint facts before an instruction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaintState {
    /// Bit `k` set when `rk` may hold input-derived data.
    pub regs: u16,
    /// One flag per data segment, covering every word of it.
    pub segments: Vec<bool>,
}

impl TaintState {
    pub fn reg(&self, r: Reg) -> bool {
        self.regs & (1 << r.index()) != 0
    }

    fn set(&mut self, r: Reg, t: bool) {
        if t {
            self.regs |= 1 << r.index();
        } else {
            self.regs &= !(1 << r.index());
        }
    }

    fn src(&self, s: &Src) -> bool {
        match s {
            Src::Reg(r) => self.reg(*r),
            Src::Imm(_) => false,
        }
    }

    fn base(&self, b: &Base) -> bool {
        match b {
            Base::Reg(r) => self.reg(*r),
            Base::Segment(_) => false,
        }
    }

    /// Segments `addr` may touch: the named one, or any for a register base.
    fn targets(&self, program: &Program, addr: &MemRef) -> Vec<usize> {
        match &addr.base {
            Base::Segment(name) => program.segment_index(name).into_iter().collect(),
            Base::Reg(_) => (0..self.segments.len()).collect(),
        }
    }

    fn memory(&self, program: &Program, addr: &MemRef) -> bool {
        self.targets(program, addr).into_iter().any(|s| self.segments[s])
    }
}

impl Domain for TaintState {
    fn initial(program: &Program) -> Self {
        let mut s = TaintState {
            regs: 0,
            segments: program
                .data
                .iter()
                .map(|d| program.taint_sources.segments.contains(&d.name))
                .collect(),
        };
        for r in &program.taint_sources.registers {
            s.set(*r, true);
        }
        s
    }

    fn join(&mut self, other: &Self) {
        self.regs |= other.regs;
        for (a, b) in self.segments.iter_mut().zip(&other.segments) {
            *a |= *b;
        }
    }

    fn widen(&mut self, next: &Self) {
        self.join(next);
    }

    fn transfer(&mut self, program: &Program, inst: &Instruction) {
        match &inst.op {
            Op::Alu { rd, ra, rb, .. } => {
                let t = self.reg(*ra) || self.src(rb);
                self.set(*rd, t);
            }
            Op::Maccs { hi, lo, a, b } => {
                let t = self.reg(*a) || self.reg(*b) || self.reg(*hi) || self.reg(*lo);
                self.set(*hi, t);
                self.set(*lo, t);
            }
            Op::Ldw { rd, addr } => {
                let t = self.base(&addr.base) || self.src(&addr.index) || self.memory(program, addr);
                self.set(*rd, t);
            }
            Op::Stw { rs, addr } => {
                if self.reg(*rs) || self.base(&addr.base) || self.src(&addr.index) {
                    for s in self.targets(program, addr) {
                        self.segments[s] = true;
                    }
                }
            }
            Op::Ldc { rd, .. } => self.set(*rd, false),
            Op::Mov { rd, rs } => {
                let t = self.reg(*rs);
                self.set(*rd, t);
            }
            Op::In { rd } => self.set(*rd, true),
            Op::Nop | Op::Bt { .. } | Op::Bu { .. } | Op::Out { .. } | Op::Halt => {}
        }
    }
}

/// May-taint state before every site; `None` for unreachable sites.
pub fn analyze_taint(cfg: &Cfg, program: &Program) -> Vec<Option<TaintState>> {
    solve(program, cfg)
}

/// Whether each read port of `inst` may carry tainted data, in port order.
pub fn site_port_taint(program: &Program, inst: &Instruction, state: &TaintState) -> Vec<bool> {
    match &inst.op {
        Op::Alu { ra, rb, .. } => alloc::vec![state.reg(*ra), state.src(rb)],
        Op::Maccs { a, b, .. } => alloc::vec![state.reg(*a), state.reg(*b)],
        Op::Ldw { addr, .. } => alloc::vec![
            state.base(&addr.base),
            state.src(&addr.index),
            state.memory(program, addr)
        ],
        Op::Stw { rs, addr } => alloc::vec![state.base(&addr.base), state.src(&addr.index), state.reg(*rs)],
        Op::Ldc { .. } => alloc::vec![false],
        Op::Mov { rs, .. } | Op::Out { rs } => alloc::vec![state.reg(*rs)],
        Op::Bt { cond, .. } => alloc::vec![state.reg(*cond)],
        Op::In { .. } => alloc::vec![true],
        Op::Nop | Op::Bu { .. } | Op::Halt => Vec::new(),
    }
}
