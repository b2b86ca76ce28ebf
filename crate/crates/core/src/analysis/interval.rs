use alloc::vec::Vec;
use core::fmt;

use super::{solve, Domain};
use crate::cfg::Cfg;
use crate::energy::max_hamming_interval;
use crate::isa::{AluOp, Base, Const, Instruction, MemRef, Op, Program, Reg, Src, NUM_REGS};

/// Unsigned word interval `[lo, hi]`. The full range doubles as top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    pub const TOP: Interval = Interval { lo: 0, hi: u32::MAX };

    /// # Panics
    ///
    /// If `lo > hi`.
    pub fn new(lo: u32, hi: u32) -> Interval {
        assert!(lo <= hi, "empty interval");
        Interval { lo, hi }
    }

    pub fn singleton(v: u32) -> Interval {
        Interval { lo: v, hi: v }
    }

    pub fn is_top(self) -> bool {
        self == Interval::TOP
    }

    pub fn contains(self, v: u32) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn hull(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn singleton_value(self) -> Option<u32> {
        (self.lo == self.hi).then_some(self.lo)
    }

    /// Most bits two values of the interval can differ in.
    pub fn max_hamming(self) -> u32 {
        max_hamming_interval(self.lo, self.hi).expect("lo <= hi")
    }

    /// `[!hi, !lo]`, the image under bitwise negation.
    pub fn not(self) -> Interval {
        Interval { lo: !self.hi, hi: !self.lo }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_top() {
            f.write_str("top")
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

/// All bits at or below the highest set bit of `x`.
fn smear(x: u32) -> u32 {
    if x == 0 {
        0
    } else {
        u32::MAX >> x.leading_zeros()
    }
}

fn alu(op: AluOp, a: Interval, b: Interval) -> Interval {
    if let (Some(x), Some(y)) = (a.singleton_value(), b.singleton_value()) {
        return Interval::singleton(op.apply(x, y));
    }
    match op {
        AluOp::Add => match (a.lo.checked_add(b.lo), a.hi.checked_add(b.hi)) {
            (Some(lo), Some(hi)) => Interval { lo, hi },
            // every result wraps by the same amount
            (None, None) => Interval {
                lo: a.lo.wrapping_add(b.lo),
                hi: a.hi.wrapping_add(b.hi),
            },
            _ => Interval::TOP,
        },
        AluOp::Sub => {
            if a.lo >= b.hi {
                Interval { lo: a.lo - b.hi, hi: a.hi - b.lo }
            } else if a.hi < b.lo {
                Interval {
                    lo: a.lo.wrapping_sub(b.hi),
                    hi: a.hi.wrapping_sub(b.lo),
                }
            } else {
                Interval::TOP
            }
        }
        AluOp::Lmul => match a.hi.checked_mul(b.hi) {
            Some(hi) => Interval { lo: a.lo * b.lo, hi },
            None => Interval::TOP,
        },
        AluOp::And => Interval { lo: 0, hi: a.hi.min(b.hi) },
        AluOp::Or => Interval {
            lo: a.lo.max(b.lo),
            hi: smear(a.hi | b.hi),
        },
        AluOp::Xor => Interval { lo: 0, hi: smear(a.hi | b.hi) },
    }
}

/// Interval facts before an instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalState {
    pub regs: [Interval; NUM_REGS],
    /// One interval per data segment, covering every word of it.
    pub segments: Vec<Interval>,
}

impl IntervalState {
    pub fn reg(&self, r: Reg) -> Interval {
        self.regs[r.index()]
    }

    fn src(&self, s: &Src) -> Interval {
        match s {
            Src::Reg(r) => self.reg(*r),
            Src::Imm(v) => Interval::singleton(*v),
        }
    }

    fn base(&self, program: &Program, b: &Base) -> Interval {
        match b {
            Base::Reg(r) => self.reg(*r),
            Base::Segment(name) => match program.segment_index(name) {
                Some(i) => Interval::singleton(program.segment_base(i)),
                None => Interval::TOP,
            },
        }
    }

    fn targets(&self, program: &Program, addr: &MemRef) -> Vec<usize> {
        match &addr.base {
            Base::Segment(name) => program.segment_index(name).into_iter().collect(),
            Base::Reg(_) => (0..self.segments.len()).collect(),
        }
    }

    fn memory(&self, program: &Program, addr: &MemRef) -> Interval {
        self.targets(program, addr)
            .into_iter()
            .map(|s| self.segments[s])
            .reduce(Interval::hull)
            .unwrap_or(Interval::TOP)
    }
}

impl Domain for IntervalState {
    fn initial(program: &Program) -> Self {
        IntervalState {
            regs: [Interval::singleton(0); NUM_REGS],
            segments: program
                .data
                .iter()
                .map(|d| {
                    d.words
                        .iter()
                        .map(|&w| Interval::singleton(w))
                        .reduce(Interval::hull)
                        .unwrap_or(Interval::singleton(0))
                })
                .collect(),
        }
    }

    fn join(&mut self, other: &Self) {
        for (a, b) in self.regs.iter_mut().zip(&other.regs) {
            *a = a.hull(*b);
        }
        for (a, b) in self.segments.iter_mut().zip(&other.segments) {
            *a = a.hull(*b);
        }
    }

    fn widen(&mut self, next: &Self) {
        for (a, b) in self.regs.iter_mut().zip(&next.regs) {
            if a != b {
                *a = Interval::TOP;
            }
        }
        for (a, b) in self.segments.iter_mut().zip(&next.segments) {
            if a != b {
                *a = Interval::TOP;
            }
        }
    }

    fn transfer(&mut self, program: &Program, inst: &Instruction) {
        match &inst.op {
            Op::Alu { op, rd, ra, rb } => {
                self.regs[rd.index()] = alu(*op, self.reg(*ra), self.src(rb));
            }
            Op::Maccs { hi, lo, a, b } => {
                let (h, l) = maccs(self.reg(*hi), self.reg(*lo), self.reg(*a), self.reg(*b));
                self.regs[hi.index()] = h;
                self.regs[lo.index()] = l;
            }
            Op::Ldw { rd, addr } => {
                self.regs[rd.index()] = self.memory(program, addr);
            }
            Op::Stw { rs, addr } => {
                let v = self.reg(*rs);
                for s in self.targets(program, addr) {
                    self.segments[s] = self.segments[s].hull(v);
                }
            }
            Op::Ldc { rd, value } => {
                self.regs[rd.index()] = match value {
                    Const::Imm(v) => Interval::singleton(*v),
                    Const::Segment(name) => match program.segment_index(name) {
                        Some(i) => Interval::singleton(program.segment_base(i)),
                        None => Interval::TOP,
                    },
                };
            }
            Op::Mov { rd, rs } => self.regs[rd.index()] = self.reg(*rs),
            Op::In { rd } => self.regs[rd.index()] = Interval::TOP,
            Op::Nop | Op::Bt { .. } | Op::Bu { .. } | Op::Out { .. } | Op::Halt => {}
        }
    }

    fn refine(&self, inst: &Instruction, taken: bool) -> Option<Self> {
        let Op::Bt { cond, .. } = &inst.op else {
            return Some(self.clone());
        };
        let c = self.reg(*cond);
        let refined = if taken {
            match (c.lo, c.hi) {
                (0, 0) => return None,
                (0, hi) => Interval { lo: 1, hi },
                _ => c,
            }
        } else if c.lo == 0 {
            Interval::singleton(0)
        } else {
            return None;
        };
        let mut s = self.clone();
        s.regs[cond.index()] = refined;
        Some(s)
    }
}

/// `hi:lo += sext(a) * sext(b)` over intervals.
fn maccs(hi: Interval, lo: Interval, a: Interval, b: Interval) -> (Interval, Interval) {
    if let (Some(h), Some(l), Some(x), Some(y)) =
        (hi.singleton_value(), lo.singleton_value(), a.singleton_value(), b.singleton_value())
    {
        let acc = (u64::from(h) << 32 | u64::from(l)) as i64;
        let sum = acc.wrapping_add(i64::from(x as i32) * i64::from(y as i32)) as u64;
        return (Interval::singleton((sum >> 32) as u32), Interval::singleton(sum as u32));
    }
    // non-negative operands whose products never carry into the high word
    let non_negative = |i: Interval| i.hi <= i32::MAX as u32;
    if non_negative(a) && non_negative(b) {
        let pmin = u64::from(a.lo) * u64::from(b.lo);
        let pmax = u64::from(a.hi) * u64::from(b.hi);
        if u64::from(lo.hi) + pmax <= u64::from(u32::MAX) {
            return (hi, Interval::new(lo.lo + pmin as u32, lo.hi + pmax as u32));
        }
    }
    (Interval::TOP, Interval::TOP)
}

/// Interval state before every site; `None` for unreachable sites.
pub fn analyze_intervals(cfg: &Cfg, program: &Program) -> Vec<Option<IntervalState>> {
    solve(program, cfg)
}

/// Range of the raw value on each read port of `inst`, in port order.
pub fn site_port_intervals(program: &Program, inst: &Instruction, state: &IntervalState) -> Vec<Interval> {
    match &inst.op {
        Op::Alu { ra, rb, .. } => alloc::vec![state.reg(*ra), state.src(rb)],
        Op::Maccs { a, b, .. } => alloc::vec![state.reg(*a), state.reg(*b)],
        Op::Ldw { addr, .. } => alloc::vec![
            state.base(program, &addr.base),
            state.src(&addr.index),
            state.memory(program, addr)
        ],
        Op::Stw { rs, addr } => alloc::vec![
            state.base(program, &addr.base),
            state.src(&addr.index),
            state.reg(*rs)
        ],
        Op::Ldc { rd, .. } => {
            // the constant is what the destination holds afterwards
            let mut after = state.clone();
            after.transfer(program, inst);
            alloc::vec![after.reg(*rd)]
        }
        Op::Mov { rs, .. } | Op::Out { rs } => alloc::vec![state.reg(*rs)],
        Op::Bt { cond, .. } => alloc::vec![state.reg(*cond)],
        Op::In { .. } => alloc::vec![Interval::TOP],
        Op::Nop | Op::Bu { .. } | Op::Halt => Vec::new(),
    }
}
