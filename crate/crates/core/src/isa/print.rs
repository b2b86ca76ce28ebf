use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use super::{Base, Const, Instruction, MemRef, Op, Program, Src};

impl fmt::Display for Src {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Src::Reg(r) => write!(f, "{r}"),
            Src::Imm(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.base {
            Base::Reg(r) => write!(f, "{r}[{}]", self.index),
            Base::Segment(s) => write!(f, "{s}[{}]", self.index),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.opcode().name();
        match &self.op {
            Op::Alu { rd, ra, rb, .. } => write!(f, "{name} {rd}, {ra}, {rb}"),
            Op::Maccs { hi, lo, a, b } => write!(f, "{name} {hi}, {lo}, {a}, {b}"),
            Op::Ldw { rd, addr } => write!(f, "{name} {rd}, {addr}"),
            Op::Stw { rs, addr } => write!(f, "{name} {rs}, {addr}"),
            Op::Ldc { rd, value } => match value {
                Const::Imm(v) => write!(f, "{name} {rd}, {v}"),
                Const::Segment(s) => write!(f, "{name} {rd}, {s}"),
            },
            Op::Mov { rd, rs } => write!(f, "{name} {rd}, {rs}"),
            Op::Bt { cond, target } => write!(f, "{name} {cond}, {}", target.label),
            Op::Bu { target } => write!(f, "{name} {}", target.label),
            Op::In { rd } => write!(f, "{name} {rd}"),
            Op::Out { rs } => write!(f, "{name} {rs}"),
            Op::Nop | Op::Halt => f.write_str(name),
        }
    }
}

/// Prints `program` in the assembly format accepted by
/// [`parse_program`](super::parse_program).
pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    for seg in &program.data {
        let _ = write!(out, ".data {} {}", seg.name, seg.words.len());
        let used = seg.words.iter().rposition(|&w| w != 0).map_or(0, |i| i + 1);
        if used > 0 {
            out.push_str(" =");
            for w in &seg.words[..used] {
                let _ = write!(out, " {w}");
            }
        }
        out.push('\n');
    }
    for r in &program.taint_sources.registers {
        let _ = writeln!(out, ".taint {r}");
    }
    for s in &program.taint_sources.segments {
        let _ = writeln!(out, ".taint {s}");
    }

    let mut labels_at: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (name, &idx) in &program.labels {
        labels_at.entry(idx).or_default().push(name);
    }
    for inst in &program.instructions {
        if let Some(names) = labels_at.get(&inst.site) {
            for name in names {
                let _ = writeln!(out, "{name}:");
            }
        }
        if let Some(bound) = program.loop_bounds.get(&inst.site) {
            let _ = writeln!(out, ".loopbound {bound}");
        }
        let _ = writeln!(out, "{inst}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;

    #[test]
    fn nop_prints_bare() {
        let p = parse_program("nop").unwrap();
        assert_eq!(pretty_print(&p), "nop\n");
    }

    #[test]
    fn loop_bound_precedes_branch() {
        let src = "ldc r8, 17\nloop:\nsub r9, r8, 1\nmov r8, r9\n.loopbound 17\nbt r9, loop\nhalt\n";
        let p = parse_program(src).unwrap();
        let text = pretty_print(&p);
        let lines: Vec<&str> = text.lines().collect();
        let bt = lines.iter().position(|l| l.starts_with("bt ")).unwrap();
        assert_eq!(lines[bt - 1], ".loopbound 17");
        assert_eq!(parse_program(&text).unwrap(), p);
    }

    #[test]
    fn data_segment_round_trip() {
        let values: Vec<String> = (1..=18).map(|v| alloc::format!("{v}")).collect();
        let src = alloc::format!(".data state 18 = {}\n.data coeffs 18\nhalt\n", values.join(" "));
        let p = parse_program(&src).unwrap();
        let text = pretty_print(&p);
        assert!(text.starts_with(".data state 18 = 1 2 3"));
        assert!(text.contains(".data coeffs 18\n"));
        assert_eq!(parse_program(&text).unwrap(), p);
    }
}
