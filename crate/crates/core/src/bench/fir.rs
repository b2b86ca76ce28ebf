//! The FIR benchmark in the toy ISA.

use alloc::string::String;
use core::fmt::Write;

use crate::isa::{parse_program, Opcode, Program};

/// Core operations the benchmark can be built around.
pub const CORE_OPS: [Opcode; 6] = [
    Opcode::Maccs,
    Opcode::Lmul,
    Opcode::Add,
    Opcode::Sub,
    Opcode::Xor,
    Opcode::Nop,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FirSpec {
    pub core_op: Opcode,
    /// Copies of the core op per tap, 1 to 7.
    pub repetitions: u32,
    /// Core op reads the loaded coefficient and sample rather than the
    /// loop iterator.
    pub dpath: bool,
    /// Window length.
    pub elements: u32,
    /// Output samples computed before halting.
    pub samples: u32,
}

impl FirSpec {
    pub fn new(core_op: Opcode, repetitions: u32, dpath: bool) -> FirSpec {
        FirSpec {
            core_op,
            repetitions,
            dpath,
            elements: 18,
            samples: 64,
        }
    }

    pub fn validate(&self) -> Result<(), FirError> {
        if !CORE_OPS.contains(&self.core_op) {
            return Err(FirError::UnsupportedOp(self.core_op));
        }
        if !(1..=7).contains(&self.repetitions) {
            return Err(FirError::Repetitions(self.repetitions));
        }
        if self.elements < 2 {
            return Err(FirError::Elements(self.elements));
        }
        if self.samples == 0 {
            return Err(FirError::Samples);
        }
        Ok(())
    }

    /// Words one thread reads: a coefficient and a sample per element, then
    /// one sample per output.
    pub fn input_len(&self) -> usize {
        2 * self.elements as usize + self.samples as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FirError {
    #[error("`{0}` cannot be the core operation")]
    UnsupportedOp(Opcode),
    #[error("repetitions must be between 1 and 7, got {0}")]
    Repetitions(u32),
    #[error("window needs at least 2 elements, got {0}")]
    Elements(u32),
    #[error("at least one output sample is needed")]
    Samples,
}

fn core_line(op: Opcode, a: &str, b: &str) -> String {
    match op {
        Opcode::Nop => String::from("nop"),
        Opcode::Maccs => alloc::format!("maccs r6, r7, {a}, {b}"),
        _ => alloc::format!("{} r3, {a}, {b}", op.name()),
    }
}

/// Assembly text of the benchmark.
///
/// Register use: r2 and r4 hold the `coeffs` and `state` bases, r8 the tap
/// index and then the loaded coefficient, r9 the next index, r10 the
/// shifted sample, r11 the newest sample, r6:r7 the accumulator and r5 the
/// output countdown.
pub fn fir_source(spec: &FirSpec) -> Result<String, FirError> {
    spec.validate()?;
    let e = spec.elements;
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, ".data coeffs {e}\n.data state {e}");
    let _ = writeln!(w, "ldc r2, coeffs\nldc r4, state\nldc r0, {e}");
    let _ = writeln!(w, "fill:\nsub r0, r0, 1\nin r1\nstw r1, r2[r0]\nin r1\nstw r1, r4[r0]\n.loopbound {e}\nbt r0, fill");
    let _ = writeln!(w, "ldc r5, {}", spec.samples);
    let _ = writeln!(w, "sample:\nin r11\nldc r6, 0\nldc r7, 0\nldc r8, {}", e - 1);
    let _ = writeln!(w, ".LBB0_1:\nsub r9, r8, 1\nldw r10, r4[r9]\nstw r10, r4[r8]\nldw r8, r2[r8]");
    let (a, b) = if spec.dpath { ("r8", "r10") } else { ("r9", "r9") };
    for _ in 0..spec.repetitions {
        let _ = writeln!(w, "{}", core_line(spec.core_op, a, b));
    }
    let _ = writeln!(w, "mov r8, r9\n.loopbound {}\nbt r9, .LBB0_1", e - 1);
    // tap 0 takes the newest sample
    let _ = writeln!(w, "stw r11, r4[r9]\nldw r8, r2[r9]");
    let (a, b) = if spec.dpath { ("r8", "r11") } else { ("r9", "r9") };
    for _ in 0..spec.repetitions {
        let _ = writeln!(w, "{}", core_line(spec.core_op, a, b));
    }
    let _ = writeln!(w, "out r6\nsub r5, r5, 1\n.loopbound {}\nbt r5, sample\nhalt", spec.samples);
    Ok(s)
}

pub fn gen_fir(spec: &FirSpec) -> Result<Program, FirError> {
    let src = fir_source(spec)?;
    Ok(parse_program(&src).expect("generated benchmark parses"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::PortClass;
    use crate::wcec::analyze_all;

    #[test]
    fn nop_loop_matches_listing() {
        let p = gen_fir(&FirSpec::new(Opcode::Nop, 1, false)).unwrap();
        let start = p.labels[".LBB0_1"];
        let ops: alloc::vec::Vec<Opcode> = p.instructions[start..start + 7].iter().map(|i| i.opcode()).collect();
        assert_eq!(
            ops,
            [Opcode::Sub, Opcode::Ldw, Opcode::Stw, Opcode::Ldw, Opcode::Nop, Opcode::Mov, Opcode::Bt]
        );
        assert_eq!(p.loop_bounds[&(start + 6)], 17);
        assert_eq!(p.instructions[start + 6].branch_target(), Some(start));
    }

    #[test]
    fn repetitions_sit_between_loads_and_mov() {
        let p = gen_fir(&FirSpec::new(Opcode::Maccs, 3, true)).unwrap();
        let start = p.labels[".LBB0_1"];
        let ops: alloc::vec::Vec<Opcode> = p.instructions[start + 3..start + 8].iter().map(|i| i.opcode()).collect();
        assert_eq!(ops, [Opcode::Ldw, Opcode::Maccs, Opcode::Maccs, Opcode::Maccs, Opcode::Mov]);
    }

    #[test]
    fn not_dpath_reads_the_iterator() {
        let src = fir_source(&FirSpec::new(Opcode::Add, 1, false)).unwrap();
        assert!(src.contains("add r3, r9, r9"));
        let src = fir_source(&FirSpec::new(Opcode::Add, 1, true)).unwrap();
        assert!(src.contains("add r3, r8, r10"));
    }

    #[test]
    fn invalid_specs() {
        assert_eq!(FirSpec::new(Opcode::Ldw, 1, true).validate(), Err(FirError::UnsupportedOp(Opcode::Ldw)));
        assert_eq!(FirSpec::new(Opcode::Add, 8, true).validate(), Err(FirError::Repetitions(8)));
        assert_eq!(FirSpec::new(Opcode::Add, 0, true).validate(), Err(FirError::Repetitions(0)));
        let mut s = FirSpec::new(Opcode::Add, 1, true);
        s.elements = 1;
        assert_eq!(gen_fir(&s), Err(FirError::Elements(1)));
    }

    #[test]
    fn iterator_ports_are_bounded() {
        for op in [Opcode::Maccs, Opcode::Lmul, Opcode::Add, Opcode::Xor] {
            let p = gen_fir(&FirSpec::new(op, 2, false)).unwrap();
            let a = analyze_all(core::slice::from_ref(&p)).unwrap();
            let site = p.instructions.iter().find(|i| i.opcode() == op).unwrap().site;
            let c = a.classes[0][site].as_ref().unwrap();
            assert_eq!(c.ports, [PortClass::Bounded(5), PortClass::Bounded(5)], "{op}");
        }
        let p = gen_fir(&FirSpec::new(Opcode::Maccs, 1, true)).unwrap();
        let a = analyze_all(core::slice::from_ref(&p)).unwrap();
        let site = p.instructions.iter().find(|i| i.opcode() == Opcode::Maccs).unwrap().site;
        assert_eq!(a.classes[0][site].as_ref().unwrap().ports, [PortClass::Tainted, PortClass::Tainted]);
    }

    #[test]
    fn deterministic() {
        let s = FirSpec::new(Opcode::Xor, 4, true);
        assert_eq!(fir_source(&s), fir_source(&s));
    }
}
