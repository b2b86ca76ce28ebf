//! End to end: assembly text to a validated energy bound.

use wcec_core::analysis::PortClass;
use wcec_core::bench::{gen_fir, FirSpec};
use wcec_core::energy::{InterInstruction, OpcodeCost};
use wcec_core::wcec::{analyze_all, input_demand, max_counts, validate_bound, wcec_bound_threads};
use wcec_core::{parse_program, parse_threads, pretty_print, EnergyModel, Opcode, Program};

fn model() -> EnergyModel {
    let mut costs = [OpcodeCost { base_mw: 15.0, alpha_mw_per_bit: 0.8 }; Opcode::COUNT];
    costs[Opcode::Nop.index()].alpha_mw_per_bit = 0.0;
    costs[Opcode::Maccs.index()] = OpcodeCost { base_mw: 25.0, alpha_mw_per_bit: 3.0 };
    EnergyModel::from_table(200.0, 2.5, costs, InterInstruction::Constant(0.75)).unwrap()
}

fn bound_and_validate(programs: &[Program], threads: &[usize]) -> (f64, f64) {
    let m = model();
    let a = analyze_all(programs).unwrap();
    let b = wcec_bound_threads(programs, &a, threads, &m).unwrap();
    let demands: Vec<usize> = programs
        .iter()
        .zip(&a.programs)
        .map(|(p, pa)| input_demand(p, &max_counts(p, &pa.cfg).unwrap()))
        .collect();
    let v = validate_bound(programs, threads, &demands, &m, b.bound_total_nj, 16, 3).unwrap();
    assert!(v.pass, "{} > {}", v.max_observed_nj, v.bound_nj);
    (b.bound_total_nj, b.naive_bound_nj)
}

#[test]
fn fir_bound_is_sound_and_tighter_than_naive() {
    let mut spec = FirSpec::new(Opcode::Maccs, 3, false);
    spec.samples = 3;
    let p = gen_fir(&spec).unwrap();
    let (bound, naive) = bound_and_validate(std::slice::from_ref(&p), &[0, 0, 0]);
    assert!(bound < naive);
}

#[test]
fn printed_programs_parse_back() {
    for op in [Opcode::Maccs, Opcode::Nop, Opcode::Sub] {
        let p = gen_fir(&FirSpec::new(op, 2, true)).unwrap();
        assert_eq!(parse_program(&pretty_print(&p)).unwrap(), p);
    }
}

#[test]
fn multi_thread_file() {
    let text = "\
.thread 0
ldc r0, 4
top:
in r1
add r2, r1, r0
sub r0, r0, 1
.loopbound 4
bt r0, top
halt
.thread 1
ldc r0, 3
again:
xor r2, r0, r0
sub r0, r0, 1
.loopbound 3
bt r0, again
halt
";
    let programs = parse_threads(text).unwrap();
    assert_eq!(programs.len(), 2);
    bound_and_validate(&programs, &[0, 1]);
}

#[test]
fn taint_directive_marks_register_input() {
    let clean = parse_program("ldc r1, 3\nadd r2, r1, r1\nhalt").unwrap();
    let tainted = parse_program(".taint r5\nmov r1, r5\nadd r2, r1, r1\nhalt").unwrap();
    let c = analyze_all(std::slice::from_ref(&clean)).unwrap();
    let t = analyze_all(std::slice::from_ref(&tainted)).unwrap();
    assert!(c.classes[0][1].as_ref().unwrap().ports.iter().all(|p| !p.is_worst_case()));
    assert_eq!(t.classes[0][1].as_ref().unwrap().ports, [PortClass::Tainted, PortClass::Tainted]);
}
