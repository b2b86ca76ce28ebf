use alloc::vec::Vec;

use proptest::prelude::*;
use rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

use super::*;
use crate::bench::{random_program, RandomProgramSpec};
use crate::energy::{EnergyModel, OpcodeCost};
use crate::isa::{parse_program, Opcode, Reg};
use crate::sim::{run, SimConfig};

const FIG3: &str = ".data state 18\n.data coeffs 18\n.taint state\n.taint coeffs\n\
ldc r4, state\nldc r2, coeffs\nldc r8, 17\n\
.LBB0_1:\nsub r9, r8, 1\nldw r10, r4[r9]\nstw r10, r4[r8]\nldw r8, r2[r8]\nnop\nmov r8, r9\n.loopbound 17\nbt r9, .LBB0_1\nhalt\n";

fn r(i: u8) -> Reg {
    Reg::new(i).unwrap()
}

fn model() -> EnergyModel {
    EnergyModel::uniform(200.0, 2.5, OpcodeCost { base_mw: 1.0, alpha_mw_per_bit: 0.1 }).unwrap()
}

fn classify_one(p: &Program) -> Vec<Option<SiteClass>> {
    let a = analyze_program(p).unwrap();
    classify_sites(&[(p, &a.taint, &a.intervals)]).remove(0)
}

#[test]
fn no_input_means_no_taint() {
    let p = parse_program("ldc r0, 3\nadd r1, r0, r0\nout r1\nhalt").unwrap();
    let a = analyze_program(&p).unwrap();
    assert!(a.taint.iter().flatten().all(|t| t.regs == 0));
}

#[test]
fn taint_through_memory_summary() {
    let p = parse_program(".data state 4\nin r0\nstw r0, state[r1]\nldw r2, state[r3]\nout r2\nhalt").unwrap();
    let a = analyze_program(&p).unwrap();
    assert!(a.taint[3].as_ref().unwrap().reg(r(2)));
    assert!(a.taint[2].as_ref().unwrap().segments[0]);
}

#[test]
fn fig3_taint() {
    let p = parse_program(FIG3).unwrap();
    let a = analyze_program(&p).unwrap();
    let at_nop = a.taint[7].as_ref().unwrap();
    assert!(at_nop.reg(r(10)));
    assert!(at_nop.reg(r(8)));
    assert!(!at_nop.reg(r(9)));
    // after `mov r8, r9` the iterator is clean again
    let at_bt = a.taint[9].as_ref().unwrap();
    assert!(!at_bt.reg(r(8)) && !at_bt.reg(r(9)));
    let at_sub = a.taint[3].as_ref().unwrap();
    assert!(!at_sub.reg(r(8)));
}

#[test]
fn ldc_gives_singleton() {
    let p = parse_program("ldc r1, 7\nnop").unwrap();
    let a = analyze_program(&p).unwrap();
    assert_eq!(a.intervals[1].as_ref().unwrap().reg(r(1)), Interval::singleton(7));
}

#[test]
fn input_gives_top() {
    let p = parse_program("in r3\nnop").unwrap();
    let a = analyze_program(&p).unwrap();
    assert!(a.intervals[1].as_ref().unwrap().reg(r(3)).is_top());
}

#[test]
fn fig3_counter_range() {
    let p = parse_program(FIG3).unwrap();
    let a = analyze_program(&p).unwrap();
    let at_bt = a.intervals[9].as_ref().unwrap();
    assert_eq!(at_bt.reg(r(9)), Interval::new(0, 16));
    assert_eq!(at_bt.reg(r(8)), Interval::new(0, 16));
    let at_sub = a.intervals[3].as_ref().unwrap();
    assert_eq!(at_sub.reg(r(8)), Interval::new(1, 17));
    // fell through: iterator is zero
    assert_eq!(a.intervals[10].as_ref().unwrap().reg(r(9)), Interval::singleton(0));
}

#[test]
fn counter_ports_are_bounded() {
    // core op on the iterator, as in the benchmark's fixed-data variant
    let src = FIG3.replace("nop\n", "add r6, r9, r9\n");
    let p = parse_program(&src).unwrap();
    let cls = classify_one(&p);
    let add = cls[7].as_ref().unwrap();
    assert_eq!(add.ports, [PortClass::Bounded(5), PortClass::Bounded(5)]);
    let nop = parse_program(FIG3).unwrap();
    assert!(classify_one(&nop)[7].as_ref().unwrap().ports.is_empty());
}

#[test]
fn input_ports_are_worst_case() {
    let p = parse_program("in r0\nadd r1, r0, 1\nhalt").unwrap();
    let cls = classify_one(&p);
    assert_eq!(cls[0].as_ref().unwrap().ports, [PortClass::Tainted]);
    assert_eq!(cls[1].as_ref().unwrap().ports, [PortClass::Tainted, PortClass::Bounded(1)]);
}

#[test]
fn clean_top_is_unbounded() {
    let p2 = parse_program("ldc r0, 4\nl:\nlmul r0, r0, r0\nxor r1, r0, 0\n.loopbound 300\nbt r0, l\nhalt").unwrap();
    let cls = classify_one(&p2);
    assert_eq!(cls[2].as_ref().unwrap().ports[0], PortClass::Unbounded);
}

#[test]
fn pooling_spans_sites_of_one_opcode() {
    // the second xor sees small values, but its port last held 0xFFFF
    let p = parse_program("ldc r0, 0xFFFF\nxor r1, r0, r0\nldc r0, 1\nxor r1, r0, r0\nhalt").unwrap();
    let cls = classify_one(&p);
    assert_eq!(cls[3].as_ref().unwrap().ports, [PortClass::Bounded(16), PortClass::Bounded(16)]);
}

#[test]
fn sub_reset_state_is_inverted() {
    let p = parse_program("ldc r0, 1\nsub r1, r0, r0\nhalt").unwrap();
    let cls = classify_one(&p);
    // port 1 goes from reset (effective 0) to !1
    assert_eq!(cls[1].as_ref().unwrap().ports, [PortClass::Bounded(1), PortClass::Bounded(32)]);
}

#[test]
fn unreachable_sites_are_unclassified() {
    let p = parse_program("bu end\nnop\nend:\nhalt").unwrap();
    let cls = classify_one(&p);
    assert!(cls[1].is_none());
    assert!(cls[2].is_some());
}

#[test]
fn infeasible_branch_edge_is_pruned() {
    let p = parse_program("ldc r0, 0\nbt r0, skip\nldc r1, 5\nskip:\nnop\nhalt").unwrap();
    let a = analyze_program(&p).unwrap();
    assert_eq!(a.intervals[3].as_ref().unwrap().reg(r(1)), Interval::singleton(5));
}

#[test]
fn nested_counters_restart() {
    let src = "ldc r10, 5\nouter:\nldc r11, 3\ninner:\nadd r0, r11, 0\nsub r11, r11, 1\n.loopbound 3\nbt r11, inner\nsub r10, r10, 1\n.loopbound 5\nbt r10, outer\nhalt";
    let p = parse_program(src).unwrap();
    let a = analyze_program(&p).unwrap();
    assert_eq!(a.intervals[2].as_ref().unwrap().reg(r(11)), Interval::new(1, 3));
    assert_eq!(a.intervals[5].as_ref().unwrap().reg(r(10)), Interval::new(1, 5));
}

#[test]
fn unbounded_loops_widen() {
    // bound too large to unroll: the counter widens to the full range
    let src = "ldc r0, 1000\nl:\nsub r0, r0, 1\n.loopbound 1000\nbt r0, l\nhalt";
    let p = parse_program(src).unwrap();
    let a = analyze_program(&p).unwrap();
    assert!(a.intervals[1].as_ref().unwrap().reg(r(0)).is_top());
}

/// Checks one random program against one concrete run.
fn check_soundness(seed: u64, input_seed: u64) -> Result<(), TestCaseError> {
    let spec = RandomProgramSpec::default();
    let src = random_program(&mut SplitMix64::seed_from_u64(seed), &spec);
    let p = parse_program(&src).unwrap();
    let a = analyze_program(&p).unwrap();
    let mut rng = SplitMix64::seed_from_u64(input_seed);
    let input: Vec<u32> = (0..2048).map(|_| rand_core::RngCore::next_u32(&mut rng)).collect();
    let result = run(&SimConfig::single(input), core::slice::from_ref(&p), &model()).unwrap();
    for e in result.trace.unwrap() {
        let inst = &p.instructions[e.site];
        let t = a.taint[e.site].as_ref().expect("executed site is reachable");
        let iv = a.intervals[e.site].as_ref().expect("executed site is reachable");
        let st = site_port_taint(&p, inst, t);
        let si = site_port_intervals(&p, inst, iv);
        prop_assert_eq!(st.len(), e.ports.len());
        for (k, &v) in e.ports.iter().enumerate() {
            prop_assert!(!e.port_tainted(k) || st[k], "site {} port {} tainted\n{}", e.site, k, src);
            prop_assert!(si[k].contains(v), "site {} port {} value {:#x} outside {}\n{}", e.site, k, v, si[k], src);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn analyses_are_sound(seed in any::<u64>(), input_seed in any::<u64>()) {
        check_soundness(seed, input_seed)?;
    }

    #[test]
    fn removing_taint_sources_is_monotone(seed in any::<u64>()) {
        let spec = RandomProgramSpec::default();
        let src = random_program(&mut SplitMix64::seed_from_u64(seed), &spec);
        let tainted = parse_program(&alloc::format!(".taint buf\n.taint r3\n{src}")).unwrap();
        let clean = parse_program(&src).unwrap();
        let (a, b) = (classify_one(&tainted), classify_one(&clean));
        for (x, y) in a.iter().zip(&b) {
            if let (Some(x), Some(y)) = (x, y) {
                for (px, py) in x.ports.iter().zip(&y.ports) {
                    prop_assert!(!(px.max_bits() < py.max_bits()));
                    prop_assert!(!(matches!(px, PortClass::Bounded(_)) && py.is_worst_case()));
                }
            }
        }
    }

    #[test]
    fn every_reachable_port_is_classified(seed in any::<u64>()) {
        let src = random_program(&mut SplitMix64::seed_from_u64(seed), &RandomProgramSpec::default());
        let p = parse_program(&src).unwrap();
        let a = analyze_program(&p).unwrap();
        let cls = classify_sites(&[(&p, &a.taint, &a.intervals)]).remove(0);
        for (site, c) in cls.iter().enumerate() {
            let reachable = a.cfg.is_reachable(a.cfg.block_of(site));
            prop_assert_eq!(c.is_some(), a.intervals[site].is_some());
            if reachable {
                if let Some(c) = c {
                    prop_assert_eq!(c.ports.len(), p.instructions[site].opcode().port_count());
                    prop_assert!(c.ports.iter().all(|p| p.max_bits() <= 32));
                }
            }
        }
        prop_assert!(cls.iter().flatten().all(|c| c.opcode != Opcode::Nop || c.ports.is_empty()));
    }
}
