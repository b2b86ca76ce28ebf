//! Cycle-level execution on a round-robin multithreaded pipeline.
//!
//! Threads issue one instruction each in fixed rotation. The operand ports of
//! every functional unit and the previously issued opcode are shared by all
//! threads, so switching activity and transition costs cross thread
//! boundaries.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::energy::{
    event_cost, port_switching_metric, EnergyAccumulator, EnergyModel, EnergyReport, Ports,
    TraceError, TraceEvent,
};
use crate::isa::{Base, Const, MemRef, Op, Opcode, Program, Reg, Src, MAX_PORTS, NUM_REGS};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("thread {thread} site {site}: address {address:#x} is outside {segment}")]
    OutOfBounds {
        thread: usize,
        site: usize,
        segment: String,
        address: u32,
    },
    #[error("thread {thread} site {site}: input stream exhausted")]
    InputExhausted { thread: usize, site: usize },
    #[error("exceeded {limit} cycles")]
    MaxCycles { limit: u64 },
    #[error("thread {thread} refers to program {program}, which does not exist")]
    NoSuchProgram { thread: usize, program: usize },
    #[error("no threads configured")]
    NoThreads,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ThreadConfig {
    /// Index into the program list passed to [`run`].
    pub program: usize,
    pub input: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub max_cycles: u64,
    pub threads: Vec<ThreadConfig>,
    pub record_trace: bool,
}

impl SimConfig {
    pub fn single(input: Vec<u32>) -> Self {
        SimConfig {
            max_cycles: 10_000_000,
            threads: alloc::vec![ThreadConfig { program: 0, input }],
            record_trace: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadState {
    pub program: usize,
    pub regs: [u32; NUM_REGS],
    /// Bit `k` set when `rk` may hold input-derived data.
    pub reg_taint: u16,
    pub pc: usize,
    pub halted: bool,
    pub input: Vec<u32>,
    pub cursor: usize,
    pub outputs: Vec<u32>,
    /// One word array per data segment of the program.
    pub memory: Vec<Vec<u32>>,
    pub mem_taint: Vec<Vec<bool>>,
}

impl ThreadState {
    fn new(program_index: usize, program: &Program, input: Vec<u32>) -> Self {
        let mut reg_taint = 0u16;
        for r in &program.taint_sources.registers {
            reg_taint |= 1 << r.index();
        }
        let memory: Vec<Vec<u32>> = program.data.iter().map(|s| s.words.clone()).collect();
        let mem_taint = program
            .data
            .iter()
            .map(|s| alloc::vec![program.taint_sources.segments.contains(&s.name); s.words.len()])
            .collect();
        ThreadState {
            program: program_index,
            regs: [0; NUM_REGS],
            reg_taint,
            pc: 0,
            halted: false,
            input,
            cursor: 0,
            outputs: Vec::new(),
            memory,
            mem_taint,
        }
    }

    pub fn reg(&self, r: Reg) -> u32 {
        self.regs[r.index()]
    }

    pub fn tainted(&self, r: Reg) -> bool {
        self.reg_taint & (1 << r.index()) != 0
    }

    fn set(&mut self, r: Reg, value: u32, taint: bool) {
        self.regs[r.index()] = value;
        if taint {
            self.reg_taint |= 1 << r.index();
        } else {
            self.reg_taint &= !(1 << r.index());
        }
    }

    fn src(&self, s: &Src) -> (u32, bool) {
        match s {
            Src::Reg(r) => (self.reg(*r), self.tainted(*r)),
            Src::Imm(v) => (*v, false),
        }
    }
}

/// Pipeline state shared by all threads plus the threads themselves.
#[derive(Clone, Debug)]
pub struct Machine<'p> {
    programs: &'p [Program],
    threads: Vec<ThreadState>,
    /// Effective value last latched on each port of each opcode's unit.
    port_state: [[u32; MAX_PORTS]; Opcode::COUNT],
    last_opcode: Option<Opcode>,
    cycle: u64,
    next_thread: usize,
}

struct Effect {
    ports: Ports,
    taint: u8,
    next_pc: usize,
}

impl<'p> Machine<'p> {
    pub fn new(programs: &'p [Program], threads: &[ThreadConfig]) -> Result<Self, SimError> {
        if threads.is_empty() {
            return Err(SimError::NoThreads);
        }
        let mut states = Vec::with_capacity(threads.len());
        for (t, cfg) in threads.iter().enumerate() {
            let program = programs.get(cfg.program).ok_or(SimError::NoSuchProgram {
                thread: t,
                program: cfg.program,
            })?;
            states.push(ThreadState::new(cfg.program, program, cfg.input.clone()));
        }
        Ok(Machine {
            programs,
            threads: states,
            port_state: [[0; MAX_PORTS]; Opcode::COUNT],
            last_opcode: None,
            cycle: 0,
            next_thread: 0,
        })
    }

    pub fn threads(&self) -> &[ThreadState] {
        &self.threads
    }

    pub fn into_threads(self) -> Vec<ThreadState> {
        self.threads
    }

    /// Number of instructions issued so far.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn all_halted(&self) -> bool {
        self.threads.iter().all(|t| t.halted)
    }

    pub fn push_input(&mut self, thread: usize, word: u32) {
        self.threads[thread].input.push(word);
    }

    /// Issues the next instruction in round-robin order.
    ///
    /// Returns `None` once every thread has halted. On
    /// [`SimError::InputExhausted`] nothing has changed; supplying more input
    /// with [`Machine::push_input`] and stepping again resumes the run.
    pub fn step(&mut self, model: &EnergyModel) -> Result<Option<TraceEvent>, SimError> {
        let n = self.threads.len();
        let mut chosen = None;
        for k in 0..n {
            let t = (self.next_thread + k) % n;
            let th = &mut self.threads[t];
            if !th.halted && th.pc >= self.programs[th.program].len() {
                // ran off the end of the program
                th.halted = true;
            }
            if !th.halted {
                chosen = Some(t);
                break;
            }
        }
        let Some(t) = chosen else { return Ok(None) };

        let programs: &'p [Program] = self.programs;
        let program = &programs[self.threads[t].program];
        let site = self.threads[t].pc;
        let inst = &program.instructions[site];
        let opcode = inst.opcode();
        let effect = execute(&mut self.threads[t], program, t, site, &inst.op)?;

        let state = &mut self.port_state[opcode.index()];
        let switching_bits = port_switching_metric(effect.ports.as_slice(), &state[..effect.ports.len()], opcode);
        for (i, &v) in effect.ports.iter().enumerate() {
            state[i] = opcode.effective_port_value(i, v);
        }
        let event = TraceEvent {
            cycle: self.cycle,
            thread: t,
            site,
            opcode,
            prev_opcode: self.last_opcode,
            ports: effect.ports,
            switching_bits,
            cost_mw: event_cost(opcode, switching_bits, self.last_opcode, model),
            tainted_ports: effect.taint,
        };
        self.threads[t].pc = effect.next_pc;
        self.last_opcode = Some(opcode);
        self.cycle += 1;
        self.next_thread = (t + 1) % n;
        Ok(Some(event))
    }
}

fn segment_of(program: &Program, name: &str, thread: usize, site: usize) -> Result<usize, SimError> {
    program.segment_index(name).ok_or_else(|| SimError::OutOfBounds {
        thread,
        site,
        segment: String::from(name),
        address: 0,
    })
}

/// Resolves `addr` to (segment, offset) and its port values and taint.
#[allow(clippy::type_complexity)]
fn address(
    th: &ThreadState,
    program: &Program,
    addr: &MemRef,
    thread: usize,
    site: usize,
) -> Result<((usize, usize), [u32; 2], bool), SimError> {
    let (index, index_taint) = th.src(&addr.index);
    match &addr.base {
        Base::Segment(name) => {
            let seg = segment_of(program, name, thread, site)?;
            let base = program.segment_base(seg);
            if (index as usize) < program.data[seg].words.len() {
                Ok(((seg, index as usize), [base, index], index_taint))
            } else {
                Err(SimError::OutOfBounds {
                    thread,
                    site,
                    segment: name.clone(),
                    address: base.wrapping_add(index),
                })
            }
        }
        Base::Reg(r) => {
            let base = th.reg(*r);
            let a = base.wrapping_add(index);
            let loc = program.resolve_address(a).ok_or_else(|| SimError::OutOfBounds {
                thread,
                site,
                segment: String::from("data memory"),
                address: a,
            })?;
            Ok((loc, [base, index], th.tainted(*r) || index_taint))
        }
    }
}

fn taint_bits(bits: &[bool]) -> u8 {
    bits.iter().enumerate().fold(0, |acc, (i, &b)| acc | (u8::from(b) << i))
}

fn execute(th: &mut ThreadState, program: &Program, thread: usize, site: usize, op: &Op) -> Result<Effect, SimError> {
    let mut next_pc = site + 1;
    let (ports, taint) = match op {
        Op::Alu { op, rd, ra, rb } => {
            let (a, ta) = (th.reg(*ra), th.tainted(*ra));
            let (b, tb) = th.src(rb);
            th.set(*rd, op.apply(a, b), ta || tb);
            (Ports::new(&[a, b]), taint_bits(&[ta, tb]))
        }
        Op::Maccs { hi, lo, a, b } => {
            let (x, tx) = (th.reg(*a), th.tainted(*a));
            let (y, ty) = (th.reg(*b), th.tainted(*b));
            let acc = (u64::from(th.reg(*hi)) << 32 | u64::from(th.reg(*lo))) as i64;
            let sum = acc.wrapping_add(i64::from(x as i32) * i64::from(y as i32)) as u64;
            let t = tx || ty || th.tainted(*hi) || th.tainted(*lo);
            th.set(*hi, (sum >> 32) as u32, t);
            th.set(*lo, sum as u32, t);
            (Ports::new(&[x, y]), taint_bits(&[tx, ty]))
        }
        Op::Ldw { rd, addr } => {
            let ((seg, off), [base, index], addr_taint) = address(th, program, addr, thread, site)?;
            let (base_taint, index_taint) = port_taints(th, addr);
            let word = th.memory[seg][off];
            let wt = th.mem_taint[seg][off];
            th.set(*rd, word, addr_taint || wt);
            (Ports::new(&[base, index, word]), taint_bits(&[base_taint, index_taint, wt]))
        }
        Op::Stw { rs, addr } => {
            let ((seg, off), [base, index], addr_taint) = address(th, program, addr, thread, site)?;
            let (base_taint, index_taint) = port_taints(th, addr);
            let (v, tv) = (th.reg(*rs), th.tainted(*rs));
            th.memory[seg][off] = v;
            th.mem_taint[seg][off] = tv || addr_taint;
            (Ports::new(&[base, index, v]), taint_bits(&[base_taint, index_taint, tv]))
        }
        Op::Ldc { rd, value } => {
            let v = match value {
                Const::Imm(v) => *v,
                Const::Segment(name) => program.segment_base(segment_of(program, name, thread, site)?),
            };
            th.set(*rd, v, false);
            (Ports::new(&[v]), 0)
        }
        Op::Mov { rd, rs } => {
            let (v, t) = (th.reg(*rs), th.tainted(*rs));
            th.set(*rd, v, t);
            (Ports::new(&[v]), taint_bits(&[t]))
        }
        Op::Nop => (Ports::default(), 0),
        Op::Bt { cond, target } => {
            let (v, t) = (th.reg(*cond), th.tainted(*cond));
            if v != 0 {
                next_pc = target.index;
            }
            (Ports::new(&[v]), taint_bits(&[t]))
        }
        Op::Bu { target } => {
            next_pc = target.index;
            (Ports::default(), 0)
        }
        Op::In { rd } => {
            let v = *th
                .input
                .get(th.cursor)
                .ok_or(SimError::InputExhausted { thread, site })?;
            th.cursor += 1;
            th.set(*rd, v, true);
            (Ports::new(&[v]), 1)
        }
        Op::Out { rs } => {
            let (v, t) = (th.reg(*rs), th.tainted(*rs));
            th.outputs.push(v);
            (Ports::new(&[v]), taint_bits(&[t]))
        }
        Op::Halt => {
            th.halted = true;
            (Ports::default(), 0)
        }
    };
    Ok(Effect { ports, taint, next_pc })
}

fn port_taints(th: &ThreadState, addr: &MemRef) -> (bool, bool) {
    let base = match &addr.base {
        Base::Reg(r) => th.tainted(*r),
        Base::Segment(_) => false,
    };
    (base, th.src(&addr.index).1)
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub report: EnergyReport,
    pub trace: Option<Vec<TraceEvent>>,
    pub threads: Vec<ThreadState>,
}

/// Runs every configured thread to completion.
pub fn run(config: &SimConfig, programs: &[Program], model: &EnergyModel) -> Result<RunResult, SimError> {
    let mut machine = Machine::new(programs, &config.threads)?;
    let mut acc = EnergyAccumulator::new(model);
    let mut trace = config.record_trace.then(Vec::new);
    while let Some(event) = machine.step(model)? {
        acc.push(&event)?;
        if let Some(t) = trace.as_mut() {
            t.push(event);
        }
        let runnable = machine
            .threads
            .iter()
            .any(|t| !t.halted && t.pc < programs[t.program].len());
        if runnable && machine.cycle() >= config.max_cycles {
            return Err(SimError::MaxCycles {
                limit: config.max_cycles,
            });
        }
    }
    Ok(RunResult {
        report: acc.finish()?,
        trace,
        threads: machine.into_threads(),
    })
}

/// Sites that executed with at least one tainted port.
pub fn dynamic_taint_report(trace: &[TraceEvent]) -> BTreeSet<usize> {
    trace
        .iter()
        .filter(|e| e.tainted_ports != 0)
        .map(|e| e.site)
        .collect()
}

/// [`dynamic_taint_report`] restricted to one thread.
pub fn dynamic_taint_report_for(trace: &[TraceEvent], thread: usize) -> BTreeSet<usize> {
    trace
        .iter()
        .filter(|e| e.thread == thread && e.tainted_ports != 0)
        .map(|e| e.site)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{trace_energy, OpcodeCost};
    use crate::isa::parse_program;
    use proptest::prelude::*;

    fn model() -> EnergyModel {
        EnergyModel::uniform(200.0, 2.5, OpcodeCost { base_mw: 1.0, alpha_mw_per_bit: 0.5 }).unwrap()
    }

    fn run_one(src: &str, input: &[u32]) -> RunResult {
        let p = parse_program(src).unwrap();
        run(&SimConfig::single(input.to_vec()), &[p], &model()).unwrap()
    }

    #[test]
    fn nop_changes_nothing() {
        let r = run_one("nop", &[]);
        let trace = r.trace.unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].switching_bits, 0);
        assert_eq!(r.threads[0].regs, [0; NUM_REGS]);
        assert_eq!(r.threads[0].reg_taint, 0);
    }

    #[test]
    fn halt_is_one_nop_priced_event() {
        let r = run_one("halt", &[]);
        assert_eq!(r.report.cycles, 1);
        assert_eq!(r.report.avg_power_mw, 201.0);
    }

    #[test]
    fn taint_flows_through_alu() {
        let r = run_one("in r0\nadd r1, r0, r2\nadd r3, r2, 1\nhalt", &[5]);
        let th = &r.threads[0];
        assert!(th.tainted(Reg::new(1).unwrap()));
        assert!(!th.tainted(Reg::new(3).unwrap()));
        assert_eq!(th.regs[1], 5);
    }

    #[test]
    fn maccs_switching_and_accumulate() {
        let src = "ldc r0, 0xFF\nldc r1, 0xF\nmaccs r2, r3, r0, r1\nmaccs r2, r3, r0, r1\nldc r4, -1\nmaccs r2, r3, r4, r1\nhalt";
        let r = run_one(src, &[]);
        let trace = r.trace.unwrap();
        assert_eq!(trace[2].switching_bits, 12);
        assert_eq!(trace[3].switching_bits, 0);
        // 2 * 255 * 15 - 15
        assert_eq!(r.threads[0].regs[3], 7635);
        assert_eq!(r.threads[0].regs[2], 0);
        let r = run_one("ldc r0, -1\nldc r1, 1\nmaccs r2, r3, r0, r1\nhalt", &[]);
        assert_eq!((r.threads[0].regs[2], r.threads[0].regs[3]), (u32::MAX, u32::MAX));
    }

    #[test]
    fn round_robin_alternates() {
        let p = parse_program(&"nop\n".repeat(10)).unwrap();
        let cfg = SimConfig {
            max_cycles: 100,
            threads: alloc::vec![ThreadConfig::default(), ThreadConfig::default()],
            record_trace: true,
        };
        let r = run(&cfg, &[p], &model()).unwrap();
        let trace = r.trace.unwrap();
        assert_eq!(trace.len(), 20);
        for (i, e) in trace.iter().enumerate() {
            assert_eq!(e.thread, i % 2);
            assert_eq!(e.cycle, i as u64);
        }
    }

    #[test]
    fn halted_threads_leave_the_rotation() {
        let short = parse_program("nop\nhalt").unwrap();
        let long = parse_program(&"nop\n".repeat(5)).unwrap();
        let cfg = SimConfig {
            max_cycles: 100,
            threads: alloc::vec![
                ThreadConfig { program: 0, input: Vec::new() },
                ThreadConfig { program: 1, input: Vec::new() },
            ],
            record_trace: true,
        };
        let r = run(&cfg, &[short, long], &model()).unwrap();
        let threads: Vec<usize> = r.trace.unwrap().iter().map(|e| e.thread).collect();
        assert_eq!(threads, [0, 1, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn errors() {
        let p = parse_program(".data a 2\nldc r0, 2\nldw r1, a[r0]").unwrap();
        assert!(matches!(
            run(&SimConfig::single(Vec::new()), &[p], &model()),
            Err(SimError::OutOfBounds { site: 1, .. })
        ));
        let p = parse_program("in r0").unwrap();
        assert_eq!(
            run(&SimConfig::single(Vec::new()), &[p], &model()).unwrap_err(),
            SimError::InputExhausted { thread: 0, site: 0 }
        );
        let p = parse_program("l:\n.loopbound 3\nbu l").unwrap();
        let mut cfg = SimConfig::single(Vec::new());
        cfg.max_cycles = 50;
        assert_eq!(run(&cfg, &[p], &model()).unwrap_err(), SimError::MaxCycles { limit: 50 });
    }

    #[test]
    fn input_exhaustion_is_resumable() {
        let p = [parse_program("in r0\nin r1\nout r1\nhalt").unwrap()];
        let m = model();
        let mut machine = Machine::new(&p, &[ThreadConfig { program: 0, input: alloc::vec![1] }]).unwrap();
        assert!(machine.step(&m).unwrap().is_some());
        assert!(matches!(machine.step(&m), Err(SimError::InputExhausted { site: 1, .. })));
        assert_eq!(machine.cycle(), 1);
        machine.push_input(0, 9);
        while machine.step(&m).unwrap().is_some() {}
        assert_eq!(machine.threads()[0].outputs, [9]);
    }

    #[test]
    fn memory_via_register_base() {
        let src = ".data a 2\n.data b 3\nldc r0, b\nldc r1, 7\nstw r1, r0[2]\nldw r2, b[2]\nldw r3, r0[-2]\nhalt";
        let r = run_one(src, &[]);
        assert_eq!(r.threads[0].memory[1], [0, 0, 7]);
        assert_eq!(r.threads[0].regs[2], 7);
        let trace = r.trace.unwrap();
        // r0[-2] wraps back into segment a
        assert_eq!(trace[4].ports.as_slice(), [0x102, (-2i32) as u32, 0]);
    }

    #[test]
    fn taint_report_chain() {
        let r = run_one("in r0\nmov r1, r0\nout r1\nhalt", &[3]);
        assert_eq!(dynamic_taint_report(&r.trace.unwrap()), BTreeSet::from([0, 1, 2]));
        let r = run_one("ldc r0, 1\nout r0\nhalt", &[]);
        assert!(dynamic_taint_report(&r.trace.unwrap()).is_empty());
    }

    #[test]
    fn fir_loop_with_tainted_state() {
        let src = ".data state 18\n.data coeffs 18\n.taint state\nldc r4, state\nldc r2, coeffs\nldc r8, 17\n\
                   .LBB0_1:\nsub r9, r8, 1\nldw r10, r4[r9]\nstw r10, r4[r8]\nldw r8, r2[r8]\nmaccs r6, r7, r8, r10\nmov r8, r9\n.loopbound 17\nbt r9, .LBB0_1\nhalt";
        let r = run_one(src, &[]);
        let sites = dynamic_taint_report(&r.trace.unwrap());
        assert_eq!(sites, BTreeSet::from([4, 5, 7]));
    }

    #[test]
    fn zero_inputs_only_switch_sub() {
        let src = "in r0\nin r1\nadd r2, r0, r1\nsub r3, r0, r1\nsub r3, r0, r1\nxor r4, r2, r3\nhalt";
        let trace = run_one(src, &[0, 0]).trace.unwrap();
        let bits: Vec<u32> = trace.iter().map(|e| e.switching_bits).collect();
        assert_eq!(bits, [0, 0, 0, 32, 0, 0, 0]);
    }

    fn arb_program() -> impl Strategy<Value = String> {
        let line = prop_oneof![
            (0..4u8, 0..4u8, 0..4u8).prop_map(|(d, a, b)| alloc::format!("add r{d}, r{a}, r{b}")),
            (0..4u8, 0..4u8, 0..4u8).prop_map(|(d, a, b)| alloc::format!("sub r{d}, r{a}, r{b}")),
            (0..4u8, 0..4u8, 0..4u8).prop_map(|(d, a, b)| alloc::format!("maccs r{d}, r{a}, r{b}, r{a}")),
            (0..4u8, 0..4u8).prop_map(|(d, a)| alloc::format!("mov r{d}, r{a}")),
            (0..4u8).prop_map(|d| alloc::format!("in r{d}")),
            Just(String::from("nop")),
        ];
        prop::collection::vec(line, 1..30).prop_map(|v| v.join("\n"))
    }

    proptest! {
        #[test]
        fn deterministic_and_consistent(src in arb_program(), input in prop::collection::vec(any::<u32>(), 30), threads in 1usize..4) {
            let p = [parse_program(&src).unwrap()];
            let m = model();
            let cfg = SimConfig {
                max_cycles: 1000,
                threads: (0..threads).map(|_| ThreadConfig { program: 0, input: input.clone() }).collect(),
                record_trace: true,
            };
            let a = run(&cfg, &p, &m).unwrap();
            let b = run(&cfg, &p, &m).unwrap();
            let trace = a.trace.unwrap();
            prop_assert_eq!(&trace, &b.trace.unwrap());
            for e in &trace {
                prop_assert_eq!(e.cost_mw, event_cost(e.opcode, e.switching_bits, e.prev_opcode, &m));
                prop_assert!(e.switching_bits <= 32 * e.opcode.port_count() as u32);
            }
            prop_assert_eq!(trace_energy(&trace, &m).unwrap(), a.report);
            // round robin: every other live thread runs between two events of t
            for t in 0..threads {
                let idx: Vec<usize> = trace.iter().enumerate().filter(|(_, e)| e.thread == t).map(|(i, _)| i).collect();
                for w in idx.windows(2) {
                    let between: BTreeSet<usize> = trace[w[0] + 1..w[1]].iter().map(|e| e.thread).collect();
                    prop_assert_eq!(between.len(), w[1] - w[0] - 1);
                }
            }
        }
    }
}
