//! Checks a bound against simulated runs.

use alloc::vec::Vec;
use core::fmt;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::energy::{EnergyModel, TraceEvent};
use crate::isa::{Opcode, Program};
use crate::sim::{run, SimConfig, SimError, ThreadConfig};

/// Input stream used by one validation run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialKind {
    Zeros,
    /// `0, !0, 0, ...`; odd threads start with `!0`.
    Alternating,
    /// Uniform words from the given seed.
    Random(u64),
}

impl fmt::Display for TrialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialKind::Zeros => f.write_str("zeros"),
            TrialKind::Alternating => f.write_str("alternating"),
            TrialKind::Random(s) => write!(f, "random({s:#x})"),
        }
    }
}

/// Words a run may read: each `in` site times its maximum count.
pub fn input_demand(program: &Program, counts: &[u64]) -> usize {
    program
        .instructions
        .iter()
        .filter(|i| i.opcode() == Opcode::In)
        .map(|i| counts[i.site] as usize)
        .sum()
}

pub fn trial_inputs(kind: TrialKind, thread: usize, len: usize) -> Vec<u32> {
    match kind {
        TrialKind::Zeros => alloc::vec![0; len],
        TrialKind::Alternating => (0..len)
            .map(|i| if (i + thread).is_multiple_of(2) { 0 } else { u32::MAX })
            .collect(),
        TrialKind::Random(seed) => {
            let mut rng = SplitMix64::seed_from_u64(seed ^ (thread as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            (0..len).map(|_| rng.next_u32()).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub kind: TrialKind,
    pub energy_nj: f64,
    pub cycles: u64,
}

/// One run that exceeded the bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub kind: TrialKind,
    pub inputs: Vec<Vec<u32>>,
    pub energy_nj: f64,
    pub bound_nj: f64,
    /// Leading events of the run.
    pub trace_excerpt: Vec<TraceEvent>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub bound_nj: f64,
    pub max_observed_nj: f64,
    pub trials: Vec<TrialOutcome>,
    pub pass: bool,
    pub counterexample: Option<Counterexample>,
}

const EXCERPT: usize = 64;

fn config(thread_programs: &[usize], demands: &[usize], kind: TrialKind, record_trace: bool) -> SimConfig {
    let threads: Vec<ThreadConfig> = thread_programs
        .iter()
        .enumerate()
        .map(|(k, &p)| ThreadConfig {
            program: p,
            input: trial_inputs(kind, k, demands[p]),
        })
        .collect();
    SimConfig {
        max_cycles: 1 << 32,
        threads,
        record_trace,
    }
}

/// Runs one trial. `demands` holds the input length of every program.
pub fn run_trial(
    programs: &[Program],
    thread_programs: &[usize],
    demands: &[usize],
    model: &EnergyModel,
    kind: TrialKind,
) -> Result<TrialOutcome, SimError> {
    let r = run(&config(thread_programs, demands, kind, false), programs, model)?;
    Ok(TrialOutcome {
        kind,
        energy_nj: r.report.total_energy_nj,
        cycles: r.report.cycles,
    })
}

/// The zero and alternating trials followed by `random` seeded ones.
pub fn trial_kinds(random: usize, seed: u64) -> Vec<TrialKind> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut kinds = alloc::vec![TrialKind::Zeros, TrialKind::Alternating];
    kinds.extend((0..random).map(|_| TrialKind::Random(rng.next_u64())));
    kinds
}

/// Folds finished trials into a report, rerunning the worst violating
/// trial with tracing for the counterexample.
pub fn summarize(
    programs: &[Program],
    thread_programs: &[usize],
    demands: &[usize],
    model: &EnergyModel,
    bound_nj: f64,
    trials: Vec<TrialOutcome>,
) -> Result<ValidationReport, SimError> {
    let worst = trials
        .iter()
        .max_by(|a, b| a.energy_nj.total_cmp(&b.energy_nj))
        .cloned();
    let max_observed_nj = worst.as_ref().map_or(0.0, |t| t.energy_nj);
    let pass = max_observed_nj <= bound_nj;
    let counterexample = match worst {
        Some(t) if !pass => {
            let cfg = config(thread_programs, demands, t.kind, true);
            let r = run(&cfg, programs, model)?;
            let mut trace = r.trace.unwrap_or_default();
            trace.truncate(EXCERPT);
            Some(Counterexample {
                kind: t.kind,
                inputs: cfg.threads.into_iter().map(|c| c.input).collect(),
                energy_nj: t.energy_nj,
                bound_nj,
                trace_excerpt: trace,
            })
        }
        _ => None,
    };
    Ok(ValidationReport {
        bound_nj,
        max_observed_nj,
        trials,
        pass,
        counterexample,
    })
}

/// Runs the zero, alternating and `random` random trials and compares the
/// largest observed energy with `bound_nj`.
pub fn validate_bound(
    programs: &[Program],
    thread_programs: &[usize],
    demands: &[usize],
    model: &EnergyModel,
    bound_nj: f64,
    random: usize,
    seed: u64,
) -> Result<ValidationReport, SimError> {
    let trials = trial_kinds(random, seed)
        .into_iter()
        .map(|k| run_trial(programs, thread_programs, demands, model, k))
        .collect::<Result<Vec<_>, _>>()?;
    summarize(programs, thread_programs, demands, model, bound_nj, trials)
}
