//! Parallel drivers for the experiment tables, calibration and bound
//! validation. Cells and trials are independent, so they run on the rayon
//! pool; results come back in the same order as the sequential versions.

use rayon::prelude::*;
use wcec_core::bench::{
    assemble_design, design_cells, feature_model, gen_fir, measure_cell, Cell, ExperimentConfig,
    ExperimentError, FirSpec, TableId, TableLayout, TableResult, CORE_OPS,
};
use wcec_core::energy::{fit_model, FitDesign, FitReport, MeasurementTable};
use wcec_core::sim::SimError;
use wcec_core::wcec::{
    analyze_all, input_demand, max_counts, run_trial, summarize, trial_kinds, wcec_bound_threads, ThreadsBound,
    ValidationReport,
};
use wcec_core::{EnergyModel, Opcode, Program};

use crate::Error;

pub fn run_table(table: TableId, model: &EnergyModel, config: &ExperimentConfig, seed: u64) -> Result<TableResult, ExperimentError> {
    let layout = TableLayout::new(table);
    let values = layout
        .cells()
        .par_iter()
        .map(|c| measure_cell(c, model, config, seed).map(|m| m.avg_power_mw))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layout.assemble(&values))
}

pub fn simulated_design(
    rows: &[Opcode],
    config: &ExperimentConfig,
    seed: u64,
    base_power_mw: f64,
    cycle_time_ns: f64,
) -> Result<FitDesign, ExperimentError> {
    let model = feature_model(base_power_mw, cycle_time_ns);
    let cells: Vec<Cell> = design_cells(rows);
    let features = cells
        .par_iter()
        .map(|c| measure_cell(c, &model, config, seed).map(|m| m.features))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_design(rows, &features, base_power_mw, cycle_time_ns))
}

/// Fits a model to `table`, taking the activity of every cell from
/// simulating the benchmark under the same configuration.
pub fn calibrate(
    table: &MeasurementTable,
    config: &ExperimentConfig,
    seed: u64,
    base_power_mw: f64,
    cycle_time_ns: f64,
) -> Result<(EnergyModel, FitReport), Error> {
    let rows: Vec<Opcode> = table.rows().iter().map(|r| r.opcode).collect();
    let design = simulated_design(&rows, config, seed, base_power_mw, cycle_time_ns)?;
    Ok(fit_model(table, &design)?)
}

pub fn validate(
    programs: &[Program],
    thread_programs: &[usize],
    demands: &[usize],
    model: &EnergyModel,
    bound_nj: f64,
    random: usize,
    seed: u64,
) -> Result<ValidationReport, SimError> {
    let trials = trial_kinds(random, seed)
        .into_par_iter()
        .map(|k| run_trial(programs, thread_programs, demands, model, k))
        .collect::<Result<Vec<_>, _>>()?;
    summarize(programs, thread_programs, demands, model, bound_nj, trials)
}

/// Bound and, optionally, validation of a set of threads.
#[derive(Clone, Debug)]
pub struct BoundCheck {
    pub bound: ThreadsBound,
    /// Input words each program can read at most.
    pub demands: Vec<usize>,
    pub validation: Option<ValidationReport>,
}

/// Bounds `programs` run by `thread_programs` and, with `random` set,
/// validates the bound with that many random trials on top of the zero and
/// alternating ones.
pub fn check_bound(
    programs: &[Program],
    thread_programs: &[usize],
    model: &EnergyModel,
    random: Option<usize>,
    seed: u64,
) -> Result<BoundCheck, Error> {
    let analyzed = analyze_all(programs)?;
    let bound = wcec_bound_threads(programs, &analyzed, thread_programs, model)?;
    let demands = programs
        .iter()
        .zip(&analyzed.programs)
        .map(|(p, a)| max_counts(p, &a.cfg).map(|c| input_demand(p, &c)))
        .collect::<Result<Vec<_>, _>>()?;
    let validation = match random {
        Some(n) => Some(validate(programs, thread_programs, &demands, model, bound.bound_total_nj, n, seed)?),
        None => None,
    };
    Ok(BoundCheck { bound, demands, validation })
}

/// Every benchmark variant: each core op, with and without data operands,
/// at 1 to 7 repetitions.
pub fn fir_family(samples: u32) -> Vec<FirSpec> {
    let mut specs = Vec::new();
    for op in CORE_OPS {
        for dpath in [true, false] {
            for reps in 1..=7 {
                let mut s = FirSpec::new(op, reps, dpath);
                s.samples = samples;
                specs.push(s);
            }
        }
    }
    specs
}

/// [`check_bound`] for `threads` copies of one benchmark variant.
pub fn check_fir(spec: &FirSpec, model: &EnergyModel, threads: usize, random: Option<usize>, seed: u64) -> Result<BoundCheck, Error> {
    let program = gen_fir(spec)?;
    check_bound(std::slice::from_ref(&program), &vec![0; threads], model, random, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wcec_core::bench::run_table as run_table_seq;
    use wcec_core::energy::OpcodeCost;

    fn model() -> EnergyModel {
        let mut costs = std::collections::BTreeMap::new();
        for op in Opcode::ALL {
            let alpha = if op.priced_as() == Opcode::Nop { 0.0 } else { 0.5 };
            costs.insert(op, OpcodeCost { base_mw: 10.0, alpha_mw_per_bit: alpha });
        }
        EnergyModel::new(200.0, 2.5, &costs, Default::default()).unwrap()
    }

    fn small() -> ExperimentConfig {
        ExperimentConfig { threads: 2, window_cycles: 1500, runs: 2 }
    }

    #[test]
    fn parallel_table_matches_sequential() {
        let m = model();
        let par = run_table(TableId::Two, &m, &small(), 5).unwrap();
        let seq = run_table_seq(TableId::Two, &m, &small(), 5).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn family_has_every_variant() {
        let f = fir_family(4);
        assert_eq!(f.len(), 84);
        assert!(f.iter().all(|s| s.samples == 4 && s.validate().is_ok()));
    }

    #[test]
    fn small_fir_bound_holds() {
        let mut spec = FirSpec::new(Opcode::Maccs, 2, true);
        spec.samples = 3;
        let c = check_fir(&spec, &model(), 2, Some(8), 1).unwrap();
        let v = c.validation.unwrap();
        assert!(v.pass, "{} > {}", v.max_observed_nj, v.bound_nj);
        assert_eq!(v.trials.len(), 10);
        assert_eq!(c.demands, [2 * 18 + 3]);
    }
}
