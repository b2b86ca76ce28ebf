//! The FIR benchmark family, its input patterns and experiment tables.

mod experiment;
mod fir;
mod pattern;
mod random;

pub use experiment::{
    assemble_design, design_cells, feature_model, measure_cell, row_label, run_cell, run_seeds, run_table,
    simulated_design, thread_inputs, Cell, CellMeasurement, CellRun, ExperimentConfig, ExperimentError, TableId,
    TableLayout, TableResult,
};
pub use fir::{fir_source, gen_fir, FirError, FirSpec, CORE_OPS};
pub use pattern::{gen_pattern, mean_consecutive_hamming, signal_sample, PatternSpec, SIGNAL_AMPLITUDE, SIGNAL_PERIOD};
pub use random::{random_program, RandomProgramSpec};
