//! Simulated reruns of the measurement tables.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::fir::{gen_fir, FirError, FirSpec, CORE_OPS};
use super::pattern::{gen_pattern, PatternSpec};
use crate::energy::{
    trace_energy, CellFeatures, EnergyModel, FitDesign, MeasurementRow, MeasurementTable, OpcodeCost, Pattern,
    TraceError, TraceEvent,
};
use crate::isa::Opcode;
use crate::sim::{Machine, SimError, ThreadConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExperimentConfig {
    /// Identical benchmark threads sharing the pipeline.
    pub threads: usize,
    /// Pipeline cycles averaged per run.
    pub window_cycles: u64,
    /// Runs averaged per cell.
    pub runs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            threads: 7,
            window_cycles: 16_000,
            runs: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Fir(#[from] FirError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("benchmark finished before the {window}-cycle window closed; raise the sample count")]
    WindowTooShort { window: u64 },
    #[error("no threads configured")]
    NoThreads,
}

/// One benchmark configuration under one input pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub fir: FirSpec,
    pub pattern: Pattern,
}

/// Per-thread input streams. Thread `k` reads the pattern from sample `k`
/// on, so neighbouring threads are one sample apart.
pub fn thread_inputs(pattern: Pattern, len: usize, threads: usize, seed: u64) -> Vec<Vec<u32>> {
    let words = gen_pattern(&PatternSpec {
        kind: pattern,
        length: len + threads,
        seed,
    });
    (0..threads).map(|k| words[k..k + len].to_vec()).collect()
}

/// Seeds of the `runs` runs of a cell.
pub fn run_seeds(seed: u64, runs: usize) -> Vec<u64> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    (0..runs).map(|_| rng.next_u64()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellRun {
    pub avg_power_mw: f64,
    pub features: CellFeatures,
    /// First cycle of the window.
    pub window_start: u64,
}

/// Runs one cell once and averages the steady-state window: the window
/// opens once every thread has produced its first output.
pub fn run_cell(cell: &Cell, model: &EnergyModel, config: &ExperimentConfig, seed: u64) -> Result<CellRun, ExperimentError> {
    if config.threads == 0 {
        return Err(ExperimentError::NoThreads);
    }
    let program = gen_fir(&cell.fir)?;
    let programs = core::slice::from_ref(&program);
    let threads: Vec<ThreadConfig> = thread_inputs(cell.pattern, cell.fir.input_len(), config.threads, seed)
        .into_iter()
        .map(|input| ThreadConfig { program: 0, input })
        .collect();
    let mut m = Machine::new(programs, &threads)?;
    let last = config.threads - 1;
    let mut start = None;
    let mut window: Vec<TraceEvent> = Vec::with_capacity(config.window_cycles as usize);
    while (window.len() as u64) < config.window_cycles {
        let Some(e) = m.step(model)? else {
            return Err(ExperimentError::WindowTooShort {
                window: config.window_cycles,
            });
        };
        match start {
            Some(_) => window.push(e),
            None if e.thread == last && e.opcode == Opcode::Out => start = Some(e.cycle + 1),
            None => {}
        }
    }
    let report = trace_energy(&window, model)?;
    Ok(CellRun {
        avg_power_mw: report.avg_power_mw,
        features: CellFeatures::from_events(&window),
        window_start: start.unwrap_or_default(),
    })
}

/// A cell averaged over its runs.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMeasurement {
    pub avg_power_mw: f64,
    pub features: CellFeatures,
    pub runs: Vec<f64>,
}

pub fn measure_cell(cell: &Cell, model: &EnergyModel, config: &ExperimentConfig, seed: u64) -> Result<CellMeasurement, ExperimentError> {
    let runs = run_seeds(seed, config.runs)
        .into_iter()
        .map(|s| run_cell(cell, model, config, s))
        .collect::<Result<Vec<_>, _>>()?;
    let powers: Vec<f64> = runs.iter().map(|r| r.avg_power_mw).collect();
    let features: Vec<CellFeatures> = runs.into_iter().map(|r| r.features).collect();
    Ok(CellMeasurement {
        avg_power_mw: powers.iter().sum::<f64>() / powers.len().max(1) as f64,
        features: CellFeatures::mean(&features),
        runs: powers,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TableId {
    /// Core op by input pattern.
    One,
    /// Core op by repetitions under rand32.
    Two,
    /// Datapath against iterator operands by repetitions under rand32.
    Three,
}

impl TableId {
    pub fn from_number(n: u32) -> Option<TableId> {
        match n {
            1 => Some(TableId::One),
            2 => Some(TableId::Two),
            3 => Some(TableId::Three),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            TableId::One => 1,
            TableId::Two => 2,
            TableId::Three => 3,
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "table {}", self.number())
    }
}

/// Row label of a core op, as in measurement tables.
pub fn row_label(op: Opcode) -> &'static str {
    if op == Opcode::Nop {
        "nops"
    } else {
        op.name()
    }
}

/// Cells of a table, row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct TableLayout {
    pub table: TableId,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Cell>)>,
}

impl TableLayout {
    pub fn new(table: TableId) -> TableLayout {
        let reps: Vec<String> = (1..=7).map(|r: u32| r.to_string()).collect();
        let rep_row = |op: Opcode, dpath: bool| -> Vec<Cell> {
            (1..=7)
                .map(|r| Cell {
                    fir: FirSpec::new(op, r, dpath),
                    pattern: Pattern::Rand32,
                })
                .collect()
        };
        let (columns, rows) = match table {
            TableId::One => (
                Pattern::ALL.iter().map(|p| p.name().to_string()).collect(),
                CORE_OPS
                    .iter()
                    .map(|&op| {
                        let cells = Pattern::ALL
                            .iter()
                            .map(|&pattern| Cell {
                                fir: FirSpec::new(op, 1, true),
                                pattern,
                            })
                            .collect();
                        (row_label(op).to_string(), cells)
                    })
                    .collect(),
            ),
            TableId::Two => (
                reps,
                CORE_OPS.iter().map(|&op| (row_label(op).to_string(), rep_row(op, true))).collect(),
            ),
            TableId::Three => (
                reps,
                [Opcode::Maccs, Opcode::Lmul]
                    .iter()
                    .flat_map(|&op| {
                        [
                            (alloc::format!("{} in dpath", op.name()), rep_row(op, true)),
                            (alloc::format!("{} not in dpath", op.name()), rep_row(op, false)),
                        ]
                    })
                    .collect(),
            ),
        };
        TableLayout { table, columns, rows }
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> Vec<Cell> {
        self.rows.iter().flat_map(|(_, c)| c.iter().copied()).collect()
    }

    /// Pairs row-major `values` with the layout.
    ///
    /// # Panics
    ///
    /// If `values` does not have one entry per cell.
    pub fn assemble(&self, values: &[f64]) -> TableResult {
        assert_eq!(values.len(), self.rows.len() * self.columns.len(), "one value per cell");
        let rows = self
            .rows
            .iter()
            .zip(values.chunks(self.columns.len()))
            .map(|((name, _), v)| (name.clone(), v.to_vec()))
            .collect();
        TableResult {
            table: self.table,
            columns: self.columns.clone(),
            rows,
        }
    }
}

/// Average power per cell, in mW.
#[derive(Clone, Debug, PartialEq)]
pub struct TableResult {
    pub table: TableId,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl TableResult {
    pub fn row(&self, name: &str) -> Option<&[f64]> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.row(row).map(|v| v[c])
    }

    /// The pattern-by-op table as measurements, for tables shaped like the
    /// first one.
    pub fn to_measurements(&self) -> Option<MeasurementTable> {
        if self.table != TableId::One {
            return None;
        }
        let rows = self
            .rows
            .iter()
            .map(|(name, v)| MeasurementTable::row(name, v.as_slice().try_into().ok()?).ok())
            .collect::<Option<Vec<MeasurementRow>>>()?;
        MeasurementTable::new(rows).ok()
    }
}

/// Simulates every cell of `table` in turn.
pub fn run_table(table: TableId, model: &EnergyModel, config: &ExperimentConfig, seed: u64) -> Result<TableResult, ExperimentError> {
    let layout = TableLayout::new(table);
    let values = layout
        .cells()
        .iter()
        .map(|c| measure_cell(c, model, config, seed).map(|m| m.avg_power_mw))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layout.assemble(&values))
}

/// Cells whose features a fit needs: every op of `rows` under every pattern,
/// then nop repeated seven times and once under rand32 for the
/// equal-power constraint.
pub fn design_cells(rows: &[Opcode]) -> Vec<Cell> {
    let mut cells: Vec<Cell> = rows
        .iter()
        .flat_map(|&op| {
            Pattern::ALL.into_iter().map(move |pattern| Cell {
                fir: FirSpec::new(op, 1, true),
                pattern,
            })
        })
        .collect();
    for r in [7, 1] {
        cells.push(Cell {
            fir: FirSpec::new(Opcode::Nop, r, true),
            pattern: Pattern::Rand32,
        });
    }
    cells
}

/// Zero-cost model for runs whose energy is irrelevant.
pub fn feature_model(base_power_mw: f64, cycle_time_ns: f64) -> EnergyModel {
    EnergyModel::uniform(base_power_mw, cycle_time_ns, OpcodeCost::default()).expect("zero costs are valid")
}

/// Builds a design from features measured on [`design_cells`], in order.
///
/// # Panics
///
/// If `features` does not match `design_cells(rows)`.
pub fn assemble_design(rows: &[Opcode], features: &[CellFeatures], base_power_mw: f64, cycle_time_ns: f64) -> FitDesign {
    let cells = design_cells(rows);
    assert_eq!(cells.len(), features.len(), "one feature set per design cell");
    let mut d = FitDesign::new(base_power_mw, cycle_time_ns);
    for (c, f) in cells.iter().zip(features).take(cells.len() - 2) {
        d.cells.insert((c.fir.core_op, c.pattern), f.clone());
    }
    let n = features.len();
    d.equal_power.push((features[n - 2].clone(), features[n - 1].clone()));
    d
}

/// Fit design whose features come from simulating the benchmark itself.
pub fn simulated_design(
    rows: &[Opcode],
    config: &ExperimentConfig,
    seed: u64,
    base_power_mw: f64,
    cycle_time_ns: f64,
) -> Result<FitDesign, ExperimentError> {
    let model = feature_model(base_power_mw, cycle_time_ns);
    let features = design_cells(rows)
        .iter()
        .map(|c| measure_cell(c, &model, config, seed).map(|m| m.features))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_design(rows, &features, base_power_mw, cycle_time_ns))
}
