//! Calibrating an [`EnergyModel`] against measured average power.
//!
//! Each measured cell is described by its per-cycle features: the share of
//! pipeline slots taken by every opcode and the switching bits per cycle
//! attributed to every opcode. Average power is linear in the model
//! parameters given those features, so the fit is a single least-squares
//! problem over all cells.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::model::{EnergyModel, InterInstruction, ModelError, OpcodeCost};
use super::trace::TraceEvent;
use crate::isa::Opcode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    Zeros,
    Rand8,
    Rand16,
    Rand24,
    Rand32,
    Signal,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::Zeros,
        Pattern::Rand8,
        Pattern::Rand16,
        Pattern::Rand24,
        Pattern::Rand32,
        Pattern::Signal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Zeros => "zeros",
            Pattern::Rand8 => "rand8",
            Pattern::Rand16 => "rand16",
            Pattern::Rand24 => "rand24",
            Pattern::Rand32 => "rand32",
            Pattern::Signal => "signal",
        }
    }

    pub fn from_name(name: &str) -> Option<Pattern> {
        Pattern::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Width of the random words for `randK`.
    pub fn random_bits(self) -> Option<u32> {
        match self {
            Pattern::Rand8 => Some(8),
            Pattern::Rand16 => Some(16),
            Pattern::Rand24 => Some(24),
            Pattern::Rand32 => Some(32),
            _ => None,
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pattern::from_name(s).ok_or_else(|| FitError::UnknownPattern(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRow {
    pub instruction: String,
    pub opcode: Opcode,
    /// Indexed by [`Pattern::index`].
    pub power_mw: [f64; 6],
}

/// Average power per (instruction, input pattern), in mW.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementTable {
    rows: Vec<MeasurementRow>,
}

impl MeasurementTable {
    /// Maps a row label to the opcode it measures; `nops` is accepted for nop.
    pub fn row_opcode(name: &str) -> Option<Opcode> {
        match name {
            "nops" => Some(Opcode::Nop),
            _ => Opcode::from_name(name),
        }
    }

    pub fn new(rows: Vec<MeasurementRow>) -> Result<Self, FitError> {
        for (i, row) in rows.iter().enumerate() {
            if rows[..i].iter().any(|r| r.opcode == row.opcode) {
                return Err(FitError::DuplicateRow(row.instruction.clone()));
            }
            for p in Pattern::ALL {
                let v = row.power_mw[p.index()];
                if !(v.is_finite() && v > 0.0) {
                    return Err(FitError::InvalidMeasurement {
                        instruction: row.instruction.clone(),
                        pattern: p,
                        value: v,
                    });
                }
            }
        }
        Ok(MeasurementTable { rows })
    }

    /// Builds a row from its label, resolving the opcode.
    pub fn row(instruction: &str, power_mw: [f64; 6]) -> Result<MeasurementRow, FitError> {
        let opcode = Self::row_opcode(instruction)
            .ok_or_else(|| FitError::UnknownInstruction(instruction.to_string()))?;
        Ok(MeasurementRow {
            instruction: instruction.to_string(),
            opcode,
            power_mw,
        })
    }

    pub fn rows(&self) -> &[MeasurementRow] {
        &self.rows
    }

    pub fn get(&self, op: Opcode, pattern: Pattern) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.opcode == op)
            .map(|r| r.power_mw[pattern.index()])
    }
}

/// Per-cycle activity of one measured configuration.
///
/// Keyed by the opcode an instruction is priced as.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellFeatures {
    /// Fraction of cycles spent in each opcode.
    pub share: [f64; Opcode::COUNT],
    /// Switching bits per cycle attributed to each opcode.
    pub switching: [f64; Opcode::COUNT],
}

/// One instruction slot of a loop used to derive features analytically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopSlot {
    pub opcode: Opcode,
    /// How many of the slot's ports carry pattern data.
    pub data_ports: f64,
}

impl CellFeatures {
    pub fn from_events(events: &[TraceEvent]) -> Self {
        let mut f = CellFeatures::default();
        if events.is_empty() {
            return f;
        }
        for e in events {
            let i = e.opcode.priced_as().index();
            f.share[i] += 1.0;
            f.switching[i] += f64::from(e.switching_bits);
        }
        let n = events.len() as f64;
        for i in 0..Opcode::COUNT {
            f.share[i] /= n;
            f.switching[i] /= n;
        }
        f
    }

    /// Features of a loop that runs `slots` over and over, with every data
    /// port switching `hamming` bits per execution.
    pub fn from_slots(slots: &[LoopSlot], hamming: f64) -> Self {
        let mut f = CellFeatures::default();
        let n = slots.len() as f64;
        for s in slots {
            let i = s.opcode.priced_as().index();
            f.share[i] += 1.0 / n;
            f.switching[i] += s.data_ports * hamming / n;
        }
        f
    }

    /// Elementwise mean.
    pub fn mean(cells: &[CellFeatures]) -> Self {
        let mut f = CellFeatures::default();
        if cells.is_empty() {
            return f;
        }
        for c in cells {
            for i in 0..Opcode::COUNT {
                f.share[i] += c.share[i];
                f.switching[i] += c.switching[i];
            }
        }
        let n = cells.len() as f64;
        for i in 0..Opcode::COUNT {
            f.share[i] /= n;
            f.switching[i] /= n;
        }
        f
    }

    /// Average power of the configuration under `model`, ignoring
    /// inter-instruction overhead.
    pub fn predict_mw(&self, model: &EnergyModel) -> f64 {
        let mut p = model.base_power_mw();
        for op in Opcode::ALL {
            let c = model.cost(op);
            p += self.share[op.index()] * c.base_mw + self.switching[op.index()] * c.alpha_mw_per_bit;
        }
        p
    }
}

/// Features of every measured cell plus equal-power constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct FitDesign {
    pub base_power_mw: f64,
    pub cycle_time_ns: f64,
    pub cells: BTreeMap<(Opcode, Pattern), CellFeatures>,
    /// Pairs of configurations known to draw the same power.
    pub equal_power: Vec<(CellFeatures, CellFeatures)>,
    /// Weight of each equal-power row relative to a measured cell.
    pub constraint_weight: f64,
}

impl FitDesign {
    pub fn new(base_power_mw: f64, cycle_time_ns: f64) -> Self {
        FitDesign {
            base_power_mw,
            cycle_time_ns,
            cells: BTreeMap::new(),
            equal_power: Vec::new(),
            constraint_weight: 1e3,
        }
    }

    /// Design for a loop `frame` in which each measured opcode replaces the
    /// core slots. `frame` slots with opcode nop mark where the core
    /// instruction goes; the core instruction reads `port_count` data ports.
    pub fn analytic(
        rows: &[Opcode],
        frame: &[LoopSlot],
        pattern_hamming: &BTreeMap<Pattern, f64>,
        base_power_mw: f64,
        cycle_time_ns: f64,
    ) -> Self {
        let mut d = FitDesign::new(base_power_mw, cycle_time_ns);
        for &op in rows {
            for (&p, &h) in pattern_hamming {
                d.cells.insert((op, p), CellFeatures::from_slots(&core_slots(frame, op, 1), h));
            }
        }
        if let Some(&h) = pattern_hamming.get(&Pattern::Rand32) {
            d.equal_power.push((
                CellFeatures::from_slots(&core_slots(frame, Opcode::Nop, 7), h),
                CellFeatures::from_slots(&core_slots(frame, Opcode::Nop, 1), h),
            ));
        }
        d
    }

    /// Table predicted by `model` for every row with all six patterns.
    pub fn synthesize(&self, model: &EnergyModel) -> MeasurementTable {
        let mut rows = Vec::new();
        let ops: Vec<Opcode> = {
            let mut v: Vec<Opcode> = self.cells.keys().map(|&(op, _)| op).collect();
            v.dedup();
            v
        };
        for op in ops {
            let mut power_mw = [0.0; 6];
            let mut complete = true;
            for p in Pattern::ALL {
                match self.cells.get(&(op, p)) {
                    Some(f) => power_mw[p.index()] = f.predict_mw(model),
                    None => complete = false,
                }
            }
            if complete {
                rows.push(MeasurementRow {
                    instruction: op.name().to_string(),
                    opcode: op,
                    power_mw,
                });
            }
        }
        MeasurementTable { rows }
    }
}

fn core_slots(frame: &[LoopSlot], core: Opcode, repeats: usize) -> Vec<LoopSlot> {
    let mut out = Vec::new();
    for s in frame {
        if s.opcode == Opcode::Nop {
            let ports = if core == Opcode::Nop { 0.0 } else { core.port_count() as f64 };
            out.extend((0..repeats).map(|_| LoopSlot { opcode: core, data_ports: ports }));
        } else {
            out.push(*s);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResidual {
    pub instruction: String,
    pub pattern: Pattern,
    pub measured_mw: f64,
    pub predicted_mw: f64,
    /// measured − predicted
    pub residual_mw: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub residuals: Vec<CellResidual>,
    /// Parameter groups with no activity in the design; their costs are 0.
    pub unidentified: Vec<String>,
    /// Parameters clamped to 0 to keep the model non-negative.
    pub clamped: Vec<String>,
}

impl FitReport {
    pub fn max_abs_residual_mw(&self) -> f64 {
        self.residuals.iter().map(|r| r.residual_mw.abs()).fold(0.0, f64::max)
    }

    pub fn residual(&self, op: Opcode, pattern: Pattern) -> Option<f64> {
        self.residuals
            .iter()
            .find(|r| MeasurementTable::row_opcode(&r.instruction) == Some(op) && r.pattern == pattern)
            .map(|r| r.residual_mw)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("measurement table has no nop row")]
    MissingNopRow,
    #[error("unknown instruction `{0}`")]
    UnknownInstruction(String),
    #[error("unknown input pattern `{0}`")]
    UnknownPattern(String),
    #[error("duplicate row for `{0}`")]
    DuplicateRow(String),
    #[error("{instruction}/{pattern}: power must be positive, got {value}")]
    InvalidMeasurement {
        instruction: String,
        pattern: Pattern,
        value: f64,
    },
    #[error("no features for {instruction}/{pattern}")]
    MissingFeatures { instruction: String, pattern: Pattern },
    #[error("regression is singular: parameter `{0}` cannot be separated from the others")]
    Singular(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A set of opcodes sharing one (base, alpha) pair.
struct Group {
    name: String,
    members: Vec<Opcode>,
    has_alpha: bool,
}

struct Column {
    name: String,
    group: usize,
    alpha: bool,
}

fn groups(table: &MeasurementTable) -> Vec<Group> {
    let mut gs: Vec<Group> = table
        .rows
        .iter()
        .map(|r| Group {
            name: String::from(r.opcode.name()),
            members: alloc::vec![r.opcode],
            has_alpha: r.opcode != Opcode::Nop,
        })
        .collect();
    let rest: Vec<Opcode> = Opcode::ALL
        .into_iter()
        .filter(|op| *op == op.priced_as() && table.rows.iter().all(|r| r.opcode != *op))
        .collect();
    if !rest.is_empty() {
        gs.push(Group {
            name: String::from("default"),
            members: rest,
            has_alpha: true,
        });
    }
    gs
}

fn feature(f: &CellFeatures, g: &Group, alpha: bool) -> f64 {
    g.members
        .iter()
        .map(|op| if alpha { f.switching[op.index()] } else { f.share[op.index()] })
        .sum()
}

/// Least squares over `cols`, returning one coefficient per column.
fn solve(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize], names: &[Column]) -> Result<DVector<f64>, FitError> {
    let sub = DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])]);
    // scale columns so conditioning reflects collinearity, not units
    let norms: Vec<f64> = (0..cols.len()).map(|c| sub.column(c).norm()).collect();
    let scaled = DMatrix::from_fn(sub.nrows(), sub.ncols(), |r, c| sub[(r, c)] / norms[c]);
    let svd = scaled.svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if let Some(pos) = sv.iter().position(|&s| s <= max * 1e-10) {
        // name the column contributing most to the null direction
        let v_t = svd.v_t.as_ref().expect("computed");
        let row = v_t.row(pos);
        let worst = (0..cols.len())
            .max_by(|&i, &j| row[i].abs().total_cmp(&row[j].abs()))
            .unwrap_or(0);
        return Err(FitError::Singular(names[cols[worst]].name.clone()));
    }
    let x = svd.solve(b, 0.0).map_err(|_| FitError::Singular(String::from("?")))?;
    Ok(DVector::from_fn(cols.len(), |i, _| x[i] / norms[i]))
}

/// Fits per-opcode base and alpha to `table` given the activity of each cell.
///
/// Every table row gets its own parameters (nop without alpha); all other
/// opcodes share a `default` pair. Costs are kept non-negative by clamping
/// and refitting. The returned model has no inter-instruction overhead.
pub fn fit_model(table: &MeasurementTable, design: &FitDesign) -> Result<(EnergyModel, FitReport), FitError> {
    if table.rows.iter().all(|r| r.opcode != Opcode::Nop) {
        return Err(FitError::MissingNopRow);
    }
    let gs = groups(table);
    let mut columns = Vec::new();
    for (gi, g) in gs.iter().enumerate() {
        columns.push(Column { name: alloc::format!("{}.base_mw", g.name), group: gi, alpha: false });
        if g.has_alpha {
            columns.push(Column { name: alloc::format!("{}.alpha_mw_per_bit", g.name), group: gi, alpha: true });
        }
    }

    let mut cells = Vec::new();
    for row in &table.rows {
        for p in Pattern::ALL {
            let f = design.cells.get(&(row.opcode, p)).ok_or_else(|| FitError::MissingFeatures {
                instruction: row.instruction.clone(),
                pattern: p,
            })?;
            cells.push((row, p, f));
        }
    }
    let n_rows = cells.len() + design.equal_power.len();
    let mut a = DMatrix::<f64>::zeros(n_rows, columns.len());
    let mut b = DVector::<f64>::zeros(n_rows);
    for (r, (row, p, f)) in cells.iter().enumerate() {
        for (c, col) in columns.iter().enumerate() {
            a[(r, c)] = feature(f, &gs[col.group], col.alpha);
        }
        b[r] = row.power_mw[p.index()] - design.base_power_mw;
    }
    for (k, (x, y)) in design.equal_power.iter().enumerate() {
        let r = cells.len() + k;
        for (c, col) in columns.iter().enumerate() {
            let g = &gs[col.group];
            a[(r, c)] = design.constraint_weight * (feature(x, g, col.alpha) - feature(y, g, col.alpha));
        }
    }

    let mut unidentified = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    for c in 0..columns.len() {
        if a.column(c).iter().all(|&v| v == 0.0) {
            unidentified.push(columns[c].name.clone());
        } else {
            active.push(c);
        }
    }
    let mut clamped = Vec::new();
    let theta = loop {
        let x = solve(&a, &b, &active, &columns)?;
        let most_negative = (0..active.len())
            .filter(|&i| x[i] < 0.0)
            .min_by(|&i, &j| x[i].total_cmp(&x[j]));
        match most_negative {
            Some(i) => {
                clamped.push(columns[active[i]].name.clone());
                active.remove(i);
            }
            None => {
                let mut theta = alloc::vec![0.0; columns.len()];
                for (i, &c) in active.iter().enumerate() {
                    theta[c] = x[i];
                }
                break theta;
            }
        }
    };

    let mut costs = [OpcodeCost::default(); Opcode::COUNT];
    for (c, col) in columns.iter().enumerate() {
        for &op in &gs[col.group].members {
            let slot = &mut costs[op.index()];
            if col.alpha {
                slot.alpha_mw_per_bit = theta[c];
            } else {
                slot.base_mw = theta[c];
            }
        }
    }
    costs[Opcode::Halt.index()] = costs[Opcode::Nop.index()];
    let model = EnergyModel::from_table(
        design.base_power_mw,
        design.cycle_time_ns,
        costs,
        InterInstruction::Constant(0.0),
    )?;

    let residuals = cells
        .iter()
        .map(|(row, p, f)| {
            let measured_mw = row.power_mw[p.index()];
            let predicted_mw = f.predict_mw(&model);
            CellResidual {
                instruction: row.instruction.clone(),
                pattern: *p,
                measured_mw,
                predicted_mw,
                residual_mw: measured_mw - predicted_mw,
            }
        })
        .collect();
    Ok((
        model,
        FitReport {
            residuals,
            unidentified,
            clamped,
        },
    ))
}
