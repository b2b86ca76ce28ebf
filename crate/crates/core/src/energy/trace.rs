use alloc::collections::BTreeMap;
use core::ops::Deref;

use super::model::{event_cost, EnergyModel};
use crate::isa::{Opcode, MAX_PORTS};

/// Operand values read by one instruction, at most [`MAX_PORTS`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Ports {
    values: [u32; MAX_PORTS],
    len: u8,
}

impl Ports {
    /// # Panics
    ///
    /// If more than [`MAX_PORTS`] values are given.
    pub fn new(values: &[u32]) -> Ports {
        assert!(values.len() <= MAX_PORTS, "too many ports");
        let mut p = Ports::default();
        p.values[..values.len()].copy_from_slice(values);
        p.len = values.len() as u8;
        p
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.values[..usize::from(self.len)]
    }
}

impl Deref for Ports {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        self.as_slice()
    }
}

/// One executed instruction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub thread: usize,
    pub site: usize,
    pub opcode: Opcode,
    /// Opcode issued in the previous pipeline slot, by any thread.
    pub prev_opcode: Option<Opcode>,
    pub ports: Ports,
    pub switching_bits: u32,
    pub cost_mw: f64,
    /// Bit `k` set when port `k` carried tainted data.
    pub tainted_ports: u8,
}

impl TraceEvent {
    pub fn port_tainted(&self, port: usize) -> bool {
        self.tainted_ports & (1 << port) != 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OpcodeShare {
    pub count: u64,
    pub energy_nj: f64,
    /// Fraction of the dynamic energy spent in this opcode.
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    /// Dynamic energy plus platform power over all cycles.
    pub total_energy_nj: f64,
    pub dynamic_energy_nj: f64,
    pub cycles: u64,
    pub avg_power_mw: f64,
    pub per_opcode: BTreeMap<Opcode, OpcodeShare>,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("event {index} at cycle {cycle} is not after the previous event")]
    Unordered { index: usize, cycle: u64 },
    #[error("per-event sum {event_sum} disagrees with per-opcode counts {count_form}")]
    Inconsistent { event_sum: f64, count_form: f64 },
}

/// Streams trace events and totals their energy twice: once as the sum of
/// recorded event costs, once from opcode, transition and switching counts.
#[derive(Clone, Debug)]
pub struct EnergyAccumulator<'m> {
    model: &'m EnergyModel,
    index: usize,
    last_cycle: Option<u64>,
    event_sum: f64,
    per_opcode_mw: [f64; Opcode::COUNT],
    counts: [u64; Opcode::COUNT],
    switching: [u64; Opcode::COUNT],
    transitions: BTreeMap<(Opcode, Opcode), u64>,
}

impl<'m> EnergyAccumulator<'m> {
    pub fn new(model: &'m EnergyModel) -> Self {
        EnergyAccumulator {
            model,
            index: 0,
            last_cycle: None,
            event_sum: 0.0,
            per_opcode_mw: [0.0; Opcode::COUNT],
            counts: [0; Opcode::COUNT],
            switching: [0; Opcode::COUNT],
            transitions: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, e: &TraceEvent) -> Result<(), TraceError> {
        if self.last_cycle.is_some_and(|c| e.cycle <= c) {
            return Err(TraceError::Unordered {
                index: self.index,
                cycle: e.cycle,
            });
        }
        self.index += 1;
        self.last_cycle = Some(e.cycle);
        self.event_sum += e.cost_mw;
        self.per_opcode_mw[e.opcode.index()] += e.cost_mw;
        self.counts[e.opcode.index()] += 1;
        self.switching[e.opcode.index()] += u64::from(e.switching_bits);
        if let Some(prev) = e.prev_opcode {
            *self.transitions.entry((prev, e.opcode)).or_insert(0) += 1;
        }
        Ok(())
    }

    pub fn events(&self) -> usize {
        self.index
    }

    /// Sum of recorded per-event costs, in mW·cycles.
    pub fn event_sum_mw(&self) -> f64 {
        self.event_sum
    }

    /// `Σ B_i N_i + Σ alpha_i S_i + Σ O_ij N_ij`, in mW·cycles.
    pub fn count_form_mw(&self) -> f64 {
        let m = self.model;
        let mut total = 0.0;
        for op in Opcode::ALL {
            let c = m.price(op);
            total += c.base_mw * self.counts[op.index()] as f64;
            total += c.alpha_mw_per_bit * self.switching[op.index()] as f64;
        }
        for (&(prev, op), &n) in &self.transitions {
            total += m.transition_mw(Some(prev), op) * n as f64;
        }
        total
    }

    pub fn finish(self) -> Result<EnergyReport, TraceError> {
        let event_sum = self.event_sum;
        let count_form = self.count_form_mw();
        let scale = event_sum.abs().max(count_form.abs()).max(1.0);
        if (event_sum - count_form).abs() > 1e-9 * scale {
            return Err(TraceError::Inconsistent {
                event_sum,
                count_form,
            });
        }
        let m = self.model;
        let cycles = self.index as u64;
        let dynamic_energy_nj = m.mw_cycles_to_nj(event_sum);
        let base_nj = m.mw_cycles_to_nj(m.base_power_mw() * cycles as f64);
        let avg_power_mw = if cycles == 0 {
            m.base_power_mw()
        } else {
            m.base_power_mw() + event_sum / cycles as f64
        };
        let mut per_opcode = BTreeMap::new();
        for op in Opcode::ALL {
            let count = self.counts[op.index()];
            if count == 0 {
                continue;
            }
            let mw = self.per_opcode_mw[op.index()];
            per_opcode.insert(
                op,
                OpcodeShare {
                    count,
                    energy_nj: m.mw_cycles_to_nj(mw),
                    share: if event_sum > 0.0 { mw / event_sum } else { 0.0 },
                },
            );
        }
        Ok(EnergyReport {
            total_energy_nj: dynamic_energy_nj + base_nj,
            dynamic_energy_nj,
            cycles,
            avg_power_mw,
            per_opcode,
        })
    }
}

/// Energy of a recorded trace. Each event occupies one pipeline slot.
pub fn trace_energy(events: &[TraceEvent], model: &EnergyModel) -> Result<EnergyReport, TraceError> {
    let mut acc = EnergyAccumulator::new(model);
    for e in events {
        acc.push(e)?;
    }
    acc.finish()
}

impl TraceEvent {
    /// Builds an event whose cost is computed from `model`.
    pub fn priced(
        cycle: u64,
        thread: usize,
        site: usize,
        opcode: Opcode,
        prev_opcode: Option<Opcode>,
        ports: Ports,
        switching_bits: u32,
        model: &EnergyModel,
    ) -> TraceEvent {
        TraceEvent {
            cycle,
            thread,
            site,
            opcode,
            prev_opcode,
            ports,
            switching_bits,
            cost_mw: event_cost(opcode, switching_bits, prev_opcode, model),
            tainted_ports: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{InterInstruction, OpcodeCost};
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn model() -> EnergyModel {
        let mut costs = [OpcodeCost::default(); Opcode::COUNT];
        for (i, c) in costs.iter_mut().enumerate() {
            c.base_mw = 1.0 + i as f64 * 0.37;
            c.alpha_mw_per_bit = 0.05 * (i % 5) as f64;
        }
        costs[Opcode::Nop.index()].alpha_mw_per_bit = 0.0;
        let mut mat = BTreeMap::new();
        mat.insert((Opcode::Ldw, Opcode::Maccs), 1.5);
        mat.insert((Opcode::Nop, Opcode::Add), 0.25);
        EnergyModel::from_table(200.0, 2.5, costs, InterInstruction::Matrix(mat)).unwrap()
    }

    #[test]
    fn empty_trace() {
        let m = model();
        let r = trace_energy(&[], &m).unwrap();
        assert_eq!(r.cycles, 0);
        assert_eq!(r.total_energy_nj, 0.0);
        assert_eq!(r.avg_power_mw, 200.0);
    }

    #[test]
    fn units() {
        let m = EnergyModel::uniform(200.0, 2.5, OpcodeCost { base_mw: 10.0, alpha_mw_per_bit: 0.0 }).unwrap();
        let events: Vec<_> = (0..4)
            .map(|c| TraceEvent::priced(c, 0, 0, Opcode::Nop, None, Ports::default(), 0, &m))
            .collect();
        let r = trace_energy(&events, &m).unwrap();
        // 4 cycles * 2.5 ns * 10 mW = 100 pJ
        assert!((r.dynamic_energy_nj - 0.1).abs() < 1e-15);
        assert!((r.total_energy_nj - 2.1).abs() < 1e-12);
        assert_eq!(r.avg_power_mw, 210.0);
        assert_eq!(r.per_opcode[&Opcode::Nop].count, 4);
        assert_eq!(r.per_opcode[&Opcode::Nop].share, 1.0);
    }

    #[test]
    fn rejects_unordered_cycles() {
        let m = model();
        let e = TraceEvent::priced(5, 0, 0, Opcode::Nop, None, Ports::default(), 0, &m);
        assert_eq!(
            trace_energy(&[e, e], &m),
            Err(TraceError::Unordered { index: 1, cycle: 5 })
        );
    }

    #[test]
    fn rejects_costs_from_another_model() {
        let m = model();
        let mut e = TraceEvent::priced(0, 0, 0, Opcode::Add, None, Ports::new(&[1, 2]), 2, &m);
        e.cost_mw += 1.0;
        assert!(matches!(trace_energy(&[e], &m), Err(TraceError::Inconsistent { .. })));
    }

    fn arb_events() -> impl Strategy<Value = Vec<(usize, u32, u64)>> {
        prop::collection::vec((0..Opcode::COUNT, 0u32..=96, 1u64..4), 0..200)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn event_sum_equals_count_form(raw in arb_events()) {
            let m = model();
            let mut cycle = 0;
            let mut prev = None;
            let mut events = Vec::new();
            for (op, bits, gap) in raw {
                let op = Opcode::ALL[op];
                let bits = if op.port_count() == 0 { 0 } else { bits.min(32 * op.port_count() as u32) };
                cycle += gap;
                events.push(TraceEvent::priced(cycle, 0, 0, op, prev, Ports::default(), bits, &m));
                prev = Some(op);
            }
            let mut acc = EnergyAccumulator::new(&m);
            for e in &events {
                acc.push(e).unwrap();
            }
            let (a, b) = (acc.event_sum_mw(), acc.count_form_mw());
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            let r = acc.finish().unwrap();
            let shares: f64 = r.per_opcode.values().map(|s| s.share).sum();
            if r.dynamic_energy_nj > 0.0 {
                prop_assert!((shares - 1.0).abs() < 1e-9);
            }
        }
    }
}
