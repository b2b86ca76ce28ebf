use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::interval::{site_port_intervals, Interval, IntervalState};
use super::taint::{site_port_taint, TaintState};
use crate::isa::{Opcode, Program};

/// Worst-case switching class of one read port.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortClass {
    /// May carry input data: every bit can flip.
    Tainted,
    /// Clean but with no usable range.
    Unbounded,
    /// At most this many bits flip per execution.
    Bounded(u32),
}

impl PortClass {
    pub fn max_bits(self) -> u32 {
        match self {
            PortClass::Tainted | PortClass::Unbounded => 32,
            PortClass::Bounded(b) => b,
        }
    }

    pub fn is_worst_case(self) -> bool {
        !matches!(self, PortClass::Bounded(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteClass {
    pub site: usize,
    pub opcode: Opcode,
    pub ports: Vec<PortClass>,
}

impl SiteClass {
    pub fn max_bits(&self) -> u32 {
        self.ports.iter().map(|p| p.max_bits()).sum()
    }

    /// The same site with every port assumed worst case.
    pub fn naive(&self) -> SiteClass {
        SiteClass {
            site: self.site,
            opcode: self.opcode,
            ports: alloc::vec![PortClass::Tainted; self.ports.len()],
        }
    }
}

#[derive(Clone, Copy)]
struct Pool {
    tainted: bool,
    hull: Interval,
}

/// Classifies every read port of every reachable site.
///
/// A port's switching depends on the value the same port of the same
/// functional unit held before, which may have come from any site with that
/// opcode in any thread, or from the reset state. Facts are therefore pooled
/// per (opcode, port) over every program given, and the reset value is part
/// of every pool. Each entry is `(program, taint, intervals)` as produced by
/// the analyses; the result holds one list per program, indexed by site.
pub fn classify_sites(
    programs: &[(&Program, &[Option<TaintState>], &[Option<IntervalState>])],
) -> Vec<Vec<Option<SiteClass>>> {
    let mut pools: BTreeMap<(Opcode, usize), Pool> = BTreeMap::new();
    for &(program, taint, intervals) in programs {
        for inst in &program.instructions {
            let (Some(t), Some(iv)) = (&taint[inst.site], &intervals[inst.site]) else {
                continue;
            };
            let op = inst.opcode();
            let pt = site_port_taint(program, inst, t);
            let pi = site_port_intervals(program, inst, iv);
            for (port, (&tainted, &range)) in pt.iter().zip(&pi).enumerate() {
                let reset = Interval::singleton(op.effective_port_value(port, 0));
                let pool = pools.entry((op, port)).or_insert(Pool {
                    tainted: false,
                    hull: reset,
                });
                pool.tainted |= tainted;
                pool.hull = pool.hull.hull(range);
            }
        }
    }

    programs
        .iter()
        .map(|&(program, taint, intervals)| {
            program
                .instructions
                .iter()
                .map(|inst| {
                    taint[inst.site].as_ref()?;
                    intervals[inst.site].as_ref()?;
                    let op = inst.opcode();
                    let ports = (0..op.port_count())
                        .map(|port| {
                            let pool = pools[&(op, port)];
                            if pool.tainted {
                                PortClass::Tainted
                            } else if pool.hull.is_top() {
                                PortClass::Unbounded
                            } else {
                                PortClass::Bounded(pool.hull.max_hamming())
                            }
                        })
                        .collect();
                    Some(SiteClass { site: inst.site, opcode: op, ports })
                })
                .collect()
        })
        .collect()
}
