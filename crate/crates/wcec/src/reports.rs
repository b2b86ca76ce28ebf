//! JSON reports printed by the command line tool.

use std::collections::BTreeMap;

use serde::Serialize;
use wcec_core::analysis::{PortClass, SiteClass};
use wcec_core::energy::FitReport;
use wcec_core::wcec::{ThreadsBound, ValidationReport};
use wcec_core::{EnergyReport, Program, TraceEvent};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PortJson {
    pub class: &'static str,
    pub max_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteClassJson {
    pub program: usize,
    pub site: usize,
    pub opcode: &'static str,
    pub instruction: String,
    pub ports: Vec<PortJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationJson {
    /// Reachable sites only.
    pub sites: Vec<SiteClassJson>,
}

fn port_json(p: PortClass) -> PortJson {
    PortJson {
        class: if p.is_worst_case() { "worst" } else { "bounded" },
        max_bits: p.max_bits(),
    }
}

pub fn classification_json(programs: &[Program], classes: &[Vec<Option<SiteClass>>]) -> ClassificationJson {
    let mut sites = Vec::new();
    for (k, (p, cls)) in programs.iter().zip(classes).enumerate() {
        for c in cls.iter().flatten() {
            sites.push(SiteClassJson {
                program: k,
                site: c.site,
                opcode: c.opcode.name(),
                instruction: p.instructions[c.site].to_string(),
                ports: c.ports.iter().map(|&p| port_json(p)).collect(),
            });
        }
    }
    ClassificationJson { sites }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WcecSiteJson {
    pub thread: usize,
    pub site: usize,
    pub opcode: &'static str,
    pub count: u64,
    pub cost_mw: Option<f64>,
    pub on_worst_path: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventJson {
    pub cycle: u64,
    pub thread: usize,
    pub site: usize,
    pub opcode: &'static str,
    pub ports: Vec<u32>,
    pub switch_bits: u32,
    pub cost_mw: f64,
}

impl From<&TraceEvent> for EventJson {
    fn from(e: &TraceEvent) -> Self {
        EventJson {
            cycle: e.cycle,
            thread: e.thread,
            site: e.site,
            opcode: e.opcode.name(),
            ports: e.ports.to_vec(),
            switch_bits: e.switching_bits,
            cost_mw: e.cost_mw,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleJson {
    pub trial: String,
    pub energy_nj: f64,
    pub bound_nj: f64,
    pub inputs: Vec<Vec<u32>>,
    pub trace_excerpt: Vec<EventJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationJson {
    pub verdict: &'static str,
    pub trials: usize,
    pub max_observed_nj: f64,
    pub bound_nj: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleJson>,
}

pub fn validation_json(v: &ValidationReport) -> ValidationJson {
    ValidationJson {
        verdict: if v.pass { "PASS" } else { "FAIL" },
        trials: v.trials.len(),
        max_observed_nj: v.max_observed_nj,
        bound_nj: v.bound_nj,
        counterexample: v.counterexample.as_ref().map(|c| CounterexampleJson {
            trial: c.kind.to_string(),
            energy_nj: c.energy_nj,
            bound_nj: c.bound_nj,
            inputs: c.inputs.clone(),
            trace_excerpt: c.trace_excerpt.iter().map(EventJson::from).collect(),
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WcecJson {
    pub bound_nj: f64,
    pub bound_avg_mw: f64,
    pub naive_nj: f64,
    pub tightening_ratio: f64,
    pub worst_path_cycles: u64,
    pub sites: Vec<WcecSiteJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationJson>,
}

pub fn wcec_json(programs: &[Program], thread_programs: &[usize], bound: &ThreadsBound, validation: Option<&ValidationReport>) -> WcecJson {
    let mut sites = Vec::new();
    for (t, r) in bound.threads.iter().enumerate() {
        let p = &programs[thread_programs[t]];
        for inst in &p.instructions {
            sites.push(WcecSiteJson {
                thread: t,
                site: inst.site,
                opcode: inst.opcode().name(),
                count: r.per_site_count[inst.site],
                cost_mw: r.per_site_cost_mw[inst.site],
                on_worst_path: r.on_worst_path.contains(&inst.site),
            });
        }
    }
    let cycles: u64 = bound.threads.iter().map(|r| r.worst_path_cycles).sum();
    let mw_cycles: f64 = bound.threads.iter().map(|r| r.bound_avg_power_mw * r.worst_path_cycles as f64).sum();
    WcecJson {
        bound_nj: bound.bound_total_nj,
        bound_avg_mw: if cycles == 0 { 0.0 } else { mw_cycles / cycles as f64 },
        naive_nj: bound.naive_bound_nj,
        tightening_ratio: bound.tightening_ratio,
        worst_path_cycles: cycles,
        sites,
        validation: validation.map(validation_json),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OpcodeShareJson {
    pub count: u64,
    pub energy_nj: f64,
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunJson {
    pub total_energy_nj: f64,
    pub dynamic_energy_nj: f64,
    pub cycles: u64,
    pub avg_power_mw: f64,
    pub per_opcode: BTreeMap<&'static str, OpcodeShareJson>,
    pub tainted_sites: Vec<usize>,
}

pub fn run_json(r: &EnergyReport, tainted_sites: Vec<usize>) -> RunJson {
    RunJson {
        total_energy_nj: r.total_energy_nj,
        dynamic_energy_nj: r.dynamic_energy_nj,
        cycles: r.cycles,
        avg_power_mw: r.avg_power_mw,
        per_opcode: r
            .per_opcode
            .iter()
            .map(|(op, s)| {
                (
                    op.name(),
                    OpcodeShareJson {
                        count: s.count,
                        energy_nj: s.energy_nj,
                        share: s.share,
                    },
                )
            })
            .collect(),
        tainted_sites,
    }
}

/// Plain-text residual table of a fit.
pub fn fit_summary(report: &FitReport) -> String {
    let mut out = String::from("instruction  pattern  measured_mw  predicted_mw  residual_mw\n");
    for r in &report.residuals {
        out.push_str(&format!(
            "{:<11}  {:<7}  {:>11.2}  {:>12.2}  {:>+11.3}\n",
            r.instruction, r.pattern.name(), r.measured_mw, r.predicted_mw, r.residual_mw
        ));
    }
    out.push_str(&format!("max |residual| {:.3} mW\n", report.max_abs_residual_mw()));
    if !report.unidentified.is_empty() {
        out.push_str(&format!("unidentified (set to 0): {}\n", report.unidentified.join(", ")));
    }
    if !report.clamped.is_empty() {
        out.push_str(&format!("clamped to 0: {}\n", report.clamped.join(", ")));
    }
    out
}
