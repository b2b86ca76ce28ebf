//! Static taint and interval analyses and read-port classification.
//!
//! Both analyses are forward dataflow problems over the CFG and share one
//! solver. Loops are solved innermost first and from scratch on every visit
//! of their enclosing loop, so inner loop counters restart each time the
//! outer loop comes around. A loop whose declared bound is small is iterated
//! exactly that many header visits; any other loop widens the components that
//! still change to the full range after three visits.

mod classify;
mod interval;
mod taint;

pub use classify::{classify_sites, PortClass, SiteClass};
pub use interval::{analyze_intervals, site_port_intervals, Interval, IntervalState};
pub use taint::{analyze_taint, site_port_taint, TaintState};

use alloc::vec;
use alloc::vec::Vec;

use crate::cfg::{build_cfg, Cfg, CfgError, LoopForest};
use crate::isa::{Instruction, Op, Program};

/// Loops with a declared bound up to this many header visits are iterated
/// without widening.
pub const MAX_UNROLLED_BOUND: u32 = 256;

/// Header visits before widening kicks in for other loops.
pub const WIDENING_DELAY: u32 = 3;

pub(crate) trait Domain: Clone + PartialEq {
    fn initial(program: &Program) -> Self;
    /// Least upper bound, in place.
    fn join(&mut self, other: &Self);
    /// Sends every component of `self` that differs in `next` to its top.
    fn widen(&mut self, next: &Self);
    fn transfer(&mut self, program: &Program, inst: &Instruction);
    /// State on the taken (`taken`) or fallthrough edge of a conditional
    /// branch; `None` if that edge cannot be followed.
    fn refine(&self, _inst: &Instruction, _taken: bool) -> Option<Self> {
        Some(self.clone())
    }
}

fn join_opt<D: Domain>(acc: &mut Option<D>, s: Option<D>) {
    if let Some(s) = s {
        match acc {
            Some(a) => a.join(&s),
            None => *acc = Some(s),
        }
    }
}

struct Solver<'a, D> {
    program: &'a Program,
    cfg: &'a Cfg,
    forest: LoopForest,
    bounds: Vec<Option<u32>>,
    block_in: Vec<Option<D>>,
    block_out: Vec<Option<D>>,
}

impl<'a, D: Domain> Solver<'a, D> {
    fn new(program: &'a Program, cfg: &'a Cfg) -> Self {
        let forest = cfg.loops();
        let bounds = forest.loops.iter().map(|l| cfg.loop_bound(program, l)).collect();
        let n = cfg.blocks.len();
        Solver {
            program,
            cfg,
            forest,
            bounds,
            block_in: vec![None; n],
            block_out: vec![None; n],
        }
    }

    fn edge_state(&self, from: usize, to: usize) -> Option<D> {
        let out = self.block_out[from].as_ref()?;
        let inst = &self.program.instructions[self.cfg.blocks[from].last()];
        if let Op::Bt { target, .. } = &inst.op {
            if self.cfg.succs[from].len() == 2 {
                return out.refine(inst, self.cfg.blocks[to].start == target.index);
            }
        }
        Some(out.clone())
    }

    /// Loop directly inside `region` that contains `inner`, if `inner` is
    /// nested below `region`.
    fn child_of(&self, region: Option<usize>, inner: Option<usize>) -> Option<usize> {
        let mut cur = inner?;
        if Some(cur) == region {
            return None;
        }
        while self.forest.loops[cur].parent != region {
            cur = self.forest.loops[cur].parent?;
        }
        Some(cur)
    }

    fn in_region(&self, region: Option<usize>, b: usize) -> bool {
        match region {
            None => self.cfg.is_reachable(b),
            Some(l) => self.forest.loops[l].blocks.contains(&b),
        }
    }

    fn solve_region(&mut self, region: Option<usize>) {
        let order: Vec<usize> = self
            .cfg
            .reverse_postorder()
            .iter()
            .copied()
            .filter(|&b| self.in_region(region, b))
            .collect();
        for b in order {
            match self.child_of(region, self.forest.innermost[b]) {
                None => self.solve_block(b, region),
                Some(l) if self.forest.loops[l].header == b => self.solve_loop(l),
                Some(_) => {}
            }
        }
    }

    fn entry_contribution(&self, b: usize) -> Option<D> {
        (b == self.cfg.entry).then(|| D::initial(self.program))
    }

    fn solve_block(&mut self, b: usize, region: Option<usize>) {
        let is_header = region.is_some_and(|l| self.forest.loops[l].header == b);
        if !is_header {
            let mut state = self.entry_contribution(b);
            for &p in &self.cfg.preds[b] {
                join_opt(&mut state, self.edge_state(p, b));
            }
            self.block_in[b] = state;
        }
        self.block_out[b] = self.block_in[b].clone().map(|mut s| {
            for site in self.cfg.blocks[b].sites() {
                s.transfer(self.program, &self.program.instructions[site]);
            }
            s
        });
    }

    fn clear_loop(&mut self, l: usize) {
        for &b in &self.forest.loops[l].blocks {
            self.block_in[b] = None;
            self.block_out[b] = None;
        }
    }

    fn solve_loop(&mut self, l: usize) {
        let header = self.forest.loops[l].header;
        let mut entry = self.entry_contribution(header);
        for &p in &self.cfg.preds[header] {
            if !self.forest.loops[l].blocks.contains(&p) {
                join_opt(&mut entry, self.edge_state(p, header));
            }
        }
        let Some(entry) = entry else {
            self.clear_loop(l);
            return;
        };
        let limit = self.bounds[l].filter(|&n| n <= MAX_UNROLLED_BOUND);
        let mut head = entry.clone();
        let mut visits = 0u32;
        loop {
            visits += 1;
            self.block_in[header] = Some(head.clone());
            self.solve_region(Some(l));
            let mut next = entry.clone();
            next.join(&head);
            for i in 0..self.forest.loops[l].latches.len() {
                let latch = self.forest.loops[l].latches[i];
                if let Some(s) = self.edge_state(latch, header) {
                    next.join(&s);
                }
            }
            if next == head {
                break;
            }
            match limit {
                // the header cannot run more often than this per entry
                Some(n) if visits >= n => break,
                Some(_) => head = next,
                None if visits >= WIDENING_DELAY => head.widen(&next),
                None => head = next,
            }
        }
    }

    /// State before every site; `None` for unreachable sites.
    fn run(mut self) -> Vec<Option<D>> {
        self.solve_region(None);
        let mut per_site = vec![None; self.program.len()];
        for (b, block) in self.cfg.blocks.iter().enumerate() {
            let Some(mut s) = self.block_in[b].clone() else { continue };
            for site in block.sites() {
                per_site[site] = Some(s.clone());
                s.transfer(self.program, &self.program.instructions[site]);
            }
        }
        per_site
    }
}

pub(crate) fn solve<D: Domain>(program: &Program, cfg: &Cfg) -> Vec<Option<D>> {
    Solver::new(program, cfg).run()
}

/// Both analyses of one program.
#[derive(Clone, Debug)]
pub struct ProgramAnalysis {
    pub cfg: Cfg,
    pub taint: Vec<Option<TaintState>>,
    pub intervals: Vec<Option<IntervalState>>,
}

pub fn analyze_program(program: &Program) -> Result<ProgramAnalysis, CfgError> {
    let cfg = build_cfg(program)?;
    let taint = analyze_taint(&cfg, program);
    let intervals = analyze_intervals(&cfg, program);
    Ok(ProgramAnalysis { cfg, taint, intervals })
}

#[cfg(test)]
mod tests;
