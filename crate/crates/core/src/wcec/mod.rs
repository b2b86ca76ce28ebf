//! Worst-case energy bounds from the site classification.
//!
//! Every site gets a worst-case slot cost from its port classes. Execution
//! counts follow from the loop bounds. The bound itself is the costliest
//! structured path: each loop collapses into one node worth its bound times
//! its costliest iteration, and the longest path through the resulting
//! acyclic graph is taken.

mod validate;

pub use validate::{
    input_demand, run_trial, summarize, trial_inputs, trial_kinds, validate_bound, Counterexample, TrialKind,
    TrialOutcome, ValidationReport,
};

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::analysis::{analyze_program, classify_sites, ProgramAnalysis, SiteClass};
use crate::cfg::{Cfg, CfgError, LoopForest};
use crate::energy::EnergyModel;
use crate::isa::{Opcode, Program};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum WcecError {
    #[error(transparent)]
    Cfg(#[from] CfgError),
    #[error("loop headed at site {header} has a back edge without a declared bound")]
    MissingBound { header: usize },
}

/// Worst-case cost of one slot of `class`, in mW above the platform power.
///
/// `preds` are the opcodes that may issue in the slot before; `None` stands
/// for "nothing issued before" and contributes no transition cost.
pub fn site_worst_cost(
    class: &SiteClass,
    preds: impl IntoIterator<Item = Option<Opcode>>,
    model: &EnergyModel,
) -> f64 {
    let c = model.price(class.opcode);
    let transition = preds
        .into_iter()
        .map(|p| model.transition_mw(p, class.opcode))
        .fold(0.0, f64::max);
    c.base_mw + c.alpha_mw_per_bit * f64::from(class.max_bits()) + transition
}

/// Opcodes that may issue right before each site of a single-threaded run.
pub fn predecessor_opcodes(program: &Program, cfg: &Cfg) -> Vec<Vec<Option<Opcode>>> {
    let mut preds = vec![Vec::new(); program.len()];
    for (b, block) in cfg.blocks.iter().enumerate() {
        if !cfg.is_reachable(b) {
            continue;
        }
        let first = &mut preds[block.start];
        if b == cfg.entry {
            first.push(None);
        }
        for &p in &cfg.preds[b] {
            if cfg.is_reachable(p) {
                first.push(Some(program.instructions[cfg.blocks[p].last()].opcode()));
            }
        }
        for site in block.start + 1..block.end {
            preds[site].push(Some(program.instructions[site - 1].opcode()));
        }
    }
    preds
}

/// Maximum executions of every site: the product of the bounds of the loops
/// around it, or 0 when unreachable.
pub fn max_counts(program: &Program, cfg: &Cfg) -> Result<Vec<u64>, WcecError> {
    let forest = cfg.loops();
    let bounds = loop_bounds(program, cfg, &forest)?;
    let mut counts = vec![0u64; program.len()];
    for (b, block) in cfg.blocks.iter().enumerate() {
        if !cfg.is_reachable(b) {
            continue;
        }
        let n = forest
            .enclosing(b)
            .fold(1u64, |acc, l| acc.saturating_mul(u64::from(bounds[l])));
        for site in block.sites() {
            counts[site] = n;
        }
    }
    Ok(counts)
}

fn loop_bounds(program: &Program, cfg: &Cfg, forest: &LoopForest) -> Result<Vec<u32>, WcecError> {
    forest
        .loops
        .iter()
        .map(|l| {
            cfg.loop_bound(program, l).ok_or(WcecError::MissingBound {
                header: cfg.blocks[l.header].start,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct WcecReport {
    /// Bound on total energy, platform power included.
    pub bound_total_nj: f64,
    /// Bound divided by the duration of the worst path.
    pub bound_avg_power_mw: f64,
    /// Slots on the worst path, with repetition.
    pub worst_path_cycles: u64,
    /// `None` for sites that can never execute.
    pub per_site_cost_mw: Vec<Option<f64>>,
    pub per_site_count: Vec<u64>,
    pub on_worst_path: BTreeSet<usize>,
    /// Same computation with every port assumed worst case.
    pub naive_bound_nj: f64,
    pub tightening_ratio: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BoundOptions {
    /// Other threads may issue in between, so any opcode can precede a site.
    pub any_predecessor: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Block(usize),
    Loop(usize),
}

#[derive(Clone, Debug)]
struct RegionPath {
    cost: f64,
    cycles: u64,
    path: Vec<Node>,
}

struct PathSolver<'a> {
    cfg: &'a Cfg,
    forest: LoopForest,
    bounds: Vec<u32>,
    /// Per block: (mW·cycles including platform power, cycles).
    block_cost: Vec<(f64, u64)>,
    rpo_pos: Vec<usize>,
    memo: Vec<Option<RegionPath>>,
}

impl PathSolver<'_> {
    fn child_of(&self, region: Option<usize>, b: usize) -> Option<usize> {
        let mut cur = self.forest.innermost[b]?;
        if Some(cur) == region {
            return None;
        }
        while self.forest.loops[cur].parent != region {
            cur = self.forest.loops[cur].parent?;
        }
        Some(cur)
    }

    fn node_of(&self, region: Option<usize>, b: usize) -> Node {
        match self.child_of(region, b) {
            Some(l) => Node::Loop(l),
            None => Node::Block(b),
        }
    }

    fn rep(&self, n: Node) -> usize {
        match n {
            Node::Block(b) => b,
            Node::Loop(l) => self.forest.loops[l].header,
        }
    }

    fn weight(&mut self, n: Node) -> (f64, u64) {
        match n {
            Node::Block(b) => self.block_cost[b],
            Node::Loop(l) => {
                let it = self.solve(Some(l));
                let k = self.bounds[l];
                (it.cost * f64::from(k), it.cycles * u64::from(k))
            }
        }
    }

    fn solve(&mut self, region: Option<usize>) -> RegionPath {
        if let Some(l) = region {
            if let Some(r) = &self.memo[l] {
                return r.clone();
            }
        }
        let cfg = self.cfg;
        let in_region = |s: &Self, b: usize| match region {
            None => cfg.is_reachable(b),
            Some(l) => s.forest.loops[l].blocks.contains(&b),
        };
        let mut nodes: Vec<Node> = (0..cfg.blocks.len())
            .filter(|&b| in_region(self, b))
            .map(|b| self.node_of(region, b))
            .collect();
        nodes.sort_by_key(|&n| self.rpo_pos[self.rep(n)]);
        nodes.dedup();
        let index_of = |n: Node| nodes.iter().position(|&m| m == n).expect("node in region");

        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for b in 0..cfg.blocks.len() {
            if !in_region(self, b) {
                continue;
            }
            let u = self.node_of(region, b);
            for &s in &cfg.succs[b] {
                if !in_region(self, s) || region.is_some_and(|l| self.forest.loops[l].header == s) {
                    continue;
                }
                let v = self.node_of(region, s);
                if u != v {
                    edges[index_of(u)].push(index_of(v));
                }
            }
        }
        let source = match region {
            Some(l) => Node::Block(self.forest.loops[l].header),
            None => self.node_of(None, cfg.entry),
        };
        let weights: Vec<(f64, u64)> = nodes.clone().into_iter().map(|n| self.weight(n)).collect();

        let mut dist: Vec<Option<(f64, u64)>> = vec![None; nodes.len()];
        let mut best_pred: Vec<Option<usize>> = vec![None; nodes.len()];
        dist[index_of(source)] = Some(weights[index_of(source)]);
        for u in 0..nodes.len() {
            let Some((du, cu)) = dist[u] else { continue };
            for &v in &edges[u] {
                let cand = (du + weights[v].0, cu + weights[v].1);
                let better = match (dist[v], best_pred[v]) {
                    (None, _) => true,
                    (Some((dv, _)), Some(p)) => {
                        cand.0 > dv || (cand.0 == dv && self.rep(nodes[u]) < self.rep(nodes[p]))
                    }
                    (Some((dv, _)), None) => cand.0 > dv,
                };
                if better {
                    dist[v] = Some(cand);
                    best_pred[v] = Some(u);
                }
            }
        }
        let mut end = index_of(source);
        for v in 0..nodes.len() {
            if let (Some((dv, _)), Some((de, _))) = (dist[v], dist[end]) {
                if dv > de || (dv == de && self.rep(nodes[v]) < self.rep(nodes[end])) {
                    end = v;
                }
            }
        }
        let (cost, cycles) = dist[end].expect("source reached");
        let mut path = vec![nodes[end]];
        let mut cur = end;
        while let Some(p) = best_pred[cur] {
            path.push(nodes[p]);
            cur = p;
        }
        path.reverse();
        let r = RegionPath { cost, cycles, path };
        if let Some(l) = region {
            self.memo[l] = Some(r.clone());
        }
        r
    }

    fn expand(&mut self, path: &[Node], sites: &mut BTreeSet<usize>) {
        for &n in path {
            match n {
                Node::Block(b) => sites.extend(self.cfg.blocks[b].sites()),
                Node::Loop(l) => {
                    let inner = self.solve(Some(l)).path;
                    self.expand(&inner, sites);
                }
            }
        }
    }
}

fn worst_path(
    cfg: &Cfg,
    forest: LoopForest,
    bounds: Vec<u32>,
    site_cost: &[Option<f64>],
    base_power_mw: f64,
) -> (f64, u64, BTreeSet<usize>) {
    let block_cost = cfg
        .blocks
        .iter()
        .map(|blk| {
            let live = blk.sites().filter_map(|s| site_cost[s]);
            live.fold((0.0, 0), |(e, n), c| (e + base_power_mw + c, n + 1))
        })
        .collect();
    let mut rpo_pos = vec![usize::MAX; cfg.blocks.len()];
    for (i, &b) in cfg.reverse_postorder().iter().enumerate() {
        rpo_pos[b] = i;
    }
    let n_loops = forest.loops.len();
    let mut solver = PathSolver {
        cfg,
        forest,
        bounds,
        block_cost,
        rpo_pos,
        memo: vec![None; n_loops],
    };
    let top = solver.solve(None);
    let mut sites = BTreeSet::new();
    solver.expand(&top.path, &mut sites);
    (top.cost, top.cycles, sites)
}

/// Worst-case energy bound of one program.
pub fn wcec_bound(
    program: &Program,
    cfg: &Cfg,
    classes: &[Option<SiteClass>],
    model: &EnergyModel,
    options: BoundOptions,
) -> Result<WcecReport, WcecError> {
    let forest = cfg.loops();
    let bounds = loop_bounds(program, cfg, &forest)?;
    let counts = max_counts(program, cfg)?;
    let preds = predecessor_opcodes(program, cfg);
    let all: Vec<Option<Opcode>> = Opcode::ALL.into_iter().map(Some).collect();

    let mut cost = vec![None; program.len()];
    let mut naive = vec![None; program.len()];
    for inst in &program.instructions {
        if counts[inst.site] == 0 {
            continue;
        }
        // proven infeasible by the analyses
        let Some(class) = classes[inst.site].as_ref() else { continue };
        let p = if options.any_predecessor { &all } else { &preds[inst.site] };
        cost[inst.site] = Some(site_worst_cost(class, p.iter().copied(), model));
        naive[inst.site] = Some(site_worst_cost(&class.naive(), p.iter().copied(), model));
    }

    let base = model.base_power_mw();
    let (mw_cycles, cycles, on_path) = worst_path(cfg, forest.clone(), bounds.clone(), &cost, base);
    let (naive_mw_cycles, _, _) = worst_path(cfg, forest, bounds, &naive, base);
    let bound_total_nj = model.mw_cycles_to_nj(mw_cycles);
    let naive_bound_nj = model.mw_cycles_to_nj(naive_mw_cycles);
    Ok(WcecReport {
        bound_total_nj,
        bound_avg_power_mw: if cycles == 0 { base } else { mw_cycles / cycles as f64 },
        worst_path_cycles: cycles,
        per_site_cost_mw: cost,
        per_site_count: counts,
        on_worst_path: on_path,
        naive_bound_nj,
        tightening_ratio: if naive_bound_nj > 0.0 { bound_total_nj / naive_bound_nj } else { 1.0 },
    })
}

/// Analyses and pooled classification of a set of programs run together.
#[derive(Clone, Debug)]
pub struct Analyzed {
    pub programs: Vec<ProgramAnalysis>,
    pub classes: Vec<Vec<Option<SiteClass>>>,
}

pub fn analyze_all(programs: &[Program]) -> Result<Analyzed, CfgError> {
    let analyses = programs.iter().map(analyze_program).collect::<Result<Vec<_>, _>>()?;
    let inputs: Vec<_> = programs
        .iter()
        .zip(&analyses)
        .map(|(p, a)| (p, a.taint.as_slice(), a.intervals.as_slice()))
        .collect();
    let classes = classify_sites(&inputs);
    Ok(Analyzed {
        programs: analyses,
        classes,
    })
}

/// Bound for several threads sharing one pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreadsBound {
    /// One report per thread.
    pub threads: Vec<WcecReport>,
    pub bound_total_nj: f64,
    pub naive_bound_nj: f64,
    pub tightening_ratio: f64,
}

/// Sums per-thread bounds. With more than one thread any opcode may issue
/// right before any site.
pub fn wcec_bound_threads(
    programs: &[Program],
    analyzed: &Analyzed,
    thread_programs: &[usize],
    model: &EnergyModel,
) -> Result<ThreadsBound, WcecError> {
    let options = BoundOptions {
        any_predecessor: thread_programs.len() > 1,
    };
    let threads = thread_programs
        .iter()
        .map(|&p| wcec_bound(&programs[p], &analyzed.programs[p].cfg, &analyzed.classes[p], model, options))
        .collect::<Result<Vec<_>, _>>()?;
    let bound_total_nj = threads.iter().map(|r| r.bound_total_nj).sum();
    let naive_bound_nj: f64 = threads.iter().map(|r| r.naive_bound_nj).sum();
    Ok(ThreadsBound {
        threads,
        bound_total_nj,
        naive_bound_nj,
        tightening_ratio: if naive_bound_nj > 0.0 { bound_total_nj / naive_bound_nj } else { 1.0 },
    })
}
