//! Basic blocks, dominators and natural loops.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::isa::{Op, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    /// First site of the block.
    pub start: usize,
    /// One past the last site.
    pub end: usize,
}

impl BasicBlock {
    pub fn sites(&self) -> core::ops::Range<usize> {
        self.start..self.end
    }

    pub fn last(&self) -> usize {
        self.end - 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CfgError {
    #[error("program has no instructions")]
    Empty,
    #[error("irreducible control flow through blocks {blocks:?}")]
    Irreducible { blocks: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    pub entry: usize,
    /// Targets of back edges.
    pub loop_headers: BTreeSet<usize>,
    /// `(latch, header)` pairs.
    pub back_edges: Vec<(usize, usize)>,
    block_of: Vec<usize>,
    reachable: Vec<bool>,
    rpo: Vec<usize>,
    idom: Vec<Option<usize>>,
}

/// Splits `program` into basic blocks and checks reducibility.
///
/// Blocks start at site 0, at every labelled site and after every branch or
/// `halt`. Falling off the end of the program ends the thread, so the last
/// block may have no successor without ending in `halt`.
pub fn build_cfg(program: &Program) -> Result<Cfg, CfgError> {
    let n = program.len();
    if n == 0 {
        return Err(CfgError::Empty);
    }
    let mut leader = vec![false; n];
    leader[0] = true;
    for &idx in program.labels.values() {
        leader[idx] = true;
    }
    for inst in &program.instructions {
        if let Some(t) = inst.branch_target() {
            leader[t] = true;
        }
        if (inst.opcode().is_branch() || matches!(inst.op, Op::Halt)) && inst.site + 1 < n {
            leader[inst.site + 1] = true;
        }
    }

    let mut blocks = Vec::new();
    let mut block_of = vec![0; n];
    let mut start = 0;
    for site in 1..=n {
        if site == n || leader[site] {
            blocks.push(BasicBlock { start, end: site });
            start = site;
        }
    }
    for (b, block) in blocks.iter().enumerate() {
        for s in block.sites() {
            block_of[s] = b;
        }
    }

    let nb = blocks.len();
    let mut succs = vec![Vec::new(); nb];
    for (b, block) in blocks.iter().enumerate() {
        let last = &program.instructions[block.last()];
        let mut out: Vec<usize> = Vec::new();
        if last.falls_through() && block.end < n {
            out.push(block_of[block.end]);
        }
        if let Some(t) = last.branch_target() {
            let tb = block_of[t];
            if !out.contains(&tb) {
                out.push(tb);
            }
        }
        succs[b] = out;
    }
    let mut preds = vec![Vec::new(); nb];
    for (b, ss) in succs.iter().enumerate() {
        for &s in ss {
            preds[s].push(b);
        }
    }

    let entry = 0;
    let rpo = reverse_postorder(&succs, entry);
    let mut reachable = vec![false; nb];
    for &b in &rpo {
        reachable[b] = true;
    }
    let idom = dominators(&rpo, &preds, &reachable, entry);

    let mut cfg = Cfg {
        blocks,
        succs,
        preds,
        entry,
        loop_headers: BTreeSet::new(),
        back_edges: Vec::new(),
        block_of,
        reachable,
        rpo,
        idom,
    };
    for &u in &cfg.rpo {
        for &h in &cfg.succs[u] {
            if cfg.dominates(h, u) {
                cfg.back_edges.push((u, h));
                cfg.loop_headers.insert(h);
            }
        }
    }
    cfg.check_reducible()?;
    Ok(cfg)
}

fn reverse_postorder(succs: &[Vec<usize>], entry: usize) -> Vec<usize> {
    let mut visited = vec![false; succs.len()];
    let mut post = Vec::with_capacity(succs.len());
    let mut stack = vec![(entry, 0usize)];
    visited[entry] = true;
    while let Some(&mut (b, ref mut i)) = stack.last_mut() {
        if let Some(&s) = succs[b].get(*i) {
            *i += 1;
            if !visited[s] {
                visited[s] = true;
                stack.push((s, 0));
            }
        } else {
            post.push(b);
            stack.pop();
        }
    }
    post.reverse();
    post
}

// Cooper, Harvey and Kennedy's iterative scheme over reverse postorder.
fn dominators(
    rpo: &[usize],
    preds: &[Vec<usize>],
    reachable: &[bool],
    entry: usize,
) -> Vec<Option<usize>> {
    let mut order = vec![usize::MAX; preds.len()];
    for (i, &b) in rpo.iter().enumerate() {
        order[b] = i;
    }
    let mut idom: Vec<Option<usize>> = vec![None; preds.len()];
    idom[entry] = Some(entry);
    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
        while a != b {
            while order[a] > order[b] {
                a = idom[a].expect("processed");
            }
            while order[b] > order[a] {
                b = idom[b].expect("processed");
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &b in rpo.iter().skip(1) {
            let mut new_idom: Option<usize> = None;
            for &p in &preds[b] {
                if !reachable[p] || idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(&idom, p, cur),
                });
            }
            if new_idom.is_some() && idom[b] != new_idom {
                idom[b] = new_idom;
                changed = true;
            }
        }
    }
    idom
}

impl Cfg {
    pub fn block_of(&self, site: usize) -> usize {
        self.block_of[site]
    }

    pub fn is_reachable(&self, block: usize) -> bool {
        self.reachable[block]
    }

    pub fn reverse_postorder(&self) -> &[usize] {
        &self.rpo
    }

    /// Does block `a` dominate block `b`? Unreachable blocks are dominated
    /// by nothing.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        if !self.reachable[a] || !self.reachable[b] {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur] {
                Some(d) if d != cur => cur = d,
                _ => return false,
            }
        }
    }

    pub fn is_back_edge(&self, from: usize, to: usize) -> bool {
        self.back_edges.contains(&(from, to))
    }

    fn check_reducible(&self) -> Result<(), CfgError> {
        let nb = self.blocks.len();
        let mut indeg = vec![0usize; nb];
        for &u in &self.rpo {
            for &v in &self.succs[u] {
                if !self.is_back_edge(u, v) {
                    indeg[v] += 1;
                }
            }
        }
        let mut ready: Vec<usize> = self.rpo.iter().copied().filter(|&b| indeg[b] == 0).collect();
        let mut seen = 0;
        while let Some(u) = ready.pop() {
            seen += 1;
            for &v in &self.succs[u] {
                if !self.is_back_edge(u, v) {
                    indeg[v] -= 1;
                    if indeg[v] == 0 {
                        ready.push(v);
                    }
                }
            }
        }
        if seen == self.rpo.len() {
            Ok(())
        } else {
            // Peel off blocks that merely hang below the offending cycle.
            let mut stuck: BTreeSet<usize> = self.rpo.iter().copied().filter(|&b| indeg[b] > 0).collect();
            loop {
                let sinks: Vec<usize> = stuck
                    .iter()
                    .copied()
                    .filter(|&b| {
                        !self.succs[b]
                            .iter()
                            .any(|&s| stuck.contains(&s) && !self.is_back_edge(b, s))
                    })
                    .collect();
                if sinks.is_empty() {
                    break;
                }
                for b in sinks {
                    stuck.remove(&b);
                }
            }
            Err(CfgError::Irreducible {
                blocks: stuck.into_iter().collect(),
            })
        }
    }

    /// Natural loops, one per header, with their nesting.
    pub fn loops(&self) -> LoopForest {
        let mut loops: Vec<Loop> = Vec::new();
        for &h in &self.loop_headers {
            let latches: Vec<usize> = self
                .back_edges
                .iter()
                .filter(|&&(_, hh)| hh == h)
                .map(|&(u, _)| u)
                .collect();
            let mut body = BTreeSet::new();
            body.insert(h);
            let mut stack: Vec<usize> = latches.clone();
            while let Some(b) = stack.pop() {
                if body.insert(b) {
                    stack.extend(self.preds[b].iter().copied().filter(|&p| self.reachable[p]));
                }
            }
            loops.push(Loop {
                header: h,
                latches,
                blocks: body,
                parent: None,
                depth: 0,
            });
        }
        for i in 0..loops.len() {
            let parent = (0..loops.len())
                .filter(|&j| {
                    j != i
                        && loops[j].blocks.len() > loops[i].blocks.len()
                        && loops[j].blocks.contains(&loops[i].header)
                })
                .min_by_key(|&j| loops[j].blocks.len());
            loops[i].parent = parent;
        }
        for i in 0..loops.len() {
            let mut depth = 1;
            let mut p = loops[i].parent;
            while let Some(j) = p {
                depth += 1;
                p = loops[j].parent;
            }
            loops[i].depth = depth;
        }
        let mut innermost = vec![None; self.blocks.len()];
        for (b, slot) in innermost.iter_mut().enumerate() {
            *slot = (0..loops.len())
                .filter(|&l| loops[l].blocks.contains(&b))
                .min_by_key(|&l| loops[l].blocks.len());
        }
        LoopForest { loops, innermost }
    }

    /// Declared bound of the loop headed by `lp.header`: the largest bound
    /// among its latches. `None` if some back edge is not an annotated branch.
    pub fn loop_bound(&self, program: &Program, lp: &Loop) -> Option<u32> {
        let head_site = self.blocks[lp.header].start;
        let mut bound = None;
        for &latch in &lp.latches {
            let last = &program.instructions[self.blocks[latch].last()];
            if last.branch_target() != Some(head_site) {
                return None;
            }
            let b = *program.loop_bounds.get(&last.site)?;
            bound = Some(bound.map_or(b, |cur: u32| cur.max(b)));
        }
        bound
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loop {
    pub header: usize,
    pub latches: Vec<usize>,
    /// All blocks of the loop including the header and nested loops.
    pub blocks: BTreeSet<usize>,
    pub parent: Option<usize>,
    /// 1 for outermost loops.
    pub depth: usize,
}

#[derive(Clone, Debug)]
pub struct LoopForest {
    pub loops: Vec<Loop>,
    /// Innermost loop containing each block.
    pub innermost: Vec<Option<usize>>,
}

impl LoopForest {
    /// Loop whose header is `block`.
    pub fn headed_by(&self, block: usize) -> Option<usize> {
        self.loops.iter().position(|l| l.header == block)
    }

    /// Loops enclosing `block`, innermost first.
    pub fn enclosing(&self, block: usize) -> impl Iterator<Item = usize> + '_ {
        core::iter::successors(self.innermost[block], move |&l| self.loops[l].parent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;

    #[test]
    fn straight_line_is_one_block() {
        let p = parse_program("nop\nnop\nhalt").unwrap();
        let cfg = build_cfg(&p).unwrap();
        assert_eq!(cfg.blocks, [BasicBlock { start: 0, end: 3 }]);
        assert!(cfg.succs[0].is_empty());
        assert!(cfg.loop_headers.is_empty());
    }

    #[test]
    fn core_loop_has_self_back_edge() {
        let p = parse_program(
            ".LBB0_1:\nsub r9, r8, 1\nldw r10, r4[r9]\nstw r10, r4[r8]\nldw r8, r2[r8]\nnop\nmov r8, r9\n.loopbound 17\nbt r9, .LBB0_1",
        )
        .unwrap();
        let cfg = build_cfg(&p).unwrap();
        assert_eq!(cfg.blocks.len(), 1);
        assert_eq!(cfg.back_edges, [(0, 0)]);
        assert_eq!(cfg.loop_headers.iter().copied().collect::<Vec<_>>(), [0]);
        let forest = cfg.loops();
        assert_eq!(cfg.loop_bound(&p, &forest.loops[0]), Some(17));
    }

    #[test]
    fn loop_after_preheader() {
        let p = parse_program("ldc r8, 17\nbody:\nsub r8, r8, 1\n.loopbound 17\nbt r8, body\nhalt").unwrap();
        let cfg = build_cfg(&p).unwrap();
        assert_eq!(cfg.blocks.len(), 3);
        assert_eq!(cfg.succs[0], [1]);
        assert_eq!(cfg.succs[1], [2, 1]);
        assert_eq!(cfg.back_edges, [(1, 1)]);
        for site in 0..p.len() {
            assert!(cfg.blocks[cfg.block_of(site)].sites().contains(&site));
        }
    }

    #[test]
    fn irreducible_rejected() {
        let p = parse_program("in r0\nbt r0, b\na:\nnop\nb:\nnop\n.loopbound 4\nbt r0, a\nhalt").unwrap();
        match build_cfg(&p) {
            Err(CfgError::Irreducible { blocks }) => assert_eq!(blocks, [1, 2]),
            other => panic!("expected irreducible, got {other:?}"),
        }
    }

    #[test]
    fn nested_loops() {
        let p = parse_program(
            "ldc r0, 5\nouter:\nldc r1, 3\ninner:\nsub r1, r1, 1\n.loopbound 3\nbt r1, inner\nsub r0, r0, 1\n.loopbound 5\nbt r0, outer\nhalt",
        )
        .unwrap();
        let cfg = build_cfg(&p).unwrap();
        let forest = cfg.loops();
        assert_eq!(forest.loops.len(), 2);
        let inner_block = cfg.block_of(3);
        let chain: Vec<usize> = forest.enclosing(inner_block).collect();
        assert_eq!(chain.len(), 2);
        assert_eq!(forest.loops[chain[0]].depth, 2);
        assert_eq!(cfg.loop_bound(&p, &forest.loops[chain[0]]), Some(3));
        assert_eq!(cfg.loop_bound(&p, &forest.loops[chain[1]]), Some(5));
    }
}
