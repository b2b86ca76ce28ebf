//! Random structured programs for soundness and counting tests.

use alloc::string::String;
use core::fmt::Write;

use rand_core::RngCore;

/// Shape limits for [`random_program`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomProgramSpec {
    /// Loop nesting depth, at most 2.
    pub max_loop_depth: usize,
    /// Largest loop bound, at least 2.
    pub max_bound: u32,
    /// Rough number of statements per block.
    pub block_len: usize,
    /// Cap on `in` instructions in the whole program.
    pub max_inputs: usize,
    /// Allow conditionals on computed data rather than fresh input.
    /// Such branches may be infeasible, so counts become loose.
    pub data_conditions: bool,
}

impl Default for RandomProgramSpec {
    fn default() -> Self {
        RandomProgramSpec {
            max_loop_depth: 2,
            max_bound: 8,
            block_len: 5,
            max_inputs: 8,
            data_conditions: true,
        }
    }
}

struct Gen<'a, R> {
    rng: &'a mut R,
    spec: RandomProgramSpec,
    out: String,
    labels: usize,
    inputs: usize,
}

const ALU: [&str; 6] = ["add", "sub", "xor", "and", "or", "lmul"];

impl<R: RngCore> Gen<'_, R> {
    fn below(&mut self, n: u32) -> u32 {
        self.rng.next_u32() % n
    }

    fn data_reg(&mut self) -> u32 {
        self.below(8)
    }

    fn imm(&mut self) -> u32 {
        match self.below(3) {
            0 => self.below(16),
            1 => self.below(1 << 16),
            _ => self.rng.next_u32(),
        }
    }

    fn label(&mut self, prefix: &str) -> String {
        self.labels += 1;
        alloc::format!("{prefix}{}", self.labels)
    }

    fn line(&mut self, s: &str) {
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn take_input(&mut self) -> bool {
        if self.inputs < self.spec.max_inputs {
            self.inputs += 1;
            true
        } else {
            false
        }
    }

    fn statement(&mut self, loops: usize, ifs: usize) {
        let kinds = 12;
        match self.below(kinds) {
            0..=2 => {
                let op = ALU[self.below(6) as usize];
                let (d, a) = (self.data_reg(), self.data_reg());
                let line = if self.below(3) == 0 {
                    alloc::format!("{op} r{d}, r{a}, {}", self.imm())
                } else {
                    alloc::format!("{op} r{d}, r{a}, r{}", self.data_reg())
                };
                self.line(&line);
            }
            3 => {
                let h = self.data_reg();
                let l = (h + 1 + self.below(7)) % 8;
                let line = alloc::format!("maccs r{h}, r{l}, r{}, r{}", self.data_reg(), self.data_reg());
                self.line(&line);
            }
            4 => {
                let line = alloc::format!("ldc r{}, {}", self.data_reg(), self.imm());
                self.line(&line);
            }
            5 => {
                let line = alloc::format!("mov r{}, r{}", self.data_reg(), self.data_reg());
                self.line(&line);
            }
            6 => {
                if self.take_input() {
                    let line = alloc::format!("in r{}", self.data_reg());
                    self.line(&line);
                } else {
                    self.line("nop");
                }
            }
            7 => {
                let line = alloc::format!("out r{}", self.data_reg());
                self.line(&line);
            }
            8 => {
                let line = alloc::format!("and r8, r{}, 7", self.data_reg());
                self.line(&line);
                let v = self.data_reg();
                if self.below(2) == 0 {
                    let line = alloc::format!("stw r{v}, buf[r8]");
                    self.line(&line);
                } else {
                    self.line("ldc r9, buf");
                    let line = alloc::format!("stw r{v}, r9[r8]");
                    self.line(&line);
                }
            }
            9 => {
                let line = alloc::format!("and r8, r{}, 7", self.data_reg());
                self.line(&line);
                let d = self.data_reg();
                if self.below(2) == 0 {
                    let line = alloc::format!("ldw r{d}, buf[r8]");
                    self.line(&line);
                } else {
                    self.line("ldc r9, buf");
                    let line = alloc::format!("ldw r{d}, r9[r8]");
                    self.line(&line);
                }
            }
            10 if loops < self.spec.max_loop_depth => self.emit_loop(loops, ifs),
            11 if ifs < 2 => self.emit_if(loops, ifs),
            _ => self.line("nop"),
        }
    }

    fn block(&mut self, loops: usize, ifs: usize) {
        let n = 1 + self.below(self.spec.block_len as u32);
        for _ in 0..n {
            self.statement(loops, ifs);
        }
    }

    fn emit_loop(&mut self, loops: usize, ifs: usize) {
        let counter = 10 + loops;
        let max = self.spec.max_bound.max(2);
        let bound = if self.below(3) == 0 && self.take_input() {
            // data-dependent trip count in [1, mask + 1]
            let mask = [1u32, 3, 7].into_iter().rfind(|&m| m < max).unwrap_or(1);
            let line = alloc::format!("in r{counter}\nand r{counter}, r{counter}, {mask}\nadd r{counter}, r{counter}, 1");
            self.line(&line);
            mask + 1
        } else {
            let k = 1 + self.below(max);
            let line = alloc::format!("ldc r{counter}, {k}");
            self.line(&line);
            k
        };
        let head = self.label("loop");
        let line = alloc::format!("{head}:");
        self.line(&line);
        self.block(loops + 1, ifs);
        let line = alloc::format!("sub r{counter}, r{counter}, 1\n.loopbound {bound}\nbt r{counter}, {head}");
        self.line(&line);
    }

    fn emit_if(&mut self, loops: usize, ifs: usize) {
        let (then_l, end_l) = (self.label("then"), self.label("end"));
        if self.spec.data_conditions && self.below(2) == 0 {
            let line = alloc::format!("and r9, r{}, {}", self.data_reg(), 1 + self.below(15));
            self.line(&line);
        } else if self.take_input() {
            self.line("in r9\nand r9, r9, 1");
        } else {
            // out of input: a fixed condition would leave one arm dead
            self.block(loops, ifs + 1);
            return;
        }
        let line = alloc::format!("bt r9, {then_l}");
        self.line(&line);
        self.block(loops, ifs + 1);
        let line = alloc::format!("bu {end_l}\n{then_l}:");
        self.line(&line);
        self.block(loops, ifs + 1);
        let line = alloc::format!("{end_l}:");
        self.line(&line);
    }
}

/// Assembly text of a random terminating program.
///
/// Data lives in r0..r7 and the 8-word segment `buf`; r8 and r9 are
/// scratch, r10 and r11 are loop counters. Loops run `ldc`-initialised or
/// input-derived trip counts no larger than their declared bound.
/// Conditionals branch on a fresh input bit or, with
/// [`RandomProgramSpec::data_conditions`], on masked data.
pub fn random_program<R: RngCore>(rng: &mut R, spec: &RandomProgramSpec) -> String {
    let mut g = Gen {
        rng,
        spec: *spec,
        out: String::new(),
        labels: 0,
        inputs: 0,
    };
    let _ = write!(g.out, ".data buf 8 =");
    for _ in 0..8 {
        let w = g.imm();
        let _ = write!(g.out, " {w}");
    }
    g.out.push('\n');
    let n = 1 + g.below(3);
    for _ in 0..n {
        g.block(0, 0);
    }
    g.line("halt");
    g.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;
    use rand_core::SeedableRng;
    use rand_xoshiro::SplitMix64;

    #[test]
    fn programs_parse_and_are_deterministic() {
        for seed in 0..200 {
            let spec = RandomProgramSpec::default();
            let a = random_program(&mut SplitMix64::seed_from_u64(seed), &spec);
            let b = random_program(&mut SplitMix64::seed_from_u64(seed), &spec);
            assert_eq!(a, b);
            let p = parse_program(&a).unwrap_or_else(|e| panic!("{e}\n{a}"));
            assert!(p.instructions.iter().filter(|i| i.opcode() == crate::isa::Opcode::In).count() <= spec.max_inputs);
        }
    }
}
