use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{
    AluOp, Base, Const, DataSegment, Instruction, MemRef, Op, Opcode, Program, Reg, Src, Target,
    TaintSources,
};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: unknown opcode `{name}`")]
    UnknownOpcode { line: usize, name: String },
    #[error("line {line}: `{opcode}` takes {expected} operand(s), found {found}")]
    Arity {
        line: usize,
        opcode: Opcode,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: backward branch has no `.loopbound` annotation")]
    MissingLoopBound { line: usize },
    #[error("line {line}: loop bound must be a positive integer")]
    NonPositiveLoopBound { line: usize },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::UnknownOpcode { line, .. }
            | ParseError::Arity { line, .. }
            | ParseError::UndefinedLabel { line, .. }
            | ParseError::MissingLoopBound { line }
            | ParseError::NonPositiveLoopBound { line }
            | ParseError::Invalid { line, .. } => *line,
        }
    }
}

/// Parses a single-thread program.
///
/// One instruction, label or directive per line (a label may share its line
/// with an instruction); `#` starts a comment. `.loopbound N` attaches to the
/// next branch instruction.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    parse_lines(text.lines().enumerate())
}

/// Parses a file that may contain several per-thread programs separated by
/// `.thread <k>` directives. Without any `.thread` line the whole text is one
/// program.
pub fn parse_threads(text: &str) -> Result<Vec<Program>, ParseError> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().collect();
    let mut chunks: Vec<Vec<(usize, &str)>> = Vec::new();
    let mut preamble: Vec<(usize, &str)> = Vec::new();
    for &(idx, raw) in &lines {
        let code = strip_comment(raw).trim();
        let mut words = code.split_whitespace();
        if words.next() == Some(".thread") {
            let line = idx + 1;
            let k: usize = words.next().and_then(|w| w.parse().ok()).ok_or_else(|| {
                ParseError::Syntax {
                    line,
                    column: 1,
                    message: "expected `.thread <index>`".into(),
                }
            })?;
            if k != chunks.len() {
                return Err(ParseError::Invalid {
                    line,
                    message: format!("expected thread {}, found thread {k}", chunks.len()),
                });
            }
            chunks.push(Vec::new());
        } else if let Some(chunk) = chunks.last_mut() {
            chunk.push((idx, raw));
        } else {
            preamble.push((idx, raw));
        }
    }
    if chunks.is_empty() {
        return Ok(alloc::vec![parse_lines(preamble.into_iter())?]);
    }
    if let Some(&(idx, _)) = preamble
        .iter()
        .find(|(_, raw)| !strip_comment(raw).trim().is_empty())
    {
        return Err(ParseError::Invalid {
            line: idx + 1,
            message: "code before the first `.thread` directive".into(),
        });
    }
    chunks
        .into_iter()
        .map(|chunk| parse_lines(chunk.into_iter()))
        .collect()
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

#[derive(Debug)]
enum Operand {
    Reg(Reg),
    Imm(u32),
    Ident(String),
    Mem(MemRef),
}

struct RawInstruction {
    line: usize,
    opcode: Opcode,
    operands: Vec<(Operand, usize)>,
    bound: Option<u32>,
}

struct Builder {
    raw: Vec<RawInstruction>,
    labels: BTreeMap<String, (usize, usize)>,
    pending_labels: Vec<(String, usize)>,
    pending_bound: Option<(u32, usize)>,
    data: Vec<(DataSegment, usize)>,
    taint: Vec<(String, usize, usize)>,
}

fn parse_lines<'a>(lines: impl Iterator<Item = (usize, &'a str)>) -> Result<Program, ParseError> {
    let mut b = Builder {
        raw: Vec::new(),
        labels: BTreeMap::new(),
        pending_labels: Vec::new(),
        pending_bound: None,
        data: Vec::new(),
        taint: Vec::new(),
    };
    for (idx, raw_line) in lines {
        b.line(idx + 1, strip_comment(raw_line))?;
    }
    b.finish()
}

impl Builder {
    fn line(&mut self, line: usize, code: &str) -> Result<(), ParseError> {
        let mut rest = code;
        let lead = rest.len() - rest.trim_start().len();
        rest = rest.trim();
        if rest.is_empty() {
            return Ok(());
        }
        let mut column = lead + 1;

        // `label:` optionally followed by an instruction.
        let first_len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        if let Some(name) = rest[..first_len].strip_suffix(':') {
            if !is_identifier(name) {
                return Err(syntax(line, column, format!("invalid label `{name}`")));
            }
            if self.labels.contains_key(name)
                || self.pending_labels.iter().any(|(n, _)| n == name)
            {
                return Err(invalid(line, format!("duplicate label `{name}`")));
            }
            self.pending_labels.push((name.to_owned(), line));
            let after = &rest[first_len..];
            let skipped = after.len() - after.trim_start().len();
            column += first_len + skipped;
            rest = after.trim();
            if rest.is_empty() {
                return Ok(());
            }
        }

        if rest.starts_with('.') {
            return self.directive(line, column, rest);
        }
        self.instruction(line, column, rest)
    }

    fn directive(&mut self, line: usize, column: usize, text: &str) -> Result<(), ParseError> {
        let mut words = text.split_whitespace();
        let name = words.next().unwrap_or_default();
        match name {
            ".loopbound" => {
                let arg = words
                    .next()
                    .ok_or_else(|| syntax(line, column, "expected `.loopbound <N>`".into()))?;
                if words.next().is_some() {
                    return Err(syntax(line, column, "trailing tokens after loop bound".into()));
                }
                let value: i64 = arg
                    .parse()
                    .map_err(|_| syntax(line, column, format!("invalid loop bound `{arg}`")))?;
                if value <= 0 {
                    return Err(ParseError::NonPositiveLoopBound { line });
                }
                let value = u32::try_from(value)
                    .map_err(|_| syntax(line, column, format!("loop bound `{arg}` too large")))?;
                if self.pending_bound.is_some() {
                    return Err(invalid(line, "two `.loopbound` directives for one branch".into()));
                }
                self.pending_bound = Some((value, line));
                Ok(())
            }
            ".data" => {
                let seg_name = words
                    .next()
                    .ok_or_else(|| syntax(line, column, "expected `.data <name> <len>`".into()))?;
                if !is_identifier(seg_name) || parse_register(seg_name).is_some() {
                    return Err(syntax(line, column, format!("invalid segment name `{seg_name}`")));
                }
                let len_text = words
                    .next()
                    .ok_or_else(|| syntax(line, column, "expected segment length".into()))?;
                let len: usize = len_text
                    .parse()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| {
                        syntax(line, column, format!("invalid segment length `{len_text}`"))
                    })?;
                let mut words_init = Vec::new();
                match words.next() {
                    None => {}
                    Some("=") => {
                        for w in words {
                            let v = parse_immediate(w).ok_or_else(|| {
                                syntax(line, column, format!("invalid word `{w}`"))
                            })?;
                            words_init.push(v);
                        }
                    }
                    Some(other) => {
                        return Err(syntax(line, column, format!("expected `=`, found `{other}`")))
                    }
                }
                if words_init.len() > len {
                    return Err(invalid(
                        line,
                        format!("segment `{seg_name}` has {len} words but {} initial values", words_init.len()),
                    ));
                }
                if self.data.iter().any(|(s, _)| s.name == seg_name) {
                    return Err(invalid(line, format!("duplicate segment `{seg_name}`")));
                }
                words_init.resize(len, 0);
                self.data.push((
                    DataSegment {
                        name: seg_name.to_owned(),
                        words: words_init,
                    },
                    line,
                ));
                Ok(())
            }
            ".taint" => {
                let mut any = false;
                for w in words {
                    self.taint.push((w.trim_end_matches(',').to_owned(), line, column));
                    any = true;
                }
                if !any {
                    return Err(syntax(line, column, "expected `.taint <register|segment>`".into()));
                }
                Ok(())
            }
            ".thread" => Err(invalid(
                line,
                "`.thread` is only valid in multi-thread files".into(),
            )),
            other => Err(syntax(line, column, format!("unknown directive `{other}`"))),
        }
    }

    fn instruction(&mut self, line: usize, column: usize, text: &str) -> Result<(), ParseError> {
        let name_len = text.find(char::is_whitespace).unwrap_or(text.len());
        let name = &text[..name_len];
        let opcode = Opcode::from_name(name).ok_or_else(|| ParseError::UnknownOpcode {
            line,
            name: name.to_owned(),
        })?;
        let operand_text = &text[name_len..];
        let mut operands = Vec::new();
        if !operand_text.trim().is_empty() {
            let mut offset = column + name_len;
            for piece in operand_text.split(',') {
                let lead = piece.len() - piece.trim_start().len();
                let trimmed = piece.trim();
                let col = offset + lead;
                if trimmed.is_empty() {
                    return Err(syntax(line, col, "empty operand".into()));
                }
                operands.push((parse_operand(trimmed, line, col)?, col));
                offset += piece.len() + 1;
            }
        }
        let expected = operand_arity(opcode);
        if operands.len() != expected {
            return Err(ParseError::Arity {
                line,
                opcode,
                expected,
                found: operands.len(),
            });
        }
        let bound = if opcode.is_branch() {
            self.pending_bound.take().map(|(v, _)| v)
        } else {
            None
        };
        let index = self.raw.len();
        for (label, _) in self.pending_labels.drain(..) {
            self.labels.insert(label, (index, line));
        }
        self.raw.push(RawInstruction {
            line,
            opcode,
            operands,
            bound,
        });
        Ok(())
    }

    fn finish(self) -> Result<Program, ParseError> {
        if let Some((label, line)) = self.pending_labels.first() {
            return Err(invalid(*line, format!("label `{label}` is not followed by an instruction")));
        }
        if let Some((_, line)) = self.pending_bound {
            return Err(invalid(line, "`.loopbound` is not followed by a branch".into()));
        }
        let data: Vec<DataSegment> = self.data.into_iter().map(|(s, _)| s).collect();
        let has_segment = |name: &str| data.iter().any(|s| s.name == name);

        let mut taint_sources = TaintSources::default();
        for (name, line, column) in self.taint {
            if let Some(r) = parse_register(&name) {
                taint_sources
                    .registers
                    .insert(r.ok_or_else(|| syntax(line, column, format!("invalid register `{name}`")))?);
            } else if has_segment(&name) {
                taint_sources.segments.insert(name);
            } else {
                return Err(invalid(line, format!("unknown segment `{name}` in `.taint`")));
            }
        }

        let labels: BTreeMap<String, usize> =
            self.labels.iter().map(|(k, (i, _))| (k.clone(), *i)).collect();
        let mut instructions = Vec::with_capacity(self.raw.len());
        let mut loop_bounds = BTreeMap::new();
        for (site, raw) in self.raw.into_iter().enumerate() {
            let op = build_op(&raw, &labels, &has_segment)?;
            let inst = Instruction { site, op };
            if inst.is_backward_branch() {
                let bound = raw.bound.ok_or(ParseError::MissingLoopBound { line: raw.line })?;
                loop_bounds.insert(site, bound);
            } else if raw.bound.is_some() {
                return Err(invalid(raw.line, "`.loopbound` on a forward branch".into()));
            }
            instructions.push(inst);
        }
        Ok(Program {
            instructions,
            labels,
            loop_bounds,
            taint_sources,
            data,
        })
    }
}

fn operand_arity(opcode: Opcode) -> usize {
    match opcode {
        Opcode::Add | Opcode::Sub | Opcode::Xor | Opcode::And | Opcode::Or | Opcode::Lmul => 3,
        Opcode::Maccs => 4,
        Opcode::Ldw | Opcode::Stw | Opcode::Ldc | Opcode::Mov | Opcode::Bt => 2,
        Opcode::Bu | Opcode::In | Opcode::Out => 1,
        Opcode::Nop | Opcode::Halt => 0,
    }
}

fn build_op(
    raw: &RawInstruction,
    labels: &BTreeMap<String, usize>,
    has_segment: &dyn Fn(&str) -> bool,
) -> Result<Op, ParseError> {
    let line = raw.line;
    let ops = &raw.operands;
    let reg = |i: usize| -> Result<Reg, ParseError> {
        match &ops[i].0 {
            Operand::Reg(r) => Ok(*r),
            _ => Err(syntax(line, ops[i].1, "expected a register".into())),
        }
    };
    let src = |i: usize| -> Result<Src, ParseError> {
        match &ops[i].0 {
            Operand::Reg(r) => Ok(Src::Reg(*r)),
            Operand::Imm(v) => Ok(Src::Imm(*v)),
            _ => Err(syntax(line, ops[i].1, "expected a register or immediate".into())),
        }
    };
    let target = |i: usize| -> Result<Target, ParseError> {
        match &ops[i].0 {
            Operand::Ident(name) => match labels.get(name) {
                Some(&index) => Ok(Target {
                    label: name.clone(),
                    index,
                }),
                None => Err(ParseError::UndefinedLabel {
                    line,
                    label: name.clone(),
                }),
            },
            _ => Err(syntax(line, ops[i].1, "expected a label".into())),
        }
    };
    let mem = |i: usize| -> Result<MemRef, ParseError> {
        match &ops[i].0 {
            Operand::Mem(m) => {
                if let Base::Segment(name) = &m.base {
                    if !has_segment(name) {
                        return Err(invalid(line, format!("unknown segment `{name}`")));
                    }
                }
                Ok(m.clone())
            }
            _ => Err(syntax(line, ops[i].1, "expected a memory operand `base[index]`".into())),
        }
    };
    let alu = |op: AluOp| -> Result<Op, ParseError> {
        Ok(Op::Alu {
            op,
            rd: reg(0)?,
            ra: reg(1)?,
            rb: src(2)?,
        })
    };
    Ok(match raw.opcode {
        Opcode::Add => alu(AluOp::Add)?,
        Opcode::Sub => alu(AluOp::Sub)?,
        Opcode::Xor => alu(AluOp::Xor)?,
        Opcode::And => alu(AluOp::And)?,
        Opcode::Or => alu(AluOp::Or)?,
        Opcode::Lmul => alu(AluOp::Lmul)?,
        Opcode::Maccs => Op::Maccs {
            hi: reg(0)?,
            lo: reg(1)?,
            a: reg(2)?,
            b: reg(3)?,
        },
        Opcode::Ldw => Op::Ldw {
            rd: reg(0)?,
            addr: mem(1)?,
        },
        Opcode::Stw => Op::Stw {
            rs: reg(0)?,
            addr: mem(1)?,
        },
        Opcode::Ldc => Op::Ldc {
            rd: reg(0)?,
            value: match &ops[1].0 {
                Operand::Imm(v) => Const::Imm(*v),
                Operand::Ident(name) if has_segment(name) => Const::Segment(name.clone()),
                Operand::Ident(name) => {
                    return Err(invalid(line, format!("unknown segment `{name}`")))
                }
                _ => return Err(syntax(line, ops[1].1, "expected an immediate or segment".into())),
            },
        },
        Opcode::Mov => Op::Mov {
            rd: reg(0)?,
            rs: reg(1)?,
        },
        Opcode::Nop => Op::Nop,
        Opcode::Bt => Op::Bt {
            cond: reg(0)?,
            target: target(1)?,
        },
        Opcode::Bu => Op::Bu { target: target(0)? },
        Opcode::In => Op::In { rd: reg(0)? },
        Opcode::Out => Op::Out { rs: reg(0)? },
        Opcode::Halt => Op::Halt,
    })
}

fn parse_operand(text: &str, line: usize, column: usize) -> Result<Operand, ParseError> {
    if let Some(open) = text.find('[') {
        let inner = text[open + 1..]
            .strip_suffix(']')
            .ok_or_else(|| syntax(line, column + text.len(), "expected `]`".into()))?
            .trim();
        let base_text = text[..open].trim();
        let base = match parse_register(base_text) {
            Some(Some(r)) => Base::Reg(r),
            Some(None) => return Err(syntax(line, column, format!("invalid register `{base_text}`"))),
            None if is_identifier(base_text) => Base::Segment(base_text.to_owned()),
            None => return Err(syntax(line, column, format!("invalid memory base `{base_text}`"))),
        };
        let index_col = column + open + 1;
        let index = match parse_register(inner) {
            Some(Some(r)) => Src::Reg(r),
            Some(None) => return Err(syntax(line, index_col, format!("invalid register `{inner}`"))),
            None => Src::Imm(
                parse_immediate(inner)
                    .ok_or_else(|| syntax(line, index_col, format!("invalid index `{inner}`")))?,
            ),
        };
        return Ok(Operand::Mem(MemRef { base, index }));
    }
    match parse_register(text) {
        Some(Some(r)) => return Ok(Operand::Reg(r)),
        Some(None) => return Err(syntax(line, column, format!("invalid register `{text}`"))),
        None => {}
    }
    if let Some(v) = parse_immediate(text) {
        return Ok(Operand::Imm(v));
    }
    if is_identifier(text) {
        return Ok(Operand::Ident(text.to_owned()));
    }
    Err(syntax(line, column, format!("invalid operand `{text}`")))
}

/// `None` if `text` does not look like a register; `Some(None)` if it does
/// but is out of range.
fn parse_register(text: &str) -> Option<Option<Reg>> {
    let digits = text.strip_prefix('r').or_else(|| text.strip_prefix('R'))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(digits.parse::<u8>().ok().and_then(Reg::new))
}

fn parse_immediate(text: &str) -> Option<u32> {
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let value = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse::<u64>().ok()?
    } else {
        return None;
    };
    if negative {
        (value <= 1 << 31).then(|| (value as u32).wrapping_neg())
    } else {
        u32::try_from(value).ok()
    }
}

fn is_identifier(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.' || c == '$' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$')
}

fn syntax(line: usize, column: usize, message: String) -> ParseError {
    ParseError::Syntax {
        line,
        column,
        message,
    }
}

fn invalid(line: usize, message: String) -> ParseError {
    ParseError::Invalid { line, message }
}
