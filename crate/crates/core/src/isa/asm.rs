//! Two-pass assembler producing flat little-endian binary images.
//!
//! Supported syntax: one statement per line, `#` comments, `label:` prefixes,
//! the RV32IM and SIMT mnemonics, a handful of standard pseudo-instructions
//! (`li`, `la`, `mv`, `j`, `ret`, `beqz`, ...), the data directives `.word`,
//! `.ascii` and `.align`, and the divergence macros `__if reg` / `__else` /
//! `__endif`.
//!
//! `__if p` expands to `split p` followed by a branch over the then-block,
//! `__else` to a jump over the else-block, and `__endif` to `join`. The
//! branch sits at split-PC+4, which is where the false-path entry pushed by
//! `split` resumes: re-executing the branch under the false mask routes those
//! lanes to the else-block (or straight to the join).
//!
//! Numeric branch and jump operands are program-counter-relative offsets;
//! label operands are resolved to offsets from the instruction address.

use std::collections::BTreeMap;
use std::fmt;

use super::{encode, mnemonic, parse_reg, DecodedInstr, Opcode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsmErrorKind {
    Syntax(String),
    UndefinedLabel(String),
    DuplicateLabel(String),
    UnbalancedMacro(String),
    RangeError(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

impl fmt::Display for AsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match &self.kind {
            AsmErrorKind::Syntax(m) => format!("syntax error: {m}"),
            AsmErrorKind::UndefinedLabel(l) => format!("undefined label `{l}`"),
            AsmErrorKind::DuplicateLabel(l) => format!("duplicate label `{l}`"),
            AsmErrorKind::UnbalancedMacro(m) => format!("unbalanced macro: {m}"),
            AsmErrorKind::RangeError(m) => format!("value out of range: {m}"),
        };
        write!(f, "line {}: {}", self.line, what)
    }
}

impl std::error::Error for AsmError {}

/// Assembler output: the binary image plus the resolved symbol table.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub image: Vec<u8>,
    pub symbols: BTreeMap<String, u32>,
    pub origin: u32,
}

impl Assembled {
    /// Entry point: the `_start` symbol if present, the image origin otherwise.
    pub fn entry(&self) -> u32 {
        self.symbols.get("_start").copied().unwrap_or(self.origin)
    }
}

/// An immediate operand that may reference a symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Imm {
    Value(i32),
    /// Absolute address of a label.
    Abs(String),
    /// PC-relative displacement to a label (branches and jumps).
    Rel(String),
    /// Upper 20 bits of a label address, compensated for the low half's sign.
    Hi(String),
    /// Low 12 bits of a label address.
    Lo(String),
}

#[derive(Debug, Clone)]
enum Item {
    Instr { op: Opcode, rd: u8, rs1: u8, rs2: u8, imm: Imm },
    Word(Imm),
    Bytes(Vec<u8>),
    Align(u32),
}

impl Item {
    fn instr(op: Opcode, rd: u8, rs1: u8, rs2: u8, imm: Imm) -> Self {
        Item::Instr { op, rd, rs1, rs2, imm }
    }
}

struct Parser {
    items: Vec<(usize, Item)>,
    labels: Vec<(usize, String)>, // labels waiting to bind to the next item index
    pending: Vec<(String, usize)>,
    if_stack: Vec<IfFrame>,
    next_if: u32,
}

struct IfFrame {
    id: u32,
    line: usize,
    has_else: bool,
}

/// `(line, label)` pairs attached to item indices are resolved to addresses
/// in pass one; `pending` holds labels that precede the item they bind to.
impl Parser {
    fn new() -> Self {
        Parser {
            items: Vec::new(),
            labels: Vec::new(),
            pending: Vec::new(),
            if_stack: Vec::new(),
            next_if: 0,
        }
    }

    fn push(&mut self, line: usize, item: Item) {
        for (label, _) in self.pending.drain(..) {
            self.labels.push((self.items.len(), label));
        }
        self.items.push((line, item));
    }

    fn label(&mut self, line: usize, name: String) {
        self.pending.push((name, line));
    }

    fn finish_labels(&mut self) {
        // trailing labels bind to the end of the image
        for (label, _) in self.pending.drain(..) {
            self.labels.push((self.items.len(), label));
        }
    }
}

fn err(line: usize, kind: AsmErrorKind) -> AsmError {
    AsmError { line, kind }
}

fn syntax(line: usize, msg: impl Into<String>) -> AsmError {
    err(line, AsmErrorKind::Syntax(msg.into()))
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if let Some(bin) = body.strip_prefix("0b").or_else(|| body.strip_prefix("0B")) {
        i64::from_str_radix(bin, 2).ok()?
    } else {
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_imm32(s: &str, line: usize) -> Result<i32, AsmError> {
    let v = parse_int(s).ok_or_else(|| syntax(line, format!("bad immediate `{s}`")))?;
    if v < i32::MIN as i64 || v > u32::MAX as i64 {
        return Err(err(line, AsmErrorKind::RangeError(format!("immediate {v} exceeds 32 bits"))));
    }
    Ok(v as u32 as i32)
}

fn is_label_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '.'
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$'
}

fn valid_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_label_start(c)) && chars.all(is_label_char)
}

/// Immediate-or-label operand.
fn parse_imm_operand(s: &str, line: usize, rel: bool) -> Result<Imm, AsmError> {
    if parse_int(s).is_some() {
        return Ok(Imm::Value(parse_imm32(s, line)?));
    }
    if valid_label(s) {
        return Ok(if rel { Imm::Rel(s.to_string()) } else { Imm::Abs(s.to_string()) });
    }
    Err(syntax(line, format!("bad operand `{s}`")))
}

fn reg(s: &str, line: usize) -> Result<u8, AsmError> {
    parse_reg(s.trim()).ok_or_else(|| syntax(line, format!("bad register `{s}`")))
}

/// Named CSR addresses understood by the assembler; numeric addresses are
/// always accepted.
pub const CSR_NAMES: [(&str, u32); 11] = [
    ("cycle", 0xc00),
    ("instret", 0xc02),
    ("cycleh", 0xc80),
    ("instreth", 0xc82),
    ("tid", 0xcc0),
    ("wid", 0xcc1),
    ("cid", 0xcc2),
    ("ntid", 0xcc3),
    ("nwid", 0xcc4),
    ("ncid", 0xcc5),
    ("tmask", 0xcc6),
];

fn parse_csr(s: &str, line: usize) -> Result<i32, AsmError> {
    let s = s.trim();
    if let Some((_, addr)) = CSR_NAMES.iter().find(|(n, _)| *n == s) {
        return Ok(*addr as i32);
    }
    let v = parse_int(s).ok_or_else(|| syntax(line, format!("bad csr `{s}`")))?;
    if !(0..=0xfff).contains(&v) {
        return Err(err(line, AsmErrorKind::RangeError(format!("csr address {v:#x}"))));
    }
    Ok(v as i32)
}

/// `imm(reg)` memory operand.
fn parse_mem_operand(s: &str, line: usize) -> Result<(i32, u8), AsmError> {
    let s = s.trim();
    let open = s.find('(').ok_or_else(|| syntax(line, format!("expected imm(reg), got `{s}`")))?;
    if !s.ends_with(')') {
        return Err(syntax(line, format!("expected imm(reg), got `{s}`")));
    }
    let imm_part = s[..open].trim();
    let reg_part = &s[open + 1..s.len() - 1];
    let imm = if imm_part.is_empty() { 0 } else { parse_imm32(imm_part, line)? };
    Ok((imm, reg(reg_part, line)?))
}

fn split_operands(s: &str) -> Vec<String> {
    // split on commas that are not inside parentheses or quotes
    let mut out = Vec::new();
    let mut depth = 0;
    let mut in_str = false;
    let mut cur = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                in_str = !in_str;
                cur.push(c);
            }
            '\\' if in_str => {
                cur.push(c);
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            '(' if !in_str => {
                depth += 1;
                cur.push(c);
            }
            ')' if !in_str => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 && !in_str => {
                out.push(cur.trim().to_string());
                cur = String::new();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_string_literal(s: &str, line: usize) -> Result<Vec<u8>, AsmError> {
    let s = s.trim();
    let inner = s
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .ok_or_else(|| syntax(line, "expected string literal"))?;
    let mut out = Vec::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push(b'\n'),
                Some('t') => out.push(b'\t'),
                Some('0') => out.push(0),
                Some('\\') => out.push(b'\\'),
                Some('"') => out.push(b'"'),
                other => return Err(syntax(line, format!("bad escape `\\{other:?}`"))),
            }
        } else {
            out.push(c as u8);
        }
    }
    Ok(out)
}

struct LineCtx<'a> {
    line: usize,
    mnem: &'a str,
    ops: Vec<String>,
}

impl<'a> LineCtx<'a> {
    fn want(&self, n: usize) -> Result<(), AsmError> {
        if self.ops.len() == n {
            Ok(())
        } else {
            Err(syntax(
                self.line,
                format!("`{}` takes {} operand(s), got {}", self.mnem, n, self.ops.len()),
            ))
        }
    }

    fn r(&self, i: usize) -> Result<u8, AsmError> {
        reg(&self.ops[i], self.line)
    }
}

fn parse_statement(p: &mut Parser, line: usize, mnem: &str, rest: &str) -> Result<(), AsmError> {
    use Opcode::*;
    let ops = split_operands(rest);
    let c = LineCtx { line, mnem, ops };
    let ops = &c.ops;

    // direct three-register ops
    let rtype = |op: Opcode| -> Result<Item, AsmError> {
        c.want(3)?;
        Ok(Item::instr(op, c.r(0)?, c.r(1)?, c.r(2)?, Imm::Value(0)))
    };
    // immediate-arithmetic ops
    let itype = |op: Opcode| -> Result<Item, AsmError> {
        c.want(3)?;
        Ok(Item::instr(op, c.r(0)?, c.r(1)?, 0, Imm::Value(parse_imm32(&ops[2], line)?)))
    };
    let branch = |op: Opcode, rs1: u8, rs2: u8, target: &str| -> Result<Item, AsmError> {
        Ok(Item::instr(op, 0, rs1, rs2, parse_imm_operand(target, line, true)?))
    };
    let load = |op: Opcode| -> Result<Item, AsmError> {
        c.want(2)?;
        let (imm, base) = parse_mem_operand(&ops[1], line)?;
        Ok(Item::instr(op, c.r(0)?, base, 0, Imm::Value(imm)))
    };
    let store = |op: Opcode| -> Result<Item, AsmError> {
        c.want(2)?;
        let (imm, base) = parse_mem_operand(&ops[1], line)?;
        Ok(Item::instr(op, 0, base, c.r(0)?, Imm::Value(imm)))
    };
    let csr_reg = |op: Opcode| -> Result<Item, AsmError> {
        c.want(3)?;
        Ok(Item::instr(op, c.r(0)?, c.r(2)?, 0, Imm::Value(parse_csr(&ops[1], line)?)))
    };
    let csr_imm = |op: Opcode| -> Result<Item, AsmError> {
        c.want(3)?;
        let uimm = parse_imm32(&ops[2], line)?;
        if !(0..32).contains(&uimm) {
            return Err(err(line, AsmErrorKind::RangeError(format!("csr uimm {uimm}"))));
        }
        Ok(Item::instr(op, c.r(0)?, uimm as u8, 0, Imm::Value(parse_csr(&ops[1], line)?)))
    };

    match mnem {
        // -- directives ------------------------------------------------
        ".word" => {
            if ops.is_empty() {
                return Err(syntax(line, ".word needs at least one value"));
            }
            for op in ops {
                p.push(line, Item::Word(parse_imm_operand(op, line, false)?));
            }
        }
        ".ascii" => {
            c.want(1)?;
            p.push(line, Item::Bytes(parse_string_literal(&ops[0], line)?));
        }
        ".align" => {
            c.want(1)?;
            let n = parse_imm32(&ops[0], line)?;
            if !(0..=16).contains(&n) {
                return Err(err(line, AsmErrorKind::RangeError(format!(".align {n}"))));
            }
            p.push(line, Item::Align(1 << n));
        }

        // -- divergence macros ------------------------------------------
        "__if" => {
            c.want(1)?;
            let pred = c.r(0)?;
            let id = p.next_if;
            p.next_if += 1;
            p.if_stack.push(IfFrame { id, line, has_else: false });
            p.push(line, Item::instr(Split, 0, pred, 0, Imm::Value(0)));
            p.push(line, Item::instr(Beq, 0, pred, 0, Imm::Rel(format!(".L__else_{id}"))));
        }
        "__else" => {
            c.want(0)?;
            let frame = p
                .if_stack
                .last_mut()
                .ok_or_else(|| err(line, AsmErrorKind::UnbalancedMacro("__else without __if".into())))?;
            if frame.has_else {
                return Err(err(line, AsmErrorKind::UnbalancedMacro("second __else".into())));
            }
            frame.has_else = true;
            let id = frame.id;
            p.push(line, Item::instr(Jal, 0, 0, 0, Imm::Rel(format!(".L__end_{id}"))));
            p.label(line, format!(".L__else_{id}"));
        }
        "__endif" => {
            c.want(0)?;
            let frame = p
                .if_stack
                .pop()
                .ok_or_else(|| err(line, AsmErrorKind::UnbalancedMacro("__endif without __if".into())))?;
            let id = frame.id;
            if !frame.has_else {
                p.push(line, Item::instr(Jal, 0, 0, 0, Imm::Rel(format!(".L__end_{id}"))));
                p.label(line, format!(".L__else_{id}"));
            }
            p.label(line, format!(".L__end_{id}"));
            p.push(line, Item::instr(Join, 0, 0, 0, Imm::Value(0)));
        }

        // -- pseudo-instructions ----------------------------------------
        "nop" => {
            c.want(0)?;
            p.push(line, Item::instr(Addi, 0, 0, 0, Imm::Value(0)));
        }
        "mv" => {
            c.want(2)?;
            p.push(line, Item::instr(Addi, c.r(0)?, c.r(1)?, 0, Imm::Value(0)));
        }
        "not" => {
            c.want(2)?;
            p.push(line, Item::instr(Xori, c.r(0)?, c.r(1)?, 0, Imm::Value(-1)));
        }
        "neg" => {
            c.want(2)?;
            p.push(line, Item::instr(Sub, c.r(0)?, 0, c.r(1)?, Imm::Value(0)));
        }
        "seqz" => {
            c.want(2)?;
            p.push(line, Item::instr(Sltiu, c.r(0)?, c.r(1)?, 0, Imm::Value(1)));
        }
        "snez" => {
            c.want(2)?;
            p.push(line, Item::instr(Sltu, c.r(0)?, 0, c.r(1)?, Imm::Value(0)));
        }
        "li" => {
            c.want(2)?;
            let rd = c.r(0)?;
            let v = parse_imm32(&ops[1], line)?;
            let lo = ((v & 0xfff) << 20) >> 20; // sign-extended low 12 bits
            if lo == v {
                p.push(line, Item::instr(Addi, rd, 0, 0, Imm::Value(v)));
            } else {
                let hi = (v.wrapping_add(0x800) as u32) & 0xffff_f000;
                p.push(line, Item::instr(Lui, rd, 0, 0, Imm::Value(hi as i32)));
                if lo != 0 {
                    p.push(line, Item::instr(Addi, rd, rd, 0, Imm::Value(lo)));
                }
            }
        }
        "la" => {
            c.want(2)?;
            let rd = c.r(0)?;
            let label = ops[1].clone();
            if !valid_label(&label) {
                return Err(syntax(line, format!("bad label `{label}`")));
            }
            p.push(line, Item::instr(Lui, rd, 0, 0, Imm::Hi(label.clone())));
            p.push(line, Item::instr(Addi, rd, rd, 0, Imm::Lo(label)));
        }
        "j" => {
            c.want(1)?;
            p.push(line, Item::instr(Jal, 0, 0, 0, parse_imm_operand(&ops[0], line, true)?));
        }
        "call" => {
            c.want(1)?;
            p.push(line, Item::instr(Jal, 1, 0, 0, parse_imm_operand(&ops[0], line, true)?));
        }
        "jr" => {
            c.want(1)?;
            p.push(line, Item::instr(Jalr, 0, c.r(0)?, 0, Imm::Value(0)));
        }
        "ret" => {
            c.want(0)?;
            p.push(line, Item::instr(Jalr, 0, 1, 0, Imm::Value(0)));
        }
        "beqz" => {
            c.want(2)?;
            p.push(line, branch(Beq, c.r(0)?, 0, &ops[1])?);
        }
        "bnez" => {
            c.want(2)?;
            p.push(line, branch(Bne, c.r(0)?, 0, &ops[1])?);
        }
        "bgt" => {
            c.want(3)?;
            p.push(line, branch(Blt, c.r(1)?, c.r(0)?, &ops[2])?);
        }
        "ble" => {
            c.want(3)?;
            p.push(line, branch(Bge, c.r(1)?, c.r(0)?, &ops[2])?);
        }
        "csrr" => {
            c.want(2)?;
            p.push(line, Item::instr(Csrrs, c.r(0)?, 0, 0, Imm::Value(parse_csr(&ops[1], line)?)));
        }

        // -- real instructions -------------------------------------------
        "lui" | "auipc" => {
            c.want(2)?;
            let op = if mnem == "lui" { Lui } else { Auipc };
            let v = parse_imm32(&ops[1], line)?;
            if !(0..=0xfffff).contains(&v) {
                return Err(err(line, AsmErrorKind::RangeError(format!("{mnem} immediate {v:#x}"))));
            }
            p.push(line, Item::instr(op, c.r(0)?, 0, 0, Imm::Value(v << 12)));
        }
        "jal" => match ops.len() {
            1 => p.push(line, Item::instr(Jal, 1, 0, 0, parse_imm_operand(&ops[0], line, true)?)),
            2 => {
                let item = Item::instr(Jal, c.r(0)?, 0, 0, parse_imm_operand(&ops[1], line, true)?);
                p.push(line, item);
            }
            _ => return Err(syntax(line, "jal takes 1 or 2 operands")),
        },
        "jalr" => {
            c.want(3)?;
            let imm = parse_imm32(&ops[2], line)?;
            p.push(line, Item::instr(Jalr, c.r(0)?, c.r(1)?, 0, Imm::Value(imm)));
        }
        "beq" | "bne" | "blt" | "bge" | "bltu" | "bgeu" => {
            c.want(3)?;
            let op = match mnem {
                "beq" => Beq,
                "bne" => Bne,
                "blt" => Blt,
                "bge" => Bge,
                "bltu" => Bltu,
                _ => Bgeu,
            };
            p.push(line, branch(op, c.r(0)?, c.r(1)?, &ops[2])?);
        }
        "lb" => p.push(line, load(Lb)?),
        "lh" => p.push(line, load(Lh)?),
        "lw" => p.push(line, load(Lw)?),
        "lbu" => p.push(line, load(Lbu)?),
        "lhu" => p.push(line, load(Lhu)?),
        "sb" => p.push(line, store(Sb)?),
        "sh" => p.push(line, store(Sh)?),
        "sw" => p.push(line, store(Sw)?),
        "addi" => p.push(line, itype(Addi)?),
        "slti" => p.push(line, itype(Slti)?),
        "sltiu" => p.push(line, itype(Sltiu)?),
        "xori" => p.push(line, itype(Xori)?),
        "ori" => p.push(line, itype(Ori)?),
        "andi" => p.push(line, itype(Andi)?),
        "slli" => p.push(line, itype(Slli)?),
        "srli" => p.push(line, itype(Srli)?),
        "srai" => p.push(line, itype(Srai)?),
        "add" => p.push(line, rtype(Add)?),
        "sub" => p.push(line, rtype(Sub)?),
        "sll" => p.push(line, rtype(Sll)?),
        "slt" => p.push(line, rtype(Slt)?),
        "sltu" => p.push(line, rtype(Sltu)?),
        "xor" => p.push(line, rtype(Xor)?),
        "srl" => p.push(line, rtype(Srl)?),
        "sra" => p.push(line, rtype(Sra)?),
        "or" => p.push(line, rtype(Or)?),
        "and" => p.push(line, rtype(And)?),
        "mul" => p.push(line, rtype(Mul)?),
        "mulh" => p.push(line, rtype(Mulh)?),
        "mulhsu" => p.push(line, rtype(Mulhsu)?),
        "mulhu" => p.push(line, rtype(Mulhu)?),
        "div" => p.push(line, rtype(Div)?),
        "divu" => p.push(line, rtype(Divu)?),
        "rem" => p.push(line, rtype(Rem)?),
        "remu" => p.push(line, rtype(Remu)?),
        "fence" => {
            c.want(0)?;
            p.push(line, Item::instr(Fence, 0, 0, 0, Imm::Value(0x0ff0 >> 4)));
        }
        "fence.i" => {
            c.want(0)?;
            p.push(line, Item::instr(FenceI, 0, 0, 0, Imm::Value(0)));
        }
        "ecall" => {
            c.want(0)?;
            p.push(line, Item::instr(Ecall, 0, 0, 0, Imm::Value(0)));
        }
        "ebreak" => {
            c.want(0)?;
            p.push(line, Item::instr(Ebreak, 0, 0, 0, Imm::Value(0)));
        }
        "csrrw" => p.push(line, csr_reg(Csrrw)?),
        "csrrs" => p.push(line, csr_reg(Csrrs)?),
        "csrrc" => p.push(line, csr_reg(Csrrc)?),
        "csrrwi" => p.push(line, csr_imm(Csrrwi)?),
        "csrrsi" => p.push(line, csr_imm(Csrrsi)?),
        "csrrci" => p.push(line, csr_imm(Csrrci)?),
        "tmc" => {
            c.want(1)?;
            p.push(line, Item::instr(Tmc, 0, c.r(0)?, 0, Imm::Value(0)));
        }
        "wspawn" => {
            c.want(2)?;
            p.push(line, Item::instr(Wspawn, 0, c.r(0)?, c.r(1)?, Imm::Value(0)));
        }
        "split" => {
            c.want(1)?;
            p.push(line, Item::instr(Split, 0, c.r(0)?, 0, Imm::Value(0)));
        }
        "join" => {
            c.want(0)?;
            p.push(line, Item::instr(Join, 0, 0, 0, Imm::Value(0)));
        }
        "bar" => {
            c.want(2)?;
            p.push(line, Item::instr(Bar, 0, c.r(0)?, c.r(1)?, Imm::Value(0)));
        }
        _ => return Err(syntax(line, format!("unknown mnemonic `{mnem}`"))),
    }
    Ok(())
}

fn item_size(item: &Item, addr: u32) -> u32 {
    match item {
        Item::Instr { .. } => 4,
        Item::Word(_) => 4,
        Item::Bytes(b) => b.len() as u32,
        Item::Align(n) => {
            let rem = addr % n;
            if rem == 0 {
                0
            } else {
                n - rem
            }
        }
    }
}

/// Assemble `src` into a flat little-endian image based at `origin`.
pub fn assemble(src: &str, origin: u32) -> Result<Assembled, AsmError> {
    let mut p = Parser::new();

    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let mut text = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        // peel off any number of leading `label:` prefixes
        loop {
            let trimmed = text.trim_start();
            if let Some(colon) = trimmed.find(':') {
                let candidate = &trimmed[..colon];
                if valid_label(candidate) && !candidate.contains(char::is_whitespace) {
                    p.label(line, candidate.to_string());
                    text = &trimmed[colon + 1..];
                    continue;
                }
            }
            text = trimmed;
            break;
        }
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let (mnem, rest) = match text.find(char::is_whitespace) {
            Some(pos) => (&text[..pos], &text[pos..]),
            None => (text, ""),
        };
        parse_statement(&mut p, line, mnem, rest)?;
    }

    if let Some(frame) = p.if_stack.last() {
        return Err(err(frame.line, AsmErrorKind::UnbalancedMacro("__if without __endif".into())));
    }
    p.finish_labels();

    // pass one: item addresses and the symbol table
    let mut addrs = Vec::with_capacity(p.items.len());
    let mut addr = origin;
    for (_, item) in &p.items {
        addrs.push(addr);
        addr = addr.wrapping_add(item_size(item, addr));
    }
    addrs.push(addr); // labels at end of image

    let mut symbols = BTreeMap::new();
    for (item_idx, name) in &p.labels {
        let a = addrs[*item_idx];
        if symbols.insert(name.clone(), a).is_some() {
            let line = p.items.get(*item_idx).map(|(l, _)| *l).unwrap_or(0);
            return Err(err(line, AsmErrorKind::DuplicateLabel(name.clone())));
        }
    }

    // pass two: encode
    let mut image = Vec::new();
    let resolve = |imm: &Imm, at: u32, line: usize| -> Result<i32, AsmError> {
        let lookup = |name: &String| {
            symbols
                .get(name)
                .copied()
                .ok_or_else(|| err(line, AsmErrorKind::UndefinedLabel(name.clone())))
        };
        Ok(match imm {
            Imm::Value(v) => *v,
            Imm::Abs(name) => lookup(name)? as i32,
            Imm::Rel(name) => lookup(name)?.wrapping_sub(at) as i32,
            Imm::Hi(name) => (lookup(name)?.wrapping_add(0x800) & 0xffff_f000) as i32,
            Imm::Lo(name) => ((lookup(name)? as i32) << 20) >> 20,
        })
    };

    for (i, (line, item)) in p.items.iter().enumerate() {
        let at = addrs[i];
        match item {
            Item::Instr { op, rd, rs1, rs2, imm } => {
                let imm = resolve(imm, at, *line)?;
                let instr =
                    DecodedInstr { op: *op, rd: *rd, rs1: *rs1, rs2: *rs2, imm };
                let word = encode(&instr).map_err(|e| match e {
                    super::IsaError::Unencodable(why) => err(
                        *line,
                        AsmErrorKind::RangeError(format!("{}: {why}", mnemonic(*op))),
                    ),
                    other => syntax(*line, other.to_string()),
                })?;
                image.extend_from_slice(&word.to_le_bytes());
            }
            Item::Word(imm) => {
                let v = resolve(imm, at, *line)?;
                image.extend_from_slice(&(v as u32).to_le_bytes());
            }
            Item::Bytes(b) => image.extend_from_slice(b),
            Item::Align(_) => {
                let pad = item_size(item, at);
                image.extend(std::iter::repeat(0u8).take(pad as usize));
            }
        }
    }

    Ok(Assembled { image, symbols, origin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::decode;

    fn words(a: &Assembled) -> Vec<u32> {
        a.image
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }

    #[test]
    fn join_only_program() {
        let a = assemble("join\n", 0).unwrap();
        assert_eq!(a.image, 0x0000_306bu32.to_le_bytes());
    }

    #[test]
    fn split_a0_matches_published_word() {
        let a = assemble("split a0\n", 0).unwrap();
        assert_eq!(words(&a), vec![0x0005_206b]);
    }

    #[test]
    fn empty_program() {
        let a = assemble("", 0).unwrap();
        assert!(a.image.is_empty());
        assert!(a.symbols.is_empty());
    }

    #[test]
    fn empty_if_endif_expands_to_split_branch_jump_join() {
        let a = assemble("__if a0\n__endif\n", 0).unwrap();
        let w = words(&a);
        assert_eq!(w.len(), 4);
        let i0 = decode(w[0]).unwrap();
        assert_eq!((i0.op, i0.rs1), (Opcode::Split, 10));
        let i1 = decode(w[1]).unwrap();
        assert_eq!((i1.op, i1.rs1, i1.rs2), (Opcode::Beq, 10, 0));
        assert_eq!(i1.imm, 8); // branch at 4 targets the join at 12
        let i2 = decode(w[2]).unwrap();
        assert_eq!((i2.op, i2.rd), (Opcode::Jal, 0));
        assert_eq!(i2.imm, 4); // jump at 8 targets the join at 12
        assert_eq!(decode(w[3]).unwrap().op, Opcode::Join);
    }

    #[test]
    fn if_else_endif_layout() {
        let src = "__if a1\naddi a2, zero, 1\n__else\naddi a2, zero, 2\n__endif\n";
        let a = assemble(src, 0).unwrap();
        let w = words(&a);
        // split, beq ->else, then, jal ->end, else, join
        assert_eq!(w.len(), 6);
        let br = decode(w[1]).unwrap();
        assert_eq!(br.imm, 12); // branch at 4 lands on the else block at 16
        let jmp = decode(w[3]).unwrap();
        assert_eq!(jmp.imm, 8); // jump at 12 lands on the join at 20
        assert_eq!(decode(w[5]).unwrap().op, Opcode::Join);
    }

    #[test]
    fn unbalanced_macros_rejected() {
        assert!(matches!(
            assemble("__if a0\n", 0).unwrap_err().kind,
            AsmErrorKind::UnbalancedMacro(_)
        ));
        assert!(matches!(
            assemble("__endif\n", 0).unwrap_err().kind,
            AsmErrorKind::UnbalancedMacro(_)
        ));
        assert!(matches!(
            assemble("__if a0\n__else\n__else\n__endif\n", 0).unwrap_err().kind,
            AsmErrorKind::UnbalancedMacro(_)
        ));
    }

    #[test]
    fn labels_and_branches() {
        let src = "start:\naddi a0, a0, 1\nbne a0, a1, start\nret\n";
        let a = assemble(src, 0x100).unwrap();
        assert_eq!(a.symbols["start"], 0x100);
        let w = words(&a);
        let br = decode(w[1]).unwrap();
        assert_eq!(br.imm, -4);
    }

    #[test]
    fn undefined_label() {
        let e = assemble("j nowhere\n", 0).unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::UndefinedLabel(_)));
    }

    #[test]
    fn duplicate_label() {
        let e = assemble("x:\nnop\nx:\nnop\n", 0).unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::DuplicateLabel(_)));
    }

    #[test]
    fn branch_range_error() {
        let mut src = String::from("top:\n");
        for _ in 0..2000 {
            src.push_str("nop\n");
        }
        src.push_str("j top\n"); // jal reaches; beq would not
        assert!(assemble(&src, 0).is_ok());
        let mut src = String::from("top:\n");
        for _ in 0..2000 {
            src.push_str("nop\n");
        }
        src.push_str("beq a0, a1, top\n");
        let e = assemble(&src, 0).unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::RangeError(_)));
    }

    #[test]
    fn li_expansions() {
        let a = assemble("li a0, 5\n", 0).unwrap();
        assert_eq!(words(&a).len(), 1);
        let a = assemble("li a0, 0x12345678\n", 0).unwrap();
        assert_eq!(words(&a).len(), 2);
        let a = assemble("li sp, 0xfeff0000\n", 0).unwrap();
        let w = words(&a);
        assert_eq!(w.len(), 1); // low 12 bits zero: lui alone
        let i = decode(w[0]).unwrap();
        assert_eq!((i.op, i.imm as u32), (Opcode::Lui, 0xfeff_0000));
        // value requiring the +0x800 hi compensation
        let a = assemble("li a0, 0x12345fff\n", 0).unwrap();
        let w = words(&a);
        let hi = decode(w[0]).unwrap();
        let lo = decode(w[1]).unwrap();
        assert_eq!((hi.imm as u32).wrapping_add(lo.imm as u32), 0x1234_5fff);
    }

    #[test]
    fn la_resolves_hi_lo() {
        let src = ".align 2\ndata:\n.word 7\ncode:\nla a0, data\n";
        let a = assemble(src, 0x1000).unwrap();
        let w = words(&a);
        let hi = decode(w[1]).unwrap();
        let lo = decode(w[2]).unwrap();
        assert_eq!((hi.imm as u32).wrapping_add(lo.imm as u32), a.symbols["data"]);
    }

    #[test]
    fn word_directive_with_label() {
        let src = "table:\n.word table, 0xdeadbeef\n";
        let a = assemble(src, 0x40).unwrap();
        assert_eq!(words(&a), vec![0x40, 0xdead_beef]);
    }

    #[test]
    fn ascii_and_align() {
        let a = assemble(".ascii \"ab\"\n.align 2\n.word 1\n", 0).unwrap();
        assert_eq!(a.image.len(), 8);
        assert_eq!(&a.image[..2], b"ab");
        assert_eq!(&a.image[4..], &1u32.to_le_bytes());
    }

    #[test]
    fn entry_defaults_to_origin() {
        let a = assemble("nop\n", 0x80).unwrap();
        assert_eq!(a.entry(), 0x80);
        let a = assemble("nop\n_start:\nnop\n", 0x80).unwrap();
        assert_eq!(a.entry(), 0x84);
    }

    #[test]
    fn csr_names() {
        let a = assemble("csrr t0, tid\n", 0).unwrap();
        let i = decode(words(&a)[0]).unwrap();
        assert_eq!((i.op, i.rd, i.imm), (Opcode::Csrrs, 5, 0xcc0));
    }

    #[test]
    fn nested_if_macros_balanced() {
        let src = "\
__if a0
  __if a1
    addi t0, zero, 1
  __endif
__endif
";
        let a = assemble(src, 0).unwrap();
        let joins = words(&a)
            .iter()
            .filter(|&&w| decode(w).map(|i| i.op == Opcode::Join).unwrap_or(false))
            .count();
        assert_eq!(joins, 2);
    }
}
