//! Instruction encoding and decoding for RV32IM plus the five-instruction
//! SIMT extension (`tmc`, `wspawn`, `split`, `join`, `bar`).
//!
//! The SIMT instructions are R-type and share a single opcode (0x6B), with
//! `funct3` selecting the member. Two encodings are fixed by convention and
//! used as anchors everywhere: `split a0` is `0x0005206b` and `join` is
//! `0x0000306b`.

use std::fmt;

pub mod asm;
pub mod disasm;

/// Low 7 bits shared by all five SIMT instructions.
pub const SIMT_OPCODE: u32 = 0x6b;

const OPC_LUI: u32 = 0x37;
const OPC_AUIPC: u32 = 0x17;
const OPC_JAL: u32 = 0x6f;
const OPC_JALR: u32 = 0x67;
const OPC_BRANCH: u32 = 0x63;
const OPC_LOAD: u32 = 0x03;
const OPC_STORE: u32 = 0x23;
const OPC_OP_IMM: u32 = 0x13;
const OPC_OP: u32 = 0x33;
const OPC_FENCE: u32 = 0x0f;
const OPC_SYSTEM: u32 = 0x73;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
    Sb,
    Sh,
    Sw,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
    Fence,
    FenceI,
    Ecall,
    Ebreak,
    Csrrw,
    Csrrs,
    Csrrc,
    Csrrwi,
    Csrrsi,
    Csrrci,
    Tmc,
    Wspawn,
    Split,
    Join,
    Bar,
}

/// Instruction format, as named by the base ISA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    R,
    I,
    S,
    B,
    U,
    J,
}

/// One decoded instruction. `imm` carries the sign-extended immediate for
/// I/S/B/J formats, the full shifted value for U format, the shift amount
/// for shift-immediates, and the CSR address for CSR instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedInstr {
    pub op: Opcode,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i32,
}

impl DecodedInstr {
    pub fn new(op: Opcode) -> Self {
        DecodedInstr { op, rd: 0, rs1: 0, rs2: 0, imm: 0 }
    }

    pub fn with_rd(mut self, rd: u8) -> Self {
        self.rd = rd;
        self
    }

    pub fn with_rs1(mut self, rs1: u8) -> Self {
        self.rs1 = rs1;
        self
    }

    pub fn with_rs2(mut self, rs2: u8) -> Self {
        self.rs2 = rs2;
        self
    }

    pub fn with_imm(mut self, imm: i32) -> Self {
        self.imm = imm;
        self
    }

    /// The funct3 field fixed by this instruction's encoding, if it has one.
    pub fn funct3(&self) -> Option<u8> {
        fields(self.op).map(|f| f.funct3)
    }

    /// The funct7 field fixed by this instruction's encoding, if it has one.
    pub fn funct7(&self) -> Option<u8> {
        let f = fields(self.op)?;
        match f.format {
            Format::R => Some(f.funct7),
            _ => None,
        }
    }

    pub fn is_simt(&self) -> bool {
        matches!(
            self.op,
            Opcode::Tmc | Opcode::Wspawn | Opcode::Split | Opcode::Join | Opcode::Bar
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IsaError {
    UnknownInstruction(u32),
    Unencodable(String),
}

impl fmt::Display for IsaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IsaError::UnknownInstruction(w) => write!(f, "unknown instruction 0x{w:08x}"),
            IsaError::Unencodable(why) => write!(f, "unencodable instruction: {why}"),
        }
    }
}

impl std::error::Error for IsaError {}

struct EncFields {
    format: Format,
    opcode: u32,
    funct3: u8,
    funct7: u8,
}

fn enc(format: Format, opcode: u32, funct3: u8, funct7: u8) -> Option<EncFields> {
    Some(EncFields { format, opcode, funct3, funct7 })
}

fn fields(op: Opcode) -> Option<EncFields> {
    use Opcode::*;
    match op {
        Lui => enc(Format::U, OPC_LUI, 0, 0),
        Auipc => enc(Format::U, OPC_AUIPC, 0, 0),
        Jal => enc(Format::J, OPC_JAL, 0, 0),
        Jalr => enc(Format::I, OPC_JALR, 0, 0),
        Beq => enc(Format::B, OPC_BRANCH, 0, 0),
        Bne => enc(Format::B, OPC_BRANCH, 1, 0),
        Blt => enc(Format::B, OPC_BRANCH, 4, 0),
        Bge => enc(Format::B, OPC_BRANCH, 5, 0),
        Bltu => enc(Format::B, OPC_BRANCH, 6, 0),
        Bgeu => enc(Format::B, OPC_BRANCH, 7, 0),
        Lb => enc(Format::I, OPC_LOAD, 0, 0),
        Lh => enc(Format::I, OPC_LOAD, 1, 0),
        Lw => enc(Format::I, OPC_LOAD, 2, 0),
        Lbu => enc(Format::I, OPC_LOAD, 4, 0),
        Lhu => enc(Format::I, OPC_LOAD, 5, 0),
        Sb => enc(Format::S, OPC_STORE, 0, 0),
        Sh => enc(Format::S, OPC_STORE, 1, 0),
        Sw => enc(Format::S, OPC_STORE, 2, 0),
        Addi => enc(Format::I, OPC_OP_IMM, 0, 0),
        Slti => enc(Format::I, OPC_OP_IMM, 2, 0),
        Sltiu => enc(Format::I, OPC_OP_IMM, 3, 0),
        Xori => enc(Format::I, OPC_OP_IMM, 4, 0),
        Ori => enc(Format::I, OPC_OP_IMM, 6, 0),
        Andi => enc(Format::I, OPC_OP_IMM, 7, 0),
        Slli => enc(Format::R, OPC_OP_IMM, 1, 0x00),
        Srli => enc(Format::R, OPC_OP_IMM, 5, 0x00),
        Srai => enc(Format::R, OPC_OP_IMM, 5, 0x20),
        Add => enc(Format::R, OPC_OP, 0, 0x00),
        Sub => enc(Format::R, OPC_OP, 0, 0x20),
        Sll => enc(Format::R, OPC_OP, 1, 0x00),
        Slt => enc(Format::R, OPC_OP, 2, 0x00),
        Sltu => enc(Format::R, OPC_OP, 3, 0x00),
        Xor => enc(Format::R, OPC_OP, 4, 0x00),
        Srl => enc(Format::R, OPC_OP, 5, 0x00),
        Sra => enc(Format::R, OPC_OP, 5, 0x20),
        Or => enc(Format::R, OPC_OP, 6, 0x00),
        And => enc(Format::R, OPC_OP, 7, 0x00),
        Mul => enc(Format::R, OPC_OP, 0, 0x01),
        Mulh => enc(Format::R, OPC_OP, 1, 0x01),
        Mulhsu => enc(Format::R, OPC_OP, 2, 0x01),
        Mulhu => enc(Format::R, OPC_OP, 3, 0x01),
        Div => enc(Format::R, OPC_OP, 4, 0x01),
        Divu => enc(Format::R, OPC_OP, 5, 0x01),
        Rem => enc(Format::R, OPC_OP, 6, 0x01),
        Remu => enc(Format::R, OPC_OP, 7, 0x01),
        Fence => enc(Format::I, OPC_FENCE, 0, 0),
        FenceI => enc(Format::I, OPC_FENCE, 1, 0),
        Ecall => enc(Format::I, OPC_SYSTEM, 0, 0),
        Ebreak => enc(Format::I, OPC_SYSTEM, 0, 0),
        Csrrw => enc(Format::I, OPC_SYSTEM, 1, 0),
        Csrrs => enc(Format::I, OPC_SYSTEM, 2, 0),
        Csrrc => enc(Format::I, OPC_SYSTEM, 3, 0),
        Csrrwi => enc(Format::I, OPC_SYSTEM, 5, 0),
        Csrrsi => enc(Format::I, OPC_SYSTEM, 6, 0),
        Csrrci => enc(Format::I, OPC_SYSTEM, 7, 0),
        Tmc => enc(Format::R, SIMT_OPCODE, 0, 0),
        Wspawn => enc(Format::R, SIMT_OPCODE, 1, 0),
        Split => enc(Format::R, SIMT_OPCODE, 2, 0),
        Join => enc(Format::R, SIMT_OPCODE, 3, 0),
        Bar => enc(Format::R, SIMT_OPCODE, 4, 0),
    }
}

fn sign_extend(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn imm_i(word: u32) -> i32 {
    (word as i32) >> 20
}

fn imm_s(word: u32) -> i32 {
    let v = ((word >> 25) << 5) | ((word >> 7) & 0x1f);
    sign_extend(v, 12)
}

fn imm_b(word: u32) -> i32 {
    let v = (((word >> 31) & 1) << 12)
        | (((word >> 7) & 1) << 11)
        | (((word >> 25) & 0x3f) << 5)
        | (((word >> 8) & 0xf) << 1);
    sign_extend(v, 13)
}

fn imm_j(word: u32) -> i32 {
    let v = (((word >> 31) & 1) << 20)
        | (((word >> 12) & 0xff) << 12)
        | (((word >> 20) & 1) << 11)
        | (((word >> 21) & 0x3ff) << 1);
    sign_extend(v, 21)
}

/// Decode a 32-bit instruction word.
///
/// Reserved fields are checked: an R-type word whose funct7 does not match
/// any defined instruction is rejected rather than silently accepted, so
/// `encode(decode(w)) == w` holds for every word this function accepts.
pub fn decode(word: u32) -> Result<DecodedInstr, IsaError> {
    use Opcode::*;

    let opcode = word & 0x7f;
    let rd = ((word >> 7) & 0x1f) as u8;
    let funct3 = (word >> 12) & 0x7;
    let rs1 = ((word >> 15) & 0x1f) as u8;
    let rs2 = ((word >> 20) & 0x1f) as u8;
    let funct7 = (word >> 25) & 0x7f;
    let unknown = || IsaError::UnknownInstruction(word);

    let instr = match opcode {
        OPC_LUI => DecodedInstr::new(Lui).with_rd(rd).with_imm((word & 0xffff_f000) as i32),
        OPC_AUIPC => DecodedInstr::new(Auipc).with_rd(rd).with_imm((word & 0xffff_f000) as i32),
        OPC_JAL => DecodedInstr::new(Jal).with_rd(rd).with_imm(imm_j(word)),
        OPC_JALR => {
            if funct3 != 0 {
                return Err(unknown());
            }
            DecodedInstr::new(Jalr).with_rd(rd).with_rs1(rs1).with_imm(imm_i(word))
        }
        OPC_BRANCH => {
            let op = match funct3 {
                0 => Beq,
                1 => Bne,
                4 => Blt,
                5 => Bge,
                6 => Bltu,
                7 => Bgeu,
                _ => return Err(unknown()),
            };
            DecodedInstr::new(op).with_rs1(rs1).with_rs2(rs2).with_imm(imm_b(word))
        }
        OPC_LOAD => {
            let op = match funct3 {
                0 => Lb,
                1 => Lh,
                2 => Lw,
                4 => Lbu,
                5 => Lhu,
                _ => return Err(unknown()),
            };
            DecodedInstr::new(op).with_rd(rd).with_rs1(rs1).with_imm(imm_i(word))
        }
        OPC_STORE => {
            let op = match funct3 {
                0 => Sb,
                1 => Sh,
                2 => Sw,
                _ => return Err(unknown()),
            };
            DecodedInstr::new(op).with_rs1(rs1).with_rs2(rs2).with_imm(imm_s(word))
        }
        OPC_OP_IMM => match funct3 {
            1 => {
                if funct7 != 0 {
                    return Err(unknown());
                }
                DecodedInstr::new(Slli).with_rd(rd).with_rs1(rs1).with_imm(rs2 as i32)
            }
            5 => {
                let op = match funct7 {
                    0x00 => Srli,
                    0x20 => Srai,
                    _ => return Err(unknown()),
                };
                DecodedInstr::new(op).with_rd(rd).with_rs1(rs1).with_imm(rs2 as i32)
            }
            _ => {
                let op = match funct3 {
                    0 => Addi,
                    2 => Slti,
                    3 => Sltiu,
                    4 => Xori,
                    6 => Ori,
                    7 => Andi,
                    _ => unreachable!(),
                };
                DecodedInstr::new(op).with_rd(rd).with_rs1(rs1).with_imm(imm_i(word))
            }
        },
        OPC_OP => {
            let op = match (funct7, funct3) {
                (0x00, 0) => Add,
                (0x20, 0) => Sub,
                (0x00, 1) => Sll,
                (0x00, 2) => Slt,
                (0x00, 3) => Sltu,
                (0x00, 4) => Xor,
                (0x00, 5) => Srl,
                (0x20, 5) => Sra,
                (0x00, 6) => Or,
                (0x00, 7) => And,
                (0x01, 0) => Mul,
                (0x01, 1) => Mulh,
                (0x01, 2) => Mulhsu,
                (0x01, 3) => Mulhu,
                (0x01, 4) => Div,
                (0x01, 5) => Divu,
                (0x01, 6) => Rem,
                (0x01, 7) => Remu,
                _ => return Err(unknown()),
            };
            DecodedInstr::new(op).with_rd(rd).with_rs1(rs1).with_rs2(rs2)
        }
        OPC_FENCE => {
            let op = match funct3 {
                0 => Fence,
                1 => FenceI,
                _ => return Err(unknown()),
            };
            DecodedInstr::new(op).with_rd(rd).with_rs1(rs1).with_imm(imm_i(word))
        }
        OPC_SYSTEM => match funct3 {
            0 => {
                if rd != 0 || rs1 != 0 {
                    return Err(unknown());
                }
                match word >> 20 {
                    0 => DecodedInstr::new(Ecall),
                    1 => DecodedInstr::new(Ebreak),
                    _ => return Err(unknown()),
                }
            }
            1..=3 | 5..=7 => {
                let op = match funct3 {
                    1 => Csrrw,
                    2 => Csrrs,
                    3 => Csrrc,
                    5 => Csrrwi,
                    6 => Csrrsi,
                    _ => Csrrci,
                };
                DecodedInstr::new(op).with_rd(rd).with_rs1(rs1).with_imm((word >> 20) as i32)
            }
            _ => return Err(unknown()),
        },
        SIMT_OPCODE => {
            if funct7 != 0 || rd != 0 {
                return Err(unknown());
            }
            match funct3 {
                0 if rs2 == 0 => DecodedInstr::new(Tmc).with_rs1(rs1),
                1 => DecodedInstr::new(Wspawn).with_rs1(rs1).with_rs2(rs2),
                2 if rs2 == 0 => DecodedInstr::new(Split).with_rs1(rs1),
                3 if rs1 == 0 && rs2 == 0 => DecodedInstr::new(Join),
                4 => DecodedInstr::new(Bar).with_rs1(rs1).with_rs2(rs2),
                _ => return Err(unknown()),
            }
        }
        _ => return Err(unknown()),
    };
    Ok(instr)
}

fn check_reg(r: u8, name: &str) -> Result<u32, IsaError> {
    if r < 32 {
        Ok(r as u32)
    } else {
        Err(IsaError::Unencodable(format!("{name} index {r} out of range")))
    }
}

/// Encode an instruction back to its 32-bit word.
///
/// Inverse of [`decode`]: `decode(encode(i)) == i` for every representable
/// instruction.
pub fn encode(instr: &DecodedInstr) -> Result<u32, IsaError> {
    use Opcode::*;

    let f = fields(instr.op).expect("every opcode has encoding fields");
    let rd = check_reg(instr.rd, "rd")?;
    let rs1 = check_reg(instr.rs1, "rs1")?;
    let rs2 = check_reg(instr.rs2, "rs2")?;
    let imm = instr.imm;
    let bad = |why: String| Err(IsaError::Unencodable(why));

    // Shift-immediates reuse the R layout with the shamt in the rs2 slot;
    // CSR and SYSTEM instructions need their own immediate handling.
    let word = match instr.op {
        Slli | Srli | Srai => {
            if !(0..=31).contains(&imm) {
                return bad(format!("shift amount {imm} out of range"));
            }
            ((f.funct7 as u32) << 25)
                | ((imm as u32) << 20)
                | (rs1 << 15)
                | ((f.funct3 as u32) << 12)
                | (rd << 7)
                | f.opcode
        }
        Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => {
            if !(0..=0xfff).contains(&imm) {
                return bad(format!("csr address {imm:#x} out of range"));
            }
            ((imm as u32) << 20) | (rs1 << 15) | ((f.funct3 as u32) << 12) | (rd << 7) | f.opcode
        }
        Ecall => f.opcode,
        Ebreak => (1 << 20) | f.opcode,
        _ => match f.format {
            Format::R => {
                ((f.funct7 as u32) << 25)
                    | (rs2 << 20)
                    | (rs1 << 15)
                    | ((f.funct3 as u32) << 12)
                    | (rd << 7)
                    | f.opcode
            }
            Format::I => {
                if !(-2048..=2047).contains(&imm) {
                    return bad(format!("immediate {imm} out of range for I-format"));
                }
                (((imm as u32) & 0xfff) << 20)
                    | (rs1 << 15)
                    | ((f.funct3 as u32) << 12)
                    | (rd << 7)
                    | f.opcode
            }
            Format::S => {
                if !(-2048..=2047).contains(&imm) {
                    return bad(format!("immediate {imm} out of range for S-format"));
                }
                let v = imm as u32;
                (((v >> 5) & 0x7f) << 25)
                    | (rs2 << 20)
                    | (rs1 << 15)
                    | ((f.funct3 as u32) << 12)
                    | ((v & 0x1f) << 7)
                    | f.opcode
            }
            Format::B => {
                if !(-4096..=4094).contains(&imm) || imm & 1 != 0 {
                    return bad(format!("branch offset {imm} out of range"));
                }
                let v = imm as u32;
                (((v >> 12) & 1) << 31)
                    | (((v >> 5) & 0x3f) << 25)
                    | (rs2 << 20)
                    | (rs1 << 15)
                    | ((f.funct3 as u32) << 12)
                    | (((v >> 1) & 0xf) << 8)
                    | (((v >> 11) & 1) << 7)
                    | f.opcode
            }
            Format::U => {
                if imm as u32 & 0xfff != 0 {
                    return bad(format!("U-format immediate {imm:#x} has low bits set"));
                }
                (imm as u32) | (rd << 7) | f.opcode
            }
            Format::J => {
                if !(-(1 << 20)..(1 << 20)).contains(&imm) || imm & 1 != 0 {
                    return bad(format!("jump offset {imm} out of range"));
                }
                let v = imm as u32;
                (((v >> 20) & 1) << 31)
                    | (((v >> 1) & 0x3ff) << 21)
                    | (((v >> 11) & 1) << 20)
                    | (((v >> 12) & 0xff) << 12)
                    | (rd << 7)
                    | f.opcode
            }
        },
    };
    Ok(word)
}

/// Register ABI names in index order.
pub const REG_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
    "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5", "t6",
];

/// Parse a register name: `x0`..`x31` or an ABI name (`fp` aliases `s0`).
pub fn parse_reg(name: &str) -> Option<u8> {
    if let Some(num) = name.strip_prefix('x') {
        let n: u8 = num.parse().ok()?;
        return if n < 32 { Some(n) } else { None };
    }
    if name == "fp" {
        return Some(8);
    }
    REG_NAMES.iter().position(|&r| r == name).map(|i| i as u8)
}

pub fn mnemonic(op: Opcode) -> &'static str {
    use Opcode::*;
    match op {
        Lui => "lui",
        Auipc => "auipc",
        Jal => "jal",
        Jalr => "jalr",
        Beq => "beq",
        Bne => "bne",
        Blt => "blt",
        Bge => "bge",
        Bltu => "bltu",
        Bgeu => "bgeu",
        Lb => "lb",
        Lh => "lh",
        Lw => "lw",
        Lbu => "lbu",
        Lhu => "lhu",
        Sb => "sb",
        Sh => "sh",
        Sw => "sw",
        Addi => "addi",
        Slti => "slti",
        Sltiu => "sltiu",
        Xori => "xori",
        Ori => "ori",
        Andi => "andi",
        Slli => "slli",
        Srli => "srli",
        Srai => "srai",
        Add => "add",
        Sub => "sub",
        Sll => "sll",
        Slt => "slt",
        Sltu => "sltu",
        Xor => "xor",
        Srl => "srl",
        Sra => "sra",
        Or => "or",
        And => "and",
        Mul => "mul",
        Mulh => "mulh",
        Mulhsu => "mulhsu",
        Mulhu => "mulhu",
        Div => "div",
        Divu => "divu",
        Rem => "rem",
        Remu => "remu",
        Fence => "fence",
        FenceI => "fence.i",
        Ecall => "ecall",
        Ebreak => "ebreak",
        Csrrw => "csrrw",
        Csrrs => "csrrs",
        Csrrc => "csrrc",
        Csrrwi => "csrrwi",
        Csrrsi => "csrrsi",
        Csrrci => "csrrci",
        Tmc => "tmc",
        Wspawn => "wspawn",
        Split => "split",
        Join => "join",
        Bar => "bar",
    }
}
