//! Disassembler for flat binary images.
//!
//! Every decodable word renders as an instruction with ABI register names;
//! anything else falls back to a `.word` directive, so
//! `assemble(disassemble(image))` reproduces the image byte for byte.
//! Branch and jump targets print as signed PC-relative offsets, which is the
//! form the assembler accepts for numeric targets.

use super::{decode, mnemonic, DecodedInstr, Opcode, REG_NAMES};

fn r(i: u8) -> &'static str {
    REG_NAMES[i as usize]
}

/// Render one decoded instruction as assembly text.
pub fn format_instr(i: &DecodedInstr) -> String {
    use Opcode::*;
    let m = mnemonic(i.op);
    match i.op {
        Lui | Auipc => format!("{m} {}, 0x{:x}", r(i.rd), (i.imm as u32) >> 12),
        Jal => format!("{m} {}, {}", r(i.rd), i.imm),
        Jalr => format!("{m} {}, {}, {}", r(i.rd), r(i.rs1), i.imm),
        Beq | Bne | Blt | Bge | Bltu | Bgeu => {
            format!("{m} {}, {}, {}", r(i.rs1), r(i.rs2), i.imm)
        }
        Lb | Lh | Lw | Lbu | Lhu => format!("{m} {}, {}({})", r(i.rd), i.imm, r(i.rs1)),
        Sb | Sh | Sw => format!("{m} {}, {}({})", r(i.rs2), i.imm, r(i.rs1)),
        Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => {
            format!("{m} {}, {}, {}", r(i.rd), r(i.rs1), i.imm)
        }
        Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And | Mul | Mulh | Mulhsu
        | Mulhu | Div | Divu | Rem | Remu => {
            format!("{m} {}, {}, {}", r(i.rd), r(i.rs1), r(i.rs2))
        }
        Fence | FenceI | Ecall | Ebreak => m.to_string(),
        Csrrw | Csrrs | Csrrc => format!("{m} {}, 0x{:x}, {}", r(i.rd), i.imm, r(i.rs1)),
        Csrrwi | Csrrsi | Csrrci => format!("{m} {}, 0x{:x}, {}", r(i.rd), i.imm, i.rs1),
        Tmc => format!("{m} {}", r(i.rs1)),
        Wspawn => format!("{m} {}, {}", r(i.rs1), r(i.rs2)),
        Split => format!("{m} {}", r(i.rs1)),
        Join => m.to_string(),
        Bar => format!("{m} {}, {}", r(i.rs1), r(i.rs2)),
    }
}

/// Disassemble one word, falling back to `.word` for undecodable values.
pub fn disassemble_word(word: u32) -> String {
    match decode(word) {
        Ok(i) => format_instr(&i),
        Err(_) => format!(".word 0x{word:08x}"),
    }
}

/// One line of a disassembly listing.
#[derive(Debug, Clone)]
pub struct ListingLine {
    pub addr: u32,
    pub word: u32,
    pub text: String,
}

/// Disassemble a flat image. The image length must be a multiple of 4.
pub fn disassemble(image: &[u8], origin: u32) -> Vec<ListingLine> {
    assert!(image.len() % 4 == 0, "image length must be a multiple of 4");
    image
        .chunks_exact(4)
        .enumerate()
        .map(|(n, chunk)| {
            let word = u32::from_le_bytes(chunk.try_into().unwrap());
            ListingLine {
                addr: origin + 4 * n as u32,
                word,
                text: disassemble_word(word),
            }
        })
        .collect()
}

/// Plain-text program suitable for re-assembly (statements only).
pub fn to_source(image: &[u8], origin: u32) -> String {
    let mut out = String::new();
    for line in disassemble(image, origin) {
        out.push_str(&line.text);
        out.push('\n');
    }
    out
}

/// Annotated listing with addresses and raw words, for human consumption.
pub fn to_listing(image: &[u8], origin: u32) -> String {
    let mut out = String::new();
    for line in disassemble(image, origin) {
        out.push_str(&format!("{:08x}:  {:08x}  {}\n", line.addr, line.word, line.text));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::asm::assemble;

    #[test]
    fn published_words_render_as_paper_mnemonics() {
        assert_eq!(disassemble_word(0x0005_206b), "split a0");
        assert_eq!(disassemble_word(0x0000_306b), "join");
    }

    #[test]
    fn unknown_word_falls_back() {
        assert_eq!(disassemble_word(0xffff_ffff), ".word 0xffffffff");
        assert_eq!(disassemble_word(0x0000_0000), ".word 0x00000000");
        // 0xdeadbeef is not garbage: its low bits land on the jal opcode
        assert_eq!(disassemble_word(0xdead_beef), "jal t4, -150038");
    }

    #[test]
    fn assemble_disassemble_round_trip() {
        let src = "\
_start:
  li a0, 3
  li a1, 0x12345678
  add a2, a0, a1
  lw a3, 4(a2)
  sw a3, -8(sp)
  beq a0, a1, _start
  wspawn a0, a1
  tmc a0
  split a1
  join
  bar a0, a1
  csrrs t0, 0xcc0, zero
  ecall
.word 0xdeadbeef
";
        let first = assemble(src, 0x200).unwrap();
        let text = to_source(&first.image, 0x200);
        let second = assemble(&text, 0x200).unwrap();
        assert_eq!(first.image, second.image);
    }
}
