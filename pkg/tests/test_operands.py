import pytest

from keysim.errors import OperandSyntaxError
from keysim.models import OperandKind
from keysim.operands import format_operand, parse_number, parse_operand


def test_registers_normalize_to_their_64bit_family():
    op = parse_operand("eax")
    assert op.kind is OperandKind.REGISTER
    assert (op.register, op.width) == ("rax", 32)
    assert parse_operand("r9d").register == "r9"
    assert parse_operand("dil").width == 8
    assert format_operand(parse_operand("r10w")) == "r10w"


def test_memory_operand_fields():
    op = parse_operand("qword ptr [rbp-0x48]")
    assert op.is_memory
    assert (op.base, op.index, op.displacement, op.width) == ("rbp", None, -0x48, 64)

    scaled = parse_operand("DWORD PTR [rdi+rax*8+0x10]")
    assert (scaled.base, scaled.index, scaled.scale, scaled.displacement) == ("rdi", "rax", 8, 0x10)
    assert scaled.width == 32


def test_segment_and_rip_relative_addresses():
    canary = parse_operand("fs:0x28")
    assert canary.segment == "fs"
    assert canary.displacement == 0x28
    assert canary.base is None

    rip = parse_operand("[rip+0xebf]")
    assert rip.base == "rip"
    assert format_operand(rip) == "[rip+0xebf]"


def test_branch_operands_become_labels():
    named = parse_operand("401136 <main>", mnemonic="call")
    assert named.kind is OperandKind.LABEL
    assert (named.target, named.symbol) == (0x401136, "main")

    bare = parse_operand("0x401000", mnemonic="jmp")
    assert bare.is_label and bare.target == 0x401000

    symbol = parse_operand("printf", mnemonic="call")
    assert symbol.is_label and symbol.target is None and symbol.symbol == "printf"

    # the same text is an immediate outside control transfers
    assert parse_operand("0x401000", mnemonic="mov").is_immediate


def test_immediates_are_signed_64bit():
    assert parse_operand("-0x8").value == -8
    assert parse_operand("0xffffffffffffffff").value == -1
    assert parse_number("42") == 42
    assert format_operand(parse_operand("-0x8")) == "-0x8"


@pytest.mark.parametrize(
    "text",
    ["[rax*3]", "[rax+rbx+rcx]", "[rax", "ymm0", "", "[-rax]"],
)
def test_malformed_operands_raise(text):
    with pytest.raises(OperandSyntaxError):
        parse_operand(text, mnemonic="mov")


def test_formatted_memory_operand_parses_back():
    text = "dword ptr fs:[rax+rcx*4-0x10]"
    op = parse_operand(text)
    assert format_operand(op) == text
    assert parse_operand(format_operand(op)) == op
