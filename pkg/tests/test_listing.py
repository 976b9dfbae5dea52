import json

import pytest

from helpers import LOOP_SOURCE, asm, listing_text, program

from keysim.errors import ListingParseError, OperandSyntaxError
from keysim.listing import parse_listing, serialize_listing


def test_parse_listing_builds_program():
    parsed = program(asm("count", LOOP_SOURCE), binary="loop.bin")

    assert parsed.binary == "loop.bin"
    assert len(parsed) == 1
    function = parsed.functions[0]
    assert function.name == "count"
    assert function.entry == 0x1000
    assert [instr.mnemonic for instr in function.instructions][:4] == ["mov", "mov", "cmp", "jge"]
    jge = function.instructions[3]
    assert jge.operands[0].target == 0x101C
    assert jge.operands[0].symbol == ".L4"
    assert function.instructions[-2].raw_text == "call report"


def test_instructions_are_sorted_by_address():
    text = json.dumps(
        {
            "functions": [
                {
                    "entry": 0,
                    "instructions": [
                        {"addr": 4, "mnemonic": "ret"},
                        {"addr": 0, "mnemonic": "MOV", "ops": ["eax", "1"]},
                    ],
                }
            ]
        }
    )
    function = parse_listing(text).functions[0]
    assert [instr.address for instr in function.instructions] == [0, 4]
    assert function.instructions[0].mnemonic == "mov"
    assert function.name is None
    assert function.label == "sub_0"


def test_resolved_strings_and_unknown_keys_survive():
    payload = asm("greet", 'mov edi, 0x402004 ; "hello"\ncall puts\nret')
    payload["instructions"][0]["bytes"] = "bf 04 20 40 00"
    function = parse_listing(listing_text(payload)).functions[0]
    assert function.instructions[0].resolved_string == "hello"


def test_duplicate_address_is_rejected():
    text = json.dumps(
        {
            "functions": [
                {
                    "name": "dup",
                    "entry": 0,
                    "instructions": [{"addr": 0, "mnemonic": "nop"}, {"addr": 0, "mnemonic": "ret"}],
                }
            ]
        }
    )
    with pytest.raises(ListingParseError) as excinfo:
        parse_listing(text)
    assert excinfo.value.function == "dup"
    assert excinfo.value.address == 0


def test_entry_must_be_first_instruction():
    text = json.dumps({"functions": [{"name": "f", "entry": 8, "instructions": [{"addr": 0, "mnemonic": "ret"}]}]})
    with pytest.raises(ListingParseError, match="entry"):
        parse_listing(text)


def test_schema_violation_names_function_and_address():
    text = json.dumps({"functions": [{"name": "main", "entry": 16, "instructions": [{"addr": 16}]}]})
    with pytest.raises(ListingParseError) as excinfo:
        parse_listing(text)
    assert excinfo.value.function == "main"
    assert excinfo.value.address == 16
    assert "mnemonic" in str(excinfo.value)


def test_invalid_json_is_a_parse_error():
    with pytest.raises(ListingParseError):
        parse_listing("{not json")


def test_bad_operand_reports_its_location():
    text = json.dumps(
        {"functions": [{"name": "f", "entry": 0, "instructions": [{"addr": 0, "mnemonic": "mov", "ops": ["[rax*3]", "1"]}]}]}
    )
    with pytest.raises(OperandSyntaxError) as excinfo:
        parse_listing(text)
    assert excinfo.value.function == "f"
    assert excinfo.value.address == 0


def test_serialized_listing_parses_to_the_same_program():
    original = program(
        asm("count", LOOP_SOURCE),
        asm(None, 'lea rdi, [rip+0xebf] ; "fmt"\nmov qword ptr fs:[0x28], rax\nret', entry=0x2000),
        binary="pair.bin",
    )
    text = serialize_listing(original)
    assert parse_listing(text) == original
    assert '"string": "fmt"' in text
