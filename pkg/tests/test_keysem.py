import pytest

from helpers import LOOP_SOURCE, function

from keysim.cfg import build_cfg
from keysim.errors import TraversalError
from keysim.expr import BinOp, Mem, Num, Var
from keysim.keysem import KeyExpr, KeyKind, classify, key_expressions, translate
from keysim.objdump import parse_objdump
from keysim.symexec import TraversalRecord, traverse


def keys_of(source: str) -> list[str]:
    fn = function(source)
    record = traverse(fn, build_cfg(fn))
    return [f"{address:#x}: {expr}" for address, expr in key_expressions(fn, record)]


@pytest.mark.parametrize(
    ("text", "kind"),
    [
        ("call puts", KeyKind.CALL),
        ("call rax", KeyKind.CALL),
        ("cmp eax, 3", KeyKind.COMPARE),
        ("test edi, edi", KeyKind.COMPARE),
        ("jmp rax", KeyKind.BRANCH),
        ("jmp qword ptr [rax*8+0x402000]", KeyKind.BRANCH),
        ("mov dword ptr [rdi], eax", KeyKind.STORE),
        ("add qword ptr [rbp-0x8], 1", KeyKind.STORE),
        ("jmp 0x1000", None),
        ("mov eax, dword ptr [rdi]", None),
        ("push rbx", None),
        ("lea rax, [rdi+0x8]", None),
    ],
)
def test_classify(text, kind):
    assert classify(function(text).instructions[0]) is kind


def test_display_grammar():
    assert str(KeyExpr(KeyKind.CALL, (Num(3), BinOp("+", Var(0), Num(4))), callee="")) == "RET_INDIRECT(3, VAR0+4)"
    assert str(KeyExpr(KeyKind.CALL, (), callee="memcpy")) == "RET_memcpy()"
    assert str(KeyExpr(KeyKind.COMPARE, (Num(4), Mem(BinOp("+", Var(1), Num(18)))))) == "4 cmp [VAR1+18]"
    assert str(KeyExpr(KeyKind.BRANCH, (Mem(Var(2)),))) == "branch [VAR2]"
    assert str(KeyExpr(KeyKind.STORE, (BinOp("+", Var(2), Num(18)), Num(3)))) == "[VAR2+18] = 3"


def test_loop_function_keys():
    assert keys_of(LOOP_SOURCE) == [
        "0x1008: ITER(VAR0) cmp 3",
        "0x1010: [VAR1+0x8] = 3",
        "0x1020: RET_report(ITER(VAR0))",
    ]


def test_call_with_string_argument_and_indirect_target():
    keys = keys_of(
        """
        mov edi, 0x402004 ; "hello"
        call puts
        mov rax, qword ptr [rbx+0x10]
        mov rdi, rax
        call rax
        ret
        """
    )
    assert keys == ['0x1004: RET_puts("hello")', "0x1010: RET_INDIRECT([VAR7+0x10])"]


def test_indirect_branch_through_a_jump_table():
    keys = keys_of("mov rax, qword ptr [rdi*8+0x402000]\njmp rax")
    assert keys == ["0x1004: branch [VAR0*8+0x402000]"]


def test_stores_record_address_and_value():
    keys = keys_of("mov eax, esi\nadd eax, 10\nimul eax, eax, 3\nmov dword ptr [rdx+0x12], eax\nret")
    assert keys == ["0x100c: [VAR2+0x12] = VAR1*3+30"]


def test_translate_without_record_fails():
    instr = function("cmp eax, 1").instructions[0]
    with pytest.raises(TraversalError):
        translate(instr, KeyKind.COMPARE, TraversalRecord())


def test_keys_skip_unreached_instructions():
    assert keys_of("ret\ncall dead") == []


def test_compare_without_parsed_operands_is_not_a_key():
    text = "0000000000401000 <f>:\n  401000:\t0f 2e c1             \tucomiss xmm0,xmm1\n  401003:\t66 0f 3a 63 c1 00    \tcmp xmm0,xmm1\n  401009:\tc3                   \tret\n"
    fn = parse_objdump(text).functions[0]
    compare = fn.instructions[1]
    assert compare.unsupported and compare.operands == ()
    assert classify(compare) is None

    record = traverse(fn, build_cfg(fn))
    assert key_expressions(fn, record) == []
