import pytest

from helpers import LOOP_SOURCE, asm, function, program

from keysim.analysis import AnalysisParams, analyze_function, analyze_program, select_function
from keysim.diffing import exact_jaccard, similarity
from keysim.errors import FunctionNotFoundError

# The same source compiled without and with optimization, plus an unrelated loop.
UNOPTIMIZED = """
    push rbp
    mov rbp, rsp
    mov dword ptr [rbp-0x14], edi
    cmp dword ptr [rbp-0x14], 5
    jle .L2
    mov eax, 1
    jmp .L3
.L2:
    mov eax, 0
.L3:
    mov eax, dword ptr [rbp-0x14]
    mov esi, eax
    mov edi, 0x402004 ; "%d"
    call printf
    pop rbp
    ret
"""

OPTIMIZED = """
    push rbx
    mov ebx, edi
    mov esi, edi
    mov edi, 0x402004 ; "%d"
    call printf
    cmp ebx, 5
    sbb eax, eax
    add eax, 1
    pop rbx
    ret
"""

DECOY = """
    xor eax, eax
.L1:
    mov rdi, qword ptr [rbx+rax*8]
    call free
    add rax, 1
    cmp rax, 64
    jne .L1
    ret
"""


def test_pipeline_stages_line_up():
    analysis = analyze_function(function(LOOP_SOURCE))
    assert len(analysis.cfg.blocks) == 4
    assert [address for address, _ in analysis.keys] == [0x1008, 0x1010, 0x1020]
    assert [node.address for node in analysis.serialized] == [0x1008, 0x1010, 0x1020]
    assert analysis.tokens[0] == "WHILE"
    assert analysis.signature.k == 128
    assert analysis.diagnostics == ()


def test_parameters_reach_the_signature():
    analysis = analyze_function(function(LOOP_SOURCE), AnalysisParams(k=16, seed=5, w=2))
    assert analysis.signature.params == (16, 5, 2)


def test_compilations_of_one_function_are_closer_than_a_decoy():
    unoptimized = analyze_function(function(UNOPTIMIZED))
    optimized = analyze_function(function(OPTIMIZED))
    decoy = analyze_function(function(DECOY))

    shared = {"cmp VAR0", "cmp 5", 'RET_("%d")', "RET_(VAR0)"}
    assert shared <= set(unoptimized.tokens) & set(optimized.tokens)
    assert exact_jaccard(optimized.tokens, decoy.tokens) == 0.0

    assert similarity(optimized.signature, unoptimized.signature) > similarity(optimized.signature, decoy.signature)
    assert similarity(optimized.signature, unoptimized.signature) >= 0.3


def test_program_analysis_filters_and_counts():
    prog = program(
        asm("count", LOOP_SOURCE, entry=0x1000),
        asm("leaf", "mov eax, 1\nret", entry=0x2000),
        asm("cpu_check", "cpuid\ncmp eax, 7\nret", entry=0x3000),
    )

    result = analyze_program(prog, AnalysisParams(min_blocks=4))
    assert [item.name for item in result.analyzed] == ["count"]
    assert result.stats()["filtered_functions"] == 2

    everything = analyze_program(prog, AnalysisParams(min_blocks=1))
    assert [item.entry for item in everything.analyzed] == [0x1000, 0x2000, 0x3000]
    stats = everything.stats()
    assert stats["total_functions"] == 3
    assert stats["eligible_functions"] == 3
    assert stats["empty_graphs"] == 1
    assert stats["diagnostics"] == {"unsupported": 1}
    assert stats["skipped"] == []


def test_worker_processes_give_the_same_signatures():
    prog = program(
        asm("count", LOOP_SOURCE, entry=0x1000),
        asm("check", "cmp edi, 7\nret", entry=0x3000),
    )
    params = AnalysisParams(min_blocks=1)
    assert analyze_program(prog, params, workers=2).signatures == analyze_program(prog, params).signatures


def test_select_function():
    prog = program(asm("count", LOOP_SOURCE, entry=0x1000), asm(None, "ret", entry=0x2000))
    assert select_function(prog, "count").entry == 0x1000
    assert select_function(prog, "sub_2000").entry == 0x2000
    assert select_function(prog, "8192").entry == 0x2000
    with pytest.raises(FunctionNotFoundError) as excinfo:
        select_function(prog, "main")
    assert excinfo.value.available == ["count (0x1000)", "sub_2000 (0x2000)"]
