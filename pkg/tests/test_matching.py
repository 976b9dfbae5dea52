import json
import random

import pytest

from keysim.diffing import FunctionSignature, signature, similarity
from keysim.errors import EmptyProgramError, SignatureMismatchError
from keysim.matching import precision_at_1, rank_all, report_csv, report_json


def sig(name, tokens, entry, **params):
    return FunctionSignature(entry=entry, name=name, signature=signature(tokens, **params))


def corpus(count: int = 10) -> list[FunctionSignature]:
    return [sig(f"f{index}", [f"cmp {index}", f"RET_({index})", "cmp VAR0"], 0x1000 + 0x100 * index) for index in range(count)]


def test_self_comparison_is_perfect():
    functions = corpus()
    report = rank_all(functions, functions)

    assert report.summary.precision_at_1 == 1.0
    assert report.summary.eligible == 10
    for ranking in report.rankings:
        top = ranking.candidates[0]
        assert top.score == 1.0
        assert top.target.name == ranking.query.name
        assert ranking.correct_rank == 1


def test_candidate_list_is_capped_by_target_size_and_top_n():
    targets = corpus(3)
    report = rank_all([targets[0]], targets)
    assert len(report.rankings[0].candidates) == 3
    assert len(rank_all([targets[0]], corpus(12), top_n=5).rankings[0].candidates) == 5


def test_target_sharing_every_token_ranks_first():
    query = sig("q", ["a", "b", "c", "d"], 0x10)
    targets = [
        sig("x", ["e", "f"], 0x100),
        sig("q", ["a", "b", "c", "d"], 0x300),
        sig("y", ["g", "h", "i"], 0x200),
    ]
    ranking = rank_all([query], targets).rankings[0]
    assert ranking.candidates[0].target.entry == 0x300
    assert ranking.candidates[0].score == pytest.approx(1.0)
    assert [c.score for c in ranking.candidates] == sorted((c.score for c in ranking.candidates), reverse=True)


def test_ties_break_by_target_entry():
    query = sig("b", ["same"], 0x10)
    targets = [sig("b", ["same"], 0x200), sig("a", ["same"], 0x100)]
    report = rank_all([query], targets)
    assert [c.target.entry for c in report.rankings[0].candidates] == [0x100, 0x200]
    # the correct function is second under the tie-break
    assert report.rankings[0].correct_rank == 2
    assert report.summary.precision_at_1 == 0.0


def test_precision_ratio():
    targets = [sig(name, [name, f"{name}2"], 0x100 * (index + 1)) for index, name in enumerate("ABCD")]
    queries = [
        sig("A", ["A", "A2"], 1),
        sig("B", ["B", "B2"], 2),
        sig("C", ["C", "C2"], 3),
        sig("D", ["A", "A2"], 4),
    ]
    assert precision_at_1(rank_all(queries, targets)) == 0.75

    swapped = [sig("A", ["B", "B2"], 1), sig("B", ["A", "A2"], 2)]
    assert precision_at_1(rank_all(swapped, targets)) == 0.0


def test_only_queries_named_in_the_target_are_eligible():
    targets = corpus(3)
    queries = [sig("missing", ["cmp 0"], 1), sig(None, ["cmp 1"], 2)]
    report = rank_all(queries, targets)
    assert report.summary.eligible == 0
    assert report.summary.precision_at_1 is None
    assert report.summary.recall_at_top_n is None
    assert report.rankings[1].correct_rank is None
    assert precision_at_1(report, {"missing"}) == 0.0


def test_duplicate_target_names_count_when_any_is_first():
    query = sig("init", ["x", "y"], 1)
    targets = [sig("init", ["x", "y"], 0x100), sig("init", ["z"], 0x200)]
    assert precision_at_1(rank_all([query], targets)) == 1.0


def test_scores_match_pairwise_similarity_and_are_symmetric():
    rng = random.Random(8)
    functions = [sig(f"f{i}", rng.sample([f"t{n}" for n in range(40)], rng.randint(1, 20)), i) for i in range(8)]
    report = rank_all(functions, functions, top_n=8)
    for ranking in report.rankings:
        for candidate in ranking.candidates:
            expected = similarity(ranking.query.signature, candidate.target.signature)
            assert candidate.score == pytest.approx(expected)
            assert expected == similarity(candidate.target.signature, ranking.query.signature)


def test_rankings_do_not_depend_on_target_order():
    functions = corpus(6)
    shuffled = list(functions)
    random.Random(4).shuffle(shuffled)
    first = rank_all(functions, functions)
    second = rank_all(functions, shuffled)
    assert first.rankings == second.rankings


def test_empty_signatures_and_skipped_queries():
    empty = sig("e", [], 0x10)
    targets = [sig("e", [], 0x100), sig("t", ["x"], 0x200)]
    report = rank_all([None, empty], targets, skipped=["sub_10"])
    assert len(report.rankings) == 1
    assert report.rankings[0].candidates[0].score == 1.0
    assert report.rankings[0].candidates[1].score == 0.0
    assert report.summary.query_functions == 2
    assert report.summary.skipped == ("sub_10",)


def test_invalid_inputs():
    functions = corpus(2)
    with pytest.raises(EmptyProgramError):
        rank_all(functions, [])
    with pytest.raises(ValueError):
        rank_all(functions, functions, top_n=0)
    with pytest.raises(SignatureMismatchError):
        rank_all([sig("f0", ["a"], 1, k=64)], functions)


def test_csv_report():
    functions = corpus(2)
    text = report_csv(rank_all(functions, functions), version="0.1.0", config={"minhash_k": 128, "top_n": 10})
    lines = text.splitlines()
    assert lines[0] == "# keysim 0.1.0 minhash_k=128 top_n=10"
    assert lines[1] == "query,target,score,rank,correct"
    assert lines[2] == "f0,f0,1.000000,1,true"
    assert len(lines) == 6
    assert lines[3].startswith("f0,f1,") and lines[3].endswith(",2,false")


def test_json_report_embeds_configuration():
    functions = corpus(2)
    text = report_json(
        rank_all(functions, functions),
        version="0.1.0",
        config={"minhash_k": 128},
        binaries={"query": "a", "target": "a"},
    )
    document = json.loads(text)
    assert document["tool"] == "keysim"
    assert document["config"] == {"minhash_k": 128}
    assert document["summary"]["precision_at_1"] == 1.0
    assert document["rankings"][0]["candidates"][0] == {
        "rank": 1,
        "name": "f0",
        "entry": 0x1000,
        "score": 1.0,
        "correct": True,
    }
